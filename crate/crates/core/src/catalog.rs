//! Closed-form p-minimal surfaces over the plane with `F = (−y, x)` and
//! `H = 0`, and the explicit minimizer for the boundary curve
//! `ρ(θ) = cos²θ + cos θ sin θ` on the unit disc.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::geometry::Surface;
use crate::grid::DomainSpec;
use crate::quadrature::{integrate, integrate_disc, QuadResult};

pub type Eval2 = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type Grad2 = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
pub type Region2 = Arc<dyn Fn([f64; 2]) -> bool + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceKind {
    /// `∇u + F` vanishes along the curve.
    SingularCurve,
    /// `u` is not `C¹` across the curve but `∇u + F ≠ 0` on both sides.
    Kink,
}

/// A polyline `Γ` across which `u` may fail to be smooth. The `+` side is to
/// the left of the direction of travel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Interface {
    pub label: String,
    pub kind: InterfaceKind,
    pub points: Vec<[f64; 2]>,
}

impl Interface {
    pub fn segment(label: &str, kind: InterfaceKind, a: [f64; 2], b: [f64; 2]) -> Self {
        Interface {
            label: label.to_string(),
            kind,
            points: vec![a, b],
        }
    }

    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }
}

/// One smooth region of a piecewise surface.
#[derive(Clone)]
pub struct Piece {
    pub label: String,
    pub formula: String,
    pub contains: Region2,
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Piece")
            .field("label", &self.label)
            .field("formula", &self.formula)
            .finish()
    }
}

/// Graph `z = u(x, y)` given by formulas, with its interfaces declared.
#[derive(Clone)]
pub struct ClosedFormSurface {
    pub name: String,
    value: Eval2,
    gradient: Grad2,
    pub pieces: Vec<Piece>,
    pub interfaces: Vec<Interface>,
    pub field: VectorFieldSpec,
    /// Domain the surface is usually studied on.
    pub domain: DomainSpec,
}

impl fmt::Debug for ClosedFormSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormSurface")
            .field("name", &self.name)
            .field("pieces", &self.pieces)
            .field("interfaces", &self.interfaces)
            .finish()
    }
}

impl ClosedFormSurface {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        (self.value)(p)
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        (self.gradient)(p)
    }

    /// `∇u + F`.
    pub fn augmented_gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let g = self.gradient(p);
        [g[0] - p[1], g[1] + p[0]]
    }

    pub fn piece_at(&self, p: [f64; 2]) -> Option<usize> {
        self.pieces.iter().position(|q| (q.contains)(p))
    }

    /// Largest mismatch of `u` between points at distance `offset` on either
    /// side of each interface, over `samples` points per interface.
    pub fn continuity_defect(&self, samples: usize, offset: f64) -> f64 {
        let mut worst = 0.0f64;
        for itf in &self.interfaces {
            for w in itf.points.windows(2) {
                let (a, b) = (w[0], w[1]);
                let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                if len == 0.0 {
                    continue;
                }
                let nu = [-(b[1] - a[1]) / len, (b[0] - a[0]) / len];
                for k in 0..samples {
                    let s = (k as f64 + 0.5) / samples as f64;
                    let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let up = self.value([p[0] + offset * nu[0], p[1] + offset * nu[1]]);
                    let um = self.value([p[0] - offset * nu[0], p[1] - offset * nu[1]]);
                    worst = worst.max((up - um).abs());
                }
            }
        }
        worst
    }

    /// Samples `u` at the nodes of a layout.
    pub fn sample_grid(&self, layout: Arc<crate::grid::GridLayout>) -> Result<crate::grid::ScalarFieldGrid> {
        crate::grid::ScalarFieldGrid::sample(layout, |x| self.value([x[0], x[1]]))
    }

    /// `∫ |∇u + F|` over a disc centered at the origin, by adaptive
    /// quadrature in polar coordinates. Kinks of the integrand along rays
    /// and circles are passed in as break points.
    pub fn disc_p_area(&self, radius: f64, theta_breaks: &[f64], abs_tol: f64) -> QuadResult {
        let lines = self.interfaces.clone();
        integrate_disc(
            |x, y| {
                let q = self.augmented_gradient([x, y]);
                q[0].hypot(q[1])
            },
            radius,
            theta_breaks,
            move |th| ray_crossings(&lines, th, radius),
            abs_tol,
        )
    }
}

impl Surface for ClosedFormSurface {
    fn value(&self, p: [f64; 2]) -> f64 {
        ClosedFormSurface::value(self, p)
    }
    fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        ClosedFormSurface::gradient(self, p)
    }
}

/// Radii in `(0, radius)` where the ray at angle `th` from the origin meets
/// an interface segment.
fn ray_crossings(interfaces: &[Interface], th: f64, radius: f64) -> Vec<f64> {
    let d = [th.cos(), th.sin()];
    let mut out = Vec::new();
    for itf in interfaces {
        for w in itf.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let e = [b[0] - a[0], b[1] - a[1]];
            // r d = a + s e
            let det = d[0] * (-e[1]) - d[1] * (-e[0]);
            if det.abs() < 1e-14 {
                continue;
            }
            let r = (a[0] * (-e[1]) - a[1] * (-e[0])) / det;
            let s = (d[0] * a[1] - d[1] * a[0]) / det;
            if r > 0.0 && r < radius && (-1e-12..=1.0 + 1e-12).contains(&s) {
                out.push(r);
            }
        }
    }
    out
}

fn contact() -> VectorFieldSpec {
    VectorFieldSpec::standard_contact(2).expect("planar contact field")
}

fn far_line(label: &str, kind: InterfaceKind, a: [f64; 2], b: [f64; 2]) -> Interface {
    Interface::segment(label, kind, a, b)
}

const FAR: f64 = 4.0;

/// `u = −xy + y² cot ϑ`, `0 < ϑ < π/2`, singular along `{y = 0}`.
pub fn example_7_1a(theta: f64) -> Result<ClosedFormSurface> {
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Err(Error::Argument(format!("ϑ must lie in (0, π/2), got {theta}")));
    }
    let k = 1.0 / theta.tan();
    Ok(ClosedFormSurface {
        name: format!("7.1a:theta={theta}"),
        value: Arc::new(move |p| -p[0] * p[1] + p[1] * p[1] * k),
        gradient: Arc::new(move |p| [-p[1], -p[0] + 2.0 * p[1] * k]),
        pieces: vec![Piece {
            label: "plane".into(),
            formula: "-xy + y^2 cot(theta)".into(),
            contains: Arc::new(|_| true),
        }],
        interfaces: vec![far_line(
            "y=0",
            InterfaceKind::SingularCurve,
            [-FAR, 0.0],
            [FAR, 0.0],
        )],
        field: contact(),
        domain: DomainSpec::unit_disc(),
    })
}

fn check_7_1b_angle(a: f64, what: &str) -> Result<()> {
    if !(a > 0.0 && a < 2.0 * PI) || (a - PI).abs() < 1e-12 {
        return Err(Error::Argument(format!("{what} must lie in (0, 2π) and differ from π, got {a}")));
    }
    Ok(())
}

/// `u = −xy + y² cot ϑ` for `y > 0`, `−xy + y² cot η` for `y < 0`.
pub fn example_7_1b(theta: f64, eta: f64) -> Result<ClosedFormSurface> {
    check_7_1b_angle(theta, "ϑ")?;
    check_7_1b_angle(eta, "η")?;
    let (kt, ke) = (1.0 / theta.tan(), 1.0 / eta.tan());
    let coef = move |y: f64| if y > 0.0 { kt } else if y < 0.0 { ke } else { 0.0 };
    Ok(ClosedFormSurface {
        name: format!("7.1b:theta={theta},eta={eta}"),
        value: Arc::new(move |p| -p[0] * p[1] + p[1] * p[1] * coef(p[1])),
        gradient: Arc::new(move |p| [-p[1], -p[0] + 2.0 * p[1] * coef(p[1])]),
        pieces: vec![
            Piece {
                label: "upper".into(),
                formula: "-xy + y^2 cot(theta)".into(),
                contains: Arc::new(|p| p[1] > 0.0),
            },
            Piece {
                label: "lower".into(),
                formula: "-xy + y^2 cot(eta)".into(),
                contains: Arc::new(|p| p[1] < 0.0),
            },
        ],
        interfaces: vec![far_line(
            "y=0",
            InterfaceKind::SingularCurve,
            [-FAR, 0.0],
            [FAR, 0.0],
        )],
        field: contact(),
        domain: DomainSpec::unit_disc(),
    })
}

/// `u = xy` for `y > 0`, `0` for `y ≤ 0`.
pub fn example_7_2() -> ClosedFormSurface {
    ClosedFormSurface {
        name: "7.2".into(),
        value: Arc::new(|p| if p[1] > 0.0 { p[0] * p[1] } else { 0.0 }),
        gradient: Arc::new(|p| if p[1] > 0.0 { [p[1], p[0]] } else { [0.0, 0.0] }),
        pieces: vec![
            Piece {
                label: "upper".into(),
                formula: "xy".into(),
                contains: Arc::new(|p| p[1] > 0.0),
            },
            Piece {
                label: "lower".into(),
                formula: "0".into(),
                contains: Arc::new(|p| p[1] < 0.0),
            },
        ],
        interfaces: vec![
            far_line("x=0,y>0", InterfaceKind::SingularCurve, [0.0, 0.0], [0.0, FAR]),
            // split at the origin, where the singular curve ends
            far_line("y=0,x<0", InterfaceKind::Kink, [-FAR, 0.0], [0.0, 0.0]),
            far_line("y=0,x>0", InterfaceKind::Kink, [0.0, 0.0], [FAR, 0.0]),
        ],
        field: contact(),
        domain: DomainSpec::centered_square(0.5).expect("valid square"),
    }
}

/// `u = x² + xy`.
pub fn pauls_u() -> ClosedFormSurface {
    ClosedFormSurface {
        name: "pauls-u".into(),
        value: Arc::new(|p| p[0] * p[0] + p[0] * p[1]),
        gradient: Arc::new(|p| [2.0 * p[0] + p[1], p[0]]),
        pieces: vec![Piece {
            label: "plane".into(),
            formula: "x^2 + xy".into(),
            contains: Arc::new(|_| true),
        }],
        interfaces: vec![far_line(
            "x=0",
            InterfaceKind::SingularCurve,
            [0.0, -FAR],
            [0.0, FAR],
        )],
        field: contact(),
        domain: DomainSpec::unit_disc(),
    }
}

/// `v = xy + 1 − y²`.
pub fn pauls_v() -> ClosedFormSurface {
    ClosedFormSurface {
        name: "pauls-v".into(),
        value: Arc::new(|p| p[0] * p[1] + 1.0 - p[1] * p[1]),
        gradient: Arc::new(|p| [p[1], p[0] - 2.0 * p[1]]),
        pieces: vec![Piece {
            label: "plane".into(),
            formula: "xy + 1 - y^2".into(),
            contains: Arc::new(|_| true),
        }],
        interfaces: vec![far_line(
            "x=y",
            InterfaceKind::SingularCurve,
            [-FAR, -FAR],
            [FAR, FAR],
        )],
        field: contact(),
        domain: DomainSpec::unit_disc(),
    }
}

/// `ρ(θ) = cos²θ + cos θ sin θ`.
pub fn boundary_rho(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c + c * s
}

/// `ρ′(θ) = cos 2θ − sin 2θ`.
pub fn boundary_rho_prime(theta: f64) -> f64 {
    let (s, c) = (2.0 * theta).sin_cos();
    c - s
}

/// Angle of the singular segment through the origin.
pub const THETA_PRIME: f64 = 3.0 * FRAC_PI_8;

/// The two boundary angles `θ₁ ∈ [5π/8, 9π/8]`, `θ₂ ∈ [−3π/8, π/8]` with
/// `cos(θ − 3π/8) = t/√2`.
pub fn theta_from_t(t: f64) -> Result<(f64, f64)> {
    if !(t.abs() <= 1.0) {
        return Err(Error::Argument(format!("t must lie in [−1, 1], got {t}")));
    }
    let a = (t * FRAC_1_SQRT_2).acos();
    Ok((THETA_PRIME + a, THETA_PRIME - a))
}

/// `δ(t)` from `tan δ = t√(1 − t²/2)/(1 − t²/√2)` and
/// `η(t) = π/2 + θ₂(t) − δ(t)`.
pub fn delta_eta(t: f64) -> Result<(f64, f64)> {
    let (_, th2) = theta_from_t(t)?;
    let delta = (t * (1.0 - 0.5 * t * t).sqrt()).atan2(1.0 - t * t * FRAC_1_SQRT_2);
    Ok((delta, FRAC_PI_2 + th2 - delta))
}

/// A lifted straight segment `(x, y, z)`.
pub type Segment3 = [[f64; 3]; 2];

/// One of the four circular caps not reached from the singular segment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Fan {
    /// Boundary arc `[lo, hi]`.
    pub arc: (f64, f64),
    /// The double root of `ρ(θ) − ρ(θ′) + sin(θ − θ′) = 0` in the arc.
    pub critical: f64,
}

/// Which family of Legendrian segments covers a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    /// On the segment from `t·(cos θ′, sin θ′)` to the boundary, on the side
    /// `upper` (toward `θ₁`) or not.
    Ruled { t: f64, upper: bool },
    Fan(usize),
}

/// The minimizer for boundary data `ρ` on the closed unit disc, built from
/// the singular segment `L` at angle `θ′`, the two ruled families reaching
/// from `L` to the boundary, and four fans of boundary-to-boundary chords.
#[derive(Clone, Debug, Serialize)]
pub struct MinimizerConstruction {
    pub theta_prime: f64,
    /// `ρ(θ′)`, the height of the lifted singular segment.
    pub gamma: f64,
    pub fans: [Fan; 4],
    /// Distance from the origin of the chords bounding the fans.
    pub chord_offset: f64,
}

// `1 − 1/√2`: in the frame along `L`, the segment from `(t, 0)` ends at
// `(t/√2, ±s(t))`, so `ξ = t − C t λ`.
const C: f64 = 1.0 - FRAC_1_SQRT_2;

fn s_of(t: f64) -> f64 {
    (1.0 - 0.5 * t * t).max(0.0).sqrt()
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Builds the minimizer on the branch `θ′ = 3π/8`.
pub fn construct_minimizer() -> Result<MinimizerConstruction> {
    construct_minimizer_on_branch(THETA_PRIME)
}

/// Builds the construction for a given `θ′` with `sin(2θ′ + π/4) = 0`.
/// Only `θ′ ≡ 3π/8 (mod π)` yields a graph; on the other branch the ruled
/// segments cross each other and a construction error is returned.
pub fn construct_minimizer_on_branch(theta_prime: f64) -> Result<MinimizerConstruction> {
    if (2.0 * theta_prime + FRAC_PI_4).sin().abs() > 1e-12 {
        return Err(Error::Argument(format!(
            "θ′ = {theta_prime} does not make ρ stationary along the segment"
        )));
    }
    // Boundary endpoints of the ruled segments from (t, 0) sit at relative
    // angle φ with cos φ = κ t/√2; κ = −1 on the other branch.
    let kappa = if (2.0 * theta_prime + FRAC_PI_4).cos() < 0.0 { 1.0 } else { -1.0 };
    let c_k = 1.0 - kappa * FRAC_1_SQRT_2;
    // Jacobian of (t, λ) ↦ (ξ, ζ) is s − λ c_κ / s.
    let n = 64;
    for i in 0..=n {
        let t = -1.0 + 2.0 * i as f64 / n as f64;
        let s = s_of(t);
        for j in 1..=n {
            let lam = j as f64 / n as f64;
            let det = s - lam * c_k / s;
            if det <= 0.0 {
                return Err(Error::Construction(format!(
                    "ruled segments from the singular segment at θ′ = {theta_prime:.6} fold over \
                     each other (Jacobian {det:.3e} at t = {t:.3}, λ = {lam:.3})"
                )));
            }
        }
    }
    let gamma = boundary_rho(theta_prime);
    let mut fans = [Fan {
        arc: (0.0, 0.0),
        critical: 0.0,
    }; 4];
    // uncovered arcs: θ′ ± π/4 on either side, and their antipodes
    let starts = [theta_prime - FRAC_PI_4, theta_prime, theta_prime + PI - FRAC_PI_4, theta_prime + PI];
    for (fan, &lo) in fans.iter_mut().zip(&starts) {
        let hi = lo + FRAC_PI_4;
        let g = |c: f64| boundary_rho_prime(c) + 1.0;
        let (ga, gb) = (g(lo + 1e-9), g(hi - 1e-9));
        if (ga > 0.0) == (gb > 0.0) {
            return Err(Error::Construction(format!("no critical chord in the fan [{lo:.6}, {hi:.6}]")));
        }
        fan.arc = (lo, hi);
        fan.critical = bisect(g, lo + 1e-9, hi - 1e-9);
    }
    let chord_offset = FRAC_PI_8.cos();
    Ok(MinimizerConstruction {
        theta_prime,
        gamma,
        fans,
        chord_offset,
    })
}

impl MinimizerConstruction {
    fn frame(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.theta_prime.sin_cos();
        ([c, s], [-s, c])
    }

    /// Partner angle of `θ′` inside a fan: the other end of the Legendrian
    /// chord, mirrored about the critical angle.
    pub fn fan_partner(&self, fan: usize, theta: f64) -> f64 {
        2.0 * self.fans[fan].critical - theta
    }

    /// Fan containing `p`, if any. Fans are the caps beyond the chords at
    /// distance `cos(π/8)` from the origin facing each critical angle.
    fn fan_of(&self, p: [f64; 2]) -> Option<usize> {
        self.fans.iter().position(|f| {
            let (s, c) = f.critical.sin_cos();
            p[0] * c + p[1] * s > self.chord_offset
        })
    }

    pub fn region(&self, p: [f64; 2]) -> Region {
        if let Some(k) = self.fan_of(p) {
            return Region::Fan(k);
        }
        let (e, n) = self.frame();
        let xi = p[0] * e[0] + p[1] * e[1];
        let zeta = p[0] * n[0] + p[1] * n[1];
        let (t, _) = self.solve_t(xi, zeta.abs());
        Region::Ruled { t, upper: zeta >= 0.0 }
    }

    /// Segment parameter `t` through `(ξ, |ζ|)` in the frame along `L`,
    /// and `∂G/∂t` there.
    fn solve_t(&self, xi: f64, za: f64) -> (f64, f64) {
        let g = |t: f64| {
            let s = s_of(t);
            if s == 0.0 {
                return t - xi;
            }
            t * (1.0 - C * za / s) - xi
        };
        let gt = |t: f64| {
            let s = s_of(t);
            1.0 - C * za / (s * s * s)
        };
        if za == 0.0 {
            return (xi.clamp(-1.0, 1.0), 1.0);
        }
        let tm = (2.0 * (1.0 - za * za)).max(0.0).sqrt().min(1.0);
        let (lo, hi) = (-tm, tm);
        let mut t = if g(lo) >= 0.0 {
            lo
        } else if g(hi) <= 0.0 {
            hi
        } else {
            bisect(g, lo, hi)
        };
        for _ in 0..4 {
            let d = gt(t);
            if d <= 0.0 {
                break;
            }
            let next = (t - g(t) / d).clamp(lo, hi);
            if next == t {
                break;
            }
            t = next;
        }
        (t, gt(t))
    }

    /// `ǔ` at `p`. Points outside the closed disc take the value at the
    /// radial projection.
    pub fn value(&self, p: [f64; 2]) -> f64 {
        let r = p[0].hypot(p[1]);
        let p = if r > 1.0 { [p[0] / r, p[1] / r] } else { p };
        if let Some(k) = self.fan_of(p) {
            return self.fan_value(k, p).0;
        }
        let (e, n) = self.frame();
        let xi = p[0] * e[0] + p[1] * e[1];
        let zeta = p[0] * n[0] + p[1] * n[1];
        let (t, _) = self.solve_t(xi, zeta.abs());
        self.gamma - t * zeta
    }

    /// `∇ǔ` at `p` inside the closed disc.
    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        if let Some(k) = self.fan_of(p) {
            return self.fan_value(k, p).1;
        }
        let (e, n) = self.frame();
        let xi = p[0] * e[0] + p[1] * e[1];
        let zeta = p[0] * n[0] + p[1] * n[1];
        let za = zeta.abs();
        let (t, gt) = self.solve_t(xi, za);
        let s = s_of(t);
        let t_xi = 1.0 / gt;
        let t_za = if s > 0.0 { C * t / s / gt } else { 0.0 };
        let d_xi = -zeta * t_xi;
        let d_zeta = -t - za * t_za;
        [d_xi * e[0] + d_zeta * n[0], d_xi * e[1] + d_zeta * n[1]]
    }

    /// Value and gradient on fan `k`: the Legendrian chord through `p` joins
    /// boundary angles `c ± a` where `cos a` is the distance of `p` along
    /// the critical direction `c`, and `u` is linear along it.
    fn fan_value(&self, k: usize, p: [f64; 2]) -> (f64, [f64; 2]) {
        let c = self.fans[k].critical;
        let (sc, cc) = c.sin_cos();
        let e = [cc, sc];
        let ep = [-sc, cc];
        let d = p[0] * e[0] + p[1] * e[1];
        let w = p[0] * ep[0] + p[1] * ep[1];
        // ρ(c ± a) = 1/2 + (√2/2) sin(2c ± 2a + π/4)
        let (sp, cp) = (2.0 * c + FRAC_PI_4).sin_cos();
        let value = 0.5 + FRAC_1_SQRT_2 * sp * (2.0 * d * d - 1.0) + SQRT_2 * cp * d * w;
        let gd = 2.0 * SQRT_2 * sp * d + SQRT_2 * cp * w;
        let gw = SQRT_2 * cp * d;
        (value, [gd * e[0] + gw * ep[0], gd * e[1] + gw * ep[1]])
    }

    /// Lifted segment `Γ̃ₜ^j` from `(α, β, γ)` on `L` to the boundary at
    /// `θ_j(t)`, with the boundary end at height `ρ(θ_j)`.
    pub fn ruled_segment(&self, t: f64, j: usize) -> Result<Segment3> {
        let (th1, th2) = self.branch_angles(t)?;
        let th = if j == 1 { th1 } else { th2 };
        let (s0, c0) = self.theta_prime.sin_cos();
        Ok([
            [t * c0, t * s0, self.gamma],
            [th.cos(), th.sin(), boundary_rho(th)],
        ])
    }

    fn branch_angles(&self, t: f64) -> Result<(f64, f64)> {
        if !(t.abs() <= 1.0) {
            return Err(Error::Argument(format!("t must lie in [−1, 1], got {t}")));
        }
        let a = (t * FRAC_1_SQRT_2).acos();
        Ok((self.theta_prime + a, self.theta_prime - a))
    }

    /// `Γ̃ₜ²` in the `(s, η)` parametrization, evaluated at arclength `s`.
    pub fn ruled_point(&self, t: f64, s: f64) -> Result<[f64; 3]> {
        let (_, eta) = delta_eta(t)?;
        let (s0, c0) = self.theta_prime.sin_cos();
        let (alpha, beta) = (t * c0, t * s0);
        let (se, ce) = eta.sin_cos();
        Ok([
            s * se + alpha,
            -s * ce + beta,
            s * (beta * se + alpha * ce) + self.gamma,
        ])
    }

    /// Boundary-to-boundary chord of fan `k` starting at angle `theta`.
    pub fn fan_chord(&self, k: usize, theta: f64) -> Segment3 {
        let other = self.fan_partner(k, theta);
        [
            [theta.cos(), theta.sin(), boundary_rho(theta)],
            [other.cos(), other.sin(), boundary_rho(other)],
        ]
    }

    /// `ρ(θ) − ρ(θ′) + t sin(θ − θ′)` for a lifted segment from the point
    /// `t(cos θ′, sin θ′)` of `L`, or between two boundary points (`t = 1`).
    pub fn contact_relation(theta: f64, theta_prime: f64, t: f64) -> f64 {
        boundary_rho(theta) - boundary_rho(theta_prime) + t * (theta - theta_prime).sin()
    }

    /// All ruled segments at `n_t` values of `t` and `n_fan` chords per fan.
    pub fn segments(&self, n_t: usize, n_fan: usize) -> Vec<Segment3> {
        let mut out = Vec::new();
        for i in 0..n_t {
            let t = -1.0 + 2.0 * (i as f64 + 0.5) / n_t as f64;
            for j in [1, 2] {
                if let Ok(s) = self.ruled_segment(t, j) {
                    out.push(s);
                }
            }
        }
        for k in 0..4 {
            let (lo, _) = self.fans[k].arc;
            let c = self.fans[k].critical;
            for i in 0..n_fan {
                let th = lo + (c - lo) * i as f64 / n_fan as f64;
                out.push(self.fan_chord(k, th));
            }
        }
        out
    }

    /// Singular segment `L` and the four chords bounding the fans.
    pub fn interfaces(&self) -> Vec<Interface> {
        let (s0, c0) = self.theta_prime.sin_cos();
        let mut out = vec![Interface::segment(
            "L",
            InterfaceKind::SingularCurve,
            [-c0, -s0],
            [c0, s0],
        )];
        for (k, f) in self.fans.iter().enumerate() {
            let (a, b) = (f.arc.0, f.arc.1);
            out.push(Interface::segment(
                &format!("fan-{k}"),
                InterfaceKind::Kink,
                [a.cos(), a.sin()],
                [b.cos(), b.sin()],
            ));
        }
        out
    }

    /// `∫ |∇ǔ + F|` over the unit disc.
    pub fn p_area(&self, abs_tol: f64) -> QuadResult {
        self.surface().disc_p_area(1.0, &eighth_turns(), abs_tol)
    }

    /// The construction as a closed-form surface on the unit disc.
    pub fn surface(&self) -> ClosedFormSurface {
        let a = Arc::new(self.clone());
        let b = a.clone();
        let mut pieces = vec![Piece {
            label: "ruled".into(),
            formula: "gamma - t(x,y) * zeta".into(),
            contains: {
                let a = a.clone();
                Arc::new(move |p| matches!(a.region(p), Region::Ruled { .. }))
            },
        }];
        for k in 0..4 {
            let a = a.clone();
            pieces.push(Piece {
                label: format!("fan-{k}"),
                formula: "linear along chords mirrored about the critical angle".into(),
                contains: Arc::new(move |p| a.region(p) == Region::Fan(k)),
            });
        }
        ClosedFormSurface {
            name: "check-u".into(),
            interfaces: self.interfaces(),
            value: Arc::new(move |p| a.value(p)),
            gradient: Arc::new(move |p| b.gradient(p)),
            pieces,
            field: contact(),
            domain: DomainSpec::unit_disc(),
        }
    }
}

/// `kπ/8`, `k = 1..15`.
pub fn eighth_turns() -> Vec<f64> {
    (1..16).map(|k| k as f64 * FRAC_PI_8).collect()
}

/// `∫ |∇ǔ + F|` over the unit disc, to absolute tolerance `1e−7`.
pub fn minimizer_p_area() -> Result<f64> {
    Ok(construct_minimizer()?.p_area(1e-7).value)
}

/// `8√2/3`, the common p-area of the Pauls pair on the unit disc.
pub fn pauls_p_area() -> f64 {
    8.0 * SQRT_2 / 3.0
}

/// Closed-form one-dimensional reduction of the Pauls p-areas, as a check on
/// the disc quadrature: `∫∫ √8 |x| = √8 · 2 ∫ |x| √(1 − x²) dx`.
pub fn pauls_p_area_1d() -> f64 {
    let r = integrate(|x: f64| 2.0 * x.abs() * (1.0 - x * x).max(0.0).sqrt(), -1.0, 1.0, &[0.0], 1e-14, 200);
    8f64.sqrt() * r.value
}

/// Parsed `name:key=value,...` catalog reference.
#[derive(Clone, Debug, PartialEq)]
pub struct CatalogName {
    pub base: String,
    pub params: BTreeMap<String, String>,
}

impl CatalogName {
    pub fn parse(s: &str) -> Result<Self> {
        let (base, rest) = match s.split_once(':') {
            Some((b, r)) => (b.trim(), r),
            None => (s.trim(), ""),
        };
        let mut params = BTreeMap::new();
        for kv in rest.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("catalog parameter `{kv}` lacks `=`")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(CatalogName {
            base: base.to_string(),
            params,
        })
    }
}

pub const CATALOG_NAMES: [&str; 6] = ["7.1a", "7.1b", "7.2", "pauls-u", "pauls-v", "check-u"];

/// Builds a catalog surface by name. Parameter values go through `eval`,
/// so callers may accept expressions such as `pi/3`.
pub fn catalog_with<E>(name: &str, eval: E) -> Result<ClosedFormSurface>
where
    E: Fn(&str) -> Result<f64>,
{
    let n = CatalogName::parse(name)?;
    let get = |k: &str| -> Result<f64> {
        let v = n
            .params
            .get(k)
            .ok_or_else(|| Error::Argument(format!("`{}` needs parameter `{k}`", n.base)))?;
        eval(v)
    };
    let allow = |keys: &[&str]| -> Result<()> {
        for k in n.params.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(Error::Argument(format!("`{}` takes no parameter `{k}`", n.base)));
            }
        }
        Ok(())
    };
    match n.base.as_str() {
        "7.1a" => {
            allow(&["theta"])?;
            example_7_1a(get("theta")?)
        }
        "7.1b" => {
            allow(&["theta", "eta"])?;
            example_7_1b(get("theta")?, get("eta")?)
        }
        "7.2" => {
            allow(&[])?;
            Ok(example_7_2())
        }
        "pauls-u" => {
            allow(&[])?;
            Ok(pauls_u())
        }
        "pauls-v" => {
            allow(&[])?;
            Ok(pauls_v())
        }
        "check-u" => {
            allow(&[])?;
            Ok(construct_minimizer()?.surface())
        }
        other => Err(Error::Argument(format!(
            "unknown catalog entry `{other}`; known: {}",
            CATALOG_NAMES.join(", ")
        ))),
    }
}

/// [`catalog_with`] with plain decimal parameters.
pub fn catalog(name: &str) -> Result<ClosedFormSurface> {
    catalog_with(name, |v| {
        v.parse::<f64>()
            .map_err(|e| Error::Argument(format!("parameter `{v}`: {e}")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn fd_gradient(s: &ClosedFormSurface, p: [f64; 2]) -> [f64; 2] {
        let h = 1e-6;
        [
            (s.value([p[0] + h, p[1]]) - s.value([p[0] - h, p[1]])) / (2.0 * h),
            (s.value([p[0], p[1] + h]) - s.value([p[0], p[1] - h])) / (2.0 * h),
        ]
    }

    #[test]
    fn formula_values() {
        assert!(close(example_7_1a(FRAC_PI_4).unwrap().value([1.0, 1.0]), 0.0, 1e-15));
        assert_eq!(example_7_2().value([2.0, -1.0]), 0.0);
        assert!(example_7_1a(FRAC_PI_2).is_err());
        assert!(example_7_1b(PI, 1.0).is_err());
        assert!(example_7_1b(1.0, 2.0 * PI).is_err());
    }

    #[test]
    fn pauls_pair_share_the_boundary_curve() {
        let (u, v) = (pauls_u(), pauls_v());
        for k in 0..100 {
            let th = 0.0628 * k as f64;
            let p = [th.cos(), th.sin()];
            assert!(close(u.value(p), boundary_rho(th), 1e-14));
            assert!(close(v.value(p), boundary_rho(th), 1e-14));
        }
    }

    #[test]
    fn rho_values_and_period() {
        assert!(close(boundary_rho(0.0), 1.0, 1e-15));
        assert!(close(boundary_rho(FRAC_PI_4), 1.0, 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let th: f64 = rng.gen_range(-10.0..10.0);
            assert!(close(boundary_rho(PI + th), boundary_rho(th), 1e-13));
            let h = 1e-6;
            let fd = (boundary_rho(th + h) - boundary_rho(th - h)) / (2.0 * h);
            assert!(close(fd, boundary_rho_prime(th), 1e-8));
        }
    }

    #[test]
    fn theta_branches() {
        let (a, b) = theta_from_t(1.0).unwrap();
        assert!(close(a, 5.0 * FRAC_PI_8, 1e-12) && close(b, FRAC_PI_8, 1e-12));
        let (a, b) = theta_from_t(-1.0).unwrap();
        assert!(close(a, 9.0 * FRAC_PI_8, 1e-12) && close(b, -3.0 * FRAC_PI_8, 1e-12));
        let (a, b) = theta_from_t(0.0).unwrap();
        assert!(close(a, 7.0 * FRAC_PI_8, 1e-12) && close(b, -FRAC_PI_8, 1e-12));
        assert!(theta_from_t(1.0 + 1e-9).is_err());
        for k in 0..=40 {
            let t = -1.0 + k as f64 / 20.0;
            let (a, b) = theta_from_t(t).unwrap();
            assert!(close(a - THETA_PRIME, THETA_PRIME - b, 1e-12));
            assert!(close((a - THETA_PRIME).cos(), t * FRAC_1_SQRT_2, 1e-12));
            // both ends lie on the contact plane through the point of L
            assert!(MinimizerConstruction::contact_relation(a, THETA_PRIME, t).abs() < 1e-12);
            assert!(MinimizerConstruction::contact_relation(b, THETA_PRIME, t).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_and_eta() {
        let (d, e) = delta_eta(0.0).unwrap();
        assert!(close(d, 0.0, 1e-15) && close(e, 3.0 * FRAC_PI_8, 1e-12));
        let (d, _) = delta_eta(1.0).unwrap();
        let want = (FRAC_1_SQRT_2 / (1.0 - FRAC_1_SQRT_2)).atan();
        assert!(close(d, want, 1e-12) && close(d, 1.17810, 1e-5));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let t: f64 = rng.gen_range(-1.0..1.0);
            assert!(close(delta_eta(-t).unwrap().0, -delta_eta(t).unwrap().0, 1e-14));
        }
    }

    #[test]
    fn eta_parametrization_reaches_the_boundary() {
        let m = construct_minimizer().unwrap();
        for k in 0..=20 {
            let t = -1.0 + k as f64 / 10.0;
            let seg = m.ruled_segment(t, 2).unwrap();
            let len = (seg[1][0] - seg[0][0]).hypot(seg[1][1] - seg[0][1]);
            let q = m.ruled_point(t, len).unwrap();
            for i in 0..3 {
                assert!(close(q[i], seg[1][i], 1e-10), "t={t} i={i} {q:?} {seg:?}");
            }
        }
    }

    #[test]
    fn fan_critical_values() {
        let m = construct_minimizer().unwrap();
        let want = [FRAC_PI_4, FRAC_PI_2, 5.0 * FRAC_PI_4, 3.0 * FRAC_PI_2];
        for (f, w) in m.fans.iter().zip(want) {
            assert!(close(f.critical, w, 1e-12), "{f:?}");
        }
        // chords obey the contact relation with t = 1
        for k in 0..4 {
            let (lo, _) = m.fans[k].arc;
            for i in 0..20 {
                let th = lo + (m.fans[k].critical - lo) * i as f64 / 20.0;
                let other = m.fan_partner(k, th);
                assert!(MinimizerConstruction::contact_relation(other, th, 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fans_coincide_with_the_pauls_surfaces() {
        let m = construct_minimizer().unwrap();
        let (u, v) = (pauls_u(), pauls_v());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = [0; 4];
        for _ in 0..20000 {
            let p: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if p[0].hypot(p[1]) > 1.0 {
                continue;
            }
            if let Region::Fan(k) = m.region(p) {
                hits[k] += 1;
                let want = if k % 2 == 0 { u.value(p) } else { v.value(p) };
                assert!(close(m.value(p), want, 1e-13));
            }
        }
        assert!(hits.iter().all(|&h| h > 0), "{hits:?}");
    }

    #[test]
    fn boundary_trace_is_rho() {
        let m = construct_minimizer().unwrap();
        for k in 0..1000 {
            let th = 2.0 * PI * k as f64 / 1000.0;
            let p = [th.cos(), th.sin()];
            assert!(close(m.value(p), boundary_rho(th), 1e-10), "θ={th}");
        }
    }

    #[test]
    fn segments_carry_linear_values() {
        let m = construct_minimizer().unwrap();
        for seg in m.segments(40, 10) {
            for k in 0..=10 {
                let l = k as f64 / 10.0;
                let p = [
                    seg[0][0] + l * (seg[1][0] - seg[0][0]),
                    seg[0][1] + l * (seg[1][1] - seg[0][1]),
                ];
                let z = seg[0][2] + l * (seg[1][2] - seg[0][2]);
                assert!(close(m.value(p), z, 1e-10), "{seg:?} {l}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = construct_minimizer().unwrap().surface();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 500 {
            let p: [f64; 2] = [rng.gen_range(-0.99..0.99), rng.gen_range(-0.99..0.99)];
            if p[0].hypot(p[1]) > 0.99 {
                continue;
            }
            let g = s.gradient(p);
            let f = fd_gradient(&s, p);
            assert!(close(g[0], f[0], 1e-6) && close(g[1], f[1], 1e-6), "{p:?} {g:?} {f:?}");
            checked += 1;
        }
        for surf in [pauls_u(), pauls_v(), example_7_1a(1.0).unwrap(), example_7_2()] {
            for p in [[0.3, 0.4], [-0.2, 0.7], [0.5, -0.6]] {
                let g = surf.gradient(p);
                let f = fd_gradient(&surf, p);
                assert!(close(g[0], f[0], 1e-6) && close(g[1], f[1], 1e-6));
            }
        }
    }

    #[test]
    fn singular_segment_is_singular() {
        let s = construct_minimizer().unwrap().surface();
        let (sn, cs) = THETA_PRIME.sin_cos();
        for k in 0..=10 {
            let t = -0.9 + 0.18 * k as f64;
            let q = s.augmented_gradient([t * cs, t * sn]);
            assert!(q[0].hypot(q[1]) < 1e-12);
        }
    }

    #[test]
    fn surfaces_are_continuous_across_interfaces() {
        let m = construct_minimizer().unwrap();
        for s in [pauls_u(), pauls_v(), example_7_1b(1.0, 4.0).unwrap(), example_7_2(), m.surface()] {
            assert!(s.continuity_defect(50, 1e-12) < 1e-9, "{}", s.name);
        }
    }

    #[test]
    fn other_branch_folds() {
        assert!(construct_minimizer_on_branch(THETA_PRIME).is_ok());
        assert!(matches!(
            construct_minimizer_on_branch(7.0 * FRAC_PI_8),
            Err(Error::Construction(_))
        ));
        assert!(construct_minimizer_on_branch(0.3).is_err());
    }

    #[test]
    fn pauls_closed_form_area() {
        assert!(close(pauls_p_area_1d(), pauls_p_area(), 1e-12));
        let r = pauls_u().disc_p_area(1.0, &eighth_turns(), 1e-8);
        assert!(close(r.value, pauls_p_area(), 1e-6), "{r:?}");
        let r = pauls_v().disc_p_area(1.0, &eighth_turns(), 1e-8);
        assert!(close(r.value, pauls_p_area(), 1e-6), "{r:?}");
    }

    #[test]
    fn minimizer_beats_the_pauls_pair() {
        let m = construct_minimizer().unwrap();
        let a = m.p_area(1e-7).value;
        let b = m.p_area(1e-5).value;
        assert!((a - b).abs() < 1e-4, "{a} {b}");
        assert!(a < pauls_p_area() - 1e-3, "{a}");
    }

    #[test]
    fn catalog_lookup() {
        assert_eq!(catalog("pauls-u").unwrap().name, "pauls-u");
        assert!(catalog("7.1a:theta=0.5").is_ok());
        assert!(catalog("7.1b:theta=1,eta=5").is_ok());
        assert!(catalog("7.1b:theta=1").is_err());
        assert!(catalog("7.2:x=1").is_err());
        assert!(catalog("nope").is_err());
        assert_eq!(catalog("check-u").unwrap().interfaces.len(), 5);
        let n = CatalogName::parse("7.1b: theta = 1 , eta=2").unwrap();
        assert_eq!(n.base, "7.1b");
        assert_eq!(n.params["eta"], "2");
    }
}
