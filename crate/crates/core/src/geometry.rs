//! Characteristic lines, Legendrian lifts, and the normal-jump test that
//! decides whether a planar surface is a p-minimizer.

use std::io::Write;

use serde::Serialize;

use crate::catalog::{Interface, InterfaceKind};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::functional::{singular_set, Tau};
use crate::grid::{DomainSpec, NodeClass, ScalarFieldGrid};

/// A planar graph `z = u(x, y)` that can be evaluated anywhere near its
/// domain.
pub trait Surface: Send + Sync {
    fn value(&self, p: [f64; 2]) -> f64;
    fn gradient(&self, p: [f64; 2]) -> [f64; 2];
}

/// Bilinear interpolation of a planar grid function and of its nodal
/// difference gradient.
#[derive(Clone, Debug)]
pub struct GridSurface {
    grid: ScalarFieldGrid,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GridSurface {
    pub fn new(grid: ScalarFieldGrid) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::Dimension(format!("grid surface needs a planar grid, got R^{}", grid.dim())));
        }
        let n = grid.layout().len();
        let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            if grid.layout().class(i) != NodeClass::Exterior {
                gx[i] = grid.partial(i, 0);
                gy[i] = grid.partial(i, 1);
            }
        }
        Ok(GridSurface { grid, gx, gy })
    }

    pub fn grid(&self) -> &ScalarFieldGrid {
        &self.grid
    }

    fn blend(&self, p: [f64; 2], data: &[&[f64]]) -> Vec<f64> {
        let layout = self.grid.layout();
        let h = layout.h();
        let (fx, fy) = ((p[0] / h).floor(), (p[1] / h).floor());
        let (ax, ay) = (p[0] / h - fx, p[1] / h - fy);
        let mut acc = vec![0.0; data.len()];
        let mut wsum = 0.0;
        for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let q = [(fx + dx) * h, (fy + dy) * h];
            let w = if dx == 0.0 { 1.0 - ax } else { ax } * if dy == 0.0 { 1.0 - ay } else { ay };
            if let Some(i) = layout.nearest_node(&q) {
                if layout.class(i) != NodeClass::Exterior {
                    for (a, d) in acc.iter_mut().zip(data) {
                        *a += w * d[i];
                    }
                    wsum += w;
                }
            }
        }
        if wsum > 0.0 {
            for a in &mut acc {
                *a /= wsum;
            }
            return acc;
        }
        match layout.nearest_node(&p) {
            Some(i) => data.iter().map(|d| d[i]).collect(),
            None => vec![f64::NAN; data.len()],
        }
    }
}

impl Surface for GridSurface {
    fn value(&self, p: [f64; 2]) -> f64 {
        self.blend(p, &[self.grid.values()])[0]
    }

    fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.blend(p, &[&self.gx, &self.gy]);
        [v[0], v[1]]
    }
}

fn check_planar(field: &VectorFieldSpec) -> Result<()> {
    if field.dim() != 2 {
        return Err(Error::Dimension(format!(
            "characteristic geometry is planar, field lives in R^{}",
            field.dim()
        )));
    }
    Ok(())
}

fn augmented(surface: &dyn Surface, field: &VectorFieldSpec, p: [f64; 2]) -> [f64; 2] {
    let mut f = [0.0; 2];
    field.value_into(&p, &mut f);
    let g = surface.gradient(p);
    [g[0] + f[0], g[1] + f[1]]
}

fn unit_normal(surface: &dyn Surface, field: &VectorFieldSpec, p: [f64; 2], tau: f64) -> Option<[f64; 2]> {
    let q = augmented(surface, field, p);
    let n = q[0].hypot(q[1]);
    if !(n >= tau) || n == 0.0 {
        return None;
    }
    Some([q[0] / n, q[1] / n])
}

fn perp(n: [f64; 2]) -> [f64; 2] {
    [n[1], -n[0]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `N⊥ = (N₂, −N₁)` at `x`, or `None` where `|∇u + F| < τ`.
pub fn characteristic_direction(
    surface: &dyn Surface,
    field: &VectorFieldSpec,
    x: [f64; 2],
    tau: f64,
) -> Result<Option<[f64; 2]>> {
    check_planar(field)?;
    Ok(unit_normal(surface, field, x, tau).map(perp))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Boundary,
    Singular,
    /// `N` jumps without vanishing.
    Interface,
    MaxSteps,
}

const MAX_TURN: f64 = 0.25;

/// Straight characteristic segment through a base point, as traced.
#[derive(Clone, Debug, Serialize)]
pub struct CharacteristicRay {
    pub base: [f64; 2],
    /// `N⊥` at the base point.
    pub direction: [f64; 2],
    /// End reached marching along `−direction`.
    pub start: [f64; 2],
    /// End reached marching along `+direction`.
    pub end: [f64; 2],
    pub stop: [StopReason; 2],
    /// Largest distance of a traced point from the total-least-squares line.
    pub straightness: f64,
    /// Largest angle between the local `N⊥` and `direction`, sign ignored.
    pub angle_deviation: f64,
    /// `dz/ds = y d₁ − x d₂` of the Legendrian lift along the line.
    pub lift_slope: f64,
    /// Traced vertices from `start` to `end`.
    pub trace: Vec<[f64; 2]>,
}

impl CharacteristicRay {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    /// Unit direction of the ray pointing into the half-plane `d·ν > 0`.
    pub fn oriented(&self, nu: [f64; 2]) -> [f64; 2] {
        if dot(self.direction, nu) >= 0.0 {
            self.direction
        } else {
            [-self.direction[0], -self.direction[1]]
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceOptions {
    pub tau: f64,
    pub step: f64,
    pub max_steps: usize,
}

impl TraceOptions {
    pub fn new(tau: f64, step: f64) -> Self {
        TraceOptions {
            tau,
            step,
            max_steps: 100_000,
        }
    }
}

/// Integrates `x′ = ±N⊥(x)` by classical Runge–Kutta from `x0` in both
/// directions until the domain boundary or the singular set, then fits a
/// line to the trace.
pub fn trace_ray(
    surface: &dyn Surface,
    field: &VectorFieldSpec,
    domain: &DomainSpec,
    x0: [f64; 2],
    opts: TraceOptions,
) -> Result<CharacteristicRay> {
    check_planar(field)?;
    if domain.dim() != 2 {
        return Err(Error::Dimension("characteristic rays need a planar domain".into()));
    }
    if !(opts.step > 0.0 && opts.tau >= 0.0) {
        return Err(Error::Argument("trace step must be positive and τ nonnegative".into()));
    }
    if !domain.contains(&x0) {
        return Err(Error::Argument(format!("base point {x0:?} lies outside the domain")));
    }
    let d0 = characteristic_direction(surface, field, x0, opts.tau)?
        .ok_or_else(|| Error::Singular(format!("trace starts on the singular set at {x0:?}")))?;
    let n0 = unit_normal(surface, field, x0, opts.tau).expect("checked above");
    let mut halves = Vec::new();
    let mut stops = [StopReason::MaxSteps; 2];
    let mut worst_angle = 0.0f64;
    for (side, sign) in [-1.0, 1.0].into_iter().enumerate() {
        let mut x = x0;
        let mut n_prev = n0;
        let mut pts = vec![x0];
        let mut stop = StopReason::MaxSteps;
        // N must stay continuous along a characteristic: a reversal or a
        // sharp turn means the step crossed the singular set or a kink
        let normal_near = |p: [f64; 2], n_prev: [f64; 2]| -> Option<[f64; 2]> {
            let n = unit_normal(surface, field, p, opts.tau)?;
            (dot(n, n_prev) >= MAX_TURN.cos()).then_some(n)
        };
        for _ in 0..opts.max_steps {
            let step = |x: [f64; 2], hs: f64| -> Option<([f64; 2], [f64; 2])> {
                let dir = |n: [f64; 2]| {
                    let d = perp(n);
                    [sign * d[0], sign * d[1]]
                };
                let k1 = dir(normal_near(x, n_prev)?);
                let k2 = dir(normal_near([x[0] + 0.5 * hs * k1[0], x[1] + 0.5 * hs * k1[1]], n_prev)?);
                let k3 = dir(normal_near([x[0] + 0.5 * hs * k2[0], x[1] + 0.5 * hs * k2[1]], n_prev)?);
                let k4 = dir(normal_near([x[0] + hs * k3[0], x[1] + hs * k3[1]], n_prev)?);
                let y = [
                    x[0] + hs / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    x[1] + hs / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ];
                if !domain.contains(&y) {
                    return None;
                }
                Some((y, normal_near(y, n_prev)?))
            };
            if let Some((y, n)) = step(x, opts.step) {
                x = y;
                n_prev = n;
                pts.push(x);
                continue;
            }
            // shorten the step to land on the boundary or the interface
            let (mut lo, mut hi) = (0.0, opts.step);
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                match step(x, mid) {
                    Some(_) => lo = mid,
                    None => hi = mid,
                }
            }
            if let Some((y, n)) = step(x, lo).filter(|_| lo > 0.0) {
                x = y;
                n_prev = n;
                pts.push(x);
            }
            let d = perp(n_prev);
            let probe = [x[0] + sign * opts.step * 1e-3 * d[0], x[1] + sign * opts.step * 1e-3 * d[1]];
            // across a singular curve N reverses or vanishes
            stop = if !domain.contains(&probe) {
                StopReason::Boundary
            } else if unit_normal(surface, field, probe, opts.tau).map_or(true, |n| dot(n, n_prev) < 0.0) {
                StopReason::Singular
            } else {
                StopReason::Interface
            };
            break;
        }
        for p in &pts {
            if let Some(n) = unit_normal(surface, field, *p, opts.tau) {
                let c = dot(perp(n), d0).abs().min(1.0);
                worst_angle = worst_angle.max(c.acos());
            }
        }
        stops[side] = stop;
        halves.push(pts);
    }
    let mut trace: Vec<[f64; 2]> = halves[0].iter().rev().cloned().collect();
    trace.extend(halves[1].iter().skip(1));
    let straightness = crate::functional::fit_line(&trace).map_or(0.0, |f| f.max_residual);
    Ok(CharacteristicRay {
        base: x0,
        direction: d0,
        start: trace[0],
        end: *trace.last().expect("nonempty trace"),
        stop: stops,
        straightness,
        angle_deviation: worst_angle,
        lift_slope: x0[1] * d0[0] - x0[0] * d0[1],
        trace,
    })
}

/// `(x, y, u(x, y))` at `n + 1` equally spaced points from `start` to `end`.
pub fn lift_ray(ray: &CharacteristicRay, surface: &dyn Surface, n: usize) -> Vec<[f64; 3]> {
    let n = n.max(1);
    (0..=n)
        .map(|k| {
            let l = k as f64 / n as f64;
            let p = [
                ray.start[0] + l * (ray.end[0] - ray.start[0]),
                ray.start[1] + l * (ray.end[1] - ray.start[1]),
            ];
            [p[0], p[1], surface.value(p)]
        })
        .collect()
}

/// `Σ |Δz + x̄ Δy − ȳ Δx|` over the edges of a lifted polyline, with `x̄, ȳ`
/// the edge midpoints. Exact for straight edges with linear `z`, where it
/// equals `∫ |dz + x dy − y dx|`.
pub fn contact_defect(points: &[[f64; 3]]) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (mx, my) = (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]));
            (b[2] - a[2] + mx * (b[1] - a[1]) - my * (b[0] - a[0])).abs()
        })
        .sum()
}

/// Contact-form defect of the lift of a ray through `u`, from 256 samples.
pub fn legendrian_defect(ray: &CharacteristicRay, surface: &dyn Surface) -> f64 {
    contact_defect(&lift_ray(ray, surface, 256))
}

/// `2 × ` the signed area of a closed polygon: the value `∮ Θ` would take
/// around the loop if every edge were a Legendrian characteristic.
pub fn loop_obstruction(polygon: &[[f64; 2]]) -> f64 {
    if polygon.len() < 3 {
        return 0.0;
    }
    let n = polygon.len();
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            // relative to the first vertex to limit cancellation
            let (ax, ay) = (a[0] - polygon[0][0], a[1] - polygon[0][1]);
            let (bx, by) = (b[0] - polygon[0][0], b[1] - polygon[0][1]);
            ax * by - bx * ay
        })
        .collect();
    crate::quadrature::pairwise_sum(&terms)
}

/// A point of an interface with the one-sided limits of `N`.
#[derive(Clone, Debug, Serialize)]
pub struct InterfaceSample {
    pub label: String,
    pub kind: InterfaceKind,
    pub point: [f64; 2],
    pub tangent: [f64; 2],
    /// Unit normal toward the `+` side; `ν⁻ = −ν⁺`.
    pub normal: [f64; 2],
    pub n_plus: Option<[f64; 2]>,
    pub n_minus: Option<[f64; 2]>,
}

/// `(N⁺ − N⁻)·ν⁺`.
pub fn jump_defect(s: &InterfaceSample) -> Result<f64> {
    match (s.n_plus, s.n_minus) {
        (Some(p), Some(m)) => Ok((p[0] - m[0]) * s.normal[0] + (p[1] - m[1]) * s.normal[1]),
        _ => Err(Error::Singular(format!(
            "one-sided normal undefined at {:?} on `{}`",
            s.point, s.label
        ))),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AngleReport {
    /// Angle between the tangent and the ray on the `−` side.
    pub incident: f64,
    /// Angle between the tangent and the ray on the `+` side.
    pub reflected: f64,
    pub pass: bool,
}

/// Compares the angles the two characteristics leaving `s.point` make with
/// the oriented tangent, each ray pointing away from the interface.
pub fn angle_criterion(
    s: &InterfaceSample,
    ray_minus: &CharacteristicRay,
    ray_plus: &CharacteristicRay,
    angle_tol: f64,
) -> AngleReport {
    let nu = s.normal;
    let dp = ray_plus.oriented(nu);
    let dm = ray_minus.oriented([-nu[0], -nu[1]]);
    let ang = |d: [f64; 2]| dot(d, s.tangent).clamp(-1.0, 1.0).acos();
    let (incident, reflected) = (ang(dm), ang(dp));
    AngleReport {
        incident,
        reflected,
        pass: (incident - reflected).abs() <= angle_tol,
    }
}

/// Traces the characteristics through `s.point ± offset ν`.
pub fn rays_at(
    s: &InterfaceSample,
    surface: &dyn Surface,
    field: &VectorFieldSpec,
    domain: &DomainSpec,
    offset: f64,
    opts: TraceOptions,
) -> Result<(CharacteristicRay, CharacteristicRay)> {
    let at = |sign: f64| [s.point[0] + sign * offset * s.normal[0], s.point[1] + sign * offset * s.normal[1]];
    Ok((
        trace_ray(surface, field, domain, at(-1.0), opts)?,
        trace_ray(surface, field, domain, at(1.0), opts)?,
    ))
}

/// Splits a polyline into the maximal pieces lying inside the domain.
pub fn clip_polyline(domain: &DomainSpec, points: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    const SUB: usize = 256;
    let inside = |p: [f64; 2]| domain.signed_distance(&p) < 0.0;
    let crossing = |a: [f64; 2], b: [f64; 2]| {
        // a and b on opposite sides
        let ia = inside(a);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let m = 0.5 * (lo + hi);
            let p = [a[0] + m * (b[0] - a[0]), a[1] + m * (b[1] - a[1])];
            if inside(p) == ia {
                lo = m;
            } else {
                hi = m;
            }
        }
        let m = if ia { lo } else { hi };
        [a[0] + m * (b[0] - a[0]), a[1] + m * (b[1] - a[1])]
    };
    let mut out = Vec::new();
    let mut cur: Vec<[f64; 2]> = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut prev = a;
        if inside(a) && cur.is_empty() {
            cur.push(a);
        }
        for k in 1..=SUB {
            let l = k as f64 / SUB as f64;
            let p = [a[0] + l * (b[0] - a[0]), a[1] + l * (b[1] - a[1])];
            match (inside(prev), inside(p)) {
                (true, false) => {
                    cur.push(crossing(prev, p));
                    out.push(std::mem::take(&mut cur));
                }
                (false, true) => cur.push(crossing(prev, p)),
                _ => {}
            }
            prev = p;
        }
        if inside(b) {
            cur.push(b);
        }
    }
    if cur.len() >= 2 {
        out.push(cur);
    }
    out.retain(|p| p.len() >= 2);
    for p in &mut out {
        p.dedup();
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SamplingOptions {
    /// Offset unit for the one-sided limits, taken at `3h, 4h, 5h`.
    pub h: f64,
    pub tau: f64,
    pub samples_per_interface: usize,
}

/// Samples an interface polyline at equal arclength spacing, skipping
/// points within `8h` of its ends, and extrapolates `N` from each side.
pub fn sample_interface(
    surface: &dyn Surface,
    field: &VectorFieldSpec,
    itf: &Interface,
    opts: SamplingOptions,
) -> Result<Vec<InterfaceSample>> {
    check_planar(field)?;
    let total = itf.length();
    let margin = 8.0 * opts.h;
    if total <= 2.0 * margin {
        return Ok(Vec::new());
    }
    let n = opts.samples_per_interface.max(1);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let arc = margin + (total - 2.0 * margin) * (k as f64 + 0.5) / n as f64;
        let mut run = 0.0;
        for w in itf.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if len > 0.0 && arc <= run + len {
                let l = (arc - run) / len;
                let tangent = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
                let normal = [-tangent[1], tangent[0]];
                let point = [a[0] + l * (b[0] - a[0]), a[1] + l * (b[1] - a[1])];
                let side = |sign: f64| one_sided_normal(surface, field, point, normal, sign, opts);
                out.push(InterfaceSample {
                    label: itf.label.clone(),
                    kind: itf.kind,
                    point,
                    tangent,
                    normal,
                    n_plus: side(1.0),
                    n_minus: side(-1.0),
                });
                break;
            }
            run += len;
        }
    }
    Ok(out)
}

/// Quadratic extrapolation to the interface of `N` sampled at `3h, 4h, 5h`
/// along `sign · ν`.
fn one_sided_normal(
    surface: &dyn Surface,
    field: &VectorFieldSpec,
    p: [f64; 2],
    nu: [f64; 2],
    sign: f64,
    opts: SamplingOptions,
) -> Option<[f64; 2]> {
    let at = |k: f64| {
        let q = [p[0] + sign * k * opts.h * nu[0], p[1] + sign * k * opts.h * nu[1]];
        unit_normal(surface, field, q, opts.tau)
    };
    let (a, b, c) = (at(3.0)?, at(4.0)?, at(5.0)?);
    let e = [
        10.0 * a[0] - 15.0 * b[0] + 6.0 * c[0],
        10.0 * a[1] - 15.0 * b[1] + 6.0 * c[1],
    ];
    let n = e[0].hypot(e[1]);
    (n > 0.0).then(|| [e[0] / n, e[1] / n])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Minimizer,
    NotMinimizer,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// The singular set is point-like, so it carries no `(m−1)`-measure.
    NegligibleSingularSet,
    /// Every sampled interface satisfies the normal-jump condition.
    JumpCondition,
    /// Some interface sample violates the normal-jump condition.
    ViolationWitness,
    /// Nothing could be checked.
    NoEvidence,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizerVerdict {
    pub outcome: Outcome,
    pub route: Route,
    /// Sample with the largest `|defect|`.
    pub witness: Option<InterfaceSample>,
    pub witness_defect: Option<f64>,
    pub defect_tol: f64,
    pub samples_checked: usize,
    pub samples_skipped: usize,
    pub interfaces: Vec<String>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VerdictOptions {
    pub sampling: SamplingOptions,
    /// Defaults to `10h + 1e−6`.
    pub defect_tol: Option<f64>,
}

impl VerdictOptions {
    pub fn new(h: f64, tau: f64) -> Self {
        VerdictOptions {
            sampling: SamplingOptions {
                h,
                tau,
                samples_per_interface: 64,
            },
            defect_tol: None,
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.defect_tol.unwrap_or(10.0 * self.sampling.h + 1e-6)
    }
}

/// Normal-jump verdict over explicitly described interfaces, clipped to the
/// domain.
pub fn minimizer_verdict(
    surface: &dyn Surface,
    field: &VectorFieldSpec,
    domain: &DomainSpec,
    interfaces: &[Interface],
    opts: VerdictOptions,
) -> Result<MinimizerVerdict> {
    check_planar(field)?;
    let tol = opts.tolerance();
    if !(tol >= 0.0) {
        return Err(Error::Argument("defect tolerance must be nonnegative".into()));
    }
    let mut samples = Vec::new();
    let mut names = Vec::new();
    for itf in interfaces {
        names.push(itf.label.clone());
        for piece in clip_polyline(domain, &itf.points) {
            let clipped = Interface {
                label: itf.label.clone(),
                kind: itf.kind,
                points: piece,
            };
            samples.extend(sample_interface(surface, field, &clipped, opts.sampling)?);
        }
    }
    let mut worst: Option<(f64, InterfaceSample)> = None;
    let mut checked = 0;
    for s in &samples {
        if let Ok(d) = jump_defect(s) {
            checked += 1;
            if worst.as_ref().map_or(true, |(w, _)| d.abs() > w.abs()) {
                worst = Some((d, s.clone()));
            }
        }
    }
    let (outcome, route) = match &worst {
        None => (Outcome::Inconclusive, Route::NoEvidence),
        Some((d, _)) if d.abs() > tol => (Outcome::NotMinimizer, Route::ViolationWitness),
        Some(_) => (Outcome::Minimizer, Route::JumpCondition),
    };
    Ok(MinimizerVerdict {
        outcome,
        route,
        witness_defect: worst.as_ref().map(|w| w.0),
        witness: worst.map(|w| w.1),
        defect_tol: tol,
        samples_checked: checked,
        samples_skipped: samples.len() - checked,
        interfaces: names,
    })
}

/// Verdict for a grid solution. Supplied interfaces are checked directly;
/// otherwise the singular set is detected, and either found point-like or
/// replaced by its fitted line segments.
pub fn grid_minimizer_verdict(
    u: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    tau: Tau,
    interfaces: Option<&[Interface]>,
    defect_tol: Option<f64>,
) -> Result<MinimizerVerdict> {
    check_planar(field)?;
    let h = u.h();
    let domain = u.layout().domain().clone();
    let surface = GridSurface::new(u.clone())?;
    let tau_floor = match tau {
        Tau::Fixed(t) => t,
        Tau::Auto => 0.0,
    };
    let mut opts = VerdictOptions::new(h, tau_floor);
    opts.defect_tol = defect_tol;
    if let Some(list) = interfaces {
        return minimizer_verdict(&surface, field, &domain, list, opts);
    }
    let sing = singular_set(u, field, tau)?;
    if sing.components.iter().all(|c| c.len() <= 3) {
        return Ok(MinimizerVerdict {
            outcome: Outcome::Minimizer,
            route: Route::NegligibleSingularSet,
            witness: None,
            witness_defect: None,
            defect_tol: opts.tolerance(),
            samples_checked: 0,
            samples_skipped: 0,
            interfaces: Vec::new(),
        });
    }
    let mut detected = Vec::new();
    for (k, (c, fit)) in sing.components.iter().zip(&sing.fits).enumerate() {
        if c.len() <= 3 {
            continue;
        }
        if let Some(f) = fit {
            let half = 0.5 * f.length;
            let (cx, cy) = (f.centroid[0], f.centroid[1]);
            let d = f.direction;
            detected.push(Interface::segment(
                &format!("singular-{k}"),
                InterfaceKind::SingularCurve,
                [cx - half * d[0], cy - half * d[1]],
                [cx + half * d[0], cy + half * d[1]],
            ));
        }
    }
    minimizer_verdict(&surface, field, &domain, &detected, opts)
}

/// Writes polylines as `x,y[,z]` rows, one blank line between polylines.
pub fn write_polylines<W: Write>(mut w: W, lines: &[Vec<Vec<f64>>]) -> Result<()> {
    for (k, line) in lines.iter().enumerate() {
        if k > 0 {
            writeln!(w)?;
        }
        for v in line {
            let row: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{
        construct_minimizer, example_7_1a, example_7_1b, example_7_2, pauls_u, pauls_v, ClosedFormSurface,
    };
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn contact() -> VectorFieldSpec {
        VectorFieldSpec::standard_contact(2).unwrap()
    }

    const TAU: f64 = 1e-7;

    fn same_line(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        (a[0] * b[1] - a[1] * b[0]).abs() < tol && (dot(a, b).abs() - 1.0).abs() < tol
    }

    fn verdict(s: &ClosedFormSurface) -> MinimizerVerdict {
        minimizer_verdict(s, &s.field, &s.domain, &s.interfaces, VerdictOptions::new(1e-5, TAU)).unwrap()
    }

    #[test]
    fn characteristic_directions() {
        let f = contact();
        let th = 0.7;
        let a = example_7_1a(th).unwrap();
        let d = characteristic_direction(&a, &f, [0.2, 0.3], TAU).unwrap().unwrap();
        assert!((d[0] - th.cos()).abs() < 1e-12 && (d[1] - th.sin()).abs() < 1e-12);
        let b = example_7_2();
        let d = characteristic_direction(&b, &f, [0.3, 0.2], TAU).unwrap().unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12 && d[1].abs() < 1e-12);
        assert!(characteristic_direction(&a, &f, [0.4, 0.0], TAU).unwrap().is_none());
        // right-handed pair (N, N⊥)
        let n = unit_normal(&b, &f, [0.3, 0.2], TAU).unwrap();
        assert!(dot(n, d).abs() < 1e-15);
        assert!((d[0] * n[1] - d[1] * n[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_example_7_2() {
        let s = example_7_2();
        let dom = DomainSpec::centered_square(1.0).unwrap();
        let r = trace_ray(&s, &contact(), &dom, [0.5, 0.5], TraceOptions::new(TAU, 0.01)).unwrap();
        assert!(same_line(r.direction, [1.0, 0.0], 1e-12));
        assert!(r.straightness < 1e-12);
        assert!(r.start[0].abs() < 1e-6 && (r.end[0] - 1.0).abs() < 1e-9, "{:?} {:?}", r.start, r.end);
        assert_eq!(r.stop, [StopReason::Singular, StopReason::Boundary]);
        assert!(legendrian_defect(&r, &s) < 1e-9);
        // radial characteristics below the kink
        let r = trace_ray(&s, &contact(), &dom, [0.3, -0.4], TraceOptions::new(TAU, 0.01)).unwrap();
        assert!(same_line(r.direction, [0.6, -0.8], 1e-12));
        assert!(legendrian_defect(&r, &s) < 1e-9);
    }

    #[test]
    fn trace_example_7_1a_and_pauls_v() {
        let dom = DomainSpec::unit_disc();
        let s = example_7_1a(FRAC_PI_3).unwrap();
        let r = trace_ray(&s, &contact(), &dom, [0.1, 0.2], TraceOptions::new(TAU, 0.01)).unwrap();
        assert!(same_line(r.direction, [0.5, 3f64.sqrt() / 2.0], 1e-12));
        assert!(r.straightness < 1e-6 && r.angle_deviation < 1e-6);
        let v = pauls_v();
        let r = trace_ray(&v, &contact(), &dom, [0.5, -0.2], TraceOptions::new(TAU, 0.01)).unwrap();
        assert!(same_line(r.direction, [1.0, 0.0], 1e-12));
        assert!(trace_ray(&v, &contact(), &dom, [0.3, 0.3], TraceOptions::new(TAU, 0.01)).is_err());
    }

    #[test]
    fn corrupted_lift_is_detected() {
        let s = example_7_2();
        let dom = DomainSpec::centered_square(1.0).unwrap();
        let r = trace_ray(&s, &contact(), &dom, [0.5, 0.5], TraceOptions::new(TAU, 0.01)).unwrap();
        let mut lift = lift_ray(&r, &s, 64);
        assert!(contact_defect(&lift) < 1e-9);
        lift[32][2] += 0.1;
        assert!(contact_defect(&lift) >= 0.05);
    }

    #[test]
    fn minimizer_rays_are_legendrian() {
        let s = construct_minimizer().unwrap().surface();
        let dom = DomainSpec::unit_disc();
        for p in [[0.2, -0.3], [-0.5, 0.1], [0.6, 0.6], [-0.1, -0.8]] {
            let r = trace_ray(&s, &contact(), &dom, p, TraceOptions::new(1e-9, 0.005)).unwrap();
            assert!(r.straightness < 1e-8, "{p:?} {}", r.straightness);
            assert!(legendrian_defect(&r, &s) < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn loop_areas() {
        assert!((loop_obstruction(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) - 1.0).abs() < 1e-15);
        assert_eq!(loop_obstruction(&[[0.0, 0.0], [1.0, 1.0]]), 0.0);
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!((loop_obstruction(&sq) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jump_defects_of_example_7_1b() {
        let f = contact();
        let opts = SamplingOptions {
            h: 1e-5,
            tau: TAU,
            samples_per_interface: 16,
        };
        let s = example_7_1b(FRAC_PI_3, 2.0 * PI - FRAC_PI_3).unwrap();
        let itf = Interface::segment("y=0", InterfaceKind::SingularCurve, [-0.5, 0.0], [0.5, 0.0]);
        for smp in sample_interface(&s, &f, &itf, opts).unwrap() {
            assert!(jump_defect(&smp).unwrap().abs() < 1e-9);
        }
        let s = example_7_1b(FRAC_PI_3, FRAC_PI_2).unwrap();
        for smp in sample_interface(&s, &f, &itf, opts).unwrap() {
            let d = jump_defect(&smp).unwrap();
            assert!(d.abs() >= 0.3);
            // antisymmetric under swapping sides
            let mut flip = smp.clone();
            flip.normal = [-smp.normal[0], -smp.normal[1]];
            std::mem::swap(&mut flip.n_plus, &mut flip.n_minus);
            assert!((jump_defect(&flip).unwrap() - d).abs() < 1e-15);
            flip.normal = smp.normal;
            assert!((jump_defect(&flip).unwrap() + d).abs() < 1e-15);
        }
    }

    #[test]
    fn angle_criterion_cases() {
        let f = contact();
        let opts = SamplingOptions {
            h: 1e-5,
            tau: TAU,
            samples_per_interface: 4,
        };
        let trace = TraceOptions::new(TAU, 0.01);
        let dom = DomainSpec::unit_disc();
        let u = pauls_u();
        let itf = Interface::segment("x=0", InterfaceKind::SingularCurve, [0.0, -0.5], [0.0, 0.5]);
        for smp in sample_interface(&u, &f, &itf, opts).unwrap() {
            let (rm, rp) = rays_at(&smp, &u, &f, &dom, 1e-3, trace).unwrap();
            let a = angle_criterion(&smp, &rm, &rp, 1e-3);
            assert!(!a.pass);
            assert!((a.incident - PI / 4.0).abs() < 1e-9 || (a.reflected - PI / 4.0).abs() < 1e-9);
            // singular curve with N⁺ = −N⁻: defect is 2 N⁺·ν⁺
            let np = smp.n_plus.unwrap();
            assert!((jump_defect(&smp).unwrap() - 2.0 * dot(np, smp.normal)).abs() < 1e-9);
        }
        let a71 = example_7_1a(FRAC_PI_3).unwrap();
        let itf = Interface::segment("y=0", InterfaceKind::SingularCurve, [-0.5, 0.0], [0.5, 0.0]);
        for smp in sample_interface(&a71, &f, &itf, opts).unwrap() {
            let (rm, rp) = rays_at(&smp, &a71, &f, &dom, 1e-3, trace).unwrap();
            assert!(!angle_criterion(&smp, &rm, &rp, 1e-3).pass);
        }
        let m = construct_minimizer().unwrap();
        let check = m.surface();
        let l = &m.interfaces()[0];
        for smp in sample_interface(&check, &f, l, opts).unwrap() {
            let (rm, rp) = rays_at(&smp, &check, &f, &dom, 1e-4, TraceOptions::new(1e-9, 0.01)).unwrap();
            let a = angle_criterion(&smp, &rm, &rp, 1e-3);
            assert!(a.pass, "{a:?}");
            assert!(jump_defect(&smp).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn verdicts_on_the_catalog() {
        let v = verdict(&pauls_u());
        assert_eq!(v.outcome, Outcome::NotMinimizer);
        assert!(v.witness.as_ref().unwrap().point[0].abs() < 1e-12);
        assert_eq!(verdict(&pauls_v()).outcome, Outcome::NotMinimizer);
        let s = example_7_1b(2.0 * FRAC_PI_3, 4.0 * FRAC_PI_3).unwrap();
        assert_eq!(verdict(&s).outcome, Outcome::Minimizer);
        assert_eq!(verdict(&example_7_1b(FRAC_PI_3, FRAC_PI_2).unwrap()).outcome, Outcome::NotMinimizer);
        let v = verdict(&example_7_2());
        assert_eq!(v.outcome, Outcome::Minimizer, "{v:?}");
        assert_eq!(v.samples_skipped, 0);
        let v = verdict(&construct_minimizer().unwrap().surface());
        assert_eq!(v.outcome, Outcome::Minimizer, "{v:?}");
    }

    #[test]
    fn verdict_tolerance_monotone() {
        let s = construct_minimizer().unwrap().surface();
        let mut last = Outcome::Minimizer;
        for tol in [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-13, 0.0] {
            let mut o = VerdictOptions::new(1e-5, TAU);
            o.defect_tol = Some(tol);
            let v = minimizer_verdict(&s, &s.field, &s.domain, &s.interfaces, o).unwrap();
            if last != Outcome::Minimizer {
                assert_ne!(v.outcome, Outcome::Minimizer);
            }
            last = v.outcome;
        }
    }

    #[test]
    fn clipping_to_the_disc() {
        let pieces = clip_polyline(&DomainSpec::unit_disc(), &[[-4.0, 0.0], [4.0, 0.0]]);
        assert_eq!(pieces.len(), 1);
        let p = &pieces[0];
        assert!((p[0][0] + 1.0).abs() < 1e-12 && (p[p.len() - 1][0] - 1.0).abs() < 1e-12);
        let ann = DomainSpec::annulus(vec![0.0, 0.0], 0.5, 1.0).unwrap();
        assert_eq!(clip_polyline(&ann, &[[-4.0, 0.0], [4.0, 0.0]]).len(), 2);
    }

    #[test]
    fn grid_surface_interpolates_linear_data() {
        let l = crate::grid::build_layout(&DomainSpec::unit_disc(), 1.0 / 32.0).unwrap();
        let g = ScalarFieldGrid::sample(l, |x| 2.0 * x[0] - x[1] + 0.5).unwrap();
        let s = GridSurface::new(g).unwrap();
        for p in [[0.1234, -0.377], [0.5, 0.5], [-0.61, 0.02]] {
            assert!((s.value(p) - (2.0 * p[0] - p[1] + 0.5)).abs() < 1e-12);
            let gr = s.gradient(p);
            assert!((gr[0] - 2.0).abs() < 1e-10 && (gr[1] + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_verdicts() {
        let l = crate::grid::build_layout(&DomainSpec::unit_disc(), 1.0 / 128.0).unwrap();
        let f = contact();
        let u = pauls_u().sample_grid(l.clone()).unwrap();
        let v = grid_minimizer_verdict(&u, &f, Tau::Auto, None, None).unwrap();
        assert_eq!(v.outcome, Outcome::NotMinimizer, "{v:?}");
        // F = 0 with an affine graph has no singular set
        let z = VectorFieldSpec::zero(2).unwrap();
        let a = ScalarFieldGrid::sample(l, |x| x[0] + 0.3).unwrap();
        let v = grid_minimizer_verdict(&a, &z, Tau::Auto, None, None).unwrap();
        assert_eq!(v.route, Route::NegligibleSingularSet);
    }

    #[test]
    fn polyline_csv() {
        let mut buf = Vec::new();
        write_polylines(&mut buf, &[vec![vec![0.0, 1.0], vec![2.0, 3.0]], vec![vec![1.0, 1.0, 1.0]]]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let blocks: Vec<&str> = s.split("\n\n").collect();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1].trim().split(',').count(), 3);
    }
}
