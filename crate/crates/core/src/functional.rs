//! The p-area functional on grids: quadrature, first variation, singular
//! sets and the weak-solution test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{CurvatureSpec, VectorFieldSpec};
use crate::grid::{GridLayout, NodeClass, ScalarFieldGrid};
use crate::quadrature::{pairwise_sum, GL5_NODES, GL5_WEIGHTS};

/// Threshold below which `|∇u + F|` counts as singular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tau {
    /// `4h(1 + |∂F(x)|)`.
    Auto,
    Fixed(f64),
}

impl Default for Tau {
    fn default() -> Self {
        Tau::Auto
    }
}

impl Tau {
    pub fn at(&self, h: f64, field: &VectorFieldSpec, x: &[f64]) -> f64 {
        match *self {
            Tau::Auto => 4.0 * h * (1.0 + field.jacobian_norm(x)),
            Tau::Fixed(t) => t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Tau::Fixed(t) if !(t.is_finite() && t > 0.0) => {
                Err(Error::Argument(format!("singular threshold must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

fn check_field(u: &ScalarFieldGrid, field: &VectorFieldSpec) -> Result<()> {
    if u.dim() != field.dim() {
        return Err(Error::Dimension(format!(
            "field in R^{} on a grid in R^{}",
            field.dim(),
            u.dim()
        )));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Nodes carrying quadrature weight, in node order.
fn weighted_nodes(layout: &GridLayout) -> impl Iterator<Item = usize> + '_ {
    (0..layout.len()).filter(move |&i| layout.class(i) != NodeClass::Exterior && layout.weight(i) > 0.0)
}

/// `Σ w h^m f(node)` over weighted nodes, with pairwise summation.
fn node_quadrature<G: FnMut(usize, &[f64], &[f64]) -> f64>(
    u: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    mut g: G,
) -> f64 {
    let layout = u.layout();
    let m = u.dim();
    let mut x = vec![0.0; m];
    let mut p = vec![0.0; m];
    let terms: Vec<f64> = weighted_nodes(layout)
        .map(|i| {
            u.augmented_gradient_into(field, i, &mut x, &mut p);
            layout.weight(i) * g(i, &x, &p)
        })
        .collect();
    pairwise_sum(&terms) * layout.cell_volume()
}

/// `∫ |∇u + F| + H u`. Each node contributes its dual-cell volume inside
/// the domain.
pub fn p_area(u: &ScalarFieldGrid, field: &VectorFieldSpec, curvature: &CurvatureSpec) -> Result<f64> {
    check_field(u, field)?;
    let zero_h = curvature.is_zero();
    Ok(node_quadrature(u, field, |i, x, p| {
        let hu = if zero_h { 0.0 } else { curvature.eval(x) * u.value(i) };
        norm(p) + hu
    }))
}

/// `∫ √(ε² + |∇u + F|²)`.
pub fn regularized_area(u: &ScalarFieldGrid, field: &VectorFieldSpec, eps: f64) -> Result<f64> {
    check_field(u, field)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("regularization must be nonnegative, got {eps}")));
    }
    let e2 = eps * eps;
    Ok(node_quadrature(u, field, |_, _, p| {
        (e2 + p.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }))
}

/// `(∇u + F)/|∇u + F|` at an interior node, or `None` on the singular set.
pub fn legendrian_normal(
    u: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    node: usize,
    tau: Tau,
) -> Result<Option<Vec<f64>>> {
    tau.validate()?;
    let p = u.gradient(field, node)?;
    let n = norm(&p);
    let t = tau.at(u.h(), field, &u.layout().coords(node));
    if n < t || n == 0.0 {
        return Ok(None);
    }
    Ok(Some(p.iter().map(|v| v / n).collect()))
}

/// Total-least-squares line through a planar point cloud.
#[derive(Clone, Debug, Serialize)]
pub struct LineFit {
    pub centroid: [f64; 2],
    pub direction: [f64; 2],
    /// Root-mean-square distance of the points to the line.
    pub rms_residual: f64,
    pub max_residual: f64,
    /// Extent of the projections onto the line.
    pub length: f64,
}

pub fn fit_line(points: &[[f64; 2]]) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // principal axis of the scatter matrix
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = [angle.cos(), angle.sin()];
    let (mut ss, mut worst, mut tmin, mut tmax) = (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        let d = (-dir[1] * dx + dir[0] * dy).abs();
        let t = dir[0] * dx + dir[1] * dy;
        ss += d * d;
        worst = worst.max(d);
        tmin = tmin.min(t);
        tmax = tmax.max(t);
    }
    Some(LineFit {
        centroid: [cx, cy],
        direction: dir,
        rms_residual: (ss / n).sqrt(),
        max_residual: worst,
        length: tmax - tmin,
    })
}

/// Nodes where `|∇u + F|` falls below the threshold, grouped into
/// components under axis-neighbor adjacency.
#[derive(Clone, Debug, Serialize)]
pub struct SingularSet {
    pub nodes: Vec<usize>,
    pub components: Vec<Vec<usize>>,
    /// Planar grids only.
    pub fits: Vec<Option<LineFit>>,
    /// Node count times `h^m`.
    pub measure: f64,
    pub tau_max: f64,
}

impl SingularSet {
    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest distance between two nodes of a component.
    pub fn component_diameter(&self, layout: &GridLayout, k: usize) -> f64 {
        let pts: Vec<Vec<f64>> = self.components[k].iter().map(|&i| layout.coords(i)).collect();
        let mut d = 0.0f64;
        for a in &pts {
            for b in &pts {
                d = d.max(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
            }
        }
        d
    }
}

fn singular_flags(u: &ScalarFieldGrid, field: &VectorFieldSpec, tau: Tau) -> (Vec<bool>, f64) {
    let layout = u.layout();
    let m = u.dim();
    let mut flags = vec![false; layout.len()];
    let mut x = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut tau_max = 0.0f64;
    for &i in layout.interior() {
        u.augmented_gradient_into(field, i, &mut x, &mut p);
        let t = tau.at(layout.h(), field, &x);
        tau_max = tau_max.max(t);
        if norm(&p) < t {
            flags[i] = true;
        }
    }
    (flags, tau_max)
}

pub fn singular_set(u: &ScalarFieldGrid, field: &VectorFieldSpec, tau: Tau) -> Result<SingularSet> {
    check_field(u, field)?;
    tau.validate()?;
    let layout = u.layout();
    let m = u.dim();
    let (flags, tau_max) = singular_flags(u, field, tau);
    let nodes: Vec<usize> = (0..flags.len()).filter(|&i| flags[i]).collect();
    let mut seen = vec![false; flags.len()];
    let mut components = Vec::new();
    for &start in &nodes {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let i = comp[head];
            head += 1;
            for axis in 0..m {
                for step in [-1, 1] {
                    if let Some(j) = layout.neighbor(i, axis, step) {
                        if flags[j] && !seen[j] {
                            seen[j] = true;
                            comp.push(j);
                        }
                    }
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    let fits = components
        .iter()
        .map(|c| {
            if m != 2 {
                return None;
            }
            let pts: Vec<[f64; 2]> = c
                .iter()
                .map(|&i| {
                    let x = layout.coords(i);
                    [x[0], x[1]]
                })
                .collect();
            fit_line(&pts)
        })
        .collect();
    Ok(SingularSet {
        measure: nodes.len() as f64 * layout.cell_volume(),
        nodes,
        components,
        fits,
        tau_max,
    })
}

/// One-sided derivatives of `ε ↦ ∫ |∇(u + εφ) + F| + H(u + εφ)` at `ε = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub right_limit: f64,
    pub left_limit: f64,
    pub singular_term: f64,
    pub bulk_term: f64,
    pub curvature_term: f64,
}

fn check_test_function(u: &ScalarFieldGrid, phi: &ScalarFieldGrid) -> Result<()> {
    u.check_same_layout(phi)?;
    let layout = phi.layout();
    let scale = layout
        .interior()
        .iter()
        .map(|&i| phi.value(i).abs())
        .fold(0.0, f64::max);
    if layout.band().iter().any(|&i| phi.value(i).abs() > 1e-14 * scale.max(1.0)) {
        return Err(Error::Argument("test function must vanish on the boundary band".into()));
    }
    Ok(())
}

fn variation_terms(
    u: &ScalarFieldGrid,
    phi: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    curvature: &CurvatureSpec,
    singular: &[bool],
) -> (f64, f64, f64) {
    let layout = u.layout();
    let m = u.dim();
    let mut x = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut sing = Vec::new();
    let mut bulk = Vec::new();
    let mut curv = Vec::new();
    for i in weighted_nodes(layout) {
        let w = layout.weight(i);
        let gphi: Vec<f64> = (0..m).map(|a| phi.partial(i, a)).collect();
        if !curvature.is_zero() {
            layout.coords_into(i, &mut x);
            curv.push(w * curvature.eval(&x) * phi.value(i));
        }
        if gphi.iter().all(|&g| g == 0.0) {
            continue;
        }
        if singular[i] {
            sing.push(w * norm(&gphi));
        } else {
            u.augmented_gradient_into(field, i, &mut x, &mut p);
            let n = norm(&p);
            if n > 0.0 {
                bulk.push(w * p.iter().zip(&gphi).map(|(a, b)| a * b).sum::<f64>() / n);
            } else {
                sing.push(w * norm(&gphi));
            }
        }
    }
    let hm = layout.cell_volume();
    (pairwise_sum(&sing) * hm, pairwise_sum(&bulk) * hm, pairwise_sum(&curv) * hm)
}

pub fn first_variation(
    u: &ScalarFieldGrid,
    phi: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    curvature: &CurvatureSpec,
    tau: Tau,
) -> Result<VariationReport> {
    check_field(u, field)?;
    tau.validate()?;
    check_test_function(u, phi)?;
    let (flags, _) = singular_flags(u, field, tau);
    let (s, b, c) = variation_terms(u, phi, field, curvature, &flags);
    Ok(VariationReport {
        right_limit: s + b + c,
        left_limit: -s + b + c,
        singular_term: s,
        bulk_term: b,
        curvature_term: c,
    })
}

/// Largest violation of `∫_S |∇φ| + ∫_{Ω∖S} N·∇φ + ∫ Hφ ≥ 0` over the test
/// functions and their negatives. Zero means no violation was found.
pub fn weak_solution_residual(
    u: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    curvature: &CurvatureSpec,
    tau: Tau,
    bumps: &[ScalarFieldGrid],
) -> Result<f64> {
    check_field(u, field)?;
    tau.validate()?;
    if bumps.is_empty() {
        return Err(Error::Argument("empty test-function family".into()));
    }
    let (flags, _) = singular_flags(u, field, tau);
    let mut worst = 0.0f64;
    for phi in bumps {
        check_test_function(u, phi)?;
        let (s, b, c) = variation_terms(u, phi, field, curvature, &flags);
        worst = worst.max(-(s + b + c)).max(-(s - b - c));
    }
    Ok(worst)
}

/// Tensor bump `Π (1 − s_i²)³`, `s = (x − c)/r`, supported in the box of
/// half-width `r` about `c`. Errors when the support leaves the domain.
pub fn bump(layout: &Arc<GridLayout>, center: &[f64], radius: f64) -> Result<ScalarFieldGrid> {
    if center.len() != layout.dim() || !(radius > 0.0) {
        return Err(Error::Argument("bad bump center or radius".into()));
    }
    let m = layout.dim() as f64;
    let reach = layout.domain().signed_distance(center) + radius * m.sqrt();
    if reach > -layout.h() {
        return Err(Error::Argument(format!(
            "bump at {center:?} with radius {radius} is not compactly supported in the domain"
        )));
    }
    ScalarFieldGrid::sample(layout.clone(), |x| {
        let mut v = 1.0;
        for (xi, ci) in x.iter().zip(center) {
            let s = (xi - ci) / radius;
            if s.abs() >= 1.0 {
                return 0.0;
            }
            v *= (1.0 - s * s).powi(3);
        }
        v
    })
}

/// `count` random bumps plus, for each requested center, the largest bump
/// (up to `max_radius`) that fits there.
pub fn bump_family(
    layout: &Arc<GridLayout>,
    count: usize,
    seed: u64,
    centers: &[Vec<f64>],
    radius_range: (f64, f64),
) -> Result<Vec<ScalarFieldGrid>> {
    let (rmin, rmax) = radius_range;
    if !(rmin > 0.0 && rmax >= rmin) {
        return Err(Error::Argument(format!("bad radius range {radius_range:?}")));
    }
    let m = layout.dim();
    let sq = (m as f64).sqrt();
    let margin = 2.0 * layout.h();
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = layout.domain().bounding_box();
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 * count.max(1) {
            return Err(Error::Argument("no room for random bumps in the domain".into()));
        }
        let c: Vec<f64> = (0..m).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
        let r = rng.gen_range(rmin..=rmax);
        if layout.domain().signed_distance(&c) + r * sq + margin < 0.0 {
            out.push(bump(layout, &c, r)?);
        }
    }
    for c in centers {
        let room = -(layout.domain().signed_distance(c) + margin) / sq;
        let r = rmax.min(room);
        if r >= rmin.min(4.0 * layout.h()) && r > 0.0 {
            out.push(bump(layout, c, r)?);
        }
    }
    Ok(out)
}

/// `((N_ε(u) − N_ε(v))·(∇u − ∇v), ½(α + β)|N_ε(u) − N_ε(v)|²)` with
/// `N_ε(u) = (∇u + F)/α`, `α = |(ε, ∇u + F)|`, likewise for `v` with `β`.
pub fn monotone_pair_inequality(gu: &[f64], gv: &[f64], fx: &[f64], eps: f64) -> Result<(f64, f64)> {
    if gu.len() != gv.len() || gu.len() != fx.len() {
        return Err(Error::Dimension("vectors of different lengths".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("regularization must be nonnegative, got {eps}")));
    }
    let pu: Vec<f64> = gu.iter().zip(fx).map(|(a, f)| a + f).collect();
    let pv: Vec<f64> = gv.iter().zip(fx).map(|(a, f)| a + f).collect();
    let alpha = (eps * eps + pu.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let beta = (eps * eps + pv.iter().map(|x| x * x).sum::<f64>()).sqrt();
    if alpha == 0.0 || beta == 0.0 {
        return Err(Error::Singular("augmented gradient vanishes at ε = 0".into()));
    }
    let mut lhs = 0.0;
    let mut dn2 = 0.0;
    for i in 0..gu.len() {
        let dn = pu[i] / alpha - pv[i] / beta;
        lhs += dn * (gu[i] - gv[i]);
        dn2 += dn * dn;
    }
    Ok((lhs, 0.5 * (alpha + beta) * dn2))
}

/// Outcome of checking that `S(u + ε₁φ)` and `S(u + ε₂φ)` share no node
/// where `∇φ ≠ 0`.
#[derive(Clone, Debug, Serialize)]
pub struct OverlapReport {
    pub overlap: Vec<usize>,
    /// `min |∇φ|` over nodes with `∇φ ≠ 0`.
    pub min_grad_phi: f64,
    /// `τ < |ε₁ − ε₂| min |∇φ|`.
    pub stated_condition: bool,
    /// `2τ ≤ |ε₁ − ε₂| min |∇φ|`, which forces disjointness.
    pub sufficient_condition: bool,
}

/// Singular sets of two members of the family `u + εφ`, restricted to
/// `{∇φ ≠ 0}`, at a fixed threshold.
pub fn singular_overlap(
    u: &ScalarFieldGrid,
    phi: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    eps1: f64,
    eps2: f64,
    tau: f64,
) -> Result<OverlapReport> {
    check_field(u, field)?;
    u.check_same_layout(phi)?;
    let layout = u.layout();
    let m = u.dim();
    let mut x = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut overlap = Vec::new();
    let mut min_grad = f64::INFINITY;
    for &i in layout.interior() {
        let g: Vec<f64> = (0..m).map(|a| phi.partial(i, a)).collect();
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        min_grad = min_grad.min(norm(&g));
        u.augmented_gradient_into(field, i, &mut x, &mut p);
        let n1 = norm(&p.iter().zip(&g).map(|(a, b)| a + eps1 * b).collect::<Vec<_>>());
        let n2 = norm(&p.iter().zip(&g).map(|(a, b)| a + eps2 * b).collect::<Vec<_>>());
        if n1 < tau && n2 < tau {
            overlap.push(i);
        }
    }
    let gap = (eps1 - eps2).abs() * min_grad;
    Ok(OverlapReport {
        overlap,
        min_grad_phi: min_grad,
        stated_condition: tau < gap,
        sufficient_condition: 2.0 * tau <= gap,
    })
}

/// `∫_{Ω∖S} N(u)·∇φ` with `N` taken on the nodes where `|∇u + F| ≥ τ`.
pub fn bulk_term(u: &ScalarFieldGrid, phi: &ScalarFieldGrid, field: &VectorFieldSpec, tau: Tau) -> Result<f64> {
    Ok(first_variation(u, phi, field, &CurvatureSpec::zero(), tau)?.bulk_term)
}

/// `∫_0^1 p(t)/|p(t)| dt` for `p(t) = p0 + t(p1 − p0)` in the plane.
fn mean_unit_along_segment(p0: [f64; 2], p1: [f64; 2]) -> [f64; 2] {
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let scale = (p0[0].hypot(p0[1])).max(p1[0].hypot(p1[1]));
    if dn <= 1e-7 * scale {
        // nearly constant: Gauss–Legendre on the exact integrand
        let mut acc = [0.0; 2];
        for (s, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            let t = 0.5 * (s + 1.0);
            let q = [p0[0] + t * d[0], p0[1] + t * d[1]];
            let n = q[0].hypot(q[1]);
            if n > 0.0 {
                acc[0] += 0.5 * w * q[0] / n;
                acc[1] += 0.5 * w * q[1] / n;
            }
        }
        return acc;
    }
    let e = [d[0] / dn, d[1] / dn];
    let perp = [-e[1], e[0]];
    let c = p0[0] * perp[0] + p0[1] * perp[1];
    let w0 = p0[0] * e[0] + p0[1] * e[1];
    let w1 = w0 + dn;
    let along = (p1[0].hypot(p1[1]) - p0[0].hypot(p0[1])) / dn;
    let across = if c == 0.0 {
        0.0
    } else {
        c.signum() * ((w1 / c.abs()).asinh() - (w0 / c.abs()).asinh()) / dn * c.abs()
    };
    [along * e[0] + across * perp[0], along * e[1] + across * perp[1]]
}

/// Finite-volume residual of `div N(u) = 0` at every interior node of a
/// planar grid: the net flux of `N` through the node's dual cell, divided
/// by `h²`. `∇u` at dual-cell corners comes from the surrounding 2×2 block
/// and is interpolated linearly along each face; the face integral of `N`
/// is then evaluated exactly when `F` is affine and by five-point
/// Gauss–Legendre otherwise. Returns `(node, residual)` pairs.
pub fn flux_residual(u: &ScalarFieldGrid, field: &VectorFieldSpec) -> Result<Vec<(usize, f64)>> {
    check_field(u, field)?;
    if u.dim() != 2 {
        return Err(Error::Dimension("flux residual is implemented for planar grids".into()));
    }
    let layout = u.layout();
    let h = layout.h();
    let affine = field.is_affine();
    let (sx, sy) = (layout.stride(0), layout.stride(1));
    let mut out = Vec::with_capacity(layout.interior().len());
    let mut f = [0.0; 2];
    for &i in layout.interior() {
        let x = layout.coords(i);
        // corners (±h/2, ±h/2) of the dual cell, as offsets in half-steps
        let corner_grad = |ox: i64, oy: i64| -> [f64; 2] {
            // lower-left node of the 2x2 block around the corner
            let bx = if ox > 0 { 0 } else { -1 };
            let by = if oy > 0 { 0 } else { -1 };
            let base = (i as i64 + bx * sx as i64 + by * sy as i64) as usize;
            let u00 = u.value(base);
            let u10 = u.value(base + sx);
            let u01 = u.value(base + sy);
            let u11 = u.value(base + sx + sy);
            [
                ((u10 - u00) + (u11 - u01)) / (2.0 * h),
                ((u01 - u00) + (u11 - u10)) / (2.0 * h),
            ]
        };
        let corners = [(1, -1), (1, 1), (-1, 1), (-1, -1)];
        let grads: Vec<[f64; 2]> = corners.iter().map(|&(a, b)| corner_grad(a, b)).collect();
        let cpos: Vec<[f64; 2]> = corners
            .iter()
            .map(|&(a, b)| [x[0] + 0.5 * h * a as f64, x[1] + 0.5 * h * b as f64])
            .collect();
        // faces east, north, west, south as corner pairs, with outward normals
        let faces = [(0usize, 1usize, [1.0, 0.0]), (1, 2, [0.0, 1.0]), (2, 3, [-1.0, 0.0]), (3, 0, [0.0, -1.0])];
        let mut total = 0.0;
        for &(a, b, n) in &faces {
            let mean = if affine {
                field.value_into(&cpos[a], &mut f);
                let pa = [grads[a][0] + f[0], grads[a][1] + f[1]];
                field.value_into(&cpos[b], &mut f);
                let pb = [grads[b][0] + f[0], grads[b][1] + f[1]];
                mean_unit_along_segment(pa, pb)
            } else {
                let mut acc = [0.0; 2];
                for (s, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
                    let t = 0.5 * (s + 1.0);
                    let q = [
                        cpos[a][0] + t * (cpos[b][0] - cpos[a][0]),
                        cpos[a][1] + t * (cpos[b][1] - cpos[a][1]),
                    ];
                    field.value_into(&q, &mut f);
                    let p = [
                        grads[a][0] + t * (grads[b][0] - grads[a][0]) + f[0],
                        grads[a][1] + t * (grads[b][1] - grads[a][1]) + f[1],
                    ];
                    let pn = p[0].hypot(p[1]);
                    if pn > 0.0 {
                        acc[0] += 0.5 * w * p[0] / pn;
                        acc[1] += 0.5 * w * p[1] / pn;
                    }
                }
                acc
            };
            total += h * (mean[0] * n[0] + mean[1] * n[1]);
        }
        out.push((i, total / (h * h)));
    }
    Ok(out)
}
