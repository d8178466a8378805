//! Masked uniform grids over rectangles, balls and annuli.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;

/// Largest node count a grid may have.
pub const MAX_NODES: usize = 40_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum DomainSpec {
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
    Disc { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, r_inner: f64, r_outer: f64 },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball_volume(m: usize, r: f64) -> f64 {
    // V_m = 2π r²/m · V_{m−2}
    let mut v = if m % 2 == 0 { 1.0 } else { 2.0 * r };
    let mut k = if m % 2 == 0 { 2 } else { 3 };
    while k <= m {
        v *= 2.0 * std::f64::consts::PI * r * r / k as f64;
        k += 2;
    }
    v
}

impl DomainSpec {
    pub fn rectangle(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = DomainSpec::Rectangle { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn disc(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = DomainSpec::Disc { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn annulus(center: Vec<f64>, r_inner: f64, r_outer: f64) -> Result<Self> {
        let d = DomainSpec::Annulus {
            center,
            r_inner,
            r_outer,
        };
        d.validate()?;
        Ok(d)
    }

    /// The unit disc in the plane.
    pub fn unit_disc() -> Self {
        DomainSpec::Disc {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }
    }

    /// `[−a, a]²`.
    pub fn centered_square(a: f64) -> Result<Self> {
        Self::rectangle(vec![-a, -a], vec![a, a])
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            DomainSpec::Rectangle { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::Dimension(format!(
                        "rectangle corners have lengths {} and {}",
                        lo.len(),
                        hi.len()
                    )));
                }
                if !finite(lo) || !finite(hi) || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return Err(Error::Argument("rectangle needs lo < hi on every axis".into()));
                }
            }
            DomainSpec::Disc { center, radius } => {
                if center.is_empty() {
                    return Err(Error::Dimension("empty center".into()));
                }
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Argument(format!("invalid disc radius {radius}")));
                }
            }
            DomainSpec::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                if center.is_empty() {
                    return Err(Error::Dimension("empty center".into()));
                }
                if !finite(center)
                    || !(r_inner.is_finite() && r_outer.is_finite())
                    || !(*r_inner > 0.0 && r_inner < r_outer)
                {
                    return Err(Error::Argument(format!(
                        "annulus needs 0 < r_inner < r_outer, got {r_inner}, {r_outer}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Rectangle { lo, .. } => lo.len(),
            DomainSpec::Disc { center, .. } | DomainSpec::Annulus { center, .. } => center.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainSpec::Rectangle { .. } => "rectangle",
            DomainSpec::Disc { .. } => "disc",
            DomainSpec::Annulus { .. } => "annulus",
        }
    }

    /// Negative inside, positive outside, zero on the boundary.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Rectangle { lo, hi } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for i in 0..lo.len() {
                    let c = 0.5 * (lo[i] + hi[i]);
                    let q = (x[i] - c).abs() - 0.5 * (hi[i] - lo[i]);
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(0.0)
            }
            DomainSpec::Disc { center, radius } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                r - radius
            }
            DomainSpec::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                (r_inner - r).max(r - r_outer)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Closest point of `∂Ω` to `x`; at a center the `+e₁` direction is used.
    pub fn nearest_boundary_point(&self, x: &[f64]) -> Vec<f64> {
        let radial = |center: &[f64], r: f64| -> Vec<f64> {
            let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
            let n = norm(&d);
            if n == 0.0 {
                let mut p = center.to_vec();
                p[0] += r;
                p
            } else {
                center.iter().zip(&d).map(|(c, di)| c + r * di / n).collect()
            }
        };
        match self {
            DomainSpec::Rectangle { lo, hi } => {
                if self.signed_distance(x) > 0.0 {
                    return x
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| v.clamp(lo[i], hi[i]))
                        .collect();
                }
                let mut best = 0;
                let mut best_gap = f64::INFINITY;
                let mut to_hi = true;
                for i in 0..lo.len() {
                    let (gl, gh) = (x[i] - lo[i], hi[i] - x[i]);
                    if gl < best_gap {
                        best_gap = gl;
                        best = i;
                        to_hi = false;
                    }
                    if gh < best_gap {
                        best_gap = gh;
                        best = i;
                        to_hi = true;
                    }
                }
                let mut p = x.to_vec();
                p[best] = if to_hi { hi[best] } else { lo[best] };
                p
            }
            DomainSpec::Disc { center, radius } => radial(center, *radius),
            DomainSpec::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if r < 0.5 * (r_inner + r_outer) {
                    radial(center, *r_inner)
                } else {
                    radial(center, *r_outer)
                }
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Rectangle { lo, hi } => (lo.clone(), hi.clone()),
            DomainSpec::Disc { center, radius: r }
            | DomainSpec::Annulus {
                center, r_outer: r, ..
            } => (
                center.iter().map(|c| c - r).collect(),
                center.iter().map(|c| c + r).collect(),
            ),
        }
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        match self {
            DomainSpec::Rectangle { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            DomainSpec::Disc { center, radius } => ball_volume(center.len(), *radius),
            DomainSpec::Annulus {
                center,
                r_inner,
                r_outer,
            } => ball_volume(center.len(), *r_outer) - ball_volume(center.len(), *r_inner),
        }
    }

    /// Polar angle of `p` about the center, for discs and annuli in the plane.
    pub fn boundary_angle(&self, p: &[f64]) -> Option<f64> {
        match self {
            DomainSpec::Disc { center, .. } | DomainSpec::Annulus { center, .. }
                if center.len() == 2 =>
            {
                Some((p[1] - center[1]).atan2(p[0] - center[0]))
            }
            _ => None,
        }
    }
}

/// The constant `a` of a parabola `a x̃₁² − x̃₂ < 0` containing the domain in
/// the tangent frame of every boundary point, when one exists.
pub fn p_convexity_certificate(domain: &DomainSpec) -> Option<f64> {
    match domain {
        DomainSpec::Disc { radius, .. } => Some(0.5 / radius),
        DomainSpec::Annulus { .. } | DomainSpec::Rectangle { .. } => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeClass {
    Interior,
    Band,
    Exterior,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Band => "band",
            NodeClass::Exterior => "exterior",
        }
    }
}

/// Node geometry shared by every grid function on the same mesh.
#[derive(Debug)]
pub struct GridLayout {
    domain: DomainSpec,
    h: f64,
    lo: Vec<i64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    class: Vec<NodeClass>,
    weight: Vec<f64>,
    interior: Vec<usize>,
    band: Vec<usize>,
    band_target: Vec<f64>,
    unknown: Vec<usize>,
}

impl GridLayout {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn dim(&self) -> usize {
        self.shape.len()
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn len(&self) -> usize {
        self.class.len()
    }
    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }
    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }
    pub fn band(&self) -> &[usize] {
        &self.band
    }
    /// Cell volume `h^m`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }
    /// Fraction of the node's dual cell `x ± h/2` lying in the domain.
    pub fn weight(&self, idx: usize) -> f64 {
        self.weight[idx]
    }
    /// Position of an interior node in the unknown vector.
    pub fn unknown_index(&self, idx: usize) -> Option<usize> {
        let k = self.unknown[idx];
        (k != usize::MAX).then_some(k)
    }
    /// Nearest boundary point of the `k`-th band node.
    pub fn band_target(&self, k: usize) -> &[f64] {
        let m = self.dim();
        &self.band_target[k * m..(k + 1) * m]
    }

    pub fn multi_index(&self, idx: usize) -> Vec<i64> {
        let mut rest = idx;
        let mut out = vec![0; self.dim()];
        for (i, s) in self.strides.iter().enumerate() {
            out[i] = (rest / s) as i64;
            rest %= s;
        }
        out
    }

    pub fn flat_index(&self, multi: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for i in 0..self.dim() {
            if multi[i] < 0 || multi[i] >= self.shape[i] as i64 {
                return None;
            }
            idx += multi[i] as usize * self.strides[i];
        }
        Some(idx)
    }

    pub fn coords_into(&self, idx: usize, out: &mut [f64]) {
        let mut rest = idx;
        for (i, s) in self.strides.iter().enumerate() {
            out[i] = (self.lo[i] + (rest / s) as i64) as f64 * self.h;
            rest %= s;
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords_into(idx, &mut out);
        out
    }

    /// Neighbor `step` nodes away along `axis`, if inside the node box.
    pub fn neighbor(&self, idx: usize, axis: usize, step: i64) -> Option<usize> {
        let pos = ((idx / self.strides[axis]) % self.shape[axis]) as i64 + step;
        if pos < 0 || pos >= self.shape[axis] as i64 {
            None
        } else {
            Some((idx as i64 + step * self.strides[axis] as i64) as usize)
        }
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Node closest to `x`, if `x` lies within the node box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let multi: Vec<i64> = (0..self.dim())
            .map(|i| (x[i] / self.h).round() as i64 - self.lo[i])
            .collect();
        self.flat_index(&multi)
    }

    fn same(&self, other: &GridLayout) -> bool {
        self.h == other.h && self.lo == other.lo && self.shape == other.shape && self.domain == other.domain
    }
}

fn dual_cell_fraction(domain: &DomainSpec, x: &[f64], h: f64) -> f64 {
    let m = x.len();
    let sd = domain.signed_distance(x);
    let half_diag = 0.5 * h * (m as f64).sqrt();
    if sd <= -half_diag {
        return 1.0;
    }
    if sd >= half_diag {
        return 0.0;
    }
    let sub: usize = match m {
        1 => 64,
        2 => 16,
        3 => 6,
        _ => 4,
    };
    let total = sub.pow(m as u32);
    let mut p = vec![0.0; m];
    let mut inside = 0usize;
    for k in 0..total {
        let mut rest = k;
        for (i, pi) in p.iter_mut().enumerate() {
            let j = rest % sub;
            rest /= sub;
            *pi = x[i] + h * ((j as f64 + 0.5) / sub as f64 - 0.5);
        }
        if domain.signed_distance(&p) < 0.0 {
            inside += 1;
        }
    }
    inside as f64 / total as f64
}

/// Builds the node layout for `domain` at spacing `h`. Nodes sit at integer
/// multiples of `h`; interior nodes are strictly inside, band nodes are the
/// remaining nodes in the `3^m` box neighborhood of an interior node.
pub fn build_layout(domain: &DomainSpec, h: f64) -> Result<Arc<GridLayout>> {
    domain.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Argument(format!("spacing must be positive, got {h}")));
    }
    let m = domain.dim();
    let (bl, bh) = domain.bounding_box();
    let lo: Vec<i64> = bl.iter().map(|a| (a / h).floor() as i64 - 1).collect();
    let hi: Vec<i64> = bh.iter().map(|b| (b / h).ceil() as i64 + 1).collect();
    let shape: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
    let total = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    let total = match total {
        Some(t) if t <= MAX_NODES => t,
        _ => {
            return Err(Error::Resolution(format!(
                "spacing {h} needs more than {MAX_NODES} nodes"
            )))
        }
    };
    let mut strides = vec![1usize; m];
    for i in (0..m.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let mut layout = GridLayout {
        domain: domain.clone(),
        h,
        lo,
        shape,
        strides,
        class: vec![NodeClass::Exterior; total],
        weight: vec![0.0; total],
        interior: Vec::new(),
        band: Vec::new(),
        band_target: Vec::new(),
        unknown: vec![usize::MAX; total],
    };
    let mut x = vec![0.0; m];
    for idx in 0..total {
        layout.coords_into(idx, &mut x);
        if domain.signed_distance(&x) < 0.0 {
            layout.class[idx] = NodeClass::Interior;
        }
    }
    let offsets = box_offsets(m);
    let interior_flags: Vec<bool> = layout.class.iter().map(|c| *c == NodeClass::Interior).collect();
    for idx in 0..total {
        if !interior_flags[idx] {
            continue;
        }
        let base = layout.multi_index(idx);
        for off in &offsets {
            let nb: Vec<i64> = base.iter().zip(off).map(|(b, o)| b + o).collect();
            if let Some(j) = layout.flat_index(&nb) {
                if !interior_flags[j] {
                    layout.class[j] = NodeClass::Band;
                }
            }
        }
    }
    for idx in 0..total {
        match layout.class[idx] {
            NodeClass::Interior => {
                layout.unknown[idx] = layout.interior.len();
                layout.interior.push(idx);
            }
            NodeClass::Band => {
                layout.band.push(idx);
                layout.coords_into(idx, &mut x);
                layout.band_target.extend(domain.nearest_boundary_point(&x));
            }
            NodeClass::Exterior => {}
        }
        if layout.class[idx] != NodeClass::Exterior {
            layout.coords_into(idx, &mut x);
            layout.weight[idx] = dual_cell_fraction(domain, &x, h);
        }
    }
    if layout.interior.is_empty() {
        return Err(Error::Resolution(format!(
            "spacing {h} leaves no interior node in the {}",
            domain.name()
        )));
    }
    Ok(Arc::new(layout))
}

/// All offsets in `{−1, 0, 1}^m` except zero.
pub(crate) fn box_offsets(m: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for k in 0..3usize.pow(m as u32) {
        let mut rest = k;
        let off: Vec<i64> = (0..m)
            .map(|_| {
                let d = (rest % 3) as i64 - 1;
                rest /= 3;
                d
            })
            .collect();
        if off.iter().any(|&d| d != 0) {
            out.push(off);
        }
    }
    out
}

/// A grid function: values over the nodes of a shared layout.
#[derive(Clone)]
pub struct ScalarFieldGrid {
    layout: Arc<GridLayout>,
    values: Vec<f64>,
}

impl fmt::Debug for ScalarFieldGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFieldGrid")
            .field("h", &self.layout.h)
            .field("shape", &self.layout.shape)
            .field("interior", &self.layout.interior.len())
            .finish()
    }
}

/// Zero-initialized grid over `domain` at spacing `h`.
pub fn build_grid(domain: &DomainSpec, h: f64) -> Result<ScalarFieldGrid> {
    Ok(ScalarFieldGrid::zeros(build_layout(domain, h)?))
}

impl ScalarFieldGrid {
    pub fn zeros(layout: Arc<GridLayout>) -> Self {
        let n = layout.len();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    /// Samples `f` at every interior and band node.
    pub fn sample<F: Fn(&[f64]) -> f64>(layout: Arc<GridLayout>, f: F) -> Result<Self> {
        let mut g = Self::zeros(layout);
        let mut x = vec![0.0; g.dim()];
        for idx in 0..g.values.len() {
            if g.layout.class[idx] == NodeClass::Exterior {
                continue;
            }
            g.layout.coords_into(idx, &mut x);
            let v = f(&x);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    point: x.clone(),
                    reason: "non-finite sample".into(),
                });
            }
            g.values[idx] = v;
        }
        Ok(g)
    }

    pub fn layout(&self) -> &Arc<GridLayout> {
        &self.layout
    }
    pub fn h(&self) -> f64 {
        self.layout.h
    }
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }
    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn same_layout(&self, other: &ScalarFieldGrid) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout.same(&other.layout)
    }

    pub fn check_same_layout(&self, other: &ScalarFieldGrid) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "spacing {} / {} or node boxes differ",
                self.h(),
                other.h()
            )))
        }
    }

    fn require_interior(&self, idx: usize) -> Result<()> {
        match self.layout.class.get(idx) {
            Some(NodeClass::Interior) => Ok(()),
            Some(c) => Err(Error::Classification {
                index: idx,
                class: c.as_str(),
            }),
            None => Err(Error::Argument(format!("node {idx} out of range"))),
        }
    }

    /// `∂_i u` at a node: central where both neighbors carry values, one-sided
    /// otherwise.
    pub fn partial(&self, idx: usize, axis: usize) -> f64 {
        let h = self.layout.h;
        let valid = |j: Option<usize>| j.filter(|&j| self.layout.class[j] != NodeClass::Exterior);
        let fwd = valid(self.layout.neighbor(idx, axis, 1));
        let bwd = valid(self.layout.neighbor(idx, axis, -1));
        match (fwd, bwd) {
            (Some(f), Some(b)) => (self.values[f] - self.values[b]) / (2.0 * h),
            (Some(f), None) => (self.values[f] - self.values[idx]) / h,
            (None, Some(b)) => (self.values[idx] - self.values[b]) / h,
            (None, None) => 0.0,
        }
    }

    /// Writes `∇u + F` at any node into `out`.
    pub fn augmented_gradient_into(&self, field: &VectorFieldSpec, idx: usize, x: &mut [f64], out: &mut [f64]) {
        self.layout.coords_into(idx, x);
        field.value_into(x, out);
        for (axis, o) in out.iter_mut().enumerate() {
            *o += self.partial(idx, axis);
        }
    }

    /// `∇u + F` at an interior node.
    pub fn gradient(&self, field: &VectorFieldSpec, idx: usize) -> Result<Vec<f64>> {
        self.require_interior(idx)?;
        if field.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "field in R^{} on a grid in R^{}",
                field.dim(),
                self.dim()
            )));
        }
        let x = self.layout.coords(idx);
        let mut out = field.value(&x)?;
        for (axis, o) in out.iter_mut().enumerate() {
            *o += self.partial(idx, axis);
        }
        Ok(out)
    }

    /// Lexicographic CSV dump of all non-exterior nodes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.dim();
        let header: Vec<String> = (1..=m).map(|i| format!("x_{i}")).collect();
        writeln!(w, "{},class,value", header.join(","))?;
        let mut x = vec![0.0; m];
        for idx in 0..self.values.len() {
            let c = self.layout.class[idx];
            if c == NodeClass::Exterior {
                continue;
            }
            self.layout.coords_into(idx, &mut x);
            for xi in &x {
                write!(w, "{xi},")?;
            }
            writeln!(w, "{},{}", c.as_str(), self.values[idx])?;
        }
        Ok(())
    }

    pub fn sup_norm_interior(&self) -> f64 {
        self.layout
            .interior
            .iter()
            .map(|&i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm_band(&self) -> f64 {
        self.layout
            .band
            .iter()
            .map(|&i| self.values[i].abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C2,
}

#[derive(Clone)]
enum BoundaryEval {
    Angular(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Point(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

/// Dirichlet data on `∂Ω`, either as a function of the polar angle (discs and
/// annuli) or of the boundary point.
#[derive(Clone)]
pub struct BoundaryData {
    eval: BoundaryEval,
    pub smoothness: Smoothness,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.eval {
            BoundaryEval::Angular(_) => "angular",
            BoundaryEval::Point(_) => "point",
        };
        write!(f, "BoundaryData({kind}, {:?})", self.smoothness)
    }
}

impl BoundaryData {
    pub fn angular(f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, smoothness: Smoothness) -> Self {
        Self {
            eval: BoundaryEval::Angular(f),
            smoothness,
        }
    }

    pub fn point(f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, smoothness: Smoothness) -> Self {
        Self {
            eval: BoundaryEval::Point(f),
            smoothness,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::point(Arc::new(move |_| c), Smoothness::C2)
    }

    /// Value at the boundary point `p` of `domain`.
    pub fn eval_at(&self, domain: &DomainSpec, p: &[f64]) -> Result<f64> {
        let v = match &self.eval {
            BoundaryEval::Point(f) => f(p),
            BoundaryEval::Angular(f) => {
                let th = domain.boundary_angle(p).ok_or_else(|| {
                    Error::Argument(format!(
                        "angular boundary data needs a planar disc or annulus, got a {}",
                        domain.name()
                    ))
                })?;
                f(th)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                point: p.to_vec(),
                reason: "non-finite boundary value".into(),
            })
        }
    }

    /// Largest `|φ(θ + 2π) − φ(θ)|` over `samples` equispaced angles.
    pub fn periodicity_defect(&self, samples: usize) -> Option<f64> {
        match &self.eval {
            BoundaryEval::Angular(f) => Some(
                (0..samples)
                    .map(|k| {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                        (f(th + 2.0 * std::f64::consts::PI) - f(th)).abs()
                    })
                    .fold(0.0, f64::max),
            ),
            BoundaryEval::Point(_) => None,
        }
    }
}

/// Pins every band node to `σ φ` at its nearest boundary point.
pub fn apply_boundary(u: &mut ScalarFieldGrid, data: &BoundaryData, sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Argument(format!("scale must lie in [0,1], got {sigma}")));
    }
    let layout = u.layout.clone();
    for (k, &idx) in layout.band.iter().enumerate() {
        u.values[idx] = sigma * data.eval_at(&layout.domain, layout.band_target(k))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_quarter_spacing_has_three_by_three_interior() {
        let g = build_grid(&DomainSpec::rectangle(vec![0.0; 2], vec![1.0; 2]).unwrap(), 0.25).unwrap();
        assert_eq!(g.layout().interior().len(), 9);
        for &i in g.layout().interior() {
            for axis in 0..2 {
                for s in [-1, 1] {
                    let j = g.layout().neighbor(i, axis, s).unwrap();
                    assert_ne!(g.layout().class(j), NodeClass::Exterior);
                }
            }
        }
    }

    #[test]
    fn coarse_disc_contains_origin() {
        let g = build_grid(&DomainSpec::unit_disc(), 0.5).unwrap();
        let o = g.layout().nearest_node(&[0.0, 0.0]).unwrap();
        assert_eq!(g.layout().class(o), NodeClass::Interior);
        assert_eq!(g.layout().coords(o), vec![0.0, 0.0]);
    }

    #[test]
    fn annulus_mask_excludes_hole() {
        let d = DomainSpec::annulus(vec![0.0, 0.0], 1.0, 2.0).unwrap();
        let g = build_grid(&d, 0.125).unwrap();
        for &i in g.layout().interior() {
            assert!(norm(&g.layout().coords(i)) > 1.0);
        }
        assert!(DomainSpec::annulus(vec![0.0, 0.0], 2.0, 1.0).is_err());
    }

    #[test]
    fn band_nodes_are_close_to_boundary() {
        for d in [
            DomainSpec::unit_disc(),
            DomainSpec::annulus(vec![0.1, 0.0], 0.5, 1.5).unwrap(),
            DomainSpec::rectangle(vec![-1.0, 0.0], vec![1.0, 0.7]).unwrap(),
        ] {
            let h = 1.0 / 16.0;
            let g = build_grid(&d, h).unwrap();
            for &i in g.layout().band() {
                let sd = d.signed_distance(&g.layout().coords(i));
                assert!(sd >= 0.0 && sd <= h * 2f64.sqrt() + 1e-12, "{sd}");
            }
        }
    }

    #[test]
    fn refinement_keeps_interior_nodes_interior() {
        let d = DomainSpec::unit_disc();
        let coarse = build_grid(&d, 0.125).unwrap();
        let fine = build_grid(&d, 0.0625).unwrap();
        for &i in coarse.layout().interior() {
            let j = fine.layout().nearest_node(&coarse.layout().coords(i)).unwrap();
            assert_eq!(fine.layout().class(j), NodeClass::Interior);
        }
    }

    #[test]
    fn empty_interior_is_a_resolution_error() {
        let d = DomainSpec::disc(vec![0.3, 0.3], 0.1).unwrap();
        assert!(matches!(build_grid(&d, 1.0), Err(Error::Resolution(_))));
        assert!(matches!(build_grid(&d, -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn quadrature_weights_integrate_area() {
        let d = DomainSpec::unit_disc();
        let g = build_grid(&d, 1.0 / 64.0).unwrap();
        let l = g.layout();
        let area: f64 = (0..l.len()).map(|i| l.weight(i)).sum::<f64>() * l.cell_volume();
        assert!((area - std::f64::consts::PI).abs() < 1e-3, "{area}");
    }

    #[test]
    fn boundary_application() {
        let d = DomainSpec::unit_disc();
        let mut g = build_grid(&d, 1.0 / 16.0).unwrap();
        apply_boundary(&mut g, &BoundaryData::constant(2.0), 0.0).unwrap();
        assert_eq!(g.sup_norm_band(), 0.0);
        apply_boundary(&mut g, &BoundaryData::constant(2.0), 0.5).unwrap();
        assert!(g.layout().band().iter().all(|&i| g.value(i) == 1.0));
        assert_eq!(g.sup_norm_interior(), 0.0);
        let rho = BoundaryData::angular(
            Arc::new(|t: f64| t.cos().powi(2) + t.cos() * t.sin()),
            Smoothness::C2,
        );
        apply_boundary(&mut g, &rho, 1.0).unwrap();
        let once = g.values().to_vec();
        apply_boundary(&mut g, &rho, 1.0).unwrap();
        assert_eq!(once, g.values());
        let east = g.layout().nearest_node(&[1.0, 0.0]).unwrap();
        assert_eq!(g.layout().class(east), NodeClass::Band);
        assert!((g.value(east) - 1.0).abs() < 1e-15);
        assert!(rho.periodicity_defect(64).unwrap() <= 1e-12);
        assert!(apply_boundary(&mut g, &rho, 1.5).is_err());
    }

    #[test]
    fn central_differences_are_exact_on_quadratics() {
        let d = DomainSpec::unit_disc();
        let l = build_layout(&d, 1.0 / 32.0).unwrap();
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        let u = ScalarFieldGrid::sample(l.clone(), |x| x[0] * x[0] + x[0] * x[1]).unwrap();
        let node = l.nearest_node(&[0.5, 0.0]).unwrap();
        let g = u.gradient(&f, node).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
        for &i in l.interior().iter().step_by(97) {
            let x = l.coords(i);
            let g = u.gradient(&f, i).unwrap();
            assert!((g[0] - 2.0 * x[0]).abs() < 1e-12 && (g[1] - 2.0 * x[0]).abs() < 1e-12);
        }
        let z = VectorFieldSpec::zero(2).unwrap();
        let lin = ScalarFieldGrid::sample(l.clone(), |x| 3.0 * x[0] - 0.5 * x[1]).unwrap();
        let g = lin.gradient(&z, node).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
        let band = l.band()[0];
        assert!(matches!(u.gradient(&f, band), Err(Error::Classification { .. })));
    }

    #[test]
    fn signed_distance_and_projection() {
        let r = DomainSpec::rectangle(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert!((r.signed_distance(&[1.0, 0.5]) + 0.5).abs() < 1e-15);
        assert!((r.signed_distance(&[3.0, 2.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.nearest_boundary_point(&[1.9, 0.5]), vec![2.0, 0.5]);
        assert_eq!(r.nearest_boundary_point(&[3.0, -1.0]), vec![2.0, 0.0]);
        let a = DomainSpec::annulus(vec![0.0, 0.0], 1.0, 2.0).unwrap();
        assert_eq!(a.nearest_boundary_point(&[1.2, 0.0]), vec![1.0, 0.0]);
        assert!((a.volume() - 3.0 * std::f64::consts::PI).abs() < 1e-12);
        let b3 = DomainSpec::disc(vec![0.0; 3], 1.0).unwrap();
        assert!((b3.volume() - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn p_convexity() {
        assert_eq!(p_convexity_certificate(&DomainSpec::unit_disc()), Some(0.5));
        let a = DomainSpec::annulus(vec![0.0, 0.0], 1.0, 2.0).unwrap();
        assert_eq!(p_convexity_certificate(&a), None);
        assert_eq!(p_convexity_certificate(&DomainSpec::centered_square(1.0).unwrap()), None);
        // a x² − y < 0 holds on the unit disc in the tangent frame at its
        // lowest point, shifted so that point is the origin.
        let a = 0.5;
        let worst = (1..1000)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 1000.0;
                a * t.cos().powi(2) - (t.sin() + 1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-12);
    }

    #[test]
    fn csv_header_and_rows() {
        let g = build_grid(&DomainSpec::rectangle(vec![0.0; 2], vec![1.0; 2]).unwrap(), 0.25).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x_1,x_2,class,value"));
        assert_eq!(lines.count(), 25);
    }
}
