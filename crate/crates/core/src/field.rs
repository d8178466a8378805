//! Perturbation vector fields `F`, the curvature datum `H`, and the algebra
//! built on the twist matrix `∂_J F_I − ∂_I F_J`.
//!
//! The p-area integrand is `|∇u + F|`; for the Heisenberg group with its
//! standard contact form the field is `F = (−x₂, x₁, −x₄, x₃, …)`, i.e.
//! `F = (−y, x)` in the plane.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Writes a vector (or a row-major `m×m` matrix) evaluated at a point.
pub type PointFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Scalar evaluator on `R^m`.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Relative singular-value cutoff used for numerical ranks.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-9;

#[derive(Clone)]
pub enum FieldKind {
    /// `F = −X*`, defined for even dimension only.
    StandardContact,
    /// `F_I = ∂_I g + ½ Σ_K C_IK x_K` with `C` skew. `gradient` writes `∇g`,
    /// `hessian` writes the row-major Hessian of `g`.
    GradientPlusLinear {
        gradient: PointFn,
        hessian: PointFn,
        skew: Vec<f64>,
    },
    Zero,
    /// User field; `jacobian` writes `∂_J F_I` at row `I`, column `J`.
    Custom { value: PointFn, jacobian: PointFn },
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::StandardContact => write!(f, "StandardContact"),
            FieldKind::GradientPlusLinear { skew, .. } => {
                write!(f, "GradientPlusLinear {{ skew: {skew:?} }}")
            }
            FieldKind::Zero => write!(f, "Zero"),
            FieldKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// An analytic perturbation field on `R^m`. Immutable once built.
#[derive(Clone, Debug)]
pub struct VectorFieldSpec {
    dim: usize,
    kind: FieldKind,
}

impl VectorFieldSpec {
    pub fn standard_contact(dim: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::Dimension(format!(
                "standard contact field needs a positive even dimension, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            kind: FieldKind::StandardContact,
        })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: FieldKind::Zero,
        })
    }

    /// `F = ∇g + ½ C x`. Rejects `C` unless `C_IJ = −C_JI` holds exactly.
    pub fn gradient_plus_linear(
        dim: usize,
        gradient: PointFn,
        hessian: PointFn,
        skew: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || skew.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "skew matrix must be {dim}x{dim}, got {} entries",
                skew.len()
            )));
        }
        for i in 0..dim {
            for j in 0..dim {
                if skew[i * dim + j] != -skew[j * dim + i] {
                    return Err(Error::Argument(format!(
                        "matrix is not skew-symmetric at ({i},{j}): {} vs {}",
                        skew[i * dim + j],
                        skew[j * dim + i]
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            kind: FieldKind::GradientPlusLinear {
                gradient,
                hessian,
                skew,
            },
        })
    }

    pub fn custom(dim: usize, value: PointFn, jacobian: PointFn) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: FieldKind::Custom { value, jacobian },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FieldKind::StandardContact => "standard-contact",
            FieldKind::GradientPlusLinear { .. } => "gradient-plus-linear",
            FieldKind::Zero => "zero",
            FieldKind::Custom { .. } => "custom",
        }
    }

    /// True when `F` is affine in `x`, which lets flux integrals along cell
    /// faces be evaluated in closed form.
    pub fn is_affine(&self) -> bool {
        matches!(self.kind, FieldKind::StandardContact | FieldKind::Zero)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, field lives in R^{}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Writes `F(x)` into `out` without allocating. No finiteness check.
    #[inline]
    pub fn value_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            FieldKind::StandardContact => {
                for j in (0..self.dim).step_by(2) {
                    out[j] = -x[j + 1];
                    out[j + 1] = x[j];
                }
            }
            FieldKind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            FieldKind::GradientPlusLinear {
                gradient, skew, ..
            } => {
                gradient(x, out);
                let m = self.dim;
                for i in 0..m {
                    let mut acc = 0.0;
                    for k in 0..m {
                        acc += skew[i * m + k] * x[k];
                    }
                    out[i] += 0.5 * acc;
                }
            }
            FieldKind::Custom { value, .. } => value(x, out),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim];
        self.value_into(x, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                point: x.to_vec(),
                reason: "non-finite field value".into(),
            });
        }
        Ok(out)
    }

    /// Row-major Jacobian, entry `(I, J)` holding `∂_J F_I`.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim;
        match &self.kind {
            FieldKind::StandardContact => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for j in (0..m).step_by(2) {
                    out[j * m + j + 1] = -1.0;
                    out[(j + 1) * m + j] = 1.0;
                }
            }
            FieldKind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            FieldKind::GradientPlusLinear { hessian, skew, .. } => {
                hessian(x, out);
                for (o, c) in out.iter_mut().zip(skew) {
                    *o += 0.5 * c;
                }
            }
            FieldKind::Custom { jacobian, .. } => jacobian(x, out),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim * self.dim];
        self.jacobian_into(x, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                point: x.to_vec(),
                reason: "non-finite Jacobian entry".into(),
            });
        }
        Ok(out)
    }

    /// Frobenius norm of `∂F` at `x`; the local slope estimate behind the
    /// default singular-set threshold.
    pub fn jacobian_norm(&self, x: &[f64]) -> f64 {
        match self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::StandardContact => (self.dim as f64).sqrt(),
            _ => {
                let mut jac = vec![0.0; self.dim * self.dim];
                self.jacobian_into(x, &mut jac);
                jac.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    }
}

/// The scalar datum `H` of the functional `∫ |∇u + F| + H u`.
#[derive(Clone)]
pub struct CurvatureSpec {
    eval: ScalarFn,
    bound: f64,
    zero: bool,
}

impl fmt::Debug for CurvatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurvatureSpec")
            .field("bound", &self.bound)
            .field("zero", &self.zero)
            .finish()
    }
}

impl CurvatureSpec {
    pub fn zero() -> Self {
        Self {
            eval: Arc::new(|_| 0.0),
            bound: 0.0,
            zero: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            eval: Arc::new(move |_| c),
            bound: c.abs(),
            zero: c == 0.0,
        }
    }

    /// `bound` is the caller's estimate of `sup |H|` on the domain.
    pub fn custom(eval: ScalarFn, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::Argument(format!("invalid curvature bound {bound}")));
        }
        Ok(Self {
            eval,
            bound,
            zero: false,
        })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Checks the declared bound against samples; returns the sampled sup.
    pub fn check_bound<'a, I>(&self, points: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut sup = 0.0f64;
        for p in points {
            let v = self.eval(p);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    point: p.to_vec(),
                    reason: "non-finite curvature".into(),
                });
            }
            sup = sup.max(v.abs());
        }
        if sup > self.bound {
            return Err(Error::Argument(format!(
                "declared bound {} is below sampled sup |H| = {sup}",
                self.bound
            )));
        }
        Ok(sup)
    }
}

/// `h_JI = ∂_J F_I − ∂_I F_J` at a point, stored row-major with `h_JI` at
/// row `J`, column `I`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwistMatrix {
    pub dim: usize,
    pub entries: Vec<f64>,
    pub rank_tolerance: f64,
}

impl TwistMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    /// Largest `|h + hᵀ|` entry; zero up to rounding for any twist matrix.
    pub fn skew_defect(&self) -> f64 {
        let m = self.dim;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `(g₁, g₂, …) ↦ (g₂, −g₁, g₄, −g₃, …)`.
pub fn star(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() % 2 != 0 {
        return Err(Error::Dimension(format!(
            "star needs an even-length vector, got length {}",
            v.len()
        )));
    }
    let mut out = vec![0.0; v.len()];
    for j in (0..v.len()).step_by(2) {
        out[j] = v[j + 1];
        out[j + 1] = -v[j];
    }
    Ok(out)
}

pub fn twist_matrix(spec: &VectorFieldSpec, x: &[f64]) -> Result<TwistMatrix> {
    let m = spec.dim();
    let jac = spec.jacobian(x)?;
    let mut entries = vec![0.0; m * m];
    for j in 0..m {
        for i in 0..m {
            // ∂_J F_I − ∂_I F_J
            entries[j * m + i] = jac[i * m + j] - jac[j * m + i];
        }
    }
    Ok(TwistMatrix {
        dim: m,
        entries,
        rank_tolerance: DEFAULT_RANK_TOLERANCE,
    })
}

/// Numerical rank: singular values above `rank_tolerance · σ_max`.
pub fn twist_rank(tm: &TwistMatrix) -> usize {
    let m = tm.dim;
    if m == 0 {
        return 0;
    }
    let mat = DMatrix::from_row_slice(m, m, &tm.entries);
    let sv = mat.singular_values();
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tm.rank_tolerance * smax).count()
}

/// `m − ⌊(rank + 1)/2⌋`, the bound on the Euclidean dimension of the
/// singular set near `x`.
pub fn singular_dim_bound(spec: &VectorFieldSpec, x: &[f64]) -> Result<usize> {
    let rank = twist_rank(&twist_matrix(spec, x)?);
    Ok(spec.dim() - (rank + 1) / 2)
}

/// True iff `⌊(rank + 1)/2⌋ ≥ 2` at every sample point, the condition under
/// which `C²` solutions are automatically minimizers.
pub fn check_theorem_e_condition(spec: &VectorFieldSpec, samples: &[Vec<f64>]) -> Result<bool> {
    if samples.is_empty() {
        return Err(Error::Argument("no sample points given".into()));
    }
    for x in samples {
        let rank = twist_rank(&twist_matrix(spec, x)?);
        if (rank + 1) / 2 < 2 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `div F*` from the Jacobian, even dimension only.
pub fn div_f_star(spec: &VectorFieldSpec, x: &[f64]) -> Result<f64> {
    let m = spec.dim();
    if m % 2 != 0 {
        return Err(Error::Dimension(format!(
            "div F* is defined for even dimension, got {m}"
        )));
    }
    let jac = spec.jacobian(x)?;
    let mut div = 0.0;
    for j in (0..m).step_by(2) {
        // F*_j = F_{j+1}, F*_{j+1} = −F_j
        div += jac[(j + 1) * m + j] - jac[j * m + j + 1];
    }
    Ok(div)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(spec: &VectorFieldSpec, x: &[f64]) -> Vec<f64> {
        let m = spec.dim();
        let step = 1e-6;
        let mut out = vec![0.0; m * m];
        for j in 0..m {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += step;
            xm[j] -= step;
            let fp = spec.value(&xp).unwrap();
            let fm = spec.value(&xm).unwrap();
            for i in 0..m {
                out[i * m + j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        out
    }

    fn trig_field() -> VectorFieldSpec {
        VectorFieldSpec::custom(
            2,
            Arc::new(|x, o| {
                o[0] = x[0].cos() * x[1].sin();
                o[1] = x[0].sin() * x[1].cos();
            }),
            Arc::new(|x, o| {
                o[0] = -x[0].sin() * x[1].sin();
                o[1] = x[0].cos() * x[1].cos();
                o[2] = x[0].cos() * x[1].cos();
                o[3] = -x[0].sin() * x[1].sin();
            }),
        )
        .unwrap()
    }

    fn quadratic_g_field(skew: Vec<f64>) -> Result<VectorFieldSpec> {
        // g = x0² x1 + sin(x1)
        VectorFieldSpec::gradient_plus_linear(
            2,
            Arc::new(|x, o| {
                o[0] = 2.0 * x[0] * x[1];
                o[1] = x[0] * x[0] + x[1].cos();
            }),
            Arc::new(|x, o| {
                o[0] = 2.0 * x[1];
                o[1] = 2.0 * x[0];
                o[2] = 2.0 * x[0];
                o[3] = -x[1].sin();
            }),
            skew,
        )
    }

    #[test]
    fn star_examples() {
        assert_eq!(star(&[1.0, 2.0]).unwrap(), vec![2.0, -1.0]);
        assert_eq!(star(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        let twice = star(&star(&[3.0, -5.0]).unwrap()).unwrap();
        assert_eq!(twice, vec![-3.0, 5.0]);
        assert!(matches!(star(&[1.0, 2.0, 3.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn planar_contact_field_is_minus_x_star() {
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        assert_eq!(f.value(&[0.3, -0.7]).unwrap(), vec![0.7, 0.3]);
        assert!(VectorFieldSpec::standard_contact(3).is_err());
    }

    #[test]
    fn twist_of_standard_contact() {
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        let tm = twist_matrix(&f, &[0.4, 1.1]).unwrap();
        assert_eq!(tm.entries, vec![0.0, 2.0, -2.0, 0.0]);
        assert_eq!(twist_rank(&tm), 2);
        let f4 = VectorFieldSpec::standard_contact(4).unwrap();
        let tm4 = twist_matrix(&f4, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(twist_rank(&tm4), 4);
        let z = VectorFieldSpec::zero(3).unwrap();
        let tz = twist_matrix(&z, &[0.0, 1.0, 2.0]).unwrap();
        assert!(tz.entries.iter().all(|&e| e == 0.0));
        assert_eq!(twist_rank(&tz), 0);
    }

    #[test]
    fn gradient_plus_linear_twist_is_the_skew_part() {
        let c = vec![0.0, 1.5, -1.5, 0.0];
        let f = quadratic_g_field(c.clone()).unwrap();
        for x in [[0.2, 0.3], [-1.0, 4.0], [3.0, -2.5]] {
            let tm = twist_matrix(&f, &x).unwrap();
            // row J, column I holds C_IJ
            for j in 0..2 {
                for i in 0..2 {
                    assert!((tm.get(j, i) - c[i * 2 + j]).abs() < 1e-12);
                }
            }
        }
        assert!(quadratic_g_field(vec![0.0, 1.0, -0.5, 0.0]).is_err());
    }

    #[test]
    fn dimension_bounds() {
        let f2 = VectorFieldSpec::standard_contact(2).unwrap();
        let f4 = VectorFieldSpec::standard_contact(4).unwrap();
        let z = VectorFieldSpec::zero(5).unwrap();
        assert_eq!(singular_dim_bound(&f2, &[0.0, 0.0]).unwrap(), 1);
        assert_eq!(singular_dim_bound(&f4, &[0.0; 4]).unwrap(), 2);
        assert_eq!(singular_dim_bound(&z, &[0.0; 5]).unwrap(), 5);
    }

    #[test]
    fn theorem_e_condition() {
        let pts2 = vec![vec![0.1, 0.2], vec![1.0, -1.0]];
        let pts4 = vec![vec![0.1, 0.2, 0.3, 0.4]];
        let f2 = VectorFieldSpec::standard_contact(2).unwrap();
        let f4 = VectorFieldSpec::standard_contact(4).unwrap();
        assert!(!check_theorem_e_condition(&f2, &pts2).unwrap());
        assert!(check_theorem_e_condition(&f4, &pts4).unwrap());
        let z = VectorFieldSpec::zero(4).unwrap();
        assert!(!check_theorem_e_condition(&z, &pts4).unwrap());
        assert!(check_theorem_e_condition(&f2, &[]).is_err());
    }

    #[test]
    fn div_of_starred_field() {
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        assert_eq!(div_f_star(&f, &[0.3, 0.9]).unwrap(), 2.0);
        let z = VectorFieldSpec::zero(2).unwrap();
        assert_eq!(div_f_star(&z, &[0.3, 0.9]).unwrap(), 0.0);
        let t = trig_field();
        for x in [[0.1, 0.7], [2.0, -1.3]] {
            assert!(div_f_star(&t, &x).unwrap().abs() < 1e-15);
        }
        let odd = VectorFieldSpec::zero(3).unwrap();
        assert!(div_f_star(&odd, &[0.0; 3]).is_err());
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let fields = vec![
            VectorFieldSpec::standard_contact(4).unwrap(),
            trig_field(),
            quadratic_g_field(vec![0.0, -2.0, 2.0, 0.0]).unwrap(),
        ];
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for f in &fields {
            for _ in 0..20 {
                let x: Vec<f64> = (0..f.dim()).map(|_| next()).collect();
                let a = f.jacobian(&x).unwrap();
                let d = fd_jacobian(f, &x);
                for (p, q) in a.iter().zip(&d) {
                    assert!((p - q).abs() <= 1e-6 * (1.0 + p.abs()), "{p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn curvature_bound_check() {
        let h = CurvatureSpec::custom(Arc::new(|x| x[0]), 1.0).unwrap();
        let pts = [vec![0.5, 0.0], vec![-0.9, 1.0]];
        assert!((h.check_bound(pts.iter().map(|p| p.as_slice())).unwrap() - 0.9).abs() < 1e-15);
        let bad = [vec![2.0, 0.0]];
        assert!(h.check_bound(bad.iter().map(|p| p.as_slice())).is_err());
    }
}
