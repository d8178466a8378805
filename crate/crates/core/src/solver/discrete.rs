//! Discrete regularized energy
//! `E(u) = Σ_simplex w √(ε² + |g + σF|²) + Σ_node c u`
//! over corner simplices of the grid cells, with its gradient and Hessian.
//!
//! Every cell contributes `2^m` corner simplices, one per corner, each
//! spanned by the corner and its `m` axis neighbors inside the cell and
//! weighted `h^m / 2^m`. On a simplex `g` is the exact gradient of the
//! linear interpolant and `F` is sampled at the centroid.

use std::sync::Arc;

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Col, Side};

use crate::error::{Error, Result};
use crate::field::{CurvatureSpec, VectorFieldSpec};
use crate::grid::{GridLayout, NodeClass};
use crate::quadrature::pairwise_sum;

const NO_SLOT: u32 = u32::MAX;

pub(crate) struct Discretization {
    pub layout: Arc<GridLayout>,
    m: usize,
    n_unknowns: usize,
    nodes: Vec<usize>,
    signs: Vec<f64>,
    f: Vec<f64>,
    weight: f64,
    linear: Vec<f64>,
    pairs: Vec<Pair<usize, usize>>,
    slots: Vec<u32>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    llt_symbolic: SymbolicLlt<usize>,
}

impl Discretization {
    pub fn new(layout: Arc<GridLayout>, field: &VectorFieldSpec, curvature: &CurvatureSpec) -> Result<Self> {
        let m = layout.dim();
        if field.dim() != m {
            return Err(Error::Dimension(format!("field in R^{} on a grid in R^{m}", field.dim())));
        }
        let h = layout.h();
        let corners = 1usize << m;
        let mut nodes = Vec::new();
        let mut signs = Vec::new();
        let mut f = Vec::new();
        let mut x = vec![0.0; m];
        let mut fx = vec![0.0; m];
        let mut cell = vec![0usize; corners];
        for c in 0..layout.len() {
            // `c` is the lowest corner of the cell
            let mut ok = true;
            for (k, slot) in cell.iter_mut().enumerate() {
                let mut idx = c;
                for axis in 0..m {
                    if k >> axis & 1 == 1 {
                        match layout.neighbor(idx, axis, 1) {
                            Some(j) => idx = j,
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                }
                if !ok {
                    break;
                }
                *slot = idx;
            }
            if !ok {
                continue;
            }
            if cell.iter().any(|&i| layout.class(i) == NodeClass::Exterior)
                || !cell.iter().any(|&i| layout.class(i) == NodeClass::Interior)
            {
                continue;
            }
            for (k, &base) in cell.iter().enumerate() {
                nodes.push(base);
                layout.coords_into(base, &mut x);
                for axis in 0..m {
                    let s = if k >> axis & 1 == 0 { 1.0 } else { -1.0 };
                    nodes.push(cell[k ^ (1 << axis)]);
                    signs.push(s);
                    x[axis] += s * h / (m as f64 + 1.0);
                }
                field.value_into(&x, &mut fx);
                if fx.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Evaluation {
                        point: x.clone(),
                        reason: "non-finite field value".into(),
                    });
                }
                f.extend_from_slice(&fx);
            }
        }
        let n_unknowns = layout.interior().len();
        let hm = layout.cell_volume();
        let mut linear = vec![0.0; n_unknowns];
        if !curvature.is_zero() {
            for (k, &i) in layout.interior().iter().enumerate() {
                layout.coords_into(i, &mut x);
                let v = curvature.eval(&x);
                if !v.is_finite() {
                    return Err(Error::Evaluation {
                        point: x.clone(),
                        reason: "non-finite curvature".into(),
                    });
                }
                linear[k] = hm * layout.weight(i) * v;
            }
        }
        // sparsity: lower triangle of every simplex block
        let loc = m + 1;
        let ns = nodes.len() / loc;
        let mut pairs = Vec::new();
        let mut slots = vec![NO_SLOT; ns * loc * loc];
        for s in 0..ns {
            for a in 0..loc {
                let ka = match layout.unknown_index(nodes[s * loc + a]) {
                    Some(k) => k,
                    None => continue,
                };
                for b in 0..loc {
                    let kb = match layout.unknown_index(nodes[s * loc + b]) {
                        Some(k) => k,
                        None => continue,
                    };
                    if ka >= kb {
                        slots[(s * loc + a) * loc + b] = pairs.len() as u32;
                        pairs.push(Pair { row: ka, col: kb });
                    }
                }
            }
        }
        if pairs.len() >= NO_SLOT as usize {
            return Err(Error::Resolution("too many matrix entries".into()));
        }
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n_unknowns, n_unknowns, &pairs)
            .map_err(|e| Error::Resolution(format!("sparsity pattern: {e:?}")))?;
        let llt_symbolic = SymbolicLlt::try_new(symbolic.as_ref(), Side::Lower)
            .map_err(|e| Error::Resolution(format!("symbolic factorization: {e:?}")))?;
        Ok(Self {
            weight: hm / corners as f64,
            layout,
            m,
            n_unknowns,
            nodes,
            signs,
            f,
            linear,
            pairs,
            slots,
            symbolic,
            argsort,
            llt_symbolic,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn n_simplices(&self) -> usize {
        self.nodes.len() / (self.m + 1)
    }

    /// `q = g + σF` on simplex `s`.
    #[inline]
    fn augmented(&self, s: usize, u: &[f64], sigma: f64, q: &mut [f64]) {
        let m = self.m;
        let loc = m + 1;
        let h = self.layout.h();
        let base = u[self.nodes[s * loc]];
        for i in 0..m {
            q[i] = self.signs[s * m + i] * (u[self.nodes[s * loc + 1 + i]] - base) / h + sigma * self.f[s * m + i];
        }
    }

    fn linear_term(&self, u: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .layout
            .interior()
            .iter()
            .zip(&self.linear)
            .map(|(&i, c)| c * u[i])
            .collect();
        pairwise_sum(&terms)
    }

    pub fn energy(&self, u: &[f64], eps: f64, sigma: f64) -> f64 {
        let e2 = eps * eps;
        let mut q = vec![0.0; self.m];
        let terms: Vec<f64> = (0..self.n_simplices())
            .map(|s| {
                self.augmented(s, u, sigma, &mut q);
                (e2 + q.iter().map(|v| v * v).sum::<f64>()).sqrt()
            })
            .collect();
        self.weight * pairwise_sum(&terms) + self.linear_term(u)
    }

    /// Energy and its gradient with respect to the unknowns.
    pub fn energy_and_gradient(&self, u: &[f64], eps: f64, sigma: f64) -> (f64, Vec<f64>) {
        let m = self.m;
        let loc = m + 1;
        let h = self.layout.h();
        let e2 = eps * eps;
        let mut grad = self.linear.clone();
        let mut q = vec![0.0; m];
        let mut terms = Vec::with_capacity(self.n_simplices());
        for s in 0..self.n_simplices() {
            self.augmented(s, u, sigma, &mut q);
            let len = (e2 + q.iter().map(|v| v * v).sum::<f64>()).sqrt();
            terms.push(len);
            let scale = self.weight / (len * h);
            let mut base_acc = 0.0;
            for i in 0..m {
                let c = scale * self.signs[s * m + i] * q[i];
                base_acc -= c;
                if let Some(k) = self.layout.unknown_index(self.nodes[s * loc + 1 + i]) {
                    grad[k] += c;
                }
            }
            if let Some(k) = self.layout.unknown_index(self.nodes[s * loc]) {
                grad[k] += base_acc;
            }
        }
        (self.weight * pairwise_sum(&terms) + self.linear_term(u), grad)
    }

    /// Lower-triangle Hessian values aligned with the sparsity pairs.
    pub fn hessian_values(&self, u: &[f64], eps: f64, sigma: f64) -> Vec<f64> {
        let m = self.m;
        let loc = m + 1;
        let h = self.layout.h();
        let e2 = eps * eps;
        let mut vals = vec![0.0; self.pairs.len()];
        let mut q = vec![0.0; m];
        let mut a = vec![0.0; m * m];
        // D maps local node values to the simplex gradient
        let mut d = vec![0.0; m * loc];
        let mut ad = vec![0.0; m * loc];
        for s in 0..self.n_simplices() {
            self.augmented(s, u, sigma, &mut q);
            let len2 = e2 + q.iter().map(|v| v * v).sum::<f64>();
            let len = len2.sqrt();
            for i in 0..m {
                for j in 0..m {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    a[i * m + j] = (delta - q[i] * q[j] / len2) / len;
                }
            }
            d.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..m {
                let sg = self.signs[s * m + i] / h;
                d[i * loc] = -sg;
                d[i * loc + 1 + i] = sg;
            }
            for i in 0..m {
                for b in 0..loc {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += a[i * m + j] * d[j * loc + b];
                    }
                    ad[i * loc + b] = acc;
                }
            }
            for p in 0..loc {
                for b in 0..loc {
                    let slot = self.slots[(s * loc + p) * loc + b];
                    if slot == NO_SLOT {
                        continue;
                    }
                    let mut acc = 0.0;
                    for i in 0..m {
                        acc += d[i * loc + p] * ad[i * loc + b];
                    }
                    vals[slot as usize] += self.weight * acc;
                }
            }
        }
        vals
    }

    /// `y = A x` for the symmetric matrix whose lower triangle is `vals`.
    pub fn sym_matvec(&self, vals: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (p, v) in self.pairs.iter().zip(vals) {
            y[p.row] += v * x[p.col];
            if p.row != p.col {
                y[p.col] += v * x[p.row];
            }
        }
        y
    }

    /// Solves `A x = b` by sparse Cholesky; on a failed factorization the
    /// diagonal is shifted and the factorization retried.
    pub fn solve(&self, vals: &[f64], rhs: &[f64], linear_tol: f64) -> Result<Vec<f64>> {
        let diag_scale = self
            .pairs
            .iter()
            .zip(vals)
            .filter(|(p, _)| p.row == p.col)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
        let mut shift = 0.0;
        for _attempt in 0..6 {
            let shifted: Vec<f64>;
            let vals_used = if shift > 0.0 {
                shifted = self
                    .pairs
                    .iter()
                    .zip(vals)
                    .map(|(p, v)| if p.row == p.col { v + shift } else { *v })
                    .collect();
                &shifted[..]
            } else {
                vals
            };
            let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, vals_used)
                .map_err(|e| Error::Resolution(format!("matrix assembly: {e:?}")))?;
            match Llt::try_new_with_symbolic(self.llt_symbolic.clone(), mat.as_ref(), Side::Lower) {
                Ok(llt) => {
                    let b = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
                    let mut x: Vec<f64> = {
                        use faer::prelude::Solve;
                        let sol = llt.solve(&b);
                        (0..rhs.len()).map(|i| sol[i]).collect()
                    };
                    // one step of iterative refinement against the unshifted matrix
                    let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let ax = self.sym_matvec(vals, &x);
                    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if bn > 0.0 && rn > linear_tol * bn {
                        use faer::prelude::Solve;
                        let rc = Col::<f64>::from_fn(r.len(), |i| r[i]);
                        let dx = llt.solve(&rc);
                        for (i, xi) in x.iter_mut().enumerate() {
                            *xi += dx[i];
                        }
                    }
                    return Ok(x);
                }
                Err(_) => {
                    shift = if shift == 0.0 { 1e-12 * diag_scale.max(1e-300) } else { shift * 100.0 };
                }
            }
        }
        Err(Error::Singular("Hessian factorization failed after diagonal shifts".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_layout, DomainSpec, ScalarFieldGrid};

    fn setup() -> (Discretization, Vec<f64>) {
        let l = build_layout(&DomainSpec::unit_disc(), 0.25).unwrap();
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        let d = Discretization::new(l.clone(), &f, &CurvatureSpec::constant(0.3)).unwrap();
        let u = ScalarFieldGrid::sample(l, |x| (3.0 * x[0]).sin() + x[1] * x[0] * x[0]).unwrap();
        (d, u.values().to_vec())
    }

    #[test]
    fn gradient_matches_energy_differences() {
        let (d, u) = setup();
        let (eps, sigma) = (0.3, 0.8);
        let (_, g) = d.energy_and_gradient(&u, eps, sigma);
        let step = 1e-6;
        for (k, &node) in d.layout.interior().iter().enumerate() {
            let mut up = u.clone();
            let mut um = u.clone();
            up[node] += step;
            um[node] -= step;
            let fd = (d.energy(&up, eps, sigma) - d.energy(&um, eps, sigma)) / (2.0 * step);
            assert!((fd - g[k]).abs() < 1e-7, "{fd} {}", g[k]);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (d, u) = setup();
        let (eps, sigma) = (0.3, 1.0);
        let vals = d.hessian_values(&u, eps, sigma);
        let n = d.n_unknowns();
        let step = 1e-6;
        for k in (0..n).step_by(3) {
            let node = d.layout.interior()[k];
            let mut up = u.clone();
            let mut um = u.clone();
            up[node] += step;
            um[node] -= step;
            let (_, gp) = d.energy_and_gradient(&up, eps, sigma);
            let (_, gm) = d.energy_and_gradient(&um, eps, sigma);
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let col = d.sym_matvec(&vals, &e);
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * step);
                assert!((fd - col[j]).abs() < 1e-6, "({j},{k}) {fd} {}", col[j]);
            }
        }
    }

    #[test]
    fn cholesky_solves_the_hessian_system() {
        let (d, u) = setup();
        let vals = d.hessian_values(&u, 0.05, 1.0);
        let n = d.n_unknowns();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let x = d.solve(&vals, &b, 1e-12).unwrap();
        let ax = d.sym_matvec(&vals, &x);
        let err = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}
