//! Regularized Dirichlet problems `div N_ε(u) = H`, solved by damped Newton
//! iteration on the discrete energy with σ- and ε-continuation.

mod discrete;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CurvatureSpec, VectorFieldSpec};
use crate::functional::{p_area, regularized_area, Tau};
use crate::grid::{apply_boundary, build_layout, BoundaryData, DomainSpec, GridLayout, ScalarFieldGrid};

pub(crate) use discrete::Discretization;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Strictly decreasing positive regularization parameters.
    pub epsilon_schedule: Vec<f64>,
    /// Increasing boundary/field scales ending at 1, used only when the
    /// first solve from a zero interior fails.
    pub sigma_schedule: Vec<f64>,
    pub newton_max_iters: usize,
    /// Sup-norm of the discrete residual of `Q_ε u − H`.
    pub newton_tol: f64,
    /// Step reduction factor in the backtracking line search.
    pub damping: f64,
    /// Relative residual above which a linear solve is refined once.
    pub linear_tol: f64,
    pub tau_sing: Tau,
    /// Stop the ε schedule once consecutive p-areas differ by less than this.
    pub stop_tol: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            epsilon_schedule: (0..=10).map(|k| 0.5f64.powi(k)).collect(),
            sigma_schedule: vec![0.25, 0.5, 0.75, 1.0],
            newton_max_iters: 100,
            newton_tol: 1e-8,
            damping: 0.5,
            linear_tol: 1e-10,
            tau_sing: Tau::Auto,
            stop_tol: Some(1e-3),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let eps = &self.epsilon_schedule;
        if eps.is_empty() || eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Argument("ε schedule must be nonempty and positive".into()));
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Argument("ε schedule must be strictly decreasing".into()));
        }
        let sig = &self.sigma_schedule;
        if sig.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) || sig.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("σ schedule must increase within (0, 1]".into()));
        }
        if let Some(&last) = sig.last() {
            if last != 1.0 {
                return Err(Error::Argument("σ schedule must end at 1".into()));
            }
        }
        if self.newton_max_iters == 0 {
            return Err(Error::Argument("Newton needs at least one iteration".into()));
        }
        for (name, v) in [("newton_tol", self.newton_tol), ("linear_tol", self.linear_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Argument("damping must lie in (0, 1)".into()));
        }
        if let Some(t) = self.stop_tol {
            if !(t > 0.0) {
                return Err(Error::Argument("stop tolerance must be positive".into()));
            }
        }
        self.tau_sing.validate()
    }
}

/// Diagnostics of one Newton solve at fixed `(ε, σ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageDiagnostics {
    pub epsilon: f64,
    pub sigma: f64,
    pub iters: usize,
    pub residual: f64,
    pub sup_u: f64,
    pub sup_grad_u: f64,
    pub regularized_area: f64,
    pub p_area: f64,
    pub converged: bool,
    /// Discrete energy before the first and after every accepted step.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: ScalarFieldGrid,
    pub stages: Vec<StageDiagnostics>,
    pub converged: bool,
    /// Index into `stages` of the first non-convergent stage.
    pub failed_stage: Option<usize>,
    pub used_sigma_continuation: bool,
}

impl SolveResult {
    /// `{stages: [...], converged, failed_stage}` as JSON.
    pub fn diagnostics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stages": self.stages,
            "converged": self.converged,
            "failed_stage": self.failed_stage,
            "used_sigma_continuation": self.used_sigma_continuation,
        })
    }
}

/// The discrete problem on a fixed grid, reusable across `(ε, σ)` stages.
pub struct RegularizedProblem {
    disc: Discretization,
    field: VectorFieldSpec,
    curvature: CurvatureSpec,
}

impl RegularizedProblem {
    pub fn new(layout: Arc<GridLayout>, field: &VectorFieldSpec, curvature: &CurvatureSpec) -> Result<Self> {
        Ok(Self {
            disc: Discretization::new(layout, field, curvature)?,
            field: field.clone(),
            curvature: curvature.clone(),
        })
    }

    pub fn layout(&self) -> &Arc<GridLayout> {
        &self.disc.layout
    }

    pub fn n_unknowns(&self) -> usize {
        self.disc.n_unknowns()
    }

    /// Discrete energy of `u` (all node values, band included).
    pub fn energy(&self, u: &ScalarFieldGrid, eps: f64, sigma: f64) -> f64 {
        self.disc.energy(u.values(), eps, sigma)
    }

    /// Residual of `Q_{ε,σ} u − H` at the interior nodes, in node order.
    pub fn residual(&self, u: &ScalarFieldGrid, eps: f64, sigma: f64) -> Vec<f64> {
        let (_, g) = self.disc.energy_and_gradient(u.values(), eps, sigma);
        let hm = self.disc.layout.cell_volume();
        g.iter().map(|v| -v / hm).collect()
    }

    /// Damped Newton iteration on the energy at fixed `(ε, σ)`, starting from
    /// and overwriting the interior of `u`. Band values are left untouched.
    pub fn solve_stage(
        &self,
        u: &mut ScalarFieldGrid,
        eps: f64,
        sigma: f64,
        config: &SolveConfig,
    ) -> Result<StageDiagnostics> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Argument(format!("ε must be positive, got {eps}")));
        }
        if !Arc::ptr_eq(u.layout(), &self.disc.layout) {
            u.check_same_layout(&ScalarFieldGrid::zeros(self.disc.layout.clone()))?;
        }
        let interior = self.disc.layout.interior().to_vec();
        let hm = self.disc.layout.cell_volume();
        let sup = |g: &[f64]| g.iter().fold(0.0f64, |a, v| a.max(v.abs())) / hm;
        let mut vals = u.values().to_vec();
        let (mut energy, mut grad) = self.disc.energy_and_gradient(&vals, eps, sigma);
        let mut trace = vec![energy];
        let mut residual = sup(&grad);
        let mut iters = 0;
        let mut converged = residual <= config.newton_tol;
        while !converged && iters < config.newton_max_iters {
            iters += 1;
            let hess = self.disc.hessian_values(&vals, eps, sigma);
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let dir = self.disc.solve(&hess, &rhs, config.linear_tol)?;
            let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) {
                break;
            }
            let noise = 1e-13 * (1.0 + energy.abs());
            let mut t = 1.0;
            let mut trial = vals.clone();
            let accepted = loop {
                for (k, &node) in interior.iter().enumerate() {
                    trial[node] = vals[node] + t * dir[k];
                }
                let e = self.disc.energy(&trial, eps, sigma);
                if e <= energy + 1e-4 * t * slope + noise {
                    break true;
                }
                t *= config.damping;
                if t < 1e-12 {
                    break false;
                }
            };
            if !accepted {
                break;
            }
            vals = trial;
            let (e, g) = self.disc.energy_and_gradient(&vals, eps, sigma);
            energy = e;
            grad = g;
            trace.push(energy);
            residual = sup(&grad);
            converged = residual <= config.newton_tol;
        }
        u.values_mut().copy_from_slice(&vals);
        let sup_u = u.sup_norm_interior();
        let sup_grad_u = interior
            .iter()
            .map(|&i| (0..u.dim()).map(|a| u.partial(i, a).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(StageDiagnostics {
            epsilon: eps,
            sigma,
            iters,
            residual,
            sup_u,
            sup_grad_u,
            regularized_area: regularized_area(u, &self.field, eps)?,
            p_area: p_area(u, &self.field, &self.curvature)?,
            converged,
            energy_trace: trace,
        })
    }
}

/// One Newton solve of `Q_{ε,σ} u = H` on a grid whose band already carries
/// the boundary values. Returns the updated grid and its diagnostics.
pub fn newton_solve(
    u: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    curvature: &CurvatureSpec,
    eps: f64,
    sigma: f64,
    config: &SolveConfig,
) -> Result<(ScalarFieldGrid, StageDiagnostics)> {
    config.validate()?;
    let problem = RegularizedProblem::new(u.layout().clone(), field, curvature)?;
    let mut out = u.clone();
    let diag = problem.solve_stage(&mut out, eps, sigma, config)?;
    Ok((out, diag))
}

/// σ-continuation at the first ε when needed, then ε-continuation with warm
/// starts. A non-convergent stage ends the run with a partial result.
pub fn continuation_solve(
    domain: &DomainSpec,
    h: f64,
    field: &VectorFieldSpec,
    curvature: &CurvatureSpec,
    boundary: &BoundaryData,
    config: &SolveConfig,
) -> Result<SolveResult> {
    config.validate()?;
    let layout = build_layout(domain, h)?;
    let problem = RegularizedProblem::new(layout.clone(), field, curvature)?;
    let mut u = ScalarFieldGrid::zeros(layout);
    apply_boundary(&mut u, boundary, 1.0)?;
    let eps0 = config.epsilon_schedule[0];
    let mut stages = Vec::new();
    let mut used_sigma = false;

    let first = problem.solve_stage(&mut u, eps0, 1.0, config)?;
    let first_ok = first.converged;
    stages.push(first);
    let mut failed = None;
    if !first_ok {
        if config.sigma_schedule.is_empty() {
            failed = Some(0);
        } else {
            used_sigma = true;
            for &i in u.layout().clone().interior() {
                u.set(i, 0.0);
            }
            for &sigma in &config.sigma_schedule {
                apply_boundary(&mut u, boundary, sigma)?;
                let d = problem.solve_stage(&mut u, eps0, sigma, config)?;
                let ok = d.converged;
                stages.push(d);
                if !ok {
                    failed = Some(stages.len() - 1);
                    break;
                }
            }
        }
    }
    if failed.is_none() {
        let mut prev_area = stages.last().map(|s| s.p_area);
        for &eps in &config.epsilon_schedule[1..] {
            let d = problem.solve_stage(&mut u, eps, 1.0, config)?;
            let ok = d.converged;
            let area = d.p_area;
            stages.push(d);
            if !ok {
                failed = Some(stages.len() - 1);
                break;
            }
            if let (Some(tol), Some(prev)) = (config.stop_tol, prev_area) {
                if (area - prev).abs() < tol {
                    break;
                }
            }
            prev_area = Some(area);
        }
    }
    Ok(SolveResult {
        u,
        converged: failed.is_none(),
        failed_stage: failed,
        stages,
        used_sigma_continuation: used_sigma,
    })
}

/// Coefficients of the expanded operator `Q_{ε,σ} u = a_IJ u_IJ + b` at the
/// interior nodes, together with the discrete residual.
#[derive(Clone, Debug)]
pub struct Assembly {
    /// `Q_{ε,σ} u − H` at the interior nodes, as a grid (zero elsewhere).
    pub residual: ScalarFieldGrid,
    /// Row-major `m×m` blocks, one per interior node in node order.
    pub a: Vec<f64>,
    /// One value per interior node.
    pub b: Vec<f64>,
}

impl Assembly {
    pub fn a_at(&self, k: usize, m: usize) -> &[f64] {
        &self.a[k * m * m..(k + 1) * m * m]
    }
}

/// `a_IJ = [δ_IJ(ε² + |p|²) − p_I p_J]/(ε² + |p|²)^{3/2}` and
/// `b = σ a_IJ ∂_J F_I` with `p = ∇u + σF` from central differences.
pub fn assemble(
    u: &ScalarFieldGrid,
    field: &VectorFieldSpec,
    curvature: &CurvatureSpec,
    eps: f64,
    sigma: f64,
) -> Result<Assembly> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("ε must be positive, got {eps}")));
    }
    let layout = u.layout().clone();
    let m = u.dim();
    let problem = RegularizedProblem::new(layout.clone(), field, curvature)?;
    let res = problem.residual(u, eps, sigma);
    let mut residual = ScalarFieldGrid::zeros(layout.clone());
    for (k, &i) in layout.interior().iter().enumerate() {
        residual.set(i, res[k]);
    }
    let mut a = Vec::with_capacity(layout.interior().len() * m * m);
    let mut b = Vec::with_capacity(layout.interior().len());
    let mut x = vec![0.0; m];
    let mut f = vec![0.0; m];
    let mut jac = vec![0.0; m * m];
    for &i in layout.interior() {
        layout.coords_into(i, &mut x);
        field.value_into(&x, &mut f);
        field.jacobian_into(&x, &mut jac);
        let p: Vec<f64> = (0..m).map(|ax| u.partial(i, ax) + sigma * f[ax]).collect();
        let s2 = eps * eps + p.iter().map(|v| v * v).sum::<f64>();
        let s3 = s2 * s2.sqrt();
        let mut bi = 0.0;
        for r in 0..m {
            for c in 0..m {
                let delta = if r == c { s2 } else { 0.0 };
                let arc = (delta - p[r] * p[c]) / s3;
                a.push(arc);
                bi += sigma * arc * jac[r * m + c];
            }
        }
        b.push(bi);
    }
    Ok(Assembly { residual, a, b })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `max (u − v)` over interior nodes.
    pub max_violation: f64,
    pub max_abs_difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `u ≤ v` on the interior up to `10 · newton_tol`.
pub fn comparison_harness(u: &ScalarFieldGrid, v: &ScalarFieldGrid, newton_tol: f64) -> Result<ComparisonReport> {
    u.check_same_layout(v)?;
    let mut viol = f64::NEG_INFINITY;
    let mut diff = 0.0f64;
    for &i in u.layout().interior() {
        let d = u.value(i) - v.value(i);
        viol = viol.max(d);
        diff = diff.max(d.abs());
    }
    let tolerance = 10.0 * newton_tol;
    Ok(ComparisonReport {
        max_violation: viol,
        max_abs_difference: diff,
        tolerance,
        pass: viol <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Smoothness;

    fn rho() -> BoundaryData {
        BoundaryData::angular(Arc::new(|t: f64| t.cos().powi(2) + t.cos() * t.sin()), Smoothness::C2)
    }

    #[test]
    fn affine_data_is_reproduced_in_one_step() {
        let d = DomainSpec::unit_disc();
        let layout = build_layout(&d, 1.0 / 16.0).unwrap();
        let zf = VectorFieldSpec::zero(2).unwrap();
        let mut u = ScalarFieldGrid::zeros(layout.clone());
        let aff = BoundaryData::point(Arc::new(|p: &[f64]| 0.3 + p[0] - 2.0 * p[1]), Smoothness::C2);
        apply_boundary(&mut u, &aff, 1.0).unwrap();
        // band values of an affine function pinned at the nearest boundary
        // point are not affine on the band, so use the exact values instead
        for &i in layout.band() {
            let x = layout.coords(i);
            u.set(i, 0.3 + x[0] - 2.0 * x[1]);
        }
        let (out, diag) = newton_solve(&u, &zf, &CurvatureSpec::zero(), 0.5, 1.0, &SolveConfig::default()).unwrap();
        assert!(diag.converged);
        let (_, again) = newton_solve(&out, &zf, &CurvatureSpec::zero(), 0.5, 1.0, &SolveConfig::default()).unwrap();
        assert!(again.converged && again.iters <= 1, "{}", again.iters);
        for &i in layout.interior() {
            let x = layout.coords(i);
            assert!((out.value(i) - (0.3 + x[0] - 2.0 * x[1])).abs() < 1e-10);
        }
        let asm = assemble(&out, &zf, &CurvatureSpec::zero(), 0.5, 1.0).unwrap();
        assert!(asm.residual.values().iter().all(|r| r.abs() < 1e-8));
    }

    #[test]
    fn contact_field_has_no_lower_order_term() {
        let layout = build_layout(&DomainSpec::unit_disc(), 1.0 / 16.0).unwrap();
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        let u = ScalarFieldGrid::sample(layout, |x| (2.0 * x[0]).sin() * x[1] + x[0] * x[0]).unwrap();
        let asm = assemble(&u, &f, &CurvatureSpec::zero(), 0.2, 0.7).unwrap();
        assert!(asm.b.iter().all(|b| b.abs() < 1e-12));
        assert!(assemble(&u, &f, &CurvatureSpec::zero(), 0.0, 1.0).is_err());
    }

    #[test]
    fn energy_descends_and_stage_converges() {
        let cfg = SolveConfig {
            epsilon_schedule: vec![1.0, 0.25],
            stop_tol: None,
            ..SolveConfig::default()
        };
        let f = VectorFieldSpec::standard_contact(2).unwrap();
        let r = continuation_solve(&DomainSpec::unit_disc(), 1.0 / 16.0, &f, &CurvatureSpec::zero(), &rho(), &cfg).unwrap();
        assert!(r.converged);
        for s in &r.stages {
            assert!(s.residual <= cfg.newton_tol);
            for w in s.energy_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SolveConfig::default();
        assert!(c.validate().is_ok());
        c.epsilon_schedule = vec![0.5, 1.0];
        assert!(c.validate().is_err());
        let c = SolveConfig {
            sigma_schedule: vec![0.5, 0.9],
            ..SolveConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SolveConfig {
            damping: 1.0,
            ..SolveConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn comparison_of_mismatched_grids_fails() {
        let a = ScalarFieldGrid::zeros(build_layout(&DomainSpec::unit_disc(), 0.25).unwrap());
        let b = ScalarFieldGrid::zeros(build_layout(&DomainSpec::unit_disc(), 0.125).unwrap());
        assert!(matches!(comparison_harness(&a, &b, 1e-8), Err(Error::GridMismatch(_))));
        let r = comparison_harness(&a, &a, 1e-8).unwrap();
        assert!(r.pass && r.max_abs_difference == 0.0);
    }
}
