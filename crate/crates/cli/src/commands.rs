//! Command implementations. Each returns a JSON report, a pass flag and the
//! artifacts to write.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use parea_core::catalog::{boundary_rho, construct_minimizer, eighth_turns, ClosedFormSurface};
use parea_core::field::{check_theorem_e_condition, singular_dim_bound, twist_matrix, twist_rank};
use parea_core::functional::{bump_family, flux_residual, p_area, singular_set, weak_solution_residual};
use parea_core::geometry::{
    contact_defect, grid_minimizer_verdict, legendrian_defect, lift_ray, minimizer_verdict, trace_ray,
    write_polylines, GridSurface, TraceOptions, VerdictOptions,
};
use parea_core::grid::build_layout;
use parea_core::solver::continuation_solve;
use parea_core::{DomainSpec, Outcome, ScalarFieldGrid, Surface, Tau, VectorFieldSpec};

use crate::config::{boundary_data, catalog_surface, BoundaryConfig, Command, RunConfig};
use crate::expr::Formula;

pub struct CommandOutput {
    pub pass: bool,
    pub report: Value,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

type Res<T> = Result<T, String>;

fn core<T>(r: parea_core::Result<T>) -> Res<T> {
    r.map_err(|e| e.to_string())
}

/// Closed-form surfaces are probed this close to interfaces.
const PROBE_H: f64 = 1e-5;
const PROBE_TAU: f64 = 1e-7;

enum Target {
    Closed(ClosedFormSurface),
    Formula { name: String, surface: GridSurface },
}

impl Target {
    fn name(&self) -> &str {
        match self {
            Target::Closed(s) => &s.name,
            Target::Formula { name, .. } => name,
        }
    }
}

fn domain_for(cfg: &RunConfig, fallback: Option<&DomainSpec>) -> DomainSpec {
    cfg.domain
        .clone()
        .or_else(|| fallback.cloned())
        .unwrap_or_else(DomainSpec::unit_disc)
}

fn target(cfg: &RunConfig) -> Res<(Target, DomainSpec, VectorFieldSpec)> {
    let name = cfg.target_name()?;
    if let Some(src) = name.strip_prefix("expr:") {
        let f = Formula::parse(src, &["x", "y"]).map_err(|e| format!("target: {e}"))?;
        let domain = domain_for(cfg, None);
        let layout = core(build_layout(&domain, cfg.h()?))?;
        let grid = core(ScalarFieldGrid::sample(layout, |x| f.eval(x)))?;
        let field = cfg.field()?;
        Ok((
            Target::Formula {
                name: name.to_string(),
                surface: core(GridSurface::new(grid))?,
            },
            domain,
            field,
        ))
    } else {
        let s = catalog_surface(name)?;
        let domain = domain_for(cfg, Some(&s.domain));
        let field = s.field.clone();
        Ok((Target::Closed(s), domain, field))
    }
}

fn sampled(t: &Target, domain: &DomainSpec, h: f64) -> Res<ScalarFieldGrid> {
    match t {
        Target::Closed(s) => core(s.sample_grid(core(build_layout(domain, h))?)),
        Target::Formula { surface, .. } => Ok(surface.grid().clone()),
    }
}

fn surface_of(t: &Target) -> &dyn Surface {
    match t {
        Target::Closed(s) => s,
        Target::Formula { surface, .. } => surface,
    }
}

fn csv_bytes(g: &ScalarFieldGrid) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    core(g.write_csv(&mut buf))?;
    Ok(buf)
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Res<CommandOutput> {
    match cmd {
        Command::Solve => solve(cfg),
        Command::Parea => parea(cfg),
        Command::Verify => verify(cfg),
        Command::Singular => singular(cfg),
        Command::Trace => trace(cfg),
        Command::Examples => examples(cfg),
        Command::Rank => rank(cfg),
    }
}

fn solve(cfg: &RunConfig) -> Res<CommandOutput> {
    let field = cfg.field()?;
    let dim = field.dim();
    let curvature = cfg.curvature(dim)?;
    let bcfg = match (&cfg.boundary, &cfg.target) {
        (Some(b), _) => b.clone(),
        (None, Some(t)) => BoundaryConfig::Catalog(t.clone()),
        (None, None) => return Err("solve needs boundary data (`boundary` or a catalog target)".into()),
    };
    let fallback = match &bcfg {
        BoundaryConfig::Catalog(n) => Some(catalog_surface(n)?.domain),
        _ => None,
    };
    let domain = domain_for(cfg, fallback.as_ref());
    let data = boundary_data(&bcfg, dim)?;
    let mut solver = cfg.solver.clone();
    if let Some(t) = cfg.tol {
        solver.newton_tol = t;
    }
    let h = cfg.h()?;
    let r = core(continuation_solve(&domain, h, &field, &curvature, &data, &solver))?;
    let area = core(p_area(&r.u, &field, &curvature))?;
    let sing = core(singular_set(&r.u, &field, solver.tau_sing))?;
    let verdict = if dim == 2 {
        serde_json::to_value(core(grid_minimizer_verdict(&r.u, &field, solver.tau_sing, None, None))?)
            .map_err(|e| e.to_string())?
    } else {
        Value::Null
    };
    let report = json!({
        "converged": r.converged,
        "failed_stage": r.failed_stage,
        "used_sigma_continuation": r.used_sigma_continuation,
        "h": h,
        "nodes": r.u.layout().interior().len(),
        "p_area": area,
        "sup_u": r.u.sup_norm_interior(),
        "sup_boundary": r.u.sup_norm_band(),
        "singular_nodes": sing.nodes.len(),
        "singular_components": sing.components.len(),
        "verdict": verdict,
        "stages": r.diagnostics_json(),
    });
    let diag = serde_json::to_vec_pretty(&r.diagnostics_json()).map_err(|e| e.to_string())?;
    Ok(CommandOutput {
        pass: r.converged,
        report,
        artifacts: vec![("solution.csv".into(), csv_bytes(&r.u)?), ("diagnostics.json".into(), diag)],
    })
}

/// Adaptive disc quadrature for closed forms on a disc about the origin.
fn adaptive_area(t: &Target, domain: &DomainSpec) -> Option<(f64, f64)> {
    match (t, domain) {
        (Target::Closed(s), DomainSpec::Disc { center, radius }) if center.iter().all(|&c| c == 0.0) => {
            let q = s.disc_p_area(*radius, &eighth_turns(), 1e-8);
            Some((q.value, q.error))
        }
        _ => None,
    }
}

fn parea(cfg: &RunConfig) -> Res<CommandOutput> {
    let (t, domain, field) = target(cfg)?;
    let h = cfg.h()?;
    let curvature = cfg.curvature(2)?;
    let grid = sampled(&t, &domain, h)?;
    let value = core(p_area(&grid, &field, &curvature))?;
    let adaptive = if curvature.is_zero() { adaptive_area(&t, &domain) } else { None };
    let report = json!({
        "surface": t.name(),
        "h": h,
        "value": value,
        "grid_p_area": value,
        "adaptive_p_area": adaptive.map(|a| a.0),
        "adaptive_error_estimate": adaptive.map(|a| a.1),
    });
    Ok(CommandOutput {
        pass: true,
        report,
        artifacts: vec![("values.csv".into(), csv_bytes(&grid)?)],
    })
}

fn verify(cfg: &RunConfig) -> Res<CommandOutput> {
    let (t, domain, field) = target(cfg)?;
    let h = cfg.h()?;
    let curvature = cfg.curvature(2)?;
    let verdict = match &t {
        Target::Closed(s) => {
            let mut opts = VerdictOptions::new(PROBE_H, PROBE_TAU);
            opts.defect_tol = cfg.tol;
            core(minimizer_verdict(s, &field, &domain, &s.interfaces, opts))?
        }
        Target::Formula { surface, .. } => {
            core(grid_minimizer_verdict(surface.grid(), &field, Tau::Auto, None, cfg.tol))?
        }
    };
    let grid = sampled(&t, &domain, h)?;
    let centers: Vec<Vec<f64>> = verdict.witness.iter().map(|w| w.point.to_vec()).collect();
    let bumps = core(bump_family(grid.layout(), cfg.bumps, cfg.seed, &centers, (4.0 * h, 0.25)))?;
    let weak = core(weak_solution_residual(&grid, &field, &curvature, Tau::Auto, &bumps))?;
    let pass = verdict.outcome == Outcome::Minimizer;
    let report = json!({
        "surface": t.name(),
        "outcome": verdict.outcome,
        "verdict": verdict,
        "weak_solution_residual": weak,
        "test_functions": bumps.len(),
        "h": h,
    });
    Ok(CommandOutput {
        pass,
        report,
        artifacts: Vec::new(),
    })
}

fn rank_rows(field: &VectorFieldSpec, samples: &[Vec<f64>]) -> Res<Vec<Value>> {
    samples
        .iter()
        .map(|x| {
            let tm = core(twist_matrix(field, x))?;
            Ok(json!({
                "point": x,
                "twist_rank": twist_rank(&tm),
                "dimension_bound": core(singular_dim_bound(field, x))?,
            }))
        })
        .collect()
}

fn singular(cfg: &RunConfig) -> Res<CommandOutput> {
    let (t, domain, field) = target(cfg)?;
    let h = cfg.h()?;
    let grid = sampled(&t, &domain, h)?;
    let tau = cfg.solver.tau_sing;
    let sing = core(singular_set(&grid, &field, tau))?;
    let layout = grid.layout();
    let comps: Vec<Value> = sing
        .components
        .iter()
        .enumerate()
        .map(|(k, c)| {
            json!({
                "nodes": c.len(),
                "diameter": sing.component_diameter(layout, k),
                "fit": sing.fits[k],
            })
        })
        .collect();
    let mut csv = String::from("x_1,x_2,abs_p,component\n");
    for (k, c) in sing.components.iter().enumerate() {
        for &i in c {
            let g = core(grid.gradient(&field, i))?;
            let x = layout.coords(i);
            csv += &format!("{},{},{},{k}\n", x[0], x[1], g[0].hypot(g[1]));
        }
    }
    let samples: Vec<Vec<f64>> = sing
        .components
        .iter()
        .map(|c| layout.coords(c[0]))
        .chain(std::iter::once(vec![0.0; field.dim()]))
        .collect();
    let report = json!({
        "surface": t.name(),
        "h": h,
        "tau": tau,
        "tau_max": sing.tau_max,
        "nodes": sing.nodes.len(),
        "measure": sing.measure,
        "components": comps,
        "rank": rank_rows(&field, &samples)?,
        "theorem_e_condition": core(check_theorem_e_condition(&field, &samples))?,
    });
    Ok(CommandOutput {
        pass: true,
        report,
        artifacts: vec![("singular.csv".into(), csv.into_bytes())],
    })
}

fn random_points(domain: &DomainSpec, n: usize, seed: u64) -> Vec<[f64; 2]> {
    let (lo, hi) = domain.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 1000 * n.max(1) {
        tries += 1;
        let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if domain.signed_distance(&p) < -1e-3 {
            out.push(p);
        }
    }
    out
}

fn trace(cfg: &RunConfig) -> Res<CommandOutput> {
    let (t, domain, field) = target(cfg)?;
    let h = cfg.h()?;
    let surface = surface_of(&t);
    let tau = match &t {
        Target::Closed(_) => PROBE_TAU,
        Target::Formula { .. } => Tau::Auto.at(h, &field, &[0.0, 0.0]),
    };
    let opts = TraceOptions::new(tau, h.min(0.01));
    let seeds = if cfg.seeds.is_empty() {
        random_points(&domain, cfg.rays, cfg.seed)
    } else {
        cfg.seeds.clone()
    };
    let mut rays = Vec::new();
    let mut lines = Vec::new();
    let mut skipped = Vec::new();
    for x0 in seeds {
        match trace_ray(surface, &field, &domain, x0, opts) {
            Ok(r) => {
                let lift = lift_ray(&r, surface, 64);
                rays.push(json!({
                    "base": r.base,
                    "direction": r.direction,
                    "start": r.start,
                    "end": r.end,
                    "stop": r.stop,
                    "length": r.length(),
                    "straightness": r.straightness,
                    "angle_deviation": r.angle_deviation,
                    "legendrian_defect": legendrian_defect(&r, surface),
                }));
                lines.push(lift.iter().map(|p| p.to_vec()).collect());
            }
            Err(e) => skipped.push(json!({"base": x0, "reason": e.to_string()})),
        }
    }
    let mut buf = Vec::new();
    core(write_polylines(&mut buf, &lines))?;
    let report = json!({
        "surface": t.name(),
        "step": opts.step,
        "tau": opts.tau,
        "rays": rays,
        "skipped": skipped,
    });
    Ok(CommandOutput {
        pass: true,
        report,
        artifacts: vec![("rays.csv".into(), buf)],
    })
}

fn check(name: &str, value: f64, limit: f64) -> (bool, Value) {
    let pass = value <= limit;
    (pass, json!({"check": name, "value": value, "limit": limit, "pass": pass}))
}

fn examples(cfg: &RunConfig) -> Res<CommandOutput> {
    let (t, domain, field) = target(cfg)?;
    let s = match &t {
        Target::Closed(s) => s,
        Target::Formula { .. } => return Err("`examples` takes a catalog name".into()),
    };
    let h = cfg.h()?;
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();

    checks.push(check("continuity across interfaces", s.continuity_defect(200, 1e-12), 1e-9));

    let grid = sampled(&t, &domain, h)?;
    let layout = grid.layout().clone();
    let area = core(p_area(&grid, &field, &parea_core::CurvatureSpec::zero()))?;
    if let Some((adaptive, _)) = adaptive_area(&t, &domain) {
        // node quadrature carries an O(h) bias next to singular curves
        checks.push(check("grid vs adaptive p-area", (area - adaptive).abs(), (2.0 * h).max(2e-2)));
    }

    let mut rays = 0;
    let mut worst = (0.0f64, 0.0f64);
    for x0 in random_points(&domain, 8, cfg.seed) {
        if let Ok(r) = trace_ray(s, &field, &domain, x0, TraceOptions::new(PROBE_TAU, 0.005)) {
            rays += 1;
            worst.0 = worst.0.max(r.straightness);
            worst.1 = worst.1.max(legendrian_defect(&r, s));
        }
    }
    checks.push(check("characteristics are straight", worst.0, 1e-6));
    checks.push(check("lifts are Legendrian", worst.1, 1e-9));

    let mut opts = VerdictOptions::new(PROBE_H, PROBE_TAU);
    opts.defect_tol = cfg.tol;
    let verdict = core(minimizer_verdict(s, &field, &domain, &s.interfaces, opts))?;

    // flux residual away from interfaces and the boundary, reported only
    let residual = core(flux_residual(&grid, &field))?
        .into_iter()
        .filter(|&(i, _)| {
            let x = layout.coords(i);
            let near = s.interfaces.iter().any(|itf| {
                itf.points.windows(2).any(|w| segment_distance([x[0], x[1]], w[0], w[1]) < 5.0 * h)
            });
            !near && domain.signed_distance(&x) <= -5.0 * h
        })
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max);

    if s.name == "check-u" {
        let m = core(construct_minimizer())?;
        let trace = (0..1000)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 1000.0;
                (m.value([th.cos(), th.sin()]) - boundary_rho(th)).abs()
            })
            .fold(0.0, f64::max);
        checks.push(check("boundary trace equals rho", trace, 1e-8));
        let segs = m.segments(64, 16);
        let leg = segs
            .iter()
            .map(|sg| contact_defect(&[sg[0], sg[1]]))
            .fold(0.0, f64::max);
        checks.push(check("segments are Legendrian", leg, 1e-9));
        let lines: Vec<Vec<Vec<f64>>> = segs.iter().map(|sg| vec![sg[0].to_vec(), sg[1].to_vec()]).collect();
        let mut buf = Vec::new();
        core(write_polylines(&mut buf, &lines))?;
        artifacts.push(("segments.csv".into(), buf));
    }
    artifacts.push(("values.csv".into(), csv_bytes(&grid)?));

    let pass = checks.iter().all(|c| c.0);
    let checks: Vec<Value> = checks.into_iter().map(|c| c.1).collect();
    let report = json!({
        "surface": s.name,
        "pieces": s.pieces.iter().map(|p| json!({"label": p.label, "formula": p.formula})).collect::<Vec<_>>(),
        "interfaces": s.interfaces,
        "h": h,
        "grid_p_area": area,
        "flux_residual_sup": residual,
        "rays_traced": rays,
        "verdict": verdict,
        "checks": checks,
    });
    Ok(CommandOutput {
        pass,
        report,
        artifacts,
    })
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

fn rank(cfg: &RunConfig) -> Res<CommandOutput> {
    let field = cfg.field()?;
    let m = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<Vec<f64>> = (0..16).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let rows = rank_rows(&field, &samples)?;
    let bounds: Vec<u64> = rows.iter().filter_map(|r| r["dimension_bound"].as_u64()).collect();
    let lo = bounds.iter().copied().min().unwrap_or(0);
    let hi = bounds.iter().copied().max().unwrap_or(0);
    let report = json!({
        "field": field.kind_name(),
        "dim": m,
        "bound": if lo == hi { json!(lo) } else { json!([lo, hi]) },
        "theorem_e_condition": core(check_theorem_e_condition(&field, &samples))?,
        "samples": rows,
    });
    Ok(CommandOutput {
        pass: true,
        report,
        artifacts: Vec::new(),
    })
}
