//! `parea`: solve, measure and certify p-area minimizing graphs.
//!
//! Exit status: 0 on success, 2 when a verification or solve fails its
//! check, 1 on any error.

mod commands;
mod config;
mod expr;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use config::{BoundaryConfig, Command, FieldConfig, FieldKindArg, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "parea", version, about = "p-area minimizers of graphs in the Heisenberg group")]
struct Cli {
    /// Command to run; may instead come from the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Catalog surface (`pauls-u`, `7.1a:theta=pi/3`, ...) or `expr:EXPR`.
    target: Option<String>,
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid step.
    #[arg(long)]
    h: Option<f64>,
    /// Smallest regularization parameter of the continuation.
    #[arg(long)]
    eps_min: Option<f64>,
    /// Directory for artifacts and `summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Normal-jump tolerance for `verify`, Newton tolerance for `solve`.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    field: Option<FieldKindArg>,
    #[arg(long)]
    dim: Option<usize>,
    /// Catalog name, `angular:EXPR` in `t`, or `point:EXPR` in `x, y`.
    #[arg(long)]
    boundary: Option<String>,
}

/// Halving schedule from the configured start down to `eps_min`.
fn truncate_schedule(schedule: &[f64], eps_min: f64) -> Result<Vec<f64>, String> {
    if !(eps_min > 0.0 && eps_min.is_finite()) {
        return Err(format!("--eps-min must be positive, got {eps_min}"));
    }
    let start = schedule.first().copied().unwrap_or(1.0).max(eps_min);
    let mut out = vec![start];
    while out[out.len() - 1] * 0.5 >= eps_min * (1.0 - 1e-12) {
        let next = out[out.len() - 1] * 0.5;
        out.push(next);
    }
    if out[out.len() - 1] > eps_min * (1.0 + 1e-12) {
        out.push(eps_min);
    }
    Ok(out)
}

fn merge(cli: &Cli) -> Result<(Command, RunConfig), String> {
    let mut cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if cli.command.is_some() {
        cfg.command = cli.command;
    }
    if cli.target.is_some() {
        cfg.target = cli.target.clone();
    }
    if cli.h.is_some() {
        cfg.h = cli.h;
    }
    if let Some(e) = cli.eps_min {
        cfg.solver.epsilon_schedule = truncate_schedule(&cfg.solver.epsilon_schedule, e)?;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.tol.is_some() {
        cfg.tol = cli.tol;
    }
    if let Some(b) = &cli.boundary {
        cfg.boundary = Some(BoundaryConfig::from_flag(b));
    }
    let dim = cli.dim.unwrap_or(match &cfg.field {
        FieldConfig::StandardContact { dim } | FieldConfig::Zero { dim } => *dim,
        FieldConfig::Custom { components } => components.len(),
    });
    match (cli.field, &mut cfg.field) {
        (Some(FieldKindArg::StandardContact), f) => *f = FieldConfig::StandardContact { dim },
        (Some(FieldKindArg::Zero), f) => *f = FieldConfig::Zero { dim },
        (None, FieldConfig::StandardContact { dim: d } | FieldConfig::Zero { dim: d }) => *d = dim,
        (None, FieldConfig::Custom { .. }) if cli.dim.is_some() => {
            return Err("--dim cannot resize a custom field".into());
        }
        (None, FieldConfig::Custom { .. }) => {}
    }
    let cmd = cfg
        .command
        .ok_or("no command given; pass one of solve, parea, verify, singular, trace, examples, rank")?;
    cfg.command = Some(cmd);
    Ok((cmd, cfg))
}

fn execute(cli: &Cli) -> Result<bool, String> {
    let (cmd, cfg) = merge(cli)?;
    let start = Instant::now();
    let out = commands::run(cmd, &cfg)?;
    let summary = json!({
        "command": cmd,
        "version": env!("CARGO_PKG_VERSION"),
        "status": if out.pass { "pass" } else { "fail" },
        "config": cfg,
        "report": out.report,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        for (name, bytes) in &out.artifacts {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
        }
        let p = dir.join("summary.json");
        std::fs::write(&p, format!("{text}\n")).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
    }
    println!("{text}");
    Ok(out.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("parea: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_truncation() {
        let s = truncate_schedule(&[1.0, 0.5], 0.125).unwrap();
        assert_eq!(s, vec![1.0, 0.5, 0.25, 0.125]);
        let s = truncate_schedule(&[1.0], 0.3).unwrap();
        assert_eq!(s, vec![1.0, 0.5, 0.3]);
        assert!(truncate_schedule(&[1.0], 0.0).is_err());
    }
}
