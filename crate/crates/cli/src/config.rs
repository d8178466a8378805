//! Run configuration: a JSON document, overridden by command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use parea_core::catalog::{self, ClosedFormSurface};
use parea_core::{BoundaryData, CurvatureSpec, DomainSpec, Smoothness, SolveConfig, VectorFieldSpec};

use crate::expr::{constant, point_vars, Formula};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Parea,
    Verify,
    Singular,
    Trace,
    Examples,
    Rank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    StandardContact {
        #[serde(default = "two")]
        dim: usize,
    },
    Zero {
        #[serde(default = "two")]
        dim: usize,
    },
    /// One expression per component in the variables of [`point_vars`];
    /// the Jacobian is taken by central differences.
    Custom { components: Vec<String> },
}

fn two() -> usize {
    2
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig::StandardContact { dim: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKindArg {
    StandardContact,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurvatureConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Expr {
        expr: String,
        bound: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryConfig {
    /// Trace of a catalog surface.
    Catalog(String),
    /// Expression in the polar angle `t` (discs and annuli).
    Angular(String),
    /// Expression in the boundary point.
    Point(String),
}

impl BoundaryConfig {
    /// `angular:EXPR`, `point:EXPR`, or a catalog name.
    pub fn from_flag(s: &str) -> Self {
        if let Some(e) = s.strip_prefix("angular:") {
            BoundaryConfig::Angular(e.to_string())
        } else if let Some(e) = s.strip_prefix("point:") {
            BoundaryConfig::Point(e.to_string())
        } else {
            BoundaryConfig::Catalog(s.to_string())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    /// Catalog name, or `expr:EXPR` for a graph given by a formula in `x, y`.
    pub target: Option<String>,
    pub domain: Option<DomainSpec>,
    pub field: FieldConfig,
    pub curvature: CurvatureConfig,
    pub boundary: Option<BoundaryConfig>,
    pub h: Option<f64>,
    pub solver: SolveConfig,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Verification tolerance: the normal-jump defect bound for `verify`,
    /// the Newton tolerance for `solve`.
    pub tol: Option<f64>,
    /// Start points for `trace`; random ones are drawn when empty.
    pub seeds: Vec<[f64; 2]>,
    pub rays: usize,
    pub bumps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            target: None,
            domain: None,
            field: FieldConfig::default(),
            curvature: CurvatureConfig::default(),
            boundary: None,
            h: None,
            solver: SolveConfig::default(),
            out: None,
            seed: 0,
            tol: None,
            seeds: Vec::new(),
            rays: 16,
            bumps: 32,
        }
    }
}

pub const DEFAULT_H: f64 = 1.0 / 64.0;

/// Reads a config file, reporting the offending key, line and column.
pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        format!(
            "key `{key}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        )
    })
}

impl RunConfig {
    pub fn h(&self) -> Result<f64, String> {
        let h = self.h.unwrap_or(DEFAULT_H);
        if h.is_finite() && h > 0.0 {
            Ok(h)
        } else {
            Err(format!("key `h`: grid step must be positive, got {h}"))
        }
    }

    pub fn field(&self) -> Result<VectorFieldSpec, String> {
        match &self.field {
            FieldConfig::StandardContact { dim } => VectorFieldSpec::standard_contact(*dim),
            FieldConfig::Zero { dim } => VectorFieldSpec::zero(*dim),
            FieldConfig::Custom { components } => {
                let m = components.len();
                let names = point_vars(m);
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let parts = components
                    .iter()
                    .enumerate()
                    .map(|(k, c)| Formula::parse(c, &refs).map_err(|e| format!("key `field.components[{k}]`: {e}")))
                    .collect::<Result<Vec<_>, _>>()?;
                let parts = Arc::new(parts);
                let jac_parts = parts.clone();
                VectorFieldSpec::custom(
                    m,
                    Arc::new(move |x: &[f64], out: &mut [f64]| {
                        for (o, p) in out.iter_mut().zip(parts.iter()) {
                            *o = p.eval(x);
                        }
                    }),
                    Arc::new(move |x: &[f64], out: &mut [f64]| {
                        let mut y = x.to_vec();
                        for j in 0..m {
                            let d = 1e-6 * (1.0 + x[j].abs());
                            y[j] = x[j] + d;
                            let plus: Vec<f64> = jac_parts.iter().map(|p| p.eval(&y)).collect();
                            y[j] = x[j] - d;
                            let minus: Vec<f64> = jac_parts.iter().map(|p| p.eval(&y)).collect();
                            y[j] = x[j];
                            for i in 0..m {
                                out[i * m + j] = (plus[i] - minus[i]) / (2.0 * d);
                            }
                        }
                    }),
                )
            }
        }
        .map_err(|e| format!("key `field`: {e}"))
    }

    pub fn curvature(&self, dim: usize) -> Result<CurvatureSpec, String> {
        match &self.curvature {
            CurvatureConfig::Zero => Ok(CurvatureSpec::zero()),
            CurvatureConfig::Constant { value } => Ok(CurvatureSpec::constant(*value)),
            CurvatureConfig::Expr { expr, bound } => {
                let names = point_vars(dim);
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let f = Formula::parse(expr, &refs).map_err(|e| format!("key `curvature.expr`: {e}"))?;
                CurvatureSpec::custom(Arc::new(move |x: &[f64]| f.eval(x)), *bound)
                    .map_err(|e| format!("key `curvature.bound`: {e}"))
            }
        }
    }

    pub fn target_name(&self) -> Result<&str, String> {
        self.target
            .as_deref()
            .ok_or_else(|| "no target given; name a catalog surface or `expr:EXPR`".to_string())
    }
}

/// A catalog reference whose parameters may be expressions such as `pi/3`.
pub fn catalog_surface(name: &str) -> Result<ClosedFormSurface, String> {
    catalog::catalog_with(name, |v| constant(v).map_err(parea_core::Error::Argument)).map_err(|e| e.to_string())
}

pub fn boundary_data(cfg: &BoundaryConfig, dim: usize) -> Result<BoundaryData, String> {
    match cfg {
        BoundaryConfig::Catalog(name) => {
            let s = catalog_surface(name)?;
            Ok(BoundaryData::point(Arc::new(move |p: &[f64]| s.value([p[0], p[1]])), Smoothness::C0))
        }
        BoundaryConfig::Angular(e) => {
            let f = Formula::parse(e, &["t"]).map_err(|e| format!("key `boundary.angular`: {e}"))?;
            Ok(BoundaryData::angular(Arc::new(move |t: f64| f.eval(&[t])), Smoothness::C0))
        }
        BoundaryConfig::Point(e) => {
            let names = point_vars(dim);
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let f = Formula::parse(e, &refs).map_err(|e| format!("key `boundary.point`: {e}"))?;
            Ok(BoundaryData::point(Arc::new(move |p: &[f64]| f.eval(p)), Smoothness::C0))
        }
    }
}
