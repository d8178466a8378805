//! Numerical p-area minimizers of graphs in the Heisenberg group.
//!
//! The crate discretizes `∫ |∇u + F| + H u` on masked uniform grids, solves the
//! regularized Dirichlet problems by damped Newton iteration with
//! ε-continuation, and certifies candidate surfaces as minimizers or
//! non-minimizers through the singular set and normal-jump conditions.

pub mod catalog;
pub mod error;
pub mod field;
pub mod functional;
pub mod geometry;
pub mod grid;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use field::{CurvatureSpec, FieldKind, TwistMatrix, VectorFieldSpec};
pub use grid::{BoundaryData, DomainSpec, GridLayout, NodeClass, ScalarFieldGrid, Smoothness};
pub use catalog::{ClosedFormSurface, Interface, InterfaceKind, MinimizerConstruction};
pub use functional::{LineFit, SingularSet, Tau};
pub use geometry::{CharacteristicRay, InterfaceSample, MinimizerVerdict, Outcome, Route, Surface};
pub use solver::{SolveConfig, SolveResult, StageDiagnostics};
