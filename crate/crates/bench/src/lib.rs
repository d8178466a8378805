//! Shared fixtures for the kernel benchmarks.

use std::sync::Arc;

use parea_core::catalog::{construct_minimizer, pauls_u};
use parea_core::grid::build_layout;
use parea_core::{BoundaryData, ClosedFormSurface, DomainSpec, ScalarFieldGrid, Smoothness, VectorFieldSpec};

pub fn contact() -> VectorFieldSpec {
    VectorFieldSpec::standard_contact(2).expect("planar field")
}

pub fn pauls() -> ClosedFormSurface {
    pauls_u()
}

pub fn check_u() -> ClosedFormSurface {
    construct_minimizer().expect("construction").surface()
}

/// The surface sampled on its own domain with step `h`.
pub fn sampled(s: &ClosedFormSurface, h: f64) -> ScalarFieldGrid {
    let layout = build_layout(&s.domain, h).expect("layout");
    s.sample_grid(layout).expect("samples")
}

/// Paul's u on the unit disc, as Dirichlet data.
pub fn disc_problem() -> (DomainSpec, BoundaryData) {
    let s = pauls_u();
    let data = BoundaryData::point(Arc::new(move |p: &[f64]| s.value([p[0], p[1]])), Smoothness::C0);
    (DomainSpec::unit_disc(), data)
}
