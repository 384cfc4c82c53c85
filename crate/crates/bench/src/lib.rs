//! Fixtures shared by the solver benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use renewal_core::models::{self, BlowupVariant, Model};
use renewal_core::{Domain, Grid, GridFn, LinearProblem, Velocity};

/// A smooth datum transported with growth, a source and inflow on `[0, 4]`.
pub fn linear_problem(cells: usize) -> (Arc<Grid>, LinearProblem) {
    let grid = Arc::new(Grid::uniform(Domain::new(&[4.0], &[]).unwrap(), cells).unwrap());
    let u0 = GridFn::sample_scalar(&grid, |x| (-(x[0] - 1.0).powi(2) * 4.0).exp());
    let lp = LinearProblem::new(Velocity::constant(&[1.0]), u0)
        .with_p(|t, x| 0.2 * (t + x[0]).sin())
        .with_q(|_, x| 0.1 * x[0])
        .with_ub(|_, _| 0.5);
    (grid, lp)
}

pub fn blowup(cells: usize) -> Model {
    models::build_blowup(BlowupVariant::Ode, cells).unwrap()
}

pub fn preset(name: &str, cells: usize) -> Model {
    let mut over = BTreeMap::new();
    over.insert("cells".to_string(), cells as f64);
    models::build_preset(name, &over).unwrap()
}
