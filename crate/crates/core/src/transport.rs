//! Linear scalar problems with frozen coefficients, solved pointwise by the
//! representation formula along backward characteristics.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::characteristics::{default_substeps, trace_back, CharKind, CharRecord};
use crate::domain::{Grid, GridFn};
use crate::error::{Error, Result};
use crate::problem::Velocity;

pub type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// `u_t + div(v u) = p u + q`, `u = u_b` on inflow faces, `u(t0) = u0`.
#[derive(Clone)]
pub struct LinearProblem {
    pub velocity: Velocity,
    pub p: ScalarFn,
    pub q: ScalarFn,
    pub ub: ScalarFn,
    pub u0: GridFn,
    pub t0: f64,
}

impl fmt::Debug for LinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearProblem").field("velocity", &self.velocity).field("t0", &self.t0).finish()
    }
}

impl LinearProblem {
    /// Pure transport of `u0` from time zero.
    pub fn new(velocity: Velocity, u0: GridFn) -> Self {
        LinearProblem {
            velocity,
            p: Arc::new(|_, _| 0.0),
            q: Arc::new(|_, _| 0.0),
            ub: Arc::new(|_, _| 0.0),
            u0,
            t0: 0.0,
        }
    }

    pub fn with_p<F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.p = Arc::new(f);
        self
    }

    pub fn with_q<F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.q = Arc::new(f);
        self
    }

    pub fn with_ub<F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.ub = Arc::new(f);
        self
    }

    pub fn starting_at(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }
}

/// Substeps used when none are requested.
pub fn auto_substeps(velocity: &Velocity, grid: &Grid, t0: f64, t: f64) -> usize {
    let (vmax, _) = velocity.sampled_bounds(grid, t0, t);
    default_substeps(t - t0, vmax, grid.min_width())
}

/// Backward traces from every node at time `t` down to `t0`.
pub fn trace_nodes(velocity: &Velocity, grid: &Grid, t0: f64, t: f64, substeps: usize) -> Result<Vec<CharRecord>> {
    (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.node_point(node);
            trace_back(velocity, grid.domain(), t, &x, t0, substeps)
        })
        .collect()
}

/// Representation formula at the origin of one trace.
pub fn represent(lp: &LinearProblem, grid: &Grid, rec: &CharRecord) -> Result<f64> {
    let n = rec.knots();
    let mut g = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for j in 0..n {
        let (s, x) = (rec.times[j], rec.point(j));
        let pv = (lp.p)(s, x);
        if !pv.is_finite() {
            return Err(Error::CoefficientBlowUp { what: "p", t: s });
        }
        let qv = (lp.q)(s, x);
        if !qv.is_finite() {
            return Err(Error::CoefficientBlowUp { what: "q", t: s });
        }
        g.push(pv - lp.velocity.div(s, x));
        q.push(qv);
    }
    // log-growth from each knot up to the origin
    let mut log_e = vec![0.0; n];
    for j in (0..n.saturating_sub(1)).rev() {
        let ds = rec.times[j + 1] - rec.times[j];
        log_e[j] = log_e[j + 1] + 0.5 * ds * (g[j] + g[j + 1]);
    }
    let e: Vec<f64> = log_e.iter().map(|l| l.exp()).collect();
    let datum = match rec.kind {
        CharKind::InteriorFoot => {
            let st = grid.stencil(rec.start());
            lp.u0.interpolate_component(&st, 0)
        }
        CharKind::BoundaryHit { time, .. } => {
            let b = (lp.ub)(time, rec.start());
            if !b.is_finite() {
                return Err(Error::CoefficientBlowUp { what: "u_b", t: time });
            }
            b
        }
        CharKind::TruncationExit { .. } => 0.0,
    };
    let mut value = datum * e[0];
    for j in 0..n.saturating_sub(1) {
        let ds = rec.times[j + 1] - rec.times[j];
        value += 0.5 * ds * (q[j] * e[j] + q[j + 1] * e[j + 1]);
    }
    if !value.is_finite() {
        return Err(Error::CoefficientBlowUp { what: "solution", t: rec.t });
    }
    Ok(value)
}

/// Applies the representation formula at every node for precomputed traces.
pub fn evaluate_traced(lp: &LinearProblem, grid: &Grid, records: &[CharRecord]) -> Result<GridFn> {
    if records.len() != grid.len() {
        return Err(Error::DimensionMismatch { what: "trace records", expected: grid.len(), got: records.len() });
    }
    if lp.u0.len() != grid.len() || lp.u0.k() != 1 {
        return Err(Error::DimensionMismatch { what: "initial datum", expected: grid.len(), got: lp.u0.values().len() });
    }
    let values: Result<Vec<f64>> = records.par_iter().map(|rec| represent(lp, grid, rec)).collect();
    GridFn::from_values(1, values?)
}

/// Solution at time `t`.
pub fn evaluate(lp: &LinearProblem, t: f64, grid: &Grid, substeps: Option<usize>) -> Result<GridFn> {
    if !(t >= lp.t0) {
        return Err(Error::InvalidConfig(format!("evaluation time {t} precedes the start time {}", lp.t0)));
    }
    let n = substeps.unwrap_or_else(|| auto_substeps(&lp.velocity, grid, lp.t0, t));
    let records = trace_nodes(&lp.velocity, grid, lp.t0, t, n)?;
    evaluate_traced(lp, grid, &records)
}

/// Evaluates at each requested time, always tracing back to the start time.
pub fn solve_series(lp: &LinearProblem, times: &[f64], grid: &Grid, substeps: Option<usize>) -> Result<Vec<GridFn>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("times must be ascending".into()));
    }
    times.iter().map(|&t| evaluate(lp, t, grid, substeps)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use approx::assert_abs_diff_eq;

    fn line(l: f64, cells: usize) -> Grid {
        Grid::uniform(Domain::new(&[l], &[]).unwrap(), cells).unwrap()
    }

    fn ind(a: f64, b: f64) -> impl Fn(&[f64]) -> f64 {
        move |x| if x[0] >= a && x[0] <= b { 1.0 } else { 0.0 }
    }

    #[test]
    fn pure_shift_of_indicator() {
        let g = line(2.0, 400);
        let u0 = GridFn::sample_scalar(&g, ind(0.0, 1.0));
        let lp = LinearProblem::new(Velocity::constant(&[1.0]), u0);
        let u = evaluate(&lp, 0.5, &g, None).unwrap();
        let exact = GridFn::sample_scalar(&g, ind(0.5, 1.5));
        assert!(g.l1_norm(&u.sub(&exact)).unwrap() <= 2.0 * 0.005);
    }

    #[test]
    fn growth_closed_form() {
        let g = line(4.0, 400);
        let bump = |x: f64| if (x - 1.0).abs() < 0.5 { (std::f64::consts::PI * (x - 1.0)).cos().powi(2) } else { 0.0 };
        let u0 = GridFn::sample_scalar(&g, |x| bump(x[0]));
        let lp = LinearProblem::new(Velocity::constant(&[1.0]), u0).with_p(|_, _| 0.4);
        let u = evaluate(&lp, 1.3, &g, None).unwrap();
        let exact = GridFn::sample_scalar(&g, |x| (0.4f64 * 1.3).exp() * bump(x[0] - 1.3));
        assert!(g.l1_norm(&u.sub(&exact)).unwrap() <= 1e-3);
    }

    #[test]
    fn boundary_fill() {
        let g = line(2.0, 400);
        let lp = LinearProblem::new(Velocity::constant(&[1.0]), GridFn::zeros(&g, 1)).with_ub(|_, _| 1.0);
        let u = evaluate(&lp, 1.0, &g, None).unwrap();
        let exact = GridFn::sample_scalar(&g, |x| if x[0] < 1.0 { 1.0 } else { 0.0 });
        assert!(g.l1_norm(&u.sub(&exact)).unwrap() <= 2.0 * 0.005);
    }

    #[test]
    fn series_starts_with_datum_and_is_continuous() {
        let g = line(3.0, 300);
        let u0 = GridFn::sample_scalar(&g, ind(0.0, 1.0));
        let lp = LinearProblem::new(Velocity::constant(&[1.0]), u0.clone());
        let s = solve_series(&lp, &[0.0, 0.25, 0.5], &g, None).unwrap();
        assert_eq!(s[0], u0);
        let d = g.l1_norm(&s[2].sub(&s[1])).unwrap();
        assert!(d <= 0.5 + 4.0 * 0.01);
        assert!(solve_series(&lp, &[0.5, 0.25], &g, None).is_err());
    }

    #[test]
    fn constant_state_away_from_boundary() {
        let g = Grid::uniform(Domain::new(&[], &[(-2.0, 2.0)]).unwrap(), 80).unwrap();
        let lp = LinearProblem::new(Velocity::constant(&[1.0]), GridFn::sample_scalar(&g, |_| 1.0));
        let u = evaluate(&lp, 0.5, &g, None).unwrap();
        let mut x = [0.0];
        for node in 0..g.len() {
            g.node_coords(node, &mut x);
            if x[0] > -1.4 {
                assert_abs_diff_eq!(u.get(node, 0), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn superposition_and_sign() {
        let g = line(2.0, 100);
        let v = Velocity::constant(&[0.8]);
        let a0 = GridFn::sample_scalar(&g, |x| x[0].sin().abs());
        let b0 = GridFn::sample_scalar(&g, |x| (3.0 * x[0]).cos().powi(2));
        let la = LinearProblem::new(v.clone(), a0.clone()).with_q(|t, x| t * x[0]).with_ub(|t, _| 1.0 + t);
        let lb = LinearProblem::new(v.clone(), b0.clone()).with_q(|_, x| x[0] * x[0]).with_ub(|_, _| 0.5);
        let sum = LinearProblem::new(v, a0.add(&b0))
            .with_q(|t, x| t * x[0] + x[0] * x[0])
            .with_ub(|t, _| 1.5 + t);
        let (ua, ub, us) = (
            evaluate(&la, 0.7, &g, Some(40)).unwrap(),
            evaluate(&lb, 0.7, &g, Some(40)).unwrap(),
            evaluate(&sum, 0.7, &g, Some(40)).unwrap(),
        );
        for node in 0..g.len() {
            assert_abs_diff_eq!(ua.get(node, 0) + ub.get(node, 0), us.get(node, 0), epsilon = 1e-12);
        }
        assert!(us.min_value() >= 0.0);
    }

    #[test]
    fn nonfinite_coefficient_is_blow_up() {
        let g = line(1.0, 10);
        let lp = LinearProblem::new(Velocity::constant(&[1.0]), GridFn::zeros(&g, 1)).with_p(|_, _| f64::NAN);
        assert!(matches!(evaluate(&lp, 0.5, &g, None), Err(Error::CoefficientBlowUp { what: "p", .. })));
    }
}
