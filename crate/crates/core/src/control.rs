//! Cost functionals over SIHR and competitive trajectories and a
//! deterministic coordinate pattern search over piecewise-constant controls.

use rayon::prelude::*;

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::models::{build_competitive, build_sihr, CompetitiveParams, Rate, SihrParams, H, I};
use crate::picard::{solve, PicardConfig, Trajectory};
use crate::problem::SystemDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlTarget {
    /// The quarantine rate of the SIHR model.
    SihrKappa,
    /// Both harvesting efforts of the competitive model.
    CompetitiveEffort,
}

impl ControlTarget {
    fn components(self) -> usize {
        match self {
            ControlTarget::SihrKappa => 1,
            ControlTarget::CompetitiveEffort => 2,
        }
    }
}

/// Piecewise-constant control in time, optionally binned in age.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    pub target: ControlTarget,
    /// Interior time breakpoints, ascending.
    pub breakpoints: Vec<f64>,
    /// Interior age bin edges, ascending.
    pub age_edges: Vec<f64>,
    /// One bound per coefficient, or a single bound for all of them.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Maximum number of solver runs.
    pub budget: usize,
}

impl ControlSpec {
    pub fn constant(target: ControlTarget, lower: f64, upper: f64, budget: usize) -> Self {
        ControlSpec { target, breakpoints: Vec::new(), age_edges: Vec::new(), lower: vec![lower], upper: vec![upper], budget }
    }

    fn per_component(&self) -> usize {
        (self.breakpoints.len() + 1) * (self.age_edges.len() + 1)
    }

    pub fn coefficients(&self) -> usize {
        self.per_component() * self.target.components()
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let pick = |v: &[f64]| if v.len() == 1 { v[0] } else { v[i] };
        (pick(&self.lower), pick(&self.upper))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.coefficients();
        for v in [&self.lower, &self.upper] {
            if v.len() != 1 && v.len() != n {
                return Err(Error::InvalidConfig(format!("expected 1 or {n} bounds, got {}", v.len())));
            }
        }
        for i in 0..n {
            let (lo, hi) = self.bounds(i);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("bounds of coefficient {i} must be finite with lower <= upper")));
            }
            if lo < 0.0 {
                return Err(Error::InvalidConfig("controlled rates must be nonnegative".into()));
            }
        }
        for v in [&self.breakpoints, &self.age_edges] {
            if v.windows(2).any(|w| !(w[0] < w[1])) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig("breakpoints must be finite and strictly ascending".into()));
            }
        }
        if self.budget < 2 * n {
            return Err(Error::InvalidConfig(format!("budget {} is below twice the {n} coefficients", self.budget)));
        }
        Ok(())
    }

    /// The controlled rate of component `slot` for coefficients `c`.
    pub fn rate(&self, c: &[f64], slot: usize) -> Rate {
        let per = self.per_component();
        let coefs = c[slot * per..(slot + 1) * per].to_vec();
        let sup = coefs.iter().copied().fold(0.0, f64::max);
        let bp = self.breakpoints.clone();
        let edges = self.age_edges.clone();
        let bins = edges.len() + 1;
        if per == 1 {
            return Rate::Const(coefs[0]);
        }
        Rate::field(sup, move |t, x| {
            let piece = bp.partition_point(|&b| b <= t);
            let bin = edges.partition_point(|&e| e <= x[0]);
            coefs[piece * bins + bin]
        })
    }
}

/// Trapezoid in time of the grid integral of `f(t, x, u(t, x))`.
fn space_time<F>(grid: &Grid, traj: &Trajectory, f: F) -> f64
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    let mut x = vec![0.0; grid.dim()];
    let vals: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            let mut acc = 0.0;
            for node in 0..grid.len() {
                grid.node_coords(node, &mut x);
                acc += f(t, &x, s.node(node));
            }
            acc * grid.weight()
        })
        .collect();
    let mut total = 0.0;
    for j in 1..vals.len() {
        total += 0.5 * (traj.times[j] - traj.times[j - 1]) * (vals[j] + vals[j - 1]);
    }
    total
}

/// Deaths over the trajectory: `∫∫ mu_I I + mu_H H`.
pub fn cost_deaths(grid: &Grid, traj: &Trajectory, mu_i: &Rate, mu_h: &Rate) -> f64 {
    space_time(grid, traj, |t, x, u| mu_i.eval(t, x) * u[I] + mu_h.eval(t, x) * u[H])
}

/// Largest nodal value of the infectives over all stored times.
pub fn cost_peak_infection(traj: &Trajectory) -> f64 {
    traj.states.iter().map(|s| s.component_sup(I)).fold(0.0, f64::max)
}

/// Harvest value `∫∫ K1 f1 u1 + K2 f2 u2`.
pub fn profit(grid: &Grid, traj: &Trajectory, effort: [&Rate; 2], value: [&Rate; 2]) -> f64 {
    space_time(grid, traj, |t, x, u| {
        value[0].eval(t, x) * effort[0].eval(t, x) * u[0] + value[1].eval(t, x) * effort[1].eval(t, x) * u[1]
    })
}

#[derive(Debug, Clone)]
pub enum Objective {
    Deaths { mu_i: Rate, mu_h: Rate },
    Peak,
    /// Minimizes minus the profit, with the efforts taken from the control.
    NegProfit { value: [Rate; 2] },
}

/// One solver run of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub run: usize,
    pub point: Vec<f64>,
    /// `None` when the solve failed.
    pub cost: Option<f64>,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub trace: Vec<TraceEntry>,
    pub runs: usize,
    /// Step sizes when the search stopped.
    pub steps: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Coordinate pattern search on the box of `spec`, starting at its center.
/// All probes of a sweep are evaluated concurrently and the incumbent is
/// updated afterwards in probe order.
pub fn pattern_search<F>(spec: &ControlSpec, eval: F) -> Result<OptimizeResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    spec.validate()?;
    let n = spec.coefficients();
    let range: Vec<f64> = (0..n).map(|i| spec.bounds(i).1 - spec.bounds(i).0).collect();
    let mut x: Vec<f64> = (0..n).map(|i| 0.5 * (spec.bounds(i).0 + spec.bounds(i).1)).collect();
    let mut step: Vec<f64> = range.iter().map(|r| 0.25 * r).collect();
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let first = match eval(&x) {
        Ok(c) if c.is_finite() => Some(c),
        Ok(c) => {
            warnings.push(format!("run 0 at {x:?} returned {c}"));
            None
        }
        Err(e) => {
            warnings.push(format!("run 0 at {x:?} failed: {e}"));
            None
        }
    };
    let mut best = first.unwrap_or(f64::INFINITY);
    trace.push(TraceEntry { run: 0, point: x.clone(), cost: first, incumbent: best });
    let mut runs = 1;
    let done = |step: &[f64]| step.iter().zip(&range).all(|(s, r)| *s < 1e-3 * r || *r == 0.0);
    while runs < spec.budget && !done(&step) {
        let mut probes: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let (lo, hi) = spec.bounds(i);
            for dir in [1.0, -1.0] {
                let mut p = x.clone();
                p[i] = (x[i] + dir * step[i]).clamp(lo, hi);
                if p[i] != x[i] && !probes.contains(&p) {
                    probes.push(p);
                }
            }
        }
        probes.truncate(spec.budget - runs);
        if probes.is_empty() {
            step.iter_mut().for_each(|s| *s *= 0.5);
            continue;
        }
        let costs: Vec<Result<f64>> = probes.par_iter().map(|p| eval(p)).collect();
        let mut moved = None;
        for (p, c) in probes.into_iter().zip(costs) {
            let cost = match c {
                Ok(v) if v.is_finite() => Some(v),
                Ok(v) => {
                    warnings.push(format!("run {runs} at {p:?} returned {v}; discarded"));
                    None
                }
                Err(e) => {
                    warnings.push(format!("run {runs} at {p:?} failed: {e}; discarded"));
                    None
                }
            };
            if let Some(v) = cost {
                if v < best {
                    best = v;
                    moved = Some(p.clone());
                }
            }
            trace.push(TraceEntry { run: runs, point: p, cost, incumbent: best });
            runs += 1;
        }
        match moved {
            Some(p) => x = p,
            None => step.iter_mut().for_each(|s| *s *= 0.5),
        }
    }
    Ok(OptimizeResult { best: x, best_cost: best, trace, runs, steps: step, warnings })
}

/// Solves the system built from each control point and minimizes `objective`.
pub fn optimize<B>(build: B, spec: &ControlSpec, objective: &Objective, horizon: f64, cfg: &PicardConfig) -> Result<OptimizeResult>
where
    B: Fn(&[f64]) -> Result<SystemDef> + Sync,
{
    if let Objective::NegProfit { .. } = objective {
        if spec.target != ControlTarget::CompetitiveEffort {
            return Err(Error::InvalidConfig("the profit objective needs the competitive effort control".into()));
        }
    }
    pattern_search(spec, |c| {
        let sys = build(c)?;
        let traj = solve(&sys, horizon, cfg)?;
        Ok(match objective {
            Objective::Deaths { mu_i, mu_h } => cost_deaths(&sys.grid, &traj, mu_i, mu_h),
            Objective::Peak => cost_peak_infection(&traj),
            Objective::NegProfit { value } => {
                let (f1, f2) = (spec.rate(c, 0), spec.rate(c, 1));
                -profit(&sys.grid, &traj, [&f1, &f2], [&value[0], &value[1]])
            }
        })
    })
}

/// SIHR systems with `kappa` replaced by the control.
pub fn sihr_kappa_builder(base: SihrParams, spec: ControlSpec) -> impl Fn(&[f64]) -> Result<SystemDef> + Sync {
    move |c| {
        let mut p = base.clone();
        p.kappa = spec.rate(c, 0);
        Ok(build_sihr(&p)?.system)
    }
}

/// Competitive systems with both efforts replaced by the control.
pub fn competitive_effort_builder(base: CompetitiveParams, spec: ControlSpec) -> impl Fn(&[f64]) -> Result<SystemDef> + Sync {
    move |c| {
        let mut p = base.clone();
        p.effort = [spec.rate(c, 0), spec.rate(c, 1)];
        Ok(build_competitive(&p)?.system)
    }
}
