//! Fixed-point iteration `w -> T w`: freeze the nonlocal coefficients at an
//! iterate, solve the k linear problems by the representation formula, repeat.
//! Global solutions are built by chaining slabs; a slab that fails to contract
//! is halved.

use std::sync::Arc;

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::characteristics::{default_substeps, CharRecord};
use crate::domain::{Grid, GridFn, Stencil};
use crate::error::{Error, Result};
use crate::problem::{Kernel, SystemDef};
use crate::transport::{evaluate_traced, trace_nodes, LinearProblem};

/// Radius of the ball the iterates must stay in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ball {
    Fixed(f64),
    /// `M = factor * (|u_init|_1 + 1)`, recomputed per slab.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub slab: f64,
    /// Fixed-point tolerance, relative to `max(1, |w|_X)`.
    pub eps_fix: f64,
    pub max_iter: usize,
    pub theta_max: f64,
    pub ball: Ball,
    pub dt_target: f64,
    /// Slabs shorter than `min_slab_fraction * slab` count as a failure.
    pub min_slab_fraction: f64,
    /// Fixed substep count per trace; the default follows the grid CFL number.
    pub substeps: Option<usize>,
    /// Memory budget for caching traces across iterations.
    pub trace_cache_bytes: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            slab: 0.1,
            eps_fix: 1e-10,
            max_iter: 60,
            theta_max: 0.8,
            ball: Ball::Relative(2.0),
            dt_target: 0.01,
            min_slab_fraction: 1e-6,
            substeps: None,
            trace_cache_bytes: 512 << 20,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.slab > 0.0 && self.slab.is_finite()) {
            return bad("slab length must be positive");
        }
        if !(self.eps_fix > 0.0) {
            return bad("eps_fix must be positive");
        }
        if !(self.theta_max > 0.0 && self.theta_max < 1.0) {
            return bad("theta_max must lie in (0, 1)");
        }
        if !(self.dt_target > 0.0) {
            return bad("dt_target must be positive");
        }
        if self.max_iter < 2 {
            return bad("max_iter must be at least 2");
        }
        match self.ball {
            Ball::Fixed(m) if !(m > 0.0) => bad("ball radius must be positive"),
            Ball::Relative(f) if !(f >= 1.0) => bad("relative ball factor must be at least 1"),
            _ => Ok(()),
        }
    }

    fn radius(&self, init_norm: f64) -> Result<f64> {
        match self.ball {
            Ball::Relative(f) => Ok(f * (init_norm + 1.0)),
            Ball::Fixed(m) if m > init_norm + 1.0 => Ok(m),
            Ball::Fixed(m) => Err(Error::InvalidConfig(format!(
                "ball radius {m} must exceed |u|_1 + 1 = {}",
                init_norm + 1.0
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabDiagnostics {
    pub t0: f64,
    pub t1: f64,
    pub iterations: usize,
    /// `|w_{n+1} - w_n|_X` for each iteration.
    pub distances: Vec<f64>,
    /// Largest measured ratio of consecutive distances (0 if none was measurable).
    pub theta: f64,
    pub radius: f64,
    pub halvings: usize,
    pub max_norm: f64,
}

/// States at increasing times with per-slab diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFn>,
    pub slabs: Vec<SlabDiagnostics>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn final_state(&self) -> &GridFn {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Index of the stored time nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    pub fn min_value(&self) -> f64 {
        self.states.iter().map(GridFn::min_value).fold(f64::INFINITY, f64::min)
    }

    /// `sum_h sup_t |w^h(t)|_1`.
    pub fn x_norm(&self, grid: &Grid) -> f64 {
        x_norm(grid, &self.states)
    }
}

fn x_norm(grid: &Grid, states: &[GridFn]) -> f64 {
    let k = states.first().map_or(0, GridFn::k);
    (0..k)
        .map(|h| states.iter().map(|s| grid.component_l1(s, h)).fold(0.0, f64::max))
        .sum()
}

fn x_distance(grid: &Grid, a: &[GridFn], b: &[GridFn]) -> f64 {
    let diffs: Vec<GridFn> = a.iter().zip(b).map(|(x, y)| x.sub(y)).collect();
    x_norm(grid, &diffs)
}

enum Eta {
    None,
    /// `k * dim` values.
    Uniform(Vec<f64>),
    /// `N * k * dim` values.
    Nodes(Vec<f64>),
    /// Per face, `len * k * dim` values.
    Faces(Vec<Vec<f64>>),
}

type Buf = SmallVec<[f64; 8]>;

fn eta_table(kernel: &Kernel, grid: &Grid, k: usize, t: f64, w: &GridFn, boundary: bool) -> Result<Eta> {
    if kernel.is_none() {
        return Ok(Eta::None);
    }
    let dim = kernel.dim;
    let integrate = |x: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(k * dim);
        for h in 0..k {
            out.extend(kernel.integrate(grid, h, t, x, w)?);
        }
        Ok(out)
    };
    if kernel.uniform {
        let x = if boundary && !grid.faces().is_empty() { grid.face_point(0, 0) } else { grid.node_point(0) };
        return Ok(Eta::Uniform(integrate(&x)?));
    }
    if boundary {
        let faces = (0..grid.faces().len())
            .map(|f| {
                let rows: Result<Vec<Vec<f64>>> =
                    (0..grid.faces()[f].len()).into_par_iter().map(|j| integrate(&grid.face_point(f, j))).collect();
                Ok(rows?.concat())
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(Eta::Faces(faces));
    }
    let rows: Result<Vec<Vec<f64>>> = (0..grid.len()).into_par_iter().map(|n| integrate(&grid.node_point(n))).collect();
    Ok(Eta::Nodes(rows?.concat()))
}

/// Coefficients of the k linear problems obtained by freezing a trajectory.
pub struct Frozen {
    sys: SystemDef,
    times: Vec<f64>,
    states: Vec<GridFn>,
    eta_p: Vec<Eta>,
    eta_q: Vec<Eta>,
    eta_u: Vec<Eta>,
}

impl Frozen {
    pub fn build(sys: &SystemDef, times: &[f64], states: &[GridFn]) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::DimensionMismatch { what: "trajectory", expected: times.len(), got: states.len() });
        }
        let grid = &*sys.grid;
        let k = sys.k;
        let mut eta_p = Vec::with_capacity(times.len());
        let mut eta_q = Vec::with_capacity(times.len());
        let mut eta_u = Vec::with_capacity(times.len());
        for (&t, w) in times.iter().zip(states) {
            w.check_finite()?;
            eta_p.push(eta_table(&sys.kp, grid, k, t, w, false)?);
            eta_q.push(eta_table(&sys.kq, grid, k, t, w, false)?);
            eta_u.push(eta_table(&sys.ku, grid, k, t, w, true)?);
        }
        Ok(Frozen { sys: sys.clone(), times: times.to_vec(), states: states.to_vec(), eta_p, eta_q, eta_u })
    }

    fn locate(&self, tau: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 {
            return (0, 0.0);
        }
        let j = self.times.partition_point(|&s| s <= tau).clamp(1, n - 1);
        let (s0, s1) = (self.times[j - 1], self.times[j]);
        let a = if s1 > s0 { ((tau - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        (j - 1, a)
    }

    fn state_at(&self, j: usize, a: f64, st: &Stencil, out: &mut Buf) {
        let k = self.sys.k;
        out.clear();
        out.resize(k, 0.0);
        let (w0, w1) = (&self.states[j], &self.states[(j + 1).min(self.states.len() - 1)]);
        for &(node, wt) in st {
            let (r0, r1) = (w0.node(node), w1.node(node));
            for h in 0..k {
                out[h] += wt * ((1.0 - a) * r0[h] + a * r1[h]);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn blend(&self, table: &[Eta], dim: usize, h: usize, j: usize, a: f64, st: Option<&Stencil>, face: Option<usize>, out: &mut Buf) {
        out.clear();
        out.resize(dim, 0.0);
        let j1 = (j + 1).min(table.len() - 1);
        let k = self.sys.k;
        for (tab, wt) in [(&table[j], 1.0 - a), (&table[j1], a)] {
            if wt == 0.0 {
                continue;
            }
            match tab {
                Eta::None => {}
                Eta::Uniform(v) => {
                    for r in 0..dim {
                        out[r] += wt * v[h * dim + r];
                    }
                }
                Eta::Nodes(v) => {
                    if let Some(st) = st {
                        for &(node, s) in st {
                            let base = (node * k + h) * dim;
                            for r in 0..dim {
                                out[r] += wt * s * v[base + r];
                            }
                        }
                    }
                }
                Eta::Faces(faces) => {
                    if let (Some(st), Some(f)) = (st, face) {
                        let v = &faces[f];
                        for &(node, s) in st {
                            let base = (node * k + h) * dim;
                            for r in 0..dim {
                                out[r] += wt * s * v[base + r];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn p(&self, h: usize, tau: f64, x: &[f64]) -> f64 {
        let (j, a) = self.locate(tau);
        let needs_stencil = self.sys.p_uses_state || !self.sys.kp.uniform;
        let st = if needs_stencil { Some(self.sys.grid.stencil(x)) } else { None };
        let mut u = Buf::new();
        if self.sys.p_uses_state {
            self.state_at(j, a, st.as_ref().unwrap(), &mut u);
        } else {
            u.resize(self.sys.k, 0.0);
        }
        let mut eta = Buf::new();
        self.blend(&self.eta_p, self.sys.kp.dim, h, j, a, st.as_ref(), None, &mut eta);
        (self.sys.p)(h, tau, x, &u, &eta)
    }

    pub fn q(&self, h: usize, tau: f64, x: &[f64]) -> f64 {
        let (j, a) = self.locate(tau);
        let st = self.sys.grid.stencil(x);
        let mut u = Buf::new();
        self.state_at(j, a, &st, &mut u);
        let mut eta = Buf::new();
        self.blend(&self.eta_q, self.sys.kq.dim, h, j, a, Some(&st), None, &mut eta);
        (self.sys.q)(h, tau, x, &u, &eta)
    }

    pub fn ub(&self, h: usize, tau: f64, xi: &[f64]) -> f64 {
        let (j, a) = self.locate(tau);
        let grid = &self.sys.grid;
        let face = grid.domain().inflow_face_of(xi);
        let st = match (face, self.sys.ku.uniform) {
            (Some(f), false) => Some(grid.face_stencil(f, xi)),
            _ => None,
        };
        let mut eta = Buf::new();
        self.blend(&self.eta_u, self.sys.ku.dim, h, j, a, st.as_ref(), face, &mut eta);
        (self.sys.ub)(h, tau, xi, &eta)
    }

    /// Linear problem of component `h`, starting from the first stored state.
    pub fn linear_problem(self: &Arc<Self>, h: usize) -> LinearProblem {
        let (fp, fq, fu) = (self.clone(), self.clone(), self.clone());
        LinearProblem {
            velocity: self.sys.velocities[h].clone(),
            p: Arc::new(move |t, x| fp.p(h, t, x)),
            q: Arc::new(move |t, x| fq.q(h, t, x)),
            ub: Arc::new(move |t, x| fu.ub(h, t, x)),
            u0: self.states[0].component_fn(h),
            t0: self.times[0],
        }
    }
}

/// Freezes a whole trajectory: one linear problem per component.
pub fn freeze(sys: &SystemDef, traj: &Trajectory) -> Result<Vec<LinearProblem>> {
    let frozen = Arc::new(Frozen::build(sys, &traj.times, &traj.states)?);
    Ok((0..sys.k).map(|h| frozen.linear_problem(h)).collect())
}

/// Components grouped by identical velocity, so traces are shared.
fn velocity_groups(sys: &SystemDef) -> (Vec<usize>, Vec<usize>) {
    let mut reps: Vec<usize> = Vec::new();
    let mut group = vec![0; sys.k];
    for h in 0..sys.k {
        match reps.iter().position(|&r| sys.velocities[r].same_as(&sys.velocities[h])) {
            Some(g) => group[h] = g,
            None => {
                group[h] = reps.len();
                reps.push(h);
            }
        }
    }
    (reps, group)
}

struct Tracer<'a> {
    sys: &'a SystemDef,
    times: Vec<f64>,
    substeps: Vec<usize>,
    reps: Vec<usize>,
    group: Vec<usize>,
    cache: Option<Vec<Vec<Vec<CharRecord>>>>,
}

impl<'a> Tracer<'a> {
    fn new(sys: &'a SystemDef, times: &[f64], cfg: &PicardConfig) -> Result<Self> {
        let grid = &*sys.grid;
        let (reps, group) = velocity_groups(sys);
        let t0 = times[0];
        let t1 = *times.last().unwrap();
        let vmax = reps.iter().map(|&r| sys.velocities[r].sampled_bounds(grid, t0, t1).0).fold(0.0, f64::max);
        let substeps: Vec<usize> = times
            .iter()
            .map(|&t| cfg.substeps.unwrap_or_else(|| default_substeps(t - t0, vmax, grid.min_width())))
            .collect();
        let bytes: usize = substeps.iter().map(|s| (s + 2) * (grid.dim() + 1) * 8 + 96).sum::<usize>() * grid.len() * reps.len();
        let mut tracer = Tracer { sys, times: times.to_vec(), substeps, reps, group, cache: None };
        if bytes <= cfg.trace_cache_bytes {
            let mut cache = Vec::with_capacity(tracer.reps.len());
            for g in 0..tracer.reps.len() {
                let mut per_knot = Vec::with_capacity(times.len());
                for j in 0..times.len() {
                    per_knot.push(if j == 0 { Vec::new() } else { tracer.trace(g, j)? });
                }
                cache.push(per_knot);
            }
            tracer.cache = Some(cache);
        }
        Ok(tracer)
    }

    fn trace(&self, g: usize, j: usize) -> Result<Vec<CharRecord>> {
        let v = &self.sys.velocities[self.reps[g]];
        trace_nodes(v, &self.sys.grid, self.times[0], self.times[j], self.substeps[j])
    }

    /// One application of the operator at every knot after the first.
    fn apply(&self, frozen: &Arc<Frozen>) -> Result<Vec<GridFn>> {
        let sys = self.sys;
        let grid = &*sys.grid;
        let lps: Vec<LinearProblem> = (0..sys.k).map(|h| frozen.linear_problem(h)).collect();
        let mut out = Vec::with_capacity(self.times.len());
        out.push(frozen.states[0].clone());
        for j in 1..self.times.len() {
            let mut comps = Vec::with_capacity(sys.k);
            let fresh: Vec<Option<Vec<CharRecord>>> = match &self.cache {
                Some(_) => vec![None; self.reps.len()],
                None => (0..self.reps.len()).map(|g| self.trace(g, j).map(Some)).collect::<Result<_>>()?,
            };
            for (h, lp) in lps.iter().enumerate() {
                let g = self.group[h];
                let recs = match &self.cache {
                    Some(c) => &c[g][j],
                    None => fresh[g].as_ref().unwrap(),
                };
                comps.push(evaluate_traced(lp, grid, recs)?);
            }
            out.push(GridFn::from_components(&comps)?);
        }
        Ok(out)
    }
}

/// One application of the operator to the trajectory `(times, w)`.
pub fn apply_t(sys: &SystemDef, times: &[f64], w: &[GridFn], cfg: &PicardConfig) -> Result<Vec<GridFn>> {
    let frozen = Arc::new(Frozen::build(sys, times, w)?);
    let tracer = Tracer::new(sys, times, &PicardConfig { trace_cache_bytes: 0, ..cfg.clone() })?;
    tracer.apply(&frozen)
}

enum SlabFailure {
    Error(Error),
    Ball,
    Contraction,
    MaxIter,
}

/// Iterates on one slab of fixed length. Hard errors in the model are
/// reported as failures so the caller can shrink the slab.
fn attempt_slab(
    sys: &SystemDef,
    u_init: &GridFn,
    t0: f64,
    len: f64,
    cfg: &PicardConfig,
) -> std::result::Result<(Vec<f64>, Vec<GridFn>, SlabDiagnostics), SlabFailure> {
    let grid = &*sys.grid;
    let knots = ((len / cfg.dt_target).ceil() as usize).max(8);
    let mut times: Vec<f64> = (0..=knots).map(|j| t0 + len * j as f64 / knots as f64).collect();
    times[knots] = t0 + len;
    let init_norm = grid.l1_norm(u_init).map_err(SlabFailure::Error)?;
    let radius = cfg.radius(init_norm).map_err(SlabFailure::Error)?;
    let tracer = Tracer::new(sys, &times, cfg).map_err(SlabFailure::Error)?;
    let mut w = vec![u_init.clone(); knots + 1];
    let mut distances = Vec::new();
    let mut theta: f64 = 0.0;
    for n in 0..cfg.max_iter {
        let frozen = Arc::new(Frozen::build(sys, &times, &w).map_err(SlabFailure::Error)?);
        let u = tracer.apply(&frozen).map_err(SlabFailure::Error)?;
        let norm = x_norm(grid, &u);
        if !norm.is_finite() || norm > radius {
            return Err(SlabFailure::Ball);
        }
        let d = x_distance(grid, &u, &w);
        let scale = norm.max(1.0);
        if let Some(&prev) = distances.last() {
            // ratios below the round-off floor carry no information
            if d > 1e-12 * scale && prev > 0.0 {
                let r: f64 = d / prev;
                theta = theta.max(r);
                if r > cfg.theta_max {
                    return Err(SlabFailure::Contraction);
                }
            }
        }
        distances.push(d);
        w = u;
        if d <= cfg.eps_fix * scale {
            let diag = SlabDiagnostics {
                t0,
                t1: t0 + len,
                iterations: n + 1,
                distances,
                theta,
                radius,
                halvings: 0,
                max_norm: norm,
            };
            return Ok((times, w, diag));
        }
    }
    Err(SlabFailure::MaxIter)
}

/// Solves one slab starting at `t0`, halving from `cfg.slab` until the
/// iteration contracts.
pub fn solve_slab(sys: &SystemDef, u_init: &GridFn, t0: f64, cfg: &PicardConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let (times, states, diag) = slab_with_halving(sys, u_init, t0, cfg.slab, cfg)?;
    Ok(Trajectory { times, states, slabs: vec![diag] })
}

fn slab_with_halving(
    sys: &SystemDef,
    u_init: &GridFn,
    t0: f64,
    first: f64,
    cfg: &PicardConfig,
) -> Result<(Vec<f64>, Vec<GridFn>, SlabDiagnostics)> {
    let mut len = first;
    let mut halvings = 0;
    loop {
        match attempt_slab(sys, u_init, t0, len, cfg) {
            Ok((times, states, mut diag)) => {
                diag.halvings = halvings;
                return Ok((times, states, diag));
            }
            Err(SlabFailure::Error(e @ Error::InvalidConfig(_))) => return Err(e),
            Err(_) => {
                let failed = len;
                len *= 0.5;
                halvings += 1;
                if len < cfg.min_slab_fraction * cfg.slab {
                    return Err(Error::LocalExistenceFailure { reached: t0, attempted: t0 + failed });
                }
            }
        }
    }
}

/// Solves on `[0, horizon]` from the system's initial datum.
pub fn solve(sys: &SystemDef, horizon: f64, cfg: &PicardConfig) -> Result<Trajectory> {
    solve_from(sys, &sys.initial_state(), horizon, cfg)
}

/// Solves on `[0, horizon]` from `u_init`.
pub fn solve_from(sys: &SystemDef, u_init: &GridFn, horizon: f64, cfg: &PicardConfig) -> Result<Trajectory> {
    let (traj, err) = solve_partial(sys, u_init, horizon, cfg)?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Like [`solve_from`] but keeps the trajectory computed before a failure.
pub fn solve_partial(
    sys: &SystemDef,
    u_init: &GridFn,
    horizon: f64,
    cfg: &PicardConfig,
) -> Result<(Trajectory, Option<Error>)> {
    cfg.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig("horizon must be positive".into()));
    }
    if u_init.k() != sys.k || u_init.len() != sys.grid.len() {
        return Err(Error::DimensionMismatch { what: "initial state", expected: sys.grid.len() * sys.k, got: u_init.values().len() });
    }
    u_init.check_finite()?;
    sys.check_inflow(0.0, horizon, 8)?;
    let mut traj = Trajectory { times: vec![0.0], states: vec![u_init.clone()], slabs: Vec::new() };
    let mut t = 0.0;
    let mut next = cfg.slab;
    let end_tol = 1e-12 * horizon.max(1.0);
    while horizon - t > end_tol {
        let len = next.min(horizon - t);
        let start = traj.final_state().clone();
        match slab_with_halving(sys, &start, t, len, cfg) {
            Ok((times, states, diag)) => {
                let used = diag.t1 - diag.t0;
                traj.times.extend_from_slice(&times[1..]);
                traj.states.extend(states.into_iter().skip(1));
                traj.slabs.push(diag);
                t = *traj.times.last().unwrap();
                if horizon - t <= end_tol {
                    *traj.times.last_mut().unwrap() = horizon;
                }
                next = (2.0 * used).min(cfg.slab);
            }
            Err(e @ Error::LocalExistenceFailure { .. }) => return Ok((traj, Some(e))),
            Err(e) => return Err(e),
        }
    }
    Ok((traj, None))
}

/// Result of two solves from nearby data.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzProbe {
    pub ratio: f64,
    pub data_distance: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

/// Runs `solve` from two initial states and reports `|u_a(T) - u_b(T)|_1 / |a - b|_1`.
pub fn lipschitz_probe(sys: &SystemDef, a: &GridFn, b: &GridFn, horizon: f64, cfg: &PicardConfig) -> Result<LipschitzProbe> {
    let grid = &*sys.grid;
    let ta = solve_from(sys, a, horizon, cfg)?;
    let tb = solve_from(sys, b, horizon, cfg)?;
    let data_distance = grid.l1_norm(&a.sub(b))?;
    let mut times = Vec::new();
    let mut distances = Vec::new();
    for (i, &t) in ta.times.iter().enumerate() {
        if let Some(j) = tb.times.iter().position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t)) {
            times.push(t);
            distances.push(grid.l1_norm(&ta.states[i].sub(&tb.states[j]))?);
        }
    }
    let last = grid.l1_norm(&ta.final_state().sub(tb.final_state()))?;
    let ratio = if data_distance > 0.0 { last / data_distance } else { 0.0 };
    Ok(LipschitzProbe { ratio, data_distance, times, distances })
}
