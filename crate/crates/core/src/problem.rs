//! The k-component system in kernel form: velocities, local coefficient
//! maps fed by integrals of the state against bounded kernels, boundary maps
//! and initial data, plus the declared growth and Lipschitz constants.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{BoundaryFn, Grid, GridFn};
use crate::error::{Error, Result};

pub type FieldFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type DivFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// `(h, t, x, u_local, eta) -> value`.
pub type CoefFn = Arc<dyn Fn(usize, f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
/// `(h, t, xi, eta) -> value`.
pub type BoundaryMapFn = Arc<dyn Fn(usize, f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// `(h, t, x, x', out)`; `out` is a row-major `dim × k` matrix.
pub type KernelFn = Arc<dyn Fn(usize, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type InitFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A velocity field together with its divergence.
#[derive(Clone)]
pub struct Velocity {
    field: FieldFn,
    div: DivFn,
    dim: usize,
    constant: Option<Vec<f64>>,
}

impl fmt::Debug for Velocity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.constant {
            Some(c) => write!(f, "Velocity::constant({c:?})"),
            None => write!(f, "Velocity(dim = {})", self.dim),
        }
    }
}

impl Velocity {
    pub fn new<F, D>(dim: usize, field: F, div: D) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        D: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Velocity { field: Arc::new(field), div: Arc::new(div), dim, constant: None }
    }

    pub fn constant(v: &[f64]) -> Self {
        let c = v.to_vec();
        let inner = c.clone();
        Velocity {
            field: Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&inner)),
            div: Arc::new(|_, _| 0.0),
            dim: c.len(),
            constant: Some(c),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.field)(t, x, out)
    }

    #[inline]
    pub fn div(&self, t: f64, x: &[f64]) -> f64 {
        (self.div)(t, x)
    }

    pub fn as_constant(&self) -> Option<&[f64]> {
        self.constant.as_deref()
    }

    /// True when both handles describe the same field.
    pub fn same_as(&self, other: &Velocity) -> bool {
        match (&self.constant, &other.constant) {
            (Some(a), Some(b)) => a == b,
            _ => Arc::ptr_eq(&self.field, &other.field),
        }
    }

    /// Largest Euclidean speed and largest `|div v|` seen on the grid nodes at
    /// a few times in `[t0, t1]`.
    pub fn sampled_bounds(&self, grid: &Grid, t0: f64, t1: f64) -> (f64, f64) {
        if let Some(c) = &self.constant {
            return (c.iter().map(|v| v * v).sum::<f64>().sqrt(), 0.0);
        }
        let mut x = vec![0.0; grid.dim()];
        let mut v = vec![0.0; self.dim];
        let mut speed: f64 = 0.0;
        let mut div: f64 = 0.0;
        for s in 0..=4 {
            let t = t0 + (t1 - t0) * s as f64 / 4.0;
            for node in 0..grid.len() {
                grid.node_coords(node, &mut x);
                self.eval(t, &x, &mut v);
                speed = speed.max(v.iter().map(|a| a * a).sum::<f64>().sqrt());
                div = div.max(self.div(t, &x).abs());
            }
        }
        (speed, div)
    }
}

/// A bounded kernel producing `dim` integrals per component.
#[derive(Clone)]
pub struct Kernel {
    pub dim: usize,
    pub f: KernelFn,
    /// The kernel does not depend on the evaluation point `x`.
    pub uniform: bool,
    /// Sup norm of the kernel entries, used to turn kernel-form constants into
    /// growth constants.
    pub sup: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel").field("dim", &self.dim).field("uniform", &self.uniform).finish()
    }
}

impl Kernel {
    pub fn none() -> Self {
        Kernel { dim: 0, f: Arc::new(|_, _, _, _, _| {}), uniform: true, sup: 0.0 }
    }

    pub fn new<F>(dim: usize, uniform: bool, sup: f64, f: F) -> Self
    where
        F: Fn(usize, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Kernel { dim, f: Arc::new(f), uniform, sup }
    }

    pub fn is_none(&self) -> bool {
        self.dim == 0
    }

    /// `∫ K^h(t, at, x') w(x') dx'` by grid quadrature.
    pub fn integrate(&self, grid: &Grid, h: usize, t: f64, at: &[f64], w: &GridFn) -> Result<Vec<f64>> {
        if self.dim == 0 {
            return Ok(Vec::new());
        }
        let f = &self.f;
        grid.integrate_kernel(|x, xp, out| f(h, t, x, xp, out), self.dim, w, at)
    }
}

/// The system of `k` balance laws with nonlocal coefficients.
#[derive(Clone)]
pub struct SystemDef {
    pub k: usize,
    pub grid: Arc<Grid>,
    pub velocities: Vec<Velocity>,
    pub p: CoefFn,
    pub q: CoefFn,
    pub ub: BoundaryMapFn,
    pub kp: Kernel,
    pub kq: Kernel,
    pub ku: Kernel,
    pub u0: InitFn,
    /// Lower bound `V` on inflow normal speeds.
    pub inflow_bound: f64,
    /// Whether `p` reads its pointwise state slot.
    pub p_uses_state: bool,
}

impl fmt::Debug for SystemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDef")
            .field("k", &self.k)
            .field("cells", &self.grid.cells())
            .field("velocities", &self.velocities)
            .field("kp", &self.kp)
            .field("kq", &self.kq)
            .field("ku", &self.ku)
            .finish()
    }
}

impl SystemDef {
    /// A system with zero coefficients, zero boundary data and no kernels.
    pub fn new<I>(k: usize, grid: Arc<Grid>, velocities: Vec<Velocity>, u0: I) -> Result<Self>
    where
        I: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if k == 0 {
            return Err(Error::InvalidModel("k must be at least 1".into()));
        }
        if velocities.len() != k {
            return Err(Error::DimensionMismatch { what: "velocities", expected: k, got: velocities.len() });
        }
        if let Some(v) = velocities.iter().find(|v| v.dim() != grid.dim()) {
            return Err(Error::DimensionMismatch { what: "velocity dimension", expected: grid.dim(), got: v.dim() });
        }
        Ok(SystemDef {
            k,
            grid,
            velocities,
            p: Arc::new(|_, _, _, _, _| 0.0),
            q: Arc::new(|_, _, _, _, _| 0.0),
            ub: Arc::new(|_, _, _, _| 0.0),
            kp: Kernel::none(),
            kq: Kernel::none(),
            ku: Kernel::none(),
            u0: Arc::new(u0),
            inflow_bound: 0.0,
            p_uses_state: false,
        })
    }

    pub fn with_p<F>(mut self, kernel: Kernel, uses_state: bool, f: F) -> Self
    where
        F: Fn(usize, f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.kp = kernel;
        self.p_uses_state = uses_state;
        self.p = Arc::new(f);
        self
    }

    pub fn with_q<F>(mut self, kernel: Kernel, f: F) -> Self
    where
        F: Fn(usize, f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.kq = kernel;
        self.q = Arc::new(f);
        self
    }

    pub fn with_ub<F>(mut self, kernel: Kernel, f: F) -> Self
    where
        F: Fn(usize, f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.ku = kernel;
        self.ub = Arc::new(f);
        self
    }

    /// Samples the inflow condition and the finiteness of every callback.
    pub fn validated(mut self, inflow_bound: f64, samples: usize, seed: u64) -> Result<Self> {
        self.inflow_bound = inflow_bound;
        self.check_inflow(0.0, 1.0, samples)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = self.initial_state();
        u.check_finite()?;
        let grid = self.grid.clone();
        let mut ustate = vec![0.0; self.k];
        for _ in 0..samples.max(1) {
            let t = rng.gen_range(0.0..1.0);
            let node = rng.gen_range(0..grid.len());
            let x = grid.node_point(node);
            for (h, s) in ustate.iter_mut().enumerate() {
                *s = u.get(node, h);
            }
            for h in 0..self.k {
                if !self.eval_p_local(h, t, &x, &ustate, &u)?.is_finite() {
                    return Err(Error::CoefficientBlowUp { what: "p", t });
                }
                if !self.eval_q(h, t, &x, &ustate, &u)?.is_finite() {
                    return Err(Error::CoefficientBlowUp { what: "q", t });
                }
            }
            for f in 0..grid.faces().len() {
                let j = rng.gen_range(0..grid.faces()[f].len());
                let xi = grid.face_point(f, j);
                for h in 0..self.k {
                    if !self.eval_ub(h, t, &xi, &u)?.is_finite() {
                        return Err(Error::CoefficientBlowUp { what: "u_b", t });
                    }
                }
            }
        }
        Ok(self)
    }

    /// Checks `v_i > V` at face nodes for a few times in `[t0, t1]`.
    pub fn check_inflow(&self, t0: f64, t1: f64, samples: usize) -> Result<()> {
        let grid = &self.grid;
        let mut v = vec![0.0; grid.dim()];
        let times = samples.clamp(2, 16);
        for (f, face) in grid.faces().iter().enumerate() {
            let axis = face.axis;
            for s in 0..times {
                let t = t0 + (t1 - t0) * s as f64 / (times - 1) as f64;
                for j in 0..face.len() {
                    let xi = grid.face_point(f, j);
                    for vel in &self.velocities {
                        vel.eval(t, &xi, &mut v);
                        if !v[axis].is_finite() {
                            return Err(Error::NonFinite { what: "velocity" });
                        }
                        if v[axis] <= self.inflow_bound {
                            return Err(Error::InflowViolation { face: f, speed: v[axis], bound: self.inflow_bound });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> GridFn {
        let f = &self.u0;
        GridFn::sample(&self.grid, self.k, |x, out| f(x, out))
    }

    fn check_state(&self, w: &GridFn) -> Result<()> {
        if w.k() != self.k || w.len() != self.grid.len() {
            return Err(Error::DimensionMismatch { what: "state", expected: self.grid.len() * self.k, got: w.values().len() });
        }
        Ok(())
    }

    /// `p^h(t, x, w)`; the pointwise slot is read from `w` at `x`.
    pub fn eval_p(&self, h: usize, t: f64, x: &[f64], w: &GridFn) -> Result<f64> {
        self.check_state(w)?;
        let mut local = vec![0.0; self.k];
        w.interpolate(&self.grid, x, &mut local);
        self.eval_p_local(h, t, x, &local, w)
    }

    /// `p^h` with an explicit pointwise state.
    pub fn eval_p_local(&self, h: usize, t: f64, x: &[f64], u: &[f64], w: &GridFn) -> Result<f64> {
        self.check_state(w)?;
        let eta = self.kp.integrate(&self.grid, h, t, x, w)?;
        Ok((self.p)(h, t, x, u, &eta))
    }

    pub fn eval_q(&self, h: usize, t: f64, x: &[f64], u: &[f64], w: &GridFn) -> Result<f64> {
        self.check_state(w)?;
        if u.len() != self.k {
            return Err(Error::DimensionMismatch { what: "pointwise state", expected: self.k, got: u.len() });
        }
        let eta = self.kq.integrate(&self.grid, h, t, x, w)?;
        Ok((self.q)(h, t, x, u, &eta))
    }

    pub fn eval_ub(&self, h: usize, t: f64, xi: &[f64], w: &GridFn) -> Result<f64> {
        self.check_state(w)?;
        if self.grid.domain().inflow_face_of(xi).is_none() {
            return Err(Error::NotOnInflowFace);
        }
        let eta = self.ku.integrate(&self.grid, h, t, xi, w)?;
        Ok((self.ub)(h, t, xi, &eta))
    }
}

/// Constants of the kernel-form bounds, before multiplying by kernel norms.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFormConstants {
    pub p1: f64,
    pub p2: f64,
    pub q1: f64,
    pub q3: f64,
    pub q2: GridFn,
    pub b: BoundaryFn,
}

pub type C1Fn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type C2Fn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Growth and Lipschitz constants of `p`, `q` and `u_b`, and the global
/// growth bound `sum_h p^h u^h + q^h <= C1(t,x) + C2(t) sum_h u^h`.
#[derive(Clone)]
pub struct HypothesisConstants {
    pub p1: f64,
    pub p2: f64,
    pub q1: f64,
    pub q3: f64,
    pub q2: GridFn,
    pub b: BoundaryFn,
    pub c1: C1Fn,
    pub c2: C2Fn,
    pub kernel_form: Option<KernelFormConstants>,
}

impl fmt::Debug for HypothesisConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HypothesisConstants")
            .field("p1", &self.p1)
            .field("p2", &self.p2)
            .field("q1", &self.q1)
            .field("q3", &self.q3)
            .field("q2_sup", &self.q2.component_sup(0))
            .field("b_sup", &self.b.sup())
            .finish()
    }
}

impl HypothesisConstants {
    /// All-zero constants on `grid`.
    pub fn zero(grid: &Grid) -> Self {
        HypothesisConstants {
            p1: 0.0,
            p2: 0.0,
            q1: 0.0,
            q3: 0.0,
            q2: GridFn::zeros(grid, 1),
            b: BoundaryFn::zeros(grid),
            c1: Arc::new(|_, _| 0.0),
            c2: Arc::new(|_| 0.0),
            kernel_form: None,
        }
    }

    /// Converts kernel-form constants using the kernel sup norms of `sys`.
    pub fn from_kernel_form(sys: &SystemDef, bar: KernelFormConstants) -> Self {
        let kp = sys.kp.sup;
        let kq = sys.kq.sup;
        let ku = sys.ku.sup;
        HypothesisConstants {
            p1: bar.p1,
            p2: bar.p2 * kp,
            q1: bar.q1,
            q3: bar.q3 * kq,
            q2: bar.q2.scale(kq),
            b: BoundaryFn { faces: bar.b.faces.iter().map(|f| f.iter().map(|v| v * (1.0 + ku)).collect()).collect() },
            c1: Arc::new(|_, _| 0.0),
            c2: Arc::new(|_| 0.0),
            kernel_form: Some(bar),
        }
    }

    pub fn with_growth<A, B>(mut self, c1: A, c2: B) -> Self
    where
        A: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.c1 = Arc::new(c1);
        self.c2 = Arc::new(c2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("P1", self.p1), ("P2", self.p2), ("Q1", self.q1), ("Q3", self.q3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.q2.min_value() < 0.0 || !self.b.is_nonnegative() {
            return Err(Error::InvalidModel("Q2 and B must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn q2_l1(&self, grid: &Grid) -> f64 {
        grid.component_l1(&self.q2, 0)
    }

    pub fn q2_sup(&self) -> f64 {
        self.q2.component_sup(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub samples: usize,
    pub seed: u64,
    /// Upper bound on the L¹ mass of random probe states.
    pub max_mass: f64,
    /// Upper bound on the entries of pointwise probe states.
    pub max_state: f64,
    pub horizon: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { samples: 200, seed: 7, max_mass: 10.0, max_state: 10.0, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Largest observed ratio of the left side to the declared bound.
    pub worst_ratio: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    worst: f64,
    probes: usize,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker { name, worst: 0.0, probes: 0 }
    }

    fn record(&mut self, lhs: f64, bound: f64) {
        self.probes += 1;
        let scale = 1e-12 * (1.0 + bound.abs());
        let r = if lhs <= scale {
            0.0
        } else if bound <= 0.0 {
            f64::INFINITY
        } else {
            (lhs - scale).max(0.0) / bound
        };
        if r.is_nan() {
            self.worst = f64::INFINITY;
        } else {
            self.worst = self.worst.max(r);
        }
    }

    fn finish(self) -> HypothesisCheck {
        HypothesisCheck { name: self.name, pass: self.worst <= 1.0 + 1e-9, worst_ratio: self.worst, probes: self.probes }
    }
}

fn random_state(grid: &Grid, k: usize, mass: f64, signed: bool, rng: &mut ChaCha8Rng) -> GridFn {
    let mut f = GridFn::zeros(grid, k);
    // piecewise-constant random blocks give probes with structure at several scales
    let blocks = rng.gen_range(1..=8usize);
    let n = grid.len();
    let mut amp = vec![0.0; blocks * k];
    for a in amp.iter_mut() {
        *a = if signed { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.0..1.0) };
    }
    for node in 0..n {
        let b = node * blocks / n;
        for h in 0..k {
            f.set(node, h, amp[b * k + h]);
        }
    }
    let norm = grid.l1_norm(&f).unwrap_or(0.0);
    if norm > 0.0 {
        f.scale(mass / norm)
    } else {
        f
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

/// Monte Carlo audit of the inflow condition, the bounds on `p`, `q`, `u_b`
/// and the global growth bound, at random probes.
pub fn check_hypotheses(sys: &SystemDef, hc: &HypothesisConstants, cfg: &ProbeConfig) -> HypothesisReport {
    let grid = &*sys.grid;
    let k = sys.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v_check = Tracker::new("V");
    let mut p_growth = Tracker::new("P-growth");
    let mut p_lip = Tracker::new("P-lipschitz");
    let mut q_growth = Tracker::new("Q-growth");
    let mut q_lip = Tracker::new("Q-lipschitz");
    let mut b_growth = Tracker::new("BD-growth");
    let mut b_lip = Tracker::new("BD-lipschitz");
    let mut global = Tracker::new("global-growth");

    match sys.check_inflow(0.0, cfg.horizon, 8) {
        Ok(()) => v_check.record(0.0, 1.0),
        Err(_) => v_check.record(f64::INFINITY, 1.0),
    }

    let mut u = vec![0.0; k];
    let mut u2 = vec![0.0; k];
    for _ in 0..cfg.samples {
        let t = rng.gen_range(0.0..=cfg.horizon);
        let node = rng.gen_range(0..grid.len());
        let x = grid.node_point(node);
        let w = random_state(grid, k, rng.gen_range(0.0..=cfg.max_mass), true, &mut rng);
        let w2 = random_state(grid, k, rng.gen_range(0.0..=cfg.max_mass), true, &mut rng);
        let nw = grid.l1_norm(&w).unwrap_or(f64::INFINITY);
        let nw2 = grid.l1_norm(&w2).unwrap_or(f64::INFINITY);
        let dw = grid.l1_norm(&w.sub(&w2)).unwrap_or(f64::INFINITY);
        for a in u.iter_mut().chain(u2.iter_mut()) {
            *a = rng.gen_range(-cfg.max_state..=cfg.max_state);
        }
        let q2x = hc.q2.get(node, 0);
        for h in 0..k {
            // the pointwise slot of p is held fixed while w varies
            let a = sys.eval_p_local(h, t, &x, &u, &w).unwrap_or(f64::NAN);
            let b = sys.eval_p_local(h, t, &x, &u, &w2).unwrap_or(f64::NAN);
            p_growth.record(a.abs(), hc.p1 + hc.p2 * nw);
            p_lip.record((a - b).abs(), hc.p2 * dw);

            let qa = sys.eval_q(h, t, &x, &u, &w).unwrap_or(f64::NAN);
            let qb = sys.eval_q(h, t, &x, &u2, &w2).unwrap_or(f64::NAN);
            let nu = l1(&u);
            let nu2 = l1(&u2);
            let du: f64 = u.iter().zip(&u2).map(|(a, b)| (a - b).abs()).sum();
            q_growth.record(qa.abs(), hc.q1 * nu + q2x * nw + hc.q3 * nu * nw);
            q_lip.record((qa - qb).abs(), hc.q1 * du + hc.q3 * nw * du + hc.q3 * nu2 * dw);
        }

        for f in 0..grid.faces().len() {
            let j = rng.gen_range(0..grid.faces()[f].len());
            let xi = grid.face_point(f, j);
            let bx = hc.b.faces[f][j];
            for h in 0..k {
                let a = sys.eval_ub(h, t, &xi, &w).unwrap_or(f64::NAN);
                let b = sys.eval_ub(h, t, &xi, &w2).unwrap_or(f64::NAN);
                b_growth.record(a.abs(), bx * (1.0 + nw));
                b_lip.record((a - b).abs(), bx * dw);
            }
        }

        // global growth bound on nonnegative states
        let wp = random_state(grid, k, rng.gen_range(0.0..=cfg.max_mass), false, &mut rng);
        for a in u.iter_mut() {
            *a = rng.gen_range(0.0..=cfg.max_state);
        }
        let mut lhs = 0.0;
        for h in 0..k {
            let p = sys.eval_p_local(h, t, &x, &u, &wp).unwrap_or(f64::NAN);
            let q = sys.eval_q(h, t, &x, &u, &wp).unwrap_or(f64::NAN);
            lhs += p * u[h] + q;
        }
        let rhs = (hc.c1)(t, &x) + (hc.c2)(t) * u.iter().sum::<f64>();
        // one-sided: record only the excess over the bound
        let excess = lhs - rhs;
        global.record(excess.max(0.0), 1e-12 * (1.0 + rhs.abs()));
        let _ = nw2;
    }

    HypothesisReport {
        checks: vec![
            v_check.finish(),
            p_growth.finish(),
            p_lip.finish(),
            q_growth.finish(),
            q_lip.finish(),
            b_growth.finish(),
            b_lip.finish(),
            global.finish(),
        ],
    }
}
