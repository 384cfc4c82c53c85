//! Shipped model instances: the SIHR epidemic system, cell growth with
//! division at age zero, two competing age-structured populations and the two
//! blow-up examples with their closed-form solutions. Each builder returns the
//! system together with its hypothesis constants.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::domain::{BoundaryFn, Domain, Grid, GridFn};
use crate::error::{Error, Result};
use crate::problem::{HypothesisConstants, Kernel, KernelFormConstants, SystemDef, Velocity};
use crate::transport::LinearProblem;

pub type PointFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type Oracle = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A nonnegative bounded rate of `(t, x)`.
#[derive(Clone)]
pub enum Rate {
    Const(f64),
    Field { f: PointFn, sup: f64 },
}

impl fmt::Debug for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Const(c) => write!(f, "Rate::Const({c})"),
            Rate::Field { sup, .. } => write!(f, "Rate::Field(sup = {sup})"),
        }
    }
}

impl Rate {
    pub fn field<F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static>(sup: f64, f: F) -> Self {
        Rate::Field { f: Arc::new(f), sup }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Rate::Const(c) => *c,
            Rate::Field { f, .. } => f(t, x),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Rate::Const(c) => c.abs(),
            Rate::Field { sup, .. } => *sup,
        }
    }

    /// Probes nonnegativity, finiteness and the declared sup on the grid nodes.
    fn audit(&self, name: &str, grid: &Grid, horizon: f64) -> Result<()> {
        let mut x = vec![0.0; grid.dim()];
        for s in 0..=4 {
            let t = horizon * s as f64 / 4.0;
            for node in 0..grid.len() {
                grid.node_coords(node, &mut x);
                let v = self.eval(t, &x);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidModel(format!("rate {name} = {v} at t = {t}, x = {x:?}")));
                }
                if v > self.sup() * (1.0 + 1e-12) {
                    return Err(Error::InvalidModel(format!("rate {name} exceeds its declared bound {}", self.sup())));
                }
            }
            if matches!(self, Rate::Const(_)) {
                break;
            }
        }
        Ok(())
    }
}

/// A spatial velocity field in `y` with its divergence, used by the SIHR
/// model in its age-and-space mode.
#[derive(Clone)]
pub struct SpatialField {
    pub field: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
    pub div: PointFn,
}

impl SpatialField {
    /// `field(t, x, out)` writes the two spatial components at `x = (a, y)`.
    pub fn new<F, D>(field: F, div: D) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        D: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        SpatialField { field: Arc::new(field), div: Arc::new(div) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialMode {
    AgeOnly,
    /// `y` ranges over the square `[-half_width, half_width]²`.
    AgeSpace { half_width: f64 },
}

/// The infection kernel `rho(a, a', y, y')`, given as a function of the two
/// full points `x = (a, y)` and `x' = (a', y')`.
#[derive(Clone)]
pub enum Interaction {
    Const(f64),
    Field { f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>, sup: f64 },
}

impl Interaction {
    fn sup(&self) -> f64 {
        match self {
            Interaction::Const(c) => c.abs(),
            Interaction::Field { sup, .. } => *sup,
        }
    }
}

#[derive(Clone)]
pub struct SihrParams {
    pub mu_s: Rate,
    pub mu_i: Rate,
    pub mu_h: Rate,
    pub mu_r: Rate,
    pub kappa: Rate,
    pub theta: Rate,
    pub eta: Rate,
    pub v_s: Option<SpatialField>,
    pub v_i: Option<SpatialField>,
    pub v_r: Option<SpatialField>,
    pub rho: Interaction,
    /// Inflow of susceptibles at age zero, `S_b(t, xi)`.
    pub s_b: Rate,
    /// Replaces `S_b` by the natality integral `∫ b(t, a') S(t, a') da'`
    /// (age-only mode).
    pub natality: Option<Rate>,
    pub mode: SpatialMode,
    pub age_max: f64,
    pub cells: Vec<usize>,
    pub initial: InitialFn,
    /// Horizon over which rates are audited.
    pub horizon: f64,
}

impl SihrParams {
    /// Constant rates, no infection, no inflow, age-only on `[0, age_max]`.
    pub fn age_only(age_max: f64, cells: usize, initial: InitialFn) -> Self {
        SihrParams {
            mu_s: Rate::Const(0.0),
            mu_i: Rate::Const(0.0),
            mu_h: Rate::Const(0.0),
            mu_r: Rate::Const(0.0),
            kappa: Rate::Const(0.0),
            theta: Rate::Const(0.0),
            eta: Rate::Const(0.0),
            v_s: None,
            v_i: None,
            v_r: None,
            rho: Interaction::Const(0.0),
            s_b: Rate::Const(0.0),
            natality: None,
            mode: SpatialMode::AgeOnly,
            age_max,
            cells: vec![cells],
            initial,
            horizon: 1.0,
        }
    }
}

/// A system with its declared constants and, when known, its exact solution
/// for the first component.
#[derive(Clone)]
pub struct Model {
    pub system: SystemDef,
    pub constants: HypothesisConstants,
    pub oracle: Option<Oracle>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model").field("system", &self.system).field("oracle", &self.oracle.is_some()).finish()
    }
}

fn age_velocity(dim: usize, field: Option<&SpatialField>) -> Velocity {
    match field {
        None => {
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            Velocity::constant(&v)
        }
        Some(sf) => {
            let f = sf.field.clone();
            let d = sf.div.clone();
            Velocity::new(
                dim,
                move |t, x, out| {
                    out[0] = 1.0;
                    f(t, x, &mut out[1..]);
                },
                move |t, x| d(t, x),
            )
        }
    }
}

pub const S: usize = 0;
pub const I: usize = 1;
pub const H: usize = 2;
pub const R: usize = 3;

pub fn build_sihr(p: &SihrParams) -> Result<Model> {
    let domain = match p.mode {
        SpatialMode::AgeOnly => Domain::new(&[p.age_max], &[])?,
        SpatialMode::AgeSpace { half_width } => Domain::new(&[p.age_max], &[(-half_width, half_width), (-half_width, half_width)])?,
    };
    let dim = domain.dim();
    if p.natality.is_some() && dim != 1 {
        return Err(Error::InvalidModel("the natality boundary is only available in age-only mode".into()));
    }
    let grid = Arc::new(Grid::new(domain, &p.cells)?);
    for (name, r) in [
        ("mu_S", &p.mu_s),
        ("mu_I", &p.mu_i),
        ("mu_H", &p.mu_h),
        ("mu_R", &p.mu_r),
        ("kappa", &p.kappa),
        ("theta", &p.theta),
        ("eta", &p.eta),
        ("S_b", &p.s_b),
    ] {
        r.audit(name, &grid, p.horizon)?;
    }
    if let Some(b) = &p.natality {
        b.audit("b", &grid, p.horizon)?;
    }
    if p.rho.sup() < 0.0 || matches!(p.rho, Interaction::Const(c) if c < 0.0) {
        return Err(Error::InvalidModel("rho must be nonnegative".into()));
    }
    if dim == 1 && (p.v_s.is_some() || p.v_i.is_some() || p.v_r.is_some()) {
        return Err(Error::InvalidModel("spatial velocities need the age-and-space mode".into()));
    }
    let velocities = vec![
        age_velocity(dim, p.v_s.as_ref()),
        age_velocity(dim, p.v_i.as_ref()),
        age_velocity(dim, None),
        age_velocity(dim, p.v_r.as_ref()),
    ];
    // rho ⊗ I as the single kernel row, reading the I column
    let (uniform, rho_f): (bool, Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>) = match &p.rho {
        Interaction::Const(c) => {
            let c = *c;
            (true, Arc::new(move |_: &[f64], _: &[f64]| c))
        }
        Interaction::Field { f, .. } => (false, f.clone()),
    };
    let rho_sup = p.rho.sup();
    let kernel_for = |active: usize| {
        let rho_f = rho_f.clone();
        Kernel::new(1, uniform, rho_sup, move |h, _, x, xp, out| {
            out.fill(0.0);
            if h == active {
                out[I] = rho_f(x, xp);
            }
        })
    };
    let initial = p.initial.clone();
    let (mu_s, mu_i, mu_h, mu_r) = (p.mu_s.clone(), p.mu_i.clone(), p.mu_h.clone(), p.mu_r.clone());
    let (kappa, theta, eta) = (p.kappa.clone(), p.theta.clone(), p.eta.clone());
    let (k2, t2, e2) = (kappa.clone(), theta.clone(), eta.clone());
    let mut sys = SystemDef::new(4, grid.clone(), velocities, move |x, out| initial(x, out))?
        .with_p(kernel_for(S), false, move |h, t, x, _, lam| match h {
            S => -mu_s.eval(t, x) - lam[0],
            I => -mu_i.eval(t, x) - kappa.eval(t, x) - theta.eval(t, x),
            H => -mu_h.eval(t, x) - eta.eval(t, x),
            _ => -mu_r.eval(t, x),
        })
        .with_q(kernel_for(I), move |h, t, x, u, lam| match h {
            I => lam[0] * u[S],
            H => k2.eval(t, x) * u[I],
            R => t2.eval(t, x) * u[I] + e2.eval(t, x) * u[H],
            _ => 0.0,
        });
    let b_bar;
    match &p.natality {
        None => {
            let sb = p.s_b.clone();
            sys = sys.with_ub(Kernel::none(), move |h, t, xi, _| if h == S { sb.eval(t, xi) } else { 0.0 });
            b_bar = p.s_b.sup();
        }
        Some(b) => {
            let b = b.clone();
            let sup = b.sup();
            let kernel = Kernel::new(1, true, sup, move |h, t, _, xp, out| {
                out.fill(0.0);
                if h == S {
                    out[S] = b.eval(t, xp);
                }
            });
            sys = sys.with_ub(kernel, |h, _, _, eta| if h == S { eta[0] } else { 0.0 });
            b_bar = 1.0;
        }
    }
    let sys = sys.validated(0.5, 32, 11)?;
    let bar = KernelFormConstants {
        p1: [
            p.mu_s.sup(),
            p.mu_i.sup() + p.kappa.sup() + p.theta.sup(),
            p.mu_h.sup() + p.eta.sup(),
            p.mu_r.sup(),
        ]
        .into_iter()
        .fold(0.0, f64::max),
        p2: 1.0,
        q1: p.kappa.sup().max(p.theta.sup()).max(p.eta.sup()),
        q3: 1.0,
        q2: GridFn::zeros(&grid, 1),
        b: BoundaryFn::sample(&grid, |_| b_bar),
    };
    // the right-hand sides sum to minus the mortality terms
    let constants = HypothesisConstants::from_kernel_form(&sys, bar).with_growth(|_, _| 0.0, |_| 0.0);
    Ok(Model { system: sys, constants, oracle: None })
}

/// Linear division kernel `beta((a', y'), y, w) = b(x', y) w`.
#[derive(Clone)]
pub struct CellGrowthParams {
    pub lambda: Rate,
    /// Growth speed along the structure axis, `V(x)`.
    pub growth: Option<(PointFn, PointFn)>,
    /// `b(x', xi)`, with its sup.
    pub division: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    pub division_sup: f64,
    pub age_max: f64,
    /// Structure axis `[lo, hi]`, absent in the age-only model.
    pub structure: Option<(f64, f64)>,
    pub cells: Vec<usize>,
    pub initial: PointFn,
    pub horizon: f64,
}

pub fn build_cell_growth(p: &CellGrowthParams) -> Result<Model> {
    let domain = match p.structure {
        None => Domain::new(&[p.age_max], &[])?,
        Some(b) => Domain::new(&[p.age_max], &[b])?,
    };
    let dim = domain.dim();
    let grid = Arc::new(Grid::new(domain, &p.cells)?);
    p.lambda.audit("lambda", &grid, p.horizon)?;
    if !(p.division_sup >= 0.0) {
        return Err(Error::InvalidModel("division bound must be nonnegative".into()));
    }
    let velocity = match (&p.growth, dim) {
        (None, _) => {
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            Velocity::constant(&v)
        }
        (Some(_), 1) => return Err(Error::InvalidModel("a growth speed needs a structure axis".into())),
        (Some((g, dg)), _) => {
            let (g, dg) = (g.clone(), dg.clone());
            Velocity::new(
                dim,
                move |t, x, out| {
                    out[0] = 1.0;
                    out[1] = g(t, x);
                },
                move |t, x| dg(t, x),
            )
        }
    };
    let lambda = p.lambda.clone();
    let init = p.initial.clone();
    let division = p.division.clone();
    let sup = p.division_sup;
    let kernel = Kernel::new(1, dim == 1, sup, move |_, _, xi, xp, out| {
        let b = division(xp, xi);
        out[0] = if b < 0.0 { f64::NAN } else { b };
    });
    let sys = SystemDef::new(1, grid.clone(), vec![velocity], move |x, out| out[0] = init(0.0, x))?
        .with_p(Kernel::none(), false, move |_, t, x, _, _| -lambda.eval(t, x))
        .with_ub(kernel, |_, _, _, eta| eta[0])
        .validated(0.5, 32, 13)?;
    let bar = KernelFormConstants {
        p1: p.lambda.sup(),
        p2: 0.0,
        q1: 0.0,
        q3: 0.0,
        q2: GridFn::zeros(&grid, 1),
        b: BoundaryFn::sample(&grid, |_| 1.0),
    };
    let constants = HypothesisConstants::from_kernel_form(&sys, bar).with_growth(|_, _| 0.0, |_| 0.0);
    Ok(Model { system: sys, constants, oracle: None })
}

/// A bounded nonnegative function of two scalars: a mortality `mu(a, u)` or
/// a competition kernel `c(a', a)`.
#[derive(Clone)]
pub enum Rate2 {
    Const(f64),
    Field { f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, sup: f64 },
}

pub type Mortality = Rate2;
pub type AgeKernel = Rate2;

impl Rate2 {
    pub fn field<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(sup: f64, f: F) -> Self {
        Rate2::Field { f: Arc::new(f), sup }
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            Rate2::Const(c) => *c,
            Rate2::Field { f, .. } => f(a, b),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Rate2::Const(c) => c.abs(),
            Rate2::Field { sup, .. } => *sup,
        }
    }

    fn audit(&self, name: &str, first: &[f64], second: &[f64]) -> Result<()> {
        for &a in first {
            for &b in second {
                let m = self.eval(a, b);
                if !(m >= 0.0 && m <= self.sup() * (1.0 + 1e-12)) {
                    return Err(Error::InvalidModel(format!("{name}({a}, {b}) = {m} outside [0, {}]", self.sup())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct CompetitiveParams {
    pub mu: [Mortality; 2],
    /// Harvesting efforts `f^h(t, a)`.
    pub effort: [Rate; 2],
    /// Competition kernels `c_h(a', a)`; `c_1` weighs population 2 in the
    /// equation of population 1 and vice versa.
    pub competition: [AgeKernel; 2],
    pub natality: [Rate; 2],
    pub age_max: f64,
    pub cells: usize,
    pub initial: InitialFn,
    pub horizon: f64,
}

pub fn build_competitive(p: &CompetitiveParams) -> Result<Model> {
    let grid = Arc::new(Grid::uniform(Domain::new(&[p.age_max], &[])?, p.cells)?);
    let ages: Vec<f64> = (0..grid.len()).map(|n| grid.node_point(n)[0]).collect();
    for h in 0..2 {
        p.effort[h].audit("f", &grid, p.horizon)?;
        p.natality[h].audit("beta", &grid, p.horizon)?;
        p.competition[h].audit("c", &ages, &ages)?;
        p.mu[h].audit("mu", &ages, &[0.0, 0.5, 1.0, 10.0, 1e3])?;
    }
    let uniform = p.competition.iter().all(|c| matches!(c, Rate2::Const(_)));
    let comp = p.competition.clone();
    let c_sup = comp[0].sup().max(comp[1].sup());
    let kp = Kernel::new(1, uniform, c_sup, move |h, _, x, xp, out| {
        let other = 1 - h;
        out[h] = 0.0;
        out[other] = comp[h].eval(xp[0], x[0]);
    });
    let nat = p.natality.clone();
    let b_sup = nat[0].sup().max(nat[1].sup());
    let ku = Kernel::new(1, true, b_sup, move |h, t, _, xp, out| {
        out[1 - h] = 0.0;
        out[h] = nat[h].eval(t, xp);
    });
    let mu = p.mu.clone();
    let effort = p.effort.clone();
    let init = p.initial.clone();
    let sys = SystemDef::new(2, grid.clone(), vec![Velocity::constant(&[1.0]), Velocity::constant(&[1.0])], move |x, out| init(x, out))?
        .with_p(kp, true, move |h, t, x, u, eta| -mu[h].eval(x[0], u[h]) - effort[h].eval(t, x) - eta[0])
        .with_ub(ku, |_, _, _, eta| eta[0])
        .validated(0.5, 32, 17)?;
    let bar = KernelFormConstants {
        p1: (p.mu[0].sup() + p.effort[0].sup()).max(p.mu[1].sup() + p.effort[1].sup()),
        p2: 1.0,
        q1: 0.0,
        q3: 0.0,
        q2: GridFn::zeros(&grid, 1),
        b: BoundaryFn::sample(&grid, |_| 1.0),
    };
    let constants = HypothesisConstants::from_kernel_form(&sys, bar).with_growth(|_, _| 0.0, |_| 0.0);
    Ok(Model { system: sys, constants, oracle: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupVariant {
    /// `u_t = (∫_0^1 u) u` on the line, no transport.
    Ode,
    /// `u_t + u_a = (∫ u) u` on the half line, zero inflow.
    Transport,
}

pub fn build_blowup(variant: BlowupVariant, cells: usize) -> Result<Model> {
    let (domain, v, lo, hi) = match variant {
        BlowupVariant::Ode => (Domain::new(&[], &[(-0.5, 1.5)])?, 0.0, 0.0, 1.0),
        BlowupVariant::Transport => (Domain::new(&[2.0], &[])?, 1.0, 0.0, f64::INFINITY),
    };
    let grid = Arc::new(Grid::uniform(domain, cells)?);
    let kernel = Kernel::new(1, true, 1.0, move |_, _, _, xp, out| out[0] = if xp[0] >= lo && xp[0] <= hi { 1.0 } else { 0.0 });
    let sys = SystemDef::new(1, grid.clone(), vec![Velocity::constant(&[v])], |x, out| {
        out[0] = if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 }
    })?
    .with_p(kernel, false, |_, _, _, _, eta| eta[0]);
    let sys = if v > 0.0 { sys.validated(0.5, 8, 3)? } else { sys.validated(0.0, 8, 3)? };
    let bar = KernelFormConstants {
        p1: 0.0,
        p2: 1.0,
        q1: 0.0,
        q3: 0.0,
        q2: GridFn::zeros(&grid, 1),
        b: BoundaryFn::zeros(&grid),
    };
    let constants = HypothesisConstants::from_kernel_form(&sys, bar);
    let oracle: Oracle = match variant {
        BlowupVariant::Ode => Arc::new(|t, x| if (0.0..=1.0).contains(&x[0]) { 1.0 / (1.0 - t) } else { 0.0 }),
        BlowupVariant::Transport => Arc::new(|t, x| if x[0] >= t && x[0] <= t + 1.0 { 1.0 / (1.0 - t) } else { 0.0 }),
    };
    Ok(Model { system: sys, constants, oracle: Some(oracle) })
}

/// Description of a named preset and its tunable parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub horizon: f64,
    pub params: &'static [(&'static str, f64)],
}

const SIHR_PARAMS: &[(&str, f64)] = &[
    ("cells", 128.0),
    ("age_max", 10.0),
    ("rho", 0.5),
    ("mu_s", 0.01),
    ("mu_i", 0.05),
    ("mu_h", 0.1),
    ("mu_r", 0.01),
    ("kappa", 0.2),
    ("theta", 0.1),
    ("eta", 0.1),
    ("s_b", 0.2),
    ("natality", 0.0),
    ("s0", 1.0),
    ("i0", 0.2),
];

const SIHR_CONSERVATION_PARAMS: &[(&str, f64)] = &[
    ("cells", 256.0),
    ("age_max", 10.0),
    ("rho", 0.5),
    ("mu_s", 0.0),
    ("mu_i", 0.0),
    ("mu_h", 0.0),
    ("mu_r", 0.0),
    ("kappa", 0.2),
    ("theta", 0.1),
    ("eta", 0.1),
    ("s_b", 0.0),
    ("natality", 0.0),
    ("s0", 1.0),
    ("i0", 0.2),
];

const SIHR_2D_PARAMS: &[(&str, f64)] = &[
    ("cells", 16.0),
    ("age_max", 4.0),
    ("half_width", 2.0),
    ("rho", 0.3),
    ("mu_s", 0.01),
    ("mu_i", 0.05),
    ("mu_h", 0.1),
    ("mu_r", 0.01),
    ("kappa", 0.2),
    ("theta", 0.1),
    ("eta", 0.1),
    ("s_b", 0.1),
    ("swirl", 0.2),
    ("s0", 1.0),
    ("i0", 0.2),
];

const CELL_PARAMS: &[(&str, f64)] = &[("cells", 200.0), ("age_max", 10.0), ("lambda", 0.2), ("b0", 0.5), ("n0", 1.0)];

const COMPETITIVE_PARAMS: &[(&str, f64)] = &[
    ("cells", 200.0),
    ("age_max", 5.0),
    ("mu1", 0.1),
    ("mu2", 0.1),
    ("crowding", 0.2),
    ("f1", 0.05),
    ("f2", 0.05),
    ("c1", 0.1),
    ("c2", 0.1),
    ("beta1", 0.3),
    ("beta2", 0.3),
    ("u1", 1.0),
    ("u2", 1.0),
];

const BLOWUP_PARAMS: &[(&str, f64)] = &[("cells", 400.0)];

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "blowup-ode",
        description: "u_t = (integral of u over [0,1]) u, blows up at t = 1",
        horizon: 0.9,
        params: BLOWUP_PARAMS,
    },
    PresetInfo {
        name: "blowup-transport",
        description: "u_t + u_a = (integral of u) u with zero inflow, blows up at t = 1",
        horizon: 0.9,
        params: BLOWUP_PARAMS,
    },
    PresetInfo {
        name: "sihr",
        description: "age-structured SIHR epidemic with nonlocal infection and susceptible inflow",
        horizon: 5.0,
        params: SIHR_PARAMS,
    },
    PresetInfo {
        name: "sihr-conservation",
        description: "SIHR with zero mortality and zero inflow; total mass changes only by ageing out",
        horizon: 5.0,
        params: SIHR_CONSERVATION_PARAMS,
    },
    PresetInfo {
        name: "sihr-2d",
        description: "SIHR in age and two space dimensions with a swirling susceptible drift (coarse)",
        horizon: 1.0,
        params: SIHR_2D_PARAMS,
    },
    PresetInfo {
        name: "cell-growth",
        description: "cell ageing with loss and renewal at age zero through a division kernel",
        horizon: 3.0,
        params: CELL_PARAMS,
    },
    PresetInfo {
        name: "competitive",
        description: "two competing age-structured populations with harvesting and natality",
        horizon: 3.0,
        params: COMPETITIVE_PARAMS,
    },
];

pub fn preset_info(name: &str) -> Result<&'static PresetInfo> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown preset `{name}`")))
}

/// Defaults of `name` merged with `overrides`; unknown keys are rejected.
pub fn preset_params(name: &str, overrides: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let info = preset_info(name)?;
    let mut out: BTreeMap<String, f64> = info.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        match out.get_mut(k) {
            Some(slot) => {
                if !v.is_finite() {
                    return Err(Error::InvalidConfig(format!("parameter `{k}` must be finite")));
                }
                *slot = *v;
            }
            None => return Err(Error::InvalidConfig(format!("preset `{name}` has no parameter `{k}`"))),
        }
    }
    Ok(out)
}

fn cells_param(params: &BTreeMap<String, f64>) -> Result<usize> {
    let c = params["cells"];
    if c < 4.0 || c.fract() != 0.0 {
        return Err(Error::InvalidConfig(format!("cells must be an integer of at least 4, got {c}")));
    }
    Ok(c as usize)
}

fn nonneg(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    let v = params[key];
    if v < 0.0 {
        return Err(Error::InvalidConfig(format!("parameter `{key}` must be nonnegative")));
    }
    Ok(v)
}

fn space_profile(x: &[f64]) -> f64 {
    x[1..].iter().map(|y| (-y * y).exp()).product()
}

/// Susceptibles: the inflow level plus a bump on ages below 5, so the datum
/// matches `S_b` at age zero and nothing reaches age 10 before t = 5 beyond
/// the inflow. Infectives: a bump around age 3.
fn sihr_initial(s0: f64, i0: f64, s_b: f64) -> InitialFn {
    Arc::new(move |x, out| {
        let a = x[0];
        let space = space_profile(x);
        let bump = if a < 5.0 { (std::f64::consts::PI * a / 5.0).sin().powi(2) } else { 0.0 };
        out[S] = (s_b + s0 * bump) * space;
        out[I] = if (a - 3.0).abs() < 1.0 { i0 * (std::f64::consts::PI * (a - 3.0)).cos().mul_add(0.5, 0.5) * space } else { 0.0 };
        out[H] = 0.0;
        out[R] = 0.0;
    })
}

/// SIHR parameters for the `sihr*` presets, with `kappa` replaceable by a
/// control.
pub fn sihr_params(name: &str, params: &BTreeMap<String, f64>, horizon: f64) -> Result<SihrParams> {
    let g = |k: &str| nonneg(params, k);
    let cells = cells_param(params)?;
    let s_b = g("s_b")?;
    let initial = sihr_initial(g("s0")?, g("i0")?, s_b);
    let mut p = SihrParams::age_only(g("age_max")?, cells, initial);
    p.mu_s = Rate::Const(g("mu_s")?);
    p.mu_i = Rate::Const(g("mu_i")?);
    p.mu_h = Rate::Const(g("mu_h")?);
    p.mu_r = Rate::Const(g("mu_r")?);
    p.kappa = Rate::Const(g("kappa")?);
    p.theta = Rate::Const(g("theta")?);
    p.eta = Rate::Const(g("eta")?);
    p.rho = Interaction::Const(g("rho")?);
    p.s_b = Rate::field(s_b, move |_, x| s_b * space_profile(x));
    p.horizon = horizon;
    if name == "sihr-2d" {
        let w = g("half_width")?;
        p.mode = SpatialMode::AgeSpace { half_width: w };
        p.cells = vec![cells; 3];
        let s = params["swirl"];
        if s != 0.0 {
            // rigid rotation in y, divergence free
            p.v_s = Some(SpatialField::new(
                move |_, x, out| {
                    out[0] = -s * x[2];
                    out[1] = s * x[1];
                },
                |_, _| 0.0,
            ));
        }
    } else if params.get("natality").copied().unwrap_or(0.0) > 0.0 {
        p.natality = Some(Rate::Const(params["natality"]));
    }
    Ok(p)
}

/// Competitive parameters for the `competitive` preset: mortality rising
/// with crowding, constant efforts, competition and natality.
pub fn competitive_params(params: &BTreeMap<String, f64>, horizon: f64) -> Result<CompetitiveParams> {
    let g = |k: &str| nonneg(params, k);
    let crowd = g("crowding")?;
    let mort = |m: f64| Rate2::field(m + crowd, move |_, u| m + crowd * u.max(0.0) / (1.0 + u.max(0.0)));
    let (u1, u2) = (g("u1")?, g("u2")?);
    Ok(CompetitiveParams {
        mu: [mort(g("mu1")?), mort(g("mu2")?)],
        effort: [Rate::Const(g("f1")?), Rate::Const(g("f2")?)],
        competition: [Rate2::Const(g("c1")?), Rate2::Const(g("c2")?)],
        natality: [Rate::Const(g("beta1")?), Rate::Const(g("beta2")?)],
        age_max: g("age_max")?,
        cells: cells_param(params)?,
        initial: Arc::new(move |x, out| {
            let e = (-x[0] / 2.0).exp();
            out[0] = u1 * e;
            out[1] = u2 * e;
        }),
        horizon,
    })
}

/// Builds preset `name` with parameter overrides.
pub fn build_preset(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Model> {
    let info = preset_info(name)?;
    let params = preset_params(name, overrides)?;
    let g = |k: &str| nonneg(&params, k);
    match name {
        "blowup-ode" => build_blowup(BlowupVariant::Ode, cells_param(&params)?),
        "blowup-transport" => build_blowup(BlowupVariant::Transport, cells_param(&params)?),
        "sihr" | "sihr-conservation" | "sihr-2d" => build_sihr(&sihr_params(name, &params, info.horizon)?),
        "cell-growth" => {
            let n0 = g("n0")?;
            let b0 = g("b0")?;
            build_cell_growth(&CellGrowthParams {
                lambda: Rate::Const(g("lambda")?),
                growth: None,
                division: Arc::new(move |_, _| b0),
                division_sup: b0,
                age_max: g("age_max")?,
                structure: None,
                cells: vec![cells_param(&params)?],
                // stable age profile, compatible with the renewal condition
                initial: Arc::new(move |_, x| n0 * (-b0 * x[0]).exp()),
                horizon: info.horizon,
            })
        }
        "competitive" => build_competitive(&competitive_params(&params, info.horizon)?),
        _ => Err(Error::InvalidConfig(format!("unknown preset `{name}`"))),
    }
}

/// A scalar linear problem with known behavior, used to exercise the a priori
/// certificates.
#[derive(Debug, Clone)]
pub struct LinearCase {
    pub name: &'static str,
    pub grid: Arc<Grid>,
    pub problem: LinearProblem,
    pub times: Vec<f64>,
    /// Pure growth `p ≡ c` with a plateau datum: both bounds are attained.
    pub saturating: bool,
}

pub fn linear_cases(cells: usize) -> Result<Vec<LinearCase>> {
    let grid = Arc::new(Grid::uniform(Domain::new(&[4.0], &[])?, cells)?);
    let plateau = GridFn::sample_scalar(&grid, |x| if (0.5..=1.5).contains(&x[0]) { 1.0 } else { 0.0 });
    let smooth = GridFn::sample_scalar(&grid, |x| (-(x[0] - 1.0).powi(2) * 4.0).exp());
    let v = Velocity::constant(&[1.0]);
    let times = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let case = |name, problem, saturating| LinearCase { name, grid: grid.clone(), problem, times: times.clone(), saturating };
    Ok(vec![
        case("transport", LinearProblem::new(v.clone(), smooth.clone()), false),
        case("pure-growth", LinearProblem::new(v.clone(), plateau.clone()).with_p(|_, _| 0.3), true),
        case("decay", LinearProblem::new(v.clone(), smooth.clone()).with_p(|_, x| -0.2 - 0.1 * x[0]), false),
        case("source", LinearProblem::new(v.clone(), smooth.clone()).with_q(|t, x| (1.0 + t) * (-x[0]).exp()), false),
        case("inflow", LinearProblem::new(v.clone(), GridFn::zeros(&grid, 1)).with_ub(|t, _| 1.0 + 0.5 * t.sin()), false),
        case(
            "mixed",
            LinearProblem::new(v, plateau)
                .with_p(|t, x| 0.2 * (t + x[0]).sin())
                .with_q(|_, x| 0.1 * x[0])
                .with_ub(|_, _| 0.5),
            false,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{check_hypotheses, ProbeConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn blowup_oracles() {
        let m = build_blowup(BlowupVariant::Ode, 400).unwrap();
        let o = m.oracle.unwrap();
        assert_eq!(o(0.0, &[0.5]), 1.0);
        assert_eq!(o(0.0, &[1.2]), 0.0);
        assert_abs_diff_eq!(o(0.9, &[0.5]), 10.0, epsilon = 1e-12);
        let o = build_blowup(BlowupVariant::Transport, 400).unwrap().oracle.unwrap();
        assert_abs_diff_eq!(o(0.5, &[1.0]), 2.0, epsilon = 1e-12);
        assert_eq!(o(0.5, &[0.4]), 0.0);
        assert_eq!(o(0.5, &[1.6]), 0.0);
    }

    #[test]
    fn every_preset_builds_and_passes_local_hypotheses() {
        for info in PRESETS {
            let m = build_preset(info.name, &BTreeMap::new()).unwrap();
            let cfg = ProbeConfig { samples: 40, ..ProbeConfig::default() };
            let rep = check_hypotheses(&m.system, &m.constants, &cfg);
            for name in ["V", "P-growth", "P-lipschitz", "Q-growth", "Q-lipschitz", "BD-growth", "BD-lipschitz"] {
                let c = rep.get(name).unwrap();
                assert!(c.pass, "{}: {name} ratio {}", info.name, c.worst_ratio);
            }
            let global = rep.get("global-growth").unwrap().pass;
            assert_eq!(global, !info.name.starts_with("blowup"), "{}", info.name);
        }
    }

    #[test]
    fn negative_rate_is_rejected() {
        let mut p = sihr_params("sihr", &preset_params("sihr", &BTreeMap::new()).unwrap(), 1.0).unwrap();
        p.kappa = Rate::field(1.0, |t, _| 0.5 - t);
        assert!(matches!(build_sihr(&p), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn unknown_parameters_are_rejected() {
        let mut o = BTreeMap::new();
        o.insert("nope".to_string(), 1.0);
        assert!(build_preset("sihr", &o).is_err());
        assert!(build_preset("nothing", &BTreeMap::new()).is_err());
        o.clear();
        o.insert("cells".to_string(), 3.0);
        assert!(build_preset("sihr", &o).is_err());
    }

    #[test]
    fn sihr_fitting() {
        let m = build_preset("sihr", &BTreeMap::new()).unwrap();
        let sys = &m.system;
        let w = sys.initial_state();
        let x = [3.0];
        let mut u = vec![0.0; 4];
        w.interpolate(&sys.grid, &x, &mut u);
        let i_mass = sys.grid.component_integral(&w, I);
        let lam = 0.5 * i_mass;
        assert_abs_diff_eq!(sys.eval_p(S, 0.0, &x, &w).unwrap(), -0.01 - lam, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.eval_p(I, 0.0, &x, &w).unwrap(), -0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.eval_q(I, 0.0, &x, &u, &w).unwrap(), lam * u[S], epsilon = 1e-12);
        assert_abs_diff_eq!(sys.eval_q(R, 0.0, &x, &u, &w).unwrap(), 0.1 * u[I], epsilon = 1e-12);
        assert_eq!(sys.eval_ub(S, 0.0, &[0.0], &w).unwrap(), 0.2);
        assert_eq!(sys.eval_ub(I, 0.0, &[0.0], &w).unwrap(), 0.0);
    }

    #[test]
    fn linear_cases_have_one_saturating_case() {
        let cases = linear_cases(100).unwrap();
        assert_eq!(cases.iter().filter(|c| c.saturating).count(), 1);
    }
}
