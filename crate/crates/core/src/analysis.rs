//! Numerical certificates: a priori L¹ and L∞ bounds, the linear stability
//! estimate, the global mass bound, the predicted contraction constant of the
//! fixed-point operator and the semi-entropy residual.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{AxisKind, Grid, GridFn};
use crate::error::{Error, Result};
use crate::picard::Trajectory;
use crate::problem::{HypothesisConstants, SystemDef};
use crate::transport::{evaluate, LinearProblem};

/// Relative slack used by certificates unless stated otherwise.
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub times: Vec<f64>,
    pub bounds: Vec<f64>,
    pub measured: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
    /// Smallest `(bound - measured) / bound` over the reported times.
    pub margin: f64,
    pub params: Vec<(String, f64)>,
}

impl Certificate {
    fn new(name: &str, times: Vec<f64>, bounds: Vec<f64>, measured: Vec<f64>, tol: f64, params: Vec<(String, f64)>) -> Self {
        let pass = bounds
            .iter()
            .zip(&measured)
            .all(|(&b, &m)| m.is_finite() && m <= b * (1.0 + tol) + 1e-13);
        let margin = bounds
            .iter()
            .zip(&measured)
            .map(|(&b, &m)| if b > 0.0 { (b - m) / b } else if m <= 1e-13 { 1.0 } else { f64::NEG_INFINITY })
            .fold(f64::INFINITY, f64::min);
        Certificate { name: name.to_string(), times, bounds, measured, tol, pass, margin, params }
    }

    /// Largest `measured / bound` over the reported times.
    pub fn worst_ratio(&self) -> f64 {
        self.bounds
            .iter()
            .zip(&self.measured)
            .map(|(&b, &m)| if b > 0.0 { m / b } else if m <= 1e-13 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[certificate] {}", self.name)?;
        writeln!(f, "status = {}", if self.pass { "pass" } else { "fail" })?;
        writeln!(f, "margin = {:e}", self.margin)?;
        writeln!(f, "worst_ratio = {:e}", self.worst_ratio())?;
        writeln!(f, "tolerance = {:e}", self.tol)?;
        for (k, v) in &self.params {
            writeln!(f, "param.{k} = {v:e}")?;
        }
        writeln!(f, "# t, bound, measured")?;
        for ((t, b), m) in self.times.iter().zip(&self.bounds).zip(&self.measured) {
            writeln!(f, "{t:e}, {b:e}, {m:e}")?;
        }
        Ok(())
    }
}

/// Refines `[t0, times...]` with `sub` trapezoid intervals between stops.
/// Returns the fine grid and, for every stop, its index in the fine grid.
fn refine(t0: f64, times: &[f64], sub: usize) -> (Vec<f64>, Vec<usize>) {
    let mut fine = vec![t0];
    let mut idx = Vec::with_capacity(times.len());
    let mut last = t0;
    for &t in times {
        if t > last {
            for s in 1..=sub {
                fine.push(last + (t - last) * s as f64 / sub as f64);
            }
            last = t;
        }
        idx.push(fine.len() - 1);
    }
    (fine, idx)
}

fn cumulative_trapezoid(ts: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ts.len()];
    for j in 1..ts.len() {
        out[j] = out[j - 1] + 0.5 * (ts[j] - ts[j - 1]) * (g[j - 1] + g[j]);
    }
    out
}

fn prefix_max(v: &[f64]) -> Vec<f64> {
    let mut m = 0.0f64;
    v.iter()
        .map(|&x| {
            m = m.max(x);
            m
        })
        .collect()
}

struct Sampled {
    p_sup: Vec<f64>,
    q_l1: Vec<f64>,
    q_sup: Vec<f64>,
    div_sup: Vec<f64>,
    ub_flux: Vec<f64>,
    ub_sup: Vec<f64>,
}

/// Norms of the coefficients of `lp` at each fine time.
fn sample(lp: &LinearProblem, grid: &Grid, ts: &[f64]) -> Sampled {
    let dim = grid.dim();
    let rows: Vec<[f64; 6]> = ts
        .par_iter()
        .map(|&t| {
            let mut x = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            let (mut p_sup, mut q_l1, mut q_sup, mut div_sup) = (0.0f64, 0.0, 0.0f64, 0.0f64);
            for node in 0..grid.len() {
                grid.node_coords(node, &mut x);
                p_sup = p_sup.max((lp.p)(t, &x).abs());
                let q = (lp.q)(t, &x).abs();
                q_l1 += q;
                q_sup = q_sup.max(q);
                div_sup = div_sup.max(lp.velocity.div(t, &x).abs());
            }
            q_l1 *= grid.weight();
            let (mut flux, mut sup) = (0.0, 0.0f64);
            for (f, face) in grid.faces().iter().enumerate() {
                for j in 0..face.len() {
                    grid.face_coords(f, j, &mut x);
                    let b = (lp.ub)(t, &x).abs();
                    lp.velocity.eval(t, &x, &mut v);
                    flux += b * v[face.axis].abs() * face.weight();
                    sup = sup.max(b);
                }
            }
            [p_sup, q_l1, q_sup, div_sup, flux, sup]
        })
        .collect();
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    Sampled {
        p_sup: col(0),
        q_l1: col(1),
        q_sup: col(2),
        div_sup: col(3),
        ub_flux: col(4),
        ub_sup: col(5),
    }
}

const SUB: usize = 8;

/// `(|q|_{L¹} + |u0|_1 + sum_i ∬ |u_b| v_i) e^{|p|_∞ (t - t0)}` against `|u(t)|_1`.
pub fn apriori_l1_bound(lp: &LinearProblem, grid: &Grid, times: &[f64], states: &[GridFn], tol: f64) -> Result<Certificate> {
    check_series(times, states)?;
    let (ts, idx) = refine(lp.t0, times, SUB);
    let s = sample(lp, grid, &ts);
    let q = cumulative_trapezoid(&ts, &s.q_l1);
    let flux = cumulative_trapezoid(&ts, &s.ub_flux);
    let p = prefix_max(&s.p_sup);
    let u0 = grid.l1_norm(&lp.u0)?;
    let mut bounds = Vec::new();
    let mut measured = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let j = idx[i];
        bounds.push((q[j] + u0 + flux[j]) * (p[j] * (t - lp.t0)).exp());
        measured.push(grid.l1_norm(&states[i])?);
    }
    let params = vec![("u0_l1".into(), u0), ("p_sup".into(), *p.last().unwrap_or(&0.0))];
    Ok(Certificate::new("apriori-l1", times.to_vec(), bounds, measured, tol, params))
}

/// `(|u0|_∞ + |u_b|_∞ + ∫|q|_∞) exp ∫(|p|_∞ + |div v|_∞)` against the nodal sup.
pub fn apriori_linf_bound(lp: &LinearProblem, grid: &Grid, times: &[f64], states: &[GridFn], tol: f64) -> Result<Certificate> {
    check_series(times, states)?;
    let (ts, idx) = refine(lp.t0, times, SUB);
    let s = sample(lp, grid, &ts);
    let q = cumulative_trapezoid(&ts, &s.q_sup);
    let growth: Vec<f64> = s.p_sup.iter().zip(&s.div_sup).map(|(a, b)| a + b).collect();
    // a sup norm of the integrand, so use the upper envelope on each interval
    let envelope: Vec<f64> = (0..ts.len())
        .map(|j| growth[j].max(if j > 0 { growth[j - 1] } else { growth[j] }))
        .collect();
    let g = cumulative_trapezoid(&ts, &envelope);
    let ub = prefix_max(&s.ub_sup);
    let u0 = lp.u0.component_sup(0);
    let mut bounds = Vec::new();
    let mut measured = Vec::new();
    for (i, _) in times.iter().enumerate() {
        let j = idx[i];
        bounds.push((u0 + ub[j] + q[j]) * g[j].exp());
        states[i].check_finite()?;
        measured.push(states[i].component_sup(0));
    }
    let params = vec![("u0_sup".into(), u0)];
    Ok(Certificate::new("apriori-linf", times.to_vec(), bounds, measured, tol, params))
}

fn check_series(times: &[f64], states: &[GridFn]) -> Result<()> {
    if times.len() != states.len() {
        return Err(Error::DimensionMismatch { what: "time series", expected: times.len(), got: states.len() });
    }
    Ok(())
}

/// The five-term stability estimate between two linear problems with the
/// same velocity, checked against two solves at time `t`.
pub fn linear_stability_bound(
    lp1: &LinearProblem,
    lp2: &LinearProblem,
    grid: &Grid,
    t: f64,
    substeps: Option<usize>,
    tol: f64,
) -> Result<Certificate> {
    if !lp1.velocity.same_as(&lp2.velocity) {
        return Err(Error::DifferentVelocity);
    }
    let u1 = evaluate(lp1, t, grid, substeps)?;
    let u2 = evaluate(lp2, t, grid, substeps)?;
    let measured = grid.l1_norm(&u1.sub(&u2))?;
    let bound = linear_stability_rhs(lp1, lp2, grid, t)?;
    let params = vec![("t".into(), t)];
    Ok(Certificate::new("linear-stability", vec![t], vec![bound.total], vec![measured], tol, params))
}

/// Terms of the linear stability estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityTerms {
    pub growth: f64,
    pub datum: f64,
    pub boundary: f64,
    pub source: f64,
    pub coefficient: f64,
    pub total: f64,
}

pub fn linear_stability_rhs(lp1: &LinearProblem, lp2: &LinearProblem, grid: &Grid, t: f64) -> Result<StabilityTerms> {
    if !lp1.velocity.same_as(&lp2.velocity) {
        return Err(Error::DifferentVelocity);
    }
    let t0 = lp1.t0;
    let (ts, _) = refine(t0, &[t], 4 * SUB);
    let dim = grid.dim();
    let rows: Vec<[f64; 5]> = ts
        .par_iter()
        .map(|&s| {
            let mut x = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            let (mut p1, mut p2, mut dp, mut dq, mut q1, mut q2, mut vs) = (0.0f64, 0.0f64, 0.0f64, 0.0, 0.0, 0.0, 0.0f64);
            for node in 0..grid.len() {
                grid.node_coords(node, &mut x);
                let (a, b) = ((lp1.p)(s, &x), (lp2.p)(s, &x));
                p1 = p1.max(a.abs());
                p2 = p2.max(b.abs());
                dp = dp.max((a - b).abs());
                let (c, d) = ((lp1.q)(s, &x), (lp2.q)(s, &x));
                dq += (c - d).abs();
                q1 += c.abs();
                q2 += d.abs();
                lp1.velocity.eval(s, &x, &mut v);
                vs = vs.max(v.iter().map(|a| a * a).sum::<f64>().sqrt());
            }
            let w = grid.weight();
            [p1.max(p2), dp, dq * w, q1.max(q2) * w, vs]
        })
        .collect();
    let brow: Vec<[f64; 3]> = ts
        .iter()
        .map(|&s| {
            let mut x = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            let (mut db, mut b2, mut vs) = (0.0, 0.0, 0.0f64);
            for (f, face) in grid.faces().iter().enumerate() {
                for j in 0..face.len() {
                    grid.face_coords(f, j, &mut x);
                    let (a, b) = ((lp1.ub)(s, &x), (lp2.ub)(s, &x));
                    db += (a - b).abs() * face.weight();
                    b2 += a.abs().max(b.abs()) * face.weight();
                    lp1.velocity.eval(s, &x, &mut v);
                    vs = vs.max(v.iter().map(|a| a * a).sum::<f64>().sqrt());
                }
            }
            [db, b2, vs]
        })
        .collect();
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let bcol = |i: usize| brow.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let p_sup = col(0).into_iter().fold(0.0, f64::max);
    let dp = *cumulative_trapezoid(&ts, &col(1)).last().unwrap();
    let dq = *cumulative_trapezoid(&ts, &col(2)).last().unwrap();
    let q_big = *cumulative_trapezoid(&ts, &col(3)).last().unwrap();
    let v_sup = col(4).into_iter().chain(bcol(2)).fold(0.0, f64::max);
    let db = *cumulative_trapezoid(&ts, &bcol(0)).last().unwrap();
    let ub_big = *cumulative_trapezoid(&ts, &bcol(1)).last().unwrap();
    let growth = (p_sup * (t - t0)).exp();
    let du0 = grid.l1_norm(&lp1.u0.sub(&lp2.u0))?;
    let u0_big = grid.l1_norm(&lp1.u0)?.max(grid.l1_norm(&lp2.u0)?);
    let datum = growth * du0;
    let boundary = growth * v_sup * db;
    let source = growth * dq;
    let coefficient = growth * (u0_big + v_sup * ub_big + q_big) * dp;
    Ok(StabilityTerms { growth, datum, boundary, source, coefficient, total: datum + boundary + source + coefficient })
}

/// Supremum of `|v_i|` over inflow faces, and of the full speed elsewhere.
fn velocity_sups(sys: &SystemDef, t0: f64, t1: f64) -> (f64, f64) {
    let grid = &*sys.grid;
    let mut face_sup: f64 = 0.0;
    let mut all: f64 = 0.0;
    let mut v = vec![0.0; grid.dim()];
    for vel in &sys.velocities {
        all = all.max(vel.sampled_bounds(grid, t0, t1).0);
        for s in 0..=4 {
            let t = t0 + (t1 - t0) * s as f64 / 4.0;
            for (f, face) in grid.faces().iter().enumerate() {
                for j in 0..face.len() {
                    let xi = grid.face_point(f, j);
                    vel.eval(t, &xi, &mut v);
                    face_sup = face_sup.max(v[face.axis].abs());
                    all = all.max(v.iter().map(|a| a * a).sum::<f64>().sqrt());
                }
            }
        }
    }
    (face_sup, all)
}

/// Integrates `m' = (|C1| + k |B|) + (|C2| + |B|) m` along the trajectory and
/// checks its total mass.
pub fn gronwall_global_bound(sys: &SystemDef, hc: &HypothesisConstants, traj: &Trajectory, tol: f64) -> Result<Certificate> {
    let grid = &*sys.grid;
    let t_end = traj.final_time();
    let (face_v, _) = velocity_sups(sys, 0.0, t_end.max(1e-12));
    let b1 = hc.b.l1_norm(grid) * face_v;
    let c1_at = |t: f64| -> f64 {
        let mut x = vec![0.0; grid.dim()];
        let mut s = 0.0;
        for node in 0..grid.len() {
            grid.node_coords(node, &mut x);
            s += (hc.c1)(t, &x).abs();
        }
        s * grid.weight()
    };
    let mut m = grid.l1_norm(&traj.states[0])?;
    let mut bounds = vec![m];
    let mut measured = vec![m];
    let (mut c1_sup, mut c2_sup) = (c1_at(0.0), (hc.c2)(0.0).abs());
    for j in 1..traj.times.len() {
        let (ta, tb) = (traj.times[j - 1], traj.times[j]);
        c1_sup = c1_sup.max(c1_at(tb)).max(c1_at(0.5 * (ta + tb)));
        c2_sup = c2_sup.max((hc.c2)(tb).abs()).max((hc.c2)(0.5 * (ta + tb)).abs());
        let a = c1_sup + sys.k as f64 * b1;
        let b = c2_sup + b1;
        let dt = tb - ta;
        m = if b > 0.0 { m * (b * dt).exp() + a * ((b * dt).exp() - 1.0) / b } else { m + a * dt };
        bounds.push(m);
        measured.push(grid.l1_norm(&traj.states[j])?);
    }
    let params = vec![("B_flux".into(), b1), ("C1_sup".into(), c1_sup), ("C2_sup".into(), c2_sup)];
    Ok(Certificate::new("gronwall-global", traj.times.clone(), bounds, measured, tol, params))
}

/// Lipschitz constant of the fixed-point operator on the ball of radius `m`
/// over a slab of length `t`, assembled from the hypothesis constants.
pub fn contraction_prediction(sys: &SystemDef, hc: &HypothesisConstants, m: f64, t: f64) -> f64 {
    let grid = &*sys.grid;
    let (_, v) = velocity_sups(sys, 0.0, t.max(1e-12));
    let b1 = hc.b.l1_norm(grid);
    let q2 = hc.q2_l1(grid);
    let ub_term = v * b1 * (1.0 + m) * t;
    let q_term = (hc.q1 + q2 + hc.q3 * m) * m * t;
    let bracket = v * b1 * t + (hc.q1 + 2.0 * m * hc.q3) * t + (m + ub_term + q_term) * hc.p2 * t;
    sys.k as f64 * ((hc.p1 + hc.p2 * m) * t).exp() * bracket
}

/// Measured Picard ratio of every slab against the predicted constant: the
/// ratio must stay below one, and below `1.2 ×` the prediction whenever the
/// prediction is itself below one.
pub fn contraction_certificate(sys: &SystemDef, hc: &HypothesisConstants, traj: &Trajectory) -> Certificate {
    let mut times = Vec::new();
    let mut bounds = Vec::new();
    let mut measured = Vec::new();
    let mut worst_pred: f64 = 0.0;
    for s in &traj.slabs {
        let predicted = contraction_prediction(sys, hc, s.radius, s.t1 - s.t0);
        worst_pred = worst_pred.max(predicted);
        times.push(s.t1);
        bounds.push(if predicted < 1.0 { (1.2 * predicted).min(1.0) } else { 1.0 });
        // strict inequality against one
        measured.push(if s.theta >= 1.0 { f64::INFINITY } else { s.theta });
    }
    let params = vec![("slabs".into(), traj.slabs.len() as f64), ("max_predicted".into(), worst_pred)];
    Certificate::new("contraction", times, bounds, measured, 0.0, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn part(self, z: f64) -> f64 {
        match self {
            Sign::Plus => z.max(0.0),
            Sign::Minus => (-z).max(0.0),
        }
    }

    fn sgn(self, z: f64) -> f64 {
        match self {
            Sign::Plus if z > 0.0 => 1.0,
            Sign::Minus if z < 0.0 => -1.0,
            _ => 0.0,
        }
    }
}

/// Tensor product of quartic bumps `(1 - z²)²` in time and every space axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    /// `(t, x_1, ..., x_d)`.
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

fn bump(z: f64) -> (f64, f64) {
    if z.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        let a = 1.0 - z * z;
        (a * a, -4.0 * z * a)
    }
}

impl TestFunction {
    /// Value and gradient `(∂_t, ∇_x)` at `(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.center.len();
        let mut vals = [0.0f64; 8];
        let mut ders = [0.0f64; 8];
        for i in 0..n {
            let y = if i == 0 { t } else { x[i - 1] };
            let (b, db) = bump((y - self.center[i]) / self.radii[i]);
            vals[i] = b;
            ders[i] = db / self.radii[i];
        }
        let value: f64 = vals[..n].iter().product();
        for i in 0..n {
            let mut g = ders[i];
            for j in 0..n {
                if j != i {
                    g *= vals[j];
                }
            }
            grad[i] = g;
        }
        value
    }

    fn time_support(&self) -> (f64, f64) {
        (self.center[0] - self.radii[0], self.center[0] + self.radii[0])
    }

    fn contains_space(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &xi)| (xi - self.center[i + 1]).abs() < self.radii[i + 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyResidual {
    pub value: f64,
    pub tol: f64,
    pub scale: f64,
}

/// Left side of the semi-entropy inequality for `f = v u`, `g = p u + q`.
pub fn entropy_residual(
    lp: &LinearProblem,
    grid: &Grid,
    times: &[f64],
    states: &[GridFn],
    phi: &TestFunction,
    kappa: f64,
    sign: Sign,
) -> Result<EntropyResidual> {
    check_series(times, states)?;
    let dim = grid.dim();
    if phi.center.len() != dim + 1 || dim + 1 > 8 {
        return Err(Error::DimensionMismatch { what: "test function", expected: dim + 1, got: phi.center.len() });
    }
    let (lip, _) = lp.velocity.sampled_bounds(grid, times[0], *times.last().unwrap());
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&n| phi.contains_space(&grid.node_point(n)))
        .collect();
    let (ts_lo, ts_hi) = phi.time_support();
    let wt = |j: usize| -> f64 {
        let n = times.len();
        let left = if j > 0 { times[j] - times[j - 1] } else { 0.0 };
        let right = if j + 1 < n { times[j + 1] - times[j] } else { 0.0 };
        0.5 * (left + right)
    };
    let mut grad = vec![0.0; dim + 1];
    let mut v = vec![0.0; dim];
    let w = grid.weight();
    let mut total = 0.0;
    let (mut sup_part, mut i_dt, mut i_dx, mut i_phi, mut p_sup, mut q_sup, mut div_sup) = (0.0f64, 0.0, 0.0, 0.0, 0.0f64, 0.0f64, 0.0f64);
    let mut x = vec![0.0; dim];
    for (j, &t) in times.iter().enumerate() {
        if t <= ts_lo || t >= ts_hi {
            continue;
        }
        let tw = wt(j);
        for &node in &nodes {
            grid.node_coords(node, &mut x);
            let f = phi.eval(t, &x, &mut grad);
            let u = states[j].get(node, 0);
            let z = u - kappa;
            let part = sign.part(z);
            let s = sign.sgn(z);
            lp.velocity.eval(t, &x, &mut v);
            let vdot: f64 = v.iter().zip(&grad[1..]).map(|(a, b)| a * b).sum();
            let p = (lp.p)(t, &x);
            let q = (lp.q)(t, &x);
            let dv = lp.velocity.div(t, &x);
            total += tw * w * (part * grad[0] + part * vdot + s * (p * u + q - kappa * dv) * f);
            sup_part = sup_part.max(part);
            i_dt += tw * w * grad[0].abs();
            i_dx += tw * w * grad[1..].iter().map(|g| g * g).sum::<f64>().sqrt();
            i_phi += tw * w * f;
            p_sup = p_sup.max(p.abs());
            q_sup = q_sup.max(q.abs());
            div_sup = div_sup.max(dv.abs());
        }
    }
    // initial term
    let t0 = times[0];
    if ts_lo < t0 && t0 < ts_hi {
        for &node in &nodes {
            grid.node_coords(node, &mut x);
            let f = phi.eval(t0, &x, &mut grad);
            total += w * sign.part(states[0].get(node, 0) - kappa) * f;
        }
    }
    // boundary term
    let mut bterm = 0.0;
    for (fi, face) in grid.faces().iter().enumerate() {
        for jf in 0..face.len() {
            let xi = grid.face_point(fi, jf);
            for (j, &t) in times.iter().enumerate() {
                if t <= ts_lo || t >= ts_hi {
                    continue;
                }
                let f = phi.eval(t, &xi, &mut grad);
                if f > 0.0 {
                    bterm += wt(j) * face.weight() * sign.part((lp.ub)(t, &xi) - kappa) * f;
                }
            }
        }
    }
    total += lip * bterm;
    let dt = times.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    let scale = sup_part * (i_dt + lip * i_dx + (p_sup + div_sup + 1.0) * i_phi) + q_sup * i_phi;
    let tol = 10.0 * (grid.max_width() + dt) * scale;
    Ok(EntropyResidual { value: total, tol, scale })
}

/// Random test functions supported away from truncation faces and ending
/// before the last stored time.
pub fn random_test_function(grid: &Grid, t0: f64, t_end: f64, rng: &mut ChaCha8Rng) -> TestFunction {
    let span = t_end - t0;
    let rt = rng.gen_range(0.1..0.35) * span;
    let ct = rng.gen_range(t0 - 0.5 * rt..t_end - rt);
    let mut center = vec![ct];
    let mut radii = vec![rt];
    let guard = 5.0 * grid.max_width();
    for a in grid.domain().axes() {
        let (lo, hi) = match a.kind {
            AxisKind::HalfLine => (a.lo - 0.25 * a.length(), a.hi - guard),
            AxisKind::FullLine => (a.lo + guard, a.hi - guard),
        };
        let width = hi - lo;
        let r = rng.gen_range(0.05..0.25) * width;
        let c = rng.gen_range(lo + r..hi - r);
        center.push(c);
        radii.push(r);
    }
    TestFunction { center, radii }
}

/// Outcome of a randomized entropy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySweep {
    pub samples: usize,
    pub failures: usize,
    /// Smallest `residual / tol` seen.
    pub worst_normalized: f64,
}

/// Samples `(kappa, phi, sign)` per component and checks residual `>= -tol`.
pub fn entropy_sweep(
    lps: &[LinearProblem],
    grid: &Grid,
    traj: &Trajectory,
    samples: usize,
    seed: u64,
) -> Result<EntropySweep> {
    let k = lps.len();
    let t0 = traj.times[0];
    let t_end = traj.final_time();
    let comps: Vec<Vec<GridFn>> = (0..k).map(|h| traj.states.iter().map(|s| s.component_fn(h)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(samples * k);
    for h in 0..k {
        let lo = comps[h].iter().map(GridFn::min_value).fold(f64::INFINITY, f64::min);
        let hi = comps[h].iter().map(GridFn::max_value).fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (hi - lo).max(1e-6);
        for _ in 0..samples {
            let kappa = rng.gen_range(lo - pad..=hi + pad);
            let sign = if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus };
            let phi = random_test_function(grid, t0, t_end, &mut rng);
            jobs.push((h, kappa, sign, phi));
        }
    }
    let results: Result<Vec<EntropyResidual>> = jobs
        .par_iter()
        .map(|(h, kappa, sign, phi)| entropy_residual(&lps[*h], grid, &traj.times, &comps[*h], phi, *kappa, *sign))
        .collect();
    let results = results?;
    let failures = results.iter().filter(|r| r.value < -r.tol).count();
    let worst = results
        .iter()
        .map(|r| if r.tol > 0.0 { r.value / r.tol } else if r.value >= 0.0 { 0.0 } else { f64::NEG_INFINITY })
        .fold(f64::INFINITY, f64::min);
    Ok(EntropySweep { samples: results.len(), failures, worst_normalized: worst })
}
