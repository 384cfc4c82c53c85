//! Backward tracing of characteristics `dX/ds = v(s, X)`, exit times through
//! inflow faces, and the growth factor accumulated along a path.

use crate::domain::{AxisKind, Domain};
use crate::error::{Error, Result};
use crate::problem::Velocity;

#[derive(Debug, Clone, PartialEq)]
pub enum CharKind {
    /// The path stays in the box back to the start time.
    InteriorFoot,
    /// The path enters through the inflow face `x_face = 0` at `time`.
    BoundaryHit { time: f64, face: usize },
    /// The path enters through an artificial truncation face at `time`;
    /// the datum there is taken to be zero.
    TruncationExit { time: f64, axis: usize },
}

/// One backward trace. Knots are stored in increasing time; the first knot is
/// the foot or the entry point, the last is the origin `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharRecord {
    pub t: f64,
    pub kind: CharKind,
    pub dim: usize,
    pub times: Vec<f64>,
    path: Vec<f64>,
}

impl CharRecord {
    pub fn knots(&self) -> usize {
        self.times.len()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.path[j * self.dim..(j + 1) * self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        self.point(self.knots() - 1)
    }

    /// Foot or entry point.
    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    /// Time of the first knot: the start time for interior feet, the entry time otherwise.
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn foot(&self) -> Option<&[f64]> {
        match self.kind {
            CharKind::InteriorFoot => Some(self.start()),
            _ => None,
        }
    }

    pub fn exit_time(&self) -> Option<f64> {
        match self.kind {
            CharKind::BoundaryHit { time, .. } | CharKind::TruncationExit { time, .. } => Some(time),
            CharKind::InteriorFoot => None,
        }
    }

    pub fn is_truncation_exit(&self) -> bool {
        matches!(self.kind, CharKind::TruncationExit { .. })
    }

    /// Position at an intermediate time, by linear interpolation between knots.
    pub fn position_at(&self, tau: f64, out: &mut [f64]) -> Result<()> {
        let (lo, hi) = (self.times[0], self.t);
        let tol = 1e-12 * (1.0 + hi.abs());
        if tau < lo - tol || tau > hi + tol {
            return Err(Error::OutOfRange { tau, lo, hi });
        }
        let n = self.knots();
        if n == 1 {
            out.copy_from_slice(self.point(0));
            return Ok(());
        }
        let j = self.times.partition_point(|&s| s <= tau).clamp(1, n - 1);
        let (s0, s1) = (self.times[j - 1], self.times[j]);
        let a = if s1 > s0 { ((tau - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        let (p0, p1) = (self.point(j - 1), self.point(j));
        for d in 0..self.dim {
            out[d] = p0[d] + a * (p1[d] - p0[d]);
        }
        Ok(())
    }
}

/// Default substep count for a trace of length `span`.
pub fn default_substeps(span: f64, vmax: f64, dx_min: f64) -> usize {
    let n = (span.abs() * vmax / dx_min).ceil();
    if n.is_finite() {
        (n as usize).max(16)
    } else {
        16
    }
}

fn rk4_back(v: &Velocity, s: f64, x: &[f64], h: f64, out: &mut [f64], scratch: &mut [Vec<f64>; 5]) {
    // integrates dX/ds = v from s down to s - h
    let d = x.len();
    let [k1, k2, k3, k4, tmp] = scratch;
    v.eval(s, x, k1);
    for i in 0..d {
        tmp[i] = x[i] - 0.5 * h * k1[i];
    }
    v.eval(s - 0.5 * h, tmp, k2);
    for i in 0..d {
        tmp[i] = x[i] - 0.5 * h * k2[i];
    }
    v.eval(s - 0.5 * h, tmp, k3);
    for i in 0..d {
        tmp[i] = x[i] - h * k3[i];
    }
    v.eval(s - h, tmp, k4);
    for i in 0..d {
        out[i] = x[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// The face `x` lies furthest beyond, with whether it is an inflow face.
fn outside(domain: &Domain, x: &[f64]) -> Option<(usize, bool)> {
    let mut worst: Option<(usize, bool, f64)> = None;
    for (i, a) in domain.axes().iter().enumerate() {
        let (inflow, gap) = match a.kind {
            AxisKind::HalfLine => {
                if x[i] < 0.0 {
                    (true, -x[i])
                } else if x[i] > a.hi {
                    (false, x[i] - a.hi)
                } else {
                    continue;
                }
            }
            AxisKind::FullLine => {
                if x[i] < a.lo {
                    (false, a.lo - x[i])
                } else if x[i] > a.hi {
                    (false, x[i] - a.hi)
                } else {
                    continue;
                }
            }
        };
        if worst.map_or(true, |w| gap > w.2) {
            worst = Some((i, inflow, gap));
        }
    }
    worst.map(|(i, inflow, _)| (i, inflow))
}

/// Traces the characteristic through `(t, x)` backward to `t_start` with RK4.
/// A crossing of a face is refined by bisection to `1e-12 * t`.
pub fn trace_back(
    v: &Velocity,
    domain: &Domain,
    t: f64,
    x: &[f64],
    t_start: f64,
    substeps: usize,
) -> Result<CharRecord> {
    let dim = domain.dim();
    if x.len() != dim || v.dim() != dim {
        return Err(Error::DimensionMismatch { what: "trace point", expected: dim, got: x.len() });
    }
    if x.iter().any(|c| !c.is_finite()) || !t.is_finite() {
        return Err(Error::NonFinite { what: "trace origin" });
    }
    let span = t - t_start;
    let mut times = vec![t];
    let mut path = x.to_vec();
    let mut kind = CharKind::InteriorFoot;
    if span > 0.0 {
        let n = substeps.max(1);
        let h = span / n as f64;
        let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
        let mut cur = x.to_vec();
        let mut next = vec![0.0; dim];
        for step in 0..n {
            let s = t - step as f64 * h;
            let hh = if step + 1 == n { s - t_start } else { h };
            rk4_back(v, s, &cur, hh, &mut next, &mut scratch);
            if next.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite { what: "velocity" });
            }
            if let Some((axis, inflow)) = outside(domain, &next) {
                // bisection on the step length for the last instant inside
                let tol = 1e-12 * t.abs().max(1e-300);
                let (mut lo, mut hi) = (0.0, hh);
                let mut probe = vec![0.0; dim];
                for _ in 0..200 {
                    if hi - lo <= tol {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    rk4_back(v, s, &cur, mid, &mut probe, &mut scratch);
                    if outside(domain, &probe).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let delta = 0.5 * (lo + hi);
                rk4_back(v, s, &cur, delta, &mut probe, &mut scratch);
                let hit_time = s - delta;
                // the face crossed first going backward decides the kind
                let (axis, inflow) = nearest_face(domain, &probe).unwrap_or((axis, inflow));
                if inflow {
                    probe[axis] = 0.0;
                    kind = CharKind::BoundaryHit { time: hit_time, face: axis };
                } else {
                    let a = domain.axis(axis);
                    probe[axis] = if (probe[axis] - a.lo).abs() < (probe[axis] - a.hi).abs() { a.lo } else { a.hi };
                    kind = CharKind::TruncationExit { time: hit_time, axis };
                }
                times.push(hit_time);
                path.extend_from_slice(&probe);
                break;
            }
            times.push(s - hh);
            path.extend_from_slice(&next);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    // reverse into increasing time
    times.reverse();
    let knots = times.len();
    let mut rev = Vec::with_capacity(path.len());
    for j in (0..knots).rev() {
        rev.extend_from_slice(&path[j * dim..(j + 1) * dim]);
    }
    Ok(CharRecord { t, kind, dim, times, path: rev })
}

/// Face closest to `x` (which lies on the boundary up to the bisection
/// tolerance). Ties go to the lowest axis index, inflow faces first.
fn nearest_face(domain: &Domain, x: &[f64]) -> Option<(usize, bool)> {
    let mut best: Option<(usize, bool, f64)> = None;
    for (i, a) in domain.axes().iter().enumerate() {
        let cands: [(bool, f64); 2] = match a.kind {
            AxisKind::HalfLine => [(true, x[i].abs()), (false, (a.hi - x[i]).abs())],
            AxisKind::FullLine => [(false, (x[i] - a.lo).abs()), (false, (a.hi - x[i]).abs())],
        };
        for (inflow, d) in cands {
            if best.map_or(true, |b| d < b.2) {
                best = Some((i, inflow, d));
            }
        }
    }
    best.map(|(i, f, _)| (i, f))
}

fn trapezoid_partial(times: &[f64], g: &[f64], tau0: f64, tau1: f64) -> f64 {
    // ∫_{tau0}^{tau1} of the piecewise-linear interpolant of g
    let n = times.len();
    if n < 2 || tau1 <= tau0 {
        return 0.0;
    }
    let interp = |tau: f64| -> f64 {
        let j = times.partition_point(|&s| s <= tau).clamp(1, n - 1);
        let (s0, s1) = (times[j - 1], times[j]);
        if s1 <= s0 {
            return g[j];
        }
        let a = ((tau - s0) / (s1 - s0)).clamp(0.0, 1.0);
        g[j - 1] + a * (g[j] - g[j - 1])
    };
    let mut total = 0.0;
    for j in 1..n {
        let (a, b) = (times[j - 1].max(tau0), times[j].min(tau1));
        if b > a {
            total += 0.5 * (b - a) * (interp(a) + interp(b));
        }
    }
    total
}

/// `exp ∫_{tau0}^{tau1} (p - div v)` along the trace, composite trapezoid on the knots.
pub fn growth_factor<P, D>(rec: &CharRecord, p_along: P, divv_along: D, tau0: f64, tau1: f64) -> Result<f64>
where
    P: Fn(f64, &[f64]) -> f64,
    D: Fn(f64, &[f64]) -> f64,
{
    let (lo, hi) = (rec.times[0], rec.t);
    let tol = 1e-12 * (1.0 + hi.abs());
    for tau in [tau0, tau1] {
        if tau < lo - tol || tau > hi + tol {
            return Err(Error::OutOfRange { tau, lo, hi });
        }
    }
    if tau1 < tau0 {
        return Err(Error::OutOfRange { tau: tau1, lo: tau0, hi });
    }
    let g: Vec<f64> = (0..rec.knots())
        .map(|j| {
            let x = rec.point(j);
            p_along(rec.times[j], x) - divv_along(rec.times[j], x)
        })
        .collect();
    let e = trapezoid_partial(&rec.times, &g, tau0.max(lo), tau1.min(hi)).exp();
    if !e.is_finite() {
        return Err(Error::NonFinite { what: "growth factor" });
    }
    Ok(e)
}

/// Change-of-variables factor of the exit map at a boundary hit:
/// `exp(∫_t^T div v ds) / v_i(T, X(T))`.
pub fn exit_jacobian(rec: &CharRecord, v: &Velocity, inflow_bound: f64) -> Result<f64> {
    let (time, face) = match rec.kind {
        CharKind::BoundaryHit { time, face } => (time, face),
        _ => return Err(Error::NotBoundaryHit),
    };
    let mut vel = vec![0.0; rec.dim];
    v.eval(time, rec.start(), &mut vel);
    if vel[face] <= inflow_bound {
        return Err(Error::InflowViolation { face, speed: vel[face], bound: inflow_bound });
    }
    let g: Vec<f64> = (0..rec.knots()).map(|j| v.div(rec.times[j], rec.point(j))).collect();
    let integral = trapezoid_partial(&rec.times, &g, time, rec.t);
    Ok((-integral).exp() / vel[face])
}
