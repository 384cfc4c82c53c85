//! Truncated computational box, cell-centered tensor grids and the discrete
//! norms and quadratures used by every nonlocal term.
//!
//! Axes are ordered with the `m` half-line axes first. A half-line axis spans
//! `[0, L]` and carries the inflow boundary at `0`; its upper end is an
//! artificial outflow face. Full-line axes span `[lo, hi]` with both ends
//! artificial.

use smallvec::SmallVec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    HalfLine,
    FullLine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub kind: AxisKind,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    axes: Vec<Axis>,
    half: usize,
}

impl Domain {
    /// Builds `[0, L_1] x ... x [0, L_m] x [lo_1, hi_1] x ... x [lo_n, hi_n]`.
    pub fn new(half_lengths: &[f64], full_bounds: &[(f64, f64)]) -> Result<Self> {
        if half_lengths.len() + full_bounds.len() == 0 {
            return Err(Error::InvalidDomain("m + n must be at least 1".into()));
        }
        let mut axes = Vec::with_capacity(half_lengths.len() + full_bounds.len());
        for &l in half_lengths {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidDomain(format!("half-line length {l} must be positive")));
            }
            axes.push(Axis { kind: AxisKind::HalfLine, lo: 0.0, hi: l });
        }
        for &(lo, hi) in full_bounds {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidDomain(format!("full-line bounds [{lo}, {hi}] are empty")));
            }
            axes.push(Axis { kind: AxisKind::FullLine, lo, hi });
        }
        Ok(Domain { axes, half: half_lengths.len() })
    }

    /// Half-line lengths `L_i` and symmetric full-line boxes `[-L_j, L_j]`.
    pub fn symmetric(half_lengths: &[f64], full_half_widths: &[f64]) -> Result<Self> {
        let full: Vec<(f64, f64)> = full_half_widths.iter().map(|&l| (-l, l)).collect();
        Self::new(half_lengths, &full)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of half-line axes (`m`).
    pub fn half_axes(&self) -> usize {
        self.half
    }

    /// Number of full-line axes (`n`).
    pub fn full_axes(&self) -> usize {
        self.axes.len() - self.half
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.axes.iter().zip(x).all(|(a, &xi)| xi >= a.lo && xi <= a.hi)
    }

    /// Index of the half-line face containing `xi` (coordinate zero), if any.
    pub fn inflow_face_of(&self, xi: &[f64]) -> Option<usize> {
        (0..self.half).find(|&i| xi[i].abs() <= 1e-12 * self.axes[i].hi.max(1.0))
    }
}

/// Cell centers of one inflow face: all axes except the face's own.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGrid {
    pub axis: usize,
    /// Indices of the remaining axes, in order.
    others: Vec<usize>,
    shape: Vec<usize>,
    len: usize,
    weight: f64,
}

impl FaceGrid {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Area element of one face cell (1 when the face is a point).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn area(&self) -> f64 {
        self.weight * self.len as f64
    }
}

/// Cell index and fraction of a scaled coordinate, snapping round-off at nodes.
fn snap(s: f64) -> (usize, f64) {
    let r = s.round();
    if (s - r).abs() < 1e-9 {
        return (r as usize, 0.0);
    }
    let i = s.floor() as usize;
    (i, s - i as f64)
}

/// Interpolation stencil: node indices with their multilinear weights.
pub type Stencil = SmallVec<[(usize, f64); 8]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    cells: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
    faces: Vec<FaceGrid>,
}

impl Grid {
    /// Uniform cell-centered grid with `cells[i]` cells along axis `i`.
    pub fn new(domain: Domain, cells: &[usize]) -> Result<Self> {
        if cells.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                what: "cells per axis",
                expected: domain.dim(),
                got: cells.len(),
            });
        }
        if cells.iter().any(|&c| c == 0) {
            return Err(Error::InvalidDomain("every axis needs at least one cell".into()));
        }
        let widths: Vec<f64> =
            domain.axes().iter().zip(cells).map(|(a, &c)| a.length() / c as f64).collect();
        let mut strides = vec![1usize; cells.len()];
        for i in (0..cells.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cells[i + 1];
        }
        let len = cells.iter().product();
        let faces = (0..domain.half_axes())
            .map(|axis| {
                let others: Vec<usize> = (0..cells.len()).filter(|&j| j != axis).collect();
                let shape: Vec<usize> = others.iter().map(|&j| cells[j]).collect();
                FaceGrid {
                    axis,
                    len: shape.iter().product(),
                    weight: others.iter().map(|&j| widths[j]).product(),
                    others,
                    shape,
                }
            })
            .collect();
        Ok(Grid { domain, cells: cells.to_vec(), widths, strides, len, faces })
    }

    /// Same number of cells on every axis.
    pub fn uniform(domain: Domain, cells: usize) -> Result<Self> {
        let c = vec![cells; domain.dim()];
        Self::new(domain, &c)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    /// Quadrature weight of every node (product of cell widths).
    pub fn weight(&self) -> f64 {
        self.widths.iter().product()
    }

    pub fn faces(&self) -> &[FaceGrid] {
        &self.faces
    }

    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        let mut r = node;
        for (o, &s) in out.iter_mut().zip(&self.strides) {
            *o = r / s;
            r %= s;
        }
    }

    pub fn node_coords(&self, node: usize, out: &mut [f64]) {
        let mut r = node;
        for (a, o) in out.iter_mut().enumerate() {
            let i = r / self.strides[a];
            r %= self.strides[a];
            *o = self.domain.axes[a].lo + (i as f64 + 0.5) * self.widths[a];
        }
    }

    pub fn node_point(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_coords(node, &mut x);
        x
    }

    /// Coordinates of face node `j` on face `f` (the face coordinate is 0).
    pub fn face_coords(&self, f: usize, j: usize, out: &mut [f64]) {
        let face = &self.faces[f];
        out[face.axis] = 0.0;
        let mut r = j;
        let mut stride: usize = face.shape.iter().product();
        for (s, &axis) in face.shape.iter().zip(&face.others) {
            stride /= s;
            let i = r / stride;
            r %= stride;
            out[axis] = self.domain.axes[axis].lo + (i as f64 + 0.5) * self.widths[axis];
        }
    }

    pub fn face_point(&self, f: usize, j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.face_coords(f, j, &mut x);
        x
    }

    /// Multilinear stencil at an arbitrary point. Outside the outermost cell
    /// centers the value is held constant.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        let mut st: Stencil = SmallVec::new();
        st.push((0, 1.0));
        for (a, &xa) in x.iter().enumerate().take(self.dim()) {
            let n = self.cells[a];
            let s = (xa - self.domain.axes[a].lo) / self.widths[a] - 0.5;
            let stride = self.strides[a];
            let (i0, frac) = if n == 1 || s <= 0.0 {
                (0usize, 0.0)
            } else if s >= (n - 1) as f64 {
                (n - 1, 0.0)
            } else {
                snap(s)
            };
            if frac == 0.0 {
                for e in st.iter_mut() {
                    e.0 += i0 * stride;
                }
            } else {
                let count = st.len();
                for e in 0..count {
                    let (idx, w) = st[e];
                    st[e] = (idx + i0 * stride, w * (1.0 - frac));
                    st.push((idx + (i0 + 1) * stride, w * frac));
                }
            }
        }
        st
    }

    /// Multilinear stencil on face `f` for the tangential coordinates of `xi`.
    pub fn face_stencil(&self, f: usize, xi: &[f64]) -> Stencil {
        let face = &self.faces[f];
        let mut st: Stencil = SmallVec::new();
        st.push((0, 1.0));
        let mut stride: usize = face.shape.iter().product();
        for (&n, &axis) in face.shape.iter().zip(&face.others) {
            stride /= n;
            let s = (xi[axis] - self.domain.axes[axis].lo) / self.widths[axis] - 0.5;
            let (i0, frac) = if n == 1 || s <= 0.0 {
                (0usize, 0.0)
            } else if s >= (n - 1) as f64 {
                (n - 1, 0.0)
            } else {
                snap(s)
            };
            if frac == 0.0 {
                for e in st.iter_mut() {
                    e.0 += i0 * stride;
                }
            } else {
                let count = st.len();
                for e in 0..count {
                    let (idx, w) = st[e];
                    st[e] = (idx + i0 * stride, w * (1.0 - frac));
                    st.push((idx + (i0 + 1) * stride, w * frac));
                }
            }
        }
        st
    }

    /// Discrete `L¹(X; R^k)` norm: sum over components and nodes of `|f^h|` times the cell volume.
    pub fn l1_norm(&self, f: &GridFn) -> Result<f64> {
        f.check_finite()?;
        Ok(f.values.iter().map(|v| v.abs()).sum::<f64>() * self.weight())
    }

    /// Discrete `L∞` system norm: sum over components of the nodal sup of `|f^h|`.
    pub fn linf_norm(&self, f: &GridFn) -> Result<f64> {
        f.check_finite()?;
        Ok((0..f.k).map(|h| f.component_sup(h)).sum())
    }

    /// L¹ norm of one component.
    pub fn component_l1(&self, f: &GridFn, h: usize) -> f64 {
        f.component(h).map(f64::abs).sum::<f64>() * self.weight()
    }

    /// Signed integral of one component.
    pub fn component_integral(&self, f: &GridFn, h: usize) -> f64 {
        f.component(h).sum::<f64>() * self.weight()
    }

    /// Quadrature of `∫ K(at, x') f(x') dx'` where `kernel(at, x', out)` fills a
    /// row-major `rows × k` matrix.
    pub fn integrate_kernel<K>(&self, kernel: K, rows: usize, f: &GridFn, at: &[f64]) -> Result<Vec<f64>>
    where
        K: Fn(&[f64], &[f64], &mut [f64]),
    {
        if f.len() != self.len {
            return Err(Error::DimensionMismatch { what: "grid function", expected: self.len, got: f.len() });
        }
        let k = f.k;
        let mut acc = vec![0.0; rows];
        let mut mat = vec![0.0; rows * k];
        let mut xp = vec![0.0; self.dim()];
        for node in 0..self.len {
            self.node_coords(node, &mut xp);
            kernel(at, &xp, &mut mat);
            let vals = f.node(node);
            for r in 0..rows {
                let row = &mat[r * k..(r + 1) * k];
                let mut s = 0.0;
                for (kk, v) in row.iter().zip(vals) {
                    s += kk * v;
                }
                acc[r] += s;
            }
        }
        let w = self.weight();
        for a in acc.iter_mut() {
            *a *= w;
            if !a.is_finite() {
                return Err(Error::NonFinite { what: "kernel integral" });
            }
        }
        Ok(acc)
    }

    /// L¹ mass carried by nodes within `cells` cells of a truncation face.
    /// Large values mean the box is too small for the run.
    pub fn truncation_layer_mass(&self, f: &GridFn, cells: usize) -> f64 {
        let mut idx = vec![0usize; self.dim()];
        let mut total = 0.0;
        for node in 0..self.len {
            self.multi_index(node, &mut idx);
            let near = self.domain.axes.iter().enumerate().any(|(a, axis)| {
                let upper = idx[a] + cells >= self.cells[a];
                let lower = axis.kind == AxisKind::FullLine && idx[a] < cells;
                upper || lower
            });
            if near {
                total += f.node(node).iter().map(|v| v.abs()).sum::<f64>();
            }
        }
        total * self.weight()
    }
}

/// Values in `R^k` at every grid node, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    k: usize,
    values: Vec<f64>,
}

impl GridFn {
    pub fn zeros(grid: &Grid, k: usize) -> Self {
        GridFn { k, values: vec![0.0; grid.len() * k] }
    }

    pub fn from_values(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::DimensionMismatch { what: "grid function values", expected: k, got: values.len() });
        }
        Ok(GridFn { k, values })
    }

    /// Samples `f(x, out)` at every node.
    pub fn sample<F>(grid: &Grid, k: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let mut values = vec![0.0; grid.len() * k];
        let mut x = vec![0.0; grid.dim()];
        for (node, chunk) in values.chunks_mut(k).enumerate() {
            grid.node_coords(node, &mut x);
            f(&x, chunk);
        }
        GridFn { k, values }
    }

    /// Samples a scalar function.
    pub fn sample_scalar<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        Self::sample(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.k..(node + 1) * self.k]
    }

    pub fn get(&self, node: usize, h: usize) -> f64 {
        self.values[node * self.k + h]
    }

    pub fn set(&mut self, node: usize, h: usize, v: f64) {
        self.values[node * self.k + h] = v;
    }

    pub fn component(&self, h: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(h).step_by(self.k).copied()
    }

    /// Extracts one component as a scalar grid function.
    pub fn component_fn(&self, h: usize) -> GridFn {
        GridFn { k: 1, values: self.component(h).collect() }
    }

    /// Assembles a system grid function from scalar components.
    pub fn from_components(components: &[GridFn]) -> Result<GridFn> {
        let k = components.len();
        let n = components.first().map_or(0, GridFn::len);
        if components.iter().any(|c| c.k != 1 || c.len() != n) {
            return Err(Error::DimensionMismatch { what: "component length", expected: n, got: 0 });
        }
        let mut values = vec![0.0; n * k];
        for (h, c) in components.iter().enumerate() {
            for (node, v) in c.values.iter().enumerate() {
                values[node * k + h] = *v;
            }
        }
        Ok(GridFn { k, values })
    }

    pub fn component_sup(&self, h: usize) -> f64 {
        self.component(h).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn component_min(&self, h: usize) -> f64 {
        self.component(h).fold(f64::INFINITY, f64::min)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::CorruptState { node: i / self.k, component: i % self.k }),
            None => Ok(()),
        }
    }

    /// Multilinear interpolation of every component at `x`.
    pub fn interpolate(&self, grid: &Grid, x: &[f64], out: &mut [f64]) {
        self.interpolate_stencil(&grid.stencil(x), out);
    }

    pub fn interpolate_stencil(&self, stencil: &Stencil, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(node, w) in stencil {
            for (o, v) in out.iter_mut().zip(self.node(node)) {
                *o += w * v;
            }
        }
    }

    pub fn interpolate_component(&self, stencil: &Stencil, h: usize) -> f64 {
        stencil.iter().map(|&(node, w)| w * self.get(node, h)).sum()
    }

    pub fn scale(&self, c: f64) -> GridFn {
        GridFn { k: self.k, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &GridFn) -> GridFn {
        GridFn { k: self.k, values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &GridFn) -> GridFn {
        GridFn { k: self.k, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }
}

/// Values at the cell centers of every inflow face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFn {
    pub faces: Vec<Vec<f64>>,
}

impl BoundaryFn {
    pub fn zeros(grid: &Grid) -> Self {
        BoundaryFn { faces: grid.faces().iter().map(|f| vec![0.0; f.len()]).collect() }
    }

    pub fn sample<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut xi = vec![0.0; grid.dim()];
        let faces = (0..grid.faces().len())
            .map(|fi| {
                (0..grid.faces()[fi].len())
                    .map(|j| {
                        grid.face_coords(fi, j, &mut xi);
                        f(&xi)
                    })
                    .collect()
            })
            .collect();
        BoundaryFn { faces }
    }

    pub fn l1_norm(&self, grid: &Grid) -> f64 {
        self.faces
            .iter()
            .zip(grid.faces())
            .map(|(vals, fg)| vals.iter().map(|v| v.abs()).sum::<f64>() * fg.weight())
            .sum()
    }

    pub fn sup(&self) -> f64 {
        self.faces.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at an arbitrary boundary point, by face interpolation.
    pub fn at(&self, grid: &Grid, xi: &[f64]) -> f64 {
        match grid.domain().inflow_face_of(xi) {
            Some(f) => grid.face_stencil(f, xi).iter().map(|&(j, w)| w * self.faces[f][j]).sum(),
            None => 0.0,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.faces.iter().flatten().all(|v| *v >= 0.0)
    }
}
