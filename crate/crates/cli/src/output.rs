//! Plain-text artifacts: state grids and time series as CSV, numbers with 17
//! significant digits so that re-reading reproduces every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use renewal_core::{Grid, GridFn};

use crate::CliError;

/// `%.17g`: shortest of fixed and scientific notation, trailing zeros removed.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let s = format!("{:.*}", (16 - exp) as usize, v);
        trim_fraction(&s).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_fraction(mant), sign, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One row per node: coordinates, then components.
pub fn state_csv(grid: &Grid, state: &GridFn) -> String {
    let mut out = String::new();
    let head: Vec<String> = (0..grid.dim()).map(|i| format!("x{i}")).chain((0..state.k()).map(|h| format!("u{h}"))).collect();
    out.push_str(&head.join(","));
    out.push('\n');
    let mut x = vec![0.0; grid.dim()];
    for node in 0..grid.len() {
        grid.node_coords(node, &mut x);
        let row: Vec<String> = x.iter().chain(state.node(node)).map(|&v| fmt_g(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Reads a state written by [`state_csv`]; returns coordinates and values.
pub fn parse_state_csv(text: &str) -> Result<(Vec<Vec<f64>>, GridFn), CliError> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| CliError::Parse("empty state file".into()))?;
    let cols: Vec<&str> = head.split(',').collect();
    let dim = cols.iter().filter(|c| c.starts_with('x')).count();
    let k = cols.len() - dim;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::Parse(format!("line {}: expected {} fields, got {}", i + 2, cols.len(), fields.len())));
        }
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let parsed = parsed.map_err(|e| CliError::Parse(format!("line {}: {e}", i + 2)))?;
        coords.push(parsed[..dim].to_vec());
        values.extend_from_slice(&parsed[dim..]);
    }
    let f = GridFn::from_values(k, values).map_err(|e| CliError::Parse(e.to_string()))?;
    Ok((coords, f))
}

pub struct SeriesRow {
    pub index: usize,
    pub t: f64,
    pub mass: Vec<f64>,
    pub sup: Vec<f64>,
    pub slab: usize,
    pub iterations: usize,
    pub theta: f64,
    pub radius: f64,
    pub halvings: usize,
}

pub fn series_csv(k: usize, rows: &[SeriesRow]) -> String {
    let mut out = String::from("index,t");
    for h in 0..k {
        let _ = write!(out, ",mass{h}");
    }
    for h in 0..k {
        let _ = write!(out, ",sup{h}");
    }
    out.push_str(",slab,iterations,theta,radius,halvings\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.index, fmt_g(r.t));
        for v in r.mass.iter().chain(&r.sup) {
            let _ = write!(out, ",{}", fmt_g(*v));
        }
        let _ = writeln!(out, ",{},{},{},{},{}", r.slab, r.iterations, fmt_g(r.theta), fmt_g(r.radius), r.halvings);
    }
    out
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
