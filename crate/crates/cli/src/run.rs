use std::fmt::Write as _;
use std::path::Path;

use renewal_core::analysis::{self, Certificate};
use renewal_core::models::{self, Model, Rate};
use renewal_core::{
    check_hypotheses, freeze, optimize, picard, Error, Objective, OptimizeResult, ProbeConfig, SystemDef, Trajectory,
};

use crate::config::{CertificateKind, ObjectiveName, RunConfig, TargetName};
use crate::output::{self, fmt_g, SeriesRow};
use crate::CliError;

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_time: f64,
    pub certificates: Vec<(String, bool)>,
    pub control: Option<Vec<f64>>,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.1)
    }
}

pub fn list_presets() -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>8}  description", "preset", "horizon");
    for p in models::PRESETS {
        let _ = writeln!(out, "{:<20} {:>8}  {}", p.name, fmt_g(p.horizon), p.description);
    }
    out
}

fn invalid(e: Error) -> CliError {
    CliError::Invalid(e.to_string())
}

fn solver(e: Error) -> CliError {
    let bracket = e.blow_up_bracket();
    let message = match bracket {
        Some((a, b)) => format!("solver blow-up between t = {} and t = {}", fmt_g(a), fmt_g(b)),
        None => format!("solver failure: {e}"),
    };
    CliError::Solver { message, bracket }
}

/// The preset model, with the control coefficients applied when given.
fn build_model(cfg: &RunConfig, coefs: Option<&[f64]>) -> Result<Model, CliError> {
    let name = &cfg.model.preset;
    let (Some(c), Some(ctl)) = (coefs, &cfg.control) else {
        return models::build_preset(name, &cfg.model.params).map_err(invalid);
    };
    let spec = ctl.spec();
    match ctl.target {
        TargetName::SihrKappa => {
            let mut p = models::sihr_params(name, &cfg.model.params, cfg.horizon()).map_err(invalid)?;
            p.kappa = spec.rate(c, 0);
            models::build_sihr(&p).map_err(invalid)
        }
        TargetName::CompetitiveEffort => {
            let mut p = models::competitive_params(&cfg.model.params, cfg.horizon()).map_err(invalid)?;
            p.effort = [spec.rate(c, 0), spec.rate(c, 1)];
            models::build_competitive(&p).map_err(invalid)
        }
    }
}

fn run_control(cfg: &RunConfig) -> Result<Option<OptimizeResult>, CliError> {
    let Some(ctl) = &cfg.control else { return Ok(None) };
    let spec = ctl.spec();
    let params = &cfg.model.params;
    let objective = match ctl.objective {
        ObjectiveName::Deaths => Objective::Deaths { mu_i: Rate::Const(params["mu_i"]), mu_h: Rate::Const(params["mu_h"]) },
        ObjectiveName::Peak => Objective::Peak,
        ObjectiveName::Profit => Objective::NegProfit { value: [Rate::Const(ctl.values[0]), Rate::Const(ctl.values[1])] },
    };
    let build = |c: &[f64]| -> renewal_core::Result<SystemDef> {
        build_model(cfg, Some(c)).map(|m| m.system).map_err(|e| Error::InvalidModel(e.to_string()))
    };
    let res = optimize(build, &spec, &objective, cfg.horizon(), &cfg.solver.picard()).map_err(invalid)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Some(res))
}

fn control_csv(res: &OptimizeResult) -> String {
    let n = res.best.len();
    let mut out = String::from("run");
    for i in 0..n {
        let _ = write!(out, ",c{i}");
    }
    out.push_str(",cost,incumbent\n");
    for e in &res.trace {
        let _ = write!(out, "{}", e.run);
        for v in &e.point {
            let _ = write!(out, ",{}", fmt_g(*v));
        }
        let cost = e.cost.map_or_else(|| "nan".to_string(), fmt_g);
        let _ = writeln!(out, ",{},{}", cost, fmt_g(e.incumbent));
    }
    out
}

fn slab_of(traj: &Trajectory, t: f64) -> Option<usize> {
    traj.slabs.iter().position(|s| t > s.t0 && t <= s.t1 + 1e-12)
}

fn write_states(dir: &Path, sys: &SystemDef, traj: &Trajectory, stride: usize) -> Result<(), CliError> {
    let grid = &*sys.grid;
    let last = traj.states.len() - 1;
    for (i, s) in traj.states.iter().enumerate() {
        if i % stride == 0 || i == last {
            output::write(&dir.join("states").join(format!("state_{i:05}.csv")), &output::state_csv(grid, s))?;
        }
    }
    let rows: Vec<SeriesRow> = traj
        .times
        .iter()
        .zip(&traj.states)
        .enumerate()
        .map(|(index, (&t, s))| {
            let slab = slab_of(traj, t);
            let d = slab.map(|j| &traj.slabs[j]);
            SeriesRow {
                index,
                t,
                mass: (0..sys.k).map(|h| grid.component_l1(s, h)).collect(),
                sup: (0..sys.k).map(|h| s.component_sup(h)).collect(),
                slab: slab.map_or(0, |j| j + 1),
                iterations: d.map_or(0, |d| d.iterations),
                theta: d.map_or(0.0, |d| d.theta),
                radius: d.map_or(0.0, |d| d.radius),
                halvings: d.map_or(0, |d| d.halvings),
            }
        })
        .collect();
    output::write(&dir.join("timeseries.csv"), &output::series_csv(sys.k, &rows))
}

struct Report {
    text: String,
    results: Vec<(String, bool)>,
}

impl Report {
    fn certificate(&mut self, label: &str, c: &Certificate) {
        let _ = writeln!(self.text, "{c}");
        self.results.push((label.to_string(), c.pass));
    }

    fn section(&mut self, name: &str, pass: bool, fields: &[(&str, String)]) {
        let _ = writeln!(self.text, "[certificate] {name}");
        let _ = writeln!(self.text, "status = {}", if pass { "pass" } else { "fail" });
        for (k, v) in fields {
            let _ = writeln!(self.text, "{k} = {v}");
        }
        self.text.push('\n');
        self.results.push((name.to_string(), pass));
    }
}

fn certify(cfg: &RunConfig, model: &Model, traj: &Trajectory) -> Result<Report, CliError> {
    let sys = &model.system;
    let grid = &*sys.grid;
    let tol = cfg.certificates.tolerance;
    let seed = cfg.output.seed;
    let mut rep = Report { text: String::new(), results: Vec::new() };
    let needs_frozen = cfg.certificates.run.iter().any(|c| matches!(c, CertificateKind::Apriori | CertificateKind::Entropy));
    let frozen = if needs_frozen && traj.times.len() > 1 { Some(freeze(sys, traj).map_err(solver)?) } else { None };
    for kind in &cfg.certificates.run {
        match kind {
            CertificateKind::Hypotheses => {
                let probe = ProbeConfig { samples: cfg.certificates.hypothesis_samples, seed, horizon: cfg.horizon(), ..ProbeConfig::default() };
                let r = check_hypotheses(sys, &model.constants, &probe);
                for c in &r.checks {
                    rep.section(
                        &format!("hypothesis-{}", c.name),
                        c.pass,
                        &[("worst_ratio", fmt_g(c.worst_ratio)), ("probes", c.probes.to_string())],
                    );
                }
            }
            CertificateKind::Apriori => {
                let Some(lps) = &frozen else { continue };
                for (h, lp) in lps.iter().enumerate() {
                    let states: Vec<_> = traj.states.iter().map(|s| s.component_fn(h)).collect();
                    let mut c = analysis::apriori_l1_bound(lp, grid, &traj.times, &states, tol).map_err(solver)?;
                    c.name = format!("apriori-l1-u{h}");
                    rep.certificate(&c.name.clone(), &c);
                    let mut c = analysis::apriori_linf_bound(lp, grid, &traj.times, &states, tol).map_err(solver)?;
                    c.name = format!("apriori-linf-u{h}");
                    rep.certificate(&c.name.clone(), &c);
                }
            }
            CertificateKind::Gronwall => {
                let c = analysis::gronwall_global_bound(sys, &model.constants, traj, tol).map_err(solver)?;
                rep.certificate("gronwall-global", &c);
            }
            CertificateKind::Contraction => {
                let c = analysis::contraction_certificate(sys, &model.constants, traj);
                rep.certificate("contraction", &c);
            }
            CertificateKind::Entropy => {
                let Some(lps) = &frozen else { continue };
                let s = analysis::entropy_sweep(lps, grid, traj, cfg.certificates.entropy_samples, seed).map_err(solver)?;
                rep.section(
                    "entropy",
                    s.failures == 0,
                    &[
                        ("samples", s.samples.to_string()),
                        ("failures", s.failures.to_string()),
                        ("worst_normalized", fmt_g(s.worst_normalized)),
                    ],
                );
            }
        }
    }
    Ok(rep)
}

/// Runs `cfg` (already resolved) writing artifacts into `dir`.
pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    output::write(&dir.join("effective_config.toml"), &toml::to_string(cfg).map_err(|e| CliError::Io(e.to_string()))?)?;
    let control = run_control(cfg)?;
    if let Some(res) = &control {
        output::write(&dir.join("control_trace.csv"), &control_csv(res))?;
    }
    let model = build_model(cfg, control.as_ref().map(|r| r.best.as_slice()))?;
    let sys = &model.system;
    let picard_cfg = cfg.solver.picard();
    let (traj, failure) = picard::solve_partial(sys, &sys.initial_state(), cfg.horizon(), &picard_cfg).map_err(solver)?;
    write_states(dir, sys, &traj, cfg.output.state_stride)?;
    if let Some(e) = failure {
        let err = solver(e);
        output::write(&dir.join("certificates.txt"), &format!("status = blow-up\nmessage = {err}\n"))?;
        return Err(err);
    }
    let rep = certify(cfg, &model, &traj)?;
    let pass = rep.results.iter().all(|r| r.1);
    let mut text = String::new();
    let _ = writeln!(text, "preset = {}", cfg.model.preset);
    let _ = writeln!(text, "final_time = {}", fmt_g(traj.final_time()));
    let _ = writeln!(text, "slabs = {}", traj.slabs.len());
    if let (Some(res), Some(ctl)) = (&control, &cfg.control) {
        let _ = writeln!(text, "control.target = {:?}", ctl.target);
        let _ = writeln!(text, "control.best = {}", res.best.iter().map(|v| fmt_g(*v)).collect::<Vec<_>>().join(", "));
        let _ = writeln!(text, "control.cost = {}", fmt_g(res.best_cost));
        let _ = writeln!(text, "control.runs = {}", res.runs);
        let _ = writeln!(text, "control.parameterization = piecewise constant, {} time pieces x {} age bins", ctl.breakpoints.len() + 1, ctl.age_edges.len() + 1);
    }
    let _ = writeln!(text, "status = {}\n", if pass { "pass" } else { "fail" });
    text.push_str(&rep.text);
    output::write(&dir.join("certificates.txt"), &text)?;
    Ok(RunSummary { final_time: traj.final_time(), certificates: rep.results, control: control.map(|r| r.best) })
}
