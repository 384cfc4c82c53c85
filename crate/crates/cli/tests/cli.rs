use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use renewal_cli::output::{parse_state_csv, state_csv};
use renewal_core::{Domain, Grid, GridFn};

fn renewal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewal")).args(args).output().unwrap()
}

fn run_config(dir: &Path, name: &str, text: &str) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, text).unwrap();
    let out = dir.join(format!("out-{name}"));
    let o = renewal(&["--output", out.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    (o, out)
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = head.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

const SMALL_SIHR: &str = "[model]\npreset = \"sihr-conservation\"\nhorizon = 0.5\n[model.params]\ncells = 64\n";

#[test]
fn list_presets_names_the_shipped_models() {
    let o = renewal(&["list-presets"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["sihr", "sihr-conservation", "blowup-ode", "blowup-transport", "cell-growth", "competitive"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from\n{text}");
    }
}

#[test]
fn passing_run_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), "ok", SMALL_SIHR);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["effective_config.toml", "timeseries.csv", "certificates.txt", "states/state_00000.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let certs = fs::read_to_string(out.join("certificates.txt")).unwrap();
    assert!(certs.starts_with("preset = sihr-conservation"));
    assert!(certs.contains("status = pass"));
}

#[test]
fn failed_certificate_exits_one() {
    // the global growth bound cannot hold for a blow-up
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(
        dir.path(),
        "fail",
        "[model]\npreset = \"blowup-ode\"\nhorizon = 0.9\n[model.params]\ncells = 100\n[certificates]\nrun = [\"gronwall\"]\n",
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("certificates.txt")).unwrap().contains("status = fail"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("syntax", "[model\npreset = 1"),
        ("unknown-key", "[model]\npreset = \"sihr\"\nfoo = 2\n"),
        ("unknown-preset", "[model]\npreset = \"nope\"\n"),
        ("unknown-param", "[model]\npreset = \"sihr\"\n[model.params]\nnope = 1.0\n"),
        ("bad-solver", "[model]\npreset = \"sihr\"\n[solver]\ntheta_max = 1.5\n"),
    ] {
        let (o, _) = run_config(dir.path(), name, text);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = renewal(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blowup_past_one_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), "blow", "[model]\npreset = \"blowup-ode\"\nhorizon = 1.5\n[model.params]\ncells = 100\n");
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("blow-up between t = 0.9"), "{err}");
    assert!(fs::read_to_string(out.join("certificates.txt")).unwrap().starts_with("status = blow-up"));
    // the states computed before the failure are kept
    assert!(out.join("timeseries.csv").exists());
}

#[test]
fn blowup_mass_at_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), "mass", "[model]\npreset = \"blowup-ode\"\n");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let series = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let t = column(&series, "t");
    let mass = column(&series, "mass0");
    assert_eq!(*t.last().unwrap(), 0.9);
    let m = *mass.last().unwrap();
    assert!((m - 10.0).abs() <= 0.5, "mass {m}");
}

#[test]
fn conservation_preset_keeps_total_mass() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), "cons", "[model]\npreset = \"sihr-conservation\"\n[certificates]\nrun = [\"apriori\"]\n");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let series = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let cols: Vec<Vec<f64>> = (0..4).map(|h| column(&series, &format!("mass{h}"))).collect();
    let total: Vec<f64> = (0..cols[0].len()).map(|i| cols.iter().map(|c| c[i]).sum()).collect();
    let drift = total.iter().map(|m| (m - total[0]).abs() / total[0]).fold(0.0, f64::max);
    assert!(drift <= 0.02, "drift {drift}");
}

#[test]
fn runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out_a) = run_config(dir.path(), "a", SMALL_SIHR);
    let (b, out_b) = run_config(dir.path(), "b", SMALL_SIHR);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for f in ["timeseries.csv", "certificates.txt", "states/state_00050.csv"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let threads = dir.path().join("out-threads");
    let o = renewal(&["--threads", "1", "--output", threads.to_str().unwrap(), "run", dir.path().join("a.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(out_a.join("timeseries.csv")).unwrap(), fs::read(threads.join("timeseries.csv")).unwrap());
}

#[test]
fn written_state_reads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), "rt", SMALL_SIHR);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("states/state_00050.csv")).unwrap();
    let (coords, f) = parse_state_csv(&text).unwrap();
    assert_eq!(coords.len(), 64);
    assert_eq!(f.k(), 4);
    let grid = Grid::uniform(Domain::new(&[10.0], &[]).unwrap(), 64).unwrap();
    assert_eq!(state_csv(&grid, &f), text);

    let g = Grid::uniform(Domain::new(&[1.0], &[(-1.0, 1.0)]).unwrap(), 7).unwrap();
    let f = GridFn::sample(&g, 2, |x, out| {
        out[0] = (x[0] * 1e-7).exp() / 3.0;
        out[1] = -x[1] * 1e300;
    });
    let (coords, back) = parse_state_csv(&state_csv(&g, &f)).unwrap();
    assert_eq!(back, f);
    for (n, c) in coords.iter().enumerate() {
        assert_eq!(*c, g.node_point(n));
    }
}

#[test]
fn control_run_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = \"sihr\"\nhorizon = 1.0\n[model.params]\ncells = 32\nrho = 0.0\nmu_h = 0.0\n\
                [certificates]\nrun = [\"contraction\"]\n\
                [control]\ntarget = \"sihr-kappa\"\nobjective = \"deaths\"\nlower = [0.0]\nupper = [1.0]\nbudget = 12\n";
    let (o, out) = run_config(dir.path(), "ctl", text);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("control_trace.csv")).unwrap();
    let inc = column(&trace, "incumbent");
    assert!(!inc.is_empty() && inc.len() <= 12);
    assert!(inc.windows(2).all(|w| w[1] <= w[0]));
    assert!(fs::read_to_string(out.join("certificates.txt")).unwrap().contains("control.best = "));
}
