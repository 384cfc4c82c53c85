use std::sync::Arc;

use renewal_core::models::{
    build_cell_growth, build_competitive, build_sihr, CellGrowthParams, CompetitiveParams, Interaction, Rate, Rate2, SihrParams, H, I, R, S,
};
use renewal_core::{solve, GridFn, PicardConfig, Trajectory};

fn bump(c: f64, w: f64, a: f64) -> f64 {
    if (a - c).abs() < w {
        0.5 + 0.5 * (std::f64::consts::PI * (a - c) / w).cos()
    } else {
        0.0
    }
}

fn mass(traj: &Trajectory, grid: &renewal_core::Grid, i: usize, h: usize) -> f64 {
    grid.component_l1(&traj.states[i], h)
}

fn sihr_base(cells: usize, s0: f64, i0: f64) -> SihrParams {
    let mut p = SihrParams::age_only(
        10.0,
        cells,
        Arc::new(move |x, out| {
            out.fill(0.0);
            out[S] = s0 * bump(2.0, 1.5, x[0]);
            out[I] = i0 * bump(3.0, 1.0, x[0]);
        }),
    );
    p.horizon = 3.0;
    p
}

#[test]
fn decoupled_sihr_is_pure_transport() {
    let p = sihr_base(200, 1.0, 0.5);
    let m = build_sihr(&p).unwrap();
    let traj = solve(&m.system, 1.0, &PicardConfig::default()).unwrap();
    let grid = &*m.system.grid;
    let exact = GridFn::sample(grid, 4, |x, out| {
        out.fill(0.0);
        out[S] = bump(3.0, 1.5, x[0]);
        out[I] = 0.5 * bump(4.0, 1.0, x[0]);
    });
    let err = grid.l1_norm(&traj.final_state().sub(&exact)).unwrap();
    assert!(err < 2e-3, "{err}");
    assert_eq!(traj.final_state().component_sup(H), 0.0);
    assert_eq!(traj.final_state().component_sup(R), 0.0);
}

#[test]
fn infective_mass_decays_exponentially() {
    let mut p = sihr_base(200, 1.0, 0.5);
    p.mu_i = Rate::Const(0.1);
    p.kappa = Rate::Const(0.2);
    p.theta = Rate::Const(0.15);
    let c = 0.45;
    let m = build_sihr(&p).unwrap();
    let traj = solve(&m.system, 2.0, &PicardConfig::default()).unwrap();
    let grid = &*m.system.grid;
    let m0 = mass(&traj, grid, 0, I);
    for (i, &t) in traj.times.iter().enumerate() {
        let rel = mass(&traj, grid, i, I) / (m0 * (-c * t).exp()) - 1.0;
        assert!(rel.abs() < 0.02, "t = {t}: {rel}");
    }
}

/// Mass balance of the constant-rate model when nothing crosses the faces:
/// `S' = -mu_S S - rho I S`, `I' = rho I S - c I`.
fn mass_ode(s0: f64, i0: f64, rho: f64, mu_s: f64, c: f64, t: f64) -> (f64, f64) {
    let f = |y: [f64; 2]| [-mu_s * y[0] - rho * y[1] * y[0], rho * y[1] * y[0] - c * y[1]];
    let n = 2000;
    let h = t / n as f64;
    let mut y = [s0, i0];
    for _ in 0..n {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    (y[0], y[1])
}

#[test]
fn constant_infection_matches_mass_ode_and_threshold() {
    let (mu_s, mu_i, kappa) = (0.05, 0.1, 0.2);
    let c = mu_i + kappa;
    for rho in [0.05, 0.4] {
        let mut p = sihr_base(200, 1.0, 0.05);
        p.rho = Interaction::Const(rho);
        p.mu_s = Rate::Const(mu_s);
        p.mu_i = Rate::Const(mu_i);
        p.kappa = Rate::Const(kappa);
        let m = build_sihr(&p).unwrap();
        let t_end = 2.0;
        let traj = solve(&m.system, t_end, &PicardConfig::default()).unwrap();
        let grid = &*m.system.grid;
        let (s0, i0) = (mass(&traj, grid, 0, S), mass(&traj, grid, 0, I));
        let (s_ode, i_ode) = mass_ode(s0, i0, rho, mu_s, c, t_end);
        let last = traj.times.len() - 1;
        assert!((mass(&traj, grid, last, S) / s_ode - 1.0).abs() < 0.02);
        assert!((mass(&traj, grid, last, I) / i_ode - 1.0).abs() < 0.02);
        // early growth iff rho * S-mass exceeds the removal rate
        let early = traj.nearest(0.2);
        let grows = mass(&traj, grid, early, I) > i0;
        assert_eq!(grows, rho * s0 > c, "rho = {rho}, S-mass {s0}");
    }
}

#[test]
fn quarantine_lowers_infectives() {
    let run = |kappa: f64| {
        let mut p = sihr_base(128, 1.0, 0.2);
        p.rho = Interaction::Const(0.5);
        p.kappa = Rate::Const(kappa);
        p.mu_i = Rate::Const(0.05);
        let m = build_sihr(&p).unwrap();
        let traj = solve(&m.system, 2.0, &PicardConfig::default()).unwrap();
        (0..traj.times.len()).map(|i| mass(&traj, &m.system.grid, i, I)).collect::<Vec<_>>()
    };
    let (a, b) = (run(0.1), run(0.4));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| *y <= *x + 1e-12));
}

#[test]
fn conservation_without_mortality_or_inflow() {
    let mut p = sihr_base(128, 1.0, 0.2);
    p.rho = Interaction::Const(0.5);
    p.kappa = Rate::Const(0.2);
    p.theta = Rate::Const(0.1);
    p.eta = Rate::Const(0.1);
    let m = build_sihr(&p).unwrap();
    let traj = solve(&m.system, 3.0, &PicardConfig::default()).unwrap();
    let grid = &*m.system.grid;
    let total: Vec<f64> = traj.states.iter().map(|s| (0..4).map(|h| grid.component_l1(s, h)).sum()).collect();
    for w in total.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-3));
    }
    assert!((total.last().unwrap() / total[0] - 1.0).abs() < 0.02);
    assert!(traj.min_value() >= -1e-12);
}

fn cells(lambda: f64, b0: f64, n0: fn(f64) -> f64, age_max: f64, n: usize) -> CellGrowthParams {
    CellGrowthParams {
        lambda: Rate::Const(lambda),
        growth: None,
        division: Arc::new(move |_, _| b0),
        division_sup: b0,
        age_max,
        structure: None,
        cells: vec![n],
        initial: Arc::new(move |_, x| n0(x[0])),
        horizon: 4.0,
    }
}

#[test]
fn cell_loss_without_division() {
    let m = build_cell_growth(&cells(0.3, 0.0, |a| bump(2.0, 1.0, a), 10.0, 200)).unwrap();
    let traj = solve(&m.system, 3.0, &PicardConfig::default()).unwrap();
    let grid = &*m.system.grid;
    let m0 = mass(&traj, grid, 0, 0);
    for (i, &t) in traj.times.iter().enumerate() {
        assert!((mass(&traj, grid, i, 0) / (m0 * (-0.3 * t).exp()) - 1.0).abs() < 0.02);
    }
}

/// Root of `1 = b0 ∫_0^A e^{-r a} da` by bisection.
fn lotka_root(b0: f64, age_max: f64) -> f64 {
    let f = |r: f64| {
        let integral = if r.abs() < 1e-12 { age_max } else { (1.0 - (-r * age_max).exp()) / r };
        b0 * integral - 1.0
    };
    let (mut lo, mut hi) = (-5.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn renewal_grows_at_the_lotka_rate() {
    let (b0, age_max) = (0.6, 6.0);
    let m = build_cell_growth(&cells(0.0, b0, |a| (-a).exp(), age_max, 240)).unwrap();
    let traj = solve(&m.system, 4.0, &PicardConfig::default()).unwrap();
    let grid = &*m.system.grid;
    let (i, j) = (traj.nearest(2.0), traj.nearest(4.0));
    let rate = (mass(&traj, grid, j, 0) / mass(&traj, grid, i, 0)).ln() / (traj.times[j] - traj.times[i]);
    let r = lotka_root(b0, age_max);
    assert!((rate / r - 1.0).abs() < 0.10, "measured {rate}, Lotka {r}");
}

fn competitive(c1: f64, beta: f64) -> CompetitiveParams {
    CompetitiveParams {
        mu: [Rate2::Const(0.1), Rate2::Const(0.1)],
        effort: [Rate::Const(0.05), Rate::Const(0.05)],
        competition: [Rate2::Const(c1), Rate2::Const(0.0)],
        natality: [Rate::Const(beta), Rate::Const(beta)],
        age_max: 5.0,
        cells: 160,
        initial: Arc::new(|x, out| {
            out[0] = bump(1.5, 1.0, x[0]);
            out[1] = bump(1.5, 1.0, x[0]);
        }),
        horizon: 2.0,
    }
}

#[test]
fn symmetric_competitors_stay_equal() {
    let mut p = competitive(0.2, 0.3);
    p.competition = [Rate2::Const(0.2), Rate2::Const(0.2)];
    let m = build_competitive(&p).unwrap();
    let traj = solve(&m.system, 2.0, &PicardConfig::default()).unwrap();
    for s in &traj.states {
        for n in 0..m.system.grid.len() {
            assert_eq!(s.get(n, 0), s.get(n, 1));
        }
    }
}

#[test]
fn one_way_competition() {
    let run = |c1: f64| {
        let m = build_competitive(&competitive(c1, 0.3)).unwrap();
        let traj = solve(&m.system, 2.0, &PicardConfig::default()).unwrap();
        (m, traj)
    };
    let (m, free) = run(0.0);
    let (_, pressed) = run(0.5);
    let grid = &*m.system.grid;
    let last = free.times.len() - 1;
    let d2 = grid.l1_norm(&free.final_state().component_fn(1).sub(&pressed.final_state().component_fn(1))).unwrap();
    assert!(d2 <= 1e-9 * grid.component_l1(free.final_state(), 1), "{d2}");
    assert!(mass(&pressed, grid, last, 0) < mass(&free, grid, last, 0));
}

#[test]
fn decoupled_competitors_decay() {
    let m = build_competitive(&competitive(0.0, 0.0)).unwrap();
    let traj = solve(&m.system, 1.0, &PicardConfig::default()).unwrap();
    let grid = &*m.system.grid;
    let m0 = mass(&traj, grid, 0, 0);
    let last = traj.times.len() - 1;
    let rel = mass(&traj, grid, last, 0) / (m0 * (-0.15f64).exp()) - 1.0;
    assert!(rel.abs() < 0.01, "{rel}");
}
