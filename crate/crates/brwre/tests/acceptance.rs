//! Desk-scale acceptance gate: thirteen checks, one pass/fail line each.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use brwre::analytics::{annealed_summary, solve_theta_star, speed_inequality_report};
use brwre::brw::{fit_log_correction, frontier_violation_rate, Backend};
use brwre::env::{
    sample_environment, sample_environment_pair, EnvironmentModel, EnvironmentSequence,
    PointProcessLaw,
};
use brwre::fit::{fit_exponent, weighted_linear_fit};
use brwre::gamma::{estimate_gamma, log_grid};
use brwre::maxdist::{quenched_max_survival, RecursionOpts};
use brwre::parallel::Executor;
use brwre::rwre::{
    excursion_probability, llt_window_probability, BarrierSide, BarrierSpec, WindowCenter,
};
use brwre::verify::{
    dekking_host_check, exact_frontier_probability, many_to_one_catalogue, EnumerableInstance,
};

fn verdict(num: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {num:02} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {num:02} {name}: {detail}");
}

#[test]
fn criterion_01_closed_form_analytics() {
    let t0 = std::time::Instant::now();
    let theta = solve_theta_star(&EnvironmentModel::dyadic_gaussian()).unwrap();
    let target = (2.0 * 2f64.ln()).sqrt();
    let s_drift = annealed_summary(&EnvironmentModel::drift_random(), 0.5).unwrap();
    let s_can = annealed_summary(&EnvironmentModel::canonical_sigma(), 0.5).unwrap();
    let ratio = (s_can.sigma_a2 / s_can.sigma_q2).sqrt();
    let pass = (theta - target).abs() < 1e-10
        && s_drift.sigma_a2 == 0.0
        && (ratio - 0.294352505628868).abs() < 1e-6
        && t0.elapsed().as_secs_f64() < 1.0;
    verdict(
        1,
        "closed-form analytics",
        pass,
        &format!(
            "theta* err {:.1e}, drift sigma_A^2 {}, ratio {ratio:.8}, {:.2}s",
            (theta - target).abs(),
            s_drift.sigma_a2,
            t0.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_gamma_at_zero() {
    let grid = log_grid(10.0, 1e4, 12);
    let est = estimate_gamma(0.0, &grid, 0.05, 50, 10_000, 2001, &Executor::new(0)).unwrap();
    let pass = (est.gamma_hat - 0.5).abs() <= 0.05 && !est.under_resolved;
    verdict(
        2,
        "gamma(0) = 1/2",
        pass,
        &format!("gamma_hat {:.4} +- {:.4}", est.gamma_hat, est.stderr),
    );
}

#[test]
fn criterion_03_gamma_monotone_in_beta() {
    let grid = log_grid(4.0, 200.0, 10);
    let exec = Executor::new(0);
    let ests: Vec<_> = [0.0, 0.25, 0.5, 1.0]
        .iter()
        .map(|&b| estimate_gamma(b, &grid, 0.02, 16, 4000, 2003, &exec).unwrap())
        .collect();
    let mut pass = true;
    let mut detail = String::new();
    for w in ests.windows(2) {
        let tol = 2.0 * w[0].stderr.hypot(w[1].stderr);
        if w[1].gamma_hat < w[0].gamma_hat - tol {
            pass = false;
        }
        detail.push_str(&format!("{:.3} ", w[0].gamma_hat));
    }
    detail.push_str(&format!("{:.3}", ests.last().unwrap().gamma_hat));
    verdict(3, "gamma nondecreasing", pass, &detail);
}

#[test]
fn criterion_04_homogeneous_ballot_exponent() {
    // quenched = deterministic environment for the homogeneous model
    let model = EnvironmentModel::dyadic_gaussian();
    let theta = solve_theta_star(&model).unwrap();
    let n_grid = [64usize, 128, 256, 512, 1024, 2048];
    let mut env = EnvironmentSequence::from_laws(
        vec![model.atoms[0].1.clone(); n_grid[n_grid.len() - 1]],
        0,
    );
    env.attach_tilt(theta).unwrap();
    let exec = Executor::new(0);
    let barrier = BarrierSpec::constant(BarrierSide::StayBelow);
    let pts: Vec<(f64, f64, f64)> = n_grid
        .iter()
        .map(|&n| {
            let e =
                excursion_probability(&env, n, 2.0, 2.0, &barrier, 1_000_000, 2004, &exec).unwrap();
            (n as f64, e.p, e.stderr)
        })
        .collect();
    let fit = fit_exponent(&pts).unwrap();
    let pass = (fit.slope + 1.5).abs() <= 0.15;
    verdict(
        4,
        "homogeneous ballot slope -3/2",
        pass,
        &format!("slope {:.3} +- {:.3}", fit.slope, fit.slope_stderr),
    );
}

#[test]
fn criterion_05_random_excursion_exponent() {
    let model = EnvironmentModel::canonical_sigma();
    let theta = solve_theta_star(&model).unwrap();
    let exec = Executor::new(0);
    let n_grid = [64usize, 128, 256, 512, 1024];
    let barrier = BarrierSpec::constant(BarrierSide::StayBelow);
    let mut slopes = Vec::new();
    for e in 0..5u64 {
        let mut env = sample_environment(&model, 1024, 5000 + e).unwrap();
        env.attach_tilt(theta).unwrap();
        let pts: Vec<(f64, f64, f64)> = n_grid
            .iter()
            .filter_map(|&n| {
                let est = excursion_probability(&env, n, 2.0, 2.0, &barrier, 400_000, 2005, &exec)
                    .unwrap();
                (est.p > 0.0).then(|| (n as f64, est.p, est.stderr))
            })
            .collect();
        slopes.push(fit_exponent(&pts).unwrap().slope);
    }
    let k = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / k;
    let sd = (slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0)).sqrt();
    let se_pool = sd / k.sqrt();

    let sigma_ratio = {
        let s = annealed_summary(&model, 0.5).unwrap();
        (s.sigma_a2 / s.sigma_q2).sqrt()
    };
    let grid = log_grid(4.0, 200.0, 10);
    let g = estimate_gamma(sigma_ratio, &grid, 0.02, 16, 4000, 2055, &exec).unwrap();
    let lambda = 2.0 * g.gamma_hat + 0.5;
    let se_lambda = 2.0 * g.stderr;
    let tol = 2.0 * se_pool.hypot(se_lambda);
    let pass = (mean + lambda).abs() <= tol;
    verdict(
        5,
        "random excursion matches -lambda",
        pass,
        &format!("pooled slope {mean:.3} +- {se_pool:.3} vs -lambda {:.3} +- {se_lambda:.3}", -lambda),
    );
}

#[test]
fn criterion_06_frontier_bound() {
    let model = EnvironmentModel::canonical_sigma();
    let theta = solve_theta_star(&model).unwrap();
    let exec = Executor::new(0);
    let rates =
        frontier_violation_rate(&model, 256, &[1.0, 2.0, 4.0], 1000, 5000, 2006, &exec).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for (y, est) in &rates {
        let bound = (-theta * y).exp();
        if est.p > bound + 3.0 * est.stderr.max(1e-4) {
            pass = false;
        }
        detail.push_str(&format!("y={y}: {:.4}<={bound:.4} ", est.p));
    }
    // exact enumeration side: zero slack on every catalogue instance
    let pool = [
        PointProcessLaw::mixture(vec![(0.5, vec![1.0, -1.0]), (0.5, vec![0.0])]),
        PointProcessLaw::mixture(vec![(0.6, vec![0.5, -0.5, 0.0]), (0.4, vec![1.0])]),
        PointProcessLaw::mixture(vec![(0.3, vec![0.25]), (0.7, vec![0.75, -1.25])]),
    ];
    let mut exact_ok = true;
    for i in 0..9usize {
        let n = 4 + i % 3;
        let laws: Vec<_> = (0..n).map(|j| pool[(i + j) % pool.len()].clone()).collect();
        let inst = EnumerableInstance::new(laws).unwrap();
        for row in exact_frontier_probability(&inst, &[0.5, 1.0, 2.0]).unwrap() {
            if row.p_exceed > row.bound {
                exact_ok = false;
            }
        }
    }
    verdict(6, "frontier bound e^{-theta y}", pass && exact_ok, &format!("{detail}exact_ok={exact_ok}"));
}

#[test]
fn criterion_07_many_to_one_oracle() {
    let t0 = std::time::Instant::now();
    let reports = many_to_one_catalogue(41).unwrap();
    let worst = reports.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    let pass = reports.len() >= 50 && worst <= 1e-12 && t0.elapsed().as_secs() < 60;
    verdict(
        7,
        "many-to-one identity",
        pass,
        &format!("{} checks, worst gap {worst:.2e}, {:.1}s", reports.len(), t0.elapsed().as_secs_f64()),
    );
}

#[test]
fn criterion_08_llt_window_decay() {
    let model = EnvironmentModel::canonical_sigma();
    let exec = Executor::new(0);
    let pts: Vec<(f64, f64, f64)> = [64usize, 128, 256, 512, 1024, 2048, 4096]
        .iter()
        .map(|&n| {
            let e = llt_window_probability(&model, n, 1.5, WindowCenter::Sup, 200_000, 2008, &exec)
                .unwrap();
            (n as f64, e.p, e.stderr)
        })
        .collect();
    let fit = fit_exponent(&pts).unwrap();
    let pass = (fit.slope + 0.5).abs() <= 0.1;
    verdict(
        8,
        "local-limit window slope -1/2",
        pass,
        &format!("slope {:.3} +- {:.3}", fit.slope, fit.slope_stderr),
    );
}

#[test]
fn criterion_09_log_correction_homogeneous() {
    let fit = fit_log_correction(
        &EnvironmentModel::dyadic_gaussian(),
        &[128, 256, 512, 1024, 2048, 4096],
        400,
        &Backend::recursion(),
        2009,
        &Executor::new(0),
    )
    .unwrap();
    let target = -1.274;
    let pass = fit.fit.slope <= target * 0.65 && fit.fit.slope >= target * 1.35;
    verdict(
        9,
        "homogeneous log-correction",
        pass,
        &format!("slope {:.3} in [{:.3}, {:.3}]", fit.fit.slope, target * 1.35, target * 0.65),
    );
}

#[test]
fn criterion_10_log_correction_ordering() {
    let model = EnvironmentModel::canonical_sigma();
    let hom = EnvironmentModel::dyadic_gaussian();
    let theta = solve_theta_star(&model).unwrap();
    let exec = Executor::new(0);
    let opts = RecursionOpts { dx: 0.10, ..Default::default() };
    let n_grid = [128usize, 256, 512, 1024, 2048, 4096];
    let pairs_per_n = [64usize, 56, 48, 36, 24, 14];

    // homogeneous medians at the same dx so grid bias cancels in the gap
    let hom_med: Vec<f64> = n_grid
        .iter()
        .map(|&n| {
            let laws = vec![hom.atoms[0].1.clone(); n];
            quenched_max_survival(&laws, theta, &opts).unwrap().median()
        })
        .collect();
    let hom_pts: Vec<(f64, f64, f64)> =
        n_grid.iter().zip(&hom_med).map(|(&n, &m)| ((n as f64).ln(), m, 1.0)).collect();
    let hom_slope = weighted_linear_fit(&hom_pts).unwrap().slope;

    // canonical medians over antithetic environment pairs, gap per n
    let mut gap_pts = Vec::new();
    let mut can_pts = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let meds = exec.map(pairs_per_n[i], |ip| {
            let (a, b) = sample_environment_pair(&model, n, 20_100 + (n * 1000 + ip) as u64).unwrap();
            let ma = quenched_max_survival(a.laws(), theta, &opts).unwrap().median();
            let mb = quenched_max_survival(b.laws(), theta, &opts).unwrap().median();
            0.5 * (ma + mb)
        });
        let k = meds.len() as f64;
        let mean = meds.iter().sum::<f64>() / k;
        let var = meds.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1.0);
        let se = (var / k).sqrt().max(1e-4);
        gap_pts.push(((n as f64).ln(), mean - hom_med[i], 1.0 / (se * se)));
        can_pts.push(((n as f64).ln(), mean, 1.0 / (se * se)));
    }
    let gap_fit = weighted_linear_fit(&gap_pts).unwrap();
    let can_fit = weighted_linear_fit(&can_pts).unwrap();

    // lambda-hat from the Brownian persistence exponent at the model's ratio
    let sigma_ratio = {
        let s = annealed_summary(&model, 0.5).unwrap();
        (s.sigma_a2 / s.sigma_q2).sqrt()
    };
    let g = estimate_gamma(sigma_ratio, &log_grid(4.0, 200.0, 10), 0.02, 16, 4000, 2010, &exec)
        .unwrap();
    let phi_hat = (2.0 * g.gamma_hat + 0.5) / theta;
    let se_phi = 2.0 * g.stderr / theta;

    let ordering = gap_fit.slope < -2.0 * gap_fit.slope_stderr.hypot(0.003);
    let tol = 2.0 * can_fit.slope_stderr.hypot(se_phi);
    let consistent = (can_fit.slope + phi_hat).abs() <= tol;
    verdict(
        10,
        "log-correction ordering",
        ordering && consistent,
        &format!(
            "gap slope {:.4} +- {:.4}; canonical {:.3} (hom {hom_slope:.3}) vs -phi_hat {:.3} +- {:.3}",
            gap_fit.slope, gap_fit.slope_stderr, can_fit.slope, -phi_hat, se_phi
        ),
    );
}

#[test]
fn criterion_11_speed_inequality() {
    let can = speed_inequality_report(&EnvironmentModel::canonical_sigma()).unwrap();
    let drift = speed_inequality_report(&EnvironmentModel::drift_random()).unwrap();
    let pass = can.strict
        && can.v - can.mean_atom_speed > 1e-10
        && !drift.strict
        && (drift.v - drift.mean_atom_speed).abs() < 1e-12;
    verdict(
        11,
        "speed inequality",
        pass,
        &format!(
            "canonical v - E(v_1) = {:.4e}, drift-random {:.1e}",
            can.v - can.mean_atom_speed,
            drift.v - drift.mean_atom_speed
        ),
    );
}

#[test]
fn criterion_12_dekking_host() {
    let exec = Executor::new(0);
    let mut pass = true;
    let mut detail = String::new();
    for model in [EnvironmentModel::dyadic_gaussian(), EnvironmentModel::canonical_sigma()] {
        for (&n, &reps) in [8usize, 16, 32, 64].iter().zip(&[400usize, 300, 200, 150]) {
            let r = dekking_host_check(&model, n, reps, 20_000, 2012, &exec).unwrap();
            if r.slack < -3.0 * r.stderr {
                pass = false;
            }
            detail.push_str(&format!("n={n}: {:.2} ", r.slack));
        }
    }
    verdict(12, "dekking-host increments", pass, detail.trim());
}

#[test]
fn criterion_13_determinism_across_workers() {
    let seq = Executor::new(1);
    let par = Executor::new(8);
    let model = EnvironmentModel::canonical_sigma();
    let grid = log_grid(4.0, 40.0, 5);
    let mut pass = true;
    let mut detail = String::new();

    let g1 = estimate_gamma(0.5, &grid, 0.05, 6, 500, 77, &seq).unwrap();
    let g8 = estimate_gamma(0.5, &grid, 0.05, 6, 500, 77, &par).unwrap();
    if g1.gamma_hat.to_bits() != g8.gamma_hat.to_bits()
        || g1.stderr.to_bits() != g8.stderr.to_bits()
    {
        pass = false;
        detail.push_str("gamma differs; ");
    }

    let theta = solve_theta_star(&model).unwrap();
    let mut env = sample_environment(&model, 128, 78).unwrap();
    env.attach_tilt(theta).unwrap();
    let barrier = BarrierSpec::constant(BarrierSide::StayBelow);
    let e1 = excursion_probability(&env, 128, 2.0, 2.0, &barrier, 50_000, 79, &seq).unwrap();
    let e8 = excursion_probability(&env, 128, 2.0, 2.0, &barrier, 50_000, 79, &par).unwrap();
    if e1.hits != e8.hits {
        pass = false;
        detail.push_str("excursion differs; ");
    }

    let f1 = fit_log_correction(&model, &[32, 64, 128], 8, &Backend::recursion(), 80, &seq).unwrap();
    let f8 = fit_log_correction(&model, &[32, 64, 128], 8, &Backend::recursion(), 80, &par).unwrap();
    if f1.fit.slope.to_bits() != f8.fit.slope.to_bits() {
        pass = false;
        detail.push_str("log-correction differs; ");
    }

    let r1 = frontier_violation_rate(&model, 64, &[1.0, 2.0], 64, 2000, 81, &seq).unwrap();
    let r8 = frontier_violation_rate(&model, 64, &[1.0, 2.0], 64, 2000, 81, &par).unwrap();
    if r1.iter().zip(&r8).any(|(a, b)| a.1.hits != b.1.hits) {
        pass = false;
        detail.push_str("frontier differs; ");
    }

    let d1 = dekking_host_check(&model, 8, 150, 10_000, 82, &seq).unwrap();
    let d8 = dekking_host_check(&model, 8, 150, 10_000, 82, &par).unwrap();
    if d1.increment.to_bits() != d8.increment.to_bits() {
        pass = false;
        detail.push_str("dekking-host differs; ");
    }

    verdict(
        13,
        "worker-count determinism",
        pass,
        if detail.is_empty() { "all payloads byte-identical" } else { detail.trim() },
    );
}
