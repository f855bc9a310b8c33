use rand::Rng;
use ste_bnn::diagnostics::{
    check_ergodic_recovery, check_last_iterate_recovery, concentration_sup, drift_residual,
    ergodic_average, expectation_identity_check, occupation_stats, Probe,
};
use ste_bnn::harness::{draw_trial, run_sweep, SuccessKind, SweepConfig};
use ste_bnn::model::{synthesize_dataset, unit, NetworkSpec, NoiseSpec};
use ste_bnn::optimizer::{run, InitSpec, StepSchedule};
use ste_bnn::rng;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn sup(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |a, b| a.max(b.abs()))
}

#[test]
fn drift_residual_shrinks_by_half_for_four_times_the_samples() {
    let n = 6;
    let spec = NetworkSpec::random(4, n, &mut rng::stream(21, &[0])).unwrap();
    let u = unit(n);
    let w: Vec<f64> = spec
        .w_star()
        .iter()
        .enumerate()
        .map(|(j, &s)| if j < 2 { -s } else { s })
        .collect();
    assert!(w.iter().all(|a| a.abs() == u));
    let med = |big_n: usize| {
        median(
            (0..40)
                .map(|k| {
                    let data =
                        synthesize_dataset(&spec, big_n, NoiseSpec::None, 1000 * big_n as u64 + k)
                            .unwrap();
                    sup(&drift_residual(&w, &data).unwrap())
                })
                .collect(),
        )
    };
    let ratio = med(1000) / med(4000);
    assert!((1.5..=2.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn expectation_estimate_improves_with_more_draws() {
    let mut r = rng::stream(22, &[0]);
    let n = 4;
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    for k in 0..40 {
        let w_star: Vec<f64> = (0..n)
            .map(|_| if r.gen::<bool>() { unit(n) } else { -unit(n) })
            .collect();
        let mut w = w_star.clone();
        w[k % n] = -w[k % n];
        coarse.push(
            expectation_identity_check(&w, &w_star, 20_000, 2 * k as u64)
                .unwrap()
                .deviation,
        );
        fine.push(
            expectation_identity_check(&w, &w_star, 80_000, 2 * k as u64 + 1)
                .unwrap()
                .deviation,
        );
    }
    assert!(median(fine) < median(coarse));
}

#[test]
fn expectation_random_pairs_within_sampling_band() {
    let mut r = rng::stream(23, &[0]);
    let draws = 1_000_000;
    for n in [3usize, 5] {
        let w_star: Vec<f64> = (0..n)
            .map(|_| if r.gen::<bool>() { unit(n) } else { -unit(n) })
            .collect();
        let w: Vec<f64> = w_star.iter().map(|a| -a).collect();
        let c = expectation_identity_check(&w, &w_star, draws, n as u64).unwrap();
        assert!(
            c.deviation <= 6.0 / (draws as f64).sqrt() * (n as f64).sqrt(),
            "n={n}: {}",
            c.deviation
        );
    }
}

#[test]
fn ergodic_error_decreases_with_horizon() {
    let data = draw_trial(32, 10, 80, NoiseSpec::None, 5).unwrap();
    let record = run(
        &data,
        StepSchedule::default(),
        &InitSpec::Zero,
        400,
        &mut (),
    )
    .unwrap();
    assert!(check_last_iterate_recovery(&record, 400).unwrap());
    let err = |t: usize| {
        let avg = ergodic_average(&record, t).unwrap();
        avg.iter()
            .zip(record.w_star())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    };
    let errs: Vec<f64> = [10, 50, 100, 400].iter().map(|&t| err(t)).collect();
    assert!(errs.windows(2).all(|p| p[1] <= p[0]), "{errs:?}");
    assert!(errs[3] < errs[0]);
}

#[test]
fn generous_samples_recover_in_most_trials() {
    let mut ergodic = 0;
    let mut last = 0;
    for k in 0..100 {
        let data = draw_trial(32, 10, 80, NoiseSpec::None, 700 + k).unwrap();
        let record = run(
            &data,
            StepSchedule::default(),
            &InitSpec::Zero,
            300,
            &mut (),
        )
        .unwrap();
        ergodic += check_ergodic_recovery(&record, 300).unwrap() as usize;
        last += check_last_iterate_recovery(&record, 300).unwrap() as usize;
    }
    assert!(ergodic >= 90, "ergodic {ergodic}");
    assert!(last >= 90, "last {last}");
}

#[test]
fn noiseless_small_rho_resets_in_one_step() {
    let data = draw_trial(4, 6, 1 << 13, NoiseSpec::None, 9).unwrap();
    let rho = concentration_sup(&data, Probe::Exhaustive).unwrap().rho_emp;
    assert!(rho < 0.2, "rho {rho}");
    let init = InitSpec::BoundedUniform { c0: 1.0, seed: 3 };
    let record = run(&data, StepSchedule::default(), &init, 500, &mut ()).unwrap();
    let stats = occupation_stats(&record, rho);
    assert!(stats.max_incorrect_after_burn_in().is_none_or(|l| l == 1));
}

#[test]
fn success_rate_grows_with_samples() {
    let report = run_sweep(&SweepConfig {
        m: 32,
        dims: vec![12],
        ratios: vec![0.5, 4.0],
        trials_per_cell: 60,
        iterations: 200,
        master_seed: 17,
        ..SweepConfig::default()
    })
    .unwrap();
    let small = report.cell(12, 6).unwrap().rate_for(SuccessKind::Ergodic);
    let large = report.cell(12, 48).unwrap().rate_for(SuccessKind::Ergodic);
    let se = ((small * (1.0 - small) + large * (1.0 - large)) / 60.0).sqrt();
    assert!(large - small > 3.0 * se, "{small} vs {large}");
}
