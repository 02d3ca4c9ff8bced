//! Brownian exit computations against independent oracles.

use std::f64::consts::PI;

use exitdom::bm_analytic::{
    drift_y, drifted_survival, driftless_exit_density, driftless_survival, sign_given_modulus,
    DriftSpec, SeriesControl,
};
use exitdom::bm_sde::{
    check_independence_continuous, factorization_check_continuous, mean_girsanov_weight,
    reweighted_survival_bm, simulate_exit_bm, simulate_y_coupled, CoupledSpec,
};
use exitdom::quadrature::integrate;
use exitdom::rng::RngStreamSpec;
use exitdom::rw_exact::{mean_exit, survival_pmf, WalkSpec};
use exitdom::stats_verify::{empirical_dominance_test, Claim, EmpiricalVerdict};
use exitdom::Bias;

fn ctl() -> SeriesControl {
    SeriesControl::default()
}

fn spec(lambda: f64, b: f64) -> DriftSpec {
    DriftSpec::new(lambda, b).unwrap()
}

// cosh(λb) Σ (−1)^m (4/(π(2m+1))) μ_m/(μ_m + λ²/2) e^{−(μ_m + λ²/2) t},
// μ_m = (2m+1)²π²/(8b²): the exponential weight integrated term by term
fn termwise_drifted(lambda: f64, b: f64, t: f64) -> f64 {
    let a = 0.5 * lambda * lambda;
    let mut sum = 0.0;
    for m in 0..4000 {
        let odd = (2 * m + 1) as f64;
        let mu = odd * odd * PI * PI / (8.0 * b * b);
        let term = 4.0 / (PI * odd) * mu / (mu + a) * (-(mu + a) * t).exp();
        sum += if m % 2 == 0 { term } else { -term };
    }
    (lambda * b).cosh() * sum
}

#[test]
fn drifted_matches_termwise_integration() {
    for lambda in [0.5, 1.0, 2.0] {
        for b in [0.5, 1.0, 2.0] {
            for t in [0.05, 0.3, 1.0, 3.0] {
                let got = drifted_survival(&spec(lambda, b), t, &ctl()).unwrap();
                let want = termwise_drifted(lambda, b, t);
                assert!(
                    (got.value - want).abs() < 1e-9,
                    "λ={lambda} b={b} t={t}: {got:?} vs {want}"
                );
                assert!(got.error_bound < 1e-8);
            }
        }
    }
}

#[test]
fn density_normalization_and_mean() {
    let density = |t: f64| {
        if t > 0.0 {
            driftless_exit_density(1.0, t, &ctl()).unwrap()
        } else {
            0.0
        }
    };
    let mass = integrate(density, 0.0, 60.0, 0.1, 1e-13, 20_000).value;
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    let mean = integrate(|t| t * density(t), 0.0, 60.0, 0.1, 1e-13, 20_000).value;
    assert!((mean - 1.0).abs() < 1e-6, "{mean}");
    // the walk oracle: E[σ] = k² at p = 1/2, i.e. E[τ] = b² after scaling
    for k in [10u32, 50] {
        let walk = mean_exit::<f64>(&WalkSpec::new(Bias::half(), k).unwrap()).unwrap();
        assert!((walk / f64::from(k * k) - mean).abs() < 1e-6);
    }
}

#[test]
fn survival_and_density_are_consistent() {
    for (t, h) in [(0.02, 0.01), (0.3, 0.2), (1.0, 1.5)] {
        let drop = driftless_survival(1.0, t, &ctl()).unwrap()
            - driftless_survival(1.0, t + h, &ctl()).unwrap();
        let area = integrate(
            |s| driftless_exit_density(1.0, s, &ctl()).unwrap(),
            t,
            t + h,
            h / 8.0,
            1e-14,
            1000,
        )
        .value;
        assert!((drop - area).abs() < 1e-11, "t={t}");
    }
}

#[test]
fn series_against_scaled_walk() {
    let k = 100u32;
    let scale = u64::from(k * k);
    let walk = survival_pmf::<f64>(&WalkSpec::new(Bias::half(), k).unwrap(), 2 * scale).unwrap();
    for t in [0.25, 0.5, 1.0, 2.0] {
        let n = (t * scale as f64) as usize;
        let series = driftless_survival(1.0, t, &ctl()).unwrap();
        assert!((series - walk.values[n]).abs() < 2e-3, "t={t}");
    }
    // lattice error shrinks with k
    let fine = survival_pmf::<f64>(&WalkSpec::new(Bias::half(), 200).unwrap(), 40_000).unwrap();
    let series = driftless_survival(1.0, 1.0, &ctl()).unwrap();
    assert!((series - fine.values[40_000]).abs() < (series - walk.values[10_000]).abs());
}

#[test]
fn closed_form_ingredients() {
    for y in [0.0, 0.1, 1.0, 4.0, 30.0] {
        let drifts: Vec<f64> = (0..=40)
            .map(|i| drift_y(i as f64 * 0.1, y).unwrap())
            .collect();
        assert!(drifts.windows(2).all(|w| w[1] >= w[0]), "y={y}");
        assert_eq!(drift_y(-1.3, y).unwrap(), drift_y(1.3, y).unwrap());
    }
    for lambda in [-2.0, -0.3, 0.0, 0.7, 5.0] {
        for x in [0.0, 0.5, 3.0] {
            let a = sign_given_modulus(lambda, x).unwrap();
            let b = sign_given_modulus(-lambda, x).unwrap();
            assert!((a.positive + b.positive - 1.0).abs() < 1e-15);
            assert!((a.positive + a.negative - 1.0).abs() < 1e-15);
        }
    }
    let e = std::f64::consts::E;
    assert!((sign_given_modulus(1.0, 1.0).unwrap().positive - e / (e + 1.0 / e)).abs() < 1e-15);
}

#[test]
fn drifted_survival_decreases_in_time() {
    for lambda in [0.0, 0.8, 2.5] {
        let values: Vec<f64> = (0..60)
            .map(|i| {
                drifted_survival(&spec(lambda, 1.0), i as f64 * 0.05, &ctl())
                    .unwrap()
                    .value
            })
            .collect();
        assert!(
            values.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "λ={lambda}"
        );
    }
}

fn within(value: f64, target: f64, se: f64, sigmas: f64) -> bool {
    (value - target).abs() <= sigmas * se
}

#[test]
fn monte_carlo_exit_examples() {
    let b0 = simulate_exit_bm(
        &spec(0.0, 1.0),
        1e-3,
        20.0,
        40_000,
        RngStreamSpec::new(31, 0),
        true,
    )
    .unwrap();
    let m = b0.mean_exit_time();
    assert!(within(m.value, 1.0, m.standard_error, 3.0), "{m:?}");
    let up = b0.upper_fraction();
    assert!(within(up.value, 0.5, up.standard_error, 3.0), "{up:?}");

    let b1 = simulate_exit_bm(
        &spec(1.0, 1.0),
        1e-3,
        5.0,
        40_000,
        RngStreamSpec::new(31, 1),
        true,
    )
    .unwrap();
    let s = b1.survival(1.0).unwrap();
    let a = drifted_survival(&spec(1.0, 1.0), 1.0, &ctl())
        .unwrap()
        .value;
    assert!(within(s.value, a, s.standard_error, 3.0), "{s:?} vs {a}");

    // the exit law depends on |λ| only
    let neg = simulate_exit_bm(
        &spec(-1.0, 1.0),
        1e-3,
        5.0,
        40_000,
        RngStreamSpec::new(31, 2),
        true,
    )
    .unwrap();
    let s = neg.survival(1.0).unwrap();
    let a = drifted_survival(&spec(-1.0, 1.0), 1.0, &ctl())
        .unwrap()
        .value;
    assert!(within(s.value, a, s.standard_error, 3.0), "{s:?} vs {a}");
}

#[test]
fn bridge_correction_reduces_bias() {
    let exact = driftless_survival(1.0, 1.0, &ctl()).unwrap();
    let run = |bridge| {
        simulate_exit_bm(
            &spec(0.0, 1.0),
            1e-2,
            2.0,
            40_000,
            RngStreamSpec::new(5, 3),
            bridge,
        )
        .unwrap()
        .survival(1.0)
        .unwrap()
        .value
    };
    let (with, without) = (run(true), run(false));
    assert!(
        (with - exact).abs() < (without - exact).abs(),
        "{with} {without} {exact}"
    );
    // naive monitoring misses crossings, so survival is overstated
    assert!(without > exact);
}

#[test]
fn reweighting_against_analytic() {
    let batch = simulate_exit_bm(
        &spec(0.0, 1.0),
        1e-3,
        20.0,
        100_000,
        RngStreamSpec::new(77, 0),
        true,
    )
    .unwrap();
    let r = reweighted_survival_bm(&batch, 1.0, 0.5, 1e-6).unwrap();
    let a = drifted_survival(&spec(1.0, 1.0), 0.5, &ctl())
        .unwrap()
        .value;
    assert!(within(r.estimate, a, r.standard_error, 3.0), "{r:?} vs {a}");

    let half = reweighted_survival_bm(&batch, 0.5, 1.0, 1e-6).unwrap();
    let one = reweighted_survival_bm(&batch, 1.0, 1.0, 1e-6).unwrap();
    let pooled = (half.standard_error.powi(2) + one.standard_error.powi(2)).sqrt();
    assert!(one.estimate <= half.estimate + 3.0 * pooled);

    let w = mean_girsanov_weight(&batch, 1.0);
    assert!(
        (w.value - 1.0).abs() <= 3.0 * w.standard_error + batch.censored_fraction(),
        "{w:?}"
    );

    let f = factorization_check_continuous(&batch, 1.0, 1.0).unwrap();
    assert!(f.tail_mean_holds, "{f:?}");
    assert!(f.deviation < 3.0 * one.standard_error, "{f:?}");
}

#[test]
fn driftless_independence_not_rejected() {
    let batch = simulate_exit_bm(
        &spec(0.0, 1.0),
        1e-3,
        20.0,
        50_000,
        RngStreamSpec::new(8, 0),
        true,
    )
    .unwrap();
    let t = check_independence_continuous(&batch.samples, 10).unwrap();
    assert!(t.p_value > 1e-3, "{t:?}");
    assert_eq!(t.dof, 9);
}

#[test]
fn empirical_dominance_on_exit_times() {
    let a = simulate_exit_bm(
        &spec(0.0, 1.0),
        1e-3,
        20.0,
        100_000,
        RngStreamSpec::new(12, 0),
        true,
    )
    .unwrap();
    let b = simulate_exit_bm(
        &spec(1.0, 1.0),
        1e-3,
        20.0,
        100_000,
        RngStreamSpec::new(12, 1),
        true,
    )
    .unwrap();
    let (ta, tb) = (a.exit_times(), b.exit_times());
    let ok = empirical_dominance_test(&ta, &tb, 0.99, Claim::FirstDominates).unwrap();
    assert_eq!(
        ok.verdict,
        EmpiricalVerdict::ConsistentWithDominance,
        "{ok:?}"
    );
    let bad = empirical_dominance_test(&tb, &ta, 0.99, Claim::FirstDominates).unwrap();
    assert_eq!(bad.verdict, EmpiricalVerdict::Violates, "{bad:?}");
    let mirrored = empirical_dominance_test(&ta, &tb, 0.99, Claim::SecondDominates).unwrap();
    assert_eq!(mirrored, bad);
}

#[test]
fn squared_modulus_sde_matches_exit_law() {
    let spec_y = CoupledSpec {
        lambdas: vec![0.0, 1.0],
        y0: 0.0,
        b: 1.0,
        dt: 1e-4,
        horizon: 2.0,
        n_paths: 2000,
    };
    let run = simulate_y_coupled(&spec_y, RngStreamSpec::new(41, 0), 0).unwrap();
    for (l, &lambda) in spec_y.lambdas.iter().enumerate() {
        let times = &run.hitting_times[l];
        for t in [0.5, 1.0] {
            let p = times.iter().filter(|&&h| h > t).count() as f64 / times.len() as f64;
            let se = (p * (1.0 - p) / times.len() as f64).sqrt();
            let a = drifted_survival(&spec(lambda, 1.0), t, &ctl())
                .unwrap()
                .value;
            // discrete monitoring of the level adds an O(√dt) upward bias
            assert!(
                (p - a).abs() <= 3.0 * se + 0.01,
                "λ={lambda} t={t}: {p} vs {a}"
            );
        }
    }
}

#[test]
fn coupled_hitting_times_order() {
    let spec_y = CoupledSpec {
        lambdas: vec![0.0, 1.0],
        y0: 0.0,
        b: 1.0,
        dt: 1e-3,
        horizon: 6.0,
        n_paths: 1000,
    };
    let run = simulate_y_coupled(&spec_y, RngStreamSpec::new(3, 9), 0).unwrap();
    let (slow, fast) = (
        run.hitting[0].restricted_mean,
        run.hitting[1].restricted_mean,
    );
    let pooled = (slow.standard_error.powi(2) + fast.standard_error.powi(2)).sqrt();
    assert!(slow.value - fast.value > 3.0 * pooled, "{slow:?} {fast:?}");
    // pathwise: the larger drift reaches the level no later, up to scheme error
    let later = run.hitting_times[0]
        .iter()
        .zip(&run.hitting_times[1])
        .filter(|(a, b)| b > a)
        .count();
    assert!((later as f64) < 0.01 * spec_y.n_paths as f64, "{later}");
}

#[test]
fn coupled_runs_ignore_thread_count() {
    let spec_y = CoupledSpec {
        lambdas: vec![0.0, 0.5, 1.0],
        y0: 0.2,
        b: 1.0,
        dt: 1e-3,
        horizon: 1.0,
        n_paths: 300,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_y_coupled(&spec_y, RngStreamSpec::new(9, 1), 3).unwrap())
    };
    assert_eq!(run(1), run(3));
}
