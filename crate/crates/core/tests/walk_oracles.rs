//! Walk computations against brute-force path enumeration.

use exitdom::rw_exact::{exit_joint, mean_exit, modulus_chain_up_prob, survival_pmf, WalkSpec};
use exitdom::rw_measure::{
    check_independence_discrete, factorization_check_discrete, likelihood_ratio_walk,
    martingale_one_step_check, reweighted_survival_walk,
};
use exitdom::stats_verify::tail_conditional_mean_check;
use exitdom::{Bias, Scalar};
use num_rational::BigRational;
use num_traits::{One, Zero};

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn bias(n: i64, d: i64) -> Bias {
    Bias::from_ratio(n, d).unwrap()
}

/// Exit mass by (step, side) from enumerating every path of length `n`,
/// stopping paths at their first visit to ±k.
struct Enumerated {
    upper: Vec<BigRational>,
    lower: Vec<BigRational>,
    alive: BigRational,
}

fn enumerate(p: &BigRational, k: i64, n: usize) -> Enumerated {
    let qq = BigRational::one() - p;
    let mut out = Enumerated {
        upper: vec![BigRational::zero(); n + 1],
        lower: vec![BigRational::zero(); n + 1],
        alive: BigRational::zero(),
    };
    for bits in 0u32..(1 << n) {
        let mut pos = 0i64;
        let mut prob = BigRational::one();
        let mut absorbed = false;
        for step in 0..n {
            if bits >> step & 1 == 1 {
                pos += 1;
                prob *= p;
            } else {
                pos -= 1;
                prob *= &qq;
            }
            if pos.abs() == k {
                // every continuation of this prefix is enumerated too;
                // count the prefix once via its canonical all-zero suffix
                if bits >> (step + 1) == 0 {
                    if pos > 0 {
                        out.upper[step + 1] += &prob;
                    } else {
                        out.lower[step + 1] += &prob;
                    }
                }
                absorbed = true;
                break;
            }
        }
        if !absorbed {
            out.alive += prob;
        }
    }
    out
}

#[test]
fn dp_matches_enumeration() {
    for (num, den) in [(1, 2), (3, 5), (2, 7), (9, 10)] {
        let p = q(num, den);
        for k in 1..=3 {
            let n = 12;
            let e = enumerate(&p, k, n);
            let spec = WalkSpec::new(bias(num, den), k as u32).unwrap();
            let table = exit_joint::<BigRational>(&spec, n as u64).unwrap();
            assert_eq!(table.upper, e.upper, "p={p} k={k}");
            assert_eq!(table.lower, e.lower, "p={p} k={k}");
            assert_eq!(table.residual[n], e.alive);
            let mut survival = BigRational::one();
            let curve = survival_pmf::<BigRational>(&spec, n as u64).unwrap();
            for m in 0..=n {
                survival -= &e.upper[m] + &e.lower[m];
                assert_eq!(curve.values[m], survival, "p={p} k={k} n={m}");
            }
        }
    }
}

#[test]
fn joint_table_invariants() {
    for k in 1..=4u32 {
        let spec = WalkSpec::with_p(0.7, k).unwrap();
        let exact = exit_joint::<BigRational>(&spec, 40).unwrap();
        let float = exit_joint::<f64>(&spec, 2000).unwrap();
        for n in 0..=40u64 {
            assert!(exact.total_mass(n).is_one());
            let idle = n < u64::from(k) || (n - u64::from(k)) % 2 == 1;
            if idle {
                assert!(exact.exit_at(n).is_zero(), "k={k} n={n}");
            }
        }
        for n in (0..=2000).step_by(97) {
            assert!((float.total_mass(n) - 1.0).abs() < 1e-12);
        }
        let s = float.survival();
        assert_eq!(s.values[0], 1.0);
        assert!(s.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn sign_flip_symmetry_is_exact() {
    for k in 1..=4u32 {
        for (n, d) in [(1, 10), (3, 10), (11, 20)] {
            let spec = WalkSpec::new(bias(n, d), k).unwrap();
            let a = survival_pmf::<BigRational>(&spec, 80).unwrap();
            let b = survival_pmf::<BigRational>(&spec.mirrored(), 80).unwrap();
            assert_eq!(a, b);
        }
    }
}

// 3-state linear solve done by hand for k = 2: E₀ = 1 + p E₁ + q E₋₁,
// E₁ = 1 + q E₀, E₋₁ = 1 + p E₀  ⇒  E₀ = 2 / (1 − 2pq)
#[test]
fn mean_exit_matches_hand_solve() {
    for (n, d) in [(1, 2), (3, 5), (9, 10), (1, 7)] {
        let p = q(n, d);
        let pq = &p * (BigRational::one() - &p);
        let expected = q(2, 1) / (BigRational::one() - q(2, 1) * pq);
        let got = mean_exit::<BigRational>(&WalkSpec::new(bias(n, d), 2).unwrap()).unwrap();
        assert_eq!(got, expected);
    }
    for k in 1..=6u32 {
        let got = mean_exit::<BigRational>(&WalkSpec::new(Bias::half(), k).unwrap()).unwrap();
        assert_eq!(got, q(i64::from(k * k), 1));
    }
    // the mean exit step is monotone on [1/2, 1) as well
    let means: Vec<f64> = [0.5, 0.6, 0.7, 0.8, 0.9]
        .iter()
        .map(|&p| mean_exit::<f64>(&WalkSpec::with_p(p, 4).unwrap()).unwrap())
        .collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]));
}

// P(|S_{n+1}| = r+1 | |S_n| = r) for the free walk, by enumerating paths of
// length n + 1
fn modulus_oracle(p: &BigRational, n: usize, r: i64) -> BigRational {
    let qq = BigRational::one() - p;
    let mut at_r = BigRational::zero();
    let mut up = BigRational::zero();
    for bits in 0u32..(1 << (n + 1)) {
        let mut pos = 0i64;
        let mut prob = BigRational::one();
        let mut mid = 0;
        for step in 0..=n {
            if step == n {
                mid = pos;
            }
            if bits >> step & 1 == 1 {
                pos += 1;
                prob *= p;
            } else {
                pos -= 1;
                prob *= &qq;
            }
        }
        if mid.abs() == r {
            at_r += &prob;
            if pos.abs() == r + 1 {
                up += prob;
            }
        }
    }
    up / at_r
}

#[test]
fn modulus_chain_matches_enumeration() {
    for (num, den) in [(3, 5), (4, 5), (1, 2), (1, 4)] {
        let spec = WalkSpec::new(bias(num, den), 6).unwrap();
        for r in 0..=4i64 {
            let n = 8 + (r as usize % 2);
            let got = modulus_chain_up_prob::<BigRational>(&spec, r).unwrap();
            assert_eq!(
                got,
                modulus_oracle(&q(num, den), n, r),
                "p={num}/{den} r={r}"
            );
        }
    }
    let spec = WalkSpec::with_p(0.8, 60).unwrap();
    let probs: Vec<BigRational> = (1..60)
        .map(|r| modulus_chain_up_prob::<BigRational>(&spec, r).unwrap())
        .collect();
    assert!(probs.windows(2).all(|w| w[1] >= w[0]));
    assert!((modulus_chain_up_prob::<f64>(&spec, 50).unwrap() - 0.8).abs() < 1e-9);
}

#[test]
fn likelihood_ratio_normalizes_over_paths() {
    let from = bias(1, 2);
    let to = bias(7, 10);
    let (pf, pt) = (q(1, 2), q(7, 10));
    for n in 1..=12u64 {
        let mut total = BigRational::zero();
        let mut direct = BigRational::zero();
        for bits in 0u32..(1 << n) {
            let ups = i64::from(bits.count_ones());
            let s = 2 * ups - n as i64;
            let prob = num_traits::pow(pf.clone(), n as usize);
            let lr = likelihood_ratio_walk::<BigRational>(n, s, &from, &to)
                .unwrap()
                .value;
            total += &prob * lr;
            direct += num_traits::pow(pt.clone(), ups as usize)
                * num_traits::pow(BigRational::one() - &pt, (n as i64 - ups) as usize);
        }
        assert!(total.is_one(), "n={n}");
        assert!(direct.is_one());
    }
}

#[test]
fn likelihood_ratio_chain_rule_and_sqrt_form() {
    let (a, b, c) = (bias(1, 2), bias(3, 5), bias(9, 10));
    for n in 0..=10u64 {
        for s in (-(n as i64)..=n as i64).step_by(2) {
            let ac = likelihood_ratio_walk::<BigRational>(n, s, &a, &c)
                .unwrap()
                .value;
            let ab = likelihood_ratio_walk::<BigRational>(n, s, &a, &b)
                .unwrap()
                .value;
            let bc = likelihood_ratio_walk::<BigRational>(n, s, &b, &c)
                .unwrap()
                .value;
            assert_eq!(ac, ab * bc);
            // (√(p₂q₂/(p₁q₁)))ⁿ (√(p₂q₁/(p₁q₂)))ˢ evaluated in floats
            let (p1, p2) = (0.5f64, 0.9f64);
            let r = (p2 * (1.0 - p2) / (p1 * (1.0 - p1))).sqrt();
            let z = (p2 * (1.0 - p1) / (p1 * (1.0 - p2))).sqrt();
            let expected = r.powi(n as i32) * z.powi(s as i32);
            assert!((ac.to_f64() - expected).abs() <= 1e-12 * expected);
        }
    }
    assert!(likelihood_ratio_walk::<f64>(3, 2, &a, &b).is_err());
    assert!(likelihood_ratio_walk::<f64>(2, 4, &a, &b).is_err());
}

#[test]
fn martingale_check_exact_and_float() {
    for (n, d) in [(1, 2), (3, 5), (9, 10), (1, 3)] {
        assert!(martingale_one_step_check::<BigRational>(&bias(n, d))
            .unwrap()
            .is_zero());
        assert!(martingale_one_step_check::<f64>(&bias(n, d)).unwrap() <= 1e-15);
    }
}

#[test]
fn reweighting_examples() {
    let r = reweighted_survival_walk::<f64>(&bias(3, 5), &bias(3, 5), 2, 2, 200, None).unwrap();
    assert!((r.estimate - 0.48).abs() <= r.tail_bound.max(1e-15));
    let r = reweighted_survival_walk::<f64>(&bias(1, 2), &bias(7, 10), 2, 0, 200, None).unwrap();
    assert!((r.estimate - 1.0).abs() <= r.tail_bound.max(1e-12));
    let r = reweighted_survival_walk::<f64>(&bias(1, 2), &bias(7, 10), 3, 10, 400, Some(1e-12))
        .unwrap();
    let direct = survival_pmf::<f64>(&WalkSpec::new(bias(7, 10), 3).unwrap(), 10).unwrap();
    assert!((r.estimate - direct.values[10]).abs() <= r.tail_bound.max(1e-10));
    assert!(!r.tail_warning);
    assert!(reweighted_survival_walk::<f64>(&bias(1, 2), &bias(7, 10), 3, 10, 10, None).is_err());
}

#[test]
fn factorization_examples() {
    assert!(factorization_check_discrete(&bias(3, 5), &bias(3, 5), 2, 4, 400).is_err());
    assert!(factorization_check_discrete(&bias(2, 5), &bias(3, 5), 2, 4, 400).is_err());
    let c = factorization_check_discrete(&bias(1, 2), &bias(3, 5), 2, 4, 400).unwrap();
    assert!(c.deviation <= 1e-10, "{c:?}");
    let c = factorization_check_discrete(&bias(3, 5), &bias(9, 10), 3, 9, 400).unwrap();
    assert!(c.deviation <= 1e-10, "{c:?}");
}

#[test]
fn independence_examples() {
    let c =
        check_independence_discrete::<BigRational>(&WalkSpec::new(Bias::half(), 2).unwrap(), 100)
            .unwrap();
    assert!(c.max_deviation.is_zero());
    let c = check_independence_discrete::<f64>(&WalkSpec::with_p(0.7, 2).unwrap(), 300).unwrap();
    assert!(c.max_deviation <= 1e-12);
    let c = check_independence_discrete::<f64>(&WalkSpec::with_p(0.9, 4).unwrap(), 400).unwrap();
    assert!(c.max_deviation <= 1e-12);
}

// E[r^σ | r^σ ≤ r^n] ≤ E[r^σ] with r < 1: the inequality closing the
// factorization argument, evaluated on an exit table
#[test]
fn tail_mean_on_exit_table_weights() {
    let spec = WalkSpec::new(bias(3, 5), 2).unwrap();
    let table = exit_joint::<BigRational>(&spec, 60).unwrap();
    // r² = p₂q₂/(p₁q₁) with p₁ = 0.6, p₂ = 0.9 is rational; use r² per two steps
    let r2 = q(9, 100) / q(24, 100);
    let pmf: Vec<(BigRational, BigRational)> = (2..=60usize)
        .step_by(2)
        .map(|m| (num_traits::pow(r2.clone(), m / 2), table.exit_at(m as u64)))
        .collect();
    for n in [2usize, 6, 10, 20] {
        let threshold = num_traits::pow(r2.clone(), n / 2);
        let c = tail_conditional_mean_check(&pmf, &threshold).unwrap();
        assert!(c.holds, "n={n}");
        assert!(c.conditional <= c.unconditional);
    }
}
