//! The verification suite run by `verify-all` and the acceptance tests.
//!
//! Every check is deterministic for a given master seed. Wall-clock time is
//! measured but never serialized, so suite output is byte-reproducible.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::bm_analytic::{
    dominance_scan_continuous, drifted_survival, driftless_survival, sech_identity_residual,
    DriftSpec, SeriesControl,
};
use crate::bm_sde::{
    check_independence_continuous, simulate_exit_bm, simulate_y_coupled, CoupledSpec, ExitSample,
    ExitSide,
};
use crate::error::{Error, Result};
use crate::rng::RngStreamSpec;
use crate::rw_exact::{survival_pmf, WalkSpec};
use crate::rw_measure::{
    check_independence_discrete, factorization_curve, reweighted_survival_curve,
};
use crate::scalar::{Arith, Bias};
use crate::stats_verify::dominance_scan_discrete;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Full sizes.
    Desk,
    /// Reduced sizes for smoke runs; tolerances unchanged.
    Quick,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Quick => "quick",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "quick" => Ok(Profile::Quick),
            other => Err(Error::invalid(
                "profile",
                format!("unknown profile {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

fn outcome(
    id: u8,
    title: &'static str,
    started: Instant,
    body: Result<(bool, String)>,
) -> CriterionOutcome {
    let (passed, detail) = body.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome {
        id,
        title,
        passed,
        detail,
        elapsed: started.elapsed(),
    }
}

fn bias_grid(values: &[f64]) -> Result<Vec<Bias>> {
    values.iter().map(|&v| Bias::new(v)).collect()
}

fn walk_grid() -> Vec<f64> {
    (10..20)
        .map(|i| i as f64 * 0.05)
        .map(|v: f64| (v * 100.0).round() / 100.0)
        .collect()
}

/// Exact pairwise dominance of walk survival along the bias grid.
pub fn criterion_1(profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let horizon = match profile {
        Profile::Desk => 200,
        Profile::Quick => 60,
    };
    let body = (|| {
        let ps = bias_grid(&walk_grid())?;
        let mut pairs = 0;
        let mut failures = Vec::new();
        for k in 1..=4 {
            let report = dominance_scan_discrete(&ps, k, horizon, Arith::Exact)?;
            pairs += report.pairs.len();
            if !report.is_consistent() {
                failures.push(format!("k={k}: {} violations", report.violations.len()));
            }
        }
        Ok((
            failures.is_empty(),
            format!(
                "{pairs} adjacent pairs, k=1..4, horizon {horizon}, exact arithmetic; {}",
                if failures.is_empty() {
                    "all dominate".to_string()
                } else {
                    failures.join("; ")
                }
            ),
        ))
    })();
    outcome(1, "exact walk dominance", started, body)
}

/// Exit step and exit side factorize.
pub fn criterion_2(_profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let body = (|| {
        let ps = [0.6, 0.7, 0.8, 0.9];
        let mut worst_float = 0.0f64;
        let mut exact_nonzero = 0;
        for &p in &ps {
            for k in 1..=4 {
                let spec = WalkSpec::with_p(p, k)?;
                let c = check_independence_discrete::<f64>(&spec, 400)?;
                worst_float = worst_float.max(c.max_deviation);
                if k <= 3 {
                    let e = check_independence_discrete::<BigRational>(&spec, 60)?;
                    if !e.max_deviation.is_zero() {
                        exact_nonzero += 1;
                    }
                }
            }
        }
        Ok((
            worst_float <= 1e-12 && exact_nonzero == 0,
            format!(
                "float max deviation {worst_float:.3e} (limit 1e-12, truncation 400); exact nonzero cases {exact_nonzero} (k<=3, truncation 60)"
            ),
        ))
    })();
    outcome(2, "discrete independence", started, body)
}

fn reweight_grid() -> Vec<f64> {
    vec![0.5, 0.6, 0.7, 0.8, 0.9]
}

/// Measure-change reweighting reproduces direct survival.
pub fn criterion_3(profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let n_max = match profile {
        Profile::Desk => 100,
        Profile::Quick => 30,
    };
    let body = (|| {
        let ps = bias_grid(&reweight_grid())?;
        let mut cases = Vec::new();
        for a in &ps {
            for b in &ps {
                if a != b {
                    for k in 1..=4u32 {
                        cases.push((a.clone(), b.clone(), k));
                    }
                }
            }
        }
        let results: Vec<(f64, f64, bool)> = cases
            .par_iter()
            .map(|(a, b, k)| {
                let curve = reweighted_survival_curve::<f64>(a, b, *k, n_max, 2000, None)?;
                let direct = survival_pmf::<f64>(&WalkSpec::new(b.clone(), *k)?, n_max)?;
                let mut worst_excess = f64::NEG_INFINITY;
                let mut worst_bound = 0.0f64;
                let mut ok = true;
                for (r, d) in curve.iter().zip(&direct.values) {
                    let err = (r.estimate - d).abs();
                    let allowed = r.tail_bound.max(1e-10);
                    ok &= err <= allowed;
                    worst_excess = worst_excess.max(err - allowed);
                    worst_bound = worst_bound.max(r.tail_bound);
                }
                Ok((worst_excess, worst_bound, ok))
            })
            .collect::<Result<_>>()?;
        let passed = results.iter().all(|r| r.2);
        let worst = results
            .iter()
            .map(|r| r.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = results.iter().map(|r| r.1).fold(0.0, f64::max);
        Ok((
            passed,
            format!(
                "{} (p_from, p_to, k) cases, n<={n_max}, truncation 2000; max(error - allowed) {worst:.3e}, largest tail bound {bound:.3e}",
                results.len()
            ),
        ))
    })();
    outcome(3, "discrete reweighting", started, body)
}

/// Both sides of the survival factorization agree.
pub fn criterion_4(profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let n_max = match profile {
        Profile::Desk => 100,
        Profile::Quick => 30,
    };
    let body = (|| {
        let ps = bias_grid(&reweight_grid())?;
        let mut worst = 0.0f64;
        let mut cases = 0;
        for (i, a) in ps.iter().enumerate() {
            for b in &ps[i + 1..] {
                for k in 1..=4 {
                    for c in factorization_curve(a, b, k, n_max, 400)? {
                        worst = worst.max(c.deviation);
                    }
                    cases += 1;
                }
            }
        }
        Ok((
            worst <= 1e-10,
            format!(
                "{cases} (p1 < p2, k) cases, n<={n_max}; max deviation {worst:.3e} (limit 1e-10)"
            ),
        ))
    })();
    outcome(4, "discrete factorization", started, body)
}

/// Laplace transform of the driftless exit time equals `sech(λb)`.
pub fn criterion_5(_profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let body = (|| {
        let ctl = SeriesControl::default();
        let mut worst = 0.0f64;
        for lambda in [0.0, 0.5, 1.0, 2.0, 3.0] {
            for b in [0.5, 1.0, 2.0] {
                worst = worst.max(sech_identity_residual(lambda, b, &ctl)?);
            }
        }
        Ok((
            worst <= 1e-6,
            format!("max residual {worst:.3e} (limit 1e-6)"),
        ))
    })();
    outcome(5, "sech identity", started, body)
}

/// Driftless series against the diffusively scaled walk.
pub fn criterion_6(profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let k: u32 = match profile {
        Profile::Desk => 400,
        Profile::Quick => 100,
    };
    let body = (|| {
        let ctl = SeriesControl::default();
        let times = [0.25, 0.5, 1.0, 2.0];
        let scale = u64::from(k) * u64::from(k);
        let horizon = (2.0 * scale as f64) as u64;
        let walk = survival_pmf::<f64>(&WalkSpec::new(Bias::half(), k)?, horizon)?;
        let mut worst = 0.0f64;
        for t in times {
            let n = (t * scale as f64).round() as u64;
            worst = worst.max((driftless_survival(1.0, t, &ctl)? - walk.values[n as usize]).abs());
        }
        Ok((
            worst <= 2e-3,
            format!("k={k}, max |series - walk| {worst:.3e} (limit 2e-3)"),
        ))
    })();
    outcome(6, "series vs scaled walk", started, body)
}

/// Drifted survival is non-increasing in the drift.
pub fn criterion_7(_profile: Profile) -> CriterionOutcome {
    let started = Instant::now();
    let body = (|| {
        let lambdas: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();
        let report = dominance_scan_continuous(
            &lambdas,
            1.0,
            &[0.25, 0.5, 1.0, 2.0],
            &SeriesControl::default(),
            1e-8,
        )?;
        let worst = report
            .pairs
            .iter()
            .map(|p| p.worst_excess)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((
            report.is_consistent(),
            format!(
                "{} pairs, {} violations; largest increase {worst:.3e} (ties up to 1e-8)",
                report.pairs.len(),
                report.violations.len()
            ),
        ))
    })();
    outcome(7, "analytic drift scan", started, body)
}

fn z_score(value: f64, target: f64, se: f64) -> f64 {
    if se > 0.0 {
        (value - target) / se
    } else if value == target {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Monte Carlo exit times against the analytic survival.
pub fn criterion_8(profile: Profile, seed: u64) -> CriterionOutcome {
    let started = Instant::now();
    let n_paths = match profile {
        Profile::Desk => 100_000,
        Profile::Quick => 10_000,
    };
    let body = (|| {
        let ctl = SeriesControl::default();
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        for (i, lambda) in [0.0, 1.0].into_iter().enumerate() {
            let spec = DriftSpec::new(lambda, 1.0)?;
            let batch = simulate_exit_bm(
                &spec,
                1e-3,
                20.0,
                n_paths,
                RngStreamSpec::new(seed, 80 + i as u32),
                true,
            )?;
            for t in [0.5, 1.0] {
                let e = batch.survival(t)?;
                let z = z_score(
                    e.value,
                    drifted_survival(&spec, t, &ctl)?.value,
                    e.standard_error,
                );
                worst = worst.max(z.abs());
                parts.push(format!("lambda={lambda} t={t} z={z:+.2}"));
            }
            if lambda == 0.0 {
                let m = batch.mean_exit_time();
                let z = z_score(m.value, 1.0, m.standard_error);
                worst = worst.max(z.abs());
                parts.push(format!(
                    "E[tau]={:.4} z={z:+.2} censored={}",
                    m.value,
                    batch.censored_fraction()
                ));
            }
        }
        Ok((
            worst <= 3.0,
            format!("{n_paths} paths, dt=1e-3, bridge on; {}", parts.join(", ")),
        ))
    })();
    outcome(8, "Monte Carlo exit law", started, body)
}

fn engineered_dependence(samples: &[ExitSample]) -> Vec<ExitSample> {
    let mut times: Vec<f64> = samples
        .iter()
        .filter(|s| !s.is_censored())
        .map(|s| s.time)
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    samples
        .iter()
        .map(|s| {
            let side = if s.time > median {
                ExitSide::Upper
            } else {
                ExitSide::Lower
            };
            ExitSample { side, ..*s }
        })
        .collect()
}

/// Exit side and exit time pass a chi-square independence test.
pub fn criterion_9(profile: Profile, seed: u64) -> CriterionOutcome {
    let started = Instant::now();
    let n_paths = match profile {
        Profile::Desk => 100_000,
        Profile::Quick => 20_000,
    };
    let body = (|| {
        let spec = DriftSpec::new(1.0, 1.0)?;
        let batch = simulate_exit_bm(
            &spec,
            1e-3,
            20.0,
            n_paths,
            RngStreamSpec::new(seed, 90),
            true,
        )?;
        let test = check_independence_continuous(&batch.samples, 10)?;
        let control = check_independence_continuous(&engineered_dependence(&batch.samples), 10)?;
        Ok((
            test.p_value >= 1e-3 && control.p_value < 1e-6,
            format!(
                "{n_paths} paths, {} bins: chi2={:.3} p={:.4} (reject below 1e-3); control p={:.3e} (must be below 1e-6)",
                test.bins, test.statistic, test.p_value, control.p_value
            ),
        ))
    })();
    outcome(9, "continuous independence", started, body)
}

/// Pathwise ordering of the coupled squared-modulus SDE.
///
/// The tolerant fraction (scheme tolerance `10·√dt·2√Y`) is held to 1e-3 at
/// `dt = 1e-4`; the zero-tolerance fraction must fall strictly as `dt`
/// shrinks, since the tolerant one is typically identically zero.
pub fn criterion_10(profile: Profile, seed: u64) -> CriterionOutcome {
    let started = Instant::now();
    let n_paths = match profile {
        Profile::Desk => 1000,
        Profile::Quick => 200,
    };
    let body = (|| {
        let run = |dt| {
            let spec = CoupledSpec {
                lambdas: vec![0.0, 0.5, 1.0],
                y0: 0.0,
                b: 1.0,
                dt,
                horizon: 1.0,
                n_paths,
            };
            simulate_y_coupled(&spec, RngStreamSpec::new(seed, 100), 0)
        };
        let main = run(1e-4)?;
        let ladder = [1e-3, 2.5e-4, 6.25e-5]
            .into_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = ladder.iter().map(|r| r.raw_violation_fraction).collect();
        let decreasing = raw.windows(2).all(|w| w[1] < w[0]);
        Ok((
            main.violation_fraction <= 1e-3 && decreasing,
            format!(
                "{n_paths} paths; dt=1e-4 tolerant fraction {:.3e} (limit 1e-3, raw {:.3e}); raw fraction over dt 1e-3, 2.5e-4, 6.25e-5: {:.3e}, {:.3e}, {:.3e} ({})",
                main.violation_fraction,
                main.raw_violation_fraction,
                raw[0],
                raw[1],
                raw[2],
                if decreasing { "strictly decreasing" } else { "not strictly decreasing" }
            ),
        ))
    })();
    outcome(10, "coupled SDE ordering", started, body)
}

/// Runs criteria 1 to 10 in order.
pub fn run_all(profile: Profile, seed: u64) -> Vec<CriterionOutcome> {
    vec![
        criterion_1(profile),
        criterion_2(profile),
        criterion_3(profile),
        criterion_4(profile),
        criterion_5(profile),
        criterion_6(profile),
        criterion_7(profile),
        criterion_8(profile, seed),
        criterion_9(profile, seed),
        criterion_10(profile, seed),
    ]
}
