//! One function per subcommand, each mapping resolved settings to outputs.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use exitdom::bm_analytic::{
    dominance_scan_continuous, drifted_survival, survival_grid, DriftSpec, SeriesControl,
};
use exitdom::bm_sde::{
    check_independence_continuous, mean_girsanov_weight, reweighted_survival_bm, simulate_exit_bm,
    simulate_y_coupled, CoupledSpec,
};
use exitdom::rng::RngStreamSpec;
use exitdom::rw_exact::{exit_joint, mean_exit, scalar_json, survival_pmf, WalkSpec};
use exitdom::rw_measure::{
    check_independence_discrete, exit_upper_closed_form, factorization_curve,
    reweighted_survival_curve,
};
use exitdom::stats_verify::{dominance_scan_discrete, DominanceReport};
use exitdom::suite::{self, Profile};
use exitdom::{Arith, Bias, Scalar};
use num_rational::BigRational;
use serde_json::json;

use crate::config::Resolved;
use crate::output::{csv_field, Artifact};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(r: &Resolved) -> Result<Artifact> {
    match r.subcommand {
        "rw-survival" => rw_survival(r),
        "rw-dominance" => rw_dominance(r),
        "rw-independence" => rw_independence(r),
        "rw-reweight" => rw_reweight(r),
        "rw-factorization" => rw_factorization(r),
        "bm-survival" => bm_survival(r),
        "bm-dominance" => bm_dominance(r),
        "bm-couple" => bm_couple(r),
        "bm-independence" => bm_independence(r),
        "bm-reweight" => bm_reweight(r),
        "verify-all" => verify_all(r),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

/// Rejects settings that need files before any work is done.
pub fn precheck(r: &Resolved) -> Result<()> {
    if r.out_dir != "-" {
        return Ok(());
    }
    let extra = match r.subcommand {
        "bm-couple" if r.count("record") > 0 => Some("record"),
        "bm-independence" if r.switch("raw-samples") => Some("raw-samples"),
        _ => None,
    };
    match extra {
        Some(key) => Err(CliError::Usage(format!(
            "invalid value for `--{key}`: extra files need a directory, not stdout (--out-dir -)"
        ))),
        None => Ok(()),
    }
}

fn bias(r: &Resolved, key: &str) -> Result<Bias> {
    Ok(Bias::from_str(r.get(key))?)
}

fn biases(r: &Resolved, key: &str) -> Result<Vec<Bias>> {
    r.get(key)
        .split(',')
        .map(|s| Ok(Bias::from_str(s)?))
        .collect()
}

fn mode(r: &Resolved) -> Arith {
    Arith::from_str(r.get("mode")).expect("validated mode")
}

fn series_control(r: &Resolved) -> Result<SeriesControl> {
    let ctl = SeriesControl {
        max_terms: r.narrow("max-terms")?,
        tolerance: r.float("series-tol"),
        quad_tolerance: r.float("quad-tol"),
        ..SeriesControl::default()
    };
    ctl.validate()?;
    Ok(ctl)
}

fn rng(r: &Resolved) -> Result<RngStreamSpec> {
    Ok(RngStreamSpec::new(r.count("seed"), r.narrow("substream")?))
}

fn walk_spec(r: &Resolved) -> Result<WalkSpec> {
    Ok(WalkSpec::new(bias(r, "p")?, r.narrow("k")?)?)
}

fn csv_of(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

fn rw_survival(r: &Resolved) -> Result<Artifact> {
    let spec = walk_spec(r)?;
    let joint = r.get("table") == "joint";
    match mode(r) {
        Arith::Float => walk_survival::<f64>(&spec, r.count("horizon"), joint),
        Arith::Exact => walk_survival::<BigRational>(&spec, r.count("horizon"), joint),
    }
}

fn walk_survival<T: Scalar>(spec: &WalkSpec, horizon: u64, joint: bool) -> Result<Artifact> {
    let table = exit_joint::<T>(spec, horizon)?;
    let survival = table.survival();
    let mean = mean_exit::<T>(spec)?;
    let (csv, body) = if joint {
        (csv_of(|w| table.write_csv(w)), table.to_json())
    } else {
        (csv_of(|w| survival.write_csv(w)), survival.to_json())
    };
    Ok(Artifact {
        csv,
        result: json!({ "table": body, "mean_exit": scalar_json(&mean) }),
        summary: format!(
            "P(sigma > {horizon}) = {}\nE[sigma] = {}\n",
            survival.at(horizon).render(),
            mean.render()
        ),
        ..Artifact::default()
    })
}

fn pairs_csv(report: &DominanceReport) -> String {
    let mut csv = String::from("smaller,larger,verdict,worst_excess,worst_at,escalated\n");
    for p in &report.pairs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            csv_field(&p.smaller),
            csv_field(&p.larger),
            p.verdict,
            p.worst_excess,
            p.worst_index,
            p.escalated
        );
    }
    csv
}

fn dominance_artifact(report: &DominanceReport) -> Artifact {
    let failure = report.worst_violation().map(|v| {
        format!(
            "{} dominance violation(s); worst at {}={}: {} < {}",
            report.violations.len(),
            report.index_name,
            v.index,
            v.smaller_param_value,
            v.larger_param_value
        )
    });
    Artifact {
        csv: pairs_csv(report),
        result: serde_json::to_value(report).expect("report serializes"),
        summary: report.to_text(),
        failure,
        ..Artifact::default()
    }
}

fn rw_dominance(r: &Resolved) -> Result<Artifact> {
    let report = dominance_scan_discrete(
        &biases(r, "ps")?,
        r.narrow("k")?,
        r.count("horizon"),
        mode(r),
    )?;
    Ok(dominance_artifact(&report))
}

fn rw_independence(r: &Resolved) -> Result<Artifact> {
    let spec = walk_spec(r)?;
    let truncation = r.count("truncation");
    let tolerance = r.float("tolerance");
    match mode(r) {
        Arith::Float => walk_independence::<f64>(&spec, truncation, tolerance),
        Arith::Exact => walk_independence::<BigRational>(&spec, truncation, tolerance),
    }
}

fn walk_independence<T: Scalar>(
    spec: &WalkSpec,
    truncation: u64,
    tolerance: f64,
) -> Result<Artifact> {
    let c = check_independence_discrete::<T>(spec, truncation)?;
    let closed = spec
        .p()
        .is_exact()
        .then(|| exit_upper_closed_form(spec))
        .transpose()?;
    let deviation = c.max_deviation.to_f64();
    let failure = (deviation > tolerance).then(|| {
        format!(
            "max deviation {deviation:e} at step {} exceeds tolerance {tolerance:e}",
            c.worst_step
        )
    });
    Ok(Artifact {
        csv: format!(
            "max_deviation,worst_step,exit_upper,residual\n{},{},{},{}\n",
            c.max_deviation.render(),
            c.worst_step,
            c.exit_upper.render(),
            c.residual.render()
        ),
        result: json!({
            "max_deviation": scalar_json(&c.max_deviation),
            "worst_step": c.worst_step,
            "exit_upper": scalar_json(&c.exit_upper),
            "exit_upper_closed_form": closed.map(|q| q.to_string()),
            "residual": scalar_json(&c.residual),
        }),
        summary: format!(
            "max |P(sigma=n, +k) - P(sigma=n) P(+k)| = {} at n = {}\nP(exit at +k) = {}\n",
            c.max_deviation.render(),
            c.worst_step,
            c.exit_upper.render()
        ),
        failure,
        ..Artifact::default()
    })
}

fn rw_reweight(r: &Resolved) -> Result<Artifact> {
    let (from, to) = (bias(r, "p-from")?, bias(r, "p-to")?);
    let args = (
        r.narrow("k")?,
        r.count("horizon"),
        r.count("truncation"),
        r.float("error-floor"),
    );
    match mode(r) {
        Arith::Float => walk_reweight::<f64>(&from, &to, args),
        Arith::Exact => walk_reweight::<BigRational>(&from, &to, args),
    }
}

fn walk_reweight<T: Scalar>(
    from: &Bias,
    to: &Bias,
    (k, horizon, truncation, floor): (u32, u64, u64, f64),
) -> Result<Artifact> {
    let curve = reweighted_survival_curve::<T>(from, to, k, horizon, truncation, None)?;
    let direct = survival_pmf::<T>(&WalkSpec::new(to.clone(), k)?, horizon)?;
    let mut csv = String::from("n,estimate,direct,error,tail_bound\n");
    let mut rows = Vec::with_capacity(curve.len());
    let mut worst: Option<(u64, f64, f64)> = None;
    for (c, d) in curve.iter().zip(&direct.values) {
        let err = c.estimate.abs_diff(d);
        let allowed = c.tail_bound.max(floor);
        let e = err.to_f64();
        if e > allowed && worst.is_none_or(|w| e - allowed > w.1 - w.2) {
            worst = Some((c.n, e, allowed));
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            c.n,
            c.estimate.render(),
            d.render(),
            err.render(),
            c.tail_bound
        );
        rows.push(json!({
            "n": c.n,
            "estimate": scalar_json(&c.estimate),
            "direct": scalar_json(d),
            "error": scalar_json(&err),
            "tail_bound": c.tail_bound,
        }));
    }
    let max_err = curve
        .iter()
        .zip(&direct.values)
        .map(|(c, d)| c.estimate.abs_diff(d).to_f64())
        .fold(0.0, f64::max);
    let tail = curve.first().map_or(0.0, |c| c.tail_bound);
    Ok(Artifact {
        csv,
        result: json!({ "mode": T::MODE, "rows": rows }),
        summary: format!(
            "reweighted {from} -> {to}, k = {k}: max error {max_err:e}, tail bound {tail:e}\n"
        ),
        failure: worst.map(|(n, e, a)| format!("error {e:e} at n = {n} exceeds allowed {a:e}")),
        ..Artifact::default()
    })
}

fn rw_factorization(r: &Resolved) -> Result<Artifact> {
    let (p1, p2) = (bias(r, "p1")?, bias(r, "p2")?);
    let k = r.narrow("k")?;
    let tolerance = r.float("tolerance");
    let curve = factorization_curve(&p1, &p2, k, r.count("horizon"), r.count("truncation"))?;
    let mut csv = String::from("n,direct,factorized,deviation,tail_bound\n");
    let mut failure = None;
    for c in &curve {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            c.n, c.direct, c.factorized, c.deviation, c.tail_bound
        );
        let allowed = c.tail_bound.max(tolerance);
        if failure.is_none() && c.deviation > allowed {
            failure = Some(format!(
                "deviation {:e} at n = {} exceeds allowed {allowed:e}",
                c.deviation, c.n
            ));
        }
    }
    let worst = curve.iter().map(|c| c.deviation).fold(0.0, f64::max);
    Ok(Artifact {
        csv,
        result: json!({ "rows": curve }),
        summary: format!("factorization {p1} -> {p2}, k = {k}: max deviation {worst:e}\n"),
        failure,
        ..Artifact::default()
    })
}

fn bm_survival(r: &Resolved) -> Result<Artifact> {
    let ctl = series_control(r)?;
    let grid = survival_grid(&r.floats("lambdas"), r.float("b"), &r.floats("times"), &ctl)?;
    let bound = grid
        .values
        .iter()
        .flatten()
        .map(|v| v.error_bound)
        .fold(0.0, f64::max);
    Ok(Artifact {
        csv: csv_of(|w| grid.write_csv(w)),
        result: serde_json::to_value(&grid).expect("grid serializes"),
        summary: format!(
            "{} survival values, largest error bound {bound:e}\n",
            grid.lambdas.len() * grid.times.len()
        ),
        ..Artifact::default()
    })
}

fn bm_dominance(r: &Resolved) -> Result<Artifact> {
    let ctl = series_control(r)?;
    let report = dominance_scan_continuous(
        &r.floats("lambdas"),
        r.float("b"),
        &r.floats("times"),
        &ctl,
        r.float("tie-tolerance"),
    )?;
    Ok(dominance_artifact(&report))
}

fn bm_couple(r: &Resolved) -> Result<Artifact> {
    let spec = CoupledSpec {
        lambdas: r.floats("lambdas"),
        y0: r.float("y0"),
        b: r.float("b"),
        dt: r.float("dt"),
        horizon: r.float("horizon"),
        n_paths: r.narrow("paths")?,
    };
    let batch = simulate_y_coupled(&spec, rng(r)?, r.narrow("record")?)?;
    let mut csv = String::from("lambda,restricted_mean,standard_error,hit_fraction\n");
    for h in &batch.hitting {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            h.lambda, h.restricted_mean.value, h.restricted_mean.standard_error, h.hit_fraction
        );
    }
    let mut extras = Vec::new();
    if !batch.trajectories.is_empty() {
        let mut paths = String::from("path,step,t");
        for l in &spec.lambdas {
            let _ = write!(paths, ",y[{l}]");
        }
        paths.push('\n');
        for (i, path) in batch.trajectories.iter().enumerate() {
            for step in 0..=batch.steps {
                let _ = write!(paths, "{i},{step},{}", step as f64 * spec.dt);
                for y in path {
                    let _ = write!(paths, ",{}", y[step]);
                }
                paths.push('\n');
            }
        }
        extras.push(("paths", paths));
    }
    let limit = r.float("max-violation");
    let failure = (batch.violation_fraction > limit).then(|| {
        format!(
            "violation fraction {:e} exceeds {limit:e}",
            batch.violation_fraction
        )
    });
    let mut summary = format!(
        "{} paths x {} steps: violation fraction {:e} (raw {:e}, largest excess {:e})\n",
        spec.n_paths,
        batch.steps,
        batch.violation_fraction,
        batch.raw_violation_fraction,
        batch.max_excess
    );
    for h in &batch.hitting {
        let _ = writeln!(
            summary,
            "lambda {}: E[min(T_hit, {})] = {:.5} +/- {:.5}, hit fraction {}",
            h.lambda,
            spec.horizon,
            h.restricted_mean.value,
            h.restricted_mean.standard_error,
            h.hit_fraction
        );
    }
    Ok(Artifact {
        csv,
        result: json!({
            "spec": spec,
            "rng": batch.rng,
            "steps": batch.steps,
            "violation_fraction": batch.violation_fraction,
            "raw_violation_fraction": batch.raw_violation_fraction,
            "max_excess": batch.max_excess,
            "hitting": batch.hitting,
        }),
        summary,
        extras,
        failure,
    })
}

fn bm_independence(r: &Resolved) -> Result<Artifact> {
    let spec = DriftSpec::new(r.float("lambda"), r.float("b"))?;
    let batch = simulate_exit_bm(
        &spec,
        r.float("dt"),
        r.float("horizon"),
        r.narrow("paths")?,
        rng(r)?,
        r.switch("bridge"),
    )?;
    let test = check_independence_continuous(&batch.samples, r.narrow("bins")?)?;
    let alpha = r.float("alpha");
    let extras = if r.switch("raw-samples") {
        vec![("samples", csv_of(|w| batch.write_raw_csv(w)))]
    } else {
        Vec::new()
    };
    Ok(Artifact {
        csv: format!(
            "statistic,dof,p_value,bins,samples,censored_excluded\n{},{},{},{},{},{}\n",
            test.statistic, test.dof, test.p_value, test.bins, test.samples, test.censored_excluded
        ),
        result: json!({ "test": test, "exits": batch.summary() }),
        summary: format!(
            "chi2 = {:.4} on {} dof, p = {:.4} ({} samples, {} censored)\n",
            test.statistic, test.dof, test.p_value, test.samples, test.censored_excluded
        ),
        extras,
        failure: (test.p_value < alpha).then(|| {
            format!(
                "independence rejected: p = {:e} below alpha {alpha:e}",
                test.p_value
            )
        }),
    })
}

fn bm_reweight(r: &Resolved) -> Result<Artifact> {
    let (from, to, b) = (r.float("lambda-from"), r.float("lambda-to"), r.float("b"));
    let batch = simulate_exit_bm(
        &DriftSpec::new(from, b)?,
        r.float("dt"),
        r.float("horizon"),
        r.narrow("paths")?,
        rng(r)?,
        r.switch("bridge"),
    )?;
    let target = DriftSpec::new(to, b)?;
    let ctl = SeriesControl::default();
    let (max_censored, z_max) = (r.float("max-censored"), r.float("z-max"));
    let mut csv = String::from("t,estimate,standard_error,analytic,z\n");
    let mut rows = Vec::new();
    let mut worst: Option<(f64, f64)> = None;
    for t in r.floats("times") {
        let e = reweighted_survival_bm(&batch, to, t, max_censored)?;
        let analytic = drifted_survival(&target, t, &ctl)?.value;
        let z = if e.standard_error > 0.0 {
            (e.estimate - analytic) / e.standard_error
        } else if e.estimate == analytic {
            0.0
        } else {
            f64::INFINITY
        };
        if z.abs() > z_max && worst.is_none_or(|w| z.abs() > w.1.abs()) {
            worst = Some((t, z));
        }
        let _ = writeln!(
            csv,
            "{t},{},{},{analytic},{z}",
            e.estimate, e.standard_error
        );
        rows.push(json!({
            "t": t,
            "estimate": e.estimate,
            "standard_error": e.standard_error,
            "analytic": analytic,
            "z": z,
        }));
    }
    let weight = mean_girsanov_weight(&batch, to);
    Ok(Artifact {
        csv,
        result: json!({
            "rows": rows,
            "mean_weight": weight,
            "censored_fraction": batch.censored_fraction(),
        }),
        summary: format!(
            "{} paths at lambda {from} reweighted to {to}; mean weight {:.5} +/- {:.5}\n",
            batch.len(),
            weight.value,
            weight.standard_error
        ),
        failure: worst.map(|(t, z)| {
            format!("estimate at t = {t} is {z:+.2} standard errors off (limit {z_max})")
        }),
        ..Artifact::default()
    })
}

fn verify_all(r: &Resolved) -> Result<Artifact> {
    let profile = Profile::from_str(r.get("profile"))?;
    let seed = r.count("seed");
    let started = Instant::now();
    let outcomes = suite::run_all(profile, seed);
    let mut csv = String::from("id,title,passed,detail\n");
    let mut summary = String::new();
    for o in &outcomes {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            o.id,
            csv_field(o.title),
            o.passed,
            csv_field(&o.detail)
        );
        let _ = writeln!(
            summary,
            "[{}] {:>2} {} ({:.2} s): {}",
            if o.passed { "pass" } else { "FAIL" },
            o.id,
            o.title,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let _ = writeln!(
        summary,
        "{passed}/{} criteria passed ({profile} profile, seed {seed}, {:.1} s)",
        outcomes.len(),
        started.elapsed().as_secs_f64()
    );
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id.to_string())
        .collect();
    Ok(Artifact {
        csv,
        result: json!({
            "profile": profile,
            "seed": seed,
            "criteria": outcomes,
            "passed": passed,
            "total": outcomes.len(),
        }),
        summary,
        failure: (!failed.is_empty()).then(|| format!("criteria failed: {}", failed.join(", "))),
        ..Artifact::default()
    })
}
