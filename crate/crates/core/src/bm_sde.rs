//! Monte Carlo for drifted Brownian exit problems and the coupled
//! squared-modulus SDE family.
//!
//! Paths are simulated in fixed-size batches; batch `i` always draws from
//! stream `i` of the caller's [`RngStreamSpec`] and batch results are combined
//! in index order, so every statistic is independent of the thread count.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bm_analytic::{drift_y_unchecked, DriftSpec};
use crate::error::{Error, Result};
use crate::rng::RngStreamSpec;

/// Paths per exit-time batch.
pub const EXIT_BATCH: usize = 1024;
/// Paths per coupled-SDE batch (each path is long).
pub const COUPLED_BATCH: usize = 64;

// bridge crossing probabilities below e^-40 are not worth a uniform draw
const BRIDGE_SKIP_EXPONENT: f64 = -40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitSide {
    Upper,
    Lower,
    Censored,
}

impl ExitSide {
    pub fn label(self) -> &'static str {
        match self {
            ExitSide::Upper => "+b",
            ExitSide::Lower => "-b",
            ExitSide::Censored => "censored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitSample {
    /// Exit time, or the horizon for censored paths.
    pub time: f64,
    pub side: ExitSide,
    /// Simulated position at the end of the last step.
    pub terminal: f64,
    /// Position at `τ ∧ horizon` used by the likelihood ratio: `±b` on exit.
    pub stopped_position: f64,
}

impl ExitSample {
    pub fn is_censored(&self) -> bool {
        self.side == ExitSide::Censored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

impl Estimate {
    fn from_moments(sum: f64, sum_sq: f64, n: usize) -> Self {
        let n = n as f64;
        let mean = sum / n;
        let var = if n > 1.0 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            standard_error: (var / n).sqrt(),
        }
    }

    fn of<I: IntoIterator<Item = f64>>(xs: I) -> Self {
        let (mut sum, mut sum_sq, mut n) = (0.0, 0.0, 0usize);
        for x in xs {
            sum += x;
            sum_sq += x * x;
            n += 1;
        }
        Self::from_moments(sum, sum_sq, n)
    }
}

fn step_count(dt: f64, horizon: f64) -> usize {
    let ratio = horizon / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

fn step_length(i: usize, dt: f64, horizon: f64) -> f64 {
    (horizon - i as f64 * dt).min(dt)
}

fn check_time_grid(dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("step {dt} must be positive")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(
            "horizon",
            format!("horizon {horizon} must be positive"),
        ));
    }
    if dt > horizon {
        return Err(Error::invalid(
            "dt",
            format!("step {dt} exceeds horizon {horizon}"),
        ));
    }
    Ok(())
}

fn batch_sizes(n_paths: usize, batch: usize) -> impl IndexedParallelIterator<Item = (u32, usize)> {
    let batches = n_paths.div_ceil(batch);
    (0..batches)
        .into_par_iter()
        .map(move |i| (i as u32, batch.min(n_paths - i * batch)))
}

/// Exit samples with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitBatch {
    pub lambda: f64,
    pub b: f64,
    pub dt: f64,
    pub horizon: f64,
    pub bridge_correction: bool,
    pub rng: RngStreamSpec,
    pub samples: Vec<ExitSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitSummary {
    pub n_paths: usize,
    pub censored_fraction: f64,
    pub upper_fraction: Estimate,
    /// `E[min(τ, horizon)]`.
    pub mean_exit_time: Estimate,
}

impl ExitBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Empirical `P(τ > t)` for `t` below the horizon.
    pub fn survival(&self, t: f64) -> Result<Estimate> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(Error::invalid(
                "t",
                format!("time {t} is outside [0, horizon = {})", self.horizon),
            ));
        }
        let n = self.samples.len();
        let alive = self.samples.iter().filter(|s| s.time > t).count();
        let p = alive as f64 / n as f64;
        Ok(Estimate {
            value: p,
            standard_error: (p * (1.0 - p) / n as f64).sqrt(),
        })
    }

    /// Mean of `min(τ, horizon)`; equal to `E[τ]` up to the censored mass.
    pub fn mean_exit_time(&self) -> Estimate {
        Estimate::of(self.samples.iter().map(|s| s.time))
    }

    /// Fraction of exits through `+b` among uncensored paths.
    pub fn upper_fraction(&self) -> Estimate {
        Estimate::of(self.samples.iter().filter(|s| !s.is_censored()).map(|s| {
            if s.side == ExitSide::Upper {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn censored_fraction(&self) -> f64 {
        self.samples.iter().filter(|s| s.is_censored()).count() as f64 / self.samples.len() as f64
    }

    /// Exit times with censored paths at `+∞`.
    pub fn exit_times(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                if s.is_censored() {
                    f64::INFINITY
                } else {
                    s.time
                }
            })
            .collect()
    }

    pub fn summary(&self) -> ExitSummary {
        ExitSummary {
            n_paths: self.samples.len(),
            censored_fraction: self.censored_fraction(),
            upper_fraction: self.upper_fraction(),
            mean_exit_time: self.mean_exit_time(),
        }
    }

    /// Per-path dump: `path,time,side,terminal`.
    pub fn write_raw_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path,time,side,terminal")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", s.time, s.side.label(), s.terminal)?;
        }
        Ok(())
    }
}

fn simulate_path<R: Rng>(
    rng: &mut R,
    lambda: f64,
    b: f64,
    dt: f64,
    horizon: f64,
    bridge: bool,
) -> ExitSample {
    let steps = step_count(dt, horizon);
    let mut x = 0.0f64;
    for i in 0..steps {
        let h = step_length(i, dt, horizon);
        let z: f64 = rng.sample(StandardNormal);
        let next = x + lambda * h + h.sqrt() * z;
        let t = if i + 1 == steps {
            horizon
        } else {
            (i + 1) as f64 * dt
        };
        let exit = |side, pos| ExitSample {
            time: t,
            side,
            terminal: next,
            stopped_position: pos,
        };
        if next >= b {
            return exit(ExitSide::Upper, b);
        }
        if next <= -b {
            return exit(ExitSide::Lower, -b);
        }
        if bridge {
            let up = -2.0 * (b - x) * (b - next) / h;
            let down = -2.0 * (b + x) * (b + next) / h;
            if up > BRIDGE_SKIP_EXPONENT || down > BRIDGE_SKIP_EXPONENT {
                let u: f64 = rng.random();
                let p_up = up.exp();
                if u < p_up {
                    return exit(ExitSide::Upper, b);
                }
                if u < p_up + down.exp() {
                    return exit(ExitSide::Lower, -b);
                }
            }
        }
        x = next;
    }
    ExitSample {
        time: horizon,
        side: ExitSide::Censored,
        terminal: x,
        stopped_position: x,
    }
}

/// Euler simulation of `B_t + λt` from 0 until it leaves `(−b, b)` or the
/// horizon passes, optionally detecting within-step crossings through the
/// Brownian-bridge crossing probability.
pub fn simulate_exit_bm(
    spec: &DriftSpec,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    rng: RngStreamSpec,
    bridge_correction: bool,
) -> Result<ExitBatch> {
    check_time_grid(dt, horizon)?;
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "need at least one path"));
    }
    let batches: Vec<Vec<ExitSample>> = batch_sizes(n_paths, EXIT_BATCH)
        .map(|(batch, size)| {
            let mut r = rng.batch_rng(batch);
            (0..size)
                .map(|_| simulate_path(&mut r, spec.lambda, spec.b, dt, horizon, bridge_correction))
                .collect()
        })
        .collect();
    Ok(ExitBatch {
        lambda: spec.lambda,
        b: spec.b,
        dt,
        horizon,
        bridge_correction,
        rng,
        samples: batches.concat(),
    })
}

fn log_weight(position: f64, time: f64, lambda_from: f64, lambda_to: f64) -> f64 {
    -(lambda_from - lambda_to) * position
        + 0.5 * (lambda_from * lambda_from - lambda_to * lambda_to) * time
}

/// `dQ_to/dQ_from` on `F_τ`: `exp(−(λ_from−λ_to)B_τ + (λ_from²−λ_to²)τ/2)`.
pub fn likelihood_ratio_bm(sample: &ExitSample, lambda_from: f64, lambda_to: f64) -> Result<f64> {
    if sample.is_censored() {
        return Err(Error::invalid(
            "sample",
            "censored path has no exit time; extend the horizon",
        ));
    }
    Ok(log_weight(sample.stopped_position, sample.time, lambda_from, lambda_to).exp())
}

/// The same density on `F_{τ∧T}`; defined for censored paths too.
pub fn stopped_likelihood_ratio_bm(sample: &ExitSample, lambda_from: f64, lambda_to: f64) -> f64 {
    log_weight(sample.stopped_position, sample.time, lambda_from, lambda_to).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReweightedBm {
    pub estimate: f64,
    pub standard_error: f64,
    pub censored_fraction: f64,
}

/// `Q_to(τ > t)` from samples drawn under `λ_from`.
///
/// Each path is weighted by the density stopped at `τ ∧ horizon`; since
/// `{τ > t}` is known by then for `t < horizon`, censored paths contribute
/// their terminal weight and no censoring bias arises. The censored fraction
/// is still reported and must not exceed `max_censored`.
pub fn reweighted_survival_bm(
    batch: &ExitBatch,
    lambda_to: f64,
    t: f64,
    max_censored: f64,
) -> Result<ReweightedBm> {
    if !(t >= 0.0 && t < batch.horizon) {
        return Err(Error::invalid(
            "t",
            format!("time {t} is outside [0, horizon = {})", batch.horizon),
        ));
    }
    let censored_fraction = batch.censored_fraction();
    if censored_fraction > max_censored {
        return Err(Error::CensoredMass {
            fraction: censored_fraction,
            tolerance: max_censored,
        });
    }
    let est = Estimate::of(batch.samples.iter().map(|s| {
        if s.time > t {
            stopped_likelihood_ratio_bm(s, batch.lambda, lambda_to)
        } else {
            0.0
        }
    }));
    Ok(ReweightedBm {
        estimate: est.value,
        standard_error: est.standard_error,
        censored_fraction,
    })
}

/// Sample mean of the exit-time density over uncensored paths (divided by the
/// total path count); tends to 1 as the censored mass vanishes.
pub fn mean_girsanov_weight(batch: &ExitBatch, lambda_to: f64) -> Estimate {
    Estimate::of(batch.samples.iter().map(|s| {
        if s.is_censored() {
            0.0
        } else {
            log_weight(s.stopped_position, s.time, batch.lambda, lambda_to).exp()
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorizationCheckBm {
    pub direct: f64,
    pub factorized: f64,
    pub deviation: f64,
    /// `E[W | τ > t]` and `E[W]` under the sampling drift.
    pub conditional_weight_mean: f64,
    pub weight_mean: f64,
    pub survival_from: f64,
    pub tail_mean_holds: bool,
}

/// Sample version of `Q_to(τ>t) = E[W | τ>t] / E[W] · Q_from(τ>t)`, with `W`
/// the stopped density. The two sides differ only by how far the sample mean
/// of `W` is from 1.
pub fn factorization_check_continuous(
    batch: &ExitBatch,
    lambda_to: f64,
    t: f64,
) -> Result<FactorizationCheckBm> {
    if !(t >= 0.0 && t < batch.horizon) {
        return Err(Error::invalid(
            "t",
            format!("time {t} is outside [0, horizon = {})", batch.horizon),
        ));
    }
    let n = batch.samples.len() as f64;
    let (mut w_all, mut w_alive, mut alive) = (0.0, 0.0, 0usize);
    for s in &batch.samples {
        let w = stopped_likelihood_ratio_bm(s, batch.lambda, lambda_to);
        w_all += w;
        if s.time > t {
            w_alive += w;
            alive += 1;
        }
    }
    if alive == 0 {
        return Err(Error::InsufficientSamples(format!(
            "no path survives past t = {t}"
        )));
    }
    let weight_mean = w_all / n;
    let conditional_weight_mean = w_alive / alive as f64;
    let survival_from = alive as f64 / n;
    let direct = w_alive / n;
    let factorized = conditional_weight_mean / weight_mean * survival_from;
    Ok(FactorizationCheckBm {
        direct,
        factorized,
        deviation: (direct - factorized).abs(),
        conditional_weight_mean,
        weight_mean,
        survival_from,
        tail_mean_holds: conditional_weight_mean <= weight_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Time bins left after merging sparse ones.
    pub bins: usize,
    pub samples: usize,
    pub censored_excluded: usize,
}

/// Chi-square test of independence between exit side and exit time.
///
/// Uncensored exit times are cut at empirical quantiles into `time_bins`
/// bins; adjacent bins are merged until every expected cell count is at
/// least 20.
pub fn check_independence_continuous(
    samples: &[ExitSample],
    time_bins: usize,
) -> Result<IndependenceTest> {
    const MIN_EXPECTED: f64 = 20.0;
    if time_bins < 2 {
        return Err(Error::invalid("time_bins", "need at least two bins"));
    }
    let exited: Vec<&ExitSample> = samples.iter().filter(|s| !s.is_censored()).collect();
    let n = exited.len();
    let censored_excluded = samples.len() - n;
    let mut times: Vec<f64> = exited.iter().map(|s| s.time).collect();
    times.sort_by(f64::total_cmp);
    if n == 0 {
        return Err(Error::InsufficientSamples("no uncensored samples".into()));
    }

    // bin j holds times in (edge[j-1], edge[j]]; duplicate edges collapse
    let mut edges: Vec<f64> = (1..time_bins)
        .map(|j| times[(j * n).div_ceil(time_bins) - 1])
        .collect();
    edges.dedup();
    let mut counts = vec![[0.0f64; 2]; edges.len() + 1];
    for s in &exited {
        let bin = edges.partition_point(|&e| e < s.time);
        counts[bin][usize::from(s.side == ExitSide::Lower)] += 1.0;
    }

    let side_totals = [
        counts.iter().map(|c| c[0]).sum::<f64>(),
        counts.iter().map(|c| c[1]).sum::<f64>(),
    ];
    let min_side = side_totals[0].min(side_totals[1]) / n as f64;
    if min_side == 0.0 {
        return Err(Error::InsufficientSamples(
            "all exits are on one side".into(),
        ));
    }
    let mut merged: Vec<[f64; 2]> = Vec::new();
    let mut pending = [0.0; 2];
    for c in counts {
        pending[0] += c[0];
        pending[1] += c[1];
        if (pending[0] + pending[1]) * min_side >= MIN_EXPECTED {
            merged.push(pending);
            pending = [0.0; 2];
        }
    }
    if pending[0] + pending[1] > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last[0] += pending[0];
                last[1] += pending[1];
            }
            None => merged.push(pending),
        }
    }
    if merged.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{n} exits leave fewer than two time bins with 20 expected per cell"
        )));
    }

    let total = n as f64;
    let mut statistic = 0.0;
    for row in &merged {
        let row_total = row[0] + row[1];
        for (side, &observed) in row.iter().enumerate() {
            let expected = row_total * side_totals[side] / total;
            statistic += (observed - expected).powi(2) / expected;
        }
    }
    let dof = merged.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid("dof", e.to_string()))?;
    Ok(IndependenceTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
        bins: merged.len(),
        samples: n,
        censored_excluded,
    })
}

/// Parameters of a coupled run of `dY = 2√Y dW + (1 + 2λ√Y tanh(λ√Y)) dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledSpec {
    /// Non-decreasing, nonnegative drifts sharing one driver `W`.
    pub lambdas: Vec<f64>,
    pub y0: f64,
    /// Hitting level is `b²`.
    pub b: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
}

impl CoupledSpec {
    fn validate(&self) -> Result<()> {
        check_time_grid(self.dt, self.horizon)?;
        if self.lambdas.is_empty() {
            return Err(Error::invalid("lambdas", "need at least one drift"));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid(
                "lambdas",
                "drifts must be finite and nonnegative",
            ));
        }
        if self.lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("lambdas", "drifts must be sorted ascending"));
        }
        if !(self.y0 >= 0.0 && self.y0.is_finite()) {
            return Err(Error::invalid(
                "y0",
                format!("initial value {} must be nonnegative", self.y0),
            ));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid(
                "b",
                format!("barrier {} must be positive", self.b),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "need at least one path"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingSummary {
    pub lambda: f64,
    /// `E[min(T_hit, horizon)]`.
    pub restricted_mean: Estimate,
    pub hit_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledBatch {
    pub spec: CoupledSpec,
    pub rng: RngStreamSpec,
    pub steps: usize,
    /// Fraction of (path, step) pairs where some adjacent pair has
    /// `Y^{λ_i} > Y^{λ_{i+1}} + 10·√dt·2√max(Y)`.
    pub violation_fraction: f64,
    /// Same with zero tolerance.
    pub raw_violation_fraction: f64,
    /// Largest `Y^{λ_i} − Y^{λ_{i+1}}` seen (≤ 0 when never out of order).
    pub max_excess: f64,
    pub hitting: Vec<HittingSummary>,
    /// `hitting_times[l][path]`, `+∞` when the level was not reached.
    pub hitting_times: Vec<Vec<f64>>,
    /// `trajectories[path][l]` for the first recorded paths, `steps + 1` values each.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectories: Vec<Vec<Vec<f64>>>,
}

struct CoupledPartial {
    tolerant_steps: u64,
    raw_steps: u64,
    max_excess: f64,
    hitting: Vec<Vec<f64>>,
    trajectories: Vec<Vec<Vec<f64>>>,
}

fn coupled_batch<R: Rng>(
    rng: &mut R,
    spec: &CoupledSpec,
    size: usize,
    record: usize,
) -> CoupledPartial {
    let m = spec.lambdas.len();
    let steps = step_count(spec.dt, spec.horizon);
    let level = spec.b * spec.b;
    let mut out = CoupledPartial {
        tolerant_steps: 0,
        raw_steps: 0,
        max_excess: f64::NEG_INFINITY,
        hitting: vec![Vec::with_capacity(size); m],
        trajectories: Vec::with_capacity(record),
    };
    let mut y = vec![0.0f64; m];
    let mut hit = vec![f64::INFINITY; m];
    for path in 0..size {
        y.iter_mut().for_each(|v| *v = spec.y0);
        hit.iter_mut()
            .for_each(|v| *v = if spec.y0 >= level { 0.0 } else { f64::INFINITY });
        let recording = path < record;
        let mut traj: Vec<Vec<f64>> = if recording {
            (0..m).map(|_| vec![spec.y0]).collect()
        } else {
            Vec::new()
        };
        for i in 0..steps {
            let h = step_length(i, spec.dt, spec.horizon);
            let z: f64 = rng.sample(StandardNormal);
            let dw = h.sqrt() * z;
            let t = if i + 1 == steps {
                spec.horizon
            } else {
                (i + 1) as f64 * spec.dt
            };
            for (l, &lambda) in spec.lambdas.iter().enumerate() {
                let cur = y[l].max(0.0);
                let next = cur + drift_y_unchecked(lambda, cur) * h + 2.0 * cur.sqrt() * dw;
                y[l] = next.max(0.0);
                if hit[l].is_infinite() && y[l] >= level {
                    hit[l] = t;
                }
            }
            let (mut raw, mut tolerant) = (false, false);
            for w in y.windows(2) {
                let excess = w[0] - w[1];
                out.max_excess = out.max_excess.max(excess);
                if excess > 0.0 {
                    raw = true;
                    let tol = 10.0 * h.sqrt() * 2.0 * w[0].max(w[1]).sqrt();
                    tolerant |= excess > tol;
                }
            }
            out.raw_steps += u64::from(raw);
            out.tolerant_steps += u64::from(tolerant);
            if recording {
                for (l, v) in y.iter().enumerate() {
                    traj[l].push(*v);
                }
            }
        }
        for (times, h) in out.hitting.iter_mut().zip(&hit) {
            times.push(*h);
        }
        if recording {
            out.trajectories.push(traj);
        }
    }
    out
}

/// Simulates the squared-modulus SDE for several drifts with one shared
/// driver, by full-truncation Euler with the state clamped at 0.
///
/// Ordering between adjacent drifts is monitored at every step, and the first
/// time each trajectory reaches `b²` is recorded. The first `record_paths`
/// paths are kept in full.
pub fn simulate_y_coupled(
    spec: &CoupledSpec,
    rng: RngStreamSpec,
    record_paths: usize,
) -> Result<CoupledBatch> {
    spec.validate()?;
    let m = spec.lambdas.len();
    let steps = step_count(spec.dt, spec.horizon);
    let partials: Vec<CoupledPartial> = batch_sizes(spec.n_paths, COUPLED_BATCH)
        .map(|(batch, size)| {
            let first = batch as usize * COUPLED_BATCH;
            let record = record_paths.saturating_sub(first).min(size);
            coupled_batch(&mut rng.batch_rng(batch), spec, size, record)
        })
        .collect();

    let mut tolerant = 0u64;
    let mut raw = 0u64;
    let mut max_excess = f64::NEG_INFINITY;
    let mut hitting_times = vec![Vec::with_capacity(spec.n_paths); m];
    let mut trajectories = Vec::new();
    for p in partials {
        tolerant += p.tolerant_steps;
        raw += p.raw_steps;
        max_excess = max_excess.max(p.max_excess);
        for (all, part) in hitting_times.iter_mut().zip(p.hitting) {
            all.extend(part);
        }
        trajectories.extend(p.trajectories);
    }
    let checks = (spec.n_paths * steps) as f64;
    let hitting = spec
        .lambdas
        .iter()
        .zip(&hitting_times)
        .map(|(&lambda, times)| HittingSummary {
            lambda,
            restricted_mean: Estimate::of(times.iter().map(|&t| t.min(spec.horizon))),
            hit_fraction: times.iter().filter(|t| t.is_finite()).count() as f64
                / times.len() as f64,
        })
        .collect();
    Ok(CoupledBatch {
        spec: spec.clone(),
        rng,
        steps,
        violation_fraction: if m > 1 { tolerant as f64 / checks } else { 0.0 },
        raw_violation_fraction: if m > 1 { raw as f64 / checks } else { 0.0 },
        max_excess: if m > 1 { max_excess } else { 0.0 },
        hitting,
        hitting_times,
        trajectories,
    })
}
