//! Change of measure between biased-walk laws.
//!
//! On `F_n` the density of the `p_to` walk against the `p_from` walk is
//! `r^n · z^{S_n}` with `r = √(p_to q_to / (p_from q_from))` and
//! `z = √(p_to q_from / (p_from q_to))`. Because `n + S_n` is even this equals
//! `(p_to/p_from)^{(n+S_n)/2} (q_to/q_from)^{(n−S_n)/2}`, which is rational for
//! rational biases, so every identity here can also be checked exactly.

use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rw_exact::{exit_joint, hit_upper_from, survival_pmf, JointExitTable, WalkSpec};
use crate::scalar::{Bias, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct WalkLikelihoodRatio<T> {
    pub steps: u64,
    pub position: i64,
    pub p_from: Bias,
    pub p_to: Bias,
    pub value: T,
}

fn check_path(n: u64, s: i64) -> Result<(u64, u64)> {
    if s.unsigned_abs() > n {
        return Err(Error::invalid("s", format!("|{s}| exceeds step count {n}")));
    }
    if (n as i64 - s).rem_euclid(2) != 0 {
        return Err(Error::invalid(
            "s",
            format!("position {s} has the wrong parity for {n} steps"),
        ));
    }
    let up = (n as i64 + s) / 2;
    Ok((up as u64, n - up as u64))
}

/// Density of the `p_to` walk against the `p_from` walk on `F_n` at `S_n = s`.
pub fn likelihood_ratio_walk<T: Scalar>(
    n: u64,
    s: i64,
    p_from: &Bias,
    p_to: &Bias,
) -> Result<WalkLikelihoodRatio<T>> {
    let (up, down) = check_path(n, s)?;
    let from = T::from_bias(p_from)?;
    let to = T::from_bias(p_to)?;
    Ok(WalkLikelihoodRatio {
        steps: n,
        position: s,
        p_from: p_from.clone(),
        p_to: p_to.clone(),
        value: T::path_ratio(up, down, &from, &to),
    })
}

/// `r = √(p₂q₂/(p₁q₁))`, the per-step factor of the density.
pub fn step_factor(p_from: &Bias, p_to: &Bias) -> f64 {
    let (p1, p2) = (p_from.value(), p_to.value());
    ((p2 * (1.0 - p2)) / (p1 * (1.0 - p1))).sqrt()
}

/// `z = √(p₂q₁/(p₁q₂))`, the per-unit-displacement factor of the density.
pub fn position_factor(p_from: &Bias, p_to: &Bias) -> f64 {
    let (p1, p2) = (p_from.value(), p_to.value());
    ((p2 * (1.0 - p1)) / (p1 * (1.0 - p2))).sqrt()
}

/// Deviation of the one-step martingale identity
/// `E_{1/2}[(√(p/q))^X] = 1/(2√(pq))`.
///
/// The float backend evaluates both sides directly. The exact backend
/// compares their squares, `(p/q + q/p + 2)/4` against `1/(4pq)`, which are
/// rational and determine the (positive) sides.
pub fn martingale_one_step_check<T: Scalar>(p: &Bias) -> Result<T> {
    let pv = T::from_bias(p)?;
    let qv = T::one() - pv.clone();
    match T::MODE {
        crate::scalar::Arith::Float => {
            let (p, q) = (pv.to_f64(), qv.to_f64());
            let lhs = 0.5 * ((p / q).sqrt() + (q / p).sqrt());
            let rhs = 1.0 / (2.0 * (p * q).sqrt());
            Ok(T::from_f64_lossy((lhs - rhs).abs()))
        }
        crate::scalar::Arith::Exact => {
            let four = T::from_int(4);
            let lhs_sq =
                (pv.clone() / qv.clone() + qv.clone() / pv.clone() + T::from_int(2)) / four.clone();
            let rhs_sq = T::one() / (four * pv * qv);
            Ok(lhs_sq.abs_diff(&rhs_sq))
        }
    }
}

/// The reweighted estimate of `Q_{p_to}(σ > n)` and its truncation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightedSurvival<T> {
    pub n: u64,
    pub estimate: T,
    /// Rigorous bound on the mass beyond the truncation step.
    pub tail_bound: f64,
    /// Set when `tail_bound` exceeds the caller's tolerance.
    pub tail_warning: bool,
}

/// Interior mass below this is not trusted to the f64 norms of the tail bound.
const TAIL_MASS_FLOOR: f64 = 1e-200;

/// Bound on `Σ_{m > N} r^m · P(σ = m)` under `spec`.
///
/// For `r ≤ 1` this is `r^N · P(σ > N)`. For `r > 1` the geometric decay of
/// the interior mass is used: with `d_x = (p/q)^{x/2}` the interior transition
/// is similar to a symmetric tridiagonal matrix of spectral radius
/// `ρ = 2√(pq)·cos(π/2k)`, so `P(σ > N + j) ≤ ‖d‖·‖D⁻¹u_N‖·ρ^j`, and
/// `r·ρ = 2√(p_to q_to)·cos(π/2k) < 1` makes the series summable.
fn time_weight_tail<T: Scalar>(spec: &WalkSpec, table: &JointExitTable<T>, r: f64) -> f64 {
    let n_trunc = table.horizon as f64;
    let survival = table.residual[table.horizon as usize].to_f64();
    if survival == 0.0 {
        return 0.0;
    }
    if r <= 1.0 {
        return (n_trunc * r.ln()).exp() * survival;
    }
    let p = spec.p().value();
    let q = 1.0 - p;
    let k = spec.k() as i64;
    let half_log_ratio = 0.5 * (p / q).ln();
    let mut d_norm_sq = 0.0;
    let mut v = Vec::with_capacity(table.interior.len());
    for (i, mass) in table.interior.iter().enumerate() {
        let x = i as i64 - (k - 1);
        let log_d = half_log_ratio * x as f64;
        d_norm_sq += (2.0 * log_d).exp();
        v.push(mass.to_f64() * (-log_d).exp());
    }
    // scaled so tiny masses do not underflow when squared
    let scale = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let v_norm_sq = v.iter().map(|x| (x / scale).powi(2)).sum::<f64>();
    let rho = 2.0 * (p * q).sqrt() * (std::f64::consts::PI / (2.0 * k as f64)).cos();
    let contraction = r * rho;
    debug_assert!(contraction < 1.0);
    let log_bound = 0.5 * (d_norm_sq.ln() + v_norm_sq.ln()) + scale.ln() + (n_trunc + 1.0) * r.ln()
        - (1.0 - contraction).ln();
    log_bound.exp()
}

/// Reweighted survival for every `n = 0..=horizon` from one `p_from` table.
pub fn reweighted_survival_curve<T: Scalar>(
    p_from: &Bias,
    p_to: &Bias,
    k: u32,
    horizon: u64,
    truncation: u64,
    tolerance: Option<f64>,
) -> Result<Vec<ReweightedSurvival<T>>> {
    if truncation <= horizon {
        return Err(Error::invalid(
            "truncation",
            format!("truncation {truncation} must exceed n = {horizon}"),
        ));
    }
    let spec = WalkSpec::new(p_from.clone(), k)?;
    // validates p_to for the requested backend
    let from = T::from_bias(p_from)?;
    let to = T::from_bias(p_to)?;
    let r = step_factor(p_from, p_to);
    let mut table = exit_joint::<T>(&spec, truncation.max(k as u64))?;
    if r > 1.0 {
        // r^m outgrows the exit mass only through the tail bound, which reads
        // the interior vector in f64; stop before that vector underflows
        let usable = table
            .residual
            .iter()
            .rposition(|m| m.to_f64() >= TAIL_MASS_FLOOR)
            .unwrap_or(0) as u64;
        let cut = usable.max(horizon + 1).max(k as u64);
        if cut < table.horizon {
            log::debug!("exit table truncated at {cut} instead of {truncation} to avoid underflow");
            table = exit_joint::<T>(&spec, cut)?;
        }
    }
    let last = table.horizon as usize;

    // weights[m] = r^m z^k P(σ=m, +k) + r^m z^{-k} P(σ=m, −k)
    let kk = k as u64;
    let mut suffix = vec![T::zero(); last + 2];
    for m in (1..=last).rev() {
        let mut w = T::zero();
        let mu = m as u64;
        if mu >= kk && (mu - kk).is_multiple_of(2) {
            let (hi_up, hi_down) = ((mu + kk) / 2, (mu - kk) / 2);
            if !table.upper[m].is_zero() {
                w = w + T::path_ratio(hi_up, hi_down, &from, &to) * table.upper[m].clone();
            }
            if !table.lower[m].is_zero() {
                w = w + T::path_ratio(hi_down, hi_up, &from, &to) * table.lower[m].clone();
            }
        }
        suffix[m] = suffix[m + 1].clone() + w;
    }

    let z = position_factor(p_from, p_to);
    let side_max = (k as f64 * z.ln().abs()).exp();
    let tail_bound = side_max * time_weight_tail(&spec, &table, r);
    let tail_warning = tolerance.is_some_and(|tol| tail_bound > tol);
    if tail_warning {
        log::warn!(
            "reweighting tail bound {tail_bound:e} exceeds tolerance {:e} (truncation {truncation})",
            tolerance.unwrap_or_default()
        );
    }

    Ok((0..=horizon)
        .map(|n| ReweightedSurvival {
            n,
            estimate: suffix[n as usize + 1].clone(),
            tail_bound,
            tail_warning,
        })
        .collect())
}

/// `Q_{p_to}(σ > n)` as `E_{p_from}[r^σ z^{S_σ} 1{σ>n}]`, summed over the
/// `p_from` exit table through `truncation`.
pub fn reweighted_survival_walk<T: Scalar>(
    p_from: &Bias,
    p_to: &Bias,
    k: u32,
    n: u64,
    truncation: u64,
    tolerance: Option<f64>,
) -> Result<ReweightedSurvival<T>> {
    let mut curve = reweighted_survival_curve::<T>(p_from, p_to, k, n, truncation, tolerance)?;
    Ok(curve.pop().expect("curve covers n"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationCheck {
    pub n: u64,
    /// `Q_{p2}(σ > n)` from the direct table.
    pub direct: f64,
    /// `E[r^σ | σ>n] / E[r^σ] · Q_{p1}(σ > n)` under `p1`.
    pub factorized: f64,
    pub deviation: f64,
    /// Bound on the truncation error of `factorized`.
    pub tail_bound: f64,
}

fn check_ordered(p1: &Bias, p2: &Bias) -> Result<()> {
    if p1.value() < 0.5 {
        return Err(Error::invalid("p1", format!("{p1} is below 1/2")));
    }
    if p2.value() <= p1.value() {
        return Err(Error::invalid("p2", format!("{p2} must exceed p1 = {p1}")));
    }
    Ok(())
}

/// Both sides of the survival factorization for every `n = 0..=horizon`.
pub fn factorization_curve(
    p1: &Bias,
    p2: &Bias,
    k: u32,
    horizon: u64,
    truncation: u64,
) -> Result<Vec<FactorizationCheck>> {
    check_ordered(p1, p2)?;
    if truncation <= horizon {
        return Err(Error::invalid(
            "truncation",
            format!("truncation {truncation} must exceed n = {horizon}"),
        ));
    }
    let r = step_factor(p1, p2);
    assert!(r < 1.0, "step factor {r} must contract for 1/2 ≤ p1 < p2");

    let spec1 = WalkSpec::new(p1.clone(), k)?;
    let spec2 = WalkSpec::new(p2.clone(), k)?;
    let table = exit_joint::<f64>(&spec1, truncation.max(k as u64))?;
    let direct = survival_pmf::<f64>(&spec2, horizon)?;

    let log_r = r.ln();
    let mut suffix = vec![0.0; table.horizon as usize + 2];
    for m in (1..=table.horizon as usize).rev() {
        suffix[m] = suffix[m + 1] + (m as f64 * log_r).exp() * table.exit_at(m as u64);
    }
    let tail = time_weight_tail(&spec1, &table, r);
    let total = suffix[1];

    Ok((0..=horizon)
        .map(|n| {
            let alive = table.residual[n as usize];
            let weighted_alive = suffix[n as usize + 1];
            let factorized = if alive > 0.0 {
                let conditional = weighted_alive / alive;
                conditional / total * alive
            } else {
                0.0
            };
            let d = direct.values[n as usize];
            FactorizationCheck {
                n,
                direct: d,
                factorized,
                deviation: (d - factorized).abs(),
                tail_bound: tail * (1.0 + factorized) / total,
            }
        })
        .collect())
}

/// Largest discrepancy of the survival factorization over `n = 0..=horizon`.
pub fn factorization_check_discrete(
    p1: &Bias,
    p2: &Bias,
    k: u32,
    n: u64,
    truncation: u64,
) -> Result<FactorizationCheck> {
    let mut curve = factorization_curve(p1, p2, k, n, truncation)?;
    Ok(curve.pop().expect("curve covers n"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceCheck<T> {
    /// `max_n |P(σ=n, S_σ=+k) − P(σ=n)·P(S_σ=+k)|`.
    pub max_deviation: T,
    pub worst_step: u64,
    /// `P(S_σ = +k)`, exact: truncated sum plus the exit-side law of the
    /// interior mass left at the truncation step.
    pub exit_upper: T,
    /// Interior mass at the truncation step.
    pub residual: T,
}

/// Checks that the exit step and exit side are independent.
pub fn check_independence_discrete<T: Scalar>(
    spec: &WalkSpec,
    truncation: u64,
) -> Result<IndependenceCheck<T>> {
    let table = exit_joint::<T>(spec, truncation)?;
    let from_interior = hit_upper_from::<T>(spec)?;
    let absorbed = table.upper.iter().fold(T::zero(), |a, x| a + x.clone());
    let pending = table
        .interior
        .iter()
        .zip(&from_interior)
        .fold(T::zero(), |a, (m, h)| a + m.clone() * h.clone());
    let exit_upper = absorbed + pending;

    let mut max_deviation = T::zero();
    let mut worst_step = 0;
    for n in 0..=truncation {
        let joint = &table.upper[n as usize];
        let product = table.exit_at(n) * exit_upper.clone();
        let dev = joint.abs_diff(&product);
        if dev > max_deviation {
            max_deviation = dev;
            worst_step = n;
        }
    }
    Ok(IndependenceCheck {
        max_deviation,
        worst_step,
        exit_upper,
        residual: table.residual[truncation as usize].clone(),
    })
}

/// Exact `P(S_σ = +k) = p^k / (p^k + q^k)`, for cross-checks.
pub fn exit_upper_closed_form(spec: &WalkSpec) -> Result<BigRational> {
    let p = BigRational::from_bias(spec.p())?;
    let q = BigRational::one() - &p;
    let k = spec.k() as usize;
    let pk = num_traits::pow(p, k);
    Ok(&pk / (&pk + num_traits::pow(q, k)))
}
