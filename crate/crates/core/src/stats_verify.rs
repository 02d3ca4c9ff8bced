//! Dominance certification shared by the walk and Brownian halves.
//!
//! Exact scans compare survival curves pointwise; Monte Carlo data is compared
//! only through simultaneous Dvoretzky-Kiefer-Wolfowitz bands.

use std::fmt::{self, Write as _};

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rw_exact::{survival_pmf, WalkSpec};
use crate::scalar::{Arith, Bias, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Dominates,
    Violates,
    #[serde(rename = "inconclusive-within-noise")]
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Dominates => "dominates",
            Verdict::Violates => "violates",
            Verdict::Inconclusive => "inconclusive-within-noise",
        })
    }
}

/// One grid point of an adjacent-pair comparison. The smaller parameter is
/// expected to have the larger survival value.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    /// `survival(larger parameter) − survival(smaller parameter)`; positive
    /// means the expected ordering fails.
    pub excess: f64,
    pub verdict: Verdict,
    pub smaller_param_value: String,
    pub larger_param_value: String,
}

impl PairComparison {
    pub fn from_floats(smaller_param: f64, larger_param: f64, tie_tolerance: f64) -> Self {
        let excess = larger_param - smaller_param;
        PairComparison {
            excess,
            verdict: if excess > tie_tolerance {
                Verdict::Violates
            } else {
                Verdict::Dominates
            },
            smaller_param_value: smaller_param.render(),
            larger_param_value: larger_param.render(),
        }
    }

    fn from_exact(smaller_param: &BigRational, larger_param: &BigRational) -> Self {
        let diff = larger_param - smaller_param;
        PairComparison {
            excess: Scalar::to_f64(&diff),
            verdict: if larger_param > smaller_param {
                Verdict::Violates
            } else {
                Verdict::Dominates
            },
            smaller_param_value: smaller_param.render(),
            larger_param_value: larger_param.render(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVerdict {
    pub smaller: String,
    pub larger: String,
    pub verdict: Verdict,
    /// Largest `excess` over the index grid (non-positive when ordered).
    pub worst_excess: f64,
    pub worst_index: f64,
    /// Float comparison was re-run in exact arithmetic.
    pub escalated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub pair: usize,
    pub index: f64,
    pub smaller_param_value: String,
    pub larger_param_value: String,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub parameter: &'static str,
    pub grid: Vec<String>,
    pub index_name: &'static str,
    pub index: Vec<f64>,
    pub mode: Arith,
    /// `values[i][j]`: survival at `grid[i]`, `index[j]`.
    pub values: Vec<Vec<f64>>,
    pub pairs: Vec<PairVerdict>,
    pub violations: Vec<Violation>,
}

/// Axes and values of a dominance scan before comparison.
pub(crate) struct ScanGrid {
    pub parameter: &'static str,
    pub labels: Vec<String>,
    pub index_name: &'static str,
    pub index: Vec<f64>,
    pub mode: Arith,
    pub values: Vec<Vec<f64>>,
}

impl DominanceReport {
    pub(crate) fn assemble(
        grid: ScanGrid,
        comparisons: Vec<Vec<PairComparison>>,
        escalated: Vec<bool>,
    ) -> Self {
        let mut pairs = Vec::with_capacity(comparisons.len());
        let mut violations = Vec::new();
        for (i, row) in comparisons.into_iter().enumerate() {
            let mut verdict = Verdict::Dominates;
            let mut worst_excess = f64::NEG_INFINITY;
            let mut worst_index = f64::NAN;
            for (j, c) in row.into_iter().enumerate() {
                if c.excess > worst_excess {
                    worst_excess = c.excess;
                    worst_index = grid.index[j];
                }
                match c.verdict {
                    Verdict::Violates => {
                        verdict = Verdict::Violates;
                        violations.push(Violation {
                            pair: i,
                            index: grid.index[j],
                            smaller_param_value: c.smaller_param_value,
                            larger_param_value: c.larger_param_value,
                            excess: c.excess,
                        });
                    }
                    Verdict::Inconclusive if verdict == Verdict::Dominates => {
                        verdict = Verdict::Inconclusive;
                    }
                    _ => {}
                }
            }
            pairs.push(PairVerdict {
                smaller: grid.labels[i].clone(),
                larger: grid.labels[i + 1].clone(),
                verdict,
                worst_excess,
                worst_index,
                escalated: escalated.get(i).copied().unwrap_or(false),
            });
        }
        DominanceReport {
            parameter: grid.parameter,
            grid: grid.labels,
            index_name: grid.index_name,
            index: grid.index,
            mode: grid.mode,
            values: grid.values,
            pairs,
            violations,
        }
    }

    /// True when no pair violates or is inconclusive.
    pub fn is_consistent(&self) -> bool {
        self.pairs.iter().all(|p| p.verdict == Verdict::Dominates)
    }

    pub fn worst_violation(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .max_by(|a, b| a.excess.total_cmp(&b.excess))
    }

    /// Aligned human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .grid
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(1)
            .max(self.parameter.len());
        let _ = writeln!(
            out,
            "dominance scan over {} ({} mode, {} {} points)",
            self.parameter,
            self.mode,
            self.index.len(),
            self.index_name
        );
        let _ = writeln!(
            out,
            "{:>width$}  {:>width$}  {:<26}  {:>12}  {:>10}",
            "from", "to", "verdict", "worst", "at",
        );
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{:>width$}  {:>width$}  {:<26}  {:>12.3e}  {:>10}{}",
                p.smaller,
                p.larger,
                p.verdict.to_string(),
                p.worst_excess,
                p.worst_index,
                if p.escalated { "  (exact recheck)" } else { "" },
            );
        }
        for v in &self.violations {
            let _ = writeln!(
                out,
                "violation: pair {} at {}={}: {} < {}",
                v.pair, self.index_name, v.index, v.smaller_param_value, v.larger_param_value
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailMeanCheck<T> {
    pub conditional: T,
    pub unconditional: T,
    pub holds: bool,
}

/// `E[X | X ≤ M] ≤ E[X]` for a finite distribution given as `(value, weight)`.
pub fn tail_conditional_mean_check<T: Scalar>(
    pmf: &[(T, T)],
    threshold: &T,
) -> Result<TailMeanCheck<T>> {
    if pmf.iter().any(|(_, w)| *w < T::zero()) {
        return Err(Error::invalid("pmf", "weights must be nonnegative"));
    }
    let total = pmf.iter().fold(T::zero(), |a, (_, w)| a + w.clone());
    let (event, event_mass) = pmf
        .iter()
        .filter(|(x, _)| x <= threshold)
        .fold((T::zero(), T::zero()), |(s, m), (x, w)| {
            (s + x.clone() * w.clone(), m + w.clone())
        });
    if event_mass.is_zero() || total.is_zero() {
        return Err(Error::invalid(
            "threshold",
            "conditioning event has zero probability",
        ));
    }
    let sum = pmf
        .iter()
        .fold(T::zero(), |a, (x, w)| a + x.clone() * w.clone());
    let conditional = event / event_mass;
    let unconditional = sum / total;
    let holds = conditional.le_within_rounding(&unconditional);
    Ok(TailMeanCheck {
        conditional,
        unconditional,
        holds,
    })
}

/// Sample version of [`tail_conditional_mean_check`] with equal weights.
pub fn tail_conditional_mean_samples(
    samples: &[f64],
    threshold: f64,
) -> Result<TailMeanCheck<f64>> {
    let pmf: Vec<(f64, f64)> = samples.iter().map(|&x| (x, 1.0)).collect();
    tail_conditional_mean_check(&pmf, &threshold)
}

fn check_bias_grid(ps: &[Bias]) -> Result<()> {
    if ps.iter().any(|p| p.value() < 0.5) {
        return Err(Error::invalid("ps", "biases must lie in [1/2, 1)"));
    }
    if ps.windows(2).any(|w| w[0].value() >= w[1].value()) {
        return Err(Error::invalid("ps", "biases must be strictly ascending"));
    }
    Ok(())
}

fn exact_curves(ps: &[Bias], k: u32, horizon: u64) -> Result<Vec<Vec<BigRational>>> {
    ps.par_iter()
        .map(|p| Ok(survival_pmf::<BigRational>(&WalkSpec::new(p.clone(), k)?, horizon)?.values))
        .collect()
}

fn exact_comparisons(curves: &[Vec<BigRational>], pair: usize) -> Vec<PairComparison> {
    curves[pair]
        .iter()
        .zip(&curves[pair + 1])
        .map(|(a, b)| PairComparison::from_exact(a, b))
        .collect()
}

/// Pairwise comparison of walk survival curves along an ascending bias grid
/// in [1/2, 1).
///
/// In float mode any apparent violation is recomputed exactly when both
/// biases are exact; otherwise violations within rounding are reported as
/// inconclusive.
pub fn dominance_scan_discrete(
    ps: &[Bias],
    k: u32,
    horizon: u64,
    mode: Arith,
) -> Result<DominanceReport> {
    check_bias_grid(ps)?;
    let labels: Vec<String> = ps.iter().map(Bias::to_string).collect();
    let index: Vec<f64> = (0..=horizon).map(|n| n as f64).collect();
    let pairs = ps.len().saturating_sub(1);

    let (values, comparisons, escalated) = match mode {
        Arith::Exact => {
            let curves = exact_curves(ps, k, horizon)?;
            let values = curves
                .iter()
                .map(|c| c.iter().map(Scalar::to_f64).collect())
                .collect();
            let comparisons = (0..pairs).map(|i| exact_comparisons(&curves, i)).collect();
            (values, comparisons, vec![false; pairs])
        }
        Arith::Float => {
            let curves: Vec<Vec<f64>> = ps
                .par_iter()
                .map(|p| Ok(survival_pmf::<f64>(&WalkSpec::new(p.clone(), k)?, horizon)?.values))
                .collect::<Result<_>>()?;
            let mut comparisons = Vec::with_capacity(pairs);
            let mut escalated = vec![false; pairs];
            for i in 0..pairs {
                let row: Vec<PairComparison> = curves[i]
                    .iter()
                    .zip(&curves[i + 1])
                    .map(|(&a, &b)| PairComparison::from_floats(a, b, 0.0))
                    .collect();
                if row.iter().all(|c| c.verdict == Verdict::Dominates) {
                    comparisons.push(row);
                } else if ps[i].is_exact() && ps[i + 1].is_exact() {
                    let exact = exact_curves(&ps[i..=i + 1], k, horizon)?;
                    comparisons.push(exact_comparisons(&exact, 0));
                    escalated[i] = true;
                } else {
                    let row = row
                        .into_iter()
                        .zip(curves[i].iter().zip(&curves[i + 1]))
                        .map(|(mut c, (&a, &b))| {
                            if c.verdict == Verdict::Violates
                                && c.excess <= 1e-12 * a.abs().max(b.abs())
                            {
                                c.verdict = Verdict::Inconclusive;
                            }
                            c
                        })
                        .collect();
                    comparisons.push(row);
                }
            }
            (curves, comparisons, escalated)
        }
    };

    Ok(DominanceReport::assemble(
        ScanGrid {
            parameter: "p",
            labels,
            index_name: "n",
            index,
            mode,
            values,
        },
        comparisons,
        escalated,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    /// The first sample is stochastically larger.
    FirstDominates,
    SecondDominates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmpiricalVerdict {
    ConsistentWithDominance,
    Violates,
    #[serde(rename = "inconclusive-within-noise")]
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDominance {
    pub verdict: EmpiricalVerdict,
    /// `sup_t (Ŝ_dominated(t) − Ŝ_dominant(t))`, zero or positive.
    pub wrong_way_gap: f64,
    /// Where the gap is attained.
    pub at: f64,
    /// One-sided DKW half-widths for the claimed dominant and dominated samples.
    pub band_dominant: f64,
    pub band_dominated: f64,
}

/// One-sided DKW half-width at level `alpha`: `√(ln(1/alpha) / 2n)`.
pub fn dkw_half_width(n: usize, alpha: f64) -> f64 {
    ((1.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Compares empirical survival functions of two samples against a claimed
/// stochastic ordering.
///
/// Each survival function gets a one-sided DKW band at level `(1−confidence)/2`
/// so the two bands hold simultaneously. With `g` the largest wrong-way gap:
/// `g ≤ min(ε₁, ε₂)` (each curve inside the other's band) is consistent,
/// `g > ε₁ + ε₂` (bands separate) violates, anything between is inconclusive.
pub fn empirical_dominance_test(
    samples_a: &[f64],
    samples_b: &[f64],
    confidence: f64,
    claim: Claim,
) -> Result<EmpiricalDominance> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(
            "confidence",
            format!("{confidence} is outside (0, 1)"),
        ));
    }
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InsufficientSamples(
            "both samples must be non-empty".into(),
        ));
    }
    let (dominant, dominated) = match claim {
        Claim::FirstDominates => (sorted(samples_a), sorted(samples_b)),
        Claim::SecondDominates => (sorted(samples_b), sorted(samples_a)),
    };
    let alpha = 0.5 * (1.0 - confidence);
    let eps_dominant = dkw_half_width(dominant.len(), alpha);
    let eps_dominated = dkw_half_width(dominated.len(), alpha);

    // Ŝ(t) = #{x > t} / n, evaluated at every jump point of either sample
    let (na, nb) = (dominant.len() as f64, dominated.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut gap = 0.0f64;
    let mut at = f64::NEG_INFINITY;
    while i < dominant.len() || j < dominated.len() {
        let t = match (dominant.get(i), dominated.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < dominant.len() && dominant[i] <= t {
            i += 1;
        }
        while j < dominated.len() && dominated[j] <= t {
            j += 1;
        }
        let s_dom = (dominant.len() - i) as f64 / na;
        let s_sub = (dominated.len() - j) as f64 / nb;
        if s_sub - s_dom > gap {
            gap = s_sub - s_dom;
            at = t;
        }
    }

    let verdict = if gap > eps_dominant + eps_dominated {
        EmpiricalVerdict::Violates
    } else if gap <= eps_dominant.min(eps_dominated) {
        EmpiricalVerdict::ConsistentWithDominance
    } else {
        EmpiricalVerdict::Inconclusive
    };
    Ok(EmpiricalDominance {
        verdict,
        wrong_way_gap: gap,
        at,
        band_dominant: eps_dominant,
        band_dominated: eps_dominated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biases(xs: &[f64]) -> Vec<Bias> {
        xs.iter().map(|&x| Bias::new(x).unwrap()).collect()
    }

    #[test]
    fn tail_mean_examples() {
        let c = tail_conditional_mean_check(&[(3.0, 1.0)], &3.0).unwrap();
        assert_eq!((c.conditional, c.unconditional, c.holds), (3.0, 3.0, true));
        let pmf = [(1.0, 0.25), (2.0, 0.25), (3.0, 0.25), (4.0, 0.25)];
        let c = tail_conditional_mean_check(&pmf, &2.0).unwrap();
        assert_eq!((c.conditional, c.unconditional), (1.5, 2.5));
        assert!(c.holds);
        assert!(tail_conditional_mean_check(&pmf, &0.5).is_err());
        assert!(tail_conditional_mean_check(&[(1.0, -1.0)], &2.0).is_err());
    }

    #[test]
    fn discrete_scan_examples() {
        let r = dominance_scan_discrete(&biases(&[0.5]), 3, 10, Arith::Exact).unwrap();
        assert!(r.pairs.is_empty());
        let r = dominance_scan_discrete(&biases(&[0.5, 0.6, 0.7, 0.8, 0.9]), 3, 200, Arith::Exact)
            .unwrap();
        assert_eq!(r.pairs.len(), 4);
        assert!(r.pairs.iter().all(|p| p.verdict == Verdict::Dominates));
        assert!(dominance_scan_discrete(&biases(&[0.4, 0.6]), 3, 10, Arith::Exact).is_err());
        assert!(dominance_scan_discrete(&biases(&[0.7, 0.6]), 3, 10, Arith::Exact).is_err());
    }

    #[test]
    fn discrete_scan_mirror_matches() {
        let low = biases(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        let mirrored: Vec<Bias> = low.iter().rev().map(Bias::complement).collect();
        let direct = biases(&[0.5, 0.6, 0.7, 0.8, 0.9]);
        let a = dominance_scan_discrete(&mirrored, 3, 60, Arith::Exact).unwrap();
        let b = dominance_scan_discrete(&direct, 3, 60, Arith::Exact).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_examples() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let same = empirical_dominance_test(&xs, &xs, 0.99, Claim::FirstDominates).unwrap();
        assert_eq!(same.verdict, EmpiricalVerdict::ConsistentWithDominance);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        let ok = empirical_dominance_test(&shifted, &xs, 0.99, Claim::FirstDominates).unwrap();
        assert_eq!(ok.verdict, EmpiricalVerdict::ConsistentWithDominance);
        let bad = empirical_dominance_test(&xs, &shifted, 0.99, Claim::FirstDominates).unwrap();
        assert_eq!(bad.verdict, EmpiricalVerdict::Violates);
        assert!(empirical_dominance_test(&xs, &xs, 1.0, Claim::FirstDominates).is_err());
        assert!(empirical_dominance_test(&[], &xs, 0.9, Claim::FirstDominates).is_err());
    }

    #[test]
    fn empirical_inconclusive_band() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let eps = dkw_half_width(1000, 0.005);
        // shift just enough that the wrong-way gap lands between ε and 2ε
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.5 * eps).collect();
        let r = empirical_dominance_test(&xs, &shifted, 0.99, Claim::FirstDominates).unwrap();
        assert_eq!(r.verdict, EmpiricalVerdict::Inconclusive, "{r:?}");
    }
}
