//! Analytic exit-time survival for Brownian motion on (−b, b).
//!
//! The driftless law comes from the classical eigenfunction series (large
//! times) or its image-charge counterpart (small times). The drifted law is
//! obtained from the driftless one by the Girsanov factorization
//! `Q_λ(τ > t) = cosh(λb) · ∫_t^∞ e^{−λ²s/2} f_0(s) ds`, which holds because
//! the exit side and exit time are independent under the driftless law.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};
use std::io::{self, Write};

use libm::erfc;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::Arith;
use crate::stats_verify::{DominanceReport, PairComparison, ScanGrid};

/// Below this multiple of `b²` the image-charge series is used.
const SMALL_TIME: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSpec {
    pub lambda: f64,
    pub b: f64,
}

impl DriftSpec {
    pub fn new(lambda: f64, b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid("b", format!("barrier {b} must be positive")));
        }
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda", "drift must be finite"));
        }
        Ok(DriftSpec { lambda, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesControl {
    pub max_terms: usize,
    /// Absolute truncation tolerance for series terms.
    pub tolerance: f64,
    /// Initial quadrature panel width, in units of `b²`.
    pub quad_step: f64,
    /// Absolute tolerance for time integrals (after the `cosh` factor).
    pub quad_tolerance: f64,
    pub max_panels: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            max_terms: 200,
            tolerance: 1e-16,
            quad_step: 0.125,
            quad_tolerance: 1e-12,
            max_panels: 20_000,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if self.max_terms < 1 {
            return Err(Error::invalid("max_terms", "need at least one term"));
        }
        if !(self.tolerance > 0.0) || !(self.quad_tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "tolerances must be positive"));
        }
        if !(self.quad_step > 0.0) {
            return Err(Error::invalid(
                "quad_step",
                "quadrature step must be positive",
            ));
        }
        Ok(())
    }
}

fn normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    FRAC_2_SQRT_PI / (2.0 * SQRT_2) * (-0.5 * x * x).exp()
}

/// Sums an alternating series whose term magnitudes decrease; `None` when the
/// cap is hit first.
fn alternating_sum(ctl: &SeriesControl, term: impl Fn(usize) -> f64) -> Option<f64> {
    let mut sum = 0.0;
    for m in 0..ctl.max_terms {
        let t = term(m);
        let signed = if m % 2 == 0 { t } else { -t };
        sum += signed;
        if t.abs() < ctl.tolerance {
            return Some(sum);
        }
    }
    None
}

// Survival and density of τ for b = 1 at scaled time s.

fn unit_survival_spectral(s: f64, ctl: &SeriesControl) -> Option<f64> {
    alternating_sum(ctl, |m| {
        let odd = (2 * m + 1) as f64;
        4.0 / (PI * odd) * (-odd * odd * PI * PI * s / 8.0).exp()
    })
}

fn unit_survival_images(s: f64, ctl: &SeriesControl) -> Option<f64> {
    let root = s.sqrt();
    let exit = alternating_sum(ctl, |n| 4.0 * normal_tail((2 * n + 1) as f64 / root))?;
    Some(1.0 - exit)
}

fn unit_density_spectral(s: f64, ctl: &SeriesControl) -> Option<f64> {
    alternating_sum(ctl, |m| {
        let odd = (2 * m + 1) as f64;
        odd * PI / 2.0 * (-odd * odd * PI * PI * s / 8.0).exp()
    })
}

fn unit_density_images(s: f64, ctl: &SeriesControl) -> Option<f64> {
    let root = s.sqrt();
    alternating_sum(ctl, |n| {
        let a = (2 * n + 1) as f64;
        2.0 * a * normal_pdf(a / root) / (s * root)
    })
}

fn pick_series(
    s: f64,
    ctl: &SeriesControl,
    what: &'static str,
    spectral: fn(f64, &SeriesControl) -> Option<f64>,
    images: fn(f64, &SeriesControl) -> Option<f64>,
) -> Result<f64> {
    let (first, second) = if s < SMALL_TIME {
        (images, spectral)
    } else {
        (spectral, images)
    };
    first(s, ctl)
        .or_else(|| second(s, ctl))
        .ok_or(Error::NonConvergence {
            what,
            terms: ctl.max_terms,
        })
}

/// `P_0(τ > t)` for standard Brownian motion on (−b, b).
pub fn driftless_survival(b: f64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    DriftSpec::new(0.0, b)?;
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("time {t} must be nonnegative")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    pick_series(
        t / (b * b),
        ctl,
        "driftless survival",
        unit_survival_spectral,
        unit_survival_images,
    )
}

/// Density of τ under the driftless law, `−d/dt P_0(τ > t)`.
pub fn driftless_exit_density(b: f64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    DriftSpec::new(0.0, b)?;
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("time {t} must be positive")));
    }
    let g = pick_series(
        t / (b * b),
        ctl,
        "driftless density",
        unit_density_spectral,
        unit_density_images,
    )?;
    Ok(g / (b * b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalValue {
    pub value: f64,
    /// Quadrature error estimate plus the bound on the neglected tail.
    pub error_bound: f64,
}

fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
}

/// `Q_λ(τ > t)` via the Girsanov factorization against the driftless law.
///
/// The exit law depends on λ only through |λ|.
pub fn drifted_survival(spec: &DriftSpec, t: f64, ctl: &SeriesControl) -> Result<SurvivalValue> {
    ctl.validate()?;
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("time {t} must be nonnegative")));
    }
    let lambda = spec.lambda.abs();
    if lambda == 0.0 {
        return Ok(SurvivalValue {
            value: driftless_survival(spec.b, t, ctl)?,
            error_bound: ctl.tolerance,
        });
    }
    weighted_exit_integral(lambda, spec.b, t, ctl)
}

/// `|cosh(λb)·∫₀^∞ e^{−λ²s/2} f₀(s) ds − 1|`, evaluated by quadrature for
/// every λ including 0.
pub fn sech_identity_residual(lambda: f64, b: f64, ctl: &SeriesControl) -> Result<f64> {
    ctl.validate()?;
    let spec = DriftSpec::new(lambda, b)?;
    let v = weighted_exit_integral(spec.lambda.abs(), spec.b, 0.0, ctl)?;
    Ok((v.value - 1.0).abs())
}

fn weighted_exit_integral(
    lambda: f64,
    b: f64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<SurvivalValue> {
    // ∫_T^∞ e^{−λ²s/2} f_0(s) ds ≤ e^{−λ²T/2} P_0(τ > T) ≤ (4/π) e^{−(λ²/2 + μ₀)T}
    let decay = 0.5 * lambda * lambda + PI * PI / (8.0 * b * b);
    let log_scale = ln_cosh(lambda * b) + (4.0 / PI).ln();
    let cutoff = ((log_scale - (ctl.quad_tolerance / 10.0).ln()) / decay).max(t + 10.0 / decay);
    let tail_bound = (log_scale - decay * cutoff).exp();

    let weight = (-ln_cosh(lambda * b)).exp();
    let failed = std::cell::Cell::new(false);
    let q = quadrature::integrate(
        |s| {
            integrand_value(b, lambda, s, ctl).unwrap_or_else(|| {
                failed.set(true);
                0.0
            })
        },
        t,
        cutoff,
        ctl.quad_step * b * b,
        ctl.quad_tolerance * weight,
        ctl.max_panels,
    );
    if failed.get() {
        return Err(Error::NonConvergence {
            what: "drifted survival integrand",
            terms: ctl.max_terms,
        });
    }
    let scale = ln_cosh(lambda * b).exp();
    Ok(SurvivalValue {
        value: scale * q.value,
        error_bound: scale * q.error + tail_bound,
    })
}

fn integrand_value(b: f64, lambda: f64, s: f64, ctl: &SeriesControl) -> Option<f64> {
    if s <= 0.0 {
        return Some(0.0);
    }
    let f = driftless_exit_density(b, s, ctl).ok()?;
    Some((-0.5 * lambda * lambda * s).exp() * f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignProbabilities {
    /// `P(B^λ_t = x | |B^λ_t| = x)`.
    pub positive: f64,
    pub negative: f64,
}

/// Conditional sign of the drifted motion given its modulus `x`.
pub fn sign_given_modulus(lambda: f64, x: f64) -> Result<SignProbabilities> {
    if !(x >= 0.0) {
        return Err(Error::invalid(
            "x",
            format!("modulus {x} must be nonnegative"),
        ));
    }
    let a = 2.0 * lambda * x;
    Ok(SignProbabilities {
        positive: 1.0 / (1.0 + (-a).exp()),
        negative: 1.0 / (1.0 + a.exp()),
    })
}

/// Drift of the squared modulus `Y = |B_t + λt|²`: `1 + 2λ√y·tanh(λ√y)`.
pub fn drift_y(lambda: f64, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::invalid(
            "y",
            format!("state {y} must be nonnegative"),
        ));
    }
    Ok(drift_y_unchecked(lambda, y))
}

#[inline]
pub(crate) fn drift_y_unchecked(lambda: f64, y: f64) -> f64 {
    let root = y.sqrt();
    1.0 + 2.0 * lambda * root * (lambda * root).tanh()
}

/// Drifted survival on a (λ, t) grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalGrid {
    pub b: f64,
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    /// `values[i][j]` is the survival at `lambdas[i]`, `times[j]`.
    pub values: Vec<Vec<SurvivalValue>>,
}

impl SurvivalGrid {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "lambda,t,survival,error_bound")?;
        for (lambda, row) in self.lambdas.iter().zip(&self.values) {
            for (t, v) in self.times.iter().zip(row) {
                writeln!(w, "{lambda},{t},{},{}", v.value, v.error_bound)?;
            }
        }
        Ok(())
    }
}

/// Evaluates [`drifted_survival`] on every grid point; λ rows run in parallel.
pub fn survival_grid(
    lambdas: &[f64],
    b: f64,
    times: &[f64],
    ctl: &SeriesControl,
) -> Result<SurvivalGrid> {
    let values = lambdas
        .par_iter()
        .map(|&lambda| {
            let spec = DriftSpec::new(lambda, b)?;
            times
                .iter()
                .map(|&t| drifted_survival(&spec, t, ctl))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurvivalGrid {
        b,
        lambdas: lambdas.to_vec(),
        times: times.to_vec(),
        values,
    })
}

/// Checks that survival is non-increasing along an ascending drift grid at
/// every time; increases up to `tie_tolerance` count as ties.
pub fn dominance_scan_continuous(
    lambdas: &[f64],
    b: f64,
    times: &[f64],
    ctl: &SeriesControl,
    tie_tolerance: f64,
) -> Result<DominanceReport> {
    if lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::invalid("lambdas", "drifts must be nonnegative"));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "lambdas",
            "drifts must be strictly ascending",
        ));
    }
    let grid = survival_grid(lambdas, b, times, ctl)?;
    let values: Vec<Vec<f64>> = grid
        .values
        .iter()
        .map(|row| row.iter().map(|v| v.value).collect())
        .collect();
    let labels = lambdas.iter().map(|l| l.to_string()).collect();
    let comparisons = values
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(&hi, &lo)| PairComparison::from_floats(hi, lo, tie_tolerance))
                .collect()
        })
        .collect();
    Ok(DominanceReport::assemble(
        ScanGrid {
            parameter: "lambda",
            labels,
            index_name: "t",
            index: times.to_vec(),
            mode: Arith::Float,
            values,
        },
        comparisons,
        Vec::new(),
    ))
}
