//! Parameter tables for every subcommand: flag names, units, defaults and
//! the canonical text form echoed into outputs.

use std::str::FromStr;

use exitdom::suite::Profile;
use exitdom::{Arith, Bias};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    FloatList,
    Count,
    Bias,
    BiasList,
    Mode,
    Switch,
    Profile,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub key: &'static str,
    pub value_name: &'static str,
    pub help: &'static str,
    /// `None` marks a required parameter.
    pub default: Option<&'static str>,
    pub kind: Kind,
}

#[derive(Debug, Clone)]
pub struct Spec {
    pub name: &'static str,
    pub about: &'static str,
    /// Output schema, shown under `--help`.
    pub schema: &'static str,
    /// Monte Carlo subcommands echo the RNG algorithm.
    pub stochastic: bool,
    pub params: Vec<Param>,
}

const fn param(
    key: &'static str,
    value_name: &'static str,
    help: &'static str,
    default: Option<&'static str>,
    kind: Kind,
) -> Param {
    Param {
        key,
        value_name,
        help,
        default,
        kind,
    }
}

const MODE: Param = param(
    "mode",
    "MODE",
    "Arithmetic backend: exact (rational, p must be a short decimal or a/b) or float",
    Some("float"),
    Kind::Mode,
);

const K: Param = param(
    "k",
    "STEPS",
    "Interval half-width; the walk exits (-k, k) (lattice steps)",
    None,
    Kind::Count,
);

const HORIZON: Param = param(
    "horizon",
    "STEPS",
    "Last step n tabulated (steps)",
    None,
    Kind::Count,
);

const SEED: Param = param(
    "seed",
    "U64",
    "Master seed of the counter-based RNG (dimensionless)",
    Some("1"),
    Kind::Count,
);

const SUBSTREAM: Param = param(
    "substream",
    "U32",
    "RNG substream id; batches draw from stream (substream << 32 | batch) (dimensionless)",
    Some("0"),
    Kind::Count,
);

const B: Param = param(
    "b",
    "LENGTH",
    "Interval half-width; the motion exits (-b, b) (space units)",
    Some("1"),
    Kind::Float,
);

const DT: Param = param(
    "dt",
    "TIME",
    "Euler time step (time units)",
    Some("0.001"),
    Kind::Float,
);

const BRIDGE: Param = param(
    "bridge",
    "BOOL",
    "Brownian-bridge crossing correction between grid points (true/false)",
    Some("true"),
    Kind::Switch,
);

const MAX_TERMS: Param = param(
    "max-terms",
    "COUNT",
    "Cap on series terms before reporting non-convergence (terms)",
    Some("200"),
    Kind::Count,
);

const SERIES_TOL: Param = param(
    "series-tol",
    "PROB",
    "Absolute truncation tolerance of the theta series (probability)",
    Some("1e-16"),
    Kind::Float,
);

const QUAD_TOL: Param = param(
    "quad-tol",
    "PROB",
    "Absolute tolerance of the time integral for drifted survival (probability)",
    Some("1e-12"),
    Kind::Float,
);

/// Flags every subcommand accepts; none of them is echoed into outputs.
pub const COMMON: [Param; 4] = [
    param(
        "config",
        "FILE",
        "Config file of key = value lines (flag names, # comments), or an earlier output file to re-run",
        None,
        Kind::Choice(&[]),
    ),
    param(
        "out-dir",
        "DIR",
        "Output directory, or - for stdout [env: EXITDOM_OUT_DIR]",
        Some("."),
        Kind::Choice(&[]),
    ),
    param(
        "format",
        "FORMAT",
        "Output format: csv, json or both (both needs a directory)",
        Some("both"),
        Kind::Choice(&["csv", "json", "both"]),
    ),
    param(
        "threads",
        "COUNT",
        "Worker threads for parallel grids and Monte Carlo batches, 0 = all cores (threads)",
        Some("0"),
        Kind::Count,
    ),
];

/// Keys written by the tool itself into output headers.
pub const META: [&str; 4] = ["subcommand", "exitdom_version", "schema_version", "rng"];

pub fn specs() -> Vec<Spec> {
    vec![
        Spec {
            name: "rw-survival",
            about: "Exact exit-time law of the biased walk on (-k, k)",
            schema: "CSV: n,value (survival P(sigma > n)) or n,value,side (joint law, side + or -).\n\
                     JSON: result.table with the values, result.mean_exit = E[sigma].",
            stochastic: false,
            params: vec![
                param("p", "PROB", "Probability of a +1 step, decimal or a/b (probability)", None, Kind::Bias),
                K,
                HORIZON,
                MODE,
                param(
                    "table",
                    "TABLE",
                    "survival for P(sigma > n), joint for P(sigma = n, exit side)",
                    Some("survival"),
                    Kind::Choice(&["survival", "joint"]),
                ),
            ],
        },
        Spec {
            name: "rw-dominance",
            about: "Pairwise dominance of walk exit times along an ascending bias grid",
            schema: "CSV: smaller,larger,verdict,worst_excess,worst_at,escalated (one row per adjacent pair).\n\
                     JSON: result is the full dominance report with survival values.\n\
                     Exit status 2 when any pair violates dominance.",
            stochastic: false,
            params: vec![
                param(
                    "ps",
                    "PROBS",
                    "Comma-separated ascending biases in [1/2, 1) (probability)",
                    None,
                    Kind::BiasList,
                ),
                K,
                HORIZON,
                param("mode", "MODE", MODE.help, Some("exact"), Kind::Mode),
            ],
        },
        Spec {
            name: "rw-independence",
            about: "Check that exit step and exit side of the walk are independent",
            schema: "CSV: max_deviation,worst_step,exit_upper,residual.\n\
                     Exit status 2 when max_deviation exceeds --tolerance.",
            stochastic: false,
            params: vec![
                param("p", "PROB", "Probability of a +1 step, decimal or a/b (probability)", None, Kind::Bias),
                K,
                param("truncation", "STEPS", "Steps of the exit table (steps)", Some("400"), Kind::Count),
                MODE,
                param(
                    "tolerance",
                    "PROB",
                    "Largest accepted deviation (probability)",
                    Some("1e-12"),
                    Kind::Float,
                ),
            ],
        },
        Spec {
            name: "rw-reweight",
            about: "Survival at p-to recovered from the p-from exit table by change of measure",
            schema: "CSV: n,estimate,direct,error,tail_bound.\n\
                     Exit status 2 when error exceeds max(tail_bound, --error-floor) at any n.",
            stochastic: false,
            params: vec![
                param("p-from", "PROB", "Bias the exit table is computed under (probability)", None, Kind::Bias),
                param("p-to", "PROB", "Bias whose survival is recovered (probability)", None, Kind::Bias),
                K,
                HORIZON,
                param(
                    "truncation",
                    "STEPS",
                    "Steps of the p-from exit table; must exceed the horizon (steps)",
                    Some("2000"),
                    Kind::Count,
                ),
                MODE,
                param(
                    "error-floor",
                    "PROB",
                    "Error always accepted regardless of the tail bound (probability)",
                    Some("1e-10"),
                    Kind::Float,
                ),
            ],
        },
        Spec {
            name: "rw-factorization",
            about: "Survival at p2 as conditional weight mean times survival at p1",
            schema: "CSV: n,direct,factorized,deviation,tail_bound.\n\
                     Exit status 2 when deviation exceeds max(tail_bound, --tolerance) at any n.",
            stochastic: false,
            params: vec![
                param("p1", "PROB", "Smaller bias, at least 1/2 (probability)", None, Kind::Bias),
                param("p2", "PROB", "Larger bias (probability)", None, Kind::Bias),
                K,
                HORIZON,
                param(
                    "truncation",
                    "STEPS",
                    "Steps of the p1 exit table; must exceed the horizon (steps)",
                    Some("400"),
                    Kind::Count,
                ),
                param("tolerance", "PROB", "Largest accepted deviation (probability)", Some("1e-10"), Kind::Float),
            ],
        },
        Spec {
            name: "bm-survival",
            about: "Analytic survival of drifted Brownian motion on (-b, b)",
            schema: "CSV: lambda,t,survival,error_bound.\n\
                     JSON: result is the survival grid.",
            stochastic: false,
            params: vec![
                param("lambdas", "DRIFTS", "Comma-separated drifts (space per time)", None, Kind::FloatList),
                B,
                param("times", "TIMES", "Comma-separated times (time units)", None, Kind::FloatList),
                MAX_TERMS,
                SERIES_TOL,
                QUAD_TOL,
            ],
        },
        Spec {
            name: "bm-dominance",
            about: "Check analytic survival is non-increasing along an ascending drift grid",
            schema: "CSV: smaller,larger,verdict,worst_excess,worst_at,escalated (one row per adjacent pair).\n\
                     JSON: result is the full dominance report with survival values.\n\
                     Exit status 2 when any pair violates dominance.",
            stochastic: false,
            params: vec![
                param(
                    "lambdas",
                    "DRIFTS",
                    "Comma-separated strictly ascending nonnegative drifts (space per time)",
                    None,
                    Kind::FloatList,
                ),
                B,
                param("times", "TIMES", "Comma-separated times (time units)", None, Kind::FloatList),
                param(
                    "tie-tolerance",
                    "PROB",
                    "Increases up to this size count as ties (probability)",
                    Some("1e-8"),
                    Kind::Float,
                ),
                MAX_TERMS,
                SERIES_TOL,
                QUAD_TOL,
            ],
        },
        Spec {
            name: "bm-couple",
            about: "Coupled squared-modulus SDEs for several drifts driven by one Brownian motion",
            schema: "CSV: lambda,restricted_mean,standard_error,hit_fraction (hitting of b^2, mean of min(T_hit, horizon)).\n\
                     JSON: result holds violation fractions and hitting summaries.\n\
                     With --record N > 0 also writes bm-couple-paths.csv: path,step,t,y[lambda]...\n\
                     Exit status 2 when the tolerant violation fraction exceeds --max-violation.",
            stochastic: true,
            params: vec![
                param(
                    "lambdas",
                    "DRIFTS",
                    "Comma-separated non-decreasing nonnegative drifts (space per time)",
                    None,
                    Kind::FloatList,
                ),
                param("y0", "AREA", "Initial value of Y = |X|^2 (squared space units)", Some("0"), Kind::Float),
                B,
                DT,
                param("horizon", "TIME", "Simulated time span (time units)", Some("1"), Kind::Float),
                param("paths", "COUNT", "Number of coupled paths (paths)", Some("1000"), Kind::Count),
                SEED,
                SUBSTREAM,
                param(
                    "record",
                    "COUNT",
                    "Number of leading paths written in full as plot data (paths)",
                    Some("0"),
                    Kind::Count,
                ),
                param(
                    "max-violation",
                    "FRACTION",
                    "Largest accepted tolerant violation fraction (fraction of path-steps)",
                    Some("0.001"),
                    Kind::Float,
                ),
            ],
        },
        Spec {
            name: "bm-independence",
            about: "Chi-square test that exit side and exit time of drifted Brownian motion are independent",
            schema: "CSV: statistic,dof,p_value,bins,samples,censored_excluded.\n\
                     With --raw-samples true also writes bm-independence-samples.csv: path,time,side,terminal.\n\
                     Exit status 2 when p_value is below --alpha.",
            stochastic: true,
            params: vec![
                param("lambda", "DRIFT", "Drift (space per time)", Some("1"), Kind::Float),
                B,
                DT,
                param("horizon", "TIME", "Censoring time (time units)", Some("20"), Kind::Float),
                param("paths", "COUNT", "Number of paths (paths)", Some("100000"), Kind::Count),
                param("bins", "COUNT", "Exit-time quantile bins before merging (bins)", Some("10"), Kind::Count),
                BRIDGE,
                SEED,
                SUBSTREAM,
                param("alpha", "PROB", "Rejection level of the test (probability)", Some("0.001"), Kind::Float),
                param(
                    "raw-samples",
                    "BOOL",
                    "Also write the simulated exits (true/false)",
                    Some("false"),
                    Kind::Switch,
                ),
            ],
        },
        Spec {
            name: "bm-reweight",
            about: "Survival at lambda-to estimated from paths at lambda-from with stopped Girsanov weights",
            schema: "CSV: t,estimate,standard_error,analytic,z.\n\
                     Exit status 2 when |z| exceeds --z-max at any time.",
            stochastic: true,
            params: vec![
                param("lambda-from", "DRIFT", "Drift the paths are simulated under (space per time)", Some("0"), Kind::Float),
                param("lambda-to", "DRIFT", "Drift whose survival is estimated (space per time)", None, Kind::Float),
                B,
                param("times", "TIMES", "Comma-separated times, each below the horizon (time units)", None, Kind::FloatList),
                DT,
                param("horizon", "TIME", "Censoring time (time units)", Some("20"), Kind::Float),
                param("paths", "COUNT", "Number of paths (paths)", Some("100000"), Kind::Count),
                BRIDGE,
                SEED,
                SUBSTREAM,
                param(
                    "max-censored",
                    "FRACTION",
                    "Largest accepted fraction of paths alive at the horizon (fraction)",
                    Some("0.01"),
                    Kind::Float,
                ),
                param(
                    "z-max",
                    "SE",
                    "Largest accepted |estimate - analytic| (standard errors)",
                    Some("4"),
                    Kind::Float,
                ),
            ],
        },
        Spec {
            name: "verify-all",
            about: "Run the whole verification suite",
            schema: "CSV: id,title,passed,detail (one row per criterion).\n\
                     JSON: result.criteria with the same fields.\n\
                     Exit status 2 when any criterion fails.",
            stochastic: true,
            params: vec![
                param(
                    "profile",
                    "PROFILE",
                    "desk for full sizes, quick for reduced sizes at the same tolerances",
                    Some("desk"),
                    Kind::Profile,
                ),
                SEED,
            ],
        },
    ]
}

/// Canonical text of a raw value; the error names what was wrong.
pub fn canonical(kind: Kind, raw: &str) -> Result<String, String> {
    let raw = raw.trim();
    match kind {
        Kind::Float => parse_float(raw).map(float_text),
        Kind::FloatList => list(raw, |s| parse_float(s).map(float_text)),
        Kind::Count => raw
            .parse::<u64>()
            .map(|v| v.to_string())
            .map_err(|_| format!("expected a nonnegative integer, got {raw:?}")),
        Kind::Bias => parse_bias(raw),
        Kind::BiasList => list(raw, parse_bias),
        Kind::Mode => Arith::from_str(raw)
            .map(|m| m.to_string())
            .map_err(|_| format!("expected exact or float, got {raw:?}")),
        Kind::Switch => match raw {
            "true" | "on" | "yes" | "1" => Ok("true".into()),
            "false" | "off" | "no" | "0" => Ok("false".into()),
            _ => Err(format!("expected true or false, got {raw:?}")),
        },
        Kind::Profile => Profile::from_str(raw)
            .map(|p| p.to_string())
            .map_err(|_| format!("expected desk or quick, got {raw:?}")),
        Kind::Choice(options) => {
            if options.is_empty() || options.contains(&raw) {
                Ok(raw.to_string())
            } else {
                Err(format!(
                    "expected one of {}, got {raw:?}",
                    options.join(", ")
                ))
            }
        }
    }
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got {s:?}")),
    }
}

/// Shortest round-trip text, in exponent form for very small or large values.
fn float_text(v: f64) -> String {
    if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn parse_bias(s: &str) -> Result<String, String> {
    Bias::from_str(s)
        .map(|b| b.to_string())
        .map_err(|e| e.to_string())
}

fn list(raw: &str, item: impl Fn(&str) -> Result<String, String>) -> Result<String, String> {
    let items = raw
        .split(',')
        .map(|s| {
            let s = s.trim();
            if s.is_empty() {
                Err(format!("empty entry in list {raw:?}"))
            } else {
                item(s)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(items.join(","))
}
