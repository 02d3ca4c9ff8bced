//! Arithmetic backends shared by the exact walk computations.
//!
//! Every dynamic program over the walk is written once against [`Scalar`] and
//! instantiated with `f64` (fast, long horizons) or [`BigRational`] (exact,
//! used to certify identities with zero tolerance).

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of fractional decimal digits for which a float bias is
/// promoted to an exact rational.
const MAX_EXACT_DECIMALS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arith {
    Exact,
    Float,
}

impl fmt::Display for Arith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arith::Exact => "exact",
            Arith::Float => "float",
        })
    }
}

impl FromStr for Arith {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "rational" | "exact-rational" => Ok(Arith::Exact),
            "float" | "f64" => Ok(Arith::Float),
            other => Err(Error::invalid(
                "mode",
                format!("unknown arithmetic mode {other:?}"),
            )),
        }
    }
}

/// Probability of a +1 step, strictly inside (0, 1).
///
/// Carries the `f64` value and, when the input was a short decimal or an
/// explicit fraction, the exact rational it denotes.
#[derive(Debug, Clone, PartialEq)]
pub struct Bias {
    value: f64,
    exact: Option<BigRational>,
}

fn decimal_to_rational(s: &str) -> Option<BigRational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if frac_part.len() > MAX_EXACT_DECIMALS
        || int_part.is_empty() && frac_part.is_empty()
        || !int_part
            .chars()
            .chain(frac_part.chars())
            .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(&digits).ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(numer, denom);
    Some(if neg { -r } else { r })
}

fn check_open_unit(value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("p", format!("{value} is outside (0, 1)")))
    }
}

impl Bias {
    /// Float bias; promoted to exact when its shortest decimal form is short.
    pub fn new(value: f64) -> Result<Self> {
        check_open_unit(value)?;
        Ok(Bias {
            value,
            exact: decimal_to_rational(&format!("{value}")),
        })
    }

    /// Bias that deliberately carries no exact representation.
    pub fn float_only(value: f64) -> Result<Self> {
        check_open_unit(value)?;
        Ok(Bias { value, exact: None })
    }

    pub fn from_ratio(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::invalid("p", "zero denominator"));
        }
        Self::from_rational(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_rational(r: BigRational) -> Result<Self> {
        let value = ToPrimitive::to_f64(&r).unwrap_or(f64::NAN);
        if !(r.is_positive() && r < BigRational::one()) {
            return Err(Error::invalid("p", format!("{r} is outside (0, 1)")));
        }
        Ok(Bias {
            value,
            exact: Some(r),
        })
    }

    pub fn half() -> Self {
        Bias {
            value: 0.5,
            exact: Some(BigRational::new(1.into(), 2.into())),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// The bias of the mirrored walk, 1 − p.
    pub fn complement(&self) -> Self {
        Bias {
            value: 1.0 - self.value,
            exact: self.exact.as_ref().map(|r| BigRational::one() - r),
        }
    }

    pub fn as_scalar<T: Scalar>(&self) -> Result<T> {
        T::from_bias(self)
    }
}

impl fmt::Display for Bias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = format!("{}", self.value);
        match &self.exact {
            Some(r) if decimal_to_rational(&short).as_ref() != Some(r) => write!(f, "{r}"),
            _ => f.write_str(&short),
        }
    }
}

impl FromStr for Bias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let parse = |x: &str| {
                BigInt::from_str(x.trim())
                    .map_err(|_| Error::invalid("p", format!("cannot parse fraction {s:?}")))
            };
            let (n, d) = (parse(n)?, parse(d)?);
            if d.is_zero() {
                return Err(Error::invalid("p", "zero denominator"));
            }
            return Self::from_rational(BigRational::new(n, d));
        }
        let value: f64 = s
            .parse()
            .map_err(|_| Error::invalid("p", format!("cannot parse {s:?}")))?;
        check_open_unit(value)?;
        let exact = decimal_to_rational(s).or_else(|| decimal_to_rational(&format!("{value}")));
        Ok(Bias { value, exact })
    }
}

impl Serialize for Bias {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Field-like number type the walk dynamic programs run over.
pub trait Scalar: Clone + PartialOrd + fmt::Debug + Send + Sync + Num + 'static {
    const MODE: Arith;

    fn from_bias(bias: &Bias) -> Result<Self>;

    fn from_int(v: i64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_f64_lossy(v: f64) -> Self;

    /// `(to/from)^up · ((1−to)/(1−from))^down`: the likelihood ratio of a
    /// path with `up` rises and `down` falls.
    fn path_ratio(up: u64, down: u64, from: &Self, to: &Self) -> Self;

    /// `self ≤ other`, allowing for rounding in the float backend.
    fn le_within_rounding(&self, other: &Self) -> bool;

    fn abs_diff(&self, other: &Self) -> Self {
        if self >= other {
            self.clone() - other.clone()
        } else {
            other.clone() - self.clone()
        }
    }

    /// Text form: shortest round-trip float, or `num/den`.
    fn render(&self) -> String;
}

impl Scalar for f64 {
    const MODE: Arith = Arith::Float;

    fn from_bias(bias: &Bias) -> Result<Self> {
        Ok(bias.value)
    }

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn path_ratio(up: u64, down: u64, from: &Self, to: &Self) -> Self {
        // log space: (2√(pq))^n style factors underflow for long paths
        let mut log = 0.0;
        if up > 0 {
            log += up as f64 * (to / from).ln();
        }
        if down > 0 {
            log += down as f64 * ((1.0 - to) / (1.0 - from)).ln();
        }
        log.exp()
    }

    fn le_within_rounding(&self, other: &Self) -> bool {
        *self <= *other + 1e-12 * self.abs().max(other.abs()).max(1.0)
    }

    fn render(&self) -> String {
        format!("{self}")
    }
}

impl Scalar for BigRational {
    const MODE: Arith = Arith::Exact;

    fn from_bias(bias: &Bias) -> Result<Self> {
        bias.exact
            .clone()
            .ok_or_else(|| Error::NotExact(format!("p = {}", bias.value)))
    }

    fn from_int(v: i64) -> Self {
        BigRational::from_integer(v.into())
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(BigRational::zero)
    }

    fn path_ratio(up: u64, down: u64, from: &Self, to: &Self) -> Self {
        let one = BigRational::one();
        let rise = to / from;
        let fall = (&one - to) / (&one - from);
        num_traits::pow(rise, up as usize) * num_traits::pow(fall, down as usize)
    }

    fn le_within_rounding(&self, other: &Self) -> bool {
        self <= other
    }

    fn render(&self) -> String {
        self.to_string()
    }
}
