//! Exit law of the biased walk on {−k, …, k} by absorbing-chain dynamic
//! programming.
//!
//! The walk starts at 0 and steps +1 with probability `p`, −1 with `q = 1 − p`.
//! Interior states −k+1..=k−1 are held in a dense vector; mass reaching ±k is
//! absorbed and recorded per step.

use std::io::{self, Write};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::{Arith, Bias, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct WalkSpec {
    p: Bias,
    k: u32,
}

impl WalkSpec {
    pub fn new(p: Bias, k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("k", "half-width must be at least 1"));
        }
        Ok(WalkSpec { p, k })
    }

    /// Convenience constructor from a float bias.
    pub fn with_p(p: f64, k: u32) -> Result<Self> {
        Self::new(Bias::new(p)?, k)
    }

    pub fn p(&self) -> &Bias {
        &self.p
    }

    pub fn q(&self) -> Bias {
        self.p.complement()
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// The same walk with the bias mirrored, p ↦ 1 − p.
    pub fn mirrored(&self) -> Self {
        WalkSpec {
            p: self.p.complement(),
            k: self.k,
        }
    }

    fn interior_len(&self) -> usize {
        2 * self.k as usize - 1
    }
}

/// `P(σ > n)` for `n = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve<T> {
    pub horizon: u64,
    pub values: Vec<T>,
}

impl<T: Scalar> SurvivalCurve<T> {
    pub fn mode(&self) -> Arith {
        T::MODE
    }

    pub fn at(&self, n: u64) -> &T {
        &self.values[n as usize]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(Scalar::to_f64).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,value")?;
        for (n, v) in self.values.iter().enumerate() {
            writeln!(w, "{n},{}", v.render())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "horizon": self.horizon,
            "mode": T::MODE,
            "values": self.values.iter().map(scalar_json).collect::<Vec<_>>(),
        })
    }
}

/// Joint law of `(σ, S_σ)` up to a horizon.
///
/// Row `n` holds `P(σ = n, S_σ = +k)` and `P(σ = n, S_σ = −k)`; `residual[n]`
/// is the mass still inside the interval after `n` steps, i.e. `P(σ > n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointExitTable<T> {
    pub k: u32,
    pub horizon: u64,
    pub upper: Vec<T>,
    pub lower: Vec<T>,
    pub residual: Vec<T>,
    /// Interior distribution after `horizon` steps, indexed from −k+1.
    pub interior: Vec<T>,
}

impl<T: Scalar> JointExitTable<T> {
    pub fn mode(&self) -> Arith {
        T::MODE
    }

    /// `P(σ = n)`.
    pub fn exit_at(&self, n: u64) -> T {
        self.upper[n as usize].clone() + self.lower[n as usize].clone()
    }

    /// Absorbed mass through step `n` plus interior mass at `n`; equals one.
    pub fn total_mass(&self, n: u64) -> T {
        let n = n as usize;
        let absorbed = self.upper[..=n]
            .iter()
            .chain(&self.lower[..=n])
            .fold(T::zero(), |acc, x| acc + x.clone());
        absorbed + self.residual[n].clone()
    }

    /// Interior mass as a survival curve. Float rounding can lift the mass by
    /// an ulp on steps with no absorption, so the running minimum is taken;
    /// this is the identity in exact mode.
    pub fn survival(&self) -> SurvivalCurve<T> {
        let mut values: Vec<T> = Vec::with_capacity(self.residual.len());
        for r in &self.residual {
            let v = match values.last() {
                Some(prev) if prev < r => prev.clone(),
                _ => r.clone(),
            };
            values.push(v);
        }
        SurvivalCurve {
            horizon: self.horizon,
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,value,side")?;
        for n in 0..=self.horizon as usize {
            writeln!(w, "{n},{},+", self.upper[n].render())?;
            writeln!(w, "{n},{},-", self.lower[n].render())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let col = |v: &[T]| v.iter().map(scalar_json).collect::<Vec<_>>();
        json!({
            "k": self.k,
            "horizon": self.horizon,
            "mode": T::MODE,
            "upper": col(&self.upper),
            "lower": col(&self.lower),
            "residual": col(&self.residual),
        })
    }
}

/// JSON number in float mode, `"num/den"` string in exact mode.
pub fn scalar_json<T: Scalar>(x: &T) -> Value {
    match T::MODE {
        Arith::Float => json!(x.to_f64()),
        Arith::Exact => json!(x.render()),
    }
}

fn step_probs<T: Scalar>(spec: &WalkSpec) -> Result<(T, T)> {
    let p = T::from_bias(spec.p())?;
    let q = T::one() - p.clone();
    Ok((p, q))
}

fn propagate<T: Scalar>(spec: &WalkSpec, horizon: u64) -> Result<JointExitTable<T>> {
    let (p, q) = step_probs::<T>(spec)?;
    let len = spec.interior_len();
    let rows = horizon as usize + 1;
    let mut upper = Vec::with_capacity(rows);
    let mut lower = Vec::with_capacity(rows);
    let mut residual = Vec::with_capacity(rows);

    let mut cur = vec![T::zero(); len];
    cur[spec.k as usize - 1] = T::one();
    upper.push(T::zero());
    lower.push(T::zero());
    residual.push(T::one());

    let mut next = vec![T::zero(); len];
    for _ in 0..horizon {
        next.iter_mut().for_each(|x| *x = T::zero());
        let mut up = T::zero();
        let mut down = T::zero();
        for (i, mass) in cur.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            let rise = p.clone() * mass.clone();
            let fall = q.clone() * mass.clone();
            if i + 1 == len {
                up = up + rise;
            } else {
                next[i + 1] = next[i + 1].clone() + rise;
            }
            if i == 0 {
                down = down + fall;
            } else {
                next[i - 1] = next[i - 1].clone() + fall;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        upper.push(up);
        lower.push(down);
        residual.push(cur.iter().fold(T::zero(), |acc, x| acc + x.clone()));
    }

    Ok(JointExitTable {
        k: spec.k,
        horizon,
        upper,
        lower,
        residual,
        interior: cur,
    })
}

/// `P(σ > n)` for `n = 0..=horizon`.
pub fn survival_pmf<T: Scalar>(spec: &WalkSpec, horizon: u64) -> Result<SurvivalCurve<T>> {
    Ok(propagate::<T>(spec, horizon)?.survival())
}

/// Joint exit table through `horizon` (which must reach the barrier).
pub fn exit_joint<T: Scalar>(spec: &WalkSpec, horizon: u64) -> Result<JointExitTable<T>> {
    if horizon < spec.k as u64 {
        return Err(Error::invalid(
            "horizon",
            format!(
                "horizon {horizon} is shorter than the half-width {}",
                spec.k
            ),
        ));
    }
    propagate(spec, horizon)
}

/// Solves `f(x) = c + p·f(x+1) + q·f(x−1)` on the interior with boundary
/// values `f(−k) = at_lower`, `f(k) = at_upper` (Thomas algorithm).
fn solve_birth_death<T: Scalar>(spec: &WalkSpec, c: T, at_lower: T, at_upper: T) -> Result<Vec<T>> {
    let (p, q) = step_probs::<T>(spec)?;
    let len = spec.interior_len();
    let mut rhs = vec![c; len];
    rhs[0] = rhs[0].clone() + q.clone() * at_lower;
    rhs[len - 1] = rhs[len - 1].clone() + p.clone() * at_upper;

    // matrix: 1 on the diagonal, −p above, −q below
    let mut sup: Vec<T> = Vec::with_capacity(len);
    let mut d: Vec<T> = Vec::with_capacity(len);
    let mut pivot = T::one();
    for i in 0..len {
        if i > 0 {
            pivot = T::one() + q.clone() * sup[i - 1].clone();
        }
        let prev = if i > 0 { d[i - 1].clone() } else { T::zero() };
        sup.push(T::zero() - p.clone() / pivot.clone());
        d.push((rhs[i].clone() + q.clone() * prev) / pivot.clone());
    }
    let mut x = vec![T::zero(); len];
    x[len - 1] = d[len - 1].clone();
    for i in (0..len - 1).rev() {
        x[i] = d[i].clone() - sup[i].clone() * x[i + 1].clone();
    }
    Ok(x)
}

/// `E[σ]` from the origin.
pub fn mean_exit<T: Scalar>(spec: &WalkSpec) -> Result<T> {
    let times = solve_birth_death(spec, T::one(), T::zero(), T::zero())?;
    Ok(times[spec.k as usize - 1].clone())
}

/// `P(S_σ = +k | S_0 = x)` for every interior `x`, indexed from −k+1.
pub fn hit_upper_from<T: Scalar>(spec: &WalkSpec) -> Result<Vec<T>> {
    solve_birth_death(spec, T::zero(), T::zero(), T::one())
}

/// `P(|S_{n+1}| = r+1 | |S_n| = r)` for the modulus of the walk from 0.
///
/// The discrete counterpart of the `tanh` drift of the reflected diffusion.
pub fn modulus_chain_up_prob<T: Scalar>(spec: &WalkSpec, r: i64) -> Result<T> {
    if r < 0 || r >= spec.k as i64 {
        return Err(Error::invalid(
            "r",
            format!("modulus level {r} is outside 0..{}", spec.k),
        ));
    }
    if r == 0 {
        return Ok(T::one());
    }
    let (p, q) = step_probs::<T>(spec)?;
    let r = r as usize;
    let num = num_traits::pow(p.clone(), r + 1) + num_traits::pow(q.clone(), r + 1);
    let den = num_traits::pow(p, r) + num_traits::pow(q, r);
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::Zero;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn k_one_exits_immediately() {
        let spec = WalkSpec::with_p(0.5, 1).unwrap();
        let s = survival_pmf::<f64>(&spec, 3).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0, 0.0, 0.0]);
        let t = exit_joint::<f64>(&spec, 1).unwrap();
        assert_eq!((t.upper[1], t.lower[1]), (0.5, 0.5));
    }

    #[test]
    fn two_step_values() {
        let spec = WalkSpec::with_p(0.6, 2).unwrap();
        let s = survival_pmf::<BigRational>(&spec, 2).unwrap();
        assert_eq!(s.values[2], rat(12, 25));
        let t = exit_joint::<BigRational>(&spec, 2).unwrap();
        assert_eq!(t.upper[2], rat(9, 25));
        assert_eq!(t.lower[2], rat(4, 25));
        let f = survival_pmf::<f64>(&spec, 2).unwrap();
        assert_eq!(f.values, vec![1.0, 1.0, 0.48]);
    }

    #[test]
    fn symmetric_k2_four_steps() {
        let spec = WalkSpec::with_p(0.5, 2).unwrap();
        let s = survival_pmf::<BigRational>(&spec, 4).unwrap();
        assert_eq!(s.values[4], rat(1, 4));
        let t = exit_joint::<BigRational>(&spec, 3).unwrap();
        assert!(t.upper[3].is_zero() && t.lower[3].is_zero());
    }

    #[test]
    fn mean_exit_values() {
        for p in [0.1, 0.5, 0.93] {
            let spec = WalkSpec::with_p(p, 1).unwrap();
            assert!((mean_exit::<f64>(&spec).unwrap() - 1.0).abs() < 1e-14);
        }
        let spec = WalkSpec::with_p(0.5, 3).unwrap();
        assert_eq!(mean_exit::<BigRational>(&spec).unwrap(), rat(9, 1));
        let spec = WalkSpec::with_p(0.6, 2).unwrap();
        assert_eq!(mean_exit::<BigRational>(&spec).unwrap(), rat(50, 13));
        assert!((mean_exit::<f64>(&spec).unwrap() - 3.846153846153846).abs() < 1e-12);
    }

    #[test]
    fn modulus_chain_values() {
        let half = WalkSpec::with_p(0.5, 5).unwrap();
        for r in 1..5 {
            assert_eq!(modulus_chain_up_prob::<f64>(&half, r).unwrap(), 0.5);
        }
        let spec = WalkSpec::with_p(0.6, 3).unwrap();
        assert_eq!(modulus_chain_up_prob::<f64>(&spec, 0).unwrap(), 1.0);
        assert_eq!(
            modulus_chain_up_prob::<BigRational>(&spec, 2).unwrap(),
            rat(7, 13)
        );
        assert!(modulus_chain_up_prob::<f64>(&spec, 3).is_err());
        assert!(modulus_chain_up_prob::<f64>(&spec, -1).is_err());
    }

    #[test]
    fn modulus_chain_limit_is_max_step_prob() {
        let spec = WalkSpec::with_p(0.7, 60).unwrap();
        let v = modulus_chain_up_prob::<f64>(&spec, 50).unwrap();
        assert!((v - 0.7).abs() < 1e-9);
        let spec = WalkSpec::with_p(0.3, 60).unwrap();
        let v = modulus_chain_up_prob::<f64>(&spec, 50).unwrap();
        assert!((v - 0.7).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(WalkSpec::with_p(0.5, 0).is_err());
        assert!(WalkSpec::with_p(1.0, 2).is_err());
        assert!(WalkSpec::with_p(0.0, 2).is_err());
        let spec = WalkSpec::with_p(0.5, 3).unwrap();
        assert!(exit_joint::<f64>(&spec, 2).is_err());
        let third = WalkSpec::new(Bias::new(1.0 / 3.0).unwrap(), 2).unwrap();
        assert!(matches!(
            survival_pmf::<BigRational>(&third, 3),
            Err(Error::NotExact(_))
        ));
    }

    #[test]
    fn csv_rendering() {
        let spec = WalkSpec::with_p(0.6, 2).unwrap();
        let mut out = Vec::new();
        survival_pmf::<f64>(&spec, 2)
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "n,value\n0,1\n1,1\n2,0.48\n"
        );
        let mut out = Vec::new();
        survival_pmf::<BigRational>(&spec, 2)
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with("2,12/25\n"));
    }
}
