//! Truncated graded series in the half-integer-indexed variables t_n.
//!
//! The index n of t_n runs over 0, 1/2, 1, 3/2, ... and is stored doubled so
//! all index arithmetic stays in integers. t_n carries weight n + 1/2; series
//! are truncated by total weight (the order in 1/sqrt(lambda) that t-monomials
//! represent), also stored doubled. Coefficients live in `KPoly`.

use std::collections::BTreeMap;
use std::fmt;


use crate::error::{Error, Result};
use crate::kpoly::KPoly;
use crate::rational::{factorial, rat, rat_int, Rat};

/// Index of a t-variable, stored as 2n so half-integers stay exact.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct HalfIndex(pub u32);

impl HalfIndex {
    pub fn int(n: u32) -> Self {
        HalfIndex(2 * n)
    }

    pub fn from_twice(twice: u32) -> Self {
        HalfIndex(twice)
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    /// n + 1/2, doubled: the weight contribution of one power of t_n.
    pub fn weight_twice(self) -> i64 {
        self.0 as i64 + 1
    }

    /// The exponent n + 1/2 as a float (for numeric evaluation).
    pub fn exponent_f64(self) -> f64 {
        self.0 as f64 / 2.0 + 0.5
    }

    pub fn value(self) -> Rat {
        rat(self.0 as i64, 2)
    }
}

impl fmt::Display for HalfIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// A product of t-variables with positive exponents, sorted by index.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Monomial(Vec<(HalfIndex, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(n: HalfIndex) -> Self {
        Monomial(vec![(n, 1)])
    }

    pub fn from_pairs(mut pairs: Vec<(HalfIndex, u32)>) -> Self {
        pairs.retain(|&(_, e)| e > 0);
        pairs.sort();
        let mut merged: Vec<(HalfIndex, u32)> = Vec::with_capacity(pairs.len());
        for (n, e) in pairs {
            match merged.last_mut() {
                Some((m, acc)) if *m == n => *acc += e,
                _ => merged.push((n, e)),
            }
        }
        Monomial(merged)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(HalfIndex, u32)] {
        &self.0
    }

    pub fn exponent(&self, n: HalfIndex) -> u32 {
        self.0
            .iter()
            .find(|&&(m, _)| m == n)
            .map_or(0, |&(_, e)| e)
    }

    pub fn weight_twice(&self) -> i64 {
        self.0
            .iter()
            .map(|&(n, e)| n.weight_twice() * e as i64)
            .sum()
    }

    pub fn num_vars(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut pairs = self.0.clone();
        pairs.extend(other.0.iter().cloned());
        Monomial::from_pairs(pairs)
    }

    /// Multiply in one more power of t_n.
    pub fn push(&self, n: HalfIndex) -> Monomial {
        self.mul(&Monomial::var(n))
    }

    /// Divide out one power of t_n; None when absent.
    pub fn without(&self, n: HalfIndex) -> Option<Monomial> {
        let e = self.exponent(n);
        if e == 0 {
            return None;
        }
        let mut pairs = self.0.clone();
        for p in pairs.iter_mut() {
            if p.0 == n {
                p.1 -= 1;
            }
        }
        Some(Monomial::from_pairs(pairs))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for &(n, e) in &self.0 {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "t[{}]", n)?;
            } else {
                write!(f, "t[{}]^{}", n, e)?;
            }
        }
        Ok(())
    }
}

/// Truncated graded multivariate series: finite map monomial -> KPoly,
/// every stored monomial of weight <= the truncation weight, no zero
/// coefficients stored.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TSeries {
    terms: BTreeMap<Monomial, KPoly>,
    trunc_twice: i64,
}

impl TSeries {
    pub fn zero(trunc_twice: i64) -> Self {
        TSeries {
            terms: BTreeMap::new(),
            trunc_twice,
        }
    }

    pub fn constant(c: KPoly, trunc_twice: i64) -> Self {
        let mut s = TSeries::zero(trunc_twice);
        s.add_term(Monomial::one(), c);
        s
    }

    pub fn one(trunc_twice: i64) -> Self {
        TSeries::constant(KPoly::from_rat(rat_int(1)), trunc_twice)
    }

    pub fn var(n: HalfIndex, trunc_twice: i64) -> Self {
        let mut s = TSeries::zero(trunc_twice);
        s.add_term(Monomial::var(n), KPoly::from_rat(rat_int(1)));
        s
    }

    pub fn trunc_twice(&self) -> i64 {
        self.trunc_twice
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &KPoly)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> KPoly {
        self.terms.get(m).cloned().unwrap_or_else(KPoly::zero)
    }

    pub fn constant_term(&self) -> KPoly {
        self.coeff(&Monomial::one())
    }

    /// Add c * m in place, dropping overweight monomials and zero results.
    pub fn add_term(&mut self, m: Monomial, c: KPoly) {
        if c.is_zero() || m.weight_twice() > self.trunc_twice {
            return;
        }
        let entry = self.terms.entry(m).or_insert_with(KPoly::zero);
        *entry += &c;
        if entry.is_zero() {
            let key = self
                .terms
                .iter()
                .find(|(_, v)| v.is_zero())
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.terms.remove(&k);
            }
        }
    }

    pub fn add(&self, other: &TSeries) -> TSeries {
        let trunc = self.trunc_twice.min(other.trunc_twice);
        let mut out = TSeries::zero(trunc);
        for (m, c) in self.terms.iter().chain(other.terms.iter()) {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &TSeries) -> TSeries {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> TSeries {
        let mut out = TSeries::zero(self.trunc_twice);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }

    pub fn scale(&self, s: &KPoly) -> TSeries {
        let mut out = TSeries::zero(self.trunc_twice);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    /// Retruncate to a (typically lower) weight.
    pub fn truncated(&self, trunc_twice: i64) -> TSeries {
        let mut out = TSeries::zero(trunc_twice);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    /// Keep only monomials of exactly the given weight.
    pub fn weight_part(&self, weight_twice: i64) -> TSeries {
        let mut out = TSeries::zero(self.trunc_twice);
        for (m, c) in &self.terms {
            if m.weight_twice() == weight_twice {
                out.add_term(m.clone(), c.clone());
            }
        }
        out
    }

    /// Substitute k = 0 in every coefficient.
    pub fn at_k_zero(&self) -> TSeries {
        let mut out = TSeries::zero(self.trunc_twice);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), KPoly::from_rat(c.coeff(0)));
        }
        out
    }

    /// Exact truncated product. Operands must share a truncation weight.
    pub fn mul(&self, other: &TSeries) -> Result<TSeries> {
        if self.trunc_twice != other.trunc_twice {
            return Err(Error::Usage(format!(
                "mul requires matching truncation weights ({}/2 vs {}/2)",
                self.trunc_twice, other.trunc_twice
            )));
        }
        Ok(self.mul_trunc(other, self.trunc_twice))
    }

    /// Product truncated at an explicit weight.
    pub fn mul_trunc(&self, other: &TSeries, trunc_twice: i64) -> TSeries {
        let mut out = TSeries::zero(trunc_twice);
        for (ma, ca) in &self.terms {
            let wa = ma.weight_twice();
            if wa > trunc_twice {
                continue;
            }
            for (mb, cb) in &other.terms {
                if wa + mb.weight_twice() > trunc_twice {
                    continue;
                }
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// exp of a series with zero constant term: sum a^m / m!.
    pub fn exp_series(&self) -> Result<TSeries> {
        if !self.constant_term().is_zero() {
            return Err(Error::Usage(
                "exp_series requires a zero constant term".into(),
            ));
        }
        let w = self.trunc_twice;
        let mut out = TSeries::one(w);
        let mut power = TSeries::one(w);
        // Nonzero monomials have weight >= 1/2, so a^m dies after m > 2W.
        let max_m = w.max(0) * 2 + 1;
        for m in 1..=max_m {
            power = power.mul_trunc(self, w);
            if power.is_zero() {
                break;
            }
            let inv_fact = KPoly::from_rat(rat_int(1) / factorial(m as u64));
            out = out.add(&power.scale(&inv_fact));
        }
        Ok(out)
    }

    /// log of a series with constant term 1: sum (-1)^{m+1} (a-1)^m / m.
    pub fn log_series(&self) -> Result<TSeries> {
        let c0 = self.constant_term();
        if c0 != KPoly::from_rat(rat_int(1)) {
            return Err(Error::Usage(
                "log_series requires a constant term equal to 1".into(),
            ));
        }
        let w = self.trunc_twice;
        let u = self.sub(&TSeries::one(w));
        let mut out = TSeries::zero(w);
        let mut power = TSeries::one(w);
        let max_m = w.max(0) * 2 + 1;
        for m in 1..=max_m {
            power = power.mul_trunc(&u, w);
            if power.is_zero() {
                break;
            }
            let sign = if m % 2 == 1 { 1 } else { -1 };
            out = out.add(&power.scale(&KPoly::from_rat(rat(sign, m))));
        }
        Ok(out)
    }

    /// Formal partial derivative with respect to t_n. The result is reliable
    /// only through weight W - (n + 1/2), so the truncation drops accordingly.
    pub fn d_dt(&self, n: HalfIndex) -> TSeries {
        let mut out = TSeries::zero(self.trunc_twice - n.weight_twice());
        for (m, c) in &self.terms {
            let e = m.exponent(n);
            if e == 0 {
                continue;
            }
            let reduced = m.without(n).expect("exponent checked");
            out.add_term(reduced, c.scale(&rat_int(e as i64)));
        }
        out
    }

    /// Numeric evaluation with t_n = sum_i lambda_i^{-(n+1/2)} and k fixed.
    pub fn eval_at_spectrum(&self, lambdas: &[f64], k_value: f64) -> Result<f64> {
        if lambdas.iter().any(|&l| l <= 0.0) {
            return Err(Error::Usage(
                "eval_at_spectrum requires strictly positive eigenvalues".into(),
            ));
        }
        Ok(self.eval_with_tvalues(&|n| lambdas.iter().map(|&l| l.powf(-n.exponent_f64())).sum(), k_value))
    }

    /// Numeric evaluation with caller-supplied t-values.
    pub fn eval_with_tvalues(&self, tval: &dyn Fn(HalfIndex) -> f64, k_value: f64) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut prod = c.eval_f64(k_value);
            for &(n, e) in m.pairs() {
                prod *= tval(n).powi(e as i32);
            }
            acc += prod;
        }
        acc
    }
}

impl fmt::Display for TSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0 + O(w^{}/2)", self.trunc_twice + 1);
        }
        let mut sorted: Vec<_> = self.terms.iter().collect();
        sorted.sort_by_key(|(m, _)| (m.weight_twice(), (*m).clone()));
        let mut first = true;
        for (m, c) in sorted {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if m.is_one() {
                write!(f, "[{}]", c)?;
            } else {
                write!(f, "[{}]*{}", c, m)?;
            }
        }
        Ok(())
    }
}

/// All monomials of weight exactly `weight_twice` over indices with
/// 2n <= max_twice.
pub fn monomials_of_weight(weight_twice: i64, max_twice: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut stack: Vec<(HalfIndex, u32)> = Vec::new();
    fn rec(
        remaining: i64,
        min_twice: u32,
        max_twice: u32,
        stack: &mut Vec<(HalfIndex, u32)>,
        out: &mut Vec<Monomial>,
    ) {
        if remaining == 0 {
            out.push(Monomial::from_pairs(stack.clone()));
            return;
        }
        let mut twice = min_twice;
        while (twice as i64 + 1) <= remaining && twice <= max_twice {
            stack.push((HalfIndex(twice), 1));
            rec(remaining - twice as i64 - 1, twice, max_twice, stack, out);
            stack.pop();
            twice += 1;
        }
    }
    if weight_twice >= 0 {
        rec(weight_twice, 0, max_twice, &mut stack, &mut out);
    }
    out
}

/// All monomials of weight <= weight_twice (excluding the empty monomial
/// when include_one is false).
pub fn monomials_up_to_weight(weight_twice: i64, include_one: bool) -> Vec<Monomial> {
    let mut out = Vec::new();
    for w in 0..=weight_twice.max(-1) {
        if w == 0 && !include_one {
            continue;
        }
        let max_twice = (w - 1).max(0) as u32;
        out.extend(monomials_of_weight(w, max_twice));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(twice: u32) -> HalfIndex {
        HalfIndex(twice)
    }

    #[test]
    fn difference_of_squares() {
        let w = 6;
        let one = TSeries::one(w);
        let t0 = TSeries::var(t(0), w);
        let a = one.add(&t0);
        let b = one.sub(&t0);
        let p = a.mul(&b).unwrap();
        let mut expect = TSeries::one(w);
        expect.add_term(
            Monomial::from_pairs(vec![(t(0), 2)]),
            KPoly::from_rat(rat_int(-1)),
        );
        assert_eq!(p, expect);
    }

    #[test]
    fn half_integer_square_retained() {
        let w = 4; // weight 2
        let th = TSeries::var(t(1), w); // t_{1/2}, weight 1
        let sq = th.mul(&th).unwrap();
        assert_eq!(
            sq.coeff(&Monomial::from_pairs(vec![(t(1), 2)])),
            KPoly::from_rat(rat_int(1))
        );
        let w_low = 3;
        let sq_low = th.truncated(w_low).mul(&th.truncated(w_low)).unwrap();
        assert!(sq_low.is_zero());
    }

    #[test]
    fn mismatched_truncation_rejected() {
        let a = TSeries::one(4);
        let b = TSeries::one(6);
        assert!(a.mul(&b).is_err());
    }

    #[test]
    fn exp_of_t1_matches_taylor() {
        // exp(t_1) at W = 3: 1 + t1 + t1^2/2
        let w = 6;
        let t1 = TSeries::var(t(2), w);
        let e = t1.exp_series().unwrap();
        assert_eq!(e.constant_term(), KPoly::from_rat(rat_int(1)));
        assert_eq!(e.coeff(&Monomial::var(t(2))), KPoly::from_rat(rat_int(1)));
        assert_eq!(
            e.coeff(&Monomial::from_pairs(vec![(t(2), 2)])),
            KPoly::from_rat(rat(1, 2))
        );
        assert_eq!(e.num_terms(), 3);
    }

    #[test]
    fn log_drops_overweight_powers() {
        // log(1 + t0^3/12) at W = 3/2 -> t0^3/12
        let w = 3;
        let mut a = TSeries::one(w);
        a.add_term(
            Monomial::from_pairs(vec![(t(0), 3)]),
            KPoly::from_rat(rat(1, 12)),
        );
        let l = a.log_series().unwrap();
        assert_eq!(
            l.coeff(&Monomial::from_pairs(vec![(t(0), 3)])),
            KPoly::from_rat(rat(1, 12))
        );
        assert_eq!(l.num_terms(), 1);
    }

    #[test]
    fn exp_log_round_trip() {
        let w = 8;
        let mut s = TSeries::zero(w);
        s.add_term(Monomial::var(t(0)), KPoly::from_rat(rat(1, 3)));
        s.add_term(Monomial::var(t(1)), KPoly::monomial(rat(-2, 5), 1));
        s.add_term(
            Monomial::from_pairs(vec![(t(0), 1), (t(3), 1)]),
            KPoly::from_rat(rat(7, 2)),
        );
        let e = s.exp_series().unwrap();
        assert_eq!(e.log_series().unwrap(), s);
        let l = TSeries::one(w).add(&s).log_series().unwrap();
        assert_eq!(l.exp_series().unwrap(), TSeries::one(w).add(&s));
    }

    #[test]
    fn derivative_basics() {
        let w = 8;
        let mut s = TSeries::zero(w);
        s.add_term(
            Monomial::from_pairs(vec![(t(0), 3)]),
            KPoly::from_rat(rat(1, 12)),
        );
        let d = s.d_dt(t(0));
        assert_eq!(
            d.coeff(&Monomial::from_pairs(vec![(t(0), 2)])),
            KPoly::from_rat(rat(1, 4))
        );
        assert_eq!(d.trunc_twice(), w - 1);

        // d/dt_{1/2} of (k/2) t0 t_{1/2}
        let mut s2 = TSeries::zero(w);
        s2.add_term(
            Monomial::from_pairs(vec![(t(0), 1), (t(1), 1)]),
            KPoly::monomial(rat(1, 2), 1),
        );
        let d2 = s2.d_dt(t(1));
        assert_eq!(d2.coeff(&Monomial::var(t(0))), KPoly::monomial(rat(1, 2), 1));
    }

    #[test]
    fn product_rule_spot_check() {
        let w = 10;
        let mut a = TSeries::zero(w);
        a.add_term(Monomial::var(t(0)), KPoly::from_rat(rat(2, 1)));
        a.add_term(
            Monomial::from_pairs(vec![(t(1), 2)]),
            KPoly::monomial(rat(1, 3), 2),
        );
        let mut b = TSeries::zero(w);
        b.add_term(Monomial::var(t(2)), KPoly::from_rat(rat(-1, 2)));
        b.add_term(
            Monomial::from_pairs(vec![(t(0), 1), (t(1), 1)]),
            KPoly::from_rat(rat(5, 7)),
        );
        let n = t(1);
        let lhs = a.mul(&b).unwrap().d_dt(n);
        let rhs = a.d_dt(n).mul_trunc(&b, lhs.trunc_twice()).add(
            &b.d_dt(n).mul_trunc(&a, lhs.trunc_twice()),
        );
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn eval_at_spectrum_basics() {
        let w = 10;
        let t0 = TSeries::var(t(0), w);
        assert!((t0.eval_at_spectrum(&[1.0], 0.0).unwrap() - 1.0).abs() < 1e-15);
        let t1 = TSeries::var(t(2), w);
        assert!((t1.eval_at_spectrum(&[4.0], 0.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(t1.eval_at_spectrum(&[-1.0], 0.0).is_err());
    }

    #[test]
    fn monomial_enumeration() {
        // weight 3/2: t0^3, t0 t_{1/2}, t1
        let ms = monomials_of_weight(3, 2);
        assert_eq!(ms.len(), 3);
        // weight 2: t0^4, t0^2 t_{1/2}, t_{1/2}^2, t0 t1, t_{3/2}
        let ms = monomials_of_weight(4, 3);
        assert_eq!(ms.len(), 5);
    }
}
