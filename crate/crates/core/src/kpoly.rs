//! Dense polynomials in the spectator parameter k over exact rationals.
//!
//! k never participates in any derivative; it rides along as a coefficient
//! ring for everything symbolic. Coefficients are stored ascending by power
//! of k with trailing zeros trimmed, so structural equality is semantic
//! equality.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_traits::Zero;

use crate::rational::{rat_from_str, rat_to_f64, rat_to_string, Rat};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct KPoly {
    coeffs: Vec<Rat>,
}

impl KPoly {
    pub fn zero() -> Self {
        KPoly { coeffs: Vec::new() }
    }

    pub fn from_rat(r: Rat) -> Self {
        let mut p = KPoly { coeffs: vec![r] };
        p.trim();
        p
    }

    /// Build from coefficients ascending in k.
    pub fn from_coeffs(coeffs: Vec<Rat>) -> Self {
        let mut p = KPoly { coeffs };
        p.trim();
        p
    }

    /// c * k^pow
    pub fn monomial(c: Rat, pow: usize) -> Self {
        let mut coeffs = vec![Rat::zero(); pow + 1];
        coeffs[pow] = c;
        let mut p = KPoly { coeffs };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.coeffs.last().map_or(false, |c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.is_zero() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeff(&self, pow: usize) -> Rat {
        self.coeffs.get(pow).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn scale(&self, s: &Rat) -> Self {
        if s.is_zero() {
            return KPoly::zero();
        }
        KPoly::from_coeffs(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Exact substitution k = value.
    pub fn eval(&self, value: &Rat) -> Rat {
        let mut acc = Rat::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * value + c;
        }
        acc
    }

    pub fn eval_f64(&self, k: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * k + rat_to_f64(c);
        }
        acc
    }

    /// Substitute k -> -k (flips odd coefficients).
    pub fn flip_k(&self) -> Self {
        KPoly::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| if i % 2 == 1 { -c.clone() } else { c.clone() })
                .collect(),
        )
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.coeffs.iter().map(rat_to_string).collect()
    }

    pub fn from_strings(parts: &[String]) -> Option<Self> {
        let coeffs = parts
            .iter()
            .map(|s| rat_from_str(s))
            .collect::<Option<Vec<_>>>()?;
        Some(KPoly::from_coeffs(coeffs))
    }
}

impl fmt::Display for KPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (pow, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match pow {
                0 => write!(f, "{}", rat_to_string(c))?,
                1 => write!(f, "({})k", rat_to_string(c))?,
                _ => write!(f, "({})k^{}", rat_to_string(c), pow)?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for KPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl Add for &KPoly {
    type Output = KPoly;
    fn add(self, rhs: &KPoly) -> KPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            coeffs.push(self.coeff(i) + rhs.coeff(i));
        }
        KPoly::from_coeffs(coeffs)
    }
}

impl AddAssign<&KPoly> for KPoly {
    fn add_assign(&mut self, rhs: &KPoly) {
        *self = &*self + rhs;
    }
}

impl Sub for &KPoly {
    type Output = KPoly;
    fn sub(self, rhs: &KPoly) -> KPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            coeffs.push(self.coeff(i) - rhs.coeff(i));
        }
        KPoly::from_coeffs(coeffs)
    }
}

impl Neg for &KPoly {
    type Output = KPoly;
    fn neg(self) -> KPoly {
        KPoly::from_coeffs(self.coeffs.iter().map(|c| -c.clone()).collect())
    }
}

impl Mul for &KPoly {
    type Output = KPoly;
    fn mul(self, rhs: &KPoly) -> KPoly {
        if self.is_zero() || rhs.is_zero() {
            return KPoly::zero();
        }
        let mut coeffs = vec![Rat::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        KPoly::from_coeffs(coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    #[test]
    fn arithmetic_and_trim() {
        let a = KPoly::from_coeffs(vec![rat_int(1), rat_int(2)]); // 1 + 2k
        let b = KPoly::from_coeffs(vec![rat_int(0), rat_int(-2)]); // -2k
        let s = &a + &b;
        assert_eq!(s, KPoly::from_rat(rat_int(1)));
        assert_eq!(s.degree(), Some(0));
        let p = &a * &a; // 1 + 4k + 4k^2
        assert_eq!(p.coeff(1), rat_int(4));
        assert_eq!(p.coeff(2), rat_int(4));
        assert!((&p - &p).is_zero());
    }

    #[test]
    fn eval_and_flip() {
        let p = KPoly::from_coeffs(vec![rat(1, 6), rat(1, 6), Rat::zero(), rat(1, 6)]);
        assert_eq!(p.eval(&rat_int(2)), rat(1, 6) + rat(2, 6) + rat(8, 6));
        let q = p.flip_k();
        assert_eq!(q.coeff(1), rat(-1, 6));
        assert_eq!(q.coeff(3), rat(-1, 6));
        assert_eq!(q.coeff(0), rat(1, 6));
    }

    #[test]
    fn string_round_trip() {
        let p = KPoly::from_coeffs(vec![rat(1, 12), Rat::zero(), rat(1, 4)]);
        let s = p.to_strings();
        assert_eq!(s, vec!["1/12", "0/1", "1/4"]);
        assert_eq!(KPoly::from_strings(&s).unwrap(), p);
    }
}
