//! Exact rational scalars.
//!
//! Everything symbolic in this crate is built over `Rat`, an arbitrary-precision
//! rational kept in lowest terms with a positive denominator. Rendering always
//! includes the denominator ("5/1", "-3/4") so output parses unambiguously.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// Rational from an integer pair. Panics on zero denominator.
pub fn rat(num: i64, den: i64) -> Rat {
    assert!(den != 0, "zero denominator");
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

/// Render as "p/q" with q >= 1, q always present.
pub fn rat_to_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parse "p/q" or a bare integer "p".
pub fn rat_from_str(s: &str) -> Option<Rat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                return None;
            }
            Some(Rat::new(p, q))
        }
        None => {
            let p: BigInt = s.parse().ok()?;
            Some(Rat::from_integer(p))
        }
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    // Split into quotient and remainder so huge numerators stay in range.
    let (q, rem) = (r.numer() / r.denom(), r.numer() % r.denom());
    let q_f64 = bigint_to_f64(&q);
    let rem_rat = Rat::new(rem, r.denom().clone());
    let num = bigint_to_f64(rem_rat.numer());
    let den = bigint_to_f64(rem_rat.denom());
    q_f64 + num / den
}

fn bigint_to_f64(b: &BigInt) -> f64 {
    let s = b.to_string();
    s.parse::<f64>().unwrap_or(if b.is_negative() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    })
}

/// Binomial coefficient with a rational upper argument: C(a, m) = a(a-1)...(a-m+1)/m!.
pub fn binom_rat(a: &Rat, m: u32) -> Rat {
    let mut acc = Rat::one();
    for i in 0..m {
        acc *= a - rat_int(i as i64);
        acc /= rat_int(i as i64 + 1);
    }
    acc
}

/// Integer binomial C(n, m), zero when m > n.
pub fn binom_int(n: u64, m: u64) -> Rat {
    if m > n {
        return Rat::zero();
    }
    binom_rat(&rat_int(n as i64), m as u32)
}

pub fn factorial(n: u64) -> Rat {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    Rat::from_integer(acc)
}
