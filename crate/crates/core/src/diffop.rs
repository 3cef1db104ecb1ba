//! Differential operators on t-series: finite sums of
//! (k-polynomial coefficient) x (t-monomial multiplier) x (list of d/dt_n).
//!
//! Houses the free-boson current operators J_m^(1,2,3) in the variables
//! x_n = t_{(n-1)/2} / n and the generators L_n = J_{2n}^(2) / 4, which close
//! under [L_n, L_m] = (n - m) L_{n+m}.

use std::collections::BTreeMap;

use crate::kpoly::KPoly;
use crate::rational::{rat, rat_int, Rat};
use crate::series::{monomials_up_to_weight, HalfIndex, Monomial, TSeries};

/// One operator term. Derivative indices are a sorted multiset; derivatives
/// in t commute.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OpTerm {
    pub coeff: KPoly,
    pub multiplier: Monomial,
    pub derivs: Vec<HalfIndex>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct DiffOperator {
    terms: Vec<OpTerm>,
}

impl DiffOperator {
    pub fn zero() -> Self {
        DiffOperator { terms: Vec::new() }
    }

    pub fn from_terms(raw: Vec<OpTerm>) -> Self {
        let mut merged: BTreeMap<(Monomial, Vec<HalfIndex>), KPoly> = BTreeMap::new();
        for t in raw {
            let mut derivs = t.derivs;
            derivs.sort();
            let entry = merged
                .entry((t.multiplier, derivs))
                .or_insert_with(KPoly::zero);
            *entry += &t.coeff;
        }
        DiffOperator {
            terms: merged
                .into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|((multiplier, derivs), coeff)| OpTerm {
                    coeff,
                    multiplier,
                    derivs,
                })
                .collect(),
        }
    }

    pub fn terms(&self) -> &[OpTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &DiffOperator) -> DiffOperator {
        let mut all = self.terms.clone();
        all.extend(other.terms.iter().cloned());
        DiffOperator::from_terms(all)
    }

    pub fn scale(&self, s: &KPoly) -> DiffOperator {
        DiffOperator::from_terms(
            self.terms
                .iter()
                .map(|t| OpTerm {
                    coeff: &t.coeff * s,
                    multiplier: t.multiplier.clone(),
                    derivs: t.derivs.clone(),
                })
                .collect(),
        )
    }

    /// Apply to a series: sum over terms of coeff * multiplier * (iterated d_dt).
    ///
    /// Each term's output is reliable through
    /// W - weight(derivs) + weight(multiplier); the result carries the minimum.
    pub fn apply(&self, a: &TSeries) -> TSeries {
        let w_in = a.trunc_twice();
        let mut out_trunc = w_in;
        for t in &self.terms {
            let shift: i64 = t.multiplier.weight_twice()
                - t.derivs.iter().map(|n| n.weight_twice()).sum::<i64>();
            out_trunc = out_trunc.min(w_in + shift);
        }
        let mut out = TSeries::zero(out_trunc);
        for t in &self.terms {
            let mut d = a.clone();
            for &n in &t.derivs {
                d = d.d_dt(n);
            }
            for (m, c) in d.terms() {
                out.add_term(m.mul(&t.multiplier), c * &t.coeff);
            }
        }
        out
    }

    /// Weight shift of each term (uniform for the J and L operators).
    pub fn weight_shifts(&self) -> Vec<i64> {
        let mut shifts: Vec<i64> = self
            .terms
            .iter()
            .map(|t| {
                t.multiplier.weight_twice()
                    - t.derivs.iter().map(|n| n.weight_twice()).sum::<i64>()
            })
            .collect();
        shifts.sort();
        shifts.dedup();
        shifts
    }
}

/// t-index for the boson mode x_j (j >= 1): x_j = t_{(j-1)/2} / j.
fn mode_index(j: i64) -> HalfIndex {
    debug_assert!(j >= 1);
    HalfIndex((j - 1) as u32)
}

/// Build J_m^(level) with mode indices bounded by `cutoff` (that is, every
/// retained t-index satisfies 2n <= cutoff.twice()).
pub fn build_j(level: u8, m: i64, cutoff: HalfIndex) -> DiffOperator {
    let jmax = cutoff.twice() as i64 + 1;
    let mut terms = Vec::new();
    match level {
        1 => {
            if m >= 1 && m <= jmax {
                terms.push(OpTerm {
                    coeff: KPoly::from_rat(rat_int(m)),
                    multiplier: Monomial::one(),
                    derivs: vec![mode_index(m)],
                });
            } else if m <= -1 && -m <= jmax {
                terms.push(OpTerm {
                    coeff: KPoly::from_rat(rat_int(1)),
                    multiplier: Monomial::var(mode_index(-m)),
                    derivs: vec![],
                });
            }
        }
        2 => {
            // dd: i + j = m, both derivatives
            for i in 1..=jmax {
                let j = m - i;
                if (1..=jmax).contains(&j) {
                    terms.push(OpTerm {
                        coeff: KPoly::from_rat(rat_int(i * j)),
                        multiplier: Monomial::one(),
                        derivs: vec![mode_index(i), mode_index(j)],
                    });
                }
            }
            // xd: -i + j = m with i, j >= 1, ordered pairs counted twice
            for i in 1..=jmax {
                let j = m + i;
                if (1..=jmax).contains(&j) {
                    terms.push(OpTerm {
                        coeff: KPoly::from_rat(rat_int(2 * j)),
                        multiplier: Monomial::var(mode_index(i)),
                        derivs: vec![mode_index(j)],
                    });
                }
            }
            // xx: -i - j = m
            for i in 1..=jmax {
                let j = -m - i;
                if (1..=jmax).contains(&j) {
                    terms.push(OpTerm {
                        coeff: KPoly::from_rat(rat_int(1)),
                        multiplier: Monomial::var(mode_index(i)).mul(&Monomial::var(mode_index(j))),
                        derivs: vec![],
                    });
                }
            }
        }
        3 => {
            for i in 1..=jmax {
                for j in 1..=jmax {
                    // ddd: i + j + l = m
                    let l = m - i - j;
                    if (1..=jmax).contains(&l) {
                        terms.push(OpTerm {
                            coeff: KPoly::from_rat(rat_int(i * j * l)),
                            multiplier: Monomial::one(),
                            derivs: vec![mode_index(i), mode_index(j), mode_index(l)],
                        });
                    }
                    // xdd: -i + j + l = m, 3 arrangements
                    let l = m + i - j;
                    if (1..=jmax).contains(&l) {
                        terms.push(OpTerm {
                            coeff: KPoly::from_rat(rat_int(3 * j * l)),
                            multiplier: Monomial::var(mode_index(i)),
                            derivs: vec![mode_index(j), mode_index(l)],
                        });
                    }
                    // xxd: -i - j + l = m, 3 arrangements
                    let l = m + i + j;
                    if (1..=jmax).contains(&l) {
                        terms.push(OpTerm {
                            coeff: KPoly::from_rat(rat_int(3 * l)),
                            multiplier: Monomial::var(mode_index(i))
                                .mul(&Monomial::var(mode_index(j))),
                            derivs: vec![mode_index(l)],
                        });
                    }
                    // xxx: -i - j - l = m
                    let l = -m - i - j;
                    if (1..=jmax).contains(&l) {
                        terms.push(OpTerm {
                            coeff: KPoly::from_rat(rat_int(1)),
                            multiplier: Monomial::var(mode_index(i))
                                .mul(&Monomial::var(mode_index(j)))
                                .mul(&Monomial::var(mode_index(l))),
                            derivs: vec![],
                        });
                    }
                }
            }
        }
        _ => panic!("J level must be 1, 2 or 3"),
    }
    DiffOperator::from_terms(terms)
}

/// L_n = J_{2n}^(2) / 4.
pub fn build_l(n: i64, cutoff: HalfIndex) -> DiffOperator {
    build_j(2, 2 * n, cutoff).scale(&KPoly::from_rat(rat(1, 4)))
}

/// Central constant in [L_n, L_{-n}]. The half-integer variable lattice makes
/// L_n a rescaled standard mode L_n = (1/2) L^std_{2n}, so the c = 1 anomaly
/// survives at n + m = 0: [L_n, L_{-n}] = 2n L_0 + n(4n^2 - 1)/24.
pub fn central_term(n: i64, m: i64) -> Rat {
    if n + m == 0 {
        rat(n * (4 * n * n - 1), 24)
    } else {
        Rat::from_integer(0.into())
    }
}

/// Check [L_n, L_m] = (n - m) L_{n+m} + central_term(n, m) on every monomial
/// of weight <= W (doubled weight `w_twice`).
pub fn commutator_check(n: i64, m: i64, w_twice: i64) -> bool {
    // Generous paddings: operators shift weight by -n (doubled: -2n), and the
    // cutoff has to cover every index reachable from the basis.
    let pad = 2 * (n.abs() + m.abs()) + 4;
    let cutoff = HalfIndex((w_twice + pad).max(4) as u32);
    let ln = build_l(n, cutoff);
    let lm = build_l(m, cutoff);
    let lnm = build_l(n + m, cutoff);
    let work_trunc = w_twice + 2 * pad;

    for mono in monomials_up_to_weight(w_twice, true) {
        let basis = {
            let mut s = TSeries::zero(work_trunc);
            s.add_term(mono.clone(), KPoly::from_rat(rat_int(1)));
            s
        };
        let a = ln.apply(&lm.apply(&basis));
        let b = lm.apply(&ln.apply(&basis));
        let c = lnm.apply(&basis).scale(&KPoly::from_rat(rat_int(n - m)));
        let z = basis.scale(&KPoly::from_rat(central_term(n, m)));
        let trunc = a.trunc_twice().min(b.trunc_twice()).min(c.trunc_twice());
        let resid = a
            .truncated(trunc)
            .sub(&b.truncated(trunc))
            .sub(&c.truncated(trunc))
            .sub(&z.truncated(trunc));
        if !resid.is_zero() {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeff_of(op: &DiffOperator, mult: Monomial, derivs: Vec<HalfIndex>) -> KPoly {
        let mut d = derivs;
        d.sort();
        op.terms()
            .iter()
            .find(|t| t.multiplier == mult && t.derivs == d)
            .map(|t| t.coeff.clone())
            .unwrap_or_else(KPoly::zero)
    }

    #[test]
    fn j2_minus2_matches_display() {
        // J_{-2}^(2) = t0^2 + 2 sum (2n+1) t_{n+1} d/dt_n
        let cutoff = HalfIndex(8);
        let op = build_j(2, -2, cutoff);
        assert_eq!(
            coeff_of(&op, Monomial::from_pairs(vec![(HalfIndex(0), 2)]), vec![]),
            KPoly::from_rat(rat_int(1))
        );
        for twice_n in 0..=5u32 {
            let n_plus_1 = HalfIndex(twice_n + 2);
            let c = coeff_of(
                &op,
                Monomial::var(n_plus_1),
                vec![HalfIndex(twice_n)],
            );
            assert_eq!(c, KPoly::from_rat(rat_int(2 * (twice_n as i64 + 1))));
        }
    }

    #[test]
    fn j2_zero_and_minus1_match_display() {
        let cutoff = HalfIndex(8);
        let op0 = build_j(2, 0, cutoff);
        let opm1 = build_j(2, -1, cutoff);
        for twice_n in 0..=6u32 {
            let n = HalfIndex(twice_n);
            // 4(n + 1/2) = 2(2n+1)
            assert_eq!(
                coeff_of(&op0, Monomial::var(n), vec![n]),
                KPoly::from_rat(rat_int(2 * (twice_n as i64 + 1)))
            );
            let n_half = HalfIndex(twice_n + 1);
            assert_eq!(
                coeff_of(&opm1, Monomial::var(n_half), vec![n]),
                KPoly::from_rat(rat_int(2 * (twice_n as i64 + 1)))
            );
        }
    }

    #[test]
    fn j2_minus4_matches_display() {
        // J_{-4}^(2) = 2 t0 t1 + t_{1/2}^2 + 4 sum (n+1/2) t_{n+2} d/dt_n
        let op = build_j(2, -4, HalfIndex(8));
        assert_eq!(
            coeff_of(
                &op,
                Monomial::from_pairs(vec![(HalfIndex(0), 1), (HalfIndex(2), 1)]),
                vec![]
            ),
            KPoly::from_rat(rat_int(2))
        );
        assert_eq!(
            coeff_of(&op, Monomial::from_pairs(vec![(HalfIndex(1), 2)]), vec![]),
            KPoly::from_rat(rat_int(1))
        );
        assert_eq!(
            coeff_of(&op, Monomial::var(HalfIndex(4)), vec![HalfIndex(0)]),
            KPoly::from_rat(rat_int(2))
        );
    }

    #[test]
    fn j0_on_t1_gives_6_t1() {
        let op = build_j(2, 0, HalfIndex(6));
        let w = 8;
        let t1 = TSeries::var(HalfIndex(2), w);
        let r = op.apply(&t1);
        assert_eq!(r.coeff(&Monomial::var(HalfIndex(2))), KPoly::from_rat(rat_int(6)));
        assert_eq!(r.num_terms(), 1);
    }

    #[test]
    fn pure_derivative_kills_constants() {
        let op = build_j(2, 2, HalfIndex(6));
        let one = TSeries::one(8);
        // J_2^(2) has dd and xd terms only; on 1 everything dies.
        assert!(op.apply(&one).is_zero());
    }

    #[test]
    fn apply_is_linear() {
        let op = build_j(2, -2, HalfIndex(8));
        let w = 8;
        let mut a = TSeries::zero(w);
        a.add_term(Monomial::var(HalfIndex(0)), KPoly::from_rat(rat(2, 3)));
        a.add_term(Monomial::from_pairs(vec![(HalfIndex(1), 2)]), KPoly::monomial(rat_int(1), 1));
        let mut b = TSeries::zero(w);
        b.add_term(Monomial::var(HalfIndex(4)), KPoly::from_rat(rat(-1, 5)));
        let lhs = op.apply(&a.add(&b));
        let rhs = op.apply(&a).add(&op.apply(&b));
        assert_eq!(lhs, rhs.truncated(lhs.trunc_twice()));
    }

    #[test]
    fn commutators_small_range() {
        assert!(commutator_check(1, 1, 4)); // [L, L] = 0
        assert!(commutator_check(0, -1, 4));
        assert!(commutator_check(1, -1, 4));
        assert!(commutator_check(2, 1, 4));
    }

    #[test]
    fn central_term_is_real_at_n_plus_m_zero() {
        // Without the central constant the (1, -1) relation fails by exactly
        // 1/8 times the identity: L_1 L_{-1} 1 = 1/8 while L_{-1} L_1 1 and
        // 2 L_0 1 vanish.
        let cutoff = HalfIndex(10);
        let l1 = build_l(1, cutoff);
        let lm1 = build_l(-1, cutoff);
        let one = TSeries::one(12);
        let v = l1.apply(&lm1.apply(&one));
        assert_eq!(v.constant_term(), KPoly::from_rat(rat(1, 8)));
        assert!(lm1.apply(&l1.apply(&one)).is_zero());
        assert_eq!(central_term(1, -1), rat(1, 8));
        assert_eq!(central_term(2, 1), rat_int(0));
    }
}
