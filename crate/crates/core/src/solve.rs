//! Recursive solution of the constraint tower for the free energy.
//!
//! F is determined weight level by weight level: at each level the rows
//! "coefficient of a monomial rho in E_m applied to exp(F)" are linear in the
//! level's unknown F-coefficients once everything below is known. The linear
//! systems are solved per power of k (the k-free part first, then each power
//! feeding on the lower ones), every supplied row is enforced, and the
//! result is re-checked through each constraint's validity weight.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::kpoly::KPoly;
use crate::rational::{rat_int, Rat};
use crate::series::{monomials_of_weight, HalfIndex, Monomial, TSeries};
use crate::virasoro::ConstraintEq;

/// Affine function of the current level's unknowns.
#[derive(Clone, Debug, Default)]
struct Aff {
    c0: KPoly,
    lin: BTreeMap<usize, KPoly>,
}

impl Aff {
    fn add_const(&mut self, c: &KPoly) {
        self.c0 += c;
    }

    fn add_lin(&mut self, id: usize, c: &KPoly) {
        let entry = self.lin.entry(id).or_insert_with(KPoly::zero);
        *entry += c;
        if entry.is_zero() {
            self.lin.remove(&id);
        }
    }

    fn is_zero(&self) -> bool {
        self.c0.is_zero() && self.lin.is_empty()
    }
}

/// Falling-factorial multiplicity of applying the derivative word to kappa.
fn derivative_multiplicity(kappa: &Monomial, word: &[HalfIndex]) -> Rat {
    let mut counts: BTreeMap<HalfIndex, u32> = BTreeMap::new();
    for &n in word {
        *counts.entry(n).or_insert(0) += 1;
    }
    let mut mult = Rat::one();
    for (n, c) in counts {
        let e = kappa.exponent(n);
        if e < c {
            return Rat::zero();
        }
        for i in 0..c {
            mult *= rat_int((e - i) as i64);
        }
    }
    mult
}

/// kappa = rho + word - mu when every exponent stays non-negative.
fn source_monomial(rho: &Monomial, word: &[HalfIndex], mu: &Monomial) -> Option<Monomial> {
    let mut pairs: BTreeMap<HalfIndex, i64> = BTreeMap::new();
    for &(n, e) in rho.pairs() {
        *pairs.entry(n).or_insert(0) += e as i64;
    }
    for &n in word {
        *pairs.entry(n).or_insert(0) += 1;
    }
    for &(n, e) in mu.pairs() {
        *pairs.entry(n).or_insert(0) -= e as i64;
    }
    let mut out = Vec::new();
    for (n, e) in pairs {
        if e < 0 {
            return None;
        }
        if e > 0 {
            out.push((n, e as u32));
        }
    }
    Some(Monomial::from_pairs(out))
}

/// Unique F with F(0) = 0 satisfying every supplied constraint through the
/// doubled weight `w_twice`.
pub fn solve_f(w_twice: i64, tower: &[ConstraintEq]) -> Result<TSeries> {
    let mut f = TSeries::zero(w_twice);
    for level in 1..=w_twice {
        let unknown_monos = monomials_of_weight(level, (level - 1).max(0) as u32);
        if unknown_monos.is_empty() {
            continue;
        }
        let ids: BTreeMap<Monomial, usize> = unknown_monos
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();

        // g = exp(F) with the level's coefficients symbolic: the known part
        // is exp of the already-solved F (whose weight-`level` part collects
        // products of lower terms), plus the unknown linear part.
        let g_known = f.truncated(level).exp_series().map_err(|e| {
            Error::Internal(format!("exp of partial solution failed: {}", e))
        })?;

        let g_at = |kappa: &Monomial| -> Aff {
            let mut aff = Aff::default();
            aff.add_const(&g_known.coeff(kappa));
            if kappa.weight_twice() == level {
                if let Some(&id) = ids.get(kappa) {
                    aff.add_lin(id, &KPoly::from_rat(rat_int(1)));
                }
            }
            aff
        };

        // Collect rows from every constraint that can see this level.
        let mut rows: Vec<Aff> = Vec::new();
        for eq in tower {
            let m = eq.half_order;
            let rho_weight = level - m;
            if rho_weight < 0 || rho_weight > eq.validity_twice() {
                continue;
            }
            let rhos = if rho_weight == 0 {
                vec![Monomial::one()]
            } else {
                monomials_of_weight(rho_weight, (rho_weight - 1).max(0) as u32)
            };
            for rho in rhos {
                let mut row = Aff::default();
                let mut beyond_level = false;
                for term in eq.operator.terms() {
                    let Some(kappa) = source_monomial(&rho, &term.derivs, &term.multiplier)
                    else {
                        continue;
                    };
                    let mult = derivative_multiplicity(&kappa, &term.derivs);
                    if mult.is_zero() {
                        continue;
                    }
                    if kappa.weight_twice() > level {
                        beyond_level = true;
                        break;
                    }
                    let c = term.coeff.scale(&mult);
                    let src = g_at(&kappa);
                    row.add_const(&(&src.c0 * &c));
                    for (id, lc) in &src.lin {
                        row.add_lin(*id, &(lc * &c));
                    }
                }
                if !beyond_level && !row.is_zero() {
                    rows.push(row);
                }
            }
        }

        let n = unknown_monos.len();
        if rows.len() < n {
            let names: Vec<String> =
                unknown_monos.iter().map(|m| m.to_string()).collect();
            return Err(Error::UnderDetermined(format!(
                "weight {}/2: {} rows for unknowns {}",
                level,
                rows.len(),
                names.join(", ")
            )));
        }

        let solution = solve_level(&rows, n, level, &unknown_monos)?;
        for (mono, coeff) in unknown_monos.iter().zip(solution) {
            if !coeff.is_zero() {
                f.add_term(mono.clone(), coeff);
            }
        }
    }
    Ok(f)
}

/// Solve sum_j A_j(k) x_j(k) + b(k) = 0 per ascending power of k; the k-free
/// block must be square-solvable, and higher powers feed on the lower ones.
fn solve_level(
    rows: &[Aff],
    n: usize,
    level: i64,
    monos: &[Monomial],
) -> Result<Vec<KPoly>> {
    let max_kdeg = {
        let mut d = 0usize;
        for r in rows {
            if let Some(dd) = r.c0.degree() {
                d = d.max(dd);
            }
            for c in r.lin.values() {
                if let Some(dd) = c.degree() {
                    d = d.max(dd);
                }
            }
        }
        d + 1
    };
    // Solution degree can exceed row degrees through the feedback; generous cap.
    let sol_kdeg = 2 * max_kdeg + level as usize + 2;

    // RREF of the k-free coefficient block, remembering the operations.
    let a0: Vec<Vec<Rat>> = rows
        .iter()
        .map(|r| {
            (0..n)
                .map(|j| {
                    r.lin
                        .get(&j)
                        .map(|c| c.coeff(0))
                        .unwrap_or_else(Rat::zero)
                })
                .collect()
        })
        .collect();

    let n_rows = rows.len();
    let mut m = a0.clone();
    // Track the row operations via an augmented identity so we can apply the
    // same elimination to every k-layer RHS.
    let mut ops: Vec<Vec<Rat>> = (0..n_rows)
        .map(|i| {
            (0..n_rows)
                .map(|j| if i == j { Rat::one() } else { Rat::zero() })
                .collect()
        })
        .collect();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut row = 0usize;
    for col in 0..n {
        let Some(prow) = (row..n_rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, prow);
        ops.swap(row, prow);
        let inv = Rat::one() / m[row][col].clone();
        for c in 0..n {
            m[row][c] = &m[row][c] * &inv;
        }
        for c in 0..n_rows {
            ops[row][c] = &ops[row][c] * &inv;
        }
        for r in 0..n_rows {
            if r == row || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            for c in 0..n {
                let sub = &m[row][c] * &f;
                m[r][c] = &m[r][c] - &sub;
            }
            for c in 0..n_rows {
                let sub = &ops[row][c] * &f;
                ops[r][c] = &ops[r][c] - &sub;
            }
        }
        pivot_of_col[col] = Some(row);
        row += 1;
        if row == n_rows {
            break;
        }
    }
    if pivot_of_col.iter().any(|p| p.is_none()) {
        let names: Vec<String> = pivot_of_col
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_none())
            .map(|(c, _)| monos[c].to_string())
            .collect();
        return Err(Error::UnderDetermined(format!(
            "weight {}/2: monomials {} not fixed by the tower",
            level,
            names.join(", ")
        )));
    }

    // Solve layer by layer in k.
    let mut x: Vec<Vec<Rat>> = vec![Vec::new(); n]; // per unknown, coeffs by k power
    for j in 0..sol_kdeg {
        // RHS layer j: -(b_j + sum_{a>=1} A_a x_{j-a}).
        let mut rhs: Vec<Rat> = Vec::with_capacity(n_rows);
        for r in rows {
            let mut v = -r.c0.coeff(j);
            for (id, c) in &r.lin {
                for a in 1..=j {
                    if c.degree().map_or(true, |d| d < a) {
                        continue;
                    }
                    let prev = x[*id].get(j - a).cloned().unwrap_or_else(Rat::zero);
                    v -= c.coeff(a) * prev;
                }
            }
            rhs.push(v);
        }
        if rhs.iter().all(|v| v.is_zero()) && j >= max_kdeg {
            break;
        }
        // Apply recorded elimination: transformed rhs = ops * rhs.
        let t: Vec<Rat> = (0..n_rows)
            .map(|r| {
                let mut acc = Rat::zero();
                for c in 0..n_rows {
                    if !ops[r][c].is_zero() && !rhs[c].is_zero() {
                        acc += &ops[r][c] * &rhs[c];
                    }
                }
                acc
            })
            .collect();
        // Consistency of the non-pivot rows.
        let pivot_rows: Vec<usize> = pivot_of_col.iter().map(|p| p.unwrap()).collect();
        for r in 0..n_rows {
            if pivot_rows.contains(&r) {
                continue;
            }
            if !t[r].is_zero() {
                return Err(Error::Inconsistent(format!(
                    "weight {}/2, k^{}: conflicting constraint rows",
                    level, j
                )));
            }
        }
        for col in 0..n {
            let val = t[pivot_of_col[col].unwrap()].clone();
            x[col].push(val);
        }
    }
    Ok(x
        .into_iter()
        .map(KPoly::from_coeffs)
        .collect())
}

/// Apply a constraint to exp(F); the all-zero series through the validity
/// weight certifies satisfaction.
pub fn residual(eq: &ConstraintEq, f: &TSeries) -> Result<TSeries> {
    let g = f.exp_series()?;
    let r = eq.operator.apply(&g);
    let valid = eq.validity_twice().min(r.trunc_twice());
    Ok(r.truncated(valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::virasoro::derive_tower;

    #[test]
    fn free_energy_reproduces_table() {
        let tower = derive_tower(9, 4).expect("tower");
        let f = solve_f(9, &tower).expect("solve");
        let expect = fixtures::free_energy_series();
        assert_eq!(f, expect, "\ngot:    {}\nexpect: {}", f, expect);
        for eq in &tower {
            let r = residual(eq, &f).unwrap();
            assert!(r.is_zero(), "m={} residual {}", eq.half_order, r);
        }
    }
}
