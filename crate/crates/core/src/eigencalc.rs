//! Eigenvalue-representation calculus for matrix derivatives.
//!
//! The p-th derivative of an invariant function of a Hermitian matrix reduces
//! to an operator Gamma_c^(p) acting on the eigenvalues, built by the
//! recursion
//!
//!   Gamma_c^(p+1) = d/d(lambda_c) Gamma_c^(p)
//!                 + sum_{d != c} (Gamma_c^(p) - Gamma_d^(p)) / (lambda_c - lambda_d),
//!
//! starting from Gamma_c^(1) = d/d(lambda_c). Operators are kept in
//! partially factored rational form: each term is a rational multiple of a
//! product of 1/(lambda_a - lambda_b) factors times a derivative word.
//! Validation is against central finite differences of the raw matrix
//! derivative, reconstructed spectrally.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::rational::{rat_int, rat_to_f64, Rat};
use crate::rng::Rng;

/// Product of difference factors: (a, b) -> power means (lambda_a - lambda_b)^(-power),
/// stored with a < b; the orientation sign lives in the term coefficient.
pub type Factors = BTreeMap<(usize, usize), u32>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EigTerm {
    pub coeff: Rat,
    pub factors: Factors,
    /// Sorted multiset of eigenvalue indices being differentiated.
    pub word: Vec<usize>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct EigOperator {
    terms: Vec<EigTerm>,
}

impl EigOperator {
    pub fn from_terms(raw: Vec<EigTerm>) -> Self {
        let mut merged: BTreeMap<(Vec<(usize, usize, u32)>, Vec<usize>), Rat> = BTreeMap::new();
        for t in raw {
            let mut word = t.word;
            word.sort_unstable();
            let fkey: Vec<(usize, usize, u32)> =
                t.factors.iter().map(|(&(a, b), &p)| (a, b, p)).collect();
            let entry = merged.entry((fkey, word)).or_insert_with(Rat::zero);
            *entry += t.coeff;
        }
        EigOperator {
            terms: merged
                .into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|((fkey, word), coeff)| EigTerm {
                    coeff,
                    factors: fkey.into_iter().map(|(a, b, p)| ((a, b), p)).collect(),
                    word,
                })
                .collect(),
        }
    }

    pub fn terms(&self) -> &[EigTerm] {
        &self.terms
    }

    pub fn add(&self, other: &EigOperator) -> EigOperator {
        let mut all = self.terms.clone();
        all.extend(other.terms.iter().cloned());
        EigOperator::from_terms(all)
    }

    pub fn sub(&self, other: &EigOperator) -> EigOperator {
        let mut all = self.terms.clone();
        all.extend(other.terms.iter().map(|t| EigTerm {
            coeff: -t.coeff.clone(),
            factors: t.factors.clone(),
            word: t.word.clone(),
        }));
        EigOperator::from_terms(all)
    }

    /// Relabel eigenvalue indices c <-> d.
    fn swap_indices(&self, c: usize, d: usize) -> EigOperator {
        let sw = |i: usize| {
            if i == c {
                d
            } else if i == d {
                c
            } else {
                i
            }
        };
        EigOperator::from_terms(
            self.terms
                .iter()
                .map(|t| {
                    let mut coeff = t.coeff.clone();
                    let mut factors = Factors::new();
                    for (&(a, b), &p) in &t.factors {
                        let (mut a2, mut b2) = (sw(a), sw(b));
                        if a2 > b2 {
                            std::mem::swap(&mut a2, &mut b2);
                            if p % 2 == 1 {
                                coeff = -coeff;
                            }
                        }
                        *factors.entry((a2, b2)).or_insert(0) += p;
                    }
                    EigTerm {
                        coeff,
                        factors,
                        word: t.word.iter().map(|&i| sw(i)).collect(),
                    }
                })
                .collect(),
        )
    }

    /// d/d(lambda_c) as an operator product: differentiates the rational
    /// coefficients and extends the derivative words.
    fn differentiate(&self, c: usize) -> EigOperator {
        let mut out = Vec::new();
        for t in &self.terms {
            // Product rule over the difference factors.
            for (&(a, b), &p) in &t.factors {
                if a != c && b != c {
                    continue;
                }
                let orient = if a == c { 1 } else { -1 };
                let mut factors = t.factors.clone();
                *factors.get_mut(&(a, b)).unwrap() += 1;
                out.push(EigTerm {
                    coeff: &t.coeff * rat_int(-(p as i64) * orient),
                    factors,
                    word: t.word.clone(),
                });
            }
            // Derivative hits the function.
            let mut word = t.word.clone();
            word.push(c);
            out.push(EigTerm {
                coeff: t.coeff.clone(),
                factors: t.factors.clone(),
                word,
            });
        }
        EigOperator::from_terms(out)
    }

    /// Multiply by 1/(lambda_c - lambda_d).
    fn mul_inv_diff(&self, c: usize, d: usize) -> EigOperator {
        EigOperator::from_terms(
            self.terms
                .iter()
                .map(|t| {
                    let (a, b, sign) = if c < d { (c, d, 1) } else { (d, c, -1) };
                    let mut factors = t.factors.clone();
                    *factors.entry((a, b)).or_insert(0) += 1;
                    EigTerm {
                        coeff: &t.coeff * rat_int(sign),
                        factors,
                        word: t.word.clone(),
                    }
                })
                .collect(),
        )
    }

    /// Numeric evaluation at distinct eigenvalues, with the action on the
    /// target function supplied as partial derivatives: `f_partial(word)` is
    /// the mixed partial of f at `lambdas` for a sorted index multiset.
    pub fn evaluate(
        &self,
        lambdas: &[f64],
        f_partial: &dyn Fn(&[usize]) -> f64,
    ) -> Result<f64> {
        for i in 0..lambdas.len() {
            for j in (i + 1)..lambdas.len() {
                if (lambdas[i] - lambdas[j]).abs() < 1e-12 {
                    return Err(Error::Numeric(format!(
                        "coincident eigenvalues {} and {}",
                        i, j
                    )));
                }
            }
        }
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = rat_to_f64(&t.coeff);
            for (&(a, b), &p) in &t.factors {
                v /= (lambdas[a] - lambdas[b]).powi(p as i32);
            }
            acc += v * f_partial(&t.word);
        }
        Ok(acc)
    }

    /// Exact evaluation of the pure-coefficient part per derivative word, at
    /// rational eigenvalues. Used for identity checks.
    pub fn coefficient_table(&self, lambdas: &[Rat]) -> BTreeMap<Vec<usize>, Rat> {
        let mut table: BTreeMap<Vec<usize>, Rat> = BTreeMap::new();
        for t in &self.terms {
            let mut v = t.coeff.clone();
            for (&(a, b), &p) in &t.factors {
                let d = &lambdas[a] - &lambdas[b];
                for _ in 0..p {
                    v = v / d.clone();
                }
            }
            *table.entry(t.word.clone()).or_insert_with(Rat::zero) += v;
        }
        table.retain(|_, v| !v.is_zero());
        table
    }
}

/// Gamma_c^(p) for P eigenvalues, built at c = 0 by the recursion.
pub fn gamma(p: u32, n_eig: usize) -> EigOperator {
    assert!(p >= 1, "gamma requires p >= 1");
    assert!(n_eig >= 2, "gamma requires at least two eigenvalues");
    let mut op = EigOperator::from_terms(vec![EigTerm {
        coeff: rat_int(1),
        factors: Factors::new(),
        word: vec![0],
    }]);
    for _ in 1..p {
        let mut next = op.differentiate(0);
        for d in 1..n_eig {
            let swapped = op.swap_indices(0, d);
            next = next.add(&op.sub(&swapped).mul_inv_diff(0, d));
        }
        op = next;
    }
    op
}

/// The four-group third-derivative form as displayed in eigenvalue
/// coordinates:
///   d^3/dl_c^3
///   + sum_{d!=c} (1/(l_c-l_d)) (d_c - d_d)(2 d_c + d_d)
///   - sum_{d!=c} (1/(l_c-l_d)^2) (d_c - d_d)
///   + 2 sum_{e!=c} sum_{d!=e,c} (1/((l_c-l_e)(l_e-l_d))) (d_c - d_e)
/// with c = 0. Used as an exact cross-check of `gamma(3, _)`.
pub fn gamma3_display_form(n_eig: usize) -> EigOperator {
    let c = 0usize;
    let mut terms = vec![EigTerm {
        coeff: rat_int(1),
        factors: Factors::new(),
        word: vec![c, c, c],
    }];
    let factor = |pairs: &[(usize, usize, u32)]| -> (Factors, Rat) {
        let mut f = Factors::new();
        let mut sign = rat_int(1);
        for &(a, b, p) in pairs {
            let (x, y) = if a < b { (a, b) } else { (b, a) };
            if a > b && p % 2 == 1 {
                sign = -sign;
            }
            *f.entry((x, y)).or_insert(0) += p;
        }
        (f, sign)
    };
    for d in 1..n_eig {
        // (d_c - d_d)(2 d_c + d_d) = 2 d_c^2 - d_c d_d - d_d^2
        let (f1, s1) = factor(&[(c, d, 1)]);
        for (mult, word) in [
            (rat_int(2), vec![c, c]),
            (rat_int(-1), vec![c, d]),
            (rat_int(-1), vec![d, d]),
        ] {
            terms.push(EigTerm {
                coeff: &s1 * mult,
                factors: f1.clone(),
                word,
            });
        }
        let (f2, s2) = factor(&[(c, d, 2)]);
        terms.push(EigTerm {
            coeff: -s2.clone(),
            factors: f2.clone(),
            word: vec![c],
        });
        terms.push(EigTerm {
            coeff: s2,
            factors: f2,
            word: vec![d],
        });
    }
    for e in 1..n_eig {
        for d in 1..n_eig {
            if d == e {
                continue;
            }
            let (f, s) = factor(&[(c, e, 1), (e, d, 1)]);
            terms.push(EigTerm {
                coeff: &s * rat_int(2),
                factors: f.clone(),
                word: vec![c],
            });
            terms.push(EigTerm {
                coeff: &s * rat_int(-2),
                factors: f,
                word: vec![e],
            });
        }
    }
    EigOperator::from_terms(terms)
}

/// The three-term partial-fraction identity
/// 1/((x-y)(x-z)) + 1/((y-x)(y-z)) + 1/((z-x)(z-y)) = 0
/// materialized on concrete indices; callers verify it vanishes.
pub fn three_point_identity(x: usize, y: usize, z: usize) -> EigOperator {
    let build = |a: usize, b: usize, c: usize| -> EigTerm {
        let mut coeff = rat_int(1);
        let mut factors = Factors::new();
        for (p, q) in [(a, b), (a, c)] {
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            if p > q {
                coeff = -coeff;
            }
            *factors.entry((lo, hi)).or_insert(0) += 1;
        }
        EigTerm {
            coeff,
            factors,
            word: vec![],
        }
    };
    EigOperator::from_terms(vec![build(x, y, z), build(y, x, z), build(z, x, y)])
}

// ---------------------------------------------------------------------------
// Dense complex matrices, just big enough for the finite-difference oracle.
// ---------------------------------------------------------------------------

pub type CMat = Vec<Vec<Complex64>>;

pub fn mat_zero(n: usize) -> CMat {
    vec![vec![Complex64::zero(); n]; n]
}

pub fn mat_mul(a: &CMat, b: &CMat) -> CMat {
    let n = a.len();
    let mut out = mat_zero(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == Complex64::zero() {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat_trace(a: &CMat) -> Complex64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn mat_exp(a: &CMat) -> CMat {
    let n = a.len();
    let norm: f64 = a
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let s = norm.log2().ceil().max(0.0) as u32 + 1;
    let scale = (0.5f64).powi(s as i32);
    let mut x = mat_zero(n);
    for i in 0..n {
        for j in 0..n {
            x[i][j] = a[i][j] * scale;
        }
    }
    let mut result = mat_zero(n);
    let mut term = mat_zero(n);
    for i in 0..n {
        result[i][i] = Complex64::new(1.0, 0.0);
        term[i][i] = Complex64::new(1.0, 0.0);
    }
    for m in 1..=24 {
        term = mat_mul(&term, &x);
        let f = 1.0 / (m as f64);
        for i in 0..n {
            for j in 0..n {
                term[i][j] *= f;
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = mat_mul(&result, &result);
    }
    result
}

/// Jacobi eigensolver for complex Hermitian matrices. Returns (eigenvalues,
/// U) with H = U diag(eigenvalues) U^dagger, eigenvalues ascending.
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.len();
    let mut a = h.clone();
    let mut u = mat_zero(n);
    for i in 0..n {
        u[i][i] = Complex64::new(1.0, 0.0);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q].norm_sqr();
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.norm() < 1e-18 {
                    continue;
                }
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns p and q rotate: new_p = c*p - s*conj(phase)*q,
                // new_q = s*phase*p + c*q.
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * phase.conj() * aiq;
                    a[i][q] = s * phase * aip + c * aiq;
                    let uip = u[i][p];
                    let uiq = u[i][q];
                    u[i][p] = c * uip - s * phase.conj() * uiq;
                    u[i][q] = s * phase * uip + c * uiq;
                }
                for j in 0..n {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * phase * aqj;
                    a[q][j] = s * phase.conj() * apj + c * aqj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].re.partial_cmp(&a[j][j].re).unwrap());
    let eigs: Vec<f64> = order.iter().map(|&i| a[i][i].re).collect();
    let mut u_sorted = mat_zero(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            u_sorted[i][new_col] = u[i][old_col];
        }
    }
    (eigs, u_sorted)
}

/// Random Hermitian matrix with a prescribed eigenvalue floor gap: built as
/// U diag(lambda) U^dagger from a random unitary.
pub fn random_hermitian(n: usize, min_gap: f64, rng: &mut Rng) -> CMat {
    // Eigenvalues spaced by at least min_gap.
    let mut lambdas = Vec::with_capacity(n);
    let mut cur = rng.range_f64(0.5, 1.5);
    for _ in 0..n {
        lambdas.push(cur);
        cur += min_gap + rng.range_f64(0.1, 1.2);
    }
    // Random unitary from Gram-Schmidt on a complex Gaussian-ish matrix.
    let mut m = mat_zero(n);
    for i in 0..n {
        for j in 0..n {
            m[i][j] = Complex64::new(rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0));
        }
    }
    for col in 0..n {
        for prev in 0..col {
            let mut dot = Complex64::zero();
            for i in 0..n {
                dot += m[i][prev].conj() * m[i][col];
            }
            for i in 0..n {
                let sub = dot * m[i][prev];
                m[i][col] -= sub;
            }
        }
        let norm: f64 = (0..n).map(|i| m[i][col].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            m[i][col] /= norm;
        }
    }
    let mut h = mat_zero(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::zero();
            for c in 0..n {
                acc += m[i][c] * lambdas[c] * m[j][c].conj();
            }
            h[i][j] = acc;
        }
    }
    h
}

/// Central finite-difference estimate of the iterated matrix-derivative entry
///   (d^p/dLambda^p F)_{ab} = sum over chains d/dLambda_{a c1} ... d/dLambda_{c_{p-1} b} F,
/// with one level of Richardson extrapolation. `p <= 3`.
pub fn matrix_derivative_fd(
    f: &dyn Fn(&CMat) -> Complex64,
    lambda: &CMat,
    p: u32,
    a: usize,
    b: usize,
) -> Result<Complex64> {
    if p == 0 || p > 3 {
        return Err(Error::Usage("matrix_derivative_fd requires 1 <= p <= 3".into()));
    }
    let n = lambda.len();
    let (eigs, _) = hermitian_eigen(lambda);
    let mut min_gap = f64::INFINITY;
    for i in 0..eigs.len() {
        for j in (i + 1)..eigs.len() {
            min_gap = min_gap.min((eigs[i] - eigs[j]).abs());
        }
    }
    if min_gap < 0.1 {
        return Err(Error::Numeric(format!(
            "eigenvalue gap {:.3e} below conditioning threshold",
            min_gap
        )));
    }
    let norm: f64 = lambda.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    // Nested central differences amplify rounding like eps/h^p, so the step
    // grows with the derivative order; one Richardson level controls the
    // truncation side.
    let h0 = match p {
        1 | 2 => 1e-4 * (1.0 + norm),
        _ => 2e-2 * (1.0 + norm),
    };

    // Entry chains (a, c1), (c1, c2), ..., (c_{p-1}, b).
    let chains: Vec<Vec<(usize, usize)>> = match p {
        1 => vec![vec![(a, b)]],
        2 => (0..n).map(|c| vec![(a, c), (c, b)]).collect(),
        _ => {
            let mut v = Vec::new();
            for c in 0..n {
                for d in 0..n {
                    v.push(vec![(a, c), (c, d), (d, b)]);
                }
            }
            v
        }
    };

    fn nested_central(
        f: &dyn Fn(&CMat) -> Complex64,
        base: &CMat,
        entries: &[(usize, usize)],
        h: f64,
    ) -> Complex64 {
        if entries.is_empty() {
            return f(base);
        }
        let (i, j) = entries[0];
        let mut plus = base.clone();
        plus[i][j] += Complex64::new(h, 0.0);
        let mut minus = base.clone();
        minus[i][j] -= Complex64::new(h, 0.0);
        (nested_central(f, &plus, &entries[1..], h) - nested_central(f, &minus, &entries[1..], h))
            / Complex64::new(2.0 * h, 0.0)
    }

    let eval = |h: f64| -> Complex64 {
        chains
            .iter()
            .map(|chain| nested_central(f, lambda, chain, h))
            .sum()
    };
    let d1 = eval(h0);
    let d2 = eval(h0 / 2.0);
    Ok((d2 * 4.0 - d1) / 3.0)
}

/// Spectral reconstruction sum_c <b|phi_c> (Gamma_c^(p) f) <phi_c|a> using the
/// recursion operator and supplied analytic partials of the symmetric
/// function f(lambda_1, ..., lambda_n).
pub fn spectral_reconstruction(
    op: &EigOperator,
    lambda: &CMat,
    f_partial: &dyn Fn(&[usize], &[f64]) -> f64,
    a: usize,
    b: usize,
) -> Result<Complex64> {
    let n = lambda.len();
    let (eigs, u) = hermitian_eigen(lambda);
    let mut acc = Complex64::zero();
    for c in 0..n {
        // Relabel so the operator's index 0 is eigenvalue c.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(0, c);
        let lambdas_view: Vec<f64> = perm.iter().map(|&i| eigs[i]).collect();
        let val = op.evaluate(&lambdas_view, &|word| {
            let mapped: Vec<usize> = {
                let mut w: Vec<usize> = word.iter().map(|&i| perm[i]).collect();
                w.sort_unstable();
                w
            };
            f_partial(&mapped, &eigs)
        })?;
        // <b|phi_c> = U_{b c}, <phi_c|a> = conj(U_{a c})
        acc += u[b][c] * u[a][c].conj() * val;
    }
    Ok(acc)
}
