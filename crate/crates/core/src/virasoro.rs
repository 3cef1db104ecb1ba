//! Mechanical derivation of the constraint tower from the equations of motion.
//!
//! The matrix integral obeys, for each eigenvalue lambda_c of the source,
//!
//!   Gamma_c^(3) Z - lambda_c dZ/dlambda_c - (P + k) Z = 0,
//!
//! with Gamma^(3) from `eigencalc`. Writing Z = Z_0 g and passing to the
//! variables t_n turns the lambda_1^{-m/2} coefficient of this identity into
//! a differential operator E_m in the t_n annihilating g. The rewriting into
//! t-monomials is done exactly: the identity is expanded as a Laurent series
//! in x = lambda_1^{-1/2} over many exact rational spectator spectra, and the
//! operator coefficients are recovered by solving the resulting linear
//! systems over Q. Monomial bases are enumerated per order and derivative
//! word from the degree sectors the equation of motion allows; a basis with
//! at most r parts is resolvable once the spectator count reaches r, and
//! stabilization is confirmed by re-deriving at P + 1.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::diffop::{DiffOperator, OpTerm};
use crate::eigencalc::gamma;
use crate::error::{Error, Result};
use crate::kpoly::KPoly;
use crate::rational::{binom_int, rat, rat_int, Rat};
use crate::series::{HalfIndex, Monomial};

use num_traits::{One, Zero};

// ---------------------------------------------------------------------------
// Laurent series in x = lambda_1^{-1/2} with KPoly coefficients.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XSeries {
    min_pow: i64,
    coeffs: Vec<KPoly>,
}

impl XSeries {
    pub fn zero() -> Self {
        XSeries {
            min_pow: 0,
            coeffs: Vec::new(),
        }
    }

    pub fn monomial(c: KPoly, pow: i64) -> Self {
        if c.is_zero() {
            return XSeries::zero();
        }
        XSeries {
            min_pow: pow,
            coeffs: vec![c],
        }
    }

    pub fn constant(c: KPoly) -> Self {
        XSeries::monomial(c, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn coeff(&self, pow: i64) -> KPoly {
        if pow < self.min_pow {
            return KPoly::zero();
        }
        self.coeffs
            .get((pow - self.min_pow) as usize)
            .cloned()
            .unwrap_or_else(KPoly::zero)
    }

    fn normalize(&mut self) {
        while self.coeffs.first().map_or(false, |c| c.is_zero()) {
            self.coeffs.remove(0);
            self.min_pow += 1;
        }
        while self.coeffs.last().map_or(false, |c| c.is_zero()) {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.min_pow = 0;
        }
    }

    pub fn add_assign(&mut self, other: &XSeries) {
        if other.coeffs.is_empty() {
            return;
        }
        if self.coeffs.is_empty() {
            *self = other.clone();
            return;
        }
        let min = self.min_pow.min(other.min_pow);
        let max = (self.min_pow + self.coeffs.len() as i64)
            .max(other.min_pow + other.coeffs.len() as i64);
        let mut coeffs = vec![KPoly::zero(); (max - min) as usize];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[(self.min_pow - min) as usize + i] = c.clone();
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            coeffs[(other.min_pow - min) as usize + i] += c;
        }
        *self = XSeries { min_pow: min, coeffs };
        self.normalize();
    }

    /// Product truncated at x^max_pow.
    pub fn mul(&self, other: &XSeries, max_pow: i64) -> XSeries {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return XSeries::zero();
        }
        let min = self.min_pow + other.min_pow;
        if min > max_pow {
            return XSeries::zero();
        }
        let len = ((max_pow - min) as usize + 1)
            .min(self.coeffs.len() + other.coeffs.len() - 1);
        let mut coeffs = vec![KPoly::zero(); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() || i >= len {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j >= len {
                    break;
                }
                coeffs[i + j] += &(a * b);
            }
        }
        let mut s = XSeries { min_pow: min, coeffs };
        s.normalize();
        s
    }

    pub fn scale(&self, c: &KPoly) -> XSeries {
        if c.is_zero() {
            return XSeries::zero();
        }
        let mut s = XSeries {
            min_pow: self.min_pow,
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        };
        s.normalize();
        s
    }

    pub fn min_pow(&self) -> i64 {
        self.min_pow
    }

    pub fn max_pow(&self) -> i64 {
        self.min_pow + self.coeffs.len() as i64 - 1
    }
}

// ---------------------------------------------------------------------------
// Compiled conjugated master equation.
// ---------------------------------------------------------------------------

/// Differentiated building blocks whose per-sample values are exact scalars
/// or x-series. Eigenvalue index 0 is the expansion eigenvalue.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum NodeKey {
    /// l_j = d log Z_0 / d lambda_j, differentiated by the sorted index list.
    LJet { j: usize, derivs: Vec<usize> },
    /// The (order)-th lambda_j-derivative of dt_n/dlambda_j.
    TJet { j: usize, twice_n: u32, order: u32 },
    /// (lambda_a - lambda_b)^(-pow) with a < b.
    DiffFac { a: usize, b: usize, pow: u32 },
    /// lambda_1^pow (the expansion eigenvalue).
    LambdaPow { pow: i64 },
}

#[derive(Clone, Debug)]
struct CTerm {
    coeff: KPoly,
    nodes: Vec<NodeKey>,
    word: Vec<u32>, // doubled t-indices, sorted
}

#[derive(Clone, Copy, Debug)]
pub struct DeriveConfig {
    /// Highest x-order (constraint half-order m) produced.
    pub max_order: i64,
    /// Cap on the doubled weight of derivative words (2W for a target
    /// truncation weight W of the free-energy solve).
    pub word_cap: i64,
    /// Cap on the total degree (part count) of basis monomials; resolvable
    /// only when the spectator count reaches it.
    pub parts_cap: u32,
    /// Spectator sample count; 0 means "size to the largest block".
    pub n_samples: usize,
}

impl DeriveConfig {
    pub fn for_weight(w_twice: i64) -> Self {
        DeriveConfig {
            max_order: w_twice,
            word_cap: w_twice,
            parts_cap: 3,
            n_samples: 0,
        }
    }
}

struct Compiled {
    terms: Vec<(KPoly, Vec<u32>, u32)>, // coeff, node ids, word id
    nodes: Vec<NodeKey>,
    words: Vec<Vec<u32>>,
    p_eig: usize,
    cfg: DeriveConfig,
}

fn nabla(a: usize, state: Vec<CTerm>, cfg: &DeriveConfig) -> Vec<CTerm> {
    let mut out = Vec::with_capacity(state.len() * 8);
    for ct in state {
        // Multiplication by l_a.
        {
            let mut t = ct.clone();
            t.nodes.push(NodeKey::LJet { j: a, derivs: vec![] });
            out.push(t);
        }
        // Leibniz over the differentiable nodes.
        for idx in 0..ct.nodes.len() {
            match &ct.nodes[idx] {
                NodeKey::LJet { j, derivs } => {
                    let mut d = derivs.clone();
                    d.push(a);
                    d.sort_unstable();
                    let mut t = ct.clone();
                    t.nodes[idx] = NodeKey::LJet { j: *j, derivs: d };
                    out.push(t);
                }
                NodeKey::TJet { j, twice_n, order } => {
                    if *j == a {
                        let mut t = ct.clone();
                        t.nodes[idx] = NodeKey::TJet {
                            j: *j,
                            twice_n: *twice_n,
                            order: order + 1,
                        };
                        out.push(t);
                    }
                }
                _ => {}
            }
        }
        // Derivative hits g: extend the t-word.
        let word_weight: i64 = ct.word.iter().map(|&tw| tw as i64 + 1).sum();
        let mut twice_n = 0u32;
        while word_weight + twice_n as i64 + 1 <= cfg.word_cap {
            let mut t = ct.clone();
            t.nodes.push(NodeKey::TJet {
                j: a,
                twice_n,
                order: 0,
            });
            t.word.push(twice_n);
            t.word.sort_unstable();
            out.push(t);
            twice_n += 1;
        }
    }
    out
}

fn compile(p_eig: usize, cfg: DeriveConfig) -> Compiled {
    let g3 = gamma(3, p_eig);
    let mut raw: Vec<CTerm> = Vec::new();

    for gt in g3.terms() {
        let mut state = vec![CTerm {
            coeff: KPoly::from_rat(gt.coeff.clone()),
            nodes: Vec::new(),
            word: Vec::new(),
        }];
        for &a in gt.word.iter().rev() {
            state = nabla(a, state, &cfg);
        }
        for t in &mut state {
            for (&(a, b), &p) in &gt.factors {
                t.nodes.push(NodeKey::DiffFac { a, b, pow: p });
            }
        }
        raw.extend(state);
    }

    // - lambda_1 (d_1 + l_1) g
    let mut lam_state = nabla(
        0,
        vec![CTerm {
            coeff: KPoly::from_rat(rat_int(-1)),
            nodes: Vec::new(),
            word: Vec::new(),
        }],
        &cfg,
    );
    for t in &mut lam_state {
        t.nodes.push(NodeKey::LambdaPow { pow: 1 });
    }
    raw.extend(lam_state);

    // - (P + k) g
    raw.push(CTerm {
        coeff: KPoly::from_coeffs(vec![rat_int(-(p_eig as i64)), rat_int(-1)]),
        nodes: Vec::new(),
        word: Vec::new(),
    });

    // Intern nodes and words, merge identical terms.
    let mut node_ids: BTreeMap<NodeKey, u32> = BTreeMap::new();
    let mut word_ids: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    let mut merged: BTreeMap<(Vec<u32>, u32), KPoly> = BTreeMap::new();
    for mut ct in raw {
        ct.nodes.sort();
        let node_vec: Vec<u32> = ct
            .nodes
            .iter()
            .map(|n| {
                let next = node_ids.len() as u32;
                *node_ids.entry(n.clone()).or_insert(next)
            })
            .collect();
        let next_w = word_ids.len() as u32;
        let word_id = *word_ids.entry(ct.word.clone()).or_insert(next_w);
        let entry = merged
            .entry((node_vec, word_id))
            .or_insert_with(KPoly::zero);
        *entry += &ct.coeff;
    }
    let mut nodes = vec![NodeKey::LambdaPow { pow: 0 }; node_ids.len()];
    for (k, v) in node_ids {
        nodes[v as usize] = k;
    }
    let mut words = vec![Vec::new(); word_ids.len()];
    for (k, v) in word_ids {
        words[v as usize] = k;
    }
    Compiled {
        terms: merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((n, w), c)| (c, n, w))
            .collect(),
        nodes,
        words,
        p_eig,
        cfg,
    }
}

// ---------------------------------------------------------------------------
// Per-sample evaluation.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Val {
    Scalar(KPoly),
    Series(XSeries),
}

/// Atom products closed under eigenvalue differentiation: powers of
/// x_i = lambda_i^{-1/2} and of 1/(u_i + u_j), u = 1/x.
#[derive(Clone, Debug)]
struct ExTerm {
    c: KPoly,
    xpows: BTreeMap<usize, i64>,
    a3: BTreeMap<(usize, usize), u32>,
}

fn ex_differentiate(terms: &[ExTerm], a: usize) -> Vec<ExTerm> {
    let mut out = Vec::new();
    for t in terms {
        for (&i, &p) in &t.xpows {
            if i != a || p == 0 {
                continue;
            }
            // d/dlambda_a x_a^p = -(p/2) x_a^(p+2)
            let mut nt = t.clone();
            nt.c = nt.c.scale(&rat(-p, 2));
            *nt.xpows.get_mut(&i).unwrap() += 2;
            out.push(nt);
        }
        for (&(i, j), &q) in &t.a3 {
            if i != a && j != a {
                continue;
            }
            // d/dlambda_a (u_i + u_j)^(-q) = -(q/2) (u_i + u_j)^(-q-1) x_a
            let mut nt = t.clone();
            nt.c = nt.c.scale(&rat(-(q as i64), 2));
            *nt.a3.get_mut(&(i, j)).unwrap() += 1;
            *nt.xpows.entry(a).or_insert(0) += 1;
            out.push(nt);
        }
    }
    out
}

/// l_j = u_j + ((2k-1)/4) x_j^2 - (1/2) sum_{i != j} x_j / (u_j + u_i).
fn ell_expr(j: usize, p_eig: usize) -> Vec<ExTerm> {
    let mut terms = vec![
        ExTerm {
            c: KPoly::from_rat(rat_int(1)),
            xpows: [(j, -1)].into_iter().collect(),
            a3: BTreeMap::new(),
        },
        ExTerm {
            c: KPoly::from_coeffs(vec![rat(-1, 4), rat(1, 2)]),
            xpows: [(j, 2)].into_iter().collect(),
            a3: BTreeMap::new(),
        },
    ];
    for i in 0..p_eig {
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        terms.push(ExTerm {
            c: KPoly::from_rat(rat(-1, 2)),
            xpows: [(j, 1)].into_iter().collect(),
            a3: [(key, 1)].into_iter().collect(),
        });
    }
    terms
}

struct Sample {
    /// u_i = sqrt(lambda_i) for spectators i = 1..P-1; u[0] unused.
    u: Vec<Rat>,
    /// Spectator power sums t_n = sum_i u_i^{-(2n+1)}, indexed by 2n.
    tvals: Vec<Rat>,
}

impl Sample {
    /// Deterministic distinct rational square roots.
    fn generate(index: usize, p_eig: usize) -> Sample {
        let mut u = vec![Rat::zero(); p_eig];
        let mut used: Vec<Rat> = Vec::new();
        let mut state = (index as u64)
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(12345);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            state >> 33
        };
        for i in 1..p_eig {
            loop {
                let cand = rat_int(2 + (next() % 61) as i64);
                if !used.contains(&cand) {
                    used.push(cand.clone());
                    u[i] = cand;
                    break;
                }
            }
        }
        let tvals = (0..32)
            .map(|twice_n| {
                let e = twice_n as i64 + 1;
                let mut acc = Rat::zero();
                for ui in &u[1..] {
                    acc += pow_rat(ui, -e);
                }
                acc
            })
            .collect();
        Sample { u, tvals }
    }

    /// Spectator part of t_n: sum over i >= 1 of u_i^{-(2n+1)}.
    fn t_value(&self, twice_n: u32) -> Rat {
        self.tvals[twice_n as usize].clone()
    }

    /// Negative moment sum_i u_i^a (a >= 1).
    fn neg_moment(&self, a: u32) -> Rat {
        let mut acc = Rat::zero();
        for ui in &self.u[1..] {
            acc += pow_rat(ui, a as i64);
        }
        acc
    }
}

fn pow_rat(u: &Rat, e: i64) -> Rat {
    let mut base = if e >= 0 { u.clone() } else { Rat::one() / u };
    let mut n = e.unsigned_abs();
    let mut acc = Rat::one();
    while n > 0 {
        if n & 1 == 1 {
            acc *= base.clone();
        }
        base = &base * &base;
        n >>= 1;
    }
    acc
}

fn eval_node(key: &NodeKey, sample: &Sample, p_eig: usize, max_pow: i64) -> Val {
    match key {
        NodeKey::LambdaPow { pow } => {
            Val::Series(XSeries::monomial(KPoly::from_rat(rat_int(1)), -2 * pow))
        }
        NodeKey::DiffFac { a, b, pow } => {
            if *a == 0 {
                // (lambda_1 - lambda_b)^(-pow) = x^{2p} sum_r C(p-1+r, r) lambda_b^r x^{2r}
                let lam_b = &sample.u[*b] * &sample.u[*b];
                let mut s = XSeries::zero();
                let mut lam_pow = Rat::one();
                let mut r = 0i64;
                while 2 * (*pow as i64) + 2 * r <= max_pow {
                    let c = binom_int(*pow as u64 - 1 + r as u64, r as u64) * lam_pow.clone();
                    s.add_assign(&XSeries::monomial(
                        KPoly::from_rat(c),
                        2 * (*pow as i64) + 2 * r,
                    ));
                    lam_pow *= lam_b.clone();
                    r += 1;
                }
                Val::Series(s)
            } else {
                let la = &sample.u[*a] * &sample.u[*a];
                let lb = &sample.u[*b] * &sample.u[*b];
                Val::Scalar(KPoly::from_rat(pow_rat(&(la - lb), -(*pow as i64))))
            }
        }
        NodeKey::TJet { j, twice_n, order } => {
            // -(n+1/2) prod_{i<order} (-(n+3/2+i)) x_j^{2n+3+2 order}
            let mut c = rat(-(*twice_n as i64 + 1), 2);
            for i in 0..*order {
                c *= rat(-(*twice_n as i64 + 3 + 2 * i as i64), 2);
            }
            let xp = *twice_n as i64 + 3 + 2 * *order as i64;
            if *j == 0 {
                Val::Series(XSeries::monomial(KPoly::from_rat(c), xp))
            } else {
                Val::Scalar(KPoly::from_rat(c * pow_rat(&sample.u[*j], -xp)))
            }
        }
        NodeKey::LJet { j, derivs } => {
            let mut expr = ell_expr(*j, p_eig);
            for &a in derivs {
                expr = ex_differentiate(&expr, a);
            }
            let mut acc_scalar = KPoly::zero();
            let mut acc_series = XSeries::zero();
            let mut any_series = false;
            for t in &expr {
                let mut scalar = t.c.clone();
                let mut series: Option<XSeries> = None;
                for (&i, &p) in &t.xpows {
                    if p == 0 {
                        continue;
                    }
                    if i == 0 {
                        let m = XSeries::monomial(KPoly::from_rat(rat_int(1)), p);
                        series = Some(match series {
                            None => m,
                            Some(s) => s.mul(&m, max_pow),
                        });
                    } else {
                        scalar = scalar.scale(&pow_rat(&sample.u[i], -p));
                    }
                }
                for (&(i, jj), &q) in &t.a3 {
                    if q == 0 {
                        continue;
                    }
                    if i == 0 {
                        // (u_1 + u_jj)^(-q) = x^q (1 + u_jj x)^(-q)
                        let uj = sample.u[jj].clone();
                        let mut s = XSeries::zero();
                        let mut upow = Rat::one();
                        let mut r = 0i64;
                        while q as i64 + r <= max_pow {
                            let sign = if r % 2 == 0 { 1 } else { -1 };
                            let c = binom_int(q as u64 - 1 + r as u64, r as u64)
                                * upow.clone()
                                * rat_int(sign);
                            s.add_assign(&XSeries::monomial(KPoly::from_rat(c), q as i64 + r));
                            upow *= uj.clone();
                            r += 1;
                        }
                        series = Some(match series {
                            None => s,
                            Some(acc) => acc.mul(&s, max_pow),
                        });
                    } else {
                        let denom = &sample.u[i] + &sample.u[jj];
                        scalar = scalar.scale(&pow_rat(&denom, -(q as i64)));
                    }
                }
                if scalar.is_zero() {
                    continue;
                }
                match series {
                    None => acc_scalar += &scalar,
                    Some(s) => {
                        any_series = true;
                        acc_series.add_assign(&s.scale(&scalar));
                    }
                }
            }
            if any_series {
                acc_series.add_assign(&XSeries::constant(acc_scalar));
                Val::Series(acc_series)
            } else {
                Val::Scalar(acc_scalar)
            }
        }
    }
}

/// The conjugated master identity over one spectator sample: for each
/// derivative word, the Laurent series in x through x^max_pow.
fn evaluate_sample(comp: &Compiled, sample: &Sample, max_pow: i64) -> Vec<XSeries> {
    let node_vals: Vec<Val> = comp
        .nodes
        .iter()
        .map(|k| eval_node(k, sample, comp.p_eig, max_pow))
        .collect();
    let mut out = vec![XSeries::zero(); comp.words.len()];
    let mut product_cache: BTreeMap<&[u32], Val> = BTreeMap::new();
    for (coeff, node_ids, word_id) in &comp.terms {
        let folded = product_cache.entry(node_ids.as_slice()).or_insert_with(|| {
            let mut scalar = KPoly::from_rat(Rat::one());
            let mut series: Option<XSeries> = None;
            for &nid in node_ids {
                match &node_vals[nid as usize] {
                    Val::Scalar(kp) => scalar = &scalar * kp,
                    Val::Series(s) => {
                        series = Some(match series {
                            None => s.clone(),
                            Some(acc) => acc.mul(s, max_pow),
                        });
                    }
                }
            }
            match series {
                None => Val::Scalar(scalar),
                Some(s) => Val::Series(s.scale(&scalar)),
            }
        });
        let contrib = match folded {
            Val::Scalar(kp) => XSeries::constant(kp as &KPoly * coeff),
            Val::Series(s) => s.scale(coeff),
        };
        out[*word_id as usize].add_assign(&contrib);
    }
    out
}

// ---------------------------------------------------------------------------
// Solving for the constraint operators.
// ---------------------------------------------------------------------------

/// Where a derived operator came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub p_eigenvalues: usize,
    pub samples: usize,
    pub word_cap: i64,
    pub parts_cap: u32,
    pub stabilized_with: Option<usize>,
}

/// One derived constraint: `operator` annihilates g = Z/Z_0 through the
/// validity weight implied by the derivation caps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintEq {
    pub operator: DiffOperator,
    pub half_order: i64,
    pub provenance: Provenance,
}

impl ConstraintEq {
    /// Coefficient rows are valid for target monomials of doubled weight up
    /// to this bound.
    pub fn validity_twice(&self) -> i64 {
        self.provenance.word_cap - self.half_order
    }

    /// Substitute k -> -k in all coefficients.
    pub fn flip_k(&self) -> ConstraintEq {
        ConstraintEq {
            operator: DiffOperator::from_terms(
                self.operator
                    .terms()
                    .iter()
                    .map(|t| OpTerm {
                        coeff: t.coeff.flip_k(),
                        multiplier: t.multiplier.clone(),
                        derivs: t.derivs.clone(),
                    })
                    .collect(),
            ),
            half_order: self.half_order,
            provenance: self.provenance.clone(),
        }
    }
}

/// Coefficient of x^r in prod_n (T_n + x^{2n+1})^{e_n} for one sample.
fn monomial_expansion_coeff(sample: &Sample, mono: &Monomial, r: i64) -> Rat {
    fn rec(sample: &Sample, pairs: &[(HalfIndex, u32)], r: i64) -> Rat {
        if pairs.is_empty() {
            return if r == 0 { Rat::one() } else { Rat::zero() };
        }
        let (n, e) = pairs[0];
        let step = n.twice() as i64 + 1;
        let tval = sample.t_value(n.twice());
        let mut acc = Rat::zero();
        for s in 0..=(e as i64) {
            let used = step * s;
            if used > r {
                break;
            }
            let rest = rec(sample, &pairs[1..], r - used);
            if rest.is_zero() {
                continue;
            }
            acc += binom_int(e as u64, s as u64) * pow_rat(&tval, e as i64 - s) * rest;
        }
        acc
    }
    rec(sample, mono.pairs(), r)
}

/// Monomial basis for order m and a derivative word of doubled weight d_w:
/// total degrees in the sectors m + d_t - d_w in {-3, 0, 3, 6}, parts bounded.
fn block_basis(m: i64, word_weight: i64, cfg: &DeriveConfig) -> Vec<Monomial> {
    let mut out = Vec::new();
    for sector in [-3i64, 0, 3, 6, 9, 12] {
        let d_t = sector - m + word_weight;
        if d_t < 0 {
            continue;
        }
        partitions_with_parts(d_t, cfg.parts_cap, &mut out);
    }
    out.sort();
    out.dedup();
    out
}

/// All monomials of doubled weight exactly `total` with at most `max_parts`
/// variable powers in total.
fn partitions_with_parts(total: i64, max_parts: u32, out: &mut Vec<Monomial>) {
    fn rec(
        remaining: i64,
        parts_left: u32,
        max_piece: i64,
        stack: &mut Vec<(HalfIndex, u32)>,
        out: &mut Vec<Monomial>,
    ) {
        if remaining == 0 {
            out.push(Monomial::from_pairs(stack.clone()));
            return;
        }
        if parts_left == 0 {
            return;
        }
        let mut piece = max_piece.min(remaining);
        while piece >= 1 {
            stack.push((HalfIndex((piece - 1) as u32), 1));
            rec(remaining - piece, parts_left - 1, piece, stack, out);
            stack.pop();
            piece -= 1;
        }
    }
    if total == 0 {
        out.push(Monomial::one());
        return;
    }
    let mut stack = Vec::new();
    rec(total, max_parts, total, &mut stack, out);
}

/// Exact solve: rows are samples, columns are monomials. Runs modulo
/// word-size primes with rational reconstruction, then verifies the
/// reconstructed solution exactly over Q (so the fast path cannot silently
/// err). Errors on inconsistency (basis too small) and on under-determined
/// columns (spectator count too small for the requested parts).
fn solve_block(
    a: &[Vec<Rat>],
    b: &[KPoly],
    basis: &[Monomial],
    context: &str,
) -> Result<Vec<(Monomial, KPoly)>> {
    let n_rows = a.len();
    let n_cols = basis.len();
    let kdeg = b.iter().filter_map(|p| p.degree()).max().map_or(0, |d| d + 1);
    if kdeg == 0 {
        return Ok(Vec::new());
    }

    const PRIMES: [u64; 4] = [
        4611686018427388039,
        4611686018427387847,
        4611686018427387787,
        4611686018427387629,
    ];

    let mut residue_sets: Vec<Vec<Vec<u64>>> = Vec::new(); // per prime: cols x kdeg
    let mut used_primes: Vec<u64> = Vec::new();
    let mut solution: Option<Vec<KPoly>> = None;

    'primes: for &prime in &PRIMES {
        let Some(am) = reduce_matrix(a, prime) else {
            continue;
        };
        let mut bm: Vec<Vec<u64>> = Vec::with_capacity(n_rows);
        for poly in b {
            let mut row = Vec::with_capacity(kdeg);
            for j in 0..kdeg {
                match reduce_rat(&poly.coeff(j), prime) {
                    Some(v) => row.push(v),
                    None => continue 'primes,
                }
            }
            bm.push(row);
        }
        let (pivots, xm, consistent) = rref_mod(am, bm, n_cols, kdeg, prime);
        if pivots.iter().any(|p| p.is_none()) {
            // Rank can only drop modulo a prime; a full-rank certificate from
            // any single prime is enough, so only fail after all primes agree.
            if used_primes.is_empty() && prime == PRIMES[PRIMES.len() - 1] {
                let names: Vec<String> = pivots
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.is_none())
                    .map(|(c, _)| basis[c].to_string())
                    .collect();
                return Err(Error::Unstable(format!(
                    "under-determined monomials in {}: {} (spectator count too small)",
                    context,
                    names.join(", ")
                )));
            }
            continue;
        }
        if !consistent {
            return Err(Error::Inconsistent(format!(
                "residual unexplained by the monomial basis in {}",
                context
            )));
        }
        residue_sets.push(xm);
        used_primes.push(prime);

        // Try to reconstruct and verify.
        if let Some(cand) = reconstruct_solution(&residue_sets, &used_primes, n_cols, kdeg) {
            if verify_solution(a, b, &cand, kdeg) {
                solution = Some(cand);
                break;
            }
        }
    }

    let Some(xs) = solution else {
        return Err(Error::Internal(format!(
            "rational reconstruction failed in {}",
            context
        )));
    };
    Ok(basis
        .iter()
        .zip(xs)
        .filter(|(_, c)| !c.is_zero())
        .map(|(m, c)| (m.clone(), c))
        .collect())
}

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    acc
}

fn invmod(a: u64, p: u64) -> u64 {
    powmod(a, p - 2, p)
}

fn reduce_bigint(n: &num_bigint::BigInt, p: u64) -> u64 {
    use num_traits::Signed;
    let m = (n.abs() % num_bigint::BigInt::from(p))
        .to_string()
        .parse::<u64>()
        .unwrap();
    if n.is_negative() && m != 0 {
        p - m
    } else {
        m
    }
}

fn reduce_rat(r: &Rat, p: u64) -> Option<u64> {
    let den = reduce_bigint(r.denom(), p);
    if den == 0 {
        return None;
    }
    Some(mulmod(reduce_bigint(r.numer(), p), invmod(den, p), p))
}

fn reduce_matrix(a: &[Vec<Rat>], p: u64) -> Option<Vec<Vec<u64>>> {
    a.iter()
        .map(|row| row.iter().map(|r| reduce_rat(r, p)).collect())
        .collect()
}

/// Row-reduce [A | B] mod p. Returns per-column pivots, the solution rows for
/// each pivot column (kdeg values each), and whether the leftover rows were
/// consistent.
fn rref_mod(
    mut a: Vec<Vec<u64>>,
    mut b: Vec<Vec<u64>>,
    n_cols: usize,
    kdeg: usize,
    p: u64,
) -> (Vec<Option<usize>>, Vec<Vec<u64>>, bool) {
    let n_rows = a.len();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n_cols];
    let mut row = 0usize;
    for col in 0..n_cols {
        let Some(prow) = (row..n_rows).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(row, prow);
        b.swap(row, prow);
        let inv = invmod(a[row][col], p);
        for c in col..n_cols {
            a[row][c] = mulmod(a[row][c], inv, p);
        }
        for j in 0..kdeg {
            b[row][j] = mulmod(b[row][j], inv, p);
        }
        for r in 0..n_rows {
            if r == row || a[r][col] == 0 {
                continue;
            }
            let f = a[r][col];
            for c in col..n_cols {
                let sub = mulmod(a[row][c], f, p);
                a[r][c] = (a[r][c] + p - sub) % p;
            }
            for j in 0..kdeg {
                let sub = mulmod(b[row][j], f, p);
                b[r][j] = (b[r][j] + p - sub) % p;
            }
        }
        pivot_of_col[col] = Some(row);
        row += 1;
        if row == n_rows {
            break;
        }
    }
    let consistent = (row..n_rows).all(|r| b[r].iter().all(|&v| v == 0));
    let mut xm = vec![vec![0u64; kdeg]; n_cols];
    for col in 0..n_cols {
        if let Some(r) = pivot_of_col[col] {
            xm[col] = b[r].clone();
        }
    }
    (pivot_of_col, xm, consistent)
}

/// CRT-combine per-prime residues and attempt rational reconstruction of
/// every entry.
fn reconstruct_solution(
    residue_sets: &[Vec<Vec<u64>>],
    primes: &[u64],
    n_cols: usize,
    kdeg: usize,
) -> Option<Vec<KPoly>> {
    use num_bigint::BigInt;
    let modulus: BigInt = primes.iter().map(|&p| BigInt::from(p)).product();
    let mut out = Vec::with_capacity(n_cols);
    for col in 0..n_cols {
        let mut coeffs = Vec::with_capacity(kdeg);
        for j in 0..kdeg {
            // CRT
            let mut x = BigInt::from(0);
            let mut m = BigInt::from(1);
            for (set, &p) in residue_sets.iter().zip(primes) {
                let pb = BigInt::from(p);
                let r = BigInt::from(set[col][j]);
                // x' = x + m * ((r - x) * m^{-1} mod p)
                let diff = (&r - &x) % &pb;
                let diff = (diff + &pb) % &pb;
                let minv = BigInt::from(invmod(reduce_bigint(&m, p), p));
                let t = (diff * minv) % &pb;
                x += &m * t;
                m *= pb;
            }
            coeffs.push(rational_reconstruct(&x, &modulus)?);
        }
        out.push(KPoly::from_coeffs(coeffs));
    }
    Some(out)
}

/// Find a/b with x = a/b mod m, |a|, b <= sqrt(m/2), via the half-extended
/// Euclidean algorithm.
fn rational_reconstruct(x: &num_bigint::BigInt, m: &num_bigint::BigInt) -> Option<Rat> {
    use num_bigint::BigInt;
    let bound = m.sqrt() / BigInt::from(2);
    let (mut r0, mut r1) = (m.clone(), x.clone());
    let (mut t0, mut t1) = (BigInt::from(0), BigInt::from(1));
    while r1 > bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        r0 = std::mem::replace(&mut r1, r2);
        let t2 = &t0 - &q * &t1;
        t0 = std::mem::replace(&mut t1, t2);
    }
    use num_traits::Signed;
    if t1.is_zero() || t1.abs() > bound {
        return None;
    }
    if t1.is_negative() {
        Some(Rat::new(-r1, -t1))
    } else {
        Some(Rat::new(r1, t1))
    }
}

fn verify_solution(a: &[Vec<Rat>], b: &[KPoly], x: &[KPoly], _kdeg: usize) -> bool {
    for (row, rhs) in a.iter().zip(b) {
        let mut acc = KPoly::zero();
        for (aij, xj) in row.iter().zip(x) {
            if aij.is_zero() || xj.is_zero() {
                continue;
            }
            let term = xj.scale(aij);
            acc += &term;
        }
        if &acc != rhs {
            return false;
        }
    }
    true
}

/// Solve one word block including finite-P junk columns: the unknowns are
/// the t-monomial coefficients (KPoly-valued, solved per k-layer) plus one
/// k-free multiplier per junk column, shared across layers.
fn solve_block_with_junk(
    n_s: usize,
    tcols: &[&Vec<Rat>],
    rhs: &[KPoly],
    basis: &[Monomial],
    junk_cols: &[(i64, Vec<u32>, i64, Vec<KPoly>)],
    context: &str,
) -> Result<(Vec<(Monomial, KPoly)>, Vec<(i64, Vec<u32>, i64, KPoly)>)> {
    let nb = basis.len();
    let nj = junk_cols.len();
    let mut ka = 1usize;
    for p in rhs.iter() {
        if let Some(d) = p.degree() {
            ka = ka.max(d + 1);
        }
    }
    for (_, _, _, col) in junk_cols {
        for p in col {
            if let Some(d) = p.degree() {
                ka = ka.max(d + 1);
            }
        }
    }
    // Flattened system over Q: rows (sample, k-layer); every column (basis
    // monomial or slack correction shape) carries one unknown per k-layer.
    // Rows are trimmed to what the unknown count requires, leaving exact
    // verification margin.
    let nc = nb + nj;
    let keep = (nc + 8).min(n_s);
    let n_rows = keep * ka;
    let n_cols = nc * ka;
    let mut a: Vec<Vec<Rat>> = vec![vec![Rat::zero(); n_cols]; n_rows];
    let mut b: Vec<Rat> = vec![Rat::zero(); n_rows];
    for si in 0..keep {
        for layer in 0..ka {
            let r = si * ka + layer;
            for (mi, col) in tcols.iter().enumerate() {
                a[r][mi * ka + layer] = col[si].clone();
            }
            for (ji, (_, _, _, col)) in junk_cols.iter().enumerate() {
                // Slack columns are k-free values; their multipliers are
                // k-polynomials, so layer j of the multiplier feeds layer j
                // of the equation.
                a[r][(nb + ji) * ka + layer] = col[si].coeff(0);
            }
            b[r] = rhs[si].coeff(layer);
        }
    }
    let sol = solve_rat_system(&a, &b, nb * ka, context)?;
    let mut entries = Vec::new();
    for (mi, mono) in basis.iter().enumerate() {
        let coeffs: Vec<Rat> = (0..ka).map(|layer| sol[mi * ka + layer].clone()).collect();
        let kp = KPoly::from_coeffs(coeffs);
        if !kp.is_zero() {
            entries.push((mono.clone(), kp));
        }
    }
    let mut junks = Vec::new();
    for (ji, (mp, shape, rr, _)) in junk_cols.iter().enumerate() {
        let coeffs: Vec<Rat> = (0..ka)
            .map(|layer| sol[(nb + ji) * ka + layer].clone())
            .collect();
        let alpha = KPoly::from_coeffs(coeffs);
        if !alpha.is_zero() {
            junks.push((*mp, shape.clone(), *rr, alpha));
        }
    }
    Ok((entries, junks))
}

/// Exact rational linear solve via word-size primes + rational
/// reconstruction + exact verification. Columns beyond `strict_cols` are
/// slack directions: rank deficiency there is resolved by zeroing free
/// columns, while a free column below `strict_cols` is an error.
fn solve_rat_system(
    a: &[Vec<Rat>],
    b: &[Rat],
    strict_cols: usize,
    context: &str,
) -> Result<Vec<Rat>> {
    let n_rows = a.len();
    let n_cols = if n_rows == 0 { 0 } else { a[0].len() };
    if n_cols == 0 {
        return if b.iter().all(|v| v.is_zero()) {
            Ok(Vec::new())
        } else {
            Err(Error::Inconsistent(format!(
                "no columns available in {}",
                context
            )))
        };
    }
    const PRIMES: [u64; 4] = [
        4611686018427388039,
        4611686018427387847,
        4611686018427387787,
        4611686018427387629,
    ];
    let mut residue_sets: Vec<Vec<u64>> = Vec::new();
    let mut used_primes: Vec<u64> = Vec::new();
    'primes: for &prime in &PRIMES {
        let mut am: Vec<Vec<u64>> = Vec::with_capacity(n_rows);
        let mut bm: Vec<u64> = Vec::with_capacity(n_rows);
        for (row, rv) in a.iter().zip(b) {
            let mut mr = Vec::with_capacity(n_cols);
            for v in row {
                match reduce_rat(v, prime) {
                    Some(x) => mr.push(x),
                    None => continue 'primes,
                }
            }
            am.push(mr);
            match reduce_rat(rv, prime) {
                Some(x) => bm.push(x),
                None => continue 'primes,
            }
        }
        let (pivots, xm, consistent) = rref_mod(
            am,
            bm.iter().map(|&v| vec![v]).collect(),
            n_cols,
            1,
            prime,
        );
        if !consistent {
            return Err(Error::Inconsistent(format!(
                "residual unexplained by the basis in {}",
                context
            )));
        }
        if let Some(col) = (0..strict_cols).find(|&c| pivots[c].is_none()) {
            if prime == PRIMES[PRIMES.len() - 1] && used_primes.is_empty() {
                return Err(Error::Unstable(format!(
                    "under-determined column {} in {} (spectator count too small)",
                    col, context
                )));
            }
            continue;
        }
        // Free slack columns were returned as zero rows in xm already.
        residue_sets.push(xm.into_iter().map(|v| v[0]).collect());
        used_primes.push(prime);
        if let Some(cand) = reconstruct_vector(&residue_sets, &used_primes) {
            if verify_rat_solution(a, b, &cand) {
                return Ok(cand);
            }
        }
    }
    Err(Error::Internal(format!(
        "rational reconstruction failed in {}",
        context
    )))
}

fn reconstruct_vector(residue_sets: &[Vec<u64>], primes: &[u64]) -> Option<Vec<Rat>> {
    use num_bigint::BigInt;
    let modulus: BigInt = primes.iter().map(|&p| BigInt::from(p)).product();
    let n = residue_sets[0].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = BigInt::from(0);
        let mut m = BigInt::from(1);
        for (set, &p) in residue_sets.iter().zip(primes) {
            let pb = BigInt::from(p);
            let r = BigInt::from(set[i]);
            let diff = ((&r - &x) % &pb + &pb) % &pb;
            let minv = BigInt::from(invmod(reduce_bigint(&m, p), p));
            let t = (diff * minv) % &pb;
            x += &m * t;
            m *= pb;
        }
        out.push(rational_reconstruct(&x, &modulus)?);
    }
    Some(out)
}

fn verify_rat_solution(a: &[Vec<Rat>], b: &[Rat], x: &[Rat]) -> bool {
    for (row, rv) in a.iter().zip(b) {
        let mut acc = Rat::zero();
        for (aij, xj) in row.iter().zip(x) {
            if !aij.is_zero() && !xj.is_zero() {
                acc += aij * xj;
            }
        }
        if &acc != rv {
            return false;
        }
    }
    true
}

/// Derive the constraint operators E_1..E_max for the given eigenvalue count.
pub fn derive_up_to(p_eig: usize, cfg: DeriveConfig) -> Result<Vec<ConstraintEq>> {
    derive_up_to_full(p_eig, cfg).map(|(tower, _)| tower)
}

/// Junk record: multiple of the E_{m'} pullback by a negative-moment shape
/// at an explicit x-power.
pub type JunkTerm = (i64, Vec<u32>, i64, KPoly);

pub fn derive_up_to_full(
    p_eig: usize,
    cfg: DeriveConfig,
) -> Result<(Vec<ConstraintEq>, Vec<JunkTerm>)> {
    if p_eig < 2 {
        return Err(Error::Usage("derivation requires P >= 2".into()));
    }
    if (p_eig - 1) < cfg.parts_cap as usize {
        return Err(Error::Unstable(format!(
            "P = {} cannot resolve monomials with up to {} parts; raise P",
            p_eig, cfg.parts_cap
        )));
    }
    // Node series are built past the requested order so that products with
    // negative-power factors (lambda_1, powers of l_1) stay exact through
    // x^max_order.
    let max_pow = cfg.max_order + 8;
    let comp = compile(p_eig, cfg);

    let max_block = {
        let mut mx = 0usize;
        for m in 1..=cfg.max_order {
            for w in &comp.words {
                let ww: i64 = w.iter().map(|&t| t as i64 + 1).sum();
                mx = mx.max(block_basis(m, ww, &cfg).len());
            }
        }
        mx
    };
    let n_samples = if cfg.n_samples > 0 {
        cfg.n_samples
    } else {
        max_block + 8
    };

    let samples: Vec<Sample> = (0..n_samples)
        .map(|s| Sample::generate(s * 7 + p_eig, p_eig))
        .collect();
    let t_eval = std::time::Instant::now();
    let evaluations: Vec<Vec<XSeries>> = samples
        .par_iter()
        .map(|s| evaluate_sample(&comp, s, max_pow))
        .collect();
    if std::env::var("KP_TIMING").is_ok() {
        eprintln!("eval {} samples: {:?}", n_samples, t_eval.elapsed());
    }

    // Orders x^p, p <= 0 must cancel identically: Z_0 absorbs them.
    for (si, ev) in evaluations.iter().enumerate() {
        for (wi, series) in ev.iter().enumerate() {
            for p in series.min_pow()..=0.min(series.max_pow()) {
                if !series.coeff(p).is_zero() {
                    return Err(Error::Internal(format!(
                        "order x^{} of word {:?} fails to cancel on sample {}",
                        p, comp.words[wi], si
                    )));
                }
            }
        }
    }

    let mut tower: Vec<ConstraintEq> = Vec::new();
    let mut known: Vec<Vec<(i64, Monomial, KPoly)>> = vec![Vec::new(); comp.words.len()];
    let mut junk_log: Vec<JunkTerm> = Vec::new();
    let mut expansion_memo: BTreeMap<(Monomial, i64), Vec<Rat>> = BTreeMap::new();

    // Negative-moment monomials M_1^{e1} M_2^{e2} ... (Ma = sum_d u_d^a),
    // stored as sorted part lists, total degree 1..=6. Products of these with
    // spectator t-monomials span the finite-P correction terms: multiples of
    // lower-order constraint rows that vanish on solutions but pollute the
    // raw coefficient extraction.
    let moment_shapes: Vec<Vec<u32>> = {
        let mut shapes = Vec::new();
        let mut stack: Vec<u32> = Vec::new();
        fn rec(remaining: u32, max_piece: u32, stack: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if remaining == 0 {
                if !stack.is_empty() {
                    out.push(stack.clone());
                }
                return;
            }
            let mut piece = max_piece.min(remaining);
            while piece >= 1 {
                stack.push(piece);
                rec(remaining - piece, piece, stack, out);
                stack.pop();
                piece -= 1;
            }
        }
        for total in 1..=6u32 {
            rec(total, total, &mut stack, &mut shapes);
        }
        shapes
    };
    let shape_value = |shape: &[u32], s: &Sample| -> Rat {
        let mut acc = Rat::one();
        for &a in shape {
            acc *= s.neg_moment(a);
        }
        acc
    };

    for m in 1..=cfg.max_order {
        // Slack dictionary per word weight: (shape, nu) with the product
        // degree in an allowed sector relative to the word.
        let slack_dict_for = |ww: i64| -> Vec<(Vec<u32>, Monomial)> {
            let mut dict = Vec::new();
            for shape in &moment_shapes {
                let delta: i64 = -(shape.iter().map(|&a| a as i64).sum::<i64>());
                for sector in [-3i64, 0, 3, 6] {
                    let d_nu = sector + ww - m - delta;
                    if d_nu < 0 {
                        continue;
                    }
                    let mut nus = Vec::new();
                    partitions_with_parts(d_nu, cfg.parts_cap + 2, &mut nus);
                    for nu in nus {
                        dict.push((shape.clone(), nu));
                    }
                }
            }
            dict.sort();
            dict.dedup();
            dict
        };

        // Fill the expansion memo for everything this order touches.
        let mut needed: Vec<(Monomial, i64)> = Vec::new();
        let mut word_weights: Vec<i64> = comp
            .words
            .iter()
            .map(|w| w.iter().map(|&t| t as i64 + 1).sum())
            .collect();
        word_weights.sort();
        word_weights.dedup();
        for (wi, word) in comp.words.iter().enumerate() {
            let ww: i64 = word.iter().map(|&t| t as i64 + 1).sum();
            for (mp, mono, _) in &known[wi] {
                needed.push((mono.clone(), m - mp));
            }
            for mono in block_basis(m, ww, &comp.cfg) {
                needed.push((mono, 0));
            }
        }
        for &ww in &word_weights {
            for (_, nu) in slack_dict_for(ww) {
                needed.push((nu, 0));
            }
        }
        needed.retain(|(_, r)| *r >= 0);
        needed.sort();
        needed.dedup();
        let fresh: Vec<(Monomial, i64)> = needed
            .into_iter()
            .filter(|k| !expansion_memo.contains_key(k))
            .collect();
        let computed: Vec<Vec<Rat>> = fresh
            .par_iter()
            .map(|(mono, r)| {
                samples
                    .iter()
                    .map(|s| monomial_expansion_coeff(s, mono, *r))
                    .collect()
            })
            .collect();
        for (k, v) in fresh.into_iter().zip(computed) {
            expansion_memo.insert(k, v);
        }

        let shape_vals: BTreeMap<Vec<u32>, Vec<Rat>> = moment_shapes
            .iter()
            .map(|shape| {
                (
                    shape.clone(),
                    samples.iter().map(|s| shape_value(shape, s)).collect(),
                )
            })
            .collect();

        let block_results: Vec<Result<(Vec<(Monomial, KPoly)>, Vec<JunkTerm>)>> = comp
            .words
            .par_iter()
            .enumerate()
            .map(|(wi, word)| {
                let ww: i64 = word.iter().map(|&t| t as i64 + 1).sum();
                let mut rhs: Vec<KPoly> = Vec::with_capacity(n_samples);
                for (si, ev) in evaluations.iter().enumerate() {
                    let mut v = ev[wi].coeff(m);
                    for (mp, mono, coeff) in &known[wi] {
                        let gamma_c = &expansion_memo[&(mono.clone(), m - mp)][si];
                        if !gamma_c.is_zero() {
                            let sub = coeff.scale(gamma_c);
                            v = &v - &sub;
                        }
                    }
                    rhs.push(v);
                }
                if rhs.iter().all(|v| v.is_zero()) {
                    return Ok((Vec::new(), Vec::new()));
                }
                let basis = block_basis(m, ww, &comp.cfg);
                let tcols: Vec<&Vec<Rat>> = basis
                    .iter()
                    .map(|mono| &expansion_memo[&(mono.clone(), 0)])
                    .collect();
                let context = format!("order m={} word {:?}", m, word);
                // First try without slack columns (most blocks are clean);
                // fall back to the slack-augmented solve.
                match solve_block_with_junk(samples.len(), &tcols, &rhs, &basis, &[], &context) {
                    Ok((entries, _)) => Ok((entries, Vec::new())),
                    Err(Error::Inconsistent(_)) => {
                        let slack_named: Vec<(i64, Vec<u32>, i64, Vec<KPoly>)> =
                            slack_dict_for(ww)
                                .into_iter()
                                .map(|(shape, nu)| {
                                    let tcol = &expansion_memo[&(nu.clone(), 0)];
                                    let sv = &shape_vals[&shape];
                                    let col: Vec<KPoly> = (0..samples.len())
                                        .map(|si| {
                                            KPoly::from_rat(sv[si].clone() * tcol[si].clone())
                                        })
                                        .collect();
                                    (m, shape, nu.weight_twice(), col)
                                })
                                .collect();
                        solve_block_with_junk(
                            samples.len(),
                            &tcols,
                            &rhs,
                            &basis,
                            &slack_named,
                            &context,
                        )
                    }
                    Err(e) => Err(e),
                }
            })
            .collect();

        let mut op_terms: Vec<OpTerm> = Vec::new();
        for (wi, res) in block_results.into_iter().enumerate() {
            let (entries, junks) = res?;
            for (mono, coeff) in entries {
                known[wi].push((m, mono.clone(), coeff.clone()));
                op_terms.push(OpTerm {
                    coeff,
                    multiplier: mono,
                    derivs: comp.words[wi].iter().map(|&t| HalfIndex(t)).collect(),
                });
            }
            junk_log.extend(junks);
        }

        tower.push(ConstraintEq {
            operator: DiffOperator::from_terms(op_terms),
            half_order: m,
            provenance: Provenance {
                p_eigenvalues: p_eig,
                samples: n_samples,
                word_cap: comp.cfg.word_cap,
                parts_cap: comp.cfg.parts_cap,
                stabilized_with: None,
            },
        });
    }
    Ok((tower, junk_log))
}

/// Single constraint at half-order m, derived with P eigenvalues. Callers
/// confirm stabilization by comparing against P + 1 (`check_stabilization`).
pub fn derive_constraint(half_order: i64, p_eig: usize) -> Result<ConstraintEq> {
    derive_constraint_with(half_order, p_eig, DeriveConfig::for_weight(9))
}

pub fn derive_constraint_with(
    half_order: i64,
    p_eig: usize,
    mut cfg: DeriveConfig,
) -> Result<ConstraintEq> {
    if half_order < 1 {
        return Err(Error::Usage("constraint half-order must be >= 1".into()));
    }
    cfg.max_order = half_order;
    let tower = derive_up_to(p_eig, cfg)?;
    Ok(tower.into_iter().last().unwrap())
}

/// True when the operators derived with P and P + 1 eigenvalues agree exactly.
pub fn check_stabilization(half_order: i64, p_eig: usize) -> Result<bool> {
    let a = derive_constraint(half_order, p_eig)?;
    let b = derive_constraint(half_order, p_eig + 1)?;
    Ok(a.operator == b.operator)
}

/// Derive the full tower needed to solve the free energy through doubled
/// weight `w_twice`, stabilized between P and P + 1, in the sign convention
/// of the free-energy table (k -> -k relative to the raw equations of motion
/// for Z = int dB exp tr(-B^3/3 + B Lambda + k log B)). The monomial parts
/// cap and the eigenvalue count escalate together until every block is
/// consistent.
pub fn derive_tower(w_twice: i64, min_p: usize) -> Result<Vec<ConstraintEq>> {
    let mut cfg = DeriveConfig::for_weight(w_twice);
    loop {
        let p_eig = min_p.max(cfg.parts_cap as usize + 1);
        match (derive_up_to(p_eig, cfg), derive_up_to(p_eig + 1, cfg)) {
            (Ok(a), Ok(b)) => {
                for (ca, cb) in a.iter().zip(b.iter()) {
                    if ca.operator != cb.operator {
                        return Err(Error::Unstable(format!(
                            "constraint m={} differs between P={} and P={}",
                            ca.half_order,
                            p_eig,
                            p_eig + 1
                        )));
                    }
                }
                return Ok(a
                    .into_iter()
                    .map(|c| {
                        let mut c = c.flip_k();
                        c.provenance.stabilized_with = Some(p_eig + 1);
                        c
                    })
                    .collect());
            }
            (Err(Error::Inconsistent(msg)), _) | (_, Err(Error::Inconsistent(msg))) => {
                if cfg.parts_cap >= 6 {
                    return Err(Error::Inconsistent(msg));
                }
                cfg.parts_cap += 1;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
}



#[cfg(test)]
mod perf_probe {
    use super::*;
    use std::time::Instant;

    #[test]
    #[ignore]
    fn timing() {
        for (p_eig, wc) in [(4usize, 9i64), (5, 9)] {
            let cfg = DeriveConfig { max_order: wc, word_cap: wc, parts_cap: 3, n_samples: 0 };
            let t0 = Instant::now();
            let comp = compile(p_eig, cfg);
            let t_compile = t0.elapsed();
            let max_block = {
                let mut mx = 0usize;
                for m in 1..=cfg.max_order {
                    for w in &comp.words {
                        let ww: i64 = w.iter().map(|&t| t as i64 + 1).sum();
                        mx = mx.max(block_basis(m, ww, &cfg).len());
                    }
                }
                mx
            };
            let t0 = Instant::now();
            let sample = Sample::generate(1, p_eig);
            let ev = evaluate_sample(&comp, &sample, cfg.max_order + 8);
            let t_eval = t0.elapsed();
            println!(
                "P={} wc={}: compile {:?} ({} terms, {} nodes, {} words), eval {:?}, max_block {}, ev[0] nonzero {}",
                p_eig, wc, t_compile, comp.terms.len(), comp.nodes.len(), comp.words.len(), t_eval, max_block,
                !ev[0].is_zero()
            );
        }
    }
}

#[cfg(test)]
mod escalation_probe {
    use super::*;

    #[test]
    #[ignore]
    fn which_block_fails() {
        for parts in [3u32, 4, 5] {
            let cfg = DeriveConfig {
                max_order: 9,
                word_cap: 9,
                parts_cap: parts,
                n_samples: 0,
            };
            let p_eig = (parts as usize + 1).max(4);
            let t0 = std::time::Instant::now();
            match derive_up_to(p_eig, cfg) {
                Ok(tower) => {
                    println!(
                        "parts={} P={} OK in {:?} (terms per order: {:?})",
                        parts,
                        p_eig,
                        t0.elapsed(),
                        tower.iter().map(|c| c.operator.terms().len()).collect::<Vec<_>>()
                    );
                    break;
                }
                Err(e) => println!("parts={} P={} -> {} in {:?}", parts, p_eig, e, t0.elapsed()),
            }
        }
    }
}

#[cfg(test)]
mod sector_probe {
    use super::*;

    #[test]
    #[ignore]
    fn find_true_sectors() {
        let cfg = DeriveConfig {
            max_order: 6,
            word_cap: 6,
            parts_cap: 4,
            n_samples: 0,
        };
        match derive_up_to(6, cfg) {
            Ok(tower) => {
                for eq in &tower {
                    for t in eq.operator.terms() {
                        let dw: i64 = t.derivs.iter().map(|n| n.weight_twice()).sum();
                        let sector = eq.half_order + t.multiplier.weight_twice() - dw;
                        if ![0, 3, 6].contains(&sector) {
                            println!(
                                "m={} sector {}: {} * {} d{:?}",
                                eq.half_order, sector, t.coeff, t.multiplier, t.derivs
                            );
                        }
                    }
                }
                println!("done");
            }
            Err(e) => println!("ERR {}", e),
        }
    }
}





#[cfg(test)]
mod reference_engine_p3 {
    //! P = 3 brute force: second-order jets in the two spectator square
    //! roots over exact univariate rational functions of X. Independent of
    //! the production node machinery; used to corner any assembly bug.
    use super::reference_engine_shared::*;
    use super::*;
    use num_traits::One;

    /// Jet: partial derivatives in (u2, u3) up to total order 2; components
    /// beyond a factor's tracked order are simply absent, and products only
    /// produce components derivable from both factors.
    #[derive(Clone, Debug)]
    pub struct Jet {
        comps: BTreeMap<(u8, u8), RFun>,
    }

    impl Jet {
        fn constj(f: RFun) -> Jet {
            let mut comps = BTreeMap::new();
            for a in 0..=2u8 {
                for b in 0..=(2 - a) {
                    comps.insert(
                        (a, b),
                        if (a, b) == (0, 0) {
                            f.clone()
                        } else {
                            RFun::constf(KPoly::zero())
                        },
                    );
                }
            }
            Jet { comps }
        }

        fn add(&self, o: &Jet) -> Jet {
            let mut comps = BTreeMap::new();
            for (key, v) in &self.comps {
                if let Some(w) = o.comps.get(key) {
                    comps.insert(*key, v.add(w));
                }
            }
            Jet { comps }
        }

        fn mul(&self, o: &Jet) -> Jet {
            let mut comps: BTreeMap<(u8, u8), RFun> = BTreeMap::new();
            'outer: for (&(a, b), _) in &self.comps {
                if !o.comps.contains_key(&(a, b)) {
                    continue;
                }
                // Leibniz: all splits must exist in both factors.
                let mut acc = RFun::constf(KPoly::zero());
                for i in 0..=a {
                    for j in 0..=b {
                        let (Some(f), Some(g)) = (
                            self.comps.get(&(i, j)),
                            o.comps.get(&(a - i, b - j)),
                        ) else {
                            continue 'outer;
                        };
                        let c = crate::rational::binom_int(a as u64, i as u64)
                            * crate::rational::binom_int(b as u64, j as u64);
                        acc = acc.add(&f.mul(g).scale(&KPoly::from_rat(c)));
                    }
                }
                comps.insert((a, b), acc);
            }
            Jet { comps }
        }

        fn scale(&self, c: &KPoly) -> Jet {
            Jet {
                comps: self.comps.iter().map(|(k, v)| (*k, v.scale(c))).collect(),
            }
        }

        fn neg(&self) -> Jet {
            Jet {
                comps: self.comps.iter().map(|(k, v)| (*k, v.neg())).collect(),
            }
        }

        /// Multiplicative inverse where tracked: 1/f, (1/f)' = -f'/f^2, etc.
        fn inv(&self) -> Jet {
            let f = &self.comps[&(0, 0)];
            let inv = f.inv();
            let inv2 = inv.mul(&inv);
            let inv3 = inv2.mul(&inv);
            let mut comps: BTreeMap<(u8, u8), RFun> = BTreeMap::new();
            for (&(a, b), _) in &self.comps {
                let v = match (a, b) {
                    (0, 0) => inv.clone(),
                    (1, 0) | (0, 1) => self.comps[&(a, b)].mul(&inv2).neg(),
                    (2, 0) | (0, 2) => {
                        // (1/f)'' = (2 f'^2 - f f'') / f^3
                        let fp = &self.comps[&(if a == 2 { (1, 0) } else { (0, 1) })];
                        let fpp = &self.comps[&(a, b)];
                        fp.mul(fp)
                            .scale(&KPoly::from_rat(rat_int(2)))
                            .add(&f.mul(fpp).neg())
                            .mul(&inv3)
                    }
                    (1, 1) => {
                        // d2 d3 (1/f) = (2 f_2 f_3 - f f_23)/f^3
                        let f2 = &self.comps[&(1, 0)];
                        let f3 = &self.comps[&(0, 1)];
                        let f23 = &self.comps[&(1, 1)];
                        f2.mul(f3)
                            .scale(&KPoly::from_rat(rat_int(2)))
                            .add(&f.mul(f23).neg())
                            .mul(&inv3)
                    }
                    _ => unreachable!(),
                };
                comps.insert((a, b), v);
            }
            Jet { comps }
        }

        fn dx_lam0(&self) -> Jet {
            let m = RFun::from_poly(LPoly::mono(KPoly::from_rat(rat(-1, 2)), 3));
            Jet {
                comps: self
                    .comps
                    .iter()
                    .map(|(k, v)| (*k, v.dx().mul(&m)))
                    .collect(),
            }
        }

        /// Raw d/du-shift in slot 0 or 1 (loses one order of tracking).
        fn shift(&self, slot: usize) -> Jet {
            let mut comps = BTreeMap::new();
            for (&(a, b), v) in &self.comps {
                let src = if slot == 0 { (a + 1, b) } else { (a, b + 1) };
                if let Some(w) = self.comps.get(&src) {
                    let _ = v;
                    comps.insert((a, b), w.clone());
                }
            }
            Jet { comps }
        }
    }

    fn u_jet(us: &[Rat; 2], slot: usize, p: i64) -> Jet {
        // u_slot^p with derivative tracking in both slots.
        let u = &us[slot];
        let mut comps = BTreeMap::new();
        for a in 0..=2u8 {
            for b in 0..=(2 - a) {
                let ord = if slot == 0 { a } else { b } as i64;
                let other = if slot == 0 { b } else { a };
                let v = if other > 0 {
                    RFun::constf(KPoly::zero())
                } else {
                    let mut c = Rat::one();
                    for i in 0..ord {
                        c *= rat_int(p - i);
                    }
                    RFun::constf(KPoly::from_rat(c * pow_rat(u, p - ord)))
                };
                comps.insert((a, b), v);
            }
        }
        Jet { comps }
    }

    fn x_jet(p: i64) -> Jet {
        Jet::constj(RFun::from_poly(LPoly::mono(
            KPoly::from_rat(Rat::one()),
            p,
        )))
    }

    /// l_j for eigenvalues (lambda_0 = X^{-2}, lambda_1 = u2^2, lambda_2 = u3^2).
    fn ell_jet(j: usize, us: &[Rat; 2]) -> Jet {
        let a = KPoly::from_coeffs(vec![rat(-1, 4), rat(1, 2)]);
        let uj = |p: i64| -> Jet {
            if j == 0 {
                x_jet(-p)
            } else {
                u_jet(us, j - 1, p)
            }
        };
        // x_j^e = u_j^{-e}
        let xj = |e: i64| uj(-e);
        let mut acc = uj(1).add(&xj(2).scale(&a));
        for i in 0..3usize {
            if i == j {
                continue;
            }
            let ui = if i == 0 { x_jet(-1).shift_noop() } else { u_jet(us, i - 1, 1) };
            let mix = uj(1).add(&ui).inv();
            acc = acc.add(&xj(1).mul(&mix).scale(&KPoly::from_rat(rat(-1, 2))));
        }
        acc
    }

    impl Jet {
        fn shift_noop(&self) -> Jet {
            self.clone()
        }
    }

    fn conv_jet(j: usize, twice_n: u32, us: &[Rat; 2]) -> Jet {
        let c = rat(-(twice_n as i64 + 1), 2);
        let e = twice_n as i64 + 3;
        if j == 0 {
            x_jet(e).scale(&KPoly::from_rat(c))
        } else {
            u_jet(us, j - 1, -e).scale(&KPoly::from_rat(c))
        }
    }

    fn dlam_jet(j: usize, f: &Jet, us: &[Rat; 2]) -> Jet {
        if j == 0 {
            f.dx_lam0()
        } else {
            // (1/(2u)) d/du as jets
            u_jet(us, j - 1, -1)
                .scale(&KPoly::from_rat(rat(1, 2)))
                .mul(&f.shift(j - 1))
        }
    }

    type JState = BTreeMap<Vec<u32>, Jet>;

    fn nabla_jet(a: usize, state: &JState, us: &[Rat; 2], word_cap: i64) -> JState {
        let mut out: JState = BTreeMap::new();
        let mut push = |w: Vec<u32>, j: Jet| {
            match out.entry(w) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(j);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let s = e.get().add(&j);
                    e.insert(s);
                }
            }
        };
        for (w, coeff) in state {
            push(w.clone(), coeff.mul(&ell_jet(a, us)));
            push(w.clone(), dlam_jet(a, coeff, us));
            let ww: i64 = w.iter().map(|&t| t as i64 + 1).sum();
            let mut tn = 0u32;
            while ww + tn as i64 + 1 <= word_cap {
                let mut w2 = w.clone();
                w2.push(tn);
                w2.sort_unstable();
                push(w2, coeff.mul(&conv_jet(a, tn, us)));
                tn += 1;
            }
        }
        out
    }

    #[test]
    #[ignore]
    fn brute_force_p3_master() {
        let us = [rat_int(2), rat_int(3)];
        let word_cap = 5i64;
        let max_pow = 6i64;

        let one = || {
            let mut s: JState = BTreeMap::new();
            s.insert(vec![], Jet::constj(RFun::constf(KPoly::from_rat(Rat::one()))));
            s
        };
        let apply_word = |word: &[usize]| -> JState {
            let mut st = one();
            for &a in word.iter().rev() {
                st = nabla_jet(a, &st, &us, word_cap);
            }
            st
        };

        // Assemble Gamma^(3) for P=3 from the recursion output itself so the
        // only remaining difference with production is the evaluation.
        let g3 = gamma(3, 3);
        let lam = |i: usize| -> Jet {
            if i == 0 {
                x_jet(-2)
            } else {
                u_jet(&us, i - 1, 2)
            }
        };

        let mut totals: BTreeMap<Vec<u32>, XSeries> = BTreeMap::new();
        let mut accumulate = |coeff_jet: Jet, st: JState| {
            for (w, jet) in st {
                let total = coeff_jet.mul(&jet);
                let entry = totals.entry(w).or_insert_with(XSeries::zero);
                entry.add_assign(&total.comps[&(0, 0)].expand(max_pow));
            }
        };

        for gt in g3.terms() {
            let mut coeff = Jet::constj(RFun::constf(KPoly::from_rat(gt.coeff.clone())));
            for (&(a, b), &pw) in &gt.factors {
                let diff = lam(a).add(&lam(b).neg());
                let inv = diff.inv();
                for _ in 0..pw {
                    coeff = coeff.mul(&inv);
                }
            }
            let word: Vec<usize> = gt.word.clone();
            accumulate(coeff, apply_word(&word));
        }
        // - lambda_0 (d_0 + l_0) g
        accumulate(lam(0).neg(), apply_word(&[0]));
        // - (P + k) g
        accumulate(
            Jet::constj(RFun::constf(KPoly::from_coeffs(vec![
                rat_int(-3),
                rat_int(-1),
            ]))),
            one(),
        );

        // Production path.
        let cfg = DeriveConfig {
            max_order: max_pow,
            word_cap,
            parts_cap: 1,
            n_samples: 1,
        };
        let comp = compile(3, cfg);
        let sample = {
            let u = vec![Rat::zero(), us[0].clone(), us[1].clone()];
            let tvals = (0..32)
                .map(|twice_n| {
                    let e = twice_n as i64 + 1;
                    pow_rat(&us[0], -e) + pow_rat(&us[1], -e)
                })
                .collect();
            Sample { u, tvals }
        };
        let ev = evaluate_sample(&comp, &sample, max_pow + 8);

        let mut bad = 0;
        for (wi, w) in comp.words.iter().enumerate() {
            let refs = totals.get(w).cloned().unwrap_or_else(XSeries::zero);
            for p in -6..=max_pow {
                let a = ev[wi].coeff(p);
                let b = refs.coeff(p);
                if a != b {
                    println!("MISMATCH word {:?} x^{}: production {} vs reference {}", w, p, a, b);
                    bad += 1;
                }
            }
        }
        assert_eq!(bad, 0, "{} mismatches", bad);
        println!("P=3 brute force agrees through x^{}", max_pow);
    }
}

#[cfg(test)]
mod reference_engine_shared {
    pub use super::reference_engine::{LPoly, RFun};
}

#[cfg(test)]
mod junk_shape_probe {
    use super::*;
    use num_traits::One;

    #[test]
    #[ignore]
    fn fit_order7_residual() {
        let m_target = 9i64;
        let cfg = DeriveConfig { max_order: m_target, word_cap: m_target, parts_cap: 3, n_samples: 0 };
        let p_eig = 4usize;
        let comp = compile(p_eig, cfg);
        let (tower, junk) = {
            let mut c2 = cfg;
            c2.max_order = m_target - 1;
            derive_up_to_full(p_eig, c2).unwrap()
        };
        println!("junk so far:");
        for (mp, shape, r, alpha) in &junk {
            println!("  m'={} shape {:?} r={} alpha={}", mp, shape, r, alpha);
        }
        let wi_empty = comp.words.iter().position(|w| w.is_empty()).unwrap();
        let n_s = 60usize;
        let samples: Vec<Sample> = (0..n_s).map(|s| Sample::generate(s * 7 + p_eig, p_eig)).collect();
        let evs: Vec<XSeries> = samples
            .par_iter()
            .map(|s| evaluate_sample(&comp, s, cfg.max_order + 8)[wi_empty].clone())
            .collect();
        // residual after all known subtractions
        let mut resid: Vec<KPoly> = Vec::new();
        for (si, s) in samples.iter().enumerate() {
            let mut v = evs[si].coeff(m_target);
            for eq in &tower {
                for t in eq.operator.terms() {
                    if !t.derivs.is_empty() {
                        continue;
                    }
                    let g = monomial_expansion_coeff(s, &t.multiplier, m_target - eq.half_order);
                    if !g.is_zero() {
                        let sub = t.coeff.scale(&g);
                        v = &v - &sub;
                    }
                }
            }
            for (mp, shape, r, alpha) in &junk {
                let q = m_target - r - mp;
                if q < 0 { continue; }
                let mut pb = KPoly::zero();
                for eq in &tower {
                    if eq.half_order != *mp { continue; }
                    for t in eq.operator.terms() {
                        if !t.derivs.is_empty() { continue; }
                        let g = monomial_expansion_coeff(s, &t.multiplier, q);
                        if !g.is_zero() { pb += &t.coeff.scale(&g); }
                    }
                }
                if pb.is_zero() { continue; }
                let mut f = Rat::one();
                for &a in shape { f *= s.neg_moment(a); }
                let sub = (alpha * &pb).scale(&f);
                v = &v - &sub;
            }
            resid.push(v);
        }
        // dictionary: t-monomials (deg<=8, parts<=3) plus M-shape x pullback q-extractions
        let mut names: Vec<String> = Vec::new();
        let mut cols: Vec<Vec<Rat>> = Vec::new();
        let mut basis = Vec::new();
        for d in [1i64, 4, 7] {
            partitions_with_parts(d, 3, &mut basis);
        }
        for mono in &basis {
            names.push(format!("T[{}]", mono));
            cols.push(samples.iter().map(|s| monomial_expansion_coeff(s, mono, 0)).collect());
        }
        // junk candidates: m' in 1..m-1, shapes deg<=6, r in 1..m-m', k-split columns
        let mut shapes: Vec<Vec<u32>> = Vec::new();
        {
            let mut stack = Vec::new();
            fn rec(rem: u32, maxp: u32, st: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
                if rem == 0 { if !st.is_empty() { out.push(st.clone()); } return; }
                let mut p = maxp.min(rem);
                while p >= 1 { st.push(p); rec(rem - p, p, st, out); st.pop(); p -= 1; }
            }
            for tot in 1..=8u32 { rec(tot, tot, &mut stack, &mut shapes); }
        }
        for eq in &tower {
            let mp = eq.half_order;
            for r in 1..=(m_target - mp) {
                let q = m_target - r - mp;
                for shape in &shapes {
                    let mut col: Vec<Rat> = Vec::new();
                    let mut nz = false;
                    for s in &samples {
                        let mut pb = KPoly::zero();
                        for t in eq.operator.terms() {
                            if !t.derivs.is_empty() { continue; }
                            let g = monomial_expansion_coeff(s, &t.multiplier, q);
                            if !g.is_zero() { pb += &t.coeff.scale(&g); }
                        }
                        // k-free part only for diagnosis
                        let mut f = pb.coeff(0);
                        for &a in shape { f *= s.neg_moment(a); }
                        if !f.is_zero() { nz = true; }
                        col.push(f);
                    }
                    if nz {
                        names.push(format!("J(m'={},sh{:?},r={})", mp, shape, r));
                        cols.push(col);
                    }
                }
            }
        }
        // fit k^0 residual
        let b: Vec<Rat> = resid.iter().map(|p| p.coeff(0)).collect();
        let nc = cols.len();
        let mut mrows: Vec<Vec<Rat>> = (0..n_s).map(|si| cols.iter().map(|c| c[si].clone()).collect()).collect();
        let mut bb = b.clone();
        let mut piv: Vec<Option<usize>> = vec![None; nc];
        let mut r = 0usize;
        for c in 0..nc {
            let Some(pr) = (r..n_s).find(|&rr| !mrows[rr][c].is_zero()) else { continue };
            mrows.swap(r, pr); bb.swap(r, pr);
            let inv = Rat::one() / mrows[r][c].clone();
            for cc in 0..nc { mrows[r][cc] = &mrows[r][cc] * &inv; }
            bb[r] = &bb[r] * &inv;
            for rr in 0..n_s {
                if rr == r || mrows[rr][c].is_zero() { continue; }
                let f = mrows[rr][c].clone();
                for cc in 0..nc { let s2 = &mrows[r][cc] * &f; mrows[rr][cc] = &mrows[rr][cc] - &s2; }
                let s2 = &bb[r] * &f; bb[rr] = &bb[rr] - &s2;
            }
            piv[c] = Some(r); r += 1;
            if r == n_s { break; }
        }
        let ok = (r..n_s).all(|rr| bb[rr].is_zero());
        println!("k^0 fit {}:", if ok { "CONSISTENT" } else { "INCONSISTENT" });
        for (c, name) in names.iter().enumerate() {
            if let Some(pr) = piv[c] {
                if !bb[pr].is_zero() {
                    println!("  {} * ({})", name, bb[pr]);
                }
            }
        }
    }
}
