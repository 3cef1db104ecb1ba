//! Reference tables used by the cross-validation suite: the free-energy
//! coefficients through weight 9/2, the dual Gaussian moments, the two-point
//! correlator coefficients, the six lambda^{-3} replica contributions, and
//! the large-N series. Each entry records which independent routes confirm
//! it; the table is the audit trail the verify suite prints.

use crate::kpoly::KPoly;
use crate::rational::{rat, Rat};
use crate::series::{HalfIndex, Monomial, TSeries};
use num_traits::Zero;

fn kp(coeffs: &[(i64, i64, usize)]) -> KPoly {
    // (numer, denom, k-power) triples
    let deg = coeffs.iter().map(|&(_, _, p)| p).max().unwrap_or(0);
    let mut v = vec![Rat::zero(); deg + 1];
    for &(n, d, p) in coeffs {
        v[p] = rat(n, d);
    }
    KPoly::from_coeffs(v)
}

fn mono(pairs: &[(u32, u32)]) -> Monomial {
    Monomial::from_pairs(
        pairs
            .iter()
            .map(|&(twice, e)| (HalfIndex(twice), e))
            .collect(),
    )
}

/// How an entry of the free-energy table is confirmed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Constraint tower only.
    Tower,
    /// Tower and the one/two-point correlator residues.
    TowerAndCorrelator,
    /// Tower and the replica/Wick route.
    TowerAndReplica,
}

/// The free energy through weight 9/2: monomial (doubled indices),
/// coefficient in k, and the independent routes that pin it.
pub fn free_energy_table() -> Vec<(Monomial, KPoly, Route)> {
    use Route::*;
    vec![
        // weight 3/2
        (mono(&[(0, 3)]), kp(&[(1, 12, 0)]), Tower),
        (mono(&[(2, 1)]), kp(&[(1, 48, 0), (1, 4, 2)]), TowerAndReplica),
        (mono(&[(0, 1), (1, 1)]), kp(&[(1, 2, 1)]), Tower),
        // weight 3
        (mono(&[(0, 3), (2, 1)]), kp(&[(1, 24, 0)]), Tower),
        (mono(&[(2, 2)]), kp(&[(1, 192, 0), (1, 16, 2)]), Tower),
        (mono(&[(0, 1), (1, 1), (2, 1)]), kp(&[(1, 4, 1)]), Tower),
        (mono(&[(1, 3)]), kp(&[(1, 24, 1)]), Tower),
        (mono(&[(0, 1), (4, 1)]), kp(&[(1, 32, 0), (3, 8, 2)]), Tower),
        (mono(&[(0, 2), (3, 1)]), kp(&[(1, 4, 1)]), Tower),
        (mono(&[(1, 1), (3, 1)]), kp(&[(1, 4, 2)]), TowerAndCorrelator),
        (mono(&[(5, 1)]), kp(&[(1, 6, 1), (1, 6, 3)]), TowerAndCorrelator),
        // weight 9/2
        (mono(&[(0, 4), (4, 1)]), kp(&[(1, 64, 0)]), Tower),
        (mono(&[(0, 3), (5, 1)]), kp(&[(1, 6, 1)]), Tower),
        (mono(&[(0, 3), (2, 2)]), kp(&[(1, 48, 0)]), Tower),
        (mono(&[(0, 2), (6, 1)]), kp(&[(5, 128, 0), (15, 32, 2)]), Tower),
        (mono(&[(0, 2), (1, 1), (4, 1)]), kp(&[(3, 16, 1)]), Tower),
        (mono(&[(0, 2), (2, 1), (3, 1)]), kp(&[(1, 4, 1)]), Tower),
        (mono(&[(0, 1), (7, 1)]), kp(&[(1, 2, 1), (1, 2, 3)]), Tower),
        (mono(&[(0, 1), (1, 1), (5, 1)]), kp(&[(1, 12, 2)]), Tower),
        (mono(&[(0, 1), (2, 1), (4, 1)]), kp(&[(1, 32, 0), (3, 8, 2)]), Tower),
        (mono(&[(0, 1), (3, 2)]), kp(&[(1, 4, 2)]), Tower),
        (mono(&[(0, 1), (1, 2), (3, 1)]), kp(&[(1, 8, 1)]), Tower),
        (mono(&[(0, 1), (1, 1), (2, 2)]), kp(&[(1, 8, 1)]), Tower),
        (mono(&[(1, 1), (6, 1)]), kp(&[(73, 448, 1), (43, 112, 3)]), Tower),
        (mono(&[(1, 2), (4, 1)]), kp(&[(3, 16, 2)]), Tower),
        (mono(&[(1, 1), (2, 1), (3, 1)]), kp(&[(1, 4, 2)]), Tower),
        (mono(&[(2, 1), (5, 1)]), kp(&[(1, 6, 1), (1, 6, 3)]), Tower),
        (mono(&[(2, 3)]), kp(&[(1, 576, 0), (1, 48, 2)]), Tower),
        (mono(&[(3, 1), (4, 1)]), kp(&[(1, 8, 1), (1, 4, 3)]), Tower),
        (
            mono(&[(8, 1)]),
            kp(&[(105, 9216, 0), (607, 1152, 2), (169, 576, 4)]),
            Tower,
        ),
        (mono(&[(1, 3), (2, 1)]), kp(&[(1, 24, 1)]), Tower),
    ]
}

/// The table as a series truncated at weight 9/2.
pub fn free_energy_series() -> TSeries {
    let mut f = TSeries::zero(9);
    for (m, c, _) in free_energy_table() {
        f.add_term(m, c);
    }
    f
}

/// Dual Gaussian moments <tr M^(2j)> as polynomials in k, j = 1..4.
pub fn gaussian_moment_table() -> Vec<KPoly> {
    vec![
        kp(&[(1, 1, 2)]),                       // k^2
        kp(&[(1, 1, 1), (2, 1, 3)]),            // 2k^3 + k
        kp(&[(10, 1, 2), (5, 1, 4)]),           // 5k^4 + 10k^2
        kp(&[(21, 1, 1), (70, 1, 3), (14, 1, 5)]), // 14k^5 + 70k^3 + 21k
    ]
}

/// The log-sector expansion of the dual one-matrix model:
/// (k^2/4) t_1 + ((k + 2k^3)/16) t_{5/2} + ((5k^4 + 10k^2)/48) t_4.
pub fn green_expansion_table() -> Vec<(Monomial, KPoly)> {
    vec![
        (mono(&[(2, 1)]), kp(&[(1, 4, 2)])),
        (mono(&[(5, 1)]), kp(&[(1, 16, 1), (2, 16, 3)])),
        (mono(&[(8, 1)]), kp(&[(10, 48, 2), (5, 48, 4)])),
    ]
}

/// Two-point correlator coefficients by symmetric s-power pair (a, b), a <= b.
pub fn kp_twopoint_table() -> Vec<((u32, u32), KPoly)> {
    vec![
        ((1, 2), kp(&[(1, 1, 2)])),
        ((1, 5), kp(&[(1, 12, 2)])),
        ((2, 4), kp(&[(7, 12, 2), (1, 4, 4)])),
        ((3, 3), kp(&[(3, 4, 2), (1, 4, 4)])),
    ]
}

/// The six lambda^{-3} replica contributions in display normalization; the
/// fourth is the dimension-corrected value (the display misprints its
/// lambda power).
pub fn six_term_table() -> [KPoly; 6] {
    [
        kp(&[(1, 4, 1)]),
        kp(&[(1, 6, 3)]),
        kp(&[(1, 2, 3)]),
        kp(&[(1, 6, 1)]),
        kp(&[(1, 8, 1)]),
        kp(&[(1, 8, 1)]),
    ]
}

/// Genus-zero endpoint series c = -t_0 - t_0 t_1 / 2 - (3/8) t_0^2 t_2
/// - (1/4) t_0 t_1^2 (through weight 7/2).
pub fn c_series_table() -> TSeries {
    let mut s = TSeries::zero(7);
    s.add_term(mono(&[(0, 1)]), kp(&[(-1, 1, 0)]));
    s.add_term(mono(&[(0, 1), (2, 1)]), kp(&[(-1, 2, 0)]));
    s.add_term(mono(&[(0, 2), (4, 1)]), kp(&[(-3, 8, 0)]));
    s.add_term(mono(&[(0, 1), (2, 2)]), kp(&[(-1, 4, 0)]));
    s
}

/// Genus-zero specific heat u = t_0/2 + t_0 t_1/4 + (3/16) t_0^2 t_2
/// + (1/8) t_0 t_1^2.
pub fn u_series_table() -> TSeries {
    let mut s = TSeries::zero(7);
    s.add_term(mono(&[(0, 1)]), kp(&[(1, 2, 0)]));
    s.add_term(mono(&[(0, 1), (2, 1)]), kp(&[(1, 4, 0)]));
    s.add_term(mono(&[(0, 2), (4, 1)]), kp(&[(3, 16, 0)]));
    s.add_term(mono(&[(0, 1), (2, 2)]), kp(&[(1, 8, 0)]));
    s
}

/// Genus-zero k = 0 remainder of the assembled large-N free energy through
/// weight 3: t_0^3/12 + t_0^3 t_1 / 24.
pub fn w_remainder_table() -> TSeries {
    let mut s = TSeries::zero(6);
    s.add_term(mono(&[(0, 3)]), kp(&[(1, 12, 0)]));
    s.add_term(mono(&[(0, 3), (2, 1)]), kp(&[(1, 24, 0)]));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_weights_are_multiples_of_three_halves() {
        for (m, c, _) in free_energy_table() {
            assert!(!c.is_zero());
            assert_eq!(m.weight_twice() % 3, 0, "bad weight for {}", m);
        }
        assert_eq!(free_energy_table().len(), 31);
    }

    #[test]
    fn series_round_trip() {
        let f = free_energy_series();
        assert_eq!(f.num_terms(), 31);
        // t_4 coefficient reduces: 105/9216 = 35/3072.
        let t4 = f.coeff(&mono(&[(8, 1)]));
        assert_eq!(t4.coeff(0), rat(35, 3072));
        assert_eq!(t4.coeff(2), rat(607, 1152));
        assert_eq!(t4.coeff(4), rat(169, 576));
    }
}
