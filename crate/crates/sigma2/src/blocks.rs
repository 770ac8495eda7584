//! Symmetry blocks of the polynomial basis on S^4.
//!
//! Restrictions of quintic-space polynomials to the sphere split under the
//! azimuthal rotation (in the x1-x2 plane) and the three reflections
//! `x3 -> -x3`, `x4 -> -x4`, `x5 -> -x5` into blocks labelled by the
//! azimuthal order `mu`, the trig kind (cos/sin), and three parities.
//! Functions in distinct blocks are orthogonal under the product quadrature
//! *exactly*, so orthonormalization never has to couple blocks.
//!
//! Within a block, spanning functions are indexed by `(rad, c, d, e)`:
//!
//! ```text
//!   T_mu(x1, x2) * (x1^2 + x2^2)^rad * U3_c(x1..x3) * U2_d(x4, x5) * P_e(x5)
//! ```
//!
//! where `T_mu` is `Re/Im (x2 + i x1)^mu` and `U3_c`, `U2_d` are homogenized
//! Legendre factors, e.g. `U2_d = s^d P_d(x4/s)` with `s^2 = 1 - x5^2`, kept
//! polynomial by the parity of the Legendre coefficients. The factors'
//! values separate over the three polar directions, which is what makes
//! block construction and synthesis cheap.

use crate::util::binomial;

/// Azimuthal factor: `cos(mu phi)` or `sin(mu phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Trig {
    Cos,
    Sin,
}

/// Identifies one symmetry block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockKey {
    pub mu: usize,
    pub kind: Trig,
    /// Parities (true = odd) of the Legendre orders c, d, e.
    pub pc: bool,
    pub pd: bool,
    pub pe: bool,
}

/// One spanning function inside a block; total polynomial degree is
/// `mu + 2*rad + c + d + e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanTuple {
    pub rad: usize,
    pub c: usize,
    pub d: usize,
    pub e: usize,
}

impl SpanTuple {
    pub fn degree(&self, mu: usize) -> usize {
        mu + 2 * self.rad + self.c + self.d + self.e
    }
}

/// Dimension of the degree-`l` spherical harmonics on S^4.
pub fn harmonic_dim(l: usize) -> usize {
    (l + 1) * (l + 2) * (2 * l + 3) / 6
}

/// Number of independent degree-`l` harmonics inside a block: the classical
/// tower has exactly one harmonic per `(c, d, e)` with `mu + c + d + e = l`,
/// so counting solutions with the block's parities gives the rank.
pub fn block_rank_at_degree(key: &BlockKey, l: usize) -> usize {
    if l < key.mu {
        return 0;
    }
    let rem = l - key.mu;
    let par = key.pc as usize + key.pd as usize + key.pe as usize;
    if rem < par || (rem - par) % 2 != 0 {
        return 0;
    }
    let s = (rem - par) / 2;
    (s + 2) * (s + 1) / 2
}

/// Enumerate all blocks that are nonempty at truncation degree `l_max`,
/// in the canonical order (mu, kind, pc, pd, pe).
pub fn enumerate_blocks(l_max: usize) -> Vec<BlockKey> {
    let mut keys = Vec::new();
    for mu in 0..=l_max {
        let kinds: &[Trig] = if mu == 0 {
            &[Trig::Cos]
        } else {
            &[Trig::Cos, Trig::Sin]
        };
        for &kind in kinds {
            for pc in [false, true] {
                for pd in [false, true] {
                    for pe in [false, true] {
                        let par = pc as usize + pd as usize + pe as usize;
                        if mu + par <= l_max {
                            keys.push(BlockKey { mu, kind, pc, pd, pe });
                        }
                    }
                }
            }
        }
    }
    keys
}

/// Spanning tuples of a block up to `l_max`, grouped by ascending degree
/// (lexicographic within a degree).
pub fn enumerate_tuples(key: &BlockKey, l_max: usize) -> Vec<SpanTuple> {
    let mut out = Vec::new();
    for degree in key.mu..=l_max {
        let rem = degree - key.mu;
        for rad in 0..=rem / 2 {
            let cde = rem - 2 * rad;
            for c in 0..=cde {
                if (c % 2 == 1) != key.pc {
                    continue;
                }
                for d in 0..=cde - c {
                    if (d % 2 == 1) != key.pd {
                        continue;
                    }
                    let e = cde - c - d;
                    if (e % 2 == 1) != key.pe {
                        continue;
                    }
                    out.push(SpanTuple { rad, c, d, e });
                }
            }
        }
    }
    out
}

/// Coefficient triangle of the Legendre polynomials: `coeffs[k][i]` is the
/// coefficient of `x^i` in `P_k`. Exact in f64 for the orders used here.
pub fn legendre_coeffs(k_max: usize) -> Vec<Vec<f64>> {
    let mut tri: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    tri.push(vec![1.0]);
    if k_max == 0 {
        return tri;
    }
    tri.push(vec![0.0, 1.0]);
    for k in 1..k_max {
        let mut next = vec![0.0; k + 2];
        let kf = k as f64;
        for i in 0..=k {
            next[i + 1] += (2.0 * kf + 1.0) / (kf + 1.0) * tri[k][i];
        }
        for i in 0..k {
            next[i] -= kf / (kf + 1.0) * tri[k - 1][i];
        }
        tri.push(next);
    }
    tri
}

/// Legendre values `P_0(x) .. P_kmax(x)` by the three-term recurrence.
pub fn legendre_values(k_max: usize, x: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(k_max + 1);
    v.push(1.0);
    if k_max == 0 {
        return v;
    }
    v.push(x);
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * v[k] - kf * v[k - 1]) / (kf + 1.0);
        v.push(next);
    }
    v
}

/// Sparse monomial expansion: exponent tuple -> coefficient.
pub type MonoMap = std::collections::HashMap<[u8; 5], f64>;

/// Expansion of `T_mu` (cos kind: `Re (x2 + i x1)^mu`, sin: imaginary part)
/// over `(x1, x2)` exponents.
fn trig_factor(mu: usize, kind: Trig) -> Vec<([u8; 2], f64)> {
    if mu == 0 {
        return vec![([0, 0], 1.0)];
    }
    let mut terms = Vec::new();
    for k in 0..=mu {
        let want_odd = matches!(kind, Trig::Sin);
        if (k % 2 == 1) != want_odd {
            continue;
        }
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(([k as u8, (mu - k) as u8], sign * binomial(mu, k)));
    }
    terms
}

/// Monomial expansion of one spanning tuple of a block, as a map from
/// exponents `(a1..a5)` to coefficients. Total degree is bounded by the
/// tuple degree (the homogenized factors shed even amounts of degree).
pub fn tuple_monomials(key: &BlockKey, t: &SpanTuple, leg: &[Vec<f64>]) -> MonoMap {
    // Factor over (x1, x2): T_mu * (x1^2 + x2^2)^rad.
    let mut f12: Vec<([u8; 2], f64)> = Vec::new();
    for (exp, coef) in trig_factor(key.mu, key.kind) {
        for h in 0..=t.rad {
            let b = binomial(t.rad, h);
            f12.push((
                [exp[0] + 2 * h as u8, exp[1] + 2 * (t.rad - h) as u8],
                coef * b,
            ));
        }
    }

    // Factor over (x1, x2, x3): U3_c = sum_i p_{c,i} x3^i (x1^2+x2^2+x3^2)^{(c-i)/2}.
    let mut f123: Vec<([u8; 3], f64)> = Vec::new();
    for (i, &p) in leg[t.c].iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let h = (t.c - i) / 2;
        for h1 in 0..=h {
            for h2 in 0..=h - h1 {
                let h3 = h - h1 - h2;
                let m = binomial(h, h1) * binomial(h - h1, h2);
                f123.push((
                    [2 * h1 as u8, 2 * h2 as u8, (i + 2 * h3) as u8],
                    p * m,
                ));
            }
        }
    }

    // Factor over (x4, x5): U2_d * P_e(x5),
    // U2_d = sum_i p_{d,i} x4^i (1 - x5^2)^{(d-i)/2}.
    let mut f45: Vec<([u8; 2], f64)> = Vec::new();
    for (i, &p) in leg[t.d].iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let h = (t.d - i) / 2;
        for r in 0..=h {
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            f45.push(([i as u8, 2 * r as u8], p * sign * binomial(h, r)));
        }
    }
    let mut f45e: Vec<([u8; 2], f64)> = Vec::new();
    for (exp, coef) in &f45 {
        for (i, &p) in leg[t.e].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            f45e.push(([exp[0], exp[1] + i as u8], coef * p));
        }
    }

    // Outer product of the three partial factors.
    let mut out = MonoMap::new();
    for (e12, c12) in &f12 {
        for (e123, c123) in &f123 {
            let c = c12 * c123;
            for (e45, c45) in &f45e {
                let key5 = [
                    e12[0] + e123[0],
                    e12[1] + e123[1],
                    e123[2],
                    e45[0],
                    e45[1],
                ];
                *out.entry(key5).or_insert(0.0) += c * c45;
            }
        }
    }
    out.retain(|_, v| *v != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_sum_to_harmonic_dims() {
        for l_max in [4usize, 8, 12] {
            let keys = enumerate_blocks(l_max);
            for l in 0..=l_max {
                let total: usize = keys.iter().map(|k| block_rank_at_degree(k, l)).sum();
                assert_eq!(total, harmonic_dim(l), "degree {l} at l_max {l_max}");
            }
        }
    }

    #[test]
    fn tuple_counts_match_quintic_polynomial_space() {
        // Spanning tuples across all blocks biject with 5-variable monomials.
        for l_max in [4usize, 8, 12, 16] {
            let keys = enumerate_blocks(l_max);
            let total: usize = keys.iter().map(|k| enumerate_tuples(k, l_max).len()).sum();
            let m = binomial(l_max + 5, 5) as usize;
            assert_eq!(total, m, "l_max {l_max}");
        }
    }

    #[test]
    fn legendre_triangle_matches_known_rows() {
        let tri = legendre_coeffs(4);
        assert_eq!(tri[2], vec![-0.5, 0.0, 1.5]);
        assert_eq!(tri[3], vec![0.0, -1.5, 0.0, 2.5]);
        let p4 = &tri[4];
        assert!((p4[0] - 3.0 / 8.0).abs() < 1e-15);
        assert!((p4[2] + 30.0 / 8.0).abs() < 1e-15);
        assert!((p4[4] - 35.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_values_match_coeff_evaluation() {
        let tri = legendre_coeffs(10);
        for &x in &[-0.9, -0.3, 0.0, 0.4, 1.0] {
            let vals = legendre_values(10, x);
            for k in 0..=10 {
                let direct: f64 = tri[k]
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * x.powi(i as i32))
                    .sum();
                assert!((vals[k] - direct).abs() < 1e-12, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn tuple_monomials_reproduce_point_values() {
        // Evaluate the monomial expansion at a few off-sphere points and
        // compare with the defining product formula.
        let leg = legendre_coeffs(8);
        let key = BlockKey { mu: 2, kind: Trig::Sin, pc: true, pd: false, pe: true };
        let t = SpanTuple { rad: 1, c: 3, d: 2, e: 1 };
        let mono = tuple_monomials(&key, &t, &leg);
        let pts: [[f64; 5]; 3] = [
            [0.3, -0.2, 0.5, 0.1, -0.4],
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.1, 0.7, -0.3, 0.2, 0.6],
        ];
        for x in pts {
            let got: f64 = mono
                .iter()
                .map(|(e, c)| {
                    c * (0..5)
                        .map(|i| x[i].powi(e[i] as i32))
                        .product::<f64>()
                })
                .sum();

            // Defining formula, evaluated with explicit square roots.
            let rho2 = x[0] * x[0] + x[1] * x[1];
            let rho3sq = rho2 + x[2] * x[2];
            let rho3 = rho3sq.sqrt();
            let s1sq = 1.0 - x[4] * x[4];
            let s1 = s1sq.sqrt();
            // T_2 sin kind: Im (x2 + i x1)^2 = 2 x1 x2.
            let t2 = 2.0 * x[0] * x[1];
            let u3 = legendre_values(3, x[2] / rho3)[3] * rho3.powi(3);
            let u2 = legendre_values(2, x[3] / s1)[2] * s1sq;
            let u1 = legendre_values(1, x[4])[1];
            let want = t2 * rho2 * u3 * u2 * u1;
            assert!(
                (got - want).abs() < 1e-12 * want.abs().max(1.0),
                "point {x:?}: {got} vs {want}"
            );
        }
    }
}
