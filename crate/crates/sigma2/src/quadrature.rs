//! One-dimensional Gauss rules for the hyperspherical product quadrature.
//!
//! The sphere measure factorizes as
//! `(1-u1^2) du1 * (1-u2^2)^{1/2} du2 * du3 * dphi`,
//! so we need Gauss rules for the symmetric Jacobi weights `(1-u^2)^alpha`
//! with `alpha = 1, 1/2, 0`, plus a uniform rule in the azimuth. Nodes and
//! weights come from the Golub-Welsch eigenvalue method, except for
//! `alpha = 1/2` (Chebyshev, second kind) where the closed form is used.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::util::ln_gamma_half;

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Apply the rule to a function of the node coordinate.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `n`-point Gauss rule for the weight `(1-u^2)^alpha` on `[-1, 1]`.
///
/// Exact for polynomials of degree `<= 2n - 1`. Symmetry of the weight makes
/// the Jacobi matrix diagonal-free; after the eigenvalue solve the rule is
/// symmetrized pairwise so that `u -> -u` antisymmetry holds to the last bit.
pub fn gauss_symmetric(n: usize, alpha: f64) -> Rule1D {
    assert!(n >= 1, "empty quadrature rule requested");
    assert!(alpha > -1.0, "weight exponent must exceed -1");

    // Chebyshev second kind: closed-form nodes/weights.
    if alpha == 0.5 {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let m = (n + 1) as f64;
        for k in (1..=n).rev() {
            let th = k as f64 * std::f64::consts::PI / m;
            nodes.push(th.cos());
            weights.push(std::f64::consts::PI / m * th.sin().powi(2));
        }
        return Rule1D { nodes, weights };
    }

    // Zeroth moment of (1-u^2)^alpha: 2^(2a+1) Gamma(a+1)^2 / Gamma(2a+2).
    // Restricted to the half-integer alphas we use, so ln_gamma_half applies.
    let twice_a1 = (2.0 * alpha).round() as u32 + 2;
    let mu0 = ((2.0 * alpha + 1.0) * 2f64.ln() + 2.0 * ln_gamma_half(twice_a1)
        - ln_gamma_half(2 * twice_a1))
    .exp();

    if n == 1 {
        return Rule1D {
            nodes: vec![0.0],
            weights: vec![mu0],
        };
    }

    // Jacobi matrix for Jacobi(alpha, alpha): zero diagonal, off-diagonal
    // sqrt(b_k) with b_1 = 1/(3+2a), b_k = k(k+2a) / ((2k+2a+1)(2k+2a-1)).
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = if k == 1 {
            1.0 / (3.0 + 2.0 * alpha)
        } else {
            kf * (kf + 2.0 * alpha)
                / ((2.0 * kf + 2.0 * alpha + 1.0) * (2.0 * kf + 2.0 * alpha - 1.0))
        };
        let off = b.sqrt();
        j[(k, k - 1)] = off;
        j[(k - 1, k)] = off;
    }

    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Fold the +-u pairs together so the rule is exactly symmetric.
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let k = n - 1 - i;
        let x = 0.5 * (nodes[k] - nodes[i]);
        let w = 0.5 * (weights[k] + weights[i]);
        nodes[i] = -x;
        nodes[k] = x;
        weights[i] = w;
        weights[k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    Rule1D { nodes, weights }
}

/// Uniform `m`-point rule on the azimuth `[0, 2 pi)`: trapezoidal on a
/// periodic interval, exact for trigonometric polynomials of order `< m`.
pub fn uniform_azimuth(m: usize) -> Rule1D {
    assert!(m >= 1);
    let w = 2.0 * std::f64::consts::PI / m as f64;
    Rule1D {
        nodes: (0..m).map(|l| w * l as f64).collect(),
        weights: vec![w; m],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form moment of the weight: \int u^{2k} (1-u^2)^a du over [-1,1]
    /// equals B(k + 1/2, a + 1). Only half-integer `a` appear in this crate.
    fn even_moment(k: u32, alpha: f64) -> f64 {
        let twice_a1 = (2.0 * alpha).round() as u32 + 2;
        (ln_gamma_half(2 * k + 1) + ln_gamma_half(twice_a1)
            - ln_gamma_half(2 * k + twice_a1 + 1))
        .exp()
    }

    #[test]
    fn rules_hit_all_moments_up_to_exactness_degree() {
        for &alpha in &[0.0, 0.5, 1.0] {
            for n in 1..=20usize {
                let rule = gauss_symmetric(n, alpha);
                assert_eq!(rule.len(), n);
                // Even moments up to degree 2n-1 (odd ones vanish by symmetry).
                for k in 0..n as u32 {
                    let exact = even_moment(k, alpha);
                    let got = rule.integrate(|u| u.powi(2 * k as i32));
                    assert!(
                        (got - exact).abs() <= 1e-14 * exact.max(1.0),
                        "alpha={alpha} n={n} k={k}: {got} vs {exact}"
                    );
                }
                for k in 0..n as u32 {
                    let got = rule.integrate(|u| u.powi(2 * k as i32 + 1));
                    assert!(got.abs() < 1e-14, "odd moment should vanish");
                }
            }
        }
    }

    #[test]
    fn exactness_degree_is_sharp() {
        // At degree 2n the Gauss rule must fail by a visible margin,
        // otherwise the exactness test above proves nothing.
        for &alpha in &[0.0, 0.5, 1.0] {
            let n = 6;
            let rule = gauss_symmetric(n, alpha);
            let exact = even_moment(n as u32, alpha);
            let got = rule.integrate(|u| u.powi(2 * n as i32));
            assert!((got - exact).abs() > 1e-8);
        }
    }

    #[test]
    fn chebyshev_closed_form_agrees_with_eigen_path() {
        // Golub-Welsch at alpha=0.5 should reproduce the closed form.
        let n = 9;
        let closed = gauss_symmetric(n, 0.5);
        let mu0 = std::f64::consts::PI / 2.0;
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let b = if k == 1 {
                0.25
            } else {
                kf * (kf + 1.0) / ((2.0 * kf + 2.0) * (2.0 * kf))
            };
            j[(k, k - 1)] = b.sqrt();
            j[(k - 1, k)] = b.sqrt();
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (i, (x, w)) in pairs.iter().enumerate() {
            assert!((x - closed.nodes[i]).abs() < 1e-12);
            assert!((w - closed.weights[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn azimuth_rule_integrates_trig_modes() {
        let m = 10;
        let rule = uniform_azimuth(m);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0 * std::f64::consts::PI).abs() < 1e-13);
        for mu in 1..m {
            let c = rule.integrate(|p| (mu as f64 * p).cos());
            let s = rule.integrate(|p| (mu as f64 * p).sin());
            assert!(c.abs() < 1e-12 && s.abs() < 1e-12, "mode {mu} must vanish");
        }
        // cos^2 of the highest resolved mode integrates to pi.
        let c2 = rule.integrate(|p| (4.0 * p).cos().powi(2));
        assert!((c2 - std::f64::consts::PI).abs() < 1e-12);
    }
}
