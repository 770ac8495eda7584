//! Small numeric helpers shared across the crate.

/// Surface measure of the unit round sphere S^4: `8 pi^2 / 3`.
pub const VOL_S4: f64 = 8.0 * std::f64::consts::PI * std::f64::consts::PI / 3.0;

/// Binomial coefficient as f64 (exact for the small arguments used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// `ln Gamma(k/2)` for a positive half-integer argument, by upward recursion
/// from `Gamma(1/2) = sqrt(pi)` and `Gamma(1) = 1`. Exact enough for moment
/// formulas up to the total degrees used in tests.
pub fn ln_gamma_half(twice_arg: u32) -> f64 {
    assert!(twice_arg >= 1, "argument must be a positive half-integer");
    let mut ln = if twice_arg % 2 == 1 {
        0.5 * std::f64::consts::PI.ln()
    } else {
        0.0
    };
    // Gamma(x + 1) = x Gamma(x); walk up from 1/2 or 1.
    let start = if twice_arg % 2 == 1 { 1 } else { 2 };
    let mut t = start;
    while t < twice_arg {
        ln += (t as f64 / 2.0).ln();
        t += 2;
    }
    ln
}

/// Integral of the monomial `x^alpha` over the unit sphere S^4 (Lebesgue
/// surface measure). Zero when any exponent is odd; otherwise
/// `2 * prod Gamma(beta_i) / Gamma(sum beta_i)` with `beta_i = (alpha_i+1)/2`.
pub fn sphere_monomial_integral(alpha: &[usize; 5]) -> f64 {
    if alpha.iter().any(|&a| a % 2 == 1) {
        return 0.0;
    }
    let mut ln_num = 0.0;
    let mut twice_sum = 0;
    for &a in alpha {
        let twice_beta = (a + 1) as u32; // 2 * (a+1)/2
        ln_num += ln_gamma_half(twice_beta);
        twice_sum += twice_beta;
    }
    2.0 * (ln_num - ln_gamma_half(twice_sum)).exp()
}

/// Compensated (Neumaier) summation. Used for quadrature reductions where
/// plain left-to-right addition would lose a few digits at large node counts.
pub fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// FNV-1a 64-bit hash; stable fingerprint for report provenance lines.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_matches_known_values() {
        // Gamma(1/2) = sqrt(pi), Gamma(1) = 1, Gamma(3/2) = sqrt(pi)/2, Gamma(3) = 2.
        assert!((ln_gamma_half(1) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-15);
        assert!(ln_gamma_half(2).abs() < 1e-15);
        let g32 = (0.5f64 * std::f64::consts::PI.sqrt()).ln();
        assert!((ln_gamma_half(3) - g32).abs() < 1e-14);
        assert!((ln_gamma_half(6) - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn monomial_integrals_match_closed_forms() {
        // |S^4|, and the classical second/fourth moments.
        assert!((sphere_monomial_integral(&[0, 0, 0, 0, 0]) - VOL_S4).abs() < 1e-12);
        let x2 = sphere_monomial_integral(&[0, 0, 0, 0, 2]);
        assert!((x2 - VOL_S4 / 5.0).abs() < 1e-13);
        let x4 = sphere_monomial_integral(&[0, 0, 0, 0, 4]);
        assert!((x4 - VOL_S4 * 3.0 / 35.0).abs() < 1e-13);
        let x2y2 = sphere_monomial_integral(&[2, 2, 0, 0, 0]);
        assert!((x2y2 - VOL_S4 / 35.0).abs() < 1e-13);
        assert_eq!(sphere_monomial_integral(&[1, 0, 0, 0, 2]), 0.0);
    }

    #[test]
    fn binomial_small_table() {
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(16, 8), 12870.0);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
