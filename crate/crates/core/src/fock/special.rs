//! Closed-form pieces used by the quadrature-jump/cat fidelity.

use std::f64::consts::PI;

/// `Gamma(k/2)` for integer `k >= 1`, exact recursion from `Gamma(1/2) = sqrt(pi)`
/// and `Gamma(1) = 1`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k >= 1, "Gamma(k/2) needs k >= 1");
    let (mut value, mut z2) = if k % 2 == 0 { (1.0, 2u32) } else { (PI.sqrt(), 1u32) };
    // value = Gamma(z2/2); step z -> z + 1
    while z2 < k {
        value *= z2 as f64 / 2.0;
        z2 += 2;
    }
    value
}

/// Kummer's `1F1(-m; b; z)` for non-negative integer `m`: a terminating
/// polynomial with `m + 1` terms.
pub fn kummer_terminating(m: u32, b: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..m {
        let kf = k as f64;
        term *= (kf - m as f64) / (b + kf) * z / (kf + 1.0);
        sum += term;
    }
    sum
}

/// Fidelity `|<psi_n|phi_n>|` between `x^n|0>` (normalized) and the normalized
/// two-component cat `|sqrt(n/2)> + (-1)^n |-sqrt(n/2)>`.
pub fn css_fidelity_closed(n: u32) -> f64 {
    let nf = n as f64;
    let quarter_pi = PI.powf(0.25);
    let norm_gamma = gamma_half(2 * n + 1); // Gamma(n + 1/2)
    if n % 2 == 0 {
        let top = gamma_half(n + 1) * kummer_terminating(n / 2, 0.5, -nf / 4.0);
        top / (quarter_pi * ((nf / 2.0).cosh() * norm_gamma).sqrt())
    } else {
        let top = nf.sqrt() * gamma_half(n + 2) * kummer_terminating((n - 1) / 2, 1.5, -nf / 4.0);
        top / (quarter_pi * ((nf / 2.0).sinh() * norm_gamma).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(3) - PI.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(gamma_half(10), 24.0);
        assert!((gamma_half(7) - 15.0 / 8.0 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn kummer_small_cases() {
        assert_eq!(kummer_terminating(0, 0.5, 3.0), 1.0);
        // 1F1(-1; b; z) = 1 - z/b
        assert!((kummer_terminating(1, 1.5, -2.0) - (1.0 + 2.0 / 1.5)).abs() < 1e-15);
        // 1F1(-2; 1/2; z) = 1 - 4z + 4z^2/3
        let z = 0.7;
        assert!((kummer_terminating(2, 0.5, z) - (1.0 - 4.0 * z + 4.0 * z * z / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn fidelity_endpoints() {
        assert!((css_fidelity_closed(0) - 1.0).abs() < 1e-15);
        // n = 1: |1> against the odd cat with alpha^2 = 1/2 gives alpha / sqrt(sinh alpha^2)
        let a2: f64 = 0.5;
        assert!((css_fidelity_closed(1) - a2.sqrt() / a2.sinh().sqrt()).abs() < 1e-14);
        assert!((css_fidelity_closed(10) - 0.97).abs() < 0.005);
    }
}
