use crate::error::{Error, Result};
use crate::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the Gamma function for `x > 0`.
///
/// Lanczos approximation with g = 7 and nine coefficients, evaluated in
/// double precision. Arguments below 1/2 go through the reflection formula.
pub fn log_gamma<T: Scalar>(x: T) -> Result<T> {
    let xf = x.as_f64();
    if !(xf > 0.0) || !xf.is_finite() {
        return Err(Error::Domain(format!("log_gamma needs x > 0, got {xf}")));
    }
    Ok(T::of(ln_gamma_f64(xf)))
}

fn ln_gamma_f64(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x < 0.5 {
        // Γ(x)Γ(1-x) = π / sin(πx), and sin(πx) > 0 on (0, 1/2)
        return (PI / (PI * x).sin()).ln() - ln_gamma_f64(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!(log_gamma(1.0f64).unwrap().abs() < 1e-13);
        assert!(log_gamma(2.0f64).unwrap().abs() < 1e-13);
        let half = 0.5 * std::f64::consts::PI.ln();
        assert!((log_gamma(0.5f64).unwrap() - half).abs() < 1e-12);
        assert!((log_gamma(5.0f64).unwrap() - 24f64.ln()).abs() < 1e-12);
        // Γ(0.1) = 9.513507698668731836...
        assert!((log_gamma(0.1f64).unwrap() - 9.513_507_698_668_732f64.ln()).abs() < 1e-10);
        // ln Γ(50) = ln(49!)
        let ln49: f64 = (1..50).map(|k| (k as f64).ln()).sum();
        assert!((log_gamma(50.0f64).unwrap() - ln49).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(matches!(log_gamma(0.0f64), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(-1.5f64), Err(Error::Domain(_))));
    }

    #[test]
    fn recurrence_holds() {
        let mut x = 0.5f64;
        while x <= 20.0 {
            let lhs = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap() - x.ln();
            assert!(lhs.abs() <= 1e-9, "x={x} residual={lhs}");
            x += 0.173;
        }
    }
}
