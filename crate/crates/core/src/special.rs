//! Exponential and cosine integrals used by the closed-form log kernels.

use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 500;

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_int_e1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        // E1(x) = -γ - ln x - Σ_{k≥1} (-x)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..MAX_ITER {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < EPS * sum.abs().max(TINY) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz on the continued fraction
        let mut b = x + 1.0;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Cosine integral `Ci(x) = -∫_x^∞ cos(t)/t dt` for `x > 0`.
pub fn cos_int(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 2.0 {
        // Ci(x) = γ + ln x + Σ_{k≥1} (-1)^k x^{2k} / (2k (2k)!)
        let x2 = x * x;
        let mut sum = 0.0;
        let mut fact = 1.0;
        for k in 1..MAX_ITER {
            let two_k = 2 * k;
            fact *= -x2 / ((two_k - 1) * two_k) as f64;
            let add = fact / two_k as f64;
            sum += add;
            if add.abs() < EPS * sum.abs().max(TINY) {
                break;
            }
        }
        EULER_GAMMA + x.ln() + sum
    } else {
        // continued fraction for E1(ix)
        let mut b = Complex64::new(1.0, x);
        let mut c = Complex64::new(1.0 / TINY, 0.0);
        let mut d = Complex64::new(1.0, 0.0) / b;
        let mut h = d;
        for i in 2..MAX_ITER {
            let a = -(((i - 1) * (i - 1)) as f64);
            b += Complex64::new(2.0, 0.0);
            d = Complex64::new(1.0, 0.0) / (d * a + b);
            c = b + Complex64::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < EPS {
                break;
            }
        }
        h *= Complex64::new(x.cos(), -x.sin());
        -h.re
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1
        assert!((exp_int_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_int_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_int_e1(2.0) - 0.048_900_510_708_061_1).abs() < 1e-15);
        assert!((exp_int_e1(10.0) - 4.156_968_929_685_324e-6).abs() < 1e-19);
    }

    #[test]
    fn ci_reference_values() {
        assert!((cos_int(1.0) - 0.337_403_922_900_968_1).abs() < 1e-14);
        assert!((cos_int(2.0) - 0.422_980_828_774_865).abs() < 1e-14);
        assert!((cos_int(5.0) - -0.190_029_749_656_643_9).abs() < 1e-14);
        assert!((cos_int(20.0) - 0.044_419_820_845_353_3).abs() < 1e-14);
    }

    #[test]
    fn branches_agree_at_switch() {
        let lo = exp_int_e1(1.0 - 1e-12);
        let hi = exp_int_e1(1.0 + 1e-12);
        assert!((lo - hi).abs() < 1e-11);
        let lo = cos_int(2.0 - 1e-12);
        let hi = cos_int(2.0 + 1e-12);
        assert!((lo - hi).abs() < 1e-11);
    }
}
