//! Adaptive Gauss–Kronrod quadrature and the decade-marching improper integral
//! behind [`crate::kernel::integrate_log`].

use crate::error::{Error, Result};

// 15-point Kronrod abscissae on [0, 1] (symmetric), with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

/// Kronrod estimate, its error against the embedded Gauss rule, and the
/// Kronrod estimate of `∫|f|` (the roundoff scale).
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let (fl, fr) = (f(center - dx), f(center + dx));
        let pair = fl + fr;
        kron += w * pair;
        abs += w * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs(), abs * half.abs())
}

/// Error estimates below this many ulps of `∫|f|` are roundoff.
const ROUNDOFF_ULPS: f64 = 100.0;

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Bisects until each piece meets its share of the tolerance, the share being
/// proportional to the piece's length.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    let (value, err, abs) = kronrod(f, a, b);
    refine(f, a, b, (value, err, abs), tol, 0)
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, est: (f64, f64, f64), tol: f64, depth: u32) -> f64 {
    let (whole, err, abs) = est;
    if err <= tol || err <= ROUNDOFF_ULPS * f64::EPSILON * abs || depth >= MAX_DEPTH || !err.is_finite() {
        return whole;
    }
    let mid = 0.5 * (a + b);
    let (left, el, al) = kronrod(f, a, mid);
    let (right, er, ar) = kronrod(f, mid, b);
    if (left + right - whole).abs() <= tol * 1e-3 && el + er <= tol {
        return left + right;
    }
    refine(f, a, mid, (left, el, al), 0.5 * tol, depth + 1) + refine(f, mid, b, (right, er, ar), 0.5 * tol, depth + 1)
}

/// Ratio a decade contribution must fall below, relative to the previous one,
/// to count as geometric shrinkage.
pub const SHRINK_RATIO: f64 = 0.5;
/// Consecutive non-shrinking decades that signal divergence.
pub const DIVERGENCE_DECADES: usize = 3;
const MAX_DECADES: usize = 60;

/// `∫_r^∞ k(u)/u du` for an integrand without known support.
///
/// Works in `s = ln u` so the integrand is `k(e^s)`. Below `scale` the integral is
/// taken in one piece; beyond it, decades `[10^j s0, 10^{j+1} s0]` are added until
/// the geometric extrapolation of the `|k|/u` envelope falls below `tol`.
pub fn log_tail_integral<K: Fn(f64) -> f64>(k: &K, r: f64, scale: f64, tol: f64) -> Result<f64> {
    let g = |s: f64| k(s.exp());
    let env = |s: f64| k(s.exp()).abs();
    let s_r = r.ln();
    let start = r.max(scale).ln();
    let budget = tol / 4.0;
    let mut total = if start > s_r { integrate(&g, s_r, start, budget) } else { 0.0 };
    let step = std::f64::consts::LN_10;
    let mut lo = start;
    let mut prev_env: Option<f64> = None;
    let mut stalled = 0usize;
    for _ in 0..MAX_DECADES {
        let hi = lo + step;
        let piece = integrate(&g, lo, hi, budget * 1e-2);
        let mag = integrate(&env, lo, hi, budget * 1e-2);
        total += piece;
        if let Some(p) = prev_env {
            if mag > SHRINK_RATIO * p && mag > f64::MIN_POSITIVE {
                stalled += 1;
                if stalled >= DIVERGENCE_DECADES {
                    return Err(Error::DivergentTail { at: hi.exp() });
                }
            } else {
                stalled = 0;
                let ratio = if p > 0.0 { mag / p } else { 0.0 };
                let tail = mag * ratio / (1.0 - ratio);
                if tail <= budget {
                    return Ok(total);
                }
            }
        } else if mag == 0.0 {
            return Ok(total);
        }
        prev_env = Some(mag);
        lo = hi;
    }
    Err(Error::DivergentTail { at: lo.exp() })
}
