//! Seed kernels, the log-integrated kernel `K(r) = ∫_{|r|}^∞ k(u)/u du`, the
//! ε-kernels `k_ε(r) = ∫_{|r|}^{|r|/ε} k(u)/u du`, and the goodness and
//! moment diagnostics derived from them.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::special::{cos_int, exp_int_e1};

/// Default absolute tolerance for log-kernel evaluations.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Catalog entry for a seed kernel, as it appears in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Triangle kernel `λ²(1 − |u|/T)₊` of the cone construction.
    Cone {
        lambda2: f64,
        #[serde(rename = "T")]
        t: f64,
    },
    /// `e^{−u²/2σ²} / (σ√(2π))`.
    Gaussian { sigma: f64 },
    /// Ornstein–Uhlenbeck covariance `σ²/(2θ) e^{−θ|u|}`.
    Ou { sigma: f64, theta: f64 },
    /// `cos u`; a valid covariance whose chaos is not good.
    Cosine {},
    /// `k ≡ 0`, giving Lebesgue measure.
    Zero {},
    /// `k ≡ value`; its log kernel diverges.
    Constant { value: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} must be positive and finite, got {v}")));
        match *self {
            KernelSpec::Cone { lambda2, t } => {
                if !(lambda2 >= 0.0 && lambda2.is_finite()) {
                    return Err(Error::InvalidArgument(format!("lambda2 must be >= 0, got {lambda2}")));
                }
                if !(t > 0.0 && t.is_finite()) {
                    return bad("T", t);
                }
            }
            KernelSpec::Gaussian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad("sigma", sigma);
                }
            }
            KernelSpec::Ou { sigma, theta } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad("sigma", sigma);
                }
                if !(theta > 0.0 && theta.is_finite()) {
                    return bad("theta", theta);
                }
            }
            KernelSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidArgument(format!("value must be finite, got {value}")));
                }
            }
            KernelSpec::Cosine {} | KernelSpec::Zero {} => {}
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SeedKernel> {
        self.validate()?;
        Ok(SeedKernel { kind: Kind::Catalog(*self) })
    }
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Catalog(KernelSpec),
    Custom {
        name: String,
        eval: Evaluator,
        k0: f64,
        support: Option<f64>,
        scale: f64,
    },
}

/// A continuous covariance function `k` on the line.
#[derive(Clone)]
pub struct SeedKernel {
    kind: Kind,
}

impl fmt::Debug for SeedKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeedKernel")
            .field("name", &self.name())
            .field("k0", &self.k0())
            .field("support_radius", &self.support_radius())
            .finish()
    }
}

impl SeedKernel {
    pub fn cone(lambda2: f64, t: f64) -> Result<Self> {
        KernelSpec::Cone { lambda2, t }.build()
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        KernelSpec::Gaussian { sigma }.build()
    }

    pub fn ou(sigma: f64, theta: f64) -> Result<Self> {
        KernelSpec::Ou { sigma, theta }.build()
    }

    pub fn cosine() -> Self {
        SeedKernel { kind: Kind::Catalog(KernelSpec::Cosine {}) }
    }

    pub fn zero() -> Self {
        SeedKernel { kind: Kind::Catalog(KernelSpec::Zero {}) }
    }

    pub fn constant(value: f64) -> Result<Self> {
        KernelSpec::Constant { value }.build()
    }

    /// A user-supplied even covariance. `scale` is the lag beyond which the
    /// tail is expected to start decaying; it anchors the divergence test.
    pub fn custom<F>(name: impl Into<String>, eval: F, support: Option<f64>, scale: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let k0 = eval(0.0);
        SeedKernel {
            kind: Kind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
                k0,
                support,
                scale: if scale > 0.0 { scale } else { 1.0 },
            },
        }
    }

    /// The catalog entry, if this kernel came from the catalog.
    pub fn spec(&self) -> Option<KernelSpec> {
        match &self.kind {
            Kind::Catalog(s) => Some(*s),
            Kind::Custom { .. } => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Catalog(spec) => match *spec {
                KernelSpec::Cone { lambda2, t } => format!("cone(lambda2={lambda2},T={t})"),
                KernelSpec::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
                KernelSpec::Ou { sigma, theta } => format!("ou(sigma={sigma},theta={theta})"),
                KernelSpec::Cosine {} => "cosine".to_string(),
                KernelSpec::Zero {} => "zero".to_string(),
                KernelSpec::Constant { value } => format!("constant(value={value})"),
            },
            Kind::Custom { name, .. } => name.clone(),
        }
    }

    /// `k(|u|)`.
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.abs();
        match &self.kind {
            Kind::Catalog(spec) => match *spec {
                KernelSpec::Cone { lambda2, t } => {
                    if u >= t {
                        0.0
                    } else {
                        lambda2 * (1.0 - u / t)
                    }
                }
                KernelSpec::Gaussian { sigma } => {
                    (-(u * u) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
                }
                KernelSpec::Ou { sigma, theta } => sigma * sigma / (2.0 * theta) * (-theta * u).exp(),
                KernelSpec::Cosine {} => u.cos(),
                KernelSpec::Zero {} => 0.0,
                KernelSpec::Constant { value } => value,
            },
            Kind::Custom { eval, .. } => eval(u),
        }
    }

    pub fn k0(&self) -> f64 {
        match &self.kind {
            Kind::Catalog(_) => self.eval(0.0),
            Kind::Custom { k0, .. } => *k0,
        }
    }

    /// Smallest `R` with `k ≡ 0` outside `[−R, R]`, when finite.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.kind {
            Kind::Catalog(spec) => match *spec {
                KernelSpec::Cone { lambda2, t } => Some(if lambda2 == 0.0 { 0.0 } else { t }),
                KernelSpec::Zero {} => Some(0.0),
                KernelSpec::Constant { value } if value == 0.0 => Some(0.0),
                _ => None,
            },
            Kind::Custom { support, .. } => *support,
        }
    }

    /// Lag at which `k` has essentially decorrelated; sets how many ε-layers
    /// a grid can resolve. `None` when the kernel is identically zero.
    pub fn correlation_length(&self) -> Option<f64> {
        match &self.kind {
            Kind::Catalog(spec) => match *spec {
                KernelSpec::Cone { lambda2, t } => (lambda2 != 0.0).then_some(t),
                KernelSpec::Gaussian { sigma } => Some(sigma),
                KernelSpec::Ou { theta, .. } => Some(1.0 / theta),
                KernelSpec::Cosine {} => Some(1.0),
                KernelSpec::Zero {} => None,
                KernelSpec::Constant { value } => (value != 0.0).then_some(1.0),
            },
            Kind::Custom { support, scale, .. } => Some(support.unwrap_or(*scale)),
        }
    }

    fn tail_scale(&self) -> f64 {
        match &self.kind {
            Kind::Custom { scale, .. } => *scale,
            Kind::Catalog(_) => self.correlation_length().unwrap_or(1.0),
        }
    }

    /// Whether `|k(u)|/u` is non-increasing on `u > 0`, so that the goodness
    /// envelope can be read off pointwise.
    fn monotone_tail(&self) -> bool {
        matches!(
            self.spec(),
            Some(KernelSpec::Cone { .. })
                | Some(KernelSpec::Gaussian { .. })
                | Some(KernelSpec::Ou { .. })
                | Some(KernelSpec::Zero {})
                | Some(KernelSpec::Constant { .. })
        )
    }
}

/// The log-integrated kernel `K(r) = ∫_{|r|}^∞ k(u)/u du`.
#[derive(Debug, Clone)]
pub struct LogKernel {
    pub seed: SeedKernel,
    pub tail_tolerance: f64,
}

impl LogKernel {
    pub fn new(seed: SeedKernel) -> Self {
        LogKernel { seed, tail_tolerance: DEFAULT_TOL }
    }

    pub fn with_tolerance(seed: SeedKernel, tol: f64) -> Self {
        LogKernel { seed, tail_tolerance: tol }
    }

    /// `K(r)`; infinite at `r = 0` whenever `k(0) > 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        let r = r.abs();
        if r == 0.0 {
            let k0 = self.seed.k0();
            return Ok(if k0 == 0.0 { 0.0 } else { f64::INFINITY * k0.signum() });
        }
        integrate_log(&self.seed, r, self.tail_tolerance)
    }

    /// Leading asymptote `k(0) ln(1/r)` as `r → 0`.
    pub fn asymptote(&self, r: f64) -> f64 {
        self.seed.k0() * (1.0 / r.abs()).ln()
    }
}

/// Covariance kernel `k_ε` of the zoom factor.
#[derive(Debug, Clone)]
pub struct EpsilonKernel {
    pub seed: SeedKernel,
    pub epsilon: f64,
    pub tol: f64,
}

impl EpsilonKernel {
    pub fn new(seed: SeedKernel, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(EpsilonKernel { seed, epsilon, tol: DEFAULT_TOL })
    }

    pub fn eval(&self, r: f64) -> f64 {
        epsilon_kernel(&self.seed, self.epsilon, r, self.tol)
    }

    /// Variance `k_ε(0) = k(0) ln(1/ε)`.
    pub fn variance(&self) -> f64 {
        self.seed.k0() * (1.0 / self.epsilon).ln()
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// `k(|u|)`.
pub fn eval_seed(k: &SeedKernel, u: f64) -> f64 {
    k.eval(u)
}

/// `K(r) = ∫_r^∞ k(u)/u du` for `r > 0`, within `tol`.
///
/// Catalog kernels use their closed forms (in terms of `E1` and `Ci`); other
/// kernels go through adaptive quadrature in `ln u`, truncated at the support
/// radius when known and by decade marching otherwise.
pub fn integrate_log(k: &SeedKernel, r: f64, tol: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("log kernel needs r > 0, got {r}")));
    }
    match k.spec() {
        Some(KernelSpec::Cone { lambda2, t }) => Ok(if r >= t { 0.0 } else { lambda2 * ((t / r).ln() + r / t - 1.0) }),
        Some(KernelSpec::Gaussian { sigma }) => {
            let c = 1.0 / (sigma * (2.0 * PI).sqrt());
            Ok(0.5 * c * exp_int_e1(r * r / (2.0 * sigma * sigma)))
        }
        Some(KernelSpec::Ou { sigma, theta }) => Ok(sigma * sigma / (2.0 * theta) * exp_int_e1(theta * r)),
        Some(KernelSpec::Cosine {}) => Ok(-cos_int(r)),
        Some(KernelSpec::Zero {}) => Ok(0.0),
        Some(KernelSpec::Constant { value }) if value == 0.0 => Ok(0.0),
        _ => integrate_log_quadrature(k, r, tol),
    }
}

/// Quadrature route for `K(r)`, used for kernels without a closed form.
pub fn integrate_log_quadrature(k: &SeedKernel, r: f64, tol: f64) -> Result<f64> {
    let g = |s: f64| k.eval(s.exp());
    match k.support_radius() {
        Some(radius) if r >= radius => Ok(0.0),
        Some(radius) => Ok(quad::integrate(&g, r.ln(), radius.ln(), tol)),
        None => quad::log_tail_integral(&|u: f64| k.eval(u), r, k.tail_scale(), tol),
    }
}

/// `k_ε(r) = ∫_r^{r/ε} k(u)/u du`, with the closed limit `k(0) ln(1/ε)` at 0.
pub fn epsilon_kernel(k: &SeedKernel, epsilon: f64, r: f64, tol: f64) -> f64 {
    let r = r.abs();
    let log_inv_eps = (1.0 / epsilon).ln();
    if r == 0.0 {
        return k.k0() * log_inv_eps;
    }
    let outer = r / epsilon;
    match k.spec() {
        Some(KernelSpec::Cone { lambda2, t }) => {
            if r >= t {
                0.0
            } else if r >= epsilon * t {
                lambda2 * ((t / r).ln() + r / t - 1.0)
            } else {
                lambda2 * (log_inv_eps + r / t - r / (epsilon * t))
            }
        }
        Some(KernelSpec::Gaussian { sigma }) => {
            let c = 1.0 / (sigma * (2.0 * PI).sqrt());
            let s2 = 2.0 * sigma * sigma;
            0.5 * c * (exp_int_e1(r * r / s2) - exp_int_e1(outer * outer / s2))
        }
        Some(KernelSpec::Ou { sigma, theta }) => {
            sigma * sigma / (2.0 * theta) * (exp_int_e1(theta * r) - exp_int_e1(theta * outer))
        }
        Some(KernelSpec::Cosine {}) => cos_int(outer) - cos_int(r),
        Some(KernelSpec::Zero {}) => 0.0,
        Some(KernelSpec::Constant { value }) => value * log_inv_eps,
        None => epsilon_kernel_quadrature(k, epsilon, r, tol),
    }
}

/// Quadrature route for `k_ε(r)`, `r > 0`.
pub fn epsilon_kernel_quadrature(k: &SeedKernel, epsilon: f64, r: f64, tol: f64) -> f64 {
    let g = |s: f64| k.eval(s.exp());
    let mut hi = (r / epsilon).ln();
    if let Some(radius) = k.support_radius() {
        if r >= radius {
            return 0.0;
        }
        hi = hi.min(radius.ln());
    }
    quad::integrate(&g, r.ln(), hi, tol)
}

/// Outcome of checking `K(r) = k_ε(r) + K(r/ε)` on a set of lags.
#[derive(Debug, Clone, Serialize)]
pub struct TelescopeReport {
    pub epsilon: f64,
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn telescope_check(k: &SeedKernel, epsilon: f64, probes: &[f64], tol: f64) -> Result<TelescopeReport> {
    check_epsilon(epsilon)?;
    let mut residuals = Vec::with_capacity(probes.len());
    let mut max_residual: f64 = 0.0;
    for &r in probes {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("telescope probe must be > 0, got {r}")));
        }
        let big = integrate_log(k, r, tol)?;
        let zoomed = integrate_log(k, r / epsilon, tol)?;
        let res = (big - epsilon_kernel(k, epsilon, r, tol) - zoomed).abs();
        max_residual = max_residual.max(res);
        residuals.push((r, res));
    }
    Ok(TelescopeReport { epsilon, residuals, max_residual, tolerance: tol, pass: max_residual <= tol })
}

/// Partial sum `Σ_{n=0}^{N} k_ε(r/ε^n)`; tends to `K(r)` as `N → ∞`.
pub fn series_k(k: &SeedKernel, epsilon: f64, r: f64, depth: u32) -> Result<f64> {
    check_epsilon(epsilon)?;
    let mut sum = 0.0;
    let mut lag = r.abs();
    for _ in 0..=depth {
        sum += epsilon_kernel(k, epsilon, lag, DEFAULT_TOL);
        lag /= epsilon;
    }
    Ok(sum)
}

/// Structure exponent `ξ(q) = (1 + k0/2) q − (k0/2) q²`.
pub fn structure_exponent(k0: f64, q: f64) -> f64 {
    (1.0 + 0.5 * k0) * q - 0.5 * k0 * q * q
}

/// Largest `δ` with `k0 ≤ 2/(1+δ)`: `2/k0 − 1`, infinite for `k0 = 0`.
pub fn moment_order_bound(k0: f64) -> Result<f64> {
    if k0 >= 2.0 {
        return Err(Error::Degenerate { k0 });
    }
    if k0 <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 / k0 - 1.0)
}

/// Least-squares slope of `K(r)` against `ln(1/r)`; approaches `k(0)`.
pub fn asymptote_check(k: &SeedKernel, r_grid: &[f64]) -> Result<f64> {
    if r_grid.len() < 2 || r_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("asymptote grid needs at least two positive lags".into()));
    }
    let xs: Vec<f64> = r_grid.iter().map(|r| (1.0 / r).ln()).collect();
    let ys = r_grid.iter().map(|&r| integrate_log(k, r, DEFAULT_TOL)).collect::<Result<Vec<_>>>()?;
    Ok(crate::stats::ols(&xs, &ys).slope)
}

/// Log-spaced lags from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    NotGood,
    Degenerate,
}

/// Result of the log-integrability goodness test.
#[derive(Debug, Clone, Serialize)]
pub struct GoodnessReport {
    /// `(x, θ(x))` with `θ(x) = sup_{|u|≥x} |k(u)|/u`, non-increasing.
    pub theta_profile: Vec<(f64, f64)>,
    /// `∫_1^∞ ln(r) θ(r) dr`, or `None` when the decade test flags divergence.
    pub log_integral: Option<f64>,
    pub nondegenerate: bool,
    pub max_moment_order: f64,
    pub verdict: Verdict,
}

/// Probes per decade for the θ envelope.
pub const PROBES_PER_DECADE: usize = 64;

/// Checks `∫_1^∞ ln(r) sup_{|u|≥r} |k(u)|/u dr < ∞` together with `k(0) < 2`.
///
/// `probe_budget` is the total number of envelope probes; they cover
/// `probe_budget / 64` decades above 1.
pub fn goodness_check(k: &SeedKernel, probe_budget: usize) -> GoodnessReport {
    let decades = (probe_budget / PROBES_PER_DECADE).max(DIVERGENCE_WINDOW + 1);
    let count = decades * PROBES_PER_DECADE + 1;
    let xs: Vec<f64> = (0..count).map(|i| 10f64.powf(i as f64 / PROBES_PER_DECADE as f64)).collect();
    let raw: Vec<f64> = xs.iter().map(|&x| k.eval(x).abs() / x).collect();
    let theta: Vec<f64> = if k.monotone_tail() {
        raw
    } else {
        let mut out = raw;
        for i in (0..count - 1).rev() {
            out[i] = out[i].max(out[i + 1]);
        }
        out
    };

    // decade contributions of ln(r) θ(r), trapezoid in ln r
    let f: Vec<f64> = xs.iter().zip(&theta).map(|(&x, &t)| x.ln() * t * x).collect();
    let dl = std::f64::consts::LN_10 / PROBES_PER_DECADE as f64;
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    let mut stalled = 0usize;
    let mut divergent = false;
    for d in 0..decades {
        let base = d * PROBES_PER_DECADE;
        let piece: f64 = (0..PROBES_PER_DECADE).map(|i| 0.5 * (f[base + i] + f[base + i + 1]) * dl).sum();
        total += piece;
        if let Some(p) = prev {
            if piece > quad::SHRINK_RATIO * p && piece > 0.0 {
                stalled += 1;
                if stalled >= quad::DIVERGENCE_DECADES {
                    divergent = true;
                    break;
                }
            } else {
                stalled = 0;
            }
        }
        prev = Some(piece);
    }

    let k0 = k.k0();
    let nondegenerate = k0 < 2.0;
    let max_moment_order = moment_order_bound(k0).unwrap_or(0.0);
    let verdict = if !nondegenerate {
        Verdict::Degenerate
    } else if divergent {
        Verdict::NotGood
    } else {
        Verdict::Good
    };
    GoodnessReport {
        theta_profile: xs.into_iter().zip(theta).collect(),
        log_integral: (!divergent).then_some(total),
        nondegenerate,
        max_moment_order,
        verdict,
    }
}

const DIVERGENCE_WINDOW: usize = quad::DIVERGENCE_DECADES;

/// Default probe budget: 16 decades.
pub const DEFAULT_PROBE_BUDGET: usize = 16 * PROBES_PER_DECADE;
