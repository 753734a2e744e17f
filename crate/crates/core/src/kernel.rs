//! The logarithmic index-function family.
//!
//! The convex index function is defined through its second derivative
//!
//! ```text
//! B''(x) = x^beta * phi(x, gamma),   phi(x, gamma) = log(1 + gamma/x) / gamma,
//! ```
//!
//! with `0 < beta <= 1`, `0 < gamma <= 1`. Everything else is recovered by
//! integration from 0:
//!
//! * `B'(x)  = ∫_0^x  B''(s) ds`
//! * `B(x)   = ∫_0^x (x - s) B''(s) ds`   (Fubini reduction of the nested form)
//! * `B*(x)  = x B'(x) - B(x) = ∫_0^x s B''(s) ds`   (the conjugate term
//!   `B'(f) f - B(f)` appearing in population objectives)
//!
//! The integrand has an integrable `s^beta log` singularity at 0, handled by
//! geometric panel refinement toward the endpoint. Both integrals reduce by
//! parts to `I_c(x) = ∫_0^x s^c/(s+gamma) ds` (`c = beta`, `beta+1`), for which
//! an optional per-pair cache stores piecewise-Chebyshev interpolants of the
//! analytic factor `h_c(t) = I_c(t)/t^{c+1}`; the cache reproduces the direct
//! quadrature to ~1e-12 and exists purely to make data-term evaluations cheap
//! inside fitting loops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gk15, integrate_singular_lower, QuadratureSpec};

/// The `(beta, gamma)` pair indexing the divergence family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPair {
    beta: f64,
    gamma: f64,
}

impl TuningPair {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1], got {beta}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        Ok(Self { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// The nonnegative power-divergence tuning parameter; 0 is the likelihood limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpdAlpha(f64);

impl DpdAlpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be nonnegative, got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_mle(&self) -> bool {
        self.0 == 0.0
    }
}

/// `phi(x, gamma) = log(1 + gamma/x)/gamma`. Positive for `x > 0`, and
/// `x * phi(x, gamma) < 1` for all `gamma > 0` with limit 1 as `gamma -> 0+`.
pub fn phi(x: f64, gamma: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("phi requires x > 0, got {x}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(phi_raw(x, gamma))
}

#[inline]
pub(crate) fn phi_raw(x: f64, gamma: f64) -> f64 {
    let r = gamma / x;
    if r.is_finite() {
        r.ln_1p() / gamma
    } else {
        // x so small that gamma/x overflows: log(1 + g/x) ~ log g - log x
        (gamma.ln() - x.ln()) / gamma
    }
}

/// x-derivative of `phi`: `phi'(x, gamma) = -1 / (x (x + gamma))`.
#[inline]
pub(crate) fn phi_prime_raw(x: f64, gamma: f64) -> f64 {
    -1.0 / (x * (x + gamma))
}

#[derive(Debug, Clone)]
struct ChebPanel {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl ChebPanel {
    fn eval(&self, t: f64) -> f64 {
        // Clenshaw recurrence on [-1, 1]
        let u = (2.0 * t - (self.lo + self.hi)) / (self.hi - self.lo);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().rev() {
            let b0 = 2.0 * u * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        b1 - u * b2
    }
}

#[derive(Debug, Clone)]
struct FracIntCache {
    c: f64,
    gamma: f64,
    t_max: f64,
    series_cut: f64,
    panels: Vec<ChebPanel>, // dyadic, panels[j] covers [t_max 2^{-j-1}, t_max 2^{-j}]
}

const CHEB_N: usize = 24;

impl FracIntCache {
    fn build(c: f64, gamma: f64, t_max: f64, q: &QuadratureSpec) -> Self {
        let series_cut = 0.5 * gamma;
        let mut panels = Vec::new();
        let mut hi = t_max;
        while hi > series_cut && panels.len() < 1100 {
            let lo = 0.5 * hi;
            let mut values = [0.0f64; CHEB_N];
            for (k, v) in values.iter_mut().enumerate() {
                // Chebyshev points of the second kind on [lo, hi]
                let u = (std::f64::consts::PI * k as f64 / (CHEB_N - 1) as f64).cos();
                let t = 0.5 * ((hi - lo) * u + (hi + lo));
                *v = frac_integral_direct(c, gamma, t, q) / t.powf(c + 1.0);
            }
            // Chebyshev coefficients via the discrete cosine transform on
            // second-kind points (Curtis-Clenshaw weights).
            let n = CHEB_N - 1;
            let mut coeffs = vec![0.0f64; CHEB_N];
            for (j, cf) in coeffs.iter_mut().enumerate() {
                let mut s = 0.5 * (values[0] + if j % 2 == 0 { values[n] } else { -values[n] });
                for (k, &v) in values.iter().enumerate().take(n).skip(1) {
                    s += v * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
                }
                *cf = 2.0 * s / n as f64;
            }
            coeffs[0] *= 0.5;
            panels.push(ChebPanel { lo, hi, coeffs });
            hi = lo;
        }
        Self {
            c,
            gamma,
            t_max,
            series_cut,
            panels,
        }
    }

    fn eval(&self, t: f64, q: &QuadratureSpec) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t <= self.series_cut {
            return frac_integral_series(self.c, self.gamma, t);
        }
        if t > self.t_max {
            return frac_integral_direct(self.c, self.gamma, t, q);
        }
        // panel index: t in [t_max 2^{-j-1}, t_max 2^{-j}]
        let j = (self.t_max / t).log2().floor() as usize;
        let j = j.min(self.panels.len() - 1);
        let p = &self.panels[j];
        // guard against boundary rounding
        let p = if t > p.hi && j > 0 {
            &self.panels[j - 1]
        } else if t < p.lo && j + 1 < self.panels.len() {
            &self.panels[j + 1]
        } else {
            p
        };
        p.eval(t) * t.powf(self.c + 1.0)
    }
}

/// `I_c(t) = ∫_0^t s^c/(s+gamma) ds` by geometric-panel quadrature.
fn frac_integral_direct(c: f64, gamma: f64, t: f64, q: &QuadratureSpec) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let series_cut = 0.5 * gamma;
    if t <= series_cut {
        return frac_integral_series(c, gamma, t);
    }
    let mut acc = frac_integral_series(c, gamma, series_cut);
    let mut hi = t;
    let mut stack: Vec<f64> = Vec::new();
    while hi > series_cut {
        let lo = (0.5 * hi).max(series_cut);
        stack.push(hi);
        hi = lo;
    }
    let mut lo = series_cut;
    for &hi in stack.iter().rev() {
        let (v, _) = gk15(&|s: f64| s.powf(c) / (s + gamma), lo, hi);
        acc += v;
        lo = hi;
    }
    let _ = q;
    acc
}

/// Convergent series for `I_c(t)`, valid for `t < gamma`:
/// `I_c(t) = (t^{c+1}/gamma) * sum_k (-t/gamma)^k / (c+k+1)`.
fn frac_integral_series(c: f64, gamma: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let r = -t / gamma;
    let mut term = 1.0;
    let mut sum = 1.0 / (c + 1.0);
    for k in 1..200 {
        term *= r;
        let add = term / (c + k as f64 + 1.0);
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    t.powf(c + 1.0) * sum / gamma
}

/// Evaluator for one `(beta, gamma)` pair: `B''`, `B'`, `B`, and the conjugate
/// term, with an optional acceleration cache.
#[derive(Debug, Clone)]
pub struct LogPhiKernel {
    t: TuningPair,
    q: QuadratureSpec,
    cache: Option<(FracIntCache, FracIntCache)>,
}

impl LogPhiKernel {
    pub fn new(t: TuningPair) -> Self {
        Self {
            t,
            q: QuadratureSpec::default(),
            cache: None,
        }
    }

    pub fn with_spec(t: TuningPair, q: QuadratureSpec) -> Self {
        Self { t, q, cache: None }
    }

    /// Build the Chebyshev cache covering density values up to `t_max`.
    /// Values above `t_max` silently fall back to direct quadrature.
    pub fn with_cache(t: TuningPair, t_max: f64, q: QuadratureSpec) -> Self {
        let (beta, gamma) = (t.beta(), t.gamma());
        let t_max = t_max.max(gamma);
        let c1 = FracIntCache::build(beta, gamma, t_max, &q);
        let c2 = FracIntCache::build(beta + 1.0, gamma, t_max, &q);
        Self {
            t,
            q,
            cache: Some((c1, c2)),
        }
    }

    pub fn tuning(&self) -> TuningPair {
        self.t
    }

    pub fn phi(&self, x: f64) -> f64 {
        phi_raw(x, self.t.gamma())
    }

    /// `B''(x) = x^beta phi(x, gamma)`; requires `x > 0`.
    pub fn b_second(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0);
        x.powf(self.t.beta()) * phi_raw(x, self.t.gamma())
    }

    fn i_frac(&self, which: usize, t: f64) -> f64 {
        match &self.cache {
            Some((c1, c2)) => {
                let c = if which == 0 { c1 } else { c2 };
                c.eval(t, &self.q)
            }
            None => {
                let c = if which == 0 {
                    self.t.beta()
                } else {
                    self.t.beta() + 1.0
                };
                frac_integral_direct(c, self.t.gamma(), t, &self.q)
            }
        }
    }

    /// `B'(x) = ∫_0^x s^beta phi(s, gamma) ds`; `B'(0) = 0`.
    pub fn b_prime(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (b, g) = (self.t.beta(), self.t.gamma());
        let head = x.powf(b + 1.0) * phi_raw(x, g);
        (head + self.i_frac(0, x)) / (b + 1.0)
    }

    /// Conjugate term `B*(x) = x B'(x) - B(x) = ∫_0^x s B''(s) ds`.
    pub fn b_conjugate(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (b, g) = (self.t.beta(), self.t.gamma());
        let head = x.powf(b + 2.0) * phi_raw(x, g);
        (head + self.i_frac(1, x)) / (b + 2.0)
    }

    /// `B(x) = ∫_0^x (x-s) B''(s) ds`; convex, `B(0) = 0`.
    pub fn b_value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        x * self.b_prime(x) - self.b_conjugate(x)
    }

    /// Pointwise Bregman integrand `d(g, f) = B(g) - B(f) - (g - f) B'(f)`,
    /// with the `f = 0` boundary handled by its limit `B(g)`.
    pub fn pointwise(&self, g: f64, f: f64) -> f64 {
        debug_assert!(g >= 0.0 && f >= 0.0);
        if f <= 0.0 {
            return self.b_value(g);
        }
        self.b_value(g) - self.b_value(f) - (g - f) * self.b_prime(f)
    }
}

/// Spec-level operation: `B'(x)` under explicit tolerances, computed directly
/// from the singular integrand (no by-parts, no cache). This is the reference
/// path; `LogPhiKernel` must agree with it.
pub fn b_prime(x: f64, t: TuningPair, q: &QuadratureSpec) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("b_prime requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    q.validate()?;
    let (beta, gamma) = (t.beta(), t.gamma());
    integrate_singular_lower(|s| s.powf(beta) * phi_raw(s, gamma), x, q)
}

/// Spec-level operation: `B(x) = ∫_0^x (x-s) s^beta phi(s, gamma) ds`.
pub fn b_value(x: f64, t: TuningPair, q: &QuadratureSpec) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("b_value requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    q.validate()?;
    let (beta, gamma) = (t.beta(), t.gamma());
    integrate_singular_lower(|s| (x - s) * s.powf(beta) * phi_raw(s, gamma), x, q)
}

/// Spec-level operation: `B''(x)`; domain error on `x <= 0`.
pub fn b_second(x: f64, t: TuningPair) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("b_second requires x > 0, got {x}")));
    }
    Ok(x.powf(t.beta()) * phi_raw(x, t.gamma()))
}
