//! Divergences between densities: the logarithmic-family Bregman divergence,
//! the density power divergence, and the Kullback-Leibler limit.

use crate::error::{Error, Result};
use crate::kernel::{DpdAlpha, LogPhiKernel, TuningPair};
use crate::models::{MixtureSpec, ParametricModel, Support};
use crate::quad::{integrate, QuadratureSpec};

/// A nonnegative integrand with a finite evaluation window; the common face of
/// model densities at a fixed parameter, mixtures, and ad-hoc closures.
pub trait Density {
    fn eval(&self, x: f64) -> f64;
    fn window(&self) -> (f64, f64);
}

/// A model frozen at a parameter point.
pub struct ModelDensity<'a> {
    pub model: &'a dyn ParametricModel,
    pub theta: &'a [f64],
}

impl Density for ModelDensity<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.model.density(self.theta, x)
    }
    fn window(&self) -> (f64, f64) {
        self.model.truncation(self.theta)
    }
}

impl Density for MixtureSpec {
    fn eval(&self, x: f64) -> f64 {
        self.density(x)
    }
    fn window(&self) -> (f64, f64) {
        MixtureSpec::window(self)
    }
}

/// Closure-backed density with an explicit window.
pub struct FnDensity<F: Fn(f64) -> f64> {
    pub f: F,
    pub window: (f64, f64),
}

impl<F: Fn(f64) -> f64> Density for FnDensity<F> {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn window(&self) -> (f64, f64) {
        self.window
    }
}

fn hull(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.min(b.0), a.1.max(b.1))
}

/// Pointwise Bregman integrand `d(g, f) = B(g) - B(f) - (g - f) B'(f)`;
/// `d(g, 0)` is the limit `B(g)`.
pub fn bregman_pointwise(g: f64, f: f64, t: TuningPair, q: &QuadratureSpec) -> Result<f64> {
    if !(g >= 0.0) || !(f >= 0.0) {
        return Err(Error::Domain(format!(
            "bregman_pointwise requires nonnegative arguments, got ({g}, {f})"
        )));
    }
    let k = LogPhiKernel::with_spec(t, q.clone());
    Ok(k.pointwise(g, f))
}

/// Integrated divergence `∫ d(g(x), f(x)) dx` over the (possibly truncated)
/// common window. Nonnegative; zero iff the densities agree a.e. on the window
/// up to quadrature tolerance.
pub fn divergence(
    g: &dyn Density,
    f: &dyn Density,
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<f64> {
    q.validate()?;
    let (lo, hi) = q.window(hull(g.window(), f.window()));
    let gmax = sup_on_grid(g, lo, hi);
    let fmax = sup_on_grid(f, lo, hi);
    let k = LogPhiKernel::with_cache(t, 1.5 * gmax.max(fmax), q.clone());
    integrate(|x| k.pointwise(g.eval(x), f.eval(x)), lo, hi, q)
}

fn sup_on_grid(d: &dyn Density, lo: f64, hi: f64) -> f64 {
    let mut m = 0.0f64;
    for i in 0..=256 {
        let x = lo + (hi - lo) * i as f64 / 256.0;
        m = m.max(d.eval(x));
    }
    m
}

/// Divergence between finite-support pmfs (exact sum over the atom list).
pub fn discrete_divergence(
    atoms: &[f64],
    g_pmf: impl Fn(f64) -> f64,
    f_pmf: impl Fn(f64) -> f64,
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<f64> {
    let k = LogPhiKernel::with_spec(t, q.clone());
    let mut acc = 0.0;
    for &x in atoms {
        let (g, f) = (g_pmf(x), f_pmf(x));
        if !(g >= 0.0) || !(f >= 0.0) {
            return Err(Error::Domain("pmf values must be nonnegative".into()));
        }
        acc += k.pointwise(g, f);
    }
    Ok(acc)
}

/// Density power divergence of order `alpha > 0` (Eq. form
/// `∫ f^{1+a} - (1 + 1/a) g f^a + (1/a) g^{1+a}`).
pub fn dpd_divergence(
    g: &dyn Density,
    f: &dyn Density,
    a: DpdAlpha,
    q: &QuadratureSpec,
) -> Result<f64> {
    if a.is_mle() {
        return Err(Error::InvalidParameter(
            "alpha must be positive here; use kl_divergence for the alpha = 0 limit".into(),
        ));
    }
    q.validate()?;
    let al = a.value();
    let (lo, hi) = q.window(hull(g.window(), f.window()));
    integrate(
        |x| {
            let (gv, fv) = (g.eval(x), f.eval(x));
            fv.powf(1.0 + al) - (1.0 + 1.0 / al) * gv * fv.powf(al)
                + gv.powf(1.0 + al) / al
        },
        lo,
        hi,
        q,
    )
}

/// Kullback-Leibler divergence `∫ g log(g/f)`, the alpha -> 0 limit of the
/// power divergence.
pub fn kl_divergence(g: &dyn Density, f: &dyn Density, q: &QuadratureSpec) -> Result<f64> {
    q.validate()?;
    let (lo, hi) = q.window(hull(g.window(), f.window()));
    integrate(
        |x| {
            let gv = g.eval(x);
            if gv <= 0.0 {
                0.0
            } else {
                gv * (gv.ln() - f.eval(x).ln())
            }
        },
        lo,
        hi,
        q,
    )
}

/// Divergence between two members of one family, evaluated at two parameter
/// points over the hull of their windows.
pub fn model_divergence(
    model: &dyn ParametricModel,
    theta_g: &[f64],
    theta_f: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<f64> {
    match model.support() {
        Support::Continuous => {
            let g = ModelDensity { model, theta: theta_g };
            let f = ModelDensity { model, theta: theta_f };
            divergence(&g, &f, t, q)
        }
        Support::Finite(atoms) => discrete_divergence(
            &atoms,
            |x| model.density(theta_g, x),
            |x| model.density(theta_f, x),
            t,
            q,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NormalLocationScale;
    use approx::assert_relative_eq;

    fn tp(b: f64, g: f64) -> TuningPair {
        TuningPair::new(b, g).unwrap()
    }

    fn normal(mu: f64, s: f64) -> FnDensity<impl Fn(f64) -> f64> {
        FnDensity {
            f: move |x: f64| {
                let z = (x - mu) / s;
                (-0.5 * z * z).exp() / (s * crate::models::SQRT_2PI)
            },
            window: (mu - 10.0 * s, mu + 10.0 * s),
        }
    }

    #[test]
    fn self_divergence_is_zero() {
        let q = QuadratureSpec::default();
        let g = normal(0.0, 1.0);
        let f = normal(0.0, 1.0);
        let v = divergence(&g, &f, tp(0.4, 0.3), &q).unwrap();
        assert!(v.abs() <= q.abs_tol, "{v}");
        let m = NormalLocationScale;
        let w = model_divergence(&m, &[1.0, 2.0], &[1.0, 2.0], tp(0.7, 0.9), &q).unwrap();
        assert!(w.abs() <= q.abs_tol);
    }

    #[test]
    fn divergence_matches_trapezoid_oracle() {
        // 1e5-point trapezoid over [-10, 11] using the (independently tested)
        // pointwise kernel, replacing the adaptive outer integration
        let q = QuadratureSpec::default();
        let t = tp(0.5, 0.01);
        let g = normal(0.0, 1.0);
        let f = normal(1.0, 1.0);
        let k = LogPhiKernel::with_cache(t, 0.5, q.clone());
        let n = 100_000usize;
        let (a, b) = (-10.0, 11.0);
        let h = (b - a) / n as f64;
        let mut acc = 0.5 * (k.pointwise(g.eval(a), f.eval(a)) + k.pointwise(g.eval(b), f.eval(b)));
        for i in 1..n {
            let x = a + i as f64 * h;
            acc += k.pointwise(g.eval(x), f.eval(x));
        }
        let oracle = acc * h;
        let v = divergence(&g, &f, t, &q).unwrap();
        assert_relative_eq!(v, oracle, epsilon = 1e-6);
        // frozen anchor from the prototype oracle
        assert_relative_eq!(v, 0.149_937_806_7, epsilon = 1e-6);
    }

    #[test]
    fn dpd_matches_fine_grid_oracle_and_kl_limit() {
        let q = QuadratureSpec::default();
        let g = normal(0.0, 1.0);
        let f = normal(1.0, 1.0);
        let v = dpd_divergence(&g, &f, DpdAlpha::new(0.5).unwrap(), &q).unwrap();
        // fine-grid trapezoid oracle
        let n = 100_000usize;
        let (a, b) = (-10.0, 11.0);
        let h = (b - a) / n as f64;
        let integrand = |x: f64| {
            let (gv, fv) = (g.eval(x), f.eval(x));
            fv.powf(1.5) - 3.0 * gv * fv.sqrt() + 2.0 * gv.powf(1.5)
        };
        let mut acc = 0.5 * (integrand(a) + integrand(b));
        for i in 1..n {
            acc += integrand(a + i as f64 * h);
        }
        assert_relative_eq!(v, acc * h, epsilon = 1e-6);
        assert_relative_eq!(v, 0.237_514_834_8, epsilon = 1e-6);
        // identity case
        let z = dpd_divergence(&g, &normal(0.0, 1.0), DpdAlpha::new(0.5).unwrap(), &q).unwrap();
        assert!(z.abs() <= q.abs_tol);
        // alpha -> 0 tends to KL(g, f) = 1/2 for unit-variance normals a mean apart
        let g2 = normal(0.0, 1.0);
        let f2 = normal(0.5, 1.0);
        let kl = kl_divergence(&g2, &f2, &q).unwrap();
        assert_relative_eq!(kl, 0.125, epsilon = 1e-9); // (mu1-mu2)^2 / 2
        for &al in &[1e-3, 1e-4] {
            let d = dpd_divergence(&g2, &f2, DpdAlpha::new(al).unwrap(), &q).unwrap();
            assert_relative_eq!(d, kl, max_relative = 2e-3);
        }
    }

    #[test]
    fn log_family_tends_to_scaled_dpd_as_gamma_vanishes() {
        // B of this family tends to x^{1+b}/(b(1+b)), i.e. 1/(1+b) times the
        // power-divergence index; the value limit therefore carries the factor
        // (1+b), while the estimating equations coincide exactly.
        let q = QuadratureSpec::default();
        let g = normal(0.0, 1.0);
        let f = normal(1.0, 1.0);
        for &b in &[0.3, 0.5, 1.0] {
            let lp = divergence(&g, &f, tp(b, 1e-8), &q).unwrap();
            let dpd = dpd_divergence(&g, &f, DpdAlpha::new(b).unwrap(), &q).unwrap();
            assert_relative_eq!((1.0 + b) * lp, dpd, max_relative = 1e-4);
        }
    }

    #[test]
    fn pointwise_op_contracts() {
        let q = QuadratureSpec::default();
        let t = tp(0.3, 0.05);
        assert!(bregman_pointwise(-0.1, 0.2, t, &q).is_err());
        let d0 = bregman_pointwise(0.7, 0.0, t, &q).unwrap();
        let b = crate::kernel::b_value(0.7, t, &q).unwrap();
        assert_relative_eq!(d0, b, epsilon = 1e-9);
        // Bregman three-point identity check on random pairs: d >= 0
        for i in 0..100 {
            let x = 0.02 * (i as f64 + 1.0);
            let y = 2.0 - 0.015 * i as f64;
            assert!(bregman_pointwise(x, y, t, &q).unwrap() >= -1e-12);
        }
    }
}
