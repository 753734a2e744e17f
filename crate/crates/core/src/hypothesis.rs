//! Divergence-based tests: the simple-null statistic `T = 2n d(f_hat, f_0)`,
//! the two-sample statistic `S`, the score-form test, the divergence-difference
//! test for finite-support models with (possibly composite) constrained
//! estimation, and the Wald-type test. Null calibration for the first four is
//! a seeded Monte Carlo of the weighted chi-square mixture `Σ λ_i Z_i²`.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::divergence::model_divergence;
use crate::error::{Error, Result};
use crate::estimation::{
    estimating_equation_residual, fit_log_phi, FitOptions, PilotEstimate,
};
use crate::kernel::{phi_raw, LogPhiKernel, TuningPair};
use crate::linalg::{nonzero_spectrum, psd_product_eigenvalues, sym_inverse, symmetrize};
use crate::models::{ParametricModel, Support};
use crate::optim::{nelder_mead, newton_on_gradient, OptimOptions};
use crate::quad::QuadratureSpec;
use crate::asymptotics::matrices_at_model;

/// Monte Carlo settings for the weighted chi-square null distribution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChiBarConfig {
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for ChiBarConfig {
    fn default() -> Self {
        Self {
            mc_draws: 1_000_000,
            seed: 0x1f_dd,
        }
    }
}

/// The weights of the `Σ λ_i Z_i²` null law plus its calibration settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiBarSpectrum {
    pub lambdas: Vec<f64>,
    pub mc_draws: usize,
    pub seed: u64,
}

impl ChiBarSpectrum {
    pub fn new(lambdas: Vec<f64>, cfg: ChiBarConfig) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidInput("spectrum must be nonempty".into()));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidInput("spectrum weights must be nonnegative".into()));
        }
        Ok(Self {
            lambdas,
            mc_draws: cfg.mc_draws,
            seed: cfg.seed,
        })
    }

    fn draws(&self) -> Vec<f64> {
        let mut rng = crate::seeds::stream_rng(self.seed, 0);
        let r = self.lambdas.len();
        let mut out = Vec::with_capacity(self.mc_draws);
        for _ in 0..self.mc_draws {
            let mut s = 0.0;
            for j in 0..r {
                let z: f64 = rand_distr::Distribution::sample(&StandardNormal, &mut rng);
                s += self.lambdas[j] * z * z;
            }
            out.push(s);
        }
        out
    }

    /// Monte Carlo quantile (order statistic of the seeded draws).
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "probability must lie in (0, 1), got {prob}"
            )));
        }
        let mut d = self.draws();
        let k = ((prob * d.len() as f64).ceil() as usize)
            .clamp(1, d.len())
            - 1;
        let (_, kth, _) = d.select_nth_unstable_by(k, |a, b| {
            a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(*kth)
    }

    /// Upper-tail Monte Carlo probability.
    pub fn p_value(&self, x: f64) -> f64 {
        let d = self.draws();
        d.iter().filter(|&&v| v > x).count() as f64 / d.len() as f64
    }
}

/// Spec-level operation: quantile of `Σ λ_i Z_i²`.
pub fn chibar_quantile(spec: &ChiBarSpectrum, prob: f64) -> Result<f64> {
    spec.quantile(prob)
}

/// A single test outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub lambdas: Vec<f64>,
    pub rank_r: usize,
    pub p_value: f64,
    pub critical_value_95: f64,
    pub reject_at_5pct: bool,
}

impl TestResult {
    fn from_chibar(statistic: f64, lambdas: Vec<f64>, rank_r: usize, cfg: ChiBarConfig) -> Result<Self> {
        let spec = ChiBarSpectrum::new(lambdas.clone(), cfg)?;
        let critical_value_95 = spec.quantile(0.95)?;
        let p_value = spec.p_value(statistic);
        Ok(Self {
            statistic,
            lambdas,
            rank_r,
            p_value,
            critical_value_95,
            reject_at_5pct: statistic > critical_value_95,
        })
    }
}

/// Options shared by the test constructors.
#[derive(Debug, Clone, Default)]
pub struct TestOptions {
    /// Start for the unrestricted fits; defaults to the null parameter.
    pub pilot: Option<PilotEstimate>,
    pub fit: FitOptions,
}

/// `A(θ0) = ∇²_θ d(f_θ, f_θ0) |_{θ0}`, computed through the quadrature
/// identity `A = ∫ u u' f^{2+β} φ(f, γ)` (the first-order terms vanish at the
/// expansion point). `a_matrix_fd` provides the direct numerical Hessian.
pub fn a_matrix(
    model: &dyn ParametricModel,
    theta0: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    Ok(matrices_at_model(model, theta0, t, q)?.j)
}

/// Central-difference Hessian of `θ -> d(f_θ, f_θ0)` at `θ0`; the independent
/// cross-check of `a_matrix`.
pub fn a_matrix_fd(
    model: &dyn ParametricModel,
    theta0: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    let p = model.dim();
    let d = |theta: &[f64]| -> Result<f64> { model_divergence(model, theta, theta0, t, q) };
    let mut h = DMatrix::zeros(p, p);
    let step = |j: usize| 1e-4 * theta0[j].abs().max(1.0);
    for a in 0..p {
        for b in a..p {
            let (ha, hb) = (step(a), step(b));
            let mut th = theta0.to_vec();
            let v = if a == b {
                th[a] = theta0[a] + ha;
                let fp = d(&th)?;
                th[a] = theta0[a] - ha;
                let fm = d(&th)?;
                let f0 = d(theta0)?;
                (fp - 2.0 * f0 + fm) / (ha * ha)
            } else {
                th[a] = theta0[a] + ha;
                th[b] = theta0[b] + hb;
                let fpp = d(&th)?;
                th[b] = theta0[b] - hb;
                let fpm = d(&th)?;
                th[a] = theta0[a] - ha;
                let fmm = d(&th)?;
                th[b] = theta0[b] + hb;
                let fmp = d(&th)?;
                (fpp - fpm - fmp + fmm) / (4.0 * ha * hb)
            };
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    Ok(h)
}

fn null_spectrum(
    model: &dyn ParametricModel,
    theta0: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<(Vec<f64>, usize)> {
    let m = matrices_at_model(model, theta0, t, q)?;
    let a = &m.j; // A(θ0) = J(θ0) at the model
    let ev = psd_product_eigenvalues(a, &m.sigma);
    let (lambdas, rank) = nonzero_spectrum(&ev, 1e-10);
    if lambdas.is_empty() {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    Ok((lambdas, rank))
}

fn default_pilot(theta0: &[f64], opts: &TestOptions) -> PilotEstimate {
    opts.pilot.clone().unwrap_or(PilotEstimate {
        theta_star: theta0.to_vec(),
        method: crate::estimation::PilotMethod::UserSupplied,
    })
}

/// Simple-null divergence test: `T = 2 n d(f_θhat, f_θ0)` with the weighted
/// chi-square null from the nonzero eigenvalues of `A(θ0) Σ(θ0)`.
pub fn simple_null_test(
    data: &[f64],
    model: &dyn ParametricModel,
    theta0: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
    mc: ChiBarConfig,
    opts: &TestOptions,
) -> Result<TestResult> {
    model.check_theta(theta0)?;
    let fit = fit_log_phi(data, model, t, &default_pilot(theta0, opts), q, &opts.fit)?;
    let d = model_divergence(model, &fit.theta_hat, theta0, t, q)?;
    let statistic = 2.0 * data.len() as f64 * d.max(0.0);
    let (lambdas, rank) = null_spectrum(model, theta0, t, q)?;
    TestResult::from_chibar(statistic, lambdas, rank, mc)
}

/// Two-sample divergence test: `S = (2 m n / (m + n)) d(f_θ1hat, f_θ2hat)`,
/// spectrum evaluated at the pooled fit.
pub fn two_sample_test(
    data1: &[f64],
    data2: &[f64],
    model: &dyn ParametricModel,
    t: TuningPair,
    q: &QuadratureSpec,
    mc: ChiBarConfig,
    opts: &TestOptions,
) -> Result<TestResult> {
    if data1.is_empty() || data2.is_empty() {
        return Err(Error::InvalidInput("both samples must be nonempty".into()));
    }
    let pooled: Vec<f64> = data1.iter().chain(data2.iter()).copied().collect();
    let pilot = match &opts.pilot {
        Some(p) => p.clone(),
        None => crate::estimation::pilot_min_l2(&pooled, model, q)?,
    };
    let fit_pooled = fit_log_phi(&pooled, model, t, &pilot, q, &opts.fit)?;
    let fit1 = fit_log_phi(data1, model, t, &pilot, q, &opts.fit)?;
    let fit2 = fit_log_phi(data2, model, t, &pilot, q, &opts.fit)?;
    let d = model_divergence(model, &fit1.theta_hat, &fit2.theta_hat, t, q)?;
    let (m, n) = (data1.len() as f64, data2.len() as f64);
    let statistic = (2.0 * m * n / (m + n)) * d.max(0.0);
    let (lambdas, rank) = null_spectrum(model, &fit_pooled.theta_hat, t, q)?;
    TestResult::from_chibar(statistic, lambdas, rank, mc)
}

/// Score-form test: `n Ū' J⁻¹ A J⁻¹ Ū` with `Ū` the averaged estimating
/// function at `θ0` (identical to the estimating-equation residual).
pub fn score_test(
    data: &[f64],
    model: &dyn ParametricModel,
    theta0: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
    mc: ChiBarConfig,
) -> Result<TestResult> {
    model.check_theta(theta0)?;
    let ubar = estimating_equation_residual(data, model, t, theta0, q)?;
    let m = matrices_at_model(model, theta0, t, q)?;
    let a = &m.j;
    let (j_inv, _) = sym_inverse(&m.j)?;
    let mid = &j_inv * a * &j_inv;
    let statistic = data.len() as f64 * (ubar.transpose() * mid * &ubar)[(0, 0)];
    let (lambdas, rank) = null_spectrum(model, theta0, t, q)?;
    TestResult::from_chibar(statistic.max(0.0), lambdas, rank, mc)
}

/// Null specification for the divergence-difference test.
pub enum ConstrainedNull {
    Simple(Vec<f64>),
    Composite {
        /// map from the reduced parameter xi to theta
        map: Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>,
        xi_init: Vec<f64>,
    },
}

/// Relative frequencies over the model's support atoms.
fn relative_frequencies(atoms: &[f64], counts: &[u64]) -> Result<(Vec<f64>, f64)> {
    if counts.len() != atoms.len() {
        return Err(Error::InvalidInput(format!(
            "expected one count per support atom ({} atoms, {} counts)",
            atoms.len(),
            counts.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidInput("counts must sum to a positive total".into()));
    }
    let freqs = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok((freqs, n as f64))
}

/// Divergence of the empirical pmf from the model over the full support
/// (zero-count cells contribute their finite limit).
fn discrete_divergence_to_model(
    atoms: &[f64],
    freqs: &[f64],
    model: &dyn ParametricModel,
    theta: &[f64],
    kernel: &LogPhiKernel,
) -> f64 {
    atoms
        .iter()
        .zip(freqs.iter())
        .map(|(&x, &nu)| kernel.pointwise(nu, model.density(theta, x)))
        .sum()
}

fn fit_discrete(
    atoms: &[f64],
    freqs: &[f64],
    model: &dyn ParametricModel,
    t: TuningPair,
    init: &[f64],
    q: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let kernel = LogPhiKernel::with_spec(t, q.clone());
    let reparam = crate::estimation::Reparam::for_model(model);
    let (beta, gamma) = (t.beta(), t.gamma());
    let objective = |theta: &[f64]| -> f64 {
        if model.check_theta(theta).is_err() {
            return f64::INFINITY;
        }
        discrete_divergence_to_model(atoms, freqs, model, theta, &kernel)
    };
    // gradient of d: -(sum over atoms of (nu - f) f^{1+b} phi(f) u)
    let grad = |theta: &[f64]| -> DVector<f64> {
        let p = model.dim();
        let mut g = DVector::zeros(p);
        if model.check_theta(theta).is_err() {
            return DVector::from_element(p, f64::NAN);
        }
        for (&x, &nu) in atoms.iter().zip(freqs.iter()) {
            let f = model.density(theta, x);
            if f > 0.0 {
                g -= model.score(theta, x) * ((nu - f) * f.powf(1.0 + beta) * phi_raw(f, gamma));
            }
        }
        g
    };
    let z0 = reparam.to_z(init);
    let obj_z = |z: &DVector<f64>| objective(&reparam.to_theta(z));
    let grad_z = |z: &DVector<f64>| {
        let theta = reparam.to_theta(z);
        let g = grad(&theta);
        let jd = reparam.jacobian_diag(&theta);
        DVector::from_iterator(g.len(), g.iter().zip(jd.iter()).map(|(&gi, &ji)| gi * ji))
    };
    let nm = nelder_mead(&obj_z, &z0, 0.1, &OptimOptions::default());
    let polish = newton_on_gradient(&grad_z, &nm.x, &OptimOptions {
        max_iter: 60,
        grad_tol: 1e-12,
        step_tol: 1e-13,
        ..Default::default()
    });
    Ok(reparam.to_theta(&polish.x))
}

/// Divergence-difference test for finite-support models:
/// `DDT = 2n [d(ν_n, f_θ0hat) − d(ν_n, f_θhat)]`. The null spectrum uses
/// `A(θ0) Σ(θ0)` for a simple null and `A Σ_{B,b}` with
/// `Σ_{B,b} = M K M`, `M = J⁻¹ − ḃ(ḃ' J ḃ)⁻¹ ḃ'` for a composite null
/// (which reduces to `Σ(θ0)` when the restriction pins the whole parameter).
pub fn ddt_test(
    counts: &[u64],
    model: &dyn ParametricModel,
    null: &ConstrainedNull,
    t: TuningPair,
    q: &QuadratureSpec,
    mc: ChiBarConfig,
) -> Result<TestResult> {
    let atoms = match model.support() {
        Support::Finite(a) => a,
        Support::Continuous => {
            return Err(Error::InvalidInput(
                "divergence-difference test requires a finite-support model".into(),
            ))
        }
    };
    let (freqs, n) = relative_frequencies(&atoms, counts)?;
    let kernel = LogPhiKernel::with_spec(t, q.clone());

    // unrestricted fit, started from the constrained parameter
    let theta0_start = match null {
        ConstrainedNull::Simple(th) => th.clone(),
        ConstrainedNull::Composite { map, xi_init } => map(xi_init),
    };
    model.check_theta(&theta0_start)?;
    let theta_hat = fit_discrete(&atoms, &freqs, model, t, &theta0_start, q)?;

    // constrained fit
    let (theta0_hat, spectrum_point, bdot): (Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) = match null
    {
        ConstrainedNull::Simple(th) => (th.clone(), th.clone(), None),
        ConstrainedNull::Composite { map, xi_init } => {
            let k = xi_init.len();
            let objective = |xi: &[f64]| -> f64 {
                let theta = map(xi);
                if model.check_theta(&theta).is_err() {
                    return f64::INFINITY;
                }
                discrete_divergence_to_model(&atoms, &freqs, model, &theta, &kernel)
            };
            let z0 = DVector::from_column_slice(xi_init);
            let nm = nelder_mead(
                &|z: &DVector<f64>| objective(z.as_slice()),
                &z0,
                0.1,
                &OptimOptions::default(),
            );
            let grad_fd = |z: &DVector<f64>| -> DVector<f64> {
                let mut g = DVector::zeros(k);
                for j in 0..k {
                    let h = 1e-6 * z[j].abs().max(1e-2);
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[j] += h;
                    zm[j] -= h;
                    g[j] = (objective(zp.as_slice()) - objective(zm.as_slice())) / (2.0 * h);
                }
                g
            };
            let polish = newton_on_gradient(&grad_fd, &nm.x, &OptimOptions::default());
            let xi_hat = polish.x.as_slice().to_vec();
            let th0 = map(&xi_hat);
            // FD Jacobian of the constraint map at xi_hat
            let p = model.dim();
            let mut bd = DMatrix::zeros(p, k);
            for j in 0..k {
                let h = 1e-6 * xi_hat[j].abs().max(1e-2);
                let mut xp = xi_hat.clone();
                let mut xm = xi_hat.clone();
                xp[j] += h;
                xm[j] -= h;
                let tp_ = map(&xp);
                let tm = map(&xm);
                for r in 0..p {
                    bd[(r, j)] = (tp_[r] - tm[r]) / (2.0 * h);
                }
            }
            if bd.clone().svd(false, false).rank(1e-8) < k {
                return Err(Error::InvalidInput(
                    "constraint map is rank-deficient at the fitted reduced parameter".into(),
                ));
            }
            (th0.clone(), th0, Some(bd))
        }
    };

    let d0 = discrete_divergence_to_model(&atoms, &freqs, model, &theta0_hat, &kernel);
    let d1 = discrete_divergence_to_model(&atoms, &freqs, model, &theta_hat, &kernel);
    let statistic = (2.0 * n * (d0 - d1)).max(0.0);

    let m = matrices_at_model(model, &spectrum_point, t, q)?;
    let a = &m.j;
    let sigma_null = match &bdot {
        None => m.sigma.clone(),
        Some(bd) => {
            let (j_inv, _) = sym_inverse(&m.j)?;
            let inner = bd.transpose() * &m.j * bd;
            let (inner_inv, _) = sym_inverse(&inner)?;
            let mm = &j_inv - bd * inner_inv * bd.transpose();
            symmetrize(&(&mm * &m.k * &mm))
        }
    };
    let ev = psd_product_eigenvalues(a, &sigma_null);
    let (lambdas, rank) = nonzero_spectrum(&ev, 1e-10);
    if lambdas.is_empty() {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    TestResult::from_chibar(statistic, lambdas, rank, mc)
}

/// Restriction system `R(θ) = 0` with an optional analytic Jacobian.
pub struct Restrictions {
    pub r: Box<dyn Fn(&[f64]) -> DVector<f64> + Sync>,
    pub jacobian: Option<Box<dyn Fn(&[f64]) -> DMatrix<f64> + Sync>>,
}

impl Restrictions {
    fn jac(&self, theta: &[f64], r_len: usize) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(theta);
        }
        let p = theta.len();
        let mut d = DMatrix::zeros(r_len, p);
        for c in 0..p {
            let h = 1e-6 * theta[c].abs().max(1e-2);
            let mut tp_ = theta.to_vec();
            let mut tm = theta.to_vec();
            tp_[c] += h;
            tm[c] -= h;
            let col = ((self.r)(&tp_) - (self.r)(&tm)) / (2.0 * h);
            d.set_column(c, &col);
        }
        d
    }
}

/// Wald-type test `W = n R' (D Σ D')⁻¹ R` at the unrestricted fit, with the
/// chi-square(r) null. `Σ` is the variance of `sqrt(n) (θhat − θ)`, hence the
/// factor n.
pub fn wald_test(
    data: &[f64],
    model: &dyn ParametricModel,
    restrictions: &Restrictions,
    t: TuningPair,
    q: &QuadratureSpec,
    opts: &TestOptions,
) -> Result<TestResult> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    let pilot = match &opts.pilot {
        Some(p) => p.clone(),
        None => match model.dim() {
            1 | 2 => crate::estimation::pilot_min_l2(data, model, q)?,
            _ => {
                return Err(Error::InvalidInput(
                    "supply a pilot for models beyond location-scale".into(),
                ))
            }
        },
    };
    let fit = fit_log_phi(data, model, t, &pilot, q, &opts.fit)?;
    let r_vec = (restrictions.r)(&fit.theta_hat);
    let r = r_vec.len();
    if r == 0 || r > model.dim() {
        return Err(Error::InvalidInput(
            "need between 1 and p restrictions".into(),
        ));
    }
    let d = restrictions.jac(&fit.theta_hat, r);
    if d.clone().svd(false, false).rank(1e-10) < r {
        return Err(Error::InvalidInput(
            "restriction Jacobian is rank-deficient at the fit".into(),
        ));
    }
    let m = matrices_at_model(model, &fit.theta_hat, t, q)?;
    let mid = &d * &m.sigma * d.transpose();
    let (mid_inv, _) = sym_inverse(&mid)?;
    let statistic = data.len() as f64 * (r_vec.transpose() * mid_inv * &r_vec)[(0, 0)];
    let chi = ChiSquared::new(r as f64)
        .map_err(|e| Error::InvalidParameter(format!("chi-square setup: {e}")))?;
    let critical_value_95 = chi.inverse_cdf(0.95);
    let p_value = 1.0 - chi.cdf(statistic.max(0.0));
    Ok(TestResult {
        statistic: statistic.max(0.0),
        lambdas: vec![1.0; r],
        rank_r: r,
        p_value,
        critical_value_95,
        reject_at_5pct: statistic > critical_value_95,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Bernoulli, NormalLocation, NormalLocationScale};
    use approx::assert_relative_eq;

    fn tp(b: f64, g: f64) -> TuningPair {
        TuningPair::new(b, g).unwrap()
    }

    fn mc_small() -> ChiBarConfig {
        ChiBarConfig {
            mc_draws: 400_000,
            seed: 7,
        }
    }

    #[test]
    fn chibar_quantiles_match_chi_square() {
        let cfg = ChiBarConfig::default();
        let s1 = ChiBarSpectrum::new(vec![1.0], cfg).unwrap();
        let q95 = s1.quantile(0.95).unwrap();
        assert!((q95 - 3.8415).abs() < 0.02, "{q95}");
        let s3 = ChiBarSpectrum::new(vec![1.0, 1.0, 1.0], cfg).unwrap();
        let q3 = s3.quantile(0.95).unwrap();
        assert!((q3 - 7.815).abs() < 0.03, "{q3}");
        let sc = ChiBarSpectrum::new(vec![0.774], cfg).unwrap();
        let qc = sc.quantile(0.95).unwrap();
        assert!((qc - 2.973).abs() < 0.02, "{qc}");
    }

    #[test]
    fn chibar_scale_coherence() {
        let cfg = ChiBarConfig {
            mc_draws: 100_000,
            seed: 3,
        };
        let base = ChiBarSpectrum::new(vec![1.0], cfg).unwrap();
        let scaled = ChiBarSpectrum::new(vec![2.5], cfg).unwrap();
        // single-weight spectra: exact under the same seed
        assert_eq!(
            scaled.quantile(0.95).unwrap(),
            2.5 * base.quantile(0.95).unwrap()
        );
        // multi-weight spectra: up to floating-point association
        let b2 = ChiBarSpectrum::new(vec![1.0, 0.4], cfg).unwrap();
        let s2 = ChiBarSpectrum::new(vec![3.0, 1.2000000000000002], cfg).unwrap();
        assert_relative_eq!(
            s2.quantile(0.9).unwrap(),
            3.0 * b2.quantile(0.9).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn a_matrix_agrees_with_numerical_hessian() {
        let q = QuadratureSpec::default();
        let t = tp(0.3, 0.05);
        let model = NormalLocation::new(1.0).unwrap();
        let a = a_matrix(&model, &[0.0], t, &q).unwrap();
        let h = a_matrix_fd(&model, &[0.0], t, &q).unwrap();
        assert_relative_eq!(a[(0, 0)], h[(0, 0)], max_relative = 1e-4);
        assert!(a[(0, 0)] > 0.0);
        // frozen anchor for the quadrature identity at this pair
        assert_relative_eq!(a[(0, 0)], 0.418_262_4, max_relative = 1e-4);
        // symmetry on a 2-parameter model
        let m2 = NormalLocationScale;
        let a2 = a_matrix(&m2, &[0.0, 1.0], t, &q).unwrap();
        assert!((a2[(0, 1)] - a2[(1, 0)]).abs() < 1e-8);
        let h2 = a_matrix_fd(&m2, &[0.0, 1.0], t, &q).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_relative_eq!(a2[(r, c)], h2[(r, c)], max_relative = 2e-4, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn simple_null_zero_statistic_at_null_fit() {
        // theta-hat equal to theta0 gives statistic 0 and p-value 1
        let q = QuadratureSpec::default();
        let model = NormalLocation::new(1.0).unwrap();
        // symmetric two-point sample centered at 0 fits mu = 0 exactly
        let data = vec![-0.4, 0.4];
        let r = simple_null_test(
            &data,
            &model,
            &[0.0],
            tp(0.5, 0.5),
            &q,
            mc_small(),
            &TestOptions::default(),
        )
        .unwrap();
        assert!(r.statistic < 1e-8, "{}", r.statistic);
        assert!(r.p_value > 0.99);
        assert!(!r.reject_at_5pct);
        assert_eq!(r.rank_r, 1);
    }

    #[test]
    fn two_sample_identical_data_zero_statistic() {
        let q = QuadratureSpec::default();
        let model = NormalLocationScale;
        let mut rng = crate::seeds::stream_rng(5, 0);
        let data: Vec<f64> = (0..60).map(|_| model.sample(&[0.3, 1.1], &mut rng)).collect();
        let r = two_sample_test(
            &data,
            &data,
            &model,
            tp(0.3, 0.05),
            &q,
            mc_small(),
            &TestOptions::default(),
        )
        .unwrap();
        assert!(r.statistic < 1e-8, "{}", r.statistic);
    }

    #[test]
    fn score_statistic_vanishes_at_the_fit() {
        let q = QuadratureSpec::default();
        let model = NormalLocation::new(1.0).unwrap();
        let mut rng = crate::seeds::stream_rng(6, 0);
        let data: Vec<f64> = (0..50).map(|_| model.sample(&[0.2], &mut rng)).collect();
        let t = tp(0.3, 0.05);
        let fit = fit_log_phi(
            &data,
            &model,
            t,
            &PilotEstimate::user(vec![0.0]).unwrap(),
            &q,
            &FitOptions::default(),
        )
        .unwrap();
        let r = score_test(&data, &model, &fit.theta_hat, t, &q, mc_small()).unwrap();
        assert!(r.statistic < 1e-10, "{}", r.statistic);
    }

    #[test]
    fn ddt_perfect_fit_is_zero_and_matches_simple_t() {
        let q = QuadratureSpec::default();
        let model = Bernoulli;
        // nu exactly equal to f_{theta0}
        let r = ddt_test(
            &[50, 50],
            &model,
            &ConstrainedNull::Simple(vec![0.5]),
            tp(0.3, 0.05),
            &q,
            mc_small(),
        )
        .unwrap();
        assert!(r.statistic < 1e-12);
        assert!(!r.reject_at_5pct);
    }

    #[test]
    fn wald_zero_when_null_holds_exactly() {
        let q = QuadratureSpec::default();
        let model = NormalLocationScale;
        let mut rng = crate::seeds::stream_rng(9, 0);
        let data: Vec<f64> = (0..80).map(|_| model.sample(&[0.0, 1.0], &mut rng)).collect();
        let t = tp(0.3, 0.05);
        let fit = fit_log_phi(
            &data,
            &model,
            t,
            &PilotEstimate::user(vec![0.0, 1.0]).unwrap(),
            &q,
            &FitOptions::default(),
        )
        .unwrap();
        let mu_hat = fit.theta_hat[0];
        let restrictions = Restrictions {
            r: Box::new(move |th: &[f64]| DVector::from_vec(vec![th[0] - mu_hat])),
            jacobian: Some(Box::new(|th: &[f64]| {
                DMatrix::from_row_slice(1, th.len(), &[1.0, 0.0])
            })),
        };
        let r = wald_test(&data, &model, &restrictions, t, &q, &TestOptions::default()).unwrap();
        assert!(r.statistic < 1e-10, "{}", r.statistic);
        assert!((r.p_value - 1.0).abs() < 1e-6);
        assert_eq!(r.rank_r, 1);
    }

    #[test]
    fn statistics_are_nonnegative_on_random_data() {
        let q = QuadratureSpec::default();
        let model = NormalLocation::new(1.0).unwrap();
        let t = tp(0.4, 0.1);
        for seed in 0..5 {
            let mut rng = crate::seeds::stream_rng(100 + seed, 0);
            let data: Vec<f64> = (0..40).map(|_| model.sample(&[0.3], &mut rng)).collect();
            let r = simple_null_test(&data, &model, &[0.0], t, &q, mc_small(), &TestOptions::default())
                .unwrap();
            assert!(r.statistic >= 0.0);
            let s = score_test(&data, &model, &[0.0], t, &q, mc_small()).unwrap();
            assert!(s.statistic >= 0.0);
        }
    }
}
