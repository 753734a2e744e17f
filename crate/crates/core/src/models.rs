//! Parametric model interface and the concrete families used throughout:
//! normal location, normal location-scale, per-observation regression normals,
//! Bernoulli, and finite contamination mixtures.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_distr::StandardNormal;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// How the optimizer should map a coordinate to an unconstrained scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTransform {
    Identity,
    /// strictly positive coordinate, optimized as log
    Log,
    /// coordinate in (0, 1), optimized as logit
    Logit,
}

/// Support descriptor: a continuous interval (possibly the whole line) or a
/// finite ordered set of atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Continuous,
    Finite(Vec<f64>),
}

/// Density / score / sampler interface for a parametric family.
///
/// `density` doubles as the pmf for finite-support families. Integrals over
/// the support use `truncation` for continuous families and the atom list for
/// finite ones.
pub trait ParametricModel: Sync + Send {
    fn dim(&self) -> usize;
    fn check_theta(&self, theta: &[f64]) -> Result<()>;
    fn density(&self, theta: &[f64], x: f64) -> f64;
    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        self.density(theta, x).ln()
    }
    /// Score u(x) = gradient of log density with respect to theta.
    fn score(&self, theta: &[f64], x: f64) -> DVector<f64>;
    /// Jacobian of the score with respect to theta (p x p).
    fn score_jacobian(&self, theta: &[f64], x: f64) -> DMatrix<f64>;
    fn support(&self) -> Support;
    /// Default integration window (mean +/- 10 sd for the normals here).
    fn truncation(&self, theta: &[f64]) -> (f64, f64);
    /// Upper bound for density values, used to size evaluation caches.
    fn density_ceiling(&self, theta: &[f64]) -> f64;
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64;
    fn transforms(&self) -> Vec<ParamTransform> {
        vec![ParamTransform::Identity; self.dim()]
    }
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * SQRT_2PI)
}

/// One-parameter normal location family with fixed scale.
#[derive(Debug, Clone)]
pub struct NormalLocation {
    pub sigma: f64,
}

impl NormalLocation {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }
}

impl ParametricModel for NormalLocation {
    fn dim(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 1 || !theta[0].is_finite() {
            return Err(Error::InvalidParameter("theta must be a finite scalar".into()));
        }
        Ok(())
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        normal_pdf(x, theta[0], self.sigma)
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        let z = (x - theta[0]) / self.sigma;
        -0.5 * z * z - (self.sigma * SQRT_2PI).ln()
    }

    fn score(&self, theta: &[f64], x: f64) -> DVector<f64> {
        DVector::from_vec(vec![(x - theta[0]) / (self.sigma * self.sigma)])
    }

    fn score_jacobian(&self, _theta: &[f64], _x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -1.0 / (self.sigma * self.sigma))
    }

    fn support(&self) -> Support {
        Support::Continuous
    }

    fn truncation(&self, theta: &[f64]) -> (f64, f64) {
        (theta[0] - 10.0 * self.sigma, theta[0] + 10.0 * self.sigma)
    }

    fn density_ceiling(&self, _theta: &[f64]) -> f64 {
        1.0 / (self.sigma * SQRT_2PI)
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta[0] + self.sigma * z
    }
}

/// Two-parameter normal family, theta = (mu, sigma).
#[derive(Debug, Clone, Default)]
pub struct NormalLocationScale;

impl ParametricModel for NormalLocationScale {
    fn dim(&self) -> usize {
        2
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 2 || !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("theta must be finite (mu, sigma)".into()));
        }
        if !(theta[1] > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {}", theta[1])));
        }
        Ok(())
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        normal_pdf(x, theta[0], theta[1])
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        let z = (x - theta[0]) / theta[1];
        -0.5 * z * z - (theta[1] * SQRT_2PI).ln()
    }

    fn score(&self, theta: &[f64], x: f64) -> DVector<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let r = x - mu;
        DVector::from_vec(vec![r / (s * s), r * r / (s * s * s) - 1.0 / s])
    }

    fn score_jacobian(&self, theta: &[f64], x: f64) -> DMatrix<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let r = x - mu;
        let s2 = s * s;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -1.0 / s2,
                -2.0 * r / (s2 * s),
                -2.0 * r / (s2 * s),
                -3.0 * r * r / (s2 * s2) + 1.0 / s2,
            ],
        )
    }

    fn support(&self) -> Support {
        Support::Continuous
    }

    fn truncation(&self, theta: &[f64]) -> (f64, f64) {
        (theta[0] - 10.0 * theta[1], theta[0] + 10.0 * theta[1])
    }

    fn density_ceiling(&self, theta: &[f64]) -> f64 {
        1.0 / (theta[1] * SQRT_2PI)
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta[0] + theta[1] * z
    }

    fn transforms(&self) -> Vec<ParamTransform> {
        vec![ParamTransform::Identity, ParamTransform::Log]
    }
}

/// Per-observation regression normal: y ~ N(x_i' eta, sigma^2) with
/// theta = (eta_1..eta_p, sigma).
#[derive(Debug, Clone)]
pub struct RegressionObservation {
    pub covariates: DVector<f64>,
}

impl RegressionObservation {
    pub fn new(covariates: DVector<f64>) -> Result<Self> {
        if !covariates.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("covariates must be finite".into()));
        }
        Ok(Self { covariates })
    }

    fn mean(&self, theta: &[f64]) -> f64 {
        self.covariates
            .iter()
            .zip(theta.iter())
            .map(|(x, e)| x * e)
            .sum()
    }

    fn sigma(&self, theta: &[f64]) -> f64 {
        theta[self.covariates.len()]
    }
}

impl ParametricModel for RegressionObservation {
    fn dim(&self) -> usize {
        self.covariates.len() + 1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() || !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("theta must be finite (eta.., sigma)".into()));
        }
        if !(self.sigma(theta) > 0.0) {
            return Err(Error::Domain("sigma must be positive".into()));
        }
        Ok(())
    }

    fn density(&self, theta: &[f64], y: f64) -> f64 {
        normal_pdf(y, self.mean(theta), self.sigma(theta))
    }

    fn score(&self, theta: &[f64], y: f64) -> DVector<f64> {
        let p = self.covariates.len();
        let s = self.sigma(theta);
        let r = y - self.mean(theta);
        let mut u = DVector::zeros(p + 1);
        for j in 0..p {
            u[j] = r * self.covariates[j] / (s * s);
        }
        u[p] = r * r / (s * s * s) - 1.0 / s;
        u
    }

    fn score_jacobian(&self, theta: &[f64], y: f64) -> DMatrix<f64> {
        let p = self.covariates.len();
        let s = self.sigma(theta);
        let s2 = s * s;
        let r = y - self.mean(theta);
        let mut j = DMatrix::zeros(p + 1, p + 1);
        for a in 0..p {
            for b in 0..p {
                j[(a, b)] = -self.covariates[a] * self.covariates[b] / s2;
            }
            j[(a, p)] = -2.0 * r * self.covariates[a] / (s2 * s);
            j[(p, a)] = j[(a, p)];
        }
        j[(p, p)] = -3.0 * r * r / (s2 * s2) + 1.0 / s2;
        j
    }

    fn support(&self) -> Support {
        Support::Continuous
    }

    fn truncation(&self, theta: &[f64]) -> (f64, f64) {
        let m = self.mean(theta);
        let s = self.sigma(theta);
        (m - 10.0 * s, m + 10.0 * s)
    }

    fn density_ceiling(&self, theta: &[f64]) -> f64 {
        1.0 / (self.sigma(theta) * SQRT_2PI)
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean(theta) + self.sigma(theta) * z
    }

    fn transforms(&self) -> Vec<ParamTransform> {
        let mut t = vec![ParamTransform::Identity; self.covariates.len()];
        t.push(ParamTransform::Log);
        t
    }
}

/// Bernoulli family on {0, 1}, theta = (p,).
#[derive(Debug, Clone, Default)]
pub struct Bernoulli;

impl ParametricModel for Bernoulli {
    fn dim(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 1 {
            return Err(Error::InvalidParameter("theta must be (p,)".into()));
        }
        let p = theta[0];
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
        }
        Ok(())
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        let p = theta[0];
        if x == 1.0 {
            p
        } else if x == 0.0 {
            1.0 - p
        } else {
            0.0
        }
    }

    fn score(&self, theta: &[f64], x: f64) -> DVector<f64> {
        let p = theta[0];
        DVector::from_vec(vec![(x - p) / (p * (1.0 - p))])
    }

    fn score_jacobian(&self, theta: &[f64], x: f64) -> DMatrix<f64> {
        // d/dp [(x-p)/(p(1-p))] = [-p(1-p) - (x-p)(1-2p)] / (p(1-p))^2
        let p = theta[0];
        let v = p * (1.0 - p);
        DMatrix::from_element(1, 1, (-v - (x - p) * (1.0 - 2.0 * p)) / (v * v))
    }

    fn support(&self) -> Support {
        Support::Finite(vec![0.0, 1.0])
    }

    fn truncation(&self, _theta: &[f64]) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn density_ceiling(&self, _theta: &[f64]) -> f64 {
        1.0
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        if rng.gen::<f64>() < theta[0] {
            1.0
        } else {
            0.0
        }
    }

    fn transforms(&self) -> Vec<ParamTransform> {
        vec![ParamTransform::Logit]
    }
}

/// A weighted mixture of parametric models at fixed parameter values; used as
/// the contaminated data-generating density in the simulation studies.
#[derive(Clone)]
pub struct MixtureSpec {
    components: Vec<(f64, Arc<dyn ParametricModel>, Vec<f64>)>,
}

impl MixtureSpec {
    pub fn new(components: Vec<(f64, Arc<dyn ParametricModel>, Vec<f64>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        let mut total = 0.0;
        for (w, m, th) in &components {
            if !(*w >= 0.0) {
                return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
            }
            m.check_theta(th)?;
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must sum to 1 (got {total})"
            )));
        }
        Ok(Self { components })
    }

    /// Convenience constructor for the two-normal contamination designs.
    pub fn two_normals(eps: f64, clean: (f64, f64), contam: (f64, f64)) -> Result<Self> {
        let n: Arc<dyn ParametricModel> = Arc::new(NormalLocationScale);
        Self::new(vec![
            (1.0 - eps, n.clone(), vec![clean.0, clean.1]),
            (eps, n, vec![contam.0, contam.1]),
        ])
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|(w, m, th)| w * m.density(th, x))
            .sum()
    }

    pub fn window(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, m, th) in &self.components {
            let (a, b) = m.truncation(th);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    pub fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, m, th) in &self.components {
            acc += w;
            if u < acc {
                return m.sample(th, rng);
            }
        }
        let (_, m, th) = self.components.last().expect("non-empty");
        m.sample(th, rng)
    }
}

/// n i.i.d. draws from the mixture; deterministic given the seed.
pub fn mixture_sampler(spec: &MixtureSpec, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = crate::seeds::stream_rng(seed, 0);
    (0..n).map(|_| spec.sample_one(&mut rng)).collect()
}
