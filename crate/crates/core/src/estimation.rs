//! Minimum-divergence estimation: the log-family minimum distance estimator,
//! the minimum power-divergence estimator (maximum likelihood at alpha = 0),
//! the non-homogeneous regression variant, and the pilot estimators.
//!
//! Estimation minimizes the empirical objective rather than root-finding on
//! the estimating equation: the equation can have several roots, and descent
//! from a robust pilot selects the intended one. The analytic gradient of the
//! objective is minus the estimating-equation residual, which is what the
//! polish stages consume.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{phi_raw, DpdAlpha, LogPhiKernel, TuningPair};
use crate::models::{ParamTransform, ParametricModel, Support, SQRT_2PI};
use crate::optim::{bfgs, nelder_mead, newton_on_gradient, OptimOptions, OptimResult};
use crate::quad::{integrate, integrate_vec, QuadratureSpec};

/// Which divergence produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tuning {
    LogPhi(TuningPair),
    Dpd(DpdAlpha),
    Mle,
}

/// A fitted parameter with convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    /// Norm of the estimating-equation residual at the estimate.
    pub eq_residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub tuning: Tuning,
    /// Set when a diagnostic restart from the MLE found a lower objective.
    pub basin_warning: bool,
}

/// How a pilot was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PilotMethod {
    MinL2,
    LmsMad,
    UserSupplied,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotEstimate {
    pub theta_star: Vec<f64>,
    pub method: PilotMethod,
}

impl PilotEstimate {
    pub fn user(theta: Vec<f64>) -> Result<Self> {
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("pilot must be finite".into()));
        }
        Ok(Self {
            theta_star: theta,
            method: PilotMethod::UserSupplied,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub optim: OptimOptions,
    /// Residual norm below which the fit counts as converged.
    pub residual_tol: f64,
    /// Run the extra restart-from-MLE diagnostic and set `basin_warning`.
    pub check_mle_restart: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optim: OptimOptions::default(),
            residual_tol: 1e-6,
            check_mle_restart: false,
        }
    }
}

// ---------- reparameterization ----------

pub(crate) struct Reparam {
    transforms: Vec<ParamTransform>,
}

impl Reparam {
    pub(crate) fn for_model(model: &dyn ParametricModel) -> Self {
        Self {
            transforms: model.transforms(),
        }
    }

    pub(crate) fn to_z(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            theta.len(),
            theta.iter().zip(&self.transforms).map(|(&v, t)| match t {
                ParamTransform::Identity => v,
                ParamTransform::Log => v.ln(),
                ParamTransform::Logit => (v / (1.0 - v)).ln(),
            }),
        )
    }

    pub(crate) fn to_theta(&self, z: &DVector<f64>) -> Vec<f64> {
        z.iter()
            .zip(&self.transforms)
            .map(|(&v, t)| match t {
                ParamTransform::Identity => v,
                ParamTransform::Log => v.exp(),
                ParamTransform::Logit => 1.0 / (1.0 + (-v).exp()),
            })
            .collect()
    }

    /// dtheta/dz at theta, the chain-rule factor for gradients.
    pub(crate) fn jacobian_diag(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            theta.len(),
            theta.iter().zip(&self.transforms).map(|(&v, t)| match t {
                ParamTransform::Identity => 1.0,
                ParamTransform::Log => v,
                ParamTransform::Logit => v * (1.0 - v),
            }),
        )
    }
}

// ---------- log-family objective & estimating equation ----------

fn window_of(model: &dyn ParametricModel, theta: &[f64], q: &QuadratureSpec) -> (f64, f64) {
    q.window(model.truncation(theta))
}

/// Population term `∫ [B'(f) f - B(f)] dx` plus the data term
/// `-(1/n) Σ B'(f(X_i))`; the gradient of this objective is minus the Eq.-15
/// style residual.
pub fn empirical_objective_with(
    data: &[f64],
    model: &dyn ParametricModel,
    kernel: &LogPhiKernel,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    model.check_theta(theta)?;
    let pop = match model.support() {
        Support::Continuous => {
            let (lo, hi) = window_of(model, theta, q);
            integrate(|x| kernel.b_conjugate(model.density(theta, x)), lo, hi, q)?
        }
        Support::Finite(atoms) => atoms
            .iter()
            .map(|&x| kernel.b_conjugate(model.density(theta, x)))
            .sum(),
    };
    let dat: f64 = data
        .iter()
        .map(|&x| kernel.b_prime(model.density(theta, x)))
        .sum::<f64>()
        / data.len() as f64;
    Ok(pop - dat)
}

/// Spec-level wrapper building a transient kernel.
pub fn empirical_objective(
    data: &[f64],
    model: &dyn ParametricModel,
    t: TuningPair,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<f64> {
    let kernel = LogPhiKernel::with_spec(t, q.clone());
    empirical_objective_with(data, model, &kernel, theta, q)
}

/// Estimating-equation residual
/// `(1/n) Σ u f^{1+β} φ(f,γ)|X_i - ∫ u f^{2+β} φ(f,γ) dx`;
/// equals minus the gradient of `empirical_objective`.
pub fn estimating_equation_residual(
    data: &[f64],
    model: &dyn ParametricModel,
    t: TuningPair,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    model.check_theta(theta)?;
    let beta = t.beta();
    let gamma = t.gamma();
    let p = model.dim();
    let mut acc = DVector::zeros(p);
    for &x in data {
        let f = model.density(theta, x);
        if f > 0.0 {
            acc += model.score(theta, x) * (f.powf(1.0 + beta) * phi_raw(f, gamma));
        }
    }
    acc /= data.len() as f64;
    let integral = match model.support() {
        Support::Continuous => {
            let (lo, hi) = window_of(model, theta, q);
            integrate_vec(
                |x| {
                    let f = model.density(theta, x);
                    model.score(theta, x) * (f.powf(2.0 + beta) * phi_raw(f, gamma))
                },
                lo,
                hi,
                q,
            )?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(p);
            for &x in &atoms {
                let f = model.density(theta, x);
                s += model.score(theta, x) * (f.powf(2.0 + beta) * phi_raw(f, gamma));
            }
            s
        }
    };
    Ok(acc - integral)
}

// ---------- power-divergence objective & estimating equation ----------

/// DPD empirical objective `∫ f^{1+α} - (1 + 1/α) (1/n) Σ f^α(X_i)`; the
/// likelihood disparity `-(1/n) Σ log f(X_i)` at alpha = 0.
pub fn dpd_objective(
    data: &[f64],
    model: &dyn ParametricModel,
    a: DpdAlpha,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    model.check_theta(theta)?;
    let al = a.value();
    if a.is_mle() {
        let s: f64 = data.iter().map(|&x| model.log_density(theta, x)).sum();
        return Ok(-s / data.len() as f64);
    }
    let pop = match model.support() {
        Support::Continuous => {
            let (lo, hi) = window_of(model, theta, q);
            integrate(|x| model.density(theta, x).powf(1.0 + al), lo, hi, q)?
        }
        Support::Finite(atoms) => atoms
            .iter()
            .map(|&x| model.density(theta, x).powf(1.0 + al))
            .sum(),
    };
    let dat: f64 = data
        .iter()
        .map(|&x| model.density(theta, x).powf(al))
        .sum::<f64>()
        / data.len() as f64;
    Ok(pop - (1.0 + 1.0 / al) * dat)
}

/// DPD estimating-equation residual `(1/n) Σ u f^α|X_i - ∫ u f^{1+α} dx`
/// (the score equation `(1/n) Σ u` at alpha = 0).
pub fn dpd_residual(
    data: &[f64],
    model: &dyn ParametricModel,
    a: DpdAlpha,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    model.check_theta(theta)?;
    let al = a.value();
    let p = model.dim();
    let mut acc = DVector::zeros(p);
    for &x in data {
        let w = if al == 0.0 {
            1.0
        } else {
            model.density(theta, x).powf(al)
        };
        acc += model.score(theta, x) * w;
    }
    acc /= data.len() as f64;
    if a.is_mle() {
        return Ok(acc);
    }
    let integral = match model.support() {
        Support::Continuous => {
            let (lo, hi) = window_of(model, theta, q);
            integrate_vec(
                |x| {
                    let f = model.density(theta, x);
                    model.score(theta, x) * f.powf(1.0 + al)
                },
                lo,
                hi,
                q,
            )?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(p);
            for &x in &atoms {
                let f = model.density(theta, x);
                s += model.score(theta, x) * f.powf(1.0 + al);
            }
            s
        }
    };
    Ok(acc - integral)
}

// ---------- fit driver ----------

struct Problem<'a> {
    objective: Box<dyn Fn(&[f64]) -> f64 + 'a>,
    /// gradient of the objective in theta-space (= minus the residual)
    residual: Box<dyn Fn(&[f64]) -> DVector<f64> + 'a>,
}

fn run_fit(
    problem: &Problem<'_>,
    reparam: &Reparam,
    init: &[f64],
    opts: &FitOptions,
) -> (Vec<f64>, f64, f64, usize, bool) {
    let z0 = reparam.to_z(init);
    let obj_z = |z: &DVector<f64>| -> f64 {
        let theta = reparam.to_theta(z);
        (problem.objective)(&theta)
    };
    let grad_z = |z: &DVector<f64>| -> DVector<f64> {
        let theta = reparam.to_theta(z);
        let r = (problem.residual)(&theta);
        let jd = reparam.jacobian_diag(&theta);
        // grad(obj) = -residual, mapped through dtheta/dz
        DVector::from_iterator(r.len(), r.iter().zip(jd.iter()).map(|(&ri, &ji)| -ri * ji))
    };
    let nm_opts = OptimOptions {
        max_iter: 300,
        step_tol: 1e-9,
        f_tol: 1e-13,
        ..opts.optim.clone()
    };
    let nm = nelder_mead(&obj_z, &z0, 0.1, &nm_opts);
    let mut best: OptimResult = bfgs(&obj_z, &grad_z, &nm.x, &opts.optim);
    let mut iters = nm.iterations + best.iterations;
    // Newton polish to tight stationarity; quadratic convergence pins the
    // solution well below the reporting tolerances and keeps equivariant
    // problems equivariant to near machine precision.
    let polish_opts = OptimOptions {
        max_iter: 40,
        step_tol: 1e-13,
        grad_tol: 1e-12,
        ..opts.optim.clone()
    };
    let polish = newton_on_gradient(&grad_z, &best.x, &polish_opts);
    iters += polish.iterations;
    // accept the polish only if it did not leave the basin
    let new_val = obj_z(&polish.x);
    if new_val <= best.value + 1e-10 {
        best = OptimResult {
            value: new_val,
            converged: best.converged || polish.converged,
            ..polish
        };
    }
    let theta = reparam.to_theta(&best.x);
    let value = (problem.objective)(&theta);
    let rn = (problem.residual)(&theta).norm();
    let step_ok = best.converged;
    (theta, value, rn, iters, step_ok && rn < opts.residual_tol)
}

/// Fit the log-family minimum distance estimator by objective minimization
/// from `init`, then gradient polish; reports the estimating-equation
/// residual norm at the estimate.
pub fn fit_log_phi(
    data: &[f64],
    model: &dyn ParametricModel,
    t: TuningPair,
    init: &PilotEstimate,
    q: &QuadratureSpec,
    opts: &FitOptions,
) -> Result<EstimateResult> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    model.check_theta(&init.theta_star)?;
    let ceiling = model.density_ceiling(&init.theta_star);
    let kernel = LogPhiKernel::with_cache(t, 4.0 * ceiling, q.clone());
    let problem = Problem {
        objective: Box::new(|theta: &[f64]| {
            empirical_objective_with(data, model, &kernel, theta, q).unwrap_or(f64::INFINITY)
        }),
        residual: Box::new(|theta: &[f64]| {
            estimating_equation_residual(data, model, t, theta, q)
                .unwrap_or_else(|_| DVector::from_element(model.dim(), f64::NAN))
        }),
    };
    let reparam = Reparam::for_model(model);
    let (theta, value, rn, iters, converged) = run_fit(&problem, &reparam, &init.theta_star, opts);

    let mut basin_warning = false;
    if opts.check_mle_restart {
        if let Ok(mle) = fit_dpd(
            data,
            model,
            DpdAlpha::new(0.0)?,
            &PilotEstimate::user(init.theta_star.clone())?,
            q,
            &FitOptions {
                check_mle_restart: false,
                ..opts.clone()
            },
        ) {
            let (_, alt_value, _, _, _) = run_fit(&problem, &reparam, &mle.theta_hat, opts);
            if alt_value < value - 1e-10 {
                basin_warning = true;
            }
        }
    }
    Ok(EstimateResult {
        theta_hat: theta,
        objective_value: value,
        eq_residual_norm: rn,
        converged,
        iterations: iters,
        tuning: Tuning::LogPhi(t),
        basin_warning,
    })
}

/// Fit the minimum power-divergence estimator (the MLE at alpha = 0).
pub fn fit_dpd(
    data: &[f64],
    model: &dyn ParametricModel,
    a: DpdAlpha,
    init: &PilotEstimate,
    q: &QuadratureSpec,
    opts: &FitOptions,
) -> Result<EstimateResult> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    model.check_theta(&init.theta_star)?;
    let scale = if a.is_mle() { 1.0 } else { 1.0 + a.value() };
    let problem = Problem {
        objective: Box::new(|theta: &[f64]| {
            dpd_objective(data, model, a, theta, q).unwrap_or(f64::INFINITY)
        }),
        residual: Box::new(|theta: &[f64]| {
            dpd_residual(data, model, a, theta, q)
                .map(|r| r * scale)
                .unwrap_or_else(|_| DVector::from_element(model.dim(), f64::NAN))
        }),
    };
    let reparam = Reparam::for_model(model);
    let (theta, value, rn, iters, converged) = run_fit(&problem, &reparam, &init.theta_star, opts);
    Ok(EstimateResult {
        theta_hat: theta,
        objective_value: value,
        eq_residual_norm: rn / scale,
        converged,
        iterations: iters,
        tuning: if a.is_mle() { Tuning::Mle } else { Tuning::Dpd(a) },
        basin_warning: false,
    })
}

// ---------- non-homogeneous (regression) ----------

/// Fixed-design regression data: responses `y_i ~ N(x_i' eta, sigma^2)`.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub design: DMatrix<f64>,
    pub responses: Vec<f64>,
}

impl RegressionData {
    pub fn new(design: DMatrix<f64>, responses: Vec<f64>) -> Result<Self> {
        let n = design.nrows();
        let p = design.ncols();
        if responses.len() != n {
            return Err(Error::InvalidInput(format!(
                "design has {n} rows but {} responses",
                responses.len()
            )));
        }
        if n <= p {
            return Err(Error::InvalidInput(format!(
                "need more observations than regression parameters (n = {n}, p = {p})"
            )));
        }
        if !design.iter().all(|v| v.is_finite()) || !responses.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("design and responses must be finite".into()));
        }
        let rank = design.clone().svd(false, false).rank(1e-10);
        if rank < p {
            return Err(Error::InvalidInput(format!(
                "rank-deficient design: rank {rank} < p = {p}"
            )));
        }
        Ok(Self { design, responses })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }
}

fn normal_density(r: f64, sigma: f64) -> f64 {
    let z = r / sigma;
    (-0.5 * z * z).exp() / (sigma * SQRT_2PI)
}

/// Per-observation average objective `H_n(theta) = (1/n) Σ V_i(Y_i; theta)`,
/// `theta = (eta.., sigma)`. All observation densities share the same shape up
/// to translation, so the population term is computed once per theta.
pub fn nonhom_objective(
    data: &RegressionData,
    kernel: &LogPhiKernel,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<f64> {
    let p = data.p();
    let sigma = theta[p];
    if !(sigma > 0.0) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let pop = integrate(
        |z| kernel.b_conjugate(normal_density(z, sigma)),
        -10.0 * sigma,
        10.0 * sigma,
        q,
    )?;
    let eta = DVector::from_column_slice(&theta[..p]);
    let fitted = &data.design * &eta;
    let dat: f64 = data
        .responses
        .iter()
        .zip(fitted.iter())
        .map(|(&y, &m)| kernel.b_prime(normal_density(y - m, sigma)))
        .sum::<f64>()
        / data.n() as f64;
    Ok(pop - dat)
}

/// Estimating-equation residual for the regression objective (data average of
/// the per-observation equation; the eta-components of the per-observation
/// model integral vanish by symmetry and the sigma-component is shared).
pub fn nonhom_residual(
    data: &RegressionData,
    t: TuningPair,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    let p = data.p();
    let n = data.n();
    let sigma = theta[p];
    if !(sigma > 0.0) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let (beta, gamma) = (t.beta(), t.gamma());
    let eta = DVector::from_column_slice(&theta[..p]);
    let fitted = &data.design * &eta;
    let mut res = DVector::zeros(p + 1);
    for (i, (&y, &m)) in data.responses.iter().zip(fitted.iter()).enumerate() {
        let r = y - m;
        let f = normal_density(r, sigma);
        if f > 0.0 {
            let w = f.powf(1.0 + beta) * phi_raw(f, gamma);
            for j in 0..p {
                res[j] += w * r / (sigma * sigma) * data.design[(i, j)];
            }
            res[p] += w * (r * r / (sigma * sigma * sigma) - 1.0 / sigma);
        }
    }
    res /= n as f64;
    // shared sigma-component of the model integral
    let int_sigma = integrate(
        |z| {
            let f = normal_density(z, sigma);
            (z * z / (sigma * sigma * sigma) - 1.0 / sigma)
                * f.powf(2.0 + beta)
                * phi_raw(f, gamma)
        },
        -10.0 * sigma,
        10.0 * sigma,
        q,
    )?;
    res[p] -= int_sigma;
    Ok(res)
}

/// Fit the regression minimum-distance estimator from `init` (typically the
/// least-median-of-squares pilot).
pub fn fit_nonhom_regression(
    data: &RegressionData,
    t: TuningPair,
    init: &PilotEstimate,
    q: &QuadratureSpec,
    opts: &FitOptions,
) -> Result<EstimateResult> {
    let p = data.p();
    if init.theta_star.len() != p + 1 {
        return Err(Error::InvalidInput(format!(
            "pilot must have length p + 1 = {}",
            p + 1
        )));
    }
    let sigma0 = init.theta_star[p];
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidInput("pilot scale must be positive".into()));
    }
    let kernel = LogPhiKernel::with_cache(t, 4.0 / (sigma0 * SQRT_2PI), q.clone());
    let problem = Problem {
        objective: Box::new(|theta: &[f64]| {
            nonhom_objective(data, &kernel, theta, q).unwrap_or(f64::INFINITY)
        }),
        residual: Box::new(|theta: &[f64]| {
            nonhom_residual(data, t, theta, q)
                .unwrap_or_else(|_| DVector::from_element(p + 1, f64::NAN))
        }),
    };
    let mut transforms = vec![ParamTransform::Identity; p];
    transforms.push(ParamTransform::Log);
    let reparam = Reparam { transforms };
    let (theta, value, rn, iters, converged) = run_fit(&problem, &reparam, &init.theta_star, opts);
    Ok(EstimateResult {
        theta_hat: theta,
        objective_value: value,
        eq_residual_norm: rn,
        converged,
        iterations: iters,
        tuning: Tuning::LogPhi(t),
        basin_warning: false,
    })
}

// ---------- pilots ----------

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub(crate) fn mad_scale(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    1.4826 * median(&mut dev)
}

/// Minimum L2-distance pilot: the power-divergence fit at alpha = 1, started
/// from median / scaled-MAD.
pub fn pilot_min_l2(
    data: &[f64],
    model: &dyn ParametricModel,
    q: &QuadratureSpec,
) -> Result<PilotEstimate> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data must be nonempty".into()));
    }
    let mut v = data.to_vec();
    let med = median(&mut v);
    let start = match model.dim() {
        1 => vec![med],
        2 => vec![med, mad_scale(data).max(1e-6)],
        _ => {
            return Err(Error::InvalidInput(
                "min-L2 pilot supports location and location-scale models".into(),
            ))
        }
    };
    let fit = fit_dpd(
        data,
        model,
        DpdAlpha::new(1.0)?,
        &PilotEstimate::user(start)?,
        q,
        &FitOptions::default(),
    )?;
    Ok(PilotEstimate {
        theta_star: fit.theta_hat,
        method: PilotMethod::MinL2,
    })
}

fn combinations_visit(n: usize, p: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        visit(&idx);
        // advance
        let mut i = p;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - p {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..p {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, p: usize) -> f64 {
    let mut acc = 1.0f64;
    for k in 0..p {
        acc = acc * (n - k) as f64 / (k + 1) as f64;
        if acc > 1e18 {
            return f64::INFINITY;
        }
    }
    acc
}

/// Least-median-of-squares regression pilot via elemental subsets, with scale
/// `1.4826 * MAD` of the LMS residuals. Exhaustive when the subset count is
/// within budget, otherwise seeded random subsets; deterministic either way.
pub fn pilot_lms(
    data: &RegressionData,
    n_subsets: usize,
    seed: u64,
) -> Result<PilotEstimate> {
    use rand::Rng;
    if n_subsets == 0 {
        return Err(Error::InvalidInput("n_subsets must be at least 1".into()));
    }
    let n = data.n();
    let p = data.p();
    let h = n / 2; // criterion: (h+1)-th smallest squared residual
    let y = DVector::from_column_slice(&data.responses);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut tried_any = false;
    let mut eval_subset = |rows: &[usize]| {
        let mut a = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        for (r, &row) in rows.iter().enumerate() {
            for c in 0..p {
                a[(r, c)] = data.design[(row, c)];
            }
            b[r] = y[row];
        }
        if let Some(coef) = a.lu().solve(&b) {
            if !coef.iter().all(|v| v.is_finite()) {
                return;
            }
            tried_any = true;
            let fitted = &data.design * &coef;
            let mut r2: Vec<f64> = (0..n).map(|i| (y[i] - fitted[i]).powi(2)).collect();
            r2.sort_by(|x, w| x.partial_cmp(w).unwrap_or(std::cmp::Ordering::Equal));
            let crit = r2[h];
            if best.as_ref().map_or(true, |(c, _)| crit < *c) {
                best = Some((crit, coef));
            }
        }
    };
    if binomial(n, p) <= n_subsets as f64 {
        combinations_visit(n, p, |rows| eval_subset(rows));
    } else {
        let mut rng = crate::seeds::stream_rng(seed, 0);
        let mut rows = vec![0usize; p];
        for _ in 0..n_subsets {
            // sample p distinct rows
            let mut chosen = 0;
            while chosen < p {
                let cand = rng.gen_range(0..n);
                if !rows[..chosen].contains(&cand) {
                    rows[chosen] = cand;
                    chosen += 1;
                }
            }
            eval_subset(&rows);
        }
    }
    let (_, coef) = best.ok_or_else(|| Error::FitFailure("all elemental subsets singular".into()))?;
    if !tried_any {
        return Err(Error::FitFailure("all elemental subsets singular".into()));
    }
    let fitted = &data.design * &coef;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let scale = mad_scale(&residuals);
    let mut theta: Vec<f64> = coef.iter().copied().collect();
    theta.push(scale.max(1e-12));
    Ok(PilotEstimate {
        theta_star: theta,
        method: PilotMethod::LmsMad,
    })
}
