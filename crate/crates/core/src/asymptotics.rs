//! Asymptotic variance machinery: the J, K, zeta matrices at and off the
//! model, the sandwich covariance J^{-1} K J^{-1}, relative efficiency against
//! maximum likelihood, influence functions, and the per-observation variants
//! for independent non-homogeneous data.

use nalgebra::{DMatrix, DVector};

use crate::divergence::Density;
use crate::error::{Error, Result};
use crate::estimation::RegressionData;
use crate::kernel::{phi_prime_raw, phi_raw, DpdAlpha, TuningPair};
use crate::linalg::{min_eigenvalue, sym_inverse, symmetrize};
use crate::models::{ParametricModel, Support, SQRT_2PI};
use crate::quad::{integrate_vec, QuadratureSpec};

/// The sandwich ingredients at a parameter point.
#[derive(Debug, Clone)]
pub struct AsymptoticMatrices {
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub zeta: DVector<f64>,
    /// J^{-1} K J^{-1}
    pub sigma: DMatrix<f64>,
    /// condition number of J reported by the inversion
    pub j_condition: f64,
}

impl AsymptoticMatrices {
    fn assemble(j: DMatrix<f64>, k: DMatrix<f64>, zeta: DVector<f64>) -> Result<Self> {
        let j = symmetrize(&j);
        let k = symmetrize(&k);
        let (j_inv, j_condition) = sym_inverse(&j)?;
        let sigma = symmetrize(&(&j_inv * &k * &j_inv));
        Ok(Self {
            j,
            k,
            zeta,
            sigma,
            j_condition,
        })
    }

    pub fn trace_sigma(&self) -> f64 {
        self.sigma.trace()
    }
}

/// Stack (p^2 J-entries, p^2 K-entries, p zeta-entries) for a single
/// integration pass over the support.
fn integrate_jkz(
    model: &dyn ParametricModel,
    theta: &[f64],
    weights: impl Fn(f64) -> (f64, f64, f64),
    q: &QuadratureSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let p = model.dim();
    let dim = 2 * p * p + p;
    let eval = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(dim);
        if f > 0.0 {
            let u = model.score(theta, x);
            let (wj, wk, wz) = weights(f);
            for a in 0..p {
                for b in 0..p {
                    let uu = u[a] * u[b];
                    out[a * p + b] = uu * wj;
                    out[p * p + a * p + b] = uu * wk;
                }
                out[2 * p * p + a] = u[a] * wz;
            }
        }
        out
    };
    let stacked = match model.support() {
        Support::Continuous => {
            let (lo, hi) = q.window(model.truncation(theta));
            integrate_vec(eval, lo, hi, q)?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(dim);
            for &x in &atoms {
                s += eval(x);
            }
            s
        }
    };
    let j = DMatrix::from_fn(p, p, |a, b| stacked[a * p + b]);
    let k = DMatrix::from_fn(p, p, |a, b| stacked[p * p + a * p + b]);
    let z = DVector::from_fn(p, |a, _| stacked[2 * p * p + a]);
    Ok((j, k, z))
}

/// At-model matrices for the log family:
/// `J = ∫ u u' f^{2+β} φ(f,γ)`, `K = ∫ u u' f^{3+2β} φ²(f,γ) − ζζ'`,
/// `ζ = ∫ u f^{2+β} φ(f,γ)`.
pub fn matrices_at_model(
    model: &dyn ParametricModel,
    theta: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    model.check_theta(theta)?;
    let (beta, gamma) = (t.beta(), t.gamma());
    let (j, k2, z) = integrate_jkz(
        model,
        theta,
        |f| {
            let ph = phi_raw(f, gamma);
            (
                f.powf(2.0 + beta) * ph,
                f.powf(3.0 + 2.0 * beta) * ph * ph,
                f.powf(2.0 + beta) * ph,
            )
        },
        q,
    )?;
    let k = &k2 - &z * z.transpose();
    AsymptoticMatrices::assemble(j, k, z)
}

/// DPD at-model matrices: `J = ∫ u u' f^{1+α}`, `K = ∫ u u' f^{1+2α} − ζζ'`.
pub fn dpd_matrices_at_model(
    model: &dyn ParametricModel,
    theta: &[f64],
    a: DpdAlpha,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    model.check_theta(theta)?;
    let al = a.value();
    let (j, k2, z) = integrate_jkz(
        model,
        theta,
        |f| (f.powf(1.0 + al), f.powf(1.0 + 2.0 * al), f.powf(1.0 + al)),
        q,
    )?;
    let k = &k2 - &z * z.transpose();
    AsymptoticMatrices::assemble(j, k, z)
}

/// The correction integrand `κ − β u u'` of the general J:
/// `κ = −[∇u + (1 + f φ'/φ) u u']`.
fn kappa_minus_buu(
    model: &dyn ParametricModel,
    theta: &[f64],
    x: f64,
    f: f64,
    t: TuningPair,
) -> DMatrix<f64> {
    let (beta, gamma) = (t.beta(), t.gamma());
    let u = model.score(theta, x);
    let du = model.score_jacobian(theta, x);
    let fac = 1.0 + f * phi_prime_raw(f, gamma) / phi_raw(f, gamma);
    let uut = &u * u.transpose();
    -(du + uut.clone() * fac) - uut * beta
}

/// DPD analog of the correction integrand: `i_θ − α u u'` with `i_θ = −∇u`.
fn info_minus_auu(model: &dyn ParametricModel, theta: &[f64], x: f64, a: f64) -> DMatrix<f64> {
    let u = model.score(theta, x);
    let du = model.score_jacobian(theta, x);
    -(du + &u * u.transpose() * a)
}

enum Reference<'a> {
    TrueDensity(&'a dyn Density),
    Sample(&'a [f64]),
}

/// General-form matrices: K and zeta integrate against the reference
/// distribution (a density or the empirical sample), and J carries the
/// `(g − f)` correction.
fn matrices_general_impl(
    model: &dyn ParametricModel,
    theta: &[f64],
    reference: Reference<'_>,
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    model.check_theta(theta)?;
    let (beta, gamma) = (t.beta(), t.gamma());
    let p = model.dim();

    // model-only pieces: J_model = ∫ u u' f^{2+β} φ and the f-part of the
    // correction ∫ (κ − β u u') f^{2+β} φ
    let dim = 2 * p * p;
    let model_part = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(dim);
        if f > 0.0 {
            let ph = phi_raw(f, gamma);
            let w = f.powf(2.0 + beta) * ph;
            let u = model.score(theta, x);
            let km = kappa_minus_buu(model, theta, x, f, t);
            for a in 0..p {
                for b in 0..p {
                    out[a * p + b] = u[a] * u[b] * w;
                    out[p * p + a * p + b] = km[(a, b)] * w;
                }
            }
        }
        out
    };
    let stacked = match model.support() {
        Support::Continuous => {
            let (lo, hi) = q.window(model.truncation(theta));
            integrate_vec(model_part, lo, hi, q)?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(dim);
            for &x in &atoms {
                s += model_part(x);
            }
            s
        }
    };
    let j_model = DMatrix::from_fn(p, p, |a, b| stacked[a * p + b]);
    let corr_f_part = DMatrix::from_fn(p, p, |a, b| stacked[p * p + a * p + b]);

    // reference-measure pieces: correction g-part, K2 and zeta against g
    let gdim = 2 * p * p + p;
    let g_part = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(gdim);
        if f > 0.0 {
            let ph = phi_raw(f, gamma);
            let u = model.score(theta, x);
            let km = kappa_minus_buu(model, theta, x, f, t);
            let w_corr = f.powf(1.0 + beta) * ph;
            let w_k = f.powf(2.0 + 2.0 * beta) * ph * ph;
            for a in 0..p {
                for b in 0..p {
                    out[a * p + b] = km[(a, b)] * w_corr;
                    out[p * p + a * p + b] = u[a] * u[b] * w_k;
                }
                out[2 * p * p + a] = u[a] * w_corr;
            }
        }
        out
    };
    let gstacked = match reference {
        Reference::TrueDensity(g) => match model.support() {
            Support::Continuous => {
                let (lo, hi) = q.window({
                    let (a1, b1) = model.truncation(theta);
                    let (a2, b2) = g.window();
                    (a1.min(a2), b1.max(b2))
                });
                integrate_vec(|x| g_part(x) * g.eval(x), lo, hi, q)?
            }
            Support::Finite(atoms) => {
                let mut s = DVector::zeros(gdim);
                for &x in &atoms {
                    s += g_part(x) * g.eval(x);
                }
                s
            }
        },
        Reference::Sample(data) => {
            if data.is_empty() {
                return Err(Error::InvalidInput("data must be nonempty".into()));
            }
            let mut s = DVector::zeros(gdim);
            for &x in data {
                s += g_part(x);
            }
            s / data.len() as f64
        }
    };
    let corr_g_part = DMatrix::from_fn(p, p, |a, b| gstacked[a * p + b]);
    let k2 = DMatrix::from_fn(p, p, |a, b| gstacked[p * p + a * p + b]);
    let zeta = DVector::from_fn(p, |a, _| gstacked[2 * p * p + a]);

    let j = j_model + corr_g_part - corr_f_part;
    let k = &k2 - &zeta * zeta.transpose();
    AsymptoticMatrices::assemble(j, k, zeta)
}

/// General-form matrices against a true density `g`.
pub fn matrices_general(
    model: &dyn ParametricModel,
    theta: &[f64],
    g: &dyn Density,
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    matrices_general_impl(model, theta, Reference::TrueDensity(g), t, q)
}

/// General-form matrices with the empirical distribution of `data` as the
/// reference (the tuning-selection estimator).
pub fn matrices_empirical(
    model: &dyn ParametricModel,
    theta: &[f64],
    data: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    matrices_general_impl(model, theta, Reference::Sample(data), t, q)
}

fn dpd_general_impl(
    model: &dyn ParametricModel,
    theta: &[f64],
    reference: Reference<'_>,
    a: DpdAlpha,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    model.check_theta(theta)?;
    let al = a.value();
    let p = model.dim();
    let dim = 2 * p * p;
    let model_part = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(dim);
        if f > 0.0 {
            let w = f.powf(1.0 + al);
            let u = model.score(theta, x);
            let im = info_minus_auu(model, theta, x, al);
            for r in 0..p {
                for c in 0..p {
                    out[r * p + c] = u[r] * u[c] * w;
                    out[p * p + r * p + c] = im[(r, c)] * w;
                }
            }
        }
        out
    };
    let stacked = match model.support() {
        Support::Continuous => {
            let (lo, hi) = q.window(model.truncation(theta));
            integrate_vec(model_part, lo, hi, q)?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(dim);
            for &x in &atoms {
                s += model_part(x);
            }
            s
        }
    };
    let j_model = DMatrix::from_fn(p, p, |r, c| stacked[r * p + c]);
    let corr_f = DMatrix::from_fn(p, p, |r, c| stacked[p * p + r * p + c]);

    let gdim = 2 * p * p + p;
    let g_part = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(gdim);
        if f > 0.0 {
            let u = model.score(theta, x);
            let im = info_minus_auu(model, theta, x, al);
            let w_corr = f.powf(al);
            let w_k = f.powf(2.0 * al);
            for r in 0..p {
                for c in 0..p {
                    out[r * p + c] = im[(r, c)] * w_corr;
                    out[p * p + r * p + c] = u[r] * u[c] * w_k;
                }
                out[2 * p * p + r] = u[r] * w_corr;
            }
        }
        out
    };
    let gstacked = match reference {
        Reference::TrueDensity(g) => match model.support() {
            Support::Continuous => {
                let (lo, hi) = q.window({
                    let (a1, b1) = model.truncation(theta);
                    let (a2, b2) = g.window();
                    (a1.min(a2), b1.max(b2))
                });
                integrate_vec(|x| g_part(x) * g.eval(x), lo, hi, q)?
            }
            Support::Finite(atoms) => {
                let mut s = DVector::zeros(gdim);
                for &x in &atoms {
                    s += g_part(x) * g.eval(x);
                }
                s
            }
        },
        Reference::Sample(data) => {
            if data.is_empty() {
                return Err(Error::InvalidInput("data must be nonempty".into()));
            }
            let mut s = DVector::zeros(gdim);
            for &x in data {
                s += g_part(x);
            }
            s / data.len() as f64
        }
    };
    let corr_g = DMatrix::from_fn(p, p, |r, c| gstacked[r * p + c]);
    let k2 = DMatrix::from_fn(p, p, |r, c| gstacked[p * p + r * p + c]);
    let zeta = DVector::from_fn(p, |r, _| gstacked[2 * p * p + r]);
    let j = j_model + corr_g - corr_f;
    let k = &k2 - &zeta * zeta.transpose();
    AsymptoticMatrices::assemble(j, k, zeta)
}

/// DPD general-form matrices against a density.
pub fn dpd_matrices_general(
    model: &dyn ParametricModel,
    theta: &[f64],
    g: &dyn Density,
    a: DpdAlpha,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    dpd_general_impl(model, theta, Reference::TrueDensity(g), a, q)
}

/// DPD general-form matrices with the empirical distribution as reference.
pub fn dpd_matrices_empirical(
    model: &dyn ParametricModel,
    theta: &[f64],
    data: &[f64],
    a: DpdAlpha,
    q: &QuadratureSpec,
) -> Result<AsymptoticMatrices> {
    dpd_general_impl(model, theta, Reference::Sample(data), a, q)
}

/// Fisher information by quadrature from the model interface.
pub fn fisher_information(
    model: &dyn ParametricModel,
    theta: &[f64],
    q: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    let p = model.dim();
    let eval = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(p * p);
        if f > 0.0 {
            let u = model.score(theta, x);
            for a in 0..p {
                for b in 0..p {
                    out[a * p + b] = u[a] * u[b] * f;
                }
            }
        }
        out
    };
    let stacked = match model.support() {
        Support::Continuous => {
            let (lo, hi) = q.window(model.truncation(theta));
            integrate_vec(eval, lo, hi, q)?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(p * p);
            for &x in &atoms {
                s += eval(x);
            }
            s
        }
    };
    Ok(symmetrize(&DMatrix::from_fn(p, p, |a, b| stacked[a * p + b])))
}

/// Asymptotic relative efficiency against maximum likelihood for scalar
/// parameters: `(1/I) / sigma` in (0, 1].
pub fn are_vs_mle(
    model: &dyn ParametricModel,
    theta: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::InvalidInput(
            "relative efficiency is defined here for scalar parameters".into(),
        ));
    }
    let m = matrices_at_model(model, theta, t, q)?;
    let i = fisher_information(model, theta, q)?[(0, 0)];
    Ok((1.0 / i) / m.sigma[(0, 0)])
}

/// DPD counterpart of `are_vs_mle` (the gamma -> 0 column).
pub fn are_vs_mle_dpd(
    model: &dyn ParametricModel,
    theta: &[f64],
    a: DpdAlpha,
    q: &QuadratureSpec,
) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::InvalidInput(
            "relative efficiency is defined here for scalar parameters".into(),
        ));
    }
    let m = dpd_matrices_at_model(model, theta, a, q)?;
    let i = fisher_information(model, theta, q)?[(0, 0)];
    Ok((1.0 / i) / m.sigma[(0, 0)])
}

/// Influence function at the model. The kernel log factors are written
/// without 1/gamma (they cancel between the inverted matrix and the bracket);
/// `influence_function_phi_form` carries them and must agree.
pub fn influence_function(
    model: &dyn ParametricModel,
    theta: &[f64],
    t: TuningPair,
    y: f64,
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    model.check_theta(theta)?;
    let (beta, gamma) = (t.beta(), t.gamma());
    let p = model.dim();
    let eval = |x: f64| -> DVector<f64> {
        let f = model.density(theta, x);
        let mut out = DVector::zeros(p * p + p);
        if f > 0.0 {
            let l = (gamma / f).ln_1p();
            let w = f.powf(2.0 + beta) * l;
            let u = model.score(theta, x);
            for a in 0..p {
                for b in 0..p {
                    out[a * p + b] = u[a] * u[b] * w;
                }
                out[p * p + a] = u[a] * w;
            }
        }
        out
    };
    let stacked = match model.support() {
        Support::Continuous => {
            let (lo, hi) = q.window(model.truncation(theta));
            integrate_vec(eval, lo, hi, q)?
        }
        Support::Finite(atoms) => {
            let mut s = DVector::zeros(p * p + p);
            for &x in &atoms {
                s += eval(x);
            }
            s
        }
    };
    let jl = DMatrix::from_fn(p, p, |a, b| stacked[a * p + b]);
    let zl = DVector::from_fn(p, |a, _| stacked[p * p + a]);
    let (jl_inv, _) = sym_inverse(&jl)?;
    let fy = model.density(theta, y);
    let bracket = if fy > 0.0 {
        model.score(theta, y) * (fy.powf(1.0 + beta) * (gamma / fy).ln_1p()) - &zl
    } else {
        -zl.clone()
    };
    Ok(jl_inv * bracket)
}

/// The same influence function carrying the full `phi` factors.
pub fn influence_function_phi_form(
    model: &dyn ParametricModel,
    theta: &[f64],
    t: TuningPair,
    y: f64,
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    let m = matrices_at_model(model, theta, t, q)?;
    let (j_inv, _) = sym_inverse(&m.j)?;
    let (beta, gamma) = (t.beta(), t.gamma());
    let fy = model.density(theta, y);
    let bracket = if fy > 0.0 {
        model.score(theta, y) * (fy.powf(1.0 + beta) * phi_raw(fy, gamma)) - &m.zeta
    } else {
        -m.zeta.clone()
    };
    Ok(j_inv * bracket)
}

/// Generic M-estimator influence `J^{-1} ψ(y)` from the estimating-equation
/// summand; cross-checks `influence_function`.
pub fn m_estimator_influence(
    model: &dyn ParametricModel,
    theta: &[f64],
    t: TuningPair,
    y: f64,
    q: &QuadratureSpec,
) -> Result<DVector<f64>> {
    influence_function_phi_form(model, theta, t, y, q)
}

// ---------- non-homogeneous (fixed-design regression) ----------

/// Per-observation matrices for independent non-homogeneous observations:
/// `J(i)`, their average `Psi_n`, the averaged gradient variance `Omega_n`
/// (defined as `(1/n) Σ Var_{g_i}[∇V_i]`, which reduces to K when all
/// densities coincide), and the per-observation gradient means `xi_i`.
#[derive(Debug, Clone)]
pub struct NonHomAsymptotics {
    pub j_i: Vec<DMatrix<f64>>,
    pub psi_n: DMatrix<f64>,
    pub omega_n: DMatrix<f64>,
    pub xi_i: Vec<DVector<f64>>,
    /// `Psi_n^{-1} Omega_n Psi_n^{-1}`
    pub sigma: DMatrix<f64>,
    pub min_eigen_psi: f64,
}

fn normal_density(r: f64, sigma: f64) -> f64 {
    let z = r / sigma;
    (-0.5 * z * z).exp() / (sigma * SQRT_2PI)
}

/// At-model non-homogeneous matrices for the regression family. With all
/// observation densities equal this reduces exactly to the i.i.d. J and K.
pub fn nonhom_matrices_at_model(
    data: &RegressionData,
    theta: &[f64],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<NonHomAsymptotics> {
    let p = data.p();
    let n = data.n();
    let dim = p + 1;
    let sigma_p = theta[p];
    if !(sigma_p > 0.0) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let (beta, gamma) = (t.beta(), t.gamma());

    // Shared residual-profile integrals: every observation density is
    // N(m_i, sigma), so per-observation integrals differ only through the
    // covariate factors. With u_i = (r x_i / s^2, r^2/s^3 - 1/s):
    //   J(i)[eta, eta]  = x_i x_i'/s^4 * ∫ r^2 w_J        (odd cross terms vanish)
    //   J(i)[sig, sig]  = ∫ u_s^2 w_J                      (same for all i)
    //   K-type profiles use w_K = f^{3+2b} phi^2; xi uses w_J on u_s.
    let prof = integrate_vec(
        |z| {
            let f = normal_density(z, sigma_p);
            let ph = phi_raw(f, gamma);
            let wj = f.powf(2.0 + beta) * ph;
            let wk = f.powf(3.0 + 2.0 * beta) * ph * ph;
            let us = z * z / (sigma_p * sigma_p * sigma_p) - 1.0 / sigma_p;
            DVector::from_vec(vec![
                z * z * wj,   // 0: eta-eta J profile
                us * us * wj, // 1: sigma-sigma J profile
                z * z * wk,   // 2: eta-eta K profile
                us * us * wk, // 3: sigma-sigma K profile
                us * wj,      // 4: sigma zeta profile
            ])
        },
        -10.0 * sigma_p,
        10.0 * sigma_p,
        q,
    )?;
    let s2 = sigma_p * sigma_p;
    let mut psi = DMatrix::zeros(dim, dim);
    let mut omega = DMatrix::zeros(dim, dim);
    let mut j_i = Vec::with_capacity(n);
    let mut xi_i = Vec::with_capacity(n);
    for i in 0..n {
        let xi = data.design.row(i);
        let mut ji = DMatrix::zeros(dim, dim);
        let mut ki = DMatrix::zeros(dim, dim);
        let mut zi = DVector::zeros(dim);
        for a in 0..p {
            for b in 0..p {
                let xx = xi[a] * xi[b] / (s2 * s2);
                ji[(a, b)] = xx * prof[0];
                ki[(a, b)] = xx * prof[2];
            }
        }
        ji[(p, p)] = prof[1];
        ki[(p, p)] = prof[3];
        zi[p] = prof[4]; // eta-components vanish by symmetry
        let ki_centered = &ki - &zi * zi.transpose();
        psi += &ji;
        omega += &ki_centered;
        j_i.push(ji);
        xi_i.push(zi);
    }
    psi /= n as f64;
    omega /= n as f64;
    let psi = symmetrize(&psi);
    let omega = symmetrize(&omega);
    let (psi_inv, _) = sym_inverse(&psi)?;
    let sigma = symmetrize(&(&psi_inv * &omega * &psi_inv));
    let min_eigen_psi = min_eigenvalue(&psi);
    if min_eigen_psi <= 0.0 {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    Ok(NonHomAsymptotics {
        j_i,
        psi_n: psi,
        omega_n: omega,
        xi_i,
        sigma,
        min_eigen_psi,
    })
}

/// Off-model non-homogeneous matrices: each observation has its own true
/// response density `g_i(y)`. `J(i)` carries the `(g_i − f_i)` correction of
/// the general form; `Omega_n` averages the per-observation gradient
/// variances under `g_i`.
pub fn nonhom_matrices_general(
    data: &RegressionData,
    theta: &[f64],
    g_i: &[Box<dyn Fn(f64) -> f64 + Sync>],
    t: TuningPair,
    q: &QuadratureSpec,
) -> Result<NonHomAsymptotics> {
    let p = data.p();
    let n = data.n();
    if g_i.len() != n {
        return Err(Error::InvalidInput(
            "need one true density per observation".into(),
        ));
    }
    let dim = p + 1;
    let sigma_p = theta[p];
    if !(sigma_p > 0.0) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let (beta, gamma) = (t.beta(), t.gamma());
    let eta = DVector::from_column_slice(&theta[..p]);
    let fitted = &data.design * &eta;
    let mut psi = DMatrix::zeros(dim, dim);
    let mut omega = DMatrix::zeros(dim, dim);
    let mut j_i_all = Vec::with_capacity(n);
    let mut xi_all = Vec::with_capacity(n);
    for i in 0..n {
        let m_i = fitted[i];
        let xi = data.design.row(i).transpose();
        let u_of = |y: f64| -> DVector<f64> {
            let r = y - m_i;
            let mut u = DVector::zeros(dim);
            for a in 0..p {
                u[a] = r * xi[a] / (sigma_p * sigma_p);
            }
            u[p] = r * r / (sigma_p * sigma_p * sigma_p) - 1.0 / sigma_p;
            u
        };
        let du_of = |y: f64| -> DMatrix<f64> {
            let r = y - m_i;
            let s2 = sigma_p * sigma_p;
            let mut j = DMatrix::zeros(dim, dim);
            for a in 0..p {
                for b in 0..p {
                    j[(a, b)] = -xi[a] * xi[b] / s2;
                }
                j[(a, p)] = -2.0 * r * xi[a] / (s2 * sigma_p);
                j[(p, a)] = j[(a, p)];
            }
            j[(p, p)] = -3.0 * r * r / (s2 * s2) + 1.0 / s2;
            j
        };
        let gdim = 3 * dim * dim + dim;
        let stacked = integrate_vec(
            |y| {
                let f = normal_density(y - m_i, sigma_p);
                let mut out = DVector::zeros(gdim);
                if f > 0.0 {
                    let ph = phi_raw(f, gamma);
                    let u = u_of(y);
                    let du = du_of(y);
                    let fac = 1.0 + f * phi_prime_raw(f, gamma) / ph;
                    let g = g_i[i](y);
                    let wj = f.powf(2.0 + beta) * ph;
                    let w_corr = f.powf(1.0 + beta) * ph * (g - f);
                    let wk = f.powf(2.0 + 2.0 * beta) * ph * ph * g;
                    let wz = f.powf(1.0 + beta) * ph * g;
                    for a in 0..dim {
                        for b in 0..dim {
                            let uu = u[a] * u[b];
                            let kmb = -(du[(a, b)] + fac * uu) - beta * uu;
                            out[a * dim + b] = uu * wj;
                            out[dim * dim + a * dim + b] = kmb * w_corr;
                            out[2 * dim * dim + a * dim + b] = uu * wk;
                        }
                        out[3 * dim * dim + a] = u[a] * wz;
                    }
                }
                out
            },
            m_i - 12.0 * sigma_p,
            m_i + 12.0 * sigma_p,
            q,
        )?;
        let jm = DMatrix::from_fn(dim, dim, |a, b| stacked[a * dim + b]);
        let corr = DMatrix::from_fn(dim, dim, |a, b| stacked[dim * dim + a * dim + b]);
        let k2 = DMatrix::from_fn(dim, dim, |a, b| stacked[2 * dim * dim + a * dim + b]);
        let zi = DVector::from_fn(dim, |a, _| stacked[3 * dim * dim + a]);
        let ji = &jm + &corr;
        let ki = &k2 - &zi * zi.transpose();
        psi += &ji;
        omega += &ki;
        j_i_all.push(ji);
        xi_all.push(zi);
    }
    psi /= n as f64;
    omega /= n as f64;
    let psi = symmetrize(&psi);
    let omega = symmetrize(&omega);
    let (psi_inv, _) = sym_inverse(&psi)?;
    let sigma = symmetrize(&(&psi_inv * &omega * &psi_inv));
    let min_eigen_psi = min_eigenvalue(&psi);
    Ok(NonHomAsymptotics {
        j_i: j_i_all,
        psi_n: psi,
        omega_n: omega,
        xi_i: xi_all,
        sigma,
        min_eigen_psi,
    })
}
