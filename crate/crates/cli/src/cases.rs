//! The bundled case studies: two location-scale tuning analyses, two robust
//! regressions at a fixed tuning pair, and one finite-support test.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use std::path::PathBuf;

use lphidpd::estimation::{
    fit_dpd, fit_log_phi, fit_nonhom_regression, pilot_lms, pilot_min_l2, EstimateResult,
    FitOptions, PilotEstimate, RegressionData,
};
use lphidpd::hypothesis::{
    ddt_test, score_test, wald_test, ChiBarConfig, ConstrainedNull, Restrictions, TestOptions,
    TestResult,
};
use lphidpd::kernel::{DpdAlpha, TuningPair};
use lphidpd::models::{Bernoulli, NormalLocationScale};
use lphidpd::quad::QuadratureSpec;
use lphidpd::tuning::{amse_dpd, select_tuning, TuningConfig, TuningSelection, VarianceEstimator};

use crate::datasets;
use crate::ingest::{ingest_csv, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CaseName {
    Newcomb,
    Short,
    #[clap(name = "hertzsprung-russel")]
    HertzsprungRussel,
    Salinity,
    Mosquito,
}

impl CaseName {
    pub fn key(&self) -> &'static str {
        match self {
            CaseName::Newcomb => "newcomb",
            CaseName::Short => "short",
            CaseName::HertzsprungRussel => "hertzsprung-russel",
            CaseName::Salinity => "salinity",
            CaseName::Mosquito => "mosquito",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseOptions {
    pub seed: u64,
    pub quad: QuadratureSpec,
    /// user-supplied CSV replacing the bundled data
    pub data_path: Option<PathBuf>,
    /// search beta over (0,1) instead of (0, alpha_w)
    pub full_beta_range: bool,
    /// keep the stage-one pilot instead of updating it (diagnostic)
    pub fixed_pilot: bool,
    /// estimate J, K at the model instead of empirically (diagnostic)
    pub at_model_variance: bool,
    pub lms_subsets: usize,
}

impl Default for CaseOptions {
    fn default() -> Self {
        Self {
            seed: 20260810,
            quad: QuadratureSpec::default(),
            data_path: None,
            full_beta_range: false,
            fixed_pilot: false,
            at_model_variance: false,
            lms_subsets: 3000,
        }
    }
}

/// Tuning-pipeline output for the location-scale datasets.
#[derive(Debug, Clone, Serialize)]
pub struct TuningCaseReport {
    pub dataset: String,
    pub n: usize,
    pub mle: Vec<f64>,
    pub pilot_l2: Vec<f64>,
    /// fixed-alpha reference fit at 0.3 (the published optimum for the
    /// light-speed data)
    pub mdpde_alpha_03: Vec<f64>,
    pub selection: TuningSelection,
    /// AMSE of the stage-one power-divergence fit, pilot updated (bias zero)
    pub amse_dpd_at_alpha_w: f64,
    /// fit at the published tuning pair for cross-reference
    pub fit_at_published_pair: Option<EstimateResult>,
    pub published_pair: Option<(f64, f64)>,
    /// whether the bundled data reproduces its published normal MLE
    pub data_anchor_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionCaseReport {
    pub dataset: String,
    pub n: usize,
    pub p: usize,
    pub tuning: (f64, f64),
    pub lms_pilot: Vec<f64>,
    pub estimate: Vec<f64>,
    pub objective_value: f64,
    pub eq_residual_norm: f64,
    pub converged: bool,
    pub least_squares: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MosquitoCaseReport {
    pub n: u64,
    pub deaths: u64,
    pub null_p: f64,
    pub tuning: (f64, f64),
    pub ddt: TestResult,
    pub score: TestResult,
    pub wald: TestResult,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "case")]
pub enum CaseReport {
    Tuning(TuningCaseReport),
    Regression(RegressionCaseReport),
    Mosquito(MosquitoCaseReport),
}

fn load_data(name: &str, opts: &CaseOptions) -> Result<Dataset> {
    match &opts.data_path {
        Some(p) => {
            let ds = ingest_csv(p)?;
            datasets::validate_replacement(name, &ds)?;
            Ok(ds)
        }
        None => datasets::load(name),
    }
}

fn mle_normal(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Full tuning pipeline for a univariate sample under the normal model.
pub fn run_tuning_case(
    name: &str,
    published_mle: (f64, f64),
    published_pair: Option<(f64, f64)>,
    opts: &CaseOptions,
) -> Result<TuningCaseReport> {
    let ds = load_data(name, opts)?;
    let values = ds
        .column("value")
        .context("dataset must have a 'value' column")?
        .to_vec();
    let q = &opts.quad;
    let model = NormalLocationScale;
    let (m, s) = mle_normal(&values);
    let data_anchor_ok =
        (m - published_mle.0).abs() < 0.001 && (s - published_mle.1).abs() < 0.001;

    let pilot = pilot_min_l2(&values, &model, q).map_err(|e| anyhow!("{e}"))?;
    let mut cfg = TuningConfig::default();
    cfg.full_beta_range = opts.full_beta_range;
    cfg.update_pilot = !opts.fixed_pilot;
    if opts.at_model_variance {
        cfg.variance = VarianceEstimator::AtModel;
    }
    let selection = select_tuning(&values, &model, &pilot, q, &cfg).map_err(|e| anyhow!("{e}"))?;

    // AMSE of the stage-one fit with the updated pilot (bias term zero)
    let aw_pilot = PilotEstimate {
        theta_star: selection.alpha_w_estimate.clone(),
        method: pilot.method,
    };
    let (amse_aw, _) = amse_dpd(
        &values,
        &model,
        selection.alpha_w,
        &aw_pilot,
        q,
        cfg.variance,
        &cfg.fit,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let mdpde_alpha_03 = fit_dpd(
        &values,
        &model,
        DpdAlpha::new(0.3).expect("valid"),
        &pilot,
        q,
        &FitOptions::default(),
    )
    .map_err(|e| anyhow!("{e}"))?
    .theta_hat;

    let fit_at_published_pair = match published_pair {
        Some((b, g)) => {
            let t = TuningPair::new(b, g).map_err(|e| anyhow!("{e}"))?;
            let start = PilotEstimate {
                theta_star: selection.alpha_w_estimate.clone(),
                method: pilot.method,
            };
            Some(
                fit_log_phi(
                    &values,
                    &model,
                    t,
                    &start,
                    q,
                    &FitOptions {
                        check_mle_restart: true,
                        ..Default::default()
                    },
                )
                .map_err(|e| anyhow!("{e}"))?,
            )
        }
        None => None,
    };

    Ok(TuningCaseReport {
        dataset: name.to_string(),
        n: values.len(),
        mle: vec![m, s],
        pilot_l2: pilot.theta_star,
        mdpde_alpha_03,
        selection,
        amse_dpd_at_alpha_w: amse_aw.total,
        fit_at_published_pair,
        published_pair,
        data_anchor_ok,
    })
}

fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let yv = nalgebra::DVector::from_column_slice(y);
    let xtx = design.transpose() * design;
    let xty = design.transpose() * yv;
    match xtx.lu().solve(&xty) {
        Some(coef) => {
            let fitted = design * &coef;
            let n = y.len();
            let p = design.ncols();
            let rss: f64 = (0..n).map(|i| (y[i] - fitted[i]).powi(2)).sum();
            let mut out: Vec<f64> = coef.iter().copied().collect();
            out.push((rss / (n - p) as f64).sqrt());
            out
        }
        None => vec![f64::NAN; design.ncols() + 1],
    }
}

/// Robust regression at a fixed tuning pair from a least-median-of-squares
/// pilot with scaled-MAD scale.
pub fn run_regression_case(
    name: &str,
    response: &str,
    covariates: &[&str],
    pair: (f64, f64),
    opts: &CaseOptions,
) -> Result<RegressionCaseReport> {
    let ds = load_data(name, opts)?;
    let y = ds
        .column(response)
        .with_context(|| format!("dataset must have a '{response}' column"))?
        .to_vec();
    let n = y.len();
    let p = covariates.len() + 1;
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        design[(i, 0)] = 1.0;
    }
    for (j, c) in covariates.iter().enumerate() {
        let col = ds
            .column(c)
            .with_context(|| format!("dataset must have a '{c}' column"))?;
        for i in 0..n {
            design[(i, j + 1)] = col[i];
        }
    }
    let data = RegressionData::new(design.clone(), y.clone()).map_err(|e| anyhow!("{e}"))?;
    let pilot = pilot_lms(&data, opts.lms_subsets, opts.seed).map_err(|e| anyhow!("{e}"))?;
    let t = TuningPair::new(pair.0, pair.1).map_err(|e| anyhow!("{e}"))?;
    let fit = fit_nonhom_regression(&data, t, &pilot, &opts.quad, &FitOptions::default())
        .map_err(|e| anyhow!("{e}"))?;
    Ok(RegressionCaseReport {
        dataset: name.to_string(),
        n,
        p,
        tuning: pair,
        lms_pilot: pilot.theta_star,
        estimate: fit.theta_hat,
        objective_value: fit.objective_value,
        eq_residual_norm: fit.eq_residual_norm,
        converged: fit.converged,
        least_squares: least_squares(&design, &y),
    })
}

/// The susceptibility test: divergence-difference test of p = 1/2 at the
/// published tuning pair, with score and Wald-type cross-checks.
pub fn run_mosquito_case(opts: &CaseOptions) -> Result<MosquitoCaseReport> {
    let ds = load_data("mosquito", opts)?;
    let outcome = ds.column("outcome").context("need 'outcome' column")?;
    let count = ds.column("count").context("need 'count' column")?;
    let mut deaths = 0u64;
    let mut survived = 0u64;
    for (o, c) in outcome.iter().zip(count.iter()) {
        if *c < 0.0 || c.fract() != 0.0 {
            bail!("counts must be nonnegative integers");
        }
        match *o {
            x if x == 1.0 => deaths = *c as u64,
            x if x == 0.0 => survived = *c as u64,
            other => bail!("unexpected outcome value {other}"),
        }
    }
    let n = deaths + survived;
    if n == 0 {
        bail!("empty mosquito counts");
    }
    let model = Bernoulli;
    let pair = (0.3, 0.05);
    let t = TuningPair::new(pair.0, pair.1).map_err(|e| anyhow!("{e}"))?;
    let q = &opts.quad;
    let mc = ChiBarConfig {
        seed: opts.seed,
        ..Default::default()
    };
    // support order is (0, 1): counts aligned accordingly
    let ddt = ddt_test(
        &[survived, deaths],
        &model,
        &ConstrainedNull::Simple(vec![0.5]),
        t,
        q,
        mc,
    )
    .map_err(|e| anyhow!("{e}"))?;

    // raw observation vector for the sample-based tests
    let mut raw = Vec::with_capacity(n as usize);
    raw.extend(std::iter::repeat(0.0).take(survived as usize));
    raw.extend(std::iter::repeat(1.0).take(deaths as usize));
    let score = score_test(&raw, &model, &[0.5], t, q, mc).map_err(|e| anyhow!("{e}"))?;
    let restrictions = Restrictions {
        r: Box::new(|th: &[f64]| nalgebra::DVector::from_vec(vec![th[0] - 0.5])),
        jacobian: Some(Box::new(|_: &[f64]| DMatrix::from_element(1, 1, 1.0))),
    };
    let wald_opts = TestOptions {
        pilot: Some(PilotEstimate::user(vec![0.5]).map_err(|e| anyhow!("{e}"))?),
        ..Default::default()
    };
    let wald =
        wald_test(&raw, &model, &restrictions, t, q, &wald_opts).map_err(|e| anyhow!("{e}"))?;
    Ok(MosquitoCaseReport {
        n,
        deaths,
        null_p: 0.5,
        tuning: pair,
        ddt,
        score,
        wald,
    })
}

/// Dispatch a named case study.
pub fn run_case_study(name: CaseName, opts: &CaseOptions) -> Result<CaseReport> {
    match name {
        CaseName::Newcomb => Ok(CaseReport::Tuning(run_tuning_case(
            "newcomb",
            (26.212, 10.664),
            Some((0.1, 0.03)),
            opts,
        )?)),
        CaseName::Short => Ok(CaseReport::Tuning(run_tuning_case(
            "short",
            (8.378, 0.846),
            Some((0.55, 1.0)),
            opts,
        )?)),
        CaseName::HertzsprungRussel => Ok(CaseReport::Regression(run_regression_case(
            "hertzsprung-russel",
            "log_light",
            &["log_temperature"],
            (1.0, 0.9),
            opts,
        )?)),
        CaseName::Salinity => Ok(CaseReport::Regression(run_regression_case(
            "salinity",
            "salinity",
            &["lagged_salinity", "trend", "discharge"],
            (1.0, 0.9),
            opts,
        )?)),
        CaseName::Mosquito => Ok(CaseReport::Mosquito(run_mosquito_case(opts)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mosquito_case_reproduces_published_test() {
        let report = run_mosquito_case(&CaseOptions::default()).unwrap();
        assert_eq!(report.n, 465);
        assert_eq!(report.deaths, 264);
        assert!((report.ddt.statistic - 6.62).abs() < 0.05, "{}", report.ddt.statistic);
        assert!((report.ddt.lambdas[0] - 0.774).abs() < 0.005);
        assert!((report.ddt.critical_value_95 - 2.97).abs() < 0.02);
        assert!(report.ddt.reject_at_5pct);
        // cross-method agreement on the decision
        assert!(report.score.reject_at_5pct);
        assert!(report.wald.reject_at_5pct);
    }

    #[test]
    fn hr_regression_tracks_the_main_sequence() {
        let opts = CaseOptions::default();
        let r = run_regression_case(
            "hertzsprung-russel",
            "log_light",
            &["log_temperature"],
            (1.0, 0.9),
            &opts,
        )
        .unwrap();
        // robust slope positive (the main sequence), least squares slope negative
        assert!(r.estimate[1] > 0.0, "robust slope {}", r.estimate[1]);
        assert!(r.least_squares[1] < 0.0, "ls slope {}", r.least_squares[1]);
        assert!(r.lms_pilot[1] > 0.0);
        assert!(r.converged);
    }
}
