//! Experiment harness: the efficiency table, contaminated-sampling MSE
//! simulations, and influence-curve export. Replications and grid cells run
//! in parallel under the per-replication seeded-stream contract; results are
//! reduced in deterministic order.

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use lphidpd::asymptotics::{are_vs_mle, are_vs_mle_dpd, influence_function};
use lphidpd::estimation::{fit_dpd, fit_log_phi, FitOptions, PilotEstimate, PilotMethod};
use lphidpd::kernel::{DpdAlpha, TuningPair};
use lphidpd::models::{MixtureSpec, NormalLocation};
use lphidpd::quad::QuadratureSpec;
use lphidpd::seeds::stream_rng;

use crate::report::{config_hash, CellValue, ReportMeta, ReportTable};

/// One estimator in a simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridCell {
    LogPhi { beta: f64, gamma: f64 },
    Dpd { alpha: f64 },
}

impl GridCell {
    pub fn label(&self) -> String {
        match self {
            GridCell::LogPhi { beta, gamma } => format!("beta={beta} gamma={gamma}"),
            GridCell::Dpd { alpha } if *alpha == 0.0 => "mle".to_string(),
            GridCell::Dpd { alpha } => format!("alpha={alpha}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum StartRule {
    /// start every fit at the replicate's maximum-likelihood estimate
    Mle,
    /// start every fit at the replicate's minimum-L2 pilot
    Pilot,
}

/// Contaminated-normal location simulation design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// contamination fraction of the N(contam_mean, contam_sd) component
    pub eps: f64,
    pub contam_mean: f64,
    pub contam_sd: f64,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub grid: Vec<GridCell>,
    pub target_mu: f64,
    pub start: StartRule,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.grid.is_empty() {
            bail!("grid must be nonempty");
        }
        if !(0.0..1.0).contains(&self.eps) {
            bail!("contamination fraction must lie in [0, 1)");
        }
        if self.n < 2 {
            bail!("sample size must be at least 2");
        }
        Ok(())
    }
}

/// Empirical mean squared error of the location estimate against the target,
/// one column per grid cell. The same replicate sample feeds every cell;
/// per-cell failures are counted, never silently dropped.
pub fn simulate_mse_table(cfg: &SimulationConfig, q: &QuadratureSpec) -> Result<ReportTable> {
    cfg.validate()?;
    let start_time = Instant::now();
    let model = NormalLocation::new(1.0).expect("unit sigma");
    let spec = MixtureSpec::two_normals(cfg.eps, (0.0, 1.0), (cfg.contam_mean, cfg.contam_sd))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let fit_opts = FitOptions::default();

    // per replication: sample once, fit every cell
    let per_rep: Vec<Vec<Option<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r as u64);
            let data: Vec<f64> = (0..cfg.n).map(|_| spec.sample_one(&mut rng)).collect();
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            let start = match cfg.start {
                StartRule::Mle => vec![mean],
                StartRule::Pilot => {
                    let mut v = data.clone();
                    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                    vec![v[v.len() / 2]]
                }
            };
            let pilot = PilotEstimate {
                theta_star: start,
                method: PilotMethod::UserSupplied,
            };
            cfg.grid
                .iter()
                .map(|cell| {
                    let est = match cell {
                        GridCell::LogPhi { beta, gamma } => TuningPair::new(*beta, *gamma)
                            .ok()
                            .and_then(|t| fit_log_phi(&data, &model, t, &pilot, q, &fit_opts).ok()),
                        GridCell::Dpd { alpha } => DpdAlpha::new(*alpha)
                            .ok()
                            .and_then(|a| fit_dpd(&data, &model, a, &pilot, q, &fit_opts).ok()),
                    };
                    est.filter(|e| e.converged && e.theta_hat[0].is_finite())
                        .map(|e| {
                            let d = e.theta_hat[0] - cfg.target_mu;
                            d * d
                        })
                })
                .collect()
        })
        .collect();

    let cells: Vec<CellValue> = (0..cfg.grid.len())
        .map(|c| {
            let mut sum = 0.0;
            let mut ok = 0usize;
            for rep in &per_rep {
                if let Some(se) = rep[c] {
                    sum += se;
                    ok += 1;
                }
            }
            let failures = cfg.replications - ok;
            let mse = if ok > 0 { sum / ok as f64 } else { f64::NAN };
            CellValue::simulated(mse, cfg.replications, failures)
        })
        .collect();

    Ok(ReportTable {
        title: format!(
            "empirical MSE of the location estimate, {}% contamination, n = {}",
            (cfg.eps * 100.0).round(),
            cfg.n
        ),
        row_label: "estimator".into(),
        col_label: "quantity".into(),
        row_labels: cfg.grid.iter().map(|g| g.label()).collect(),
        col_labels: vec!["mse".into()],
        cells: cells.into_iter().map(|c| vec![c]).collect(),
        meta: ReportMeta {
            seed: Some(cfg.seed),
            config_hash: config_hash(cfg),
            runtime_ms: start_time.elapsed().as_millis(),
            timestamp: None,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AreTableConfig {
    pub beta_grid: Vec<f64>,
    /// 0 encodes the power-divergence limit column
    pub gamma_grid: Vec<f64>,
}

impl Default for AreTableConfig {
    fn default() -> Self {
        Self {
            beta_grid: (1..=10).map(|i| i as f64 * 0.1).collect(),
            gamma_grid: (0..=8).map(|i| i as f64 * 0.01).collect(),
        }
    }
}

/// Analytic asymptotic relative efficiency (percent) of the location
/// estimator under the standard normal model, one row per beta, one column
/// per gamma; gamma = 0 is the power-divergence limit computed by its own
/// formulas rather than a small-gamma proxy.
pub fn are_table(cfg: &AreTableConfig, q: &QuadratureSpec) -> Result<ReportTable> {
    let start_time = Instant::now();
    let model = NormalLocation::new(1.0).expect("unit sigma");
    for &b in &cfg.beta_grid {
        if !(b > 0.0 && b <= 1.0) {
            bail!("beta grid must lie in (0, 1], got {b}");
        }
    }
    for &g in &cfg.gamma_grid {
        if !(0.0..=1.0).contains(&g) {
            bail!("gamma grid must lie in [0, 1], got {g}");
        }
    }
    let cells: Vec<Vec<CellValue>> = cfg
        .beta_grid
        .par_iter()
        .map(|&b| {
            cfg.gamma_grid
                .iter()
                .map(|&g| {
                    let are = if g == 0.0 {
                        are_vs_mle_dpd(&model, &[0.0], DpdAlpha::new(b).expect("b >= 0"), q)
                    } else {
                        are_vs_mle(&model, &[0.0], TuningPair::new(b, g).expect("valid"), q)
                    };
                    match are {
                        Ok(v) => CellValue::analytic(100.0 * v),
                        Err(_) => CellValue {
                            value: f64::NAN,
                            replications: None,
                            failures: 1,
                            unreliable: true,
                        },
                    }
                })
                .collect()
        })
        .collect();
    Ok(ReportTable {
        title: "asymptotic relative efficiency (%) vs maximum likelihood, normal location".into(),
        row_label: "beta".into(),
        col_label: "gamma".into(),
        row_labels: cfg.beta_grid.iter().map(|b| format!("{b:.1}")).collect(),
        col_labels: cfg
            .gamma_grid
            .iter()
            .map(|g| {
                if *g == 0.0 {
                    "0 (power-divergence)".into()
                } else {
                    format!("{g}")
                }
            })
            .collect(),
        cells,
        meta: ReportMeta {
            seed: None,
            config_hash: config_hash(cfg),
            runtime_ms: start_time.elapsed().as_millis(),
            timestamp: None,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceConfig {
    /// evaluation model: normal location with this sigma, centered at theta
    pub theta: f64,
    pub sigma: f64,
    pub pairs: Vec<(f64, f64)>,
    pub y_min: f64,
    pub y_max: f64,
    pub y_points: usize,
}

/// Influence-curve series (y, IF(y)) per tuning pair, plot-ready.
pub fn influence_curve_export(cfg: &InfluenceConfig, q: &QuadratureSpec) -> Result<ReportTable> {
    let start_time = Instant::now();
    if cfg.y_points < 2 {
        bail!("need at least two grid points");
    }
    let model = NormalLocation::new(cfg.sigma).map_err(|e| anyhow::anyhow!("{e}"))?;
    let theta = [cfg.theta];
    let ys: Vec<f64> = (0..cfg.y_points)
        .map(|i| cfg.y_min + (cfg.y_max - cfg.y_min) * i as f64 / (cfg.y_points - 1) as f64)
        .collect();
    let mut pairs = Vec::new();
    for &(b, g) in &cfg.pairs {
        pairs.push(TuningPair::new(b, g).map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    let cells: Vec<Vec<CellValue>> = ys
        .par_iter()
        .map(|&y| {
            pairs
                .iter()
                .map(|&t| match influence_function(&model, &theta, t, y, q) {
                    Ok(v) => CellValue::analytic(v[0]),
                    Err(_) => CellValue {
                        value: f64::NAN,
                        replications: None,
                        failures: 1,
                        unreliable: true,
                    },
                })
                .collect()
        })
        .collect();
    Ok(ReportTable {
        title: "influence function of the location estimate".into(),
        row_label: "y".into(),
        col_label: "tuning".into(),
        row_labels: ys.iter().map(|y| format!("{y}")).collect(),
        col_labels: cfg
            .pairs
            .iter()
            .map(|(b, g)| format!("beta={b} gamma={g}"))
            .collect(),
        cells,
        meta: ReportMeta {
            seed: None,
            config_hash: config_hash(cfg),
            runtime_ms: start_time.elapsed().as_millis(),
            timestamp: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_mle_cell_matches_sample_mean_variance() {
        let cfg = SimulationConfig {
            eps: 0.0,
            contam_mean: 5.0,
            contam_sd: 1.0,
            n: 50,
            replications: 400,
            seed: 99,
            grid: vec![GridCell::Dpd { alpha: 0.0 }],
            target_mu: 0.0,
            start: StartRule::Mle,
        };
        let q = QuadratureSpec::default();
        let t = simulate_mse_table(&cfg, &q).unwrap();
        let mse = t.cell(0, 0).value;
        assert!((mse - 0.02).abs() < 0.004, "mse {mse}");
        assert_eq!(t.cell(0, 0).failures, 0);
    }

    #[test]
    fn are_table_monotone_in_beta_and_gamma() {
        let cfg = AreTableConfig {
            beta_grid: vec![0.2, 0.5, 0.9],
            gamma_grid: vec![0.0, 0.02, 0.06],
        };
        let q = QuadratureSpec::default();
        let t = are_table(&cfg, &q).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert!(t.cell(r, c).value > t.cell(r, c + 1).value);
            }
        }
        for c in 0..3 {
            for r in 0..2 {
                assert!(t.cell(r, c).value > t.cell(r + 1, c).value);
            }
        }
    }

    #[test]
    fn influence_export_zero_at_center_and_redescends_in_beta() {
        let cfg = InfluenceConfig {
            theta: 1.0,
            sigma: 1.0,
            pairs: vec![(0.2, 0.001), (0.8, 0.001)],
            y_min: 1.0,
            y_max: 6.0,
            y_points: 6,
        };
        let q = QuadratureSpec::default();
        let t = influence_curve_export(&cfg, &q).unwrap();
        // IF(theta) = 0 for every pair
        assert!(t.cell(0, 0).value.abs() < 1e-9);
        assert!(t.cell(0, 1).value.abs() < 1e-9);
        // larger beta redescends faster at the far end (y = 6)
        let last = t.row_labels.len() - 1;
        assert!(t.cell(last, 1).value.abs() < t.cell(last, 0).value.abs());
    }
}
