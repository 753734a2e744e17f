//! Command-line front end: fitting, tuning selection, tests, simulations,
//! efficiency tables, influence-curve export, and the bundled case studies.
//!
//! Exit codes: 0 success, 2 numerical failure, 3 input error.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

use lphidpd::estimation::{
    fit_dpd, fit_log_phi, fit_nonhom_regression, pilot_lms, pilot_min_l2, PilotEstimate,
    RegressionData,
};
use lphidpd::hypothesis::{
    ddt_test, score_test, simple_null_test, two_sample_test, wald_test, ChiBarConfig,
    ConstrainedNull, Restrictions, TestOptions,
};
use lphidpd::kernel::{DpdAlpha, TuningPair};
use lphidpd::models::{Bernoulli, NormalLocation, NormalLocationScale};
use lphidpd::quad::QuadratureSpec;
use lphidpd::tuning::{select_tuning, TuningConfig, VarianceEstimator};
use lphidpd_cli::cases::{run_case_study, CaseName, CaseOptions};
use lphidpd_cli::harness::{
    are_table, influence_curve_export, simulate_mse_table, AreTableConfig, GridCell,
    InfluenceConfig, SimulationConfig, StartRule,
};
use lphidpd_cli::ingest::ingest_csv;
use lphidpd_cli::report::{record_json, OutputFormat};
use lphidpd_cli::{datasets, report};

#[derive(Parser)]
#[command(
    name = "lphidpd",
    about = "Robust minimum-divergence estimation, tuning selection, and tests \
             under a two-parameter logarithmic divergence family"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every stochastic component
    #[arg(long, global = true, default_value_t = 20260810)]
    seed: u64,

    /// Absolute quadrature tolerance (relative tolerance is 10x this)
    #[arg(long, global = true, default_value_t = 1e-9)]
    quad_tol: f64,

    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format for tabular reports
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    /// Column holding the sample
    #[arg(long, default_value = "value")]
    col: String,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator to a univariate sample (normal model)
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// First tuning parameter of the log family (needs --gamma)
        #[arg(long)]
        beta: Option<f64>,
        /// Second tuning parameter of the log family
        #[arg(long)]
        gamma: Option<f64>,
        /// Power-divergence parameter (0 = maximum likelihood)
        #[arg(long)]
        alpha: Option<f64>,
        /// Fix the scale (location-only model)
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Two-stage data-driven tuning-parameter selection (normal model)
    Tune {
        #[command(flatten)]
        data: DataArgs,
        /// Search beta over (0,1) instead of (0, alpha_w)
        #[arg(long)]
        full_beta_range: bool,
        /// Keep the stage-one pilot instead of updating it
        #[arg(long)]
        fixed_pilot: bool,
        /// Use at-model J, K instead of the empirical estimates
        #[arg(long)]
        at_model_variance: bool,
    },
    /// Hypothesis tests
    Test {
        #[command(subcommand)]
        kind: TestKind,
    },
    /// Contaminated-normal location MSE simulation
    Simulate {
        /// Contamination fraction (mass of the N(5,1) component)
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        replications: usize,
        /// Estimator grid: semicolon-separated `beta,gamma` pairs or `alpha:x`
        /// entries, e.g. "0.3,0.01;alpha:0.5;alpha:0"
        #[arg(long, default_value = "0.3,0.01;alpha:0.5")]
        grid: String,
        #[arg(long, value_enum, default_value_t = StartRule::Mle)]
        start: StartRule,
    },
    /// Analytic relative-efficiency table (normal location)
    AreTable {
        /// Comma-separated beta grid
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        betas: String,
        /// Comma-separated gamma grid (0 = power-divergence limit)
        #[arg(long, default_value = "0,0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08")]
        gammas: String,
    },
    /// Influence-curve data export (normal location)
    Influence {
        /// Semicolon-separated `beta,gamma` pairs
        #[arg(long, default_value = "0.1,0.001;0.5,0.001;1.0,0.001")]
        pairs: String,
        /// Grid as min:max:points
        #[arg(long, default_value = "-20:20:401", allow_hyphen_values = true)]
        y_grid: String,
        /// Location of the evaluated model
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        theta: f64,
    },
    /// Run a bundled case study end to end
    CaseStudy {
        #[arg(value_enum)]
        name: CaseName,
        /// Replace the bundled data with this CSV
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        full_beta_range: bool,
        #[arg(long)]
        fixed_pilot: bool,
        #[arg(long)]
        at_model_variance: bool,
    },
    /// List bundled datasets (or dump one as CSV)
    Datasets {
        /// Dataset to dump
        #[arg(long)]
        dump: Option<String>,
    },
}

#[derive(Subcommand)]
enum TestKind {
    /// Simple-null divergence test of theta = theta0 (normal model)
    Simple {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        /// Null location
        #[arg(long, allow_hyphen_values = true)]
        mu0: f64,
        /// Null scale (omit to fix sigma at 1 in a location-only model)
        #[arg(long)]
        sigma0: Option<f64>,
    },
    /// Two-sample divergence test (normal model)
    TwoSample {
        #[arg(long)]
        data1: PathBuf,
        #[arg(long)]
        data2: PathBuf,
        #[arg(long, default_value = "value")]
        col: String,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
    },
    /// Score-form test of theta = theta0 (normal model)
    Score {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu0: f64,
        #[arg(long)]
        sigma0: Option<f64>,
    },
    /// Divergence-difference test for a Bernoulli proportion
    Ddt {
        /// successes (outcome 1)
        #[arg(long)]
        successes: u64,
        /// failures (outcome 0)
        #[arg(long)]
        failures: u64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        /// Null proportion
        #[arg(long)]
        p0: f64,
    },
    /// Wald-type test of mu = mu0 under the normal model
    Wald {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu0: f64,
    },
    /// Robust regression fit at a fixed pair (design columns + response)
    Regression {
        #[arg(long)]
        data: PathBuf,
        /// Response column
        #[arg(long)]
        response: String,
        /// Comma-separated covariate columns (intercept added automatically)
        #[arg(long)]
        covariates: String,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 3000)]
        lms_subsets: usize,
    },
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display()))?,
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<GridCell>> {
    let mut out = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let part = part.trim();
        if let Some(rest) = part.strip_prefix("alpha:") {
            let alpha: f64 = rest.parse().context("bad alpha in grid")?;
            out.push(GridCell::Dpd { alpha });
        } else {
            let (b, g) = part
                .split_once(',')
                .context("grid cells are `beta,gamma` or `alpha:x`")?;
            out.push(GridCell::LogPhi {
                beta: b.trim().parse().context("bad beta in grid")?,
                gamma: g.trim().parse().context("bad gamma in grid")?,
            });
        }
    }
    if out.is_empty() {
        bail!("empty grid");
    }
    Ok(out)
}

fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (b, g) = p.split_once(',').context("pairs are `beta,gamma`")?;
            Ok((b.trim().parse()?, g.trim().parse()?))
        })
        .collect()
}

fn load_column(path: &PathBuf, col: &str) -> Result<Vec<f64>> {
    let ds = ingest_csv(path)?;
    Ok(ds
        .column(col)
        .with_context(|| format!("no column '{col}' in {}", path.display()))?
        .to_vec())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let q = QuadratureSpec {
        abs_tol: cli.quad_tol,
        rel_tol: cli.quad_tol * 10.0,
        ..Default::default()
    };
    q.validate().map_err(|e| anyhow!("{e}"))?;

    match cli.command {
        Command::Fit {
            data,
            beta,
            gamma,
            alpha,
            sigma,
        } => {
            let values = load_column(&data.data, &data.col)?;
            let fit = match (beta, gamma, alpha) {
                (Some(b), Some(g), None) => {
                    let t = TuningPair::new(b, g).map_err(|e| anyhow!("{e}"))?;
                    match sigma {
                        Some(s) => {
                            let model = NormalLocation::new(s).map_err(|e| anyhow!("{e}"))?;
                            let mut v = values.clone();
                            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                            let pilot = PilotEstimate::user(vec![v[v.len() / 2]])
                                .map_err(|e| anyhow!("{e}"))?;
                            fit_log_phi(&values, &model, t, &pilot, &q, &Default::default())
                                .map_err(|e| anyhow!("{e}"))?
                        }
                        None => {
                            let model = NormalLocationScale;
                            let pilot =
                                pilot_min_l2(&values, &model, &q).map_err(|e| anyhow!("{e}"))?;
                            fit_log_phi(&values, &model, t, &pilot, &q, &Default::default())
                                .map_err(|e| anyhow!("{e}"))?
                        }
                    }
                }
                (None, None, Some(a)) => {
                    let al = DpdAlpha::new(a).map_err(|e| anyhow!("{e}"))?;
                    let model = NormalLocationScale;
                    let pilot = pilot_min_l2(&values, &model, &q).map_err(|e| anyhow!("{e}"))?;
                    fit_dpd(&values, &model, al, &pilot, &q, &Default::default())
                        .map_err(|e| anyhow!("{e}"))?
                }
                _ => bail!("give either --beta and --gamma, or --alpha"),
            };
            emit(&cli.out, &format!("{}\n", record_json(&fit)?))
        }
        Command::Tune {
            data,
            full_beta_range,
            fixed_pilot,
            at_model_variance,
        } => {
            let values = load_column(&data.data, &data.col)?;
            let model = NormalLocationScale;
            let pilot = pilot_min_l2(&values, &model, &q).map_err(|e| anyhow!("{e}"))?;
            let mut cfg = TuningConfig::default();
            cfg.full_beta_range = full_beta_range;
            cfg.update_pilot = !fixed_pilot;
            if at_model_variance {
                cfg.variance = VarianceEstimator::AtModel;
            }
            let sel = select_tuning(&values, &model, &pilot, &q, &cfg)
                .map_err(|e| anyhow!("{e}"))?;
            match cli.format {
                OutputFormat::Records => emit(&cli.out, &format!("{}\n", record_json(&sel)?)),
                OutputFormat::Csv => {
                    // the search trace as the spec'd CSV table
                    let mut s = String::from("beta,gamma,bias_sq,variance,total\n");
                    for ((b, g), v) in &sel.search_trace {
                        s.push_str(&format!(
                            "{b},{g},{},{},{}\n",
                            v.bias_sq, v.variance_term, v.total
                        ));
                    }
                    s.push_str(&format!(
                        "_meta,selected,{},{}\n_meta,alpha_w,{},,\n",
                        sel.chosen.beta(),
                        sel.chosen.gamma(),
                        sel.alpha_w.value()
                    ));
                    emit(&cli.out, &s)
                }
            }
        }
        Command::Test { kind } => {
            let mc = ChiBarConfig {
                seed: cli.seed,
                ..Default::default()
            };
            let result = match kind {
                TestKind::Simple {
                    data,
                    beta,
                    gamma,
                    mu0,
                    sigma0,
                } => {
                    let values = load_column(&data.data, &data.col)?;
                    let t = TuningPair::new(beta, gamma).map_err(|e| anyhow!("{e}"))?;
                    match sigma0 {
                        Some(s0) => simple_null_test(
                            &values,
                            &NormalLocationScale,
                            &[mu0, s0],
                            t,
                            &q,
                            mc,
                            &TestOptions::default(),
                        ),
                        None => simple_null_test(
                            &values,
                            &NormalLocation::new(1.0).map_err(|e| anyhow!("{e}"))?,
                            &[mu0],
                            t,
                            &q,
                            mc,
                            &TestOptions::default(),
                        ),
                    }
                    .map_err(|e| anyhow!("{e}"))?
                }
                TestKind::TwoSample {
                    data1,
                    data2,
                    col,
                    beta,
                    gamma,
                } => {
                    let a = load_column(&data1, &col)?;
                    let b = load_column(&data2, &col)?;
                    let t = TuningPair::new(beta, gamma).map_err(|e| anyhow!("{e}"))?;
                    two_sample_test(&a, &b, &NormalLocationScale, t, &q, mc, &TestOptions::default())
                        .map_err(|e| anyhow!("{e}"))?
                }
                TestKind::Score {
                    data,
                    beta,
                    gamma,
                    mu0,
                    sigma0,
                } => {
                    let values = load_column(&data.data, &data.col)?;
                    let t = TuningPair::new(beta, gamma).map_err(|e| anyhow!("{e}"))?;
                    match sigma0 {
                        Some(s0) => {
                            score_test(&values, &NormalLocationScale, &[mu0, s0], t, &q, mc)
                        }
                        None => score_test(
                            &values,
                            &NormalLocation::new(1.0).map_err(|e| anyhow!("{e}"))?,
                            &[mu0],
                            t,
                            &q,
                            mc,
                        ),
                    }
                    .map_err(|e| anyhow!("{e}"))?
                }
                TestKind::Ddt {
                    successes,
                    failures,
                    beta,
                    gamma,
                    p0,
                } => {
                    let t = TuningPair::new(beta, gamma).map_err(|e| anyhow!("{e}"))?;
                    ddt_test(
                        &[failures, successes],
                        &Bernoulli,
                        &ConstrainedNull::Simple(vec![p0]),
                        t,
                        &q,
                        mc,
                    )
                    .map_err(|e| anyhow!("{e}"))?
                }
                TestKind::Wald {
                    data,
                    beta,
                    gamma,
                    mu0,
                } => {
                    let values = load_column(&data.data, &data.col)?;
                    let t = TuningPair::new(beta, gamma).map_err(|e| anyhow!("{e}"))?;
                    let restrictions = Restrictions {
                        r: Box::new(move |th: &[f64]| {
                            nalgebra::DVector::from_vec(vec![th[0] - mu0])
                        }),
                        jacobian: None,
                    };
                    wald_test(
                        &values,
                        &NormalLocationScale,
                        &restrictions,
                        t,
                        &q,
                        &TestOptions::default(),
                    )
                    .map_err(|e| anyhow!("{e}"))?
                }
                TestKind::Regression {
                    data,
                    response,
                    covariates,
                    beta,
                    gamma,
                    lms_subsets,
                } => {
                    let ds = ingest_csv(&data)?;
                    let y = ds
                        .column(&response)
                        .with_context(|| format!("no column '{response}'"))?
                        .to_vec();
                    let names: Vec<&str> = covariates.split(',').map(|s| s.trim()).collect();
                    let n = y.len();
                    let mut design = nalgebra::DMatrix::zeros(n, names.len() + 1);
                    for i in 0..n {
                        design[(i, 0)] = 1.0;
                    }
                    for (j, c) in names.iter().enumerate() {
                        let col = ds
                            .column(c)
                            .with_context(|| format!("no column '{c}'"))?;
                        for i in 0..n {
                            design[(i, j + 1)] = col[i];
                        }
                    }
                    let rd = RegressionData::new(design, y).map_err(|e| anyhow!("{e}"))?;
                    let pilot =
                        pilot_lms(&rd, lms_subsets, cli.seed).map_err(|e| anyhow!("{e}"))?;
                    let t = TuningPair::new(beta, gamma).map_err(|e| anyhow!("{e}"))?;
                    let fit = fit_nonhom_regression(&rd, t, &pilot, &q, &Default::default())
                        .map_err(|e| anyhow!("{e}"))?;
                    return emit(&cli.out, &format!("{}\n", record_json(&fit)?));
                }
            };
            emit(&cli.out, &format!("{}\n", record_json(&result)?))
        }
        Command::Simulate {
            eps,
            n,
            replications,
            grid,
            start,
        } => {
            let cfg = SimulationConfig {
                eps,
                contam_mean: 5.0,
                contam_sd: 1.0,
                n,
                replications,
                seed: cli.seed,
                grid: parse_grid(&grid)?,
                target_mu: 0.0,
                start,
            };
            let table = simulate_mse_table(&cfg, &q)?;
            emit(&cli.out, &table.render(cli.format)?)
        }
        Command::AreTable { betas, gammas } => {
            let cfg = AreTableConfig {
                beta_grid: betas
                    .split(',')
                    .map(|s| s.trim().parse().context("bad beta"))
                    .collect::<Result<_>>()?,
                gamma_grid: gammas
                    .split(',')
                    .map(|s| s.trim().parse().context("bad gamma"))
                    .collect::<Result<_>>()?,
            };
            let table = are_table(&cfg, &q)?;
            emit(&cli.out, &table.render(cli.format)?)
        }
        Command::Influence {
            pairs,
            y_grid,
            theta,
        } => {
            let parts: Vec<&str> = y_grid.split(':').collect();
            if parts.len() != 3 {
                bail!("--y-grid must be min:max:points");
            }
            let cfg = InfluenceConfig {
                theta,
                sigma: 1.0,
                pairs: parse_pairs(&pairs)?,
                y_min: parts[0].parse().context("bad y-grid min")?,
                y_max: parts[1].parse().context("bad y-grid max")?,
                y_points: parts[2].parse().context("bad y-grid points")?,
            };
            let table = influence_curve_export(&cfg, &q)?;
            emit(&cli.out, &table.render(cli.format)?)
        }
        Command::CaseStudy {
            name,
            data,
            full_beta_range,
            fixed_pilot,
            at_model_variance,
        } => {
            let opts = CaseOptions {
                seed: cli.seed,
                quad: q,
                data_path: data,
                full_beta_range,
                fixed_pilot,
                at_model_variance,
                lms_subsets: 3000,
            };
            let report = run_case_study(name, &opts)?;
            emit(&cli.out, &format!("{}\n", record_json(&report)?))
        }
        Command::Datasets { dump } => match dump {
            Some(name) => {
                let ds = datasets::load(&name)?;
                let mut s = ds.column_names().join(",");
                s.push('\n');
                for i in 0..ds.rows() {
                    let row: Vec<String> = ds
                        .columns
                        .iter()
                        .map(|(_, v)| report::record_json(&v[i]).unwrap_or_default())
                        .collect();
                    s.push_str(&row.join(","));
                    s.push('\n');
                }
                emit(&cli.out, &s)
            }
            None => {
                let mut s = String::from("bundled datasets:\n");
                for n in datasets::NAMES {
                    let ds = datasets::load(n)?;
                    s.push_str(&format!(
                        "  {n}: {} rows, columns [{}]\n",
                        ds.rows(),
                        ds.column_names().join(", ")
                    ));
                }
                s.push_str("\nSee data/PROVENANCE.md for sources.\n");
                emit(&cli.out, &s)
            }
        },
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            // input-shaped errors exit 3, numerical failures exit 2
            let msg = format!("{e:#}");
            let code = if msg.contains("quadrature")
                || msg.contains("singular")
                || msg.contains("fit failed")
                || msg.contains("converge")
            {
                2
            } else {
                3
            };
            std::process::exit(code);
        }
    }
}
