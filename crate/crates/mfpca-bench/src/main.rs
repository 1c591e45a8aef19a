//! Command-line entry point: simulate datasets, fit pathways, run replicated
//! benchmarks, and print geometry diagnostics.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mfpca::simulation::{replication_rng, RngPurpose};
use mfpca::{
    check_adjoint, inertia_report, interpolate_dataset, standardization_weights, write_dataset,
    write_kl_truth, write_model, FeatureWeights, MultivariateFunctionalDataset,
    StandardizationScheme,
};
use mfpca_bench::config::{load_config, parse_pathways, ScenarioConfig};
use mfpca_bench::runner::{
    replication_data, replication_model, run_scenario, write_records, RunOptions,
};
use mfpca_bench::summary::{summarize, write_summary};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "mfpca-bench",
    version,
    about = "Benchmark and diagnostics harness for multivariate functional PCA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scenario selection shared by the subcommands.
#[derive(Args)]
struct ConfigArgs {
    /// Plain-text key=value scenario file (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated pathway override, e.g. `gram,cov,basis`.
    #[arg(long)]
    pathways: Option<String>,
    /// Replication-count override.
    #[arg(long)]
    replications: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        apply_overrides(&mut cfg, self)?;
        Ok(cfg)
    }
}

fn apply_overrides(cfg: &mut ScenarioConfig, args: &ConfigArgs) -> Result<()> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &args.pathways {
        cfg.pathways = parse_pathways(p)?;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()
}

#[derive(Subcommand)]
enum Command {
    /// Generate one replication's dataset (after the regime's degradation)
    /// plus its ground-truth spectrum.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Replication index to generate.
        #[arg(long, default_value_t = 0)]
        replication: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the configured pathways once and export the models.
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Existing dataset directory; a fresh simulation is used when
        /// omitted. External data uses a B-spline basis for the basis
        /// pathway instead of the generating one.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory (one subdirectory per pathway).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run replicated scenarios and write records.csv and summary.csv.
    Bench {
        /// Scenario files; repeat the flag to chain scenarios.
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Master seed override for every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated pathway override.
        #[arg(long)]
        pathways: Option<String>,
        /// Replication-count override.
        #[arg(long)]
        replications: Option<usize>,
        /// Worker threads for the replication pool (0 = one per core).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Run replications sequentially so timings never contend.
        #[arg(long)]
        pin_timing: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the cloud-geometry diagnostics (inertia identities, adjoint
    /// residual) of a dataset.
    Diagnose {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Existing dataset directory; a fresh simulation is used when
        /// omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Feature-standardization scheme for the weighted totals
        /// (integrated-variance, pointwise-sd, gamma-norm).
        #[arg(long)]
        standardize: Option<String>,
        /// Random pairs for the adjoint identity check.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Optional directory for the CSV form of the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn simulated_dataset(
    cfg: &ScenarioConfig,
    replication: usize,
) -> Result<(mfpca::simulation::KlModel, MultivariateFunctionalDataset)> {
    let model = replication_model(cfg, replication)?;
    let (_, degraded) = replication_data(cfg, &model, replication)?;
    Ok((model, degraded))
}

fn load_dataset(dir: &Path) -> Result<MultivariateFunctionalDataset> {
    mfpca::read_dataset(dir).with_context(|| format!("reading dataset from {}", dir.display()))
}

fn cmd_simulate(cfg: &ScenarioConfig, replication: usize, out: &Path) -> Result<()> {
    let (model, ds) = simulated_dataset(cfg, replication)?;
    write_dataset(&ds, out)?;
    write_kl_truth(&model, &out.join("kl_model.csv"))?;
    println!(
        "wrote scenario `{}` replication {replication}: {} observations, {} features -> {}",
        cfg.scenario_id(),
        ds.n_obs(),
        ds.n_features(),
        out.display()
    );
    Ok(())
}

fn cmd_fit(cfg: &ScenarioConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    use mfpca_bench::config::PathwayChoice;
    use std::time::Instant;

    let (generating, ds) = match data {
        Some(dir) => (None, load_dataset(dir)?),
        None => {
            let (model, ds) = simulated_dataset(cfg, 0)?;
            (Some(model), ds)
        }
    };
    let selector = mfpca::ComponentSelector::Count(cfg.k_retain);
    for &pathway in &cfg.pathways {
        let start = Instant::now();
        let model = match pathway {
            PathwayChoice::Gram => {
                let options = mfpca::GramOptions {
                    preprocess: default_preprocess(cfg, &ds, false),
                    noise_variance: None,
                };
                mfpca::gram_mfpca(&ds, None, selector, &options)?
            }
            PathwayChoice::Cov => {
                let options = mfpca::CovOptions {
                    preprocess: default_preprocess(cfg, &ds, false),
                    noise_variance: None,
                    divisor: mfpca::CovDivisor::NMinusOne,
                };
                mfpca::cov_mfpca(&ds, &cfg.k_univ, selector, &options)?
            }
            PathwayChoice::Basis => {
                let dense = match default_preprocess(cfg, &ds, true) {
                    mfpca::Preprocess::None => ds.clone(),
                    mfpca::Preprocess::LinearInterpolate => interpolate_dataset(&ds)?,
                    mfpca::Preprocess::Psplines { nbasis } => {
                        mfpca::presmooth_dataset(&ds, &nbasis, 2, &[])?
                    }
                };
                let basis = match &generating {
                    Some(model) => mfpca::BasisSystem::from_kl_model(model)?,
                    None => {
                        let nbasis = bspline_nbasis(&dense);
                        mfpca::BasisSystem::bspline(dense.grids(), &nbasis)?
                    }
                };
                mfpca::basis_mfpca(&dense, &basis, mfpca::BasisSide::Gram, selector)?.model
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let dir = out.join(pathway.tag());
        write_model(&model, &dir)?;
        let head: Vec<String> = model
            .eigenvalues
            .iter()
            .take(4)
            .map(|l| format!("{l:.5}"))
            .collect();
        println!(
            "{}: {} components in {elapsed:.3}s, leading eigenvalues [{}] -> {}",
            pathway.tag(),
            model.n_components(),
            head.join(", "),
            dir.display()
        );
    }
    Ok(())
}

/// Preprocessing for ad-hoc fits: masked data is interpolated (smoothed for
/// the basis pathway); dense data follows the configured regime.
fn default_preprocess(
    cfg: &ScenarioConfig,
    ds: &MultivariateFunctionalDataset,
    for_basis: bool,
) -> mfpca::Preprocess {
    let nbasis = bspline_nbasis(ds);
    if !ds.is_dense() {
        if for_basis {
            mfpca::Preprocess::Psplines { nbasis }
        } else {
            mfpca::Preprocess::LinearInterpolate
        }
    } else if cfg.regime == mfpca_bench::Regime::Noisy {
        mfpca::Preprocess::Psplines { nbasis }
    } else {
        mfpca::Preprocess::None
    }
}

fn axis_nbasis(len: usize) -> usize {
    (len / 2).clamp(5, 15).min(len)
}

fn bspline_nbasis(ds: &MultivariateFunctionalDataset) -> Vec<Vec<usize>> {
    (0..ds.n_features())
        .map(|p| ds.grid(p).shape().iter().map(|&m| axis_nbasis(m)).collect())
        .collect()
}

fn cmd_bench(
    configs: &[PathBuf],
    overrides: &ConfigArgs,
    opts: &RunOptions,
    out: &Path,
) -> Result<()> {
    let mut scenarios = Vec::new();
    if configs.is_empty() {
        let mut cfg = ScenarioConfig::default();
        apply_overrides(&mut cfg, overrides)?;
        scenarios.push(cfg);
    } else {
        for path in configs {
            let mut cfg = load_config(Some(path))?;
            apply_overrides(&mut cfg, overrides)?;
            scenarios.push(cfg);
        }
    }
    let (k_retain, k_sim) = (scenarios[0].k_retain, scenarios[0].k_sim);
    if scenarios
        .iter()
        .any(|c| c.k_retain != k_retain || c.k_sim != k_sim)
    {
        bail!("chained scenarios must share k_retain and k_sim so records.csv stays rectangular");
    }
    let mut records = Vec::new();
    for cfg in &scenarios {
        eprintln!(
            "running scenario `{}`: {} replications, pathways {:?}",
            cfg.scenario_id(),
            cfg.replications,
            cfg.pathways.iter().map(|p| p.tag()).collect::<Vec<_>>()
        );
        records.extend(run_scenario(cfg, opts)?);
    }
    write_records(&records, k_retain, k_sim, out)?;
    let rows = summarize(&records);
    write_summary(&rows, out)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    println!(
        "wrote {} records ({failed} failed) and {} summary rows -> {}",
        records.len(),
        rows.len(),
        out.display()
    );
    Ok(())
}

fn cmd_diagnose(
    cfg: &ScenarioConfig,
    data: Option<&Path>,
    standardize: Option<&str>,
    trials: usize,
    out: Option<&Path>,
) -> Result<()> {
    let ds = match data {
        Some(dir) => load_dataset(dir)?,
        None => simulated_dataset(cfg, 0)?.1,
    };
    let ds = if ds.is_dense() {
        ds
    } else {
        eprintln!("dataset has missing values; interpolating before the diagnostics");
        interpolate_dataset(&ds)?
    };
    let fw: Option<FeatureWeights> = match standardize {
        None => None,
        Some(tag) => {
            let scheme = match tag {
                "integrated-variance" => StandardizationScheme::IntegratedVariance,
                "pointwise-sd" => StandardizationScheme::PointwiseSd,
                "gamma-norm" => StandardizationScheme::GammaNorm,
                other => bail!(
                    "unknown scheme `{other}` (integrated-variance, pointwise-sd, gamma-norm)"
                ),
            };
            Some(standardization_weights(&ds, scheme)?)
        }
    };
    let summary = inertia_report(&ds, fw.as_ref())?;
    let mut rng = replication_rng(cfg.seed, 0, RngPurpose::Scores);
    let residual = check_adjoint(&ds, trials, &mut rng)?;
    let text = mfpca::render_cloud_summary(&summary);
    print!("{text}");
    println!("adjoint identity residual over {trials} random pairs: {residual:.3e}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("cloud_summary.csv"), mfpca::cloud_summary_csv(&summary))?;
        let mut full = text;
        full.push_str(&format!(
            "adjoint identity residual over {trials} random pairs: {residual:.3e}\n"
        ));
        std::fs::write(dir.join("diagnostics.txt"), full)?;
        println!("wrote cloud_summary.csv and diagnostics.txt -> {}", dir.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            cfg,
            replication,
            out,
        } => cmd_simulate(&cfg.resolve()?, *replication, out),
        Command::Fit { cfg, data, out } => cmd_fit(&cfg.resolve()?, data.as_deref(), out),
        Command::Bench {
            config,
            seed,
            pathways,
            replications,
            threads,
            pin_timing,
            out,
        } => {
            let overrides = ConfigArgs {
                config: None,
                seed: *seed,
                pathways: pathways.clone(),
                replications: *replications,
            };
            let opts = RunOptions {
                threads: *threads,
                pin_timing: *pin_timing,
            };
            cmd_bench(config, &overrides, &opts, out)
        }
        Command::Diagnose {
            cfg,
            data,
            standardize,
            trials,
            out,
        } => cmd_diagnose(
            &cfg.resolve()?,
            data.as_deref(),
            standardize.as_deref(),
            *trials,
            out.as_deref(),
        ),
    }
}
