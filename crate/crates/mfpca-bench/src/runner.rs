//! Scenario execution: simulate, degrade, preprocess, fit each pathway,
//! score against the generating truth, and time the fits.

use crate::config::{PathwayChoice, Regime, ScenarioConfig};
use anyhow::{Context, Result};
use mfpca::simulation::{
    build_kl_model, replication_rng, AlphaRule, KlModel, NoiseSpec, RngPurpose, SparsityRegime,
};
use mfpca::{
    basis_mfpca, cov_mfpca, gram_mfpca, ise, mrse, presmooth_dataset, reconstruct, rse,
    BasisSide, BasisSystem, ComponentSelector, CovDivisor, CovOptions, DomainGrid, GramOptions,
    MfpcaModel, MultivariateFunctionalDataset, Preprocess,
};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

/// Execution knobs that are not part of the scenario itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for the replication pool; 0 uses the rayon default.
    pub threads: usize,
    /// Run replications sequentially so timings never contend for cores.
    pub pin_timing: bool,
}

/// One pathway's outcome on one replication.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario: String,
    pub n: usize,
    pub m1: String,
    pub m2: usize,
    pub regime: String,
    pub replication: usize,
    pub pathway: String,
    pub seed: u64,
    /// `ok`, or a short sanitized error message for failed replications.
    pub status: String,
    /// Wall-clock seconds of the measured fit (NaN when failed).
    pub fit_seconds: f64,
    /// Components the fitted model retains (0 when failed).
    pub k_selected: usize,
    /// Mean reconstruction error against the clean simulated curves.
    pub mrse: f64,
    /// Per-component relative eigenvalue errors, `k_retain` entries.
    pub rse: Vec<f64>,
    /// Per-component integrated squared eigenfunction errors.
    pub ise: Vec<f64>,
    /// Mixing weights drawn for this replication's generating model.
    pub alphas: Vec<f64>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

fn blank_record(cfg: &ScenarioConfig, rep: usize, pathway: PathwayChoice) -> RunRecord {
    RunRecord {
        scenario: cfg.scenario_id(),
        n: cfg.n,
        m1: cfg.m1_string(),
        m2: cfg.m2,
        regime: cfg.regime.tag().to_string(),
        replication: rep,
        pathway: pathway.tag().to_string(),
        seed: cfg.seed,
        status: "ok".to_string(),
        fit_seconds: f64::NAN,
        k_selected: 0,
        mrse: f64::NAN,
        rse: Vec::new(),
        ise: Vec::new(),
        alphas: Vec::new(),
    }
}

fn default_nbasis_axis(len: usize) -> usize {
    (len / 2).clamp(5, 15).min(len)
}

/// Per-feature per-axis P-spline basis sizes for presmoothing.
fn nbasis_for(cfg: &ScenarioConfig) -> Vec<Vec<usize>> {
    let f1 = match cfg.nbasis1 {
        Some((a, b)) => vec![a, b],
        None => vec![default_nbasis_axis(cfg.m1.0), default_nbasis_axis(cfg.m1.1)],
    };
    let f2 = match cfg.nbasis2 {
        Some(k) => vec![k],
        None => vec![default_nbasis_axis(cfg.m2)],
    };
    vec![f1, f2]
}

/// Preprocessing each pathway applies to the degraded data: raw points when
/// dense, P-spline presmoothing when noisy, and in the sparse regimes linear
/// interpolation for the Gram and covariance pathways but P-spline smoothing
/// for the basis pathway (whose coefficient fit needs smooth dense curves).
fn preprocess_for(regime: Regime, pathway: PathwayChoice, nbasis: &[Vec<usize>]) -> Preprocess {
    match (regime, pathway) {
        (Regime::Dense, _) => Preprocess::None,
        (Regime::Noisy, _) => Preprocess::Psplines {
            nbasis: nbasis.to_vec(),
        },
        (Regime::SparseMedium | Regime::SparseHigh, PathwayChoice::Basis) => {
            Preprocess::Psplines {
                nbasis: nbasis.to_vec(),
            }
        }
        (Regime::SparseMedium | Regime::SparseHigh, _) => Preprocess::LinearInterpolate,
    }
}

/// The simulation domains are fixed by the study design; configs only choose
/// the number of grid points.
pub fn scenario_grids(cfg: &ScenarioConfig) -> Result<(Arc<DomainGrid>, Arc<DomainGrid>)> {
    let rect = Arc::new(DomainGrid::equidistant(
        &[(0.0, 1.0), (0.0, 0.5)],
        &[cfg.m1.0, cfg.m1.1],
    )?);
    let interval = Arc::new(DomainGrid::equidistant(&[(-1.0, 1.0)], &[cfg.m2])?);
    Ok((rect, interval))
}

/// Builds the generating model for one replication.
pub fn replication_model(cfg: &ScenarioConfig, rep: usize) -> Result<KlModel> {
    let (rect, interval) = scenario_grids(cfg)?;
    let mut rng = replication_rng(cfg.seed, rep as u64, RngPurpose::Alphas);
    Ok(build_kl_model(
        cfg.k_sim,
        rect,
        interval,
        &AlphaRule::default(),
        &mut rng,
    )?)
}

/// Simulates one replication's clean dataset and its degraded version.
pub fn replication_data(
    cfg: &ScenarioConfig,
    model: &KlModel,
    rep: usize,
) -> Result<(MultivariateFunctionalDataset, MultivariateFunctionalDataset)> {
    let mut srng = replication_rng(cfg.seed, rep as u64, RngPurpose::Scores);
    let (clean, _) = model.simulate(cfg.n, &mut srng)?;
    let degraded = match cfg.regime {
        Regime::Dense => clean.clone(),
        Regime::Noisy => {
            let spec = NoiseSpec {
                sigma2: cfg.sigma2.clone(),
            };
            let mut nrng = replication_rng(cfg.seed, rep as u64, RngPurpose::Noise);
            mfpca::simulation::add_noise(&clean, &spec, &mut nrng)?
        }
        Regime::SparseMedium | Regime::SparseHigh => {
            let regime = if cfg.regime == Regime::SparseMedium {
                SparsityRegime::Medium
            } else {
                SparsityRegime::High
            };
            let mut mrng = replication_rng(cfg.seed, rep as u64, RngPurpose::Masks);
            mfpca::simulation::sparsify(&clean, regime, &mut mrng)?
        }
    };
    Ok((clean, degraded))
}

/// Fits one pathway on the degraded data; the whole call is the timed region.
fn fit_pathway(
    pathway: PathwayChoice,
    ds: &MultivariateFunctionalDataset,
    cfg: &ScenarioConfig,
    basis: Option<&BasisSystem>,
    nbasis: &[Vec<usize>],
) -> mfpca::Result<MfpcaModel> {
    let selector = ComponentSelector::Count(cfg.k_retain);
    let preprocess = preprocess_for(cfg.regime, pathway, nbasis);
    match pathway {
        PathwayChoice::Gram => gram_mfpca(
            ds,
            None,
            selector,
            &GramOptions {
                preprocess,
                noise_variance: None,
            },
        ),
        PathwayChoice::Cov => cov_mfpca(
            ds,
            &cfg.k_univ,
            selector,
            &CovOptions {
                preprocess,
                noise_variance: None,
                divisor: CovDivisor::NMinusOne,
            },
        ),
        PathwayChoice::Basis => {
            let smoothed;
            let input = match &preprocess {
                Preprocess::None => ds,
                Preprocess::Psplines { nbasis } => {
                    smoothed = presmooth_dataset(ds, nbasis, 2, &[])?;
                    &smoothed
                }
                Preprocess::LinearInterpolate => {
                    smoothed = mfpca::interpolate_dataset(ds)?;
                    &smoothed
                }
            };
            let basis = basis.expect("basis system provided for the basis pathway");
            Ok(basis_mfpca(input, basis, BasisSide::Gram, selector)?.model)
        }
    }
}

/// Runs one replication end to end, producing one record per pathway.
/// Failures (for example infeasible sparsification) become records with a
/// non-`ok` status instead of crashing the scenario.
fn run_one(cfg: &ScenarioConfig, rep: usize) -> Vec<RunRecord> {
    let fail_all = |msg: &str| -> Vec<RunRecord> {
        cfg.pathways
            .iter()
            .map(|&p| {
                let mut r = blank_record(cfg, rep, p);
                r.status = sanitize(msg);
                r
            })
            .collect()
    };
    let model = match replication_model(cfg, rep) {
        Ok(m) => m,
        Err(e) => return fail_all(&e.to_string()),
    };
    let (clean, degraded) = match replication_data(cfg, &model, rep) {
        Ok(pair) => pair,
        Err(e) => return fail_all(&e.to_string()),
    };
    // only the basis pathway needs the generating basis; a failure to build
    // it must not fail the other pathways
    let basis: Option<mfpca::Result<BasisSystem>> = cfg
        .pathways
        .contains(&PathwayChoice::Basis)
        .then(|| BasisSystem::from_kl_model(&model));
    let nbasis = nbasis_for(cfg);
    let lambda_true = &model.eigenvalues()[..cfg.k_retain];
    let phi_true: Vec<_> = (0..cfg.k_retain).map(|k| model.eigenfunction(k)).collect();

    let mut records = Vec::with_capacity(cfg.pathways.len());
    for &pathway in &cfg.pathways {
        let mut record = blank_record(cfg, rep, pathway);
        record.alphas = model.alphas().to_vec();
        let basis_ref = if pathway == PathwayChoice::Basis {
            match basis.as_ref().expect("built for the basis pathway") {
                Ok(b) => Some(b),
                Err(e) => {
                    record.status = sanitize(&e.to_string());
                    records.push(record);
                    continue;
                }
            }
        } else {
            None
        };
        let outcome = (|| -> mfpca::Result<()> {
            // untimed warmup, then the measured fit on the same inputs
            fit_pathway(pathway, &degraded, cfg, basis_ref, &nbasis)?;
            let start = Instant::now();
            let fitted = fit_pathway(pathway, &degraded, cfg, basis_ref, &nbasis)?;
            record.fit_seconds = start.elapsed().as_secs_f64();
            record.k_selected = fitted.n_components();

            let mut est = fitted.eigenvalues.clone();
            est.resize(cfg.k_retain, 0.0);
            record.rse = rse(lambda_true, &est)?;
            record.ise = (0..cfg.k_retain)
                .map(|k| {
                    if k < fitted.n_components() {
                        ise(&phi_true[k], &fitted.eigenfunctions[k], None)
                    } else {
                        // a missing component scores as the zero estimate
                        Ok(1.0)
                    }
                })
                .collect::<mfpca::Result<_>>()?;
            let k_use = cfg.k_retain.min(fitted.n_components());
            let recon = reconstruct(&fitted, k_use)?;
            record.mrse = mrse(&clean, &recon, None)?;
            Ok(())
        })();
        if let Err(e) = outcome {
            record.status = sanitize(&e.to_string());
            record.fit_seconds = f64::NAN;
            record.k_selected = 0;
            record.mrse = f64::NAN;
            record.rse.clear();
            record.ise.clear();
        }
        records.push(record);
    }
    records
}

/// Runs every replication of a scenario. Records come back ordered by
/// replication, then by the configured pathway order, and are identical for
/// identical seeds regardless of the thread count (timings aside).
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let reps: Vec<usize> = (0..cfg.replications).collect();
    let nested: Vec<Vec<RunRecord>> = if opts.pin_timing {
        reps.iter().map(|&r| run_one(cfg, r)).collect()
    } else if opts.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .context("building the replication pool")?;
        pool.install(|| reps.par_iter().map(|&r| run_one(cfg, r)).collect())
    } else {
        reps.par_iter().map(|&r| run_one(cfg, r)).collect()
    };
    Ok(nested.into_iter().flatten().collect())
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// The fixed `records.csv` header for a given retain/simulation size.
pub fn records_header(k_retain: usize, k_sim: usize) -> String {
    let mut h = String::from(
        "scenario,n,m1,m2,regime,replication,pathway,seed,status,fit_seconds,k_selected,mrse",
    );
    for k in 1..=k_retain {
        let _ = write!(h, ",rse_{k}");
    }
    for k in 1..=k_retain {
        let _ = write!(h, ",ise_{k}");
    }
    for k in 1..=k_sim {
        let _ = write!(h, ",alpha_{k}");
    }
    h
}

/// Renders records as CSV with the documented fixed header. Failed
/// replications leave their metric cells empty.
pub fn records_csv(records: &[RunRecord], k_retain: usize, k_sim: usize) -> String {
    let mut out = records_header(k_retain, k_sim);
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.n,
            r.m1,
            r.m2,
            r.regime,
            r.replication,
            r.pathway,
            r.seed,
            r.status,
            fmt_opt(r.fit_seconds),
            if r.status == "ok" {
                r.k_selected.to_string()
            } else {
                String::new()
            },
            fmt_opt(r.mrse),
        );
        for k in 0..k_retain {
            let _ = write!(out, ",{}", r.rse.get(k).map_or(String::new(), |&v| format!("{v}")));
        }
        for k in 0..k_retain {
            let _ = write!(out, ",{}", r.ise.get(k).map_or(String::new(), |&v| format!("{v}")));
        }
        for k in 0..k_sim {
            let _ = write!(
                out,
                ",{}",
                r.alphas.get(k).map_or(String::new(), |&v| format!("{v}"))
            );
        }
        out.push('\n');
    }
    out
}

/// Writes `records.csv` into `dir`.
pub fn write_records(
    records: &[RunRecord],
    k_retain: usize,
    k_sim: usize,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("records.csv"), records_csv(records, k_retain, k_sim))?;
    Ok(())
}
