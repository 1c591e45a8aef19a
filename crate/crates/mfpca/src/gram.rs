//! Gram-matrix pathway: eigencomponents of the covariance operator obtained
//! by diagonalizing the `N x N` matrix of inner products between centered
//! observations.
//!
//! With Gram matrix `M_nm = sqrt(pi_n pi_m) <X_n - mu, X_m - mu>_H` and
//! eigenpairs `(l_k, u_k)`, the covariance operator has the same nonzero
//! eigenvalues `lambda_k = l_k`, eigenfunctions
//! `phi_k = l_k^{-1/2} sum_n sqrt(pi_n) [u_k]_n (X_n - mu)`, and scores
//! `c_nk = sqrt(l_k / pi_n) [u_k]_n`. Under uniform weights `pi_n = 1/N`
//! the scores reduce to `sqrt(N l_k) [u_k]_n`. The cost is driven by the
//! number of observations, not by the total grid size, which makes this the
//! cheap route when curves are densely sampled but few.
//!
//! The resulting [`MfpcaModel`] is shared with the covariance pathway
//! ([`crate::cov`]) and the basis-expansion pathway ([`crate::basis`]).

use crate::error::{MfpcaError, Result};
use crate::fdata::{FeatureWeights, MultiGridFn, MultivariateFunctionalDataset};
use crate::moments::{gram_estimate, mean_estimate, GramMatrix};
use crate::{linalg, smoothing};
use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric PSD matrix with negative eigenvalues
/// clamped to zero.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Eigenvalues, nonincreasing, clamped at zero.
    pub values: Array1<f64>,
    /// Matching orthonormal eigenvectors as columns.
    pub vectors: Array2<f64>,
    /// Number of eigenvalues above the numerical-rank threshold
    /// `N * machine_epsilon * l_1`.
    pub rank: usize,
    /// Total magnitude of clamped negative eigenvalues (e.g. after a noise
    /// correction pushed the matrix off PSD).
    pub clamped_mass: f64,
}

/// Full symmetric eigendecomposition of a Gram matrix, eigenvalues sorted
/// nonincreasing and negatives clamped to zero.
pub fn symmetric_eigen(m: &GramMatrix) -> Result<EigenSystem> {
    let (mut values, vectors) = linalg::sym_eigen_desc(&m.matrix)?;
    let mut clamped_mass = 0.0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            clamped_mass += -*v;
            *v = 0.0;
        }
    }
    let n = values.len();
    let eps_rank = n as f64 * f64::EPSILON * values.get(0).copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&v| v > eps_rank).count();
    Ok(EigenSystem {
        values,
        vectors,
        rank,
        clamped_mass,
    })
}

/// Which route produced a model; informational only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pathway {
    /// Diagonalization of the inner-product (Gram) matrix.
    Gram,
    /// Univariate covariance operators plus the stacked-score eigenproblem.
    Covariance,
    /// Basis-expansion coefficients with either dual eigenproblem.
    Basis,
}

/// Estimated eigencomponents of a multivariate functional sample.
#[derive(Debug, Clone)]
pub struct MfpcaModel {
    /// Route that produced the model.
    pub pathway: Pathway,
    /// Estimated mean function.
    pub mean: MultiGridFn,
    /// Leading eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenfunctions, unit norm in `H`.
    pub eigenfunctions: Vec<MultiGridFn>,
    /// Scores, `N x K`; column `k` has pi-weighted mean zero and pi-weighted
    /// variance `lambda_k` on the data the model was fit to.
    pub scores: Array2<f64>,
    /// Fraction of total spectrum mass captured by each retained component.
    pub variance_fraction: Vec<f64>,
    /// Observation weights the model was fit with.
    pub obs_weights: Vec<f64>,
}

impl MfpcaModel {
    /// Number of retained components.
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// How many components to keep.
#[derive(Debug, Clone, Copy)]
pub enum ComponentSelector {
    /// Keep exactly this many (bounded by the numerical rank).
    Count(usize),
    /// Keep the smallest number whose cumulative variance fraction reaches
    /// the threshold.
    VarianceFraction(f64),
}

/// Smallest `K` whose leading eigenvalues sum to at least `threshold` times
/// the total; `0` when the total is zero.
pub fn select_components(values: &[f64], threshold: f64) -> usize {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if acc / total >= threshold {
            return i + 1;
        }
    }
    values.len()
}

impl ComponentSelector {
    /// Resolves the selector against a computed spectrum, capping at the
    /// numerical rank (with a warning when the request exceeds it).
    pub fn resolve(&self, values: &[f64], rank: usize) -> usize {
        match *self {
            ComponentSelector::Count(k) => {
                if k > rank {
                    log::warn!("requested {k} components but numerical rank is {rank}; truncating");
                    rank
                } else {
                    k
                }
            }
            ComponentSelector::VarianceFraction(f) => select_components(values, f).min(rank),
        }
    }
}

/// Optional preparation applied to the dataset before moment estimation.
#[derive(Debug, Clone)]
pub enum Preprocess {
    /// Use the data as given (must already be dense).
    None,
    /// Fill masked points by per-curve linear interpolation.
    LinearInterpolate,
    /// Replace every curve by a penalized B-spline fit with the given number
    /// of basis functions per feature and axis (GCV-selected penalty).
    Psplines {
        /// Basis sizes per feature, one entry per axis.
        nbasis: Vec<Vec<usize>>,
    },
}

/// Options for [`gram_mfpca`].
#[derive(Debug, Clone)]
pub struct GramOptions {
    /// Dataset preparation step.
    pub preprocess: Preprocess,
    /// Per-feature measurement-noise variances to subtract from the Gram
    /// diagonal.
    pub noise_variance: Option<Vec<f64>>,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions {
            preprocess: Preprocess::None,
            noise_variance: None,
        }
    }
}

pub(crate) fn run_preprocess(
    ds: &MultivariateFunctionalDataset,
    pre: &Preprocess,
) -> Result<MultivariateFunctionalDataset> {
    match pre {
        Preprocess::None => Ok(ds.clone()),
        Preprocess::LinearInterpolate => smoothing::interpolate_dataset(ds),
        Preprocess::Psplines { nbasis } => smoothing::presmooth_dataset(ds, nbasis, 2, &[]),
    }
}

/// Flips each eigenfunction (and its score column, and optionally a row of
/// expansion coefficients) so the entry of largest magnitude — first in
/// feature-major, row-major scan order — is positive.
pub(crate) fn apply_sign_convention(
    eigenfunctions: &mut [MultiGridFn],
    scores: &mut Array2<f64>,
    mut coefficients: Option<&mut Array2<f64>>,
) {
    for (k, phi) in eigenfunctions.iter_mut().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut best_val = 0.0;
        for block in phi.blocks() {
            for &v in block.iter() {
                if v.abs() > best {
                    best = v.abs();
                    best_val = v;
                }
            }
        }
        if best_val < 0.0 {
            phi.scale(-1.0);
            for v in scores.column_mut(k) {
                *v = -*v;
            }
            if let Some(c) = coefficients.as_deref_mut() {
                for v in c.row_mut(k) {
                    *v = -*v;
                }
            }
        }
    }
}

/// Assembles an [`MfpcaModel`] from a Gram eigensystem: shared by the Gram
/// pathway proper and the Gram side of the basis pathway.
pub(crate) fn model_from_gram_eigen(
    ds: &MultivariateFunctionalDataset,
    mean: &MultiGridFn,
    eig: &EigenSystem,
    k: usize,
    pathway: Pathway,
) -> Result<MfpcaModel> {
    let n = ds.n_obs();
    let pi = ds.obs_weights().to_vec();
    let sqrt_pi: Vec<f64> = pi.iter().map(|&p| p.sqrt()).collect();
    let total: f64 = eig.values.iter().sum();

    // per-feature blocks of every eigenfunction in one matrix product:
    // Phi_p = Xc_p^T (diag(sqrt_pi) U_K) diag(1/sqrt(l_k))
    let mut weighted_u = Array2::<f64>::zeros((n, k));
    for kk in 0..k {
        let inv_sqrt_l = 1.0 / eig.values[kk].sqrt();
        for i in 0..n {
            weighted_u[[i, kk]] = sqrt_pi[i] * eig.vectors[[i, kk]] * inv_sqrt_l;
        }
    }
    let mut blocks_per_k: Vec<Vec<ndarray::ArrayD<f64>>> = vec![Vec::new(); k];
    for p in 0..ds.n_features() {
        let x = ds.values_matrix(p);
        let mu = mean.block(p).as_slice().expect("standard layout").to_vec();
        let mut xc = x;
        for mut row in xc.rows_mut() {
            for (v, &m) in row.iter_mut().zip(&mu) {
                *v -= m;
            }
        }
        let phi_p = xc.t().dot(&weighted_u); // M_p x K
        let shape = ds.grid(p).shape();
        for kk in 0..k {
            let col = phi_p.column(kk).to_owned();
            blocks_per_k[kk].push(
                col.into_shape_with_order(ndarray::IxDyn(&shape))
                    .expect("one value per grid point"),
            );
        }
    }
    let mut eigenfunctions = Vec::with_capacity(k);
    for blocks in blocks_per_k {
        eigenfunctions.push(MultiGridFn::new(ds.grids(), blocks)?);
    }

    let mut scores = Array2::<f64>::zeros((n, k));
    for kk in 0..k {
        let sqrt_l = eig.values[kk].sqrt();
        for i in 0..n {
            scores[[i, kk]] = sqrt_l / sqrt_pi[i] * eig.vectors[[i, kk]];
        }
    }
    apply_sign_convention(&mut eigenfunctions, &mut scores, None);

    let eigenvalues: Vec<f64> = eig.values.iter().take(k).copied().collect();
    let variance_fraction = eigenvalues
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(MfpcaModel {
        pathway,
        mean: mean.clone(),
        eigenvalues,
        eigenfunctions,
        scores,
        variance_fraction,
        obs_weights: pi,
    })
}

/// Multivariate FPCA through the Gram matrix.
///
/// Whatever the weights `pi_n`, eigenvalues are the Gram eigenvalues,
/// eigenfunctions are weighted combinations of the centered observations,
/// and scores follow `c_nk = sqrt(l_k / pi_n) [u_k]_n`; with uniform weights
/// this is the classical `N`-scaled form. Feature weights `fw` change the
/// inner product; measurement noise can be removed through
/// [`GramOptions::noise_variance`].
pub fn gram_mfpca(
    ds: &MultivariateFunctionalDataset,
    fw: Option<&FeatureWeights>,
    selector: ComponentSelector,
    options: &GramOptions,
) -> Result<MfpcaModel> {
    let prepared = run_preprocess(ds, &options.preprocess)?;
    let gram = gram_estimate(&prepared, fw, options.noise_variance.as_deref())?;
    let eig = symmetric_eigen(&gram)?;
    let k = selector.resolve(eig.values.as_slice().unwrap(), eig.rank);
    let mean = mean_estimate(&prepared)?;
    model_from_gram_eigen(&prepared, &mean, &eig, k, Pathway::Gram)
}

/// Truncated Karhunen-Loeve reconstruction `X̂_n = mu + sum_{j<k} c_nj phi_j`
/// of every observation, returned as a dense dataset on the model grids.
pub fn reconstruct(model: &MfpcaModel, k: usize) -> Result<MultivariateFunctionalDataset> {
    if k > model.n_components() {
        return Err(MfpcaError::InvalidArgument(format!(
            "requested {k} components but the model retains {}",
            model.n_components()
        )));
    }
    let n = model.scores.nrows();
    let grids = model.mean.grids();
    let mut values: Vec<Array2<f64>> = Vec::with_capacity(grids.len());
    for (p, g) in grids.iter().enumerate() {
        let m = g.len();
        let mu = model.mean.block(p).as_slice().expect("standard layout");
        let mut v = Array2::<f64>::zeros((n, m));
        for i in 0..n {
            v.row_mut(i).assign(&ndarray::ArrayView1::from(mu));
        }
        for j in 0..k {
            let phi = model.eigenfunctions[j]
                .block(p)
                .as_slice()
                .expect("standard layout")
                .to_vec();
            for i in 0..n {
                let c = model.scores[[i, j]];
                let mut row = v.row_mut(i);
                for (rv, &pv) in row.iter_mut().zip(&phi) {
                    *rv += c * pv;
                }
            }
        }
        values.push(v);
    }
    let masks = vec![None; grids.len()];
    MultivariateFunctionalDataset::from_matrices(
        grids.to_vec(),
        values,
        masks,
        Some(model.obs_weights.clone()),
    )
}
