//! Covariance-operator pathway: univariate FPCA per feature, then an
//! eigenanalysis of the covariance of the stacked univariate scores.
//!
//! Each feature's covariance surface is diagonalized through the
//! quadrature-symmetrized problem `Q^{1/2} C Q^{1/2} v = lambda v` with
//! `phi = Q^{-1/2} v`, which makes the univariate eigenfunctions exactly
//! orthonormal under the trapezoid quadrature. Univariate scores are stacked
//! into `Z` (`N x K_+`), the small matrix `Z^T diag(pi) Z` (optionally scaled
//! by `N/(N-1)`) is diagonalized, and its eigenvectors recombine the
//! univariate eigenfunctions into multivariate ones. The cost is driven by
//! the per-feature grid sizes, not by the number of observations.

use crate::error::{MfpcaError, Result};
use crate::fdata::{MultiGridFn, MultivariateFunctionalDataset};
use crate::gram::{
    apply_sign_convention, ComponentSelector, GramOptions, MfpcaModel, Pathway, Preprocess,
};
use crate::grid::quadrature_weights;
use crate::linalg;
use crate::moments::{covariance_estimate, mean_estimate, GramMatrix};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Univariate FPCA of a single feature.
#[derive(Debug, Clone)]
pub struct UnivariateFpca {
    /// Feature index in the dataset.
    pub feature: usize,
    /// Eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions as rows (`K_p x M_p`), orthonormal in `L^2(T_p)` under
    /// quadrature.
    pub eigenfunctions: Array2<f64>,
    /// Centered quadrature scores `<X_n - mu, phi_l>` (`N x K_p`).
    pub scores: Array2<f64>,
}

/// Stacked univariate scores with their per-feature column spans.
#[derive(Debug, Clone)]
pub struct StackedScores {
    /// Score matrix `Z`, `N x K_+`.
    pub matrix: Array2<f64>,
    /// Half-open column span of each feature's block.
    pub spans: Vec<(usize, usize)>,
}

impl StackedScores {
    /// Total number of stacked components `K_+`.
    pub fn k_total(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Divisor convention for the stacked-score covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovDivisor {
    /// Plain pi-weighted second moment (divisor `N` under uniform weights);
    /// matches the Gram pathway exactly.
    N,
    /// Unbiased-style scaling by `N/(N-1)`; the conventional choice for a
    /// sample covariance matrix.
    NMinusOne,
}

/// Options for [`cov_mfpca`].
#[derive(Debug, Clone)]
pub struct CovOptions {
    /// Dataset preparation step.
    pub preprocess: Preprocess,
    /// Per-feature measurement-noise variances to subtract from the
    /// univariate covariance diagonals.
    pub noise_variance: Option<Vec<f64>>,
    /// Divisor convention for the score covariance.
    pub divisor: CovDivisor,
}

impl Default for CovOptions {
    fn default() -> Self {
        CovOptions {
            preprocess: Preprocess::None,
            noise_variance: None,
            divisor: CovDivisor::NMinusOne,
        }
    }
}

/// Univariate FPCA of feature `p` keeping at most `k_p` components.
///
/// The data must be dense. `sigma2` subtracts a measurement-noise variance
/// from the covariance diagonal before diagonalization.
pub fn univariate_fpca(
    ds: &MultivariateFunctionalDataset,
    p: usize,
    k_p: usize,
    sigma2: Option<f64>,
) -> Result<UnivariateFpca> {
    let surface = covariance_estimate(ds, p, sigma2)?;
    let m = surface.values.nrows();
    let q = quadrature_weights(ds.grid(p))?
        .into_raw_vec_and_offset()
        .0;
    let sqrt_q: Vec<f64> = q.iter().map(|&w| w.sqrt()).collect();
    // symmetrized problem Q^{1/2} C Q^{1/2}
    let mut sym = surface.values.clone();
    for i in 0..m {
        for j in 0..m {
            sym[[i, j]] *= sqrt_q[i] * sqrt_q[j];
        }
    }
    let (values, vectors) = linalg::sym_eigen_desc(&sym)?;
    let eps_rank = m as f64 * f64::EPSILON * values[0].max(0.0);
    let rank = values.iter().filter(|&&v| v > eps_rank).count();
    let k = if k_p > rank {
        log::warn!(
            "feature {p}: requested {k_p} univariate components but rank is {rank}; truncating"
        );
        rank
    } else {
        k_p
    };
    // phi = Q^{-1/2} v, rows of the output
    let mut eigenfunctions = Array2::<f64>::zeros((k, m));
    for l in 0..k {
        for j in 0..m {
            eigenfunctions[[l, j]] = vectors[[j, l]] / sqrt_q[j];
        }
    }
    // centered quadrature scores <X_n - mu, phi_l>
    let mean = mean_estimate(ds)?;
    let mu = mean.block(p).as_slice().expect("standard layout").to_vec();
    let mut xc = ds.values_matrix(p);
    for mut row in xc.rows_mut() {
        for (v, &mv) in row.iter_mut().zip(&mu) {
            *v -= mv;
        }
    }
    let mut phi_q = eigenfunctions.t().to_owned(); // M x K
    for (j, mut row) in phi_q.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v *= q[j];
        }
    }
    let scores = xc.dot(&phi_q);
    Ok(UnivariateFpca {
        feature: p,
        eigenvalues: values.iter().take(k).copied().collect(),
        eigenfunctions,
        scores,
    })
}

/// Stacks per-feature univariate scores column-wise.
pub fn stack_scores(parts: &[UnivariateFpca]) -> Result<StackedScores> {
    if parts.is_empty() {
        return Err(MfpcaError::InvalidArgument(
            "no univariate components to stack".into(),
        ));
    }
    let n = parts[0].scores.nrows();
    let k_total: usize = parts.iter().map(|u| u.scores.ncols()).sum();
    let mut matrix = Array2::<f64>::zeros((n, k_total));
    let mut spans = Vec::with_capacity(parts.len());
    let mut at = 0;
    for u in parts {
        if u.scores.nrows() != n {
            return Err(MfpcaError::ShapeMismatch {
                expected: vec![n],
                got: vec![u.scores.nrows()],
            });
        }
        let k = u.scores.ncols();
        matrix
            .slice_mut(ndarray::s![.., at..at + k])
            .assign(&u.scores);
        spans.push((at, at + k));
        at += k;
    }
    Ok(StackedScores { matrix, spans })
}

/// Multivariate FPCA through per-feature covariance operators.
///
/// `k_univ[p]` bounds the univariate truncation of feature `p`; the final
/// model keeps `selector`-many of the recombined multivariate components.
/// With [`CovDivisor::N`] and full univariate truncations this reproduces the
/// Gram pathway's eigenvalues and eigenfunctions to numerical precision.
pub fn cov_mfpca(
    ds: &MultivariateFunctionalDataset,
    k_univ: &[usize],
    selector: ComponentSelector,
    options: &CovOptions,
) -> Result<MfpcaModel> {
    if k_univ.len() != ds.n_features() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{} univariate truncations for {} features",
            k_univ.len(),
            ds.n_features()
        )));
    }
    let prepared = crate::gram::run_preprocess(ds, &options.preprocess)?;
    if let Some(s2) = &options.noise_variance {
        if s2.len() != prepared.n_features() {
            return Err(MfpcaError::InvalidArgument(format!(
                "{} noise variances for {} features",
                s2.len(),
                prepared.n_features()
            )));
        }
    }
    let parts: Vec<UnivariateFpca> = (0..prepared.n_features())
        .into_par_iter()
        .map(|p| {
            let s2 = options.noise_variance.as_ref().map(|v| v[p]);
            univariate_fpca(&prepared, p, k_univ[p], s2)
        })
        .collect::<Result<_>>()?;
    let stacked = stack_scores(&parts)?;
    let n = prepared.n_obs();
    let pi = Array1::from(prepared.obs_weights().to_vec());

    // Z^T diag(pi) Z, optionally rescaled to the (N-1)-divisor convention
    let weighted = &stacked.matrix
        * &pi
            .view()
            .insert_axis(ndarray::Axis(1))
            .broadcast(stacked.matrix.dim())
            .unwrap();
    let mut z = weighted.t().dot(&stacked.matrix);
    if options.divisor == CovDivisor::NMinusOne {
        if n < 2 {
            return Err(MfpcaError::InvalidArgument(
                "the N-1 divisor needs at least two observations".into(),
            ));
        }
        z *= n as f64 / (n as f64 - 1.0);
    }
    let z = GramMatrix {
        matrix: (&z + &z.t()) * 0.5,
        corrected: options.noise_variance.is_some(),
    };
    let eig = crate::gram::symmetric_eigen(&z)?;
    let k = selector.resolve(eig.values.as_slice().unwrap(), eig.rank);

    // multivariate eigenfunctions: per-feature combination of the univariate
    // ones with the matching slice of each eigenvector
    let mean = mean_estimate(&prepared)?;
    let mut eigenfunctions = Vec::with_capacity(k);
    for kk in 0..k {
        let v = eig.vectors.column(kk);
        let mut blocks = Vec::with_capacity(prepared.n_features());
        for (p, u) in parts.iter().enumerate() {
            let (lo, hi) = stacked.spans[p];
            let coeffs = v.slice(ndarray::s![lo..hi]);
            let flat = coeffs.dot(&u.eigenfunctions); // 1 x M_p
            blocks.push(
                flat.into_shape_with_order(ndarray::IxDyn(&prepared.grid(p).shape()))
                    .expect("one value per grid point"),
            );
        }
        eigenfunctions.push(MultiGridFn::new(prepared.grids(), blocks)?);
    }
    // scores c_nk = Z_{n,.} v_k
    let mut scores = stacked
        .matrix
        .dot(&eig.vectors.slice(ndarray::s![.., ..k]));
    apply_sign_convention(&mut eigenfunctions, &mut scores, None);

    let total: f64 = eig.values.iter().sum();
    let eigenvalues: Vec<f64> = eig.values.iter().take(k).copied().collect();
    let variance_fraction = eigenvalues
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(MfpcaModel {
        pathway: Pathway::Covariance,
        mean,
        eigenvalues,
        eigenfunctions,
        scores,
        variance_fraction,
        obs_weights: prepared.obs_weights().to_vec(),
    })
}

/// Convenience: covariance-pathway options matching the Gram pathway's
/// conventions (divisor `N`, same preprocessing and noise handling), used for
/// duality comparisons.
pub fn gram_matched_options(gram_options: &GramOptions) -> CovOptions {
    CovOptions {
        preprocess: gram_options.preprocess.clone(),
        noise_variance: gram_options.noise_variance.clone(),
        divisor: CovDivisor::N,
    }
}
