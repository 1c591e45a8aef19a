//! Weighted moment estimators: mean, covariance and cross-covariance
//! surfaces, and the Gram matrix of inner products between centered
//! observations.
//!
//! All estimators use the observation weights `pi_n` of the dataset. The mean
//! tolerates missing values by renormalizing the weights pointwise; the
//! covariance and Gram estimators require dense (interpolated or presmoothed)
//! data. Measurement noise inflates the covariance diagonal and the Gram
//! diagonal by the per-feature noise variances, so both estimators accept an
//! optional correction that subtracts those variances where they enter.

use crate::error::{MfpcaError, Result};
use crate::fdata::{FeatureWeights, MultiGridFn, MultivariateFunctionalDataset};
use crate::grid::{quadrature_weights, DomainGrid};
use ndarray::{Array1, Array2};
use std::sync::Arc;

/// An estimated covariance surface between two features, sampled on the
/// tensor product of their grids (rows index the first feature's flattened
/// grid, columns the second's).
#[derive(Debug, Clone)]
pub struct CovarianceSurface {
    /// Row feature index.
    pub p: usize,
    /// Column feature index.
    pub q: usize,
    /// Surface values, `M_p x M_q` over the flattened grids.
    pub values: Array2<f64>,
    /// Grid of the row feature.
    pub row_grid: Arc<DomainGrid>,
    /// Grid of the column feature.
    pub col_grid: Arc<DomainGrid>,
    /// Number of diagonal values clamped to zero after noise correction.
    pub clamped: usize,
}

/// The Gram matrix of weighted inner products between centered observations.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    /// Symmetric `N x N` matrix with entries
    /// `sqrt(pi_n pi_m) <X_n - mu, X_m - mu>_H`.
    pub matrix: Array2<f64>,
    /// Whether the measurement-noise diagonal correction was applied.
    pub corrected: bool,
}

/// Pi-weighted pointwise mean of every feature.
///
/// At grid points where some observations are missing, the weights of the
/// observed ones are renormalized; a point observed by no one is an error.
pub fn mean_estimate(ds: &MultivariateFunctionalDataset) -> Result<MultiGridFn> {
    let pi = ds.obs_weights();
    let mut blocks = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        let x = ds.values_matrix(p);
        let m = x.ncols();
        let flat = match ds.mask_matrix(p) {
            None => {
                let piv = Array1::from(pi.to_vec());
                piv.dot(&x)
            }
            Some(mask) => {
                let mut num = Array1::<f64>::zeros(m);
                let mut den = Array1::<f64>::zeros(m);
                for (n, row) in x.rows().into_iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        if mask[[n, j]] {
                            num[j] += pi[n] * v;
                            den[j] += pi[n];
                        }
                    }
                }
                for j in 0..m {
                    if den[j] <= 0.0 {
                        return Err(MfpcaError::InsufficientCoverage {
                            feature: p,
                            index: j,
                        });
                    }
                    num[j] /= den[j];
                }
                num
            }
        };
        blocks.push(
            flat.into_shape_with_order(ndarray::IxDyn(&ds.grid(p).shape()))
                .expect("mean has one value per grid point"),
        );
    }
    MultiGridFn::new(ds.grids(), blocks)
}

/// Centered value matrix of one feature: `X - mu` row-wise (dense data).
fn centered_matrix(ds: &MultivariateFunctionalDataset, mean: &MultiGridFn, p: usize) -> Array2<f64> {
    let x = ds.values_matrix(p);
    let mu = mean.block(p).as_slice().expect("standard layout").to_vec();
    let mut xc = x;
    for mut row in xc.rows_mut() {
        for (v, &m) in row.iter_mut().zip(&mu) {
            *v -= m;
        }
    }
    xc
}

/// Covariance surface of feature `p` with itself, with the optional
/// measurement-noise variance subtracted from the diagonal. Negative
/// corrected diagonal values are clamped to zero and counted.
pub fn covariance_estimate(
    ds: &MultivariateFunctionalDataset,
    p: usize,
    sigma2: Option<f64>,
) -> Result<CovarianceSurface> {
    ds.require_dense("covariance_estimate")?;
    if ds.n_obs() < 2 {
        log::warn!("covariance estimated from fewer than two observations is degenerate");
    }
    let mean = mean_estimate(ds)?;
    let xc = centered_matrix(ds, &mean, p);
    let pi = Array1::from(ds.obs_weights().to_vec());
    let weighted = &xc * &pi
        .view()
        .insert_axis(ndarray::Axis(1))
        .broadcast(xc.dim())
        .unwrap();
    let mut values = weighted.t().dot(&xc);
    let mut clamped = 0usize;
    if let Some(s2) = sigma2 {
        if !(s2.is_finite() && s2 >= 0.0) {
            return Err(MfpcaError::InvalidArgument(
                "noise variance must be finite and nonnegative".into(),
            ));
        }
        for i in 0..values.nrows() {
            let d = values[[i, i]] - s2;
            if d < 0.0 {
                clamped += 1;
                values[[i, i]] = 0.0;
            } else {
                values[[i, i]] = d;
            }
        }
        if clamped > 0 {
            log::warn!("noise correction clamped {clamped} negative diagonal values to zero");
        }
    }
    // enforce exact symmetry against rounding in the matrix product
    let sym = (&values + &values.t()) * 0.5;
    Ok(CovarianceSurface {
        p,
        q: p,
        values: sym,
        row_grid: ds.grid(p).clone(),
        col_grid: ds.grid(p).clone(),
        clamped,
    })
}

/// Cross-covariance surface between two features; no correction anywhere
/// (measurement errors of different features are independent).
pub fn cross_covariance_estimate(
    ds: &MultivariateFunctionalDataset,
    p: usize,
    q: usize,
) -> Result<CovarianceSurface> {
    ds.require_dense("cross_covariance_estimate")?;
    let mean = mean_estimate(ds)?;
    let xc_p = centered_matrix(ds, &mean, p);
    let xc_q = centered_matrix(ds, &mean, q);
    let pi = Array1::from(ds.obs_weights().to_vec());
    let weighted = &xc_p
        * &pi
            .view()
            .insert_axis(ndarray::Axis(1))
            .broadcast(xc_p.dim())
            .unwrap();
    let mut values = weighted.t().dot(&xc_q);
    if p == q {
        values = (&values + &values.t()) * 0.5;
    }
    Ok(CovarianceSurface {
        p,
        q,
        values,
        row_grid: ds.grid(p).clone(),
        col_grid: ds.grid(q).clone(),
        clamped: 0,
    })
}

/// The weight each feature contributes to the noise correction: scalar
/// feature weights scale the subtracted variances, pointwise weights are
/// rejected (the correction is defined for constant weights only).
fn correction_scale(fw: Option<&FeatureWeights>, n_features: usize) -> Result<Vec<f64>> {
    match fw {
        None => Ok(vec![1.0; n_features]),
        Some(FeatureWeights::Scalar(w)) => Ok(w.clone()),
        Some(FeatureWeights::Pointwise(_)) => Err(MfpcaError::InvalidFeatureWeights(
            "noise correction of the Gram diagonal requires scalar feature weights".into(),
        )),
    }
}

/// Gram matrix of (optionally weighted) inner products between centered
/// observations, with the optional noise correction
/// `M_nn -= pi_n * sum_p w_p sigma_p^2` on the diagonal.
pub fn gram_estimate(
    ds: &MultivariateFunctionalDataset,
    fw: Option<&FeatureWeights>,
    sigma2: Option<&[f64]>,
) -> Result<GramMatrix> {
    ds.require_dense("gram_estimate")?;
    if let Some(w) = fw {
        w.validate()?;
        if w.n_features() != ds.n_features() {
            return Err(MfpcaError::InvalidFeatureWeights(format!(
                "{} weights for {} features",
                w.n_features(),
                ds.n_features()
            )));
        }
    }
    if let Some(s2) = sigma2 {
        if s2.len() != ds.n_features() {
            return Err(MfpcaError::InvalidArgument(format!(
                "{} noise variances for {} features",
                s2.len(),
                ds.n_features()
            )));
        }
        if s2.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
            return Err(MfpcaError::InvalidArgument(
                "noise variances must be finite and nonnegative".into(),
            ));
        }
    }
    let n = ds.n_obs();
    let pi = Array1::from(ds.obs_weights().to_vec());
    let mean = mean_estimate(ds)?;
    let mut gram = Array2::<f64>::zeros((n, n));
    for p in 0..ds.n_features() {
        let xc = centered_matrix(ds, &mean, p);
        let mut q = Array1::from(
            quadrature_weights(ds.grid(p))?
                .into_raw_vec_and_offset()
                .0,
        );
        match fw {
            None => {}
            Some(FeatureWeights::Scalar(w)) => q *= w[p],
            Some(FeatureWeights::Pointwise(w)) => {
                let wf = w[p].as_slice().expect("standard layout");
                for (qv, &wv) in q.iter_mut().zip(wf) {
                    *qv *= wv;
                }
            }
        }
        let xq = &xc * &q.broadcast(xc.dim()).unwrap();
        gram = gram + xq.dot(&xc.t());
    }
    let sqrt_pi = pi.mapv(f64::sqrt);
    for i in 0..n {
        for j in 0..n {
            gram[[i, j]] *= sqrt_pi[i] * sqrt_pi[j];
        }
    }
    let corrected = if let Some(s2) = sigma2 {
        let scale = correction_scale(fw, ds.n_features())?;
        let total: f64 = s2.iter().zip(&scale).map(|(s, w)| s * w).sum();
        for i in 0..n {
            gram[[i, i]] -= pi[i] * total;
        }
        true
    } else {
        false
    };
    let sym = (&gram + &gram.t()) * 0.5;
    Ok(GramMatrix {
        matrix: sym,
        corrected,
    })
}
