//! Multivariate functional data on per-feature rectangular grids.
//!
//! An observation is a vector of functions, one per feature, each sampled on
//! that feature's [`DomainGrid`]. The space carries the inner product
//! `<f, g> = sum_p integral over T_p of f_p * g_p`, approximated by trapezoid
//! quadrature; optional per-feature weights turn it into a weighted sum.
//! Missing values are tracked by boolean masks so sparse designs can be
//! interpolated or smoothed before the algebra that requires dense data.

use crate::error::{MfpcaError, Result};
use crate::grid::{quadrature_weights, DomainGrid};
use ndarray::{Array1, Array2, ArrayD, Axis};
use std::sync::Arc;

/// One observation of one feature: values (and an optional mask) on a grid.
///
/// A missing mask entry means the value at that grid point was not observed;
/// unobserved slots carry an arbitrary placeholder (conventionally zero) and
/// are ignored by estimators that understand masks.
#[derive(Debug, Clone)]
pub struct FeatureSample {
    grid: Arc<DomainGrid>,
    values: ArrayD<f64>,
    mask: Option<ArrayD<bool>>,
}

impl FeatureSample {
    /// Dense sample: every grid point observed. Values must be finite.
    pub fn dense(grid: Arc<DomainGrid>, values: ArrayD<f64>) -> Result<Self> {
        Self::new(grid, values, None)
    }

    /// Sample with an explicit observation mask. Observed values must be finite.
    pub fn masked(grid: Arc<DomainGrid>, values: ArrayD<f64>, mask: ArrayD<bool>) -> Result<Self> {
        Self::new(grid, values, Some(mask))
    }

    fn new(grid: Arc<DomainGrid>, values: ArrayD<f64>, mask: Option<ArrayD<bool>>) -> Result<Self> {
        let shape = grid.shape();
        if values.shape() != shape.as_slice() {
            return Err(MfpcaError::ShapeMismatch {
                expected: shape,
                got: values.shape().to_vec(),
            });
        }
        if let Some(m) = &mask {
            if m.shape() != values.shape() {
                return Err(MfpcaError::ShapeMismatch {
                    expected: values.shape().to_vec(),
                    got: m.shape().to_vec(),
                });
            }
        }
        let finite = match &mask {
            None => values.iter().all(|v| v.is_finite()),
            Some(m) => values
                .iter()
                .zip(m.iter())
                .all(|(v, &obs)| !obs || v.is_finite()),
        };
        if !finite {
            return Err(MfpcaError::NonFiniteValue {
                feature: usize::MAX,
                observation: usize::MAX,
            });
        }
        // an all-true mask is the same thing as dense storage
        let mask = mask.filter(|m| !m.iter().all(|&b| b));
        Ok(Self { grid, values, mask })
    }

    /// The sampling grid.
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    /// Sampled values, shaped like the grid.
    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    /// Observation mask; `None` means fully observed.
    pub fn mask(&self) -> Option<&ArrayD<bool>> {
        self.mask.as_ref()
    }

    /// True when every grid point is observed.
    pub fn is_dense(&self) -> bool {
        self.mask.is_none()
    }

    /// Number of observed grid points.
    pub fn n_observed(&self) -> usize {
        match &self.mask {
            None => self.values.len(),
            Some(m) => m.iter().filter(|&&b| b).count(),
        }
    }
}

/// A multivariate grid function: one value tensor per feature.
///
/// This is the common currency for means, eigenfunctions, and diagnostic
/// arguments; unlike [`FeatureSample`] it is always dense.
#[derive(Debug, Clone)]
pub struct MultiGridFn {
    grids: Vec<Arc<DomainGrid>>,
    blocks: Vec<ArrayD<f64>>,
}

impl MultiGridFn {
    /// Builds a multivariate function from per-feature value tensors.
    pub fn new(grids: Vec<Arc<DomainGrid>>, blocks: Vec<ArrayD<f64>>) -> Result<Self> {
        if grids.len() != blocks.len() || grids.is_empty() {
            return Err(MfpcaError::InvalidArgument(
                "need one value block per grid, at least one feature".into(),
            ));
        }
        for (g, b) in grids.iter().zip(&blocks) {
            if b.shape() != g.shape().as_slice() {
                return Err(MfpcaError::ShapeMismatch {
                    expected: g.shape(),
                    got: b.shape().to_vec(),
                });
            }
        }
        Ok(Self { grids, blocks })
    }

    /// Zero function on the given grids.
    pub fn zeros(grids: Vec<Arc<DomainGrid>>) -> Self {
        let blocks = grids
            .iter()
            .map(|g| ArrayD::zeros(ndarray::IxDyn(&g.shape())))
            .collect();
        Self { grids, blocks }
    }

    /// Number of features.
    pub fn n_features(&self) -> usize {
        self.blocks.len()
    }

    /// Per-feature grids.
    pub fn grids(&self) -> &[Arc<DomainGrid>] {
        &self.grids
    }

    /// Per-feature value tensors.
    pub fn blocks(&self) -> &[ArrayD<f64>] {
        &self.blocks
    }

    /// Value tensor of one feature.
    pub fn block(&self, p: usize) -> &ArrayD<f64> {
        &self.blocks[p]
    }

    /// Mutable value tensor of one feature.
    pub fn block_mut(&mut self, p: usize) -> &mut ArrayD<f64> {
        &mut self.blocks[p]
    }

    /// True when both functions live on the same grids.
    pub fn same_grids(&self, other: &MultiGridFn) -> bool {
        self.grids.len() == other.grids.len()
            && self
                .grids
                .iter()
                .zip(&other.grids)
                .all(|(a, b)| Arc::ptr_eq(a, b) || a == b)
    }

    /// `self + alpha * other`, on matching grids.
    pub fn axpy(&self, alpha: f64, other: &MultiGridFn) -> Result<MultiGridFn> {
        if !self.same_grids(other) {
            return Err(MfpcaError::GridMismatch(
                "cannot combine functions on different grids".into(),
            ));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + &(b * alpha))
            .collect();
        Ok(MultiGridFn {
            grids: self.grids.clone(),
            blocks,
        })
    }

    /// Multiplies every block by a scalar, in place.
    pub fn scale(&mut self, alpha: f64) {
        for b in &mut self.blocks {
            *b *= alpha;
        }
    }
}

/// Per-feature weights for the inner product: one scalar per feature, or one
/// weight function per feature evaluated on that feature's grid.
#[derive(Debug, Clone)]
pub enum FeatureWeights {
    /// Constant weight per feature.
    Scalar(Vec<f64>),
    /// Pointwise weight function per feature, shaped like the feature's grid.
    Pointwise(Vec<ArrayD<f64>>),
}

impl FeatureWeights {
    /// Unit weights (plain unweighted inner product) for `p` features.
    pub fn unit(p: usize) -> Self {
        FeatureWeights::Scalar(vec![1.0; p])
    }

    /// Number of features covered.
    pub fn n_features(&self) -> usize {
        match self {
            FeatureWeights::Scalar(w) => w.len(),
            FeatureWeights::Pointwise(w) => w.len(),
        }
    }

    /// Validates positivity and finiteness.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            FeatureWeights::Scalar(w) => w.iter().all(|&x| x.is_finite() && x > 0.0),
            FeatureWeights::Pointwise(w) => w
                .iter()
                .all(|b| b.iter().all(|&x| x.is_finite() && x > 0.0)),
        };
        if ok {
            Ok(())
        } else {
            Err(MfpcaError::InvalidFeatureWeights(
                "weights must be finite and strictly positive".into(),
            ))
        }
    }
}

/// Standardization schemes for [`standardization_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardizationScheme {
    /// `w_p = 1 / integral of Var X_p` — equalizes integrated variances.
    IntegratedVariance,
    /// `w_p(t) = 1 / Var X_p(t)` — pointwise variance rescaling.
    PointwiseSd,
    /// `w_p = 1 / integral of the squared covariance row of feature p` —
    /// equalizes the features' shares of covariance-metric inertia.
    GammaNorm,
}

/// A sample of multivariate functional observations with observation weights.
///
/// Feature `p` holds `N` samples sharing one grid; `obs_weights` are the
/// probability weights `pi_n` (positive, summing to one).
#[derive(Debug, Clone)]
pub struct MultivariateFunctionalDataset {
    features: Vec<Vec<FeatureSample>>,
    obs_weights: Vec<f64>,
}

impl MultivariateFunctionalDataset {
    /// Builds a dataset; `obs_weights = None` means uniform `1/N`.
    pub fn new(features: Vec<Vec<FeatureSample>>, obs_weights: Option<Vec<f64>>) -> Result<Self> {
        if features.is_empty() {
            return Err(MfpcaError::InvalidDataset("no features".into()));
        }
        let n = features[0].len();
        if n == 0 {
            return Err(MfpcaError::InvalidDataset("no observations".into()));
        }
        for (p, samples) in features.iter().enumerate() {
            if samples.len() != n {
                return Err(MfpcaError::InvalidDataset(format!(
                    "feature {p} has {} observations, feature 0 has {n}",
                    samples.len()
                )));
            }
            let g0 = samples[0].grid();
            if samples
                .iter()
                .any(|s| !(Arc::ptr_eq(s.grid(), g0) || s.grid() == g0))
            {
                return Err(MfpcaError::GridMismatch(format!(
                    "feature {p}: observations do not share one grid"
                )));
            }
        }
        let obs_weights = match obs_weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(MfpcaError::InvalidWeights(format!(
                        "{} weights for {n} observations",
                        w.len()
                    )));
                }
                if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                    return Err(MfpcaError::InvalidWeights(
                        "weights must be finite and strictly positive".into(),
                    ));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(MfpcaError::InvalidWeights(format!(
                        "weights sum to {s}, expected 1"
                    )));
                }
                w
            }
        };
        Ok(Self {
            features,
            obs_weights,
        })
    }

    /// Builds a dataset from per-feature value matrices (rows = observations,
    /// columns = grid points in row-major axis order).
    pub fn from_matrices(
        grids: Vec<Arc<DomainGrid>>,
        values: Vec<Array2<f64>>,
        masks: Vec<Option<Array2<bool>>>,
        obs_weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if grids.len() != values.len() || grids.len() != masks.len() {
            return Err(MfpcaError::InvalidArgument(
                "grids, values, and masks must have equal length".into(),
            ));
        }
        let mut features = Vec::with_capacity(grids.len());
        for ((grid, vals), mask) in grids.into_iter().zip(values).zip(masks) {
            let shape = grid.shape();
            if vals.ncols() != grid.len() {
                return Err(MfpcaError::ShapeMismatch {
                    expected: vec![vals.nrows(), grid.len()],
                    got: vec![vals.nrows(), vals.ncols()],
                });
            }
            let mut samples = Vec::with_capacity(vals.nrows());
            for i in 0..vals.nrows() {
                let v = vals
                    .row(i)
                    .to_owned()
                    .into_shape_with_order(ndarray::IxDyn(&shape))
                    .expect("row length checked against grid size");
                let m = mask.as_ref().map(|mk| {
                    mk.row(i)
                        .to_owned()
                        .into_shape_with_order(ndarray::IxDyn(&shape))
                        .expect("mask length checked against grid size")
                });
                samples.push(match m {
                    None => FeatureSample::dense(grid.clone(), v)?,
                    Some(m) => FeatureSample::masked(grid.clone(), v, m)?,
                });
            }
            features.push(samples);
        }
        Self::new(features, obs_weights)
    }

    /// Number of observations.
    pub fn n_obs(&self) -> usize {
        self.features[0].len()
    }

    /// Number of features.
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Observation weights `pi`.
    pub fn obs_weights(&self) -> &[f64] {
        &self.obs_weights
    }

    /// Shared grid of a feature.
    pub fn grid(&self, p: usize) -> &Arc<DomainGrid> {
        self.features[p][0].grid()
    }

    /// All grids, in feature order.
    pub fn grids(&self) -> Vec<Arc<DomainGrid>> {
        (0..self.n_features())
            .map(|p| self.grid(p).clone())
            .collect()
    }

    /// Samples of one feature.
    pub fn samples(&self, p: usize) -> &[FeatureSample] {
        &self.features[p]
    }

    /// True when no feature has missing values.
    pub fn is_dense(&self) -> bool {
        self.features
            .iter()
            .all(|f| f.iter().all(FeatureSample::is_dense))
    }

    /// Returns the offending feature if any sample is masked.
    pub fn require_dense(&self, op: &'static str) -> Result<()> {
        for (p, f) in self.features.iter().enumerate() {
            if f.iter().any(|s| !s.is_dense()) {
                return Err(MfpcaError::RequiresDense { op, feature: p });
            }
        }
        Ok(())
    }

    /// Values of one feature as an `N x M_p` matrix (row-major grid order).
    pub fn values_matrix(&self, p: usize) -> Array2<f64> {
        let m = self.grid(p).len();
        let n = self.n_obs();
        let mut out = Array2::zeros((n, m));
        for (i, s) in self.features[p].iter().enumerate() {
            let flat = s
                .values()
                .as_slice()
                .expect("samples are stored in standard layout");
            out.row_mut(i).assign(&Array1::from(flat.to_vec()));
        }
        out
    }

    /// Mask of one feature as an `N x M_p` matrix; `None` when fully observed.
    pub fn mask_matrix(&self, p: usize) -> Option<Array2<bool>> {
        if self.features[p].iter().all(FeatureSample::is_dense) {
            return None;
        }
        let m = self.grid(p).len();
        let n = self.n_obs();
        let mut out = Array2::from_elem((n, m), true);
        for (i, s) in self.features[p].iter().enumerate() {
            if let Some(mask) = s.mask() {
                let flat = mask.as_slice().expect("masks are stored in standard layout");
                for (j, &b) in flat.iter().enumerate() {
                    out[[i, j]] = b;
                }
            }
        }
        Some(out)
    }

    /// Observation `n` as a dense multivariate function (stored values).
    pub fn observation(&self, n: usize) -> MultiGridFn {
        let grids = self.grids();
        let blocks = self
            .features
            .iter()
            .map(|f| f[n].values().clone())
            .collect();
        MultiGridFn { grids, blocks }
    }

    /// Replaces the observation weights.
    pub fn with_obs_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let n = self.n_obs();
        if weights.len() != n {
            return Err(MfpcaError::InvalidWeights(format!(
                "{} weights for {n} observations",
                weights.len()
            )));
        }
        if weights.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(MfpcaError::InvalidWeights(
                "weights must be finite and strictly positive".into(),
            ));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(MfpcaError::InvalidWeights(format!(
                "weights sum to {s}, expected 1"
            )));
        }
        self.obs_weights = weights;
        Ok(self)
    }
}

/// Weighted inner product `sum_p w_p <f_p, g_p>` of two multivariate grid
/// functions under trapezoid quadrature. `fw = None` is the unweighted product.
pub fn inner_product_h(
    f: &MultiGridFn,
    g: &MultiGridFn,
    fw: Option<&FeatureWeights>,
) -> Result<f64> {
    if !f.same_grids(g) {
        return Err(MfpcaError::GridMismatch(
            "inner product of functions on different grids".into(),
        ));
    }
    if let Some(w) = fw {
        w.validate()?;
        if w.n_features() != f.n_features() {
            return Err(MfpcaError::InvalidFeatureWeights(format!(
                "{} weights for {} features",
                w.n_features(),
                f.n_features()
            )));
        }
    }
    let mut total = 0.0;
    for p in 0..f.n_features() {
        let q = quadrature_weights(&f.grids()[p])?;
        let term: f64 = match fw {
            None | Some(FeatureWeights::Scalar(_)) => f
                .block(p)
                .iter()
                .zip(g.block(p).iter())
                .zip(q.iter())
                .map(|((a, b), w)| a * b * w)
                .sum(),
            Some(FeatureWeights::Pointwise(w)) => {
                if w[p].shape() != f.block(p).shape() {
                    return Err(MfpcaError::ShapeMismatch {
                        expected: f.block(p).shape().to_vec(),
                        got: w[p].shape().to_vec(),
                    });
                }
                f.block(p)
                    .iter()
                    .zip(g.block(p).iter())
                    .zip(q.iter().zip(w[p].iter()))
                    .map(|((a, b), (qw, pw))| a * b * qw * pw)
                    .sum()
            }
        };
        let scale = match fw {
            Some(FeatureWeights::Scalar(w)) => w[p],
            _ => 1.0,
        };
        total += scale * term;
    }
    Ok(total)
}

/// Squared H-norm `<f, f>` (optionally weighted).
pub fn norm_h_squared(f: &MultiGridFn, fw: Option<&FeatureWeights>) -> Result<f64> {
    inner_product_h(f, f, fw)
}

/// Subtracts a per-feature mean function from every observation.
///
/// Masked entries keep their stored placeholder values; only observed entries
/// are centered. Grids must match the dataset's.
pub fn center(
    ds: &MultivariateFunctionalDataset,
    mean: &MultiGridFn,
) -> Result<MultivariateFunctionalDataset> {
    if mean.n_features() != ds.n_features() {
        return Err(MfpcaError::GridMismatch(
            "mean has a different number of features".into(),
        ));
    }
    for p in 0..ds.n_features() {
        if !(Arc::ptr_eq(&mean.grids()[p], ds.grid(p)) || &mean.grids()[p] == ds.grid(p)) {
            return Err(MfpcaError::GridMismatch(format!(
                "mean grid differs from data grid for feature {p}"
            )));
        }
    }
    let features = ds
        .features
        .iter()
        .enumerate()
        .map(|(p, samples)| {
            samples
                .iter()
                .map(|s| {
                    let mut v = s.values().clone();
                    match s.mask() {
                        None => v -= mean.block(p),
                        Some(m) => {
                            ndarray::Zip::from(&mut v)
                                .and(m)
                                .and(mean.block(p))
                                .for_each(|x, &obs, &mu| {
                                    if obs {
                                        *x -= mu;
                                    }
                                });
                        }
                    }
                    FeatureSample {
                        grid: s.grid.clone(),
                        values: v,
                        mask: s.mask.clone(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(MultivariateFunctionalDataset {
        features,
        obs_weights: ds.obs_weights.clone(),
    })
}

/// Rescales observed values by the square root of the feature weights, so that
/// unweighted inner products of the result equal weighted products of the input.
pub fn rescale(
    ds: &MultivariateFunctionalDataset,
    fw: &FeatureWeights,
) -> Result<MultivariateFunctionalDataset> {
    fw.validate()?;
    if fw.n_features() != ds.n_features() {
        return Err(MfpcaError::InvalidFeatureWeights(format!(
            "{} weights for {} features",
            fw.n_features(),
            ds.n_features()
        )));
    }
    let features = ds
        .features
        .iter()
        .enumerate()
        .map(|(p, samples)| -> Result<Vec<FeatureSample>> {
            samples
                .iter()
                .map(|s| {
                    let mut v = s.values().clone();
                    match fw {
                        FeatureWeights::Scalar(w) => v *= w[p].sqrt(),
                        FeatureWeights::Pointwise(w) => {
                            if w[p].shape() != v.shape() {
                                return Err(MfpcaError::ShapeMismatch {
                                    expected: v.shape().to_vec(),
                                    got: w[p].shape().to_vec(),
                                });
                            }
                            ndarray::Zip::from(&mut v).and(&w[p]).for_each(|x, &wp| {
                                *x *= wp.sqrt();
                            });
                        }
                    }
                    Ok(FeatureSample {
                        grid: s.grid.clone(),
                        values: v,
                        mask: s.mask.clone(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(MultivariateFunctionalDataset {
        features,
        obs_weights: ds.obs_weights.clone(),
    })
}

/// Pointwise pi-weighted variance of one feature of a dense dataset.
fn pointwise_variance(ds: &MultivariateFunctionalDataset, p: usize) -> ArrayD<f64> {
    let pi = Array1::from(ds.obs_weights.to_vec());
    let x = ds.values_matrix(p);
    let mu = pi.dot(&x);
    let mut var = Array1::<f64>::zeros(x.ncols());
    for (row, &w) in x.axis_iter(Axis(0)).zip(pi.iter()) {
        for (j, (&v, &m)) in row.iter().zip(mu.iter()).enumerate() {
            var[j] += w * (v - m) * (v - m);
        }
    }
    var.into_shape_with_order(ndarray::IxDyn(&ds.grid(p).shape()))
        .expect("variance has one entry per grid point")
}

/// Derives standardization weights from a dense dataset (`N >= 2`).
///
/// `IntegratedVariance` and `GammaNorm` produce scalar weights; `PointwiseSd`
/// produces a weight function `1/Var_p(t)` per feature, suitable for
/// [`rescale`]. Features with (numerically) zero variance are rejected.
pub fn standardization_weights(
    ds: &MultivariateFunctionalDataset,
    scheme: StandardizationScheme,
) -> Result<FeatureWeights> {
    ds.require_dense("standardization_weights")?;
    if ds.n_obs() < 2 {
        return Err(MfpcaError::InvalidDataset(
            "standardization needs at least 2 observations".into(),
        ));
    }
    match scheme {
        StandardizationScheme::IntegratedVariance => {
            let mut w = Vec::with_capacity(ds.n_features());
            for p in 0..ds.n_features() {
                let var = pointwise_variance(ds, p);
                let q = quadrature_weights(ds.grid(p))?;
                let total: f64 = var.iter().zip(q.iter()).map(|(v, qw)| v * qw).sum();
                if total <= 0.0 || !total.is_finite() {
                    return Err(MfpcaError::DegenerateFeature {
                        feature: p,
                        reason: "integrated variance is zero".into(),
                    });
                }
                w.push(1.0 / total);
            }
            Ok(FeatureWeights::Scalar(w))
        }
        StandardizationScheme::PointwiseSd => {
            let mut w = Vec::with_capacity(ds.n_features());
            for p in 0..ds.n_features() {
                let var = pointwise_variance(ds, p);
                if var.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                    return Err(MfpcaError::DegenerateFeature {
                        feature: p,
                        reason: "zero pointwise variance".into(),
                    });
                }
                w.push(var.mapv(|v| 1.0 / v));
            }
            Ok(FeatureWeights::Pointwise(w))
        }
        StandardizationScheme::GammaNorm => {
            // integral of the squared covariance row of feature p:
            //   sum_q integral integral C_pq(s,t)^2 ds dt
            //     = sum_{i,j} pi_i pi_j G^p_ij G_ij
            // with G^p the per-feature centered quadrature Gram and G their sum.
            let n = ds.n_obs();
            let pi = Array1::from(ds.obs_weights.to_vec());
            let mut per_feature = Vec::with_capacity(ds.n_features());
            let mut total = Array2::<f64>::zeros((n, n));
            for p in 0..ds.n_features() {
                let x = ds.values_matrix(p);
                let mu = pi.dot(&x);
                let xc = &x - &mu.broadcast((n, x.ncols())).unwrap();
                let q = Array1::from(
                    quadrature_weights(ds.grid(p))?
                        .into_raw_vec_and_offset()
                        .0,
                );
                let xq = &xc * &q.broadcast((n, xc.ncols())).unwrap();
                let g = xq.dot(&xc.t());
                total += &g;
                per_feature.push(g);
            }
            let mut w = Vec::with_capacity(ds.n_features());
            for (p, g) in per_feature.iter().enumerate() {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += pi[i] * pi[j] * g[[i, j]] * total[[i, j]];
                    }
                }
                if acc <= 0.0 || !acc.is_finite() {
                    return Err(MfpcaError::DegenerateFeature {
                        feature: p,
                        reason: "zero covariance-metric inertia".into(),
                    });
                }
                w.push(1.0 / acc);
            }
            Ok(FeatureWeights::Scalar(w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn grid1d(m: usize) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::equidistant(&[(0.0, 1.0)], &[m]).unwrap())
    }

    fn small_dataset() -> MultivariateFunctionalDataset {
        // two features on [0,1]: 5-point and 3-point grids, N = 3
        let g1 = grid1d(5);
        let g2 = grid1d(3);
        let v1 = arr2(&[
            [0.0, 1.0, 2.0, 3.0, 4.0],
            [1.0, 1.0, 1.0, 1.0, 1.0],
            [0.0, -1.0, 0.0, 1.0, 0.0],
        ]);
        let v2 = arr2(&[[1.0, 0.0, 1.0], [2.0, 2.0, 2.0], [0.0, 1.0, 0.0]]);
        MultivariateFunctionalDataset::from_matrices(
            vec![g1, g2],
            vec![v1, v2],
            vec![None, None],
            None,
        )
        .unwrap()
    }

    #[test]
    fn inner_product_sums_feature_integrals() {
        let ds = small_dataset();
        let f = ds.observation(1); // constants 1 and 2
        let val = inner_product_h(&f, &f, None).unwrap();
        // integral of 1 over [0,1] + integral of 4 over [0,1]
        assert_abs_diff_eq!(val, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn inner_product_respects_scalar_weights() {
        let ds = small_dataset();
        let f = ds.observation(1);
        let fw = FeatureWeights::Scalar(vec![3.0, 0.5]);
        let val = inner_product_h(&f, &f, Some(&fw)).unwrap();
        assert_abs_diff_eq!(val, 3.0 * 1.0 + 0.5 * 4.0, epsilon = 1e-14);
    }

    #[test]
    fn weighted_product_equals_product_of_rescaled() {
        let ds = small_dataset();
        let fw = FeatureWeights::Scalar(vec![2.5, 0.3]);
        let ds_r = rescale(&ds, &fw).unwrap();
        for i in 0..ds.n_obs() {
            for j in 0..ds.n_obs() {
                let w = inner_product_h(&ds.observation(i), &ds.observation(j), Some(&fw)).unwrap();
                let r = inner_product_h(&ds_r.observation(i), &ds_r.observation(j), None).unwrap();
                assert_abs_diff_eq!(w, r, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn pointwise_weights_act_pointwise() {
        let ds = small_dataset();
        let w1 = ArrayD::from_elem(ndarray::IxDyn(&[5]), 4.0);
        let w2 = ArrayD::from_elem(ndarray::IxDyn(&[3]), 9.0);
        let fw = FeatureWeights::Pointwise(vec![w1, w2]);
        let f = ds.observation(1);
        let val = inner_product_h(&f, &f, Some(&fw)).unwrap();
        assert_abs_diff_eq!(val, 4.0 * 1.0 + 9.0 * 4.0, epsilon = 1e-14);
        let r = rescale(&ds, &fw).unwrap();
        let vr = inner_product_h(&r.observation(1), &r.observation(1), None).unwrap();
        assert_abs_diff_eq!(vr, val, epsilon = 1e-14);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let ds = small_dataset();
        let f = ds.observation(0);
        let other = MultiGridFn::zeros(vec![grid1d(5), grid1d(4)]);
        assert!(inner_product_h(&f, &other, None).is_err());
    }

    #[test]
    fn center_subtracts_mean_on_observed_entries() {
        let ds = small_dataset();
        let mean = ds.observation(1); // use observation 1 as a "mean"
        let c = center(&ds, &mean).unwrap();
        let f = c.observation(1);
        assert!(f.block(0).iter().all(|&v| v.abs() < 1e-15));
        assert!(f.block(1).iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn center_skips_masked_entries() {
        let g = grid1d(3);
        let v = arr2(&[[1.0, 7.0, 3.0], [2.0, 0.0, 4.0]]);
        let mask = arr2(&[[true, false, true], [true, true, true]]);
        let ds = MultivariateFunctionalDataset::from_matrices(
            vec![g.clone()],
            vec![v],
            vec![Some(mask)],
            None,
        )
        .unwrap();
        let ones = MultiGridFn::new(
            vec![g],
            vec![ArrayD::from_elem(ndarray::IxDyn(&[3]), 1.0)],
        )
        .unwrap();
        let c = center(&ds, &ones).unwrap();
        // masked slot keeps its placeholder 7.0; observed slots are shifted
        assert_abs_diff_eq!(c.observation(0).block(0)[[0]], 0.0);
        assert_abs_diff_eq!(c.observation(0).block(0)[[1]], 7.0);
        assert_abs_diff_eq!(c.observation(0).block(0)[[2]], 2.0);
    }

    #[test]
    fn non_finite_observed_values_are_rejected() {
        let g = grid1d(3);
        let bad = arr2(&[[1.0, f64::NAN, 3.0]]);
        assert!(MultivariateFunctionalDataset::from_matrices(
            vec![g.clone()],
            vec![bad.clone()],
            vec![None],
            None
        )
        .is_err());
        // the same NaN hidden behind a mask is fine
        let mask = arr2(&[[true, false, true]]);
        assert!(MultivariateFunctionalDataset::from_matrices(
            vec![g],
            vec![bad],
            vec![Some(mask)],
            None
        )
        .is_ok());
    }

    #[test]
    fn weights_must_be_positive_and_normalized() {
        let ds = small_dataset();
        assert!(ds.clone().with_obs_weights(vec![0.5, 0.5, 0.5]).is_err());
        assert!(ds.clone().with_obs_weights(vec![0.5, 0.5, 0.0]).is_err());
        assert!(ds
            .clone()
            .with_obs_weights(vec![0.2, 0.3, 0.5])
            .is_ok());
    }

    #[test]
    fn integrated_variance_weights_normalize_variance() {
        let ds = small_dataset();
        let fw = standardization_weights(&ds, StandardizationScheme::IntegratedVariance).unwrap();
        let ds_r = rescale(&ds, &fw).unwrap();
        // after rescaling, each feature's integrated variance is exactly 1
        for p in 0..2 {
            let var = pointwise_variance(&ds_r, p);
            let q = quadrature_weights(ds_r.grid(p)).unwrap();
            let total: f64 = var.iter().zip(q.iter()).map(|(v, w)| v * w).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pointwise_sd_weights_flatten_variance() {
        let ds = small_dataset();
        let fw = standardization_weights(&ds, StandardizationScheme::PointwiseSd).unwrap();
        let ds_r = rescale(&ds, &fw).unwrap();
        for p in 0..2 {
            let var = pointwise_variance(&ds_r, p);
            for v in var.iter() {
                assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_variance_gives_constant_pointwise_weight() {
        // feature with variance sigma^2 = 9 at every point
        let g = grid1d(4);
        let v = arr2(&[
            [3.0, -3.0, 3.0, -3.0],
            [-3.0, 3.0, -3.0, 3.0],
        ]);
        let ds = MultivariateFunctionalDataset::from_matrices(vec![g], vec![v], vec![None], None)
            .unwrap();
        let fw = standardization_weights(&ds, StandardizationScheme::PointwiseSd).unwrap();
        match fw {
            FeatureWeights::Pointwise(w) => {
                for x in w[0].iter() {
                    assert_abs_diff_eq!(*x, 1.0 / 9.0, epsilon = 1e-14);
                }
            }
            _ => panic!("expected pointwise weights"),
        }
    }

    #[test]
    fn zero_variance_feature_is_degenerate() {
        let g = grid1d(3);
        let v = arr2(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]);
        let ds = MultivariateFunctionalDataset::from_matrices(vec![g], vec![v], vec![None], None)
            .unwrap();
        assert!(matches!(
            standardization_weights(&ds, StandardizationScheme::IntegratedVariance),
            Err(MfpcaError::DegenerateFeature { .. })
        ));
    }
}
