//! Synthetic multivariate functional data from truncated Karhunen-Loeve
//! expansions.
//!
//! The generator follows a fixed recipe: feature one uses a tensor-product
//! Fourier family on a rectangle, feature two a Legendre family on an
//! interval. Component `k` splits its unit H-norm between the two features
//! with a random factor `alpha_k`, eigenvalues decay exponentially as
//! `lambda_k = exp(-(k+1)/2)`, and scores are centered Gaussians with
//! variance `lambda_k`. Gaussian measurement noise and random sparsification
//! reproduce the irregular sampling designs exercised by the benchmark.
//!
//! All randomness flows through caller-provided generators; [`replication_rng`]
//! builds independent, reproducible streams per replication and purpose.

use crate::error::{MfpcaError, Result};
use crate::fdata::{MultiGridFn, MultivariateFunctionalDataset};
use crate::grid::{quadrature_weights, DomainGrid};
use crate::linalg;
use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// Orthonormal Fourier family on `[a, b]`: constant, then for each frequency
/// `j` a cosine followed by a sine, all L2-normalized. Rows index functions.
fn fourier_family_1d(num: usize, ax: &[f64], a: f64, b: f64) -> Array2<f64> {
    let len = b - a;
    let mut fam = Array2::zeros((num, ax.len()));
    for (col, &x) in ax.iter().enumerate() {
        let u = (x - a) / len;
        for idx in 0..num {
            fam[[idx, col]] = if idx == 0 {
                1.0 / len.sqrt()
            } else {
                let j = ((idx + 1) / 2) as f64;
                let arg = 2.0 * std::f64::consts::PI * j * u;
                let scale = (2.0 / len).sqrt();
                if idx % 2 == 1 {
                    scale * arg.cos()
                } else {
                    scale * arg.sin()
                }
            };
        }
    }
    fam
}

/// Deterministic enumeration of tensor index pairs:
/// `(1,1), (1,2), (2,1), (2,2), (1,3), (3,1), (2,3), (3,2), (3,3), ...`
/// (a diagonal sweep of the index square).
pub fn diagonal_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k);
    let mut m = 1;
    while pairs.len() < k {
        if m == 1 {
            pairs.push((1, 1));
        } else {
            for i in 1..m {
                pairs.push((i, m));
                pairs.push((m, i));
                if pairs.len() >= k {
                    break;
                }
            }
            if pairs.len() < k {
                pairs.push((m, m));
            }
        }
        m += 1;
    }
    pairs.truncate(k);
    pairs
}

/// Re-orthonormalizes a family of functions under grid quadrature: computes
/// the quadrature Gram `G = F diag(q) F^T`, factors `G = L L^T`, and returns
/// `L^{-1} F`, whose quadrature Gram is the identity up to rounding.
fn discrete_orthonormalize(fam: &mut Array2<f64>, q: &Array1<f64>) -> Result<()> {
    let weighted = fam as &Array2<f64> * &q.broadcast(fam.dim()).unwrap();
    let gram = weighted.dot(&fam.t());
    let l = linalg::chol_lower(&gram).map_err(|_| MfpcaError::DegenerateFeature {
        feature: usize::MAX,
        reason: "family is discretely rank-deficient on this grid".into(),
    })?;
    linalg::solve_lower_in_place(&l, fam);
    Ok(())
}

fn flat_quadrature(grid: &DomainGrid) -> Result<Array1<f64>> {
    Ok(Array1::from(
        quadrature_weights(grid)?.into_raw_vec_and_offset().0,
    ))
}

/// Raw (analytically normalized) tensor-product Fourier family; caller decides
/// whether to re-orthonormalize under the grid quadrature.
fn raw_fourier_tensor(k: usize, grid: &DomainGrid) -> Result<Array2<f64>> {
    if grid.ndim() != 2 {
        return Err(MfpcaError::InvalidArgument(format!(
            "tensor Fourier basis needs a 2-axis grid, got {} axes",
            grid.ndim()
        )));
    }
    if k == 0 {
        return Err(MfpcaError::InvalidArgument("need at least one basis function".into()));
    }
    let pairs = diagonal_pairs(k);
    let max_index = pairs.iter().map(|&(i, j)| i.max(j)).max().unwrap();
    let shape = grid.shape();
    // more axis functions than axis points would alias under the grid
    if max_index > shape[0] || max_index > shape[1] {
        return Err(MfpcaError::InvalidArgument(format!(
            "{k} tensor pairs need {max_index} functions per axis; grid is {}x{}",
            shape[0], shape[1]
        )));
    }
    let ax1 = &grid.axes()[0];
    let ax2 = &grid.axes()[1];
    let f1 = fourier_family_1d(max_index, ax1, ax1[0], ax1[ax1.len() - 1]);
    let f2 = fourier_family_1d(max_index, ax2, ax2[0], ax2[ax2.len() - 1]);
    let mut out = Array2::zeros((k, grid.len()));
    for (row, &(i, j)) in pairs.iter().enumerate() {
        for (c1, &v1) in f1.row(i - 1).iter().enumerate() {
            for (c2, &v2) in f2.row(j - 1).iter().enumerate() {
                out[[row, c1 * shape[1] + c2]] = v1 * v2;
            }
        }
    }
    Ok(out)
}

/// Raw (analytically normalized) Legendre family on the grid's interval,
/// built by the three-term recurrence and mapped from `[-1, 1]`.
fn raw_legendre(k: usize, grid: &DomainGrid) -> Result<Array2<f64>> {
    if grid.ndim() != 1 {
        return Err(MfpcaError::InvalidArgument(format!(
            "Legendre basis needs a 1-axis grid, got {} axes",
            grid.ndim()
        )));
    }
    if k == 0 {
        return Err(MfpcaError::InvalidArgument("need at least one basis function".into()));
    }
    let ax = &grid.axes()[0];
    let (a, b) = (ax[0], ax[ax.len() - 1]);
    let m = ax.len();
    let mut fam = Array2::zeros((k, m));
    let x: Vec<f64> = ax.iter().map(|&t| 2.0 * (t - a) / (b - a) - 1.0).collect();
    let mut p_prev = vec![1.0; m];
    let mut p_cur: Vec<f64> = x.clone();
    for kk in 0..k {
        let norm = ((2 * kk + 1) as f64 / (b - a)).sqrt();
        if kk == 0 {
            for c in 0..m {
                fam[[kk, c]] = norm;
            }
        } else if kk == 1 {
            for c in 0..m {
                fam[[kk, c]] = norm * p_cur[c];
            }
        } else {
            let kf = kk as f64;
            let mut p_next = vec![0.0; m];
            for c in 0..m {
                p_next[c] = ((2.0 * kf - 1.0) * x[c] * p_cur[c] - (kf - 1.0) * p_prev[c]) / kf;
            }
            p_prev = std::mem::replace(&mut p_cur, p_next);
            for c in 0..m {
                fam[[kk, c]] = norm * p_cur[c];
            }
        }
    }
    Ok(fam)
}

/// First `k` functions of the tensor-product Fourier basis on a rectangle,
/// orthonormalized under the grid quadrature. Rows index basis functions,
/// columns the row-major flattened grid.
pub fn fourier_tensor_basis(k: usize, grid: &DomainGrid) -> Result<Array2<f64>> {
    if k > grid.len() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{k} basis functions cannot be independent on {} grid points",
            grid.len()
        )));
    }
    let mut fam = raw_fourier_tensor(k, grid)?;
    discrete_orthonormalize(&mut fam, &flat_quadrature(grid)?)?;
    Ok(fam)
}

/// First `k` Legendre polynomials mapped to the grid's interval,
/// orthonormalized under the grid quadrature. Rows index basis functions.
pub fn legendre_basis(k: usize, grid: &DomainGrid) -> Result<Array2<f64>> {
    if k > grid.len() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{k} basis functions cannot be independent on {} grid points",
            grid.len()
        )));
    }
    let mut fam = raw_legendre(k, grid)?;
    discrete_orthonormalize(&mut fam, &flat_quadrature(grid)?)?;
    Ok(fam)
}

/// How the per-component split factors `alpha_k` are chosen.
#[derive(Debug, Clone)]
pub enum AlphaRule {
    /// Independent draws from `U(lo, hi)`; the reference setting is `U(0.2, 0.8)`.
    Uniform { lo: f64, hi: f64 },
    /// Explicit factors, one per component, each strictly inside `(0, 1)`.
    Fixed(Vec<f64>),
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::Uniform { lo: 0.2, hi: 0.8 }
    }
}

/// A truncated Karhunen-Loeve model over two features (a rectangle-valued
/// image component and an interval-valued curve component).
///
/// The component functions are orthonormal in H under the generation grids'
/// quadrature, and the eigenvalues decrease as `exp(-(k+1)/2)`.
#[derive(Debug, Clone)]
pub struct KlModel {
    grids: Vec<Arc<DomainGrid>>,
    eigenvalues: Vec<f64>,
    alphas: Vec<f64>,
    /// Per feature: `K x M_p`, flattened row-major over the grid.
    components: Vec<Array2<f64>>,
    mean: MultiGridFn,
}

/// Builds a [`KlModel`] with `k` components on the given rectangle and
/// interval grids.
///
/// Component `k` is the pair `(alpha_k^{1/2} f_k, (1-alpha_k)^{1/2} g_k)`
/// with `f` from the tensor Fourier family and `g` from the Legendre family;
/// the whole multivariate family is then re-orthonormalized jointly under the
/// grid quadrature, so `<phi_k, phi_j>_H = delta_kj` holds to rounding even on
/// coarse grids where the univariate families are not discretely orthonormal.
pub fn build_kl_model<R: Rng>(
    k: usize,
    rect: Arc<DomainGrid>,
    interval: Arc<DomainGrid>,
    alpha: &AlphaRule,
    rng: &mut R,
) -> Result<KlModel> {
    if k == 0 {
        return Err(MfpcaError::InvalidArgument("need at least one component".into()));
    }
    let alphas: Vec<f64> = match alpha {
        AlphaRule::Uniform { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && 0.0 < *lo && *lo <= *hi && *hi < 1.0) {
                return Err(MfpcaError::InvalidArgument(format!(
                    "alpha range ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
                )));
            }
            let u = Uniform::new_inclusive(*lo, *hi);
            (0..k).map(|_| u.sample(rng)).collect()
        }
        AlphaRule::Fixed(a) => {
            if a.len() != k {
                return Err(MfpcaError::InvalidArgument(format!(
                    "{} alpha factors for {k} components",
                    a.len()
                )));
            }
            if a.iter().any(|&x| !(x.is_finite() && 0.0 < x && x < 1.0)) {
                return Err(MfpcaError::InvalidArgument(
                    "alpha factors must lie strictly inside (0, 1)".into(),
                ));
            }
            a.clone()
        }
    };
    let mut phi1 = raw_fourier_tensor(k, &rect)?;
    let mut phi2 = raw_legendre(k, &interval)?;
    for (row, &a) in alphas.iter().enumerate() {
        let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
        phi1.row_mut(row).mapv_inplace(|v| v * sa);
        phi2.row_mut(row).mapv_inplace(|v| v * sb);
    }
    // joint re-orthonormalization under the H inner product: Cholesky of the
    // multivariate quadrature Gram, then a triangular solve on both blocks
    let q1 = flat_quadrature(&rect)?;
    let q2 = flat_quadrature(&interval)?;
    let w1 = &phi1 * &q1.broadcast(phi1.dim()).unwrap();
    let w2 = &phi2 * &q2.broadcast(phi2.dim()).unwrap();
    let gram = w1.dot(&phi1.t()) + w2.dot(&phi2.t());
    let l = linalg::chol_lower(&gram).map_err(|_| MfpcaError::DegenerateFeature {
        feature: usize::MAX,
        reason: "joint component family is rank-deficient on these grids".into(),
    })?;
    linalg::solve_lower_in_place(&l, &mut phi1);
    linalg::solve_lower_in_place(&l, &mut phi2);
    let eigenvalues = (1..=k).map(|i| (-((i + 1) as f64) / 2.0).exp()).collect();
    let mean = MultiGridFn::zeros(vec![rect.clone(), interval.clone()]);
    Ok(KlModel {
        grids: vec![rect, interval],
        eigenvalues,
        alphas,
        components: vec![phi1, phi2],
        mean,
    })
}

impl KlModel {
    /// Number of components `K`.
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues `lambda_k = exp(-(k+1)/2)`, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The split factors `alpha_k` actually used.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Generation grids, one per feature.
    pub fn grids(&self) -> &[Arc<DomainGrid>] {
        &self.grids
    }

    /// Component values for one feature as a `K x M_p` matrix.
    pub fn component(&self, p: usize) -> &Array2<f64> {
        &self.components[p]
    }

    /// The mean function added to every simulated observation.
    pub fn mean(&self) -> &MultiGridFn {
        &self.mean
    }

    /// Replaces the (default zero) mean function.
    pub fn with_mean(mut self, mean: MultiGridFn) -> Result<Self> {
        if mean.n_features() != self.grids.len()
            || mean
                .grids()
                .iter()
                .zip(&self.grids)
                .any(|(a, b)| !(Arc::ptr_eq(a, b) || a == b))
        {
            return Err(MfpcaError::GridMismatch(
                "mean must live on the model grids".into(),
            ));
        }
        self.mean = mean;
        Ok(self)
    }

    /// Component `k` as a multivariate grid function.
    pub fn eigenfunction(&self, k: usize) -> MultiGridFn {
        let blocks = self
            .components
            .iter()
            .zip(&self.grids)
            .map(|(c, g)| {
                c.row(k)
                    .to_owned()
                    .into_shape_with_order(ndarray::IxDyn(&g.shape()))
                    .expect("component row matches grid size")
            })
            .collect();
        MultiGridFn::new(self.grids.clone(), blocks).expect("blocks built from model grids")
    }

    /// Draws `n` observations `X = mu + sum_k c_k phi_k` with independent
    /// scores `c_k ~ N(0, lambda_k)`; returns the dataset (uniform observation
    /// weights) and the `n x K` matrix of true scores.
    pub fn simulate<R: Rng>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(MultivariateFunctionalDataset, Array2<f64>)> {
        if n == 0 {
            return Err(MfpcaError::InvalidArgument("need at least one observation".into()));
        }
        let k = self.n_components();
        let mut scores = Array2::zeros((n, k));
        for i in 0..n {
            for j in 0..k {
                let z: f64 = rng.sample(StandardNormal);
                scores[[i, j]] = z * self.eigenvalues[j].sqrt();
            }
        }
        let values = self
            .components
            .iter()
            .enumerate()
            .map(|(p, comp)| {
                let mut x = scores.dot(comp);
                let mu = self.mean.block(p);
                let flat = mu.as_slice().expect("mean blocks are standard layout");
                for mut row in x.rows_mut() {
                    for (v, &m) in row.iter_mut().zip(flat) {
                        *v += m;
                    }
                }
                x
            })
            .collect();
        let ds = MultivariateFunctionalDataset::from_matrices(
            self.grids.clone(),
            values,
            vec![None; self.grids.len()],
            None,
        )?;
        Ok((ds, scores))
    }
}

/// Per-feature measurement-noise variances `sigma_p^2`.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub sigma2: Vec<f64>,
}

impl NoiseSpec {
    /// Equal noise variance on every feature.
    pub fn iso(p: usize, sigma2: f64) -> Self {
        NoiseSpec {
            sigma2: vec![sigma2; p],
        }
    }
}

/// Adds independent centered Gaussian noise of variance `sigma_p^2` to every
/// observed grid point of feature `p`. Masks are unchanged; a zero variance
/// leaves the feature untouched.
pub fn add_noise<R: Rng>(
    ds: &MultivariateFunctionalDataset,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<MultivariateFunctionalDataset> {
    if spec.sigma2.len() != ds.n_features() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{} noise variances for {} features",
            spec.sigma2.len(),
            ds.n_features()
        )));
    }
    if spec.sigma2.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
        return Err(MfpcaError::InvalidArgument(
            "noise variances must be finite and nonnegative".into(),
        ));
    }
    let grids = ds.grids();
    let mut values = Vec::with_capacity(ds.n_features());
    let mut masks = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        let mut x = ds.values_matrix(p);
        let mask = ds.mask_matrix(p);
        let sd = spec.sigma2[p].sqrt();
        if sd > 0.0 {
            match &mask {
                None => {
                    for v in x.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v += sd * z;
                    }
                }
                Some(m) => {
                    for (v, &obs) in x.iter_mut().zip(m.iter()) {
                        if obs {
                            let z: f64 = rng.sample(StandardNormal);
                            *v += sd * z;
                        }
                    }
                }
            }
        }
        values.push(x);
        masks.push(mask);
    }
    MultivariateFunctionalDataset::from_matrices(
        grids,
        values,
        masks,
        Some(ds.obs_weights().to_vec()),
    )
}

/// Sparsification regimes: the share of grid points removed per curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityRegime {
    /// 50-70% of points missing.
    Medium,
    /// 90-95% of points missing.
    High,
    /// Arbitrary missing-fraction range `[lo, hi]`, `0 <= lo <= hi < 1`.
    Custom { lo: f64, hi: f64 },
}

impl SparsityRegime {
    fn range(self) -> Result<(f64, f64)> {
        let (lo, hi) = match self {
            SparsityRegime::Medium => (0.50, 0.70),
            SparsityRegime::High => (0.90, 0.95),
            SparsityRegime::Custom { lo, hi } => (lo, hi),
        };
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(MfpcaError::InvalidArgument(format!(
                "missing-fraction range ({lo}, {hi}) must satisfy 0 <= lo <= hi < 1"
            )));
        }
        Ok((lo, hi))
    }
}

/// True when the observed flat indices contain at least two distinct
/// coordinates along every axis of `shape`.
fn covers_all_axes(observed: &[usize], shape: &[usize]) -> bool {
    if observed.len() < 2 {
        return false;
    }
    let mut stride = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        stride[d] = stride[d + 1] * shape[d + 1];
    }
    for d in 0..shape.len() {
        let first = (observed[0] / stride[d]) % shape[d];
        if !observed
            .iter()
            .any(|&f| (f / stride[d]) % shape[d] != first)
        {
            return false;
        }
    }
    true
}

/// Independently masks a random share of each curve's grid points.
///
/// For every observation and feature, a missing fraction is drawn uniformly
/// from the regime's range and that many grid points (rounded down, never more
/// than `M_p - 2`) are masked uniformly at random; if the surviving points do
/// not span at least two distinct coordinates along every axis, random points
/// are unmasked until they do. Masked slots are zeroed.
pub fn sparsify<R: Rng>(
    ds: &MultivariateFunctionalDataset,
    regime: SparsityRegime,
    rng: &mut R,
) -> Result<MultivariateFunctionalDataset> {
    let (lo, hi) = regime.range()?;
    let grids = ds.grids();
    for g in &grids {
        if g.len() < 2 {
            return Err(MfpcaError::InvalidArgument(
                "grid too small to keep two observed points per curve".into(),
            ));
        }
    }
    let frac = Uniform::new_inclusive(lo, hi);
    let n = ds.n_obs();
    let mut values = Vec::with_capacity(ds.n_features());
    let mut masks = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        let m = grids[p].len();
        let shape = grids[p].shape();
        let mut x = ds.values_matrix(p);
        let mut mask = ds
            .mask_matrix(p)
            .unwrap_or_else(|| Array2::from_elem((n, m), true));
        for i in 0..n {
            let n_miss = ((frac.sample(rng) * m as f64).floor() as usize).min(m - 2);
            if n_miss == 0 {
                continue;
            }
            for idx in rand::seq::index::sample(rng, m, n_miss) {
                mask[[i, idx]] = false;
            }
            let mut observed: Vec<usize> =
                (0..m).filter(|&j| mask[[i, j]]).collect();
            while !covers_all_axes(&observed, &shape) {
                let hidden: Vec<usize> = (0..m).filter(|&j| !mask[[i, j]]).collect();
                let pick = hidden[rng.gen_range(0..hidden.len())];
                mask[[i, pick]] = true;
                observed.push(pick);
            }
            for j in 0..m {
                if !mask[[i, j]] {
                    x[[i, j]] = 0.0;
                }
            }
        }
        values.push(x);
        masks.push(Some(mask));
    }
    MultivariateFunctionalDataset::from_matrices(
        grids,
        values,
        masks,
        Some(ds.obs_weights().to_vec()),
    )
}

/// Purposes for the per-replication random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngPurpose {
    /// Component split factors `alpha_k`.
    Alphas = 0,
    /// Karhunen-Loeve scores.
    Scores = 1,
    /// Measurement noise.
    Noise = 2,
    /// Sparsification masks.
    Masks = 3,
}

/// A counter-based generator on an independent stream per `(replication,
/// purpose)` pair, so scores, noise, masks, and split factors never share
/// random state and replications parallelize deterministically.
pub fn replication_rng(master_seed: u64, replication: u64, purpose: RngPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((replication << 8) | purpose as u64);
    rng
}
