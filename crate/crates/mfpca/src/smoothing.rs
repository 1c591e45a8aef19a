//! Preprocessing of irregular functional data: penalized B-spline smoothing,
//! linear interpolation, and difference-based noise-variance estimation.
//!
//! Noisy curves are smoothed by P-splines — a rich cubic B-spline basis with a
//! difference penalty on the coefficients — with the penalty chosen per curve
//! by generalized cross-validation over a log-spaced grid. Sparse curves can
//! instead be completed by axis-wise linear interpolation. Both return dense
//! samples ready for the quadrature-based estimators.

use crate::error::{MfpcaError, Result};
use crate::fdata::{FeatureSample, MultivariateFunctionalDataset};
use crate::grid::DomainGrid;
use crate::linalg;
use ndarray::{Array1, Array2, ArrayD};
use rayon::prelude::*;
use std::sync::Arc;

/// Cubic B-spline basis on the extended uniform knot vector of a grid axis.
#[derive(Debug, Clone)]
struct AxisBasis {
    knots: Vec<f64>,
    nbasis: usize,
    degree: usize,
    /// `m_axis x nbasis` design matrix over the axis points.
    design: Array2<f64>,
}

impl AxisBasis {
    fn cubic(axis: &[f64], nbasis: usize) -> Result<Self> {
        let degree = 3;
        if nbasis < degree + 1 {
            return Err(MfpcaError::InvalidArgument(format!(
                "cubic B-splines need at least {} basis functions, got {nbasis}",
                degree + 1
            )));
        }
        let (a, b) = (axis[0], axis[axis.len() - 1]);
        let nseg = nbasis - degree;
        let h = (b - a) / nseg as f64;
        // uniform knots extended `degree` segments beyond each end
        let knots: Vec<f64> = (0..=nbasis + degree)
            .map(|i| a + (i as f64 - degree as f64) * h)
            .collect();
        let mut design = Array2::zeros((axis.len(), nbasis));
        let basis = AxisBasis {
            knots,
            nbasis,
            degree,
            design: Array2::zeros((0, 0)),
        };
        for (r, &x) in axis.iter().enumerate() {
            let (start, vals) = basis.row_at(x);
            for (c, &v) in vals.iter().enumerate() {
                design[[r, start + c]] = v;
            }
        }
        Ok(AxisBasis { design, ..basis })
    }

    /// Nonzero basis values at `x`: `(first index, degree+1 values)`,
    /// computed with the standard triangular recurrence.
    fn row_at(&self, x: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        // knot span index j with t_j <= x < t_{j+1}, clamped to the domain
        let a = self.knots[p];
        let h = self.knots[p + 1] - self.knots[p];
        let mut j = p + (((x - a) / h).floor() as isize).max(0) as usize;
        j = j.min(self.nbasis - 1);
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for q in 1..=p {
            left[q] = x - t[j + 1 - q];
            right[q] = t[j + q] - x;
            let mut saved = 0.0;
            for r in 0..q {
                let temp = n[r] / (right[r + 1] + left[q - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[q - r] * temp;
            }
            n[q] = saved;
        }
        (j - p, n)
    }
}

/// Tensor-product B-spline basis over a (1- or 2-axis) grid.
///
/// Rows of the design matrix form a partition of unity and have local
/// support (`degree + 1` nonzero entries per axis).
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    grid: Arc<DomainGrid>,
    axes: Vec<AxisBasis>,
}

impl BSplineBasis {
    /// Cubic basis with `nbasis[d]` functions along axis `d`.
    pub fn cubic(grid: Arc<DomainGrid>, nbasis: &[usize]) -> Result<Self> {
        if nbasis.len() != grid.ndim() {
            return Err(MfpcaError::InvalidArgument(format!(
                "{} basis sizes for a {}-axis grid",
                nbasis.len(),
                grid.ndim()
            )));
        }
        let axes = grid
            .axes()
            .iter()
            .zip(nbasis)
            .map(|(ax, &nb)| AxisBasis::cubic(ax, nb))
            .collect::<Result<Vec<_>>>()?;
        Ok(BSplineBasis { grid, axes })
    }

    /// The grid the basis is evaluated on.
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    /// Total number of coefficients (product over axes).
    pub fn n_coefficients(&self) -> usize {
        self.axes.iter().map(|a| a.nbasis).product()
    }

    /// Per-axis design matrix (`m_d x nbasis_d`).
    pub fn axis_design(&self, d: usize) -> &Array2<f64> {
        &self.axes[d].design
    }

    /// Full design matrix over the flattened grid (`M x n_coefficients`),
    /// the row-major tensor product of the axis designs.
    pub fn tensor_design(&self) -> Array2<f64> {
        match self.axes.len() {
            1 => self.axes[0].design.clone(),
            2 => {
                let (b1, b2) = (&self.axes[0].design, &self.axes[1].design);
                let (m1, n1) = b1.dim();
                let (m2, n2) = b2.dim();
                let mut out = Array2::zeros((m1 * m2, n1 * n2));
                for i1 in 0..m1 {
                    for i2 in 0..m2 {
                        let row = i1 * m2 + i2;
                        for c1 in 0..n1 {
                            let v1 = b1[[i1, c1]];
                            if v1 == 0.0 {
                                continue;
                            }
                            for c2 in 0..n2 {
                                out[[row, c1 * n2 + c2]] = v1 * b2[[i2, c2]];
                            }
                        }
                    }
                }
                out
            }
            d => unreachable!("grids are validated to 1 or 2 axes, got {d}"),
        }
    }

    /// Difference penalty matrix `P` of the given order: `D^T D` along each
    /// axis, combined as a Kronecker sum for 2-axis grids.
    pub fn penalty_matrix(&self, order: usize) -> Result<Array2<f64>> {
        let per_axis: Vec<Array2<f64>> = self
            .axes
            .iter()
            .map(|a| difference_penalty(a.nbasis, order))
            .collect::<Result<_>>()?;
        match per_axis.len() {
            1 => Ok(per_axis.into_iter().next().unwrap()),
            2 => {
                let (p1, p2) = (&per_axis[0], &per_axis[1]);
                let (n1, n2) = (p1.nrows(), p2.nrows());
                let nt = n1 * n2;
                let mut out = Array2::zeros((nt, nt));
                for i1 in 0..n1 {
                    for j1 in 0..n1 {
                        let v = p1[[i1, j1]];
                        if v != 0.0 {
                            for c in 0..n2 {
                                out[[i1 * n2 + c, j1 * n2 + c]] += v;
                            }
                        }
                    }
                }
                for i2 in 0..n2 {
                    for j2 in 0..n2 {
                        let v = p2[[i2, j2]];
                        if v != 0.0 {
                            for r in 0..n1 {
                                out[[r * n2 + i2, r * n2 + j2]] += v;
                            }
                        }
                    }
                }
                Ok(out)
            }
            d => unreachable!("grids are validated to 1 or 2 axes, got {d}"),
        }
    }

    /// Nonzero tensor design entries at one flattened grid point:
    /// `(coefficient index, value)` pairs.
    fn sparse_row(&self, flat: usize) -> Vec<(usize, f64)> {
        match self.axes.len() {
            1 => {
                let b = &self.axes[0].design;
                (0..b.ncols())
                    .filter_map(|c| {
                        let v = b[[flat, c]];
                        (v != 0.0).then_some((c, v))
                    })
                    .collect()
            }
            2 => {
                let m2 = self.grid.shape()[1];
                let (i1, i2) = (flat / m2, flat % m2);
                let (b1, b2) = (&self.axes[0].design, &self.axes[1].design);
                let n2 = b2.ncols();
                let mut out = Vec::with_capacity(16);
                for c1 in 0..b1.ncols() {
                    let v1 = b1[[i1, c1]];
                    if v1 == 0.0 {
                        continue;
                    }
                    for c2 in 0..n2 {
                        let v2 = b2[[i2, c2]];
                        if v2 != 0.0 {
                            out.push((c1 * n2 + c2, v1 * v2));
                        }
                    }
                }
                out
            }
            d => unreachable!("grids are validated to 1 or 2 axes, got {d}"),
        }
    }

    /// Fitted values on the full grid from a coefficient vector.
    pub fn evaluate(&self, coefficients: &Array1<f64>) -> Result<ArrayD<f64>> {
        if coefficients.len() != self.n_coefficients() {
            return Err(MfpcaError::ShapeMismatch {
                expected: vec![self.n_coefficients()],
                got: vec![coefficients.len()],
            });
        }
        let flat: Array1<f64> = match self.axes.len() {
            1 => self.axes[0].design.dot(coefficients),
            2 => {
                let (b1, b2) = (&self.axes[0].design, &self.axes[1].design);
                let c = coefficients
                    .view()
                    .into_shape_with_order((b1.ncols(), b2.ncols()))
                    .expect("coefficient count matches axis basis sizes");
                let fitted = b1.dot(&c).dot(&b2.t());
                Array1::from(fitted.into_raw_vec_and_offset().0)
            }
            d => unreachable!("grids are validated to 1 or 2 axes, got {d}"),
        };
        Ok(flat
            .into_shape_with_order(ndarray::IxDyn(&self.grid.shape()))
            .expect("fit covers the full grid"))
    }
}

/// `D^T D` for the order-`d` forward-difference matrix on `n` coefficients.
fn difference_penalty(n: usize, order: usize) -> Result<Array2<f64>> {
    if order == 0 || order >= n {
        return Err(MfpcaError::InvalidArgument(format!(
            "difference order {order} must lie in 1..{n}"
        )));
    }
    // binomial coefficients with alternating signs, e.g. order 2 -> [1, -2, 1]
    let mut coef = vec![1.0f64];
    for _ in 0..order {
        let mut next = vec![0.0; coef.len() + 1];
        for (i, &c) in coef.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        coef = next;
    }
    let rows = n - order;
    let mut p = Array2::zeros((n, n));
    for r in 0..rows {
        for (i, &ci) in coef.iter().enumerate() {
            for (j, &cj) in coef.iter().enumerate() {
                p[[r + i, r + j]] += ci * cj;
            }
        }
    }
    Ok(p)
}

/// Difference-penalty specification for a P-spline fit.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    /// Order of the coefficient difference penalty (default 2).
    pub order: usize,
    /// Penalty value `lambda >= 0`.
    pub lambda: f64,
}

impl PenaltySpec {
    /// Order-2 penalty with the given value.
    pub fn with_lambda(lambda: f64) -> Self {
        PenaltySpec { order: 2, lambda }
    }

    /// The default selection grid: 11 log-spaced values `10^-5 .. 10^5`.
    pub fn default_grid() -> Vec<f64> {
        (-5..=5).map(|e| 10f64.powi(e)).collect()
    }
}

/// Result of a penalized B-spline fit.
#[derive(Debug, Clone)]
pub struct PsplineFit {
    /// Solved coefficient vector.
    pub coefficients: Array1<f64>,
    /// Fitted values on the full grid.
    pub fitted: ArrayD<f64>,
    /// Effective degrees of freedom `tr((B^T B + lambda P)^{-1} B^T B)`.
    pub edf: f64,
    /// Residual sum of squares over the observed points.
    pub rss: f64,
    /// Generalized cross-validation score `(rss/m) / (1 - edf/m)^2`.
    pub gcv: f64,
}

/// Penalized least-squares B-spline fit of one (possibly masked) sample:
/// solves `(B^T B + lambda P) c = B^T y` over the observed points and
/// evaluates the fit on the full grid.
pub fn psplines_fit(
    sample: &FeatureSample,
    basis: &BSplineBasis,
    pen: &PenaltySpec,
) -> Result<PsplineFit> {
    if sample.grid().as_ref() != basis.grid().as_ref() {
        return Err(MfpcaError::GridMismatch(
            "sample and basis live on different grids".into(),
        ));
    }
    if !(pen.lambda.is_finite() && pen.lambda >= 0.0) {
        return Err(MfpcaError::InvalidArgument(format!(
            "penalty {} must be finite and nonnegative",
            pen.lambda
        )));
    }
    let nb = basis.n_coefficients();
    let values = sample
        .values()
        .as_slice()
        .expect("samples are stored in standard layout");
    let mask = sample.mask().map(|m| {
        m.as_slice()
            .expect("masks are stored in standard layout")
            .to_vec()
    });
    let mut btb = Array2::zeros((nb, nb));
    let mut bty = Array1::zeros(nb);
    let mut m_obs = 0usize;
    for (flat, &y) in values.iter().enumerate() {
        if let Some(m) = &mask {
            if !m[flat] {
                continue;
            }
        }
        m_obs += 1;
        let row = basis.sparse_row(flat);
        for &(i, vi) in &row {
            bty[i] += vi * y;
            for &(j, vj) in &row {
                btb[[i, j]] += vi * vj;
            }
        }
    }
    if m_obs == 0 {
        return Err(MfpcaError::EmptyCurve {
            feature: usize::MAX,
            observation: usize::MAX,
        });
    }
    let penalty = basis.penalty_matrix(pen.order)?;
    let lhs = &btb + &(&penalty * pen.lambda);
    let rhs = bty.clone().insert_axis(ndarray::Axis(1));
    let solved = linalg::solve_spd(&lhs, &rhs).map_err(|_| MfpcaError::SingularSystem {
        op: "psplines_fit",
        hint: format!(
            "normal equations are rank-deficient at lambda = {}; increase the penalty",
            pen.lambda
        ),
    })?;
    let coefficients = solved.column(0).to_owned();
    let fitted = basis.evaluate(&coefficients)?;
    // edf = trace of the hat matrix = tr((B^T B + lambda P)^{-1} B^T B)
    let hat = linalg::solve_spd(&lhs, &btb).map_err(|_| MfpcaError::SingularSystem {
        op: "psplines_fit",
        hint: "normal equations are rank-deficient; increase the penalty".into(),
    })?;
    let edf: f64 = (0..nb).map(|i| hat[[i, i]]).sum();
    let fitted_flat = fitted
        .as_slice()
        .expect("fitted values are stored in standard layout");
    let mut rss = 0.0;
    for (flat, (&y, &f)) in values.iter().zip(fitted_flat).enumerate() {
        let observed = mask.as_ref().map_or(true, |m| m[flat]);
        if observed {
            rss += (y - f) * (y - f);
        }
    }
    let m = m_obs as f64;
    let denom = 1.0 - edf / m;
    let gcv = if denom > 0.0 {
        (rss / m) / (denom * denom)
    } else {
        f64::INFINITY
    };
    Ok(PsplineFit {
        coefficients,
        fitted,
        edf,
        rss,
        gcv,
    })
}

/// A GCV-selected penalty and its winning fit.
#[derive(Debug, Clone)]
pub struct SelectedPenalty {
    pub lambda: f64,
    pub gcv: f64,
    pub fit: PsplineFit,
}

/// Selects the penalty minimizing the GCV score over a candidate grid,
/// breaking ties toward the larger (smoother) penalty. Candidates whose
/// normal equations are singular are skipped.
pub fn select_penalty(
    sample: &FeatureSample,
    basis: &BSplineBasis,
    order: usize,
    grid: &[f64],
) -> Result<SelectedPenalty> {
    if grid.is_empty() {
        return Err(MfpcaError::InvalidArgument(
            "penalty grid must contain at least one candidate".into(),
        ));
    }
    let mut candidates: Vec<f64> = grid.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("penalty grid must be finite"));
    let mut best: Option<SelectedPenalty> = None;
    for &lambda in &candidates {
        let fit = match psplines_fit(sample, basis, &PenaltySpec { order, lambda }) {
            Ok(f) => f,
            Err(MfpcaError::SingularSystem { .. }) => continue,
            Err(e) => return Err(e),
        };
        let better = best.as_ref().map_or(true, |b| fit.gcv <= b.gcv);
        if better {
            best = Some(SelectedPenalty {
                lambda,
                gcv: fit.gcv,
                fit,
            });
        }
    }
    best.ok_or_else(|| MfpcaError::SingularSystem {
        op: "select_penalty",
        hint: "every candidate penalty left the normal equations singular".into(),
    })
}

/// Axis-wise linear interpolation of a masked sample onto its full grid.
///
/// 1-axis grids use piecewise-linear interpolation through the observed
/// points with constant extrapolation beyond the extremes. 2-axis grids are
/// filled in a fixed order: first along axis 1 within each row that has data,
/// then along axis 0 down each column to fill rows with no data.
pub fn linear_interpolate(sample: &FeatureSample) -> Result<FeatureSample> {
    let Some(mask) = sample.mask() else {
        return Ok(sample.clone());
    };
    if sample.n_observed() == 0 {
        return Err(MfpcaError::EmptyCurve {
            feature: usize::MAX,
            observation: usize::MAX,
        });
    }
    let grid = sample.grid().clone();
    match grid.ndim() {
        1 => {
            let ax = &grid.axes()[0];
            let vals = sample.values().as_slice().expect("standard layout");
            let msk = mask.as_slice().expect("standard layout");
            let filled = interp_lane(ax, vals, msk);
            FeatureSample::dense(
                grid.clone(),
                ArrayD::from_shape_vec(ndarray::IxDyn(&grid.shape()), filled)
                    .expect("filled lane matches grid size"),
            )
        }
        2 => {
            let shape = grid.shape();
            let (m0, m1) = (shape[0], shape[1]);
            let ax0 = &grid.axes()[0];
            let ax1 = &grid.axes()[1];
            let vals = sample.values().as_slice().expect("standard layout");
            let msk = mask.as_slice().expect("standard layout");
            let mut out = vec![f64::NAN; m0 * m1];
            let mut row_done = vec![false; m0];
            for i in 0..m0 {
                let row_vals = &vals[i * m1..(i + 1) * m1];
                let row_mask = &msk[i * m1..(i + 1) * m1];
                if row_mask.iter().any(|&b| b) {
                    out[i * m1..(i + 1) * m1].copy_from_slice(&interp_lane(ax1, row_vals, row_mask));
                    row_done[i] = true;
                }
            }
            if !row_done.iter().all(|&b| b) {
                for j in 0..m1 {
                    let col_vals: Vec<f64> = (0..m0).map(|i| out[i * m1 + j]).collect();
                    let filled = interp_lane(ax0, &col_vals, &row_done);
                    for i in 0..m0 {
                        if !row_done[i] {
                            out[i * m1 + j] = filled[i];
                        }
                    }
                }
            }
            FeatureSample::dense(
                grid.clone(),
                ArrayD::from_shape_vec(ndarray::IxDyn(&shape), out)
                    .expect("filled tensor matches grid size"),
            )
        }
        d => Err(MfpcaError::InvalidAxis {
            axis: d,
            reason: "linear interpolation supports 1- and 2-axis grids".into(),
        }),
    }
}

/// Piecewise-linear fill of one lane: observed points interpolate, the ends
/// extrapolate as constants.
fn interp_lane(ax: &[f64], vals: &[f64], mask: &[bool]) -> Vec<f64> {
    let obs: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    debug_assert!(!obs.is_empty(), "caller guarantees at least one observation");
    let mut out = vec![0.0; ax.len()];
    for (i, o) in out.iter_mut().enumerate() {
        if mask[i] {
            *o = vals[i];
            continue;
        }
        let x = ax[i];
        // position among observed abscissae
        let first = obs[0];
        let last = obs[obs.len() - 1];
        *o = if x <= ax[first] {
            vals[first]
        } else if x >= ax[last] {
            vals[last]
        } else {
            let hi = obs.partition_point(|&k| ax[k] < x);
            let (k0, k1) = (obs[hi - 1], obs[hi]);
            let w = (x - ax[k0]) / (ax[k1] - ax[k0]);
            vals[k0] * (1.0 - w) + vals[k1] * w
        };
    }
    out
}

/// Interpolates every masked sample of every feature, returning a dense dataset.
pub fn interpolate_dataset(
    ds: &MultivariateFunctionalDataset,
) -> Result<MultivariateFunctionalDataset> {
    let mut features = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        let samples = ds
            .samples(p)
            .iter()
            .enumerate()
            .map(|(n, s)| {
                linear_interpolate(s).map_err(|e| match e {
                    MfpcaError::EmptyCurve { .. } => MfpcaError::EmptyCurve {
                        feature: p,
                        observation: n,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        features.push(samples);
    }
    MultivariateFunctionalDataset::new(features, Some(ds.obs_weights().to_vec()))
}

/// Smooths every curve of every feature with a GCV-selected P-spline fit.
///
/// `nbasis[p]` gives the per-axis basis sizes for feature `p`. Each curve
/// selects its own penalty over `grid` (the default grid when empty).
pub fn presmooth_dataset(
    ds: &MultivariateFunctionalDataset,
    nbasis: &[Vec<usize>],
    order: usize,
    grid: &[f64],
) -> Result<MultivariateFunctionalDataset> {
    if nbasis.len() != ds.n_features() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{} basis specifications for {} features",
            nbasis.len(),
            ds.n_features()
        )));
    }
    let default_grid = PenaltySpec::default_grid();
    let grid = if grid.is_empty() { &default_grid } else { grid };
    let mut features = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        let basis = BSplineBasis::cubic(ds.grid(p).clone(), &nbasis[p])?;
        let samples: Vec<FeatureSample> = ds
            .samples(p)
            .par_iter()
            .map(|s| {
                let sel = select_penalty(s, &basis, order, grid)?;
                FeatureSample::dense(ds.grid(p).clone(), sel.fit.fitted)
            })
            .collect::<Result<Vec<_>>>()?;
        features.push(samples);
    }
    MultivariateFunctionalDataset::new(features, Some(ds.obs_weights().to_vec()))
}

/// Difference-based noise-variance estimate for one feature's samples:
/// the mean over curves of `sum (y_{i+1} - y_i)^2 / (2 * #pairs)` taken along
/// the first axis over adjacent observed points.
pub fn estimate_noise_variance(samples: &[FeatureSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(MfpcaError::InvalidDataset("no samples".into()));
    }
    let mut per_curve = Vec::with_capacity(samples.len());
    for s in samples {
        let shape = s.grid().shape();
        let m0 = shape[0];
        let lane: usize = shape.iter().skip(1).product();
        let vals = s.values().as_slice().expect("standard layout");
        let mask = s.mask().map(|m| m.as_slice().expect("standard layout"));
        let mut sq = 0.0;
        let mut pairs = 0usize;
        for j in 0..lane {
            for i in 0..m0 - 1 {
                let (f0, f1) = (i * lane + j, (i + 1) * lane + j);
                let both = mask.map_or(true, |m| m[f0] && m[f1]);
                if both {
                    let d = vals[f1] - vals[f0];
                    sq += d * d;
                    pairs += 1;
                }
            }
        }
        if pairs > 0 {
            per_curve.push(sq / (2.0 * pairs as f64));
        }
    }
    if per_curve.is_empty() {
        return Err(MfpcaError::InvalidDataset(
            "no adjacent observed pairs along the first axis".into(),
        ));
    }
    Ok(per_curve.iter().sum::<f64>() / per_curve.len() as f64)
}
