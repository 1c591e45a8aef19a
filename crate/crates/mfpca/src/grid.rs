//! Rectangular sampling grids and trapezoid quadrature.
//!
//! A [`DomainGrid`] is the cartesian product of one or more strictly increasing
//! axes. Functions are stored as tensors over the grid in row-major axis order,
//! and integrals are approximated by tensor-product trapezoid quadrature, so an
//! L² inner product on the grid is a weighted dot product of flattened tensors.

use crate::error::{MfpcaError, Result};
use ndarray::{ArrayD, IxDyn};

/// Cartesian product of strictly increasing axes; the sampling domain of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    axes: Vec<Vec<f64>>,
}

impl DomainGrid {
    /// Builds a grid from per-axis sampling points.
    ///
    /// Every axis must hold at least two finite, strictly increasing points.
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(MfpcaError::InvalidAxis {
                axis: 0,
                reason: "grid needs at least one axis".into(),
            });
        }
        for (i, ax) in axes.iter().enumerate() {
            if ax.len() < 2 {
                return Err(MfpcaError::InvalidAxis {
                    axis: i,
                    reason: format!("needs at least 2 points, got {}", ax.len()),
                });
            }
            if ax.iter().any(|v| !v.is_finite()) {
                return Err(MfpcaError::InvalidAxis {
                    axis: i,
                    reason: "contains a non-finite point".into(),
                });
            }
            if ax.windows(2).any(|w| w[1] <= w[0]) {
                return Err(MfpcaError::InvalidAxis {
                    axis: i,
                    reason: "not strictly increasing".into(),
                });
            }
        }
        Ok(Self { axes })
    }

    /// Equidistant grid over `[a, b]` per axis; convenience for tests and simulation.
    pub fn equidistant(spans: &[(f64, f64)], points: &[usize]) -> Result<Self> {
        if spans.len() != points.len() {
            return Err(MfpcaError::InvalidArgument(
                "spans and points must have equal length".into(),
            ));
        }
        let axes = spans
            .iter()
            .zip(points)
            .map(|(&(a, b), &m)| {
                (0..m)
                    .map(|i| a + (b - a) * (i as f64) / ((m.max(2) - 1) as f64))
                    .collect()
            })
            .collect();
        Self::new(axes)
    }

    /// Number of axes.
    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    /// Points per axis.
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Total number of grid points (product over axes).
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// True when the grid has no points (never, for a constructed grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The per-axis sampling points.
    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Domain volume (product of axis spans).
    pub fn volume(&self) -> f64 {
        self.axes
            .iter()
            .map(|ax| ax[ax.len() - 1] - ax[0])
            .product()
    }

    /// Tensor-product trapezoid weights over the full grid.
    pub fn quadrature(&self) -> ArrayD<f64> {
        quadrature_weights(self).expect("constructed grids always have >=2 points per axis")
    }
}

/// Trapezoid weights for a single axis: interior point i gets
/// `(t_{i+1} - t_{i-1})/2`, the endpoints get half their adjacent interval.
pub fn quadrature_weights_1d(axis: &[f64]) -> Result<Vec<f64>> {
    let m = axis.len();
    if m < 2 {
        return Err(MfpcaError::InvalidAxis {
            axis: 0,
            reason: format!("quadrature needs at least 2 points, got {m}"),
        });
    }
    let mut w = vec![0.0; m];
    w[0] = (axis[1] - axis[0]) / 2.0;
    w[m - 1] = (axis[m - 1] - axis[m - 2]) / 2.0;
    for i in 1..m - 1 {
        w[i] = (axis[i + 1] - axis[i - 1]) / 2.0;
    }
    Ok(w)
}

/// Tensor-product trapezoid weights for a full grid, shaped like the grid.
///
/// The weights are strictly positive and sum to the domain volume.
pub fn quadrature_weights(grid: &DomainGrid) -> Result<ArrayD<f64>> {
    let per_axis: Vec<Vec<f64>> = grid
        .axes()
        .iter()
        .map(|ax| quadrature_weights_1d(ax))
        .collect::<Result<_>>()?;
    let shape = grid.shape();
    let mut out = ArrayD::from_elem(IxDyn(&shape), 1.0);
    for (axis_idx, w) in per_axis.iter().enumerate() {
        for (mut lane, &wi) in out
            .axis_iter_mut(ndarray::Axis(axis_idx))
            .zip(w.iter())
        {
            lane *= wi;
        }
    }
    Ok(out)
}
