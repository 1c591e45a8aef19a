//! Error metrics for comparing estimated eigencomponents and reconstructions
//! against references: integrated squared error of eigenfunctions (with sign
//! alignment), relative squared error of eigenvalues, mean reconstruction
//! error, and a subspace distance for eigenvalue ties.

use crate::error::{MfpcaError, Result};
use crate::fdata::{
    inner_product_h, norm_h_squared, FeatureWeights, MultiGridFn, MultivariateFunctionalDataset,
};

/// Integrated squared error between two multivariate functions, minimized
/// over the sign of the estimate (eigenfunctions are defined up to sign).
pub fn ise(
    phi_true: &MultiGridFn,
    phi_est: &MultiGridFn,
    fw: Option<&FeatureWeights>,
) -> Result<f64> {
    let minus = phi_true.axpy(-1.0, phi_est)?;
    let plus = phi_true.axpy(1.0, phi_est)?;
    let d_minus = norm_h_squared(&minus, fw)?;
    let d_plus = norm_h_squared(&plus, fw)?;
    Ok(d_minus.min(d_plus))
}

/// Per-component relative squared error `(lambda - lambda_hat)^2 / lambda^2`.
pub fn rse(lambda_true: &[f64], lambda_est: &[f64]) -> Result<Vec<f64>> {
    if lambda_true.len() != lambda_est.len() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{} reference eigenvalues vs {} estimates",
            lambda_true.len(),
            lambda_est.len()
        )));
    }
    lambda_true
        .iter()
        .zip(lambda_est)
        .map(|(&t, &e)| {
            if t <= 0.0 {
                return Err(MfpcaError::InvalidArgument(
                    "relative squared error needs positive reference eigenvalues".into(),
                ));
            }
            let d = t - e;
            Ok(d * d / (t * t))
        })
        .collect()
}

/// Mean relative squared reconstruction error
/// `N^{-1} sum_n ||X_n - X̂_n||_H^2` between two datasets on the same grids.
pub fn mrse(
    ds_true: &MultivariateFunctionalDataset,
    ds_est: &MultivariateFunctionalDataset,
    fw: Option<&FeatureWeights>,
) -> Result<f64> {
    if ds_true.n_obs() != ds_est.n_obs() {
        return Err(MfpcaError::ShapeMismatch {
            expected: vec![ds_true.n_obs()],
            got: vec![ds_est.n_obs()],
        });
    }
    let n = ds_true.n_obs();
    let mut total = 0.0;
    for i in 0..n {
        let diff = ds_true.observation(i).axpy(-1.0, &ds_est.observation(i))?;
        total += norm_h_squared(&diff, fw)?;
    }
    Ok(total / n as f64)
}

/// Chordal distance `sqrt(r - sum_{jk} <phi_j, phi_hat_k>^2)` between the
/// spans of two orthonormal families of equal size `r`; zero exactly when the
/// spans coincide. Used to compare eigenspaces when eigenvalues tie and
/// individual eigenfunctions are not identified.
pub fn subspace_distance(
    basis_true: &[MultiGridFn],
    basis_est: &[MultiGridFn],
    fw: Option<&FeatureWeights>,
) -> Result<f64> {
    if basis_true.len() != basis_est.len() {
        return Err(MfpcaError::InvalidArgument(format!(
            "subspace bases of sizes {} and {}",
            basis_true.len(),
            basis_est.len()
        )));
    }
    let r = basis_true.len() as f64;
    let mut overlap = 0.0;
    for t in basis_true {
        for e in basis_est {
            let ip = inner_product_h(t, e, fw)?;
            overlap += ip * ip;
        }
    }
    Ok((r - overlap).max(0.0).sqrt())
}

/// Maximal runs of consecutive eigenvalues whose relative gap is below
/// `rel_gap`, as half-open index ranges; runs of length one are omitted.
/// Components inside such a block are only identified up to rotation.
pub fn degenerate_blocks(values: &[f64], rel_gap: f64) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let tied = i < values.len() && {
            let a = values[i - 1];
            let b = values[i];
            (a - b).abs() <= rel_gap * a.abs().max(b.abs())
        };
        if !tied {
            if i - start >= 2 {
                blocks.push((start, i));
            }
            start = i;
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::MultivariateFunctionalDataset;
    use crate::grid::DomainGrid;
    use crate::simulation::fourier_tensor_basis;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array2, ArrayD, IxDyn};
    use std::sync::Arc;

    fn unit_grid(m: usize) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::equidistant(&[(0.0, 1.0)], &[m]).unwrap())
    }

    fn fn_from(values: Vec<f64>, grid: &Arc<DomainGrid>) -> MultiGridFn {
        MultiGridFn::new(
            vec![grid.clone()],
            vec![ArrayD::from_shape_vec(IxDyn(&[values.len()]), values).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn ise_vanishes_for_identical_and_sign_flipped_inputs() {
        let g = unit_grid(17);
        let v: Vec<f64> = (0..17).map(|i| (i as f64 * 0.3).cos()).collect();
        let f = fn_from(v.clone(), &g);
        let neg = fn_from(v.iter().map(|x| -x).collect(), &g);
        assert_abs_diff_eq!(ise(&f, &f, None).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ise(&f, &neg, None).unwrap(), 0.0, epsilon = 1e-15);
        // flipping either argument leaves the metric unchanged
        let g2 = fn_from((0..17).map(|i| (i as f64 * 0.5).sin()).collect(), &g);
        let g2n = fn_from((0..17).map(|i| -(i as f64 * 0.5).sin()).collect(), &g);
        assert_abs_diff_eq!(
            ise(&f, &g2, None).unwrap(),
            ise(&neg, &g2n, None).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn ise_of_orthonormal_pair_is_two() {
        let rect = Arc::new(DomainGrid::equidistant(&[(0.0, 1.0), (0.0, 1.0)], &[15, 15]).unwrap());
        let fam = fourier_tensor_basis(3, &rect).unwrap();
        let shape = rect.shape();
        let a = MultiGridFn::new(
            vec![rect.clone()],
            vec![fam.row(1).to_owned().into_shape_with_order(IxDyn(&shape)).unwrap()],
        )
        .unwrap();
        let b = MultiGridFn::new(
            vec![rect.clone()],
            vec![fam.row(2).to_owned().into_shape_with_order(IxDyn(&shape)).unwrap()],
        )
        .unwrap();
        assert_abs_diff_eq!(ise(&a, &b, None).unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn rse_matches_hand_values() {
        let r = rse(&[1.0, 2.0, 0.5], &[1.0, 4.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[2], 1.0, epsilon = 1e-15);
        assert!(rse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rse(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn mrse_of_constant_shift_is_its_square() {
        let g = unit_grid(21);
        let v = Array2::from_shape_fn((4, 21), |(i, j)| (i as f64) + (j as f64 * 0.1).sin());
        let mut shifted = v.clone();
        shifted += 0.3;
        let a = MultivariateFunctionalDataset::from_matrices(
            vec![g.clone()],
            vec![v],
            vec![None],
            None,
        )
        .unwrap();
        let b = MultivariateFunctionalDataset::from_matrices(
            vec![g],
            vec![shifted],
            vec![None],
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(mrse(&a, &a, None).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mrse(&a, &b, None).unwrap(), 0.09, epsilon = 1e-12);
    }

    #[test]
    fn mrse_is_permutation_invariant() {
        let g = unit_grid(9);
        let v = arr2(&[
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
            [0.5, 0.0, -0.5, 0.0, 0.5, 0.0, -0.5, 0.0, 0.5],
            [2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0],
        ]);
        let w = &v * 1.1;
        let perm = [2usize, 0, 1];
        let vp = Array2::from_shape_fn(v.dim(), |(i, j)| v[[perm[i], j]]);
        let wp = Array2::from_shape_fn(w.dim(), |(i, j)| w[[perm[i], j]]);
        let mk = |m: Array2<f64>| {
            MultivariateFunctionalDataset::from_matrices(
                vec![g.clone()],
                vec![m],
                vec![None],
                None,
            )
            .unwrap()
        };
        let plain = mrse(&mk(v), &mk(w), None).unwrap();
        let permuted = mrse(&mk(vp), &mk(wp), None).unwrap();
        assert_abs_diff_eq!(plain, permuted, epsilon = 1e-14);
    }

    #[test]
    fn subspace_distance_sees_spans_not_bases() {
        let rect = Arc::new(DomainGrid::equidistant(&[(0.0, 1.0), (0.0, 1.0)], &[13, 13]).unwrap());
        let fam = fourier_tensor_basis(4, &rect).unwrap();
        let shape = rect.shape();
        let row_fn = |r: ndarray::ArrayView1<f64>| {
            MultiGridFn::new(
                vec![rect.clone()],
                vec![r.to_owned().into_shape_with_order(IxDyn(&shape)).unwrap()],
            )
            .unwrap()
        };
        let u1 = row_fn(fam.row(1));
        let u2 = row_fn(fam.row(2));
        // rotated basis of the same span
        let c = 0.6f64;
        let s = (1.0 - c * c).sqrt();
        let r1 = {
            let mut f = u1.clone();
            f.scale(c);
            f.axpy(s, &u2).unwrap()
        };
        let r2 = {
            let mut f = u1.clone();
            f.scale(-s);
            f.axpy(c, &u2).unwrap()
        };
        let d_same = subspace_distance(
            &[u1.clone(), u2.clone()],
            &[r1, r2],
            None,
        )
        .unwrap();
        assert!(d_same < 1e-6, "distance {d_same}");
        // orthogonal one-dimensional spans are at distance 1
        let u3 = row_fn(fam.row(3));
        let d_orth = subspace_distance(&[u1], &[u3], None).unwrap();
        assert_abs_diff_eq!(d_orth, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_blocks_find_ties() {
        assert_eq!(degenerate_blocks(&[1.0, 1.0, 0.5], 1e-9), vec![(0, 2)]);
        assert_eq!(degenerate_blocks(&[1.0, 0.9, 0.5], 1e-9), Vec::new());
        assert_eq!(
            degenerate_blocks(&[2.0, 2.0, 2.0, 1.0, 1.0 + 1e-12], 1e-9),
            vec![(0, 3), (3, 5)]
        );
        assert_eq!(degenerate_blocks(&[], 1e-9), Vec::new());
    }
}
