//! Randomized property tests for the structural invariants of the numeric
//! building blocks: quadrature, inner products, eigendecomposition, component
//! selection, and the error metrics.

use mfpca::{
    degenerate_blocks, inner_product_h, ise, quadrature_weights, rse, select_components,
    symmetric_eigen, DomainGrid, GramMatrix, MultiGridFn,
};
use ndarray::{Array2, ArrayD, IxDyn};
use proptest::prelude::*;
use std::sync::Arc;

/// Strictly increasing axis built from positive gaps, so every generated grid
/// is valid by construction.
fn axis_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(0.05f64..1.0, 2..max_len),
        -2.0f64..2.0,
    )
        .prop_map(|(gaps, start)| {
            let mut axis = vec![start];
            for g in gaps {
                axis.push(axis.last().unwrap() + g);
            }
            axis
        })
}

fn grid_fn_strategy() -> impl Strategy<Value = MultiGridFn> {
    (
        axis_strategy(7),
        axis_strategy(7),
        prop::collection::vec(-2.0f64..2.0, 64),
    )
        .prop_map(|(ax1, ax2, vals)| {
            let g1 = Arc::new(DomainGrid::new(vec![ax1]).unwrap());
            let g2 = Arc::new(DomainGrid::new(vec![ax2]).unwrap());
            let m1 = g1.len();
            let m2 = g2.len();
            let b1 = ArrayD::from_shape_vec(IxDyn(&[m1]), vals[..m1].to_vec()).unwrap();
            let b2 = ArrayD::from_shape_vec(IxDyn(&[m2]), vals[m1..m1 + m2].to_vec()).unwrap();
            MultiGridFn::new(vec![g1, g2], vec![b1, b2]).unwrap()
        })
}

proptest! {
    #[test]
    fn trapezoid_weights_sum_to_the_domain_volume(
        ax1 in axis_strategy(9),
        ax2 in axis_strategy(6),
    ) {
        let grid = DomainGrid::new(vec![ax1, ax2]).unwrap();
        let w = quadrature_weights(&grid).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!((total - grid.volume()).abs() <= 1e-10 * grid.volume().abs().max(1.0));
    }

    #[test]
    fn inner_product_is_symmetric_and_bilinear(
        (f, g, h) in (grid_fn_strategy(), grid_fn_strategy(), grid_fn_strategy()),
        alpha in -3.0f64..3.0,
    ) {
        // put g and h on f's grids so the three functions are conformable
        let rebuild = |src: &MultiGridFn| {
            MultiGridFn::new(
                f.grids().to_vec(),
                (0..2)
                    .map(|p| {
                        let n = f.block(p).len();
                        let vals: Vec<f64> =
                            src.block(p).iter().cycle().take(n).copied().collect();
                        ArrayD::from_shape_vec(IxDyn(&[n]), vals).unwrap()
                    })
                    .collect(),
            )
            .unwrap()
        };
        let g = rebuild(&g);
        let h = rebuild(&h);
        let fg = inner_product_h(&f, &g, None).unwrap();
        let gf = inner_product_h(&g, &f, None).unwrap();
        prop_assert!((fg - gf).abs() <= 1e-12 * fg.abs().max(1.0));
        let mut combo = g.axpy(alpha, &h).unwrap(); // g + alpha h
        let lhs = inner_product_h(&f, &combo, None).unwrap();
        let rhs = fg + alpha * inner_product_h(&f, &h, None).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        combo.scale(0.0);
        prop_assert_eq!(inner_product_h(&f, &combo, None).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_eigen_reconstructs_positive_semidefinite_matrices(
        entries in prop::collection::vec(-2.0f64..2.0, 36),
        n in 2usize..=6,
    ) {
        let b = Array2::from_shape_fn((n, n), |(i, j)| entries[i * 6 + j]);
        let a = b.t().dot(&b); // PSD by construction
        let eig = symmetric_eigen(&GramMatrix {
            matrix: a.clone(),
            corrected: false,
        })
        .unwrap();
        for w in eig.values.as_slice().unwrap().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(eig.values.iter().all(|&v| v >= 0.0));
        let vtv = eig.vectors.t().dot(&eig.vectors);
        let scale = eig.values[0].max(1.0);
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((vtv[[i, j]] - id).abs() <= 1e-9);
            }
        }
        let recon = eig
            .vectors
            .dot(&Array2::from_diag(&eig.values))
            .dot(&eig.vectors.t());
        for (x, y) in a.iter().zip(recon.iter()) {
            prop_assert!((x - y).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn component_selection_is_monotone_in_the_threshold(
        mut spectrum in prop::collection::vec(1e-6f64..10.0, 1..12),
        t1 in 0.01f64..1.0,
        t2 in 0.01f64..1.0,
    ) {
        spectrum.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let k_lo = select_components(&spectrum, lo);
        let k_hi = select_components(&spectrum, hi);
        prop_assert!(k_lo <= k_hi);
        prop_assert!((1..=spectrum.len()).contains(&k_hi));
        // the selected prefix really carries the requested variance share
        let total: f64 = spectrum.iter().sum();
        let head: f64 = spectrum[..k_hi].iter().sum();
        prop_assert!(head >= hi * total - 1e-12 * total);
    }

    #[test]
    fn ise_is_sign_invariant_and_zero_at_the_truth(f in grid_fn_strategy()) {
        let mut neg = f.clone();
        neg.scale(-1.0);
        prop_assert_eq!(ise(&f, &f, None).unwrap(), 0.0);
        prop_assert_eq!(ise(&f, &neg, None).unwrap(), 0.0);
        let mut shifted = f.clone();
        shifted.scale(1.5);
        prop_assert!(ise(&f, &shifted, None).unwrap() >= 0.0);
    }

    #[test]
    fn rse_matches_its_definition(
        lambda in prop::collection::vec(1e-3f64..5.0, 1..8),
    ) {
        let zeros = vec![0.0; lambda.len()];
        let doubled: Vec<f64> = lambda.iter().map(|v| 2.0 * v).collect();
        for v in rse(&lambda, &lambda).unwrap() {
            prop_assert_eq!(v, 0.0);
        }
        for v in rse(&lambda, &zeros).unwrap() {
            prop_assert_eq!(v, 1.0);
        }
        for v in rse(&lambda, &doubled).unwrap() {
            prop_assert!((v - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn degenerate_blocks_are_disjoint_tied_runs(
        mut values in prop::collection::vec(0.0f64..5.0, 2..12),
        rel_gap in 1e-6f64..0.2,
    ) {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let blocks = degenerate_blocks(&values, rel_gap);
        let mut prev_end = 0;
        for &(start, end) in &blocks {
            prop_assert!(start >= prev_end);
            prop_assert!(end - start >= 2);
            prop_assert!(end <= values.len());
            for w in values[start..end].windows(2) {
                prop_assert!((w[0] - w[1]).abs() <= rel_gap * w[0].abs().max(w[1].abs()));
            }
            prev_end = end;
        }
    }
}
