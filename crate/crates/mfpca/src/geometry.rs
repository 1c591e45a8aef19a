//! Point-cloud geometry diagnostics: the operators that map functions to
//! score vectors and back, the plain and covariance-weighted distances, cloud
//! inertias evaluated through three independent routes each, and the angle
//! cosine identity between coefficient space and function space.
//!
//! Every equality asserted here is a finite-sample algebraic identity under
//! a shared quadrature and the pi-weighted empirical mean, so the three
//! evaluations of each inertia must agree to rounding — a strong end-to-end
//! check of the estimators in [`crate::moments`].

use crate::error::{MfpcaError, Result};
use crate::fdata::{
    inner_product_h, norm_h_squared, FeatureWeights, MultiGridFn, MultivariateFunctionalDataset,
};
use crate::grid::quadrature_weights;
use crate::moments::{cross_covariance_estimate, gram_estimate, mean_estimate};
use ndarray::{Array1, Array2};

/// Applies the score operator: entry `n` is `sqrt(pi_n) <X_n - mu, f>_H`.
pub fn apply_lx(ds: &MultivariateFunctionalDataset, f: &MultiGridFn) -> Result<Array1<f64>> {
    ds.require_dense("apply_lx")?;
    let mean = mean_estimate(ds)?;
    let n = ds.n_obs();
    let mut out = Array1::<f64>::zeros(n);
    for p in 0..ds.n_features() {
        let x = ds.values_matrix(p);
        let mu = mean.block(p).as_slice().expect("standard layout");
        let q = quadrature_weights(ds.grid(p))?.into_raw_vec_and_offset().0;
        let fp = f.block(p).as_slice().ok_or_else(|| {
            MfpcaError::InvalidArgument("function block is not contiguous".into())
        })?;
        if fp.len() != mu.len() {
            return Err(MfpcaError::GridMismatch(format!(
                "function and dataset grids differ on feature {p}"
            )));
        }
        for i in 0..n {
            let mut acc = 0.0;
            let row = x.row(i);
            for j in 0..mu.len() {
                acc += q[j] * (row[j] - mu[j]) * fp[j];
            }
            out[i] += acc;
        }
    }
    let pi = ds.obs_weights();
    for (v, &w) in out.iter_mut().zip(pi) {
        *v *= w.sqrt();
    }
    Ok(out)
}

/// Applies the reconstruction operator:
/// `sum_n sqrt(pi_n) u_n (X_n - mu)` as a multivariate function.
pub fn apply_lx_star(ds: &MultivariateFunctionalDataset, u: &[f64]) -> Result<MultiGridFn> {
    ds.require_dense("apply_lx_star")?;
    if u.len() != ds.n_obs() {
        return Err(MfpcaError::ShapeMismatch {
            expected: vec![ds.n_obs()],
            got: vec![u.len()],
        });
    }
    let mean = mean_estimate(ds)?;
    let pi = ds.obs_weights();
    let weights: Vec<f64> = u.iter().zip(pi).map(|(&uv, &pv)| pv.sqrt() * uv).collect();
    let mut blocks = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        let x = ds.values_matrix(p);
        let mu = mean.block(p).as_slice().expect("standard layout");
        let m = mu.len();
        let mut flat = vec![0.0; m];
        for (i, &w) in weights.iter().enumerate() {
            let row = x.row(i);
            for j in 0..m {
                flat[j] += w * (row[j] - mu[j]);
            }
        }
        blocks.push(
            ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&ds.grid(p).shape()), flat)
                .expect("one value per grid point"),
        );
    }
    MultiGridFn::new(ds.grids(), blocks)
}

/// All pairwise covariance surfaces `C_pq`, indexed `[p][q]`.
fn build_surfaces(ds: &MultivariateFunctionalDataset) -> Result<Vec<Vec<Array2<f64>>>> {
    let np = ds.n_features();
    let mut out = Vec::with_capacity(np);
    for p in 0..np {
        let mut row = Vec::with_capacity(np);
        for q in 0..np {
            row.push(cross_covariance_estimate(ds, p, q)?.values);
        }
        out.push(row);
    }
    Ok(out)
}

fn gamma_apply_with(
    ds: &MultivariateFunctionalDataset,
    surfaces: &[Vec<Array2<f64>>],
    f: &MultiGridFn,
) -> Result<MultiGridFn> {
    let np = ds.n_features();
    let mut blocks = Vec::with_capacity(np);
    for p in 0..np {
        let mp = ds.grid(p).len();
        let mut flat = Array1::<f64>::zeros(mp);
        for q in 0..np {
            let qw = quadrature_weights(ds.grid(q))?.into_raw_vec_and_offset().0;
            let fq = f.block(q).as_slice().ok_or_else(|| {
                MfpcaError::InvalidArgument("function block is not contiguous".into())
            })?;
            if fq.len() != qw.len() {
                return Err(MfpcaError::GridMismatch(format!(
                    "function and dataset grids differ on feature {q}"
                )));
            }
            let weighted: Array1<f64> = qw
                .iter()
                .zip(fq)
                .map(|(&w, &v)| w * v)
                .collect::<Vec<f64>>()
                .into();
            flat = flat + surfaces[p][q].dot(&weighted);
        }
        blocks.push(
            flat.into_shape_with_order(ndarray::IxDyn(&ds.grid(p).shape()))
                .expect("one value per grid point"),
        );
    }
    MultiGridFn::new(ds.grids(), blocks)
}

/// Applies the empirical covariance operator through its estimated surfaces:
/// `(Gamma f)^(p)(t) = sum_q int C_pq(t, s) f^(q)(s) ds`.
pub fn gamma_apply(ds: &MultivariateFunctionalDataset, f: &MultiGridFn) -> Result<MultiGridFn> {
    let surfaces = build_surfaces(ds)?;
    gamma_apply_with(ds, &surfaces, f)
}

/// Verifies the adjoint identity `(L_X f)^T M u = <Gamma f, L*_X u>_H` on
/// random pairs — `f` drawn from the span of the centered observations, `u`
/// standard normal — returning the largest relative residual.
pub fn check_adjoint<R: rand::Rng>(
    ds: &MultivariateFunctionalDataset,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = ds.n_obs();
    let gram = gram_estimate(ds, None, None)?;
    let surfaces = build_surfaces(ds)?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a: Vec<f64> = (0..n)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        let u: Vec<f64> = (0..n)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        let f = apply_lx_star(ds, &a)?;
        let lf = apply_lx(ds, &f)?;
        let mu_vec = gram.matrix.dot(&Array1::from(u.clone()));
        let lhs = lf.dot(&mu_vec);
        let gf = gamma_apply_with(ds, &surfaces, &f)?;
        let lsu = apply_lx_star(ds, &u)?;
        let rhs = inner_product_h(&gf, &lsu, None)?;
        let scale = lhs.abs().max(rhs.abs());
        let residual = if scale > 1e-300 {
            (lhs - rhs).abs() / scale
        } else {
            0.0
        };
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Squared distance `||f - g||_H^2` between two functions.
pub fn distance_d(
    f: &MultiGridFn,
    g: &MultiGridFn,
    fw: Option<&FeatureWeights>,
) -> Result<f64> {
    let diff = f.axpy(-1.0, g)?;
    norm_h_squared(&diff, fw)
}

/// Squared covariance-weighted distance `<f - g, Gamma (f - g)>_H` with the
/// empirical covariance operator of `ds`. Supported for any grid function;
/// accuracy for functions far outside the data span is limited by the grid
/// resolution of the estimated surfaces.
pub fn distance_d_gamma(
    ds: &MultivariateFunctionalDataset,
    f: &MultiGridFn,
    g: &MultiGridFn,
) -> Result<f64> {
    let diff = f.axpy(-1.0, g)?;
    let gdiff = gamma_apply(ds, &diff)?;
    inner_product_h(&diff, &gdiff, None)
}

/// Cloud inertias evaluated through independent routes, plus per-feature
/// decompositions and weighted totals.
#[derive(Debug, Clone)]
pub struct CloudSummary {
    /// Observation-cloud inertia under the plain distance, evaluated as
    /// (0) distances to the center, (1) half the weighted pairwise distances,
    /// (2) the summed integrated pointwise variances.
    pub inertia_d: [f64; 3],
    /// Observation-cloud inertia under the covariance-weighted distance,
    /// same three-route structure; route 2 is the integrated squared
    /// covariance surfaces.
    pub inertia_gamma: [f64; 3],
    /// Feature-cloud inertia (observations mapped through the score
    /// operator), same three-route structure; its route 2 is computed from
    /// Gram matrices rather than surfaces.
    pub inertia_feature_cloud: [f64; 3],
    /// Per-feature integrated variances (the summands of `inertia_d[2]`).
    pub feature_variance: Vec<f64>,
    /// Per-feature integrated squared covariance rows (the summands of
    /// `inertia_gamma[2]`).
    pub feature_covariance_norm: Vec<f64>,
    /// `sum_p w_p * feature_variance[p]` for scalar weights, or the
    /// pointwise-weighted integral for pointwise weights.
    pub weighted_variance_total: Option<f64>,
    /// `sum_p w_p * feature_covariance_norm[p]`; only defined for scalar
    /// weights.
    pub weighted_covariance_norm_total: Option<f64>,
}

impl CloudSummary {
    /// Largest relative spread among the three identity triples.
    pub fn max_relative_spread(&self) -> f64 {
        [
            &self.inertia_d,
            &self.inertia_gamma,
            &self.inertia_feature_cloud,
        ]
        .iter()
        .map(|t| {
            let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
            if hi.abs() > 1e-300 {
                (hi - lo) / hi.abs()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
    }
}

/// Evaluates the inertia identities of the observation and feature clouds.
///
/// Each identity is computed three times through genuinely different
/// formulas; on dense data, shared quadrature makes them agree to rounding.
/// Scalar feature weights produce the weighted totals
/// `sum_p w_p * share_p`, which equal the number of features when the
/// weights are the matching standardization scheme's.
pub fn inertia_report(
    ds: &MultivariateFunctionalDataset,
    fw: Option<&FeatureWeights>,
) -> Result<CloudSummary> {
    ds.require_dense("inertia_report")?;
    let n = ds.n_obs();
    let np = ds.n_features();
    let pi = ds.obs_weights().to_vec();
    let mean = mean_estimate(ds)?;
    let centered: Vec<MultiGridFn> = (0..n)
        .map(|i| ds.observation(i).axpy(-1.0, &mean))
        .collect::<Result<_>>()?;

    // ---- plain distance ----
    let mut d_center = 0.0;
    for (i, xc) in centered.iter().enumerate() {
        d_center += pi[i] * norm_h_squared(xc, None)?;
    }
    let mut d_pairwise = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = centered[i].axpy(-1.0, &centered[j])?;
            d_pairwise += 2.0 * pi[i] * pi[j] * norm_h_squared(&diff, None)?;
        }
    }
    d_pairwise *= 0.5;
    let mut feature_variance = Vec::with_capacity(np);
    for p in 0..np {
        let x = ds.values_matrix(p);
        let mu = mean.block(p).as_slice().expect("standard layout");
        let q = quadrature_weights(ds.grid(p))?.into_raw_vec_and_offset().0;
        let mut integral = 0.0;
        for j in 0..mu.len() {
            let mut var = 0.0;
            for i in 0..n {
                let d = x[[i, j]] - mu[j];
                var += pi[i] * d * d;
            }
            integral += q[j] * var;
        }
        feature_variance.push(integral);
    }
    let d_variance: f64 = feature_variance.iter().sum();

    // ---- covariance-weighted distance ----
    let surfaces = build_surfaces(ds)?;
    let gamma_centered: Vec<MultiGridFn> = centered
        .iter()
        .map(|xc| gamma_apply_with(ds, &surfaces, xc))
        .collect::<Result<_>>()?;
    let mut g_center = 0.0;
    for i in 0..n {
        g_center += pi[i] * inner_product_h(&centered[i], &gamma_centered[i], None)?;
    }
    let mut g_pairwise = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = centered[i].axpy(-1.0, &centered[j])?;
            let gdiff = gamma_centered[i].axpy(-1.0, &gamma_centered[j])?;
            g_pairwise += 2.0 * pi[i] * pi[j] * inner_product_h(&diff, &gdiff, None)?;
        }
    }
    g_pairwise *= 0.5;
    let mut feature_covariance_norm = Vec::with_capacity(np);
    for p in 0..np {
        let qp = quadrature_weights(ds.grid(p))?.into_raw_vec_and_offset().0;
        let mut total = 0.0;
        for q in 0..np {
            let qq = quadrature_weights(ds.grid(q))?.into_raw_vec_and_offset().0;
            let c = &surfaces[p][q];
            let mut acc = 0.0;
            for a in 0..c.nrows() {
                for b in 0..c.ncols() {
                    acc += qp[a] * qq[b] * c[[a, b]] * c[[a, b]];
                }
            }
            total += acc;
        }
        feature_covariance_norm.push(total);
    }
    let g_surfaces: f64 = feature_covariance_norm.iter().sum();

    // ---- feature cloud (score-space images of the observations) ----
    let l_images: Vec<Array1<f64>> = centered
        .iter()
        .map(|xc| apply_lx(ds, xc))
        .collect::<Result<_>>()?;
    let mut f_center = 0.0;
    for i in 0..n {
        f_center += pi[i] * l_images[i].dot(&l_images[i]);
    }
    let mut f_pairwise = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &l_images[i] - &l_images[j];
            f_pairwise += 2.0 * pi[i] * pi[j] * diff.dot(&diff);
        }
    }
    f_pairwise *= 0.5;
    // third route through per-feature Gram matrices:
    //   sum_p sum_{ij} pi_i pi_j G^p_ij G_ij
    let mut per_feature_gram = Vec::with_capacity(np);
    let mut total_gram = Array2::<f64>::zeros((n, n));
    for p in 0..np {
        let x = ds.values_matrix(p);
        let mu = mean.block(p).as_slice().expect("standard layout");
        let q = quadrature_weights(ds.grid(p))?.into_raw_vec_and_offset().0;
        let mut xc = x;
        for mut row in xc.rows_mut() {
            for (v, (&m, &w)) in row.iter_mut().zip(mu.iter().zip(&q)) {
                *v -= m;
                *v *= w.sqrt();
            }
        }
        let g = xc.dot(&xc.t());
        total_gram = total_gram + &g;
        per_feature_gram.push(g);
    }
    let mut f_gram = 0.0;
    for p in 0..np {
        for i in 0..n {
            for j in 0..n {
                f_gram += pi[i] * pi[j] * per_feature_gram[p][[i, j]] * total_gram[[i, j]];
            }
        }
    }

    // ---- weighted totals ----
    let (weighted_variance_total, weighted_covariance_norm_total) = match fw {
        None => (None, None),
        Some(FeatureWeights::Scalar(w)) => {
            if w.len() != np {
                return Err(MfpcaError::InvalidFeatureWeights(format!(
                    "{} weights for {np} features",
                    w.len()
                )));
            }
            let v: f64 = w
                .iter()
                .zip(&feature_variance)
                .map(|(&a, &b)| a * b)
                .sum();
            let c: f64 = w
                .iter()
                .zip(&feature_covariance_norm)
                .map(|(&a, &b)| a * b)
                .sum();
            (Some(v), Some(c))
        }
        Some(FeatureWeights::Pointwise(w)) => {
            if w.len() != np {
                return Err(MfpcaError::InvalidFeatureWeights(format!(
                    "{} weight fields for {np} features",
                    w.len()
                )));
            }
            let mut total = 0.0;
            for p in 0..np {
                let x = ds.values_matrix(p);
                let mu = mean.block(p).as_slice().expect("standard layout");
                let q = quadrature_weights(ds.grid(p))?.into_raw_vec_and_offset().0;
                let wf = w[p].as_slice().ok_or_else(|| {
                    MfpcaError::InvalidFeatureWeights("weights are not contiguous".into())
                })?;
                for j in 0..mu.len() {
                    let mut var = 0.0;
                    for i in 0..n {
                        let d = x[[i, j]] - mu[j];
                        var += pi[i] * d * d;
                    }
                    total += q[j] * wf[j] * var;
                }
            }
            // no linear pointwise analogue exists for the covariance norm
            (Some(total), None)
        }
    };

    Ok(CloudSummary {
        inertia_d: [d_center, d_pairwise, d_variance],
        inertia_gamma: [g_center, g_pairwise, g_surfaces],
        inertia_feature_cloud: [f_center, f_pairwise, f_gram],
        feature_variance,
        feature_covariance_norm,
        weighted_variance_total,
        weighted_covariance_norm_total,
    })
}

/// The cosine of the angle between two functions, computed in score space
/// and in the covariance-weighted function space.
#[derive(Debug, Clone, Copy)]
pub struct AngleCosine {
    /// `(L_X f)^T (L_X g) / (||L_X f|| ||L_X g||)`.
    pub score_space: f64,
    /// `<f, Gamma g> / (||f||_Gamma ||g||_Gamma)`.
    pub gamma_space: f64,
}

impl AngleCosine {
    /// Absolute difference between the two evaluations.
    pub fn difference(&self) -> f64 {
        (self.score_space - self.gamma_space).abs()
    }
}

/// Computes the angle cosine both ways; they coincide for any pair of
/// functions because `||L_X f||^2 = <f, Gamma f>` under shared quadrature.
pub fn angle_cosine(
    ds: &MultivariateFunctionalDataset,
    f: &MultiGridFn,
    g: &MultiGridFn,
) -> Result<AngleCosine> {
    let lf = apply_lx(ds, f)?;
    let lg = apply_lx(ds, g)?;
    let nf = lf.dot(&lf).sqrt();
    let ng = lg.dot(&lg).sqrt();
    if nf <= 0.0 || ng <= 0.0 {
        return Err(MfpcaError::InvalidArgument(
            "angle undefined: an argument has zero score-space norm".into(),
        ));
    }
    let score_space = lf.dot(&lg) / (nf * ng);
    let surfaces = build_surfaces(ds)?;
    let gf = gamma_apply_with(ds, &surfaces, f)?;
    let gg = gamma_apply_with(ds, &surfaces, g)?;
    let fgf = inner_product_h(f, &gf, None)?;
    let ggg = inner_product_h(g, &gg, None)?;
    let fgg = inner_product_h(f, &gg, None)?;
    let gamma_space = fgg / (fgf.sqrt() * ggg.sqrt());
    Ok(AngleCosine {
        score_space,
        gamma_space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::{rescale, standardization_weights, StandardizationScheme};
    use crate::grid::DomainGrid;
    use crate::simulation::{build_kl_model, replication_rng, AlphaRule, RngPurpose};
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array2};
    use rand::Rng;
    use std::sync::Arc;

    fn kl_dataset(n: usize, seed: u64) -> MultivariateFunctionalDataset {
        let rect = Arc::new(
            DomainGrid::equidistant(&[(0.0, 1.0), (0.0, 0.5)], &[7, 7]).unwrap(),
        );
        let interval = Arc::new(DomainGrid::equidistant(&[(-1.0, 1.0)], &[15]).unwrap());
        let mut arng = replication_rng(seed, 0, RngPurpose::Alphas);
        let model = build_kl_model(5, rect, interval, &AlphaRule::default(), &mut arng).unwrap();
        let mut srng = replication_rng(seed, 0, RngPurpose::Scores);
        model.simulate(n, &mut srng).unwrap().0
    }

    #[test]
    fn score_operator_is_zero_on_the_mean_of_centered_data() {
        let g = Arc::new(DomainGrid::equidistant(&[(0.0, 1.0)], &[9]).unwrap());
        let f: Vec<f64> = (0..9).map(|i| (i as f64 * 0.5).sin() + 0.1).collect();
        let mut v = Array2::zeros((2, 9));
        for j in 0..9 {
            v[[0, j]] = f[j];
            v[[1, j]] = -f[j];
        }
        let ds = MultivariateFunctionalDataset::from_matrices(vec![g], vec![v], vec![None], None)
            .unwrap();
        let mean = mean_estimate(&ds).unwrap();
        let l = apply_lx(&ds, &mean).unwrap();
        for x in l.iter() {
            assert_abs_diff_eq!(*x, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn score_operator_is_linear() {
        let ds = kl_dataset(8, 3);
        let f = ds.observation(0);
        let g = ds.observation(1);
        let combo = {
            let mut h = f.clone();
            h.scale(2.0);
            h.axpy(-0.5, &g).unwrap()
        };
        let lf = apply_lx(&ds, &f).unwrap();
        let lg = apply_lx(&ds, &g).unwrap();
        let lc = apply_lx(&ds, &combo).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(lc[i], 2.0 * lf[i] - 0.5 * lg[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn single_observation_maps_to_zero() {
        let ds = kl_dataset(1, 5);
        let f = ds.observation(0);
        let l = apply_lx(&ds, &f).unwrap();
        assert_eq!(l.len(), 1);
        assert_abs_diff_eq!(l[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn reconstruction_operator_matches_hand_formula() {
        let ds = kl_dataset(6, 7);
        let zero = apply_lx_star(&ds, &[0.0; 6]).unwrap();
        assert!(norm_h_squared(&zero, None).unwrap() < 1e-28);
        // canonical basis vector picks out one centered observation
        let mut e1 = [0.0; 6];
        e1[0] = 1.0;
        let img = apply_lx_star(&ds, &e1).unwrap();
        let mean = mean_estimate(&ds).unwrap();
        let want = {
            let mut xc = ds.observation(0).axpy(-1.0, &mean).unwrap();
            xc.scale((1.0f64 / 6.0).sqrt());
            xc
        };
        let diff = img.axpy(-1.0, &want).unwrap();
        assert!(norm_h_squared(&diff, None).unwrap() < 1e-24);
        // linearity
        let u1: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 1.0).collect();
        let u2: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).cos()).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let lhs = apply_lx_star(&ds, &sum).unwrap();
        let rhs = apply_lx_star(&ds, &u1)
            .unwrap()
            .axpy(1.0, &apply_lx_star(&ds, &u2).unwrap())
            .unwrap();
        let d = lhs.axpy(-1.0, &rhs).unwrap();
        assert!(norm_h_squared(&d, None).unwrap() < 1e-24);
    }

    #[test]
    fn adjoint_identity_holds_on_simulated_data() {
        let ds = kl_dataset(15, 11);
        let mut rng = replication_rng(11, 1, RngPurpose::Scores);
        let residual = check_adjoint(&ds, 8, &mut rng).unwrap();
        assert!(residual < 1e-8, "adjoint residual {residual}");
    }

    #[test]
    fn adjoint_residual_is_zero_for_degenerate_data() {
        // identical observations: everything centered is zero
        let g = Arc::new(DomainGrid::equidistant(&[(0.0, 1.0)], &[7]).unwrap());
        let v = Array2::from_elem((3, 7), 2.5);
        let ds = MultivariateFunctionalDataset::from_matrices(vec![g], vec![v], vec![None], None)
            .unwrap();
        let mut rng = replication_rng(13, 0, RngPurpose::Scores);
        let residual = check_adjoint(&ds, 4, &mut rng).unwrap();
        assert_eq!(residual, 0.0);
        // single observation likewise
        let single = kl_dataset(1, 13);
        let r1 = check_adjoint(&single, 4, &mut rng).unwrap();
        assert_eq!(r1, 0.0);
    }

    #[test]
    fn distances_behave_like_squared_metrics() {
        let ds = kl_dataset(10, 17);
        let f = ds.observation(0);
        let g = ds.observation(1);
        assert_abs_diff_eq!(distance_d(&f, &f, None).unwrap(), 0.0, epsilon = 1e-15);
        assert!(distance_d_gamma(&ds, &f, &g).unwrap() >= 0.0);
        assert_abs_diff_eq!(
            distance_d_gamma(&ds, &f, &f).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        // antipodal pair: d^2(f, -f) = 4 ||f||^2
        let mut neg = f.clone();
        neg.scale(-1.0);
        assert_abs_diff_eq!(
            distance_d(&f, &neg, None).unwrap(),
            4.0 * norm_h_squared(&f, None).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn inertia_identities_agree_to_rounding() {
        for seed in [19u64, 23, 29] {
            let ds = kl_dataset(12, seed);
            let report = inertia_report(&ds, None).unwrap();
            let spread = report.max_relative_spread();
            assert!(spread < 1e-8, "seed {seed}: spread {spread}");
            // feature-cloud inertia coincides with the gamma inertia
            assert_abs_diff_eq!(
                report.inertia_gamma[2],
                report.inertia_feature_cloud[2],
                epsilon = 1e-10 * report.inertia_gamma[2].abs().max(1.0)
            );
        }
    }

    #[test]
    fn constant_dataset_has_zero_inertia() {
        let g = Arc::new(DomainGrid::equidistant(&[(0.0, 1.0)], &[5]).unwrap());
        let v = Array2::from_elem((4, 5), 1.0);
        let ds = MultivariateFunctionalDataset::from_matrices(vec![g], vec![v], vec![None], None)
            .unwrap();
        let report = inertia_report(&ds, None).unwrap();
        for t in [
            report.inertia_d,
            report.inertia_gamma,
            report.inertia_feature_cloud,
        ] {
            for x in t {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-20);
            }
        }
    }

    #[test]
    fn standardization_weights_normalize_the_totals() {
        let ds = kl_dataset(20, 31);
        // integrated-variance weights: both the weighted total and the
        // rescaled dataset's plain inertia equal the number of features
        let wv = standardization_weights(&ds, StandardizationScheme::IntegratedVariance).unwrap();
        let report = inertia_report(&ds, Some(&wv)).unwrap();
        assert_abs_diff_eq!(report.weighted_variance_total.unwrap(), 2.0, epsilon = 1e-10);
        let rescaled = rescale(&ds, &wv).unwrap();
        let rr = inertia_report(&rescaled, None).unwrap();
        for x in rr.inertia_d {
            assert_abs_diff_eq!(x, 2.0, epsilon = 1e-6);
        }
        // covariance-norm weights normalize the gamma total
        let wg = standardization_weights(&ds, StandardizationScheme::GammaNorm).unwrap();
        let rg = inertia_report(&ds, Some(&wg)).unwrap();
        assert_abs_diff_eq!(
            rg.weighted_covariance_norm_total.unwrap(),
            2.0,
            epsilon = 1e-6
        );
        // pointwise variance weights integrate to the domain volumes
        let wp = standardization_weights(&ds, StandardizationScheme::PointwiseSd).unwrap();
        let rp = inertia_report(&ds, Some(&wp)).unwrap();
        assert_abs_diff_eq!(rp.weighted_variance_total.unwrap(), 0.5 + 2.0, epsilon = 1e-8);
        assert!(rp.weighted_covariance_norm_total.is_none());
    }

    #[test]
    fn angle_cosine_formulas_coincide() {
        let ds = kl_dataset(15, 37);
        let f = ds.observation(0);
        let same = angle_cosine(&ds, &f, &f).unwrap();
        assert_abs_diff_eq!(same.score_space, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(same.gamma_space, 1.0, epsilon = 1e-10);
        let mut rng = replication_rng(37, 1, RngPurpose::Scores);
        for _ in 0..5 {
            let a: Vec<f64> = (0..15)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            let b: Vec<f64> = (0..15)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            let f = apply_lx_star(&ds, &a).unwrap();
            let g = apply_lx_star(&ds, &b).unwrap();
            let cos = angle_cosine(&ds, &f, &g).unwrap();
            assert!(cos.difference() < 1e-8, "difference {}", cos.difference());
            assert!(cos.score_space.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn gamma_orthogonal_pair_has_zero_cosine() {
        let ds = kl_dataset(12, 41);
        let f = ds.observation(0);
        let g0 = ds.observation(1);
        // Gamma-orthogonalize g against f
        let surfaces = build_surfaces(&ds).unwrap();
        let gf = gamma_apply_with(&ds, &surfaces, &f).unwrap();
        let fgf = inner_product_h(&f, &gf, None).unwrap();
        let fgg = inner_product_h(&g0, &gf, None).unwrap();
        let g = g0.axpy(-fgg / fgf, &f).unwrap();
        let cos = angle_cosine(&ds, &f, &g).unwrap();
        assert_abs_diff_eq!(cos.gamma_space, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(cos.score_space, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn masked_data_is_rejected() {
        let g = Arc::new(DomainGrid::equidistant(&[(0.0, 1.0)], &[4]).unwrap());
        let v = arr2(&[[1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]]);
        let mask = arr2(&[[true, false, true, true], [true, true, true, true]]);
        let ds = MultivariateFunctionalDataset::from_matrices(
            vec![g],
            vec![v],
            vec![Some(mask)],
            None,
        )
        .unwrap();
        assert!(inertia_report(&ds, None).is_err());
        assert!(apply_lx(&ds, &ds.observation(1)).is_err());
    }
}
