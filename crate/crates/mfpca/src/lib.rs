//! Multivariate functional principal component analysis on rectangular grids.
//!
//! Observations are vectors of functions — each feature sampled on its own
//! (possibly multidimensional) grid — and the library estimates the leading
//! eigenvalues, multivariate eigenfunctions, and scores of the sample
//! covariance operator. Three mathematically equivalent pathways are provided:
//!
//! * [`gram_mfpca`] diagonalizes the `N x N` Gram matrix of inner products
//!   between centered observations (duality / metric multidimensional scaling);
//! * [`cov_mfpca`] diagonalizes each feature's covariance operator and then a
//!   small matrix built from the stacked univariate scores;
//! * [`basis_mfpca`] works on basis-expansion coefficients and diagonalizes
//!   either the coefficient Gram matrix or its dual, whichever is smaller.
//!
//! On dense, noiseless data the three agree to numerical precision; they
//! differ in cost (`gram` scales with the number of observations, `cov` and
//! `basis` with the representation sizes) and in how irregular data enter:
//! the Gram pathway accepts interpolated or presmoothed curves and an optional
//! measurement-noise correction of the Gram diagonal, the covariance pathway
//! subtracts noise from the covariance diagonal, and the basis pathway absorbs
//! irregularity in the coefficient fit.
//!
//! Supporting modules cover trapezoid quadrature ([`grid`]), simulation from
//! Karhunen-Loeve expansions ([`simulation`]), penalized B-spline smoothing
//! ([`smoothing`]), moment estimators ([`moments`]), point-cloud geometry
//! diagnostics ([`geometry`]), error metrics ([`metrics`]), and CSV
//! import/export ([`io`]).

pub mod basis;
pub mod cov;
pub mod error;
pub mod fdata;
pub mod geometry;
pub mod gram;
pub mod grid;
pub mod io;
mod linalg;
pub mod metrics;
pub mod moments;
pub mod simulation;
pub mod smoothing;

pub use basis::{
    basis_mfpca, basis_mfpca_from_coefficients, build_a, fit_coefficients, BasisMfpca, BasisSide,
    BasisSystem, CoefficientMatrix,
};
pub use cov::{
    cov_mfpca, gram_matched_options, stack_scores, univariate_fpca, CovDivisor, CovOptions,
    StackedScores, UnivariateFpca,
};
pub use error::{MfpcaError, Result};
pub use fdata::{
    center, inner_product_h, norm_h_squared, rescale, standardization_weights, FeatureSample,
    FeatureWeights, MultiGridFn, MultivariateFunctionalDataset, StandardizationScheme,
};
pub use geometry::{
    angle_cosine, apply_lx, apply_lx_star, check_adjoint, distance_d, distance_d_gamma,
    gamma_apply, inertia_report, AngleCosine, CloudSummary,
};
pub use gram::{
    gram_mfpca, reconstruct, select_components, symmetric_eigen, ComponentSelector, EigenSystem,
    GramOptions, MfpcaModel, Pathway, Preprocess,
};
pub use grid::{quadrature_weights, quadrature_weights_1d, DomainGrid};
pub use io::{
    cloud_summary_csv, read_coefficients, read_dataset, read_gram, read_kl_truth, read_model,
    render_cloud_summary, write_coefficients, write_dataset, write_gram, write_kl_truth,
    write_model,
};
pub use metrics::{degenerate_blocks, ise, mrse, rse, subspace_distance};
pub use moments::{
    covariance_estimate, cross_covariance_estimate, gram_estimate, mean_estimate,
    CovarianceSurface, GramMatrix,
};
pub use simulation::{
    add_noise, build_kl_model, diagonal_pairs, fourier_tensor_basis, legendre_basis,
    replication_rng, sparsify, AlphaRule, KlModel, NoiseSpec, RngPurpose, SparsityRegime,
};
pub use smoothing::{
    estimate_noise_variance, interpolate_dataset, linear_interpolate, presmooth_dataset,
    psplines_fit, select_penalty, BSplineBasis, PenaltySpec, PsplineFit, SelectedPenalty,
};
