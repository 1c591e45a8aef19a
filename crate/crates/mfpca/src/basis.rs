//! Basis-expansion pathway: observations are represented by coefficients in
//! per-feature function bases, and the eigenproblem is posed on either side
//! of the factor `A = diag(sqrt(pi)) (I - 1 Pi^T) C W^{1/2}`.
//!
//! `C` stacks the per-feature coefficient blocks (`N x K_+`), `W` is the
//! block-diagonal matrix of basis inner products, and `M = A A^T` recovers
//! the inner-product Gram matrix of the represented data. Diagonalizing
//! `A A^T` (`N x N`) or `A^T A` (`K_+ x K_+`) gives identical nonzero
//! eigenvalues; eigenfunction coefficients come out as `b_k = W^{-1/2} u_k`
//! on the covariance side and `b_k = l_k^{-1/2} C_c^T diag(sqrt(pi)) u_k` on
//! the Gram side, normalized so that `b_k^T W b_k = 1`.

use crate::error::{MfpcaError, Result};
use crate::fdata::{MultiGridFn, MultivariateFunctionalDataset};
use crate::gram::{apply_sign_convention, ComponentSelector, MfpcaModel, Pathway};
use crate::grid::{quadrature_weights, DomainGrid};
use crate::linalg;
use crate::moments::GramMatrix;
use crate::simulation::KlModel;
use crate::smoothing::BSplineBasis;
use ndarray::{Array1, Array2};
use std::sync::Arc;

/// Per-feature function bases evaluated on the feature grids.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    grids: Vec<Arc<DomainGrid>>,
    /// One `K_p x M_p` matrix per feature; rows are basis functions.
    families: Vec<Array2<f64>>,
}

impl BasisSystem {
    /// Wraps explicit per-feature families (rows = basis functions sampled on
    /// the flattened feature grid).
    pub fn new(grids: Vec<Arc<DomainGrid>>, families: Vec<Array2<f64>>) -> Result<Self> {
        if grids.len() != families.len() || grids.is_empty() {
            return Err(MfpcaError::InvalidArgument(format!(
                "{} grids vs {} basis families",
                grids.len(),
                families.len()
            )));
        }
        for (p, (g, fam)) in grids.iter().zip(&families).enumerate() {
            if fam.ncols() != g.len() {
                return Err(MfpcaError::ShapeMismatch {
                    expected: vec![g.len()],
                    got: vec![fam.ncols()],
                });
            }
            if fam.nrows() == 0 {
                return Err(MfpcaError::DegenerateFeature {
                    feature: p,
                    reason: "empty basis family".into(),
                });
            }
            if fam.iter().any(|v| !v.is_finite()) {
                return Err(MfpcaError::DegenerateFeature {
                    feature: p,
                    reason: "non-finite basis values".into(),
                });
            }
        }
        Ok(BasisSystem { grids, families })
    }

    /// The per-feature orthonormal families that generate a simulation model:
    /// the tensor Fourier family on the first feature's rectangle and the
    /// Legendre family on the second feature's interval, `K` functions each.
    ///
    /// On grids too coarse to carry `K` independent functions, a feature's
    /// family saturates at the grid size; it then spans every function on
    /// that grid, so the simulated data still lie exactly in the basis span.
    pub fn from_kl_model(model: &KlModel) -> Result<Self> {
        let grids = model.grids().to_vec();
        let k = model.n_components();
        let families = vec![
            crate::simulation::fourier_tensor_basis(k.min(grids[0].len()), &grids[0])?,
            crate::simulation::legendre_basis(k.min(grids[1].len()), &grids[1])?,
        ];
        BasisSystem::new(grids, families)
    }

    /// Cubic B-spline families with `nbasis[p]` functions per axis of
    /// feature `p`.
    pub fn bspline(grids: Vec<Arc<DomainGrid>>, nbasis: &[Vec<usize>]) -> Result<Self> {
        if nbasis.len() != grids.len() {
            return Err(MfpcaError::InvalidArgument(format!(
                "{} basis specifications for {} features",
                nbasis.len(),
                grids.len()
            )));
        }
        let mut families = Vec::with_capacity(grids.len());
        for (g, nb) in grids.iter().zip(nbasis) {
            let basis = BSplineBasis::cubic(g.clone(), nb)?;
            families.push(basis.tensor_design().t().to_owned());
        }
        BasisSystem::new(grids, families)
    }

    /// Number of features.
    pub fn n_features(&self) -> usize {
        self.families.len()
    }

    /// Basis size of feature `p`.
    pub fn k_p(&self, p: usize) -> usize {
        self.families[p].nrows()
    }

    /// Total basis size `K_+`.
    pub fn k_total(&self) -> usize {
        self.families.iter().map(|f| f.nrows()).sum()
    }

    /// Half-open coefficient span of each feature in stacked vectors.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.families.len());
        let mut at = 0;
        for f in &self.families {
            spans.push((at, at + f.nrows()));
            at += f.nrows();
        }
        spans
    }

    /// Feature grids.
    pub fn grids(&self) -> &[Arc<DomainGrid>] {
        &self.grids
    }

    /// Evaluated family of feature `p` (`K_p x M_p`).
    pub fn family(&self, p: usize) -> &Array2<f64> {
        &self.families[p]
    }

    /// Per-feature blocks of the basis inner-product matrix
    /// `W^(p)_{kl} = <psi_k, psi_l>` under quadrature.
    pub fn gram_w_blocks(&self) -> Result<Vec<Array2<f64>>> {
        let mut blocks = Vec::with_capacity(self.families.len());
        for (g, fam) in self.grids.iter().zip(&self.families) {
            let q = quadrature_weights(g)?.into_raw_vec_and_offset().0;
            let mut fq = fam.clone();
            for (j, &w) in q.iter().enumerate() {
                for v in fq.column_mut(j) {
                    *v *= w;
                }
            }
            let w = fq.dot(&fam.t());
            blocks.push((&w + &w.t()) * 0.5);
        }
        Ok(blocks)
    }

    /// The full block-diagonal `K_+ x K_+` inner-product matrix.
    pub fn gram_w(&self) -> Result<Array2<f64>> {
        let blocks = self.gram_w_blocks()?;
        let k = self.k_total();
        let mut w = Array2::zeros((k, k));
        for ((lo, hi), b) in self.spans().into_iter().zip(&blocks) {
            w.slice_mut(ndarray::s![lo..hi, lo..hi]).assign(b);
        }
        Ok(w)
    }

    /// Evaluates a stacked coefficient vector as a multivariate function.
    pub fn evaluate(&self, coefficients: &Array1<f64>) -> Result<MultiGridFn> {
        if coefficients.len() != self.k_total() {
            return Err(MfpcaError::ShapeMismatch {
                expected: vec![self.k_total()],
                got: vec![coefficients.len()],
            });
        }
        let mut blocks = Vec::with_capacity(self.families.len());
        for ((lo, hi), (fam, g)) in self
            .spans()
            .into_iter()
            .zip(self.families.iter().zip(&self.grids))
        {
            let c = coefficients.slice(ndarray::s![lo..hi]);
            let flat = c.dot(fam);
            blocks.push(
                flat.into_shape_with_order(ndarray::IxDyn(&g.shape()))
                    .expect("one value per grid point"),
            );
        }
        MultiGridFn::new(self.grids.clone(), blocks)
    }
}

/// Stacked basis coefficients of a dataset, one block per feature.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    /// Per-feature coefficient blocks, each `N x K_p`.
    pub blocks: Vec<Array2<f64>>,
}

impl CoefficientMatrix {
    /// Number of observations.
    pub fn n_obs(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    /// All blocks side by side (`N x K_+`).
    pub fn stacked(&self) -> Array2<f64> {
        let n = self.n_obs();
        let k: usize = self.blocks.iter().map(|b| b.ncols()).sum();
        let mut out = Array2::zeros((n, k));
        let mut at = 0;
        for b in &self.blocks {
            out.slice_mut(ndarray::s![.., at..at + b.ncols()]).assign(b);
            at += b.ncols();
        }
        out
    }
}

/// Quadrature-weighted least-squares coefficients of every observation:
/// per feature, solves `(Psi Q Psi^T) c = Psi Q x` — exact when the data lie
/// in the basis span, the `H`-orthogonal projection otherwise.
pub fn fit_coefficients(
    ds: &MultivariateFunctionalDataset,
    basis: &BasisSystem,
) -> Result<CoefficientMatrix> {
    ds.require_dense("fit_coefficients")?;
    if ds.n_features() != basis.n_features() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{} basis families for {} features",
            basis.n_features(),
            ds.n_features()
        )));
    }
    let w_blocks = basis.gram_w_blocks()?;
    let mut blocks = Vec::with_capacity(ds.n_features());
    for p in 0..ds.n_features() {
        if ds.grid(p).axes() != basis.grids()[p].axes() {
            return Err(MfpcaError::GridMismatch(format!(
                "dataset and basis grids differ on feature {p}"
            )));
        }
        let x = ds.values_matrix(p); // N x M_p
        let q = quadrature_weights(ds.grid(p))?.into_raw_vec_and_offset().0;
        let fam = basis.family(p); // K_p x M_p
        let mut xq = x;
        for mut row in xq.rows_mut() {
            for (v, &w) in row.iter_mut().zip(&q) {
                *v *= w;
            }
        }
        let rhs = fam.dot(&xq.t()); // K_p x N
        let sol = linalg::solve_spd(&w_blocks[p], &rhs).map_err(|_| {
            MfpcaError::DegenerateFeature {
                feature: p,
                reason: "basis inner-product matrix is not positive definite".into(),
            }
        })?;
        blocks.push(sol.t().to_owned());
    }
    Ok(CoefficientMatrix { blocks })
}

/// Symmetric square root and inverse square root of an SPD matrix; fails when
/// any eigenvalue sits at or below the rounding floor `k * eps * max`.
fn sym_sqrt_pair(w: &Array2<f64>, context: &str) -> Result<(Array2<f64>, Array2<f64>)> {
    let (d, v) = linalg::sym_eigen_desc(w)?;
    let k = d.len();
    let floor = k as f64 * f64::EPSILON * d[0].max(0.0);
    if d[k - 1] <= floor {
        return Err(MfpcaError::SingularSystem {
            op: "basis_gram_sqrt",
            hint: format!(
                "{context}: basis functions are linearly dependent under quadrature \
                 (smallest eigenvalue {:.3e})",
                d[k - 1]
            ),
        });
    }
    let mut root = Array2::zeros((k, k));
    let mut inv_root = Array2::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            let mut si = 0.0;
            for j in 0..k {
                let sq = d[j].sqrt();
                s += v[[a, j]] * sq * v[[b, j]];
                si += v[[a, j] ] / sq * v[[b, j]];
            }
            root[[a, b]] = s;
            inv_root[[a, b]] = si;
        }
    }
    Ok((root, inv_root))
}

/// The factor `A = diag(sqrt(pi)) (I - 1 Pi^T) C W^{1/2}` with per-feature
/// square roots of the basis inner-product blocks; `A A^T` equals the Gram
/// matrix of the basis-represented data.
pub fn build_a(
    coefficients: &CoefficientMatrix,
    w_blocks: &[Array2<f64>],
    pi: &[f64],
) -> Result<Array2<f64>> {
    if w_blocks.len() != coefficients.blocks.len() {
        return Err(MfpcaError::InvalidArgument(format!(
            "{} inner-product blocks for {} coefficient blocks",
            w_blocks.len(),
            coefficients.blocks.len()
        )));
    }
    let n = coefficients.n_obs();
    if pi.len() != n {
        return Err(MfpcaError::InvalidWeights(format!(
            "{} weights for {n} observations",
            pi.len()
        )));
    }
    let mut parts = Vec::with_capacity(w_blocks.len());
    for (p, (c, w)) in coefficients.blocks.iter().zip(w_blocks).enumerate() {
        let (root, _) = sym_sqrt_pair(w, &format!("feature {p}"))?;
        // center: C - 1 (pi^T C)
        let mut cc = c.clone();
        let cbar: Array1<f64> = {
            let piv = Array1::from(pi.to_vec());
            piv.dot(c)
        };
        for mut row in cc.rows_mut() {
            row -= &cbar;
        }
        parts.push(cc.dot(&root));
    }
    let k: usize = parts.iter().map(|b| b.ncols()).sum();
    let mut a = Array2::zeros((n, k));
    let mut at = 0;
    for b in &parts {
        a.slice_mut(ndarray::s![.., at..at + b.ncols()]).assign(b);
        at += b.ncols();
    }
    for (i, &w) in pi.iter().enumerate() {
        let s = w.sqrt();
        for v in a.row_mut(i) {
            *v *= s;
        }
    }
    Ok(a)
}

/// Which dual eigenproblem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSide {
    /// `A A^T`, an `N x N` problem — cheap when observations are few.
    Gram,
    /// `A^T A`, a `K_+ x K_+` problem — cheap when the basis is small.
    Covariance,
}

/// A fitted basis-pathway model together with the eigenfunction coefficients.
#[derive(Debug, Clone)]
pub struct BasisMfpca {
    /// The eigencomponents, interchangeable with the other pathways' output.
    pub model: MfpcaModel,
    /// Rows are the stacked coefficient vectors `b_k` of the eigenfunctions,
    /// normalized so that `b_k^T W b_k = 1`.
    pub component_coefficients: Array2<f64>,
}

/// Basis-expansion MFPCA of a dense dataset: fits coefficients, forms `A`,
/// and diagonalizes the side requested.
pub fn basis_mfpca(
    ds: &MultivariateFunctionalDataset,
    basis: &BasisSystem,
    side: BasisSide,
    selector: ComponentSelector,
) -> Result<BasisMfpca> {
    let coeffs = fit_coefficients(ds, basis)?;
    basis_mfpca_from_coefficients(&coeffs, basis, ds.obs_weights().to_vec(), side, selector)
}

/// Basis-expansion MFPCA when the coefficients are already known.
pub fn basis_mfpca_from_coefficients(
    coefficients: &CoefficientMatrix,
    basis: &BasisSystem,
    obs_weights: Vec<f64>,
    side: BasisSide,
    selector: ComponentSelector,
) -> Result<BasisMfpca> {
    let n = coefficients.n_obs();
    if obs_weights.len() != n {
        return Err(MfpcaError::InvalidWeights(format!(
            "{} weights for {n} observations",
            obs_weights.len()
        )));
    }
    let w_blocks = basis.gram_w_blocks()?;
    let a = build_a(coefficients, &w_blocks, &obs_weights)?;
    let c = coefficients.stacked();
    let pi = Array1::from(obs_weights.clone());
    let cbar = pi.dot(&c);
    let mut cc = c.clone();
    for mut row in cc.rows_mut() {
        row -= &cbar;
    }

    let (values, b_rows, scores) = match side {
        BasisSide::Gram => {
            let m = a.dot(&a.t());
            let eig = crate::gram::symmetric_eigen(&GramMatrix {
                matrix: (&m + &m.t()) * 0.5,
                corrected: false,
            })?;
            let k = selector.resolve(eig.values.as_slice().unwrap(), eig.rank);
            // b_k = l_k^{-1/2} C_c^T diag(sqrt(pi)) u_k
            let mut b_rows = Array2::zeros((k, basis.k_total()));
            let mut scores = Array2::zeros((n, k));
            for kk in 0..k {
                let l = eig.values[kk];
                let inv_sqrt_l = 1.0 / l.sqrt();
                let mut weighted_u = Array1::zeros(n);
                for i in 0..n {
                    weighted_u[i] = obs_weights[i].sqrt() * eig.vectors[[i, kk]];
                    scores[[i, kk]] = (l / obs_weights[i]).sqrt() * eig.vectors[[i, kk]];
                }
                let b = weighted_u.dot(&cc);
                for (j, &v) in b.iter().enumerate() {
                    b_rows[[kk, j]] = v * inv_sqrt_l;
                }
            }
            (eig.values.to_vec(), b_rows, scores)
        }
        BasisSide::Covariance => {
            let m = a.t().dot(&a);
            let eig = crate::gram::symmetric_eigen(&GramMatrix {
                matrix: (&m + &m.t()) * 0.5,
                corrected: false,
            })?;
            let k = selector.resolve(eig.values.as_slice().unwrap(), eig.rank);
            // b_k = W^{-1/2} u_k, done per feature block
            let spans = basis.spans();
            let mut b_rows = Array2::zeros((k, basis.k_total()));
            for (p, (lo, hi)) in spans.iter().copied().enumerate() {
                let (_, inv_root) = sym_sqrt_pair(&w_blocks[p], &format!("feature {p}"))?;
                for kk in 0..k {
                    let u = eig.vectors.slice(ndarray::s![lo..hi, kk]);
                    let b = inv_root.dot(&u);
                    for (j, &v) in b.iter().enumerate() {
                        b_rows[[kk, lo + j]] = v;
                    }
                }
            }
            // scores c_nk = (C_c W) b_k
            let w_full = basis.gram_w()?;
            let cw = cc.dot(&w_full);
            let scores = cw.dot(&b_rows.t());
            (eig.values.to_vec(), b_rows, scores)
        }
    };
    let k = b_rows.nrows();

    // mean and eigenfunctions evaluated on the grids
    let mean = basis.evaluate(&cbar)?;
    let mut eigenfunctions = Vec::with_capacity(k);
    for kk in 0..k {
        eigenfunctions.push(basis.evaluate(&b_rows.row(kk).to_owned())?);
    }
    let mut b_rows = b_rows;
    let mut scores = scores;
    apply_sign_convention(&mut eigenfunctions, &mut scores, Some(&mut b_rows));

    let total: f64 = values.iter().sum();
    let eigenvalues: Vec<f64> = values.iter().take(k).copied().collect();
    let variance_fraction = eigenvalues
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(BasisMfpca {
        model: MfpcaModel {
            pathway: Pathway::Basis,
            mean,
            eigenvalues,
            eigenfunctions,
            scores,
            variance_fraction,
            obs_weights,
        },
        component_coefficients: b_rows,
    })
}
