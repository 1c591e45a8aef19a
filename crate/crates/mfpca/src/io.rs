//! Plain-CSV persistence for datasets, Gram matrices, fitted models, basis
//! coefficients, simulation ground truth, and geometry diagnostics.
//!
//! Every artifact is a small text file (or a directory of them) with a
//! one-line `# key=value,...` header describing its shape. Values are written
//! with Rust's shortest round-trip float formatting, so a write/read cycle
//! reproduces the numbers bit for bit.
//!
//! Layout summary:
//! - dataset directory: `feature_<p>_values.csv` (one observation per row,
//!   grid points flattened in row-major axis order), `feature_<p>_grid.csv`
//!   (one axis per line), optional `feature_<p>_mask.csv` (0/1 entries), and
//!   `obs_weights.csv`;
//! - Gram matrix: a single square CSV with an `n`/`corrected` header;
//! - model directory: `lambda.csv`, `scores.csv`, `obs_weights.csv`, and per
//!   feature `grid_feature_<p>.csv`, `mean_feature_<p>.csv`,
//!   `eigenfunctions_feature_<p>.csv` (one component per row);
//! - coefficient matrix: one CSV whose header records the per-feature block
//!   widths;
//! - ground-truth spectrum: `k,lambda,alpha` rows.

use crate::basis::CoefficientMatrix;
use crate::error::{MfpcaError, Result};
use crate::fdata::{MultiGridFn, MultivariateFunctionalDataset};
use crate::geometry::CloudSummary;
use crate::gram::{MfpcaModel, Pathway};
use crate::grid::DomainGrid;
use crate::moments::GramMatrix;
use crate::simulation::KlModel;
use ndarray::{Array2, ArrayD, IxDyn};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

fn pathway_tag(p: Pathway) -> &'static str {
    match p {
        Pathway::Gram => "gram",
        Pathway::Covariance => "covariance",
        Pathway::Basis => "basis",
    }
}

fn pathway_from_tag(s: &str) -> Option<Pathway> {
    match s {
        "gram" => Some(Pathway::Gram),
        "covariance" => Some(Pathway::Covariance),
        "basis" => Some(Pathway::Basis),
        _ => None,
    }
}

fn parse_err(path: &Path, reason: impl Into<String>) -> MfpcaError {
    MfpcaError::Parse {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(tok: &str, path: &Path) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, format!("expected a real number, got `{tok}`")))
}

fn parse_usize(tok: &str, path: &Path) -> Result<usize> {
    tok.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(path, format!("expected a nonnegative integer, got `{tok}`")))
}

/// Splits a `# key=value,key=value` header line into pairs.
fn parse_header(line: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, "missing `#` header line"))?;
    let mut out = Vec::new();
    for piece in body.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| parse_err(path, format!("malformed header field `{piece}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn header_value<'a>(fields: &'a [(String, String)], key: &str, path: &Path) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| parse_err(path, format!("header lacks `{key}`")))
}

fn shape_string(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_shape(s: &str, path: &Path) -> Result<Vec<usize>> {
    s.split('x').map(|tok| parse_usize(tok, path)).collect()
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    let mut line = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{v}");
    }
    line
}

fn parse_row(line: &str, want: usize, path: &Path) -> Result<Vec<f64>> {
    let row: Vec<f64> = line
        .split(',')
        .map(|tok| parse_f64(tok, path))
        .collect::<Result<_>>()?;
    if row.len() != want {
        return Err(parse_err(
            path,
            format!("expected {want} values per row, got {}", row.len()),
        ));
    }
    Ok(row)
}

fn read_nonempty_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Writes a matrix file: `# <header>` then one CSV row per matrix row.
fn write_matrix(path: &Path, header: &str, rows: usize, row: impl Fn(usize) -> String) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# {header}");
    for i in 0..rows {
        let _ = writeln!(text, "{}", row(i));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_grid_file(path: &Path, grid: &DomainGrid) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# axes={}", grid.axes().len());
    for axis in grid.axes() {
        let _ = writeln!(text, "{}", csv_row(axis.iter().copied()));
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_grid_file(path: &Path) -> Result<Arc<DomainGrid>> {
    let lines = read_nonempty_lines(path)?;
    if lines.is_empty() {
        return Err(parse_err(path, "empty grid file"));
    }
    let fields = parse_header(&lines[0], path)?;
    let n_axes = parse_usize(header_value(&fields, "axes", path)?, path)?;
    if lines.len() != n_axes + 1 {
        return Err(parse_err(
            path,
            format!("expected {n_axes} axis lines, got {}", lines.len() - 1),
        ));
    }
    let mut axes = Vec::with_capacity(n_axes);
    for line in &lines[1..] {
        axes.push(
            line.split(',')
                .map(|tok| parse_f64(tok, path))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(Arc::new(DomainGrid::new(axes)?))
}

/// Serializes a dataset into `dir` as one values/grid(/mask) file triple per
/// feature plus `obs_weights.csv`. Creates the directory if needed.
pub fn write_dataset(ds: &MultivariateFunctionalDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = ds.n_obs();
    for p in 0..ds.n_features() {
        let grid = ds.grid(p);
        let header = format!("n_obs={n},axes={}", shape_string(&grid.shape()));
        let values = ds.values_matrix(p);
        write_matrix(
            &dir.join(format!("feature_{p}_values.csv")),
            &header,
            n,
            |i| csv_row(values.row(i).iter().copied()),
        )?;
        write_grid_file(&dir.join(format!("feature_{p}_grid.csv")), grid)?;
        if let Some(mask) = ds.mask_matrix(p) {
            write_matrix(
                &dir.join(format!("feature_{p}_mask.csv")),
                &header,
                n,
                |i| {
                    let mut line = String::new();
                    for (j, &b) in mask.row(i).iter().enumerate() {
                        if j > 0 {
                            line.push(',');
                        }
                        line.push(if b { '1' } else { '0' });
                    }
                    line
                },
            )?;
        }
    }
    write_matrix(&dir.join("obs_weights.csv"), &format!("n_obs={n}"), 1, |_| {
        csv_row(ds.obs_weights().iter().copied())
    })?;
    Ok(())
}

/// Reads a matrix file written by [`write_matrix`]; returns the header fields
/// and the row-major matrix.
fn read_matrix(path: &Path) -> Result<(Vec<(String, String)>, Array2<f64>)> {
    let lines = read_nonempty_lines(path)?;
    if lines.is_empty() {
        return Err(parse_err(path, "empty file"));
    }
    let fields = parse_header(&lines[0], path)?;
    let rows = lines.len() - 1;
    let cols = if rows == 0 {
        0
    } else {
        lines[1].split(',').count()
    };
    let mut data = Vec::with_capacity(rows * cols);
    for line in &lines[1..] {
        data.extend(parse_row(line, cols, path)?);
    }
    let matrix = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| parse_err(path, e.to_string()))?;
    Ok((fields, matrix))
}

/// Loads a dataset directory written by [`write_dataset`]. Features are
/// discovered by probing `feature_<p>_values.csv` for consecutive `p`.
pub fn read_dataset(dir: &Path) -> Result<MultivariateFunctionalDataset> {
    let mut grids = Vec::new();
    let mut values = Vec::new();
    let mut masks = Vec::new();
    let mut p = 0usize;
    loop {
        let vpath = dir.join(format!("feature_{p}_values.csv"));
        if !vpath.exists() {
            break;
        }
        let grid = read_grid_file(&dir.join(format!("feature_{p}_grid.csv")))?;
        let (fields, matrix) = read_matrix(&vpath)?;
        let n_obs = parse_usize(header_value(&fields, "n_obs", &vpath)?, &vpath)?;
        let shape = parse_shape(header_value(&fields, "axes", &vpath)?, &vpath)?;
        if matrix.nrows() != n_obs || shape != grid.shape() || matrix.ncols() != grid.len() {
            return Err(parse_err(
                &vpath,
                format!(
                    "header says {n_obs} x {}, file holds {} x {}, grid has {} points",
                    shape_string(&shape),
                    matrix.nrows(),
                    matrix.ncols(),
                    grid.len()
                ),
            ));
        }
        let mpath = dir.join(format!("feature_{p}_mask.csv"));
        let mask = if mpath.exists() {
            let (_, raw) = read_matrix(&mpath)?;
            if raw.dim() != matrix.dim() {
                return Err(parse_err(&mpath, "mask shape differs from values"));
            }
            Some(raw.mapv(|v| v != 0.0))
        } else {
            None
        };
        grids.push(grid);
        values.push(matrix);
        masks.push(mask);
        p += 1;
    }
    if p == 0 {
        return Err(parse_err(dir, "no feature_0_values.csv in directory"));
    }
    let wpath = dir.join("obs_weights.csv");
    let weights = if wpath.exists() {
        let (_, row) = read_matrix(&wpath)?;
        Some(row.row(0).to_vec())
    } else {
        None
    };
    MultivariateFunctionalDataset::from_matrices(grids, values, masks, weights)
}

/// Writes a Gram matrix as a square CSV with an `n`/`corrected` header.
pub fn write_gram(gram: &GramMatrix, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let n = gram.matrix.nrows();
    write_matrix(
        path,
        &format!("n={n},corrected={}", gram.corrected),
        n,
        |i| csv_row(gram.matrix.row(i).iter().copied()),
    )
}

/// Reads a Gram matrix written by [`write_gram`].
pub fn read_gram(path: &Path) -> Result<GramMatrix> {
    let (fields, matrix) = read_matrix(path)?;
    let n = parse_usize(header_value(&fields, "n", path)?, path)?;
    if matrix.nrows() != n || matrix.ncols() != n {
        return Err(parse_err(
            path,
            format!("header says {n}x{n}, file holds {}x{}", matrix.nrows(), matrix.ncols()),
        ));
    }
    let corrected = match header_value(&fields, "corrected", path)? {
        "true" => true,
        "false" => false,
        other => return Err(parse_err(path, format!("corrected must be true/false, got `{other}`"))),
    };
    Ok(GramMatrix { matrix, corrected })
}

/// Serializes a fitted model into `dir`: spectrum, scores, observation
/// weights, and per-feature grid/mean/eigenfunction files.
pub fn write_model(model: &MfpcaModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let k = model.eigenvalues.len();
    let n = model.scores.nrows();
    let mut lambda = String::new();
    let _ = writeln!(lambda, "# pathway={},k={k}", pathway_tag(model.pathway));
    let _ = writeln!(lambda, "k,lambda,variance_fraction");
    for i in 0..k {
        let _ = writeln!(
            lambda,
            "{},{},{}",
            i + 1,
            model.eigenvalues[i],
            model.variance_fraction[i]
        );
    }
    fs::write(dir.join("lambda.csv"), lambda)?;
    write_matrix(&dir.join("scores.csv"), &format!("n_obs={n},k={k}"), n, |i| {
        csv_row(model.scores.row(i).iter().copied())
    })?;
    write_matrix(&dir.join("obs_weights.csv"), &format!("n_obs={n}"), 1, |_| {
        csv_row(model.obs_weights.iter().copied())
    })?;
    for (p, grid) in model.mean.grids().iter().enumerate() {
        write_grid_file(&dir.join(format!("grid_feature_{p}.csv")), grid)?;
        let shape = shape_string(&grid.shape());
        let mu = model.mean.block(p);
        write_matrix(
            &dir.join(format!("mean_feature_{p}.csv")),
            &format!("axes={shape}"),
            1,
            |_| csv_row(mu.iter().copied()),
        )?;
        write_matrix(
            &dir.join(format!("eigenfunctions_feature_{p}.csv")),
            &format!("k={k},axes={shape}"),
            k,
            |i| csv_row(model.eigenfunctions[i].block(p).iter().copied()),
        )?;
    }
    Ok(())
}

/// Loads a model directory written by [`write_model`].
pub fn read_model(dir: &Path) -> Result<MfpcaModel> {
    let lpath = dir.join("lambda.csv");
    let lines = read_nonempty_lines(&lpath)?;
    if lines.len() < 2 {
        return Err(parse_err(&lpath, "missing header or column line"));
    }
    let fields = parse_header(&lines[0], &lpath)?;
    let pathway = pathway_from_tag(header_value(&fields, "pathway", &lpath)?)
        .ok_or_else(|| parse_err(&lpath, "unknown pathway tag"))?;
    let k = parse_usize(header_value(&fields, "k", &lpath)?, &lpath)?;
    if lines.len() != k + 2 {
        return Err(parse_err(
            &lpath,
            format!("expected {k} component rows, got {}", lines.len() - 2),
        ));
    }
    let mut eigenvalues = Vec::with_capacity(k);
    let mut variance_fraction = Vec::with_capacity(k);
    for line in &lines[2..] {
        let row = parse_row(line, 3, &lpath)?;
        eigenvalues.push(row[1]);
        variance_fraction.push(row[2]);
    }

    let (_, scores) = read_matrix(&dir.join("scores.csv"))?;
    let (_, wrow) = read_matrix(&dir.join("obs_weights.csv"))?;
    let obs_weights = wrow.row(0).to_vec();

    let mut grids = Vec::new();
    let mut mean_blocks = Vec::new();
    let mut eigen_rows: Vec<Array2<f64>> = Vec::new();
    let mut p = 0usize;
    loop {
        let gpath = dir.join(format!("grid_feature_{p}.csv"));
        if !gpath.exists() {
            break;
        }
        let grid = read_grid_file(&gpath)?;
        let shape = grid.shape();
        let (_, mu) = read_matrix(&dir.join(format!("mean_feature_{p}.csv")))?;
        let (_, ef) = read_matrix(&dir.join(format!("eigenfunctions_feature_{p}.csv")))?;
        if mu.ncols() != grid.len() || ef.ncols() != grid.len() || ef.nrows() != k {
            return Err(parse_err(
                &gpath,
                "mean/eigenfunction files disagree with the grid or component count",
            ));
        }
        mean_blocks.push(
            ArrayD::from_shape_vec(IxDyn(&shape), mu.row(0).to_vec())
                .expect("one value per grid point"),
        );
        eigen_rows.push(ef);
        grids.push(grid);
        p += 1;
    }
    if p == 0 {
        return Err(parse_err(dir, "no grid_feature_0.csv in directory"));
    }
    let mean = MultiGridFn::new(grids.clone(), mean_blocks)?;
    let mut eigenfunctions = Vec::with_capacity(k);
    for i in 0..k {
        let blocks = (0..p)
            .map(|q| {
                ArrayD::from_shape_vec(IxDyn(&grids[q].shape()), eigen_rows[q].row(i).to_vec())
                    .expect("one value per grid point")
            })
            .collect();
        eigenfunctions.push(MultiGridFn::new(grids.clone(), blocks)?);
    }
    Ok(MfpcaModel {
        pathway,
        mean,
        eigenvalues,
        eigenfunctions,
        scores,
        variance_fraction,
        obs_weights,
    })
}

/// Writes a coefficient matrix as one CSV whose header records the
/// per-feature block widths (`blocks=k0;k1;...`).
pub fn write_coefficients(coeffs: &CoefficientMatrix, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let n = coeffs.n_obs();
    let widths = coeffs
        .blocks
        .iter()
        .map(|b| b.ncols().to_string())
        .collect::<Vec<_>>()
        .join(";");
    let stacked = coeffs.stacked();
    write_matrix(path, &format!("n_obs={n},blocks={widths}"), n, |i| {
        csv_row(stacked.row(i).iter().copied())
    })
}

/// Reads a coefficient matrix written by [`write_coefficients`], restoring
/// the block structure.
pub fn read_coefficients(path: &Path) -> Result<CoefficientMatrix> {
    let (fields, stacked) = read_matrix(path)?;
    let n = parse_usize(header_value(&fields, "n_obs", path)?, path)?;
    let widths: Vec<usize> = header_value(&fields, "blocks", path)?
        .split(';')
        .map(|tok| parse_usize(tok, path))
        .collect::<Result<_>>()?;
    let total: usize = widths.iter().sum();
    if stacked.nrows() != n || stacked.ncols() != total {
        return Err(parse_err(
            path,
            format!(
                "header says {n} x {total}, file holds {} x {}",
                stacked.nrows(),
                stacked.ncols()
            ),
        ));
    }
    let mut blocks = Vec::with_capacity(widths.len());
    let mut start = 0;
    for w in widths {
        blocks.push(stacked.slice(ndarray::s![.., start..start + w]).to_owned());
        start += w;
    }
    Ok(CoefficientMatrix { blocks })
}

/// Dumps the ground-truth spectrum of a simulation model: one
/// `k,lambda,alpha` row per component.
pub fn write_kl_truth(model: &KlModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::from("k,lambda,alpha\n");
    for (i, (&l, &a)) in model
        .eigenvalues()
        .iter()
        .zip(model.alphas())
        .enumerate()
    {
        let _ = writeln!(text, "{},{l},{a}", i + 1);
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a `k,lambda,alpha` file back as `(lambda, alpha)` pairs.
pub fn read_kl_truth(path: &Path) -> Result<Vec<(f64, f64)>> {
    let lines = read_nonempty_lines(path)?;
    if lines.is_empty() || lines[0] != "k,lambda,alpha" {
        return Err(parse_err(path, "expected `k,lambda,alpha` header"));
    }
    lines[1..]
        .iter()
        .map(|line| {
            let row = parse_row(line, 3, path)?;
            Ok((row[1], row[2]))
        })
        .collect()
}

/// Renders a cloud summary as human-readable text: one line per inertia
/// identity with its three routes and relative spread, then the per-feature
/// shares and weighted totals.
pub fn render_cloud_summary(summary: &CloudSummary) -> String {
    let mut out = String::new();
    let rows = [
        ("inertia (plain distance)", &summary.inertia_d),
        ("inertia (covariance-weighted)", &summary.inertia_gamma),
        ("inertia (feature cloud)", &summary.inertia_feature_cloud),
    ];
    for (name, t) in rows {
        let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = if hi.abs() > 1e-300 { (hi - lo) / hi.abs() } else { 0.0 };
        let _ = writeln!(
            out,
            "{name}: center={:.6e} pairwise={:.6e} direct={:.6e} (relative spread {:.2e})",
            t[0], t[1], t[2], spread
        );
    }
    for (p, (&v, &c)) in summary
        .feature_variance
        .iter()
        .zip(&summary.feature_covariance_norm)
        .enumerate()
    {
        let _ = writeln!(
            out,
            "feature {p}: integrated variance {:.6e}, squared covariance norm {:.6e}",
            v, c
        );
    }
    if let Some(v) = summary.weighted_variance_total {
        let _ = writeln!(out, "weighted variance total: {v:.6e}");
    }
    if let Some(c) = summary.weighted_covariance_norm_total {
        let _ = writeln!(out, "weighted covariance norm total: {c:.6e}");
    }
    out
}

/// Renders a cloud summary as CSV rows (`quantity,value1,value2,value3`;
/// single-valued rows leave the trailing columns empty).
pub fn cloud_summary_csv(summary: &CloudSummary) -> String {
    let mut out = String::from("quantity,center,pairwise,direct\n");
    let rows = [
        ("inertia_d", &summary.inertia_d),
        ("inertia_gamma", &summary.inertia_gamma),
        ("inertia_feature_cloud", &summary.inertia_feature_cloud),
    ];
    for (name, t) in rows {
        let _ = writeln!(out, "{name},{},{},{}", t[0], t[1], t[2]);
    }
    for (p, &v) in summary.feature_variance.iter().enumerate() {
        let _ = writeln!(out, "feature_{p}_variance,{v},,");
    }
    for (p, &c) in summary.feature_covariance_norm.iter().enumerate() {
        let _ = writeln!(out, "feature_{p}_covariance_norm,{c},,");
    }
    if let Some(v) = summary.weighted_variance_total {
        let _ = writeln!(out, "weighted_variance_total,{v},,");
    }
    if let Some(c) = summary.weighted_covariance_norm_total {
        let _ = writeln!(out, "weighted_covariance_norm_total,{c},,");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{fit_coefficients, BasisSystem};
    use crate::fdata::FeatureWeights;
    use crate::geometry::inertia_report;
    use crate::gram::{gram_mfpca, ComponentSelector, GramOptions};
    use crate::moments::gram_estimate;
    use crate::simulation::{
        build_kl_model, replication_rng, sparsify, AlphaRule, RngPurpose, SparsityRegime,
    };
    use tempfile::TempDir;

    fn kl_setup(n: usize, seed: u64) -> (KlModel, MultivariateFunctionalDataset) {
        let rect = Arc::new(
            DomainGrid::equidistant(&[(0.0, 1.0), (0.0, 0.5)], &[7, 7]).unwrap(),
        );
        let interval = Arc::new(DomainGrid::equidistant(&[(-1.0, 1.0)], &[15]).unwrap());
        let mut arng = replication_rng(seed, 0, RngPurpose::Alphas);
        let model = build_kl_model(5, rect, interval, &AlphaRule::default(), &mut arng).unwrap();
        let mut srng = replication_rng(seed, 0, RngPurpose::Scores);
        let ds = model.simulate(n, &mut srng).unwrap().0;
        (model, ds)
    }

    #[test]
    fn dense_dataset_round_trips_bitwise() {
        let (_, ds) = kl_setup(9, 1);
        let weights: Vec<f64> = (1..=9).map(|i| i as f64 / 45.0).collect();
        let ds = ds.with_obs_weights(weights.clone()).unwrap();
        let dir = TempDir::new().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.n_obs(), 9);
        assert_eq!(back.n_features(), 2);
        assert_eq!(back.obs_weights(), &weights[..]);
        for p in 0..2 {
            assert_eq!(back.grid(p).axes(), ds.grid(p).axes());
            assert_eq!(back.values_matrix(p), ds.values_matrix(p));
            assert!(back.mask_matrix(p).is_none());
        }
    }

    #[test]
    fn masked_dataset_round_trips() {
        let (_, ds) = kl_setup(6, 2);
        let mut rng = replication_rng(2, 0, RngPurpose::Masks);
        let sparse = sparsify(&ds, SparsityRegime::Medium, &mut rng).unwrap();
        let dir = TempDir::new().unwrap();
        write_dataset(&sparse, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        for p in 0..2 {
            assert_eq!(back.values_matrix(p), sparse.values_matrix(p));
            assert_eq!(back.mask_matrix(p), sparse.mask_matrix(p));
        }
    }

    #[test]
    fn gram_matrix_round_trips() {
        let (_, ds) = kl_setup(8, 3);
        let gram = gram_estimate(&ds, None, Some(&[0.01, 0.02])).unwrap();
        assert!(gram.corrected);
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("gram.csv");
        write_gram(&gram, &path).unwrap();
        let back = read_gram(&path).unwrap();
        assert!(back.corrected);
        assert_eq!(back.matrix, gram.matrix);
    }

    #[test]
    fn model_round_trips_bitwise() {
        let (_, ds) = kl_setup(12, 4);
        let model = gram_mfpca(
            &ds,
            None,
            ComponentSelector::Count(4),
            &GramOptions::default(),
        )
        .unwrap();
        let dir = TempDir::new().unwrap();
        write_model(&model, dir.path()).unwrap();
        let back = read_model(dir.path()).unwrap();
        assert_eq!(back.pathway, Pathway::Gram);
        assert_eq!(back.eigenvalues, model.eigenvalues);
        assert_eq!(back.variance_fraction, model.variance_fraction);
        assert_eq!(back.scores, model.scores);
        assert_eq!(back.obs_weights, model.obs_weights);
        for p in 0..2 {
            assert_eq!(back.mean.block(p), model.mean.block(p));
            assert_eq!(back.mean.grids()[p].axes(), model.mean.grids()[p].axes());
        }
        for k in 0..4 {
            for p in 0..2 {
                assert_eq!(
                    back.eigenfunctions[k].block(p),
                    model.eigenfunctions[k].block(p)
                );
            }
        }
    }

    #[test]
    fn coefficients_round_trip_with_blocks() {
        let (model, ds) = kl_setup(7, 5);
        let basis = BasisSystem::from_kl_model(&model).unwrap();
        let coeffs = fit_coefficients(&ds, &basis).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("coeffs.csv");
        write_coefficients(&coeffs, &path).unwrap();
        let back = read_coefficients(&path).unwrap();
        assert_eq!(back.blocks.len(), coeffs.blocks.len());
        for (a, b) in back.blocks.iter().zip(&coeffs.blocks) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kl_truth_file_round_trips() {
        let (model, _) = kl_setup(2, 6);
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("kl_model.csv");
        write_kl_truth(&model, &path).unwrap();
        let back = read_kl_truth(&path).unwrap();
        assert_eq!(back.len(), model.n_components());
        for (i, &(l, a)) in back.iter().enumerate() {
            assert_eq!(l, model.eigenvalues()[i]);
            assert_eq!(a, model.alphas()[i]);
        }
    }

    #[test]
    fn cloud_summary_renders_text_and_csv() {
        let (_, ds) = kl_setup(8, 7);
        let fw = FeatureWeights::Scalar(vec![1.0, 2.0]);
        let summary = inertia_report(&ds, Some(&fw)).unwrap();
        let text = render_cloud_summary(&summary);
        assert!(text.contains("inertia (plain distance)"));
        assert!(text.contains("weighted variance total"));
        let csv = cloud_summary_csv(&summary);
        let lines: Vec<&str> = csv.lines().collect();
        // header + 3 identities + 2x2 per-feature rows + 2 weighted totals
        assert_eq!(lines.len(), 1 + 3 + 4 + 2);
        assert!(lines[1].starts_with("inertia_d,"));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "no header here\n1,2\n").unwrap();
        assert!(matches!(
            read_gram(&path),
            Err(MfpcaError::Parse { .. })
        ));
        fs::write(&path, "# n=2,corrected=false\n1,2\n3\n").unwrap();
        assert!(read_gram(&path).is_err());
        fs::write(&path, "# n=2,corrected=maybe\n1,2\n3,4\n").unwrap();
        assert!(read_gram(&path).is_err());
        assert!(read_dataset(dir.path()).is_err());
    }
}
