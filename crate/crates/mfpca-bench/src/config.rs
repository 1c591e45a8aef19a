//! Scenario configuration: the knobs of one benchmark scenario, parsed from
//! plain-text `key=value` files with command-line overrides on top.

use anyhow::{bail, Context, Result};
use std::fmt;
use std::path::Path;

/// Data-degradation regime applied after simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Raw dense observations.
    Dense,
    /// Dense observations plus iid measurement noise.
    Noisy,
    /// 50-70% of points removed per curve; no noise.
    SparseMedium,
    /// 90-95% of points removed per curve; no noise.
    SparseHigh,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::Dense => "dense",
            Regime::Noisy => "noisy",
            Regime::SparseMedium => "sparse-medium",
            Regime::SparseHigh => "sparse-high",
        }
    }

    pub fn from_tag(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Regime::Dense),
            "noisy" => Ok(Regime::Noisy),
            "sparse-medium" => Ok(Regime::SparseMedium),
            "sparse-high" => Ok(Regime::SparseHigh),
            other => bail!("unknown regime `{other}` (dense, noisy, sparse-medium, sparse-high)"),
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Regime::SparseMedium | Regime::SparseHigh)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Estimation pathway selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathwayChoice {
    Gram,
    Cov,
    Basis,
}

impl PathwayChoice {
    pub fn tag(self) -> &'static str {
        match self {
            PathwayChoice::Gram => "gram",
            PathwayChoice::Cov => "cov",
            PathwayChoice::Basis => "basis",
        }
    }
}

/// Parses a comma-separated pathway list such as `gram,cov,basis`.
pub fn parse_pathways(s: &str) -> Result<Vec<PathwayChoice>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        let p = match tok {
            "gram" => PathwayChoice::Gram,
            "cov" | "covariance" => PathwayChoice::Cov,
            "basis" => PathwayChoice::Basis,
            other => bail!("unknown pathway `{other}` (gram, cov, basis)"),
        };
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        bail!("pathway list is empty");
    }
    Ok(out)
}

/// One benchmark scenario: simulation design, degradation, pathways, and
/// replication plan.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Scenario label used in output rows; derived from the knobs if unset.
    pub name: Option<String>,
    /// Observations per replication.
    pub n: usize,
    /// Grid points per axis of the two-dimensional first feature.
    pub m1: (usize, usize),
    /// Grid points of the one-dimensional second feature.
    pub m2: usize,
    /// Degradation applied after simulation.
    pub regime: Regime,
    /// Pathways to fit.
    pub pathways: Vec<PathwayChoice>,
    /// Components in the generating expansion.
    pub k_sim: usize,
    /// Components retained by every fit.
    pub k_retain: usize,
    /// Replications per scenario.
    pub replications: usize,
    /// Master seed; replication `r` derives its streams from `(seed, r)`.
    pub seed: u64,
    /// Per-feature noise variances for the noisy regime.
    pub sigma2: Vec<f64>,
    /// Univariate components retained per feature by the covariance pathway.
    pub k_univ: Vec<usize>,
    /// P-spline basis sizes per axis for feature 1 (defaults to a grid-sized
    /// heuristic when unset).
    pub nbasis1: Option<(usize, usize)>,
    /// P-spline basis size for feature 2.
    pub nbasis2: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: None,
            n: 50,
            m1: (11, 11),
            m2: 21,
            regime: Regime::Dense,
            pathways: vec![PathwayChoice::Gram, PathwayChoice::Cov, PathwayChoice::Basis],
            k_sim: 25,
            k_retain: 12,
            replications: 20,
            seed: 7,
            sigma2: vec![0.25, 0.25],
            k_univ: vec![20, 20],
            nbasis1: None,
            nbasis2: None,
        }
    }
}

impl ScenarioConfig {
    /// Scenario label: the explicit name, or one derived from the knobs.
    pub fn scenario_id(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!(
                "n{}_m{}x{}_m{}_{}",
                self.n, self.m1.0, self.m1.1, self.m2, self.regime
            ),
        }
    }

    pub fn m1_string(&self) -> String {
        format!("{}x{}", self.m1.0, self.m1.1)
    }

    /// Checks the cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            bail!("n must be at least 2");
        }
        if self.m1.0 < 2 || self.m1.1 < 2 || self.m2 < 2 {
            bail!("every grid axis needs at least 2 points");
        }
        if self.k_sim == 0 || self.k_sim > 25 {
            bail!("k_sim must be in 1..=25");
        }
        if self.k_retain == 0 || self.k_retain > 25 || self.k_retain > self.k_sim {
            bail!("k_retain must be in 1..=25 and at most k_sim");
        }
        if self.replications == 0 {
            bail!("replications must be positive");
        }
        if self.pathways.is_empty() {
            bail!("at least one pathway is required");
        }
        if self.sigma2.len() != 2 || self.sigma2.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            bail!("sigma2 must list two positive variances");
        }
        if self.k_univ.len() != 2 || self.k_univ.iter().any(|&k| k == 0) {
            bail!("k_univ must list two positive counts");
        }
        Ok(())
    }
}

fn parse_axis_pair(v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once('x')
        .with_context(|| format!("expected AxB, got `{v}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_f64_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number `{t}`")))
        .collect()
}

fn parse_usize_list(v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad count `{t}`")))
        .collect()
}

/// Parses a scenario file: one `key=value` per line, `#` comments, blank
/// lines ignored. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected key=value, got `{line}`", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let result: Result<()> = (|| {
            match key {
                "name" => cfg.name = Some(value.to_string()),
                "n" => cfg.n = value.parse()?,
                "m1" => cfg.m1 = parse_axis_pair(value)?,
                "m2" => cfg.m2 = value.parse()?,
                "regime" => cfg.regime = Regime::from_tag(value)?,
                "pathways" => cfg.pathways = parse_pathways(value)?,
                "k_sim" => cfg.k_sim = value.parse()?,
                "k_retain" => cfg.k_retain = value.parse()?,
                "replications" => cfg.replications = value.parse()?,
                "seed" => cfg.seed = value.parse()?,
                "sigma2" => cfg.sigma2 = parse_f64_list(value)?,
                "k_univ" => cfg.k_univ = parse_usize_list(value)?,
                "nbasis1" => cfg.nbasis1 = Some(parse_axis_pair(value)?),
                "nbasis2" => cfg.nbasis2 = Some(value.parse()?),
                other => bail!("unknown key `{other}`"),
            }
            Ok(())
        })();
        result.with_context(|| format!("line {}: `{raw}`", lineno + 1))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a scenario file, or the default scenario when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading scenario file {}", p.display()))?;
            parse_config(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(ScenarioConfig::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_text() {
        let cfg = parse_config(
            "# comment\n\
             n = 100\n\
             m1 = 26x26  # trailing comment\n\
             m2 = 51\n\
             regime = noisy\n\
             pathways = gram,basis\n\
             k_retain = 8\n\
             replications = 3\n\
             seed = 99\n\
             sigma2 = 0.1, 0.2\n\
             k_univ = 15,15\n\
             nbasis1 = 12x12\n\
             nbasis2 = 15\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 100);
        assert_eq!(cfg.m1, (26, 26));
        assert_eq!(cfg.m2, 51);
        assert_eq!(cfg.regime, Regime::Noisy);
        assert_eq!(cfg.pathways, vec![PathwayChoice::Gram, PathwayChoice::Basis]);
        assert_eq!(cfg.k_retain, 8);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.sigma2, vec![0.1, 0.2]);
        assert_eq!(cfg.nbasis1, Some((12, 12)));
        assert_eq!(cfg.scenario_id(), "n100_m26x26_m51_noisy");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(parse_config("k_retain = 30\n").is_err());
        assert!(parse_config("regime = blurry\n").is_err());
        assert!(parse_config("mystery = 1\n").is_err());
        assert!(parse_config("pathways = none\n").is_err());
        assert!(parse_config("n = 1\n").is_err());
        assert!(parse_config("sigma2 = -0.25, 0.25\n").is_err());
    }

    #[test]
    fn named_scenarios_use_their_name() {
        let cfg = parse_config("name = warmup\n").unwrap();
        assert_eq!(cfg.scenario_id(), "warmup");
    }
}
