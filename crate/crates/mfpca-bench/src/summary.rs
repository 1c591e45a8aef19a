//! Aggregation of run records into per-scenario/pathway quartile tables and
//! pairwise computation-time ratios.

use crate::runner::RunRecord;
use anyhow::Result;
use std::fmt::Write as _;
use std::path::Path;

/// One aggregated line of `summary.csv`. Ratio rows carry NaN quartiles.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub scenario: String,
    /// Pathway tag, or `a/b` for a computation-time ratio row.
    pub pathway: String,
    pub metric: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile (the common "type 7" rule) of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

fn quartiles(values: &mut Vec<f64>) -> Option<(f64, f64, f64)> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Some((
        quantile(values, 0.5),
        quantile(values, 0.25),
        quantile(values, 0.75),
    ))
}

/// Group keys in first-appearance order.
fn group_keys(records: &[RunRecord]) -> Vec<(String, String)> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.scenario.clone(), r.pathway.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys
}

fn group<'a>(
    records: &'a [RunRecord],
    scenario: &str,
    pathway: &str,
) -> impl Iterator<Item = &'a RunRecord> + 'a {
    let scenario = scenario.to_string();
    let pathway = pathway.to_string();
    records
        .iter()
        .filter(move |r| r.is_ok() && r.scenario == scenario && r.pathway == pathway)
}

/// Median computation time of `pathway` within `scenario`, if any run
/// succeeded.
pub fn median_ct(records: &[RunRecord], scenario: &str, pathway: &str) -> Option<f64> {
    let mut cts: Vec<f64> = group(records, scenario, pathway)
        .map(|r| r.fit_seconds)
        .collect();
    quartiles(&mut cts).map(|(median, _, _)| median)
}

/// Ratio of median computation times `a / b`; 1 when `a == b`.
pub fn ct_ratio(records: &[RunRecord], scenario: &str, a: &str, b: &str) -> Option<f64> {
    Some(median_ct(records, scenario, a)? / median_ct(records, scenario, b)?)
}

/// Builds the summary table: per scenario/pathway quartiles of computation
/// time, MRSE, and the per-component RSE and ISE columns, followed by the
/// pairwise computation-time ratios within each scenario. Failed records are
/// excluded; the output does not depend on record order.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let keys = group_keys(records);
    for (scenario, pathway) in &keys {
        let members: Vec<&RunRecord> = group(records, scenario, pathway).collect();
        if members.is_empty() {
            continue;
        }
        let k = members.iter().map(|r| r.rse.len()).max().unwrap_or(0);
        let mut push = |metric: String, mut values: Vec<f64>| {
            if let Some((median, q1, q3)) = quartiles(&mut values) {
                rows.push(SummaryRow {
                    scenario: scenario.clone(),
                    pathway: pathway.clone(),
                    metric,
                    median,
                    q1,
                    q3,
                });
            }
        };
        push(
            "fit_seconds".into(),
            members.iter().map(|r| r.fit_seconds).collect(),
        );
        push("mrse".into(), members.iter().map(|r| r.mrse).collect());
        for j in 0..k {
            push(
                format!("rse_{}", j + 1),
                members.iter().filter_map(|r| r.rse.get(j).copied()).collect(),
            );
        }
        for j in 0..k {
            push(
                format!("ise_{}", j + 1),
                members.iter().filter_map(|r| r.ise.get(j).copied()).collect(),
            );
        }
    }
    // pairwise computation-time ratios among the pathways of each scenario
    let mut scenarios: Vec<String> = Vec::new();
    for (scenario, _) in &keys {
        if !scenarios.contains(scenario) {
            scenarios.push(scenario.clone());
        }
    }
    for scenario in &scenarios {
        let pathways: Vec<&String> = keys
            .iter()
            .filter(|(s, _)| s == scenario)
            .map(|(_, p)| p)
            .collect();
        for a in &pathways {
            for b in &pathways {
                if a == b {
                    continue;
                }
                if let Some(ratio) = ct_ratio(records, scenario, a, b) {
                    rows.push(SummaryRow {
                        scenario: scenario.clone(),
                        pathway: format!("{a}/{b}"),
                        metric: "ct_ratio".into(),
                        median: ratio,
                        q1: f64::NAN,
                        q3: f64::NAN,
                    });
                }
            }
        }
    }
    rows
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Renders the summary table as CSV.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("scenario,pathway,metric,median,q1,q3\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scenario,
            r.pathway,
            r.metric,
            fmt_opt(r.median),
            fmt_opt(r.q1),
            fmt_opt(r.q3)
        );
    }
    out
}

/// Writes `summary.csv` into `dir`.
pub fn write_summary(rows: &[SummaryRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn record(scenario: &str, pathway: &str, rep: usize, ct: f64, mrse: f64) -> RunRecord {
        let cfg = ScenarioConfig::default();
        RunRecord {
            scenario: scenario.into(),
            n: cfg.n,
            m1: cfg.m1_string(),
            m2: cfg.m2,
            regime: "dense".into(),
            replication: rep,
            pathway: pathway.into(),
            seed: 7,
            status: "ok".into(),
            fit_seconds: ct,
            k_selected: 2,
            mrse,
            rse: vec![0.1, 0.2],
            ise: vec![0.3, 0.4],
            alphas: vec![0.5],
        }
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let xs = [1.0, 2.0, 3.0, 10.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 10.0);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&[4.0], 0.25), 4.0);
    }

    #[test]
    fn single_record_summary_equals_that_record() {
        let records = vec![record("s", "gram", 0, 0.5, 0.01)];
        let rows = summarize(&records);
        let fit = rows.iter().find(|r| r.metric == "fit_seconds").unwrap();
        assert_eq!((fit.median, fit.q1, fit.q3), (0.5, 0.5, 0.5));
        let mrse = rows.iter().find(|r| r.metric == "mrse").unwrap();
        assert_eq!(mrse.median, 0.01);
        let rse1 = rows.iter().find(|r| r.metric == "rse_1").unwrap();
        assert_eq!(rse1.median, 0.1);
    }

    #[test]
    fn self_ratio_is_one_and_medians_ignore_order() {
        let mut records = vec![
            record("s", "gram", 0, 0.2, 0.03),
            record("s", "gram", 1, 0.4, 0.01),
            record("s", "gram", 2, 0.3, 0.02),
            record("s", "cov", 0, 0.6, 0.05),
            record("s", "cov", 1, 0.9, 0.04),
            record("s", "cov", 2, 0.3, 0.06),
        ];
        assert_eq!(ct_ratio(&records, "s", "gram", "gram"), Some(1.0));
        assert_eq!(ct_ratio(&records, "s", "cov", "gram"), Some(2.0));
        let before = summarize(&records);
        records.reverse();
        let after = summarize(&records);
        let find = |rows: &[SummaryRow], p: &str, m: &str| {
            rows.iter()
                .find(|r| r.pathway == p && r.metric == m)
                .map(|r| (r.median, r.q1, r.q3))
        };
        for (p, m) in [("gram", "mrse"), ("cov", "fit_seconds"), ("gram", "ise_2")] {
            assert_eq!(find(&before, p, m), find(&after, p, m));
        }
        // distinct ordered pairs appear as ratio rows
        let ratios: Vec<&SummaryRow> =
            before.iter().filter(|r| r.metric == "ct_ratio").collect();
        assert_eq!(ratios.len(), 2);
    }

    #[test]
    fn failed_records_are_excluded() {
        let mut bad = record("s", "gram", 0, f64::NAN, f64::NAN);
        bad.status = "sparsify error".into();
        bad.rse.clear();
        bad.ise.clear();
        let records = vec![bad, record("s", "gram", 1, 0.25, 0.02)];
        let rows = summarize(&records);
        let fit = rows.iter().find(|r| r.metric == "fit_seconds").unwrap();
        assert_eq!(fit.median, 0.25);
    }
}
