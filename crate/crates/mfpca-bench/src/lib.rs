//! Benchmark harness for the `mfpca` library: scenario configs, a
//! replicated runner that fits every configured pathway against simulated
//! ground truth, and CSV summaries of errors and computation times.

pub mod config;
pub mod runner;
pub mod summary;

pub use config::{load_config, parse_config, parse_pathways, PathwayChoice, Regime, ScenarioConfig};
pub use runner::{
    records_csv, records_header, run_scenario, write_records, RunOptions, RunRecord,
};
pub use summary::{ct_ratio, median_ct, quantile, summarize, summary_csv, write_summary, SummaryRow};
