//! Trace-driven simulation: datasets, bootstrap, script execution, parameter
//! sweeps, attack drills and reports.

mod dataset;
mod report;
mod runner;

use thiserror::Error;

pub use dataset::{
    emit_dataset, emit_script, generate_dataset, generate_script, load_dataset, load_script, parse_dataset,
    parse_node_record, parse_script, parse_script_line, to_line, write, Dataset, DatasetConfig, NodeRecord, ScriptLine,
};
pub use report::{report_csv, sweep_csv, RunReport, ScenarioCounts, SweepRow, REPORT_CSV_HEADER};
pub use runner::{attack_demo, bootstrap, run, run_with_ledger, sweep, AttackSummary, SweepAxis};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SimError {
    /// 1 for I/O and parse failures, 2 for invalid configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Io { .. } | SimError::Parse { .. } => 1,
            SimError::Config(_) => 2,
        }
    }
}

impl From<crate::model::ParamsError> for SimError {
    fn from(e: crate::model::ParamsError) -> Self {
        SimError::Config(e.to_string())
    }
}
