//! Batch harness: condition grid, trial generation and analysis, per-cell
//! aggregation, file formats and report rendering.

mod aggregate;
mod config;
mod files;
mod pipeline;
mod report;

use std::path::Path;

use thiserror::Error;

use crate::detect::DetectError;
use crate::simulate::SimulationError;
use crate::timing::TimingError;

pub use aggregate::{aggregate, ConditionSummary, CurvePoint, Stat};
pub use config::{
    tempo_class, Cell, ConfigIssue, DetectorSettings, ExperimentConfig, PerturbationConfig, Pipeline,
    TraceConfig, FAST_TEMPO_BELOW,
};
pub use files::{
    analyze_files, format_seconds, read_onsets_csv, read_results, read_trace_csv, read_trial_record,
    write_onsets_csv, write_results, write_trace_csv, write_trial_record, CueInput, FileInputs,
    Metronome, OnsetStreams, ParticipantInput, TrialRecord,
};
pub use pipeline::{
    analyze_trial, cue_from_onsets, run_experiment, run_trial, AnalysisOptions, Exclusion,
    ExperimentReport, TrialResult,
};
pub use report::{emit_report, render_svg, write_curve_csv, Format};

/// Version stamped into every JSON and TOML file the harness reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config could not be parsed: {0}")]
    ConfigParse(String),
    #[error("invalid config: {}", join_issues(.0))]
    InvalidConfig(Vec<config::ConfigIssue>),
    #[error("{path}, line {line}, column {column}: {message}")]
    Schema {
        path: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("no cue stream: supply cue onsets, a cue trace, or a nominal metronome")]
    MissingCue,
    #[error("no participant stream: supply participant onsets or a participant trace")]
    MissingParticipant,
    #[error("every trial in cell {0} was excluded")]
    EmptyCell(String),
    #[error("trials from different cells cannot be aggregated together")]
    MixedCells,
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("{0}")]
    Runtime(String),
}

fn join_issues(issues: &[config::ConfigIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl HarnessError {
    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Bad configuration or arguments, as opposed to bad data or a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::ConfigParse(_) | HarnessError::InvalidConfig(_) | HarnessError::Usage(_)
        )
    }
}
