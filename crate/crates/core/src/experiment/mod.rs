//! End-to-end runs: baseline, strategies, significance tests, artifacts.

mod config;
mod corpus;
mod report;
mod run;

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub use config::{CorpusSource, ExperimentConfig, ReportFormats, SweepParam, SweepSpec};
pub use corpus::{Corpus, Utterance};
pub use report::{emit_report, format_report_csv, read_report_rows, render_svg, REPORT_COLUMNS};
pub use run::{
    baseline_per, decode_utterance, run_experiment, sha256_hex, sweep, transform_utterance,
    tune_noise_sigma, utterance_seed, ExperimentReport, ReportRow, StatRow, StrategyArtifacts,
    UtteranceOutcome,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus_io::CorpusError),
    #[error(transparent)]
    Landmark(#[from] crate::landmark::LandmarkError),
    #[error(transparent)]
    Strategy(#[from] crate::strategy::StrategyError),
    #[error(transparent)]
    Decode(#[from] crate::decoder::DecodeError),
    #[error(transparent)]
    Scoring(#[from] crate::scoring::ScoringError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
}

impl ExperimentError {
    /// True for problems with the configuration or inputs rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Synth(_)
                | ExperimentError::Strategy(crate::strategy::StrategyError::Parse(_))
        )
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
