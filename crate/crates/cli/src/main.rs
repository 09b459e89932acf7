//! `landmark-frames`: corpus generation, masking, decoding, scoring and
//! experiment runs from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "landmark-frames",
    version,
    about = "Landmark-frame re-weighting and frame-dropping experiments"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed; overrides the config file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, env = "LANDMARK_FRAMES_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report formats, comma separated (csv, svg)
    #[arg(long, global = true)]
    pub format: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Corpus directory (utterances.txt, alignments/, scores/, transitions.txt)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Unit of alignment boundaries
    #[arg(long, default_value = "frames", value_parser = ["frames", "samples"])]
    pub unit: String,
}

#[derive(Args, Debug, Clone)]
pub struct AnnotationArgs {
    /// boundary or offset
    #[arg(long, default_value = "boundary")]
    pub mode: String,
    /// Keep abutting consonant closures and releases as separate events
    #[arg(long)]
    pub no_merge_mc: bool,
    /// Widen every landmark by this many frames on each side
    #[arg(long, default_value_t = 0)]
    pub radius: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus
    Synth,
    /// Write landmark events and landmark-frame fractions
    Annotate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        annotation: AnnotationArgs,
    },
    /// Write the frame masks a strategy produces
    Mask {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        annotation: AnnotationArgs,
        #[arg(long)]
        strategy: String,
    },
    /// Apply a strategy and write the transformed corpus
    Transform {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        annotation: AnnotationArgs,
        #[arg(long)]
        strategy: String,
        /// Default replacement method (copy, fill_0, fill_const, upsample)
        #[arg(long, default_value = "copy")]
        method: String,
    },
    /// Viterbi-decode every utterance
    Decode {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Prune states this far below the frame's best score
        #[arg(long)]
        beam: Option<f64>,
    },
    /// Score decodes against the corpus references
    Score {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// decodes.txt written by `decode`
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Paired significance tests between two per-utterance reports
    Stats {
        /// per_utterance.csv of the system under test
        #[arg(long)]
        a: PathBuf,
        /// per_utterance.csv of the reference system
        #[arg(long)]
        b: PathBuf,
    },
    /// Baseline plus every configured strategy
    Run,
    /// One row per value of a swept parameter
    Sweep {
        /// overweight or drop_rate
        #[arg(long)]
        parameter: Option<String>,
        /// Comma separated values
        #[arg(long)]
        values: Option<String>,
        /// Strategy the value is applied to
        #[arg(long)]
        strategy: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
