//! `typegate`: inject, label and evaluate variable-misuse corpora.
//!
//! Exit codes: 0 success (for `check`: no diagnostics), 1 diagnostics
//! reported, 2 usage or unreadable input, 3 input that cannot be analyzed
//! or a detector failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use typegate::detect::DetectorSpec;
use typegate::metrics::MatchRule;

use output::UsageError;

#[derive(Debug, Parser)]
#[command(name = "typegate", version, about = "Type-checker gating for variable-misuse bug detection")]
struct Cli {
    /// Worker threads for per-sample work (0 = one per logical core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Type-check one Python function.
    Check {
        file: PathBuf,
        /// Consume parameter, return and variable annotations.
        #[arg(long)]
        annotations: bool,
        /// Stub file declaring imported helpers.
        #[arg(long)]
        stubs: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Add one injected variable-misuse variant per selected correct sample.
    Inject {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, env = "TYPEGATE_SEED")]
        seed: u64,
        /// Fraction of correct samples that receive a variant.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
    },
    /// Mark buggy samples as type-related or not and print a category histogram.
    Label {
        corpus: PathBuf,
        #[arg(long)]
        annotations: bool,
        /// Write here instead of rewriting CORPUS in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run detectors over a corpus and report precision, recall and F-β.
    Eval {
        corpus: PathBuf,
        /// `typecheck`, `heuristic[:T]` or `external:PROGRAM [ARGS...]`.
        #[arg(long = "detector", required = true)]
        detectors: Vec<DetectorSpec>,
        /// Also report each detector behind the type checker.
        #[arg(long)]
        cascade: bool,
        #[arg(long = "match", default_value = "line")]
        match_rule: MatchRule,
        /// Extra β values beyond 1 and 1.5.
        #[arg(long = "beta")]
        betas: Vec<f64>,
        #[arg(long)]
        annotations: bool,
        /// Per-sample timeout for external detectors, in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        /// Report CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop type-related bugs from a labeled training corpus, oversampling
    /// the remaining bugs back to the original bug count.
    FilterTrain {
        corpus: PathBuf,
        #[arg(long, env = "TYPEGATE_SEED")]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove evaluation samples whose function also occurs in training data.
    Dedup {
        eval: PathBuf,
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate F-β over a β grid for (label, precision, recall) pairs.
    Fbeta {
        /// CSV with header `label,precision,recall` (fractions in [0, 1]).
        #[arg(long)]
        pairs: PathBuf,
        /// `START:END:STEP`.
        #[arg(long, default_value = "0.1:3:0.1")]
        grid: String,
        /// Curve CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    match commands::run(cli.command, cli.jobs) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.chain().any(|c| c.is::<UsageError>());
            ExitCode::from(if is_usage { 2 } else { 3 })
        }
    }
}
