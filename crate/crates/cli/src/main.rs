use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cohortsift_cli::commands::{
    cmd_cv, cmd_generate, cmd_keywords, cmd_stats, cmd_sweep, write_keywords_tsv, Preset,
};
use cohortsift_cli::config::{ExperimentConfig, PartialConfig, SignificantSource, SweepFile};

#[derive(Parser)]
#[command(
    name = "cohortsift",
    version,
    about = "Cohort text classification with evolved boolean programs"
)]
struct Cli {
    /// Worker threads for folds and seeds (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Generate {
        #[arg(long, value_enum, default_value = "strong")]
        preset: Preset,
        #[arg(long, env = "COHORTSIFT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank distribution, word occurrence, Zipf fit and pair MI of a corpus.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only list pairs seen at least this often.
        #[arg(long, default_value_t = 5)]
        min_pair_count: u64,
    },
    /// k-fold cross-validation.
    Cv {
        #[command(flatten)]
        flags: ExperimentFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-seed sweep over a grid file, plus an optional voting sweep.
    Sweep {
        /// TOML sweep file.
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        flags: ExperimentFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Positive and negative keywords of model files.
    Keywords {
        #[arg(required = true)]
        models: Vec<PathBuf>,
        /// Write the TSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentFlags {
    /// TOML settings; values in the file win over flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSONL corpus.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Positive cohort label [default: 2].
    #[arg(long)]
    pos_group: Option<i64>,
    /// Negative cohort label [default: 3].
    #[arg(long)]
    neg_group: Option<i64>,
    /// Longest n-gram, 1 to 4 [default: 1].
    #[arg(long)]
    arity: Option<usize>,
    /// Keep words seen more than this often.
    #[arg(long)]
    min_word_count: Option<u64>,
    /// Keep n-grams seen more than this often.
    #[arg(long)]
    min_ngram_count: Option<u64>,
    /// Keep pairs whose MI exceeds this.
    #[arg(long, allow_negative_numbers = true)]
    min_mi: Option<f64>,
    /// Keep only n-grams containing a word from this list.
    #[arg(long)]
    significant_words: Option<PathBuf>,
    /// Thresholds per term, 1 to 3 [default: 1].
    #[arg(long)]
    thresholds: Option<usize>,
    /// Features kept by class MI before training [default: 3000].
    #[arg(long)]
    static_features: Option<usize>,
    /// Feature pool per search step [default: 90].
    #[arg(long)]
    dynamic_features: Option<usize>,
    /// Scoring calls per representation [default: 9000].
    #[arg(long)]
    eval_budget: Option<u64>,
    /// Passes without improvement before a restart [default: 3].
    #[arg(long)]
    restart_stagnation: Option<usize>,
    /// Folds [default: 5].
    #[arg(long)]
    k: Option<usize>,
    /// Seeds to sweep; more than one writes seeds.tsv and hist.tsv [default: 1].
    #[arg(long)]
    seeds: Option<usize>,
    /// Representations per model [default: 1].
    #[arg(long)]
    model_size: Option<usize>,
    /// none, from-feature-selection:N or from-ensemble:M
    #[arg(long)]
    emit_significant_words: Option<SignificantSource>,
    /// Base seed [default: 0].
    #[arg(long, env = "COHORTSIFT_SEED")]
    seed: Option<u64>,
}

impl ExperimentFlags {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            input: self.input.clone(),
            pos_group: self.pos_group,
            neg_group: self.neg_group,
            arity: self.arity,
            min_word_count: self.min_word_count,
            min_ngram_count: self.min_ngram_count,
            min_mi: self.min_mi,
            significant_words: self.significant_words.clone(),
            thresholds: self.thresholds,
            static_features: self.static_features,
            dynamic_features: self.dynamic_features,
            eval_budget: self.eval_budget,
            restart_stagnation: self.restart_stagnation,
            k: self.k,
            seeds: self.seeds,
            model_size: self.model_size,
            emit_significant_words: self.emit_significant_words,
            seed: self.seed,
            command: None,
            version: None,
        }
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let flags = self.partial();
        let merged = match &self.config {
            Some(path) => PartialConfig::from_file(path)?.or(&flags),
            None => flags,
        };
        ExperimentConfig::resolve(&merged)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Generate { preset, seed, out } => {
            let path = cmd_generate(&preset.spec(seed), &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Stats {
            input,
            out,
            min_pair_count,
        } => cmd_stats(&input, &out, min_pair_count)?,
        Command::Cv { flags, out } => {
            let config = flags.resolve()?;
            let report = cmd_cv(&config, &out)?;
            let m = report.result.metrics;
            println!(
                "pooled accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
                m.accuracy, m.precision, m.recall, m.f1
            );
            if let Some(s) = report.seeds {
                println!(
                    "over {} seeds: mean {:.4}  std {:.4}",
                    s.accuracies.len(),
                    s.mean,
                    s.std_dev
                );
            }
        }
        Command::Sweep { grid, flags, out } => {
            let file = SweepFile::from_file(&grid)?;
            let mut base = flags.partial();
            if let Some(path) = &flags.config {
                base = PartialConfig::from_file(path)?.or(&base);
            }
            let report = cmd_sweep(&file, &base, &out)?;
            for r in report.grid.iter().chain(&report.voting) {
                println!("{}\tmean {:.4}\tstd {:.4}", r.label, r.mean, r.std_dev);
            }
        }
        Command::Keywords { models, out } => {
            let report = cmd_keywords(&models)?;
            match out {
                Some(path) => {
                    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
                    write_keywords_tsv(&mut f, &report)?;
                }
                None => write_keywords_tsv(&mut std::io::stdout().lock(), &report)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
