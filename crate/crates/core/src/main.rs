use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rhokit::pipeline::{self, CommandOutput, PipelineConfig};

/// Entropy coefficients, conflation ladders, INLP removal and exact checks.
///
/// Settings come from built-in defaults, then the --config file, then flags.
#[derive(Parser)]
#[command(name = "rhokit", version)]
struct Cli {
    /// TOML config with [corpus], [rho], [sgns], [inlp], [refit], [ladder], [verify] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report entropies in bits.
    #[arg(long, global = true)]
    bits: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CorpusArgs {
    /// Annotated corpus (CoNLL-U or token<TAB>tag); repeatable for rho.
    #[arg(long)]
    annotation: Vec<PathBuf>,
    /// Whitespace-tokenized raw text.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Directory of saved embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// conllu or tsv.
    #[arg(long)]
    format: Option<String>,
    /// upos or xpos (fpos).
    #[arg(long)]
    tag_column: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate rho = H[T] / H[W] for each annotation.
    Rho {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        order: Option<usize>,
    },
    /// Write the conflation ladder of an annotation.
    Conflate {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Ladder report: rho per step, INLP and loss increase for selected steps.
    Ladder {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// INLP on every n-th step (default ceil(m/8)).
        #[arg(long)]
        every: Option<usize>,
    },
    /// Train skip-gram embeddings on the raw corpus.
    SgnsTrain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Negative-sampling and full-softmax loss of saved embeddings.
    SgnsEval {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Remove an annotation from saved embeddings by nullspace projection.
    Inlp {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Loss increase after removing an annotation from saved embeddings.
    DeltaLoss {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Exact checks on seeded random worlds and stored projectors.
    Verify {
        #[arg(long)]
        worlds: Option<usize>,
        /// Projection file whose projectors must be orthogonal projectors.
        #[arg(long)]
        projection: Vec<PathBuf>,
    },
    /// Regress delta_nats on rho over ladder reports.
    Regress {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn apply_corpus(config: &mut PipelineConfig, c: CorpusArgs) {
    if !c.annotation.is_empty() {
        config.corpus.annotation_paths = c.annotation;
    }
    if c.raw.is_some() {
        config.corpus.raw_path = c.raw;
    }
    if c.embeddings.is_some() {
        config.corpus.embeddings_dir = c.embeddings;
    }
    if let Some(f) = c.format {
        config.corpus.format = f;
    }
    if let Some(t) = c.tag_column {
        config.corpus.tag_column = t;
    }
}

fn run(cli: Cli) -> rhokit::Result<CommandOutput> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    config.bits |= cli.bits;
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    match cli.command {
        Command::Rho { corpus, order } => {
            apply_corpus(&mut config, corpus);
            if let Some(order) = order {
                config.rho.kn_order = order;
            }
            pipeline::cmd_rho(&config)
        }
        Command::Conflate { corpus } => {
            apply_corpus(&mut config, corpus);
            pipeline::cmd_conflate(&config)
        }
        Command::Ladder { corpus, every } => {
            apply_corpus(&mut config, corpus);
            if let Some(every) = every {
                config.ladder.every = every;
            }
            pipeline::cmd_ladder(&config)
        }
        Command::SgnsTrain { corpus, dim, epochs } => {
            apply_corpus(&mut config, corpus);
            config.sgns.dim = dim.unwrap_or(config.sgns.dim);
            config.sgns.epochs = epochs.unwrap_or(config.sgns.epochs);
            pipeline::cmd_sgns_train(&config)
        }
        Command::SgnsEval { corpus } => {
            apply_corpus(&mut config, corpus);
            pipeline::cmd_sgns_eval(&config)
        }
        Command::Inlp { corpus } => {
            apply_corpus(&mut config, corpus);
            pipeline::cmd_inlp(&config)
        }
        Command::DeltaLoss { corpus } => {
            apply_corpus(&mut config, corpus);
            pipeline::cmd_delta_loss(&config)
        }
        Command::Verify { worlds, projection } => {
            config.verify.worlds = worlds.unwrap_or(config.verify.worlds);
            pipeline::cmd_verify(&config, &projection)
        }
        Command::Regress { reports } => pipeline::cmd_regress(&reports),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{}", out.stdout);
            if out.verification_failed {
                eprintln!("verification failed");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(pipeline::exit_code(&err) as u8)
        }
    }
}
