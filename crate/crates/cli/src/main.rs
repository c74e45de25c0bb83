use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod report;

#[derive(Parser)]
#[command(
    name = "vdsg",
    version,
    about = "Distantly supervised scene graph labeling and EM denoising"
)]
struct Cli {
    /// Seed for every random draw; a `seed` key in --config takes precedence
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to one per core
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Distant,
    Semi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    NoiseAware,
    CrossEntropy,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a knowledge base from captions, one per line
    BuildKb {
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = vdsg::kb::DEFAULT_MIN_COUNT)]
        min_count: u64,
    },
    /// Attach knowledge-base candidates to overlapping object pairs
    Align {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Human-labeled scenes; prints the knowledge-base coverage of their relations
        #[arg(long)]
        dl: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with gold relations
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a human/distant scene split with this human share
        #[arg(long)]
        human_fraction: Option<f64>,
        /// Also write this many held-out test scenes
        #[arg(long)]
        test_scenes: Option<usize>,
    },
    /// Train a relation scorer on a dataset
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to cross-entropy on human labels, noise-aware otherwise
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
    },
    /// Run EM denoising
    Denoise {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        ds: PathBuf,
        #[arg(long)]
        dl: Option<PathBuf>,
        #[arg(long)]
        kb: PathBuf,
        /// `cooc` for knowledge-base co-occurrence, or a score file
        #[arg(long)]
        signal: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Gold relations used only to report label accuracy
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Predicate-classification metrics
    Eval {
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "50,100")]
        k: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Rank only knowledge-base candidates
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Let several relations of one pair enter the top K
        #[arg(long)]
        no_graph_constraint: bool,
    },
    /// Summarize trace and metrics CSVs
    Report {
        #[arg(long, num_args = 1..)]
        trace: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] vdsg::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(vdsg::Error::Numerical { .. }) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(vdsg::Error::Input(_)) => "input",
            CliError::Core(vdsg::Error::Parse { .. }) | CliError::Csv(_) => "parse",
            CliError::Core(vdsg::Error::Validation { .. }) => "validation",
            CliError::Core(vdsg::Error::Numerical { .. }) => "numerical",
            CliError::Core(vdsg::Error::Io(_)) | CliError::Io(_) => "io",
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn run(cli: Cli) -> CliResult {
    let seed = cli.seed;
    match cli.command {
        Command::BuildKb {
            captions,
            out,
            min_count,
        } => commands::build_kb(&captions, &out, min_count),
        Command::Align { kb, scenes, out, dl } => commands::align(&kb, &scenes, &out, dl.as_deref()),
        Command::Synth {
            config,
            out,
            human_fraction,
            test_scenes,
        } => commands::synth(config.as_deref(), &out, human_fraction, test_scenes, seed),
        Command::Train {
            data,
            kb,
            out,
            config,
            loss,
        } => commands::train(&data, &kb, &out, config.as_deref(), loss, seed),
        Command::Denoise {
            mode,
            ds,
            dl,
            kb,
            signal,
            config,
            out,
            gold,
        } => commands::denoise(commands::DenoiseArgs {
            mode,
            ds: &ds,
            dl: dl.as_deref(),
            kb: &kb,
            signal: signal.as_deref(),
            config: config.as_deref(),
            out: &out,
            gold: gold.as_deref(),
            seed,
        }),
        Command::Eval {
            scorer,
            scenes,
            gold,
            k,
            out,
            kb,
            no_graph_constraint,
        } => commands::eval(&scorer, &scenes, &gold, &k, &out, kb.as_deref(), !no_graph_constraint),
        Command::Report { trace, metrics, out } => report::report(&trace, &metrics, &out),
    }
}

#[cfg(feature = "parallel")]
fn run_with_threads(cli: Cli) -> CliResult {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
            pool.install(|| run(cli))
        }
        None => run(cli),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_threads(cli: Cli) -> CliResult {
    run(cli)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("vdsg: usage: {first}");
            return ExitCode::from(1);
        }
    };
    match run_with_threads(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("vdsg: {}: {msg}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
