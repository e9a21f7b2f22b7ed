use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imdp_rl::experiment::{format_g, load_model, run_experiment, BatchSize, ExperimentConfig};
use imdp_rl::{serialize_model, Error, LearnerConfig, SamplingMode, ScopeConfig, ScopeMode, TieBreak, Tolerance};

#[derive(Parser)]
#[command(name = "synth", version, about = "Strategy synthesis for gray-box MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated learning experiments and write CSV logs.
    Run(RunArgs),
    /// Write a model in the text format.
    Export {
        /// Model file or `builtin:<name>`.
        #[arg(long)]
        model: String,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Model file or `builtin:<name>` (bandit25-75, racetrack-small, gridworld).
    #[arg(long)]
    model: String,
    #[arg(long, default_value = "lcb")]
    sampling: SamplingMode,
    #[arg(long, default_value = "off")]
    scope: ScopeMode,
    /// Scoping tolerance, or `auto` for the learner's own tolerance.
    #[arg(long, default_value = "auto")]
    h: Tolerance,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Per-episode factor applied to epsilon.
    #[arg(long)]
    epsilon_decay: Option<f64>,
    /// Softmax temperature.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// How the sampling strategy splits ties between best actions.
    #[arg(long, default_value = "uniform")]
    ties: TieBreak,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    /// Runs per episode, or `auto` for the number of probabilistic pairs.
    #[arg(long, default_value = "auto")]
    runs: BatchSize,
    /// Number of replications.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Base seed; replication i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            learner: LearnerConfig {
                delta: self.delta,
                episodes: self.episodes,
                epsilon: self.epsilon,
                epsilon_decay: self.epsilon_decay,
                sampling: self.sampling,
                temperature: self.temperature,
                scope: ScopeConfig {
                    mode: self.scope,
                    h: self.h,
                },
                ties: self.ties,
                seed: self.seed,
                ..LearnerConfig::default()
            },
            runs: self.runs,
            reps: self.reps,
            jobs: self.jobs,
        }
    }
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let model = load_model(&args.model)?;
    let log = run_experiment(&model, &args.config())?;
    let files = log.write_to(&args.out, model.track.as_ref())?;
    let last = log.rows.last().expect("at least one episode");
    println!("model {} runs/episode {} reps {}", log.model, log.runs, args.reps);
    println!("optimal value {}", format_g(log.optimal));
    println!(
        "final bounds [{}, {}] corr_upper {} real {}",
        format_g(last.lower),
        format_g(last.upper),
        format_g(last.corr_upper),
        format_g(last.real)
    );
    println!("subsystem optimum {}", format_g(log.mean_subsystem_optimum()));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn export(model: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    let text = serialize_model(&load_model(model)?.mdp);
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 2,
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::NotContracting(_)
        | Error::TopologyMismatch
        | Error::Io(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Export { model, out } => export(model, out.as_ref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
