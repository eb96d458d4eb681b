#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use guae_core::{StdKind, Variant};

mod commands;
mod config;
mod manifest;

use config::{Overrides, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "guae",
    version,
    about = "Reward scoring, guided advantage estimation and collapse diagnostics"
)]
struct Cli {
    /// Master seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML file with config keys; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (score, advantage) or directory (simulate, diagnose).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score batch JSONL of {thought, prediction, reference} records.
    Score {
        input: PathBuf,
        #[command(flatten)]
        reward: RewardArgs,
    },
    /// Compute advantages for group-log JSONL.
    Advantage {
        input: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Train the tabular bandit policy and write per-step traces.
    Simulate {
        /// Comma-separated estimator variants trained on paired seeds.
        #[arg(long, value_delimiter = ',')]
        compare: Vec<Variant>,
        /// Comma-separated collapse probabilities for the synthetic schedule.
        #[arg(long, value_delimiter = ',')]
        schedule: Vec<f64>,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Collapse diagnostics over group-log or advantage-report JSONL.
    Diagnose {
        input: PathBuf,
        #[arg(long)]
        low_std_threshold: Option<f64>,
        /// Near-zero thresholds to report.
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1])]
        deltas: Vec<f64>,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
}

#[derive(Debug, Args)]
struct RewardArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau_click: Option<f64>,
    #[arg(long)]
    click_threshold: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Score wrong enumerated arguments as 0 instead of rho.
    #[arg(long)]
    strict_enumerated: bool,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// base | anchor-only | vat-only | guae
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long)]
    tau_gate: Option<f64>,
    #[arg(long)]
    p_low: Option<f64>,
    #[arg(long)]
    p_high: Option<f64>,
    /// Use the K-1 divisor for empirical group std.
    #[arg(long)]
    sample_std: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    n_states: Option<usize>,
    #[arg(long)]
    n_actions: Option<usize>,
    /// Initial probability on a wrong arm.
    #[arg(long)]
    init_mass: Option<f64>,
    /// Groups per schedule point.
    #[arg(long)]
    n_groups: Option<usize>,
    /// Success rate of non-collapsed schedule groups.
    #[arg(long)]
    bernoulli_p: Option<f64>,
}

impl RewardArgs {
    fn apply(&self, o: &mut Overrides) {
        o.lambda = self.lambda;
        o.tau_click = self.tau_click;
        o.click_threshold = self.click_threshold;
        o.rho = self.rho;
        o.strict_enumerated = self.strict_enumerated.then_some(true);
    }
}

impl EstimatorArgs {
    fn apply(&self, o: &mut Overrides) {
        o.variant = self.variant;
        o.epsilon = self.epsilon;
        o.sigma0 = self.sigma0;
        o.tau_gate = self.tau_gate;
        o.p_low = self.p_low;
        o.p_high = self.p_high;
        o.std_kind = self.sample_std.then_some(StdKind::Sample);
    }
}

impl TrainArgs {
    fn apply(&self, o: &mut Overrides) {
        o.k = self.k;
        o.beta = self.beta;
        o.learning_rate = self.learning_rate;
        o.steps = self.steps;
        o.temperature = self.temperature;
        o.n_states = self.n_states;
        o.n_actions = self.n_actions;
        o.init_mass = self.init_mass;
        o.n_groups = self.n_groups;
        o.bernoulli_p = self.bernoulli_p;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut flags = Overrides {
        seed: cli.seed,
        ..Default::default()
    };
    match &cli.command {
        Command::Score { reward, .. } => reward.apply(&mut flags),
        Command::Advantage { estimator, .. } => estimator.apply(&mut flags),
        Command::Simulate {
            estimator, train, ..
        } => {
            estimator.apply(&mut flags);
            train.apply(&mut flags);
        }
        Command::Diagnose {
            estimator,
            low_std_threshold,
            ..
        } => {
            estimator.apply(&mut flags);
            flags.low_std_threshold = *low_std_threshold;
        }
    }
    let base = match &cli.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    let settings = Settings::resolve(&base.layered(&flags))?;
    let out = cli.out.as_deref();

    match &cli.command {
        Command::Score { input, .. } => commands::score::run(input, out, &settings),
        Command::Advantage { input, .. } => commands::advantage::run(input, out, &settings),
        Command::Simulate {
            compare, schedule, ..
        } => commands::simulate::run(out, compare, schedule, &settings),
        Command::Diagnose { input, deltas, .. } => {
            commands::diagnose::run(input, out, deltas, &settings)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
