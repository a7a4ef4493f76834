//! `koopman-ib` command-line driver.
//!
//! Settings layer as defaults, then `--config` JSON, then flags. Each run
//! writes its resolved config next to its outputs. Exit codes: 0 success,
//! 2 input error, 3 numeric failure.

mod commands;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use koopman_ib::koopman_ae::Mode;
use resolve::Flags;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
}

impl From<koopman_ib::Error> for CliError {
    fn from(e: koopman_ib::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

/// A command can finish its outputs and still report a numeric failure.
pub enum Outcome {
    Done,
    Numeric(String),
}

#[derive(Parser)]
#[command(name = "koopman-ib", version, about = "Information-theoretic Koopman representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate lorenz63, vanderpol or linear_gaussian trajectories to CSV.
    Simulate(SimulateArgs),
    /// Train a Koopman autoencoder.
    Train(TrainArgs),
    /// Forecast metrics of a checkpoint on test trajectories.
    Eval(EvalArgs),
    /// Closed-form information report of a linear-Gaussian model.
    Info(InfoArgs),
    /// Solve a spectral allocation.
    Allocate(AllocateArgs),
    /// Eigenvalues of a checkpoint's Koopman matrix as CSV.
    Spectrum(SpectrumArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    system: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    window_k: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Ae,
    Vae,
}

impl TrainFlags {
    fn apply(&self, flags: &mut Flags, prefix: &str) {
        let k = |name: &'static str| [prefix, name];
        let mode = self.mode.map(|m| match m {
            ModeArg::Ae => Mode::Ae,
            ModeArg::Vae => Mode::Vae,
        });
        flags
            .set(&k("mode"), mode)
            .set(&k("alpha"), self.alpha)
            .set(&k("beta"), self.beta)
            .set(&k("gamma"), self.gamma)
            .set(&k("lr"), self.lr)
            .set(&k("epochs"), self.epochs)
            .set(&k("batch"), self.batch)
            .set(&k("stride"), self.stride)
            .set(&k("window_k"), self.window_k)
            .set(&k("temperature_tau"), self.tau)
            .set(&k("seed"), self.train_seed)
            .set(&k("latent_dim"), self.latent_dim)
            .set(&k("hidden"), self.hidden.clone());
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `physical` or `default`.
    #[arg(long)]
    preset: Option<String>,
    /// Trajectory CSV files.
    #[arg(long, num_args = 1..)]
    data: Option<Vec<PathBuf>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    normalize: Option<bool>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    data: Option<Vec<PathBuf>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    #[arg(long)]
    ic_stride: Option<usize>,
    #[arg(long)]
    kld_bins: Option<usize>,
    #[arg(long)]
    long_steps: Option<usize>,
    #[arg(long)]
    record_runtime: Option<bool>,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated gains.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gains: Option<Vec<f64>>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Seed of the VAE sampling noise and the simulated batch.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut f = Flags::default();
    match cli.command {
        Command::Simulate(a) => {
            f.set(&["system"], a.system)
                .set(&["steps"], a.steps)
                .set(&["dt"], a.dt)
                .set(&["seed"], a.seed)
                .set(&["mu"], a.mu)
                .set(&["noise"], a.noise)
                .set(&["model"], a.model)
                .set(&["out"], a.out);
            commands::simulate(a.config, f)
        }
        Command::Train(a) => {
            f.set(&["data"], a.data).set(&["out_dir"], a.out_dir).set(&["normalize"], a.normalize);
            a.train.apply(&mut f, "train");
            f.set(&["train", "seed"], a.seed);
            commands::train_cmd(a.config, a.preset, f)
        }
        Command::Eval(a) => {
            f.set(&["checkpoint"], a.checkpoint)
                .set(&["data"], a.data)
                .set(&["out_dir"], a.out_dir)
                .set(&["record_runtime"], a.record_runtime)
                .set(&["eval", "horizons"], a.horizons)
                .set(&["eval", "ic_stride"], a.ic_stride)
                .set(&["eval", "kld_bins"], a.kld_bins)
                .set(&["eval", "long_steps"], a.long_steps);
            commands::eval_cmd(a.config, f)
        }
        Command::Info(a) => {
            f.set(&["model"], a.model).set(&["n"], a.n).set(&["out"], a.out);
            commands::info(a.config, f)
        }
        Command::Allocate(a) => {
            f.set(&["gains"], a.gains)
                .set(&["model"], a.model)
                .set(&["n"], a.n)
                .set(&["budget"], a.budget)
                .set(&["gamma"], a.gamma)
                .set(&["out"], a.out);
            commands::allocate(a.config, f)
        }
        Command::Spectrum(a) => {
            f.set(&["checkpoint"], a.checkpoint).set(&["out"], a.out);
            commands::spectrum(a.config, f)
        }
        Command::Gradcheck(a) => {
            f.set(&["checkpoint"], a.checkpoint).set(&["data"], a.data).set(&["seed"], a.seed).set(&["out"], a.out);
            a.train.apply(&mut f, "train");
            commands::gradcheck(a.config, f)
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("KOOPMAN_IB_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| CliError::Input(format!("KOOPMAN_IB_THREADS: `{raw}` is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Numeric(msg)) | Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
