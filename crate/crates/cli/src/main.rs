//! `vapo`: train a potential-energy model, sample by integrating its flow,
//! interpolate between latents, evaluate sample quality, and run the
//! numerical verification suites.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod data;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "vapo", version, about = "Potential-flow energy model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DataSource {
    /// Dataset file (.vapd or .csv).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Built-in toy dataset: ring8 (or ring<K>), moons, checkerboard.
    #[arg(long)]
    toy: Option<String>,
}

#[derive(Args, Debug)]
struct DataOpts {
    #[command(flatten)]
    source: DataSource,
    /// Number of points for toy datasets.
    #[arg(long, default_value_t = 20_000)]
    toy_n: usize,
    /// Seed for toy dataset generation (independent of the run seed so that
    /// train and eval see the same data by default).
    #[arg(long, default_value_t = 42)]
    data_seed: u64,
    /// Skip standardization of the dataset.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct OdeOpts {
    /// Terminal integration time.
    #[arg(long, default_value_t = 1.625)]
    t_end: f64,
    /// Integration method: rk45_adaptive, rk4_fixed, euler_fixed.
    #[arg(long, default_value = "rk45_adaptive")]
    method: String,
    #[arg(long, default_value_t = 1e-5)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-6)]
    atol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    /// Step size for the fixed-step methods.
    #[arg(long, default_value_t = 1e-2)]
    fixed_step: f64,
}

impl OdeOpts {
    fn to_config(&self) -> anyhow::Result<vapo_core::OdeConfig> {
        let cfg = vapo_core::OdeConfig {
            t_end: self.t_end,
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            method: vapo_core::ode::OdeMethod::parse(&self.method)?,
            fixed_step: self.fixed_step.min(self.t_end),
        };
        cfg.check()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a potential model on a dataset.
    Train {
        #[command(flatten)]
        data: DataOpts,
        /// Flat key = value training config file; missing keys use defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoints, log, and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Hidden layer widths, comma separated.
        #[arg(long, default_value = "64,64")]
        hidden: String,
        /// Hidden activation: gelu or tanh.
        #[arg(long, default_value = "gelu")]
        activation: String,
    },
    /// Generate samples from a trained checkpoint.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        /// Output file (.csv or .vapd).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Prior standard deviation for the initial draws.
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[command(flatten)]
        ode: OdeOpts,
    },
    /// Integrate spherical interpolations between pairs of latent seeds.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of latent pairs.
        #[arg(long)]
        pairs: usize,
        /// Points per pair (>= 2; endpoints are the plain integrations).
        #[arg(long)]
        points: usize,
        /// Output CSV with pair and step indices.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[command(flatten)]
        ode: OdeOpts,
    },
    /// Evaluate a checkpoint: metrics, energy histograms, OOD, NN audit.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataOpts,
        /// Output directory for the report and auxiliary files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4_000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Histogram bins for the grid KL divergence.
        #[arg(long, default_value_t = 32)]
        kld_bins: usize,
        /// Half-width of the square KLD histogram range.
        #[arg(long, default_value_t = 2.5)]
        kld_range: f64,
        /// Bins for energy histograms.
        #[arg(long, default_value_t = 40)]
        energy_bins: usize,
        /// Capture radius for mode coverage (toy ring data only).
        #[arg(long, default_value_t = 0.3)]
        mode_radius: f64,
        /// Homotopy hyperparameters echoed into the report.
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps_sharp: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[command(flatten)]
        ode: OdeOpts,
    },
    /// Run the numerical verification suites.
    Verify {
        /// Suite: homotopy, gradients, ode, all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("VAPO_THREADS") {
        match v.parse::<usize>() {
            Ok(0) => {} // auto
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => eprintln!("warning: ignoring non-numeric VAPO_THREADS='{v}'"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Train {
            data,
            config,
            out,
            hidden,
            activation,
        } => commands::train::run(&data, config.as_deref(), &out, &hidden, &activation),
        Command::Sample {
            ckpt,
            n,
            out,
            seed,
            omega,
            ode,
        } => commands::sample::run(&ckpt, n, &out, seed, omega, &ode),
        Command::Interpolate {
            ckpt,
            pairs,
            points,
            out,
            seed,
            omega,
            ode,
        } => commands::interpolate::run(&ckpt, pairs, points, &out, seed, omega, &ode),
        Command::Eval {
            ckpt,
            data,
            out,
            n_samples,
            seed,
            kld_bins,
            kld_range,
            energy_bins,
            mode_radius,
            lambda,
            eps_sharp,
            omega,
            sigma,
            ode,
        } => commands::eval::run(commands::eval::EvalArgs {
            ckpt: &ckpt,
            data: &data,
            out: &out,
            n_samples,
            seed,
            kld_bins,
            kld_range,
            energy_bins,
            mode_radius,
            lambda,
            eps_sharp,
            omega,
            sigma,
            ode: &ode,
        }),
        Command::Verify { suite } => commands::verify::run(&suite),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
