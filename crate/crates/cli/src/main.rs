//! `vofdm-sim`: pilot design, single-link runs and Monte Carlo sweeps.

mod link;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sparse_vofdm::decoders::{DecoderKind, RadiusPolicy};
use sparse_vofdm::modem::VofdmConfig;
use sparse_vofdm::pilot::design_pilots;
use sparse_vofdm::sim::{run_experiment, Estimator, ExperimentSpec, Mode, OneOrMany};
use sparse_vofdm::Error;

#[derive(Parser)]
#[command(name = "vofdm-sim", version, about = "Sparse-channel vector OFDM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design BPSK pilot blocks and print them with their LS estimator MSE.
    PilotDesign {
        #[command(flatten)]
        layout: Layout,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send one pilot frame through a channel and estimate its impulse response.
    Estimate(link::EstimateArgs),
    /// Decode frames over one channel and report BER.
    Decode(link::DecodeArgs),
    /// RMSE sweep (`rmse-exact` or `rmse-approx` configs).
    RmseSweep(SweepArgs),
    /// BER sweep (`ber-sweep` or `decoder-compare` configs).
    BerSweep(SweepArgs),
    /// Rank and residue-count statistics (`diversity` configs).
    Diversity(SweepArgs),
    /// Estimation feeding decoding (`joint` configs).
    Joint(SweepArgs),
}

#[derive(Args, Clone, Debug)]
pub struct Layout {
    /// Number of vector blocks L.
    #[arg(short = 'L', long)]
    pub blocks: usize,
    /// Vector block size M.
    #[arg(short = 'M', long)]
    pub block_size: usize,
    /// Number of pilot subchannels P.
    #[arg(short = 'P', long)]
    pub pilots: usize,
}

impl Layout {
    pub fn config(&self, cp: usize) -> sparse_vofdm::Result<VofdmConfig> {
        VofdmConfig::new(self.blocks, self.block_size, self.pilots, cp)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment description.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// CSV destination; overrides `output` in the config. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decoder for every grid block: zf, mmse, ml or pis.
    #[arg(long)]
    decoder: Option<String>,
    /// Radius policy for every grid block: formula, robust or fixed:<r>.
    #[arg(long)]
    radius_policy: Option<String>,
    /// Decode with the true channel instead of an estimate.
    #[arg(long)]
    genie_channel: bool,
    /// Always place one tap at delay 0.
    #[arg(long)]
    anchored: bool,
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Infeasible(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Internal(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Dimension { .. } => Self::Config(e.into()),
            Error::Infeasible(_) | Error::SpectralNull { .. } => Self::Infeasible(e.into()),
            Error::SingularChannel { .. } | Error::Budget(_) => Self::Internal(e.into()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Config)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(Failure::Internal),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_mode(cmd: &str, mode: Mode) -> Outcome<()> {
    let allowed: &[Mode] = match cmd {
        "rmse-sweep" => &[Mode::RmseExact, Mode::RmseApprox],
        "ber-sweep" => &[Mode::BerSweep, Mode::DecoderCompare],
        "diversity" => &[Mode::Diversity],
        _ => &[Mode::Joint],
    };
    if allowed.contains(&mode) {
        Ok(())
    } else {
        Err(Failure::Config(anyhow!("config mode `{}` cannot run under `{cmd}`", mode.name())))
    }
}

fn sweep(cmd: &str, args: &SweepArgs) -> Outcome<()> {
    let mut spec = ExperimentSpec::from_toml(&read_text(&args.config)?)?;
    check_mode(cmd, spec.mode)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(d) = &args.decoder {
        d.parse::<DecoderKind>()?;
    }
    if let Some(r) = &args.radius_policy {
        r.parse::<RadiusPolicy>()?;
    }
    for block in &mut spec.grid {
        if let Some(d) = &args.decoder {
            block.decoder = Some(OneOrMany::One(d.clone()));
        }
        if let Some(r) = &args.radius_policy {
            block.radius = Some(OneOrMany::One(r.clone()));
        }
        if args.genie_channel {
            block.estimator = Some(OneOrMany::One(Estimator::Genie.name().to_string()));
        }
        block.anchored |= args.anchored;
    }
    spec.validate()?;
    let report = run_experiment(&spec)?;
    for (i, why) in &report.skipped {
        warn!("skipped grid point {i}: {why}");
    }
    if report.records.is_empty() {
        return Err(Failure::Infeasible(anyhow!("every grid point was infeasible")));
    }
    info!("{} records from {} skipped points", report.records.len(), report.skipped.len());
    let out = args.out.clone().or_else(|| spec.output.clone());
    emit(out.as_deref(), &report.to_csv(&spec))
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::PilotDesign { layout, out } => {
            let plan = design_pilots(&layout.config(0)?)?;
            info!("mean pilot MSE {:.4}", plan.mean_mse());
            emit(out.as_deref(), &plan.to_text())
        }
        Command::Estimate(args) => link::estimate(&args),
        Command::Decode(args) => link::decode(&args),
        Command::RmseSweep(a) => sweep("rmse-sweep", &a),
        Command::BerSweep(a) => sweep("ber-sweep", &a),
        Command::Diversity(a) => sweep("diversity", &a),
        Command::Joint(a) => sweep("joint", &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Infeasible(e) | Failure::Internal(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
