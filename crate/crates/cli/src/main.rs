//! `specflow` command-line front end.

mod cmd;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use specflow::complexity::{Accounting, ArchParams, CostModel, OutputTraffic, WordConvention};
use specflow::netmodel::{builtin, load_model, ModelConfig, Pattern, VGG16_K8};
use specflow::scheduler::SchedulerKind;
use specflow::{Error, Exec};

use crate::output::{RunManifest, Sink};

#[derive(Parser)]
#[command(
    name = "specflow",
    version,
    about = "Dataflow, scheduling and simulation toolkit for sparse spectral CNN accelerators"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model description file (TOML).
    #[arg(long, global = true, conflicts_with = "builtin")]
    config: Option<PathBuf>,
    /// Built-in model name.
    #[arg(long, global = true, default_value = VGG16_K8)]
    builtin: String,
    /// Output directory; CSV goes to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Total latency budget in milliseconds.
    #[arg(long, global = true, default_value_t = 20.0)]
    tau_ms: f64,
    #[arg(long, global = true, default_value_t = 2160)]
    bram_budget: u64,
    /// Overrides the model's word width.
    #[arg(long, global = true)]
    word_bits: Option<u32>,
    /// Count complex kernel values as two words.
    #[arg(long, global = true, value_enum, default_value_t = Words::Elements)]
    words: Words,
    /// Count output traffic as spectral tiles or as the spatial feature map.
    #[arg(long, global = true, value_enum, default_value_t = Outputs::Tiles)]
    outputs: Outputs,
    /// Disable the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Words {
    Elements,
    Complex,
}

#[derive(Clone, Copy, ValueEnum)]
enum Outputs {
    Tiles,
    Spatial,
}

#[derive(Args, Clone, Copy)]
pub struct ArchArgs {
    /// Tiles processed in parallel (P').
    #[arg(long, default_value_t = 16)]
    p_par: usize,
    /// Kernels processed in parallel (N').
    #[arg(long, default_value_t = 64)]
    n_par: usize,
    /// Input replicas (r).
    #[arg(long, default_value_t = 10)]
    replicas: usize,
}

impl ArchArgs {
    pub fn arch(&self) -> ArchParams {
        ArchParams::new(self.p_par, self.n_par, self.replicas)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer BRAM and bandwidth of every flow at one architecture.
    Analyze(#[command(flatten)] ArchArgs),
    /// Search architecture and streaming parameters.
    Optimize {
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 9, 16])]
        p_par: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64, 128])]
        n_par: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        replicas: usize,
    },
    /// PE utilization sweep over replicas and schedulers.
    Schedule(cmd::schedule::ScheduleArgs),
    /// Cycle-level controller simulation.
    Simulate(cmd::simulate::SimulateArgs),
    /// Run the oracle suites.
    Verify(cmd::verify::VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Optimize { .. } => "optimize",
            Command::Schedule(_) => "schedule",
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
        }
    }
}

/// Shared state handed to every subcommand.
pub struct Ctx {
    pub model: ModelConfig,
    pub cost: CostModel,
    pub exec: Exec,
    pub sink: Sink,
    pub manifest: RunManifest,
    pub seed: u64,
    pub tau_total: f64,
    pub bram_budget: u64,
}

pub fn parse_pattern(s: &str) -> std::result::Result<Pattern, String> {
    s.parse()
}

pub fn parse_scheduler(s: &str) -> std::result::Result<SchedulerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(g: &Global) -> Result<(ModelConfig, String)> {
    let (mut model, label) = match &g.config {
        Some(p) => {
            let m = load_model(p).map_err(|e| match e {
                Error::Io(io) => Error::Parse { path: p.clone(), message: io.to_string() },
                e => e,
            })?;
            (m, p.display().to_string())
        }
        None => {
            let m = builtin(&g.builtin).ok_or_else(|| Error::Validation {
                layer: g.builtin.clone(),
                field: "builtin",
                message: format!("unknown model (available: {VGG16_K8})"),
            })?;
            (m, g.builtin.clone())
        }
    };
    if let Some(bits) = g.word_bits {
        model.spectral.word_bits = bits;
        model.validate()?;
    }
    Ok((model, label))
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    if !(g.tau_ms > 0.0 && g.tau_ms.is_finite()) {
        return Err(
            Error::Validation { layer: "global".into(), field: "tau_ms", message: "must be positive".into() }.into()
        );
    }
    let (model, label) = load(g)?;
    let seeds = match &cli.command {
        Command::Schedule(a) => (0..a.seeds as u64).map(|i| g.seed + i).collect(),
        _ => vec![g.seed],
    };
    let cost = CostModel::new(Accounting {
        words: match g.words {
            Words::Elements => WordConvention::Elements,
            Words::Complex => WordConvention::ComplexWords,
        },
        outputs: match g.outputs {
            Outputs::Tiles => OutputTraffic::Tiles,
            Outputs::Spatial => OutputTraffic::Spatial,
        },
    });
    let ctx = Ctx {
        model,
        cost,
        exec: if g.sequential { Exec::Sequential } else { Exec::Parallel },
        sink: Sink::new(g.out.clone())?,
        manifest: RunManifest::new(cli.command.name(), &label, seeds, g.out.as_deref()),
        seed: g.seed,
        tau_total: g.tau_ms / 1e3,
        bram_budget: g.bram_budget,
    };
    match &cli.command {
        Command::Analyze(a) => cmd::analyze::run(&ctx, a.arch()).map(|()| true),
        Command::Optimize { p_par, n_par, replicas } => {
            cmd::optimize::run(&ctx, p_par.clone(), n_par.clone(), *replicas).map(|()| true)
        }
        Command::Schedule(a) => cmd::schedule::run(&ctx, a).map(|()| true),
        Command::Simulate(a) => cmd::simulate::run(&ctx, a).map(|()| true),
        Command::Verify(a) => cmd::verify::run(&ctx, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. }) => 3,
        Some(Error::Io(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
