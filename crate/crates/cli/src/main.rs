use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opsym_cli::{
    cmd_balanced_demo, cmd_dims, cmd_dual_check, cmd_gamma_curve, cmd_gns, cmd_kernel_check, cmd_norms, cmd_replay,
    cmd_tro_verify, parse_tro_pair, CliResult, OutputFormat, Report, RunConfig, Tabular,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "opsym", version, about = "Experiments on symmetrised operator-space tensor products")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true, default_value_t = RunConfig::default().seed)]
    seed: u64,
    #[arg(long, global = true, default_value_t = RunConfig::default().restarts)]
    restarts: usize,
    /// Largest truncation level k for the ‖Φ‖₊ ascent.
    #[arg(long, global = true, default_value_t = RunConfig::default().truncation)]
    truncation: usize,
    #[arg(long, global = true, default_value_t = RunConfig::default().tol)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    out: OutputFormat,
    /// Wall-clock cap in milliseconds for sampling loops.
    #[arg(long, global = true)]
    budget_ms: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// ‖Φ‖₊ for (p, uₜp) across truncation levels.
    GammaCurve {
        /// Comma-separated values of t in (0, 1).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        t: Vec<f64>,
    },
    /// Decide positivity of a kernel; writes a refutation witness on failure.
    KernelCheck {
        file: PathBuf,
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Replay a witness file written by kernel-check.
    Replay { file: PathBuf },
    /// Dimension obstruction dim span(E*E) < (dim E)².
    Dims {
        /// Space JSON files.
        files: Vec<PathBuf>,
        /// Built-in spaces such as D3, M4x2, C2, M2.
        #[arg(long = "builtin")]
        builtins: Vec<String>,
        /// Samples for the TRO collapse cross-check (0 disables it).
        #[arg(long, default_value_t = 3)]
        tro_samples: usize,
    },
    /// GNS factorisation of a trilinear form.
    Gns {
        file: PathBuf,
        #[arg(long, default_value = "gns-out")]
        out_dir: PathBuf,
    },
    /// Symmetrised and Haagerup norms of a tensor element.
    Norms { file: PathBuf },
    /// Collapse of the balanced symmetrisation for TROs, as M:S pairs.
    TroVerify {
        #[arg(long = "pair", value_parser = parse_tro_pair)]
        pairs: Vec<(String, String)>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Positivity transfer and surjectivity of the dual pairing.
    DualCheck {
        #[arg(long = "space")]
        spaces: Vec<String>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Balanced versus unbalanced norm on the disjoint-corners instance.
    BalancedDemo,
}

fn emit<T: Serialize + Tabular>(name: &str, cfg: &RunConfig, output: &Option<PathBuf>, result: T) -> CliResult<()> {
    let text = Report::new(name, cfg, result).render();
    match output {
        Some(p) => std::fs::write(p, text).map_err(|source| opsym_cli::CliError::Io { path: p.clone(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    let cfg = RunConfig {
        seed: c.seed,
        restarts: c.restarts,
        truncation: c.truncation,
        tol: c.tol,
        out: c.out,
        budget_ms: c.budget_ms,
    };
    let out = &c.output;
    match cli.command {
        Command::GammaCurve { t } => emit("gamma-curve", &cfg, out, cmd_gamma_curve(&t, &cfg)?),
        Command::KernelCheck { file, witness } => {
            emit("kernel-check", &cfg, out, cmd_kernel_check(&file, witness.as_deref(), &cfg)?)
        }
        Command::Replay { file } => emit("replay", &cfg, out, cmd_replay(&file, &cfg)?),
        Command::Dims { files, builtins, tro_samples } => {
            emit("dims", &cfg, out, cmd_dims(&builtins, &files, tro_samples, &cfg)?)
        }
        Command::Gns { file, out_dir } => emit("gns", &cfg, out, cmd_gns(&file, &out_dir, &cfg)?),
        Command::Norms { file } => emit("norms", &cfg, out, cmd_norms(&file, &cfg)?),
        Command::TroVerify { pairs, samples } => emit("tro-verify", &cfg, out, cmd_tro_verify(&pairs, samples, &cfg)?),
        Command::DualCheck { spaces, samples } => {
            emit("dual-check", &cfg, out, cmd_dual_check(&spaces, samples, &cfg)?)
        }
        Command::BalancedDemo => emit("balanced-demo", &cfg, out, cmd_balanced_demo(&cfg)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
