use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wrc_core::weights::WeightMode;
use wrc_core::WrcError;

mod commands;

/// Weighted reverse convolution: forward simulation, closed-form solves,
/// dense verification, BCCB analysis and timing.
#[derive(Debug, Parser)]
#[command(name = "wrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply the strided circular convolution to a tensor.
    Forward {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        scale: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form weighted inversion.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: PathBuf,
        /// Print the objective's gradient max-norm at the solution.
        #[arg(long)]
        check_stationarity: bool,
        /// Keep the real part when the inverse FFT comes back complex
        /// (spatially varying weights) instead of failing.
        #[arg(long)]
        allow_complex: bool,
        /// Channels solved concurrently.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        threads: u32,
    },
    /// Compare the closed form against the dense normal-equation solve.
    OracleCheck {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Write the dense solution here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Negative control: perturb the closed-form output before comparing.
        #[arg(long, hide = true)]
        corrupt_solver: bool,
    },
    /// Nearest-BCCB projection of attention matrices.
    Bccb {
        /// L×N×N tensor, one attention matrix per channel.
        #[arg(long)]
        attn: PathBuf,
        /// Token grid as `h,w`; defaults to a square grid.
        #[arg(long, value_parser = parse_pair)]
        grid: Option<(usize, usize)>,
        /// Project each slice separately instead of the slice average.
        #[arg(long)]
        per_slice: bool,
        /// Generator tensor output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the closed form against the dense solve.
    Bench {
        /// High-resolution square sides; more than one prints a slope fit.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        scale: u32,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
        kernel: u32,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        channels: u32,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(3..))]
        repeats: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_dense: bool,
        /// Channel-parallel workers for the FFT path.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        threads: u32,
    },
    /// Write a seeded random fixture.
    Generate {
        #[arg(value_enum)]
        kind: FixtureKind,
        /// `C,H,W` for tensors and weights, `C,KH,KW` for kernels.
        #[arg(long, value_parser = parse_triple)]
        shape: (usize, usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true, value_parser = finite)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true, value_parser = finite)]
        hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FixtureKind {
    Tensor,
    Kernel,
    DataWeight,
    RegWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    None,
    Softplus,
    Log1p,
}

impl From<ModeArg> for WeightMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => WeightMode::None,
            ModeArg::Softplus => WeightMode::Softplus,
            ModeArg::Log1p => WeightMode::Log1p,
        }
    }
}

/// Inputs shared by `solve` and `oracle-check`.
#[derive(Debug, Args)]
struct ProblemArgs {
    /// Low-resolution observation.
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    scale: u32,

    /// Constant data-fidelity weight.
    #[arg(long, value_parser = nonneg, conflicts_with_all = ["w", "data_conv"])]
    w_const: Option<f64>,
    /// Data-fidelity weight field (shape of y).
    #[arg(long, conflicts_with = "data_conv")]
    w: Option<PathBuf>,
    /// Constant regularizer weight.
    #[arg(long, value_parser = nonneg, conflicts_with_all = ["wlam", "reg_conv"])]
    wlam_const: Option<f64>,
    /// Regularizer weight field (shape of x).
    #[arg(long, conflicts_with = "reg_conv")]
    wlam: Option<PathBuf>,

    /// Kernel predicting data weights from y.
    #[arg(long, requires = "reg_conv")]
    data_conv: Option<PathBuf>,
    /// Kernel predicting regularizer weights from x0.
    #[arg(long, requires = "data_conv")]
    reg_conv: Option<PathBuf>,
    /// Parameterization applied to predicted weights.
    #[arg(long, value_enum, default_value_t = ModeArg::Log1p)]
    weight_mode: ModeArg,
    /// Bias feeding the predicted-weight guard `softplus(bias) + 1e-5`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true, value_parser = finite)]
    bias: f64,

    /// Prior: `zero`, `bilinear`, or a tensor file.
    #[arg(long, default_value = "bilinear")]
    x0: String,
    /// Denominator guard. Defaults to 0 for given weights and to the bias-derived
    /// guard for predicted ones.
    #[arg(long, value_parser = nonneg)]
    eps: Option<f64>,
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn nonneg(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} is negative"))
    }
}

fn parse_list(s: &str, n: usize) -> Result<Vec<usize>, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if parts.len() != n || parts.contains(&0) {
        return Err(format!(
            "expected {n} positive comma-separated integers, got {s:?}"
        ));
    }
    Ok(parts)
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let v = parse_list(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let v = parse_list(s, 3)?;
    Ok((v[0], v[1], v[2]))
}

/// Process exit codes.
mod exit {
    pub const ORACLE_FAIL: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const NUMERICAL: u8 = 3;
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() {
                exit::NUMERICAL
            } else {
                exit::VALIDATION
            })
        }
    }
}

type CmdResult = Result<u8, WrcError>;
