//! `attrition-ri`: worst-case randomization inference for the
//! always-reporter average treatment effect under attrition.

use anyhow::{Context, Result};
use attrition_ri::io::{load_csv, write_report};
use attrition_ri::sim::{run_study, run_test, OutcomeModel, SimulationConfig};
use attrition_ri_core::asymptotic::AsymptoticVariant;
use attrition_ri_core::{Mode, PretestSide, StatKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "attrition-ri", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test the sharp null of no always-reporter effect on a dataset.
    Test(TestArgs),
    /// Run a simulation study and report rejection rates.
    Simulate(SimArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Continuous,
    Asymptotic,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    T0,
    T1,
    T2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    /// Two-sided membership pretest.
    Two,
    /// One-sided (lower) membership pretest.
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Min,
    Max,
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV with header `y,d,r`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "continuous")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "t2")]
    stat: StatArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Pretest level charged against alpha.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Monte Carlo draws per table cardinality (continuous mode).
    #[arg(long, default_value_t = 300)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "two")]
    pretest_side: SideArg,
    /// Summary driving the asymptotic decision.
    #[arg(long, value_enum, default_value = "min")]
    asy_variant: VariantArg,
    /// Wall-clock limit in seconds; work past it is uncertified.
    #[arg(long)]
    time_limit_s: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    /// JSON study configuration; overrides all other flags when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    n1: usize,
    /// Shares of always / if-treated / never reporters.
    #[arg(long, num_args = 3, value_delimiter = ',', default_values_t = [0.9, 0.05, 0.05])]
    shares: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Outcome family: normal or binary.
    #[arg(long, default_value = "normal")]
    outcome: String,
    /// Success probability for the binary outcome family.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, value_enum, default_value = "continuous")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "t2")]
    stat: StatArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.005)]
    beta: f64,
    #[arg(long, default_value_t = 300)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "two")]
    pretest_side: SideArg,
    /// Per-replication wall-clock budget in seconds.
    #[arg(long)]
    rep_time_limit_s: Option<f64>,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Continuous => Mode::Continuous,
            ModeArg::Asymptotic => Mode::Asymptotic,
        }
    }
}

impl From<StatArg> for StatKind {
    fn from(s: StatArg) -> StatKind {
        match s {
            StatArg::T0 => StatKind::T0,
            StatArg::T1 => StatKind::T1,
            StatArg::T2 => StatKind::T2,
        }
    }
}

impl From<SideArg> for PretestSide {
    fn from(s: SideArg) -> PretestSide {
        match s {
            SideArg::Two => PretestSide::TwoSided,
            SideArg::Paper => PretestSide::PaperLower,
        }
    }
}

impl From<VariantArg> for AsymptoticVariant {
    fn from(v: VariantArg) -> AsymptoticVariant {
        match v {
            VariantArg::Min => AsymptoticVariant::Min,
            VariantArg::Max => AsymptoticVariant::Max,
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ATTRITION_RI_THREADS") {
        let threads: usize = v.parse().context("ATTRITION_RI_THREADS must be an integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .context("initializing thread pool")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    init_threads()?;
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Test(args) => {
            let data = load_csv(&args.input)?;
            let decision = run_test(
                &data,
                args.mode.into(),
                args.stat.into(),
                args.alpha,
                args.beta,
                args.n_mc,
                args.seed,
                args.pretest_side.into(),
                args.asy_variant.into(),
                args.time_limit_s.map(Duration::from_secs_f64),
            )?;
            write_report(&decision, &mut out)?;
        }
        Command::Simulate(args) => {
            let cfg = match &args.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<SimulationConfig>(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => {
                    let outcome = match args.outcome.as_str() {
                        "normal" => OutcomeModel::Normal,
                        "binary" => OutcomeModel::Binary { p: args.p },
                        other => anyhow::bail!("unknown outcome family '{other}'"),
                    };
                    anyhow::ensure!(args.shares.len() == 3, "--shares takes three values");
                    SimulationConfig {
                        n: args.n,
                        n1: args.n1,
                        shares: [args.shares[0], args.shares[1], args.shares[2]],
                        tau: args.tau,
                        outcome,
                        reps: args.reps,
                        mode: args.mode.into(),
                        kind: args.stat.into(),
                        alpha: args.alpha,
                        beta: args.beta,
                        n_mc: args.n_mc,
                        seed: args.seed,
                        side: Some(args.pretest_side.into()),
                        rep_time_limit_s: args.rep_time_limit_s,
                    }
                }
            };
            let report = run_study(&cfg)?;
            write_report(&report, &mut out)?;
        }
    }
    Ok(())
}
