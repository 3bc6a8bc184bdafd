//! `hierfdr`: simulate scenarios, benchmark strategies, apply a strategy to a
//! p-value file, run association scans and evaluate decisions.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 usage, 3 data
//! validation, 4 sparse-cutoff violation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hierfdr::{Combiner, Procedure, Strategy};

#[derive(Parser, Debug)]
#[command(name = "hierfdr", version, about = "Hierarchical FDR control for variant-by-phenotype hypotheses")]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write replicate p-value matrices and truth masks for a scenario.
    Simulate(SimulateArgs),
    /// Run strategies over all replicates and noise levels; write a summary CSV.
    Bench(BenchArgs),
    /// Apply one strategy to a p-value file and write the decisions.
    Test(TestArgs),
    /// Association scan of genotype and phenotype tables.
    Scan(ScanArgs),
    /// Evaluate written decisions against a truth file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// 3000 variants, 100 traits, 60 variants x 25 traits.
    SparsePleiotropy,
    /// 3000 variants, 100 traits, 1500 variants x 5 traits.
    DensePleiotropy,
    /// 100,000 variants, 100 traits, 1000 x 25 plus 500 x 1.
    GenomeScale,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ScenarioSource {
    /// Flat TOML manifest with the scenario and optional run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args, Debug)]
struct ScenarioOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Noise level; repeat to give a grid.
    #[arg(long = "sigma")]
    sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CombinerArg {
    Simes,
    Fisher,
    Bonf,
}

impl From<CombinerArg> for Combiner {
    fn from(c: CombinerArg) -> Self {
        match c {
            CombinerArg::Simes => Combiner::Simes,
            CombinerArg::Fisher => Combiner::Fisher,
            CombinerArg::Bonf => Combiner::BonferroniMin,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Stage2Arg {
    Bh,
    Bonf,
}

impl From<Stage2Arg> for Procedure {
    fn from(s: Stage2Arg) -> Self {
        match s {
            Stage2Arg::Bh => Procedure::Bh,
            Stage2Arg::Bonf => Procedure::Bonferroni,
        }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: hierfdr::Error| e.to_string())
}

#[derive(Args, Debug)]
struct StrategyArgs {
    /// pooled_bh, pooled_bonferroni, per_family_bh, hier_bh or
    /// hier_bonferroni; repeatable.
    #[arg(long = "strategy", value_parser = parse_strategy)]
    strategies: Vec<Strategy>,
    /// Level of the single-stage strategies and of hierarchical stage 1.
    #[arg(long)]
    q1: Option<f64>,
    /// Hierarchical stage-2 level.
    #[arg(long)]
    q2: Option<f64>,
    /// Global p-value for hierarchical stage 0.
    #[arg(long, value_enum)]
    combiner: Option<CombinerArg>,
    /// Within-family procedure for hierarchical stage 2.
    #[arg(long, value_enum)]
    stage2: Option<Stage2Arg>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    overrides: ScenarioOverrides,
    /// Store only p-values at or below this threshold.
    #[arg(long)]
    save_threshold: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    overrides: ScenarioOverrides,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Also write every replicate matrix and truth mask under this directory.
    #[arg(long)]
    keep_replicates: Option<PathBuf>,
    /// Summary CSV (default: the manifest's output, else stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// P-value TSV.
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Declare the input censored at this threshold (overrides file metadata).
    #[arg(long)]
    save_threshold: Option<f64>,
    #[arg(long)]
    n_variants: Option<usize>,
    #[arg(long)]
    n_phenotypes: Option<usize>,
    /// Directory for selected.tsv and rejections.tsv.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Subjects x variants dosage TSV; NA marks a missing call.
    #[arg(long)]
    genotypes: PathBuf,
    /// Subjects x phenotypes TSV.
    #[arg(long)]
    phenotypes: PathBuf,
    /// Subjects x covariates TSV.
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 5e-4)]
    save_threshold: f64,
    /// Variants per matrix-product block.
    #[arg(long, default_value_t = 512)]
    block_size: usize,
    /// Output p-value TSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// P-value TSV the decisions were made on (defines the identifiers).
    #[arg(long)]
    pvalues: PathBuf,
    /// Directory holding selected.tsv and rejections.tsv.
    #[arg(long)]
    decisions: PathBuf,
    /// Truth TSV listing the non-null pairs.
    #[arg(long)]
    truth: PathBuf,
    /// Locus TSV; needed by the proximity rule.
    #[arg(long)]
    loci: Option<PathBuf>,
    /// Genotype TSV used for correlations in the proximity rule.
    #[arg(long)]
    genotypes: Option<PathBuf>,
    /// Proximity window in base pairs; enables the proximity rule.
    #[arg(long)]
    proximity_window: Option<u64>,
    #[arg(long, default_value_t = 0.2)]
    proximity_corr: f64,
    /// Metrics CSV (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Test(a) => commands::test(a),
        Command::Scan(a) => commands::scan(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
