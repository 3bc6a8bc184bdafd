use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use hierfdr::bench::{bench_table, run_bench};
use hierfdr::hier::run_hierarchical_detailed;
use hierfdr::io::{
    self, bench_csv, metrics_csv, read_decisions, read_loci, read_numeric_table, read_pvalues, read_truth,
    write_decisions, write_pvalues, write_truth, IdIndex, LabeledPValues, NumericTable, PValueReadOptions,
};
use hierfdr::scan::{scan_assoc, ScanConfig};
use hierfdr::simgen::{gen_independent, GenotypeMatrix, ScenarioSpec};
use hierfdr::{evaluate, run_strategy, Combiner, Error, Procedure, ProximityRule, Strategy, StrategySpec};
use rayon::prelude::*;

use crate::manifest::{RunManifest, RunSettings};
use crate::{BenchArgs, Preset, ReportArgs, ScanArgs, ScenarioOverrides, ScenarioSource, SimulateArgs, StrategyArgs, TestArgs};

const DEFAULT_LEVEL: f64 = 0.05;

/// A command line that parses but cannot be acted on.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::SparseCutoff { .. } => 4,
                Error::Io { .. } => 1,
                _ => 3,
            };
        }
    }
    1
}

fn load_source(source: &ScenarioSource) -> Result<RunManifest> {
    match (&source.config, source.preset) {
        (Some(path), _) => RunManifest::load(path),
        (None, Some(preset)) => Ok(RunManifest {
            scenario: match preset {
                Preset::SparsePleiotropy => ScenarioSpec::sparse_pleiotropy(),
                Preset::DensePleiotropy => ScenarioSpec::dense_weak_pleiotropy(),
                Preset::GenomeScale => ScenarioSpec::genome_scale(),
            },
            run: RunSettings::default(),
        }),
        (None, None) => Err(usage("one of --config or --preset is required")),
    }
}

fn apply_overrides(mut spec: ScenarioSpec, o: &ScenarioOverrides) -> Result<ScenarioSpec> {
    if let Some(seed) = o.seed {
        spec.seed = seed;
    }
    if let Some(r) = o.replicates {
        spec.replicates = r;
    }
    if !o.sigmas.is_empty() {
        spec.sigmas = o.sigmas.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn resolve_strategies(args: &StrategyArgs, run: &RunSettings) -> Result<Vec<StrategySpec>> {
    let strategies: Vec<Strategy> = if !args.strategies.is_empty() {
        args.strategies.clone()
    } else {
        run.strategies
            .iter()
            .map(|s| s.parse::<Strategy>())
            .collect::<Result<_, _>>()?
    };
    if strategies.is_empty() {
        return Err(usage("no strategy given; use --strategy (repeatable) or 'strategies' in the manifest"));
    }
    let q1 = args.q1.or(run.q1).unwrap_or(DEFAULT_LEVEL);
    let q2 = args.q2.or(run.q2).unwrap_or(DEFAULT_LEVEL);
    let combiner = match (args.combiner, &run.combiner) {
        (Some(c), _) => Some(Combiner::from(c)),
        (None, Some(name)) => Some(name.parse()?),
        (None, None) => None,
    };
    let stage2 = match (args.stage2, &run.stage2) {
        (Some(s), _) => Some(Procedure::from(s)),
        (None, Some(name)) => Some(name.parse()?),
        (None, None) => None,
    };
    strategies
        .into_iter()
        .map(|s| {
            let mut spec = StrategySpec::new(s, q1, q2);
            if s.is_hierarchical() {
                if let Some(c) = combiner {
                    spec = spec.with_combiner(c);
                }
                if let Some(p) = stage2 {
                    spec = spec.with_stage2(p);
                }
            }
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

fn replicate_dir(root: &Path, sigma: f64, replicate: usize) -> PathBuf {
    root.join(format!("sigma-{sigma}")).join(format!("rep-{replicate:04}"))
}

/// Writes every replicate of `spec` under `root`, plus the effective scenario.
fn write_replicates(spec: &ScenarioSpec, root: &Path, save_threshold: Option<f64>) -> Result<usize> {
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    fs::write(root.join("scenario.toml"), spec.to_toml_string())
        .with_context(|| format!("writing {}", root.join("scenario.toml").display()))?;
    let variants = IdIndex::numbered("v", spec.n_variants);
    let phenotypes = IdIndex::numbered("t", spec.n_phenotypes);
    let cells: Vec<(f64, usize)> = spec
        .sigmas
        .iter()
        .flat_map(|&s| (0..spec.replicates).map(move |r| (s, r)))
        .collect();
    cells.par_iter().try_for_each(|&(sigma, rep)| -> Result<()> {
        let (mut matrix, truth) = gen_independent(spec, sigma, rep)?;
        if let Some(thr) = save_threshold {
            matrix = matrix.censor(thr)?;
        }
        let dir = replicate_dir(root, sigma, rep);
        write_pvalues(&dir.join("pvalues.tsv"), &matrix, &variants, &phenotypes)?;
        write_truth(&dir.join("truth.tsv"), &truth, &variants, &phenotypes)?;
        Ok(())
    })?;
    Ok(cells.len())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let manifest = load_source(&args.source)?;
    let spec = apply_overrides(manifest.scenario, &args.overrides)?;
    let started = Instant::now();
    let n = write_replicates(&spec, &args.out, args.save_threshold)?;
    log::info!("wrote {n} replicate pairs to {} in {:.2?}", args.out.display(), started.elapsed());
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => io::write_csv(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let manifest = load_source(&args.source)?;
    let strategies = resolve_strategies(&args.strategy, &manifest.run)?;
    let spec = apply_overrides(manifest.scenario, &args.overrides)?;
    if let Some(dir) = &args.keep_replicates {
        write_replicates(&spec, dir, None)?;
    }
    let started = Instant::now();
    let cells = run_bench(&spec, &strategies)?;
    log::info!(
        "{} strategies x {} noise levels x {} replicates in {:.2?}",
        strategies.len(),
        spec.sigmas.len(),
        spec.replicates,
        started.elapsed()
    );
    let out = args.out.or(manifest.run.output);
    emit(out.as_deref(), &bench_csv(&bench_table(&cells)))
}

pub fn test(args: TestArgs) -> Result<()> {
    // hierarchical BH unless told otherwise
    let defaults = RunSettings {
        strategies: vec![Strategy::HierBh.name().to_owned()],
        ..RunSettings::default()
    };
    let mut strategies = resolve_strategies(&args.strategy, &defaults)?;
    if strategies.len() != 1 {
        return Err(usage("test applies exactly one strategy"));
    }
    let spec = strategies.remove(0);
    let options = PValueReadOptions {
        n_variants: args.n_variants,
        n_phenotypes: args.n_phenotypes,
        save_threshold: args.save_threshold,
    };
    let labeled = read_pvalues(&args.input, options)?;
    let (decisions, global) = if spec.strategy.is_hierarchical() {
        let outcome = run_hierarchical_detailed(&labeled.matrix, &spec)?;
        (outcome.decisions, Some(outcome.global.values().to_vec()))
    } else {
        (run_strategy(&labeled.matrix, &spec)?, None)
    };
    write_decisions(&args.out, &decisions, global.as_deref(), &labeled)?;
    println!("strategy: {}", spec.strategy);
    println!("selected families: {}", decisions.selected_families().len());
    println!("discoveries: {}", decisions.n_rejected());
    Ok(())
}

fn check_subjects(reference: &NumericTable, other: &NumericTable, what: &str) -> Result<()> {
    if reference.row_ids != other.row_ids {
        return Err(Error::Dimension(format!(
            "{what} subjects ({}) do not match genotype subjects ({}) in number or order",
            other.row_ids.len(),
            reference.row_ids.len()
        ))
        .into());
    }
    Ok(())
}

fn genotype_matrix(table: &NumericTable) -> Result<GenotypeMatrix> {
    let columns = table.values.columns().into_iter().map(|c| c.to_vec()).collect();
    Ok(GenotypeMatrix::from_columns(table.values.nrows(), columns, None)?)
}

pub fn scan(args: ScanArgs) -> Result<()> {
    let started = Instant::now();
    let g = read_numeric_table(&args.genotypes)?;
    let y = read_numeric_table(&args.phenotypes)?;
    check_subjects(&g, &y, "phenotype")?;
    let mut config = ScanConfig::default().with_threshold(args.save_threshold);
    config.block_size = args.block_size;
    if let Some(path) = &args.covariates {
        let c = read_numeric_table(path)?;
        check_subjects(&g, &c, "covariate")?;
        config = config.with_covariates(c.values);
    }
    let genotypes = genotype_matrix(&g)?;
    let out = scan_assoc(&genotypes, &y.values, &config)?;
    for &v in &out.constant_variants {
        log::warn!("variant '{}' has zero variance; p-values recorded as 1", g.columns.name(v));
    }
    for &t in &out.constant_phenotypes {
        log::warn!("phenotype '{}' has zero variance; p-values recorded as 1", y.columns.name(t));
    }
    write_pvalues(&args.out, &out.pvalues, &g.columns, &y.columns)?;
    log::info!(
        "scan of {} subjects: {} entries stored in {:.2?}",
        g.row_ids.len(),
        out.pvalues.n_stored(),
        started.elapsed()
    );
    Ok(())
}

/// Genotype correlations re-indexed to the variant order of a p-value file.
fn correlation_source(path: &Path, variants: &IdIndex) -> Result<GenotypeMatrix> {
    let table = read_numeric_table(path)?;
    let columns = variants
        .names()
        .iter()
        .map(|name| {
            table
                .columns
                .get(name)
                .map(|j| table.values.column(j).to_vec())
                .ok_or_else(|| Error::Dimension(format!("variant '{name}' missing from {}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GenotypeMatrix::from_columns(table.values.nrows(), columns, None)?)
}

pub fn report(args: ReportArgs) -> Result<()> {
    let LabeledPValues {
        variants, phenotypes, ..
    } = read_pvalues(&args.pvalues, PValueReadOptions::default())?;
    let decisions = read_decisions(&args.decisions, &variants, &phenotypes)?;
    let mut truth = read_truth(&args.truth, &variants, &phenotypes)?;
    let rule = match args.proximity_window {
        None => ProximityRule::disabled(),
        Some(window) => {
            let (Some(loci), Some(genotypes)) = (&args.loci, &args.genotypes) else {
                return Err(usage("--proximity-window needs --loci and --genotypes"));
            };
            truth = truth
                .with_loci(read_loci(loci, &variants)?)?
                .with_correlation(Arc::new(correlation_source(genotypes, &variants)?));
            ProximityRule::new(window, args.proximity_corr)?
        }
    };
    let report = evaluate(&decisions, &truth, rule)?;
    emit(args.out.as_deref(), &metrics_csv(&report))
}
