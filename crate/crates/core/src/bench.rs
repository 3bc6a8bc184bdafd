//! Replicated simulation experiments: every strategy on every replicate of
//! every noise level, evaluated against the known truth and aggregated.
//!
//! All strategies see the same replicate matrices. Replicates run in
//! parallel and are merged in replicate order, so results do not depend on
//! the thread count.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hier::{run_strategy, StrategySpec};
use crate::io::{bench_rows, BenchRow};
use crate::metrics::{aggregate, evaluate, MetricsReport, ProximityRule, ReplicateAggregate};
use crate::pvalues::PValueMatrix;
use crate::scan::{scan_assoc, ScanConfig};
use crate::simgen::{
    cell_seed, gen_genotypes_ld, gen_independent, gen_phenotypes, AssociationBlock, EffectMap, GenotypeMatrix,
    LdParams, ScenarioSpec,
};
use crate::truth::TruthMask;

/// Results of one strategy at one noise level.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub sigma: f64,
    pub strategy: StrategySpec,
    /// Replicate reports, in replicate order.
    pub reports: Vec<MetricsReport>,
    pub aggregate: ReplicateAggregate,
}

impl BenchCell {
    pub fn rows(&self) -> Vec<BenchRow> {
        bench_rows(self.sigma, self.strategy.strategy.name(), &self.aggregate)
    }
}

fn check_strategies(strategies: &[StrategySpec]) -> Result<()> {
    if strategies.is_empty() {
        return Err(Error::invalid("no strategies to run"));
    }
    strategies.iter().try_for_each(StrategySpec::validate)
}

/// Evaluates every strategy on one replicate.
pub fn evaluate_replicate(
    matrix: &PValueMatrix,
    truth: &TruthMask,
    strategies: &[StrategySpec],
    rule: ProximityRule,
) -> Result<Vec<MetricsReport>> {
    strategies
        .iter()
        .map(|spec| evaluate(&run_strategy(matrix, spec)?, truth, rule))
        .collect()
}

/// Groups per-replicate results (replicate x strategy) into cells.
fn collect_cells(sigma: f64, strategies: &[StrategySpec], per_replicate: Vec<Vec<MetricsReport>>) -> Result<Vec<BenchCell>> {
    let mut by_strategy: Vec<Vec<MetricsReport>> = vec![Vec::with_capacity(per_replicate.len()); strategies.len()];
    for reports in per_replicate {
        for (s, r) in reports.into_iter().enumerate() {
            by_strategy[s].push(r);
        }
    }
    strategies
        .iter()
        .zip(by_strategy)
        .map(|(spec, reports)| {
            Ok(BenchCell {
                sigma,
                strategy: *spec,
                aggregate: aggregate(&reports)?,
                reports,
            })
        })
        .collect()
}

/// Runs the independent-test design over its whole noise grid.
pub fn run_bench(scenario: &ScenarioSpec, strategies: &[StrategySpec]) -> Result<Vec<BenchCell>> {
    scenario.validate()?;
    check_strategies(strategies)?;
    let mut cells = Vec::new();
    for &sigma in &scenario.sigmas {
        let per_replicate = (0..scenario.replicates)
            .into_par_iter()
            .map(|rep| {
                let (matrix, truth) = gen_independent(scenario, sigma, rep)?;
                evaluate_replicate(&matrix, &truth, strategies, ProximityRule::disabled())
            })
            .collect::<Result<Vec<_>>>()?;
        cells.extend(collect_cells(sigma, strategies, per_replicate)?);
        log::info!("sigma {sigma}: {} replicates done", scenario.replicates);
    }
    Ok(cells)
}

pub fn bench_table(cells: &[BenchCell]) -> Vec<BenchRow> {
    cells.iter().flat_map(BenchCell::rows).collect()
}

/// Phenotypes simulated on synthetic LD genotypes and tested with the
/// association scan.
#[derive(Debug, Clone)]
pub struct LdScenario {
    pub genotypes: LdParams,
    pub n_phenotypes: usize,
    /// Pleiotropic composition of the causal variants.
    pub blocks: Vec<AssociationBlock>,
    pub effect: f64,
    pub sigmas: Vec<f64>,
    pub replicates: usize,
    pub save_threshold: f64,
    pub seed: u64,
}

impl LdScenario {
    /// A laptop-sized version of the real-genotype design: 1200 subjects,
    /// 3000 variants in 50-variant AR(1) blocks with rho = 0.9 spaced 10 kb
    /// apart, 20 traits, and 26 causal variants of which 2 affect 10 traits,
    /// 2 affect 5, 2 affect 2 and 20 affect one.
    pub fn desk() -> Self {
        Self {
            genotypes: LdParams::new(1200, 3000, 50, 0.9, 17),
            n_phenotypes: 20,
            blocks: [(2, 10), (2, 5), (2, 2), (20, 1)].map(AssociationBlock::from).to_vec(),
            effect: 1.0,
            sigmas: vec![4.0],
            replicates: 25,
            save_threshold: 1.0,
            seed: 23,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.sigmas.is_empty() {
            return Err(Error::invalid("LD scenario needs replicates and noise levels"));
        }
        Ok(())
    }
}

/// One replicate of an LD scenario on fixed genotypes. The truth mask holds
/// the causal pairs together with the loci and genotype correlations that
/// the proximity rule needs.
pub fn gen_ld_replicate(
    scenario: &LdScenario,
    genotypes: &Arc<GenotypeMatrix>,
    sigma: f64,
    replicate: usize,
) -> Result<(PValueMatrix, TruthMask)> {
    let seed = cell_seed(scenario.seed, sigma, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effects = EffectMap::random(
        &mut rng,
        genotypes.n_variants(),
        scenario.n_phenotypes,
        &scenario.blocks,
        scenario.effect,
    )?;
    let y = gen_phenotypes(genotypes, &effects, sigma, seed ^ 0x5eed)?;
    let config = ScanConfig::default().with_threshold(scenario.save_threshold);
    let scan = scan_assoc(genotypes, y.values(), &config)?;
    let truth = effects
        .truth()?
        .with_loci(genotypes.loci().to_vec())?
        .with_correlation(genotypes.clone());
    Ok((scan.pvalues, truth))
}

/// Runs an LD scenario, evaluating each replicate's decisions under every
/// proximity rule in `rules`. Cells come back grouped by rule, then noise
/// level, then strategy.
pub fn run_ld_bench(
    scenario: &LdScenario,
    strategies: &[StrategySpec],
    rules: &[ProximityRule],
) -> Result<Vec<(ProximityRule, Vec<BenchCell>)>> {
    scenario.validate()?;
    check_strategies(strategies)?;
    let genotypes = Arc::new(gen_genotypes_ld(&scenario.genotypes)?);
    let mut out: Vec<(ProximityRule, Vec<BenchCell>)> = rules.iter().map(|&r| (r, Vec::new())).collect();
    for &sigma in &scenario.sigmas {
        // replicate -> rule -> strategy
        let per_replicate = (0..scenario.replicates)
            .into_par_iter()
            .map(|rep| {
                let (matrix, truth) = gen_ld_replicate(scenario, &genotypes, sigma, rep)?;
                let decisions = strategies
                    .iter()
                    .map(|spec| run_strategy(&matrix, spec))
                    .collect::<Result<Vec<_>>>()?;
                rules
                    .iter()
                    .map(|&rule| decisions.iter().map(|d| evaluate(d, &truth, rule)).collect())
                    .collect::<Result<Vec<Vec<_>>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, (_, cells)) in out.iter_mut().enumerate() {
            let reports = per_replicate.iter().map(|by_rule| by_rule[r].clone()).collect();
            cells.extend(collect_cells(sigma, strategies, reports)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hier::Strategy;
    use crate::metrics::Metric;

    fn all_strategies() -> Vec<StrategySpec> {
        Strategy::ALL.iter().map(|&s| StrategySpec::new(s, 0.05, 0.05)).collect()
    }

    #[test]
    fn bench_shapes_and_determinism() {
        let scenario = ScenarioSpec::new(200, 10, vec![AssociationBlock::new(10, 5)])
            .with_replicates(3)
            .with_sigmas(vec![0.5, 2.0])
            .with_seed(4);
        let a = run_bench(&scenario, &all_strategies()).unwrap();
        assert_eq!(a.len(), 2 * Strategy::ALL.len());
        assert!(a.iter().all(|c| c.reports.len() == 3 && c.aggregate.n() == 3));
        let b = run_bench(&scenario, &all_strategies()).unwrap();
        assert_eq!(bench_table(&a), bench_table(&b));
        assert_eq!(bench_table(&a).len(), 2 * Strategy::ALL.len() * Metric::ALL.len());
        assert!(run_bench(&scenario, &[]).is_err());
    }

    #[test]
    fn ld_replicate_carries_proximity_information() {
        let mut scenario = LdScenario::desk();
        scenario.genotypes = LdParams::new(200, 100, 20, 0.9, 1);
        scenario.n_phenotypes = 4;
        scenario.blocks = vec![AssociationBlock::new(3, 2)];
        let g = Arc::new(gen_genotypes_ld(&scenario.genotypes).unwrap());
        let (m, truth) = gen_ld_replicate(&scenario, &g, 1.0, 0).unwrap();
        assert!(m.is_dense());
        assert_eq!(truth.n_false_nulls(), 6);
        assert!(truth.loci().is_some() && truth.correlation().is_some());
    }
}
