//! Testing strategies over variant families.
//!
//! The hierarchical procedure runs in three stages:
//!
//! 0. combine each family into a global p-value for its intersection null;
//! 1. test the M global p-values at level `q1` (BH, or Bonferroni for the
//!    FWER-flavoured arm) and keep the rejected families as the selection S;
//! 2. inside each selected family only, test the members at the
//!    selection-adjusted level `q2 * |S| / M`.
//!
//! Pooled and per-family baselines are provided for comparison.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{combine_matrix, Combiner, GlobalPValues};
use crate::decision::{DecisionSet, SelectionSet};
use crate::error::{Error, Result};
use crate::mtp::{Procedure, RejectionResult};
use crate::pvalues::{Hypothesis, PValueMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    PooledBh,
    PooledBonferroni,
    PerFamilyBh,
    HierBh,
    HierBonferroni,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::PooledBh,
        Strategy::PooledBonferroni,
        Strategy::PerFamilyBh,
        Strategy::HierBh,
        Strategy::HierBonferroni,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::PooledBh => "pooled_bh",
            Strategy::PooledBonferroni => "pooled_bonferroni",
            Strategy::PerFamilyBh => "per_family_bh",
            Strategy::HierBh => "hier_bh",
            Strategy::HierBonferroni => "hier_bonferroni",
        }
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self, Strategy::HierBh | Strategy::HierBonferroni)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy '{s}'")))
    }
}

/// A strategy with its levels. One-stage strategies use `q1` as their level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub strategy: Strategy,
    pub q1: f64,
    pub q2: f64,
    pub combiner: Option<Combiner>,
    pub stage2: Procedure,
}

impl StrategySpec {
    /// Spec with the defaults used throughout: Simes at Stage 0 and BH inside
    /// selected families for the hierarchical strategies.
    pub fn new(strategy: Strategy, q1: f64, q2: f64) -> Self {
        Self {
            strategy,
            q1,
            q2,
            combiner: strategy.is_hierarchical().then_some(Combiner::Simes),
            stage2: Procedure::Bh,
        }
    }

    pub fn pooled_bh(q: f64) -> Self {
        Self::new(Strategy::PooledBh, q, q)
    }

    pub fn pooled_bonferroni(q: f64) -> Self {
        Self::new(Strategy::PooledBonferroni, q, q)
    }

    pub fn per_family_bh(q: f64) -> Self {
        Self::new(Strategy::PerFamilyBh, q, q)
    }

    pub fn hier_bh(q1: f64, q2: f64) -> Self {
        Self::new(Strategy::HierBh, q1, q2)
    }

    pub fn hier_bonferroni(q1: f64, q2: f64) -> Self {
        Self::new(Strategy::HierBonferroni, q1, q2)
    }

    pub fn with_combiner(mut self, combiner: Combiner) -> Self {
        self.combiner = Some(combiner);
        self
    }

    pub fn with_stage2(mut self, procedure: Procedure) -> Self {
        self.stage2 = procedure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("q1", self.q1), ("q2", self.q2)] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("{name} = {q} outside (0, 1)")));
            }
        }
        match (self.strategy.is_hierarchical(), self.combiner) {
            (true, None) => Err(Error::invalid(format!(
                "{} needs a Stage-0 combiner",
                self.strategy
            ))),
            (false, Some(_)) => Err(Error::invalid(format!(
                "{} does not take a combiner",
                self.strategy
            ))),
            _ => Ok(()),
        }
    }
}

/// Applies `procedure` at level `q` to every hypothesis of the matrix at once.
pub fn run_pooled(matrix: &PValueMatrix, procedure: Procedure, q: f64) -> Result<DecisionSet> {
    let (m, p) = (matrix.n_variants(), matrix.n_phenotypes());
    let rejected: Vec<Hypothesis> = match (matrix.dense_values(), matrix.save_threshold()) {
        (Some(values), _) => procedure
            .apply(values, q)?
            .rejected()
            .iter()
            .map(|&i| Hypothesis::new(i / p, i % p))
            .collect(),
        (None, Some(threshold)) => {
            let cells: Vec<(usize, usize, f64)> = matrix.observed().collect();
            let stored: Vec<f64> = cells.iter().map(|c| c.2).collect();
            procedure
                .apply_censored(&stored, m * p, q, threshold, "pooled")?
                .rejected()
                .iter()
                .map(|&i| Hypothesis::new(cells[i].0, cells[i].1))
                .collect()
        }
        (None, None) => unreachable!("matrix is either dense or censored"),
    };
    DecisionSet::from_rejections(m, p, rejected, q)
}

/// Applies `procedure` at `level` inside one family.
fn test_family(
    matrix: &PValueMatrix,
    variant: usize,
    procedure: Procedure,
    level: f64,
    stage: &'static str,
) -> Result<Vec<Hypothesis>> {
    let to_hyp = |t: usize| Hypothesis::new(variant, t);
    match (matrix.dense_family(variant), matrix.save_threshold()) {
        (Some(family), _) => Ok(procedure
            .apply(family, level)?
            .rejected()
            .iter()
            .map(|&t| to_hyp(t))
            .collect()),
        (None, Some(threshold)) => {
            let (phenos, stored): (Vec<usize>, Vec<f64>) = matrix.family_observed(variant).unzip();
            let result = procedure.apply_censored(&stored, matrix.n_phenotypes(), level, threshold, stage)?;
            Ok(result.rejected().iter().map(|&i| to_hyp(phenos[i])).collect())
        }
        (None, None) => unreachable!("matrix is either dense or censored"),
    }
}

fn test_families(
    matrix: &PValueMatrix,
    families: &[usize],
    procedure: Procedure,
    level: f64,
    stage: &'static str,
) -> Result<Vec<Hypothesis>> {
    let per_family: Vec<Vec<Hypothesis>> = families
        .par_iter()
        .map(|&v| test_family(matrix, v, procedure, level, stage))
        .collect::<Result<_>>()?;
    Ok(per_family.into_iter().flatten().collect())
}

/// BH at level `q` inside every family separately, with no adjustment for
/// the number of families.
pub fn run_per_family_bh(matrix: &PValueMatrix, q: f64) -> Result<DecisionSet> {
    let families: Vec<usize> = (0..matrix.n_variants()).collect();
    let rejected = test_families(matrix, &families, Procedure::Bh, q, "per-family")?;
    DecisionSet::from_rejections(matrix.n_variants(), matrix.n_phenotypes(), rejected, q)
}

/// Everything the hierarchical procedure computed along the way.
#[derive(Debug, Clone)]
pub struct HierarchicalOutcome {
    pub decisions: DecisionSet,
    pub selection: SelectionSet,
    pub global: GlobalPValues,
    pub stage1: RejectionResult,
}

/// Stage 1 on precomputed global p-values.
fn select_families(global: &GlobalPValues, procedure: Procedure, q1: f64) -> Result<RejectionResult> {
    match global.censor_threshold() {
        None => procedure.apply(global.values(), q1),
        // Global values above the threshold are only upper bounds; they are
        // handed over as known values and the cutoff is checked afterwards.
        Some(threshold) => {
            let result = procedure.apply(global.values(), q1)?;
            if result.cutoff() > threshold {
                return Err(Error::SparseCutoff {
                    stage: "stage 1",
                    cutoff: result.cutoff(),
                    threshold,
                });
            }
            Ok(result)
        }
    }
}

pub fn run_hierarchical_detailed(matrix: &PValueMatrix, spec: &StrategySpec) -> Result<HierarchicalOutcome> {
    spec.validate()?;
    let stage1_procedure = match spec.strategy {
        Strategy::HierBh => Procedure::Bh,
        Strategy::HierBonferroni => Procedure::Bonferroni,
        other => {
            return Err(Error::invalid(format!("{other} is not a hierarchical strategy")));
        }
    };
    let (m, p) = (matrix.n_variants(), matrix.n_phenotypes());

    let global = combine_matrix(matrix, spec.combiner.expect("validated"))?;
    let stage1 = select_families(&global, stage1_procedure, spec.q1)?;
    let selected = stage1.rejected().to_vec();
    let selection = SelectionSet::new(
        selected.clone(),
        selected.iter().map(|&v| global.values()[v]).collect(),
        m,
    )?;

    let (rejected, level) = if selected.is_empty() {
        (Vec::new(), 0.0)
    } else {
        let level = spec.q2 * selected.len() as f64 / m as f64;
        (test_families(matrix, &selected, spec.stage2, level, "stage 2")?, level)
    };
    let decisions = DecisionSet::new(m, p, rejected, selected, level)?;
    Ok(HierarchicalOutcome {
        decisions,
        selection,
        global,
        stage1,
    })
}

pub fn run_hierarchical(matrix: &PValueMatrix, spec: &StrategySpec) -> Result<DecisionSet> {
    run_hierarchical_detailed(matrix, spec).map(|o| o.decisions)
}

pub fn run_strategy(matrix: &PValueMatrix, spec: &StrategySpec) -> Result<DecisionSet> {
    spec.validate()?;
    match spec.strategy {
        Strategy::PooledBh => run_pooled(matrix, Procedure::Bh, spec.q1),
        Strategy::PooledBonferroni => run_pooled(matrix, Procedure::Bonferroni, spec.q1),
        Strategy::PerFamilyBh => run_per_family_bh(matrix, spec.q1),
        Strategy::HierBh | Strategy::HierBonferroni => run_hierarchical(matrix, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> PValueMatrix {
        PValueMatrix::from_rows(&[[0.001, 0.5], [0.6, 0.7], [0.004, 0.03]]).unwrap()
    }

    #[test]
    fn pooled_all_ones() {
        let m = PValueMatrix::from_rows(&vec![vec![1.0; 3]; 4]).unwrap();
        let d = run_pooled(&m, Procedure::Bh, 0.05).unwrap();
        assert_eq!(d.n_rejected(), 0);
        assert!(d.selected_families().is_empty());
    }

    #[test]
    fn pooled_bonferroni_hand_example() {
        let m = PValueMatrix::from_rows(&[[0.001, 0.9], [0.9, 0.9]]).unwrap();
        let d = run_pooled(&m, Procedure::Bonferroni, 0.05).unwrap();
        assert_eq!(d.rejected(), &[Hypothesis::new(0, 0)]);
        assert_eq!(d.selected_families(), &[0]);
    }

    #[test]
    fn per_family_bh_hand_example() {
        let m = PValueMatrix::from_rows(&[[0.001, 0.9], [0.9, 0.9]]).unwrap();
        let d = run_per_family_bh(&m, 0.05).unwrap();
        assert_eq!(d.rejected(), &[Hypothesis::new(0, 0)]);
    }

    #[test]
    fn per_family_single_family_is_plain_bh() {
        let row = [0.01, 0.02, 0.04, 0.8];
        let m = PValueMatrix::from_rows(&[row]).unwrap();
        let d = run_per_family_bh(&m, 0.05).unwrap();
        let plain = crate::mtp::bh(&row, 0.05).unwrap();
        let got: Vec<usize> = d.rejected().iter().map(|h| h.phenotype).collect();
        assert_eq!(got, plain.rejected());
    }

    #[test]
    fn hierarchical_worked_example() {
        let m = worked_example();
        let out = run_hierarchical_detailed(&m, &StrategySpec::hier_bh(0.05, 0.05)).unwrap();
        assert_eq!(out.global.values(), &[0.002, 0.7, 0.008]);
        assert_eq!(out.selection.families(), &[0, 2]);
        assert_eq!(out.selection.global_pvalues(), &[0.002, 0.008]);
        let d = out.decisions;
        assert!((d.stage2_level() - 0.05 * 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            d.rejected(),
            &[
                Hypothesis::new(0, 0),
                Hypothesis::new(2, 0),
                Hypothesis::new(2, 1)
            ]
        );
    }

    #[test]
    fn hierarchical_all_ones_selects_nothing() {
        let m = PValueMatrix::from_rows(&vec![vec![1.0; 3]; 4]).unwrap();
        let d = run_hierarchical(&m, &StrategySpec::hier_bh(0.05, 0.05)).unwrap();
        assert!(d.selected_families().is_empty());
        assert_eq!(d.n_rejected(), 0);
        assert_eq!(d.stage2_level(), 0.0);
    }

    #[test]
    fn full_selection_uses_unadjusted_level() {
        let m = PValueMatrix::from_rows(&[[0.001, 0.2], [0.002, 0.9]]).unwrap();
        let d = run_hierarchical(&m, &StrategySpec::hier_bh(0.05, 0.05)).unwrap();
        assert_eq!(d.selected_families(), &[0, 1]);
        assert_eq!(d.stage2_level(), 0.05);
    }

    #[test]
    fn single_selection_with_bonferroni_matches_global_bonferroni_threshold() {
        // M = 4, P = 5: one selected family, Bonferroni inside => q2 / (M P)
        let (m, p, q) = (4, 5, 0.05);
        let thr = q / (m * p) as f64;
        let mut rows = vec![vec![0.9; p]; m];
        rows[1][0] = 1e-4;
        rows[1][1] = thr * 0.999;
        rows[1][2] = thr * 1.001;
        let mat = PValueMatrix::from_rows(&rows).unwrap();
        let spec = StrategySpec::hier_bh(q, q).with_stage2(Procedure::Bonferroni);
        let d = run_hierarchical(&mat, &spec).unwrap();
        assert_eq!(d.selected_families(), &[1]);
        assert!((d.stage2_level() / p as f64 - thr).abs() < 1e-18);
        assert_eq!(d.rejected(), &[Hypothesis::new(1, 0), Hypothesis::new(1, 1)]);
    }

    #[test]
    fn hier_bonferroni_uses_bonferroni_at_stage_one() {
        let m = worked_example();
        let d = run_strategy(&m, &StrategySpec::hier_bonferroni(0.05, 0.05)).unwrap();
        // Bonferroni cutoff 0.05/3 = 0.01667 keeps 0.002 and 0.008
        assert_eq!(d.selected_families(), &[0, 2]);
        let strict = run_strategy(&m, &StrategySpec::hier_bonferroni(0.01, 0.05)).unwrap();
        assert_eq!(strict.selected_families(), &[0]);
    }

    #[test]
    fn dispatch_is_identity() {
        let m = worked_example();
        assert_eq!(
            run_strategy(&m, &StrategySpec::pooled_bh(0.05)).unwrap(),
            run_pooled(&m, Procedure::Bh, 0.05).unwrap()
        );
        assert_eq!(
            run_strategy(&m, &StrategySpec::hier_bh(0.05, 0.05)).unwrap(),
            run_hierarchical(&m, &StrategySpec::hier_bh(0.05, 0.05)).unwrap()
        );
        assert_eq!(
            run_strategy(&m, &StrategySpec::per_family_bh(0.05)).unwrap(),
            run_per_family_bh(&m, 0.05).unwrap()
        );
    }

    #[test]
    fn spec_validation() {
        assert!(StrategySpec::hier_bh(0.0, 0.05).validate().is_err());
        assert!(StrategySpec::pooled_bh(0.05).with_combiner(Combiner::Simes).validate().is_err());
        let mut s = StrategySpec::hier_bh(0.05, 0.05);
        s.combiner = None;
        assert!(s.validate().is_err());
        assert!(run_hierarchical(&worked_example(), &StrategySpec::pooled_bh(0.05)).is_err());
        assert_eq!("hier-bh".parse::<Strategy>().unwrap(), Strategy::HierBh);
        assert!("nope".parse::<Strategy>().is_err());
    }

    #[test]
    fn censored_hierarchical_reports_cutoff_violation() {
        // a single very small p-value selects its family, and BH at stage 2
        // then needs a cutoff well above the save threshold
        let m = PValueMatrix::from_sparse([(0, 0, 1e-9)], 2, 2, 1e-6).unwrap();
        let d = run_hierarchical(&m, &StrategySpec::hier_bh(0.05, 0.05));
        assert!(matches!(d, Err(Error::SparseCutoff { .. })));
    }
}
