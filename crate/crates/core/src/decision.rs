use crate::error::{Error, Result};
use crate::pvalues::Hypothesis;

/// Outcome of a testing strategy on an M x P matrix.
///
/// `rejected` is kept sorted variant-major, so the rejections of one family
/// form a contiguous run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSet {
    n_variants: usize,
    n_phenotypes: usize,
    rejected: Vec<Hypothesis>,
    selected_families: Vec<usize>,
    stage2_level: f64,
}

impl DecisionSet {
    pub fn new(
        n_variants: usize,
        n_phenotypes: usize,
        mut rejected: Vec<Hypothesis>,
        mut selected_families: Vec<usize>,
        stage2_level: f64,
    ) -> Result<Self> {
        rejected.sort_unstable();
        rejected.dedup();
        if let Some(h) = rejected
            .iter()
            .find(|h| h.variant >= n_variants || h.phenotype >= n_phenotypes)
        {
            return Err(Error::IndexOutOfBounds {
                variant: h.variant,
                phenotype: h.phenotype,
                n_variants,
                n_phenotypes,
            });
        }
        selected_families.sort_unstable();
        selected_families.dedup();
        if let Some(&v) = selected_families.iter().find(|&&v| v >= n_variants) {
            return Err(Error::invalid(format!(
                "selected family {v} outside 0..{n_variants}"
            )));
        }
        Ok(Self {
            n_variants,
            n_phenotypes,
            rejected,
            selected_families,
            stage2_level,
        })
    }

    /// Decisions where the selected families are exactly those with at least
    /// one rejection (the reading used for non-hierarchical strategies).
    pub fn from_rejections(
        n_variants: usize,
        n_phenotypes: usize,
        rejected: Vec<Hypothesis>,
        level: f64,
    ) -> Result<Self> {
        let mut families: Vec<usize> = rejected.iter().map(|h| h.variant).collect();
        families.dedup();
        Self::new(n_variants, n_phenotypes, rejected, families, level)
    }

    pub fn empty(n_variants: usize, n_phenotypes: usize) -> Self {
        Self {
            n_variants,
            n_phenotypes,
            rejected: Vec::new(),
            selected_families: Vec::new(),
            stage2_level: 0.0,
        }
    }

    pub fn n_variants(&self) -> usize {
        self.n_variants
    }

    pub fn n_phenotypes(&self) -> usize {
        self.n_phenotypes
    }

    pub fn rejected(&self) -> &[Hypothesis] {
        &self.rejected
    }

    pub fn n_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn selected_families(&self) -> &[usize] {
        &self.selected_families
    }

    pub fn is_selected(&self, variant: usize) -> bool {
        self.selected_families.binary_search(&variant).is_ok()
    }

    /// Within-family level used at Stage 2 (or the single level of a
    /// one-stage strategy); 0 when nothing was selected.
    pub fn stage2_level(&self) -> f64 {
        self.stage2_level
    }

    pub fn is_rejected(&self, variant: usize, phenotype: usize) -> bool {
        self.rejected
            .binary_search(&Hypothesis::new(variant, phenotype))
            .is_ok()
    }

    /// Rejections inside family `variant`.
    pub fn family_rejections(&self, variant: usize) -> &[Hypothesis] {
        let lo = self.rejected.partition_point(|h| h.variant < variant);
        let hi = self.rejected.partition_point(|h| h.variant <= variant);
        &self.rejected[lo..hi]
    }
}

/// Families selected at Stage 1 together with the global p-values that
/// selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSet {
    families: Vec<usize>,
    global_pvalues: Vec<f64>,
}

impl SelectionSet {
    pub fn new(families: Vec<usize>, global_pvalues: Vec<f64>, n_families: usize) -> Result<Self> {
        if families.len() != global_pvalues.len() {
            return Err(Error::Dimension(format!(
                "{} selected families but {} p-values",
                families.len(),
                global_pvalues.len()
            )));
        }
        let mut sorted = families.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("selected families must be unique"));
        }
        if sorted.last().is_some_and(|&v| v >= n_families) {
            return Err(Error::invalid("selected family index out of range"));
        }
        Ok(Self {
            families,
            global_pvalues,
        })
    }

    pub fn families(&self) -> &[usize] {
        &self.families
    }

    pub fn global_pvalues(&self) -> &[f64] {
        &self.global_pvalues
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.families.iter().copied().zip(self.global_pvalues.iter().copied())
    }
}
