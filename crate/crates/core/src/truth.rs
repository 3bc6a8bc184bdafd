//! Ground truth for simulated data: which hypotheses are false nulls, and
//! optionally where the variants sit on the genome.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Genomic coordinate of a variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Locus {
    pub chrom: u32,
    pub position: u64,
}

impl Locus {
    pub fn new(chrom: u32, position: u64) -> Self {
        Self { chrom, position }
    }

    /// Base-pair distance, or `None` across chromosomes.
    pub fn distance(&self, other: &Locus) -> Option<u64> {
        (self.chrom == other.chrom).then(|| self.position.abs_diff(other.position))
    }
}

/// Correlation between the genotypes of two variants.
pub trait VariantCorrelation: Send + Sync {
    fn correlation(&self, a: usize, b: usize) -> f64;
}

impl<F> VariantCorrelation for F
where
    F: Fn(usize, usize) -> f64 + Send + Sync,
{
    fn correlation(&self, a: usize, b: usize) -> f64 {
        self(a, b)
    }
}

#[derive(Clone)]
pub struct TruthMask {
    n_variants: usize,
    n_phenotypes: usize,
    false_null: Vec<bool>,
    loci: Option<Vec<Locus>>,
    correlation: Option<Arc<dyn VariantCorrelation>>,
}

impl fmt::Debug for TruthMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruthMask")
            .field("n_variants", &self.n_variants)
            .field("n_phenotypes", &self.n_phenotypes)
            .field("n_false_nulls", &self.n_false_nulls())
            .field("has_loci", &self.loci.is_some())
            .field("has_correlation", &self.correlation.is_some())
            .finish()
    }
}

impl TruthMask {
    /// All hypotheses true nulls.
    pub fn all_null(n_variants: usize, n_phenotypes: usize) -> Self {
        Self {
            n_variants,
            n_phenotypes,
            false_null: vec![false; n_variants * n_phenotypes],
            loci: None,
            correlation: None,
        }
    }

    pub fn from_false_nulls(
        n_variants: usize,
        n_phenotypes: usize,
        cells: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut mask = Self::all_null(n_variants, n_phenotypes);
        for (v, t) in cells {
            mask.set_false_null(v, t)?;
        }
        Ok(mask)
    }

    pub fn set_false_null(&mut self, variant: usize, phenotype: usize) -> Result<()> {
        if variant >= self.n_variants || phenotype >= self.n_phenotypes {
            return Err(Error::IndexOutOfBounds {
                variant,
                phenotype,
                n_variants: self.n_variants,
                n_phenotypes: self.n_phenotypes,
            });
        }
        self.false_null[variant * self.n_phenotypes + phenotype] = true;
        Ok(())
    }

    pub fn with_loci(mut self, loci: Vec<Locus>) -> Result<Self> {
        if loci.len() != self.n_variants {
            return Err(Error::Dimension(format!(
                "{} loci for {} variants",
                loci.len(),
                self.n_variants
            )));
        }
        self.loci = Some(loci);
        Ok(self)
    }

    pub fn with_correlation(mut self, correlation: Arc<dyn VariantCorrelation>) -> Self {
        self.correlation = Some(correlation);
        self
    }

    pub fn n_variants(&self) -> usize {
        self.n_variants
    }

    pub fn n_phenotypes(&self) -> usize {
        self.n_phenotypes
    }

    pub fn is_false_null(&self, variant: usize, phenotype: usize) -> bool {
        self.false_null[variant * self.n_phenotypes + phenotype]
    }

    pub fn family(&self, variant: usize) -> &[bool] {
        let start = variant * self.n_phenotypes;
        &self.false_null[start..start + self.n_phenotypes]
    }

    pub fn n_false_nulls(&self) -> usize {
        self.false_null.iter().filter(|&&b| b).count()
    }

    /// All false-null cells, variant-major.
    pub fn false_nulls(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.false_null
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.n_phenotypes, i % self.n_phenotypes))
    }

    pub fn loci(&self) -> Option<&[Locus]> {
        self.loci.as_deref()
    }

    pub fn correlation(&self) -> Option<&dyn VariantCorrelation> {
        self.correlation.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn false_null_bookkeeping() {
        let mask = TruthMask::from_false_nulls(3, 2, [(0, 1), (2, 0)]).unwrap();
        assert!(mask.is_false_null(0, 1));
        assert!(!mask.is_false_null(1, 1));
        assert_eq!(mask.n_false_nulls(), 2);
        assert_eq!(mask.false_nulls().collect::<Vec<_>>(), vec![(0, 1), (2, 0)]);
        assert_eq!(mask.family(2), &[true, false]);
        assert!(TruthMask::from_false_nulls(3, 2, [(3, 0)]).is_err());
    }

    #[test]
    fn loci_must_cover_every_variant() {
        let mask = TruthMask::all_null(2, 1);
        assert!(mask.clone().with_loci(vec![Locus::new(1, 10)]).is_err());
        let mask = mask.with_loci(vec![Locus::new(1, 10), Locus::new(2, 10)]).unwrap();
        let loci = mask.loci().unwrap();
        assert_eq!(loci[0].distance(&loci[1]), None);
        assert_eq!(loci[0].distance(&Locus::new(1, 4)), Some(6));
    }
}
