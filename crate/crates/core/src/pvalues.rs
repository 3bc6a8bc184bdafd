//! The M x P grid of per-(variant, phenotype) p-values.
//!
//! Hypotheses are grouped into families by variant: family `v` holds the P
//! hypotheses `(v, 0..P)`. Storage is either dense (every p-value present)
//! or censored, where only p-values at or below a save threshold are kept and
//! everything else is known only to exceed it.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// One hypothesis, identified by its family (variant) and member (phenotype).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hypothesis {
    pub variant: usize,
    pub phenotype: usize,
}

impl Hypothesis {
    pub fn new(variant: usize, phenotype: usize) -> Self {
        Self { variant, phenotype }
    }
}

/// What is known about a single cell of the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entry {
    Observed(f64),
    /// Only known to exceed the save threshold.
    Censored,
}

impl Entry {
    pub fn value(self) -> Option<f64> {
        match self {
            Entry::Observed(p) => Some(p),
            Entry::Censored => None,
        }
    }
}

/// Families are defined by variant, each with one member per phenotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyLayout {
    n_families: usize,
    family_size: usize,
}

impl FamilyLayout {
    pub fn by_variant(n_variants: usize, n_phenotypes: usize) -> Self {
        Self {
            n_families: n_variants,
            family_size: n_phenotypes,
        }
    }

    pub fn n_families(&self) -> usize {
        self.n_families
    }

    pub fn family_size(&self) -> usize {
        self.family_size
    }

    pub fn n_hypotheses(&self) -> usize {
        self.n_families * self.family_size
    }

    /// Family of the hypothesis at flat (variant-major) position `index`.
    pub fn family_of(&self, index: usize) -> usize {
        index / self.family_size
    }
}

#[derive(Debug, Clone)]
enum Storage {
    /// Variant-major, length M * P.
    Dense(Vec<f64>),
    /// Compressed rows: entries of family `v` live in `offsets[v]..offsets[v + 1]`,
    /// sorted by phenotype.
    Censored {
        threshold: f64,
        offsets: Vec<usize>,
        phenotypes: Vec<u32>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct PValueMatrix {
    n_variants: usize,
    n_phenotypes: usize,
    storage: Storage,
}

/// Orders p-values ascending with ties broken by position, so sorts are
/// reproducible regardless of algorithm stability.
pub(crate) fn cmp_pvalue(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check_unit(variant: usize, phenotype: usize, value: f64) -> Result<()> {
    if value.is_nan() {
        return Err(Error::MissingValue { variant, phenotype });
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::PValueOutOfRange {
            variant,
            phenotype,
            value,
        });
    }
    Ok(())
}

impl PValueMatrix {
    /// Builds a dense matrix from variant-major values. `NaN` marks a missing
    /// value, which is an error here: censoring must be declared through
    /// [`PValueMatrix::from_sparse`].
    pub fn from_dense(n_variants: usize, n_phenotypes: usize, values: Vec<f64>) -> Result<Self> {
        if n_variants == 0 || n_phenotypes == 0 {
            return Err(Error::invalid("matrix needs at least one variant and one phenotype"));
        }
        if values.len() != n_variants * n_phenotypes {
            return Err(Error::Dimension(format!(
                "{} values for a {n_variants}x{n_phenotypes} matrix",
                values.len()
            )));
        }
        for (i, &p) in values.iter().enumerate() {
            check_unit(i / n_phenotypes, i % n_phenotypes, p)?;
        }
        Ok(Self {
            n_variants,
            n_phenotypes,
            storage: Storage::Dense(values),
        })
    }

    /// Builds a dense matrix from one row per variant.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_phenotypes = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_phenotypes);
        for (v, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_phenotypes {
                return Err(Error::Dimension(format!(
                    "row {v} has {} entries, expected {n_phenotypes}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_dense(rows.len(), n_phenotypes, values)
    }

    /// Builds a censored matrix from `(variant, phenotype, p)` triples. Cells
    /// not listed are treated as "p > save_threshold" by every procedure.
    pub fn from_sparse(
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
        n_variants: usize,
        n_phenotypes: usize,
        save_threshold: f64,
    ) -> Result<Self> {
        if n_variants == 0 || n_phenotypes == 0 {
            return Err(Error::invalid("matrix needs at least one variant and one phenotype"));
        }
        if !(save_threshold > 0.0 && save_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "save threshold {save_threshold} outside (0, 1]"
            )));
        }
        if n_phenotypes > u32::MAX as usize {
            return Err(Error::invalid("too many phenotypes"));
        }
        let mut triples: Vec<(usize, usize, f64)> = triples.into_iter().collect();
        for &(v, t, p) in &triples {
            if v >= n_variants || t >= n_phenotypes {
                return Err(Error::IndexOutOfBounds {
                    variant: v,
                    phenotype: t,
                    n_variants,
                    n_phenotypes,
                });
            }
            check_unit(v, t, p)?;
            if p > save_threshold {
                return Err(Error::AboveSaveThreshold {
                    variant: v,
                    phenotype: t,
                    value: p,
                    threshold: save_threshold,
                });
            }
        }
        triples.sort_unstable_by_key(|&(v, t, _)| (v, t));
        if let Some(w) = triples.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::DuplicateEntry {
                variant: w[0].0,
                phenotype: w[0].1,
            });
        }

        let mut offsets = vec![0usize; n_variants + 1];
        for &(v, _, _) in &triples {
            offsets[v + 1] += 1;
        }
        for v in 0..n_variants {
            offsets[v + 1] += offsets[v];
        }
        let phenotypes = triples.iter().map(|&(_, t, _)| t as u32).collect();
        let values = triples.iter().map(|&(_, _, p)| p).collect();
        Ok(Self {
            n_variants,
            n_phenotypes,
            storage: Storage::Censored {
                threshold: save_threshold,
                offsets,
                phenotypes,
                values,
            },
        })
    }

    pub fn n_variants(&self) -> usize {
        self.n_variants
    }

    pub fn n_phenotypes(&self) -> usize {
        self.n_phenotypes
    }

    /// Total number of hypotheses, M * P.
    pub fn n_hypotheses(&self) -> usize {
        self.n_variants * self.n_phenotypes
    }

    pub fn layout(&self) -> FamilyLayout {
        FamilyLayout::by_variant(self.n_variants, self.n_phenotypes)
    }

    pub fn save_threshold(&self) -> Option<f64> {
        match &self.storage {
            Storage::Dense(_) => None,
            Storage::Censored { threshold, .. } => Some(*threshold),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Number of stored (non-censored) entries.
    pub fn n_stored(&self) -> usize {
        match &self.storage {
            Storage::Dense(values) => values.len(),
            Storage::Censored { values, .. } => values.len(),
        }
    }

    pub fn get(&self, variant: usize, phenotype: usize) -> Entry {
        assert!(variant < self.n_variants && phenotype < self.n_phenotypes);
        match &self.storage {
            Storage::Dense(values) => Entry::Observed(values[variant * self.n_phenotypes + phenotype]),
            Storage::Censored {
                offsets,
                phenotypes,
                values,
                ..
            } => {
                let range = offsets[variant]..offsets[variant + 1];
                match phenotypes[range.clone()].binary_search(&(phenotype as u32)) {
                    Ok(i) => Entry::Observed(values[range.start + i]),
                    Err(_) => Entry::Censored,
                }
            }
        }
    }

    /// The full family of a dense matrix, indexed by phenotype.
    pub fn dense_family(&self, variant: usize) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(values) => {
                let start = variant * self.n_phenotypes;
                Some(&values[start..start + self.n_phenotypes])
            }
            Storage::Censored { .. } => None,
        }
    }

    /// The variant-major dense values, if the matrix is dense.
    pub fn dense_values(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(values) => Some(values),
            Storage::Censored { .. } => None,
        }
    }

    /// Stored `(phenotype, p)` pairs of one family, in phenotype order.
    pub fn family_observed(&self, variant: usize) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match &self.storage {
            Storage::Dense(_) => Box::new(
                self.dense_family(variant)
                    .unwrap()
                    .iter()
                    .copied()
                    .enumerate(),
            ),
            Storage::Censored {
                offsets,
                phenotypes,
                values,
                ..
            } => {
                let range = offsets[variant]..offsets[variant + 1];
                Box::new(
                    phenotypes[range.clone()]
                        .iter()
                        .zip(&values[range])
                        .map(|(&t, &p)| (t as usize, p)),
                )
            }
        }
    }

    /// Every stored entry as `(variant, phenotype, p)`, variant-major.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_variants).flat_map(move |v| self.family_observed(v).map(move |(t, p)| (v, t, p)))
    }

    /// A dense copy in which censored cells take the value `fill`.
    pub fn fill_censored(&self, fill: f64) -> Result<Self> {
        let mut values = vec![fill; self.n_hypotheses()];
        for (v, t, p) in self.observed() {
            values[v * self.n_phenotypes + t] = p;
        }
        Self::from_dense(self.n_variants, self.n_phenotypes, values)
    }

    /// Drops entries above `threshold`, producing the censored equivalent.
    pub fn censor(&self, threshold: f64) -> Result<Self> {
        let kept: Vec<_> = self.observed().filter(|&(_, _, p)| p <= threshold).collect();
        Self::from_sparse(kept, self.n_variants, self.n_phenotypes, threshold)
    }
}
