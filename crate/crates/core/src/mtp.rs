//! Multiple-testing procedures on a single collection of p-values:
//! Benjamini–Hochberg step-up, Benjamini–Yekutieli and Bonferroni.
//!
//! Every procedure reports its realized cutoff, the threshold a p-value had
//! to clear to be rejected. For BH/BY that is `k * q' / m` at the maximal
//! qualifying rank `k` (0 when nothing is rejected); for Bonferroni it is
//! `q / m`. Callers holding censored input compare it against the save
//! threshold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvalues::cmp_pvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Bh,
    By,
    Bonferroni,
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Bh => "bh",
            Procedure::By => "by",
            Procedure::Bonferroni => "bonferroni",
        }
    }

    pub fn apply(&self, pvalues: &[f64], q: f64) -> Result<RejectionResult> {
        match self {
            Procedure::Bh => bh(pvalues, q),
            Procedure::By => by(pvalues, q),
            Procedure::Bonferroni => bonferroni(pvalues, q),
        }
    }

    /// Runs the procedure on a collection of `n_tests` p-values of which only
    /// `stored` are known; the rest exceed `save_threshold`. Indices in the
    /// result refer to positions in `stored`. Fails if the realized cutoff
    /// exceeds the save threshold, since censored values could then matter.
    pub fn apply_censored(
        &self,
        stored: &[f64],
        n_tests: usize,
        q: f64,
        save_threshold: f64,
        stage: &'static str,
    ) -> Result<RejectionResult> {
        if stored.len() > n_tests {
            return Err(Error::Dimension(format!(
                "{} stored p-values exceed {n_tests} tests",
                stored.len()
            )));
        }
        let result = match self {
            Procedure::Bh => step_up(stored, n_tests, q, q, Procedure::Bh)?,
            Procedure::By => step_up(stored, n_tests, q, q / harmonic(n_tests), Procedure::By)?,
            Procedure::Bonferroni => single_step(stored, n_tests, q)?,
        };
        if result.cutoff > save_threshold {
            return Err(Error::SparseCutoff {
                stage,
                cutoff: result.cutoff,
                threshold: save_threshold,
            });
        }
        Ok(result)
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(Procedure::Bh),
            "by" => Ok(Procedure::By),
            "bonf" | "bonferroni" => Ok(Procedure::Bonferroni),
            other => Err(Error::invalid(format!("unknown procedure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    procedure: Procedure,
    level: f64,
    n_tests: usize,
    cutoff: f64,
    rejected: Vec<usize>,
    max_rejected: f64,
}

impl RejectionResult {
    pub fn procedure(&self) -> Procedure {
        self.procedure
    }

    /// Target level q as requested (before any BY correction).
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn n_tests(&self) -> usize {
        self.n_tests
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Largest rejected p-value, or 0 when nothing was rejected.
    pub fn max_rejected(&self) -> f64 {
        self.max_rejected
    }

    /// Rejected positions, ascending.
    pub fn rejected(&self) -> &[usize] {
        &self.rejected
    }

    pub fn n_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn into_rejected(self) -> Vec<usize> {
        self.rejected
    }
}

/// Benjamini–Hochberg step-up at level `q`.
pub fn bh(pvalues: &[f64], q: f64) -> Result<RejectionResult> {
    step_up(pvalues, pvalues.len(), q, q, Procedure::Bh)
}

/// Benjamini–Yekutieli: BH at `q / H_m` with `H_m` the m-th harmonic number.
pub fn by(pvalues: &[f64], q: f64) -> Result<RejectionResult> {
    let m = pvalues.len();
    step_up(pvalues, m, q, q / harmonic(m.max(1)), Procedure::By)
}

/// Bonferroni: reject every p-value at or below `q / m`.
pub fn bonferroni(pvalues: &[f64], q: f64) -> Result<RejectionResult> {
    single_step(pvalues, pvalues.len(), q)
}

pub(crate) fn harmonic(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / i as f64).sum()
}

/// BH step-up threshold for rank `i` (1-based) out of `m` at level `q`.
#[inline]
pub(crate) fn step_up_threshold(i: usize, q: f64, m: usize) -> f64 {
    i as f64 * q / m as f64
}

fn validate(pvalues: &[f64], n_tests: usize, q: f64) -> Result<()> {
    if n_tests == 0 {
        return Err(Error::invalid("no p-values to test"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("level {q} outside (0, 1)")));
    }
    if let Some((i, &p)) = pvalues
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::PValueOutOfRange {
            variant: i,
            phenotype: 0,
            value: p,
        });
    }
    Ok(())
}

/// Step-up over `known` p-values out of `n_tests`, where every unknown value
/// exceeds all known ones. Only values at or below `effective` can clear a
/// threshold, so only those are sorted.
fn step_up(
    known: &[f64],
    n_tests: usize,
    level: f64,
    effective: f64,
    procedure: Procedure,
) -> Result<RejectionResult> {
    validate(known, n_tests, level)?;
    let mut candidates: Vec<(f64, usize)> = known
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, p)| p <= effective)
        .map(|(i, p)| (p, i))
        .collect();
    candidates.sort_unstable_by(|a, b| cmp_pvalue(*a, *b));

    let k = candidates
        .iter()
        .enumerate()
        .rev()
        .find(|&(j, &(p, _))| p <= step_up_threshold(j + 1, effective, n_tests))
        .map_or(0, |(j, _)| j + 1);

    let cutoff = if k == 0 {
        0.0
    } else {
        step_up_threshold(k, effective, n_tests)
    };
    let max_rejected = if k == 0 { 0.0 } else { candidates[k - 1].0 };
    let mut rejected: Vec<usize> = candidates[..k].iter().map(|&(_, i)| i).collect();
    rejected.sort_unstable();
    Ok(RejectionResult {
        procedure,
        level,
        n_tests,
        cutoff,
        rejected,
        max_rejected,
    })
}

fn single_step(known: &[f64], n_tests: usize, q: f64) -> Result<RejectionResult> {
    validate(known, n_tests, q)?;
    let cutoff = q / n_tests as f64;
    let rejected: Vec<usize> = known
        .iter()
        .enumerate()
        .filter(|(_, &p)| p <= cutoff)
        .map(|(i, _)| i)
        .collect();
    let max_rejected = rejected.iter().map(|&i| known[i]).fold(0.0, f64::max);
    Ok(RejectionResult {
        procedure: Procedure::Bonferroni,
        level: q,
        n_tests,
        cutoff,
        rejected,
        max_rejected,
    })
}
