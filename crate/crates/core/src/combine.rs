//! Global p-values for the intersection null of each family.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvalues::PValueMatrix;
use crate::special::chi2_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Simes,
    Fisher,
    BonferroniMin,
}

impl Combiner {
    pub fn name(&self) -> &'static str {
        match self {
            Combiner::Simes => "simes",
            Combiner::Fisher => "fisher",
            Combiner::BonferroniMin => "bonferroni_min",
        }
    }

    pub fn combine(&self, pvalues: &[f64]) -> Result<f64> {
        match self {
            Combiner::Simes => simes(pvalues),
            Combiner::Fisher => fisher(pvalues),
            Combiner::BonferroniMin => bonferroni_min(pvalues),
        }
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Combiner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simes" => Ok(Combiner::Simes),
            "fisher" => Ok(Combiner::Fisher),
            "bonf" | "bonferroni" | "bonferroni_min" => Ok(Combiner::BonferroniMin),
            other => Err(Error::invalid(format!("unknown combiner '{other}'"))),
        }
    }
}

fn check(pvalues: &[f64]) -> Result<()> {
    if pvalues.is_empty() {
        return Err(Error::invalid("cannot combine an empty family"));
    }
    if let Some((i, &p)) = pvalues
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::PValueOutOfRange {
            variant: 0,
            phenotype: i,
            value: p,
        });
    }
    Ok(())
}

/// Simes combination: `min_t P * p_(t) / t`, capped at 1.
pub fn simes(pvalues: &[f64]) -> Result<f64> {
    check(pvalues)?;
    let mut sorted = pvalues.to_vec();
    Ok(simes_partial(&mut sorted, pvalues.len()))
}

/// Simes over a family of `family_size` p-values of which only `known` are
/// available; the missing ones are treated as 1. Sorts `known` in place.
fn simes_partial(known: &mut [f64], family_size: usize) -> f64 {
    known.sort_unstable_by(f64::total_cmp);
    let size = family_size as f64;
    known
        .iter()
        .enumerate()
        .map(|(j, &p)| p * size / (j + 1) as f64)
        .fold(1.0, f64::min)
}

/// Fisher's combination: `-2 sum log p` against chi-square with `2P` df.
/// Zero p-values are floored at the smallest positive double.
pub fn fisher(pvalues: &[f64]) -> Result<f64> {
    check(pvalues)?;
    let floor = f64::from_bits(1);
    let stat: f64 = -2.0 * pvalues.iter().map(|&p| p.max(floor).ln()).sum::<f64>();
    Ok(chi2_sf(stat, 2.0 * pvalues.len() as f64))
}

/// `min(P * min_t p_t, 1)`.
pub fn bonferroni_min(pvalues: &[f64]) -> Result<f64> {
    check(pvalues)?;
    let min = pvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min * pvalues.len() as f64).min(1.0))
}

/// One intersection-null p-value per family.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPValues {
    values: Vec<f64>,
    combiner: Combiner,
    censor_threshold: Option<f64>,
}

impl GlobalPValues {
    pub fn new(values: Vec<f64>, combiner: Combiner) -> Result<Self> {
        if let Some((v, &p)) = values
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::PValueOutOfRange {
                variant: v,
                phenotype: 0,
                value: p,
            });
        }
        Ok(Self {
            values,
            combiner,
            censor_threshold: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn combiner(&self) -> Combiner {
        self.combiner
    }

    /// True when computed from censored input: values above the save
    /// threshold are then upper bounds rather than exact.
    pub fn is_conservative(&self) -> bool {
        self.censor_threshold.is_some()
    }

    /// Save threshold of the censored input these values came from. Values
    /// at or below it are exact.
    pub fn censor_threshold(&self) -> Option<f64> {
        self.censor_threshold
    }
}

/// Stage 0: combine each family of `matrix` independently.
///
/// Censored input is accepted for Simes only; censored cells count as 1,
/// which can only raise the result.
pub fn combine_matrix(matrix: &PValueMatrix, combiner: Combiner) -> Result<GlobalPValues> {
    let n_phenotypes = matrix.n_phenotypes();
    let values: Vec<f64> = match matrix.save_threshold() {
        None => (0..matrix.n_variants())
            .into_par_iter()
            .map(|v| {
                let family = matrix.dense_family(v).unwrap();
                match combiner {
                    Combiner::Simes => simes_partial(&mut family.to_vec(), n_phenotypes),
                    Combiner::Fisher => fisher(family).unwrap(),
                    Combiner::BonferroniMin => bonferroni_min(family).unwrap(),
                }
            })
            .collect(),
        Some(_) => {
            if combiner != Combiner::Simes {
                return Err(Error::CensoredCombiner(combiner.name()));
            }
            (0..matrix.n_variants())
                .into_par_iter()
                .map(|v| {
                    let mut known: Vec<f64> = matrix.family_observed(v).map(|(_, p)| p).collect();
                    simes_partial(&mut known, n_phenotypes)
                })
                .collect()
        }
    };
    Ok(GlobalPValues {
        values,
        combiner,
        censor_threshold: matrix.save_threshold(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simes_examples() {
        assert_eq!(simes(&[0.2]).unwrap(), 0.2);
        assert_eq!(simes(&[0.02, 0.03]).unwrap(), 0.03);
        assert_eq!(simes(&[0.03, 0.02]).unwrap(), 0.03);
        assert_eq!(simes(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(simes(&[0.001, 0.5]).unwrap(), 0.002);
        assert!(simes(&[]).is_err());
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher(&[1.0, 1.0]).unwrap(), 1.0);
        assert!((fisher(&[0.5]).unwrap() - 0.5).abs() < 1e-12);
        // chi2_4 tail at x: exp(-x/2) (1 + x/2)
        let x = -2.0 * (0.01f64.ln() * 2.0);
        let oracle = (-x / 2.0).exp() * (1.0 + x / 2.0);
        assert!((fisher(&[0.01, 0.01]).unwrap() - oracle).abs() < 1e-12 * oracle);
        assert!(fisher(&[0.0, 0.5]).unwrap() < 1e-100);
        assert!(fisher(&[]).is_err());
    }

    #[test]
    fn bonferroni_min_examples() {
        assert_eq!(bonferroni_min(&[0.01, 0.5]).unwrap(), 0.02);
        assert_eq!(bonferroni_min(&[0.9]).unwrap(), 0.9);
        assert_eq!(bonferroni_min(&[0.6, 0.7, 0.8]).unwrap(), 1.0);
    }

    #[test]
    fn combine_matrix_single_family() {
        let m = PValueMatrix::from_rows(&[[0.02, 0.03]]).unwrap();
        let g = combine_matrix(&m, Combiner::Simes).unwrap();
        assert_eq!(g.values(), &[0.03]);
        assert!(!g.is_conservative());
    }

    #[test]
    fn combine_matrix_all_ones() {
        let m = PValueMatrix::from_rows(&vec![vec![1.0; 4]; 5]).unwrap();
        for c in [Combiner::Simes, Combiner::Fisher, Combiner::BonferroniMin] {
            let g = combine_matrix(&m, c).unwrap();
            assert_eq!(g.values(), &[1.0; 5]);
        }
    }

    #[test]
    fn censored_simes_equals_dense_with_censored_set_to_one() {
        let p = 23;
        let m = PValueMatrix::from_sparse([(0, 4, 1e-6), (1, 2, 3e-4), (1, 9, 1e-4)], 3, p, 5e-4)
            .unwrap();
        let g = combine_matrix(&m, Combiner::Simes).unwrap();
        let oracle = combine_matrix(&m.fill_censored(1.0).unwrap(), Combiner::Simes).unwrap();
        assert_eq!(g.values(), oracle.values());
        assert!((g.values()[0] - 23e-6).abs() < 1e-18);
        assert_eq!(g.values()[2], 1.0);
        assert!(g.is_conservative());
        assert_eq!(g.censor_threshold(), Some(5e-4));
    }

    #[test]
    fn censored_rejects_other_combiners() {
        let m = PValueMatrix::from_sparse([(0, 0, 1e-6)], 2, 2, 5e-4).unwrap();
        assert!(matches!(
            combine_matrix(&m, Combiner::Fisher),
            Err(Error::CensoredCombiner("fisher"))
        ));
        assert!(combine_matrix(&m, Combiner::BonferroniMin).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn family() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..=1.0, 1..20)
        }

        proptest! {
            #[test]
            fn monotone_in_each_input(p in family(), idx in any::<prop::sample::Index>(), shrink in 0.0f64..=1.0) {
                let i = idx.index(p.len());
                let mut lower = p.clone();
                lower[i] *= shrink;
                for c in [Combiner::Simes, Combiner::Fisher, Combiner::BonferroniMin] {
                    let a = c.combine(&p).unwrap();
                    let b = c.combine(&lower).unwrap();
                    prop_assert!(b <= a + 1e-12 * a, "{c}: {b} > {a}");
                }
            }

            #[test]
            fn permutation_invariant(p in family(), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let mut shuffled = p.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(simes(&p).unwrap(), simes(&shuffled).unwrap());
                prop_assert_eq!(bonferroni_min(&p).unwrap(), bonferroni_min(&shuffled).unwrap());
                let (a, b) = (fisher(&p).unwrap(), fisher(&shuffled).unwrap());
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            }

            #[test]
            fn results_are_probabilities(p in family()) {
                for c in [Combiner::Simes, Combiner::Fisher, Combiner::BonferroniMin] {
                    let g = c.combine(&p).unwrap();
                    prop_assert!((0.0..=1.0).contains(&g));
                }
            }
        }
    }
}
