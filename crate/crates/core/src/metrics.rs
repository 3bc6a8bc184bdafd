//! Realized error proportions and power of one set of decisions against
//! known truth, and their aggregation over replicates.
//!
//! Conventions: every ratio uses `max(denominator, 1)`, so a replicate with
//! no discoveries has FDP 0; powers with an empty denominator are 0.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decision::DecisionSet;
use crate::error::{Error, Result};
use crate::truth::{Locus, TruthMask};

/// Counts a rejection of `(v, t)` as correct when some causal `(v', t)` lies
/// within `window` base pairs of `v` with `|corr(v, v')| >= min_abs_corr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityRule {
    pub window: u64,
    pub min_abs_corr: f64,
    pub enabled: bool,
}

impl ProximityRule {
    pub fn disabled() -> Self {
        Self {
            window: 0,
            min_abs_corr: 1.0,
            enabled: false,
        }
    }

    pub fn new(window: u64, min_abs_corr: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min_abs_corr) {
            return Err(Error::invalid(format!(
                "proximity correlation threshold {min_abs_corr} outside [0, 1]"
            )));
        }
        Ok(Self {
            window,
            min_abs_corr,
            enabled: true,
        })
    }
}

impl Default for ProximityRule {
    fn default() -> Self {
        Self::disabled()
    }
}

/// Rejections and false rejections inside one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FamilyCount {
    pub variant: usize,
    pub rejected: usize,
    pub false_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub g_fdp: f64,
    pub a_fdp: f64,
    pub s_fdp: f64,
    pub v_fdp: f64,
    pub g_fwe: f64,
    pub v_fwe: f64,
    pub s_fwe_avg: f64,
    pub g_power: f64,
    pub v_power: f64,
    pub singleton_power: f64,
    /// Total rejections R and false rejections F.
    pub rejections: usize,
    pub false_rejections: usize,
    /// Family discoveries and false family discoveries.
    pub family_discoveries: usize,
    pub false_family_discoveries: usize,
    /// Per-family counts for every family that was selected or had a rejection.
    pub families: Vec<FamilyCount>,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::GFdr => self.g_fdp,
            Metric::AFdr => self.a_fdp,
            Metric::SFdr => self.s_fdp,
            Metric::VFdr => self.v_fdp,
            Metric::GFwer => self.g_fwe,
            Metric::VFwer => self.v_fwe,
            Metric::SFwer => self.s_fwe_avg,
            Metric::GPower => self.g_power,
            Metric::VPower => self.v_power,
            Metric::SingletonPower => self.singleton_power,
        }
    }
}

/// Metric names as they appear in reports and CSV output. Replicate means of
/// the realized proportions estimate the corresponding rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    GFdr,
    AFdr,
    SFdr,
    VFdr,
    GFwer,
    VFwer,
    SFwer,
    GPower,
    VPower,
    SingletonPower,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::GFdr,
        Metric::AFdr,
        Metric::SFdr,
        Metric::VFdr,
        Metric::GFwer,
        Metric::VFwer,
        Metric::SFwer,
        Metric::GPower,
        Metric::VPower,
        Metric::SingletonPower,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::GFdr => "gFDR",
            Metric::AFdr => "aFDR",
            Metric::SFdr => "sFDR",
            Metric::VFdr => "vFDR",
            Metric::GFwer => "gFWER",
            Metric::VFwer => "vFWER",
            Metric::SFwer => "sFWER",
            Metric::GPower => "gPower",
            Metric::VPower => "vPower",
            Metric::SingletonPower => "SingletonPower",
        }
    }

    fn index(&self) -> usize {
        Metric::ALL.iter().position(|m| m == self).unwrap()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown metric '{s}'")))
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    num as f64 / den.max(1) as f64
}

/// Causal variants per phenotype, sorted by locus, for window lookups.
struct ProximityIndex<'a> {
    truth: &'a TruthMask,
    rule: ProximityRule,
    loci: &'a [Locus],
    causal: Vec<Vec<(Locus, usize)>>,
}

impl<'a> ProximityIndex<'a> {
    fn new(truth: &'a TruthMask, rule: ProximityRule) -> Result<Option<Self>> {
        if !rule.enabled {
            return Ok(None);
        }
        let loci = truth
            .loci()
            .ok_or_else(|| Error::invalid("proximity rule enabled but truth has no variant positions"))?;
        if truth.correlation().is_none() {
            return Err(Error::invalid(
                "proximity rule enabled but truth has no genotype correlations",
            ));
        }
        let mut causal = vec![Vec::new(); truth.n_phenotypes()];
        for (v, t) in truth.false_nulls() {
            causal[t].push((loci[v], v));
        }
        for list in &mut causal {
            list.sort_unstable();
        }
        Ok(Some(Self {
            truth,
            rule,
            loci,
            causal,
        }))
    }

    /// Causal `(v', t)` near `v` in both distance and correlation.
    fn near_causal(&self, variant: usize, phenotype: usize) -> bool {
        let here = self.loci[variant];
        let list = &self.causal[phenotype];
        let lo = Locus::new(here.chrom, here.position.saturating_sub(self.rule.window));
        let start = list.partition_point(|(l, _)| *l < lo);
        let corr = self.truth.correlation().unwrap();
        list[start..]
            .iter()
            .take_while(|(l, _)| l.chrom == here.chrom && l.position <= here.position + self.rule.window)
            .any(|&(_, other)| {
                other == variant || corr.correlation(variant, other).abs() >= self.rule.min_abs_corr
            })
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        a == b
            || self.loci[a]
                .distance(&self.loci[b])
                .is_some_and(|d| d <= self.rule.window)
                && self.truth.correlation().unwrap().correlation(a, b).abs() >= self.rule.min_abs_corr
    }
}

/// Hypothesis-level effective truth: causal, or a proxy for a causal variant.
fn effective_false_null(
    truth: &TruthMask,
    proximity: Option<&ProximityIndex<'_>>,
    variant: usize,
    phenotype: usize,
) -> bool {
    truth.is_false_null(variant, phenotype)
        || proximity.is_some_and(|idx| idx.near_causal(variant, phenotype))
}

fn check_dims(decisions: &DecisionSet, truth: &TruthMask) -> Result<()> {
    if decisions.n_variants() != truth.n_variants() || decisions.n_phenotypes() != truth.n_phenotypes() {
        return Err(Error::Dimension(format!(
            "decisions are {}x{} but truth is {}x{}",
            decisions.n_variants(),
            decisions.n_phenotypes(),
            truth.n_variants(),
            truth.n_phenotypes()
        )));
    }
    Ok(())
}

pub fn evaluate(decisions: &DecisionSet, truth: &TruthMask, rule: ProximityRule) -> Result<MetricsReport> {
    check_dims(decisions, truth)?;
    let proximity = ProximityIndex::new(truth, rule)?;
    let proximity = proximity.as_ref();
    let n_variants = truth.n_variants();

    // Per-family counts over every family that was selected or rejected
    // something; both lists are sorted so a merge walk covers them.
    let mut families: Vec<usize> = decisions
        .rejected()
        .iter()
        .map(|h| h.variant)
        .chain(decisions.selected_families().iter().copied())
        .collect();
    families.sort_unstable();
    families.dedup();

    let counts: Vec<FamilyCount> = families
        .iter()
        .map(|&v| {
            let rej = decisions.family_rejections(v);
            let false_rejected = rej
                .iter()
                .filter(|h| !effective_false_null(truth, proximity, h.variant, h.phenotype))
                .count();
            FamilyCount {
                variant: v,
                rejected: rej.len(),
                false_rejected,
            }
        })
        .collect();

    let rejections: usize = counts.iter().map(|c| c.rejected).sum();
    let false_rejections: usize = counts.iter().map(|c| c.false_rejected).sum();
    let family_fdp = |c: &FamilyCount| ratio(c.false_rejected, c.rejected);

    let a_fdp = counts.iter().map(family_fdp).sum::<f64>() / n_variants as f64;

    let by_variant: HashMap<usize, &FamilyCount> = counts.iter().map(|c| (c.variant, c)).collect();
    let selected = decisions.selected_families();
    let (s_fdp_sum, s_fwe_sum) = selected.iter().fold((0.0, 0.0), |(fdp, fwe), v| {
        let c = by_variant[v];
        (fdp + family_fdp(c), fwe + f64::from(u8::from(c.false_rejected > 0)))
    });
    let s_fdp = s_fdp_sum / selected.len().max(1) as f64;
    let s_fwe_avg = s_fwe_sum / selected.len().max(1) as f64;

    let family_is_associated = |v: usize| {
        (0..truth.n_phenotypes()).any(|t| effective_false_null(truth, proximity, v, t))
    };
    let false_family_discoveries = selected.iter().filter(|&&v| !family_is_associated(v)).count();

    let (g_power, v_power, singleton_power) = power_with(decisions, truth, proximity);

    Ok(MetricsReport {
        g_fdp: ratio(false_rejections, rejections),
        a_fdp,
        s_fdp,
        v_fdp: ratio(false_family_discoveries, selected.len()),
        g_fwe: f64::from(u8::from(false_rejections > 0)),
        v_fwe: f64::from(u8::from(false_family_discoveries > 0)),
        s_fwe_avg,
        g_power,
        v_power,
        singleton_power,
        rejections,
        false_rejections,
        family_discoveries: selected.len(),
        false_family_discoveries,
        families: counts,
    })
}

/// `(gPower, vPower, singletonPower)` against causal truth, without
/// proximity matching.
pub fn power_components(decisions: &DecisionSet, truth: &TruthMask) -> Result<(f64, f64, f64)> {
    check_dims(decisions, truth)?;
    Ok(power_with(decisions, truth, None))
}

/// Powers count causal hypotheses (families) that were detected. With a
/// proximity rule, a rejection of a linked neighbour `(v', t)` detects the
/// causal `(v, t)`, and likewise a linked selected family detects a causal
/// family.
fn power_with(
    decisions: &DecisionSet,
    truth: &TruthMask,
    proximity: Option<&ProximityIndex<'_>>,
) -> (f64, f64, f64) {
    let causal: Vec<(usize, usize)> = truth.false_nulls().collect();

    // rejected variants per phenotype, sorted by locus, for neighbour lookups
    let rejected_near: Option<Vec<Vec<(Locus, usize)>>> = proximity.map(|idx| {
        let mut lists = vec![Vec::new(); truth.n_phenotypes()];
        for h in decisions.rejected() {
            lists[h.phenotype].push((idx.loci[h.variant], h.variant));
        }
        lists.iter_mut().for_each(|l| l.sort_unstable());
        lists
    });
    let selected_sorted: Option<Vec<(Locus, usize)>> = proximity.map(|idx| {
        let mut list: Vec<_> = decisions
            .selected_families()
            .iter()
            .map(|&v| (idx.loci[v], v))
            .collect();
        list.sort_unstable();
        list
    });

    let near = |list: &[(Locus, usize)], idx: &ProximityIndex<'_>, v: usize| {
        let here = idx.loci[v];
        let lo = Locus::new(here.chrom, here.position.saturating_sub(idx.rule.window));
        let start = list.partition_point(|(l, _)| *l < lo);
        list[start..]
            .iter()
            .take_while(|(l, _)| l.chrom == here.chrom && l.position <= here.position + idx.rule.window)
            .any(|&(_, other)| idx.linked(v, other))
    };

    let detected_cells = causal
        .iter()
        .filter(|&&(v, t)| match (proximity, &rejected_near) {
            (Some(idx), Some(lists)) => near(&lists[t], idx, v),
            _ => decisions.is_rejected(v, t),
        })
        .count();

    let mut per_family: Vec<(usize, usize)> = Vec::new(); // (variant, causal count)
    for &(v, _) in &causal {
        match per_family.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => per_family.push((v, 1)),
        }
    }
    let family_detected = |v: usize| match (proximity, &selected_sorted) {
        (Some(idx), Some(list)) => near(list, idx, v),
        _ => decisions.is_selected(v),
    };
    let detected_families = per_family.iter().filter(|(v, _)| family_detected(*v)).count();
    let singletons: Vec<usize> = per_family
        .iter()
        .filter(|(_, n)| *n == 1)
        .map(|(v, _)| *v)
        .collect();
    let detected_singletons = singletons.iter().filter(|&&v| family_detected(v)).count();

    let power = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (
        power(detected_cells, causal.len()),
        power(detected_families, per_family.len()),
        power(detected_singletons, singletons.len()),
    )
}

/// Mean and standard error of every metric over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateAggregate {
    n: usize,
    mean: [f64; 10],
    se: [f64; 10],
}

impl ReplicateAggregate {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self, metric: Metric) -> f64 {
        self.mean[metric.index()]
    }

    /// Sample standard deviation over `sqrt(n)`; 0 for a single replicate.
    pub fn se(&self, metric: Metric) -> f64 {
        self.se[metric.index()]
    }
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<ReplicateAggregate> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot aggregate zero replicates"));
    }
    let n = reports.len();
    let mut mean = [0.0; 10];
    let mut se = [0.0; 10];
    for (i, metric) in Metric::ALL.iter().enumerate() {
        let values: Vec<f64> = reports.iter().map(|r| r.get(*metric)).collect();
        let m = values.iter().sum::<f64>() / n as f64;
        mean[i] = m;
        if n > 1 {
            let var = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            se[i] = (var / n as f64).sqrt();
        }
    }
    Ok(ReplicateAggregate { n, mean, se })
}
