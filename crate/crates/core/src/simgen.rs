//! Simulation inputs.
//!
//! Two designs are supported. The independent-test design draws null
//! p-values from Uniform(0, 1) and, for associated cells, a statistic
//! `Z ~ N(mu, sigma^2)` turned into the two-sided p-value under
//! `N(0, sigma^2)`. The LD design draws synthetic genotypes with
//! block-wise AR(1) latent correlation and phenotypes from `Y = X B + E`.
//!
//! Every random stream is a ChaCha8 generator seeded from the base seed and
//! the cell of the experimental grid, so any replicate can be regenerated on
//! its own.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvalues::PValueMatrix;
use crate::special::{normal_quantile, normal_two_sided};
use crate::truth::{Locus, TruthMask, VariantCorrelation};

pub const DEFAULT_NOISE_GRID: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

/// `variants` variants, each associated with `phenotypes` phenotypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct AssociationBlock {
    pub variants: usize,
    pub phenotypes: usize,
}

impl AssociationBlock {
    pub fn new(variants: usize, phenotypes: usize) -> Self {
        Self {
            variants,
            phenotypes,
        }
    }
}

impl From<(usize, usize)> for AssociationBlock {
    fn from((variants, phenotypes): (usize, usize)) -> Self {
        Self::new(variants, phenotypes)
    }
}

impl From<AssociationBlock> for (usize, usize) {
    fn from(b: AssociationBlock) -> Self {
        (b.variants, b.phenotypes)
    }
}

fn default_effect_mean() -> f64 {
    2.0
}

fn default_sigmas() -> Vec<f64> {
    DEFAULT_NOISE_GRID.to_vec()
}

fn default_replicates() -> usize {
    250
}

/// A simulation design for independent tests. Loaded from a flat TOML file:
///
/// ```toml
/// n_variants = 3000
/// n_phenotypes = 100
/// blocks = [[60, 25]]          # (variants, phenotypes per variant)
/// effect_mean = 2.0            # optional, default 2
/// sigmas = [0.5, 1.0, 1.5]     # optional, default 0.5..3.0 by 0.5
/// replicates = 250             # optional
/// seed = 1                     # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_variants: usize,
    pub n_phenotypes: usize,
    #[serde(default)]
    pub blocks: Vec<AssociationBlock>,
    #[serde(default = "default_effect_mean")]
    pub effect_mean: f64,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(n_variants: usize, n_phenotypes: usize, blocks: Vec<AssociationBlock>) -> Self {
        Self {
            n_variants,
            n_phenotypes,
            blocks,
            effect_mean: default_effect_mean(),
            sigmas: default_sigmas(),
            replicates: default_replicates(),
            seed: 0,
        }
    }

    /// 3000 variants, 100 phenotypes, 60 variants with 25 associations each.
    pub fn sparse_pleiotropy() -> Self {
        Self::new(3000, 100, vec![AssociationBlock::new(60, 25)])
    }

    /// 3000 variants, 100 phenotypes, 1500 variants with 5 associations each.
    pub fn dense_weak_pleiotropy() -> Self {
        Self::new(3000, 100, vec![AssociationBlock::new(1500, 5)])
    }

    /// 100,000 variants, 100 phenotypes; 1000 variants x 25 plus 500 singletons.
    pub fn genome_scale() -> Self {
        Self::new(
            100_000,
            100,
            vec![AssociationBlock::new(1000, 25), AssociationBlock::new(500, 1)],
        )
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_sigmas(mut self, sigmas: Vec<f64>) -> Self {
        self.sigmas = sigmas;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_false_nulls(&self) -> usize {
        self.blocks.iter().map(|b| b.variants * b.phenotypes).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_variants == 0 || self.n_phenotypes == 0 {
            return Err(Error::invalid("scenario needs at least one variant and one phenotype"));
        }
        let associated: usize = self.blocks.iter().map(|b| b.variants).sum();
        if associated > self.n_variants {
            return Err(Error::invalid(format!(
                "association blocks use {associated} variants but only {} exist",
                self.n_variants
            )));
        }
        if let Some(b) = self.blocks.iter().find(|b| b.phenotypes > self.n_phenotypes) {
            return Err(Error::invalid(format!(
                "block associates {} phenotypes but only {} exist",
                b.phenotypes, self.n_phenotypes
            )));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("noise level {s} must be positive")));
        }
        if !self.effect_mean.is_finite() {
            return Err(Error::invalid("effect mean must be finite"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("scenario: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: msg,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one (noise level, replicate) cell: `base ^ hash(sigma, replicate)`.
pub fn cell_seed(base_seed: u64, sigma: f64, replicate: usize) -> u64 {
    base_seed ^ splitmix64(splitmix64(sigma.to_bits()) ^ replicate as u64)
}

pub fn cell_rng(base_seed: u64, sigma: f64, replicate: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cell_seed(base_seed, sigma, replicate))
}

/// Picks distinct variants for every block and, for each, a random subset of
/// phenotypes. Phenotype subsets are drawn independently per variant, so
/// they may overlap.
pub fn draw_associations<R: Rng + ?Sized>(
    rng: &mut R,
    n_variants: usize,
    n_phenotypes: usize,
    blocks: &[AssociationBlock],
) -> Vec<(usize, usize)> {
    let total: usize = blocks.iter().map(|b| b.variants).sum();
    let chosen = sample(rng, n_variants, total).into_vec();
    let mut cells = Vec::new();
    let mut next = chosen.into_iter();
    for block in blocks {
        for _ in 0..block.variants {
            let v = next.next().expect("enough variants drawn");
            for t in sample(rng, n_phenotypes, block.phenotypes) {
                cells.push((v, t));
            }
        }
    }
    cells.sort_unstable();
    cells
}

/// One replicate of the independent-test design at noise level `sigma`.
pub fn gen_independent(spec: &ScenarioSpec, sigma: f64, replicate: usize) -> Result<(PValueMatrix, TruthMask)> {
    spec.validate()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level {sigma} must be positive")));
    }
    let (m, p) = (spec.n_variants, spec.n_phenotypes);
    let mut rng = cell_rng(spec.seed, sigma, replicate);

    let cells = draw_associations(&mut rng, m, p, &spec.blocks);
    let mut values: Vec<f64> = (0..m * p).map(|_| rng.random::<f64>()).collect();
    for &(v, t) in &cells {
        let noise: f64 = rng.sample(StandardNormal);
        let z = spec.effect_mean + sigma * noise;
        values[v * p + t] = normal_two_sided(z / sigma);
    }
    let matrix = PValueMatrix::from_dense(m, p, values)?;
    let truth = TruthMask::from_false_nulls(m, p, cells)?;
    Ok((matrix, truth))
}

/// Parameters of the synthetic LD genotype generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdParams {
    pub n_subjects: usize,
    pub n_variants: usize,
    /// Consecutive variants sharing one AR(1) latent chain.
    pub block_size: usize,
    /// AR(1) coefficient of the latent chain, in [0, 1).
    pub rho: f64,
    pub maf_range: (f64, f64),
    /// Base pairs between consecutive variants.
    pub spacing: u64,
    pub seed: u64,
}

impl LdParams {
    pub fn new(n_subjects: usize, n_variants: usize, block_size: usize, rho: f64, seed: u64) -> Self {
        Self {
            n_subjects,
            n_variants,
            block_size,
            rho,
            maf_range: (0.05, 0.5),
            spacing: 10_000,
            seed,
        }
    }

    pub fn with_maf_range(mut self, lo: f64, hi: f64) -> Self {
        self.maf_range = (lo, hi);
        self
    }

    pub fn with_spacing(mut self, spacing: u64) -> Self {
        self.spacing = spacing;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block size must be at least 1"));
        }
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::invalid(format!("MAF range ({lo}, {hi}) not within (0, 0.5]")));
        }
        if self.n_subjects < 2 || self.n_variants == 0 {
            return Err(Error::invalid("need at least two subjects and one variant"));
        }
        Ok(())
    }
}

/// Minor-allele dosages, `n_subjects x n_variants`, stored column-major so
/// each variant is contiguous.
#[derive(Debug, Clone)]
pub struct GenotypeMatrix {
    dosages: Array2<f64>,
    loci: Vec<Locus>,
    maf: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl GenotypeMatrix {
    /// Builds from per-variant columns. `NaN` marks a missing call and is
    /// replaced by the variant's mean dosage.
    pub fn from_columns(n_subjects: usize, columns: Vec<Vec<f64>>, loci: Option<Vec<Locus>>) -> Result<Self> {
        let n_variants = columns.len();
        let mut flat = Vec::with_capacity(n_subjects * n_variants);
        for (v, mut col) in columns.into_iter().enumerate() {
            if col.len() != n_subjects {
                return Err(Error::Dimension(format!(
                    "variant {v} has {} subjects, expected {n_subjects}",
                    col.len()
                )));
            }
            impute_mean(&mut col);
            if let Some(i) = col.iter().position(|x| !(0.0..=2.0).contains(x)) {
                return Err(Error::invalid(format!(
                    "dosage {} for subject {i}, variant {v} outside [0, 2]",
                    col[i]
                )));
            }
            flat.extend(col);
        }
        let dosages = Array2::from_shape_vec((n_subjects, n_variants).f(), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let loci = match loci {
            Some(l) if l.len() != n_variants => {
                return Err(Error::Dimension(format!("{} loci for {n_variants} variants", l.len())));
            }
            Some(l) => l,
            None => (0..n_variants).map(|v| Locus::new(1, v as u64)).collect(),
        };
        Ok(Self::with_stats(dosages, loci))
    }

    fn with_stats(dosages: Array2<f64>, loci: Vec<Locus>) -> Self {
        let n = dosages.nrows() as f64;
        let (mut mean, mut sd, mut maf) = (Vec::new(), Vec::new(), Vec::new());
        for col in dosages.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let freq = m / 2.0;
            mean.push(m);
            sd.push(var.sqrt());
            maf.push(freq.min(1.0 - freq));
        }
        Self {
            dosages,
            loci,
            maf,
            mean,
            sd,
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.dosages.nrows()
    }

    pub fn n_variants(&self) -> usize {
        self.dosages.ncols()
    }

    pub fn dosages(&self) -> &Array2<f64> {
        &self.dosages
    }

    pub fn column(&self, variant: usize) -> ArrayView1<'_, f64> {
        self.dosages.column(variant)
    }

    pub fn loci(&self) -> &[Locus] {
        &self.loci
    }

    /// Observed minor allele frequency per variant.
    pub fn maf(&self) -> &[f64] {
        &self.maf
    }

    /// Sample Pearson correlation between two variants; 0 if either is
    /// monomorphic.
    pub fn correlation(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let (sa, sb) = (self.sd[a], self.sd[b]);
        if sa == 0.0 || sb == 0.0 {
            return 0.0;
        }
        let (ma, mb) = (self.mean[a], self.mean[b]);
        let cov = self
            .column(a)
            .iter()
            .zip(self.column(b).iter())
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / self.n_subjects() as f64;
        cov / (sa * sb)
    }
}

impl VariantCorrelation for GenotypeMatrix {
    fn correlation(&self, a: usize, b: usize) -> f64 {
        GenotypeMatrix::correlation(self, a, b)
    }
}

pub(crate) fn impute_mean(col: &mut [f64]) {
    let (sum, count) = col
        .iter()
        .filter(|x| !x.is_nan())
        .fold((0.0, 0usize), |(s, c), &x| (s + x, c + 1));
    let fill = if count == 0 { 0.0 } else { sum / count as f64 };
    col.iter_mut().filter(|x| x.is_nan()).for_each(|x| *x = fill);
}

/// Synthetic genotypes with linkage disequilibrium inside blocks of
/// consecutive variants. A latent standard normal per subject follows an
/// AR(1) chain along each block and is cut into 0/1/2 at the Hardy–Weinberg
/// quantiles of the variant's MAF.
pub fn gen_genotypes_ld(params: &LdParams) -> Result<GenotypeMatrix> {
    params.validate()?;
    let (n, m) = (params.n_subjects, params.n_variants);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let innovation = (1.0 - params.rho * params.rho).sqrt();
    let (lo, hi) = params.maf_range;

    let mut latent = vec![0.0f64; n];
    let mut flat = Vec::with_capacity(n * m);
    for v in 0..m {
        let fresh = v % params.block_size == 0;
        for z in latent.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *z = if fresh { e } else { params.rho * *z + innovation * e };
        }
        let maf = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let cut_low = normal_quantile((1.0 - maf) * (1.0 - maf));
        let cut_high = normal_quantile(1.0 - maf * maf);
        flat.extend(latent.iter().map(|&z| {
            if z < cut_low {
                0.0
            } else if z > cut_high {
                2.0
            } else {
                1.0
            }
        }));
    }
    let dosages = Array2::from_shape_vec((n, m).f(), flat).expect("shape matches");
    let loci = (0..m)
        .map(|v| Locus::new(1, v as u64 * params.spacing))
        .collect();
    Ok(GenotypeMatrix::with_stats(dosages, loci))
}

/// Sparse effect sizes `B` (variants x phenotypes).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectMap {
    n_variants: usize,
    n_phenotypes: usize,
    /// `(variant, phenotype, effect)`, sorted variant-major.
    entries: Vec<(usize, usize, f64)>,
}

impl EffectMap {
    pub fn new(n_variants: usize, n_phenotypes: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(v, t, b) in &entries {
            if v >= n_variants || t >= n_phenotypes {
                return Err(Error::IndexOutOfBounds {
                    variant: v,
                    phenotype: t,
                    n_variants,
                    n_phenotypes,
                });
            }
            if !b.is_finite() {
                return Err(Error::invalid(format!("effect at ({v}, {t}) is not finite")));
            }
        }
        entries.sort_unstable_by_key(|&(v, t, _)| (v, t));
        if entries.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::invalid("duplicate effect entry"));
        }
        Ok(Self {
            n_variants,
            n_phenotypes,
            entries,
        })
    }

    /// Random pleiotropic composition: distinct variants per block, each
    /// affecting a random subset of phenotypes with effect `effect`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n_variants: usize,
        n_phenotypes: usize,
        blocks: &[AssociationBlock],
        effect: f64,
    ) -> Result<Self> {
        let associated: usize = blocks.iter().map(|b| b.variants).sum();
        if associated > n_variants || blocks.iter().any(|b| b.phenotypes > n_phenotypes) {
            return Err(Error::invalid("effect composition does not fit the dimensions"));
        }
        let cells = draw_associations(rng, n_variants, n_phenotypes, blocks);
        Self::new(
            n_variants,
            n_phenotypes,
            cells.into_iter().map(|(v, t)| (v, t, effect)).collect(),
        )
    }

    pub fn n_variants(&self) -> usize {
        self.n_variants
    }

    pub fn n_phenotypes(&self) -> usize {
        self.n_phenotypes
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Effects of one variant (a row of B).
    pub fn row(&self, variant: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.entries.partition_point(|e| e.0 < variant);
        self.entries[lo..]
            .iter()
            .take_while(move |e| e.0 == variant)
            .map(|&(_, t, b)| (t, b))
    }

    /// Effects on one phenotype (a column of B).
    pub fn column(&self, phenotype: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.1 == phenotype)
            .map(|&(v, _, b)| (v, b))
    }

    /// Truth mask marking the nonzero effects as false nulls.
    pub fn truth(&self) -> Result<TruthMask> {
        TruthMask::from_false_nulls(
            self.n_variants,
            self.n_phenotypes,
            self.entries.iter().filter(|e| e.2 != 0.0).map(|&(v, t, _)| (v, t)),
        )
    }
}

/// Phenotypes, `n_subjects x n_phenotypes`, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeMatrix {
    values: Array2<f64>,
}

impl PhenotypeMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_phenotypes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

/// `Y = X B + E` with `E` i.i.d. `N(0, sigma^2)`.
pub fn gen_phenotypes(genotypes: &GenotypeMatrix, effects: &EffectMap, sigma: f64, seed: u64) -> Result<PhenotypeMatrix> {
    if effects.n_variants() != genotypes.n_variants() {
        return Err(Error::Dimension(format!(
            "effects cover {} variants, genotypes {}",
            effects.n_variants(),
            genotypes.n_variants()
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level {sigma} must be non-negative")));
    }
    let n = genotypes.n_subjects();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<f64> = (0..n * effects.n_phenotypes())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut y = Array2::from_shape_vec((n, effects.n_phenotypes()).f(), flat).expect("shape matches");
    for &(v, t, b) in effects.entries() {
        y.column_mut(t).scaled_add(b, &genotypes.column(v));
    }
    Ok(PhenotypeMatrix::new(y))
}
