//! Batched univariate association scan.
//!
//! Genotypes and phenotypes are residualized on `[1, covariates]`, scaled to
//! unit norm, and correlated by block matrix products. Each correlation `r`
//! becomes `t = r sqrt(df) / sqrt(1 - r^2)` with `df = n - 2 - k`, which is
//! exactly the slope t-statistic of the per-pair regression with the same
//! covariates. Only p-values at or below the save threshold are kept.

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis, ShapeBuilder};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pvalues::PValueMatrix;
use crate::simgen::GenotypeMatrix;
use crate::special::t_two_sided;

/// Relative residual norm under which a column counts as constant.
const ZERO_VARIANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub save_threshold: f64,
    /// `n_subjects x k` covariates; an intercept is always added.
    pub covariates: Option<Array2<f64>>,
    /// Scale residual columns to unit norm before the products. P-values do
    /// not depend on it; it only improves the conditioning of the products.
    pub standardize: bool,
    /// Variants per matrix-product block.
    pub block_size: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            save_threshold: 5e-4,
            covariates: None,
            standardize: true,
            block_size: 512,
        }
    }
}

impl ScanConfig {
    pub fn with_threshold(mut self, save_threshold: f64) -> Self {
        self.save_threshold = save_threshold;
        self
    }

    pub fn with_covariates(mut self, covariates: Array2<f64>) -> Self {
        self.covariates = Some(covariates);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.save_threshold > 0.0 && self.save_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "save threshold {} outside (0, 1]",
                self.save_threshold
            )));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block size must be at least 1"));
        }
        Ok(())
    }

    fn n_covariates(&self) -> usize {
        self.covariates.as_ref().map_or(0, |c| c.ncols())
    }
}

/// Orthonormal basis of `span{1, covariates}` by modified Gram–Schmidt.
fn covariate_basis(n: usize, covariates: Option<ArrayView2<'_, f64>>) -> Result<Array2<f64>> {
    let k = covariates.map_or(0, |c| c.ncols());
    if let Some(c) = covariates {
        if c.nrows() != n {
            return Err(Error::Dimension(format!("covariates have {} rows, data {n}", c.nrows())));
        }
    }
    if n <= k + 2 {
        return Err(Error::invalid(format!("{n} subjects is too few for {k} covariates")));
    }
    let mut q = Array2::<f64>::zeros((n, k + 1).f());
    q.column_mut(0).fill(1.0 / (n as f64).sqrt());
    for j in 0..k {
        let mut col = covariates.unwrap().column(j).to_owned();
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("covariate {j} has non-finite values")));
        }
        let scale = col.dot(&col).sqrt();
        for _pass in 0..2 {
            for i in 0..=j {
                let qi = q.column(i);
                let proj = qi.dot(&col);
                col.scaled_add(-proj, &qi);
            }
        }
        let norm = col.dot(&col).sqrt();
        if norm <= ZERO_VARIANCE_TOL * scale.max(f64::MIN_POSITIVE) || norm == 0.0 {
            return Err(Error::RankDeficient(j));
        }
        col /= norm;
        q.column_mut(j + 1).assign(&col);
    }
    Ok(q)
}

fn project_out(q: &Array2<f64>, data: &mut Array2<f64>) {
    // two passes keep the residual orthogonal to working precision
    for _ in 0..2 {
        let coef = q.t().dot(data);
        *data -= &q.dot(&coef);
    }
}

/// `data` minus its least-squares projection on `span{1, covariates}`.
pub fn residualize(data: &Array2<f64>, covariates: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    let q = covariate_basis(data.nrows(), covariates.map(|c| c.view()))?;
    let mut out = data.to_owned();
    project_out(&q, &mut out);
    Ok(out)
}

/// Residualizes and scales the columns of `data` to unit norm in place.
/// Returns the indices of columns with no variance left; those are zeroed.
fn prepare(q: &Array2<f64>, data: &mut Array2<f64>, standardize: bool) -> (Vec<f64>, Vec<usize>) {
    let raw: Vec<f64> = data.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    project_out(q, data);
    let mut norms = Vec::with_capacity(data.ncols());
    let mut constant = Vec::new();
    for (j, mut col) in data.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm <= ZERO_VARIANCE_TOL * raw[j] || norm == 0.0 {
            col.fill(0.0);
            constant.push(j);
            norms.push(0.0);
        } else {
            if standardize {
                col /= norm;
            }
            norms.push(norm);
        }
    }
    (norms, constant)
}

/// Phenotype side of a scan, prepared once and shared across variant blocks.
struct Prepared {
    q: Array2<f64>,
    y: Array2<f64>,
    y_norms: Vec<f64>,
    df: f64,
    standardize: bool,
}

impl Prepared {
    fn new(genotypes: &GenotypeMatrix, phenotypes: &Array2<f64>, config: &ScanConfig) -> Result<(Self, Vec<usize>)> {
        config.validate()?;
        let n = genotypes.n_subjects();
        if phenotypes.nrows() != n {
            return Err(Error::Dimension(format!(
                "genotypes have {n} subjects, phenotypes {}",
                phenotypes.nrows()
            )));
        }
        if let Some((i, _)) = phenotypes.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let (row, col) = (i / phenotypes.ncols(), i % phenotypes.ncols());
            return Err(Error::invalid(format!("phenotype value at subject {row}, column {col} is not finite")));
        }
        let q = covariate_basis(n, config.covariates.as_ref().map(|c| c.view()))?;
        let mut y = Array2::zeros(phenotypes.raw_dim().f());
        y.assign(phenotypes);
        let (y_norms, constant) = prepare(&q, &mut y, config.standardize);
        let df = (n - 2 - config.n_covariates()) as f64;
        Ok((
            Self {
                q,
                y,
                y_norms,
                df,
                standardize: config.standardize,
            },
            constant,
        ))
    }

    /// Correlations of variants `range` with every phenotype, plus the
    /// variants in the block found constant after residualization.
    fn block(&self, genotypes: &GenotypeMatrix, lo: usize, hi: usize) -> (Array2<f64>, Vec<usize>) {
        let mut x = genotypes.dosages().slice(s![.., lo..hi]).to_owned();
        let (x_norms, constant) = prepare(&self.q, &mut x, self.standardize);
        let mut r = x.t().dot(&self.y);
        if !self.standardize {
            for (i, mut row) in r.axis_iter_mut(Axis(0)).enumerate() {
                for (t, v) in row.iter_mut().enumerate() {
                    let d = x_norms[i] * self.y_norms[t];
                    *v = if d == 0.0 { 0.0 } else { *v / d };
                }
            }
        }
        r.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        (r, constant.into_iter().map(|j| j + lo).collect())
    }

    fn t_stat(&self, r: f64) -> f64 {
        let one_minus = 1.0 - r * r;
        // below this, 1 - r^2 is rounding error of an exact fit
        if one_minus <= 64.0 * f64::EPSILON {
            return f64::INFINITY.copysign(r);
        }
        r * self.df.sqrt() / one_minus.sqrt()
    }
}

fn blocks(n_variants: usize, block_size: usize) -> Vec<(usize, usize)> {
    (0..n_variants)
        .step_by(block_size)
        .map(|lo| (lo, (lo + block_size).min(n_variants)))
        .collect()
}

/// Dense slope t-statistics, `n_variants x n_phenotypes`.
pub fn t_statistics(genotypes: &GenotypeMatrix, phenotypes: &Array2<f64>, config: &ScanConfig) -> Result<Array2<f64>> {
    let (prep, _) = Prepared::new(genotypes, phenotypes, config)?;
    let mut out = Array2::zeros((genotypes.n_variants(), phenotypes.ncols()));
    for (lo, hi) in blocks(genotypes.n_variants(), config.block_size) {
        let (r, _) = prep.block(genotypes, lo, hi);
        out.slice_mut(s![lo..hi, ..]).assign(&r.mapv(|v| prep.t_stat(v)));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub pvalues: PValueMatrix,
    /// Variants with no variance after residualization; their p-values are 1.
    pub constant_variants: Vec<usize>,
    /// Phenotypes with no variance after residualization; p-values are 1.
    pub constant_phenotypes: Vec<usize>,
}

/// Smallest `|r|` whose p-value can be at or below `threshold`, slightly
/// loosened; candidates above it are confirmed with the exact p-value.
fn correlation_screen(threshold: f64, df: f64) -> f64 {
    if threshold >= 1.0 {
        return 0.0;
    }
    let p_of = |r: f64| t_two_sided(r * df.sqrt() / (1.0 - r * r).sqrt(), df);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if p_of(mid) <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo * (1.0 - 1e-9)
}

/// Runs the scan and keeps the pairs with `p <= save_threshold`. A p-value
/// of exactly 0 is stored as the smallest positive double. A threshold of 1
/// censors nothing and yields a dense matrix.
pub fn scan_assoc(genotypes: &GenotypeMatrix, phenotypes: &Array2<f64>, config: &ScanConfig) -> Result<ScanOutput> {
    let started = Instant::now();
    let (prep, constant_phenotypes) = Prepared::new(genotypes, phenotypes, config)?;
    for &t in &constant_phenotypes {
        log::warn!("phenotype {t} has zero variance after residualization; its p-values are set to 1");
    }
    let threshold = config.save_threshold;
    let screen = correlation_screen(threshold, prep.df);
    let n_phenotypes = phenotypes.ncols();

    // per block: stored (v, t, p) triples and constant variants
    type Chunk = (Vec<(usize, usize, f64)>, Vec<usize>);
    let chunks: Vec<Chunk> = blocks(genotypes.n_variants(), config.block_size)
        .into_par_iter()
        .map(|(lo, hi)| {
            let (r, constant) = prep.block(genotypes, lo, hi);
            let mut kept = Vec::new();
            for (i, row) in r.axis_iter(Axis(0)).enumerate() {
                for (t, &rv) in row.iter().enumerate() {
                    if rv.abs() < screen {
                        continue;
                    }
                    let p = t_two_sided(prep.t_stat(rv), prep.df);
                    if p <= threshold {
                        kept.push((lo + i, t, if p == 0.0 { f64::from_bits(1) } else { p }));
                    }
                }
            }
            (kept, constant)
        })
        .collect();

    let mut triples = Vec::new();
    let mut constant_variants = Vec::new();
    for (kept, constant) in chunks {
        triples.extend(kept);
        constant_variants.extend(constant);
    }
    for &v in &constant_variants {
        log::warn!("variant {v} has zero variance after residualization; its p-values are set to 1");
    }
    let stored = triples.len();
    let pvalues = if threshold >= 1.0 {
        // nothing is censored: hand back a dense matrix
        let mut values = vec![1.0; genotypes.n_variants() * n_phenotypes];
        for (v, t, p) in triples {
            values[v * n_phenotypes + t] = p;
        }
        PValueMatrix::from_dense(genotypes.n_variants(), n_phenotypes, values)?
    } else {
        PValueMatrix::from_sparse(triples, genotypes.n_variants(), n_phenotypes, threshold)?
    };
    log::info!(
        "scanned {} x {} pairs in {:.2?}; stored {stored} entries at p <= {threshold}",
        genotypes.n_variants(),
        n_phenotypes,
        started.elapsed()
    );
    Ok(ScanOutput {
        pvalues,
        constant_variants,
        constant_phenotypes,
    })
}
