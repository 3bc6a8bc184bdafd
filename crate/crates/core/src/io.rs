//! Tab-separated file formats.
//!
//! P-value files carry optional `# key=value` metadata lines followed by a
//! header and one row per stored hypothesis:
//!
//! ```text
//! # n_variants=3000
//! # n_phenotypes=100
//! # save_threshold=0.0005
//! variant_id    phenotype_id    p_value
//! rs123    height    1.2e-7
//! ```
//!
//! Identifiers are arbitrary strings, indexed in order of first appearance.
//! Without `save_threshold` the file is dense and must list every pair. With
//! it, unlisted pairs are censored; variants or phenotypes that never appear
//! are padded up to the declared counts with placeholder identifiers.
//!
//! Numbers are written in Rust's shortest round-trip form, so writing is
//! deterministic and reading back reproduces every value bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::decision::DecisionSet;
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricsReport, ReplicateAggregate};
use crate::pvalues::{Hypothesis, PValueMatrix};
use crate::truth::{Locus, TruthMask};

pub const PVALUE_HEADER: &str = "variant_id\tphenotype_id\tp_value";
pub const TRUTH_HEADER: &str = "variant_id\tphenotype_id";
pub const LOCI_HEADER: &str = "variant_id\tchrom\tposition";
pub const SELECTED_HEADER: &str = "variant_id\tglobal_p";
pub const REJECTIONS_HEADER: &str = "variant_id\tphenotype_id\tp_value";
pub const BENCH_HEADER: &str = "sigma,strategy,metric,mean,se";
pub const METRICS_HEADER: &str = "metric,value";

/// String identifiers indexed by first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdIndex {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// `prefix0, prefix1, ...`.
    pub fn numbered(prefix: &str, n: usize) -> Self {
        let mut ids = Self::new();
        for i in 0..n {
            ids.intern(&format!("{prefix}{i}"));
        }
        ids
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut ids = Self::new();
        for name in names {
            if ids.lookup.contains_key(&name) {
                return Err(Error::invalid(format!("duplicate identifier '{name}'")));
            }
            ids.intern(&name);
        }
        Ok(ids)
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.lookup.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Adds `unlisted_<k>` placeholders until there are `n` identifiers.
    fn pad_to(&mut self, n: usize) {
        let mut k = 0;
        while self.len() < n {
            let name = format!("unlisted_{k}");
            if self.get(&name).is_none() {
                self.intern(&name);
            }
            k += 1;
        }
    }
}

/// A p-value matrix with the identifiers of its rows and columns.
#[derive(Debug, Clone)]
pub struct LabeledPValues {
    pub matrix: PValueMatrix,
    pub variants: IdIndex,
    pub phenotypes: IdIndex,
}

/// Overrides for metadata that a p-value file may omit.
#[derive(Debug, Clone, Copy, Default)]
pub struct PValueReadOptions {
    pub n_variants: Option<usize>,
    pub n_phenotypes: Option<usize>,
    pub save_threshold: Option<f64>,
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::io::Lines<BufReader<fs::File>>>,
}

impl<'a> Lines<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path,
            inner: BufReader::new(file).lines().enumerate(),
        })
    }

    fn parse_err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

impl Iterator for Lines<'_> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (i, line) = self.inner.next()?;
            match line {
                Err(e) => return Some(Err(Error::io(self.path, e))),
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some(Ok((i + 1, l.trim_end_matches('\r').to_owned()))),
            }
        }
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<'_>, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| lines.parse_err(line, format!("cannot parse {what} '{field}'")))
}

fn expect_header(lines: &Lines<'_>, line: usize, got: &str, want: &str) -> Result<()> {
    if got.split('\t').map(str::trim).eq(want.split('\t')) {
        Ok(())
    } else {
        Err(lines.parse_err(line, format!("expected header '{}'", want.replace('\t', "<TAB>"))))
    }
}

fn split_fields<'l>(lines: &Lines<'_>, line: usize, text: &'l str, n: usize) -> Result<Vec<&'l str>> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != n {
        return Err(lines.parse_err(line, format!("expected {n} tab-separated fields, found {}", fields.len())));
    }
    Ok(fields)
}

pub fn read_pvalues(path: &Path, options: PValueReadOptions) -> Result<LabeledPValues> {
    let mut lines = Lines::open(path)?;
    let mut meta = options;
    let mut header_seen = false;
    let mut variants = IdIndex::new();
    let mut phenotypes = IdIndex::new();
    let mut triples = Vec::new();

    while let Some(item) = lines.next() {
        let (no, text) = item?;
        if let Some(rest) = text.strip_prefix('#') {
            if header_seen {
                continue;
            }
            let Some((key, value)) = rest.split_once('=') else {
                continue;
            };
            let value = value.trim();
            match key.trim() {
                "n_variants" => meta.n_variants = meta.n_variants.or(Some(parse_num(&lines, no, value, "n_variants")?)),
                "n_phenotypes" => {
                    meta.n_phenotypes = meta.n_phenotypes.or(Some(parse_num(&lines, no, value, "n_phenotypes")?))
                }
                "save_threshold" => {
                    meta.save_threshold = meta.save_threshold.or(Some(parse_num(&lines, no, value, "save_threshold")?))
                }
                _ => {}
            }
            continue;
        }
        if !header_seen {
            expect_header(&lines, no, &text, PVALUE_HEADER)?;
            header_seen = true;
            continue;
        }
        let f = split_fields(&lines, no, &text, 3)?;
        let p: f64 = parse_num(&lines, no, f[2], "p-value")?;
        triples.push((variants.intern(f[0].trim()), phenotypes.intern(f[1].trim()), p));
    }
    if !header_seen {
        return Err(lines.parse_err(0, "missing header line"));
    }

    for (declared, ids, what) in [
        (meta.n_variants, &mut variants, "variants"),
        (meta.n_phenotypes, &mut phenotypes, "phenotypes"),
    ] {
        if let Some(n) = declared {
            if ids.len() > n {
                return Err(lines.parse_err(0, format!("{} distinct {what} but n_{what}={n}", ids.len())));
            }
            ids.pad_to(n);
        }
    }
    let (m, p) = (variants.len(), phenotypes.len());
    let matrix = match meta.save_threshold {
        Some(threshold) => PValueMatrix::from_sparse(triples, m, p, threshold)?,
        None => {
            let mut values = vec![f64::NAN; m * p];
            for (v, t, pv) in triples {
                let cell = &mut values[v * p + t];
                if !cell.is_nan() {
                    return Err(Error::DuplicateEntry {
                        variant: v,
                        phenotype: t,
                    });
                }
                if pv.is_nan() {
                    return Err(Error::MissingValue {
                        variant: v,
                        phenotype: t,
                    });
                }
                *cell = pv;
            }
            PValueMatrix::from_dense(m, p, values)?
        }
    };
    Ok(LabeledPValues {
        matrix,
        variants,
        phenotypes,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn check_ids(matrix_dims: (usize, usize), variants: &IdIndex, phenotypes: &IdIndex) -> Result<()> {
    if variants.len() != matrix_dims.0 || phenotypes.len() != matrix_dims.1 {
        return Err(Error::Dimension(format!(
            "{} variant and {} phenotype ids for a {}x{} matrix",
            variants.len(),
            phenotypes.len(),
            matrix_dims.0,
            matrix_dims.1
        )));
    }
    Ok(())
}

/// Writes a matrix: every entry when dense, stored entries when censored.
pub fn write_pvalues(path: &Path, matrix: &PValueMatrix, variants: &IdIndex, phenotypes: &IdIndex) -> Result<()> {
    check_ids((matrix.n_variants(), matrix.n_phenotypes()), variants, phenotypes)?;
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# n_variants={}", matrix.n_variants())?;
        writeln!(w, "# n_phenotypes={}", matrix.n_phenotypes())?;
        if let Some(thr) = matrix.save_threshold() {
            writeln!(w, "# save_threshold={thr}")?;
        }
        writeln!(w, "{PVALUE_HEADER}")?;
        for (v, t, p) in matrix.observed() {
            writeln!(w, "{}\t{}\t{p}", variants.name(v), phenotypes.name(t))?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Writes the false nulls of `truth`, variant-major.
pub fn write_truth(path: &Path, truth: &TruthMask, variants: &IdIndex, phenotypes: &IdIndex) -> Result<()> {
    check_ids((truth.n_variants(), truth.n_phenotypes()), variants, phenotypes)?;
    let mut text = format!("{TRUTH_HEADER}\n");
    for (v, t) in truth.false_nulls() {
        let _ = writeln!(text, "{}\t{}", variants.name(v), phenotypes.name(t));
    }
    write_text(path, &text)
}

/// Reads false nulls against known identifiers.
pub fn read_truth(path: &Path, variants: &IdIndex, phenotypes: &IdIndex) -> Result<TruthMask> {
    let mut lines = Lines::open(path)?;
    let mut truth = TruthMask::all_null(variants.len(), phenotypes.len());
    let mut header_seen = false;
    while let Some(item) = lines.next() {
        let (no, text) = item?;
        if text.starts_with('#') {
            continue;
        }
        if !header_seen {
            expect_header(&lines, no, &text, TRUTH_HEADER)?;
            header_seen = true;
            continue;
        }
        let f = split_fields(&lines, no, &text, 2)?;
        let v = variants
            .get(f[0].trim())
            .ok_or_else(|| lines.parse_err(no, format!("unknown variant '{}'", f[0])))?;
        let t = phenotypes
            .get(f[1].trim())
            .ok_or_else(|| lines.parse_err(no, format!("unknown phenotype '{}'", f[1])))?;
        truth.set_false_null(v, t)?;
    }
    Ok(truth)
}

pub fn write_loci(path: &Path, loci: &[Locus], variants: &IdIndex) -> Result<()> {
    if loci.len() != variants.len() {
        return Err(Error::Dimension(format!("{} loci for {} variants", loci.len(), variants.len())));
    }
    let mut text = format!("{LOCI_HEADER}\n");
    for (v, l) in loci.iter().enumerate() {
        let _ = writeln!(text, "{}\t{}\t{}", variants.name(v), l.chrom, l.position);
    }
    write_text(path, &text)
}

/// Reads one locus per known variant; every variant must be listed.
pub fn read_loci(path: &Path, variants: &IdIndex) -> Result<Vec<Locus>> {
    let mut lines = Lines::open(path)?;
    let mut loci: Vec<Option<Locus>> = vec![None; variants.len()];
    let mut header_seen = false;
    while let Some(item) = lines.next() {
        let (no, text) = item?;
        if text.starts_with('#') {
            continue;
        }
        if !header_seen {
            expect_header(&lines, no, &text, LOCI_HEADER)?;
            header_seen = true;
            continue;
        }
        let f = split_fields(&lines, no, &text, 3)?;
        let Some(v) = variants.get(f[0].trim()) else {
            continue;
        };
        loci[v] = Some(Locus::new(
            parse_num(&lines, no, f[1], "chromosome")?,
            parse_num(&lines, no, f[2], "position")?,
        ));
    }
    loci.into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| lines.parse_err(0, format!("no locus for variant '{}'", variants.name(v)))))
        .collect()
}

/// Writes `selected.tsv` (selected variants and their global p-values) and
/// `rejections.tsv` (rejected pairs with their p-values) into `dir`.
pub fn write_decisions(
    dir: &Path,
    decisions: &DecisionSet,
    global_pvalues: Option<&[f64]>,
    labeled: &LabeledPValues,
) -> Result<()> {
    let mut selected = format!("{SELECTED_HEADER}\n");
    for &v in decisions.selected_families() {
        let g = global_pvalues.map_or(String::from("NA"), |g| g[v].to_string());
        let _ = writeln!(selected, "{}\t{g}", labeled.variants.name(v));
    }
    write_text(&dir.join("selected.tsv"), &selected)?;

    let mut rejections = format!("# stage2_level={}\n{REJECTIONS_HEADER}\n", decisions.stage2_level());
    for h in decisions.rejected() {
        let p = labeled.matrix.get(h.variant, h.phenotype).value().expect("rejected pairs are observed");
        let _ = writeln!(
            rejections,
            "{}\t{}\t{p}",
            labeled.variants.name(h.variant),
            labeled.phenotypes.name(h.phenotype)
        );
    }
    write_text(&dir.join("rejections.tsv"), &rejections)
}

/// Reads decisions written by [`write_decisions`].
pub fn read_decisions(dir: &Path, variants: &IdIndex, phenotypes: &IdIndex) -> Result<DecisionSet> {
    let mut selected = Vec::new();
    let path = dir.join("selected.tsv");
    let mut lines = Lines::open(&path)?;
    let mut header_seen = false;
    while let Some(item) = lines.next() {
        let (no, text) = item?;
        if !header_seen {
            expect_header(&lines, no, &text, SELECTED_HEADER)?;
            header_seen = true;
            continue;
        }
        let f = split_fields(&lines, no, &text, 2)?;
        selected.push(
            variants
                .get(f[0].trim())
                .ok_or_else(|| lines.parse_err(no, format!("unknown variant '{}'", f[0])))?,
        );
    }

    let path = dir.join("rejections.tsv");
    let mut lines = Lines::open(&path)?;
    let mut rejected = Vec::new();
    let mut level = 0.0;
    let mut header_seen = false;
    while let Some(item) = lines.next() {
        let (no, text) = item?;
        if let Some(rest) = text.strip_prefix('#') {
            if let Some(("stage2_level", value)) = rest.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                level = parse_num(&lines, no, value, "stage2_level")?;
            }
            continue;
        }
        if !header_seen {
            expect_header(&lines, no, &text, REJECTIONS_HEADER)?;
            header_seen = true;
            continue;
        }
        let f = split_fields(&lines, no, &text, 3)?;
        let v = variants
            .get(f[0].trim())
            .ok_or_else(|| lines.parse_err(no, format!("unknown variant '{}'", f[0])))?;
        let t = phenotypes
            .get(f[1].trim())
            .ok_or_else(|| lines.parse_err(no, format!("unknown phenotype '{}'", f[1])))?;
        rejected.push(Hypothesis::new(v, t));
    }
    DecisionSet::new(variants.len(), phenotypes.len(), rejected, selected, level)
}

/// One `metric,value` row per metric.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut text = format!("{METRICS_HEADER}\n");
    for metric in Metric::ALL {
        let _ = writeln!(text, "{},{}", metric.name(), report.get(metric));
    }
    text
}

/// One row of the long-format benchmark summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sigma: f64,
    pub strategy: String,
    pub metric: Metric,
    pub mean: f64,
    pub se: f64,
}

/// Expands one (sigma, strategy) aggregate into a row per metric.
pub fn bench_rows(sigma: f64, strategy: &str, agg: &ReplicateAggregate) -> Vec<BenchRow> {
    Metric::ALL
        .iter()
        .map(|&metric| BenchRow {
            sigma,
            strategy: strategy.to_owned(),
            metric,
            mean: agg.mean(metric),
            se: agg.se(metric),
        })
        .collect()
}

/// `sigma,strategy,metric,mean,se`, one row per cell and metric.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut text = format!("{BENCH_HEADER}\n");
    for r in rows {
        let _ = writeln!(text, "{},{},{},{},{}", r.sigma, r.strategy, r.metric.name(), r.mean, r.se);
    }
    text
}

pub fn write_csv(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

/// A numeric table: subjects in rows, named columns.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub row_ids: Vec<String>,
    pub columns: IdIndex,
    /// `n_rows x n_columns`; missing cells are `NaN`.
    pub values: Array2<f64>,
}

/// Reads a subjects-by-columns TSV. The first line is a header whose first
/// cell labels the subject column; `NA`, `NaN` and empty cells are missing.
pub fn read_numeric_table(path: &Path) -> Result<NumericTable> {
    let mut lines = Lines::open(path)?;
    let mut columns: Option<IdIndex> = None;
    let mut row_ids = Vec::new();
    let mut flat = Vec::new();
    while let Some(item) = lines.next() {
        let (no, text) = item?;
        if text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        let Some(cols) = &columns else {
            if fields.len() < 2 {
                return Err(lines.parse_err(no, "header needs a subject column and at least one data column"));
            }
            columns = Some(
                IdIndex::from_names(fields[1..].iter().map(|s| s.trim().to_owned()))
                    .map_err(|e| lines.parse_err(no, e.to_string()))?,
            );
            continue;
        };
        if fields.len() != cols.len() + 1 {
            return Err(lines.parse_err(
                no,
                format!("expected {} fields, found {}", cols.len() + 1, fields.len()),
            ));
        }
        row_ids.push(fields[0].trim().to_owned());
        for f in &fields[1..] {
            let f = f.trim();
            let x = if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                parse_num(&lines, no, f, "number")?
            };
            flat.push(x);
        }
    }
    let columns = columns.ok_or_else(|| lines.parse_err(0, "empty table"))?;
    let values = Array2::from_shape_vec((row_ids.len(), columns.len()), flat)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(NumericTable {
        row_ids,
        columns,
        values,
    })
}

pub fn write_numeric_table(path: &Path, subject_label: &str, table: &NumericTable) -> Result<()> {
    let mut text = String::from(subject_label);
    for c in table.columns.names() {
        let _ = write!(text, "\t{c}");
    }
    text.push('\n');
    for (i, row) in table.values.rows().into_iter().enumerate() {
        text.push_str(&table.row_ids[i]);
        for x in row {
            if x.is_nan() {
                text.push_str("\tNA");
            } else {
                let _ = write!(text, "\t{x}");
            }
        }
        text.push('\n');
    }
    write_text(path, &text)
}
