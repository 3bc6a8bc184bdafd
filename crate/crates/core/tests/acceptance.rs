//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use hierfdr::bench::{run_bench, run_ld_bench, BenchCell, LdScenario};
use hierfdr::combine::simes;
use hierfdr::hier::run_hierarchical;
use hierfdr::mtp::{bh, bonferroni, by};
use hierfdr::scan::{scan_assoc, t_statistics, ScanConfig};
use hierfdr::simgen::{GenotypeMatrix, ScenarioSpec};
use hierfdr::{
    evaluate, DecisionSet, Hypothesis, Metric, PValueMatrix, ProximityRule, Strategy, StrategySpec, TruthMask,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const Q: f64 = 0.05;

/// Collects the individual checks of one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

fn controlled(cell: &BenchCell, metric: Metric) -> bool {
    cell.aggregate.mean(metric) <= Q + 2.0 * cell.aggregate.se(metric)
}

fn cell<'a>(cells: &'a [BenchCell], sigma: f64, strategy: Strategy) -> &'a BenchCell {
    cells
        .iter()
        .find(|c| c.sigma == sigma && c.strategy.strategy == strategy)
        .expect("cell present")
}

fn describe(cell: &BenchCell, metric: Metric) -> String {
    format!(
        "{} {} at sigma {}: {:.4} +- {:.4}",
        cell.strategy.strategy,
        metric.name(),
        cell.sigma,
        cell.aggregate.mean(metric),
        cell.aggregate.se(metric)
    )
}

// ---------------------------------------------------------------------------
// 1. Worked error-measure example: five families of eight hypotheses.

fn criterion_1(c: &mut Checks) {
    // rejections (family, row), rows 1-based
    let rejected = [(1, 1), (1, 3), (1, 6), (2, 4), (3, 1), (3, 2), (3, 3), (3, 4), (3, 5), (3, 6)];
    let non_null = [(1, 1), (1, 3), (1, 6), (1, 8), (3, 1), (3, 2), (3, 4), (3, 5), (3, 6)];
    let decisions = DecisionSet::from_rejections(
        5,
        8,
        rejected.iter().map(|&(f, r)| Hypothesis::new(f - 1, r - 1)).collect(),
        Q,
    )
    .unwrap();
    let truth = TruthMask::from_false_nulls(5, 8, non_null.iter().map(|&(f, r)| (f - 1, r - 1))).unwrap();
    let report = evaluate(&decisions, &truth, ProximityRule::disabled()).unwrap();
    for (name, got, want) in [
        ("gFDP", report.g_fdp, 0.2),
        ("family-discovery FDP", report.v_fdp, 1.0 / 3.0),
        ("aFDP", report.a_fdp, 7.0 / 30.0),
        ("sFDP", report.s_fdp, 7.0 / 18.0),
    ] {
        c.check((got - want).abs() <= 1e-12, format!("{name} = {got}, expected {want}"));
        c.note(format!("{name}={got:.6}"));
    }
}

// ---------------------------------------------------------------------------
// 2. Sparse pleiotropy: 60 variants x 25 phenotypes among 3000 x 100.

fn criterion_2(c: &mut Checks) {
    let scenario = ScenarioSpec::sparse_pleiotropy().with_replicates(100).with_seed(2);
    let strategies = [
        StrategySpec::pooled_bh(Q),
        StrategySpec::per_family_bh(Q),
        StrategySpec::hier_bh(Q, Q),
    ];
    let cells = run_bench(&scenario, &strategies).unwrap();
    let sigmas = &scenario.sigmas;

    let max_over = |strategy, metric| {
        sigmas
            .iter()
            .map(|&s| cell(&cells, s, strategy).aggregate.mean(metric))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    for &s in sigmas {
        let pooled = cell(&cells, s, Strategy::PooledBh);
        c.check(controlled(pooled, Metric::GFdr), describe(pooled, Metric::GFdr));
        let per_family = cell(&cells, s, Strategy::PerFamilyBh);
        c.check(controlled(per_family, Metric::AFdr), describe(per_family, Metric::AFdr));
        let hier = cell(&cells, s, Strategy::HierBh);
        c.check(controlled(hier, Metric::VFdr), describe(hier, Metric::VFdr));
        c.check(controlled(hier, Metric::SFdr), describe(hier, Metric::SFdr));
    }
    let (pv, ps) = (max_over(Strategy::PooledBh, Metric::VFdr), max_over(Strategy::PooledBh, Metric::SFdr));
    c.check(pv > 0.10, format!("pooled BH max vFDR {pv:.4} not above 0.10"));
    c.check(ps > 0.10, format!("pooled BH max sFDR {ps:.4} not above 0.10"));
    let (fg, fv) = (max_over(Strategy::PerFamilyBh, Metric::GFdr), max_over(Strategy::PerFamilyBh, Metric::VFdr));
    c.check(fg > 0.10, format!("per-family BH max gFDR {fg:.4} not above 0.10"));
    c.check(fv > 0.10, format!("per-family BH max vFDR {fv:.4} not above 0.10"));
    let hv = max_over(Strategy::HierBh, Metric::VFdr);
    let hs = max_over(Strategy::HierBh, Metric::SFdr);
    c.note(format!(
        "pooled max vFDR {pv:.3} sFDR {ps:.3}; per-family max gFDR {fg:.3} vFDR {fv:.3}; hier max vFDR {hv:.3} sFDR {hs:.3}"
    ));
}

// ---------------------------------------------------------------------------
// 3. Dense weak pleiotropy: 1500 variants x 5 phenotypes.

fn criterion_3(c: &mut Checks) {
    let scenario = ScenarioSpec::dense_weak_pleiotropy().with_replicates(100).with_seed(3);
    let strategies = [
        StrategySpec::pooled_bh(Q),
        StrategySpec::pooled_bonferroni(Q),
        StrategySpec::hier_bh(Q, Q),
        StrategySpec::hier_bonferroni(Q, Q),
    ];
    let cells = run_bench(&scenario, &strategies).unwrap();
    let mut worst_gap: f64 = 0.0;
    for &s in &scenario.sigmas {
        let targets: [(Strategy, &[Metric]); 4] = [
            (Strategy::PooledBh, &[Metric::GFdr]),
            (Strategy::PooledBonferroni, &[Metric::GFwer]),
            (Strategy::HierBh, &[Metric::VFdr, Metric::SFdr]),
            (Strategy::HierBonferroni, &[Metric::VFwer, Metric::SFdr]),
        ];
        for (strategy, metrics) in targets {
            let cl = cell(&cells, s, strategy);
            for &m in metrics {
                c.check(controlled(cl, m), describe(cl, m));
            }
        }
        let hier = cell(&cells, s, Strategy::HierBh).aggregate.mean(Metric::GPower);
        let pooled = cell(&cells, s, Strategy::PooledBh).aggregate.mean(Metric::GPower);
        worst_gap = worst_gap.max((hier - pooled).abs());
        c.check(
            (hier - pooled).abs() <= 0.05,
            format!("sigma {s}: hier BH gPower {hier:.4} vs pooled {pooled:.4}"),
        );
    }
    c.note(format!("largest |gPower gap| {worst_gap:.4}"));
}

// ---------------------------------------------------------------------------
// 4. Genome scale: 100,000 variants, 1000 x 25 plus 500 singletons, at the
// low-noise end of the default grid, where pooled BH makes enough
// rejections for its family-level errors to show.

const SIGMA_4: f64 = 0.5;

fn criterion_4(c: &mut Checks) {
    let scenario = ScenarioSpec::genome_scale()
        .with_replicates(25)
        .with_sigmas(vec![SIGMA_4])
        .with_seed(4);
    let cells = run_bench(&scenario, &[StrategySpec::pooled_bh(Q), StrategySpec::hier_bh(Q, Q)]).unwrap();
    let hier = cell(&cells, SIGMA_4, Strategy::HierBh);
    let pooled = cell(&cells, SIGMA_4, Strategy::PooledBh);
    c.check(controlled(hier, Metric::VFdr), describe(hier, Metric::VFdr));
    c.check(controlled(hier, Metric::SFdr), describe(hier, Metric::SFdr));
    c.check(!controlled(pooled, Metric::VFdr), describe(pooled, Metric::VFdr));
    let (hs, ps) = (
        hier.aggregate.mean(Metric::SingletonPower),
        pooled.aggregate.mean(Metric::SingletonPower),
    );
    c.check(hs <= ps, format!("SingletonPower hier {hs:.4} > pooled {ps:.4}"));
    c.note(format!(
        "hier vFDR {:.4} sFDR {:.4}; pooled vFDR {:.4}; SingletonPower hier {hs:.3} pooled {ps:.3}",
        hier.aggregate.mean(Metric::VFdr),
        hier.aggregate.mean(Metric::SFdr),
        pooled.aggregate.mean(Metric::VFdr)
    ));
}

// ---------------------------------------------------------------------------
// 5. Oracle suites.

/// Step-up rejections by counting: `k = max{i : #{p_j <= i*alpha/m} >= i}`,
/// then reject every `p_j <= k*alpha/m`.
fn brute_step_up(p: &[f64], alpha: f64) -> BTreeSet<usize> {
    let m = p.len();
    let threshold = |i: usize| i as f64 * alpha / m as f64;
    let k = (1..=m)
        .filter(|&i| p.iter().filter(|&&x| x <= threshold(i)).count() >= i)
        .max()
        .unwrap_or(0);
    if k == 0 {
        return BTreeSet::new();
    }
    (0..m).filter(|&j| p[j] <= threshold(k)).collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = rng.random_range(1..=50);
    let kind = rng.random_range(0..3);
    (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            match kind {
                0 => u,
                // mixture with strong signals
                1 => {
                    if rng.random_bool(0.3) {
                        u * 1e-3
                    } else {
                        u
                    }
                }
                // coarse grid, so ties are common
                _ => (u * 50.0).ceil() / 1000.0,
            }
        })
        .collect()
}

/// Two-sided Student t tail for integer df by finite trigonometric sums.
fn t_tail_integer(t: f64, df: u32) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, co) = theta.sin_cos();
    let c2 = co * co;
    let sum_from = |start: u32| {
        let (mut term, mut sum, mut j) = (1.0, 1.0, start);
        while j < df {
            term *= c2 * (j - 1) as f64 / j as f64;
            sum += term;
            j += 2;
        }
        sum
    };
    let a = if df % 2 == 0 {
        s * sum_from(2)
    } else if df == 1 {
        2.0 * theta / std::f64::consts::PI
    } else {
        2.0 / std::f64::consts::PI * (theta + s * co * sum_from(3))
    };
    1.0 - a
}

/// Solves a small dense system by Gaussian elimination.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Slope t-statistic of the last design column by the normal equations.
fn ols_slope_t(design: &[Vec<f64>], y: &[f64]) -> f64 {
    let (n, p) = (y.len(), design[0].len());
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| (0..n).map(|r| design[r][i] * design[r][j]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|i| (0..n).map(|r| design[r][i] * y[r]).sum()).collect();
    let beta = solve(xtx.clone(), xty);
    let rss: f64 = (0..n)
        .map(|r| (y[r] - (0..p).map(|i| design[r][i] * beta[i]).sum::<f64>()).powi(2))
        .sum();
    let unit: Vec<f64> = (0..p).map(|i| (i == p - 1) as u8 as f64).collect();
    let inv_last = solve(xtx, unit)[p - 1];
    beta[p - 1] / (rss / (n - p) as f64 * inv_last).sqrt()
}

fn criterion_5(c: &mut Checks) {
    // step-up procedures against the counting oracle
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let p = random_instance(&mut rng);
        let m = p.len();
        let harmonic: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
        let got_bh: BTreeSet<usize> = bh(&p, Q).unwrap().rejected().iter().copied().collect();
        let got_by: BTreeSet<usize> = by(&p, Q).unwrap().rejected().iter().copied().collect();
        let got_bonf: BTreeSet<usize> = bonferroni(&p, Q).unwrap().rejected().iter().copied().collect();
        let want_bonf: BTreeSet<usize> = (0..m).filter(|&j| p[j] <= Q / m as f64).collect();
        if got_bh != brute_step_up(&p, Q) || got_by != brute_step_up(&p, Q / harmonic) || got_bonf != want_bonf {
            mismatches += 1;
        }
    }
    c.check(mismatches == 0, format!("{mismatches} of 10^4 step-up instances disagree with the oracle"));

    // Simes under the global null of independent uniforms is exact
    let draws = 100_000;
    let family = 10;
    let mut counts = [0usize; 3];
    let alphas = [0.01, 0.05, 0.1];
    for _ in 0..draws {
        let p: Vec<f64> = (0..family).map(|_| rng.random()).collect();
        let g = simes(&p).unwrap();
        for (k, &a) in alphas.iter().enumerate() {
            counts[k] += (g <= a) as usize;
        }
    }
    for (k, &a) in alphas.iter().enumerate() {
        let rate = counts[k] as f64 / draws as f64;
        let se = (a * (1.0 - a) / draws as f64).sqrt();
        c.check((rate - a).abs() <= 3.0 * se, format!("Simes null rate {rate:.5} at alpha {a}"));
        c.note(format!("Simes@{a}: {rate:.4}"));
    }

    // scan statistics against per-pair OLS, n = 10
    let mut worst_t: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for instance in 0..20 {
        let n = 10;
        let with_cov = instance % 2 == 1;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random_range(0..3) as f64).collect())
            .collect();
        let g = GenotypeMatrix::from_columns(n, cols, None).unwrap();
        let y = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let cov = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let mut config = ScanConfig::default().with_threshold(1.0);
        if with_cov {
            config = config.with_covariates(cov.clone());
        }
        let t = t_statistics(&g, &y, &config).unwrap();
        let p = scan_assoc(&g, &y, &config).unwrap().pvalues;
        let df = if with_cov { 7 } else { 8 };
        for v in 0..3 {
            if g.maf()[v] == 0.0 {
                continue;
            }
            for k in 0..2 {
                let design: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        let mut row = vec![1.0];
                        if with_cov {
                            row.push(cov[[i, 0]]);
                        }
                        row.push(g.column(v)[i]);
                        row
                    })
                    .collect();
                let t_ols = ols_slope_t(&design, &y.column(k).to_vec());
                let p_ols = t_tail_integer(t_ols, df);
                worst_t = worst_t.max((t[[v, k]] - t_ols).abs() / t_ols.abs().max(1.0));
                worst_p = worst_p.max((p.get(v, k).value().unwrap() - p_ols).abs());
            }
        }
    }
    c.check(worst_t <= 1e-10, format!("scan t differs from OLS by {worst_t:e}"));
    c.check(worst_p <= 1e-10, format!("scan p differs from OLS by {worst_p:e}"));
    c.note(format!("max scan t err {worst_t:.1e}, p err {worst_p:.1e}"));
}

// ---------------------------------------------------------------------------
// 6. Stage consistency of Simes + BH/BH with q1 = q2.

fn criterion_6(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = StrategySpec::hier_bh(Q, Q);
    let (mut empty_selected, mut total_selected) = (0usize, 0usize);
    for _ in 0..1000 {
        let m = rng.random_range(1..=60);
        let p = rng.random_range(1..=20);
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            let signal = rng.random_bool(0.3);
            let strength = rng.random_range(1.0..6.0);
            rows.push(
                (0..p)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if signal && rng.random_bool(0.5) {
                            u * 10f64.powf(-strength)
                        } else {
                            u
                        }
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let matrix = PValueMatrix::from_rows(&rows).unwrap();
        let d = run_hierarchical(&matrix, &spec).unwrap();
        total_selected += d.selected_families().len();
        empty_selected += d
            .selected_families()
            .iter()
            .filter(|&&v| d.family_rejections(v).is_empty())
            .count();
    }
    c.check(empty_selected == 0, format!("{empty_selected} selected families without rejections"));
    c.check(total_selected > 0, "no family was ever selected");
    c.note(format!("{total_selected} selected families checked"));
}

// ---------------------------------------------------------------------------
// 7. LD regime with proximity-adjusted truth.

fn criterion_7(c: &mut Checks) {
    let scenario = LdScenario::desk();
    let rules = [ProximityRule::new(1_000_000, 0.2).unwrap(), ProximityRule::disabled()];
    let out = run_ld_bench(&scenario, &[StrategySpec::hier_bh(Q, Q)], &rules).unwrap();
    let with_rule = &out[0].1[0];
    let without = &out[1].1[0];
    c.check(controlled(with_rule, Metric::VFdr), describe(with_rule, Metric::VFdr));
    let (a, b) = (
        with_rule.aggregate.mean(Metric::VFdr),
        without.aggregate.mean(Metric::VFdr),
    );
    c.check(b > a, format!("vFDR without proximity rule {b:.4} not above {a:.4}"));
    c.note(format!(
        "vFDR with rule {a:.4} +- {:.4}, without {b:.4}; gPower {:.3}",
        with_rule.aggregate.se(Metric::VFdr),
        with_rule.aggregate.mean(Metric::GPower)
    ));
}

fn main() {
    let criteria: [(u32, &str, fn(&mut Checks)); 7] = [
        (1, "worked example error measures", criterion_1),
        (2, "sparse pleiotropy, 100 replicates", criterion_2),
        (3, "dense weak pleiotropy, 100 replicates", criterion_3),
        (4, "genome scale, 25 replicates", criterion_4),
        (5, "oracle suites", criterion_5),
        (6, "stage consistency", criterion_6),
        (7, "LD regime with proximity rule", criterion_7),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let started = Instant::now();
        let mut checks = Checks::default();
        let panicked = catch_unwind(AssertUnwindSafe(|| run(&mut checks))).is_err();
        let secs = started.elapsed().as_secs_f64();
        if panicked {
            checks.failures.push("panicked".into());
        }
        if checks.failures.is_empty() {
            println!("criterion {n} ({name}): PASS [{}] {secs:.1}s", checks.notes.join("; "));
        } else {
            failed += 1;
            println!(
                "criterion {n} ({name}): FAIL [{}] {secs:.1}s",
                checks.failures.join("; ")
            );
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
