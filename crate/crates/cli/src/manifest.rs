//! Run manifests: a flat TOML file holding a scenario plus optional run
//! settings. Command-line flags override anything set here.
//!
//! ```toml
//! n_variants = 3000
//! n_phenotypes = 100
//! blocks = [[60, 25]]
//! replicates = 100
//! seed = 1
//! # run settings
//! strategies = ["pooled_bh", "per_family_bh", "hier_bh"]
//! q1 = 0.05
//! q2 = 0.05
//! combiner = "simes"
//! stage2 = "bh"
//! output = "results/bench.csv"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hierfdr::simgen::ScenarioSpec;

const RUN_KEYS: [&str; 6] = ["strategies", "q1", "q2", "combiner", "stage2", "output"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub strategies: Vec<String>,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    pub combiner: Option<String>,
    pub stage2: Option<String>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub scenario: ScenarioSpec,
    pub run: RunSettings,
}

fn take_str(table: &mut toml::Table, key: &str) -> Result<Option<String>> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(other) => bail!("'{key}' must be a string, found {other}"),
    }
}

fn take_float(table: &mut toml::Table, key: &str) -> Result<Option<f64>> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::Float(x)) => Ok(Some(x)),
        Some(toml::Value::Integer(x)) => Ok(Some(x as f64)),
        Some(other) => bail!("'{key}' must be a number, found {other}"),
    }
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("manifest is not valid TOML")?;
        let strategies = match table.remove("strategies") {
            None => Vec::new(),
            Some(toml::Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s),
                    other => bail!("strategy names must be strings, found {other}"),
                })
                .collect::<Result<_>>()?,
            Some(other) => bail!("'strategies' must be an array of names, found {other}"),
        };
        let run = RunSettings {
            strategies,
            q1: take_float(&mut table, "q1")?,
            q2: take_float(&mut table, "q2")?,
            combiner: take_str(&mut table, "combiner")?,
            stage2: take_str(&mut table, "stage2")?,
            output: take_str(&mut table, "output")?.map(PathBuf::from),
        };
        debug_assert!(RUN_KEYS.iter().all(|k| !table.contains_key(*k)));
        let scenario = ScenarioSpec::from_toml_str(&toml::to_string(&table)?)?;
        Ok(Self { scenario, run })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in manifest {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_run_settings_from_scenario() {
        let m = RunManifest::parse(
            "n_variants = 10\nn_phenotypes = 4\nblocks = [[2, 2]]\nq1 = 0.1\nstrategies = [\"hier_bh\"]\noutput = \"x.csv\"\n",
        )
        .unwrap();
        assert_eq!(m.scenario.n_variants, 10);
        assert_eq!(m.run.q1, Some(0.1));
        assert_eq!(m.run.strategies, vec!["hier_bh"]);
        assert_eq!(m.run.output, Some(PathBuf::from("x.csv")));
        assert!(RunManifest::parse("n_variants = 10\nn_phenotypes = 4\nq1 = \"a\"\n").is_err());
        assert!(RunManifest::parse("n_variants = 10\nn_phenotypes = 4\nunknown = 1\n").is_err());
    }
}
