//! Hierarchical false discovery rate control for hypotheses grouped into
//! families by genetic variant.
//!
//! The crate covers the whole path from data to error rates: p-value
//! matrices (dense or censored at a save threshold), global p-values per
//! family, single-collection procedures (BH, BY, Bonferroni), the pooled,
//! per-family and two-stage hierarchical strategies, realized error
//! measures against ground truth, simulation of independent-test and
//! LD-structured scenarios, and a batched association scan.

pub mod bench;
pub mod combine;
pub mod decision;
pub mod error;
pub mod hier;
pub mod io;
pub mod metrics;
pub mod mtp;
pub mod pvalues;
pub mod scan;
pub mod simgen;
pub mod special;
pub mod truth;

pub use combine::{combine_matrix, Combiner, GlobalPValues};
pub use decision::{DecisionSet, SelectionSet};
pub use error::{Error, Result};
pub use hier::{run_strategy, Strategy, StrategySpec};
pub use metrics::{aggregate, evaluate, Metric, MetricsReport, ProximityRule, ReplicateAggregate};
pub use mtp::{Procedure, RejectionResult};
pub use pvalues::{Entry, FamilyLayout, Hypothesis, PValueMatrix};
pub use truth::{Locus, TruthMask, VariantCorrelation};
