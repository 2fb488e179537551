//! A desk-scale laboratory for studying fair representation learning (FRL)
//! under causal mechanisms of dataset bias.
//!
//! The crate generates binary classification data from structural causal
//! models with controllable bias mechanisms and subgroup separability,
//! trains ERM and adversarial FRL classifiers, and measures when removing
//! sensitive information from representations helps or hurts subgroup
//! accuracy. Exact information-theoretic oracles are available for the
//! discrete generative family.

pub mod data;
pub mod exec;
pub mod inject;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod runner;
pub mod scm;
pub mod verify;

pub use data::{Dataset, FeatureKind, Record};
pub use scm::{Family, Mechanism, Scm, ScmConfig};
