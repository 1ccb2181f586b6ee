//! Behavioural conformances for the probabilistic combinatory logics pSKI
//! and pBCK: evaluation, Wasserstein liftings, behavioural pseudometrics,
//! bisimilarity, Howe closures and contextual-distance bounds.

pub mod conformance;
pub mod context;
pub mod dist;
pub mod howe;
pub mod lift;
pub mod semantics;
pub mod suites;
pub mod syntax;
pub mod wasserstein;
