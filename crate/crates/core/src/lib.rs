//! Score-level fusion and evaluation toolkit for biometric verification.
//!
//! The crate is organised around a labelled comparison table ([`ScoreTable`])
//! produced by one matcher. Tables from several matchers are aligned on their
//! `(probe_id, reference_id)` keys into [`AlignedScores`], fused into a single
//! decision score by one of the rules in [`fusion`], and evaluated with the
//! threshold-sweep metrics in [`metrics`]. [`protocol`] runs those steps over
//! grids of acquisition settings, and [`synthlab`] generates synthetic score
//! tables together with closed-form and brute-force oracles.

pub mod embedscore;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod numeric;
pub mod protocol;
pub mod random;
pub mod scorebase;
pub mod synthlab;

pub use error::{Error, Result};
pub use scorebase::{
    AlignedScores, ComparisonRecord, PairKey, ScoreRange, ScoreTable, SettingDescriptor, SplitSpec,
};

/// Version string embedded in every emitted artifact.
pub const TOOL_VERSION: &str = concat!("scorefuse ", env!("CARGO_PKG_VERSION"));
