//! Recovering a hidden shift `s` from an oracle returning `(x + s)^e` over a
//! prime field, deciding shift equality from oracle access, and exact
//! brute-force counters for the combinatorial quantities that govern both.

pub mod error;
pub mod field;
pub mod identity;
pub mod lab;
pub mod oracle;
pub mod recovery;
pub mod roots;

pub use error::{Error, Result};
pub use field::{subgroup_elements, ExponentParams, IndexTable, PrimeContext};
pub use identity::{HMode, HPolicy, IdentityOutcome, Variant, Verdict};
pub use lab::{LabReport, LabRow, LabValue, Lemma};
pub use oracle::ShiftOracle;
pub use recovery::{CandidateSet, ProbePolicy, Provenance, RecoveryOutcome, Statistic};
pub use roots::{Witness, WitnessSet};
