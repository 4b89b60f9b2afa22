//! Simulation and analysis toolkit for centralized college admissions with
//! scholarship call-list quotas.
//!
//! The pipeline is: generate (or load) a population of applicants and
//! programs, build per-program call lists with or without quota promotion,
//! run applicant-proposing deferred acceptance on both arms, then compare the
//! arms (compliers, prestige gains, decomposition, diagnostics). The [`cem`]
//! module estimates admissibility gaps from application-level rows.

pub mod cem;
pub mod cli;
pub mod counterfactual;
pub mod error;
pub mod matching;
pub mod population;
pub mod prestige;
pub mod quota;
pub mod report;
mod stats;

pub use error::{Error, Result};
pub use matching::{admissible_set, build_call_lists, deferred_acceptance, CallLists, MatchConfig, MatchOutcome};
pub use population::{
    generate_population, load_population, save_population, Applicant, ApplicantId, Gender, Population, Program,
    ProgramId, ProgramType, ScenarioConfig, Track,
};
pub use quota::{apply_quota, compute_quota_rate, verify_compliance, Compliance, QuotaRate, QuotaRule, RankedList};

/// Version string embedded in run manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Schema version carried by every JSON document this crate reads or writes.
pub const SCHEMA_VERSION: u32 = 1;
