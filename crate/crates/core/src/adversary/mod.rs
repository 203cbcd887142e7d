//! Voter behavior, manipulation policies, and the detection analysis.
//!
//! A voter's behavior is a pattern over `{V, C}` (vote, check). A corrupted voting
//! device sees the voter's history so far and decides, at every vote, whether to
//! replace the ballot. A check on a manipulated latest ballot catches it.
//!
//! The analysis comes in independent routes that the tests hold against each
//! other: closed-form sums over the pattern distribution, exhaustive policy
//! enumeration, a prefix-tree dynamic program, Monte Carlo over patterns, and
//! Monte Carlo over full cryptographic ceremonies.

mod analysis;
mod attack;
mod distribution;
mod policy;

use thiserror::Error;

pub use analysis::{
    analytic_outcomes, analytic_success, detection_probability, monte_carlo_success,
    optimal_policy, optimal_success_dp, reachable_histories, simulate_policy_on_pattern,
    undetected_probability, AttackOutcome, MonteCarloEstimate, OutcomeMass,
    MAX_BRUTE_FORCE_HISTORIES, MAX_PATTERN_LEN,
};
pub use attack::{end_to_end_attack, AttackReport, SweepRow};
pub use distribution::{Action, BehaviorDistribution, VoterScript, DEFAULT_DISTRIBUTION_CSV};
pub use policy::{Decision, DecisionRule, ManipulationPolicy, PolicyTable};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("malformed pattern `{0}`: expected a non-empty string over {{V, C}}")]
    MalformedPattern(String),
    #[error("pattern `{0}` must start with V")]
    MustStartWithVote(String),
    #[error("duplicate pattern `{0}`")]
    DuplicatePattern(String),
    #[error("probability {value} for `{pattern}` outside [0, 1]")]
    ProbabilityRange { pattern: String, value: f64 },
    #[error("probabilities sum to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("empty distribution")]
    Empty,
    #[error("malformed history `{0}`")]
    MalformedHistory(String),
    #[error("history `{history}` exceeds policy table length {max_len}")]
    HistoryTooLong { history: String, max_len: usize },
    #[error("policy table is missing history `{0}`")]
    IncompletePolicy(String),
    #[error("invalid decision `{0}` (expected M or H)")]
    InvalidDecision(String),
    #[error("pattern length {len} exceeds max length {max_len}")]
    MaxLenExceeded { len: usize, max_len: usize },
    #[error("{0} reachable histories is too many for exhaustive enumeration")]
    TooManyHistories(usize),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("corrupted count {corrupted} exceeds voter count {voters}")]
    TooManyCorrupted { corrupted: u32, voters: u32 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ceremony(#[from] Box<crate::ceremony::CeremonyError>),
}
