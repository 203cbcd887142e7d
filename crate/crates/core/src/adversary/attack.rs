use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{analytic_outcomes, undetected_probability, MonteCarloEstimate};
use super::policy::ManipulationPolicy;
use super::AdversaryError;
use crate::ceremony::{run_election, CorruptionConfig, ElectionConfig, FailureReason};
use crate::rng::derive_seed;

/// Aggregate over repeated full ceremonies with `corrupted` manipulating
/// devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub corrupted: u32,
    pub trials: u64,
    /// Ceremonies whose audit failed on a complaint.
    pub detected: u64,
    pub detection: MonteCarloEstimate,
    /// Manipulated counted ballots that went unnoticed, summed over trials.
    pub survivors: u64,
    /// Per-voter chance of not being caught under the policy, from the pattern
    /// model.
    pub analytic_p: f64,
    /// `analytic_p ^ corrupted`.
    pub analytic_undetected: f64,
}

impl AttackReport {
    pub fn row(&self) -> SweepRow {
        SweepRow {
            k: self.corrupted,
            p: self.analytic_p,
            analytic_undetected: self.analytic_undetected,
            empirical_detected: self.detection.estimate,
            stderr: self.detection.stderr,
        }
    }
}

/// One line of the attack CSV report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u32,
    pub p: f64,
    pub analytic_undetected: f64,
    pub empirical_detected: f64,
    pub stderr: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "k,p,analytic_undetected,empirical_detected,stderr";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            self.k, self.p, self.analytic_undetected, self.empirical_detected, self.stderr
        )
    }
}

/// Runs `trials` complete elections in which voters `0..corrupted` use a
/// device following `policy`. Trial `i` runs with seed
/// `derive_seed(config.seed, "attack-trial", i)`; any corruption or tamper in
/// `config` is replaced.
pub fn end_to_end_attack(
    config: &ElectionConfig,
    policy: &ManipulationPolicy,
    corrupted: u32,
    trials: u64,
) -> Result<AttackReport, AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::NoTrials);
    }
    if corrupted > config.n {
        return Err(AdversaryError::TooManyCorrupted {
            corrupted,
            voters: config.n,
        });
    }
    let dist = config.distribution.load()?;
    let caught = analytic_outcomes(policy, &dist)?.caught;
    let analytic_p = 1.0 - caught;
    let analytic_undetected = undetected_probability(analytic_p.clamp(0.0, 1.0), corrupted)?;

    let mut base = config.clone();
    base.tamper = None;
    base.corruption = Some(CorruptionConfig {
        voters: (0..corrupted).collect(),
        policy: policy.clone().into(),
        target: config.corruption.as_ref().and_then(|c| c.target),
    });

    let (detected, survivors) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut cfg = base.clone();
            cfg.seed = derive_seed(config.seed, "attack-trial", i);
            let out = run_election(&cfg)?;
            let detected = u64::from(out.verdict.has_reason(FailureReason::Complaint));
            Ok((detected, u64::from(out.stats.manipulated_survivors)))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
        .map_err(|e: crate::ceremony::CeremonyError| AdversaryError::from(e))?;

    Ok(AttackReport {
        corrupted,
        trials,
        detected,
        detection: MonteCarloEstimate::from_counts(trials, detected),
        survivors,
        analytic_p,
        analytic_undetected,
    })
}
