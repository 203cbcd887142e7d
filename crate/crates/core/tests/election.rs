//! Whole-election invariants over randomized configurations.

use std::collections::BTreeMap;

use proptest::prelude::*;

use ivxv_core::ceremony::{
    replay_audit, run_election, CorruptionConfig, ElectionConfig, ElectionTranscript, FailureReason,
    PolicySource,
};
use ivxv_core::crypto::GroupPreset;

fn histogram(xs: &[u32]) -> BTreeMap<u32, u64> {
    let mut h = BTreeMap::new();
    for &x in xs {
        *h.entry(x).or_default() += 1;
    }
    h
}

fn small_config() -> impl Strategy<Value = ElectionConfig> {
    (1u32..=8, 1u32..=4, 2u32..=5, any::<u64>()).prop_flat_map(|(n, k, c, seed)| {
        (1..=k).prop_map(move |t| ElectionConfig::honest(n, k, t, c, GroupPreset::Toy, seed))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn honest_elections_count_every_intent_once(config in small_config()) {
        let out = run_election(&config).unwrap();
        prop_assert!(out.verdict.is_valid(), "{}", out.verdict);
        prop_assert_eq!(out.tally.rejected, 0);
        prop_assert_eq!(&out.tally.counts, &histogram(&out.intents));
        prop_assert_eq!(out.stats.complaints, 0);
    }

    #[test]
    fn revoting_counts_only_the_last_ballot(config in small_config(), script in "V{2,4}(C)?") {
        let mut config = config;
        config.scripts.insert(0, script.parse().unwrap());
        let out = run_election(&config).unwrap();
        prop_assert!(out.verdict.is_valid(), "{}", out.verdict);
        prop_assert_eq!(out.tally.counts.values().sum::<u64>(), u64::from(config.n));
        prop_assert_eq!(&out.tally.counts, &histogram(&out.intents));
    }

    #[test]
    fn devices_that_never_manipulate_draw_no_complaint(config in small_config()) {
        let mut config = config;
        config.corruption = Some(CorruptionConfig {
            voters: (0..config.n).collect(),
            policy: PolicySource::Never,
            target: None,
        });
        let out = run_election(&config).unwrap();
        prop_assert!(out.verdict.is_valid(), "{}", out.verdict);
        prop_assert_eq!(out.stats.manipulated_survivors, 0);
    }

    #[test]
    fn a_checked_manipulation_is_always_reported(config in small_config()) {
        let mut config = config;
        let voter = config.n - 1;
        config.scripts.insert(voter, "VC".parse().unwrap());
        config.corruption = Some(CorruptionConfig {
            voters: vec![voter],
            policy: PolicySource::Always,
            target: None,
        });
        let out = run_election(&config).unwrap();
        prop_assert!(out.verdict.has_reason(FailureReason::Complaint));
        prop_assert_eq!(out.stats.caught, 1);
    }

    #[test]
    fn transcripts_are_reproducible_and_replayable(config in small_config()) {
        let a = run_election(&config).unwrap();
        let b = run_election(&config).unwrap();
        let text = a.transcript.to_jsonl();
        prop_assert_eq!(&text, &b.transcript.to_jsonl());
        let parsed = ElectionTranscript::from_jsonl(&text).unwrap();
        let report = replay_audit(&parsed).unwrap();
        prop_assert_eq!(&report.recorded, &a.verdict);
        prop_assert_eq!(&report.recomputed, &a.verdict);
    }
}
