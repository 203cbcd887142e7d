use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::{render, Action, BehaviorDistribution, VoterScript};
use super::policy::{Decision, DecisionRule, PolicyTable};
use super::AdversaryError;
use crate::rng::derive_rng;

/// Longest pattern accepted by the exhaustive policy search.
pub const MAX_PATTERN_LEN: usize = 8;
/// Cap on decision points for the exhaustive search (2^20 policies).
pub const MAX_BRUTE_FORCE_HISTORIES: usize = 20;

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackOutcome {
    /// The final ballot was manipulated and no check caught it.
    Success,
    /// A check observed a manipulated latest ballot.
    Caught,
    /// The script finished with an honest latest ballot.
    SilentFail,
}

/// Runs one voter script against a policy.
///
/// A check halts the script as soon as it sees a manipulated latest ballot, so
/// later actions never consult the policy.
pub fn simulate_policy_on_pattern<P: DecisionRule + ?Sized>(
    policy: &P,
    pattern: &VoterScript,
) -> Result<AttackOutcome, AdversaryError> {
    let actions = pattern.actions();
    let mut latest_manipulated = false;
    for (i, action) in actions.iter().enumerate() {
        match action {
            Action::Vote => {
                latest_manipulated = policy.decide(&actions[..i])? == Decision::Manipulate;
            }
            Action::Check => {
                if latest_manipulated {
                    return Ok(AttackOutcome::Caught);
                }
            }
        }
    }
    Ok(if latest_manipulated {
        AttackOutcome::Success
    } else {
        AttackOutcome::SilentFail
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMass {
    pub success: f64,
    pub caught: f64,
    pub silent_fail: f64,
}

pub fn analytic_outcomes<P: DecisionRule + ?Sized>(
    policy: &P,
    dist: &BehaviorDistribution,
) -> Result<OutcomeMass, AdversaryError> {
    let mut mass = OutcomeMass::default();
    for (pattern, p) in dist.support() {
        match simulate_policy_on_pattern(policy, pattern)? {
            AttackOutcome::Success => mass.success += p,
            AttackOutcome::Caught => mass.caught += p,
            AttackOutcome::SilentFail => mass.silent_fail += p,
        }
    }
    Ok(mass)
}

/// Probability that a voter drawn from `dist` ends with a manipulated,
/// never-caught ballot.
pub fn analytic_success<P: DecisionRule + ?Sized>(
    policy: &P,
    dist: &BehaviorDistribution,
) -> Result<f64, AdversaryError> {
    Ok(analytic_outcomes(policy, dist)?.success)
}

/// Histories at which some support pattern casts its next vote, in
/// length-then-lexicographic order.
pub fn reachable_histories(dist: &BehaviorDistribution) -> Vec<String> {
    let mut set = BTreeSet::new();
    for (pattern, _) in dist.support() {
        let actions = pattern.actions();
        for (i, a) in actions.iter().enumerate() {
            if *a == Action::Vote {
                set.insert(render(&actions[..i]));
            }
        }
    }
    let mut out: Vec<String> = set.into_iter().collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn check_max_len(dist: &BehaviorDistribution, max_len: usize) -> Result<(), AdversaryError> {
    if max_len == 0 || max_len > MAX_PATTERN_LEN {
        return Err(AdversaryError::MaxLenExceeded {
            len: max_len,
            max_len: MAX_PATTERN_LEN,
        });
    }
    if dist.max_len() > max_len {
        return Err(AdversaryError::MaxLenExceeded {
            len: dist.max_len(),
            max_len,
        });
    }
    Ok(())
}

/// Exhaustive search over every assignment of decisions to reachable
/// histories.
///
/// Assignments are visited starting from "manipulate everywhere" and only a
/// strict improvement replaces the incumbent, so ties resolve toward
/// manipulation. The returned table covers all histories shorter than
/// `max_len`; unreachable ones are set to manipulate.
pub fn optimal_policy(
    dist: &BehaviorDistribution,
    max_len: usize,
) -> Result<(PolicyTable, f64), AdversaryError> {
    check_max_len(dist, max_len)?;
    let histories = reachable_histories(dist);
    if histories.len() > MAX_BRUTE_FORCE_HISTORIES {
        return Err(AdversaryError::TooManyHistories(histories.len()));
    }
    let index: HashMap<&str, usize> =
        histories.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();

    // Per pattern: the sequence of (vote decision index | check) steps.
    enum Step {
        Vote(usize),
        Check,
    }
    let compiled: Vec<(Vec<Step>, f64)> = dist
        .support()
        .map(|(pattern, p)| {
            let actions = pattern.actions();
            let steps = actions
                .iter()
                .enumerate()
                .map(|(i, a)| match a {
                    Action::Vote => Step::Vote(index[render(&actions[..i]).as_str()]),
                    Action::Check => Step::Check,
                })
                .collect();
            (steps, *p)
        })
        .collect();

    // Bit i set means history i is honest.
    let evaluate = |honest_mask: u32| -> f64 {
        let mut total = 0.0;
        'pattern: for (steps, p) in &compiled {
            let mut manipulated = false;
            for step in steps {
                match step {
                    Step::Vote(i) => manipulated = honest_mask & (1 << i) == 0,
                    Step::Check if manipulated => continue 'pattern,
                    Step::Check => {}
                }
            }
            if manipulated {
                total += p;
            }
        }
        total
    };

    let mut best_mask = 0u32;
    let mut best = evaluate(0);
    for mask in 1..(1u32 << histories.len()) {
        let value = evaluate(mask);
        if value > best + IMPROVEMENT_EPS {
            best = value;
            best_mask = mask;
        }
    }

    let partial: BTreeMap<String, Decision> = histories
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let d = if best_mask & (1 << i) == 0 {
                Decision::Manipulate
            } else {
                Decision::Honest
            };
            (h.clone(), d)
        })
        .collect();
    let table = PolicyTable::from_partial(max_len - 1, &partial, Decision::Manipulate)?;
    Ok((table, best))
}

/// Optimal success probability by dynamic programming over the prefix tree of
/// the support.
///
/// Each node is a history together with whether the latest ballot is
/// manipulated; the decision before a vote is shared by every pattern through
/// that node, which is what makes the tree recursion exact.
pub fn optimal_success_dp(dist: &BehaviorDistribution) -> f64 {
    let mut mass: HashMap<Vec<Action>, f64> = HashMap::new();
    let mut prefixes: BTreeSet<Vec<Action>> = BTreeSet::new();
    for (pattern, p) in dist.support() {
        let actions = pattern.actions();
        *mass.entry(actions.to_vec()).or_default() += p;
        for i in 1..=actions.len() {
            prefixes.insert(actions[..i].to_vec());
        }
    }

    fn node(
        history: &mut Vec<Action>,
        manipulated: bool,
        mass: &HashMap<Vec<Action>, f64>,
        prefixes: &BTreeSet<Vec<Action>>,
    ) -> f64 {
        let mut value = if manipulated {
            mass.get(history.as_slice()).copied().unwrap_or(0.0)
        } else {
            0.0
        };
        history.push(Action::Check);
        if !manipulated && prefixes.contains(history.as_slice()) {
            value += node(history, false, mass, prefixes);
        }
        history.pop();
        value += best_vote(history, mass, prefixes);
        value
    }

    fn best_vote(
        history: &mut Vec<Action>,
        mass: &HashMap<Vec<Action>, f64>,
        prefixes: &BTreeSet<Vec<Action>>,
    ) -> f64 {
        history.push(Action::Vote);
        let value = if prefixes.contains(history.as_slice()) {
            let m = node(history, true, mass, prefixes);
            let h = node(history, false, mass, prefixes);
            m.max(h)
        } else {
            0.0
        };
        history.pop();
        value
    }

    best_vote(&mut Vec::new(), &mass, &prefixes)
}

fn check_probability(p: f64) -> Result<(), AdversaryError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AdversaryError::InvalidProbability(p));
    }
    Ok(())
}

/// Chance that `k` independent manipulations all go unnoticed, `p^k`.
pub fn undetected_probability(p: f64, k: u32) -> Result<f64, AdversaryError> {
    check_probability(p)?;
    Ok(p.powi(k as i32))
}

/// Chance that at least one of `k` manipulations is noticed, `1 - p^k`.
pub fn detection_probability(p: f64, k: u32) -> Result<f64, AdversaryError> {
    Ok(1.0 - undetected_probability(p, k)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    pub stderr: f64,
}

impl MonteCarloEstimate {
    pub fn from_counts(trials: u64, successes: u64) -> Self {
        let estimate = successes as f64 / trials as f64;
        let stderr = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        MonteCarloEstimate {
            trials,
            successes,
            estimate,
            stderr,
        }
    }
}

/// Samples patterns and counts successes. Trial `i` draws from its own stream
/// `(seed, "monte-carlo", i)`, so the result does not depend on thread count.
pub fn monte_carlo_success<P: DecisionRule + Sync + ?Sized>(
    policy: &P,
    dist: &BehaviorDistribution,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloEstimate, AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::NoTrials);
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(seed, "monte-carlo", i);
            let pattern = dist.sample(&mut rng);
            simulate_policy_on_pattern(policy, pattern).map(|o| u64::from(o == AttackOutcome::Success))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(MonteCarloEstimate::from_counts(trials, successes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::ManipulationPolicy;
    use proptest::prelude::*;

    fn dist(pairs: &[(&str, f64)]) -> BehaviorDistribution {
        BehaviorDistribution::from_pairs(pairs).unwrap()
    }

    fn script(s: &str) -> VoterScript {
        s.parse().unwrap()
    }

    #[test]
    fn pattern_outcomes() {
        let always = ManipulationPolicy::Always;
        let never = ManipulationPolicy::Never;
        assert_eq!(simulate_policy_on_pattern(&always, &script("V")).unwrap(), AttackOutcome::Success);
        assert_eq!(simulate_policy_on_pattern(&always, &script("VVC")).unwrap(), AttackOutcome::Caught);
        for s in ["V", "VC", "VVC", "VCV", "VVVV"] {
            assert_eq!(
                simulate_policy_on_pattern(&never, &script(s)).unwrap(),
                AttackOutcome::SilentFail
            );
        }
    }

    #[test]
    fn check_after_honest_revote_passes() {
        // manipulate the first vote, stay honest on the re-vote, then check
        let mut partial = BTreeMap::new();
        partial.insert(String::new(), Decision::Manipulate);
        partial.insert("V".into(), Decision::Honest);
        let table = PolicyTable::from_partial(2, &partial, Decision::Manipulate).unwrap();
        assert_eq!(
            simulate_policy_on_pattern(&table, &script("VVC")).unwrap(),
            AttackOutcome::SilentFail
        );
    }

    #[test]
    fn table_too_short_for_pattern() {
        let table = PolicyTable::uniform(1, Decision::Manipulate);
        assert!(matches!(
            simulate_policy_on_pattern(&table, &script("VVV")),
            Err(AdversaryError::HistoryTooLong { .. })
        ));
    }

    #[test]
    fn default_distribution_success() {
        let d = BehaviorDistribution::default_aggregate();
        let mass = analytic_outcomes(&ManipulationPolicy::Always, &d).unwrap();
        assert!((mass.success - 0.96).abs() < 1e-12);
        assert!((mass.caught - 0.04).abs() < 1e-12);
        assert_eq!(mass.silent_fail, 0.0);
        assert_eq!(analytic_success(&ManipulationPolicy::Never, &d).unwrap(), 0.0);
        let point = BehaviorDistribution::point_mass(script("V"));
        assert_eq!(analytic_success(&ManipulationPolicy::Always, &point).unwrap(), 1.0);
    }

    #[test]
    fn reachable_histories_default() {
        let d = BehaviorDistribution::default_aggregate();
        assert_eq!(reachable_histories(&d), vec!["", "V", "VV"]);
    }

    #[test]
    fn brute_force_default() {
        let d = BehaviorDistribution::default_aggregate();
        let (table, best) = optimal_policy(&d, 4).unwrap();
        assert!((best - 0.96).abs() < 1e-12);
        assert_eq!(table.max_len(), 3);
        assert!(table.decisions().values().all(|d| *d == Decision::Manipulate));
        assert!((analytic_success(&table, &d).unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn brute_force_small_cases() {
        let (table, best) = optimal_policy(&dist(&[("V", 0.5), ("VC", 0.5)]), 2).unwrap();
        assert!((best - 0.5).abs() < 1e-12);
        assert_eq!(table.decide(&[]).unwrap(), Decision::Manipulate);
        let (_, best) = optimal_policy(&dist(&[("VC", 1.0)]), 2).unwrap();
        assert_eq!(best, 0.0);
    }

    #[test]
    fn brute_force_limits() {
        let d = dist(&[("VVVVV", 1.0)]);
        assert!(matches!(optimal_policy(&d, 4), Err(AdversaryError::MaxLenExceeded { .. })));
        assert!(matches!(optimal_policy(&d, 9), Err(AdversaryError::MaxLenExceeded { .. })));
    }

    #[test]
    fn waiting_out_a_check_beats_always_manipulate() {
        // Every vote-only pattern outweighs its check-terminated sibling, yet
        // staying honest until the check has passed wins on the re-vote.
        let d = dist(&[("V", 0.4), ("VC", 0.1), ("VCV", 0.5)]);
        let always = analytic_success(&ManipulationPolicy::Always, &d).unwrap();
        assert!((always - 0.4).abs() < 1e-12);
        let (table, best) = optimal_policy(&d, 3).unwrap();
        assert!((best - 0.5).abs() < 1e-12);
        assert_eq!(table.decide(&[]).unwrap(), Decision::Honest);
        assert_eq!(table.decide(&[Action::Vote, Action::Check]).unwrap(), Decision::Manipulate);
        assert!((optimal_success_dp(&d) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dp_matches_known_values() {
        assert!((optimal_success_dp(&BehaviorDistribution::default_aggregate()) - 0.96).abs() < 1e-12);
        assert_eq!(optimal_success_dp(&dist(&[("VC", 1.0)])), 0.0);
        assert!((optimal_success_dp(&dist(&[("V", 0.5), ("VC", 0.5)])) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn detection_checkpoints() {
        let u100 = undetected_probability(0.96, 100).unwrap();
        let u200 = undetected_probability(0.96, 200).unwrap();
        assert!((u100 - 0.01687).abs() < 1e-5, "{u100}");
        assert!((u200 - 0.00028).abs() < 1e-5, "{u200}");
        assert_eq!(undetected_probability(0.3, 0).unwrap(), 1.0);
        assert_eq!(undetected_probability(0.0, 0).unwrap(), 1.0);
        assert!((detection_probability(0.96, 1).unwrap() - 0.04).abs() < 1e-12);
        assert!(undetected_probability(1.1, 3).is_err());
        assert!(undetected_probability(-0.1, 3).is_err());
    }

    #[test]
    fn monte_carlo_default() {
        let d = BehaviorDistribution::default_aggregate();
        let est = monte_carlo_success(&ManipulationPolicy::Always, &d, 100_000, 11).unwrap();
        assert!((est.estimate - 0.96).abs() <= 3.0 * est.stderr, "{est:?}");
        let again = monte_carlo_success(&ManipulationPolicy::Always, &d, 100_000, 11).unwrap();
        assert_eq!(est, again);
        let never = monte_carlo_success(&ManipulationPolicy::Never, &d, 1000, 11).unwrap();
        assert_eq!(never.estimate, 0.0);
        assert!(matches!(
            monte_carlo_success(&ManipulationPolicy::Never, &d, 0, 11),
            Err(AdversaryError::NoTrials)
        ));
    }

    /// Distributions with at most six support patterns of length at most four.
    fn small_distribution() -> impl Strategy<Value = BehaviorDistribution> {
        let pattern = (0usize..4, any::<u8>()).prop_map(|(extra, bits)| {
            let mut s = String::from("V");
            for i in 0..extra {
                s.push(if bits & (1 << i) == 0 { 'V' } else { 'C' });
            }
            s
        });
        proptest::collection::btree_map(pattern, 1u32..100, 1..=6).prop_map(|weights| {
            let total: u32 = weights.values().sum();
            let entries = weights
                .into_iter()
                .map(|(s, w)| (s.parse().unwrap(), w as f64 / total as f64))
                .collect();
            BehaviorDistribution::new(entries).unwrap()
        })
    }

    fn vote_after_check(d: &BehaviorDistribution) -> bool {
        d.support().any(|(s, _)| {
            let a = s.actions();
            a.iter()
                .position(|x| *x == Action::Check)
                .is_some_and(|i| a[i..].contains(&Action::Vote))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn brute_force_agrees_with_dp(d in small_distribution()) {
            let (table, best) = optimal_policy(&d, 4).unwrap();
            prop_assert!((best - optimal_success_dp(&d)).abs() < 1e-9);
            prop_assert!((analytic_success(&table, &d).unwrap() - best).abs() < 1e-9);
            let always = analytic_success(&ManipulationPolicy::Always, &d).unwrap();
            prop_assert!(best + 1e-12 >= always);
        }

        #[test]
        fn always_optimal_without_revote_after_check(d in small_distribution()) {
            // once a check has happened no later vote can be manipulated
            // profitably, so only vote-only patterns ever count as successes
            prop_assume!(!vote_after_check(&d));
            let (_, best) = optimal_policy(&d, 4).unwrap();
            let always = analytic_success(&ManipulationPolicy::Always, &d).unwrap();
            prop_assert!((best - always).abs() < 1e-9);
        }

        #[test]
        fn outcome_masses_partition(d in small_distribution(), mask in any::<u16>()) {
            let partial: BTreeMap<String, Decision> = reachable_histories(&d)
                .into_iter()
                .enumerate()
                .map(|(i, h)| (h, if mask & (1 << i) == 0 { Decision::Manipulate } else { Decision::Honest }))
                .collect();
            let table = PolicyTable::from_partial(3, &partial, Decision::Honest).unwrap();
            let m = analytic_outcomes(&table, &d).unwrap();
            prop_assert!((m.success + m.caught + m.silent_fail - 1.0).abs() < 1e-9);
        }

        #[test]
        fn detection_monotone(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, k1 in 0u32..500, k2 in 0u32..500) {
            let (lo_p, hi_p) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let (lo_k, hi_k) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            prop_assert!(detection_probability(lo_p, lo_k).unwrap() <= detection_probability(lo_p, hi_k).unwrap() + 1e-15);
            prop_assert!(detection_probability(hi_p, lo_k).unwrap() <= detection_probability(lo_p, lo_k).unwrap() + 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn monte_carlo_within_four_sigma(d in small_distribution(), seed in any::<u64>()) {
            let est = monte_carlo_success(&ManipulationPolicy::Always, &d, 20_000, seed).unwrap();
            let exact = analytic_success(&ManipulationPolicy::Always, &d).unwrap();
            // stderr vanishes at the endpoints, where the estimate is exact
            prop_assert!((est.estimate - exact).abs() <= 4.0 * est.stderr + 1e-12, "{:?} vs {}", est, exact);
        }
    }
}
