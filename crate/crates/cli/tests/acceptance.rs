//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any failed.
//!
//! Tolerances and sizes are pinned here:
//!   1. analyze, default distribution, always-manipulate: 0.9600 to 4 decimals, < 1 s
//!   2. sweep p = 0.96: 1.687 % at k = 100 and 0.028 % at k = 200, +-0.001 points, < 1 s
//!   3. exhaustive optimum, default distribution, max length 4: 0.9600 attained by
//!      always-manipulate, < 10 s
//!   4. 10^4 toy-group ceremonies, one corrupted voter: detection within 4 standard
//!      errors of 0.04, < 5 min
//!   5. 1000 honest toy-group elections (n = 20, k = 3, t = 2): all valid, tally equals
//!      the intent histogram, < 2 min
//!   6. five tampering modes x 100 seeded trials: invalid with the expected reason
//!      every time
//!   7. crypto property suites with 1000 cases each; shuffle soundness has zero
//!      false accepts

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use ivxv_core::adversary::{analytic_success, end_to_end_attack, optimal_policy, BehaviorDistribution, ManipulationPolicy};
use ivxv_core::ceremony::{
    run_election, AuditVerdict, CorruptionConfig, ElectionConfig, FailureReason, PolicySource, Tamper,
};
use ivxv_core::crypto::{
    decrypt, deal, encrypt, keypair_from_secret, reconstruct, rerandomize, setup, trapdoor_decrypt,
    Ciphertext, GroupParams, GroupPreset, SecretKey,
};
use ivxv_core::rng::derive_rng;
use ivxv_core::shuffle::{prove_shuffle, shuffle, verify_shuffle, verify_shuffle_bytes, ShuffleStatement};
use ivxv_sim::{cmd_analyze, sweep_csv};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if elapsed > limit {
        o.pass = false;
    }
    o.detail = format!("{} [{:.2?}, limit {:?}]", o.detail, elapsed, limit);
    o
}

fn criterion_1() -> Outcome {
    timed(Duration::from_secs(1), || {
        let mut buf = Vec::new();
        let code = cmd_analyze("default", "always", None, &mut buf).expect("analyze runs");
        let text = String::from_utf8(buf).unwrap();
        let success: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("success "))
            .and_then(|v| v.parse().ok())
            .expect("success line");
        let pass = code == 0 && format!("{success:.4}") == "0.9600" && text.contains("success 0.960000\n");
        outcome(pass, format!("always-manipulate success {success:.6}"))
    })
}

fn criterion_2() -> Outcome {
    timed(Duration::from_secs(1), || {
        let csv = sweep_csv(0.96, 100, 200).expect("sweep runs");
        let undetected = |k: u32| -> f64 {
            csv.lines()
                .find_map(|l| {
                    let mut cols = l.split(',');
                    (cols.next() == Some(&k.to_string())).then(|| cols.next().unwrap().parse().unwrap())
                })
                .expect("row present")
        };
        let u100 = undetected(100) * 100.0;
        let u200 = undetected(200) * 100.0;
        let pass = (u100 - 1.687).abs() <= 0.001 && (u200 - 0.028).abs() <= 0.001;
        outcome(pass, format!("undetected k=100 {u100:.4}%, k=200 {u200:.4}%"))
    })
}

fn criterion_3() -> Outcome {
    timed(Duration::from_secs(10), || {
        let dist = BehaviorDistribution::default_aggregate();
        let (table, best) = optimal_policy(&dist, 4).expect("enumeration runs");
        let always = analytic_success(&ManipulationPolicy::Always, &dist).unwrap();
        let table_value = analytic_success(&table, &dist).unwrap();
        let pass = format!("{best:.4}") == "0.9600"
            && (always - best).abs() < 1e-12
            && (table_value - best).abs() < 1e-12;
        outcome(pass, format!("optimum {best:.6}, always-manipulate {always:.6}"))
    })
}

fn criterion_4() -> Outcome {
    timed(Duration::from_secs(300), || {
        let config = ElectionConfig::honest(5, 1, 1, 3, GroupPreset::Toy, 2024);
        let report = end_to_end_attack(&config, &ManipulationPolicy::Always, 1, 10_000).expect("attack runs");
        let est = report.detection;
        let deviation = (est.estimate - 0.04).abs();
        let pass = deviation <= 4.0 * est.stderr;
        outcome(
            pass,
            format!(
                "detected {}/{} = {:.4} (stderr {:.4}, |diff| = {:.2} stderr)",
                report.detected,
                report.trials,
                est.estimate,
                est.stderr,
                deviation / est.stderr
            ),
        )
    })
}

fn histogram(xs: &[u32]) -> BTreeMap<u32, u64> {
    let mut h = BTreeMap::new();
    for &x in xs {
        *h.entry(x).or_default() += 1;
    }
    h
}

fn criterion_5() -> Outcome {
    timed(Duration::from_secs(120), || {
        let mut failures = 0;
        for seed in 0..1000u64 {
            let config = ElectionConfig::honest(20, 3, 2, 4, GroupPreset::Toy, seed);
            match run_election(&config) {
                Ok(out) if out.verdict.is_valid() && out.tally.counts == histogram(&out.intents) && out.tally.rejected == 0 => {}
                _ => failures += 1,
            }
        }
        outcome(failures == 0, format!("{failures} failures in 1000 honest elections"))
    })
}

fn criterion_6() -> Outcome {
    const TRIALS: u64 = 100;
    let n = 5u32;
    let base = move |seed: u64| ElectionConfig::honest(n, 3, 2, 4, GroupPreset::Medium, seed);
    type Build = Box<dyn Fn(u64) -> ElectionConfig>;
    let cases: Vec<(&str, FailureReason, Build)> = vec![
        (
            "forged-signature",
            FailureReason::BadSignature,
            Box::new(move |s| {
                let mut c = base(s);
                c.tamper = Some(Tamper::ForgedBallot { voter: (s % n as u64) as u32 });
                c
            }),
        ),
        (
            "non-last-ballot",
            FailureReason::LastBallotMismatch,
            Box::new(move |s| {
                let mut c = base(s);
                let voter = (s % n as u64) as u32;
                c.scripts.insert(voter, "VV".parse().unwrap());
                c.tamper = Some(Tamper::MixNonLast { voter });
                c
            }),
        ),
        (
            "shuffle-output",
            FailureReason::ShuffleProof,
            Box::new(move |s| {
                let mut c = base(s);
                c.tamper = Some(Tamper::ShuffleOutput { index: (s % n as u64) as usize });
                c
            }),
        ),
        (
            "posted-plaintext",
            FailureReason::Decryption,
            Box::new(move |s| {
                let mut c = base(s);
                c.tamper = Some(Tamper::Plaintext { index: (s % n as u64) as usize });
                c
            }),
        ),
        (
            "complained-manipulation",
            FailureReason::Complaint,
            Box::new(move |s| {
                let mut c = base(s);
                let voter = (s % n as u64) as u32;
                c.corruption = Some(CorruptionConfig {
                    voters: vec![voter],
                    policy: PolicySource::Always,
                    target: None,
                });
                c.scripts.insert(voter, "VC".parse().unwrap());
                c
            }),
        ),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (name, expected, build) in cases {
        let mut hits = 0;
        for trial in 0..TRIALS {
            let config = build(10_000 + trial);
            if let Ok(out) = run_election(&config) {
                let only_complaint = expected != FailureReason::Complaint
                    || out.verdict == AuditVerdict::Invalid { reasons: vec![FailureReason::Complaint] };
                if out.verdict.reason() == Some(expected) && only_complaint {
                    hits += 1;
                }
            }
        }
        pass &= hits == TRIALS;
        details.push(format!("{name} {hits}/{TRIALS}"));
    }
    outcome(pass, details.join(", "))
}

fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> (bool, String) {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    match runner.run(&strategy, test) {
        Ok(()) => (true, format!("{name} {cases} ok")),
        Err(e) => (false, format!("{name} FAILED: {e}")),
    }
}

fn medium(bound: u32) -> GroupParams {
    setup(GroupPreset::Medium, bound).unwrap()
}

fn criterion_7() -> Outcome {
    const CASES: u32 = 1000;
    let mut results = Vec::new();

    let params = medium(16);
    results.push(run_property(
        "rerandomization",
        CASES,
        (0u32..16, 1u64.., any::<u64>(), proptest::collection::vec(any::<u64>(), 1..6)),
        |(m, sk, r0, rs)| {
            let (pk, sk) = keypair_from_secret(&params, params.scalar(sk));
            let mut ct = encrypt(&params, &pk, m, &params.scalar(r0)).unwrap();
            for r in rs {
                ct = rerandomize(&params, &pk, &ct, &params.scalar(r));
                prop_assert!(ct.is_valid(&params));
                prop_assert_eq!(decrypt(&params, &sk, &ct).unwrap(), m);
            }
            Ok(())
        },
    ));

    results.push(run_property(
        "trapdoor-decryption",
        CASES,
        (0u32..16, 1u64.., any::<u64>()),
        |(m, sk, r)| {
            let (pk, sk) = keypair_from_secret(&params, params.scalar(sk));
            let r = params.scalar(r);
            let ct = encrypt(&params, &pk, m, &r).unwrap();
            prop_assert_eq!(trapdoor_decrypt(&params, &pk, &ct, &r).unwrap(), decrypt(&params, &sk, &ct).unwrap());
            Ok(())
        },
    ));

    results.push(run_property(
        "shamir-subsets",
        CASES,
        (1u32..=5, any::<u64>()).prop_flat_map(|(k, seed)| (Just(k), 1u32..=k, Just(seed))),
        |(k, t, seed)| {
            let mut rng = derive_rng(seed, "acceptance-shamir", 0);
            let secret = SecretKey { sk: params.random_scalar(&mut rng) };
            let shares = deal(&params, &secret, t, k, &mut rng).unwrap();
            for mask in 0u32..(1 << k) {
                if mask.count_ones() != t {
                    continue;
                }
                let subset: Vec<_> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| shares[i as usize].clone()).collect();
                prop_assert_eq!(&reconstruct(&params, &subset, t).unwrap(), &secret);
            }
            Ok(())
        },
    ));

    let toy = setup(GroupPreset::Toy, 4).unwrap();
    results.push(run_property(
        "shuffle-completeness",
        CASES,
        (1usize..=12, any::<u64>()),
        |(n, seed)| {
            let mut rng = derive_rng(seed, "acceptance-shuffle", n as u64);
            let (pk, _) = keypair_from_secret(&toy, toy.random_nonzero_scalar(&mut rng));
            let inputs: Vec<Ciphertext> = (0..n)
                .map(|i| encrypt(&toy, &pk, (i % 4) as u32, &toy.random_scalar(&mut rng)).unwrap())
                .collect();
            let (outputs, witness) = shuffle(&toy, &pk, &inputs, &mut rng);
            let statement = ShuffleStatement { pk, inputs, outputs };
            let proof = prove_shuffle(&toy, &statement, &witness, &mut rng).unwrap();
            prop_assert!(verify_shuffle(&toy, &statement, &proof).is_accept());
            prop_assert!(verify_shuffle_bytes(&toy, &statement, &proof.to_bytes()).is_accept());
            Ok(())
        },
    ));

    let false_accepts = std::cell::Cell::new(0u32);
    let soundness = run_property(
        "shuffle-soundness",
        CASES,
        (2usize..=5, any::<u64>(), 0u8..4, any::<prop::sample::Index>()),
        |(n, seed, mode, pick)| {
            let mut rng = derive_rng(seed, "acceptance-soundness", n as u64);
            let (pk, _) = keypair_from_secret(&params, params.random_nonzero_scalar(&mut rng));
            let inputs: Vec<Ciphertext> = (0..n)
                .map(|i| encrypt(&params, &pk, i as u32, &params.random_scalar(&mut rng)).unwrap())
                .collect();
            let (outputs, witness) = shuffle(&params, &pk, &inputs, &mut rng);
            let mut statement = ShuffleStatement { pk: pk.clone(), inputs, outputs };
            let proof = prove_shuffle(&params, &statement, &witness, &mut rng).unwrap();
            let mut bytes = proof.to_bytes();
            let i = pick.index(n);
            match mode {
                // an output re-encrypted to a different candidate
                0 => {
                    let c = &mut statement.outputs[i];
                    c.c2 = params.mul(&c.c2, params.generator());
                }
                // an output replaced by a fresh ballot
                1 => {
                    statement.outputs[i] = encrypt(&params, &pk, 15, &params.random_scalar(&mut rng)).unwrap();
                }
                // a different input list, as if another ballot had been mixed
                2 => {
                    statement.inputs[i] = encrypt(&params, &pk, 15, &params.random_scalar(&mut rng)).unwrap();
                }
                // one corrupted proof byte
                _ => {
                    let at = pick.index(bytes.len());
                    bytes[at] ^= 1 + (seed as u8 % 255);
                }
            }
            if verify_shuffle_bytes(&params, &statement, &bytes).is_accept() {
                false_accepts.set(false_accepts.get() + 1);
            }
            Ok(())
        },
    );
    let accepted = false_accepts.get();
    results.push((soundness.0 && accepted == 0, format!("{} ({} false accepts)", soundness.1, accepted)));

    let pass = results.iter().all(|(ok, _)| *ok);
    let detail: Vec<String> = results.into_iter().map(|(_, d)| d).collect();
    outcome(pass, detail.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 optimal-strategy success", criterion_1),
        ("2 detection checkpoints", criterion_2),
        ("3 brute-force optimality", criterion_3),
        ("4 model vs ceremony", criterion_4),
        ("5 honest end-to-end", criterion_5),
        ("6 tamper suite", criterion_6),
        ("7 crypto property suite", criterion_7),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!("criterion {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {}/7 passed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
