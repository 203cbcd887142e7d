//! Checks the pinned group constants with a primality test written here,
//! independent of the library's own.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use ivxv_core::crypto::{setup, GroupPreset};

const WITNESSES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn miller_rabin(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for w in WITNESSES {
        let w = BigUint::from(w);
        if *n == w {
            return true;
        }
        if (n % &w).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let mut d = n_minus_1.clone();
    let mut s = 0u32;
    while (&d % 2u32).is_zero() {
        d >>= 1;
        s += 1;
    }
    'witness: for w in WITNESSES {
        let mut x = BigUint::from(w).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[test]
fn oracle_sanity() {
    let primes = [2u64, 3, 23, 7919, 2_147_483_647, 18_446_744_073_709_551_557];
    let composites = [1u64, 4, 561, 1105, 3_215_031_751, 18_446_744_073_709_551_615];
    assert!(primes.iter().all(|&p| miller_rabin(&BigUint::from(p))));
    assert!(composites.iter().all(|&c| !miller_rabin(&BigUint::from(c))));
}

#[test]
fn presets_are_safe_prime_groups() {
    for (preset, bits) in [(GroupPreset::Toy, 5), (GroupPreset::Medium, 256), (GroupPreset::Standard, 2048)] {
        let params = setup(preset, 4).unwrap();
        let (p, q) = (params.p(), params.q());
        assert_eq!(p.bits(), bits, "{preset:?}");
        assert_eq!(*p, q * 2u32 + 1u32, "{preset:?}");
        assert!(miller_rabin(p), "{preset:?} modulus");
        assert!(miller_rabin(q), "{preset:?} subgroup order");
        let g = params.generator().value();
        assert!(!g.is_one());
        assert!(g.modpow(q, p).is_one(), "{preset:?} generator order");
    }
}
