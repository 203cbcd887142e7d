//! Shamir `(t, k)` sharing of the election secret key over `Z_q`.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::elgamal::SecretKey;
use super::group::{GroupParams, Scalar};
use super::CryptoError;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretShare {
    /// Evaluation point, `1..=k`.
    pub index: u32,
    pub value: Scalar,
}

impl std::fmt::Debug for SecretShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SecretShare({}, ..)", self.index)
    }
}

/// Splits `sk` into `k` shares, any `t` of which reconstruct it.
pub fn deal<R: Rng + ?Sized>(
    params: &GroupParams,
    sk: &SecretKey,
    t: u32,
    k: u32,
    rng: &mut R,
) -> Result<Vec<SecretShare>, CryptoError> {
    let coefficients: Vec<Scalar> = (1..t).map(|_| params.random_scalar(rng)).collect();
    deal_with_coefficients(params, sk, t, k, &coefficients)
}

/// Dealing with caller-chosen higher-order coefficients `a_1..a_{t-1}`.
pub fn deal_with_coefficients(
    params: &GroupParams,
    sk: &SecretKey,
    t: u32,
    k: u32,
    coefficients: &[Scalar],
) -> Result<Vec<SecretShare>, CryptoError> {
    if t == 0 || t > k {
        return Err(CryptoError::Threshold { t, k });
    }
    if coefficients.len() != (t - 1) as usize {
        return Err(CryptoError::Threshold { t, k });
    }
    if BigUint::from(k) >= *params.q() {
        // evaluation points must be distinct and non-zero mod q
        return Err(CryptoError::Threshold { t, k });
    }
    let shares = (1..=k)
        .map(|i| {
            let x = params.scalar(i);
            // Horner from the highest coefficient down to the constant term
            let value = coefficients
                .iter()
                .rev()
                .fold(params.scalar(0u32), |acc, a| params.add(&params.smul(&acc, &x), a));
            let value = params.add(&params.smul(&value, &x), &sk.sk);
            SecretShare { index: i, value }
        })
        .collect();
    Ok(shares)
}

/// Lagrange interpolation at zero. Uses every supplied share; `t` is only the
/// minimum count.
pub fn reconstruct(
    params: &GroupParams,
    shares: &[SecretShare],
    t: u32,
) -> Result<SecretKey, CryptoError> {
    if shares.len() < t as usize || shares.is_empty() {
        return Err(CryptoError::InsufficientShares {
            have: shares.len(),
            need: t,
        });
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if s.index == 0 || !seen.insert(s.index) {
            return Err(CryptoError::DuplicateShareIndex(s.index));
        }
    }
    let mut secret = params.scalar(0u32);
    for (j, sj) in shares.iter().enumerate() {
        let xj = params.scalar(sj.index);
        let mut num = params.scalar(1u32);
        let mut den = params.scalar(1u32);
        for (m, sm) in shares.iter().enumerate() {
            if m == j {
                continue;
            }
            let xm = params.scalar(sm.index);
            // L_j(0) = prod x_m / (x_m - x_j)
            num = params.smul(&num, &xm);
            den = params.smul(&den, &params.sub(&xm, &xj));
        }
        let inv = params
            .sinv(&den)
            .ok_or(CryptoError::DuplicateShareIndex(sj.index))?;
        let coeff = params.smul(&num, &inv);
        secret = params.add(&secret, &params.smul(&coeff, &sj.value));
    }
    Ok(SecretKey { sk: secret })
}
