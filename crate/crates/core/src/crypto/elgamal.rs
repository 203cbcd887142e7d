//! Lifted ElGamal: `Enc(m; r) = (g^r, g^m h^r)`.
//!
//! Plaintexts are candidate indices in `[0, C)`. Decryption recovers `g^m` and
//! then scans the candidate range, which is cheap because `C <= 2^16`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::group::{Element, GroupParams, Scalar};
use super::CryptoError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey {
    pub h: Element,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    pub sk: Scalar,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    pub c1: Element,
    pub c2: Element,
}

impl Ciphertext {
    pub fn is_valid(&self, params: &GroupParams) -> bool {
        params.is_member(&self.c1) && params.is_member(&self.c2)
    }
}

/// Samples `sk` uniformly from `[1, q)`.
pub fn keygen<R: Rng + ?Sized>(params: &GroupParams, rng: &mut R) -> (PublicKey, SecretKey) {
    keypair_from_secret(params, params.random_nonzero_scalar(rng))
}

/// Derives the public key for a fixed secret.
pub fn keypair_from_secret(params: &GroupParams, sk: Scalar) -> (PublicKey, SecretKey) {
    let h = params.g_pow(&sk);
    (PublicKey { h }, SecretKey { sk })
}

fn check_plaintext(params: &GroupParams, m: u32) -> Result<(), CryptoError> {
    if m >= params.candidate_bound() {
        return Err(CryptoError::MessageOutOfRange {
            m,
            bound: params.candidate_bound(),
        });
    }
    Ok(())
}

pub fn encrypt(
    params: &GroupParams,
    pk: &PublicKey,
    m: u32,
    r: &Scalar,
) -> Result<Ciphertext, CryptoError> {
    check_plaintext(params, m)?;
    Ok(Ciphertext {
        c1: params.g_pow(r),
        c2: params.mul(&params.encode(m), &params.pow(&pk.h, r)),
    })
}

/// Linear-scan discrete log of `x` over `[0, C)`.
pub fn small_dlog(params: &GroupParams, x: &Element) -> Result<u32, CryptoError> {
    let g = params.generator();
    let mut acc = params.identity();
    for m in 0..params.candidate_bound() {
        if acc == *x {
            return Ok(m);
        }
        acc = params.mul(&acc, g);
    }
    Err(CryptoError::NotACandidate)
}

pub fn decrypt(params: &GroupParams, sk: &SecretKey, ct: &Ciphertext) -> Result<u32, CryptoError> {
    let shared = params.pow(&ct.c1, &sk.sk);
    small_dlog(params, &params.div(&ct.c2, &shared))
}

/// `Rand(pk, ct; r') = (c1 g^r', c2 h^r')`.
pub fn rerandomize(params: &GroupParams, pk: &PublicKey, ct: &Ciphertext, r: &Scalar) -> Ciphertext {
    Ciphertext {
        c1: params.mul(&ct.c1, &params.g_pow(r)),
        c2: params.mul(&ct.c2, &params.pow(&pk.h, r)),
    }
}

/// Opens a ciphertext with its encryption randomness instead of the secret key.
/// This is the cast-as-intended check performed by the audit device.
pub fn trapdoor_decrypt(
    params: &GroupParams,
    pk: &PublicKey,
    ct: &Ciphertext,
    r: &Scalar,
) -> Result<u32, CryptoError> {
    if params.g_pow(r) != ct.c1 {
        return Err(CryptoError::RandomnessMismatch);
    }
    small_dlog(params, &params.div(&ct.c2, &params.pow(&pk.h, r)))
}
