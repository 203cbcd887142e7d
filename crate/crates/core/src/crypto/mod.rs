//! Group arithmetic, re-randomizable encryption and threshold key sharing.

pub mod elgamal;
pub mod group;
pub mod shamir;

use thiserror::Error;

pub use elgamal::{
    decrypt, encrypt, keygen, keypair_from_secret, rerandomize, trapdoor_decrypt, Ciphertext,
    PublicKey, SecretKey,
};
pub use group::{setup, Element, GroupParams, GroupPreset, Scalar, MAX_CANDIDATE_BOUND};
pub use shamir::{deal, reconstruct, SecretShare};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unknown group preset `{0}` (expected toy, medium or standard)")]
    UnknownPreset(String),
    #[error("invalid group parameters: {0}")]
    InvalidParams(&'static str),
    #[error("candidate bound {0} must satisfy 1 <= C <= min(q, 2^16)")]
    CandidateBound(u32),
    #[error("message {m} outside candidate range [0, {bound})")]
    MessageOutOfRange { m: u32, bound: u32 },
    #[error("not-a-candidate: plaintext outside the candidate range")]
    NotACandidate,
    #[error("randomness-mismatch: c1 != g^r")]
    RandomnessMismatch,
    #[error("element is not in the order-q subgroup")]
    NotInSubgroup,
    #[error("invalid threshold t={t} for k={k} shares")]
    Threshold { t: u32, k: u32 },
    #[error("insufficient-shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: u32 },
    #[error("duplicate or zero share index {0}")]
    DuplicateShareIndex(u32),
}
