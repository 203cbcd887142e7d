//! Desk-scale simulator for the Estonian IVXV internet-voting ceremony.
//!
//! The crate is organised bottom-up:
//!
//! - [`crypto`]: Schnorr-group arithmetic, lifted ElGamal with re-randomization and
//!   trapdoor decryption, and Shamir sharing of the election key.
//! - [`shuffle`]: a Fiat–Shamir permutation-commitment shuffle argument used by the
//!   election authority to prove its mix.
//! - [`functionalities`]: the trusted in-process components the protocol relies on
//!   (bulletin board, certification, key generation, decryption, voter and audit
//!   devices, voter-behavior emulator).
//! - [`ceremony`]: the protocol parties and a deterministic FIFO scheduler that runs
//!   preparation, voting, tally and audit end to end.
//! - [`adversary`]: voter-behavior distributions, manipulation policies, and the
//!   detection analysis (analytic, exhaustive, Monte Carlo, and full-ceremony).

pub mod adversary;
pub mod ceremony;
pub mod crypto;
pub mod encoding;
pub mod functionalities;
pub mod rng;
pub mod shuffle;

pub use crypto::{
    Ciphertext, CryptoError, Element, GroupParams, GroupPreset, PublicKey, Scalar, SecretKey,
    SecretShare,
};
