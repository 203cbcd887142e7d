//! Trusted in-process components the ceremony runs on top of: bulletin board,
//! certification registry, key generation, threshold decryption, the voter's
//! casting and audit devices, and the voter-behavior emulator.
//!
//! Each one is a plain struct with serialized access; the ceremony scheduler is
//! the only caller and runs single-threaded.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{
    Action, AdversaryError, BehaviorDistribution, Decision, DecisionRule, ManipulationPolicy,
    VoterScript,
};
use crate::crypto::{
    decrypt, deal, encrypt, keygen, reconstruct, trapdoor_decrypt, Ciphertext, CryptoError,
    GroupParams, PublicKey, Scalar, SecretKey, SecretShare,
};
use crate::encoding::Writer;
use crate::shuffle::{ProofBytes, ShuffleError};

#[derive(Debug, Error)]
pub enum FunctionalityError {
    #[error("{0} may not read the private board")]
    AccessDenied(Role),
    #[error("voter {signer} cannot sign for subsession of voter {owner}")]
    NotBound { signer: u32, owner: u32 },
    #[error("not-ready: {ready} of {k} trustees signaled ready")]
    NotReady { ready: usize, k: u32 },
    #[error("unknown trustee {0}")]
    UnknownTrustee(u32),
    #[error("threshold-not-met: {submitted} trustees submitted, {need} required")]
    ThresholdNotMet { submitted: usize, need: u32 },
    #[error("missing-shuffle: no shuffled ciphertexts on the board")]
    MissingShuffle,
    #[error("unknown-ssid {0}")]
    UnknownSsid(SubsessionId),
    #[error("session mismatch: expected `{expected}`, got `{got}`")]
    SessionMismatch { expected: String, got: String },
    #[error("no candidate other than {0} to substitute")]
    NoSubstitute(u32),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error(transparent)]
    Policy(#[from] AdversaryError),
}

type Result<T> = std::result::Result<T, FunctionalityError>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// `(voter, nonce)`: one ballot submission by one voter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsessionId {
    pub voter: u32,
    pub nonce: u32,
}

impl fmt::Display for SubsessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.voter, self.nonce)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Ea,
    Auditor,
    Voter(u32),
    Trustee(u32),
    Public,
    /// Another trusted component, e.g. the audit device fetching a recorded
    /// ballot.
    Functionality,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Ea => f.write_str("ea"),
            Role::Auditor => f.write_str("auditor"),
            Role::Voter(i) => write!(f, "voter-{i}"),
            Role::Trustee(i) => write!(f, "trustee-{i}"),
            Role::Public => f.write_str("public"),
            Role::Functionality => f.write_str("functionality"),
        }
    }
}

/// Opaque certification handle, 128 random bits in hex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CertHandle(pub String);

impl CertHandle {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        CertHandle(hex::encode(rng.gen::<[u8; 16]>()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub ssid: SubsessionId,
    pub c: Ciphertext,
    pub sigma: CertHandle,
}

/// The bytes a ballot's certification covers.
pub fn ciphertext_bytes(c: &Ciphertext) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_uint(c.c1.value()).put_uint(c.c2.value());
    w.into_bytes()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShufflePost {
    /// The list the authority claims to have mixed.
    pub inputs: Vec<Ciphertext>,
    pub outputs: Vec<Ciphertext>,
    pub proof: ProofBytes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PubEntry {
    PublicKey(PublicKey),
    /// One entry per shuffled ciphertext; `None` where decryption found no
    /// candidate.
    Plaintexts(Vec<Option<u32>>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivEntry {
    Ballot(Ballot),
    Shuffle(ShufflePost),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posted<T> {
    pub seq: u64,
    pub entry: T,
}

/// Append-only board with a public and a private part sharing one sequence
/// counter.
#[derive(Clone, Debug)]
pub struct BulletinBoard {
    sid: SessionId,
    pub_entries: Vec<Posted<PubEntry>>,
    priv_entries: Vec<Posted<PrivEntry>>,
    next_seq: u64,
}

impl BulletinBoard {
    pub fn new(sid: SessionId) -> Self {
        BulletinBoard {
            sid,
            pub_entries: Vec::new(),
            priv_entries: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn sid(&self) -> &SessionId {
        &self.sid
    }

    fn check_sid(&self, sid: &SessionId) -> Result<()> {
        if *sid != self.sid {
            return Err(FunctionalityError::SessionMismatch {
                expected: self.sid.0.clone(),
                got: sid.0.clone(),
            });
        }
        Ok(())
    }

    pub fn pub_post(&mut self, sid: &SessionId, entry: PubEntry) -> Result<u64> {
        self.check_sid(sid)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pub_entries.push(Posted { seq, entry });
        Ok(seq)
    }

    pub fn priv_post(&mut self, sid: &SessionId, entry: PrivEntry) -> Result<u64> {
        self.check_sid(sid)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.priv_entries.push(Posted { seq, entry });
        Ok(seq)
    }

    pub fn read_pub(&self) -> &[Posted<PubEntry>] {
        &self.pub_entries
    }

    pub fn read_priv(&self, reader: Role) -> Result<&[Posted<PrivEntry>]> {
        match reader {
            Role::Ea | Role::Auditor | Role::Functionality => Ok(&self.priv_entries),
            other => Err(FunctionalityError::AccessDenied(other)),
        }
    }

    /// Public part for everyone, private part only for roles allowed to see it.
    pub fn read(&self, reader: Role) -> (&[Posted<PubEntry>], Option<&[Posted<PrivEntry>]>) {
        (self.read_pub(), self.read_priv(reader).ok())
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    /// SHA-256 over the canonical JSON of every entry with `seq < upto`.
    pub fn prefix_digest(&self, upto: u64) -> [u8; 32] {
        let mut hasher = Sha256::new();
        let mut pub_iter = self.pub_entries.iter().peekable();
        let mut priv_iter = self.priv_entries.iter().peekable();
        for seq in 0..upto.min(self.next_seq) {
            let line = if pub_iter.peek().is_some_and(|p| p.seq == seq) {
                serde_json::to_vec(&pub_iter.next().expect("peeked").entry)
            } else {
                serde_json::to_vec(&priv_iter.next().expect("seq is dense").entry)
            }
            .expect("board entries serialize");
            hasher.update(seq.to_be_bytes());
            hasher.update((line.len() as u64).to_be_bytes());
            hasher.update(&line);
        }
        hasher.finalize().into()
    }

    pub fn public_key(&self) -> Option<&PublicKey> {
        self.pub_entries.iter().find_map(|p| match &p.entry {
            PubEntry::PublicKey(pk) => Some(pk),
            _ => None,
        })
    }

    pub fn latest_plaintexts(&self) -> Option<&[Option<u32>]> {
        self.pub_entries.iter().rev().find_map(|p| match &p.entry {
            PubEntry::Plaintexts(m) => Some(m.as_slice()),
            _ => None,
        })
    }

    pub fn ballots(&self) -> impl Iterator<Item = &Ballot> {
        self.priv_entries.iter().filter_map(|p| match &p.entry {
            PrivEntry::Ballot(b) => Some(b),
            _ => None,
        })
    }

    pub fn latest_shuffle(&self) -> Option<&ShufflePost> {
        self.priv_entries.iter().rev().find_map(|p| match &p.entry {
            PrivEntry::Shuffle(s) => Some(s),
            _ => None,
        })
    }

    /// Most recent ballot recorded under `ssid`.
    pub fn find_ballot(&self, ssid: SubsessionId) -> Option<&Ballot> {
        self.priv_entries.iter().rev().find_map(|p| match &p.entry {
            PrivEntry::Ballot(b) if b.ssid == ssid => Some(b),
            _ => None,
        })
    }
}

/// Ideal certification: a handle verifies only for the exact tuple it was
/// issued on.
#[derive(Clone, Debug)]
pub struct CertRegistry {
    sid: SessionId,
    issued: HashMap<(SubsessionId, Vec<u8>), BTreeSet<CertHandle>>,
    rng: ChaCha20Rng,
}

impl CertRegistry {
    pub fn new(sid: SessionId, rng: ChaCha20Rng) -> Self {
        CertRegistry {
            sid,
            issued: HashMap::new(),
            rng,
        }
    }

    /// Issues a fresh handle. Only the device bound to `ssid.voter` may sign.
    pub fn sign(
        &mut self,
        sid: &SessionId,
        signer: u32,
        ssid: SubsessionId,
        message: &[u8],
    ) -> Result<CertHandle> {
        if *sid != self.sid {
            return Err(FunctionalityError::SessionMismatch {
                expected: self.sid.0.clone(),
                got: sid.0.clone(),
            });
        }
        if signer != ssid.voter {
            return Err(FunctionalityError::NotBound {
                signer,
                owner: ssid.voter,
            });
        }
        let sigma = CertHandle::random(&mut self.rng);
        self.record(ssid, message.to_vec(), sigma.clone());
        Ok(sigma)
    }

    /// Re-enters a previously issued handle, used when rebuilding state from a
    /// transcript.
    pub fn record(&mut self, ssid: SubsessionId, message: Vec<u8>, sigma: CertHandle) {
        self.issued.entry((ssid, message)).or_default().insert(sigma);
    }

    pub fn verify(&self, sid: &SessionId, ssid: SubsessionId, message: &[u8], sigma: &CertHandle) -> bool {
        *sid == self.sid
            && self
                .issued
                .get(&(ssid, message.to_vec()))
                .is_some_and(|set| set.contains(sigma))
    }
}

/// Ideal key generation: once all `k` trustees are ready it samples a key pair
/// and deals `(t, k)` shares, trustee `i` holding share index `i`.
#[derive(Clone, Debug)]
pub struct KeyGen {
    k: u32,
    t: u32,
    ready: BTreeSet<u32>,
    state: Option<(PublicKey, Vec<SecretShare>)>,
    rng: ChaCha20Rng,
}

impl KeyGen {
    pub fn new(k: u32, t: u32, rng: ChaCha20Rng) -> Self {
        KeyGen {
            k,
            t,
            ready: BTreeSet::new(),
            state: None,
            rng,
        }
    }

    pub fn ready(&mut self, params: &GroupParams, trustee: u32) -> Result<()> {
        if trustee == 0 || trustee > self.k {
            return Err(FunctionalityError::UnknownTrustee(trustee));
        }
        self.ready.insert(trustee);
        if self.ready.len() == self.k as usize && self.state.is_none() {
            let (pk, sk) = keygen(params, &mut self.rng);
            let shares = deal(params, &sk, self.t, self.k, &mut self.rng)?;
            self.state = Some((pk, shares));
        }
        Ok(())
    }

    pub fn pubkey(&self) -> Result<PublicKey> {
        self.state
            .as_ref()
            .map(|(pk, _)| pk.clone())
            .ok_or(FunctionalityError::NotReady {
                ready: self.ready.len(),
                k: self.k,
            })
    }

    pub fn share(&self, trustee: u32) -> Option<&SecretShare> {
        self.state
            .as_ref()
            .and_then(|(_, shares)| shares.iter().find(|s| s.index == trustee))
    }
}

/// Ideal threshold decryption.
#[derive(Clone, Debug)]
pub struct Dec {
    t: u32,
    strict: bool,
    submitted: BTreeSet<u32>,
    shares: Vec<SecretShare>,
    revealed: Option<SecretKey>,
}

impl Dec {
    /// `strict` requires more than `t` submissions instead of at least `t`.
    pub fn new(t: u32, strict: bool) -> Self {
        Dec {
            t,
            strict,
            submitted: BTreeSet::new(),
            shares: Vec::new(),
            revealed: None,
        }
    }

    /// A decryption functionality that already knows the key, for re-auditing
    /// a stored transcript.
    pub fn from_revealed_key(sk: SecretKey) -> Self {
        Dec {
            t: 0,
            strict: false,
            submitted: BTreeSet::new(),
            shares: Vec::new(),
            revealed: Some(sk),
        }
    }

    pub fn submit_key(&mut self, keygen: &KeyGen, trustee: u32) -> Result<()> {
        let share = keygen
            .share(trustee)
            .ok_or(FunctionalityError::UnknownTrustee(trustee))?;
        if self.submitted.insert(trustee) {
            self.shares.push(share.clone());
        }
        Ok(())
    }

    fn needed(&self) -> u32 {
        if self.strict {
            self.t + 1
        } else {
            self.t
        }
    }

    pub fn threshold_met(&self) -> bool {
        self.submitted.len() >= self.needed() as usize
    }

    pub fn revealed_key(&self) -> Option<&SecretKey> {
        self.revealed.as_ref()
    }

    /// Reconstructs the key, decrypts the latest shuffled list and posts the
    /// plaintexts. `tamper` overwrites one posted plaintext with the next
    /// candidate, modeling a dishonest tally post.
    pub fn decrypt_and_post(
        &mut self,
        params: &GroupParams,
        board: &mut BulletinBoard,
        tamper: Option<usize>,
    ) -> Result<Vec<Option<u32>>> {
        if !self.threshold_met() {
            return Err(FunctionalityError::ThresholdNotMet {
                submitted: self.submitted.len(),
                need: self.needed(),
            });
        }
        let outputs = board
            .read_priv(Role::Functionality)?
            .iter()
            .rev()
            .find_map(|p| match &p.entry {
                PrivEntry::Shuffle(s) => Some(s.outputs.clone()),
                _ => None,
            })
            .ok_or(FunctionalityError::MissingShuffle)?;
        let sk = reconstruct(params, &self.shares, self.shares.len() as u32)?;
        let mut plaintexts: Vec<Option<u32>> = outputs
            .iter()
            .map(|c| decrypt(params, &sk, c).ok())
            .collect();
        if let Some(slot) = tamper.and_then(|i| plaintexts.get_mut(i)) {
            let bound = params.candidate_bound();
            *slot = Some(slot.map_or(0, |m| (m + 1) % bound));
            if bound == 1 {
                // a single-candidate election has no other candidate to claim
                *slot = None;
            }
        }
        let sid = board.sid().clone();
        board.pub_post(&sid, PubEntry::Plaintexts(plaintexts.clone()))?;
        self.revealed = Some(sk);
        Ok(plaintexts)
    }

    /// Valid iff the latest posted plaintexts equal the decryptions of the
    /// latest shuffled ciphertexts.
    pub fn audit(&self, params: &GroupParams, board: &BulletinBoard) -> bool {
        let (Some(sk), Some(posted), Some(shuffle)) = (
            self.revealed.as_ref(),
            board.latest_plaintexts(),
            board.latest_shuffle(),
        ) else {
            return false;
        };
        posted.len() == shuffle.outputs.len()
            && shuffle
                .outputs
                .iter()
                .zip(posted)
                .all(|(c, m)| decrypt(params, sk, c).ok() == *m)
    }
}

/// What a device hands back to the voter for a later check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationToken {
    pub ssid: SubsessionId,
    pub r: Scalar,
    /// The candidate the device claims to have encrypted.
    pub intent: u32,
}

/// Adversarial control over a voter's casting device.
#[derive(Clone, Debug)]
pub struct DeviceCorruption {
    pub policy: ManipulationPolicy,
    /// Preferred substitute candidate; any candidate other than the intent.
    pub target: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct CastResult {
    pub ballot: Ballot,
    pub token: VerificationToken,
    pub manipulated: bool,
}

/// The voter supporting device: encrypts and certifies ballots.
#[derive(Clone, Debug)]
pub struct VoterDevice {
    voter: u32,
    next_nonce: u32,
    rng: ChaCha20Rng,
    corruption: Option<DeviceCorruption>,
}

impl VoterDevice {
    pub fn new(voter: u32, rng: ChaCha20Rng, corruption: Option<DeviceCorruption>) -> Self {
        VoterDevice {
            voter,
            next_nonce: 0,
            rng,
            corruption,
        }
    }

    pub fn is_corrupted(&self) -> bool {
        self.corruption.is_some()
    }

    fn substitute(&self, params: &GroupParams, intent: u32, target: Option<u32>) -> Result<u32> {
        let bound = params.candidate_bound();
        match target {
            Some(x) if x != intent && x < bound => Ok(x),
            _ if bound >= 2 => Ok((intent + 1) % bound),
            _ => Err(FunctionalityError::NoSubstitute(intent)),
        }
    }

    /// Casts one ballot. `history` is the voter's actions before this vote; a
    /// corrupted device consults its policy on it and may encrypt a different
    /// candidate while still reporting the voter's intent in the token.
    pub fn cast(
        &mut self,
        params: &GroupParams,
        pk: &PublicKey,
        sid: &SessionId,
        registry: &mut CertRegistry,
        intent: u32,
        history: &[Action],
    ) -> Result<CastResult> {
        let manipulate = match &self.corruption {
            Some(c) => c.policy.decide(history)? == Decision::Manipulate,
            None => false,
        };
        let encrypted = if manipulate {
            let target = self.corruption.as_ref().and_then(|c| c.target);
            self.substitute(params, intent, target)?
        } else {
            intent
        };
        let ssid = SubsessionId {
            voter: self.voter,
            nonce: self.next_nonce,
        };
        self.next_nonce += 1;
        let r = params.random_scalar(&mut self.rng);
        let c = encrypt(params, pk, encrypted, &r)?;
        let sigma = registry.sign(sid, self.voter, ssid, &ciphertext_bytes(&c))?;
        Ok(CastResult {
            ballot: Ballot { ssid, c, sigma },
            token: VerificationToken { ssid, r, intent },
            manipulated: manipulate,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub matches: bool,
    /// Candidate recovered from the recorded ballot, if the randomness fit.
    pub observed: Option<u32>,
}

/// The audit supporting device: opens the ballot recorded for the token's
/// subsession (fetched from the board, never from the casting device) with the
/// token's randomness.
pub fn asd_check(
    params: &GroupParams,
    pk: &PublicKey,
    board: &BulletinBoard,
    token: &VerificationToken,
) -> Result<CheckResult> {
    let recorded = board
        .read_priv(Role::Functionality)?
        .iter()
        .rev()
        .find_map(|p| match &p.entry {
            PrivEntry::Ballot(b) if b.ssid == token.ssid => Some(&b.c),
            _ => None,
        })
        .ok_or(FunctionalityError::UnknownSsid(token.ssid))?;
    let observed = trapdoor_decrypt(params, pk, recorded, &token.r).ok();
    Ok(CheckResult {
        matches: observed == Some(token.intent),
        observed,
    })
}

/// The voter-behavior emulator.
pub fn vemu_sample<R: Rng + ?Sized>(dist: &BehaviorDistribution, rng: &mut R) -> VoterScript {
    dist.sample(rng).clone()
}
