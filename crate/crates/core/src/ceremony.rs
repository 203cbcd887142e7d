//! The voting ceremony: election authority, trustees, voters and auditor run
//! Preparation, Voting, Tally and Audit over the ideal functionalities, driven
//! by a deterministic FIFO scheduler.
//!
//! Every run is a pure function of its [`ElectionConfig`]; all randomness is
//! derived from the config seed by component label.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    Action, AdversaryError, BehaviorDistribution, ManipulationPolicy, PolicyTable, VoterScript,
};
use crate::crypto::{
    encrypt, setup, Ciphertext, CryptoError, GroupParams, GroupPreset, PublicKey, SecretKey,
};
use crate::functionalities::{
    asd_check, ciphertext_bytes, vemu_sample, Ballot, BulletinBoard, CertHandle, CertRegistry,
    Dec, DeviceCorruption, FunctionalityError, KeyGen, PrivEntry, PubEntry, SessionId,
    ShufflePost, SubsessionId, VerificationToken, VoterDevice,
};
use crate::rng::derive_rng;
use crate::shuffle::{prove_shuffle, shuffle, verify_shuffle_bytes, ProofBytes, ShuffleStatement};

#[derive(Debug, Error)]
pub enum CeremonyError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Functionality(#[from] FunctionalityError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("election halted: ballot {0} failed certification")]
    Halted(SubsessionId),
    #[error("voter {0} has no accepted ballot to mix")]
    MissingBallot(u32),
    #[error("tamper not applicable: {0}")]
    TamperNotApplicable(String),
    #[error("malformed transcript: {0}")]
    Transcript(String),
}

type Result<T> = std::result::Result<T, CeremonyError>;

impl From<CeremonyError> for AdversaryError {
    fn from(e: CeremonyError) -> Self {
        AdversaryError::Ceremony(Box::new(e))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionSource {
    /// The shipped aggregate table.
    #[default]
    Default,
    /// CSV file with header `pattern,probability`.
    File(PathBuf),
    /// Inline `[[pattern, probability], ...]`.
    Entries(BehaviorDistribution),
}

impl DistributionSource {
    pub fn load(&self) -> std::result::Result<BehaviorDistribution, AdversaryError> {
        match self {
            DistributionSource::Default => Ok(BehaviorDistribution::default_aggregate()),
            DistributionSource::File(path) => BehaviorDistribution::load(path),
            DistributionSource::Entries(d) => Ok(d.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    Always,
    Never,
    /// CSV file with header `history,decision`.
    File(PathBuf),
    Table(PolicyTable),
}

impl PolicySource {
    pub fn load(&self) -> std::result::Result<ManipulationPolicy, AdversaryError> {
        match self {
            PolicySource::Always => Ok(ManipulationPolicy::Always),
            PolicySource::Never => Ok(ManipulationPolicy::Never),
            PolicySource::File(path) => Ok(ManipulationPolicy::Table(PolicyTable::load(path)?)),
            PolicySource::Table(t) => Ok(ManipulationPolicy::Table(t.clone())),
        }
    }
}

impl From<ManipulationPolicy> for PolicySource {
    fn from(p: ManipulationPolicy) -> Self {
        match p {
            ManipulationPolicy::Always => PolicySource::Always,
            ManipulationPolicy::Never => PolicySource::Never,
            ManipulationPolicy::Table(t) => PolicySource::Table(t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Voters whose casting device the adversary controls.
    pub voters: Vec<u32>,
    pub policy: PolicySource,
    /// Substitute candidate; defaults to the candidate after the intent.
    #[serde(default)]
    pub target: Option<u32>,
}

/// Deliberate deviations by the authority, used to exercise the audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tamper {
    /// The authority records a ballot whose certification was never issued.
    ForgedBallot { voter: u32 },
    /// The authority mixes the voter's second-to-last ballot instead of the last.
    MixNonLast { voter: u32 },
    /// One shuffled ciphertext is altered after the proof was made.
    ShuffleOutput { index: usize },
    /// One posted plaintext is altered.
    Plaintext { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionConfig {
    /// Number of voters.
    pub n: u32,
    /// Number of trustees.
    pub k: u32,
    /// Reconstruction threshold.
    pub t: u32,
    /// Candidate count; plaintexts are `0..candidates`.
    pub candidates: u32,
    pub group: GroupPreset,
    pub seed: u64,
    #[serde(default)]
    pub distribution: DistributionSource,
    #[serde(default)]
    pub corruption: Option<CorruptionConfig>,
    /// Fixed scripts for particular voters, overriding the emulator.
    #[serde(default)]
    pub scripts: BTreeMap<u32, VoterScript>,
    /// Per-voter intended candidate; sampled uniformly when absent.
    #[serde(default)]
    pub intents: Option<Vec<u32>>,
    /// Require more than `t` trustees for decryption instead of at least `t`.
    #[serde(default)]
    pub threshold_strict: bool,
    /// Abort the election on a ballot failing certification instead of
    /// dropping it.
    #[serde(default)]
    pub ea_strict_halt: bool,
    /// How many trustees submit their key share (trustees `1..=m`); all `k`
    /// when absent.
    #[serde(default)]
    pub decrypting_trustees: Option<u32>,
    #[serde(default)]
    pub tamper: Option<Tamper>,
}

impl ElectionConfig {
    /// An honest election with the default distribution.
    pub fn honest(n: u32, k: u32, t: u32, candidates: u32, group: GroupPreset, seed: u64) -> Self {
        ElectionConfig {
            n,
            k,
            t,
            candidates,
            group,
            seed,
            distribution: DistributionSource::Default,
            corruption: None,
            scripts: BTreeMap::new(),
            intents: None,
            threshold_strict: false,
            ea_strict_halt: false,
            decrypting_trustees: None,
            tamper: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CeremonyError::Config(e.to_string()))
    }

    /// Makes relative file references relative to `base` (the config's
    /// directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DistributionSource::File(p) = &mut self.distribution {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(PolicySource::File(p)) = self.corruption.as_mut().map(|c| &mut c.policy) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Files the config reads, for digesting into a run manifest.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let DistributionSource::File(p) = &self.distribution {
            out.push(p.clone());
        }
        if let Some(PolicySource::File(p)) = self.corruption.as_ref().map(|c| &c.policy) {
            out.push(p.clone());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CeremonyError::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.t == 0 || self.t > self.k {
            return bad(format!("threshold must satisfy 1 <= t <= k (t={}, k={})", self.t, self.k));
        }
        if let Some(m) = self.decrypting_trustees {
            if m > self.k {
                return bad(format!("decrypting_trustees {m} exceeds k={}", self.k));
            }
        }
        if let Some(c) = &self.corruption {
            let mut seen = BTreeSet::new();
            for &v in &c.voters {
                if v >= self.n {
                    return bad(format!("corrupted voter {v} is not a voter id (n={})", self.n));
                }
                if !seen.insert(v) {
                    return bad(format!("corrupted voter {v} listed twice"));
                }
            }
            if !c.voters.is_empty() && self.candidates < 2 {
                return bad("corruption needs at least two candidates".into());
            }
            if let Some(x) = c.target {
                if x >= self.candidates {
                    return bad(format!("target {x} is not a candidate"));
                }
            }
        }
        if let Some(&v) = self.scripts.keys().find(|&&v| v >= self.n) {
            return bad(format!("script override for unknown voter {v}"));
        }
        if let Some(intents) = &self.intents {
            if intents.len() != self.n as usize {
                return bad(format!("{} intents for {} voters", intents.len(), self.n));
            }
            if let Some(x) = intents.iter().find(|&&x| x >= self.candidates) {
                return bad(format!("intent {x} is not a candidate"));
            }
        }
        match self.tamper {
            Some(Tamper::ForgedBallot { voter } | Tamper::MixNonLast { voter }) if voter >= self.n => {
                return bad(format!("tamper targets unknown voter {voter}"));
            }
            Some(Tamper::ShuffleOutput { index } | Tamper::Plaintext { index })
                if index >= self.n as usize =>
            {
                return bad(format!("tamper index {index} out of range"));
            }
            _ => {}
        }
        Ok(())
    }

    fn session_id(&self) -> SessionId {
        SessionId(format!("election-{:016x}", self.seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Preparation,
    Voting,
    Tally,
    Audit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    BadSignature,
    LastBallotMismatch,
    ShuffleProof,
    Decryption,
    Complaint,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::BadSignature => "bad-signature",
            FailureReason::LastBallotMismatch => "last-ballot-mismatch",
            FailureReason::ShuffleProof => "shuffle-proof",
            FailureReason::Decryption => "decryption",
            FailureReason::Complaint => "complaint",
        })
    }
}

/// Audit result. An invalid verdict lists every failing check in check order;
/// the first one is the reported reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum AuditVerdict {
    Valid,
    Invalid { reasons: Vec<FailureReason> },
}

impl AuditVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, AuditVerdict::Valid)
    }

    pub fn reason(&self) -> Option<FailureReason> {
        match self {
            AuditVerdict::Valid => None,
            AuditVerdict::Invalid { reasons } => reasons.first().copied(),
        }
    }

    pub fn has_reason(&self, reason: FailureReason) -> bool {
        match self {
            AuditVerdict::Valid => false,
            AuditVerdict::Invalid { reasons } => reasons.contains(&reason),
        }
    }
}

impl fmt::Display for AuditVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditVerdict::Valid => f.write_str("valid"),
            AuditVerdict::Invalid { reasons } => {
                let names: Vec<String> = reasons.iter().map(|r| r.to_string()).collect();
                write!(f, "invalid({})", names.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub counts: BTreeMap<u32, u64>,
    /// Plaintexts that were missing or outside the candidate range.
    pub rejected: u64,
}

/// Counts plaintexts per candidate; anything not in `0..bound` goes to the
/// reject bucket.
pub fn tally_alg(bound: u32, plaintexts: &[Option<u32>]) -> Tally {
    let mut tally = Tally::default();
    for m in plaintexts {
        match m {
            Some(m) if *m < bound => *tally.counts.entry(*m).or_default() += 1,
            _ => tally.rejected += 1,
        }
    }
    tally
}

/// The authority's record of each voter's most recent accepted ballot.
#[derive(Clone, Debug, Default)]
pub struct LastBallotLedger {
    latest: Vec<Option<Ciphertext>>,
}

impl LastBallotLedger {
    pub fn new(n: u32) -> Self {
        LastBallotLedger {
            latest: vec![None; n as usize],
        }
    }

    pub fn set(&mut self, voter: u32, c: Ciphertext) {
        self.latest[voter as usize] = Some(c);
    }

    pub fn get(&self, voter: u32) -> Option<&Ciphertext> {
        self.latest.get(voter as usize).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complaint {
    pub voter: u32,
    pub ssid: SubsessionId,
}

/// Typed event content; serialized as the `kind`/`payload` pair of a
/// transcript line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum EventBody {
    Setup {
        sid: SessionId,
        group: GroupPreset,
        candidates: u32,
        n: u32,
        k: u32,
        t: u32,
    },
    Ready {
        trustee: u32,
    },
    PubPost {
        seq: u64,
        entry: PubEntry,
    },
    PrivPost {
        seq: u64,
        entry: PrivEntry,
    },
    CertIssued {
        ssid: SubsessionId,
        message: String,
        sigma: CertHandle,
    },
    Script {
        voter: u32,
        script: VoterScript,
        intent: u32,
        corrupted: bool,
    },
    Cast {
        ssid: SubsessionId,
        manipulated: bool,
    },
    BallotRejected {
        ssid: SubsessionId,
    },
    Check {
        voter: u32,
        ssid: SubsessionId,
        matches: bool,
        observed: Option<u32>,
    },
    Complain(Complaint),
    KeySubmitted {
        trustee: u32,
    },
    /// The key reconstructed inside the decryption functionality. Recorded so a
    /// stored transcript can be re-audited; a real deployment would never
    /// publish it.
    KeyRevealed {
        sk: SecretKey,
    },
    Tally(Tally),
    Verdict(AuditVerdict),
}

/// One transcript line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub phase: Phase,
    pub actor: String,
    pub kind: String,
    pub payload: serde_json::Value,
}

impl Event {
    pub fn body(&self) -> Result<EventBody> {
        let value = serde_json::json!({ "kind": self.kind, "payload": self.payload });
        serde_json::from_value(value)
            .map_err(|e| CeremonyError::Transcript(format!("event {}: {e}", self.seq)))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElectionTranscript {
    pub events: Vec<Event>,
}

impl ElectionTranscript {
    fn push(&mut self, phase: Phase, actor: &str, body: EventBody) {
        let value = serde_json::to_value(&body).expect("events serialize");
        let serde_json::Value::Object(mut obj) = value else {
            unreachable!("adjacently tagged enums serialize to objects")
        };
        let kind = match obj.remove("kind") {
            Some(serde_json::Value::String(s)) => s,
            _ => unreachable!("tag is a string"),
        };
        let payload = obj.remove("payload").unwrap_or(serde_json::Value::Null);
        self.events.push(Event {
            seq: self.events.len() as u64,
            phase,
            actor: actor.to_string(),
            kind,
            payload,
        });
    }

    /// One JSON object per line, LF-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Event = serde_json::from_str(line)
                .map_err(|err| CeremonyError::Transcript(format!("line {}: {err}", i + 1)))?;
            if e.seq != events.len() as u64 {
                return Err(CeremonyError::Transcript(format!(
                    "line {}: sequence number {} out of order",
                    i + 1,
                    e.seq
                )));
            }
            events.push(e);
        }
        Ok(ElectionTranscript { events })
    }

    pub fn bodies(&self) -> Result<Vec<EventBody>> {
        self.events.iter().map(Event::body).collect()
    }

    pub fn verdict(&self) -> Option<AuditVerdict> {
        self.events.iter().rev().find_map(|e| match e.body() {
            Ok(EventBody::Verdict(v)) => Some(v),
            _ => None,
        })
    }
}

/// Per-run facts the adversary cares about but the audit does not see.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub complaints: usize,
    /// Corrupted voters whose counted ballot was manipulated and never caught.
    pub manipulated_survivors: u32,
    /// Corrupted voters who caught a manipulation.
    pub caught: u32,
}

#[derive(Clone, Debug)]
pub struct ElectionOutcome {
    pub transcript: ElectionTranscript,
    pub tally: Tally,
    pub verdict: AuditVerdict,
    pub stats: RunStats,
    /// The intent each voter held.
    pub intents: Vec<u32>,
}

/// Everything the auditor looks at.
pub struct AuditInputs<'a> {
    pub params: &'a GroupParams,
    pub sid: &'a SessionId,
    pub n: u32,
    pub board: &'a BulletinBoard,
    pub registry: &'a CertRegistry,
    pub dec: &'a Dec,
    pub complaints: &'a [Complaint],
}

/// The auditor's checks, in order: certification of every recorded ballot,
/// mixed list equals each voter's last ballot, shuffle proof, decryption,
/// complaints.
pub fn audit(inputs: &AuditInputs<'_>) -> AuditVerdict {
    let AuditInputs {
        params,
        sid,
        n,
        board,
        registry,
        dec,
        complaints,
    } = inputs;
    let mut reasons = Vec::new();

    let mut last: Vec<Option<&Ciphertext>> = vec![None; *n as usize];
    let mut bad_signature = false;
    for ballot in board.ballots() {
        if !registry.verify(sid, ballot.ssid, &ciphertext_bytes(&ballot.c), &ballot.sigma) {
            bad_signature = true;
            continue;
        }
        match last.get_mut(ballot.ssid.voter as usize) {
            Some(slot) => *slot = Some(&ballot.c),
            None => bad_signature = true,
        }
    }
    if bad_signature {
        reasons.push(FailureReason::BadSignature);
    }

    let shuffle = board.latest_shuffle();
    let last_matches = shuffle.is_some_and(|s| {
        s.inputs.len() == last.len() && s.inputs.iter().zip(&last).all(|(c, l)| Some(c) == *l)
    });
    if !last_matches {
        reasons.push(FailureReason::LastBallotMismatch);
    }

    let proof_ok = match (shuffle, board.public_key()) {
        (Some(s), Some(pk)) => {
            let statement = ShuffleStatement {
                pk: pk.clone(),
                inputs: s.inputs.clone(),
                outputs: s.outputs.clone(),
            };
            verify_shuffle_bytes(params, &statement, &s.proof.0).is_accept()
        }
        _ => false,
    };
    if !proof_ok {
        reasons.push(FailureReason::ShuffleProof);
    }

    if !dec.audit(params, board) {
        reasons.push(FailureReason::Decryption);
    }
    if !complaints.is_empty() {
        reasons.push(FailureReason::Complaint);
    }

    if reasons.is_empty() {
        AuditVerdict::Valid
    } else {
        AuditVerdict::Invalid { reasons }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Party {
    Env,
    Ea,
    Trustee(u32),
    Voter(u32),
    Auditor,
}

impl Party {
    fn name(self) -> String {
        match self {
            Party::Env => "env".into(),
            Party::Ea => "ea".into(),
            Party::Trustee(i) => format!("trustee-{i}"),
            Party::Voter(i) => format!("voter-{i}"),
            Party::Auditor => "auditor".into(),
        }
    }
}

#[derive(Clone, Debug)]
enum Msg {
    Setup,
    Begin,
    Vote,
    Continue,
    Ballot(Ballot),
    Complain(Complaint),
    End,
    Key,
    Tally,
    Audit,
}

struct Envelope {
    from: Party,
    to: Party,
    msg: Msg,
}

struct VoterState {
    script: VoterScript,
    intent: u32,
    pc: usize,
    halted: bool,
    latest_token: Option<VerificationToken>,
    latest_manipulated: bool,
    caught: bool,
}

struct World {
    config: ElectionConfig,
    params: GroupParams,
    sid: SessionId,
    distribution: BehaviorDistribution,
    phase: Phase,
    queue: VecDeque<Envelope>,
    transcript: ElectionTranscript,

    board: BulletinBoard,
    registry: CertRegistry,
    keygen: KeyGen,
    dec: Dec,
    devices: Vec<VoterDevice>,

    pk: Option<PublicKey>,
    ledger: LastBallotLedger,
    accepted: Vec<Vec<Ciphertext>>,
    ea_rng: ChaCha20Rng,
    tally: Option<Tally>,

    voters: Vec<Option<VoterState>>,
    intents: Vec<u32>,
    complaints: Vec<Complaint>,
    verdict: Option<AuditVerdict>,
}

impl World {
    fn new(config: ElectionConfig) -> Result<Self> {
        config.validate()?;
        let params = setup(config.group, config.candidates)?;
        let distribution = config.distribution.load()?;
        let policy = match &config.corruption {
            Some(c) => Some(c.policy.load()?),
            None => None,
        };
        let sid = config.session_id();
        let seed = config.seed;
        let corrupted: BTreeSet<u32> = config
            .corruption
            .as_ref()
            .map(|c| c.voters.iter().copied().collect())
            .unwrap_or_default();
        let devices = (0..config.n)
            .map(|i| {
                let corruption = corrupted.contains(&i).then(|| DeviceCorruption {
                    policy: policy.clone().expect("corruption implies a policy"),
                    target: config.corruption.as_ref().and_then(|c| c.target),
                });
                VoterDevice::new(i, derive_rng(seed, "vsd", u64::from(i)), corruption)
            })
            .collect();
        let intents = match &config.intents {
            Some(v) => v.clone(),
            None => (0..config.n)
                .map(|i| derive_rng(seed, "intent", u64::from(i)).gen_range(0..config.candidates))
                .collect(),
        };
        Ok(World {
            params,
            board: BulletinBoard::new(sid.clone()),
            registry: CertRegistry::new(sid.clone(), derive_rng(seed, "cert", 0)),
            keygen: KeyGen::new(config.k, config.t, derive_rng(seed, "keygen", 0)),
            dec: Dec::new(config.t, config.threshold_strict),
            devices,
            sid,
            distribution,
            phase: Phase::Preparation,
            queue: VecDeque::new(),
            transcript: ElectionTranscript::default(),
            pk: None,
            ledger: LastBallotLedger::new(config.n),
            accepted: vec![Vec::new(); config.n as usize],
            ea_rng: derive_rng(seed, "ea", 0),
            tally: None,
            voters: (0..config.n).map(|_| None).collect(),
            intents,
            complaints: Vec::new(),
            verdict: None,
            config,
        })
    }

    fn log(&mut self, actor: Party, body: EventBody) {
        self.transcript.push(self.phase, &actor.name(), body);
    }

    fn send(&mut self, from: Party, to: Party, msg: Msg) {
        self.queue.push_back(Envelope { from, to, msg });
    }

    fn pub_post(&mut self, actor: Party, entry: PubEntry) -> Result<()> {
        let seq = self.board.pub_post(&self.sid, entry.clone())?;
        self.log(actor, EventBody::PubPost { seq, entry });
        Ok(())
    }

    fn priv_post(&mut self, actor: Party, entry: PrivEntry) -> Result<()> {
        let seq = self.board.priv_post(&self.sid, entry.clone())?;
        self.log(actor, EventBody::PrivPost { seq, entry });
        Ok(())
    }

    fn run_to_quiescence(&mut self) -> Result<()> {
        while let Some(env) = self.queue.pop_front() {
            self.activate(env)?;
        }
        Ok(())
    }

    fn activate(&mut self, env: Envelope) -> Result<()> {
        match (env.to, env.msg) {
            (Party::Trustee(i), Msg::Setup) => {
                self.keygen.ready(&self.params, i)?;
                self.log(Party::Trustee(i), EventBody::Ready { trustee: i });
            }
            (Party::Ea, Msg::Begin) => self.ea_begin()?,
            (Party::Voter(i), Msg::Vote) => self.voter_start(i)?,
            (Party::Voter(i), Msg::Continue) => self.voter_step(i)?,
            (Party::Ea, Msg::Ballot(b)) => self.ea_accept_ballot(env.from, b)?,
            (Party::Auditor, Msg::Complain(c)) => {
                self.log(Party::Auditor, EventBody::Complain(c.clone()));
                self.complaints.push(c);
            }
            (Party::Ea, Msg::End) => self.ea_close_and_mix()?,
            (Party::Trustee(i), Msg::Key) => {
                self.dec.submit_key(&self.keygen, i)?;
                self.log(Party::Trustee(i), EventBody::KeySubmitted { trustee: i });
            }
            (Party::Ea, Msg::Tally) => self.ea_tally()?,
            (Party::Auditor, Msg::Audit) => self.auditor_audit(),
            (to, msg) => unreachable!("no handler for {msg:?} at {to:?}"),
        }
        Ok(())
    }

    fn ea_begin(&mut self) -> Result<()> {
        let pk = self.keygen.pubkey()?;
        self.pub_post(Party::Ea, PubEntry::PublicKey(pk.clone()))?;
        self.pk = Some(pk);
        self.ledger = LastBallotLedger::new(self.config.n);
        Ok(())
    }

    fn voter_start(&mut self, i: u32) -> Result<()> {
        let script = match self.config.scripts.get(&i) {
            Some(s) => s.clone(),
            None => vemu_sample(&self.distribution, &mut derive_rng(self.config.seed, "vemu", u64::from(i))),
        };
        let intent = self.intents[i as usize];
        let corrupted = self.devices[i as usize].is_corrupted();
        self.log(
            Party::Voter(i),
            EventBody::Script {
                voter: i,
                script: script.clone(),
                intent,
                corrupted,
            },
        );
        self.voters[i as usize] = Some(VoterState {
            script,
            intent,
            pc: 0,
            halted: false,
            latest_token: None,
            latest_manipulated: false,
            caught: false,
        });
        self.voter_step(i)
    }

    /// One action of the voter's script per activation.
    fn voter_step(&mut self, i: u32) -> Result<()> {
        let me = Party::Voter(i);
        let state = self.voters[i as usize].as_mut().expect("voter started");
        if state.halted || state.pc >= state.script.len() {
            return Ok(());
        }
        let pc = state.pc;
        state.pc += 1;
        let action = state.script.actions()[pc];
        let history: Vec<Action> = state.script.actions()[..pc].to_vec();
        let intent = state.intent;
        match action {
            Action::Vote => {
                let pk = self.pk.clone().expect("voting starts after the key is posted");
                let cast = self.devices[i as usize].cast(
                    &self.params,
                    &pk,
                    &self.sid,
                    &mut self.registry,
                    intent,
                    &history,
                )?;
                self.log(
                    Party::Voter(i),
                    EventBody::CertIssued {
                        ssid: cast.ballot.ssid,
                        message: hex::encode(ciphertext_bytes(&cast.ballot.c)),
                        sigma: cast.ballot.sigma.clone(),
                    },
                );
                self.log(
                    me,
                    EventBody::Cast {
                        ssid: cast.ballot.ssid,
                        manipulated: cast.manipulated,
                    },
                );
                let state = self.voters[i as usize].as_mut().expect("voter started");
                state.latest_token = Some(cast.token);
                state.latest_manipulated = cast.manipulated;
                self.send(me, Party::Ea, Msg::Ballot(cast.ballot));
                self.send(me, me, Msg::Continue);
            }
            Action::Check => {
                let pk = self.pk.clone().expect("voting starts after the key is posted");
                let token = state
                    .latest_token
                    .clone()
                    .expect("scripts start with a vote");
                let (matches, observed) = match asd_check(&self.params, &pk, &self.board, &token) {
                    Ok(r) => (r.matches, r.observed),
                    // the ballot never reached the board
                    Err(FunctionalityError::UnknownSsid(_)) => (false, None),
                    Err(e) => return Err(e.into()),
                };
                self.log(
                    me,
                    EventBody::Check {
                        voter: i,
                        ssid: token.ssid,
                        matches,
                        observed,
                    },
                );
                if matches {
                    self.send(me, me, Msg::Continue);
                } else {
                    let state = self.voters[i as usize].as_mut().expect("voter started");
                    state.halted = true;
                    state.caught = state.latest_manipulated;
                    let complaint = Complaint { voter: i, ssid: token.ssid };
                    self.send(me, Party::Auditor, Msg::Complain(complaint));
                }
            }
        }
        Ok(())
    }

    fn ea_accept_ballot(&mut self, _from: Party, ballot: Ballot) -> Result<()> {
        let ok = self.registry.verify(
            &self.sid,
            ballot.ssid,
            &ciphertext_bytes(&ballot.c),
            &ballot.sigma,
        );
        if !ok {
            self.log(Party::Ea, EventBody::BallotRejected { ssid: ballot.ssid });
            if self.config.ea_strict_halt {
                return Err(CeremonyError::Halted(ballot.ssid));
            }
            return Ok(());
        }
        self.record_ballot(ballot)
    }

    fn record_ballot(&mut self, ballot: Ballot) -> Result<()> {
        let voter = ballot.ssid.voter;
        self.ledger.set(voter, ballot.c.clone());
        self.accepted[voter as usize].push(ballot.c.clone());
        self.priv_post(Party::Ea, PrivEntry::Ballot(ballot))
    }

    fn ea_close_and_mix(&mut self) -> Result<()> {
        if let Some(Tamper::ForgedBallot { voter }) = self.config.tamper {
            // recorded without any certification having been issued
            let pk = self.pk.clone().expect("key posted");
            let r = self.params.random_scalar(&mut self.ea_rng);
            let c = encrypt(&self.params, &pk, 0, &r)?;
            let ballot = Ballot {
                ssid: SubsessionId { voter, nonce: u32::MAX },
                c,
                sigma: CertHandle::random(&mut self.ea_rng),
            };
            self.record_ballot(ballot)?;
        }
        let mut inputs = Vec::with_capacity(self.config.n as usize);
        for i in 0..self.config.n {
            let c = self.ledger.get(i).ok_or(CeremonyError::MissingBallot(i))?;
            inputs.push(c.clone());
        }
        if let Some(Tamper::MixNonLast { voter }) = self.config.tamper {
            let history = &self.accepted[voter as usize];
            if history.len() < 2 {
                return Err(CeremonyError::TamperNotApplicable(format!(
                    "voter {voter} cast only {} ballot(s)",
                    history.len()
                )));
            }
            inputs[voter as usize] = history[history.len() - 2].clone();
        }
        let pk = self.pk.clone().expect("key posted");
        let (mut outputs, witness) = shuffle(&self.params, &pk, &inputs, &mut self.ea_rng);
        let statement = ShuffleStatement {
            pk,
            inputs: inputs.clone(),
            outputs: outputs.clone(),
        };
        let proof = prove_shuffle(&self.params, &statement, &witness, &mut self.ea_rng)
            .map_err(FunctionalityError::from)?;
        if let Some(Tamper::ShuffleOutput { index }) = self.config.tamper {
            let c = &mut outputs[index];
            c.c2 = self.params.mul(&c.c2, self.params.generator());
        }
        self.priv_post(
            Party::Ea,
            PrivEntry::Shuffle(ShufflePost {
                inputs,
                outputs,
                proof: ProofBytes(proof.to_bytes()),
            }),
        )
    }

    fn ea_tally(&mut self) -> Result<()> {
        let tamper = match self.config.tamper {
            Some(Tamper::Plaintext { index }) => Some(index),
            _ => None,
        };
        let before = self.board.read_pub().len();
        self.dec.decrypt_and_post(&self.params, &mut self.board, tamper)?;
        let sk = self.dec.revealed_key().expect("decryption succeeded").clone();
        self.log(Party::Ea, EventBody::KeyRevealed { sk });
        let posted: Vec<_> = self.board.read_pub()[before..].to_vec();
        for p in posted {
            self.log(Party::Ea, EventBody::PubPost { seq: p.seq, entry: p.entry });
        }
        let plaintexts = self.board.latest_plaintexts().expect("just posted").to_vec();
        let tally = tally_alg(self.params.candidate_bound(), &plaintexts);
        self.log(Party::Ea, EventBody::Tally(tally.clone()));
        self.tally = Some(tally);
        Ok(())
    }

    fn auditor_audit(&mut self) {
        let verdict = audit(&AuditInputs {
            params: &self.params,
            sid: &self.sid,
            n: self.config.n,
            board: &self.board,
            registry: &self.registry,
            dec: &self.dec,
            complaints: &self.complaints,
        });
        self.log(Party::Auditor, EventBody::Verdict(verdict.clone()));
        self.verdict = Some(verdict);
    }

    fn run(mut self) -> Result<ElectionOutcome> {
        let c = &self.config;
        let setup_event = EventBody::Setup {
            sid: self.sid.clone(),
            group: c.group,
            candidates: c.candidates,
            n: c.n,
            k: c.k,
            t: c.t,
        };
        self.log(Party::Env, setup_event);

        for i in 1..=self.config.k {
            self.send(Party::Env, Party::Trustee(i), Msg::Setup);
        }
        self.run_to_quiescence()?;
        self.send(Party::Env, Party::Ea, Msg::Begin);
        self.run_to_quiescence()?;

        self.phase = Phase::Voting;
        for i in 0..self.config.n {
            self.send(Party::Env, Party::Voter(i), Msg::Vote);
            self.run_to_quiescence()?;
        }
        self.send(Party::Env, Party::Ea, Msg::End);
        self.run_to_quiescence()?;

        self.phase = Phase::Tally;
        let decrypting = self.config.decrypting_trustees.unwrap_or(self.config.k);
        for i in 1..=decrypting {
            self.send(Party::Env, Party::Trustee(i), Msg::Key);
        }
        self.run_to_quiescence()?;
        self.send(Party::Env, Party::Ea, Msg::Tally);
        self.run_to_quiescence()?;

        self.phase = Phase::Audit;
        self.send(Party::Env, Party::Auditor, Msg::Audit);
        self.run_to_quiescence()?;

        let mut stats = RunStats {
            complaints: self.complaints.len(),
            ..RunStats::default()
        };
        for (i, v) in self.voters.iter().enumerate() {
            let v = v.as_ref().expect("every voter ran");
            if !self.devices[i].is_corrupted() {
                continue;
            }
            if v.caught {
                stats.caught += 1;
            } else if v.latest_manipulated {
                stats.manipulated_survivors += 1;
            }
        }
        Ok(ElectionOutcome {
            transcript: self.transcript,
            tally: self.tally.expect("tally phase ran"),
            verdict: self.verdict.expect("audit phase ran"),
            stats,
            intents: self.intents,
        })
    }
}

/// Runs one complete election.
pub fn run_election(config: &ElectionConfig) -> Result<ElectionOutcome> {
    World::new(config.clone())?.run()
}

/// Result of re-auditing a stored transcript.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub recorded: AuditVerdict,
    pub recomputed: AuditVerdict,
}

impl ReplayReport {
    /// The recorded verdict is reproduced and valid.
    pub fn confirms_valid(&self) -> bool {
        self.recorded == self.recomputed && self.recomputed.is_valid()
    }
}

/// Rebuilds the boards, certification registry, complaints and decryption key
/// from a transcript and reruns the audit.
pub fn replay_audit(transcript: &ElectionTranscript) -> Result<ReplayReport> {
    let bad = |msg: &str| CeremonyError::Transcript(msg.to_string());
    let bodies = transcript.bodies()?;
    let Some(EventBody::Setup {
        sid,
        group,
        candidates,
        n,
        ..
    }) = bodies.first().cloned()
    else {
        return Err(bad("first event must be setup"));
    };
    let params = setup(group, candidates)?;
    let mut board = BulletinBoard::new(sid.clone());
    // handles are only re-entered, never issued, so this stream is unused
    let mut registry = CertRegistry::new(sid.clone(), derive_rng(0, "replay", 0));
    let mut complaints = Vec::new();
    let mut dec = None;
    let mut recorded = None;
    for body in bodies {
        match body {
            EventBody::PubPost { seq, entry } => {
                if board.pub_post(&sid, entry)? != seq {
                    return Err(bad("board sequence numbers do not line up"));
                }
            }
            EventBody::PrivPost { seq, entry } => {
                if board.priv_post(&sid, entry)? != seq {
                    return Err(bad("board sequence numbers do not line up"));
                }
            }
            EventBody::CertIssued { ssid, message, sigma } => {
                let message = hex::decode(&message).map_err(|e| bad(&e.to_string()))?;
                registry.record(ssid, message, sigma);
            }
            EventBody::Complain(c) => complaints.push(c),
            EventBody::KeyRevealed { sk } => {
                if !params.is_scalar(&sk.sk) {
                    return Err(bad("revealed key out of range"));
                }
                dec = Some(Dec::from_revealed_key(sk));
            }
            EventBody::Verdict(v) => recorded = Some(v),
            _ => {}
        }
    }
    let recorded = recorded.ok_or_else(|| bad("no verdict recorded"))?;
    let dec = dec.ok_or_else(|| bad("no decryption recorded"))?;
    let recomputed = audit(&AuditInputs {
        params: &params,
        sid: &sid,
        n,
        board: &board,
        registry: &registry,
        dec: &dec,
        complaints: &complaints,
    });
    Ok(ReplayReport { recorded, recomputed })
}
