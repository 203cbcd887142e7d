//! Non-interactive proof that one ciphertext list is a permuted re-randomization
//! of another.
//!
//! The argument follows the permutation-commitment family of shuffle proofs: the
//! prover commits to the permutation matrix column by column, then proves with a
//! single Fiat–Shamir challenge that
//!
//! - the committed matrix is a permutation matrix (sum and product of the
//!   challenge-weighted entries are checked through a chain of commitments), and
//! - the challenge-weighted product of the outputs is a re-encryption of the
//!   challenge-weighted product of the inputs under the committed permutation.
//!
//! Commitment generators come from hashing a fixed domain tag into the group, so
//! there is no trusted setup. In the toy group the challenge space has only `q`
//! elements and soundness is correspondingly weak; use the medium or standard
//! preset when soundness matters.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{rerandomize, Ciphertext, Element, GroupParams, PublicKey, Scalar};
use crate::encoding::{DecodeError, Reader, Writer};

const FS_DOMAIN: &[u8] = b"ivxv-sim/shuffle/fiat-shamir/v1";
const GENERATOR_DOMAIN: &[u8] = b"ivxv-sim/shuffle/generators/v1";
const PROOF_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShuffleError {
    #[error("bad-witness: {0}")]
    BadWitness(&'static str),
    #[error("empty or mismatched ciphertext lists")]
    Shape,
    #[error("malformed proof: {0}")]
    Malformed(#[from] DecodeError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleStatement {
    pub pk: PublicKey,
    pub inputs: Vec<Ciphertext>,
    pub outputs: Vec<Ciphertext>,
}

/// `outputs[i] = Rand(pk, inputs[perm[i]]; rands[i])`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShuffleWitness {
    pub perm: Vec<usize>,
    pub rands: Vec<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShuffleProof {
    /// One commitment per input position: `c_j = g^{r_j} h_i` where `perm[i] = j`.
    pub perm_commitments: Vec<Element>,
    /// `chain[i] = g^{rc_i} chain[i-1]^{u_perm[i]}`, starting from the base generator.
    pub chain: Vec<Element>,
    pub commit_sum: Element,
    pub chain_end: Element,
    pub weighted_commit: Element,
    pub reencryption: (Element, Element),
    pub chain_links: Vec<Element>,
    pub challenge: Scalar,
    pub s_sum: Scalar,
    pub s_chain_end: Scalar,
    pub s_weighted: Scalar,
    pub s_reencryption: Scalar,
    pub s_chain: Vec<Scalar>,
    pub s_perm: Vec<Scalar>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleVerdict {
    Accept,
    Reject,
}

impl ShuffleVerdict {
    pub fn is_accept(self) -> bool {
        self == ShuffleVerdict::Accept
    }
}

impl ShuffleStatement {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Canonical encoding of the group, key and both lists.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut w = Writer::new();
        write_params(&mut w, params);
        w.put_uint(self.pk.h.value());
        write_ciphertexts(&mut w, &self.inputs);
        write_ciphertexts(&mut w, &self.outputs);
        w.into_bytes()
    }
}

fn write_params(w: &mut Writer, params: &GroupParams) {
    w.put_uint(params.p())
        .put_uint(params.q())
        .put_uint(params.generator().value());
}

fn write_ciphertexts(w: &mut Writer, cts: &[Ciphertext]) {
    w.put_u32(cts.len() as u32);
    for ct in cts {
        w.put_uint(ct.c1.value()).put_uint(ct.c2.value());
    }
}

fn write_elements(w: &mut Writer, xs: &[Element]) {
    w.put_u32(xs.len() as u32);
    for x in xs {
        w.put_uint(x.value());
    }
}

fn write_scalars(w: &mut Writer, xs: &[Scalar]) {
    w.put_u32(xs.len() as u32);
    for x in xs {
        w.put_uint(x.value());
    }
}

fn read_elements(r: &mut Reader<'_>) -> Result<Vec<Element>, DecodeError> {
    let n = r.get_len()?;
    (0..n).map(|_| r.get_uint().map(Element::from_uint)).collect()
}

fn read_scalars(r: &mut Reader<'_>) -> Result<Vec<Scalar>, DecodeError> {
    let n = r.get_len()?;
    (0..n).map(|_| r.get_uint().map(Scalar::from_uint)).collect()
}

/// Hash-to-scalar over a transcript, domain-separated from every other hash in
/// the crate.
pub fn fs_challenge(params: &GroupParams, transcript: &[u8]) -> Scalar {
    params.hash_to_scalar(FS_DOMAIN, transcript)
}

/// Base generator followed by `n` per-position generators.
pub fn commitment_generators(params: &GroupParams, n: usize) -> (Element, Vec<Element>) {
    let gen = |i: u64| {
        let mut w = Writer::new();
        write_params(&mut w, params);
        w.put_u64(i);
        params.hash_to_group(GENERATOR_DOMAIN, w.as_bytes())
    };
    let base = gen(0);
    let hs = (1..=n as u64).map(gen).collect();
    (base, hs)
}

fn batching_challenges(params: &GroupParams, statement_bytes: &[u8], perm_commitments: &[Element]) -> Vec<Scalar> {
    let mut w = Writer::new();
    w.put_bytes(b"batch").put_bytes(statement_bytes);
    write_elements(&mut w, perm_commitments);
    let seed = w.into_bytes();
    (0..perm_commitments.len() as u64)
        .map(|i| {
            let mut w = Writer::new();
            w.put_bytes(&seed).put_u64(i);
            fs_challenge(params, w.as_bytes())
        })
        .collect()
}

fn main_challenge(
    params: &GroupParams,
    statement_bytes: &[u8],
    perm_commitments: &[Element],
    chain: &[Element],
    commitments: [&Element; 5],
    chain_links: &[Element],
) -> Scalar {
    let mut w = Writer::new();
    w.put_bytes(b"main").put_bytes(statement_bytes);
    write_elements(&mut w, perm_commitments);
    write_elements(&mut w, chain);
    for t in commitments {
        w.put_uint(t.value());
    }
    write_elements(&mut w, chain_links);
    fs_challenge(params, w.as_bytes())
}

/// Draws a uniform permutation and re-randomizers and applies them.
pub fn shuffle<R: Rng + ?Sized>(
    params: &GroupParams,
    pk: &PublicKey,
    inputs: &[Ciphertext],
    rng: &mut R,
) -> (Vec<Ciphertext>, ShuffleWitness) {
    let mut perm: Vec<usize> = (0..inputs.len()).collect();
    perm.shuffle(rng);
    let rands: Vec<Scalar> = (0..inputs.len()).map(|_| params.random_scalar(rng)).collect();
    let outputs = apply_shuffle(params, pk, inputs, &perm, &rands);
    (outputs, ShuffleWitness { perm, rands })
}

pub fn apply_shuffle(
    params: &GroupParams,
    pk: &PublicKey,
    inputs: &[Ciphertext],
    perm: &[usize],
    rands: &[Scalar],
) -> Vec<Ciphertext> {
    perm.iter()
        .zip(rands)
        .map(|(&j, r)| rerandomize(params, pk, &inputs[j], r))
        .collect()
}

fn check_witness(
    params: &GroupParams,
    statement: &ShuffleStatement,
    witness: &ShuffleWitness,
) -> Result<(), ShuffleError> {
    let n = statement.len();
    if n == 0 || statement.outputs.len() != n {
        return Err(ShuffleError::Shape);
    }
    if witness.perm.len() != n || witness.rands.len() != n {
        return Err(ShuffleError::BadWitness("witness length differs from statement"));
    }
    let mut seen = vec![false; n];
    for &j in &witness.perm {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(ShuffleError::BadWitness("not a permutation"));
        }
    }
    if witness.rands.iter().any(|r| !params.is_scalar(r)) {
        return Err(ShuffleError::BadWitness("randomizer out of range"));
    }
    let expected = apply_shuffle(params, &statement.pk, &statement.inputs, &witness.perm, &witness.rands);
    if expected != statement.outputs {
        return Err(ShuffleError::BadWitness("witness does not reproduce the outputs"));
    }
    Ok(())
}

pub fn prove_shuffle<R: Rng + ?Sized>(
    params: &GroupParams,
    statement: &ShuffleStatement,
    witness: &ShuffleWitness,
    rng: &mut R,
) -> Result<ShuffleProof, ShuffleError> {
    check_witness(params, statement, witness)?;
    let n = statement.len();
    let perm = &witness.perm;
    let pk = &statement.pk;
    let statement_bytes = statement.to_bytes(params);
    let (base, hs) = commitment_generators(params, n);

    // Commit to the permutation: position perm[i] receives generator h_i.
    let commit_rands: Vec<Scalar> = (0..n).map(|_| params.random_scalar(rng)).collect();
    let mut perm_commitments = vec![params.identity(); n];
    for (i, &j) in perm.iter().enumerate() {
        perm_commitments[j] = params.mul(&params.g_pow(&commit_rands[j]), &hs[i]);
    }

    let u = batching_challenges(params, &statement_bytes, &perm_commitments);
    let u_perm: Vec<&Scalar> = perm.iter().map(|&j| &u[j]).collect();

    // Commitment chain to the running product of the permuted challenges.
    let chain_rands: Vec<Scalar> = (0..n).map(|_| params.random_scalar(rng)).collect();
    let mut chain = Vec::with_capacity(n);
    for i in 0..n {
        let prev = if i == 0 { &base } else { &chain[i - 1] };
        let link = params.mul(&params.g_pow(&chain_rands[i]), &params.pow(prev, u_perm[i]));
        chain.push(link);
    }

    // tail[i] = prod_{l > i} u_perm[l]
    let mut tail = vec![params.scalar(1u32); n];
    for i in (0..n.saturating_sub(1)).rev() {
        tail[i] = params.smul(u_perm[i + 1], &tail[i + 1]);
    }

    let zero = params.scalar(0u32);
    let mut sum_rand = zero.clone();
    let mut chain_rand = zero.clone();
    let mut weighted_rand = zero.clone();
    let mut reenc_rand = zero;
    for i in 0..n {
        sum_rand = params.add(&sum_rand, &commit_rands[i]);
        chain_rand = params.add(&chain_rand, &params.smul(&chain_rands[i], &tail[i]));
        weighted_rand = params.add(&weighted_rand, &params.smul(&commit_rands[i], &u[i]));
        reenc_rand = params.add(&reenc_rand, &params.smul(&witness.rands[i], u_perm[i]));
    }

    let w: Vec<Scalar> = (0..4).map(|_| params.random_scalar(rng)).collect();
    let w_chain: Vec<Scalar> = (0..n).map(|_| params.random_scalar(rng)).collect();
    let w_perm: Vec<Scalar> = (0..n).map(|_| params.random_scalar(rng)).collect();

    let commit_sum = params.g_pow(&w[0]);
    let chain_end = params.g_pow(&w[1]);
    let weighted_commit = params.mul(&params.g_pow(&w[2]), &params.multi_pow(hs.iter().zip(&w_perm)));
    let neg_w3 = params.neg(&w[3]);
    let reencryption = (
        params.mul(
            &params.g_pow(&neg_w3),
            &params.multi_pow(statement.outputs.iter().map(|c| &c.c1).zip(&w_perm)),
        ),
        params.mul(
            &params.pow(&pk.h, &neg_w3),
            &params.multi_pow(statement.outputs.iter().map(|c| &c.c2).zip(&w_perm)),
        ),
    );
    let chain_links: Vec<Element> = (0..n)
        .map(|i| {
            let prev = if i == 0 { &base } else { &chain[i - 1] };
            params.mul(&params.g_pow(&w_chain[i]), &params.pow(prev, &w_perm[i]))
        })
        .collect();

    let challenge = main_challenge(
        params,
        &statement_bytes,
        &perm_commitments,
        &chain,
        [&commit_sum, &chain_end, &weighted_commit, &reencryption.0, &reencryption.1],
        &chain_links,
    );
    let respond = |mask: &Scalar, secret: &Scalar| params.add(mask, &params.smul(&challenge, secret));

    let proof = ShuffleProof {
        s_sum: respond(&w[0], &sum_rand),
        s_chain_end: respond(&w[1], &chain_rand),
        s_weighted: respond(&w[2], &weighted_rand),
        s_reencryption: respond(&w[3], &reenc_rand),
        s_chain: (0..n).map(|i| respond(&w_chain[i], &chain_rands[i])).collect(),
        s_perm: (0..n).map(|i| respond(&w_perm[i], u_perm[i])).collect(),
        perm_commitments,
        chain,
        commit_sum,
        chain_end,
        weighted_commit,
        reencryption,
        chain_links,
        challenge,
    };
    Ok(proof)
}

impl ShuffleProof {
    fn well_formed(&self, params: &GroupParams, n: usize) -> bool {
        let lengths = self.perm_commitments.len() == n
            && self.chain.len() == n
            && self.chain_links.len() == n
            && self.s_chain.len() == n
            && self.s_perm.len() == n;
        if !lengths {
            return false;
        }
        let elements = self
            .perm_commitments
            .iter()
            .chain(&self.chain)
            .chain(&self.chain_links)
            .chain([
                &self.commit_sum,
                &self.chain_end,
                &self.weighted_commit,
                &self.reencryption.0,
                &self.reencryption.1,
            ]);
        let scalars = self.s_chain.iter().chain(&self.s_perm).chain([
            &self.challenge,
            &self.s_sum,
            &self.s_chain_end,
            &self.s_weighted,
            &self.s_reencryption,
        ]);
        elements.into_iter().all(|e| params.is_member(e)) && scalars.into_iter().all(|s| params.is_scalar(s))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u32(PROOF_VERSION);
        write_elements(&mut w, &self.perm_commitments);
        write_elements(&mut w, &self.chain);
        for e in [
            &self.commit_sum,
            &self.chain_end,
            &self.weighted_commit,
            &self.reencryption.0,
            &self.reencryption.1,
        ] {
            w.put_uint(e.value());
        }
        write_elements(&mut w, &self.chain_links);
        for s in [
            &self.challenge,
            &self.s_sum,
            &self.s_chain_end,
            &self.s_weighted,
            &self.s_reencryption,
        ] {
            w.put_uint(s.value());
        }
        write_scalars(&mut w, &self.s_chain);
        write_scalars(&mut w, &self.s_perm);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ShuffleError> {
        let mut r = Reader::new(bytes);
        if r.get_u32()? != PROOF_VERSION {
            return Err(ShuffleError::Malformed(DecodeError::NonCanonical));
        }
        let perm_commitments = read_elements(&mut r)?;
        let chain = read_elements(&mut r)?;
        let mut el = || r.get_uint().map(Element::from_uint);
        let commit_sum = el()?;
        let chain_end = el()?;
        let weighted_commit = el()?;
        let reencryption = (el()?, el()?);
        let chain_links = read_elements(&mut r)?;
        let mut sc = || r.get_uint().map(Scalar::from_uint);
        let challenge = sc()?;
        let s_sum = sc()?;
        let s_chain_end = sc()?;
        let s_weighted = sc()?;
        let s_reencryption = sc()?;
        let s_chain = read_scalars(&mut r)?;
        let s_perm = read_scalars(&mut r)?;
        r.finish()?;
        Ok(ShuffleProof {
            perm_commitments,
            chain,
            commit_sum,
            chain_end,
            weighted_commit,
            reencryption,
            chain_links,
            challenge,
            s_sum,
            s_chain_end,
            s_weighted,
            s_reencryption,
            s_chain,
            s_perm,
        })
    }
}

/// Checks a proof against a statement. Never errors: anything malformed rejects.
pub fn verify_shuffle(params: &GroupParams, statement: &ShuffleStatement, proof: &ShuffleProof) -> ShuffleVerdict {
    if verify_inner(params, statement, proof) {
        ShuffleVerdict::Accept
    } else {
        ShuffleVerdict::Reject
    }
}

/// Parses and checks a serialized proof.
pub fn verify_shuffle_bytes(params: &GroupParams, statement: &ShuffleStatement, proof: &[u8]) -> ShuffleVerdict {
    match ShuffleProof::from_bytes(proof) {
        Ok(p) => verify_shuffle(params, statement, &p),
        Err(_) => ShuffleVerdict::Reject,
    }
}

fn verify_inner(params: &GroupParams, statement: &ShuffleStatement, proof: &ShuffleProof) -> bool {
    let n = statement.len();
    if n == 0 || statement.outputs.len() != n {
        return false;
    }
    let cts_ok = statement
        .inputs
        .iter()
        .chain(&statement.outputs)
        .all(|c| c.is_valid(params));
    if !cts_ok || !params.is_member(&statement.pk.h) || !proof.well_formed(params, n) {
        return false;
    }

    let statement_bytes = statement.to_bytes(params);
    let (base, hs) = commitment_generators(params, n);
    let u = batching_challenges(params, &statement_bytes, &proof.perm_commitments);
    let challenge = main_challenge(
        params,
        &statement_bytes,
        &proof.perm_commitments,
        &proof.chain,
        [
            &proof.commit_sum,
            &proof.chain_end,
            &proof.weighted_commit,
            &proof.reencryption.0,
            &proof.reencryption.1,
        ],
        &proof.chain_links,
    );
    if challenge != proof.challenge {
        return false;
    }
    let neg_c = params.neg(&challenge);

    // prod c_j / prod h_i = g^{sum r_j}
    let commit_ratio = params.div(&params.product(&proof.perm_commitments), &params.product(&hs));
    // chain_n / base^{prod u} = g^{chain randomness}
    let u_prod = u.iter().fold(params.scalar(1u32), |acc, x| params.smul(&acc, x));
    let chain_ratio = params.div(&proof.chain[n - 1], &params.pow(&base, &u_prod));
    let weighted = params.multi_pow(proof.perm_commitments.iter().zip(&u));
    let batched_in = (
        params.multi_pow(statement.inputs.iter().map(|c| &c.c1).zip(&u)),
        params.multi_pow(statement.inputs.iter().map(|c| &c.c2).zip(&u)),
    );

    let t_sum = params.mul(&params.pow(&commit_ratio, &neg_c), &params.g_pow(&proof.s_sum));
    let t_chain_end = params.mul(&params.pow(&chain_ratio, &neg_c), &params.g_pow(&proof.s_chain_end));
    let t_weighted = params.mul(
        &params.mul(&params.pow(&weighted, &neg_c), &params.g_pow(&proof.s_weighted)),
        &params.multi_pow(hs.iter().zip(&proof.s_perm)),
    );
    let neg_s4 = params.neg(&proof.s_reencryption);
    let t_reenc = (
        params.mul(
            &params.mul(&params.pow(&batched_in.0, &neg_c), &params.g_pow(&neg_s4)),
            &params.multi_pow(statement.outputs.iter().map(|c| &c.c1).zip(&proof.s_perm)),
        ),
        params.mul(
            &params.mul(&params.pow(&batched_in.1, &neg_c), &params.pow(&statement.pk.h, &neg_s4)),
            &params.multi_pow(statement.outputs.iter().map(|c| &c.c2).zip(&proof.s_perm)),
        ),
    );

    if t_sum != proof.commit_sum
        || t_chain_end != proof.chain_end
        || t_weighted != proof.weighted_commit
        || t_reenc != proof.reencryption
    {
        return false;
    }
    (0..n).all(|i| {
        let prev = if i == 0 { &base } else { &proof.chain[i - 1] };
        let expect = params.mul(
            &params.mul(&params.pow(&proof.chain[i], &neg_c), &params.g_pow(&proof.s_chain[i])),
            &params.pow(prev, &proof.s_perm[i]),
        );
        expect == proof.chain_links[i]
    })
}

/// Opaque serialized proof as posted on the bulletin board. Parsing is deferred
/// to verification so a corrupted proof rejects instead of failing to load.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofBytes(pub Vec<u8>);

impl Serialize for ProofBytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for ProofBytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(ProofBytes).map_err(serde::de::Error::custom)
    }
}
