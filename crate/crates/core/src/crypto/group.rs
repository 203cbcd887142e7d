use std::fmt;
use std::str::FromStr;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::CryptoError;

/// Largest plaintext space the linear-scan discrete log will search.
pub const MAX_CANDIDATE_BOUND: u32 = 1 << 16;

// RFC 3526 group 14; p = 2q + 1 with q prime and p = 7 (mod 8), so 2 is a
// quadratic residue and generates the order-q subgroup.
const STANDARD_P: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374\
FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE\
386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598D\
A48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED5\
29077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E7\
72C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497\
CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

// 256-bit safe prime, p = 7 (mod 8). Big enough that Fiat–Shamir challenges are
// unguessable, small enough for thousands of proofs per second.
const MEDIUM_P: &str = "a1e384323a675230fda4294d829915fa5114fc7f1e1a174086ec97d869923f5f";

/// Named parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupPreset {
    /// p = 23, q = 11, g = 2. Hand-checkable; offers no security.
    Toy,
    /// 256-bit safe-prime group.
    Medium,
    /// 2048-bit safe-prime group (RFC 3526 group 14).
    Standard,
}

impl GroupPreset {
    pub fn name(self) -> &'static str {
        match self {
            GroupPreset::Toy => "toy",
            GroupPreset::Medium => "medium",
            GroupPreset::Standard => "standard",
        }
    }
}

impl fmt::Display for GroupPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupPreset {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(GroupPreset::Toy),
            "medium" => Ok(GroupPreset::Medium),
            "standard" => Ok(GroupPreset::Standard),
            other => Err(CryptoError::UnknownPreset(other.to_string())),
        }
    }
}

fn hex_uint(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("pinned constant is valid hex")
}

macro_rules! hex_newtype_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0.to_str_radix(16))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                BigUint::parse_bytes(s.as_bytes(), 16)
                    .map($ty)
                    .ok_or_else(|| serde::de::Error::custom("expected lowercase hex integer"))
            }
        }
    };
}

/// An element of `Z_p^*`. Membership in the order-q subgroup is checked by
/// [`GroupParams::is_member`], not by construction.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(pub(crate) BigUint);

/// An exponent in `Z_q`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(pub(crate) BigUint);

hex_newtype_serde!(Element);
hex_newtype_serde!(Scalar);

impl Element {
    /// Wraps a raw integer without any membership check.
    pub fn from_uint(v: BigUint) -> Self {
        Element(v)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl Scalar {
    /// Wraps a raw integer without reducing it; see [`GroupParams::scalar`].
    pub fn from_uint(v: BigUint) -> Self {
        Scalar(v)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element({})", self.0)
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

/// Public parameters: a prime-order subgroup of `Z_p^*` and the size of the
/// plaintext (candidate) space.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct GroupParams {
    p: Element,
    q: Scalar,
    g: Element,
    candidate_bound: u32,
}

#[derive(Deserialize)]
struct RawParams {
    p: Element,
    q: Scalar,
    g: Element,
    candidate_bound: u32,
}

impl TryFrom<RawParams> for GroupParams {
    type Error = CryptoError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        GroupParams::assemble(raw.p.0, raw.q.0, raw.g.0, raw.candidate_bound)
    }
}

/// Builds the parameters for a named preset.
pub fn setup(preset: GroupPreset, candidate_bound: u32) -> Result<GroupParams, CryptoError> {
    let (p, q, g) = match preset {
        GroupPreset::Toy => (BigUint::from(23u32), BigUint::from(11u32), BigUint::from(2u32)),
        GroupPreset::Medium | GroupPreset::Standard => {
            let p = hex_uint(if preset == GroupPreset::Medium {
                MEDIUM_P
            } else {
                STANDARD_P
            });
            let q = (&p - 1u32) >> 1;
            (p, q, BigUint::from(2u32))
        }
    };
    GroupParams::assemble(p, q, g, candidate_bound)
}

impl GroupParams {
    /// Validated constructor for caller-supplied parameters. Primality of `q` is
    /// checked with Miller–Rabin.
    pub fn new(
        p: BigUint,
        q: BigUint,
        g: BigUint,
        candidate_bound: u32,
    ) -> Result<Self, CryptoError> {
        if !is_probable_prime(&q, 40) {
            return Err(CryptoError::InvalidParams("q is not prime"));
        }
        Self::assemble(p, q, g, candidate_bound)
    }

    // Structural checks only; presets skip the primality test, which the test
    // suite performs once against the pinned constants.
    fn assemble(p: BigUint, q: BigUint, g: BigUint, candidate_bound: u32) -> Result<Self, CryptoError> {
        if q.is_zero() || p <= q {
            return Err(CryptoError::InvalidParams("need p > q > 0"));
        }
        if !((&p - 1u32) % &q).is_zero() {
            return Err(CryptoError::InvalidParams("q must divide p - 1"));
        }
        if g.is_one() || g.is_zero() || g >= p || !g.modpow(&q, &p).is_one() {
            return Err(CryptoError::InvalidParams("g must have order q"));
        }
        if candidate_bound == 0 || candidate_bound > MAX_CANDIDATE_BOUND {
            return Err(CryptoError::CandidateBound(candidate_bound));
        }
        if BigUint::from(candidate_bound) > q {
            return Err(CryptoError::CandidateBound(candidate_bound));
        }
        Ok(GroupParams {
            p: Element(p),
            q: Scalar(q),
            g: Element(g),
            candidate_bound,
        })
    }

    pub fn p(&self) -> &BigUint {
        &self.p.0
    }

    pub fn q(&self) -> &BigUint {
        &self.q.0
    }

    pub fn generator(&self) -> &Element {
        &self.g
    }

    pub fn candidate_bound(&self) -> u32 {
        self.candidate_bound
    }

    /// Bytes needed for a canonical scalar, used to size hash outputs.
    pub fn scalar_bytes(&self) -> usize {
        self.q.0.bits().div_ceil(8) as usize
    }

    pub fn identity(&self) -> Element {
        Element(BigUint::one())
    }

    /// `0 < x < p` and `x^q = 1`.
    pub fn is_member(&self, x: &Element) -> bool {
        !x.0.is_zero() && x.0 < self.p.0 && x.0.modpow(&self.q.0, &self.p.0).is_one()
    }

    pub fn is_scalar(&self, s: &Scalar) -> bool {
        s.0 < self.q.0
    }

    /// Checked element constructor.
    pub fn element(&self, v: BigUint) -> Result<Element, CryptoError> {
        let e = Element(v);
        if self.is_member(&e) {
            Ok(e)
        } else {
            Err(CryptoError::NotInSubgroup)
        }
    }

    /// Reduces `v` into `Z_q`.
    pub fn scalar(&self, v: impl Into<BigUint>) -> Scalar {
        Scalar(v.into() % &self.q.0)
    }

    pub fn random_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_below(&self.q.0))
    }

    /// Uniform in `[1, q)`.
    pub fn random_nonzero_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_range(&BigUint::one(), &self.q.0))
    }

    pub fn pow(&self, base: &Element, e: &Scalar) -> Element {
        Element(base.0.modpow(&e.0, &self.p.0))
    }

    pub fn g_pow(&self, e: &Scalar) -> Element {
        self.pow(&self.g, e)
    }

    /// `g^m` for a small plaintext.
    pub fn encode(&self, m: u32) -> Element {
        self.g_pow(&self.scalar(m))
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        Element((&a.0 * &b.0) % &self.p.0)
    }

    /// Inverse of a subgroup element, computed as `x^(q-1)`.
    pub fn inv(&self, a: &Element) -> Element {
        Element(a.0.modpow(&(&self.q.0 - 1u32), &self.p.0))
    }

    pub fn div(&self, a: &Element, b: &Element) -> Element {
        self.mul(a, &self.inv(b))
    }

    /// `prod_i bases[i]^exps[i]`.
    pub fn multi_pow<'a>(
        &self,
        pairs: impl IntoIterator<Item = (&'a Element, &'a Scalar)>,
    ) -> Element {
        pairs
            .into_iter()
            .fold(self.identity(), |acc, (b, e)| self.mul(&acc, &self.pow(b, e)))
    }

    pub fn product<'a>(&self, xs: impl IntoIterator<Item = &'a Element>) -> Element {
        xs.into_iter().fold(self.identity(), |acc, x| self.mul(&acc, x))
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q.0)
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &self.q.0 - (&b.0 % &self.q.0)) % &self.q.0)
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        self.sub(&Scalar(BigUint::zero()), a)
    }

    pub fn smul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q.0)
    }

    /// Modular inverse in `Z_q` (q prime). `None` for zero.
    pub fn sinv(&self, a: &Scalar) -> Option<Scalar> {
        if (&a.0 % &self.q.0).is_zero() {
            return None;
        }
        Some(Scalar(a.0.modpow(&(&self.q.0 - 2u32), &self.q.0)))
    }

    /// Expands `(domain, data)` to `len` bytes with counter-mode SHA-256.
    pub(crate) fn expand(domain: &[u8], data: &[u8], len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len + 32);
        let mut counter = 0u32;
        while out.len() < len {
            let mut h = Sha256::new();
            h.update((domain.len() as u32).to_be_bytes());
            h.update(domain);
            h.update(counter.to_be_bytes());
            h.update(data);
            out.extend_from_slice(&h.finalize());
            counter += 1;
        }
        out.truncate(len);
        out
    }

    /// Hash to `Z_q` with 128 bits of slack to flatten the modular bias.
    pub fn hash_to_scalar(&self, domain: &[u8], data: &[u8]) -> Scalar {
        let wide = Self::expand(domain, data, self.scalar_bytes() + 16);
        self.scalar(BigUint::from_bytes_be(&wide))
    }

    /// Hash to a non-identity subgroup element by mapping into `Z_p` and raising
    /// to the cofactor `(p-1)/q`. Nobody learns the discrete log of the result.
    pub fn hash_to_group(&self, domain: &[u8], data: &[u8]) -> Element {
        let cofactor = (&self.p.0 - 1u32) / &self.q.0;
        let width = self.p.0.bits().div_ceil(8) as usize + 16;
        for attempt in 0u32.. {
            let mut input = data.to_vec();
            input.extend_from_slice(&attempt.to_be_bytes());
            let x = BigUint::from_bytes_be(&Self::expand(domain, &input, width)) % &self.p.0;
            let y = x.modpow(&cofactor, &self.p.0);
            if !y.is_zero() && !y.is_one() {
                return Element(y);
            }
        }
        unreachable!("attempt counter exhausted")
    }
}

/// Miller–Rabin with deterministic bases derived from `n`.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let s = BigUint::from(small);
        if *n == s {
            return true;
        }
        if (n % &s).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let shift = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> shift;
    let width = n.bits().div_ceil(8) as usize + 8;
    'witness: for round in 0..rounds {
        let raw = GroupParams::expand(b"ivxv-sim/miller-rabin", &round.to_be_bytes(), width);
        let a = BigUint::from_bytes_be(&raw) % (n - 3u32) + 2u32;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn toy_preset_matches_hand_values() {
        let params = setup(GroupPreset::Toy, 8).unwrap();
        assert_eq!(params.p(), &BigUint::from(23u32));
        assert_eq!(params.q(), &BigUint::from(11u32));
        assert_eq!(params.generator().value(), &BigUint::from(2u32));
        // 2^11 = 2048 = 89 * 23 + 1
        assert_eq!(BigUint::from(2u32).pow(11) % 23u32, BigUint::one());
    }

    #[test]
    fn candidate_bound_limits() {
        assert!(matches!(
            setup(GroupPreset::Toy, 12),
            Err(CryptoError::CandidateBound(12))
        ));
        assert!(setup(GroupPreset::Toy, 11).is_ok());
        assert!(matches!(
            setup(GroupPreset::Toy, 0),
            Err(CryptoError::CandidateBound(0))
        ));
        assert!(matches!(
            setup(GroupPreset::Standard, MAX_CANDIDATE_BOUND + 1),
            Err(CryptoError::CandidateBound(_))
        ));
    }

    #[test]
    fn unknown_preset_name() {
        assert!(matches!(
            "huge".parse::<GroupPreset>(),
            Err(CryptoError::UnknownPreset(_))
        ));
        assert_eq!("standard".parse::<GroupPreset>().unwrap(), GroupPreset::Standard);
    }

    #[test]
    fn custom_params_are_validated() {
        let b = |v: u32| BigUint::from(v);
        assert!(GroupParams::new(b(23), b(11), b(2), 4).is_ok());
        // 5 has order 22 mod 23
        assert!(GroupParams::new(b(23), b(11), b(5), 4).is_err());
        assert!(GroupParams::new(b(23), b(11), b(1), 4).is_err());
        // q not prime
        assert!(GroupParams::new(b(23), b(22), b(2), 4).is_err());
        // q does not divide p - 1
        assert!(GroupParams::new(b(23), b(7), b(2), 4).is_err());
    }

    #[test]
    fn subgroup_membership_in_toy_group() {
        let params = setup(GroupPreset::Toy, 4).unwrap();
        // the order-11 subgroup of Z_23^* is the set of quadratic residues
        let residues: Vec<u32> = (1..23u32).filter(|x| (1..23u32).any(|y| y * y % 23 == *x)).collect();
        for x in 0..30u32 {
            let expect = residues.contains(&x);
            assert_eq!(params.is_member(&Element::from_uint(x.into())), expect, "x = {x}");
        }
    }

    #[test]
    fn scalar_arithmetic_wraps() {
        let params = setup(GroupPreset::Toy, 4).unwrap();
        let s = |v: u32| params.scalar(v);
        assert_eq!(params.add(&s(7), &s(6)), s(2));
        assert_eq!(params.sub(&s(3), &s(5)), s(9));
        assert_eq!(params.neg(&s(0)), s(0));
        assert_eq!(params.smul(&s(4), &s(3)), s(1));
        assert_eq!(params.sinv(&s(4)), Some(s(3)));
        assert_eq!(params.sinv(&s(0)), None);
    }

    #[test]
    fn hashing_lands_in_range() {
        for preset in [GroupPreset::Toy, GroupPreset::Medium] {
            let params = setup(preset, 4).unwrap();
            for i in 0..20u32 {
                let e = params.hash_to_group(b"test", &i.to_be_bytes());
                assert!(params.is_member(&e));
                assert_ne!(e, params.identity());
                assert!(params.is_scalar(&params.hash_to_scalar(b"test", &i.to_be_bytes())));
            }
        }
    }

    #[test]
    fn random_scalars_in_range() {
        let params = setup(GroupPreset::Toy, 4).unwrap();
        let mut rng = derive_rng(1, "test", 0);
        for _ in 0..200 {
            assert!(params.is_scalar(&params.random_scalar(&mut rng)));
            assert!(!params.random_nonzero_scalar(&mut rng).is_zero());
        }
    }

    #[test]
    fn params_serde_roundtrip() {
        let params = setup(GroupPreset::Medium, 16).unwrap();
        let json = serde_json::to_string(&params).unwrap();
        let back: GroupParams = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
    }
}
