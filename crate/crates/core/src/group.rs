// Copyright 2026 The secagg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! System parameters and the modular arithmetic underneath the scheme.
//!
//! Every group element (g, the server keys, client public keys, challenges,
//! responses and ciphertext components) lives in Z*_{p²}. The generator `g`
//! has prime order `q`, where `p - 1 = γ·q`.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::packing::{build_packing, PackingParams, PackingParamsDoc};

/// Miller-Rabin rounds used for every primality decision.
pub const MR_ROUNDS: usize = 64;

/// Parameters below this modulus size are flagged as toy-only.
pub const PRODUCTION_MIN_BITS: u64 = 2048;

/// Smallest κ1 accepted by [`gen_system_params`].
pub const MIN_KAPPA1: u64 = 16;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

pub fn pow_mod(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    debug_assert!(*modulus >= BigUint::from(2u32));
    base.modpow(exp, modulus)
}

/// Multiplicative inverse of `x` modulo `modulus`.
///
/// A non-invertible input means the caller was handed something that is not
/// a group element, which in practice signals a corrupted ciphertext.
pub fn inv_mod(x: &BigUint, modulus: &BigUint) -> Result<BigUint> {
    x.modinv(modulus).ok_or_else(|| {
        Error::Arithmetic(format!(
            "element shares a factor with the modulus (gcd = {})",
            x.gcd(modulus)
        ))
    })
}

/// `L(x) = (x - 1) / p`, defined only when `x ≡ 1 (mod p)`.
pub fn big_l(x: &BigUint, p: &BigUint) -> Result<BigUint> {
    if x.is_zero() {
        return Err(Error::Decryption("L(0) is undefined".into()));
    }
    let (m, rem) = (x - 1u32).div_rem(p);
    if !rem.is_zero() {
        return Err(Error::Decryption("x - 1 is not a multiple of p".into()));
    }
    if m >= *p {
        return Err(Error::Decryption("L(x) exceeds the plaintext space".into()));
    }
    Ok(m)
}

/// Probabilistic primality test: trial division by small primes, then
/// Miller-Rabin with `rounds` random bases drawn from `rng`.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        if *n == BigUint::from(sp) {
            return true;
        }
        if (n % sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..rounds {
        // base in [2, n - 2]
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn passes_trial_division(n: &BigUint) -> bool {
    SMALL_PRIMES
        .iter()
        .all(|&sp| *n == BigUint::from(sp) || !(n % sp).is_zero())
}

/// Fixed-seed primality check used when validating loaded parameters.
fn is_prime_checked(n: &BigUint) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eca99);
    is_probable_prime(n, MR_ROUNDS, &mut rng)
}

/// Sample `g = h^{γ·p} mod p²` until `g ≠ 1`.
///
/// `Z*_{p²}` has order `p·γ·q`, so any such `g` has order dividing `q`; with
/// `q` prime and `g ≠ 1` the order is exactly `q`.
pub fn derive_generator<R: RngCore + ?Sized>(
    p: &BigUint,
    q: &BigUint,
    gamma: u64,
    rng: &mut R,
) -> BigUint {
    debug_assert_eq!(p - 1u32, q * gamma);
    let p2 = p * p;
    let lift = p * gamma;
    let two = BigUint::from(2u32);
    loop {
        let h = rng.gen_biguint_range(&two, &p2);
        if (&h % p).is_zero() {
            continue;
        }
        let g = h.modpow(&lift, &p2);
        if !g.is_one() {
            return g;
        }
    }
}

/// Uniform exponent in `[1, q)`.
pub fn random_exponent<R: RngCore + ?Sized>(q: &BigUint, rng: &mut R) -> BigUint {
    rng.gen_biguint_range(&BigUint::one(), q)
}

/// Public parameters shared by the server and every client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SysParams {
    pub p: BigUint,
    pub q: BigUint,
    pub gamma: u64,
    pub g: BigUint,
    /// Server public keys, one per packed segment.
    pub beta_vec: Vec<BigUint>,
    pub kappa1: u64,
    pub kappa2: u64,
    pub n_max_clients: u64,
    pub grad_max: u64,
    pub packing: PackingParams,
    p2: BigUint,
}

/// The server's private exponents `α_j`, one per segment.
#[derive(Clone, PartialEq, Eq)]
pub struct ServerSecret {
    pub alpha_vec: Vec<BigUint>,
}

impl std::fmt::Debug for ServerSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerSecret")
            .field("segments", &self.alpha_vec.len())
            .finish_non_exhaustive()
    }
}

/// Search for a κ1-bit prime `p = γ·q + 1` with `q` prime.
pub fn find_group_primes<R: RngCore + ?Sized>(
    kappa1: u64,
    gamma: u64,
    rng: &mut R,
) -> Result<(BigUint, BigUint)> {
    if kappa1 < MIN_KAPPA1 {
        return Err(Error::Params(format!(
            "kappa1 must be at least {MIN_KAPPA1} bits, got {kappa1}"
        )));
    }
    if gamma == 0 || !gamma.is_multiple_of(2) {
        return Err(Error::Params(format!(
            "gamma must be even and positive, got {gamma}"
        )));
    }
    if 64 - gamma.leading_zeros() as u64 + 2 > kappa1 {
        return Err(Error::Params(format!(
            "gamma {gamma} too large for {kappa1}-bit p"
        )));
    }
    // p in [2^{κ1-1}, 2^{κ1}) ⇒ q in [ceil((2^{κ1-1} - 1)/γ), floor((2^{κ1} - 2)/γ)]
    let lo_p = BigUint::one() << (kappa1 - 1);
    let hi_p = BigUint::one() << kappa1;
    let q_lo = Integer::div_ceil(&(&lo_p - 1u32), &BigUint::from(gamma));
    let q_hi = (&hi_p - 2u32) / gamma + 1u32;
    let max_attempts = 64 * kappa1 * kappa1 + 10_000;
    for _ in 0..max_attempts {
        let mut q = rng.gen_biguint_range(&q_lo, &q_hi);
        q.set_bit(0, true);
        if q >= q_hi {
            continue;
        }
        let p = &q * gamma + 1u32;
        if !passes_trial_division(&q) || !passes_trial_division(&p) {
            continue;
        }
        if p.bits() != kappa1 {
            continue;
        }
        if is_probable_prime(&q, MR_ROUNDS, rng) && is_probable_prime(&p, MR_ROUNDS, rng) {
            return Ok((p, q));
        }
    }
    Err(Error::Params(format!(
        "no {kappa1}-bit prime p = {gamma}q + 1 found after {max_attempts} attempts"
    )))
}

/// Generate a fresh parameter set and the matching server secret.
///
/// `grad_max` is the largest quantized entry a client may contribute and
/// `dims` the gradient dimension; together with `n_clients` they fix the
/// packing vector and therefore the number of server key pairs.
pub fn gen_system_params<R: RngCore + CryptoRng + ?Sized>(
    kappa1: u64,
    kappa2: u64,
    gamma: u64,
    n_clients: u64,
    grad_max: u64,
    dims: usize,
    rng: &mut R,
) -> Result<(SysParams, ServerSecret)> {
    check_kappa2(kappa2)?;
    let (p, q) = find_group_primes(kappa1, gamma, rng)?;
    SysParams::from_primes(p, q, gamma, kappa2, n_clients, grad_max, dims, rng)
}

fn check_kappa2(kappa2: u64) -> Result<()> {
    if kappa2 == 128 || kappa2 == 256 {
        Ok(())
    } else {
        Err(Error::Params(format!(
            "kappa2 must be 128 or 256 bits, got {kappa2}"
        )))
    }
}

impl SysParams {
    /// Build parameters over a caller-supplied group. Used for hand-picked toy
    /// groups; `gen_system_params` routes through here after its prime search.
    #[allow(clippy::too_many_arguments)]
    pub fn from_primes<R: RngCore + ?Sized>(
        p: BigUint,
        q: BigUint,
        gamma: u64,
        kappa2: u64,
        n_clients: u64,
        grad_max: u64,
        dims: usize,
        rng: &mut R,
    ) -> Result<(SysParams, ServerSecret)> {
        check_kappa2(kappa2)?;
        if &q * gamma + 1u32 != p {
            return Err(Error::Params("p - 1 != gamma * q".into()));
        }
        if !is_prime_checked(&p) || !is_prime_checked(&q) {
            return Err(Error::Params("p and q must both be prime".into()));
        }
        let packing = build_packing(&p, dims, n_clients, grad_max)?;
        let g = derive_generator(&p, &q, gamma, rng);
        let p2 = &p * &p;
        let alpha_vec: Vec<BigUint> = (0..packing.u).map(|_| random_exponent(&q, rng)).collect();
        let beta_vec = alpha_vec.iter().map(|a| pow_mod(&g, a, &p2)).collect();
        let params = SysParams {
            kappa1: p.bits(),
            p,
            q,
            gamma,
            g,
            beta_vec,
            kappa2,
            n_max_clients: n_clients,
            grad_max,
            packing,
            p2,
        };
        Ok((params, ServerSecret { alpha_vec }))
    }

    /// The ambient modulus `p²`.
    pub fn p_squared(&self) -> &BigUint {
        &self.p2
    }

    /// Number of packed segments (and server key pairs).
    pub fn segments(&self) -> usize {
        self.packing.u
    }

    pub fn insecure_toy(&self) -> bool {
        self.kappa1 < PRODUCTION_MIN_BITS
    }

    /// Byte width of one serialized group element.
    pub fn element_len(&self) -> usize {
        element_width(&self.p2)
    }

    /// Check every structural invariant. Loading a parameter file always
    /// runs this.
    pub fn validate(&self) -> Result<()> {
        check_kappa2(self.kappa2)?;
        if self.p.bits() != self.kappa1 {
            return Err(Error::Params(format!(
                "|p| = {} bits but kappa1 = {}",
                self.p.bits(),
                self.kappa1
            )));
        }
        if &self.q * self.gamma + 1u32 != self.p {
            return Err(Error::Params("p - 1 != gamma * q".into()));
        }
        if !is_prime_checked(&self.p) || !is_prime_checked(&self.q) {
            return Err(Error::Params("p and q must both be prime".into()));
        }
        if self.g.is_one() || !pow_mod(&self.g, &self.q, &self.p2).is_one() {
            return Err(Error::Params("g does not have order q mod p^2".into()));
        }
        if self.beta_vec.len() != self.packing.u {
            return Err(Error::Params(format!(
                "{} server keys for {} segments",
                self.beta_vec.len(),
                self.packing.u
            )));
        }
        if self
            .beta_vec
            .iter()
            .any(|b| b.is_zero() || !pow_mod(b, &self.q, &self.p2).is_one())
        {
            return Err(Error::Params(
                "server key outside the order-q subgroup".into(),
            ));
        }
        if self.packing.n_clients != self.n_max_clients || self.packing.grad_max != self.grad_max {
            return Err(Error::Params(
                "packing parameters disagree with N or grad_max".into(),
            ));
        }
        self.packing.validate(&self.p)
    }

    /// SHA-256 over the canonical JSON document.
    pub fn fingerprint(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(&SysParamsDoc::from(self)).expect("params serialize");
        Sha256::digest(bytes).into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SysParamsDoc::from(self)).expect("params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SysParamsDoc =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        let params = SysParams::try_from(doc)?;
        params.validate()?;
        Ok(params)
    }
}

impl ServerSecret {
    /// Confirms `β_j = g^{α_j}` for every segment.
    pub fn matches(&self, params: &SysParams) -> bool {
        self.alpha_vec.len() == params.beta_vec.len()
            && self.alpha_vec.iter().zip(&params.beta_vec).all(|(a, b)| {
                !a.is_zero() && *a < params.q && pow_mod(&params.g, a, params.p_squared()) == *b
            })
    }

    pub fn to_json(&self, params: &SysParams) -> String {
        let doc = ServerSecretDoc {
            alpha_vec: self.alpha_vec.iter().map(to_hex).collect(),
            params_fingerprint: hex::encode(params.fingerprint()),
        };
        serde_json::to_string_pretty(&doc).expect("secret serialize")
    }

    pub fn from_json(s: &str, params: &SysParams) -> Result<Self> {
        let doc: ServerSecretDoc =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.params_fingerprint != hex::encode(params.fingerprint()) {
            return Err(Error::Params(
                "server secret belongs to different parameters".into(),
            ));
        }
        let secret = ServerSecret {
            alpha_vec: doc
                .alpha_vec
                .iter()
                .map(|h| from_hex(h))
                .collect::<Result<_>>()?,
        };
        if !secret.matches(params) {
            return Err(Error::Params(
                "server secret does not match beta_vec".into(),
            ));
        }
        Ok(secret)
    }
}

pub(crate) fn element_width(modulus: &BigUint) -> usize {
    (modulus.bits() as usize).div_ceil(8)
}

/// Big-endian encoding left-padded to `width` bytes.
pub fn to_fixed_bytes(x: &BigUint, width: usize) -> Vec<u8> {
    let raw = x.to_bytes_be();
    let mut out = vec![0u8; width.saturating_sub(raw.len())];
    out.extend_from_slice(&raw);
    out
}

pub fn to_hex(x: &BigUint) -> String {
    x.to_str_radix(16)
}

pub fn from_hex(s: &str) -> Result<BigUint> {
    BigUint::parse_bytes(s.as_bytes(), 16)
        .ok_or_else(|| Error::Serialization(format!("invalid hex integer {s:?}")))
}

#[derive(Serialize, Deserialize)]
struct SysParamsDoc {
    p: String,
    q: String,
    gamma: u64,
    g: String,
    beta_vec: Vec<String>,
    kappa1: u64,
    kappa2: u64,
    n_max_clients: u64,
    grad_max: u64,
    packing: PackingParamsDoc,
    insecure_toy: bool,
}

#[derive(Serialize, Deserialize)]
struct ServerSecretDoc {
    alpha_vec: Vec<String>,
    params_fingerprint: String,
}

impl From<&SysParams> for SysParamsDoc {
    fn from(sp: &SysParams) -> Self {
        SysParamsDoc {
            p: to_hex(&sp.p),
            q: to_hex(&sp.q),
            gamma: sp.gamma,
            g: to_hex(&sp.g),
            beta_vec: sp.beta_vec.iter().map(to_hex).collect(),
            kappa1: sp.kappa1,
            kappa2: sp.kappa2,
            n_max_clients: sp.n_max_clients,
            grad_max: sp.grad_max,
            packing: PackingParamsDoc::from(&sp.packing),
            insecure_toy: sp.insecure_toy(),
        }
    }
}

impl TryFrom<SysParamsDoc> for SysParams {
    type Error = Error;

    fn try_from(doc: SysParamsDoc) -> Result<Self> {
        let p = from_hex(&doc.p)?;
        let p2 = &p * &p;
        let params = SysParams {
            q: from_hex(&doc.q)?,
            gamma: doc.gamma,
            g: from_hex(&doc.g)?,
            beta_vec: doc
                .beta_vec
                .iter()
                .map(|h| from_hex(h))
                .collect::<Result<_>>()?,
            kappa1: doc.kappa1,
            kappa2: doc.kappa2,
            n_max_clients: doc.n_max_clients,
            grad_max: doc.grad_max,
            packing: PackingParams::try_from(doc.packing)?,
            p,
            p2,
        };
        if doc.insecure_toy != params.insecure_toy() {
            return Err(Error::Params(
                "insecure_toy flag does not match kappa1".into(),
            ));
        }
        Ok(params)
    }
}
