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

//! Client keys, the two-part packed ciphertext, challenge/response and the
//! server-only decryption of an aggregate.
//!
//! Client `i` encrypts packed segments `m_j` under the round's aggregated key
//! `pk_S` with fresh exponents `r1`, `r2`:
//!
//! ```text
//! e1[j]      = (p+1)^{m_j} · β_j^{r1}      mod p²
//! e2_first   = g^{r2}                      mod p²
//! e2_second  = g^{r1} · pk_S^{r2}          mod p²
//! ```
//!
//! Multiplying the `e2_second` values of all online clients and dividing by
//! the product of the responses `T_i = R^{sk_i}` leaves `g^{Σ r1}`, which only
//! the holder of `α_j` can strip from the aggregated `e1[j]`.

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Aes256Gcm, Nonce};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::group::{
    big_l, from_hex, inv_mod, pow_mod, random_exponent, to_fixed_bytes, to_hex, ServerSecret,
    SysParams,
};
use crate::packing::PackedGradient;

pub const NONCE_LEN: usize = 12;

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: BigUint,
    pub pk: BigUint,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("pk", &self.pk)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub e1: Vec<BigUint>,
    pub e2_first: BigUint,
    pub e2_second: BigUint,
}

/// Per-round encryption exponents. Colluding clients in the test oracle
/// reveal `r2`, so callers that need it can keep this around.
#[derive(Clone, PartialEq, Eq)]
pub struct EncryptionNonces {
    pub r1: BigUint,
    pub r2: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateBundle {
    pub e_agg: Vec<BigUint>,
    pub d: BigUint,
    pub t: BigUint,
}

/// Symmetric key derived from the client/server Diffie-Hellman value.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey(Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedModel {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
}

pub fn client_keygen<R: RngCore + CryptoRng + ?Sized>(params: &SysParams, rng: &mut R) -> KeyPair {
    let sk = random_exponent(&params.q, rng);
    let pk = pow_mod(&params.g, &sk, params.p_squared());
    KeyPair { sk, pk }
}

/// `pk_S = Π pk_i mod p²`.
pub fn agg_pubkey<'a>(
    pks: impl IntoIterator<Item = &'a BigUint>,
    params: &SysParams,
) -> Result<BigUint> {
    product(pks, params.p_squared())
        .ok_or_else(|| Error::Usage("aggregated key needs at least one public key".into()))
}

fn product<'a>(items: impl IntoIterator<Item = &'a BigUint>, modulus: &BigUint) -> Option<BigUint> {
    let mut it = items.into_iter();
    let first = it.next()?.clone() % modulus;
    Some(it.fold(first, |acc, x| acc * x % modulus))
}

fn hash_to_key(shared: &BigUint, params: &SysParams) -> SymmetricKey {
    let encoded = to_fixed_bytes(shared, params.element_len());
    let want = (params.kappa2 / 8) as usize;
    let mut out = Vec::with_capacity(want);
    let mut counter = 0u32;
    while out.len() < want {
        let mut h = Sha256::new();
        h.update(b"secagg/model-key");
        h.update(counter.to_be_bytes());
        h.update(&encoded);
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(want);
    SymmetricKey(out)
}

/// Server side of the key agreement: `H(pk_i^α)`.
pub fn derive_symmetric_key_server(
    pk_i: &BigUint,
    alpha: &BigUint,
    params: &SysParams,
) -> SymmetricKey {
    hash_to_key(&pow_mod(pk_i, alpha, params.p_squared()), params)
}

/// Client side of the key agreement: `H(β^{sk_i})`.
pub fn derive_symmetric_key_client(
    beta: &BigUint,
    sk_i: &BigUint,
    params: &SysParams,
) -> SymmetricKey {
    hash_to_key(&pow_mod(beta, sk_i, params.p_squared()), params)
}

impl SymmetricKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn bits(&self) -> usize {
        self.0.len() * 8
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricKey({} bits)", self.bits())
    }
}

pub fn seal_model<R: RngCore + CryptoRng + ?Sized>(
    key: &SymmetricKey,
    model_bytes: &[u8],
    rng: &mut R,
) -> Result<SealedModel> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let n = Nonce::from_slice(&nonce);
    let body = match key.0.len() {
        16 => Aes128Gcm::new_from_slice(&key.0).map(|c| c.encrypt(n, model_bytes)),
        32 => Aes256Gcm::new_from_slice(&key.0).map(|c| c.encrypt(n, model_bytes)),
        other => {
            return Err(Error::KeyDerivation(format!(
                "unsupported key length {other}"
            )))
        }
    }
    .map_err(|_| Error::KeyDerivation("invalid key".into()))?
    .map_err(|_| Error::KeyDerivation("encryption failed".into()))?;
    Ok(SealedModel { nonce, body })
}

pub fn open_model(key: &SymmetricKey, sealed: &SealedModel) -> Result<Vec<u8>> {
    let n = Nonce::from_slice(&sealed.nonce);
    match key.0.len() {
        16 => Aes128Gcm::new_from_slice(&key.0).map(|c| c.decrypt(n, sealed.body.as_slice())),
        32 => Aes256Gcm::new_from_slice(&key.0).map(|c| c.decrypt(n, sealed.body.as_slice())),
        other => {
            return Err(Error::KeyDerivation(format!(
                "unsupported key length {other}"
            )))
        }
    }
    .map_err(|_| Error::KeyDerivation("invalid key".into()))?
    .map_err(|_| Error::Authentication)
}

impl EncryptionNonces {
    pub fn sample<R: RngCore + CryptoRng + ?Sized>(params: &SysParams, rng: &mut R) -> Self {
        EncryptionNonces {
            r1: random_exponent(&params.q, rng),
            r2: random_exponent(&params.q, rng),
        }
    }
}

/// Encrypt with fresh exponents.
pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(
    packed: &PackedGradient,
    pk_s: &BigUint,
    params: &SysParams,
    rng: &mut R,
) -> Result<Ciphertext> {
    let nonces = EncryptionNonces::sample(params, rng);
    encrypt_with(packed, pk_s, params, &nonces)
}

/// Encrypt with caller-chosen exponents; the same `r1` masks every segment.
pub fn encrypt_with(
    packed: &PackedGradient,
    pk_s: &BigUint,
    params: &SysParams,
    nonces: &EncryptionNonces,
) -> Result<Ciphertext> {
    if packed.segments.len() != params.segments() {
        return Err(Error::Range(format!(
            "{} segments, parameters expect {}",
            packed.segments.len(),
            params.segments()
        )));
    }
    let p2 = params.p_squared();
    let e1 = packed
        .segments
        .iter()
        .zip(&params.beta_vec)
        .map(|(m, beta)| {
            if *m >= params.p {
                return Err(Error::Range("packed segment is not below p".into()));
            }
            // (p+1)^m ≡ 1 + m·p (mod p²)
            let lifted = (BigUint::one() + m * &params.p) % p2;
            Ok(lifted * pow_mod(beta, &nonces.r1, p2) % p2)
        })
        .collect::<Result<Vec<_>>>()?;
    let e2_first = pow_mod(&params.g, &nonces.r2, p2);
    let e2_second = pow_mod(&params.g, &nonces.r1, p2) * pow_mod(pk_s, &nonces.r2, p2) % p2;
    Ok(Ciphertext {
        e1,
        e2_first,
        e2_second,
    })
}

/// `R = Π g^{r2_i}` over the online set.
pub fn gen_challenge<'a>(
    e2_firsts: impl IntoIterator<Item = &'a BigUint>,
    params: &SysParams,
) -> Result<BigUint> {
    let items: Vec<&BigUint> = e2_firsts.into_iter().collect();
    if items.len() < 2 {
        return Err(Error::PrivacyGuard(format!(
            "challenge over {} ciphertext(s) would expose an individual gradient",
            items.len()
        )));
    }
    Ok(product(items, params.p_squared()).expect("non-empty"))
}

pub fn gen_response(challenge: &BigUint, sk_i: &BigUint, params: &SysParams) -> BigUint {
    pow_mod(challenge, sk_i, params.p_squared())
}

pub fn aggregate(
    cts: &[Ciphertext],
    responses: &[BigUint],
    params: &SysParams,
) -> Result<AggregateBundle> {
    if cts.len() != responses.len() {
        return Err(Error::Protocol(format!(
            "{} ciphertexts but {} responses",
            cts.len(),
            responses.len()
        )));
    }
    if cts.len() < 2 {
        return Err(Error::PrivacyGuard(
            "aggregation needs at least two clients".into(),
        ));
    }
    let u = params.segments();
    if let Some(bad) = cts.iter().position(|c| c.e1.len() != u) {
        return Err(Error::Protocol(format!(
            "ciphertext {bad} has the wrong segment count"
        )));
    }
    let p2 = params.p_squared();
    let e_agg = (0..u)
        .map(|j| product(cts.iter().map(|c| &c.e1[j]), p2).expect("non-empty"))
        .collect();
    Ok(AggregateBundle {
        e_agg,
        d: product(cts.iter().map(|c| &c.e2_second), p2).expect("non-empty"),
        t: product(responses, p2).expect("non-empty"),
    })
}

/// Server-side decryption of the aggregated segment sums.
pub fn decrypt(
    bundle: &AggregateBundle,
    secret: &ServerSecret,
    params: &SysParams,
) -> Result<Vec<BigUint>> {
    let p2 = params.p_squared();
    let mask = bundle.d.clone() * inv_mod(&bundle.t, p2)? % p2;
    unmask(&bundle.e_agg, &mask, secret, params)
}

/// Strip `mask^{α_j}` from every segment and apply `L`.
fn unmask(
    e: &[BigUint],
    mask: &BigUint,
    secret: &ServerSecret,
    params: &SysParams,
) -> Result<Vec<BigUint>> {
    if e.len() != secret.alpha_vec.len() {
        return Err(Error::Decryption(format!(
            "{} segments but {} server keys",
            e.len(),
            secret.alpha_vec.len()
        )));
    }
    let p2 = params.p_squared();
    let inv = inv_mod(mask, p2)?;
    e.iter()
        .zip(&secret.alpha_vec)
        .map(|(ej, alpha)| {
            if ej.is_zero() {
                return Err(Error::Decryption("zero ciphertext component".into()));
            }
            big_l(&(ej * pow_mod(&inv, alpha, p2) % p2), &params.p)
        })
        .collect()
}

/// What a server colluding with every online client except `i` and `j` can
/// compute: the victims' ciphertexts, responses and public keys, plus the
/// colluders' summed secret keys and summed `r2` exponents.
#[cfg(any(test, feature = "collusion-oracle"))]
pub struct CollusionView<'a> {
    pub victims: [(&'a Ciphertext, &'a BigUint, &'a BigUint); 2],
    pub colluder_sk_sum: BigUint,
    pub colluder_r2_sum: BigUint,
}

/// Pairwise extraction available to a server colluding with all but two
/// online clients. Yields the two victims' summed segments and nothing finer.
#[cfg(any(test, feature = "collusion-oracle"))]
pub fn collusion_extract_pair(
    view: &CollusionView<'_>,
    secret: &ServerSecret,
    params: &SysParams,
) -> Result<Vec<BigUint>> {
    let p2 = params.p_squared();
    let [(ct_i, t_i, pk_i), (ct_j, t_j, pk_j)] = view.victims;
    let e_pair: Vec<BigUint> = ct_i
        .e1
        .iter()
        .zip(&ct_j.e1)
        .map(|(a, b)| a * b % p2)
        .collect();
    let d_pair = &ct_i.e2_second * &ct_j.e2_second % p2;
    let t_pair = t_i * t_j % p2;
    // d* = d_{i&j} · (g^{r_i2} g^{r_j2})^{-Σ sk_k}
    let r2_pair = &ct_i.e2_first * &ct_j.e2_first % p2;
    let d_star = d_pair * pow_mod(&inv_mod(&r2_pair, p2)?, &view.colluder_sk_sum, p2) % p2;
    // T* = T_{i&j} · (pk_i pk_j)^{-Σ r_k2}
    let pk_pair = pk_i * pk_j % p2;
    let t_star = t_pair * pow_mod(&inv_mod(&pk_pair, p2)?, &view.colluder_r2_sum, p2) % p2;
    let mask = d_star * inv_mod(&t_star, p2)? % p2;
    unmask(&e_pair, &mask, secret, params)
}

#[derive(Serialize, Deserialize)]
struct KeyFileDoc {
    sk: String,
    pk: String,
    params_fingerprint: String,
}

impl KeyPair {
    /// Key file bound to one parameter set by its fingerprint.
    pub fn to_json(&self, params: &SysParams) -> String {
        serde_json::to_string_pretty(&KeyFileDoc {
            sk: to_hex(&self.sk),
            pk: to_hex(&self.pk),
            params_fingerprint: hex::encode(params.fingerprint()),
        })
        .expect("key serialize")
    }

    pub fn from_json(s: &str, params: &SysParams) -> Result<Self> {
        let doc: KeyFileDoc =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.params_fingerprint != hex::encode(params.fingerprint()) {
            return Err(Error::Params(
                "key file was generated for different parameters".into(),
            ));
        }
        let kp = KeyPair {
            sk: from_hex(&doc.sk)?,
            pk: from_hex(&doc.pk)?,
        };
        if kp.sk.is_zero()
            || kp.sk >= params.q
            || pow_mod(&params.g, &kp.sk, params.p_squared()) != kp.pk
        {
            return Err(Error::Params("key file is inconsistent".into()));
        }
        Ok(kp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::pack;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn toy(n: usize, seed: u64) -> (SysParams, ServerSecret) {
        // p = 23: N = 2, grad_max = 1 gives a = (1, 3), k = 2 (1·2 + 3·2 = 8 < 23)
        SysParams::from_primes(
            BigUint::from(23u32),
            BigUint::from(11u32),
            2,
            128,
            2,
            1,
            n,
            &mut rng(seed),
        )
        .unwrap()
    }

    fn b(x: u64) -> BigUint {
        BigUint::from(x)
    }

    #[test]
    fn keygen_matches_brute_force_table() {
        let (sp, _) = toy(2, 1);
        let p2 = sp.p_squared();
        let mut table = vec![b(1)];
        for e in 1..11u64 {
            table.push(&table[e as usize - 1] * &sp.g % p2);
        }
        let mut r = rng(5);
        for _ in 0..50 {
            let kp = client_keygen(&sp, &mut r);
            let idx: usize = kp.sk.clone().try_into().unwrap();
            assert!((1..11).contains(&idx));
            assert_eq!(kp.pk, table[idx]);
        }
        assert_eq!(
            client_keygen(&sp, &mut rng(9)),
            client_keygen(&sp, &mut rng(9))
        );
    }

    #[test]
    fn aggregated_key_is_product() {
        let (sp, _) = toy(2, 2);
        let p2 = sp.p_squared();
        let pk2 = pow_mod(&sp.g, &b(2), p2);
        let pk3 = pow_mod(&sp.g, &b(3), p2);
        assert_eq!(agg_pubkey([&pk2], &sp).unwrap(), pk2);
        assert_eq!(
            agg_pubkey([&pk2, &pk3], &sp).unwrap(),
            pow_mod(&sp.g, &b(5), p2)
        );
        assert_eq!(
            agg_pubkey([&pk3, &pk2], &sp).unwrap(),
            agg_pubkey([&pk2, &pk3], &sp).unwrap()
        );
        assert!(matches!(agg_pubkey([], &sp), Err(Error::Usage(_))));
    }

    #[test]
    fn symmetric_keys_agree_and_match_brute_force() {
        let (sp, secret) = toy(2, 3);
        let p2 = sp.p_squared();
        let alpha = &secret.alpha_vec[0];
        for sk in 1..11u64 {
            let pk = pow_mod(&sp.g, &b(sk), p2);
            let server = derive_symmetric_key_server(&pk, alpha, &sp);
            let client = derive_symmetric_key_client(&sp.beta_vec[0], &b(sk), &sp);
            assert_eq!(server, client);
            assert_eq!(server.bits(), 128);
            // g^{α·sk} by direct exponent product
            let shared = pow_mod(&sp.g, &(alpha * sk), p2);
            assert_eq!(server, hash_to_key(&shared, &sp));
        }
    }

    #[test]
    fn sealed_model_round_trip_and_tamper() {
        let (sp, _) = toy(2, 4);
        let key = derive_symmetric_key_client(&sp.beta_vec[0], &b(3), &sp);
        let mut r = rng(1);
        let sealed = seal_model(&key, b"", &mut r).unwrap();
        assert_eq!(open_model(&key, &sealed).unwrap(), Vec::<u8>::new());

        let blob: Vec<u8> = (0..1 << 20).map(|i| (i * 31 % 251) as u8).collect();
        let sealed = seal_model(&key, &blob, &mut r).unwrap();
        assert_eq!(open_model(&key, &sealed).unwrap(), blob);

        let mut bad = sealed.clone();
        bad.body[1000] ^= 0x10;
        assert_eq!(open_model(&key, &bad), Err(Error::Authentication));
        let other = derive_symmetric_key_client(&sp.beta_vec[0], &b(4), &sp);
        assert_eq!(open_model(&other, &sealed), Err(Error::Authentication));
    }

    #[test]
    fn zero_plaintext_is_pure_mask() {
        let (sp, _) = toy(4, 5);
        let p2 = sp.p_squared();
        let pk_s = pow_mod(&sp.g, &b(7), p2);
        let nonces = EncryptionNonces { r1: b(3), r2: b(4) };
        let ct = encrypt_with(
            &PackedGradient {
                segments: vec![b(0), b(0)],
            },
            &pk_s,
            &sp,
            &nonces,
        )
        .unwrap();
        for (e, beta) in ct.e1.iter().zip(&sp.beta_vec) {
            assert_eq!(*e, pow_mod(beta, &b(3), p2));
        }
        assert_eq!(ct.e2_first, pow_mod(&sp.g, &b(4), p2));
        assert_eq!(ct.e2_second, pow_mod(&sp.g, &b(3 + 7 * 4), p2));
    }

    #[test]
    fn challenge_and_response() {
        let (sp, _) = toy(2, 6);
        let p2 = sp.p_squared();
        let ga = pow_mod(&sp.g, &b(4), p2);
        let gb = pow_mod(&sp.g, &b(9), p2);
        let r = gen_challenge([&ga, &gb], &sp).unwrap();
        assert_eq!(r, pow_mod(&sp.g, &b(13), p2));
        assert_eq!(gen_challenge([&gb, &ga], &sp).unwrap(), r);
        assert!(matches!(
            gen_challenge([&ga], &sp),
            Err(Error::PrivacyGuard(_))
        ));

        assert_eq!(gen_response(&b(1), &b(6), &sp), b(1));
        assert_eq!(gen_response(&r, &b(6), &sp), pow_mod(&sp.g, &b(13 * 6), p2));
    }

    #[test]
    fn aggregate_multiplies_componentwise() {
        let (sp, _) = toy(2, 7);
        let p2 = sp.p_squared();
        let c1 = Ciphertext {
            e1: vec![b(2)],
            e2_first: b(3),
            e2_second: b(5),
        };
        let c2 = Ciphertext {
            e1: vec![b(300)],
            e2_first: b(7),
            e2_second: b(100),
        };
        let bundle = aggregate(&[c1.clone(), c2.clone()], &[b(11), b(50)], &sp).unwrap();
        assert_eq!(bundle.e_agg, vec![b(600 % 529)]);
        assert_eq!(bundle.d, b(500));
        assert_eq!(bundle.t, b(550 % 529));
        assert!(matches!(
            aggregate(&[c1, c2], &[b(1)], &sp),
            Err(Error::Protocol(_))
        ));
        let _ = p2;
    }

    /// Full toy run with every exponent tracked by hand.
    #[test]
    fn toy_two_client_decryption() {
        let (sp, secret) = toy(2, 8);
        let mut r = rng(10);
        let c1 = client_keygen(&sp, &mut r);
        let c2 = client_keygen(&sp, &mut r);
        let pk_s = agg_pubkey([&c1.pk, &c2.pk], &sp).unwrap();
        // a = (1, 3): x = (1, 1) → 4, y = (0, 1) → 3; sum 7 → (1, 2)
        let x = pack(&[1, 1], &sp.packing).unwrap();
        let y = pack(&[0, 1], &sp.packing).unwrap();
        assert_eq!(x.segments, vec![b(4)]);
        let n1 = EncryptionNonces { r1: b(2), r2: b(5) };
        let n2 = EncryptionNonces { r1: b(9), r2: b(1) };
        let ct1 = encrypt_with(&x, &pk_s, &sp, &n1).unwrap();
        let ct2 = encrypt_with(&y, &pk_s, &sp, &n2).unwrap();
        let challenge = gen_challenge([&ct1.e2_first, &ct2.e2_first], &sp).unwrap();
        let t1 = gen_response(&challenge, &c1.sk, &sp);
        let t2 = gen_response(&challenge, &c2.sk, &sp);
        let bundle = aggregate(&[ct1, ct2], &[t1, t2], &sp).unwrap();
        let p2 = sp.p_squared();
        // d / T = g^{r1 + r1'}
        let w = &bundle.d * inv_mod(&bundle.t, p2).unwrap() % p2;
        assert_eq!(w, pow_mod(&sp.g, &b(11), p2));
        assert_eq!(decrypt(&bundle, &secret, &sp).unwrap(), vec![b(7)]);
    }

    #[test]
    fn forged_bundle_fails_to_decrypt() {
        let (sp, secret) = toy(2, 9);
        let bundle = AggregateBundle {
            e_agg: vec![b(2)],
            d: b(1),
            t: b(1),
        };
        assert!(matches!(
            decrypt(&bundle, &secret, &sp),
            Err(Error::Decryption(_))
        ));
        let bundle = AggregateBundle {
            e_agg: vec![b(2)],
            d: b(1),
            t: b(23),
        };
        assert!(matches!(
            decrypt(&bundle, &secret, &sp),
            Err(Error::Arithmetic(_))
        ));
    }

    #[test]
    fn fresh_encryptions_differ() {
        let (sp, _) = crate::group::gen_system_params(64, 128, 2, 3, 7, 8, &mut rng(1)).unwrap();
        let mut r = rng(2);
        let kp = client_keygen(&sp, &mut r);
        let packed = pack(&[1; 8], &sp.packing).unwrap();
        let a = encrypt(&packed, &kp.pk, &sp, &mut r).unwrap();
        let b2 = encrypt(&packed, &kp.pk, &sp, &mut r).unwrap();
        assert_ne!(a.e2_first, b2.e2_first);
        assert_ne!(a.e2_second, b2.e2_second);
        assert!(a.e1.iter().zip(&b2.e1).all(|(x, y)| x != y));
    }

    #[test]
    fn collusion_oracle_recovers_pair_sum() {
        let (sp, secret) = toy(2, 11);
        let mut r = rng(12);
        let keys: Vec<KeyPair> = (0..2).map(|_| client_keygen(&sp, &mut r)).collect();
        let pk_s = agg_pubkey(keys.iter().map(|k| &k.pk), &sp).unwrap();
        let x = pack(&[1, 0], &sp.packing).unwrap();
        let y = pack(&[1, 1], &sp.packing).unwrap();
        let ct1 = encrypt(&x, &pk_s, &sp, &mut r).unwrap();
        let ct2 = encrypt(&y, &pk_s, &sp, &mut r).unwrap();
        let challenge = gen_challenge([&ct1.e2_first, &ct2.e2_first], &sp).unwrap();
        let t1 = gen_response(&challenge, &keys[0].sk, &sp);
        let t2 = gen_response(&challenge, &keys[1].sk, &sp);
        let view = CollusionView {
            victims: [(&ct1, &t1, &keys[0].pk), (&ct2, &t2, &keys[1].pk)],
            colluder_sk_sum: b(0),
            colluder_r2_sum: b(0),
        };
        assert_eq!(
            collusion_extract_pair(&view, &secret, &sp).unwrap(),
            vec![b(1 + 1 + 3)]
        );
    }

    #[test]
    fn key_file_round_trip() {
        let (sp, _) = toy(2, 13);
        let kp = client_keygen(&sp, &mut rng(3));
        let text = kp.to_json(&sp);
        assert_eq!(KeyPair::from_json(&text, &sp).unwrap(), kp);
        let (other, _) = toy(3, 13);
        assert!(KeyPair::from_json(&text, &other).is_err());
    }
}
