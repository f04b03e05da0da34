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

//! Per-dimension exponential ElGamal, the unpacked reference point.
//!
//! Each coordinate travels as its own pair `(g^r, g^m·pk_S^r)`. Decryption
//! goes through the same challenge/response step as the packed scheme, one
//! challenge per coordinate, and ends in a discrete log that is only
//! tractable for small sums.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::One;
use rand::{CryptoRng, RngCore};

use crate::crypto::{agg_pubkey, KeyPair};
use crate::error::{Error, Result};
use crate::group::{inv_mod, pow_mod, random_exponent, SysParams};
use crate::protocol::wire::{encode_frame, Message, Upload};

/// Largest discrete-log table the baseline will build.
pub const DLOG_TABLE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineOutcome {
    pub sums: Vec<u64>,
    pub elements_per_upload: usize,
    pub bytes_per_upload: usize,
}

/// Encrypt each value separately under `pk_S`.
pub fn baseline_encrypt<R: RngCore + CryptoRng + ?Sized>(
    values: &[BigUint],
    pk_s: &BigUint,
    params: &SysParams,
    rng: &mut R,
) -> Vec<(BigUint, BigUint)> {
    let p2 = params.p_squared();
    values
        .iter()
        .map(|m| {
            let r = random_exponent(&params.q, rng);
            let c1 = pow_mod(&params.g, &r, p2);
            let c2 = pow_mod(&params.g, m, p2) * pow_mod(pk_s, &r, p2) % p2;
            (c1, c2)
        })
        .collect()
}

/// Run one aggregation round of the baseline over quantized gradients.
///
/// Fails with `BaselineScope` when the largest possible sum does not fit the
/// discrete-log table.
pub fn run_baseline_per_dimension<R: RngCore + CryptoRng + ?Sized>(
    params: &SysParams,
    participants: &[(&KeyPair, &[u64])],
    rng: &mut R,
) -> Result<BaselineOutcome> {
    if participants.len() < 2 {
        return Err(Error::PrivacyGuard(
            "aggregation needs at least two clients".into(),
        ));
    }
    let n = participants[0].1.len();
    if participants.iter().any(|(_, g)| g.len() != n) {
        return Err(Error::Usage("gradients differ in length".into()));
    }
    let bound = params.grad_max.saturating_mul(participants.len() as u64);
    let limit = table_limit(params);
    if bound >= limit {
        return Err(Error::BaselineScope(format!(
            "sums up to {bound} exceed the discrete-log table limit {limit}"
        )));
    }
    if let Some(v) = participants
        .iter()
        .flat_map(|(_, g)| g.iter())
        .find(|&&v| v > params.grad_max)
    {
        return Err(Error::Range(format!(
            "entry {v} exceeds grad_max {}",
            params.grad_max
        )));
    }

    let p2 = params.p_squared();
    let pk_s = agg_pubkey(participants.iter().map(|(kp, _)| &kp.pk), params)?;
    let uploads: Vec<Vec<(BigUint, BigUint)>> = participants
        .iter()
        .map(|(_, g)| {
            let values: Vec<BigUint> = g.iter().map(|&v| BigUint::from(v)).collect();
            baseline_encrypt(&values, &pk_s, params, rng)
        })
        .collect();
    let bytes_per_upload = encode_frame(
        0,
        &Message::GradientCiphertext {
            client: 0,
            pk_s_fingerprint: [0; 16],
            upload: Upload::PerSegment(uploads[0].clone()),
        },
        params.element_len(),
    )
    .len();

    let table = dlog_table(params, bound);
    let sums = (0..n)
        .map(|j| {
            let challenge = product(uploads.iter().map(|u| &u[j].0), p2);
            let responses = product(
                participants
                    .iter()
                    .map(|(kp, _)| pow_mod(&challenge, &kp.sk, p2))
                    .collect::<Vec<_>>()
                    .iter(),
                p2,
            );
            let d = product(uploads.iter().map(|u| &u[j].1), p2);
            let g_m = d * inv_mod(&responses, p2)? % p2;
            table.get(&g_m).copied().ok_or_else(|| {
                Error::Decryption(format!("coordinate {j} has no discrete log in range"))
            })
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(BaselineOutcome {
        sums,
        elements_per_upload: 2 * n,
        bytes_per_upload,
    })
}

fn table_limit(params: &SysParams) -> u64 {
    let q = u64::try_from(&params.q).unwrap_or(u64::MAX);
    q.min(DLOG_TABLE_LIMIT)
}

fn dlog_table(params: &SysParams, bound: u64) -> HashMap<BigUint, u64> {
    let p2 = params.p_squared();
    let mut table = HashMap::with_capacity(bound as usize + 1);
    let mut acc = BigUint::one();
    for m in 0..=bound {
        table.insert(acc.clone(), m);
        acc = acc * &params.g % p2;
    }
    table
}

fn product<'a>(items: impl IntoIterator<Item = &'a BigUint>, modulus: &BigUint) -> BigUint {
    items
        .into_iter()
        .fold(BigUint::one(), |acc, x| acc * x % modulus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::client_keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy(n_clients: u64, grad_max: u64, dims: usize) -> SysParams {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (p, q) = crate::group::find_group_primes(24, 2, &mut rng).unwrap();
        SysParams::from_primes(p, q, 2, 128, n_clients, grad_max, dims, &mut rng)
            .unwrap()
            .0
    }

    #[test]
    fn sums_match_plaintext() {
        let params = toy(4, 5, 6);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let keys: Vec<KeyPair> = (0..3).map(|_| client_keygen(&params, &mut rng)).collect();
        let grads = [
            vec![0, 1, 2, 3, 4, 5],
            vec![5, 5, 5, 0, 0, 0],
            vec![1, 0, 1, 0, 1, 0],
        ];
        let parts: Vec<(&KeyPair, &[u64])> = keys
            .iter()
            .zip(&grads)
            .map(|(k, g)| (k, g.as_slice()))
            .collect();
        let out = run_baseline_per_dimension(&params, &parts, &mut rng).unwrap();
        assert_eq!(out.sums, vec![6, 6, 8, 3, 5, 5]);
        assert_eq!(out.elements_per_upload, 12);
    }

    #[test]
    fn refuses_sums_beyond_table() {
        let mut params = toy(4, 5, 2);
        params.grad_max = DLOG_TABLE_LIMIT;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let keys: Vec<KeyPair> = (0..2).map(|_| client_keygen(&params, &mut rng)).collect();
        let g = [0u64, 0];
        let parts: Vec<(&KeyPair, &[u64])> = keys.iter().map(|k| (k, &g[..])).collect();
        assert!(matches!(
            run_baseline_per_dimension(&params, &parts, &mut rng),
            Err(Error::BaselineScope(_))
        ));
    }
}
