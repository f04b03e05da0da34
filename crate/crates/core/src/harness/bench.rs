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

//! Upload size and timing measurements across segment counts.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::crypto::{
    aggregate, client_keygen, decrypt, encrypt, gen_challenge, gen_response, KeyPair,
};
use crate::error::{Error, Result};
use crate::group::{find_group_primes, SysParams};
use crate::packing::{build_packing, pack, recover, PackedGradient};
use crate::protocol::wire::{encode_frame, Message, Upload};

use super::baseline::baseline_encrypt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UploadSizes {
    pub packed_elements: usize,
    pub packed_bytes: usize,
    pub baseline_elements: usize,
    pub baseline_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub dims: usize,
    pub segments: usize,
    pub k: usize,
    pub packed_elements: usize,
    pub packed_bytes: usize,
    pub baseline_elements: usize,
    pub baseline_bytes: usize,
    pub byte_ratio: f64,
    /// `(u + 2) / 2u`.
    pub expected_ratio: f64,
    pub encrypt_ms: f64,
    pub decrypt_ms: f64,
}

impl ScalingRow {
    pub const CSV_HEADER: [&'static str; 11] = [
        "dims",
        "segments",
        "k",
        "packed_elements",
        "packed_bytes",
        "baseline_elements",
        "baseline_bytes",
        "byte_ratio",
        "expected_ratio",
        "encrypt_ms",
        "decrypt_ms",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.dims.to_string(),
            self.segments.to_string(),
            self.k.to_string(),
            self.packed_elements.to_string(),
            self.packed_bytes.to_string(),
            self.baseline_elements.to_string(),
            self.baseline_bytes.to_string(),
            format!("{:.6}", self.byte_ratio),
            format!("{:.6}", self.expected_ratio),
            format!("{:.3}", self.encrypt_ms),
            format!("{:.3}", self.decrypt_ms),
        ]
    }
}

fn random_packed<R: Rng + ?Sized>(params: &SysParams, rng: &mut R) -> Result<PackedGradient> {
    let q: Vec<u64> = (0..params.packing.n)
        .map(|_| rng.gen_range(0..=params.grad_max))
        .collect();
    pack(&q, &params.packing)
}

/// Encoded sizes of one packed upload and of the per-segment ElGamal upload
/// carrying the same segments.
pub fn packed_and_baseline_uploads(params: &SysParams, seed: u64) -> Result<UploadSizes> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pk_s = client_keygen(params, &mut rng).pk;
    let packed = random_packed(params, &mut rng)?;
    let ct = encrypt(&packed, &pk_s, params, &mut rng)?;
    let pairs = baseline_encrypt(&packed.segments, &pk_s, params, &mut rng);
    let frame = |upload: Upload| {
        encode_frame(
            1,
            &Message::GradientCiphertext {
                client: 0,
                pk_s_fingerprint: [0; 16],
                upload,
            },
            params.element_len(),
        )
        .len()
    };
    let packed_upload = Upload::Packed(ct);
    let baseline_upload = Upload::PerSegment(pairs);
    Ok(UploadSizes {
        packed_elements: packed_upload.element_count(),
        baseline_elements: baseline_upload.element_count(),
        packed_bytes: frame(packed_upload),
        baseline_bytes: frame(baseline_upload),
    })
}

/// Slots per segment for a prime `p`.
pub fn slots_per_segment(p: &num_bigint::BigUint, n_clients: u64, grad_max: u64) -> Result<usize> {
    Ok(build_packing(p, 1 << 20, n_clients, grad_max)?.k)
}

/// Rows are requested either by gradient dimension or by segment count `u`
/// (then `dims = u·k`).
#[derive(Debug, Clone, PartialEq)]
pub enum ScalingSizes {
    Dims(Vec<usize>),
    Segments(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub kappa1: u64,
    pub kappa2: u64,
    pub n_clients: u64,
    pub grad_max: u64,
    pub sizes: ScalingSizes,
    /// Timing repetitions per row; the median is reported.
    pub reps: usize,
    pub seed: u64,
}

/// One row per requested size. The group is generated once and reused.
pub fn bench_scaling(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.reps == 0 {
        return Err(Error::Usage("reps must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let (p, q) = find_group_primes(cfg.kappa1, 2, &mut rng)?;
    let k = slots_per_segment(&p, cfg.n_clients, cfg.grad_max)?;
    let mut rows = Vec::new();
    let dims_list: Vec<usize> = match &cfg.sizes {
        ScalingSizes::Dims(d) => d.clone(),
        ScalingSizes::Segments(us) => us.iter().map(|u| u * k).collect(),
    };
    for dims in dims_list {
        if dims == 0 {
            return Err(Error::Usage("sizes must be positive".into()));
        }
        let (params, secret) = SysParams::from_primes(
            p.clone(),
            q.clone(),
            2,
            cfg.kappa2,
            cfg.n_clients,
            cfg.grad_max,
            dims,
            &mut rng,
        )?;
        let sizes = packed_and_baseline_uploads(&params, rng.gen())?;

        let keys: Vec<KeyPair> = (0..2).map(|_| client_keygen(&params, &mut rng)).collect();
        let pk_s = keys[0].pk.clone() * &keys[1].pk % params.p_squared();
        let mut enc = Vec::with_capacity(cfg.reps);
        let mut dec = Vec::with_capacity(cfg.reps);
        for _ in 0..cfg.reps {
            let grads = [
                random_packed(&params, &mut rng)?,
                random_packed(&params, &mut rng)?,
            ];
            let started = Instant::now();
            let c0 = encrypt(&grads[0], &pk_s, &params, &mut rng)?;
            enc.push(started.elapsed());
            let c1 = encrypt(&grads[1], &pk_s, &params, &mut rng)?;
            let challenge = gen_challenge([&c0.e2_first, &c1.e2_first], &params)?;
            let responses: Vec<_> = keys
                .iter()
                .map(|kp| gen_response(&challenge, &kp.sk, &params))
                .collect();
            let started = Instant::now();
            let bundle = aggregate(&[c0, c1], &responses, &params)?;
            let segments = decrypt(&bundle, &secret, &params)?;
            recover(&segments, &params.packing)?;
            dec.push(started.elapsed());
        }
        rows.push(ScalingRow {
            dims,
            segments: params.segments(),
            k,
            packed_elements: sizes.packed_elements,
            packed_bytes: sizes.packed_bytes,
            baseline_elements: sizes.baseline_elements,
            baseline_bytes: sizes.baseline_bytes,
            byte_ratio: sizes.packed_bytes as f64 / sizes.baseline_bytes as f64,
            expected_ratio: (params.segments() as f64 + 2.0) / (2.0 * params.segments() as f64),
            encrypt_ms: median_ms(&mut enc),
            decrypt_ms: median_ms(&mut dec),
        });
    }
    Ok(rows)
}

fn median_ms(samples: &mut [Duration]) -> f64 {
    samples.sort();
    samples[samples.len() / 2].as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_follow_segment_counts() {
        let cfg = ScalingConfig {
            kappa1: 64,
            kappa2: 128,
            n_clients: 4,
            grad_max: 7,
            sizes: ScalingSizes::Segments(vec![1, 3]),
            reps: 1,
            seed: 9,
        };
        let rows = bench_scaling(&cfg).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.segments).collect::<Vec<_>>(),
            vec![1, 3]
        );
        for r in &rows {
            assert_eq!(r.packed_elements, r.segments + 2);
            assert_eq!(r.baseline_elements, 2 * r.segments);
        }
    }
}
