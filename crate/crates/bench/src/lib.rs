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

//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secagg_core::crypto::{client_keygen, encrypt, Ciphertext, KeyPair};
use secagg_core::{gen_system_params, pack, PackedGradient, QuantParams, ServerSecret, SysParams};

pub const BENCH_KAPPA1: u64 = 512;
pub const BENCH_CLIENTS: u64 = 10;

pub struct Fixture {
    pub params: SysParams,
    pub secret: ServerSecret,
    pub keys: Vec<KeyPair>,
    pub quantized: Vec<Vec<u64>>,
    pub packed: Vec<PackedGradient>,
    pub ciphertexts: Vec<Ciphertext>,
}

/// A `dims`-dimensional setup with `clients` uploads already encrypted.
pub fn fixture(dims: usize, clients: usize, seed: u64) -> Fixture {
    let qp = QuantParams::new(16, 4.0).expect("quant params");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (params, secret) = gen_system_params(
        BENCH_KAPPA1,
        128,
        2,
        BENCH_CLIENTS,
        qp.grad_max(),
        dims,
        &mut rng,
    )
    .expect("params");
    let keys: Vec<KeyPair> = (0..clients)
        .map(|_| client_keygen(&params, &mut rng))
        .collect();
    let quantized: Vec<Vec<u64>> = (0..clients)
        .map(|_| {
            (0..dims)
                .map(|_| rng.gen_range(0..=params.grad_max))
                .collect()
        })
        .collect();
    let packed: Vec<PackedGradient> = quantized
        .iter()
        .map(|q| pack(q, &params.packing).expect("pack"))
        .collect();
    let pk_s = secagg_core::crypto::agg_pubkey(keys.iter().map(|k| &k.pk), &params).expect("pk_S");
    let ciphertexts = packed
        .iter()
        .map(|p| encrypt(p, &pk_s, &params, &mut rng).expect("encrypt"))
        .collect();
    Fixture {
        params,
        secret,
        keys,
        quantized,
        packed,
        ciphertexts,
    }
}
