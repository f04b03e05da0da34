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

//! Multi-private-key secure aggregation for federated learning.
//!
//! Clients pack quantized gradients with a super-increasing vector, encrypt
//! them under an aggregate of their own self-chosen public keys, and the
//! server, holding its own secret exponents, can decrypt only the sum over
//! the online set. Any online set of two or more clients completes a round.
//!
//! * [`group`]: parameter generation and modular arithmetic in `Z*_{p²}`
//! * [`packing`]: quantization, packing, and recovery of per-dimension sums
//! * [`crypto`]: keys, encryption, challenge/response, aggregation, decryption
//! * [`protocol`]: wire format and the server/client round state machines
//! * [`harness`]: deterministic simulator, toy task, baseline and benchmarks

pub mod crypto;
pub mod error;
pub mod group;
pub mod harness;
pub mod packing;
pub mod protocol;

pub use crypto::{
    agg_pubkey, aggregate, client_keygen, decrypt, encrypt, gen_challenge, gen_response,
    AggregateBundle, Ciphertext, KeyPair, SealedModel,
};
pub use error::{AbortReason, Error, Result};
pub use group::{gen_system_params, ServerSecret, SysParams};
pub use packing::{pack, quantize, recover, PackedGradient, PackingParams, QuantParams};
