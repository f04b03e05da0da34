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

//! Round state machines for the server and clients, plus the wire format
//! they speak.
//!
//! A round runs in four exchanges:
//!
//! 1. clients announce they are online; the server fixes the online set `S`
//! 2. the server sends each member its sealed model and the aggregated key
//!    `pk_S`; members train, pack, encrypt and upload
//! 3. the server broadcasts the challenge `R`; members answer with `R^{sk_i}`
//! 4. the server aggregates, decrypts, recovers and applies the update
//!
//! Any member going silent after `S` is fixed aborts the round; the next
//! round polls the online set again.

pub mod client;
pub mod federation;
pub mod server;
pub mod transcript;
pub mod wire;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::group::{to_fixed_bytes, SysParams};
use num_bigint::BigUint;

pub use client::{ClientPhase, ClientSession, Trainer, TrainerError};
pub use federation::{
    run_federation, Endpoint, FederationOutcome, InMemoryTransport, TrafficStats, Transport,
};
pub use server::{ServerPhase, ServerRound};
pub use transcript::{verify_transcript, RoundStatus, RoundTranscript};
pub use wire::{ClientId, Fingerprint, Message, MsgType, FINGERPRINT_LEN};

/// Minimum online-set size; a single client would expose its own gradient.
pub const MIN_ONLINE: usize = 2;

pub const DEFAULT_LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub round_id: u64,
    /// Learning rate η.
    pub eta: f64,
    /// Per-phase deadline for network transports. The in-memory transport
    /// treats a drained queue as the deadline.
    pub timeout_ms: u64,
}

impl RoundConfig {
    pub fn new(round_id: u64, eta: f64) -> Self {
        RoundConfig {
            round_id,
            eta,
            timeout_ms: 5_000,
        }
    }

    pub fn min_online(&self) -> usize {
        MIN_ONLINE
    }
}

/// SHA-256 of `pk_S` at the fixed element width. Carried by every message
/// that depends on the round's key so that stale traffic can be dropped.
pub fn pk_fingerprint(pk_s: &BigUint, params: &SysParams) -> Fingerprint {
    let digest = Sha256::digest(to_fixed_bytes(pk_s, params.element_len()));
    let mut fp = [0u8; wire::FINGERPRINT_LEN];
    fp.copy_from_slice(&digest[..wire::FINGERPRINT_LEN]);
    fp
}

pub fn model_to_bytes(model: &[f64]) -> Vec<u8> {
    model.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Wire(format!("model blob of {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
