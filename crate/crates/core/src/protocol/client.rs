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

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::wire::{decode_frame, encode_frame, ClientId, Fingerprint, Message, Upload};
use super::{model_from_bytes, pk_fingerprint};
use crate::crypto::{
    derive_symmetric_key_client, encrypt, gen_response, open_model, KeyPair, SealedModel,
};
use crate::error::{AbortReason, Error, Result};
use crate::group::SysParams;
use crate::packing::{pack, quantize, QuantParams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainerError(pub String);

impl std::fmt::Display for TrainerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TrainerError {}

/// Local training on a client's private shard.
pub trait Trainer {
    /// Gradient to upload for this round, given the current global model.
    fn local_gradient(&mut self, model: &[f64], round_id: u64) -> Result<Vec<f64>, TrainerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientPhase {
    Idle,
    AnnouncedOnline,
    Training,
    Submitted,
    Responded,
    Done,
    /// The aggregated key equalled our own: we are alone and must not upload.
    AbortedSolo,
}

/// One client's view of the current round.
pub struct ClientSession {
    id: ClientId,
    keypair: KeyPair,
    phase: ClientPhase,
    round_id: u64,
    pk_s: Option<BigUint>,
    pk_s_fingerprint: Option<Fingerprint>,
    rng: ChaCha20Rng,
    last_encrypt: Duration,
}

impl ClientSession {
    /// `seed` drives this client's encryption randomness.
    pub fn new(id: ClientId, keypair: KeyPair, seed: u64) -> Self {
        ClientSession {
            id,
            keypair,
            phase: ClientPhase::Idle,
            round_id: 0,
            pk_s: None,
            pk_s_fingerprint: None,
            rng: ChaCha20Rng::seed_from_u64(seed),
            last_encrypt: Duration::ZERO,
        }
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    pub fn round_id(&self) -> u64 {
        self.round_id
    }

    pub fn public_key(&self) -> &BigUint {
        &self.keypair.pk
    }

    /// Wall-clock time of the most recent pack + encrypt.
    pub fn last_encrypt_time(&self) -> Duration {
        self.last_encrypt
    }

    pub fn register_frame(&self, params: &SysParams) -> Vec<u8> {
        encode_frame(
            0,
            &Message::RegisterPk {
                client: self.id,
                pk: self.keypair.pk.clone(),
            },
            params.element_len(),
        )
    }

    /// Start a round by announcing ourselves online.
    pub fn announce(&mut self, round_id: u64, params: &SysParams) -> Vec<u8> {
        self.round_id = round_id;
        self.phase = ClientPhase::AnnouncedOnline;
        self.pk_s = None;
        self.pk_s_fingerprint = None;
        encode_frame(
            round_id,
            &Message::OnlineAnnounce { client: self.id },
            params.element_len(),
        )
    }

    /// Dispatch an inbound server frame. Returns the reply frame, if any.
    ///
    /// Frames for another round are dropped without a reply.
    pub fn handle_frame(
        &mut self,
        bytes: &[u8],
        params: &SysParams,
        qp: &QuantParams,
        trainer: &mut dyn Trainer,
    ) -> Result<Option<Vec<u8>>> {
        let frame = decode_frame(bytes, params.element_len())?;
        if frame.round_id != self.round_id {
            return Ok(None);
        }
        match frame.message {
            Message::ModelAndKey {
                client,
                pk_s,
                pk_s_fingerprint,
                sealed,
            } => {
                if client != self.id || pk_s_fingerprint != pk_fingerprint(&pk_s, params) {
                    return Ok(None);
                }
                self.handle_model(&sealed, pk_s, params, qp, trainer)
            }
            Message::Challenge {
                pk_s_fingerprint,
                challenge,
            } => Ok(self.handle_challenge(frame.round_id, &pk_s_fingerprint, &challenge, params)),
            Message::RoundResult { .. } => {
                if self.phase == ClientPhase::Responded {
                    self.phase = ClientPhase::Done;
                }
                Ok(None)
            }
            Message::Abort { .. } => {
                if self.phase != ClientPhase::AbortedSolo {
                    self.phase = ClientPhase::Idle;
                }
                Ok(None)
            }
            other => Err(Error::Protocol(format!(
                "client received server-bound {}",
                other.msg_type().name()
            ))),
        }
    }

    /// Open the sealed model, train, and upload the encrypted gradient.
    ///
    /// When `pk_s` equals our own key we are the only online client; we stop
    /// without uploading anything.
    pub fn handle_model(
        &mut self,
        sealed: &SealedModel,
        pk_s: BigUint,
        params: &SysParams,
        qp: &QuantParams,
        trainer: &mut dyn Trainer,
    ) -> Result<Option<Vec<u8>>> {
        if self.phase != ClientPhase::AnnouncedOnline {
            return Err(Error::Protocol(format!(
                "model received in phase {:?}",
                self.phase
            )));
        }
        if pk_s == self.keypair.pk {
            self.phase = ClientPhase::AbortedSolo;
            return Ok(None);
        }
        let width = params.element_len();
        let key = derive_symmetric_key_client(&params.beta_vec[0], &self.keypair.sk, params);
        let model = match open_model(&key, sealed).and_then(|b| model_from_bytes(&b)) {
            Ok(m) => m,
            Err(_) => {
                self.phase = ClientPhase::Idle;
                let abort = Message::Abort {
                    reason: AbortReason::CorruptServerMessage,
                };
                return Ok(Some(encode_frame(self.round_id, &abort, width)));
            }
        };
        self.phase = ClientPhase::Training;
        let grad = match trainer.local_gradient(&model, self.round_id) {
            Ok(g) => g,
            Err(_) => {
                // behaves like a mid-round dropout
                self.phase = ClientPhase::Idle;
                return Ok(None);
            }
        };
        if grad.len() != params.packing.n {
            self.phase = ClientPhase::Idle;
            return Err(Error::Range(format!(
                "trainer returned {} entries, expected {}",
                grad.len(),
                params.packing.n
            )));
        }
        let started = Instant::now();
        let packed = pack(&quantize(&grad, qp), &params.packing)?;
        let ct = encrypt(&packed, &pk_s, params, &mut self.rng)?;
        self.last_encrypt = started.elapsed();

        let fp = pk_fingerprint(&pk_s, params);
        self.pk_s = Some(pk_s);
        self.pk_s_fingerprint = Some(fp);
        self.phase = ClientPhase::Submitted;
        let msg = Message::GradientCiphertext {
            client: self.id,
            pk_s_fingerprint: fp,
            upload: Upload::Packed(ct),
        };
        Ok(Some(encode_frame(self.round_id, &msg, width)))
    }

    /// Answer the challenge with `R^{sk_i}`. Repeated delivery yields the same
    /// response; a challenge for another round or key yields nothing.
    pub fn handle_challenge(
        &mut self,
        round_id: u64,
        pk_s_fingerprint: &Fingerprint,
        challenge: &BigUint,
        params: &SysParams,
    ) -> Option<Vec<u8>> {
        if round_id != self.round_id
            || !matches!(self.phase, ClientPhase::Submitted | ClientPhase::Responded)
            || self.pk_s_fingerprint.as_ref() != Some(pk_s_fingerprint)
        {
            return None;
        }
        let response = gen_response(challenge, &self.keypair.sk, params);
        self.phase = ClientPhase::Responded;
        let msg = Message::Response {
            client: self.id,
            pk_s_fingerprint: *pk_s_fingerprint,
            response,
        };
        Some(encode_frame(self.round_id, &msg, params.element_len()))
    }
}
