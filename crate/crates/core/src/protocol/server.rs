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

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::transcript::{HexInt, ResponseRecord, RoundStatus, RoundTranscript};
use super::wire::{decode_frame, encode_frame, frame_type, ClientId, Fingerprint, Message, Upload};
use super::{pk_fingerprint, RoundConfig, MIN_ONLINE};
use crate::crypto::{
    agg_pubkey, aggregate, decrypt, derive_symmetric_key_server, gen_challenge, seal_model,
    Ciphertext,
};
use crate::error::{AbortReason, Error, Result};
use crate::group::{ServerSecret, SysParams};
use crate::packing::{dequantize_sum, recover, QuantParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ServerPhase {
    CollectOnline,
    AwaitCiphertexts,
    AwaitResponses,
    Complete,
    Aborted,
}

/// What happened to an inbound frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    Accepted,
    /// Valid frame that does not belong here (stale round, foreign key,
    /// non-member, wrong phase or duplicate). Silently ignored.
    Dropped(&'static str),
    /// A member reported that it could not continue; the round is aborted.
    AbortRequested(AbortReason),
}

/// Outbound frame addressed to one client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub to: ClientId,
    pub frame: Vec<u8>,
}

/// Crypto timings for the round, measured on the server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServerTimings {
    pub aggregate: Duration,
    pub decrypt: Duration,
    pub recover: Duration,
}

/// Server side of one round.
pub struct ServerRound {
    cfg: RoundConfig,
    phase: ServerPhase,
    registered: BTreeMap<ClientId, BigUint>,
    online: BTreeSet<ClientId>,
    pk_s: Option<BigUint>,
    pk_s_fingerprint: Option<Fingerprint>,
    ciphertexts: BTreeMap<ClientId, (Ciphertext, [u8; 32])>,
    responses: BTreeMap<ClientId, BigUint>,
    challenge: Option<BigUint>,
    transcript: RoundTranscript,
    timings: ServerTimings,
}

impl ServerRound {
    /// Open a round and start collecting online announcements.
    pub fn begin(cfg: RoundConfig, registered: &BTreeMap<ClientId, BigUint>) -> Result<Self> {
        if registered.len() < MIN_ONLINE {
            return Err(Error::Usage(format!(
                "{} registered client(s); at least {MIN_ONLINE} are required",
                registered.len()
            )));
        }
        Ok(ServerRound {
            transcript: RoundTranscript::empty(cfg.round_id),
            cfg,
            phase: ServerPhase::CollectOnline,
            registered: registered.clone(),
            online: BTreeSet::new(),
            pk_s: None,
            pk_s_fingerprint: None,
            ciphertexts: BTreeMap::new(),
            responses: BTreeMap::new(),
            challenge: None,
            timings: ServerTimings::default(),
        })
    }

    pub fn round_id(&self) -> u64 {
        self.cfg.round_id
    }

    pub fn phase(&self) -> ServerPhase {
        self.phase
    }

    pub fn online_set(&self) -> &BTreeSet<ClientId> {
        &self.online
    }

    pub fn pk_s(&self) -> Option<&BigUint> {
        self.pk_s.as_ref()
    }

    pub fn timings(&self) -> ServerTimings {
        self.timings
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        match self.transcript.status {
            RoundStatus::Aborted(r) if self.phase == ServerPhase::Aborted => Some(r),
            _ => None,
        }
    }

    fn count_bytes(&mut self, frame: &[u8]) {
        if let Some(ty) = frame_type(frame) {
            *self
                .transcript
                .bytes_by_type
                .entry(ty.name().to_string())
                .or_default() += frame.len() as u64;
        }
    }

    fn outbound(&mut self, to: ClientId, msg: &Message, params: &SysParams) -> Outbound {
        let frame = encode_frame(self.cfg.round_id, msg, params.element_len());
        self.count_bytes(&frame);
        Outbound { to, frame }
    }

    /// Process one inbound frame from `from`.
    pub fn handle_frame(
        &mut self,
        from: ClientId,
        bytes: &[u8],
        params: &SysParams,
    ) -> Result<Disposition> {
        let frame = decode_frame(bytes, params.element_len())?;
        if frame.round_id != self.cfg.round_id {
            return Ok(Disposition::Dropped("stale round"));
        }
        self.count_bytes(bytes);
        match frame.message {
            Message::OnlineAnnounce { client } => {
                if client != from || !self.registered.contains_key(&client) {
                    return Ok(Disposition::Dropped("unregistered client"));
                }
                if self.phase != ServerPhase::CollectOnline {
                    return Ok(Disposition::Dropped("online set already fixed"));
                }
                self.online.insert(client);
                Ok(Disposition::Accepted)
            }
            Message::GradientCiphertext {
                client,
                pk_s_fingerprint,
                upload,
            } => {
                if let Some(reason) = self.check_member(client, from, &pk_s_fingerprint) {
                    return Ok(Disposition::Dropped(reason));
                }
                if self.phase != ServerPhase::AwaitCiphertexts {
                    return Ok(Disposition::Dropped("not accepting ciphertexts"));
                }
                if self.ciphertexts.contains_key(&client) {
                    return Ok(Disposition::Dropped("duplicate ciphertext"));
                }
                let ct = match upload {
                    Upload::Packed(ct) if ct.e1.len() == params.segments() => ct,
                    _ => return Ok(Disposition::Dropped("malformed ciphertext")),
                };
                let digest: [u8; 32] = Sha256::digest(bytes).into();
                self.ciphertexts.insert(client, (ct, digest));
                Ok(Disposition::Accepted)
            }
            Message::Response {
                client,
                pk_s_fingerprint,
                response,
            } => {
                if let Some(reason) = self.check_member(client, from, &pk_s_fingerprint) {
                    return Ok(Disposition::Dropped(reason));
                }
                if self.phase != ServerPhase::AwaitResponses {
                    return Ok(Disposition::Dropped("not accepting responses"));
                }
                if self.responses.contains_key(&client) {
                    return Ok(Disposition::Dropped("duplicate response"));
                }
                self.responses.insert(client, response);
                Ok(Disposition::Accepted)
            }
            Message::Abort { reason } => {
                if !self.online.contains(&from)
                    || !matches!(
                        self.phase,
                        ServerPhase::AwaitCiphertexts | ServerPhase::AwaitResponses
                    )
                {
                    return Ok(Disposition::Dropped("abort from non-member"));
                }
                self.abort(reason);
                Ok(Disposition::AbortRequested(reason))
            }
            other => Err(Error::Protocol(format!(
                "server received client-bound {}",
                other.msg_type().name()
            ))),
        }
    }

    fn check_member(
        &self,
        client: ClientId,
        from: ClientId,
        fp: &Fingerprint,
    ) -> Option<&'static str> {
        if client != from || !self.online.contains(&client) {
            Some("not in online set")
        } else if self.pk_s_fingerprint.as_ref() != Some(fp) {
            Some("pk_S fingerprint mismatch")
        } else {
            None
        }
    }

    fn abort(&mut self, reason: AbortReason) {
        self.phase = ServerPhase::Aborted;
        self.transcript.status = RoundStatus::Aborted(reason);
        self.ciphertexts.clear();
        self.responses.clear();
        self.transcript.ciphertexts.clear();
        self.transcript.responses.clear();
        self.transcript.bundle = None;
        self.transcript.decrypted_segments.clear();
        self.transcript.recovered_sums.clear();
    }

    /// Abort frames for every member of the online set.
    pub fn abort_messages(&mut self, params: &SysParams) -> Vec<Outbound> {
        let reason = self.abort_reason().unwrap_or(AbortReason::MidRoundDropout);
        let members: Vec<ClientId> = self.online.iter().copied().collect();
        members
            .into_iter()
            .map(|c| self.outbound(c, &Message::Abort { reason }, params))
            .collect()
    }

    /// Fix the online set at the collection deadline, then seal the model for
    /// each member and send it together with `pk_S`.
    pub fn close_online<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        params: &SysParams,
        secret: &ServerSecret,
        model_bytes: &[u8],
        rng: &mut R,
    ) -> Result<Vec<Outbound>> {
        if self.phase != ServerPhase::CollectOnline {
            return Err(Error::Protocol(format!(
                "close_online in phase {:?}",
                self.phase
            )));
        }
        self.transcript.online_set = self.online.iter().copied().collect();
        if self.online.len() < MIN_ONLINE {
            self.abort(AbortReason::DropoutBelowThreshold);
            return Err(Error::Aborted(AbortReason::DropoutBelowThreshold));
        }
        let pks: Vec<BigUint> = self
            .online
            .iter()
            .map(|c| self.registered[c].clone())
            .collect();
        let pk_s = agg_pubkey(&pks, params)?;
        let fp = pk_fingerprint(&pk_s, params);
        self.transcript.public_keys = pks.iter().cloned().map(HexInt).collect();
        self.transcript.pk_s = Some(HexInt(pk_s.clone()));

        let mut out = Vec::with_capacity(pks.len());
        let members: Vec<ClientId> = self.online.iter().copied().collect();
        for (client, pk) in members.into_iter().zip(&pks) {
            let key = derive_symmetric_key_server(pk, &secret.alpha_vec[0], params);
            let sealed = seal_model(&key, model_bytes, rng)?;
            let msg = Message::ModelAndKey {
                client,
                pk_s: pk_s.clone(),
                pk_s_fingerprint: fp,
                sealed,
            };
            out.push(self.outbound(client, &msg, params));
        }
        self.pk_s = Some(pk_s);
        self.pk_s_fingerprint = Some(fp);
        self.phase = ServerPhase::AwaitCiphertexts;
        Ok(out)
    }

    /// Called once every member has uploaded, or at the deadline. A missing
    /// upload aborts the round.
    pub fn issue_challenge(&mut self, params: &SysParams) -> Result<Vec<Outbound>> {
        if self.phase != ServerPhase::AwaitCiphertexts {
            return Err(Error::Protocol(format!(
                "issue_challenge in phase {:?}",
                self.phase
            )));
        }
        if self.ciphertexts.len() != self.online.len() {
            self.abort(AbortReason::MidRoundDropout);
            return Err(Error::Aborted(AbortReason::MidRoundDropout));
        }
        let challenge = gen_challenge(self.ciphertexts.values().map(|(c, _)| &c.e2_first), params)?;
        let fp = self.pk_s_fingerprint.expect("set in close_online");
        for (client, (ct, digest)) in &self.ciphertexts {
            self.transcript.record_ciphertext(*client, *digest, ct);
        }
        self.transcript.challenge = Some(HexInt(challenge.clone()));
        let members: Vec<ClientId> = self.online.iter().copied().collect();
        let out = members
            .into_iter()
            .map(|c| {
                let msg = Message::Challenge {
                    pk_s_fingerprint: fp,
                    challenge: challenge.clone(),
                };
                self.outbound(c, &msg, params)
            })
            .collect();
        self.challenge = Some(challenge);
        self.phase = ServerPhase::AwaitResponses;
        Ok(out)
    }

    pub fn all_uploaded(&self) -> bool {
        self.ciphertexts.len() == self.online.len()
    }

    pub fn all_responded(&self) -> bool {
        self.responses.len() == self.online.len()
    }

    /// Aggregate, decrypt, recover and apply `W ← W − η·mean`.
    ///
    /// Returns the updated model and the completed transcript. On any
    /// failure the round is aborted and the caller keeps its model.
    pub fn finalize(
        &mut self,
        params: &SysParams,
        secret: &ServerSecret,
        qp: &QuantParams,
        model: &[f64],
    ) -> Result<(Vec<f64>, Vec<u64>)> {
        if self.phase != ServerPhase::AwaitResponses {
            return Err(Error::Protocol(format!(
                "finalize in phase {:?}",
                self.phase
            )));
        }
        if !self.all_responded() {
            self.abort(AbortReason::MidRoundDropout);
            return Err(Error::Aborted(AbortReason::MidRoundDropout));
        }
        match self.try_finalize(params, secret, qp, model) {
            Ok(out) => {
                self.phase = ServerPhase::Complete;
                self.transcript.status = RoundStatus::Completed;
                Ok(out)
            }
            Err(e) => {
                self.abort(AbortReason::IntegrityFailure);
                Err(e)
            }
        }
    }

    fn try_finalize(
        &mut self,
        params: &SysParams,
        secret: &ServerSecret,
        qp: &QuantParams,
        model: &[f64],
    ) -> Result<(Vec<f64>, Vec<u64>)> {
        if model.len() != params.packing.n {
            return Err(Error::Range(format!(
                "model has {} weights, parameters expect {}",
                model.len(),
                params.packing.n
            )));
        }
        let cts: Vec<Ciphertext> = self.ciphertexts.values().map(|(c, _)| c.clone()).collect();
        let responses: Vec<BigUint> = self.responses.values().cloned().collect();
        for (client, t) in &self.responses {
            self.transcript.responses.push(ResponseRecord {
                client: *client,
                t: HexInt(t.clone()),
            });
        }

        let started = Instant::now();
        let bundle = aggregate(&cts, &responses, params)?;
        self.timings.aggregate = started.elapsed();
        self.transcript.record_bundle(&bundle);

        let started = Instant::now();
        let segments = decrypt(&bundle, secret, params)?;
        self.timings.decrypt = started.elapsed();
        self.transcript.record_decrypted(&segments);

        let started = Instant::now();
        let sums = recover(&segments, &params.packing)?;
        self.timings.recover = started.elapsed();
        self.transcript.recovered_sums = sums.clone();

        let participants = self.online.len();
        let total = dequantize_sum(&sums, qp, participants)?;
        let scale = self.cfg.eta / participants as f64;
        let updated = model
            .iter()
            .zip(&total)
            .map(|(w, g)| w - scale * g)
            .collect();
        Ok((updated, sums))
    }

    /// Acknowledge completion to every member.
    pub fn result_messages(&mut self, params: &SysParams) -> Vec<Outbound> {
        let participants = self.online.len() as u32;
        let members: Vec<ClientId> = self.online.iter().copied().collect();
        members
            .into_iter()
            .map(|c| self.outbound(c, &Message::RoundResult { participants }, params))
            .collect()
    }

    /// Seal and hand over the transcript. Call after the final messages so
    /// their bytes are included.
    pub fn into_transcript(mut self) -> RoundTranscript {
        self.transcript.seal();
        self.transcript
    }
}
