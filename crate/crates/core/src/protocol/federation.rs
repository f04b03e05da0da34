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

//! Multi-round driver over a pluggable transport.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use num_bigint::BigUint;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::client::{ClientSession, Trainer};
use super::server::{Disposition, Outbound, ServerRound, ServerTimings};
use super::transcript::RoundTranscript;
use super::wire::{decode_frame, frame_type, ClientId, Message, MsgType};
use super::{model_to_bytes, RoundConfig};
use crate::crypto::KeyPair;
use crate::error::{AbortReason, Error, Result};
use crate::group::{pow_mod, ServerSecret, SysParams};
use crate::harness::DropoutSchedule;
use crate::packing::QuantParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Server,
    Client(ClientId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub from: Endpoint,
    pub to: Endpoint,
    pub frame: Vec<u8>,
}

/// Byte and frame counters, split by direction and message type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficStats {
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub frames_up: u64,
    pub frames_down: u64,
    pub bytes_by_type: BTreeMap<MsgType, u64>,
}

impl TrafficStats {
    fn record(&mut self, from: Endpoint, frame: &[u8]) {
        let len = frame.len() as u64;
        if from == Endpoint::Server {
            self.bytes_down += len;
            self.frames_down += 1;
        } else {
            self.bytes_up += len;
            self.frames_up += 1;
        }
        if let Some(ty) = frame_type(frame) {
            *self.bytes_by_type.entry(ty).or_default() += len;
        }
    }
}

pub trait Transport {
    fn send(&mut self, from: Endpoint, to: Endpoint, frame: Vec<u8>);
    /// Next delivery, or `None` once nothing is in flight.
    fn recv(&mut self) -> Option<Delivery>;
    fn stats(&self) -> &TrafficStats;
}

/// Single-clock FIFO event queue. Delivery order is the send order, so a run
/// is fully determined by its inputs.
#[derive(Debug, Default)]
pub struct InMemoryTransport {
    queue: VecDeque<(u64, Delivery)>,
    clock: u64,
    stats: TrafficStats,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Logical time: number of frames sent so far.
    pub fn clock(&self) -> u64 {
        self.clock
    }
}

impl Transport for InMemoryTransport {
    fn send(&mut self, from: Endpoint, to: Endpoint, frame: Vec<u8>) {
        self.stats.record(from, &frame);
        self.clock += 1;
        self.queue
            .push_back((self.clock, Delivery { from, to, frame }));
    }

    fn recv(&mut self) -> Option<Delivery> {
        self.queue.pop_front().map(|(_, d)| d)
    }

    fn stats(&self) -> &TrafficStats {
        &self.stats
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub rounds: u64,
    pub eta: f64,
    pub quant: QuantParams,
    /// Seeds the server's sealing nonces and every client's encryption RNG.
    pub seed: u64,
}

/// Per-round measurements gathered by the driver.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round_id: u64,
    pub aborted: Option<AbortReason>,
    pub participants: usize,
    /// Group elements in each client's gradient upload.
    pub elements_per_upload: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub encrypt_time: Duration,
    pub server: ServerTimings,
    /// Recovered per-dimension quantized sums of a completed round.
    pub sums: Option<Vec<u64>>,
    /// Model after the round.
    pub model: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub model: Vec<f64>,
    pub transcripts: Vec<RoundTranscript>,
    pub reports: Vec<RoundReport>,
    pub registration_bytes: u64,
}

struct Participant {
    session: ClientSession,
    trainer: Box<dyn Trainer>,
    /// Drops out after uploading in the current round.
    silent_after_upload: bool,
    online: bool,
}

/// Run `cfg.rounds` rounds of secure aggregation.
///
/// Client `i` holds `keys[i]` and the trainer built by `trainer_factory(i)`.
/// The schedule decides who is absent in each round and who vanishes between
/// upload and response. Aborted rounds leave the model unchanged; the
/// federation moves on to the next round.
#[allow(clippy::too_many_arguments)]
pub fn run_federation<T, F>(
    params: &SysParams,
    secret: &ServerSecret,
    keys: Vec<KeyPair>,
    initial_model: Vec<f64>,
    cfg: &FederationConfig,
    schedule: &DropoutSchedule,
    mut trainer_factory: F,
    transport: &mut T,
) -> Result<FederationOutcome>
where
    T: Transport,
    F: FnMut(ClientId) -> Box<dyn Trainer>,
{
    if initial_model.len() != params.packing.n {
        return Err(Error::Usage(format!(
            "model has {} weights, parameters expect {}",
            initial_model.len(),
            params.packing.n
        )));
    }
    if keys.len() as u64 > params.n_max_clients {
        return Err(Error::Usage(format!(
            "{} clients exceed the configured maximum {}",
            keys.len(),
            params.n_max_clients
        )));
    }
    let mut participants: Vec<Participant> = keys
        .into_iter()
        .enumerate()
        .map(|(i, kp)| {
            let id = i as ClientId;
            Participant {
                session: ClientSession::new(id, kp, client_seed(cfg.seed, id)),
                trainer: trainer_factory(id),
                silent_after_upload: false,
                online: false,
            }
        })
        .collect();
    let mut server_rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    // Registration.
    let before = transport.stats().bytes_up;
    for p in &participants {
        transport.send(
            Endpoint::Client(p.session.id()),
            Endpoint::Server,
            p.session.register_frame(params),
        );
    }
    let mut registered = BTreeMap::new();
    while let Some(d) = transport.recv() {
        let Endpoint::Client(from) = d.from else {
            continue;
        };
        if let Message::RegisterPk { client, pk } =
            decode_frame(&d.frame, params.element_len())?.message
        {
            if client == from && is_subgroup_element(&pk, params) {
                registered.insert(client, pk);
            }
        }
    }
    let registration_bytes = transport.stats().bytes_up - before;

    let mut model = initial_model;
    let mut transcripts = Vec::new();
    let mut reports = Vec::new();
    for round_id in 1..=cfg.rounds {
        let up0 = transport.stats().bytes_up;
        let down0 = transport.stats().bytes_down;
        let rcfg = RoundConfig::new(round_id, cfg.eta);
        let mut server = ServerRound::begin(rcfg, &registered)?;

        let absent = schedule.absent_in(round_id);
        let vanish = schedule.mid_round_in(round_id);
        for p in participants.iter_mut() {
            let id = p.session.id();
            p.online = !absent.contains(&id);
            p.silent_after_upload = vanish.contains(&id);
            if p.online {
                let frame = p.session.announce(round_id, params);
                transport.send(Endpoint::Client(id), Endpoint::Server, frame);
            }
        }
        pump(
            transport,
            &mut server,
            &mut participants,
            params,
            &cfg.quant,
        )?;

        let mut sums = None;
        let mut aborted = None;
        let outcome = server
            .close_online(params, secret, &model_to_bytes(&model), &mut server_rng)
            .and_then(|out| {
                send_all(transport, out);
                pump(
                    transport,
                    &mut server,
                    &mut participants,
                    params,
                    &cfg.quant,
                )?;
                if let Some(reason) = server.abort_reason() {
                    return Err(Error::Aborted(reason));
                }
                let out = server.issue_challenge(params)?;
                send_all(transport, out);
                pump(
                    transport,
                    &mut server,
                    &mut participants,
                    params,
                    &cfg.quant,
                )?;
                if let Some(reason) = server.abort_reason() {
                    return Err(Error::Aborted(reason));
                }
                server.finalize(params, secret, &cfg.quant, &model)
            });
        match outcome {
            Ok((updated, s)) => {
                model = updated;
                sums = Some(s);
                let out = server.result_messages(params);
                send_all(transport, out);
            }
            Err(Error::Aborted(reason)) => {
                aborted = Some(reason);
                let out = server.abort_messages(params);
                send_all(transport, out);
            }
            Err(e @ (Error::Integrity(_) | Error::Decryption(_) | Error::Arithmetic(_))) => {
                let _ = e;
                aborted = Some(AbortReason::IntegrityFailure);
                let out = server.abort_messages(params);
                send_all(transport, out);
            }
            Err(e) => return Err(e),
        }
        pump(
            transport,
            &mut server,
            &mut participants,
            params,
            &cfg.quant,
        )?;

        let encrypt_time = participants
            .iter()
            .filter(|p| p.online)
            .map(|p| p.session.last_encrypt_time())
            .sum();
        let timings = server.timings();
        let n_online = server.online_set().len();
        let transcript = server.into_transcript();
        reports.push(RoundReport {
            round_id,
            aborted,
            participants: n_online,
            elements_per_upload: params.segments() + 2,
            bytes_up: transport.stats().bytes_up - up0,
            bytes_down: transport.stats().bytes_down - down0,
            encrypt_time,
            server: timings,
            sums,
            model: model.clone(),
        });
        transcripts.push(transcript);
    }
    Ok(FederationOutcome {
        model,
        transcripts,
        reports,
        registration_bytes,
    })
}

fn client_seed(seed: u64, id: ClientId) -> u64 {
    seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(id as u64 + 1))
}

fn is_subgroup_element(x: &BigUint, params: &SysParams) -> bool {
    !x.is_one() && *x < *params.p_squared() && pow_mod(x, &params.q, params.p_squared()).is_one()
}

fn send_all<T: Transport>(transport: &mut T, out: Vec<Outbound>) {
    for o in out {
        transport.send(Endpoint::Server, Endpoint::Client(o.to), o.frame);
    }
}

/// Deliver until the queue drains.
fn pump<T: Transport>(
    transport: &mut T,
    server: &mut ServerRound,
    participants: &mut [Participant],
    params: &SysParams,
    qp: &QuantParams,
) -> Result<()> {
    while let Some(d) = transport.recv() {
        match (d.from, d.to) {
            (Endpoint::Client(from), Endpoint::Server) => {
                if let Disposition::AbortRequested(_) =
                    server.handle_frame(from, &d.frame, params)?
                {
                    let out = server.abort_messages(params);
                    send_all(transport, out);
                }
            }
            (Endpoint::Server, Endpoint::Client(to)) => {
                let Some(p) = participants.get_mut(to as usize) else {
                    continue;
                };
                if !p.online {
                    continue;
                }
                if p.silent_after_upload && frame_type(&d.frame) == Some(MsgType::Challenge) {
                    p.online = false;
                    continue;
                }
                if let Some(reply) =
                    p.session
                        .handle_frame(&d.frame, params, qp, p.trainer.as_mut())?
                {
                    transport.send(Endpoint::Client(to), Endpoint::Server, reply);
                }
            }
            _ => {}
        }
    }
    Ok(())
}
