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

//! TCP transport for `serve` and `client`. One reader thread per connection
//! feeds a channel; the server loop itself is single-threaded.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::ErrorKind;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use secagg_core::crypto::KeyPair;
use secagg_core::group::pow_mod;
use secagg_core::protocol::server::Outbound;
use secagg_core::protocol::wire::{decode_frame, frame_type, read_frame, write_frame};
use secagg_core::protocol::{
    model_to_bytes, ClientId, ClientSession, Message, MsgType, RoundConfig, RoundTranscript,
    ServerRound, Trainer,
};
use secagg_core::{Error, QuantParams, ServerSecret, SysParams};

use crate::{CliError, CliResult};

pub struct ServeConfig {
    pub listen: String,
    pub clients: usize,
    pub rounds: u64,
    pub eta: f64,
    pub quant: QuantParams,
    pub timeout_ms: u64,
    pub seed: u64,
}

pub struct ServeOutcome {
    pub model: Vec<f64>,
    pub transcripts: Vec<RoundTranscript>,
}

enum Event {
    Frame(usize, Vec<u8>),
    Closed(usize),
}

struct Connections {
    writers: Vec<TcpStream>,
    client_of: Vec<Option<ClientId>>,
    conn_of: BTreeMap<ClientId, usize>,
    closed: BTreeSet<usize>,
    /// Frames that arrived before the first round began.
    backlog: VecDeque<(usize, Vec<u8>)>,
}

impl Connections {
    fn send(&mut self, out: Vec<Outbound>) {
        for o in out {
            let Some(&conn) = self.conn_of.get(&o.to) else {
                continue;
            };
            if self.closed.contains(&conn) {
                continue;
            }
            if write_frame(&mut self.writers[conn], &o.frame).is_err() {
                self.closed.insert(conn);
            }
        }
    }

    fn live_clients(&self) -> BTreeSet<ClientId> {
        self.conn_of
            .iter()
            .filter(|(_, c)| !self.closed.contains(c))
            .map(|(id, _)| *id)
            .collect()
    }
}

fn io_err(what: &str, e: std::io::Error) -> CliError {
    CliError::io(std::path::Path::new(what), e)
}

/// Deliver frames to `server` until `done` holds or the deadline passes.
fn collect(
    rx: &Receiver<Event>,
    conns: &mut Connections,
    server: &mut ServerRound,
    params: &SysParams,
    timeout: Duration,
    done: impl Fn(&ServerRound, &BTreeSet<ClientId>) -> bool,
) {
    let deadline = Instant::now() + timeout;
    while !done(server, &conns.live_clients()) {
        let left = deadline.saturating_duration_since(Instant::now());
        let event = match conns.backlog.pop_front() {
            Some((conn, bytes)) => Ok(Event::Frame(conn, bytes)),
            None => rx.recv_timeout(left),
        };
        match event {
            Ok(Event::Frame(conn, bytes)) => {
                let Some(from) = conns.client_of[conn] else {
                    continue;
                };
                if let Err(e) = server.handle_frame(from, &bytes, params) {
                    eprintln!("client {from}: dropped frame ({e})");
                }
            }
            Ok(Event::Closed(conn)) => {
                conns.closed.insert(conn);
            }
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => return,
        }
    }
}

pub fn serve(
    params: &SysParams,
    secret: &ServerSecret,
    cfg: &ServeConfig,
    initial_model: Vec<f64>,
    loss: impl Fn(&[f64]) -> f64,
) -> CliResult<ServeOutcome> {
    let listener = TcpListener::bind(&cfg.listen).map_err(|e| io_err(&cfg.listen, e))?;
    let addr = listener.local_addr().map_err(|e| io_err(&cfg.listen, e))?;
    eprintln!("listening on {addr}");

    let (tx, rx) = channel();
    let mut writers = Vec::with_capacity(cfg.clients);
    for conn in 0..cfg.clients {
        let (stream, peer) = listener.accept().map_err(|e| io_err(&cfg.listen, e))?;
        stream.set_nodelay(true).ok();
        let mut reader = stream.try_clone().map_err(|e| io_err("socket", e))?;
        let tx = tx.clone();
        thread::spawn(move || loop {
            match read_frame(&mut reader) {
                Ok(bytes) => {
                    if tx.send(Event::Frame(conn, bytes)).is_err() {
                        return;
                    }
                }
                Err(_) => {
                    let _ = tx.send(Event::Closed(conn));
                    return;
                }
            }
        });
        eprintln!("connection {conn} from {peer}");
        writers.push(stream);
    }
    drop(tx);

    let timeout = Duration::from_millis(cfg.timeout_ms);
    let mut conns = Connections {
        client_of: vec![None; writers.len()],
        writers,
        conn_of: BTreeMap::new(),
        closed: BTreeSet::new(),
        backlog: VecDeque::new(),
    };
    let mut registered = BTreeMap::new();
    let deadline = Instant::now() + timeout;
    while registered.len() + conns.closed.len() < cfg.clients {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(Event::Frame(conn, bytes)) if conns.client_of[conn].is_some() => {
                conns.backlog.push_back((conn, bytes));
            }
            Ok(Event::Frame(conn, bytes)) => {
                let msg = decode_frame(&bytes, params.element_len()).map(|f| f.message);
                match msg {
                    Ok(Message::RegisterPk { client, pk })
                        if !registered.contains_key(&client)
                            && pk != 1u32.into()
                            && pk < *params.p_squared()
                            && pow_mod(&pk, &params.q, params.p_squared()) == 1u32.into() =>
                    {
                        conns.client_of[conn] = Some(client);
                        conns.conn_of.insert(client, conn);
                        registered.insert(client, pk);
                    }
                    _ => eprintln!("connection {conn}: invalid registration"),
                }
            }
            Ok(Event::Closed(conn)) => {
                conns.closed.insert(conn);
            }
            Err(_) => break,
        }
    }
    eprintln!("{} client(s) registered", registered.len());

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut model = initial_model;
    let mut transcripts = Vec::new();
    for round_id in 1..=cfg.rounds {
        let mut rcfg = RoundConfig::new(round_id, cfg.eta);
        rcfg.timeout_ms = cfg.timeout_ms;
        let mut server = ServerRound::begin(rcfg, &registered)?;
        collect(&rx, &mut conns, &mut server, params, timeout, |s, live| {
            live.iter().all(|c| s.online_set().contains(c))
        });
        let members_live =
            |s: &ServerRound, live: &BTreeSet<ClientId>| s.online_set().is_subset(live);
        let outcome = server
            .close_online(params, secret, &model_to_bytes(&model), &mut rng)
            .and_then(|out| {
                conns.send(out);
                collect(&rx, &mut conns, &mut server, params, timeout, |s, live| {
                    s.abort_reason().is_some() || s.all_uploaded() || !members_live(s, live)
                });
                if let Some(reason) = server.abort_reason() {
                    return Err(Error::Aborted(reason));
                }
                let out = server.issue_challenge(params)?;
                conns.send(out);
                collect(&rx, &mut conns, &mut server, params, timeout, |s, live| {
                    s.abort_reason().is_some() || s.all_responded() || !members_live(s, live)
                });
                if let Some(reason) = server.abort_reason() {
                    return Err(Error::Aborted(reason));
                }
                server.finalize(params, secret, &cfg.quant, &model)
            });
        match outcome {
            Ok((updated, _)) => {
                model = updated;
                let out = server.result_messages(params);
                conns.send(out);
                eprintln!(
                    "round {round_id}: {} participants, loss {:.6}",
                    server.online_set().len(),
                    loss(&model)
                );
            }
            Err(
                Error::Aborted(_)
                | Error::Integrity(_)
                | Error::Decryption(_)
                | Error::Arithmetic(_),
            ) => {
                let out = server.abort_messages(params);
                conns.send(out);
                let reason = server
                    .abort_reason()
                    .map(|r| r.to_string())
                    .unwrap_or_default();
                eprintln!("round {round_id}: aborted ({reason})");
            }
            Err(e) => return Err(e.into()),
        }
        transcripts.push(server.into_transcript());
    }
    for w in &conns.writers {
        let _ = w.shutdown(Shutdown::Both);
    }
    Ok(ServeOutcome { model, transcripts })
}

/// Register, then take part in rounds until the server hangs up. Returns the
/// number of completed rounds.
pub fn run_client(
    params: &SysParams,
    qp: &QuantParams,
    keypair: KeyPair,
    id: ClientId,
    addr: &str,
    seed: u64,
    trainer: &mut dyn Trainer,
) -> CliResult<u64> {
    let mut stream = TcpStream::connect(addr).map_err(|e| io_err(addr, e))?;
    stream.set_nodelay(true).ok();
    let mut session = ClientSession::new(id, keypair, seed);
    write_frame(&mut stream, &session.register_frame(params)).map_err(|e| io_err(addr, e))?;
    let mut round = 1;
    write_frame(&mut stream, &session.announce(round, params)).map_err(|e| io_err(addr, e))?;
    let mut completed = 0;
    loop {
        let bytes = match read_frame(&mut stream) {
            Ok(b) => b,
            Err(e)
                if matches!(
                    e.kind(),
                    ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset
                ) =>
            {
                break
            }
            Err(e) => return Err(io_err(addr, e)),
        };
        let frame_round = decode_frame(&bytes, params.element_len())?.round_id;
        let ty = frame_type(&bytes);
        if let Some(reply) = session.handle_frame(&bytes, params, qp, trainer)? {
            write_frame(&mut stream, &reply).map_err(|e| io_err(addr, e))?;
        }
        if frame_round == round && matches!(ty, Some(MsgType::RoundResult | MsgType::Abort)) {
            if ty == Some(MsgType::RoundResult) {
                completed += 1;
            }
            eprintln!(
                "client {id}: round {round} {}",
                if ty == Some(MsgType::Abort) {
                    "aborted"
                } else {
                    "done"
                }
            );
            round += 1;
            if write_frame(&mut stream, &session.announce(round, params)).is_err() {
                break;
            }
        }
    }
    Ok(completed)
}
