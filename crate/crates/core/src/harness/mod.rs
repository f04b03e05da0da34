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

//! Deterministic simulation, plaintext oracles, the per-segment ElGamal
//! baseline, and scaling measurements.

mod baseline;
mod bench;
mod schedule;
mod task;

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::crypto::{client_keygen, KeyPair};
use crate::error::{AbortReason, Result};
use crate::group::{ServerSecret, SysParams};
use crate::packing::{dequantize_sum, quantize, QuantParams};
use crate::protocol::federation::{FederationConfig, RoundReport};
use crate::protocol::{run_federation, InMemoryTransport, RoundTranscript, Trainer};

pub use baseline::{
    baseline_encrypt, run_baseline_per_dimension, BaselineOutcome, DLOG_TABLE_LIMIT,
};
pub use bench::{
    bench_scaling, packed_and_baseline_uploads, slots_per_segment, ScalingConfig, ScalingRow,
    ScalingSizes, UploadSizes,
};
pub use schedule::DropoutSchedule;
pub use task::{ConstantTrainer, Shard, ToyTask, ToyTrainer, DEFAULT_LOCAL_STEPS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round_id: u64,
    pub aborted: Option<AbortReason>,
    pub participants: usize,
    /// Group elements per client upload.
    pub ciphertext_count: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub enc_time: Duration,
    pub agg_time: Duration,
    pub dec_time: Duration,
    pub recover_time: Duration,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub rounds: Vec<RoundMetrics>,
    pub aborted_rounds: usize,
    /// Loss before training, then after every round.
    pub loss_curve: Vec<f64>,
}

impl RoundMetrics {
    /// Everything except wall-clock timings.
    pub fn deterministic_eq(&self, other: &RoundMetrics) -> bool {
        self.round_id == other.round_id
            && self.aborted == other.aborted
            && self.participants == other.participants
            && self.ciphertext_count == other.ciphertext_count
            && self.bytes_up == other.bytes_up
            && self.bytes_down == other.bytes_down
            && self.loss.to_bits() == other.loss.to_bits()
    }
}

impl Metrics {
    pub fn deterministic_eq(&self, other: &Metrics) -> bool {
        self.aborted_rounds == other.aborted_rounds
            && self.rounds.len() == other.rounds.len()
            && self
                .rounds
                .iter()
                .zip(&other.rounds)
                .all(|(a, b)| a.deterministic_eq(b))
            && self
                .loss_curve
                .iter()
                .map(|l| l.to_bits())
                .eq(other.loss_curve.iter().map(|l| l.to_bits()))
    }

    pub const CSV_HEADER: [&'static str; 12] = [
        "round",
        "status",
        "participants",
        "ciphertext_elements",
        "bytes_up",
        "bytes_down",
        "enc_ms",
        "agg_ms",
        "dec_ms",
        "recover_ms",
        "loss",
        "aborted_reason",
    ];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let ms = |d: Duration| format!("{:.3}", d.as_secs_f64() * 1e3);
        self.rounds
            .iter()
            .map(|r| {
                vec![
                    r.round_id.to_string(),
                    if r.aborted.is_some() {
                        "aborted"
                    } else {
                        "completed"
                    }
                    .to_string(),
                    r.participants.to_string(),
                    r.ciphertext_count.to_string(),
                    r.bytes_up.to_string(),
                    r.bytes_down.to_string(),
                    ms(r.enc_time),
                    ms(r.agg_time),
                    ms(r.dec_time),
                    ms(r.recover_time),
                    format!("{:.9}", r.loss),
                    r.aborted.map(|a| a.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

/// Settings shared by the secure run and its oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_clients: usize,
    pub rounds: u64,
    pub eta: f64,
    pub quant: QuantParams,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub model: Vec<f64>,
    pub metrics: Metrics,
    pub transcripts: Vec<RoundTranscript>,
    pub reports: Vec<RoundReport>,
}

/// Client key pairs derived from the run seed.
pub fn client_keys(params: &SysParams, n_clients: usize, seed: u64) -> Vec<KeyPair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(0x6b65_7973));
    (0..n_clients)
        .map(|_| client_keygen(params, &mut rng))
        .collect()
}

/// Run a full secure federation in memory.
pub fn simulate(
    params: &SysParams,
    secret: &ServerSecret,
    cfg: &SimulationConfig,
    schedule: &DropoutSchedule,
    task: &ToyTask,
) -> Result<SimulationResult> {
    let keys = client_keys(params, cfg.n_clients, cfg.seed);
    let fed = FederationConfig {
        rounds: cfg.rounds,
        eta: cfg.eta,
        quant: cfg.quant,
        seed: cfg.seed,
    };
    let mut transport = InMemoryTransport::new();
    let outcome = run_federation(
        params,
        secret,
        keys,
        task.initial_model(),
        &fed,
        schedule,
        |id| task.boxed_trainer(id),
        &mut transport,
    )?;
    let mut loss_curve = vec![task.loss(&task.initial_model())];
    let rounds: Vec<RoundMetrics> = outcome
        .reports
        .iter()
        .map(|r| {
            let loss = task.loss(&r.model);
            loss_curve.push(loss);
            RoundMetrics {
                round_id: r.round_id,
                aborted: r.aborted,
                participants: r.participants,
                ciphertext_count: r.elements_per_upload,
                bytes_up: r.bytes_up,
                bytes_down: r.bytes_down,
                enc_time: r.encrypt_time,
                agg_time: r.server.aggregate,
                dec_time: r.server.decrypt,
                recover_time: r.server.recover,
                loss,
            }
        })
        .collect();
    let aborted_rounds = rounds.iter().filter(|r| r.aborted.is_some()).count();
    Ok(SimulationResult {
        model: outcome.model,
        metrics: Metrics {
            rounds,
            aborted_rounds,
            loss_curve,
        },
        transcripts: outcome.transcripts,
        reports: outcome.reports,
    })
}

/// Result of replaying a secure run against plaintext aggregation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub rounds_checked: usize,
    pub completed_rounds: usize,
    /// First `(round, dimension)` where the secure sums differ from the
    /// plaintext integer sums, or a round whose completion status differs
    /// (dimension `None`).
    pub first_divergence: Option<(u64, Option<usize>)>,
    /// Secure final model equals the integer-domain oracle bit for bit.
    pub models_identical: bool,
    /// Largest weight difference from unquantized FedAvg across all rounds.
    pub max_model_divergence: f64,
    pub secure_loss: f64,
    pub unquantized_loss: f64,
}

impl EquivalenceReport {
    pub fn is_equivalent(&self) -> bool {
        self.first_divergence.is_none() && self.models_identical
    }
}

/// Replay the schedule with plaintext aggregation, both in the quantized
/// integer domain and in unquantized floating point.
pub fn compare_plaintext_oracle(
    result: &SimulationResult,
    cfg: &SimulationConfig,
    schedule: &DropoutSchedule,
    task: &ToyTask,
) -> Result<EquivalenceReport> {
    let mut trainers: Vec<Box<dyn Trainer>> = (0..cfg.n_clients as u32)
        .map(|c| task.boxed_trainer(c))
        .collect();
    let mut model_q = task.initial_model();
    let mut model_f = task.initial_model();
    let mut first_divergence = None;
    let mut max_div: f64 = 0.0;
    let mut completed = 0;

    for (idx, transcript) in result.transcripts.iter().enumerate() {
        let round = idx as u64 + 1;
        let online = schedule.online_in(round, cfg.n_clients);
        let vanished = schedule.mid_round_in(round);
        let should_complete =
            online.len() >= crate::protocol::MIN_ONLINE && online.is_disjoint(&vanished);
        if should_complete != transcript.is_completed() {
            first_divergence.get_or_insert((round, None));
            continue;
        }
        if !should_complete {
            continue;
        }
        completed += 1;

        let mut sums = vec![0u64; task.dim];
        let mut float_sum = vec![0.0; task.dim];
        for &c in &online {
            let t = trainers[c as usize].as_mut();
            let g_q = t
                .local_gradient(&model_q, round)
                .map_err(|e| crate::Error::Usage(e.0))?;
            for (s, v) in sums.iter_mut().zip(quantize(&g_q, &cfg.quant)) {
                *s += v;
            }
            let g_f = t
                .local_gradient(&model_f, round)
                .map_err(|e| crate::Error::Usage(e.0))?;
            for (s, v) in float_sum.iter_mut().zip(g_f) {
                *s += v;
            }
        }
        if first_divergence.is_none() {
            if let Some(j) =
                (0..task.dim).find(|&j| transcript.recovered_sums.get(j) != Some(&sums[j]))
            {
                first_divergence = Some((round, Some(j)));
            }
        }
        let n = online.len() as f64;
        let total = dequantize_sum(&sums, &cfg.quant, online.len())?;
        for (w, g) in model_q.iter_mut().zip(&total) {
            *w -= cfg.eta / n * g;
        }
        for (w, g) in model_f.iter_mut().zip(&float_sum) {
            *w -= cfg.eta * (g / n);
        }
        let div = model_q
            .iter()
            .zip(&model_f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_div = max_div.max(div);
    }

    let models_identical = model_q.len() == result.model.len()
        && model_q
            .iter()
            .zip(&result.model)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(EquivalenceReport {
        rounds_checked: result.transcripts.len(),
        completed_rounds: completed,
        first_divergence,
        models_identical,
        max_model_divergence: max_div,
        secure_loss: task.loss(&result.model),
        unquantized_loss: task.loss(&model_f),
    })
}
