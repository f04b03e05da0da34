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

//! Synthetic convex task standing in for image classification.
//!
//! Least-squares regression with features drawn uniformly from `[-1, 1]`,
//! targets `y = x·w* + ε`, `|ε| ≤ 0.1`. Each client holds an equal-size
//! shard. With `w* ∈ [-1, 1]^n` and the default learning rate, accumulated
//! local gradients stay well below a clip bound of `4.0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::protocol::{ClientId, Trainer, TrainerError};

pub const DEFAULT_LOCAL_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub dim: usize,
    pub true_weights: Vec<f64>,
    pub shards: Vec<Shard>,
    pub local_steps: usize,
    pub lr: f64,
}

impl ToyTask {
    pub fn linear_regression(
        dim: usize,
        n_clients: usize,
        samples_per_client: usize,
        lr: f64,
        local_steps: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let true_weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let shards = (0..n_clients)
            .map(|_| {
                let features: Vec<Vec<f64>> = (0..samples_per_client)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                    .collect();
                let targets = features
                    .iter()
                    .map(|x| dot(x, &true_weights) + rng.gen_range(-0.1..=0.1))
                    .collect();
                Shard { features, targets }
            })
            .collect();
        ToyTask {
            dim,
            true_weights,
            shards,
            local_steps,
            lr,
        }
    }

    pub fn initial_model(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    /// Mean squared-error loss (halved) over every shard.
    pub fn loss(&self, w: &[f64]) -> f64 {
        let (sum, count) = self.shards.iter().fold((0.0, 0usize), |(s, c), shard| {
            (s + shard.sum_sq_residual(w), c + shard.targets.len())
        });
        0.5 * sum / count as f64
    }

    pub fn trainer(&self, client: ClientId) -> ToyTrainer {
        ToyTrainer {
            shard: self.shards[client as usize].clone(),
            steps: self.local_steps,
            lr: self.lr,
        }
    }

    pub fn boxed_trainer(&self, client: ClientId) -> Box<dyn Trainer> {
        Box::new(self.trainer(client))
    }
}

impl Shard {
    fn sum_sq_residual(&self, w: &[f64]) -> f64 {
        self.features
            .iter()
            .zip(&self.targets)
            .map(|(x, y)| (dot(x, w) - y).powi(2))
            .sum()
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for (x, y) in self.features.iter().zip(&self.targets) {
            let r = dot(x, w) - y;
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
        let m = self.targets.len() as f64;
        g.iter_mut().for_each(|gj| *gj /= m);
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs `steps` local gradient steps and reports the accumulated gradient
/// `(W - W_local) / lr`, so the server's `W - lr·mean` equals FedAvg.
#[derive(Debug, Clone)]
pub struct ToyTrainer {
    shard: Shard,
    steps: usize,
    lr: f64,
}

impl Trainer for ToyTrainer {
    fn local_gradient(&mut self, model: &[f64], _round_id: u64) -> Result<Vec<f64>, TrainerError> {
        if model.len() != self.shard.features.first().map_or(model.len(), Vec::len) {
            return Err(TrainerError(format!(
                "model dimension {} does not match data",
                model.len()
            )));
        }
        let mut w = model.to_vec();
        for _ in 0..self.steps {
            let g = self.shard.gradient(&w);
            w.iter_mut()
                .zip(&g)
                .for_each(|(wj, gj)| *wj -= self.lr * gj);
        }
        Ok(model
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) / self.lr)
            .collect())
    }
}

/// Trainer that always reports a fixed gradient.
#[derive(Debug, Clone)]
pub struct ConstantTrainer(pub Vec<f64>);

impl Trainer for ConstantTrainer {
    fn local_gradient(&mut self, _model: &[f64], _round_id: u64) -> Result<Vec<f64>, TrainerError> {
        Ok(self.0.clone())
    }
}
