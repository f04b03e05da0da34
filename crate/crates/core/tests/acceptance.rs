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

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use secagg_core::crypto::{
    agg_pubkey, aggregate, client_keygen, collusion_extract_pair, decrypt,
    derive_symmetric_key_client, derive_symmetric_key_server, encrypt, encrypt_with, gen_challenge,
    gen_response, open_model, seal_model, Ciphertext, CollusionView, EncryptionNonces, KeyPair,
};
use secagg_core::group::{find_group_primes, is_probable_prime, pow_mod, random_exponent};
use secagg_core::harness::{
    bench_scaling, compare_plaintext_oracle, simulate, DropoutSchedule, ScalingConfig,
    ScalingSizes, SimulationConfig, ToyTask,
};
use secagg_core::packing::build_packing;
use secagg_core::protocol::{ClientPhase, ClientSession, RoundStatus};
use secagg_core::{
    gen_system_params, pack, recover, AbortReason, PackedGradient, QuantParams, ServerSecret,
    SysParams,
};

/// Wall-clock budget for the randomized round trips.
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(30);
/// Allowed relative deviation of the packed/baseline byte ratio.
const BYTE_RATIO_TOLERANCE: f64 = 0.05;
/// Allowed final-loss gap to unquantized FedAvg.
const LOSS_TOLERANCE: f64 = 1e-3;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn plain_sums(grads: &[Vec<u64>]) -> Vec<u64> {
    let n = grads[0].len();
    (0..n).map(|j| grads.iter().map(|g| g[j]).sum()).collect()
}

/// Encrypt, challenge, respond, aggregate, decrypt and recover for `members`.
fn secure_sum(
    params: &SysParams,
    secret: &ServerSecret,
    members: &[(&KeyPair, &[u64])],
    rng: &mut ChaCha20Rng,
) -> secagg_core::Result<Vec<u64>> {
    let pk_s = agg_pubkey(members.iter().map(|(k, _)| &k.pk), params)?;
    let cts = members
        .iter()
        .map(|(_, g)| encrypt(&pack(g, &params.packing)?, &pk_s, params, rng))
        .collect::<secagg_core::Result<Vec<Ciphertext>>>()?;
    let r = gen_challenge(cts.iter().map(|c| &c.e2_first), params)?;
    let ts: Vec<BigUint> = members
        .iter()
        .map(|(k, _)| gen_response(&r, &k.sk, params))
        .collect();
    let bundle = aggregate(&cts, &ts, params)?;
    recover(&decrypt(&bundle, secret, params)?, &params.packing)
}

fn randomized_round_trips() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc1);
    for trial in 0..1000 {
        let bits = rng.gen_range(16..=32u64);
        let n_clients = rng.gen_range(2..=6u64);
        let dims = rng.gen_range(1..=64usize);
        let grad_max = rng.gen_range(1..=15u64);
        let (p, q) = find_group_primes(bits, 2, &mut rng).map_err(err)?;
        let (params, secret) =
            SysParams::from_primes(p, q, 2, 128, n_clients, grad_max, dims, &mut rng)
                .map_err(err)?;
        let keys: Vec<KeyPair> = (0..n_clients)
            .map(|_| client_keygen(&params, &mut rng))
            .collect();
        let grads: Vec<Vec<u64>> = (0..n_clients)
            .map(|_| (0..dims).map(|_| rng.gen_range(0..=grad_max)).collect())
            .collect();
        let size = rng.gen_range(2..=n_clients as usize);
        let mut idx: Vec<usize> = (0..n_clients as usize).collect();
        idx.shuffle(&mut rng);
        idx.truncate(size);
        let members: Vec<(&KeyPair, &[u64])> = idx
            .iter()
            .map(|&i| (&keys[i], grads[i].as_slice()))
            .collect();
        let got = secure_sum(&params, &secret, &members, &mut rng).map_err(err)?;
        let chosen: Vec<Vec<u64>> = idx.iter().map(|&i| grads[i].clone()).collect();
        ensure!(
            got == plain_sums(&chosen),
            "trial {trial}: {bits}-bit p, N={n_clients}, n={dims}, |S|={size} recovered {got:?}"
        );
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < ROUND_TRIP_BUDGET, "took {elapsed:?}");
    Ok(format!(
        "1000 trials exact in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn next_prime(mut x: BigUint, rng: &mut ChaCha20Rng) -> BigUint {
    while !is_probable_prime(&x, 32, rng) {
        x += 1u32;
    }
    x
}

/// Every tuple of client vectors in `[0, grad_max]^k`.
fn all_vectors(k: usize, grad_max: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|v| (0..=grad_max).map(move |x| [v.clone(), vec![x]].concat()))
            .collect();
    }
    out
}

fn exhaustive_recovery() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc2);
    let mut cases = 0u64;
    // Packing needs N >= 2; a lone contributor is covered by summing fewer
    // than N clients under the same parameters.
    for n_clients in 2..=3u64 {
        for grad_max in 1..=3u64 {
            for k in 1..=3usize {
                // Smallest prime that still holds k slots, plus a roomy one.
                let base = BigUint::from(n_clients * grad_max);
                let mut a_sum = BigUint::one();
                for _ in 1..k {
                    let a = &base * &a_sum + 1u32;
                    a_sum += a;
                }
                let tight = next_prime(&a_sum * &base + 1u32, &mut rng);
                let roomy = next_prime(BigUint::one() << 40, &mut rng);
                for p in [tight, roomy] {
                    let pp = build_packing(&p, k, n_clients, grad_max).map_err(err)?;
                    ensure!(pp.k == k && pp.u == 1, "p={p} gave k={} u={}", pp.k, pp.u);
                    let vectors = all_vectors(k, grad_max);
                    for contributors in 1..=n_clients as usize {
                        let mut tuple = vec![0usize; contributors];
                        loop {
                            let grads: Vec<Vec<u64>> =
                                tuple.iter().map(|&i| vectors[i].clone()).collect();
                            let packed = grads
                                .iter()
                                .map(|g| pack(g, &pp))
                                .collect::<secagg_core::Result<Vec<PackedGradient>>>()
                                .map_err(err)?;
                            let total = PackedGradient::sum(&packed);
                            let got = recover(&total.segments, &pp).map_err(err)?;
                            ensure!(
                                got == plain_sums(&grads),
                                "N={n_clients} max={grad_max} k={k} p={p} {grads:?}"
                            );
                            cases += 1;
                            // odometer over client tuples
                            let mut pos = 0;
                            loop {
                                if pos == tuple.len() {
                                    break;
                                }
                                tuple[pos] += 1;
                                if tuple[pos] < vectors.len() {
                                    break;
                                }
                                tuple[pos] = 0;
                                pos += 1;
                            }
                            if pos == tuple.len() {
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{cases} packed sums recovered exactly"))
}

fn dropout_tolerance() -> Outcome {
    let quant = QuantParams::new(10, 4.0).map_err(err)?;
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc3);
    let dims = 4;
    let (params, secret) =
        gen_system_params(128, 128, 2, 10, quant.grad_max(), dims, &mut rng).map_err(err)?;
    let cfg = SimulationConfig {
        n_clients: 10,
        rounds: 2,
        eta: 0.01,
        quant,
        seed: 3,
    };
    let task = ToyTask::linear_regression(dims, 10, 10, 0.01, 5, 3);
    let schedule = DropoutSchedule::none()
        .with_absent(1, 0..8)
        .with_absent(2, 0..9);
    let result = simulate(&params, &secret, &cfg, &schedule, &task).map_err(err)?;
    let r1 = &result.transcripts[0];
    ensure!(
        r1.is_completed() && r1.online_set.len() == 2,
        "round 1: {:?} {:?}",
        r1.status,
        r1.online_set
    );
    let report = compare_plaintext_oracle(&result, &cfg, &schedule, &task).map_err(err)?;
    ensure!(
        report.first_divergence.is_none(),
        "sums diverge: {:?}",
        report.first_divergence
    );

    let r2 = &result.transcripts[1];
    ensure!(
        r2.status == RoundStatus::Aborted(AbortReason::DropoutBelowThreshold),
        "round 2 status {:?}",
        r2.status
    );
    ensure!(
        r2.ciphertexts.is_empty() && !r2.bytes_by_type.contains_key("GradientCiphertext"),
        "solo client material reached the server"
    );

    // A client handed its own key as pk_S stops before uploading.
    let kp = client_keygen(&params, &mut rng);
    let pk = kp.pk.clone();
    let mut session = ClientSession::new(9, kp, 4);
    session.announce(3, &params);
    let sealed = secagg_core::crypto::SealedModel {
        nonce: [0; 12],
        body: vec![],
    };
    let mut trainer = task.trainer(9);
    let reply = session
        .handle_model(&sealed, pk, &params, &quant, &mut trainer)
        .map_err(err)?;
    ensure!(
        reply.is_none() && session.phase() == ClientPhase::AbortedSolo,
        "solo client uploaded"
    );
    Ok(
        "|S|=2 of 10 completes with exact sums; |S|=1 aborts DropoutBelowThreshold, no ciphertext"
            .into(),
    )
}

fn collusion_bound() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc4);
    let dims = 12;
    let grad_max = 255;
    let (params, secret) =
        gen_system_params(128, 128, 2, 5, grad_max, dims, &mut rng).map_err(err)?;
    let mut distinct_pairs = 0;
    for trial in 0..200 {
        let keys: Vec<KeyPair> = (0..5).map(|_| client_keygen(&params, &mut rng)).collect();
        let grads: Vec<Vec<u64>> = (0..5)
            .map(|_| (0..dims).map(|_| rng.gen_range(0..=grad_max)).collect())
            .collect();
        let pk_s = agg_pubkey(keys.iter().map(|k| &k.pk), &params).map_err(err)?;
        let nonces: Vec<EncryptionNonces> = (0..5)
            .map(|_| EncryptionNonces::sample(&params, &mut rng))
            .collect();
        let cts = grads
            .iter()
            .zip(&nonces)
            .map(|(g, r)| encrypt_with(&pack(g, &params.packing)?, &pk_s, &params, r))
            .collect::<secagg_core::Result<Vec<_>>>()
            .map_err(err)?;
        let challenge = gen_challenge(cts.iter().map(|c| &c.e2_first), &params).map_err(err)?;
        let ts: Vec<BigUint> = keys
            .iter()
            .map(|k| gen_response(&challenge, &k.sk, &params))
            .collect();

        let mut order: Vec<usize> = (0..5).collect();
        order.shuffle(&mut rng);
        let (i, j) = (order[0], order[1]);
        let colluders = &order[2..];
        let view = CollusionView {
            victims: [
                (&cts[i], &ts[i], &keys[i].pk),
                (&cts[j], &ts[j], &keys[j].pk),
            ],
            colluder_sk_sum: colluders.iter().map(|&c| &keys[c].sk).sum(),
            colluder_r2_sum: colluders.iter().map(|&c| &nonces[c].r2).sum(),
        };
        let segments = collusion_extract_pair(&view, &secret, &params).map_err(err)?;
        let extracted = recover(&segments, &params.packing).map_err(err)?;
        let pair = plain_sums(&[grads[i].clone(), grads[j].clone()]);
        ensure!(
            extracted == pair,
            "trial {trial}: extraction is not the pairwise sum"
        );
        if grads[i] != grads[j] {
            distinct_pairs += 1;
            ensure!(
                extracted != grads[i] && extracted != grads[j],
                "trial {trial}: extraction equals an individual gradient"
            );
        }
    }
    Ok(format!(
        "200 pairs yield only the pairwise sum ({distinct_pairs} with unequal gradients)"
    ))
}

fn communication_ratio() -> Outcome {
    let cfg = ScalingConfig {
        kappa1: 512,
        kappa2: 128,
        n_clients: 10,
        grad_max: QuantParams::new(16, 4.0).map_err(err)?.grad_max(),
        sizes: ScalingSizes::Segments(vec![1, 2, 5, 10, 40]),
        reps: 1,
        seed: 0xacc5,
    };
    let rows = bench_scaling(&cfg).map_err(err)?;
    let mut summary = Vec::new();
    for r in &rows {
        let u = r.segments;
        ensure!(
            r.packed_elements == u + 2,
            "u={u}: {} packed elements",
            r.packed_elements
        );
        ensure!(
            r.baseline_elements == 2 * u,
            "u={u}: {} baseline elements",
            r.baseline_elements
        );
        let dev = (r.byte_ratio - r.expected_ratio).abs() / r.expected_ratio;
        ensure!(
            dev <= BYTE_RATIO_TOLERANCE,
            "u={u}: byte ratio {:.4} vs {:.4}",
            r.byte_ratio,
            r.expected_ratio
        );
        summary.push(format!("u={u}:{:.3}/{:.3}", r.byte_ratio, r.expected_ratio));
    }
    Ok(summary.join(" "))
}

fn fedavg_equivalence() -> Outcome {
    let quant = QuantParams::new(16, 4.0).map_err(err)?;
    let dims = 8;
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc6);
    let (params, secret) =
        gen_system_params(512, 128, 2, 10, quant.grad_max(), dims, &mut rng).map_err(err)?;
    let cfg = SimulationConfig {
        n_clients: 10,
        rounds: 20,
        eta: 0.01,
        quant,
        seed: 6,
    };
    let task = ToyTask::linear_regression(dims, 10, 32, 0.01, 5, 6);
    let schedule = DropoutSchedule::none();
    let result = simulate(&params, &secret, &cfg, &schedule, &task).map_err(err)?;
    let report = compare_plaintext_oracle(&result, &cfg, &schedule, &task).map_err(err)?;
    ensure!(
        report.completed_rounds == 20,
        "{} rounds completed",
        report.completed_rounds
    );
    ensure!(
        report.first_divergence.is_none(),
        "first divergence at {:?}",
        report.first_divergence
    );
    ensure!(
        report.models_identical,
        "final model differs from the integer oracle"
    );
    let gap = (report.secure_loss - report.unquantized_loss).abs();
    ensure!(gap <= LOSS_TOLERANCE, "loss gap {gap:e}");
    Ok(format!(
        "20 rounds bit-identical; loss {:.6} vs {:.6} (gap {gap:.2e})",
        report.secure_loss, report.unquantized_loss
    ))
}

fn key_agreement() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc7);
    for kappa2 in [128, 256] {
        let (params, _) = gen_system_params(128, kappa2, 2, 4, 7, 4, &mut rng).map_err(err)?;
        for trial in 0..50 {
            let alpha = random_exponent(&params.q, &mut rng);
            let beta = pow_mod(&params.g, &alpha, params.p_squared());
            let kp = client_keygen(&params, &mut rng);
            let server = derive_symmetric_key_server(&kp.pk, &alpha, &params);
            let client = derive_symmetric_key_client(&beta, &kp.sk, &params);
            ensure!(
                server.as_bytes() == client.as_bytes(),
                "trial {trial}: keys differ"
            );
            ensure!(
                server.bits() == kappa2 as usize,
                "key has {} bits",
                server.bits()
            );
            let len = rng.gen_range(0..4096);
            let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let sealed = seal_model(&server, &msg, &mut rng).map_err(err)?;
            ensure!(
                open_model(&client, &sealed).map_err(err)? == msg,
                "trial {trial}: round trip"
            );
            let mut bad = sealed.clone();
            let bit = rng.gen_range(0..(bad.body.len() + 12) * 8);
            if bit < 96 {
                bad.nonce[bit / 8] ^= 1 << (bit % 8);
            } else {
                let b = bit - 96;
                bad.body[b / 8] ^= 1 << (b % 8);
            }
            ensure!(
                open_model(&client, &bad).is_err(),
                "trial {trial}: tampered bit {bit} accepted"
            );
        }
    }
    Ok("100 key pairs agree; seal/open round trips; single-bit tamper rejected".into())
}

fn freshness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc8);
    let (params, _) = gen_system_params(64, 128, 2, 4, 15, 20, &mut rng).map_err(err)?;
    let pk_s = client_keygen(&params, &mut rng).pk;
    for trial in 0..1000 {
        let g: Vec<u64> = (0..20).map(|_| rng.gen_range(0..=15)).collect();
        let packed = pack(&g, &params.packing).map_err(err)?;
        let a = encrypt(&packed, &pk_s, &params, &mut rng).map_err(err)?;
        let b = encrypt(&packed, &pk_s, &params, &mut rng).map_err(err)?;
        ensure!(
            a.e1.iter().zip(&b.e1).all(|(x, y)| x != y)
                && a.e2_first != b.e2_first
                && a.e2_second != b.e2_second,
            "trial {trial}: a component repeated"
        );
    }
    Ok(format!(
        "1000 pairs differ in all {} components",
        params.segments() + 2
    ))
}

fn main() -> ExitCode {
    let criteria: [Check; 8] = [
        ("round-trip correctness", randomized_round_trips),
        ("exhaustive packing recovery", exhaustive_recovery),
        ("dropout tolerance", dropout_tolerance),
        ("collusion bound", collusion_bound),
        ("communication ratio", communication_ratio),
        ("fedavg equivalence", fedavg_equivalence),
        ("key agreement and sealing", key_agreement),
        ("ciphertext freshness", freshness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
