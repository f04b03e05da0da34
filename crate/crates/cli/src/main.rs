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

//! `secagg`: parameter generation, key management, simulation, benchmarks
//! and live TCP server/client modes.

mod net;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secagg_core::crypto::{client_keygen, KeyPair};
use secagg_core::group::PRODUCTION_MIN_BITS;
use secagg_core::harness::{
    bench_scaling, compare_plaintext_oracle, simulate, DropoutSchedule, Metrics, ScalingConfig,
    ScalingRow, ScalingSizes, SimulationConfig, ToyTask,
};
use secagg_core::protocol::transcript::{transcripts_from_json, transcripts_to_json};
use secagg_core::protocol::verify_transcript;
use secagg_core::{gen_system_params, Error, QuantParams, ServerSecret, SysParams};

const PARAMS_ENV: &str = "SECAGG_PARAMS";

#[derive(Parser)]
#[command(
    name = "secagg",
    version,
    about = "Multi-private-key secure aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate system parameters and the server secret.
    ParamsGen(ParamsGenArgs),
    /// Generate a client key pair.
    Keygen(KeygenArgs),
    /// Run an in-memory federation and write metrics and transcripts.
    Simulate(SimulateArgs),
    /// Scaling table comparing packed uploads with the per-segment baseline.
    Bench(BenchArgs),
    /// Run the aggregation server over TCP.
    Serve(ServeArgs),
    /// Run one client over TCP.
    Client(ClientArgs),
    /// Recompute and check exported transcripts.
    VerifyTranscript(VerifyArgs),
}

#[derive(Args, Clone, Copy)]
struct QuantArgs {
    /// Fixed-point scale exponent s.
    #[arg(long, default_value_t = 16)]
    scale_bits: u32,
    /// Gradient clipping bound c.
    #[arg(long, default_value_t = 4.0)]
    clip: f64,
}

#[derive(Args)]
struct ParamsArgs {
    /// Parameter file.
    #[arg(long, env = PARAMS_ENV)]
    params: PathBuf,
    /// Accept parameters below production size.
    #[arg(long)]
    allow_insecure: bool,
}

#[derive(Args)]
struct ParamsGenArgs {
    #[arg(long, default_value_t = PRODUCTION_MIN_BITS)]
    kappa1: u64,
    #[arg(long, default_value_t = 128)]
    kappa2: u64,
    #[arg(long, default_value_t = 2)]
    gamma: u64,
    /// Maximum number of clients N.
    #[arg(long)]
    clients: u64,
    /// Gradient dimension n.
    #[arg(long)]
    dims: usize,
    #[command(flatten)]
    quant: QuantArgs,
    /// Seed for a reproducible run; fresh OS entropy when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "params.json")]
    out: PathBuf,
    #[arg(long, default_value = "server_secret.json")]
    secret_out: PathBuf,
    /// Required for κ1 below production size.
    #[arg(long)]
    allow_insecure: bool,
}

#[derive(Args)]
struct KeygenArgs {
    #[command(flatten)]
    params: ParamsArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "client_key.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Use this parameter file instead of generating a group in memory.
    #[arg(long, requires = "secret")]
    params: Option<PathBuf>,
    #[arg(long)]
    secret: Option<PathBuf>,
    #[arg(long)]
    allow_insecure: bool,
    /// Group size when generating in memory.
    #[arg(long, default_value_t = 512)]
    kappa1: u64,
    #[arg(long, default_value_t = 10)]
    clients: usize,
    #[arg(long, default_value_t = 20)]
    rounds: u64,
    /// Server learning rate η; also the local step size.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = secagg_core::harness::DEFAULT_LOCAL_STEPS)]
    local_steps: usize,
    /// Model dimension when generating in memory.
    #[arg(long, default_value_t = 8)]
    dims: usize,
    /// Training samples per client.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    /// Dropout schedule (JSON).
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[command(flatten)]
    quant: QuantArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-round metrics CSV; standard output when absent.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    transcripts_out: Option<PathBuf>,
    /// Replay against plaintext FedAvg and report the comparison.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 512)]
    kappa1: u64,
    #[arg(long, default_value_t = 128)]
    kappa2: u64,
    #[arg(long, default_value_t = 10)]
    clients: u64,
    /// Gradient dimensions, one row each.
    #[arg(long, value_delimiter = ',', conflicts_with = "segments")]
    dims: Vec<usize>,
    /// Segment counts u, one row each.
    #[arg(long, value_delimiter = ',')]
    segments: Vec<usize>,
    #[command(flatten)]
    quant: QuantArgs,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    params: ParamsArgs,
    #[arg(long)]
    secret: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7700")]
    listen: String,
    /// Connections to wait for before the first round.
    #[arg(long)]
    clients: usize,
    #[arg(long, default_value_t = 5)]
    rounds: u64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[command(flatten)]
    quant: QuantArgs,
    /// Per-phase collection deadline.
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
    /// Task seed shared with the clients, used for loss reporting.
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = secagg_core::harness::DEFAULT_LOCAL_STEPS)]
    local_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    transcripts_out: Option<PathBuf>,
}

#[derive(Args)]
struct ClientArgs {
    #[command(flatten)]
    params: ParamsArgs,
    /// Client key file.
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7700")]
    connect: String,
    #[arg(long)]
    id: u32,
    /// Number of clients in the shared toy task.
    #[arg(long)]
    clients: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = secagg_core::harness::DEFAULT_LOCAL_STEPS)]
    local_steps: usize,
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
    #[command(flatten)]
    quant: QuantArgs,
    /// Seed for encryption randomness; fresh OS entropy when absent.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamsArgs,
    /// Transcript file written by `simulate` or `serve`.
    #[arg(long)]
    transcripts: PathBuf,
    /// Also re-decrypt with the server secret.
    #[arg(long)]
    secret: Option<PathBuf>,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
    pub fn protocol(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
    pub fn io(context: &Path, e: io::Error) -> Self {
        CliError {
            code: 4,
            message: format!("{}: {e}", context.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Usage(_) => 1,
            Error::Aborted(_) | Error::Protocol(_) | Error::PrivacyGuard(_) | Error::Wire(_) => 3,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::ParamsGen(a) => params_gen(a),
        Command::Keygen(a) => keygen(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
        Command::Client(a) => client(a),
        Command::VerifyTranscript(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn rng_for(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn insecure_guard(kappa1: u64, allow: bool) -> CliResult {
    if kappa1 < PRODUCTION_MIN_BITS && !allow {
        return Err(CliError::validation(format!(
            "{kappa1}-bit parameters are insecure for production; pass --allow-insecure to proceed"
        )));
    }
    Ok(())
}

fn load_params(a: &ParamsArgs) -> CliResult<SysParams> {
    let params = SysParams::from_json(&read(&a.params)?)?;
    insecure_guard(params.kappa1, a.allow_insecure)?;
    Ok(params)
}

fn load_secret(path: &Path, params: &SysParams) -> CliResult<ServerSecret> {
    Ok(ServerSecret::from_json(&read(path)?, params)?)
}

fn quant_for(q: QuantArgs, params: &SysParams) -> CliResult<QuantParams> {
    let qp = QuantParams::new(q.scale_bits, q.clip)?;
    if qp.grad_max() != params.grad_max {
        return Err(CliError::validation(format!(
            "--scale-bits {} --clip {} give grad_max {}, parameters were built for {}",
            q.scale_bits,
            q.clip,
            qp.grad_max(),
            params.grad_max
        )));
    }
    Ok(qp)
}

fn params_gen(a: ParamsGenArgs) -> CliResult {
    insecure_guard(a.kappa1, a.allow_insecure)?;
    let qp = QuantParams::new(a.quant.scale_bits, a.quant.clip)?;
    let mut rng = rng_for(a.seed);
    eprintln!("searching for a {}-bit group...", a.kappa1);
    let (params, secret) = gen_system_params(
        a.kappa1,
        a.kappa2,
        a.gamma,
        a.clients,
        qp.grad_max(),
        a.dims,
        &mut rng,
    )?;
    write(&a.out, &params.to_json())?;
    write(&a.secret_out, &secret.to_json(&params))?;
    eprintln!(
        "wrote {} (k = {}, u = {}) and {}",
        a.out.display(),
        params.packing.k,
        params.segments(),
        a.secret_out.display()
    );
    Ok(())
}

fn keygen(a: KeygenArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let kp = client_keygen(&params, &mut rng_for(a.seed));
    write(&a.out, &kp.to_json(&params))?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn write_metrics(metrics: &Metrics, out: Option<&Path>) -> CliResult {
    let rows = metrics.csv_rows();
    write_csv(&Metrics::CSV_HEADER, &rows, out)
}

fn write_csv(header: &[&str], rows: &[Vec<String>], out: Option<&Path>) -> CliResult {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let label = out.unwrap_or(Path::new("<stdout>"));
    let mut w = csv::Writer::from_writer(sink);
    let io_err = |e: csv::Error| CliError::io(label, io::Error::other(e));
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(label, e))
}

fn simulate_cmd(a: SimulateArgs) -> CliResult {
    let qp = QuantParams::new(a.quant.scale_bits, a.quant.clip)?;
    if a.clients < 2 {
        return Err(CliError::usage("--clients must be at least 2"));
    }
    let (params, secret) = match (&a.params, &a.secret) {
        (Some(p), Some(s)) => {
            let params = load_params(&ParamsArgs {
                params: p.clone(),
                allow_insecure: a.allow_insecure,
            })?;
            let secret = load_secret(s, &params)?;
            quant_for(a.quant, &params)?;
            (params, secret)
        }
        _ => {
            if a.kappa1 < PRODUCTION_MIN_BITS {
                eprintln!(
                    "note: in-memory {}-bit group, not for production use",
                    a.kappa1
                );
            }
            let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
            gen_system_params(
                a.kappa1,
                128,
                2,
                a.clients as u64,
                qp.grad_max(),
                a.dims,
                &mut rng,
            )?
        }
    };
    let dims = params.packing.n;
    let schedule = match &a.schedule {
        Some(p) => DropoutSchedule::from_json(&read(p)?)?,
        None => DropoutSchedule::none(),
    };
    let task = ToyTask::linear_regression(dims, a.clients, a.samples, a.lr, a.local_steps, a.seed);
    let cfg = SimulationConfig {
        n_clients: a.clients,
        rounds: a.rounds,
        eta: a.lr,
        quant: qp,
        seed: a.seed,
    };
    eprintln!(
        "simulating {} clients, {} rounds, n = {dims}, u = {}",
        a.clients,
        a.rounds,
        params.segments()
    );
    let result = simulate(&params, &secret, &cfg, &schedule, &task)?;
    for r in &result.metrics.rounds {
        match r.aborted {
            None => eprintln!(
                "round {}: {} participants, loss {:.6}",
                r.round_id, r.participants, r.loss
            ),
            Some(reason) => eprintln!("round {}: aborted ({reason})", r.round_id),
        }
    }
    write_metrics(&result.metrics, a.metrics_out.as_deref())?;
    if let Some(p) = &a.transcripts_out {
        write(p, &transcripts_to_json(&result.transcripts))?;
        eprintln!("wrote {}", p.display());
    }
    if a.compare {
        let report = compare_plaintext_oracle(&result, &cfg, &schedule, &task)?;
        eprintln!(
            "plaintext replay: sums {}, model {}, loss {:.9} vs unquantized {:.9}",
            match report.first_divergence {
                None => "identical".to_string(),
                Some((r, d)) => format!("diverge at round {r} ({d:?})"),
            },
            if report.models_identical {
                "identical"
            } else {
                "differs"
            },
            report.secure_loss,
            report.unquantized_loss
        );
        if !report.is_equivalent() {
            return Err(CliError::validation(
                "secure run diverges from plaintext aggregation",
            ));
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult {
    let qp = QuantParams::new(a.quant.scale_bits, a.quant.clip)?;
    let sizes = match (a.dims.is_empty(), a.segments.is_empty()) {
        (false, _) => ScalingSizes::Dims(a.dims),
        (true, false) => ScalingSizes::Segments(a.segments),
        (true, true) => return Err(CliError::usage("pass --dims or --segments")),
    };
    let cfg = ScalingConfig {
        kappa1: a.kappa1,
        kappa2: a.kappa2,
        n_clients: a.clients,
        grad_max: qp.grad_max(),
        sizes,
        reps: a.reps,
        seed: a.seed,
    };
    eprintln!(
        "benchmarking at {} bits, {} repetitions per row",
        a.kappa1, a.reps
    );
    let rows = bench_scaling(&cfg)?;
    for r in &rows {
        eprintln!(
            "n = {}: u = {}, {} vs {} elements, ratio {:.3}",
            r.dims, r.segments, r.packed_elements, r.baseline_elements, r.byte_ratio
        );
    }
    let records: Vec<Vec<String>> = rows.iter().map(ScalingRow::csv_record).collect();
    write_csv(&ScalingRow::CSV_HEADER, &records, a.out.as_deref())
}

fn serve(a: ServeArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let secret = load_secret(&a.secret, &params)?;
    let qp = quant_for(a.quant, &params)?;
    let task = ToyTask::linear_regression(
        params.packing.n,
        a.clients,
        a.samples,
        a.lr,
        a.local_steps,
        a.task_seed,
    );
    let cfg = net::ServeConfig {
        listen: a.listen,
        clients: a.clients,
        rounds: a.rounds,
        eta: a.lr,
        quant: qp,
        timeout_ms: a.timeout_ms,
        seed: a.seed,
    };
    let outcome = net::serve(&params, &secret, &cfg, task.initial_model(), |w| {
        task.loss(w)
    })?;
    if let Some(p) = &a.transcripts_out {
        write(p, &transcripts_to_json(&outcome.transcripts))?;
        eprintln!("wrote {}", p.display());
    }
    let summary = serde_json::json!({
        "rounds": outcome.transcripts.iter().map(|t| &t.status).collect::<Vec<_>>(),
        "model": outcome.model,
        "loss": task.loss(&outcome.model),
    });
    println!("{summary}");
    match outcome.transcripts.iter().find(|t| !t.is_completed()) {
        Some(t) => Err(CliError::protocol(format!("round {} aborted", t.round_id))),
        None => Ok(()),
    }
}

fn client(a: ClientArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let qp = quant_for(a.quant, &params)?;
    let kp = KeyPair::from_json(&read(&a.key)?, &params)?;
    if a.id as usize >= a.clients {
        return Err(CliError::usage(format!(
            "--id {} outside 0..{}",
            a.id, a.clients
        )));
    }
    let task = ToyTask::linear_regression(
        params.packing.n,
        a.clients,
        a.samples,
        a.lr,
        a.local_steps,
        a.task_seed,
    );
    let mut trainer = task.trainer(a.id);
    let seed = a
        .seed
        .unwrap_or_else(|| ChaCha20Rng::from_entropy().next_u64());
    let rounds = net::run_client(&params, &qp, kp, a.id, &a.connect, seed, &mut trainer)?;
    eprintln!("client {}: {rounds} round(s) completed", a.id);
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let secret = a
        .secret
        .as_deref()
        .map(|p| load_secret(p, &params))
        .transpose()?;
    let transcripts = transcripts_from_json(&read(&a.transcripts)?)?;
    let mut failures = 0;
    for t in &transcripts {
        match verify_transcript(t, &params, secret.as_ref()) {
            Ok(()) => println!("round {}: ok", t.round_id),
            Err(e) => {
                failures += 1;
                println!("round {}: FAILED {e}", t.round_id);
            }
        }
    }
    if failures > 0 {
        return Err(CliError::validation(format!(
            "{failures} of {} transcript(s) failed verification",
            transcripts.len()
        )));
    }
    eprintln!("{} transcript(s) verified", transcripts.len());
    Ok(())
}
