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

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn secagg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_secagg"));
    c.env_remove("SECAGG_PARAMS");
    c
}

fn run(args: &[&str]) -> Output {
    secagg().args(args).output().expect("spawn secagg")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Toy parameters for `clients` clients; scale 10, clip 2.
fn toy_params(dir: &TempDir, clients: u32) -> (PathBuf, PathBuf) {
    let params = dir.path().join("params.json");
    let secret = dir.path().join("secret.json");
    let out = run(&[
        "params-gen",
        "--kappa1",
        "96",
        "--allow-insecure",
        "--clients",
        &clients.to_string(),
        "--dims",
        "5",
        "--scale-bits",
        "10",
        "--clip",
        "2",
        "--seed",
        "7",
        "--out",
        s(&params),
        "--secret-out",
        s(&secret),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (params, secret)
}

const QUANT: [&str; 4] = ["--scale-bits", "10", "--clip", "2"];

#[test]
fn insecure_parameters_need_acknowledgment() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "params-gen",
        "--kappa1",
        "64",
        "--clients",
        "3",
        "--dims",
        "4",
        "--out",
        s(&dir.path().join("p.json")),
        "--secret-out",
        s(&dir.path().join("s.json")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("p.json").exists());

    let (params, _) = toy_params(&dir, 3);
    let key = dir.path().join("k.json");
    assert_eq!(
        code(&run(&["keygen", "--params", s(&params), "--out", s(&key)])),
        2
    );
    let out = secagg()
        .args([
            "keygen",
            "--allow-insecure",
            "--seed",
            "1",
            "--out",
            s(&key),
        ])
        .env("SECAGG_PARAMS", &params)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&key)
        .unwrap()
        .contains("params_fingerprint"));
}

#[test]
fn params_gen_is_reproducible_under_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (pa, sa) = toy_params(&a, 4);
    let (pb, sb) = toy_params(&b, 4);
    assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
    assert_eq!(fs::read(sa).unwrap(), fs::read(sb).unwrap());
}

#[test]
fn simulate_then_verify_and_detect_tampering() {
    let dir = TempDir::new().unwrap();
    let (params, secret) = toy_params(&dir, 4);
    let metrics = dir.path().join("metrics.csv");
    let transcripts = dir.path().join("transcripts.json");
    let schedule = dir.path().join("schedule.json");
    fs::write(
        &schedule,
        r#"{"absent": {"2": [1]}, "mid_round": {"3": [0]}}"#,
    )
    .unwrap();
    let mut args = vec![
        "simulate",
        "--params",
        s(&params),
        "--secret",
        s(&secret),
        "--allow-insecure",
        "--clients",
        "4",
        "--rounds",
        "4",
        "--schedule",
        s(&schedule),
        "--seed",
        "3",
        "--metrics-out",
        s(&metrics),
        "--transcripts-out",
        s(&transcripts),
        "--compare",
    ];
    args.extend(QUANT);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("round,status,participants"));
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("2,completed,3,"));
    assert!(lines[3].starts_with("3,aborted,"));

    let verify = |file: &Path| {
        run(&[
            "verify-transcript",
            "--params",
            s(&params),
            "--allow-insecure",
            "--secret",
            s(&secret),
            "--transcripts",
            s(file),
        ])
    };
    let out = verify(&transcripts);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).matches(": ok").count(),
        4
    );

    // Flip one hex digit inside a ciphertext component.
    let text = fs::read_to_string(&transcripts).unwrap();
    let at = text.find("\"e2_first\": \"").unwrap() + 14;
    let mut bytes = text.into_bytes();
    bytes[at] = if bytes[at] == b'1' { b'2' } else { b'1' };
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, bytes).unwrap();
    let out = verify(&tampered);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
}

#[test]
fn simulate_with_in_memory_group_writes_csv_to_stdout() {
    let out = run(&[
        "simulate",
        "--kappa1",
        "128",
        "--clients",
        "3",
        "--rounds",
        "2",
        "--dims",
        "4",
        "--lr",
        "0.01",
        "--local-steps",
        "5",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
    assert!(stdout.lines().skip(1).all(|l| l.contains(",completed,3,")));

    let again = run(&[
        "simulate",
        "--kappa1",
        "128",
        "--clients",
        "3",
        "--rounds",
        "2",
        "--dims",
        "4",
        "--lr",
        "0.01",
        "--local-steps",
        "5",
        "--seed",
        "9",
    ]);
    let losses = |s: &str| {
        s.lines()
            .map(|l| l.split(',').nth(10).unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(
        losses(&stdout),
        losses(&String::from_utf8(again.stdout).unwrap())
    );
}

#[test]
fn bench_emits_one_row_per_size() {
    let out = run(&[
        "bench", "--kappa1", "128", "--dims", "10,40", "--reps", "1", "--seed", "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("dims,segments,k,packed_elements"));
    assert!(rows[1].starts_with("10,") && rows[2].starts_with("40,"));
}

#[test]
fn exit_codes_follow_failure_class() {
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["simulate", "--clients", "1"])), 1);
    assert_eq!(code(&run(&["bench", "--kappa1", "128"])), 1);
    let missing = run(&[
        "keygen",
        "--params",
        "/nonexistent/params.json",
        "--allow-insecure",
    ]);
    assert_eq!(code(&missing), 4);

    let dir = TempDir::new().unwrap();
    let (params, secret) = toy_params(&dir, 3);
    let out = run(&[
        "simulate",
        "--params",
        s(&params),
        "--secret",
        s(&secret),
        "--allow-insecure",
        "--clients",
        "3",
        "--rounds",
        "1",
        "--scale-bits",
        "12",
    ]);
    assert_eq!(
        code(&out),
        2,
        "quantization mismatch must be a validation error"
    );
}

#[test]
fn serve_and_clients_over_tcp() {
    let dir = TempDir::new().unwrap();
    let (params, secret) = toy_params(&dir, 3);
    let keys: Vec<PathBuf> = (0..3)
        .map(|i| {
            let k = dir.path().join(format!("key{i}.json"));
            let seed = (100 + i).to_string();
            let out = run(&[
                "keygen",
                "--params",
                s(&params),
                "--allow-insecure",
                "--seed",
                &seed,
                "--out",
                s(&k),
            ]);
            assert_eq!(code(&out), 0);
            k
        })
        .collect();
    let transcripts = dir.path().join("live.json");
    let mut server = secagg()
        .args([
            "serve",
            "--params",
            s(&params),
            "--secret",
            s(&secret),
            "--allow-insecure",
            "--listen",
            "127.0.0.1:0",
            "--clients",
            "3",
            "--rounds",
            "3",
            "--seed",
            "5",
            "--transcripts-out",
            s(&transcripts),
        ])
        .args(QUANT)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(server.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("listen line")
        .to_string();
    // keep draining so the server never blocks on a full pipe
    std::thread::spawn(move || for _ in stderr.lines() {});

    let clients: Vec<_> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| {
            secagg()
                .args([
                    "client",
                    "--params",
                    s(&params),
                    "--allow-insecure",
                    "--key",
                    s(k),
                    "--connect",
                    &addr,
                    "--id",
                    &i.to_string(),
                    "--clients",
                    "3",
                    "--seed",
                    &(i + 1).to_string(),
                ])
                .args(QUANT)
                .stderr(Stdio::null())
                .spawn()
                .unwrap()
        })
        .collect();
    let out = server.wait_with_output().unwrap();
    for mut c in clients {
        assert!(c.wait().unwrap().success());
    }
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        summary["rounds"],
        serde_json::json!(["completed", "completed", "completed"])
    );

    let verify = run(&[
        "verify-transcript",
        "--params",
        s(&params),
        "--allow-insecure",
        "--secret",
        s(&secret),
        "--transcripts",
        s(&transcripts),
    ]);
    assert_eq!(
        code(&verify),
        0,
        "{}",
        String::from_utf8_lossy(&verify.stdout)
    );
}
