#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value};

pub fn lombard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lombard")).current_dir(dir).args(args).output().expect("binary runs")
}

/// Runs and requires exit code 0, returning stdout.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lombard(dir, args);
    assert!(
        out.status.success(),
        "lombard {args:?} failed ({:?}):\n{}{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = lombard(dir, args);
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// A `lombard eval serve` child process on a free port.
pub struct Server {
    child: Child,
    pub url: String,
}

impl Server {
    pub fn start(dir: &Path, manifest: &str) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_lombard"))
            .current_dir(dir)
            .args(["eval", "serve", "--manifest", manifest, "--addr", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .spawn()
            .expect("server starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
        Server { child, url }
    }

    pub fn get(&self, path: &str) -> reqwest::blocking::Response {
        reqwest::blocking::get(format!("{}{path}", self.url)).unwrap()
    }

    pub fn post_rating(&self, body: &Value) -> (u16, Value) {
        let r = reqwest::blocking::Client::new().post(format!("{}/api/rating", self.url)).json(body).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Small deterministic generator so raters need no extra dependency.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 33) % n
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        lo + (hi - lo) * (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Value an honest listener gives: null pairs sound the same, anchors
/// sound worse, natural references beat systems on naturalness.
pub fn honest_value(pair: &Value, rng: &mut Lcg) -> i64 {
    let probe = pair["probe_kind"].as_str().unwrap();
    let r = rng.below(2) as i64;
    match (pair["test_kind"].as_str().unwrap(), probe) {
        ("similarity", "null_pair") => r,
        ("similarity", "corrupted_anchor") => 2 + r,
        ("similarity", _) => rng.below(4) as i64,
        ("ccr", "null_pair") => rng.below(3) as i64 - 1,
        ("ccr", "corrupted_anchor") => -3 + r,
        _ => {
            let ref_first = pair["first_label"].as_str().unwrap().starts_with("ref_");
            let v = 1 + rng.below(3) as i64;
            if ref_first { -v } else { v }
        }
    }
}

/// Posts one rating per pair for every listener; `cheaters` answer 3 everywhere.
pub fn scripted_session(server: &Server, honest: &[&str], cheaters: &[&str], seed: u64) -> usize {
    let manifest: Value = server.get("/api/manifest").json().unwrap();
    let pairs = manifest["pairs"].as_array().unwrap();
    let mut rng = Lcg::new(seed);
    let mut posted = 0;
    for (who, cheat) in honest.iter().map(|h| (h, false)).chain(cheaters.iter().map(|c| (c, true))) {
        for p in pairs {
            let value = if cheat { 3 } else { honest_value(p, &mut rng) };
            let body = json!({"pair_id": p["id"], "listener_id": who, "test_kind": p["test_kind"], "value": value});
            let (status, resp) = server.post_rating(&body);
            assert_eq!(status, 201, "{resp}");
            posted += 1;
        }
    }
    posted
}
