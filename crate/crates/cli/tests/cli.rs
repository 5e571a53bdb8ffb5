mod common;

use std::path::Path;

use common::{code, ok, scripted_session, Server};
use serde_json::{json, Value};

fn toy_pair(dir: &Path, n: &str, test: &str) {
    ok(dir, &["gen-toy", "--out", "normal", "--n", n, "--test", test, "--seed", "3"]);
    ok(dir, &["gen-toy", "--out", "lombard", "--n", n, "--test", test, "--seed", "3", "--style", "lombard"]);
}

fn write_plan(dir: &Path, donor_steps: usize, lr: Option<f64>) {
    let lr = lr.map_or(Value::Null, |v| json!(v));
    let plan = json!({"seed": 1, "size": "toy", "stages": [
        {"name": "donor", "corpus": "normal/manifest.jsonl", "init": "scratch", "steps": donor_steps, "batch_size": 2, "learning_rate": lr},
        {"name": "lombard", "corpus": "lombard/manifest.jsonl", "init": "from_checkpoint", "steps": 2}
    ]});
    std::fs::write(dir.join("plan.json"), plan.to_string()).unwrap();
}

#[test]
fn prepare_is_idempotent_and_names_corrupt_records() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["gen-toy", "--out", "c", "--n", "4"]);
    let first = ok(p, &["prepare", "--manifest", "c/manifest.jsonl", "--out", "f"]);
    assert!(first.contains("extracted 8 feature files"), "{first}");
    let mel = std::fs::read(p.join("f/mel_stats.json")).unwrap();
    let second = ok(p, &["prepare", "--manifest", "c/manifest.jsonl", "--out", "f"]);
    assert!(second.contains("extracted 0 feature files, skipped 8"), "{second}");
    assert_eq!(std::fs::read(p.join("f/mel_stats.json")).unwrap(), mel);

    std::fs::write(p.join("c/toy_normal_0002.wav"), b"RIFF not really").unwrap();
    let (c, err) = code(p, &["prepare", "--manifest", "c/manifest.jsonl", "--out", "f"]);
    assert_eq!(c, 2);
    assert!(err.contains("toy_normal_0002"), "{err}");
}

#[test]
fn training_is_reproducible_and_bad_plans_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    toy_pair(p, "4", "1");
    write_plan(p, 3, None);
    for out in ["a", "b"] {
        ok(p, &["train", "--plan", "plan.json", "--model", "seq2seq", "--seed", "5", "--out", out]);
    }
    for f in ["donor/seq2seq_world.loss.csv", "lombard/seq2seq_world.loss.csv"] {
        let a = std::fs::read_to_string(p.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read_to_string(p.join("b").join(f)).unwrap());
        assert!(a.starts_with("step,total"));
    }
    ok(p, &["train", "--plan", "plan.json", "--model", "seq2seq", "--seed", "6", "--out", "c"]);
    assert_ne!(
        std::fs::read(p.join("a/donor/seq2seq_world.ckpt")).unwrap(),
        std::fs::read(p.join("c/donor/seq2seq_world.ckpt")).unwrap()
    );

    std::fs::write(p.join("bad.json"), r#"{"stages": []}"#).unwrap();
    assert_eq!(code(p, &["train", "--plan", "bad.json", "--model", "seq2seq", "--out", "x"]).0, 2);
    assert_eq!(code(p, &["train", "--plan", "plan.json", "--model", "lstm", "--features", "mel", "--out", "x"]).0, 2);
    // fine-tuning without the donor checkpoint
    assert_eq!(code(p, &["adapt", "--plan", "plan.json", "--model", "lstm", "--out", "fresh"]).0, 2);
}

#[test]
fn divergence_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    toy_pair(p, "3", "1");
    write_plan(p, 30, Some(1e30));
    let (c, err) = code(p, &["train", "--plan", "plan.json", "--model", "seq2seq", "--out", "run", "--stage", "donor"]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("non-finite"), "{err}");
}

#[test]
fn synth_checks_ids_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    toy_pair(p, "3", "1");
    write_plan(p, 2, None);
    ok(p, &["train", "--plan", "plan.json", "--model", "seq2seq", "--out", "run", "--stage", "donor"]);
    let args = |out: &'static str| ["synth", "--system", "S2", "--text", "pack my box", "--acoustic-dir", "run/donor", "--seed", "4", "--out", out];
    let stdout = ok(p, &args("a.wav"));
    assert!(stdout.contains("alignment monotonicity"), "{stdout}");
    ok(p, &args("b.wav"));
    let a = std::fs::read(p.join("a.wav")).unwrap();
    assert_eq!(&a[..4], b"RIFF");
    assert_eq!(a, std::fs::read(p.join("b.wav")).unwrap());

    let (c, err) = code(p, &["synth", "--system", "S7", "--text", "x", "--acoustic-dir", "run/donor", "--out", "c.wav"]);
    assert_eq!(c, 2);
    assert!(err.contains("S7"));
    let (c, err) = code(p, &["synth", "--system", "S5", "--text", "x", "--acoustic-dir", "run/donor", "--out", "c.wav"]);
    assert_eq!(c, 2);
    assert!(err.contains("S5") && err.contains("seq2seq_mel"), "{err}");
}

#[test]
fn config_file_fills_flags_and_flags_win() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("cfg.json"), r#"{"gen-toy": {"out": "from_cfg", "n": 2, "seed": 9}}"#).unwrap();
    ok(p, &["--config", "cfg.json", "gen-toy"]);
    assert!(p.join("from_cfg/manifest.jsonl").exists());
    ok(p, &["gen-toy", "--config", "cfg.json", "--out", "from_flag", "--n", "3"]);
    let lines = std::fs::read_to_string(p.join("from_flag/manifest.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    std::fs::write(p.join("bad.json"), r#"{"gen-toy": {"nope": 1}}"#).unwrap();
    assert_eq!(code(p, &["--config", "bad.json", "gen-toy", "--out", "x"]).0, 2);
}

/// Test set built from natural audio standing in for three systems.
fn test_set(p: &Path) {
    toy_pair(p, "4", "3");
    let m: Vec<Value> = std::fs::read_to_string(p.join("lombard/manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for sys in ["S1", "S3", "S5"] {
        std::fs::create_dir_all(p.join("synth").join(sys)).unwrap();
        for r in m.iter().filter(|r| r["split"] == "test") {
            let id = r["id"].as_str().unwrap();
            std::fs::copy(p.join("lombard").join(format!("{id}.wav")), p.join("synth").join(sys).join(format!("{id}.wav"))).unwrap();
        }
    }
    ok(p, &[
        "eval", "build-test", "--stimuli", "synth", "--lombard-manifest", "lombard/manifest.jsonl",
        "--normal-manifest", "normal/manifest.jsonl", "--out", "test", "--utterances", "3", "--seed", "2",
    ]);
}

#[test]
fn rating_endpoints() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    test_set(p);
    let server = Server::start(p, "test/manifest.json");
    let manifest: Value = server.get("/api/manifest").json().unwrap();
    let pairs = manifest["pairs"].as_array().unwrap();
    let sim = pairs.iter().find(|x| x["test_kind"] == "similarity").unwrap();
    let ccr = pairs.iter().find(|x| x["test_kind"] == "ccr").unwrap();

    let audio = server.get(&format!("/api/audio/{}", sim["id"].as_str().unwrap()));
    assert_eq!(audio.status(), 200);
    assert_eq!(audio.headers()["content-type"], "audio/wav");
    assert_eq!(&audio.bytes().unwrap()[..4], b"RIFF");
    assert_eq!(server.get("/api/audio/nope").status(), 404);

    let good = json!({"pair_id": sim["id"], "listener_id": "rater-1", "test_kind": "similarity", "value": 1,
                      "timestamp_iso8601": "2026-03-01T10:00:00Z"});
    assert_eq!(server.post_rating(&good).0, 201);
    let csv = std::fs::read_to_string(p.join("test/ratings.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "pair_id,listener_id,test_kind,value,timestamp_iso8601");
    assert_eq!(rows[1], format!("{},rater-1,similarity,1,2026-03-01T10:00:00Z", sim["id"].as_str().unwrap()));

    // resubmission is rejected and not logged
    assert_eq!(server.post_rating(&good).0, 409);
    let (status, body) = server.post_rating(&json!({"pair_id": ccr["id"], "listener_id": "rater-1", "test_kind": "ccr", "value": 5}));
    assert_eq!(status, 400);
    assert_eq!(body["errors"][0]["field"], "value");
    let (status, body) = server.post_rating(&json!({"pair_id": "zzz", "test_kind": "ccr", "value": "high"}));
    assert_eq!(status, 400);
    let fields: Vec<&str> = body["errors"].as_array().unwrap().iter().map(|e| e["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["listener_id", "value"]);
    assert_eq!(std::fs::read_to_string(p.join("test/ratings.csv")).unwrap().lines().count(), 2);

    let prog: Value = server.get("/api/progress/rater-1").json().unwrap();
    assert_eq!(prog["rated"], 1);
    assert_eq!(prog["total"], pairs.len());
    assert_eq!(prog["by_kind"]["similarity"]["rated"], 1);
    assert_eq!(prog["rated_pair_ids"][0], sim["id"]);
    drop(server);

    // a restarted server remembers what was rated
    let server = Server::start(p, "test/manifest.json");
    assert_eq!(server.post_rating(&good).0, 409);
    let prog: Value = server.get("/api/progress/rater-1").json().unwrap();
    assert_eq!(prog["rated"], 1);
}

#[test]
fn concurrent_raters_lose_nothing() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    test_set(p);
    let server = Server::start(p, "test/manifest.json");
    let manifest: Value = server.get("/api/manifest").json().unwrap();
    let pairs = manifest["pairs"].as_array().unwrap().clone();
    std::thread::scope(|s| {
        for l in 0..6 {
            let (server, pairs) = (&server, &pairs);
            s.spawn(move || {
                for x in pairs {
                    let v = if x["test_kind"] == "ccr" { -1 } else { 2 };
                    let body = json!({"pair_id": x["id"], "listener_id": format!("L{l}"), "test_kind": x["test_kind"], "value": v});
                    assert_eq!(server.post_rating(&body).0, 201);
                }
            });
        }
    });
    let csv = std::fs::read_to_string(p.join("test/ratings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * pairs.len());
}

#[test]
fn scripted_session_aggregate_and_report() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    test_set(p);
    {
        let server = Server::start(p, "test/manifest.json");
        scripted_session(&server, &["h1", "h2", "h3", "h4"], &["cheat"], 11);
    }
    let out = ok(p, &["eval", "aggregate", "--manifest", "test/manifest.json", "--out", "agg"]);
    assert!(out.contains("1 excluded: cheat"), "{out}");
    let agg: Value = serde_json::from_slice(&std::fs::read(p.join("agg/aggregates.json")).unwrap()).unwrap();
    assert_eq!(agg["similarity"].as_array().unwrap().len(), 6);
    let order: Vec<&str> = agg["ccr"]["scores"].as_array().unwrap().iter().map(|s| s["label"].as_str().unwrap()).collect();
    assert_eq!(order[0], "ref_lombard");
    ok(p, &["eval", "report", "--manifest", "test/manifest.json", "--out", "report"]);
    let html = std::fs::read_to_string(p.join("report/report.html")).unwrap();
    assert!(html.contains("<svg") && html.contains("ref_lombard"));
}
