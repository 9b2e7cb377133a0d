use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn holmes(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holmes"))
        .args(args)
        .current_dir(dir)
        .env_remove("HOLMES_LISTEN_ADDR")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = holmes(dir, args);
    assert!(
        out.status.success(),
        "holmes {args:?} exited {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

const VOTES: &str = r#"{"match_id":"m1","model_a":"alpha","model_b":"beta","winner":"choice_A"}
{"match_id":"m2","model_a":"beta","model_b":"gamma","winner":"choice_C"}
{"match_id":"m3","model_a":"gamma","model_b":"alpha","winner":"choice_B"}
{"match_id":"m4","model_a":"alpha","model_b":"gamma","winner":"choice_A"}
{"match_id":"m5","model_a":"beta","model_b":"alpha","winner":"choice_C"}
{"match_id":"m6","model_a":"gamma","model_b":"beta","winner":"choice_A"}
"#;

/// Replays the six votes of [`VOTES`] with K = 4 on a 400-point base-10 scale.
fn elo_oracle() -> Vec<(String, f64)> {
    let mut r = std::collections::BTreeMap::from([("alpha", 1000.0), ("beta", 1000.0), ("gamma", 1000.0)]);
    for (a, b, s) in [
        ("alpha", "beta", 1.0),
        ("beta", "gamma", 0.5),
        ("gamma", "alpha", 0.0),
        ("alpha", "gamma", 1.0),
        ("beta", "alpha", 0.5),
        ("gamma", "beta", 1.0),
    ] {
        let ea = 1.0 / (1.0 + 10f64.powf((r[b] - r[a]) / 400.0));
        let (ra, rb) = (r[a], r[b]);
        r.insert(a, ra + 4.0 * (s - ea));
        r.insert(b, rb + 4.0 * ((1.0 - s) - (1.0 - ea)));
    }
    let mut v: Vec<(String, f64)> = r.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    v.sort_by(|x, y| y.1.total_cmp(&x.1));
    v
}

#[test]
fn eval_elo_prints_the_traced_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.jsonl"), VOTES).unwrap();
    let stdout = ok(dir.path(), &["eval", "elo", "--votes", "v.jsonl"]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("rank\tmodel\trating"));
    let rows: Vec<(String, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    let expected = elo_oracle();
    assert_eq!(rows.len(), 3);
    for ((m, r), (em, er)) in rows.iter().zip(&expected) {
        assert_eq!(m, em);
        assert!((r - er).abs() < 1e-9, "{m}: {r} vs {er}");
    }
    // Hand-traced finals.
    assert!((expected[0].1 - 1005.9082402075378).abs() < 1e-9);
    assert!((expected[1].1 - 998.0461780095486).abs() < 1e-9);
    assert!((expected[2].1 - 996.0455817829135).abs() < 1e-9);
    let sum: f64 = rows.iter().map(|r| r.1).sum();
    assert!((sum - 3000.0).abs() < 1e-9);
}

#[test]
fn eval_elo_writes_table_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.jsonl"), VOTES).unwrap();
    ok(dir.path(), &["eval", "elo", "--votes", "v.jsonl", "--out", "o"]);
    let table: serde_json::Value = serde_json::from_str(&read(dir.path().join("o/elo.json"))).unwrap();
    assert!((table["ratings"]["alpha"].as_f64().unwrap() - 1005.9082402075378).abs() < 1e-9);
}

#[test]
fn unexpected_vote_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("v.jsonl"),
        r#"{"match_id":"m1","model_a":"alpha","model_b":"beta","winner":"None"}"#,
    )
    .unwrap();
    let out = holmes(dir.path(), &["eval", "elo", "--votes", "v.jsonl"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn missing_input_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = holmes(dir.path(), &["eval", "elo", "--votes", "absent.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.jsonl"));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["bogus"][..],
        &["eval", "elo"][..],
        &["eval", "elo", "--votes", "v", "--frobnicate"][..],
        &["detect"][..],
        &["detect", "--image", "a.png", "--manifest", "m.jsonl"][..],
        &["corpus", "synth", "--n-real", "many"][..],
        &["jury", "evaluate", "--manifest", "m", "--explanations", "noequals"][..],
        &[][..],
    ] {
        let out = holmes(dir.path(), args);
        assert_eq!(code(&out), 64, "{args:?}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("Usage") || stderr.starts_with("error:"), "{args:?}: {stderr}");
    }
    let out = holmes(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("serve"));
}

#[test]
fn detect_without_checkpoints_refuses() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["corpus", "synth", "--n-real", "1", "--n-fake", "1", "--size", "16", "--out", "c"]);
    let out = holmes(dir.path(), &["detect", "--image", "c/real-00000.png", "--models", "nothing"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no checkpoint"));
    assert!(out.stdout.is_empty());
}

#[test]
fn invalid_config_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "dpo_beta = -1.0\n").unwrap();
    std::fs::write(dir.path().join("v.jsonl"), VOTES).unwrap();
    let out = holmes(dir.path(), &["--config", "c.toml", "eval", "elo", "--votes", "v.jsonl"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dpo_beta"));
}

/// corpus → experts → jury → D1 → SFT → DPO → detect → eval, all in `dir`.
fn pipeline(dir: &Path, seed: &str) -> (String, String) {
    let s = |args: &[&str]| {
        let mut v = vec!["--seed", seed];
        v.extend_from_slice(args);
        ok(dir, &v)
    };
    s(&["corpus", "synth", "--n-real", "30", "--n-fake", "30", "--size", "32", "--out", "corpus"]);
    s(&["train", "experts", "--manifest", "corpus/manifest.jsonl", "--out", "models"]);
    s(&["jury", "annotate", "--manifest", "corpus/manifest.jsonl", "--out", "data"]);
    s(&["dataset", "build-d1", "--annotations", "data/annotations.jsonl", "--out", "data"]);
    s(&["train", "sft", "--manifest", "corpus/manifest.jsonl", "--sft", "data/sft.jsonl", "--out", "models"]);
    s(&["train", "dpo", "--manifest", "corpus/manifest.jsonl", "--pairs", "data/d1.jsonl", "--out", "models"]);
    s(&["detect", "--manifest", "corpus/manifest.jsonl", "--models", "models", "--out", "run"]);
    let report = s(&["eval", "detection", "--manifest", "corpus/manifest.jsonl", "--detections", "run/detections.jsonl"]);
    (report, read(dir.join("run/detections.jsonl")))
}

#[test]
fn seeded_pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (report_a, det_a) = pipeline(a.path(), "7");
    let (report_b, det_b) = pipeline(b.path(), "7");
    assert_eq!(report_a, report_b);
    assert_eq!(det_a, det_b);
    for f in ["models/policy.json", "models/npr_expert.json", "data/d1.jsonl", "data/sft.jsonl"] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&report_a).unwrap();
    assert_eq!(report["n"], 60);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.9, "{report_a}");

    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["--seed", "8", "corpus", "synth", "--n-real", "30", "--n-fake", "30", "--size", "32", "--out", "corpus"]);
    assert_ne!(
        std::fs::read(a.path().join("corpus/real-00000.png")).unwrap(),
        std::fs::read(c.path().join("corpus/real-00000.png")).unwrap()
    );
}

#[test]
fn review_tasks_feed_d2_and_arena() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "3");

    ok(p, &["dataset", "tasks", "--manifest", "corpus/manifest.jsonl", "--detections", "run/detections.jsonl", "--out", "svc"]);
    let tasks_path = p.join("svc/tasks.jsonl");
    let mut tasks: Vec<serde_json::Value> = read(&tasks_path).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(tasks.len(), 60);
    assert!(tasks.iter().all(|t| t["status"] == "pending"));
    tasks[0]["status"] = "suggested".into();
    tasks[0]["suggestions"] = "mention the grain".into();
    let text: String = tasks.iter().map(|t| format!("{t}\n")).collect();
    std::fs::write(&tasks_path, text).unwrap();

    let stdout = ok(p, &["dataset", "build-d2", "--tasks", "svc/tasks.jsonl", "--out", "data"]);
    assert!(stdout.starts_with("1 D2 pairs"), "{stdout}");
    let d2: Vec<serde_json::Value> = read(p.join("data/d2.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(d2.len(), 1);
    assert_eq!(d2[0]["origin"], "d2");
    assert_eq!(d2[0]["rejected"], tasks[0]["sft_response"]);
    assert!(d2[0]["chosen"].as_str().unwrap().ends_with("mention the grain"));
    let after: Vec<serde_json::Value> = read(&tasks_path).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(after[0]["status"], "revised");
    assert_eq!(after.iter().filter(|t| t["status"] == "pending").count(), 59);

    // The D2 pair is usable for a further preference round.
    ok(p, &["train", "dpo", "--manifest", "corpus/manifest.jsonl", "--pairs", "data/d1.jsonl", "--pairs", "data/d2.jsonl", "--out", "models"]);

    ok(p, &["dataset", "arena", "--explanations", "ours=run/detections.jsonl", "--explanations", "copy=run/detections.jsonl", "--out", "svc"]);
    let arena = read(p.join("svc/arena.jsonl"));
    assert_eq!(arena.lines().count(), 120);
    assert!(arena.lines().next().unwrap().contains(r#""model":"ours""#));
}

#[test]
fn jury_evaluate_and_text_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "5");
    let stdout = ok(
        p,
        &["jury", "evaluate", "--manifest", "corpus/manifest.jsonl", "--explanations", "ours=run/detections.jsonl", "--out", "eval"],
    );
    let score: f64 = stdout.lines().next().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    // Mock jurors score correct-verdict explanations in [4, 5].
    assert!((4.0..=5.0).contains(&score), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&read(p.join("eval/judge_report.json"))).unwrap();
    assert_eq!(report["per_juror"].as_object().unwrap().len(), 4);

    let stdout = ok(p, &["eval", "text", "--detections", "run/detections.jsonl", "--references", "data/sft.jsonl"]);
    let get = |name: &str| -> f64 {
        stdout.lines().find_map(|l| l.strip_prefix(&format!("{name}\t"))).unwrap().parse().unwrap()
    };
    assert_eq!(get("pairs"), 60.0);
    for m in ["bleu1", "rouge_l", "meteor"] {
        assert!((0.0..=1.0).contains(&get(m)), "{m}");
    }
    assert!(get("cider") >= 0.0);
}

#[test]
fn perturb_writes_each_spec() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["corpus", "synth", "--n-real", "2", "--n-fake", "2", "--size", "16", "--out", "c"]);
    let stdout = ok(p, &["perturb", "--image", "c/fake-00002.png", "--out", "pert"]);
    let files: Vec<PathBuf> = stdout.lines().map(|l| p.join(l)).collect();
    assert_eq!(files.len(), 5);
    assert!(files.iter().any(|f| f.ends_with("fake-00002_resize_x0.5.png")));
    assert!(files.iter().all(|f| f.exists()));

    ok(p, &["perturb", "--manifest", "c/manifest.jsonl", "--spec", "blur_s1", "--out", "pm"]);
    assert_eq!(read(p.join("pm/blur_s1/manifest.jsonl")).lines().count(), 4);

    let out = holmes(p, &["perturb", "--image", "c/fake-00002.png", "--spec", "jpeg_q0"]);
    assert_eq!(code(&out), 1);
}

fn http_get(addr: &str, path: &str, token: Option<&str>) -> Option<String> {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(addr).ok()?;
    let auth = token.map(|t| format!("x-holmes-token: {t}\r\n")).unwrap_or_default();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\n{auth}Connection: close\r\n\r\n").ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_reads_address_and_token_from_env() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("votes.jsonl"), VOTES).unwrap();
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().to_string()
    };
    let mut child = Command::new(env!("CARGO_BIN_EXE_holmes"))
        .args(["serve", "--data", "."])
        .current_dir(dir.path())
        .env("HOLMES_LISTEN_ADDR", &addr)
        .env("HOLMES_SERVICE_TOKEN", "s3cret")
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut reply = None;
    for _ in 0..100 {
        reply = http_get(&addr, "/elo", Some("s3cret"));
        if reply.is_some() {
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    let denied = http_get(&addr, "/elo", None);
    child.kill().unwrap();
    child.wait().unwrap();

    let reply = reply.expect("service came up");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    let body: serde_json::Value = serde_json::from_str(reply.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["votes"], 6);
    assert!((body["ratings"]["alpha"].as_f64().unwrap() - 1005.9082402075378).abs() < 1e-9);
    assert!(denied.unwrap().starts_with("HTTP/1.1 401"));
}
