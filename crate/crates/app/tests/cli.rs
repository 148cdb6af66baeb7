//! The `copilot` binary: exit codes and the offline pipeline.

mod common;

use std::process::Command;
use std::sync::Arc;

use copilot_core::corpus::{LabelCodec, StrategyLabel};
use copilot_core::recommend::{HttpScorer, MockScorer, Scorer, ScorerEndpoint, ScorerError};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_copilot"))
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bin().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(bin().arg("--help").status().unwrap().code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let st = bin().args(["--config", cfg.to_str().unwrap(), "build-index"]).status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn missing_bundle_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.txt");
    std::fs::write(&hist, "Student: help?\n").unwrap();
    let st = bin().current_dir(dir.path()).args(["recommend", "--history-file", hist.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn offline_pipeline_end_to_end() {
    let ws = common::workspace(30, 120);
    let hist = ws.path().join("h.txt");
    std::fs::write(&hist, "Student: I made an error, is it wrong?\nTutor: Let us look.\n").unwrap();
    let out = bin()
        .args(["--config", &ws.arg_config(), "recommend", "--history-file", hist.to_str().unwrap(), "--method", "lpd"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["method"], "lpd");

    let st = bin()
        .args(["--config", &ws.arg_config(), "recommend", "--history-file", hist.to_str().unwrap(), "--method", "nope"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));

    let report = ws.path().join("out.json");
    let st = bin().args(["--config", &ws.arg_config(), "evaluate", "--report", report.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["detector"].is_object(), "{rep}");
}

#[test]
fn http_scorer_speaks_the_protocol() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, copilot_app::api::mock_scorer_router(MockScorer::default())).await.unwrap();
        });
    });

    let codec = LabelCodec::canonical();
    let endpoint = ScorerEndpoint { base_url: format!("http://{addr}"), timeout_ms: 2000, codec_fingerprint: None };
    let remote: Arc<dyn Scorer<f64>> = Arc::new(HttpScorer::new(endpoint).unwrap());
    let texts = vec!["Student: I wonder, maybe?".to_string(), "Student: stuck, need a hint".to_string()];
    let got = remote.score(&texts, &codec).unwrap();
    let want = MockScorer::default().score(&texts, &codec).unwrap();
    assert_eq!(got, want);
    assert_eq!(got[0].argmax(), codec.encode(StrategyLabel::AskQuestion).unwrap());

    let dead = HttpScorer::new(ScorerEndpoint { base_url: "http://127.0.0.1:9".into(), timeout_ms: 300, codec_fingerprint: None }).unwrap();
    let err = Scorer::<f64>::score(&dead, &texts, &codec).unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable(_) | ScorerError::Timeout), "{err:?}");
}
