#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tempfile::TempDir;

/// A temp workspace with a config file, a synthetic corpus and trained
/// bundles, all produced through the CLI entry point.
pub struct Workspace {
    pub dir: TempDir,
    pub config: PathBuf,
}

impl Workspace {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn arg_config(&self) -> String {
        self.config.display().to_string()
    }

    pub fn run(&self, args: &[&str]) -> i32 {
        let mut full = vec!["copilot".to_string(), "--config".into(), self.arg_config()];
        full.extend(args.iter().map(|s| s.to_string()));
        copilot_app::cli::run(full)
    }
}

pub fn workspace(per_label: usize, negatives: usize) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("copilot.toml");
    let text = format!(
        "bundle_dir = {:?}\ndata_dir = {:?}\ncorpus = {:?}\nreport_path = {:?}\nseed = 42\n",
        root.join("models"),
        root.join("data"),
        root.join("corpus.jsonl"),
        root.join("report.json"),
    );
    std::fs::write(&config, text).unwrap();
    let ws = Workspace { dir, config };
    let corpus = ws.path().join("corpus.jsonl").display().to_string();
    let per = per_label.to_string();
    let neg = negatives.to_string();
    assert_eq!(ws.run(&["synth-data", "--per-label", &per, "--negatives", &neg, "--out", &corpus]), 0);
    for cmd in ["train-detector", "train-classifier", "build-index"] {
        assert_eq!(ws.run(&[cmd]), 0, "{cmd}");
    }
    ws
}

pub fn load_config(ws: &Workspace) -> copilot_app::config::AppConfig {
    copilot_app::config::AppConfig::load(Some(&ws.config)).unwrap()
}
