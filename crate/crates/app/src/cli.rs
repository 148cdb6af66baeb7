//! The `copilot` command line. Exit codes: 0 success, 1 user error,
//! 2 internal error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use copilot_core::classify::{BinaryDetector, ClassifierKind, StrategyClassifier, TrainConfig};
use copilot_core::corpus::synth::{synth_corpus, SynthSpec};
use copilot_core::corpus::{dedupe, filter_rare_labels, load_records, save_records, split, DatasetSplit, DialogueRecord, RecordFormat};
use copilot_core::pipeline::{
    build_retrieval, run_experiment, save_retrieval, select_threshold, Generator, HttpGenerator, Models, RecommenderSettings,
    TemplateGenerator, CLASSIFIER_DIR, DETECTOR_DIR, INDEX_DIR,
};
use copilot_core::recommend::{HttpScorer, Method, MockScorer, Scorer, ScorerEndpoint};
use copilot_core::textprep::NormalizerConfig;
use copilot_core::Engine;
use thiserror::Error;

use crate::api::{mock_scorer_router, router, AppState};
use crate::config::AppConfig;
use crate::persist::JsonlEventLog;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "copilot", version, about = "Pedagogical strategy copilot")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus (JSONL or CSV by extension).
    SynthData {
        #[arg(long, default_value_t = 150)]
        per_label: usize,
        #[arg(long, default_value_t = 1200)]
        negatives: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the strategy-presence detector on the training split.
    TrainDetector {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
    },
    /// Train the fine-grained strategy classifier on the training split.
    TrainClassifier {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
    },
    /// Build the BM25 index and label prior from the training split.
    BuildIndex {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on the split and report every classifier and recommender on test.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recommend a strategy for a conversation history file.
    Recommend {
        #[arg(long)]
        history_file: PathBuf,
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run the keyword mock scorer as an HTTP service.
    MockScorer {
        #[arg(long, default_value = "127.0.0.1:8090")]
        listen: String,
    },
}

/// Parses arguments, runs the command, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = AppConfig::load(cli.config.as_deref()).map_err(user)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::SynthData { per_label, negatives, out } => {
            let records = synth_corpus(&SynthSpec::uniform(per_label, negatives, config.seed));
            save_records(&out, &records, RecordFormat::from_path(&out)).map_err(internal)?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::TrainDetector { data, out, kind } => {
            let split = training_split(&config, data.as_deref())?;
            let kind = parse_kind(kind.as_deref(), config.detector_kind)?;
            let mut detector: BinaryDetector<f64> =
                BinaryDetector::train(&split.train, kind, &train_config(&config), NormalizerConfig::default()).map_err(internal)?;
            let (p, gold): (Vec<f64>, Vec<usize>) = split
                .validation
                .iter()
                .filter_map(|r| r.binary_label.map(|b| (detector.classifier.predict(&r.tutor_response).probs.get(1), usize::from(b))))
                .unzip();
            let (threshold, f1) = select_threshold(&p, &gold);
            detector.threshold = config.detector_threshold.unwrap_or(threshold);
            let dir = out.unwrap_or_else(|| config.bundle_dir.join(DETECTOR_DIR));
            detector.save(&dir, config.seed).map_err(internal)?;
            println!(
                "detector ({}) saved to {}; threshold {:.2} (validation F1 {f1:.4})",
                kind.as_str(),
                dir.display(),
                detector.threshold
            );
            Ok(())
        }
        Command::TrainClassifier { data, out, kind } => {
            let split = training_split(&config, data.as_deref())?;
            let kind = parse_kind(kind.as_deref(), config.classifier_kind)?;
            let classifier: StrategyClassifier<f64> =
                StrategyClassifier::train(&split.train, kind, &train_config(&config), NormalizerConfig::default()).map_err(internal)?;
            let dir = out.unwrap_or_else(|| config.bundle_dir.join(CLASSIFIER_DIR));
            classifier.save(&dir, config.seed).map_err(internal)?;
            println!("classifier ({}) saved to {}", kind.as_str(), dir.display());
            Ok(())
        }
        Command::BuildIndex { data, out } => {
            let split = training_split(&config, data.as_deref())?;
            let (index, meta) = build_retrieval::<f64>(&split.train, &NormalizerConfig::default()).map_err(user)?;
            let dir = out.unwrap_or_else(|| config.bundle_dir.join(INDEX_DIR));
            save_retrieval(&dir, &index, &meta).map_err(internal)?;
            println!("index over {} histories saved to {}", index.n_docs(), dir.display());
            Ok(())
        }
        Command::Evaluate { data, report } => {
            let records = load_corpus(&config, data.as_deref())?;
            let scorer = build_scorer(&config)?;
            let (rep, _) = run_experiment::<f64>(&records, &config.experiment(), Some(scorer)).map_err(|e| match e {
                copilot_core::pipeline::PipelineError::Config(_) | copilot_core::pipeline::PipelineError::Data(_) => user(e),
                other => internal(other),
            })?;
            let path = report.unwrap_or_else(|| config.report_path.clone());
            std::fs::write(&path, rep.to_json()).map_err(|e| internal(format!("{}: {e}", path.display())))?;
            print!("{}", rep.render_table());
            println!("report written to {}", path.display());
            Ok(())
        }
        Command::Recommend { history_file, method } => {
            let method = match method {
                Some(m) => m.parse::<Method>().map_err(user)?,
                None => config.default_method,
            };
            let history = std::fs::read_to_string(&history_file).map_err(|e| user(format!("{}: {e}", history_file.display())))?;
            let models = load_models(&config)?;
            let rec = models.recommender.recommend(history.trim_end(), method).map_err(internal)?;
            println!("{}", serde_json::to_string_pretty(&rec).expect("recommendation serializes"));
            Ok(())
        }
        Command::Serve { listen } => {
            if let Some(l) = listen {
                config.listen = l;
            }
            serve(config)
        }
        Command::MockScorer { listen } => {
            let rt = runtime()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&listen).await.map_err(|e| internal(format!("bind {listen}: {e}")))?;
                log::info!("mock scorer listening on {listen}");
                axum::serve(listener, mock_scorer_router(MockScorer::default()))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(internal)
            })
        }
    }
}

fn parse_kind(kind: Option<&str>, default: ClassifierKind) -> Result<ClassifierKind, CliError> {
    kind.map_or(Ok(default), |k| k.parse::<ClassifierKind>().map_err(user))
}

fn train_config(config: &AppConfig) -> TrainConfig {
    let mut t = TrainConfig { seed: config.seed, ..TrainConfig::default() };
    t.svm.seed = config.seed;
    t
}

pub fn load_corpus(config: &AppConfig, data: Option<&Path>) -> Result<Vec<DialogueRecord>, CliError> {
    let path = data
        .map(Path::to_path_buf)
        .or_else(|| config.corpus.clone())
        .ok_or_else(|| user("no corpus given (use --data or set `corpus` in the config)"))?;
    load_records(&path, RecordFormat::from_path(&path)).map_err(|e| user(format!("{}: {e}", path.display())))
}

/// Deduplicated, rare-label-filtered, seeded split of the corpus.
pub fn training_split(config: &AppConfig, data: Option<&Path>) -> Result<DatasetSplit, CliError> {
    let records = filter_rare_labels(dedupe(load_corpus(config, data)?), config.min_label_count);
    split(&records, config.ratios(), config.seed).map_err(user)
}

/// Remote scorer if configured, otherwise the keyword mock.
pub fn build_scorer(config: &AppConfig) -> Result<Arc<dyn Scorer<f64>>, CliError> {
    Ok(match &config.scorer_url {
        Some(url) => Arc::new(
            HttpScorer::new(ScorerEndpoint {
                base_url: url.clone(),
                timeout_ms: config.scorer_timeout_ms,
                codec_fingerprint: config.scorer_codec_fingerprint.clone(),
            })
            .map_err(internal)?,
        ),
        None => Arc::new(MockScorer::default()),
    })
}

pub fn build_generator(config: &AppConfig) -> Result<Arc<dyn Generator>, CliError> {
    Ok(match &config.generator_url {
        Some(url) => Arc::new(HttpGenerator::new(url.clone(), Duration::from_millis(config.generator_timeout_ms)).map_err(internal)?),
        None => Arc::new(TemplateGenerator),
    })
}

pub fn load_models(config: &AppConfig) -> Result<Models<f64>, CliError> {
    let settings =
        RecommenderSettings { scorer: Some(build_scorer(config)?), bes: config.bes, weights: config.weights, lpd_mode: config.lpd_mode() };
    let mut models = Models::load(&config.bundle_dir, settings)
        .map_err(|e| internal(format!("cannot load model bundles from {}: {e}", config.bundle_dir.display())))?;
    if let Some(t) = config.detector_threshold {
        models.detector.threshold = t;
    }
    Ok(models)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(internal)
}

/// Builds the engine with persisted sessions restored. Models are not loaded.
pub fn build_engine(config: &AppConfig) -> Result<Arc<Engine>, CliError> {
    let log = JsonlEventLog::open(config.sessions_dir()).map_err(internal)?;
    let restored = log.load_all::<f64>().map_err(internal)?;
    let engine = Arc::new(Engine::new(build_generator(config)?, config.default_method, Some(Arc::new(log))));
    for s in restored {
        engine.sessions().restore(s);
    }
    Ok(engine)
}

/// Binds first so `/health` answers 503 while models load in the background.
pub fn serve(config: AppConfig) -> Result<(), CliError> {
    let engine = build_engine(&config)?;
    let config = Arc::new(config);
    let rt = runtime()?;
    // Keep a handle so the engine (and any blocking HTTP clients) is dropped
    // outside the runtime.
    let keep = engine.clone();
    let result = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen).await.map_err(|e| internal(format!("bind {}: {e}", config.listen)))?;
        log::info!("listening on {}", config.listen);
        let (fail_tx, fail_rx) = tokio::sync::oneshot::channel::<CliError>();
        let loader_engine = engine.clone();
        let loader_config = config.clone();
        tokio::task::spawn_blocking(move || match load_models(&loader_config) {
            Ok(m) => {
                loader_engine.set_models(m);
                log::info!("models loaded");
            }
            Err(e) => {
                let _ = fail_tx.send(e);
            }
        });
        let app = router(AppState { engine, config });
        let (err_tx, mut err_rx) = tokio::sync::mpsc::channel::<CliError>(1);
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    Ok(e) = fail_rx => { let _ = err_tx.send(e).await; }
                }
            })
            .await
            .map_err(internal)?;
        match err_rx.try_recv() {
            Ok(e) => Err(e),
            Err(_) => Ok(()),
        }
    });
    drop(rt);
    drop(keep);
    result
}
