use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::Generator;
use super::{EventSink, PipelineError, SessionEvent, SessionState, Speaker, Turn, VerificationOutcome};
use crate::classify::bundle::{read_json, BundleError};
use crate::classify::{classify_strategy, detect_binary, BinaryDetector, StrategyClassifier};
use crate::corpus::{label_prior, DialogueRecord, LabelCodec, StrategyLabel};
use crate::features::{Embedder, HashedEmbedder};
use crate::prob::ProbDist;
use crate::recommend::{LpdMode, Method, Recommendation, Recommender, Scorer, VoteWeights};
use crate::retrieve::{BesConfig, Bm25Index};
use crate::scalar::Scalar;
use crate::textprep::{self, normalize, NormalizerConfig};

pub const DETECTOR_DIR: &str = "detector";
pub const CLASSIFIER_DIR: &str = "classifier";
pub const INDEX_DIR: &str = "index";

/// Retrieval side of the models: BM25 index plus the label prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct IndexMeta<F> {
    pub format_version: u32,
    pub normalizer: NormalizerConfig,
    pub stopword_hash: String,
    pub codec: LabelCodec,
    pub prior: ProbDist<F>,
}

/// Builds the index over the normalized histories of labeled records.
pub fn build_retrieval<F: Scalar>(
    records: &[DialogueRecord],
    normalizer: &NormalizerConfig,
) -> Result<(Bm25Index<F>, IndexMeta<F>), PipelineError> {
    let labeled: Vec<(&DialogueRecord, StrategyLabel)> = records.iter().filter_map(|r| r.strategy.map(|s| (r, s))).collect();
    let histories: Vec<Vec<String>> = labeled.iter().map(|(r, _)| normalize(&r.conversation_history, normalizer)).collect();
    let labels: Vec<StrategyLabel> = labeled.iter().map(|(_, s)| *s).collect();
    let codec = LabelCodec::fit(records).map_err(|e| PipelineError::Data(e.to_string()))?;
    let prior = label_prior(records, &codec).map_err(|e| PipelineError::Data(e.to_string()))?;
    let index = crate::retrieve::build_index(&histories, &labels).map_err(|e| PipelineError::Data(e.to_string()))?;
    let meta = IndexMeta {
        format_version: crate::classify::bundle::BUNDLE_FORMAT_VERSION,
        normalizer: *normalizer,
        stopword_hash: textprep::stopword_hash().to_string(),
        codec,
        prior,
    };
    Ok((index, meta))
}

pub fn save_retrieval<F: Scalar>(dir: &Path, index: &Bm25Index<F>, meta: &IndexMeta<F>) -> Result<(), BundleError> {
    let io = |source| BundleError::Io { path: dir.display().to_string(), source };
    fs::create_dir_all(dir).map_err(io)?;
    for (name, text) in [("index.json", serde_json::to_string(index)), ("meta.json", serde_json::to_string_pretty(meta))] {
        let path = dir.join(name);
        let text = text.map_err(|source| BundleError::Json { path: path.display().to_string(), source })?;
        fs::write(&path, text).map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}

pub fn load_retrieval<F: Scalar>(dir: &Path) -> Result<(Bm25Index<F>, IndexMeta<F>), BundleError> {
    let meta: IndexMeta<F> = read_json(&dir.join("meta.json"))?;
    if meta.stopword_hash != textprep::stopword_hash() {
        return Err(BundleError::StopwordMismatch { expected: textprep::stopword_hash().into(), found: meta.stopword_hash });
    }
    if meta.prior.len() != meta.codec.len() {
        return Err(BundleError::Inconsistent("prior and codec lengths differ".into()));
    }
    let index: Bm25Index<F> = read_json(&dir.join("index.json"))?;
    Ok((index, meta))
}

/// Recommender knobs that are not learned from data.
#[derive(Clone)]
pub struct RecommenderSettings<F: Scalar> {
    pub scorer: Option<Arc<dyn Scorer<F>>>,
    pub bes: BesConfig,
    pub weights: VoteWeights,
    pub lpd_mode: LpdMode,
}

impl<F: Scalar> Default for RecommenderSettings<F> {
    fn default() -> Self {
        Self { scorer: None, bes: BesConfig::default(), weights: VoteWeights::default(), lpd_mode: LpdMode::Argmax }
    }
}

/// Immutable model snapshot shared by every request.
pub struct Models<F: Scalar> {
    pub detector: BinaryDetector<F>,
    pub classifier: StrategyClassifier<F>,
    pub recommender: Recommender<F>,
    /// Content hashes of the loaded components.
    pub hashes: BTreeMap<String, String>,
}

fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("models serialize");
    hex::encode(Sha256::digest(&bytes))[..16].to_string()
}

impl<F: Scalar> Models<F> {
    pub fn new(
        detector: BinaryDetector<F>,
        classifier: StrategyClassifier<F>,
        index: Bm25Index<F>,
        meta: IndexMeta<F>,
        settings: RecommenderSettings<F>,
    ) -> Self {
        let mut hashes = BTreeMap::new();
        hashes.insert("detector".to_string(), digest(&(&detector.classifier.vectorizer, &detector.classifier.model)));
        hashes.insert("classifier".to_string(), digest(&(&classifier.classifier.vectorizer, &classifier.classifier.model)));
        hashes.insert("index".to_string(), digest(&(&index, &meta)));
        let embedder: Arc<dyn Embedder<F>> = Arc::new(HashedEmbedder::default());
        let recommender = Recommender {
            index,
            embedder,
            prior: meta.prior,
            codec: meta.codec,
            normalizer: meta.normalizer,
            scorer: settings.scorer,
            bes: settings.bes,
            weights: settings.weights,
            lpd_mode: settings.lpd_mode,
        };
        Self { detector, classifier, recommender, hashes }
    }

    /// Loads `detector/`, `classifier/` and `index/` under `dir`.
    pub fn load(dir: &Path, settings: RecommenderSettings<F>) -> Result<Self, BundleError> {
        let (detector, _) = BinaryDetector::load(&dir.join(DETECTOR_DIR))?;
        let (classifier, _) = StrategyClassifier::load(&dir.join(CLASSIFIER_DIR))?;
        let (index, meta) = load_retrieval(&dir.join(INDEX_DIR))?;
        Ok(Self::new(detector, classifier, index, meta, settings))
    }
}

/// Live sessions, each behind its own lock.
pub struct SessionRegistry<F: Scalar> {
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState<F>>>>>,
    sink: Option<Arc<dyn EventSink<F>>>,
}

impl<F: Scalar> SessionRegistry<F> {
    pub fn new(sink: Option<Arc<dyn EventSink<F>>>) -> Self {
        Self { sessions: RwLock::new(HashMap::new()), sink }
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<SessionState<F>>>, PipelineError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| PipelineError::SessionNotFound(id.to_string()))
    }

    pub fn create(&self, id: &str, timestamp: u64) -> Result<(), PipelineError> {
        let mut map = self.sessions.write();
        if map.contains_key(id) {
            return Err(PipelineError::InvalidLog(format!("session {id} already exists")));
        }
        let event = SessionEvent::Created { session_id: id.to_string(), timestamp };
        if let Some(sink) = &self.sink {
            sink.append(id, std::slice::from_ref(&event))?;
        }
        map.insert(id.to_string(), Arc::new(Mutex::new(SessionState::new(id, timestamp))));
        Ok(())
    }

    /// Installs a session rebuilt from its log without writing events.
    pub fn restore(&self, state: SessionState<F>) {
        self.sessions.write().insert(state.session_id.clone(), Arc::new(Mutex::new(state)));
    }

    pub fn get(&self, id: &str) -> Result<SessionState<F>, PipelineError> {
        Ok(self.slot(id)?.lock().clone())
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Runs `f` under the session lock; its events are persisted and then
    /// applied before the lock is released.
    pub fn update<R>(
        &self,
        id: &str,
        f: impl FnOnce(&SessionState<F>) -> Result<(Vec<SessionEvent<F>>, R), PipelineError>,
    ) -> Result<R, PipelineError> {
        let slot = self.slot(id)?;
        let mut state = slot.lock();
        let (events, out) = f(&state)?;
        if let Some(sink) = &self.sink {
            sink.append(id, &events)?;
        }
        for e in &events {
            state.apply(e)?;
        }
        Ok(out)
    }
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// The copilot: model snapshot, sessions and the draft generator.
pub struct Engine<F: Scalar> {
    models: RwLock<Option<Arc<Models<F>>>>,
    sessions: SessionRegistry<F>,
    generator: Arc<dyn Generator>,
    default_method: Method,
    clock: Box<dyn Fn() -> u64 + Send + Sync>,
}

impl<F: Scalar> Engine<F> {
    pub fn new(generator: Arc<dyn Generator>, default_method: Method, sink: Option<Arc<dyn EventSink<F>>>) -> Self {
        Self { models: RwLock::new(None), sessions: SessionRegistry::new(sink), generator, default_method, clock: Box::new(now_millis) }
    }

    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Swaps the model snapshot; requests in flight keep the old one.
    pub fn set_models(&self, models: Models<F>) {
        *self.models.write() = Some(Arc::new(models));
    }

    pub fn models(&self) -> Result<Arc<Models<F>>, PipelineError> {
        self.models.read().clone().ok_or(PipelineError::ModelNotLoaded)
    }

    pub fn is_ready(&self) -> bool {
        self.models.read().is_some()
    }

    pub fn default_method(&self) -> Method {
        self.default_method
    }

    pub fn sessions(&self) -> &SessionRegistry<F> {
        &self.sessions
    }

    pub fn create_session(&self) -> Result<String, PipelineError> {
        let id = uuid::Uuid::new_v4().to_string();
        self.create_session_with_id(&id)?;
        Ok(id)
    }

    pub fn create_session_with_id(&self, id: &str) -> Result<(), PipelineError> {
        self.sessions.create(id, (self.clock)())
    }

    pub fn session(&self, id: &str) -> Result<SessionState<F>, PipelineError> {
        self.sessions.get(id)
    }

    /// Appends a student message and recommends a strategy for the history.
    pub fn copilot_turn(&self, id: &str, message: &str, method: Option<Method>) -> Result<Recommendation<F>, PipelineError> {
        if message.trim().is_empty() {
            return Err(PipelineError::EmptyMessage);
        }
        let models = self.models()?;
        let method = method.unwrap_or(self.default_method);
        let now = (self.clock)();
        self.sessions.update(id, |s| {
            let turn = Turn { speaker: Speaker::Student, text: message.to_string(), timestamp: s.next_timestamp(now) };
            let mut turns = s.turns.clone();
            turns.push(turn.clone());
            let rec = models.recommender.recommend(&super::serialize_history(&turns), method)?;
            Ok((vec![SessionEvent::Turn { turn }, SessionEvent::Recommended { recommendation: rec.clone() }], rec))
        })
    }

    /// Student turns go through [`Engine::copilot_turn`]; tutor turns are
    /// appended as-is.
    pub fn add_turn(
        &self,
        id: &str,
        speaker: Speaker,
        text: &str,
        method: Option<Method>,
    ) -> Result<Option<Recommendation<F>>, PipelineError> {
        match speaker {
            Speaker::Student => self.copilot_turn(id, text, method).map(Some),
            Speaker::Tutor => {
                if text.trim().is_empty() {
                    return Err(PipelineError::EmptyMessage);
                }
                let now = (self.clock)();
                self.sessions.update(id, |s| {
                    let turn = Turn { speaker, text: text.to_string(), timestamp: s.next_timestamp(now) };
                    Ok((vec![SessionEvent::Turn { turn }], None))
                })
            }
        }
    }

    /// Detects and classifies a tutor response against the pending
    /// recommendation, then appends the tutor turn and the outcome.
    pub fn verify_response(&self, id: &str, response: &str) -> Result<VerificationOutcome, PipelineError> {
        let models = self.models()?;
        let now = (self.clock)();
        self.sessions.update(id, |s| {
            let rec = s.last_recommendation.as_ref().ok_or_else(|| PipelineError::NoRecommendationPending(id.to_string()))?;
            let outcome = verify_with(&models, rec.chosen, response)?;
            let turn = Turn { speaker: Speaker::Tutor, text: response.to_string(), timestamp: s.next_timestamp(now) };
            Ok((vec![SessionEvent::Turn { turn }, SessionEvent::Verified { outcome: outcome.clone() }], outcome))
        })
    }

    /// Drafts a tutor response for `strategy` from the session history.
    pub fn generate_draft(&self, id: &str, strategy: StrategyLabel) -> Result<String, PipelineError> {
        let history = self.sessions.get(id)?.history();
        self.generator.generate(&history, strategy).map_err(|e| PipelineError::GeneratorUnavailable(e.to_string()))
    }

    pub fn detect(&self, text: &str) -> Result<(u8, ProbDist<F>), PipelineError> {
        let models = self.models()?;
        Ok(detect_binary(Some(&models.detector), text)?)
    }

    pub fn classify(&self, text: &str) -> Result<(StrategyLabel, ProbDist<F>), PipelineError> {
        let models = self.models()?;
        Ok(classify_strategy(Some(&models.classifier), text)?)
    }

    pub fn recommend(&self, history: &str, method: Option<Method>) -> Result<Recommendation<F>, PipelineError> {
        let models = self.models()?;
        Ok(models.recommender.recommend(history, method.unwrap_or(self.default_method))?)
    }
}

/// detect → classify (only when detected) → compare.
pub fn verify_with<F: Scalar>(
    models: &Models<F>,
    recommended: StrategyLabel,
    response: &str,
) -> Result<VerificationOutcome, PipelineError> {
    let (detected, _) = detect_binary(Some(&models.detector), response)?;
    let classified = if detected == 1 { Some(classify_strategy(Some(&models.classifier), response)?.0) } else { None };
    Ok(VerificationOutcome::new(recommended, response.to_string(), detected, classified))
}
