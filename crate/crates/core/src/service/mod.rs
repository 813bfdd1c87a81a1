//! Adaptive questioning sessions for real users: a content-addressed
//! catalog store, append-only session logs, and the HTTP API over them.

mod http;

pub use http::{router, serve};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::belief::{
    differential_entropy_estimate, halfspace_depth_estimate, hit_and_run_sample_from, predictive_distribution,
    sample_answers, BeliefState, Catalog, GaussianPrior, PosteriorSampleSet, Question, SamplerSettings,
    DEFAULT_DEPTH_RESTARTS,
};
use crate::channel::{compute_capacity, ChannelSpec, PredictiveDistribution, DEFAULT_CAPACITY_TOL};
use crate::error::{Error, Result};
use crate::selection::{
    construct_question_continuum, entropy_pursuit_select, knowledge_gradient_select, project_predictive,
    ContinuumOptions, FeasibleBox, PolicyConfig, PolicyKind,
};
use crate::simulation::{derive_seed, write_atomic, PriorSpec};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "ELICIT_DATA_DIR";

/// Alternatives listed in an acknowledgement.
pub const TOP_ALTERNATIVES: usize = 5;
/// Posterior draws included in the state's planar projection.
pub const PROJECTION_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogInfo {
    pub catalog_id: String,
    pub count: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub catalog_id: String,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub policy: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub step: usize,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownAlternative {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub title: Option<String>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub session_id: String,
    pub step: usize,
    pub token: String,
    /// Listed in choice order: `choice = 1` picks the first.
    pub alternatives: Vec<ShownAlternative>,
    pub predictive: Vec<f64>,
    /// Catalog indices the policy chose from; empty for synthesized questions.
    pub subsample: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRequest {
    pub token: String,
    /// 1-based position of the chosen alternative.
    pub choice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAlternative {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub title: Option<String>,
    /// Posterior-mean utility.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseAck {
    pub session_id: String,
    pub token: String,
    pub choice: usize,
    /// Number of answered questions after this response.
    pub step: usize,
    pub entropy_bits: f64,
    pub entropy_se: f64,
    /// Posterior fraction of draws whose answer to the question is `choice`.
    pub chosen_mass: f64,
    pub top_alternatives: Vec<RankedAlternative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub alternatives: Vec<String>,
    pub choice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub step: usize,
    pub entropy_bits: f64,
    pub entropy_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub catalog_id: String,
    pub policy: PolicyKind,
    pub step: usize,
    pub pending_token: Option<String>,
    pub history: Vec<HistoryEntry>,
    /// One point per step, starting with the prior.
    pub entropy: Vec<EntropyPoint>,
    pub ranking: Vec<RankedAlternative>,
    pub posterior_mean: Vec<f64>,
    /// Draws projected onto their two leading principal axes.
    pub projection: Vec<[f64; 2]>,
    pub events: Vec<serde_json::Value>,
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Created {
        session_id: String,
        created_at: u64,
        request: SessionRequest,
    },
    QuestionServed {
        at: u64,
        step: usize,
        token: String,
        question: Question,
        predictive: PredictiveDistribution,
        subsample: Vec<usize>,
    },
    Response {
        at: u64,
        step: usize,
        token: String,
        signal: usize,
        /// A draw with positive density under the updated posterior, used
        /// to start the next chain.
        warm: Option<Vec<f64>>,
        ack: ResponseAck,
    },
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Pending {
    token: String,
    question: Question,
    predictive: PredictiveDistribution,
    subsample: Vec<usize>,
}

struct Session {
    id: String,
    request: SessionRequest,
    catalog: Arc<Catalog>,
    belief: BeliefState,
    pending: Option<Pending>,
    answered: HashMap<String, ResponseAck>,
    entropy: Vec<EntropyPoint>,
    warm: Option<Vec<f64>>,
    /// Draws for the current step, recomputed deterministically on demand.
    samples: Option<PosteriorSampleSet>,
    events: Vec<serde_json::Value>,
    log: PathBuf,
}

impl Session {
    fn step(&self) -> usize {
        self.belief.history().len()
    }

    fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::Created { .. } => return Err(Error::Conflict("duplicate creation event".into())),
            Event::QuestionServed {
                step,
                token,
                question,
                predictive,
                subsample,
                ..
            } => {
                if *step != self.step() || self.pending.is_some() {
                    return Err(Error::Conflict(format!("question event for step {step} at step {}", self.step())));
                }
                self.pending = Some(Pending {
                    token: token.clone(),
                    question: question.clone(),
                    predictive: predictive.clone(),
                    subsample: subsample.clone(),
                });
            }
            Event::Response {
                step,
                token,
                signal,
                warm,
                ack,
                ..
            } => {
                let pending = self
                    .pending
                    .take()
                    .filter(|p| &p.token == token && *step == self.step())
                    .ok_or_else(|| Error::Conflict("response without a matching question".into()))?;
                self.belief = self.belief.update(&pending.question, *signal, &pending.predictive)?;
                self.warm = warm.clone();
                self.samples = None;
                self.entropy.push(EntropyPoint {
                    step: ack.step,
                    entropy_bits: ack.entropy_bits,
                    entropy_se: ack.entropy_se,
                });
                self.answered.insert(token.clone(), ack.clone());
            }
        }
        self.events.push(serde_json::to_value(event)?);
        Ok(())
    }

    fn append(&self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.log)
            .map_err(|e| Error::io(&self.log, e))?;
        f.write_all(&line).and_then(|_| f.sync_data()).map_err(|e| Error::io(&self.log, e))
    }

    fn sample_belief(&self, belief: &BeliefState, step: usize, warm: Option<&[f64]>) -> Result<PosteriorSampleSet> {
        let cfg = self.request.policy.samples;
        let warm = match warm {
            Some(w) => Some(PosteriorSampleSet::from_draws(w.len(), &[w.to_vec()])?),
            None => None,
        };
        let settings = SamplerSettings {
            count: cfg.count,
            burn_in: cfg.burn_in,
            thinning: cfg.thinning,
            seed: derive_seed(self.request.policy.seed, "sampler", &[step as u64]),
        };
        hit_and_run_sample_from(belief, settings, warm.as_ref())
    }

    fn samples(&mut self) -> Result<&PosteriorSampleSet> {
        if self.samples.is_none() {
            self.samples = Some(self.sample_belief(&self.belief, self.step(), self.warm.as_deref())?);
        }
        Ok(self.samples.as_ref().expect("just filled"))
    }

    fn select(&mut self) -> Result<(Question, PredictiveDistribution, Vec<usize>)> {
        let policy = self.request.policy.clone();
        let seed = derive_seed(policy.seed, "decision", &[self.step() as u64]);
        let catalog = Arc::clone(&self.catalog);
        let belief = self.belief.clone();
        let samples = self.samples()?;
        let (question, subsample) = match policy.policy {
            PolicyKind::EntropyPursuit => {
                let s = entropy_pursuit_select(&belief, samples, &catalog, &policy, seed)?;
                (s.question, s.subsample)
            }
            PolicyKind::KnowledgeGradient => {
                let s = knowledge_gradient_select(&belief, samples, &catalog, &policy, seed)?;
                (s.question, s.subsample)
            }
            PolicyKind::Continuum => {
                let analysis = compute_capacity(belief.channel(), DEFAULT_CAPACITY_TOL)?;
                let options = ContinuumOptions {
                    depth_restarts: DEFAULT_DEPTH_RESTARTS,
                    seed,
                };
                let depth = halfspace_depth_estimate(samples, options.depth_restarts, seed);
                let target = project_predictive(&analysis.optimal_u, depth, policy.epsilon())?;
                let bx = FeasibleBox::unit_cube(&catalog.feature_mean());
                (construct_question_continuum(samples, &target.u, &bx, &options)?.question, Vec::new())
            }
        };
        let predictive = predictive_distribution(samples, &question)?;
        Ok((question, predictive, subsample))
    }

    fn ranking(&self, mean: &[f64], limit: usize) -> Vec<RankedAlternative> {
        let mut scored: Vec<(usize, f64)> = self
            .catalog
            .alternatives()
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.features.iter().zip(mean).map(|(x, t)| x * t).sum()))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(limit)
            .map(|(i, score)| {
                let a = self.catalog.get(i);
                RankedAlternative {
                    id: a.id.clone(),
                    title: a.title.clone(),
                    score,
                }
            })
            .collect()
    }
}

/// Coordinates of `points` on the two leading principal axes of `samples`.
fn principal_projection(samples: &PosteriorSampleSet, points: &PosteriorSampleSet) -> Vec<[f64; 2]> {
    let d = samples.dim();
    let mean = samples.mean();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in samples.iter() {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| eig.eigenvectors.column(order[k]).iter().copied().collect::<Vec<f64>>();
    let (a, b) = (axis(0), axis(1));
    points
        .iter()
        .map(|x| {
            let c: Vec<f64> = x.iter().zip(&mean).map(|(p, m)| p - m).collect();
            [
                c.iter().zip(&a).map(|(p, q)| p * q).sum(),
                c.iter().zip(&b).map(|(p, q)| p * q).sum(),
            ]
        })
        .collect()
}

/// Session and catalog state rooted at a data directory.
pub struct Service {
    data_dir: PathBuf,
    catalogs: RwLock<HashMap<String, Arc<Catalog>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn token_for(session_id: &str, step: usize) -> String {
    let digest = Sha256::digest(format!("{session_id}|{step}").as_bytes());
    hex::encode(&digest[..8])
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Service {
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self> {
        let data_dir = data_dir.into();
        for sub in ["catalogs", "sessions"] {
            let p = data_dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self {
            data_dir,
            catalogs: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
        })
    }

    /// `$ELICIT_DATA_DIR` when set, otherwise `default`.
    pub fn resolve_data_dir(default: impl Into<PathBuf>) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV).map_or_else(|| default.into(), PathBuf::from)
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn catalog_path(&self, id: &str) -> PathBuf {
        self.data_dir.join("catalogs").join(format!("{id}.jsonl"))
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.data_dir.join("sessions").join(format!("{id}.jsonl"))
    }

    /// Validates and stores a JSONL catalog under its content hash.
    /// Re-ingesting identical content returns the same id.
    pub fn ingest_catalog(&self, text: &str) -> Result<CatalogInfo> {
        let catalog = Catalog::from_jsonl(text)?;
        let id = catalog.content_hash();
        let path = self.catalog_path(&id);
        if !path.exists() {
            write_atomic(&path, catalog.to_jsonl().as_bytes())?;
        }
        let info = CatalogInfo {
            catalog_id: id.clone(),
            count: catalog.len(),
            d: catalog.dim(),
        };
        self.catalogs.write().expect("catalog lock").insert(id, Arc::new(catalog));
        Ok(info)
    }

    pub fn catalog(&self, id: &str) -> Result<Arc<Catalog>> {
        if let Some(c) = self.catalogs.read().expect("catalog lock").get(id) {
            return Ok(Arc::clone(c));
        }
        let path = self.catalog_path(id);
        if !valid_id(id) || !path.exists() {
            return Err(Error::NotFound(format!("catalog {id}")));
        }
        let c = Arc::new(Catalog::load(&path)?);
        self.catalogs.write().expect("catalog lock").insert(id.to_string(), Arc::clone(&c));
        Ok(c)
    }

    pub fn create_session(&self, request: SessionRequest) -> Result<SessionCreated> {
        let catalog = self.catalog(&request.catalog_id)?;
        let session_id = hex::encode(rand::random::<[u8; 16]>());
        let mut session = self.build_session(&session_id, request.clone(), catalog)?;
        let event = Event::Created {
            session_id: session_id.clone(),
            created_at: now_ms(),
            request,
        };
        session.append(&event)?;
        session.events.push(serde_json::to_value(&event)?);
        let entropy_bits = session.entropy[0].entropy_bits;
        self.sessions
            .write()
            .expect("session lock")
            .insert(session_id.clone(), Arc::new(Mutex::new(session)));
        Ok(SessionCreated {
            session_id,
            step: 0,
            entropy_bits,
        })
    }

    fn build_session(&self, id: &str, request: SessionRequest, catalog: Arc<Catalog>) -> Result<Session> {
        let channel = request.channel.build()?;
        if channel.m() != request.policy.m {
            return Err(Error::invalid(format!(
                "channel has m = {} but the policy asks for m = {}",
                channel.m(),
                request.policy.m
            )));
        }
        request.policy.validate(Some(catalog.len()))?;
        let prior = match &request.prior {
            PriorSpec::FitToCatalog { sample_size, ridge } => GaussianPrior::fit_to_catalog(&catalog, *sample_size, *ridge)?,
            PriorSpec::Isotropic { variance } => GaussianPrior::isotropic(catalog.dim(), *variance)?,
            PriorSpec::Explicit { mean, covariance } => GaussianPrior::new(mean.clone(), covariance.clone())?,
        };
        if prior.dim() != catalog.dim() {
            return Err(Error::invalid(format!(
                "prior dimension {} does not match the catalog dimension {}",
                prior.dim(),
                catalog.dim()
            )));
        }
        let entropy = vec![EntropyPoint {
            step: 0,
            entropy_bits: prior.entropy_bits(),
            entropy_se: 0.0,
        }];
        Ok(Session {
            id: id.to_string(),
            request,
            catalog,
            belief: BeliefState::new(prior, channel),
            pending: None,
            answered: HashMap::new(),
            entropy,
            warm: None,
            samples: None,
            events: Vec::new(),
            log: self.session_path(id),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        if let Some(s) = self.sessions.read().expect("session lock").get(id) {
            return Ok(Arc::clone(s));
        }
        if !valid_id(id) {
            return Err(Error::NotFound(format!("session {id}")));
        }
        let mut map = self.sessions.write().expect("session lock");
        if let Some(s) = map.get(id) {
            return Ok(Arc::clone(s));
        }
        let session = Arc::new(Mutex::new(self.replay(id)?));
        map.insert(id.to_string(), Arc::clone(&session));
        Ok(session)
    }

    /// Rebuilds a session from its log.
    fn replay(&self, id: &str) -> Result<Session> {
        let path = self.session_path(id);
        let file = std::fs::File::open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("session {id}")),
            _ => Error::io(&path, e),
        })?;
        let mut session: Option<Session> = None;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = serde_json::from_str(&line)?;
            match (&mut session, event) {
                (None, event @ Event::Created { .. }) => {
                    let Event::Created { request, .. } = &event else { unreachable!() };
                    let catalog = self.catalog(&request.catalog_id)?;
                    let mut s = self.build_session(id, request.clone(), catalog)?;
                    s.events.push(serde_json::to_value(&event)?);
                    session = Some(s);
                }
                (Some(s), e) => s.apply(&e)?,
                (None, _) => return Err(Error::Conflict(format!("session log {id} does not start with creation"))),
            }
        }
        session.ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    /// The open question for the current step, choosing one if none is open.
    /// Repeated calls return the same question and token.
    pub fn next_question(&self, id: &str) -> Result<QuestionView> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session mutex");
        if s.pending.is_none() {
            let (question, predictive, subsample) = s.select()?;
            let event = Event::QuestionServed {
                at: now_ms(),
                step: s.step(),
                token: token_for(&s.id, s.step()),
                question,
                predictive,
                subsample,
            };
            s.append(&event)?;
            s.apply(&event)?;
        }
        let p = s.pending.as_ref().expect("pending question");
        Ok(QuestionView {
            session_id: s.id.clone(),
            step: s.step(),
            token: p.token.clone(),
            alternatives: p
                .question
                .alternatives()
                .iter()
                .map(|a| ShownAlternative {
                    id: a.id.clone(),
                    title: a.title.clone(),
                    features: a.features.clone(),
                })
                .collect(),
            predictive: p.predictive.weights().to_vec(),
            subsample: p.subsample.clone(),
        })
    }

    /// Records an answer. Resubmitting an answered token returns the
    /// original acknowledgement; any other token is a conflict.
    pub fn submit_response(&self, id: &str, response: &ResponseRequest) -> Result<ResponseAck> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session mutex");
        if let Some(ack) = s.answered.get(&response.token) {
            return Ok(ack.clone());
        }
        let pending = s
            .pending
            .as_ref()
            .filter(|p| p.token == response.token)
            .ok_or_else(|| Error::Conflict(format!("token {} is not the open question", response.token)))?;
        let m = pending.question.m();
        if response.choice == 0 || response.choice > m {
            return Err(Error::invalid(format!("choice must be between 1 and {m}")));
        }
        let signal = response.choice - 1;
        let question = pending.question.clone();
        let token = pending.token.clone();
        let next = s.belief.update(&question, signal, &pending.predictive)?;
        let warm = s
            .samples()?
            .iter()
            .find(|x| next.log_unnormalized_posterior(x).is_finite())
            .map(|x| x.to_vec());
        let step = s.step() + 1;
        let samples = s.sample_belief(&next, step, warm.as_deref())?;
        let entropy = differential_entropy_estimate(&next, &samples)?;
        let chosen = sample_answers(&samples, &question)?.iter().filter(|&&z| z == signal).count();
        let ack = ResponseAck {
            session_id: s.id.clone(),
            token: token.clone(),
            choice: response.choice,
            step,
            entropy_bits: entropy.bits,
            entropy_se: entropy.se,
            chosen_mass: chosen as f64 / samples.len() as f64,
            top_alternatives: s.ranking(&samples.mean(), TOP_ALTERNATIVES),
        };
        let event = Event::Response {
            at: now_ms(),
            step: step - 1,
            token,
            signal,
            warm,
            ack: ack.clone(),
        };
        s.append(&event)?;
        s.apply(&event)?;
        s.samples = Some(samples);
        Ok(ack)
    }

    pub fn state(&self, id: &str) -> Result<StateView> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session mutex");
        let samples = s.samples()?.clone();
        let posterior_mean = samples.mean();
        Ok(StateView {
            session_id: s.id.clone(),
            catalog_id: s.request.catalog_id.clone(),
            policy: s.request.policy.policy,
            step: s.step(),
            pending_token: s.pending.as_ref().map(|p| p.token.clone()),
            history: s
                .belief
                .history()
                .iter()
                .enumerate()
                .map(|(k, r)| HistoryEntry {
                    step: k + 1,
                    alternatives: r.question.alternatives().iter().map(|a| a.id.clone()).collect(),
                    choice: r.signal + 1,
                })
                .collect(),
            entropy: s.entropy.clone(),
            ranking: s.ranking(&posterior_mean, usize::MAX),
            projection: principal_projection(&samples, &samples.spread(PROJECTION_POINTS)),
            posterior_mean,
            events: s.events.clone(),
        })
    }

    /// The session's current belief.
    pub fn belief(&self, id: &str) -> Result<BeliefState> {
        let session = self.session(id)?;
        let s = session.lock().expect("session mutex");
        Ok(s.belief.clone())
    }

    /// Drops in-memory sessions so that the next access replays the logs.
    pub fn evict_sessions(&self) {
        self.sessions.write().expect("session lock").clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::SamplingConfig;

    fn catalog_text() -> String {
        (0..12)
            .map(|i| {
                let a = i as f64 * 0.5;
                format!("{{\"id\": \"item{i}\", \"features\": [{}, {}]}}\n", a.cos(), a.sin())
            })
            .collect()
    }

    fn request(catalog_id: &str, alpha: f64) -> SessionRequest {
        SessionRequest {
            catalog_id: catalog_id.to_string(),
            channel: ChannelSpec::symmetric(2, alpha),
            prior: PriorSpec::Isotropic { variance: 1.0 },
            policy: PolicyConfig {
                subsample_size: 6,
                seed: 3,
                samples: SamplingConfig {
                    count: 400,
                    burn_in: 100,
                    thinning: 2,
                },
                ..PolicyConfig::default()
            },
        }
    }

    fn setup(alpha: f64) -> (tempfile::TempDir, Service, String) {
        let dir = tempfile::tempdir().unwrap();
        let svc = Service::open(dir.path()).unwrap();
        let cat = svc.ingest_catalog(&catalog_text()).unwrap();
        let id = svc.create_session(request(&cat.catalog_id, alpha)).unwrap().session_id;
        (dir, svc, id)
    }

    #[test]
    fn ingestion_is_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let svc = Service::open(dir.path()).unwrap();
        let a = svc.ingest_catalog(&catalog_text()).unwrap();
        let b = svc.ingest_catalog(&catalog_text()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.count, a.d), (12, 2));
        assert!(svc.catalog_path(&a.catalog_id).exists());
    }

    #[test]
    fn creation_validates_and_yields_distinct_ids() {
        let (_dir, svc, id) = setup(0.7);
        assert_eq!(svc.belief(&id).unwrap().dim(), 2);
        let st = svc.state(&id).unwrap();
        assert!((st.entropy[0].entropy_bits - GaussianPrior::isotropic(2, 1.0).unwrap().entropy_bits()).abs() < 1e-12);
        let catalog_id = st.catalog_id.clone();
        let other = svc.create_session(request(&catalog_id, 0.7)).unwrap().session_id;
        assert_ne!(id, other);
        let mut bad = request(&catalog_id, 0.7);
        bad.prior = PriorSpec::Explicit {
            mean: vec![0.0; 3],
            covariance: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        };
        assert!(matches!(svc.create_session(bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn replay_reconstructs_state() {
        let (dir, svc, id) = setup(0.7);
        for k in 0..3 {
            let q = svc.next_question(&id).unwrap();
            assert_eq!(q.step, k);
            svc.submit_response(&id, &ResponseRequest { token: q.token, choice: 1 + k % 2 }).unwrap();
        }
        let pending = svc.next_question(&id).unwrap();
        let before = svc.state(&id).unwrap();

        let fresh = Service::open(dir.path()).unwrap();
        let after = fresh.state(&id).unwrap();
        assert_eq!(before, after);
        assert_eq!(fresh.next_question(&id).unwrap(), pending);
        assert_eq!(after.step, 3);
        assert_eq!(after.entropy.len(), 4);
        assert_eq!(after.events.len(), 1 + 3 * 2 + 1);
    }

    #[test]
    fn tokens_are_idempotent_and_checked() {
        let (_dir, svc, id) = setup(0.7);
        let q = svc.next_question(&id).unwrap();
        assert_eq!(svc.next_question(&id).unwrap(), q);
        let bad = ResponseRequest {
            token: q.token.clone(),
            choice: 3,
        };
        assert!(matches!(svc.submit_response(&id, &bad), Err(Error::InvalidArgument(_))));
        let ok = ResponseRequest {
            token: q.token.clone(),
            choice: 2,
        };
        let ack = svc.submit_response(&id, &ok).unwrap();
        assert_eq!(ack.step, 1);
        assert_eq!(ack.top_alternatives.len(), TOP_ALTERNATIVES);
        let again = ResponseRequest {
            token: q.token.clone(),
            choice: 1,
        };
        assert_eq!(svc.submit_response(&id, &again).unwrap(), ack);
        assert_ne!(svc.next_question(&id).unwrap().token, q.token);
        let stale = ResponseRequest {
            token: "0000".into(),
            choice: 1,
        };
        assert!(matches!(svc.submit_response(&id, &stale), Err(Error::Conflict(_))));
        assert!(matches!(svc.state("nope"), Err(Error::NotFound(_))));
        assert!(matches!(svc.state("../etc"), Err(Error::NotFound(_))));
    }

    #[test]
    fn noiseless_choice_has_full_mass() {
        let (_dir, svc, id) = setup(1.0);
        for k in 0..3 {
            let q = svc.next_question(&id).unwrap();
            let ack = svc
                .submit_response(&id, &ResponseRequest { token: q.token, choice: 1 + k % 2 })
                .unwrap();
            assert_eq!(ack.chosen_mass, 1.0);
        }
    }

    #[test]
    fn ranking_orders_by_posterior_mean_utility() {
        let (_dir, svc, id) = setup(0.7);
        let st = svc.state(&id).unwrap();
        assert_eq!(st.ranking.len(), 12);
        assert!(st.ranking.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(st.projection.len(), PROJECTION_POINTS);
    }

    #[test]
    fn concurrent_submits_apply_once() {
        let (dir, svc, id) = setup(0.7);
        let q = svc.next_question(&id).unwrap();
        let acks: Vec<ResponseAck> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let (svc, id, token) = (&svc, &id, q.token.clone());
                    scope.spawn(move || svc.submit_response(id, &ResponseRequest { token, choice: 1 }).unwrap())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(acks.windows(2).all(|w| w[0] == w[1]));
        let log = std::fs::read_to_string(dir.path().join("sessions").join(format!("{id}.jsonl"))).unwrap();
        assert_eq!(log.lines().filter(|l| l.contains("\"event\":\"response\"")).count(), 1);
        assert_eq!(svc.belief(&id).unwrap().history().len(), 1);
    }

    #[test]
    fn sessions_are_isolated() {
        let (_dir, svc, a) = setup(0.7);
        let catalog_id = svc.state(&a).unwrap().catalog_id;
        let b = svc.create_session(request(&catalog_id, 0.7)).unwrap().session_id;
        let before = svc.state(&b).unwrap();
        let q = svc.next_question(&a).unwrap();
        svc.submit_response(&a, &ResponseRequest { token: q.token, choice: 1 }).unwrap();
        assert_eq!(svc.state(&b).unwrap(), before);
    }
}
