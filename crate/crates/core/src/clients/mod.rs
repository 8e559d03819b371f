//! Service clients for embeddings, chat completion, Big-Five trait scoring
//! and toxicity scoring.
//!
//! Every service is a trait with two families of implementations: remote
//! clients speaking the hosted-inference JSON convention (see
//! `docs/wire-protocol.md`) and deterministic offline fallbacks that are
//! pure functions of `(text, seed)`.

mod fallback;
mod limiter;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fallback::{HashingEmbedder, LexiconTraitScorer, OfflineDialogueSynth, WordListToxicityScorer};
pub use limiter::{Clock, FakeClock, RateLimiter, RetryPolicy, SystemClock};
pub use remote::{
    HttpTransport, RemoteChat, RemoteEmbedder, RemoteService, RemoteToxicityScorer, RemoteTraitScorer, Transport,
    TransportFailure,
};

/// Environment variable that overrides any configured API key.
pub const API_KEY_ENV: &str = "JF_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::argument("embedding has zero dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("embedding contains a non-finite value"));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Openness, conscientiousness, extraversion, agreeableness, neuroticism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitVector {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl TraitVector {
    pub const NAMES: [&'static str; 5] = [
        "openness",
        "conscientiousness",
        "extraversion",
        "agreeableness",
        "neuroticism",
    ];

    pub fn from_array(v: [f64; 5]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
            return Err(Error::argument(format!("trait scores out of [0, 1]: {v:?}")));
        }
        Ok(TraitVector {
            openness: v[0],
            conscientiousness: v[1],
            extraversion: v[2],
            agreeableness: v[3],
            neuroticism: v[4],
        })
    }

    pub fn to_array(self) -> [f64; 5] {
        [
            self.openness,
            self.conscientiousness,
            self.extraversion,
            self.agreeableness,
            self.neuroticism,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToxicitySubclass {
    Toxicity,
    SevereToxicity,
    Obscene,
    Threat,
    Insult,
    IdentityAttack,
}

impl ToxicitySubclass {
    pub const ALL: [ToxicitySubclass; 6] = [
        ToxicitySubclass::Toxicity,
        ToxicitySubclass::SevereToxicity,
        ToxicitySubclass::Obscene,
        ToxicitySubclass::Threat,
        ToxicitySubclass::Insult,
        ToxicitySubclass::IdentityAttack,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ToxicitySubclass::Toxicity => "toxicity",
            ToxicitySubclass::SevereToxicity => "severe_toxicity",
            ToxicitySubclass::Obscene => "obscene",
            ToxicitySubclass::Threat => "threat",
            ToxicitySubclass::Insult => "insult",
            ToxicitySubclass::IdentityAttack => "identity_attack",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScores {
    pub toxicity: f64,
    pub severe_toxicity: f64,
    pub obscene: f64,
    pub threat: f64,
    pub insult: f64,
    pub identity_attack: f64,
}

impl ToxicityScores {
    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
            return Err(Error::argument(format!("toxicity scores out of [0, 1]: {v:?}")));
        }
        Ok(ToxicityScores {
            toxicity: v[0],
            severe_toxicity: v[1],
            obscene: v[2],
            threat: v[3],
            insult: v[4],
            identity_attack: v[5],
        })
    }

    pub fn get(&self, sub: ToxicitySubclass) -> f64 {
        match sub {
            ToxicitySubclass::Toxicity => self.toxicity,
            ToxicitySubclass::SevereToxicity => self.severe_toxicity,
            ToxicitySubclass::Obscene => self.obscene,
            ToxicitySubclass::Threat => self.threat,
            ToxicitySubclass::Insult => self.insult,
            ToxicitySubclass::IdentityAttack => self.identity_attack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model_id: String,
    pub requests_per_minute: u32,
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// Seed for fallback hashing and retry jitter.
    pub seed: u64,
    /// Embedding dimension of the offline embedder.
    pub dimension: usize,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            model_id: String::new(),
            requests_per_minute: 60,
            max_retries: 4,
            timeout_secs: 60.0,
            seed: 0,
            dimension: 256,
            api_key: None,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.requests_per_minute == 0 {
            return Err(Error::Config("requests_per_minute must be at least 1".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// `JF_API_KEY` when set, else the configured key.
    pub fn resolved_api_key(&self) -> Option<String> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| self.api_key.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeSettings {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

pub trait Embedder: Send + Sync {
    /// One vector per input text, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

pub trait ChatBackend: Send + Sync {
    fn chat_complete(&self, prompt: &str, decode: &DecodeSettings) -> Result<String>;
}

pub trait TraitScorer: Send + Sync {
    fn classify_traits(&self, text: &str) -> Result<TraitVector>;
}

pub trait ToxicityScorer: Send + Sync {
    fn classify_toxicity(&self, text: &str) -> Result<ToxicityScores>;
}

pub(crate) fn require_text(text: &str, what: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::argument(format!("{what}: text is empty")))
    } else {
        Ok(())
    }
}

pub(crate) fn require_batch(texts: &[&str]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::argument("embed_batch: empty batch"));
    }
    for (i, t) in texts.iter().enumerate() {
        require_text(t, &format!("embed_batch item {i}"))?;
    }
    Ok(())
}
