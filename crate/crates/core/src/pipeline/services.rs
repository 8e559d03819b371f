use std::collections::HashMap;
use std::sync::Arc;

use super::config::PipelineConfig;
use crate::clients::{
    ChatBackend, ClientConfig, Embedder, HashingEmbedder, HttpTransport, LexiconTraitScorer, OfflineDialogueSynth,
    RateLimiter, RemoteChat, RemoteEmbedder, RemoteService, RemoteToxicityScorer, RemoteTraitScorer, SystemClock,
    ToxicityScorer, TraitScorer, Transport, WordListToxicityScorer,
};
use crate::error::Result;

/// The four external services a run depends on.
#[derive(Clone)]
pub struct Services {
    pub chat: Arc<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub traits: Arc<dyn TraitScorer>,
    pub toxicity: Arc<dyn ToxicityScorer>,
}

impl Services {
    pub fn offline(cfg: &PipelineConfig) -> Self {
        let e = &cfg.clients.embedding;
        Services {
            chat: Arc::new(OfflineDialogueSynth),
            embedder: Arc::new(HashingEmbedder::new(e.dimension, e.seed)),
            traits: Arc::new(LexiconTraitScorer),
            toxicity: Arc::new(WordListToxicityScorer),
        }
    }

    /// Remote clients. Services sharing an endpoint share one rate limiter,
    /// sized by the smallest configured budget among them.
    pub fn remote(cfg: &PipelineConfig) -> Result<Self> {
        let c = &cfg.clients;
        let all = [&c.chat, &c.embedding, &c.traits, &c.toxicity];
        let clock = Arc::new(SystemClock::default());
        let mut budgets: HashMap<&str, u32> = HashMap::new();
        for s in all {
            let b = budgets.entry(s.endpoint.as_str()).or_insert(s.requests_per_minute);
            *b = (*b).min(s.requests_per_minute);
        }
        let limiters: HashMap<&str, Arc<RateLimiter>> = budgets
            .into_iter()
            .map(|(ep, rpm)| (ep, Arc::new(RateLimiter::per_minute(rpm, clock.clone()))))
            .collect();
        let service = |s: &ClientConfig| -> Result<RemoteService> {
            let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new(s.timeout()));
            RemoteService::new(s.clone(), transport, limiters[s.endpoint.as_str()].clone())
        };
        Ok(Services {
            chat: Arc::new(RemoteChat::new(service(&c.chat)?)),
            embedder: Arc::new(RemoteEmbedder::new(service(&c.embedding)?)),
            traits: Arc::new(RemoteTraitScorer::new(service(&c.traits)?)),
            toxicity: Arc::new(RemoteToxicityScorer::new(service(&c.toxicity)?)),
        })
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        if cfg.offline {
            Ok(Self::offline(cfg))
        } else {
            Self::remote(cfg)
        }
    }
}
