//! Remote clients over the hosted-inference JSON convention.
//!
//! | service   | path                 | request                                   | response                                   |
//! |-----------|----------------------|-------------------------------------------|--------------------------------------------|
//! | chat      | `/chat/completions`  | `{model, messages, temperature, max_tokens, seed}` | `choices[0].message.content`       |
//! | embedding | `/embeddings`        | `{model, input: [text...]}`               | `data[i] = {index, embedding}`             |
//! | traits    | `/classify`          | `{model, task: "big5", input}`            | five named scores, top level or `scores`   |
//! | toxicity  | `/classify`          | `{model, task: "toxicity", input}`        | six named scores, top level or `scores`    |

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    require_batch, require_text, ChatBackend, ClientConfig, DecodeSettings, Embedder, EmbeddingVector, RateLimiter,
    RetryPolicy, ToxicityScorer, ToxicityScores, TraitScorer, TraitVector,
};
use crate::error::{Error, Result};

const LOG_BODY_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure {
    pub retryable: bool,
    pub message: String,
}

/// One JSON POST. Implementations decide what is retryable.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &Value, api_key: Option<&str>)
        -> std::result::Result<Value, TransportFailure>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        api_key: Option<&str>,
    ) -> std::result::Result<Value, TransportFailure> {
        let mut req = self.agent.post(url);
        if let Some(key) = api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportFailure {
            retryable: true,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportFailure {
            retryable: true,
            message: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            return Err(TransportFailure {
                retryable: status == 408 || status == 429 || status >= 500,
                message: format!("HTTP {status}: {}", truncate(&text)),
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportFailure {
            retryable: false,
            message: format!("invalid JSON response: {e}"),
        })
    }
}

fn truncate(s: &str) -> &str {
    if s.len() <= LOG_BODY_LIMIT {
        return s;
    }
    let mut end = LOG_BODY_LIMIT;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

/// Shared plumbing: rate limiting, retries with backoff, body logging.
pub struct RemoteService {
    cfg: ClientConfig,
    transport: Arc<dyn Transport>,
    limiter: Arc<RateLimiter>,
    policy: RetryPolicy,
}

impl RemoteService {
    pub fn new(cfg: ClientConfig, transport: Arc<dyn Transport>, limiter: Arc<RateLimiter>) -> Result<Self> {
        cfg.validate()?;
        if cfg.endpoint.is_empty() {
            return Err(Error::Config("remote client needs an endpoint".into()));
        }
        let policy = RetryPolicy::new(cfg.max_retries, cfg.seed);
        Ok(RemoteService {
            cfg,
            transport,
            limiter,
            policy,
        })
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.cfg.endpoint.trim_end_matches('/'), path);
        let key = self.cfg.resolved_api_key();
        let mut attempt = 0u32;
        loop {
            self.limiter.acquire();
            attempt += 1;
            log::debug!("POST {url} attempt {attempt}: {}", truncate(&body.to_string()));
            match self.transport.post_json(&url, body, key.as_deref()) {
                Ok(v) => {
                    log::debug!("response from {url}: {}", truncate(&v.to_string()));
                    return Ok(v);
                }
                Err(f) => {
                    log::debug!("request to {url} failed: {}", f.message);
                    if !f.retryable || attempt > self.policy.max_retries {
                        return Err(Error::Transport {
                            attempts: attempt,
                            message: f.message,
                        });
                    }
                    self.limiter.clock().sleep(self.policy.delay(attempt - 1));
                }
            }
        }
    }
}

fn malformed(what: &str, v: &Value) -> Error {
    Error::Transport {
        attempts: 1,
        message: format!("unexpected {what} response shape: {}", truncate(&v.to_string())),
    }
}

pub struct RemoteChat {
    service: RemoteService,
}

impl RemoteChat {
    pub fn new(service: RemoteService) -> Self {
        RemoteChat { service }
    }
}

impl ChatBackend for RemoteChat {
    fn chat_complete(&self, prompt: &str, decode: &DecodeSettings) -> Result<String> {
        require_text(prompt, "chat_complete")?;
        let cfg = self.service.config();
        let body = json!({
            "model": cfg.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decode.temperature,
            "max_tokens": decode.max_tokens,
            "seed": cfg.seed,
        });
        let resp = self.service.post("/chat/completions", &body)?;
        let content = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("chat", &resp))?;
        if content.trim().is_empty() {
            return Err(Error::EmptyResponse);
        }
        Ok(content.to_string())
    }
}

/// Embedding client; memoizes by text so equal inputs get equal vectors.
pub struct RemoteEmbedder {
    service: RemoteService,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(service: RemoteService) -> Self {
        RemoteEmbedder {
            service,
            cache: Mutex::new(HashMap::new()),
            dim: OnceLock::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        require_batch(texts)?;
        let missing: Vec<&str> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .copied()
                .filter(|t| !cache.contains_key(*t) && seen.insert(*t))
                .collect()
        };
        if !missing.is_empty() {
            let body = json!({"model": self.service.config().model_id, "input": missing});
            let resp = self.service.post("/embeddings", &body)?;
            let data = resp
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("embedding", &resp))?;
            if data.len() != missing.len() {
                return Err(malformed("embedding", &resp));
            }
            let mut fresh = vec![None; missing.len()];
            for (pos, item) in data.iter().enumerate() {
                let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
                let values: Vec<f64> = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| malformed("embedding", &resp))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| malformed("embedding", &resp)))
                    .collect::<Result<_>>()?;
                let dim = *self.dim.get_or_init(|| values.len());
                if values.len() != dim {
                    return Err(Error::Transport {
                        attempts: 1,
                        message: format!("embedding dimension changed from {dim} to {}", values.len()),
                    });
                }
                *fresh.get_mut(idx).ok_or_else(|| malformed("embedding", &resp))? = Some(EmbeddingVector::new(values)?);
            }
            let mut cache = self.cache.lock().unwrap();
            for (text, v) in missing.iter().zip(fresh) {
                cache.insert(text.to_string(), v.ok_or_else(|| malformed("embedding", &resp))?);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }
}

fn named_scores<const N: usize>(resp: &Value, names: [&str; N], what: &str) -> Result<[f64; N]> {
    let obj = resp.get("scores").unwrap_or(resp);
    let mut out = [0.0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = obj
            .get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| malformed(what, resp))?;
    }
    Ok(out)
}

pub struct RemoteTraitScorer {
    service: RemoteService,
}

impl RemoteTraitScorer {
    pub fn new(service: RemoteService) -> Self {
        RemoteTraitScorer { service }
    }
}

impl TraitScorer for RemoteTraitScorer {
    fn classify_traits(&self, text: &str) -> Result<TraitVector> {
        require_text(text, "classify_traits")?;
        let body = json!({"model": self.service.config().model_id, "task": "big5", "input": text});
        let resp = self.service.post("/classify", &body)?;
        TraitVector::from_array(named_scores(&resp, TraitVector::NAMES, "trait")?)
    }
}

pub struct RemoteToxicityScorer {
    service: RemoteService,
}

impl RemoteToxicityScorer {
    pub fn new(service: RemoteService) -> Self {
        RemoteToxicityScorer { service }
    }
}

impl ToxicityScorer for RemoteToxicityScorer {
    fn classify_toxicity(&self, text: &str) -> Result<ToxicityScores> {
        require_text(text, "classify_toxicity")?;
        let body = json!({"model": self.service.config().model_id, "task": "toxicity", "input": text});
        let resp = self.service.post("/classify", &body)?;
        let names = super::ToxicitySubclass::ALL.map(|s| s.key());
        ToxicityScores::from_array(named_scores(&resp, names, "toxicity")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::FakeClock;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        calls: AtomicUsize,
        fail_first: usize,
        reply: Value,
    }

    impl Transport for Scripted {
        fn post_json(
            &self,
            _url: &str,
            _body: &Value,
            _key: Option<&str>,
        ) -> std::result::Result<Value, TransportFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(TransportFailure {
                    retryable: true,
                    message: "HTTP 503".into(),
                })
            } else {
                Ok(self.reply.clone())
            }
        }
    }

    fn service(t: Arc<Scripted>, max_retries: u32) -> (RemoteService, Arc<FakeClock>) {
        let clock = Arc::new(FakeClock::new());
        let cfg = ClientConfig {
            endpoint: "http://stub".into(),
            model_id: "m".into(),
            max_retries,
            ..Default::default()
        };
        let limiter = Arc::new(RateLimiter::per_minute(1000, clock.clone()));
        (RemoteService::new(cfg, t, limiter).unwrap(), clock)
    }

    #[test]
    fn five_failures_with_four_retries_is_a_transport_error_after_five_attempts() {
        let t = Arc::new(Scripted {
            calls: AtomicUsize::new(0),
            fail_first: 5,
            reply: json!({}),
        });
        let (svc, clock) = service(t.clone(), 4);
        let err = RemoteChat::new(svc)
            .chat_complete("hi", &DecodeSettings::default())
            .unwrap_err();
        assert!(matches!(err, Error::Transport { attempts: 5, .. }), "{err}");
        assert_eq!(t.calls.load(Ordering::SeqCst), 5);
        assert_eq!(clock.sleeps().len(), 4);
    }

    #[test]
    fn transient_failures_recover() {
        let t = Arc::new(Scripted {
            calls: AtomicUsize::new(0),
            fail_first: 2,
            reply: json!({"choices": [{"message": {"content": "Author 1: hi"}}]}),
        });
        let (svc, _) = service(t, 4);
        let out = RemoteChat::new(svc)
            .chat_complete("hi", &DecodeSettings::default())
            .unwrap();
        assert_eq!(out, "Author 1: hi");
    }

    #[test]
    fn empty_completion_is_reported() {
        let t = Arc::new(Scripted {
            calls: AtomicUsize::new(0),
            fail_first: 0,
            reply: json!({"choices": [{"message": {"content": "  "}}]}),
        });
        let (svc, _) = service(t, 0);
        let err = RemoteChat::new(svc)
            .chat_complete("hi", &DecodeSettings::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyResponse));
    }

    #[test]
    fn embeddings_follow_response_indices() {
        let t = Arc::new(Scripted {
            calls: AtomicUsize::new(0),
            fail_first: 0,
            reply: json!({"data": [
                {"index": 1, "embedding": [0.0, 1.0]},
                {"index": 0, "embedding": [1.0, 0.0]}
            ]}),
        });
        let (svc, _) = service(t.clone(), 0);
        let e = RemoteEmbedder::new(svc);
        let v = e.embed_batch(&["x", "y", "x"]).unwrap();
        assert_eq!(v[0].values(), &[1.0, 0.0]);
        assert_eq!(v[1].values(), &[0.0, 1.0]);
        assert_eq!(v[0], v[2]);
        // cached on the second call
        e.embed_batch(&["y"]).unwrap();
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn trait_scores_under_scores_key() {
        let t = Arc::new(Scripted {
            calls: AtomicUsize::new(0),
            fail_first: 0,
            reply: json!({"scores": {"openness": 0.1, "conscientiousness": 0.2, "extraversion": 0.3, "agreeableness": 0.4, "neuroticism": 0.5}}),
        });
        let (svc, _) = service(t, 0);
        let tv = RemoteTraitScorer::new(svc).classify_traits("text").unwrap();
        assert_eq!(tv.to_array(), [0.1, 0.2, 0.3, 0.4, 0.5]);
    }
}
