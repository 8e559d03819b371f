use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clients::ClientConfig;
use crate::clustering::ClusteringConfig;
use crate::corpus::FieldSchema;
use crate::error::{Error, Result};
use crate::generate::GenerationConfig;
use crate::io::sha256_hex;
use crate::retrieval::RetrievalConfig;
use crate::safety::DEFAULT_THRESHOLD;
use crate::trait_filter::{ThresholdMode, TraitNorm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Raw line-delimited dump read by `ingest`.
    pub corpus: PathBuf,
    /// Directory holding stage outputs and the run manifest.
    pub workdir: PathBuf,
    /// Model predictions scored by `evaluate`.
    pub predictions: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            workdir: PathBuf::from("work"),
            predictions: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientsConfig {
    pub chat: ClientConfig,
    pub embedding: ClientConfig,
    pub traits: ClientConfig,
    pub toxicity: ClientConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub schema: FieldSchema,
    pub alpha: f64,
    pub beta: f64,
    pub threshold_mode: ThresholdMode,
    pub norm: TraitNorm,
    pub clustering: ClusteringConfig,
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub clients: ClientsConfig,
    /// Per-utterance toxicity cutoff.
    pub toxicity_threshold: f64,
    pub test_size: usize,
    /// Seed of the train/test split.
    pub seed: u64,
    /// Use the deterministic local fallbacks instead of remote services.
    pub offline: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: PathsConfig::default(),
            schema: FieldSchema::default(),
            alpha: 1.0,
            beta: 0.0,
            threshold_mode: ThresholdMode::Stddev,
            norm: TraitNorm::L2,
            clustering: ClusteringConfig::default(),
            retrieval: RetrievalConfig::default(),
            generation: GenerationConfig::default(),
            clients: ClientsConfig::default(),
            toxicity_threshold: DEFAULT_THRESHOLD,
            test_size: 20_000,
            seed: 0,
            offline: false,
        }
    }
}

/// Fields that change how a run executes but not what it writes. The
/// predictions file is an input; `evaluate` records its checksum instead.
const OPERATIONAL_FIELDS: [&[&str]; 3] = [
    &["paths", "workdir"],
    &["paths", "predictions"],
    &["generation", "workers"],
];
const OPERATIONAL_CLIENT_FIELDS: [&str; 3] = ["requests_per_minute", "max_retries", "timeout_secs"];

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets every seed (clustering, generation sampling, split) at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.clustering.seed = seed;
        self.generation.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
            if self.threshold_mode == ThresholdMode::Absolute && v < 0.0 {
                return bad(format!("{name} must be non-negative in absolute mode, got {v}"));
            }
        }
        if self.clustering.k_max < 2 {
            return bad(format!(
                "clustering.k_max must be at least 2, got {}",
                self.clustering.k_max
            ));
        }
        let r = &self.retrieval;
        if r.window == 0 || r.stride == 0 {
            return bad("retrieval.window and retrieval.stride must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&r.lambda) {
            return bad(format!("retrieval.lambda must lie in [0, 1], got {}", r.lambda));
        }
        if self.generation.workers == 0 {
            return bad("generation.workers must be at least 1".into());
        }
        if self.generation.max_pairs == Some(0) {
            return bad("generation.max_pairs must be at least 1 when set".into());
        }
        if !(0.0..=1.0).contains(&self.toxicity_threshold) {
            return bad(format!(
                "toxicity_threshold must lie in [0, 1], got {}",
                self.toxicity_threshold
            ));
        }
        for c in [
            &self.clients.chat,
            &self.clients.embedding,
            &self.clients.traits,
            &self.clients.toxicity,
        ] {
            c.validate()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of every output-affecting field.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for path in OPERATIONAL_FIELDS {
            remove_path(&mut v, path);
        }
        for client in ["chat", "embedding", "traits", "toxicity"] {
            for field in OPERATIONAL_CLIENT_FIELDS {
                remove_path(&mut v, &["clients", client, field]);
            }
        }
        sha256_hex(v.to_string().as_bytes())
    }
}

fn remove_path(v: &mut Value, path: &[&str]) {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = v;
    for p in parents {
        match cur.get_mut(*p) {
            Some(next) => cur = next,
            None => return,
        }
    }
    if let Some(obj) = cur.as_object_mut() {
        obj.remove(*last);
    }
}
