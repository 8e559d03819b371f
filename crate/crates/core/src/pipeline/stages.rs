use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::{GenerationStatus, RunManifest, WorkdirLock};
use super::services::Services;
use crate::clustering::{retain_prominent, ClusteringOutcome};
use crate::corpus::{load_corpus, split_dialogues, Corpus, DropReport, JournalEntry};
use crate::dialogue::Dialogue;
use crate::error::{Error, Result};
use crate::generate::generate_all;
use crate::io::{read_json, read_jsonl, sha256_file, write_json, write_jsonl};
use crate::metrics::{dataset_stats, evaluate_predictions, EvaluationReport, Prediction};
use crate::retrieval::build_raft_records;
use crate::safety::{partition, score_dialogue, summarize};
use crate::trait_filter::{apply_filters, score_author, AuthorProfile, ThresholdMode, TraitFilterOutcome, TraitNorm};

pub const CORPUS: &str = "corpus.jsonl";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const CLUSTER_REPORT: &str = "cluster_report.json";
pub const CLUSTERED_CORPUS: &str = "clustered_corpus.jsonl";
pub const TRAIT_PROFILES: &str = "trait_profiles.json";
pub const TRAIT_REPORT: &str = "trait_report.json";
pub const FILTERED_CORPUS: &str = "filtered_corpus.jsonl";
pub const GENERATION_JOURNAL: &str = "generation_journal.jsonl";
pub const DIALOGUES: &str = "dialogues.jsonl";
pub const SKIPS: &str = "skips.jsonl";
pub const CLEAN_DIALOGUES: &str = "dialogues_clean.jsonl";
pub const FLAGGED_DIALOGUES: &str = "dialogues_flagged.jsonl";
pub const TOXICITY_SUMMARY: &str = "toxicity_summary.json";
pub const TRAIN: &str = "train.jsonl";
pub const TEST: &str = "test.jsonl";
pub const STATS: &str = "stats.json";
pub const RAFT_TRAIN: &str = "raft_train.jsonl";
pub const RAFT_TEST: &str = "raft_test.jsonl";
pub const EVALUATION: &str = "evaluation.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Cluster,
    Traits,
    Filter,
    Generate,
    Toxicity,
    Split,
    Stats,
    Raft,
    Evaluate,
}

impl Stage {
    pub const EVERY: [Stage; 10] = [
        Stage::Ingest,
        Stage::Cluster,
        Stage::Traits,
        Stage::Filter,
        Stage::Generate,
        Stage::Toxicity,
        Stage::Split,
        Stage::Stats,
        Stage::Raft,
        Stage::Evaluate,
    ];

    /// Stages run by `all`, in order.
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Cluster,
        Stage::Traits,
        Stage::Filter,
        Stage::Generate,
        Stage::Toxicity,
        Stage::Split,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::Traits => "traits",
            Stage::Filter => "filter",
            Stage::Generate => "generate",
            Stage::Toxicity => "toxicity",
            Stage::Split => "split",
            Stage::Stats => "stats",
            Stage::Raft => "raft",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Cluster => &[Stage::Ingest],
            Stage::Traits => &[Stage::Cluster],
            Stage::Filter => &[Stage::Traits],
            Stage::Generate => &[Stage::Filter],
            Stage::Toxicity => &[Stage::Generate],
            Stage::Split => &[Stage::Toxicity],
            Stage::Stats => &[Stage::Generate],
            Stage::Raft => &[Stage::Split, Stage::Filter],
            Stage::Evaluate => &[Stage::Generate],
        }
    }

    /// Stages whose inputs include this stage's outputs, transitively.
    fn dependents(self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        let mut frontier = vec![self];
        while let Some(s) = frontier.pop() {
            for t in Stage::EVERY {
                if t.prerequisites().contains(&s) && !out.contains(&t) {
                    out.push(t);
                    frontier.push(t);
                }
            }
        }
        out
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::EVERY
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown stage `{s}`")))
    }
}

/// What `run` was asked to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Stage(Stage),
    All,
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(Target::All)
        } else {
            s.parse().map(Target::Stage)
        }
    }
}

impl Target {
    fn stages(self) -> Vec<Stage> {
        match self {
            Target::All => Stage::ALL.to_vec(),
            Target::Stage(s) => vec![s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub authors: BTreeMap<String, ClusteringOutcome>,
    pub entries_in: usize,
    pub entries_retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitReport {
    pub alpha: f64,
    pub beta: f64,
    pub threshold_mode: ThresholdMode,
    pub norm: TraitNorm,
    pub outcome: TraitFilterOutcome,
    pub entries_in: usize,
    pub entries_retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub predictions_sha256: String,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config_hash: String,
    pub completed: Vec<Stage>,
}

pub struct Pipeline {
    config: PipelineConfig,
    services: Services,
    cancel: Option<Arc<AtomicBool>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, services: Services) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            services,
            cancel: None,
        })
    }

    /// Builds services from the config (offline fallbacks or remote).
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        let services = Services::from_config(&config)?;
        Self::new(config, services)
    }

    /// Raising `flag` stops `generate` after in-flight combinations finish.
    pub fn with_cancel(mut self, flag: Arc<AtomicBool>) -> Self {
        self.cancel = Some(flag);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workdir(&self) -> &Path {
        &self.config.paths.workdir
    }

    pub fn run(&self, target: Target, force: bool) -> Result<RunSummary> {
        let workdir = self.workdir().to_path_buf();
        std::fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        let _lock = WorkdirLock::acquire(&workdir)?;

        let hash = self.config.config_hash();
        let mut manifest = match RunManifest::load(&workdir)? {
            None => RunManifest::new(&hash),
            Some(m) if m.config_hash == hash => m,
            Some(mut m) => {
                if !force {
                    return Err(Error::ConfigMismatch {
                        recorded: m.config_hash,
                        current: hash,
                    });
                }
                log::warn!(
                    "config hash changed ({} -> {hash}); continuing under --force",
                    m.config_hash
                );
                m.config_hash = hash.clone();
                m
            }
        };

        let mut completed = Vec::new();
        for stage in target.stages() {
            for pre in stage.prerequisites() {
                manifest.verify(&workdir, pre.name(), stage.name())?;
            }
            log::info!("stage {stage}: start");
            let previous = manifest.stages.get(stage.name()).cloned();
            let outputs = self.execute(stage, &workdir, &mut manifest);
            // progress recorded by an interrupted stage is still saved
            manifest.save(&workdir)?;
            let outputs = outputs?;
            manifest.complete(&workdir, stage.name(), &outputs)?;
            let changed = previous.is_none_or(|p| p.outputs != manifest.stages[stage.name()].outputs);
            if changed {
                for dep in stage.dependents() {
                    if manifest.stages.remove(dep.name()).is_some() {
                        log::info!("stage {dep}: marked incomplete, its inputs changed");
                    }
                }
            }
            manifest.save(&workdir)?;
            log::info!("stage {stage}: done");
            completed.push(stage);
        }
        Ok(RunSummary {
            run_id: manifest.run_id,
            config_hash: manifest.config_hash,
            completed,
        })
    }

    fn execute(&self, stage: Stage, dir: &Path, manifest: &mut RunManifest) -> Result<Vec<&'static str>> {
        match stage {
            Stage::Ingest => self.ingest(dir),
            Stage::Cluster => self.cluster(dir),
            Stage::Traits => self.traits(dir),
            Stage::Filter => self.filter(dir),
            Stage::Generate => self.generate(dir, manifest),
            Stage::Toxicity => self.toxicity(dir),
            Stage::Split => self.split(dir),
            Stage::Stats => self.stats(dir),
            Stage::Raft => self.raft(dir),
            Stage::Evaluate => self.evaluate(dir),
        }
    }

    fn ingest(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let (corpus, report): (Corpus, DropReport) = load_corpus(&self.config.paths.corpus, &self.config.schema)?;
        corpus.save(&dir.join(CORPUS))?;
        write_json(&dir.join(INGEST_REPORT), &report)?;
        Ok(vec![CORPUS, INGEST_REPORT])
    }

    fn cluster(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let corpus = read_corpus(&dir.join(CORPUS))?;
        let authors: Vec<&str> = corpus.authors().collect();
        let embedder = self.services.embedder.as_ref();
        let cfg = &self.config.clustering;
        let outcomes = authors
            .par_iter()
            .map(|&a| {
                let entries = corpus.author_entries(a);
                let texts: Vec<&str> = entries.iter().map(|e| e.body.as_str()).collect();
                let vecs = embedder.embed_batch(&texts)?;
                Ok((a.to_string(), retain_prominent(&entries, &vecs, cfg)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let keep: HashSet<String> = outcomes
            .iter()
            .flat_map(|(_, o)| o.retained_ids.iter().cloned())
            .collect();
        let retained = corpus.retain_ids(&keep);
        retained.save(&dir.join(CLUSTERED_CORPUS))?;
        let report = ClusterReport {
            authors: outcomes.into_iter().collect(),
            entries_in: corpus.len(),
            entries_retained: retained.len(),
        };
        write_json(&dir.join(CLUSTER_REPORT), &report)?;
        Ok(vec![CLUSTER_REPORT, CLUSTERED_CORPUS])
    }

    fn traits(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let corpus = read_corpus(&dir.join(CLUSTERED_CORPUS))?;
        let authors: Vec<&str> = corpus.authors().collect();
        let scorer = self.services.traits.as_ref();
        let norm = self.config.norm;
        let profiles = authors
            .par_iter()
            .map(|&a| score_author(a, &corpus.author_entries(a), scorer, norm))
            .collect::<Result<Vec<AuthorProfile>>>()?;
        write_json(&dir.join(TRAIT_PROFILES), &profiles)?;
        Ok(vec![TRAIT_PROFILES])
    }

    fn filter(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let profiles: Vec<AuthorProfile> = read_json(&dir.join(TRAIT_PROFILES))?;
        let corpus = read_corpus(&dir.join(CLUSTERED_CORPUS))?;
        let c = &self.config;
        let outcome = apply_filters(&profiles, c.alpha, c.beta, c.threshold_mode, c.norm)?;
        let keep: HashSet<String> = outcome.retained_entries().into_iter().collect();
        let filtered = corpus.retain_ids(&keep);
        filtered.save(&dir.join(FILTERED_CORPUS))?;
        write_json(
            &dir.join(TRAIT_REPORT),
            &TraitReport {
                alpha: c.alpha,
                beta: c.beta,
                threshold_mode: c.threshold_mode,
                norm: c.norm,
                outcome,
                entries_in: corpus.len(),
                entries_retained: filtered.len(),
            },
        )?;
        Ok(vec![TRAIT_REPORT, FILTERED_CORPUS])
    }

    fn generate(&self, dir: &Path, manifest: &mut RunManifest) -> Result<Vec<&'static str>> {
        let corpus = read_corpus(&dir.join(FILTERED_CORPUS))?;
        let out = generate_all(
            &corpus,
            self.services.chat.as_ref(),
            &self.config.generation,
            Some(&dir.join(GENERATION_JOURNAL)),
            self.cancel.as_deref(),
        )?;
        manifest.generation = Some(GenerationStatus {
            journal: GENERATION_JOURNAL.to_string(),
            planned: out.planned,
            done: out.dialogues.len(),
            skipped: out.skips.len(),
            resumed: out.resumed,
            backend_calls: out.backend_calls,
            interrupted: out.interrupted,
        });
        if out.interrupted {
            return Err(Error::Interrupted(Stage::Generate.name().into()));
        }
        write_jsonl(&dir.join(DIALOGUES), &out.dialogues)?;
        write_jsonl(&dir.join(SKIPS), &out.skips)?;
        Ok(vec![DIALOGUES, SKIPS])
    }

    fn toxicity(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let dialogues: Vec<Dialogue> = read_jsonl(&dir.join(DIALOGUES))?;
        let scorer = self.services.toxicity.as_ref();
        let threshold = self.config.toxicity_threshold;
        let reports = dialogues
            .par_iter()
            .map(|d| score_dialogue(d, scorer, threshold))
            .collect::<Result<Vec<_>>>()?;
        let counts = partition(
            &dialogues,
            &reports,
            &dir.join(CLEAN_DIALOGUES),
            &dir.join(FLAGGED_DIALOGUES),
        )?;
        log::info!("toxicity: {} clean, {} flagged", counts.clean, counts.flagged);
        write_json(&dir.join(TOXICITY_SUMMARY), &summarize(&reports, threshold))?;
        Ok(vec![CLEAN_DIALOGUES, FLAGGED_DIALOGUES, TOXICITY_SUMMARY])
    }

    fn split(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let clean: Vec<Dialogue> = read_jsonl(&dir.join(CLEAN_DIALOGUES))?;
        let (train, test) = split_dialogues(&clean, self.config.test_size, self.config.seed)?;
        write_jsonl(&dir.join(TRAIN), &train)?;
        write_jsonl(&dir.join(TEST), &test)?;
        Ok(vec![TRAIN, TEST])
    }

    fn stats(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let dialogues: Vec<Dialogue> = read_jsonl(&dir.join(DIALOGUES))?;
        let stats = dataset_stats(&dialogues, self.services.embedder.as_ref())?;
        write_json(&dir.join(STATS), &stats)?;
        Ok(vec![STATS])
    }

    fn raft(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let corpus = read_corpus(&dir.join(FILTERED_CORPUS))?;
        let by_id: HashMap<&str, &JournalEntry> = corpus.entries().iter().map(|e| (e.entry_id.as_str(), e)).collect();
        for (input, output) in [(TRAIN, RAFT_TRAIN), (TEST, RAFT_TEST)] {
            let dialogues: Vec<Dialogue> = read_jsonl(&dir.join(input))?;
            let per_dialogue = dialogues
                .par_iter()
                .map(|d| {
                    let entry = by_id.get(d.source_entries.1.as_str()).ok_or_else(|| {
                        Error::argument(format!(
                            "dialogue {} cites entry {} missing from the filtered corpus",
                            d.dialogue_id, d.source_entries.1
                        ))
                    })?;
                    build_raft_records(d, entry, self.services.embedder.as_ref(), &self.config.retrieval)
                })
                .collect::<Result<Vec<_>>>()?;
            let records: Vec<_> = per_dialogue.into_iter().flatten().collect();
            write_jsonl(&dir.join(output), &records)?;
        }
        Ok(vec![RAFT_TRAIN, RAFT_TEST])
    }

    fn evaluate(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let path: PathBuf = self
            .config
            .paths
            .predictions
            .clone()
            .ok_or_else(|| Error::Config("evaluate needs paths.predictions".into()))?;
        let predictions: Vec<Prediction> = read_jsonl(&path)?;
        let dialogues: Vec<Dialogue> = read_jsonl(&dir.join(DIALOGUES))?;
        let report = evaluate_predictions(&predictions, &dialogues, self.services.embedder.as_ref())?;
        let output = EvaluationOutput {
            predictions_sha256: sha256_file(&path)?,
            report,
        };
        write_json(&dir.join(EVALUATION), &output)?;
        Ok(vec![EVALUATION])
    }
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    Corpus::from_entries(read_jsonl(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::EVERY {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("all".parse::<Target>().unwrap(), Target::All);
        assert!("nope".parse::<Target>().is_err());
    }

    #[test]
    fn dependents_follow_prerequisites() {
        let d = Stage::Filter.dependents();
        for s in [
            Stage::Generate,
            Stage::Toxicity,
            Stage::Split,
            Stage::Stats,
            Stage::Raft,
            Stage::Evaluate,
        ] {
            assert!(d.contains(&s), "{s}");
        }
        assert!(!d.contains(&Stage::Traits));
        assert!(Stage::Stats.dependents().is_empty());
    }
}
