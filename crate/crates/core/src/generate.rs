//! Dialogue generation over every entry combination of every author pair.
//!
//! Each finished combination (dialogue or skip) is appended to a journal
//! file keyed by `(entry_a, entry_b)`, so an interrupted run resumes
//! without re-requesting completed combinations. A completed run rewrites
//! the journal in plan order.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clients::{ChatBackend, DecodeSettings};
use crate::corpus::{Corpus, JournalEntry};
use crate::dialogue::{
    build_prompt, entry_combinations, pair_authors, parse_dialogue, trim_last_turn, Dialogue, ParseConfig,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub workers: usize,
    /// Extra attempts after a malformed completion.
    pub gen_retries: u32,
    /// Cap on author pairs, sampled deterministically under `seed`.
    pub max_pairs: Option<usize>,
    pub seed: u64,
    pub decode: DecodeSettings,
    pub parse: ParseConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            workers: 4,
            gen_retries: 2,
            max_pairs: None,
            seed: 0,
            decode: DecodeSettings::default(),
            parse: ParseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub entry_a: String,
    pub entry_b: String,
    pub reason: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JournalRecord {
    Done { dialogue: Dialogue, attempts: u32 },
    Skipped(SkipRecord),
}

impl JournalRecord {
    fn key(&self) -> (String, String) {
        match self {
            JournalRecord::Done { dialogue, .. } => dialogue.source_entries.clone(),
            JournalRecord::Skipped(s) => (s.entry_a.clone(), s.entry_b.clone()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenerationOutput {
    pub dialogues: Vec<Dialogue>,
    pub skips: Vec<SkipRecord>,
    /// Combinations in the plan.
    pub planned: usize,
    /// Combinations taken from an earlier run's journal.
    pub resumed: usize,
    /// `chat_complete` calls issued by this run.
    pub backend_calls: usize,
    /// True when the run stopped early on cancellation.
    pub interrupted: bool,
}

/// The ordered list of `(user entry, assistant entry)` combinations.
pub fn plan<'c>(corpus: &'c Corpus, cfg: &GenerationConfig) -> Result<Vec<(&'c JournalEntry, &'c JournalEntry)>> {
    let authors: Vec<String> = corpus.authors().map(String::from).collect();
    let mut pairs = pair_authors(&authors)?;
    if let Some(max) = cfg.max_pairs {
        if max < pairs.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut picked = sample(&mut rng, pairs.len(), max).into_vec();
            picked.sort_unstable();
            pairs = picked.into_iter().map(|i| pairs[i].clone()).collect();
        }
    }
    let mut combos = Vec::new();
    for pair in &pairs {
        combos.extend(entry_combinations(pair, corpus)?);
    }
    Ok(combos)
}

/// Reads a generation journal, dropping a torn trailing line and rewriting
/// the file without it.
pub fn load_journal(path: &Path) -> Result<Vec<JournalRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut torn = false;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JournalRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => {
                log::warn!("ignoring unreadable generation journal line in {}", path.display());
                torn = true;
            }
        }
    }
    if torn {
        crate::io::write_jsonl(path, &records)?;
    }
    Ok(records)
}

struct JournalSink {
    file: Option<Mutex<File>>,
}

impl JournalSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| Error::io(p, e))?;
                Some(Mutex::new(f))
            }
            None => None,
        };
        Ok(JournalSink { file })
    }

    fn append(&self, rec: &JournalRecord) -> std::io::Result<()> {
        if let Some(f) = &self.file {
            let mut line = serde_json::to_string(rec).map_err(std::io::Error::other)?;
            line.push('\n');
            let mut f = f.lock().unwrap();
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

fn generate_one(
    a: &JournalEntry,
    b: &JournalEntry,
    chat: &dyn ChatBackend,
    cfg: &GenerationConfig,
    calls: &AtomicUsize,
) -> JournalRecord {
    let skip = |reason: String, attempts: u32| {
        JournalRecord::Skipped(SkipRecord {
            entry_a: a.entry_id.clone(),
            entry_b: b.entry_id.clone(),
            reason,
            attempts,
        })
    };
    let prompt = match build_prompt(a, b) {
        Ok(p) => p,
        Err(e) => return skip(e.to_string(), 0),
    };
    let mut last_reason = String::new();
    for attempt in 1..=cfg.gen_retries + 1 {
        calls.fetch_add(1, Ordering::SeqCst);
        let raw = match chat.chat_complete(&prompt, &cfg.decode) {
            Ok(raw) => raw,
            Err(Error::EmptyResponse) => {
                last_reason = Error::EmptyResponse.to_string();
                continue;
            }
            Err(e) => return skip(e.to_string(), attempt),
        };
        let finalized = parse_dialogue(&raw, &cfg.parse)
            .map_err(Error::from)
            .and_then(|t| trim_last_turn(&t))
            .and_then(|t| Dialogue::finalized(a, b, t));
        match finalized {
            Ok(dialogue) => {
                return JournalRecord::Done {
                    dialogue,
                    attempts: attempt,
                }
            }
            Err(Error::Parse(p)) => last_reason = p.to_string(),
            Err(e) => last_reason = e.to_string(),
        }
    }
    skip(last_reason, cfg.gen_retries + 1)
}

/// Generates one dialogue per planned combination.
///
/// Per-combination failures become skips; only journal I/O is fatal.
/// When `cancel` is raised, workers finish their current combination and
/// stop; everything finished so far is in the journal.
pub fn generate_all(
    corpus: &Corpus,
    chat: &dyn ChatBackend,
    cfg: &GenerationConfig,
    journal: Option<&Path>,
    cancel: Option<&AtomicBool>,
) -> Result<GenerationOutput> {
    let combos = plan(corpus, cfg)?;
    let index: HashMap<(String, String), usize> = combos
        .iter()
        .enumerate()
        .map(|(i, (a, b))| ((a.entry_id.clone(), b.entry_id.clone()), i))
        .collect();

    let mut results: Vec<Option<JournalRecord>> = vec![None; combos.len()];
    let mut resumed = 0;
    if let Some(path) = journal {
        for rec in load_journal(path)? {
            if let Some(&i) = index.get(&rec.key()) {
                if results[i].is_none() {
                    resumed += 1;
                }
                results[i] = Some(rec);
            }
        }
    }
    let pending: Vec<usize> = (0..combos.len()).filter(|&i| results[i].is_none()).collect();
    log::info!(
        "generation: {} combinations, {} resumed, {} pending",
        combos.len(),
        resumed,
        pending.len()
    );

    let sink = JournalSink::open(journal)?;
    let next = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let slots = Mutex::new(results);
    let io_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let workers = cfg.workers.clamp(1, pending.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) || io_error.lock().unwrap().is_some() {
                    return;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { return };
                let (a, b) = combos[i];
                let rec = generate_one(a, b, chat, cfg, &calls);
                if let Err(e) = sink.append(&rec) {
                    *io_error.lock().unwrap() = Some(e);
                    return;
                }
                slots.lock().unwrap()[i] = Some(rec);
            });
        }
    });
    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(Error::io(journal.unwrap_or(Path::new("<journal>")), e));
    }

    drop(sink);
    let results = slots.into_inner().unwrap();
    let interrupted = results.iter().any(Option::is_none);
    if let (Some(path), false) = (journal, interrupted) {
        // completion order depends on thread timing; settle on plan order
        let ordered: Vec<&JournalRecord> = results.iter().flatten().collect();
        crate::io::write_jsonl(path, &ordered)?;
    }
    let mut out = GenerationOutput {
        planned: combos.len(),
        resumed,
        backend_calls: calls.load(Ordering::SeqCst),
        interrupted,
        ..Default::default()
    };
    for rec in results.into_iter().flatten() {
        match rec {
            JournalRecord::Done { dialogue, .. } => out.dialogues.push(dialogue),
            JournalRecord::Skipped(s) => out.skips.push(s),
        }
    }
    Ok(out)
}
