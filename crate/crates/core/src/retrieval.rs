//! Journal chunking, MMR selection, retrieval-augmented training records,
//! and question-gated enrichment at inference time.
//!
//! An enriched input is the query followed, for each selected chunk in
//! selection order, by [`CONTEXT_SEPARATOR`] and the chunk text. Queries
//! never contain a newline, so splitting on the separator recovers the
//! query as the first piece.

use serde::{Deserialize, Serialize};

use crate::clients::{Embedder, EmbeddingVector};
use crate::corpus::JournalEntry;
use crate::dialogue::{Dialogue, Role, Utterance, FINAL_UTTERANCES};
use crate::error::{Error, Result};
use crate::text::{dot, unit};

pub const CONTEXT_SEPARATOR: &str = "\n[context]\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Sentences per chunk.
    pub window: usize,
    /// Sentences between chunk starts.
    pub stride: usize,
    pub k: usize,
    pub lambda: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            window: 3,
            stride: 2,
            k: 3,
            lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalChunk {
    pub entry_id: String,
    /// Half-open character offsets into the body.
    pub span: (usize, usize),
    pub text: String,
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector>,
}

/// Character spans of sentences: a sentence ends at `.`, `!` or `?`
/// followed by whitespace or the end of text. Surrounding whitespace is
/// excluded; trailing text without a terminator is a final sentence.
pub fn sentence_spans(body: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = body.chars().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &c) in chars.iter().enumerate() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let at_boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if matches!(c, '.' | '!' | '?') && at_boundary {
            spans.push((start.take().unwrap(), i + 1));
        }
    }
    if let Some(s) = start {
        let end = chars.iter().rposition(|c| !c.is_whitespace()).map_or(s, |e| e + 1);
        spans.push((s, end));
    }
    spans
}

/// Sliding windows of `window` sentences every `stride` sentences; the last
/// window may be shorter and always reaches the final sentence.
pub fn chunk_journal(entry: &JournalEntry, window: usize, stride: usize) -> Result<Vec<RetrievalChunk>> {
    if window == 0 || stride == 0 {
        return Err(Error::argument("chunk window and stride must be at least 1"));
    }
    if entry.body.trim().is_empty() {
        return Err(Error::argument(format!("entry {} has an empty body", entry.entry_id)));
    }
    let sentences = sentence_spans(&entry.body);
    let chars: Vec<char> = entry.body.chars().collect();
    let mut chunks = Vec::new();
    let mut first = 0;
    loop {
        let last = (first + window).min(sentences.len());
        let span = (sentences[first].0, sentences[last - 1].1);
        chunks.push(RetrievalChunk {
            entry_id: entry.entry_id.clone(),
            span,
            text: chars[span.0..span.1].iter().collect(),
            embedding: None,
        });
        if last >= sentences.len() {
            break;
        }
        first += stride;
    }
    Ok(chunks)
}

/// Fills in chunk embeddings with one batch call.
pub fn embed_chunks(chunks: &mut [RetrievalChunk], embedder: &dyn Embedder) -> Result<()> {
    if chunks.is_empty() {
        return Ok(());
    }
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    for (c, v) in chunks.iter_mut().zip(vectors) {
        c.embedding = Some(v);
    }
    Ok(())
}

/// Greedy Maximum Marginal Relevance.
///
/// Each step picks the candidate maximizing
/// `λ·cos(query, c) − (1 − λ)·max_{s ∈ selected} cos(c, s)`, the redundancy
/// term being 0 while nothing is selected. Ties go to the lower index.
pub fn mmr_select<V: AsRef<[f64]>>(query: &[f64], candidates: &[V], k: usize, lambda: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::argument(format!("lambda {lambda} outside [0, 1]")));
    }
    if let Some(bad) = candidates.iter().position(|c| c.as_ref().len() != query.len()) {
        return Err(Error::argument(format!(
            "candidate {bad} has dimension {}, query has {}",
            candidates[bad].as_ref().len(),
            query.len()
        )));
    }
    let q = unit(query);
    let units: Vec<Vec<f64>> = candidates.iter().map(|c| unit(c.as_ref())).collect();
    let relevance: Vec<f64> = units.iter().map(|c| dot(&q, c)).collect();
    let mut redundancy = vec![f64::NEG_INFINITY; units.len()];
    let mut taken = vec![false; units.len()];
    let mut selected = Vec::with_capacity(k.min(units.len()));

    while selected.len() < k.min(units.len()) {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..units.len()).filter(|&i| !taken[i]) {
            let penalty = if selected.is_empty() { 0.0 } else { redundancy[i] };
            let score = lambda * relevance[i] - (1.0 - lambda) * penalty;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("an untaken candidate remains");
        taken[pick] = true;
        selected.push(pick);
        for i in (0..units.len()).filter(|&i| !taken[i]) {
            redundancy[i] = redundancy[i].max(dot(&units[i], &units[pick]));
        }
    }
    Ok(selected)
}

/// Query followed by each chunk text behind the separator.
pub fn enrich(query: &str, chunk_texts: &[&str]) -> String {
    let mut out = String::from(query);
    for t in chunk_texts {
        out.push_str(CONTEXT_SEPARATOR);
        out.push_str(t);
    }
    out
}

/// Recovers the query from an enriched input.
pub fn query_of(enriched: &str) -> &str {
    enriched.split(CONTEXT_SEPARATOR).next().unwrap_or(enriched)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaftRecord {
    pub dialogue_id: String,
    /// 0-based assistant turn.
    pub turn: usize,
    /// Utterances preceding the query.
    pub context_turns: Vec<Utterance>,
    pub query: String,
    pub chunks: Vec<RetrievalChunk>,
    pub enriched_input: String,
    pub target: String,
}

fn select_chunks(
    query_vec: &EmbeddingVector,
    chunks: &[RetrievalChunk],
    k: usize,
    lambda: f64,
) -> Result<Vec<RetrievalChunk>> {
    let vecs: Vec<&[f64]> = chunks
        .iter()
        .map(|c| {
            c.embedding
                .as_ref()
                .map(EmbeddingVector::values)
                .ok_or_else(|| Error::argument("chunk is not embedded"))
        })
        .collect::<Result<_>>()?;
    Ok(mmr_select(query_vec.values(), &vecs, k, lambda)?
        .into_iter()
        .map(|i| chunks[i].clone())
        .collect())
}

/// One record per assistant utterance, each enriched with MMR-selected
/// chunks of the assistant author's journal.
pub fn build_raft_records(
    dialogue: &Dialogue,
    assistant_entry: &JournalEntry,
    embedder: &dyn Embedder,
    cfg: &RetrievalConfig,
) -> Result<Vec<RaftRecord>> {
    dialogue.validate()?;
    if dialogue.source_entries.1 != assistant_entry.entry_id {
        return Err(Error::argument(format!(
            "dialogue {} answers from entry {}, not {}",
            dialogue.dialogue_id, dialogue.source_entries.1, assistant_entry.entry_id
        )));
    }
    let utts = dialogue.utterances.utterances();
    debug_assert_eq!(utts.len(), FINAL_UTTERANCES);

    let (chunks, query_vecs) = if cfg.k == 0 {
        (Vec::new(), Vec::new())
    } else {
        let mut chunks = chunk_journal(assistant_entry, cfg.window, cfg.stride)?;
        embed_chunks(&mut chunks, embedder)?;
        let queries: Vec<&str> = utts
            .iter()
            .filter(|u| u.role == Role::User)
            .map(|u| u.text.as_str())
            .collect();
        (chunks, embedder.embed_batch(&queries)?)
    };

    let mut records = Vec::with_capacity(utts.len() / 2);
    for turn in 0..utts.len() / 2 {
        let query = &utts[2 * turn];
        let target = &utts[2 * turn + 1];
        let selected = match query_vecs.get(turn) {
            Some(qv) => select_chunks(qv, &chunks, cfg.k, cfg.lambda)?,
            None => Vec::new(),
        };
        let texts: Vec<&str> = selected.iter().map(|c| c.text.as_str()).collect();
        records.push(RaftRecord {
            dialogue_id: dialogue.dialogue_id.clone(),
            turn,
            context_turns: utts[..2 * turn].to_vec(),
            query: query.text.clone(),
            enriched_input: enrich(&query.text, &texts),
            chunks: selected,
            target: target.text.clone(),
        });
    }
    Ok(records)
}

const INTERROGATIVES: [&str; 17] = [
    "what", "why", "how", "when", "where", "who", "which", "do", "does", "did", "is", "are", "can", "could", "would",
    "will", "should",
];

/// Question test: trailing `?`, or an interrogative first word.
pub fn is_question(text: &str) -> bool {
    let trimmed = text.trim();
    if trimmed.ends_with('?') {
        return true;
    }
    trimmed
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .is_some_and(|w| INTERROGATIVES.contains(&w.as_str()))
}

/// Decides whether a user utterance warrants retrieval.
pub trait QuestionClassifier: Send + Sync {
    fn is_question(&self, text: &str) -> Result<bool>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicQuestionClassifier;

impl QuestionClassifier for HeuristicQuestionClassifier {
    fn is_question(&self, text: &str) -> Result<bool> {
        Ok(is_question(text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagInput {
    pub text: String,
    pub retrieved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Enriches questions with journal context; other input passes through.
pub fn rag_enrich(
    utterance: &str,
    assistant_entry: Option<&JournalEntry>,
    embedder: &dyn Embedder,
    classifier: &dyn QuestionClassifier,
    cfg: &RetrievalConfig,
) -> Result<RagInput> {
    if utterance.trim().is_empty() {
        return Err(Error::argument("rag_enrich: utterance is empty"));
    }
    let passthrough = |warning: Option<String>| RagInput {
        text: utterance.to_string(),
        retrieved: false,
        warning,
    };
    if !classifier.is_question(utterance)? {
        return Ok(passthrough(None));
    }
    let entry = match assistant_entry {
        Some(e) if !e.body.trim().is_empty() => e,
        _ => return Ok(passthrough(Some("no journal context available".into()))),
    };
    if cfg.k == 0 {
        return Ok(passthrough(None));
    }
    let mut chunks = chunk_journal(entry, cfg.window, cfg.stride)?;
    embed_chunks(&mut chunks, embedder)?;
    let qv = embedder.embed_batch(&[utterance])?.remove(0);
    let selected = select_chunks(&qv, &chunks, cfg.k, cfg.lambda)?;
    let texts: Vec<&str> = selected.iter().map(|c| c.text.as_str()).collect();
    Ok(RagInput {
        text: enrich(utterance, &texts),
        retrieved: true,
        warning: None,
    })
}
