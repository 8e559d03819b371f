use serde::{Deserialize, Serialize};

use crate::clients::Embedder;
use crate::dialogue::Dialogue;
use crate::error::{Error, Result};
use crate::text::cosine;

pub const SIMILARITY_DEFINITIONS: &str = "topic consistency: mean cosine of each utterance embedding to its dialogue centroid, averaged over dialogues; semantic similarity: mean cosine of consecutive utterance embeddings, averaged over dialogues";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_conversations: usize,
    pub total_turns: usize,
    pub avg_turns: f64,
    pub total_utterances: usize,
    pub avg_utterances_per_conv: f64,
    pub avg_words_per_utterance: f64,
    pub avg_conv_length_words: f64,
    pub longest_conv_utterances: usize,
    pub shortest_conv_utterances: usize,
    pub longest_conv_words: usize,
    pub shortest_conv_words: usize,
    pub avg_topic_consistency: f64,
    pub avg_semantic_similarity: f64,
    pub similarity_definitions: String,
}

/// Table-style statistics; embeds each dialogue's utterances in one batch.
pub fn dataset_stats(dialogues: &[Dialogue], embedder: &dyn Embedder) -> Result<DatasetStats> {
    if dialogues.is_empty() {
        return Err(Error::argument("dataset_stats: empty collection"));
    }
    let n = dialogues.len();
    let mut total_utts = 0;
    let mut total_words = 0;
    let mut utt_counts = Vec::with_capacity(n);
    let mut word_counts = Vec::with_capacity(n);
    let mut topic_sum = 0.0;
    let mut semantic_sum = 0.0;

    for d in dialogues {
        d.validate()?;
        let utts = d.utterances.utterances();
        let words: usize = utts.iter().map(|u| u.word_count).sum();
        total_utts += utts.len();
        total_words += words;
        utt_counts.push(utts.len());
        word_counts.push(words);

        let texts: Vec<&str> = utts.iter().map(|u| u.text.as_str()).collect();
        let vecs = embedder.embed_batch(&texts)?;
        let dim = vecs[0].dim();
        let mut centroid = vec![0.0; dim];
        for v in &vecs {
            for (c, x) in centroid.iter_mut().zip(v.values()) {
                *c += x / vecs.len() as f64;
            }
        }
        topic_sum += vecs.iter().map(|v| cosine(v.values(), &centroid)).sum::<f64>() / vecs.len() as f64;
        semantic_sum += vecs
            .windows(2)
            .map(|w| cosine(w[0].values(), w[1].values()))
            .sum::<f64>()
            / (vecs.len() - 1) as f64;
    }

    let total_turns = total_utts / 2;
    Ok(DatasetStats {
        n_conversations: n,
        total_turns,
        avg_turns: total_turns as f64 / n as f64,
        total_utterances: total_utts,
        avg_utterances_per_conv: total_utts as f64 / n as f64,
        avg_words_per_utterance: total_words as f64 / total_utts as f64,
        avg_conv_length_words: total_words as f64 / n as f64,
        longest_conv_utterances: *utt_counts.iter().max().unwrap(),
        shortest_conv_utterances: *utt_counts.iter().min().unwrap(),
        longest_conv_words: *word_counts.iter().max().unwrap(),
        shortest_conv_words: *word_counts.iter().min().unwrap(),
        avg_topic_consistency: topic_sum / n as f64,
        avg_semantic_similarity: semantic_sum / n as f64,
        similarity_definitions: SIMILARITY_DEFINITIONS.to_string(),
    })
}
