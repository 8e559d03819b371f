//! Dataset statistics, generation-quality metrics and rater agreement.

mod agreement;
mod lexical;
mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::clients::Embedder;
use crate::dialogue::Dialogue;
use crate::error::{Error, Result};
use crate::text::{cosine, tokenize};

pub use agreement::{agreement, average_ranks, icc, mae, mean_squares, pearson, spearman, AgreementReport, IccForm};
pub use lexical::{
    bleu, corpus_bleu, lcs_len, meteor, rouge, RougeScores, BLEU_EPSILON, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA,
};
pub use stats::{dataset_stats, DatasetStats, SIMILARITY_DEFINITIONS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy token matching over per-token embeddings.
///
/// Precision is the mean over candidate tokens of the best cosine against
/// any reference token; recall is the mirror image. F1 is their harmonic
/// mean, or 0 when either side is not positive.
pub fn embed_score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<EmbedScore> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return Err(Error::argument("embed_score: candidate and reference need tokens"));
    }
    let mut vocab: Vec<&str> = c.iter().chain(&r).map(String::as_str).collect();
    vocab.sort_unstable();
    vocab.dedup();
    let vecs = embedder.embed_batch(&vocab)?;
    let lookup: HashMap<&str, &[f64]> = vocab.iter().copied().zip(vecs.iter().map(|v| v.values())).collect();

    let best = |from: &[String], to: &[String]| -> f64 {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| cosine(lookup[x.as_str()], lookup[y.as_str()]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    let precision = best(&c, &r);
    let recall = best(&r, &c);
    let f1 = if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EmbedScore { precision, recall, f1 })
}

/// The six averaged components; any may be missing before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricComponents {
    pub bleu: Option<f64>,
    pub meteor: Option<f64>,
    pub embed_score_f1: Option<f64>,
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
}

impl MetricComponents {
    pub fn complete(bleu: f64, meteor: f64, embed_score_f1: f64, rouge1: f64, rouge2: f64, rouge_l: f64) -> Self {
        MetricComponents {
            bleu: Some(bleu),
            meteor: Some(meteor),
            embed_score_f1: Some(embed_score_f1),
            rouge1: Some(rouge1),
            rouge2: Some(rouge2),
            rouge_l: Some(rouge_l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub meteor: f64,
    pub embed_score_f1: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub average: f64,
}

pub fn average_score(c: &MetricComponents) -> Result<MetricReport> {
    let named = [
        ("bleu", c.bleu),
        ("meteor", c.meteor),
        ("embed_score_f1", c.embed_score_f1),
        ("rouge1", c.rouge1),
        ("rouge2", c.rouge2),
        ("rouge_l", c.rouge_l),
    ];
    let mut vals = [0.0; 6];
    for (slot, (name, v)) in vals.iter_mut().zip(named) {
        *slot = v
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::argument(format!("metric component {name} is missing")))?;
    }
    Ok(MetricReport {
        bleu: vals[0],
        meteor: vals[1],
        embed_score_f1: vals[2],
        rouge1: vals[3],
        rouge2: vals[4],
        rouge_l: vals[5],
        average: vals.iter().sum::<f64>() / 6.0,
    })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub dialogue_id: String,
    /// 0-based assistant turn.
    pub turn: usize,
    pub candidate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub dialogue_id: String,
    pub turn: usize,
    pub bleu: f64,
    pub meteor: f64,
    pub embed_score: EmbedScore,
    pub rouge: RougeScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub items: Vec<ItemScores>,
    /// BLEU is corpus-level; the other components are item means.
    pub aggregate: MetricReport,
    pub unmatched_predictions: usize,
}

/// Scores predictions against the assistant utterance they replace.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    dialogues: &[Dialogue],
    embedder: &dyn Embedder,
) -> Result<EvaluationReport> {
    let by_id: BTreeMap<&str, &Dialogue> = dialogues.iter().map(|d| (d.dialogue_id.as_str(), d)).collect();
    let mut items = Vec::new();
    let mut pairs: Vec<(&str, Vec<&str>)> = Vec::new();
    let mut unmatched = 0;
    for p in predictions {
        let reference = by_id
            .get(p.dialogue_id.as_str())
            .and_then(|d| d.utterances.utterances().get(2 * p.turn + 1));
        let Some(reference) = reference else {
            unmatched += 1;
            continue;
        };
        let r = reference.text.as_str();
        let rg = rouge(&p.candidate, r)?;
        items.push(ItemScores {
            dialogue_id: p.dialogue_id.clone(),
            turn: p.turn,
            bleu: bleu(&p.candidate, &[r])?,
            meteor: meteor(&p.candidate, r)?,
            embed_score: embed_score(&p.candidate, r, embedder)?,
            rouge: rg,
        });
        pairs.push((p.candidate.as_str(), vec![r]));
    }
    if items.is_empty() {
        return Err(Error::argument("no prediction matched a reference utterance"));
    }
    let mean = |f: &dyn Fn(&ItemScores) -> f64| items.iter().map(f).sum::<f64>() / items.len() as f64;
    let aggregate = average_score(&MetricComponents::complete(
        corpus_bleu(&pairs)?,
        mean(&|i| i.meteor),
        mean(&|i| i.embed_score.f1),
        mean(&|i| i.rouge.rouge1),
        mean(&|i| i.rouge.rouge2),
        mean(&|i| i.rouge.rouge_l),
    ))?;
    Ok(EvaluationReport {
        items,
        aggregate,
        unmatched_predictions: unmatched,
    })
}
