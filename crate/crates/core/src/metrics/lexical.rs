//! BLEU, METEOR (exact-match stage) and ROUGE over the shared tokenizer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const BLEU_MAX_ORDER: usize = 4;
/// Numerator used for an order with zero clipped matches.
pub const BLEU_EPSILON: f64 = 0.1;

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

fn tokens_of(text: &str, what: &str) -> Result<Vec<String>> {
    let t = tokenize(text);
    if t.is_empty() {
        Err(Error::argument(format!("{what} has no tokens")))
    } else {
        Ok(t)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Default)]
struct BleuStats {
    matches: [usize; BLEU_MAX_ORDER],
    totals: [usize; BLEU_MAX_ORDER],
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn add(&mut self, cand: &[String], refs: &[Vec<String>]) {
        for n in 1..=BLEU_MAX_ORDER {
            let cc = ngram_counts(cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(g).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            self.matches[n - 1] += cc
                .iter()
                .map(|(g, &c)| c.min(*max_ref.get(g).unwrap_or(&0)))
                .sum::<usize>();
            self.totals[n - 1] += cand.len().saturating_sub(n - 1);
        }
        self.cand_len += cand.len();
        // closest reference length, shorter on ties
        let closest = refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap_or(0);
        self.ref_len += closest;
    }

    fn score(&self) -> f64 {
        if self.matches[0] == 0 {
            return 0.0;
        }
        let orders: Vec<usize> = (0..BLEU_MAX_ORDER).filter(|&i| self.totals[i] > 0).collect();
        let w = 1.0 / orders.len() as f64;
        let log_p: f64 = orders
            .iter()
            .map(|&i| {
                let num = if self.matches[i] == 0 {
                    BLEU_EPSILON
                } else {
                    self.matches[i] as f64
                };
                w * (num / self.totals[i] as f64).ln()
            })
            .sum();
        let (c, r) = (self.cand_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        (bp * log_p.exp()).clamp(0.0, 1.0)
    }
}

/// BLEU-4 of one candidate against one or more references.
///
/// Clipped n-gram precisions for `n = 1..=4` are combined with uniform
/// weights over the orders the candidate is long enough to have. An order
/// with no clipped match uses `ε / total` with `ε = 0.1`; a candidate with
/// no unigram match scores 0. Brevity penalty uses the closest reference
/// length.
pub fn bleu(candidate: &str, references: &[&str]) -> Result<f64> {
    corpus_bleu(&[(candidate, references.to_vec())])
}

/// Corpus-level BLEU-4: statistics are summed over items before combining.
pub fn corpus_bleu(items: &[(&str, Vec<&str>)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::argument("corpus_bleu: no items"));
    }
    let mut stats = BleuStats::default();
    for (cand, refs) in items {
        if refs.is_empty() {
            return Err(Error::argument("bleu: no references"));
        }
        let c = tokens_of(cand, "candidate")?;
        let r = refs
            .iter()
            .map(|r| tokens_of(r, "reference"))
            .collect::<Result<Vec<_>>>()?;
        stats.add(&c, &r);
    }
    Ok(stats.score())
}

/// Greedy exact alignment: each candidate token, left to right, takes the
/// earliest unused reference position holding the same token.
fn align(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (i, t) in cand.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j] == *t) {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// METEOR with the exact-match module only.
///
/// `Fmean = P·R / (α·P + (1−α)·R)`, `Pen = γ·(chunks/m)^β`, score
/// `Fmean·(1 − Pen)`. Fragmentation is 0 when every token on both sides
/// matches in a single chunk.
pub fn meteor(candidate: &str, reference: &str) -> Result<f64> {
    let c = tokens_of(candidate, "candidate")?;
    let r = tokens_of(reference, "reference")?;
    let pairs = align(&c, &r);
    let m = pairs.len();
    if m == 0 {
        return Ok(0.0);
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let fmean = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
    let frag = if chunks == 1 && m == c.len() && m == r.len() {
        0.0
    } else {
        chunks as f64 / m as f64
    };
    let penalty = METEOR_GAMMA * frag.powf(METEOR_BETA);
    Ok((fmean * (1.0 - penalty)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

fn ngram_f1(c: &[String], r: &[String], n: usize) -> f64 {
    let cc = ngram_counts(c, n);
    let rc = ngram_counts(r, n);
    let overlap = cc.iter().map(|(g, &k)| k.min(*rc.get(g).unwrap_or(&0))).sum();
    f1(overlap, c.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1))
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-1/2 F1 on clipped n-gram overlap and ROUGE-L F1 on the LCS.
pub fn rouge(candidate: &str, reference: &str) -> Result<RougeScores> {
    let c = tokens_of(candidate, "candidate")?;
    let r = tokens_of(reference, "reference")?;
    Ok(RougeScores {
        rouge1: ngram_f1(&c, &r, 1),
        rouge2: ngram_f1(&c, &r, 2),
        rouge_l: f1(lcs_len(&c, &r), c.len(), r.len()),
    })
}
