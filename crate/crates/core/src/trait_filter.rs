//! Two-level Big-Five convergence filtering.
//!
//! Journal level: an entry survives when its trait vector's distance from
//! the author's mean is within the author's threshold (`alpha`). Author
//! level: author means are recomputed over surviving entries and an author
//! survives when its mean's distance from the global mean is within the
//! cross-author threshold (`beta`).
//!
//! In `stddev` mode a threshold is `mean(Δ) + parameter * std(Δ)` over the
//! population of deviations at that level; in `absolute` mode it is the
//! parameter itself. Thresholds carry a relative tolerance of `1e-9` so
//! that equal deviations never fall above their own rounded mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clients::{TraitScorer, TraitVector};
use crate::corpus::JournalEntry;
use crate::error::{Error, Result};
use crate::text::mean_std;

const THRESHOLD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Stddev,
    Absolute,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraitNorm {
    #[default]
    L2,
    L1,
    Linf,
}

impl TraitNorm {
    pub fn distance(self, a: &[f64; 5], b: &[f64; 5]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            TraitNorm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            TraitNorm::L1 => diffs.sum(),
            TraitNorm::Linf => diffs.fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryTraits {
    pub entry_id: String,
    pub traits: TraitVector,
    /// Distance of `traits` from the author mean.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub author_id: String,
    pub entries: Vec<EntryTraits>,
    pub mean_traits: TraitVector,
}

impl AuthorProfile {
    /// Builds the profile from already-scored entries.
    pub fn from_traits(author_id: &str, scored: Vec<(String, TraitVector)>, norm: TraitNorm) -> Result<Self> {
        if scored.is_empty() {
            return Err(Error::argument(format!("author {author_id} has no scored entries")));
        }
        let arrays: Vec<[f64; 5]> = scored.iter().map(|(_, t)| t.to_array()).collect();
        let mean = component_mean(&arrays);
        let entries = scored
            .into_iter()
            .zip(&arrays)
            .map(|((entry_id, traits), a)| EntryTraits {
                entry_id,
                traits,
                deviation: norm.distance(a, &mean),
            })
            .collect();
        Ok(AuthorProfile {
            author_id: author_id.to_string(),
            entries,
            mean_traits: TraitVector::from_array(mean)?,
        })
    }

    pub fn deviations(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.deviation).collect()
    }

    /// Profile restricted to `keep`, with mean and deviations recomputed.
    pub fn restricted(&self, keep: &[String], norm: TraitNorm) -> Result<Self> {
        let scored = self
            .entries
            .iter()
            .filter(|e| keep.contains(&e.entry_id))
            .map(|e| (e.entry_id.clone(), e.traits))
            .collect();
        Self::from_traits(&self.author_id, scored, norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalProfile {
    pub mean_traits: TraitVector,
    pub author_deviations: BTreeMap<String, f64>,
    pub threshold: f64,
}

fn component_mean(vs: &[[f64; 5]]) -> [f64; 5] {
    let mut m = [0.0; 5];
    for v in vs {
        for (acc, x) in m.iter_mut().zip(v) {
            *acc += x;
        }
    }
    m.map(|s| s / vs.len() as f64)
}

/// Scores every entry of one author.
pub fn score_author(
    author_id: &str,
    entries: &[&JournalEntry],
    scorer: &dyn TraitScorer,
    norm: TraitNorm,
) -> Result<AuthorProfile> {
    let scored = entries
        .iter()
        .map(|e| {
            let t = scorer.classify_traits(&e.body).map_err(|err| match err {
                Error::Transport { attempts, message } => Error::Transport {
                    attempts,
                    message: format!("entry {}: {message}", e.entry_id),
                },
                other => other,
            })?;
            Ok((e.entry_id.clone(), t))
        })
        .collect::<Result<Vec<_>>>()?;
    AuthorProfile::from_traits(author_id, scored, norm)
}

fn check_parameter(name: &str, value: f64) -> Result<()> {
    if value.is_nan() || value == f64::NEG_INFINITY {
        Err(Error::argument(format!(
            "{name} must be a number greater than -inf, got {value}"
        )))
    } else {
        Ok(())
    }
}

pub fn threshold(deviations: &[f64], parameter: f64, mode: ThresholdMode) -> f64 {
    let raw = match mode {
        ThresholdMode::Stddev => {
            let (mu, sigma) = mean_std(deviations);
            // σ = 0 must not turn an infinite parameter into NaN
            if sigma == 0.0 {
                mu
            } else {
                mu + parameter * sigma
            }
        }
        ThresholdMode::Absolute => parameter,
    };
    raw * (1.0 + THRESHOLD_TOLERANCE)
}

/// Entry ids (in profile order) within the author's `alpha` threshold.
pub fn filter_journals(profile: &AuthorProfile, alpha: f64, mode: ThresholdMode) -> Result<Vec<String>> {
    check_parameter("alpha", alpha)?;
    if profile.entries.len() == 1 {
        return Ok(vec![profile.entries[0].entry_id.clone()]);
    }
    let tau = threshold(&profile.deviations(), alpha, mode);
    Ok(profile
        .entries
        .iter()
        .filter(|e| e.deviation <= tau)
        .map(|e| e.entry_id.clone())
        .collect())
}

/// Author ids (in input order) within the cross-author `beta` threshold.
pub fn filter_authors(
    profiles: &[AuthorProfile],
    beta: f64,
    mode: ThresholdMode,
    norm: TraitNorm,
) -> Result<(Vec<String>, GlobalProfile)> {
    check_parameter("beta", beta)?;
    if profiles.is_empty() {
        return Err(Error::argument("filter_authors: no author profiles"));
    }
    let means: Vec<[f64; 5]> = profiles.iter().map(|p| p.mean_traits.to_array()).collect();
    let global = component_mean(&means);
    let deviations: Vec<f64> = means.iter().map(|m| norm.distance(m, &global)).collect();
    let tau = threshold(&deviations, beta, mode);
    let retained = profiles
        .iter()
        .zip(&deviations)
        .filter(|(_, &d)| d <= tau)
        .map(|(p, _)| p.author_id.clone())
        .collect();
    let author_deviations = profiles.iter().map(|p| p.author_id.clone()).zip(deviations).collect();
    Ok((
        retained,
        GlobalProfile {
            mean_traits: TraitVector::from_array(global)?,
            author_deviations,
            threshold: tau,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorFilterRecord {
    pub author_id: String,
    pub journal_threshold: f64,
    pub retained_entries: Vec<String>,
    /// Profile over the retained entries; feeds the author-level pass.
    pub refined: Option<AuthorProfile>,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitFilterOutcome {
    pub authors: Vec<AuthorFilterRecord>,
    pub global: Option<GlobalProfile>,
    pub retained_authors: Vec<String>,
}

impl TraitFilterOutcome {
    /// Retained entry ids of retained authors.
    pub fn retained_entries(&self) -> Vec<String> {
        self.authors
            .iter()
            .filter(|a| a.retained)
            .flat_map(|a| a.retained_entries.iter().cloned())
            .collect()
    }
}

/// Journal-level pass, mean recomputation, then the author-level pass.
pub fn apply_filters(
    profiles: &[AuthorProfile],
    alpha: f64,
    beta: f64,
    mode: ThresholdMode,
    norm: TraitNorm,
) -> Result<TraitFilterOutcome> {
    let mut authors = Vec::with_capacity(profiles.len());
    let mut refined = Vec::new();
    for p in profiles {
        let kept = filter_journals(p, alpha, mode)?;
        let journal_threshold = threshold(&p.deviations(), alpha, mode);
        let r = if kept.is_empty() {
            None
        } else {
            Some(p.restricted(&kept, norm)?)
        };
        if let Some(r) = &r {
            refined.push(r.clone());
        }
        authors.push(AuthorFilterRecord {
            author_id: p.author_id.clone(),
            journal_threshold,
            retained_entries: kept,
            refined: r,
            retained: false,
        });
    }
    if refined.is_empty() {
        return Ok(TraitFilterOutcome {
            authors,
            global: None,
            retained_authors: Vec::new(),
        });
    }
    let (retained_authors, global) = filter_authors(&refined, beta, mode, norm)?;
    for a in &mut authors {
        a.retained = retained_authors.contains(&a.author_id);
    }
    Ok(TraitFilterOutcome {
        authors,
        global: Some(global),
        retained_authors,
    })
}
