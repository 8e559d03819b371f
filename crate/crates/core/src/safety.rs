//! Toxicity scoring, the dialogue flag rule and clean/flagged partitioning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clients::{ToxicityScorer, ToxicityScores, ToxicitySubclass};
use crate::dialogue::Dialogue;
use crate::error::{Error, Result};
use crate::io::write_jsonl;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Dialogues with a toxic fraction strictly above this are flagged.
pub const FLAG_FRACTION: f64 = 0.25;
/// Subclasses that flag a dialogue from a single utterance.
pub const SEVERE_SUBCLASSES: [ToxicitySubclass; 3] = [
    ToxicitySubclass::SevereToxicity,
    ToxicitySubclass::Threat,
    ToxicitySubclass::IdentityAttack,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityReport {
    pub per_utterance: Vec<ToxicityScores>,
    pub toxic_utterance_count: usize,
    pub toxic_fraction: f64,
    pub subclass_flags: BTreeMap<ToxicitySubclass, bool>,
    pub flagged: bool,
}

impl ToxicityReport {
    /// Builds a report from per-utterance scores at `threshold`.
    pub fn from_scores(per_utterance: Vec<ToxicityScores>, threshold: f64) -> Result<Self> {
        if per_utterance.is_empty() {
            return Err(Error::argument("toxicity report needs at least one utterance"));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::argument(format!(
                "toxicity threshold {threshold} outside [0, 1]"
            )));
        }
        let toxic_utterance_count = per_utterance.iter().filter(|s| s.toxicity >= threshold).count();
        let subclass_flags = ToxicitySubclass::ALL
            .iter()
            .map(|&sub| (sub, per_utterance.iter().any(|s| s.get(sub) >= threshold)))
            .collect();
        let mut report = ToxicityReport {
            toxic_fraction: toxic_utterance_count as f64 / per_utterance.len() as f64,
            per_utterance,
            toxic_utterance_count,
            subclass_flags,
            flagged: false,
        };
        report.flagged = apply_flag_rule(&report);
        Ok(report)
    }

    pub fn subclass(&self, sub: ToxicitySubclass) -> bool {
        self.subclass_flags.get(&sub).copied().unwrap_or(false)
    }
}

pub fn score_dialogue(dialogue: &Dialogue, scorer: &dyn ToxicityScorer, threshold: f64) -> Result<ToxicityReport> {
    let scores = dialogue
        .utterances
        .utterances()
        .iter()
        .map(|u| scorer.classify_toxicity(&u.text))
        .collect::<Result<Vec<_>>>()?;
    ToxicityReport::from_scores(scores, threshold)
}

pub fn apply_flag_rule(report: &ToxicityReport) -> bool {
    report.toxic_fraction > FLAG_FRACTION || SEVERE_SUBCLASSES.iter().any(|&s| report.subclass(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedDialogue {
    #[serde(flatten)]
    pub dialogue: Dialogue,
    pub toxicity: ToxicityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub clean: usize,
    pub flagged: usize,
}

/// Splits dialogues by their report's flag and writes both files, even
/// when one side is empty.
pub fn partition(
    dialogues: &[Dialogue],
    reports: &[ToxicityReport],
    clean_path: &Path,
    flagged_path: &Path,
) -> Result<PartitionCounts> {
    if dialogues.len() != reports.len() {
        return Err(Error::argument(format!(
            "{} dialogues but {} toxicity reports",
            dialogues.len(),
            reports.len()
        )));
    }
    let mut clean = Vec::new();
    let mut flagged = Vec::new();
    for (d, r) in dialogues.iter().zip(reports) {
        if r.flagged {
            let mut dialogue = d.clone();
            dialogue.flags.toxic = true;
            flagged.push(FlaggedDialogue {
                dialogue,
                toxicity: r.clone(),
            });
        } else {
            clean.push(d.clone());
        }
    }
    write_jsonl(clean_path, &clean)?;
    write_jsonl(flagged_path, &flagged)?;
    Ok(PartitionCounts {
        clean: clean.len(),
        flagged: flagged.len(),
    })
}

/// Per-subclass counts in the layout of the toxicity summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassCounts {
    /// Utterances whose subclass score reaches the threshold.
    pub utterances: usize,
    /// Dialogues in which the subclass meets its dialogue-level condition:
    /// any utterance for the severe subclasses, more than 25% of
    /// utterances for the others.
    pub dialogues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicitySummary {
    pub threshold: f64,
    pub dialogues: usize,
    pub utterances: usize,
    pub flagged_dialogues: usize,
    pub subclasses: BTreeMap<ToxicitySubclass, SubclassCounts>,
}

pub fn summarize(reports: &[ToxicityReport], threshold: f64) -> ToxicitySummary {
    let mut subclasses = BTreeMap::new();
    for sub in ToxicitySubclass::ALL {
        let severe = SEVERE_SUBCLASSES.contains(&sub);
        let mut counts = SubclassCounts {
            utterances: 0,
            dialogues: 0,
        };
        for r in reports {
            let hits = r.per_utterance.iter().filter(|s| s.get(sub) >= threshold).count();
            counts.utterances += hits;
            let fires = if severe {
                hits > 0
            } else {
                hits as f64 / r.per_utterance.len() as f64 > FLAG_FRACTION
            };
            counts.dialogues += usize::from(fires);
        }
        subclasses.insert(sub, counts);
    }
    ToxicitySummary {
        threshold,
        dialogues: reports.len(),
        utterances: reports.iter().map(|r| r.per_utterance.len()).sum(),
        flagged_dialogues: reports.iter().filter(|r| r.flagged).count(),
        subclasses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(toxic: usize, total: usize) -> Vec<ToxicityScores> {
        (0..total)
            .map(|i| ToxicityScores {
                toxicity: if i < toxic { 0.9 } else { 0.0 },
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn fraction_boundary_is_strict() {
        let quarter = ToxicityReport::from_scores(scores(4, 16), 0.5).unwrap();
        assert_eq!(quarter.toxic_fraction, 0.25);
        assert!(!quarter.flagged);
        let more = ToxicityReport::from_scores(scores(5, 16), 0.5).unwrap();
        assert_eq!(more.toxic_fraction, 0.3125);
        assert!(more.flagged);
        let none = ToxicityReport::from_scores(scores(0, 16), 0.5).unwrap();
        assert!(!none.flagged);
        assert_eq!(none.toxic_fraction, 0.0);
    }

    #[test]
    fn severe_subclass_flags_alone() {
        let mut s = scores(0, 16);
        s[7].identity_attack = 0.8;
        let r = ToxicityReport::from_scores(s, 0.5).unwrap();
        assert_eq!(r.toxic_fraction, 0.0);
        assert!(r.subclass(ToxicitySubclass::IdentityAttack));
        assert!(r.flagged);
    }

    #[test]
    fn insult_alone_does_not_flag() {
        let mut s = scores(0, 16);
        s[0].insult = 0.9;
        let r = ToxicityReport::from_scores(s, 0.5).unwrap();
        assert!(r.subclass(ToxicitySubclass::Insult));
        assert!(!r.flagged);
    }

    #[test]
    fn summary_counts_per_subclass() {
        let mut a = scores(5, 16);
        a[0].threat = 0.7;
        let b = scores(2, 16);
        let reports = vec![
            ToxicityReport::from_scores(a, 0.5).unwrap(),
            ToxicityReport::from_scores(b, 0.5).unwrap(),
        ];
        let s = summarize(&reports, 0.5);
        assert_eq!(
            s.subclasses[&ToxicitySubclass::Toxicity],
            SubclassCounts {
                utterances: 7,
                dialogues: 1
            }
        );
        assert_eq!(
            s.subclasses[&ToxicitySubclass::Threat],
            SubclassCounts {
                utterances: 1,
                dialogues: 1
            }
        );
        assert_eq!(s.flagged_dialogues, 1);
        assert_eq!(s.utterances, 32);
    }
}
