//! Dialogue types, author pairing, the generation prompt, and parsing of
//! backend completions into validated transcripts.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, JournalEntry};
use crate::error::{Error, Result};
use crate::text::word_count;

/// Instruction sent ahead of the two journals.
pub const INSTRUCTION: &str = "<Instruction>: Create a 9-turn dialogue in english between two authors based on the journal entries provided below. The dialogue should reflect a natural and engaging conversation, finding common ground between the authors' experiences, thoughts, or emotions. Ensure that the conversation stays true to the personality traits and tones expressed in the journal entries. Each author should contribute equally, with utterances that are concise, relevant, and no longer than 20 words.";

pub const JOURNAL_1: &str = "journal 1";
pub const JOURNAL_2: &str = "journal 2";

/// Utterances requested from the backend (9 turns).
pub const GENERATED_UTTERANCES: usize = 18;
/// Utterances in a finalized dialogue (8 turns).
pub const FINAL_UTTERANCES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub text: String,
    pub word_count: usize,
}

impl Utterance {
    pub fn new(role: Role, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let word_count = word_count(&text);
        if word_count == 0 {
            return Err(Error::argument("utterance text is empty"));
        }
        Ok(Utterance { role, text, word_count })
    }
}

/// Role-alternating utterance sequence starting with the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript(Vec<Utterance>);

impl Transcript {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        if !utterances.len().is_multiple_of(2) {
            return Err(Error::argument(format!("odd utterance count {}", utterances.len())));
        }
        for (i, u) in utterances.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if u.role != expected {
                return Err(Error::argument(format!("utterance {i} should be {expected:?}")));
            }
            if u.word_count == 0 {
                return Err(Error::argument(format!("utterance {i} is empty")));
            }
        }
        Ok(Transcript(utterances))
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn turns(&self) -> usize {
        self.0.len() / 2
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueFlags {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub toxic: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    /// (user author, assistant author).
    pub author_pair: (String, String),
    /// (user journal, assistant journal).
    pub source_entries: (String, String),
    pub utterances: Transcript,
    #[serde(default)]
    pub flags: DialogueFlags,
}

impl Dialogue {
    /// Wraps a finalized 16-utterance transcript.
    pub fn finalized(entry_a: &JournalEntry, entry_b: &JournalEntry, utterances: Transcript) -> Result<Self> {
        if utterances.len() != FINAL_UTTERANCES {
            return Err(Error::argument(format!(
                "finalized dialogue needs {FINAL_UTTERANCES} utterances, got {}",
                utterances.len()
            )));
        }
        Ok(Dialogue {
            dialogue_id: dialogue_id(&entry_a.entry_id, &entry_b.entry_id),
            author_pair: (entry_a.author_id.clone(), entry_b.author_id.clone()),
            source_entries: (entry_a.entry_id.clone(), entry_b.entry_id.clone()),
            utterances,
            flags: DialogueFlags::default(),
        })
    }

    pub fn turns(&self) -> usize {
        self.utterances.turns()
    }

    /// Checks the finalized-dialogue invariants.
    pub fn validate(&self) -> Result<()> {
        Transcript::new(self.utterances.0.clone())?;
        if self.utterances.len() != FINAL_UTTERANCES {
            return Err(Error::argument(format!(
                "dialogue {} has {} utterances, expected {FINAL_UTTERANCES}",
                self.dialogue_id,
                self.utterances.len()
            )));
        }
        Ok(())
    }
}

pub fn dialogue_id(entry_a: &str, entry_b: &str) -> String {
    format!("{entry_a}__{entry_b}")
}

/// Every unordered pair, lexicographic by `(first, second)`.
pub fn pair_authors(author_ids: &[String]) -> Result<Vec<(String, String)>> {
    let mut ids = author_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::argument(format!(
            "pairing needs at least 2 authors, got {}",
            ids.len()
        )));
    }
    let mut pairs = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            pairs.push((a.clone(), b.clone()));
        }
    }
    Ok(pairs)
}

/// Cartesian product of the pair's entries, first author's entries outer.
pub fn entry_combinations<'c>(
    pair: &(String, String),
    corpus: &'c Corpus,
) -> Result<Vec<(&'c JournalEntry, &'c JournalEntry)>> {
    for author in [&pair.0, &pair.1] {
        if !corpus.contains_author(author) {
            return Err(Error::argument(format!("author {author} not in corpus")));
        }
    }
    let left = corpus.author_entries(&pair.0);
    let right = corpus.author_entries(&pair.1);
    Ok(left.iter().flat_map(|a| right.iter().map(move |b| (*a, *b))).collect())
}

/// Neutralizes journal markers inside a body.
fn escape_markers(body: &str) -> String {
    body.replace("</journal", "&lt;/journal")
        .replace("<journal", "&lt;journal")
}

/// The generation prompt: instruction, then each body between its markers.
pub fn build_prompt(entry_a: &JournalEntry, entry_b: &JournalEntry) -> Result<String> {
    for e in [entry_a, entry_b] {
        if e.body.trim().is_empty() {
            return Err(Error::argument(format!("entry {} has an empty body", e.entry_id)));
        }
    }
    Ok(format!(
        "{INSTRUCTION}\n<{JOURNAL_1}>\n{}\n</{JOURNAL_1}>\n<{JOURNAL_2}>\n{}\n</{JOURNAL_2}>",
        escape_markers(entry_a.body.trim()),
        escape_markers(entry_b.body.trim()),
    ))
}

/// Which completion rule a transcript broke.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty completion")]
    Empty,
    #[error("no speaker-prefixed lines found")]
    NoSpeakers,
    #[error("role violation: utterance {index} repeats the previous speaker")]
    RoleViolation { index: usize },
    #[error("expected {expected} utterances, found {found}")]
    UtteranceCount { expected: usize, found: usize },
    #[error("utterance {index} has {words} words, limit is {limit}")]
    OverLength { index: usize, words: usize, limit: usize },
    #[error("utterance {index} is empty")]
    EmptyUtterance { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseConfig {
    /// Labels for the first journal's author, matched case-insensitively.
    pub speaker_1: Vec<String>,
    pub speaker_2: Vec<String>,
    pub expected_utterances: usize,
    pub max_words: usize,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            speaker_1: ["Author 1", "Author A", "Journal 1", "Speaker 1", "Person 1"]
                .map(String::from)
                .to_vec(),
            speaker_2: ["Author 2", "Author B", "Journal 2", "Speaker 2", "Person 2"]
                .map(String::from)
                .to_vec(),
            expected_utterances: GENERATED_UTTERANCES,
            max_words: 40,
        }
    }
}

impl ParseConfig {
    /// Returns (speaker, rest of line) if the line opens with a known label.
    ///
    /// Tolerates markdown emphasis and list bullets around the label, e.g.
    /// `**Author 1:** text` or `- Author 2: text`.
    fn speaker<'l>(&self, line: &'l str) -> Option<(u8, &'l str)> {
        let trimmed = line.trim_start().trim_start_matches(['-', '*', '#', '>', ' ']);
        for (who, labels) in [(1u8, &self.speaker_1), (2u8, &self.speaker_2)] {
            for label in labels {
                let Some(head) = trimmed.get(..label.len()) else {
                    continue;
                };
                if !head.eq_ignore_ascii_case(label) {
                    continue;
                }
                let rest = trimmed[label.len()..].trim_start_matches('*');
                let Some(rest) = rest.strip_prefix(':') else { continue };
                return Some((who, rest.trim_start_matches('*').trim()));
            }
        }
        None
    }
}

/// Parses a completion into a transcript.
///
/// Lines before the first speaker label are ignored; unlabeled lines after
/// it continue the current utterance. The first speaker becomes the user.
pub fn parse_dialogue(raw: &str, cfg: &ParseConfig) -> Result<Transcript, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut turns: Vec<(u8, String)> = Vec::new();
    for line in raw.lines() {
        if let Some((who, text)) = cfg.speaker(line) {
            if turns.last().is_some_and(|(prev, _)| *prev == who) {
                return Err(ParseError::RoleViolation { index: turns.len() });
            }
            turns.push((who, text.to_string()));
        } else if let Some((_, current)) = turns.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                if !current.is_empty() {
                    current.push(' ');
                }
                current.push_str(extra);
            }
        }
    }
    if turns.is_empty() {
        return Err(ParseError::NoSpeakers);
    }
    if turns.len() != cfg.expected_utterances {
        return Err(ParseError::UtteranceCount {
            expected: cfg.expected_utterances,
            found: turns.len(),
        });
    }
    let mut utterances = Vec::with_capacity(turns.len());
    for (index, (_, text)) in turns.into_iter().enumerate() {
        let words = word_count(&text);
        if words == 0 {
            return Err(ParseError::EmptyUtterance { index });
        }
        if words > cfg.max_words {
            return Err(ParseError::OverLength {
                index,
                words,
                limit: cfg.max_words,
            });
        }
        let role = if index % 2 == 0 { Role::User } else { Role::Assistant };
        utterances.push(Utterance {
            role,
            text,
            word_count: words,
        });
    }
    Ok(Transcript(utterances))
}

/// Drops the final (user, assistant) turn of a 9-turn transcript.
pub fn trim_last_turn(t: &Transcript) -> Result<Transcript> {
    if t.len() != GENERATED_UTTERANCES {
        return Err(Error::argument(format!(
            "trim_last_turn expects {GENERATED_UTTERANCES} utterances, got {}",
            t.len()
        )));
    }
    Ok(Transcript(t.0[..GENERATED_UTTERANCES - 2].to_vec()))
}
