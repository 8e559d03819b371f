//! Offline scorers. All are pure functions of `(text, seed)`.

use super::{
    require_batch, require_text, ChatBackend, DecodeSettings, Embedder, EmbeddingVector, ToxicityScorer,
    ToxicityScores, TraitScorer, TraitVector,
};
use crate::dialogue::{JOURNAL_1, JOURNAL_2};
use crate::error::{Error, Result};
use crate::text::tokenize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix finalizer; FNV alone leaves the high bits poorly mixed
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Signed feature hashing of word unigrams and bigrams into `dim` buckets,
/// scaled to unit length.
///
/// Words come from the shared lexical tokenizer; a text with no lexical
/// tokens (pure punctuation) falls back to its lowercased whitespace pieces.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim, seed }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut words = tokenize(text);
        if words.is_empty() {
            words = text.to_lowercase().split_whitespace().map(str::to_string).collect();
        }
        let mut v = vec![0.0; self.dim];
        let mut add = |feature: &str| {
            let h = fnv1a(self.seed, feature.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        for w in &words {
            add(&format!("u:{w}"));
        }
        for pair in words.windows(2) {
            add(&format!("b:{} {}", pair[0], pair[1]));
        }
        crate::text::unit(&v)
    }
}

impl Embedder for HashingEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        require_batch(texts)?;
        texts.iter().map(|t| EmbeddingVector::new(self.embed_one(t))).collect()
    }
}

/// Word-list trait scorer.
///
/// For each trait with marker lists `P` (raises the trait) and `N` (lowers
/// it), over the `n` lexical tokens of the text:
///
/// `score = clamp(0.5 + GAIN * (|tokens ∈ P| - |tokens ∈ N|) / n, 0, 1)`
#[derive(Debug, Clone, Default)]
pub struct LexiconTraitScorer;

impl LexiconTraitScorer {
    pub const GAIN: f64 = 4.0;

    /// Marker lists in O, C, E, A, N order: (raising, lowering).
    pub const LEXICON: [(&'static [&'static str], &'static [&'static str]); 5] = [
        (
            &[
                "curious", "imagine", "art", "idea", "ideas", "explore", "creative", "books", "music", "wonder", "new",
                "travel",
            ],
            &["routine", "boring", "same", "usual", "traditional"],
        ),
        (
            &[
                "plan",
                "planned",
                "organized",
                "goal",
                "goals",
                "work",
                "finished",
                "careful",
                "schedule",
                "discipline",
                "habit",
            ],
            &[
                "lazy",
                "procrastinate",
                "procrastinating",
                "messy",
                "forgot",
                "late",
                "skipped",
            ],
        ),
        (
            &[
                "friends", "party", "talk", "talked", "people", "fun", "excited", "social", "together", "met", "laugh",
            ],
            &["alone", "quiet", "shy", "lonely", "avoid", "stayed", "introvert"],
        ),
        (
            &[
                "kind", "help", "helped", "thank", "grateful", "love", "care", "forgive", "support", "nice", "share",
            ],
            &["angry", "annoyed", "rude", "blame", "hate", "argue", "selfish"],
        ),
        (
            &[
                "anxious",
                "anxiety",
                "worried",
                "worry",
                "stress",
                "stressed",
                "sad",
                "afraid",
                "panic",
                "cry",
                "depressed",
                "tired",
                "overwhelmed",
            ],
            &["calm", "relaxed", "peaceful", "content", "steady", "okay"],
        ),
    ];

    pub fn score_tokens(tokens: &[String]) -> [f64; 5] {
        let n = tokens.len().max(1) as f64;
        let mut out = [0.5; 5];
        for (slot, (raise, lower)) in out.iter_mut().zip(Self::LEXICON.iter()) {
            let up = tokens.iter().filter(|t| raise.contains(&t.as_str())).count() as f64;
            let down = tokens.iter().filter(|t| lower.contains(&t.as_str())).count() as f64;
            *slot = (0.5 + Self::GAIN * (up - down) / n).clamp(0.0, 1.0);
        }
        out
    }
}

impl TraitScorer for LexiconTraitScorer {
    fn classify_traits(&self, text: &str) -> Result<TraitVector> {
        require_text(text, "classify_traits")?;
        TraitVector::from_array(Self::score_tokens(&tokenize(text)))
    }
}

/// Flagged-word ratio scorer.
///
/// Each subclass score is `|tokens in that subclass list| / n`. The
/// `toxicity` score counts tokens found in any list.
#[derive(Debug, Clone, Default)]
pub struct WordListToxicityScorer;

impl WordListToxicityScorer {
    pub const SEVERE_TOXICITY: &'static [&'static str] = &["motherfucker", "scumbag"];
    pub const OBSCENE: &'static [&'static str] = &[
        "fuck", "fucking", "shit", "crap", "bullshit", "asshole", "bitch", "damn",
    ];
    pub const THREAT: &'static [&'static str] = &["kill", "murder", "stab", "shoot", "strangle"];
    pub const INSULT: &'static [&'static str] = &[
        "idiot",
        "stupid",
        "moron",
        "loser",
        "pathetic",
        "dumb",
        "worthless",
        "jerk",
    ];
    pub const IDENTITY_ATTACK: &'static [&'static str] = &["subhuman", "vermin", "savages"];

    fn lists() -> [&'static [&'static str]; 5] {
        [
            Self::SEVERE_TOXICITY,
            Self::OBSCENE,
            Self::THREAT,
            Self::INSULT,
            Self::IDENTITY_ATTACK,
        ]
    }

    pub fn score_tokens(tokens: &[String]) -> [f64; 6] {
        let n = tokens.len().max(1) as f64;
        let hits = |list: &[&str]| tokens.iter().filter(|t| list.contains(&t.as_str())).count() as f64 / n;
        let any = tokens
            .iter()
            .filter(|t| Self::lists().iter().any(|l| l.contains(&t.as_str())))
            .count() as f64
            / n;
        [
            any,
            hits(Self::SEVERE_TOXICITY),
            hits(Self::OBSCENE),
            hits(Self::THREAT),
            hits(Self::INSULT),
            hits(Self::IDENTITY_ATTACK),
        ]
    }
}

impl ToxicityScorer for WordListToxicityScorer {
    fn classify_toxicity(&self, text: &str) -> Result<ToxicityScores> {
        require_text(text, "classify_toxicity")?;
        ToxicityScores::from_array(Self::score_tokens(&tokenize(text)))
    }
}

/// Offline stand-in for the chat backend.
///
/// Reads the two journals out of a generation prompt and answers with a
/// nine-turn `Author 1:` / `Author 2:` script whose utterances are
/// consecutive 12-word windows of the respective journal.
#[derive(Debug, Clone, Default)]
pub struct OfflineDialogueSynth;

impl OfflineDialogueSynth {
    const WORDS_PER_UTTERANCE: usize = 12;

    fn section<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
        let open = format!("<{marker}>\n");
        let close = format!("\n</{marker}>");
        let start = prompt.find(&open)? + open.len();
        let end = start + prompt[start..].find(&close)?;
        Some(&prompt[start..end])
    }
}

impl ChatBackend for OfflineDialogueSynth {
    fn chat_complete(&self, prompt: &str, _decode: &DecodeSettings) -> Result<String> {
        require_text(prompt, "chat_complete")?;
        let journals = [JOURNAL_1, JOURNAL_2].map(|m| {
            Self::section(prompt, m)
                .map(|body| body.split_whitespace().collect::<Vec<_>>())
                .unwrap_or_default()
        });
        if journals.iter().any(Vec::is_empty) {
            return Err(Error::EmptyResponse);
        }
        let mut cursors = [0usize; 2];
        let mut lines = Vec::with_capacity(18);
        for i in 0..18 {
            let who = i % 2;
            let words = &journals[who];
            let take: Vec<&str> = (0..Self::WORDS_PER_UTTERANCE.min(words.len()))
                .map(|j| words[(cursors[who] + j) % words.len()])
                .collect();
            cursors[who] = (cursors[who] + take.len()) % words.len();
            lines.push(format!("Author {}: {}", who + 1, take.join(" ")));
        }
        Ok(lines.join("\n"))
    }
}
