#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use jic_core::clients::{ChatBackend, DecodeSettings, OfflineDialogueSynth};
use jic_core::corpus::{Corpus, JournalEntry};
use jic_core::Result;

pub const SENTENCES: [&str; 12] = [
    "I walked by the river today and felt calm.",
    "The water was bright and the air smelled of rain.",
    "Work was stressful and I worried about the deadline.",
    "My manager was kind about the delay though.",
    "We hosted friends for dinner and laughed for hours.",
    "I love cooking for people I care about.",
    "I read a novel about the sea last night.",
    "It made me curious about sailing lessons.",
    "My sister called and we talked about our parents.",
    "I felt grateful and a little sad afterwards.",
    "Morning run in the cold left my legs sore.",
    "My head is clear and I am proud of the habit.",
];

pub fn entry(id: &str, author: &str, body: &str) -> JournalEntry {
    JournalEntry {
        entry_id: id.into(),
        author_id: author.into(),
        title: String::new(),
        body: body.into(),
        created_at: 0,
        source: "test".into(),
        url: String::new(),
    }
}

/// `counts[a]` entries for author `a`, each a distinct three-sentence body.
pub fn corpus_with(counts: &[usize]) -> Corpus {
    let mut entries = Vec::new();
    let mut n = 0;
    for (a, &c) in counts.iter().enumerate() {
        for j in 0..c {
            let body = (0..3)
                .map(|s| SENTENCES[(a * 2 + j + s * 5) % SENTENCES.len()])
                .collect::<Vec<_>>()
                .join(" ");
            entries.push(entry(
                &format!("e{n:02}"),
                &format!("author{a}"),
                &format!("{body} Entry {n}."),
            ));
            n += 1;
        }
    }
    Corpus::from_entries(entries).unwrap()
}

/// Raw dump in the default (submission) field schema.
pub fn write_dump(path: &Path, counts: &[usize]) {
    let corpus = corpus_with(counts);
    let lines: Vec<String> = corpus
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            serde_json::json!({
                "id": e.entry_id,
                "author": e.author_id,
                "selftext": e.body,
                "title": "entry",
                "created_utc": 1_600_000_000 + i as i64,
                "subreddit": "Journaling",
            })
            .to_string()
        })
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Delegates to the offline synthesizer and audits calls per prompt.
/// Optionally raises `cancel` once `cancel_after` calls have been made.
pub struct CountingChat {
    inner: OfflineDialogueSynth,
    pub calls: AtomicUsize,
    pub per_prompt: Mutex<HashMap<String, usize>>,
    cancel: Option<(Arc<AtomicBool>, usize)>,
}

impl CountingChat {
    pub fn new() -> Self {
        CountingChat {
            inner: OfflineDialogueSynth,
            calls: AtomicUsize::new(0),
            per_prompt: Mutex::new(HashMap::new()),
            cancel: None,
        }
    }

    pub fn cancelling(flag: Arc<AtomicBool>, after: usize) -> Self {
        CountingChat {
            cancel: Some((flag, after)),
            ..Self::new()
        }
    }

    pub fn total(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for CountingChat {
    fn chat_complete(&self, prompt: &str, decode: &DecodeSettings) -> Result<String> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        *self.per_prompt.lock().unwrap().entry(prompt.to_string()).or_insert(0) += 1;
        if let Some((flag, after)) = &self.cancel {
            if n >= *after {
                flag.store(true, Ordering::SeqCst);
            }
        }
        self.inner.chat_complete(prompt, decode)
    }
}

/// Shared counting chat usable where an owned backend is needed.
pub struct SharedChat(pub Arc<CountingChat>);

impl ChatBackend for SharedChat {
    fn chat_complete(&self, prompt: &str, decode: &DecodeSettings) -> Result<String> {
        self.0.chat_complete(prompt, decode)
    }
}

/// A well-formed 18-utterance completion.
pub fn script(turns: usize) -> String {
    (0..turns * 2)
        .map(|i| format!("Author {}: line number {i} of the talk.", i % 2 + 1))
        .collect::<Vec<_>>()
        .join("\n")
}
