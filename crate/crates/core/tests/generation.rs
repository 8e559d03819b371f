mod common;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use common::{corpus_with, entry, script, CountingChat};
use jic_core::clients::{ChatBackend, DecodeSettings, OfflineDialogueSynth};
use jic_core::corpus::Corpus;
use jic_core::dialogue::{Role, FINAL_UTTERANCES};
use jic_core::generate::{generate_all, load_journal, GenerationConfig, JournalRecord};
use jic_core::{Error, Result};

fn cfg(workers: usize) -> GenerationConfig {
    GenerationConfig {
        workers,
        ..Default::default()
    }
}

#[test]
fn three_single_entry_authors_give_three_dialogues() {
    let corpus = corpus_with(&[1, 1, 1]);
    let out = generate_all(&corpus, &OfflineDialogueSynth, &cfg(2), None, None).unwrap();
    assert_eq!(out.planned, 3);
    assert_eq!(out.dialogues.len(), 3);
    assert!(out.skips.is_empty());
    for d in &out.dialogues {
        assert_eq!(d.utterances.len(), FINAL_UTTERANCES);
        assert_eq!(d.utterances.utterances()[0].role, Role::User);
        assert!(d.author_pair.0 < d.author_pair.1);
    }
    let ids: Vec<&str> = out.dialogues.iter().map(|d| d.dialogue_id.as_str()).collect();
    assert_eq!(ids, ["e00__e01", "e00__e02", "e01__e02"]);
}

#[test]
fn combinations_are_the_entry_product_per_pair() {
    let corpus = corpus_with(&[2, 3, 1]);
    let out = generate_all(&corpus, &OfflineDialogueSynth, &cfg(4), None, None).unwrap();
    // 2*3 + 2*1 + 3*1
    assert_eq!(out.planned, 11);
    assert_eq!(out.dialogues.len(), 11);
}

struct Malformed(AtomicUsize);

impl ChatBackend for Malformed {
    fn chat_complete(&self, prompt: &str, _d: &DecodeSettings) -> Result<String> {
        self.0.fetch_add(1, Ordering::SeqCst);
        if prompt.contains("BROKEN") {
            Ok(script(8))
        } else {
            Ok(script(9))
        }
    }
}

#[test]
fn malformed_pair_is_skipped_after_retries_and_the_rest_complete() {
    let corpus = Corpus::from_entries(vec![
        entry("a1", "ann", "A calm morning by the lake."),
        entry("b1", "bob", "BROKEN day at the office."),
        entry("c1", "cat", "Dinner with old friends."),
    ])
    .unwrap();
    let chat = Malformed(AtomicUsize::new(0));
    let out = generate_all(&corpus, &chat, &cfg(1), None, None).unwrap();
    assert_eq!(out.dialogues.len(), 1);
    assert_eq!(out.skips.len(), 2);
    for s in &out.skips {
        assert!(s.reason.contains("expected 18 utterances"), "{}", s.reason);
        assert_eq!(s.attempts, 3);
    }
    assert_eq!(chat.0.load(Ordering::SeqCst), 1 + 2 * 3);
}

struct Down;

impl ChatBackend for Down {
    fn chat_complete(&self, _p: &str, _d: &DecodeSettings) -> Result<String> {
        Err(Error::Transport {
            attempts: 5,
            message: "503".into(),
        })
    }
}

#[test]
fn transport_failure_skips_without_regeneration() {
    let out = generate_all(&corpus_with(&[1, 1]), &Down, &cfg(1), None, None).unwrap();
    assert_eq!(out.skips.len(), 1);
    assert_eq!(out.skips[0].attempts, 1);
    assert!(out.skips[0].reason.contains("transport error"));
    assert_eq!(out.backend_calls, 1);
}

#[test]
fn resume_after_cancel_never_repeats_a_completed_combination() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let corpus = corpus_with(&[2, 1, 2, 1]);

    let flag = Arc::new(AtomicBool::new(false));
    let first = CountingChat::cancelling(flag.clone(), 4);
    let out1 = generate_all(&corpus, &first, &cfg(1), Some(&journal), Some(&flag)).unwrap();
    assert!(out1.interrupted);
    assert_eq!(first.total(), 4);
    assert_eq!(load_journal(&journal).unwrap().len(), 4);

    let second = CountingChat::new();
    let out2 = generate_all(&corpus, &second, &cfg(3), Some(&journal), None).unwrap();
    assert!(!out2.interrupted);
    assert_eq!(out2.resumed, 4);
    assert_eq!(first.total() + second.total(), out2.planned);

    let a = first.per_prompt.lock().unwrap();
    let b = second.per_prompt.lock().unwrap();
    assert!(a.keys().all(|p| !b.contains_key(p)));
    assert!(a.values().chain(b.values()).all(|&n| n == 1));

    let fresh = generate_all(&corpus, &OfflineDialogueSynth, &cfg(1), None, None).unwrap();
    assert_eq!(out2.dialogues, fresh.dialogues);
}

#[test]
fn torn_journal_line_is_dropped_and_rewritten() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let corpus = corpus_with(&[1, 1, 1]);
    generate_all(&corpus, &OfflineDialogueSynth, &cfg(1), Some(&journal), None).unwrap();
    let text = std::fs::read_to_string(&journal).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.pop().unwrap();
    let torn = format!("{}\n{}", lines.join("\n"), &last[..last.len() / 2]);
    std::fs::write(&journal, torn).unwrap();

    let recs = load_journal(&journal).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| matches!(r, JournalRecord::Done { .. })));
    assert_eq!(std::fs::read_to_string(&journal).unwrap().lines().count(), 2);

    let chat = CountingChat::new();
    let out = generate_all(&corpus, &chat, &cfg(1), Some(&journal), None).unwrap();
    assert_eq!(chat.total(), 1);
    assert_eq!(out.dialogues.len(), 3);
}

#[test]
fn max_pairs_samples_deterministically() {
    let corpus = corpus_with(&[1, 1, 1, 1, 1]);
    let c = GenerationConfig {
        max_pairs: Some(4),
        seed: 9,
        ..cfg(2)
    };
    let a = generate_all(&corpus, &OfflineDialogueSynth, &c, None, None).unwrap();
    let b = generate_all(&corpus, &OfflineDialogueSynth, &c, None, None).unwrap();
    assert_eq!(a.planned, 4);
    assert_eq!(a.dialogues, b.dialogues);
}
