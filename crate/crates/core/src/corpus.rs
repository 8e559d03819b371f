//! Journal corpus ingestion: field mapping, validation, per-author
//! deduplication and grouping.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub entry_id: String,
    pub author_id: String,
    pub title: String,
    pub body: String,
    /// Seconds since the Unix epoch, UTC.
    pub created_at: i64,
    pub source: String,
    pub url: String,
}

/// Maps dump field names onto [`JournalEntry`] fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSchema {
    pub id: String,
    pub author: String,
    pub body: String,
    pub title: String,
    pub created: String,
    pub source: String,
    pub url: String,
}

impl Default for FieldSchema {
    /// Pushshift/PullPush submission field names.
    fn default() -> Self {
        FieldSchema {
            id: "id".into(),
            author: "author".into(),
            body: "selftext".into(),
            title: "title".into(),
            created: "created_utc".into(),
            source: "subreddit".into(),
            url: "url".into(),
        }
    }
}

impl FieldSchema {
    /// Field names of the canonical corpus file written by [`Corpus::save`].
    pub fn canonical() -> Self {
        FieldSchema {
            id: "entry_id".into(),
            author: "author_id".into(),
            body: "body".into(),
            title: "title".into(),
            created: "created_at".into(),
            source: "source".into(),
            url: "url".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub input_records: usize,
    pub kept: usize,
    pub duplicates: usize,
    pub missing_field: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    entries: Vec<JournalEntry>,
    by_author: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    pub fn from_entries(entries: Vec<JournalEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut by_author: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.author_id.is_empty() {
                return Err(Error::argument(format!("entry {} has an empty author", e.entry_id)));
            }
            if e.body.trim().is_empty() {
                return Err(Error::argument(format!("entry {} has an empty body", e.entry_id)));
            }
            if !seen.insert(e.entry_id.as_str()) {
                return Err(Error::argument(format!("duplicate entry id {}", e.entry_id)));
            }
            by_author.entry(e.author_id.clone()).or_default().push(i);
        }
        Ok(Corpus { entries, by_author })
    }

    pub fn entries(&self) -> &[JournalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Author ids in lexicographic order.
    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.by_author.keys().map(String::as_str)
    }

    pub fn author_count(&self) -> usize {
        self.by_author.len()
    }

    /// One author's entries in corpus order; empty if the author is unknown.
    pub fn author_entries(&self, author_id: &str) -> Vec<&JournalEntry> {
        self.by_author
            .get(author_id)
            .map(|ix| ix.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn contains_author(&self, author_id: &str) -> bool {
        self.by_author.contains_key(author_id)
    }

    pub fn get(&self, entry_id: &str) -> Option<&JournalEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    /// Keeps only entries whose id is in `keep`, preserving order.
    pub fn retain_ids(&self, keep: &HashSet<String>) -> Corpus {
        let entries = self
            .entries
            .iter()
            .filter(|e| keep.contains(&e.entry_id))
            .cloned()
            .collect();
        Corpus::from_entries(entries).expect("subset of a valid corpus is valid")
    }

    /// Writes the canonical corpus file (one entry per line).
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_jsonl(path, &self.entries)
    }
}

/// Loads a line-delimited dump.
///
/// Records missing an author or body are dropped, as are repeated
/// `(author, whitespace-normalized body)` pairs and repeated entry ids
/// (first occurrence in file order wins). Lines that are not JSON objects
/// are counted as malformed. Reddit tombstones (`[deleted]`, `[removed]`)
/// count as missing values.
pub fn load_corpus(path: &Path, schema: &FieldSchema) -> Result<(Corpus, DropReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = DropReport::default();
    let mut entries = Vec::new();
    let mut seen_bodies: HashSet<(String, String)> = HashSet::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.input_records += 1;
        let record: Value = match serde_json::from_str(&line) {
            Ok(v @ Value::Object(_)) => v,
            _ => {
                report.malformed += 1;
                continue;
            }
        };
        let author = field_str(&record, &schema.author);
        let body = field_str(&record, &schema.body);
        let (Some(author), Some(body)) = (author, body) else {
            report.missing_field += 1;
            continue;
        };
        let key = (author.clone(), normalize_whitespace(&body));
        let entry_id = field_str(&record, &schema.id).unwrap_or_else(|| format!("L{}", line_no + 1));
        if seen_ids.contains(&entry_id) || seen_bodies.contains(&key) {
            report.duplicates += 1;
            continue;
        }
        seen_ids.insert(entry_id.clone());
        seen_bodies.insert(key);
        entries.push(JournalEntry {
            entry_id,
            author_id: author,
            title: field_str(&record, &schema.title).unwrap_or_default(),
            body: body.trim().to_string(),
            created_at: field_timestamp(&record, &schema.created),
            source: field_str(&record, &schema.source).unwrap_or_default(),
            url: field_str(&record, &schema.url).unwrap_or_default(),
        });
    }
    report.kept = entries.len();
    log::info!(
        "loaded {} of {} records from {} ({} duplicate, {} missing-field, {} malformed)",
        report.kept,
        report.input_records,
        path.display(),
        report.duplicates,
        report.missing_field,
        report.malformed
    );
    Ok((Corpus::from_entries(entries)?, report))
}

fn field_str(record: &Value, name: &str) -> Option<String> {
    let s = match record.get(name)? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let trimmed = s.trim();
    if trimmed.is_empty() || trimmed == "[deleted]" || trimmed == "[removed]" {
        None
    } else {
        Some(s)
    }
}

fn field_timestamp(record: &Value, name: &str) -> i64 {
    match record.get(name) {
        Some(Value::Number(n)) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)).unwrap_or(0),
        Some(Value::String(s)) => s.trim().parse::<f64>().map(|f| f as i64).unwrap_or(0),
        _ => 0,
    }
}

/// Deterministic seeded shuffle, then the first `test_size` items form the
/// test set. Both halves keep the shuffled order.
pub fn split_dialogues<T: Clone>(items: &[T], test_size: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if test_size > items.len() {
        return Err(Error::argument(format!(
            "test_size {test_size} exceeds collection size {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[..test_size].iter().map(|&i| items[i].clone()).collect();
    let train = order[test_size..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}
