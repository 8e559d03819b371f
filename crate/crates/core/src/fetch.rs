//! Optional dump download from a PullPush-compatible submission search API.
//!
//! Writes raw submission objects one per line, the same format `ingest`
//! reads with the default field schema. The pipeline itself never calls
//! this.

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_BASE_URL: &str = "https://api.pullpush.io/reddit/search/submission/";
/// Largest page the service returns.
pub const PAGE_SIZE: usize = 100;

pub trait PageSource {
    /// Submissions created strictly before `before` (newest first).
    fn page(&self, source: &str, before: Option<i64>) -> Result<Vec<Value>>;
}

pub struct HttpPageSource {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpPageSource {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpPageSource {
            agent,
            base_url: base_url.to_string(),
        }
    }
}

impl PageSource for HttpPageSource {
    fn page(&self, source: &str, before: Option<i64>) -> Result<Vec<Value>> {
        let mut req = self
            .agent
            .get(&self.base_url)
            .query("subreddit", source)
            .query("size", PAGE_SIZE.to_string())
            .query("sort", "desc");
        if let Some(b) = before {
            req = req.query("before", b.to_string());
        }
        let fail = |message: String| Error::Transport { attempts: 1, message };
        let body: Value = req
            .call()
            .map_err(|e| fail(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| fail(e.to_string()))?;
        match body.get("data") {
            Some(Value::Array(items)) => Ok(items.clone()),
            _ => Err(fail("response has no `data` array".into())),
        }
    }
}

/// Pages backwards in time until `limit` records or the source runs dry.
/// Returns the number of records written.
pub fn fetch_dump(pages: &dyn PageSource, source: &str, limit: usize, out: &Path) -> Result<usize> {
    let mut buf = Vec::new();
    let mut before = None;
    let mut written = 0;
    while written < limit {
        let items = pages.page(source, before)?;
        let oldest = items
            .iter()
            .filter_map(|v| v.get("created_utc").and_then(Value::as_f64))
            .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
        if items.is_empty() {
            break;
        }
        for item in items.iter().take(limit - written) {
            serde_json::to_writer(&mut buf, item).map_err(|e| Error::Format {
                path: out.to_path_buf(),
                message: e.to_string(),
            })?;
            buf.write_all(b"\n").expect("write to memory");
            written += 1;
        }
        log::info!("fetched {written} records");
        match oldest {
            Some(t) if before.is_none_or(|b| (t as i64) < b) => before = Some(t as i64),
            // no usable timestamp or no progress: stop rather than loop
            _ => break,
        }
    }
    crate::io::write_atomic(out, &buf)?;
    Ok(written)
}
