//! Journal-grounded dialogue dataset construction.
//!
//! The stages are: corpus ingestion, per-author cluster retention,
//! Big-Five trait filtering, dialogue synthesis, retrieval-enriched record
//! building, toxicity gating, and evaluation.

pub mod clients;
pub mod clustering;
pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod fetch;
pub mod generate;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod safety;
pub mod text;
pub mod trait_filter;

pub use error::{Error, Result};
