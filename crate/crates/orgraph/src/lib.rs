//! Automatic construction of an organization-level knowledge graph from
//! heterogeneous semi-structured document collections.
//!
//! The pipeline infers identifier keys per collection, discovers
//! inter-collection links from key-set intersections (count, Jaccard,
//! overlap and frequency-discounted PMI), filters false-positive links, and
//! merges collections that describe the same real-world entity into single
//! graph nodes via connected components over primary-key overlap.
//!
//! Typical embedding:
//!
//! ```no_run
//! use orgraph::config::Config;
//! use orgraph::pipeline::run_pipeline;
//!
//! let mut config = Config::default();
//! config.sources.push(orgraph::config::SourceConfig {
//!     kind: orgraph::config::SourceKind::Directory,
//!     path: "corpus".into(),
//!     subsystem: None,
//!     credentials: None,
//! });
//! let result = run_pipeline(&config).unwrap();
//! println!(
//!     "{} collections -> {} entities",
//!     result.collections.len(),
//!     result.entity_graph.entities.len()
//! );
//! ```

pub mod adapter;
pub mod config;
pub mod document;
pub mod entity;
pub mod error;
pub mod export;
pub mod keys;
pub mod linking;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use config::{load_config, Config};
pub use document::{Collection, CollectionId, Document, KeyValue, Value};
pub use error::PipelineError;
pub use pipeline::{run_pipeline, run_pipeline_on, RunResult};
