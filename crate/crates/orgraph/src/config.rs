//! YAML run configuration: sources, hyperparameters and output options.
//!
//! Unknown keys are rejected, every omitted value falls back to a documented
//! default, and the full effective configuration is echoed into the run
//! report so no default stays invisible.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::document::HashMatcher;
use crate::entity::EntityConfig;
use crate::error::ConfigError;
use crate::export::ExportFormat;
use crate::keys::{
    DateFormat, EpochWindow, KeyInferenceConfig, KeywordSet, DEFAULT_KEYWORDS,
    DEFAULT_NAME_SYNONYMS,
};
use crate::linking::LinkingConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Where to read collections from; at least one source is required to run.
    pub sources: Vec<SourceConfig>,
    pub hyperparameters: Hyperparameters,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// Directory path or connection URI, depending on the adapter kind.
    pub path: String,
    /// Overrides the subsystem label for every collection of this source.
    pub subsystem: Option<String>,
    /// Reference to credentials (environment variable or file); only used by
    /// live document-store adapters.
    pub credentials: Option<String>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            kind: SourceKind::Directory,
            path: String::new(),
            subsystem: None,
            credentials: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Directory,
    DocumentStore,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub key_inference: KeyInferenceSection,
    pub linking: LinkingConfig,
    pub entity: EntityConfig,
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyInferenceSection {
    /// Identifier keywords in priority order (index 0 wins).
    pub keywords: Vec<String>,
    /// Optional regex replacing the hash-length rule.
    pub hash_pattern: Option<String>,
    /// Accepted lengths for hexadecimal hash strings.
    pub hash_lengths: Vec<usize>,
    /// Date formats: `iso8601-date`, `iso8601-datetime` or strftime patterns.
    pub date_formats: Vec<String>,
    pub epoch_window: EpochWindowSection,
    /// Field names treated like `name` in embedded documents.
    pub name_synonyms: Vec<String>,
}

impl Default for KeyInferenceSection {
    fn default() -> Self {
        KeyInferenceSection {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| (*s).to_owned()).collect(),
            hash_pattern: None,
            hash_lengths: crate::document::DEFAULT_HASH_LENGTHS.to_vec(),
            date_formats: crate::keys::default_date_formats()
                .iter()
                .map(DateFormat::name)
                .collect(),
            epoch_window: EpochWindowSection::default(),
            name_synonyms: DEFAULT_NAME_SYNONYMS
                .iter()
                .map(|s| (*s).to_owned())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochWindowSection {
    pub start: String,
    pub end: String,
}

impl Default for EpochWindowSection {
    fn default() -> Self {
        EpochWindowSection {
            start: "1990-01-01".to_owned(),
            end: "2100-01-01".to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMode {
    /// Treat a collection as enveloped when most documents carry the payload
    /// field (see `envelope_autodetect_threshold`).
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// How many leading documents to scan for the schema document.
    pub schema_scan_limit: usize,
    pub envelope_mode: EnvelopeMode,
    /// Name of the payload field for enveloped documents.
    pub envelope_field: String,
    /// Auto mode: fraction of documents that must carry a payload object.
    pub envelope_autodetect_threshold: f64,
    /// Fail the run on the first unavailable source instead of warning.
    pub strict: bool,
    /// Worker threads for per-collection stages; results are identical for
    /// any worker count.
    pub workers: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            schema_scan_limit: 100,
            envelope_mode: EnvelopeMode::Auto,
            envelope_field: "data".to_owned(),
            envelope_autodetect_threshold: 0.9,
            strict: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Graph export formats written by `run`.
    pub formats: Vec<ExportFormat>,
    /// Output directory; individual paths below override file names inside it.
    pub dir: String,
    pub include_field_mapping: bool,
    pub include_stats: bool,
    pub paths: OutputPaths,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            formats: vec![ExportFormat::Json],
            dir: "out".to_owned(),
            include_field_mapping: true,
            include_stats: true,
            paths: OutputPaths::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub collection_graph: Option<String>,
    pub entity_graph: Option<String>,
    pub stats: Option<String>,
    pub field_mapping: Option<String>,
    pub run_report: Option<String>,
}

// ---------------------------------------------------------------------------
// Loading and compilation
// ---------------------------------------------------------------------------

/// Reads and validates a YAML configuration file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let config: Config = serde_yaml::from_str(text).map_err(|e| {
        let message = e.to_string();
        if message.contains("unknown field") {
            ConfigError::Validation(message)
        } else {
            ConfigError::Parse(message)
        }
    })?;
    config.compiled()?;
    Ok(config)
}

/// Validated, ready-to-use stage configurations.
#[derive(Debug, Clone)]
pub struct CompiledConfig {
    pub key_inference: KeyInferenceConfig,
    pub linking: LinkingConfig,
    pub entity: EntityConfig,
    pub pipeline: PipelineSection,
}

impl Config {
    /// Serialized defaults, the reference for `config --print-defaults`.
    pub fn default_yaml() -> String {
        serde_yaml::to_string(&Config::default()).expect("defaults serialize")
    }

    /// Validates every section and compiles patterns and date formats.
    pub fn compiled(&self) -> Result<CompiledConfig, ConfigError> {
        for (i, source) in self.sources.iter().enumerate() {
            if source.path.trim().is_empty() {
                return Err(ConfigError::Validation(format!(
                    "sources[{i}].path must not be empty"
                )));
            }
        }

        let section = &self.hyperparameters.key_inference;
        let keywords = KeywordSet::new(section.keywords.clone())?;
        let hash = match &section.hash_pattern {
            Some(pattern) => HashMatcher::with_pattern(pattern).map_err(|e| {
                ConfigError::Validation(format!("key_inference.hash_pattern: {e}"))
            })?,
            None => {
                if section.hash_lengths.is_empty() {
                    return Err(ConfigError::Validation(
                        "key_inference.hash_lengths must not be empty".into(),
                    ));
                }
                HashMatcher::with_lengths(section.hash_lengths.clone())
            }
        };
        if section.date_formats.is_empty() {
            return Err(ConfigError::Validation(
                "key_inference.date_formats must not be empty".into(),
            ));
        }
        let date_formats = section
            .date_formats
            .iter()
            .map(|name| DateFormat::parse_name(name))
            .collect();
        let epoch_window = parse_epoch_window(&section.epoch_window)?;
        let name_synonyms = section
            .name_synonyms
            .iter()
            .map(|s| s.to_lowercase())
            .collect();

        let linking = &self.hyperparameters.linking;
        if !(linking.frequent_key_cap > 0.0 && linking.frequent_key_cap <= 1.0) {
            return Err(ConfigError::Validation(
                "linking.frequent_key_cap must lie in (0, 1]".into(),
            ));
        }

        let entity = &self.hyperparameters.entity;
        if !(0.0..=1.0).contains(&entity.tau) {
            return Err(ConfigError::Validation(
                "entity.tau must lie in [0, 1]".into(),
            ));
        }
        regex::Regex::new(&entity.version_suffix_pattern).map_err(|e| {
            ConfigError::Validation(format!("entity.version_suffix_pattern: {e}"))
        })?;

        let pipeline = &self.hyperparameters.pipeline;
        if pipeline.schema_scan_limit == 0 {
            return Err(ConfigError::Validation(
                "pipeline.schema_scan_limit must be at least 1".into(),
            ));
        }
        if pipeline.workers == 0 {
            return Err(ConfigError::Validation(
                "pipeline.workers must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&pipeline.envelope_autodetect_threshold) {
            return Err(ConfigError::Validation(
                "pipeline.envelope_autodetect_threshold must lie in [0, 1]".into(),
            ));
        }
        if pipeline.envelope_field.is_empty() {
            return Err(ConfigError::Validation(
                "pipeline.envelope_field must not be empty".into(),
            ));
        }

        Ok(CompiledConfig {
            key_inference: KeyInferenceConfig {
                keywords,
                hash,
                date_formats,
                epoch_window,
                name_synonyms,
            },
            linking: linking.clone(),
            entity: entity.clone(),
            pipeline: pipeline.clone(),
        })
    }

    /// Requires at least one source; separate from `compiled` because the
    /// synthetic-corpus commands run without sources.
    pub fn require_sources(&self) -> Result<(), ConfigError> {
        if self.sources.is_empty() {
            return Err(ConfigError::Validation(
                "at least one source is required (set `sources:` or pass --corpus)".into(),
            ));
        }
        Ok(())
    }
}

fn parse_epoch_window(section: &EpochWindowSection) -> Result<EpochWindow, ConfigError> {
    let parse = |label: &str, text: &str| -> Result<i64, ConfigError> {
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|e| {
            ConfigError::Validation(format!("key_inference.epoch_window.{label}: {e}"))
        })?;
        Ok(date
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
            .timestamp())
    };
    let start_secs = parse("start", &section.start)?;
    let end_secs = parse("end", &section.end)?;
    if start_secs >= end_secs {
        return Err(ConfigError::Validation(
            "key_inference.epoch_window.start must precede end".into(),
        ));
    }
    Ok(EpochWindow {
        start_secs,
        end_secs,
    })
}
