//! Source adapters: a single abstract interface for enumerating collections
//! and reading their documents, independent of where the data lives.
//!
//! The directory adapter reads the canonical corpus layout: one subdirectory
//! per subsystem, one `.jsonl` file per collection (one JSON document per
//! line), plus an optional `manifest.yaml` overriding names and subsystems.
//! A document-store adapter exists as a reference stub; no network access is
//! required anywhere.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::config::{SourceConfig, SourceKind};
use crate::document::{parse_document_with_warnings, Document, ParseWarnings};
use crate::error::SourceError;

/// A discovered collection, before any documents are read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionRef {
    pub name: String,
    pub subsystem: String,
    pub locator: String,
}

/// Documents of one collection in stable (file) order.
#[derive(Debug, Default)]
pub struct LoadedCollection {
    pub documents: Vec<Document>,
    pub warnings: ParseWarnings,
    /// Lines that failed to parse or were not objects; skipped with a warning.
    pub skipped_lines: u64,
}

pub trait SourceAdapter: Send + Sync {
    fn describe(&self) -> String;
    fn enumerate(&self) -> Result<Vec<CollectionRef>, SourceError>;
    fn load(&self, collection: &CollectionRef) -> Result<LoadedCollection, SourceError>;
}

pub fn adapter_for(source: &SourceConfig) -> Box<dyn SourceAdapter> {
    match source.kind {
        SourceKind::Directory => Box::new(DirectoryAdapter {
            root: PathBuf::from(&source.path),
            subsystem_override: source.subsystem.clone(),
        }),
        SourceKind::DocumentStore => Box::new(DocumentStoreAdapter {
            uri: source.path.clone(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Directory adapter
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    collections: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    /// Path relative to the corpus root, e.g. `billing/orders.jsonl`.
    file: String,
    name: Option<String>,
    subsystem: Option<String>,
}

pub struct DirectoryAdapter {
    root: PathBuf,
    subsystem_override: Option<String>,
}

impl DirectoryAdapter {
    pub fn new(root: impl Into<PathBuf>, subsystem_override: Option<String>) -> DirectoryAdapter {
        DirectoryAdapter {
            root: root.into(),
            subsystem_override,
        }
    }

    fn manifest(&self) -> Result<Option<Manifest>, SourceError> {
        let path = self.root.join("manifest.yaml");
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|source| SourceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_yaml::from_str(&text)
            .map(Some)
            .map_err(|e| SourceError::Manifest(e.to_string()))
    }

    fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, SourceError> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| SourceError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        Ok(entries)
    }
}

impl SourceAdapter for DirectoryAdapter {
    fn describe(&self) -> String {
        format!("directory {}", self.root.display())
    }

    fn enumerate(&self) -> Result<Vec<CollectionRef>, SourceError> {
        if !self.root.is_dir() {
            return Err(SourceError::Unavailable(format!(
                "{} is not a directory",
                self.root.display()
            )));
        }
        let manifest = self.manifest()?;
        let mut refs = Vec::new();
        for subdir in Self::sorted_entries(&self.root)? {
            if !subdir.is_dir() {
                continue;
            }
            let dir_name = subdir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_owned();
            if dir_name.starts_with('.') {
                continue;
            }
            for file in Self::sorted_entries(&subdir)? {
                if file.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                    continue;
                }
                let stem = file
                    .file_stem()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default()
                    .to_owned();
                let mut name = stem;
                let mut subsystem = dir_name.clone();
                if let Some(manifest) = &manifest {
                    let relative = format!(
                        "{}/{}",
                        dir_name,
                        file.file_name().and_then(|n| n.to_str()).unwrap_or("")
                    );
                    if let Some(entry) = manifest.collections.iter().find(|e| e.file == relative) {
                        if let Some(n) = &entry.name {
                            name = n.clone();
                        }
                        if let Some(s) = &entry.subsystem {
                            subsystem = s.clone();
                        }
                    }
                }
                if let Some(label) = &self.subsystem_override {
                    subsystem = label.clone();
                }
                refs.push(CollectionRef {
                    name,
                    subsystem,
                    locator: file.display().to_string(),
                });
            }
        }
        Ok(refs)
    }

    fn load(&self, collection: &CollectionRef) -> Result<LoadedCollection, SourceError> {
        let path = Path::new(&collection.locator);
        let file = fs::File::open(path).map_err(|source| SourceError::Io {
            path: collection.locator.clone(),
            source,
        })?;
        let mut loaded = LoadedCollection::default();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| SourceError::Io {
                path: collection.locator.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_document_with_warnings(&line) {
                Ok((mut document, warnings)) => {
                    document.ordinal = loaded.documents.len();
                    loaded.warnings.merge(warnings);
                    loaded.documents.push(document);
                }
                Err(_) => loaded.skipped_lines += 1,
            }
        }
        Ok(loaded)
    }
}

// ---------------------------------------------------------------------------
// Document-store stub
// ---------------------------------------------------------------------------

/// Placeholder for a live document-store connection. It always reports the
/// source as unavailable so offline runs degrade gracefully.
pub struct DocumentStoreAdapter {
    uri: String,
}

impl SourceAdapter for DocumentStoreAdapter {
    fn describe(&self) -> String {
        format!("document-store {}", self.uri)
    }

    fn enumerate(&self) -> Result<Vec<CollectionRef>, SourceError> {
        Err(SourceError::Unavailable(format!(
            "document-store adapter is a stub; cannot reach {}",
            self.uri
        )))
    }

    fn load(&self, _collection: &CollectionRef) -> Result<LoadedCollection, SourceError> {
        Err(SourceError::Unavailable(
            "document-store adapter is a stub".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(path: &Path, content: &str) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    #[test]
    fn enumerates_and_loads_jsonl_corpus() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("billing")).unwrap();
        fs::create_dir(dir.path().join("crm")).unwrap();
        write(
            &dir.path().join("billing/orders.jsonl"),
            "{\"id\":1}\n\n{\"id\":2}\n",
        );
        write(&dir.path().join("crm/users.jsonl"), "{\"id\":9}\n");
        write(&dir.path().join("crm/notes.txt"), "ignored");

        let adapter = DirectoryAdapter::new(dir.path(), None);
        let refs = adapter.enumerate().unwrap();
        assert_eq!(refs.len(), 2);
        assert_eq!(refs[0].name, "orders");
        assert_eq!(refs[0].subsystem, "billing");
        assert_eq!(refs[1].subsystem, "crm");

        let loaded = adapter.load(&refs[0]).unwrap();
        assert_eq!(loaded.documents.len(), 2);
        assert_eq!(loaded.documents[1].ordinal, 1);
        assert_eq!(loaded.skipped_lines, 0);
    }

    #[test]
    fn malformed_lines_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("s")).unwrap();
        write(
            &dir.path().join("s/c.jsonl"),
            "{\"a\":1}\nnot json\n[1,2]\n{\"b\":2}\n",
        );
        let adapter = DirectoryAdapter::new(dir.path(), None);
        let refs = adapter.enumerate().unwrap();
        let loaded = adapter.load(&refs[0]).unwrap();
        assert_eq!(loaded.documents.len(), 2);
        assert_eq!(loaded.skipped_lines, 2);
    }

    #[test]
    fn manifest_overrides_name_and_subsystem() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("raw")).unwrap();
        write(&dir.path().join("raw/events.jsonl"), "{\"a\":1}\n");
        write(
            &dir.path().join("manifest.yaml"),
            "collections:\n  - file: raw/events.jsonl\n    name: events_v2\n    subsystem: telemetry\n",
        );
        let adapter = DirectoryAdapter::new(dir.path(), None);
        let refs = adapter.enumerate().unwrap();
        assert_eq!(refs[0].name, "events_v2");
        assert_eq!(refs[0].subsystem, "telemetry");
    }

    #[test]
    fn source_level_subsystem_wins() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("raw")).unwrap();
        write(&dir.path().join("raw/events.jsonl"), "{\"a\":1}\n");
        let adapter = DirectoryAdapter::new(dir.path(), Some("forced".into()));
        let refs = adapter.enumerate().unwrap();
        assert_eq!(refs[0].subsystem, "forced");
    }

    #[test]
    fn missing_directory_is_unavailable() {
        let adapter = DirectoryAdapter::new("/nonexistent/corpus/dir", None);
        assert!(matches!(
            adapter.enumerate(),
            Err(SourceError::Unavailable(_))
        ));
    }

    #[test]
    fn document_store_stub_is_unavailable() {
        let adapter = DocumentStoreAdapter {
            uri: "mongodb://example".into(),
        };
        assert!(matches!(
            adapter.enumerate(),
            Err(SourceError::Unavailable(_))
        ));
    }
}
