//! Pipeline orchestration: ingest, stage sequencing and the run report.
//!
//! Data flows: ingest -> key index -> pairwise links -> edge filtering ->
//! adjacency -> components -> entity graph -> statistics. Every intermediate
//! stays on the result so any stage's artifacts can be inspected or dumped.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::adapter::{adapter_for, LoadedCollection};
use crate::config::{CompiledConfig, Config, EnvelopeMode};
use crate::document::{
    first_non_empty, Collection, CollectionId, Document, FieldPath, ParseWarnings, Value,
};
use crate::entity::{
    build_adjacency, build_entity_graph, threshold_components, AdjacencyMatrix, EntityGraph,
    EntityPartition,
};
use crate::error::PipelineError;
use crate::keys::{find_keys, process_embedded, CollectionKeyProfile};
use crate::linking::{build_key_index, filter_edges, pairwise_links, CollectionGraph, KeySetIndex};
use crate::stats::{collect_stats, CorpusStats, IngestCounters};

/// A collection enriched with its inferred meta-information.
#[derive(Debug, Clone)]
pub struct AbstractCollection {
    pub collection: Collection,
    pub profile: CollectionKeyProfile,
    /// The schema document (first non-empty one), if any.
    pub schema: Option<Document>,
    /// Whether documents carry their payload under the envelope field.
    pub envelope: bool,
    pub parse_warnings: ParseWarnings,
    pub skipped_documents: u64,
}

/// Raw material for one collection before profiling.
pub struct RawCollection {
    pub name: String,
    pub subsystem: String,
    pub loaded: LoadedCollection,
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub collections: Vec<AbstractCollection>,
    pub warnings: Vec<String>,
    pub skipped_empty: Vec<String>,
}

/// Reads every configured source, parses documents, derives schema documents
/// and key profiles. Unavailable sources are skipped with a warning unless
/// `strict` is set.
pub fn ingest(config: &Config, compiled: &CompiledConfig) -> Result<IngestOutcome, PipelineError> {
    config.require_sources()?;
    let mut raw: Vec<RawCollection> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    for source in &config.sources {
        let adapter = adapter_for(source);
        let refs = match adapter.enumerate() {
            Ok(refs) => refs,
            Err(e) => {
                if compiled.pipeline.strict {
                    return Err(PipelineError::Source {
                        stage: "ingest",
                        message: e.to_string(),
                    });
                }
                log::warn!("skipping {}: {e}", adapter.describe());
                warnings.push(format!("skipping {}: {e}", adapter.describe()));
                continue;
            }
        };
        let loads: Vec<_> = refs
            .par_iter()
            .map(|r| (r, adapter.load(r)))
            .collect();
        for (r, result) in loads {
            match result {
                Ok(loaded) => raw.push(RawCollection {
                    name: r.name.clone(),
                    subsystem: r.subsystem.clone(),
                    loaded,
                }),
                Err(e) => {
                    if compiled.pipeline.strict {
                        return Err(PipelineError::Source {
                            stage: "ingest",
                            message: e.to_string(),
                        });
                    }
                    warnings.push(format!("skipping collection {}: {e}", r.name));
                }
            }
        }
    }
    assemble(raw, compiled, warnings)
}

/// Ingest path for in-memory corpora (tests, generator output) sharing the
/// same ordering, id assignment and profiling as file-based ingest.
pub fn assemble_collections(
    collections: Vec<Collection>,
    compiled: &CompiledConfig,
) -> Result<IngestOutcome, PipelineError> {
    let raw = collections
        .into_iter()
        .map(|c| RawCollection {
            name: c.name,
            subsystem: c.subsystem,
            loaded: LoadedCollection {
                documents: c.documents,
                warnings: ParseWarnings::default(),
                skipped_lines: 0,
            },
        })
        .collect();
    assemble(raw, compiled, Vec::new())
}

fn assemble(
    raw: Vec<RawCollection>,
    compiled: &CompiledConfig,
    mut warnings: Vec<String>,
) -> Result<IngestOutcome, PipelineError> {
    let mut skipped_empty = Vec::new();
    let mut kept: Vec<RawCollection> = Vec::with_capacity(raw.len());
    for collection in raw {
        if collection.loaded.documents.is_empty() {
            log::warn!("collection {} has no documents; skipped", collection.name);
            warnings.push(format!(
                "collection {} has no documents; skipped",
                collection.name
            ));
            skipped_empty.push(collection.name);
        } else {
            kept.push(collection);
        }
    }
    kept.sort_by(|a, b| (&a.subsystem, &a.name).cmp(&(&b.subsystem, &b.name)));

    let mut names: Vec<&str> = kept.iter().map(|r| r.name.as_str()).collect();
    names.sort_unstable();
    if let Some(dup) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(PipelineError::Stage {
            stage: "ingest",
            message: format!(
                "collection name `{}` appears more than once; names must be unique",
                dup[0]
            ),
        });
    }

    let collections: Vec<AbstractCollection> = kept
        .into_par_iter()
        .enumerate()
        .map(|(i, r)| {
            let collection = Collection {
                id: CollectionId(i as u32),
                name: r.name,
                subsystem: if r.subsystem.is_empty() {
                    "default".to_owned()
                } else {
                    r.subsystem
                },
                documents: r.loaded.documents,
            };
            let (profile, schema, envelope) = profile_collection(&collection, compiled);
            AbstractCollection {
                collection,
                profile,
                schema,
                envelope,
                parse_warnings: r.loaded.warnings,
                skipped_documents: r.loaded.skipped_lines,
            }
        })
        .collect();

    Ok(IngestOutcome {
        collections,
        warnings,
        skipped_empty,
    })
}

/// Derives a collection's schema document and key profile, honoring envelope
/// layouts: when documents carry their payload under the envelope field, key
/// inference runs on the payload (paths prefixed accordingly) and the
/// remaining top-level meta fields contribute date descriptors only.
fn profile_collection(
    collection: &Collection,
    compiled: &CompiledConfig,
) -> (CollectionKeyProfile, Option<Document>, bool) {
    let opts = &compiled.pipeline;
    let documents = &collection.documents;
    let payload_of = |d: &Document| {
        d.root()
            .get(&opts.envelope_field)
            .and_then(Value::as_object)
            .map(<[(String, Value)]>::to_vec)
    };

    let envelope = match opts.envelope_mode {
        EnvelopeMode::Off => false,
        EnvelopeMode::On => documents.iter().any(|d| payload_of(d).is_some()),
        EnvelopeMode::Auto => {
            let with_payload = documents.iter().filter(|d| payload_of(d).is_some()).count();
            !documents.is_empty()
                && with_payload as f64 / documents.len() as f64
                    > opts.envelope_autodetect_threshold
        }
    };

    let empty = || CollectionKeyProfile {
        collection_id: collection.id,
        ..CollectionKeyProfile::default()
    };

    if envelope {
        let schema = documents
            .iter()
            .take(opts.schema_scan_limit)
            .find(|d| payload_of(d).is_some_and(|fields| !fields.is_empty()))
            .or_else(|| first_non_empty(documents, opts.schema_scan_limit));
        let Some(schema) = schema else {
            return (empty(), None, true);
        };
        let payload = Value::Object(payload_of(schema).unwrap_or_default());
        let payload_doc =
            Document::new(payload, schema.ordinal).expect("payload is an object by construction");
        let mut profile = find_keys(collection.id, &payload_doc, true, &compiled.key_inference)
            .with_paths_prefixed(&opts.envelope_field);
        for (name, value) in schema.fields() {
            if *name == opts.envelope_field {
                continue;
            }
            let lists =
                process_embedded(FieldPath::root(name), Some(name), value, &compiled.key_inference);
            profile.dates.extend(lists.dates);
        }
        (profile, Some(schema.clone()), true)
    } else {
        match first_non_empty(documents, opts.schema_scan_limit) {
            Some(schema) => (
                find_keys(collection.id, schema, true, &compiled.key_inference),
                Some(schema.clone()),
                false,
            ),
            None => (empty(), None, false),
        }
    }
}

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub collections: usize,
    pub documents: u64,
    pub skipped_empty: Vec<String>,
    pub envelope_collections: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkingSummary {
    pub distinct_keys: usize,
    pub edges_raw: usize,
    pub edges_filtered: usize,
    pub capped_frequent_keys: u64,
    pub empty_profiles: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntitySummary {
    pub entities: usize,
    /// Collections living in components of size two or more.
    pub merged_collections: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummaries {
    pub ingest: IngestSummary,
    pub linking: LinkingSummary,
    pub entity: EntitySummary,
}

/// Run report: the effective configuration (defaults included) plus per-stage
/// summaries and accumulated warnings.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub effective_config: Config,
    pub stages: StageSummaries,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct RunResult {
    pub collections: Vec<AbstractCollection>,
    pub index: KeySetIndex,
    /// All co-keyed pairs before filtering.
    pub raw_graph: CollectionGraph,
    /// The filtered collection graph (the linking stage output).
    pub collection_graph: CollectionGraph,
    pub adjacency: AdjacencyMatrix,
    pub partition: EntityPartition,
    pub entity_graph: EntityGraph,
    pub stats: CorpusStats,
    pub report: RunReport,
}

impl RunResult {
    pub fn subsystem_map(&self) -> BTreeMap<CollectionId, String> {
        self.collections
            .iter()
            .map(|a| (a.collection.id, a.collection.subsystem.clone()))
            .collect()
    }
}

/// Executes the full pipeline over the configured sources.
pub fn run_pipeline(config: &Config) -> Result<RunResult, PipelineError> {
    let compiled = config.compiled()?;
    in_worker_pool(&compiled, || {
        let outcome = ingest(config, &compiled)?;
        run_stages(outcome, config, &compiled)
    })
}

/// Executes the full pipeline over in-memory collections.
pub fn run_pipeline_on(
    collections: Vec<Collection>,
    config: &Config,
) -> Result<RunResult, PipelineError> {
    let compiled = config.compiled()?;
    in_worker_pool(&compiled, || {
        let outcome = assemble_collections(collections, &compiled)?;
        run_stages(outcome, config, &compiled)
    })
}

fn in_worker_pool<T>(
    compiled: &CompiledConfig,
    body: impl FnOnce() -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(compiled.pipeline.workers)
        .build()
        .map_err(|e| PipelineError::Internal {
            stage: "setup",
            message: e.to_string(),
        })?;
    pool.install(body)
}

fn run_stages(
    outcome: IngestOutcome,
    config: &Config,
    compiled: &CompiledConfig,
) -> Result<RunResult, PipelineError> {
    let collections = outcome.collections;
    let refs: Vec<(&Collection, &CollectionKeyProfile)> = collections
        .iter()
        .map(|a| (&a.collection, &a.profile))
        .collect();

    let index = build_key_index(&refs, &compiled.key_inference);
    log::debug!(
        "indexed {} collections, {} distinct keys",
        collections.len(),
        index.total_distinct()
    );
    let raw_graph = pairwise_links(&index, &compiled.linking);
    let collection_graph = filter_edges(&raw_graph, &compiled.linking.criterion());
    log::debug!(
        "linking: {} raw edges, {} after filtering",
        raw_graph.edges.len(),
        collection_graph.edges.len()
    );
    let adjacency = build_adjacency(&index);
    let partition = threshold_components(&adjacency, compiled.entity.tau);
    if partition.components().iter().map(|c| c.len()).sum::<usize>() != collections.len() {
        return Err(PipelineError::Internal {
            stage: "entity",
            message: "partition does not cover the collection set".into(),
        });
    }
    let entity_graph = build_entity_graph(&partition, &collection_graph, &compiled.entity);

    let mut counters = IngestCounters::default();
    for a in &collections {
        counters.duplicate_field_names += a.parse_warnings.duplicate_fields;
        counters.empty_field_names += a.parse_warnings.empty_field_names;
        counters.skipped_documents += a.skipped_documents;
    }
    let stats = collect_stats(&refs, &index, raw_graph.capped_keys, counters);

    let report = RunReport {
        effective_config: config.clone(),
        stages: StageSummaries {
            ingest: IngestSummary {
                collections: collections.len(),
                documents: stats.documents,
                skipped_empty: outcome.skipped_empty,
                envelope_collections: collections.iter().filter(|a| a.envelope).count(),
            },
            linking: LinkingSummary {
                distinct_keys: index.total_distinct(),
                edges_raw: raw_graph.edges.len(),
                edges_filtered: collection_graph.edges.len(),
                capped_frequent_keys: raw_graph.capped_keys,
                empty_profiles: index.stats().empty_profiles.len(),
            },
            entity: EntitySummary {
                entities: entity_graph.entities.len(),
                merged_collections: partition
                    .components()
                    .iter()
                    .filter(|c| c.len() > 1)
                    .map(|c| c.len())
                    .sum(),
            },
        },
        warnings: outcome.warnings,
    };

    Ok(RunResult {
        collections,
        index,
        raw_graph,
        collection_graph,
        adjacency,
        partition,
        entity_graph,
        stats,
        report,
    })
}

/// Convenience for callers starting from a corpus directory.
pub fn config_for_corpus_dir(dir: &Path) -> Config {
    Config {
        sources: vec![crate::config::SourceConfig {
            kind: crate::config::SourceKind::Directory,
            path: dir.display().to_string(),
            subsystem: None,
            credentials: None,
        }],
        ..Config::default()
    }
}
