//! Corpus-wide statistics: document/nesting/type distributions, key-type
//! counts, and result-quality figures (coverage, average degree, modularity).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::document::{nesting_depth, Collection, CollectionId, Value};
use crate::entity::EntityGraph;
use crate::error::StatsError;
use crate::keys::CollectionKeyProfile;
use crate::linking::{CollectionGraph, KeySetIndex, KeyTypeCounts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

/// Median-of-halves quartiles: the median element is excluded from both
/// halves when the sample size is odd, so (1,2,3) -> (1, 2, 3).
pub fn quartiles(sorted: &[u64]) -> Option<Quartiles> {
    fn median(slice: &[u64]) -> f64 {
        let n = slice.len();
        if n % 2 == 1 {
            slice[n / 2] as f64
        } else {
            (slice[n / 2 - 1] as f64 + slice[n / 2] as f64) / 2.0
        }
    }
    match sorted.len() {
        0 => None,
        1 => {
            let v = sorted[0] as f64;
            Some(Quartiles {
                q1: v,
                q2: v,
                q3: v,
            })
        }
        n => {
            let half = n / 2;
            let lower = &sorted[..half];
            let upper = &sorted[n - half..];
            Some(Quartiles {
                q1: median(lower),
                q2: median(sorted),
                q3: median(upper),
            })
        }
    }
}

/// Counted anomaly log, populated from every stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WarningCounts {
    pub duplicate_field_names: u64,
    pub empty_field_names: u64,
    pub skipped_documents: u64,
    pub hash_fallback_primaries: u64,
    pub capped_frequent_keys: u64,
    pub empty_profile_collections: u64,
    pub boolean_keys_excluded: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KeyTypeHist {
    pub all: KeyTypeCounts,
    pub unique: KeyTypeCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub collections: u64,
    pub documents: u64,
    pub docs_per_collection_hist: BTreeMap<u64, u64>,
    pub docs_per_collection_quartiles: Option<Quartiles>,
    /// Nesting depth of each document root.
    pub nesting_depth_hist: BTreeMap<u64, u64>,
    /// Counts of every value by kind, over all documents recursively.
    pub value_type_hist: BTreeMap<String, u64>,
    pub key_type_hist: KeyTypeHist,
    /// Fraction of documents with a non-empty `data` object field.
    pub data_field_fill_rate: f64,
    /// Fraction of object fields holding null or an empty string/array/object.
    pub empty_field_rate: f64,
    /// Distribution of c(z): how many distinct keys are held by exactly c
    /// collections.
    pub key_occurrence_hist: BTreeMap<u64, u64>,
    pub warnings: WarningCounts,
}

/// Warning counters that only the ingest stage knows about.
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestCounters {
    pub duplicate_field_names: u64,
    pub empty_field_names: u64,
    pub skipped_documents: u64,
}

fn count_values(
    value: &Value,
    types: &mut BTreeMap<String, u64>,
    fields_total: &mut u64,
    fields_empty: &mut u64,
) {
    *types.entry(value.type_name().to_owned()).or_default() += 1;
    match value {
        Value::Array(items) => {
            for item in items {
                count_values(item, types, fields_total, fields_empty);
            }
        }
        Value::Object(fields) => {
            for (_, v) in fields {
                *fields_total += 1;
                let unfilled = matches!(v, Value::Null)
                    || v.as_str().is_some_and(str::is_empty)
                    || v.as_array().is_some_and(<[Value]>::is_empty)
                    || v.as_object().is_some_and(<[(String, Value)]>::is_empty);
                if unfilled {
                    *fields_empty += 1;
                }
                count_values(v, types, fields_total, fields_empty);
            }
        }
        _ => {}
    }
}

/// Collects all corpus statistics in one pass over the documents. `items`
/// pairs each collection with its key profile.
pub fn collect_stats(
    items: &[(&Collection, &CollectionKeyProfile)],
    index: &KeySetIndex,
    capped_frequent_keys: u64,
    ingest: IngestCounters,
) -> CorpusStats {
    let mut docs_hist: BTreeMap<u64, u64> = BTreeMap::new();
    let mut doc_counts: Vec<u64> = Vec::with_capacity(items.len());
    let mut nesting_hist: BTreeMap<u64, u64> = BTreeMap::new();
    let mut value_types: BTreeMap<String, u64> = BTreeMap::new();
    let mut fields_total = 0u64;
    let mut fields_empty = 0u64;
    let mut documents = 0u64;
    let mut docs_with_data = 0u64;

    for (collection, _) in items {
        let count = collection.documents.len() as u64;
        doc_counts.push(count);
        *docs_hist.entry(count).or_default() += 1;
        documents += count;
        for document in &collection.documents {
            *nesting_hist
                .entry(nesting_depth(document.root()) as u64)
                .or_default() += 1;
            if document
                .root()
                .get("data")
                .and_then(Value::as_object)
                .is_some_and(|fields| !fields.is_empty())
            {
                docs_with_data += 1;
            }
            count_values(
                document.root(),
                &mut value_types,
                &mut fields_total,
                &mut fields_empty,
            );
        }
    }
    doc_counts.sort_unstable();

    let mut key_occurrence: BTreeMap<u64, u64> = BTreeMap::new();
    for holders in index.inverted().values() {
        *key_occurrence.entry(holders.len() as u64).or_default() += 1;
    }

    let warnings = WarningCounts {
        duplicate_field_names: ingest.duplicate_field_names,
        empty_field_names: ingest.empty_field_names,
        skipped_documents: ingest.skipped_documents,
        hash_fallback_primaries: items
            .iter()
            .filter(|(_, p)| p.has_hash_fallback())
            .count() as u64,
        capped_frequent_keys,
        empty_profile_collections: index.stats().empty_profiles.len() as u64,
        boolean_keys_excluded: index.stats().excluded_bools,
    };

    CorpusStats {
        collections: items.len() as u64,
        documents,
        docs_per_collection_hist: docs_hist,
        docs_per_collection_quartiles: quartiles(&doc_counts),
        nesting_depth_hist: nesting_hist,
        value_type_hist: value_types,
        key_type_hist: KeyTypeHist {
            all: index.stats().occurrences,
            unique: index.stats().unique,
        },
        data_field_fill_rate: if documents == 0 {
            0.0
        } else {
            docs_with_data as f64 / documents as f64
        },
        empty_field_rate: if fields_total == 0 {
            0.0
        } else {
            fields_empty as f64 / fields_total as f64
        },
        key_occurrence_hist: key_occurrence,
        warnings,
    }
}

// ---------------------------------------------------------------------------
// Result-quality figures
// ---------------------------------------------------------------------------

/// Counts subsystems owning at least one collection that belongs to an entity
/// with at least one edge, against the number of subsystems with at least one
/// (non-empty) collection.
pub fn subsystem_coverage(
    graph: &EntityGraph,
    subsystems: &BTreeMap<CollectionId, String>,
) -> (usize, usize) {
    let total: std::collections::BTreeSet<&String> = subsystems.values().collect();
    let degrees = graph.degree_counts();
    let mut covered = std::collections::BTreeSet::new();
    for entity in &graph.entities {
        if degrees.get(&entity.id).copied().unwrap_or(0) == 0 {
            continue;
        }
        for member in &entity.members {
            if let Some(subsystem) = subsystems.get(member) {
                covered.insert(subsystem);
            }
        }
    }
    (covered.len(), total.len())
}

/// Mean number of neighbors: 2|E| / |V|.
pub fn average_degree(num_nodes: usize, num_edges: usize) -> f64 {
    if num_nodes == 0 {
        return 0.0;
    }
    2.0 * num_edges as f64 / num_nodes as f64
}

pub fn average_degree_of_entities(graph: &EntityGraph) -> f64 {
    average_degree(graph.entities.len(), graph.edges.len())
}

pub fn average_degree_of_collections(graph: &CollectionGraph) -> f64 {
    average_degree(graph.nodes.len(), graph.edges.len())
}

/// Newman modularity of an unweighted simple graph for a given grouping:
/// Q = sum_g (e_gg/|E| - (deg_g / 2|E|)^2).
pub fn modularity(
    num_nodes: usize,
    edges: &[(usize, usize)],
    group_of: &[usize],
) -> Result<f64, StatsError> {
    assert_eq!(num_nodes, group_of.len(), "grouping must cover all nodes");
    if edges.is_empty() {
        return Err(StatsError::NoEdges);
    }
    let m = edges.len() as f64;
    let mut internal: BTreeMap<usize, u64> = BTreeMap::new();
    let mut degree: BTreeMap<usize, u64> = BTreeMap::new();
    for (u, v) in edges {
        let (gu, gv) = (group_of[*u], group_of[*v]);
        if gu == gv {
            *internal.entry(gu).or_default() += 1;
        }
        *degree.entry(gu).or_default() += 1;
        *degree.entry(gv).or_default() += 1;
    }
    let mut q = 0.0;
    for (group, deg) in &degree {
        let e_gg = internal.get(group).copied().unwrap_or(0) as f64;
        q += e_gg / m - (*deg as f64 / (2.0 * m)).powi(2);
    }
    Ok(q)
}

/// Modularity of the collection graph grouped by subsystem.
pub fn modularity_by_subsystem(graph: &CollectionGraph) -> Result<f64, StatsError> {
    let position: BTreeMap<CollectionId, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i))
        .collect();
    let mut group_names: Vec<&str> = graph.nodes.iter().map(|n| n.subsystem.as_str()).collect();
    group_names.sort_unstable();
    group_names.dedup();
    let group_of: Vec<usize> = graph
        .nodes
        .iter()
        .map(|n| group_names.binary_search(&n.subsystem.as_str()).unwrap())
        .collect();
    let edges: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .map(|e| (position[&e.u], position[&e.v]))
        .collect();
    modularity(graph.nodes.len(), &edges, &group_of)
}
