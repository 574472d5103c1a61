//! Link discovery: builds the inverted key index, computes the intersection
//! metrics for all co-keyed collection pairs, and filters edges.
//!
//! Pair generation walks the inverted index (never the O(m^2) pair space), so
//! corpora with hundreds of collections stay cheap; metrics for the generated
//! pairs are then computed exactly from the per-collection key sets.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{canonicalize_key_value, Collection, CollectionId, KeyValue, Value};
use crate::error::LinkError;
use crate::keys::{CollectionKeyProfile, IdType, KeyInferenceConfig};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    N,
    Jaccard,
    Overlap,
    Pmi,
}

/// Hyperparameters of the linking stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkingConfig {
    /// Minimum shared-key count for an edge to survive filtering. Pairs that
    /// share a single key are noise more often than not.
    pub min_n: u64,
    /// Metric the threshold applies to.
    pub metric: Metric,
    /// Optional metric threshold; `null` keeps every edge that passes `min_n`.
    pub threshold: Option<f64>,
    /// Keys held by more than this fraction of collections are excluded from
    /// pair generation (they still count toward key frequencies). A value of
    /// 1.0 disables the cap.
    pub frequent_key_cap: f64,
    /// How many shared key values to record per edge as evidence.
    pub witness_sample_k: usize,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig {
            min_n: 2,
            metric: Metric::Pmi,
            threshold: None,
            frequent_key_cap: 0.5,
            witness_sample_k: 5,
        }
    }
}

impl LinkingConfig {
    pub fn criterion(&self) -> FilterCriterion {
        FilterCriterion {
            min_n: self.min_n,
            metric: self.metric,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FilterCriterion {
    pub min_n: u64,
    pub metric: Metric,
    pub threshold: Option<f64>,
}

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

/// Graph node metadata for a collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: CollectionId,
    pub name: String,
    pub subsystem: String,
}

/// Key counts per kind; `multi` counts values contributed by multi-reference
/// (array-of-hashes) fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KeyTypeCounts {
    pub int: u64,
    pub str: u64,
    pub bool: u64,
    pub composite: u64,
    pub multi: u64,
}

impl KeyTypeCounts {
    fn bump(&mut self, category: KeyCategory) {
        match category {
            KeyCategory::Int => self.int += 1,
            KeyCategory::Str => self.str += 1,
            KeyCategory::Bool => self.bool += 1,
            KeyCategory::Composite => self.composite += 1,
            KeyCategory::Multi => self.multi += 1,
        }
    }

    fn add(&mut self, other: &KeyTypeCounts) {
        self.int += other.int;
        self.str += other.str;
        self.bool += other.bool;
        self.composite += other.composite;
        self.multi += other.multi;
    }

    pub fn total(&self) -> u64 {
        self.int + self.str + self.bool + self.composite + self.multi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum KeyCategory {
    Int,
    Str,
    Bool,
    Composite,
    Multi,
}

fn categorize(key: &KeyValue, via_multi: bool) -> KeyCategory {
    if via_multi {
        return KeyCategory::Multi;
    }
    match key {
        KeyValue::Int(_) => KeyCategory::Int,
        KeyValue::Str(_) => KeyCategory::Str,
        KeyValue::Bool(_) => KeyCategory::Bool,
        KeyValue::Composite(..) => KeyCategory::Composite,
    }
}

/// Counters accumulated while building the index, reported via statistics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IndexStats {
    pub occurrences: KeyTypeCounts,
    pub unique: KeyTypeCounts,
    /// Boolean values reaching key paths; they are counted but never indexed
    /// because a two-value domain intersects everything.
    pub excluded_bools: u64,
    pub empty_profiles: Vec<CollectionId>,
    pub distinct_keys: usize,
}

/// Per-collection canonical key sets plus the inverted key-to-collections map.
#[derive(Debug, Clone)]
pub struct KeySetIndex {
    nodes: Vec<NodeInfo>,
    sets: Vec<BTreeSet<KeyValue>>,
    /// Primary-key value sets per candidate primary path (one entry for
    /// keyword-backed primaries, several for low-confidence fallbacks).
    primary_sets: Vec<Vec<BTreeSet<KeyValue>>>,
    inverted: BTreeMap<KeyValue, Vec<u32>>,
    weight_sums: Vec<f64>,
    t_prime: f64,
    stats: IndexStats,
}

struct CollectionExtraction {
    combined: BTreeSet<KeyValue>,
    primary: Vec<BTreeSet<KeyValue>>,
    occurrences: KeyTypeCounts,
    seen: HashSet<(KeyCategory, KeyValue)>,
    excluded_bools: u64,
}

fn extract_collection(
    collection: &Collection,
    profile: &CollectionKeyProfile,
    cfg: &KeyInferenceConfig,
) -> CollectionExtraction {
    let mut out = CollectionExtraction {
        combined: BTreeSet::new(),
        primary: Vec::new(),
        occurrences: KeyTypeCounts::default(),
        seen: HashSet::new(),
        excluded_bools: 0,
    };

    let mut record =
        |key: KeyValue, via_multi: bool, target: Option<&mut BTreeSet<KeyValue>>| match key {
            KeyValue::Bool(_) => {
                out.occurrences.bump(KeyCategory::Bool);
                out.seen.insert((KeyCategory::Bool, key));
                out.excluded_bools += 1;
            }
            key => {
                let category = categorize(&key, via_multi);
                out.occurrences.bump(category);
                if let Some(set) = target {
                    set.insert(key.clone());
                }
                out.combined.insert(key.clone());
                out.seen.insert((category, key));
            }
        };

    let key_paths: Vec<(&crate::document::FieldPath, IdType, bool)> = {
        let mut paths = Vec::new();
        if profile.has_hash_fallback() {
            for path in &profile.fallback_candidates {
                paths.push((path, IdType::Simple, true));
            }
            // The demoted fallback candidates are already in the foreign list;
            // skip them there to avoid double extraction.
            for d in &profile.foreign {
                if !profile.fallback_candidates.contains(&d.path) {
                    paths.push((&d.path, d.id_type, false));
                }
            }
        } else {
            for d in profile.key_paths() {
                paths.push((&d.path, d.id_type, d.role == crate::keys::KeyRole::Primary));
            }
        }
        paths
    };

    for (path, id_type, is_primary) in key_paths {
        let mut primary_set = is_primary.then(BTreeSet::new);
        for document in &collection.documents {
            let Some(value) = path.resolve(document.root()) else {
                continue;
            };
            match (id_type, value) {
                (IdType::Many, Value::Array(elements)) => {
                    for element in elements {
                        if let Some(key) = canonicalize_key_value(element, &cfg.hash) {
                            record(key, true, primary_set.as_mut());
                        }
                    }
                }
                (_, value) => {
                    if let Some(key) = canonicalize_key_value(value, &cfg.hash) {
                        record(key, false, primary_set.as_mut());
                    }
                }
            }
        }
        if let Some(set) = primary_set {
            out.primary.push(set);
        }
    }
    out
}

/// Builds the key index over all collections. `items` pairs each collection
/// with its key profile, ordered by collection id.
pub fn build_key_index(
    items: &[(&Collection, &CollectionKeyProfile)],
    cfg: &KeyInferenceConfig,
) -> KeySetIndex {
    let extractions: Vec<CollectionExtraction> = items
        .par_iter()
        .map(|(collection, profile)| extract_collection(collection, profile, cfg))
        .collect();

    let mut nodes = Vec::with_capacity(items.len());
    let mut sets = Vec::with_capacity(items.len());
    let mut primary_sets = Vec::with_capacity(items.len());
    let mut inverted: BTreeMap<KeyValue, Vec<u32>> = BTreeMap::new();
    let mut stats = IndexStats::default();
    let mut unique_seen: HashSet<(KeyCategory, KeyValue)> = HashSet::new();

    for (i, ((collection, profile), extraction)) in items.iter().zip(extractions).enumerate() {
        nodes.push(NodeInfo {
            id: collection.id,
            name: collection.name.clone(),
            subsystem: collection.subsystem.clone(),
        });
        for key in &extraction.combined {
            inverted.entry(key.clone()).or_default().push(i as u32);
        }
        stats.occurrences.add(&extraction.occurrences);
        stats.excluded_bools += extraction.excluded_bools;
        for entry in extraction.seen {
            let category = entry.0;
            if unique_seen.insert(entry) {
                stats.unique.bump(category);
            }
        }
        if profile.is_empty_profile() {
            stats.empty_profiles.push(collection.id);
        }
        sets.push(extraction.combined);
        primary_sets.push(extraction.primary);
    }
    stats.distinct_keys = inverted.len();

    let t_prime = t_prime_of(&inverted);
    let weight_sums = sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|key| 1.0 / inverted[key].len() as f64)
                .sum()
        })
        .collect();

    KeySetIndex {
        nodes,
        sets,
        primary_sets,
        inverted,
        weight_sums,
        t_prime,
        stats,
    }
}

/// Sums 1/c(z) grouped by frequency so the result does not depend on map
/// iteration order.
fn t_prime_of(inverted: &BTreeMap<KeyValue, Vec<u32>>) -> f64 {
    let mut by_frequency: BTreeMap<usize, u64> = BTreeMap::new();
    for holders in inverted.values() {
        *by_frequency.entry(holders.len()).or_default() += 1;
    }
    by_frequency
        .iter()
        .map(|(c, count)| *count as f64 / *c as f64)
        .sum()
}

impl KeySetIndex {
    /// Constructs an index directly from key sets; primarily for tests and
    /// oracles. Each collection's primary set defaults to its full set.
    pub fn from_sets(entries: Vec<(NodeInfo, BTreeSet<KeyValue>)>) -> KeySetIndex {
        let mut nodes = Vec::with_capacity(entries.len());
        let mut sets = Vec::with_capacity(entries.len());
        let mut primary_sets = Vec::with_capacity(entries.len());
        let mut inverted: BTreeMap<KeyValue, Vec<u32>> = BTreeMap::new();
        for (i, (node, set)) in entries.into_iter().enumerate() {
            for key in &set {
                inverted.entry(key.clone()).or_default().push(i as u32);
            }
            nodes.push(node);
            primary_sets.push(vec![set.clone()]);
            sets.push(set);
        }
        let t_prime = t_prime_of(&inverted);
        let weight_sums = sets
            .iter()
            .map(|set| {
                set.iter()
                    .map(|key| 1.0 / inverted[key].len() as f64)
                    .sum()
            })
            .collect();
        let stats = IndexStats {
            distinct_keys: inverted.len(),
            ..IndexStats::default()
        };
        KeySetIndex {
            nodes,
            sets,
            primary_sets,
            inverted,
            weight_sums,
            t_prime,
            stats,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn set(&self, i: usize) -> &BTreeSet<KeyValue> {
        &self.sets[i]
    }

    pub fn primary_candidate_sets(&self, i: usize) -> &[BTreeSet<KeyValue>] {
        &self.primary_sets[i]
    }

    /// Number of collections holding key `z`; 0 for unknown keys.
    pub fn c(&self, key: &KeyValue) -> usize {
        self.inverted.get(key).map_or(0, Vec::len)
    }

    /// Total distinct-key count.
    pub fn total_distinct(&self) -> usize {
        self.inverted.len()
    }

    /// Normalizer of the frequency-discounted measure: sum of 1/c(z) over all
    /// distinct keys.
    pub fn t_prime(&self) -> f64 {
        self.t_prime
    }

    pub fn weight_sum(&self, i: usize) -> f64 {
        self.weight_sums[i]
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn inverted(&self) -> &BTreeMap<KeyValue, Vec<u32>> {
        &self.inverted
    }

    /// Projection of the index onto keys accepted by the predicate, e.g. to
    /// run link discovery and coverage curves over integer keys only.
    pub fn restricted(&self, keep: impl Fn(&KeyValue) -> bool) -> KeySetIndex {
        let mut restricted = KeySetIndex::from_sets(
            self.nodes
                .iter()
                .zip(&self.sets)
                .map(|(node, set)| {
                    (
                        node.clone(),
                        set.iter().filter(|k| keep(k)).cloned().collect(),
                    )
                })
                .collect(),
        );
        restricted.primary_sets = self
            .primary_sets
            .iter()
            .map(|candidates| {
                candidates
                    .iter()
                    .map(|set| set.iter().filter(|k| keep(k)).cloned().collect())
                    .collect()
            })
            .collect();
        restricted
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Exact intersection cardinality.
pub fn metric_n(u: &BTreeSet<KeyValue>, v: &BTreeSet<KeyValue>) -> u64 {
    let (small, large) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    small.iter().filter(|k| large.contains(*k)).count() as u64
}

/// Intersection over union; undefined when both sets are empty.
pub fn metric_jaccard(u: &BTreeSet<KeyValue>, v: &BTreeSet<KeyValue>) -> Option<f64> {
    let union = u.len() + v.len();
    if union == 0 {
        return None;
    }
    let n = metric_n(u, v) as usize;
    Some(n as f64 / (union - n) as f64)
}

/// Intersection over the smaller set ("degree of coverage"); undefined when
/// either set is empty.
pub fn metric_overlap(u: &BTreeSet<KeyValue>, v: &BTreeSet<KeyValue>) -> Option<f64> {
    let min = u.len().min(v.len());
    if min == 0 {
        return None;
    }
    Some(metric_n(u, v) as f64 / min as f64)
}

/// Frequency-discounted pointwise mutual information.
///
/// Key values are weighted 1/c(z) so that keys held by many collections (such
/// as low integers) contribute little; probabilities are weight sums
/// normalized by the corpus-wide weight mass. Undefined (no edge) when the
/// intersection is empty.
pub fn metric_pmi(
    u: &BTreeSet<KeyValue>,
    v: &BTreeSet<KeyValue>,
    index: &KeySetIndex,
) -> Option<f64> {
    let weight = |set: &BTreeSet<KeyValue>| -> f64 {
        set.iter()
            .map(|k| {
                let c = index.c(k);
                if c == 0 {
                    0.0
                } else {
                    1.0 / c as f64
                }
            })
            .sum()
    };
    let (small, large) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    let shared: f64 = small
        .iter()
        .filter(|k| large.contains(*k))
        .map(|k| 1.0 / index.c(k).max(1) as f64)
        .sum();
    if shared == 0.0 {
        return None;
    }
    Some((shared * index.t_prime() / (weight(u) * weight(v))).ln())
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

/// An undirected link between two collections with all four metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEdge {
    pub u: CollectionId,
    pub v: CollectionId,
    pub n: u64,
    pub jaccard: f64,
    pub overlap: f64,
    pub pmi: f64,
    pub witness: Vec<KeyValue>,
}

impl LinkEdge {
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::N => self.n as f64,
            Metric::Jaccard => self.jaccard,
            Metric::Overlap => self.overlap,
            Metric::Pmi => self.pmi,
        }
    }
}

/// Simple undirected graph over collections; nodes are never removed by
/// filtering, so isolation stays observable.
#[derive(Debug, Clone)]
pub struct CollectionGraph {
    pub nodes: Vec<NodeInfo>,
    pub edges: Vec<LinkEdge>,
    /// Keys excluded from pair generation by the frequency cap.
    pub capped_keys: u64,
}

impl CollectionGraph {
    pub fn degree_counts(&self) -> BTreeMap<CollectionId, usize> {
        let mut degrees: BTreeMap<CollectionId, usize> = BTreeMap::new();
        for edge in &self.edges {
            *degrees.entry(edge.u).or_default() += 1;
            *degrees.entry(edge.v).or_default() += 1;
        }
        degrees
    }

    /// Fraction of nodes with at least one edge.
    pub fn covered_fraction(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        self.degree_counts().len() as f64 / self.nodes.len() as f64
    }
}

/// Emits one edge per unordered collection pair sharing at least one key.
///
/// Candidate pairs come from the inverted index; keys held by more than
/// `frequent_key_cap * m` collections do not generate pairs (but keep their
/// full weight in c(z) and the PMI normalizer). Metrics for every generated
/// pair are computed exactly over the full key sets.
pub fn pairwise_links(index: &KeySetIndex, cfg: &LinkingConfig) -> CollectionGraph {
    let m = index.len();
    // A key held by exactly two collections is never "frequent"; the floor
    // keeps small corpora linkable.
    let cap = (cfg.frequent_key_cap * m as f64).max(2.0);
    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut capped_keys = 0u64;
    for holders in index.inverted().values() {
        if holders.len() < 2 {
            continue;
        }
        if holders.len() as f64 > cap {
            capped_keys += 1;
            continue;
        }
        for (a, u) in holders.iter().enumerate() {
            for v in &holders[a + 1..] {
                pairs.insert((*u, *v));
            }
        }
    }

    let pair_list: Vec<(u32, u32)> = pairs.into_iter().collect();
    let edges: Vec<LinkEdge> = pair_list
        .par_iter()
        .map(|&(ui, vi)| edge_for_pair(index, ui as usize, vi as usize, cfg.witness_sample_k))
        .collect();

    CollectionGraph {
        nodes: index.nodes().to_vec(),
        edges,
        capped_keys,
    }
}

fn edge_for_pair(index: &KeySetIndex, ui: usize, vi: usize, witness_k: usize) -> LinkEdge {
    let u = index.set(ui);
    let v = index.set(vi);
    let (small, large) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    let mut n = 0u64;
    let mut shared_weight = 0.0f64;
    let mut witness = Vec::new();
    for key in small {
        if large.contains(key) {
            n += 1;
            shared_weight += 1.0 / index.c(key) as f64;
            if witness.len() < witness_k {
                witness.push(key.clone());
            }
        }
    }
    debug_assert!(n >= 1, "pair generation produced a disjoint pair");
    let union = (u.len() + v.len()) as u64 - n;
    let min = u.len().min(v.len()) as u64;
    let pmi =
        (shared_weight * index.t_prime() / (index.weight_sum(ui) * index.weight_sum(vi))).ln();
    LinkEdge {
        u: index.nodes()[ui].id,
        v: index.nodes()[vi].id,
        n,
        jaccard: n as f64 / union as f64,
        overlap: n as f64 / min as f64,
        pmi,
        witness,
    }
}

/// Keeps edges with `n >= min_n` and, when a threshold is set, metric value
/// at or above it. Nodes are preserved.
pub fn filter_edges(graph: &CollectionGraph, criterion: &FilterCriterion) -> CollectionGraph {
    let edges = graph
        .edges
        .iter()
        .filter(|edge| {
            edge.n >= criterion.min_n
                && criterion
                    .threshold
                    .is_none_or(|t| edge.metric(criterion.metric) >= t)
        })
        .cloned()
        .collect();
    CollectionGraph {
        nodes: graph.nodes.clone(),
        edges,
        capped_keys: graph.capped_keys,
    }
}

/// One point of a coverage curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveragePoint {
    pub threshold: f64,
    pub num_edges: usize,
    pub covered_fraction: f64,
}

/// Sweeps metric thresholds (descending) and records, for each, the number of
/// surviving edges and the fraction of nodes retaining at least one edge.
pub fn coverage_curve(
    graph: &CollectionGraph,
    metric: Metric,
    thresholds: &[f64],
) -> Vec<CoveragePoint> {
    debug_assert!(
        thresholds.windows(2).all(|w| w[0] >= w[1]),
        "thresholds must be sorted descending"
    );
    let mut order: Vec<&LinkEdge> = graph.edges.iter().collect();
    order.sort_by(|a, b| b.metric(metric).total_cmp(&a.metric(metric)));

    let total = graph.nodes.len();
    let mut degrees: BTreeMap<CollectionId, usize> = BTreeMap::new();
    let mut covered = 0usize;
    let mut added = 0usize;
    let mut points = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        while added < order.len() && order[added].metric(metric) >= threshold {
            let edge = order[added];
            for node in [edge.u, edge.v] {
                let degree = degrees.entry(node).or_default();
                *degree += 1;
                if *degree == 1 {
                    covered += 1;
                }
            }
            added += 1;
        }
        points.push(CoveragePoint {
            threshold,
            num_edges: added,
            covered_fraction: if total == 0 {
                0.0
            } else {
                covered as f64 / total as f64
            },
        });
    }
    points
}

/// Distinct metric values over the graph's edges, descending; the natural
/// threshold grid for [`coverage_curve`].
pub fn distinct_thresholds(graph: &CollectionGraph, metric: Metric) -> Vec<f64> {
    let mut values: Vec<f64> = graph.edges.iter().map(|e| e.metric(metric)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.dedup();
    values
}

/// Trapezoidal area under coverage as a function of edge count, normalized by
/// the edge-count range so the result lies in [0, 1].
pub fn curve_auc(curve: &[CoveragePoint]) -> Result<f64, LinkError> {
    if curve.len() < 2 {
        return Err(LinkError::TooFewPoints);
    }
    let mut points: Vec<(usize, f64)> = curve
        .iter()
        .map(|p| (p.num_edges, p.covered_fraction))
        .collect();
    points.sort_by_key(|(x, _)| *x);
    let x_min = points.first().unwrap().0;
    let x_max = points.last().unwrap().0;
    if x_min == x_max {
        return Err(LinkError::DegenerateRange);
    }
    let mut area = 0.0;
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        area += (x1 - x0) as f64 * (y0 + y1) / 2.0;
    }
    Ok(area / (x_max - x_min) as f64)
}
