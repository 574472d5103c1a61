//! Entity construction: merges collections describing the same real-world
//! entity via the primary-key overlap adjacency matrix, thresholding, and
//! breadth-first connected components; supports incremental addition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::document::CollectionId;
use crate::error::EntityError;
use crate::linking::{metric_overlap, CollectionGraph, KeySetIndex};

/// Hyperparameters of the entity stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntityConfig {
    /// Merge threshold over the primary-key overlap coefficient (inclusive).
    pub tau: f64,
    pub name_join_separator: String,
    pub name_length_cap: usize,
    /// Trailing version markers stripped from collection names before entity
    /// naming (applied repeatedly).
    pub version_suffix_pattern: String,
}

pub const DEFAULT_VERSION_SUFFIX_PATTERN: &str = r"(?:[_-]v?\d+|[_-]\d{4}-\d{2}-\d{2})$";

impl Default for EntityConfig {
    fn default() -> Self {
        EntityConfig {
            tau: 0.85,
            name_join_separator: "+".to_owned(),
            name_length_cap: 80,
            version_suffix_pattern: DEFAULT_VERSION_SUFFIX_PATTERN.to_owned(),
        }
    }
}

// ---------------------------------------------------------------------------
// Adjacency matrix
// ---------------------------------------------------------------------------

/// Sparse symmetric matrix of primary-key overlap coefficients; absent entries
/// are zero and the diagonal is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    vertices: Vec<CollectionId>,
    entries: BTreeMap<(CollectionId, CollectionId), f64>,
}

impl AdjacencyMatrix {
    pub fn new(mut vertices: Vec<CollectionId>) -> AdjacencyMatrix {
        vertices.sort_unstable();
        vertices.dedup();
        AdjacencyMatrix {
            vertices,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[CollectionId] {
        &self.vertices
    }

    pub fn set(&mut self, i: CollectionId, j: CollectionId, value: f64) {
        assert!(i != j, "no self-loops in the adjacency matrix");
        assert!((0.0..=1.0).contains(&value), "overlap out of range");
        let key = if i < j { (i, j) } else { (j, i) };
        self.entries.insert(key, value);
    }

    pub fn get(&self, i: CollectionId, j: CollectionId) -> f64 {
        if i == j {
            return 0.0;
        }
        let key = if i < j { (i, j) } else { (j, i) };
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (CollectionId, CollectionId, f64)> + '_ {
        self.entries.iter().map(|((i, j), v)| (*i, *j, *v))
    }

    /// Values of the row for one vertex, keyed by the other endpoint.
    pub fn row(&self, vertex: CollectionId) -> BTreeMap<CollectionId, f64> {
        self.entries()
            .filter_map(|(i, j, v)| {
                if i == vertex {
                    Some((j, v))
                } else if j == vertex {
                    Some((i, v))
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Fills the adjacency matrix with the maximum overlap coefficient between
/// primary-key value sets of every collection pair.
///
/// Collections without an inferred primary key never merge. For keyword-backed
/// primaries the pair value is the single overlap; for low-confidence hash
/// fallbacks the maximum over all candidate-set pairs is taken.
pub fn build_adjacency(index: &KeySetIndex) -> AdjacencyMatrix {
    let mut matrix = AdjacencyMatrix::new(index.nodes().iter().map(|n| n.id).collect());

    // Inverted map over primary keys only, to find candidate pairs without
    // touching the O(m^2) pair space.
    let mut holders: BTreeMap<&crate::document::KeyValue, Vec<u32>> = BTreeMap::new();
    for (i, _) in index.nodes().iter().enumerate() {
        for set in index.primary_candidate_sets(i) {
            for key in set {
                let list = holders.entry(key).or_default();
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
    }
    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    for list in holders.values() {
        for (a, u) in list.iter().enumerate() {
            for v in &list[a + 1..] {
                pairs.insert((*u, *v));
            }
        }
    }

    for (ui, vi) in pairs {
        let mut best: Option<f64> = None;
        for u_set in index.primary_candidate_sets(ui as usize) {
            for v_set in index.primary_candidate_sets(vi as usize) {
                if u_set.is_empty() || v_set.is_empty() {
                    continue;
                }
                if let Some(value) = metric_overlap(u_set, v_set) {
                    if value > 0.0 {
                        best = Some(best.map_or(value, |b: f64| b.max(value)));
                    }
                }
            }
        }
        if let Some(value) = best {
            let u = index.nodes()[ui as usize].id;
            let v = index.nodes()[vi as usize].id;
            matrix.set(u, v, value);
        }
    }
    matrix
}

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

/// A partition of the collection set into entities; components are ordered by
/// their smallest member.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityPartition {
    components: Vec<BTreeSet<CollectionId>>,
    component_of: BTreeMap<CollectionId, usize>,
}

impl EntityPartition {
    pub fn empty() -> EntityPartition {
        EntityPartition {
            components: Vec::new(),
            component_of: BTreeMap::new(),
        }
    }

    fn from_components(mut components: Vec<BTreeSet<CollectionId>>) -> EntityPartition {
        components.retain(|c| !c.is_empty());
        components.sort_by_key(|c| *c.first().expect("non-empty component"));
        let mut component_of = BTreeMap::new();
        for (index, component) in components.iter().enumerate() {
            for id in component {
                component_of.insert(*id, index);
            }
        }
        EntityPartition {
            components,
            component_of,
        }
    }

    pub fn components(&self) -> &[BTreeSet<CollectionId>] {
        &self.components
    }

    pub fn component_of(&self, id: CollectionId) -> Option<usize> {
        self.component_of.get(&id).copied()
    }

    pub fn contains(&self, id: CollectionId) -> bool {
        self.component_of.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Connected components of the graph `{(i,j) : a[i][j] >= tau}`, found by BFS
/// from each unvisited vertex.
pub fn threshold_components(matrix: &AdjacencyMatrix, tau: f64) -> EntityPartition {
    let vertices = matrix.vertices();
    let position: BTreeMap<CollectionId, usize> = vertices
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i))
        .collect();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    for (i, j, value) in matrix.entries() {
        if value >= tau {
            let (pi, pj) = (position[&i], position[&j]);
            neighbors[pi].push(pj);
            neighbors[pj].push(pi);
        }
    }

    let mut visited = vec![false; vertices.len()];
    let mut components = Vec::new();
    for start in 0..vertices.len() {
        if visited[start] {
            continue;
        }
        let mut component = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(current) = queue.pop_front() {
            component.insert(vertices[current]);
            for &next in &neighbors[current] {
                if !visited[next] {
                    visited[next] = true;
                    queue.push_back(next);
                }
            }
        }
        components.push(component);
    }
    EntityPartition::from_components(components)
}

/// Adds one collection to an existing partition: components reachable at
/// `tau` or above through the new row are unioned with the new vertex; every
/// other component is untouched.
pub fn incremental_add(
    partition: &EntityPartition,
    new_id: CollectionId,
    row: &BTreeMap<CollectionId, f64>,
    tau: f64,
) -> Result<EntityPartition, EntityError> {
    if partition.contains(new_id) {
        return Err(EntityError::DuplicateCollection(new_id));
    }
    let mut hit: BTreeSet<usize> = BTreeSet::new();
    for (other, value) in row {
        if *value >= tau {
            if let Some(component) = partition.component_of(*other) {
                hit.insert(component);
            }
        }
    }
    let mut merged = BTreeSet::from([new_id]);
    let mut components = Vec::with_capacity(partition.components.len() + 1);
    for (index, component) in partition.components.iter().enumerate() {
        if hit.contains(&index) {
            merged.extend(component.iter().copied());
        } else {
            components.push(component.clone());
        }
    }
    components.push(merged);
    Ok(EntityPartition::from_components(components))
}

/// Sweeps the merge threshold and records component counts and sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub num_components: usize,
    pub avg_component_size: f64,
}

pub fn threshold_sweep(matrix: &AdjacencyMatrix, taus: &[f64]) -> Vec<SweepPoint> {
    debug_assert!(
        taus.windows(2).all(|w| w[0] <= w[1]),
        "taus must be sorted ascending"
    );
    taus.iter()
        .map(|&tau| {
            let partition = threshold_components(matrix, tau);
            let num = partition.len();
            SweepPoint {
                tau,
                num_components: num,
                avg_component_size: if num == 0 {
                    0.0
                } else {
                    matrix.n() as f64 / num as f64
                },
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Entity graph
// ---------------------------------------------------------------------------

/// A merged entity: one connected component of collections.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: u32,
    pub name: String,
    /// Subsystem owning most members (ties broken lexicographically).
    pub subsystem: String,
    pub members: BTreeSet<CollectionId>,
    /// Member collection names, sorted.
    pub member_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityEdge {
    pub u: u32,
    pub v: u32,
    /// Shared-key counts are summed over member-collection edges; the ratio
    /// metrics take the maximum.
    pub n: u64,
    pub jaccard: f64,
    pub overlap: f64,
    pub pmi: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntityGraph {
    pub entities: Vec<Entity>,
    pub edges: Vec<EntityEdge>,
}

impl EntityGraph {
    pub fn degree_counts(&self) -> BTreeMap<u32, usize> {
        let mut degrees = BTreeMap::new();
        for edge in &self.edges {
            *degrees.entry(edge.u).or_default() += 1;
            *degrees.entry(edge.v).or_default() += 1;
        }
        degrees
    }
}

/// Strips trailing version markers, repeatedly, e.g. `orders_v2` -> `orders`.
pub fn normalize_version_suffix(name: &str, pattern: &Regex) -> String {
    let mut current = name.to_string();
    loop {
        let next = pattern.replace(&current, "").into_owned();
        if next == current || next.is_empty() {
            return current;
        }
        current = next;
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x1_0000_0000_01b3);
    }
    hash
}

fn entity_name(member_names: &[&str], cfg: &EntityConfig, pattern: &Regex) -> String {
    let normalized: BTreeSet<String> = member_names
        .iter()
        .map(|n| normalize_version_suffix(n, pattern))
        .collect();
    let joined = normalized
        .into_iter()
        .collect::<Vec<_>>()
        .join(&cfg.name_join_separator);
    if joined.chars().count() <= cfg.name_length_cap {
        return joined;
    }
    let suffix = format!("~{:08x}", fnv1a(joined.as_bytes()) & 0xffff_ffff);
    let keep = cfg.name_length_cap.saturating_sub(suffix.chars().count());
    let mut truncated: String = joined.chars().take(keep).collect();
    truncated.push_str(&suffix);
    truncated
}

/// Contracts each component of the partition to one entity node. Edges inside
/// a component disappear; edges between components are aggregated (sum of
/// shared-key counts, maximum of each ratio metric).
pub fn build_entity_graph(
    partition: &EntityPartition,
    graph: &CollectionGraph,
    cfg: &EntityConfig,
) -> EntityGraph {
    let pattern = Regex::new(&cfg.version_suffix_pattern)
        .unwrap_or_else(|e| panic!("invalid version suffix pattern: {e}"));
    let names: BTreeMap<CollectionId, &str> = graph
        .nodes
        .iter()
        .map(|n| (n.id, n.name.as_str()))
        .collect();
    let subsystems: BTreeMap<CollectionId, &str> = graph
        .nodes
        .iter()
        .map(|n| (n.id, n.subsystem.as_str()))
        .collect();

    let entities: Vec<Entity> = partition
        .components()
        .iter()
        .enumerate()
        .map(|(index, members)| {
            let member_names: Vec<&str> = members
                .iter()
                .filter_map(|id| names.get(id).copied())
                .collect();
            let mut subsystem_votes: BTreeMap<&str, usize> = BTreeMap::new();
            for id in members {
                if let Some(s) = subsystems.get(id) {
                    *subsystem_votes.entry(s).or_default() += 1;
                }
            }
            let subsystem = subsystem_votes
                .iter()
                .max_by_key(|(name, count)| (**count, std::cmp::Reverse(**name)))
                .map(|(name, _)| (*name).to_owned())
                .unwrap_or_default();
            let mut sorted_names: Vec<String> =
                member_names.iter().map(|n| (*n).to_owned()).collect();
            sorted_names.sort_unstable();
            Entity {
                id: index as u32,
                name: entity_name(&member_names, cfg, &pattern),
                subsystem,
                members: members.clone(),
                member_names: sorted_names,
            }
        })
        .collect();

    let mut aggregated: BTreeMap<(u32, u32), EntityEdge> = BTreeMap::new();
    for edge in &graph.edges {
        let (Some(cu), Some(cv)) = (partition.component_of(edge.u), partition.component_of(edge.v))
        else {
            continue;
        };
        if cu == cv {
            continue;
        }
        let (u, v) = if cu < cv {
            (cu as u32, cv as u32)
        } else {
            (cv as u32, cu as u32)
        };
        aggregated
            .entry((u, v))
            .and_modify(|acc| {
                acc.n += edge.n;
                acc.jaccard = acc.jaccard.max(edge.jaccard);
                acc.overlap = acc.overlap.max(edge.overlap);
                acc.pmi = acc.pmi.max(edge.pmi);
            })
            .or_insert(EntityEdge {
                u,
                v,
                n: edge.n,
                jaccard: edge.jaccard,
                overlap: edge.overlap,
                pmi: edge.pmi,
            });
    }

    EntityGraph {
        entities,
        edges: aggregated.into_values().collect(),
    }
}
