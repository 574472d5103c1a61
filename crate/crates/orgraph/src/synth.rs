//! Seeded synthetic corpora with planted ground truth: subsystems,
//! collections, true foreign-key links, same-entity collection groups and
//! configurable noise (overlapping small-integer ids, very frequent key
//! values, unfilled fields). Includes the scorer that compares pipeline
//! output against the planted truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::document::{Collection, CollectionId, Document, KeyValue, Value};
use crate::error::SynthError;
use crate::export::GraphExport;
use crate::pipeline::RunResult;

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub num_subsystems: usize,
    /// Inclusive range of collections per subsystem.
    pub collections_per_subsystem: (usize, usize),
    /// Inclusive bounds of the log-uniform document count per collection.
    /// Admissible range is [1, 5000]; the default floor of 8 guarantees that
    /// every planted link can realize at least two shared key values.
    pub docs_per_collection: (u64, u64),
    /// Planted degree is drawn uniformly from these choices (default mean 2.5).
    pub link_degree_choices: Vec<u32>,
    pub key_style_weights: KeyStyleWeights,
    /// Probability of starting a same-entity version group at each planning
    /// step.
    pub group_rate: f64,
    /// Fraction of primary keys shared between adjacent group members.
    pub group_primary_overlap: f64,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyStyleWeights {
    pub hash: f64,
    pub int: f64,
    pub composite: f64,
    pub multi: f64,
}

impl Default for KeyStyleWeights {
    fn default() -> Self {
        KeyStyleWeights {
            hash: 0.55,
            int: 0.2,
            composite: 0.15,
            multi: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Probability that a filler field holds null instead of a value.
    pub unfilled_field_rate: f64,
    /// Fraction of collections carrying a small-integer `legacy_id` field
    /// whose values collide across collections.
    pub small_int_collision_rate: f64,
    /// Distinct small-integer values written per noisy collection.
    pub small_int_values_per_collection: usize,
    /// Small-integer values are drawn from `[0, small_int_value_range)`.
    pub small_int_value_range: u32,
    /// Fraction of collections carrying a `status_id` field with one of the
    /// frequent key values in every document.
    pub frequent_key_rate: f64,
    pub frequent_key_values: Vec<i64>,
    /// Integer-keyed entities draw primary keys from one overlapping low
    /// range starting at zero instead of disjoint per-entity ranges.
    pub int_primary_overlap: bool,
    pub int_primary_range: u32,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            unfilled_field_rate: 0.29,
            small_int_collision_rate: 0.85,
            small_int_values_per_collection: 1,
            small_int_value_range: 10,
            frequent_key_rate: 0.0,
            frequent_key_values: vec![0],
            int_primary_overlap: false,
            int_primary_range: 300,
        }
    }
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 42,
            num_subsystems: 11,
            collections_per_subsystem: (6, 10),
            docs_per_collection: (8, 400),
            link_degree_choices: vec![1, 2, 3, 4],
            key_style_weights: KeyStyleWeights::default(),
            group_rate: 0.25,
            group_primary_overlap: 0.9,
            noise: NoiseSpec::default(),
        }
    }
}

impl CorpusSpec {
    /// Preset stressing metric quality: collections share many colliding
    /// small-integer foreign keys and a very frequent `0` value, so the raw
    /// intersection count and the Jaccard coefficient rank false pairs above
    /// true ones while the frequency-discounted metric does not.
    pub fn frequent_key_noise() -> CorpusSpec {
        CorpusSpec {
            docs_per_collection: (8, 150),
            noise: NoiseSpec {
                small_int_collision_rate: 0.8,
                small_int_values_per_collection: 40,
                small_int_value_range: 80,
                frequent_key_rate: 0.8,
                ..NoiseSpec::default()
            },
            ..CorpusSpec::default()
        }
    }

    /// Noise-free variant: the pipeline must recover exactly the planted
    /// links.
    pub fn noiseless() -> CorpusSpec {
        CorpusSpec {
            noise: NoiseSpec {
                unfilled_field_rate: 0.0,
                small_int_collision_rate: 0.0,
                frequent_key_rate: 0.0,
                ..NoiseSpec::default()
            },
            ..CorpusSpec::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> CorpusSpec {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let rate = |label: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidSpec(format!(
                    "{label} must lie in [0, 1], got {v}"
                )))
            }
        };
        rate("group_rate", self.group_rate)?;
        rate("group_primary_overlap", self.group_primary_overlap)?;
        rate("noise.unfilled_field_rate", self.noise.unfilled_field_rate)?;
        rate(
            "noise.small_int_collision_rate",
            self.noise.small_int_collision_rate,
        )?;
        rate("noise.frequent_key_rate", self.noise.frequent_key_rate)?;
        if self.num_subsystems == 0 {
            return Err(SynthError::InvalidSpec("num_subsystems must be > 0".into()));
        }
        let (cmin, cmax) = self.collections_per_subsystem;
        if cmin == 0 || cmin > cmax {
            return Err(SynthError::InvalidSpec(
                "collections_per_subsystem range is empty".into(),
            ));
        }
        let (dmin, dmax) = self.docs_per_collection;
        if dmin == 0 || dmin > dmax || dmax > 5000 {
            return Err(SynthError::InvalidSpec(
                "docs_per_collection must satisfy 1 <= min <= max <= 5000".into(),
            ));
        }
        if self.link_degree_choices.is_empty() {
            return Err(SynthError::InvalidSpec(
                "link_degree_choices must not be empty".into(),
            ));
        }
        let w = &self.key_style_weights;
        if w.hash < 0.0 || w.int < 0.0 || w.composite < 0.0 || w.multi < 0.0 {
            return Err(SynthError::InvalidSpec(
                "key_style_weights must be non-negative".into(),
            ));
        }
        if w.hash + w.int + w.composite + w.multi <= 0.0 {
            return Err(SynthError::InvalidSpec(
                "key_style_weights must not all be zero".into(),
            ));
        }
        if self.noise.small_int_value_range == 0 || self.noise.int_primary_range == 0 {
            return Err(SynthError::InvalidSpec(
                "noise value ranges must be positive".into(),
            ));
        }
        if self.noise.frequent_key_rate > 0.0 && self.noise.frequent_key_values.is_empty() {
            return Err(SynthError::InvalidSpec(
                "frequent_key_values must not be empty when frequent_key_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub version: u32,
    pub seed: u64,
    /// Collection name -> subsystem.
    pub subsystems: BTreeMap<String, String>,
    /// Canonically ordered collection-name pairs that genuinely share keys.
    pub true_links: BTreeSet<(String, String)>,
    /// Planted same-entity groups (collections that must merge).
    pub entity_groups: Vec<BTreeSet<String>>,
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, SynthError> {
    let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SynthError::CorpusMismatch(e.to_string()))
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum KeyStyle {
    Hash,
    Int,
    Composite,
    Multi,
}

const FILLER_NAMES: &[&str] = &[
    "amount",
    "comment",
    "category",
    "region",
    "score",
    "detail",
    "origin",
    "weight",
    "status_note",
    "channel",
];

const WORDS: &[&str] = &[
    "amber", "basil", "cedar", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
    "lumen", "marble", "nectar", "onyx", "pebble", "quartz", "raven", "sable", "timber", "umber",
];

fn word(rng: &mut ChaCha8Rng) -> &'static str {
    WORDS[rng.random_range(0..WORDS.len())]
}

fn hex24(rng: &mut ChaCha8Rng) -> String {
    const HEX: &[u8] = b"0123456789abcdef";
    (0..24)
        .map(|_| HEX[rng.random_range(0..16)] as char)
        .collect()
}

fn log_uniform(rng: &mut ChaCha8Rng, min: u64, max: u64) -> u64 {
    if min == max {
        return min;
    }
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    let x = rng.random::<f64>() * (hi - lo) + lo;
    (x.exp().round() as u64).clamp(min, max)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x1_0000_0000_01b3);
    }
    hash
}

struct PlannedEntity {
    style: KeyStyle,
    /// Indexes into the planned-collection list.
    members: Vec<usize>,
    /// Shared primary-key pool; member k writes the window starting at
    /// k * shift.
    pool: Vec<(Value, KeyValue)>,
    /// Cursor for inbound link samples. It starts at the last member's window
    /// offset and never passes `limit`, so every sample lies inside the
    /// window intersection of all members and no two samples overlap.
    cursor: usize,
    limit: usize,
}

struct PlannedCollection {
    name: String,
    subsystem: String,
    docs: u64,
    entity: usize,
    /// Primary key values per document (one per doc; two for multi style).
    primary_per_doc: Vec<Vec<Value>>,
    /// Distinct written primary key values.
    primary_values: BTreeSet<KeyValue>,
    /// Outbound planted links: (field name, target index, sample values).
    out_links: Vec<(String, usize, Vec<KeyValue>)>,
}

struct LinkPlanter {
    planted: BTreeSet<(usize, usize)>,
    true_links: BTreeSet<(String, String)>,
}

impl LinkPlanter {
    /// Plants one link between `a` and `b` if the pair is admissible and one
    /// endpoint's entity can still hand out a sample of at least two primary
    /// values. Samples are consecutive disjoint slices of the entity pool, so
    /// two referrers of the same entity never accidentally link to each
    /// other.
    fn plant(
        &mut self,
        a: usize,
        b: usize,
        entities: &mut [PlannedEntity],
        collections: &mut [PlannedCollection],
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if a == b || collections[a].entity == collections[b].entity {
            return false;
        }
        let pair = (a.min(b), a.max(b));
        if self.planted.contains(&pair) {
            return false;
        }
        let want = 2 + rng.random_range(0..3) as usize;
        let room = |e: &PlannedEntity| e.limit.saturating_sub(e.cursor);
        let mut order = [b, a];
        if rng.random::<bool>() {
            order.swap(0, 1);
        }
        let Some(&target) = order
            .iter()
            .find(|&&t| room(&entities[collections[t].entity]) >= 2)
        else {
            return false;
        };
        let source = if target == a { b } else { a };
        let entity = &mut entities[collections[target].entity];
        let take = want.min(room(entity));
        let values: Vec<KeyValue> = entity.pool[entity.cursor..entity.cursor + take]
            .iter()
            .map(|(_, kv)| kv.clone())
            .collect();
        entity.cursor += take;
        let suffix = if entity.style == KeyStyle::Multi {
            "refs"
        } else {
            "id"
        };
        let field = format!("{}_{}", collections[target].name, suffix);
        collections[source].out_links.push((field, target, values));
        self.planted.insert(pair);
        self.true_links.insert(canonical_pair(
            &collections[a].name,
            &collections[b].name,
        ));
        true
    }
}

fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Builds the corpus in memory. Fully reproducible from the seed.
pub fn build_corpus(spec: &CorpusSpec) -> Result<(Vec<Collection>, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // --- Plan subsystems, entities and collections. -------------------------
    let mut entities: Vec<PlannedEntity> = Vec::new();
    let mut collections: Vec<PlannedCollection> = Vec::new();
    let (cmin, cmax) = spec.collections_per_subsystem;
    let (dmin, dmax) = spec.docs_per_collection;
    for s in 0..spec.num_subsystems {
        let subsystem = format!("subsystem_{s:02}");
        let per_subsystem = rng.random_range(cmin..=cmax);
        let mut j = 0;
        while j < per_subsystem {
            let remaining = per_subsystem - j;
            let group_size = if remaining >= 2 && rng.random::<f64>() < spec.group_rate {
                if remaining >= 3 && rng.random::<f64>() < 0.3 {
                    3
                } else {
                    2
                }
            } else {
                1
            };
            let style = sample_style(&mut rng, &spec.key_style_weights);
            let entity_index = entities.len();
            let base = format!("s{s:02}_c{j:02}");
            let mut members = Vec::with_capacity(group_size);
            for k in 0..group_size {
                let name = if group_size == 1 {
                    base.clone()
                } else {
                    format!("{base}_v{}", k + 1)
                };
                members.push(collections.len());
                collections.push(PlannedCollection {
                    name,
                    subsystem: subsystem.clone(),
                    docs: log_uniform(&mut rng, dmin, dmax),
                    entity: entity_index,
                    primary_per_doc: Vec::new(),
                    primary_values: BTreeSet::new(),
                    out_links: Vec::new(),
                });
            }
            entities.push(PlannedEntity {
                style,
                members,
                pool: Vec::new(),
                cursor: 0,
                limit: 0,
            });
            j += group_size;
        }
    }

    // --- Primary key pools per entity, shared across group members. ---------
    for (entity_index, entity) in entities.iter_mut().enumerate() {
        let per_doc = if entity.style == KeyStyle::Multi { 2 } else { 1 };
        let needs: Vec<usize> = entity
            .members
            .iter()
            .map(|&c| collections[c].docs as usize * per_doc)
            .collect();
        let min_need = *needs.iter().min().expect("entity has members");
        let shift = if entity.members.len() > 1 {
            ((1.0 - spec.group_primary_overlap) * min_need as f64).floor() as usize
        } else {
            0
        };
        let pool_len = needs
            .iter()
            .enumerate()
            .map(|(k, need)| k * shift + need)
            .max()
            .unwrap_or(0);

        entity.pool = match entity.style {
            KeyStyle::Hash | KeyStyle::Multi => (0..pool_len)
                .map(|_| {
                    let h = hex24(&mut rng);
                    (Value::Str(h.clone()), KeyValue::Str(h))
                })
                .collect(),
            KeyStyle::Int => {
                let base = if spec.noise.int_primary_overlap {
                    0
                } else {
                    (entity_index as i64 + 1) * 1_000_000
                };
                (0..pool_len)
                    .map(|i| {
                        let v = if spec.noise.int_primary_overlap {
                            (i as i64) % i64::from(spec.noise.int_primary_range)
                        } else {
                            base + i as i64
                        };
                        (Value::Int(v), KeyValue::Int(v))
                    })
                    .collect()
            }
            KeyStyle::Composite => (0..pool_len)
                .map(|i| {
                    let number = (entity_index as i64 + 1) * 1_000_000 + i as i64;
                    let text = format!("{} {}", word(&mut rng), word(&mut rng));
                    (
                        Value::Array(vec![Value::Int(number), Value::Str(text.clone())]),
                        KeyValue::Composite(number, text),
                    )
                })
                .collect(),
        };
        // Inbound link samples come from the window shared by all members.
        entity.cursor = (entity.members.len() - 1) * shift;
        entity.limit = needs
            .iter()
            .enumerate()
            .map(|(k, need)| k * shift + need)
            .min()
            .unwrap_or(0);

        for (k, &member) in entity.members.iter().enumerate() {
            let offset = k * shift;
            let docs = collections[member].docs as usize;
            let mut per_doc_values = Vec::with_capacity(docs);
            let mut written: BTreeSet<KeyValue> = BTreeSet::new();
            for d in 0..docs {
                let slice: Vec<(Value, KeyValue)> = (0..per_doc)
                    .map(|e| entity.pool[offset + d * per_doc + e].clone())
                    .collect();
                for (_, kv) in &slice {
                    written.insert(kv.clone());
                }
                per_doc_values.push(slice.into_iter().map(|(v, _)| v).collect());
            }
            collections[member].primary_per_doc = per_doc_values;
            collections[member].primary_values = written;
        }
    }

    // --- Plant links via degree-quota stub matching. -------------------------
    let quotas: Vec<u32> = collections
        .iter()
        .map(|_| spec.link_degree_choices[rng.random_range(0..spec.link_degree_choices.len())])
        .collect();
    let mut stubs: Vec<usize> = quotas
        .iter()
        .enumerate()
        .flat_map(|(i, q)| std::iter::repeat_n(i, *q as usize))
        .collect();
    stubs.shuffle(&mut rng);

    let mut planter = LinkPlanter {
        planted: BTreeSet::new(),
        true_links: BTreeSet::new(),
    };
    for chunk in stubs.chunks(2) {
        if let [a, b] = chunk {
            planter.plant(*a, *b, &mut entities, &mut collections, &mut rng);
        }
    }
    // Every collection participates in at least one link.
    let mut linked: BTreeSet<usize> = BTreeSet::new();
    for (a, b) in &planter.planted {
        linked.insert(*a);
        linked.insert(*b);
    }
    for i in 0..collections.len() {
        if linked.contains(&i) {
            continue;
        }
        let mut partners: Vec<usize> = (0..collections.len()).filter(|&p| p != i).collect();
        partners.shuffle(&mut rng);
        for p in partners {
            if planter.plant(i, p, &mut entities, &mut collections, &mut rng) {
                linked.insert(i);
                linked.insert(p);
                break;
            }
        }
    }
    let mut true_links = planter.true_links;

    // --- Truth closure over entity groups. ----------------------------------
    let mut entity_groups: Vec<BTreeSet<String>> = Vec::new();
    for entity in &entities {
        if entity.members.len() < 2 {
            continue;
        }
        let group: BTreeSet<String> = entity
            .members
            .iter()
            .map(|&m| collections[m].name.clone())
            .collect();
        // Group members overlap heavily on primaries, which is itself a link.
        for (x, a) in entity.members.iter().enumerate() {
            for b in &entity.members[x + 1..] {
                let shared = collections[*a]
                    .primary_values
                    .intersection(&collections[*b].primary_values)
                    .count();
                debug_assert!(shared >= 2, "group members must share keys");
                true_links.insert(canonical_pair(
                    &collections[*a].name,
                    &collections[*b].name,
                ));
            }
        }
        entity_groups.push(group);
    }
    // Inbound samples are drawn from the window every group member writes, so
    // a link to one member is a link to all of them.
    let mut closure: Vec<(String, String)> = Vec::new();
    for source in &collections {
        for (_, target, values) in &source.out_links {
            for &sibling in &entities[collections[*target].entity].members {
                if sibling == *target {
                    continue;
                }
                debug_assert!(
                    values
                        .iter()
                        .all(|v| collections[sibling].primary_values.contains(v)),
                    "sample must lie inside every sibling window"
                );
                closure.push(canonical_pair(&source.name, &collections[sibling].name));
            }
        }
    }
    true_links.extend(closure);

    // --- Materialize documents. ---------------------------------------------
    type NoiseChoice = (Option<Vec<i64>>, Option<Vec<i64>>);
    let mut out: Vec<Collection> = Vec::with_capacity(collections.len());
    let noise = &spec.noise;
    let mut noise_flags: Vec<NoiseChoice> = Vec::new();
    for _ in &collections {
        let small = if rng.random::<f64>() < noise.small_int_collision_rate {
            let k = noise
                .small_int_values_per_collection
                .min(noise.small_int_value_range as usize)
                .max(1);
            let mut values: Vec<i64> = (0..i64::from(noise.small_int_value_range)).collect();
            values.shuffle(&mut rng);
            values.truncate(k);
            Some(values)
        } else {
            None
        };
        let frequent = (rng.random::<f64>() < noise.frequent_key_rate)
            .then(|| noise.frequent_key_values.clone());
        noise_flags.push((small, frequent));
    }

    for (i, planned) in collections.iter().enumerate() {
        let mut doc_rng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a(planned.name.as_bytes()));
        let (small_values, frequent_values) = &noise_flags[i];
        let filler_count = doc_rng.random_range(3..=6usize);
        let mut filler_names: Vec<&str> = FILLER_NAMES.to_vec();
        filler_names.shuffle(&mut doc_rng);
        filler_names.truncate(filler_count);
        let multi = entities[planned.entity].style == KeyStyle::Multi;

        let docs: Vec<Document> = (0..planned.docs as usize)
            .map(|d| {
                let mut fields: Vec<(String, Value)> = Vec::new();
                let primary = &planned.primary_per_doc[d];
                let id_value = if multi {
                    Value::Array(primary.clone())
                } else {
                    primary[0].clone()
                };
                fields.push(("_id".into(), id_value));
                fields.push((
                    "name".into(),
                    Value::Str(format!("{} {}", word(&mut doc_rng), word(&mut doc_rng))),
                ));
                fields.push((
                    "created".into(),
                    Value::Str(format!(
                        "20{:02}-{:02}-{:02}",
                        doc_rng.random_range(15..=25),
                        doc_rng.random_range(1..=12),
                        doc_rng.random_range(1..=28)
                    )),
                ));
                for (field, _, values) in &planned.out_links {
                    let value = &values[d % values.len()];
                    let as_value = match value {
                        KeyValue::Int(v) => Value::Int(*v),
                        KeyValue::Str(s) => Value::Str(s.clone()),
                        KeyValue::Bool(b) => Value::Bool(*b),
                        KeyValue::Composite(n, s) => {
                            Value::Array(vec![Value::Int(*n), Value::Str(s.clone())])
                        }
                    };
                    let wrapped = if field.ends_with("_refs") {
                        Value::Array(vec![as_value])
                    } else {
                        as_value
                    };
                    fields.push((field.clone(), wrapped));
                }
                if let Some(values) = small_values {
                    fields.push(("legacy_id".into(), Value::Int(values[d % values.len()])));
                }
                if let Some(values) = frequent_values {
                    fields.push(("status_id".into(), Value::Int(values[d % values.len()])));
                }
                for name in &filler_names {
                    let value = if doc_rng.random::<f64>() < noise.unfilled_field_rate {
                        Value::Null
                    } else {
                        match doc_rng.random_range(0..5) {
                            0 => Value::Str(format!(
                                "{} {}",
                                word(&mut doc_rng),
                                word(&mut doc_rng)
                            )),
                            1 => Value::Int(doc_rng.random_range(1_000..1_000_000)),
                            2 => Value::Float(doc_rng.random::<f64>() * 100.0),
                            3 => Value::Object(vec![
                                ("text".into(), Value::Str(word(&mut doc_rng).into())),
                                ("level".into(), Value::Int(doc_rng.random_range(0..5))),
                            ]),
                            _ => Value::Array(vec![
                                Value::Str(word(&mut doc_rng).into()),
                                Value::Str(word(&mut doc_rng).into()),
                            ]),
                        }
                    };
                    fields.push(((*name).to_owned(), value));
                }
                Document::new(Value::Object(fields), d).expect("generated root is an object")
            })
            .collect();

        out.push(Collection {
            id: CollectionId(i as u32),
            name: planned.name.clone(),
            subsystem: planned.subsystem.clone(),
            documents: docs,
        });
    }

    let truth = GroundTruth {
        version: 1,
        seed: spec.seed,
        subsystems: collections
            .iter()
            .map(|c| (c.name.clone(), c.subsystem.clone()))
            .collect(),
        true_links,
        entity_groups,
    };
    Ok((out, truth))
}

fn sample_style(rng: &mut ChaCha8Rng, weights: &KeyStyleWeights) -> KeyStyle {
    let total = weights.hash + weights.int + weights.composite + weights.multi;
    let x = rng.random::<f64>() * total;
    if x < weights.hash {
        KeyStyle::Hash
    } else if x < weights.hash + weights.int {
        KeyStyle::Int
    } else if x < weights.hash + weights.int + weights.composite {
        KeyStyle::Composite
    } else {
        KeyStyle::Multi
    }
}

/// Writes the corpus in the canonical directory layout plus
/// `ground_truth.json`.
pub fn generate_corpus(spec: &CorpusSpec, dir: &Path) -> Result<GroundTruth, SynthError> {
    let (collections, truth) = build_corpus(spec)?;
    let io_err = |path: &Path| {
        let p = path.display().to_string();
        move |source: std::io::Error| SynthError::Io {
            path: p.clone(),
            source,
        }
    };
    for collection in &collections {
        let sub_dir = dir.join(&collection.subsystem);
        fs::create_dir_all(&sub_dir).map_err(io_err(&sub_dir))?;
        let path = sub_dir.join(format!("{}.jsonl", collection.name));
        let mut file = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        for document in &collection.documents {
            serde_json::to_writer(&mut file, document.root())
                .map_err(|e| SynthError::Io {
                    path: path.display().to_string(),
                    source: std::io::Error::other(e),
                })?;
            file.write_all(b"\n").map_err(io_err(&path))?;
        }
    }
    let truth_path = dir.join("ground_truth.json");
    crate::export::write_json(&truth, &truth_path).map_err(|e| SynthError::Io {
        path: truth_path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// The parts of a pipeline result the scorer needs, independent of whether
/// they come from memory or from exported graph files.
#[derive(Debug, Clone)]
pub struct ResultView {
    pub links: BTreeSet<(String, String)>,
    /// Entity member sets plus whether the entity has at least one edge.
    pub entities: Vec<(BTreeSet<String>, bool)>,
    pub num_entities: usize,
    pub num_entity_edges: usize,
}

impl ResultView {
    pub fn from_run(result: &RunResult) -> ResultView {
        let names: BTreeMap<CollectionId, &str> = result
            .collections
            .iter()
            .map(|a| (a.collection.id, a.collection.name.as_str()))
            .collect();
        let links = result
            .collection_graph
            .edges
            .iter()
            .map(|e| canonical_pair(names[&e.u], names[&e.v]))
            .collect();
        let degrees = result.entity_graph.degree_counts();
        let entities = result
            .entity_graph
            .entities
            .iter()
            .map(|e| {
                (
                    e.member_names.iter().cloned().collect(),
                    degrees.get(&e.id).copied().unwrap_or(0) > 0,
                )
            })
            .collect();
        ResultView {
            links,
            entities,
            num_entities: result.entity_graph.entities.len(),
            num_entity_edges: result.entity_graph.edges.len(),
        }
    }

    pub fn from_graph_exports(collection: &GraphExport, entity: &GraphExport) -> ResultView {
        let name_of: BTreeMap<u32, &str> = collection
            .nodes
            .iter()
            .map(|n| (n.id, n.name.as_str()))
            .collect();
        let links = collection
            .edges
            .iter()
            .filter_map(|e| {
                Some(canonical_pair(name_of.get(&e.u)?, name_of.get(&e.v)?))
            })
            .collect();
        let mut with_edge: BTreeSet<u32> = BTreeSet::new();
        for e in &entity.edges {
            with_edge.insert(e.u);
            with_edge.insert(e.v);
        }
        let entities = entity
            .nodes
            .iter()
            .map(|n| {
                (
                    n.collections.iter().cloned().collect(),
                    with_edge.contains(&n.id),
                )
            })
            .collect();
        ResultView {
            links,
            entities,
            num_entities: entity.nodes.len(),
            num_entity_edges: entity.edges.len(),
        }
    }

    /// Treats the truth itself as a perfect result; scoring it must yield 1.0
    /// everywhere.
    pub fn from_truth(truth: &GroundTruth) -> ResultView {
        let mut grouped: BTreeMap<&String, usize> = BTreeMap::new();
        for (i, group) in truth.entity_groups.iter().enumerate() {
            for name in group {
                grouped.insert(name, i);
            }
        }
        let mut linked: BTreeSet<&String> = BTreeSet::new();
        for (a, b) in &truth.true_links {
            linked.insert(a);
            linked.insert(b);
        }
        let mut entities: Vec<(BTreeSet<String>, bool)> = truth
            .entity_groups
            .iter()
            .map(|g| (g.clone(), g.iter().any(|n| linked.contains(n))))
            .collect();
        for name in truth.subsystems.keys() {
            if !grouped.contains_key(name) {
                entities.push((BTreeSet::from([name.clone()]), linked.contains(name)));
            }
        }
        let num_entities = entities.len();
        ResultView {
            links: truth.true_links.clone(),
            entities,
            num_entities,
            // Lower bound: inter-entity true links collapse onto entity pairs.
            num_entity_edges: truth.true_links.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageCount {
    pub covered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub link_precision: f64,
    pub link_recall: f64,
    pub entity_pairwise_f1: f64,
    pub subsystem_coverage: CoverageCount,
    pub average_degree: f64,
    pub predicted_links: usize,
    pub true_links: usize,
}

fn safe_ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        1.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Scores a pipeline result against the planted truth: link precision/recall
/// over unordered collection pairs, pairwise F1 between produced components
/// and planted groups, subsystem coverage and entity-graph average degree.
pub fn evaluate_against_truth(
    view: &ResultView,
    truth: &GroundTruth,
) -> Result<EvaluationReport, SynthError> {
    let result_names: BTreeSet<&String> = view
        .entities
        .iter()
        .flat_map(|(members, _)| members.iter())
        .collect();
    let truth_names: BTreeSet<&String> = truth.subsystems.keys().collect();
    if result_names != truth_names {
        let missing: Vec<&&String> = truth_names.difference(&result_names).take(3).collect();
        let extra: Vec<&&String> = result_names.difference(&truth_names).take(3).collect();
        return Err(SynthError::CorpusMismatch(format!(
            "collection names differ from the ground truth (missing: {missing:?}, unexpected: {extra:?})"
        )));
    }

    let true_positive_links = view.links.intersection(&truth.true_links).count();
    let link_precision = safe_ratio(true_positive_links, view.links.len());
    let link_recall = safe_ratio(true_positive_links, truth.true_links.len());

    let pair_set = |groups: &[BTreeSet<String>]| -> BTreeSet<(String, String)> {
        let mut pairs = BTreeSet::new();
        for group in groups {
            let members: Vec<&String> = group.iter().collect();
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    pairs.insert(canonical_pair(a, b));
                }
            }
        }
        pairs
    };
    let result_groups: Vec<BTreeSet<String>> = view
        .entities
        .iter()
        .map(|(members, _)| members.clone())
        .collect();
    let predicted_pairs = pair_set(&result_groups);
    let truth_pairs = pair_set(&truth.entity_groups);
    let tp = predicted_pairs.intersection(&truth_pairs).count();
    let precision = safe_ratio(tp, predicted_pairs.len());
    let recall = safe_ratio(tp, truth_pairs.len());
    let entity_pairwise_f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    let total_subsystems: BTreeSet<&String> = truth.subsystems.values().collect();
    let mut covered: BTreeSet<&String> = BTreeSet::new();
    for (members, has_edge) in &view.entities {
        if !has_edge {
            continue;
        }
        for member in members {
            if let Some(subsystem) = truth.subsystems.get(member) {
                covered.insert(subsystem);
            }
        }
    }

    Ok(EvaluationReport {
        link_precision,
        link_recall,
        entity_pairwise_f1,
        subsystem_coverage: CoverageCount {
            covered: covered.len(),
            total: total_subsystems.len(),
        },
        average_degree: crate::stats::average_degree(view.num_entities, view.num_entity_edges),
        predicted_links: view.links.len(),
        true_links: truth.true_links.len(),
    })
}
