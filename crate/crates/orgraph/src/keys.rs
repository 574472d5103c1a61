//! Key inference: detects primary keys, foreign keys, name fields and date
//! fields in a collection's schema document, including composite
//! (`[integer, text]`) and multi-reference (array-of-hashes) key forms.

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Serialize;

use crate::document::{
    composite_key_shape, multi_ref_shape, CollectionId, Document, FieldPath, HashMatcher, Value,
};
use crate::error::ConfigError;

// ---------------------------------------------------------------------------
// Keyword matching
// ---------------------------------------------------------------------------

/// Ordered identifier keywords; index 0 has the highest priority.
#[derive(Debug, Clone)]
pub struct KeywordSet {
    words: Vec<String>,
}

pub const DEFAULT_KEYWORDS: &[&str] = &["_id", "id", "uid", "guid", "key", "pk"];

impl Default for KeywordSet {
    fn default() -> Self {
        KeywordSet {
            words: DEFAULT_KEYWORDS.iter().map(|w| (*w).to_owned()).collect(),
        }
    }
}

impl KeywordSet {
    /// Normalizes to lowercase and rejects empty or duplicate entries.
    pub fn new(words: Vec<String>) -> Result<KeywordSet, ConfigError> {
        if words.is_empty() {
            return Err(ConfigError::Validation(
                "key_inference.keywords must not be empty".into(),
            ));
        }
        let mut seen = Vec::new();
        for word in &words {
            let lower = word.to_lowercase();
            if lower.is_empty() {
                return Err(ConfigError::Validation(
                    "key_inference.keywords entries must be non-empty".into(),
                ));
            }
            if seen.contains(&lower) {
                return Err(ConfigError::Validation(format!(
                    "key_inference.keywords contains duplicate entry `{lower}`"
                )));
            }
            seen.push(lower);
        }
        Ok(KeywordSet { words: seen })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// A keyword hit on a field name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordMatch {
    pub keyword: String,
    pub priority: usize,
    pub exact: bool,
}

/// Splits a field name on `_`, `-`, other non-alphanumeric separators and
/// camel-case boundaries. Returns `(start char offset, lowercase token)`.
fn tokenize(name: &str) -> Vec<(usize, String)> {
    let chars: Vec<char> = name.chars().collect();
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let flush = |tokens: &mut Vec<(usize, String)>, start: usize, end: usize| {
        if end > start {
            let token: String = chars[start..end].iter().collect::<String>().to_lowercase();
            tokens.push((start, token));
        }
    };
    for i in 0..chars.len() {
        let c = chars[i];
        if !c.is_alphanumeric() {
            if let Some(s) = start.take() {
                flush(&mut tokens, s, i);
            }
            continue;
        }
        if let Some(s) = start {
            let prev = chars[i - 1];
            // lower/digit -> Upper starts a new word; so does the last capital
            // of an acronym run followed by lowercase ("IDCode" -> ID, Code).
            let camel_boundary = (c.is_uppercase() && (prev.is_lowercase() || prev.is_numeric()))
                || (c.is_uppercase()
                    && prev.is_uppercase()
                    && chars.get(i + 1).is_some_and(|n| n.is_lowercase()));
            if camel_boundary {
                flush(&mut tokens, s, i);
                start = Some(i);
            }
        } else {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        flush(&mut tokens, s, chars.len());
    }
    tokens
}

/// Case-insensitive keyword containment test.
///
/// A keyword matches when it equals the whole name, equals one token, or is a
/// suffix of the name aligned on a token boundary (keywords that begin with a
/// separator, like `_id`, may end the name anywhere). The highest-priority
/// match wins; at equal priority an exact-equality match outranks containment.
pub fn keyword_match(field_name: &str, keywords: &KeywordSet) -> Option<KeywordMatch> {
    // Per-char lowercase keeps offsets aligned with the original name.
    let lower: Vec<char> = field_name
        .chars()
        .map(|c| c.to_lowercase().next().unwrap_or(c))
        .collect();
    let tokens = tokenize(field_name);

    let mut best: Option<(usize, u8, KeywordMatch)> = None;
    for (priority, word) in keywords.words().iter().enumerate() {
        let wchars: Vec<char> = word.chars().collect();
        let exact = lower == wchars;
        let token_hit = tokens.iter().any(|(_, t)| t == word);
        let suffix_hit = !exact && !token_hit && lower.ends_with(&wchars) && {
            let at = lower.len() - wchars.len();
            let separator_lead = wchars.first().is_some_and(|c| !c.is_alphanumeric());
            separator_lead || tokens.iter().any(|(s, _)| *s == at)
        };
        if !(exact || token_hit || suffix_hit) {
            continue;
        }
        let rank = if exact { 0u8 } else { 1 };
        let candidate = (
            priority,
            rank,
            KeywordMatch {
                keyword: word.clone(),
                priority,
                exact,
            },
        );
        match &best {
            Some((bp, br, _)) if (*bp, *br) <= (priority, rank) => {}
            _ => best = Some(candidate),
        }
    }
    best.map(|(_, _, m)| m)
}

// ---------------------------------------------------------------------------
// Date detection
// ---------------------------------------------------------------------------

/// A recognized date representation. Custom entries are strftime patterns
/// tried as both date and datetime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DateFormat {
    Iso8601Date,
    Iso8601DateTime,
    Custom(String),
}

impl DateFormat {
    pub fn parse_name(name: &str) -> DateFormat {
        match name {
            "iso8601-date" => DateFormat::Iso8601Date,
            "iso8601-datetime" => DateFormat::Iso8601DateTime,
            other => DateFormat::Custom(other.to_owned()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DateFormat::Iso8601Date => "iso8601-date".to_owned(),
            DateFormat::Iso8601DateTime => "iso8601-datetime".to_owned(),
            DateFormat::Custom(f) => f.clone(),
        }
    }

    fn matches(&self, s: &str) -> bool {
        match self {
            DateFormat::Iso8601Date => NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok(),
            DateFormat::Iso8601DateTime => {
                DateTime::parse_from_rfc3339(s).is_ok()
                    || NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").is_ok()
            }
            DateFormat::Custom(fmt) => {
                NaiveDate::parse_from_str(s, fmt).is_ok()
                    || NaiveDateTime::parse_from_str(s, fmt).is_ok()
            }
        }
    }
}

pub fn default_date_formats() -> Vec<DateFormat> {
    vec![
        DateFormat::Iso8601Date,
        DateFormat::Iso8601DateTime,
        DateFormat::Custom("%Y/%m/%d".to_owned()),
        DateFormat::Custom("%d.%m.%Y".to_owned()),
    ]
}

/// Plausibility window for integer timestamps, in epoch seconds. Integers are
/// accepted as either seconds or milliseconds inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpochWindow {
    pub start_secs: i64,
    pub end_secs: i64,
}

/// 1990-01-01T00:00:00Z.
pub const DEFAULT_EPOCH_START: i64 = 631_152_000;
/// 2100-01-01T00:00:00Z.
pub const DEFAULT_EPOCH_END: i64 = 4_102_444_800;

impl Default for EpochWindow {
    fn default() -> Self {
        EpochWindow {
            start_secs: DEFAULT_EPOCH_START,
            end_secs: DEFAULT_EPOCH_END,
        }
    }
}

impl EpochWindow {
    pub fn contains(&self, value: i64) -> bool {
        (self.start_secs..=self.end_secs).contains(&value)
            || (self.start_secs.saturating_mul(1000)..=self.end_secs.saturating_mul(1000))
                .contains(&value)
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Hyperparameters of the key-inference stage.
#[derive(Debug, Clone)]
pub struct KeyInferenceConfig {
    pub keywords: KeywordSet,
    pub hash: HashMatcher,
    pub date_formats: Vec<DateFormat>,
    pub epoch_window: EpochWindow,
    /// Extra field names treated like `name` (lowercase).
    pub name_synonyms: Vec<String>,
}

pub const DEFAULT_NAME_SYNONYMS: &[&str] = &["title", "label"];

impl Default for KeyInferenceConfig {
    fn default() -> Self {
        KeyInferenceConfig {
            keywords: KeywordSet::default(),
            hash: HashMatcher::default(),
            date_formats: default_date_formats(),
            epoch_window: EpochWindow::default(),
            name_synonyms: DEFAULT_NAME_SYNONYMS
                .iter()
                .map(|s| (*s).to_owned())
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Descriptors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyRole {
    Primary,
    Foreign,
    Name,
    Date,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdType {
    Simple,
    Composite,
    Many,
}

/// An inferred field role.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyDescriptor {
    pub path: FieldPath,
    pub role: KeyRole,
    pub id_type: IdType,
    pub matched_keyword: Option<String>,
    pub priority: Option<usize>,
}

/// Per-collection inference result.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollectionKeyProfile {
    pub collection_id: CollectionId,
    pub primary: Option<KeyDescriptor>,
    pub foreign: Vec<KeyDescriptor>,
    pub names: Vec<KeyDescriptor>,
    pub dates: Vec<KeyDescriptor>,
    /// When no keyword matched and the primary was picked among hash-valued
    /// fields, all candidate paths in field order (the first one is the chosen
    /// primary). Empty for keyword-backed primaries.
    pub fallback_candidates: Vec<FieldPath>,
}

impl CollectionKeyProfile {
    pub fn has_hash_fallback(&self) -> bool {
        !self.fallback_candidates.is_empty()
    }

    /// Every descriptor of the profile, primary first.
    pub fn descriptors(&self) -> impl Iterator<Item = &KeyDescriptor> {
        self.primary
            .iter()
            .chain(&self.foreign)
            .chain(&self.names)
            .chain(&self.dates)
    }

    /// Paths whose values form the collection's key set (primary + foreign).
    pub fn key_paths(&self) -> impl Iterator<Item = &KeyDescriptor> {
        self.primary.iter().chain(&self.foreign)
    }

    pub fn is_empty_profile(&self) -> bool {
        self.primary.is_none() && self.foreign.is_empty()
    }

    /// Re-roots every path under a field name; used when the profiled
    /// document was the payload of an envelope.
    pub fn with_paths_prefixed(mut self, field: &str) -> CollectionKeyProfile {
        let prefix = |d: &mut KeyDescriptor| d.path = d.path.prefixed(field);
        if let Some(primary) = self.primary.as_mut() {
            prefix(primary);
        }
        self.foreign.iter_mut().for_each(prefix);
        self.names.iter_mut().for_each(prefix);
        self.dates.iter_mut().for_each(prefix);
        for path in self.fallback_candidates.iter_mut() {
            *path = path.prefixed(field);
        }
        self
    }
}

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

/// True for hash-shaped strings (surrounding whitespace is ignored).
pub fn is_hash(value: &Value, cfg: &KeyInferenceConfig) -> bool {
    value.as_str().is_some_and(|s| cfg.hash.matches(s.trim()))
}

/// Composite key test: a two-element `[integer, text]` array.
pub fn key_is_composite(value: &Value) -> bool {
    value.as_array().is_some_and(composite_key_shape)
}

/// Multi-reference key test: a non-empty array of hash-shaped strings.
pub fn key_is_multi_ref(value: &Value, cfg: &KeyInferenceConfig) -> bool {
    value
        .as_array()
        .is_some_and(|elements| multi_ref_shape(elements, &cfg.hash))
}

/// True when the value can be read as a date: a string in one of the
/// configured formats, or an integer inside the epoch plausibility window.
pub fn is_date(value: &Value, cfg: &KeyInferenceConfig) -> bool {
    match value {
        Value::Str(s) => {
            let s = s.trim();
            !s.is_empty() && cfg.date_formats.iter().any(|f| f.matches(s))
        }
        Value::Int(i) => cfg.epoch_window.contains(*i),
        _ => false,
    }
}

fn classify_id_type(value: &Value, cfg: &KeyInferenceConfig) -> IdType {
    if key_is_composite(value) {
        IdType::Composite
    } else if key_is_multi_ref(value, cfg) {
        IdType::Many
    } else {
        IdType::Simple
    }
}

fn is_name_field(name: &str, cfg: &KeyInferenceConfig) -> bool {
    let lower = name.to_lowercase();
    lower == "name" || cfg.name_synonyms.contains(&lower)
}

// ---------------------------------------------------------------------------
// Traversal
// ---------------------------------------------------------------------------

/// Foreign/name/date descriptors found below the top level.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct EmbeddedLists {
    pub foreign: Vec<KeyDescriptor>,
    pub names: Vec<KeyDescriptor>,
    pub dates: Vec<KeyDescriptor>,
}

impl EmbeddedLists {
    fn merge(&mut self, other: EmbeddedLists) {
        self.foreign.extend(other.foreign);
        self.names.extend(other.names);
        self.dates.extend(other.dates);
    }
}

/// Classifies one embedded field.
///
/// Branch order: keyword/hash match, `name`, date, arrays (composite and
/// multi-reference forms become a single foreign descriptor, anything else
/// recurses element-wise), embedded objects. Array elements carry no field
/// name of their own, so only value-based checks apply to them.
pub fn process_embedded(
    path: FieldPath,
    field_name: Option<&str>,
    value: &Value,
    cfg: &KeyInferenceConfig,
) -> EmbeddedLists {
    let mut lists = EmbeddedLists::default();
    let matched = field_name.and_then(|n| keyword_match(n, &cfg.keywords));
    if matched.is_some() || is_hash(value, cfg) {
        lists.foreign.push(KeyDescriptor {
            path,
            role: KeyRole::Foreign,
            id_type: classify_id_type(value, cfg),
            matched_keyword: matched.as_ref().map(|m| m.keyword.clone()),
            priority: matched.as_ref().map(|m| m.priority),
        });
        return lists;
    }
    if field_name.is_some_and(|n| is_name_field(n, cfg)) {
        lists.names.push(KeyDescriptor {
            path,
            role: KeyRole::Name,
            id_type: IdType::Simple,
            matched_keyword: None,
            priority: None,
        });
        return lists;
    }
    if is_date(value, cfg) {
        lists.dates.push(KeyDescriptor {
            path,
            role: KeyRole::Date,
            id_type: IdType::Simple,
            matched_keyword: None,
            priority: None,
        });
        return lists;
    }
    match value {
        Value::Array(elements) => {
            if key_is_composite(value) || key_is_multi_ref(value, cfg) {
                lists.foreign.push(KeyDescriptor {
                    id_type: classify_id_type(value, cfg),
                    path,
                    role: KeyRole::Foreign,
                    matched_keyword: None,
                    priority: None,
                });
            } else {
                for (i, element) in elements.iter().enumerate() {
                    lists.merge(process_embedded(path.element(i), None, element, cfg));
                }
            }
        }
        Value::Object(fields) => {
            let scan = scan_fields(Some(&path), fields, false, cfg);
            lists.merge(scan.lists);
        }
        _ => {}
    }
    lists
}

struct Candidate {
    path: FieldPath,
    id_type: IdType,
    keyword: Option<KeywordMatch>,
    order: usize,
}

impl Candidate {
    /// Hash-only candidates rank below every keyword match; at equal keyword
    /// priority exact matches outrank containment; field order breaks ties.
    fn rank(&self) -> (usize, u8, usize) {
        match &self.keyword {
            Some(m) => (m.priority, u8::from(!m.exact), self.order),
            None => (usize::MAX, 2, self.order),
        }
    }
}

struct FieldScan {
    candidates: Vec<Candidate>,
    lists: EmbeddedLists,
}

fn scan_fields(
    prefix: Option<&FieldPath>,
    fields: &[(String, Value)],
    find_primary: bool,
    cfg: &KeyInferenceConfig,
) -> FieldScan {
    let mut candidates = Vec::new();
    let mut lists = EmbeddedLists::default();
    for (order, (name, value)) in fields.iter().enumerate() {
        let path = match prefix {
            Some(p) => p.child(name),
            None => FieldPath::root(name),
        };
        if find_primary {
            let keyword = keyword_match(name, &cfg.keywords);
            if keyword.is_some() || is_hash(value, cfg) {
                candidates.push(Candidate {
                    path,
                    id_type: classify_id_type(value, cfg),
                    keyword,
                    order,
                });
                continue;
            }
        }
        lists.merge(process_embedded(path, Some(name), value, cfg));
    }
    FieldScan { candidates, lists }
}

/// Infers the key profile of a schema document.
///
/// Top-level fields matching a keyword or holding a hash value become primary
/// candidates (when `find_primary` is set); everything else is classified by
/// [`process_embedded`]. The best candidate becomes the primary, losing
/// candidates are demoted to foreign keys, and, if no candidate exists, the
/// best keyword-matched foreign descriptor is promoted instead. The chosen
/// value's shape decides between simple, composite and multi-reference keys.
pub fn find_keys(
    collection_id: CollectionId,
    document: &Document,
    find_primary: bool,
    cfg: &KeyInferenceConfig,
) -> CollectionKeyProfile {
    let scan = scan_fields(None, document.fields(), find_primary, cfg);
    let EmbeddedLists {
        mut foreign,
        names,
        dates,
    } = scan.lists;

    let mut primary = None;
    let mut fallback_candidates = Vec::new();
    if find_primary && !scan.candidates.is_empty() {
        let mut ordered: Vec<&Candidate> = scan.candidates.iter().collect();
        ordered.sort_by_key(|c| c.rank());
        let winner = ordered[0];
        if winner.keyword.is_none() {
            // No keyword anywhere: record every hash-valued candidate so the
            // choice is visibly low-confidence downstream.
            fallback_candidates = scan.candidates.iter().map(|c| c.path.clone()).collect();
        }
        primary = Some(KeyDescriptor {
            path: winner.path.clone(),
            role: KeyRole::Primary,
            id_type: winner.id_type,
            matched_keyword: winner.keyword.as_ref().map(|m| m.keyword.clone()),
            priority: winner.keyword.as_ref().map(|m| m.priority),
        });
        for candidate in &scan.candidates {
            if candidate.path == winner.path {
                continue;
            }
            foreign.push(KeyDescriptor {
                path: candidate.path.clone(),
                role: KeyRole::Foreign,
                id_type: candidate.id_type,
                matched_keyword: candidate.keyword.as_ref().map(|m| m.keyword.clone()),
                priority: candidate.keyword.as_ref().map(|m| m.priority),
            });
        }
    } else if find_primary {
        let promoted = foreign
            .iter()
            .enumerate()
            .filter(|(_, d)| d.matched_keyword.is_some())
            .min_by_key(|(i, d)| (d.priority.unwrap_or(usize::MAX), *i))
            .map(|(i, _)| i);
        if let Some(index) = promoted {
            let mut descriptor = foreign.remove(index);
            descriptor.role = KeyRole::Primary;
            primary = Some(descriptor);
        }
    }

    CollectionKeyProfile {
        collection_id,
        primary,
        foreign,
        names,
        dates,
        fallback_candidates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::parse_document;
    use std::collections::BTreeSet;

    fn cfg() -> KeyInferenceConfig {
        KeyInferenceConfig::default()
    }

    fn doc(text: &str) -> Document {
        parse_document(text).unwrap()
    }

    fn profile(text: &str) -> CollectionKeyProfile {
        find_keys(CollectionId(0), &doc(text), true, &cfg())
    }

    const HASH_A: &str = "5f7a09de6f6f4d1c8ca390e0";
    const HASH_B: &str = "5f7a09dd7b6f4d1c8ca290f2";
    const HASH_C: &str = "5f7a05dd1b6f4d1c8ca390ec";

    #[test]
    fn hash_detection() {
        assert!(is_hash(&Value::Str(HASH_A.into()), &cfg()));
        assert!(!is_hash(&Value::Str("hello".into()), &cfg()));
        assert!(!is_hash(&Value::Int(42), &cfg()));
        // MD5 / SHA-1 / SHA-256 lengths.
        for len in [32usize, 40, 64] {
            assert!(is_hash(&Value::Str("a".repeat(len)), &cfg()));
        }
        assert!(!is_hash(&Value::Str("a".repeat(25)), &cfg()));
    }

    #[test]
    fn keyword_priority_and_tokenization() {
        let words = KeywordSet::default();
        let m = keyword_match("user_id", &words).unwrap();
        assert_eq!((m.keyword.as_str(), m.priority), ("_id", 0));

        assert!(keyword_match("color", &words).is_none());
        assert!(keyword_match("video", &words).is_none());

        let m = keyword_match("UID", &KeywordSet::new(vec!["id".into(), "uid".into()]).unwrap())
            .unwrap();
        assert_eq!((m.keyword.as_str(), m.priority, m.exact), ("uid", 1, true));

        // Camel-case token boundary.
        let m = keyword_match("accountId", &words).unwrap();
        assert_eq!(m.keyword, "id");
        assert!(keyword_match("guidance", &words).is_none());
    }

    #[test]
    fn composite_key_cases() {
        let array = |items: Vec<Value>| Value::Array(items);
        assert!(key_is_composite(&array(vec![
            Value::Int(815),
            Value::Str("John Smith".into())
        ])));
        assert!(!key_is_composite(&array(vec![
            Value::Int(815),
            Value::Int(23)
        ])));
        assert!(!key_is_composite(&array(vec![
            Value::Str("John".into()),
            Value::Int(815)
        ])));
        assert!(!key_is_composite(&array(vec![
            Value::Int(1),
            Value::Array(vec![])
        ])));
        assert!(!key_is_composite(&Value::Str("x".into())));
    }

    #[test]
    fn multi_ref_key_cases() {
        let hashes = Value::Array(vec![
            Value::Str(HASH_A.into()),
            Value::Str(HASH_B.into()),
            Value::Str(HASH_C.into()),
        ]);
        assert!(key_is_multi_ref(&hashes, &cfg()));
        assert!(!key_is_multi_ref(&Value::Array(vec![]), &cfg()));
        assert!(!key_is_multi_ref(
            &Value::Array(vec![Value::Str(HASH_A.into()), Value::Int(7)]),
            &cfg()
        ));
    }

    #[test]
    fn composite_and_multi_ref_are_mutually_exclusive() {
        // Composite needs an integer first element; multi-ref needs all-hash
        // strings. No array can satisfy both.
        let samples = [
            Value::Array(vec![Value::Int(1), Value::Str("x".into())]),
            Value::Array(vec![Value::Str(HASH_A.into()), Value::Str(HASH_B.into())]),
            Value::Array(vec![Value::Str(HASH_A.into())]),
            Value::Array(vec![Value::Int(1), Value::Str(HASH_A.into())]),
        ];
        for v in &samples {
            assert!(
                !(key_is_composite(v) && key_is_multi_ref(v, &cfg())),
                "{v:?}"
            );
        }
    }

    #[test]
    fn date_detection() {
        assert!(is_date(&Value::Str("2021-06-01T12:00:00Z".into()), &cfg()));
        assert!(is_date(&Value::Str("2021-06-01".into()), &cfg()));
        assert!(is_date(&Value::Str("2021/06/01".into()), &cfg()));
        assert!(is_date(&Value::Str("01.06.2021".into()), &cfg()));
        assert!(!is_date(&Value::Str("banana".into()), &cfg()));
        // Epoch seconds and milliseconds for dates in 2021.
        assert!(is_date(&Value::Int(1_622_548_800), &cfg()));
        assert!(is_date(&Value::Int(1_622_548_800_000), &cfg()));
        // Outside the plausibility window.
        assert!(!is_date(&Value::Int(1_000), &cfg()));
        assert!(!is_date(&Value::Int(i64::MAX), &cfg()));
        assert!(!is_date(&Value::Float(1_622_548_800.0), &cfg()));
    }

    #[test]
    fn embedded_multi_ref_and_names() {
        let value = Value::Array(vec![Value::Str(HASH_A.into()), Value::Str(HASH_B.into())]);
        let lists = process_embedded(FieldPath::root("refs"), Some("refs"), &value, &cfg());
        assert_eq!(lists.foreign.len(), 1);
        assert_eq!(lists.foreign[0].id_type, IdType::Many);
        assert_eq!(lists.foreign[0].path.to_string(), "refs");

        let lists = process_embedded(
            FieldPath::root("name"),
            Some("name"),
            &Value::Str("ACME".into()),
            &cfg(),
        );
        assert_eq!(lists.names.len(), 1);
        assert!(lists.foreign.is_empty());
    }

    #[test]
    fn embedded_object_recursion_finds_dates() {
        let value = Value::Object(vec![
            ("created".into(), Value::Str("2020-01-01".into())),
            ("note".into(), Value::Str("x".into())),
        ]);
        let lists = process_embedded(FieldPath::root("meta"), Some("meta"), &value, &cfg());
        assert_eq!(lists.dates.len(), 1);
        assert_eq!(lists.dates[0].path.to_string(), "meta.created");
        assert!(lists.foreign.is_empty() && lists.names.is_empty());
    }

    #[test]
    fn find_keys_full_document() {
        let p = profile(&format!(
            r#"{{"_id":"{HASH_A}","user_id":7,"name":"Bob","ts":"2021-01-01"}}"#
        ));
        let primary = p.primary.as_ref().unwrap();
        assert_eq!(primary.path.to_string(), "_id");
        assert_eq!(primary.id_type, IdType::Simple);
        assert_eq!(primary.matched_keyword.as_deref(), Some("_id"));
        assert_eq!(p.foreign.len(), 1);
        assert_eq!(p.foreign[0].path.to_string(), "user_id");
        assert_eq!(p.names.len(), 1);
        assert_eq!(p.names[0].path.to_string(), "name");
        assert_eq!(p.dates.len(), 1);
        assert_eq!(p.dates[0].path.to_string(), "ts");
        assert!(!p.has_hash_fallback());
    }

    #[test]
    fn find_keys_nothing_matches() {
        let p = profile(r#"{"payload":{"note":"x"}}"#);
        assert!(p.primary.is_none());
        assert!(p.foreign.is_empty() && p.names.is_empty() && p.dates.is_empty());
    }

    #[test]
    fn find_keys_composite_primary() {
        let p = profile(r#"{"key":[815,"John Smith"]}"#);
        let primary = p.primary.as_ref().unwrap();
        assert_eq!(primary.id_type, IdType::Composite);
        assert_eq!(primary.matched_keyword.as_deref(), Some("key"));
    }

    #[test]
    fn find_keys_multi_ref_primary() {
        let p = profile(&format!(r#"{{"_id":["{HASH_A}","{HASH_B}"]}}"#));
        assert_eq!(p.primary.as_ref().unwrap().id_type, IdType::Many);
    }

    #[test]
    fn no_primary_when_disabled() {
        let document = doc(&format!(r#"{{"_id":"{HASH_A}","user_id":7}}"#));
        let p = find_keys(CollectionId(0), &document, false, &cfg());
        assert!(p.primary.is_none());
        // Both fields still classified as foreign keys.
        assert_eq!(p.foreign.len(), 2);
    }

    #[test]
    fn hash_fallback_picks_first_in_field_order() {
        let p = profile(&format!(r#"{{"token":"{HASH_A}","other":"{HASH_B}"}}"#));
        let primary = p.primary.as_ref().unwrap();
        assert_eq!(primary.path.to_string(), "token");
        assert!(primary.matched_keyword.is_none());
        assert!(p.has_hash_fallback());
        assert_eq!(p.fallback_candidates.len(), 2);
        // The loser is demoted to the foreign list.
        assert_eq!(p.foreign.len(), 1);
        assert_eq!(p.foreign[0].path.to_string(), "other");
    }

    #[test]
    fn promotion_from_foreign_list() {
        // No top-level candidate; a nested keyword match is promoted.
        let p = profile(r#"{"payload":{"user_id":7,"note":"x"},"ts":"2020-01-01"}"#);
        let primary = p.primary.as_ref().unwrap();
        assert_eq!(primary.path.to_string(), "payload.user_id");
        assert_eq!(primary.role, KeyRole::Primary);
        assert!(!p.foreign.iter().any(|d| d.path == primary.path));
    }

    #[test]
    fn exact_match_beats_containment_at_equal_priority() {
        let p = profile(&format!(r#"{{"user_id":7,"_id":"{HASH_A}"}}"#));
        // `_id` matches exactly, `user_id` only by containment; both are
        // priority 0.
        assert_eq!(p.primary.as_ref().unwrap().path.to_string(), "_id");
    }

    #[test]
    fn paths_are_disjoint_across_lists() {
        let p = profile(&format!(
            r#"{{"_id":"{HASH_A}","a_id":1,"name":"n","meta":{{"created":"2020-01-01","ref":"{HASH_B}"}},"ts":1622548800}}"#
        ));
        let mut seen = BTreeSet::new();
        for d in p.descriptors() {
            assert!(seen.insert(d.path.clone()), "duplicate path {}", d.path);
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let text = format!(
            r#"{{"_id":"{HASH_A}","user_id":7,"tags":[{{"tag_id":3}},{{"tag_id":4}}],"name":"x"}}"#
        );
        assert_eq!(profile(&text), profile(&text));
    }

    #[test]
    fn keyword_named_array_field_stays_simple() {
        // A keyword-named array that is neither composite nor multi-reference
        // keeps the simple id type (its values canonicalize to nothing).
        let p = profile(&format!(r#"{{"_id":"{HASH_A}","item_id":[1,2,3]}}"#));
        let ids = p
            .foreign
            .iter()
            .find(|d| d.path.to_string() == "item_id")
            .unwrap();
        assert_eq!(ids.id_type, IdType::Simple);
        // Plural token does not match the singular keyword.
        assert!(keyword_match("ids", &KeywordSet::default()).is_none());
    }

    #[test]
    fn array_elements_recurse_without_a_name() {
        let p = profile(&format!(
            r#"{{"_id":"{HASH_A}","items":[{{"item_id":1}},"{HASH_B}",7]}}"#
        ));
        let paths: BTreeSet<String> = p.foreign.iter().map(|d| d.path.to_string()).collect();
        assert!(paths.contains("items[0].item_id"));
        // Bare hash element is picked up by the value test.
        assert!(paths.contains("items[1]"));
        // Plain integer element matches nothing.
        assert!(!paths.contains("items[2]"));
    }
}
