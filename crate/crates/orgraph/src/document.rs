//! Recursive document value model: JSON-like values, documents, collections,
//! field paths and canonical key values.
//!
//! Everything here is immutable after construction and shared read-only by the
//! downstream stages.

use std::fmt;

use regex::Regex;
use serde::de::{self, DeserializeSeed, MapAccess, SeqAccess, Visitor};
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::DocumentError;

/// A JSON-like value. Object fields keep insertion order so that schema scans
/// and keyword-priority passes are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Value>),
    Object(Vec<(String, Value)>),
}

impl Value {
    pub fn is_scalar(&self) -> bool {
        !matches!(self, Value::Array(_) | Value::Object(_))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Value]> {
        match self {
            Value::Array(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_object(&self) -> Option<&[(String, Value)]> {
        match self {
            Value::Object(fields) => Some(fields),
            _ => None,
        }
    }

    /// Field lookup on objects; `None` for every other variant.
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.as_object()
            .and_then(|fields| fields.iter().find(|(k, _)| k == name).map(|(_, v)| v))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        }
    }

    /// Builds an object, resolving duplicate field names last-wins.
    pub fn object(fields: Vec<(String, Value)>) -> Value {
        let mut out: Vec<(String, Value)> = Vec::with_capacity(fields.len());
        for (name, value) in fields {
            if let Some(slot) = out.iter_mut().find(|(k, _)| *k == name) {
                slot.1 = value;
            } else {
                out.push((name, value));
            }
        }
        Value::Object(out)
    }
}

/// Depth of the value tree: scalars are 0, empty containers are 1.
pub fn nesting_depth(value: &Value) -> usize {
    match value {
        Value::Array(items) => 1 + items.iter().map(nesting_depth).max().unwrap_or(0),
        Value::Object(fields) => {
            1 + fields
                .iter()
                .map(|(_, v)| nesting_depth(v))
                .max()
                .unwrap_or(0)
        }
        _ => 0,
    }
}

/// One record of a collection. The root is always an object (possibly empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    root: Value,
    pub ordinal: usize,
}

impl Document {
    /// Wraps an object value. Returns `NotAnObject` for any other variant.
    pub fn new(root: Value, ordinal: usize) -> Result<Document, DocumentError> {
        match root {
            Value::Object(_) => Ok(Document { root, ordinal }),
            other => Err(DocumentError::NotAnObject {
                found: other.type_name(),
            }),
        }
    }

    pub fn root(&self) -> &Value {
        &self.root
    }

    pub fn fields(&self) -> &[(String, Value)] {
        self.root.as_object().expect("document root is an object")
    }

    pub fn is_empty(&self) -> bool {
        self.fields().is_empty()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.root).expect("document serialization cannot fail")
    }
}

/// Identifier of a collection within one corpus run; assigned densely from 0
/// in (subsystem, name) order so every run is reproducible.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct CollectionId(pub u32);

impl CollectionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CollectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A named set of documents from one source subsystem.
#[derive(Debug, Clone)]
pub struct Collection {
    pub id: CollectionId,
    pub name: String,
    pub subsystem: String,
    pub documents: Vec<Document>,
}

/// Returns the first document whose root object has at least one field.
pub fn schema_document(collection: &Collection) -> Option<&Document> {
    first_non_empty(&collection.documents, collection.documents.len())
}

/// Scan-limited variant of [`schema_document`].
pub fn first_non_empty(documents: &[Document], limit: usize) -> Option<&Document> {
    documents.iter().take(limit).find(|d| !d.is_empty())
}

// ---------------------------------------------------------------------------
// Field paths
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathSegment {
    Field(String),
    Index(usize),
}

/// Location of a field inside a document, e.g. `meta.tags[0].id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FieldPath(Vec<PathSegment>);

impl FieldPath {
    pub fn root(name: impl Into<String>) -> FieldPath {
        FieldPath(vec![PathSegment::Field(name.into())])
    }

    pub fn child(&self, name: impl Into<String>) -> FieldPath {
        let mut segments = self.0.clone();
        segments.push(PathSegment::Field(name.into()));
        FieldPath(segments)
    }

    pub fn element(&self, index: usize) -> FieldPath {
        let mut segments = self.0.clone();
        segments.push(PathSegment::Index(index));
        FieldPath(segments)
    }

    /// Prefixes every segment with a field name (used when documents carry an
    /// envelope object holding the payload).
    pub fn prefixed(&self, name: &str) -> FieldPath {
        let mut segments = Vec::with_capacity(self.0.len() + 1);
        segments.push(PathSegment::Field(name.to_owned()));
        segments.extend(self.0.iter().cloned());
        FieldPath(segments)
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.0
    }

    /// Name of the field this path points at, if the last segment is a field.
    pub fn last_field_name(&self) -> Option<&str> {
        match self.0.last() {
            Some(PathSegment::Field(name)) => Some(name),
            _ => None,
        }
    }

    /// Walks the path down a value. Missing fields and out-of-range indexes
    /// resolve to `None`.
    pub fn resolve<'v>(&self, root: &'v Value) -> Option<&'v Value> {
        let mut current = root;
        for segment in &self.0 {
            current = match segment {
                PathSegment::Field(name) => current.get(name)?,
                PathSegment::Index(i) => current.as_array()?.get(*i)?,
            };
        }
        Some(current)
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, segment) in self.0.iter().enumerate() {
            match segment {
                PathSegment::Field(name) => {
                    if i > 0 {
                        write!(f, ".")?;
                    }
                    write!(f, "{name}")?;
                }
                PathSegment::Index(idx) => write!(f, "[{idx}]")?,
            }
        }
        Ok(())
    }
}

impl Serialize for FieldPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

// ---------------------------------------------------------------------------
// Key values
// ---------------------------------------------------------------------------

/// Canonical key value used for set intersection. Integers and strings never
/// compare equal (no cross-type coercion), so `815 != "815"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum KeyValue {
    Int(i64),
    Str(String),
    Bool(bool),
    /// Two-element `[integer, text]` identifier; element order is preserved.
    Composite(i64, String),
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyValue::Int(i) => write!(f, "{i}"),
            KeyValue::Str(s) => write!(f, "{s:?}"),
            KeyValue::Bool(b) => write!(f, "{b}"),
            KeyValue::Composite(i, s) => write!(f, "[{i}, {s:?}]"),
        }
    }
}

/// Recognizer for hash-shaped identifier strings.
///
/// The default accepts case-insensitive hexadecimal strings of exactly 24, 32,
/// 40 or 64 characters (object-id, MD5, SHA-1, SHA-256 shapes). A custom
/// pattern replaces the length rule entirely and is matched against the whole
/// string.
#[derive(Debug, Clone)]
pub struct HashMatcher {
    lengths: Vec<usize>,
    custom: Option<Regex>,
}

pub const DEFAULT_HASH_LENGTHS: &[usize] = &[24, 32, 40, 64];

impl Default for HashMatcher {
    fn default() -> Self {
        HashMatcher {
            lengths: DEFAULT_HASH_LENGTHS.to_vec(),
            custom: None,
        }
    }
}

impl HashMatcher {
    pub fn with_lengths(lengths: Vec<usize>) -> HashMatcher {
        HashMatcher {
            lengths,
            custom: None,
        }
    }

    /// Compiles a custom pattern; the pattern is anchored to the full string.
    pub fn with_pattern(pattern: &str) -> Result<HashMatcher, regex::Error> {
        let anchored = format!("^(?:{pattern})$");
        Ok(HashMatcher {
            lengths: Vec::new(),
            custom: Some(Regex::new(&anchored)?),
        })
    }

    pub fn matches(&self, s: &str) -> bool {
        if let Some(re) = &self.custom {
            return re.is_match(s);
        }
        self.lengths.contains(&s.chars().count()) && s.chars().all(|c| c.is_ascii_hexdigit())
    }
}

/// True for two-element arrays shaped `[integer, text]` with no nested
/// containers.
pub fn composite_key_shape(elements: &[Value]) -> bool {
    elements.len() == 2
        && elements.iter().all(Value::is_scalar)
        && matches!(elements[0], Value::Int(_))
        && elements.iter().any(|e| matches!(e, Value::Str(_)))
}

/// True for non-empty arrays whose every element is a hash-shaped string.
pub fn multi_ref_shape(elements: &[Value], hash: &HashMatcher) -> bool {
    !elements.is_empty()
        && elements
            .iter()
            .all(|e| e.as_str().is_some_and(|s| hash.matches(s.trim())))
}

fn canonical_text(s: &str, hash: &HashMatcher) -> String {
    let trimmed = s.trim();
    if hash.matches(trimmed) {
        trimmed.to_lowercase()
    } else {
        trimmed.to_owned()
    }
}

/// Maps a value to its canonical key form.
///
/// Strings are trimmed and, when hash-shaped, lowercased. Two-element
/// `[integer, text]` arrays become composite keys. Floats, nulls and
/// containers of any other shape are not keys.
pub fn canonicalize_key_value(value: &Value, hash: &HashMatcher) -> Option<KeyValue> {
    match value {
        Value::Int(i) => Some(KeyValue::Int(*i)),
        Value::Bool(b) => Some(KeyValue::Bool(*b)),
        Value::Str(s) => Some(KeyValue::Str(canonical_text(s, hash))),
        Value::Array(elements) if composite_key_shape(elements) => {
            let int = elements[0].as_int().expect("shape guarantees an integer");
            let text = elements[1].as_str().expect("shape guarantees a string");
            Some(KeyValue::Composite(int, canonical_text(text, hash)))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Anomalies observed while parsing documents; surfaced through the statistics
/// report rather than failing the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseWarnings {
    /// Duplicate field names inside one object; the last occurrence wins.
    pub duplicate_fields: u64,
    /// Empty field names; the field is dropped.
    pub empty_field_names: u64,
}

impl ParseWarnings {
    pub fn merge(&mut self, other: ParseWarnings) {
        self.duplicate_fields += other.duplicate_fields;
        self.empty_field_names += other.empty_field_names;
    }
}

struct ValueSeed<'a> {
    warnings: &'a mut ParseWarnings,
}

impl<'de> DeserializeSeed<'de> for ValueSeed<'_> {
    type Value = Value;

    fn deserialize<D>(self, deserializer: D) -> Result<Value, D::Error>
    where
        D: de::Deserializer<'de>,
    {
        deserializer.deserialize_any(ValueVisitor {
            warnings: self.warnings,
        })
    }
}

struct ValueVisitor<'a> {
    warnings: &'a mut ParseWarnings,
}

impl<'de> Visitor<'de> for ValueVisitor<'_> {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a JSON value")
    }

    fn visit_unit<E>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_bool<E>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Bool(v))
    }

    fn visit_i64<E>(self, v: i64) -> Result<Value, E> {
        Ok(Value::Int(v))
    }

    fn visit_u64<E>(self, v: u64) -> Result<Value, E> {
        // Magnitudes beyond i64 degrade to floats.
        Ok(i64::try_from(v)
            .map(Value::Int)
            .unwrap_or(Value::Float(v as f64)))
    }

    fn visit_f64<E>(self, v: f64) -> Result<Value, E> {
        Ok(Value::Float(v))
    }

    fn visit_str<E>(self, v: &str) -> Result<Value, E> {
        Ok(Value::Str(v.to_owned()))
    }

    fn visit_string<E>(self, v: String) -> Result<Value, E> {
        Ok(Value::Str(v))
    }

    fn visit_seq<A>(self, mut seq: A) -> Result<Value, A::Error>
    where
        A: SeqAccess<'de>,
    {
        let mut items = Vec::with_capacity(seq.size_hint().unwrap_or(0));
        while let Some(item) = seq.next_element_seed(ValueSeed {
            warnings: self.warnings,
        })? {
            items.push(item);
        }
        Ok(Value::Array(items))
    }

    fn visit_map<A>(self, mut map: A) -> Result<Value, A::Error>
    where
        A: MapAccess<'de>,
    {
        let mut fields: Vec<(String, Value)> = Vec::with_capacity(map.size_hint().unwrap_or(0));
        while let Some(name) = map.next_key::<String>()? {
            let value = map.next_value_seed(ValueSeed {
                warnings: self.warnings,
            })?;
            if name.is_empty() {
                self.warnings.empty_field_names += 1;
                continue;
            }
            if let Some(slot) = fields.iter_mut().find(|(k, _)| *k == name) {
                self.warnings.duplicate_fields += 1;
                slot.1 = value;
            } else {
                fields.push((name, value));
            }
        }
        Ok(Value::Object(fields))
    }
}

/// Parses one JSON text into a document. The top-level value must be an
/// object; numbers without fraction or exponent become integers.
pub fn parse_document(text: &str) -> Result<Document, DocumentError> {
    parse_document_with_warnings(text).map(|(doc, _)| doc)
}

/// Like [`parse_document`] but also reports parse anomalies.
pub fn parse_document_with_warnings(
    text: &str,
) -> Result<(Document, ParseWarnings), DocumentError> {
    let mut warnings = ParseWarnings::default();
    let mut deserializer = serde_json::Deserializer::from_str(text);
    let value = ValueSeed {
        warnings: &mut warnings,
    }
    .deserialize(&mut deserializer)
    .map_err(|e| DocumentError::Syntax(e.to_string()))?;
    deserializer
        .end()
        .map_err(|e| DocumentError::Syntax(e.to_string()))?;
    let document = Document::new(value, 0)?;
    Ok((document, warnings))
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_unit(),
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Int(i) => serializer.serialize_i64(*i),
            Value::Float(f) => serializer.serialize_f64(*f),
            Value::Str(s) => serializer.serialize_str(s),
            Value::Array(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Value::Object(fields) => {
                let mut map = serializer.serialize_map(Some(fields.len()))?;
                for (name, value) in fields {
                    map.serialize_entry(name, value)?;
                }
                map.end()
            }
        }
    }
}
