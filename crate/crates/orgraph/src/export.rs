//! Result handlers: graph exports (JSON, GraphML, DOT, CSV) behind a format
//! registry, field-ownership mapping, statistics artifacts and the run report.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::entity::EntityGraph;
use crate::error::ExportError;
use crate::linking::{CollectionGraph, CoveragePoint};
use crate::pipeline::RunResult;
use crate::stats::{
    average_degree, modularity, modularity_by_subsystem, CorpusStats,
};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Graphml,
    Dot,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Graphml => "graphml",
            ExportFormat::Dot => "dot",
            ExportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<ExportFormat, ExportError> {
        match s.to_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "graphml" => Ok(ExportFormat::Graphml),
            "dot" => Ok(ExportFormat::Dot),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(ExportError::UnknownFormat(other.to_owned())),
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical graph model
// ---------------------------------------------------------------------------

/// Stable, versioned graph schema shared by collection and entity graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub version: u32,
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
    pub meta: ExportMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: u32,
    pub name: String,
    pub subsystem: String,
    /// Member collections; a collection-graph node lists itself.
    pub collections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEdge {
    pub u: u32,
    pub v: u32,
    pub n: u64,
    pub jaccard: f64,
    pub overlap: f64,
    pub pmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMeta {
    pub params: serde_json::Value,
    pub stats_summary: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub average_degree: f64,
    pub density: f64,
    pub modularity: Option<f64>,
}

fn density(nodes: usize, edges: usize) -> f64 {
    if nodes < 2 {
        return 0.0;
    }
    2.0 * edges as f64 / (nodes as f64 * (nodes as f64 - 1.0))
}

impl GraphExport {
    pub fn from_collection_graph(graph: &CollectionGraph, params: serde_json::Value) -> Self {
        let nodes = graph
            .nodes
            .iter()
            .map(|n| ExportNode {
                id: n.id.0,
                name: n.name.clone(),
                subsystem: n.subsystem.clone(),
                collections: vec![n.name.clone()],
            })
            .collect();
        let edges = graph
            .edges
            .iter()
            .map(|e| ExportEdge {
                u: e.u.0,
                v: e.v.0,
                n: e.n,
                jaccard: e.jaccard,
                overlap: e.overlap,
                pmi: e.pmi,
            })
            .collect();
        GraphExport {
            version: GRAPH_SCHEMA_VERSION,
            nodes,
            edges,
            meta: ExportMeta {
                params,
                stats_summary: StatsSummary {
                    num_nodes: graph.nodes.len(),
                    num_edges: graph.edges.len(),
                    average_degree: average_degree(graph.nodes.len(), graph.edges.len()),
                    density: density(graph.nodes.len(), graph.edges.len()),
                    modularity: modularity_by_subsystem(graph).ok(),
                },
            },
        }
    }

    pub fn from_entity_graph(graph: &EntityGraph, params: serde_json::Value) -> Self {
        let nodes: Vec<ExportNode> = graph
            .entities
            .iter()
            .map(|e| ExportNode {
                id: e.id,
                name: e.name.clone(),
                subsystem: e.subsystem.clone(),
                collections: e.member_names.clone(),
            })
            .collect();
        let edges: Vec<ExportEdge> = graph
            .edges
            .iter()
            .map(|e| ExportEdge {
                u: e.u,
                v: e.v,
                n: e.n,
                jaccard: e.jaccard,
                overlap: e.overlap,
                pmi: e.pmi,
            })
            .collect();

        let mut groups: Vec<&str> = graph
            .entities
            .iter()
            .map(|e| e.subsystem.as_str())
            .collect();
        groups.sort_unstable();
        groups.dedup();
        let group_of: Vec<usize> = graph
            .entities
            .iter()
            .map(|e| groups.binary_search(&e.subsystem.as_str()).unwrap())
            .collect();
        let edge_pairs: Vec<(usize, usize)> = graph
            .edges
            .iter()
            .map(|e| (e.u as usize, e.v as usize))
            .collect();
        let q = modularity(graph.entities.len(), &edge_pairs, &group_of).ok();

        GraphExport {
            version: GRAPH_SCHEMA_VERSION,
            nodes,
            edges,
            meta: ExportMeta {
                params,
                stats_summary: StatsSummary {
                    num_nodes: graph.entities.len(),
                    num_edges: graph.edges.len(),
                    average_degree: average_degree(graph.entities.len(), graph.edges.len()),
                    density: density(graph.entities.len(), graph.edges.len()),
                    modularity: q,
                },
            },
        }
    }

    pub fn load_json(path: &Path) -> Result<GraphExport, ExportError> {
        let text = fs::read_to_string(path).map_err(|source| ExportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ExportError::Io {
            path: path.display().to_string(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })
    }
}

// ---------------------------------------------------------------------------
// Exporters
// ---------------------------------------------------------------------------

pub trait GraphExporter: Send + Sync {
    fn format(&self) -> ExportFormat;
    fn write(&self, graph: &GraphExport, out: &mut dyn Write) -> io::Result<()>;
}

struct JsonExporter;

impl GraphExporter for JsonExporter {
    fn format(&self) -> ExportFormat {
        ExportFormat::Json
    }

    fn write(&self, graph: &GraphExport, out: &mut dyn Write) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut *out, graph)?;
        out.write_all(b"\n")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct GraphmlExporter;

impl GraphExporter for GraphmlExporter {
    fn format(&self) -> ExportFormat {
        ExportFormat::Graphml
    }

    fn write(&self, graph: &GraphExport, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
        writeln!(
            out,
            r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#
        )?;
        // Attribute keys are declared once, in the header.
        for (id, target, name, ty) in [
            ("d0", "node", "name", "string"),
            ("d1", "node", "subsystem", "string"),
            ("d2", "node", "collections", "string"),
            ("d3", "edge", "n", "long"),
            ("d4", "edge", "jaccard", "double"),
            ("d5", "edge", "overlap", "double"),
            ("d6", "edge", "pmi", "double"),
        ] {
            writeln!(
                out,
                r#"  <key id="{id}" for="{target}" attr.name="{name}" attr.type="{ty}"/>"#
            )?;
        }
        writeln!(out, r#"  <graph id="G" edgedefault="undirected">"#)?;
        for node in &graph.nodes {
            writeln!(out, r#"    <node id="n{}">"#, node.id)?;
            writeln!(
                out,
                r#"      <data key="d0">{}</data>"#,
                xml_escape(&node.name)
            )?;
            writeln!(
                out,
                r#"      <data key="d1">{}</data>"#,
                xml_escape(&node.subsystem)
            )?;
            writeln!(
                out,
                r#"      <data key="d2">{}</data>"#,
                xml_escape(&node.collections.join("|"))
            )?;
            writeln!(out, r#"    </node>"#)?;
        }
        for (i, edge) in graph.edges.iter().enumerate() {
            writeln!(
                out,
                r#"    <edge id="e{i}" source="n{}" target="n{}">"#,
                edge.u, edge.v
            )?;
            writeln!(out, r#"      <data key="d3">{}</data>"#, edge.n)?;
            writeln!(out, r#"      <data key="d4">{}</data>"#, edge.jaccard)?;
            writeln!(out, r#"      <data key="d5">{}</data>"#, edge.overlap)?;
            writeln!(out, r#"      <data key="d6">{}</data>"#, edge.pmi)?;
            writeln!(out, r#"    </edge>"#)?;
        }
        writeln!(out, r#"  </graph>"#)?;
        writeln!(out, r#"</graphml>"#)
    }
}

struct DotExporter;

impl GraphExporter for DotExporter {
    fn format(&self) -> ExportFormat {
        ExportFormat::Dot
    }

    fn write(&self, graph: &GraphExport, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "graph collections {{")?;
        for node in &graph.nodes {
            writeln!(
                out,
                r#"  n{} [label="{}" subsystem="{}"];"#,
                node.id,
                node.name.replace('"', "\\\""),
                node.subsystem.replace('"', "\\\"")
            )?;
        }
        for edge in &graph.edges {
            writeln!(
                out,
                r#"  n{} -- n{} [label="n={}" weight={}];"#,
                edge.u, edge.v, edge.n, edge.n
            )?;
        }
        writeln!(out, "}}")
    }
}

struct CsvExporter;

impl GraphExporter for CsvExporter {
    fn format(&self) -> ExportFormat {
        ExportFormat::Csv
    }

    fn write(&self, graph: &GraphExport, out: &mut dyn Write) -> io::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["u", "v", "n", "jaccard", "overlap", "pmi"])?;
        let name_of = |id: u32| {
            graph
                .nodes
                .iter()
                .find(|n| n.id == id)
                .map(|n| n.name.clone())
                .unwrap_or_else(|| format!("n{id}"))
        };
        for edge in &graph.edges {
            writer.write_record([
                name_of(edge.u),
                name_of(edge.v),
                edge.n.to_string(),
                edge.jaccard.to_string(),
                edge.overlap.to_string(),
                edge.pmi.to_string(),
            ])?;
        }
        writer.flush()
    }
}

/// Registry of available exporters; formats are pluggable by registering
/// another implementation.
pub struct ExporterRegistry {
    exporters: Vec<Box<dyn GraphExporter>>,
}

impl Default for ExporterRegistry {
    fn default() -> Self {
        ExporterRegistry {
            exporters: vec![
                Box::new(JsonExporter),
                Box::new(GraphmlExporter),
                Box::new(DotExporter),
                Box::new(CsvExporter),
            ],
        }
    }
}

impl ExporterRegistry {
    pub fn register(&mut self, exporter: Box<dyn GraphExporter>) {
        self.exporters.push(exporter);
    }

    pub fn get(&self, format: ExportFormat) -> Option<&dyn GraphExporter> {
        self.exporters
            .iter()
            .find(|e| e.format() == format)
            .map(Box::as_ref)
    }
}

/// Writes a graph to `path` in the given format.
pub fn export_graph(
    graph: &GraphExport,
    format: ExportFormat,
    path: &Path,
) -> Result<(), ExportError> {
    let registry = ExporterRegistry::default();
    let exporter = registry
        .get(format)
        .ok_or_else(|| ExportError::UnknownFormat(format!("{format:?}")))?;
    let mut file = io::BufWriter::new(create_file(path)?);
    exporter.write(graph, &mut file).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create_file(path: &Path) -> Result<fs::File, ExportError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| ExportError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    fs::File::create(path).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serializes any value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), ExportError> {
    let mut file = io::BufWriter::new(create_file(path)?);
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| ExportError::Io {
            path: path.display().to_string(),
            source: io::Error::other(e),
        })
        .and_then(|()| {
            file.write_all(b"\n").map_err(|source| ExportError::Io {
                path: path.display().to_string(),
                source,
            })
        })
}

// ---------------------------------------------------------------------------
// Field mapping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FieldMappingRow {
    pub entity_id: u32,
    pub entity_name: String,
    pub collection: String,
    pub field_path: String,
    pub role: crate::keys::KeyRole,
    pub id_type: crate::keys::IdType,
}

/// Rows mapping every inferred field back to its owning entity.
pub fn field_mapping_rows(result: &RunResult) -> Vec<FieldMappingRow> {
    let mut rows = Vec::new();
    for entity in &result.entity_graph.entities {
        for member in &entity.members {
            let Some(abstract_collection) = result
                .collections
                .iter()
                .find(|a| a.collection.id == *member)
            else {
                continue;
            };
            for descriptor in abstract_collection.profile.descriptors() {
                rows.push(FieldMappingRow {
                    entity_id: entity.id,
                    entity_name: entity.name.clone(),
                    collection: abstract_collection.collection.name.clone(),
                    field_path: descriptor.path.to_string(),
                    role: descriptor.role,
                    id_type: descriptor.id_type,
                });
            }
        }
    }
    rows
}

/// Writes the field mapping; `.json` paths get a JSON array, anything else CSV.
pub fn export_field_mapping(result: &RunResult, path: &Path) -> Result<(), ExportError> {
    let rows = field_mapping_rows(result);
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        return write_json(&rows, path);
    }
    let file = create_file(path)?;
    let mut writer = csv::Writer::from_writer(io::BufWriter::new(file));
    let io_err = |e: csv::Error| ExportError::Io {
        path: path.display().to_string(),
        source: io::Error::other(e),
    };
    writer
        .write_record([
            "entity_id",
            "entity_name",
            "collection",
            "field_path",
            "role",
            "id_type",
        ])
        .map_err(io_err)?;
    for row in rows {
        writer
            .write_record([
                row.entity_id.to_string(),
                row.entity_name,
                row.collection,
                row.field_path,
                format!("{:?}", row.role).to_lowercase(),
                format!("{:?}", row.id_type).to_lowercase(),
            ])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Statistics artifacts
// ---------------------------------------------------------------------------

pub fn export_stats(stats: &CorpusStats, path: &Path) -> Result<(), ExportError> {
    write_json(stats, path)
}

/// Histogram CSVs for plotting, one file per distribution.
pub fn export_stat_histograms(stats: &CorpusStats, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    let write_hist = |name: &str,
                      header: (&str, &str),
                      hist: &std::collections::BTreeMap<u64, u64>|
     -> Result<PathBuf, ExportError> {
        let path = dir.join(name);
        let mut file = io::BufWriter::new(create_file(&path)?);
        let io_err = |source: io::Error| ExportError::Io {
            path: path.display().to_string(),
            source,
        };
        writeln!(file, "{},{}", header.0, header.1).map_err(io_err)?;
        for (bucket, count) in hist {
            writeln!(file, "{bucket},{count}").map_err(io_err)?;
        }
        Ok(path)
    };
    Ok(vec![
        write_hist(
            "docs_per_collection_hist.csv",
            ("documents", "collections"),
            &stats.docs_per_collection_hist,
        )?,
        write_hist(
            "nesting_depth_hist.csv",
            ("depth", "documents"),
            &stats.nesting_depth_hist,
        )?,
        write_hist(
            "key_occurrence_hist.csv",
            ("collections_with_key", "distinct_keys"),
            &stats.key_occurrence_hist,
        )?,
    ])
}

/// Coverage curve CSV: `threshold,num_edges,covered_fraction`.
pub fn export_coverage_csv(points: &[CoveragePoint], path: &Path) -> Result<(), ExportError> {
    let mut file = io::BufWriter::new(create_file(path)?);
    let io_err = |source: io::Error| ExportError::Io {
        path: path.display().to_string(),
        source,
    };
    writeln!(file, "threshold,num_edges,covered_fraction").map_err(io_err)?;
    for p in points {
        writeln!(file, "{},{},{}", p.threshold, p.num_edges, p.covered_fraction).map_err(io_err)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Run export orchestration
// ---------------------------------------------------------------------------

/// Result-determining hyperparameters only: execution knobs (worker count,
/// strict mode) never change the produced graphs and are excluded so equal
/// inputs yield byte-identical exports.
fn effective_params(config: &Config) -> serde_json::Value {
    let mut params = serde_json::to_value(&config.hyperparameters).unwrap_or(serde_json::Value::Null);
    if let Some(pipeline) = params
        .get_mut("pipeline")
        .and_then(serde_json::Value::as_object_mut)
    {
        pipeline.remove("workers");
        pipeline.remove("strict");
    }
    params
}

/// Writes every artifact selected by the output configuration into `out_dir`,
/// returning the written paths.
pub fn export_run(
    result: &RunResult,
    config: &Config,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExportError> {
    let mut written = Vec::new();
    let params = effective_params(config);
    let paths = &config.output.paths;

    let collection_export =
        GraphExport::from_collection_graph(&result.collection_graph, params.clone());
    let entity_export = GraphExport::from_entity_graph(&result.entity_graph, params);

    for format in &config.output.formats {
        let (collection_path, entity_path) = match format {
            ExportFormat::Json => (
                out_dir.join(paths.collection_graph.as_deref().unwrap_or("collection_graph.json")),
                out_dir.join(paths.entity_graph.as_deref().unwrap_or("entity_graph.json")),
            ),
            other => (
                out_dir.join(format!("collection_graph.{}", other.extension())),
                out_dir.join(format!("entity_graph.{}", other.extension())),
            ),
        };
        export_graph(&collection_export, *format, &collection_path)?;
        export_graph(&entity_export, *format, &entity_path)?;
        written.push(collection_path);
        written.push(entity_path);
    }

    if config.output.include_stats {
        let path = out_dir.join(paths.stats.as_deref().unwrap_or("stats.json"));
        export_stats(&result.stats, &path)?;
        written.push(path);
        written.extend(export_stat_histograms(&result.stats, out_dir)?);
    }
    if config.output.include_field_mapping {
        let path = out_dir.join(paths.field_mapping.as_deref().unwrap_or("field_mapping.csv"));
        export_field_mapping(result, &path)?;
        written.push(path);
    }
    let report_path = out_dir.join(paths.run_report.as_deref().unwrap_or("run_report.json"));
    write_json(&result.report, &report_path)?;
    written.push(report_path);

    Ok(written)
}
