//! End-to-end pipeline tests over on-disk corpora: envelope layouts,
//! manifest overrides, field-mapping resolution and coverage exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use orgraph::config::Config;
use orgraph::export::{export_run, field_mapping_rows};
use orgraph::linking::{coverage_curve, distinct_thresholds, Metric};
use orgraph::pipeline::{config_for_corpus_dir, run_pipeline, run_pipeline_on};
use orgraph::synth::{build_corpus, CorpusSpec};

fn write_file(path: &Path, content: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut f = fs::File::create(path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
}

#[test]
fn enveloped_corpus_links_through_payload_fields() {
    let dir = tempfile::tempdir().unwrap();
    // Two collections in the envelope layout: meta fields at the root, the
    // record payload under `data`.
    let users: String = (0..6)
        .map(|i| {
            format!(
                r#"{{"recorded_at":"2021-02-0{}","source":"crm","data":{{"user_id":{},"name":"user {i}"}}}}"#,
                i + 1,
                1000 + i
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let orders: String = (0..6)
        .map(|i| {
            format!(
                r#"{{"recorded_at":"2021-03-0{}","source":"billing","data":{{"order_id":{},"user_id":{}}}}}"#,
                i + 1,
                5000 + i,
                1000 + i
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    write_file(&dir.path().join("crm/users.jsonl"), &users);
    write_file(&dir.path().join("billing/orders.jsonl"), &orders);

    let config = config_for_corpus_dir(dir.path());
    let result = run_pipeline(&config).unwrap();

    assert_eq!(result.collections.len(), 2);
    for a in &result.collections {
        assert!(a.envelope, "{} should be detected as enveloped", a.collection.name);
        let primary = a.profile.primary.as_ref().unwrap();
        assert!(primary.path.to_string().starts_with("data."));
        // Envelope meta feeds date detection.
        assert!(a
            .profile
            .dates
            .iter()
            .any(|d| d.path.to_string() == "recorded_at"));
    }
    // The shared user ids link the two collections through payload fields.
    assert_eq!(result.collection_graph.edges.len(), 1);
    assert_eq!(result.collection_graph.edges[0].n, 6);
}

#[test]
fn field_mapping_paths_resolve_in_schema_documents() {
    let spec = CorpusSpec::default().with_seed(12);
    let (collections, _) = build_corpus(&spec).unwrap();
    let result = run_pipeline_on(collections, &Config::default()).unwrap();

    // Every inferred path resolves against its collection's schema document.
    let mut checked = 0;
    for a in &result.collections {
        let schema = a.schema.as_ref().expect("generated collections have schemas");
        for d in a.profile.descriptors() {
            assert!(
                d.path.resolve(schema.root()).is_some(),
                "{}: path {} does not resolve",
                a.collection.name,
                d.path
            );
            checked += 1;
        }
    }
    assert!(checked > 100);

    // And the exported rows cover exactly those descriptors.
    let rows = field_mapping_rows(&result);
    let descriptor_count: usize = result
        .collections
        .iter()
        .map(|a| a.profile.descriptors().count())
        .sum();
    assert_eq!(rows.len(), descriptor_count);
    // A collection without a primary key still contributes its other roles.
    assert!(rows.iter().all(|r| !r.entity_name.is_empty()));
}

#[test]
fn manifest_renames_flow_into_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    write_file(
        &dir.path().join("raw/events.jsonl"),
        r#"{"event_id":1,"name":"a"}
{"event_id":2,"name":"b"}"#,
    );
    write_file(
        &dir.path().join("raw/clicks.jsonl"),
        r#"{"click_id":9,"event_id":1}
{"click_id":8,"event_id":2}"#,
    );
    write_file(
        &dir.path().join("manifest.yaml"),
        "collections:\n  - file: raw/events.jsonl\n    name: events_v2\n    subsystem: telemetry\n",
    );
    let result = run_pipeline(&config_for_corpus_dir(dir.path())).unwrap();
    let names: Vec<&str> = result
        .collection_graph
        .nodes
        .iter()
        .map(|n| n.name.as_str())
        .collect();
    assert!(names.contains(&"events_v2"));
    let renamed = result
        .collection_graph
        .nodes
        .iter()
        .find(|n| n.name == "events_v2")
        .unwrap();
    assert_eq!(renamed.subsystem, "telemetry");
}

#[test]
fn unavailable_source_warns_unless_strict() {
    let dir = tempfile::tempdir().unwrap();
    write_file(&dir.path().join("s/a.jsonl"), r#"{"a_id":1}"#);

    let mut config = config_for_corpus_dir(dir.path());
    config.sources.push(orgraph::config::SourceConfig {
        kind: orgraph::config::SourceKind::Directory,
        path: "/nonexistent/corpus".into(),
        subsystem: None,
        credentials: None,
    });
    let result = run_pipeline(&config).unwrap();
    assert_eq!(result.collections.len(), 1);
    assert!(result
        .report
        .warnings
        .iter()
        .any(|w| w.contains("/nonexistent/corpus")));

    config.hyperparameters.pipeline.strict = true;
    let err = run_pipeline(&config).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn document_store_stub_degrades_gracefully() {
    let dir = tempfile::tempdir().unwrap();
    write_file(&dir.path().join("s/a.jsonl"), r#"{"a_id":1}"#);
    let mut config = config_for_corpus_dir(dir.path());
    config.sources.push(orgraph::config::SourceConfig {
        kind: orgraph::config::SourceKind::DocumentStore,
        path: "mongodb://db.internal:27017".into(),
        subsystem: None,
        credentials: Some("ENV:DB_TOKEN".into()),
    });
    let result = run_pipeline(&config).unwrap();
    assert_eq!(result.collections.len(), 1);
    assert!(result.report.warnings.iter().any(|w| w.contains("stub")));
}

#[test]
fn coverage_curves_export_and_stay_monotone() {
    let spec = CorpusSpec::default().with_seed(4);
    let (collections, _) = build_corpus(&spec).unwrap();
    let result = run_pipeline_on(collections, &Config::default()).unwrap();
    for metric in [Metric::N, Metric::Jaccard, Metric::Overlap, Metric::Pmi] {
        let thresholds = distinct_thresholds(&result.raw_graph, metric);
        assert!(!thresholds.is_empty());
        let curve = coverage_curve(&result.raw_graph, metric, &thresholds);
        for pair in curve.windows(2) {
            assert!(pair[0].num_edges <= pair[1].num_edges);
            assert!(pair[0].covered_fraction <= pair[1].covered_fraction);
        }
        let out = tempfile::tempdir().unwrap();
        let path = out.path().join("coverage.csv");
        orgraph::export::export_coverage_csv(&curve, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("threshold,num_edges,covered_fraction\n"));
        assert_eq!(text.lines().count(), curve.len() + 1);
    }
}

#[test]
fn run_artifacts_cover_the_configured_outputs() {
    let spec = CorpusSpec {
        num_subsystems: 3,
        collections_per_subsystem: (3, 4),
        docs_per_collection: (8, 40),
        ..CorpusSpec::default().with_seed(2)
    };
    let corpus = tempfile::tempdir().unwrap();
    orgraph::synth::generate_corpus(&spec, corpus.path()).unwrap();

    let mut config = config_for_corpus_dir(corpus.path());
    config.output.formats = vec![
        orgraph::export::ExportFormat::Json,
        orgraph::export::ExportFormat::Graphml,
        orgraph::export::ExportFormat::Dot,
        orgraph::export::ExportFormat::Csv,
    ];
    let result = run_pipeline(&config).unwrap();
    let out = tempfile::tempdir().unwrap();
    let written = export_run(&result, &config, out.path()).unwrap();
    for name in [
        "collection_graph.json",
        "entity_graph.json",
        "collection_graph.graphml",
        "entity_graph.dot",
        "entity_graph.csv",
        "stats.json",
        "field_mapping.csv",
        "run_report.json",
        "docs_per_collection_hist.csv",
    ] {
        assert!(
            written.iter().any(|p| p.file_name().unwrap() == name),
            "missing artifact {name}"
        );
        assert!(out.path().join(name).is_file());
    }
    // The run report echoes the effective configuration, defaults included.
    let report = fs::read_to_string(out.path().join("run_report.json")).unwrap();
    for key in ["effective_config", "schema_scan_limit", "frequent_key_cap", "tau"] {
        assert!(report.contains(key), "run report missing {key}");
    }
}
