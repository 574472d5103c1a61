//! Command-line entry point for the knowledge-graph pipeline.
//!
//! Exit codes: 0 success, 1 validation error, 2 source error, 3 internal
//! invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orgraph::config::{Config, SourceConfig, SourceKind};
use orgraph::error::{ConfigError, ExportError, PipelineError, SynthError};
use orgraph::export::{
    export_coverage_csv, export_graph, export_run, export_stat_histograms, export_stats,
    write_json, ExportFormat, GraphExport,
};
use orgraph::linking::{coverage_curve, distinct_thresholds, Metric};
use orgraph::pipeline::{run_pipeline, RunResult};
use orgraph::synth::{
    evaluate_against_truth, generate_corpus, load_ground_truth, CorpusSpec, ResultView,
};

#[derive(Parser)]
#[command(
    name = "orgraph",
    version,
    about = "Builds an organization-level knowledge graph from document collections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the YAML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Corpus directory; replaces the configured sources
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Output directory; overrides output.dir from the configuration
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override for corpus generation
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log level (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write every configured artifact
    Run,
    /// Ingest and profile only; writes the statistics report
    Profile(ProfileArgs),
    /// Run through link discovery and filtering; writes the collection graph
    Link(LinkArgs),
    /// Run through entity construction; writes the entity graph
    Merge,
    /// Convert an exported graph JSON into another format
    Export(ExportArgs),
    /// Generate a synthetic corpus with planted ground truth
    Generate(GenerateArgs),
    /// Score a run's output directory against a ground truth file
    Evaluate(EvaluateArgs),
    /// Configuration helpers
    Config(ConfigArgs),
}

#[derive(Args)]
struct ProfileArgs {
    /// Where to write the statistics JSON (default: <out>/stats.json)
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct LinkArgs {
    /// Also write coverage-curve CSVs for all four metrics
    #[arg(long)]
    coverage: bool,
    /// Restrict coverage curves to one key kind: all, int, str or composite
    #[arg(long, default_value = "all")]
    key_kind: String,
}

#[derive(Args)]
struct ExportArgs {
    /// An exported graph JSON file
    #[arg(long)]
    input: PathBuf,
    /// Target format: json, graphml, dot or csv
    #[arg(long)]
    format: String,
    /// Output file
    #[arg(long)]
    out_file: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Corpus spec YAML; defaults apply when omitted
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Spec preset: default, noiseless or frequent-key-noise
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// ground_truth.json produced by `generate`
    #[arg(long)]
    truth: PathBuf,
    /// Run output directory holding collection_graph.json and
    /// entity_graph.json
    #[arg(long)]
    result: PathBuf,
    /// Where to write the evaluation report (default: <result>/evaluation.json)
    #[arg(long)]
    out_file: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Print the full default configuration as YAML
    #[arg(long)]
    print_defaults: bool,
}

// ---------------------------------------------------------------------------

enum CliError {
    Validation(String),
    Source(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Source(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Source(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e.exit_code() {
            1 => CliError::Validation(message),
            3 => CliError::Internal(message),
            _ => CliError::Source(message),
        }
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::UnknownFormat(_) => CliError::Validation(e.to_string()),
            ExportError::Io { .. } => CliError::Source(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { .. } => CliError::Source(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // Help and version output.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run => cmd_run(cli),
        Command::Profile(args) => cmd_profile(cli, args),
        Command::Link(args) => cmd_link(cli, args),
        Command::Merge => cmd_merge(cli),
        Command::Export(args) => cmd_export(args),
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Config(args) => cmd_config(args),
    }
}

/// Assembles the effective configuration from file and global flags.
fn effective_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => orgraph::load_config(path)?,
        None => Config::default(),
    };
    if let Some(corpus) = &cli.corpus {
        config.sources = vec![SourceConfig {
            kind: SourceKind::Directory,
            path: corpus.display().to_string(),
            subsystem: None,
            credentials: None,
        }];
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.display().to_string();
    }
    Ok(config)
}

fn out_dir(config: &Config) -> PathBuf {
    PathBuf::from(&config.output.dir)
}

fn run_for(cli: &Cli) -> Result<(Config, RunResult), CliError> {
    let config = effective_config(cli)?;
    config.require_sources()?;
    let result = run_pipeline(&config)?;
    Ok((config, result))
}

fn cmd_run(cli: &Cli) -> Result<(), CliError> {
    let (config, result) = run_for(cli)?;
    let written = export_run(&result, &config, &out_dir(&config))?;
    println!(
        "{} collections, {} links, {} entities ({} edges)",
        result.collections.len(),
        result.collection_graph.edges.len(),
        result.entity_graph.entities.len(),
        result.entity_graph.edges.len()
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_profile(cli: &Cli, args: &ProfileArgs) -> Result<(), CliError> {
    let (config, result) = run_for(cli)?;
    let dir = out_dir(&config);
    let stats_path = args
        .stats_out
        .clone()
        .unwrap_or_else(|| dir.join("stats.json"));
    export_stats(&result.stats, &stats_path)?;
    println!(
        "{} collections, {} documents profiled",
        result.stats.collections, result.stats.documents
    );
    println!("wrote {}", stats_path.display());
    for path in export_stat_histograms(&result.stats, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_link(cli: &Cli, args: &LinkArgs) -> Result<(), CliError> {
    let (config, result) = run_for(cli)?;
    let dir = out_dir(&config);
    let params = serde_yaml::to_string(&config.hyperparameters.linking)
        .ok()
        .map(serde_json::Value::String)
        .unwrap_or(serde_json::Value::Null);
    let export = GraphExport::from_collection_graph(&result.collection_graph, params);
    let path = dir.join("collection_graph.json");
    export_graph(&export, ExportFormat::Json, &path)?;
    println!(
        "{} raw edges, {} after filtering",
        result.raw_graph.edges.len(),
        result.collection_graph.edges.len()
    );
    println!("wrote {}", path.display());
    if args.coverage {
        // Curves can be restricted to one key kind (the raw graph otherwise).
        let restricted;
        let graph = match args.key_kind.as_str() {
            "all" => &result.raw_graph,
            kind => {
                let keep: fn(&orgraph::KeyValue) -> bool = match kind {
                    "int" => |k| matches!(k, orgraph::KeyValue::Int(_)),
                    "str" => |k| matches!(k, orgraph::KeyValue::Str(_)),
                    "composite" => |k| matches!(k, orgraph::KeyValue::Composite(..)),
                    other => {
                        return Err(CliError::Validation(format!(
                            "unknown key kind `{other}` (expected all, int, str or composite)"
                        )))
                    }
                };
                let index = result.index.restricted(keep);
                restricted = orgraph::linking::pairwise_links(
                    &index,
                    &config.hyperparameters.linking,
                );
                &restricted
            }
        };
        for (metric, name) in [
            (Metric::N, "n"),
            (Metric::Jaccard, "jaccard"),
            (Metric::Overlap, "overlap"),
            (Metric::Pmi, "pmi"),
        ] {
            let thresholds = distinct_thresholds(graph, metric);
            let curve = coverage_curve(graph, metric, &thresholds);
            let csv_path = dir.join(format!("coverage_{name}.csv"));
            export_coverage_csv(&curve, &csv_path)?;
            println!("wrote {}", csv_path.display());
        }
    }
    Ok(())
}

fn cmd_merge(cli: &Cli) -> Result<(), CliError> {
    let (config, result) = run_for(cli)?;
    let dir = out_dir(&config);
    let export = GraphExport::from_entity_graph(&result.entity_graph, serde_json::Value::Null);
    let path = dir.join("entity_graph.json");
    export_graph(&export, ExportFormat::Json, &path)?;
    println!(
        "{} collections merged into {} entities",
        result.collections.len(),
        result.entity_graph.entities.len()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let graph = GraphExport::load_json(&args.input)?;
    let format: ExportFormat = args.format.parse()?;
    export_graph(&graph, format, &args.out_file)?;
    println!("wrote {}", args.out_file.display());
    Ok(())
}

fn load_spec(path: &Path) -> Result<CorpusSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Source(format!("cannot read {}: {e}", path.display())))?;
    serde_yaml::from_str(&text).map_err(|e| CliError::Validation(format!("invalid spec: {e}")))
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<(), CliError> {
    let mut spec = match (&args.spec, &args.preset) {
        (Some(path), _) => load_spec(path)?,
        (None, Some(preset)) => match preset.as_str() {
            "default" => CorpusSpec::default(),
            "noiseless" => CorpusSpec::noiseless(),
            "frequent-key-noise" => CorpusSpec::frequent_key_noise(),
            other => {
                return Err(CliError::Validation(format!(
                    "unknown preset `{other}` (expected default, noiseless or frequent-key-noise)"
                )))
            }
        },
        (None, None) => CorpusSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("corpus"));
    let truth = generate_corpus(&spec, &dir)?;
    println!(
        "generated {} collections in {} subsystems ({} true links, {} entity groups)",
        truth.subsystems.len(),
        spec.num_subsystems,
        truth.true_links.len(),
        truth.entity_groups.len()
    );
    println!("wrote {}", dir.join("ground_truth.json").display());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let truth = load_ground_truth(&args.truth)?;
    let collection = GraphExport::load_json(&args.result.join("collection_graph.json"))?;
    let entity = GraphExport::load_json(&args.result.join("entity_graph.json"))?;
    let view = ResultView::from_graph_exports(&collection, &entity);
    let report = evaluate_against_truth(&view, &truth)?;
    let path = args
        .out_file
        .clone()
        .unwrap_or_else(|| args.result.join("evaluation.json"));
    write_json(&report, &path)?;
    println!(
        "link precision {:.4}, recall {:.4}; entity pairwise F1 {:.4}; subsystems {}/{}; average degree {:.2}",
        report.link_precision,
        report.link_recall,
        report.entity_pairwise_f1,
        report.subsystem_coverage.covered,
        report.subsystem_coverage.total,
        report.average_degree
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_config(args: &ConfigArgs) -> Result<(), CliError> {
    if args.print_defaults {
        print!("{}", Config::default_yaml());
        Ok(())
    } else {
        Err(CliError::Validation(
            "nothing to do; try `config --print-defaults`".into(),
        ))
    }
}
