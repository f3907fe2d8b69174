//! Stage orchestration: runs the synth/graph/centrality/community/enrich
//! chain and writes every artifact to the output directory, plus the
//! standalone rank/evaluate/histogram/export stages.
//!
//! All randomness flows from the single configured seed; each stage derives
//! its sub-seed as seed + a fixed offset. The manifest records the config
//! and a sha256 digest of every artifact, so two runs with the same config
//! can be compared byte for byte.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bipartite::{BipartiteError, BipartiteGraph};
use crate::centrality::{
    degree_centrality, degree_histogram, CentralityError, HistogramData, NodeMetrics,
};
use crate::community::{louvain, CommunityAssignment, CommunityError};
use crate::dataset::{
    binarize_label, parse_dataset, parse_enriched, write_enriched, BinaryLabel, DatasetError,
    DatasetSchema, FlowRecord,
};
use crate::enrich::{enrich, EnrichError, EnrichedRecord};
use crate::export::{export_graph, ExportFormat, GraphDoc};
use crate::graph::FlowGraph;
use crate::select::{
    centralities_in_topk, rank_features_with, FeatureSet, Scorer, SelectError, TableSpec,
};
use crate::synth::{
    assign_endpoints, generate_edge_pool, generate_endpoints, EdgePool, EndpointAssignment,
    PseudonymMap, SynthConfig, SynthError,
};
use crate::tree::{
    compare, evaluate, stratified_split, train_tree, Comparison, EvalError, EvalReport,
    TreeConfig,
};

pub const SEED_OFFSET_SYNTH: u64 = 0;
pub const SEED_OFFSET_ASSIGN: u64 = 1000;
pub const SEED_OFFSET_LOUVAIN: u64 = 2000;
pub const SEED_OFFSET_SPLIT: u64 = 3000;

pub const ENRICHED_CSV: &str = "enriched.csv";
pub const PSEUDONYMS_TSV: &str = "pseudonyms.tsv";
pub const EDGE_POOL_TSV: &str = "edge_pool.tsv";
pub const NODE_METRICS_CSV: &str = "node_metrics.csv";
pub const COMMUNITIES_TSV: &str = "communities.tsv";
pub const HISTOGRAM_TSV: &str = "degree_histogram.tsv";
pub const MANIFEST_TXT: &str = "manifest.txt";
pub const RANKING_TSV: &str = "ranking.tsv";
pub const EVAL_BASELINE_TXT: &str = "eval_baseline.txt";
pub const EVAL_ENRICHED_TXT: &str = "eval_enriched.txt";
pub const COMPARISON_TXT: &str = "comparison.txt";

pub fn graph_file(format: ExportFormat) -> String {
    format!("graph.{}", format.extension())
}

pub fn communities_graph_file(format: ExportFormat) -> String {
    format!("graph_communities.{}", format.extension())
}

pub fn bipartite_graph_file(format: ExportFormat) -> String {
    format!("bipartite.{}", format.extension())
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input {path}: {source}")]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing artifact {path} (run the `{produced_by}` command first)")]
    MissingArtifact {
        path: PathBuf,
        produced_by: &'static str,
    },
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("synthesis: {0}")]
    Synth(#[from] SynthError),
    #[error("centrality: {0}")]
    Centrality(#[from] CentralityError),
    #[error("community: {0}")]
    Community(#[from] CommunityError),
    #[error("bipartite: {0}")]
    Bipartite(#[from] BipartiteError),
    #[error("enrichment: {0}")]
    Enrich(#[from] EnrichError),
    #[error("feature ranking: {0}")]
    Select(#[from] SelectError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Input/usage problems (exit code 2) as opposed to pipeline failures
    /// (exit code 3).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Input { .. } | PipelineError::MissingArtifact { .. }
        )
    }
}

/// Which graph the degree histogram reads: the raw generated pool (the
/// pre-enrichment view) or the record-weighted graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegreeSource {
    #[default]
    Pool,
    Records,
}

impl std::fmt::Display for DegreeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DegreeSource::Pool => "pool",
            DegreeSource::Records => "records",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub node_count: u32,
    pub edge_probability: f64,
    pub seed: u64,
    pub limit: Option<usize>,
    pub top_k: usize,
    pub histogram_bins: usize,
    pub format: ExportFormat,
    pub epsilon: f64,
    pub threads: usize,
    pub degree_source: DegreeSource,
    pub scorer: Scorer,
    pub schema_override: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            out_dir: out_dir.into(),
            node_count: 300,
            edge_probability: 0.2,
            seed: 42,
            limit: None,
            top_k: 50,
            histogram_bins: 20,
            format: ExportFormat::Dot,
            epsilon: 0.01,
            threads: 0,
            degree_source: DegreeSource::Pool,
            scorer: Scorer::AnovaF,
            schema_override: None,
        }
    }
}

/// Run `f` inside a rayon pool of the requested size; 0 keeps the global
/// pool. Without the `parallel` feature everything runs on this thread.
#[cfg(feature = "parallel")]
pub fn with_thread_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("building a rayon pool with a fixed size cannot fail")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_thread_pool<T>(_threads: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn load_schema(config: &PipelineConfig) -> Result<DatasetSchema, PipelineError> {
    match &config.schema_override {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| PipelineError::Input {
                path: path.clone(),
                source,
            })?;
            Ok(DatasetSchema::from_spec_text(&text)?)
        }
        None => Ok(DatasetSchema::nsl_kdd()),
    }
}

struct Prepared {
    schema: DatasetSchema,
    records: Vec<FlowRecord>,
    endpoints: Vec<std::net::Ipv4Addr>,
    pool: EdgePool,
    assignments: Vec<EndpointAssignment>,
}

fn prepare(config: &PipelineConfig) -> Result<Prepared, PipelineError> {
    let schema = load_schema(config)?;
    let file = File::open(&config.input).map_err(|source| PipelineError::Input {
        path: config.input.clone(),
        source,
    })?;
    let mut records = parse_dataset(BufReader::new(file), &schema)?;
    if let Some(limit) = config.limit {
        records.truncate(limit);
    }
    let synth_config = SynthConfig::new(
        config.node_count,
        config.edge_probability,
        config.seed.wrapping_add(SEED_OFFSET_SYNTH),
    )?;
    let endpoints = generate_endpoints(&synth_config)?;
    let pool = generate_edge_pool(&endpoints, &synth_config)?;
    let assignments = assign_endpoints(
        &records,
        &pool,
        config.seed.wrapping_add(SEED_OFFSET_ASSIGN),
    )?;
    Ok(Prepared {
        schema,
        records,
        endpoints,
        pool,
        assignments,
    })
}

fn artifact_writer(out_dir: &Path, name: &str) -> Result<BufWriter<File>, PipelineError> {
    let path = out_dir.join(name);
    let file = File::create(&path).map_err(|source| PipelineError::Write { path, source })?;
    Ok(BufWriter::new(file))
}

fn write_text(out_dir: &Path, name: &str, text: &str) -> Result<(), PipelineError> {
    let path = out_dir.join(name);
    fs::write(&path, text).map_err(|source| PipelineError::Write { path, source })
}

fn digest_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

fn histogram_values(
    prepared: &Prepared,
    record_graph: &FlowGraph,
    source: DegreeSource,
) -> Result<Vec<f64>, PipelineError> {
    let values = match source {
        DegreeSource::Pool => {
            let pool_graph = FlowGraph::from_edge_pool(&prepared.pool);
            degree_centrality(&pool_graph)?
                .iter()
                .map(|d| d.total)
                .collect()
        }
        DegreeSource::Records => degree_centrality(record_graph)?
            .iter()
            .map(|d| d.total)
            .collect(),
    };
    Ok(values)
}

/// Everything `enrich` produced, for callers that want to report on it.
#[derive(Debug)]
pub struct EnrichSummary {
    pub records: usize,
    pub nodes: usize,
    pub edges: usize,
    pub communities: usize,
    pub modularity: f64,
    pub histogram: HistogramData,
    pub artifacts: Vec<PathBuf>,
}

/// The full pipeline: parse, synthesize, build the graph, compute metrics
/// and communities, enrich, and write every artifact plus the manifest.
pub fn run_enrich(config: &PipelineConfig) -> Result<EnrichSummary, PipelineError> {
    with_thread_pool(config.threads, || run_enrich_inner(config))
}

fn run_enrich_inner(config: &PipelineConfig) -> Result<EnrichSummary, PipelineError> {
    let prepared = prepare(config)?;
    fs::create_dir_all(&config.out_dir).map_err(|source| PipelineError::Write {
        path: config.out_dir.clone(),
        source,
    })?;

    let graph = FlowGraph::build(&prepared.assignments, &prepared.records, &prepared.schema);
    let metrics = NodeMetrics::compute(&graph)?;
    let view = graph.to_undirected();
    let communities = louvain(
        &view,
        config.seed.wrapping_add(SEED_OFFSET_LOUVAIN),
        1.0,
    )?;
    let bipartite = BipartiteGraph::build(&prepared.records, &prepared.assignments, &prepared.schema)?;
    let histogram = degree_histogram(
        &histogram_values(&prepared, &graph, config.degree_source)?,
        config.histogram_bins,
    )?;
    let enriched = enrich(
        prepared.records,
        &prepared.assignments,
        &metrics,
        &communities,
    )?;

    let out_dir = &config.out_dir;
    let mut artifacts: Vec<String> = Vec::new();

    {
        let mut w = artifact_writer(out_dir, ENRICHED_CSV)?;
        write_enriched(&enriched, &prepared.schema, &mut w)?;
        artifacts.push(ENRICHED_CSV.to_string());
    }
    {
        // The generated endpoints are pseudonyms for abstract host
        // identities; record the correspondence for audit.
        let mut map = PseudonymMap::new();
        for (i, ip) in prepared.endpoints.iter().enumerate() {
            map.insert(&format!("host-{i:06}"), *ip)?;
        }
        let mut w = artifact_writer(out_dir, PSEUDONYMS_TSV)?;
        map.write_tsv(&mut w)?;
        artifacts.push(PSEUDONYMS_TSV.to_string());
    }
    {
        let mut w = artifact_writer(out_dir, EDGE_POOL_TSV)?;
        prepared.pool.write_tsv(&mut w)?;
        artifacts.push(EDGE_POOL_TSV.to_string());
    }
    {
        let mut w = artifact_writer(out_dir, NODE_METRICS_CSV)?;
        metrics.write_csv(Some(&communities), &mut w)?;
        artifacts.push(NODE_METRICS_CSV.to_string());
    }
    {
        let mut w = artifact_writer(out_dir, COMMUNITIES_TSV)?;
        communities.write_tsv(&mut w)?;
        artifacts.push(COMMUNITIES_TSV.to_string());
    }
    {
        let mut w = artifact_writer(out_dir, HISTOGRAM_TSV)?;
        histogram.write_tsv(&mut w)?;
        artifacts.push(HISTOGRAM_TSV.to_string());
    }
    let plain = GraphDoc::from_flow_graph(&graph, "flows");
    write_text(out_dir, &graph_file(config.format), &export_graph(&plain, config.format))?;
    artifacts.push(graph_file(config.format));
    let with_communities =
        GraphDoc::from_flow_graph_with_communities(&graph, &communities, "communities");
    write_text(
        out_dir,
        &communities_graph_file(config.format),
        &export_graph(&with_communities, config.format),
    )?;
    artifacts.push(communities_graph_file(config.format));
    let bipartite_doc = bipartite.export_doc("bipartite");
    write_text(
        out_dir,
        &bipartite_graph_file(config.format),
        &export_graph(&bipartite_doc, config.format),
    )?;
    artifacts.push(bipartite_graph_file(config.format));

    write_manifest(config, enriched.len(), &graph, &communities, &artifacts)?;

    Ok(EnrichSummary {
        records: enriched.len(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        communities: communities.community_count(),
        modularity: communities.modularity,
        histogram,
        artifacts: artifacts
            .iter()
            .map(|name| out_dir.join(name))
            .chain(std::iter::once(out_dir.join(MANIFEST_TXT)))
            .collect(),
    })
}

fn write_manifest(
    config: &PipelineConfig,
    records: usize,
    graph: &FlowGraph,
    communities: &CommunityAssignment,
    artifacts: &[String],
) -> Result<(), PipelineError> {
    let mut lines: Vec<String> = vec![
        format!("config.degree_source={}", config.degree_source),
        format!("config.edge_probability={:.6}", config.edge_probability),
        format!("config.epsilon={:.6}", config.epsilon),
        format!("config.format={}", config.format),
        format!("config.histogram_bins={}", config.histogram_bins),
        format!("config.input={}", config.input.display()),
        format!(
            "config.limit={}",
            config
                .limit
                .map_or("none".to_string(), |l| l.to_string())
        ),
        format!("config.node_count={}", config.node_count),
        format!(
            "config.schema={}",
            config
                .schema_override
                .as_ref()
                .map_or("builtin".to_string(), |p| p.display().to_string())
        ),
        format!("config.seed={}", config.seed),
        format!("config.top_k={}", config.top_k),
        format!("run.communities={}", communities.community_count()),
        format!("run.edges={}", graph.edge_count()),
        format!("run.modularity={:.6}", communities.modularity),
        format!("run.nodes={}", graph.node_count()),
        format!("run.records={records}"),
    ];
    for name in artifacts {
        let digest = digest_file(&config.out_dir.join(name))?;
        lines.push(format!("sha256.{name}={digest}"));
    }
    lines.sort();
    let mut w = artifact_writer(&config.out_dir, MANIFEST_TXT)?;
    for line in &lines {
        writeln!(w, "{line}").map_err(|source| PipelineError::Write {
            path: config.out_dir.join(MANIFEST_TXT),
            source,
        })?;
    }
    Ok(())
}

/// Parse a manifest back into (key, value) pairs.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .filter_map(|line| {
            line.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect())
}

/// Recompute every sha256 recorded in the manifest and compare.
pub fn verify_manifest(out_dir: &Path) -> Result<bool, PipelineError> {
    let entries = read_manifest(&out_dir.join(MANIFEST_TXT))?;
    for (key, recorded) in entries {
        if let Some(name) = key.strip_prefix("sha256.") {
            if digest_file(&out_dir.join(name))? != recorded {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn load_enriched(
    config: &PipelineConfig,
    produced_by: &'static str,
) -> Result<(DatasetSchema, Vec<EnrichedRecord>), PipelineError> {
    let schema = load_schema(config)?;
    let path = config.out_dir.join(ENRICHED_CSV);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            path,
            produced_by,
        });
    }
    let file = File::open(&path).map_err(|source| PipelineError::Input {
        path: path.clone(),
        source,
    })?;
    let records = parse_enriched(BufReader::new(file), &schema)?;
    Ok((schema, records))
}

#[derive(Debug)]
pub struct RankSummary {
    pub scored_features: usize,
    pub top_centralities: Vec<String>,
    pub path: PathBuf,
}

/// Rank the enriched feature columns and write `ranking.tsv`.
pub fn run_rank(config: &PipelineConfig) -> Result<RankSummary, PipelineError> {
    with_thread_pool(config.threads, || run_rank_inner(config))
}

fn run_rank_inner(config: &PipelineConfig) -> Result<RankSummary, PipelineError> {
    let (schema, records) = load_enriched(config, "enrich")?;
    let labels: Vec<BinaryLabel> = records.iter().map(|r| binarize_label(&r.base)).collect();
    let spec = TableSpec::fit(&records, &schema, FeatureSet::Enriched);
    let table = spec.build(&records);
    let ranking = rank_features_with(&table, &labels, config.top_k, config.scorer)?;
    let mut w = artifact_writer(&config.out_dir, RANKING_TSV)?;
    ranking.write_tsv(&mut w)?;
    Ok(RankSummary {
        scored_features: ranking.len(),
        top_centralities: centralities_in_topk(&ranking, config.top_k),
        path: config.out_dir.join(RANKING_TSV),
    })
}

#[derive(Debug)]
pub struct EvaluateSummary {
    pub baseline: EvalReport,
    pub enriched: EvalReport,
    pub comparison: Comparison,
}

/// Train the baseline and enriched trees on a stratified 80/20 split of the
/// enriched CSV, evaluate both, and write the three report files.
pub fn run_evaluate(config: &PipelineConfig) -> Result<EvaluateSummary, PipelineError> {
    let (schema, records) = load_enriched(config, "enrich")?;
    let labels: Vec<BinaryLabel> = records.iter().map(|r| binarize_label(&r.base)).collect();
    let (train, test) = stratified_split(
        &labels,
        0.8,
        config.seed.wrapping_add(SEED_OFFSET_SPLIT),
    );
    let train_labels: Vec<BinaryLabel> = train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<BinaryLabel> = test.iter().map(|&i| labels[i]).collect();

    let mut reports = Vec::with_capacity(2);
    for (set, name) in [
        (FeatureSet::Baseline, "baseline"),
        (FeatureSet::Enriched, "enriched"),
    ] {
        let spec = TableSpec::fit_rows(&records, &train, &schema, set);
        let full = spec.build(&records);
        let train_table = full.subset(&train);
        let test_table = full.subset(&test);
        let model = train_tree(&train_table, &train_labels, &TreeConfig::default())?;
        reports.push(evaluate(&model, &test_table, &test_labels, name)?);
    }
    let enriched_report = reports.pop().expect("two reports pushed");
    let baseline_report = reports.pop().expect("two reports pushed");
    let comparison = compare(&baseline_report, &enriched_report, config.epsilon)?;

    write_text(&config.out_dir, EVAL_BASELINE_TXT, &baseline_report.to_kv_block())?;
    write_text(&config.out_dir, EVAL_ENRICHED_TXT, &enriched_report.to_kv_block())?;
    write_text(&config.out_dir, COMPARISON_TXT, &comparison.to_kv_block())?;

    Ok(EvaluateSummary {
        baseline: baseline_report,
        enriched: enriched_report,
        comparison,
    })
}

/// Compute the degree histogram (pool or record graph per config) and write
/// `degree_histogram.tsv`.
pub fn run_histogram(config: &PipelineConfig) -> Result<HistogramData, PipelineError> {
    let prepared = prepare(config)?;
    fs::create_dir_all(&config.out_dir).map_err(|source| PipelineError::Write {
        path: config.out_dir.clone(),
        source,
    })?;
    let graph = FlowGraph::build(&prepared.assignments, &prepared.records, &prepared.schema);
    let histogram = degree_histogram(
        &histogram_values(&prepared, &graph, config.degree_source)?,
        config.histogram_bins,
    )?;
    let mut w = artifact_writer(&config.out_dir, HISTOGRAM_TSV)?;
    histogram.write_tsv(&mut w)?;
    Ok(histogram)
}

/// Write only the three graph exports (plain, community-attributed,
/// bipartite) in the configured format.
pub fn run_export(config: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let prepared = prepare(config)?;
    fs::create_dir_all(&config.out_dir).map_err(|source| PipelineError::Write {
        path: config.out_dir.clone(),
        source,
    })?;
    let graph = FlowGraph::build(&prepared.assignments, &prepared.records, &prepared.schema);
    let view = graph.to_undirected();
    let communities = louvain(
        &view,
        config.seed.wrapping_add(SEED_OFFSET_LOUVAIN),
        1.0,
    )?;
    let bipartite = BipartiteGraph::build(&prepared.records, &prepared.assignments, &prepared.schema)?;

    let files = [
        (
            graph_file(config.format),
            export_graph(&GraphDoc::from_flow_graph(&graph, "flows"), config.format),
        ),
        (
            communities_graph_file(config.format),
            export_graph(
                &GraphDoc::from_flow_graph_with_communities(&graph, &communities, "communities"),
                config.format,
            ),
        ),
        (
            bipartite_graph_file(config.format),
            export_graph(&bipartite.export_doc("bipartite"), config.format),
        ),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        write_text(&config.out_dir, &name, &text)?;
        written.push(config.out_dir.join(name));
    }
    Ok(written)
}
