//! Subcommand front-end for the enrichment pipeline.
//!
//! Exit codes: 0 success, 2 usage/input errors, 3 pipeline errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kddgraph::export::ExportFormat;
use kddgraph::pipeline::{self, DegreeSource, PipelineConfig, PipelineError};
use kddgraph::select::Scorer;

#[derive(Parser)]
#[command(
    name = "kddgraph",
    version,
    about = "Graph-theoretic enrichment for NSL-KDD-format flow datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: synthesize endpoints, build the graph, compute
    /// metrics and communities, and write every artifact
    Enrich(StageArgs),
    /// Rank the enriched feature columns (needs a previous enrich run)
    Rank(StageArgs),
    /// Train and compare the baseline and enriched classifiers (needs a
    /// previous enrich run)
    Evaluate(StageArgs),
    /// Write the degree-centrality histogram
    Histogram(StageArgs),
    /// Write the graph exports only
    Export(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// NSL-KDD-format input file (headerless, 43 comma-separated columns)
    #[arg(long)]
    input: Option<PathBuf>,

    /// Directory the artifacts go to
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    /// Number of synthetic endpoints
    #[arg(long, default_value_t = 300)]
    nodes: u32,

    /// Edge generation probability in (0, 1]
    #[arg(long, default_value_t = 0.2)]
    edge_prob: f64,

    /// Master seed; stages derive fixed-offset sub-seeds from it
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Keep only the first N input records
    #[arg(long)]
    limit: Option<usize>,

    /// Top-k cutoff for the feature ranking
    #[arg(long, default_value_t = 50)]
    k: usize,

    /// Histogram bin count
    #[arg(long, default_value_t = 20)]
    bins: usize,

    /// Graph export format
    #[arg(long, value_parser = ["dot", "graphml"], default_value = "dot")]
    format: String,

    /// Worker threads for centrality (0 = library default)
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Allowed accuracy drop before the comparison fails
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,

    /// Which graph the degree histogram reads
    #[arg(long, value_parser = ["pool", "records"], default_value = "pool")]
    degree_source: String,

    /// Univariate scorer for the ranking
    #[arg(long, value_parser = ["f", "chi2"], default_value = "f")]
    scorer: String,

    /// Schema override file: one `name,kind` pair per line
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl StageArgs {
    fn into_config(self, needs_input: bool) -> Result<PipelineConfig, (u8, String)> {
        let input = match self.input {
            Some(path) => path,
            None if needs_input => {
                return Err((2, "missing required --input <FILE>".to_string()));
            }
            None => PathBuf::new(),
        };
        let mut config = PipelineConfig::new(input, self.out_dir);
        config.node_count = self.nodes;
        config.edge_probability = self.edge_prob;
        config.seed = self.seed;
        config.limit = self.limit;
        config.top_k = self.k;
        config.histogram_bins = self.bins;
        config.format = self
            .format
            .parse::<ExportFormat>()
            .expect("clap validated the format");
        config.threads = self.threads;
        config.epsilon = self.epsilon;
        config.degree_source = match self.degree_source.as_str() {
            "records" => DegreeSource::Records,
            _ => DegreeSource::Pool,
        };
        config.scorer = match self.scorer.as_str() {
            "chi2" => Scorer::Chi2,
            _ => Scorer::AnovaF,
        };
        config.schema_override = self.schema;
        Ok(config)
    }
}

fn pipeline_error(err: PipelineError) -> (u8, String) {
    let code = if err.is_input_error() { 2 } else { 3 };
    (code, err.to_string())
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::Enrich(args) => {
            let config = args.into_config(true)?;
            let summary = pipeline::run_enrich(&config).map_err(pipeline_error)?;
            println!(
                "enriched {} records over {} nodes / {} directed edges",
                summary.records, summary.nodes, summary.edges
            );
            println!(
                "communities: {} (modularity {:.6})",
                summary.communities, summary.modularity
            );
            println!(
                "histogram: {} nonempty bins of {}",
                summary.histogram.nonempty_bins(),
                summary.histogram.counts.len()
            );
            for path in &summary.artifacts {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Rank(args) => {
            let config = args.into_config(false)?;
            let summary = pipeline::run_rank(&config).map_err(pipeline_error)?;
            println!("scored {} features", summary.scored_features);
            if summary.top_centralities.is_empty() {
                println!("no centrality columns in the top {}", config.top_k);
            } else {
                println!(
                    "centrality columns in the top {}: {}",
                    config.top_k,
                    summary.top_centralities.join(", ")
                );
            }
            println!("wrote {}", summary.path.display());
            Ok(())
        }
        Command::Evaluate(args) => {
            let config = args.into_config(false)?;
            let summary = pipeline::run_evaluate(&config).map_err(pipeline_error)?;
            println!("{}", summary.baseline.to_summary_line());
            println!("{}", summary.enriched.to_summary_line());
            println!("{}", summary.comparison.to_summary_line());
            if !summary.comparison.passed {
                return Err((
                    3,
                    format!(
                        "enriched accuracy dropped more than epsilon={} below baseline",
                        summary.comparison.epsilon
                    ),
                ));
            }
            Ok(())
        }
        Command::Histogram(args) => {
            let config = args.into_config(true)?;
            let histogram = pipeline::run_histogram(&config).map_err(pipeline_error)?;
            println!(
                "histogram: {} nonempty bins of {}",
                histogram.nonempty_bins(),
                histogram.counts.len()
            );
            println!(
                "wrote {}",
                config.out_dir.join(pipeline::HISTOGRAM_TSV).display()
            );
            Ok(())
        }
        Command::Export(args) => {
            let config = args.into_config(true)?;
            let files = pipeline::run_export(&config).map_err(pipeline_error)?;
            for path in files {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
