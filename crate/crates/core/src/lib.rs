//! Graph-theoretic enrichment for NSL-KDD-format network flow datasets.
//!
//! The toolkit attaches synthetic pseudonymized endpoints to each flow
//! record, builds a directed graph from those connections, computes
//! centrality scores and Louvain communities, and appends the results as 16
//! new feature columns. A univariate feature ranking and a deterministic
//! decision-tree comparison validate that the added columns carry signal
//! without degrading a baseline classifier.
//!
//! Module map:
//! - [`dataset`]: NSL-KDD parsing, schemas, the enriched CSV format
//! - [`synth`]: pseudonym endpoints, G(n, p) edge pool, record assignment
//! - [`graph`]: the directed weighted flow graph and its undirected view
//! - [`centrality`]: degree/betweenness/closeness/PageRank and histograms
//! - [`community`]: modularity and Louvain
//! - [`bipartite`]: endpoint-service view and one-mode projection
//! - [`enrich`]: the metric join producing enriched records
//! - [`select`]: ANOVA-F / chi2 feature ranking
//! - [`tree`]: Gini decision tree, evaluation, baseline comparison
//! - [`export`]: DOT and GraphML writers
//! - [`pipeline`]: stage orchestration, artifacts, manifest
//! - [`sample`]: seeded NSL-KDD-format sample data for tests and demos

pub mod bipartite;
pub mod centrality;
pub mod community;
pub mod dataset;
pub mod enrich;
pub mod export;
pub mod graph;
pub mod pipeline;
pub mod sample;
pub mod select;
pub mod synth;
pub mod tree;
