//! Centrality kernels over the directed flow graph.
//!
//! All shortest paths are unweighted hop counts. Betweenness uses Brandes'
//! dependency accumulation and may fan out per-source work across a rayon
//! pool (feature `parallel`); per-source contributions are merged in
//! ascending source order inside fixed-size chunks, so the result does not
//! depend on the worker count.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::Write;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::graph::FlowGraph;

#[derive(Debug, Error)]
pub enum CentralityError {
    #[error("graph has {nodes} nodes but the kernel needs at least {required}")]
    GraphTooSmall { nodes: usize, required: usize },
    #[error("pagerank did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no metric values to bin")]
    EmptyMetrics,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Degree-normalized centralities per node: in/out are in [0, 1], the total
/// variant can reach 2 when reciprocal edges exist.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DegreeCentrality {
    pub total: f64,
    pub in_: f64,
    pub out: f64,
}

/// All centrality scores for one node.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeScores {
    pub degree_centrality: f64,
    pub in_degree_centrality: f64,
    pub out_degree_centrality: f64,
    pub betweenness: f64,
    pub closeness: f64,
    pub pagerank: f64,
}

/// Per-node centrality table keyed by pseudonym IP.
#[derive(Debug, Clone)]
pub struct NodeMetrics {
    labels: Vec<Ipv4Addr>,
    index: HashMap<Ipv4Addr, u32>,
    scores: Vec<NodeScores>,
}

impl NodeMetrics {
    /// Assemble a table from separately computed kernels. Panics when the
    /// lengths disagree.
    pub fn from_scores(labels: Vec<Ipv4Addr>, scores: Vec<NodeScores>) -> Self {
        assert_eq!(labels.len(), scores.len(), "one score row per label");
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, ip)| (*ip, i as u32))
            .collect();
        NodeMetrics {
            labels,
            index,
            scores,
        }
    }

    /// Run every kernel with default PageRank parameters.
    pub fn compute(graph: &FlowGraph) -> Result<Self, CentralityError> {
        let degrees = degree_centrality(graph)?;
        let betweenness = betweenness_centrality(graph)?;
        let closeness = closeness_centrality(graph)?;
        let pagerank = pagerank(graph, &PagerankConfig::default())?;
        let scores = (0..graph.node_count())
            .map(|i| NodeScores {
                degree_centrality: degrees[i].total,
                in_degree_centrality: degrees[i].in_,
                out_degree_centrality: degrees[i].out,
                betweenness: betweenness[i],
                closeness: closeness[i],
                pagerank: pagerank[i],
            })
            .collect();
        Ok(NodeMetrics::from_scores(graph.node_ips().to_vec(), scores))
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Ipv4Addr] {
        &self.labels
    }

    pub fn scores_at(&self, index: u32) -> &NodeScores {
        &self.scores[index as usize]
    }

    pub fn scores_of(&self, ip: Ipv4Addr) -> Option<&NodeScores> {
        self.index.get(&ip).map(|i| &self.scores[*i as usize])
    }

    pub fn total_degree_values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.degree_centrality).collect()
    }

    /// Header-bearing CSV keyed by IP, with the community column appended by
    /// the caller when available.
    pub fn write_csv<W: Write>(
        &self,
        communities: Option<&crate::community::CommunityAssignment>,
        mut writer: W,
    ) -> Result<(), CentralityError> {
        writeln!(
            writer,
            "ip,degree_centrality,in_degree_centrality,out_degree_centrality,\
             betweenness,closeness,pagerank,community"
        )?;
        for (i, ip) in self.labels.iter().enumerate() {
            let s = &self.scores[i];
            let community = communities
                .and_then(|c| c.community_of(*ip).ok())
                .map(|c| c.to_string())
                .unwrap_or_default();
            writeln!(
                writer,
                "{ip},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{community}",
                s.degree_centrality,
                s.in_degree_centrality,
                s.out_degree_centrality,
                s.betweenness,
                s.closeness,
                s.pagerank,
            )?;
        }
        Ok(())
    }
}

/// Degree centralities normalized by n-1.
pub fn degree_centrality(graph: &FlowGraph) -> Result<Vec<DegreeCentrality>, CentralityError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(CentralityError::GraphTooSmall {
            nodes: n,
            required: 2,
        });
    }
    let norm = 1.0 / (n as f64 - 1.0);
    Ok((0..n as u32)
        .map(|v| DegreeCentrality {
            total: graph.total_degree_at(v) as f64 * norm,
            in_: graph.in_degree_at(v) as f64 * norm,
            out: graph.out_degree_at(v) as f64 * norm,
        })
        .collect())
}

/// One Brandes source sweep: BFS out of `source`, then dependency
/// accumulation back down the shortest-path DAG. Adds into `acc`.
fn brandes_from_source(graph: &FlowGraph, source: u32, acc: &mut [f64]) {
    let n = graph.node_count();
    let mut stack: Vec<u32> = Vec::with_capacity(n);
    let mut predecessors: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    sigma[source as usize] = 1.0;
    dist[source as usize] = 0;

    let mut queue = VecDeque::new();
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        stack.push(v);
        for &(w, _) in graph.out_neighbors(v) {
            if dist[w as usize] < 0 {
                dist[w as usize] = dist[v as usize] + 1;
                queue.push_back(w);
            }
            if dist[w as usize] == dist[v as usize] + 1 {
                sigma[w as usize] += sigma[v as usize];
                predecessors[w as usize].push(v);
            }
        }
    }

    let mut delta = vec![0.0f64; n];
    while let Some(w) = stack.pop() {
        for &v in &predecessors[w as usize] {
            delta[v as usize] +=
                (sigma[v as usize] / sigma[w as usize]) * (1.0 + delta[w as usize]);
        }
        if w != source {
            acc[w as usize] += delta[w as usize];
        }
    }
}

fn betweenness_normalize(graph: &FlowGraph, mut raw: Vec<f64>) -> Vec<f64> {
    let n = graph.node_count() as f64;
    let norm = 1.0 / ((n - 1.0) * (n - 2.0));
    for value in &mut raw {
        *value *= norm;
    }
    raw
}

fn check_betweenness_size(graph: &FlowGraph) -> Result<(), CentralityError> {
    if graph.node_count() < 3 {
        return Err(CentralityError::GraphTooSmall {
            nodes: graph.node_count(),
            required: 3,
        });
    }
    Ok(())
}

/// Brandes betweenness, single-threaded. Normalized by (n-1)(n-2).
pub fn betweenness_centrality_serial(graph: &FlowGraph) -> Result<Vec<f64>, CentralityError> {
    check_betweenness_size(graph)?;
    let n = graph.node_count();
    let mut acc = vec![0.0f64; n];
    for source in 0..n as u32 {
        brandes_from_source(graph, source, &mut acc);
    }
    Ok(betweenness_normalize(graph, acc))
}

/// Brandes betweenness using the current rayon pool. Sources are processed
/// in fixed chunks whose partial sums are folded in ascending order, so any
/// worker count produces the same bytes.
#[cfg(feature = "parallel")]
pub fn betweenness_centrality(graph: &FlowGraph) -> Result<Vec<f64>, CentralityError> {
    use rayon::prelude::*;

    check_betweenness_size(graph)?;
    let n = graph.node_count();
    // Chunk layout depends only on n, never on the worker count.
    let chunk_len = n.div_ceil(64).max(1);
    let chunk_starts: Vec<usize> = (0..n).step_by(chunk_len).collect();
    let partials: Vec<Vec<f64>> = chunk_starts
        .into_par_iter()
        .map(|start| {
            let mut acc = vec![0.0f64; n];
            for source in start..(start + chunk_len).min(n) {
                brandes_from_source(graph, source as u32, &mut acc);
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0f64; n];
    for partial in partials {
        for (total, value) in acc.iter_mut().zip(partial) {
            *total += value;
        }
    }
    Ok(betweenness_normalize(graph, acc))
}

#[cfg(not(feature = "parallel"))]
pub fn betweenness_centrality(graph: &FlowGraph) -> Result<Vec<f64>, CentralityError> {
    betweenness_centrality_serial(graph)
}

/// Closeness over incoming distances with the reachable-set correction:
/// closeness(v) = ((r-1)/sum_d) * ((r-1)/(n-1)) where r counts the nodes
/// that can reach v (v included); 0 when nothing reaches v.
pub fn closeness_centrality(graph: &FlowGraph) -> Result<Vec<f64>, CentralityError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(CentralityError::GraphTooSmall {
            nodes: n,
            required: 2,
        });
    }
    let mut result = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    for v in 0..n as u32 {
        dist.fill(-1);
        dist[v as usize] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(v);
        let mut reached = 1u64;
        let mut dist_sum = 0u64;
        while let Some(u) = queue.pop_front() {
            for &w in graph.in_neighbors(u) {
                if dist[w as usize] < 0 {
                    dist[w as usize] = dist[u as usize] + 1;
                    reached += 1;
                    dist_sum += dist[w as usize] as u64;
                    queue.push_back(w);
                }
            }
        }
        if reached > 1 {
            let r = reached as f64;
            result[v as usize] = ((r - 1.0) / dist_sum as f64) * ((r - 1.0) / (n as f64 - 1.0));
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy)]
pub struct PagerankConfig {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PagerankConfig {
    fn default() -> Self {
        PagerankConfig {
            damping: 0.85,
            tolerance: 1e-9,
            max_iterations: 100,
        }
    }
}

/// Power iteration with uniform teleport; dangling mass is redistributed
/// uniformly every step. Converged when the L1 change drops below tolerance.
pub fn pagerank(graph: &FlowGraph, config: &PagerankConfig) -> Result<Vec<f64>, CentralityError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(CentralityError::GraphTooSmall {
            nodes: 0,
            required: 1,
        });
    }
    let nf = n as f64;
    let d = config.damping;
    let teleport = (1.0 - d) / nf;
    let mut ranks = vec![1.0 / nf; n];
    let mut next = vec![0.0f64; n];
    let out_degrees: Vec<usize> = (0..n as u32).map(|v| graph.out_degree_at(v)).collect();

    for _ in 0..config.max_iterations {
        let dangling_mass: f64 = (0..n)
            .filter(|&v| out_degrees[v] == 0)
            .map(|v| ranks[v])
            .sum();
        let base = teleport + d * dangling_mass / nf;
        next.fill(base);
        for v in 0..n as u32 {
            let degree = out_degrees[v as usize];
            if degree == 0 {
                continue;
            }
            let share = d * ranks[v as usize] / degree as f64;
            for &(w, _) in graph.out_neighbors(v) {
                next[w as usize] += share;
            }
        }
        let residual: f64 = ranks
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut ranks, &mut next);
        if residual < config.tolerance {
            return Ok(ranks);
        }
    }
    let residual: f64 = ranks
        .iter()
        .zip(&next)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Err(CentralityError::NoConvergence {
        iterations: config.max_iterations,
        residual,
    })
}

/// Equal-width histogram; the last bin is right-inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramData {
    /// bin_count + 1 strictly increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HistogramData {
    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Two-column export: `bin_upper_edge<TAB>count`.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), CentralityError> {
        for (i, count) in self.counts.iter().enumerate() {
            writeln!(writer, "{:.6}\t{}", self.edges[i + 1], count)?;
        }
        Ok(())
    }
}

/// Bin the given centrality values into `bin_count` equal-width bins over
/// [min, max]. A degenerate range (all values equal) keeps everything in the
/// first bin.
pub fn degree_histogram(values: &[f64], bin_count: usize) -> Result<HistogramData, CentralityError> {
    assert!(bin_count >= 1, "bin_count must be at least 1");
    if values.is_empty() {
        return Err(CentralityError::EmptyMetrics);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let width = if range > 0.0 {
        range / bin_count as f64
    } else {
        1.0
    };
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| min + width * i as f64)
        .collect();
    let mut counts = vec![0u64; bin_count];
    for &value in values {
        let mut bin = ((value - min) / width).floor() as usize;
        if bin >= bin_count {
            bin = bin_count - 1; // right-inclusive last bin
        }
        counts[bin] += 1;
    }
    Ok(HistogramData { edges, counts })
}
