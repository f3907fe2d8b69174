//! Directed weighted flow graph over pseudonym endpoints.
//!
//! Repeated (src, dst) assignments collapse into one edge whose weight keeps
//! the connection count and the aggregated byte totals. Nodes are indexed
//! densely in order of first appearance so the centrality kernels can work
//! on plain arrays; the graph is immutable after construction and safe to
//! share across threads.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::dataset::{DatasetSchema, FlowRecord};
use crate::synth::{EdgePool, EndpointAssignment};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(Ipv4Addr),
}

/// Aggregated weight of one directed edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeWeight {
    pub connection_count: u64,
    pub src_byte_total: u64,
    pub dst_byte_total: u64,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    nodes: Vec<Ipv4Addr>,
    index: HashMap<Ipv4Addr, u32>,
    /// Out-neighbors per node, sorted by target index.
    out_adj: Vec<Vec<(u32, EdgeWeight)>>,
    /// In-neighbors per node, sorted by source index.
    in_adj: Vec<Vec<u32>>,
    edge_count: usize,
}

impl FlowGraph {
    fn from_parts(nodes: Vec<Ipv4Addr>, edges: HashMap<(u32, u32), EdgeWeight>) -> Self {
        let index: HashMap<Ipv4Addr, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, ip)| (*ip, i as u32))
            .collect();
        let mut out_adj = vec![Vec::new(); nodes.len()];
        let mut in_adj = vec![Vec::new(); nodes.len()];
        let edge_count = edges.len();
        for ((src, dst), weight) in edges {
            out_adj[src as usize].push((dst, weight));
            in_adj[dst as usize].push(src);
        }
        for list in &mut out_adj {
            list.sort_unstable_by_key(|(dst, _)| *dst);
        }
        for list in &mut in_adj {
            list.sort_unstable();
        }
        FlowGraph {
            nodes,
            index,
            out_adj,
            in_adj,
            edge_count,
        }
    }

    /// Aggregate endpoint assignments into the directed flow graph. Nodes are
    /// indexed in order of first appearance (src before dst per assignment);
    /// byte totals come from the records' src_bytes/dst_bytes columns when the
    /// schema carries them.
    pub fn build(
        assignments: &[EndpointAssignment],
        records: &[FlowRecord],
        schema: &DatasetSchema,
    ) -> Self {
        let src_bytes_idx = schema.feature_index("src_bytes");
        let dst_bytes_idx = schema.feature_index("dst_bytes");
        let mut nodes = Vec::new();
        let mut index: HashMap<Ipv4Addr, u32> = HashMap::new();
        let mut intern = |ip: Ipv4Addr, nodes: &mut Vec<Ipv4Addr>| -> u32 {
            *index.entry(ip).or_insert_with(|| {
                nodes.push(ip);
                (nodes.len() - 1) as u32
            })
        };
        let mut edges: HashMap<(u32, u32), EdgeWeight> = HashMap::new();
        for assignment in assignments {
            assert!(
                assignment.record_index < records.len(),
                "assignment points past the record list"
            );
            let record = &records[assignment.record_index];
            let src = intern(assignment.src_ip, &mut nodes);
            let dst = intern(assignment.dst_ip, &mut nodes);
            let entry = edges.entry((src, dst)).or_default();
            entry.connection_count += 1;
            if let Some(i) = src_bytes_idx {
                entry.src_byte_total += record.numeric(i).unwrap_or(0.0) as u64;
            }
            if let Some(i) = dst_bytes_idx {
                entry.dst_byte_total += record.numeric(i).unwrap_or(0.0) as u64;
            }
        }
        FlowGraph::from_parts(nodes, edges)
    }

    /// View the raw generated pool as a graph: every endpoint is a node
    /// (isolated ones included), every pair an edge of count 1.
    pub fn from_edge_pool(pool: &EdgePool) -> Self {
        let edges = pool
            .pairs
            .iter()
            .map(|&(src, dst)| {
                (
                    (src, dst),
                    EdgeWeight {
                        connection_count: 1,
                        src_byte_total: 0,
                        dst_byte_total: 0,
                    },
                )
            })
            .collect();
        FlowGraph::from_parts(pool.endpoints.clone(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node_ip(&self, index: u32) -> Ipv4Addr {
        self.nodes[index as usize]
    }

    pub fn node_ips(&self) -> &[Ipv4Addr] {
        &self.nodes
    }

    pub fn node_index(&self, ip: Ipv4Addr) -> Option<u32> {
        self.index.get(&ip).copied()
    }

    pub fn out_neighbors(&self, index: u32) -> &[(u32, EdgeWeight)] {
        &self.out_adj[index as usize]
    }

    pub fn in_neighbors(&self, index: u32) -> &[u32] {
        &self.in_adj[index as usize]
    }

    pub fn out_degree_at(&self, index: u32) -> usize {
        self.out_adj[index as usize].len()
    }

    pub fn in_degree_at(&self, index: u32) -> usize {
        self.in_adj[index as usize].len()
    }

    pub fn total_degree_at(&self, index: u32) -> usize {
        self.out_degree_at(index) + self.in_degree_at(index)
    }

    fn require(&self, ip: Ipv4Addr) -> Result<u32, GraphError> {
        self.node_index(ip).ok_or(GraphError::UnknownNode(ip))
    }

    /// Distinct out-neighbor count of `ip`.
    pub fn out_degree(&self, ip: Ipv4Addr) -> Result<usize, GraphError> {
        Ok(self.out_degree_at(self.require(ip)?))
    }

    /// Distinct in-neighbor count of `ip`.
    pub fn in_degree(&self, ip: Ipv4Addr) -> Result<usize, GraphError> {
        Ok(self.in_degree_at(self.require(ip)?))
    }

    /// In-degree plus out-degree; a reciprocal pair u<->v contributes 2.
    pub fn total_degree(&self, ip: Ipv4Addr) -> Result<usize, GraphError> {
        Ok(self.total_degree_at(self.require(ip)?))
    }

    pub fn edge_weight(&self, src: Ipv4Addr, dst: Ipv4Addr) -> Option<EdgeWeight> {
        let src = self.node_index(src)?;
        let dst = self.node_index(dst)?;
        self.out_adj[src as usize]
            .iter()
            .find(|(d, _)| *d == dst)
            .map(|(_, w)| *w)
    }

    /// Edges as (src, dst, weight) triples, ordered by (src, dst) index.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, EdgeWeight)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(src, list)| list.iter().map(move |(dst, w)| (src as u32, *dst, *w)))
    }

    /// Symmetrize: weight(u, v) = connection_count(u->v) + connection_count(v->u).
    pub fn to_undirected(&self) -> UndirectedView {
        let pairs = self.edges().map(|(src, dst, w)| {
            (src, dst, w.connection_count as f64)
        });
        UndirectedView::from_weighted_pairs(self.nodes.clone(), pairs)
    }
}

/// Symmetrized weighted graph used by modularity and Louvain. Edge weights
/// from both directions are summed; self-loops are dropped.
#[derive(Debug, Clone)]
pub struct UndirectedView {
    labels: Vec<Ipv4Addr>,
    adj: Vec<Vec<(u32, f64)>>,
    /// 2m: every edge counted from both endpoints.
    total_weight: f64,
}

impl UndirectedView {
    /// Build from directed or undirected weighted pairs; (u, v) and (v, u)
    /// contributions accumulate into one symmetric weight.
    pub fn from_weighted_pairs<I>(labels: Vec<Ipv4Addr>, pairs: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut merged: HashMap<(u32, u32), f64> = HashMap::new();
        for (u, v, w) in pairs {
            if u == v {
                continue;
            }
            let key = if u < v { (u, v) } else { (v, u) };
            *merged.entry(key).or_insert(0.0) += w;
        }
        let mut adj = vec![Vec::new(); labels.len()];
        let mut total_weight = 0.0;
        for ((u, v), w) in merged {
            adj[u as usize].push((v, w));
            adj[v as usize].push((u, w));
            total_weight += 2.0 * w;
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|(v, _)| *v);
        }
        UndirectedView {
            labels,
            adj,
            total_weight,
        }
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, index: u32) -> Ipv4Addr {
        self.labels[index as usize]
    }

    pub fn labels(&self) -> &[Ipv4Addr] {
        &self.labels
    }

    pub fn neighbors(&self, index: u32) -> &[(u32, f64)] {
        &self.adj[index as usize]
    }

    pub fn weighted_degree(&self, index: u32) -> f64 {
        self.adj[index as usize].iter().map(|(_, w)| w).sum()
    }

    /// Sum of weights over both directions (2m).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight_between(&self, u: u32, v: u32) -> f64 {
        self.adj[u as usize]
            .iter()
            .find(|(n, _)| *n == v)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }
}
