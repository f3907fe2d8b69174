//! Join graph metrics back onto flow records.
//!
//! Every record gains 16 columns: the two synthetic endpoints plus the six
//! centrality scores and the community id of each endpoint.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::centrality::NodeMetrics;
use crate::community::CommunityAssignment;
use crate::dataset::FlowRecord;
use crate::synth::EndpointAssignment;

/// The appended columns, in output order.
pub const ENRICHED_COLUMNS: [&str; 16] = [
    "src_ip",
    "dst_ip",
    "src_degree_centrality",
    "src_in_degree_centrality",
    "src_out_degree_centrality",
    "src_betweenness",
    "src_closeness",
    "src_pagerank",
    "src_community",
    "dst_degree_centrality",
    "dst_in_degree_centrality",
    "dst_out_degree_centrality",
    "dst_betweenness",
    "dst_closeness",
    "dst_pagerank",
    "dst_community",
];

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("endpoint {0} is missing from the computed metrics (pipeline ordering bug)")]
    MissingMetrics(Ipv4Addr),
    #[error("{assignments} assignments do not line up with {records} records")]
    AssignmentMismatch { assignments: usize, records: usize },
}

/// Graph-derived features of one endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphFeatures {
    pub degree_centrality: f64,
    pub in_degree_centrality: f64,
    pub out_degree_centrality: f64,
    pub betweenness: f64,
    pub closeness: f64,
    pub pagerank: f64,
    pub community: u32,
}

impl GraphFeatures {
    fn render(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.degree_centrality,
            self.in_degree_centrality,
            self.out_degree_centrality,
            self.betweenness,
            self.closeness,
            self.pagerank,
            self.community
        )
    }
}

/// A flow record plus the 16 enrichment columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedRecord {
    pub base: FlowRecord,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src: GraphFeatures,
    pub dst: GraphFeatures,
}

impl EnrichedRecord {
    /// The 16 enrichment fields as CSV, float columns at six decimals.
    pub fn render_enrichment(&self) -> String {
        format!(
            "{},{},{},{}",
            self.src_ip,
            self.dst_ip,
            self.src.render(),
            self.dst.render()
        )
    }

    /// Numeric view of the 14 metric columns (ips excluded), in
    /// [`ENRICHED_COLUMNS`] order.
    pub fn metric_values(&self) -> [f64; 14] {
        [
            self.src.degree_centrality,
            self.src.in_degree_centrality,
            self.src.out_degree_centrality,
            self.src.betweenness,
            self.src.closeness,
            self.src.pagerank,
            f64::from(self.src.community),
            self.dst.degree_centrality,
            self.dst.in_degree_centrality,
            self.dst.out_degree_centrality,
            self.dst.betweenness,
            self.dst.closeness,
            self.dst.pagerank,
            f64::from(self.dst.community),
        ]
    }
}

fn features_for(
    ip: Ipv4Addr,
    metrics: &NodeMetrics,
    communities: &CommunityAssignment,
) -> Result<GraphFeatures, EnrichError> {
    let scores = metrics
        .scores_of(ip)
        .ok_or(EnrichError::MissingMetrics(ip))?;
    let community = communities
        .community_of(ip)
        .map_err(|_| EnrichError::MissingMetrics(ip))?;
    Ok(GraphFeatures {
        degree_centrality: scores.degree_centrality,
        in_degree_centrality: scores.in_degree_centrality,
        out_degree_centrality: scores.out_degree_centrality,
        betweenness: scores.betweenness,
        closeness: scores.closeness,
        pagerank: scores.pagerank,
        community,
    })
}

/// Join record i with the metrics of its assigned endpoints. Row count and
/// order are preserved.
pub fn enrich(
    records: Vec<FlowRecord>,
    assignments: &[EndpointAssignment],
    metrics: &NodeMetrics,
    communities: &CommunityAssignment,
) -> Result<Vec<EnrichedRecord>, EnrichError> {
    if records.len() != assignments.len() {
        return Err(EnrichError::AssignmentMismatch {
            assignments: assignments.len(),
            records: records.len(),
        });
    }
    records
        .into_iter()
        .zip(assignments)
        .map(|(base, assignment)| {
            Ok(EnrichedRecord {
                base,
                src_ip: assignment.src_ip,
                dst_ip: assignment.dst_ip,
                src: features_for(assignment.src_ip, metrics, communities)?,
                dst: features_for(assignment.dst_ip, metrics, communities)?,
            })
        })
        .collect()
}
