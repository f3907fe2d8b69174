//! Endpoint-service bipartite view and its one-mode projection.
//!
//! Left side: source endpoint IPs. Right side: the records' `service`
//! values. Edge weight counts the records joining a source to a service.
//! Service nodes are namespaced with `svc:` in exports so the two sides can
//! never collide.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::dataset::{DatasetSchema, FlowRecord};
use crate::export::{DocEdge, DocNode, GraphDoc};
use crate::graph::UndirectedView;
use crate::synth::EndpointAssignment;

#[derive(Debug, Error)]
pub enum BipartiteError {
    #[error("schema has no categorical column named \"service\"")]
    MissingServiceColumn,
    #[error("assignment {index} points past the record list ({records} records)")]
    AssignmentOutOfRange { index: usize, records: usize },
}

#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    sources: Vec<Ipv4Addr>,
    services: Vec<String>,
    /// Per source: (service index, record count), sorted by service index.
    edges: Vec<Vec<(u32, u64)>>,
}

impl BipartiteGraph {
    /// Weight an edge (src_ip, service) by the number of records with that
    /// source and that service value.
    pub fn build(
        records: &[FlowRecord],
        assignments: &[EndpointAssignment],
        schema: &DatasetSchema,
    ) -> Result<Self, BipartiteError> {
        let service_idx = schema
            .feature_index("service")
            .ok_or(BipartiteError::MissingServiceColumn)?;
        let mut sources = Vec::new();
        let mut source_index: HashMap<Ipv4Addr, u32> = HashMap::new();
        let mut services = Vec::new();
        let mut service_index: HashMap<String, u32> = HashMap::new();
        let mut weights: HashMap<(u32, u32), u64> = HashMap::new();
        for assignment in assignments {
            let record = records.get(assignment.record_index).ok_or(
                BipartiteError::AssignmentOutOfRange {
                    index: assignment.record_index,
                    records: records.len(),
                },
            )?;
            let service = record.categorical(service_idx).unwrap_or("");
            let src = *source_index.entry(assignment.src_ip).or_insert_with(|| {
                sources.push(assignment.src_ip);
                (sources.len() - 1) as u32
            });
            let svc = match service_index.get(service) {
                Some(&idx) => idx,
                None => {
                    let idx = services.len() as u32;
                    services.push(service.to_string());
                    service_index.insert(service.to_string(), idx);
                    idx
                }
            };
            *weights.entry((src, svc)).or_insert(0) += 1;
        }
        let mut edges = vec![Vec::new(); sources.len()];
        for ((src, svc), weight) in weights {
            edges[src as usize].push((svc, weight));
        }
        for list in &mut edges {
            list.sort_unstable_by_key(|(svc, _)| *svc);
        }
        Ok(BipartiteGraph {
            sources,
            services,
            edges,
        })
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn service_count(&self) -> usize {
        self.services.len()
    }

    pub fn sources(&self) -> &[Ipv4Addr] {
        &self.sources
    }

    pub fn services(&self) -> &[String] {
        &self.services
    }

    pub fn edge_weight(&self, source: Ipv4Addr, service: &str) -> Option<u64> {
        let src = self.sources.iter().position(|s| *s == source)? as u32;
        let svc = self.services.iter().position(|s| s == service)? as u32;
        self.edges[src as usize]
            .iter()
            .find(|(s, _)| *s == svc)
            .map(|(_, w)| *w)
    }

    /// Sum of all edge weights; equals the number of records used to build.
    pub fn total_weight(&self) -> u64 {
        self.edges
            .iter()
            .flat_map(|list| list.iter().map(|(_, w)| w))
            .sum()
    }

    /// Unweighted degree (distinct neighbor count) per node, both sides.
    pub fn degrees(&self) -> BipartiteDegrees {
        let source: Vec<usize> = self.edges.iter().map(Vec::len).collect();
        let mut service = vec![0usize; self.services.len()];
        for list in &self.edges {
            for &(svc, _) in list {
                service[svc as usize] += 1;
            }
        }
        BipartiteDegrees { source, service }
    }

    /// One-mode projection onto the sources: weight(u, v) = number of
    /// services both u and v touch. No self-loops.
    pub fn project_left(&self) -> UndirectedView {
        let mut users_of: Vec<Vec<u32>> = vec![Vec::new(); self.services.len()];
        for (src, list) in self.edges.iter().enumerate() {
            for &(svc, _) in list {
                users_of[svc as usize].push(src as u32);
            }
        }
        let mut shared: HashMap<(u32, u32), f64> = HashMap::new();
        for users in &users_of {
            for i in 0..users.len() {
                for j in (i + 1)..users.len() {
                    let (a, b) = (users[i].min(users[j]), users[i].max(users[j]));
                    *shared.entry((a, b)).or_insert(0.0) += 1.0;
                }
            }
        }
        UndirectedView::from_weighted_pairs(
            self.sources.clone(),
            shared.into_iter().map(|((u, v), w)| (u, v, w)),
        )
    }

    /// Export document with a `side` attribute on every node; service labels
    /// carry the `svc:` prefix.
    pub fn export_doc(&self, name: &str) -> GraphDoc {
        let mut nodes: Vec<DocNode> = self
            .sources
            .iter()
            .map(|ip| DocNode {
                label: ip.to_string(),
                attrs: vec![("side".to_string(), "endpoint".to_string())],
            })
            .collect();
        nodes.extend(self.services.iter().map(|svc| DocNode {
            label: format!("svc:{svc}"),
            attrs: vec![("side".to_string(), "service".to_string())],
        }));
        let offset = self.sources.len();
        let mut edges = Vec::new();
        for (src, list) in self.edges.iter().enumerate() {
            for &(svc, weight) in list {
                edges.push(DocEdge {
                    source: src,
                    target: offset + svc as usize,
                    attrs: vec![("weight".to_string(), weight.to_string())],
                });
            }
        }
        GraphDoc {
            name: name.to_string(),
            directed: false,
            nodes,
            edges,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BipartiteDegrees {
    pub source: Vec<usize>,
    pub service: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FieldValue;

    fn ip(last: u8) -> Ipv4Addr {
        Ipv4Addr::new(198, 18, 0, last)
    }

    fn records_with_services(services: &[&str]) -> (DatasetSchema, Vec<FlowRecord>) {
        let schema = DatasetSchema::nsl_kdd();
        let service_idx = schema.feature_index("service").unwrap();
        let records = services
            .iter()
            .map(|svc| {
                let mut fields = vec![FieldValue::Numeric(0.0); schema.feature_count()];
                fields[schema.feature_index("protocol_type").unwrap()] =
                    FieldValue::Categorical("tcp".into());
                fields[service_idx] = FieldValue::Categorical(svc.to_string());
                fields[schema.feature_index("flag").unwrap()] =
                    FieldValue::Categorical("SF".into());
                FlowRecord {
                    fields,
                    class_label: "normal".into(),
                    difficulty: 0,
                }
            })
            .collect();
        (schema, records)
    }

    fn assignments(sources: &[u8]) -> Vec<EndpointAssignment> {
        sources
            .iter()
            .enumerate()
            .map(|(i, &s)| EndpointAssignment {
                record_index: i,
                src_ip: ip(s),
                dst_ip: ip(200),
            })
            .collect()
    }

    #[test]
    fn empty_input_builds_empty_graph() {
        let (schema, records) = records_with_services(&[]);
        let bg = BipartiteGraph::build(&records, &[], &schema).unwrap();
        assert_eq!(bg.source_count(), 0);
        assert_eq!(bg.service_count(), 0);
        assert_eq!(bg.total_weight(), 0);
        let degrees = bg.degrees();
        assert!(degrees.source.is_empty());
        assert!(degrees.service.is_empty());
    }

    #[test]
    fn same_source_same_service_aggregates() {
        let (schema, records) = records_with_services(&["http", "http"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 1]), &schema).unwrap();
        assert_eq!(bg.source_count(), 1);
        assert_eq!(bg.service_count(), 1);
        assert_eq!(bg.edge_weight(ip(1), "http"), Some(2));
    }

    #[test]
    fn right_side_has_one_node_per_distinct_service() {
        let (schema, records) = records_with_services(&["http", "ftp", "smtp", "http"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 1, 2, 3]), &schema).unwrap();
        assert_eq!(bg.service_count(), 3);
        assert_eq!(bg.total_weight(), 4);
    }

    #[test]
    fn star_degrees() {
        let (schema, records) = records_with_services(&["http", "ftp", "smtp", "dns"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 1, 1, 1]), &schema).unwrap();
        let degrees = bg.degrees();
        assert_eq!(degrees.source, vec![4]);
        assert_eq!(degrees.service, vec![1, 1, 1, 1]);
    }

    #[test]
    fn weights_do_not_inflate_degrees() {
        let (schema, records) = records_with_services(&["http", "http"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 1]), &schema).unwrap();
        let degrees = bg.degrees();
        assert_eq!(degrees.source, vec![1]);
        assert_eq!(degrees.service, vec![1]);
    }

    #[test]
    fn projection_counts_shared_services() {
        let (schema, records) = records_with_services(&["http", "http", "ftp"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 2, 1]), &schema).unwrap();
        let projection = bg.project_left();
        assert_eq!(projection.node_count(), 2);
        assert_eq!(projection.edge_count(), 1);
        let u = projection.labels().iter().position(|l| *l == ip(1)).unwrap() as u32;
        let v = projection.labels().iter().position(|l| *l == ip(2)).unwrap() as u32;
        assert_eq!(projection.weight_between(u, v), 1.0);
        assert_eq!(projection.weight_between(v, u), 1.0);
    }

    #[test]
    fn disjoint_services_project_to_no_edges() {
        let (schema, records) = records_with_services(&["http", "ftp"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 2]), &schema).unwrap();
        assert_eq!(bg.project_left().edge_count(), 0);
    }

    #[test]
    fn three_sources_sharing_one_service_form_a_triangle() {
        let (schema, records) = records_with_services(&["http", "http", "http"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 2, 3]), &schema).unwrap();
        let projection = bg.project_left();
        assert_eq!(projection.edge_count(), 3);
        for u in 0..3u32 {
            for v in 0..3u32 {
                if u != v {
                    assert_eq!(projection.weight_between(u, v), 1.0);
                }
            }
        }
    }

    #[test]
    fn export_doc_namespaces_and_two_colors() {
        let (schema, records) = records_with_services(&["http", "ftp"]);
        let bg = BipartiteGraph::build(&records, &assignments(&[1, 2]), &schema).unwrap();
        let doc = bg.export_doc("bipartite");
        assert!(!doc.directed);
        // Every edge joins an endpoint-side node to a service-side node.
        for edge in &doc.edges {
            let side = |i: usize| {
                doc.nodes[i]
                    .attrs
                    .iter()
                    .find(|(k, _)| k == "side")
                    .map(|(_, v)| v.clone())
                    .unwrap()
            };
            assert_eq!(side(edge.source), "endpoint");
            assert_eq!(side(edge.target), "service");
        }
        assert!(doc.nodes.iter().any(|n| n.label == "svc:http"));
    }

    #[test]
    fn total_weight_matches_record_count() {
        let (schema, records) =
            records_with_services(&["http", "ftp", "http", "smtp", "dns", "http"]);
        let bg = BipartiteGraph::build(
            &records,
            &assignments(&[1, 2, 1, 3, 2, 2]),
            &schema,
        )
        .unwrap();
        assert_eq!(bg.total_weight(), 6);
    }
}
