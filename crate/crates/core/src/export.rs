//! DOT and GraphML text exports with deterministic ordering.
//!
//! Node and edge attributes carry the community/partition data that external
//! viewers use for coloring. Nodes are emitted in index order and edges in
//! (source, target) order, so identical graphs always serialize to identical
//! bytes.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::community::CommunityAssignment;
use crate::graph::FlowGraph;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unknown export format {0:?} (expected dot or graphml)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Graphml,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::Graphml => "graphml",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "graphml" => Ok(ExportFormat::Graphml),
            other => Err(ExportError::UnknownFormat(other.to_string())),
        }
    }
}

impl std::fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.extension())
    }
}

/// A graph ready for serialization: labeled nodes with ordered attribute
/// lists, edges referencing nodes by position.
#[derive(Debug, Clone)]
pub struct GraphDoc {
    pub name: String,
    pub directed: bool,
    pub nodes: Vec<DocNode>,
    pub edges: Vec<DocEdge>,
}

#[derive(Debug, Clone)]
pub struct DocNode {
    pub label: String,
    pub attrs: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct DocEdge {
    pub source: usize,
    pub target: usize,
    pub attrs: Vec<(String, String)>,
}

impl GraphDoc {
    /// Plain directed view of a flow graph; node labels are the endpoint IPs,
    /// edges carry connection counts and byte totals.
    pub fn from_flow_graph(graph: &FlowGraph, name: &str) -> Self {
        let nodes = graph
            .node_ips()
            .iter()
            .map(|ip| DocNode {
                label: ip.to_string(),
                attrs: Vec::new(),
            })
            .collect();
        let edges = graph
            .edges()
            .map(|(src, dst, w)| DocEdge {
                source: src as usize,
                target: dst as usize,
                attrs: vec![
                    ("weight".to_string(), w.connection_count.to_string()),
                    ("src_bytes".to_string(), w.src_byte_total.to_string()),
                    ("dst_bytes".to_string(), w.dst_byte_total.to_string()),
                ],
            })
            .collect();
        GraphDoc {
            name: name.to_string(),
            directed: true,
            nodes,
            edges,
        }
    }

    /// Directed view with a `community` attribute on every node.
    pub fn from_flow_graph_with_communities(
        graph: &FlowGraph,
        communities: &CommunityAssignment,
        name: &str,
    ) -> Self {
        let mut doc = GraphDoc::from_flow_graph(graph, name);
        for (index, node) in doc.nodes.iter_mut().enumerate() {
            let community = communities
                .community_of(graph.node_ip(index as u32))
                .map(|c| c.to_string())
                .unwrap_or_default();
            node.attrs.push(("community".to_string(), community));
        }
        doc
    }
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn render_dot(doc: &GraphDoc) -> String {
    let mut out = String::new();
    let (keyword, arrow) = if doc.directed {
        ("digraph", "->")
    } else {
        ("graph", "--")
    };
    let _ = writeln!(out, "{} {} {{", keyword, doc.name);
    for (index, node) in doc.nodes.iter().enumerate() {
        let mut attrs = vec![format!("label=\"{}\"", dot_escape(&node.label))];
        attrs.extend(
            node.attrs
                .iter()
                .map(|(k, v)| format!("{}=\"{}\"", k, dot_escape(v))),
        );
        let _ = writeln!(out, "  n{} [{}];", index, attrs.join(", "));
    }
    for edge in &doc.edges {
        if edge.attrs.is_empty() {
            let _ = writeln!(out, "  n{} {} n{};", edge.source, arrow, edge.target);
        } else {
            let attrs: Vec<String> = edge
                .attrs
                .iter()
                .map(|(k, v)| format!("{}=\"{}\"", k, dot_escape(v)))
                .collect();
            let _ = writeln!(
                out,
                "  n{} {} n{} [{}];",
                edge.source,
                arrow,
                edge.target,
                attrs.join(", ")
            );
        }
    }
    out.push_str("}\n");
    out
}

fn render_graphml(doc: &GraphDoc) -> String {
    // Collect attribute keys in first-seen order: label first, then node
    // attributes, then edge attributes.
    let mut keys: Vec<(String, &'static str)> = vec![("label".to_string(), "node")];
    for node in &doc.nodes {
        for (name, _) in &node.attrs {
            if !keys.iter().any(|(k, f)| k == name && *f == "node") {
                keys.push((name.clone(), "node"));
            }
        }
    }
    for edge in &doc.edges {
        for (name, _) in &edge.attrs {
            if !keys.iter().any(|(k, f)| k == name && *f == "edge") {
                keys.push((name.clone(), "edge"));
            }
        }
    }
    let key_id = |name: &str, target: &str| -> String {
        let pos = keys
            .iter()
            .position(|(k, f)| k == name && *f == target)
            .expect("key registered above");
        format!("d{pos}")
    };

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (pos, (name, target)) in keys.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <key id=\"d{}\" for=\"{}\" attr.name=\"{}\" attr.type=\"string\"/>",
            pos,
            target,
            xml_escape(name)
        );
    }
    let default_dir = if doc.directed { "directed" } else { "undirected" };
    let _ = writeln!(
        out,
        "  <graph id=\"{}\" edgedefault=\"{}\">",
        xml_escape(&doc.name),
        default_dir
    );
    for (index, node) in doc.nodes.iter().enumerate() {
        let _ = writeln!(out, "    <node id=\"n{index}\">");
        let _ = writeln!(
            out,
            "      <data key=\"{}\">{}</data>",
            key_id("label", "node"),
            xml_escape(&node.label)
        );
        for (name, value) in &node.attrs {
            let _ = writeln!(
                out,
                "      <data key=\"{}\">{}</data>",
                key_id(name, "node"),
                xml_escape(value)
            );
        }
        out.push_str("    </node>\n");
    }
    for edge in &doc.edges {
        if edge.attrs.is_empty() {
            let _ = writeln!(
                out,
                "    <edge source=\"n{}\" target=\"n{}\"/>",
                edge.source, edge.target
            );
        } else {
            let _ = writeln!(
                out,
                "    <edge source=\"n{}\" target=\"n{}\">",
                edge.source, edge.target
            );
            for (name, value) in &edge.attrs {
                let _ = writeln!(
                    out,
                    "      <data key=\"{}\">{}</data>",
                    key_id(name, "edge"),
                    xml_escape(value)
                );
            }
            out.push_str("    </edge>\n");
        }
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

/// Serialize a graph document in the chosen format.
pub fn export_graph(doc: &GraphDoc, format: ExportFormat) -> String {
    match format {
        ExportFormat::Dot => render_dot(doc),
        ExportFormat::Graphml => render_graphml(doc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_doc() -> GraphDoc {
        GraphDoc {
            name: "test".to_string(),
            directed: true,
            nodes: vec![
                DocNode {
                    label: "198.18.0.1".to_string(),
                    attrs: vec![],
                },
                DocNode {
                    label: "198.18.0.2".to_string(),
                    attrs: vec![],
                },
            ],
            edges: vec![DocEdge {
                source: 0,
                target: 1,
                attrs: vec![("weight".to_string(), "3".to_string())],
            }],
        }
    }

    #[test]
    fn dot_has_exactly_one_edge_statement() {
        let text = export_graph(&two_node_doc(), ExportFormat::Dot);
        assert_eq!(text.matches("->").count(), 1);
        assert!(text.starts_with("digraph test {"));
        assert!(text.contains("n0 -> n1"));
    }

    #[test]
    fn community_attribute_appears_on_every_node() {
        let mut doc = two_node_doc();
        for (i, node) in doc.nodes.iter_mut().enumerate() {
            node.attrs.push(("community".to_string(), i.to_string()));
        }
        let dot = export_graph(&doc, ExportFormat::Dot);
        assert_eq!(dot.matches("community=").count(), 2);
        let gml = export_graph(&doc, ExportFormat::Graphml);
        assert!(gml.contains("attr.name=\"community\""));
        assert_eq!(gml.matches("<node id=").count(), 2);
    }

    #[test]
    fn export_is_deterministic() {
        let doc = two_node_doc();
        assert_eq!(
            export_graph(&doc, ExportFormat::Dot),
            export_graph(&doc, ExportFormat::Dot)
        );
        assert_eq!(
            export_graph(&doc, ExportFormat::Graphml),
            export_graph(&doc, ExportFormat::Graphml)
        );
    }

    #[test]
    fn graphml_declares_keys_and_direction() {
        let text = export_graph(&two_node_doc(), ExportFormat::Graphml);
        assert!(text.contains("edgedefault=\"directed\""));
        assert!(text.contains("attr.name=\"label\""));
        assert!(text.contains("attr.name=\"weight\""));
        assert!(text.contains("<edge source=\"n0\" target=\"n1\">"));
    }

    #[test]
    fn undirected_doc_uses_undirected_syntax() {
        let mut doc = two_node_doc();
        doc.directed = false;
        let dot = export_graph(&doc, ExportFormat::Dot);
        assert!(dot.starts_with("graph test {"));
        assert!(dot.contains("n0 -- n1"));
        let gml = export_graph(&doc, ExportFormat::Graphml);
        assert!(gml.contains("edgedefault=\"undirected\""));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("dot".parse::<ExportFormat>().unwrap(), ExportFormat::Dot);
        assert_eq!(
            "graphml".parse::<ExportFormat>().unwrap(),
            ExportFormat::Graphml
        );
        assert!(matches!(
            "svg".parse::<ExportFormat>(),
            Err(ExportError::UnknownFormat(_))
        ));
    }

    #[test]
    fn labels_are_escaped() {
        let mut doc = two_node_doc();
        doc.nodes[0].label = "a\"b<c>&".to_string();
        let dot = export_graph(&doc, ExportFormat::Dot);
        assert!(dot.contains("label=\"a\\\"b<c>&\""));
        let gml = export_graph(&doc, ExportFormat::Graphml);
        assert!(gml.contains("a&quot;b&lt;c&gt;&amp;"));
    }
}
