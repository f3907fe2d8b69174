//! Louvain community detection with modularity scoring.
//!
//! Runs on the symmetrized [`UndirectedView`]; classical modularity is
//! defined on undirected weights. Node visit order is reshuffled from the
//! seed on every pass, moves require a modularity gain above 1e-9, and
//! community ids are relabeled densely by first appearance, so a fixed seed
//! always reproduces the same partition.

use std::collections::HashMap;
use std::io::Write;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::UndirectedView;

const GAIN_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("graph has no edges; modularity is undefined")]
    EmptyGraph,
    #[error("partition covers {found} nodes but the graph has {expected}")]
    PartitionMismatch { found: usize, expected: usize },
    #[error("unknown node {0}")]
    UnknownNode(Ipv4Addr),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A dense partition of the graph nodes plus its modularity score.
#[derive(Debug, Clone)]
pub struct CommunityAssignment {
    labels: Vec<Ipv4Addr>,
    index: HashMap<Ipv4Addr, u32>,
    community: Vec<u32>,
    pub modularity: f64,
}

impl CommunityAssignment {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn community_count(&self) -> usize {
        self.community.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn community_at(&self, index: u32) -> u32 {
        self.community[index as usize]
    }

    pub fn community_of(&self, ip: Ipv4Addr) -> Result<u32, CommunityError> {
        self.index
            .get(&ip)
            .map(|i| self.community[*i as usize])
            .ok_or(CommunityError::UnknownNode(ip))
    }

    pub fn memberships(&self) -> &[u32] {
        &self.community
    }

    /// Two-column export: `ip<TAB>community_id` in node-index order.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), CommunityError> {
        for (ip, community) in self.labels.iter().zip(&self.community) {
            writeln!(writer, "{ip}\t{community}")?;
        }
        Ok(())
    }
}

/// Newman modularity of `partition` over the symmetric weights:
/// Q = (1/2m) * sum_uv [A_uv - k_u k_v / 2m] * delta(c_u, c_v).
pub fn modularity(view: &UndirectedView, partition: &[u32]) -> Result<f64, CommunityError> {
    if partition.len() != view.node_count() {
        return Err(CommunityError::PartitionMismatch {
            found: partition.len(),
            expected: view.node_count(),
        });
    }
    let two_m = view.total_weight();
    if two_m <= 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    let community_count = partition.iter().max().map_or(0, |m| *m as usize + 1);
    let mut intra = vec![0.0f64; community_count]; // both directions counted
    let mut total = vec![0.0f64; community_count];
    for u in 0..view.node_count() as u32 {
        let cu = partition[u as usize] as usize;
        total[cu] += view.weighted_degree(u);
        for &(v, w) in view.neighbors(u) {
            if partition[v as usize] as usize == cu {
                intra[cu] += w;
            }
        }
    }
    let mut q = 0.0;
    for c in 0..community_count {
        q += intra[c] / two_m - (total[c] / two_m).powi(2);
    }
    Ok(q)
}

/// Working graph for the aggregation phase. `self_weight` keeps the doubled
/// internal weight of each super-node; `adj` holds only cross edges.
struct LevelGraph {
    adj: Vec<Vec<(u32, f64)>>,
    self_weight: Vec<f64>,
    degree: Vec<f64>,
}

impl LevelGraph {
    fn from_view(view: &UndirectedView) -> Self {
        let n = view.node_count();
        let adj: Vec<Vec<(u32, f64)>> = (0..n as u32)
            .map(|u| view.neighbors(u).to_vec())
            .collect();
        let degree = (0..n as u32).map(|u| view.weighted_degree(u)).collect();
        LevelGraph {
            adj,
            self_weight: vec![0.0; n],
            degree,
        }
    }

    fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// One sweep phase: move nodes between communities while any move
    /// improves modularity by more than the gain threshold.
    fn local_moves(&self, two_m: f64, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<u32>, bool) {
        let n = self.node_count();
        let mut community: Vec<u32> = (0..n as u32).collect();
        let mut community_total: Vec<f64> = self.degree.clone();
        let mut improved = false;
        let mut order: Vec<u32> = (0..n as u32).collect();
        loop {
            let mut moved_this_pass = false;
            // Seeded Fisher-Yates reshuffle per pass.
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for &u in &order {
                let k_u = self.degree[u as usize];
                let current = community[u as usize];
                // Weights from u to each neighboring community.
                let mut weight_to: HashMap<u32, f64> = HashMap::new();
                for &(v, w) in &self.adj[u as usize] {
                    if v != u {
                        *weight_to.entry(community[v as usize]).or_insert(0.0) += w;
                    }
                }
                // Detach u, then score candidate communities.
                community_total[current as usize] -= k_u;
                let score = |c: u32| -> f64 {
                    let w = weight_to.get(&c).copied().unwrap_or(0.0);
                    w - resolution * community_total[c as usize] * k_u / two_m
                };
                let stay_score = score(current);
                let mut candidates: Vec<u32> = weight_to.keys().copied().collect();
                candidates.sort_unstable();
                let mut best = current;
                let mut best_score = stay_score;
                for c in candidates {
                    if c == current {
                        continue;
                    }
                    let s = score(c);
                    if s > best_score {
                        best = c;
                        best_score = s;
                    }
                }
                // delta_Q = (best_score - stay_score) / m
                let gain = (best_score - stay_score) / (two_m / 2.0);
                if best != current && gain > GAIN_THRESHOLD {
                    community[u as usize] = best;
                    community_total[best as usize] += k_u;
                    moved_this_pass = true;
                    improved = true;
                } else {
                    community_total[current as usize] += k_u;
                }
            }
            if !moved_this_pass {
                break;
            }
        }
        (community, improved)
    }

    /// Collapse communities into super-nodes. Returns the aggregated graph
    /// and the dense community id of every current node.
    fn aggregate(&self, community: &[u32]) -> (LevelGraph, Vec<u32>) {
        let mut dense: HashMap<u32, u32> = HashMap::new();
        let mut sorted: Vec<u32> = {
            let mut ids: Vec<u32> = community.to_vec();
            ids.sort_unstable();
            ids.dedup();
            ids
        };
        for (new_id, old_id) in sorted.drain(..).enumerate() {
            dense.insert(old_id, new_id as u32);
        }
        let k = dense.len();
        let mut self_weight = vec![0.0f64; k];
        let mut merged: Vec<HashMap<u32, f64>> = vec![HashMap::new(); k];
        for u in 0..self.node_count() {
            let cu = dense[&community[u]];
            self_weight[cu as usize] += self.self_weight[u];
            for &(v, w) in &self.adj[u] {
                let cv = dense[&community[v as usize]];
                if cu == cv {
                    // Each undirected edge is visited from both endpoints, so
                    // this accumulates the doubled internal weight.
                    self_weight[cu as usize] += w;
                } else {
                    *merged[cu as usize].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        let mut adj = Vec::with_capacity(k);
        for map in merged {
            let mut list: Vec<(u32, f64)> = map.into_iter().collect();
            list.sort_unstable_by_key(|(v, _)| *v);
            adj.push(list);
        }
        let degree = (0..k)
            .map(|u| self_weight[u] + adj[u].iter().map(|(_, w)| w).sum::<f64>())
            .collect();
        let mapping = community.iter().map(|c| dense[c]).collect();
        (
            LevelGraph {
                adj,
                self_weight,
                degree,
            },
            mapping,
        )
    }

    fn modularity_of(&self, community: &[u32], two_m: f64, resolution: f64) -> f64 {
        let count = community.iter().max().map_or(0, |m| *m as usize + 1);
        let mut intra = vec![0.0f64; count];
        let mut total = vec![0.0f64; count];
        for u in 0..self.node_count() {
            let cu = community[u] as usize;
            total[cu] += self.degree[u];
            intra[cu] += self.self_weight[u];
            for &(v, w) in &self.adj[u] {
                if community[v as usize] as usize == cu {
                    intra[cu] += w;
                }
            }
        }
        (0..count)
            .map(|c| intra[c] / two_m - resolution * (total[c] / two_m).powi(2))
            .sum()
    }
}

fn relabel_dense(mut assignment: Vec<u32>) -> Vec<u32> {
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut next = 0u32;
    for value in &mut assignment {
        let id = *remap.entry(*value).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        *value = id;
    }
    assignment
}

/// Two-phase Louvain. Returns the partition plus the modularity trace after
/// each aggregation level (useful for asserting monotone improvement).
pub fn louvain_with_trace(
    view: &UndirectedView,
    seed: u64,
    resolution: f64,
) -> Result<(CommunityAssignment, Vec<f64>), CommunityError> {
    let two_m = view.total_weight();
    if two_m <= 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = LevelGraph::from_view(view);
    // node -> current super-node
    let mut membership: Vec<u32> = (0..view.node_count() as u32).collect();
    let mut trace = Vec::new();
    loop {
        let (community, improved) = level.local_moves(two_m, resolution, &mut rng);
        if !improved && !trace.is_empty() {
            break;
        }
        let (aggregated, mapping) = level.aggregate(&community);
        for slot in &mut membership {
            *slot = mapping[*slot as usize];
        }
        trace.push(level.modularity_of(&community, two_m, resolution));
        if !improved {
            break;
        }
        level = aggregated;
    }
    let community = relabel_dense(membership);
    let q = modularity(view, &community)?;
    let labels = view.labels().to_vec();
    let index = labels
        .iter()
        .enumerate()
        .map(|(i, ip)| (*ip, i as u32))
        .collect();
    Ok((
        CommunityAssignment {
            labels,
            index,
            community,
            modularity: q,
        },
        trace,
    ))
}

/// Louvain community detection at the given resolution (1.0 = plain
/// modularity).
pub fn louvain(
    view: &UndirectedView,
    seed: u64,
    resolution: f64,
) -> Result<CommunityAssignment, CommunityError> {
    louvain_with_trace(view, seed, resolution).map(|(assignment, _)| assignment)
}
