//! Synthetic pseudonymized endpoints and the random connection structure.
//!
//! All generated addresses live in 198.18.0.0/15, the reserved benchmarking
//! block, so they can never resemble or collide with real hosts. Every
//! operation here is a pure function of its seed; the generator is ChaCha8
//! (seedable and portable across platforms).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::FlowRecord;

/// 198.18.0.0, start of the /15 benchmarking block.
pub const PSEUDONYM_BLOCK_BASE: u32 = 0xC612_0000;
/// Network mask of the /15 block.
pub const PSEUDONYM_BLOCK_MASK: u32 = 0xFFFE_0000;
/// Usable host addresses in the block (network and broadcast excluded).
pub const PSEUDONYM_BLOCK_CAPACITY: u32 = (1 << 17) - 2;

const EDGE_POOL_RETRIES: u64 = 8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("requested {requested} pseudonyms but the block holds only {capacity}")]
    CapacityExceeded { requested: u64, capacity: u32 },
    #[error("edge pool is empty")]
    EmptyEdgePool,
    #[error(
        "edge pool came out empty after {attempts} seeded attempts \
         (node_count={nodes}, edge_probability={p})"
    )]
    EdgePoolGenerationFailed { attempts: u64, nodes: u32, p: f64 },
    #[error("pseudonym map line {line}: {reason}")]
    MapParse { line: usize, reason: String },
    #[error("pseudonym map conflict: {0}")]
    MapConflict(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of the synthetic graph stage.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub node_count: u32,
    pub edge_probability: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(node_count: u32, edge_probability: f64, seed: u64) -> Result<Self, SynthError> {
        if node_count < 2 {
            return Err(SynthError::InvalidConfig(format!(
                "node_count must be at least 2, got {node_count}"
            )));
        }
        if !(edge_probability > 0.0 && edge_probability <= 1.0) {
            return Err(SynthError::InvalidConfig(format!(
                "edge_probability must lie in (0, 1], got {edge_probability}"
            )));
        }
        Ok(SynthConfig {
            node_count,
            edge_probability,
            seed,
        })
    }
}

fn offset_to_addr(offset: u32) -> Ipv4Addr {
    debug_assert!(offset >= 1 && offset <= PSEUDONYM_BLOCK_CAPACITY);
    Ipv4Addr::from(PSEUDONYM_BLOCK_BASE + offset)
}

/// True when `addr` lies inside the reserved /15 block.
pub fn in_pseudonym_block(addr: Ipv4Addr) -> bool {
    u32::from(addr) & PSEUDONYM_BLOCK_MASK == PSEUDONYM_BLOCK_BASE
}

/// Draw `node_count` distinct addresses from the reserved block.
/// Deterministic for a fixed seed.
pub fn generate_endpoints(config: &SynthConfig) -> Result<Vec<Ipv4Addr>, SynthError> {
    let n = config.node_count;
    if u64::from(n) > u64::from(PSEUDONYM_BLOCK_CAPACITY) {
        return Err(SynthError::CapacityExceeded {
            requested: u64::from(n),
            capacity: PSEUDONYM_BLOCK_CAPACITY,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    // Partial Fisher-Yates over all host offsets; the first n entries are the sample.
    let mut offsets: Vec<u32> = (1..=PSEUDONYM_BLOCK_CAPACITY).collect();
    let len = offsets.len();
    for i in 0..n as usize {
        let j = rng.gen_range(i..len);
        offsets.swap(i, j);
    }
    Ok(offsets[..n as usize].iter().copied().map(offset_to_addr).collect())
}

/// The generated endpoints plus the directed pairs drawn between them.
/// Pairs index into `endpoints`.
#[derive(Debug, Clone)]
pub struct EdgePool {
    pub endpoints: Vec<Ipv4Addr>,
    pub pairs: Vec<(u32, u32)>,
}

impl EdgePool {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair_ips(&self, pair: (u32, u32)) -> (Ipv4Addr, Ipv4Addr) {
        (
            self.endpoints[pair.0 as usize],
            self.endpoints[pair.1 as usize],
        )
    }

    /// Two-column audit export: `src<TAB>dst`, one pair per line.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), SynthError> {
        for &pair in &self.pairs {
            let (src, dst) = self.pair_ips(pair);
            writeln!(writer, "{src}\t{dst}")?;
        }
        Ok(())
    }
}

/// Include each of the n(n-1) ordered non-self pairs independently with
/// probability `edge_probability`. An empty draw (possible at tiny n and low
/// p) is retried with seed+1 up to eight times before giving up.
pub fn generate_edge_pool(
    endpoints: &[Ipv4Addr],
    config: &SynthConfig,
) -> Result<EdgePool, SynthError> {
    assert_eq!(
        endpoints.len(),
        config.node_count as usize,
        "endpoint list must match config.node_count"
    );
    let n = config.node_count;
    for attempt in 0..=EDGE_POOL_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(attempt));
        rng.set_stream(2);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < config.edge_probability {
                    pairs.push((i, j));
                }
            }
        }
        if !pairs.is_empty() {
            return Ok(EdgePool {
                endpoints: endpoints.to_vec(),
                pairs,
            });
        }
    }
    Err(SynthError::EdgePoolGenerationFailed {
        attempts: EDGE_POOL_RETRIES + 1,
        nodes: n,
        p: config.edge_probability,
    })
}

/// One record's synthetic endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointAssignment {
    pub record_index: usize,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
}

/// Give every record one (src, dst) pair drawn uniformly from the pool.
pub fn assign_endpoints(
    records: &[FlowRecord],
    pool: &EdgePool,
    seed: u64,
) -> Result<Vec<EndpointAssignment>, SynthError> {
    if pool.is_empty() {
        return Err(SynthError::EmptyEdgePool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(records.len());
    for record_index in 0..records.len() {
        let pair = pool.pairs[rng.gen_range(0..pool.pairs.len())];
        let (src_ip, dst_ip) = pool.pair_ips(pair);
        assignments.push(EndpointAssignment {
            record_index,
            src_ip,
            dst_ip,
        });
    }
    Ok(assignments)
}

/// Injective, stable mapping from original identifiers to pseudonym
/// addresses. Allocation is sequential from the bottom of the block.
#[derive(Debug, Clone, Default)]
pub struct PseudonymMap {
    forward: HashMap<String, Ipv4Addr>,
    reverse: HashMap<Ipv4Addr, String>,
    next_offset: u32,
}

impl PseudonymMap {
    pub fn new() -> Self {
        PseudonymMap {
            forward: HashMap::new(),
            reverse: HashMap::new(),
            next_offset: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn pseudonym_of(&self, original: &str) -> Option<Ipv4Addr> {
        self.forward.get(original).copied()
    }

    pub fn original_of(&self, pseudonym: Ipv4Addr) -> Option<&str> {
        self.reverse.get(&pseudonym).map(String::as_str)
    }

    /// Return the stored pseudonym for `original`, allocating the next unused
    /// address on first sight.
    pub fn pseudonymize(&mut self, original: &str) -> Result<Ipv4Addr, SynthError> {
        if let Some(addr) = self.forward.get(original) {
            return Ok(*addr);
        }
        while self.next_offset <= PSEUDONYM_BLOCK_CAPACITY {
            let candidate = offset_to_addr(self.next_offset);
            self.next_offset += 1;
            if !self.reverse.contains_key(&candidate) {
                self.forward.insert(original.to_string(), candidate);
                self.reverse.insert(candidate, original.to_string());
                return Ok(candidate);
            }
        }
        Err(SynthError::CapacityExceeded {
            requested: self.forward.len() as u64 + 1,
            capacity: PSEUDONYM_BLOCK_CAPACITY,
        })
    }

    /// Register a known (original, pseudonym) pair, e.g. for endpoints that
    /// were generated up front. Rejects anything that would break injectivity
    /// or stability.
    pub fn insert(&mut self, original: &str, pseudonym: Ipv4Addr) -> Result<(), SynthError> {
        if !in_pseudonym_block(pseudonym) {
            return Err(SynthError::MapConflict(format!(
                "{pseudonym} is outside the reserved block"
            )));
        }
        match self.forward.get(original) {
            Some(existing) if *existing == pseudonym => return Ok(()),
            Some(existing) => {
                return Err(SynthError::MapConflict(format!(
                    "{original:?} is already mapped to {existing}"
                )))
            }
            None => {}
        }
        if let Some(holder) = self.reverse.get(&pseudonym) {
            return Err(SynthError::MapConflict(format!(
                "{pseudonym} is already assigned to {holder:?}"
            )));
        }
        self.forward.insert(original.to_string(), pseudonym);
        self.reverse.insert(pseudonym, original.to_string());
        Ok(())
    }

    /// Line-oriented persistence: `original<TAB>pseudonym`, sorted by original.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), SynthError> {
        let mut entries: Vec<(&str, Ipv4Addr)> = self
            .forward
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (original, pseudonym) in entries {
            writeln!(writer, "{original}\t{pseudonym}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, SynthError> {
        let mut map = PseudonymMap::new();
        let mut max_offset = 0u32;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (original, addr_text) =
                line.split_once('\t').ok_or_else(|| SynthError::MapParse {
                    line: idx + 1,
                    reason: "expected original<TAB>pseudonym".to_string(),
                })?;
            let pseudonym: Ipv4Addr =
                addr_text.parse().map_err(|_| SynthError::MapParse {
                    line: idx + 1,
                    reason: format!("{addr_text:?} is not an IPv4 address"),
                })?;
            map.insert(original, pseudonym)?;
            max_offset = max_offset.max(u32::from(pseudonym) - PSEUDONYM_BLOCK_BASE);
        }
        map.next_offset = max_offset + 1;
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Cursor;

    #[test]
    fn config_rejects_degenerate_values() {
        assert!(SynthConfig::new(1, 0.2, 0).is_err());
        assert!(SynthConfig::new(10, 0.0, 0).is_err());
        assert!(SynthConfig::new(10, 1.5, 0).is_err());
        assert!(SynthConfig::new(2, 1.0, 0).is_ok());
    }

    #[test]
    fn endpoints_are_distinct_and_inside_block() {
        let config = SynthConfig::new(3, 0.2, 42).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        assert_eq!(endpoints.len(), 3);
        let distinct: HashSet<_> = endpoints.iter().collect();
        assert_eq!(distinct.len(), 3);
        for addr in &endpoints {
            assert!(in_pseudonym_block(*addr), "{addr} escaped the block");
            let first = addr.octets()[0];
            let second = addr.octets()[1];
            assert_eq!(first, 198);
            assert!(second == 18 || second == 19);
        }
    }

    #[test]
    fn endpoints_are_deterministic_per_seed() {
        let config = SynthConfig::new(50, 0.2, 7).unwrap();
        assert_eq!(
            generate_endpoints(&config).unwrap(),
            generate_endpoints(&config).unwrap()
        );
        let other = SynthConfig::new(50, 0.2, 8).unwrap();
        assert_ne!(
            generate_endpoints(&config).unwrap(),
            generate_endpoints(&other).unwrap()
        );
    }

    #[test]
    fn capacity_is_enforced() {
        let config = SynthConfig::new(PSEUDONYM_BLOCK_CAPACITY + 1, 0.2, 0).unwrap();
        assert!(matches!(
            generate_endpoints(&config),
            Err(SynthError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn probability_one_gives_complete_digraph() {
        let config = SynthConfig::new(3, 1.0, 11).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        let pool = generate_edge_pool(&endpoints, &config).unwrap();
        assert_eq!(pool.len(), 6);
        let distinct: HashSet<_> = pool.pairs.iter().collect();
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn no_self_loops_in_pool() {
        let config = SynthConfig::new(25, 0.5, 3).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        let pool = generate_edge_pool(&endpoints, &config).unwrap();
        assert!(pool.pairs.iter().all(|(i, j)| i != j));
    }

    #[test]
    fn edge_count_matches_binomial_three_sigma() {
        // n(n-1) = 249500 trials at p = 0.2: mean 49900, sigma ~ 199.8.
        let config = SynthConfig::new(500, 0.2, 1).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        let pool = generate_edge_pool(&endpoints, &config).unwrap();
        let count = pool.len() as i64;
        assert!(
            (count - 49_900).abs() <= 600,
            "edge count {count} outside 49900 +/- 600"
        );
    }

    #[test]
    fn mean_edge_count_over_twenty_seeds_within_one_percent() {
        // n = 200, p = 0.2: expected 0.2 * 200 * 199 = 7960 per draw.
        let mut total = 0usize;
        for seed in 0..20 {
            let config = SynthConfig::new(200, 0.2, seed).unwrap();
            let endpoints = generate_endpoints(&config).unwrap();
            total += generate_edge_pool(&endpoints, &config).unwrap().len();
        }
        let mean = total as f64 / 20.0;
        assert!(
            (mean - 7960.0).abs() <= 79.6,
            "mean edge count {mean} deviates more than 1% from 7960"
        );
    }

    fn dummy_records(count: usize) -> Vec<FlowRecord> {
        (0..count)
            .map(|i| FlowRecord {
                fields: vec![],
                class_label: "normal".to_string(),
                difficulty: (i % 22) as i64,
            })
            .collect()
    }

    #[test]
    fn assign_zero_records_gives_empty_list() {
        let config = SynthConfig::new(4, 1.0, 5).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        let pool = generate_edge_pool(&endpoints, &config).unwrap();
        let assignments = assign_endpoints(&[], &pool, 5).unwrap();
        assert!(assignments.is_empty());
    }

    #[test]
    fn single_edge_pool_forces_every_assignment() {
        let config = SynthConfig::new(2, 1.0, 5).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        let pool = EdgePool {
            endpoints: endpoints.clone(),
            pairs: vec![(0, 1)],
        };
        let records = dummy_records(1000);
        let assignments = assign_endpoints(&records, &pool, 9).unwrap();
        assert_eq!(assignments.len(), 1000);
        for a in &assignments {
            assert_eq!(a.src_ip, endpoints[0]);
            assert_eq!(a.dst_ip, endpoints[1]);
        }
    }

    #[test]
    fn assignment_spread_is_roughly_uniform() {
        // 10000 draws over 100 edges: binomial mean 100, +/-50 is a loose 5-sigma band.
        let config = SynthConfig::new(101, 0.2, 13).unwrap();
        let endpoints = generate_endpoints(&config).unwrap();
        let mut pool = generate_edge_pool(&endpoints, &config).unwrap();
        pool.pairs.truncate(100);
        assert_eq!(pool.len(), 100);
        let records = dummy_records(10_000);
        let assignments = assign_endpoints(&records, &pool, 21).unwrap();
        let mut usage: HashMap<(Ipv4Addr, Ipv4Addr), usize> = HashMap::new();
        for a in &assignments {
            *usage.entry((a.src_ip, a.dst_ip)).or_default() += 1;
        }
        assert_eq!(usage.values().sum::<usize>(), 10_000);
        for (&edge, &count) in &usage {
            assert!(
                (50..=150).contains(&count),
                "edge {edge:?} used {count} times, outside 100 +/- 50"
            );
        }
    }

    #[test]
    fn empty_pool_is_rejected() {
        let pool = EdgePool {
            endpoints: vec![],
            pairs: vec![],
        };
        assert!(matches!(
            assign_endpoints(&dummy_records(3), &pool, 0),
            Err(SynthError::EmptyEdgePool)
        ));
    }

    #[test]
    fn pseudonymize_is_stable_and_injective() {
        let mut map = PseudonymMap::new();
        let a1 = map.pseudonymize("10.1.1.1").unwrap();
        let a2 = map.pseudonymize("10.1.1.1").unwrap();
        assert_eq!(a1, a2);
        let b = map.pseudonymize("10.1.1.2").unwrap();
        assert_ne!(a1, b);
        assert!(in_pseudonym_block(a1));
        assert!(in_pseudonym_block(b));
        assert_eq!(map.original_of(a1), Some("10.1.1.1"));
    }

    #[test]
    fn pseudonym_map_round_trips_through_tsv() {
        let mut map = PseudonymMap::new();
        map.pseudonymize("host-b").unwrap();
        let a = map.pseudonymize("host-a").unwrap();
        let mut buf = Vec::new();
        map.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("host-a\t"));
        assert!(lines.next().unwrap().starts_with("host-b\t"));

        let mut reloaded = PseudonymMap::read_tsv(Cursor::new(buf)).unwrap();
        assert_eq!(reloaded.pseudonymize("host-a").unwrap(), a);
        // A fresh original still gets an unused address after reload.
        let c = reloaded.pseudonymize("host-c").unwrap();
        assert_ne!(c, a);
        assert!(in_pseudonym_block(c));
    }

    #[test]
    fn insert_rejects_conflicts() {
        let mut map = PseudonymMap::new();
        let addr = map.pseudonymize("x").unwrap();
        assert!(map.insert("x", addr).is_ok());
        assert!(map.insert("y", addr).is_err());
        assert!(map
            .insert("x", Ipv4Addr::new(198, 18, 0, 250))
            .is_err());
        assert!(map.insert("z", Ipv4Addr::new(10, 0, 0, 1)).is_err());
    }
}
