//! Emit seeded NSL-KDD-format sample rows on stdout.
//!
//! Usage: cargo run -p kddgraph --example gen_sample -- [ROWS] [SEED]

use std::io::{self, Write};

fn main() -> io::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows: usize = args
        .next()
        .map(|a| a.parse().expect("ROWS must be an integer"))
        .unwrap_or(1000);
    let seed: u64 = args
        .next()
        .map(|a| a.parse().expect("SEED must be an integer"))
        .unwrap_or(7);
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    kddgraph::sample::write_csv(&mut lock, rows, seed)?;
    lock.flush()
}
