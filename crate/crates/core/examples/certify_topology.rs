//! Draws a random network, checks the degree requirement and the
//! reduced-graph condition exactly on a small graph and by sampling on a
//! large one.
//!
//! Run with `cargo run --release --example certify_topology`.

use byrdie::rng;
use byrdie::topology::{
    certify_assumption3, generate_erdos_renyi, validate_degrees, CertifyMode, DirectedGraph,
    DEFAULT_ENUMERATION_BUDGET,
};

fn main() -> byrdie::Result<()> {
    let small = generate_erdos_renyi(6, 0.7, false, &mut rng::stream(1, &[]))?;
    println!("{}", small.to_edge_list());
    println!("{}", validate_degrees(&small, 1));
    let exact = CertifyMode::Exact { budget: DEFAULT_ENUMERATION_BUDGET };
    println!("M=6, b=1: {}", certify_assumption3(&small, 1, exact)?);
    println!("ring M=4, b=1: {}", certify_assumption3(&DirectedGraph::ring(4), 1, exact)?);

    let big = generate_erdos_renyi(50, 0.5, false, &mut rng::stream(2, &[]))?;
    println!("M=50 mean in-degree {:.1}", big.mean_in_degree());
    match certify_assumption3(&big, 2, exact) {
        Ok(c) => println!("M=50, b=2: {c}"),
        Err(e) => println!("M=50, b=2 exact: {e}"),
    }
    let sampled = CertifyMode::Sampled { trials: 5_000, seed: 3 };
    println!("M=50, b=2: {}", certify_assumption3(&big, 2, sampled)?);
    Ok(())
}
