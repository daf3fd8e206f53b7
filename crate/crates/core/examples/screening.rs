//! Screening and the coordinate update on one node's received values.
//!
//! Run with `cargo run --example screening`.

use byrdie::protocol::{screen, update_coordinate};

fn main() -> byrdie::Result<()> {
    // sender 5 is Byzantine and shouts
    let received = [(1, 0.1), (2, 0.5), (3, 0.9), (4, 0.3), (5, 1e6)];
    let own = 0.4;
    for b in 0..=2 {
        let s = screen(&received, b)?;
        let next = update_coordinate(own, &s.kept_values(), 0.1, 0.2)?;
        println!(
            "b={b}: kept {:?}, dropped low {:?} high {:?} -> {next:.4}",
            s.kept_values(),
            s.removed_low,
            s.removed_high
        );
    }

    // equal values: the tie rule falls back to sender ids
    let s = screen(&[(4, 0.4), (1, 0.4), (3, 0.4), (5, 0.4), (2, 0.4)], 2)?;
    println!("ties: kept {:?}, low {:?}, high {:?}", s.kept, s.removed_low, s.removed_high);
    Ok(())
}
