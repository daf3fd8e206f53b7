//! Spending the same number of scalar broadcasts with T = 1 or T = 4
//! inner iterations per coordinate: accuracy against agreement.
//!
//! Run with `cargo run --release --example consensus_vs_t`.

use byrdie::experiment::{run_experiment, ExperimentConfig};
use byrdie::metrics::median;

const CONFIG: &str = r#"
[experiment]
name = "consensus_vs_t"
trials = 3
seed = 11
cadence = "coordinate"

[topology]
kind = "erdos-renyi"
nodes = 30
p = 0.5
max_attempts = 10000

[byzantine]
count = 3
attack = { kind = "uniform-random", lo = 0.0, hi = 1.0 }

[data]
source = "synthetic"
dim = 10
margin = 1.0
noise = 1.0
count = 3000
per_node = 40
bias = false

[model]
loss = "square-hinge"

[protocol]
rho0 = 10.0
exponent = 0.75
comm_budget = 200

[sweep]
parameter = "inner-iterations"
values = [1, 4]
"#;

fn main() -> byrdie::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let out = run_experiment(&cfg, None)?;
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "t_c", "acc T=1", "acc T=4", "spread T=1", "spread T=4");
    for t_c in [20, 40, 80, 120, 160, 200] {
        let at = |cell: &str, pick: fn(&byrdie::metrics::MetricsRecord) -> f64| {
            let v: Vec<f64> = out.records(cell, "byrdie").iter().filter(|r| r.t_c == t_c).map(pick).collect();
            median(&v).unwrap_or(f64::NAN)
        };
        let acc = |r: &byrdie::metrics::MetricsRecord| r.test_accuracy.unwrap_or(f64::NAN);
        let spread = |r: &byrdie::metrics::MetricsRecord| r.mean_pairwise;
        println!(
            "{t_c:>5} {:>12.3} {:>12.3} {:>12.2e} {:>12.2e}",
            at("T=1", acc),
            at("T=4", acc),
            at("T=1", spread),
            at("T=4", spread)
        );
    }
    Ok(())
}
