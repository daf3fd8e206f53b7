//! The bundled Iris network experiment: outer iterations until 95% training
//! accuracy for ByRDiE, centralized CD and DGD with one faulty node.
//!
//! Run with `cargo run --release --example iris_mlp`.

use std::path::Path;

use byrdie::experiment::{run_experiment, ExperimentConfig};
use byrdie::metrics::median;

fn main() -> byrdie::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("experiments/iris_mlp.cfg");
    let cfg = ExperimentConfig::load(&path)?;
    let out = run_experiment(&cfg, None)?;
    for algo in ["byrdie", "centralized-cd", "dgd"] {
        let recs = out.records("all", algo);
        let hits: Vec<f64> = (0..cfg.experiment.trials)
            .map(|t| {
                recs.iter()
                    .filter(|r| r.trial == t)
                    .find(|r| r.test_accuracy.is_some_and(|a| a >= 0.95))
                    .map_or(f64::INFINITY, |r| r.r as f64)
            })
            .collect();
        let missed = hits.iter().filter(|h| h.is_infinite()).count();
        println!(
            "{algo:<15} median iterations to 95%: {:>5}  (never reached in {missed}/{} trials)",
            median(&hits).unwrap(),
            hits.len()
        );
    }
    Ok(())
}
