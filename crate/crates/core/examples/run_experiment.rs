//! Runs a config file and writes the metrics directory, like `byrdie run`.
//!
//! Run with `cargo run --release --example run_experiment -- [CONFIG] [OUT]`;
//! defaults to the bundled b-sweep.

use std::path::{Path, PathBuf};

use byrdie::experiment::{run_experiment, ExperimentConfig};

fn main() -> byrdie::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("experiments/fig3_b_sweep.cfg"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("byrdie-example"));

    let cfg = ExperimentConfig::load(&config)?;
    let output = run_experiment(&cfg, None)?;
    output.write(&out)?;
    println!("{} in {} ms -> {}", cfg.experiment.name, output.wall_ms, out.display());
    print!("{}", std::fs::read_to_string(out.join("summary.csv"))?);
    Ok(())
}
