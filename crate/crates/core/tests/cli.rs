use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use byrdie::baselines::{run_centralized_cd, CentralizedCdConfig};
use byrdie::data::{load_csv, CsvSchema, FeatureScaling};
use byrdie::learning::{LossKind, LossModel};
use byrdie::protocol::NoHooks;
use byrdie::topology::DirectedGraph;

const SMALL: &str = r#"
[experiment]
name = "small"
trials = 2
seed = 42
algorithms = ["byrdie", "dgd", "local-cd", "centralized-cd"]
checkpoint_every = 5

[topology]
kind = "complete"
nodes = 8

[byzantine]
count = 1
attack = { kind = "uniform-random", lo = -1.0, hi = 1.0 }

[data]
source = "synthetic"
dim = 3
margin = 1.0
noise = 0.5
count = 200
per_node = 10

[model]
loss = "logistic"

[protocol]
rounds = 10
"#;

fn byrdie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byrdie")).args(args).output().unwrap()
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(extra);
    byrdie(&args)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn read(path: PathBuf) -> String {
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const METRICS: [&str; 4] = ["byrdie.csv", "dgd.csv", "local-cd.csv", "centralized-cd.csv"];

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("out");
    let res = run(&config, &out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in METRICS {
        let text = read(out.join(name));
        assert!(text.starts_with(
            "trial,algo,r,k,t,t_c,consensus_diameter,mean_pairwise,pooled_train_risk,test_accuracy,excess_risk,wall_ms\n"
        ));
        assert!(text.lines().skip(1).any(|l| l.starts_with("1,")), "{name} lacks trial 1");
    }
    assert!(read(out.join("summary.csv")).lines().count() > 4);
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["trials"], 2);
    assert!(out.join("checkpoints/byrdie_trial0_r5.csv").exists());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.cfg", SMALL);
    let (first, second, third) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run(&config, &first, &["--jobs", "1"]).status.success());
    assert!(run(&config, &second, &["--jobs", "3"]).status.success());
    assert!(run(&first.join("config.cfg"), &third, &[]).status.success());
    for name in METRICS.iter().chain(&["summary.csv"]) {
        let a = read(first.join(name));
        assert_eq!(a, read(second.join(name)), "{name} depends on --jobs");
        assert_eq!(a, read(third.join(name)), "{name} not reproduced from the echo");
    }
}

#[test]
fn overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.cfg", SMALL);
    let (base, seeded) = (dir.path().join("base"), dir.path().join("seeded"));
    assert!(run(&config, &base, &[]).status.success());
    assert!(run(&config, &seeded, &["--seed", "7", "--trials", "1"]).status.success());
    let text = read(seeded.join("byrdie.csv"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("0,")));
    assert_ne!(read(base.join("byrdie.csv")).lines().nth(1), text.lines().nth(1));
    assert!(read(seeded.join("config.cfg")).contains("seed = 7"));
}

#[test]
fn degree_violation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("nodes = 8", "nodes = 4").replace("count = 1\n", "count = 1\nb = 2\n");
    let config = write_config(dir.path(), "bad.cfg", &text);
    let res = run(&config, &dir.path().join("out"), &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("degree violation") && err.contains("1(in-degree 3)"), "{err}");
}

#[test]
fn numeric_fault_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("count = 1\n", "count = 2\n")
        .replace(r#"{ kind = "uniform-random", lo = -1.0, hi = 1.0 }"#, r#"{ kind = "constant", value = 1e308 }"#)
        .replace(r#", "local-cd", "centralized-cd""#, "");
    let config = write_config(dir.path(), "fault.cfg", &text);
    let out = dir.path().join("out");
    let res = run(&config, &out, &[]);
    assert_eq!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(read(out.join("byrdie.csv")).lines().count() > 2);
    assert!(out.join("dgd.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["failures"][0]["algo"], "dgd");
}

#[test]
fn certify_graph_reports() {
    let dir = tempfile::tempdir().unwrap();
    let complete = dir.path().join("complete.txt");
    DirectedGraph::complete(4).write_edge_list(&complete).unwrap();
    let ring = dir.path().join("ring.txt");
    DirectedGraph::ring(4).write_edge_list(&ring).unwrap();
    let big = dir.path().join("big.txt");
    DirectedGraph::complete(30).write_edge_list(&big).unwrap();

    let res = byrdie(&["certify-graph", complete.to_str().unwrap(), "--b", "1"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("certified"));

    let res = byrdie(&["certify-graph", ring.to_str().unwrap(), "--b", "1"]);
    let out = String::from_utf8_lossy(&res.stdout);
    assert!(out.contains("refuted") && out.contains("witness"), "{out}");

    let res = byrdie(&["certify-graph", big.to_str().unwrap(), "--b", "1"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("too large") && err.contains("sampled"), "{err}");

    let res = byrdie(&["certify-graph", big.to_str().unwrap(), "--b", "1", "--mode", "sampled", "--trials", "200"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("inconclusive"));
}

#[test]
fn gen_data_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = byrdie(&["gen-data", "--dim", "2", "--count", "100", "--seed", "3", "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let train = read(a.join("train.csv"));
    assert!(train.starts_with("y,x1,x2\n"));
    assert_eq!(train.lines().count(), 101);
    assert_eq!(train, read(b.join("train.csv")));
    assert!(read(a.join("metadata.txt")).contains("B="));
}

#[test]
fn noiseless_generated_data_is_separable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let res = byrdie(&["gen-data", "--dim", "4", "--count", "200", "--margin", "1", "--noise", "0", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let schema = CsvSchema { label_column: 0, has_header: true, scaling: FeatureScaling::None };
    let data = load_csv(&out.join("train.csv"), &schema).unwrap().to_signed_binary().unwrap();
    let model = LossModel::linear(LossKind::SquareHinge, 1e-4).unwrap();
    let fit = run_centralized_cd(data.samples(), &model, &CentralizedCdConfig::oracle(1e-10), &mut NoHooks).unwrap();
    assert_eq!(model.accuracy(&fit.w, data.samples()).unwrap(), 1.0);
}

#[test]
fn version_and_usage() {
    let res = byrdie(&["version"]);
    assert!(res.status.success());
    assert_eq!(String::from_utf8_lossy(&res.stdout).trim(), format!("byrdie {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(byrdie(&["run"]).status.code(), Some(2));
}
