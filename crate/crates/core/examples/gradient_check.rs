//! Compares analytic gradients with central differences for every loss.
//!
//! Run with `cargo run --example gradient_check`.

use rand::Rng;
use rand_distr::StandardNormal;

use byrdie::data::Sample;
use byrdie::learning::{LossKind, LossModel, MlpArch};
use byrdie::rng;

fn main() -> byrdie::Result<()> {
    let mut r = rng::stream(0, &[]);
    let models = [
        (LossModel::linear(LossKind::Square, 0.01)?, 5),
        (LossModel::linear(LossKind::SquareHinge, 0.01)?, 5),
        (LossModel::linear(LossKind::Logistic, 0.01)?, 5),
        (LossModel::mlp(MlpArch { input: 4, hidden: 3, output: 3 }, 0.01)?, 4),
    ];
    for (model, dim) in &models {
        let samples: Vec<Sample> = (0..30)
            .map(|id| Sample {
                id,
                x: (0..*dim).map(|_| r.sample(StandardNormal)).collect(),
                y: match model.kind() {
                    LossKind::Square => r.sample(StandardNormal),
                    LossKind::MlpSoftmaxCrossEntropy => (id % 3) as f64,
                    _ => [-1.0, 1.0][id % 2],
                },
            })
            .collect();
        let p = model.param_dim(*dim)?;
        let w: Vec<f64> = (0..p).map(|_| r.sample(StandardNormal)).collect();
        let g = model.grad(&w, &samples)?;
        let h = 1e-6;
        let mut worst = 0.0f64;
        for k in 0..p {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (model.risk(&up, &samples)? - model.risk(&down, &samples)?) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1.0));
        }
        println!("{:<13} P={p:<3} max relative error {worst:.2e}", model.kind().name());
    }
    Ok(())
}
