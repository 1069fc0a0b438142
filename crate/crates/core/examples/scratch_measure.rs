// Scratch measurement (not shipped).
use std::time::Instant;
use steplab::data::synthetic_classification;
use steplab::model::{grad, init_params, loss, LossKind, ModelSpec};
use steplab::probe::{sharpness, ProbeConfig};

fn main() {
    let spec = ModelSpec {
        layer_widths: vec![32, 32],
        input_dim: 32,
        num_classes: 10,
        loss_kind: LossKind::Squared,
        weight_decay: 1e-4,
    };
    let data = synthetic_classification(512, 32, 10, 0);
    let batch = data.full_batch();
    let w = init_params(&spec, 0);

    let t = Instant::now();
    let mut g = grad(&w, &batch, &spec).unwrap();
    for _ in 0..19 { g = grad(&w, &batch, &spec).unwrap(); }
    println!("grad: {:?}/call  norm_sq={:.4e}", t.elapsed() / 20, g.norm_sq());

    let t = Instant::now();
    let mut l = 0.0;
    for _ in 0..20 { l = loss(&w, &batch, &spec).unwrap(); }
    println!("loss: {:?}/call  l={l:.4}", t.elapsed() / 20);

    let t = Instant::now();
    let pr = sharpness(&w, &batch, &spec, &ProbeConfig::default()).unwrap();
    println!(
        "sharpness at init: {:?}  lambda={:.4} iters={} converged={}",
        t.elapsed(), pr.lambda_max, pr.iterations, pr.converged
    );
}
