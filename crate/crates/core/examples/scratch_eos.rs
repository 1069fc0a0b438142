// Scratch exploration of the acceptance-scale dynamics (not shipped).

use std::time::Instant;

use steplab::harness::csv::parse_records;
use steplab::harness::{find_max_lr, median, run_experiment, DatasetConfig, ExperimentConfig};
use steplab::model::{init_params, loss, LossKind, ModelSpec};
use steplab::probe::ProbeConfig;
use steplab::tuners::{TunerConfig, TunerKind};

fn base_config(tuner: TunerConfig, epochs: usize, out: &str) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec {
            layer_widths: vec![32, 32],
            input_dim: 32,
            num_classes: 10,
            loss_kind: LossKind::Squared,
            weight_decay: 1e-4,
        },
        tuner,
        dataset: DatasetConfig::Synthetic {
            n: 512,
            d: 32,
            classes: 10,
            seed: 0,
        },
        batch_size: 0,
        epochs,
        seed: 0,
        probe: ProbeConfig::default(),
        probe_every_epochs: 1,
        stochastic_avg_window: 20,
        out_path: Some(out.into()),
        save_checkpoint: None,
        probe_enabled: true,
    }
}

fn thirds(records: &[steplab::StepRecord], epochs: u64) -> (Vec<&steplab::StepRecord>, Vec<&steplab::StepRecord>) {
    let first: Vec<_> = records.iter().filter(|r| r.epoch < epochs / 3).collect();
    let last: Vec<_> = records.iter().filter(|r| r.epoch >= 2 * epochs / 3).collect();
    (first, last)
}

fn main() {
    let t0 = Instant::now();

    // ---- Armijo (criterion 5/7 shape) ----
    let cfg = base_config(TunerConfig::new(TunerKind::Armijo), 500, "/tmp/armijo.csv");
    let t = Instant::now();
    let summary = run_experiment(&cfg).unwrap();
    println!("armijo run: {:?}  final_loss={:.6e}", t.elapsed(), summary.final_loss);
    let recs = parse_records(&std::fs::read_to_string("/tmp/armijo.csv").unwrap()).unwrap();
    let losses: Vec<f64> = recs.iter().map(|r| r.train_loss.unwrap()).collect();
    let violations = losses.windows(2).filter(|p| p[1] > p[0]).count();
    println!("  monotone violations: {violations}");
    let (first, last) = thirds(&recs, 500);
    let gl_first: Vec<f64> = first.iter().filter_map(|r| r.gamma_times_sharpness).collect();
    let gl_last: Vec<f64> = last.iter().filter_map(|r| r.gamma_times_sharpness).collect();
    let g_first: Vec<f64> = first.iter().map(|r| r.gamma).collect();
    let g_last: Vec<f64> = last.iter().map(|r| r.gamma).collect();
    println!(
        "  gamma*lambda median first={:.3} last={:.3}; gamma median first={:.4} last={:.4}",
        median(&gl_first).unwrap(),
        median(&gl_last).unwrap(),
        median(&g_first).unwrap(),
        median(&g_last).unwrap()
    );
    let s_first: Vec<f64> = first.iter().filter_map(|r| r.sharpness).collect();
    let s_last: Vec<f64> = last.iter().filter_map(|r| r.sharpness).collect();
    println!(
        "  sharpness median first={:.3} last={:.3}; evals median={:?}",
        median(&s_first).unwrap(),
        median(&s_last).unwrap(),
        median(&recs.iter().map(|r| r.ls_evals as f64).collect::<Vec<_>>()).unwrap()
    );
    let armijo_final = summary.final_loss;
    let armijo_gl_last_median = median(&gl_last).unwrap();

    // ---- Polyak (criterion 8 shape) ----
    let cfg = base_config(TunerConfig::new(TunerKind::Polyak), 500, "/tmp/polyak.csv");
    let t = Instant::now();
    let summary = run_experiment(&cfg).unwrap();
    println!("polyak run: {:?}  final_loss={:.6e}", t.elapsed(), summary.final_loss);
    let recs = parse_records(&std::fs::read_to_string("/tmp/polyak.csv").unwrap()).unwrap();
    let (_, last) = thirds(&recs, 500);
    let big = last.iter().filter(|r| r.gamma >= 0.5).count();
    let over = recs.iter().filter(|r| r.gamma > 1.0).count();
    println!(
        "  final-third gamma>=0.5: {}/{} = {:.2}; gamma>gamma_max: {over}; polyak<=armijo final: {}",
        big,
        last.len(),
        big as f64 / last.len() as f64,
        summary.final_loss <= armijo_final
    );
    let gl: Vec<f64> = recs.iter().filter_map(|r| r.gamma_times_sharpness).collect();
    println!("  polyak gamma*lambda median={:.3} max={:.3}",
        median(&gl).unwrap(), gl.iter().cloned().fold(f64::MIN, f64::max));

    // ---- Loose Armijo (criterion 9 shape) ----
    let model = base_config(TunerConfig::new(TunerKind::Armijo), 1, "/tmp/x.csv");
    let data = model.dataset.load().unwrap();
    let w0 = init_params(&model.model, model.seed);
    let f0 = loss(&w0, &data.full_batch(), &model.model).unwrap();
    println!("initial loss f0={f0:.6}");
    let mut tuner = TunerConfig::new(TunerKind::ArmijoLoose);
    tuner.epsilon = 0.1 * f0;
    let cfg = base_config(tuner, 500, "/tmp/loose.csv");
    let t = Instant::now();
    let summary = run_experiment(&cfg).unwrap();
    println!("loose run: {:?}  final_loss={:.6e}", t.elapsed(), summary.final_loss);
    let recs = parse_records(&std::fs::read_to_string("/tmp/loose.csv").unwrap()).unwrap();
    let (_, last) = thirds(&recs, 500);
    let gl_last: Vec<f64> = last.iter().filter_map(|r| r.gamma_times_sharpness).collect();
    println!(
        "  loose gamma*lambda last median={:.3} (plain was {:.3})",
        median(&gl_last).unwrap(),
        armijo_gl_last_median
    );

    // ---- Constant at max stable lr (criterion 6 shape) ----
    let base = base_config(TunerConfig::constant(0.1), 2000, "/tmp/const.csv");
    let t = Instant::now();
    let gamma = find_max_lr(&base, 2000).unwrap();
    println!("find_max_lr: {:?} -> gamma={gamma:.5}", t.elapsed());
    let mut cfg = base_config(TunerConfig::constant(gamma), 2000, "/tmp/const.csv");
    cfg.probe_every_epochs = 10;
    let t = Instant::now();
    let summary = run_experiment(&cfg).unwrap();
    println!("const run: {:?}  final_loss={:.6e} band={:?}", t.elapsed(), summary.final_loss, summary.eos_band_fraction);
    let recs = parse_records(&std::fs::read_to_string("/tmp/const.csv").unwrap()).unwrap();
    let lambda0 = recs[0].sharpness.unwrap();
    println!("  initial sharpness={lambda0:.3}  2/gamma={:.3}  initial<2/gamma: {}", 2.0 / gamma, lambda0 < 2.0 / gamma);
    let (first, last) = thirds(&recs, 2000);
    let gl_last: Vec<f64> = last.iter().filter_map(|r| r.gamma_times_sharpness).collect();
    let in_band = gl_last.iter().filter(|&&x| (1.6..=2.4).contains(&x)).count();
    println!(
        "  final-third probes: {} in-band {}/{} = {:.2}",
        gl_last.len(),
        in_band,
        gl_last.len(),
        in_band as f64 / gl_last.len() as f64
    );
    let s_first: Vec<f64> = first.iter().filter_map(|r| r.sharpness).collect();
    let s_last: Vec<f64> = last.iter().filter_map(|r| r.sharpness).collect();
    println!(
        "  sharpness median first={:.3} last={:.3}",
        median(&s_first).unwrap(),
        median(&s_last).unwrap()
    );

    println!("total: {:?}", t0.elapsed());
}
