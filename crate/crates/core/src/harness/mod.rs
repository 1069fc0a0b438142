//! Experiment runner: composes the model, a stepsize tuner, the sharpness
//! probe, and a batch schedule into a gradient-descent training loop, logging
//! per-step metrics to CSV.
//!
//! Each optimizer step logs one [`StepRecord`]; the full-objective loss and
//! sharpness columns are populated on the probe cadence (the first step of
//! every `probe_every_epochs`-th epoch, measured at the pre-step parameters).
//! Minibatch runs additionally write a `<out>.avg.csv` sidecar with
//! window-averaged batch loss and stepsize.

pub mod checkpoint;
pub mod config;
pub mod csv;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use thiserror::Error;

use crate::data::{load_cifar10, synthetic_classification, BatchSchedule, DataError, Dataset};
use crate::model::{grad, init_params, loss, Batch, ModelError, ModelSpec};
use crate::params::ParamVector;
use crate::probe::{sharpness, ProbeConfig};
use crate::tuners::{
    armijo_step, constant_step, polyak_step, TunerConfig, TunerError, TunerKind, TunerState,
    GRAD_NORM_SQ_FLOOR,
};

/// A run is declared divergent once any monitored loss exceeds this value or
/// turns non-finite.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// The gamma*lambda band counted as "at the edge of stability" in summaries.
pub const EOS_BAND: (f64, f64) = (1.6, 2.4);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("diverged at step {step}")]
    Diverged { step: u64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How many records to take from a CIFAR-10 directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetSpec {
    All,
    First(usize),
}

impl SubsetSpec {
    pub fn limit(&self) -> Option<usize> {
        match self {
            SubsetSpec::All => None,
            SubsetSpec::First(n) => Some(*n),
        }
    }
}

impl std::fmt::Display for SubsetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubsetSpec::All => write!(f, "all"),
            SubsetSpec::First(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for SubsetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(SubsetSpec::All);
        }
        s.parse::<usize>()
            .map(SubsetSpec::First)
            .map_err(|_| format!("invalid subset `{s}` (a count or `all`)"))
    }
}

/// Which dataset an experiment trains on.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Cifar10 { dir: PathBuf, subset: SubsetSpec },
    Synthetic { n: usize, d: usize, classes: usize, seed: u64 },
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset, DataError> {
        match self {
            DatasetConfig::Cifar10 { dir, subset } => load_cifar10(dir, subset.limit()),
            DatasetConfig::Synthetic { n, d, classes, seed } => {
                if *n == 0 || *d == 0 || *classes == 0 {
                    return Err(DataError::Invalid(
                        "synthetic n, d, classes must be positive".into(),
                    ));
                }
                Ok(synthetic_classification(*n, *d, *classes, *seed))
            }
        }
    }
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub tuner: TunerConfig,
    pub dataset: DatasetConfig,
    /// 0 denotes full batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub probe: ProbeConfig,
    pub probe_every_epochs: usize,
    /// Window for the stochastic sidecar averages.
    pub stochastic_avg_window: usize,
    /// Metrics CSV destination; `None` runs without logging.
    pub out_path: Option<PathBuf>,
    pub save_checkpoint: Option<PathBuf>,
    /// Internal plumbing (bisection trials switch probing off entirely).
    pub probe_enabled: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::InvalidConfig(m));
        self.model.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.tuner
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        if self.epochs == 0 {
            return invalid("epochs must be at least 1".into());
        }
        if self.probe_every_epochs == 0 {
            return invalid("probe_every_epochs must be at least 1".into());
        }
        if self.stochastic_avg_window == 0 {
            return invalid("stochastic_avg_window must be at least 1".into());
        }
        if self.probe.tol <= 0.0 || self.probe.max_iters == 0 || self.probe.fd_step <= 0.0 {
            return invalid("probe tol, max_iters, fd_step must be positive".into());
        }
        Ok(())
    }
}

/// One optimizer step's metrics. Probe columns are `None` off the cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    /// Loss of the step's own objective (the minibatch in stochastic mode).
    pub batch_loss: f64,
    /// Full-objective loss over the whole training set.
    pub train_loss: Option<f64>,
    pub gamma: f64,
    pub grad_norm_sq: f64,
    pub sharpness: Option<f64>,
    pub gamma_times_sharpness: Option<f64>,
    pub ls_evals: usize,
    pub floored: bool,
}

/// End-of-run digest; the stepsize and band statistics are recomputable from
/// the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Full-objective loss at the final parameters.
    pub final_loss: f64,
    pub steps: u64,
    /// Fraction of probed steps with gamma*sharpness inside [`EOS_BAND`].
    pub eos_band_fraction: Option<f64>,
    pub gamma_min: Option<f64>,
    pub gamma_median: Option<f64>,
    pub gamma_max: Option<f64>,
    /// True when the run stopped early at a stationary point.
    pub converged: bool,
}

impl RunSummary {
    pub fn from_records(records: &[StepRecord], final_loss: f64, converged: bool) -> Self {
        let gammas: Vec<f64> = records.iter().map(|r| r.gamma).collect();
        let probed: Vec<f64> = records
            .iter()
            .filter_map(|r| r.gamma_times_sharpness)
            .collect();
        let eos_band_fraction = if probed.is_empty() {
            None
        } else {
            let hits = probed
                .iter()
                .filter(|&&x| x >= EOS_BAND.0 && x <= EOS_BAND.1)
                .count();
            Some(hits as f64 / probed.len() as f64)
        };
        Self {
            final_loss,
            steps: records.len() as u64,
            eos_band_fraction,
            gamma_min: gammas.iter().copied().reduce(f64::min),
            gamma_median: median(&gammas),
            gamma_max: gammas.iter().copied().reduce(f64::max),
            converged,
        }
    }
}

/// Median with the even-length convention (mean of the middle pair).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

struct CsvSink {
    writer: BufWriter<fs::File>,
    path: PathBuf,
}

impl CsvSink {
    fn create(path: &PathBuf) -> Result<Self, HarnessError> {
        let file = fs::File::create(path).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        let mut sink = Self {
            writer: BufWriter::new(file),
            path: path.clone(),
        };
        sink.line(csv::CSV_HEADER)?;
        Ok(sink)
    }

    fn line(&mut self, text: &str) -> Result<(), HarnessError> {
        writeln!(self.writer, "{text}").map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })
    }

    fn flush(&mut self) -> Result<(), HarnessError> {
        self.writer.flush().map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Runs `w_{t+1} = w_t - gamma_t * grad phi(w_t)` for the configured tuner and
/// batch schedule, streaming one CSV row per step.
///
/// A non-finite or `> 1e12` loss terminates the run with the partial CSV
/// flushed; a stationary point stops it cleanly with `converged = true`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let dataset = cfg.dataset.load()?;
    let spec = &cfg.model;
    if dataset.dim() != spec.input_dim {
        return Err(HarnessError::InvalidConfig(format!(
            "dataset dimension {} does not match model input_dim {}",
            dataset.dim(),
            spec.input_dim
        )));
    }
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= spec.num_classes) {
        return Err(HarnessError::InvalidConfig(format!(
            "dataset label {bad} exceeds num_classes {}",
            spec.num_classes
        )));
    }
    let n = dataset.len();
    if cfg.batch_size > n {
        return Err(HarnessError::InvalidConfig(format!(
            "batch_size {} exceeds dataset size {n}",
            cfg.batch_size
        )));
    }
    let full_mode = cfg.batch_size == 0;

    let mut w = init_params(spec, cfg.seed);
    let full = dataset.full_batch();
    let schedule = BatchSchedule {
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let mut tuner_state = TunerState::default();
    let mut records: Vec<StepRecord> = Vec::new();
    let mut sink = match &cfg.out_path {
        Some(path) => Some(CsvSink::create(path)?),
        None => None,
    };

    let mut step: u64 = 0;
    let mut converged = false;
    let diverged = |step: u64, sink: &mut Option<CsvSink>| -> HarnessError {
        if let Some(s) = sink.as_mut() {
            let _ = s.flush();
        }
        HarnessError::Diverged { step }
    };

    'training: for epoch in 0..cfg.epochs as u64 {
        let probe_epoch = cfg.probe_enabled && epoch % cfg.probe_every_epochs as u64 == 0;
        let batches = schedule.batches(n, epoch);
        for (batch_idx, indices) in batches.iter().enumerate() {
            let minibatch;
            let batch: &Batch = if full_mode {
                &full
            } else {
                minibatch = dataset.gather(indices);
                &minibatch
            };

            let batch_loss = match loss(&w, batch, spec) {
                Ok(v) => v,
                Err(_) => return Err(diverged(step, &mut sink)),
            };
            if !batch_loss.is_finite() || batch_loss > DIVERGENCE_THRESHOLD {
                return Err(diverged(step, &mut sink));
            }

            // Probe the full objective at the pre-step parameters.
            let (train_loss, sharp) = if probe_epoch && batch_idx == 0 {
                let tl = if full_mode {
                    batch_loss
                } else {
                    match loss(&w, &full, spec) {
                        Ok(v) => v,
                        Err(_) => return Err(diverged(step, &mut sink)),
                    }
                };
                if !tl.is_finite() || tl > DIVERGENCE_THRESHOLD {
                    return Err(diverged(step, &mut sink));
                }
                let probe = match sharpness(&w, &full, spec, &cfg.probe) {
                    Ok(p) => p,
                    Err(_) => return Err(diverged(step, &mut sink)),
                };
                (Some(tl), Some(probe.lambda_max))
            } else {
                (None, None)
            };

            let g = match grad(&w, batch, spec) {
                Ok(g) => g,
                Err(_) => return Err(diverged(step, &mut sink)),
            };
            let grad_norm_sq = g.norm_sq();
            if grad_norm_sq < GRAD_NORM_SQ_FLOOR {
                converged = true;
                break 'training;
            }

            let outcome = match cfg.tuner.kind {
                TunerKind::Constant => constant_step(&cfg.tuner),
                TunerKind::Polyak => polyak_step(batch_loss, grad_norm_sq, &cfg.tuner),
                _ => {
                    let oracle = |p: &ParamVector| loss(p, batch, spec).unwrap_or(f64::NAN);
                    match armijo_step(oracle, &w, batch_loss, &g, &cfg.tuner, &mut tuner_state) {
                        Ok(out) => out,
                        Err(TunerError::StationaryPoint) => {
                            converged = true;
                            break 'training;
                        }
                        Err(e) => return Err(HarnessError::InvalidConfig(e.to_string())),
                    }
                }
            };
            if cfg.tuner.kind == TunerKind::Polyak && outcome.floored {
                // Vanished gradient: the Polyak converged signal.
                converged = true;
                break 'training;
            }

            let record = StepRecord {
                step,
                epoch,
                batch_loss,
                train_loss,
                gamma: outcome.gamma,
                grad_norm_sq,
                sharpness: sharp,
                gamma_times_sharpness: sharp.map(|s| outcome.gamma * s),
                ls_evals: outcome.evals,
                floored: outcome.floored,
            };
            if let Some(s) = sink.as_mut() {
                s.line(&csv::record_to_line(&record))?;
            }
            records.push(record);

            w = w.add_scaled(-outcome.gamma, &g);
            step += 1;
        }
    }

    if let Some(s) = sink.as_mut() {
        s.flush()?;
    }
    let final_loss = match loss(&w, &full, spec) {
        Ok(v) if v.is_finite() && v <= DIVERGENCE_THRESHOLD => v,
        _ => return Err(HarnessError::Diverged { step }),
    };
    if !full_mode {
        if let Some(out) = &cfg.out_path {
            write_sidecar(out, &records, cfg.stochastic_avg_window)?;
        }
    }
    if let Some(path) = &cfg.save_checkpoint {
        checkpoint::save_checkpoint(path, spec, &w).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(RunSummary::from_records(&records, final_loss, converged))
}

/// Sidecar path for the stochastic window averages: `<out>.avg.csv` with the
/// original extension replaced.
pub fn sidecar_path(out: &std::path::Path) -> PathBuf {
    out.with_extension("avg.csv")
}

/// Centered moving averages of batch loss and stepsize over `window` steps.
fn write_sidecar(
    out: &std::path::Path,
    records: &[StepRecord],
    window: usize,
) -> Result<(), HarnessError> {
    let path = sidecar_path(out);
    let io_err = |source: std::io::Error| HarnessError::Io {
        path: path.clone(),
        source,
    };
    let file = fs::File::create(&path).map_err(&io_err)?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "step,epoch,batch_loss_avg,gamma_avg").map_err(&io_err)?;
    let half = window / 2;
    for (t, r) in records.iter().enumerate() {
        let lo = t.saturating_sub(half);
        let hi = (t + window - half).min(records.len());
        let span = &records[lo..hi];
        let inv = 1.0 / span.len() as f64;
        let loss_avg: f64 = span.iter().map(|x| x.batch_loss).sum::<f64>() * inv;
        let gamma_avg: f64 = span.iter().map(|x| x.gamma).sum::<f64>() * inv;
        writeln!(
            writer,
            "{},{},{},{}",
            r.step,
            r.epoch,
            csv::format_f64(loss_avg),
            csv::format_f64(gamma_avg)
        )
        .map_err(&io_err)?;
    }
    writer.flush().map_err(&io_err)
}

/// Finds the largest constant stepsize that survives `trial_epochs` of
/// training, by doubling/halving to bracket the divergence boundary and then
/// geometric bisection. Trials run without probes or logging.
pub fn find_max_lr(base: &ExperimentConfig, trial_epochs: usize) -> Result<f64, HarnessError> {
    const BISECTION_STEPS: usize = 12;
    const GROWTH_STEPS: usize = 60;

    let trial = |gamma: f64| -> Result<bool, HarnessError> {
        let mut cfg = base.clone();
        cfg.tuner = TunerConfig::constant(gamma);
        cfg.epochs = trial_epochs.max(1);
        cfg.out_path = None;
        cfg.save_checkpoint = None;
        cfg.probe_enabled = false;
        match run_experiment(&cfg) {
            Ok(_) => Ok(true),
            Err(HarnessError::Diverged { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };

    // Bracket: find one surviving stepsize, then one diverging above it.
    let mut lo = None;
    let mut hi = None;
    let mut gamma = 1e-3;
    for _ in 0..GROWTH_STEPS {
        if trial(gamma)? {
            lo = Some(gamma);
            break;
        }
        hi = Some(gamma);
        gamma *= 0.5;
    }
    let Some(mut lo) = lo else {
        return Err(HarnessError::InvalidConfig(format!(
            "no stable stepsize found down to {gamma:.3e}"
        )));
    };
    if hi.is_none() {
        let mut gamma = lo * 2.0;
        for _ in 0..GROWTH_STEPS {
            if trial(gamma)? {
                lo = gamma;
                gamma *= 2.0;
            } else {
                hi = Some(gamma);
                break;
            }
        }
    }
    let Some(mut hi) = hi else {
        // Nothing diverges in the explored range; report the largest survivor.
        return Ok(lo);
    };
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        if !mid.is_finite() || mid <= lo || mid >= hi {
            break;
        }
        if trial(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0]), Some(3.0));
        assert_eq!(median(&[1.0, 2.0, 10.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), Some(2.5));
    }

    #[test]
    fn subset_spec_parses() {
        assert_eq!("all".parse::<SubsetSpec>().unwrap(), SubsetSpec::All);
        assert_eq!("4096".parse::<SubsetSpec>().unwrap(), SubsetSpec::First(4096));
        assert!("4k".parse::<SubsetSpec>().is_err());
    }

    #[test]
    fn summary_statistics_from_records() {
        let rec = |gamma: f64, gts: Option<f64>| StepRecord {
            step: 0,
            epoch: 0,
            batch_loss: 1.0,
            train_loss: gts.map(|_| 1.0),
            gamma,
            grad_norm_sq: 1.0,
            sharpness: gts.map(|x| x / gamma),
            gamma_times_sharpness: gts,
            ls_evals: 0,
            floored: false,
        };
        let records = vec![
            rec(0.1, Some(2.0)),
            rec(0.2, None),
            rec(0.3, Some(3.0)),
            rec(0.4, Some(1.6)),
        ];
        let s = RunSummary::from_records(&records, 0.5, false);
        assert_eq!(s.steps, 4);
        assert_eq!(s.eos_band_fraction, Some(2.0 / 3.0));
        assert_eq!(s.gamma_min, Some(0.1));
        assert_eq!(s.gamma_median, Some(0.25));
        assert_eq!(s.gamma_max, Some(0.4));
    }
}
