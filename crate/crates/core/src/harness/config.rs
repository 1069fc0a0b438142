//! Flat key=value experiment configuration: file parsing, CLI-override
//! merging, and resolution into a validated [`ExperimentConfig`].
//!
//! Files are UTF-8, one `key=value` per line, `#` starts a comment. Unknown
//! and duplicate keys are errors, as are explicitly set tuner fields that do
//! not apply to the selected tuner kind.

use std::path::PathBuf;

use crate::model::{LossKind, ModelSpec};
use crate::probe::ProbeConfig;
use crate::tuners::{TunerConfig, TunerKind};

use super::{DatasetConfig, ExperimentConfig, SubsetSpec};

/// Paper-default MLP hidden widths.
pub const DEFAULT_LAYER_WIDTHS: [usize; 6] = [128, 128, 64, 64, 32, 32];

/// A partially specified experiment; `None` means "not set here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub tuner: Option<TunerKind>,
    pub gamma: Option<f64>,
    pub gamma_max: Option<f64>,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub growth: Option<f64>,
    pub f_star: Option<f64>,
    pub gamma_min: Option<f64>,

    pub layer_widths: Option<Vec<usize>>,
    pub loss: Option<LossKind>,
    pub weight_decay: Option<f64>,

    pub dataset: Option<DatasetKind>,
    pub data_dir: Option<PathBuf>,
    pub subset: Option<SubsetSpec>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub classes: Option<usize>,
    pub data_seed: Option<u64>,

    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub probe_every: Option<usize>,
    pub stochastic_avg_window: Option<usize>,
    pub out: Option<PathBuf>,
    pub save_checkpoint: Option<PathBuf>,

    pub probe_tol: Option<f64>,
    pub probe_max_iters: Option<usize>,
    pub fd_step: Option<f64>,
    pub probe_seed: Option<u64>,
    pub probe_enabled: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Cifar10,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(DatasetKind::Synthetic),
            "cifar10" => Ok(DatasetKind::Cifar10),
            other => Err(format!("unknown dataset `{other}` (synthetic|cifar10)")),
        }
    }
}

impl RawConfig {
    /// Parses a config document. Lines are `key=value`; blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(idx) => &raw_line[..idx],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected key=value, got `{line}`", lineno + 1));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
            cfg.set(key, value)
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(cfg)
    }

    /// Assigns one key. Unknown keys name the offending token.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| format!("invalid value for `{key}`: {e}"))
        }
        match key {
            "tuner" => self.tuner = Some(parse(key, value)?),
            "gamma" => self.gamma = Some(parse(key, value)?),
            "gamma_max" => self.gamma_max = Some(parse(key, value)?),
            "c" => self.c = Some(parse(key, value)?),
            "beta" => self.beta = Some(parse(key, value)?),
            "epsilon" => self.epsilon = Some(parse(key, value)?),
            "growth" => self.growth = Some(parse(key, value)?),
            "f_star" => self.f_star = Some(parse(key, value)?),
            "gamma_min" => self.gamma_min = Some(parse(key, value)?),
            "layer_widths" => self.layer_widths = Some(parse_widths(value)?),
            "loss" => self.loss = Some(parse(key, value)?),
            "weight_decay" => self.weight_decay = Some(parse(key, value)?),
            "dataset" => self.dataset = Some(parse(key, value)?),
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "subset" => self.subset = Some(parse(key, value)?),
            "n" => self.n = Some(parse(key, value)?),
            "d" => self.d = Some(parse(key, value)?),
            "classes" => self.classes = Some(parse(key, value)?),
            "data_seed" => self.data_seed = Some(parse(key, value)?),
            "batch_size" => self.batch_size = Some(parse(key, value)?),
            "epochs" => self.epochs = Some(parse(key, value)?),
            "seed" => self.seed = Some(parse(key, value)?),
            "probe_every" => self.probe_every = Some(parse(key, value)?),
            "stochastic_avg_window" => self.stochastic_avg_window = Some(parse(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "save_checkpoint" => self.save_checkpoint = Some(PathBuf::from(value)),
            "probe_tol" => self.probe_tol = Some(parse(key, value)?),
            "probe_max_iters" => self.probe_max_iters = Some(parse(key, value)?),
            "fd_step" => self.fd_step = Some(parse(key, value)?),
            "probe_seed" => self.probe_seed = Some(parse(key, value)?),
            "probe_enabled" => self.probe_enabled = Some(parse(key, value)?),
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Lays `overrides` (CLI flags) on top of `self` (file values).
    pub fn merged(mut self, overrides: Self) -> Self {
        macro_rules! overlay {
            ($($f:ident),* $(,)?) => {
                $( if overrides.$f.is_some() { self.$f = overrides.$f; } )*
            };
        }
        overlay!(
            tuner, gamma, gamma_max, c, beta, epsilon, growth, f_star, gamma_min,
            layer_widths, loss, weight_decay, dataset, data_dir, subset, n, d,
            classes, data_seed, batch_size, epochs, seed, probe_every,
            stochastic_avg_window, out, save_checkpoint, probe_tol,
            probe_max_iters, fd_step, probe_seed, probe_enabled,
        );
        self
    }

    /// Applies defaults and cross-field validation.
    pub fn resolve(self) -> Result<ExperimentConfig, String> {
        let tuner = self.resolve_tuner()?;
        let dataset = self.resolve_dataset()?;
        let (input_dim, num_classes) = match &dataset {
            DatasetConfig::Synthetic { d, classes, .. } => (*d, *classes),
            DatasetConfig::Cifar10 { .. } => {
                (crate::data::CIFAR_INPUT_DIM, crate::data::CIFAR_NUM_CLASSES)
            }
        };
        let model = ModelSpec {
            layer_widths: self
                .layer_widths
                .unwrap_or_else(|| DEFAULT_LAYER_WIDTHS.to_vec()),
            input_dim,
            num_classes,
            loss_kind: self.loss.unwrap_or(LossKind::Squared),
            weight_decay: self.weight_decay.unwrap_or(1e-4),
        };
        model.validate().map_err(|e| e.to_string())?;

        let probe = ProbeConfig {
            tol: self.probe_tol.unwrap_or(1e-3),
            max_iters: self.probe_max_iters.unwrap_or(1000),
            fd_step: self.fd_step.unwrap_or(1e-4),
            seed: self.probe_seed.unwrap_or(0),
        };
        if probe.tol <= 0.0 || probe.max_iters == 0 || probe.fd_step <= 0.0 {
            return Err("probe_tol, probe_max_iters, and fd_step must be positive".into());
        }

        let cfg = ExperimentConfig {
            model,
            tuner,
            dataset,
            batch_size: self.batch_size.unwrap_or(0),
            epochs: self.epochs.unwrap_or(100),
            seed: self.seed.unwrap_or(0),
            probe,
            probe_every_epochs: self.probe_every.unwrap_or(1),
            stochastic_avg_window: self.stochastic_avg_window.unwrap_or(20),
            out_path: self.out,
            save_checkpoint: self.save_checkpoint,
            probe_enabled: self.probe_enabled.unwrap_or(true),
        };
        if cfg.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if cfg.probe_every_epochs == 0 {
            return Err("probe_every must be at least 1".into());
        }
        if cfg.stochastic_avg_window == 0 {
            return Err("stochastic_avg_window must be at least 1".into());
        }
        Ok(cfg)
    }

    fn resolve_tuner(&self) -> Result<TunerConfig, String> {
        let kind = self
            .tuner
            .ok_or("no tuner selected: set `tuner=` in the config or pass --tuner")?;
        // Explicitly set fields that the selected kind never reads are
        // conflicts, never silently ignored.
        let fields: [(&str, bool); 8] = [
            ("gamma", self.gamma.is_some()),
            ("gamma_max", self.gamma_max.is_some()),
            ("c", self.c.is_some()),
            ("beta", self.beta.is_some()),
            ("epsilon", self.epsilon.is_some()),
            ("growth", self.growth.is_some()),
            ("f_star", self.f_star.is_some()),
            ("gamma_min", self.gamma_min.is_some()),
        ];
        let allowed: &[&str] = match kind {
            TunerKind::Constant => &["gamma"],
            TunerKind::Armijo => &["gamma_max", "c", "beta", "gamma_min"],
            TunerKind::ArmijoLoose => &["gamma_max", "c", "beta", "gamma_min", "epsilon"],
            TunerKind::ArmijoWarmstart => &["gamma_max", "c", "beta", "gamma_min", "growth"],
            TunerKind::Polyak => &["gamma_max", "f_star"],
        };
        for (name, set) in fields {
            if set && !allowed.contains(&name) {
                return Err(format!(
                    "config conflict: `{name}` does not apply to tuner `{kind}`"
                ));
            }
        }
        let mut cfg = TunerConfig::new(kind);
        if kind == TunerKind::Constant {
            cfg.gamma = self
                .gamma
                .ok_or("tuner `constant` requires a stepsize: set `gamma` or pass --lr")?;
        }
        if let Some(v) = self.gamma_max {
            cfg.gamma_max = v;
        }
        if let Some(v) = self.c {
            cfg.c = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.growth {
            cfg.growth = v;
        }
        if let Some(v) = self.f_star {
            cfg.f_star = v;
        }
        if let Some(v) = self.gamma_min {
            cfg.gamma_min = v;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn resolve_dataset(&self) -> Result<DatasetConfig, String> {
        let kind = self.dataset.unwrap_or(DatasetKind::Synthetic);
        let reject = |name: &str, set: bool, kind: &str| {
            if set {
                Err(format!(
                    "config conflict: `{name}` does not apply to dataset `{kind}`"
                ))
            } else {
                Ok(())
            }
        };
        match kind {
            DatasetKind::Synthetic => {
                reject("data_dir", self.data_dir.is_some(), "synthetic")?;
                reject("subset", self.subset.is_some(), "synthetic")?;
                Ok(DatasetConfig::Synthetic {
                    n: self.n.unwrap_or(512),
                    d: self.d.unwrap_or(32),
                    classes: self.classes.unwrap_or(10),
                    seed: self.data_seed.unwrap_or(0),
                })
            }
            DatasetKind::Cifar10 => {
                reject("n", self.n.is_some(), "cifar10")?;
                reject("d", self.d.is_some(), "cifar10")?;
                reject("classes", self.classes.is_some(), "cifar10")?;
                reject("data_seed", self.data_seed.is_some(), "cifar10")?;
                let dir = self
                    .data_dir
                    .clone()
                    .ok_or("dataset `cifar10` requires `data_dir`")?;
                Ok(DatasetConfig::Cifar10 {
                    dir,
                    subset: self.subset.unwrap_or(SubsetSpec::All),
                })
            }
        }
    }
}

fn parse_widths(value: &str) -> Result<Vec<usize>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|e| format!("invalid value for `layer_widths`: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_a_full_document() {
        let text = "\
# paper full-batch Armijo setting
tuner = armijo
c = 1e-4
beta = 0.8
layer_widths = 32,32
weight_decay = 1e-4
dataset = synthetic
n = 512
d = 32
classes = 10
batch_size = 0
epochs = 500
probe_every = 1
out = run.csv
";
        let cfg = RawConfig::parse(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.tuner.kind, TunerKind::Armijo);
        assert_eq!(cfg.model.layer_widths, vec![32, 32]);
        assert_eq!(cfg.model.input_dim, 32);
        assert_eq!(cfg.model.num_classes, 10);
        assert_eq!(cfg.epochs, 500);
        assert_eq!(cfg.out_path, Some(PathBuf::from("run.csv")));
        assert!(cfg.probe_enabled);
    }

    #[test]
    fn unknown_key_names_the_token() {
        let err = RawConfig::parse("learning_rate = 0.1\n").unwrap_err();
        assert!(err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let err = RawConfig::parse("epochs = 5\nepochs = 6\n").unwrap_err();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn tuner_field_conflicts_are_rejected() {
        let mut raw = RawConfig::default();
        raw.tuner = Some(TunerKind::Polyak);
        raw.beta = Some(0.5);
        let err = raw.resolve().unwrap_err();
        assert!(err.contains("beta") && err.contains("polyak"), "{err}");

        let mut raw = RawConfig::default();
        raw.tuner = Some(TunerKind::Armijo);
        raw.epsilon = Some(0.1);
        let err = raw.resolve().unwrap_err();
        assert!(err.contains("epsilon"), "{err}");

        let mut raw = RawConfig::default();
        raw.tuner = Some(TunerKind::ArmijoLoose);
        raw.epsilon = Some(0.1);
        assert!(raw.resolve().is_ok());
    }

    #[test]
    fn constant_requires_gamma() {
        let mut raw = RawConfig::default();
        raw.tuner = Some(TunerKind::Constant);
        assert!(raw.clone().resolve().is_err());
        raw.gamma = Some(0.05);
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.tuner.gamma, 0.05);
    }

    #[test]
    fn cli_flags_override_file_values() {
        let file = RawConfig::parse("tuner = armijo\nepochs = 100\nseed = 1\n").unwrap();
        let mut flags = RawConfig::default();
        flags.epochs = Some(7);
        let cfg = file.merged(flags).resolve().unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn dataset_conflicts_are_rejected() {
        let mut raw = RawConfig::default();
        raw.tuner = Some(TunerKind::Armijo);
        raw.dataset = Some(DatasetKind::Cifar10);
        raw.n = Some(100);
        raw.data_dir = Some(PathBuf::from("/tmp/x"));
        let err = raw.resolve().unwrap_err();
        assert!(err.contains("`n`"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let cfg = RawConfig::parse("\n# comment\ntuner = polyak # trailing\n\n").unwrap();
        assert_eq!(cfg.tuner, Some(TunerKind::Polyak));
    }
}
