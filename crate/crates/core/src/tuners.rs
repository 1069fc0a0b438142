//! Stepsize selection rules: constant, Armijo backtracking (plain, loose, and
//! warm-started variants), and the capped Polyak stepsize.
//!
//! The Armijo rules accept the first trial stepsize `gamma` in the sequence
//! `gamma0, beta*gamma0, beta^2*gamma0, ...` satisfying
//!
//! ```text
//! loss(w - gamma * g) <= f_w - c * gamma * ||g||^2 + epsilon
//! ```
//!
//! with `epsilon = 0` except for the loose variant. The Polyak rule is
//! `gamma = min((f_w - f_star) / ||g||^2, gamma_max)` and consumes no extra
//! loss evaluations.

use thiserror::Error;

use crate::params::ParamVector;

/// Gradient norms below this are treated as a converged/stationary signal by
/// the Polyak rule.
pub const GRAD_NORM_SQ_FLOOR: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("stationary point: gradient norm is zero")]
    StationaryPoint,
    #[error("invalid tuner config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TunerKind {
    Constant,
    Armijo,
    ArmijoLoose,
    ArmijoWarmstart,
    Polyak,
}

impl TunerKind {
    pub fn is_armijo(self) -> bool {
        matches!(
            self,
            TunerKind::Armijo | TunerKind::ArmijoLoose | TunerKind::ArmijoWarmstart
        )
    }
}

impl std::fmt::Display for TunerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            TunerKind::Constant => "constant",
            TunerKind::Armijo => "armijo",
            TunerKind::ArmijoLoose => "armijo_loose",
            TunerKind::ArmijoWarmstart => "armijo_warmstart",
            TunerKind::Polyak => "polyak",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for TunerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(TunerKind::Constant),
            "armijo" => Ok(TunerKind::Armijo),
            "armijo_loose" => Ok(TunerKind::ArmijoLoose),
            "armijo_warmstart" => Ok(TunerKind::ArmijoWarmstart),
            "polyak" => Ok(TunerKind::Polyak),
            other => Err(format!(
                "unknown tuner `{other}` (constant|armijo|armijo_loose|armijo_warmstart|polyak)"
            )),
        }
    }
}

/// Tuner hyperparameters. Every field carries its default; which fields are
/// meaningful depends on `kind` (the harness config layer rejects explicit
/// settings that do not apply to the selected kind).
#[derive(Debug, Clone, PartialEq)]
pub struct TunerConfig {
    pub kind: TunerKind,
    /// Fixed stepsize (constant kind only).
    pub gamma: f64,
    /// Initial/maximal trial stepsize for Armijo, cap for Polyak.
    pub gamma_max: f64,
    /// Armijo sufficient-decrease coefficient.
    pub c: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Acceptance slack (loose Armijo only).
    pub epsilon: f64,
    /// Warm-start guess multiplier over the previously accepted stepsize.
    pub growth: f64,
    /// Optimal objective value used by the Polyak rule.
    pub f_star: f64,
    /// Smallest stepsize the backtracking loop will return.
    pub gamma_min: f64,
}

impl TunerConfig {
    pub fn new(kind: TunerKind) -> Self {
        Self {
            kind,
            gamma: 0.1,
            gamma_max: 1.0,
            c: 1e-4,
            beta: 0.8,
            epsilon: 0.0,
            growth: 1.5,
            f_star: 0.0,
            gamma_min: 1e-10,
        }
    }

    pub fn constant(gamma: f64) -> Self {
        let mut cfg = Self::new(TunerKind::Constant);
        cfg.gamma = gamma;
        cfg
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        let err = |m: String| Err(TunerError::InvalidConfig(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return err(format!("beta must lie in (0,1), got {}", self.beta));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min < self.gamma_max) {
            return err(format!(
                "gamma_min must satisfy 0 < gamma_min < gamma_max, got {} vs {}",
                self.gamma_min, self.gamma_max
            ));
        }
        if self.c < 0.0 {
            return err(format!("c must be nonnegative, got {}", self.c));
        }
        if self.epsilon < 0.0 {
            return err(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        if self.growth < 1.0 {
            return err(format!("growth must be >= 1, got {}", self.growth));
        }
        if self.kind == TunerKind::Constant && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return err(format!("constant stepsize must be positive, got {}", self.gamma));
        }
        Ok(())
    }
}

/// Cross-step tuner memory, owned by one training loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TunerState {
    /// Previously accepted stepsize (warm-start memory).
    pub prev_accepted: Option<f64>,
    /// Loss evaluations consumed by the last step, beyond the one the
    /// training loop already performs.
    pub last_evals: usize,
}

/// The stepsize chosen for one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub gamma: f64,
    /// Extra loss evaluations consumed selecting this stepsize.
    pub evals: usize,
    /// True iff `gamma_min` was reached without satisfying the acceptance
    /// condition (Armijo), or the gradient vanished (Polyak).
    pub floored: bool,
}

/// Backtracking line search. `loss_at` evaluates the step's objective at a
/// trial point; a non-finite trial value counts as condition-violated and
/// backtracking continues.
///
/// Requires `f_w = loss_at(w)` and `g` the gradient at `w`.
pub fn armijo_step<F>(
    mut loss_at: F,
    w: &ParamVector,
    f_w: f64,
    g: &ParamVector,
    cfg: &TunerConfig,
    state: &mut TunerState,
) -> Result<StepOutcome, TunerError>
where
    F: FnMut(&ParamVector) -> f64,
{
    debug_assert!(cfg.kind.is_armijo());
    let grad_norm_sq = g.norm_sq();
    if grad_norm_sq == 0.0 {
        return Err(TunerError::StationaryPoint);
    }
    let epsilon = if cfg.kind == TunerKind::ArmijoLoose {
        cfg.epsilon
    } else {
        0.0
    };
    // The warm-started variant guesses growth * (previously accepted), with no
    // cap at gamma_max; plain and loose variants always restart from gamma_max.
    let mut gamma = match (cfg.kind, state.prev_accepted) {
        (TunerKind::ArmijoWarmstart, Some(prev)) => cfg.growth * prev,
        _ => cfg.gamma_max,
    };

    let mut evals = 0;
    let outcome = loop {
        if gamma < cfg.gamma_min {
            break StepOutcome {
                gamma: cfg.gamma_min,
                evals,
                floored: true,
            };
        }
        let trial = w.add_scaled(-gamma, g);
        let f_trial = loss_at(&trial);
        evals += 1;
        if f_trial.is_finite() && f_trial <= f_w - cfg.c * gamma * grad_norm_sq + epsilon {
            break StepOutcome {
                gamma,
                evals,
                floored: false,
            };
        }
        gamma *= cfg.beta;
    };
    state.prev_accepted = Some(outcome.gamma);
    state.last_evals = outcome.evals;
    Ok(outcome)
}

/// Capped Polyak stepsize `min((f_w - f_star) / ||g||^2, gamma_max)`.
///
/// A vanished gradient returns `gamma = 0` with `floored = true` (converged
/// signal); `f_w < f_star` clamps the numerator to zero.
pub fn polyak_step(f_w: f64, grad_norm_sq: f64, cfg: &TunerConfig) -> StepOutcome {
    if grad_norm_sq < GRAD_NORM_SQ_FLOOR {
        return StepOutcome {
            gamma: 0.0,
            evals: 0,
            floored: true,
        };
    }
    let suboptimality = (f_w - cfg.f_star).max(0.0);
    StepOutcome {
        gamma: (suboptimality / grad_norm_sq).min(cfg.gamma_max),
        evals: 0,
        floored: false,
    }
}

/// The fixed-stepsize baseline.
pub fn constant_step(cfg: &TunerConfig) -> StepOutcome {
    StepOutcome {
        gamma: cfg.gamma,
        evals: 0,
        floored: false,
    }
}
