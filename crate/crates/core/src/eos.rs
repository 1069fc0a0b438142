//! Closed-form edge-of-stability model: one-dimensional gradient descent on
//! the top Hessian eigenmode, with the stable-stepsize predictions for each
//! tuner and an exact stability classifier.
//!
//! The model freezes the curvature: along the top eigendirection the loss is
//! `0.5 * lambda_max * a^2`, a gradient step multiplies the coordinate by
//! `(1 - gamma * lambda_max)`, and the boundary of convergence sits at
//! `gamma * lambda_max = 2`. Armijo backtracking can only accept stepsizes up
//! to `2(1-c)/lambda_max`; the Polyak rule evaluates to
//! `min(1/(2 lambda_max), gamma_max)`. Both sit below the boundary, which is
//! precisely the gap this module exposes against measured training dynamics.

/// Tie tolerance for classifying `|1 - gamma*lambda| = 1`: analytic equality
/// is measure-zero, a total classifier needs a window.
pub const NEUTRAL_TOL: f64 = 1e-12;

/// State of gradient descent projected onto the top eigenmode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticState {
    pub lambda_max: f64,
    /// Coordinate along the top eigendirection.
    pub a: f64,
    /// Current stepsize.
    pub gamma: f64,
}

impl QuadraticState {
    pub fn loss(&self) -> f64 {
        0.5 * self.lambda_max * self.a * self.a
    }

    pub fn grad(&self) -> f64 {
        self.lambda_max * self.a
    }
}

/// One gradient-descent step: `a' = (1 - gamma * lambda_max) * a`.
pub fn quadratic_gd_step(state: &QuadraticState) -> QuadraticState {
    QuadraticState {
        a: (1.0 - state.gamma * state.lambda_max) * state.a,
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Contracting,
    Neutral,
    Diverging,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stability::Contracting => write!(f, "contracting"),
            Stability::Neutral => write!(f, "neutral"),
            Stability::Diverging => write!(f, "diverging"),
        }
    }
}

/// Classifies the step multiplier `|1 - gamma * lambda|` against 1.
pub fn stability_class(gamma: f64, lambda: f64) -> Stability {
    let multiplier = (1.0 - gamma * lambda).abs();
    if (multiplier - 1.0).abs() <= NEUTRAL_TOL {
        Stability::Neutral
    } else if multiplier < 1.0 {
        Stability::Contracting
    } else {
        Stability::Diverging
    }
}

/// Largest stepsize Armijo backtracking can accept on the quadratic:
/// `2(1-c)/lambda`.
pub fn armijo_quadratic_bound(lambda: f64, c: f64) -> f64 {
    2.0 * (1.0 - c) / lambda
}

/// Value of the capped Polyak stepsize on the quadratic:
/// `min(1/(2 lambda), gamma_max)`.
pub fn polyak_quadratic_value(lambda: f64, gamma_max: f64) -> f64 {
    (1.0 / (2.0 * lambda)).min(gamma_max)
}

/// One row of the prediction sweep emitted by the `eos-model` CLI subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub c: f64,
    pub gamma_max: f64,
    pub armijo_bound: f64,
    pub polyak_value: f64,
    /// The edge-of-stability stepsize for constant-stepsize descent, `2/lambda`.
    pub gd_eos_stepsize: f64,
}

/// Predicted stable stepsizes per tuner over a `lambda x c` grid.
pub fn sweep(lambdas: &[f64], cs: &[f64], gamma_max: f64) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(lambdas.len() * cs.len());
    for &lambda in lambdas {
        for &c in cs {
            rows.push(SweepRow {
                lambda,
                c,
                gamma_max,
                armijo_bound: armijo_quadratic_bound(lambda, c),
                polyak_value: polyak_quadratic_value(lambda, gamma_max),
                gd_eos_stepsize: 2.0 / lambda,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamVector;
    use crate::tuners::{armijo_step, polyak_step, TunerConfig, TunerKind, TunerState};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gd_step_multipliers() {
        let state = QuadraticState {
            lambda_max: 2.0,
            a: 1.0,
            gamma: 1.0,
        };
        // gamma * lambda = 2: exact EOS oscillation.
        assert_eq!(quadratic_gd_step(&state).a, -1.0);
        // gamma * lambda = 1: one-step solve.
        let solved = quadratic_gd_step(&QuadraticState {
            gamma: 0.5,
            ..state
        });
        assert_eq!(solved.a, 0.0);
        // gamma * lambda = 2.1: growth by 1.1 per step.
        let diverging = quadratic_gd_step(&QuadraticState {
            gamma: 1.05,
            ..state
        });
        assert!((diverging.a.abs() - 1.1).abs() <= 1e-12);
    }

    #[test]
    fn stability_classes_around_two() {
        assert_eq!(stability_class(0.95, 2.0), Stability::Contracting);
        assert_eq!(stability_class(1.0, 2.0), Stability::Neutral);
        assert_eq!(stability_class(1.05, 2.0), Stability::Diverging);
        // gamma * lambda = 0 is also neutral: the iterate does not move.
        assert_eq!(stability_class(1e-20, 1e-20), Stability::Neutral);
    }

    #[test]
    fn armijo_bound_values() {
        assert_eq!(armijo_quadratic_bound(2.0, 0.0), 1.0);
        let b = armijo_quadratic_bound(2.0, 1e-4);
        assert!((b - 0.9999).abs() <= 1e-12, "{b}");
    }

    #[test]
    fn polyak_values_and_cap() {
        assert_eq!(polyak_quadratic_value(4.0, 1.0), 0.125);
        // lambda < 1/2: the uncapped value 1/(2 lambda) = 2 exceeds 1.
        assert_eq!(polyak_quadratic_value(0.25, 1.0), 1.0);
    }

    #[test]
    fn armijo_stable_region_sits_below_eos() {
        for &lambda in &[0.1, 0.5, 1.0, 2.0, 10.0, 300.0] {
            assert_eq!(armijo_quadratic_bound(lambda, 0.0), 2.0 / lambda);
            for &c in &[1e-6, 1e-4, 0.1, 0.9] {
                assert!(armijo_quadratic_bound(lambda, c) < 2.0 / lambda);
            }
        }
    }

    #[test]
    fn polyak_threshold_below_armijo_threshold() {
        // For lambda >= 1/2 and c <= 3/4 the Polyak value is the smaller one.
        let lambdas: Vec<f64> = (0..60).map(|i| 0.5 + i as f64 * 0.5).collect();
        for &lambda in &lambdas {
            for &c in &[0.0, 1e-4, 0.25, 0.5, 0.75] {
                assert!(
                    polyak_quadratic_value(lambda, 1.0) <= armijo_quadratic_bound(lambda, c),
                    "lambda={lambda} c={c}"
                );
            }
        }
    }

    #[test]
    fn armijo_step_lands_in_the_predicted_window() {
        // Brute-force cross-check against the tuners module for 50 random
        // (lambda, c) pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let lambda = rng.random_range(0.05..40.0);
            let c = rng.random_range(0.0..0.5);
            let a = rng.random_range(0.2..1.5);
            let mut cfg = TunerConfig::new(TunerKind::Armijo);
            cfg.c = c;
            let mut state = TunerState::default();
            let w = ParamVector::new(vec![a]);
            let f_w = 0.5 * lambda * a * a;
            let g = ParamVector::new(vec![lambda * a]);
            let out = armijo_step(
                |p| 0.5 * lambda * p[0] * p[0],
                &w,
                f_w,
                &g,
                &cfg,
                &mut state,
            )
            .unwrap();
            let gbar = armijo_quadratic_bound(lambda, c).min(cfg.gamma_max);
            assert!(
                out.gamma <= gbar * (1.0 + 1e-12) && out.gamma > cfg.beta * gbar * (1.0 - 1e-12),
                "lambda={lambda} c={c}: gamma={} window=({}, {}]",
                out.gamma,
                cfg.beta * gbar,
                gbar
            );
        }
    }

    #[test]
    fn polyak_value_is_position_independent_via_tuners() {
        let cfg = TunerConfig::new(TunerKind::Polyak);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let lambda = rng.random_range(0.05..40.0);
            let a = rng.random_range(0.01..3.0) * if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            let f = 0.5 * lambda * a * a;
            let gns = (lambda * a) * (lambda * a);
            let got = polyak_step(f, gns, &cfg).gamma;
            let expected = polyak_quadratic_value(lambda, cfg.gamma_max);
            let rel = (got - expected).abs() / expected;
            assert!(rel <= 1e-12, "lambda={lambda} a={a}: {got} vs {expected}");
        }
    }

    #[test]
    fn iterated_steps_match_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..40 {
            let lambda = rng.random_range(0.1..5.0);
            let gamma = rng.random_range(0.01..2.2 / lambda);
            let a0 = rng.random_range(-1.0..1.0);
            let steps = rng.random_range(1..200usize);
            let mut state = QuadraticState {
                lambda_max: lambda,
                a: a0,
                gamma,
            };
            for _ in 0..steps {
                state = quadratic_gd_step(&state);
            }
            let closed = (1.0 - gamma * lambda).powi(steps as i32) * a0;
            let rel = (state.a - closed).abs() / closed.abs().max(1e-300);
            assert!(rel <= 1e-12, "loop={} closed={closed}", state.a);
        }
    }

    #[test]
    fn sweep_covers_the_grid_in_order() {
        let rows = sweep(&[0.25, 2.0], &[0.0, 1e-4], 1.0);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].lambda, 0.25);
        assert_eq!(rows[0].c, 0.0);
        assert_eq!(rows[1].c, 1e-4);
        assert_eq!(rows[3].armijo_bound, armijo_quadratic_bound(2.0, 1e-4));
        assert_eq!(rows[0].polyak_value, 1.0);
        assert_eq!(rows[3].gd_eos_stepsize, 1.0);
    }
}
