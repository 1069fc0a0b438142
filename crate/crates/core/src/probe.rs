//! Sharpness estimation: matrix-free Hessian-vector products via central
//! differences of the gradient, and power iteration for the top eigenvalue.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{grad, Batch, ModelError, ModelSpec};
use crate::params::ParamVector;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("direction vector has zero norm")]
    ZeroVector,
    #[error("operator dimension must be positive")]
    ZeroDim,
}

/// Power-iteration controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Stop once the eigenvalue estimate changes by at most
    /// `tol * max(1, |lambda|)` between iterations.
    pub tol: f64,
    pub max_iters: usize,
    /// Central-difference step for Hessian-vector products.
    pub fd_step: f64,
    /// Seed for the random starting vector.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 1000,
            fd_step: 1e-4,
            seed: 0,
        }
    }
}

/// Estimated top eigenvalue with convergence diagnostics.
///
/// `lambda_max` is the Rayleigh quotient of `vector` under the probed
/// operator, so it can be recomputed from the result.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub lambda_max: f64,
    /// Operator applications performed.
    pub iterations: usize,
    /// Last observed |change| in the eigenvalue estimate (infinite until two
    /// estimates exist).
    pub residual: f64,
    pub converged: bool,
    /// Power iteration tracks the largest-|lambda| eigenvalue; a negative
    /// result is flagged here rather than silently negated.
    pub negative: bool,
    /// The unit iterate whose Rayleigh quotient is `lambda_max`.
    pub vector: Vec<f64>,
}

/// Hessian-vector product of an arbitrary gradient oracle:
/// `(grad(w + h*v_hat) - grad(w - h*v_hat)) / (2h) * ||v||` with
/// `v_hat = v / ||v||`.
pub fn hvp_of<G>(
    mut grad_at: G,
    at: &ParamVector,
    v: &ParamVector,
    fd_step: f64,
) -> Result<ParamVector, ProbeError>
where
    G: FnMut(&ParamVector) -> Result<ParamVector, ModelError>,
{
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return Err(ProbeError::ZeroVector);
    }
    let unit = v.scaled(1.0 / v_norm);
    let g_plus = grad_at(&at.add_scaled(fd_step, &unit))?;
    let g_minus = grad_at(&at.add_scaled(-fd_step, &unit))?;
    let scale = v_norm / (2.0 * fd_step);
    let values: Vec<f64> = g_plus
        .values()
        .iter()
        .zip(g_minus.values())
        .map(|(p, m)| (p - m) * scale)
        .collect();
    let out = ParamVector::new(values);
    out.ensure_finite("hessian-vector product")
        .map_err(|_| ProbeError::NonFinite("hessian-vector product".into()))?;
    Ok(out)
}

/// Hessian-vector product of the training objective at `(params, batch)`.
/// The weight-decay contribution `mu * v` arrives through the gradient.
pub fn hvp(
    params: &ParamVector,
    v: &ParamVector,
    batch: &Batch,
    spec: &ModelSpec,
    fd_step: f64,
) -> Result<ParamVector, ProbeError> {
    hvp_of(|w| grad(w, batch, spec), params, v, fd_step)
}

/// Power iteration over a (numerically) linear symmetric operator.
///
/// Starting from a seeded random unit vector, iterates
/// `v_{k+1} = apply(v_k) / ||apply(v_k)||` with the Rayleigh estimate
/// `lambda_k = v_k . apply(v_k)`, and stops once the estimate changes by at
/// most `tol * max(1, |lambda_k|)` or `max_iters` applications are spent.
pub fn power_iteration<A>(
    mut apply: A,
    dim: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult, ProbeError>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>, ProbeError>,
{
    if dim == 0 {
        return Err(ProbeError::ZeroDim);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = loop {
        let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = norm(&cand);
        if norm > 0.0 {
            break scale(&cand, 1.0 / norm);
        }
    };

    let mut lambda = 0.0;
    let mut lambda_prev: Option<f64> = None;
    let mut residual = f64::INFINITY;
    for k in 1..=cfg.max_iters {
        let u = apply(&v)?;
        if u.len() != dim {
            return Err(ProbeError::NonFinite(format!(
                "operator returned {} entries, expected {dim}",
                u.len()
            )));
        }
        lambda = dot(&v, &u);
        if !lambda.is_finite() {
            return Err(ProbeError::NonFinite("eigenvalue estimate".into()));
        }
        let u_norm = norm(&u);
        if u_norm == 0.0 {
            // The operator annihilates the iterate.
            return Ok(ProbeResult {
                lambda_max: 0.0,
                iterations: k,
                residual: 0.0,
                converged: true,
                negative: false,
                vector: v,
            });
        }
        if let Some(prev) = lambda_prev {
            residual = (lambda - prev).abs();
            if residual <= cfg.tol * lambda.abs().max(1.0) {
                return Ok(ProbeResult {
                    lambda_max: lambda,
                    iterations: k,
                    residual,
                    converged: true,
                    negative: lambda < 0.0,
                    vector: v,
                });
            }
        }
        lambda_prev = Some(lambda);
        v = scale(&u, 1.0 / u_norm);
    }
    Ok(ProbeResult {
        lambda_max: lambda,
        iterations: cfg.max_iters,
        residual,
        converged: false,
        negative: lambda < 0.0,
        vector: v,
    })
}

/// Sharpness of the training objective: power iteration over [`hvp`] at
/// `(params, batch)`.
pub fn sharpness(
    params: &ParamVector,
    batch: &Batch,
    spec: &ModelSpec,
    cfg: &ProbeConfig,
) -> Result<ProbeResult, ProbeError> {
    power_iteration(
        |v| {
            hvp(
                params,
                &ParamVector::new(v.to_vec()),
                batch,
                spec,
                cfg.fd_step,
            )
            .map(ParamVector::into_values)
        },
        params.len(),
        cfg,
    )
}

/// Sharpness of an arbitrary objective given through its gradient oracle.
pub fn sharpness_of<G>(
    mut grad_at: G,
    at: &ParamVector,
    cfg: &ProbeConfig,
) -> Result<ProbeResult, ProbeError>
where
    G: FnMut(&ParamVector) -> Result<ParamVector, ModelError>,
{
    power_iteration(
        |v| {
            hvp_of(
                &mut grad_at,
                at,
                &ParamVector::new(v.to_vec()),
                cfg.fd_step,
            )
            .map(ParamVector::into_values)
        },
        at.len(),
        cfg,
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, LossKind};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matvec(m: &[Vec<f64>]) -> impl FnMut(&[f64]) -> Result<Vec<f64>, ProbeError> + '_ {
        |v: &[f64]| {
            Ok(m.iter()
                .map(|row| row.iter().zip(v).fold(0.0, |a, (x, y)| a + x * y))
                .collect())
        }
    }

    #[test]
    fn hvp_is_exact_on_explicit_quadratics() {
        // 0.5 w^T A w with A = diag(3, 1): grad = A w, so H v = A v exactly.
        let a = [3.0, 1.0];
        let grad_at = |w: &ParamVector| -> Result<ParamVector, ModelError> {
            Ok(ParamVector::new(vec![a[0] * w[0], a[1] * w[1]]))
        };
        let at = ParamVector::new(vec![0.4, -0.3]);
        let out = hvp_of(grad_at, &at, &ParamVector::new(vec![1.0, 0.0]), 1e-4).unwrap();
        assert!((out[0] - 3.0).abs() <= 1e-8);
        assert!(out[1].abs() <= 1e-8);

        // Linearity in the probe direction: scaling v by 10 scales the output.
        let base = hvp_of(grad_at, &at, &ParamVector::new(vec![0.3, 0.7]), 1e-4).unwrap();
        let scaled = hvp_of(grad_at, &at, &ParamVector::new(vec![3.0, 7.0]), 1e-4).unwrap();
        for i in 0..2 {
            let rel = (scaled[i] - 10.0 * base[i]).abs() / (10.0 * base[i]).abs().max(1e-12);
            assert!(rel <= 1e-8, "entry {i}: rel {rel}");
        }
    }

    #[test]
    fn hvp_rejects_zero_direction() {
        let grad_at = |w: &ParamVector| -> Result<ParamVector, ModelError> { Ok(w.clone()) };
        let at = ParamVector::new(vec![1.0]);
        assert!(matches!(
            hvp_of(grad_at, &at, &ParamVector::zeros(1), 1e-4),
            Err(ProbeError::ZeroVector)
        ));
    }

    #[test]
    fn hvp_linearity_and_symmetry_on_a_smooth_mlp_point() {
        let spec = ModelSpec {
            layer_widths: vec![4],
            input_dim: 3,
            num_classes: 2,
            loss_kind: LossKind::Squared,
            weight_decay: 1e-4,
        };
        let params = init_params(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inputs: Vec<f64> = (0..4 * 3).map(|_| rng.random_range(0.5..1.5)).collect();
        let batch = Batch::new(inputs, vec![0, 1, 0, 1], 3).unwrap();
        let p = params.len();
        let rand_vec = |rng: &mut ChaCha8Rng| {
            ParamVector::new((0..p).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
        };
        let u = rand_vec(&mut rng);
        let v = rand_vec(&mut rng);

        let h = 1e-5;
        let hu = hvp(&params, &u, &batch, &spec, h).unwrap();
        let hv = hvp(&params, &v, &batch, &spec, h).unwrap();
        let combo = u.add_scaled(0.7, &v); // u + 0.7 v
        let h_combo = hvp(&params, &combo, &batch, &spec, h).unwrap();
        let expected = hu.add_scaled(0.7, &hv);
        let rel = h_combo.add_scaled(-1.0, &expected).norm() / expected.norm();
        assert!(rel <= 1e-6, "linearity violated: rel {rel}");

        let ut_hv = u.dot(&hv);
        let vt_hu = v.dot(&hu);
        let rel = (ut_hv - vt_hu).abs() / ut_hv.abs().max(1e-12);
        assert!(rel <= 1e-6, "symmetry violated: {ut_hv} vs {vt_hu}");
    }

    #[test]
    fn power_iteration_finds_top_of_known_spectrum() {
        let m = vec![
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ];
        let cfg = ProbeConfig::default();
        let out = power_iteration(matvec(&m), 3, &cfg).unwrap();
        assert!(out.converged);
        assert!(!out.negative);
        assert!((out.lambda_max - 3.0).abs() / 3.0 <= 1e-2, "{}", out.lambda_max);
    }

    #[test]
    fn power_iteration_on_identity_converges_after_one_check() {
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = power_iteration(matvec(&m), 2, &ProbeConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 2);
        assert_eq!(out.lambda_max, 1.0);
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn power_iteration_zero_operator_reports_zero() {
        let out = power_iteration(|_v| Ok(vec![0.0, 0.0]), 2, &ProbeConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.lambda_max, 0.0);
    }

    #[test]
    fn power_iteration_flags_negative_dominant_eigenvalue() {
        let m = vec![vec![-5.0, 0.0], vec![0.0, 2.0]];
        let out = power_iteration(matvec(&m), 2, &ProbeConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.negative);
        assert!((out.lambda_max + 5.0).abs() / 5.0 <= 1e-2);
    }

    #[test]
    fn power_iteration_is_deterministic_given_seed() {
        let m = vec![vec![2.0, 0.3], vec![0.3, 1.0]];
        let cfg = ProbeConfig::default();
        let a = power_iteration(matvec(&m), 2, &cfg).unwrap();
        let b = power_iteration(matvec(&m), 2, &cfg).unwrap();
        assert_eq!(a, b);
        let other = power_iteration(
            matvec(&m),
            2,
            &ProbeConfig {
                seed: 1,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(a.lambda_max.is_finite(), other.lambda_max.is_finite());
    }

    #[test]
    fn lambda_is_rayleigh_quotient_of_returned_vector() {
        let m = vec![
            vec![2.0, 0.4, 0.0],
            vec![0.4, 1.0, -0.3],
            vec![0.0, -0.3, 0.7],
        ];
        let out = power_iteration(matvec(&m), 3, &ProbeConfig::default()).unwrap();
        let mut apply = matvec(&m);
        let image = apply(&out.vector).unwrap();
        // The iterate is unit by construction, so the quotient is plain dot.
        let rayleigh = dot(&out.vector, &image);
        assert_eq!(out.lambda_max, rayleigh);
        let norm_sq = dot(&out.vector, &out.vector);
        assert!((norm_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sharpness_of_scalar_quadratic_recovers_curvature() {
        // grad(w) = 4 w, i.e. f(w) = 2 w^2 with Hessian 4.
        let out = sharpness_of(
            |w: &ParamVector| Ok(ParamVector::new(vec![4.0 * w[0]])),
            &ParamVector::new(vec![1.0]),
            &ProbeConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.lambda_max - 4.0).abs() <= 1e-3 * 4.0, "{}", out.lambda_max);
    }

    #[test]
    fn sharpness_of_pure_weight_decay_is_mu() {
        let mu = 1e-4;
        let out = sharpness_of(
            |w: &ParamVector| Ok(w.scaled(mu)),
            &ParamVector::new(vec![0.3, -0.2, 0.9]),
            &ProbeConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.lambda_max - mu).abs() <= 1e-3 * mu.max(1.0), "{}", out.lambda_max);
    }

    #[test]
    fn sharpness_of_linear_model_matches_hand_hessian() {
        // One linear layer, o = w x + b, squared loss, one sample (x, target 1):
        // the Hessian is [[x^2, x], [x, 1]] with top eigenvalue x^2 + 1.
        let spec = ModelSpec {
            layer_widths: vec![],
            input_dim: 1,
            num_classes: 1,
            loss_kind: LossKind::Squared,
            weight_decay: 0.0,
        };
        let x = 3.0_f64.sqrt();
        let batch = Batch::new(vec![x], vec![0], 1).unwrap();
        let params = ParamVector::new(vec![0.2, -0.1]);
        let out = sharpness(&params, &batch, &spec, &ProbeConfig::default()).unwrap();
        assert!(out.converged);
        let expected = x * x + 1.0;
        assert!(
            (out.lambda_max - expected).abs() / expected <= 1e-2,
            "{} vs {expected}",
            out.lambda_max
        );
    }
}
