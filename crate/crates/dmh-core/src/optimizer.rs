//! Full-batch alternating training: closed-form B-update followed by
//! gradient steps on each view's bias and weights.
//!
//! Two variants are provided. [`train`] is the production loop — the
//! W-gradient is Frobenius-normalized and the step size decays linearly
//! from `k_s` to `k_e`. [`train_prototype`] is the unnormalized
//! fixed-step variant, kept for ablation of the normalization trick.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DmhError, Result};
use crate::model::{self, frobenius, update_code_matrix_from, CodeMatrix, ViewParams};

/// Standard deviation of the Gaussian used to initialize `W` and `v`.
/// A small symmetric start keeps every sigmoid in its responsive range.
pub const INIT_STD: f64 = 0.01;

/// Guard below which the normalized W-step is skipped for the iteration.
const GRAD_NORM_FLOOR: f64 = 1e-12;

/// Step schedule and stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial step size.
    pub k_s: f64,
    /// Final step size.
    pub k_e: f64,
    /// Maximum number of iterations.
    pub max_iter: usize,
    /// Relative objective-change threshold for convergence.
    pub convergence_rtol: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_s: 0.003,
            k_e: 0.0015,
            max_iter: 400,
            convergence_rtol: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_e > 0.0 && self.k_s >= self.k_e) {
            return Err(DmhError::InvalidConfig(format!(
                "step sizes must satisfy k_s >= k_e > 0, got k_s={} k_e={}",
                self.k_s, self.k_e
            )));
        }
        if self.max_iter < 1 {
            return Err(DmhError::InvalidConfig(
                "max_iter must be at least 1".to_string(),
            ));
        }
        if self.convergence_rtol.is_nan() || self.convergence_rtol < 0.0 {
            return Err(DmhError::InvalidConfig(format!(
                "convergence_rtol must be non-negative, got {}",
                self.convergence_rtol
            )));
        }
        Ok(())
    }
}

/// Per-view hyperparameters handed to the trainer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ViewHyper {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Objective trajectory of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    pub objective_per_iteration: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: Vec<ViewParams>,
    pub codes: CodeMatrix,
    pub trace: TrainTrace,
}

/// Linearly decaying step size `Δt = k_s − (k_s − k_e)·k/K`.
pub fn step_size(k: usize, config: &TrainConfig) -> Result<f64> {
    if k > config.max_iter {
        return Err(DmhError::Contract(format!(
            "iteration index {} exceeds max_iter {}",
            k, config.max_iter
        )));
    }
    let frac = k as f64 / config.max_iter as f64;
    Ok(config.k_s - (config.k_s - config.k_e) * frac)
}

/// Draws the initial `(W, v)` pair for every view from `N(0, INIT_STD²)`.
pub(crate) fn init_params(dims: &[usize], c: usize, seed: u64) -> Vec<(Array2<f64>, Array1<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    dims.iter()
        .map(|&d| {
            let w = Array2::from_shape_fn((d, c), |_| normal.sample(&mut rng));
            let v = Array1::from_shape_fn(c, |_| normal.sample(&mut rng));
            (w, v)
        })
        .collect()
}

fn validate_inputs(
    views: &[Array2<f64>],
    hyper: &[ViewHyper],
    code_length: usize,
    config: &TrainConfig,
) -> Result<()> {
    config.validate()?;
    if views.is_empty() {
        return Err(DmhError::Contract("no views to train on".to_string()));
    }
    if views.len() != hyper.len() {
        return Err(DmhError::Contract(format!(
            "{} views but {} hyperparameter sets",
            views.len(),
            hyper.len()
        )));
    }
    if code_length == 0 {
        return Err(DmhError::InvalidConfig(
            "code length must be positive".to_string(),
        ));
    }
    let n = views[0].nrows();
    for (i, v) in views.iter().enumerate() {
        model::check_finite(v, "view matrix")?;
        if v.nrows() != n {
            return Err(DmhError::Contract(format!(
                "view 0 has {} rows but view {} has {}",
                n,
                i,
                v.nrows()
            )));
        }
        if v.ncols() == 0 || n == 0 {
            return Err(DmhError::Contract(format!("view {i} is empty")));
        }
    }
    for (i, h) in hyper.iter().enumerate() {
        let ok = h.alpha > 0.0 && h.beta > 0.0 && h.gamma >= 0.0;
        if !ok {
            return Err(DmhError::InvalidConfig(format!(
                "view {i}: need alpha > 0, beta > 0, gamma >= 0, got {h:?}"
            )));
        }
    }
    Ok(())
}

enum Variant {
    /// Normalized W-gradient, linear step decay.
    Scheduled,
    /// Raw gradients, fixed step `k_s`.
    Prototype,
}

/// Trains the model with the normalized-gradient, decaying-step loop.
///
/// Each iteration recomputes the code matrix from the current embeddings,
/// evaluates the objective (this is the value recorded in the trace), then
/// steps every view's bias with the raw gradient and its weights with the
/// Frobenius-normalized gradient. Training stops once the relative
/// objective change drops below `convergence_rtol`, or after `max_iter`
/// iterations.
pub fn train(
    views: &[Array2<f64>],
    hyper: &[ViewHyper],
    code_length: usize,
    config: &TrainConfig,
) -> Result<TrainResult> {
    run(views, hyper, code_length, config, Variant::Scheduled)
}

/// The unnormalized fixed-step variant of [`train`].
pub fn train_prototype(
    views: &[Array2<f64>],
    hyper: &[ViewHyper],
    code_length: usize,
    config: &TrainConfig,
) -> Result<TrainResult> {
    run(views, hyper, code_length, config, Variant::Prototype)
}

fn run(
    views: &[Array2<f64>],
    hyper: &[ViewHyper],
    code_length: usize,
    config: &TrainConfig,
    variant: Variant,
) -> Result<TrainResult> {
    validate_inputs(views, hyper, code_length, config)?;

    // Fold β into each view once, up front; the iteration then runs with
    // β = 1 and the original factor is recorded on the returned params.
    let scaled: Vec<Array2<f64>> = views
        .iter()
        .zip(hyper)
        .map(|(x, h)| {
            if h.beta == 1.0 {
                x.clone()
            } else {
                x.mapv(|v| v * h.beta)
            }
        })
        .collect();

    let dims: Vec<usize> = scaled.iter().map(|x| x.ncols()).collect();
    let alphas: Vec<f64> = hyper.iter().map(|h| h.alpha).collect();
    let mut params: Vec<ViewParams> = init_params(&dims, code_length, config.seed)
        .into_iter()
        .zip(hyper)
        .map(|((w, v), h)| ViewParams {
            w,
            v,
            alpha: h.alpha,
            beta: 1.0,
            gamma: h.gamma,
        })
        .collect();

    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev = 0.0_f64;

    for k in 0..config.max_iter {
        let embeddings = scaled
            .iter()
            .zip(&params)
            .map(|(x, p)| model::sigmoid_embed(x, p))
            .collect::<Result<Vec<_>>>()?;
        let codes = update_code_matrix_from(&embeddings, &alphas)?;
        let e = model::objective(&codes, &scaled, &params)?;
        if !e.is_finite() {
            return Err(DmhError::Diverged { iteration: k + 1 });
        }
        trace.push(e);
        if (e - prev).abs() / prev.max(1e-12) < config.convergence_rtol {
            converged = true;
            break;
        }
        prev = e;

        let dt = match variant {
            Variant::Scheduled => step_size(k, config)?,
            Variant::Prototype => config.k_s,
        };
        for (x, p) in scaled.iter().zip(params.iter_mut()) {
            let gv = model::grad_bias(x, p, &codes)?;
            let gw = model::grad_weights(x, p, &codes)?;
            p.v.scaled_add(-dt, &gv);
            match variant {
                Variant::Scheduled => {
                    let norm = frobenius(&gw);
                    if norm >= GRAD_NORM_FLOOR {
                        p.w.scaled_add(-dt / norm, &gw);
                    }
                }
                Variant::Prototype => {
                    p.w.scaled_add(-dt, &gw);
                }
            }
        }
    }

    // Recompute the code matrix from the final parameters. On the
    // convergence path nothing has moved since the last update, so this
    // reproduces the same bits; after max_iter it reflects the last step.
    let embeddings = scaled
        .iter()
        .zip(&params)
        .map(|(x, p)| model::sigmoid_embed(x, p))
        .collect::<Result<Vec<_>>>()?;
    let codes = update_code_matrix_from(&embeddings, &alphas)?;

    // The returned parameters carry the original β and act on the
    // unscaled views.
    for (p, h) in params.iter_mut().zip(hyper) {
        p.beta = h.beta;
    }

    let iterations_run = trace.len();
    Ok(TrainResult {
        params,
        codes,
        trace: TrainTrace {
            objective_per_iteration: trace,
            iterations_run,
            converged,
        },
    })
}
