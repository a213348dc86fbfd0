//! The hashing model: sigmoid embeddings, the minimum-correlation
//! regularizer (MCR), the joint quantization objective, the closed-form
//! binary code update, and the analytic gradients used by the optimizer.
//!
//! Conventions used throughout: a view matrix `X` is `n×d` (samples by
//! features), weights `W` are `d×c`, the bias `v` has length `c`, and the
//! code matrix `B` is `n×c` with entries in `{0, 1}`. The embedding of a
//! view is `C = sigmoid(β·X·W + 1vᵀ)`, with every entry kept strictly
//! inside the open interval `(0, 1)`.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{DmhError, Result};

/// Binary code matrix, `n×c`, entries exactly 0 or 1.
pub type CodeMatrix = Array2<u8>;

/// Real embedding matrix, `n×c`, entries strictly in `(0, 1)`.
pub type EmbeddingMatrix = Array2<f64>;

/// Per-view trainable parameters plus the fixed hyperparameters.
///
/// `beta` records the rescale factor that was folded into the view matrix
/// before training started; the stored `w` and `v` operate on the
/// *unscaled* view, i.e. the pre-activation is `beta·X·W + 1vᵀ`.
#[derive(Debug, Clone)]
pub struct ViewParams {
    pub w: Array2<f64>,
    pub v: Array1<f64>,
    /// Positive view weight α.
    pub alpha: f64,
    /// Positive rescale factor β applied to the view matrix.
    pub beta: f64,
    /// Non-negative regularization weight γ; zero disables the MCR term.
    pub gamma: f64,
}

impl ViewParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(DmhError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(DmhError::InvalidConfig(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(DmhError::InvalidConfig(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.w.iter().any(|x| !x.is_finite()) || self.v.iter().any(|x| !x.is_finite()) {
            return Err(DmhError::NonFinite("view parameters".to_string()));
        }
        if self.w.ncols() != self.v.len() {
            return Err(DmhError::Contract(format!(
                "W has {} columns but v has length {}",
                self.w.ncols(),
                self.v.len()
            )));
        }
        Ok(())
    }

    /// Code length this parameter set produces.
    pub fn code_length(&self) -> usize {
        self.w.ncols()
    }
}

/// Numerically stable logistic function.
///
/// Evaluates `1/(1+e^{-z})` without overflowing for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smallest representable embedding value; keeps `C` inside `(0, 1)` so the
/// chain term `C(1-C)` and the quantization residual never degenerate to an
/// exact endpoint.
const EMBED_MIN: f64 = f64::MIN_POSITIVE;
const EMBED_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub(crate) fn check_finite(data: &Array2<f64>, what: &str) -> Result<()> {
    if data.iter().any(|x| !x.is_finite()) {
        return Err(DmhError::NonFinite(what.to_string()));
    }
    Ok(())
}

pub(crate) fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Embeds a view: `C = sigmoid(β·X·W + 1vᵀ)`.
///
/// Entries saturate toward — but never reach — 0 and 1.
pub fn sigmoid_embed(view: &Array2<f64>, params: &ViewParams) -> Result<EmbeddingMatrix> {
    check_finite(view, "view matrix")?;
    if view.ncols() != params.w.nrows() {
        return Err(DmhError::Contract(format!(
            "view has {} features but W has {} rows",
            view.ncols(),
            params.w.nrows()
        )));
    }
    if params.w.ncols() != params.v.len() {
        return Err(DmhError::Contract(format!(
            "W has {} columns but v has length {}",
            params.w.ncols(),
            params.v.len()
        )));
    }
    let mut pre = view.dot(&params.w);
    if params.beta != 1.0 {
        pre.mapv_inplace(|z| z * params.beta);
    }
    for mut row in pre.rows_mut() {
        row += &params.v;
    }
    pre.mapv_inplace(|z| sigmoid(z).clamp(EMBED_MIN, EMBED_MAX));
    Ok(pre)
}

/// The simplified minimum-correlation value `‖CᵀC/n‖_F`.
///
/// Accepts any real matrix (not only valid embeddings); returns 0 exactly
/// when `C` is the zero matrix.
pub fn mcr_value(c: &Array2<f64>) -> f64 {
    let n = c.nrows() as f64;
    frobenius(&c.t().dot(c)) / n
}

/// Squared quantization residual `Σ (B_mk − C_mk)²`.
pub fn quantization_loss(b: &CodeMatrix, c: &EmbeddingMatrix) -> f64 {
    debug_assert_eq!(b.dim(), c.dim());
    Zip::from(b).and(c).fold(0.0, |acc, &bit, &v| {
        let r = bit as f64 - v;
        acc + r * r
    })
}

/// Joint objective `E = Σᵢ αᵢ·(‖B − Cⁱ‖_F² + γᵢ·‖(Cⁱ)ᵀCⁱ/n‖_F²)`.
///
/// The regularizer enters squared so the objective is differentiable
/// everywhere, including at perfectly decorrelated embeddings.
pub fn objective(b: &CodeMatrix, views: &[Array2<f64>], params: &[ViewParams]) -> Result<f64> {
    if views.is_empty() || views.len() != params.len() {
        return Err(DmhError::Contract(format!(
            "{} views but {} parameter sets",
            views.len(),
            params.len()
        )));
    }
    let mut total = 0.0;
    for (x, p) in views.iter().zip(params) {
        let c = sigmoid_embed(x, p)?;
        if b.dim() != c.dim() {
            return Err(DmhError::Contract(format!(
                "code matrix is {:?} but embedding is {:?}",
                b.dim(),
                c.dim()
            )));
        }
        let mut term = quantization_loss(b, &c);
        if p.gamma > 0.0 {
            let m = mcr_value(&c);
            term += p.gamma * m * m;
        }
        total += p.alpha * term;
    }
    Ok(total)
}

/// Rounds the α-weighted average of embeddings to the binary code matrix:
/// `B = round((Σᵢ αᵢCⁱ)/Σᵢ αᵢ)`, with 0.5 rounding up.
///
/// This is the exact minimizer of the γ=0 objective over binary `B` for
/// fixed embeddings.
pub fn update_code_matrix(views: &[Array2<f64>], params: &[ViewParams]) -> Result<CodeMatrix> {
    let embeddings = views
        .iter()
        .zip(params)
        .map(|(x, p)| sigmoid_embed(x, p))
        .collect::<Result<Vec<_>>>()?;
    let alphas: Vec<f64> = params.iter().map(|p| p.alpha).collect();
    update_code_matrix_from(&embeddings, &alphas)
}

/// Same as [`update_code_matrix`] but starting from precomputed embeddings.
pub fn update_code_matrix_from(
    embeddings: &[EmbeddingMatrix],
    alphas: &[f64],
) -> Result<CodeMatrix> {
    if embeddings.is_empty() || embeddings.len() != alphas.len() {
        return Err(DmhError::Contract(format!(
            "{} embeddings but {} weights",
            embeddings.len(),
            alphas.len()
        )));
    }
    let dim = embeddings[0].dim();
    for e in embeddings {
        if e.dim() != dim {
            return Err(DmhError::Contract(format!(
                "embedding shapes differ: {:?} vs {:?}",
                dim,
                e.dim()
            )));
        }
    }
    let total: f64 = alphas.iter().sum();
    let mut avg = Array2::<f64>::zeros(dim);
    for (e, &a) in embeddings.iter().zip(alphas) {
        avg.scaled_add(a / total, e);
    }
    Ok(avg.mapv(|x| u8::from(x >= 0.5)))
}

/// Per-entry upstream gradient shared by the bias and weight gradients:
/// `G = α·[2(C−B) + (4γ/n²)·C(CᵀC)] ∘ C ∘ (1−C)`.
fn grad_premul(c: &EmbeddingMatrix, b: &CodeMatrix, alpha: f64, gamma: f64) -> Array2<f64> {
    let n = c.nrows() as f64;
    let mut g: Array2<f64>;
    if gamma > 0.0 {
        let gram = c.t().dot(c);
        g = c.dot(&gram);
        let coeff = 4.0 * gamma / (n * n);
        Zip::from(&mut g).and(c).and(b).for_each(|gi, &ci, &bi| {
            *gi = alpha * (2.0 * (ci - bi as f64) + coeff * *gi) * ci * (1.0 - ci);
        });
    } else {
        g = Array2::zeros(c.dim());
        Zip::from(&mut g).and(c).and(b).for_each(|gi, &ci, &bi| {
            *gi = alpha * 2.0 * (ci - bi as f64) * ci * (1.0 - ci);
        });
    }
    g
}

/// Exact gradient of [`objective`] with respect to the bias `v` of one view,
/// holding everything else fixed: the column sums of the chain term.
pub fn grad_bias(view: &Array2<f64>, params: &ViewParams, b: &CodeMatrix) -> Result<Array1<f64>> {
    let c = sigmoid_embed(view, params)?;
    if b.dim() != c.dim() {
        return Err(DmhError::Contract(format!(
            "code matrix is {:?} but embedding is {:?}",
            b.dim(),
            c.dim()
        )));
    }
    let g = grad_premul(&c, b, params.alpha, params.gamma);
    Ok(g.sum_axis(Axis(0)))
}

/// Exact gradient of [`objective`] with respect to the weights `W` of one
/// view: `β·Xᵀ·G` with the same chain term as [`grad_bias`].
pub fn grad_weights(
    view: &Array2<f64>,
    params: &ViewParams,
    b: &CodeMatrix,
) -> Result<Array2<f64>> {
    let c = sigmoid_embed(view, params)?;
    if b.dim() != c.dim() {
        return Err(DmhError::Contract(format!(
            "code matrix is {:?} but embedding is {:?}",
            b.dim(),
            c.dim()
        )));
    }
    let g = grad_premul(&c, b, params.alpha, params.gamma);
    let mut gw = view.t().dot(&g);
    if params.beta != 1.0 {
        gw.mapv_inplace(|x| x * params.beta);
    }
    Ok(gw)
}
