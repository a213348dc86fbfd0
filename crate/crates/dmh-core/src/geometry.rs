//! Numerical oracles for the geometry of the decorrelation regularizer:
//! penalty minimizers, equal-angle structure, rotation invariance, and
//! embedding rank bounds.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DmhError, Result};
use crate::model::{frobenius, sigmoid_embed, ViewParams};

/// Pairwise column angles of a matrix after sign canonicalization.
#[derive(Debug, Clone)]
pub struct AngleProfile {
    /// Angle (radians, in `[0, pi]`) for every column pair `p < q`, in
    /// lexicographic pair order.
    pub pairwise_angles: Vec<f64>,
    /// Largest absolute deviation of any pairwise angle from their mean.
    pub max_deviation: f64,
}

/// Output of [`minimize_or_penalty`].
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub w: Array2<f64>,
    pub profile: AngleProfile,
    pub penalty: f64,
    /// False when the iteration cap was hit before reaching a stationary
    /// point; the best iterate is still returned.
    pub converged: bool,
}

/// Result of [`embedding_rank_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankCheck {
    pub numerical_rank: usize,
    /// The claimed bound `d + 1` for a `d`-dimensional view.
    pub bound: usize,
}

/// The orthogonality penalty `||W^T W - I||_F`. Callers must pass a
/// finite matrix.
pub fn or_penalty(w: &Array2<f64>) -> f64 {
    let c = w.ncols();
    let mut gram = w.t().dot(w);
    for j in 0..c {
        gram[[j, j]] -= 1.0;
    }
    frobenius(&gram)
}

/// `||W^T W - I||_F^2`, the differentiable surrogate the minimizer
/// descends.
fn sq_penalty(w: &Array2<f64>) -> f64 {
    let p = or_penalty(w);
    p * p
}

fn normalize_columns(w: &mut Array2<f64>) {
    for mut col in w.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|x| x / norm);
        }
    }
}

/// One retraction step: move along the (tangent) direction and pull each
/// column back to the unit sphere.
fn retract(w: &Array2<f64>, direction: &Array2<f64>, t: f64) -> Array2<f64> {
    let mut out = w - &(direction * t);
    normalize_columns(&mut out);
    out
}

const MINIMIZE_RESTARTS: usize = 4;
const MINIMIZE_ITER_CAP: usize = 20_000;
const MINIMIZE_GTOL: f64 = 1e-12;

/// Minimizes the orthogonality penalty over matrices with unit-norm
/// columns by projected (Riemannian) gradient descent with backtracking
/// line search, from seeded random starts. Returns the best iterate over
/// a few restarts together with its angle profile.
pub fn minimize_or_penalty(d: usize, c: usize, seed: u64) -> Result<MinimizeResult> {
    if d == 0 || c == 0 {
        return Err(DmhError::InvalidConfig(
            "minimize_or_penalty needs d >= 1 and c >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut best: Option<(f64, Array2<f64>, bool)> = None;

    for _ in 0..MINIMIZE_RESTARTS {
        let mut w = Array2::from_shape_fn((d, c), |_| standard.sample(&mut rng));
        normalize_columns(&mut w);
        let mut fval = sq_penalty(&w);
        let mut step = 0.1f64;
        let mut converged = false;

        for _ in 0..MINIMIZE_ITER_CAP {
            // gradient of ||W^T W - I||_F^2 is 4 W (W^T W - I)
            let mut gram = w.t().dot(&w);
            for j in 0..c {
                gram[[j, j]] -= 1.0;
            }
            let mut g = w.dot(&gram);
            g.mapv_inplace(|x| 4.0 * x);
            // project onto the tangent space of the unit sphere per column
            for j in 0..c {
                let radial = w.column(j).dot(&g.column(j));
                let w_col = w.column(j).to_owned();
                g.column_mut(j).scaled_add(-radial, &w_col);
            }
            let gnorm_sq = g.iter().map(|x| x * x).sum::<f64>();
            if gnorm_sq.sqrt() < MINIMIZE_GTOL {
                converged = true;
                break;
            }
            // Armijo backtracking with warm-started step
            let mut t = (step * 4.0).min(1.0);
            let mut accepted = false;
            while t > 1e-20 {
                let cand = retract(&w, &g, t);
                let fc = sq_penalty(&cand);
                if fc <= fval - 1e-4 * t * gnorm_sq {
                    w = cand;
                    fval = fc;
                    step = t;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // no descent direction at machine precision: stationary
                converged = true;
                break;
            }
        }

        let replace = match &best {
            None => true,
            Some((best_f, _, _)) => fval < *best_f,
        };
        if replace {
            best = Some((fval, w, converged));
        }
    }

    let (_, w, converged) = best.expect("at least one restart ran");
    let profile = angle_profile(&w)?;
    let penalty = or_penalty(&w);
    Ok(MinimizeResult {
        w,
        profile,
        penalty,
        converged,
    })
}

/// Largest column count for which sign canonicalization is exhaustive.
const CANONICALIZE_MAX_COLS: usize = 16;

/// Computes pairwise column angles after choosing the column-sign
/// assignment (exhaustively, for up to 16 columns) that minimizes the
/// spread of angles around their mean. Flipping a column's sign never
/// changes the penalty, so angles are only meaningful up to this
/// canonicalization.
pub fn angle_profile(w: &Array2<f64>) -> Result<AngleProfile> {
    let c = w.ncols();
    if !w.iter().all(|x| x.is_finite()) {
        return Err(DmhError::NonFinite("angle profile input".into()));
    }
    let mut norms = Vec::with_capacity(c);
    for col in w.columns() {
        let norm = col.dot(&col).sqrt();
        if norm == 0.0 {
            return Err(DmhError::Contract("zero column has no direction".into()));
        }
        norms.push(norm);
    }
    if c < 2 {
        return Ok(AngleProfile {
            pairwise_angles: Vec::new(),
            max_deviation: 0.0,
        });
    }
    let mut cosines = Vec::with_capacity(c * (c - 1) / 2);
    for p in 0..c {
        for q in p + 1..c {
            let cosine = w.column(p).dot(&w.column(q)) / (norms[p] * norms[q]);
            cosines.push(((p, q), cosine.clamp(-1.0, 1.0)));
        }
    }

    let deviation = |angles: &[f64]| -> f64 {
        let mean = angles.iter().sum::<f64>() / angles.len() as f64;
        angles.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max)
    };

    if c > CANONICALIZE_MAX_COLS {
        let angles: Vec<f64> = cosines.iter().map(|&(_, x)| x.acos()).collect();
        let dev = deviation(&angles);
        return Ok(AngleProfile {
            pairwise_angles: angles,
            max_deviation: dev,
        });
    }

    let mut best_angles = Vec::new();
    let mut best_dev = f64::INFINITY;
    for assignment in 0u32..(1u32 << (c - 1)) {
        // column 0 keeps its sign; bit j-1 flips column j
        let sign = |j: usize| -> f64 {
            if j == 0 || assignment >> (j - 1) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let angles: Vec<f64> = cosines
            .iter()
            .map(|&((p, q), x)| (sign(p) * sign(q) * x).acos())
            .collect();
        let dev = deviation(&angles);
        if dev < best_dev {
            best_dev = dev;
            best_angles = angles;
        }
    }
    Ok(AngleProfile {
        pairwise_angles: best_angles,
        max_deviation: best_dev,
    })
}

/// Checks that an orthogonal change of basis leaves the penalty fixed:
/// returns `|or_penalty(W R) - or_penalty(W)|`, which is below 1e-8 for
/// any finite W. R must be orthogonal within 1e-10.
pub fn rotation_invariance_check(w: &Array2<f64>, r: &Array2<f64>) -> Result<f64> {
    let c = w.ncols();
    if r.dim() != (c, c) {
        return Err(DmhError::Contract(format!(
            "rotation must be {c}x{c}, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let mut gram = r.t().dot(r);
    for j in 0..c {
        gram[[j, j]] -= 1.0;
    }
    let worst = gram.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if !worst.is_finite() || worst > 1e-10 {
        return Err(DmhError::Contract(format!(
            "matrix is not orthogonal: max |R^T R - I| entry = {worst:e}"
        )));
    }
    Ok((or_penalty(&w.dot(r)) - or_penalty(w)).abs())
}

/// Draws a random orthogonal matrix: modified Gram-Schmidt QR of a
/// standard Gaussian matrix, with re-orthogonalization for stability.
pub fn random_orthogonal<R: Rng>(dim: usize, rng: &mut R) -> Array2<f64> {
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let a = Array2::from_shape_fn((dim, dim), |_| standard.sample(rng));
        let mut q: Array2<f64> = Array2::zeros((dim, dim));
        let mut degenerate = false;
        for j in 0..dim {
            let mut col: Array1<f64> = a.column(j).to_owned();
            for _ in 0..2 {
                for k in 0..j {
                    let proj = q.column(k).dot(&col);
                    let qk = q.column(k).to_owned();
                    col.scaled_add(-proj, &qk);
                }
            }
            let norm = col.dot(&col).sqrt();
            if norm < 1e-12 {
                degenerate = true;
                break;
            }
            col.mapv_inplace(|x| x / norm);
            q.column_mut(j).assign(&col);
        }
        if !degenerate {
            return q;
        }
    }
}

/// Singular values of a matrix by one-sided Jacobi rotations, sorted in
/// descending order.
pub fn jacobi_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let mut m = a.clone();
    let (n, c) = m.dim();
    if n == 0 || c == 0 {
        return Vec::new();
    }
    for _sweep in 0..60 {
        let mut worst = 0.0f64;
        for p in 0..c {
            for q in p + 1..c {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    let (x, y) = (m[[i, p]], m[[i, q]]);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let normalized = apq.abs() / (app * aqq).sqrt();
                worst = worst.max(normalized);
                if normalized < 1e-15 {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = t * cos;
                for i in 0..n {
                    let (x, y) = (m[[i, p]], m[[i, q]]);
                    m[[i, p]] = cos * x - sin * y;
                    m[[i, q]] = sin * x + cos * y;
                }
            }
        }
        if worst < 1e-14 {
            break;
        }
    }
    let mut sigmas: Vec<f64> = (0..c)
        .map(|j| m.column(j).dot(&m.column(j)).sqrt())
        .collect();
    sigmas.sort_by(|a, b| b.total_cmp(a));
    sigmas
}

/// Relative spectral cutoff for the numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Computes the numerical rank of the sigmoid embedding of a view (count
/// of singular values above `1e-8 * sigma_max`) alongside the claimed
/// bound `d + 1`. Asserts nothing itself; callers compare the two.
pub fn embedding_rank_bound_check(view: &Array2<f64>, params: &ViewParams) -> Result<RankCheck> {
    let embedding = sigmoid_embed(view, params)?;
    let sigmas = jacobi_singular_values(&embedding);
    let sigma_max = sigmas.first().copied().unwrap_or(0.0);
    let numerical_rank = if sigma_max == 0.0 {
        0
    } else {
        sigmas
            .iter()
            .filter(|&&s| s > RANK_TOLERANCE * sigma_max)
            .count()
    };
    Ok(RankCheck {
        numerical_rank,
        bound: view.ncols() + 1,
    })
}
