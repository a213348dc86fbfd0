//! Multimodal dataset containers, synthetic instance generation,
//! train/test splitting, and feature scaling.
//!
//! A dataset is a list of row-aligned views plus a 0/1 label matrix. The
//! label matrix doubles as one extra view (the "label view") so that
//! supervision can participate in training like any other modality; it is
//! flagged and never used as a query or database side at evaluation time.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DmhError, Result};
use crate::io;

/// One modality: an n x d feature matrix with bookkeeping.
#[derive(Debug, Clone)]
pub struct ViewMatrix {
    pub data: Array2<f64>,
    pub view_id: usize,
    pub is_label_view: bool,
}

/// Sorted, disjoint row indices of a train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Row-aligned views plus the label matrix they share.
#[derive(Debug, Clone)]
pub struct MultimodalDataset {
    pub views: Vec<ViewMatrix>,
    pub labels: Array2<u8>,
}

impl MultimodalDataset {
    /// Number of samples (rows shared by every view).
    pub fn n(&self) -> usize {
        self.labels.nrows()
    }

    /// Index of the label view, if one is attached.
    pub fn label_view_index(&self) -> Option<usize> {
        self.views.iter().position(|v| v.is_label_view)
    }

    /// Checks row alignment, label values, and label-view consistency.
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(DmhError::Contract("dataset has no views".into()));
        }
        let n = self.n();
        if n == 0 {
            return Err(DmhError::Contract("dataset has no samples".into()));
        }
        for view in &self.views {
            if view.data.nrows() != n {
                return Err(DmhError::Contract(format!(
                    "view {} has {} rows, labels have {}",
                    view.view_id,
                    view.data.nrows(),
                    n
                )));
            }
            if view.data.ncols() == 0 {
                return Err(DmhError::Contract(format!(
                    "view {} has zero columns",
                    view.view_id
                )));
            }
        }
        if self.views.iter().filter(|v| v.is_label_view).count() > 1 {
            return Err(DmhError::Contract("more than one label view".into()));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(DmhError::Contract("labels must be 0/1".into()));
        }
        if let Some(i) = self.label_view_index() {
            let v = &self.views[i];
            if v.data.dim() != (n, self.labels.ncols()) {
                return Err(DmhError::Contract(
                    "label view shape does not match label matrix".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Parameters of a synthetic class-clustered multimodal instance.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub n_classes: usize,
    /// Feature dimension of each generated view.
    pub dims: Vec<usize>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Generates a class-clustered instance: every feature view draws one
/// standard-normal centroid per class, then emits `n_per_class` rows per
/// class as centroid plus `noise_sigma`-scaled Gaussian noise. Labels are
/// one-hot, rows ordered class-major, and the label matrix is appended as
/// a label view.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultimodalDataset> {
    if spec.n_per_class == 0 || spec.n_classes == 0 || spec.dims.is_empty() {
        return Err(DmhError::InvalidConfig(
            "synthetic spec needs at least one class, one sample per class, and one view".into(),
        ));
    }
    if spec.dims.contains(&0) {
        return Err(DmhError::InvalidConfig(
            "view dimensions must be positive".into(),
        ));
    }
    if !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
        return Err(DmhError::InvalidConfig(
            "noise sigma must be finite and >= 0".into(),
        ));
    }
    let n = spec.n_per_class * spec.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let mut views = Vec::with_capacity(spec.dims.len() + 1);
    for (view_id, &d) in spec.dims.iter().enumerate() {
        let centroids = Array2::from_shape_fn((spec.n_classes, d), |_| standard.sample(&mut rng));
        let mut data = Array2::zeros((n, d));
        for k in 0..spec.n_classes {
            for s in 0..spec.n_per_class {
                let row = k * spec.n_per_class + s;
                for j in 0..d {
                    data[[row, j]] =
                        centroids[[k, j]] + spec.noise_sigma * standard.sample(&mut rng);
                }
            }
        }
        views.push(ViewMatrix {
            data,
            view_id,
            is_label_view: false,
        });
    }

    let labels = Array2::from_shape_fn((n, spec.n_classes), |(row, k)| {
        u8::from(row / spec.n_per_class == k)
    });
    views.push(ViewMatrix {
        data: labels.mapv(f64::from),
        view_id: spec.dims.len(),
        is_label_view: true,
    });

    let ds = MultimodalDataset { views, labels };
    ds.validate()?;
    Ok(ds)
}

/// Splits `n` rows into disjoint sorted train/test index sets. The test
/// size is `round(n * test_fraction)` clamped to `[1, n - 1]`, so both
/// sides are always non-empty.
pub fn split_dataset(n: usize, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if n < 2 {
        return Err(DmhError::Contract(format!(
            "cannot split {n} samples into non-empty train and test sets"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DmhError::InvalidConfig(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut test: Vec<usize> = indices[..n_test].to_vec();
    let mut train: Vec<usize> = indices[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Per-view feature scales plus the views (if any) that were degenerate
/// (all-zero) and fell back to a scale of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaScales {
    pub betas: Vec<f64>,
    pub degenerate_views: Vec<usize>,
}

/// The default feature-scaling rule: `beta = 255 / max |x|` per view,
/// applied uniformly to every view (the one-hot label view thus gets
/// `beta = 255`). An all-zero view falls back to `beta = 1` and is
/// reported as degenerate so callers can warn.
pub fn auto_betas(dataset: &MultimodalDataset) -> BetaScales {
    let mut betas = Vec::with_capacity(dataset.views.len());
    let mut degenerate_views = Vec::new();
    for view in &dataset.views {
        let max_abs = view.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if max_abs > 0.0 {
            betas.push(255.0 / max_abs);
        } else {
            betas.push(1.0);
            degenerate_views.push(view.view_id);
        }
    }
    BetaScales {
        betas,
        degenerate_views,
    }
}

/// Multiplies each view's features by its scale in place. Scales must be
/// finite and positive, one per view.
pub fn rescale_views(dataset: &mut MultimodalDataset, betas: &[f64]) -> Result<()> {
    if betas.len() != dataset.views.len() {
        return Err(DmhError::Contract(format!(
            "{} scales for {} views",
            betas.len(),
            dataset.views.len()
        )));
    }
    if let Some(&bad) = betas.iter().find(|b| !b.is_finite() || **b <= 0.0) {
        return Err(DmhError::InvalidConfig(format!(
            "feature scales must be finite and positive, got {bad}"
        )));
    }
    for (view, &beta) in dataset.views.iter_mut().zip(betas) {
        if beta != 1.0 {
            view.data.mapv_inplace(|x| beta * x);
        }
    }
    Ok(())
}

/// For each query-label row, the sorted database rows sharing at least one
/// label (positive inner product of label vectors).
pub fn ground_truth_from_labels(
    query_labels: &Array2<u8>,
    db_labels: &Array2<u8>,
) -> Result<Vec<Vec<usize>>> {
    if query_labels.ncols() != db_labels.ncols() {
        return Err(DmhError::Contract(format!(
            "label dimension mismatch: {} vs {}",
            query_labels.ncols(),
            db_labels.ncols()
        )));
    }
    Ok(query_labels
        .rows()
        .into_iter()
        .map(|q| {
            db_labels
                .rows()
                .into_iter()
                .enumerate()
                .filter(|(_, d)| q.iter().zip(d.iter()).any(|(&a, &b)| a == 1 && b == 1))
                .map(|(t, _)| t)
                .collect()
        })
        .collect())
}

/// Column indices of a view whose feature has zero variance (all rows
/// equal). Such features are legal but worth a warning: they contribute a
/// constant pre-activation exactly like the bias.
pub fn zero_variance_columns(view: &ViewMatrix) -> Vec<usize> {
    let mut out = Vec::new();
    for (j, col) in view.data.columns().into_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&x| x == first) {
            out.push(j);
        }
    }
    out
}

/// A dataset loaded from matrix files, plus what the loader cleaned up.
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: MultimodalDataset,
    /// Rows dropped because their label vector was all-zero.
    pub rows_dropped: usize,
    /// `(view_id, columns)` pairs with zero-variance features.
    pub zero_variance: Vec<(usize, Vec<usize>)>,
}

/// Loads feature views and a label matrix from matrix files, drops rows
/// with all-zero labels from every view, and appends the label view.
pub fn load_dataset<P, Q>(view_paths: &[P], labels_path: Q) -> Result<LoadedDataset>
where
    P: AsRef<Path>,
    Q: AsRef<Path>,
{
    if view_paths.is_empty() {
        return Err(DmhError::Contract(
            "at least one feature view is required".into(),
        ));
    }
    let mut raw_views = Vec::with_capacity(view_paths.len());
    for path in view_paths {
        raw_views.push(io::read_matrix(path.as_ref())?);
    }
    let labels_f = io::read_matrix(labels_path.as_ref())?;
    let n = labels_f.nrows();
    for (i, v) in raw_views.iter().enumerate() {
        if v.nrows() != n {
            return Err(DmhError::Contract(format!(
                "view file {} has {} rows, labels have {}",
                i,
                v.nrows(),
                n
            )));
        }
    }
    if labels_f.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(DmhError::Format(
            "label entries must be exactly 0 or 1".into(),
        ));
    }
    let labels_all = labels_f.mapv(|y| y as u8);

    let keep: Vec<usize> = (0..n)
        .filter(|&r| labels_all.row(r).iter().any(|&y| y == 1))
        .collect();
    let rows_dropped = n - keep.len();
    if keep.is_empty() {
        return Err(DmhError::Contract(
            "every row has an all-zero label vector".into(),
        ));
    }

    let mut views: Vec<ViewMatrix> = raw_views
        .into_iter()
        .enumerate()
        .map(|(view_id, data)| ViewMatrix {
            data: if rows_dropped > 0 {
                data.select(Axis(0), &keep)
            } else {
                data
            },
            view_id,
            is_label_view: false,
        })
        .collect();
    let labels = if rows_dropped > 0 {
        labels_all.select(Axis(0), &keep)
    } else {
        labels_all
    };
    views.push(ViewMatrix {
        data: labels.mapv(f64::from),
        view_id: views.len(),
        is_label_view: true,
    });

    let dataset = MultimodalDataset { views, labels };
    dataset.validate()?;
    let zero_variance = dataset
        .views
        .iter()
        .filter(|v| !v.is_label_view)
        .map(|v| (v.view_id, zero_variance_columns(v)))
        .filter(|(_, cols)| !cols.is_empty())
        .collect();
    Ok(LoadedDataset {
        dataset,
        rows_dropped,
        zero_variance,
    })
}

/// Returns the selected rows of a matrix as an owned copy, in index order.
pub fn select_rows(matrix: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    matrix.select(Axis(0), indices)
}

/// Returns the selected rows of a label matrix as an owned copy.
pub fn select_label_rows(labels: &Array2<u8>, indices: &[usize]) -> Array2<u8> {
    labels.select(Axis(0), indices)
}
