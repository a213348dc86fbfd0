//! End-to-end orchestration shared by the command-line tool and the
//! acceptance suite: hyperparameter resolution with the documented
//! defaults, seed derivation, training on a split, cross-modal
//! evaluation, and gamma-ablation runs.

use serde::Serialize;

use crate::data::{auto_betas, select_rows, MultimodalDataset, SplitIndices, SyntheticSpec};
use crate::error::{DmhError, Result};
use crate::eval::{column_correlation_metric, evaluate_cross_modal, EvalReport};
use crate::optimizer::{train, TrainConfig, TrainResult, ViewHyper};

/// Default weight of a feature view in the objective.
pub const DEFAULT_ALPHA: f64 = 1.0;
/// Default weight of the label view (supervision is emphasized).
pub const DEFAULT_LABEL_ALPHA: f64 = 10.0;
/// Default decorrelation strength.
pub const DEFAULT_GAMMA: f64 = 0.001;
/// Default lookup radius.
pub const DEFAULT_RADIUS: usize = 2;
/// Default held-out fraction.
pub const DEFAULT_TEST_FRACTION: f64 = 0.05;
/// Default code length.
pub const DEFAULT_CODE_LENGTH: usize = 32;

/// Synthetic-instance seed derived from a master seed.
pub fn synth_seed(master: u64) -> u64 {
    master
}

/// Split seed derived from a master seed.
pub fn split_seed(master: u64) -> u64 {
    master.wrapping_add(1)
}

/// Parameter-initialization seed derived from a master seed.
pub fn train_seed(master: u64) -> u64 {
    master.wrapping_add(2)
}

/// The standard demonstration instance: four classes, two feature views
/// of dimension 10 and 12, mild noise.
pub fn default_synthetic_spec(master_seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_per_class: 50,
        n_classes: 4,
        dims: vec![10, 12],
        noise_sigma: 0.1,
        seed: synth_seed(master_seed),
    }
}

/// Optional per-view hyperparameter overrides; `None` means the
/// documented default rule.
#[derive(Debug, Clone, Default)]
pub struct HyperOverrides {
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
}

/// Fully resolved per-view hyperparameters.
#[derive(Debug, Clone)]
pub struct ResolvedHyper {
    pub hyper: Vec<ViewHyper>,
    /// Views whose automatic scale fell back to 1 because the view was
    /// all-zero; callers should warn.
    pub degenerate_views: Vec<usize>,
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(DmhError::Contract(format!(
            "{name} list has {got} entries for {want} views"
        )));
    }
    Ok(())
}

/// Resolves per-view hyperparameters: alpha defaults to 1 (10 for the
/// label view), beta to the automatic `255 / max |x|` rule, gamma to
/// 0.001.
pub fn resolve_hyper(
    dataset: &MultimodalDataset,
    overrides: &HyperOverrides,
) -> Result<ResolvedHyper> {
    dataset.validate()?;
    let n_views = dataset.views.len();

    let alphas = match &overrides.alphas {
        Some(list) => {
            check_len("alpha", list.len(), n_views)?;
            list.clone()
        }
        None => dataset
            .views
            .iter()
            .map(|v| {
                if v.is_label_view {
                    DEFAULT_LABEL_ALPHA
                } else {
                    DEFAULT_ALPHA
                }
            })
            .collect(),
    };
    let mut degenerate_views = Vec::new();
    let betas = match &overrides.betas {
        Some(list) => {
            check_len("beta", list.len(), n_views)?;
            list.clone()
        }
        None => {
            let scales = auto_betas(dataset);
            degenerate_views = scales.degenerate_views;
            scales.betas
        }
    };
    let gammas = match &overrides.gammas {
        Some(list) => {
            check_len("gamma", list.len(), n_views)?;
            list.clone()
        }
        None => vec![DEFAULT_GAMMA; n_views],
    };

    let hyper = alphas
        .into_iter()
        .zip(betas)
        .zip(gammas)
        .map(|((alpha, beta), gamma)| ViewHyper { alpha, beta, gamma })
        .collect();
    Ok(ResolvedHyper {
        hyper,
        degenerate_views,
    })
}

/// Trains on the training rows of every view (label view included).
pub fn train_on_split(
    dataset: &MultimodalDataset,
    split: &SplitIndices,
    hyper: &[ViewHyper],
    code_length: usize,
    config: &TrainConfig,
) -> Result<TrainResult> {
    dataset.validate()?;
    let views: Vec<_> = dataset
        .views
        .iter()
        .map(|v| select_rows(&v.data, &split.train))
        .collect();
    train(&views, hyper, code_length, config)
}

/// The retrieval directions evaluated for a dataset: both cross-modal
/// directions between the first two feature views, or self-retrieval if
/// only one feature view exists.
pub fn eval_directions(dataset: &MultimodalDataset) -> Vec<(usize, usize)> {
    let feature: Vec<usize> = dataset
        .views
        .iter()
        .filter(|v| !v.is_label_view)
        .map(|v| v.view_id)
        .collect();
    if feature.len() >= 2 {
        vec![(feature[0], feature[1]), (feature[1], feature[0])]
    } else {
        vec![(feature[0], feature[0])]
    }
}

/// Evaluates every retrieval direction of the dataset.
pub fn evaluate_directions(
    params: &[crate::model::ViewParams],
    dataset: &MultimodalDataset,
    split: &SplitIndices,
    r_cutoff: Option<usize>,
    radius: usize,
) -> Result<Vec<EvalReport>> {
    eval_directions(dataset)
        .into_iter()
        .map(|(q, db)| evaluate_cross_modal(params, dataset, split, q, db, r_cutoff, radius))
        .collect()
}

/// One ablation run at a fixed gamma.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRun {
    pub gamma: f64,
    /// Mean absolute off-diagonal column correlation of the final
    /// training code matrix.
    pub correlation: f64,
    pub final_objective: f64,
    pub reports: Vec<EvalReport>,
}

/// Metric differences of one run against the reference run.
#[derive(Debug, Clone, Serialize)]
pub struct AblationDelta {
    pub gamma: f64,
    pub map_delta: Vec<f64>,
    pub f1_delta: Vec<f64>,
    pub correlation_delta: f64,
}

/// Paired ablation over a gamma grid with shared seeds.
#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub code_length: usize,
    pub seed: u64,
    /// Gamma of the run the deltas are measured against (the gamma = 0 run
    /// when the grid contains one, otherwise the first run).
    pub reference_gamma: f64,
    pub runs: Vec<AblationRun>,
    pub deltas: Vec<AblationDelta>,
}

/// Trains one model per gamma value with identical seeds, data, and
/// remaining hyperparameters, then reports per-run retrieval metrics, the
/// decorrelation diagnostic, and deltas against the gamma = 0 run (or the
/// first run when the grid has no zero).
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    dataset: &MultimodalDataset,
    split: &SplitIndices,
    overrides: &HyperOverrides,
    gamma_grid: &[f64],
    code_length: usize,
    config: &TrainConfig,
    r_cutoff: Option<usize>,
    radius: usize,
) -> Result<AblationReport> {
    if gamma_grid.is_empty() {
        return Err(DmhError::InvalidConfig("gamma grid is empty".into()));
    }
    let base = resolve_hyper(dataset, overrides)?;
    let mut runs = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(DmhError::InvalidConfig(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        let hyper: Vec<ViewHyper> = base
            .hyper
            .iter()
            .map(|h| ViewHyper { gamma, ..*h })
            .collect();
        let result = train_on_split(dataset, split, &hyper, code_length, config)?;
        let reports = evaluate_directions(&result.params, dataset, split, r_cutoff, radius)?;
        runs.push(AblationRun {
            gamma,
            correlation: column_correlation_metric(&result.codes),
            final_objective: result
                .trace
                .objective_per_iteration
                .last()
                .copied()
                .unwrap_or(f64::NAN),
            reports,
        });
    }
    let reference_index = gamma_grid.iter().position(|&g| g == 0.0).unwrap_or(0);
    let reference = &runs[reference_index];
    let deltas = runs
        .iter()
        .map(|run| AblationDelta {
            gamma: run.gamma,
            map_delta: run
                .reports
                .iter()
                .zip(&reference.reports)
                .map(|(a, b)| a.map - b.map)
                .collect(),
            f1_delta: run
                .reports
                .iter()
                .zip(&reference.reports)
                .map(|(a, b)| a.f1 - b.f1)
                .collect(),
            correlation_delta: run.correlation - reference.correlation,
        })
        .collect();
    Ok(AblationReport {
        code_length,
        seed: config.seed,
        reference_gamma: gamma_grid[reference_index],
        runs,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_dataset};

    fn tiny_dataset(seed: u64) -> MultimodalDataset {
        generate_synthetic(&SyntheticSpec {
            n_per_class: 10,
            n_classes: 3,
            dims: vec![4, 5],
            noise_sigma: 0.1,
            seed,
        })
        .unwrap()
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            max_iter: 30,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn hyper_defaults_follow_the_rules() {
        let ds = tiny_dataset(1);
        let resolved = resolve_hyper(&ds, &HyperOverrides::default()).unwrap();
        assert_eq!(resolved.hyper.len(), 3);
        assert_eq!(resolved.hyper[0].alpha, 1.0);
        assert_eq!(resolved.hyper[1].alpha, 1.0);
        assert_eq!(resolved.hyper[2].alpha, 10.0);
        for h in &resolved.hyper {
            assert_eq!(h.gamma, 0.001);
        }
        // the one-hot label view always scales to 255
        assert_eq!(resolved.hyper[2].beta, 255.0);
        let max0 = ds.views[0].data.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert_eq!(resolved.hyper[0].beta, 255.0 / max0);
        assert!(resolved.degenerate_views.is_empty());
    }

    #[test]
    fn hyper_overrides_are_respected_and_validated() {
        let ds = tiny_dataset(1);
        let overrides = HyperOverrides {
            alphas: Some(vec![2.0, 3.0, 4.0]),
            betas: Some(vec![1.0, 1.0, 1.0]),
            gammas: Some(vec![0.0, 0.0, 0.5]),
        };
        let resolved = resolve_hyper(&ds, &overrides).unwrap();
        assert_eq!(resolved.hyper[1].alpha, 3.0);
        assert_eq!(resolved.hyper[2].gamma, 0.5);
        let short = HyperOverrides {
            alphas: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(matches!(
            resolve_hyper(&ds, &short),
            Err(DmhError::Contract(_))
        ));
    }

    #[test]
    fn train_and_evaluate_both_directions() {
        let ds = tiny_dataset(2);
        let split = split_dataset(ds.n(), 0.2, split_seed(2)).unwrap();
        let resolved = resolve_hyper(&ds, &HyperOverrides::default()).unwrap();
        let config = quick_config(train_seed(2));
        let result = train_on_split(&ds, &split, &resolved.hyper, 8, &config).unwrap();
        assert_eq!(result.codes.nrows(), split.train.len());
        let reports =
            evaluate_directions(&result.params, &ds, &split, None, DEFAULT_RADIUS).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].task, "Image→Text");
        assert_eq!(reports[1].task, "Text→Image");
        // determinism end to end
        let again = train_on_split(&ds, &split, &resolved.hyper, 8, &config).unwrap();
        let reports_again =
            evaluate_directions(&again.params, &ds, &split, None, DEFAULT_RADIUS).unwrap();
        assert_eq!(reports[0].map, reports_again[0].map);
        assert_eq!(reports[1].f1, reports_again[1].f1);
    }

    #[test]
    fn ablation_pairs_runs_against_gamma_zero() {
        let ds = tiny_dataset(3);
        let split = split_dataset(ds.n(), 0.2, split_seed(3)).unwrap();
        let config = quick_config(train_seed(3));
        let report = ablate(
            &ds,
            &split,
            &HyperOverrides::default(),
            &[0.001, 0.0],
            8,
            &config,
            None,
            DEFAULT_RADIUS,
        )
        .unwrap();
        assert_eq!(report.runs.len(), 2);
        assert_eq!(report.reference_gamma, 0.0);
        // the reference run's deltas are zero by construction
        assert_eq!(report.deltas[1].correlation_delta, 0.0);
        assert!(report.deltas[1].map_delta.iter().all(|&d| d == 0.0));
        // identical seeds and grid give an identical report
        let again = ablate(
            &ds,
            &split,
            &HyperOverrides::default(),
            &[0.001, 0.0],
            8,
            &config,
            None,
            DEFAULT_RADIUS,
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn ablation_validates_the_grid() {
        let ds = tiny_dataset(4);
        let split = split_dataset(ds.n(), 0.2, 1).unwrap();
        let config = quick_config(1);
        assert!(matches!(
            ablate(
                &ds,
                &split,
                &HyperOverrides::default(),
                &[],
                8,
                &config,
                None,
                2
            ),
            Err(DmhError::InvalidConfig(_))
        ));
        assert!(matches!(
            ablate(
                &ds,
                &split,
                &HyperOverrides::default(),
                &[-0.5],
                8,
                &config,
                None,
                2
            ),
            Err(DmhError::InvalidConfig(_))
        ));
    }
}
