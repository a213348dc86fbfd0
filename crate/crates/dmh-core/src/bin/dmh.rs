//! Command-line interface for the decorrelated multimodal hashing
//! toolkit: generate synthetic data, train, encode, evaluate, run the
//! gamma ablation, and execute the gradient / proposition self-checks.
//!
//! Every command is deterministic given its flags: the master `--seed`
//! derives the synthetic-data seed, the split seed (master + 1), and the
//! parameter-initialization seed (master + 2), so train and eval agree on
//! the split whenever they share a master seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dmh_core::checks;
use dmh_core::data;
use dmh_core::error::{DmhError, Result};
use dmh_core::io;
use dmh_core::optimizer::{TrainConfig, TrainTrace};
use dmh_core::pipeline;

#[derive(Parser)]
#[command(
    name = "dmh",
    version,
    about = "Decorrelated multimodal hashing: train, encode, and evaluate binary codes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset and write its matrix files
    Synth(SynthArgs),
    /// Train a model and persist the model artifact plus training trace
    Train(TrainArgs),
    /// Encode feature matrices into packed binary codes with a trained model
    Encode(EncodeArgs),
    /// Evaluate cross-modal retrieval (MAP and lookup F1) for a trained model
    Eval(EvalArgs),
    /// Train paired models over a gamma grid and report metric deltas
    Ablate(AblateArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Run the numerical proposition oracles
    Propcheck(PropcheckArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Feature view matrix files (one per modality)
    #[arg(long = "views", num_args = 1.., required = true)]
    views: Vec<PathBuf>,
    /// Label matrix file (0/1 entries)
    #[arg(long = "labels")]
    labels: PathBuf,
}

#[derive(Args)]
struct HyperArgs {
    /// Code length in bits
    #[arg(long = "code-length", default_value_t = pipeline::DEFAULT_CODE_LENGTH)]
    code_length: usize,
    /// Per-view alpha list (default: 1 per feature view, 10 for the label view)
    #[arg(long = "alpha", value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Per-view beta list (default: 255 / max |x| per view)
    #[arg(long = "beta", value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Per-view gamma list (default: 0.001 everywhere)
    #[arg(long = "gamma", value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Initial step size
    #[arg(long = "ks", default_value_t = 0.003)]
    ks: f64,
    /// Final step size
    #[arg(long = "ke", default_value_t = 0.0015)]
    ke: f64,
    /// Iteration cap
    #[arg(long = "max-iter", default_value_t = 400)]
    max_iter: usize,
}

impl HyperArgs {
    fn overrides(&self) -> pipeline::HyperOverrides {
        pipeline::HyperOverrides {
            alphas: self.alpha.clone(),
            betas: self.beta.clone(),
            gammas: self.gamma.clone(),
        }
    }

    fn train_config(&self, master_seed: u64) -> TrainConfig {
        TrainConfig {
            k_s: self.ks,
            k_e: self.ke,
            max_iter: self.max_iter,
            seed: pipeline::train_seed(master_seed),
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Samples per class
    #[arg(long = "n-per-class", default_value_t = 50)]
    n_per_class: usize,
    /// Number of classes
    #[arg(long = "n-classes", default_value_t = 4)]
    n_classes: usize,
    /// Feature dimension per generated view
    #[arg(long = "dims", value_delimiter = ',', default_values_t = [10usize, 12])]
    dims: Vec<usize>,
    /// Within-class noise standard deviation
    #[arg(long = "noise-sigma", default_value_t = 0.1)]
    noise_sigma: f64,
    /// Master seed
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Master seed
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Held-out test fraction
    #[arg(long = "test-fraction", default_value_t = pipeline::DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Output directory
    #[arg(long = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    /// Trained model artifact
    #[arg(long = "model")]
    model: PathBuf,
    /// Feature matrices to encode, one per feature view, in view order
    #[arg(long = "views", num_args = 1.., required = true)]
    views: Vec<PathBuf>,
    /// Output directory
    #[arg(long = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained model artifact
    #[arg(long = "model")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Master seed (must match training so the split agrees)
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Held-out test fraction (must match training)
    #[arg(long = "test-fraction", default_value_t = pipeline::DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Lookup radius
    #[arg(long = "radius", default_value_t = pipeline::DEFAULT_RADIUS)]
    radius: usize,
    /// Ranking cutoff (default: the whole database)
    #[arg(long = "r-cutoff")]
    r_cutoff: Option<usize>,
    /// Output directory
    #[arg(long = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Gamma values to compare (each applied to every view)
    #[arg(long = "gamma-grid", value_delimiter = ',', default_values_t = [0.001, 0.0])]
    gamma_grid: Vec<f64>,
    /// Master seed
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Held-out test fraction
    #[arg(long = "test-fraction", default_value_t = pipeline::DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Lookup radius
    #[arg(long = "radius", default_value_t = pipeline::DEFAULT_RADIUS)]
    radius: usize,
    /// Output directory
    #[arg(long = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of random instances
    #[arg(long = "count", default_value_t = 20)]
    count: usize,
    /// Master seed
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Negative control: flip the analytic gradient sign so the check
    /// must fail
    #[arg(long = "negate-gradients", hide = true)]
    negate_gradients: bool,
    /// Optional directory for the JSON report
    #[arg(long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PropcheckArgs {
    /// Master seed
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Optional directory for the JSON report
    #[arg(long = "out")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SynthSummary {
    n: usize,
    n_classes: usize,
    dims: Vec<usize>,
    noise_sigma: f64,
    seed: u64,
    view_files: Vec<String>,
    labels_file: String,
}

#[derive(Serialize)]
struct TrainSummary {
    final_objective: f64,
    iterations_run: usize,
    converged: bool,
    /// "full" for the regularized model, "mcr-ablation" when every view
    /// trains with gamma = 0
    variant: String,
    code_length: usize,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    gammas: Vec<f64>,
    master_seed: u64,
    split_seed: u64,
    train_seed: u64,
    n_train: usize,
    n_test: usize,
    rows_dropped: usize,
    trace: TrainTrace,
}

fn print_warnings(loaded: &data::LoadedDataset) {
    if loaded.rows_dropped > 0 {
        eprintln!(
            "warning: dropped {} rows with all-zero label vectors",
            loaded.rows_dropped
        );
    }
    for (view_id, cols) in &loaded.zero_variance {
        eprintln!("warning: view {view_id} has zero-variance feature columns {cols:?}");
    }
}

fn print_degenerate_views(degenerate: &[usize]) {
    for view_id in degenerate {
        eprintln!("warning: view {view_id} is all-zero; automatic beta fell back to 1");
    }
}

fn task_file_name(task: &str) -> String {
    task.to_lowercase().replace("→", "_to_")
}

fn prepare_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let spec = data::SyntheticSpec {
        n_per_class: args.n_per_class,
        n_classes: args.n_classes,
        dims: args.dims.clone(),
        noise_sigma: args.noise_sigma,
        seed: pipeline::synth_seed(args.seed),
    };
    let dataset = data::generate_synthetic(&spec)?;
    prepare_out_dir(&args.out)?;
    let mut view_files = Vec::new();
    for view in dataset.views.iter().filter(|v| !v.is_label_view) {
        let path = args.out.join(format!("view{}.dmh1", view.view_id));
        io::write_matrix(&path, &view.data)?;
        view_files.push(path.display().to_string());
    }
    let labels_path = args.out.join("labels.dmh1");
    io::write_matrix(&labels_path, &dataset.labels.mapv(f64::from))?;
    let summary = SynthSummary {
        n: dataset.n(),
        n_classes: args.n_classes,
        dims: args.dims.clone(),
        noise_sigma: args.noise_sigma,
        seed: args.seed,
        view_files: view_files.clone(),
        labels_file: labels_path.display().to_string(),
    };
    io::write_json(args.out.join("synth.json"), &summary)?;
    println!(
        "wrote {} samples across {} feature views to {}",
        dataset.n(),
        view_files.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: &TrainArgs) -> Result<ExitCode> {
    let loaded = data::load_dataset(&args.data.views, &args.data.labels)?;
    print_warnings(&loaded);
    let dataset = loaded.dataset;
    let split = data::split_dataset(
        dataset.n(),
        args.test_fraction,
        pipeline::split_seed(args.seed),
    )?;
    let resolved = pipeline::resolve_hyper(&dataset, &args.hyper.overrides())?;
    print_degenerate_views(&resolved.degenerate_views);
    let config = args.hyper.train_config(args.seed);
    let result = pipeline::train_on_split(
        &dataset,
        &split,
        &resolved.hyper,
        args.hyper.code_length,
        &config,
    )?;

    prepare_out_dir(&args.out)?;
    let is_label_view: Vec<bool> = dataset.views.iter().map(|v| v.is_label_view).collect();
    let model = io::ModelArtifact {
        params: result.params,
        is_label_view,
        config,
    };
    io::write_model(args.out.join("model.dmhm"), &model)?;

    let gammas: Vec<f64> = resolved.hyper.iter().map(|h| h.gamma).collect();
    let variant = if gammas.iter().all(|&g| g == 0.0) {
        "mcr-ablation"
    } else {
        "full"
    };
    let final_objective = result
        .trace
        .objective_per_iteration
        .last()
        .copied()
        .unwrap_or(f64::NAN);
    let summary = TrainSummary {
        final_objective,
        iterations_run: result.trace.iterations_run,
        converged: result.trace.converged,
        variant: variant.into(),
        code_length: args.hyper.code_length,
        alphas: resolved.hyper.iter().map(|h| h.alpha).collect(),
        betas: resolved.hyper.iter().map(|h| h.beta).collect(),
        gammas,
        master_seed: args.seed,
        split_seed: pipeline::split_seed(args.seed),
        train_seed: pipeline::train_seed(args.seed),
        n_train: split.train.len(),
        n_test: split.test.len(),
        rows_dropped: loaded.rows_dropped,
        trace: result.trace,
    };
    io::write_json(args.out.join("trace.json"), &summary)?;
    println!("final objective: {final_objective}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_encode(args: &EncodeArgs) -> Result<ExitCode> {
    let model = io::read_model(&args.model)?;
    let feature_params: Vec<(usize, &dmh_core::ViewParams)> = model
        .params
        .iter()
        .enumerate()
        .filter(|(i, _)| !model.is_label_view[*i])
        .collect();
    if args.views.len() != feature_params.len() {
        return Err(DmhError::Contract(format!(
            "{} view files for a model with {} feature views",
            args.views.len(),
            feature_params.len()
        )));
    }
    prepare_out_dir(&args.out)?;
    for (path, &(view_id, params)) in args.views.iter().zip(&feature_params) {
        let x = io::read_matrix(path)?;
        let codes = dmh_core::encode_view(&x, params)?;
        let out_path = args.out.join(format!("codes_view{view_id}.dmhc"));
        io::write_codes(&out_path, &codes)?;
        println!(
            "view {view_id}: encoded {} samples at {} bits -> {}",
            codes.len(),
            codes.code_length(),
            out_path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let model = io::read_model(&args.model)?;
    let loaded = data::load_dataset(&args.data.views, &args.data.labels)?;
    print_warnings(&loaded);
    let dataset = loaded.dataset;
    if model.params.len() != dataset.views.len() {
        return Err(DmhError::Contract(format!(
            "model has {} views, dataset has {}",
            model.params.len(),
            dataset.views.len()
        )));
    }
    let split = data::split_dataset(
        dataset.n(),
        args.test_fraction,
        pipeline::split_seed(args.seed),
    )?;
    let reports =
        pipeline::evaluate_directions(&model.params, &dataset, &split, args.r_cutoff, args.radius)?;
    prepare_out_dir(&args.out)?;
    for report in &reports {
        let path = args
            .out
            .join(format!("eval_{}.json", task_file_name(&report.task)));
        io::write_json(&path, report)?;
        println!(
            "{}: MAP = {:.6}, F1 = {:.6} (radius {})",
            report.task, report.map, report.f1, report.radius
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(args: &AblateArgs) -> Result<ExitCode> {
    let loaded = data::load_dataset(&args.data.views, &args.data.labels)?;
    print_warnings(&loaded);
    let dataset = loaded.dataset;
    let split = data::split_dataset(
        dataset.n(),
        args.test_fraction,
        pipeline::split_seed(args.seed),
    )?;
    let config = args.hyper.train_config(args.seed);
    let report = pipeline::ablate(
        &dataset,
        &split,
        &args.hyper.overrides(),
        &args.gamma_grid,
        args.hyper.code_length,
        &config,
        None,
        args.radius,
    )?;
    prepare_out_dir(&args.out)?;
    io::write_json(args.out.join("ablation.json"), &report)?;
    for run in &report.runs {
        let maps: Vec<String> = run
            .reports
            .iter()
            .map(|r| format!("{} {:.6}", r.task, r.map))
            .collect();
        println!(
            "gamma = {}: correlation = {:.6}, MAP [{}]",
            run.gamma,
            run.correlation,
            maps.join(", ")
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    let report = checks::gradient_check_suite(args.count, args.seed, args.negate_gradients)?;
    for case in &report.cases {
        println!(
            "[{}] seed={} n={} d={} c={} gamma={} max_rel_error={:.3e}",
            if case.passed { "PASS" } else { "FAIL" },
            case.seed,
            case.n,
            case.d,
            case.c,
            case.gamma,
            case.max_rel_error
        );
    }
    let passed = report.cases.iter().filter(|c| c.passed).count();
    println!("gradcheck: {passed}/{} passed", report.cases.len());
    if let Some(out) = &args.out {
        prepare_out_dir(out)?;
        io::write_json(out.join("gradcheck.json"), &report)?;
    }
    Ok(if report.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_propcheck(args: &PropcheckArgs) -> Result<ExitCode> {
    let report = checks::proposition_check_suite(args.seed)?;
    for case in &report.cases {
        println!(
            "[{}] {}: {}",
            if case.passed { "PASS" } else { "FAIL" },
            case.name,
            case.detail
        );
    }
    let passed = report.cases.iter().filter(|c| c.passed).count();
    println!("propcheck: {passed}/{} passed", report.cases.len());
    if let Some(out) = &args.out {
        prepare_out_dir(out)?;
        io::write_json(out.join("propcheck.json"), &report)?;
    }
    Ok(if report.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Propcheck(args) => cmd_propcheck(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                DmhError::Contract(_) | DmhError::InvalidConfig(_) => 2,
                DmhError::Diverged { .. } => 3,
                DmhError::Io(_) | DmhError::Format(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
