use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgkit::dataset::{scan_dataset, synth_dataset};
use pgkit::error::{Error, Result};
use pgkit::harness::{
    cross_eval, emit_report, evaluate, parse_kv_file, reference_full_scale_matrix,
    replay_manifest, run_experiment, CrossEvalConfig, ExperimentConfig, TrainVariant,
};
use pgkit::imageio::{load_image, save_png};
use pgkit::nn::gradcheck::{check_full_toy_model, per_layer_checks};
use pgkit::nn::{build_model, build_reference_model, checkpoint, Algorithm, Arch};
use pgkit::pipeline::{
    affine_augment, flip, patch_shuffle, resize_bilinear, scale_variant, AugmentParams, FlipAxis,
};
use pgkit::rng::{derive_seed, SplitMix64};

/// Patch-shuffle image classification toolkit.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
/// PG_THREADS caps worker threads (0, the default, runs single-threaded and
/// fully deterministically; compute kernels are currently always
/// single-threaded).
#[derive(Parser)]
#[command(name = "pgkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a preprocessing op to every image in a class tree, writing PNGs.
    Preprocess(PreprocessArgs),
    /// Train one model on a dataset variant.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset directory.
    Eval(EvalArgs),
    /// Evaluate checkpoints across all test variants; write matrix.csv.
    CrossEval(CrossEvalArgs),
    /// Verify the reference architecture's per-layer parameter budget.
    ParamCheck(ParamCheckArgs),
    /// Finite-difference verification of every backward pass.
    GradCheck(GradCheckArgs),
    /// Generate a deterministic synthetic class-separable corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input root: <class>/<image>.{png,jpg,jpeg}
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One of: shuffle4, shuffle32, flip, scale, augment
    #[arg(long)]
    op: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Images are resized to hw x hw before the op.
    #[arg(long, default_value_t = 224)]
    hw: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Optional key = value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// One of: original, augmented, shuffled_4, shuffled_32
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// adam or sgd_momentum
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f32>,
    /// reference or toy
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    hw: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f32>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    transform_seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "reference")]
    arch: String,
    #[arg(long, default_value_t = 224)]
    hw: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
}

#[derive(Args)]
struct CrossEvalArgs {
    /// Replay a previously written manifest instead of giving flags.
    #[arg(long, conflicts_with_all = ["data", "checkpoint"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Repeatable: <train_variant>=<checkpoint path>
    #[arg(long = "checkpoint")]
    checkpoint: Vec<String>,
    #[arg(long, default_value = "reference")]
    arch: String,
    #[arg(long, default_value_t = 224)]
    hw: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f32,
    #[arg(long, default_value_t = 0)]
    variant_seed: u64,
    /// Also print the full-scale reference matrix for side-by-side reading.
    #[arg(long)]
    show_reference: bool,
}

#[derive(Args)]
struct ParamCheckArgs {
    /// Print the toy architecture's counts instead (no budget oracle).
    #[arg(long)]
    toy: bool,
    /// Test hook: perturb one reported count to demonstrate detection.
    #[arg(long, hide = true)]
    inject_defect: bool,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    #[arg(long, default_value_t = 2e-2)]
    tolerance: f32,
    /// Test hook: corrupt one conv gradient to demonstrate detection.
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    hw: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
}

fn shape_string(dims: &[usize]) -> String {
    let mut s = String::from("(None");
    for d in dims {
        s.push_str(&format!(", {d}"));
    }
    s.push(')');
    s
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Per-layer (name, params) contract for the (224, 6) reference build.
const REFERENCE_LAYER_PARAMS: [(&str, usize); 24] = [
    ("conv2d", 896),
    ("batch_normalization", 128),
    ("max_pooling2d", 0),
    ("batch_normalization_1", 128),
    ("conv2d_1", 9_248),
    ("batch_normalization_2", 128),
    ("max_pooling2d_1", 0),
    ("batch_normalization_3", 128),
    ("conv2d_2", 18_496),
    ("batch_normalization_4", 256),
    ("max_pooling2d_2", 0),
    ("conv2d_3", 36_928),
    ("batch_normalization_5", 256),
    ("max_pooling2d_3", 0),
    ("conv2d_4", 73_856),
    ("batch_normalization_6", 512),
    ("max_pooling2d_4", 0),
    ("conv2d_5", 147_584),
    ("batch_normalization_7", 512),
    ("max_pooling2d_5", 0),
    ("flatten", 0),
    ("dense", 147_584),
    ("dense_1", 4_128),
    ("dense_2", 198),
];

fn cmd_param_check(args: &ParamCheckArgs) -> Result<()> {
    if args.toy {
        let model = build_model(Arch::Toy, 3, 32, 0)?;
        for row in model.summary() {
            println!(
                "{:<28} {:<20} {:>10}",
                row.name,
                shape_string(&row.output_shape),
                thousands(row.params)
            );
        }
        println!("Total params: {}", thousands(model.total_param_count()));
        return Ok(());
    }
    let model = build_reference_model(6, 224, 0)?;
    let rows = model.summary();
    println!("{:<42} {:<22} {:>10}", "Layer (type)", "Output Shape", "Param #");
    for row in &rows {
        println!(
            "{:<42} {:<22} {:>10}",
            row.name,
            shape_string(&row.output_shape),
            thousands(row.params)
        );
    }
    println!("Total params: {}", thousands(model.total_param_count()));
    println!("Trainable params: {}", thousands(model.trainable_param_count()));
    println!("Non-trainable params: {}", thousands(model.non_trainable_param_count()));

    if rows.len() != REFERENCE_LAYER_PARAMS.len() {
        return Err(Error::Numeric(format!(
            "{} layers reported, expected {}",
            rows.len(),
            REFERENCE_LAYER_PARAMS.len()
        )));
    }
    for (i, (row, &(name, expected))) in rows.iter().zip(&REFERENCE_LAYER_PARAMS).enumerate() {
        let mut reported = row.params;
        if args.inject_defect && i == 0 {
            reported += 1;
        }
        if row.name != name || reported != expected {
            return Err(Error::Numeric(format!(
                "layer '{}' has {} params, expected {} ('{}')",
                row.name, reported, expected, name
            )));
        }
    }
    let totals = (
        model.total_param_count(),
        model.trainable_param_count(),
        model.non_trainable_param_count(),
    );
    if totals != (440_966, 439_942, 1_024) {
        return Err(Error::Numeric(format!(
            "totals {totals:?}, expected (440966, 439942, 1024)"
        )));
    }
    println!("parameter budget check: PASS");
    Ok(())
}

fn cmd_grad_check(args: &GradCheckArgs) -> Result<()> {
    let mut worst: f32 = 0.0;
    for report in per_layer_checks(args.seed)? {
        println!(
            "{:<12} max rel err {:.3e} over {} coords",
            report.name, report.max_rel_err, report.coords_checked
        );
        worst = worst.max(report.max_rel_err);
    }
    let full = check_full_toy_model(args.seed, args.corrupt)?;
    println!(
        "{:<12} max rel err {:.3e} over {} coords",
        full.name, full.max_rel_err, full.coords_checked
    );
    worst = worst.max(full.max_rel_err);
    if worst < args.tolerance {
        println!("gradient check: PASS (max rel err {worst:.3e} < {:.1e})", args.tolerance);
        Ok(())
    } else {
        let detail = full
            .worst
            .map(|(t, i, a, n)| format!(" worst at tensor {t} coord {i}: analytic {a:.6}, numeric {n:.6}"))
            .unwrap_or_default();
        Err(Error::Numeric(format!(
            "gradient check failed: max rel err {worst:.3e} >= {:.1e}.{detail}",
            args.tolerance
        )))
    }
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let known = ["shuffle4", "shuffle32", "flip", "scale", "augment"];
    if !known.contains(&args.op.as_str()) {
        return Err(Error::Config(format!("unknown op '{}'", args.op)));
    }
    let index = scan_dataset(&args.input)?;
    for (rel, label) in &index.entries {
        let img = load_image(&index.root.join(rel), *label, rel)?;
        let img = resize_bilinear(&img, args.hw, args.hw)?;
        let seed = derive_seed(args.seed, rel, 0);
        let out = match args.op.as_str() {
            "shuffle4" => patch_shuffle(&img, 4, seed)?,
            "shuffle32" => patch_shuffle(&img, 32, seed)?,
            "flip" => flip(&img, FlipAxis::Horizontal),
            "scale" => {
                let factor = SplitMix64::new(seed).next_range(0.8, 1.25);
                scale_variant(&img, factor, seed)?
            }
            "augment" => affine_augment(&img, &AugmentParams::default(), seed)?,
            other => return Err(Error::Config(format!("unknown op '{other}'"))),
        };
        let stem = Path::new(rel)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let class_name = &index.classes[*label];
        save_png(&out, &args.out.join(class_name).join(format!("{stem}.png")))?;
    }
    println!(
        "preprocessed {} images ({}) into {}",
        index.len(),
        args.op,
        args.out.display()
    );
    Ok(())
}

fn merged<'a, T: std::str::FromStr>(
    flag: Option<T>,
    config: &'a BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match config.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::Config(format!("bad value '{raw}' for '{key}'"))),
        None => Ok(default),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file_config = match &args.config {
        Some(p) => parse_kv_file(p)?,
        None => BTreeMap::new(),
    };
    let data = args
        .data
        .or_else(|| file_config.get("data").map(PathBuf::from))
        .ok_or_else(|| Error::Config("--data is required (flag or config file)".into()))?;
    let out = args
        .out
        .or_else(|| file_config.get("out").map(PathBuf::from))
        .ok_or_else(|| Error::Config("--out is required (flag or config file)".into()))?;
    let config = ExperimentConfig {
        train_variant: TrainVariant::parse(&merged(
            args.variant,
            &file_config,
            "variant",
            "original".to_string(),
        )?)?,
        epochs: merged(args.epochs, &file_config, "epochs", 200)?,
        batch_size: merged(args.batch, &file_config, "batch", 32)?,
        algorithm: Algorithm::parse(&merged(
            args.optimizer,
            &file_config,
            "optimizer",
            "adam".to_string(),
        )?)?,
        learning_rate: merged(args.lr, &file_config, "lr", 1e-3)?,
        init_seed: merged(args.init_seed, &file_config, "init_seed", 1)?,
        data_seed: merged(args.data_seed, &file_config, "data_seed", 2)?,
        transform_seed: merged(args.transform_seed, &file_config, "transform_seed", 3)?,
        dataset_root: data,
        out_dir: out,
        arch: Arch::parse(&merged(
            args.arch,
            &file_config,
            "arch",
            "reference".to_string(),
        )?)?,
        input_hw: merged(args.hw, &file_config, "hw", 224)?,
        val_fraction: merged(args.val_fraction, &file_config, "val_fraction", 0.1)?,
    };
    let report = run_experiment(&config)?;
    for s in &report.epochs {
        println!(
            "epoch {:>3}  loss {:.4}  train acc {:.4}  val acc {:.4}",
            s.epoch, s.train_loss, s.train_accuracy, s.val_accuracy
        );
    }
    println!(
        "done: {} steps in {:.1}s, best val acc {:.4}, checkpoints in {}",
        report.optimizer_steps,
        report.wall_secs,
        report.best_val_accuracy,
        report.best_checkpoint.parent().unwrap().display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let index = scan_dataset(&args.data)?;
    let mut model = build_model(Arch::parse(&args.arch)?, index.classes.len(), args.hw, 0)?;
    checkpoint::load_into(&mut model, &args.checkpoint)?;
    let result = evaluate(&model, &index, args.hw, args.batch)?;
    println!("accuracy: {:.4} ({}/{})", result.accuracy, result.correct, result.total);
    for (c, name) in index.classes.iter().enumerate() {
        println!(
            "  {name}: {:.4} ({}/{})",
            result.per_class_correct[c] as f32 / result.per_class_total[c].max(1) as f32,
            result.per_class_correct[c],
            result.per_class_total[c]
        );
    }
    println!("confusion (rows = true class):");
    for row in &result.confusion {
        println!(
            "  {}",
            row.iter().map(|v| format!("{v:>5}")).collect::<Vec<_>>().join(" ")
        );
    }
    Ok(())
}

fn cmd_cross_eval(args: &CrossEvalArgs) -> Result<()> {
    let matrix = if let Some(manifest) = &args.manifest {
        replay_manifest(manifest, &args.out)?
    } else {
        let data = args
            .data
            .clone()
            .ok_or_else(|| Error::Config("--data is required without --manifest".into()))?;
        let mut checkpoints = Vec::new();
        for spec in &args.checkpoint {
            let (variant, path) = spec.split_once('=').ok_or_else(|| {
                Error::Config(format!("--checkpoint '{spec}' must be <variant>=<path>"))
            })?;
            checkpoints.push((TrainVariant::parse(variant)?, PathBuf::from(path)));
        }
        if checkpoints.is_empty() {
            return Err(Error::Config("at least one --checkpoint is required".into()));
        }
        let config = CrossEvalConfig {
            dataset_root: data,
            out_dir: args.out.clone(),
            arch: Arch::parse(&args.arch)?,
            input_hw: args.hw,
            batch_size: args.batch,
            data_seed: args.data_seed,
            val_fraction: args.val_fraction,
            variant_seed: args.variant_seed,
            checkpoints,
        };
        let matrix = cross_eval(&config)?;
        emit_report(&matrix, &args.out)?;
        matrix
    };
    print!("{}", matrix.to_csv());
    if args.show_reference {
        println!("\nfull-scale reference results:");
        print!("{}", reference_full_scale_matrix().to_csv());
    }
    println!("wrote {}", args.out.join("matrix.csv").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(&args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(&args),
        Command::CrossEval(args) => cmd_cross_eval(&args),
        Command::ParamCheck(args) => cmd_param_check(&args),
        Command::GradCheck(args) => cmd_grad_check(&args),
        Command::Synth(args) => {
            synth_dataset(args.seed, args.per_class, args.hw, args.classes, &args.out)?;
            println!(
                "wrote {} images across {} classes to {}",
                args.per_class * args.classes,
                args.classes,
                args.out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(raw) = std::env::var("PG_THREADS") {
        if raw.parse::<usize>().is_err() {
            eprintln!("error: PG_THREADS must be a non-negative integer");
            return ExitCode::from(1);
        }
        // Compute kernels are single-threaded; any cap is trivially honored.
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with exit 0.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
