//! `csegnet`: phantom generation, training, prediction, evaluation, NIfTI
//! conversion and gradient checking from the command line.

mod config;
mod error;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csegnet::data::{
    generate_phantom, parse_nifti, prepare_slices, read_dataset, split_train_val, write_case, write_dataset, Case,
    PhantomConfig, PhantomTruth, Slice,
};
use csegnet::gradcheck::{self, Suite, TOL};
use csegnet::metrics::{EvalCase, MetricsReport};
use csegnet::model::summary;
use csegnet::train::{load_checkpoint, predict_case, save_checkpoint, train, LOG_HEADER};
use csegnet::{Phase, Volume};
use serde::Serialize;

use config::RunConfig;
use error::{CliError, Kind};

const REPORT_SCHEMA: &str = "\
Report CSV columns, one row per case, phase and foreground class:
  case_id         patient identifier
  phase           ED or ES
  class           RVC, LVM or LVC
  dice            volumetric Dice coefficient in [0, 1]
  hausdorff_mm    symmetric 3-D Hausdorff distance in mm; empty when either mask is empty
  volume_pred_ml  predicted structure volume in ml
  volume_true_ml  reference structure volume in ml

A summary table with per-phase Dice and Hausdorff means, and correlation /
bias of ejection fraction (cavities), myocardial mass and volumes, is printed
to stdout.";

#[derive(Parser)]
#[command(name = "csegnet", version, about = "Cardiac MR segmentation with dilated pyramid pooling skip connections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic short-axis dataset with known volumes and ejection fractions.
    Phantom(PhantomArgs),
    /// Train a model and keep the best checkpoints.
    Train(TrainArgs),
    /// Segment every case of a dataset with an ensemble of 1 to 5 checkpoints.
    Predict(PredictArgs),
    /// Score predicted label volumes against reference labels.
    #[command(after_help = REPORT_SCHEMA)]
    Evaluate(EvaluateArgs),
    /// Convert a NIfTI-1 image (and optional label map) into the native case format.
    Convert(ConvertArgs),
    /// Run the finite-difference gradient check of every differentiable operator.
    Gradcheck(GradcheckArgs),
    /// Print the layer table and parameter count of a model configuration.
    Summary(SummaryArgs),
}

#[derive(Args, Serialize)]
struct PhantomArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of patients; each yields an ED and an ES case.
    #[arg(long, default_value_t = 250)]
    count: usize,
    /// Image height and width in pixels.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Slices per volume.
    #[arg(long, default_value_t = 1)]
    slices: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Native-format dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// key = value configuration file; defaults to the desk preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides train.epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Master seed for initialization, split, shuffling and augmentation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for checkpoints, log and manifests.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    /// Checkpoint file; repeat for an ensemble of up to 5.
    #[arg(long = "ckpt", required = true, num_args = 1..)]
    ckpts: Vec<PathBuf>,
    /// Native-format dataset directory to segment.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output dataset directory; labels are replaced by the predictions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Dataset directory holding predicted labels.
    #[arg(long)]
    pred: PathBuf,
    /// Dataset directory holding reference labels.
    #[arg(long)]
    truth: PathBuf,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ConvertArgs {
    /// NIfTI-1 image volume.
    #[arg(long)]
    nifti: PathBuf,
    /// NIfTI-1 label volume with values 0 to 3; background everywhere if absent.
    #[arg(long)]
    label: Option<PathBuf>,
    /// Case identifier; defaults to the image file stem.
    #[arg(long)]
    case_id: Option<String>,
    /// Cardiac phase, ED or ES.
    #[arg(long, default_value = "ED")]
    phase: String,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Also check the full model with batch statistics (reported, not gated).
    #[arg(long)]
    batch_stats: bool,
}

#[derive(Args)]
struct SummaryArgs {
    /// key = value configuration file; defaults to the desk preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Everything needed to reproduce a run, written before the work starts.
#[derive(Serialize)]
struct RunManifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    seed: Option<u64>,
    args: &'a A,
    config: Option<&'a RunConfig>,
}

fn write_manifest<A: Serialize>(
    dir: &Path,
    subcommand: &'static str,
    seed: Option<u64>,
    args: &A,
    config: Option<&RunConfig>,
) -> Result<(), CliError> {
    let manifest = RunManifest { tool: "csegnet", version: env!("CARGO_PKG_VERSION"), subcommand, seed, args, config };
    write_json(&dir.join("run_manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(Kind::Internal, e.to_string()))?;
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

#[derive(Serialize)]
struct GeneratorManifest<'a> {
    config: &'a PhantomConfig,
    patients: &'a [PhantomTruth],
}

fn cmd_phantom(args: &PhantomArgs) -> Result<(), CliError> {
    let cfg = PhantomConfig { slices: args.slices, seed: args.seed, ..PhantomConfig::with_size(args.size) };
    cfg.validate()?;
    create_dir(&args.out)?;
    write_manifest(&args.out, "phantom", Some(args.seed), args, None)?;
    let (cases, truth) = generate_phantom(&cfg, args.count)?;
    write_dataset(&args.out, &cases)?;
    write_json(&args.out.join("generator_manifest.json"), &GeneratorManifest { config: &cfg, patients: &truth })?;
    eprintln!("wrote {} cases to {}", cases.len(), args.out.display());
    Ok(())
}

fn slices_of(cases: &[Case], ids: &[String], size: (usize, usize)) -> Vec<Slice> {
    cases.iter().filter(|c| ids.contains(&c.case_id)).flat_map(|c| prepare_slices(c, size)).collect()
}

#[derive(Serialize)]
struct Split<'a> {
    train: &'a [String],
    val: &'a [String],
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.train.seed = args.seed;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    create_dir(&args.out)?;
    write_manifest(&args.out, "train", Some(args.seed), args, Some(&cfg))?;
    write_file(&args.out.join("config.txt"), cfg.to_text().as_bytes())?;

    let cases = read_dataset(&args.data)?;
    let mut ids: Vec<String> = cases.iter().map(|c| c.case_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let (train_ids, val_ids) = split_train_val(&ids, cfg.val_ratio, args.seed)?;
    write_json(&args.out.join("split.json"), &Split { train: &train_ids, val: &val_ids })?;
    let train_slices = slices_of(&cases, &train_ids, cfg.model.input_size);
    let val_slices = slices_of(&cases, &val_ids, cfg.model.input_size);
    eprintln!("{} train slices, {} validation slices", train_slices.len(), val_slices.len());

    let log_path = args.out.join("train_log.csv");
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?;
    let mut log_io = Ok(());
    let _ = writeln!(log, "{LOG_HEADER}");
    let outcome = train(&cfg.model, &cfg.train, &train_slices, &val_slices, |row| {
        eprintln!("epoch {} loss {:.4} val dice {:.4}", row.epoch, row.train_loss, row.val_dice_mean);
        if log_io.is_ok() {
            log_io = writeln!(log, "{}", row.csv_row()).and_then(|()| log.flush());
        }
    })?;
    log_io.map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?;

    for (rank, entry) in outcome.registry.entries().iter().enumerate() {
        let path = args.out.join(format!("top{}_epoch{:03}.ckpt", rank + 1, entry.epoch));
        save_checkpoint(&entry.item, &path)?;
    }
    save_checkpoint(&outcome.last, &args.out.join("last.ckpt"))?;
    if let Some(best) = outcome.registry.best() {
        eprintln!("best validation Dice {:.4} at epoch {}", best.score, best.epoch);
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    if args.ckpts.len() > 5 {
        return Err(CliError::usage(format!("at most 5 checkpoints, got {}", args.ckpts.len())));
    }
    create_dir(&args.out)?;
    write_manifest(&args.out, "predict", None, args, None)?;
    let models =
        args.ckpts.iter().map(|p| load_checkpoint(p).and_then(|c| c.model())).collect::<Result<Vec<_>, _>>()?;
    let cases = read_dataset(&args.input)?;
    for case in &cases {
        let label = predict_case(&models, case)?;
        let out = Case { label, ..case.clone() };
        write_case(&args.out, &out)?;
    }
    eprintln!("segmented {} cases with {} checkpoint(s)", cases.len(), models.len());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let pred = read_dataset(&args.pred)?;
    let truth = read_dataset(&args.truth)?;
    let by_key: BTreeMap<String, &Case> = pred.iter().map(|c| (c.key(), c)).collect();
    let mut pairs = Vec::with_capacity(truth.len());
    for t in &truth {
        let p = by_key.get(&t.key()).ok_or_else(|| CliError::data(format!("no prediction for case {}", t.key())))?;
        pairs.push(EvalCase {
            case_id: &t.case_id,
            phase: t.phase,
            pred: &p.label,
            truth: &t.label,
            spacing: t.spacing,
        });
    }
    let report = MetricsReport::compute(&pairs)?;
    write_file(&args.out, report.to_csv().as_bytes())?;
    print!("{}", report.summary_table());
    if let Some(d) = report.mean_foreground_dice() {
        println!("mean foreground Dice {d:.4} over {} cases", pairs.len());
    }
    Ok(())
}

fn read_nifti(path: &Path) -> Result<csegnet::data::NiftiVolume, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    parse_nifti(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn cmd_convert(args: &ConvertArgs) -> Result<(), CliError> {
    let phase: Phase = args.phase.parse()?;
    create_dir(&args.out)?;
    write_manifest(&args.out, "convert", None, args, None)?;
    let image = read_nifti(&args.nifti)?;
    let label = match &args.label {
        Some(path) => {
            let l = read_nifti(path)?;
            if l.volume.dims() != image.volume.dims() {
                return Err(CliError::data(format!(
                    "label dims {:?} differ from image dims {:?}",
                    l.volume.dims(),
                    image.volume.dims()
                )));
            }
            let bad = l.volume.data().iter().find(|v| !(0.0..=3.0).contains(*v) || v.fract() != 0.0);
            if let Some(v) = bad {
                return Err(CliError::data(format!("{}: label value {v} is not in 0..=3", path.display())));
            }
            l.volume.map(|v| v as u8)
        }
        None => Volume::filled(image.volume.dims(), 0u8),
    };
    let case_id = match &args.case_id {
        Some(id) => id.clone(),
        None => stem(&args.nifti),
    };
    let case = Case::new(case_id, phase, image.volume, label, image.spacing)?;
    let path = write_case(&args.out, &case)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// File name without `.nii` / `.nii.gz` style extensions.
fn stem(path: &Path) -> String {
    let name = path.file_name().map_or_else(|| "case".to_string(), |n| n.to_string_lossy().into_owned());
    name.split('.').next().filter(|s| !s.is_empty()).unwrap_or("case").to_string()
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let mut suite = Suite::default();
    gradcheck::all_ops(&mut suite);
    gradcheck::model_forward(&mut suite);
    println!("{:<24} {:>6} {:>12}", "op", "cases", "max rel err");
    for (op, count, err) in suite.worst_by_op() {
        println!("{op:<24} {count:>6} {err:>12.3e}");
    }
    if args.batch_stats {
        let mut extra = Suite::default();
        gradcheck::model_forward_training(&mut extra);
        for (op, count, err) in extra.worst_by_op() {
            println!("{op:<24} {count:>6} {err:>12.3e}  (not gated)");
        }
    }
    match suite.failures().first() {
        Some(r) => Err(CliError::new(
            Kind::Numeric,
            format!("{} {:?}: relative error {:e} exceeds {TOL:e}", r.op, r.shape, r.error),
        )),
        None => Ok(()),
    }
}

fn cmd_summary(args: &SummaryArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    print!("{}", summary(&cfg.model)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Summary(a) => cmd_summary(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let message = first.trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(message).to_line());
            return ExitCode::from(Kind::Usage.code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
