//! Command-line driver: reference generation, training, evaluation and the
//! sweeps behind every comparison table.

mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use porepinn::config::{CaseConfig, LabelSpec, Scale};
use porepinn::experiment::{
    check_reference, reference, scratch_counterpart, train_case, Architecture, ExperimentConfig, ExperimentError,
    RunDir, TrainedNet,
};
use porepinn::model::load_checkpoint;
use porepinn::oracle::{import_dataset, ReferenceDataset};
use porepinn::trainer::{Phase, Status, TraceRow};

/// Output root when neither `--out` nor `POREPINN_OUT` is set.
const DEFAULT_OUT: &str = "runs";

#[derive(Parser, Debug)]
#[command(name = "porepinn", version, about = "Physics-informed networks for porous-media flow and heat transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the reference fields of a case and write the dataset.
    GenerateReference(CaseArgs),
    /// Train one case and evaluate it against its reference.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a case's reference.
    Evaluate(EvaluateArgs),
    /// Inverse runs over labeled-point counts or noise levels.
    SweepInverse(sweep::InverseArgs),
    /// One run per weight of a single loss term.
    SweepWeights(sweep::WeightArgs),
    /// Trunk-branch net against the neuron-matched plain network.
    CompareArchitectures(sweep::ArchitectureArgs),
    /// Transfer run and its scratch counterpart.
    Transfer(sweep::TransferArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CaseArgs {
    /// Shipped preset name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Desk-scale sizes and schedules (the default).
    #[arg(long, conflicts_with = "full")]
    desk: bool,
    /// Full-scale sizes and schedules.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Exact output directory of this command.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CaseArgs {
    fn experiment(&self, default_preset: Option<&str>) -> Result<ExperimentConfig, ExperimentError> {
        let mut e = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
            (None, Some(p)) => ExperimentConfig::from_preset(p, Scale::Desk),
            (None, None) => match default_preset {
                Some(p) => ExperimentConfig::from_preset(p, Scale::Desk),
                None => return Err(ExperimentError::Invalid("give --preset or --config".into())),
            },
        };
        if self.full {
            e.scale = Scale::Full;
        } else if self.desk {
            e.scale = Scale::Desk;
        }
        if let Some(s) = self.seed {
            e.seed = s;
        }
        if let Some(o) = &self.out {
            e.out = Some(o.clone());
        }
        Ok(e)
    }

    /// Flags that reproduce this case selection in a child process.
    fn forward(&self) -> Vec<String> {
        let mut a = Vec::new();
        if let Some(c) = &self.config {
            a.extend(["--config".into(), c.display().to_string()]);
        }
        if let Some(p) = &self.preset {
            a.extend(["--preset".into(), p.clone()]);
        }
        a.push(if self.full { "--full" } else { "--desk" }.into());
        if let Some(s) = self.seed {
            a.extend(["--seed".into(), s.to_string()]);
        }
        a
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Checkpoint the run continues from.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Reference dataset CSV; solved afresh when absent.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Number of labeled outlet points.
    #[arg(long)]
    points: Option<usize>,
    /// Relative noise amplitude on labeled points, e.g. 0.01 for 1 %.
    #[arg(long)]
    noise: Option<f64>,
    /// Override one weight, `TERM=VALUE`; repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    weights: Vec<(usize, f64)>,
    #[arg(long)]
    adam_epochs: Option<u64>,
    #[arg(long)]
    lbfgs_iters: Option<u64>,
    /// Train the neuron-matched plain network instead.
    #[arg(long)]
    fnn: bool,
    /// Train a transfer case from a fresh initialization.
    #[arg(long)]
    scratch: bool,
    /// Suppress progress lines.
    #[arg(long)]
    quiet: bool,
}

impl TrainArgs {
    fn forward(&self) -> Vec<String> {
        let mut a = self.case.forward();
        if let Some(s) = &self.source {
            a.extend(["--source".into(), s.display().to_string()]);
        }
        if let Some(r) = &self.reference {
            a.extend(["--reference".into(), r.display().to_string()]);
        }
        if let Some(n) = self.points {
            a.extend(["--points".into(), n.to_string()]);
        }
        if let Some(n) = self.noise {
            a.extend(["--noise".into(), n.to_string()]);
        }
        for (j, v) in &self.weights {
            a.extend(["--weight".into(), format!("{j}={v:e}")]);
        }
        if let Some(n) = self.adam_epochs {
            a.extend(["--adam-epochs".into(), n.to_string()]);
        }
        if let Some(n) = self.lbfgs_iters {
            a.extend(["--lbfgs-iters".into(), n.to_string()]);
        }
        if self.fnn {
            a.push("--fnn".into());
        }
        if self.scratch {
            a.push("--scratch".into());
        }
        if self.quiet {
            a.push("--quiet".into());
        }
        a
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn parse_weight(s: &str) -> Result<(usize, f64), String> {
    let (j, v) = s.split_once('=').ok_or("expected TERM=VALUE")?;
    let j: usize = j.trim().parse().map_err(|e| format!("term: {e}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("value: {e}"))?;
    if !(1..=21).contains(&j) || !(v > 0.0 && v.is_finite()) {
        return Err(format!("weight {j}={v} out of range"));
    }
    Ok((j, v))
}

/// `POREPINN_OUT` or the default output root.
pub fn out_root() -> PathBuf {
    std::env::var_os("POREPINN_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// `POREPINN_JOBS` or 1.
pub fn default_jobs() -> usize {
    std::env::var("POREPINN_JOBS").ok().and_then(|s| s.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

fn run_dir(e: &ExperimentConfig, command: &str, case: &CaseConfig) -> PathBuf {
    e.out.clone().unwrap_or_else(|| out_root().join(command).join(&case.id))
}

/// Exit code of a failed command: bad input is 1, as is any other error.
fn fail(e: &ExperimentError) -> u8 {
    eprintln!("error: {e}");
    if e.is_config() {
        eprintln!("(invalid configuration)");
    }
    1
}

fn load_reference(case: &CaseConfig, path: Option<&Path>) -> Result<ReferenceDataset, ExperimentError> {
    match path {
        Some(p) => {
            let ds = import_dataset(p)?;
            check_reference(case, &ds)?;
            Ok(ds)
        }
        None => reference(case),
    }
}

fn generate_reference(args: &CaseArgs) -> Result<u8, ExperimentError> {
    let e = args.experiment(None)?;
    let case = e.resolve()?;
    let dir = RunDir::create(&run_dir(&e, "reference", &case), &case, e.seed, Architecture::TrunkBranch, None, None)?;
    let start = Instant::now();
    let ds = reference(&case)?;
    dir.write_reference(&ds)?;
    println!(
        "reference {} grid {:?}: {} flow iterations, continuity {:.2e}{} in {:.1}s -> {}",
        case.id,
        ds.grid.n,
        ds.residuals.flow_iterations,
        ds.residuals.continuity,
        ds.residuals.energy_sweeps.map(|s| format!(", {s} energy sweeps")).unwrap_or_default(),
        start.elapsed().as_secs_f64(),
        dir.path(RunDir::REFERENCE).display()
    );
    Ok(0)
}

fn train(args: &TrainArgs) -> Result<u8, ExperimentError> {
    let mut e = args.case.experiment(None)?;
    if let Some(s) = &args.source {
        e.source = Some(s.clone());
    }
    if let Some(r) = &args.reference {
        e.reference = Some(r.clone());
    }
    let mut case = e.resolve()?;
    if args.points.is_some() || args.noise.is_some() {
        let base = case.labels.unwrap_or(LabelSpec { n_points: 0, noise: 0.0 });
        case.labels = Some(LabelSpec {
            n_points: args.points.unwrap_or(base.n_points),
            noise: args.noise.unwrap_or(base.noise),
        });
    }
    for &(j, v) in &args.weights {
        case.weights.set(j, v);
    }
    if let Some(n) = args.adam_epochs {
        case.schedule.adam_epochs = n;
    }
    if let Some(n) = args.lbfgs_iters {
        case.schedule.lbfgs_max_iters = n;
    }
    if args.scratch {
        case = scratch_counterpart(&case);
    }
    case.validate()?;
    let architecture = if args.fnn { Architecture::Fnn } else { Architecture::TrunkBranch };
    let source_path = match case.schedule.mode {
        porepinn::config::Mode::Flow | porepinn::config::Mode::Joint => None,
        _ => Some(
            e.source
                .clone()
                .or_else(|| case.schedule.source_checkpoint.as_ref().map(PathBuf::from))
                .filter(|p| p.is_file())
                .ok_or_else(|| {
                    ExperimentError::Invalid(format!(
                        "case `{}` needs a trained source checkpoint file (--source); `{}` is not one",
                        case.id,
                        case.schedule.source_checkpoint.as_deref().unwrap_or("")
                    ))
                })?,
        ),
    };
    let source = source_path.as_deref().map(load_checkpoint).transpose()?;
    let dir_path = run_dir(&e, "train", &case);
    let dir = RunDir::create(&dir_path, &case, e.seed, architecture, source_path.as_deref(), e.reference.as_deref())?;
    let ds = load_reference(&case, e.reference.as_deref())?;
    if e.reference.is_none() {
        dir.write_reference(&ds)?;
    }
    let start = Instant::now();
    let quiet = args.quiet;
    let mut progress = |r: &TraceRow| {
        let every = if r.phase == Phase::Adam { 1000 } else { 100 };
        if !quiet && r.epoch % every == 0 {
            eprintln!(
                "[{}] {:?} epoch {} loss {:.4e} ({:.0}s)",
                case.id,
                r.phase,
                r.epoch,
                r.loss.total,
                start.elapsed().as_secs_f64()
            );
        }
    };
    let outcome = train_case(&case, architecture, source.as_ref(), &ds, e.seed, Some(&mut progress))?;
    let summary = dir.write_outcome(&case, e.seed, architecture, &ds, &outcome)?;
    for row in outcome.report.rows.iter().filter(|r| r.slice == porepinn::metrics::Slice::Full) {
        println!("{} {} relative L2 {:.4e}", case.id, row.variable, row.error.relative_l2);
    }
    println!(
        "{} {:?} final loss {:.4e} -> {}",
        case.id,
        summary.status,
        summary.final_loss.unwrap_or(f64::NAN),
        dir_path.display()
    );
    Ok(status_code(summary.status))
}

fn status_code(s: Status) -> u8 {
    s.exit_code() as u8
}

fn evaluate(args: &EvaluateArgs) -> Result<u8, ExperimentError> {
    let e = args.case.experiment(None)?;
    let case = e.resolve()?;
    let net = TrainedNet::from_checkpoint(&load_checkpoint(&args.checkpoint)?)?;
    let dir = RunDir::create(
        &run_dir(&e, "evaluate", &case),
        &case,
        e.seed,
        match net {
            TrainedNet::Fnn(_) => Architecture::Fnn,
            TrainedNet::TrunkBranch(_) => Architecture::TrunkBranch,
        },
        Some(&args.checkpoint),
        args.reference.as_deref(),
    )?;
    let ds = load_reference(&case, args.reference.as_deref())?;
    let report = net.evaluate(&case, &ds)?;
    dir.write_report(&report)?;
    let pred = net.predict(&case, &ds.grid)?;
    dir.write_plot_data(&case, &ds, &pred, e.seed)?;
    for row in &report.rows {
        println!("{} {} {} relative L2 {:.4e}", case.id, row.variable, row.slice, row.error.relative_l2);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenerateReference(a) => generate_reference(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepInverse(a) => sweep::inverse(a),
        Command::SweepWeights(a) => sweep::weights(a),
        Command::CompareArchitectures(a) => sweep::architectures(a),
        Command::Transfer(a) => sweep::transfer(a),
    };
    ExitCode::from(result.unwrap_or_else(|e| fail(&e)))
}
