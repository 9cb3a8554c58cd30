//! Sweeps run each training as an independent child process of this binary,
//! up to `--jobs` at a time, then aggregate the children's summaries.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use clap::Args;

use porepinn::config::CaseConfig;
use porepinn::experiment::{
    architecture_row, inverse_row, reference, transfer_row, weight_row, write_rows, ExperimentConfig,
    ExperimentError, RunDir,
};

use super::{default_jobs, out_root, CaseArgs, TrainArgs};

#[derive(Args, Debug)]
pub struct Common {
    #[command(flatten)]
    case: CaseArgs,
    /// Concurrent child runs; defaults to POREPINN_JOBS or 1.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    adam_epochs: Option<u64>,
    #[arg(long)]
    lbfgs_iters: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn jobs(&self) -> usize {
        self.jobs.filter(|&n| n > 0).unwrap_or_else(default_jobs)
    }

    fn train_args(&self, case: CaseArgs) -> TrainArgs {
        TrainArgs {
            case,
            adam_epochs: self.adam_epochs,
            lbfgs_iters: self.lbfgs_iters,
            quiet: self.quiet,
            ..TrainArgs::default()
        }
    }

    fn resolve(&self, default_preset: &str) -> Result<(ExperimentConfig, CaseConfig), ExperimentError> {
        let e = self.case.experiment(Some(default_preset))?;
        let case = e.resolve()?;
        Ok((e, case))
    }

    /// Case selection forwarded to children, with the default preset filled in.
    fn child_case(&self, default_preset: &str) -> CaseArgs {
        let mut c = self.case.clone();
        if c.config.is_none() && c.preset.is_none() {
            c.preset = Some(default_preset.to_string());
        }
        c.out = None;
        c
    }
}

#[derive(Args, Debug)]
pub struct InverseArgs {
    #[command(flatten)]
    common: Common,
    /// Labeled-point counts, one run each.
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,20,30,50,100")]
    points: Vec<usize>,
    /// Noise levels, one run each at the case's point count; replaces the
    /// point sweep when given.
    #[arg(long, value_delimiter = ',')]
    noise: Vec<f64>,
    /// Flow checkpoint to start from; trained first when absent.
    #[arg(long)]
    source: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WeightArgs {
    #[command(flatten)]
    common: Common,
    /// Loss term whose weight is swept.
    #[arg(long, default_value_t = 6)]
    term: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    scales: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct ArchitectureArgs {
    #[command(flatten)]
    common: Common,
    /// Mass fluxes in kg/(m²s); each selects the `fnn-<flux>` preset.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    mass_flux: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to transfer from; trained first when absent.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Skip the scratch counterpart.
    #[arg(long)]
    no_scratch: bool,
}

/// One child `train` invocation writing into `dir`.
struct Job {
    dir: PathBuf,
    args: TrainArgs,
}

fn spawn(job: &Job) -> Result<Child, ExperimentError> {
    fs::create_dir_all(&job.dir)?;
    let log = File::create(job.dir.join("run.log"))?;
    let mut args = job.args.forward();
    args.extend(["--out".into(), job.dir.display().to_string()]);
    Ok(Command::new(std::env::current_exe()?)
        .arg("train")
        .args(&args)
        .stdout(Stdio::from(log.try_clone()?))
        .stderr(Stdio::from(log))
        .spawn()?)
}

/// Runs every job, at most `jobs` at once, and returns their exit codes in
/// job order.
fn run_jobs(jobs: &[Job], parallel: usize) -> Result<Vec<u8>, ExperimentError> {
    let mut codes = vec![0u8; jobs.len()];
    let mut running: VecDeque<(usize, Child)> = VecDeque::new();
    let wait = |(k, mut child): (usize, Child), codes: &mut Vec<u8>| -> Result<(), ExperimentError> {
        let status = child.wait()?;
        codes[k] = status.code().map(|c| c as u8).unwrap_or(1);
        eprintln!("finished {} (exit {})", jobs[k].dir.display(), codes[k]);
        Ok(())
    };
    for (k, job) in jobs.iter().enumerate() {
        if running.len() >= parallel {
            let front = running.pop_front().expect("pool is non-empty");
            wait(front, &mut codes)?;
        }
        eprintln!("started {}", job.dir.display());
        running.push_back((k, spawn(job)?));
    }
    while let Some(front) = running.pop_front() {
        wait(front, &mut codes)?;
    }
    Ok(codes)
}

/// Worst exit code: configuration errors first, then the largest.
fn combine(codes: &[u8]) -> u8 {
    if codes.contains(&1) {
        1
    } else {
        codes.iter().copied().max().unwrap_or(0)
    }
}

fn sweep_dir(e: &ExperimentConfig, command: &str, case: &CaseConfig) -> PathBuf {
    e.out.clone().unwrap_or_else(|| out_root().join(command).join(&case.id))
}

/// Solves the case's reference once for every child of a sweep.
fn shared_reference(dir: &Path, case: &CaseConfig) -> Result<PathBuf, ExperimentError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(RunDir::REFERENCE);
    if !path.is_file() {
        let ds = reference(case)?;
        porepinn::oracle::export_dataset(&ds, &path)?;
    }
    Ok(path)
}

/// The given checkpoint, or a fresh training of the case's source preset.
fn source_checkpoint(
    given: Option<&PathBuf>,
    common: &Common,
    case: &CaseConfig,
    dir: &Path,
) -> Result<(PathBuf, u8), ExperimentError> {
    if let Some(p) = given {
        return Ok((p.clone(), 0));
    }
    let name = case
        .schedule
        .source_checkpoint
        .clone()
        .ok_or_else(|| ExperimentError::Invalid(format!("case `{}` names no source", case.id)))?;
    let mut c = common.case.clone();
    c.preset = Some(name);
    c.config = None;
    c.out = None;
    let job = Job {
        dir: dir.join("source"),
        args: common.train_args(c),
    };
    let code = run_jobs(std::slice::from_ref(&job), 1)?[0];
    Ok((job.dir.join(RunDir::CHECKPOINT), code))
}

fn report_codes(codes: &[u8]) -> u8 {
    let code = combine(codes);
    if code != 0 {
        eprintln!("child exit codes {codes:?}; see run.log in each run directory");
    }
    code
}

pub fn inverse(args: &InverseArgs) -> Result<u8, ExperimentError> {
    let common = &args.common;
    let (e, case) = common.resolve("inverse-D")?;
    let dir = sweep_dir(&e, "sweep-inverse", &case);
    let (source, code) = source_checkpoint(args.source.as_ref(), common, &case, &dir)?;
    if code != 0 {
        return Ok(report_codes(&[code]));
    }
    let reference = shared_reference(&dir, &case)?;
    let base_points = case.labels.map(|l| l.n_points).unwrap_or(0);
    let settings: Vec<(usize, f64, String)> = if args.noise.is_empty() {
        args.points.iter().map(|&n| (n, 0.0, format!("points-{n}"))).collect()
    } else {
        args.noise.iter().map(|&x| (base_points, x, format!("noise-{x}"))).collect()
    };
    let jobs: Vec<Job> = settings
        .iter()
        .map(|(n, x, name)| {
            let mut a = common.train_args(common.child_case("inverse-D"));
            a.source = Some(source.clone());
            a.reference = Some(reference.clone());
            a.points = Some(*n);
            a.noise = Some(*x);
            Job { dir: dir.join(name), args: a }
        })
        .collect();
    let codes = run_jobs(&jobs, common.jobs())?;
    let mut rows = Vec::new();
    for ((n, x, _), job) in settings.iter().zip(&jobs) {
        if let (Ok(s), Ok(r)) = (RunDir::read_summary(&job.dir), RunDir::read_report(&job.dir)) {
            rows.push(inverse_row(*n, *x, &s, &r)?);
        }
    }
    write_rows(&rows, File::create(dir.join("trend.csv"))?)?;
    for r in &rows {
        println!(
            "points {:>3} noise {:<6} Ts rel L2 {:.4e} Tf rel L2 {:.4e}",
            r.n_points, r.noise, r.ts_relative_l2, r.tf_relative_l2
        );
    }
    Ok(report_codes(&codes))
}

pub fn weights(args: &WeightArgs) -> Result<u8, ExperimentError> {
    let common = &args.common;
    if args.scales.is_empty() || !(1..=21).contains(&args.term) {
        return Err(ExperimentError::Invalid("need a term in 1..=21 and at least one scale".into()));
    }
    let (e, case) = common.resolve("B")?;
    let dir = sweep_dir(&e, "sweep-weights", &case);
    let reference = shared_reference(&dir, &case)?;
    let jobs: Vec<Job> = args
        .scales
        .iter()
        .map(|&s| {
            let mut a = common.train_args(common.child_case("B"));
            a.reference = Some(reference.clone());
            a.weights = vec![(args.term, s)];
            Job {
                dir: dir.join(format!("lambda{}-{s:e}", args.term)),
                args: a,
            }
        })
        .collect();
    let codes = run_jobs(&jobs, common.jobs())?;
    let mut rows = Vec::new();
    for job in &jobs {
        if let (Ok(s), Ok(r)) = (RunDir::read_summary(&job.dir), RunDir::read_report(&job.dir)) {
            rows.push(weight_row(args.term, &s, &r)?);
        }
    }
    write_rows(&rows, File::create(dir.join("weights.csv"))?)?;
    for r in &rows {
        println!(
            "lambda{} {:.0e}: e{} {:.4e} remaining {:.4e} inlet v {:.4e} p {:.4e}",
            args.term, r.lambda, args.term, r.e_final, r.remaining_loss, r.inlet_v_relative_l2, r.p_relative_l2
        );
    }
    Ok(report_codes(&codes))
}

pub fn architectures(args: &ArchitectureArgs) -> Result<u8, ExperimentError> {
    let common = &args.common;
    let root = common.case.out.clone().unwrap_or_else(|| out_root().join("compare-architectures"));
    let mut jobs = Vec::new();
    let mut labels = Vec::new();
    for &m in &args.mass_flux {
        let name = format!("fnn-{m:.1}");
        let mut c = common.case.clone();
        c.preset = Some(name.clone());
        c.config = None;
        c.out = None;
        let case = c.experiment(None)?.resolve()?;
        let reference = shared_reference(&root.join(&name), &case)?;
        for (model, fnn) in [("tb-net", false), ("fnn", true)] {
            let mut a = common.train_args(c.clone());
            a.reference = Some(reference.clone());
            a.fnn = fnn;
            jobs.push(Job {
                dir: root.join(&name).join(model),
                args: a,
            });
            labels.push((m, model));
        }
    }
    let codes = run_jobs(&jobs, common.jobs())?;
    let mut rows = Vec::new();
    for ((m, model), job) in labels.iter().zip(&jobs) {
        if let Ok(r) = RunDir::read_report(&job.dir) {
            rows.push(architecture_row(*m, model, &r)?);
        }
    }
    write_rows(&rows, File::create(root.join("architectures.csv"))?)?;
    for r in &rows {
        println!(
            "m = {:.1} {:<6} p rel L2 {:.4e} max {:.4e}",
            r.mass_flux, r.model, r.p_relative_l2, r.p_max_relative
        );
    }
    Ok(report_codes(&codes))
}

pub fn transfer(args: &TransferArgs) -> Result<u8, ExperimentError> {
    let common = &args.common;
    let (e, case) = common.resolve("eps-0.4")?;
    let dir = sweep_dir(&e, "transfer", &case);
    let (source, code) = source_checkpoint(args.source.as_ref(), common, &case, &dir)?;
    if code != 0 {
        return Ok(report_codes(&[code]));
    }
    let reference = shared_reference(&dir, &case)?;
    let mut jobs = Vec::new();
    for (name, scratch) in [("transfer", false), ("scratch", true)] {
        if scratch && args.no_scratch {
            continue;
        }
        let mut a = common.train_args(common.child_case("eps-0.4"));
        a.source = Some(source.clone());
        a.reference = Some(reference.clone());
        a.scratch = scratch;
        jobs.push(Job { dir: dir.join(name), args: a });
    }
    // Timing is compared between runs, so they never share the CPU.
    let codes = run_jobs(&jobs, 1)?;
    let mut rows = Vec::new();
    for (job, name) in jobs.iter().zip(["transfer", "scratch"]) {
        if let (Ok(s), Ok(r), Ok(t)) = (
            RunDir::read_summary(&job.dir),
            RunDir::read_report(&job.dir),
            RunDir::read_timing(&job.dir),
        ) {
            rows.push(transfer_row(name, &s, &r, &t)?);
        }
    }
    write_rows(&rows, File::create(dir.join("transfer.csv"))?)?;
    for r in &rows {
        println!(
            "{:<8} first loss {:.4e} final loss {:.4e} p rel L2 {:.4e} {:.2e} s/epoch {} trainable",
            r.run, r.first_loss, r.final_loss, r.p_relative_l2, r.seconds_per_epoch, r.trainable_params
        );
    }
    Ok(report_codes(&codes))
}
