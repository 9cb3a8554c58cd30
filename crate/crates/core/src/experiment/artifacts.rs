//! Files of one run directory. The config snapshot is written first so an
//! interrupted run still records what it was asked to do.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, ExperimentError, RunOutcome};
use crate::config::{CaseConfig, Mode};
use crate::metrics::{kde_density, re_histogram, sample_eval_points, EvalReport};
use crate::model::{save_checkpoint, Checkpoint};
use crate::oracle::{export_dataset, ReferenceDataset};
use crate::physics::{Primary, TERM_COUNT};
use crate::trainer::{sub_seed, Divergence, Phase, Status, TrainingTrace};

/// Relative-error bin edges of the histogram plot data.
pub const RE_EDGES: [f64; 7] = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
/// Nodes sampled for the KDE and histogram plot data.
pub const PLOT_SAMPLES: usize = 1000;
/// KDE grid resolution per axis.
pub const KDE_RESOLUTION: usize = 200;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    case: CaseConfig,
    seed: u64,
    architecture: Architecture,
    source: Option<String>,
    reference: Option<String>,
}

/// Numeric outcome of a run; everything here is reproducible from the
/// config and seed. Wall-clock timings live in `timing.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub case_id: String,
    pub mode: Mode,
    pub architecture: Architecture,
    pub seed: u64,
    pub status: Status,
    pub adam_epochs: u64,
    pub lbfgs_iterations: u64,
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
    /// Unweighted mean squares of e1…e21 at the end of training.
    pub final_terms: Vec<f64>,
    /// Active weights, zero for inactive terms.
    pub lambda: Vec<f64>,
    pub trainable_params: usize,
    pub inlet_v_relative_l2: f64,
    pub divergence: Option<Divergence>,
}

impl RunSummary {
    pub fn new(
        case: &CaseConfig,
        seed: u64,
        architecture: Architecture,
        trace: &TrainingTrace,
        trainable_params: usize,
        inlet_v_relative_l2: f64,
    ) -> Self {
        let count = |p: Phase| trace.rows.iter().filter(|r| r.phase == p).count() as u64;
        RunSummary {
            case_id: case.id.clone(),
            mode: case.schedule.mode,
            architecture,
            seed,
            status: trace.status(),
            adam_epochs: count(Phase::Adam),
            lbfgs_iterations: count(Phase::Lbfgs).saturating_sub(1),
            first_loss: trace.first().map(|b| b.total),
            final_loss: trace.last().map(|b| b.total),
            final_terms: trace.last().map(|b| b.terms.to_vec()).unwrap_or_else(|| vec![0.0; TERM_COUNT]),
            lambda: (1..=TERM_COUNT)
                .map(|j| if case.weights.is_active(j) { case.weights.get(j) } else { 0.0 })
                .collect(),
            trainable_params,
            inlet_v_relative_l2,
            divergence: trace.divergence.clone(),
        }
    }

    /// Final unweighted mean square of term `j`.
    pub fn term(&self, j: usize) -> f64 {
        self.final_terms[j - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub adam_seconds: f64,
    pub lbfgs_seconds: f64,
    /// Adam wall-clock per epoch.
    pub seconds_per_epoch: f64,
}

impl Timing {
    pub fn of(trace: &TrainingTrace) -> Self {
        let adam_rows = trace.rows.iter().filter(|r| r.phase == Phase::Adam).count().max(1);
        let adam_seconds = trace.seconds(Phase::Adam);
        Timing {
            adam_seconds,
            lbfgs_seconds: trace.seconds(Phase::Lbfgs),
            seconds_per_epoch: adam_seconds / adam_rows as f64,
        }
    }
}

/// Directory holding every artifact of one run.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub const CONFIG: &'static str = "config.json";
    pub const REFERENCE: &'static str = "reference.csv";
    pub const CHECKPOINT: &'static str = "checkpoint.ppck";
    pub const TRACE: &'static str = "trace.csv";
    pub const REPORT_CSV: &'static str = "report.csv";
    pub const REPORT_JSON: &'static str = "report.json";
    pub const SUMMARY: &'static str = "summary.json";
    pub const TIMING: &'static str = "timing.json";
    pub const LABELS: &'static str = "labels.csv";

    /// Creates the directory and writes the config snapshot.
    pub fn create(
        root: &Path,
        case: &CaseConfig,
        seed: u64,
        architecture: Architecture,
        source: Option<&Path>,
        reference: Option<&Path>,
    ) -> Result<Self, ExperimentError> {
        fs::create_dir_all(root)?;
        let dir = RunDir { root: root.to_path_buf() };
        let snap = Snapshot {
            case: case.clone(),
            seed,
            architecture,
            source: source.map(|p| p.display().to_string()),
            reference: reference.map(|p| p.display().to_string()),
        };
        dir.write_json(Self::CONFIG, &snap)?;
        Ok(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), ExperimentError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn create_file(&self, name: &str) -> Result<BufWriter<File>, ExperimentError> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn write_reference(&self, ds: &ReferenceDataset) -> Result<(), ExperimentError> {
        export_dataset(ds, &self.path(Self::REFERENCE))?;
        Ok(())
    }

    pub fn write_checkpoint(&self, ckpt: &Checkpoint) -> Result<PathBuf, ExperimentError> {
        let path = self.path(Self::CHECKPOINT);
        save_checkpoint(ckpt, &path)?;
        Ok(path)
    }

    pub fn write_report(&self, report: &EvalReport) -> Result<(), ExperimentError> {
        report.write_csv(self.create_file(Self::REPORT_CSV)?)?;
        self.write_json(Self::REPORT_JSON, report)
    }

    /// Every artifact of a finished run.
    pub fn write_outcome(
        &self,
        case: &CaseConfig,
        seed: u64,
        architecture: Architecture,
        ds: &ReferenceDataset,
        outcome: &RunOutcome,
    ) -> Result<RunSummary, ExperimentError> {
        let epoch = outcome.trace.rows.last().map(|r| r.epoch).unwrap_or(0);
        self.write_checkpoint(&outcome.net.checkpoint(&case.id, epoch, seed))?;
        outcome.trace.write_csv(self.create_file(Self::TRACE)?)?;
        self.write_report(&outcome.report)?;
        if let Some(l) = &outcome.labels {
            let mut w = csv::Writer::from_writer(self.create_file(Self::LABELS)?);
            let mut header: Vec<&str> = ["x", "y", "z"][..l.points.dim].to_vec();
            header.extend(["hk", "ts"]);
            w.write_record(&header)?;
            for i in 0..l.points.len() {
                let mut rec: Vec<String> = l.points.point(i).iter().map(|c| format!("{c:e}")).collect();
                rec.push(format!("{:e}", l.hk[i]));
                rec.push(format!("{:e}", l.ts[i]));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        let pred = outcome.net.predict(case, &ds.grid)?;
        self.write_plot_data(case, ds, &pred, seed)?;
        let summary = outcome.summary(case, seed, architecture);
        self.write_json(Self::SUMMARY, &summary)?;
        self.write_json(Self::TIMING, &Timing::of(&outcome.trace))?;
        Ok(summary)
    }

    /// KDE surface and relative-error histogram of the headline variable
    /// (pressure for flow runs, solid temperature for heat runs) on sampled
    /// nodes: `kde_<var>.csv` and `re_histogram_<var>.csv`.
    pub fn write_plot_data(
        &self,
        case: &CaseConfig,
        ds: &ReferenceDataset,
        pred: &[Primary],
        seed: u64,
    ) -> Result<(), ExperimentError> {
        let (var, exact, pick): (&str, &[f64], fn(&Primary) -> f64) = match &ds.t_s {
            Some(ts) if case.is_heat() => ("Ts", ts, |q| q.t_s),
            _ => ("p", &ds.p, |q| q.p),
        };
        let n = PLOT_SAMPLES.min(ds.grid.len());
        let nodes = sample_eval_points(n, ds.grid.len(), sub_seed(seed, 200))?;
        let e: Vec<f64> = nodes.iter().map(|&k| exact[k]).collect();
        let p: Vec<f64> = nodes.iter().map(|&k| pick(&pred[k])).collect();
        let pairs: Vec<(f64, f64)> = e.iter().copied().zip(p.iter().copied()).collect();
        // A collapsed point cloud has no density; the histogram still applies.
        if let Ok(kde) = kde_density(&pairs, KDE_RESOLUTION) {
            kde.write_csv(self.create_file(&format!("kde_{var}.csv"))?)?;
        }
        let counts = re_histogram(&p, &e, &RE_EDGES)?;
        let mut w = csv::Writer::from_writer(self.create_file(&format!("re_histogram_{var}.csv"))?);
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (k, c) in counts.iter().enumerate() {
            w.write_record([format!("{:e}", RE_EDGES[k]), format!("{:e}", RE_EDGES[k + 1]), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_summary(root: &Path) -> Result<RunSummary, ExperimentError> {
        Ok(serde_json::from_str(&fs::read_to_string(root.join(Self::SUMMARY))?)?)
    }

    pub fn read_report(root: &Path) -> Result<EvalReport, ExperimentError> {
        Ok(serde_json::from_str(&fs::read_to_string(root.join(Self::REPORT_JSON))?)?)
    }

    pub fn read_timing(root: &Path) -> Result<Timing, ExperimentError> {
        Ok(serde_json::from_str(&fs::read_to_string(root.join(Self::TIMING))?)?)
    }
}
