//! Rows of the comparison tables emitted by sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::artifacts::{RunSummary, Timing};
use super::ExperimentError;
use crate::metrics::{EvalReport, Slice};
use crate::trainer::Status;

fn full(report: &EvalReport, var: &str) -> Result<(f64, f64), ExperimentError> {
    report
        .get(var, Slice::Full)
        .map(|m| (m.error.relative_l2, m.error.max_relative))
        .ok_or_else(|| ExperimentError::Invalid(format!("report `{}` lacks `{var}`", report.case_id)))
}

/// Header `lambda,e_final,remaining_loss,inlet_v_relative_l2,p_relative_l2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub lambda: f64,
    /// Unweighted final mean square of the swept term.
    pub e_final: f64,
    /// Final total loss minus the swept term's weighted contribution.
    pub remaining_loss: f64,
    pub inlet_v_relative_l2: f64,
    pub p_relative_l2: f64,
}

pub fn weight_row(term: usize, summary: &RunSummary, report: &EvalReport) -> Result<WeightRow, ExperimentError> {
    let lambda = summary.lambda[term - 1];
    let e = summary.term(term);
    Ok(WeightRow {
        lambda,
        e_final: e,
        remaining_loss: summary.final_loss.unwrap_or(f64::NAN) - lambda * e,
        inlet_v_relative_l2: summary.inlet_v_relative_l2,
        p_relative_l2: full(report, "p")?.0,
    })
}

/// Header `n_points,noise,ts_relative_l2,tf_relative_l2,final_loss,status`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseRow {
    pub n_points: usize,
    pub noise: f64,
    pub ts_relative_l2: f64,
    pub tf_relative_l2: f64,
    pub final_loss: f64,
    pub status: Status,
}

pub fn inverse_row(
    n_points: usize,
    noise: f64,
    summary: &RunSummary,
    report: &EvalReport,
) -> Result<InverseRow, ExperimentError> {
    Ok(InverseRow {
        n_points,
        noise,
        ts_relative_l2: full(report, "Ts")?.0,
        tf_relative_l2: full(report, "Tf")?.0,
        final_loss: summary.final_loss.unwrap_or(f64::NAN),
        status: summary.status,
    })
}

/// Header `case_id,mass_flux,model,p_relative_l2,p_max_relative,v_relative_l2,v_max_relative`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRow {
    pub case_id: String,
    pub mass_flux: f64,
    pub model: String,
    pub p_relative_l2: f64,
    pub p_max_relative: f64,
    pub v_relative_l2: f64,
    pub v_max_relative: f64,
}

pub fn architecture_row(
    mass_flux: f64,
    model: &str,
    report: &EvalReport,
) -> Result<ArchitectureRow, ExperimentError> {
    let (p, pm) = full(report, "p")?;
    let (v, vm) = full(report, "v")?;
    Ok(ArchitectureRow {
        case_id: report.case_id.clone(),
        mass_flux,
        model: model.to_string(),
        p_relative_l2: p,
        p_max_relative: pm,
        v_relative_l2: v,
        v_max_relative: vm,
    })
}

/// Header `run,first_loss,final_loss,p_relative_l2,seconds_per_epoch,trainable_params`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub run: String,
    pub first_loss: f64,
    pub final_loss: f64,
    pub p_relative_l2: f64,
    pub seconds_per_epoch: f64,
    pub trainable_params: usize,
}

pub fn transfer_row(
    run: &str,
    summary: &RunSummary,
    report: &EvalReport,
    timing: &Timing,
) -> Result<TransferRow, ExperimentError> {
    Ok(TransferRow {
        run: run.to_string(),
        first_loss: summary.first_loss.unwrap_or(f64::NAN),
        final_loss: summary.final_loss.unwrap_or(f64::NAN),
        p_relative_l2: full(report, "p")?.0,
        seconds_per_epoch: timing.seconds_per_epoch,
        trainable_params: summary.trainable_params,
    })
}

/// Writes rows as CSV with a header taken from the field names.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
