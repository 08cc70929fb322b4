//! CSV run logs and the JSON run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use mhe_core::model::{CarModel, Vector};
use mhe_core::sim::{moving_average, ModelSpec, RunRecord};
use serde::Serialize;

use crate::config::RunConfig;

/// Moving-average window used in the summary.
pub const SUMMARY_WINDOW: usize = 40;

const CAR_STATES: [&str; 6] = ["x_p", "y_p", "psi", "v_x", "v_y", "omega"];
const CAR_OUTPUTS: [&str; 3] = ["y_x_p", "y_y_p", "y_psi"];
const CAR_PARAMS: [&str; 2] = ["d_f", "d_r"];

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn nums(v: &Vector) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| num(*x))
}

/// Column names, in order, for a run of `record`'s scenario kind.
pub fn header(record: &RunRecord) -> Vec<String> {
    let mut cols: Vec<String> = vec!["t".into()];
    match record.scenario.model {
        ModelSpec::Academic { .. } => {
            cols.extend(["u", "x_true", "y1", "y2"].map(String::from));
            for track in &record.tracks {
                for c in [
                    "x_hat",
                    "theta_hat",
                    "abs_x_err",
                    "abs_theta_err",
                    "cost",
                    "iters",
                    "status",
                ] {
                    cols.push(format!("{}_{c}", track.label));
                }
            }
        }
        ModelSpec::Car { .. } => {
            cols.extend(["u_delta", "u_f_x"].map(String::from));
            cols.extend(CAR_STATES.map(String::from));
            cols.extend(CAR_OUTPUTS.map(String::from));
            cols.extend(CAR_PARAMS.map(|p| format!("theta_{p}")));
            cols.extend(["f_f", "f_r"].map(String::from));
            for track in &record.tracks {
                let l = &track.label;
                cols.extend(CAR_STATES.map(|s| format!("{l}_{s}_hat")));
                cols.extend(CAR_PARAMS.map(|p| format!("{l}_theta_{p}_hat")));
                cols.extend(CAR_STATES.map(|s| format!("{l}_abs_{s}_err")));
                for c in [
                    "state_err",
                    "theta_err",
                    "f_f_hat",
                    "f_r_hat",
                    "cost",
                    "iters",
                    "status",
                ] {
                    cols.push(format!("{l}_{c}"));
                }
            }
        }
    }
    cols
}

/// One row per time step, aligned with [`header`].
pub fn rows(record: &RunRecord) -> Vec<Vec<String>> {
    let truth = &record.truth;
    let theta = &record.scenario.theta_true;
    let car = match &record.scenario.model {
        ModelSpec::Car { params } => Some(CarModel::new(*params).expect("scenario was validated")),
        ModelSpec::Academic { .. } => None,
    };
    (0..truth.len())
        .map(|t| {
            let (u, x, y) = (&truth.inputs[t], &truth.states[t], &truth.outputs[t]);
            let mut row = vec![t.to_string()];
            match &car {
                None => {
                    row.extend(nums(u).chain(nums(x)).chain(nums(y)));
                    for track in &record.tracks {
                        let r = &track.rows[t];
                        row.extend(nums(&r.x_hat).chain(nums(&r.theta_hat)));
                        row.push(num((&r.x_hat - x).norm()));
                        row.push(num((&r.theta_hat - theta).norm()));
                        row.extend([
                            num(r.cost),
                            r.iterations.to_string(),
                            r.status_str().to_string(),
                        ]);
                    }
                }
                Some(model) => {
                    row.extend(nums(u).chain(nums(x)).chain(nums(y)).chain(nums(theta)));
                    let f = model.tire_forces(x, u, theta);
                    row.extend([num(f.force_f), num(f.force_r)]);
                    for track in &record.tracks {
                        let r = &track.rows[t];
                        row.extend(nums(&r.x_hat).chain(nums(&r.theta_hat)));
                        row.extend((&r.x_hat - x).iter().map(|e| num(e.abs())));
                        row.push(num((&r.x_hat - x).norm()));
                        row.push(num((&r.theta_hat - theta).norm()));
                        let f = model.tire_forces(&r.x_hat, u, &r.theta_hat);
                        row.extend([num(f.force_f), num(f.force_r)]);
                        row.extend([
                            num(r.cost),
                            r.iterations.to_string(),
                            r.status_str().to_string(),
                        ]);
                    }
                }
            }
            row
        })
        .collect()
}

pub fn csv_name(record: &RunRecord) -> String {
    format!("{}_seed{}.csv", record.scenario.name, record.seed)
}

pub fn write_csv(record: &RunRecord, path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    w.write_record(header(record))?;
    for row in rows(record) {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub mode: String,
    pub final_state_error: f64,
    pub final_theta_error: f64,
    /// Mean over the run of the moving-average absolute error per state
    /// coordinate.
    pub mean_moving_average_error: Vec<f64>,
    pub converged_steps: usize,
    pub degraded_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub csv: String,
    pub config_digest: String,
    pub estimators: Vec<EstimatorSummary>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn summarize(record: &RunRecord) -> RunSummary {
    let truth = &record.truth;
    let n = record.scenario.x0.len();
    let estimators = record
        .tracks
        .iter()
        .map(|track| {
            let last = track.rows.last().expect("rows are never empty");
            EstimatorSummary {
                label: track.label.clone(),
                mode: track.mode.as_str().to_string(),
                final_state_error: (&last.x_hat - truth.states.last().expect("non-empty")).norm(),
                final_theta_error: (&last.theta_hat - &record.scenario.theta_true).norm(),
                mean_moving_average_error: (0..n)
                    .map(|i| {
                        mean(&moving_average(
                            &track.coordinate_errors(truth, i),
                            SUMMARY_WINDOW,
                        ))
                    })
                    .collect(),
                converged_steps: track
                    .rows
                    .iter()
                    .filter(|r| r.status_str() == "converged")
                    .count(),
                degraded_steps: track.rows.iter().filter(|r| r.degraded).count(),
            }
        })
        .collect();
    RunSummary {
        seed: record.seed,
        csv: csv_name(record),
        config_digest: record.config_digest.clone(),
        estimators,
    }
}

/// Per-estimator means over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateSummary {
    pub label: String,
    pub seeds: usize,
    pub mean_final_state_error: f64,
    pub mean_final_theta_error: f64,
    pub mean_moving_average_error: Vec<f64>,
}

pub fn aggregate(runs: &[RunSummary]) -> Vec<AggregateSummary> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .estimators
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let all: Vec<&EstimatorSummary> = runs.iter().map(|r| &r.estimators[k]).collect();
            let dims = e.mean_moving_average_error.len();
            AggregateSummary {
                label: e.label.clone(),
                seeds: all.len(),
                mean_final_state_error: mean(
                    &all.iter().map(|s| s.final_state_error).collect::<Vec<_>>(),
                ),
                mean_final_theta_error: mean(
                    &all.iter().map(|s| s.final_theta_error).collect::<Vec<_>>(),
                ),
                mean_moving_average_error: (0..dims)
                    .map(|i| {
                        mean(
                            &all.iter()
                                .map(|s| s.mean_moving_average_error[i])
                                .collect::<Vec<_>>(),
                        )
                    })
                    .collect(),
            }
        })
        .collect()
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub config: &'a RunConfig,
    pub runs: &'a [RunSummary],
    pub aggregate: Vec<AggregateSummary>,
    /// Set when a simulation failed; the listed runs were still written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn manifest_name(record_name: &str) -> String {
    format!("{record_name}_manifest.json")
}

pub fn write_manifest(path: &Path, manifest: &Manifest<'_>) -> std::io::Result<PathBuf> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, manifest)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(path.to_path_buf())
}
