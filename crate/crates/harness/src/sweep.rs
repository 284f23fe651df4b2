//! Monte Carlo SNR sweeps with deterministic record ordering.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::metrics::evaluate;
use crate::scenario::{make_trial, run_method};

/// One (method, SNR, trial) outcome. Metric fields are empty when the trial
/// failed or the quantity is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: String,
    pub snr_db: f64,
    pub trial: usize,
    pub rmse_target: Option<f64>,
    pub rmse_scatterer: Option<f64>,
    pub nmse_radar: Option<f64>,
    pub nmse_comm: Option<f64>,
    pub miss_count: Option<usize>,
    pub false_alarm_count: Option<usize>,
    pub user_pos_error: Option<f64>,
    pub tau_offset_error: Option<f64>,
    pub em_iters: Option<usize>,
    pub turbo_converged: Option<bool>,
    /// `ok` or the error message.
    pub status: String,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(method: Method, snr_db: f64, trial: usize, msg: String) -> Self {
        Self {
            method: method.name().to_string(),
            snr_db,
            trial,
            rmse_target: None,
            rmse_scatterer: None,
            nmse_radar: None,
            nmse_comm: None,
            miss_count: None,
            false_alarm_count: None,
            user_pos_error: None,
            tau_offset_error: None,
            em_iters: None,
            turbo_converged: None,
            status: msg,
        }
    }
}

/// Wall-clock time of one record; kept out of the main CSV so that file is
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub method: String,
    pub snr_db: f64,
    pub trial: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub timings: Vec<TimingRecord>,
}

/// Runs every configured method on one (trial, SNR) instance.
pub fn run_instance(cfg: &ExperimentConfig, trial: usize, snr_index: usize) -> Vec<(SweepRecord, TimingRecord)> {
    let snr_db = cfg.sweep.snr_db[snr_index];
    let gate = cfg.sweep.gate_cells * cfg.system.resolution;
    let instance = make_trial(cfg, trial, snr_index);
    cfg.sweep
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let record = match &instance {
                Err(e) => SweepRecord::failed(method, snr_db, trial, format!("scenario: {e}")),
                Ok(t) => match run_method(cfg, method, t) {
                    Err(e) => SweepRecord::failed(method, snr_db, trial, format!("solver: {e}")),
                    Ok(est) => {
                        let m = evaluate(&t.problem, &t.scene, &est, gate);
                        SweepRecord {
                            method: method.name().to_string(),
                            snr_db,
                            trial,
                            rmse_target: Some(m.target.rmse),
                            rmse_scatterer: Some(m.scatterer.rmse),
                            nmse_radar: m.nmse_radar,
                            nmse_comm: m.nmse_comm,
                            miss_count: Some(m.target.misses + m.scatterer.misses),
                            false_alarm_count: Some(m.target.false_alarms + m.scatterer.false_alarms),
                            user_pos_error: Some(m.user_pos_error),
                            tau_offset_error: Some(m.tau_offset_error),
                            em_iters: Some(est.diagnostics.em_iters),
                            turbo_converged: Some(est.diagnostics.turbo_converged),
                            status: "ok".into(),
                        }
                    }
                },
            };
            let timing = TimingRecord {
                method: record.method.clone(),
                snr_db,
                trial,
                wall_time: start.elapsed().as_secs_f64(),
            };
            (record, timing)
        })
        .collect()
}

/// All (method, SNR, trial) records, ordered by method (as listed in the
/// config), then SNR index, then trial.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .context("building worker pool")?;
    let work: Vec<(usize, usize)> = (0..cfg.sweep.snr_db.len())
        .flat_map(|s| (0..cfg.sweep.trials).map(move |t| (s, t)))
        .collect();
    let mut rows: Vec<(usize, usize, usize, SweepRecord, TimingRecord)> = pool.install(|| {
        work.par_iter()
            .flat_map_iter(|&(s, t)| {
                run_instance(cfg, t, s)
                    .into_iter()
                    .enumerate()
                    .map(move |(m, (r, w))| (m, s, t, r, w))
            })
            .collect()
    });
    rows.sort_by_key(|r| (r.0, r.1, r.2));
    let (records, timings) = rows.into_iter().map(|r| (r.3, r.4)).unzip();
    Ok(SweepOutput { records, timings })
}

/// Mean and standard error of one metric over one (method, SNR) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { n, mean, se })
    }
}

/// Metrics aggregated per (method, SNR).
pub const METRICS: [&str; 8] = [
    "rmse_target",
    "rmse_scatterer",
    "nmse_radar",
    "nmse_comm",
    "miss_count",
    "false_alarm_count",
    "user_pos_error",
    "tau_offset_error",
];

pub fn metric_value(r: &SweepRecord, metric: &str) -> Option<f64> {
    match metric {
        "rmse_target" => r.rmse_target,
        "rmse_scatterer" => r.rmse_scatterer,
        "nmse_radar" => r.nmse_radar,
        "nmse_comm" => r.nmse_comm,
        "miss_count" => r.miss_count.map(|v| v as f64),
        "false_alarm_count" => r.false_alarm_count.map(|v| v as f64),
        "user_pos_error" => r.user_pos_error,
        "tau_offset_error" => r.tau_offset_error,
        "em_iters" => r.em_iters.map(|v| v as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub snr_db: f64,
    pub failures: usize,
    /// One entry per name in [`METRICS`].
    pub stats: Vec<Option<Stat>>,
}

impl AggregateRow {
    pub fn stat(&self, metric: &str) -> Option<Stat> {
        METRICS.iter().position(|m| *m == metric).and_then(|i| self.stats[i])
    }
}

/// Aggregates in first-appearance order of (method, SNR).
pub fn aggregate(records: &[SweepRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(m, s)| *m == r.method && *s == r.snr_db) {
            keys.push((r.method.clone(), r.snr_db));
        }
    }
    keys.into_iter()
        .map(|(method, snr_db)| {
            let cell: Vec<&SweepRecord> = records.iter().filter(|r| r.method == method && r.snr_db == snr_db).collect();
            let stats = METRICS
                .iter()
                .map(|m| {
                    let v: Vec<f64> = cell.iter().filter(|r| r.is_ok()).filter_map(|r| metric_value(r, m)).collect();
                    Stat::of(&v)
                })
                .collect();
            AggregateRow {
                failures: cell.iter().filter(|r| !r.is_ok()).count(),
                method,
                snr_db,
                stats,
            }
        })
        .collect()
}

pub fn records_csv(records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub fn timing_csv(timings: &[TimingRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in timings {
        w.serialize(t)?;
    }
    Ok(w.into_inner()?)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string(), "snr_db".into(), "failures".into()];
    for m in METRICS {
        header.extend([format!("{m}_n"), format!("{m}_mean"), format!("{m}_se")]);
    }
    w.write_record(&header)?;
    for row in rows {
        let mut fields = vec![row.method.clone(), row.snr_db.to_string(), row.failures.to_string()];
        for s in &row.stats {
            match s {
                Some(s) => fields.extend([s.n.to_string(), s.mean.to_string(), s.se.to_string()]),
                None => fields.extend(["0".to_string(), String::new(), String::new()]),
            }
        }
        w.write_record(&fields)?;
    }
    Ok(w.into_inner()?)
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}

/// Writes `records.csv`, `aggregate.csv` and `timing.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &SweepOutput) -> Result<Vec<AggregateRow>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let agg = aggregate(&out.records);
    let write = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(&bytes)?;
        Ok(())
    };
    write("records.csv", records_csv(&out.records)?)?;
    write("aggregate.csv", aggregate_csv(&agg)?)?;
    write("timing.csv", timing_csv(&out.timings)?)?;
    Ok(agg)
}
