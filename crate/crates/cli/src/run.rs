//! Fitting dispatch, the replicated benchmark runner, and the scaling study.

use crate::config::{BenchmarkConfig, Method, MethodOverrides};
use nnsdr::baselines::{
    mave_fit, opg_fit, reduce_rows, reduced_predict_at, KernelConfig, MaveFit,
};
use nnsdr::error::{Error, Result};
use nnsdr::linalg::Matrix;
use nnsdr::metrics::{mspe, subspace_error};
use nnsdr::nnsdr::{self as nn, NnSdrModel};
use nnsdr::seed;
use nnsdr::simgen::{generate, ModelId, SimSpec};
use nnsdr::{DataSet, StiefelMatrix};
use serde_json::json;
use std::fmt::Write as _;
use std::time::Instant;

/// Seed-stream tags inside one replication.
const TAG_TRAIN_DATA: u64 = 1;
const TAG_TEST_DATA: u64 = 2;
const TAG_FIT: u64 = 3;

/// Seed for one (model, method, replication) cell, derived from intrinsic
/// codes so any subset of a benchmark reproduces identical rows.
pub fn replication_seed(base: u64, model: ModelId, method: Method, replication: usize) -> u64 {
    seed::mix(base, &[model.code(), method.code(), replication as u64])
}

/// A fitted reduction of any method, able to predict new responses.
pub enum SdrFit {
    Nn(Box<NnSdrModel>),
    Baseline {
        method: Method,
        b_hat: StiefelMatrix,
        kernel: KernelConfig,
        z_train: Matrix,
        y_train: Vec<f64>,
        mave: Option<MaveFit>,
    },
}

impl SdrFit {
    pub fn b_hat(&self) -> &StiefelMatrix {
        match self {
            SdrFit::Nn(m) => &m.b_hat,
            SdrFit::Baseline { b_hat, .. } => b_hat,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            SdrFit::Nn(m) => nn::predict(m, x),
            SdrFit::Baseline {
                b_hat,
                kernel,
                z_train,
                y_train,
                ..
            } => {
                let z_new = b_hat.matrix().tr_matvec(x);
                reduced_predict_at(z_train, y_train, &z_new, kernel)
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            SdrFit::Nn(m) => m.to_json(),
            SdrFit::Baseline {
                method,
                b_hat,
                kernel,
                z_train,
                y_train,
                mave,
            } => {
                let mut v = json!({
                    "method": method.to_string(),
                    "B": b_hat.matrix().to_nested(),
                    "kernel": serde_json::to_value(kernel).expect("kernel serialization"),
                    "reduced_train": {
                        "z": z_train.to_nested(),
                        "y": y_train,
                    },
                });
                if let Some(m) = mave {
                    v["mave"] = json!({
                        "iterations_used": m.iterations_used,
                        "converged": m.converged,
                        "objective_trace": m.objective_trace,
                    });
                }
                v
            }
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let method: Method = v
            .get("method")
            .and_then(|m| m.as_str())
            .ok_or_else(|| Error::Contract("model JSON is missing key \"method\"".into()))?
            .parse()?;
        if method == Method::Nn {
            return Ok(SdrFit::Nn(Box::new(NnSdrModel::from_json(v)?)));
        }
        let b_rows: Vec<Vec<f64>> = serde_json::from_value(
            v.get("B")
                .cloned()
                .ok_or_else(|| Error::Contract("model JSON is missing key \"B\"".into()))?,
        )?;
        let b_hat = StiefelMatrix::new(Matrix::from_rows(&b_rows)?)?;
        let kernel: KernelConfig = serde_json::from_value(
            v.get("kernel")
                .cloned()
                .ok_or_else(|| Error::Contract("model JSON is missing key \"kernel\"".into()))?,
        )?;
        let reduced = v
            .get("reduced_train")
            .ok_or_else(|| Error::Contract("model JSON is missing key \"reduced_train\"".into()))?;
        let z_rows: Vec<Vec<f64>> = serde_json::from_value(reduced["z"].clone())?;
        let y_train: Vec<f64> = serde_json::from_value(reduced["y"].clone())?;
        Ok(SdrFit::Baseline {
            method,
            b_hat,
            kernel,
            z_train: Matrix::from_rows(&z_rows)?,
            y_train,
            mave: None,
        })
    }
}

/// Fit one method on a dataset.
pub fn fit_method(
    data: &DataSet,
    k: usize,
    method: Method,
    overrides: &MethodOverrides,
    fit_seed: u64,
) -> Result<SdrFit> {
    match method {
        Method::Nn => {
            let cfg = overrides.nn_config(k, fit_seed);
            Ok(SdrFit::Nn(Box::new(nn::fit(data, &cfg)?)))
        }
        Method::Opg => {
            let kernel = overrides.kernel_config();
            let b_hat = opg_fit(data, k, &kernel)?;
            let z_train = reduce_rows(data.x(), &b_hat);
            Ok(SdrFit::Baseline {
                method,
                b_hat,
                kernel,
                z_train,
                y_train: data.y().to_vec(),
                mave: None,
            })
        }
        Method::Mave => {
            let kernel = overrides.kernel_config();
            let init = opg_fit(data, k, &kernel)?;
            let fit = mave_fit(data, k, &kernel, &init, overrides.mave_iters(), overrides.mave_tol())?;
            let z_train = reduce_rows(data.x(), &fit.b_hat);
            Ok(SdrFit::Baseline {
                method,
                b_hat: fit.b_hat.clone(),
                kernel,
                z_train,
                y_train: data.y().to_vec(),
                mave: Some(fit),
            })
        }
    }
}

/// One row of a benchmark results file.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub model: ModelId,
    pub method: Method,
    pub replication: usize,
    pub seed: u64,
    pub acc_err: Option<f64>,
    pub mspe: Option<f64>,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

impl ResultRow {
    pub const HEADER: &'static str =
        "model,method,replication,seed,acc_err,mspe,runtime_seconds,error";

    pub fn to_csv_line(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.model,
            self.method,
            self.replication,
            self.seed,
            fmt_opt(self.acc_err),
            fmt_opt(self.mspe),
            self.runtime_seconds,
            csv_escape(self.error.as_deref().unwrap_or(""))
        )
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-(model, method) aggregates over the successful replications.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub model: ModelId,
    pub method: Method,
    pub replications_ok: usize,
    pub mean_acc_err: f64,
    pub sd_acc_err: f64,
    pub mean_mspe: f64,
    pub sd_mspe: f64,
    pub mean_runtime_seconds: f64,
}

pub const SUMMARY_HEADER: &str =
    "model,method,replications_ok,mean_acc_err,sd_acc_err,mean_mspe,sd_mspe,mean_runtime_seconds";

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate rows into per-cell summaries (config order preserved).
pub fn summarize(rows: &[ResultRow], cfg: &BenchmarkConfig) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &model in &cfg.models {
        for &method in &cfg.methods {
            let ok: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.model == model && r.method == method && r.error.is_none())
                .collect();
            let accs: Vec<f64> = ok.iter().filter_map(|r| r.acc_err).collect();
            let mspes: Vec<f64> = ok.iter().filter_map(|r| r.mspe).collect();
            let runtimes: Vec<f64> = ok.iter().map(|r| r.runtime_seconds).collect();
            let (mean_acc, sd_acc) = mean_sd(&accs);
            let (mean_mspe, sd_mspe) = mean_sd(&mspes);
            let (mean_rt, _) = mean_sd(&runtimes);
            out.push(SummaryRow {
                model,
                method,
                replications_ok: ok.len(),
                mean_acc_err: mean_acc,
                sd_acc_err: sd_acc,
                mean_mspe,
                sd_mspe,
                mean_runtime_seconds: mean_rt,
            });
        }
    }
    out
}

/// Run one replication cell.
fn run_cell(cfg: &BenchmarkConfig, model: ModelId, method: Method, rep: usize) -> ResultRow {
    let rep_seed = replication_seed(cfg.seed, model, method, rep);
    let overrides = cfg.overrides_for(method);
    let spec = SimSpec::new(model, seed::mix(rep_seed, &[TAG_TRAIN_DATA]));
    let mut row = ResultRow {
        model,
        method,
        replication: rep,
        seed: rep_seed,
        acc_err: None,
        mspe: None,
        runtime_seconds: 0.0,
        error: None,
    };
    let sample = match generate(&spec) {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let start = Instant::now();
    let fit = match fit_method(
        &sample.data,
        sample.k,
        method,
        &overrides,
        seed::mix(rep_seed, &[TAG_FIT]),
    ) {
        Ok(f) => f,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    if cfg.record_runtime {
        row.runtime_seconds = start.elapsed().as_secs_f64();
    }
    match subspace_error(&sample.b_true, fit.b_hat()) {
        Ok(a) => row.acc_err = Some(a),
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    let test_spec = SimSpec {
        n: cfg.test_size,
        ..SimSpec::new(model, seed::mix(rep_seed, &[TAG_TEST_DATA]))
    };
    match generate(&test_spec).and_then(|test| mspe(|x| fit.predict(x), &test.data)) {
        Ok(m) => row.mspe = Some(m),
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    row
}

/// Run the full benchmark. Rows come back in deterministic
/// (model, method, replication) order regardless of the worker count.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<(Vec<ResultRow>, Vec<SummaryRow>)> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &model in &cfg.models {
        for &method in &cfg.methods {
            for rep in 0..cfg.replications {
                cells.push((model, method, rep));
            }
        }
    }
    let rows: Vec<ResultRow> = if cfg.jobs == 1 {
        cells
            .iter()
            .map(|&(model, method, rep)| run_cell(cfg, model, method, rep))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            cells
                .par_iter()
                .map(|&(model, method, rep)| run_cell(cfg, model, method, rep))
                .collect()
        })
    };
    let summary = summarize(&rows, cfg);
    Ok((rows, summary))
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(ResultRow::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.model,
            s.method,
            s.replications_ok,
            s.mean_acc_err,
            s.sd_acc_err,
            s.mean_mspe,
            s.sd_mspe,
            s.mean_runtime_seconds
        );
    }
    out
}

/// One scaling-study row.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub model: ModelId,
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub seed: u64,
    pub acc_err: Option<f64>,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

pub const SCALING_HEADER: &str =
    "model,method,n,p,epochs_stage1,epochs_stage2,seed,acc_err,runtime_seconds,error";

/// Run one fit per (n, p) size; with `halve_epochs` the epoch budget is cut
/// in half at each subsequent size.
pub fn run_scaling(
    model: ModelId,
    method: Method,
    sizes: &[(usize, usize)],
    base_epochs: (usize, usize),
    halve_epochs: bool,
    base_seed: u64,
    overrides: &MethodOverrides,
) -> Vec<ScalingRow> {
    let mut rows = Vec::new();
    for (i, &(n, p)) in sizes.iter().enumerate() {
        let (mut e1, mut e2) = base_epochs;
        if halve_epochs {
            e1 = (e1 >> i).max(1);
            e2 = (e2 >> i).max(1);
        }
        let cell_seed = seed::mix(base_seed, &[model.code(), method.code(), 1000 + i as u64]);
        let mut row = ScalingRow {
            model,
            method,
            n,
            p,
            epochs_stage1: e1,
            epochs_stage2: e2,
            seed: cell_seed,
            acc_err: None,
            runtime_seconds: 0.0,
            error: None,
        };
        let spec = SimSpec::new(model, seed::mix(cell_seed, &[TAG_TRAIN_DATA])).with_size(n, p);
        let sample = match generate(&spec) {
            Ok(s) => s,
            Err(e) => {
                row.error = Some(e.to_string());
                rows.push(row);
                continue;
            }
        };
        let mut ov = overrides.clone();
        ov.epochs_stage1 = Some(e1);
        ov.epochs_stage2 = Some(e2);
        let start = Instant::now();
        match fit_method(
            &sample.data,
            sample.k,
            method,
            &ov,
            seed::mix(cell_seed, &[TAG_FIT]),
        ) {
            Ok(fit) => {
                row.runtime_seconds = start.elapsed().as_secs_f64();
                match subspace_error(&sample.b_true, fit.b_hat()) {
                    Ok(a) => row.acc_err = Some(a),
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => {
                row.runtime_seconds = start.elapsed().as_secs_f64();
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    rows
}

pub fn scaling_to_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(SCALING_HEADER);
    out.push('\n');
    for r in rows {
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.method,
            r.n,
            r.p,
            r.epochs_stage1,
            r.epochs_stage2,
            r.seed,
            fmt_opt(r.acc_err),
            r.runtime_seconds,
            csv_escape(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}
