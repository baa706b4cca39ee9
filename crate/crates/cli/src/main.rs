//! `nnsdr` — benchmark harness for sufficient dimension reduction:
//! generate simulation data, fit estimators, run replicated studies, and
//! time the scaling behaviour.

use clap::{Args, Parser, Subcommand};
use nnsdr::error::{Error, Result};
use nnsdr::metrics::subspace_error;
use nnsdr::simgen::{generate, ModelId, SimMeta, SimSpec};
use nnsdr::DataSet;
use nnsdr_cli::config::{BenchmarkConfig, Method, MethodOverrides};
use nnsdr_cli::run::{
    fit_method, rows_to_csv, run_benchmark, run_scaling, scaling_to_csv, summary_to_csv, SdrFit,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nnsdr", version, about = "Neural-net sufficient dimension reduction benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulation dataset (CSV plus a JSON sidecar with the truth).
    Simulate(SimulateArgs),
    /// Fit an estimator to a dataset and write the model file.
    Fit(FitArgs),
    /// Predict responses for a dataset from a fitted model file.
    Predict(PredictArgs),
    /// Run a replicated simulation study and write result/summary CSVs.
    Benchmark(BenchmarkArgs),
    /// Time fits over a ladder of (n, p) sizes.
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model id: M1..M7 or MC.
    #[arg(long)]
    model: String,
    /// Sample size (defaults to the model's design value).
    #[arg(long)]
    n: Option<usize>,
    /// Predictor dimension (defaults to the model's design value).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path; the sidecar goes to the same path with extension
    /// `meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (header Y,X1..Xp).
    #[arg(long)]
    data: PathBuf,
    /// Estimation method: nn, opg, or mave.
    #[arg(long)]
    method: String,
    /// Reduction dimension; defaults to the sidecar's k when present.
    #[arg(long)]
    k: Option<usize>,
    /// JSON file with per-method overrides (same schema as the benchmark
    /// config's per-method override block).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output model JSON path; a fit report goes to `<out>.report.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV to predict for (its Y column is ignored).
    #[arg(long)]
    data: PathBuf,
    /// Output CSV of predictions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Benchmark config JSON; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated model ids.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Write 0 in the runtime column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Results CSV path; the summary goes to `<out>` with extension
    /// `summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, default_value = "M6")]
    model: String,
    #[arg(long, default_value = "nn")]
    method: String,
    /// Comma-separated n:p pairs, e.g. `1000:32,4000:63`.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<String>,
    #[arg(long, default_value_t = 200)]
    epochs_stage1: usize,
    #[arg(long, default_value_t = 400)]
    epochs_stage2: usize,
    /// Halve the epoch budget at each subsequent size.
    #[arg(long)]
    halve_epochs: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Scaling(a) => cmd_scaling(a),
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let model: ModelId = a.model.parse()?;
    let mut spec = SimSpec::new(model, a.seed);
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(p) = a.p {
        spec.p = p;
    }
    let sample = generate(&spec)?;
    sample.data.write_csv(&a.out)?;
    let meta = SimMeta::from_sample(&spec, &sample);
    std::fs::write(
        sidecar_path(&a.out),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    println!(
        "wrote {} ({} rows, {} predictors) and {}",
        a.out.display(),
        sample.data.n(),
        sample.data.p(),
        sidecar_path(&a.out).display()
    );
    Ok(())
}

fn load_overrides(path: Option<&PathBuf>) -> Result<MethodOverrides> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(MethodOverrides::default()),
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let data = DataSet::read_csv(&a.data)?;
    let meta: Option<SimMeta> = std::fs::read_to_string(sidecar_path(&a.data))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let k = match a.k.or_else(|| meta.as_ref().map(|m| m.k)) {
        Some(k) => k,
        None => {
            return Err(Error::Contract(
                "no --k given and no sidecar with the dimension was found".into(),
            ))
        }
    };
    if k >= data.p() {
        return Err(Error::Contract(format!(
            "k must be smaller than p ({} >= {})",
            k,
            data.p()
        )));
    }
    let overrides = load_overrides(a.config.as_ref())?;
    let start = Instant::now();
    let fit = fit_method(&data, k, method, &overrides, a.seed)?;
    let runtime = start.elapsed().as_secs_f64();

    std::fs::write(&a.out, serde_json::to_string(&fit.to_json())? + "\n")?;

    let acc_err = match &meta {
        Some(m) => Some(subspace_error(&m.b_true()?, fit.b_hat())?),
        None => None,
    };
    let report = nnsdr::EvalReport {
        model: meta
            .as_ref()
            .map(|m| m.model.clone())
            .unwrap_or_else(|| a.data.display().to_string()),
        method: method.to_string(),
        seed: a.seed,
        acc_err,
        mspe: None,
        runtime_seconds: runtime,
    };
    let report_path = a.out.with_extension("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    match acc_err {
        Some(acc) => println!(
            "fit {} in {:.2}s, acc_err {:.4}; model at {}",
            method,
            runtime,
            acc,
            a.out.display()
        ),
        None => println!(
            "fit {} in {:.2}s; model at {}",
            method,
            runtime,
            a.out.display()
        ),
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model)?;
    let fit = SdrFit::from_json(&serde_json::from_str(&text)?)?;
    let data = DataSet::read_csv(&a.data)?;
    let mut out = String::from("prediction\n");
    for i in 0..data.n() {
        let yhat = fit.predict(data.row(i)).map_err(|e| Error::Prediction {
            index: i,
            message: e.to_string(),
        })?;
        out.push_str(&yhat.to_string());
        out.push('\n');
    }
    std::fs::write(&a.out, out)?;
    println!("wrote {} predictions to {}", data.n(), a.out.display());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => BenchmarkConfig::from_json_file(path)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(models) = &a.models {
        cfg.models = models
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<ModelId>>>()?;
    }
    if let Some(methods) = &a.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Method>>>()?;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.test_size {
        cfg.test_size = t;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if a.no_timing {
        cfg.record_runtime = false;
    }
    if let Some(out) = &a.out {
        cfg.output_path = Some(out.clone());
    }

    let (rows, summary) = run_benchmark(&cfg)?;
    let rows_csv = rows_to_csv(&rows);
    let summary_csv = summary_to_csv(&summary);
    if let Some(out) = &cfg.output_path {
        std::fs::write(out, &rows_csv)?;
        let summary_path = out.with_extension("summary.csv");
        std::fs::write(&summary_path, &summary_csv)?;
        println!(
            "wrote {} rows to {} and the summary to {}",
            rows.len(),
            out.display(),
            summary_path.display()
        );
    } else {
        print!("{rows_csv}");
    }
    println!("\nmodel method  n_ok  acc_err (sd)        mspe (sd)");
    for s in &summary {
        println!(
            "{:<5} {:<6} {:>5}  {:>7.4} ({:.4})   {:>8.4} ({:.4})",
            s.model.to_string(),
            s.method.to_string(),
            s.replications_ok,
            s.mean_acc_err,
            s.sd_acc_err,
            s.mean_mspe,
            s.sd_mspe
        );
    }
    Ok(())
}

fn cmd_scaling(a: ScalingArgs) -> Result<()> {
    let model: ModelId = a.model.parse()?;
    let method: Method = a.method.parse()?;
    if a.sizes.is_empty() {
        return Err(Error::Contract("at least one n:p size is required".into()));
    }
    let sizes: Vec<(usize, usize)> = a
        .sizes
        .iter()
        .map(|s| {
            let (n, p) = s
                .split_once(':')
                .ok_or_else(|| Error::Contract(format!("size {s:?} is not n:p")))?;
            Ok((
                n.parse()
                    .map_err(|_| Error::Contract(format!("bad n in {s:?}")))?,
                p.parse()
                    .map_err(|_| Error::Contract(format!("bad p in {s:?}")))?,
            ))
        })
        .collect::<Result<_>>()?;
    let rows = run_scaling(
        model,
        method,
        &sizes,
        (a.epochs_stage1, a.epochs_stage2),
        a.halve_epochs,
        a.seed,
        &MethodOverrides::default(),
    );
    std::fs::write(&a.out, scaling_to_csv(&rows))?;
    for r in &rows {
        match (r.acc_err, &r.error) {
            (Some(acc), _) => println!(
                "n={:<7} p={:<4} epochs=({}, {})  acc_err={:.4}  {:.2}s",
                r.n, r.p, r.epochs_stage1, r.epochs_stage2, acc, r.runtime_seconds
            ),
            (None, Some(e)) => println!("n={:<7} p={:<4} failed: {e}", r.n, r.p),
            _ => {}
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
