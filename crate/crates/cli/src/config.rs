//! Benchmark configuration: JSON config file plus flag overrides.

use nnsdr::baselines::KernelConfig;
use nnsdr::error::{Error, Result};
use nnsdr::nnsdr::NnSdrConfig;
use nnsdr::simgen::ModelId;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// Estimation method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nn,
    Opg,
    Mave,
}

impl Method {
    /// Stable numeric code used in seed derivation.
    pub fn code(self) -> u64 {
        match self {
            Method::Nn => 1,
            Method::Opg => 2,
            Method::Mave => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nn => "nn",
            Method::Opg => "opg",
            Method::Mave => "mave",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(Method::Nn),
            "opg" => Ok(Method::Opg),
            "mave" => Ok(Method::Mave),
            other => Err(Error::Contract(format!("unknown method {other:?}"))),
        }
    }
}

/// Per-method settings, overriding the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodOverrides {
    /// Hidden widths of the NN stages.
    pub hidden: Option<Vec<usize>>,
    /// Stage-1 epochs.
    pub epochs_stage1: Option<usize>,
    /// Stage-2 epochs.
    pub epochs_stage2: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout: Option<f64>,
    /// Kernel bandwidth constant for the baselines.
    pub bandwidth_multiplier: Option<f64>,
    /// MAVE iteration budget.
    pub max_iters: Option<usize>,
    /// MAVE relative-improvement stopping tolerance.
    pub tol: Option<f64>,
}

impl MethodOverrides {
    pub fn nn_config(&self, k: usize, seed: u64) -> NnSdrConfig {
        let mut cfg = NnSdrConfig::new(k).with_seed(seed);
        if let Some(h) = &self.hidden {
            cfg.hidden = h.clone();
        }
        if let Some(e) = self.epochs_stage1 {
            cfg.stage1.epochs = e;
        }
        if let Some(e) = self.epochs_stage2 {
            cfg.stage2.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.stage1.batch_size = b;
            cfg.stage2.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            cfg.stage1.learning_rate = lr;
            cfg.stage2.learning_rate = lr;
        }
        if let Some(d) = self.dropout {
            cfg.dropout_rate = d;
        }
        cfg
    }

    pub fn kernel_config(&self) -> KernelConfig {
        let mut k = KernelConfig::default();
        if let Some(c) = self.bandwidth_multiplier {
            k.bandwidth_multiplier = c;
        }
        k
    }

    pub fn mave_iters(&self) -> usize {
        self.max_iters.unwrap_or(25)
    }

    pub fn mave_tol(&self) -> f64 {
        self.tol.unwrap_or(1e-7)
    }
}

/// A replicated simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub models: Vec<ModelId>,
    pub methods: Vec<Method>,
    pub replications: usize,
    /// Base seed; every replication derives its own stream from it.
    pub seed: u64,
    /// Out-of-sample test-set size.
    pub test_size: usize,
    /// Wall-clock the fits; with this off the runtime column is written as 0,
    /// making rerun outputs byte-identical.
    pub record_runtime: bool,
    /// Worker threads for replications; 0 means all available cores.
    pub jobs: usize,
    pub output_path: Option<PathBuf>,
    /// Per-method overrides keyed by method name.
    pub overrides: std::collections::BTreeMap<String, MethodOverrides>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            models: vec![ModelId::M6],
            methods: vec![Method::Nn, Method::Opg, Method::Mave],
            replications: 20,
            seed: 1,
            test_size: 1000,
            record_runtime: true,
            jobs: 0,
            output_path: None,
            overrides: Default::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: BenchmarkConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Contract("replications must be >= 1".into()));
        }
        if self.methods.is_empty() || self.models.is_empty() {
            return Err(Error::Contract("models and methods must be nonempty".into()));
        }
        Ok(())
    }

    pub fn overrides_for(&self, method: Method) -> MethodOverrides {
        self.overrides
            .get(&method.to_string())
            .cloned()
            .unwrap_or_default()
    }
}
