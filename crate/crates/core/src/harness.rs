//! Parameter sweeps, Monte-Carlo trials and CSV output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_scheme, Scheme};
use crate::driver::{run_algorithm1, DriverOptions, Solution};
use crate::error::{IsccError, Result};
use crate::scenario::{generate_scenario, read_json, SystemConfig};

pub const CSV_HEADER: [&str; 8] =
    ["scheme", "axis", "value", "trial", "mean_latency_s", "total_latency_s", "outer_iters", "feasible"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `B`, Hz.
    Bandwidth,
    /// `P_c`, W.
    Power,
    /// `Γ_th`, linear.
    Gamma,
    /// `L`.
    NumUts,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::Power => "power",
            SweepAxis::Gamma => "gamma",
            SweepAxis::NumUts => "num_uts",
        }
    }

    /// Copy of `base` with the swept parameter set to `value`.
    pub fn apply(&self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Bandwidth => cfg.B = value,
            SweepAxis::Power => cfg.P_c = value,
            SweepAxis::Gamma => cfg.Gamma_th = value,
            SweepAxis::NumUts => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(IsccError::Config(format!("num_uts value {value} is not a positive integer")));
                }
                cfg.L = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sweep used when a spec gives no values.
    pub fn default_values(&self) -> Vec<f64> {
        match self {
            SweepAxis::Bandwidth => vec![5e6, 10e6, 20e6, 50e6],
            SweepAxis::Power => vec![0.1, 0.5, 1.0, 2.0],
            SweepAxis::Gamma => vec![0.25, 1.0, 4.0],
            SweepAxis::NumUts => vec![3.0, 6.0, 9.0],
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Path of the base [`SystemConfig`], relative to the spec file.
    pub base_config: PathBuf,
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Parses the spec and its base config; empty `values` fall back to the axis default.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, SystemConfig)> {
        let path = path.as_ref();
        let mut spec: ExperimentSpec = read_json(path)?;
        if spec.values.is_empty() {
            spec.values = spec.axis.default_values();
        }
        let base_path = match path.parent() {
            Some(dir) if spec.base_config.is_relative() => dir.join(&spec.base_config),
            _ => spec.base_config.clone(),
        };
        let base = SystemConfig::load(&base_path)?;
        spec.validate(&base)?;
        Ok((spec, base))
    }

    pub fn validate(&self, base: &SystemConfig) -> Result<()> {
        if self.values.is_empty() {
            return Err(IsccError::Config("sweep values must not be empty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v > 0.0)) {
            return Err(IsccError::Config(format!("sweep value {v} is not positive")));
        }
        if self.schemes.is_empty() {
            return Err(IsccError::Config("schemes must not be empty".into()));
        }
        if self.trials == 0 {
            return Err(IsccError::Config("trials must be at least 1".into()));
        }
        for &v in &self.values {
            self.axis.apply(base, v)?;
        }
        Ok(())
    }
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub axis: SweepAxis,
    pub value: f64,
    pub trial: usize,
    pub mean_latency_s: f64,
    pub total_latency_s: f64,
    pub outer_iters: usize,
    pub feasible: bool,
}

impl ResultRow {
    fn record(&self) -> [String; 8] {
        [
            self.scheme.name().to_string(),
            self.axis.name().to_string(),
            self.value.to_string(),
            self.trial.to_string(),
            self.mean_latency_s.to_string(),
            self.total_latency_s.to_string(),
            self.outer_iters.to_string(),
            self.feasible.to_string(),
        ]
    }
}

/// Runs one scheme on trial `trial` of the sweep point `cfg`.
pub fn run_trial(
    scheme: Scheme,
    axis: SweepAxis,
    value: f64,
    cfg: &SystemConfig,
    seed: u64,
    trial: usize,
    opts: &DriverOptions,
) -> Result<ResultRow> {
    let s = generate_scenario(cfg, seed);
    let row = |total: f64, outer_iters: usize, feasible: bool| ResultRow {
        scheme,
        axis,
        value,
        trial,
        mean_latency_s: total / cfg.L as f64,
        total_latency_s: total,
        outer_iters,
        feasible,
    };
    match run_scheme(scheme, &s, cfg, opts) {
        Ok(out) => Ok(row(out.objective, out.outer_iters, true)),
        Err(IsccError::SensingInfeasible(msg)) => {
            log::debug!("{} value {value} trial {trial}: {msg}", scheme.name());
            Ok(row(f64::NAN, 0, false))
        }
        Err(e) => Err(e),
    }
}

/// All `(scheme, value, trial)` combinations, in that order. Trial `t` uses seed `seed_base + t`.
pub fn run_experiment(spec: &ExperimentSpec, base: &SystemConfig, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    spec.validate(base)?;
    let configs = spec.values.iter().map(|&v| spec.axis.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(Scheme, usize, usize)> = spec
        .schemes
        .iter()
        .flat_map(|&sc| (0..spec.values.len()).flat_map(move |v| (0..spec.trials).map(move |t| (sc, v, t))))
        .collect();
    let opts = DriverOptions::default();
    let work = || {
        jobs.par_iter()
            .map(|&(scheme, v, t)| {
                let seed = spec.seed_base + t as u64;
                let row = run_trial(scheme, spec.axis, spec.values[v], &configs[v], seed, t, &opts)?;
                log::info!("{} {}={} trial {t}: {:.6e} s", scheme.name(), spec.axis, spec.values[v], row.total_latency_s);
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| IsccError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(CSV_HEADER)?;
    for r in rows {
        wr.write_record(r.record())?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_rows(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, std::fs::File::create(path)?)
}

/// Mean over feasible trials of one `(scheme, value)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub scheme: Scheme,
    pub value: f64,
    /// NaN when no trial is feasible.
    pub mean_latency_s: f64,
    pub feasible: usize,
    pub infeasible: usize,
}

/// Per-point averages in first-appearance order of `(scheme, value)`.
pub fn summarize(rows: &[ResultRow]) -> Vec<PointSummary> {
    let mut out: Vec<(PointSummary, f64)> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|(p, _)| p.scheme == r.scheme && p.value == r.value) {
            Some(i) => i,
            None => {
                let p = PointSummary { scheme: r.scheme, value: r.value, mean_latency_s: f64::NAN, feasible: 0, infeasible: 0 };
                out.push((p, 0.0));
                out.len() - 1
            }
        };
        let (p, sum) = &mut out[idx];
        if r.feasible {
            p.feasible += 1;
            *sum += r.mean_latency_s;
        } else {
            p.infeasible += 1;
        }
    }
    out.into_iter()
        .map(|(mut p, sum)| {
            if p.feasible > 0 {
                p.mean_latency_s = sum / p.feasible as f64;
            }
            p
        })
        .collect()
}

/// Runs the alternating algorithm once and writes its per-iteration trace.
pub fn emit_convergence_trace(seed: u64, cfg: &SystemConfig, opts: &DriverOptions, out: impl AsRef<Path>) -> Result<Solution> {
    cfg.validate()?;
    let s = generate_scenario(cfg, seed);
    let sol = run_algorithm1(&s, cfg, opts)?;
    sol.trace.save_csv(out)?;
    Ok(sol)
}
