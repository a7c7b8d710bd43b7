//! Outer alternation between the beamforming and offloading steps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::cvxcore::SolverReport;
use crate::error::Result;
use crate::fp_beamforming::{init_beamformers, inner_fp_loop, warm_start, FpOptions, OffloadPairSet};
use crate::metrics::{power, sensing_sinr, total_time, BeamformingSet, LatencyBreakdown, OffloadDecision};
use crate::offloading::optimize_offloading;
use crate::scenario::{Scenario, SystemConfig};

#[derive(Debug, Clone)]
pub struct DriverOptions {
    /// Relative change of the total latency that ends the outer loop.
    pub outer_tol: f64,
    pub outer_max: usize,
    pub fp: FpOptions,
    /// `false` pins every cloud variable to 0 (two-tier system).
    pub allow_cloud: bool,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self { outer_tol: 1e-3, outer_max: 20, fp: FpOptions::default(), allow_cloud: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Beamforming,
    Offloading,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Beamforming => "beamforming",
            Phase::Offloading => "offloading",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub phase: Phase,
    pub objective_s: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolutionTrace {
    pub records: Vec<TraceRecord>,
    /// Upload-objective trace of every inner loop, one per outer iteration.
    pub inner: Vec<Vec<f64>>,
    /// Reports of every barrier solve, in order.
    pub reports: Vec<SolverReport>,
    /// Per-UT latency of the final solution.
    pub per_ut: Vec<LatencyBreakdown>,
}

impl SolutionTrace {
    /// Objective after each outer iteration's offloading step, preceded by the initial value.
    pub fn outer_objectives(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.phase != Phase::Beamforming)
            .map(|r| r.objective_s)
            .collect()
    }

    pub fn outer_iterations(&self) -> usize {
        self.records.iter().filter(|r| r.phase == Phase::Offloading).count()
    }

    /// CSV with header `iter,phase,objective_s,elapsed_ms`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["iter", "phase", "objective_s", "elapsed_ms"])?;
        for r in &self.records {
            wr.write_record([
                r.iter.to_string(),
                r.phase.as_str().to_string(),
                format!("{:.12e}", r.objective_s),
                format!("{:.3}", r.elapsed_ms),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub w: BeamformingSet,
    pub decision: OffloadDecision,
    /// Total latency, seconds.
    pub objective: f64,
    pub trace: SolutionTrace,
}

/// Alternate the beamforming and offloading steps from the all-local decision.
pub fn run_algorithm1(s: &Scenario, cfg: &SystemConfig, opts: &DriverOptions) -> Result<Solution> {
    s.check_against(cfg)?;
    let clock = Instant::now();
    let ms = |c: &Instant| c.elapsed().as_secs_f64() * 1e3;

    let mut decision = OffloadDecision::all_local(s.num_bs, s.num_ut);
    let mut w = init_beamformers(s, &OffloadPairSet::default(), cfg)?;
    let (mut objective, _) = total_time(&w, &decision, s, cfg)?;
    let mut trace = SolutionTrace::default();
    trace.records.push(TraceRecord { iter: 0, phase: Phase::Init, objective_s: objective, elapsed_ms: ms(&clock) });

    for iter in 1..=opts.outer_max {
        let pairs = OffloadPairSet::from_decision(&decision)?;
        // z and c are rebuilt inside the inner loop for the current pair set
        let start = warm_start(&w, s, &pairs, cfg)?;
        let step = Instant::now();
        let inner = inner_fp_loop(s, &pairs, &start, cfg, &opts.fp)?;
        w = inner.w.clone();
        trace.inner.push(inner.objective_trace.clone());
        trace.reports.extend(inner.reports.iter().cloned());
        let (after_bf, _) = total_time(&w, &decision, s, cfg)?;
        trace.records.push(TraceRecord { iter, phase: Phase::Beamforming, objective_s: after_bf, elapsed_ms: ms(&step) });

        let step = Instant::now();
        let off = optimize_offloading(&w, s, cfg, opts.allow_cloud)?;
        let after_off = if off.objective <= after_bf {
            decision = off.decision;
            off.objective
        } else {
            after_bf
        };
        trace.records.push(TraceRecord { iter, phase: Phase::Offloading, objective_s: after_off, elapsed_ms: ms(&step) });

        let rel = (objective - after_off).abs() / objective.abs().max(f64::MIN_POSITIVE);
        objective = after_off;
        if !(rel >= opts.outer_tol) {
            break;
        }
    }
    let (objective, per_ut) = total_time(&w, &decision, s, cfg)?;
    trace.per_ut = per_ut;
    Ok(Solution { w, decision, objective, trace })
}

/// Constraint margins of a candidate solution; non-negative means satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `P_c - P_i`, W.
    pub power: Vec<f64>,
    /// `(SINR_i - Γ_th) / Γ_th`.
    pub sensing: Vec<f64>,
    /// `C_m - Σ_i a[m][i] f_M`, in units of `f_M`.
    pub capacity: Vec<f64>,
    /// At most one computation mode per UT.
    pub single_mode: bool,
}

impl FeasibilityReport {
    pub fn min_margin(&self) -> f64 {
        self.power
            .iter()
            .chain(&self.sensing)
            .chain(&self.capacity)
            .copied()
            .fold(if self.single_mode { f64::INFINITY } else { f64::NEG_INFINITY }, f64::min)
    }

    pub fn is_feasible(&self, slack: f64) -> bool {
        self.min_margin() >= -slack
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub per_ut: Vec<LatencyBreakdown>,
    pub feasibility: FeasibilityReport,
}

/// Objective and constraint margins of any `(W, decision)` pair.
pub fn evaluate(w: &BeamformingSet, dec: &OffloadDecision, s: &Scenario, cfg: &SystemConfig) -> Result<Evaluation> {
    w.check_shape(s)?;
    dec.check_shape(s)?;
    let single_mode = dec.modes().is_ok();
    let power = (0..s.num_ut)
        .map(|i| {
            let p = if single_mode { power(w, dec, i, cfg)? } else { w.power(i) };
            Ok(cfg.P_c - p)
        })
        .collect::<Result<Vec<_>>>()?;
    let sensing = (0..s.num_ut)
        .map(|i| Ok((sensing_sinr(w, s, i, cfg)? - cfg.Gamma_th) / cfg.Gamma_th))
        .collect::<Result<Vec<_>>>()?;
    let capacity = (0..s.num_bs).map(|m| (cfg.C_m - dec.mec_load(m, cfg)) / cfg.f_M).collect();
    let (objective, per_ut) = if single_mode { total_time(w, dec, s, cfg)? } else { (f64::NAN, Vec::new()) };
    Ok(Evaluation { objective, per_ut, feasibility: FeasibilityReport { power, sensing, capacity, single_mode } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::IsccError;
    use crate::scenario::generate_scenario;

    #[test]
    fn zero_beams_violate_sensing() {
        let cfg = SystemConfig { M: 1, L: 2, N: 4, K: 3, ..Default::default() };
        let s = generate_scenario(&cfg, 0);
        let ev = evaluate(&BeamformingSet::zeros(2, 3), &OffloadDecision::all_local(1, 2), &s, &cfg).unwrap();
        assert!(ev.feasibility.sensing.iter().all(|&m| m < 0.0));
        assert!(!ev.feasibility.is_feasible(1e-6));
    }

    #[test]
    fn infinite_threshold_fails() {
        let cfg = SystemConfig { M: 1, L: 2, N: 4, K: 3, Gamma_th: 1e40, ..Default::default() };
        let s = generate_scenario(&cfg, 0);
        assert!(matches!(run_algorithm1(&s, &cfg, &DriverOptions::default()), Err(IsccError::SensingInfeasible(_))));
    }

    #[test]
    fn single_ut_offloads_to_mec() {
        let cfg = SystemConfig { M: 1, L: 1, N: 4, K: 4, C_m: 1e12, ..Default::default() };
        let s = generate_scenario(&cfg, 2);
        let sol = run_algorithm1(&s, &cfg, &DriverOptions::default()).unwrap();
        assert!(sol.decision.a[0][0], "{:?} {:?}", sol.decision, sol.trace.records);
        assert!(sol.objective < crate::metrics::exec_time_local(&cfg));
        let ev = evaluate(&sol.w, &sol.decision, &s, &cfg).unwrap();
        assert!(ev.feasibility.is_feasible(1e-6), "{:?}", ev.feasibility);
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        SolutionTrace::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,phase,objective_s,elapsed_ms\n");
    }
}
