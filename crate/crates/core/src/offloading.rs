//! Offloading step for fixed beamformers: relaxed LP plus relax-and-inflate rounding.

use crate::cvxcore::{solve_lp, LinearProgram, SolverReport, SolverStatus};
use crate::error::{IsccError, Result};
use crate::metrics::{exec_time_cloud, exec_time_local, exec_time_mec, total_time, uplink_rate, BeamformingSet, OffloadDecision};
use crate::scenario::{Scenario, SystemConfig};

/// Cost used in place of an infinite latency for pairs with zero uplink rate, seconds.
pub const ZERO_RATE_PENALTY: f64 = 1e6;

const INTEGRAL_TOL: f64 = 1e-9;

/// Fractional offloading variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedDecision {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

/// The relaxed offloading LP for fixed beamformers.
///
/// Variable `a[m][i]` sits at `m·L + i`, `b[m][i]` at `M·L + m·L + i`. The
/// objective is `constant + cost·x`, where `constant = Σ_i T^L_i`.
#[derive(Debug, Clone)]
pub struct OffloadingLp {
    pub lp: LinearProgram,
    pub constant: f64,
    pub num_bs: usize,
    pub num_ut: usize,
}

impl OffloadingLp {
    pub fn a_index(&self, m: usize, i: usize) -> usize {
        m * self.num_ut + i
    }

    pub fn b_index(&self, m: usize, i: usize) -> usize {
        (self.num_bs + m) * self.num_ut + i
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.constant + self.lp.objective(x)
    }

    pub fn relaxed(&self, x: &[f64]) -> RelaxedDecision {
        let a = (0..self.num_bs).map(|m| (0..self.num_ut).map(|i| x[self.a_index(m, i)]).collect()).collect();
        let b = (0..self.num_bs).map(|m| (0..self.num_ut).map(|i| x[self.b_index(m, i)]).collect()).collect();
        RelaxedDecision { a, b }
    }

    pub fn to_vector(&self, dec: &OffloadDecision) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.num_vars()];
        for m in 0..self.num_bs {
            for i in 0..self.num_ut {
                x[self.a_index(m, i)] = f64::from(u8::from(dec.a[m][i]));
                x[self.b_index(m, i)] = f64::from(u8::from(dec.b[m][i]));
            }
        }
        x
    }

    fn to_decision(&self, x: &[f64]) -> OffloadDecision {
        let mut dec = OffloadDecision::all_local(self.num_bs, self.num_ut);
        for m in 0..self.num_bs {
            for i in 0..self.num_ut {
                dec.a[m][i] = x[self.a_index(m, i)] > 0.5;
                dec.b[m][i] = x[self.b_index(m, i)] > 0.5;
            }
        }
        dec
    }

    /// Objective of a binary decision under this LP's costs.
    pub fn decision_objective(&self, dec: &OffloadDecision) -> f64 {
        self.objective(&self.to_vector(dec))
    }
}

/// Assemble the relaxed LP. With `allow_cloud = false` every `b` is pinned to 0.
pub fn build_offloading_lp(w: &BeamformingSet, s: &Scenario, cfg: &SystemConfig, allow_cloud: bool) -> Result<OffloadingLp> {
    w.check_shape(s)?;
    let (mm, ll) = (s.num_bs, s.num_ut);
    let n = 2 * mm * ll;
    let t_local = exec_time_local(cfg);
    let mut lp = LinearProgram {
        cost: vec![0.0; n],
        a_ub: Vec::new(),
        b_ub: Vec::new(),
        bounds: vec![(0.0, 1.0); n],
    };
    let olp_index = |is_cloud: bool, m: usize, i: usize| (usize::from(is_cloud) * mm + m) * ll + i;
    for m in 0..mm {
        for i in 0..ll {
            let rate = uplink_rate(w, s, m, i, cfg)?;
            let finite_or_penalty = |t: f64| if t.is_finite() { t } else { ZERO_RATE_PENALTY };
            lp.cost[olp_index(false, m, i)] = finite_or_penalty(exec_time_mec(rate, cfg)) - t_local;
            lp.cost[olp_index(true, m, i)] = finite_or_penalty(exec_time_cloud(rate, cfg)) - t_local;
            if !allow_cloud {
                lp.bounds[olp_index(true, m, i)] = (0.0, 0.0);
            }
        }
    }
    // one computation mode per UT
    for i in 0..ll {
        let mut row = vec![0.0; n];
        for m in 0..mm {
            row[olp_index(false, m, i)] = 1.0;
            row[olp_index(true, m, i)] = 1.0;
        }
        lp.a_ub.push(row);
        lp.b_ub.push(1.0);
    }
    // MEC capacity, in units of f_M
    for m in 0..mm {
        let mut row = vec![0.0; n];
        for i in 0..ll {
            row[olp_index(false, m, i)] = 1.0;
        }
        lp.a_ub.push(row);
        lp.b_ub.push(cfg.C_m / cfg.f_M);
    }
    // power: ‖w‖² + ε f_L³ (1 - Σ(a + b)) <= P_c, in units of ε f_L³
    let pl = cfg.local_compute_power();
    for i in 0..ll {
        let mut row = vec![0.0; n];
        for m in 0..mm {
            row[olp_index(false, m, i)] = -1.0;
            row[olp_index(true, m, i)] = -1.0;
        }
        lp.a_ub.push(row);
        lp.b_ub.push((cfg.P_c - w.power(i) - pl) / pl);
    }
    Ok(OffloadingLp { lp, constant: ll as f64 * t_local, num_bs: mm, num_ut: ll })
}

/// True when `dec` satisfies one-mode-per-UT, MEC capacity and power budgets for `w`.
pub fn decision_feasible(w: &BeamformingSet, dec: &OffloadDecision, cfg: &SystemConfig) -> bool {
    let Ok(modes) = dec.modes() else { return false };
    let capacity_ok = (0..dec.num_bs()).all(|m| dec.mec_load(m, cfg) <= cfg.C_m);
    let power_ok = modes.iter().enumerate().all(|(i, mode)| {
        let p = w.power(i) + if mode.bs().is_none() { cfg.local_compute_power() } else { 0.0 };
        p <= cfg.P_c * (1.0 + 1e-12)
    });
    capacity_ok && power_ok
}

fn is_integral(v: f64) -> bool {
    v.abs() <= INTEGRAL_TOL || (v - 1.0).abs() <= INTEGRAL_TOL
}

/// Relax-and-inflate rounding.
///
/// Repeatedly takes the largest fractional variable (lowest index on ties),
/// pins it to 1 if the LP with that pin stays feasible and to 0 otherwise,
/// and re-solves, until the solution is integral. Falls back to all-local
/// when neither pin is feasible; the result never loses to all-local when
/// all-local is feasible.
pub fn round_inflate(relaxed: &[f64], olp: &OffloadingLp, w: &BeamformingSet, cfg: &SystemConfig) -> Result<OffloadDecision> {
    let mut lp = olp.lp.clone();
    let mut x = relaxed.to_vec();
    let all_local = OffloadDecision::all_local(olp.num_bs, olp.num_ut);
    let local_ok = decision_feasible(w, &all_local, cfg);
    let mut fallback = false;
    loop {
        let frac = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| !is_integral(v))
            .fold(None, |best: Option<(usize, f64)>, (j, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((j, v)),
            });
        let Some((j, _)) = frac else { break };
        let mut fixed = false;
        for value in [1.0, 0.0] {
            let saved = lp.bounds[j];
            lp.bounds[j] = (value, value);
            let (xn, rep) = solve_lp(&lp);
            if rep.status == SolverStatus::Optimal {
                x = xn;
                fixed = true;
                break;
            }
            lp.bounds[j] = saved;
        }
        if !fixed {
            fallback = true;
            break;
        }
    }
    let rounded = olp.to_decision(&x);
    if fallback || !decision_feasible(w, &rounded, cfg) {
        if !local_ok {
            return Err(IsccError::Precondition("no feasible rounding and all-local violates the power budget".into()));
        }
        return Ok(all_local);
    }
    if local_ok && olp.decision_objective(&all_local) < olp.decision_objective(&rounded) {
        return Ok(all_local);
    }
    Ok(rounded)
}

/// Result of [`optimize_offloading`].
#[derive(Debug, Clone)]
pub struct OffloadingResult {
    pub decision: OffloadDecision,
    /// True total latency of `decision`, seconds.
    pub objective: f64,
    /// Optimal value of the relaxed LP, seconds.
    pub lp_objective: f64,
    pub relaxed: RelaxedDecision,
    pub report: SolverReport,
}

/// Build, solve and round the offloading LP for fixed beamformers.
pub fn optimize_offloading(w: &BeamformingSet, s: &Scenario, cfg: &SystemConfig, allow_cloud: bool) -> Result<OffloadingResult> {
    let olp = build_offloading_lp(w, s, cfg, allow_cloud)?;
    let (x, report) = solve_lp(&olp.lp);
    if report.status != SolverStatus::Optimal {
        return Err(IsccError::Solver(format!("offloading LP ended with status {:?}", report.status)));
    }
    let decision = round_inflate(&x, &olp, w, cfg)?;
    let (objective, _) = total_time(w, &decision, s, cfg)?;
    Ok(OffloadingResult {
        decision,
        objective,
        lp_objective: olp.objective(&x),
        relaxed: olp.relaxed(&x),
        report,
    })
}
