//! Beamforming step for a fixed offloading pair set.
//!
//! Each uplink rate is replaced by its quadratic-transform surrogate
//! `B log2(1 + 2Re{zᴴ Hᴴ w_i} - zᴴ N z)`, which is concave in the stacked
//! beamformers for fixed `z`, and each echo-SINR constraint is replaced by its
//! first-order (SCA) inner approximation around the previous beamformers. The
//! resulting convex program is solved with the barrier method, `z` is
//! refreshed in closed form, and the two steps alternate until the total
//! upload latency settles.

use nalgebra::{DMatrix, DVector};

use crate::cvxcore::{solve_convex, BarrierOptions, Constraint, ConvexProgram, QuadForm, SolverReport};
use crate::error::{IsccError, Result};
use crate::linalg::{from_real, hermitian_to_real, norm_sqr, quad_form, solve_hpd, to_real, CMatrix, CVector, C64};
use crate::metrics::{
    echo_response, interference_covariance, sensing_terms, tx_power_budget, uplink_rate, BeamformingSet, Mode,
    OffloadDecision,
};
use crate::scenario::{steering_vector, Scenario, SystemConfig};

/// Relative margin used to keep warm starts strictly inside the feasible set.
const INTERIOR_MARGIN: f64 = 1e-6;

/// The `(m, i)` pairs whose task is uploaded to BS `m`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OffloadPairSet {
    pairs: Vec<(usize, usize)>,
}

impl OffloadPairSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(_, i) in &pairs {
            if !seen.insert(i) {
                return Err(IsccError::Precondition(format!("UT {i} appears in more than one offloading pair")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn from_decision(dec: &OffloadDecision) -> Result<Self> {
        let pairs = dec
            .modes()?
            .into_iter()
            .enumerate()
            .filter_map(|(i, mode)| mode.bs().map(|m| (m, i)))
            .collect();
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn contains_ut(&self, i: usize) -> bool {
        self.pairs.iter().any(|&(_, u)| u == i)
    }

    /// Transmit power budget per UT: offloading UTs get `P_c`, local ones `P_c - ε f_L³`.
    pub fn power_budgets(&self, num_ut: usize, cfg: &SystemConfig) -> Vec<f64> {
        (0..num_ut)
            .map(|i| {
                let mode = if self.contains_ut(i) { Mode::Mec(0) } else { Mode::Local };
                tx_power_budget(mode, cfg)
            })
            .collect()
    }
}

/// Auxiliary variables of the surrogate problem.
#[derive(Debug, Clone)]
pub struct AuxState {
    /// One `z` per offloading pair, in pair order.
    pub z: Vec<CVector>,
    /// One latency bound per offloading pair, seconds.
    pub c: Vec<f64>,
    /// Expansion point for the SCA sensing constraints.
    pub w_tilde: BeamformingSet,
}

/// Closed-form optimal `z = N⁻¹ Hᴴ w_i`.
pub fn update_aux_z(w: &BeamformingSet, s: &Scenario, pair: (usize, usize), cfg: &SystemConfig) -> CVector {
    let (m, i) = pair;
    let cov = interference_covariance(w, s, m, i, cfg);
    let v = s.h[m][i].adjoint() * &w.w[i];
    solve_hpd(&cov, &v).expect("interference covariance is positive definite")
}

/// Argument of the log in the quadratic-transform rate.
fn transformed_arg(w: &BeamformingSet, z: &CVector, pair: (usize, usize), s: &Scenario, cfg: &SystemConfig) -> f64 {
    let (m, i) = pair;
    let cov = interference_covariance(w, s, m, i, cfg);
    let v = s.h[m][i].adjoint() * &w.w[i];
    1.0 + 2.0 * z.dotc(&v).re - quad_form(&cov, z)
}

/// Quadratic-transform rate `B log2(1 + 2Re{zᴴ Hᴴ w_i} - zᴴ N z)`, bits/s.
pub fn transformed_rate(
    w: &BeamformingSet,
    z: &CVector,
    pair: (usize, usize),
    s: &Scenario,
    cfg: &SystemConfig,
) -> Result<f64> {
    let arg = transformed_arg(w, z, pair, s, cfg);
    if !(arg > 0.0) {
        return Err(IsccError::Precondition(format!("transformed rate argument {arg} is not positive")));
    }
    Ok(cfg.B * arg.log2())
}

/// First-order inner approximation of UT `i`'s echo-SINR constraint around `w̃`:
///
/// `2Re{w̃ᴴ Q w_i} - w̃ᴴ Q w̃ >= Γ/α² (Σ_l ‖Ĥ_{l,i}ᴴ w_l‖² + σ_r²)`, `Q = Aᴴ A`.
#[derive(Debug, Clone)]
pub struct SensingHalfspace {
    pub ut: usize,
    /// `Q w̃`.
    pub gradient: CVector,
    /// `w̃ᴴ Q w̃`.
    pub offset: f64,
    /// `Q`.
    pub q: CMatrix,
    /// `Γ / α_i²`.
    pub weight: f64,
    /// `(l, Ĥ_{l,i} Ĥ_{l,i}ᴴ)` for `l != i`.
    pub interference: Vec<(usize, CMatrix)>,
    pub noise: f64,
}

impl SensingHalfspace {
    /// The affine minorant `2Re{w̃ᴴ Q w} - w̃ᴴ Q w̃`.
    pub fn affine(&self, w_i: &CVector) -> f64 {
        2.0 * self.gradient.dotc(w_i).re - self.offset
    }

    /// The quadratic it minorizes, `wᴴ Q w`.
    pub fn quadratic(&self, w_i: &CVector) -> f64 {
        quad_form(&self.q, w_i)
    }

    /// Right-hand side `Γ/α² (Σ_l w_lᴴ Ĥ Ĥᴴ w_l + σ_r²)`.
    pub fn rhs(&self, w: &BeamformingSet) -> f64 {
        let i: f64 = self.interference.iter().map(|(l, g)| quad_form(g, &w.w[*l])).sum();
        self.weight * (i + self.noise)
    }

    /// `affine - rhs`; non-negative when the linearized constraint holds.
    pub fn margin(&self, w: &BeamformingSet) -> f64 {
        self.affine(&w.w[self.ut]) - self.rhs(w)
    }
}

pub fn sca_sensing_halfspace(w_tilde: &CVector, s: &Scenario, i: usize, cfg: &SystemConfig) -> SensingHalfspace {
    let a = echo_response(s.theta[i], cfg);
    let q = a.adjoint() * &a;
    let gradient = &q * w_tilde;
    let offset = gradient.dotc(w_tilde).re;
    let interference = (0..s.num_ut)
        .filter(|&l| l != i)
        .map(|l| {
            let h = s.hhat(l, i);
            (l, h * h.adjoint())
        })
        .collect();
    SensingHalfspace {
        ut: i,
        gradient,
        offset,
        q,
        weight: cfg.Gamma_th / s.alpha[i].powi(2),
        interference,
        noise: cfg.sigma_r2(),
    }
}

/// Upper bound on any achievable rate of UT `i` at BS `m`: `B log2(1 + P_c ‖H‖_F² / σ_c²)`.
pub fn rate_upper_bound(s: &Scenario, m: usize, i: usize, cfg: &SystemConfig) -> f64 {
    let h2: f64 = s.h[m][i].iter().map(|z| z.norm_sqr()).sum();
    cfg.B * (1.0 + cfg.P_c * h2 / cfg.sigma_c2()).log2()
}

/// Lower bound `D / R_max` on each offloading pair's latency variable.
pub fn c_floor(s: &Scenario, pair: (usize, usize), cfg: &SystemConfig) -> f64 {
    cfg.data_bits() / rate_upper_bound(s, pair.0, pair.1, cfg)
}

/// Sum of upload times `Σ_{(m,i)∈A} D / R_{m,i}(W)`, the part of the total latency
/// that depends on the beamformers.
pub fn upload_objective(w: &BeamformingSet, s: &Scenario, pairs: &OffloadPairSet, cfg: &SystemConfig) -> Result<f64> {
    let mut total = 0.0;
    for &(m, i) in pairs.pairs() {
        let r = uplink_rate(w, s, m, i, cfg)?;
        total += if r > 0.0 { cfg.data_bits() / r } else { f64::INFINITY };
    }
    Ok(total)
}

fn stack(w: &BeamformingSet, c: &[f64]) -> DVector<f64> {
    let k2 = w.w.first().map_or(0, |v| 2 * v.len());
    let mut x = DVector::zeros(k2 * w.len() + c.len());
    for (l, wl) in w.w.iter().enumerate() {
        x.rows_mut(l * k2, k2).copy_from(&to_real(wl));
    }
    for (p, &cp) in c.iter().enumerate() {
        x[k2 * w.len() + p] = cp;
    }
    x
}

fn unstack(x: &DVector<f64>, num_ut: usize, k: usize, num_pairs: usize) -> (BeamformingSet, Vec<f64>) {
    let k2 = 2 * k;
    let w = (0..num_ut).map(|l| from_real(x.rows(l * k2, k2).as_slice())).collect();
    let c = (0..num_pairs).map(|p| x[k2 * num_ut + p]).collect();
    (BeamformingSet::new(w), c)
}

fn real_vec(v: &CVector) -> DVector<f64> {
    to_real(v)
}

/// Options for the beamforming step.
#[derive(Debug, Clone)]
pub struct FpOptions {
    /// Relative change of the upload objective that ends the loop.
    pub tol: f64,
    pub max_iter: usize,
    pub barrier: BarrierOptions,
    /// Duality-gap target of each subproblem, relative to its starting objective.
    pub subproblem_rel_gap: f64,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 30, barrier: BarrierOptions::default(), subproblem_rel_gap: 1e-8 }
    }
}

/// Convex surrogate built around `aux`.
struct Subproblem {
    program: ConvexProgram,
    start: DVector<f64>,
    num_power: usize,
    num_sensing: usize,
}

fn build_subproblem(
    s: &Scenario,
    pairs: &OffloadPairSet,
    aux: &AuxState,
    cfg: &SystemConfig,
) -> Result<Subproblem> {
    let l_count = s.num_ut;
    let k = s.ut_antennas;
    let k2 = 2 * k;
    let n_pairs = pairs.len();
    let n_vars = k2 * l_count + n_pairs;
    let w_tilde = &aux.w_tilde;
    let budgets = pairs.power_budgets(l_count, cfg);

    let mut constraints = Vec::with_capacity(2 * l_count + 2 * n_pairs);

    for (i, &budget) in budgets.iter().enumerate() {
        let q = QuadForm::constant(-1.0).with_block(i * k2, DMatrix::identity(k2, k2) / budget);
        constraints.push(Constraint::Quadratic(q));
    }

    for i in 0..l_count {
        let hs = sca_sensing_halfspace(&w_tilde.w[i], s, i, cfg);
        // normalized by the larger of the echo power at w̃ and the noise term
        let norm = hs.offset.max(hs.weight * hs.noise).max(f64::MIN_POSITIVE);
        let mut q = QuadForm::constant((hs.weight * hs.noise + hs.offset) / norm)
            .with_linear(i * k2, real_vec(&hs.gradient) * (-2.0 / norm));
        for (l, g) in &hs.interference {
            q = q.with_block(l * k2, hermitian_to_real(g) * (hs.weight / norm));
        }
        constraints.push(Constraint::Quadratic(q));
    }

    let demand = cfg.data_bits() / cfg.B;
    let w_stacked = stack(w_tilde, &vec![0.0; n_pairs]);
    let mut c_start = Vec::with_capacity(n_pairs);
    for (p, &(m, i)) in pairs.pairs().iter().enumerate() {
        let z = &aux.z[p];
        let g = &s.h[m][i] * z;
        let mut neg = QuadForm::constant(-1.0 + cfg.sigma_c2() * norm_sqr(z)).with_linear(i * k2, real_vec(&g) * -2.0);
        for l in (0..l_count).filter(|&l| l != i) {
            let u = &s.h[m][l] * z;
            neg = neg.with_block(l * k2, hermitian_to_real(&(&u * u.adjoint())));
        }
        // the complex and real-stacked evaluations of φ differ by roundoff; make sure c is strictly feasible
        // for the latter
        let phi = -neg.value(&w_stacked);
        let needed = if phi > 1.0 { demand * std::f64::consts::LN_2 / phi.ln() * (1.0 + 1e-9) } else { f64::INFINITY };
        constraints.push(Constraint::LogRate { neg_arg: neg, c_index: k2 * l_count + p, demand, scale: 1.0 / std::f64::consts::LN_2 });

        let floor = c_floor(s, (m, i), cfg);
        let floor_q = QuadForm::constant(1.0).with_linear(k2 * l_count + p, DVector::from_element(1, -1.0 / floor));
        constraints.push(Constraint::Quadratic(floor_q));
        c_start.push(aux.c[p].max(needed));
    }

    let mut objective = DVector::zeros(n_vars);
    for p in 0..n_pairs {
        objective[k2 * l_count + p] = 1.0;
    }
    let start = stack(w_tilde, &c_start);
    Ok(Subproblem {
        program: ConvexProgram { objective, constraints },
        start,
        num_power: l_count,
        num_sensing: l_count,
    })
}

fn infeasible_family(sub: &Subproblem) -> String {
    let bad = sub.program.constraints.iter().enumerate().find(|(_, c)| !(c.value(&sub.start) < 0.0));
    let Some((j, c)) = bad else { return "no".into() };
    let family = if j < sub.num_power {
        "power"
    } else if j < sub.num_power + sub.num_sensing {
        "sensing"
    } else if (j - sub.num_power - sub.num_sensing) % 2 == 0 {
        "rate"
    } else {
        "latency floor"
    };
    format!("{family} constraint {j} at {:.3e}", c.value(&sub.start))
}

/// Solve the convex surrogate around `aux`. Returns the new beamformers, the
/// latency variables and the barrier report.
pub fn solve_subproblem(
    s: &Scenario,
    pairs: &OffloadPairSet,
    aux: &AuxState,
    cfg: &SystemConfig,
    opts: &FpOptions,
) -> Result<(BeamformingSet, Vec<f64>, SolverReport)> {
    let sub = build_subproblem(s, pairs, aux, cfg)?;
    if pairs.is_empty() {
        // nothing to minimize: the expansion point is already feasible
        if !(sub.program.max_violation(&sub.start) < 0.0) {
            return Err(IsccError::Solver(format!(
                "subproblem start infeasible ({})",
                infeasible_family(&sub)
            )));
        }
        let rep = SolverReport {
            status: crate::cvxcore::SolverStatus::Optimal,
            iterations: 0,
            kkt_residual: 0.0,
            objective: 0.0,
            max_violation: sub.program.max_violation(&sub.start),
        };
        return Ok((aux.w_tilde.clone(), Vec::new(), rep));
    }
    let start_obj = sub.program.objective_value(&sub.start);
    let mut barrier = opts.barrier.clone();
    barrier.tol = opts.subproblem_rel_gap * start_obj;
    // first duality gap of the order of the objective itself
    barrier.t0 = barrier.t0.max(sub.program.constraints.len() as f64 / start_obj);
    let (x, rep) = solve_convex(&sub.program, &sub.start, &barrier);
    if rep.status == crate::cvxcore::SolverStatus::Infeasible {
        return Err(IsccError::Solver(format!(
            "subproblem start infeasible ({})",
            infeasible_family(&sub)
        )));
    }
    let (w, c) = unstack(&x, s.num_ut, s.ut_antennas, pairs.len());
    Ok((w, c, rep))
}

fn sinr_margins(w: &BeamformingSet, s: &Scenario, cfg: &SystemConfig) -> Vec<f64> {
    (0..s.num_ut)
        .map(|i| {
            let (num, den) = sensing_terms(w, s, i, cfg);
            num / (den * cfg.Gamma_th) - 1.0
        })
        .collect()
}

/// True when every echo SINR exceeds `Γ_th (1 + margin)` and every power is strictly inside its budget.
pub fn strictly_feasible(w: &BeamformingSet, s: &Scenario, budgets: &[f64], cfg: &SystemConfig, margin: f64) -> bool {
    sinr_margins(w, s, cfg).iter().all(|&m| m > margin)
        && budgets.iter().enumerate().all(|(i, &b)| w.power(i) < b)
}

fn mrs_direction(s: &Scenario, i: usize, cfg: &SystemConfig) -> CVector {
    let a = steering_vector(s.theta[i], cfg.K, cfg.antenna_spacing_over_wavelength);
    let norm = (cfg.K as f64).sqrt();
    a.map(|z| z / norm)
}

fn scaled(dirs: &[CVector], powers: &[f64]) -> BeamformingSet {
    BeamformingSet::new(dirs.iter().zip(powers).map(|(d, &p)| d * C64::new(p.sqrt(), 0.0)).collect())
}

/// Strictly feasible starting beamformers along the sensing directions.
///
/// Tries full power for every UT first, then a fixed-point power control
/// along the same directions, scaled up until one UT reaches its budget. Fails with [`IsccError::SensingInfeasible`]
/// when neither meets every echo-SINR constraint.
pub fn init_beamformers(s: &Scenario, pairs: &OffloadPairSet, cfg: &SystemConfig) -> Result<BeamformingSet> {
    let budgets = pairs.power_budgets(s.num_ut, cfg);
    let dirs: Vec<CVector> = (0..s.num_ut).map(|i| mrs_direction(s, i, cfg)).collect();
    let k2 = (cfg.K * cfg.K) as f64;
    let target = cfg.Gamma_th * (1.0 + 10.0 * INTERIOR_MARGIN);

    let full: Vec<f64> = budgets.iter().map(|b| b * (1.0 - INTERIOR_MARGIN)).collect();
    let w = scaled(&dirs, &full);
    if strictly_feasible(&w, s, &budgets, cfg, INTERIOR_MARGIN) {
        return Ok(w);
    }

    // echo gain per unit power along the MRS direction is α² K²
    let min_powers: Vec<f64> = (0..s.num_ut)
        .map(|i| target * cfg.sigma_r2() / (s.alpha[i].powi(2) * k2))
        .collect();
    // interference gain of UT l's unit-power sensing beam at UT i
    let gains: Vec<Vec<f64>> = (0..s.num_ut)
        .map(|i| {
            (0..s.num_ut)
                .map(|l| if l == i { 0.0 } else { norm_sqr(&(s.hhat(l, i).adjoint() * &dirs[l])) })
                .collect()
        })
        .collect();
    let mut p = min_powers.clone();
    for _ in 0..500 {
        let next: Vec<f64> = (0..s.num_ut)
            .map(|i| {
                let interf: f64 = (0..s.num_ut).map(|l| gains[i][l] * p[l]).sum();
                target * (interf + cfg.sigma_r2()) / (s.alpha[i].powi(2) * k2)
            })
            .collect();
        let converged = next.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-12 * a.max(*b));
        p = next;
        if p.iter().zip(&budgets).any(|(p, b)| !(p < b)) {
            break;
        }
        if converged {
            break;
        }
    }
    if p.iter().zip(&budgets).all(|(p, b)| *p < *b) {
        // scaling a feasible power vector up only raises every echo SINR
        let lift = p.iter().zip(&budgets).map(|(p, b)| b * (1.0 - INTERIOR_MARGIN) / p).fold(f64::INFINITY, f64::min);
        let p: Vec<f64> = p.iter().map(|p| p * lift.max(1.0)).collect();
        let w = scaled(&dirs, &p);
        if strictly_feasible(&w, s, &budgets, cfg, INTERIOR_MARGIN) {
            return Ok(w);
        }
    }

    let worst = sinr_margins(&scaled(&dirs, &full), s, cfg)
        .into_iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
    Err(IsccError::SensingInfeasible(format!(
        "UT {} reaches only {:.3e} of Gamma_th = {:.3e} with full-power sensing beams",
        worst.0,
        worst.1 + 1.0,
        cfg.Gamma_th
    )))
}

/// Scale down beamformers that sit on their power budget for `pairs`; falls
/// back to [`init_beamformers`] when the result is not strictly feasible.
pub fn warm_start(w: &BeamformingSet, s: &Scenario, pairs: &OffloadPairSet, cfg: &SystemConfig) -> Result<BeamformingSet> {
    let budgets = pairs.power_budgets(s.num_ut, cfg);
    let mut out = w.clone();
    for (i, &b) in budgets.iter().enumerate() {
        let p = out.power(i);
        if p >= b * (1.0 - INTERIOR_MARGIN) {
            out.w[i] *= C64::new((b * (1.0 - INTERIOR_MARGIN) / p).sqrt(), 0.0);
        }
    }
    if strictly_feasible(&out, s, &budgets, cfg, 0.0) {
        Ok(out)
    } else {
        init_beamformers(s, pairs, cfg)
    }
}

/// Output of [`inner_fp_loop`].
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub w: BeamformingSet,
    pub c: Vec<f64>,
    /// `Σ D/R` at the starting point and after every subproblem.
    pub objective_trace: Vec<f64>,
    /// `Σ c` returned by each subproblem.
    pub surrogate_trace: Vec<f64>,
    pub reports: Vec<SolverReport>,
}

impl InnerResult {
    pub fn iterations(&self) -> usize {
        self.reports.len()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the start value")
    }
}

/// Alternate subproblem solves and closed-form `z` updates from `w_init`.
pub fn inner_fp_loop(
    s: &Scenario,
    pairs: &OffloadPairSet,
    w_init: &BeamformingSet,
    cfg: &SystemConfig,
    opts: &FpOptions,
) -> Result<InnerResult> {
    w_init.check_shape(s)?;
    let budgets = pairs.power_budgets(s.num_ut, cfg);
    if !strictly_feasible(w_init, s, &budgets, cfg, 0.0) {
        return Err(IsccError::Precondition("initial beamformers are not strictly feasible".into()));
    }
    let mut w = w_init.clone();
    let mut obj = upload_objective(&w, s, pairs, cfg)?;
    let mut result = InnerResult {
        w: w.clone(),
        c: Vec::new(),
        objective_trace: vec![obj],
        surrogate_trace: Vec::new(),
        reports: Vec::new(),
    };
    if pairs.is_empty() {
        return Ok(result);
    }
    for _ in 0..opts.max_iter {
        let z: Vec<CVector> = pairs.pairs().iter().map(|&p| update_aux_z(&w, s, p, cfg)).collect();
        // the transformed rate at z is what the subproblem sees; it sits at or below R
        let c: Vec<f64> = pairs
            .pairs()
            .iter()
            .zip(&z)
            .map(|(&pair, z)| {
                let r = transformed_rate(&w, z, pair, s, cfg).unwrap_or(0.0);
                let c0 = cfg.data_bits() / r * (1.0 + 1e-9);
                c0.max(c_floor(s, pair, cfg) * (1.0 + 1e-9))
            })
            .collect();
        if c.iter().any(|c| !c.is_finite()) {
            return Err(IsccError::Solver("offloading UT has zero uplink rate at the expansion point".into()));
        }
        let aux = AuxState { z, c, w_tilde: w.clone() };
        let (w_new, c_new, rep) = solve_subproblem(s, pairs, &aux, cfg, opts)?;
        let new_obj = upload_objective(&w_new, s, pairs, cfg)?;
        result.surrogate_trace.push(c_new.iter().sum());
        result.reports.push(rep);
        result.objective_trace.push(new_obj);
        let rel = (obj - new_obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
        w = w_new;
        result.c = c_new;
        obj = new_obj;
        if rel < opts.tol {
            break;
        }
    }
    result.w = w;
    Ok(result)
}
