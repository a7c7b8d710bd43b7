//! Comparison schemes: two-tier offloading, fixed MRC / MRS beamformers, all-local.

use serde::{Deserialize, Serialize};

use crate::driver::{run_algorithm1, DriverOptions};
use crate::error::{IsccError, Result};
use crate::fp_beamforming::{init_beamformers, OffloadPairSet};
use crate::linalg::{dominant_left_singular, CVector};
use crate::metrics::{exec_time_local, sensing_sinr, BeamformingSet, OffloadDecision};
use crate::offloading::optimize_offloading;
use crate::scenario::{steering_vector, Scenario, SystemConfig};

/// BS with the largest channel energy `‖H_{m,i}‖_F²` for UT `i`.
pub fn strongest_bs(s: &Scenario, i: usize) -> usize {
    let energy = |m: usize| s.h[m][i].iter().map(|z| z.norm_sqr()).sum::<f64>();
    (0..s.num_bs).fold(0, |best, m| if energy(m) > energy(best) { m } else { best })
}

/// `√P_c u`, `u` the dominant left singular vector of `H_{m,i}`.
pub fn mrc_beamformer(s: &Scenario, i: usize, m: usize, cfg: &SystemConfig) -> CVector {
    let (u, _) = dominant_left_singular(&s.h[m][i]);
    let norm = u.norm();
    u.map(|z| z * (cfg.P_c.sqrt() / norm))
}

/// `√P_c a(θ_i) / ‖a(θ_i)‖`.
pub fn mrs_beamformer(s: &Scenario, i: usize, cfg: &SystemConfig) -> CVector {
    let a = steering_vector(s.theta[i], cfg.K, cfg.antenna_spacing_over_wavelength);
    let scale = (cfg.P_c / cfg.K as f64).sqrt();
    a.map(|z| z * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Three-tier offloading with optimized beamforming.
    ThcoBo,
    /// Two-tier (terminal / MEC) offloading with optimized beamforming.
    TtcoBo,
    ThcoMrc,
    ThcoMrs,
    Local,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::ThcoBo, Scheme::TtcoBo, Scheme::ThcoMrc, Scheme::ThcoMrs, Scheme::Local];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ThcoBo => "thco_bo",
            Scheme::TtcoBo => "ttco_bo",
            Scheme::ThcoMrc => "thco_mrc",
            Scheme::ThcoMrs => "thco_mrs",
            Scheme::Local => "local",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Outcome of one scheme on one scenario.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub w: BeamformingSet,
    pub decision: OffloadDecision,
    pub objective: f64,
    pub outer_iters: usize,
}

/// Two-tier scheme: the alternating algorithm with the cloud tier disabled.
pub fn two_tier_scheme(s: &Scenario, cfg: &SystemConfig, opts: &DriverOptions) -> Result<SchemeOutcome> {
    let opts = DriverOptions { allow_cloud: false, ..opts.clone() };
    let sol = run_algorithm1(s, cfg, &opts)?;
    let outer_iters = sol.trace.outer_iterations();
    Ok(SchemeOutcome { w: sol.w, decision: sol.decision, objective: sol.objective, outer_iters })
}

/// Offloading optimized for fixed beamformers; errors if they miss `Γ_th`.
fn fixed_beam_scheme(w: BeamformingSet, s: &Scenario, cfg: &SystemConfig) -> Result<SchemeOutcome> {
    for i in 0..s.num_ut {
        let sinr = sensing_sinr(&w, s, i, cfg)?;
        if sinr < cfg.Gamma_th {
            return Err(IsccError::SensingInfeasible(format!(
                "fixed beamformer of UT {i} reaches SINR {sinr:.3e} < {:.3e}",
                cfg.Gamma_th
            )));
        }
    }
    let off = optimize_offloading(&w, s, cfg, true)?;
    Ok(SchemeOutcome { w, decision: off.decision, objective: off.objective, outer_iters: 1 })
}

pub fn mrc_scheme(s: &Scenario, cfg: &SystemConfig) -> Result<SchemeOutcome> {
    let w = (0..s.num_ut).map(|i| mrc_beamformer(s, i, strongest_bs(s, i), cfg)).collect();
    fixed_beam_scheme(BeamformingSet::new(w), s, cfg)
}

pub fn mrs_scheme(s: &Scenario, cfg: &SystemConfig) -> Result<SchemeOutcome> {
    let w = (0..s.num_ut).map(|i| mrs_beamformer(s, i, cfg)).collect();
    fixed_beam_scheme(BeamformingSet::new(w), s, cfg)
}

/// Everything computed on the terminals; the beamformers only need to meet `Γ_th`.
pub fn local_scheme(s: &Scenario, cfg: &SystemConfig) -> Result<SchemeOutcome> {
    let w = init_beamformers(s, &OffloadPairSet::default(), cfg)?;
    Ok(SchemeOutcome {
        w,
        decision: OffloadDecision::all_local(s.num_bs, s.num_ut),
        objective: s.num_ut as f64 * exec_time_local(cfg),
        outer_iters: 0,
    })
}

pub fn run_scheme(scheme: Scheme, s: &Scenario, cfg: &SystemConfig, opts: &DriverOptions) -> Result<SchemeOutcome> {
    match scheme {
        Scheme::ThcoBo => {
            let sol = run_algorithm1(s, cfg, opts)?;
            let outer_iters = sol.trace.outer_iterations();
            Ok(SchemeOutcome { w: sol.w, decision: sol.decision, objective: sol.objective, outer_iters })
        }
        Scheme::TtcoBo => two_tier_scheme(s, cfg, opts),
        Scheme::ThcoMrc => mrc_scheme(s, cfg),
        Scheme::ThcoMrs => mrs_scheme(s, cfg),
        Scheme::Local => local_scheme(s, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_sqr, C64};
    use crate::metrics::uplink_rate;
    use crate::scenario::generate_scenario;

    #[test]
    fn baseline_beams_use_full_power() {
        let cfg = SystemConfig { M: 2, L: 3, N: 5, K: 4, P_c: 0.7, ..Default::default() };
        let s = generate_scenario(&cfg, 1);
        for i in 0..3 {
            assert!((norm_sqr(&mrc_beamformer(&s, i, 1, &cfg)) - 0.7).abs() < 1e-12);
            assert!((norm_sqr(&mrs_beamformer(&s, i, &cfg)) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn mrs_broadside_is_uniform() {
        let cfg = SystemConfig { M: 1, L: 1, N: 2, K: 4, P_c: 2.0, ..Default::default() };
        let mut s = generate_scenario(&cfg, 1);
        s.theta[0] = 0.0;
        let w = mrs_beamformer(&s, 0, &cfg);
        for z in w.iter() {
            assert!((z - C64::new((2.0f64 / 4.0).sqrt(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn mrc_on_rank_one_channel() {
        let cfg = SystemConfig { M: 1, L: 1, N: 3, K: 3, P_c: 1.0, ..Default::default() };
        let mut s = generate_scenario(&cfg, 0);
        let u = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]);
        let v = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 1.0), C64::new(0.0, -2.0)]);
        s.h[0][0] = (&u * v.adjoint()) * C64::new(1e-4, 0.0);
        let w = mrc_beamformer(&s, 0, 0, &cfg);
        let overlap = u.dotc(&w).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mrc_reaches_single_user_capacity() {
        let cfg = SystemConfig { M: 1, L: 1, N: 6, K: 4, ..Default::default() };
        let s = generate_scenario(&cfg, 3);
        let w = BeamformingSet::new(vec![mrc_beamformer(&s, 0, 0, &cfg)]);
        let (_, sigma) = dominant_left_singular(&s.h[0][0]);
        let want = cfg.B * (1.0 + cfg.P_c * sigma * sigma / cfg.sigma_c2()).log2();
        let got = uplink_rate(&w, &s, 0, 0, &cfg).unwrap();
        assert!((got - want).abs() <= 1e-9 * want);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.name()), Some(s));
        }
        assert_eq!(Scheme::parse("nope"), None);
    }
}
