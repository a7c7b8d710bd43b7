//! Closed-form system quantities: uplink rate, echo SINR, latency and power.

use serde::{Deserialize, Serialize};

use crate::error::{IsccError, Result};
use crate::linalg::{ln_det_hpd, norm_sqr, solve_hpd, CMatrix, CVector, C64};
use crate::scenario::{steering_vector, Scenario, SystemConfig};

/// One transmit beamformer per UT.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSet {
    pub w: Vec<CVector>,
}

impl BeamformingSet {
    pub fn new(w: Vec<CVector>) -> Self {
        Self { w }
    }

    pub fn zeros(num_ut: usize, antennas: usize) -> Self {
        Self { w: vec![CVector::zeros(antennas); num_ut] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Transmit power `‖w_i‖²`.
    pub fn power(&self, i: usize) -> f64 {
        norm_sqr(&self.w[i])
    }

    pub fn check_shape(&self, s: &Scenario) -> Result<()> {
        if self.w.len() != s.num_ut {
            return Err(IsccError::Dimension(format!(
                "{} beamformers for {} UTs",
                self.w.len(),
                s.num_ut
            )));
        }
        if let Some(i) = self.w.iter().position(|w| w.len() != s.ut_antennas) {
            return Err(IsccError::Dimension(format!(
                "beamformer {i} has length {}, expected {}",
                self.w[i].len(),
                s.ut_antennas
            )));
        }
        Ok(())
    }
}

/// Where a UT's sensing task is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Local,
    /// MEC server at this BS.
    Mec(usize),
    /// Cloud, relayed through this BS.
    Cloud(usize),
}

impl Mode {
    pub fn bs(&self) -> Option<usize> {
        match *self {
            Mode::Local => None,
            Mode::Mec(m) | Mode::Cloud(m) => Some(m),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Mode::Local => "local".into(),
            Mode::Mec(m) => format!("mec{m}"),
            Mode::Cloud(m) => format!("cloud{m}"),
        }
    }
}

/// Binary offloading variables `a[m][i]` (MEC at BS m) and `b[m][i]` (cloud via BS m).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OffloadDecision {
    pub a: Vec<Vec<bool>>,
    pub b: Vec<Vec<bool>>,
}

impl OffloadDecision {
    pub fn all_local(num_bs: usize, num_ut: usize) -> Self {
        Self { a: vec![vec![false; num_ut]; num_bs], b: vec![vec![false; num_ut]; num_bs] }
    }

    pub fn from_modes(num_bs: usize, modes: &[Mode]) -> Self {
        let mut dec = Self::all_local(num_bs, modes.len());
        for (i, mode) in modes.iter().enumerate() {
            match *mode {
                Mode::Local => {}
                Mode::Mec(m) => dec.a[m][i] = true,
                Mode::Cloud(m) => dec.b[m][i] = true,
            }
        }
        dec
    }

    pub fn num_bs(&self) -> usize {
        self.a.len()
    }

    pub fn num_ut(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    /// Mode of UT `i`; errors if more than one variable is set for it.
    pub fn mode(&self, i: usize) -> Result<Mode> {
        let mut mode = Mode::Local;
        let mut count = 0;
        for m in 0..self.num_bs() {
            if self.a[m][i] {
                mode = Mode::Mec(m);
                count += 1;
            }
            if self.b[m][i] {
                mode = Mode::Cloud(m);
                count += 1;
            }
        }
        if count > 1 {
            return Err(IsccError::Precondition(format!("UT {i} selects {count} computation modes")));
        }
        Ok(mode)
    }

    pub fn modes(&self) -> Result<Vec<Mode>> {
        (0..self.num_ut()).map(|i| self.mode(i)).collect()
    }

    pub fn check_shape(&self, s: &Scenario) -> Result<()> {
        let rows_ok = |v: &Vec<Vec<bool>>| v.len() == s.num_bs && v.iter().all(|r| r.len() == s.num_ut);
        if !rows_ok(&self.a) || !rows_ok(&self.b) {
            return Err(IsccError::Dimension(format!(
                "offloading decision must be {}x{}",
                s.num_bs, s.num_ut
            )));
        }
        Ok(())
    }

    /// MEC load `Σ_i a[m][i] f_M` at BS `m`.
    pub fn mec_load(&self, m: usize, cfg: &SystemConfig) -> f64 {
        self.a[m].iter().filter(|&&x| x).count() as f64 * cfg.f_M
    }

    pub fn num_cloud(&self) -> usize {
        self.b.iter().flatten().filter(|&&x| x).count()
    }
}

/// Per-UT latency figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub mode: Mode,
    pub t_local: f64,
    /// MEC time through the serving BS (the best-rate BS for local UTs).
    pub t_mec: f64,
    pub t_cloud: f64,
    pub t_total: f64,
    /// Uplink rate to the serving BS, bits/s.
    pub rate: f64,
}

/// Interference-plus-noise covariance `N_{m,i}` seen at BS `m` when decoding UT `i`.
pub fn interference_covariance(w: &BeamformingSet, s: &Scenario, m: usize, i: usize, cfg: &SystemConfig) -> CMatrix {
    let n = s.bs_antennas;
    let mut cov = CMatrix::identity(n, n) * C64::new(cfg.sigma_c2(), 0.0);
    for l in (0..s.num_ut).filter(|&l| l != i) {
        let v = s.h[m][l].adjoint() * &w.w[l];
        cov += &v * v.adjoint();
    }
    cov
}

fn check_indices(w: &BeamformingSet, s: &Scenario, m: usize, i: usize) -> Result<()> {
    w.check_shape(s)?;
    if m >= s.num_bs || i >= s.num_ut {
        return Err(IsccError::Dimension(format!("pair ({m}, {i}) out of range")));
    }
    Ok(())
}

/// Uplink rate `B log2 det(I + Hᴴ w wᴴ H N⁻¹)` from UT `i` to BS `m`, bits/s.
pub fn uplink_rate(w: &BeamformingSet, s: &Scenario, m: usize, i: usize, cfg: &SystemConfig) -> Result<f64> {
    check_indices(w, s, m, i)?;
    let cov = interference_covariance(w, s, m, i, cfg);
    let v = s.h[m][i].adjoint() * &w.w[i];
    let with_signal = &cov + &v * v.adjoint();
    // det(I + v vᴴ N⁻¹) = det(N + v vᴴ) / det(N)
    let num = ln_det_hpd(&with_signal).ok_or_else(|| IsccError::Solver("signal covariance not PD".into()))?;
    let den = ln_det_hpd(&cov).ok_or_else(|| IsccError::Solver("interference covariance not PD".into()))?;
    Ok((cfg.B * (num - den) / std::f64::consts::LN_2).max(0.0))
}

/// Same rate through the rank-one form `B log2(1 + wᴴ H N⁻¹ Hᴴ w)`.
pub fn uplink_rate_rank_one(w: &BeamformingSet, s: &Scenario, m: usize, i: usize, cfg: &SystemConfig) -> Result<f64> {
    check_indices(w, s, m, i)?;
    let cov = interference_covariance(w, s, m, i, cfg);
    let v = s.h[m][i].adjoint() * &w.w[i];
    let x = solve_hpd(&cov, &v).ok_or_else(|| IsccError::Solver("interference covariance not PD".into()))?;
    Ok(cfg.B * (1.0 + v.dotc(&x).re.max(0.0)).log2())
}

/// `A(θ) = a*(θ) aᴴ(θ)`.
pub fn echo_response(theta: f64, cfg: &SystemConfig) -> CMatrix {
    let a = steering_vector(theta, cfg.K, cfg.antenna_spacing_over_wavelength);
    a.conjugate() * a.adjoint()
}

/// Echo SINR at UT `i` (linear).
pub fn sensing_sinr(w: &BeamformingSet, s: &Scenario, i: usize, cfg: &SystemConfig) -> Result<f64> {
    w.check_shape(s)?;
    let (num, den) = sensing_terms(w, s, i, cfg);
    Ok(num / den)
}

/// Numerator `α² tr(A w wᴴ Aᴴ)` and denominator `Σ_l tr(Ĥᴴ w_l w_lᴴ Ĥ) + σ_r²` of the echo SINR.
pub fn sensing_terms(w: &BeamformingSet, s: &Scenario, i: usize, cfg: &SystemConfig) -> (f64, f64) {
    let a = echo_response(s.theta[i], cfg);
    let num = s.alpha[i].powi(2) * norm_sqr(&(&a * &w.w[i]));
    let interference: f64 = (0..s.num_ut)
        .filter(|&l| l != i)
        .map(|l| norm_sqr(&(s.hhat(l, i).adjoint() * &w.w[l])))
        .sum();
    (num, interference + cfg.sigma_r2())
}

/// Local execution time `β D / f_L`.
pub fn exec_time_local(cfg: &SystemConfig) -> f64 {
    cfg.beta * cfg.data_bits() / cfg.f_L
}

fn upload_time(rate: f64, cfg: &SystemConfig) -> f64 {
    if rate > 0.0 {
        cfg.data_bits() / rate
    } else {
        // zero rate: the task never arrives
        f64::INFINITY
    }
}

/// MEC execution time `β D / f_M + D / R`; infinite when `rate == 0`.
pub fn exec_time_mec(rate: f64, cfg: &SystemConfig) -> f64 {
    cfg.beta * cfg.data_bits() / cfg.f_M + upload_time(rate, cfg)
}

/// Cloud execution time `β D / f_C + D / R + D / r_c`; infinite when `rate == 0`.
pub fn exec_time_cloud(rate: f64, cfg: &SystemConfig) -> f64 {
    let d = cfg.data_bits();
    cfg.beta * d / cfg.f_C + upload_time(rate, cfg) + d / cfg.r_c
}

/// Power drawn by UT `i` under the decision.
pub fn power(w: &BeamformingSet, dec: &OffloadDecision, i: usize, cfg: &SystemConfig) -> Result<f64> {
    let tx = w.power(i);
    Ok(match dec.mode(i)? {
        Mode::Local => tx + cfg.local_compute_power(),
        Mode::Mec(_) | Mode::Cloud(_) => tx,
    })
}

/// Power budget left for transmission under `mode`.
pub fn tx_power_budget(mode: Mode, cfg: &SystemConfig) -> f64 {
    match mode {
        Mode::Local => cfg.P_c - cfg.local_compute_power(),
        _ => cfg.P_c,
    }
}

/// Total execution time and per-UT breakdown.
pub fn total_time(
    w: &BeamformingSet,
    dec: &OffloadDecision,
    s: &Scenario,
    cfg: &SystemConfig,
) -> Result<(f64, Vec<LatencyBreakdown>)> {
    w.check_shape(s)?;
    dec.check_shape(s)?;
    let modes = dec.modes()?;
    let t_local = exec_time_local(cfg);
    let mut total = 0.0;
    let mut per_ut = Vec::with_capacity(s.num_ut);
    for (i, mode) in modes.into_iter().enumerate() {
        let rate = match mode.bs() {
            Some(m) => uplink_rate(w, s, m, i, cfg)?,
            None => (0..s.num_bs)
                .map(|m| uplink_rate(w, s, m, i, cfg))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max),
        };
        let t_mec = exec_time_mec(rate, cfg);
        let t_cloud = exec_time_cloud(rate, cfg);
        let t_total = match mode {
            Mode::Local => t_local,
            Mode::Mec(_) => t_mec,
            Mode::Cloud(_) => t_cloud,
        };
        total += t_total;
        per_ut.push(LatencyBreakdown { mode, t_local, t_mec, t_cloud, t_total, rate });
    }
    Ok((total, per_ut))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenario;

    fn scalar_scenario(h: f64) -> (Scenario, SystemConfig) {
        let cfg = SystemConfig {
            M: 1,
            L: 1,
            N: 1,
            K: 1,
            B: 1.0,
            noise_density_c: 1.0,
            noise_density_r: 1.0,
            ..Default::default()
        };
        let mut s = generate_scenario(&cfg, 0);
        s.h[0][0] = CMatrix::from_element(1, 1, C64::new(h, 0.0));
        (s, cfg)
    }

    fn small_cfg() -> SystemConfig {
        SystemConfig { M: 2, L: 3, N: 4, K: 3, ..Default::default() }
    }

    fn random_w(s: &Scenario, seed: u64) -> BeamformingSet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        BeamformingSet::new(
            (0..s.num_ut)
                .map(|_| CVector::from_fn(s.ut_antennas, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
                .collect(),
        )
    }

    #[test]
    fn zero_beamformer_has_zero_rate() {
        let cfg = small_cfg();
        let s = generate_scenario(&cfg, 3);
        let mut w = random_w(&s, 1);
        w.w[1] = CVector::zeros(cfg.K);
        assert_eq!(uplink_rate(&w, &s, 0, 1, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn scalar_rate_is_shannon() {
        let (s, cfg) = scalar_scenario(1.0);
        let p: f64 = 3.0;
        let w = BeamformingSet::new(vec![CVector::from_element(1, C64::new(p.sqrt(), 0.0))]);
        let r = uplink_rate(&w, &s, 0, 0, &cfg).unwrap();
        assert!((r - (1.0 + p).log2()).abs() < 1e-12);
    }

    #[test]
    fn determinant_and_rank_one_forms_agree() {
        let cfg = SystemConfig { M: 1, L: 2, N: 2, K: 2, ..Default::default() };
        for seed in 0..10 {
            let s = generate_scenario(&cfg, seed);
            let w = random_w(&s, seed + 100);
            for i in 0..2 {
                let r1 = uplink_rate(&w, &s, 0, i, &cfg).unwrap();
                let r2 = uplink_rate_rank_one(&w, &s, 0, i, &cfg).unwrap();
                assert!((r1 - r2).abs() <= 1e-9 * r2, "{r1} vs {r2}");
            }
        }
    }

    #[test]
    fn rate_rejects_bad_shapes() {
        let cfg = small_cfg();
        let s = generate_scenario(&cfg, 3);
        let w = BeamformingSet::zeros(2, cfg.K);
        assert!(matches!(uplink_rate(&w, &s, 0, 0, &cfg), Err(IsccError::Dimension(_))));
        let w = BeamformingSet::zeros(3, cfg.K);
        assert!(uplink_rate(&w, &s, 5, 0, &cfg).is_err());
    }

    #[test]
    fn mrs_single_ut_sinr() {
        let cfg = SystemConfig { M: 1, L: 1, N: 4, K: 6, ..Default::default() };
        let s = generate_scenario(&cfg, 9);
        let a = steering_vector(s.theta[0], cfg.K, cfg.antenna_spacing_over_wavelength);
        let p: f64 = 0.7;
        let w = BeamformingSet::new(vec![&a * C64::new(p.sqrt() / (cfg.K as f64).sqrt(), 0.0)]);
        let sinr = sensing_sinr(&w, &s, 0, &cfg).unwrap();
        let k = cfg.K as f64;
        let want = s.alpha[0].powi(2) * k * k * p / cfg.sigma_r2();
        assert!((sinr - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn sinr_numerator_is_quadratic_in_own_beam() {
        let cfg = small_cfg();
        let s = generate_scenario(&cfg, 5);
        let w = random_w(&s, 2);
        let (n0, d0) = sensing_terms(&w, &s, 1, &cfg);
        let mut w2 = w.clone();
        w2.w[1] *= C64::new(1.7, 0.0);
        let (n1, d1) = sensing_terms(&w2, &s, 1, &cfg);
        assert!((n1 - 1.7f64.powi(2) * n0).abs() <= 1e-12 * n1);
        assert_eq!(d0, d1);
        let mut w3 = w.clone();
        w3.w[1] = CVector::zeros(cfg.K);
        assert_eq!(sensing_sinr(&w3, &s, 1, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn latency_formulas() {
        let cfg = SystemConfig { beta: 40.0, f_L: 0.1e9, f_M: 3e9, kappa: 1e6 / 10e6, B: 10e6, ..Default::default() };
        assert!((cfg.data_bits() - 1e6).abs() < 1e-6);
        assert!((exec_time_local(&cfg) - 0.4).abs() < 1e-12);
        assert!((exec_time_mec(1e8, &cfg) - (40e6 / 3e9 + 0.01)).abs() < 1e-12);
        assert!(exec_time_mec(0.0, &cfg).is_infinite());
        assert!(exec_time_cloud(0.0, &cfg) > 1e300);
        let fast = SystemConfig { f_C: f64::INFINITY, r_c: f64::INFINITY, ..cfg.clone() };
        assert!((exec_time_cloud(1e8, &fast) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn power_modes() {
        let cfg = SystemConfig { M: 1, L: 1, K: 2, epsilon: 1e-28, f_L: 1e8, ..Default::default() };
        let mut w = BeamformingSet::zeros(1, 2);
        let local = OffloadDecision::all_local(1, 1);
        assert!((power(&w, &local, 0, &cfg).unwrap() - 1e-4).abs() < 1e-18);
        w.w[0][0] = C64::new(0.6, 0.8);
        let mec = OffloadDecision::from_modes(1, &[Mode::Mec(0)]);
        assert!((power(&w, &mec, 0, &cfg).unwrap() - 1.0).abs() < 1e-15);
        let diff = power(&w, &local, 0, &cfg).unwrap() - power(&w, &mec, 0, &cfg).unwrap();
        assert_eq!(diff, (1.0 + cfg.local_compute_power()) - 1.0);
    }

    #[test]
    fn total_time_structure() {
        let cfg = small_cfg();
        let s = generate_scenario(&cfg, 4);
        let w = random_w(&s, 8);
        let local = OffloadDecision::all_local(2, 3);
        let (t, per) = total_time(&w, &local, &s, &cfg).unwrap();
        assert!((t - 3.0 * exec_time_local(&cfg)).abs() < 1e-12);
        assert!(per.iter().all(|b| b.mode == Mode::Local));

        let one = OffloadDecision::from_modes(2, &[Mode::Local, Mode::Mec(1), Mode::Local]);
        let (t1, per1) = total_time(&w, &one, &s, &cfg).unwrap();
        let rate = uplink_rate(&w, &s, 1, 1, &cfg).unwrap();
        assert!((t1 - (2.0 * exec_time_local(&cfg) + exec_time_mec(rate, &cfg))).abs() < 1e-12);
        assert_eq!(per1[1].t_total, per1[1].t_mec);

        let mut bad = local.clone();
        bad.a[0][0] = true;
        bad.b[1][0] = true;
        assert!(matches!(total_time(&w, &bad, &s, &cfg), Err(IsccError::Precondition(_))));
    }
}
