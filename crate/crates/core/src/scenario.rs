//! System parameters, random scenario generation and the JSON file format.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{IsccError, Result};
use crate::linalg::{CMatrix, CVector, C64};

/// Scalar parameters of the three-tier system.
///
/// JSON field names follow the model's symbols (`M`, `L`, `f_L`, `Gamma_th`, ...).
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of base stations.
    pub M: usize,
    /// Number of user terminals.
    pub L: usize,
    /// BS receive antennas.
    pub N: usize,
    /// UT antennas.
    pub K: usize,
    /// Data streams per UT; only 1 is supported.
    pub d: usize,
    /// Signal bandwidth, Hz.
    pub B: f64,
    /// Uplink noise PSD, W/Hz.
    pub noise_density_c: f64,
    /// Echo receiver noise PSD, W/Hz.
    pub noise_density_r: f64,
    /// CPU cycles per bit.
    pub beta: f64,
    /// Chip energy coefficient, W·s³/cycles³.
    pub epsilon: f64,
    pub f_L: f64,
    pub f_M: f64,
    pub f_C: f64,
    /// MEC compute capacity per BS, cycles/s.
    pub C_m: f64,
    /// BS-to-cloud backhaul rate, bits/s.
    pub r_c: f64,
    /// Per-UT power budget, W.
    pub P_c: f64,
    /// Echo SINR threshold, linear.
    pub Gamma_th: f64,
    /// Sensing data volume per Hz of bandwidth, bits/Hz.
    pub kappa: f64,
    /// Path loss at 1 m, linear.
    pub rho: f64,
    pub pathloss_exponent: f64,
    /// Side of the square deployment area, m.
    pub area_side: f64,
    /// Maximum UT-to-target distance, m.
    pub target_range_max: f64,
    pub antenna_spacing_over_wavelength: f64,
    /// Radar cross-section of every sensing target, m².
    #[serde(default = "default_rcs")]
    pub rcs: f64,
}

fn default_rcs() -> f64 {
    100.0
}

impl Default for SystemConfig {
    fn default() -> Self {
        let f_m = 3e9;
        Self {
            M: 3,
            L: 9,
            N: 16,
            K: 12,
            d: 1,
            B: 10e6,
            // -174 dBm/Hz
            noise_density_c: 10f64.powf(-20.4),
            noise_density_r: 10f64.powf(-20.4),
            beta: 40.0,
            epsilon: 1e-28,
            f_L: 0.1e9,
            f_M: f_m,
            f_C: 10e9,
            C_m: 2.0 * f_m,
            r_c: 50e6,
            P_c: 1.0,
            Gamma_th: 1.0,
            kappa: 0.032,
            rho: 1e-3,
            pathloss_exponent: 2.5,
            area_side: 500.0,
            target_range_max: 50.0,
            antenna_spacing_over_wavelength: 0.5,
            rcs: default_rcs(),
        }
    }
}

impl SystemConfig {
    /// Uplink noise power `σ_c²`, W.
    pub fn sigma_c2(&self) -> f64 {
        self.noise_density_c * self.B
    }

    /// Echo noise power `σ_r²`, W.
    pub fn sigma_r2(&self) -> f64 {
        self.noise_density_r * self.B
    }

    /// Sensing data volume per task, bits.
    pub fn data_bits(&self) -> f64 {
        self.kappa * self.B
    }

    /// Power drawn by local computation, `ε f_L³`.
    pub fn local_compute_power(&self) -> f64 {
        self.epsilon * self.f_L.powi(3)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [("M", self.M), ("L", self.L), ("N", self.N), ("K", self.K)];
        for (name, v) in counts {
            if v == 0 {
                return Err(IsccError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.d != 1 {
            return Err(IsccError::Config("only d = 1 data stream is supported".into()));
        }
        let positive = [
            ("B", self.B),
            ("noise_density_c", self.noise_density_c),
            ("noise_density_r", self.noise_density_r),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
            ("f_L", self.f_L),
            ("f_M", self.f_M),
            ("f_C", self.f_C),
            ("C_m", self.C_m),
            ("r_c", self.r_c),
            ("P_c", self.P_c),
            ("Gamma_th", self.Gamma_th),
            ("kappa", self.kappa),
            ("rho", self.rho),
            ("area_side", self.area_side),
            ("target_range_max", self.target_range_max),
            ("antenna_spacing_over_wavelength", self.antenna_spacing_over_wavelength),
            ("rcs", self.rcs),
        ];
        for (name, v) in positive {
            // f_C and r_c may be +inf to model an unconstrained cloud
            if v.is_nan() || v <= 0.0 {
                return Err(IsccError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pathloss_exponent >= 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(IsccError::Config("pathloss_exponent must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: SystemConfig = read_json(path.as_ref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("config serializes"))?;
        Ok(())
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    parse_json(&text)
}

pub(crate) fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        IsccError::parse(path, e.into_inner().to_string())
    })
}

/// Uniform linear array response `a(θ)`, element `k` equal to
/// `exp(j 2π k (Δ/λ) sin θ)`.
pub fn steering_vector(theta: f64, k: usize, spacing_ratio: f64) -> CVector {
    let phase = 2.0 * PI * spacing_ratio * theta.sin();
    CVector::from_fn(k, |r, _| C64::from_polar(1.0, phase * r as f64))
}

/// One random draw of the system geometry and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub num_bs: usize,
    pub num_ut: usize,
    pub bs_antennas: usize,
    pub ut_antennas: usize,
    /// `h[m][i]`: K×N channel from UT i to BS m.
    pub h: Vec<Vec<CMatrix>>,
    /// `hhat[l][i]`: K×K interference channel from UT l to UT i, `None` on the diagonal.
    pub hhat: Vec<Vec<Option<CMatrix>>>,
    pub theta: Vec<f64>,
    pub dist_r: Vec<f64>,
    pub rcs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub bs_positions: Vec<[f64; 2]>,
    pub ut_positions: Vec<[f64; 2]>,
    pub target_positions: Vec<[f64; 2]>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn cn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, variance: f64) -> CMatrix {
    let s = (variance / 2.0).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

/// Echo amplitude `α = sqrt(ρ/d² · ζ/d²)`.
pub fn echo_gain(rho: f64, rcs: f64, dist_r: f64) -> f64 {
    (rho * rcs).sqrt() / (dist_r * dist_r)
}

/// Large-scale gain `ρ d^{-η}`; distances under 1 m are clamped to the reference distance.
pub fn large_scale_gain(cfg: &SystemConfig, d: f64) -> f64 {
    cfg.rho * d.max(1.0).powf(-cfg.pathloss_exponent)
}

/// Draw a scenario. Deterministic in `(cfg, seed)`.
pub fn generate_scenario(cfg: &SystemConfig, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = cfg.area_side;
    let point = |rng: &mut ChaCha8Rng| [rng.random::<f64>() * side, rng.random::<f64>() * side];

    let bs_positions: Vec<_> = (0..cfg.M).map(|_| point(&mut rng)).collect();
    let ut_positions: Vec<_> = (0..cfg.L).map(|_| point(&mut rng)).collect();

    let mut theta = Vec::with_capacity(cfg.L);
    let mut dist_r = Vec::with_capacity(cfg.L);
    let mut target_positions = Vec::with_capacity(cfg.L);
    for ut in &ut_positions {
        // 1 - u lies in (0, 1]
        let d = cfg.target_range_max * (1.0 - rng.random::<f64>());
        let bearing = (rng.random::<f64>() * 2.0 - 1.0) * PI;
        target_positions.push([ut[0] + d * bearing.cos(), ut[1] + d * bearing.sin()]);
        theta.push(bearing);
        dist_r.push(d);
    }
    let rcs = vec![cfg.rcs; cfg.L];
    let alpha = dist_r.iter().zip(&rcs).map(|(&d, &z)| echo_gain(cfg.rho, z, d)).collect();

    let h = (0..cfg.M)
        .map(|m| {
            (0..cfg.L)
                .map(|i| {
                    let g = large_scale_gain(cfg, dist(ut_positions[i], bs_positions[m]));
                    cn_matrix(&mut rng, cfg.K, cfg.N, g)
                })
                .collect()
        })
        .collect();
    let hhat = (0..cfg.L)
        .map(|l| {
            (0..cfg.L)
                .map(|i| {
                    (l != i).then(|| {
                        let g = large_scale_gain(cfg, dist(ut_positions[l], ut_positions[i]));
                        cn_matrix(&mut rng, cfg.K, cfg.K, g)
                    })
                })
                .collect()
        })
        .collect();

    Scenario {
        num_bs: cfg.M,
        num_ut: cfg.L,
        bs_antennas: cfg.N,
        ut_antennas: cfg.K,
        h,
        hhat,
        theta,
        dist_r,
        rcs,
        alpha,
        bs_positions,
        ut_positions,
        target_positions,
    }
}

impl Scenario {
    /// Interference channel from UT `l` to UT `i`. Panics for `l == i`.
    pub fn hhat(&self, l: usize, i: usize) -> &CMatrix {
        self.hhat[l][i]
            .as_ref()
            .unwrap_or_else(|| panic!("no self-interference channel for UT {l}"))
    }

    /// Check that the scenario matches the dimensions declared by `cfg`.
    pub fn check_against(&self, cfg: &SystemConfig) -> Result<()> {
        if (self.num_bs, self.num_ut, self.bs_antennas, self.ut_antennas) != (cfg.M, cfg.L, cfg.N, cfg.K) {
            return Err(IsccError::Dimension(format!(
                "scenario is M={} L={} N={} K={}, config is M={} L={} N={} K={}",
                self.num_bs, self.num_ut, self.bs_antennas, self.ut_antennas, cfg.M, cfg.L, cfg.N, cfg.K
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&ScenarioFile::from(self)).expect("scenario serializes");
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ScenarioFile = read_json(path.as_ref())?;
        file.try_into()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = parse_json(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    s.save(path)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    Scenario::load(path)
}

type JsonMatrix = Vec<Vec<[f64; 2]>>;

#[allow(non_snake_case)]
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    M: usize,
    L: usize,
    N: usize,
    K: usize,
    H: Vec<Vec<JsonMatrix>>,
    Hhat: Vec<Vec<Option<JsonMatrix>>>,
    theta: Vec<f64>,
    dist_r: Vec<f64>,
    rcs: Vec<f64>,
    alpha: Vec<f64>,
    bs_positions: Vec<[f64; 2]>,
    ut_positions: Vec<[f64; 2]>,
    target_positions: Vec<[f64; 2]>,
}

fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn matrix_from_json(field: &str, m: &JsonMatrix, rows: usize, cols: usize) -> Result<CMatrix> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(IsccError::parse(field, format!("expected a {rows}x{cols} matrix")));
    }
    Ok(CMatrix::from_fn(rows, cols, |r, c| C64::new(m[r][c][0], m[r][c][1])))
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            M: s.num_bs,
            L: s.num_ut,
            N: s.bs_antennas,
            K: s.ut_antennas,
            H: s.h.iter().map(|row| row.iter().map(matrix_to_json).collect()).collect(),
            Hhat: s
                .hhat
                .iter()
                .map(|row| row.iter().map(|m| m.as_ref().map(matrix_to_json)).collect())
                .collect(),
            theta: s.theta.clone(),
            dist_r: s.dist_r.clone(),
            rcs: s.rcs.clone(),
            alpha: s.alpha.clone(),
            bs_positions: s.bs_positions.clone(),
            ut_positions: s.ut_positions.clone(),
            target_positions: s.target_positions.clone(),
        }
    }
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = IsccError;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let (m, l, n, k) = (f.M, f.L, f.N, f.K);
        if m == 0 || l == 0 || n == 0 || k == 0 {
            return Err(IsccError::parse("M/L/N/K", "all dimensions must be at least 1"));
        }
        if f.H.len() != m {
            return Err(IsccError::parse("H", format!("expected {m} rows, got {}", f.H.len())));
        }
        let mut h = Vec::with_capacity(m);
        for (mi, row) in f.H.iter().enumerate() {
            if row.len() != l {
                return Err(IsccError::parse(format!("H[{mi}]"), format!("expected {l} matrices")));
            }
            let mats = row
                .iter()
                .enumerate()
                .map(|(i, mat)| matrix_from_json(&format!("H[{mi}][{i}]"), mat, k, n))
                .collect::<Result<Vec<_>>>()?;
            h.push(mats);
        }
        if f.Hhat.len() != l {
            return Err(IsccError::parse("Hhat", format!("expected {l} rows, got {}", f.Hhat.len())));
        }
        let mut hhat = Vec::with_capacity(l);
        for (li, row) in f.Hhat.iter().enumerate() {
            if row.len() != l {
                return Err(IsccError::parse(format!("Hhat[{li}]"), format!("expected {l} entries")));
            }
            let mut out = Vec::with_capacity(l);
            for (i, mat) in row.iter().enumerate() {
                let field = format!("Hhat[{li}][{i}]");
                match (li == i, mat) {
                    (true, None) => out.push(None),
                    (true, Some(_)) => return Err(IsccError::parse(field, "diagonal entry must be null")),
                    (false, None) => return Err(IsccError::parse(field, "missing interference channel")),
                    (false, Some(mat)) => out.push(Some(matrix_from_json(&field, mat, k, k)?)),
                }
            }
            hhat.push(out);
        }
        let check_len = |name: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(IsccError::parse(name, format!("expected length {want}, got {len}")))
            }
        };
        check_len("theta", f.theta.len(), l)?;
        check_len("dist_r", f.dist_r.len(), l)?;
        check_len("rcs", f.rcs.len(), l)?;
        check_len("alpha", f.alpha.len(), l)?;
        check_len("bs_positions", f.bs_positions.len(), m)?;
        check_len("ut_positions", f.ut_positions.len(), l)?;
        check_len("target_positions", f.target_positions.len(), l)?;
        if let Some(i) = f.alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(IsccError::parse(format!("alpha[{i}]"), "must be positive"));
        }
        if let Some(i) = f.dist_r.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(IsccError::parse(format!("dist_r[{i}]"), "must be positive"));
        }
        Ok(Scenario {
            num_bs: m,
            num_ut: l,
            bs_antennas: n,
            ut_antennas: k,
            h,
            hhat,
            theta: f.theta,
            dist_r: f.dist_r,
            rcs: f.rcs,
            alpha: f.alpha,
            bs_positions: f.bs_positions,
            ut_positions: f.ut_positions,
            target_positions: f.target_positions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;

    #[test]
    fn steering_broadside_is_all_ones() {
        let a = steering_vector(0.0, 4, 0.5);
        for z in a.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let a = steering_vector(PI / 2.0, 4, 0.5);
        let want = [1.0, -1.0, 1.0, -1.0];
        for (z, w) in a.iter().zip(want) {
            assert!((z - C64::new(w, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_thirty_degrees() {
        let a = steering_vector(PI / 6.0, 12, 0.5);
        assert!((norm_sqr(&a) - 12.0).abs() < 1e-10);
        // exp(jπ · sin(π/6) · 2) = exp(jπ) = -1
        assert!((a[2] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn paper_scale_dimensions() {
        let cfg = SystemConfig { M: 3, L: 9, K: 12, N: 16, ..Default::default() };
        let s = generate_scenario(&cfg, 7);
        assert_eq!(s.h.len(), 3);
        assert_eq!(s.h.iter().map(Vec::len).sum::<usize>(), 27);
        for m in s.h.iter().flatten() {
            assert_eq!(m.shape(), (12, 16));
        }
        for l in 0..9 {
            for i in 0..9 {
                assert_eq!(s.hhat[l][i].is_none(), l == i);
                if l != i {
                    assert_eq!(s.hhat(l, i).shape(), (12, 12));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SystemConfig::default();
        assert_eq!(generate_scenario(&cfg, 11), generate_scenario(&cfg, 11));
        assert_ne!(generate_scenario(&cfg, 11), generate_scenario(&cfg, 12));
    }

    #[test]
    fn target_geometry_invariants() {
        let cfg = SystemConfig::default();
        for seed in 0..20 {
            let s = generate_scenario(&cfg, seed);
            for i in 0..cfg.L {
                assert!(s.dist_r[i] > 0.0 && s.dist_r[i] <= cfg.target_range_max);
                assert!(s.alpha[i] > 0.0);
                let d = dist(s.ut_positions[i], s.target_positions[i]);
                assert!((d - s.dist_r[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = SystemConfig::default();
        cfg.K = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::default();
        cfg.Gamma_th = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::default();
        cfg.d = 2;
        assert!(cfg.validate().is_err());
        assert!(SystemConfig::default().validate().is_ok());
    }

    #[test]
    fn config_json_uses_symbol_names() {
        let text = serde_json::to_string(&SystemConfig::default()).unwrap();
        for key in ["\"M\"", "\"Gamma_th\"", "\"f_L\"", "\"C_m\"", "\"noise_density_c\""] {
            assert!(text.contains(key), "{key} missing");
        }
    }
}
