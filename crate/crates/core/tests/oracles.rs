//! Checks against independent oracles: vertex enumeration, eigen-decomposition,
//! relabelling symmetry and Monte-Carlo channel statistics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iscc::cvxcore::{solve_lp, LinearProgram, SolverStatus};
use iscc::fp_beamforming::{init_beamformers, inner_fp_loop, FpOptions, OffloadPairSet};
use iscc::linalg::dominant_left_singular;
use iscc::metrics::{total_time, uplink_rate};
use iscc::scenario::generate_scenario;
use iscc::{BeamformingSet, Mode, OffloadDecision, Scenario, SystemConfig};

/// Best vertex of a bounded LP by brute force over all n-subsets of active constraints.
fn vertex_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.a_ub.iter().cloned().zip(lp.b_ub.iter().copied()).collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), hi));
        rows.push((e.iter().map(|v| -v).collect(), -lo));
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| rows[idx[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[idx[r]].1);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if x.iter().all(|v| v.is_finite()) && lp.violation(&x) <= 1e-9 {
                let obj = lp.objective(&x);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < rows.len() - n + k {
                break;
            }
        }
        idx[k] += 1;
        for j in k + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut infeasible = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(0..=4);
        let lp = LinearProgram {
            cost: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            a_ub: (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            b_ub: (0..m).map(|_| rng.random_range(-0.5..1.0)).collect(),
            bounds: (0..n)
                .map(|_| {
                    let lo = rng.random_range(-1.0..0.5);
                    (lo, lo + rng.random_range(0.1..2.0))
                })
                .collect(),
        };
        let (x, rep) = solve_lp(&lp);
        match vertex_optimum(&lp) {
            Some(best) => {
                assert_eq!(rep.status, SolverStatus::Optimal, "{lp:?}");
                assert!(lp.violation(&x) <= 1e-9);
                assert!((lp.objective(&x) - best).abs() <= 1e-8 * (1.0 + best.abs()), "{} vs {best}", lp.objective(&x));
            }
            None => {
                infeasible += 1;
                assert_eq!(rep.status, SolverStatus::Infeasible, "{lp:?}");
            }
        }
    }
    assert!(infeasible < 200);
}

#[test]
fn single_ut_rate_reaches_eigen_optimum() {
    for seed in 0..5 {
        let cfg = SystemConfig { M: 1, L: 1, N: 6, K: 4, Gamma_th: 1e-3, ..Default::default() };
        let s = generate_scenario(&cfg, seed);
        let pairs = OffloadPairSet::new(vec![(0, 0)]).unwrap();
        let w0 = init_beamformers(&s, &pairs, &cfg).unwrap();
        let opts = FpOptions { tol: 1e-9, max_iter: 60, ..Default::default() };
        let res = inner_fp_loop(&s, &pairs, &w0, &cfg, &opts).unwrap();
        let (_, sigma) = dominant_left_singular(&s.h[0][0]);
        let best = cfg.B * (1.0 + cfg.P_c * sigma * sigma / cfg.sigma_c2()).log2();
        let got = uplink_rate(&res.w, &s, 0, 0, &cfg).unwrap();
        assert!(got <= best * (1.0 + 1e-9));
        assert!(got >= best * (1.0 - 1e-4), "seed {seed}: {got} vs {best}");
    }
}

fn permute(s: &Scenario, perm: &[usize]) -> Scenario {
    let mut p = s.clone();
    for m in 0..s.num_bs {
        p.h[m] = perm.iter().map(|&i| s.h[m][i].clone()).collect();
    }
    p.hhat = perm.iter().map(|&l| perm.iter().map(|&i| s.hhat[l][i].clone()).collect()).collect();
    let pick = |v: &Vec<f64>| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    p.theta = pick(&s.theta);
    p.dist_r = pick(&s.dist_r);
    p.rcs = pick(&s.rcs);
    p.alpha = pick(&s.alpha);
    p.ut_positions = perm.iter().map(|&i| s.ut_positions[i]).collect();
    p.target_positions = perm.iter().map(|&i| s.target_positions[i]).collect();
    p
}

#[test]
fn latency_invariant_under_relabelling() {
    let cfg = SystemConfig { M: 2, L: 4, N: 5, K: 3, ..Default::default() };
    let s = generate_scenario(&cfg, 9);
    let w = init_beamformers(&s, &OffloadPairSet::default(), &cfg).unwrap();
    let modes = [Mode::Mec(1), Mode::Local, Mode::Cloud(0), Mode::Mec(0)];
    let dec = OffloadDecision::from_modes(2, &modes);
    let perm = [2, 0, 3, 1];
    let sp = permute(&s, &perm);
    let wp = BeamformingSet::new(perm.iter().map(|&i| w.w[i].clone()).collect());
    let mp: Vec<Mode> = perm.iter().map(|&i| modes[i]).collect();
    let (a, _) = total_time(&w, &dec, &s, &cfg).unwrap();
    let (b, _) = total_time(&wp, &OffloadDecision::from_modes(2, &mp), &sp, &cfg).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
}

fn mean_channel_power(cfg: &SystemConfig, seeds: u64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for seed in 0..seeds {
        let s = generate_scenario(cfg, seed);
        for hm in &s.h {
            for h in hm {
                sum += h.iter().map(|z| z.norm_sqr()).sum::<f64>();
                count += h.len();
            }
        }
    }
    sum / count as f64
}

#[test]
fn channel_variance_matches_path_gain() {
    let cfg = SystemConfig { M: 4, L: 10, N: 16, K: 12, pathloss_exponent: 0.0, ..Default::default() };
    let v = mean_channel_power(&cfg, 5);
    assert!((v / cfg.rho - 1.0).abs() <= 0.02, "{v} vs {}", cfg.rho);
    let doubled = SystemConfig { rho: 2.0 * cfg.rho, ..cfg.clone() };
    let v2 = mean_channel_power(&doubled, 5);
    assert!((v2 / v - 2.0).abs() <= 1e-9, "same draws scale exactly: {v2} vs {v}");
}
