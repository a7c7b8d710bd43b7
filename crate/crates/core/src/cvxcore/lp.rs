use super::{SolverReport, SolverStatus};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 20_000;

/// `min cost·x` s.t. `a_ub x <= b_ub`, `lo <= x <= hi` (lower bounds finite).
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest violation of any row or bound at `x` (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let rows = self.a_ub.iter().zip(&self.b_ub).map(|(row, b)| {
            row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b
        });
        let bounds = self.bounds.iter().zip(x).map(|(&(lo, hi), &x)| (lo - x).max(x - hi));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns allowed to enter the basis.
    enterable: Vec<bool>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    MaxIter,
}

impl Tableau {
    fn width(&self) -> usize {
        self.obj.len() - 1
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width();
        self.obj = cost.to_vec();
        self.obj.push(0.0);
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for j in 0..=w {
                    self.obj[j] -= cb * self.rows[r][j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.rows[r][c];
        for j in 0..=w {
            self.rows[r][j] /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (k, row) in self.rows.iter_mut().enumerate() {
            if k != r {
                let f = row[c];
                if f != 0.0 {
                    for j in 0..=w {
                        row[j] -= f * pivot_row[j];
                    }
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for j in 0..=w {
                self.obj[j] -= f * pivot_row[j];
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Bland's rule simplex on the current objective row.
    fn run(&mut self) -> Outcome {
        let w = self.width();
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Outcome::MaxIter;
            }
            let Some(enter) = (0..w).find(|&j| self.enterable[j] && self.obj[j] < -1e-10) else {
                return Outcome::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[w] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Outcome::Unbounded,
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }
}

fn lp_report(lp: &LinearProgram, x: &[f64], status: SolverStatus, pivots: usize) -> SolverReport {
    let v = lp.violation(x);
    SolverReport { status, iterations: pivots, kkt_residual: v, objective: lp.objective(x), max_violation: v }
}

/// Two-phase dense simplex. Returns a basic optimal solution when one exists.
pub fn solve_lp(lp: &LinearProgram) -> (Vec<f64>, SolverReport) {
    let n = lp.num_vars();
    assert_eq!(lp.bounds.len(), n, "one bound pair per variable");
    assert_eq!(lp.a_ub.len(), lp.b_ub.len(), "one rhs per row");
    let lows: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    if lp.bounds.iter().any(|&(lo, hi)| !lo.is_finite() || lo > hi)
        || lp.a_ub.iter().flatten().chain(&lp.b_ub).chain(&lp.cost).any(|v| !v.is_finite())
    {
        let st = if lp.bounds.iter().any(|&(lo, hi)| lo > hi) { SolverStatus::Infeasible } else { SolverStatus::MaxIter };
        return (lows.clone(), lp_report(lp, &lows, st, 0));
    }

    // x = lo + y, y >= 0
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .a_ub
        .iter()
        .zip(&lp.b_ub)
        .map(|(a, &b)| {
            assert_eq!(a.len(), n, "row width");
            let shift: f64 = a.iter().zip(&lows).map(|(a, l)| a * l).sum();
            (a.clone(), b - shift)
        })
        .collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, hi - lo));
        }
    }

    let m = rows.len();
    let n_art = rows.iter().filter(|(_, b)| *b < 0.0).count();
    let width = n + m + n_art;
    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        obj: vec![0.0; width + 1],
        basis: Vec::with_capacity(m),
        enterable: vec![true; width],
        pivots: 0,
    };
    let mut art = n + m;
    for (r, (a, b)) in rows.into_iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        if b >= 0.0 {
            row[..n].copy_from_slice(&a);
            row[n + r] = 1.0;
            row[width] = b;
            tab.basis.push(n + r);
        } else {
            for j in 0..n {
                row[j] = -a[j];
            }
            row[n + r] = -1.0;
            row[art] = 1.0;
            row[width] = -b;
            tab.basis.push(art);
            art += 1;
        }
        tab.rows.push(row);
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for c in phase1.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        tab.set_objective(&phase1);
        if let Outcome::MaxIter = tab.run() {
            let x = lows.clone();
            return (x.clone(), lp_report(lp, &x, SolverStatus::MaxIter, tab.pivots));
        }
        if -tab.obj[width] > 1e-9 {
            return (lows.clone(), lp_report(lp, &lows, SolverStatus::Infeasible, tab.pivots));
        }
        // drive zero-level artificials out of the basis
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(c) = (0..n + m).find(|&c| tab.rows[r][c].abs() > 1e-9) {
                    tab.pivot(r, c);
                }
            }
        }
        for j in n + m..width {
            tab.enterable[j] = false;
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&lp.cost);
    tab.set_objective(&cost);
    let outcome = tab.run();

    let mut x = lows;
    for (r, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            x[bv] += tab.rows[r][width];
        }
    }
    let status = match outcome {
        Outcome::Optimal => SolverStatus::Optimal,
        Outcome::Unbounded => SolverStatus::Unbounded,
        Outcome::MaxIter => SolverStatus::MaxIter,
    };
    let rep = lp_report(lp, &x, status, tab.pivots);
    (x, rep)
}
