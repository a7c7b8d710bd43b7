use nalgebra::{DMatrix, DVector};

use super::{SolverReport, SolverStatus};

/// `xᵀ P x` restricted to the variables `offset..offset + P.nrows()`.
#[derive(Debug, Clone)]
pub struct QuadBlock {
    pub offset: usize,
    /// Symmetric positive semidefinite.
    pub matrix: DMatrix<f64>,
}

/// Convex quadratic `Σ_b x_bᵀ P_b x_b + Σ q·x + r`.
#[derive(Debug, Clone, Default)]
pub struct QuadForm {
    pub blocks: Vec<QuadBlock>,
    /// Linear terms as `(offset, coefficients)`.
    pub linear: Vec<(usize, DVector<f64>)>,
    pub constant: f64,
}

impl QuadForm {
    pub fn constant(r: f64) -> Self {
        Self { constant: r, ..Default::default() }
    }

    pub fn with_block(mut self, offset: usize, matrix: DMatrix<f64>) -> Self {
        self.blocks.push(QuadBlock { offset, matrix });
        self
    }

    pub fn with_linear(mut self, offset: usize, coef: DVector<f64>) -> Self {
        self.linear.push((offset, coef));
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.constant;
        for b in &self.blocks {
            let n = b.matrix.nrows();
            let xb = x.rows(b.offset, n);
            v += xb.dot(&(&b.matrix * xb));
        }
        for (off, q) in &self.linear {
            v += x.rows(*off, q.len()).dot(q);
        }
        v
    }

    /// `g += scale ∇q(x)`.
    fn add_gradient(&self, x: &DVector<f64>, scale: f64, g: &mut DVector<f64>) {
        for b in &self.blocks {
            let n = b.matrix.nrows();
            let pb = &b.matrix * x.rows(b.offset, n);
            let mut dst = g.rows_mut(b.offset, n);
            dst.axpy(2.0 * scale, &pb, 1.0);
        }
        for (off, q) in &self.linear {
            let mut dst = g.rows_mut(*off, q.len());
            dst.axpy(scale, q, 1.0);
        }
    }

    /// `h += scale ∇²q`.
    fn add_hessian(&self, scale: f64, h: &mut DMatrix<f64>) {
        for b in &self.blocks {
            let n = b.matrix.nrows();
            let mut dst = h.view_mut((b.offset, b.offset), (n, n));
            dst.zip_apply(&b.matrix, |d, p| *d += 2.0 * scale * p);
        }
    }
}

/// A smooth convex inequality `f(x) <= 0`.
#[derive(Debug, Clone)]
pub enum Constraint {
    /// `q(x) <= 0`.
    Quadratic(QuadForm),
    /// `demand / x[c_index] - scale · ln φ(x) <= 0` with `φ(x) = -neg_arg(x)`.
    ///
    /// `neg_arg` is convex, so `φ` is concave and the constraint is convex on
    /// `{x[c_index] > 0, φ(x) > 0}`.
    LogRate {
        neg_arg: QuadForm,
        c_index: usize,
        demand: f64,
        scale: f64,
    },
}

impl Constraint {
    /// Constraint value; `+∞` outside the function's domain.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Constraint::Quadratic(q) => q.value(x),
            Constraint::LogRate { neg_arg, c_index, demand, scale } => {
                let phi = -neg_arg.value(x);
                let c = x[*c_index];
                if !(phi > 0.0 && c > 0.0) {
                    return f64::INFINITY;
                }
                demand / c - scale * phi.ln()
            }
        }
    }

    /// Adds this constraint's contribution to the barrier gradient and Hessian.
    /// `slack = -f(x) > 0`.
    fn accumulate_barrier(
        &self,
        x: &DVector<f64>,
        slack: f64,
        grad: &mut DVector<f64>,
        hess: &mut DMatrix<f64>,
        work: &mut DVector<f64>,
    ) {
        work.fill(0.0);
        match self {
            Constraint::Quadratic(q) => {
                q.add_gradient(x, 1.0, work);
                q.add_hessian(1.0 / slack, hess);
            }
            Constraint::LogRate { neg_arg, c_index, demand, scale } => {
                let phi = -neg_arg.value(x);
                let c = x[*c_index];
                // ∇f = scale ∇n / φ - (D / c²) e_c
                neg_arg.add_gradient(x, 1.0, work);
                let dn = work.clone();
                work.scale_mut(scale / phi);
                work[*c_index] -= demand / (c * c);
                // ∇²f = scale (∇n∇nᵀ/φ² + ∇²n/φ) + 2D/c³ e_c e_cᵀ
                rank_one(hess, &dn, scale / (phi * phi * slack));
                neg_arg.add_hessian(scale / (phi * slack), hess);
                hess[(*c_index, *c_index)] += 2.0 * demand / (c * c * c * slack);
            }
        }
        grad.axpy(1.0 / slack, work, 1.0);
        rank_one(hess, work, 1.0 / (slack * slack));
    }
}

/// `h += coef v vᵀ` on the lower triangle, the only part the Cholesky factorization reads.
fn rank_one(h: &mut DMatrix<f64>, v: &DVector<f64>, coef: f64) {
    let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    if 2 * support.len() > v.len() {
        h.syger(coef, v, v, 1.0);
        return;
    }
    for (k, &c) in support.iter().enumerate() {
        let vc = coef * v[c];
        for &r in &support[k..] {
            h[(r, c)] += vc * v[r];
        }
    }
}

/// `min objective·x` subject to `constraints`.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    pub objective: DVector<f64>,
    pub constraints: Vec<Constraint>,
}

impl ConvexProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective.dot(x)
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.constraints.iter().all(|c| c.value(x) < 0.0)
    }

    /// `t·objective·x - Σ ln(-f_j(x))`, `+∞` when infeasible.
    fn barrier_value(&self, x: &DVector<f64>, t: f64) -> f64 {
        let mut v = t * self.objective.dot(x);
        for c in &self.constraints {
            let f = c.value(x);
            if !(f < 0.0) {
                return f64::INFINITY;
            }
            v -= (-f).ln();
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    /// Initial barrier weight on the objective.
    pub t0: f64,
    /// Multiplier applied to `t` after each centering round.
    pub mu: f64,
    /// Armijo sufficient-decrease fraction.
    pub armijo: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    /// Stop once the duality-gap bound `m / t` is below this.
    pub tol: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    /// Total Newton-step budget.
    pub max_iter: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { t0: 1.0, mu: 10.0, armijo: 0.3, backtrack: 0.8, tol: 1e-8, newton_tol: 1e-10, max_iter: 2000 }
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = hess.nrows();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..n {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = h.cholesky() {
            let dx = -ch.solve(grad);
            if dx.iter().all(|v| v.is_finite()) {
                return Some(dx);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

fn report(p: &ConvexProgram, x: &DVector<f64>, status: SolverStatus, iterations: usize, gap: f64) -> SolverReport {
    SolverReport {
        status,
        iterations,
        kkt_residual: gap,
        objective: p.objective_value(x),
        max_violation: p.max_violation(x),
    }
}

/// Log-barrier interior-point method from a strictly feasible `start`.
///
/// The returned objective never exceeds the objective at `start`.
pub fn solve_convex(p: &ConvexProgram, start: &DVector<f64>, opts: &BarrierOptions) -> (DVector<f64>, SolverReport) {
    assert_eq!(start.len(), p.num_vars(), "start has wrong dimension");
    if !p.strictly_feasible(start) {
        return (start.clone(), report(p, start, SolverStatus::Infeasible, 0, f64::INFINITY));
    }
    let n = p.num_vars();
    let m = p.constraints.len();
    if m == 0 {
        // unconstrained linear objective: bounded only if zero
        let status = if p.objective.iter().all(|&c| c == 0.0) { SolverStatus::Optimal } else { SolverStatus::Unbounded };
        return (start.clone(), report(p, start, status, 0, 0.0));
    }

    let mut x = start.clone();
    let mut t = opts.t0;
    let mut iters = 0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let mut work = DVector::zeros(n);
    let mut status = SolverStatus::MaxIter;
    let mut gap = m as f64 / t;

    'outer: loop {
        // centering
        loop {
            if iters >= opts.max_iter {
                break 'outer;
            }
            grad.copy_from(&p.objective);
            grad.scale_mut(t);
            hess.fill(0.0);
            for c in &p.constraints {
                let slack = -c.value(&x);
                c.accumulate_barrier(&x, slack, &mut grad, &mut hess, &mut work);
            }
            let Some(dx) = newton_direction(&hess, &grad) else {
                break 'outer;
            };
            iters += 1;
            let decrement = -grad.dot(&dx);
            let f0 = p.barrier_value(&x, t);
            // below the resolution of f0 the decrement carries no information
            if decrement / 2.0 <= opts.newton_tol.max(64.0 * f64::EPSILON * f0.abs()) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            let mut stalled = false;
            while step > 1e-16 {
                let trial = &x + &dx * step;
                let f1 = p.barrier_value(&trial, t);
                if !f1.is_finite() {
                    // outside the domain or numerical breakdown
                    step *= if f1.is_nan() { 0.5 } else { opts.backtrack };
                    continue;
                }
                if f1 <= f0 - opts.armijo * step * decrement {
                    stalled = f0 - f1 <= 64.0 * f64::EPSILON * f0.abs();
                    x = trial;
                    accepted = true;
                    break;
                }
                step *= opts.backtrack;
            }
            if stalled {
                break;
            }
            if !accepted {
                // roundoff floor for this t; accept as centered if the decrement is already small
                if decrement > 1e-6 {
                    break 'outer;
                }
                break;
            }
        }
        gap = m as f64 / t;
        if gap <= opts.tol {
            status = SolverStatus::Optimal;
            break;
        }
        t *= opts.mu;
    }

    if p.objective_value(&x) > p.objective_value(start) {
        x = start.clone();
    }
    let rep = report(p, &x, status, iters, gap);
    (x, rep)
}
