//! Complex linear-algebra helpers shared by the model and the optimizers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Stack a complex vector as `[Re w; Im w]`.
pub fn to_real(w: &CVector) -> DVector<f64> {
    let k = w.len();
    DVector::from_fn(2 * k, |r, _| if r < k { w[r].re } else { w[r - k].im })
}

/// Inverse of [`to_real`].
pub fn from_real(x: &[f64]) -> CVector {
    let k = x.len() / 2;
    CVector::from_fn(k, |r, _| C64::new(x[r], x[r + k]))
}

/// Real symmetric form of a Hermitian matrix: `wᴴ P w = xᵀ P_r x` with
/// `x = [Re w; Im w]` and `P_r = [[Re P, -Im P], [Im P, Re P]]`.
pub fn hermitian_to_real(p: &CMatrix) -> DMatrix<f64> {
    let k = p.nrows();
    let mut out = DMatrix::zeros(2 * k, 2 * k);
    for r in 0..k {
        for c in 0..k {
            let v = p[(r, c)];
            out[(r, c)] = v.re;
            out[(r + k, c + k)] = v.re;
            out[(r, c + k)] = -v.im;
            out[(r + k, c)] = v.im;
        }
    }
    // enforce exact symmetry against rounding in the input
    let sym = (&out + out.transpose()) * 0.5;
    sym
}

/// `‖v‖²`.
pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Hermitian quadratic form `vᴴ P v` (real part).
pub fn quad_form(p: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(p * v)).re
}

/// Log-determinant of a Hermitian positive-definite matrix, natural log.
pub fn ln_det_hpd(m: &CMatrix) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    Some((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Solve `M x = b` for Hermitian positive-definite `M`.
pub fn solve_hpd(m: &CMatrix, b: &CVector) -> Option<CVector> {
    let chol = m.clone().cholesky()?;
    let mut x = chol.solve(b);
    // one refinement step; covariances here are badly conditioned
    let r = b - m * &x;
    x += chol.solve(&r);
    Some(x)
}

/// Dominant left singular vector and largest singular value of `h`.
pub fn dominant_left_singular(h: &CMatrix) -> (CVector, f64) {
    let svd = h.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let (idx, sigma) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    (u.column(idx).into_owned(), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_form_matches_complex_quadratic() {
        let p = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.5, -1.0), C64::new(0.5, 1.0), C64::new(3.0, 0.0)],
        );
        let w = CVector::from_vec(vec![C64::new(0.3, -0.7), C64::new(-1.1, 0.2)]);
        let x = to_real(&w);
        let pr = hermitian_to_real(&p);
        let lhs = (x.transpose() * &pr * &x)[(0, 0)];
        assert!((lhs - quad_form(&p, &w)).abs() < 1e-12);
        assert_eq!(from_real(x.as_slice()), w);
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(2.0, 0.0), C64::new(4.0, 0.0)]));
        assert!((ln_det_hpd(&m).unwrap() - 8f64.ln()).abs() < 1e-14);
    }
}
