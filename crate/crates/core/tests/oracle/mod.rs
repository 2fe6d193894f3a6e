//! Independent reference computations: dense Gaussian densities and adaptive quadrature.
#![allow(dead_code)]

use gmmsi::model::JointComponent;
use gmmsi::sensing::SensingPair;
use nalgebra::{DMatrix, DVector};

/// `(mean, covariance)` of `y = phi x + w` under one component.
pub fn projected_moments(c: &JointComponent, phi: &SensingPair, sigma2: f64) -> (DVector<f64>, DMatrix<f64>) {
    let full = phi.assemble();
    let m = full.nrows();
    let cov = &full * c.covariance() * full.transpose() + DMatrix::identity(m, m) * sigma2;
    (&full * c.mean(), cov)
}

/// Gaussian log density through a Cholesky factorization.
pub fn log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().expect("positive definite");
    let r = y - mean;
    let z = chol.l().solve_lower_triangular(&r).expect("nonsingular");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (y.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

/// `E[x | y]` for one component from the printed formula, via a dense solve.
pub fn dense_cme(c: &JointComponent, phi: &SensingPair, y: &DVector<f64>, sigma2: f64) -> DVector<f64> {
    let full = phi.assemble();
    let (mean_y, cov_y) = projected_moments(c, phi, sigma2);
    let gain = c.covariance() * full.transpose();
    let w = cov_y.lu().solve(&(y - mean_y)).expect("nonsingular");
    c.mean() + gain * w
}

/// `tr(S11 - [S11 S12] phi^T (phi S phi^T + sigma2 I)^{-1} phi [S11 S12]^T)`.
pub fn dense_mmse_x1(c: &JointComponent, phi: &SensingPair, sigma2: f64) -> f64 {
    let n1 = c.n1();
    let full = phi.assemble();
    let (_, cov_y) = projected_moments(c, phi, sigma2);
    let s = c.covariance();
    let top = s.rows(0, n1).into_owned();
    let g = &top * full.transpose();
    let solved = cov_y.lu().solve(&g.transpose()).expect("nonsingular");
    (top.columns(0, n1).into_owned() - &g * solved).trace()
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Adaptive Simpson on `[a, b]`, started from `panels` equal panels so narrow peaks are seen.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
            let m = 0.5 * (lo + hi);
            let (fa, fm, fb) = (f(lo), f(m), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(f, lo, hi, fa, fm, fb, whole, eps / panels as f64, 40)
        })
        .sum()
}

/// Gaussian density with its inverse covariance and log normalizer computed once.
struct Density {
    mean: DVector<f64>,
    inv: DMatrix<f64>,
    log_norm: f64,
}

impl Density {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let chol = cov.clone().cholesky().expect("positive definite");
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Density {
            mean: mean.clone(),
            inv: chol.inverse(),
            log_norm: -0.5 * (mean.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet),
        }
    }

    fn log_at(&self, y: &[f64]) -> f64 {
        let n = y.len();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += (y[i] - self.mean[i]) * self.inv[(i, j)] * (y[j] - self.mean[j]);
            }
        }
        self.log_norm - 0.5 * q
    }
}

/// `integral sqrt(p_a(y) p_b(y)) dy` over a box wide enough to hold both densities, in one
/// or two dimensions.
pub fn bhattacharyya_quadrature(
    (ma, ca): (&DVector<f64>, &DMatrix<f64>),
    (mb, cb): (&DVector<f64>, &DMatrix<f64>),
) -> f64 {
    let (da, db) = (Density::new(ma, ca), Density::new(mb, cb));
    let half_width = |i: usize| 12.0 * ca[(i, i)].max(cb[(i, i)]).sqrt();
    let lo = |i: usize| ma[i].min(mb[i]) - half_width(i);
    let hi = |i: usize| ma[i].max(mb[i]) + half_width(i);
    let g = |y: &[f64]| (0.5 * (da.log_at(y) + db.log_at(y))).exp();
    match ma.len() {
        1 => integrate(&|t| g(&[t]), lo(0), hi(0), 1e-11, 64),
        2 => {
            let inner = |t: f64| integrate(&|u| g(&[t, u]), lo(1), hi(1), 1e-10, 16);
            integrate(&inner, lo(0), hi(0), 1e-9, 16)
        }
        _ => panic!("quadrature oracle handles one or two dimensions"),
    }
}
