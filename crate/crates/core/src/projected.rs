//! Components pushed through a fixed kernel.
//!
//! For a factor `L` with `L L^T = sigma` and the thin SVD `phi L = U S V^T`, every
//! quantity needed at noise level `sigma2` follows from the singular values alone:
//! `log det(phi sigma phi^T + sigma2 I) = sum log(s^2 + sigma2) + (m - k) log sigma2`,
//! and the same decomposition gives quadratic forms, conditional means and MMSEs.
//! One decomposition per kernel therefore serves a whole noise sweep.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{hcat, log_sum_exp, thin_svd};
use crate::model::{ClassPair, JointGmm};
use crate::sensing::SensingPair;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `A A^T + shift I` held through the thin SVD of `A`.
#[derive(Debug, Clone)]
pub(crate) struct ShiftedGram {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
    dim: usize,
}

impl ShiftedGram {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let svd = thin_svd(a);
        ShiftedGram {
            dim: a.nrows(),
            s: svd.s.iter().copied().collect(),
            u: svd.u,
            v: svd.v,
        }
    }

    pub fn log_det(&self, shift: f64) -> f64 {
        let k = self.s.len();
        self.s.iter().map(|s| (s * s + shift).ln()).sum::<f64>() + (self.dim - k) as f64 * shift.ln()
    }

    /// `r^T (A A^T + shift I)^{-1} r`.
    pub fn quad(&self, r: &DVector<f64>, shift: f64) -> f64 {
        let c = self.u.tr_mul(r);
        let resid = r - &self.u * &c;
        let inside: f64 = c.iter().zip(&self.s).map(|(ci, s)| ci * ci / (s * s + shift)).sum();
        inside + resid.norm_squared() / shift
    }

    /// Coefficients `U^T r`.
    pub fn coeffs(&self, r: &DVector<f64>) -> DVector<f64> {
        self.u.tr_mul(r)
    }
}

/// Error-covariance pieces for one set of target rows `E`:
/// `MMSE = |E L (I - V V^T)|_F^2 + sum_i sigma2 / (s_i^2 + sigma2) |E L v_i|^2`.
#[derive(Debug, Clone)]
struct MmseParts {
    null: f64,
    weights: Vec<f64>,
}

impl MmseParts {
    fn new(el: &DMatrix<f64>, v: &DMatrix<f64>) -> Self {
        let elv = el * v;
        let null = (el - &elv * v.transpose()).norm_squared();
        let weights = (0..elv.ncols()).map(|i| elv.column(i).norm_squared()).collect();
        MmseParts { null, weights }
    }

    fn eval(&self, s: &[f64], sigma2: f64) -> f64 {
        self.null
            + self
                .weights
                .iter()
                .zip(s)
                .map(|(w, si)| w * sigma2 / (si * si + sigma2))
                .sum::<f64>()
    }
}

/// Which coordinates an estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The first `n1` coordinates.
    X1,
    /// The full stacked vector.
    Joint,
}

#[derive(Debug, Clone)]
struct Estimation {
    lv: DMatrix<f64>,
    mmse_x1: MmseParts,
    mmse_joint: MmseParts,
}

#[derive(Debug, Clone)]
pub(crate) struct ProjectedComponent {
    pub pair: ClassPair,
    pub log_prior: f64,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub gram: ShiftedGram,
    /// Estimation pieces; absent when the projection only serves classification.
    est: Option<Estimation>,
    /// `phi L`, kept for pairwise sums.
    pub phi_l: DMatrix<f64>,
}

impl ProjectedComponent {
    pub fn log_likelihood(&self, y: &DVector<f64>, sigma2: f64) -> f64 {
        let r = y - &self.mean_y;
        -0.5 * (self.gram.dim as f64 * LN_2PI + self.gram.log_det(sigma2) + self.gram.quad(&r, sigma2))
    }

    /// Conditional mean of the full vector given `y`.
    pub fn cme(&self, y: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        let r = y - &self.mean_y;
        let mut c = self.gram.coeffs(&r);
        for (ci, s) in c.iter_mut().zip(&self.gram.s) {
            *ci *= s / (s * s + sigma2);
        }
        &self.mean_x + &self.estimation().lv * c
    }

    pub fn mmse(&self, sigma2: f64, target: Target) -> f64 {
        let est = self.estimation();
        match target {
            Target::X1 => est.mmse_x1.eval(&self.gram.s, sigma2),
            Target::Joint => est.mmse_joint.eval(&self.gram.s, sigma2),
        }
    }

    fn estimation(&self) -> &Estimation {
        self.est
            .as_ref()
            .expect("projection built with estimation support")
    }
}

/// Every supported component of a model projected through one kernel.
#[derive(Debug, Clone)]
pub(crate) struct ProjectedGmm {
    pub comps: Vec<ProjectedComponent>,
    pub n1: usize,
    pub m: usize,
}

impl ProjectedGmm {
    pub fn new(model: &JointGmm, phi: &SensingPair) -> Result<Self> {
        Self::build(model, phi, true)
    }

    /// Projection carrying only what the classifiers and bounds need.
    pub fn for_classification(model: &JointGmm, phi: &SensingPair) -> Result<Self> {
        Self::build(model, phi, false)
    }

    fn build(model: &JointGmm, phi: &SensingPair, estimation: bool) -> Result<Self> {
        if phi.n1() != model.n1() || phi.n2() != model.n2() {
            return Err(Error::Dimension(format!(
                "kernel widths ({}, {}) against model dims ({}, {})",
                phi.n1(),
                phi.n2(),
                model.n1(),
                model.n2()
            )));
        }
        let full = phi.assemble();
        let n1 = model.n1();
        let comps = model
            .support()
            .into_iter()
            .map(|pair| {
                let c = model.supported_component(pair);
                let l = c.sqrt_factor();
                let phi_l = &full * l;
                let gram = ShiftedGram::new(&phi_l);
                let est = estimation.then(|| Estimation {
                    lv: l * &gram.v,
                    mmse_x1: MmseParts::new(&l.rows(0, n1).into_owned(), &gram.v),
                    mmse_joint: MmseParts::new(l, &gram.v),
                });
                let mean_x = c.mean();
                ProjectedComponent {
                    pair,
                    log_prior: model.prior(pair).ln(),
                    mean_y: &full * &mean_x,
                    mean_x,
                    gram,
                    est,
                    phi_l,
                }
            })
            .collect();
        Ok(ProjectedGmm {
            comps,
            n1,
            m: full.nrows(),
        })
    }

    pub fn index_of(&self, pair: ClassPair) -> Option<usize> {
        self.comps.iter().position(|c| c.pair == pair)
    }

    pub fn check_y(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.m {
            return Err(Error::Dimension(format!("observation of length {} against {} rows", y.len(), self.m)));
        }
        crate::linalg::check_finite_vec(y, "observation")
    }

    /// `log p(i,k) + log N(y; phi mu, phi sigma phi^T + sigma2 I)` for each component.
    pub fn log_joint(&self, y: &DVector<f64>, sigma2: f64) -> Vec<f64> {
        self.comps
            .iter()
            .map(|c| c.log_prior + c.log_likelihood(y, sigma2))
            .collect()
    }

    /// Posterior weights over components, normalized via log-sum-exp.
    pub fn posterior(&self, y: &DVector<f64>, sigma2: f64) -> Vec<f64> {
        let lj = self.log_joint(y, sigma2);
        let z = log_sum_exp(&lj);
        lj.iter().map(|v| (v - z).exp()).collect()
    }
}

/// Gram of `phi (sigma_a + sigma_b) phi^T / 2` for a pair of projected components.
#[derive(Debug, Clone)]
pub(crate) struct PairGram {
    half_sum: ShiftedGram,
    delta_y: DVector<f64>,
}

impl PairGram {
    pub fn new(a: &ProjectedComponent, b: &ProjectedComponent) -> Self {
        let joint = hcat(&a.phi_l, &b.phi_l) * std::f64::consts::FRAC_1_SQRT_2;
        PairGram {
            half_sum: ShiftedGram::new(&joint),
            delta_y: &a.mean_y - &b.mean_y,
        }
    }

    /// Bhattacharyya exponent split into its mean and covariance terms.
    pub fn exponent(&self, a: &ProjectedComponent, b: &ProjectedComponent, sigma2: f64) -> (f64, f64) {
        let mean_term = 0.125 * self.half_sum.quad(&self.delta_y, sigma2);
        let cov_term = 0.5 * self.half_sum.log_det(sigma2) - 0.25 * (a.gram.log_det(sigma2) + b.gram.log_det(sigma2));
        (mean_term, cov_term)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::table_one;

    #[test]
    fn shifted_gram_matches_dense() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let r = DVector::from_fn(5, |i, _| i as f64 * 0.3 - 0.5);
        let g = ShiftedGram::new(&a);
        for shift in [1e-6, 0.1, 2.0] {
            let dense = &a * a.transpose() + DMatrix::identity(5, 5) * shift;
            let chol = dense.clone().cholesky().unwrap();
            let ld = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            assert!((g.log_det(shift) - ld).abs() < 1e-9 * ld.abs().max(1.0));
            let q = r.dot(&chol.solve(&r));
            assert!((g.quad(&r, shift) - q).abs() < 1e-8 * q.abs().max(1.0));
        }
    }

    #[test]
    fn posterior_sums_to_one() {
        let m = table_one(2);
        let phi = SensingPair::gaussian(6, 20, 4, 12, 9);
        let p = ProjectedGmm::new(&m, &phi).unwrap();
        let y = DVector::from_fn(10, |i, _| (i as f64).sin());
        let w = p.posterior(&y, 1e-3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
