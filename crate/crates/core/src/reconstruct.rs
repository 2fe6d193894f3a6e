//! Conditional-mean reconstruction of `x1` (or of the full vector) from the two
//! measurements, the Gaussian MMSE, and rank-based reconstruction verdicts.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometryTable, RankTriple};
use crate::model::{ClassPair, JointGmm};
pub use crate::projected::Target;
use crate::projected::ProjectedGmm;
use crate::sensing::{check_sigma2, Observation, SensingPair};

/// Estimators for a fixed model and kernel.
pub struct Reconstructor {
    proj: ProjectedGmm,
}

/// Posterior over components and the matching per-component conditional means.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPosterior {
    pub pairs: Vec<ClassPair>,
    pub weights: Vec<f64>,
    /// Conditional mean of the full vector under each component.
    pub component_means: Vec<DVector<f64>>,
    /// Posterior mixture of the component means, full vector.
    pub estimate: DVector<f64>,
}

fn restrict(x: DVector<f64>, n1: usize, target: Target) -> DVector<f64> {
    match target {
        Target::X1 => x.rows(0, n1).into_owned(),
        Target::Joint => x,
    }
}

impl Reconstructor {
    pub fn new(model: &JointGmm, phi: &SensingPair) -> Result<Self> {
        Ok(Reconstructor {
            proj: ProjectedGmm::new(model, phi)?,
        })
    }

    pub(crate) fn from_projected(proj: ProjectedGmm) -> Self {
        Reconstructor { proj }
    }

    fn stacked(&self, obs: &Observation) -> Result<DVector<f64>> {
        check_sigma2(obs.sigma2)?;
        let y = obs.stacked();
        self.proj.check_y(&y)?;
        Ok(y)
    }

    fn single(&self) -> Result<usize> {
        if self.proj.comps.len() == 1 {
            Ok(0)
        } else {
            Err(Error::TaskMismatch(format!(
                "Gaussian estimator needs a single component, model has {}",
                self.proj.comps.len()
            )))
        }
    }

    pub(crate) fn posterior_y(&self, y: &DVector<f64>, sigma2: f64) -> GmmPosterior {
        let weights = self.proj.posterior(y, sigma2);
        let component_means: Vec<DVector<f64>> = self.proj.comps.iter().map(|c| c.cme(y, sigma2)).collect();
        let mut estimate = DVector::zeros(component_means[0].len());
        for (w, m) in weights.iter().zip(&component_means) {
            estimate.axpy(*w, m, 1.0);
        }
        GmmPosterior {
            pairs: self.proj.comps.iter().map(|c| c.pair).collect(),
            weights,
            component_means,
            estimate,
        }
    }

    /// Estimate of the most probable component given `y`, ties to the smallest pair.
    pub(crate) fn classify_reconstruct_y(&self, y: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        let lj = self.proj.log_joint(y, sigma2);
        let mut best = 0;
        for (i, &v) in lj.iter().enumerate() {
            if v > lj[best] {
                best = i;
            }
        }
        self.proj.comps[best].cme(y, sigma2)
    }

    /// Conditional mean under a single Gaussian.
    pub fn gaussian_cme(&self, obs: &Observation, target: Target) -> Result<DVector<f64>> {
        let idx = self.single()?;
        let y = self.stacked(obs)?;
        Ok(restrict(self.proj.comps[idx].cme(&y, obs.sigma2), self.proj.n1, target))
    }

    /// MMSE of a single Gaussian at noise level `sigma2`.
    pub fn gaussian_mmse(&self, sigma2: f64, target: Target) -> Result<f64> {
        check_sigma2(sigma2)?;
        let idx = self.single()?;
        Ok(self.proj.comps[idx].mmse(sigma2, target))
    }

    pub fn posterior(&self, obs: &Observation) -> Result<GmmPosterior> {
        let y = self.stacked(obs)?;
        Ok(self.posterior_y(&y, obs.sigma2))
    }

    /// Conditional mean under the mixture.
    pub fn gmm_cme(&self, obs: &Observation, target: Target) -> Result<DVector<f64>> {
        Ok(restrict(self.posterior(obs)?.estimate, self.proj.n1, target))
    }

    /// MAP class pair followed by that component's conditional mean.
    pub fn classify_reconstruct(&self, obs: &Observation, target: Target) -> Result<DVector<f64>> {
        let y = self.stacked(obs)?;
        Ok(restrict(self.classify_reconstruct_y(&y, obs.sigma2), self.proj.n1, target))
    }

    /// Prior-weighted component MMSEs: the error of an oracle that knows the class.
    pub fn mse_lower_bound(&self, sigma2: f64, target: Target) -> Result<f64> {
        check_sigma2(sigma2)?;
        Ok(self.mse_lower_bound_unchecked(sigma2, target))
    }

    pub(crate) fn mse_lower_bound_unchecked(&self, sigma2: f64, target: Target) -> f64 {
        self.proj
            .comps
            .iter()
            .map(|c| c.log_prior.exp() * c.mmse(sigma2, target))
            .sum()
    }
}

/// `E[x1 | y]` for a single-component model.
pub fn gaussian_cme(obs: &Observation, model: &JointGmm, phi: &SensingPair) -> Result<DVector<f64>> {
    Reconstructor::new(model, phi)?.gaussian_cme(obs, Target::X1)
}

/// `tr(sigma_x1 - [s1 s12] phi^T (sigma2 I + phi sigma phi^T)^{-1} phi [s1 s12]^T)`.
pub fn gaussian_mmse(model: &JointGmm, phi: &SensingPair, sigma2: f64) -> Result<f64> {
    Reconstructor::new(model, phi)?.gaussian_mmse(sigma2, Target::X1)
}

/// `E[x1 | y]` under the mixture.
pub fn gmm_cme(obs: &Observation, model: &JointGmm, phi: &SensingPair) -> Result<DVector<f64>> {
    Reconstructor::new(model, phi)?.gmm_cme(obs, Target::X1)
}

/// Classify `(C1, C2)` by MAP, then reconstruct `x1` with that component.
pub fn classify_reconstruct(obs: &Observation, model: &JointGmm, phi: &SensingPair) -> Result<DVector<f64>> {
    Reconstructor::new(model, phi)?.classify_reconstruct(obs, Target::X1)
}

/// `sum p(i,k) MMSE(i,k)` for `x1`.
pub fn mse_lower_bound(model: &JointGmm, phi: &SensingPair, sigma2: f64) -> Result<f64> {
    Reconstructor::new(model, phi)?.mse_lower_bound(sigma2, Target::X1)
}

/// Rank conditions for an MMSE that vanishes with the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconTheorem {
    /// Single Gaussian, reconstruct `x1`: necessary and sufficient.
    Gaussian,
    /// Mixture, reconstruct `x1`: sufficient (strict inequalities on every component).
    GmmSufficient,
    /// Mixture, reconstruct `x1`: necessary.
    GmmNecessary,
    /// Single Gaussian, reconstruct both: necessary and sufficient.
    DistGaussian,
    /// Mixture, reconstruct both: sufficient.
    DistGmmSufficient,
    /// Mixture, reconstruct both: necessary.
    DistGmmNecessary,
}

impl ReconTheorem {
    pub const ALL: [ReconTheorem; 6] = [
        ReconTheorem::Gaussian,
        ReconTheorem::GmmSufficient,
        ReconTheorem::GmmNecessary,
        ReconTheorem::DistGaussian,
        ReconTheorem::DistGmmSufficient,
        ReconTheorem::DistGmmNecessary,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReconTheorem::Gaussian => "gaussian",
            ReconTheorem::GmmSufficient => "gmm_sufficient",
            ReconTheorem::GmmNecessary => "gmm_necessary",
            ReconTheorem::DistGaussian => "dist_gaussian",
            ReconTheorem::DistGmmSufficient => "dist_gmm_sufficient",
            ReconTheorem::DistGmmNecessary => "dist_gmm_necessary",
        }
    }

    fn requires_single(&self) -> bool {
        matches!(self, ReconTheorem::Gaussian | ReconTheorem::DistGaussian)
    }

    fn holds(&self, r: RankTriple, m1: usize, m2: usize) -> bool {
        let r_minus2 = r.r_x.saturating_sub(r.r_x2);
        let r_minus1 = r.r_x.saturating_sub(r.r_x1);
        match self {
            ReconTheorem::Gaussian | ReconTheorem::GmmNecessary => {
                m1 >= r.r_x1 || (m1 >= r_minus2 && m1 + m2 >= r.r_x)
            }
            ReconTheorem::GmmSufficient => m1 > r.r_x1 || (m1 > r_minus2 && m1 + m2 > r.r_x),
            ReconTheorem::DistGaussian | ReconTheorem::DistGmmNecessary => {
                m1 >= r_minus2 && m2 >= r_minus1 && m1 + m2 >= r.r_x
            }
            ReconTheorem::DistGmmSufficient => m1 > r_minus2 && m2 > r_minus1 && m1 + m2 > r.r_x,
        }
    }
}

impl fmt::Display for ReconTheorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReconTheorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ReconTheorem::ALL
            .iter()
            .find(|t| t.as_str() == s)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown reconstruction criterion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReconVerdict {
    pub theorem: ReconTheorem,
    pub m1: usize,
    pub m2: usize,
    /// Whether the rank condition holds.
    pub transition: bool,
    /// First component pair violating the condition.
    pub binding: Option<ClassPair>,
}

pub const RECON_VERDICT_CSV_HEADER: &str = "theorem,m1,m2,outcome,binding_i,binding_k";

impl ReconVerdict {
    pub fn outcome_str(&self) -> &'static str {
        if self.transition {
            "phase_transition"
        } else {
            "no_transition"
        }
    }

    pub fn csv_row(&self) -> String {
        let (i, k) = match self.binding {
            Some(p) => (p.i.to_string(), p.k.to_string()),
            None => Default::default(),
        };
        format!("{},{},{},{},{},{}", self.theorem, self.m1, self.m2, self.outcome_str(), i, k)
    }
}

/// Evaluate a reconstruction criterion on every supported component.
pub fn reconstruction_phase_verdict(geom: &GeometryTable, m1: usize, m2: usize, theorem: ReconTheorem) -> Result<ReconVerdict> {
    if theorem.requires_single() && geom.components().len() != 1 {
        return Err(Error::TaskMismatch(format!(
            "criterion {theorem} applies to a single Gaussian, model has {} components",
            geom.components().len()
        )));
    }
    let binding = geom
        .components()
        .iter()
        .find(|(_, r)| !theorem.holds(**r, m1, m2))
        .map(|(p, _)| *p);
    Ok(ReconVerdict {
        theorem,
        m1,
        m2,
        transition: binding.is_none(),
        binding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gauss_334;
    use nalgebra::DMatrix;

    fn dense_cme_x1(model: &JointGmm, phi: &SensingPair, y: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        let c = model.component(ClassPair::new(1, 1)).unwrap();
        let p = phi.assemble();
        let s = c.covariance();
        let n1 = model.n1();
        let top = s.rows(0, n1).into_owned();
        let g = &p * &s * p.transpose() + DMatrix::identity(p.nrows(), p.nrows()) * sigma2;
        let r = y - &p * c.mean();
        c.mu_x1() + &top * p.transpose() * g.lu().solve(&r).unwrap()
    }

    #[test]
    fn cme_matches_dense_formula() {
        let m = gauss_334(5);
        let phi = SensingPair::gaussian(2, 5, 2, 4, 3);
        let obs = Observation {
            y1: DVector::from_vec(vec![0.4, -1.2]),
            y2: DVector::from_vec(vec![2.0, 0.1]),
            sigma2: 0.05,
        };
        let fast = gaussian_cme(&obs, &m, &phi).unwrap();
        let dense = dense_cme_x1(&m, &phi, &obs.stacked(), 0.05);
        assert!((fast - dense).norm() < 1e-10);
        let post = gmm_cme(&obs, &m, &phi).unwrap();
        assert!((post - gaussian_cme(&obs, &m, &phi).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn gaussian_verdict_boundaries() {
        let g = GeometryTable::single(RankTriple::new(3, 3, 4));
        let first = |m2| {
            (0..=5)
                .find(|&m1| {
                    reconstruction_phase_verdict(&g, m1, m2, ReconTheorem::Gaussian)
                        .unwrap()
                        .transition
                })
                .unwrap()
        };
        assert_eq!((first(1), first(2), first(3)), (3, 2, 1));
    }

    #[test]
    fn sufficient_condition_threshold() {
        let g = GeometryTable::single(RankTriple::new(15, 4, 15));
        let first = (0..40)
            .find(|&m1| {
                reconstruction_phase_verdict(&g, m1, 4, ReconTheorem::GmmSufficient)
                    .unwrap()
                    .transition
            })
            .unwrap();
        assert_eq!(first, 12);
    }

    #[test]
    fn gaussian_criterion_rejects_mixtures() {
        let g = crate::geometry::default_geometry(&crate::model::table_one(1)).unwrap();
        assert!(matches!(
            reconstruction_phase_verdict(&g, 5, 5, ReconTheorem::Gaussian),
            Err(Error::TaskMismatch(_))
        ));
    }
}
