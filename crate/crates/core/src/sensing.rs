//! Linear measurement kernels and noisy observations `y_i = phi_i x_i + w_i`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, check_finite_vec, vcat_vec};
use crate::model::LabeledSampleSet;
use crate::rng::{derive_seed, stream_rng, tag};

/// `m x n` kernel with i.i.d. standard normal entries.
pub fn draw_kernel(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 0);
    DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// How side-information kernels are chosen in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Both kernels Gaussian.
    Gaussian,
    /// `phi1` Gaussian, `phi2` the `n2 x n2` identity.
    Identity2,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "identity2" => Ok(KernelKind::Identity2),
            _ => Err(Error::InvalidInput(format!("unknown kernel kind {s:?}"))),
        }
    }
}

/// The pair of kernels `(phi1, phi2)`; the joint kernel is block diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingPair {
    pub phi1: DMatrix<f64>,
    pub phi2: DMatrix<f64>,
}

impl SensingPair {
    pub fn new(phi1: DMatrix<f64>, phi2: DMatrix<f64>) -> Result<Self> {
        check_finite(&phi1, "phi1")?;
        check_finite(&phi2, "phi2")?;
        Ok(SensingPair { phi1, phi2 })
    }

    /// Independent Gaussian kernels of sizes `m1 x n1` and `m2 x n2`.
    pub fn gaussian(m1: usize, n1: usize, m2: usize, n2: usize, seed: u64) -> Self {
        SensingPair {
            phi1: draw_kernel(m1, n1, derive_seed(seed, &[tag::KERNEL1])),
            phi2: draw_kernel(m2, n2, derive_seed(seed, &[tag::KERNEL2])),
        }
    }

    /// Gaussian `phi1` with the identity as `phi2`.
    pub fn identity_side(m1: usize, n1: usize, n2: usize, seed: u64) -> Self {
        SensingPair {
            phi1: draw_kernel(m1, n1, derive_seed(seed, &[tag::KERNEL1])),
            phi2: DMatrix::identity(n2, n2),
        }
    }

    /// Draw according to a policy; `m2` is ignored for [`KernelKind::Identity2`].
    pub fn draw(kind: KernelKind, m1: usize, n1: usize, m2: usize, n2: usize, seed: u64) -> Self {
        match kind {
            KernelKind::Gaussian => Self::gaussian(m1, n1, m2, n2, seed),
            KernelKind::Identity2 => Self::identity_side(m1, n1, n2, seed),
        }
    }

    pub fn m1(&self) -> usize {
        self.phi1.nrows()
    }

    pub fn m2(&self) -> usize {
        self.phi2.nrows()
    }

    pub fn n1(&self) -> usize {
        self.phi1.ncols()
    }

    pub fn n2(&self) -> usize {
        self.phi2.ncols()
    }

    /// Block-diagonal `diag(phi1, phi2)`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (m1, n1) = self.phi1.shape();
        let (m2, n2) = self.phi2.shape();
        let mut phi = DMatrix::zeros(m1 + m2, n1 + n2);
        phi.view_mut((0, 0), (m1, n1)).copy_from(&self.phi1);
        phi.view_mut((m1, n1), (m2, n2)).copy_from(&self.phi2);
        phi
    }

    /// Same pair with the side-information kernel removed (zero rows).
    pub fn without_side(&self) -> Self {
        SensingPair {
            phi1: self.phi1.clone(),
            phi2: DMatrix::zeros(0, self.n2()),
        }
    }
}

/// Noisy measurements of one signal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y1: DVector<f64>,
    pub y2: DVector<f64>,
    pub sigma2: f64,
}

impl Observation {
    /// Stacked `[y1; y2]`.
    pub fn stacked(&self) -> DVector<f64> {
        vcat_vec(&self.y1, &self.y2)
    }

    pub fn len(&self) -> usize {
        self.y1.len() + self.y2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("noise variance must be positive and finite, got {sigma2}")))
    }
}

/// `y_i = phi_i x_i + w_i` with `w_i` standard normal scaled by `sqrt(sigma2)`.
pub(crate) fn observe_with<R: Rng>(phi: &SensingPair, x1: &DVector<f64>, x2: &DVector<f64>, sigma2: f64, rng: &mut R) -> Observation {
    let s = sigma2.sqrt();
    let w1 = DVector::from_fn(phi.m1(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let w2 = DVector::from_fn(phi.m2(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Observation {
        y1: &phi.phi1 * x1 + w1 * s,
        y2: &phi.phi2 * x2 + w2 * s,
        sigma2,
    }
}

/// Observe one signal pair.
pub fn observe(phi: &SensingPair, x1: &DVector<f64>, x2: &DVector<f64>, sigma2: f64, seed: u64) -> Result<Observation> {
    check_sigma2(sigma2)?;
    if x1.len() != phi.n1() || x2.len() != phi.n2() {
        return Err(Error::Dimension(format!(
            "signals of length ({}, {}) against kernels with ({}, {}) columns",
            x1.len(),
            x2.len(),
            phi.n1(),
            phi.n2()
        )));
    }
    check_finite_vec(x1, "x1")?;
    check_finite_vec(x2, "x2")?;
    let mut rng = stream_rng(derive_seed(seed, &[tag::NOISE]), 0);
    Ok(observe_with(phi, x1, x2, sigma2, &mut rng))
}

/// Observe every sample of a set; sample `t` draws its noise from stream `t`.
pub fn observe_batch(phi: &SensingPair, samples: &LabeledSampleSet, sigma2: f64, seed: u64) -> Result<Vec<Observation>> {
    check_sigma2(sigma2)?;
    if let Some(x1) = samples.x1.first() {
        if x1.len() != phi.n1() || samples.x2[0].len() != phi.n2() {
            return Err(Error::Dimension("samples do not match kernel widths".into()));
        }
    }
    let base = derive_seed(seed, &[tag::NOISE]);
    Ok((0..samples.len())
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(base, t as u64);
            observe_with(phi, &samples.x1[t], &samples.x2[t], sigma2, &mut rng)
        })
        .collect())
}
