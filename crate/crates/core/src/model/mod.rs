//! Joint Gaussian mixture model over the pair `(x1, x2)`.
//!
//! Classes are pairs `(i, k)` with `1 <= i <= k1` and `1 <= k <= k2`. Each pair with
//! positive prior owns a Gaussian component over the stacked vector `x = [x1; x2]`.

mod config;
mod presets;

pub use config::{ComponentSpec, DimsSpec, ModelFile, PriorSpec};
pub use presets::{gauss_334, random_low_rank, table_one, LowRankShape};

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, check_finite, check_finite_vec, DEFAULT_TOL_FACTOR};
use crate::rng::{stream_rng, tag};

/// Tolerance within which the prior must sum to one as given.
pub const PRIOR_SUM_TOL: f64 = 1e-12;
/// Larger tolerance within which the prior is silently renormalized.
pub const PRIOR_RENORM_TOL: f64 = 1e-9;
/// Relative tolerance for symmetry and positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

/// A class pair `(i, k)`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassPair {
    pub i: usize,
    pub k: usize,
}

impl ClassPair {
    pub fn new(i: usize, k: usize) -> Self {
        ClassPair { i, k }
    }
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.k)
    }
}

/// An ordered pair of class pairs `((i, k), (j, l))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quadruple {
    pub a: ClassPair,
    pub b: ClassPair,
}

impl Quadruple {
    pub fn new(i: usize, k: usize, j: usize, l: usize) -> Self {
        Quadruple {
            a: ClassPair::new(i, k),
            b: ClassPair::new(j, l),
        }
    }

    /// Same quadruple with the two class pairs swapped.
    pub fn swapped(&self) -> Self {
        Quadruple { a: self.b, b: self.a }
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.a.i, self.a.k, self.b.i, self.b.k)
    }
}

/// Low-rank factor description of one component.
///
/// `x1 = pc1 zc + p1 z1` and `x2 = pc2 zc + p2 z2` with independent standard normal
/// latents, so `sigma_x1 = pc1 pc1^T + p1 p1^T`, `sigma_x2 = pc2 pc2^T + p2 p2^T` and
/// `sigma_x12 = pc1 pc2^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub p_c1: DMatrix<f64>,
    pub p_c2: DMatrix<f64>,
    pub p_1: DMatrix<f64>,
    pub p_2: DMatrix<f64>,
}

impl FactorModel {
    pub fn new(p_c1: DMatrix<f64>, p_c2: DMatrix<f64>, p_1: DMatrix<f64>, p_2: DMatrix<f64>) -> Result<Self> {
        let f = FactorModel { p_c1, p_c2, p_1, p_2 };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.p_c1.ncols() != self.p_c2.ncols() {
            return Err(Error::Dimension(format!(
                "common factors have {} and {} columns",
                self.p_c1.ncols(),
                self.p_c2.ncols()
            )));
        }
        if self.p_c1.nrows() != self.p_1.nrows() || self.p_c2.nrows() != self.p_2.nrows() {
            return Err(Error::Dimension(
                "individual factors must have as many rows as the matching common factor".into(),
            ));
        }
        for (m, name) in [
            (&self.p_c1, "p_c1"),
            (&self.p_c2, "p_c2"),
            (&self.p_1, "p_1"),
            (&self.p_2, "p_2"),
        ] {
            check_finite(m, name)?;
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.p_c1.nrows()
    }

    pub fn n2(&self) -> usize {
        self.p_c2.nrows()
    }

    /// Joint loading `[[pc1, p1, 0], [pc2, 0, p2]]`, so that `sigma_x = P P^T`.
    pub fn joint_loading(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.n1(), self.n2());
        let (sc, s1, s2) = (self.p_c1.ncols(), self.p_1.ncols(), self.p_2.ncols());
        let mut p = DMatrix::zeros(n1 + n2, sc + s1 + s2);
        p.view_mut((0, 0), (n1, sc)).copy_from(&self.p_c1);
        p.view_mut((n1, 0), (n2, sc)).copy_from(&self.p_c2);
        p.view_mut((0, sc), (n1, s1)).copy_from(&self.p_1);
        p.view_mut((n1, sc + s1), (n2, s2)).copy_from(&self.p_2);
        p
    }
}

/// One Gaussian component over `x = [x1; x2]`.
#[derive(Debug, Clone)]
pub struct JointComponent {
    mu_x1: DVector<f64>,
    mu_x2: DVector<f64>,
    sigma_x1: DMatrix<f64>,
    sigma_x2: DMatrix<f64>,
    sigma_x12: DMatrix<f64>,
    factors: Option<FactorModel>,
    sqrt: DMatrix<f64>,
}

impl JointComponent {
    /// Build from mean and covariance blocks; checks symmetry and positive semidefiniteness.
    pub fn from_blocks(
        mu_x1: DVector<f64>,
        mu_x2: DVector<f64>,
        sigma_x1: DMatrix<f64>,
        sigma_x2: DMatrix<f64>,
        sigma_x12: DMatrix<f64>,
    ) -> Result<Self> {
        let (n1, n2) = (mu_x1.len(), mu_x2.len());
        if sigma_x1.shape() != (n1, n1) || sigma_x2.shape() != (n2, n2) || sigma_x12.shape() != (n1, n2) {
            return Err(Error::Dimension(format!(
                "covariance blocks {:?}, {:?}, {:?} do not match means of length {n1} and {n2}",
                sigma_x1.shape(),
                sigma_x2.shape(),
                sigma_x12.shape()
            )));
        }
        check_finite_vec(&mu_x1, "mu_x1")?;
        check_finite_vec(&mu_x2, "mu_x2")?;
        let mut comp = JointComponent {
            mu_x1,
            mu_x2,
            sigma_x1,
            sigma_x2,
            sigma_x12,
            factors: None,
            sqrt: DMatrix::zeros(0, 0),
        };
        let sigma = comp.covariance();
        check_finite(&sigma, "covariance")?;
        let scale = sigma.abs().max().max(f64::MIN_POSITIVE);
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > PSD_TOL * scale {
            return Err(Error::Model(format!("covariance is not symmetric (max asymmetry {asym:e})")));
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let (lo, hi) = linalg::eigen_extremes(&sym);
        if lo < -PSD_TOL * hi.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Model(format!(
                "covariance is not positive semidefinite (min eigenvalue {lo:e}, max {hi:e})"
            )));
        }
        comp.sqrt = linalg::psd_sqrt_factor(&sym, DEFAULT_TOL_FACTOR)?;
        Ok(comp)
    }

    /// Build from a factor model. Sampling then uses the latent representation directly.
    pub fn from_factors(mu_x1: DVector<f64>, mu_x2: DVector<f64>, f: FactorModel) -> Result<Self> {
        f.validate()?;
        if mu_x1.len() != f.n1() || mu_x2.len() != f.n2() {
            return Err(Error::Dimension(format!(
                "means of length {} and {} against factors with {} and {} rows",
                mu_x1.len(),
                mu_x2.len(),
                f.n1(),
                f.n2()
            )));
        }
        check_finite_vec(&mu_x1, "mu_x1")?;
        check_finite_vec(&mu_x2, "mu_x2")?;
        let sigma_x1 = &f.p_c1 * f.p_c1.transpose() + &f.p_1 * f.p_1.transpose();
        let sigma_x2 = &f.p_c2 * f.p_c2.transpose() + &f.p_2 * f.p_2.transpose();
        let sigma_x12 = &f.p_c1 * f.p_c2.transpose();
        let sqrt = f.joint_loading();
        Ok(JointComponent {
            mu_x1,
            mu_x2,
            sigma_x1,
            sigma_x2,
            sigma_x12,
            factors: Some(f),
            sqrt,
        })
    }

    pub fn n1(&self) -> usize {
        self.mu_x1.len()
    }

    pub fn n2(&self) -> usize {
        self.mu_x2.len()
    }

    pub fn mu_x1(&self) -> &DVector<f64> {
        &self.mu_x1
    }

    pub fn mu_x2(&self) -> &DVector<f64> {
        &self.mu_x2
    }

    pub fn sigma_x1(&self) -> &DMatrix<f64> {
        &self.sigma_x1
    }

    pub fn sigma_x2(&self) -> &DMatrix<f64> {
        &self.sigma_x2
    }

    pub fn sigma_x12(&self) -> &DMatrix<f64> {
        &self.sigma_x12
    }

    pub fn factors(&self) -> Option<&FactorModel> {
        self.factors.as_ref()
    }

    /// Joint mean `[mu_x1; mu_x2]`.
    pub fn mean(&self) -> DVector<f64> {
        linalg::vcat_vec(&self.mu_x1, &self.mu_x2)
    }

    /// Joint covariance `[[s1, s12], [s12^T, s2]]`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.n1(), self.n2());
        let mut s = DMatrix::zeros(n1 + n2, n1 + n2);
        s.view_mut((0, 0), (n1, n1)).copy_from(&self.sigma_x1);
        s.view_mut((n1, n1), (n2, n2)).copy_from(&self.sigma_x2);
        s.view_mut((0, n1), (n1, n2)).copy_from(&self.sigma_x12);
        s.view_mut((n1, 0), (n2, n1)).copy_from(&self.sigma_x12.transpose());
        s
    }

    /// A factor `L` with `L L^T = covariance()`; the latent loading when factors were supplied.
    pub fn sqrt_factor(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let g = DVector::from_fn(self.sqrt.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let n1 = self.n1();
        let (x1, x2) = match &self.factors {
            Some(f) => {
                let (sc, s1) = (f.p_c1.ncols(), f.p_1.ncols());
                let zc = g.rows(0, sc);
                let z1 = g.rows(sc, s1);
                let z2 = g.rows(sc + s1, f.p_2.ncols());
                (
                    &f.p_c1 * zc + &f.p_1 * z1 + &self.mu_x1,
                    &f.p_c2 * zc + &f.p_2 * z2 + &self.mu_x2,
                )
            }
            None => {
                let x = &self.sqrt * g;
                (
                    x.rows(0, n1) + &self.mu_x1,
                    x.rows(n1, self.n2()) + &self.mu_x2,
                )
            }
        };
        (x1, x2)
    }
}

/// Convenience wrapper building a component from a factor model.
pub fn component_from_factors(mu_x1: DVector<f64>, mu_x2: DVector<f64>, f: FactorModel) -> Result<JointComponent> {
    JointComponent::from_factors(mu_x1, mu_x2, f)
}

/// Mixture over class pairs with a `k1 x k2` prior.
#[derive(Debug, Clone)]
pub struct JointGmm {
    n1: usize,
    n2: usize,
    k1: usize,
    k2: usize,
    prior: Vec<f64>,
    components: BTreeMap<ClassPair, JointComponent>,
}

impl JointGmm {
    /// Validate and assemble. `prior` is `k1 x k2`; every pair with positive prior needs a component.
    pub fn new(n1: usize, n2: usize, prior: DMatrix<f64>, components: BTreeMap<ClassPair, JointComponent>) -> Result<Self> {
        let (k1, k2) = prior.shape();
        if k1 == 0 || k2 == 0 {
            return Err(Error::Model("prior must have at least one row and one column".into()));
        }
        if n1 == 0 {
            return Err(Error::Model("n1 must be positive".into()));
        }
        let mut p: Vec<f64> = Vec::with_capacity(k1 * k2);
        for i in 0..k1 {
            for k in 0..k2 {
                let v = prior[(i, k)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Model(format!("prior entry ({},{}) = {v} is not a probability", i + 1, k + 1)));
                }
                p.push(v);
            }
        }
        let total: f64 = p.iter().sum();
        let dev = (total - 1.0).abs();
        if dev > PRIOR_RENORM_TOL {
            return Err(Error::Model(format!("prior sums to {total}, not 1")));
        }
        if dev > PRIOR_SUM_TOL {
            p.iter_mut().for_each(|v| *v /= total);
        }
        for (pair, comp) in &components {
            if pair.i == 0 || pair.i > k1 || pair.k == 0 || pair.k > k2 {
                return Err(Error::Model(format!("component {pair} lies outside the {k1}x{k2} prior")));
            }
            if comp.n1() != n1 || comp.n2() != n2 {
                return Err(Error::Dimension(format!(
                    "component {pair} has dims ({}, {}), model has ({n1}, {n2})",
                    comp.n1(),
                    comp.n2()
                )));
            }
        }
        for i in 1..=k1 {
            for k in 1..=k2 {
                let pair = ClassPair::new(i, k);
                if p[(i - 1) * k2 + (k - 1)] > 0.0 && !components.contains_key(&pair) {
                    return Err(Error::Model(format!("pair {pair} has positive prior but no component")));
                }
            }
        }
        Ok(JointGmm {
            n1,
            n2,
            k1,
            k2,
            prior: p,
            components,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    /// Prior probability of a pair; zero outside the grid.
    pub fn prior(&self, pair: ClassPair) -> f64 {
        if pair.i == 0 || pair.i > self.k1 || pair.k == 0 || pair.k > self.k2 {
            return 0.0;
        }
        self.prior[(pair.i - 1) * self.k2 + (pair.k - 1)]
    }

    /// Marginal prior of the first class label.
    pub fn prior_c1(&self, i: usize) -> f64 {
        (1..=self.k2).map(|k| self.prior(ClassPair::new(i, k))).sum()
    }

    pub fn prior_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k1, self.k2, &self.prior)
    }

    pub fn component(&self, pair: ClassPair) -> Option<&JointComponent> {
        self.components.get(&pair)
    }

    pub fn components(&self) -> &BTreeMap<ClassPair, JointComponent> {
        &self.components
    }

    /// Pairs with positive prior, in lexicographic order.
    pub fn support(&self) -> Vec<ClassPair> {
        let mut out = Vec::new();
        for i in 1..=self.k1 {
            for k in 1..=self.k2 {
                let pair = ClassPair::new(i, k);
                if self.prior(pair) > 0.0 {
                    out.push(pair);
                }
            }
        }
        out
    }

    /// Whether every supported component has zero mean.
    pub fn is_zero_mean(&self) -> bool {
        self.support().iter().all(|p| {
            let c = &self.components[p];
            c.mu_x1.iter().chain(c.mu_x2.iter()).all(|&v| v == 0.0)
        })
    }

    pub(crate) fn supported_component(&self, pair: ClassPair) -> &JointComponent {
        &self.components[&pair]
    }
}

/// Index sets used by the classification analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    /// Pairs with positive prior.
    pub s: Vec<ClassPair>,
    /// Quadruples over `s` whose first labels differ.
    pub s_sic: Vec<Quadruple>,
    /// Quadruples over `s` with distinct pairs.
    pub s_dc: Vec<Quadruple>,
}

/// Enumerate `S`, `S_SIC` and `S_DC` in lexicographic order.
pub fn index_sets(model: &JointGmm) -> IndexSets {
    let s = model.support();
    let mut s_sic = Vec::new();
    let mut s_dc = Vec::new();
    for &a in &s {
        for &b in &s {
            if a == b {
                continue;
            }
            let q = Quadruple { a, b };
            s_dc.push(q);
            if a.i != b.i {
                s_sic.push(q);
            }
        }
    }
    IndexSets { s, s_sic, s_dc }
}

/// Draws from the mixture together with their class labels.
#[derive(Debug, Clone)]
pub struct LabeledSampleSet {
    pub labels: Vec<ClassPair>,
    pub x1: Vec<DVector<f64>>,
    pub x2: Vec<DVector<f64>>,
    pub seed: u64,
}

impl LabeledSampleSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Pick a pair from the supported prior by inverse CDF on `u` in `[0, 1)`.
pub(crate) fn pick_pair(model: &JointGmm, support: &[ClassPair], u: f64) -> ClassPair {
    let mut acc = 0.0;
    for &p in support {
        acc += model.prior(p);
        if u < acc {
            return p;
        }
    }
    *support.last().expect("model has a non-empty support")
}

/// Draw one sample of a given component from `rng`.
pub(crate) fn draw_component<R: Rng>(model: &JointGmm, pair: ClassPair, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
    model.supported_component(pair).draw(rng)
}

/// Draw `count` labelled samples. Sample `t` uses its own stream, so the output does
/// not depend on how the work is scheduled.
pub fn sample_joint(model: &JointGmm, count: usize, seed: u64) -> LabeledSampleSet {
    let support = model.support();
    let draws: Vec<(ClassPair, DVector<f64>, DVector<f64>)> = (0..count as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(crate::rng::derive_seed(seed, &[tag::SAMPLE]), t);
            let pair = pick_pair(model, &support, rng.random::<f64>());
            let (x1, x2) = draw_component(model, pair, &mut rng);
            (pair, x1, x2)
        })
        .collect();
    let mut out = LabeledSampleSet {
        labels: Vec::with_capacity(count),
        x1: Vec::with_capacity(count),
        x2: Vec::with_capacity(count),
        seed,
    };
    for (p, a, b) in draws {
        out.labels.push(p);
        out.x1.push(a);
        out.x2.push(b);
    }
    out
}
