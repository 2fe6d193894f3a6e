//! Rank geometry of the mixture: per-component and pairwise ranks of the covariance
//! blocks, mean-difference range tests, and the projected-rank formula for
//! block-diagonal Gaussian kernels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, in_range_with};
use crate::model::{ClassPair, JointGmm, Quadruple};

pub use crate::linalg::numerical_rank;

/// Ranks of `sigma_x1`, `sigma_x2` and the joint covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankTriple {
    pub r_x1: usize,
    pub r_x2: usize,
    pub r_x: usize,
}

impl RankTriple {
    pub fn new(r_x1: usize, r_x2: usize, r_x: usize) -> Self {
        RankTriple { r_x1, r_x2, r_x }
    }
}

/// Whether the mean difference of a pair lies in the range of the summed covariance,
/// for the `x1` block, the `x2` block and jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanFlags {
    pub mu1_in: bool,
    pub mu2_in: bool,
    pub mu_in: bool,
}

impl MeanFlags {
    /// Flags for identical means.
    pub const EQUAL: MeanFlags = MeanFlags {
        mu1_in: true,
        mu2_in: true,
        mu_in: true,
    };
}

/// Ranks of the summed covariances of two components plus the mean flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairEntry {
    pub ranks: RankTriple,
    pub means: MeanFlags,
}

/// Component ranks over `S` and pair entries over every ordered quadruple in `S_DC`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryTable {
    components: BTreeMap<ClassPair, RankTriple>,
    pairs: BTreeMap<Quadruple, PairEntry>,
    zero_mean: bool,
}

/// Rank of `Phi Sigma Phi^T` predicted from the component ranks:
/// `min(r_x, min(m1, r_x1) + min(m2, r_x2))`.
pub fn projected_rank(r: RankTriple, m1: usize, m2: usize) -> usize {
    r.r_x.min(m1.min(r.r_x1) + m2.min(r.r_x2))
}

/// Numerical rank of `phi * sigma * phi^T`.
pub fn projected_rank_numeric(phi: &DMatrix<f64>, sigma: &DMatrix<f64>, tol_factor: f64) -> Result<usize> {
    if phi.ncols() != sigma.nrows() || sigma.nrows() != sigma.ncols() {
        return Err(Error::Dimension(format!(
            "kernel {:?} against covariance {:?}",
            phi.shape(),
            sigma.shape()
        )));
    }
    numerical_rank(&(phi * sigma * phi.transpose()), tol_factor)
}

/// Ranks of the blocks of a joint covariance with `n1` leading coordinates.
pub fn rank_triple(sigma: &DMatrix<f64>, n1: usize, tol_factor: f64) -> Result<RankTriple> {
    let n = sigma.nrows();
    let n2 = n - n1;
    Ok(RankTriple {
        r_x1: numerical_rank(&sigma.view((0, 0), (n1, n1)).into_owned(), tol_factor)?,
        r_x2: numerical_rank(&sigma.view((n1, n1), (n2, n2)).into_owned(), tol_factor)?,
        r_x: numerical_rank(sigma, tol_factor)?,
    })
}

/// Compute the geometry table of a model.
///
/// `range_tol` is the relative residual below which a mean difference counts as lying
/// in the range of the summed covariance.
pub fn geometry_summary(model: &JointGmm, tol_factor: f64, range_tol: f64) -> Result<GeometryTable> {
    let support = model.support();
    let n1 = model.n1();
    let n2 = model.n2();
    let mut components = BTreeMap::new();
    for &p in &support {
        let c = model.supported_component(p);
        components.insert(p, rank_triple(&c.covariance(), n1, tol_factor)?);
    }
    let mut pairs = BTreeMap::new();
    for (ia, &a) in support.iter().enumerate() {
        for &b in &support[ia + 1..] {
            let ca = model.supported_component(a);
            let cb = model.supported_component(b);
            let sum = ca.covariance() + cb.covariance();
            let ranks = rank_triple(&sum, n1, tol_factor)?;
            let dmu = ca.mean() - cb.mean();
            let means = MeanFlags {
                mu1_in: in_range_with(
                    &dmu.rows(0, n1).into_owned(),
                    &sum.view((0, 0), (n1, n1)).into_owned(),
                    range_tol,
                    tol_factor,
                )?,
                mu2_in: in_range_with(
                    &dmu.rows(n1, n2).into_owned(),
                    &sum.view((n1, n1), (n2, n2)).into_owned(),
                    range_tol,
                    tol_factor,
                )?,
                mu_in: in_range_with(&dmu, &sum, range_tol, tol_factor)?,
            };
            let entry = PairEntry { ranks, means };
            pairs.insert(Quadruple { a, b }, entry);
            pairs.insert(Quadruple { a: b, b: a }, entry);
        }
    }
    Ok(GeometryTable {
        components,
        pairs,
        zero_mean: model.is_zero_mean(),
    })
}

impl GeometryTable {
    /// Build a table directly from ranks, for analysis without a concrete model.
    ///
    /// Each unordered pair is given once; means are taken as identical.
    pub fn from_ranks(components: BTreeMap<ClassPair, RankTriple>, pair_ranks: &[(ClassPair, ClassPair, RankTriple)]) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for &(a, b, r) in pair_ranks {
            if !components.contains_key(&a) || !components.contains_key(&b) || a == b {
                return Err(Error::InvalidInput(format!("pair {a} & {b} does not match the component list")));
            }
            let e = PairEntry {
                ranks: r,
                means: MeanFlags::EQUAL,
            };
            pairs.insert(Quadruple { a, b }, e);
            pairs.insert(Quadruple { a: b, b: a }, e);
        }
        let n = components.len();
        if pairs.len() != n * (n.saturating_sub(1)) {
            return Err(Error::InvalidInput("every pair of components needs pairwise ranks".into()));
        }
        Ok(GeometryTable {
            components,
            pairs,
            zero_mean: true,
        })
    }

    /// Single-component table, the Gaussian case.
    pub fn single(r: RankTriple) -> Self {
        let mut components = BTreeMap::new();
        components.insert(ClassPair::new(1, 1), r);
        GeometryTable {
            components,
            pairs: BTreeMap::new(),
            zero_mean: true,
        }
    }

    pub fn components(&self) -> &BTreeMap<ClassPair, RankTriple> {
        &self.components
    }

    pub fn component(&self, p: ClassPair) -> Option<RankTriple> {
        self.components.get(&p).copied()
    }

    pub fn pair(&self, q: Quadruple) -> Option<&PairEntry> {
        self.pairs.get(&q)
    }

    /// Whether every component has zero mean.
    pub fn zero_mean(&self) -> bool {
        self.zero_mean
    }

    /// Quadruples of distinct pairs, lexicographic.
    pub fn s_dc(&self) -> Vec<Quadruple> {
        self.pairs.keys().copied().collect()
    }

    /// Quadruples whose first labels differ, lexicographic.
    pub fn s_sic(&self) -> Vec<Quadruple> {
        self.pairs.keys().copied().filter(|q| q.a.i != q.b.i).collect()
    }

    /// CSV with one row per component: `i,k,r_x1,r_x2,r_x`.
    pub fn components_csv(&self) -> String {
        let mut s = String::from("i,k,r_x1,r_x2,r_x\n");
        for (p, r) in &self.components {
            let _ = writeln!(s, "{},{},{},{},{}", p.i, p.k, r.r_x1, r.r_x2, r.r_x);
        }
        s
    }

    /// CSV with one row per ordered quadruple of distinct pairs.
    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("i,k,j,l,r_x1_pair,r_x2_pair,r_x_pair,mu1_in,mu2_in,mu_in\n");
        for (q, e) in &self.pairs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                q.a.i,
                q.a.k,
                q.b.i,
                q.b.k,
                e.ranks.r_x1,
                e.ranks.r_x2,
                e.ranks.r_x,
                e.means.mu1_in,
                e.means.mu2_in,
                e.means.mu_in
            );
        }
        s
    }
}

/// Default geometry using the crate-wide tolerances.
pub fn default_geometry(model: &JointGmm) -> Result<GeometryTable> {
    geometry_summary(model, linalg::DEFAULT_TOL_FACTOR, linalg::DEFAULT_RANGE_TOL)
}
