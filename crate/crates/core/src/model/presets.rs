//! Ready-made models used by the examples, tests and command-line presets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ClassPair, FactorModel, JointComponent, JointGmm};
use crate::rng::{derive_seed, stream_rng};

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn columns(pool: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    pool.select_columns(idx.iter())
}

/// Two-by-two zero-mean mixture with `n1 = 20`, `n2 = 12` whose components all have
/// ranks `(r_x1, r_x2, r_x) = (7, 6, 9)`.
///
/// Factor columns are drawn from shared Gaussian pools so that the pairwise ranks are
///
/// | pair          | r_x1 | r_x2 | r_x |
/// |---------------|------|------|-----|
/// | (1,1) & (1,2) | 8    | 8    | 12  |
/// | (2,1) & (2,2) | 8    | 8    | 12  |
/// | (1,1) & (2,1) | 10   | 11   | 17  |
/// | (1,1) & (2,2) | 11   | 11   | 18  |
/// | (1,2) & (2,1) | 9    | 10   | 15  |
/// | (1,2) & (2,2) | 10   | 11   | 17  |
pub fn table_one(seed: u64) -> JointGmm {
    // (common (x1 pool, x2 pool) column pairs, x1-only columns, x2-only columns)
    type Layout = (&'static [(usize, usize)], &'static [usize], &'static [usize]);
    const LAYOUT: [((usize, usize), Layout); 4] = [
        ((1, 1), (&[(7, 3), (6, 13), (4, 9), (2, 10)], &[9, 5, 0], &[5, 0])),
        ((1, 2), (&[(0, 0), (4, 9), (2, 10), (6, 11)], &[8, 9, 5], &[2, 5])),
        ((2, 1), (&[(0, 7), (8, 9), (6, 12), (3, 6)], &[10, 4, 9], &[2, 4])),
        ((2, 2), (&[(8, 9), (9, 6), (1, 8), (6, 12)], &[3, 4, 10], &[1, 4])),
    ];
    let mut rng = stream_rng(derive_seed(seed, &[0x7461_6231]), 0);
    let u = gaussian_matrix(&mut rng, 20, 11);
    let v = gaussian_matrix(&mut rng, 12, 14);
    let mut comps = BTreeMap::new();
    for ((i, k), (common, own1, own2)) in LAYOUT {
        let cu: Vec<usize> = common.iter().map(|c| c.0).collect();
        let cv: Vec<usize> = common.iter().map(|c| c.1).collect();
        let f = FactorModel::new(columns(&u, &cu), columns(&v, &cv), columns(&u, own1), columns(&v, own2))
            .expect("layout dimensions are consistent");
        let comp = JointComponent::from_factors(DVector::zeros(20), DVector::zeros(12), f).expect("valid factors");
        comps.insert(ClassPair::new(i, k), comp);
    }
    JointGmm::new(20, 12, DMatrix::from_element(2, 2, 0.25), comps).expect("valid model")
}

/// Single zero-mean Gaussian with `n1 = 5`, `n2 = 4`, two common factors and one
/// individual factor per side, so `(r_x1, r_x2, r_x) = (3, 3, 4)`.
pub fn gauss_334(seed: u64) -> JointGmm {
    let mut rng = stream_rng(derive_seed(seed, &[0x6733_3334]), 0);
    let f = FactorModel::new(
        gaussian_matrix(&mut rng, 5, 2),
        gaussian_matrix(&mut rng, 4, 2),
        gaussian_matrix(&mut rng, 5, 1),
        gaussian_matrix(&mut rng, 4, 1),
    )
    .expect("consistent dimensions");
    let comp = JointComponent::from_factors(DVector::zeros(5), DVector::zeros(4), f).expect("valid factors");
    let mut comps = BTreeMap::new();
    comps.insert(ClassPair::new(1, 1), comp);
    JointGmm::new(5, 4, DMatrix::from_element(1, 1, 1.0), comps).expect("valid model")
}

/// Shape parameters for [`random_low_rank`].
#[derive(Debug, Clone, Copy)]
pub struct LowRankShape {
    pub n1: usize,
    pub n2: usize,
    pub k1: usize,
    pub k2: usize,
    /// Upper bound on the number of common factor columns per component.
    pub max_common: usize,
    /// Upper bound on the number of individual factor columns per side.
    pub max_individual: usize,
    /// Draw nonzero Gaussian means when set.
    pub random_means: bool,
}

/// Mixture with independently drawn Gaussian factors of random widths and uniform prior.
pub fn random_low_rank(shape: LowRankShape, seed: u64) -> JointGmm {
    let mut rng = stream_rng(derive_seed(seed, &[0x726c_6f77]), 0);
    let mut comps = BTreeMap::new();
    for i in 1..=shape.k1 {
        for k in 1..=shape.k2 {
            let sc = rng.random_range(0..=shape.max_common);
            let s1 = rng.random_range(0..=shape.max_individual);
            let s2 = rng.random_range(0..=shape.max_individual);
            let f = FactorModel::new(
                gaussian_matrix(&mut rng, shape.n1, sc),
                gaussian_matrix(&mut rng, shape.n2, sc),
                gaussian_matrix(&mut rng, shape.n1, s1),
                gaussian_matrix(&mut rng, shape.n2, s2),
            )
            .expect("consistent dimensions");
            let (mu1, mu2) = if shape.random_means {
                (
                    DVector::from_fn(shape.n1, |_, _| rng.sample::<f64, _>(StandardNormal)),
                    DVector::from_fn(shape.n2, |_, _| rng.sample::<f64, _>(StandardNormal)),
                )
            } else {
                (DVector::zeros(shape.n1), DVector::zeros(shape.n2))
            };
            comps.insert(
                ClassPair::new(i, k),
                JointComponent::from_factors(mu1, mu2, f).expect("valid factors"),
            );
        }
    }
    let p = 1.0 / (shape.k1 * shape.k2) as f64;
    JointGmm::new(shape.n1, shape.n2, DMatrix::from_element(shape.k1, shape.k2, p), comps).expect("valid model")
}
