mod oracle;

use gmmsi::classify::{
    bhatt_exponent, classification_phase_verdict, diversity_order, Mode, Outcome,
};
use gmmsi::geometry::{default_geometry, GeometryTable, RankTriple};
use gmmsi::model::{gauss_334, random_low_rank, sample_joint, table_one, ClassPair, LowRankShape, Quadruple};
use gmmsi::reconstruct::{reconstruction_phase_verdict, ReconTheorem, Reconstructor, Target};
use gmmsi::sensing::{observe, SensingPair};
use nalgebra::DVector;

use oracle::*;

fn small_shape(n1: usize, n2: usize) -> LowRankShape {
    LowRankShape {
        n1,
        n2,
        k1: 2,
        k2: 1,
        max_common: 2,
        max_individual: 2,
        random_means: true,
    }
}

#[test]
fn bhattacharyya_exponent_matches_quadrature() {
    for (seed, (m1, m2)) in (0..10u64).flat_map(|s| [(s, (1, 0)), (s + 100, (1, 1))]) {
        let model = random_low_rank(small_shape(3, 2), seed);
        let phi = SensingPair::gaussian(m1, 3, m2, 2, seed);
        let sigma2 = 0.05 + (seed % 7) as f64 * 0.1;
        let (a, b) = (ClassPair::new(1, 1), ClassPair::new(2, 1));
        let k = bhatt_exponent(&model, &phi, a, b, sigma2).unwrap().k;
        let pa = projected_moments(model.component(a).unwrap(), &phi, sigma2);
        let pb = projected_moments(model.component(b).unwrap(), &phi, sigma2);
        let bc = bhattacharyya_quadrature((&pa.0, &pa.1), (&pb.0, &pb.1));
        assert!((bc - (-k).exp()).abs() < 1e-6, "seed {seed}: quadrature {bc}, closed form {}", (-k).exp());
    }
}

#[test]
fn identical_components_have_zero_exponent() {
    let model = table_one(3);
    let phi = SensingPair::gaussian(5, 20, 3, 12, 1);
    let a = ClassPair::new(1, 2);
    let t = bhatt_exponent(&model, &phi, a, a, 1e-3).unwrap();
    assert!(t.k.abs() < 1e-9);
}

#[test]
fn gmm_cme_matches_dense_formula() {
    for seed in 0..20u64 {
        let model = random_low_rank(small_shape(6, 4), seed);
        let phi = SensingPair::gaussian(3, 6, 2, 4, seed);
        let sigma2 = 10f64.powi(-((seed % 5) as i32) - 1);
        let s = sample_joint(&model, 1, seed);
        let obs = observe(&phi, &s.x1[0], &s.x2[0], sigma2, seed).unwrap();
        let y = obs.stacked();
        let pairs = model.support();
        let logs: Vec<f64> = pairs
            .iter()
            .map(|&p| {
                let (m, c) = projected_moments(model.component(p).unwrap(), &phi, sigma2);
                model.prior(p).ln() + log_density(&y, &m, &c)
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        let mut expect = DVector::zeros(10);
        for (p, l) in pairs.iter().zip(&logs) {
            expect += dense_cme(model.component(*p).unwrap(), &phi, &y, sigma2) * ((l - top).exp() / z);
        }
        let rec = Reconstructor::new(&model, &phi).unwrap();
        let got = rec.gmm_cme(&obs, Target::Joint).unwrap();
        let got1 = rec.gmm_cme(&obs, Target::X1).unwrap();
        let scale = expect.norm().max(1.0);
        assert!((&got - &expect).norm() < 1e-8 * scale, "seed {seed}");
        assert!((got1 - expect.rows(0, 6)).norm() < 1e-8 * scale, "seed {seed}");
    }
}

#[test]
fn gaussian_mmse_matches_trace_formula() {
    let model = gauss_334(4);
    for (seed, (m1, m2)) in [(0u64, (2usize, 2usize)), (1, (3, 0)), (2, (1, 3)), (3, (5, 4))] {
        let phi = SensingPair::gaussian(m1, 5, m2, 4, seed);
        let rec = Reconstructor::new(&model, &phi).unwrap();
        for sigma2 in [1.0, 1e-2, 1e-4] {
            let got = rec.gaussian_mmse(sigma2, Target::X1).unwrap();
            let want = dense_mmse_x1(model.component(ClassPair::new(1, 1)).unwrap(), &phi, sigma2);
            assert!((got - want).abs() < 1e-9 * want.abs().max(1e-3), "{m1},{m2} at {sigma2}: {got} vs {want}");
        }
    }
}

#[test]
fn table_one_ranks() {
    let geom = default_geometry(&table_one(11)).unwrap();
    for r in geom.components().values() {
        assert_eq!(*r, RankTriple::new(7, 6, 9));
    }
    let expect = [
        ((1, 1, 1, 2), (8, 8, 12)),
        ((1, 1, 2, 1), (10, 11, 17)),
        ((1, 1, 2, 2), (11, 11, 18)),
        ((1, 2, 2, 1), (9, 10, 15)),
        ((1, 2, 2, 2), (10, 11, 17)),
        ((2, 1, 2, 2), (8, 8, 12)),
    ];
    for ((i, k, j, l), (a, b, c)) in expect {
        let e = geom.pair(Quadruple::new(i, k, j, l)).unwrap();
        assert_eq!(e.ranks, RankTriple::new(a, b, c));
    }
}

fn si_verdict(geom: &GeometryTable, m1: usize, m2: usize) -> (Outcome, f64) {
    let v = classification_phase_verdict(geom, m1, m2, Mode::SideInfo).unwrap();
    (v.outcome, v.d)
}

#[test]
fn table_one_classification_thresholds() {
    let geom = default_geometry(&table_one(2)).unwrap();
    assert_eq!(si_verdict(&geom, 7, 0).0, Outcome::ErrorFloor);
    assert_eq!(si_verdict(&geom, 8, 0), (Outcome::PhaseTransition, 0.5));
    assert_eq!(si_verdict(&geom, 5, 4).0, Outcome::ErrorFloor);
    assert_eq!(si_verdict(&geom, 6, 4), (Outcome::PhaseTransition, 0.5));
    assert_eq!(si_verdict(&geom, 8, 4), (Outcome::PhaseTransition, 1.5));
    assert_eq!(diversity_order(&geom, 8, 4, Mode::SideInfo).d, 1.5);
}

#[test]
fn table_one_reconstruction_thresholds() {
    let geom = default_geometry(&table_one(2)).unwrap();
    let t = |m1, m2| reconstruction_phase_verdict(&geom, m1, m2, ReconTheorem::GmmSufficient).unwrap().transition;
    assert!(!t(5, 4) && t(6, 4));
    assert!(!t(7, 0) && t(8, 0));
}

#[test]
fn gaussian_staircase() {
    let geom = default_geometry(&gauss_334(1)).unwrap();
    for m2 in 0..=5usize {
        let first = (0..=5)
            .find(|&m1| reconstruction_phase_verdict(&geom, m1, m2, ReconTheorem::Gaussian).unwrap().transition);
        let want = match m2 {
            0 | 1 => 3,
            2 => 2,
            _ => 1,
        };
        assert_eq!(first, Some(want), "m2 = {m2}");
    }
}

#[test]
fn wide_single_gaussian_threshold() {
    let geom = GeometryTable::single(RankTriple::new(15, 4, 15));
    for m2 in 0..=8 {
        let first = (0..=20)
            .find(|&m1| reconstruction_phase_verdict(&geom, m1, m2, ReconTheorem::GmmSufficient).unwrap().transition);
        // With the full side signal the requirement reduces to m1 > 11.
        let want = if m2 >= 4 { 12 } else { 16 - m2 };
        assert_eq!(first, Some(want), "m2 = {m2}");
    }
}
