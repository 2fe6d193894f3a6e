use gmmsi::experiments::{
    region_map, run_sweep, KernelPolicy, Predicate, ProbeConfig, ProbeTag, SigmaGrid, SweepConfig, Task,
};
use gmmsi::model::{gauss_334, table_one};
use gmmsi::reconstruct::ReconTheorem;
use gmmsi::sensing::KernelKind;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let model = table_one(1);
    for task in [Task::ClassifySi, Task::ReconstructSi, Task::ClassifyDc] {
        let mut cfg = SweepConfig::new(task, 6, 4);
        cfg.trials = 600;
        cfg.grid = SigmaGrid::log_spaced(1e-1, 1e-3, 2).unwrap();
        cfg.min_errors = 5;
        cfg.max_trials = 6000;
        cfg.bound_kernels = 16;
        let one = in_pool(1, || run_sweep(&model, &cfg).unwrap().to_csv());
        let four = in_pool(4, || run_sweep(&model, &cfg).unwrap().to_csv());
        assert_eq!(one, four, "{task}");
    }
}

#[test]
fn seed_changes_the_draws() {
    let model = table_one(1);
    let mut cfg = SweepConfig::new(Task::ClassifySi, 6, 4);
    cfg.trials = 400;
    cfg.grid = SigmaGrid::from_values(vec![1e-1]).unwrap();
    let a = run_sweep(&model, &cfg).unwrap();
    cfg.seed = 9;
    let b = run_sweep(&model, &cfg).unwrap();
    assert_ne!(a.to_csv(), b.to_csv());
}

#[test]
fn reconstruction_orderings_hold() {
    let model = table_one(1);
    let mut cfg = SweepConfig::new(Task::ReconstructSi, 6, 4);
    cfg.trials = 2000;
    cfg.grid = SigmaGrid::log_spaced(1e-1, 1e-4, 1).unwrap();
    let curve = run_sweep(&model, &cfg).unwrap();
    for r in &curve.records {
        let cr = r.mse_cr.unwrap();
        let lb = r.mse_lb.unwrap();
        let se = r.std_err.max(r.mse_cr_se.unwrap());
        assert!(lb <= r.empirical + 3.0 * r.std_err, "{r:?}");
        assert!(r.empirical <= cr + 3.0 * se, "{r:?}");
        // Side information never hurts the conditional mean.
        assert!(r.empirical <= r.mse_no_side.unwrap() + 3.0 * r.mse_no_side_se.unwrap());
    }
}

#[test]
fn classification_bound_dominates_errors() {
    let model = table_one(1);
    let mut cfg = SweepConfig::new(Task::ClassifySi, 8, 4);
    cfg.trials = 2000;
    cfg.grid = SigmaGrid::log_spaced(1e-1, 1e-3, 1).unwrap();
    let curve = run_sweep(&model, &cfg).unwrap();
    for r in &curve.records {
        let rate = r.errors.unwrap() as f64 / r.trials as f64;
        assert!(rate <= r.perr_bound.unwrap() + 3.0 * r.std_err, "{r:?}");
        assert!(r.perr_bound_lower.unwrap() <= r.perr_bound.unwrap());
    }
}

#[test]
fn identity_side_kernel_reports_full_side_dimension() {
    let model = gauss_334(1);
    let mut cfg = SweepConfig::new(Task::ReconstructSi, 2, 0);
    cfg.trials = 200;
    cfg.grid = SigmaGrid::from_values(vec![1e-2, 1e-4]).unwrap();
    cfg.kernel = KernelPolicy {
        kind: KernelKind::Identity2,
        freeze: Some(3),
    };
    let curve = run_sweep(&model, &cfg).unwrap();
    assert_eq!(curve.m2, 4);
    // A frozen kernel makes the Gaussian MMSE column exact.
    assert!(curve.records.iter().all(|r| r.mmse_gauss.is_some()));
}

#[test]
fn region_probe_agrees_with_gaussian_criterion() {
    let model = gauss_334(5);
    let probe = ProbeConfig::default();
    let grid = region_map(&model, 0..=4, 0..=4, &[Predicate::Recon(ReconTheorem::Gaussian)], Some(&probe)).unwrap();
    assert_eq!(grid.cells.len(), 25);
    for c in &grid.cells {
        let want = if c.verdicts[0].passes { ProbeTag::Transition } else { ProbeTag::Floor };
        assert_eq!(c.probe, Some(want), "cell ({}, {})", c.m1, c.m2);
    }
    let csv = grid.to_csv();
    assert!(csv.starts_with("m1,m2,gaussian,probe\n"));
    assert_eq!(csv.lines().count(), 26);
}
