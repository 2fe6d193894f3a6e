//! Fully resolved runs. A job carries every parameter explicitly so a manifest can replay it
//! even if defaults change.

use std::fmt::Write as _;

use gmmsi::classify::{
    classification_phase_verdict, diversity_order, exp_decay_verdict, Mode, Verdict, VERDICT_CSV_HEADER,
};
use gmmsi::experiments::{
    region_map, run_sweep, KernelPolicy, Predicate, ProbeConfig, Series, SigmaGrid, SweepConfig, Task,
};
use gmmsi::geometry::{default_geometry, geometry_summary};
use gmmsi::linalg::{DEFAULT_RANGE_TOL, DEFAULT_TOL_FACTOR};
use gmmsi::model::JointGmm;
use gmmsi::reconstruct::{reconstruction_phase_verdict, ReconTheorem, RECON_VERDICT_CSV_HEADER};
use gmmsi::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::{Command, DiversityArgs, RankTableArgs, RegionArgs, SweepArgs, VerdictArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Job {
    RankTable {
        tol_factor: f64,
        range_tol: f64,
    },
    Verdict {
        m1: usize,
        m2: usize,
        task: Task,
        theorem: Option<ReconTheorem>,
    },
    Diversity {
        m1: usize,
        m2: usize,
        mode: Mode,
    },
    Sweep(SweepConfig),
    RegionMap {
        m1: (usize, usize),
        m2: (usize, usize),
        predicates: Vec<Predicate>,
        probe: Option<ProbeConfig>,
    },
}

/// Files to write plus a short human summary for standard output.
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidInput(format!("missing --{flag}")))
}

fn mismatch(cmd: &str) -> Error {
    Error::Config(format!("manifest does not describe a {cmd} run"))
}

/// Merge command-line flags over an optional recorded job.
pub fn resolve(cmd: &Command, model: &JointGmm, base: Option<Job>) -> Result<Job> {
    match cmd {
        Command::RankTable(a) => resolve_rank_table(a, base),
        Command::Verdict(a) => resolve_verdict(a, model, base),
        Command::Diversity(a) => resolve_diversity(a, base),
        Command::ClassifySweep(a) => resolve_sweep(a, true, base),
        Command::ReconstructSweep(a) => resolve_sweep(a, false, base),
        Command::RegionMap(a) => resolve_region(a, base),
    }
}

fn resolve_rank_table(a: &RankTableArgs, base: Option<Job>) -> Result<Job> {
    let (tf, rt) = match base {
        None => (DEFAULT_TOL_FACTOR, DEFAULT_RANGE_TOL),
        Some(Job::RankTable { tol_factor, range_tol }) => (tol_factor, range_tol),
        Some(_) => return Err(mismatch("rank-table")),
    };
    let tol_factor = a.tol_factor.unwrap_or(tf);
    let range_tol = a.range_tol.unwrap_or(rt);
    if !(tol_factor.is_finite() && tol_factor > 0.0 && range_tol.is_finite() && range_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive and finite".into()));
    }
    Ok(Job::RankTable { tol_factor, range_tol })
}

fn default_theorem(task: Task, model: &JointGmm) -> ReconTheorem {
    let single = model.support().len() == 1;
    match (task.mode(), single) {
        (Mode::SideInfo, true) => ReconTheorem::Gaussian,
        (Mode::SideInfo, false) => ReconTheorem::GmmSufficient,
        (Mode::Distributed, true) => ReconTheorem::DistGaussian,
        (Mode::Distributed, false) => ReconTheorem::DistGmmSufficient,
    }
}

fn resolve_verdict(a: &VerdictArgs, model: &JointGmm, base: Option<Job>) -> Result<Job> {
    let (m1, m2, task, theorem) = match base {
        None => (None, None, None, None),
        Some(Job::Verdict { m1, m2, task, theorem }) => (Some(m1), Some(m2), Some(task), theorem),
        Some(_) => return Err(mismatch("verdict")),
    };
    let m1 = need(a.m1.or(m1), "m1")?;
    let m2 = need(a.m2.or(m2), "m2")?;
    let task = match (a.task, a.theorem) {
        (Some(t), _) => t,
        (None, Some(th)) => match th {
            ReconTheorem::Gaussian | ReconTheorem::GmmSufficient | ReconTheorem::GmmNecessary => Task::ReconstructSi,
            _ => Task::ReconstructDc,
        },
        (None, None) => task.unwrap_or(Task::ClassifySi),
    };
    let theorem = if task.is_classification() {
        if a.theorem.is_some() {
            return Err(Error::TaskMismatch(format!("--theorem does not apply to task {task}")));
        }
        None
    } else {
        Some(a.theorem.or(theorem).unwrap_or_else(|| default_theorem(task, model)))
    };
    Ok(Job::Verdict { m1, m2, task, theorem })
}

fn resolve_diversity(a: &DiversityArgs, base: Option<Job>) -> Result<Job> {
    let (m1, m2, mode) = match base {
        None => (None, None, None),
        Some(Job::Diversity { m1, m2, mode }) => (Some(m1), Some(m2), Some(mode)),
        Some(_) => return Err(mismatch("diversity")),
    };
    Ok(Job::Diversity {
        m1: need(a.m1.or(m1), "m1")?,
        m2: need(a.m2.or(m2), "m2")?,
        mode: a.mode.or(mode).unwrap_or(Mode::SideInfo),
    })
}

fn resolve_sweep(a: &SweepArgs, classify: bool, base: Option<Job>) -> Result<Job> {
    let name = if classify { "classify-sweep" } else { "reconstruct-sweep" };
    let base = match base {
        None => None,
        Some(Job::Sweep(c)) if c.task.is_classification() == classify => Some(c),
        Some(_) => return Err(mismatch(name)),
    };
    let task = a
        .task
        .or(base.as_ref().map(|c| c.task))
        .unwrap_or(if classify { Task::ClassifySi } else { Task::ReconstructSi });
    if task.is_classification() != classify {
        return Err(Error::TaskMismatch(format!("task {task} cannot run under {name}")));
    }
    let m1 = need(a.m1.or(base.as_ref().map(|c| c.m1)), "m1")?;
    let m2 = need(a.m2.or(base.as_ref().map(|c| c.m2)), "m2")?;
    let mut cfg = match base {
        Some(mut c) => {
            c.task = task;
            c.m1 = m1;
            c.m2 = m2;
            c
        }
        None => SweepConfig::new(task, m1, m2),
    };
    if let Some(values) = &a.grid {
        cfg.grid = SigmaGrid::from_values(values.clone())?;
    } else if a.grid_max.is_some() || a.grid_min.is_some() || a.per_decade.is_some() {
        let max = a.grid_max.unwrap_or(cfg.grid.values[0]);
        let min = a.grid_min.unwrap_or(*cfg.grid.values.last().expect("grids are nonempty"));
        cfg.grid = SigmaGrid::log_spaced(max, min, a.per_decade.unwrap_or(5))?;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
        if a.max_trials.is_none() && cfg.max_trials < t {
            cfg.max_trials = t;
        }
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.kernel {
        cfg.kernel.kind = k;
    }
    if a.freeze_kernel.is_some() {
        cfg.kernel = KernelPolicy {
            kind: cfg.kernel.kind,
            freeze: a.freeze_kernel,
        };
    }
    if let Some(e) = a.min_errors {
        cfg.min_errors = e;
    }
    if let Some(m) = a.max_trials {
        cfg.max_trials = m;
    }
    if let Some(b) = a.bound_kernels {
        cfg.bound_kernels = b;
    }
    cfg.validate()?;
    Ok(Job::Sweep(cfg))
}

fn resolve_region(a: &RegionArgs, base: Option<Job>) -> Result<Job> {
    let (m1, m2, preds, probe) = match base {
        None => (None, None, None, None),
        Some(Job::RegionMap { m1, m2, predicates, probe }) => (Some(m1), Some(m2), Some(predicates), probe),
        Some(_) => return Err(mismatch("region-map")),
    };
    let predicates = need(a.theorem.clone().or(preds), "theorem")?;
    if predicates.is_empty() {
        return Err(Error::InvalidInput("--theorem needs at least one criterion".into()));
    }
    let mut probe = if a.probe { probe.or_else(|| Some(ProbeConfig::default())) } else { probe };
    if let Some(p) = probe.as_mut() {
        if let Some(t) = a.probe_trials {
            p.trials = t;
        }
        if let Some(s) = a.probe_seed {
            p.seed = s;
        }
        if p.trials < 100 {
            return Err(Error::InvalidInput(format!("probe needs at least 100 trials, got {}", p.trials)));
        }
    } else if a.probe_trials.is_some() || a.probe_seed.is_some() {
        return Err(Error::InvalidInput("--probe-trials and --probe-seed need --probe".into()));
    }
    Ok(Job::RegionMap {
        m1: need(a.m1.or(m1), "m1")?,
        m2: need(a.m2.or(m2), "m2")?,
        predicates,
        probe,
    })
}

fn classification_verdict(model: &JointGmm, m1: usize, m2: usize, mode: Mode) -> Result<Verdict> {
    let geom = default_geometry(model)?;
    if geom.zero_mean() {
        classification_phase_verdict(&geom, m1, m2, mode)
    } else {
        exp_decay_verdict(&geom, m1, m2, mode)
    }
}

fn d_str(d: f64) -> String {
    if d.is_infinite() {
        "inf".into()
    } else {
        format!("{d}")
    }
}

impl Job {
    pub fn run(&self, model: &JointGmm) -> Result<Artifacts> {
        match self {
            Job::RankTable { tol_factor, range_tol } => {
                let g = geometry_summary(model, *tol_factor, *range_tol)?;
                let mut summary = String::from("component  r_x1 r_x2 r_x\n");
                for (p, r) in g.components() {
                    let _ = writeln!(summary, "{:<10} {:>4} {:>4} {:>3}", p.to_string(), r.r_x1, r.r_x2, r.r_x);
                }
                Ok(Artifacts {
                    files: vec![
                        ("components.csv".into(), g.components_csv()),
                        ("pairs.csv".into(), g.pairs_csv()),
                    ],
                    summary,
                })
            }
            Job::Verdict { m1, m2, task, theorem } => {
                if task.is_classification() {
                    let v = classification_verdict(model, *m1, *m2, task.mode())?;
                    let csv = format!("{VERDICT_CSV_HEADER}\n{}\n", v.csv_row());
                    let summary = format!("outcome={} d={}\n", v.outcome.as_str(), d_str(v.d));
                    Ok(Artifacts {
                        files: vec![("verdict.csv".into(), csv)],
                        summary,
                    })
                } else {
                    let th = theorem.expect("reconstruction verdicts carry a criterion");
                    let geom = default_geometry(model)?;
                    let v = reconstruction_phase_verdict(&geom, *m1, *m2, th)?;
                    let csv = format!("{RECON_VERDICT_CSV_HEADER}\n{}\n", v.csv_row());
                    Ok(Artifacts {
                        files: vec![("verdict.csv".into(), csv)],
                        summary: format!("theorem={} outcome={}\n", th, v.outcome_str()),
                    })
                }
            }
            Job::Diversity { m1, m2, mode } => {
                let geom = default_geometry(model)?;
                let rep = diversity_order(&geom, *m1, *m2, *mode);
                let mut csv = String::from("i,k,j,l,d\n");
                for (q, d) in &rep.per_quadruple {
                    let _ = writeln!(csv, "{},{},{},{},{}", q.a.i, q.a.k, q.b.i, q.b.k, d);
                }
                let binding = rep.binding.map(|q| q.to_string()).unwrap_or_else(|| "none".into());
                Ok(Artifacts {
                    files: vec![("diversity.csv".into(), csv)],
                    summary: format!("d={} binding={}\n", d_str(rep.d), binding),
                })
            }
            Job::Sweep(cfg) => {
                let curve = run_sweep(model, cfg)?;
                let slope = match curve.fit_slope(1.0, Series::Empirical) {
                    Ok(f) => format!("{:.3}", f.slope),
                    Err(Error::UndefinedSlope { usable }) => format!("undefined ({usable} usable points)"),
                    Err(e) => return Err(e),
                };
                let last = curve.records.last().expect("grids are nonempty");
                let summary = format!(
                    "{} m1={} m2={} points={} last sigma2={:e} empirical={:e} slope(last decade)={}\n",
                    cfg.task,
                    curve.m1,
                    curve.m2,
                    curve.records.len(),
                    last.sigma2,
                    last.empirical,
                    slope
                );
                Ok(Artifacts {
                    files: vec![("sweep.csv".into(), curve.to_csv())],
                    summary,
                })
            }
            Job::RegionMap { m1, m2, predicates, probe } => {
                let grid = region_map(model, m1.0..=m1.1, m2.0..=m2.1, predicates, probe.as_ref())?;
                let first = predicates[0];
                let passing = grid.cells.iter().filter(|c| c.verdicts[0].passes).count();
                Ok(Artifacts {
                    files: vec![("region.csv".into(), grid.to_csv())],
                    summary: format!(
                        "{} cells, {} pass {}\n",
                        grid.cells.len(),
                        passing,
                        first.name()
                    ),
                })
            }
        }
    }
}
