//! Monte Carlo noise sweeps, log-log slope fits and `(m1, m2)` region maps.
//!
//! Trial `t` of a sweep draws its kernel, class pair, signal and unit noise from
//! streams keyed by `t`, and the same draws are reused at every noise level. Work is
//! split into fixed chunks whose partial sums are combined in chunk order, so results
//! are bit-identical for any thread count.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classification_phase_verdict, exp_decay_verdict, BoundEvaluator, Classifier, Mode, Outcome};
use crate::error::{Error, Result};
use crate::geometry::{default_geometry, GeometryTable};
use crate::model::{draw_component, ClassPair, JointGmm};
use crate::projected::{ProjectedGmm, Target};
use crate::reconstruct::{reconstruction_phase_verdict, ReconTheorem, Reconstructor};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::sensing::{KernelKind, SensingPair};

/// Hard cap on trials per grid point.
pub const MAX_TRIALS_CAP: u64 = 1_000_000;
/// Slopes below this over the smallest decade count as an error floor.
pub const FLOOR_SLOPE: f64 = 0.1;
const CHUNK: u64 = 256;
const Z_TWO_SIDED: f64 = 1.959_963_984_540_054;
const Z_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ClassifySi,
    ClassifyDc,
    ReconstructSi,
    ReconstructDc,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::ClassifySi => "classify_si",
            Task::ClassifyDc => "classify_dc",
            Task::ReconstructSi => "reconstruct_si",
            Task::ReconstructDc => "reconstruct_dc",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::ClassifySi | Task::ClassifyDc)
    }

    pub fn mode(&self) -> Mode {
        match self {
            Task::ClassifySi | Task::ReconstructSi => Mode::SideInfo,
            Task::ClassifyDc | Task::ReconstructDc => Mode::Distributed,
        }
    }

    fn target(&self) -> Target {
        match self.mode() {
            Mode::SideInfo => Target::X1,
            Mode::Distributed => Target::Joint,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify_si" => Ok(Task::ClassifySi),
            "classify_dc" => Ok(Task::ClassifyDc),
            "reconstruct_si" => Ok(Task::ReconstructSi),
            "reconstruct_dc" => Ok(Task::ReconstructDc),
            _ => Err(Error::InvalidInput(format!("unknown task {s:?}"))),
        }
    }
}

/// Strictly decreasing list of noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaGrid {
    pub values: Vec<f64>,
}

impl SigmaGrid {
    /// `per_decade` log-spaced points per decade from `max` down to `min`, both included.
    pub fn log_spaced(max: f64, min: f64, per_decade: usize) -> Result<Self> {
        if !(min > 0.0 && max >= min && max.is_finite()) || per_decade == 0 {
            return Err(Error::InvalidInput(format!(
                "bad grid: max {max}, min {min}, {per_decade} per decade"
            )));
        }
        let (hi, lo) = (max.log10(), min.log10());
        let steps = (hi - lo) * per_decade as f64;
        let n = steps.round();
        if (steps - n).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "grid from {max} to {min} is not a whole number of steps at {per_decade} per decade"
            )));
        }
        let values = (0..=n as usize)
            .map(|j| 10f64.powf(hi - j as f64 / per_decade as f64))
            .collect();
        Ok(SigmaGrid { values })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let g = SigmaGrid { values };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput("noise grid is empty".into()));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput("noise variances must be positive and finite".into()));
        }
        if self.values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("noise grid must be strictly decreasing".into()));
        }
        Ok(())
    }
}

impl Default for SigmaGrid {
    /// Five points per decade over `[1e-8, 1e-1]`.
    fn default() -> Self {
        SigmaGrid::log_spaced(1e-1, 1e-8, 5).expect("valid default grid")
    }
}

/// How kernels are drawn across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelPolicy {
    pub kind: KernelKind,
    /// Use one kernel drawn from this seed for every trial instead of a fresh one per trial.
    pub freeze: Option<u64>,
}

impl Default for KernelPolicy {
    fn default() -> Self {
        KernelPolicy {
            kind: KernelKind::Gaussian,
            freeze: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub task: Task,
    pub m1: usize,
    /// Ignored when the kernel policy fixes `phi2` to the identity.
    pub m2: usize,
    pub grid: SigmaGrid,
    pub trials: u64,
    pub seed: u64,
    pub kernel: KernelPolicy,
    /// Classification only: keep multiplying the trial count by ten at points with fewer
    /// errors than this, up to `max_trials`. Zero disables escalation.
    pub min_errors: u64,
    pub max_trials: u64,
    /// Classification only: number of trial kernels the analytic bound is averaged over.
    pub bound_kernels: usize,
}

impl SweepConfig {
    pub fn new(task: Task, m1: usize, m2: usize) -> Self {
        SweepConfig {
            task,
            m1,
            m2,
            grid: SigmaGrid::default(),
            trials: 10_000,
            seed: 0,
            kernel: KernelPolicy::default(),
            min_errors: 0,
            max_trials: MAX_TRIALS_CAP,
            bound_kernels: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.trials < 100 {
            return Err(Error::InvalidInput(format!("need at least 100 trials per point, got {}", self.trials)));
        }
        if self.max_trials > MAX_TRIALS_CAP || self.max_trials < self.trials {
            return Err(Error::InvalidInput(format!(
                "max_trials must lie in [{}, {MAX_TRIALS_CAP}], got {}",
                self.trials, self.max_trials
            )));
        }
        if self.bound_kernels == 0 {
            return Err(Error::InvalidInput("bound_kernels must be positive".into()));
        }
        Ok(())
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sigma2: f64,
    pub trials: u64,
    /// Error rate (classification) or MSE of the conditional-mean estimator. A
    /// classification point without errors reports the one-sided Wilson upper bound.
    pub empirical: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub std_err: f64,
    /// Classification: number of errors.
    pub errors: Option<u64>,
    /// Classification: union-Bhattacharyya bound averaged over trial kernels.
    pub perr_bound: Option<f64>,
    /// Side-information classification: matching lower bound.
    pub perr_bound_lower: Option<f64>,
    /// Reconstruction: MSE of classify-then-reconstruct.
    pub mse_cr: Option<f64>,
    pub mse_cr_se: Option<f64>,
    /// Side-information reconstruction: MSE of the conditional mean that ignores `y2`.
    pub mse_no_side: Option<f64>,
    pub mse_no_side_se: Option<f64>,
    /// Reconstruction of a single Gaussian: MMSE averaged over trial kernels.
    pub mmse_gauss: Option<f64>,
    /// Reconstruction: prior-weighted component MMSEs averaged over trial kernels.
    pub mse_lb: Option<f64>,
}

impl SweepRecord {
    fn has_zero_errors(&self) -> bool {
        self.errors == Some(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub task: Task,
    pub m1: usize,
    pub m2: usize,
    pub records: Vec<SweepRecord>,
}

/// Which column of a curve a slope is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Empirical,
    PerrBound,
    MseClassifyReconstruct,
    MseLowerBound,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

impl SweepCurve {
    pub fn csv_header(&self) -> &'static str {
        if self.task.is_classification() {
            "sigma2,perr_emp,perr_emp_lo,perr_emp_hi,perr_bound,mode"
        } else {
            "sigma2,mse_emp,mse_cr_emp,mmse_gauss_formula,mse_lb,m1,m2"
        }
    }

    /// CSV with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(self.csv_header());
        s.push('\n');
        for r in &self.records {
            if self.task.is_classification() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    fmt_num(r.sigma2),
                    fmt_num(r.empirical),
                    fmt_num(r.ci_lo),
                    fmt_num(r.ci_hi),
                    fmt_opt(r.perr_bound),
                    self.task.mode()
                );
            } else {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    fmt_num(r.sigma2),
                    fmt_num(r.empirical),
                    fmt_opt(r.mse_cr),
                    fmt_opt(r.mmse_gauss),
                    fmt_opt(r.mse_lb),
                    self.m1,
                    self.m2
                );
            }
        }
        s
    }

    fn series(&self, r: &SweepRecord, series: Series) -> f64 {
        match series {
            Series::Empirical if r.has_zero_errors() => f64::NAN,
            Series::Empirical => r.empirical,
            Series::PerrBound => r.perr_bound.unwrap_or(f64::NAN),
            Series::MseClassifyReconstruct => r.mse_cr.unwrap_or(f64::NAN),
            Series::MseLowerBound => r.mse_lb.unwrap_or(f64::NAN),
        }
    }

    /// Slope of `log(value)` against `log(sigma2)` over the smallest `decades` decades.
    pub fn fit_slope(&self, decades: f64, series: Series) -> Result<SlopeFit> {
        let pts: Vec<(f64, f64)> = self.records.iter().map(|r| (r.sigma2, self.series(r, series))).collect();
        fit_loglog_slope(&pts, decades)
    }

    /// Error floor when the slope over the smallest decade is below [`FLOOR_SLOPE`].
    pub fn is_floor(&self, series: Series) -> Result<bool> {
        Ok(self.fit_slope(1.0, series)?.slope < FLOOR_SLOPE)
    }
}

/// Result of a log-log least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Points in the window dropped for being zero, negative or not finite.
    pub excluded: usize,
}

/// Least-squares slope of `log(value)` on `log(sigma2)` over points with
/// `sigma2 <= min_sigma2 * 10^decades`.
pub fn fit_loglog_slope(points: &[(f64, f64)], decades: f64) -> Result<SlopeFit> {
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Err(Error::UndefinedSlope { usable: 0 });
    }
    let hi = lo * 10f64.powf(decades) * (1.0 + 1e-9);
    let window: Vec<&(f64, f64)> = points.iter().filter(|p| p.0 <= hi).collect();
    let usable: Vec<(f64, f64)> = window
        .iter()
        .filter(|p| p.1.is_finite() && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::UndefinedSlope { usable: usable.len() });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        used: usable.len(),
        excluded: window.len() - usable.len(),
    })
}

/// Two-sided 95% Wilson score interval for `errors` out of `trials`; with no errors
/// the upper end is the one-sided 95% bound.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    if errors == 0 {
        let z2 = Z_ONE_SIDED * Z_ONE_SIDED;
        return (0.0, z2 / (n + z2));
    }
    let p = errors as f64 / n;
    let z2 = Z_TWO_SIDED * Z_TWO_SIDED;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_TWO_SIDED * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Largest-remainder allocation of `total` trials to the supported pairs.
fn allocate(model: &JointGmm, support: &[ClassPair], total: u64) -> Vec<u64> {
    let raw: Vec<f64> = support.iter().map(|&p| model.prior(p) * total as f64).collect();
    let mut counts: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let mut left = total - counts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Draws shared by every grid point of one trial.
struct TrialDraw {
    pair: ClassPair,
    phi: SensingPair,
    x: DVector<f64>,
    clean: DVector<f64>,
    noise: DVector<f64>,
}

struct SweepContext<'a> {
    model: &'a JointGmm,
    cfg: &'a SweepConfig,
    support: Vec<ClassPair>,
    /// Stratum boundaries within one block of `cfg.trials` trials.
    bounds: Vec<u64>,
    frozen: Option<SensingPair>,
}

impl<'a> SweepContext<'a> {
    fn new(model: &'a JointGmm, cfg: &'a SweepConfig) -> Self {
        let support = model.support();
        let mut bounds = Vec::with_capacity(support.len());
        let mut acc = 0;
        for c in allocate(model, &support, cfg.trials) {
            acc += c;
            bounds.push(acc);
        }
        let frozen = cfg.kernel.freeze.map(|s| self_kernel(model, cfg, s));
        SweepContext {
            model,
            cfg,
            support,
            bounds,
            frozen,
        }
    }

    fn kernel(&self, t: u64) -> SensingPair {
        match &self.frozen {
            Some(k) => k.clone(),
            None => self_kernel(self.model, self.cfg, derive_seed(self.cfg.seed, &[tag::TRIAL, t])),
        }
    }

    fn draw(&self, t: u64) -> TrialDraw {
        let pos = t % self.cfg.trials;
        let idx = self.bounds.iter().position(|&b| pos < b).expect("allocation covers the block");
        let pair = self.support[idx];
        let phi = self.kernel(t);
        let mut rng = stream_rng(derive_seed(self.cfg.seed, &[tag::SAMPLE]), t);
        let (x1, x2) = draw_component(self.model, pair, &mut rng);
        let clean = crate::linalg::vcat_vec(&(&phi.phi1 * &x1), &(&phi.phi2 * &x2));
        let noise = DVector::from_fn(clean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        TrialDraw {
            pair,
            x: crate::linalg::vcat_vec(&x1, &x2),
            phi,
            clean,
            noise,
        }
    }
}

fn self_kernel(model: &JointGmm, cfg: &SweepConfig, seed: u64) -> SensingPair {
    SensingPair::draw(cfg.kernel.kind, cfg.m1, model.n1(), cfg.m2, model.n2(), seed)
}

/// Run a sweep.
pub fn run_sweep(model: &JointGmm, cfg: &SweepConfig) -> Result<SweepCurve> {
    cfg.validate()?;
    let ctx = SweepContext::new(model, cfg);
    let records = if cfg.task.is_classification() {
        classify_sweep(&ctx)?
    } else {
        reconstruct_sweep(&ctx)?
    };
    Ok(SweepCurve {
        task: cfg.task,
        m1: cfg.m1,
        m2: match cfg.kernel.kind {
            KernelKind::Gaussian => cfg.m2,
            KernelKind::Identity2 => model.n2(),
        },
        records,
    })
}

fn chunks(start: u64, end: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut a = start;
    while a < end {
        let b = (a + CHUNK).min(end);
        out.push((a, b));
        a = b;
    }
    out
}

fn classify_sweep(ctx: &SweepContext) -> Result<Vec<SweepRecord>> {
    let cfg = ctx.cfg;
    let sig = &cfg.grid.values;
    let npts = sig.len();
    let mode = cfg.task.mode();
    let mut errors = vec![0u64; npts];
    let mut done = vec![0u64; npts];
    let mut active: Vec<usize> = (0..npts).collect();
    let mut start = 0u64;
    let mut end = cfg.trials;
    loop {
        let parts: Vec<Result<Vec<u64>>> = chunks(start, end)
            .into_par_iter()
            .map(|(a, b)| {
                let mut errs = vec![0u64; active.len()];
                for t in a..b {
                    let d = ctx.draw(t);
                    let clf = Classifier::from_projected(ProjectedGmm::for_classification(ctx.model, &d.phi)?);
                    for (slot, &p) in active.iter().enumerate() {
                        let y = &d.clean + &d.noise * sig[p].sqrt();
                        let wrong = match mode {
                            Mode::SideInfo => clf.side_info_y(&y, sig[p]) != d.pair.i,
                            Mode::Distributed => clf.distributed_y(&y, sig[p]) != d.pair,
                        };
                        errs[slot] += wrong as u64;
                    }
                }
                Ok(errs)
            })
            .collect();
        for part in parts {
            for (slot, e) in part?.into_iter().enumerate() {
                errors[active[slot]] += e;
            }
        }
        for &p in &active {
            done[p] = end;
        }
        active.retain(|&p| errors[p] < cfg.min_errors && done[p] < cfg.max_trials);
        if active.is_empty() {
            break;
        }
        start = end;
        end = (end * 10).min(cfg.max_trials);
    }

    let nk = if ctx.frozen.is_some() { 1 } else { cfg.bound_kernels.min(cfg.trials as usize) };
    let bounds: Vec<Result<Vec<(f64, Option<f64>)>>> = (0..nk as u64)
        .into_par_iter()
        .map(|t| {
            let phi = ctx.kernel(t);
            let ev = BoundEvaluator::new(ctx.model, &phi, mode)?;
            Ok(sig.iter().map(|&s| (ev.upper(s), ev.lower(s))).collect())
        })
        .collect();
    let mut upper = vec![0.0; npts];
    let mut lower = vec![0.0; npts];
    let mut has_lower = false;
    for b in bounds {
        for (p, (u, l)) in b?.into_iter().enumerate() {
            upper[p] += u;
            if let Some(l) = l {
                lower[p] += l;
                has_lower = true;
            }
        }
    }

    Ok((0..npts)
        .map(|p| {
            let n = done[p];
            let e = errors[p];
            let (lo, hi) = wilson_interval(e, n);
            let rate = e as f64 / n as f64;
            SweepRecord {
                sigma2: sig[p],
                trials: n,
                empirical: if e == 0 { hi } else { rate },
                ci_lo: lo,
                ci_hi: hi,
                std_err: (rate * (1.0 - rate) / n as f64).sqrt(),
                errors: Some(e),
                perr_bound: Some(upper[p] / nk as f64),
                perr_bound_lower: has_lower.then(|| lower[p] / nk as f64),
                mse_cr: None,
                mse_cr_se: None,
                mse_no_side: None,
                mse_no_side_se: None,
                mmse_gauss: None,
                mse_lb: None,
            }
        })
        .collect())
}

/// Running sums for one grid point of a reconstruction sweep.
#[derive(Clone, Copy, Default)]
struct ReconSums {
    main: f64,
    main2: f64,
    cr: f64,
    cr2: f64,
    no_side: f64,
    no_side2: f64,
    lb: f64,
}

impl ReconSums {
    fn add(&mut self, o: &ReconSums) {
        self.main += o.main;
        self.main2 += o.main2;
        self.cr += o.cr;
        self.cr2 += o.cr2;
        self.no_side += o.no_side;
        self.no_side2 += o.no_side2;
        self.lb += o.lb;
    }
}

fn mean_se(sum: f64, sum2: f64, n: f64) -> (f64, f64) {
    let mean = sum / n;
    let var = ((sum2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

fn reconstruct_sweep(ctx: &SweepContext) -> Result<Vec<SweepRecord>> {
    let cfg = ctx.cfg;
    let sig = &cfg.grid.values;
    let npts = sig.len();
    let target = cfg.task.target();
    let side_info = cfg.task.mode() == Mode::SideInfo;
    let n1 = ctx.model.n1();
    let single = ctx.support.len() == 1;
    let parts: Vec<Result<Vec<ReconSums>>> = chunks(0, cfg.trials)
        .into_par_iter()
        .map(|(a, b)| {
            let mut sums = vec![ReconSums::default(); npts];
            for t in a..b {
                let d = ctx.draw(t);
                let rec = Reconstructor::from_projected(ProjectedGmm::new(ctx.model, &d.phi)?);
                let no_side = if side_info {
                    Some(Reconstructor::from_projected(ProjectedGmm::new(ctx.model, &d.phi.without_side())?))
                } else {
                    None
                };
                let truth = match target {
                    Target::X1 => d.x.rows(0, n1).into_owned(),
                    Target::Joint => d.x.clone(),
                };
                let err = |est: DVector<f64>| match target {
                    Target::X1 => (est.rows(0, n1) - &truth).norm_squared(),
                    Target::Joint => (est - &truth).norm_squared(),
                };
                for (p, s) in sums.iter_mut().enumerate() {
                    let y = &d.clean + &d.noise * sig[p].sqrt();
                    let main = err(rec.posterior_y(&y, sig[p]).estimate);
                    let cr = err(rec.classify_reconstruct_y(&y, sig[p]));
                    s.main += main;
                    s.main2 += main * main;
                    s.cr += cr;
                    s.cr2 += cr * cr;
                    if let Some(ns) = &no_side {
                        let y1 = y.rows(0, d.phi.m1()).into_owned();
                        let e = err(ns.posterior_y(&y1, sig[p]).estimate);
                        s.no_side += e;
                        s.no_side2 += e * e;
                    }
                    s.lb += rec.mse_lower_bound_unchecked(sig[p], target);
                }
            }
            Ok(sums)
        })
        .collect();
    let mut total = vec![ReconSums::default(); npts];
    for part in parts {
        for (p, s) in part?.iter().enumerate() {
            total[p].add(s);
        }
    }
    let n = cfg.trials as f64;
    Ok((0..npts)
        .map(|p| {
            let s = &total[p];
            let (m, se) = mean_se(s.main, s.main2, n);
            let (cr, cr_se) = mean_se(s.cr, s.cr2, n);
            let (ns, ns_se) = mean_se(s.no_side, s.no_side2, n);
            let lb = s.lb / n;
            SweepRecord {
                sigma2: sig[p],
                trials: cfg.trials,
                empirical: m,
                ci_lo: m - Z_TWO_SIDED * se,
                ci_hi: m + Z_TWO_SIDED * se,
                std_err: se,
                errors: None,
                perr_bound: None,
                perr_bound_lower: None,
                mse_cr: Some(cr),
                mse_cr_se: Some(cr_se),
                mse_no_side: side_info.then_some(ns),
                mse_no_side_se: side_info.then_some(ns_se),
                mmse_gauss: single.then_some(lb),
                mse_lb: Some(lb),
            }
        })
        .collect())
}

/// A rank criterion evaluated on every cell of a region map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Recon(ReconTheorem),
    /// Probability of misclassification vanishes with the noise.
    Classify(Mode),
}

impl Predicate {
    pub fn name(&self) -> String {
        match self {
            Predicate::Recon(t) => t.as_str().to_string(),
            Predicate::Classify(Mode::SideInfo) => "classify_si".into(),
            Predicate::Classify(Mode::Distributed) => "classify_dc".into(),
        }
    }

    fn task(&self) -> Task {
        match self {
            Predicate::Recon(t) => match t {
                ReconTheorem::Gaussian | ReconTheorem::GmmSufficient | ReconTheorem::GmmNecessary => Task::ReconstructSi,
                _ => Task::ReconstructDc,
            },
            Predicate::Classify(Mode::SideInfo) => Task::ClassifySi,
            Predicate::Classify(Mode::Distributed) => Task::ClassifyDc,
        }
    }

    fn evaluate(&self, geom: &GeometryTable, m1: usize, m2: usize) -> Result<CellVerdict> {
        match self {
            Predicate::Recon(t) => {
                let v = reconstruction_phase_verdict(geom, m1, m2, *t)?;
                Ok(CellVerdict {
                    passes: v.transition,
                    label: v.outcome_str().to_string(),
                })
            }
            Predicate::Classify(mode) => {
                let v = if geom.zero_mean() {
                    classification_phase_verdict(geom, m1, m2, *mode)?
                } else {
                    exp_decay_verdict(geom, m1, m2, *mode)?
                };
                Ok(CellVerdict {
                    passes: v.outcome != Outcome::ErrorFloor,
                    label: v.outcome.as_str().to_string(),
                })
            }
        }
    }
}

impl std::str::FromStr for Predicate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify_si" => Ok(Predicate::Classify(Mode::SideInfo)),
            "classify_dc" => Ok(Predicate::Classify(Mode::Distributed)),
            _ => Ok(Predicate::Recon(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellVerdict {
    pub passes: bool,
    pub label: String,
}

/// Short empirical sweep used to tag a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub grid: SigmaGrid,
    pub trials: u64,
    pub seed: u64,
    pub kernel: KernelKind,
}

impl Default for ProbeConfig {
    /// Two points per decade over `[1e-10, 1e-8]`, 100 trials.
    fn default() -> Self {
        ProbeConfig {
            grid: SigmaGrid::log_spaced(1e-8, 1e-10, 2).expect("valid grid"),
            trials: 100,
            seed: 0,
            kernel: KernelKind::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTag {
    Transition,
    Floor,
}

impl ProbeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeTag::Transition => "transition",
            ProbeTag::Floor => "floor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCell {
    pub m1: usize,
    pub m2: usize,
    pub verdicts: Vec<CellVerdict>,
    pub probe: Option<ProbeTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    pub predicates: Vec<Predicate>,
    /// Row-major over `m1`, then `m2`.
    pub cells: Vec<RegionCell>,
}

impl RegionGrid {
    pub fn cell(&self, m1: usize, m2: usize) -> Option<&RegionCell> {
        self.cells.iter().find(|c| c.m1 == m1 && c.m2 == m2)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("m1,m2");
        for p in &self.predicates {
            s.push(',');
            s.push_str(&p.name());
        }
        s.push_str(",probe\n");
        for c in &self.cells {
            let _ = write!(s, "{},{}", c.m1, c.m2);
            for v in &c.verdicts {
                let _ = write!(s, ",{}", v.label);
            }
            let _ = writeln!(s, ",{}", c.probe.map(|p| p.as_str()).unwrap_or(""));
        }
        s
    }
}

fn probe_cell(model: &JointGmm, task: Task, m1: usize, m2: usize, probe: &ProbeConfig) -> Result<ProbeTag> {
    let mut cfg = SweepConfig::new(task, m1, m2);
    cfg.grid = probe.grid.clone();
    cfg.trials = probe.trials;
    cfg.max_trials = probe.trials;
    cfg.seed = derive_seed(probe.seed, &[tag::PROBE, m1 as u64, m2 as u64]);
    cfg.kernel = KernelPolicy {
        kind: probe.kernel,
        freeze: None,
    };
    cfg.bound_kernels = 1;
    let curve = run_sweep(model, &cfg)?;
    if task.is_classification() {
        let window_lo = probe.grid.values.last().copied().unwrap_or(0.0) * 10.0 * (1.0 + 1e-9);
        let quiet = curve
            .records
            .iter()
            .filter(|r| r.sigma2 <= window_lo)
            .all(|r| r.has_zero_errors());
        if quiet {
            return Ok(ProbeTag::Transition);
        }
    }
    match curve.is_floor(Series::Empirical) {
        Ok(true) => Ok(ProbeTag::Floor),
        Ok(false) => Ok(ProbeTag::Transition),
        Err(Error::UndefinedSlope { .. }) => Ok(ProbeTag::Transition),
        Err(e) => Err(e),
    }
}

/// Evaluate predicates on every `(m1, m2)` cell; with a probe, also run a short sweep for
/// the first predicate's task and tag the cell.
pub fn region_map(
    model: &JointGmm,
    m1_range: RangeInclusive<usize>,
    m2_range: RangeInclusive<usize>,
    predicates: &[Predicate],
    probe: Option<&ProbeConfig>,
) -> Result<RegionGrid> {
    if m1_range.is_empty() || m2_range.is_empty() {
        return Err(Error::InvalidInput("region ranges must be nonempty".into()));
    }
    let geom = default_geometry(model)?;
    let probe_task = predicates.first().map(|p| p.task()).unwrap_or(Task::ReconstructSi);
    let coords: Vec<(usize, usize)> = m1_range
        .flat_map(|a| m2_range.clone().map(move |b| (a, b)))
        .collect();
    let cells: Vec<Result<RegionCell>> = coords
        .par_iter()
        .map(|&(m1, m2)| {
            let verdicts = predicates
                .iter()
                .map(|p| p.evaluate(&geom, m1, m2))
                .collect::<Result<Vec<_>>>()?;
            let probe = match probe {
                Some(pc) => Some(probe_cell(model, probe_task, m1, m2, pc)?),
                None => None,
            };
            Ok(RegionCell { m1, m2, verdicts, probe })
        })
        .collect();
    Ok(RegionGrid {
        predicates: predicates.to_vec(),
        cells: cells.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gauss_334, table_one};

    #[test]
    fn grid_construction() {
        let g = SigmaGrid::default();
        assert_eq!(g.values.len(), 36);
        assert!((g.values[0] - 0.1).abs() < 1e-15);
        assert!((g.values[35] - 1e-8).abs() < 1e-22);
        assert!(SigmaGrid::from_values(vec![1e-2, 1e-2]).is_err());
        assert!(SigmaGrid::log_spaced(1e-1, 1e-8, 0).is_err());
        assert_eq!(SigmaGrid::log_spaced(1e-3, 1e-3, 4).unwrap().values.len(), 1);
    }

    #[test]
    fn synthetic_slopes() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|j| {
                let s = 10f64.powf(-1.0 - 0.25 * j as f64);
                (s, 3.0 * s.powf(0.5))
            })
            .collect();
        assert!((fit_loglog_slope(&pts, 2.0).unwrap().slope - 0.5).abs() < 1e-9);
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, 0.2)).collect();
        assert!(fit_loglog_slope(&flat, 2.0).unwrap().slope.abs() < 1e-9);
        let mut holes = pts.clone();
        for p in holes.iter_mut().skip(2) {
            p.1 = f64::NAN;
        }
        assert!(matches!(fit_loglog_slope(&holes, 1.0), Err(Error::UndefinedSlope { .. })));
    }

    #[test]
    fn wilson_properties() {
        let (lo, hi) = wilson_interval(5, 100);
        assert!(lo < 0.05 && 0.05 < hi);
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!((hi - 2.7055 / (1000.0 + 2.7055)).abs() < 1e-4);
    }

    #[test]
    fn allocation_is_proportional() {
        let m = table_one(1);
        let s = m.support();
        assert_eq!(allocate(&m, &s, 102), vec![26, 26, 25, 25]);
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::new(Task::ClassifySi, 3, 2);
        c.trials = 50;
        assert!(c.validate().is_err());
        c.trials = 100;
        c.max_trials = 2_000_000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_point_sweep() {
        let m = gauss_334(2);
        let mut c = SweepConfig::new(Task::ReconstructSi, 2, 2);
        c.grid = SigmaGrid::from_values(vec![1e-3]).unwrap();
        c.trials = 200;
        let curve = run_sweep(&m, &c).unwrap();
        assert_eq!(curve.records.len(), 1);
        let r = &curve.records[0];
        assert!(r.ci_lo <= r.empirical && r.empirical <= r.ci_hi);
        assert!(r.mmse_gauss.is_some());
    }

    #[test]
    fn empty_predicate_list() {
        let g = region_map(&gauss_334(1), 0..=2, 0..=1, &[], None).unwrap();
        assert_eq!(g.cells.len(), 6);
        assert!(g.cells.iter().all(|c| c.verdicts.is_empty() && c.probe.is_none()));
    }
}
