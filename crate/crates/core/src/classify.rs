//! MAP classification from compressive measurements, the Bhattacharyya-based error
//! bound, and the rank-based diversity and phase-transition verdicts.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{projected_rank, GeometryTable, RankTriple};
use crate::linalg::log_sum_exp;
use crate::model::{ClassPair, JointGmm, Quadruple};
use crate::projected::{PairGram, ProjectedGmm};
use crate::sensing::{check_sigma2, Observation, SensingPair};

/// Which label is being decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Decide `C1` from `(y1, y2)`; `C2` is a nuisance.
    SideInfo,
    /// Decide `(C1, C2)` jointly.
    Distributed,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SideInfo => "side_info",
            Mode::Distributed => "distributed",
        }
    }

    /// The quadruple set the analysis ranges over.
    pub fn quadruples(&self, geom: &GeometryTable) -> Vec<Quadruple> {
        match self {
            Mode::SideInfo => geom.s_sic(),
            Mode::Distributed => geom.s_dc(),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "side_info" => Ok(Mode::SideInfo),
            "distributed" => Ok(Mode::Distributed),
            _ => Err(Error::InvalidInput(format!("unknown classification mode {s:?}"))),
        }
    }
}

/// MAP classifiers for a fixed model and kernel.
pub struct Classifier {
    proj: ProjectedGmm,
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

impl Classifier {
    pub fn new(model: &JointGmm, phi: &SensingPair) -> Result<Self> {
        Ok(Classifier {
            proj: ProjectedGmm::for_classification(model, phi)?,
        })
    }

    pub(crate) fn from_projected(proj: ProjectedGmm) -> Self {
        Classifier { proj }
    }

    fn stacked(&self, obs: &Observation) -> Result<DVector<f64>> {
        check_sigma2(obs.sigma2)?;
        let y = obs.stacked();
        self.proj.check_y(&y)?;
        Ok(y)
    }

    /// `log N(y; phi mu, phi sigma phi^T + sigma2 I)` for one supported pair.
    pub fn log_likelihood(&self, obs: &Observation, pair: ClassPair) -> Result<f64> {
        let y = self.stacked(obs)?;
        let idx = self
            .proj
            .index_of(pair)
            .ok_or_else(|| Error::InvalidInput(format!("pair {pair} has zero prior")))?;
        Ok(self.proj.comps[idx].log_likelihood(&y, obs.sigma2))
    }

    pub(crate) fn side_info_y(&self, y: &DVector<f64>, sigma2: f64) -> usize {
        let lj = self.proj.log_joint(y, sigma2);
        let mut labels: Vec<usize> = self.proj.comps.iter().map(|c| c.pair.i).collect();
        labels.dedup();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&i| {
                let terms: Vec<f64> = self
                    .proj
                    .comps
                    .iter()
                    .zip(&lj)
                    .filter(|(c, _)| c.pair.i == i)
                    .map(|(_, v)| *v)
                    .collect();
                log_sum_exp(&terms)
            })
            .collect();
        labels[argmax_first(&scores)]
    }

    pub(crate) fn distributed_y(&self, y: &DVector<f64>, sigma2: f64) -> ClassPair {
        let lj = self.proj.log_joint(y, sigma2);
        self.proj.comps[argmax_first(&lj)].pair
    }

    /// MAP estimate of the first label; ties go to the smallest index.
    pub fn side_info(&self, obs: &Observation) -> Result<usize> {
        let y = self.stacked(obs)?;
        Ok(self.side_info_y(&y, obs.sigma2))
    }

    /// MAP estimate of the label pair; ties go to the lexicographically smallest pair.
    pub fn distributed(&self, obs: &Observation) -> Result<ClassPair> {
        let y = self.stacked(obs)?;
        Ok(self.distributed_y(&y, obs.sigma2))
    }
}

/// Log-likelihood of one class pair at an observation.
pub fn log_class_likelihood(obs: &Observation, pair: ClassPair, model: &JointGmm, phi: &SensingPair) -> Result<f64> {
    Classifier::new(model, phi)?.log_likelihood(obs, pair)
}

/// MAP decision of `C1` from both measurements.
pub fn map_side_info(obs: &Observation, model: &JointGmm, phi: &SensingPair) -> Result<usize> {
    Classifier::new(model, phi)?.side_info(obs)
}

/// MAP decision of `(C1, C2)` from both measurements.
pub fn map_distributed(obs: &Observation, model: &JointGmm, phi: &SensingPair) -> Result<ClassPair> {
    Classifier::new(model, phi)?.distributed(obs)
}

/// Bhattacharyya exponent between two projected components at one noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BhattTerm {
    pub quadruple: Quadruple,
    /// `mean_term + cov_term`.
    pub k: f64,
    pub mean_term: f64,
    pub cov_term: f64,
}

/// Exponent `K` such that `exp(-K) = integral of sqrt(p(y|a) p(y|b)) dy`.
pub fn bhatt_exponent(model: &JointGmm, phi: &SensingPair, a: ClassPair, b: ClassPair, sigma2: f64) -> Result<BhattTerm> {
    check_sigma2(sigma2)?;
    let proj = ProjectedGmm::for_classification(model, phi)?;
    let ia = proj
        .index_of(a)
        .ok_or_else(|| Error::InvalidInput(format!("pair {a} has zero prior")))?;
    let ib = proj
        .index_of(b)
        .ok_or_else(|| Error::InvalidInput(format!("pair {b} has zero prior")))?;
    let (ca, cb) = (&proj.comps[ia], &proj.comps[ib]);
    let (mean_term, cov_term) = PairGram::new(ca, cb).exponent(ca, cb, sigma2);
    Ok(BhattTerm {
        quadruple: Quadruple { a, b },
        k: mean_term + cov_term,
        mean_term,
        cov_term,
    })
}

/// Union-Bhattacharyya bound on the misclassification probability for one kernel,
/// prepared once and evaluated at any noise level.
pub struct BoundEvaluator {
    proj: ProjectedGmm,
    terms: Vec<(usize, usize, f64, usize)>,
    grams: Vec<PairGram>,
    k2: usize,
    mode: Mode,
}

impl BoundEvaluator {
    pub fn new(model: &JointGmm, phi: &SensingPair, mode: Mode) -> Result<Self> {
        let proj = ProjectedGmm::for_classification(model, phi)?;
        Ok(Self::from_projected(model, proj, mode))
    }

    pub(crate) fn from_projected(model: &JointGmm, proj: ProjectedGmm, mode: Mode) -> Self {
        let n = proj.comps.len();
        let mut grams = Vec::new();
        let mut gram_idx = vec![usize::MAX; n * n];
        let mut terms = Vec::new();
        for ia in 0..n {
            for ib in 0..n {
                let (a, b) = (proj.comps[ia].pair, proj.comps[ib].pair);
                let keep = match mode {
                    Mode::SideInfo => a.i != b.i,
                    Mode::Distributed => a != b,
                };
                if !keep {
                    continue;
                }
                let (lo, hi) = (ia.min(ib), ia.max(ib));
                if gram_idx[lo * n + hi] == usize::MAX {
                    gram_idx[lo * n + hi] = grams.len();
                    grams.push(PairGram::new(&proj.comps[lo], &proj.comps[hi]));
                }
                let log_w = match mode {
                    Mode::SideInfo => {
                        let (pa, pb) = (model.prior(a), model.prior(b));
                        0.5 * (pa.ln() + pb.ln()) + 0.5 * (model.prior_c1(a.i).ln() - model.prior_c1(b.i).ln())
                    }
                    Mode::Distributed => model.prior(a).ln(),
                };
                terms.push((lo, hi, log_w, gram_idx[lo * n + hi]));
            }
        }
        BoundEvaluator {
            proj,
            terms,
            grams,
            k2: model.k2(),
            mode,
        }
    }

    fn exponents(&self, sigma2: f64) -> Vec<f64> {
        self.grams
            .iter()
            .zip(self.pair_indices())
            .map(|(g, (a, b))| {
                let (m, c) = g.exponent(&self.proj.comps[a], &self.proj.comps[b], sigma2);
                m + c
            })
            .collect()
    }

    fn pair_indices(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); self.grams.len()];
        for &(a, b, _, g) in &self.terms {
            out[g] = (a, b);
        }
        out
    }

    /// Upper bound at one noise level.
    pub fn upper(&self, sigma2: f64) -> f64 {
        let ks = self.exponents(sigma2);
        let logs: Vec<f64> = self.terms.iter().map(|&(_, _, lw, g)| lw - ks[g]).collect();
        log_sum_exp(&logs).exp()
    }

    /// Matching lower bound: the side-information bound divided by `k2`. For joint
    /// decisions no lower bound is provided.
    pub fn lower(&self, sigma2: f64) -> Option<f64> {
        match self.mode {
            Mode::SideInfo => Some(self.upper(sigma2) / self.k2 as f64),
            Mode::Distributed => None,
        }
    }
}

/// Upper bound on the misclassification probability.
///
/// Side information: `sum_{i != j} p(i) sum_{k,l} sqrt(p(k|i) p(l|j)) exp(-K(ik, jl))`.
/// Joint decisions: `sum_{(i,k) != (j,l)} p(i,k) exp(-K(ik, jl))`.
pub fn perr_upper_bound(model: &JointGmm, phi: &SensingPair, sigma2: f64, mode: Mode) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(BoundEvaluator::new(model, phi, mode)?.upper(sigma2))
}

/// Pairwise diversity `(r_pair - (r_a + r_b) / 2) / 2` of projected ranks; a multiple of 1/4.
pub fn pairwise_diversity(q: Quadruple, m1: usize, m2: usize, geom: &GeometryTable) -> Result<f64> {
    let (pair, ra, rb) = quadruple_ranks(q, geom)?;
    Ok(diversity_from_ranks(pair, ra, rb, m1, m2))
}

fn diversity_from_ranks(pair: RankTriple, ra: RankTriple, rb: RankTriple, m1: usize, m2: usize) -> f64 {
    let p = projected_rank(pair, m1, m2) as f64;
    let a = projected_rank(ra, m1, m2) as f64;
    let b = projected_rank(rb, m1, m2) as f64;
    (2.0 * p - a - b) / 4.0
}

fn quadruple_ranks(q: Quadruple, geom: &GeometryTable) -> Result<(RankTriple, RankTriple, RankTriple)> {
    let e = geom
        .pair(q)
        .ok_or_else(|| Error::InvalidInput(format!("quadruple {q} is not in the geometry table")))?;
    let ra = geom.component(q.a).expect("pair entries refer to known components");
    let rb = geom.component(q.b).expect("pair entries refer to known components");
    Ok((e.ranks, ra, rb))
}

/// Minimum pairwise diversity over the relevant quadruple set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    /// Minimum diversity; `+inf` when the set is empty.
    pub d: f64,
    pub binding: Option<Quadruple>,
    pub per_quadruple: Vec<(Quadruple, f64)>,
}

pub fn diversity_order(geom: &GeometryTable, m1: usize, m2: usize, mode: Mode) -> DiversityReport {
    let per_quadruple: Vec<(Quadruple, f64)> = mode
        .quadruples(geom)
        .into_iter()
        .map(|q| (q, pairwise_diversity(q, m1, m2, geom).expect("quadruple drawn from the table")))
        .collect();
    let mut d = f64::INFINITY;
    let mut binding = None;
    for &(q, v) in &per_quadruple {
        if v < d {
            d = v;
            binding = Some(q);
        }
    }
    DiversityReport { d, binding, per_quadruple }
}

/// Asymptotic behaviour of the misclassification probability as `sigma2 -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    PhaseTransition,
    ErrorFloor,
    ExponentialDecay,
    PolynomialDecay,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::PhaseTransition => "phase_transition",
            Outcome::ErrorFloor => "error_floor",
            Outcome::ExponentialDecay => "exponential_decay",
            Outcome::PolynomialDecay => "polynomial_decay",
        }
    }
}

/// Which criterion produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Zero-mean components: rank conditions only.
    ZeroMean,
    /// Arbitrary means: range tests on mean differences plus rank conditions.
    NonzeroMean,
}

/// Per-quadruple detail of a verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrupleCheck {
    pub quadruple: Quadruple,
    /// Case 1..=4 of the rank conditions; `None` when neither block range is shared
    /// nor distinct (one contains the other) and the projected-rank test decides.
    pub case: Option<u8>,
    pub passes: bool,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub mode: Mode,
    pub rule: Rule,
    pub m1: usize,
    pub m2: usize,
    pub outcome: Outcome,
    /// Diversity attached to the outcome: the minimum over the quadruples that decide it,
    /// `+inf` when no quadruple does.
    pub d: f64,
    pub binding: Option<Quadruple>,
    pub case: Option<u8>,
    pub checks: Vec<QuadrupleCheck>,
}

pub const VERDICT_CSV_HEADER: &str = "mode,m1,m2,outcome,case,binding_i,binding_k,binding_j,binding_l,d";

pub(crate) fn fmt_d(d: f64) -> String {
    if d.is_infinite() {
        "inf".into()
    } else {
        format!("{d}")
    }
}

impl Verdict {
    pub fn csv_row(&self) -> String {
        let (bi, bk, bj, bl) = match self.binding {
            Some(q) => (q.a.i.to_string(), q.a.k.to_string(), q.b.i.to_string(), q.b.k.to_string()),
            None => Default::default(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.m1,
            self.m2,
            self.outcome.as_str(),
            self.case.map(|c| c.to_string()).unwrap_or_default(),
            bi,
            bk,
            bj,
            bl,
            fmt_d(self.d)
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Relation {
    Distinct,
    Same,
    Nested,
}

fn relation(pair: usize, a: usize, b: usize) -> Relation {
    if pair > a && pair > b {
        Relation::Distinct
    } else if pair == a && pair == b {
        Relation::Same
    } else {
        Relation::Nested
    }
}

/// Thresholds the case conditions compare against: minima over the two components in
/// the zero-mean rule, pairwise ranks in the nonzero-mean rule.
struct Thresholds {
    r1: usize,
    r2: usize,
    r: usize,
    /// `r - r2`
    r_minus2: usize,
    /// `r - r1`
    r_minus1: usize,
}

impl Thresholds {
    fn of_pair(p: RankTriple) -> Self {
        Thresholds {
            r1: p.r_x1,
            r2: p.r_x2,
            r: p.r_x,
            r_minus2: p.r_x.saturating_sub(p.r_x2),
            r_minus1: p.r_x.saturating_sub(p.r_x1),
        }
    }

    fn min_of(a: RankTriple, b: RankTriple) -> Self {
        Thresholds {
            r1: a.r_x1.min(b.r_x1),
            r2: a.r_x2.min(b.r_x2),
            r: a.r_x.min(b.r_x),
            r_minus2: a.r_x.saturating_sub(a.r_x2).min(b.r_x.saturating_sub(b.r_x2)),
            r_minus1: a.r_x.saturating_sub(a.r_x1).min(b.r_x.saturating_sub(b.r_x1)),
        }
    }

    /// Rank conditions of cases 1-4.
    fn holds(&self, case: u8, m1: usize, m2: usize) -> bool {
        let joint = m1 + m2 > self.r;
        match case {
            1 => m1 > self.r1 || m2 > self.r2 || joint,
            2 => m1 > self.r_minus2 && m2 > self.r_minus1 && joint,
            3 => m1 > self.r1 || (m1 > self.r_minus2 && joint),
            4 => m2 > self.r2 || (m2 > self.r_minus1 && joint),
            _ => unreachable!("cases are 1..=4"),
        }
    }
}

/// Phase-transition verdict for zero-mean models.
///
/// An error floor is forced when some quadruple has `r_pair = r_a = r_b`. Otherwise the
/// probability of error vanishes with the noise iff every quadruple meets its case condition.
pub fn classification_phase_verdict(geom: &GeometryTable, m1: usize, m2: usize, mode: Mode) -> Result<Verdict> {
    if !geom.zero_mean() {
        return Err(Error::TaskMismatch(
            "the zero-mean verdict needs zero-mean components; use exp_decay_verdict".into(),
        ));
    }
    let mut checks = Vec::new();
    let mut forced_floor = None;
    for q in mode.quadruples(geom) {
        let (p, a, b) = quadruple_ranks(q, geom)?;
        let d = diversity_from_ranks(p, a, b, m1, m2);
        if p.r_x == a.r_x && p.r_x == b.r_x && forced_floor.is_none() {
            forced_floor = Some(checks.len());
        }
        let case = match (relation(p.r_x1, a.r_x1, b.r_x1), relation(p.r_x2, a.r_x2, b.r_x2)) {
            (Relation::Distinct, Relation::Distinct) => Some(1),
            (Relation::Same, Relation::Same) => Some(2),
            (Relation::Distinct, Relation::Same) => Some(3),
            (Relation::Same, Relation::Distinct) => Some(4),
            _ => None,
        };
        let passes = match case {
            Some(c) => Thresholds::min_of(a, b).holds(c, m1, m2),
            None => d > 0.0,
        };
        checks.push(QuadrupleCheck {
            quadruple: q,
            case,
            passes,
            d,
        });
    }
    let (outcome, pick) = if let Some(i) = forced_floor {
        (Outcome::ErrorFloor, Some(i))
    } else if let Some(i) = checks.iter().position(|c| !c.passes) {
        (Outcome::ErrorFloor, Some(i))
    } else {
        let mut best: Option<usize> = None;
        for (i, c) in checks.iter().enumerate() {
            if best.is_none_or(|b| c.d < checks[b].d) {
                best = Some(i);
            }
        }
        (Outcome::PhaseTransition, best)
    };
    let (d, binding, case) = match pick {
        Some(i) => (checks[i].d, Some(checks[i].quadruple), checks[i].case),
        None => (f64::INFINITY, None, None),
    };
    Ok(Verdict {
        mode,
        rule: Rule::ZeroMean,
        m1,
        m2,
        outcome,
        d,
        binding,
        case,
        checks,
    })
}

/// Decay verdict for models with arbitrary means.
///
/// Quadruples whose joint mean difference lies outside the range of the summed
/// covariance and whose case condition holds decay exponentially. If all do, the
/// outcome is exponential decay; otherwise the minimum diversity over the rest decides
/// between polynomial decay (`d > 0`) and an error floor (`d = 0`).
pub fn exp_decay_verdict(geom: &GeometryTable, m1: usize, m2: usize, mode: Mode) -> Result<Verdict> {
    let mut checks = Vec::new();
    for q in mode.quadruples(geom) {
        let e = *geom.pair(q).expect("quadruple drawn from the table");
        let (p, a, b) = quadruple_ranks(q, geom)?;
        let d = diversity_from_ranks(p, a, b, m1, m2);
        let case = match (e.means.mu1_in, e.means.mu2_in) {
            (false, false) => 1,
            (true, true) => 2,
            (false, true) => 3,
            (true, false) => 4,
        };
        let passes = !e.means.mu_in && Thresholds::of_pair(p).holds(case, m1, m2);
        checks.push(QuadrupleCheck {
            quadruple: q,
            case: Some(case),
            passes,
            d,
        });
    }
    let mut pick: Option<usize> = None;
    for (i, c) in checks.iter().enumerate() {
        if !c.passes && pick.is_none_or(|b| c.d < checks[b].d) {
            pick = Some(i);
        }
    }
    let (outcome, d, binding, case) = match pick {
        None => (Outcome::ExponentialDecay, f64::INFINITY, None, None),
        Some(i) => {
            let c = checks[i];
            let outcome = if c.d > 0.0 { Outcome::PolynomialDecay } else { Outcome::ErrorFloor };
            (outcome, c.d, Some(c.quadruple), c.case)
        }
    };
    Ok(Verdict {
        mode,
        rule: Rule::NonzeroMean,
        m1,
        m2,
        outcome,
        d,
        binding,
        case,
        checks,
    })
}
