use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gmmsi::classify::Mode;
use gmmsi::experiments::{Predicate, Task};
use gmmsi::reconstruct::ReconTheorem;
use gmmsi::sensing::KernelKind;

#[derive(Debug, Parser)]
#[command(name = "gmmsi", version, about = "Phase transitions for classification and reconstruction from compressive features with side information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-component and pairwise rank triples of a model.
    RankTable(RankTableArgs),
    /// Predicted low-noise behaviour at one (m1, m2).
    Verdict(VerdictArgs),
    /// Pairwise diversity orders at one (m1, m2).
    Diversity(DiversityArgs),
    /// Monte Carlo misclassification sweep over the noise grid.
    ClassifySweep(SweepArgs),
    /// Monte Carlo reconstruction sweep over the noise grid.
    ReconstructSweep(SweepArgs),
    /// Rank criteria over a rectangle of feature counts.
    RegionMap(RegionArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RankTable(_) => "rank-table",
            Command::Verdict(_) => "verdict",
            Command::Diversity(_) => "diversity",
            Command::ClassifySweep(_) => "classify-sweep",
            Command::ReconstructSweep(_) => "reconstruct-sweep",
            Command::RegionMap(_) => "region-map",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::RankTable(a) => &a.common,
            Command::Verdict(a) => &a.common,
            Command::Diversity(a) => &a.common,
            Command::ClassifySweep(a) | Command::ReconstructSweep(a) => &a.common,
            Command::RegionMap(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file (TOML). Optional when replaying a manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Replay the run recorded in this manifest; flags given alongside override it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankTableArgs {
    #[command(flatten)]
    pub common: Common,
    /// Multiplier on the SVD rank threshold.
    #[arg(long)]
    pub tol_factor: Option<f64>,
    /// Relative residual below which a mean difference counts as in range.
    #[arg(long)]
    pub range_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerdictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m1: Option<usize>,
    #[arg(long)]
    pub m2: Option<usize>,
    /// classify_si, classify_dc, reconstruct_si or reconstruct_dc.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Reconstruction criterion; defaults from the task and the number of components.
    #[arg(long, value_parser = parse_theorem)]
    pub theorem: Option<ReconTheorem>,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m1: Option<usize>,
    #[arg(long)]
    pub m2: Option<usize>,
    /// side_info or distributed.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m1: Option<usize>,
    #[arg(long)]
    pub m2: Option<usize>,
    /// Defaults to the side-information variant of the subcommand's task.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Trials per noise level.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest noise variance of a log-spaced grid.
    #[arg(long)]
    pub grid_max: Option<f64>,
    /// Smallest noise variance of a log-spaced grid.
    #[arg(long)]
    pub grid_min: Option<f64>,
    #[arg(long)]
    pub per_decade: Option<usize>,
    /// Explicit comma-separated, strictly decreasing noise variances.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["grid_max", "grid_min", "per_decade"])]
    pub grid: Option<Vec<f64>>,
    /// gaussian or identity2.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<KernelKind>,
    /// Use one kernel drawn from this seed for every trial.
    #[arg(long)]
    pub freeze_kernel: Option<u64>,
    /// Escalate the trial count at points with fewer errors than this.
    #[arg(long)]
    pub min_errors: Option<u64>,
    #[arg(long)]
    pub max_trials: Option<u64>,
    /// Trial kernels the analytic bound is averaged over.
    #[arg(long)]
    pub bound_kernels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated criteria: gaussian, gmm_sufficient, gmm_necessary, dist_gaussian,
    /// dist_gmm_sufficient, dist_gmm_necessary, classify_si, classify_dc.
    #[arg(long, value_delimiter = ',', value_parser = parse_predicate)]
    pub theorem: Option<Vec<Predicate>>,
    /// Inclusive range `a..b`.
    #[arg(long, value_parser = parse_range)]
    pub m1: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_range)]
    pub m2: Option<(usize, usize)>,
    /// Tag every cell with a short Monte Carlo probe of the first criterion's task.
    #[arg(long)]
    pub probe: bool,
    #[arg(long)]
    pub probe_trials: Option<u64>,
    #[arg(long)]
    pub probe_seed: Option<u64>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: gmmsi::Error| e.to_string())
}

fn parse_theorem(s: &str) -> Result<ReconTheorem, String> {
    s.parse().map_err(|e: gmmsi::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: gmmsi::Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: gmmsi::Error| e.to_string())
}

fn parse_predicate(s: &str) -> Result<Predicate, String> {
    s.parse().map_err(|e: gmmsi::Error| e.to_string())
}

/// `a..b`, both ends included.
pub fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 0..5, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0..5"), Ok((0, 5)));
        assert_eq!(parse_range("3..3"), Ok((3, 3)));
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("5").is_err());
        assert!(parse_range("a..2").is_err());
    }
}
