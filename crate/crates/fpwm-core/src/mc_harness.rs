//! Batch Monte-Carlo experiments and theory-vs-simulation sweeps.
//!
//! Paths are embarrassingly parallel: each path draws from an independent
//! stream derived from the master seed and its index, so a sweep produces
//! identical tables at any worker count. All limit estimates condition on
//! survival; extinct paths are counted, never imputed.

use rayon::prelude::*;
use serde::Serialize;

use crate::bp_sim::{run_path, PathOptions, PathResult};
use crate::design::{design_for, threshold_for, ThresholdMode};
use crate::error::Error;
use crate::mix_seed;
use crate::model::{PostType, SystemConfig};
use crate::warning::{analyze, iqos_factor, warning_value, Mechanism, WarningSpec};

/// Runs `paths` independent sample paths of one mechanism, in parallel.
pub fn run_paths(
    cfg: &SystemConfig,
    post: PostType,
    spec: &WarningSpec,
    paths: u64,
    opts: PathOptions,
    master_seed: u64,
) -> Vec<PathResult> {
    (0..paths)
        .into_par_iter()
        .map(|i| {
            run_path(
                cfg,
                post,
                |beta| warning_value(spec, cfg, beta),
                opts,
                mix_seed(master_seed, i),
            )
        })
        .collect()
}

/// How the limit proportion is read off a surviving path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Last recorded proportion (matches the figure semantics).
    FinalBeta,
    /// Average proportion over the final fraction of the path; lower
    /// variance at the cost of a small transient bias.
    TailMean(f64),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub surviving: u64,
    pub extinct: u64,
}

/// Estimates the surviving-path limit proportion of `spec` on `post`.
pub fn estimate_limit(
    cfg: &SystemConfig,
    post: PostType,
    spec: &WarningSpec,
    paths: u64,
    events: u64,
    master_seed: u64,
) -> Result<LimitEstimate, Error> {
    estimate_limit_with(
        cfg,
        post,
        spec,
        paths,
        events,
        master_seed,
        Estimator::FinalBeta,
    )
}

pub fn estimate_limit_with(
    cfg: &SystemConfig,
    post: PostType,
    spec: &WarningSpec,
    paths: u64,
    events: u64,
    master_seed: u64,
    estimator: Estimator,
) -> Result<LimitEstimate, Error> {
    if paths == 0 {
        return Err(Error::Precondition("need at least one path"));
    }
    let opts = PathOptions::new(events, (events / 500).max(1));
    let finals: Vec<Option<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let res = run_path(
                cfg,
                post,
                |beta| warning_value(spec, cfg, beta),
                opts,
                mix_seed(master_seed, i),
            );
            path_estimate(&res, estimator, events)
        })
        .collect();

    let values: Vec<f64> = finals.iter().flatten().copied().collect();
    let surviving = values.len() as u64;
    let extinct = paths - surviving;
    if values.is_empty() {
        return Err(Error::Estimation(format!(
            "all {paths} paths went extinct before {events} events"
        )));
    }
    let mean = values.iter().sum::<f64>() / surviving as f64;
    let stderr = if surviving > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (surviving - 1) as f64;
        (var / surviving as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(LimitEstimate {
        mean,
        stderr,
        surviving,
        extinct,
    })
}

fn path_estimate(res: &PathResult, estimator: Estimator, events: u64) -> Option<f64> {
    if !res.survived() {
        return None;
    }
    match estimator {
        Estimator::FinalBeta => res.final_beta(),
        Estimator::TailMean(fraction) => {
            let from = ((1.0 - fraction.clamp(0.0, 1.0)) * events as f64) as u64;
            let tail: Vec<f64> = res
                .trace
                .iter()
                .filter(|p| p.epoch >= from && !p.beta.is_nan())
                .map(|p| p.beta)
                .collect();
            if tail.is_empty() {
                res.final_beta()
            } else {
                Some(tail.iter().sum::<f64>() / tail.len() as f64)
            }
        }
    }
}

/// Lemma-style trichotomy of a finished path: it either died, or the
/// current population grows linearly in the event count. Anything else is
/// anomalous and signals a bug or a critically poised configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Extinct,
    Exploding,
    Anomalous,
}

pub fn growth_check(res: &PathResult) -> Growth {
    if res.extinct_at.is_some() {
        return Growth::Extinct;
    }
    let half = res.events / 2;
    let tail: Vec<f64> = res
        .trace
        .iter()
        .filter(|p| p.epoch >= half)
        .map(|p| p.upsilon[0])
        .collect();
    let (Some(&first), Some(&last)) = (tail.first(), tail.last()) else {
        return Growth::Anomalous;
    };
    // S_n ~ c n keeps S_n/n flat over the final half; a stalled population
    // would halve it.
    if tail.iter().all(|&v| v > 0.0) && last >= 0.6 * first {
        Growth::Exploding
    } else {
        Growth::Anomalous
    }
}

/// Which behaviour mass absorbs changes of the adversary fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MuaRebalance {
    /// `mu0 = mu0 + mua_old - mua_new` (fixed active population).
    FromNp,
    /// `mu2 = mu2 + mua_old - mua_new` (everyone participates).
    FromWs,
}

/// Returns the config moved to adversary fraction `mua`.
pub fn apply_mua(
    cfg: &SystemConfig,
    mua: f64,
    rebalance: MuaRebalance,
) -> Result<SystemConfig, Error> {
    let mut next = *cfg;
    let shift = cfg.mua - mua;
    match rebalance {
        MuaRebalance::FromNp => next.mu0 = zero_snap(cfg.mu0 + shift),
        MuaRebalance::FromWs => next.mu2 = zero_snap(cfg.mu2 + shift),
    }
    next.mua = mua;
    if next.mu0 < 0.0 || next.mu2 < 0.0 {
        return Err(Error::Precondition(
            "requested mua exceeds the rebalanced mass",
        ));
    }
    Ok(next)
}

fn zero_snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// One sweep: a mechanism redesigned and re-simulated at every adversary
/// fraction of a grid.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    /// Base config; its `mua` is replaced by each grid value.
    pub cfg: SystemConfig,
    pub post: PostType,
    pub mechanism: Mechanism,
    pub mua_grid: Vec<f64>,
    pub rebalance: MuaRebalance,
    pub threshold_mode: ThresholdMode,
    /// Monte-Carlo paths per grid point; 0 skips simulation.
    pub paths: u64,
    pub events: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub mechanism: Mechanism,
    pub post: PostType,
    pub mu_a: f64,
    pub w: f64,
    pub b: f64,
    pub phi: Option<f64>,
    pub threshold_mode: ThresholdMode,
    pub threshold: f64,
    /// All limit proportions, ascending.
    pub beta_theory: Vec<f64>,
    /// Smallest limit for a fake post; largest (constrained) limit for a
    /// real post.
    pub qos: f64,
    pub iqos: f64,
    pub beta_mc_mean: Option<f64>,
    pub beta_mc_stderr: Option<f64>,
    pub surviving_paths: u64,
    pub extinct_paths: u64,
    /// Set when the design failed at this grid point; numeric fields are
    /// then NaN/empty.
    pub design_error: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "experiment,mechanism,post,mu_a,w,b,phi,threshold_mode,\
         beta_theory_min,beta_theory_max,qos,iqos,beta_mc_mean,beta_mc_stderr,\
         surviving_paths,extinct_paths";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let theory_min = self.beta_theory.first().map(|&v| v.to_string()).unwrap_or_default();
        let theory_max = self.beta_theory.last().map(|&v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.mechanism.name(),
            self.post.name(),
            self.mu_a,
            self.w,
            self.b,
            self.phi.map(|p| p.to_string()).unwrap_or_default(),
            self.threshold_mode.name(),
            theory_min,
            theory_max,
            self.qos,
            self.iqos,
            opt(self.beta_mc_mean),
            opt(self.beta_mc_stderr),
            self.surviving_paths,
            self.extinct_paths
        )
    }
}

/// Writes rows as CSV with header.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", SweepRow::CSV_HEADER)?;
    for row in rows {
        writeln!(out, "{}", row.csv_row())?;
    }
    Ok(())
}

/// Runs the sweep: at every grid point the mechanism is redesigned for
/// the rebalanced config, analyzed, and (for `paths > 0`) simulated.
/// Design failures flag the row and the sweep continues. Deterministic in
/// `master_seed`.
pub fn sweep(exp: &ExperimentSpec) -> Result<Vec<SweepRow>, Error> {
    exp.cfg.ensure_valid()?;
    let mut rows = Vec::with_capacity(exp.mua_grid.len());
    for (idx, &mua) in exp.mua_grid.iter().enumerate() {
        let cfg = apply_mua(&exp.cfg, mua, exp.rebalance)?;
        let threshold = threshold_for(&cfg, exp.threshold_mode)?;
        let design = match design_for(exp.mechanism, &cfg, exp.threshold_mode) {
            Ok(d) => d,
            Err(e) => {
                rows.push(SweepRow {
                    experiment: exp.name.clone(),
                    mechanism: exp.mechanism,
                    post: exp.post,
                    mu_a: mua,
                    w: f64::NAN,
                    b: f64::NAN,
                    phi: None,
                    threshold_mode: exp.threshold_mode,
                    threshold,
                    beta_theory: Vec::new(),
                    qos: f64::NAN,
                    iqos: f64::NAN,
                    beta_mc_mean: None,
                    beta_mc_stderr: None,
                    surviving_paths: 0,
                    extinct_paths: 0,
                    design_error: Some(e.to_string()),
                });
                continue;
            }
        };
        let analysis = analyze(&design.spec, &cfg, exp.post)?;
        let qos = match exp.post {
            PostType::Fake => analysis.qos,
            PostType::Real => analysis.safety_sup(),
        };
        let iqos = iqos_factor(&cfg, exp.post)? * qos;
        let estimate = if exp.paths > 0 {
            Some(estimate_limit(
                &cfg,
                exp.post,
                &design.spec,
                exp.paths,
                exp.events,
                mix_seed(exp.master_seed, idx as u64),
            )?)
        } else {
            None
        };
        rows.push(SweepRow {
            experiment: exp.name.clone(),
            mechanism: exp.mechanism,
            post: exp.post,
            mu_a: mua,
            w: design.spec.w(),
            b: design.spec.b(),
            phi: design.spec.phi(),
            threshold_mode: exp.threshold_mode,
            threshold,
            beta_theory: analysis.equilibria.iter().map(|e| e.beta).collect(),
            qos,
            iqos,
            beta_mc_mean: estimate.map(|e| e.mean),
            beta_mc_stderr: estimate.map(|e| e.stderr),
            surviving_paths: estimate.map(|e| e.surviving).unwrap_or(0),
            extinct_paths: estimate.map(|e| e.extinct).unwrap_or(0),
            design_error: None,
        });
    }
    Ok(rows)
}
