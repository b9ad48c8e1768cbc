//! Online learning of the warning parameters from a known real post.
//!
//! The platform propagates a post it knows to be real and tunes `(w, b)`
//! from observed reads alone, without knowing user sensitivities or type
//! proportions. Two coupled stochastic-approximation updates run on the
//! read clock:
//!
//! * `b` (fast) integrates `B_k - delta`, steering the real-post fake-tag
//!   proportion to the tolerance;
//! * `w` (slow) is only touched at rare special epochs. When a
//!   warning-seeking reader holds a real-tagged copy, a coin with success
//!   probability `eta_{k-1}` (decaying to zero) replaces the regular
//!   warning by the `beta = 1` level `w + gamma`; the observed tag then
//!   pushes `w` toward the point where that tag probability equals
//!   `1 - kappa`.
//!
//! The only prior knowledge used is `kappa`, a bound derived from the
//! ratio `alpha_x_R / alpha_y_R`; it caps the learned `w` below the level
//! at which real-post tag probabilities would clamp.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bp_sim::{sample_death, sample_shares, sample_tag, PopulationState, ReadTag, UserType};
use crate::error::Error;
use crate::mix_seed;
use crate::model::{PostParams, PostType, SystemConfig};
use crate::warning::{analyze, WarningSpec};

/// Tuning of the learning scheme.
#[derive(Debug, Clone, Copy)]
pub struct LearnConfig {
    /// Target miss rate at special epochs; `kappa >= 1 - alpha_y_R/alpha_x_R`.
    pub kappa: f64,
    /// Step-size scale: `eps_k = c1 * (1/(k+1))^c2`.
    pub c1: f64,
    /// Step-size exponent, in (0.5, 1].
    pub c2: f64,
    /// Special-epoch probability at `k = 0`.
    pub eta0: f64,
    /// Special-epoch schedule for `k >= 1`: `eta_k = eta_scale * (1/k)^eta_exp`,
    /// clamped to [0, 1].
    pub eta_scale: f64,
    pub eta_exp: f64,
    pub w0: f64,
    pub b0: f64,
    /// Number of reads to learn from.
    pub samples: u64,
    /// Reseed the population and keep learning if the post dies early.
    pub restart_on_extinction: bool,
}

impl LearnConfig {
    /// The tuning the reference learning experiments were calibrated with; `kappa`
    /// comes from the sensitivity ratio via [`kappa_from_ratio`].
    pub fn reference_tuning(kappa: f64) -> LearnConfig {
        LearnConfig {
            kappa,
            c1: 2.2,
            c2: 0.7,
            eta0: 0.008,
            eta_scale: 1.5,
            eta_exp: 0.8,
            w0: 6.0,
            b0: 1e-4,
            samples: 100_000,
            restart_on_extinction: true,
        }
    }

    pub fn epsilon(&self, k: u64) -> f64 {
        self.c1 * (1.0 / (k as f64 + 1.0)).powf(self.c2)
    }

    pub fn eta(&self, k: u64) -> f64 {
        if k == 0 {
            self.eta0
        } else {
            (self.eta_scale * (1.0 / k as f64).powf(self.eta_exp)).clamp(0.0, 1.0)
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.c2 > 0.5 && self.c2 <= 1.0) {
            return Err(Error::Precondition("c2 must lie in (0.5, 1]"));
        }
        if !(self.c1 >= 0.0) || !(self.w0 >= 1.0) || !(self.b0 >= 0.0) {
            return Err(Error::Precondition("need c1 >= 0, w0 >= 1, b0 >= 0"));
        }
        if !(0.0..=1.0).contains(&self.eta0) || !(self.eta_scale >= 0.0) {
            return Err(Error::Precondition("eta schedule must stay in [0,1]"));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::Precondition("kappa must lie in [0,1)"));
        }
        if self.samples == 0 {
            return Err(Error::Precondition("samples must be >= 1"));
        }
        Ok(())
    }
}

/// `kappa = 1 - 1/ratio + margin` for `ratio = alpha_x_R / alpha_y_R`;
/// the small margin keeps the learned `w` strictly below the clamp level.
pub fn kappa_from_ratio(ratio_x_over_y: f64) -> f64 {
    1.0 - 1.0 / ratio_x_over_y + 1e-3
}

#[derive(Debug, Clone, Copy)]
pub struct LearnTracePoint {
    pub epoch: u64,
    pub w: f64,
    pub b: f64,
    pub beta: f64,
    pub special: bool,
}

/// Outcome of one learning run.
#[derive(Debug, Clone)]
pub struct LearnRun {
    pub w: f64,
    pub b: f64,
    /// Every `trace_stride` epochs, plus every special epoch.
    pub trace: Vec<LearnTracePoint>,
    /// Parameters at the requested snapshot epochs.
    pub snapshots: Vec<(u64, f64, f64)>,
    /// False when the post died and restarting was disabled.
    pub completed: bool,
    pub restarts: u32,
    pub special_epochs: u64,
    pub final_state: PopulationState,
}

impl LearnRun {
    pub const CSV_HEADER: &'static str = "k,w_k,b_k,beta_k,special_epoch";

    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for p in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.epoch,
                p.w,
                p.b,
                p.beta,
                p.special as u8
            )?;
        }
        Ok(())
    }
}

/// Runs the learning scheme for `lcfg.samples` reads of a real post.
///
/// At epoch `k` the reader sees either the regular warning built from
/// `(w_{k-1}, b_{k-1})` at the current proportion, or, at a special epoch,
/// the `beta = 1` level. `b` is updated every epoch from the pre-read
/// proportion `B_k`, `w` only at special epochs from the observed tag.
///
/// Each iterate steps on its own clock. The special-epoch coin follows
/// the read count. The slow `w` steps by its count of special epochs:
/// only a handful of those ever happen, and stepping them by the read
/// count would freeze `w` near its start. The fast `b` steps by the
/// current total copy count — the size of the population whose
/// proportion it steers. On the raw read count its gain outruns the
/// proportion's own relaxation (which is logarithmic in the population)
/// and the iterate rings hard before settling; the copy count
/// self-calibrates the gain to the virality of the post.
///
/// Both iterates are projected (`w >= 1`, `b >= 0`). Deterministic in
/// `seed`.
pub fn run_learning(
    cfg: &SystemConfig,
    lcfg: &LearnConfig,
    seed: u64,
    trace_stride: u64,
    snapshot_epochs: &[u64],
) -> Result<LearnRun, Error> {
    cfg.ensure_valid()?;
    lcfg.validate()?;
    let params = PostParams::for_post(cfg, PostType::Real);
    let mu = cfg.mu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PopulationState::from_config(cfg);
    let mut w = lcfg.w0;
    let mut b = lcfg.b0;
    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    let mut restarts = 0u32;
    let mut special_epochs = 0u64;
    let mut completed = true;
    let mut snap_iter = snapshot_epochs.iter().copied().peekable();

    for k in 1..=lcfg.samples {
        if state.is_extinct() {
            if lcfg.restart_on_extinction {
                state = PopulationState::from_config(cfg);
                restarts += 1;
            } else {
                completed = false;
                break;
            }
        }
        let beta_k = state.beta();
        let (read_tag, user_type) = sample_death(&state, &mu, &mut rng)?;

        // Special-epoch coin: tossed for every warning-seeking reader
        // while the schedule is open; special only if the copy is
        // real-tagged.
        let mut special = false;
        if user_type == UserType::Ws {
            let eta = lcfg.eta(k - 1);
            if eta > 0.0 && rng.random_bool(eta) && read_tag == ReadTag::Real {
                special = true;
            }
        }

        let warning = if special {
            w + cfg.gamma
        } else {
            crate::warning::warning_value(&WarningSpec::Eo { w, b }, cfg, beta_k)
        };
        let tagged_fake = sample_tag(user_type, read_tag, warning, &params, &mut rng);
        let shares = sample_shares(
            user_type,
            tagged_fake,
            state.total(),
            &params,
            cfg.friends,
            cfg.eta_a,
            cfg.k_share,
            &mut rng,
        )?;
        state = {
            let mut next = state;
            match read_tag {
                ReadTag::Fake => next.c_x -= 1,
                ReadTag::Real => next.c_y -= 1,
            }
            if tagged_fake {
                next.c_x += shares;
                next.t_x += shares;
            } else {
                next.c_y += shares;
                next.t_y += shares;
            }
            next
        };

        if special {
            special_epochs += 1;
            let indicator = if tagged_fake { 1.0 } else { 0.0 };
            w = (w - lcfg.epsilon(special_epochs) * (indicator - (1.0 - lcfg.kappa))).max(1.0);
        }
        b = (b + lcfg.epsilon(state.total()) * (beta_k - cfg.delta)).max(0.0);

        if special || (trace_stride > 0 && k % trace_stride == 0) {
            trace.push(LearnTracePoint {
                epoch: k,
                w,
                b,
                beta: beta_k,
                special,
            });
        }
        while let Some(&s) = snap_iter.peek() {
            if s <= k {
                snapshots.push((s, w, b));
                snap_iter.next();
            } else {
                break;
            }
        }
    }
    for s in snap_iter {
        snapshots.push((s, w, b));
    }

    Ok(LearnRun {
        w,
        b,
        trace,
        snapshots,
        completed,
        restarts,
        special_epochs,
        final_state: state,
    })
}

/// Fake-post i-QoS the eo mechanism achieves at the learned parameters,
/// computed analytically.
pub fn learned_iqos(cfg: &SystemConfig, w: f64, b: f64) -> Result<f64, Error> {
    Ok(analyze(&WarningSpec::Eo { w, b }, cfg, PostType::Fake)?.iqos)
}

/// Whether the learned parameters reach the reference i-QoS within `tol`.
pub fn evaluate_learned(
    cfg: &SystemConfig,
    w: f64,
    b: f64,
    reference_iqos: f64,
    tol: f64,
) -> Result<bool, Error> {
    Ok((learned_iqos(cfg, w, b)? - reference_iqos).abs() <= tol)
}

/// One row of the learning-efficacy table: the fraction of sample paths
/// whose learned parameters reach the perfect-knowledge i-QoS within the
/// tolerance after `samples` reads.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LearnBatchRow {
    pub mu_a: f64,
    pub samples: u64,
    pub success_fraction: f64,
}

impl LearnBatchRow {
    pub const CSV_HEADER: &'static str = "mu_a,samples,success_fraction";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.mu_a, self.samples, self.success_fraction)
    }
}

/// Runs `trials` independent learning paths and scores each snapshot
/// epoch against `reference_iqos`. Trials run in parallel with per-trial
/// seeds derived from `master_seed`, so results do not depend on the
/// worker count.
pub fn learning_batch(
    cfg: &SystemConfig,
    lcfg: &LearnConfig,
    trials: u64,
    snapshot_epochs: &[u64],
    reference_iqos: f64,
    tol: f64,
    master_seed: u64,
) -> Result<Vec<LearnBatchRow>, Error> {
    if trials == 0 {
        return Err(Error::Precondition("need at least one trial"));
    }
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<bool>, Error> {
            let run = run_learning(cfg, lcfg, mix_seed(master_seed, trial), 0, snapshot_epochs)?;
            run.snapshots
                .iter()
                .map(|&(_, w, b)| evaluate_learned(cfg, w, b, reference_iqos, tol))
                .collect()
        })
        .collect::<Result<_, _>>()?;

    Ok(snapshot_epochs
        .iter()
        .enumerate()
        .map(|(i, &samples)| {
            let successes = per_trial.iter().filter(|t| t[i]).count();
            LearnBatchRow {
                mu_a: cfg.mua,
                samples,
                success_fraction: successes as f64 / trials as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp_sim::{run_path, PathOptions};
    use crate::model::FriendDistribution;

    fn naive_cfg(mua: f64) -> SystemConfig {
        SystemConfig {
            mu0: 0.35 - mua,
            mu1: 0.15,
            mu2: 0.5,
            mua,
            alpha_x_f: 0.3,
            alpha_y_f: 0.225,
            alpha_x_r: 0.12,
            alpha_y_r: 0.09,
            eta_f: 0.52,
            eta_r: 0.4,
            eta_a: 0.55,
            rho: 0.9,
            gamma: 0.1,
            m_f: 30.0,
            friends: FriendDistribution::Deterministic(30),
            k_share: 10.0,
            delta: 0.05,
            seed_cx0: 0,
            seed_cy0: 20,
        }
    }

    fn tuning() -> LearnConfig {
        LearnConfig::reference_tuning(kappa_from_ratio(0.12 / 0.09))
    }

    #[test]
    fn kappa_from_ratio_value() {
        // 1 - 0.09/0.12 + 1e-3
        assert!((kappa_from_ratio(0.12 / 0.09) - 0.251).abs() < 1e-12);
    }

    #[test]
    fn projections_hold_every_epoch() {
        let cfg = naive_cfg(0.1);
        let mut lcfg = tuning();
        lcfg.samples = 5000;
        let run = run_learning(&cfg, &lcfg, 11, 1, &[]).unwrap();
        for p in &run.trace {
            assert!(p.w >= 1.0, "w dipped below the floor at {}", p.epoch);
            assert!(p.b >= 0.0);
        }
    }

    #[test]
    fn eta_zero_freezes_w() {
        let cfg = naive_cfg(0.0);
        let mut lcfg = tuning();
        lcfg.samples = 3000;
        lcfg.eta0 = 0.0;
        lcfg.eta_scale = 0.0;
        let run = run_learning(&cfg, &lcfg, 7, 0, &[]).unwrap();
        assert_eq!(run.w, lcfg.w0);
        assert_eq!(run.special_epochs, 0);
    }

    #[test]
    fn kappa_one_drives_w_to_floor() {
        // 1 - kappa = 0: every special-epoch update subtracts eps * I >= 0,
        // and the projection floors w at 1.
        let cfg = naive_cfg(0.0);
        let mut lcfg = tuning();
        lcfg.kappa = 1.0 - 1e-12;
        lcfg.samples = 30_000;
        lcfg.w0 = 1.5;
        let run = run_learning(&cfg, &lcfg, 3, 0, &[]).unwrap();
        assert!(run.w <= 1.5);
        assert!(run.special_epochs > 0);
    }

    #[test]
    fn zero_step_sizes_degenerate_to_plain_simulation() {
        // With c1 = 0 and the special-epoch schedule closed, the learning
        // loop replays exactly the plain eo path for the same seed.
        let cfg = naive_cfg(0.1);
        let mut lcfg = tuning();
        lcfg.c1 = 0.0;
        lcfg.eta0 = 0.0;
        lcfg.eta_scale = 0.0;
        lcfg.samples = 2000;
        let run = run_learning(&cfg, &lcfg, 99, 0, &[]).unwrap();
        assert_eq!(run.w, lcfg.w0);
        assert_eq!(run.b, lcfg.b0);

        let spec = WarningSpec::Eo {
            w: lcfg.w0,
            b: lcfg.b0,
        };
        let path = run_path(
            &cfg,
            PostType::Real,
            |beta| crate::warning::warning_value(&spec, &cfg, beta),
            PathOptions::new(2000, 2000),
            99,
        );
        assert_eq!(run.final_state, path.final_state, "trajectories diverged");
    }

    #[test]
    fn snapshots_are_recorded_at_requested_epochs() {
        let cfg = naive_cfg(0.0);
        let mut lcfg = tuning();
        lcfg.samples = 1000;
        let run = run_learning(&cfg, &lcfg, 5, 0, &[100, 500, 1000]).unwrap();
        let epochs: Vec<u64> = run.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(epochs, vec![100, 500, 1000]);
    }

    #[test]
    fn no_restart_flags_incomplete_run() {
        // All non-participants kill the post after seed_cy0 reads.
        let mut cfg = naive_cfg(0.0);
        cfg.mu0 = 0.9999999;
        cfg.mu1 = 0.00000004;
        cfg.mu2 = 0.00000003;
        cfg.mua = 0.00000003;
        let mut lcfg = tuning();
        lcfg.samples = 100;
        lcfg.restart_on_extinction = false;
        let run = run_learning(&cfg, &lcfg, 21, 0, &[]).unwrap();
        assert!(!run.completed);

        lcfg.restart_on_extinction = true;
        let run = run_learning(&cfg, &lcfg, 21, 0, &[]).unwrap();
        assert!(run.completed);
        assert!(run.restarts > 0);
    }

    #[test]
    fn learned_w_approaches_sa_target() {
        // The slow iterate drifts toward (1 - kappa)/alpha_y_R - gamma,
        // though with the decaying special-epoch budget it need not reach
        // it; require clear movement from w0 toward the target.
        let cfg = naive_cfg(0.0);
        let lcfg = tuning();
        let target = (1.0 - lcfg.kappa) / cfg.alpha_y_r - cfg.gamma; // 8.2222
        let run = run_learning(&cfg, &lcfg, 17, 0, &[]).unwrap();
        assert!(run.completed);
        let start_gap = (lcfg.w0 - target).abs();
        let end_gap = (run.w - target).abs();
        assert!(
            end_gap < start_gap,
            "w moved away from the target: {} -> {}",
            lcfg.w0,
            run.w
        );
    }

    #[test]
    fn learned_b_steers_real_post_towards_delta() {
        let cfg = naive_cfg(0.1);
        let mut lcfg = tuning();
        lcfg.samples = 100_000;
        let run = run_learning(&cfg, &lcfg, 23, 50, &[]).unwrap();
        let tail: Vec<f64> = run
            .trace
            .iter()
            .filter(|p| p.epoch >= 3 * lcfg.samples / 4)
            .map(|p| p.beta)
            .collect();
        let avg = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            (avg - cfg.delta).abs() <= 0.02,
            "tail-average beta {avg} vs delta {}",
            cfg.delta
        );
    }

    #[test]
    fn evaluate_learned_accepts_perfect_parameters() {
        let cfg = naive_cfg(0.1);
        let d = crate::design::build_eh2(&cfg, crate::design::ThresholdMode::AdversaryAdjusted)
            .unwrap();
        let reference = analyze(&d.spec, &cfg, PostType::Fake).unwrap().iqos;
        assert!(evaluate_learned(&cfg, d.spec.w(), d.spec.b(), reference, 1e-6).unwrap());
        // Degenerate parameters collapse the QoS toward the lower bound.
        assert!(!evaluate_learned(&cfg, 1.0, 1e6, reference, 0.05).unwrap());
    }
}
