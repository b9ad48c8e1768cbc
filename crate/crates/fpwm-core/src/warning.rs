//! The warning-mechanism family and its limit analysis.
//!
//! A mechanism maps the current fake-tag proportion `beta` to a warning
//! level shown to warning-seeking readers:
//!
//! * `eo`  — `w beta / (beta + b (1 - beta)) + gamma`, the base family;
//! * `ea`  — `eo` plus an additive term that exactly cancels the drift the
//!   adversaries contribute to the fake-post ODE;
//! * `eh`  — `phi * ea` for a constant `phi > 1`;
//! * `eh2` — the `eo` shape driven at the larger cap `1/alpha_x_R - gamma`.
//!
//! The mechanisms are actuality-blind: `ea`/`eh` embed the fake-post
//! parameters in the correction even when the underlying post is real,
//! because the platform cannot know the actuality. For any mechanism the
//! death rates of the embedded chain equal the behaviour proportions, so
//! the limit drift reduces to a closed form that this module evaluates
//! both directly and through the generic kernel of [`crate::ode_core`].

use serde::Serialize;

use crate::error::Error;
use crate::model::{PostParams, PostType, SystemConfig};
use crate::ode_core::{
    self, find_equilibria, EquilibriumPoint, FindOptions, Kernel, MeanMatrix,
};

/// A concrete warning mechanism. The prior-knowledge offset `gamma` and
/// the population parameters live in [`SystemConfig`]; specs only carry
/// the control parameters so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WarningSpec {
    Eo { w: f64, b: f64 },
    Ea { w: f64, b: f64 },
    Eh { w: f64, b: f64, phi: f64 },
    Eh2 { w: f64, b: f64 },
}

impl WarningSpec {
    pub fn mechanism(&self) -> Mechanism {
        match self {
            WarningSpec::Eo { .. } => Mechanism::Eo,
            WarningSpec::Ea { .. } => Mechanism::Ea,
            WarningSpec::Eh { .. } => Mechanism::Eh,
            WarningSpec::Eh2 { .. } => Mechanism::Eh2,
        }
    }

    pub fn w(&self) -> f64 {
        match *self {
            WarningSpec::Eo { w, .. }
            | WarningSpec::Ea { w, .. }
            | WarningSpec::Eh { w, .. }
            | WarningSpec::Eh2 { w, .. } => w,
        }
    }

    pub fn b(&self) -> f64 {
        match *self {
            WarningSpec::Eo { b, .. }
            | WarningSpec::Ea { b, .. }
            | WarningSpec::Eh { b, .. }
            | WarningSpec::Eh2 { b, .. } => b,
        }
    }

    pub fn phi(&self) -> Option<f64> {
        match *self {
            WarningSpec::Eh { phi, .. } => Some(phi),
            _ => None,
        }
    }
}

/// Mechanism names as used on the CLI and in CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mechanism {
    Eo,
    Ea,
    Eh,
    Eh2,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Mechanism::Eo, Mechanism::Ea, Mechanism::Eh, Mechanism::Eh2];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Eo => "eo",
            Mechanism::Ea => "ea",
            Mechanism::Eh => "eh",
            Mechanism::Eh2 => "eh2",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "eo" => Ok(Mechanism::Eo),
            "ea" => Ok(Mechanism::Ea),
            "eh" => Ok(Mechanism::Eh),
            "eh2" => Ok(Mechanism::Eh2),
            other => Err(Error::Parse(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// The base `w beta / (beta + b (1-beta))` ratio; 0 at `beta = 0` (also
/// for `b = 0`, where the ratio is taken as its `beta -> 0` gap value so
/// that the warning always starts from `gamma`).
fn base_ratio(w: f64, b: f64, beta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    w * beta / (beta + b * (1.0 - beta))
}

/// Additive correction of the `ea` mechanism. Vanishes at `beta = 0` and
/// for `mua = 0`.
fn ea_correction(cfg: &SystemConfig, beta: f64) -> f64 {
    if beta <= 0.0 || cfg.mua == 0.0 {
        return 0.0;
    }
    let mix = beta * cfg.alpha_x_f + (1.0 - beta) * cfg.alpha_y_f;
    beta * cfg.mua * cfg.m_f * cfg.eta_a / (cfg.mu2 * cfg.m_f * cfg.eta_f * mix)
}

/// Warning level shown at fake-tag proportion `beta`.
pub fn warning_value(spec: &WarningSpec, cfg: &SystemConfig, beta: f64) -> f64 {
    match *spec {
        WarningSpec::Eo { w, b } | WarningSpec::Eh2 { w, b } => {
            base_ratio(w, b, beta) + cfg.gamma
        }
        WarningSpec::Ea { w, b } => base_ratio(w, b, beta) + cfg.gamma + ea_correction(cfg, beta),
        WarningSpec::Eh { w, b, phi } => {
            phi * (base_ratio(w, b, beta) + cfg.gamma + ea_correction(cfg, beta))
        }
    }
}

/// Limit mean offspring matrix of the warning dynamics at proportion
/// `beta`, clamps `min(alpha * warning, 1)` included.
pub fn limit_mean_matrix(
    spec: &WarningSpec,
    cfg: &SystemConfig,
    post: PostType,
    beta: f64,
) -> MeanMatrix {
    let p = PostParams::for_post(cfg, post);
    let omega = warning_value(spec, cfg, beta);
    let tag_x = (omega * p.alpha_x).min(1.0);
    let tag_y = (omega * p.alpha_y).min(1.0);
    let share = cfg.m_f * p.eta;
    let adv = cfg.mua * cfg.m_f * cfg.eta_a;
    MeanMatrix {
        xx: (cfg.mu1 * cfg.rho * p.alpha_x + cfg.mu2 * tag_x) * share,
        xy: (cfg.mu1 * (1.0 - p.alpha_x * cfg.rho) + cfg.mu2 * (1.0 - tag_x)) * share + adv,
        yx: (cfg.mu1 * cfg.rho * p.alpha_y + cfg.mu2 * tag_y) * share,
        yy: (cfg.mu1 * (1.0 - p.alpha_y * cfg.rho) + cfg.mu2 * (1.0 - tag_y)) * share + adv,
    }
}

/// Drift of the limiting proportion ODE, written out directly from the
/// warning dynamics. Must agree pointwise with the generic
/// [`ode_core::g_beta`] on the kernel from [`kernel`]; tests hold the two
/// routes against each other.
pub fn g_direct(spec: &WarningSpec, cfg: &SystemConfig, post: PostType, beta: f64) -> f64 {
    let p = PostParams::for_post(cfg, post);
    let omega = warning_value(spec, cfg, beta);
    let tag_x = (omega * p.alpha_x).min(1.0);
    let tag_y = (omega * p.alpha_y).min(1.0);
    (-beta * cfg.mu2 - beta * cfg.mu1 * (1.0 - p.alpha_x * cfg.rho)
        + (1.0 - beta) * cfg.mu1 * cfg.rho * p.alpha_y
        + cfg.mu2 * (beta * tag_x + (1.0 - beta) * tag_y))
        * cfg.m_f
        * p.eta
        - beta * cfg.mua * cfg.m_f * cfg.eta_a
}

/// Generic-kernel view of the same dynamics: death rate of either type
/// per variety equals the behaviour proportion (varieties with zero mass
/// are dropped), means come from [`limit_mean_matrix`].
pub fn kernel(spec: &WarningSpec, cfg: &SystemConfig, post: PostType) -> Kernel {
    let spec = *spec;
    let cfg_copy = *cfg;
    let rates: Vec<f64> = cfg.mu().into_iter().filter(|&m| m > 0.0).collect();
    Kernel::with_constant_rates(
        Box::new(move |beta| limit_mean_matrix(&spec, &cfg_copy, post, beta)),
        rates.clone(),
        rates,
    )
}

/// Closure form of [`g_direct`] for root finding.
pub fn g_fn(spec: &WarningSpec, cfg: &SystemConfig, post: PostType) -> impl Fn(f64) -> f64 {
    let spec = *spec;
    let cfg = *cfg;
    move |beta| g_direct(&spec, &cfg, post, beta)
}

/// Lower and upper bounds on every possible limit proportion for the
/// given post, valid for any warning mechanism.
pub fn beta_bounds(cfg: &SystemConfig, post: PostType) -> (f64, f64) {
    let p = PostParams::for_post(cfg, post);
    let q = (cfg.mu2 + cfg.mu1 * (1.0 - (p.alpha_x - p.alpha_y) * cfg.rho)) * p.eta
        + cfg.mua * cfg.eta_a;
    let lower = cfg.mu1 * cfg.rho * p.alpha_y * p.eta / q;
    let upper = (cfg.mu2 + cfg.mu1 * cfg.rho * p.alpha_y) * p.eta / q;
    (lower, upper)
}

/// Rescaling that counts only non-adversarial tags: i-QoS = factor * QoS.
pub fn iqos_factor(cfg: &SystemConfig, post: PostType) -> Result<f64, Error> {
    let active = cfg.mu1 + cfg.mu2;
    if active <= 0.0 {
        return Err(Error::Precondition(
            "i-QoS undefined when mu1 + mu2 = 0 (no participating non-adversaries)",
        ));
    }
    let p = PostParams::for_post(cfg, post);
    Ok((active * p.eta + cfg.mua * cfg.eta_a) / (active * p.eta))
}

/// Full limit analysis of one mechanism on one post.
#[derive(Debug, Clone, Serialize)]
pub struct MechanismAnalysis {
    pub post: PostType,
    /// All zeros of the drift, sorted ascending.
    pub equilibria: Vec<EquilibriumPoint>,
    pub beta_lower: f64,
    pub beta_upper: f64,
    /// Smallest limit proportion; for a fake post this is the QoS.
    pub qos: f64,
    /// `qos` rescaled to non-adversarial tags.
    pub iqos: f64,
}

impl MechanismAnalysis {
    pub fn beta_min(&self) -> f64 {
        self.qos
    }

    /// Largest limit proportion; the value the real-post constraint caps.
    pub fn beta_max(&self) -> f64 {
        self.equilibria.last().map(|e| e.beta).unwrap_or(f64::NAN)
    }

    pub fn attractors(&self) -> impl Iterator<Item = &EquilibriumPoint> {
        self.equilibria
            .iter()
            .filter(|e| e.kind == ode_core::EquilibriumKind::Attractor)
    }

    pub const CSV_HEADER: &'static str = "mechanism,post,mu_a,w,b,phi,beta_star,kind,qos,iqos";

    /// One CSV row per equilibrium.
    pub fn csv_rows(&self, spec: &WarningSpec, cfg: &SystemConfig) -> Vec<String> {
        self.equilibria
            .iter()
            .map(|e| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    spec.mechanism().name(),
                    self.post.name(),
                    cfg.mua,
                    spec.w(),
                    spec.b(),
                    spec.phi().map(|p| p.to_string()).unwrap_or_default(),
                    e.beta,
                    e.kind.name(),
                    self.qos,
                    self.iqos
                )
            })
            .collect()
    }
}

/// Finds and classifies every limit proportion of `spec` on `post`,
/// checks the structural guarantees (at least one attractor, all zeros
/// inside the universal bounds), and attaches QoS and i-QoS.
pub fn analyze(
    spec: &WarningSpec,
    cfg: &SystemConfig,
    post: PostType,
) -> Result<MechanismAnalysis, Error> {
    analyze_with(spec, cfg, post, &FindOptions::default())
}

pub fn analyze_with(
    spec: &WarningSpec,
    cfg: &SystemConfig,
    post: PostType,
    opts: &FindOptions,
) -> Result<MechanismAnalysis, Error> {
    cfg.ensure_valid()?;
    let equilibria = find_equilibria(g_fn(spec, cfg, post), opts)?;
    if !equilibria
        .iter()
        .any(|e| e.kind == ode_core::EquilibriumKind::Attractor)
    {
        return Err(Error::Invariant(format!(
            "no attractor found for {} on {} post",
            spec.mechanism().name(),
            post.name()
        )));
    }
    let (beta_lower, beta_upper) = beta_bounds(cfg, post);
    let qos = equilibria[0].beta;
    let iqos = iqos_factor(cfg, post)? * qos;
    Ok(MechanismAnalysis {
        post,
        equilibria,
        beta_lower,
        beta_upper,
        qos,
        iqos,
    })
}
