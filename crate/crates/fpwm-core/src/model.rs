//! Population and behaviour parameters of the tagging model.
//!
//! A [`SystemConfig`] bundles every parameter of the user population
//! (proportions of the four behaviour types, warning sensitivities, share
//! attractiveness, the friend distribution) together with the design
//! tolerance `delta` for real posts. Configs are plain values: once built
//! they are never mutated, so they can be copied freely across worker
//! threads.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Actuality of a post: what the content really is, independent of any tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PostType {
    Real,
    Fake,
}

impl PostType {
    pub fn name(self) -> &'static str {
        match self {
            PostType::Real => "real",
            PostType::Fake => "fake",
        }
    }
}

impl std::str::FromStr for PostType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "r" => Ok(PostType::Real),
            "fake" | "f" => Ok(PostType::Fake),
            other => Err(Error::Parse(format!("unknown post type `{other}`"))),
        }
    }
}

/// Distribution of the number of friends a reader shares with.
///
/// The analysis only uses the mean and requires a finite second moment,
/// which all three variants have.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FriendDistribution {
    Deterministic(u64),
    Poisson(f64),
    Binomial { n: u64, p: f64 },
}

impl FriendDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            FriendDistribution::Deterministic(n) => n as f64,
            FriendDistribution::Poisson(mean) => mean,
            FriendDistribution::Binomial { n, p } => n as f64 * p,
        }
    }
}

/// All population and behaviour parameters.
///
/// Field names match the keys accepted in JSON config files; see
/// [`SystemConfig::from_json_str`]. Unknown keys are rejected so that a
/// typo in one of the `mu` fields cannot silently corrupt an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Proportion of non-participating users.
    pub mu0: f64,
    /// Proportion of warning-ignoring users.
    pub mu1: f64,
    /// Proportion of warning-seeking users.
    pub mu2: f64,
    /// Proportion of real-coloring adversaries.
    pub mua: f64,
    /// Warning sensitivity, fake post received with fake tag.
    #[serde(rename = "alpha_x_F")]
    pub alpha_x_f: f64,
    /// Warning sensitivity, fake post received with real tag.
    #[serde(rename = "alpha_y_F")]
    pub alpha_y_f: f64,
    /// Warning sensitivity, real post received with fake tag.
    #[serde(rename = "alpha_x_R")]
    pub alpha_x_r: f64,
    /// Warning sensitivity, real post received with real tag.
    #[serde(rename = "alpha_y_R")]
    pub alpha_y_r: f64,
    /// Share attractiveness of a fake post.
    #[serde(rename = "eta_F")]
    pub eta_f: f64,
    /// Share attractiveness of a real post.
    #[serde(rename = "eta_R")]
    pub eta_r: f64,
    /// Adversarial share probability.
    pub eta_a: f64,
    /// Linkage between un-aided and warning-aided identification.
    pub rho: f64,
    /// Prior-knowledge warning offset.
    pub gamma: f64,
    /// Mean number of friends.
    pub m_f: f64,
    /// Friend-count distribution; must have mean `m_f`.
    pub friends: FriendDistribution,
    /// Transient share boost constant (the `k` in `eta + k/Z^2`).
    pub k_share: f64,
    /// Tolerance on the real-post limit proportion of fake tags.
    pub delta: f64,
    /// Initial unread fake-tagged copies.
    pub seed_cx0: u64,
    /// Initial unread real-tagged copies.
    pub seed_cy0: u64,
}

/// Raw JSON shape; optional fields get their documented defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mu0: f64,
    mu1: f64,
    mu2: f64,
    mua: f64,
    #[serde(rename = "alpha_x_F")]
    alpha_x_f: f64,
    #[serde(rename = "alpha_y_F")]
    alpha_y_f: f64,
    #[serde(rename = "alpha_x_R")]
    alpha_x_r: f64,
    #[serde(rename = "alpha_y_R")]
    alpha_y_r: f64,
    #[serde(rename = "eta_F")]
    eta_f: f64,
    #[serde(rename = "eta_R")]
    eta_r: f64,
    eta_a: f64,
    rho: f64,
    gamma: f64,
    m_f: f64,
    friends: Option<FriendDistribution>,
    k_share: Option<f64>,
    delta: f64,
    seed_cx0: Option<u64>,
    seed_cy0: Option<u64>,
}

pub const DEFAULT_K_SHARE: f64 = 10.0;
pub const DEFAULT_SEED_CX0: u64 = 0;
pub const DEFAULT_SEED_CY0: u64 = 20;

/// How severe a config violation is. `Error` makes the config unusable;
/// `Warning` flags an assumption that only affects numerical experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

/// A single violated invariant, with a stable machine-readable code.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
    pub severity: Severity,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

fn warn(v: &mut Vec<Violation>, code: &'static str, message: String) {
    v.push(Violation {
        code,
        message,
        severity: Severity::Warning,
    });
}

impl SystemConfig {
    /// Parses a flat JSON object. Optional keys: `friends` (defaults to
    /// `Deterministic(round(m_f))`), `k_share` (10.0), `seed_cx0` (0),
    /// `seed_cy0` (20). Unknown keys are an error.
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        Ok(SystemConfig {
            mu0: raw.mu0,
            mu1: raw.mu1,
            mu2: raw.mu2,
            mua: raw.mua,
            alpha_x_f: raw.alpha_x_f,
            alpha_y_f: raw.alpha_y_f,
            alpha_x_r: raw.alpha_x_r,
            alpha_y_r: raw.alpha_y_r,
            eta_f: raw.eta_f,
            eta_r: raw.eta_r,
            eta_a: raw.eta_a,
            rho: raw.rho,
            gamma: raw.gamma,
            m_f: raw.m_f,
            friends: raw
                .friends
                .unwrap_or(FriendDistribution::Deterministic(raw.m_f.round() as u64)),
            k_share: raw.k_share.unwrap_or(DEFAULT_K_SHARE),
            delta: raw.delta,
            seed_cx0: raw.seed_cx0.unwrap_or(DEFAULT_SEED_CX0),
            seed_cy0: raw.seed_cy0.unwrap_or(DEFAULT_SEED_CY0),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Proportions in death-variety order: np, wi, ws, a.
    pub fn mu(&self) -> [f64; 4] {
        [self.mu0, self.mu1, self.mu2, self.mua]
    }

    /// Checks every invariant and returns all violations; an empty list
    /// means the config is valid. Pure: same input, same output.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let v = &mut violations;
        fn err(v: &mut Vec<Violation>, code: &'static str, message: String) {
            v.push(Violation {
                code,
                message,
                severity: Severity::Error,
            })
        }

        let mu_sum = self.mu0 + self.mu1 + self.mu2 + self.mua;
        if (mu_sum - 1.0).abs() > 1e-12 {
            err(v, "mu_sum", format!("mu0+mu1+mu2+mua = {mu_sum}, must be 1"));
        }
        for (name, m) in [
            ("mu0", self.mu0),
            ("mu1", self.mu1),
            ("mua", self.mua),
        ] {
            if !(0.0..=1.0).contains(&m) || !m.is_finite() {
                err(v, "mu_range", format!("{name} = {m} outside [0,1]"));
            }
        }
        // Crowd signals need warning-seeking users; the boundary case of
        // everyone seeking warnings is admissible.
        if !(self.mu2 > 0.0 && self.mu2 <= 1.0) {
            err(v, "mu2_range", format!("mu2 must be in (0,1), got {}", self.mu2));
        }
        if !(self.alpha_x_f > self.alpha_y_f && self.alpha_y_f > 0.0) {
            err(
                v,
                "alpha_tag_order_f",
                format!(
                    "need alpha_x_F > alpha_y_F > 0, got ({}, {})",
                    self.alpha_x_f, self.alpha_y_f
                ),
            );
        }
        if !(self.alpha_x_r > self.alpha_y_r && self.alpha_y_r > 0.0) {
            err(
                v,
                "alpha_tag_order_r",
                format!(
                    "need alpha_x_R > alpha_y_R > 0, got ({}, {})",
                    self.alpha_x_r, self.alpha_y_r
                ),
            );
        }
        if !(self.alpha_x_f > self.alpha_x_r) || !(self.alpha_y_f > self.alpha_y_r) {
            err(
                v,
                "alpha_post_order",
                "need alpha_i_F > alpha_i_R for i in {x, y}".to_string(),
            );
        }
        if !(self.eta_f > self.eta_r && self.eta_r > 0.0) {
            err(
                v,
                "eta_order",
                format!("need eta_F > eta_R > 0, got ({}, {})", self.eta_f, self.eta_r),
            );
        }
        for (name, e) in [("eta_F", self.eta_f), ("eta_R", self.eta_r), ("eta_a", self.eta_a)] {
            if !(e > 0.0 && e < 1.0) {
                err(v, "eta_range", format!("{name} = {e} outside (0,1)"));
            }
        }
        if self.eta_a <= self.eta_f {
            // The limit theory holds either way; flag it for experiments only.
            warn(
                v,
                "eta_a_order",
                format!(
                    "eta_a = {} not above eta_F = {}; adversarial shares are weak",
                    self.eta_a, self.eta_f
                ),
            );
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            err(v, "rho_range", format!("rho must be in (0,1), got {}", self.rho));
        }
        if !(self.gamma > 0.0) {
            err(v, "gamma_positive", format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.m_f > 0.0) {
            err(v, "m_f_positive", format!("m_f must be > 0, got {}", self.m_f));
        }
        if !(self.m_f * self.eta_r > 1.0) {
            err(
                v,
                "supercritical",
                format!(
                    "supercriticality m_f*eta_R > 1 fails: {} * {} = {}",
                    self.m_f,
                    self.eta_r,
                    self.m_f * self.eta_r
                ),
            );
        }
        if (self.friends.mean() - self.m_f).abs() > 1e-9 {
            err(
                v,
                "friends_mean",
                format!(
                    "friend distribution mean {} != m_f {}",
                    self.friends.mean(),
                    self.m_f
                ),
            );
        }
        match self.friends {
            FriendDistribution::Poisson(mean) if !(mean > 0.0) => {
                err(v, "friends_params", format!("Poisson mean must be > 0, got {mean}"));
            }
            FriendDistribution::Binomial { n, p } if !(n > 0 && (0.0..=1.0).contains(&p)) => {
                err(v, "friends_params", format!("Binomial(n={n}, p={p}) invalid"));
            }
            _ => {}
        }
        if !(self.alpha_x_f * self.rho < 1.0) {
            err(
                v,
                "px_probability",
                format!(
                    "alpha_x_F * rho = {} must be < 1 so tag probabilities stay in (0,1)",
                    self.alpha_x_f * self.rho
                ),
            );
        }
        if self.seed_cx0 + self.seed_cy0 == 0 {
            err(v, "seed_total", "seed_cx0 + seed_cy0 must be >= 1".to_string());
        }
        if !(self.k_share >= 0.0) {
            err(v, "k_share_range", format!("k_share must be >= 0, got {}", self.k_share));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            err(v, "delta_range", format!("delta must be in (0,1), got {}", self.delta));
        }
        violations
    }

    /// Errors if any hard invariant is violated.
    pub fn ensure_valid(&self) -> Result<(), Error> {
        let violations: Vec<Violation> = self
            .validate()
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(violations))
        }
    }

    /// Copy of the config with the adversaries removed; the freed mass goes
    /// to the non-participants so that active-user dynamics are untouched.
    pub fn without_adversaries(&self) -> SystemConfig {
        let mut cfg = *self;
        cfg.mu0 += cfg.mua;
        cfg.mua = 0.0;
        cfg
    }
}

/// Per-post parameters resolved from a config: share attractiveness, the
/// two warning sensitivities, and the un-aided tag probabilities
/// `p_x = alpha_x * rho`, `p_y = alpha_y * rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostParams {
    pub eta: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub p_x: f64,
    pub p_y: f64,
}

impl PostParams {
    /// Resolves without validating; use [`resolve_post_params`] at API
    /// boundaries.
    pub fn for_post(cfg: &SystemConfig, post: PostType) -> PostParams {
        let (eta, alpha_x, alpha_y) = match post {
            PostType::Fake => (cfg.eta_f, cfg.alpha_x_f, cfg.alpha_y_f),
            PostType::Real => (cfg.eta_r, cfg.alpha_x_r, cfg.alpha_y_r),
        };
        PostParams {
            eta,
            alpha_x,
            alpha_y,
            p_x: alpha_x * cfg.rho,
            p_y: alpha_y * cfg.rho,
        }
    }
}

/// Validating form of [`PostParams::for_post`].
pub fn resolve_post_params(cfg: &SystemConfig, post: PostType) -> Result<PostParams, Error> {
    cfg.ensure_valid()?;
    Ok(PostParams::for_post(cfg, post))
}
