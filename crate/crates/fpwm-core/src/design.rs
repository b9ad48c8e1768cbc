//! Closed-form mechanism design.
//!
//! The eo family admits an explicit optimum: `w` is pushed to the largest
//! value that keeps the fake-tag probability a probability, and `b` is
//! either zero or the unique value that parks the real-post limit exactly
//! on the threshold. The ea/eh/eh2 constructions reuse that machinery with
//! the adversary-corrected warning, a multiplicative boost `phi`, and the
//! larger real-post cap respectively.
//!
//! Every entry point takes the resolved `threshold` (either `delta` or its
//! adversary-adjusted variant `delta_a`); use [`threshold_for`] to resolve
//! a [`ThresholdMode`].

use serde::Serialize;

use crate::error::Error;
use crate::model::{PostType, SystemConfig};
use crate::ode_core::EquilibriumKind;
use crate::warning::{self, analyze, Mechanism, MechanismAnalysis, WarningSpec};

/// Which real-post tolerance a design targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThresholdMode {
    /// Cap the raw real-post limit proportion at `delta`.
    Plain,
    /// Cap the non-adversarial real-post proportion: threshold `delta_a`.
    AdversaryAdjusted,
}

impl ThresholdMode {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdMode::Plain => "plain",
            ThresholdMode::AdversaryAdjusted => "adjusted",
        }
    }
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(ThresholdMode::Plain),
            "adjusted" | "adversary_adjusted" => Ok(ThresholdMode::AdversaryAdjusted),
            other => Err(Error::Parse(format!("unknown threshold mode `{other}`"))),
        }
    }
}

/// Named intermediate values of a design, kept for diagnostics output.
#[derive(Debug, Clone, Serialize, Default)]
pub struct Diagnostics {
    pub w_bar: f64,
    /// Real-post limit at `(w, 0)`, the value the binding test compares.
    pub real_zero_at_b0: f64,
    pub b_star: f64,
    pub beta_o_na: Option<f64>,
    pub delta_cap_a: Option<f64>,
    pub phi_bar: Option<f64>,
    pub phi_star: Option<f64>,
}

/// A designed mechanism plus how it was obtained.
#[derive(Debug, Clone, Serialize)]
pub struct DesignResult {
    pub spec: WarningSpec,
    /// Whether the real-post constraint is tight (b > 0 case).
    pub binding: bool,
    pub threshold_used: f64,
    pub diagnostics: Diagnostics,
}

impl DesignResult {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }
}

/// Largest `w` for which a warning-seeking reader's fake-tag probability
/// never clamps on a fake post: `1/alpha_x_F - gamma`.
pub fn w_bar(cfg: &SystemConfig) -> Result<f64, Error> {
    let w = 1.0 / cfg.alpha_x_f - cfg.gamma;
    if w <= 0.0 {
        return Err(Error::InvalidConfig(vec![crate::model::Violation {
            code: "gamma_exceeds_cap",
            message: format!("1/alpha_x_F - gamma = {w} must be positive"),
            severity: crate::model::Severity::Error,
        }]));
    }
    Ok(w)
}

/// Adversary-adjusted real-post tolerance
/// `delta * (mu1+mu2) eta_R / ((mu1+mu2) eta_R + mua eta_a)`; equals
/// `delta` exactly when there are no adversaries.
pub fn delta_a(cfg: &SystemConfig) -> Result<f64, Error> {
    let active = cfg.mu1 + cfg.mu2;
    if active <= 0.0 {
        return Err(Error::Precondition("delta_a undefined when mu1 + mu2 = 0"));
    }
    Ok(cfg.delta * (active * cfg.eta_r) / (active * cfg.eta_r + cfg.mua * cfg.eta_a))
}

pub fn threshold_for(cfg: &SystemConfig, mode: ThresholdMode) -> Result<f64, Error> {
    match mode {
        ThresholdMode::Plain => Ok(cfg.delta),
        ThresholdMode::AdversaryAdjusted => delta_a(cfg),
    }
}

/// The `b` that places the real-post limit of the eo-shaped warning with
/// parameter `w` exactly at `threshold` (valid while the real-post clamps
/// are inactive, which every design here guarantees).
pub fn b_star(cfg: &SystemConfig, w: f64, threshold: f64) -> Result<f64, Error> {
    let t = threshold;
    let tag_mix = t * cfg.alpha_x_r + (1.0 - t) * cfg.alpha_y_r;
    let denom = t * ((cfg.mu1 + cfg.mu2) * cfg.eta_r + cfg.mua * cfg.eta_a)
        - cfg.eta_r * (cfg.mu1 * cfg.rho + cfg.mu2 * cfg.gamma) * tag_mix;
    if denom <= 0.0 {
        return Err(Error::Infeasible(format!(
            "no b can hold the real post at {t}: even an unbounded b leaves the limit above it \
             (denominator {denom} <= 0)"
        )));
    }
    let p = cfg.eta_r * cfg.mu2 * tag_mix / denom;
    Ok((t / (1.0 - t)) * (w * p - 1.0))
}

/// Real-post analysis helper: the limit the binding test looks at.
fn real_sup(spec: &WarningSpec, cfg: &SystemConfig) -> Result<(f64, MechanismAnalysis), Error> {
    let analysis = analyze(spec, cfg, PostType::Real)?;
    Ok((analysis.safety_sup(), analysis))
}

fn check_threshold(threshold: f64) -> Result<(), Error> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Precondition("threshold must lie in (0,1)"));
    }
    Ok(())
}

/// Optimal eo design: `w* = w_bar`; `b* = 0` if the real post already sits
/// below the threshold, else the closed-form value, re-verified against
/// the root finder to 1e-8.
pub fn optimal_eo(cfg: &SystemConfig, threshold: f64) -> Result<DesignResult, Error> {
    cfg.ensure_valid()?;
    check_threshold(threshold)?;
    let w = w_bar(cfg)?;
    let unbounded = WarningSpec::Eo { w, b: 0.0 };
    let (real_zero, _) = real_sup(&unbounded, cfg)?;

    let mut diagnostics = Diagnostics {
        w_bar: w,
        real_zero_at_b0: real_zero,
        ..Diagnostics::default()
    };

    if real_zero <= threshold {
        return Ok(DesignResult {
            spec: unbounded,
            binding: false,
            threshold_used: threshold,
            diagnostics,
        });
    }

    let b = b_star(cfg, w, threshold)?;
    diagnostics.b_star = b;
    let spec = WarningSpec::Eo { w, b };
    let (achieved, _) = real_sup(&spec, cfg)?;
    if (achieved - threshold).abs() > 1e-8 {
        return Err(Error::Invariant(format!(
            "binding eo design should pin the real post at {threshold}, got {achieved}"
        )));
    }
    Ok(DesignResult {
        spec,
        binding: true,
        threshold_used: threshold,
        diagnostics,
    })
}

/// Optimal fake-post limit with the adversaries removed (their mass goes
/// to the non-participants).
pub fn beta_o_na(cfg: &SystemConfig, threshold: f64) -> Result<f64, Error> {
    let cfg_na = cfg.without_adversaries();
    let design = optimal_eo(&cfg_na, threshold)?;
    Ok(analyze(&design.spec, &cfg_na, PostType::Fake)?.qos)
}

/// Largest adversary fraction for which the ea mechanism eliminates the
/// adversarial effect completely (every fake-post limit at or above the
/// no-adversary optimum).
pub fn delta_cap_a(cfg: &SystemConfig, threshold: f64) -> Result<f64, Error> {
    let cfg_na = cfg.without_adversaries();
    let design = optimal_eo(&cfg_na, threshold)?;
    let beta_na = analyze(&design.spec, &cfg_na, PostType::Fake)?.qos;
    let omega_na = warning::warning_value(&design.spec, &cfg_na, beta_na);
    let mix = beta_na * cfg.alpha_x_f + (1.0 - beta_na) * cfg.alpha_y_f;
    Ok(cfg.mu2 * cfg.eta_f * (1.0 / cfg.alpha_x_f - omega_na) * mix / (beta_na * cfg.eta_a))
}

/// ea design: `w = w_bar` and, when the unbounded real-post limit exceeds
/// the threshold, the binding `b` of the no-adversary counterfactual.
///
/// The whole point of the ea warning is to recreate the no-adversary
/// system, so its `(w, b)` are that system's optimum. In the counter-
/// factual the adjusted tolerance collapses back to `delta`
/// (`delta_a = delta` at `mua = 0`), which is why the closed form below
/// always uses `cfg.delta`; `threshold` (the true system's tolerance)
/// only decides whether `b` is needed at all.
pub fn build_ea(cfg: &SystemConfig, mode: ThresholdMode) -> Result<DesignResult, Error> {
    build_ea_at(cfg, threshold_for(cfg, mode)?)
}

pub(crate) fn build_ea_at(cfg: &SystemConfig, threshold: f64) -> Result<DesignResult, Error> {
    cfg.ensure_valid()?;
    check_threshold(threshold)?;
    let w = w_bar(cfg)?;
    let unbounded = WarningSpec::Ea { w, b: 0.0 };
    let (real_zero, _) = real_sup(&unbounded, cfg)?;
    let binding = real_zero > threshold;
    let b = if binding {
        b_star(&cfg.without_adversaries(), w, cfg.delta)?
    } else {
        0.0
    };
    let mut diagnostics = Diagnostics {
        w_bar: w,
        real_zero_at_b0: real_zero,
        b_star: b,
        ..Diagnostics::default()
    };
    diagnostics.beta_o_na = Some(beta_o_na(cfg, cfg.delta)?);
    diagnostics.delta_cap_a = Some(delta_cap_a(cfg, cfg.delta)?);
    Ok(DesignResult {
        spec: WarningSpec::Ea { w, b },
        binding,
        threshold_used: threshold,
        diagnostics,
    })
}

/// The optimal multiplicative boost for the eh mechanism on top of an
/// already built ea design.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhiChoice {
    pub phi_bar: f64,
    pub phi_star: f64,
}

pub fn phi_star(cfg: &SystemConfig, threshold: f64) -> Result<PhiChoice, Error> {
    let ea = build_ea_at(cfg, threshold)?;
    phi_star_with(cfg, threshold, &ea)
}

fn phi_star_with(
    cfg: &SystemConfig,
    threshold: f64,
    ea: &DesignResult,
) -> Result<PhiChoice, Error> {
    let t = threshold;
    let omega_a = |beta: f64| warning::warning_value(&ea.spec, cfg, beta);
    let tag_mix = t * cfg.alpha_x_r + (1.0 - t) * cfg.alpha_y_r;
    let numerator = t
        * (cfg.mu2 * cfg.eta_r + cfg.mu1 * (1.0 - cfg.alpha_x_r * cfg.rho) * cfg.eta_r
            + cfg.mua * cfg.eta_a)
        - (1.0 - t) * cfg.mu1 * cfg.rho * cfg.alpha_y_r * cfg.eta_r;
    let phi_bar = numerator / (cfg.mu2 * omega_a(t) * tag_mix * cfg.eta_r);

    let (beta_lower_f, _) = warning::beta_bounds(cfg, PostType::Fake);
    let first_branch = phi_bar < 1.0 / (cfg.alpha_y_r * omega_a(t))
        || (beta_lower_f <= 1e-15 && ea.spec.b() == 0.0);
    let phi = if first_branch {
        phi_bar
    } else {
        1.0 / (omega_a(beta_lower_f) * cfg.alpha_y_f)
    };
    if phi <= 1.0 {
        // Without adversaries the binding ea design already pins the real
        // post at the tolerance, so there is no room to boost and the
        // optimum degenerates to no boost at all.
        if cfg.mua == 0.0 && (phi - 1.0).abs() <= 1e-9 {
            return Ok(PhiChoice {
                phi_bar,
                phi_star: 1.0,
            });
        }
        return Err(Error::Invariant(format!(
            "optimal eh boost must exceed 1, got {phi}"
        )));
    }
    Ok(PhiChoice {
        phi_bar,
        phi_star: phi,
    })
}

/// eh design: the ea design scaled by the optimal `phi`.
pub fn build_eh(cfg: &SystemConfig, mode: ThresholdMode) -> Result<DesignResult, Error> {
    build_eh_at(cfg, threshold_for(cfg, mode)?)
}

pub(crate) fn build_eh_at(cfg: &SystemConfig, threshold: f64) -> Result<DesignResult, Error> {
    let ea = build_ea_at(cfg, threshold)?;
    let choice = phi_star_with(cfg, threshold, &ea)?;
    let mut diagnostics = ea.diagnostics.clone();
    diagnostics.phi_bar = Some(choice.phi_bar);
    diagnostics.phi_star = Some(choice.phi_star);
    Ok(DesignResult {
        spec: WarningSpec::Eh {
            w: ea.spec.w(),
            b: ea.spec.b(),
            phi: choice.phi_star,
        },
        binding: ea.binding,
        threshold_used: threshold,
        diagnostics,
    })
}

/// eh2 design: the eo shape driven at `w = 1/alpha_x_R - gamma`, with `b`
/// chosen by the same binding logic against the threshold. The real post
/// keeps a unique interior limit at or below the threshold.
pub fn build_eh2(cfg: &SystemConfig, mode: ThresholdMode) -> Result<DesignResult, Error> {
    build_eh2_at(cfg, threshold_for(cfg, mode)?)
}

pub(crate) fn build_eh2_at(cfg: &SystemConfig, threshold: f64) -> Result<DesignResult, Error> {
    cfg.ensure_valid()?;
    check_threshold(threshold)?;
    let w = 1.0 / cfg.alpha_x_r - cfg.gamma;
    if w <= 0.0 {
        return Err(Error::Infeasible(format!(
            "eh2 cap 1/alpha_x_R - gamma = {w} not positive"
        )));
    }
    let unbounded = WarningSpec::Eh2 { w, b: 0.0 };
    let (real_zero, _) = real_sup(&unbounded, cfg)?;
    let binding = real_zero > threshold;
    let b = if binding { b_star(cfg, w, threshold)? } else { 0.0 };
    let spec = WarningSpec::Eh2 { w, b };
    let (achieved, analysis) = real_sup(&spec, cfg)?;
    if analysis.limit_relevant_equilibria().count() != 1 {
        return Err(Error::Invariant(format!(
            "eh2 real-post analysis should have a unique limit, got {:?}",
            analysis.equilibria
        )));
    }
    if achieved > threshold + 1e-8 {
        return Err(Error::Invariant(format!(
            "eh2 real-post limit {achieved} exceeds threshold {threshold}"
        )));
    }
    Ok(DesignResult {
        spec,
        binding,
        threshold_used: threshold,
        diagnostics: Diagnostics {
            w_bar: w,
            real_zero_at_b0: real_zero,
            b_star: b,
            ..Diagnostics::default()
        },
    })
}

/// Designs the named mechanism at the resolved threshold mode.
pub fn design_for(
    mechanism: Mechanism,
    cfg: &SystemConfig,
    mode: ThresholdMode,
) -> Result<DesignResult, Error> {
    match mechanism {
        Mechanism::Eo => optimal_eo(cfg, threshold_for(cfg, mode)?),
        Mechanism::Ea => build_ea(cfg, mode),
        Mechanism::Eh => build_eh(cfg, mode),
        Mechanism::Eh2 => build_eh2(cfg, mode),
    }
}

impl MechanismAnalysis {
    /// Equilibria that a trajectory can actually approach. A repeller
    /// pinned to a domain boundary by clamp saturation (its only
    /// neighbourhood pushes the flow away) is excluded; everything else,
    /// including interior repellers and saddles, is kept.
    pub fn limit_relevant_equilibria(&self) -> impl Iterator<Item = &crate::ode_core::EquilibriumPoint> {
        self.equilibria.iter().filter(|e| {
            !(e.kind == EquilibriumKind::Repeller
                && ((e.g_right_sign == 0 && e.g_left_sign < 0 && e.beta > 1.0 - 1e-9)
                    || (e.g_left_sign == 0 && e.g_right_sign > 0 && e.beta < 1e-9)))
        })
    }

    /// Largest reachable limit proportion; what the real-post constraint
    /// caps.
    pub fn safety_sup(&self) -> f64 {
        self.limit_relevant_equilibria()
            .map(|e| e.beta)
            .fold(f64::NAN, f64::max)
    }
}
