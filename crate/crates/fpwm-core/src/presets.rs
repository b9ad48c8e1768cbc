//! Named experiment presets.
//!
//! Two parameter families recur throughout: a "smart user" population
//! whose sensitivities separate fake from real posts well even unaided,
//! and a "naive user" population with much weaker separation and more
//! attractive posts. Presets bind a family to mechanisms, posts, an
//! adversary-fraction grid and simulation defaults; every preset is pure
//! data, resolvable without running anything.

use crate::design::ThresholdMode;
use crate::error::Error;
use crate::learn::{kappa_from_ratio, LearnConfig};
use crate::mc_harness::{ExperimentSpec, MuaRebalance};
use crate::model::{FriendDistribution, PostType, SystemConfig};
use crate::warning::Mechanism;

/// The two recurring parameter families plus the all-participating
/// variant used for the extended-original-mechanism experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFamily {
    /// Smart users, everyone participates: `mu2 = 1 - mua`.
    SmartAllParticipating,
    /// Smart users with half the population inactive: `mu2 = 0.5`,
    /// `mu0 = 0.5 - mua`.
    Smart,
    /// Naive users: `mu1 = 0.15`, `mu2 = 0.5`, `mu0 = 0.35 - mua`.
    Naive,
}

impl ConfigFamily {
    pub fn name(self) -> &'static str {
        match self {
            ConfigFamily::SmartAllParticipating => "smart_all",
            ConfigFamily::Smart => "smart",
            ConfigFamily::Naive => "naive",
        }
    }

    /// Which mass absorbs adversary-fraction changes in sweeps.
    pub fn rebalance(self) -> MuaRebalance {
        match self {
            ConfigFamily::SmartAllParticipating => MuaRebalance::FromWs,
            ConfigFamily::Smart | ConfigFamily::Naive => MuaRebalance::FromNp,
        }
    }

    /// Largest admissible adversary fraction.
    pub fn mua_cap(self) -> f64 {
        match self {
            ConfigFamily::SmartAllParticipating => 0.99,
            ConfigFamily::Smart => 0.5,
            ConfigFamily::Naive => 0.35,
        }
    }

    pub fn config(self, mua: f64) -> Result<SystemConfig, Error> {
        let cfg = match self {
            ConfigFamily::SmartAllParticipating => SystemConfig {
                mu0: 0.0,
                mu1: 0.0,
                mu2: 1.0 - mua,
                mua,
                ..smart_base()
            },
            ConfigFamily::Smart => SystemConfig {
                mu0: 0.5 - mua,
                mu1: 0.0,
                mu2: 0.5,
                mua,
                ..smart_base()
            },
            ConfigFamily::Naive => SystemConfig {
                mu0: 0.35 - mua,
                mu1: 0.15,
                mu2: 0.5,
                mua,
                ..naive_base()
            },
        };
        cfg.ensure_valid()?;
        Ok(cfg)
    }

    /// Default adversary grid for sweeps over this family.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            ConfigFamily::SmartAllParticipating => vec![0.0, 0.01, 0.02, 0.05, 0.1],
            ConfigFamily::Smart => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            ConfigFamily::Naive => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35],
        }
    }
}

fn smart_base() -> SystemConfig {
    SystemConfig {
        mu0: 0.0,
        mu1: 0.0,
        mu2: 1.0,
        mua: 0.0,
        alpha_x_f: 0.85,
        alpha_y_f: 0.6375,
        alpha_x_r: 0.3,
        alpha_y_r: 0.09,
        eta_f: 0.08,
        eta_r: 0.05,
        eta_a: 0.55,
        rho: 0.9,
        gamma: 0.1,
        m_f: 28.0,
        friends: FriendDistribution::Deterministic(28),
        k_share: crate::model::DEFAULT_K_SHARE,
        delta: 0.02,
        seed_cx0: crate::model::DEFAULT_SEED_CX0,
        seed_cy0: crate::model::DEFAULT_SEED_CY0,
    }
}

fn naive_base() -> SystemConfig {
    SystemConfig {
        mu0: 0.35,
        mu1: 0.15,
        mu2: 0.5,
        mua: 0.0,
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
        k_share: crate::model::DEFAULT_K_SHARE,
        delta: 0.05,
        seed_cx0: crate::model::DEFAULT_SEED_CX0,
        seed_cy0: crate::model::DEFAULT_SEED_CY0,
    }
}

/// The named presets the CLI exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    FigExwm,
    FigEowmSmart,
    FigEowmNaive,
    FigEawm,
    FigEhwm,
    FigRealPosts,
    Table2Eh2,
    Table3Learning,
}

impl PresetName {
    pub const ALL: [PresetName; 8] = [
        PresetName::FigExwm,
        PresetName::FigEowmSmart,
        PresetName::FigEowmNaive,
        PresetName::FigEawm,
        PresetName::FigEhwm,
        PresetName::FigRealPosts,
        PresetName::Table2Eh2,
        PresetName::Table3Learning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetName::FigExwm => "fig_exwm",
            PresetName::FigEowmSmart => "fig_eowm_smart",
            PresetName::FigEowmNaive => "fig_eowm_naive",
            PresetName::FigEawm => "fig_eawm",
            PresetName::FigEhwm => "fig_ehwm",
            PresetName::FigRealPosts => "fig_real_posts",
            PresetName::Table2Eh2 => "table2_eh2",
            PresetName::Table3Learning => "table3_learning",
        }
    }
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown preset `{s}`")))
    }
}

/// Overridable experiment knobs; `None` keeps the preset default.
#[derive(Debug, Clone, Default)]
pub struct PresetOverrides {
    pub paths: Option<u64>,
    pub events: Option<u64>,
    pub seed: Option<u64>,
    pub mua_grid: Option<Vec<f64>>,
    pub threshold_mode: Option<ThresholdMode>,
    pub trials: Option<u64>,
    pub samples: Option<u64>,
}

/// The learning-table protocol: independent trials per adversary
/// fraction, scored at snapshot epochs against the perfect-knowledge
/// eh2 i-QoS.
#[derive(Debug, Clone)]
pub struct LearningPlan {
    pub family: ConfigFamily,
    pub mua_values: Vec<f64>,
    pub trials: u64,
    pub snapshots: Vec<u64>,
    pub tolerance: f64,
    pub master_seed: u64,
    pub learn: LearnConfig,
}

impl LearningPlan {
    pub fn config_for(&self, mua: f64) -> Result<SystemConfig, Error> {
        self.family.config(mua)
    }
}

/// A resolved preset: sweep experiments plus an optional learning batch.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: PresetName,
    pub experiments: Vec<ExperimentSpec>,
    pub learning: Option<LearningPlan>,
}

const DEFAULT_PATHS: u64 = 200;
const DEFAULT_EVENTS: u64 = 5000;
const DEFAULT_SEED: u64 = 2024;

/// Resolves a named preset to concrete experiments.
pub fn build(name: PresetName, overrides: &PresetOverrides) -> Result<Preset, Error> {
    let paths = overrides.paths.unwrap_or(DEFAULT_PATHS);
    let events = overrides.events.unwrap_or(DEFAULT_EVENTS);
    let seed = overrides.seed.unwrap_or(DEFAULT_SEED);

    let sweep_matrix = |families: &[ConfigFamily],
                        mechanisms: &[Mechanism],
                        posts: &[PostType],
                        mode: ThresholdMode|
     -> Result<Vec<ExperimentSpec>, Error> {
        let mode = overrides.threshold_mode.unwrap_or(mode);
        let mut specs = Vec::new();
        for (i, &family) in families.iter().enumerate() {
            let grid = overrides
                .mua_grid
                .clone()
                .unwrap_or_else(|| family.default_grid());
            for (j, &mechanism) in mechanisms.iter().enumerate() {
                for (k, &post) in posts.iter().enumerate() {
                    specs.push(ExperimentSpec {
                        name: format!(
                            "{}:{}:{}:{}",
                            name.name(),
                            family.name(),
                            mechanism.name(),
                            post.name()
                        ),
                        cfg: family.config(0.0)?,
                        post,
                        mechanism,
                        mua_grid: grid.clone(),
                        rebalance: family.rebalance(),
                        threshold_mode: mode,
                        paths,
                        events,
                        master_seed: crate::mix_seed(seed, (i * 16 + j * 4 + k) as u64),
                    });
                }
            }
        }
        Ok(specs)
    };

    use ConfigFamily::*;
    use Mechanism::*;
    use PostType::*;
    let experiments = match name {
        PresetName::FigExwm => sweep_matrix(
            &[SmartAllParticipating],
            &[Eo],
            &[Fake, Real],
            ThresholdMode::Plain,
        )?,
        PresetName::FigEowmSmart => {
            sweep_matrix(&[Smart], &[Eo], &[Fake, Real], ThresholdMode::Plain)?
        }
        PresetName::FigEowmNaive => {
            sweep_matrix(&[Naive], &[Eo], &[Fake, Real], ThresholdMode::Plain)?
        }
        PresetName::FigEawm => sweep_matrix(
            &[Smart, Naive],
            &[Eo, Ea],
            &[Fake],
            ThresholdMode::AdversaryAdjusted,
        )?,
        PresetName::FigEhwm => sweep_matrix(
            &[Smart, Naive],
            &[Eo, Ea, Eh],
            &[Fake],
            ThresholdMode::AdversaryAdjusted,
        )?,
        PresetName::FigRealPosts => sweep_matrix(
            &[Smart, Naive],
            &[Eo, Ea, Eh],
            &[Real],
            ThresholdMode::AdversaryAdjusted,
        )?,
        PresetName::Table2Eh2 => {
            let mut specs = sweep_matrix(
                &[Naive],
                &[Eh2],
                &[Fake],
                ThresholdMode::AdversaryAdjusted,
            )?;
            for spec in &mut specs {
                if overrides.mua_grid.is_none() {
                    spec.mua_grid = vec![0.0, 0.1, 0.2, 0.3];
                }
                if overrides.paths.is_none() {
                    spec.paths = 0; // the table is analytic
                }
            }
            specs
        }
        PresetName::Table3Learning => Vec::new(),
    };

    let learning = (name == PresetName::Table3Learning).then(|| {
        let naive = naive_base();
        let mut learn =
            LearnConfig::reference_tuning(kappa_from_ratio(naive.alpha_x_r / naive.alpha_y_r));
        learn.samples = overrides.samples.unwrap_or(100_000);
        LearningPlan {
            family: Naive,
            mua_values: overrides.mua_grid.clone().unwrap_or(vec![0.0, 0.1, 0.2]),
            trials: overrides.trials.unwrap_or(150),
            snapshots: vec![10_000, 25_000, 50_000, 75_000, 100_000]
                .into_iter()
                .filter(|&s| s <= learn.samples)
                .chain(std::iter::once(learn.samples))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect(),
            tolerance: 0.05,
            master_seed: seed,
            learn,
        }
    });

    Ok(Preset {
        name,
        experiments,
        learning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_configs_are_valid_across_their_grids() {
        for family in [
            ConfigFamily::SmartAllParticipating,
            ConfigFamily::Smart,
            ConfigFamily::Naive,
        ] {
            for mua in family.default_grid() {
                let cfg = family.config(mua).unwrap();
                assert!(cfg.validate().is_empty(), "{family:?} at {mua}");
                assert!((cfg.mu0 + cfg.mu1 + cfg.mu2 + cfg.mua - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn documented_family_parameters() {
        let smart = ConfigFamily::SmartAllParticipating.config(0.0).unwrap();
        assert_eq!(smart.m_f, 28.0);
        assert_eq!(smart.eta_f, 0.08);
        assert_eq!(smart.delta, 0.02);
        assert_eq!(smart.alpha_y_f, 0.6375);
        assert_eq!(smart.mu2, 1.0);

        let naive = ConfigFamily::Naive.config(0.1).unwrap();
        assert_eq!(naive.m_f, 30.0);
        assert_eq!(naive.eta_f, 0.52);
        assert_eq!(naive.delta, 0.05);
        assert_eq!(naive.mu1, 0.15);
        assert!((naive.mu0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn every_preset_resolves() {
        for name in PresetName::ALL {
            let preset = build(name, &PresetOverrides::default()).unwrap();
            if name == PresetName::Table3Learning {
                assert!(preset.learning.is_some());
                assert!(preset.experiments.is_empty());
            } else {
                assert!(!preset.experiments.is_empty());
            }
        }
    }

    #[test]
    fn table2_preset_is_analytic_with_four_points() {
        let preset = build(PresetName::Table2Eh2, &PresetOverrides::default()).unwrap();
        assert_eq!(preset.experiments.len(), 1);
        let exp = &preset.experiments[0];
        assert_eq!(exp.paths, 0);
        assert_eq!(exp.mua_grid, vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(exp.mechanism, Mechanism::Eh2);
    }

    #[test]
    fn preset_names_roundtrip() {
        for name in PresetName::ALL {
            let parsed: PresetName = name.name().parse().unwrap();
            assert_eq!(parsed, name);
        }
        assert!("fig_unknown".parse::<PresetName>().is_err());
    }
}
