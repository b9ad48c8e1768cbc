//! Simulation and analysis of warning-mechanism-guided propagation of fake
//! posts on a social network.
//!
//! A post spreads as a two-type branching process: every copy carries a
//! fake or a real tag, and each read (a "death" of one unread copy) spawns
//! new tagged copies according to the reader's behaviour type and the
//! warning level shown by the platform. The crate provides
//!
//! * [`bp_sim`] — an exact simulator of the embedded read chain,
//! * [`ode_core`] — the limiting one-dimensional ODE, its equilibria and
//!   their classification,
//! * [`warning`] — the warning-mechanism family (eo / ea / eh / eh2) and
//!   per-mechanism analysis,
//! * [`design`] — closed-form optimal parameter choices,
//! * [`learn`] — a two-timescale scheme that learns the mechanism online
//!   from a known real post,
//! * [`mc_harness`] — deterministic parallel Monte-Carlo sweeps comparing
//!   simulation against the ODE predictions,
//! * [`presets`] — the named experiment configurations used by the CLI and
//!   the browser demo.

pub mod bp_sim;
pub mod design;
pub mod error;
pub mod learn;
pub mod mc_harness;
pub mod model;
pub mod ode_core;
pub mod presets;
pub mod warning;

pub use error::Error;
pub use model::{FriendDistribution, PostType, SystemConfig};

/// Mixes a master seed and an index into an independent path seed
/// (splitmix64 finalizer). Used so that Monte-Carlo paths get
/// reproducible, order-independent streams.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
