//! Embedded-chain simulator of the tagged-copy branching process.
//!
//! Time is counted in read events: at each epoch one unread copy is read
//! ("dies"), the reader tags it fake or real, and the copies it shares are
//! added to the population of the tag it gave. Unread copies of the two
//! tags form the current population `(c_x, c_y)`; `(t_x, t_y)` count every
//! copy ever created. All proportion-valued quantities of interest are
//! functions of this embedded chain, so no wall-clock simulation is needed
//! (an optional exponential clock can be enabled for cosmetic time axes).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::error::Error;
use crate::model::{FriendDistribution, PostParams, PostType, SystemConfig};

/// Tag carried by the copy being read: `x` (fake) or `y` (real).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReadTag {
    Fake,
    Real,
}

/// Behaviour type of the reader; doubles as the death variety.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserType {
    Np,
    Wi,
    Ws,
    Adversary,
}

/// Death-variety order used everywhere: np, wi, ws, a.
pub const USER_TYPES: [UserType; 4] = [
    UserType::Np,
    UserType::Wi,
    UserType::Ws,
    UserType::Adversary,
];

/// Unread and total copy counts per tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopulationState {
    pub c_x: u64,
    pub c_y: u64,
    pub t_x: u64,
    pub t_y: u64,
}

impl PopulationState {
    pub fn new(c_x0: u64, c_y0: u64) -> PopulationState {
        PopulationState {
            c_x: c_x0,
            c_y: c_y0,
            t_x: c_x0,
            t_y: c_y0,
        }
    }

    pub fn from_config(cfg: &SystemConfig) -> PopulationState {
        PopulationState::new(cfg.seed_cx0, cfg.seed_cy0)
    }

    /// Sum current population `S` (unread copies of both tags).
    pub fn current(&self) -> u64 {
        self.c_x + self.c_y
    }

    /// Total population `Z` (all copies ever created).
    pub fn total(&self) -> u64 {
        self.t_x + self.t_y
    }

    /// Number of reads applied so far: `Z - S`.
    pub fn reads(&self) -> u64 {
        self.total() - self.current()
    }

    pub fn is_extinct(&self) -> bool {
        self.current() == 0
    }

    /// Proportion of fake-tagged copies among unread copies. Only defined
    /// while the state is not extinct.
    pub fn beta(&self) -> f64 {
        self.c_x as f64 / self.current() as f64
    }

    /// Scaled ratios `(S/n, C_x/n, Z/n, T_x/n)` at epoch `n`.
    pub fn upsilon(&self, epoch: u64) -> [f64; 4] {
        let n = epoch as f64;
        [
            self.current() as f64 / n,
            self.c_x as f64 / n,
            self.total() as f64 / n,
            self.t_x as f64 / n,
        ]
    }
}

/// Everything that happened at one read epoch.
#[derive(Debug, Clone, Copy)]
pub struct DeathEvent {
    pub epoch: u64,
    pub read_tag: ReadTag,
    pub user_type: UserType,
    pub fake_tag_given: bool,
    pub shares_fake: u64,
    pub shares_real: u64,
    pub warning_shown: f64,
}

/// Draws which copy is read next and by whom. The read copy is fake-tagged
/// with probability `beta` and the reader's type follows the population
/// proportions, independently (the death rates equal the proportions, so
/// the tag and the variety decouple exactly).
pub fn sample_death<R: Rng>(
    state: &PopulationState,
    mu: &[f64; 4],
    rng: &mut R,
) -> Result<(ReadTag, UserType), Error> {
    if state.is_extinct() {
        return Err(Error::Precondition("sample_death on extinct state"));
    }
    let tag = if rng.random_bool(state.beta()) {
        ReadTag::Fake
    } else {
        ReadTag::Real
    };
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &m) in mu.iter().enumerate() {
        acc += m;
        if u < acc {
            return Ok((tag, USER_TYPES[i]));
        }
    }
    // Rounding in the cumulative sum; the tail belongs to the last variety.
    Ok((tag, UserType::Adversary))
}

/// Probability that this reader tags the copy as fake.
///
/// Warning-ignoring users use the un-aided probabilities, warning-seeking
/// users respond to the shown warning through `min(alpha * warning, 1)`,
/// adversaries and non-participants never fake-tag.
pub fn fake_tag_probability(
    user_type: UserType,
    read_tag: ReadTag,
    warning: f64,
    params: &PostParams,
) -> f64 {
    match user_type {
        UserType::Np | UserType::Adversary => 0.0,
        UserType::Wi => match read_tag {
            ReadTag::Fake => params.p_x,
            ReadTag::Real => params.p_y,
        },
        UserType::Ws => {
            let alpha = match read_tag {
                ReadTag::Fake => params.alpha_x,
                ReadTag::Real => params.alpha_y,
            };
            (alpha * warning).min(1.0)
        }
    }
}

pub fn sample_tag<R: Rng>(
    user_type: UserType,
    read_tag: ReadTag,
    warning: f64,
    params: &PostParams,
    rng: &mut R,
) -> bool {
    let p = fake_tag_probability(user_type, read_tag, warning, params);
    debug_assert!((0.0..=1.0).contains(&p), "tag probability {p} left [0,1]");
    match user_type {
        // No draw for users whose tag is deterministic; keeps the stream
        // identical across configurations that only differ in warnings.
        UserType::Np | UserType::Adversary => false,
        _ => rng.random_bool(p),
    }
}

/// Per-share success probability for a reader of the given type, clamped
/// to [0,1]: the transient boost `k/Z^2` can push small populations past 1.
pub fn share_probability(
    user_type: UserType,
    total_copies: u64,
    params: &PostParams,
    eta_a: f64,
    k_share: f64,
) -> f64 {
    let boost = k_share / (total_copies as f64 * total_copies as f64);
    let base = match user_type {
        UserType::Np => return 0.0,
        UserType::Wi | UserType::Ws => params.eta,
        UserType::Adversary => eta_a,
    };
    (base + boost).clamp(0.0, 1.0)
}

/// Number of copies the reader shares. Non-participants share to none and
/// an adversary only ever shares real-tagged copies.
pub fn sample_shares<R: Rng>(
    user_type: UserType,
    fake_tag_given: bool,
    total_copies: u64,
    params: &PostParams,
    friends: FriendDistribution,
    eta_a: f64,
    k_share: f64,
    rng: &mut R,
) -> Result<u64, Error> {
    if total_copies == 0 {
        return Err(Error::Precondition("sample_shares with zero total copies"));
    }
    if user_type == UserType::Np || (user_type == UserType::Adversary && fake_tag_given) {
        return Ok(0);
    }
    let p = share_probability(user_type, total_copies, params, eta_a, k_share);
    let n = match friends {
        FriendDistribution::Deterministic(n) => n,
        FriendDistribution::Poisson(mean) => {
            let lambda: f64 = rand_distr::Poisson::new(mean)
                .map_err(|_| Error::Precondition("Poisson mean must be positive"))?
                .sample(rng);
            lambda as u64
        }
        FriendDistribution::Binomial { n, p } => rand_distr::Binomial::new(n, p)
            .map_err(|_| Error::Precondition("Binomial friend parameters invalid"))?
            .sample(rng),
    };
    if n == 0 || p == 0.0 {
        return Ok(0);
    }
    debug_assert!((0.0..=1.0).contains(&p));
    Ok(rand_distr::Binomial::new(n, p)
        .expect("clamped share probability")
        .sample(rng))
}

/// Applies one read: the read copy leaves the current population and the
/// shares join both counts of the tag the reader gave.
fn apply_transition(
    state: &PopulationState,
    read_tag: ReadTag,
    fake_tag_given: bool,
    shares: u64,
) -> PopulationState {
    let mut next = *state;
    match read_tag {
        ReadTag::Fake => next.c_x -= 1,
        ReadTag::Real => next.c_y -= 1,
    }
    if fake_tag_given {
        next.c_x += shares;
        next.t_x += shares;
    } else {
        next.c_y += shares;
        next.t_y += shares;
    }
    next
}

/// One epoch of the embedded chain: sample the death, evaluate the warning
/// at the pre-read proportion, sample the tag and the shares, apply the
/// transition.
pub fn step<R: Rng, W: Fn(f64) -> f64>(
    state: &PopulationState,
    warning_fn: W,
    cfg: &SystemConfig,
    post: PostType,
    epoch: u64,
    rng: &mut R,
) -> Result<(PopulationState, DeathEvent), Error> {
    let params = PostParams::for_post(cfg, post);
    step_with_params(state, warning_fn, cfg, &params, epoch, rng)
}

pub(crate) fn step_with_params<R: Rng, W: Fn(f64) -> f64>(
    state: &PopulationState,
    warning_fn: W,
    cfg: &SystemConfig,
    params: &PostParams,
    epoch: u64,
    rng: &mut R,
) -> Result<(PopulationState, DeathEvent), Error> {
    let (read_tag, user_type) = sample_death(state, &cfg.mu(), rng)?;
    let warning = warning_fn(state.beta());
    let fake_tag_given = sample_tag(user_type, read_tag, warning, params, rng);
    let shares = sample_shares(
        user_type,
        fake_tag_given,
        state.total(),
        params,
        cfg.friends,
        cfg.eta_a,
        cfg.k_share,
        rng,
    )?;
    let next = apply_transition(state, read_tag, fake_tag_given, shares);
    debug_assert_eq!(next.reads(), state.reads() + 1, "one death per step");
    let event = DeathEvent {
        epoch,
        read_tag,
        user_type,
        fake_tag_given,
        shares_fake: if fake_tag_given { shares } else { 0 },
        shares_real: if fake_tag_given { 0 } else { shares },
        warning_shown: warning,
    };
    Ok((next, event))
}

/// One recorded point of a sample path.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub epoch: u64,
    pub state: PopulationState,
    /// Fake-tag proportion after the epoch; NaN once extinct.
    pub beta: f64,
    /// Scaled ratios `(S/n, C_x/n, Z/n, T_x/n)`.
    pub upsilon: [f64; 4],
    /// Cosmetic wall-clock time; populated only when timestamps are on.
    pub time: Option<f64>,
}

/// Options for [`run_path`].
#[derive(Debug, Clone, Copy)]
pub struct PathOptions {
    pub max_events: u64,
    pub trace_stride: u64,
    /// Draw an exponential clock per event and record cumulative time.
    pub timestamps: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            max_events: 5000,
            trace_stride: 10,
            timestamps: false,
        }
    }
}

impl PathOptions {
    pub fn new(max_events: u64, trace_stride: u64) -> PathOptions {
        PathOptions {
            max_events,
            trace_stride: trace_stride.max(1),
            timestamps: false,
        }
    }
}

/// One simulated sample path.
#[derive(Debug, Clone)]
pub struct PathResult {
    /// Number of read events applied (equals the extinction epoch when the
    /// path died early).
    pub events: u64,
    /// Epoch at which the current population hit zero, if it did.
    pub extinct_at: Option<u64>,
    pub trace: Vec<TracePoint>,
    pub final_state: PopulationState,
    pub seed: u64,
}

impl PathResult {
    pub fn survived(&self) -> bool {
        self.extinct_at.is_none()
    }

    /// Fake-tag proportion at the last recorded epoch of a surviving path.
    pub fn final_beta(&self) -> Option<f64> {
        if self.survived() {
            Some(self.final_state.beta())
        } else {
            None
        }
    }

    pub fn beta_trace(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.trace.iter().map(|p| (p.epoch, p.beta))
    }

    pub fn ratio_trace(&self) -> impl Iterator<Item = (u64, [f64; 4])> + '_ {
        self.trace.iter().map(|p| (p.epoch, p.upsilon))
    }

    pub const CSV_HEADER: &'static str = "path_id,epoch,c_x,c_y,t_x,t_y,beta";

    pub fn write_csv<Wr: std::io::Write>(&self, path_id: u64, out: &mut Wr) -> std::io::Result<()> {
        for p in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                path_id, p.epoch, p.state.c_x, p.state.c_y, p.state.t_x, p.state.t_y, p.beta
            )?;
        }
        Ok(())
    }
}

/// Runs one sample path of the embedded chain until extinction or
/// `max_events`, recording traces every `trace_stride` epochs (plus the
/// final epoch). Deterministic in `seed`.
pub fn run_path<W: Fn(f64) -> f64>(
    cfg: &SystemConfig,
    post: PostType,
    warning_fn: W,
    opts: PathOptions,
    seed: u64,
) -> PathResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = PostParams::for_post(cfg, post);
    let mut state = PopulationState::from_config(cfg);
    let mut trace = Vec::new();
    let mut extinct_at = None;
    let mut events = 0;
    let mut clock = 0.0;
    let stride = opts.trace_stride.max(1);

    for n in 1..=opts.max_events {
        if state.is_extinct() {
            break;
        }
        if opts.timestamps {
            // First of S independent exp(1) clocks fires after Exp(S).
            let e: f64 = rand_distr::Exp1.sample(&mut rng);
            clock += e / state.current() as f64;
        }
        let (next, _event) = step_with_params(&state, &warning_fn, cfg, &params, n, &mut rng)
            .expect("non-extinct state");
        state = next;
        events = n;
        let died = state.is_extinct();
        if died {
            extinct_at = Some(n);
        }
        if n % stride == 0 || died || n == opts.max_events {
            trace.push(TracePoint {
                epoch: n,
                state,
                beta: if died { f64::NAN } else { state.beta() },
                upsilon: state.upsilon(n),
                time: opts.timestamps.then_some(clock),
            });
        }
        if died {
            break;
        }
    }

    PathResult {
        events,
        extinct_at,
        trace,
        final_state: state,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PostParams;

    fn test_cfg() -> SystemConfig {
        SystemConfig {
            mu0: 0.0,
            mu1: 0.0,
            mu2: 0.99,
            mua: 0.01,
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
            k_share: 10.0,
            delta: 0.02,
            seed_cx0: 0,
            seed_cy0: 20,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn death_reads_fake_when_only_fake_present() {
        let state = PopulationState {
            c_x: 5,
            c_y: 0,
            t_x: 5,
            t_y: 3,
        };
        let mut r = rng(1);
        for _ in 0..100 {
            let (tag, _) = sample_death(&state, &[0.25; 4], &mut r).unwrap();
            assert_eq!(tag, ReadTag::Fake);
        }
    }

    #[test]
    fn death_degenerate_mixture_always_ws() {
        let state = PopulationState::new(3, 3);
        let mut r = rng(2);
        for _ in 0..100 {
            let (_, user) = sample_death(&state, &[0.0, 0.0, 1.0, 0.0], &mut r).unwrap();
            assert_eq!(user, UserType::Ws);
        }
    }

    #[test]
    fn death_on_extinct_state_is_an_error() {
        let state = PopulationState {
            c_x: 0,
            c_y: 0,
            t_x: 4,
            t_y: 4,
        };
        assert!(sample_death(&state, &[0.25; 4], &mut rng(3)).is_err());
    }

    #[test]
    fn death_product_law_frequency() {
        // P(read fake-tagged and reader adversarial) = beta * mu_a.
        let state = PopulationState {
            c_x: 3,
            c_y: 7,
            t_x: 3,
            t_y: 7,
        }; // beta = 0.3
        let mu = [0.3, 0.3, 0.2, 0.2];
        let mut r = rng(4);
        let n = 1_000_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            let (tag, user) = sample_death(&state, &mu, &mut r).unwrap();
            if tag == ReadTag::Fake && user == UserType::Adversary {
                hits += 1;
            }
        }
        let p = 0.3 * 0.2;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!(
            (freq - p).abs() <= 3.0 * sigma,
            "freq {freq} not within 3 sigma of {p}"
        );
    }

    #[test]
    fn adversary_never_fake_tags() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake);
        let mut r = rng(5);
        for _ in 0..100 {
            assert!(!sample_tag(
                UserType::Adversary,
                ReadTag::Fake,
                1e6,
                &params,
                &mut r
            ));
        }
    }

    #[test]
    fn ws_tag_clamps_at_one() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake);
        // warning large enough that alpha_y * warning >= 1
        let warning = 2.0 / params.alpha_y;
        let mut r = rng(6);
        for _ in 0..100 {
            assert!(sample_tag(UserType::Ws, ReadTag::Real, warning, &params, &mut r));
        }
    }

    #[test]
    fn wi_tag_frequency_matches_p_x() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake); // p_x = 0.765
        let mut r = rng(7);
        let n = 100_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            if sample_tag(UserType::Wi, ReadTag::Fake, 0.0, &params, &mut r) {
                hits += 1;
            }
        }
        let p = 0.765;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn np_shares_nothing() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake);
        let mut r = rng(8);
        for _ in 0..50 {
            let s = sample_shares(
                UserType::Np,
                false,
                100,
                &params,
                FriendDistribution::Deterministic(28),
                0.55,
                10.0,
                &mut r,
            )
            .unwrap();
            assert_eq!(s, 0);
        }
    }

    #[test]
    fn share_probability_approaches_eta_for_large_z() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake);
        let p = share_probability(UserType::Ws, 1_000_000_000, &params, 0.55, 10.0);
        assert!((p - params.eta).abs() < 1e-15);
    }

    #[test]
    fn share_probability_clamped_for_tiny_z() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake);
        // Z = 1 gives eta + 10 without the clamp.
        let p = share_probability(UserType::Ws, 1, &params, 0.55, 10.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ws_share_mean_matches_binomial() {
        let params = PostParams::for_post(&test_cfg(), PostType::Fake);
        let mut r = rng(9);
        let n = 100_000u64;
        let mut sum = 0u64;
        for _ in 0..n {
            sum += sample_shares(
                UserType::Ws,
                true,
                1000,
                &params,
                FriendDistribution::Deterministic(28),
                0.55,
                10.0,
                &mut r,
            )
            .unwrap();
        }
        let p = 0.08 + 10.0 / 1_000_000.0;
        let mean = 28.0 * p;
        let var = 28.0 * p * (1.0 - p);
        let sigma = (var / n as f64).sqrt();
        let observed = sum as f64 / n as f64;
        assert!(
            (observed - mean).abs() <= 3.0 * sigma,
            "mean {observed} vs {mean}"
        );
    }

    #[test]
    fn step_np_death_with_no_offspring() {
        let mut cfg = test_cfg();
        cfg.mu0 = 1.0;
        cfg.mu1 = 0.0;
        cfg.mu2 = 0.0;
        cfg.mua = 0.0;
        let state = PopulationState {
            c_x: 1,
            c_y: 0,
            t_x: 1,
            t_y: 0,
        };
        let (next, ev) = step(&state, |_| 0.5, &cfg, PostType::Fake, 1, &mut rng(10)).unwrap();
        assert_eq!(
            next,
            PopulationState {
                c_x: 0,
                c_y: 0,
                t_x: 1,
                t_y: 0
            }
        );
        assert_eq!(ev.user_type, UserType::Np);
        assert!(next.is_extinct());
    }

    #[test]
    fn step_adversary_hand_trace() {
        // From (0,20,0,20) an adversarial read of a real copy with 5 shares
        // gives (0,24,0,25): one read leaves, five real copies arrive.
        let state = PopulationState::new(0, 20);
        let reference = apply_transition(&state, ReadTag::Real, false, 5);
        assert_eq!(
            reference,
            PopulationState {
                c_x: 0,
                c_y: 24,
                t_x: 0,
                t_y: 25
            }
        );
    }

    #[test]
    fn step_conserves_one_read_per_event() {
        let cfg = test_cfg();
        let mut state = PopulationState::new(0, 20);
        let mut r = rng(11);
        for n in 1..=200 {
            if state.is_extinct() {
                break;
            }
            let before = state.reads();
            let (next, _) = step(&state, |_| 0.6, &cfg, PostType::Fake, n, &mut r).unwrap();
            assert_eq!(next.reads(), before + 1);
            assert!(next.t_x >= state.t_x && next.t_y >= state.t_y);
            state = next;
        }
    }

    #[test]
    fn run_path_is_deterministic() {
        let cfg = test_cfg();
        let opts = PathOptions::new(500, 7);
        let a = run_path(&cfg, PostType::Fake, |_| 0.8, opts, 42);
        let b = run_path(&cfg, PostType::Fake, |_| 0.8, opts, 42);
        assert_eq!(a.events, b.events);
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.trace.len(), b.trace.len());
        for (p, q) in a.trace.iter().zip(&b.trace) {
            assert_eq!(p.state, q.state);
            assert!(p.beta == q.beta || (p.beta.is_nan() && q.beta.is_nan()));
        }
    }

    #[test]
    fn run_path_pure_death_chain_dies_at_seed_count() {
        // All non-participants: every epoch removes one copy, none arrive.
        let mut cfg = test_cfg();
        cfg.mu0 = 1.0;
        cfg.mu1 = 0.0;
        cfg.mu2 = 0.0;
        cfg.mua = 0.0;
        cfg.seed_cx0 = 3;
        cfg.seed_cy0 = 17;
        let res = run_path(&cfg, PostType::Fake, |_| 0.5, PathOptions::new(100, 1), 3);
        assert_eq!(res.extinct_at, Some(20));
        assert_eq!(res.final_state.current(), 0);
    }

    #[test]
    fn trace_ratios_stay_in_admissible_cone() {
        let cfg = test_cfg();
        let res = run_path(
            &cfg,
            PostType::Fake,
            |b| 1.0765 * b + 0.1,
            PathOptions::new(3000, 10),
            99,
        );
        for p in &res.trace {
            let [psi_c, theta_c, psi_a, theta_a] = p.upsilon;
            assert!(theta_c <= psi_c + 1e-12);
            assert!(psi_c <= psi_a + 1e-12);
            assert!(theta_a <= psi_a + 1e-12);
            if !p.beta.is_nan() {
                assert!((0.0..=1.0).contains(&p.beta));
            }
        }
    }

    #[test]
    fn timestamps_accumulate_monotonically() {
        let cfg = test_cfg();
        let mut opts = PathOptions::new(300, 5);
        opts.timestamps = true;
        let res = run_path(&cfg, PostType::Fake, |_| 0.5, opts, 5);
        let times: Vec<f64> = res.trace.iter().map(|p| p.time.unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }
}
