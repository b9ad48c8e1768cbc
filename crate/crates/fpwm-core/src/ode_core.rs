//! Limit ODE machinery for the two-type process with multiple death
//! varieties.
//!
//! As the population grows, the offspring means and the per-variety death
//! rates depend only on the fake-tag proportion `beta`; a [`Kernel`]
//! packages those limits. The proportion then follows the scalar ODE
//! `beta' = g(beta)` whose zeros are the only possible limits, classified
//! by the signs of `g` on either side: (+,-) attracts, (-,+) repels, equal
//! signs give a saddle. The four scaled ratios follow
//! `Upsilon' = h(beta) 1{psi_c > 0} - Upsilon`.

use crate::error::Error;

/// Limit mean offspring matrix: `xx` is the mean number of fake-tagged
/// offspring of a fake-tagged parent, and so on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMatrix {
    pub xx: f64,
    pub xy: f64,
    pub yx: f64,
    pub yy: f64,
}

impl MeanMatrix {
    pub fn row_sum_x(&self) -> f64 {
        self.xx + self.xy
    }

    pub fn row_sum_y(&self) -> f64 {
        self.yx + self.yy
    }
}

type MeanFn = Box<dyn Fn(f64) -> MeanMatrix + Send + Sync>;
type RateFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Proportion-dependent limits of the process: the mean matrix and one
/// positive death rate per variety for each type.
pub struct Kernel {
    mean: MeanFn,
    lambda_x: Vec<RateFn>,
    lambda_y: Vec<RateFn>,
}

impl Kernel {
    pub fn new(mean: MeanFn, lambda_x: Vec<RateFn>, lambda_y: Vec<RateFn>) -> Kernel {
        assert!(!lambda_x.is_empty() && !lambda_y.is_empty());
        Kernel {
            mean,
            lambda_x,
            lambda_y,
        }
    }

    /// Kernel whose death rates do not depend on the proportion.
    pub fn with_constant_rates(mean: MeanFn, rates_x: Vec<f64>, rates_y: Vec<f64>) -> Kernel {
        assert!(
            rates_x.iter().chain(&rates_y).all(|&r| r > 0.0),
            "death rates must be positive"
        );
        let bx = rates_x
            .into_iter()
            .map(|r| Box::new(move |_| r) as RateFn)
            .collect();
        let by = rates_y
            .into_iter()
            .map(|r| Box::new(move |_| r) as RateFn)
            .collect();
        Kernel::new(mean, bx, by)
    }

    pub fn mean(&self, beta: f64) -> MeanMatrix {
        (self.mean)(beta)
    }

    pub fn lambda_x_sum(&self, beta: f64) -> f64 {
        self.lambda_x.iter().map(|f| f(beta)).sum()
    }

    pub fn lambda_y_sum(&self, beta: f64) -> f64 {
        self.lambda_y.iter().map(|f| f(beta)).sum()
    }

    pub fn death_varieties(&self) -> (usize, usize) {
        (self.lambda_x.len(), self.lambda_y.len())
    }

    /// Spot-checks the kernel invariants (positive rates, finite bounded
    /// means) on a grid.
    pub fn check(&self, grid_n: usize) -> Result<(), Error> {
        for i in 0..=grid_n {
            let beta = i as f64 / grid_n as f64;
            for (k, f) in self.lambda_x.iter().enumerate() {
                let v = f(beta);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Invariant(format!(
                        "lambda_x[{k}]({beta}) = {v} not positive"
                    )));
                }
            }
            for (k, f) in self.lambda_y.iter().enumerate() {
                let v = f(beta);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Invariant(format!(
                        "lambda_y[{k}]({beta}) = {v} not positive"
                    )));
                }
            }
            let m = self.mean(beta);
            for (name, v) in [("xx", m.xx), ("xy", m.xy), ("yx", m.yx), ("yy", m.yy)] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Invariant(format!(
                        "mean {name}({beta}) = {v} not a finite non-negative value"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Total limit death intensity `d(beta)`.
pub fn d_inf(kernel: &Kernel, beta: f64) -> f64 {
    beta * kernel.lambda_x_sum(beta) + (1.0 - beta) * kernel.lambda_y_sum(beta)
}

/// Probability that the next death removes a fake-tagged copy, in the
/// limit: `beta * sum_d lambda_x_d / d(beta)`.
pub fn f_beta_inf(kernel: &Kernel, beta: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    beta * kernel.lambda_x_sum(beta) / d_inf(kernel, beta)
}

/// Right-hand side of the limiting scalar ODE for the fake-tag proportion.
pub fn g_beta(kernel: &Kernel, beta: f64) -> f64 {
    let f = f_beta_inf(kernel, beta);
    let m = kernel.mean(beta);
    -f * m.xy
        + (1.0 - f) * m.yx
        + beta
        - f
        + (1.0 - beta) * f * m.row_sum_x()
        - beta * (1.0 - f) * m.row_sum_y()
}

/// Drift target `h(beta)` of the four scaled ratios
/// `(psi_c, theta_c, psi_a, theta_a)`.
pub fn h_map(kernel: &Kernel, beta: f64) -> [f64; 4] {
    let f = f_beta_inf(kernel, beta);
    let m = kernel.mean(beta);
    let grow = f * m.row_sum_x() + (1.0 - f) * m.row_sum_y();
    let fake = f * m.xx + (1.0 - f) * m.yx;
    [grow - 1.0, fake - f, grow, fake]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EquilibriumKind {
    Attractor,
    Repeller,
    Saddle,
}

impl EquilibriumKind {
    pub fn name(self) -> &'static str {
        match self {
            EquilibriumKind::Attractor => "attractor",
            EquilibriumKind::Repeller => "repeller",
            EquilibriumKind::Saddle => "saddle",
        }
    }
}

/// A zero of `g` with its side signs: `g_left_sign`/`g_right_sign` are the
/// signs of `g` in the adjacent neighbourhoods (0 at a domain boundary).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EquilibriumPoint {
    pub beta: f64,
    pub kind: EquilibriumKind,
    pub g_left_sign: i8,
    pub g_right_sign: i8,
}

impl EquilibriumPoint {
    pub const CSV_HEADER: &'static str = "beta,kind,g_left_sign,g_right_sign";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.beta,
            self.kind.name(),
            self.g_left_sign,
            self.g_right_sign
        )
    }
}

/// Tuning for [`find_equilibria`]. The dense default grid localises the
/// kinks that `min(alpha * warning, 1)` interestingly puts into `g`, and
/// the plateau threshold merges stretches where `g` vanishes identically.
#[derive(Debug, Clone, Copy)]
pub struct FindOptions {
    pub grid_n: usize,
    pub tol: f64,
    pub probe: f64,
    pub plateau_eps: f64,
}

impl Default for FindOptions {
    fn default() -> Self {
        FindOptions {
            grid_n: 20_000,
            tol: 1e-10,
            probe: 1e-5,
            plateau_eps: 1e-12,
        }
    }
}

/// Finds and classifies every zero of `g` on [0,1].
///
/// Requires the boundary signs `g(0) >= 0` and `g(1) <= 0` (up to rounding
/// noise); anything else signals a mis-built kernel. Scans a uniform grid
/// for sign changes and near-zero plateaus, refines brackets by bisection,
/// and classifies each zero by probing `g` on both sides. Returns the
/// points sorted ascending; non-empty whenever the preconditions hold.
pub fn find_equilibria<G: Fn(f64) -> f64>(
    g: G,
    opts: &FindOptions,
) -> Result<Vec<EquilibriumPoint>, Error> {
    let n = opts.grid_n.max(16);
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    if gs.iter().any(|v| v.is_nan()) {
        return Err(Error::Invariant("g evaluates to NaN on [0,1]".into()));
    }

    let scale = gs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let boundary_tol = 1e-9 * (1.0 + scale);
    if gs[0] < -boundary_tol {
        return Err(Error::Invariant(format!(
            "g(0) = {} < 0; zeros of g cannot bound the dynamics",
            gs[0]
        )));
    }
    if gs[n] > boundary_tol {
        return Err(Error::Invariant(format!("g(1) = {} > 0", gs[n])));
    }

    let eps = opts.plateau_eps;
    let is_zero = |v: f64| v.abs() <= eps;

    // Root intervals [lo, hi]: plateaus of grid zeros, or bisected brackets.
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut i = 0usize;
    while i <= n {
        if is_zero(gs[i]) {
            let start = i;
            while i < n && is_zero(gs[i + 1]) {
                i += 1;
            }
            intervals.push((xs[start], xs[i]));
            i += 1;
        } else {
            if i < n && !is_zero(gs[i + 1]) && gs[i] * gs[i + 1] < 0.0 {
                let root = bisect(&g, xs[i], xs[i + 1], gs[i], opts.tol);
                intervals.push((root, root));
            }
            i += 1;
        }
    }

    if intervals.is_empty() {
        return Err(Error::Invariant(
            "no zero of g found despite admissible boundary signs".into(),
        ));
    }

    let mut points = Vec::with_capacity(intervals.len());
    for (idx, &(lo, hi)) in intervals.iter().enumerate() {
        let left_bound = if idx > 0 { intervals[idx - 1].1 } else { 0.0 };
        let right_bound = if idx + 1 < intervals.len() {
            intervals[idx + 1].0
        } else {
            1.0
        };
        let left = side_sign(&g, lo, -1.0, opts.probe, eps, left_bound);
        let right = side_sign(&g, hi, 1.0, opts.probe, eps, right_bound);
        let kind = classify(left, right).ok_or_else(|| {
            Error::Invariant(format!(
                "cannot classify zero near {}: g vanishes on both sides",
                0.5 * (lo + hi)
            ))
        })?;
        points.push(EquilibriumPoint {
            beta: 0.5 * (lo + hi),
            kind,
            g_left_sign: left,
            g_right_sign: right,
        });
    }
    Ok(points)
}

/// Sign of `g` just outside a root interval, expanding the probe distance
/// until the value clears the plateau threshold or the probe leaves
/// (0,1) or runs into the neighbouring root.
fn side_sign<G: Fn(f64) -> f64>(
    g: &G,
    from: f64,
    dir: f64,
    probe: f64,
    eps: f64,
    bound: f64,
) -> i8 {
    let mut d = probe;
    for _ in 0..12 {
        let x = from + dir * d;
        let beyond_domain = !(0.0..=1.0).contains(&x);
        let beyond_neighbor = if dir < 0.0 { x <= bound } else { x >= bound };
        if beyond_domain || (beyond_neighbor && bound != from) {
            break;
        }
        let v = g(x);
        if v.abs() > eps {
            return if v > 0.0 { 1 } else { -1 };
        }
        d *= 10.0;
    }
    0
}

/// Theorem-style sign classification; a missing (boundary) side inherits
/// the verdict of the available one.
fn classify(left: i8, right: i8) -> Option<EquilibriumKind> {
    match (left, right) {
        (1, -1) | (0, -1) | (1, 0) => Some(EquilibriumKind::Attractor),
        (-1, 1) | (0, 1) | (-1, 0) => Some(EquilibriumKind::Repeller),
        (1, 1) | (-1, -1) => Some(EquilibriumKind::Saddle),
        _ => None,
    }
}

fn bisect<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64, g_lo: f64, tol: f64) -> f64 {
    let lo_positive = g_lo > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v == 0.0 {
            return mid;
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Threshold below which the current-population ratio counts as zero in
/// the indicator of the ratio ODE.
pub const EPS_PSI_ZERO: f64 = 1e-12;

/// Fixed-step RK4 integration of `Upsilon' = h(beta) 1{psi_c > 0} - Upsilon`
/// from an admissible initial point. Returns the sampled trajectory
/// including both endpoints.
pub fn integrate_upsilon(
    kernel: &Kernel,
    y0: [f64; 4],
    horizon: f64,
    step: f64,
) -> Result<Vec<(f64, [f64; 4])>, Error> {
    let [psi_c, theta_c, psi_a, theta_a] = y0;
    let tol = 1e-12;
    let admissible = y0.iter().all(|v| *v >= -tol)
        && theta_c <= psi_c + tol
        && psi_c <= psi_a + tol
        && theta_a <= psi_a + tol;
    if !admissible {
        return Err(Error::Precondition(
            "initial ratios outside the admissible cone",
        ));
    }
    if !(step > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Precondition("need step > 0 and horizon >= 0"));
    }

    let rhs = |y: &[f64; 4]| -> [f64; 4] {
        if y[0] > EPS_PSI_ZERO {
            let beta = (y[1] / y[0]).clamp(0.0, 1.0);
            let h = h_map(kernel, beta);
            [h[0] - y[0], h[1] - y[1], h[2] - y[2], h[3] - y[3]]
        } else {
            [-y[0], -y[1], -y[2], -y[3]]
        }
    };

    let steps = (horizon / step).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    let mut t = 0.0;
    out.push((t, y));
    for _ in 0..steps {
        let h = step.min(horizon - t);
        if h <= 0.0 {
            break;
        }
        let k1 = rhs(&y);
        let k2 = rhs(&add(y, scale(k1, h / 2.0)));
        let k3 = rhs(&add(y, scale(k2, h / 2.0)));
        let k4 = rhs(&add(y, scale(k3, h)));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        out.push((t, y));
    }
    Ok(out)
}

fn add(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn scale(a: [f64; 4], s: f64) -> [f64; 4] {
    [a[0] * s, a[1] * s, a[2] * s, a[3] * s]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_mean(m: MeanMatrix) -> MeanFn {
        Box::new(move |_| m)
    }

    fn uniform_kernel(m: MeanMatrix) -> Kernel {
        Kernel::with_constant_rates(constant_mean(m), vec![0.5, 0.5], vec![0.5, 0.5])
    }

    #[test]
    fn f_inf_is_identity_when_rates_match() {
        let k = uniform_kernel(MeanMatrix {
            xx: 1.0,
            xy: 0.5,
            yx: 0.5,
            yy: 1.0,
        });
        for i in 0..=10 {
            let beta = i as f64 / 10.0;
            assert!((f_beta_inf(&k, beta) - beta).abs() < 1e-15);
        }
        assert_eq!(f_beta_inf(&k, 0.0), 0.0);
        assert_eq!(f_beta_inf(&k, 1.0), 1.0);
    }

    #[test]
    fn f_inf_weighs_type_rates() {
        // x dies twice as fast as y: f(0.5) = 2*0.5 / (2*0.5 + 1*0.5) = 2/3.
        let k = Kernel::with_constant_rates(
            constant_mean(MeanMatrix {
                xx: 0.0,
                xy: 0.0,
                yx: 0.0,
                yy: 0.0,
            }),
            vec![2.0],
            vec![1.0],
        );
        assert!((f_beta_inf(&k, 0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn g_at_zero_equals_m_yx() {
        let c = 0.7;
        let k = uniform_kernel(MeanMatrix {
            xx: 0.2,
            xy: 0.1,
            yx: c,
            yy: 0.4,
        });
        assert!((g_beta(&k, 0.0) - c).abs() < 1e-15);
    }

    #[test]
    fn g_vanishes_for_pure_death() {
        let k = uniform_kernel(MeanMatrix {
            xx: 0.0,
            xy: 0.0,
            yx: 0.0,
            yy: 0.0,
        });
        for i in 0..=10 {
            let beta = i as f64 / 10.0;
            assert!(g_beta(&k, beta).abs() < 1e-15);
        }
    }

    #[test]
    fn h_symmetric_mean_matrix() {
        let m = 0.8;
        let k = uniform_kernel(MeanMatrix {
            xx: m,
            xy: m,
            yx: m,
            yy: m,
        });
        let h = h_map(&k, 0.37);
        assert!((h[0] - (2.0 * m - 1.0)).abs() < 1e-15);
        assert!((h[2] - 2.0 * m).abs() < 1e-15);
    }

    #[test]
    fn h_psi_components_differ_by_one() {
        let k = uniform_kernel(MeanMatrix {
            xx: 1.3,
            xy: 0.2,
            yx: 0.4,
            yy: 1.1,
        });
        for i in 0..=20 {
            let beta = i as f64 / 20.0;
            let h = h_map(&k, beta);
            assert!((h[2] - h[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_g_gives_single_attractor() {
        let pts = find_equilibria(|b| 0.5 - b, &FindOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].beta - 0.5).abs() < 1e-9);
        assert_eq!(pts[0].kind, EquilibriumKind::Attractor);
        assert_eq!((pts[0].g_left_sign, pts[0].g_right_sign), (1, -1));
    }

    #[test]
    fn polynomial_roots_attractor_and_saddle() {
        // -(b - 0.3)(b - 0.6)^2: simple root at 0.3 (+,-), double root at
        // 0.6 with g < 0 on both sides.
        let g = |b: f64| -(b - 0.3) * (b - 0.6) * (b - 0.6);
        let pts = find_equilibria(g, &FindOptions::default()).unwrap();
        assert_eq!(pts.len(), 2, "{pts:?}");
        assert!((pts[0].beta - 0.3).abs() < 1e-8);
        assert_eq!(pts[0].kind, EquilibriumKind::Attractor);
        assert!((pts[1].beta - 0.6).abs() < 1e-4);
        assert_eq!(pts[1].kind, EquilibriumKind::Saddle);
        assert_eq!((pts[1].g_left_sign, pts[1].g_right_sign), (-1, -1));
    }

    #[test]
    fn plateau_merges_to_single_point() {
        let g = |b: f64| {
            if b < 0.4 {
                0.4 - b
            } else if b <= 0.6 {
                0.0
            } else {
                0.6 - b
            }
        };
        let pts = find_equilibria(g, &FindOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].beta - 0.5).abs() < 1e-9);
        assert_eq!(pts[0].kind, EquilibriumKind::Attractor);
    }

    #[test]
    fn bad_boundary_sign_is_an_error() {
        assert!(find_equilibria(|b| b - 0.5, &FindOptions::default()).is_err());
        assert!(find_equilibria(|b| 0.1 + b, &FindOptions::default()).is_err());
    }

    #[test]
    fn repeller_between_two_attractors() {
        // g = -(b-0.2)(b-0.5)(b-0.8): attractors at 0.2 and 0.8, repeller
        // at 0.5; also checks alternation.
        let g = |b: f64| -(b - 0.2) * (b - 0.5) * (b - 0.8);
        let pts = find_equilibria(g, &FindOptions::default()).unwrap();
        let kinds: Vec<_> = pts.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EquilibriumKind::Attractor,
                EquilibriumKind::Repeller,
                EquilibriumKind::Attractor
            ]
        );
    }

    #[test]
    fn boundary_zero_classified_one_sided() {
        // g(b) = -b(b - 0.5): zero at 0 with g < 0 to the right (repeller),
        // zero at 0.5 with (+,-)... sign: g(0.25) = -0.25*(-0.25) > 0.
        let g = |b: f64| -b * (b - 0.5);
        let pts = find_equilibria(g, &FindOptions::default()).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].beta, 0.0);
        assert_eq!(pts[0].kind, EquilibriumKind::Repeller);
        assert_eq!(pts[0].g_left_sign, 0);
        assert_eq!(pts[1].kind, EquilibriumKind::Attractor);
    }

    #[test]
    fn returned_zeros_nearly_annihilate_g() {
        let g = |b: f64| (0.3 - b) * (1.2 - b);
        let opts = FindOptions::default();
        let pts = find_equilibria(g, &opts).unwrap();
        // |g'| <= 2.1 on [0,1]; allow sup|g'| * tol.
        for p in &pts {
            assert!(g(p.beta).abs() <= 2.1 * opts.tol * 10.0);
        }
    }

    #[test]
    fn integrate_zero_start_stays_zero() {
        let k = uniform_kernel(MeanMatrix {
            xx: 1.0,
            xy: 0.3,
            yx: 0.3,
            yy: 1.0,
        });
        let traj = integrate_upsilon(&k, [0.0; 4], 5.0, 0.01).unwrap();
        let (_, last) = traj.last().unwrap();
        assert!(last.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn integrate_constant_kernel_converges_exponentially() {
        // With h constant the solution is linear: Y(t) -> h at rate e^{-t}.
        let m = MeanMatrix {
            xx: 0.9,
            xy: 0.4,
            yx: 0.4,
            yy: 0.9,
        };
        let k = uniform_kernel(m);
        let y0 = [1.0, 0.5, 1.0, 0.5];
        let beta0 = 0.5;
        let h = h_map(&k, beta0);
        // The symmetric matrix keeps beta at 0.5 along the trajectory, so h
        // is constant and |Y(t) - h| = |Y0 - h| e^{-t}.
        let traj = integrate_upsilon(&k, y0, 10.0, 1e-3).unwrap();
        let (_, y_end) = traj.last().unwrap();
        let start_dist = (0..4)
            .map(|i| (y0[i] - h[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let end_dist = (0..4)
            .map(|i| (y_end[i] - h[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(
            end_dist <= start_dist * (-10.0f64).exp() + 1e-9,
            "end distance {end_dist}"
        );
    }

    #[test]
    fn integrate_rejects_inadmissible_start() {
        let k = uniform_kernel(MeanMatrix {
            xx: 1.0,
            xy: 0.3,
            yx: 0.3,
            yy: 1.0,
        });
        // theta_c > psi_c
        assert!(integrate_upsilon(&k, [0.5, 0.8, 1.0, 0.5], 1.0, 0.01).is_err());
    }

    #[test]
    fn kernel_check_flags_zero_rate() {
        let k = Kernel::new(
            constant_mean(MeanMatrix {
                xx: 1.0,
                xy: 0.3,
                yx: 0.3,
                yy: 1.0,
            }),
            vec![Box::new(|b: f64| b)], // vanishes at 0
            vec![Box::new(|_| 1.0)],
        );
        assert!(k.check(64).is_err());
    }
}
