//! Closed-form quantities for the status-driven offloading loop.
//!
//! Everything here is a pure function of [`SystemParams`]: Erlang-loss
//! blocking at the server, the fixed point of the AP's thinning rule, the
//! resource-exhaustion hazard, and the success-probability expressions with
//! their upper and lower bounds.
//!
//! The inter-update gap seen at the AP is modelled as a deterministic
//! generation period `T = 1/r_bar` plus the difference of two independent
//! `Exp(gamma)` uplink delays, so `E[Y] = T` and `E[Y^2] = T^2 + 2/gamma^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stopping gap for the forwarding-rate fixed point.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Iteration cap for the forwarding-rate fixed point.
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "forwarding-rate iteration did not converge in {iterations} steps \
         (last iterate {last}, residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },
}

pub type Result<T> = std::result::Result<T, AnalyticError>;

/// The six controllable inputs of one scenario. Rates are per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Task arrival rate at the AP.
    pub lambda_in: f64,
    /// Per-thread service rate.
    pub mu: f64,
    /// Maximum number of concurrent threads.
    pub c_threads: u32,
    /// Status-update generation rate; the generation period is `1/r_bar`.
    pub r_bar: f64,
    /// Uplink (status) delay rate.
    pub gamma: f64,
    /// Downlink (task) delay rate.
    pub beta: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            lambda_in: 40.0,
            mu: 30.0,
            c_threads: 2,
            r_bar: 20.0,
            gamma: 100.0,
            beta: 100.0,
        }
    }
}

fn positive_rate(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::InvalidParam {
            field,
            reason: format!("must be a finite positive rate, got {value}"),
        })
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        positive_rate("lambda_in", self.lambda_in)?;
        positive_rate("mu", self.mu)?;
        positive_rate("r_bar", self.r_bar)?;
        positive_rate("gamma", self.gamma)?;
        positive_rate("beta", self.beta)?;
        if self.c_threads == 0 {
            return Err(AnalyticError::InvalidParam {
                field: "c_threads",
                reason: "at least one thread is required".into(),
            });
        }
        Ok(())
    }

    /// Status generation period `T`.
    pub fn period(&self) -> f64 {
        1.0 / self.r_bar
    }

    /// Checks the operating guideline `r_bar/gamma < 1` and
    /// `lambda_star/beta < 1`. Not enforced anywhere; callers decide.
    pub fn safety_frame(&self, lambda_star: f64) -> SafetyFrame {
        SafetyFrame {
            uplink_load: self.r_bar / self.gamma,
            downlink_load: lambda_star / self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyFrame {
    pub uplink_load: f64,
    pub downlink_load: f64,
}

impl SafetyFrame {
    pub fn holds(&self) -> bool {
        self.uplink_load < 1.0 && self.downlink_load < 1.0
    }
}

/// Erlang-B blocking probability `B(rho, c)`.
///
/// Uses the recurrence `B(rho,0) = 1`, `B(rho,k) = rho B(rho,k-1) / (k + rho B(rho,k-1))`,
/// which never forms factorials and stays in `[0, 1]` for any `c`.
pub fn erlang_b(rho: f64, c: u32) -> Result<f64> {
    if !(rho >= 0.0) || rho.is_infinite() {
        return Err(AnalyticError::Domain(format!(
            "offered load must be finite and non-negative, got {rho}"
        )));
    }
    let mut b = 1.0;
    for k in 1..=c {
        let rb = rho * b;
        b = rb / (f64::from(k) + rb);
    }
    Ok(b)
}

/// Probability that at least one of `c` threads is idle.
pub fn p_idle(rho: f64, c: u32) -> Result<f64> {
    Ok(1.0 - erlang_b(rho, c)?)
}

/// Solves `lambda = lambda_in (1 - B(lambda/mu, C))` by plain fixed-point
/// iteration started at `lambda_in`.
pub fn solve_forwarding_rate(params: &SystemParams, tolerance: f64, max_iter: usize) -> Result<f64> {
    params.validate()?;
    if !(tolerance > 0.0) {
        return Err(AnalyticError::Domain(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let g = |lambda: f64| -> Result<f64> {
        Ok(params.lambda_in * p_idle(lambda / params.mu, params.c_threads)?)
    };
    let mut lambda = params.lambda_in;
    for _ in 0..max_iter {
        let next = g(lambda)?;
        if (next - lambda).abs() < tolerance {
            return Ok(next);
        }
        lambda = next;
    }
    let residual = (g(lambda)? - lambda).abs();
    Err(AnalyticError::NoConvergence {
        iterations: max_iter,
        last: lambda,
        residual,
    })
}

/// Fixed point with the default tolerance and iteration cap.
pub fn forwarding_rate(params: &SystemParams) -> Result<f64> {
    solve_forwarding_rate(params, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)
}

/// Closed-form success probability `P_idle^2` at the forwarding fixed point.
pub fn p_succ_closed(params: &SystemParams) -> Result<f64> {
    let lambda = forwarding_rate(params)?;
    let idle = p_idle(lambda / params.mu, params.c_threads)?;
    Ok(idle * idle)
}

/// Stationary probability that exactly one thread is idle,
/// `(rho^(C-1)/(C-1)!) / sum_{k<=C} rho^k/k!`, evaluated as
/// `B(rho, C-1) (1 - B(rho, C))`.
pub fn p_one_idle(rho: f64, c: u32) -> Result<f64> {
    if c == 0 {
        return Err(AnalyticError::Domain("one-idle probability needs at least one thread".into()));
    }
    Ok(erlang_b(rho, c - 1)? * p_idle(rho, c)?)
}

/// Rate of admission-driven transitions from one idle thread to none,
/// `lambda* P_1`: forwarded tasks see the stationary occupancy and only
/// those finding exactly one idle thread exhaust the pool.
pub fn hazard_rate(params: &SystemParams) -> Result<f64> {
    let lambda = forwarding_rate(params)?;
    Ok(lambda * p_one_idle(lambda / params.mu, params.c_threads)?)
}

/// `exp(-hazard * x)`: probability of no exhaustion event in a window of
/// fixed length `x`.
pub fn survival_fixed_window(hazard: f64, x: f64) -> Result<f64> {
    if !(hazard >= 0.0) || !(x >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "hazard and window length must be non-negative, got ({hazard}, {x})"
        )));
    }
    if hazard == 0.0 || x == 0.0 {
        return Ok(1.0);
    }
    Ok((-hazard * x).exp())
}

fn check_below_uplink(s: f64, params: &SystemParams) -> Result<()> {
    if !(s >= 0.0) {
        return Err(AnalyticError::Domain(format!(
            "transform argument must be non-negative, got {s}"
        )));
    }
    if s >= params.gamma {
        return Err(AnalyticError::Domain(format!(
            "transform argument {s} reaches the uplink rate {}; the inter-update gap \
             transform diverges (safety frame violated)",
            params.gamma
        )));
    }
    Ok(())
}

/// Laplace-Stieltjes transform of the inter-update gap,
/// `E[exp(-sY)] = exp(-sT) gamma^2 / (gamma^2 - s^2)`, for `0 <= s < gamma`.
pub fn lst_inter_update_gap(s: f64, params: &SystemParams) -> Result<f64> {
    params.validate()?;
    check_below_uplink(s, params)?;
    let g2 = params.gamma * params.gamma;
    Ok((-s * params.period()).exp() * g2 / (g2 - s * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformFactors {
    /// `G_Y = (1 - L_Y(hazard)) / (hazard E[Y])`.
    pub staleness: f64,
    /// `G_gamma = gamma / (hazard + gamma)`.
    pub uplink: f64,
    /// `G_beta = beta / (hazard + beta)`.
    pub downlink: f64,
}

impl TransformFactors {
    pub fn product(&self) -> f64 {
        self.staleness * self.uplink * self.downlink
    }
}

fn staleness_factor(hazard: f64, params: &SystemParams) -> Result<f64> {
    check_below_uplink(hazard, params)?;
    if hazard == 0.0 {
        return Ok(1.0);
    }
    let x = hazard * params.period();
    let g2 = params.gamma * params.gamma;
    let h2 = hazard * hazard;
    // 1 - exp(-x) * (1 + h2/(g2 - h2)), arranged to avoid cancellation at small x.
    let one_minus_lst = -(-x).exp_m1() - (-x).exp() * h2 / (g2 - h2);
    let factor = one_minus_lst / x;
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(AnalyticError::Domain(format!(
            "staleness factor {factor} at hazard {hazard} falls outside (0, 1]; \
             uplink jitter dominates the generation period"
        )));
    }
    Ok(factor)
}

pub fn transform_factors(hazard: f64, params: &SystemParams) -> Result<TransformFactors> {
    params.validate()?;
    let staleness = staleness_factor(hazard, params)?;
    Ok(TransformFactors {
        staleness,
        uplink: params.gamma / (hazard + params.gamma),
        downlink: params.beta / (hazard + params.beta),
    })
}

/// Holding-window form of the success probability,
/// `(1 - B(rho, C)) G_Y G_gamma G_beta`.
pub fn p_succ_transform(params: &SystemParams) -> Result<f64> {
    let lambda = forwarding_rate(params)?;
    let rho = lambda / params.mu;
    let hazard = lambda * p_one_idle(rho, params.c_threads)?;
    let factors = transform_factors(hazard, params)?;
    Ok(p_idle(rho, params.c_threads)? * factors.product())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapMoments {
    /// `E[Y]`, seconds.
    pub mean_gap: f64,
    /// `E[Y^2]`, seconds squared.
    pub second_moment_gap: f64,
    /// Stationary waiting age `E[A] = E[Y^2] / (2 E[Y])`.
    pub mean_age: f64,
    /// Age of information at consumption, `E[D] + E[A]`.
    pub mean_aoi: f64,
}

pub fn gap_moments(params: &SystemParams) -> Result<GapMoments> {
    params.validate()?;
    let t = params.period();
    let mean_gap = t;
    let second_moment_gap = t * t + 2.0 / (params.gamma * params.gamma);
    let mean_age = second_moment_gap / (2.0 * mean_gap);
    Ok(GapMoments {
        mean_gap,
        second_moment_gap,
        mean_age,
        mean_aoi: 1.0 / params.gamma + mean_age,
    })
}

/// Ideal upper bound `1 - B(rho, C)`: fresh status and instantaneous links.
pub fn upper_bound(params: &SystemParams) -> Result<f64> {
    let lambda = forwarding_rate(params)?;
    p_idle(lambda / params.mu, params.c_threads)
}

/// Operational lower bound `(1 - B) exp(-hazard (E[AoI] + 1/beta))`.
pub fn lower_bound(params: &SystemParams) -> Result<f64> {
    let lambda = forwarding_rate(params)?;
    let rho = lambda / params.mu;
    let hazard = lambda * p_one_idle(rho, params.c_threads)?;
    let moments = gap_moments(params)?;
    let window = moments.mean_aoi + 1.0 / params.beta;
    Ok(p_idle(rho, params.c_threads)? * survival_fixed_window(hazard, window)?)
}

/// Every derived quantity for one scenario. Transform-based fields are
/// `None` where the inter-update transform is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub params: SystemParams,
    pub lambda_star: f64,
    pub rho: f64,
    pub blocking: f64,
    pub p_idle: f64,
    pub p_one_idle: f64,
    pub hazard: f64,
    pub g_staleness: Option<f64>,
    pub g_uplink: f64,
    pub g_downlink: f64,
    pub p_succ_closed: f64,
    pub p_succ_transform: Option<f64>,
    pub upper: f64,
    pub lower: f64,
    pub mean_gap: f64,
    pub second_moment_gap: f64,
    pub mean_age: f64,
    pub mean_aoi: f64,
}

pub fn analyze(params: &SystemParams) -> Result<AnalyticReport> {
    let lambda_star = forwarding_rate(params)?;
    let rho = lambda_star / params.mu;
    let blocking = erlang_b(rho, params.c_threads)?;
    let idle = 1.0 - blocking;
    let one_idle = p_one_idle(rho, params.c_threads)?;
    let hazard = lambda_star * one_idle;
    let moments = gap_moments(params)?;
    let g_staleness = staleness_factor(hazard, params).ok();
    let g_uplink = params.gamma / (hazard + params.gamma);
    let g_downlink = params.beta / (hazard + params.beta);
    let lower = idle * survival_fixed_window(hazard, moments.mean_aoi + 1.0 / params.beta)?;
    Ok(AnalyticReport {
        params: *params,
        lambda_star,
        rho,
        blocking,
        p_idle: idle,
        p_one_idle: one_idle,
        hazard,
        g_staleness,
        g_uplink,
        g_downlink,
        p_succ_closed: idle * idle,
        p_succ_transform: g_staleness.map(|g| idle * g * g_uplink * g_downlink),
        upper: idle,
        lower,
        mean_gap: moments.mean_gap,
        second_moment_gap: moments.second_moment_gap,
        mean_age: moments.mean_age,
        mean_aoi: moments.mean_aoi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(lambda_in: f64, mu: f64, c_threads: u32) -> SystemParams {
        SystemParams {
            lambda_in,
            mu,
            c_threads,
            ..SystemParams::default()
        }
    }

    // Bisection on lambda - lambda_in (1 - B(lambda/mu, C)) with the
    // factorial-sum blocking formula; shares no code with the iteration.
    fn bisect_fixed_point(p: &SystemParams) -> f64 {
        let blocking = |rho: f64| {
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..=p.c_threads {
                term *= rho / f64::from(k);
                sum += term;
            }
            term / sum
        };
        let f = |l: f64| l - p.lambda_in * (1.0 - blocking(l / p.mu));
        let (mut lo, mut hi) = (0.0, p.lambda_in);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn erlang_b_trivial_cases() {
        assert_eq!(erlang_b(0.0, 2).unwrap(), 0.0);
        assert_eq!(erlang_b(1.5, 0).unwrap(), 1.0);
        assert_eq!(p_idle(0.0, 2).unwrap(), 1.0);
    }

    #[test]
    fn erlang_b_hand_evaluation() {
        let rho: f64 = 4.0 / 3.0;
        let expected = (rho * rho / 2.0) / (1.0 + rho + rho * rho / 2.0);
        assert!((expected - 0.275862).abs() < 1e-6);
        assert!((erlang_b(rho, 2).unwrap() - expected).abs() < 1e-15);
        assert!((p_idle(rho, 2).unwrap() - 0.724138).abs() < 1e-6);
    }

    #[test]
    fn erlang_b_rejects_bad_load() {
        assert!(matches!(erlang_b(-0.1, 2), Err(AnalyticError::Domain(_))));
        assert!(erlang_b(f64::NAN, 2).is_err());
        assert!(erlang_b(f64::INFINITY, 2).is_err());
    }

    #[test]
    fn p_idle_vanishes_under_heavy_load() {
        let mut prev = 1.0;
        for rho in [1.0, 10.0, 100.0, 1e4, 1e8] {
            let p = p_idle(rho, 1).unwrap();
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn fixed_point_matches_bisection_at_defaults() {
        let p = SystemParams::default();
        let lambda = forwarding_rate(&p).unwrap();
        let oracle = bisect_fixed_point(&p);
        assert!((lambda - oracle).abs() < 1e-9);
        assert!((lambda - 31.52).abs() < 0.01, "lambda* = {lambda}");
    }

    #[test]
    fn fixed_point_underload_and_low_end() {
        let lambda = forwarding_rate(&params(10.0, 1000.0, 2)).unwrap();
        assert!((lambda - 10.0).abs() < 1e-3);

        let p = params(5.0, 30.0, 2);
        let lambda = forwarding_rate(&p).unwrap();
        assert!((0.0..=5.0).contains(&lambda));
        assert!(upper_bound(&p).unwrap() > 0.97);
    }

    #[test]
    fn fixed_point_reports_non_convergence() {
        let err = solve_forwarding_rate(&SystemParams::default(), 1e-12, 2).unwrap_err();
        match err {
            AnalyticError::NoConvergence { iterations, last, residual } => {
                assert_eq!(iterations, 2);
                assert!(last > 0.0 && last <= 40.0);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(solve_forwarding_rate(&SystemParams::default(), 0.0, 10).is_err());
    }

    #[test]
    fn closed_form_at_defaults() {
        let p = SystemParams::default();
        let oracle_lambda = bisect_fixed_point(&p);
        let rho = oracle_lambda / p.mu;
        let idle = 1.0 - (rho * rho / 2.0) / (1.0 + rho + rho * rho / 2.0);
        assert!((idle - 0.788).abs() < 1e-3);
        let closed = p_succ_closed(&p).unwrap();
        assert!((closed - idle * idle).abs() < 1e-9);
        assert!((closed - 0.621).abs() < 1e-3);
        assert!((upper_bound(&p).unwrap() - idle).abs() < 1e-9);
    }

    #[test]
    fn closed_form_saturates_with_many_threads() {
        assert!(p_succ_closed(&params(40.0, 30.0, 40)).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn closed_form_lowest_at_top_of_arrival_range() {
        let at = |l| p_succ_closed(&params(l, 30.0, 2)).unwrap();
        let top = at(60.0);
        for l in [5.0, 20.0, 40.0, 55.0] {
            assert!(at(l) > top);
        }
    }

    #[test]
    fn hazard_single_thread_and_defaults() {
        // One thread: every admission exhausts the pool, admissions happen
        // at rate lambda* P_idle.
        let p = params(40.0, 30.0, 1);
        let lambda = forwarding_rate(&p).unwrap();
        let idle = upper_bound(&p).unwrap();
        assert!((hazard_rate(&p).unwrap() - lambda * idle).abs() < 1e-12);

        let p = SystemParams::default();
        let lambda = bisect_fixed_point(&p);
        let rho = lambda / p.mu;
        let expected = lambda * rho / (1.0 + rho + rho * rho / 2.0);
        let hazard = hazard_rate(&p).unwrap();
        assert!((hazard - expected).abs() < 1e-8);
        assert!((hazard - 12.72).abs() < 0.01, "hazard = {hazard}");
        // r_bar does not enter the hazard.
        let fast = SystemParams { r_bar: 80.0, ..p };
        assert_eq!(hazard_rate(&fast).unwrap(), hazard);
    }

    #[test]
    fn hazard_at_top_arrival_rate() {
        let p = params(60.0, 30.0, 2);
        assert!((hazard_rate(&p).unwrap() - 17.6).abs() < 0.05);
    }

    #[test]
    fn one_idle_probability_needs_a_thread() {
        assert!(p_one_idle(1.0, 0).is_err());
        assert!((p_one_idle(1.0, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn survival_window_values() {
        assert_eq!(survival_fixed_window(12.0, 0.0).unwrap(), 1.0);
        assert_eq!(survival_fixed_window(0.0, 7.0).unwrap(), 1.0);
        assert!((survival_fixed_window(16.1, 0.047).unwrap() - 0.469).abs() < 1e-3);
        assert!(survival_fixed_window(-1.0, 1.0).is_err());
        assert!(survival_fixed_window(1.0, -1.0).is_err());
    }

    #[test]
    fn gap_transform_values() {
        let p = SystemParams::default();
        assert_eq!(lst_inter_update_gap(0.0, &p).unwrap(), 1.0);
        let s: f64 = 16.148;
        let expected = (-s * 0.05).exp() * 1e4 / (1e4 - s * s);
        let lst = lst_inter_update_gap(s, &p).unwrap();
        assert!((lst - expected).abs() < 1e-14);
        assert!((lst - 0.458).abs() < 1e-3);
        assert!(matches!(
            lst_inter_update_gap(100.0, &p),
            Err(AnalyticError::Domain(msg)) if msg.contains("safety frame")
        ));
        assert!(lst_inter_update_gap(-1.0, &p).is_err());
    }

    #[test]
    fn gap_transform_slope_is_minus_mean_gap() {
        let p = SystemParams::default();
        let h = 1e-6;
        let slope = (lst_inter_update_gap(h, &p).unwrap() - 1.0) / h;
        let mean = gap_moments(&p).unwrap().mean_gap;
        assert!(((slope + mean) / mean).abs() < 1e-4, "slope = {slope}");
    }

    #[test]
    fn transform_factor_values() {
        let p = SystemParams::default();
        let f = transform_factors(0.0, &p).unwrap();
        assert_eq!((f.staleness, f.uplink, f.downlink), (1.0, 1.0, 1.0));

        let hazard = 16.148;
        let f = transform_factors(hazard, &p).unwrap();
        let lst = lst_inter_update_gap(hazard, &p).unwrap();
        assert!((f.staleness - (1.0 - lst) / (hazard * 0.05)).abs() < 1e-12);
        assert!((f.staleness - 0.671).abs() < 1e-3);
        assert!((f.uplink - 0.861).abs() < 1e-3);
        assert!((f.downlink - 0.861).abs() < 1e-3);

        let wide = SystemParams { gamma: 1e12, ..p };
        assert!((transform_factors(hazard, &wide).unwrap().uplink - 1.0).abs() < 1e-9);
        assert!(transform_factors(100.0, &p).is_err());
    }

    #[test]
    fn staleness_factor_rejects_jitter_dominated_gaps() {
        // Hazard just below gamma with a slow generation period: L_Y > 1.
        let p = SystemParams { r_bar: 1e4, ..SystemParams::default() };
        assert!(transform_factors(99.999, &p).is_err());
    }

    #[test]
    fn transform_form_at_defaults() {
        let p = SystemParams::default();
        let value = p_succ_transform(&p).unwrap();
        // 0.78794 * 0.72619 * 0.887127^2 evaluated by hand.
        assert!((value - 0.4503).abs() < 1e-3, "p_succ_transform = {value}");
        assert!(value >= lower_bound(&p).unwrap());
    }

    #[test]
    fn transform_form_limits() {
        let base = SystemParams::default();
        let fast_links = SystemParams { gamma: 1e8, beta: 1e8, ..base };
        let report = analyze(&fast_links).unwrap();
        let idle = report.p_idle;
        let staleness_only = idle * report.g_staleness.unwrap();
        assert!((report.p_succ_transform.unwrap() - staleness_only).abs() < 1e-4);

        let ideal = SystemParams { r_bar: 1e8, ..fast_links };
        assert!((p_succ_transform(&ideal).unwrap() - upper_bound(&ideal).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn gap_moment_values() {
        let m = gap_moments(&SystemParams::default()).unwrap();
        assert!((m.mean_gap - 0.05).abs() < 1e-15);
        assert!((m.second_moment_gap - 0.0027).abs() < 1e-15);
        assert!((m.mean_age - 0.027).abs() < 1e-12);
        assert!((m.mean_aoi - 0.037).abs() < 1e-12);

        let m = gap_moments(&SystemParams { gamma: 1e12, ..SystemParams::default() }).unwrap();
        assert!((m.second_moment_gap - 0.0025).abs() < 1e-12);
        assert!((m.mean_age - 0.025).abs() < 1e-12);
    }

    #[test]
    fn gap_moments_match_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Exp};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let jitter = Exp::new(100.0).unwrap();
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y: f64 = 0.05 + jitter.sample(&mut rng) - jitter.sample(&mut rng);
            s1 += y;
            s2 += y * y;
        }
        let (m1, m2) = (s1 / n as f64, s2 / n as f64);
        let m = gap_moments(&SystemParams::default()).unwrap();
        // Standard errors are about 1.4e-5 and 1.5e-6.
        assert!((m1 - m.mean_gap).abs() < 6e-5, "E[Y] = {m1}");
        assert!((m2 - m.second_moment_gap).abs() < 8e-6, "E[Y^2] = {m2}");
    }

    #[test]
    fn lower_bound_values() {
        let p = SystemParams::default();
        let lower = lower_bound(&p).unwrap();
        // 0.78794 * exp(-12.7234 * 0.047)
        assert!((lower - 0.4333).abs() < 1e-3, "lower = {lower}");
        let roomy = SystemParams { c_threads: 60, ..p };
        assert!(lower_bound(&roomy).unwrap() > 0.999);
    }

    #[test]
    fn params_validation_names_field() {
        let bad = SystemParams { c_threads: 0, ..SystemParams::default() };
        assert!(matches!(
            bad.validate(),
            Err(AnalyticError::InvalidParam { field: "c_threads", .. })
        ));
        let bad = SystemParams { gamma: -3.0, ..SystemParams::default() };
        assert!(matches!(
            analyze(&bad),
            Err(AnalyticError::InvalidParam { field: "gamma", .. })
        ));
    }

    #[test]
    fn safety_frame_at_defaults() {
        let p = SystemParams::default();
        let frame = p.safety_frame(forwarding_rate(&p).unwrap());
        assert!(frame.holds());
        assert!(!SystemParams { r_bar: 150.0, ..p }.safety_frame(31.0).holds());
    }

    #[test]
    fn analyze_na_when_hazard_reaches_uplink() {
        let p = SystemParams { lambda_in: 500.0, mu: 500.0, c_threads: 1, gamma: 60.0, ..Default::default() };
        let report = analyze(&p).unwrap();
        assert!(report.hazard >= p.gamma);
        assert!(report.g_staleness.is_none());
        assert!(report.p_succ_transform.is_none());
        assert!(report.lower > 0.0 && report.lower <= report.upper);
    }

    fn table_ii() -> impl Strategy<Value = SystemParams> {
        (5.0..60.0f64, 20.0..60.0f64, 1u32..=6, 5.0..100.0f64, 60.0..200.0f64, 60.0..200.0f64)
            .prop_map(|(lambda_in, mu, c_threads, r_bar, gamma, beta)| SystemParams {
                lambda_in,
                mu,
                c_threads,
                r_bar,
                gamma,
                beta,
            })
    }

    proptest! {
        #[test]
        fn recurrence_matches_factorial_sum(rho in 1e-3..50.0f64, c in 1u32..=64) {
            let mut num = 1.0f64;
            let mut fact = 1.0f64;
            let mut sum = 1.0f64;
            for k in 1..=c {
                fact *= f64::from(k);
                num = rho.powi(k as i32) / fact;
                sum += num;
            }
            let direct = num / sum;
            let rec = erlang_b(rho, c).unwrap();
            prop_assert!(((rec - direct) / direct).abs() <= 1e-12, "{rec} vs {direct}");
        }

        #[test]
        fn blocking_monotone(rho in 0.01..40.0f64, c in 1u32..30) {
            let b = erlang_b(rho, c).unwrap();
            prop_assert!(erlang_b(rho * 1.01, c).unwrap() > b);
            prop_assert!(erlang_b(rho, c + 1).unwrap() < b);
        }

        #[test]
        fn fixed_point_matches_bisection(p in table_ii()) {
            let lambda = forwarding_rate(&p).unwrap();
            prop_assert!(lambda <= p.lambda_in && lambda >= 0.0);
            prop_assert!((lambda - bisect_fixed_point(&p)).abs() <= 1e-9);
            prop_assert!(hazard_rate(&p).unwrap() <= lambda);
        }

        #[test]
        fn bound_ordering(p in table_ii()) {
            let r = analyze(&p).unwrap();
            prop_assume!(p.safety_frame(r.lambda_star).holds());
            let mid = r.p_succ_transform.unwrap();
            prop_assert!(0.0 <= r.lower && r.lower <= mid + 1e-12);
            prop_assert!(mid <= r.upper && r.upper <= 1.0);
            prop_assert!(r.p_succ_closed <= r.upper);
            prop_assert!((r.p_succ_closed - r.p_idle * r.p_idle).abs() < 1e-15);
        }
    }
}
