//! Verification criteria run by `succprob verify` and by the `acceptance`
//! test target. Every threshold lives in [`Tolerances`].

use std::fmt;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{self, SystemParams};
use crate::experiments::{self, check_enclosure, csv_bytes, run_sweep, Param, SweepRow, SweepSpec};
use crate::format::sig;
use crate::oracle;
use crate::simulator::{self, ForwardingRule, ServiceModel, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative gap between measured and fixed-point forwarding rate.
    pub thinning_rel: f64,
    /// Relative gap between measured and analytic hazard at high update rate.
    pub hazard_rel: f64,
    /// Standard errors allowed above the analytic hazard at low update rate.
    pub hazard_se: f64,
    pub enclosure_slack: f64,
    pub closed_form_abs: f64,
    /// Shortfall from 1 allowed for the measured rate at six threads.
    pub saturation_p_hat: f64,
    /// Shortfall from 1 allowed for the upper bound at six threads.
    pub saturation_upper: f64,
    pub plateau_max_gain: f64,
    pub flatness: f64,
    pub erlang_rel: f64,
    pub stationary_abs: f64,
    pub bisection_abs: f64,
    /// Rounding slack on the bound ordering.
    pub ordering_abs: f64,
    pub insensitivity_se: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            thinning_rel: 0.03,
            hazard_rel: 0.10,
            hazard_se: 3.0,
            enclosure_slack: 0.02,
            closed_form_abs: 0.03,
            saturation_p_hat: 0.01,
            saturation_upper: 0.001,
            plateau_max_gain: 0.10,
            flatness: 0.05,
            erlang_rel: 1e-12,
            stationary_abs: 1e-12,
            bisection_abs: 1e-9,
            ordering_abs: 1e-12,
            insensitivity_se: 3.0,
        }
    }
}

impl Tolerances {
    /// Multiplies the simulation-dependent tolerances by `factor`;
    /// numerical ones stay fixed.
    pub fn scale_statistical(mut self, factor: f64) -> Self {
        self.thinning_rel *= factor;
        self.hazard_rel *= factor;
        self.hazard_se *= factor;
        self.enclosure_slack *= factor;
        self.closed_form_abs *= factor;
        self.saturation_p_hat *= factor;
        self.plateau_max_gain *= factor;
        self.flatness *= factor;
        self.insensitivity_se *= factor;
        self
    }

    /// Multiplies every tolerance by `factor`. A factor of zero makes every
    /// statistical criterion fail.
    pub fn scale_all(self, factor: f64) -> Self {
        let mut t = self.scale_statistical(factor);
        t.saturation_upper *= factor;
        t.erlang_rel *= factor;
        t.stationary_abs *= factor;
        t.bisection_abs *= factor;
        t.ordering_abs *= factor;
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seeds: Vec<u64>,
    pub horizon: f64,
    pub quick: bool,
    pub tolerances: Tolerances,
    /// Size of the random parameter grids for the property checks.
    pub grid_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seeds: experiments::default_seeds(),
            horizon: simulator::DEFAULT_HORIZON,
            quick: false,
            tolerances: Tolerances::default(),
            grid_points: 1000,
        }
    }
}

impl VerifyConfig {
    /// Three seeds, a 1000 s horizon and doubled statistical tolerances.
    pub fn quick() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            horizon: 1000.0,
            quick: true,
            tolerances: Tolerances::default().scale_statistical(2.0),
            grid_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub measured: String,
    pub expected: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionOutcome {
    fn new(id: u8, title: &'static str) -> Self {
        Self { id, title, checks: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, measured: impl Into<String>, expected: impl Into<String>, passed: bool) {
        self.checks.push(Check {
            label: label.into(),
            measured: measured.into(),
            expected: expected.into(),
            passed,
        });
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "[{status}] criterion {}: {}", self.id, self.title)?;
        for c in &self.checks {
            let mark = if c.passed { "ok" } else { "FAILED" };
            write!(f, "\n    {mark:<6} {}: measured {} (expected {})", c.label, c.measured, c.expected)?;
        }
        Ok(())
    }
}

pub struct Verifier {
    config: VerifyConfig,
    sweeps: OnceLock<Vec<(SweepSpec, Vec<SweepRow>)>>,
}

fn mean_of(row: &SweepRow) -> Option<f64> {
    row.p_hat.map(|e| e.mean)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), sig)
}

impl Verifier {
    pub fn new(config: VerifyConfig) -> Self {
        Self { config, sweeps: OnceLock::new() }
    }

    pub fn config(&self) -> &VerifyConfig {
        &self.config
    }

    fn spec(&self, varied: Param) -> SweepSpec {
        SweepSpec {
            horizon: self.config.horizon,
            seeds: self.config.seeds.clone(),
            ..SweepSpec::for_param(varied)
        }
    }

    /// Rows of the six default sweeps, computed once.
    pub fn default_sweeps(&self) -> &[(SweepSpec, Vec<SweepRow>)] {
        self.sweeps.get_or_init(|| {
            Param::ALL
                .into_iter()
                .map(|p| {
                    let spec = self.spec(p);
                    let rows = run_sweep(&spec).expect("default sweep specs are valid");
                    (spec, rows)
                })
                .collect()
        })
    }

    fn sweep_rows(&self, varied: Param) -> &[SweepRow] {
        &self
            .default_sweeps()
            .iter()
            .find(|(s, _)| s.varied == varied)
            .expect("all six default sweeps are present")
            .1
    }

    pub fn thinning(&self) -> CriterionOutcome {
        let tol = self.config.tolerances.thinning_rel;
        let mut out = CriterionOutcome::new(1, "forwarding rate matches the fixed point");
        let spec = SweepSpec {
            name: "thinning".into(),
            grid: vec![5.0, 15.0, 25.0, 35.0, 45.0, 60.0],
            ..self.spec(Param::LambdaIn)
        };
        for row in run_sweep(&spec).expect("valid spec") {
            let label = format!("lambda_in={}", sig(row.value));
            match (row.empirical_lambda, row.lambda_star) {
                (Some(emp), Some(star)) => {
                    let rel = (emp.mean - star).abs() / star;
                    out.check(label, format!("{} vs {} (rel {})", sig(emp.mean), sig(star), sig(rel)), format!("rel <= {tol}"), rel <= tol);
                }
                _ => out.check(label, "NA", "measurement", false),
            }
        }
        out
    }

    pub fn hazard(&self) -> CriterionOutcome {
        let t = self.config.tolerances;
        let mut out = CriterionOutcome::new(2, "hazard rate agrees at high update rate, not exceeded at low");
        let point = |lambda_in: f64, r_bar: f64| -> SweepRow {
            let spec = SweepSpec {
                name: "hazard".into(),
                grid: vec![lambda_in],
                base: SystemParams { r_bar, ..SystemParams::default() },
                ..self.spec(Param::LambdaIn)
            };
            run_sweep(&spec).expect("valid spec").remove(0)
        };

        let fast = point(40.0, 80.0);
        match (fast.empirical_hazard, fast.hazard) {
            (Some(emp), Some(h)) => {
                let rel = (emp.mean - h).abs() / h;
                out.check(
                    "r_bar=80",
                    format!("{} vs {} (rel {})", sig(emp.mean), sig(h), sig(rel)),
                    format!("rel <= {}", t.hazard_rel),
                    rel <= t.hazard_rel,
                );
            }
            _ => out.check("r_bar=80", "NA", "measurement", false),
        }

        let slow = point(60.0, 20.0);
        match (slow.empirical_hazard, slow.hazard) {
            (Some(emp), Some(h)) => {
                let se = emp.std_error.unwrap_or(0.0);
                let limit = h + t.hazard_se * se;
                out.check(
                    "r_bar=20, lambda_in=60",
                    sig(emp.mean),
                    format!("<= {} + {}*{} = {}", sig(h), t.hazard_se, sig(se), sig(limit)),
                    emp.mean <= limit,
                );
            }
            _ => out.check("r_bar=20, lambda_in=60", "NA", "measurement", false),
        }
        out
    }

    pub fn enclosure(&self) -> CriterionOutcome {
        let slack = self.config.tolerances.enclosure_slack;
        let mut out = CriterionOutcome::new(3, "bounds enclose the measured success rate");
        for (spec, rows) in self.default_sweeps() {
            let report = check_enclosure(&spec.name, rows, slack);
            let detail = report
                .violations
                .iter()
                .map(|v| format!("{}@{}", sig(v.p_hat), sig(v.value)))
                .collect::<Vec<_>>()
                .join(" ");
            out.check(
                format!("{} sweep", spec.name),
                if detail.is_empty() { "0 violations".into() } else { format!("{} violations: {detail}", report.violations.len()) },
                format!("0 outside [lower-{slack}, upper+{slack}], no NA"),
                report.enclosed() && report.na_points == 0,
            );
        }
        out
    }

    pub fn closed_form(&self) -> CriterionOutcome {
        let tol = self.config.tolerances.closed_form_abs;
        let mut out = CriterionOutcome::new(4, "closed form tracks the arrival-rate sweep");
        let report = check_enclosure("lambda_in", self.sweep_rows(Param::LambdaIn), 0.0);
        let dev = report.max_closed_deviation;
        out.check(
            "max |p_hat - p_succ_closed|",
            fmt_opt(dev),
            format!("<= {tol}"),
            dev.is_some_and(|d| d <= tol) && report.na_points == 0,
        );
        out
    }

    pub fn saturation(&self) -> CriterionOutcome {
        let t = self.config.tolerances;
        let mut out = CriterionOutcome::new(5, "six threads saturate to certain success");
        let row = self.sweep_rows(Param::CThreads).iter().find(|r| r.value == 6.0).cloned();
        let p_hat = row.as_ref().and_then(mean_of);
        let upper = row.as_ref().and_then(|r| r.upper);
        let p_min = 1.0 - t.saturation_p_hat;
        let u_min = 1.0 - t.saturation_upper;
        out.check("p_hat at C=6", fmt_opt(p_hat), format!(">= {}", sig(p_min)), p_hat.is_some_and(|p| p >= p_min));
        out.check("upper at C=6", fmt_opt(upper), format!(">= {}", sig(u_min)), upper.is_some_and(|u| u >= u_min));
        out
    }

    pub fn plateau(&self) -> CriterionOutcome {
        let max_gain = self.config.tolerances.plateau_max_gain;
        let mut out = CriterionOutcome::new(6, "faster updates give a modest gain");
        let rows = self.sweep_rows(Param::RBar);
        let at = |v: f64| rows.iter().find(|r| r.value == v).and_then(mean_of);
        let gain = at(100.0).zip(at(5.0)).map(|(hi, lo)| hi - lo);
        out.check(
            "p_hat(r_bar=100) - p_hat(r_bar=5)",
            fmt_opt(gain),
            format!("in [0, {max_gain}]"),
            gain.is_some_and(|g| (0.0..=max_gain).contains(&g)),
        );
        out
    }

    pub fn flatness(&self) -> CriterionOutcome {
        let tol = self.config.tolerances.flatness;
        let mut out = CriterionOutcome::new(7, "link rates barely move the success rate");
        for param in [Param::Gamma, Param::Beta] {
            let means: Vec<f64> = self.sweep_rows(param).iter().filter_map(mean_of).collect();
            let spread = if means.len() == self.sweep_rows(param).len() && !means.is_empty() {
                let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
                Some(hi - lo)
            } else {
                None
            };
            out.check(
                format!("{param} sweep max - min"),
                fmt_opt(spread),
                format!("<= {tol}"),
                spread.is_some_and(|s| s <= tol),
            );
        }
        out
    }

    /// Random points inside the experimental box that respect the safety frame.
    fn random_grid(&self, seed: u64) -> Vec<SystemParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = Vec::with_capacity(self.config.grid_points);
        while grid.len() < self.config.grid_points {
            let p = SystemParams {
                lambda_in: rng.random_range(5.0..=60.0),
                mu: rng.random_range(20.0..=60.0),
                c_threads: rng.random_range(1..=6),
                r_bar: rng.random_range(5.0..=100.0),
                gamma: rng.random_range(60.0..=200.0),
                beta: rng.random_range(60.0..=200.0),
            };
            let Ok(lambda) = analytic::forwarding_rate(&p) else { continue };
            if p.safety_frame(lambda).holds() {
                grid.push(p);
            }
        }
        grid
    }

    pub fn properties(&self) -> CriterionOutcome {
        let t = self.config.tolerances;
        let n = self.config.grid_points;
        let mut out = CriterionOutcome::new(8, "numerical property suites");

        let mut rng = ChaCha8Rng::seed_from_u64(0xE71A);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let rho = rng.random_range(0.05..=50.0);
            let c = rng.random_range(1..=40);
            let rec = analytic::erlang_b(rho, c).expect("valid load");
            let direct = oracle::erlang_b_factorial(rho, c);
            worst = worst.max(((rec - direct) / direct).abs());
        }
        out.check(
            format!("Erlang-B recurrence vs factorial sum ({n} points)"),
            format!("max rel {worst:e}"),
            format!("<= {:e}", t.erlang_rel),
            worst <= t.erlang_rel,
        );

        let mut worst = 0.0f64;
        for c in 1..=6u32 {
            for i in 1..=50 {
                let rho = 0.4 * f64::from(i);
                let pi = oracle::loss_system_stationary(rho, c);
                let idle = analytic::p_idle(rho, c).expect("valid load");
                let one = analytic::p_one_idle(rho, c).expect("valid load");
                let c = c as usize;
                worst = worst.max((idle - (1.0 - pi[c])).abs()).max((one - pi[c - 1]).abs());
            }
        }
        out.check(
            "P_idle and P_1 vs solved birth-death chain (C<=6)",
            format!("max abs {worst:e}"),
            format!("<= {:e}", t.stationary_abs),
            worst <= t.stationary_abs,
        );

        let grid = self.random_grid(0x5EED);
        let mut worst_fp = 0.0f64;
        let mut ordering_failures = 0usize;
        let mut missing = 0usize;
        for p in &grid {
            let Ok(report) = analytic::analyze(p) else {
                missing += 1;
                continue;
            };
            worst_fp = worst_fp.max((report.lambda_star - oracle::bisect_forwarding_rate(p)).abs());
            match report.p_succ_transform {
                Some(mid) => {
                    let ordered = 0.0 <= report.lower
                        && report.lower <= mid + t.ordering_abs
                        && mid <= report.upper + t.ordering_abs
                        && report.upper <= 1.0;
                    if !ordered {
                        ordering_failures += 1;
                    }
                }
                None => missing += 1,
            }
        }
        out.check(
            format!("fixed point vs bisection ({} points)", grid.len()),
            format!("max abs {worst_fp:e}"),
            format!("<= {:e}", t.bisection_abs),
            worst_fp <= t.bisection_abs && missing == 0,
        );
        out.check(
            format!("lower <= transform <= upper ({} points)", grid.len()),
            format!("{ordering_failures} out of order, {missing} undefined"),
            "0 and 0",
            ordering_failures == 0 && missing == 0,
        );

        let (exp_mode, det_mode) = self.insensitivity_runs();
        match (exp_mode, det_mode) {
            (Ok(a), Ok(b)) => {
                let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
                let diff = (a.mean - b.mean).abs();
                out.check(
                    "blocking: exponential vs deterministic service",
                    format!("{} vs {} (diff {})", sig(a.mean), sig(b.mean), sig(diff)),
                    format!("<= {}*{}", t.insensitivity_se, sig(se)),
                    diff <= t.insensitivity_se * se,
                );
            }
            _ => out.check("blocking: exponential vs deterministic service", "NA", "two or more seeds", false),
        }
        out
    }

    fn insensitivity_runs(
        &self,
    ) -> (experiments::Result<experiments::SeedSummary>, experiments::Result<experiments::SeedSummary>) {
        let blocking = |service: ServiceModel| {
            let values: Vec<f64> = self
                .config
                .seeds
                .par_iter()
                .map(|&seed| {
                    let mut cfg = SimConfig::new(SystemParams::default(), self.config.horizon, seed)
                        .expect("default config is valid");
                    cfg.service = service;
                    cfg.forwarding = ForwardingRule::AlwaysForward;
                    simulator::run_simulation(&cfg).expect("simulation runs").server_blocking()
                })
                .collect();
            experiments::aggregate_seeds(&values)
        };
        (blocking(ServiceModel::Exponential), blocking(ServiceModel::Deterministic))
    }

    pub fn determinism(&self) -> CriterionOutcome {
        let mut out = CriterionOutcome::new(9, "fixed seeds give identical CSV bytes");
        for param in [Param::LambdaIn, Param::CThreads] {
            let spec = self.spec(param);
            let fresh = run_sweep(&spec).and_then(|rows| csv_bytes(&rows, spec.seeds.len()));
            let cached = csv_bytes(self.sweep_rows(param), spec.seeds.len());
            let same = matches!((&fresh, &cached), (Ok(a), Ok(b)) if a == b);
            out.check(
                format!("{param} sweep rerun"),
                if same { "identical" } else { "differs" },
                "identical",
                same,
            );
        }
        out
    }

    pub fn run_all(&self) -> Vec<CriterionOutcome> {
        vec![
            self.thinning(),
            self.hazard(),
            self.enclosure(),
            self.closed_form(),
            self.saturation(),
            self.plateau(),
            self.flatness(),
            self.properties(),
            self.determinism(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> VerifyConfig {
        VerifyConfig {
            seeds: vec![1, 2],
            horizon: 100.0,
            quick: true,
            tolerances: Tolerances::default(),
            grid_points: 20,
        }
    }

    #[test]
    fn zeroed_tolerances_fail() {
        let mut cfg = tiny();
        cfg.tolerances = cfg.tolerances.scale_all(0.0);
        let v = Verifier::new(cfg);
        let outcome = v.thinning();
        assert!(!outcome.passed());
        assert!(outcome.to_string().starts_with("[FAIL] criterion 1"));
    }

    #[test]
    fn quick_config_is_looser() {
        let q = VerifyConfig::quick();
        assert!(q.quick);
        assert!(q.tolerances.thinning_rel > Tolerances::default().thinning_rel);
        assert_eq!(q.tolerances.erlang_rel, Tolerances::default().erlang_rel);
    }

    #[test]
    fn random_grid_respects_safety_frame() {
        let v = Verifier::new(tiny());
        let grid = v.random_grid(1);
        assert_eq!(grid.len(), 20);
        for p in grid {
            let l = analytic::forwarding_rate(&p).unwrap();
            assert!(p.safety_frame(l).holds());
        }
    }

    #[test]
    fn properties_pass_on_small_grid() {
        let outcome = Verifier::new(tiny()).properties();
        for c in &outcome.checks[..4] {
            assert!(c.passed, "{c:?}");
        }
    }
}
