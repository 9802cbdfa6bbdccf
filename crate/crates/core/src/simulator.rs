//! Seeded discrete-event simulation of the status/forward/serve loop.
//!
//! The server emits a snapshot of its idle-thread count every `1/r_bar`
//! seconds; snapshots travel to the AP over an `Exp(gamma)` uplink. Tasks
//! reach the AP as a Poisson stream. The AP forwards a task iff its cached
//! snapshot shows an idle thread, the task crosses an `Exp(beta)` downlink,
//! and the server admits it iff a thread is actually free (no buffer).
//!
//! One run owns one ChaCha8 stream seeded from the 64-bit run seed, so a
//! given `(config, seed)` reproduces bit-identical [`SimStats`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{AnalyticError, SystemParams};

/// Simulated seconds of task arrivals per run.
pub const DEFAULT_HORIZON: f64 = 5000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] AnalyticError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ServiceModel {
    /// `Exp(mu)` holding times.
    #[default]
    Exponential,
    /// Every task holds its thread for exactly `1/mu`.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ForwardingRule {
    /// Forward iff the cached snapshot shows an idle thread.
    #[default]
    CacheGated,
    /// Forward every task; turns the server into a plain Erlang-loss system.
    AlwaysForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: SystemParams,
    /// Task arrivals and status generation stop at this time.
    pub horizon: f64,
    pub seed: u64,
    /// Run in-flight tasks to completion after the horizon.
    pub drain: bool,
    pub service: ServiceModel,
    pub forwarding: ForwardingRule,
}

impl SimConfig {
    pub fn new(params: SystemParams, horizon: f64, seed: u64) -> Result<Self> {
        let config = Self {
            params,
            horizon,
            seed,
            drain: true,
            service: ServiceModel::default(),
            forwarding: ForwardingRule::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon must be finite and positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Event payloads. Declaration order is the tie-break priority at equal
/// timestamps: capacity is freed before admissions, and snapshots are taken
/// after everything else at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    ServiceCompleted { task: u64 },
    TaskArrivedAtServer { task: u64 },
    StatusArrivedAtAp { generated_at: f64, idle: u32 },
    TaskArrivedAtAp { task: u64 },
    StatusGenerated,
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::ServiceCompleted { .. } => 0,
            EventKind::TaskArrivedAtServer { .. } => 1,
            EventKind::StatusArrivedAtAp { .. } => 2,
            EventKind::TaskArrivedAtAp { .. } => 3,
            EventKind::StatusGenerated => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug)]
struct Scheduled {
    event: Event,
    priority: u8,
    seq: u64,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .event
            .time
            .total_cmp(&self.event.time)
            .then_with(|| other.priority.cmp(&self.priority))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Time-ordered pending events with deterministic tie-breaking.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled {
            event: Event { time, kind },
            priority: kind.priority(),
            seq,
        });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|s| s.event)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ServerState {
    pub capacity: u32,
    pub idle_threads: u32,
}

impl ServerState {
    fn new(capacity: u32) -> Self {
        Self {
            capacity,
            idle_threads: capacity,
        }
    }

    /// Takes one thread. Returns `None` when every thread is busy, otherwise
    /// whether this admission exhausted the pool.
    fn admit(&mut self) -> Option<bool> {
        if self.idle_threads == 0 {
            return None;
        }
        self.idle_threads -= 1;
        Some(self.idle_threads == 0)
    }

    fn release(&mut self) {
        assert!(
            self.idle_threads < self.capacity,
            "service completion with no busy thread"
        );
        self.idle_threads += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApCache {
    pub cached_value: u32,
    pub cached_generation_time: f64,
}

impl ApCache {
    /// Overwrites the cache iff the snapshot is newer than the cached one.
    fn offer(&mut self, generated_at: f64, idle: u32) -> bool {
        if generated_at > self.cached_generation_time {
            self.cached_value = idle;
            self.cached_generation_time = generated_at;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SimCounters {
    pub n_arr: u64,
    pub n_fwd: u64,
    pub n_succ: u64,
    pub n_drop_ap: u64,
    pub n_block_server: u64,
    pub hazard_events: u64,
    pub status_generated: u64,
    pub status_refreshed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimStats {
    #[serde(flatten)]
    pub counters: SimCounters,
    /// Observation time used for rates, equal to the horizon.
    pub elapsed: f64,
}

impl SimStats {
    pub fn n_arr(&self) -> u64 {
        self.counters.n_arr
    }

    /// `N_succ / N_arr`; NaN when nothing arrived.
    pub fn empirical_p_succ(&self) -> f64 {
        ratio(self.counters.n_succ, self.counters.n_arr)
    }

    pub fn empirical_lambda(&self) -> f64 {
        self.counters.n_fwd as f64 / self.elapsed
    }

    pub fn empirical_hazard(&self) -> f64 {
        self.counters.hazard_events as f64 / self.elapsed
    }

    /// Fraction of server arrivals that found every thread busy.
    pub fn server_blocking(&self) -> f64 {
        ratio(self.counters.n_block_server, self.counters.n_fwd)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// State visible to an observer right after an event was handled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snapshot {
    pub idle_threads: u32,
    pub cache: ApCache,
    /// For `TaskArrivedAtAp`: whether the task was forwarded.
    pub forwarded: Option<bool>,
    /// For `TaskArrivedAtServer`: whether the task was admitted.
    pub admitted: Option<bool>,
}

pub trait Observer {
    fn on_event(&mut self, event: &Event, state: &Snapshot) -> Result<()>;
}

impl Observer for () {
    fn on_event(&mut self, _: &Event, _: &Snapshot) -> Result<()> {
        Ok(())
    }
}

/// Writes one JSON object per handled event.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    #[serde(flatten)]
    event: &'a Event,
    #[serde(flatten)]
    state: &'a Snapshot,
}

impl<W: Write> Observer for TraceWriter<W> {
    fn on_event(&mut self, event: &Event, state: &Snapshot) -> Result<()> {
        serde_json::to_writer(&mut self.out, &TraceLine { event, state })
            .map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

/// Inverse-transform exponential draw, `-ln(U)/rate` with `U` in `(0, 1]`.
fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

struct Engine {
    config: SimConfig,
    rng: ChaCha8Rng,
    queue: EventQueue,
    server: ServerState,
    cache: ApCache,
    counters: SimCounters,
    next_task: u64,
}

impl Engine {
    fn new(config: SimConfig) -> Self {
        let c = config.params.c_threads;
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            queue: EventQueue::new(),
            server: ServerState::new(c),
            cache: ApCache {
                cached_value: c,
                cached_generation_time: 0.0,
            },
            counters: SimCounters::default(),
            next_task: 0,
        }
    }

    fn service_time(&mut self) -> f64 {
        let mu = self.config.params.mu;
        match self.config.service {
            ServiceModel::Exponential => exponential(&mut self.rng, mu),
            ServiceModel::Deterministic => 1.0 / mu,
        }
    }

    fn run<O: Observer>(mut self, observer: &mut O) -> Result<SimStats> {
        let p = self.config.params;
        let horizon = self.config.horizon;
        let period = p.period();
        let mut generation_index: u64 = 0;

        self.queue.push(0.0, EventKind::StatusGenerated);
        let first = exponential(&mut self.rng, p.lambda_in);
        if first < horizon {
            self.queue.push(first, EventKind::TaskArrivedAtAp { task: 0 });
        }

        while let Some(event) = self.queue.pop() {
            let now = event.time;
            if !self.config.drain && now > horizon {
                break;
            }
            let mut snapshot_extra = (None, None);
            match event.kind {
                EventKind::StatusGenerated => {
                    self.counters.status_generated += 1;
                    let idle = self.server.idle_threads;
                    let delay = exponential(&mut self.rng, p.gamma);
                    self.queue.push(
                        now + delay,
                        EventKind::StatusArrivedAtAp { generated_at: now, idle },
                    );
                    generation_index += 1;
                    // Multiplying keeps generation instants free of drift.
                    let next = generation_index as f64 * period;
                    if next < horizon {
                        self.queue.push(next, EventKind::StatusGenerated);
                    }
                }
                EventKind::StatusArrivedAtAp { generated_at, idle } => {
                    if self.cache.offer(generated_at, idle) {
                        self.counters.status_refreshed += 1;
                    }
                }
                EventKind::TaskArrivedAtAp { task } => {
                    self.counters.n_arr += 1;
                    let forward = match self.config.forwarding {
                        ForwardingRule::CacheGated => self.cache.cached_value > 0,
                        ForwardingRule::AlwaysForward => true,
                    };
                    if forward {
                        self.counters.n_fwd += 1;
                        let delay = exponential(&mut self.rng, p.beta);
                        self.queue.push(now + delay, EventKind::TaskArrivedAtServer { task });
                    } else {
                        self.counters.n_drop_ap += 1;
                    }
                    snapshot_extra.0 = Some(forward);
                    self.next_task += 1;
                    let next = now + exponential(&mut self.rng, p.lambda_in);
                    if next < horizon {
                        self.queue.push(next, EventKind::TaskArrivedAtAp { task: self.next_task });
                    }
                }
                EventKind::TaskArrivedAtServer { task } => match self.server.admit() {
                    Some(exhausted) => {
                        if exhausted {
                            self.counters.hazard_events += 1;
                        }
                        let hold = self.service_time();
                        self.queue.push(now + hold, EventKind::ServiceCompleted { task });
                        snapshot_extra.1 = Some(true);
                    }
                    None => {
                        self.counters.n_block_server += 1;
                        snapshot_extra.1 = Some(false);
                    }
                },
                EventKind::ServiceCompleted { .. } => {
                    self.server.release();
                    self.counters.n_succ += 1;
                }
            }
            observer.on_event(
                &event,
                &Snapshot {
                    idle_threads: self.server.idle_threads,
                    cache: self.cache,
                    forwarded: snapshot_extra.0,
                    admitted: snapshot_extra.1,
                },
            )?;
        }

        Ok(SimStats {
            counters: self.counters,
            elapsed: horizon,
        })
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimStats> {
    run_simulation_observed(config, &mut ())
}

pub fn run_simulation_observed<O: Observer>(config: &SimConfig, observer: &mut O) -> Result<SimStats> {
    config.validate()?;
    Engine::new(*config).run(observer)
}

/// Sample moments of the gaps between AP arrivals of consecutively
/// generated status packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalStats {
    pub samples: usize,
    pub mean_gap: f64,
    pub second_moment_gap: f64,
    pub variance: f64,
}

/// Fewest gaps accepted by [`measure_interval_stats`].
pub const MIN_INTERVAL_SAMPLES: usize = 1000;

#[derive(Default)]
struct ArrivalLog {
    arrivals: Vec<(f64, f64)>,
}

impl Observer for ArrivalLog {
    fn on_event(&mut self, event: &Event, _: &Snapshot) -> Result<()> {
        if let EventKind::StatusArrivedAtAp { generated_at, .. } = event.kind {
            self.arrivals.push((generated_at, event.time));
        }
        Ok(())
    }
}

pub fn measure_interval_stats(config: &SimConfig) -> Result<IntervalStats> {
    let mut log = ArrivalLog::default();
    run_simulation_observed(config, &mut log)?;
    let mut arrivals = log.arrivals;
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gaps: Vec<f64> = arrivals.windows(2).map(|w| w[1].1 - w[0].1).collect();
    if gaps.len() < MIN_INTERVAL_SAMPLES {
        return Err(SimError::InsufficientData(format!(
            "{} inter-update gaps observed, need at least {MIN_INTERVAL_SAMPLES}",
            gaps.len()
        )));
    }
    let n = gaps.len() as f64;
    let mean_gap = gaps.iter().sum::<f64>() / n;
    let second_moment_gap = gaps.iter().map(|g| g * g).sum::<f64>() / n;
    Ok(IntervalStats {
        samples: gaps.len(),
        mean_gap,
        second_moment_gap,
        variance: second_moment_gap - mean_gap * mean_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use std::collections::HashMap;

    fn config(params: SystemParams, horizon: f64, seed: u64) -> SimConfig {
        SimConfig::new(params, horizon, seed).unwrap()
    }

    #[test]
    fn queue_orders_by_time_then_priority_then_insertion() {
        let mut q = EventQueue::new();
        q.push(1.0, EventKind::StatusGenerated);
        q.push(1.0, EventKind::TaskArrivedAtAp { task: 1 });
        q.push(1.0, EventKind::ServiceCompleted { task: 2 });
        q.push(0.5, EventKind::StatusGenerated);
        q.push(1.0, EventKind::TaskArrivedAtServer { task: 3 });
        q.push(1.0, EventKind::TaskArrivedAtServer { task: 4 });
        q.push(1.0, EventKind::StatusArrivedAtAp { generated_at: 0.9, idle: 1 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(order[0].time, 0.5);
        assert_eq!(order[1].kind, EventKind::ServiceCompleted { task: 2 });
        assert_eq!(order[2].kind, EventKind::TaskArrivedAtServer { task: 3 });
        assert_eq!(order[3].kind, EventKind::TaskArrivedAtServer { task: 4 });
        assert!(matches!(order[4].kind, EventKind::StatusArrivedAtAp { .. }));
        assert_eq!(order[5].kind, EventKind::TaskArrivedAtAp { task: 1 });
        assert_eq!(order[6].kind, EventKind::StatusGenerated);
        assert!(q.is_empty());
    }

    #[test]
    fn cache_keeps_newest_snapshot() {
        let mut cache = ApCache { cached_value: 2, cached_generation_time: 0.0 };
        assert!(cache.offer(0.10, 1));
        assert!(!cache.offer(0.05, 0));
        assert_eq!(cache.cached_value, 1);
        assert_eq!(cache.cached_generation_time, 0.10);
    }

    #[test]
    fn server_state_tracks_exhaustion() {
        let mut s = ServerState::new(2);
        assert_eq!(s.admit(), Some(false));
        assert_eq!(s.admit(), Some(true));
        assert_eq!(s.admit(), None);
        s.release();
        assert_eq!(s.idle_threads, 1);
    }

    #[test]
    #[should_panic(expected = "no busy thread")]
    fn releasing_idle_server_is_a_bug() {
        ServerState::new(1).release();
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SimConfig::new(SystemParams::default(), 0.0, 1).is_err());
        assert!(SimConfig::new(SystemParams::default(), f64::NAN, 1).is_err());
        let bad = SystemParams { mu: 0.0, ..SystemParams::default() };
        assert!(matches!(SimConfig::new(bad, 10.0, 1), Err(SimError::Params(_))));
    }

    #[test]
    fn conservation_and_determinism() {
        let cfg = config(SystemParams::default(), 500.0, 11);
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a, b);
        let c = a.counters;
        assert_eq!(c.n_arr, c.n_fwd + c.n_drop_ap);
        assert_eq!(c.n_fwd, c.n_succ + c.n_block_server);
        assert_eq!(c.status_generated, 10_000);

        let other = run_simulation(&config(SystemParams::default(), 500.0, 12)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn strict_cutoff_leaves_tasks_in_flight() {
        let mut cfg = config(SystemParams::default(), 200.0, 3);
        cfg.drain = false;
        let s = run_simulation(&cfg).unwrap().counters;
        assert_eq!(s.n_arr, s.n_fwd + s.n_drop_ap);
        assert!(s.n_fwd >= s.n_succ + s.n_block_server);
    }

    #[test]
    fn near_zero_load_always_succeeds() {
        let p = SystemParams { lambda_in: 0.01, ..SystemParams::default() };
        let s = run_simulation(&config(p, 20_000.0, 5)).unwrap();
        assert!(s.n_arr() > 100);
        assert!(s.empirical_p_succ() > 0.99);
    }

    // With instant gating a single-thread server only sees arrivals while
    // idle, so it is idle a fraction mu/(lambda_in + mu) of the time and
    // every forwarded task succeeds.
    #[test]
    fn fresh_information_single_thread_is_exact() {
        let p = SystemParams {
            lambda_in: 30.0,
            mu: 30.0,
            c_threads: 1,
            r_bar: 1e5,
            gamma: 1e8,
            beta: 1e8,
        };
        let s = run_simulation(&config(p, 1000.0, 9)).unwrap();
        assert!((s.empirical_p_succ() - 0.5).abs() < 0.01, "{}", s.empirical_p_succ());
        assert!(s.counters.n_block_server * 1000 < s.counters.n_fwd);
        let report = analytic::analyze(&p).unwrap();
        assert!(s.empirical_p_succ() <= report.upper);
    }

    #[test]
    fn tiny_horizon_gives_tiny_counts() {
        let s = run_simulation(&config(SystemParams::default(), 0.001, 1)).unwrap();
        assert!(s.n_arr() <= 2);
        assert_eq!(s.counters.status_generated, 1);
    }

    struct StalenessProbe {
        truth: HashMap<u64, u32>,
        decisions: usize,
        mismatches: usize,
    }

    impl Observer for StalenessProbe {
        fn on_event(&mut self, event: &Event, state: &Snapshot) -> Result<()> {
            match event.kind {
                EventKind::StatusGenerated => {
                    self.truth.insert(event.time.to_bits(), state.idle_threads);
                }
                EventKind::TaskArrivedAtAp { .. } => {
                    self.decisions += 1;
                    let key = state.cache.cached_generation_time.to_bits();
                    let forwarded = state.forwarded.unwrap();
                    if self.truth.get(&key) != Some(&state.cache.cached_value)
                        || forwarded != (state.cache.cached_value > 0)
                    {
                        self.mismatches += 1;
                    }
                }
                _ => {}
            }
            Ok(())
        }
    }

    #[test]
    fn cached_value_is_the_snapshot_taken_at_generation() {
        let mut probe = StalenessProbe { truth: HashMap::new(), decisions: 0, mismatches: 0 };
        run_simulation_observed(&config(SystemParams::default(), 300.0, 4), &mut probe).unwrap();
        assert!(probe.decisions > 10_000);
        assert_eq!(probe.mismatches, 0);
    }

    #[test]
    fn trace_emits_one_json_line_per_event() {
        let mut trace = TraceWriter::new(Vec::new());
        run_simulation_observed(&config(SystemParams::default(), 0.2, 2), &mut trace).unwrap();
        let text = String::from_utf8(trace.into_inner()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(!lines.is_empty());
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["kind"], "StatusGenerated");
        assert_eq!(first["time"], 0.0);
        assert_eq!(first["idle_threads"], 2);
        for line in lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["time"].is_number());
        }
    }

    #[test]
    fn interval_moments_match_jitter_model() {
        let cfg = config(SystemParams::default(), 2000.0, 21);
        let stats = measure_interval_stats(&cfg).unwrap();
        let m = analytic::gap_moments(&cfg.params).unwrap();
        assert!(stats.samples > 39_000);
        // Gap sums telescope, so the mean is very tight.
        assert!((stats.mean_gap - m.mean_gap).abs() < 1e-4, "{}", stats.mean_gap);
        assert!((stats.second_moment_gap - m.second_moment_gap).abs() < 5e-5);
    }

    #[test]
    fn interval_variance_vanishes_with_fast_uplink() {
        let p = SystemParams { gamma: 1e7, ..SystemParams::default() };
        let stats = measure_interval_stats(&config(p, 100.0, 1)).unwrap();
        assert!(stats.variance < 1e-12);
    }

    #[test]
    fn interval_stats_need_enough_updates() {
        let err = measure_interval_stats(&config(SystemParams::default(), 10.0, 1)).unwrap_err();
        assert!(matches!(err, SimError::InsufficientData(_)));
    }
}
