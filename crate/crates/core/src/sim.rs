//! Seeded multi-replication simulation and policy comparison.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{conservation_residual, stage_cost, Dynamics, SlotEvents, SystemConfig, SystemState};
use crate::oracle::mean_stderr;
use crate::policy::{Dispatcher, PolicyKind};
use crate::rng::RandomStreams;
use crate::valuefn::{BaselinePolicy, ValueOptions, ValueTables};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub config: SystemConfig,
    pub policy: PolicyKind,
    pub slots: usize,
    pub replications: usize,
    pub seed: u64,
    /// Leading slots left out of the trace, CDF and per-slot means.
    pub warmup: usize,
    pub value_options: ValueOptions,
    /// Baseline of the proposed policy; shortest computation time when absent.
    pub baseline: Option<BaselinePolicy>,
    /// Record the wall-clock time of every decision.
    pub record_latency: bool,
}

impl RunSpec {
    pub fn new(config: SystemConfig, policy: PolicyKind) -> Self {
        RunSpec {
            config,
            policy,
            slots: 10_000,
            replications: 50,
            seed: 0,
            warmup: 0,
            value_options: ValueOptions::default(),
            baseline: None,
            record_latency: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.slots == 0 || self.replications == 0 {
            return Err(Error::config("slots and replications must be at least 1"));
        }
        if self.warmup >= self.slots {
            return Err(Error::config("warmup must be shorter than the run"));
        }
        Ok(())
    }

    fn baseline(&self) -> BaselinePolicy {
        self.baseline.clone().unwrap_or_else(|| BaselinePolicy::scf(&self.config))
    }

    fn needs_tables(&self) -> bool {
        matches!(self.policy, PolicyKind::Proposed { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub cost: f64,
    pub cum_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: String,
    pub slots: usize,
    pub warmup: usize,
    pub seed: u64,
    /// `[replication][slot]` stage costs after warmup.
    pub traces: Vec<Vec<f64>>,
    /// `sum_t gamma^(t-1) trace_t` per replication.
    pub discounted_totals: Vec<f64>,
    /// Mean stage cost per replication.
    pub replication_means: Vec<f64>,
    pub mean_cost: f64,
    pub stderr: f64,
    pub cdf: Vec<CdfPoint>,
    pub arrivals: u64,
    pub overflow_drops: u64,
    pub in_flight_drops: u64,
    pub completed_jobs: u64,
    /// Mean slots from arrival at the AP to the end of computation.
    pub mean_sojourn: Option<f64>,
    pub ce_fallbacks: u64,
    /// Decision wall-clock times in seconds, when recorded.
    pub latencies: Vec<f64>,
}

impl RunMetrics {
    pub fn median_latency(&self) -> Option<f64> {
        median(&self.latencies)
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Empirical CDF over the distinct values of `samples`.
pub fn empirical_cdf(samples: impl Iterator<Item = f64>) -> Vec<CdfPoint> {
    let mut v: Vec<f64> = samples.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let cum_prob = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.cost == x => last.cum_prob = cum_prob,
            _ => out.push(CdfPoint { cost: x, cum_prob }),
        }
    }
    out
}

/// Builds the dispatcher a spec asks for.
pub fn build_dispatcher(spec: &RunSpec) -> Result<Dispatcher> {
    let tables = if spec.needs_tables() {
        Some(Arc::new(ValueTables::new(&spec.config, &spec.baseline(), spec.value_options)?))
    } else {
        None
    };
    Dispatcher::new(spec.policy, &spec.config, tables)
}

pub fn run(spec: &RunSpec) -> Result<RunMetrics> {
    spec.validate()?;
    let dispatcher = build_dispatcher(spec)?;
    run_with(spec, &dispatcher)
}

/// Runs `spec` with a prepared dispatcher; replications run in parallel.
pub fn run_with(spec: &RunSpec, dispatcher: &Dispatcher) -> Result<RunMetrics> {
    spec.validate()?;
    let dynamics = Dynamics::new(spec.config.clone())?;
    let reps: Vec<Replication> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| simulate_replication(spec, &dynamics, dispatcher, rep as u64))
        .collect();

    let gamma = spec.config.discount;
    let discounted_totals = reps
        .iter()
        .map(|r| {
            let mut discount = 1.0;
            let mut total = 0.0;
            for &c in &r.trace {
                total += discount * c;
                discount *= gamma;
            }
            total
        })
        .collect();
    let replication_means: Vec<f64> = reps.iter().map(|r| r.trace.iter().sum::<f64>() / r.trace.len() as f64).collect();
    let (mean_cost, stderr) = mean_stderr(&replication_means);
    let cdf = empirical_cdf(reps.iter().flat_map(|r| r.trace.iter().cloned()));
    let completed_jobs: u64 = reps.iter().map(|r| r.completed).sum();
    let sojourn_total: u64 = reps.iter().map(|r| r.sojourn_total).sum();
    Ok(RunMetrics {
        policy: spec.policy.name().to_string(),
        slots: spec.slots,
        warmup: spec.warmup,
        seed: spec.seed,
        discounted_totals,
        replication_means,
        mean_cost,
        stderr,
        cdf,
        arrivals: reps.iter().map(|r| r.arrivals).sum(),
        overflow_drops: reps.iter().map(|r| r.overflow_drops).sum(),
        in_flight_drops: reps.iter().map(|r| r.in_flight_drops).sum(),
        completed_jobs,
        mean_sojourn: (completed_jobs > 0).then(|| sojourn_total as f64 / completed_jobs as f64),
        ce_fallbacks: reps.iter().map(|r| r.ce_fallbacks).sum(),
        latencies: reps.iter().flat_map(|r| r.latencies.iter().cloned()).collect(),
        traces: reps.into_iter().map(|r| r.trace).collect(),
    })
}

struct Replication {
    trace: Vec<f64>,
    arrivals: u64,
    overflow_drops: u64,
    in_flight_drops: u64,
    completed: u64,
    sojourn_total: u64,
    ce_fallbacks: u64,
    latencies: Vec<f64>,
}

fn simulate_replication(spec: &RunSpec, dynamics: &Dynamics, dispatcher: &Dispatcher, rep: u64) -> Replication {
    let cfg = &spec.config;
    let mut streams = RandomStreams::new(spec.seed, rep);
    let mut state = SystemState::empty(cfg);
    let mut tracker = JobTracker::new(cfg);
    let mut out = Replication {
        trace: Vec::with_capacity(spec.slots - spec.warmup),
        arrivals: 0,
        overflow_drops: 0,
        in_flight_drops: 0,
        completed: 0,
        sojourn_total: 0,
        ce_fallbacks: 0,
        latencies: Vec::new(),
    };
    for t in 0..spec.slots {
        if t >= spec.warmup {
            out.trace.push(stage_cost(cfg, &state));
        }
        let started = spec.record_latency.then(Instant::now);
        let (action, reports) = dispatcher.decide_with_reports(&state, &mut streams.policy);
        if let Some(start) = started {
            out.latencies.push(start.elapsed().as_secs_f64());
        }
        out.ce_fallbacks += reports.iter().filter(|r| r.ce_fallback).count() as u64;
        let (next, events) = dynamics.step(&state, &action, &mut streams);
        let residual = conservation_residual(&state, &next, &events);
        assert_eq!(residual, 0, "job conservation violated at slot {t} of replication {rep}");
        tracker.advance(t as u64, &action.routes, &events, &mut streams.bookkeeping);
        debug_assert!(tracker.matches(&next));
        out.arrivals += events.total_arrivals() as u64;
        out.overflow_drops += events.total_overflow_drops() as u64;
        out.in_flight_drops += events.total_in_flight_drops() as u64;
        state = next;
    }
    out.completed = tracker.completed;
    out.sojourn_total = tracker.sojourn_total;
    out
}

/// Arrival slots of individual jobs, for sojourn accounting. Which in-flight
/// job of a link completes is drawn uniformly, which matches memoryless
/// uploads; overflowing arrivals are dropped from the tail.
struct JobTracker {
    num_servers: usize,
    /// `[j][k * M + m]`
    in_flight: Vec<Vec<Vec<u64>>>,
    /// `[j][m]`
    queues: Vec<Vec<VecDeque<u64>>>,
    completed: u64,
    sojourn_total: u64,
}

impl JobTracker {
    fn new(cfg: &SystemConfig) -> Self {
        let links = cfg.num_aps * cfg.num_servers;
        JobTracker {
            num_servers: cfg.num_servers,
            in_flight: vec![vec![Vec::new(); links]; cfg.num_types],
            queues: vec![vec![VecDeque::new(); cfg.num_servers]; cfg.num_types],
            completed: 0,
            sojourn_total: 0,
        }
    }

    fn advance<R: Rng>(&mut self, t: u64, routes: &[Vec<usize>], events: &SlotEvents, rng: &mut R) {
        let m_n = self.num_servers;
        for (j, ev) in events.types.iter().enumerate() {
            let mut landed: Vec<Vec<u64>> = vec![Vec::new(); m_n];
            for (link, jobs) in self.in_flight[j].iter_mut().enumerate() {
                for _ in 0..ev.upload_completions[link] {
                    let pick = rng.random_range(0..jobs.len());
                    landed[link % m_n].push(jobs.swap_remove(pick));
                }
            }
            for (k, &arrived) in ev.arrivals.iter().enumerate() {
                if arrived && ev.in_flight_drops[k] == 0 {
                    self.in_flight[j][k * m_n + routes[j][k]].push(t);
                }
            }
            for (m, queue) in self.queues[j].iter_mut().enumerate() {
                if ev.departures[m] {
                    let arrival = queue.pop_front().expect("departure from an empty queue");
                    self.completed += 1;
                    self.sojourn_total += t - arrival + 1;
                }
                let keep = landed[m].len() - ev.overflow_drops[m] as usize;
                queue.extend(landed[m].drain(..).take(keep));
            }
        }
    }

    fn matches(&self, state: &SystemState) -> bool {
        state.types.iter().enumerate().all(|(j, ts)| {
            ts.in_flight.iter().zip(&self.in_flight[j]).all(|(&n, jobs)| n as usize == jobs.len())
                && ts.queues.iter().zip(&self.queues[j]).all(|(q, jobs)| q.len as usize == jobs.len())
        })
    }
}

/// Paired comparison of two policies on common random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub first: String,
    pub second: String,
    /// Mean of `first - second` per-replication mean costs.
    pub mean_diff: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The 95% interval excludes zero.
    pub significant: bool,
}

pub fn paired_difference(a: &RunMetrics, b: &RunMetrics) -> PairedDifference {
    let diffs: Vec<f64> = a.replication_means.iter().zip(&b.replication_means).map(|(x, y)| x - y).collect();
    let (mean_diff, stderr) = mean_stderr(&diffs);
    let half = if diffs.len() > 1 && stderr > 0.0 {
        let t = StudentsT::new(0.0, 1.0, (diffs.len() - 1) as f64).expect("positive degrees of freedom");
        t.inverse_cdf(0.975) * stderr
    } else {
        0.0
    };
    let (ci_low, ci_high) = (mean_diff - half, mean_diff + half);
    PairedDifference {
        first: a.policy.clone(),
        second: b.policy.clone(),
        mean_diff,
        stderr,
        ci_low,
        ci_high,
        significant: ci_low > 0.0 || ci_high < 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<RunMetrics>,
    /// Every ordered pair `(i, j)` with `i < j`.
    pub differences: Vec<PairedDifference>,
}

impl Comparison {
    pub fn run(&self, policy: &str) -> Option<&RunMetrics> {
        self.runs.iter().find(|r| r.policy == policy)
    }

    pub fn difference(&self, first: &str, second: &str) -> Option<PairedDifference> {
        Some(paired_difference(self.run(first)?, self.run(second)?))
    }
}

/// Runs every spec on common random numbers. All specs must share the
/// configuration, horizon, replication count, warmup and seed.
pub fn compare(specs: &[RunSpec]) -> Result<Comparison> {
    let first = specs.first().ok_or_else(|| Error::config("nothing to compare"))?;
    for s in specs {
        s.validate()?;
        if s.config != first.config
            || s.slots != first.slots
            || s.replications != first.replications
            || s.warmup != first.warmup
            || s.seed != first.seed
        {
            return Err(Error::config("compared runs must share config, slots, replications, warmup and seed"));
        }
    }
    let mut shared: Vec<(ValueOptions, BaselinePolicy, Arc<ValueTables>)> = Vec::new();
    let mut runs = Vec::with_capacity(specs.len());
    for s in specs {
        let tables = if s.needs_tables() {
            let baseline = s.baseline();
            let found = shared.iter().find(|(o, b, _)| *o == s.value_options && *b == baseline).map(|x| x.2.clone());
            Some(match found {
                Some(t) => t,
                None => {
                    let t = Arc::new(ValueTables::new(&s.config, &baseline, s.value_options)?);
                    shared.push((s.value_options, baseline, t.clone()));
                    t
                }
            })
        } else {
            None
        };
        let dispatcher = Dispatcher::new(s.policy, &s.config, tables)?;
        log::info!("simulating {} ({} x {} slots)", s.policy, s.replications, s.slots);
        runs.push(run_with(s, &dispatcher)?);
    }
    let mut differences = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            differences.push(paired_difference(&runs[i], &runs[j]));
        }
    }
    Ok(Comparison { runs, differences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ExpectationMode;

    fn small_cfg(lambda: f64) -> SystemConfig {
        SystemConfig {
            num_aps: 2,
            num_servers: 2,
            num_types: 2,
            arrival_prob: vec![vec![lambda; 2]; 2],
            mean_upload_delay: vec![vec![vec![2.0, 3.0]; 2]; 2],
            comp_time_pmf: vec![vec![vec![0.5, 0.5]; 2], vec![vec![0.2, 0.8]; 2]],
            discount: 0.95,
            overflow_weight: 10.0,
            n_max: 2,
            l_max: 3,
            eta_max: 2,
        }
    }

    fn spec(lambda: f64, policy: PolicyKind) -> RunSpec {
        RunSpec { slots: 300, replications: 4, seed: 11, ..RunSpec::new(small_cfg(lambda), policy) }
    }

    #[test]
    fn zero_arrivals_give_zero_metrics() {
        let m = run(&spec(0.0, PolicyKind::Random)).unwrap();
        assert!(m.traces.iter().flatten().all(|&c| c == 0.0));
        assert_eq!(m.mean_cost, 0.0);
        assert_eq!(m.arrivals, 0);
        assert_eq!(m.cdf, vec![CdfPoint { cost: 0.0, cum_prob: 1.0 }]);
        assert_eq!(m.mean_sojourn, None);
    }

    #[test]
    fn runs_are_reproducible() {
        let s = spec(0.3, PolicyKind::proposed(ExpectationMode::CertaintyEquivalent));
        assert_eq!(run(&s).unwrap(), run(&s).unwrap());
        let r = spec(0.3, PolicyKind::Random);
        assert_eq!(run(&r).unwrap(), run(&r).unwrap());
    }

    #[test]
    fn discounted_total_matches_trace() {
        let m = run(&spec(0.3, PolicyKind::Sqf)).unwrap();
        for (trace, &total) in m.traces.iter().zip(&m.discounted_totals) {
            let direct: f64 = trace.iter().enumerate().map(|(t, c)| 0.95f64.powi(t as i32) * c).sum();
            assert!((direct - total).abs() < 1e-9 * total.max(1.0));
        }
        assert!(m.mean_sojourn.unwrap() >= 2.0);
    }

    #[test]
    fn warmup_trims_leading_slots() {
        let full = run(&spec(0.3, PolicyKind::Scf)).unwrap();
        let trimmed = run(&RunSpec { warmup: 100, ..spec(0.3, PolicyKind::Scf) }).unwrap();
        for (a, b) in full.traces.iter().zip(&trimmed.traces) {
            assert_eq!(b.len(), 200);
            assert_eq!(&a[100..], &b[..]);
        }
    }

    #[test]
    fn cdf_matches_recount() {
        let m = run(&spec(0.4, PolicyKind::Suf)).unwrap();
        let all: Vec<f64> = m.traces.iter().flatten().cloned().collect();
        let mut prev = 0.0;
        for p in &m.cdf {
            let below = all.iter().filter(|&&c| c <= p.cost).count() as f64 / all.len() as f64;
            assert!((below - p.cum_prob).abs() < 1e-12);
            assert!(p.cum_prob >= prev);
            prev = p.cum_prob;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn self_comparison_is_zero() {
        let c = compare(&[spec(0.3, PolicyKind::Sqf), spec(0.3, PolicyKind::Sqf)]).unwrap();
        assert_eq!(c.differences[0].mean_diff, 0.0);
        assert!(!c.differences[0].significant);
    }

    #[test]
    fn mismatched_specs_are_rejected() {
        let mut other = spec(0.3, PolicyKind::Scf);
        other.seed = 12;
        assert!(compare(&[spec(0.3, PolicyKind::Sqf), other]).is_err());
    }

    #[test]
    fn arrivals_use_common_random_numbers() {
        let a = run(&spec(0.3, PolicyKind::Sqf)).unwrap();
        let b = run(&spec(0.3, PolicyKind::Random)).unwrap();
        assert_eq!(a.arrivals, b.arrivals);
    }
}
