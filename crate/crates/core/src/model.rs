//! System parameters, MDP state, and the exact slot dynamics.
//!
//! Indices are zero-based throughout: APs `k in 0..K`, servers `m in 0..M`,
//! job types `j in 0..J`. Computation-time PMFs are stored with entry `x - 1`
//! holding the probability of `x` slots.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStreams;

/// Job counter type used inside states.
pub type Count = u16;

const PMF_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_servers: usize,
    pub num_types: usize,
    /// `[k][j]`, per-slot Bernoulli arrival probability.
    pub arrival_prob: Vec<Vec<f64>>,
    /// `[k][j][m]`, mean of the geometric upload delay in slots.
    pub mean_upload_delay: Vec<Vec<Vec<f64>>>,
    /// `[m][j][x - 1]`, computation-time PMF over `1..=eta_max`.
    pub comp_time_pmf: Vec<Vec<Vec<f64>>>,
    pub discount: f64,
    pub overflow_weight: f64,
    pub n_max: usize,
    pub l_max: usize,
    pub eta_max: usize,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let (k_n, m_n, j_n) = (self.num_aps, self.num_servers, self.num_types);
        if k_n == 0 || m_n == 0 || j_n == 0 {
            return Err(Error::config("num_aps, num_servers and num_types must be positive"));
        }
        if self.n_max == 0 || self.l_max == 0 || self.eta_max == 0 {
            return Err(Error::config("n_max, l_max and eta_max must be positive"));
        }
        if self.n_max > Count::MAX as usize || self.l_max > Count::MAX as usize || self.eta_max > Count::MAX as usize {
            return Err(Error::config("caps exceed the supported counter range"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config(format!("discount must lie in (0, 1), got {}", self.discount)));
        }
        if !(self.overflow_weight >= 0.0) || !self.overflow_weight.is_finite() {
            return Err(Error::config("overflow_weight must be a finite non-negative number"));
        }
        if self.arrival_prob.len() != k_n {
            return Err(Error::config(format!("arrival_prob must have {k_n} rows (one per AP)")));
        }
        for (k, row) in self.arrival_prob.iter().enumerate() {
            if row.len() != j_n {
                return Err(Error::config(format!("arrival_prob[{k}] must have {j_n} entries")));
            }
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config(format!("arrival_prob[{k}][{j}] = {p} is not a probability")));
                }
            }
        }
        if self.mean_upload_delay.len() != k_n {
            return Err(Error::config(format!("mean_upload_delay must have {k_n} rows")));
        }
        for (k, per_type) in self.mean_upload_delay.iter().enumerate() {
            if per_type.len() != j_n {
                return Err(Error::config(format!("mean_upload_delay[{k}] must have {j_n} entries")));
            }
            for (j, per_server) in per_type.iter().enumerate() {
                if per_server.len() != m_n {
                    return Err(Error::config(format!("mean_upload_delay[{k}][{j}] must have {m_n} entries")));
                }
                for (m, &u) in per_server.iter().enumerate() {
                    if !(u >= 1.0) || !u.is_finite() {
                        return Err(Error::config(format!(
                            "mean_upload_delay[{k}][{j}][{m}] = {u} must be a finite value >= 1"
                        )));
                    }
                }
            }
        }
        if self.comp_time_pmf.len() != m_n {
            return Err(Error::config(format!("comp_time_pmf must have {m_n} rows (one per server)")));
        }
        for (m, per_type) in self.comp_time_pmf.iter().enumerate() {
            if per_type.len() != j_n {
                return Err(Error::config(format!("comp_time_pmf[{m}] must have {j_n} entries")));
            }
            for (j, pmf) in per_type.iter().enumerate() {
                if pmf.len() != self.eta_max {
                    return Err(Error::config(format!(
                        "comp_time_pmf[{m}][{j}] must have eta_max = {} entries",
                        self.eta_max
                    )));
                }
                if pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::config(format!("comp_time_pmf[{m}][{j}] has an entry outside [0, 1]")));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > PMF_TOLERANCE {
                    return Err(Error::config(format!("comp_time_pmf[{m}][{j}] sums to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Per-slot upload completion probability `1 / U`.
    pub fn completion_prob(&self, k: usize, j: usize, m: usize) -> f64 {
        1.0 / self.mean_upload_delay[k][j][m]
    }

    pub fn comp_pmf(&self, m: usize, j: usize) -> &[f64] {
        &self.comp_time_pmf[m][j]
    }

    pub fn mean_comp_time(&self, m: usize, j: usize) -> f64 {
        self.comp_time_pmf[m][j].iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// Dimension of the per-server queue chain, `l_max * eta_max + 1`.
    pub fn queue_dim(&self) -> usize {
        self.l_max * self.eta_max + 1
    }

    /// Number of per-type states, `(n_max+1)^(K M) (l_max eta_max + 1)^M`.
    pub fn type_state_count(&self) -> u128 {
        let upload = (self.n_max as u128 + 1).saturating_pow((self.num_aps * self.num_servers) as u32);
        let queue = (self.queue_dim() as u128).saturating_pow(self.num_servers as u32);
        upload.saturating_mul(queue)
    }

    /// Size of the full MDP state space.
    pub fn state_count(&self) -> u128 {
        self.type_state_count().saturating_pow(self.num_types as u32)
    }

    /// Largest possible stage cost.
    pub fn max_stage_cost(&self) -> f64 {
        let per_type = (self.num_aps * self.num_servers * self.n_max) as f64
            + self.num_servers as f64 * (self.l_max as f64 + self.overflow_weight);
        per_type * self.num_types as f64
    }
}

/// Queue length and remaining slots of the head-of-line job at one VM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueueState {
    pub len: Count,
    pub remaining: Count,
}

impl QueueState {
    pub const IDLE: QueueState = QueueState { len: 0, remaining: 0 };

    pub fn new(len: usize, remaining: usize) -> Self {
        QueueState { len: len as Count, remaining: remaining as Count }
    }

    pub fn is_valid(&self, l_max: usize, eta_max: usize) -> bool {
        let (len, rem) = (self.len as usize, self.remaining as usize);
        if len > l_max || rem > eta_max {
            return false;
        }
        (len == 0) == (rem == 0)
    }

    /// Position in the queue chain: `0` when idle, `eta + (L - 1) eta_max` otherwise.
    pub fn index(&self, eta_max: usize) -> usize {
        if self.len == 0 {
            0
        } else {
            self.remaining as usize + (self.len as usize - 1) * eta_max
        }
    }

    pub fn from_index(index: usize, eta_max: usize) -> Self {
        if index == 0 {
            QueueState::IDLE
        } else {
            let len = (index - 1) / eta_max + 1;
            let remaining = index - (len - 1) * eta_max;
            QueueState::new(len, remaining)
        }
    }
}

/// What happens to the head-of-line job in the next slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Service {
    Continue(Count),
    Idle,
    /// A new job starts; its computation time is drawn from the PMF.
    Redraw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct QueueStep {
    pub len: usize,
    pub departed: bool,
    pub overflow: usize,
    pub service: Service,
}

/// Applies one slot of queue dynamics with `landed` uploads joining the queue.
pub(crate) fn advance_queue(q: QueueState, landed: usize, l_max: usize) -> QueueStep {
    let departed = q.remaining == 1;
    let raw = q.len as usize - usize::from(departed) + landed;
    let len = raw.min(l_max);
    let service = if q.remaining >= 2 {
        Service::Continue(q.remaining - 1)
    } else if len == 0 {
        Service::Idle
    } else {
        Service::Redraw
    };
    QueueStep { len, departed, overflow: raw - len, service }
}

/// Successor queue states of `q` given `landed` arrivals, with probabilities.
pub(crate) fn queue_successors(q: QueueState, landed: usize, l_max: usize, pmf: &[f64]) -> Vec<(QueueState, f64)> {
    let step = advance_queue(q, landed, l_max);
    match step.service {
        Service::Continue(rem) => vec![(QueueState { len: step.len as Count, remaining: rem }, 1.0)],
        Service::Idle => vec![(QueueState::IDLE, 1.0)],
        Service::Redraw => pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (QueueState::new(step.len, i + 1), p))
            .collect(),
    }
}

/// `Binomial(n, p)` probabilities for `0..=n`.
pub(crate) fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut coeff = 1.0_f64;
    for i in 0..=n {
        if i > 0 {
            coeff = coeff * (n - i + 1) as f64 / i as f64;
        }
        out.push(coeff * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32));
    }
    out
}

/// State slice of one job type: in-flight counts and per-server queues.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeState {
    /// Indexed `k * M + m`.
    pub in_flight: Vec<Count>,
    /// Indexed by server.
    pub queues: Vec<QueueState>,
}

impl TypeState {
    pub fn empty(num_aps: usize, num_servers: usize) -> Self {
        TypeState { in_flight: vec![0; num_aps * num_servers], queues: vec![QueueState::IDLE; num_servers] }
    }

    pub fn in_flight(&self, k: usize, m: usize) -> usize {
        let num_servers = self.queues.len();
        self.in_flight[k * num_servers + m] as usize
    }

    pub fn set_in_flight(&mut self, k: usize, m: usize, n: usize) {
        let num_servers = self.queues.len();
        self.in_flight[k * num_servers + m] = n as Count;
    }

    pub fn is_valid(&self, cfg: &SystemConfig) -> bool {
        self.in_flight.len() == cfg.num_aps * cfg.num_servers
            && self.queues.len() == cfg.num_servers
            && self.in_flight.iter().all(|&n| n as usize <= cfg.n_max)
            && self.queues.iter().all(|q| q.is_valid(cfg.l_max, cfg.eta_max))
    }

    pub fn total_in_flight(&self) -> usize {
        self.in_flight.iter().map(|&n| n as usize).sum()
    }

    pub fn total_queued(&self) -> usize {
        self.queues.iter().map(|q| q.len as usize).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    /// Indexed by job type.
    pub types: Vec<TypeState>,
}

impl SystemState {
    pub fn empty(cfg: &SystemConfig) -> Self {
        SystemState { types: vec![TypeState::empty(cfg.num_aps, cfg.num_servers); cfg.num_types] }
    }

    pub fn in_flight(&self, k: usize, j: usize, m: usize) -> usize {
        self.types[j].in_flight(k, m)
    }

    pub fn queue(&self, m: usize, j: usize) -> QueueState {
        self.types[j].queues[m]
    }

    pub fn is_valid(&self, cfg: &SystemConfig) -> bool {
        self.types.len() == cfg.num_types && self.types.iter().all(|t| t.is_valid(cfg))
    }
}

/// Server choice per (AP, type), stored per type: `routes[j][k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DispatchAction {
    pub routes: Vec<Vec<usize>>,
}

impl DispatchAction {
    pub fn uniform(cfg: &SystemConfig, server: usize) -> Self {
        DispatchAction { routes: vec![vec![server; cfg.num_aps]; cfg.num_types] }
    }

    pub fn route(&self, k: usize, j: usize) -> usize {
        self.routes[j][k]
    }

    pub fn is_valid(&self, cfg: &SystemConfig) -> bool {
        self.routes.len() == cfg.num_types
            && self.routes.iter().all(|r| r.len() == cfg.num_aps && r.iter().all(|&m| m < cfg.num_servers))
    }
}

/// Realized randomness of one slot for one job type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeEvents {
    /// Per AP.
    pub arrivals: Vec<bool>,
    /// Per `k * M + m`; drawn against the slot-start in-flight count.
    pub upload_completions: Vec<Count>,
    /// Per server: computation time drawn for a job that starts service.
    pub comp_redraws: Vec<Option<Count>>,
    /// Per server: whether the head-of-line job finished this slot.
    pub departures: Vec<bool>,
    /// Per server: uploads that found the queue full.
    pub overflow_drops: Vec<Count>,
    /// Per AP: dispatches refused because the link was at `n_max`.
    pub in_flight_drops: Vec<Count>,
}

impl TypeEvents {
    pub fn dispatched(&self) -> usize {
        self.arrivals.iter().filter(|&&a| a).count()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotEvents {
    pub types: Vec<TypeEvents>,
}

impl SlotEvents {
    pub fn total_arrivals(&self) -> usize {
        self.types.iter().map(TypeEvents::dispatched).sum()
    }

    pub fn total_departures(&self) -> usize {
        self.types.iter().map(|t| t.departures.iter().filter(|&&d| d).count()).sum()
    }

    pub fn total_overflow_drops(&self) -> usize {
        self.types.iter().flat_map(|t| t.overflow_drops.iter()).map(|&d| d as usize).sum()
    }

    pub fn total_in_flight_drops(&self) -> usize {
        self.types.iter().flat_map(|t| t.in_flight_drops.iter()).map(|&d| d as usize).sum()
    }
}

/// `arrivals - (d in_flight + d queued + departures + drops)`; zero when jobs are conserved.
pub fn conservation_residual(before: &SystemState, after: &SystemState, events: &SlotEvents) -> i64 {
    let count =
        |s: &SystemState| -> i64 { s.types.iter().map(|t| (t.total_in_flight() + t.total_queued()) as i64).sum() };
    events.total_arrivals() as i64
        - (count(after) - count(before))
        - events.total_departures() as i64
        - events.total_overflow_drops() as i64
        - events.total_in_flight_drops() as i64
}

/// Stage cost of one type: in-flight jobs plus queued jobs plus the overflow penalty.
pub fn stage_cost_type(cfg: &SystemConfig, state: &TypeState) -> f64 {
    let queued: f64 = state
        .queues
        .iter()
        .map(|q| {
            let full = if q.len as usize == cfg.l_max { cfg.overflow_weight } else { 0.0 };
            q.len as f64 + full
        })
        .sum();
    state.total_in_flight() as f64 + queued
}

pub fn stage_cost(cfg: &SystemConfig, state: &SystemState) -> f64 {
    state.types.iter().map(|t| stage_cost_type(cfg, t)).sum()
}

/// Stochastic slot dynamics bound to one configuration.
#[derive(Clone, Debug)]
pub struct Dynamics {
    cfg: SystemConfig,
    /// Indexed `m * J + j`.
    comp_dist: Vec<WeightedIndex<f64>>,
}

impl Dynamics {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let mut comp_dist = Vec::with_capacity(cfg.num_servers * cfg.num_types);
        for m in 0..cfg.num_servers {
            for j in 0..cfg.num_types {
                let dist = WeightedIndex::new(cfg.comp_pmf(m, j))
                    .map_err(|e| Error::config(format!("comp_time_pmf[{m}][{j}]: {e}")))?;
                comp_dist.push(dist);
            }
        }
        Ok(Dynamics { cfg, comp_dist })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Advances the whole system by one slot.
    ///
    /// The action routes the arrivals drawn in this slot; those jobs join the
    /// in-flight count only at the next slot and cannot complete now.
    pub fn step(
        &self,
        state: &SystemState,
        action: &DispatchAction,
        streams: &mut RandomStreams,
    ) -> (SystemState, SlotEvents) {
        debug_assert!(state.is_valid(&self.cfg), "invalid state passed to step");
        debug_assert!(action.is_valid(&self.cfg), "invalid action passed to step");
        let cfg = &self.cfg;
        let mut next = Vec::with_capacity(cfg.num_types);
        let mut events = Vec::with_capacity(cfg.num_types);
        for (j, ts) in state.types.iter().enumerate() {
            let (ns, ev) = self.step_type(j, ts, &action.routes[j], streams);
            next.push(ns);
            events.push(ev);
        }
        (SystemState { types: next }, SlotEvents { types: events })
    }

    fn step_type(
        &self,
        j: usize,
        ts: &TypeState,
        routes: &[usize],
        streams: &mut RandomStreams,
    ) -> (TypeState, TypeEvents) {
        let cfg = &self.cfg;
        let (k_n, m_n) = (cfg.num_aps, cfg.num_servers);
        let arrivals: Vec<bool> = (0..k_n).map(|k| streams.arrivals.random::<f64>() < cfg.arrival_prob[k][j]).collect();

        let mut next = TypeState::empty(k_n, m_n);
        let mut completions = vec![0; k_n * m_n];
        let mut in_flight_drops = vec![0; k_n];
        let mut landed = vec![0usize; m_n];
        for k in 0..k_n {
            for m in 0..m_n {
                let n = ts.in_flight(k, m);
                let p = cfg.completion_prob(k, j, m);
                let done = (0..n).filter(|_| streams.uploads.random::<f64>() < p).count();
                completions[k * m_n + m] = done as Count;
                landed[m] += done;
                let raw = n - done + usize::from(arrivals[k] && routes[k] == m);
                let capped = raw.min(cfg.n_max);
                in_flight_drops[k] += (raw - capped) as Count;
                next.set_in_flight(k, m, capped);
            }
        }

        let mut comp_redraws = vec![None; m_n];
        let mut departures = vec![false; m_n];
        let mut overflow_drops = vec![0; m_n];
        for m in 0..m_n {
            let step = advance_queue(ts.queues[m], landed[m], cfg.l_max);
            departures[m] = step.departed;
            overflow_drops[m] = step.overflow as Count;
            next.queues[m] = match step.service {
                Service::Continue(rem) => QueueState { len: step.len as Count, remaining: rem },
                Service::Idle => QueueState::IDLE,
                Service::Redraw => {
                    let eta = self.comp_dist[m * cfg.num_types + j].sample(&mut streams.computation) + 1;
                    comp_redraws[m] = Some(eta as Count);
                    QueueState::new(step.len, eta)
                }
            };
        }
        let events = TypeEvents {
            arrivals,
            upload_completions: completions,
            comp_redraws,
            departures,
            overflow_drops,
            in_flight_drops,
        };
        (next, events)
    }
}

/// Exact successor distribution of one job type under a per-type action.
///
/// Returns the distinct successor states sorted by state, with their
/// probabilities. Fails with [`Error::EnumerationTooLarge`] when an
/// intermediate support exceeds `cap`.
pub fn next_state_distribution_type(
    cfg: &SystemConfig,
    j: usize,
    state: &TypeState,
    routes: &[usize],
    cap: usize,
) -> Result<Vec<(TypeState, f64)>> {
    let (k_n, m_n) = (cfg.num_aps, cfg.num_servers);
    // (successor in-flight vector, uploads landing per server clipped at l_max)
    type Partial = (Vec<Count>, Vec<Count>);
    let mut partial: BTreeMap<Partial, f64> = BTreeMap::new();
    partial.insert((Vec::with_capacity(k_n * m_n), vec![0; m_n]), 1.0);

    for k in 0..k_n {
        let lambda = cfg.arrival_prob[k][j];
        let arrival_branches: Vec<(usize, f64)> =
            [(0usize, 1.0 - lambda), (1usize, lambda)].into_iter().filter(|&(_, p)| p > 0.0).collect();
        let completion_pmfs: Vec<Vec<f64>> =
            (0..m_n).map(|m| binomial_pmf(state.in_flight(k, m), cfg.completion_prob(k, j, m))).collect();

        let mut grown: BTreeMap<Partial, f64> = BTreeMap::new();
        for ((flights, landed), prob) in partial {
            for &(a, pa) in &arrival_branches {
                // Enumerate the per-server completion counts of this AP.
                let mut branch: Vec<(Vec<Count>, Vec<Count>, f64)> = vec![(flights.clone(), landed.clone(), prob * pa)];
                for m in 0..m_n {
                    let n = state.in_flight(k, m);
                    let mut expanded = Vec::with_capacity(branch.len() * (n + 1));
                    for (fl, ld, p) in &branch {
                        for (d, &pd) in completion_pmfs[m].iter().enumerate() {
                            if pd == 0.0 {
                                continue;
                            }
                            let raw = n - d + usize::from(a == 1 && routes[k] == m);
                            let mut fl = fl.clone();
                            fl.push(raw.min(cfg.n_max) as Count);
                            let mut ld = ld.clone();
                            ld[m] = (ld[m] as usize + d).min(cfg.l_max) as Count;
                            expanded.push((fl, ld, p * pd));
                        }
                    }
                    branch = expanded;
                }
                for (fl, ld, p) in branch {
                    *grown.entry((fl, ld)).or_insert(0.0) += p;
                }
            }
            if grown.len() > cap {
                return Err(Error::EnumerationTooLarge { support: grown.len(), cap });
            }
        }
        partial = grown;
    }

    let mut out: BTreeMap<TypeState, f64> = BTreeMap::new();
    for ((flights, landed), prob) in partial {
        let mut branch: Vec<(Vec<QueueState>, f64)> = vec![(Vec::with_capacity(m_n), prob)];
        for m in 0..m_n {
            let succ = queue_successors(state.queues[m], landed[m] as usize, cfg.l_max, cfg.comp_pmf(m, j));
            let mut expanded = Vec::with_capacity(branch.len() * succ.len());
            for (qs, p) in &branch {
                for &(q, pq) in &succ {
                    let mut qs = qs.clone();
                    qs.push(q);
                    expanded.push((qs, p * pq));
                }
            }
            branch = expanded;
        }
        for (queues, p) in branch {
            *out.entry(TypeState { in_flight: flights.clone(), queues }).or_insert(0.0) += p;
        }
        if out.len() > cap {
            return Err(Error::EnumerationTooLarge { support: out.len(), cap });
        }
    }
    Ok(out.into_iter().collect())
}
