//! Closed-form value function of a fixed-route baseline policy.
//!
//! The baseline value of a state decomposes per job type into a sum of
//! per-link upload terms `d_ap` and per-server queue terms `d_es`:
//!
//! ```text
//! W_j(S_j) = sum_{k,m} d_ap[k][j][m](N_kjm) + sum_m d_es[m][j](S_j)
//! V(S)     = sum_j W_j(S_j)
//! ```
//!
//! `d_ap` is exact: the in-flight count of one link is a finite Markov chain
//! and its discounted cost-to-go is one linear solve. `d_es` models the
//! aggregate upload completions into a queue as a Bernoulli arrival whose
//! probability `alpha(t)` is the expected completion count predicted from the
//! links that the baseline routes to that server, and sums the truncated
//! discounted series.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::DVector;

use crate::markov::{
    build_upload_matrix, discounted_cost_to_go, truncation_horizon, CostVector, QueueKernel, StochasticMatrix,
};
use crate::model::{Count, DispatchAction, SystemConfig, SystemState, TypeState};

/// Fixed AP-to-server routing, `routes[j][k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselinePolicy {
    pub routes: Vec<Vec<usize>>,
}

impl BaselinePolicy {
    /// Shortest expected computation time per type, lowest server index on ties.
    pub fn scf(cfg: &SystemConfig) -> Self {
        let routes = (0..cfg.num_types)
            .map(|j| {
                let best = argmin((0..cfg.num_servers).map(|m| cfg.mean_comp_time(m, j)));
                vec![best; cfg.num_aps]
            })
            .collect();
        BaselinePolicy { routes }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.as_action().is_valid(cfg) {
            Ok(())
        } else {
            Err(Error::config("baseline routes must name a valid server for every (type, AP)"))
        }
    }

    pub fn route(&self, k: usize, j: usize) -> usize {
        self.routes[j][k]
    }

    /// APs whose type-`j` jobs the baseline sends to server `m`.
    pub fn feeders(&self, j: usize, m: usize) -> Vec<usize> {
        self.routes[j].iter().enumerate().filter(|(_, &r)| r == m).map(|(k, _)| k).collect()
    }

    pub fn as_action(&self) -> DispatchAction {
        DispatchAction { routes: self.routes.clone() }
    }
}

/// Index of the smallest value; the first one wins ties.
pub(crate) fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// How the queue series combines the predicted arrival probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EsForm {
    /// Term `t` raises the single matrix `P(alpha(t-1))` to the power `t-1`.
    #[default]
    Power,
    /// Term `t` chains `P(alpha(1)) ... P(alpha(t-1))`.
    Chain,
}

/// How queue-series terms are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EsBackend {
    /// Evaluate every term from the sparse kernel. Exact up to truncation.
    #[default]
    Direct,
    /// Precompute `(gamma P(a))^n c` on a uniform grid of `a` and use 4-point
    /// Lagrange interpolation. Only affects the power form.
    Tabulated { grid: usize },
}

/// Which in-flight jobs the predicted arrival probability of a queue counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaScope {
    /// Only links the baseline routes to the server.
    BaselineLinks,
    /// Every link into the server. Links the baseline does not use drain
    /// without new arrivals.
    #[default]
    AllLinks,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueOptions {
    pub eps_trunc: f64,
    pub es_form: EsForm,
    pub es_backend: EsBackend,
    pub alpha_scope: AlphaScope,
    /// Entries kept by each value memo before it is cleared; 0 disables memoization.
    pub memo_capacity: usize,
}

impl Default for ValueOptions {
    fn default() -> Self {
        ValueOptions {
            eps_trunc: 1e-6,
            es_form: EsForm::Power,
            es_backend: EsBackend::Direct,
            alpha_scope: AlphaScope::AllLinks,
            memo_capacity: 1 << 20,
        }
    }
}

/// Predicted per-slot arrival probabilities `alpha(1..=T)` for one queue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaProfile {
    pub values: Vec<f64>,
    pub clamped: usize,
}

/// `(gamma P(a_g))^n c` for every grid point, laid out `[q][n][g]`.
#[derive(Debug)]
struct PowerTable {
    points: usize,
    horizon: usize,
    data: Vec<f64>,
}

impl PowerTable {
    fn build(kernel: &QueueKernel, cost: &[f64], gamma: f64, horizon: usize, grid: usize) -> Self {
        let points = grid + 1;
        let dim = kernel.dim();
        let mut data = vec![0.0; dim * horizon * points];
        let mut cur = vec![0.0; dim];
        let mut next = vec![0.0; dim];
        for g in 0..points {
            let alpha = g as f64 / grid as f64;
            cur.copy_from_slice(cost);
            for n in 0..horizon {
                for q in 0..dim {
                    data[(q * horizon + n) * points + g] = cur[q];
                }
                kernel.apply(alpha, &cur, &mut next);
                for (c, x) in cur.iter_mut().zip(&next) {
                    *c = gamma * x;
                }
            }
        }
        PowerTable { points, horizon, data }
    }

    /// `sum_q dist_q (c_q + sum_{n>=1} h_n(q, alpha[n-1]))`
    fn evaluate(&self, dist: &[(usize, f64)], alpha: &[f64]) -> f64 {
        let grid = (self.points - 1) as f64;
        let stencil: Vec<(usize, [f64; 4])> =
            alpha[..self.horizon - 1].iter().map(|&a| lagrange_stencil(a, grid, self.points)).collect();
        let mut total = 0.0;
        for &(q, w) in dist {
            let base = q * self.horizon * self.points;
            let mut sum = self.data[base];
            for (i, (start, wts)) in stencil.iter().enumerate() {
                let off = base + (i + 1) * self.points + start;
                let cell = &self.data[off..off + 4];
                sum += wts[0] * cell[0] + wts[1] * cell[1] + wts[2] * cell[2] + wts[3] * cell[3];
            }
            total += w * sum;
        }
        total
    }
}

/// First node and weights of the cubic through four grid nodes around `x`.
fn lagrange_stencil(x: f64, grid: f64, points: usize) -> (usize, [f64; 4]) {
    let pos = x * grid;
    let start = (pos.floor() as isize - 1).clamp(0, points as isize - 4) as usize;
    let s = pos - start as f64;
    let w = [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ];
    (start, w)
}

#[derive(Debug)]
struct ServerTables {
    kernel: QueueKernel,
    feeders: Vec<usize>,
    /// APs whose in-flight jobs enter `alpha`.
    contributors: Vec<usize>,
    /// Queue series with `alpha == 0`, used when nothing feeds the server.
    idle_values: Vec<f64>,
    table: Option<PowerTable>,
}

type EsKey = (usize, usize, usize, Vec<Count>);

/// Identifies a per-server successor expectation: it depends only on the
/// type, the server, its queue, the in-flight counts into it and which
/// contributing APs route to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) struct DecisionKey {
    pub j: u16,
    pub m: u16,
    pub q: u16,
    pub exact: bool,
    pub mask: u64,
    pub counts: u128,
}

/// Precomputed baseline value machinery for one configuration and baseline.
#[derive(Debug)]
pub struct ValueTables {
    cfg: SystemConfig,
    baseline: BaselinePolicy,
    opts: ValueOptions,
    horizon: usize,
    queue_cost: CostVector,
    /// `(j * K + k) * M + m`
    d_ap: Vec<Vec<f64>>,
    /// `(j * K + k) * M + m`: `[x][i] = E[N(i + 1) | N(1) = x] / U`, for
    /// links that contribute to `alpha`.
    link_profiles: Vec<Option<Vec<Vec<f64>>>>,
    /// `m * J + j`
    servers: Vec<ServerTables>,
    clamp_events: AtomicU64,
    memo: Mutex<HashMap<EsKey, f64>>,
    decision_memo: Mutex<HashMap<DecisionKey, f64>>,
}

impl ValueTables {
    pub fn new(cfg: &SystemConfig, baseline: &BaselinePolicy, opts: ValueOptions) -> Result<Self> {
        cfg.validate()?;
        baseline.validate(cfg)?;
        if !(opts.eps_trunc > 0.0) {
            return Err(Error::config("eps_trunc must be positive"));
        }
        if let EsBackend::Tabulated { grid } = opts.es_backend {
            if grid < 3 {
                return Err(Error::config("tabulated backend needs a grid of at least 3 intervals"));
            }
        }
        let (k_n, m_n, j_n) = (cfg.num_aps, cfg.num_servers, cfg.num_types);
        let gamma = cfg.discount;
        let queue_cost = CostVector::queue(cfg.l_max, cfg.eta_max, cfg.overflow_weight);
        let horizon = truncation_horizon(opts.eps_trunc, gamma, queue_cost.max());

        let mut d_ap = Vec::with_capacity(j_n * k_n * m_n);
        let mut link_profiles = Vec::with_capacity(j_n * k_n * m_n);
        let g = CostVector::upload(cfg.n_max);
        for j in 0..j_n {
            for k in 0..k_n {
                for m in 0..m_n {
                    let routed = baseline.route(k, j) == m;
                    let lambda = if routed { cfg.arrival_prob[k][j] } else { 0.0 };
                    let mean_delay = cfg.mean_upload_delay[k][j][m];
                    let chain = build_upload_matrix(lambda, mean_delay, cfg.n_max);
                    let values = discounted_cost_to_go(&chain, &g, gamma)?;
                    if values.windows(2).any(|w| w[1] < w[0]) || values.iter().any(|&v| v < 0.0) {
                        log::warn!("d_ap for (k={k}, j={j}, m={m}) is not non-decreasing: {values:?}");
                    }
                    d_ap.push(values);
                    let contributes = routed || opts.alpha_scope == AlphaScope::AllLinks;
                    link_profiles.push(contributes.then(|| expected_count_profile(&chain, mean_delay, horizon)));
                }
            }
        }

        let mut servers = Vec::with_capacity(m_n * j_n);
        for m in 0..m_n {
            for j in 0..j_n {
                let kernel = QueueKernel::new(cfg.comp_pmf(m, j), cfg.l_max, cfg.eta_max);
                let feeders = baseline.feeders(j, m);
                let contributors = match opts.alpha_scope {
                    AlphaScope::BaselineLinks => feeders.clone(),
                    AlphaScope::AllLinks => (0..k_n).collect(),
                };
                let idle_values = zero_arrival_series(&kernel, &queue_cost.0, gamma, horizon);
                let table = match (opts.es_backend, opts.es_form, contributors.is_empty()) {
                    (EsBackend::Tabulated { grid }, EsForm::Power, false) => {
                        Some(PowerTable::build(&kernel, &queue_cost.0, gamma, horizon, grid))
                    }
                    _ => None,
                };
                servers.push(ServerTables { kernel, feeders, contributors, idle_values, table });
            }
        }

        Ok(ValueTables {
            cfg: cfg.clone(),
            baseline: baseline.clone(),
            opts,
            horizon,
            queue_cost,
            d_ap,
            link_profiles,
            servers,
            clamp_events: AtomicU64::new(0),
            memo: Mutex::new(HashMap::new()),
            decision_memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn baseline(&self) -> &BaselinePolicy {
        &self.baseline
    }

    pub fn options(&self) -> &ValueOptions {
        &self.opts
    }

    /// Series truncation horizon `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn queue_cost(&self) -> &CostVector {
        &self.queue_cost
    }

    /// Number of `alpha` values clamped into `[0, 1]` so far.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().expect("memo poisoned").len()
    }

    /// `d_ap(N)` for every `N in 0..=n_max` on link `(k, j, m)`.
    pub fn d_ap_table(&self, k: usize, j: usize, m: usize) -> &[f64] {
        let (k_n, m_n) = (self.cfg.num_aps, self.cfg.num_servers);
        &self.d_ap[(j * k_n + k) * m_n + m]
    }

    pub fn d_ap(&self, k: usize, j: usize, m: usize, n: usize) -> f64 {
        self.d_ap_table(k, j, m)[n]
    }

    /// APs the baseline routes to server `m` for type `j`.
    pub fn feeders(&self, j: usize, m: usize) -> &[usize] {
        &self.server(m, j).feeders
    }

    /// APs whose in-flight counts toward `m` enter the queue prediction.
    pub fn contributors(&self, j: usize, m: usize) -> &[usize] {
        &self.server(m, j).contributors
    }

    /// `E[N(i + 1) | N(1) = x] / U` on link `(k, j, m)`; only for contributors.
    pub(crate) fn link_profile(&self, k: usize, j: usize, m: usize, x: usize) -> &[f64] {
        let (k_n, m_n) = (self.cfg.num_aps, self.cfg.num_servers);
        let profile = self.link_profiles[(j * k_n + k) * m_n + m].as_ref().expect("link does not contribute to alpha");
        &profile[x]
    }

    fn server(&self, m: usize, j: usize) -> &ServerTables {
        &self.servers[m * self.cfg.num_types + j]
    }

    pub fn queue_kernel(&self, m: usize, j: usize) -> &QueueKernel {
        &self.server(m, j).kernel
    }

    /// Unclamped `alpha(1..=T)` from the in-flight counts of the contributors.
    pub fn alpha_raw_from_counts(&self, j: usize, m: usize, counts: &[Count]) -> Vec<f64> {
        let contributors = self.contributors(j, m);
        debug_assert_eq!(contributors.len(), counts.len());
        let mut alpha = vec![0.0; self.horizon];
        for (&k, &n) in contributors.iter().zip(counts) {
            for (a, p) in alpha.iter_mut().zip(self.link_profile(k, j, m, n as usize)) {
                *a += p;
            }
        }
        alpha
    }

    /// Clamps `alpha` into `[0, 1]` and records the clamp events.
    pub fn clamp_alpha(&self, mut alpha: Vec<f64>) -> AlphaProfile {
        let mut clamped = 0;
        for a in alpha.iter_mut() {
            if *a > 1.0 || *a < 0.0 {
                clamped += 1;
                *a = a.clamp(0.0, 1.0);
            }
        }
        if clamped > 0 {
            self.clamp_events.fetch_add(clamped as u64, Ordering::Relaxed);
            log::trace!("clamped {clamped} predicted arrival probabilities");
        }
        AlphaProfile { values: alpha, clamped }
    }

    /// Unclamped predicted arrival probabilities for server `m`, type `j`.
    pub fn arrival_rate_profile_raw(&self, j: usize, state: &TypeState, m: usize) -> Vec<f64> {
        let counts: Vec<Count> = self.contributors(j, m).iter().map(|&k| state.in_flight(k, m) as Count).collect();
        self.alpha_raw_from_counts(j, m, &counts)
    }

    pub fn arrival_rate_profile(&self, j: usize, state: &TypeState, m: usize) -> AlphaProfile {
        self.clamp_alpha(self.arrival_rate_profile_raw(j, state, m))
    }

    /// Queue series for a distribution over queue indices and a clamped
    /// arrival profile.
    pub fn es_value(&self, m: usize, j: usize, dist: &[(usize, f64)], alpha: &[f64]) -> f64 {
        let server = self.server(m, j);
        if server.contributors.is_empty() {
            return dist.iter().map(|&(q, w)| w * server.idle_values[q]).sum();
        }
        match (self.opts.es_form, &server.table) {
            (EsForm::Power, Some(table)) => table.evaluate(dist, alpha),
            (EsForm::Power, None) => self.power_series_direct(server, dist, alpha),
            (EsForm::Chain, _) => self.chain_series(server, dist, alpha),
        }
    }

    fn power_series_direct(&self, server: &ServerTables, dist: &[(usize, f64)], alpha: &[f64]) -> f64 {
        let gamma = self.cfg.discount;
        let c = &self.queue_cost.0;
        let dim = server.kernel.dim();
        let start = dense_row(dist, dim);
        let mut total = dot(&start, c);
        let mut row = vec![0.0; dim];
        let mut next = vec![0.0; dim];
        for n in 1..self.horizon {
            let a = alpha[n - 1];
            row.copy_from_slice(&start);
            for _ in 0..n {
                server.kernel.apply_row(a, &row, &mut next);
                std::mem::swap(&mut row, &mut next);
            }
            total += gamma.powi(n as i32) * dot(&row, c);
        }
        total
    }

    fn chain_series(&self, server: &ServerTables, dist: &[(usize, f64)], alpha: &[f64]) -> f64 {
        let gamma = self.cfg.discount;
        let c = &self.queue_cost.0;
        let dim = server.kernel.dim();
        let mut row = dense_row(dist, dim);
        let mut next = vec![0.0; dim];
        let mut total = dot(&row, c);
        let mut discount = 1.0;
        for &a in alpha.iter().take(self.horizon - 1) {
            server.kernel.apply_row(a, &row, &mut next);
            std::mem::swap(&mut row, &mut next);
            discount *= gamma;
            total += discount * dot(&row, c);
        }
        total
    }

    /// Queue value at a known queue index and contributor in-flight vector, memoized.
    pub(crate) fn es_at(&self, m: usize, j: usize, q: usize, counts: &[Count]) -> f64 {
        if self.contributors(j, m).is_empty() {
            return self.server(m, j).idle_values[q];
        }
        let key = (m, j, q, counts.to_vec());
        if let Some(&v) = self.memo.lock().expect("memo poisoned").get(&key) {
            return v;
        }
        let alpha = self.clamp_alpha(self.alpha_raw_from_counts(j, m, counts));
        let v = self.es_value(m, j, &[(q, 1.0)], &alpha.values);
        bounded_insert(&self.memo, key, v, self.opts.memo_capacity);
        v
    }

    pub(crate) fn decision_memo_get(&self, key: &DecisionKey) -> Option<f64> {
        if self.opts.memo_capacity == 0 {
            return None;
        }
        self.decision_memo.lock().expect("memo poisoned").get(key).copied()
    }

    pub(crate) fn decision_memo_put(&self, key: DecisionKey, value: f64) {
        bounded_insert(&self.decision_memo, key, value, self.opts.memo_capacity);
    }

    /// Discounted queue cost at server `m` for type `j` under the baseline.
    pub fn d_es(&self, j: usize, state: &TypeState, m: usize) -> f64 {
        let counts: Vec<Count> = self.contributors(j, m).iter().map(|&k| state.in_flight(k, m) as Count).collect();
        let q = state.queues[m].index(self.cfg.eta_max);
        self.es_at(m, j, q, &counts)
    }

    pub fn d_ap_sum(&self, j: usize, state: &TypeState) -> f64 {
        let (k_n, m_n) = (self.cfg.num_aps, self.cfg.num_servers);
        let mut total = 0.0;
        for k in 0..k_n {
            for m in 0..m_n {
                total += self.d_ap(k, j, m, state.in_flight(k, m));
            }
        }
        total
    }

    pub fn w_j(&self, j: usize, state: &TypeState) -> f64 {
        let es: f64 = (0..self.cfg.num_servers).map(|m| self.d_es(j, state, m)).sum();
        self.d_ap_sum(j, state) + es
    }

    pub fn v_baseline(&self, state: &SystemState) -> f64 {
        state.types.iter().enumerate().map(|(j, ts)| self.w_j(j, ts)).sum()
    }

    /// Full provenance of the baseline value at `state`.
    pub fn report(&self, state: &SystemState) -> ValueReport {
        let cfg = &self.cfg;
        let before = self.clamp_events();
        let d_ap = (0..cfg.num_aps)
            .map(|k| {
                (0..cfg.num_types)
                    .map(|j| (0..cfg.num_servers).map(|m| self.d_ap_table(k, j, m).to_vec()).collect())
                    .collect()
            })
            .collect();
        let mut types = Vec::with_capacity(cfg.num_types);
        for (j, ts) in state.types.iter().enumerate() {
            let servers = (0..cfg.num_servers)
                .map(|m| {
                    let alpha = self.arrival_rate_profile(j, ts, m);
                    ServerValue {
                        server: m,
                        feeders: self.feeders(j, m).to_vec(),
                        contributors: self.contributors(j, m).to_vec(),
                        alpha_head: alpha.values.iter().take(8).cloned().collect(),
                        alpha_clamped: alpha.clamped,
                        d_es: self.d_es(j, ts, m),
                    }
                })
                .collect();
            types.push(TypeValue { job_type: j, d_ap_sum: self.d_ap_sum(j, ts), servers, w: self.w_j(j, ts) });
        }
        ValueReport {
            horizon: self.horizon,
            eps_trunc: self.opts.eps_trunc,
            es_form: self.opts.es_form,
            baseline: self.baseline.clone(),
            d_ap,
            types,
            v_baseline: self.v_baseline(state),
            clamp_events: self.clamp_events() - before,
        }
    }
}

fn bounded_insert<K: std::hash::Hash + Eq>(memo: &Mutex<HashMap<K, f64>>, key: K, value: f64, capacity: usize) {
    if capacity == 0 {
        return;
    }
    let mut memo = memo.lock().expect("memo poisoned");
    if memo.len() >= capacity {
        memo.clear();
    }
    memo.insert(key, value);
}

/// `[x][i] = E[N(i + 1) | N(1) = x] / mean_delay` for `i in 0..horizon`.
fn expected_count_profile(chain: &StochasticMatrix, mean_delay: f64, horizon: usize) -> Vec<Vec<f64>> {
    let dim = chain.dim();
    let mut profile = vec![Vec::with_capacity(horizon); dim];
    let mut v: DVector<f64> = DVector::from_fn(dim, |i, _| i as f64);
    for _ in 0..horizon {
        for (x, row) in profile.iter_mut().enumerate() {
            row.push(v[x] / mean_delay);
        }
        v = chain.as_matrix() * v;
    }
    profile
}

fn zero_arrival_series(kernel: &QueueKernel, cost: &[f64], gamma: f64, horizon: usize) -> Vec<f64> {
    let dim = kernel.dim();
    let mut acc = cost.to_vec();
    let mut cur = cost.to_vec();
    let mut next = vec![0.0; dim];
    for _ in 1..horizon {
        kernel.apply(0.0, &cur, &mut next);
        for (c, x) in cur.iter_mut().zip(&next) {
            *c = gamma * x;
        }
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += c;
        }
    }
    acc
}

fn dense_row(dist: &[(usize, f64)], dim: usize) -> Vec<f64> {
    let mut row = vec![0.0; dim];
    for &(q, w) in dist {
        row[q] += w;
    }
    row
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerValue {
    pub server: usize,
    pub feeders: Vec<usize>,
    pub contributors: Vec<usize>,
    /// First few predicted arrival probabilities (after clamping).
    pub alpha_head: Vec<f64>,
    pub alpha_clamped: usize,
    pub d_es: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeValue {
    pub job_type: usize,
    pub d_ap_sum: f64,
    pub servers: Vec<ServerValue>,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub horizon: usize,
    pub eps_trunc: f64,
    pub es_form: EsForm,
    pub baseline: BaselinePolicy,
    /// `[k][j][m][N]`
    pub d_ap: Vec<Vec<Vec<Vec<f64>>>>,
    pub types: Vec<TypeValue>,
    pub v_baseline: f64,
    pub clamp_events: u64,
}
