//! Dispatching policies: the fixed baseline, four heuristics, and the
//! one-step improvement of the baseline.
//!
//! The improved policy scores a per-type action by
//! `g_j(S_j) + gamma * E[W_j(S_j') | action]`, where `W_j` is the baseline
//! value, and picks routes by a single coordinate pass over the APs starting
//! from the baseline routes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    binomial_pmf, queue_successors, stage_cost_type, Count, DispatchAction, QueueState, SystemConfig, SystemState,
    TypeState,
};
use crate::valuefn::{argmin, BaselinePolicy, DecisionKey, ValueTables};

pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

/// Scores closer than this (relative to their magnitude) count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// How `E[W_j(S_j')]` is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectationMode {
    /// Enumerate the successor queue state jointly with the successor
    /// in-flight counts that drive the queue prediction.
    #[default]
    #[serde(rename = "exact")]
    Exact,
    /// Keep the queue branching exact but replace the successor in-flight
    /// counts by their mean inside the predicted arrival profile.
    #[serde(rename = "ce")]
    CertaintyEquivalent,
}

impl FromStr for ExpectationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ExpectationMode::Exact),
            "ce" | "certainty-equivalent" => Ok(ExpectationMode::CertaintyEquivalent),
            other => Err(Error::config(format!("unknown expectation mode `{other}` (expected exact|ce)"))),
        }
    }
}

impl fmt::Display for ExpectationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpectationMode::Exact => "exact",
            ExpectationMode::CertaintyEquivalent => "ce",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicyKind {
    Baseline,
    Sqf,
    Suf,
    Scf,
    Random,
    Proposed { mode: ExpectationMode, enumeration_cap: usize },
}

impl PolicyKind {
    pub fn proposed(mode: ExpectationMode) -> Self {
        PolicyKind::Proposed { mode, enumeration_cap: DEFAULT_ENUMERATION_CAP }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::Sqf => "sqf",
            PolicyKind::Suf => "suf",
            PolicyKind::Scf => "scf",
            PolicyKind::Random => "random",
            PolicyKind::Proposed { .. } => "proposed",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(PolicyKind::Baseline),
            "sqf" => Ok(PolicyKind::Sqf),
            "suf" => Ok(PolicyKind::Suf),
            "scf" => Ok(PolicyKind::Scf),
            "random" => Ok(PolicyKind::Random),
            "proposed" => Ok(PolicyKind::proposed(ExpectationMode::default())),
            other => {
                Err(Error::config(format!("unknown policy `{other}` (expected baseline|sqf|suf|scf|random|proposed)")))
            }
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-type record of one improvement pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFactorReport {
    pub job_type: usize,
    /// `scores[k][m]`: Q-factor of routing AP `k` to server `m` during AP
    /// `k`'s coordinate step, with the earlier APs already fixed.
    pub scores: Vec<Vec<f64>>,
    pub routes: Vec<usize>,
    pub baseline_score: f64,
    pub final_score: f64,
    /// Exact enumeration exceeded the cap and the type was re-scored with
    /// the certainty-equivalent expectation.
    pub ce_fallback: bool,
}

/// Decision rule bound to one configuration.
#[derive(Clone, Debug)]
pub struct Dispatcher {
    kind: PolicyKind,
    cfg: SystemConfig,
    /// Routes of the fixed-action kinds, `[j][k]`.
    fixed: Option<Vec<Vec<usize>>>,
    tables: Option<Arc<ValueTables>>,
}

impl Dispatcher {
    /// `tables` is required for the proposed policy and its baseline is the
    /// baseline the improvement starts from. The baseline kind uses the
    /// tables' baseline when given, and shortest computation time otherwise.
    pub fn new(kind: PolicyKind, cfg: &SystemConfig, tables: Option<Arc<ValueTables>>) -> Result<Self> {
        cfg.validate()?;
        if let Some(t) = &tables {
            if t.config() != cfg {
                return Err(Error::config("value tables were built for a different configuration"));
            }
        }
        let (k_n, m_n, j_n) = (cfg.num_aps, cfg.num_servers, cfg.num_types);
        let fixed = match kind {
            PolicyKind::Baseline => Some(match &tables {
                Some(t) => t.baseline().routes.clone(),
                None => BaselinePolicy::scf(cfg).routes,
            }),
            PolicyKind::Suf => Some(
                (0..j_n)
                    .map(|j| (0..k_n).map(|k| argmin((0..m_n).map(|m| cfg.mean_upload_delay[k][j][m]))).collect())
                    .collect(),
            ),
            PolicyKind::Scf => Some(BaselinePolicy::scf(cfg).routes),
            PolicyKind::Proposed { enumeration_cap, .. } => {
                if tables.is_none() {
                    return Err(Error::config("the proposed policy needs baseline value tables"));
                }
                if enumeration_cap == 0 {
                    return Err(Error::config("enumeration_cap must be positive"));
                }
                None
            }
            PolicyKind::Sqf | PolicyKind::Random => None,
        };
        Ok(Dispatcher { kind, cfg: cfg.clone(), fixed, tables })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn tables(&self) -> Option<&Arc<ValueTables>> {
        self.tables.as_ref()
    }

    pub fn decide<R: Rng + ?Sized>(&self, state: &SystemState, rng: &mut R) -> DispatchAction {
        self.decide_with_reports(state, rng).0
    }

    /// The action plus, for the proposed policy, one report per type.
    pub fn decide_with_reports<R: Rng + ?Sized>(
        &self,
        state: &SystemState,
        rng: &mut R,
    ) -> (DispatchAction, Vec<QFactorReport>) {
        let cfg = &self.cfg;
        let (k_n, m_n) = (cfg.num_aps, cfg.num_servers);
        if let Some(routes) = &self.fixed {
            return (DispatchAction { routes: routes.clone() }, Vec::new());
        }
        match self.kind {
            PolicyKind::Sqf => {
                let routes =
                    state.types.iter().map(|ts| vec![argmin(ts.queues.iter().map(|q| q.len as f64)); k_n]).collect();
                (DispatchAction { routes }, Vec::new())
            }
            PolicyKind::Random => {
                let routes = (0..cfg.num_types).map(|_| (0..k_n).map(|_| rng.random_range(0..m_n)).collect()).collect();
                (DispatchAction { routes }, Vec::new())
            }
            PolicyKind::Proposed { mode, enumeration_cap } => {
                let tables = self.tables.as_ref().expect("checked in new");
                let reports: Vec<QFactorReport> = state
                    .types
                    .iter()
                    .enumerate()
                    .map(|(j, ts)| improve_type(tables, j, ts, mode, enumeration_cap))
                    .collect();
                let routes = reports.iter().map(|r| r.routes.clone()).collect();
                (DispatchAction { routes }, reports)
            }
            PolicyKind::Baseline | PolicyKind::Suf | PolicyKind::Scf => unreachable!("fixed routes"),
        }
    }
}

/// One coordinate pass of the improvement for type `j`.
pub fn improve_type(
    tables: &ValueTables,
    j: usize,
    state: &TypeState,
    mode: ExpectationMode,
    cap: usize,
) -> QFactorReport {
    match coordinate_pass(tables, j, state, mode, cap) {
        Ok(report) => report,
        Err(Error::EnumerationTooLarge { support, cap }) => {
            log::debug!("type {j}: {support} successor states exceed cap {cap}; using certainty equivalence");
            let mut report = coordinate_pass(tables, j, state, ExpectationMode::CertaintyEquivalent, cap)
                .expect("certainty-equivalent scoring does not enumerate");
            report.ce_fallback = true;
            report
        }
        Err(e) => panic!("unexpected error while scoring type {j}: {e}"),
    }
}

fn coordinate_pass(
    tables: &ValueTables,
    j: usize,
    state: &TypeState,
    mode: ExpectationMode,
    cap: usize,
) -> Result<QFactorReport> {
    let cfg = tables.config();
    let (k_n, m_n) = (cfg.num_aps, cfg.num_servers);
    let gamma = cfg.discount;
    let g = stage_cost_type(cfg, state);
    let mut eval = SuccessorEvaluator::new(tables, j, state, mode, cap);
    let mut routes = tables.baseline().routes[j].clone();
    let baseline_score = g + gamma * eval.expected_w(&routes)?;
    let mut scores = vec![vec![0.0; m_n]; k_n];
    let mut current = baseline_score;
    for l in 0..k_n {
        let incumbent = routes[l];
        for m in 0..m_n {
            routes[l] = m;
            scores[l][m] = if m == incumbent { current } else { g + gamma * eval.expected_w(&routes)? };
        }
        let best = select_route(&scores[l], incumbent);
        routes[l] = best;
        current = scores[l][best];
    }
    Ok(QFactorReport { job_type: j, scores, routes, baseline_score, final_score: current, ce_fallback: false })
}

/// Keeps `incumbent` unless another server is strictly better by more than
/// the relative tie tolerance; among those, the lowest index wins.
pub fn select_route(scores: &[f64], incumbent: usize) -> usize {
    let mut best = incumbent;
    for (m, &s) in scores.iter().enumerate() {
        let tol = TIE_TOLERANCE * scores[best].abs().max(1.0);
        if s < scores[best] - tol {
            best = m;
        }
    }
    best
}

/// `E[W_j(S_j') | S_j, routes]`.
pub fn expected_w_next(
    tables: &ValueTables,
    j: usize,
    state: &TypeState,
    routes: &[usize],
    mode: ExpectationMode,
    cap: usize,
) -> Result<f64> {
    SuccessorEvaluator::new(tables, j, state, mode, cap).expected_w(routes)
}

/// `g_j(S_j) + gamma * E[W_j(S_j') | S_j, routes]`.
pub fn q_factor(
    tables: &ValueTables,
    j: usize,
    state: &TypeState,
    routes: &[usize],
    mode: ExpectationMode,
    cap: usize,
) -> Result<f64> {
    let cfg = tables.config();
    Ok(stage_cost_type(cfg, state) + cfg.discount * expected_w_next(tables, j, state, routes, mode, cap)?)
}

/// Per-server data that does not depend on the action.
struct ServerPrep {
    contributors: Vec<usize>,
    /// Distribution of uploads landing from non-contributing links, clipped at `l_max`.
    other_landed: Vec<f64>,
    /// Successor queue-index distribution for each landed count `0..=l_max`.
    succ: Vec<Vec<(usize, f64)>>,
    /// Successor queue-index distribution given all landed uploads.
    queue_next: Vec<(usize, f64)>,
    /// Expected contributor profile `[c][routed as usize][i]` (certainty equivalence).
    mean_profiles: Vec<[Vec<f64>; 2]>,
}

/// Scores successor expectations of one type, caching per-server values by
/// the set of contributors routed to the server.
struct SuccessorEvaluator<'a> {
    tables: &'a ValueTables,
    j: usize,
    state: &'a TypeState,
    mode: ExpectationMode,
    cap: usize,
    /// `[k][m]`: expected `d_ap` of the successor when `k` does not / does route to `m`.
    ap_expect: Vec<Vec<[f64; 2]>>,
    /// Binomial completion PMFs `[k][m]`.
    completions: Vec<Vec<Vec<f64>>>,
    /// Built on the first memo miss of each server.
    servers: Vec<Option<ServerPrep>>,
    contributors: Vec<&'a [usize]>,
    /// In-flight counts into each server packed base `n_max + 1`, when they fit.
    packed_counts: Vec<Option<u128>>,
    cache: HashMap<(usize, u64), f64>,
}

impl<'a> SuccessorEvaluator<'a> {
    fn new(tables: &'a ValueTables, j: usize, state: &'a TypeState, mode: ExpectationMode, cap: usize) -> Self {
        let cfg = tables.config();
        let (k_n, m_n) = (cfg.num_aps, cfg.num_servers);
        assert!(k_n <= 64, "at most 64 APs are supported by the route cache");
        let n_max = cfg.n_max;
        let completions: Vec<Vec<Vec<f64>>> = (0..k_n)
            .map(|k| (0..m_n).map(|m| binomial_pmf(state.in_flight(k, m), cfg.completion_prob(k, j, m))).collect())
            .collect();
        let ap_expect = (0..k_n)
            .map(|k| {
                let lambda = cfg.arrival_prob[k][j];
                (0..m_n)
                    .map(|m| {
                        let n = state.in_flight(k, m);
                        let d = tables.d_ap_table(k, j, m);
                        let mut stay = 0.0;
                        let mut grow = 0.0;
                        for (done, &p) in completions[k][m].iter().enumerate() {
                            stay += p * d[n - done];
                            grow += p * d[(n - done + 1).min(n_max)];
                        }
                        [stay, (1.0 - lambda) * stay + lambda * grow]
                    })
                    .collect()
            })
            .collect();
        let contributors = (0..m_n).map(|m| tables.contributors(j, m)).collect();
        let packed_counts = (0..m_n).map(|m| pack_counts((0..k_n).map(|k| state.in_flight(k, m)), n_max + 1)).collect();
        SuccessorEvaluator {
            tables,
            j,
            state,
            mode,
            cap,
            ap_expect,
            completions,
            servers: (0..m_n).map(|_| None).collect(),
            contributors,
            packed_counts,
            cache: HashMap::new(),
        }
    }

    fn prep(&mut self, m: usize) -> &ServerPrep {
        if self.servers[m].is_none() {
            self.servers[m] = Some(prepare_server(self.tables, self.j, self.state, m, &self.completions));
        }
        self.servers[m].as_ref().expect("just built")
    }

    fn expected_w(&mut self, routes: &[usize]) -> Result<f64> {
        let m_n = self.contributors.len();
        let mut total = 0.0;
        for (k, row) in self.ap_expect.iter().enumerate() {
            for (m, e) in row.iter().enumerate() {
                total += e[usize::from(routes[k] == m)];
            }
        }
        for m in 0..m_n {
            let mut mask = 0u64;
            for (c, &k) in self.contributors[m].iter().enumerate() {
                if routes[k] == m {
                    mask |= 1 << c;
                }
            }
            total += self.server_value(m, mask)?;
        }
        Ok(total)
    }

    fn server_value(&mut self, m: usize, mask: u64) -> Result<f64> {
        if let Some(&v) = self.cache.get(&(m, mask)) {
            return Ok(v);
        }
        let key = self.packed_counts[m].map(|counts| DecisionKey {
            j: self.j as u16,
            m: m as u16,
            q: self.state.queues[m].index(self.tables.config().eta_max) as u16,
            exact: self.mode == ExpectationMode::Exact,
            mask,
            counts,
        });
        if let Some(v) = key.as_ref().and_then(|k| self.tables.decision_memo_get(k)) {
            self.cache.insert((m, mask), v);
            return Ok(v);
        }
        let (tables, j, mode) = (self.tables, self.j, self.mode);
        let no_contributors = self.contributors[m].is_empty();
        let v = if no_contributors {
            tables.es_value(m, j, &self.prep(m).queue_next, &[])
        } else {
            match mode {
                ExpectationMode::Exact => {
                    self.prep(m);
                    self.server_value_exact(m, mask)?
                }
                ExpectationMode::CertaintyEquivalent => {
                    let prep = self.prep(m);
                    let horizon = tables.horizon();
                    let mut alpha = vec![0.0; horizon];
                    for (c, profiles) in prep.mean_profiles.iter().enumerate() {
                        let routed = mask >> c & 1 == 1;
                        for (a, p) in alpha.iter_mut().zip(&profiles[usize::from(routed)]) {
                            *a += p;
                        }
                    }
                    let alpha = tables.clamp_alpha(alpha);
                    tables.es_value(m, j, &prep.queue_next, &alpha.values)
                }
            }
        };
        if let Some(k) = key {
            self.tables.decision_memo_put(k, v);
        }
        self.cache.insert((m, mask), v);
        Ok(v)
    }

    fn server_value_exact(&self, m: usize, mask: u64) -> Result<f64> {
        let cfg = self.tables.config();
        let (n_max, l_max) = (cfg.n_max, cfg.l_max);
        let prep = self.servers[m].as_ref().expect("prepared by caller");

        let mut support = (l_max + 1) * cfg.eta_max;
        for (c, &k) in prep.contributors.iter().enumerate() {
            let arrivals = if mask >> c & 1 == 1 { 2 } else { 1 };
            support = support.saturating_mul((self.state.in_flight(k, m) + 1) * arrivals);
        }
        if support > self.cap {
            return Err(Error::EnumerationTooLarge { support, cap: self.cap });
        }

        // Joint law of (successor contributor counts, uploads landed from contributors).
        let mut joint: BTreeMap<(Vec<Count>, usize), f64> = BTreeMap::new();
        joint.insert((Vec::with_capacity(prep.contributors.len()), 0), 1.0);
        for (c, &k) in prep.contributors.iter().enumerate() {
            let n = self.state.in_flight(k, m);
            let lambda = cfg.arrival_prob[k][self.j];
            let arrivals: &[(usize, f64)] =
                if mask >> c & 1 == 1 { &[(0, 1.0 - lambda), (1, lambda)] } else { &[(0, 1.0)] };
            let mut next: BTreeMap<(Vec<Count>, usize), f64> = BTreeMap::new();
            for ((counts, landed), p) in joint {
                for (done, &pd) in self.completions[k][m].iter().enumerate() {
                    for &(a, pa) in arrivals {
                        let w = p * pd * pa;
                        if w == 0.0 {
                            continue;
                        }
                        let mut counts = counts.clone();
                        counts.push((n - done + a).min(n_max) as Count);
                        *next.entry((counts, (landed + done).min(l_max))).or_insert(0.0) += w;
                    }
                }
            }
            joint = next;
        }

        // Successor queue distribution per successor count vector.
        let dim = cfg.queue_dim();
        let mut by_counts: BTreeMap<Vec<Count>, Vec<f64>> = BTreeMap::new();
        for ((counts, landed), p) in joint {
            let dist = by_counts.entry(counts).or_insert_with(|| vec![0.0; dim]);
            for (other, &po) in prep.other_landed.iter().enumerate() {
                if po == 0.0 {
                    continue;
                }
                for &(q, pq) in &prep.succ[(landed + other).min(l_max)] {
                    dist[q] += p * po * pq;
                }
            }
        }
        let mut total = 0.0;
        for (counts, dist) in &by_counts {
            for (q, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    total += p * self.tables.es_at(m, self.j, q, counts);
                }
            }
        }
        Ok(total)
    }
}

fn prepare_server(
    tables: &ValueTables,
    j: usize,
    state: &TypeState,
    m: usize,
    completions: &[Vec<Vec<f64>>],
) -> ServerPrep {
    let cfg = tables.config();
    let (k_n, l_max, n_max) = (cfg.num_aps, cfg.l_max, cfg.n_max);
    let contributors = tables.contributors(j, m).to_vec();
    let mut other_landed = vec![1.0];
    let mut all_landed = vec![1.0];
    for k in 0..k_n {
        all_landed = convolve_clipped(&all_landed, &completions[k][m], l_max);
        if !contributors.contains(&k) {
            other_landed = convolve_clipped(&other_landed, &completions[k][m], l_max);
        }
    }
    let q = state.queues[m];
    let succ: Vec<Vec<(usize, f64)>> = (0..=l_max)
        .map(|landed| {
            queue_successors(q, landed, l_max, cfg.comp_pmf(m, j))
                .into_iter()
                .map(|(s, p): (QueueState, f64)| (s.index(cfg.eta_max), p))
                .collect()
        })
        .collect();
    let mut queue_dense = vec![0.0; cfg.queue_dim()];
    for (landed, &p) in all_landed.iter().enumerate() {
        for &(q, pq) in &succ[landed] {
            queue_dense[q] += p * pq;
        }
    }
    let queue_next = queue_dense.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect();

    let mean_profiles = contributors
        .iter()
        .map(|&k| {
            let n = state.in_flight(k, m);
            let lambda = cfg.arrival_prob[k][j];
            let horizon = tables.horizon();
            let mut stay = vec![0.0; horizon];
            let mut grow = vec![0.0; horizon];
            for (done, &p) in completions[k][m].iter().enumerate() {
                let base = n - done;
                for (acc, v) in stay.iter_mut().zip(tables.link_profile(k, j, m, base)) {
                    *acc += p * v;
                }
                for (acc, v) in grow.iter_mut().zip(tables.link_profile(k, j, m, (base + 1).min(n_max))) {
                    *acc += p * v;
                }
            }
            let routed: Vec<f64> = stay.iter().zip(&grow).map(|(s, g)| (1.0 - lambda) * s + lambda * g).collect();
            [stay, routed]
        })
        .collect();
    ServerPrep { contributors, other_landed, succ, queue_next, mean_profiles }
}

/// `sum_i x_i base^i`, or `None` when it overflows.
fn pack_counts(counts: impl Iterator<Item = usize>, base: usize) -> Option<u128> {
    let mut packed: u128 = 0;
    let mut scale: u128 = 1;
    for n in counts {
        packed = packed.checked_add(scale.checked_mul(n as u128)?)?;
        scale = scale.checked_mul(base as u128)?;
    }
    Some(packed)
}

/// Law of `min(X + Y, cap)` for independent `X`, `Y` given as PMFs.
fn convolve_clipped(a: &[f64], b: &[f64], cap: usize) -> Vec<f64> {
    let len = (a.len() + b.len() - 1).min(cap + 1);
    let mut out = vec![0.0; len];
    for (x, &pa) in a.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (y, &pb) in b.iter().enumerate() {
            out[(x + y).min(cap)] += pa * pb;
        }
    }
    out
}
