//! Exact solution of tiny instances by full state enumeration.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    next_state_distribution_type, stage_cost, Count, DispatchAction, Dynamics, QueueState, SystemConfig, SystemState,
    TypeState,
};
use crate::policy::{Dispatcher, PolicyKind};
use crate::rng::RandomStreams;

pub const DEFAULT_STATE_CAP: u128 = 1_000_000;
const ACTION_CAP: u128 = 4096;
/// Above this many states exact evaluation iterates instead of factorizing.
const DENSE_SOLVE_LIMIT: usize = 3000;

/// The full MDP of a tiny configuration.
#[derive(Clone, Debug)]
pub struct EnumeratedMdp {
    cfg: SystemConfig,
    states: Vec<SystemState>,
    index: HashMap<SystemState, usize>,
    actions: Vec<DispatchAction>,
    costs: Vec<f64>,
    /// `[s * A + a]`: successor indices and probabilities.
    transitions: Vec<Vec<(usize, f64)>>,
}

impl EnumeratedMdp {
    pub fn build(cfg: &SystemConfig, state_cap: u128) -> Result<Self> {
        cfg.validate()?;
        let count = cfg.state_count();
        if count > state_cap {
            return Err(Error::StateSpaceTooLarge { count, cap: state_cap });
        }
        let action_count = (cfg.num_servers as u128).saturating_pow((cfg.num_aps * cfg.num_types) as u32);
        if action_count > ACTION_CAP {
            return Err(Error::StateSpaceTooLarge { count: action_count, cap: ACTION_CAP });
        }
        let type_states = enumerate_type_states(cfg);
        let states = cartesian(&vec![type_states.len(); cfg.num_types])
            .into_iter()
            .map(|ix| SystemState { types: ix.iter().map(|&i| type_states[i].clone()).collect() })
            .collect::<Vec<_>>();
        let index: HashMap<SystemState, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let type_index: HashMap<&TypeState, usize> = type_states.iter().enumerate().map(|(i, s)| (s, i)).collect();

        let per_type_routes = cartesian(&vec![cfg.num_servers; cfg.num_aps]);
        let actions: Vec<DispatchAction> = cartesian(&vec![per_type_routes.len(); cfg.num_types])
            .into_iter()
            .map(|ix| DispatchAction { routes: ix.iter().map(|&r| per_type_routes[r].clone()).collect() })
            .collect();

        // Per-type successor laws, as indices into `type_states`.
        let mut type_laws: HashMap<(usize, usize, usize), Vec<(usize, f64)>> = HashMap::new();
        for j in 0..cfg.num_types {
            for (ti, ts) in type_states.iter().enumerate() {
                for (ri, routes) in per_type_routes.iter().enumerate() {
                    let law = next_state_distribution_type(cfg, j, ts, routes, usize::MAX)?
                        .into_iter()
                        .map(|(s, p)| (type_index[&s], p))
                        .collect();
                    type_laws.insert((j, ti, ri), law);
                }
            }
        }
        let route_index: HashMap<&Vec<usize>, usize> =
            per_type_routes.iter().enumerate().map(|(i, r)| (r, i)).collect();

        let mut transitions = Vec::with_capacity(states.len() * actions.len());
        for s in &states {
            let ts_ix: Vec<usize> = s.types.iter().map(|t| type_index[t]).collect();
            for a in &actions {
                let mut joint: Vec<(Vec<usize>, f64)> = vec![(Vec::with_capacity(cfg.num_types), 1.0)];
                for j in 0..cfg.num_types {
                    let law = &type_laws[&(j, ts_ix[j], route_index[&a.routes[j]])];
                    joint = joint
                        .iter()
                        .flat_map(|(prefix, p)| {
                            law.iter().map(move |&(t, q)| {
                                let mut v = prefix.clone();
                                v.push(t);
                                (v, p * q)
                            })
                        })
                        .collect();
                }
                let succ = joint
                    .into_iter()
                    .map(|(ix, p)| {
                        let state = SystemState { types: ix.iter().map(|&i| type_states[i].clone()).collect() };
                        (index[&state], p)
                    })
                    .collect();
                transitions.push(succ);
            }
        }
        let costs = states.iter().map(|s| stage_cost(cfg, s)).collect();
        Ok(EnumeratedMdp { cfg: cfg.clone(), states, index, actions, costs, transitions })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn state(&self, s: usize) -> &SystemState {
        &self.states[s]
    }

    pub fn state_index(&self, state: &SystemState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn actions(&self) -> &[DispatchAction] {
        &self.actions
    }

    pub fn action_index(&self, action: &DispatchAction) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    pub fn cost(&self, s: usize) -> f64 {
        self.costs[s]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.actions.len() + a]
    }

    fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let future: f64 = self.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum();
        self.costs[s] + self.cfg.discount * future
    }

    /// Greedy action and value of one Bellman backup at `s`; lowest action index on ties.
    fn backup(&self, s: usize, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for a in 0..self.actions.len() {
            let q = self.q_value(s, a, v);
            if q < best.1 {
                best = (a, q);
            }
        }
        best
    }

    /// `|| V - T V ||_inf`
    pub fn bellman_residual(&self, v: &[f64]) -> f64 {
        (0..self.states.len()).into_par_iter().map(|s| (self.backup(s, v).1 - v[s]).abs()).reduce(|| 0.0, f64::max)
    }
}

fn enumerate_type_states(cfg: &SystemConfig) -> Vec<TypeState> {
    let links = cfg.num_aps * cfg.num_servers;
    let flights = cartesian(&vec![cfg.n_max + 1; links]);
    let queues = cartesian(&vec![cfg.queue_dim(); cfg.num_servers]);
    let mut out = Vec::with_capacity(flights.len() * queues.len());
    for f in &flights {
        for q in &queues {
            out.push(TypeState {
                in_flight: f.iter().map(|&n| n as Count).collect(),
                queues: q.iter().map(|&i| QueueState::from_index(i, cfg.eta_max)).collect(),
            });
        }
    }
    out
}

/// All index tuples with `tuple[i] < radices[i]`, last position fastest.
fn cartesian(radices: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(radices.len())];
    for &r in radices {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..r).map(move |x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    /// Greedy action index per state.
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub bellman_residual: f64,
}

/// Iterates the Bellman operator until the sup-norm change is below
/// `eps (1 - gamma) / (2 gamma)`.
pub fn value_iteration(mdp: &EnumeratedMdp, eps: f64) -> ValueIterationResult {
    let gamma = mdp.cfg.discount;
    let threshold = eps * (1.0 - gamma) / (2.0 * gamma);
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let next: Vec<f64> = (0..n).into_par_iter().map(|s| mdp.backup(s, &v).1).collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
        if change < threshold {
            break;
        }
    }
    let policy = (0..n).into_par_iter().map(|s| mdp.backup(s, &v).0).collect();
    let bellman_residual = mdp.bellman_residual(&v);
    ValueIterationResult { values: v, policy, iterations, bellman_residual }
}

/// Action law of a policy per state: `(action index, probability)`.
pub type PolicyTable = Vec<Vec<(usize, f64)>>;

pub fn deterministic_table(actions: &[usize]) -> PolicyTable {
    actions.iter().map(|&a| vec![(a, 1.0)]).collect()
}

/// Tabulates a dispatcher over every enumerated state. The random kind
/// yields the uniform law over all actions.
pub fn policy_table(mdp: &EnumeratedMdp, dispatcher: &Dispatcher) -> PolicyTable {
    if dispatcher.kind() == PolicyKind::Random {
        let a_n = mdp.num_actions();
        return vec![(0..a_n).map(|a| (a, 1.0 / a_n as f64)).collect(); mdp.num_states()];
    }
    mdp.states
        .par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let action = dispatcher.decide(s, &mut rng);
            vec![(mdp.action_index(&action).expect("dispatcher produced an unknown action"), 1.0)]
        })
        .collect()
}

/// Solves `(I - gamma P_pi) V = g`.
pub fn policy_evaluation_exact(mdp: &EnumeratedMdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let gamma = mdp.cfg.discount;
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|s| {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for &(a, pa) in &policy[s] {
                for &(t, p) in mdp.successors(s, a) {
                    *row.entry(t).or_insert(0.0) += pa * p;
                }
            }
            row.into_iter().collect()
        })
        .collect();
    if n <= DENSE_SOLVE_LIMIT {
        let mut system = DMatrix::<f64>::identity(n, n);
        for (s, row) in rows.iter().enumerate() {
            for &(t, p) in row {
                system[(s, t)] -= gamma * p;
            }
        }
        let rhs = DVector::from_column_slice(&mdp.costs);
        let v = system.lu().solve(&rhs).ok_or_else(|| Error::Numerical("I - gamma P is singular".into()))?;
        let mut v: Vec<f64> = v.iter().cloned().collect();
        zero_closed_free_states(&rows, &mdp.costs, &mut v);
        return Ok(v);
    }
    let mut v = vec![0.0; n];
    let threshold = 1e-12 * (1.0 - gamma) * mdp.cfg.max_stage_cost().max(1.0);
    loop {
        let next: Vec<f64> = rows
            .par_iter()
            .enumerate()
            .map(|(s, row)| mdp.costs[s] + gamma * row.iter().map(|&(t, p)| p * v[t]).sum::<f64>())
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < threshold {
            zero_closed_free_states(&rows, &mdp.costs, &mut v);
            return Ok(v);
        }
    }
}

/// States that only ever reach zero-cost states have value exactly zero.
fn zero_closed_free_states(rows: &[Vec<(usize, f64)>], costs: &[f64], v: &mut [f64]) {
    let mut free: Vec<bool> = costs.iter().map(|&c| c == 0.0).collect();
    loop {
        let mut changed = false;
        for (s, row) in rows.iter().enumerate() {
            if free[s] && row.iter().any(|&(t, p)| p > 0.0 && !free[t]) {
                free[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (x, f) in v.iter_mut().zip(free) {
        if f {
            *x = 0.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replications: usize,
    pub horizon: usize,
}

/// Slots after which the discounted tail is below `tol`.
pub fn mc_horizon(cfg: &SystemConfig, tol: f64) -> usize {
    crate::markov::truncation_horizon(tol, cfg.discount, cfg.max_stage_cost())
}

/// Monte-Carlo discounted cost of a dispatcher from `start`.
pub fn policy_evaluation_mc(
    cfg: &SystemConfig,
    dispatcher: &Dispatcher,
    start: &SystemState,
    replications: usize,
    seed: u64,
) -> Result<McEstimate> {
    let dynamics = Dynamics::new(cfg.clone())?;
    let horizon = mc_horizon(cfg, 1e-6);
    let gamma = cfg.discount;
    let totals: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut streams = RandomStreams::new(seed, rep as u64);
            let mut state = start.clone();
            let mut total = 0.0;
            let mut discount = 1.0;
            for _ in 0..horizon {
                total += discount * stage_cost(cfg, &state);
                let action = dispatcher.decide(&state, &mut streams.policy);
                state = dynamics.step(&state, &action, &mut streams).0;
                discount *= gamma;
            }
            total
        })
        .collect();
    let (mean, stderr) = mean_stderr(&totals);
    Ok(McEstimate { mean, stderr, replications, horizon })
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-state ordering `V* <= V_improved <= V_baseline`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub num_states: usize,
    pub v_star: Vec<f64>,
    pub v_improved: Vec<f64>,
    pub v_baseline: Vec<f64>,
    /// `min_s V_improved(s) - V*(s)`
    pub min_lower_margin: f64,
    /// `min_s V_baseline(s) - V_improved(s)`
    pub min_upper_margin: f64,
    pub mean_lower_margin: f64,
    pub mean_upper_margin: f64,
    /// States where `V_improved < V* - lower_tol`.
    pub lower_violations: Vec<usize>,
    /// States where `V_improved > V_baseline + upper_tol`.
    pub upper_violations: Vec<usize>,
    pub lower_tolerance: f64,
    pub upper_tolerance: f64,
    pub bellman_residual: f64,
    pub value_iterations: usize,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.lower_violations.is_empty() && self.upper_violations.is_empty()
    }
}

/// Evaluates the optimal, improved and baseline policies exactly and checks
/// their per-state ordering. `improved` must be the improvement of
/// `baseline`; value iteration runs to `eps_vi`, which also bounds the
/// tolerance of the lower comparison.
pub fn check_bound(
    mdp: &EnumeratedMdp,
    improved: &Dispatcher,
    baseline: &Dispatcher,
    eps_vi: f64,
) -> Result<BoundReport> {
    let vi = value_iteration(mdp, eps_vi);
    let v_improved = policy_evaluation_exact(mdp, &policy_table(mdp, improved))?;
    let v_baseline = policy_evaluation_exact(mdp, &policy_table(mdp, baseline))?;
    let scale = v_baseline.iter().cloned().fold(1.0, f64::max);
    let lower_tolerance = eps_vi;
    let upper_tolerance = 1e-9 * scale;
    let n = mdp.num_states();
    let lower: Vec<f64> = (0..n).map(|s| v_improved[s] - vi.values[s]).collect();
    let upper: Vec<f64> = (0..n).map(|s| v_baseline[s] - v_improved[s]).collect();
    let lower_violations = (0..n).filter(|&s| lower[s] < -lower_tolerance).collect();
    let upper_violations = (0..n).filter(|&s| upper[s] < -upper_tolerance).collect();
    Ok(BoundReport {
        num_states: n,
        min_lower_margin: lower.iter().cloned().fold(f64::INFINITY, f64::min),
        min_upper_margin: upper.iter().cloned().fold(f64::INFINITY, f64::min),
        mean_lower_margin: lower.iter().sum::<f64>() / n as f64,
        mean_upper_margin: upper.iter().sum::<f64>() / n as f64,
        lower_violations,
        upper_violations,
        lower_tolerance,
        upper_tolerance,
        bellman_residual: vi.bellman_residual,
        value_iterations: vi.iterations,
        v_star: vi.values,
        v_improved,
        v_baseline,
    })
}
