mod common;

use edgedispatch::model::{stage_cost_type, Dynamics, QueueState, SystemConfig, SystemState};
use edgedispatch::rng::RandomStreams;
use edgedispatch::valuefn::{BaselinePolicy, EsForm, ValueOptions, ValueTables};

fn busy_state(cfg: &SystemConfig) -> SystemState {
    let mut s = SystemState::empty(cfg);
    s.types[0].set_in_flight(0, 0, 2);
    s.types[0].set_in_flight(1, 1, 1);
    s.types[0].queues[0] = QueueState::new(1, 2);
    s.types[1].set_in_flight(0, 1, 1);
    s.types[1].queues[1] = QueueState::new(2, 1);
    s
}

fn baseline(cfg: &SystemConfig) -> BaselinePolicy {
    let routes = (0..cfg.num_types).map(|j| (0..cfg.num_aps).map(|k| (k + j) % cfg.num_servers).collect()).collect();
    BaselinePolicy { routes }
}

#[test]
fn longer_truncation_changes_des_by_less_than_eps() {
    let cfg = common::two_type();
    let state = busy_state(&cfg);
    for form in [EsForm::Power, EsForm::Chain] {
        let opts = ValueOptions { es_form: form, ..ValueOptions::default() };
        let short = ValueTables::new(&cfg, &baseline(&cfg), opts).unwrap();
        let t = short.horizon();
        // eps' such that the horizon grows by half
        let c_max = short.queue_cost().max();
        let gamma = cfg.discount;
        let eps_long = c_max / (1.0 - gamma) * gamma.powf(1.5 * t as f64);
        let long = ValueTables::new(&cfg, &baseline(&cfg), ValueOptions { eps_trunc: eps_long, ..opts }).unwrap();
        assert!(long.horizon() as f64 >= 1.5 * t as f64);
        for j in 0..cfg.num_types {
            for m in 0..cfg.num_servers {
                let (a, b) = (short.d_es(j, &state.types[j], m), long.d_es(j, &state.types[j], m));
                assert!((a - b).abs() < opts.eps_trunc, "{form:?} j={j} m={m}: {a} vs {b}");
            }
        }
    }
}

fn swap_types(cfg: &SystemConfig) -> SystemConfig {
    let mut c = cfg.clone();
    for row in c.arrival_prob.iter_mut() {
        row.reverse();
    }
    for per_ap in c.mean_upload_delay.iter_mut() {
        per_ap.reverse();
    }
    for per_server in c.comp_time_pmf.iter_mut() {
        per_server.reverse();
    }
    c
}

#[test]
fn baseline_value_ignores_type_labels() {
    let cfg = common::two_type();
    let state = busy_state(&cfg);
    let mut base = baseline(&cfg);
    let tables = ValueTables::new(&cfg, &base, ValueOptions::default()).unwrap();

    let swapped_cfg = swap_types(&cfg);
    base.routes.reverse();
    let mut swapped_state = state.clone();
    swapped_state.types.reverse();
    let swapped = ValueTables::new(&swapped_cfg, &base, ValueOptions::default()).unwrap();

    let (a, b) = (tables.v_baseline(&state), swapped.v_baseline(&swapped_state));
    assert!((a - b).abs() < 1e-9 * a.abs(), "{a} vs {b}");
    assert!((tables.w_j(0, &state.types[0]) - swapped.w_j(1, &swapped_state.types[1])).abs() < 1e-9 * a);
}

#[test]
fn types_are_valued_independently() {
    let cfg = common::two_type();
    let state = busy_state(&cfg);
    let base = baseline(&cfg);
    let total = ValueTables::new(&cfg, &base, ValueOptions::default()).unwrap().v_baseline(&state);
    let mut sum = 0.0;
    for j in 0..cfg.num_types {
        let single = SystemConfig {
            num_types: 1,
            arrival_prob: cfg.arrival_prob.iter().map(|r| vec![r[j]]).collect(),
            mean_upload_delay: cfg.mean_upload_delay.iter().map(|r| vec![r[j].clone()]).collect(),
            comp_time_pmf: cfg.comp_time_pmf.iter().map(|r| vec![r[j].clone()]).collect(),
            ..cfg.clone()
        };
        let b = BaselinePolicy { routes: vec![base.routes[j].clone()] };
        let tables = ValueTables::new(&single, &b, ValueOptions::default()).unwrap();
        sum += tables.w_j(0, &state.types[j]);
    }
    assert!((total - sum).abs() < 1e-9 * total, "{total} vs {sum}");
}

/// Discounted upload and queue cost of the baseline from `state`, by simulation.
fn simulate_baseline(
    cfg: &SystemConfig,
    base: &BaselinePolicy,
    state: &SystemState,
    reps: u64,
) -> (Vec<f64>, Vec<f64>) {
    let dynamics = Dynamics::new(cfg.clone()).unwrap();
    let action = base.as_action();
    let gamma = cfg.discount;
    let horizon = (1e-7f64 * (1.0 - gamma) / cfg.max_stage_cost()).ln() / gamma.ln();
    let (mut uploads, mut queues) = (Vec::new(), Vec::new());
    for r in 0..reps {
        let mut streams = RandomStreams::new(2024, r);
        let mut s = state.clone();
        let (mut up, mut q, mut w) = (0.0, 0.0, 1.0);
        for _ in 0..horizon.ceil() as usize {
            for ts in &s.types {
                let n = ts.total_in_flight() as f64;
                up += w * n;
                q += w * (stage_cost_type(cfg, ts) - n);
            }
            s = dynamics.step(&s, &action, &mut streams).0;
            w *= gamma;
        }
        uploads.push(up);
        queues.push(q);
    }
    (uploads, queues)
}

#[test]
fn upload_terms_match_monte_carlo() {
    let cfg = common::two_type();
    let state = busy_state(&cfg);
    let base = baseline(&cfg);
    let tables = ValueTables::new(&cfg, &base, ValueOptions::default()).unwrap();
    let (uploads, queues) = simulate_baseline(&cfg, &base, &state, 20_000);

    let d_ap: f64 = (0..cfg.num_types).map(|j| tables.d_ap_sum(j, &state.types[j])).sum();
    let (mean, se) = common::mean_stderr(&uploads);
    assert!((mean - d_ap).abs() < 3.0 * se, "d_AP {d_ap} vs Monte Carlo {mean} +- {se}");

    // The queue terms rest on the Bernoulli arrival approximation; report only.
    let d_es: f64 = (0..cfg.num_types)
        .flat_map(|j| (0..cfg.num_servers).map(move |m| (j, m)))
        .map(|(j, m)| tables.d_es(j, &state.types[j], m))
        .sum();
    let (qm, qse) = common::mean_stderr(&queues);
    println!("d_ES {d_es:.4} vs Monte Carlo {qm:.4} +- {qse:.4} (gap {:.4})", d_es - qm);
}

#[test]
fn fixture_link_value() {
    let cfg = common::single_link(0.0, 2.0, vec![1.0], 1, 1, 0.9);
    let tables = ValueTables::new(&cfg, &BaselinePolicy::scf(&cfg), ValueOptions::default()).unwrap();
    assert!((tables.d_ap(0, 0, 0, 1) - 1.0 / (1.0 - 0.45)).abs() < 1e-9);
    assert_eq!(tables.d_ap(0, 0, 0, 0), 0.0);
}
