//! Exact and Monte Carlo evaluation of each policy from the empty state.

use std::sync::Arc;

use edgedispatch::model::SystemState;
use edgedispatch::oracle::{
    policy_evaluation_exact, policy_evaluation_mc, policy_table, EnumeratedMdp, DEFAULT_STATE_CAP,
};
use edgedispatch::policy::{Dispatcher, PolicyKind};
use edgedispatch::presets::preset;
use edgedispatch::valuefn::{BaselinePolicy, ValueOptions, ValueTables};

fn main() -> edgedispatch::Result<()> {
    let cfg = preset("tiny")?.config;
    let mdp = EnumeratedMdp::build(&cfg, DEFAULT_STATE_CAP)?;
    let tables = Arc::new(ValueTables::new(&cfg, &BaselinePolicy::scf(&cfg), ValueOptions::default())?);
    let empty = SystemState::empty(&cfg);
    let s0 = mdp.state_index(&empty).expect("empty state is enumerated");

    for name in ["proposed", "sqf", "suf", "scf", "random"] {
        let kind: PolicyKind = name.parse()?;
        let dispatcher = Dispatcher::new(kind, &cfg, Some(tables.clone()))?;
        let exact = policy_evaluation_exact(&mdp, &policy_table(&mdp, &dispatcher))?[s0];
        let mc = policy_evaluation_mc(&cfg, &dispatcher, &empty, 2000, 5)?;
        println!("{name:<9} exact {exact:>8.4}   monte carlo {:>8.4} +- {:.4}", mc.mean, mc.stderr);
    }
    Ok(())
}
