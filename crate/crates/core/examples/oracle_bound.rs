//! Enumerates the 400-state instance, solves it by value iteration and
//! checks V* <= V_improved <= V_baseline in every state.

use std::sync::Arc;

use edgedispatch::oracle::{check_bound, EnumeratedMdp, DEFAULT_STATE_CAP};
use edgedispatch::policy::{Dispatcher, ExpectationMode, PolicyKind};
use edgedispatch::presets::preset;
use edgedispatch::valuefn::{BaselinePolicy, ValueOptions, ValueTables};

fn main() -> edgedispatch::Result<()> {
    let cfg = preset("tiny")?.config;
    let mdp = EnumeratedMdp::build(&cfg, DEFAULT_STATE_CAP)?;
    let tables = Arc::new(ValueTables::new(&cfg, &BaselinePolicy::scf(&cfg), ValueOptions::default())?);
    let baseline = Dispatcher::new(PolicyKind::Baseline, &cfg, Some(tables.clone()))?;

    println!("{} states, {} actions", mdp.num_states(), mdp.num_actions());
    for mode in [ExpectationMode::Exact, ExpectationMode::CertaintyEquivalent] {
        let improved = Dispatcher::new(PolicyKind::proposed(mode), &cfg, Some(tables.clone()))?;
        let r = check_bound(&mdp, &improved, &baseline, 1e-8)?;
        println!(
            "{mode}: min(V_imp - V*) {:.4}, min(V_base - V_imp) {:.4}, mean gain {:.4}, holds {}",
            r.min_lower_margin,
            r.min_upper_margin,
            r.mean_upper_margin,
            r.holds()
        );
    }
    Ok(())
}
