//! One decision of the proposed dispatcher with its Q-factor table.

use std::sync::Arc;

use edgedispatch::model::{QueueState, SystemState};
use edgedispatch::policy::{Dispatcher, ExpectationMode, PolicyKind};
use edgedispatch::presets::preset;
use edgedispatch::valuefn::{BaselinePolicy, ValueOptions, ValueTables};
use rand::SeedableRng;

fn main() -> edgedispatch::Result<()> {
    let cfg = preset("tiny")?.config;
    let tables = Arc::new(ValueTables::new(&cfg, &BaselinePolicy::scf(&cfg), ValueOptions::default())?);

    // Server 1 is congested.
    let mut state = SystemState::empty(&cfg);
    state.types[0].queues[1] = QueueState::new(2, 2);
    state.types[0].set_in_flight(1, 1, 1);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for mode in [ExpectationMode::Exact, ExpectationMode::CertaintyEquivalent] {
        let dispatcher = Dispatcher::new(PolicyKind::proposed(mode), &cfg, Some(tables.clone()))?;
        let (action, reports) = dispatcher.decide_with_reports(&state, &mut rng);
        let r = &reports[0];
        println!("{mode}: routes {:?}", action.routes[0]);
        for (k, row) in r.scores.iter().enumerate() {
            println!("  AP {k}: Q by server {:.4?}", row);
        }
        println!("  baseline {:.4} -> improved {:.4}", r.baseline_score, r.final_score);
    }
    Ok(())
}
