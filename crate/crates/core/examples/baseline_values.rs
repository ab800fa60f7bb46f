//! Closed-form value functions of the fixed-route baseline at one state.

use edgedispatch::model::{QueueState, SystemState};
use edgedispatch::presets::preset;
use edgedispatch::valuefn::{BaselinePolicy, EsForm, ValueOptions, ValueTables};

fn main() -> edgedispatch::Result<()> {
    let cfg = preset("tiny")?.config;
    let baseline = BaselinePolicy::scf(&cfg);

    let mut state = SystemState::empty(&cfg);
    state.types[0].set_in_flight(0, 1, 1);
    state.types[0].queues[1] = QueueState::new(2, 1);

    for form in [EsForm::Power, EsForm::Chain] {
        let tables = ValueTables::new(&cfg, &baseline, ValueOptions { es_form: form, ..ValueOptions::default() })?;
        let report = tables.report(&state);
        println!("{form:?}: horizon {}, V_baseline {:.6}", report.horizon, report.v_baseline);
        for t in &report.types {
            for s in &t.servers {
                println!("  server {} alpha {:.4?} d_ES {:.6}", s.server, s.alpha_head, s.d_es);
            }
        }
    }

    let tables = ValueTables::new(&cfg, &baseline, ValueOptions::default())?;
    println!("d_AP on link (0 -> 1) by in-flight count: {:.6?}", tables.d_ap_table(0, 0, 1));
    Ok(())
}
