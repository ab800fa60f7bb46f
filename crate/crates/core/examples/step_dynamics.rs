//! Steps the slot dynamics by hand on a config loaded from TOML.

use edgedispatch::cli::{ConfigFile, Overrides, ResolvedConfig};
use edgedispatch::model::{stage_cost, Dynamics};
use edgedispatch::rng::RandomStreams;
use edgedispatch::valuefn::BaselinePolicy;

fn main() -> edgedispatch::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/small.toml");
    let cfg = ResolvedConfig::resolve(&ConfigFile::load(path.as_ref())?, &Overrides::default())?;
    let dynamics = Dynamics::new(cfg.system.clone())?;
    let action = BaselinePolicy::scf(&cfg.system).as_action();

    let mut state = cfg.state.clone();
    let mut streams = RandomStreams::new(cfg.seed, 0);
    for t in 1..=12 {
        let (next, events) = dynamics.step(&state, &action, &mut streams);
        let ts = &next.types[0];
        println!(
            "slot {t:>2}: cost {:>4} arrivals {} in flight {:?} queues {:?}",
            stage_cost(&cfg.system, &state),
            events.total_arrivals(),
            ts.in_flight,
            ts.queues.iter().map(|q| (q.len, q.remaining)).collect::<Vec<_>>()
        );
        state = next;
    }
    Ok(())
}
