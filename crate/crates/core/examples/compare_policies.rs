//! Simulates the proposed dispatcher against the four heuristics on common
//! random numbers and prints paired differences.
//!
//! cargo run --release --example compare_policies -- [preset] [replications] [slots]

use edgedispatch::policy::PolicyKind;
use edgedispatch::presets::preset;
use edgedispatch::sim::{compare, RunSpec};

fn main() -> edgedispatch::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let p = preset(args.first().map(String::as_str).unwrap_or("tiny"))?;
    let reps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let slots = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(p.slots);

    let kinds = [
        PolicyKind::proposed(p.expectation_mode),
        PolicyKind::Sqf,
        PolicyKind::Suf,
        PolicyKind::Scf,
        PolicyKind::Random,
    ];
    let specs: Vec<RunSpec> = kinds
        .into_iter()
        .map(|kind| RunSpec {
            slots,
            replications: reps,
            seed: 1,
            warmup: p.warmup.min(slots / 10),
            value_options: p.value_options,
            ..RunSpec::new(p.config.clone(), kind)
        })
        .collect();
    let result = compare(&specs)?;

    println!("{} ({reps} x {slots} slots)", p.name);
    for run in &result.runs {
        println!("  {:<9} {:>9.3} +- {:.3}", run.policy, run.mean_cost, run.stderr);
    }
    for d in result.differences.iter().filter(|d| d.first == "proposed") {
        let mark = if d.significant { "*" } else { "" };
        println!("  proposed - {:<7} {:>8.3} [{:.3}, {:.3}]{mark}", d.second, d.mean_diff, d.ci_low, d.ci_high);
    }
    Ok(())
}
