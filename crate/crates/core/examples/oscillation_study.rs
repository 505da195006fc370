//! With a narrowed droop band the fixed droop loop becomes unstable and its
//! reactive output chatters; the adaptive controller's hysteresis and moving
//! reference keep it quiet.
//!
//! cargo run --release --example oscillation_study -- [vmin] [vmax]

use localvvo::scenario::{analysis, run_qsts, ControllerKind, ScenarioConfig};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let band = [args.first().copied().unwrap_or(0.88), args.get(1).copied().unwrap_or(1.12)];
    let cfg = ScenarioConfig { band: Some(band), ..Default::default() };
    println!("band {band:?}");
    for kind in [ControllerKind::FixedDroop, ControllerKind::EsAdaptive] {
        let run = run_qsts(&cfg.with_controller(kind)).unwrap();
        println!(
            "{kind:<12} oscillation {:?}  violations in hours 1-8: {}  loss {:.1} kWh",
            run.summary.oscillation_index.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>(),
            analysis::violations_between(&run.records, 3600.0, 8.0 * 3600.0),
            run.summary.energy_loss_kwh
        );
    }
}
