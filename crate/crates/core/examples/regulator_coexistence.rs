//! The 13-bus feeder with its substation at 1.0 pu, so the regulator has
//! work to do: tap positions over the day next to the adaptive inverters.
//!
//! cargo run --release --example regulator_coexistence

use localvvo::scenario::{run_qsts, ScenarioConfig};

fn main() {
    let cfg = ScenarioConfig { feeder: "13bus".into(), substation_pu: Some(1.0), ..Default::default() };
    let run = run_qsts(&cfg).unwrap();
    let mut last = None;
    for rec in &run.records {
        if last.as_ref() != Some(&rec.taps) {
            println!("t = {:>5.2} h  taps {:?}", rec.time_s / 3600.0, rec.taps);
            last = Some(rec.taps.clone());
        }
    }
    println!(
        "loss {:.1} kWh, V in [{:.4}, {:.4}], {} violations",
        run.summary.energy_loss_kwh,
        run.summary.min_voltage_pu,
        run.summary.max_voltage_pu,
        run.summary.violation_count
    );
}
