//! A day on the 4-bus feeder under the adaptive controller: node 4 starts
//! undervoltage and is pulled into the ANSI band within minutes.
//!
//! cargo run --release --example qsts_4bus -- [output_dir]

use localvvo::scenario::output::write_run;
use localvvo::scenario::{analysis, run_qsts, ScenarioConfig};

fn main() {
    let cfg = ScenarioConfig::default();
    let model = cfg.load_model().unwrap();
    let run = run_qsts(&cfg).expect("scenario runs");
    let node4 = model.bus_index("4").unwrap();
    println!("{:>5} {:>8} {:>9} {:>9} {:>9}", "hour", "V4 (pu)", "q3 kvar", "q4 kvar", "loss kW");
    for rec in run.records.iter().step_by(120) {
        let v4 = rec.voltages[node4].iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:>5.0} {v4:>8.4} {:>9.1} {:>9.1} {:>9.1}",
            rec.time_s / 3600.0,
            rec.pvs[0].q_pv,
            rec.pvs[1].q_pv,
            rec.loss_kw
        );
    }
    let s = &run.summary;
    println!(
        "loss {:.1} kWh (${:.2}), V in [{:.4}, {:.4}], violations {} total, {} after hour 1",
        s.energy_loss_kwh,
        s.cost,
        s.min_voltage_pu,
        s.max_voltage_pu,
        s.violation_count,
        analysis::violations_between(&run.records, 3600.0, f64::INFINITY)
    );
    if let Some(dir) = std::env::args().nth(1) {
        let (csv, json) = write_run(dir.as_ref(), "4bus_es-adaptive", &model, &run.records, &run.summary, false, true)
            .expect("writable output directory");
        println!("wrote {} and {}", csv.display(), json.display());
    }
}
