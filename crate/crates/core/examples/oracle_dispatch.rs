//! Grid-search reactive dispatch for one snapshot of the day, compared with
//! no reactive support.
//!
//! cargo run --release --example oracle_dispatch -- [4bus|13bus] [time_s]

use localvvo::powerflow::solve;
use localvvo::scenario::{brute_force_dispatch, snapshot_injections, OracleOptions, ScenarioConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = ScenarioConfig { feeder: args.first().cloned().unwrap_or_else(|| "4bus".into()), ..Default::default() };
    let t: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(43_200.0);
    let model = cfg.load_model().unwrap();
    let inj = snapshot_injections(&model, &cfg, t).unwrap();
    let taps = model.initial_taps();

    let idle = solve(&model, &inj, &taps).unwrap();
    let d = brute_force_dispatch(&model, &inj, &taps, &OracleOptions::default()).unwrap();
    println!("t = {t} s: {:?} search, {} power flows", d.mode, d.evaluations);
    for ((pv, out), q) in model.pvs.iter().zip(&inj.pv).zip(&d.q_kvar) {
        println!("  pv at {:<5} p {:>8.1} kW  q {:>8.1} kvar", pv.bus, out.p_kw, q);
    }
    println!("loss {:.2} kW with dispatch, {:.2} kW without", d.loss_kw, idle.total_loss_kw(&model));
}
