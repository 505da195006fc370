//! Solves one snapshot of a bundled feeder and prints bus voltages and losses.
//!
//! cargo run --example power_flow_snapshot -- [4bus|13bus] [load_scale] [pv_fraction] [q_fraction]

use localvvo::control::q_capacity;
use localvvo::feeder::bundled;
use localvvo::powerflow::{solve, InjectionSet, PvOutput};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("4bus");
    let num = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (load_scale, pv_fraction, q_fraction) = (num(1, 1.0), num(2, 0.0), num(3, 0.0));

    let model = bundled::by_name(name).expect("feeder is 4bus or 13bus");
    let mut inj = InjectionSet::nominal(&model);
    inj.load_scale.iter_mut().for_each(|s| *s = load_scale);
    inj.pv = model
        .pvs
        .iter()
        .map(|pv| {
            let p_kw = pv.rated_kw * pv_fraction;
            let q_kvar = q_fraction * q_capacity(pv.rated_kva, p_kw).unwrap();
            PvOutput { p_kw, q_kvar }
        })
        .collect();

    let sol = solve(&model, &inj, &model.initial_taps()).expect("power flow converges");
    println!("{} converged in {} iterations", model.name.as_deref().unwrap_or(name), sol.iterations);
    for (b, bus) in model.buses.iter().enumerate() {
        let mags: Vec<String> = bus
            .phases
            .indices()
            .map(|p| format!("{}={:.4}", ["a", "b", "c"][p], sol.voltage_magnitude(b, p)))
            .collect();
        println!("  bus {:>4}: {}", bus.id, mags.join(" "));
    }
    println!("total loss {:.2} kW", sol.total_loss_kw(&model));
}
