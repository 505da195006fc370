//! Tabulates the Volt-VAR droop curve and the low-pass (hysteresis) response
//! to a voltage step.
//!
//! cargo run --example droop_curve -- [v_ref] [q0_kvar]

use localvvo::control::{droop_eval, hysteresis_update, DroopParams};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let q_max = 300.0;
    let p = DroopParams {
        v_min: 0.95,
        v_max: 1.05,
        v_ref: args.first().copied().unwrap_or(1.0),
        deadband: 0.02,
        q0: args.get(1).copied().unwrap_or(0.0),
    };
    println!("droop with {p:?}, Q_max {q_max} kvar");
    println!("{:>8} {:>10}", "V (pu)", "Q (kvar)");
    for k in 0..=24 {
        let v = 0.94 + 0.005 * k as f64;
        println!("{v:>8.3} {:>10.2}", droop_eval(&p, v, -q_max, q_max));
    }

    // voltage steps from 1.0 to 0.96 pu; μ = 0.3 spreads the response over a few steps
    let target = droop_eval(&p, 0.96, -q_max, q_max);
    let mut q = droop_eval(&p, 1.0, -q_max, q_max);
    println!("\nhysteresis toward {target:.2} kvar:");
    for step in 1..=10 {
        q = hysteresis_update(q, target, 0.3);
        println!("  step {step:>2}: {q:>8.2}");
    }
}
