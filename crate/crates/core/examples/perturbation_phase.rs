//! Phase and amplitude of the dither component in the reactive power of
//! the two 4-bus inverters, hour by hour, under steady load and irradiance.
//! Both inverters use the same perturbation frequency, so they lock into
//! nearly the same phase once the droop offsets settle.
//!
//! cargo run --release --example perturbation_phase -- [hours]

use localvvo::scenario::{perturbation_phase_analysis, run_qsts, ProfileAssignment, ScenarioConfig};

fn main() {
    let hours: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6.0);
    let cfg = ScenarioConfig {
        hours,
        profiles: ProfileAssignment { loads: vec!["one".into()], pvs: vec!["one".into()] },
        ..Default::default()
    };
    let run = run_qsts(&cfg).unwrap();
    let per_hour = (3600.0 / cfg.dt) as usize;
    for (h, chunk) in run.records.chunks(per_hour).enumerate() {
        match perturbation_phase_analysis(chunk, 0, 1, cfg.adaptive.es.omega, cfg.dt) {
            Ok(a) => println!(
                "hour {h}: Δθ {:>7.2}°  amplitudes {:.2} / {:.2} kvar",
                a.delta_theta_deg, a.amplitude_a, a.amplitude_b
            ),
            Err(e) => println!("hour {h}: {e}"),
        }
    }
}
