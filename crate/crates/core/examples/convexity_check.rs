//! Checks the local convexity condition along an adaptive run and the
//! curvature assumptions at one snapshot.
//!
//! cargo run --release --example convexity_check -- [4bus|13bus]

use localvvo::convexity::{assumption_check, SIGN_TOL, STEP_PER_KVA};
use localvvo::scenario::{run_qsts, snapshot_injections, ScenarioConfig};

fn main() {
    let cfg = ScenarioConfig {
        feeder: std::env::args().nth(1).unwrap_or_else(|| "4bus".into()),
        convexity_report: true,
        ..Default::default()
    };
    let model = cfg.load_model().unwrap();
    let run = run_qsts(&cfg).unwrap();
    for (i, pv) in model.pvs.iter().enumerate() {
        let reps: Vec<_> = run.records.iter().filter_map(|r| r.convexity.as_ref().map(|c| c[i])).collect();
        let ok = reps.iter().filter(|c| c.satisfied).count();
        let min_d = reps.iter().map(|c| c.denominator).fold(f64::INFINITY, f64::min);
        println!("pv at {:<5} satisfied {ok}/{} steps, min denominator {min_d:.4}", pv.bus, reps.len());
    }

    let inj = snapshot_injections(&model, &cfg, 43_200.0).unwrap();
    println!("\ncurvature at noon (h = {STEP_PER_KVA}·kVA):");
    for (i, pv) in model.pvs.iter().enumerate() {
        let a =
            assumption_check(&model, &inj, &model.initial_taps(), i, STEP_PER_KVA * pv.rated_kva, SIGN_TOL).unwrap();
        println!(
            "  pv at {:<5} d²y {:+.3e} (concave {})  d²P {:+.3e} (convex {})  d²Q {:+.3e} (convex {})",
            pv.bus, a.d2y, a.y_concave, a.d2p, a.p_convex, a.d2q, a.q_convex
        );
    }
}
