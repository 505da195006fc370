//! Extremum seeking on the plant y = (μ − μ*)²: the estimate descends to μ*
//! with a positive gain and runs away from it with a negative one.
//!
//! cargo run --example es_quadratic -- [mu_star] [gain]

use localvvo::control::{EsParams, EsState};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let mu_star = args.first().copied().unwrap_or(0.98);
    // the feeder default gain is sized for objectives around 1e-3; this plant has unit curvature
    let gain = args.get(1).copied().unwrap_or(40.0);
    let params = EsParams { gain, ..EsParams::default() };
    let mut es = EsState::new(params, 1.0);
    let mut mu = es.mu;
    println!(
        "μ* = {mu_star}, K = {gain}, A = {}, period {:.0} s",
        params.amplitude,
        2.0 * std::f64::consts::PI / params.omega
    );
    for k in 1..=600 {
        mu = es.step((mu - mu_star).powi(2), 30.0);
        if k % 40 == 0 {
            println!(
                "  step {k:>4}: μ̂ = {:.5}  μ = {mu:.5}  |μ̂ − μ*| = {:.2e}",
                es.mu_hat,
                (es.mu_hat - mu_star).abs()
            );
        }
    }
}
