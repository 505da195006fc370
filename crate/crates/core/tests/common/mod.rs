//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use localvvo::feeder::{parse_feeder, FeederModel};

/// Source bus `s` feeding bus `l` over one single-phase (phase a) line of
/// `r + jx` ohm, with a constant-power load of `p_kw + j q_kvar` at `l` and,
/// if `pv_kva > 0`, an inverter there. Base 3 MVA, 7.2 kV line-to-neutral.
pub fn two_bus(r: f64, x: f64, p_kw: f64, q_kvar: f64, pv_kva: f64) -> FeederModel {
    let pv = if pv_kva > 0.0 {
        format!(r#"{{"bus": "l", "phases": "a", "rated_kva": {pv_kva}, "rated_kw": {}}}"#, pv_kva / 1.2)
    } else {
        String::new()
    };
    let json = format!(
        r#"{{
        "base_mva": 3.0,
        "source": {{"bus": "s", "voltage_pu": 1.0}},
        "buses": [
            {{"id": "s", "phases": "a", "base_kv": 7.2}},
            {{"id": "l", "phases": "a", "base_kv": 7.2}}
        ],
        "branches": [
            {{"id": "s-l", "from": "s", "to": "l", "phases": "a",
              "z": [[[{r},{x}],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]]}}
        ],
        "loads": [{{"bus": "l", "per_phase": [{{"phase": "a", "kw": {p_kw}, "kvar": {q_kvar}}}]}}],
        "pvs": [{pv}]
    }}"#
    );
    parse_feeder(&json).expect("valid two-bus fixture")
}

/// Impedance base (ohm) of [`two_bus`]: 7.2² / 1.
pub const TWO_BUS_Z_BASE: f64 = 51.84;
/// Per-phase power base (kVA) of [`two_bus`].
pub const TWO_BUS_S_BASE: f64 = 1000.0;

/// Receiving-end voltage magnitude of a single line feeding a constant-power
/// load, from the biquadratic `V⁴ + (2(rP + xQ) − V₀²)V² + |z|²|S|² = 0`
/// (pu quantities; the high-voltage root).
pub fn two_bus_voltage(v0: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = v0 * v0 - 2.0 * (r * p + x * q);
    let disc = b * b - 4.0 * (r * r + x * x) * (p * p + q * q);
    assert!(disc >= 0.0, "no power-flow solution");
    ((b + disc.sqrt()) / 2.0).sqrt()
}
