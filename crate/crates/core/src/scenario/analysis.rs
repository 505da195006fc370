//! Run metrics: energy loss, voltage violations, oscillation index and the
//! phase of the perturbation component in reactive power traces.

use std::f64::consts::PI;

use serde::Serialize;

use crate::control::{ANSI_HIGH, ANSI_LOW};

use super::{ScenarioError, ScenarioSummary, StepRecord};

/// Slack on the ANSI band edges when counting violations.
pub const VIOLATION_EPS: f64 = 1e-9;
/// Sliding window (samples of ΔQ) for the oscillation index.
pub const OSCILLATION_WINDOW: usize = 20;

pub fn is_violation(v: f64) -> bool {
    !(ANSI_LOW - VIOLATION_EPS..=ANSI_HIGH + VIOLATION_EPS).contains(&v)
}

/// Number of buses with any phase outside the ANSI band in one record.
pub fn record_violations(rec: &StepRecord) -> usize {
    rec.voltages.iter().filter(|bus| bus.iter().any(|v| is_violation(*v))).count()
}

/// Violations over records whose time lies in `[from_s, to_s)`.
pub fn violations_between(records: &[StepRecord], from_s: f64, to_s: f64) -> usize {
    records.iter().filter(|r| r.time_s >= from_s && r.time_s < to_s).map(record_violations).sum()
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Max over sliding windows of `window` consecutive differences of the
/// population standard deviation of those differences. Shorter series use a
/// single window.
pub fn oscillation_index(series: &[f64], window: usize) -> f64 {
    if series.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.len() <= window {
        return std_dev(&diffs);
    }
    diffs.windows(window).map(std_dev).fold(0.0, f64::max)
}

pub fn summarize(records: &[StepRecord], dt: f64, price_per_kwh: f64) -> Result<ScenarioSummary, ScenarioError> {
    let first = records.first().ok_or(ScenarioError::Empty)?;
    let energy_loss_kwh = records.iter().map(|r| r.loss_kw * dt / 3600.0).sum::<f64>();
    let oscillation_index = (0..first.pvs.len())
        .map(|i| {
            let q: Vec<f64> = records.iter().map(|r| r.pvs[i].q_pv).collect();
            oscillation_index(&q, OSCILLATION_WINDOW)
        })
        .collect();
    Ok(ScenarioSummary {
        feeder: String::new(),
        controller: String::new(),
        steps: records.len(),
        dt_s: dt,
        energy_loss_kwh,
        price_per_kwh,
        cost: energy_loss_kwh * price_per_kwh,
        min_voltage_pu: records.iter().map(StepRecord::min_voltage).fold(f64::INFINITY, f64::min),
        max_voltage_pu: records.iter().map(StepRecord::max_voltage).fold(f64::NEG_INFINITY, f64::max),
        violation_count: records.iter().map(record_violations).sum(),
        oscillation_index,
        nonconverged_steps: records.iter().filter(|r| !r.converged).count(),
        loss_gap_vs_oracle_pct: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseAnalysis {
    /// Phase of trace b minus phase of trace a, wrapped to (−180, 180] degrees.
    pub delta_theta_deg: f64,
    /// Amplitude of trace b over amplitude of trace a.
    pub amplitude_ratio: f64,
    pub amplitude_a: f64,
    pub amplitude_b: f64,
    pub samples: usize,
}

/// Amplitude and phase (rad) of the `ω` component of a detrended trace,
/// using the leading whole number of periods.
pub fn tone(trace: &[f64], omega: f64, dt: f64, min_periods: usize) -> Result<(f64, f64, usize), ScenarioError> {
    let period = 2.0 * PI / (omega * dt);
    let periods = (trace.len() as f64 / period + 1e-9).floor() as usize;
    let needed = (min_periods as f64 * period).ceil() as usize;
    if periods < min_periods {
        return Err(ScenarioError::InsufficientSamples { needed, got: trace.len() });
    }
    let n = ((periods as f64 * period).round() as usize).min(trace.len());
    let x = &trace[..n];

    // Linear trend fitted to per-period means, which carry no tone.
    let nf = n as f64;
    let tm = (nf - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / nf;
    let means: Vec<(f64, f64)> = (0..periods)
        .map(|p| {
            let a = (p as f64 * period).round() as usize;
            let b = (((p + 1) as f64 * period).round() as usize).min(n);
            let seg = &x[a..b];
            ((a + b - 1) as f64 / 2.0, seg.iter().sum::<f64>() / seg.len() as f64)
        })
        .collect();
    let cm = means.iter().map(|m| m.0).sum::<f64>() / periods as f64;
    let ym = means.iter().map(|m| m.1).sum::<f64>() / periods as f64;
    let sxx: f64 = means.iter().map(|m| (m.0 - cm).powi(2)).sum();
    let sxy: f64 = means.iter().map(|m| (m.0 - cm) * (m.1 - ym)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let (mut s, mut c) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let d = v - xm - slope * (k as f64 - tm);
        let arg = omega * dt * k as f64;
        s += d * arg.sin();
        c += d * arg.cos();
    }
    let amp = 2.0 / nf * (s * s + c * c).sqrt();
    // x ≈ amp·sin(ωt + φ) gives s ∝ cos φ, c ∝ sin φ
    Ok((amp, c.atan2(s), n))
}

fn wrap_deg(d: f64) -> f64 {
    let w = d.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Phase difference and amplitude ratio of the `ω` components of two traces.
pub fn trace_phase_difference(a: &[f64], b: &[f64], omega: f64, dt: f64) -> Result<PhaseAnalysis, ScenarioError> {
    let (amp_a, ph_a, n) = tone(a, omega, dt, 4)?;
    let (amp_b, ph_b, _) = tone(&b[..a.len().min(b.len())], omega, dt, 4)?;
    Ok(PhaseAnalysis {
        delta_theta_deg: wrap_deg((ph_b - ph_a).to_degrees()),
        amplitude_ratio: if amp_a > 0.0 { amp_b / amp_a } else { f64::INFINITY },
        amplitude_a: amp_a,
        amplitude_b: amp_b,
        samples: n,
    })
}

/// Compares the reactive power perturbations of inverters `pv_a` and `pv_b`
/// over `records` (assumed to be a steady stretch of one run).
pub fn perturbation_phase_analysis(
    records: &[StepRecord],
    pv_a: usize,
    pv_b: usize,
    omega: f64,
    dt: f64,
) -> Result<PhaseAnalysis, ScenarioError> {
    let trace = |i: usize| -> Vec<f64> { records.iter().map(|r| r.pvs[i].q_pv).collect() };
    trace_phase_difference(&trace(pv_a), &trace(pv_b), omega, dt)
}
