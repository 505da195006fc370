//! Local inverter controllers: Volt-VAR droop, reactive power hysteresis,
//! extremum seeking on the droop reference voltage and steady-state error
//! adaptation of the droop offset.
//!
//! Controllers see only their own bus voltage, the current of their upstream
//! branch and their own active power output. Nothing in this module reads
//! another controller's state.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::PhaseMatrix;

/// ANSI service voltage band used by the penalty.
pub const ANSI_LOW: f64 = 0.95;
pub const ANSI_HIGH: f64 = 1.05;

/// Search range of the extremum-seeking reference voltage.
pub const VREF_MIN: f64 = 0.95;
pub const VREF_MAX: f64 = 1.05;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("active power {p_kw} kW exceeds inverter rating {rated_kva} kVA")]
    CapacityExceeded { p_kw: f64, rated_kva: f64 },
    #[error("negative active power {0} kW")]
    NegativePower(f64),
    #[error("steady-state error window is empty")]
    EmptyWindow,
    #[error("invalid controller parameters: {0}")]
    Params(String),
}

/// Available reactive capacity `sqrt(S² − P²)`; the lower limit is its negative.
pub fn q_capacity(rated_kva: f64, p_kw: f64) -> Result<f64, ControlError> {
    if p_kw < 0.0 {
        return Err(ControlError::NegativePower(p_kw));
    }
    if p_kw > rated_kva {
        return Err(ControlError::CapacityExceeded { p_kw, rated_kva });
    }
    Ok((rated_kva * rated_kva - p_kw * p_kw).sqrt())
}

/// Droop curve parameters. Voltages in pu, `q0` in kvar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopParams {
    pub v_min: f64,
    pub v_max: f64,
    pub v_ref: f64,
    pub deadband: f64,
    pub q0: f64,
}

impl DroopParams {
    pub fn v_left(&self) -> f64 {
        self.v_ref - 0.5 * self.deadband
    }

    pub fn v_right(&self) -> f64 {
        self.v_ref + 0.5 * self.deadband
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let ok =
            self.v_min < self.v_left() && self.deadband >= 0.0 && self.v_right() < self.v_max && self.q0.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ControlError::Params(format!("need v_min < v_l <= v_r < v_max, got {self:?}")))
        }
    }
}

/// Piecewise-linear Volt-VAR droop: full injection below `v_min`, full
/// absorption above `v_max`, `q0` inside the deadband and linear ramps in
/// between.
pub fn droop_eval(p: &DroopParams, v: f64, q_min: f64, q_max: f64) -> f64 {
    let (vl, vr) = (p.v_left(), p.v_right());
    if v <= p.v_min {
        q_max
    } else if v <= vl {
        -(q_max - p.q0) / (vl - p.v_min) * (v - vl) + p.q0
    } else if v <= vr {
        p.q0
    } else if v <= p.v_max {
        -(q_min - p.q0) / (vr - p.v_max) * (v - vr) + p.q0
    } else {
        q_min
    }
}

/// First-order low-pass on the reactive power command.
pub fn hysteresis_update(q_prev: f64, q_droop: f64, mu: f64) -> f64 {
    (1.0 - mu) * q_prev + mu * q_droop
}

/// Linear penalty for leaving the ANSI band.
pub fn voltage_penalty(v: f64, k_p: f64) -> f64 {
    if v <= ANSI_LOW {
        (ANSI_LOW - v) * k_p
    } else if v >= ANSI_HIGH {
        (v - ANSI_HIGH) * k_p
    } else {
        0.0
    }
}

/// Tuning of the extremum-seeking loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsParams {
    /// Perturbation amplitude (pu).
    pub amplitude: f64,
    /// Perturbation angular frequency (rad/s).
    pub omega: f64,
    /// Washout (high-pass) cutoff (rad/s).
    pub washout: f64,
    /// Integrator gain; positive seeks a minimum.
    pub gain: f64,
}

impl Default for EsParams {
    fn default() -> Self {
        let omega = 2.0 * PI / 300.0;
        EsParams {
            amplitude: 0.005,
            omega,
            washout: omega / 5.0,
            // K·A²·max|η|·dt ≤ 0.002 with max|η| ≈ 1.1 on the bundled
            // feeders, where the startup voltage penalty dominates η.
            gain: 2.0,
        }
    }
}

/// Sampled extremum-seeking controller on a scalar decision variable.
///
/// Each call to [`EsState::step`] consumes the objective measured for the
/// previous output, removes its slow component with a backward-difference
/// washout, demodulates it with the perturbation that produced it,
/// integrates, and emits the next perturbed output.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    pub params: EsParams,
    pub mu_hat: f64,
    pub mu: f64,
    pub eta: f64,
    y_prev: Option<f64>,
    /// Perturbation phase of the last emitted output (rad).
    pub phase: f64,
    pub steps: u64,
}

impl EsState {
    pub fn new(params: EsParams, mu0: f64) -> Self {
        EsState { params, mu_hat: mu0, mu: mu0, eta: 0.0, y_prev: None, phase: 0.0, steps: 0 }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let p = &self.params;
        if !(p.amplitude > 0.0) || !(p.omega > 0.0) || !(p.washout > 0.0) || p.washout >= p.omega {
            return Err(ControlError::Params(format!("need A > 0 and 0 < washout < omega, got {p:?}")));
        }
        if !p.gain.is_finite() {
            return Err(ControlError::Params("non-finite ES gain".into()));
        }
        Ok(())
    }

    /// One sampled update; returns the new output (the perturbed estimate).
    pub fn step(&mut self, y: f64, dt: f64) -> f64 {
        let p = self.params;
        let alpha = 1.0 / (1.0 + p.washout * dt);
        self.eta = match self.y_prev {
            Some(prev) => alpha * (self.eta + y - prev),
            None => 0.0,
        };
        self.y_prev = Some(y);

        let demod = p.amplitude * self.phase.sin() * self.eta;
        self.mu_hat = (self.mu_hat - p.gain * demod * dt).clamp(VREF_MIN, VREF_MAX);

        self.phase = (self.phase + p.omega * dt).rem_euclid(2.0 * PI);
        self.mu = (self.mu_hat + p.amplitude * self.phase.sin()).clamp(VREF_MIN, VREF_MAX);
        self.steps += 1;
        self.mu
    }
}

/// Functional form of [`EsState::step`].
pub fn es_step(state: &EsState, y: f64, dt: f64) -> (EsState, f64) {
    let mut next = state.clone();
    let v = next.step(y, dt);
    (next, v)
}

/// Outer-loop adaptation of the droop offset from the windowed voltage error.
#[derive(Debug, Clone, PartialEq)]
pub struct SseState {
    /// Nominal window length (steps).
    pub window: usize,
    /// Shortened window used after a large offset change.
    pub window_small: usize,
    /// Window length currently in effect.
    pub current_window: usize,
    pub gain_kq: f64,
    pub q0_large: f64,
    pub k_n: u64,
    pub last_sse: f64,
}

impl SseState {
    pub fn new(window: usize, window_small: usize, gain_kq: f64, q0_large: f64) -> Self {
        SseState { window, window_small, current_window: window, gain_kq, q0_large, k_n: 0, last_sse: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.window_small == 0 || self.window_small >= self.window || !(self.gain_kq > 0.0) {
            return Err(ControlError::Params(format!("need 0 < T_small < T and K_Q > 0, got {self:?}")));
        }
        Ok(())
    }

    /// Consumes one window of `(V_t, V_ref_t)` samples and returns the new
    /// offset and the length of the next window.
    pub fn update(
        &mut self,
        samples: &[(f64, f64)],
        q0_prev: f64,
        q_min: f64,
        q_max: f64,
    ) -> Result<(f64, usize), ControlError> {
        if samples.is_empty() {
            return Err(ControlError::EmptyWindow);
        }
        let sse: f64 = samples.iter().map(|(v, r)| v - r).sum();
        let q0 = (q0_prev - self.gain_kq * sse).clamp(q_min, q_max);
        self.current_window = if (q0 - q0_prev).abs() >= self.q0_large { self.window_small } else { self.window };
        self.k_n += 1;
        self.last_sse = sse;
        Ok((q0, self.current_window))
    }
}

/// Functional form of [`SseState::update`].
pub fn sse_update(
    state: &SseState,
    samples: &[(f64, f64)],
    q0_prev: f64,
    q_min: f64,
    q_max: f64,
) -> Result<(SseState, f64, usize), ControlError> {
    let mut next = state.clone();
    let (q0, w) = next.update(samples, q0_prev, q_min, q_max)?;
    Ok((next, q0, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    /// Squared current magnitude summed over the monitored branch phases.
    #[default]
    I2,
    /// Real part of the branch series loss (needs the branch impedance),
    /// divided by the branch's mean self-resistance so that the gain and the
    /// penalty weight keep the same scale as in the `I2` mode.
    Sloss,
}

/// What a controller can see at its own location for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    /// Voltage magnitude of each phase at the inverter bus (pu).
    pub phase_voltages: Vec<f64>,
    /// Upstream branch current phasors (pu), zero on absent phases.
    pub branch_current: [Complex64; 3],
    /// Upstream branch impedance (pu); enables the loss objective.
    pub branch_impedance: Option<PhaseMatrix>,
    /// Present active power output of the inverter (kW).
    pub p_pv_kw: f64,
}

impl Measurements {
    /// Voltage fed to the droop curve: mean of the phase magnitudes.
    pub fn voltage(&self) -> f64 {
        self.phase_voltages.iter().sum::<f64>() / self.phase_voltages.len().max(1) as f64
    }

    pub fn current_squared(&self) -> f64 {
        self.branch_current.iter().map(|i| i.norm_sqr()).sum()
    }

    pub fn branch_loss(&self) -> Option<f64> {
        self.branch_impedance.as_ref().map(|z| crate::powerflow::series_loss(z, &self.branch_current).re)
    }

    /// Mean self-resistance (pu) over the phases the branch carries.
    pub fn mean_self_resistance(&self) -> Option<f64> {
        let z = self.branch_impedance.as_ref()?;
        let diag: Vec<f64> = (0..3).map(|i| z[i][i].re).filter(|r| *r > 0.0).collect();
        (!diag.is_empty()).then(|| diag.iter().sum::<f64>() / diag.len() as f64)
    }
}

/// Parameters of the extremum-seeking adaptive droop controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveDroopConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub deadband: f64,
    pub v_ref0: f64,
    pub q0_init: f64,
    pub es: EsParams,
    /// Hysteresis coefficient in (0, 1].
    pub hysteresis: f64,
    pub penalty_weight: f64,
    /// K_Q as a multiple of the inverter kVA rating (kvar per pu volt).
    pub kq_per_kva: f64,
    /// Offset change that shortens the outer window, as a fraction of rated kVA.
    pub q0_large_per_kva: f64,
    pub window: usize,
    pub window_small: usize,
    pub objective: ObjectiveMode,
    /// Per-step rate at which the ES estimate is pulled toward the measured
    /// voltage while the reactive output sits at a limit the offset loop is
    /// pushing into. Zero disables it.
    pub anti_windup: f64,
}

impl Default for AdaptiveDroopConfig {
    fn default() -> Self {
        AdaptiveDroopConfig {
            v_min: 0.80,
            v_max: 1.20,
            // Narrower than the dither swing 2A, so the perturbation of
            // V_ref reaches Q through the droop slope at the SSE equilibrium.
            deadband: 0.005,
            v_ref0: 1.0,
            q0_init: 0.0,
            es: EsParams::default(),
            hysteresis: 0.3,
            penalty_weight: 10.0,
            kq_per_kva: 0.5,
            q0_large_per_kva: 0.2,
            window: 10,
            window_small: 8,
            objective: ObjectiveMode::I2,
            anti_windup: 0.1,
        }
    }
}

/// Complete state of one extremum-seeking adaptive droop inverter controller.
#[derive(Debug, Clone, PartialEq)]
pub struct InverterControllerState {
    pub droop: DroopParams,
    pub es: EsState,
    pub sse: SseState,
    pub q_pv: f64,
    pub hysteresis: f64,
    pub objective: ObjectiveMode,
    pub penalty_weight: f64,
    pub rated_kva: f64,
    /// Capacity computed in the last step.
    pub q_max: f64,
    /// Objective value fed to the ES loop in the last step.
    pub last_objective: f64,
    pub anti_windup: f64,
    window_samples: Vec<(f64, f64)>,
}

impl InverterControllerState {
    pub fn new(cfg: &AdaptiveDroopConfig, rated_kva: f64) -> Result<Self, ControlError> {
        let droop = DroopParams {
            v_min: cfg.v_min,
            v_max: cfg.v_max,
            v_ref: cfg.v_ref0,
            deadband: cfg.deadband,
            q0: cfg.q0_init,
        };
        droop.validate()?;
        if !(cfg.hysteresis > 0.0 && cfg.hysteresis <= 1.0) {
            return Err(ControlError::Params(format!(
                "hysteresis coefficient must be in (0, 1], got {}",
                cfg.hysteresis
            )));
        }
        if !(0.0..=1.0).contains(&cfg.anti_windup) {
            return Err(ControlError::Params(format!("anti-windup rate must be in [0, 1], got {}", cfg.anti_windup)));
        }
        let es = EsState::new(cfg.es, cfg.v_ref0);
        es.validate()?;
        let sse =
            SseState::new(cfg.window, cfg.window_small, cfg.kq_per_kva * rated_kva, cfg.q0_large_per_kva * rated_kva);
        sse.validate()?;
        Ok(InverterControllerState {
            droop,
            es,
            sse,
            q_pv: 0.0,
            hysteresis: cfg.hysteresis,
            objective: cfg.objective,
            penalty_weight: cfg.penalty_weight,
            rated_kva,
            q_max: rated_kva,
            last_objective: 0.0,
            anti_windup: cfg.anti_windup,
            window_samples: Vec::with_capacity(cfg.window),
        })
    }

    /// Local objective: branch |I|² (or branch loss) plus the voltage penalty.
    pub fn objective_value(&self, m: &Measurements) -> f64 {
        let base = match (self.objective, m.branch_loss(), m.mean_self_resistance()) {
            (ObjectiveMode::Sloss, Some(loss), Some(r)) => loss / r,
            _ => m.current_squared(),
        };
        let penalty: f64 = m.phase_voltages.iter().map(|v| voltage_penalty(*v, self.penalty_weight)).sum();
        base + penalty
    }

    /// One inner-loop step. Returns the reactive power command (kvar).
    pub fn step(&mut self, m: &Measurements, dt: f64) -> Result<f64, ControlError> {
        let v = m.voltage();

        let y = self.objective_value(m);
        self.last_objective = y;
        let v_ref_active = self.droop.v_ref;
        self.droop.v_ref = self.es.step(y, dt);

        let q_max = q_capacity(self.rated_kva, m.p_pv_kw)?;
        let q_min = -q_max;
        self.q_max = q_max;

        self.window_samples.push((v, v_ref_active));
        if self.window_samples.len() >= self.sse.current_window {
            let (q0, _) = self.sse.update(&self.window_samples, self.droop.q0, q_min, q_max)?;
            self.droop.q0 = q0;
            self.window_samples.clear();
        }
        self.droop.q0 = self.droop.q0.clamp(q_min, q_max);

        let q_dp = droop_eval(&self.droop, v, q_min, q_max);
        self.q_pv = hysteresis_update(self.q_pv, q_dp, self.hysteresis).clamp(q_min, q_max);

        // Offset pinned at a limit while the voltage error keeps pushing into
        // it: the dither no longer reaches Q, so back the estimate off toward
        // the voltage the inverter can actually hold.
        let pinned_low = self.droop.q0 <= q_min && v > self.droop.v_ref;
        let pinned_high = self.droop.q0 >= q_max && v < self.droop.v_ref;
        if self.anti_windup > 0.0 && (pinned_low || pinned_high) {
            let mu_hat = self.es.mu_hat + self.anti_windup * (v - self.es.mu_hat);
            self.es.mu_hat = mu_hat.clamp(VREF_MIN, VREF_MAX);
        }
        Ok(self.q_pv)
    }
}

/// Functional form of [`InverterControllerState::step`].
pub fn controller_step(
    state: &InverterControllerState,
    m: &Measurements,
    dt: f64,
) -> Result<(InverterControllerState, f64), ControlError> {
    let mut next = state.clone();
    let q = next.step(m, dt)?;
    Ok((next, q))
}

/// Conventional droop with fixed reference and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDroopController {
    pub droop: DroopParams,
    /// `None` applies the droop output directly.
    pub hysteresis: Option<f64>,
    pub rated_kva: f64,
    pub q_pv: f64,
    pub q_max: f64,
}

impl FixedDroopController {
    pub fn new(droop: DroopParams, hysteresis: Option<f64>, rated_kva: f64) -> Result<Self, ControlError> {
        droop.validate()?;
        if let Some(mu) = hysteresis {
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(ControlError::Params(format!("hysteresis must be in (0, 1], got {mu}")));
            }
        }
        Ok(FixedDroopController { droop, hysteresis, rated_kva, q_pv: 0.0, q_max: rated_kva })
    }

    pub fn step(&mut self, m: &Measurements) -> Result<f64, ControlError> {
        let q_max = q_capacity(self.rated_kva, m.p_pv_kw)?;
        self.q_max = q_max;
        let mut droop = self.droop;
        droop.q0 = droop.q0.clamp(-q_max, q_max);
        let q_dp = droop_eval(&droop, m.voltage(), -q_max, q_max);
        self.q_pv = match self.hysteresis {
            Some(mu) => hysteresis_update(self.q_pv, q_dp, mu),
            None => q_dp,
        }
        .clamp(-q_max, q_max);
        Ok(self.q_pv)
    }
}
