//! Quasi-static time-series runs: profiles drive loads and PV output,
//! regulators and inverter controllers act on the previous step's solution,
//! and every step is solved and recorded.

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::control::ControlError;
use crate::convexity::{ConvexityError, ConvexityReport};
use crate::feeder::FeederError;
use crate::powerflow::PowerFlowError;

pub mod analysis;
pub mod config;
pub mod engine;
pub mod oracle;
pub mod output;
pub mod profiles;

pub use analysis::{oscillation_index, perturbation_phase_analysis, summarize, PhaseAnalysis};
pub use config::{ControllerKind, FixedDroopConfig, ProfileAssignment, ScenarioConfig};
pub use engine::{
    compare, injections_at, run_fixed_droop, run_qsts, run_qsts_on, snapshot_injections, CompareResult, ScenarioRun,
};
pub use oracle::{brute_force_dispatch, Dispatch, OracleMode, OracleOptions};
pub use profiles::TimeSeriesProfile;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("profile error: {0}")]
    Profile(String),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Convexity(#[from] ConvexityError),
    #[error("{diverged} of {steps} steps failed to converge (limit {limit})")]
    Diverged { diverged: usize, steps: usize, limit: usize },
    #[error("oracle grid of {points}^{inverters} evaluations exceeds the budget of {budget}")]
    Budget { points: usize, inverters: usize, budget: usize },
    #[error("no records to summarize")]
    Empty,
    #[error("need at least {needed} samples for phase analysis, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("refusing to overwrite {0} (use --force)")]
    Exists(PathBuf),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Controller quantities of one inverter at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvRecord {
    /// Droop reference voltage in effect (pu); absent without a droop law.
    pub v_ref: Option<f64>,
    /// Droop offset (kvar); absent without a droop law.
    pub q0: Option<f64>,
    /// Reactive power command (kvar, positive injects).
    pub q_pv: f64,
    /// Reactive capacity at this step (kvar).
    pub q_max: f64,
    /// Local objective: branch |I|² or branch loss, plus the voltage penalty.
    pub objective: f64,
}

/// One row of simulation output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time_s: f64,
    /// Voltage magnitudes (pu) per bus over its present phases, in file order.
    pub voltages: Vec<Vec<f64>>,
    pub pvs: Vec<PvRecord>,
    /// Regulator taps per regulator, indexed by phase.
    pub taps: Vec<[i32; 3]>,
    pub loss_kw: f64,
    /// Sum of the voltage penalty over every bus phase.
    pub penalty: f64,
    pub converged: bool,
    pub convexity: Option<Vec<ConvexityReport>>,
}

impl StepRecord {
    pub fn min_voltage(&self) -> f64 {
        self.voltages.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_voltage(&self) -> f64 {
        self.voltages.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Aggregate metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub feeder: String,
    pub controller: String,
    pub steps: usize,
    pub dt_s: f64,
    pub energy_loss_kwh: f64,
    pub price_per_kwh: f64,
    pub cost: f64,
    pub min_voltage_pu: f64,
    pub max_voltage_pu: f64,
    /// Number of (step, bus) pairs with any phase outside the ANSI band.
    pub violation_count: usize,
    /// Per inverter: max over sliding windows of the std of ΔQ_PV (kvar).
    pub oscillation_index: Vec<f64>,
    pub nonconverged_steps: usize,
    /// Relative excess of this run's energy loss over the oracle run (%).
    pub loss_gap_vs_oracle_pct: Option<f64>,
}

impl ScenarioSummary {
    pub fn max_oscillation_index(&self) -> f64 {
        self.oscillation_index.iter().copied().fold(0.0, f64::max)
    }

    pub fn with_oracle(mut self, oracle_kwh: f64) -> Self {
        self.loss_gap_vs_oracle_pct =
            (oracle_kwh > 0.0).then(|| 100.0 * (self.energy_loss_kwh - oracle_kwh) / oracle_kwh);
        self
    }
}
