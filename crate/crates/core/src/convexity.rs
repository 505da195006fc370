//! Convexity checks for the local loss objective.
//!
//! The analytic side evaluates the single-phase condition on
//! `∂²|I|²/∂q²` and the three-phase loss expansion in terms of per-phase
//! flow deviations from a reference phase. The numeric side perturbs one
//! inverter's reactive output around its operating point and differentiates
//! full power-flow solutions.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::feeder::{FeederModel, PhaseMatrix};
use crate::powerflow::{solve_with, InjectionSet, PowerFlowError, PowerFlowSolution, SolverOptions};

/// Sign tolerance applied to numeric second derivatives.
pub const SIGN_TOL: f64 = 1e-6;
/// Finite-difference step as a fraction of the inverter kVA rating.
pub const STEP_PER_KVA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ConvexityError {
    #[error("voltage (or y = V²) must be positive, got {0}")]
    NonPositiveVoltage(f64),
    #[error("finite-difference step must be positive, got {0}")]
    Step(f64),
    #[error("no inverter with index {0}")]
    UnknownInverter(usize),
    #[error("perturbed reactive power {q} kvar exceeds capacity {q_max} kvar")]
    Capacity { q: f64, q_max: f64 },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// Denominator `D = 1 − 2rP/V² − 2x(Q+q)/V²` of the single-phase
/// second-derivative expression; the loss objective is convex in `q` when
/// `D ≥ 0` under the stated curvature assumptions.
pub fn single_phase_condition(r: f64, x: f64, p: f64, q_total: f64, v: f64) -> Result<f64, ConvexityError> {
    if !(v > 0.0) {
        return Err(ConvexityError::NonPositiveVoltage(v));
    }
    let y = v * v;
    Ok(1.0 - 2.0 * r * p / y - 2.0 * x * q_total / y)
}

/// Central second difference `[f(q+h) − 2f(q) + f(q−h)] / h²`.
pub fn second_difference(
    f: impl Fn(f64) -> Result<f64, ConvexityError>,
    q: f64,
    h: f64,
) -> Result<f64, ConvexityError> {
    if !(h > 0.0) {
        return Err(ConvexityError::Step(h));
    }
    let (fp, f0, fm) = (f(q + h)?, f(q)?, f(q - h)?);
    Ok((fp - 2.0 * f0 + fm) / (h * h))
}

/// Options for the solver calls made by the numeric checks. The default is
/// much tighter than the time-series tolerance so that second differences
/// are not dominated by iteration error.
pub fn probe_options() -> SolverOptions {
    SolverOptions { tolerance: 1e-13, max_iterations: 500 }
}

/// Quantities observed at one inverter for a given reactive output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProbe {
    /// Σ|I|² over the monitored branch phases (pu).
    pub current_squared: f64,
    /// Mean squared voltage magnitude over the inverter bus phases (pu).
    pub y: f64,
    /// Active power entering the monitored branch, summed over phases (pu).
    pub p: f64,
    /// Reactive power entering the monitored branch, summed over phases (pu).
    pub q: f64,
}

fn probe(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
    pv: usize,
    q_kvar: f64,
    warm: Option<&PowerFlowSolution>,
) -> Result<LocalProbe, ConvexityError> {
    let mut inj = injections.clone();
    inj.pv[pv].q_kvar = q_kvar;
    let sol = solve_with(model, &inj, taps, &probe_options(), warm)?;
    Ok(observe(model, &sol, pv))
}

pub fn observe(model: &FeederModel, sol: &PowerFlowSolution, pv: usize) -> LocalProbe {
    let br = model.pv_branch_index(pv);
    let bus = model.pv_bus_index(pv);
    let phases = model.pvs[pv].phases;
    let current_squared = model.branches[br].phases.indices().map(|ph| sol.branch_currents[br][ph].norm_sqr()).sum();
    let y = phases.indices().map(|ph| sol.voltages[bus][ph].norm_sqr()).sum::<f64>() / phases.len() as f64;
    let s: Complex64 = sol.sending_power(model, br).iter().sum();
    LocalProbe { current_squared, y, p: s.re, q: s.im }
}

fn check_inverter(model: &FeederModel, injections: &InjectionSet, pv: usize, h: f64) -> Result<(), ConvexityError> {
    let inv = model.pvs.get(pv).ok_or(ConvexityError::UnknownInverter(pv))?;
    if !(h > 0.0) {
        return Err(ConvexityError::Step(h));
    }
    let p = injections.pv.get(pv).ok_or(ConvexityError::UnknownInverter(pv))?;
    let q_max = (inv.rated_kva.powi(2) - p.p_kw.powi(2)).max(0.0).sqrt();
    let reach = p.q_kvar.abs() + h;
    if reach > q_max + 1e-9 {
        return Err(ConvexityError::Capacity { q: reach, q_max });
    }
    Ok(())
}

/// Numeric `∂²|I|²/∂q²` at the inverter's monitored branch, in pu per kvar².
pub fn numeric_second_derivative(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
    pv: usize,
    h_kvar: f64,
) -> Result<f64, ConvexityError> {
    check_inverter(model, injections, pv, h_kvar)?;
    let q0 = injections.pv[pv].q_kvar;
    let mut base = injections.clone();
    base.pv[pv].q_kvar = q0;
    let warm = solve_with(model, &base, taps, &probe_options(), None)?;
    second_difference(|q| Ok(probe(model, injections, taps, pv, q, Some(&warm))?.current_squared), q0, h_kvar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// ∂²y/∂q² with y the squared bus voltage (pu per kvar²).
    pub d2y: f64,
    /// ∂²P/∂q² of the monitored branch flow.
    pub d2p: f64,
    /// ∂²Q/∂q² of the monitored branch flow.
    pub d2q: f64,
    pub y_concave: bool,
    pub p_convex: bool,
    pub q_convex: bool,
}

/// Central-difference curvature of y, P and Q with respect to the
/// inverter's reactive output, with signs judged against `tol`.
pub fn assumption_check(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
    pv: usize,
    h_kvar: f64,
    tol: f64,
) -> Result<AssumptionReport, ConvexityError> {
    check_inverter(model, injections, pv, h_kvar)?;
    let q0 = injections.pv[pv].q_kvar;
    let warm = solve_with(model, injections, taps, &probe_options(), None)?;
    let at = |q: f64| probe(model, injections, taps, pv, q, Some(&warm));
    let (plus, mid, minus) = (at(q0 + h_kvar)?, at(q0)?, at(q0 - h_kvar)?);
    let d2 = |f: fn(&LocalProbe) -> f64| (f(&plus) - 2.0 * f(&mid) + f(&minus)) / (h_kvar * h_kvar);
    let (d2y, d2p, d2q) = (d2(|p| p.y), d2(|p| p.p), d2(|p| p.q));
    Ok(AssumptionReport { d2y, d2p, d2q, y_concave: d2y <= tol, p_convex: d2p >= -tol, q_convex: d2q >= -tol })
}

/// Per-phase reactance and resistance seen by a single-phase equivalent of a
/// branch: self impedance minus the mean mutual impedance over its phases.
pub fn equivalent_impedance(z: &PhaseMatrix, phases: &[usize]) -> Complex64 {
    let n = phases.len() as f64;
    let self_mean: Complex64 = phases.iter().map(|&m| z[m][m]).sum::<Complex64>() / n;
    if phases.len() < 2 {
        return self_mean;
    }
    let mut mutual = Complex64::new(0.0, 0.0);
    let mut pairs = 0.0;
    for &m in phases {
        for &k in phases {
            if m != k {
                mutual += z[m][k];
                pairs += 1.0;
            }
        }
    }
    self_mean - mutual / pairs
}

/// Per-step convexity verdict for one inverter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub denominator: f64,
    /// Sign of the numerator is assumed non-negative; recorded as given.
    pub numerator_nonnegative: bool,
    pub second_derivative: Option<f64>,
    pub satisfied: bool,
}

/// Evaluates the single-phase condition on the monitored branch using the
/// solved operating point, and optionally the numeric second derivative.
pub fn report(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
    solution: &PowerFlowSolution,
    pv: usize,
    numeric: bool,
) -> Result<ConvexityReport, ConvexityError> {
    let br = model.pv_branch_index(pv);
    let from = model.branch_from(br);
    let phases: Vec<usize> = model.branches[br].phases.indices().collect();
    let n = phases.len() as f64;
    let z = equivalent_impedance(model.z_pu(br), &phases);
    let s: Complex64 = solution.sending_power(model, br).iter().sum::<Complex64>() / n;
    let v = phases.iter().map(|&m| solution.voltages[from][m].norm()).sum::<f64>() / n;
    let denominator = single_phase_condition(z.re, z.im, s.re, s.im, v)?;

    let second_derivative = if numeric {
        let h = STEP_PER_KVA * model.pvs[pv].rated_kva;
        let p = injections.pv[pv];
        let q_max = (model.pvs[pv].rated_kva.powi(2) - p.p_kw.powi(2)).max(0.0).sqrt();
        let mut inj = injections.clone();
        // keep the stencil inside the capability circle
        inj.pv[pv].q_kvar = p.q_kvar.clamp(-(q_max - h).max(0.0), (q_max - h).max(0.0));
        if q_max >= h {
            Some(numeric_second_derivative(model, &inj, taps, pv, h)?)
        } else {
            None
        }
    } else {
        None
    };
    let satisfied = denominator >= 0.0 && second_derivative.is_none_or(|d| d >= -SIGN_TOL);
    Ok(ConvexityReport { denominator, numerator_nonnegative: true, second_derivative, satisfied })
}

/// Per-phase flows for the three-phase loss expansion, with phase a as the
/// reference: phase b carries `(P + ΔP₁) + j(Q + q + ΔQ₁)` and phase c
/// `(P + ΔP₂) + j(Q + q + ΔQ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseFlows {
    pub p: f64,
    pub dp1: f64,
    pub dp2: f64,
    /// Q + q of the reference phase.
    pub q: f64,
    pub dq1: f64,
    pub dq2: f64,
}

impl PhaseFlows {
    pub fn phase_powers(&self) -> [Complex64; 3] {
        [
            Complex64::new(self.p, self.q),
            Complex64::new(self.p + self.dp1, self.q + self.dq1),
            Complex64::new(self.p + self.dp2, self.q + self.dq2),
        ]
    }
}

/// Five-term expansion of the three-phase branch loss in the per-phase
/// flows, divided by `y = V²`. The expansion keeps terms up to first order
/// in the deviations ΔP, ΔQ.
pub fn three_phase_loss_expansion(z: &PhaseMatrix, f: &PhaseFlows, y: f64) -> Result<Complex64, ConvexityError> {
    if !(y > 0.0) {
        return Err(ConvexityError::NonPositiveVoltage(y));
    }
    let (zaa, zbb, zcc) = (z[0][0], z[1][1], z[2][2]);
    let (zab, zac, zbc) = (z[0][1], z[0][2], z[1][2]);
    let s3 = 3f64.sqrt();
    let (p, q) = (f.p, f.q);
    let total = (p * p + q * q) * (zaa + zbb + zcc - zab - zac - zbc)
        + (p * f.dp1 + q * f.dq1) * (2.0 * zbb - zab - zbc)
        + (p * f.dp2 + q * f.dq2) * (2.0 * zcc - zac - zbc)
        + s3 * (p * f.dq1 - q * f.dp1) * (zab - zbc)
        + s3 * (p * f.dq2 - q * f.dp2) * (zbc - zac);
    Ok(total / y)
}

/// Series loss `Σ z_mn I_m I_n*` for currents `I_m = (S_m / V_m)*` drawn at
/// voltages of magnitude `√y` and the given phase angles (rad).
pub fn phasor_loss(z: &PhaseMatrix, s: &[Complex64; 3], y: f64, angles: [f64; 3]) -> Complex64 {
    let v = y.sqrt();
    let current: [Complex64; 3] = std::array::from_fn(|m| (s[m] / Complex64::from_polar(v, angles[m])).conj());
    crate::powerflow::series_loss(z, &current)
}

/// Angles for which the expansion's √3 terms are exact: b leads a by 120°
/// and c lags it by 120°.
pub const EXPANSION_ANGLES: [f64; 3] = [0.0, 2.0 * std::f64::consts::FRAC_PI_3, -2.0 * std::f64::consts::FRAC_PI_3];

/// Terms of the phasor loss that are second order in the deviations and so
/// absent from the expansion, evaluated at [`EXPANSION_ANGLES`].
pub fn expansion_remainder(z: &PhaseMatrix, f: &PhaseFlows, y: f64) -> Complex64 {
    let d1 = Complex64::new(f.dp1, f.dq1);
    let d2 = Complex64::new(f.dp2, f.dq2);
    let rot = Complex64::from_polar(1.0, EXPANSION_ANGLES[1] - EXPANSION_ANGLES[2]);
    (z[1][1] * d1.norm_sqr() + z[2][2] * d2.norm_sqr() + z[1][2] * (d1.conj() * d2 * rot + d2.conj() * d1 * rot.conj()))
        / y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::ZERO_MATRIX;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_phase_cases() {
        assert_eq!(single_phase_condition(0.01, 0.02, 0.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(single_phase_condition(0.0, 0.0, 0.5, 0.2, 1.0).unwrap(), 1.0);
        let d = single_phase_condition(0.01, 0.02, 0.5, 0.2, 1.0).unwrap();
        assert!((d - 0.982).abs() < 1e-12);
        assert!(single_phase_condition(0.01, 0.02, 0.5, 0.2, 0.0).is_err());
    }

    #[test]
    fn expansion_balanced_without_mutuals() {
        let mut z = ZERO_MATRIX;
        for (m, zm) in [c(0.1, 0.2), c(0.12, 0.25), c(0.09, 0.18)].into_iter().enumerate() {
            z[m][m] = zm;
        }
        let f = PhaseFlows { p: 0.4, q: 0.3, ..Default::default() };
        let got = three_phase_loss_expansion(&z, &f, 0.98).unwrap();
        let want = (0.16 + 0.09) * (z[0][0] + z[1][1] + z[2][2]) / 0.98;
        assert!((got - want).norm() < 1e-15);
        assert_eq!(three_phase_loss_expansion(&z, &PhaseFlows::default(), 1.0).unwrap(), c(0.0, 0.0));
        assert!(three_phase_loss_expansion(&z, &f, 0.0).is_err());
    }

    #[test]
    fn equivalent_impedance_of_balanced_matrix() {
        let mut z = ZERO_MATRIX;
        for m in 0..3 {
            for n in 0..3 {
                z[m][n] = if m == n { c(0.3, 0.9) } else { c(0.1, 0.4) };
            }
        }
        let e = equivalent_impedance(&z, &[0, 1, 2]);
        assert!((e - c(0.2, 0.5)).norm() < 1e-15);
        assert_eq!(equivalent_impedance(&z, &[2]), c(0.3, 0.9));
    }
}
