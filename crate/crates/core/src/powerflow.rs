//! Backward/forward sweep power flow for radial unbalanced feeders.
//!
//! All quantities inside the solver are per-unit on the per-phase power
//! base (`base_mva / 3`) and the line-to-neutral voltage base of each bus.

use num_complex::Complex64;
use thiserror::Error;

use crate::feeder::{FeederError, FeederModel};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge after {iterations} iterations (last mismatch {mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("branch {0} has zero series impedance on a present phase")]
    ZeroImpedance(String),
    #[error("invalid injections: {0}")]
    Injection(String),
    #[error("expected {expected} regulator tap sets, got {got}")]
    Taps { expected: usize, got: usize },
    #[error(transparent)]
    Feeder(#[from] FeederError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence tolerance on the per-phase voltage update (pu).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-6, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PvOutput {
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Operating point of every load and inverter for one time step.
///
/// Load multipliers scale the rated per-phase P and Q of each load; PV
/// outputs are three-phase totals split evenly over the inverter's phases.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSet {
    pub load_scale: Vec<f64>,
    pub pv: Vec<PvOutput>,
}

/// Constant-power-referenced load term at one bus phase.
#[derive(Debug, Clone, Copy)]
struct LoadTerm {
    bus: usize,
    phase: usize,
    s_pu: Complex64,
    zip: crate::feeder::ZipFractions,
}

impl InjectionSet {
    pub fn zero(model: &FeederModel) -> Self {
        InjectionSet { load_scale: vec![0.0; model.loads.len()], pv: vec![PvOutput::default(); model.pvs.len()] }
    }

    /// Rated loads, no PV output.
    pub fn nominal(model: &FeederModel) -> Self {
        InjectionSet { load_scale: vec![1.0; model.loads.len()], pv: vec![PvOutput::default(); model.pvs.len()] }
    }

    pub fn validate(&self, model: &FeederModel) -> Result<(), PowerFlowError> {
        if self.load_scale.len() != model.loads.len() || self.pv.len() != model.pvs.len() {
            return Err(PowerFlowError::Injection(format!(
                "expected {} loads and {} pvs, got {} and {}",
                model.loads.len(),
                model.pvs.len(),
                self.load_scale.len(),
                self.pv.len()
            )));
        }
        if self.load_scale.iter().any(|s| !s.is_finite())
            || self.pv.iter().any(|p| !p.p_kw.is_finite() || !p.q_kvar.is_finite())
        {
            return Err(PowerFlowError::Injection("non-finite value".into()));
        }
        Ok(())
    }

    /// Net injected power per bus phase at nominal voltage (generation
    /// positive, load negative), in pu.
    pub fn bus_phase_injections(&self, model: &FeederModel) -> Vec<[Complex64; 3]> {
        let mut inj = vec![[ZERO; 3]; model.buses.len()];
        for t in self.load_terms(model) {
            inj[t.bus][t.phase] -= t.s_pu;
        }
        for (b, gen) in self.generation(model).into_iter().enumerate() {
            for ph in 0..3 {
                inj[b][ph] += gen[ph];
            }
        }
        inj
    }

    fn load_terms(&self, model: &FeederModel) -> Vec<LoadTerm> {
        let base = model.phase_base_kva();
        let mut out = Vec::new();
        for (ld, scale) in model.loads.iter().zip(&self.load_scale) {
            let bus = model.bus_index(&ld.bus).expect("validated load bus");
            for pl in &ld.per_phase {
                out.push(LoadTerm {
                    bus,
                    phase: pl.phase.index(),
                    s_pu: Complex64::new(pl.kw, pl.kvar) * (*scale / base),
                    zip: ld.zip,
                });
            }
        }
        out
    }

    fn generation(&self, model: &FeederModel) -> Vec<[Complex64; 3]> {
        let base = model.phase_base_kva();
        let mut gen = vec![[ZERO; 3]; model.buses.len()];
        for (i, (pv, out)) in model.pvs.iter().zip(&self.pv).enumerate() {
            let bus = model.pv_bus_index(i);
            let share = Complex64::new(out.p_kw, out.q_kvar) / (pv.phases.len() as f64 * base);
            for ph in pv.phases.indices() {
                gen[bus][ph] += share;
            }
        }
        gen
    }
}

/// Steady state of the feeder for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Bus voltage phasors (pu), zero on absent phases.
    pub voltages: Vec<[Complex64; 3]>,
    /// Branch current phasors on the load side of each branch (pu).
    pub branch_currents: Vec<[Complex64; 3]>,
    /// Current drawn from the source side of each branch (equal to
    /// `branch_currents` scaled by the regulator ratio, if any).
    pub sending_currents: Vec<[Complex64; 3]>,
    pub branch_losses: Vec<Complex64>,
    pub total_loss: Complex64,
    /// Complex power delivered by the source (pu, summed over phases).
    pub source_power: Complex64,
    /// Net power consumed at all buses, loads minus inverter output (pu).
    pub load_power: Complex64,
    /// Power consumed by loads alone, excluding inverters (pu).
    pub demand: Complex64,
    pub iterations: usize,
    pub max_mismatch: f64,
    /// Voltage update size of each iteration.
    pub residuals: Vec<f64>,
}

impl PowerFlowSolution {
    pub fn voltage_magnitude(&self, bus: usize, phase: usize) -> f64 {
        self.voltages[bus][phase].norm()
    }

    pub fn bus_voltage(&self, model: &FeederModel, id: &str) -> Result<[Complex64; 3], FeederError> {
        Ok(self.voltages[model.bus_index(id)?])
    }

    /// Per-phase complex power entering a branch at its sending end.
    pub fn sending_power(&self, model: &FeederModel, branch: usize) -> [Complex64; 3] {
        let from = model.branch_from(branch);
        let mut s = [ZERO; 3];
        for ph in model.branches[branch].phases.indices() {
            s[ph] = self.voltages[from][ph] * self.sending_currents[branch][ph].conj();
        }
        s
    }

    /// Per-phase complex power leaving a branch at its receiving end.
    pub fn receiving_power(&self, model: &FeederModel, branch: usize) -> [Complex64; 3] {
        let to = model.branch_to(branch);
        let mut s = [ZERO; 3];
        for ph in model.branches[branch].phases.indices() {
            s[ph] = self.voltages[to][ph] * self.branch_currents[branch][ph].conj();
        }
        s
    }

    /// Total real loss in kW.
    pub fn total_loss_kw(&self, model: &FeederModel) -> f64 {
        self.total_loss.re * model.phase_base_kva()
    }

    pub fn min_voltage(&self, model: &FeederModel) -> f64 {
        let mut v = f64::INFINITY;
        for (b, bus) in model.buses.iter().enumerate() {
            for ph in bus.phases.indices() {
                v = v.min(self.voltages[b][ph].norm());
            }
        }
        v
    }
}

/// `Σ_{m,n} z_mn I_m conj(I_n)` over the phases of a branch.
pub fn series_loss(z: &crate::feeder::PhaseMatrix, current: &[Complex64; 3]) -> Complex64 {
    let mut s = ZERO;
    for m in 0..3 {
        for n in 0..3 {
            s += z[m][n] * current[m] * current[n].conj();
        }
    }
    s
}

/// Loss of one branch by id.
pub fn branch_loss(model: &FeederModel, solution: &PowerFlowSolution, branch: &str) -> Result<Complex64, FeederError> {
    Ok(solution.branch_losses[model.branch_index(branch)?])
}

/// Sum of branch losses.
pub fn total_loss(solution: &PowerFlowSolution) -> Complex64 {
    solution.branch_losses.iter().sum()
}

pub fn flat_start(model: &FeederModel) -> Vec<[Complex64; 3]> {
    let v0 = model.source_voltage_pu;
    let rot = [0.0f64, -120.0, 120.0].map(|d| Complex64::from_polar(v0, d.to_radians()));
    model
        .buses
        .iter()
        .map(|b| {
            let mut v = [ZERO; 3];
            for ph in b.phases.indices() {
                v[ph] = rot[ph];
            }
            v
        })
        .collect()
}

/// Solves with default options from a flat start.
pub fn solve(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
) -> Result<PowerFlowSolution, PowerFlowError> {
    solve_with(model, injections, taps, &SolverOptions::default(), None)
}

/// Solves the feeder, optionally warm-starting from a previous solution.
pub fn solve_with(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
    opts: &SolverOptions,
    warm_start: Option<&PowerFlowSolution>,
) -> Result<PowerFlowSolution, PowerFlowError> {
    injections.validate(model)?;
    if taps.len() != model.regulators.len() {
        return Err(PowerFlowError::Taps { expected: model.regulators.len(), got: taps.len() });
    }
    for (k, br) in model.branches.iter().enumerate() {
        let z = model.z_pu(k);
        if br.phases.indices().any(|ph| z[ph][ph].norm() == 0.0) {
            return Err(PowerFlowError::ZeroImpedance(br.id.clone()));
        }
    }

    let nb = model.buses.len();
    let nbr = model.branches.len();
    let loads = injections.load_terms(model);
    let gen = injections.generation(model);
    let ratio: Vec<[f64; 3]> = (0..nbr)
        .map(|k| match model.regulator_on(k) {
            Some(r) => {
                let reg = &model.regulators[r];
                let mut a = [1.0; 3];
                for ph in 0..3 {
                    a[ph] = 1.0 + taps[r][ph] as f64 * reg.step;
                }
                a
            }
            None => [1.0; 3],
        })
        .collect();

    let mut v = match warm_start {
        Some(ws) if ws.voltages.len() == nb => ws.voltages.clone(),
        _ => flat_start(model),
    };
    let source = model.source_index();
    v[source] = flat_start(model)[source];

    let order = model.sweep_order();
    let mut bus_current = vec![[ZERO; 3]; nb];
    let mut branch_i = vec![[ZERO; 3]; nbr];
    let mut sending_i = vec![[ZERO; 3]; nbr];
    let mut residuals = Vec::new();

    let mut iterations = 0;
    loop {
        iterations += 1;

        // Currents drawn at each bus from the present voltage estimate.
        for bc in bus_current.iter_mut() {
            *bc = [ZERO; 3];
        }
        for t in &loads {
            let vb = v[t.bus][t.phase];
            let s = t.s_pu * t.zip.factor(vb.norm());
            bus_current[t.bus][t.phase] += (s / vb).conj();
        }
        for b in 0..nb {
            for ph in model.buses[b].phases.indices() {
                if gen[b][ph] != ZERO {
                    bus_current[b][ph] -= (gen[b][ph] / v[b][ph]).conj();
                }
            }
        }

        // Backward sweep: accumulate branch currents toward the source.
        for &b in order.iter().rev() {
            let Some(k) = model.parent_branch(b) else { continue };
            let mut i = bus_current[b];
            for &child in model.child_branches(b) {
                for ph in 0..3 {
                    i[ph] += sending_i[child][ph];
                }
            }
            let phases = model.branches[k].phases;
            for ph in 0..3 {
                if !phases.has(ph) {
                    i[ph] = ZERO;
                }
            }
            branch_i[k] = i;
            for ph in 0..3 {
                sending_i[k][ph] = i[ph] * ratio[k][ph];
            }
        }

        // Forward sweep: propagate voltages from the source.
        let mut mismatch: f64 = 0.0;
        for &b in order {
            let Some(k) = model.parent_branch(b) else { continue };
            let from = model.branch_from(k);
            let z = model.z_pu(k);
            let phases = model.branches[k].phases;
            for m in phases.indices() {
                let mut drop = ZERO;
                for n in phases.indices() {
                    drop += z[m][n] * branch_i[k][n];
                }
                let new = v[from][m] * ratio[k][m] - drop;
                mismatch = mismatch.max((new - v[b][m]).norm());
                v[b][m] = new;
            }
        }
        if !mismatch.is_finite() {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch });
        }
        residuals.push(mismatch);
        if mismatch < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch });
        }
    }

    // Branch currents satisfy KCL for the bus currents of the last
    // iteration and the voltages satisfy KVL for those branch currents, so
    // reporting consumption as V·conj(I) keeps the power balance exact.
    let branch_losses: Vec<Complex64> = (0..nbr).map(|k| series_loss(model.z_pu(k), &branch_i[k])).collect();
    let total_loss: Complex64 = branch_losses.iter().sum();
    let mut load_power = ZERO;
    let mut demand = ZERO;
    for b in 0..nb {
        for ph in 0..3 {
            load_power += v[b][ph] * bus_current[b][ph].conj();
        }
    }
    for t in &loads {
        let vb = v[t.bus][t.phase];
        demand += t.s_pu * t.zip.factor(vb.norm());
    }
    let mut source_power = ZERO;
    for ph in 0..3 {
        let mut i = bus_current[source][ph];
        for &k in model.child_branches(source) {
            i += sending_i[k][ph];
        }
        source_power += v[source][ph] * i.conj();
    }

    let max_mismatch = *residuals.last().unwrap_or(&0.0);
    Ok(PowerFlowSolution {
        voltages: v,
        branch_currents: branch_i,
        sending_currents: sending_i,
        branch_losses,
        total_loss,
        source_power,
        load_power,
        demand,
        iterations,
        max_mismatch,
        residuals,
    })
}
