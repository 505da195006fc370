//! Time-stepping loop.

use num_complex::Complex64;

use crate::control::{
    q_capacity, voltage_penalty, FixedDroopController, InverterControllerState, Measurements, ObjectiveMode,
};
use crate::convexity;
use crate::feeder::FeederModel;
use crate::powerflow::{solve_with, InjectionSet, PowerFlowError, PowerFlowSolution, PvOutput, SolverOptions};

use super::config::{ControllerKind, ScenarioConfig};
use super::oracle::brute_force_dispatch;
use super::profiles::TimeSeriesProfile;
use super::{summarize, PvRecord, ScenarioError, ScenarioSummary, StepRecord};

/// Records and summary of one run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub records: Vec<StepRecord>,
    pub summary: ScenarioSummary,
}

enum Controller {
    Adaptive(Box<InverterControllerState>),
    Fixed(FixedDroopController),
    Off,
    /// Held oracle dispatch (kvar).
    Oracle(f64),
}

/// What an inverter at `pv` observes in `sol`.
pub fn local_measurements(
    model: &FeederModel,
    sol: &PowerFlowSolution,
    pv: usize,
    p_pv_kw: f64,
    objective: ObjectiveMode,
) -> Measurements {
    let bus = model.pv_bus_index(pv);
    let br = model.pv_branch_index(pv);
    let phase_voltages = model.pvs[pv].phases.indices().map(|ph| sol.voltages[bus][ph].norm()).collect();
    let mut branch_current = [Complex64::new(0.0, 0.0); 3];
    for ph in model.branches[br].phases.indices() {
        branch_current[ph] = sol.branch_currents[br][ph];
    }
    Measurements {
        phase_voltages,
        branch_current,
        branch_impedance: (objective == ObjectiveMode::Sloss).then(|| *model.z_pu(br)),
        p_pv_kw,
    }
}

/// Injections at time `t` from already resolved profiles, with zero reactive dispatch.
pub fn injections_at(
    model: &FeederModel,
    loads: &[TimeSeriesProfile],
    pvs: &[TimeSeriesProfile],
    t: f64,
) -> Result<InjectionSet, ScenarioError> {
    let mut inj = InjectionSet::zero(model);
    for (scale, prof) in inj.load_scale.iter_mut().zip(loads) {
        *scale = prof.value_at(t)?;
    }
    for ((out, prof), inv) in inj.pv.iter_mut().zip(pvs).zip(&model.pvs) {
        *out = PvOutput { p_kw: inv.rated_kw * prof.value_at(t)?.min(inv.rated_kva / inv.rated_kw), q_kvar: 0.0 };
    }
    Ok(inj)
}

/// Load scales and active PV output at time `t` (s) of the configured
/// profiles, with zero reactive dispatch.
pub fn snapshot_injections(
    model: &FeederModel,
    config: &ScenarioConfig,
    t: f64,
) -> Result<InjectionSet, ScenarioError> {
    let (loads, pvs) = config.resolve_profiles(model)?;
    injections_at(model, &loads, &pvs, t)
}

fn total_penalty(model: &FeederModel, sol: &PowerFlowSolution, k_p: f64) -> f64 {
    let mut p = 0.0;
    for (b, bus) in model.buses.iter().enumerate() {
        for ph in bus.phases.indices() {
            p += voltage_penalty(sol.voltages[b][ph].norm(), k_p);
        }
    }
    p
}

fn bus_voltages(model: &FeederModel, sol: &PowerFlowSolution) -> Vec<Vec<f64>> {
    model
        .buses
        .iter()
        .enumerate()
        .map(|(b, bus)| bus.phases.indices().map(|ph| sol.voltages[b][ph].norm()).collect())
        .collect()
}

/// Loads the feeder named by the config and runs it.
pub fn run_qsts(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    config.validate()?;
    let model = config.load_model()?;
    run_qsts_on(&model, config)
}

/// Runs the baseline droop controller; `band` overrides its voltage band.
pub fn run_fixed_droop(config: &ScenarioConfig, band: Option<[f64; 2]>) -> Result<ScenarioRun, ScenarioError> {
    let mut cfg = config.with_controller(ControllerKind::FixedDroop);
    if band.is_some() {
        cfg.band = band;
    }
    run_qsts(&cfg)
}

/// Runs a scenario on an already loaded feeder. The config's feeder field
/// and substation override are not consulted.
pub fn run_qsts_on(model: &FeederModel, config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    config.validate()?;
    let (load_profiles, pv_profiles) = config.resolve_profiles(model)?;
    let solver: SolverOptions = config.solver.into();
    let steps = config.steps();
    let dt = config.dt;
    let adaptive = config.adaptive_params();
    let objective = adaptive.objective;
    let k_p = adaptive.penalty_weight;

    let mut controllers: Vec<Controller> = model
        .pvs
        .iter()
        .map(|inv| {
            Ok(match config.controller {
                ControllerKind::EsAdaptive => {
                    Controller::Adaptive(Box::new(InverterControllerState::new(&adaptive, inv.rated_kva)?))
                }
                ControllerKind::FixedDroop => {
                    let f = config.fixed_droop_params();
                    Controller::Fixed(FixedDroopController::new(f.params(), f.hysteresis, inv.rated_kva)?)
                }
                ControllerKind::None => Controller::Off,
                ControllerKind::Oracle => Controller::Oracle(0.0),
            })
        })
        .collect::<Result<_, ScenarioError>>()?;

    let mut taps = model.initial_taps();
    let inj0 = injections_at(model, &load_profiles, &pv_profiles, 0.0)?;
    let mut last = solve_with(model, &inj0, &taps, &solver, None)?;

    let limit = (config.max_divergence_fraction * steps as f64).floor() as usize;
    let mut diverged = 0usize;
    let mut records = Vec::with_capacity(steps);

    for k in 0..steps {
        let t = k as f64 * dt;
        let mut inj = injections_at(model, &load_profiles, &pv_profiles, t)?;

        if config.regulators && k > 0 && k % config.regulator_interval == 0 {
            for (r, reg) in model.regulators.iter().enumerate() {
                let br = model.branch_index(&reg.branch)?;
                let to = model.branch_to(br);
                let v = std::array::from_fn(|ph| last.voltages[to][ph].norm());
                let mut device = reg.clone();
                device.taps = taps[r];
                device.step_control(v, model.branches[br].phases);
                taps[r] = device.taps;
            }
        }

        if config.controller == ControllerKind::Oracle && k % config.oracle_interval == 0 {
            let d = brute_force_dispatch(model, &inj, &taps, &config.oracle)?;
            for (c, q) in controllers.iter_mut().zip(d.q_kvar) {
                *c = Controller::Oracle(q);
            }
        }

        let mut pv_records = Vec::with_capacity(model.pvs.len());
        for (i, c) in controllers.iter_mut().enumerate() {
            let p_kw = inj.pv[i].p_kw;
            let m = local_measurements(model, &last, i, p_kw, objective);
            let rated = model.pvs[i].rated_kva;
            let rec = match c {
                Controller::Adaptive(s) => {
                    let q = s.step(&m, dt)?;
                    PvRecord {
                        v_ref: Some(s.droop.v_ref),
                        q0: Some(s.droop.q0),
                        q_pv: q,
                        q_max: s.q_max,
                        objective: s.last_objective,
                    }
                }
                other => {
                    let q_max = q_capacity(rated, p_kw)?;
                    let (q, v_ref, q0) = match other {
                        Controller::Fixed(f) => {
                            let q = f.step(&m)?;
                            (q, Some(f.droop.v_ref), Some(f.droop.q0.clamp(-q_max, q_max)))
                        }
                        Controller::Oracle(held) => (held.clamp(-q_max, q_max), None, None),
                        _ => (0.0, None, None),
                    };
                    let probe = InverterControllerState::new(&adaptive, rated)?;
                    PvRecord { v_ref, q0, q_pv: q, q_max, objective: probe.objective_value(&m) }
                }
            };
            inj.pv[i].q_kvar = rec.q_pv;
            pv_records.push(rec);
        }

        let converged = match solve_with(model, &inj, &taps, &solver, Some(&last)) {
            Ok(sol) => {
                last = sol;
                true
            }
            Err(PowerFlowError::NonConvergence { .. }) => {
                diverged += 1;
                if diverged > limit {
                    return Err(ScenarioError::Diverged { diverged, steps, limit });
                }
                false
            }
            Err(e) => return Err(e.into()),
        };

        let convexity = if config.convexity_report && converged {
            Some(
                (0..model.pvs.len())
                    .map(|i| convexity::report(model, &inj, &taps, &last, i, true))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };

        records.push(StepRecord {
            step: k,
            time_s: t,
            voltages: bus_voltages(model, &last),
            pvs: pv_records,
            taps: taps.clone(),
            loss_kw: last.total_loss_kw(model),
            penalty: total_penalty(model, &last, k_p),
            converged,
            convexity,
        });
    }

    let mut summary = summarize(&records, dt, config.price_per_kwh)?;
    summary.feeder = model.name.clone().unwrap_or_else(|| config.feeder.clone());
    summary.controller = config.controller.to_string();
    Ok(ScenarioRun { config: config.clone(), records, summary })
}

/// Paired runs of the adaptive, fixed-droop and oracle controllers.
#[derive(Debug, Clone)]
pub struct CompareResult {
    pub es_adaptive: ScenarioRun,
    pub fixed_droop: ScenarioRun,
    pub oracle: ScenarioRun,
}

impl CompareResult {
    pub fn runs(&self) -> [&ScenarioRun; 3] {
        [&self.es_adaptive, &self.fixed_droop, &self.oracle]
    }
}

/// Runs the three controllers on identical profiles and seeds, in parallel.
pub fn compare(config: &ScenarioConfig) -> Result<CompareResult, ScenarioError> {
    config.validate()?;
    let model = config.load_model()?;
    let kinds = [ControllerKind::EsAdaptive, ControllerKind::FixedDroop, ControllerKind::Oracle];
    let results: Vec<Result<ScenarioRun, ScenarioError>> = std::thread::scope(|s| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|&k| {
                let cfg = config.with_controller(k);
                let model = &model;
                s.spawn(move || run_qsts_on(model, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    let mut it = results.into_iter();
    let (mut es, mut fixed, oracle) = (it.next().unwrap()?, it.next().unwrap()?, it.next().unwrap()?);
    let oracle_kwh = oracle.summary.energy_loss_kwh;
    es.summary = es.summary.with_oracle(oracle_kwh);
    fixed.summary = fixed.summary.with_oracle(oracle_kwh);
    let mut oracle = oracle;
    oracle.summary = oracle.summary.with_oracle(oracle_kwh);
    Ok(CompareResult { es_adaptive: es, fixed_droop: fixed, oracle })
}
