//! Grid-search reactive dispatch minimizing feeder loss plus voltage penalty.

use serde::{Deserialize, Serialize};

use crate::control::{q_capacity, voltage_penalty};
use crate::feeder::FeederModel;
use crate::powerflow::{solve_with, InjectionSet, PowerFlowSolution, SolverOptions};

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Exhaustive when the grid fits the budget, coordinate descent otherwise.
    #[default]
    Auto,
    Exhaustive,
    CoordinateDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    /// Grid points per inverter spanning [−Q_max, Q_max].
    pub points: usize,
    pub mode: OracleMode,
    /// Largest number of exhaustive grid evaluations.
    pub budget: usize,
    pub penalty_weight: f64,
    /// Cap on full coordinate-descent sweeps.
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            points: 21,
            mode: OracleMode::Auto,
            budget: 10_000,
            penalty_weight: 10.0,
            max_sweeps: 100,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dispatch {
    pub q_kvar: Vec<f64>,
    /// Total real loss (pu) plus voltage penalty.
    pub objective: f64,
    pub loss_kw: f64,
    pub evaluations: usize,
    pub mode: OracleMode,
}

/// Real loss (pu on the per-phase base) plus the penalty summed over all bus phases.
pub fn dispatch_objective(model: &FeederModel, sol: &PowerFlowSolution, penalty_weight: f64) -> f64 {
    let mut penalty = 0.0;
    for (b, bus) in model.buses.iter().enumerate() {
        for ph in bus.phases.indices() {
            penalty += voltage_penalty(sol.voltages[b][ph].norm(), penalty_weight);
        }
    }
    sol.total_loss.re + penalty
}

struct Evaluator<'a> {
    model: &'a FeederModel,
    base: InjectionSet,
    taps: &'a [[i32; 3]],
    opts: SolverOptions,
    penalty_weight: f64,
    warm: Option<PowerFlowSolution>,
    evaluations: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, q: &[f64]) -> Result<(f64, f64), ScenarioError> {
        for (pv, &qk) in self.base.pv.iter_mut().zip(q) {
            pv.q_kvar = qk;
        }
        let sol = solve_with(self.model, &self.base, self.taps, &self.opts, self.warm.as_ref())?;
        self.evaluations += 1;
        let obj = dispatch_objective(self.model, &sol, self.penalty_weight);
        let loss = sol.total_loss_kw(self.model);
        self.warm = Some(sol);
        Ok((obj, loss))
    }
}

/// True when `(obj, q)` beats `(best, best_q)`: lower objective, or a tie
/// with lexicographically smaller |q| in inverter order.
fn better(obj: f64, q: &[f64], best: f64, best_q: &[f64]) -> bool {
    let eps = 1e-12 * best.abs().max(1.0);
    if obj < best - eps {
        return true;
    }
    if obj > best + eps {
        return false;
    }
    for (a, b) in q.iter().zip(best_q) {
        let (a, b) = (a.abs(), b.abs());
        if a < b - 1e-12 {
            return true;
        }
        if a > b + 1e-12 {
            return false;
        }
    }
    false
}

/// Minimizes loss plus penalty over a per-inverter grid of reactive outputs
/// at the given active outputs (the `q_kvar` fields of `injections` are ignored).
pub fn brute_force_dispatch(
    model: &FeederModel,
    injections: &InjectionSet,
    taps: &[[i32; 3]],
    opts: &OracleOptions,
) -> Result<Dispatch, ScenarioError> {
    if opts.points < 2 {
        return Err(ScenarioError::Config(format!("oracle needs at least 2 grid points, got {}", opts.points)));
    }
    injections.validate(model)?;
    let n = model.pvs.len();
    let grids: Vec<Vec<f64>> = model
        .pvs
        .iter()
        .zip(&injections.pv)
        .map(|(inv, out)| {
            let q_max = q_capacity(inv.rated_kva, out.p_kw)?;
            Ok((0..opts.points).map(|j| -q_max + 2.0 * q_max * j as f64 / (opts.points - 1) as f64).collect())
        })
        .collect::<Result<_, ScenarioError>>()?;

    let combos = u32::try_from(n).ok().and_then(|n| opts.points.checked_pow(n));
    let fits = combos.is_some_and(|c| c <= opts.budget);
    let mode = match opts.mode {
        OracleMode::Auto if fits => OracleMode::Exhaustive,
        OracleMode::Auto => OracleMode::CoordinateDescent,
        OracleMode::Exhaustive if !fits => {
            return Err(ScenarioError::Budget { points: opts.points, inverters: n, budget: opts.budget })
        }
        m => m,
    };

    let mut ev = Evaluator {
        model,
        base: injections.clone(),
        taps,
        opts: SolverOptions { tolerance: opts.tolerance, max_iterations: 500 },
        penalty_weight: opts.penalty_weight,
        warm: None,
        evaluations: 0,
    };

    let mid = opts.points / 2;
    let mut best_idx = vec![mid; n];
    let mut best_q: Vec<f64> = (0..n).map(|i| grids[i][mid]).collect();
    let (mut best, mut best_loss) = ev.eval(&best_q)?;

    match mode {
        OracleMode::Exhaustive => {
            let total = combos.expect("fits the budget");
            let mut idx = vec![0usize; n];
            let mut q = vec![0.0; n];
            for _ in 0..total {
                for i in 0..n {
                    q[i] = grids[i][idx[i]];
                }
                let (obj, loss) = ev.eval(&q)?;
                if better(obj, &q, best, &best_q) {
                    best = obj;
                    best_loss = loss;
                    best_q.clone_from(&q);
                }
                // odometer over the grid, last inverter fastest
                for i in (0..n).rev() {
                    idx[i] += 1;
                    if idx[i] < opts.points {
                        break;
                    }
                    idx[i] = 0;
                }
            }
        }
        _ => {
            for _ in 0..opts.max_sweeps {
                let mut changed = false;
                for i in 0..n {
                    let mut q = best_q.clone();
                    for j in 0..opts.points {
                        if j == best_idx[i] {
                            continue;
                        }
                        q[i] = grids[i][j];
                        let (obj, loss) = ev.eval(&q)?;
                        if better(obj, &q, best, &best_q) {
                            best = obj;
                            best_loss = loss;
                            best_q.clone_from(&q);
                            best_idx[i] = j;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        }
    }

    Ok(Dispatch { q_kvar: best_q, objective: best, loss_kw: best_loss, evaluations: ev.evaluations, mode })
}
