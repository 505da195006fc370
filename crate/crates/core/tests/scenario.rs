mod common;

use common::{two_bus, TWO_BUS_S_BASE, TWO_BUS_Z_BASE};
use localvvo::feeder::bundled;
use localvvo::powerflow::{solve_with, InjectionSet, SolverOptions};
use localvvo::scenario::oracle::dispatch_objective;
use localvvo::scenario::output::{csv_header, records_csv_string, write_run};
use localvvo::scenario::profiles::{self, TimeSeriesProfile};
use localvvo::scenario::{
    analysis, brute_force_dispatch, injections_at, run_qsts, run_qsts_on, summarize, ControllerKind, OracleMode,
    OracleOptions, ProfileAssignment, PvRecord, ScenarioConfig, ScenarioError, StepRecord,
};
use proptest::prelude::*;

fn short(feeder: &str, controller: ControllerKind, hours: f64) -> ScenarioConfig {
    ScenarioConfig { feeder: feeder.into(), controller, hours, ..Default::default() }
}

#[test]
fn runs_are_deterministic_down_to_the_csv_bytes() {
    for feeder in ["4bus", "13bus"] {
        let mut cfg = short(feeder, ControllerKind::EsAdaptive, 3.0);
        cfg.profiles.pvs = vec!["solar_highvar".into()];
        cfg.convexity_report = true;
        let (a, b) = (run_qsts(&cfg).unwrap(), run_qsts(&cfg).unwrap());
        assert_eq!(a.records, b.records);
        let m = cfg.load_model().unwrap();
        assert_eq!(records_csv_string(&m, &a.records, true), records_csv_string(&m, &b.records, true));
    }
}

#[test]
fn summary_kwh_is_the_rectangle_rule_of_step_losses() {
    for kind in ControllerKind::ALL {
        let run = run_qsts(&short("13bus", kind, 2.0)).unwrap();
        let kwh: f64 = run.records.iter().map(|r| r.loss_kw * 30.0 / 3600.0).sum();
        assert_eq!(run.summary.energy_loss_kwh, kwh);
        assert_eq!(run.summary.cost, kwh * 0.08);
        assert_eq!(run.summary.steps, 240);
    }
}

fn flat_record(step: usize, loss_kw: f64) -> StepRecord {
    StepRecord {
        step,
        time_s: step as f64 * 30.0,
        voltages: vec![vec![1.0]],
        pvs: vec![PvRecord { v_ref: None, q0: None, q_pv: 0.0, q_max: 0.0, objective: 0.0 }],
        taps: vec![],
        loss_kw,
        penalty: 0.0,
        converged: true,
        convexity: None,
    }
}

#[test]
fn constant_loss_day() {
    let recs: Vec<StepRecord> = (0..2880).map(|k| flat_record(k, 100.0)).collect();
    let s = summarize(&recs, 30.0, 0.08).unwrap();
    assert!((s.energy_loss_kwh - 2400.0).abs() < 1e-9);
    assert!((s.cost - 192.0).abs() < 1e-9);
    let zero: Vec<StepRecord> = (0..10).map(|k| flat_record(k, 0.0)).collect();
    assert_eq!(summarize(&zero, 30.0, 0.08).unwrap().cost, 0.0);
    assert!(matches!(summarize(&[], 30.0, 0.08), Err(ScenarioError::Empty)));
}

#[test]
fn oracle_modes_agree_on_the_four_bus() {
    let m = bundled::four_bus();
    for scale in [0.4, 1.0] {
        let mut inj = InjectionSet::nominal(&m);
        inj.load_scale.iter_mut().for_each(|s| *s = scale);
        inj.pv[0].p_kw = 1000.0;
        inj.pv[1].p_kw = 1500.0;
        let opts = |mode| OracleOptions { mode, ..Default::default() };
        let ex = brute_force_dispatch(&m, &inj, &[], &opts(OracleMode::Exhaustive)).unwrap();
        let cd = brute_force_dispatch(&m, &inj, &[], &opts(OracleMode::CoordinateDescent)).unwrap();
        assert_eq!(ex.mode, OracleMode::Exhaustive);
        assert_eq!(ex.q_kvar, cd.q_kvar);
        // different warm-start paths, each converged to the oracle tolerance
        assert!((ex.objective - cd.objective).abs() < 1e-8);
        assert_eq!(ex.evaluations, 1 + 21 * 21);
    }
}

#[test]
fn oracle_on_an_unloaded_feeder_does_nothing() {
    let m = bundled::four_bus();
    let d = brute_force_dispatch(&m, &InjectionSet::zero(&m), &[], &OracleOptions::default()).unwrap();
    assert_eq!(d.q_kvar, vec![0.0, 0.0]);
    assert!(d.loss_kw.abs() < 1e-12);
}

#[test]
fn oracle_matches_a_closed_form_grid_scan_on_two_bus() {
    let (r, x, p, q) = (1.0, 2.0, 600.0, 300.0);
    let m = two_bus(r, x, p, q, 1200.0);
    let inj = InjectionSet::nominal(&m);
    let opts = OracleOptions { points: 61, ..Default::default() };
    let d = brute_force_dispatch(&m, &inj, &[], &opts).unwrap();
    // loss r|I|² with |I|² = (P² + (Q − q)²)/V², V from the closed form
    let loss = |q_pv: f64| {
        let (rp, xp) = (r / TWO_BUS_Z_BASE, x / TWO_BUS_Z_BASE);
        let (pp, qp) = (p / TWO_BUS_S_BASE, (q - q_pv) / TWO_BUS_S_BASE);
        let v = common::two_bus_voltage(1.0, rp, xp, pp, qp);
        rp * (pp * pp + qp * qp) / (v * v)
    };
    let grid: Vec<f64> = (0..61).map(|j| -1200.0 + 2400.0 * j as f64 / 60.0).collect();
    let best = grid.iter().copied().min_by(|a, b| loss(*a).total_cmp(&loss(*b))).unwrap();
    assert_eq!(d.q_kvar, vec![best]);
    // interior minimum just above the load's reactive demand (line reactive loss)
    assert!(best >= q && best <= q + 2400.0 / 60.0);
}

#[test]
fn exhaustive_over_budget_is_an_error() {
    let m = bundled::thirteen_bus();
    let opts = OracleOptions { mode: OracleMode::Exhaustive, ..Default::default() };
    let err = brute_force_dispatch(&m, &InjectionSet::nominal(&m), &m.initial_taps(), &opts).unwrap_err();
    assert!(matches!(err, ScenarioError::Budget { .. }));
}

#[test]
fn regulators_off_hold_taps() {
    let mut cfg = short("13bus", ControllerKind::None, 4.0);
    cfg.regulators = false;
    let run = run_qsts(&cfg).unwrap();
    let first = run.records[0].taps.clone();
    assert!(run.records.iter().all(|r| r.taps == first));
    cfg.regulators = true;
    let run = run_qsts(&cfg).unwrap();
    assert!(run.records.iter().any(|r| r.taps != first));
}

#[test]
fn csv_header_layout() {
    let m = bundled::four_bus();
    let h = csv_header(&m, false);
    assert_eq!(&h[..3], ["step", "time_s", "v_1_a"]);
    assert_eq!(h.len(), 2 + 12 + 2 * 5 + 3);
    assert_eq!(h[14], "pv0_3_vref");
    assert_eq!(h.last().unwrap(), "converged");
    let h13 = csv_header(&bundled::thirteen_bus(), true);
    assert!(h13.iter().any(|c| c.starts_with("tap_")));
    assert!(h13.last().unwrap().ends_with("_cvx_ok"));
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short("4bus", ControllerKind::FixedDroop, 0.5);
    let m = cfg.load_model().unwrap();
    let run = run_qsts(&cfg).unwrap();
    let out = dir.path().join("nested/out");
    write_run(&out, "x", &m, &run.records, &run.summary, false, false).unwrap();
    let again = write_run(&out, "x", &m, &run.records, &run.summary, false, false);
    assert!(matches!(again, Err(ScenarioError::Exists(_))));
    write_run(&out, "x", &m, &run.records, &run.summary, false, true).unwrap();
    let text = std::fs::read_to_string(out.join("x.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 60);
}

#[test]
fn profiles_dir_overrides_bundled_profiles() {
    let dir = tempfile::tempdir().unwrap();
    // 2 h of a flat half-load at 60 s spacing
    TimeSeriesProfile::new("half", 60.0, vec![0.5; 121]).unwrap().write_csv(dir.path().join("half.csv")).unwrap();
    let mut cfg = short("4bus", ControllerKind::None, 2.0);
    cfg.profiles_dir = Some(dir.path().to_path_buf());
    cfg.profile_dt = 60.0;
    cfg.profiles = ProfileAssignment { loads: vec!["half".into()], pvs: vec!["zero".into()] };
    let run = run_qsts(&cfg).unwrap();
    // equal up to the sweep tolerance (cold first solve, warm thereafter)
    let l = run.records[0].loss_kw;
    assert!(run.records.iter().all(|r| (r.loss_kw - l).abs() < 1e-3));
    let full = run_qsts(&ScenarioConfig {
        profiles: ProfileAssignment { loads: vec!["one".into()], pvs: vec!["zero".into()] },
        ..short("4bus", ControllerKind::None, 0.1)
    })
    .unwrap();
    assert!(full.records[0].loss_kw > 3.0 * l);

    cfg.hours = 3.0;
    assert!(matches!(run_qsts(&cfg), Err(ScenarioError::Profile(_))));
    cfg.profiles.loads = vec!["missing".into()];
    assert!(matches!(run_qsts(&cfg), Err(ScenarioError::Profile(_))));
}

#[test]
fn highvar_profile_depends_only_on_the_seed() {
    assert_eq!(profiles::solar_highvar(7), profiles::solar_highvar(7));
    assert_ne!(profiles::solar_highvar(7), profiles::solar_highvar(8));
}

#[test]
fn infeasible_feeder_fails_the_run() {
    let m = two_bus(20.0, 40.0, 50_000.0, 20_000.0, 0.0);
    let cfg = short("unused", ControllerKind::None, 1.0);
    assert!(run_qsts_on(&m, &cfg).is_err());
}

#[test]
fn phase_analysis_needs_four_periods() {
    let run = run_qsts(&short("4bus", ControllerKind::EsAdaptive, 1.0)).unwrap();
    let w = ScenarioConfig::default().adaptive.es.omega;
    assert!(analysis::perturbation_phase_analysis(&run.records[..39], 0, 1, w, 30.0).is_err());
    assert!(analysis::perturbation_phase_analysis(&run.records[..40], 0, 1, w, 30.0).is_ok());
}

#[test]
fn unloaded_feeder_sits_at_source_voltage() {
    let mut cfg = short("4bus", ControllerKind::None, 1.0);
    cfg.profiles = ProfileAssignment { loads: vec!["zero".into()], pvs: vec!["zero".into()] };
    let run = run_qsts(&cfg).unwrap();
    let src = cfg.load_model().unwrap().source_voltage_pu;
    for r in &run.records {
        assert!(r.voltages.iter().flatten().all(|v| (v - src).abs() < 1e-9));
        assert!(r.loss_kw.abs() < 1e-9);
    }
    assert_eq!(run.summary.violation_count, 0);
}

fn narrow_fixed(hysteresis: Option<f64>, band: [f64; 2]) -> f64 {
    let mut cfg = short("4bus", ControllerKind::FixedDroop, 24.0);
    cfg.band = Some(band);
    cfg.fixed_droop.hysteresis = hysteresis;
    run_qsts(&cfg).unwrap().summary.max_oscillation_index()
}

#[test]
fn fixed_droop_oscillation_and_hysteresis() {
    let bare = narrow_fixed(None, [0.88, 1.12]);
    let damped = narrow_fixed(Some(0.3), [0.88, 1.12]);
    assert!(bare > 1000.0, "{bare}");
    assert!(damped < bare, "{damped} vs {bare}");

    // wide band at light load: the loop gain is small and nothing chatters
    let mut cfg = short("4bus", ControllerKind::FixedDroop, 6.0);
    cfg.profiles.loads = vec!["zero".into()];
    cfg.profiles.pvs = vec!["zero".into()];
    let run = run_qsts(&cfg).unwrap();
    // only the decaying startup transient; settled after the first hour
    for pv in 0..2 {
        let q: Vec<f64> = run.records[120..].iter().map(|r| r.pvs[pv].q_pv).collect();
        assert!(analysis::oscillation_index(&q, 20) < 1e-6);
    }
}

#[test]
fn oracle_dominates_the_adaptive_controller_step_by_step() {
    let cfg = short("4bus", ControllerKind::EsAdaptive, 24.0);
    let m = cfg.load_model().unwrap();
    let run = run_qsts(&cfg).unwrap();
    let (loads, pvs) = cfg.resolve_profiles(&m).unwrap();
    let opts = OracleOptions::default();
    let exact = SolverOptions { tolerance: opts.tolerance, max_iterations: 500 };
    let objective = |inj: &InjectionSet, q: &[f64], taps: &[[i32; 3]]| {
        let mut inj = inj.clone();
        for (out, q) in inj.pv.iter_mut().zip(q) {
            out.q_kvar = *q;
        }
        dispatch_objective(&m, &solve_with(&m, &inj, taps, &exact, None).unwrap(), opts.penalty_weight)
    };
    for rec in run.records.iter().step_by(97) {
        let inj = injections_at(&m, &loads, &pvs, rec.time_s).unwrap();
        let oracle = brute_force_dispatch(&m, &inj, &rec.taps, &opts).unwrap();
        let q: Vec<f64> = rec.pvs.iter().map(|p| p.q_pv).collect();
        // the controller's point snapped to the oracle grid bounds the slack
        let snapped: Vec<f64> = rec
            .pvs
            .iter()
            .map(|p| {
                let step = 2.0 * p.q_max / (opts.points - 1) as f64;
                (-p.q_max + ((p.q_pv + p.q_max) / step).round() * step).clamp(-p.q_max, p.q_max)
            })
            .collect();
        let ctrl = objective(&inj, &q, &rec.taps);
        let slack = (objective(&inj, &snapped, &rec.taps) - ctrl).abs();
        assert!(oracle.objective <= ctrl + slack + 1e-9, "step {}: {} > {ctrl} + {slack}", rec.step, oracle.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_command_respects_capacity_and_summary_bounds(seed in 0u64..1000, kind in 0usize..4) {
        let mut cfg = short("13bus", ControllerKind::ALL[kind], 1.0);
        cfg.seed = seed;
        cfg.profiles.pvs = vec!["solar_highvar".into()];
        let run = run_qsts(&cfg).unwrap();
        let buses = cfg.load_model().unwrap().buses.len();
        prop_assert!(run.summary.energy_loss_kwh >= 0.0);
        prop_assert!(run.summary.violation_count <= run.summary.steps * buses);
        for r in &run.records {
            for pv in &r.pvs {
                prop_assert!(pv.q_pv.abs() <= pv.q_max + 1e-9);
            }
        }
    }
}
