mod common;

use localvvo::feeder::{
    bundled, element_counts, load_feeder, parse_feeder, regulator_step, serialize_feeder, upstream_branch, FeederError,
    PhaseSet, Regulator, DEFAULT_TAP_STEP, TAP_MAX, TAP_MIN,
};
use proptest::prelude::*;

#[test]
fn bundled_feeders_round_trip_through_json() {
    for m in [bundled::four_bus(), bundled::thirteen_bus()] {
        let text = serialize_feeder(&m);
        assert_eq!(parse_feeder(&text).unwrap(), m);
    }
}

#[test]
fn bundled_shapes() {
    let m4 = bundled::four_bus();
    assert_eq!(element_counts(&m4)["buses"], 4);
    assert_eq!(element_counts(&m4)["pvs"], 2);
    assert_eq!(m4.pvs[1].monitored_branch, "3-4");

    let m13 = bundled::thirteen_bus();
    assert_eq!(element_counts(&m13)["regulators"], 1);
    assert!(m13.pvs.len() >= 4);
    // unbalanced: some bus carries fewer than three phases
    assert!(m13.buses.iter().any(|b| b.phases.len() < 3));
    for pv in &m13.pvs {
        assert_eq!(upstream_branch(&m13, &pv.bus).unwrap(), pv.monitored_branch);
    }
}

#[test]
fn every_non_source_bus_reaches_the_source() {
    let m = bundled::thirteen_bus();
    let src = m.source_index();
    for b in 0..m.buses.len() {
        let path = m.path_to_source(b);
        assert_eq!(*path.last().unwrap(), src);
        assert_eq!(path.len() == 1, b == src);
    }
}

#[test]
fn load_from_disk_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("4bus.json");
    std::fs::write(&path, bundled::FOUR_BUS_JSON).unwrap();
    assert_eq!(load_feeder(&path).unwrap(), bundled::four_bus());
    assert!(matches!(load_feeder(dir.path().join("nope.json")), Err(FeederError::Io { .. })));
}

fn edit(find: &str, replace: &str) -> Result<localvvo::feeder::FeederModel, FeederError> {
    assert!(bundled::FOUR_BUS_JSON.contains(find), "fixture lacks {find}");
    parse_feeder(&bundled::FOUR_BUS_JSON.replacen(find, replace, 1))
}

#[test]
fn invalid_edits_are_rejected() {
    // unknown bus on a branch
    assert!(edit(r#""to": "4""#, r#""to": "9""#).is_err());
    // load phase outside the bus
    assert!(edit(r#""phase": "a""#, r#""phase": "x""#).is_err());
    // nonpositive base voltage
    assert!(edit("\"base_kv\": 2.4017771198288433", "\"base_kv\": 0.0").is_err());
    // zip fractions not summing to one
    assert!(edit("\"zip\": [\n    1,\n    0,\n    0\n   ]", "\"zip\": [0.5, 0.2, 0.2]").is_err());
    // negative self resistance
    assert!(edit("0.21666667,", "-0.21666667,").is_err());
}

#[test]
fn disconnected_bus_is_unreachable() {
    // 2-3 rewired as 4-3: buses 3 and 4 form an island with a loop
    let text = bundled::FOUR_BUS_JSON.replacen(r#""from": "2""#, r#""from": "4""#, 1);
    let err = parse_feeder(&text).unwrap_err();
    assert!(matches!(err, FeederError::NonRadial { .. } | FeederError::Unreachable(_)), "{err}");
    let self_loop = bundled::FOUR_BUS_JSON.replacen(r#""from": "3""#, r#""from": "4""#, 1);
    assert!(parse_feeder(&self_loop).unwrap_err().to_string().contains("itself"));
}

proptest! {
    #[test]
    fn regulator_taps_stay_in_range_and_move_toward_setpoint(
        taps in proptest::array::uniform3(TAP_MIN..=TAP_MAX),
        v in proptest::array::uniform3(0.8f64..1.2),
        band in 0.005f64..0.05,
    ) {
        let reg = Regulator {
            branch: "x".into(),
            taps,
            setpoint_pu: 1.0,
            bandwidth_pu: band,
            step: DEFAULT_TAP_STEP,
        };
        let next = regulator_step(&reg, v, PhaseSet::ABC);
        for i in 0..3 {
            prop_assert!((TAP_MIN..=TAP_MAX).contains(&next.taps[i]));
            let d = next.taps[i] - taps[i];
            prop_assert!(d.abs() <= 1);
            if (v[i] - 1.0).abs() <= band / 2.0 {
                prop_assert_eq!(d, 0);
            } else if v[i] < 1.0 {
                prop_assert!(d >= 0);
            } else {
                prop_assert!(d <= 0);
            }
        }
    }

    #[test]
    fn phase_set_string_round_trip(a: bool, b: bool, c: bool) {
        match PhaseSet::new(a, b, c) {
            Some(p) => {
                let back: PhaseSet = p.to_string().parse().unwrap();
                prop_assert_eq!(back, p);
                prop_assert_eq!(p.len(), [a, b, c].iter().filter(|x| **x).count());
            }
            None => prop_assert!(!a && !b && !c),
        }
    }
}
