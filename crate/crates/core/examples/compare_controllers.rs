//! Runs the adaptive controller, the fixed droop baseline and the oracle on
//! identical profiles and prints the comparison table.
//!
//! cargo run --release --example compare_controllers -- [4bus|13bus] [solar_smooth|solar_highvar]

use localvvo::cli::compare_table;
use localvvo::scenario::{compare, ScenarioConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg =
        ScenarioConfig { feeder: args.first().cloned().unwrap_or_else(|| "13bus".into()), ..Default::default() };
    if let Some(pv) = args.get(1) {
        cfg.profiles.pvs = vec![pv.clone()];
    }
    let result = compare(&cfg).expect("scenarios run");
    print!("{}", compare_table(&result.runs()));
}
