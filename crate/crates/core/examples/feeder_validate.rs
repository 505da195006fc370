//! Loads and validates a feeder file (or a bundled feeder) and prints its
//! element counts, or the validation error.
//!
//! cargo run --example feeder_validate -- [path.json|4bus|13bus]

use localvvo::feeder::{bundled, element_counts, load_feeder};

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "13bus".into());
    let loaded = match bundled::by_name(&arg) {
        Some(m) => Ok(m),
        None => load_feeder(&arg),
    };
    match loaded {
        Ok(model) => {
            println!("{arg}: valid");
            for (kind, n) in element_counts(&model) {
                println!("  {kind:<12} {n}");
            }
            println!(
                "  base {} MVA, source {} pu at bus {}",
                model.base_mva, model.source_voltage_pu, model.source_bus
            );
        }
        Err(e) => {
            eprintln!("{arg}: {e}");
            std::process::exit(1);
        }
    }
}
