//! Writes the bundled load and irradiance profiles as CSV files that a
//! scenario can read back through `profiles_dir`.
//!
//! cargo run --example export_profiles -- <dir> [seed]

use localvvo::scenario::profiles;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "profiles".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    std::fs::create_dir_all(&dir).unwrap();
    for name in ["solar_smooth", "solar_highvar", "load1", "load2"] {
        let p = profiles::bundled(name, seed).expect("bundled profile");
        let path = std::path::Path::new(&dir).join(format!("{name}.csv"));
        p.write_csv(&path).unwrap();
        let (lo, hi) = p.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        println!("{} ({} samples, range {lo:.3}..{hi:.3})", path.display(), p.samples.len());
    }
}
