//! Command-line front end. Flags override the `--config` file, which
//! overrides the built-in defaults. Exit codes: 0 success, 1 usage or input
//! error, 2 simulation failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::control::ObjectiveMode;
use crate::convexity::ConvexityReport;
use crate::feeder::element_counts;
use crate::scenario::output::{create_output, format_g9, write_run};
use crate::scenario::{
    brute_force_dispatch, compare, run_qsts, snapshot_injections, ControllerKind, ScenarioConfig, ScenarioError,
    ScenarioRun, ScenarioSummary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SIMULATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "localvvo", version, about = "QSTS simulation of local extremum-seeking Volt-VAR control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write `<feeder>_<controller>.csv` and `.json`.
    Run(ScenarioArgs),
    /// Run es-adaptive, fixed-droop and oracle on identical inputs and
    /// print a side-by-side summary.
    Compare(ScenarioArgs),
    /// Brute-force reactive dispatch at one snapshot.
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Snapshot time in seconds from the start of the profiles.
        #[arg(long, default_value_t = 43_200.0)]
        at: f64,
    },
    /// Run a scenario with the per-step convexity report and write it as CSV.
    CheckConvexity(ScenarioArgs),
    /// Load and validate a feeder file.
    Validate {
        /// Feeder JSON file or bundled feeder name (4bus, 13bus).
        #[arg(long)]
        feeder: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    I2,
    Sloss,
}

/// Scenario flags. Every flag is optional; unset flags keep the value from
/// `--config`, or the default shown.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file supplying defaults for every flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feeder JSON file or bundled feeder name [default: 4bus].
    #[arg(long)]
    pub feeder: Option<String>,
    /// es-adaptive, fixed-droop, none or oracle [default: es-adaptive].
    #[arg(long)]
    pub controller: Option<ControllerKind>,
    /// Simulated horizon in hours [default: 24].
    #[arg(long)]
    pub hours: Option<f64>,
    /// Control step in seconds [default: 30].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Directory searched for `<profile>.csv` before the bundled profiles.
    #[arg(long)]
    pub profiles_dir: Option<PathBuf>,
    /// Substation voltage override in pu [default: the feeder's source voltage].
    #[arg(long)]
    pub substation_pu: Option<f64>,
    /// Regulator control [default: on].
    #[arg(long, value_enum)]
    pub regulators: Option<OnOff>,
    /// Local objective of the adaptive controller [default: i2].
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Droop voltage band VMIN:VMAX for both droop controllers [default: 0.8:1.2].
    #[arg(long, value_parser = parse_band)]
    pub band: Option<[f64; 2]>,
    /// Seed of the high-variance solar profile [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Energy price for the cost column [default: 0.08].
    #[arg(long)]
    pub price_per_kwh: Option<f64>,
    /// Record the convexity report on every step.
    #[arg(long)]
    pub convexity_report: bool,
    /// Output directory, created if absent.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    pub force: bool,
}

fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected VMIN:VMAX, got '{s}'"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    let (lo, hi) = (num(lo)?, num(hi)?);
    if !(lo < hi) {
        return Err(format!("VMIN must be below VMAX, got {lo}:{hi}"));
    }
    Ok([lo, hi])
}

impl ScenarioArgs {
    /// Config file (or defaults) with the explicitly given flags applied.
    pub fn to_config(&self) -> Result<ScenarioConfig, ScenarioError> {
        let mut c = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = &self.feeder {
            c.feeder.clone_from(v);
        }
        if let Some(v) = self.controller {
            c.controller = v;
        }
        if let Some(v) = self.hours {
            c.hours = v;
        }
        if let Some(v) = self.dt {
            c.dt = v;
        }
        if let Some(v) = &self.profiles_dir {
            c.profiles_dir = Some(v.clone());
        }
        if let Some(v) = self.substation_pu {
            c.substation_pu = Some(v);
        }
        if let Some(v) = self.regulators {
            c.regulators = v == OnOff::On;
        }
        if let Some(v) = self.objective {
            c.adaptive.objective = match v {
                ObjectiveArg::I2 => ObjectiveMode::I2,
                ObjectiveArg::Sloss => ObjectiveMode::Sloss,
            };
        }
        if let Some(v) = self.band {
            c.band = Some(v);
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.price_per_kwh {
            c.price_per_kwh = v;
        }
        c.convexity_report |= self.convexity_report;
        c.validate()?;
        Ok(c)
    }
}

/// Exit code for a failed command.
pub fn exit_code(e: &ScenarioError) -> i32 {
    match e {
        ScenarioError::Config(_)
        | ScenarioError::Profile(_)
        | ScenarioError::Feeder(_)
        | ScenarioError::Exists(_)
        | ScenarioError::Budget { .. } => EXIT_USAGE,
        _ => EXIT_SIMULATION,
    }
}

/// File stem shared by a run's outputs.
fn stem(cfg: &ScenarioConfig) -> String {
    let feeder = Path::new(&cfg.feeder)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| cfg.feeder.clone());
    format!("{feeder}_{}", cfg.controller)
}

fn summary_line(s: &ScenarioSummary) -> String {
    format!(
        "{:<12} {:>12.3} kWh  cost {:>10.2}  V [{:.4}, {:.4}]  violations {:>5}  oscillation {:>8.2}",
        s.controller,
        s.energy_loss_kwh,
        s.cost,
        s.min_voltage_pu,
        s.max_voltage_pu,
        s.violation_count,
        s.max_oscillation_index()
    )
}

/// Side-by-side table of paired runs with the gap to the oracle.
pub fn compare_table(runs: &[&ScenarioRun]) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<12} {:>12} {:>10} {:>10} {:>8} {:>8} {:>6} {:>12}",
        "controller", "loss_kwh", "gap_%", "cost", "min_v", "max_v", "viol", "oscillation"
    );
    for r in runs {
        let s = &r.summary;
        let gap = s.loss_gap_vs_oracle_pct.map(|g| format!("{g:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            t,
            "{:<12} {:>12.3} {:>10} {:>10.2} {:>8.4} {:>8.4} {:>6} {:>12.2}",
            s.controller,
            s.energy_loss_kwh,
            gap,
            s.cost,
            s.min_voltage_pu,
            s.max_voltage_pu,
            s.violation_count,
            s.max_oscillation_index()
        );
    }
    t
}

fn write_json<T: Serialize>(path: &Path, value: &T, force: bool) -> Result<(), ScenarioError> {
    let mut w = BufWriter::new(create_output(path, force)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| ScenarioError::Io(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| ScenarioError::Io(e.to_string()))
}

fn cmd_run(args: &ScenarioArgs, out: &mut dyn Write) -> Result<(), ScenarioError> {
    let cfg = args.to_config()?;
    let model = cfg.load_model()?;
    let run = run_qsts(&cfg)?;
    let (csv, json) =
        write_run(&args.out, &stem(&cfg), &model, &run.records, &run.summary, cfg.convexity_report, args.force)?;
    let _ = writeln!(out, "{}", summary_line(&run.summary));
    let _ = writeln!(out, "wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn cmd_compare(args: &ScenarioArgs, out: &mut dyn Write) -> Result<(), ScenarioError> {
    let cfg = args.to_config()?;
    let model = cfg.load_model()?;
    let result = compare(&cfg)?;
    let runs = result.runs();
    let base = stem(&cfg.with_controller(ControllerKind::None));
    let base = base.trim_end_matches("_none");
    if !args.force {
        for r in runs {
            for ext in ["csv", "json"] {
                let p = args.out.join(format!("{}.{ext}", stem(&r.config)));
                if p.exists() {
                    return Err(ScenarioError::Exists(p));
                }
            }
        }
    }
    for r in runs {
        write_run(&args.out, &stem(&r.config), &model, &r.records, &r.summary, cfg.convexity_report, args.force)?;
    }
    let summaries: Vec<&ScenarioSummary> = runs.iter().map(|r| &r.summary).collect();
    let path = args.out.join(format!("{base}_compare.json"));
    write_json(&path, &summaries, args.force)?;
    let _ = write!(out, "{}", compare_table(&runs));
    let _ = writeln!(out, "wrote run files and {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleSnapshot<'a> {
    feeder: &'a str,
    time_s: f64,
    pv_buses: Vec<&'a str>,
    p_kw: Vec<f64>,
    #[serde(flatten)]
    dispatch: &'a crate::scenario::Dispatch,
}

fn cmd_oracle(args: &ScenarioArgs, at: f64, out: &mut dyn Write) -> Result<(), ScenarioError> {
    let cfg = args.to_config()?;
    if !(at >= 0.0 && at < cfg.steps() as f64 * cfg.dt) {
        return Err(ScenarioError::Config(format!("--at {at} s lies outside the {} h horizon", cfg.hours)));
    }
    let model = cfg.load_model()?;
    let inj = snapshot_injections(&model, &cfg, at)?;
    let d = brute_force_dispatch(&model, &inj, &model.initial_taps(), &cfg.oracle)?;
    let snap = OracleSnapshot {
        feeder: &cfg.feeder,
        time_s: at,
        pv_buses: model.pvs.iter().map(|p| p.bus.as_str()).collect(),
        p_kw: inj.pv.iter().map(|p| p.p_kw).collect(),
        dispatch: &d,
    };
    let feeder = stem(&cfg.with_controller(ControllerKind::Oracle));
    let path = args.out.join(format!("{feeder}_snapshot.json"));
    write_json(&path, &snap, args.force)?;
    let _ = writeln!(out, "oracle at t = {at} s ({:?}, {} evaluations)", d.mode, d.evaluations);
    for ((bus, p), q) in snap.pv_buses.iter().zip(&snap.p_kw).zip(&d.q_kvar) {
        let _ = writeln!(out, "  pv@{bus:<6} p {p:>10.2} kW  q {q:>10.2} kvar");
    }
    let _ = writeln!(out, "  loss {:.3} kW, objective {:.6}", d.loss_kw, d.objective);
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(())
}

fn cmd_check_convexity(args: &ScenarioArgs, out: &mut dyn Write) -> Result<(), ScenarioError> {
    let mut cfg = args.to_config()?;
    cfg.convexity_report = true;
    let model = cfg.load_model()?;
    let run = run_qsts(&cfg)?;
    let path = args.out.join(format!("{}_convexity.csv", stem(&cfg)));
    let io = |e: csv::Error| ScenarioError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(BufWriter::new(create_output(&path, args.force)?));
    w.write_record(["step", "time_s", "pv", "bus", "denominator", "second_derivative", "satisfied"]).map_err(io)?;
    let n = model.pvs.len();
    let (mut checked, mut satisfied, mut positive_d) = (vec![0usize; n], vec![0usize; n], vec![0usize; n]);
    for rec in &run.records {
        let Some(reports) = &rec.convexity else { continue };
        for (i, c) in reports.iter().enumerate() {
            let ConvexityReport { denominator, second_derivative, satisfied: ok, .. } = *c;
            checked[i] += 1;
            satisfied[i] += usize::from(ok);
            positive_d[i] += usize::from(denominator > 0.0);
            w.write_record([
                rec.step.to_string(),
                format_g9(rec.time_s),
                i.to_string(),
                model.pvs[i].bus.clone(),
                format_g9(denominator),
                second_derivative.map(format_g9).unwrap_or_default(),
                u8::from(ok).to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| ScenarioError::Io(e.to_string()))?;
    for i in 0..n {
        let _ = writeln!(
            out,
            "pv{i}@{:<6} D > 0 on {}/{} steps, condition satisfied on {}/{}",
            model.pvs[i].bus, positive_d[i], checked[i], satisfied[i], checked[i]
        );
    }
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(())
}

fn cmd_validate(feeder: &str, out: &mut dyn Write) -> Result<(), ScenarioError> {
    let cfg = ScenarioConfig { feeder: feeder.to_string(), ..Default::default() };
    let model = cfg.load_model()?;
    let counts: Vec<String> = element_counts(&model).iter().map(|(k, v)| format!("{v} {k}")).collect();
    let _ = writeln!(out, "{}: valid ({})", model.name.as_deref().unwrap_or(feeder), counts.join(", "));
    Ok(())
}

/// Parses `args` (including the program name) and executes the command,
/// writing the human-readable summary to `out` and errors to `err`.
pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Oracle { scenario, at } => cmd_oracle(scenario, *at, out),
        Command::CheckConvexity(a) => cmd_check_convexity(a, out),
        Command::Validate { feeder } => cmd_validate(feeder, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point of the `localvvo` binary.
pub fn main_with_args() -> i32 {
    run_with_io(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_parsing() {
        assert_eq!(parse_band("0.88:1.12").unwrap(), [0.88, 1.12]);
        assert!(parse_band("1.12:0.88").is_err());
        assert!(parse_band("0.9").is_err());
        assert!(parse_band("a:1").is_err());
    }

    #[test]
    fn flags_override_config_defaults() {
        let cli = Cli::try_parse_from([
            "localvvo",
            "run",
            "--feeder",
            "13bus",
            "--regulators",
            "off",
            "--objective",
            "sloss",
            "--band",
            "0.9:1.1",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!("run expected") };
        let c = a.to_config().unwrap();
        assert_eq!(c.feeder, "13bus");
        assert!(!c.regulators);
        assert_eq!(c.adaptive.objective, ObjectiveMode::Sloss);
        assert_eq!(c.band, Some([0.9, 1.1]));
        assert_eq!(c.hours, 24.0);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_with_io(["localvvo", "run", "--nope"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run_with_io(["localvvo"], &mut o, &mut e), EXIT_USAGE);
    }
}
