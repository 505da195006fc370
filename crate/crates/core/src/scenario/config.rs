//! Scenario configuration (JSON, every field optional).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::{AdaptiveDroopConfig, DroopParams, ObjectiveMode};
use crate::feeder::{bundled, load_feeder, FeederModel};
use crate::powerflow::SolverOptions;

use super::oracle::OracleOptions;
use super::profiles::{self, TimeSeriesProfile};
use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    #[default]
    EsAdaptive,
    FixedDroop,
    None,
    Oracle,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] =
        [ControllerKind::EsAdaptive, ControllerKind::FixedDroop, ControllerKind::None, ControllerKind::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::EsAdaptive => "es-adaptive",
            ControllerKind::FixedDroop => "fixed-droop",
            ControllerKind::None => "none",
            ControllerKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown controller '{s}' (expected es-adaptive, fixed-droop, none or oracle)"))
    }
}

/// Conventional droop baseline: fixed reference and offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedDroopConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub v_ref: f64,
    pub deadband: f64,
    pub q0: f64,
    /// Low-pass coefficient on the command; `None` applies the droop directly.
    pub hysteresis: Option<f64>,
}

impl Default for FixedDroopConfig {
    fn default() -> Self {
        FixedDroopConfig { v_min: 0.80, v_max: 1.20, v_ref: 1.0, deadband: 0.02, q0: 0.0, hysteresis: None }
    }
}

impl FixedDroopConfig {
    pub fn params(&self) -> DroopParams {
        DroopParams { v_min: self.v_min, v_max: self.v_max, v_ref: self.v_ref, deadband: self.deadband, q0: self.q0 }
    }
}

/// Which profile drives each load and each inverter. Lists shorter than the
/// element count are repeated cyclically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileAssignment {
    pub loads: Vec<String>,
    pub pvs: Vec<String>,
}

impl Default for ProfileAssignment {
    fn default() -> Self {
        ProfileAssignment { loads: vec!["load1".into(), "load2".into()], pvs: vec!["solar_smooth".into()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig { tolerance: d.tolerance, max_iterations: d.max_iterations }
    }
}

impl From<SolverConfig> for SolverOptions {
    fn from(c: SolverConfig) -> Self {
        SolverOptions { tolerance: c.tolerance, max_iterations: c.max_iterations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Path to a feeder JSON file, or the name of a bundled feeder.
    pub feeder: String,
    pub hours: f64,
    /// Inner control step (s).
    pub dt: f64,
    pub controller: ControllerKind,
    pub adaptive: AdaptiveDroopConfig,
    pub fixed_droop: FixedDroopConfig,
    /// Overrides `v_min`/`v_max` of both droop controllers.
    pub band: Option<[f64; 2]>,
    pub profiles: ProfileAssignment,
    /// Directory searched for `<name>.csv` before the bundled profiles.
    pub profiles_dir: Option<PathBuf>,
    /// Sample spacing of profile CSV files (s).
    pub profile_dt: f64,
    /// Overrides the feeder's source voltage (pu).
    pub substation_pu: Option<f64>,
    pub regulators: bool,
    /// Steps between regulator control actions.
    pub regulator_interval: usize,
    pub convexity_report: bool,
    /// Seed for profile jitter.
    pub seed: u64,
    pub price_per_kwh: f64,
    pub oracle: OracleOptions,
    /// Steps between oracle re-dispatches; the dispatch is held in between.
    pub oracle_interval: usize,
    pub solver: SolverConfig,
    /// Largest tolerated fraction of non-converged steps.
    pub max_divergence_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            feeder: "4bus".into(),
            hours: 24.0,
            dt: 30.0,
            controller: ControllerKind::EsAdaptive,
            adaptive: AdaptiveDroopConfig::default(),
            fixed_droop: FixedDroopConfig::default(),
            band: None,
            profiles: ProfileAssignment::default(),
            profiles_dir: None,
            profile_dt: profiles::BUNDLED_DT,
            substation_pu: None,
            regulators: true,
            regulator_interval: 10,
            convexity_report: false,
            seed: 1,
            price_per_kwh: 0.08,
            oracle: OracleOptions::default(),
            oracle_interval: 10,
            solver: SolverConfig::default(),
            max_divergence_fraction: 0.01,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn with_controller(&self, kind: ControllerKind) -> Self {
        ScenarioConfig { controller: kind, ..self.clone() }
    }

    pub fn steps(&self) -> usize {
        (self.hours * 3600.0 / self.dt + 1e-9).floor() as usize
    }

    /// Adaptive controller parameters with the band override applied.
    pub fn adaptive_params(&self) -> AdaptiveDroopConfig {
        let mut a = self.adaptive.clone();
        if let Some([lo, hi]) = self.band {
            a.v_min = lo;
            a.v_max = hi;
        }
        a
    }

    pub fn fixed_droop_params(&self) -> FixedDroopConfig {
        let mut f = self.fixed_droop.clone();
        if let Some([lo, hi]) = self.band {
            f.v_min = lo;
            f.v_max = hi;
        }
        f
    }

    pub fn objective(&self) -> ObjectiveMode {
        self.adaptive.objective
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.hours > 0.0 && self.hours.is_finite()) {
            return bad(format!("hours must be positive, got {}", self.hours));
        }
        if self.steps() == 0 {
            return bad("horizon shorter than one step".into());
        }
        if let Some(v) = self.substation_pu {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("substation voltage must be positive, got {v}"));
            }
        }
        if let Some([lo, hi]) = self.band {
            if !(lo < hi) {
                return bad(format!("band must satisfy VMIN < VMAX, got {lo}:{hi}"));
            }
        }
        if self.regulator_interval == 0 || self.oracle_interval == 0 {
            return bad("regulator and oracle intervals must be at least one step".into());
        }
        if self.profiles.loads.is_empty() || self.profiles.pvs.is_empty() {
            return bad("profile assignment lists must not be empty".into());
        }
        if !(self.price_per_kwh >= 0.0) {
            return bad(format!("price must be non-negative, got {}", self.price_per_kwh));
        }
        if !(self.profile_dt > 0.0) {
            return bad(format!("profile_dt must be positive, got {}", self.profile_dt));
        }
        // dt must land on the profile grid after interpolation
        let ratio = self.profile_dt / self.dt;
        let inverse = self.dt / self.profile_dt;
        if (ratio - ratio.round()).abs() > 1e-9 && (inverse - inverse.round()).abs() > 1e-9 {
            return bad(format!("dt {} s and profile spacing {} s are not commensurate", self.dt, self.profile_dt));
        }
        Ok(())
    }

    /// Loads the feeder and applies the substation override.
    pub fn load_model(&self) -> Result<FeederModel, ScenarioError> {
        let path = Path::new(&self.feeder);
        let model = if path.exists() {
            load_feeder(path)?
        } else if let Some(m) = bundled::by_name(&self.feeder) {
            m
        } else {
            return Err(ScenarioError::Config(format!(
                "feeder '{}' is neither a file nor a bundled feeder (4bus, 13bus)",
                self.feeder
            )));
        };
        Ok(match self.substation_pu {
            Some(v) => model.with_source_voltage(v),
            None => model,
        })
    }

    pub fn resolve_profile(&self, name: &str) -> Result<TimeSeriesProfile, ScenarioError> {
        if let Some(dir) = &self.profiles_dir {
            let path = dir.join(format!("{name}.csv"));
            if path.exists() {
                return TimeSeriesProfile::from_csv(&path, name, self.profile_dt);
            }
        }
        profiles::bundled(name, self.seed).ok_or_else(|| {
            ScenarioError::Profile(format!(
                "profile '{name}' not found{}",
                match &self.profiles_dir {
                    Some(d) => format!(" in {} or the bundled set", d.display()),
                    None => " in the bundled set".into(),
                }
            ))
        })
    }

    /// Profiles for every load and inverter, resampled to `dt`.
    pub fn resolve_profiles(
        &self,
        model: &FeederModel,
    ) -> Result<(Vec<TimeSeriesProfile>, Vec<TimeSeriesProfile>), ScenarioError> {
        let horizon = self.steps() as f64 * self.dt;
        let pick = |names: &[String], n: usize| -> Result<Vec<TimeSeriesProfile>, ScenarioError> {
            (0..n)
                .map(|i| {
                    let p = self.resolve_profile(&names[i % names.len()])?;
                    let p = if (p.dt - self.dt).abs() > 1e-12 { p.resample(self.dt)? } else { p };
                    if p.span() + 1e-9 < horizon {
                        return Err(ScenarioError::Profile(format!(
                            "{} covers {} s, horizon needs {} s",
                            p.name,
                            p.span(),
                            horizon
                        )));
                    }
                    Ok(p)
                })
                .collect()
        };
        Ok((pick(&self.profiles.loads, model.loads.len())?, pick(&self.profiles.pvs, model.pvs.len())?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
            let j = serde_json::to_string(&k).unwrap();
            assert_eq!(j, format!("\"{}\"", k.as_str()));
        }
        assert!("droop".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = ScenarioConfig::from_json(r#"{"feeder": "13bus", "hours": 2, "band": [0.88, 1.12]}"#).unwrap();
        assert_eq!(c.dt, 30.0);
        assert_eq!(c.steps(), 240);
        assert_eq!(c.adaptive_params().v_min, 0.88);
        assert_eq!(c.fixed_droop_params().v_max, 1.12);
        assert!(ScenarioConfig::from_json(r#"{"hourz": 2}"#).is_err());
    }

    #[test]
    fn incommensurate_dt_is_rejected() {
        let c = ScenarioConfig { dt: 7.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ScenarioConfig { dt: 10.0, ..Default::default() };
        assert!(c.validate().is_ok());
    }
}
