//! Time-series multiplier profiles for loads and PV output.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// Resolution of the bundled profiles (s).
pub const BUNDLED_DT: f64 = 30.0;
const DAY_S: f64 = 86_400.0;

/// Piecewise-linear multiplier series sampled every `dt` seconds from t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesProfile {
    pub name: String,
    pub dt: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileRow {
    index: usize,
    multiplier: f64,
}

impl TimeSeriesProfile {
    pub fn new(name: impl Into<String>, dt: f64, samples: Vec<f64>) -> Result<Self, ScenarioError> {
        let name = name.into();
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ScenarioError::Profile(format!("{name}: dt must be positive, got {dt}")));
        }
        if samples.is_empty() {
            return Err(ScenarioError::Profile(format!("{name}: no samples")));
        }
        if let Some(k) = samples.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ScenarioError::Profile(format!(
                "{name}: sample {k} is {} (multipliers must be finite and non-negative)",
                samples[k]
            )));
        }
        Ok(TimeSeriesProfile { name, dt, samples })
    }

    /// Reads a `index,multiplier` CSV. Rows must be sorted with consecutive indices from 0.
    pub fn from_csv(path: impl AsRef<Path>, name: impl Into<String>, dt: f64) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let name = name.into();
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| ScenarioError::Profile(format!("{}: {e}", path.display())))?;
        let mut samples = Vec::new();
        for (k, row) in reader.deserialize::<ProfileRow>().enumerate() {
            let row = row.map_err(|e| ScenarioError::Profile(format!("{}: {e}", path.display())))?;
            if row.index != k {
                return Err(ScenarioError::Profile(format!(
                    "{}: expected index {k}, found {}",
                    path.display(),
                    row.index
                )));
            }
            samples.push(row.multiplier);
        }
        Self::new(name, dt, samples)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| ScenarioError::Io(e.to_string()))?;
        w.write_record(["index", "multiplier"]).map_err(|e| ScenarioError::Io(e.to_string()))?;
        for (k, m) in self.samples.iter().enumerate() {
            w.write_record([k.to_string(), super::output::format_g9(*m)])
                .map_err(|e| ScenarioError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| ScenarioError::Io(e.to_string()))
    }

    /// Time of the last sample (s).
    pub fn span(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// Linear interpolation; `t` must lie within the sampled span.
    pub fn value_at(&self, t: f64) -> Result<f64, ScenarioError> {
        let pos = t / self.dt;
        if !(pos >= -1e-9) || pos > (self.samples.len() - 1) as f64 + 1e-9 {
            return Err(ScenarioError::Profile(format!(
                "{}: time {t} s outside the profile span [0, {}] s",
                self.name,
                self.span()
            )));
        }
        let pos = pos.max(0.0);
        let k = (pos.floor() as usize).min(self.samples.len() - 1);
        let frac = pos - k as f64;
        if k + 1 >= self.samples.len() || frac <= 0.0 {
            return Ok(self.samples[k]);
        }
        Ok(self.samples[k] + frac * (self.samples[k + 1] - self.samples[k]))
    }

    /// Resamples to `dt` by linear interpolation over the existing span.
    pub fn resample(&self, dt: f64) -> Result<Self, ScenarioError> {
        let n = (self.span() / dt + 1e-9).floor() as usize + 1;
        let samples = (0..n).map(|k| self.value_at(k as f64 * dt)).collect::<Result<Vec<_>, _>>()?;
        Self::new(self.name.clone(), dt, samples)
    }
}

/// Builds a 30 s profile over one day (plus the closing sample at 24 h) from
/// hourly anchors at 0, 1, ..., 24 h.
fn from_hourly(name: &str, hourly: &[f64; 25]) -> TimeSeriesProfile {
    let coarse = TimeSeriesProfile::new(name, 3600.0, hourly.to_vec()).expect("valid anchors");
    coarse.resample(BUNDLED_DT).expect("anchors span one day")
}

fn day_samples() -> usize {
    (DAY_S / BUNDLED_DT) as usize + 1
}

/// Clear-sky irradiance envelope: a raised-cosine bump between 6 h and 18 h.
fn clear_sky(t: f64) -> f64 {
    let (rise, set) = (6.0 * 3600.0, 18.0 * 3600.0);
    if t <= rise || t >= set {
        return 0.0;
    }
    let x = (t - rise) / (set - rise);
    (std::f64::consts::PI * x).sin().powf(1.3)
}

/// Smooth solar profile with two short cloud dips at 10 h and 12 h.
pub fn solar_smooth() -> TimeSeriesProfile {
    let dips = [(10.0 * 3600.0, 900.0, 0.55), (12.0 * 3600.0, 600.0, 0.45)];
    let samples = (0..day_samples())
        .map(|k| {
            let t = k as f64 * BUNDLED_DT;
            let mut m = clear_sky(t);
            for (center, width, depth) in dips {
                let d = (t - center) / width;
                if d.abs() < 1.0 {
                    m *= 1.0 - depth * 0.5 * (1.0 + (std::f64::consts::PI * d).cos());
                }
            }
            m
        })
        .collect();
    TimeSeriesProfile::new("solar_smooth", BUNDLED_DT, samples).expect("valid profile")
}

/// High-variance solar profile: the clear-sky envelope times a zero-mean,
/// seeded multiplicative jitter of ±30% redrawn every 5 minutes and linearly
/// interpolated in between. Multipliers are clipped to [0, 1], so daily
/// energy stays close to the clear-sky envelope.
pub fn solar_highvar(seed: u64) -> TimeSeriesProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knot_dt = 300.0;
    let knots: Vec<f64> = (0..=(DAY_S / knot_dt) as usize).map(|_| 1.0 + 0.3 * rng.gen_range(-1.0..=1.0)).collect();
    let jitter = TimeSeriesProfile::new("jitter", knot_dt, knots).expect("valid jitter");
    let samples = (0..day_samples())
        .map(|k| {
            let t = k as f64 * BUNDLED_DT;
            (clear_sky(t) * jitter.value_at(t).expect("within span")).clamp(0.0, 1.0)
        })
        .collect();
    TimeSeriesProfile::new("solar_highvar", BUNDLED_DT, samples).expect("valid profile")
}

/// Residential-style load shape: high overnight start, morning trough,
/// evening peak, flat over the last hour.
pub fn load1() -> TimeSeriesProfile {
    from_hourly(
        "load1",
        &[
            0.92, 0.86, 0.78, 0.72, 0.68, 0.68, 0.72, 0.78, 0.82, 0.80, 0.76, 0.74, 0.72, 0.72, 0.74, 0.78, 0.84, 0.92,
            0.98, 1.00, 0.98, 0.95, 0.90, 0.85, 0.85,
        ],
    )
}

/// Commercial-style load shape with a broader daytime plateau.
pub fn load2() -> TimeSeriesProfile {
    from_hourly(
        "load2",
        &[
            0.90, 0.84, 0.78, 0.74, 0.72, 0.72, 0.76, 0.82, 0.88, 0.90, 0.90, 0.88, 0.86, 0.86, 0.88, 0.90, 0.92, 0.96,
            1.00, 1.00, 0.97, 0.94, 0.90, 0.86, 0.86,
        ],
    )
}

/// Flat profile of constant value covering one day.
pub fn constant(name: &str, value: f64) -> TimeSeriesProfile {
    TimeSeriesProfile::new(name, DAY_S, vec![value, value]).expect("valid profile")
}

/// Names accepted by [`bundled`].
pub const BUNDLED_NAMES: [&str; 6] = ["solar_smooth", "solar_highvar", "load1", "load2", "zero", "one"];

/// Looks up a bundled profile; `seed` only affects `solar_highvar`.
pub fn bundled(name: &str, seed: u64) -> Option<TimeSeriesProfile> {
    Some(match name {
        "solar_smooth" => solar_smooth(),
        "solar_highvar" => solar_highvar(seed),
        "load1" => load1(),
        "load2" => load2(),
        "zero" => constant("zero", 0.0),
        "one" => constant("one", 1.0),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_linear() {
        let p = TimeSeriesProfile::new("p", 60.0, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.value_at(0.0).unwrap(), 0.0);
        assert_eq!(p.value_at(30.0).unwrap(), 0.5);
        assert_eq!(p.value_at(90.0).unwrap(), 2.0);
        assert_eq!(p.value_at(120.0).unwrap(), 3.0);
        assert!(p.value_at(121.0).is_err());
        let r = p.resample(30.0).unwrap();
        assert_eq!(r.samples, vec![0.0, 0.5, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn negative_samples_are_rejected() {
        assert!(TimeSeriesProfile::new("p", 30.0, vec![0.5, -0.1]).is_err());
    }

    #[test]
    fn bundled_profiles_cover_a_day() {
        for name in BUNDLED_NAMES {
            let p = bundled(name, 7).unwrap();
            assert!(p.span() >= DAY_S - 1e-9, "{name}");
            assert!(p.samples.iter().all(|s| (0.0..=1.0).contains(s)), "{name}");
        }
    }

    #[test]
    fn smooth_solar_dips_at_ten_and_twelve() {
        let p = solar_smooth();
        let at = |h: f64| p.value_at(h * 3600.0).unwrap();
        assert!(at(10.0) < 0.6 * at(10.5));
        assert!(at(12.0) < 0.6 * at(12.5));
        assert_eq!(at(3.0), 0.0);
        assert_eq!(at(21.0), 0.0);
    }

    #[test]
    fn highvar_is_seeded() {
        assert_eq!(solar_highvar(3), solar_highvar(3));
        assert_ne!(solar_highvar(3), solar_highvar(4));
        let hv = solar_highvar(3);
        assert!(hv.samples.iter().all(|m| (0.0..=1.0).contains(m)));
        let energy = |s: &[f64]| s.iter().sum::<f64>();
        let clear: Vec<f64> = (0..day_samples()).map(|k| clear_sky(k as f64 * BUNDLED_DT)).collect();
        let ratio = energy(&hv.samples) / energy(&clear);
        assert!((0.85..1.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn loads_are_flat_in_the_last_hour() {
        for p in [load1(), load2()] {
            let a = p.value_at(23.0 * 3600.0).unwrap();
            let b = p.value_at(24.0 * 3600.0).unwrap();
            assert_eq!(a, b);
        }
    }
}
