//! Run configuration: TOML text with one table per concern.
//!
//! ```toml
//! seed = 7
//! n_realizations = 2
//!
//! [grid]
//! nx = 64
//! ny = 64
//!
//! [time]
//! dt = 1e-3
//! n_steps = 500
//! snapshot_stride = 100
//!
//! [truncation]
//! radius = "inf"
//!
//! [initial.preset]
//! name = "bathymetry_front"
//!
//! [[noise.modes]]
//! kind = "fourier"
//! k = [1, 0]
//! amplitude = 0.1
//! ```

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::consistency::LocalErrorConfig;
use crate::error::{Result, StqgError};
use crate::model::{DriftTerms, ModelData, State};
use crate::noise::{NoiseBasis, NoiseMode};
use crate::stepper::{RunOptions, StepperConfig, ThetaMonitor, Truncation};
use crate::torus::{Field, TorusSpec};
use crate::transport::TransportConfig;

/// A real number that may also be written as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extended(pub f64);

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Extended;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or \"inf\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Extended, E> {
                Ok(Extended(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Extended, E> {
                Ok(Extended(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Extended, E> {
                Ok(Extended(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Extended, E> {
                match v {
                    "inf" | "+inf" | "infinity" => Ok(Extended(f64::INFINITY)),
                    _ => Err(E::invalid_value(serde::de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

fn two_pi() -> f64 {
    2.0 * PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "two_pi")]
    pub lx: f64,
    #[serde(default = "two_pi")]
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn infinite() -> Extended {
    Extended(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default = "infinite")]
    pub radius: Extended,
    #[serde(default)]
    pub monitor: ThetaMonitor,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            radius: infinite(),
            monitor: ThetaMonitor::Q,
        }
    }
}

/// `amplitude · cos(k·x + phase)` with `k = 2π (k₁/Lx, k₂/Ly)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: [i32; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

fn synthesize(spec: TorusSpec, terms: &[FourierTerm]) -> Field {
    let (ax, ay) = (2.0 * PI / spec.lx, 2.0 * PI / spec.ly);
    Field::from_fn(spec, |x, y| {
        terms
            .iter()
            .map(|t| t.amplitude * (ax * t.k[0] as f64 * x + ay * t.k[1] as f64 * y + t.phase).cos())
            .sum()
    })
}

/// Named initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// A zonal buoyancy front `A tanh(sin(2πy/Ly)/w)` over a meridional
    /// bathymetric ridge `H cos(2πx/Lx)`, seeded with a small wavy
    /// perturbation; the fluid starts at rest (`q₀ = f = 0`).
    BathymetryFront {
        #[serde(default = "front_amplitude")]
        amplitude: f64,
        #[serde(default = "front_width")]
        width: f64,
        #[serde(default = "front_ridge")]
        bathymetry: f64,
        #[serde(default = "front_perturbation")]
        perturbation: f64,
    },
}

fn front_amplitude() -> f64 {
    1.0
}
fn front_width() -> f64 {
    0.3
}
fn front_ridge() -> f64 {
    0.5
}
fn front_perturbation() -> f64 {
    0.05
}

impl Preset {
    pub fn bathymetry_front() -> Self {
        Preset::BathymetryFront {
            amplitude: front_amplitude(),
            width: front_width(),
            bathymetry: front_ridge(),
            perturbation: front_perturbation(),
        }
    }

    /// `(b₀, q₀, h, f)`.
    fn fields(&self, spec: TorusSpec) -> Result<[Field; 4]> {
        match *self {
            Preset::BathymetryFront {
                amplitude,
                width,
                bathymetry,
                perturbation,
            } => {
                if width.is_nan() || width <= 0.0 {
                    return Err(StqgError::Config(format!("preset width {width} must be positive")));
                }
                let (ax, ay) = (2.0 * PI / spec.lx, 2.0 * PI / spec.ly);
                let mut b = Field::from_fn(spec, |x, y| {
                    let yy = ay * y + perturbation * (3.0 * ax * x).sin();
                    amplitude * (yy.sin() / width).tanh()
                });
                b.remove_mean();
                let h = Field::from_fn(spec, |x, _| bathymetry * (ax * x).cos());
                Ok([b, Field::zeros(spec), h, Field::zeros(spec)])
            }
        }
    }
}

/// Initial state and background fields: an optional preset plus explicit
/// Fourier terms added on top of it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub b: Vec<FourierTerm>,
    #[serde(default)]
    pub q: Vec<FourierTerm>,
    #[serde(default)]
    pub h: Vec<FourierTerm>,
    #[serde(default)]
    pub f: Vec<FourierTerm>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub modes: Vec<NoiseMode>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Per-step CSV of scalar diagnostics.
    #[serde(default = "yes")]
    pub csv: bool,
    /// Binary field snapshots.
    #[serde(default = "yes")]
    pub snapshots: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { csv: true, snapshots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default = "infinite")]
    pub bkm_integral_max: Extended,
    #[serde(default = "default_sobolev_max")]
    pub sobolev_max: Extended,
    #[serde(default = "default_cfl_max")]
    pub cfl_max: f64,
}

fn default_sobolev_max() -> Extended {
    Extended(RunOptions::default().sobolev_max)
}
fn default_cfl_max() -> f64 {
    RunOptions::default().cfl_max
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            bkm_integral_max: infinite(),
            sobolev_max: default_sobolev_max(),
            cfl_max: default_cfl_max(),
        }
    }
}

fn default_out() -> String {
    "stqg_out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

fn default_paths() -> usize {
    200
}
fn default_ref_level() -> u32 {
    4
}
fn default_compat_paths() -> usize {
    10_000
}
fn default_dt_list() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3, 1.25e-3]
}

/// Settings of the `consistency` experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    #[serde(default = "default_dt_list")]
    pub dt_list: Vec<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_ref_level")]
    pub ref_level: u32,
    #[serde(default = "default_compat_paths")]
    pub compat_paths: usize,
    #[serde(default)]
    pub zero_noise: bool,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            dt_list: default_dt_list(),
            n_paths: default_paths(),
            ref_level: default_ref_level(),
            compat_paths: default_compat_paths(),
            zero_noise: false,
        }
    }
}

fn one() -> usize {
    1
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub n_realizations: usize,
    #[serde(default)]
    pub drift: DriftTerms,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub consistency: ConsistencyConfig,
}

/// Everything needed to start a trajectory.
#[derive(Debug, Clone)]
pub struct Setup {
    pub data: ModelData,
    pub initial: State,
    pub stepper: StepperConfig,
    pub options: RunOptions,
}

impl RunConfig {
    /// Parses and validates TOML text. Missing and unknown keys are reported
    /// by name.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| StqgError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| StqgError::Config(e.to_string()))
    }

    pub fn spec(&self) -> Result<TorusSpec> {
        TorusSpec::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
            .map_err(|e| StqgError::Config(format!("grid: {e}")))
    }

    pub fn truncation(&self) -> Result<Truncation> {
        let r = self.truncation.radius.0;
        if r == f64::INFINITY {
            let mut t = Truncation::none();
            t.monitor = self.truncation.monitor;
            Ok(t)
        } else {
            Truncation::new(r, self.truncation.monitor).map_err(|e| StqgError::Config(format!("truncation.radius: {e}")))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        if !(self.time.dt.is_finite() && self.time.dt > 0.0) {
            return Err(StqgError::Config(format!("time.dt = {} must be positive", self.time.dt)));
        }
        self.truncation()?;
        self.transport
            .validate()
            .map_err(|e| StqgError::Config(format!("transport: {e}")))?;
        if !self.noise.modes.is_empty() && self.seed.is_none() {
            return Err(StqgError::Config("missing field `seed` (required when noise modes are present)".into()));
        }
        if self.n_realizations == 0 {
            return Err(StqgError::Config("n_realizations must be at least 1".into()));
        }
        if self.thresholds.sobolev_max.0 <= 0.0 || self.thresholds.bkm_integral_max.0 <= 0.0 {
            return Err(StqgError::Config("thresholds must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    /// Builds model data, initial state, stepper and run options.
    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let spec = self.spec()?;
        let [mut b, mut q, mut h, mut f] = match &self.initial.preset {
            Some(p) => p.fields(spec)?,
            None => [Field::zeros(spec), Field::zeros(spec), Field::zeros(spec), Field::zeros(spec)],
        };
        b = b.add(&synthesize(spec, &self.initial.b))?;
        q = q.add(&synthesize(spec, &self.initial.q))?;
        h = h.add(&synthesize(spec, &self.initial.h))?;
        f = f.add(&synthesize(spec, &self.initial.f))?;
        let noise = NoiseBasis::new(spec, self.noise.modes.clone())?;
        let data = ModelData::new(h, f, noise)?;
        let initial = data.state(b, q, 0.0)?;
        let stepper = StepperConfig {
            dt: self.time.dt,
            truncation: self.truncation()?,
            transport: self.transport,
            drift: self.drift,
        };
        stepper.validate()?;
        let options = RunOptions {
            snapshot_stride: self.time.snapshot_stride,
            bkm_integral_max: self.thresholds.bkm_integral_max.0,
            sobolev_max: self.thresholds.sobolev_max.0,
            cfl_max: self.thresholds.cfl_max,
        };
        Ok(Setup {
            data,
            initial,
            stepper,
            options,
        })
    }

    pub fn local_error_config(&self) -> LocalErrorConfig {
        LocalErrorConfig {
            dt_list: self.consistency.dt_list.clone(),
            n_paths: self.consistency.n_paths,
            ref_level: self.consistency.ref_level,
            seed: self.seed.unwrap_or(0),
            zero_noise: self.consistency.zero_noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 3
n_realizations = 2

[grid]
nx = 16
ny = 16

[time]
dt = 0.01
n_steps = 5

[truncation]
radius = "inf"

[initial]
b = [{ k = [1, 0], amplitude = 0.5 }]
q = [{ k = [0, 1], amplitude = 0.2, phase = 0.3 }]

[[noise.modes]]
kind = "fourier"
k = [1, 1]
amplitude = 0.1
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.grid.lx, 2.0 * PI);
        assert_eq!(cfg.truncation.radius.0, f64::INFINITY);
        let s = cfg.setup().unwrap();
        assert_eq!(s.data.noise.len(), 1);
        let expect = Field::from_fn(cfg.spec().unwrap(), |x, _| 0.5 * x.cos());
        assert!(s.initial.b.sub(&expect).unwrap().sup_norm() < 1e-14);
        assert!(!s.stepper.truncation.is_active());
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = RunConfig::parse(BASIC).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_toml().unwrap());
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
    }

    #[test]
    fn missing_key_is_named() {
        let text = BASIC.replace("dt = 0.01\n", "");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(matches!(err, StqgError::Config(_)));
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BASIC.replace("n_steps = 5", "n_steps = 5\nsteps = 4");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("steps"), "{err}");
    }

    #[test]
    fn noise_requires_seed() {
        let text = BASIC.replace("seed = 3\n", "");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let quiet = text.split("[[noise.modes]]").next().unwrap();
        assert!(RunConfig::parse(quiet).is_ok());
    }

    #[test]
    fn finite_radius_and_invalid_radius() {
        let cfg = RunConfig::parse(&BASIC.replace("\"inf\"", "2.5")).unwrap();
        assert_eq!(cfg.truncation().unwrap().radius(), 2.5);
        assert!(RunConfig::parse(&BASIC.replace("\"inf\"", "-1.0")).is_err());
        assert!(RunConfig::parse(&BASIC.replace("\"inf\"", "\"big\"")).is_err());
    }

    #[test]
    fn front_preset() {
        let text = BASIC.replace("[initial]\n", "[initial]\npreset = { name = \"bathymetry_front\", amplitude = 2.0 }\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let s = cfg.setup().unwrap();
        assert!(s.data.has_bathymetry());
        assert!(s.initial.b.is_zero_mean());
        assert!(s.initial.b.sup_norm() > 1.5);
    }

    #[test]
    fn bad_grid_is_a_config_error() {
        let err = RunConfig::parse(&BASIC.replace("nx = 16", "nx = 15")).unwrap_err();
        assert!(matches!(err, StqgError::Config(_)));
    }
}
