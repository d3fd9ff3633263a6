//! Scenario configuration: a TOML document with unit-suffixed keys, resolved
//! into the model objects used by propagation, synthesis and Monte Carlo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atmosphere::{AtmosphereModel, DensityProfile};
use crate::dynamics::{BankProfile, FullState, PlanetParams, VehicleParams};
use crate::error::{Error, Result};
use crate::flight::IntegrationConfig;
use crate::guidance::{BankLimitSchedule, Deadband, DeadbandIndex, LateralConfig};
use crate::table::Table1D;
use crate::targeting::TargetSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub planet: PlanetSection,
    pub atmosphere: AtmosphereSection,
    pub vehicle: VehicleSection,
    pub initial_state: InitialStateSection,
    pub dispersions: DispersionSection,
    pub target: TargetSection,
    pub guidance: GuidanceSection,
    pub integration: IntegrationSection,
    pub trigger: TriggerSection,
    pub synthesis: SynthesisSection,
    pub montecarlo: MonteCarloSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanetSection {
    pub mu_m3ps2: f64,
    pub rotation_rate_radps: f64,
    pub surface_radius_m: f64,
    pub atmosphere_altitude_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtmosphereSection {
    pub surface_density_kgpm3: f64,
    /// CSV with sink_distance_m, scale_height_m, variance; relative to the config file.
    pub profile_csv: PathBuf,
    /// Initial variance of the relative density variation; defaults to the
    /// profile variance at the atmosphere edge.
    #[serde(default)]
    pub initial_variance: Option<f64>,
    pub variation_step_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    pub mass_kg: f64,
    pub reference_area_m2: f64,
    pub lift_to_drag: f64,
    pub ballistic_coefficient_kgpm2: f64,
    pub trim_alpha_deg: f64,
    pub lift_slope_per_deg: f64,
    pub drag_slope_per_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSection {
    pub longitude_deg: f64,
    pub latitude_deg: f64,
    pub velocity_mps: f64,
    pub flight_path_deg: f64,
    pub heading_deg: f64,
}

/// Three-sigma entry dispersions and the trim angle-of-attack interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    pub velocity_3sigma_mps: f64,
    pub flight_path_3sigma_deg: f64,
    pub heading_3sigma_deg: f64,
    pub downrange_3sigma_m: f64,
    pub crossrange_3sigma_m: f64,
    pub trim_alpha_min_deg: f64,
    pub trim_alpha_max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub longitude_deg: f64,
    pub latitude_deg: f64,
    #[serde(default)]
    pub rotation_angle_deg: f64,
    /// Radius for angle-to-distance conversion; defaults to the surface radius.
    #[serde(default)]
    pub reference_radius_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSection {
    /// CSV with velocity_mps, cos_bank; relative to the config file.
    pub bank_profile_csv: PathBuf,
    pub command_period_s: f64,
    pub bank_rate_limit_degps: f64,
    pub correction_limit: f64,
    pub heading_alignment_speed_mps: f64,
    pub heading_gain: f64,
    pub heading_limit_band_low_mps: f64,
    pub heading_limit_band_high_mps: f64,
    pub heading_limit_inner_deg: f64,
    pub heading_limit_outer_deg: f64,
    pub deadband: DeadbandSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadbandSection {
    pub index: DeadbandIndex,
    /// Breakpoints in s or m/s according to `index`.
    pub breakpoints: Vec<f64>,
    pub half_width_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub step_s: f64,
    pub max_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    /// Speed ending the nominal flight and the velocity-triggered flights.
    pub velocity_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub partition_step_s: f64,
    pub range_weight_per_m: f64,
    pub control_weight: f64,
    pub altitude_limit_m: f64,
    pub flight_path_limit_deg: f64,
    pub state_violation_probability: f64,
    pub control_violation_probability: f64,
    pub control_segments: usize,
    pub overcontrol_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trials: usize,
    pub seed: u64,
}

/// One-sigma entry dispersions in model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispersions {
    pub velocity: f64,
    pub flight_path: f64,
    pub heading: f64,
    pub downrange: f64,
    pub crossrange: f64,
    pub trim_alpha_min_deg: f64,
    pub trim_alpha_max_deg: f64,
}

impl Dispersions {
    pub fn scaled(&self, factor: f64) -> Self {
        let mid = 0.5 * (self.trim_alpha_min_deg + self.trim_alpha_max_deg);
        let half = 0.5 * (self.trim_alpha_max_deg - self.trim_alpha_min_deg) * factor;
        Self {
            velocity: self.velocity * factor,
            flight_path: self.flight_path * factor,
            heading: self.heading * factor,
            downrange: self.downrange * factor,
            crossrange: self.crossrange * factor,
            trim_alpha_min_deg: mid - half,
            trim_alpha_max_deg: mid + half,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisSettings {
    pub partition_step: f64,
    pub range_weight: f64,
    pub control_weight: f64,
    pub altitude_limit: f64,
    pub flight_path_limit: f64,
    pub state_violation_probability: f64,
    pub control_violation_probability: f64,
    pub control_segments: usize,
    pub overcontrol_gain: f64,
}

/// Fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub planet: PlanetParams,
    pub vehicle: VehicleParams,
    pub atmosphere: AtmosphereModel,
    pub initial: FullState,
    pub dispersions: Dispersions,
    pub target: TargetSpec,
    pub lateral: LateralConfig,
    pub integration: IntegrationConfig,
    pub bank_profile: BankProfile,
    pub trigger_velocity: f64,
    pub synthesis: SynthesisSettings,
    pub trials: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves the configuration; relative file paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        let p = &self.planet;
        let planet = PlanetParams {
            mu: p.mu_m3ps2,
            omega: p.rotation_rate_radps,
            r_p: p.surface_radius_m,
            r_atm: p.surface_radius_m + p.atmosphere_altitude_m,
        };
        planet.validate().map_err(cfg_err)?;

        let a = &self.atmosphere;
        let profile_path = base_dir.join(&a.profile_csv);
        let profile = DensityProfile::from_csv(&profile_path)?;
        let atmosphere = AtmosphereModel::new(
            planet.r_p,
            planet.r_atm,
            a.surface_density_kgpm3,
            profile,
            a.initial_variance,
        )
        .map_err(cfg_err)?;
        if !(a.variation_step_m > 0.0) {
            return Err(Error::Config("atmosphere.variation_step_m must be positive".into()));
        }

        let v = &self.vehicle;
        let vehicle = VehicleParams::from_trim_performance(
            v.mass_kg,
            v.reference_area_m2,
            v.lift_to_drag,
            v.ballistic_coefficient_kgpm2,
            v.trim_alpha_deg,
            v.lift_slope_per_deg,
            v.drag_slope_per_deg,
        )
        .map_err(cfg_err)?;

        let s = &self.initial_state;
        let initial = FullState {
            r: planet.r_atm,
            theta: s.longitude_deg.to_radians(),
            phi: s.latitude_deg.to_radians(),
            v: s.velocity_mps,
            gamma: s.flight_path_deg.to_radians(),
            psi: s.heading_deg.to_radians(),
        };
        if !(initial.v > 0.0 && initial.gamma.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(
                "initial_state needs positive speed and |flight path| < 90 deg".into(),
            ));
        }

        let d = &self.dispersions;
        let dispersions = Dispersions {
            velocity: d.velocity_3sigma_mps / 3.0,
            flight_path: d.flight_path_3sigma_deg.to_radians() / 3.0,
            heading: d.heading_3sigma_deg.to_radians() / 3.0,
            downrange: d.downrange_3sigma_m / 3.0,
            crossrange: d.crossrange_3sigma_m / 3.0,
            trim_alpha_min_deg: d.trim_alpha_min_deg,
            trim_alpha_max_deg: d.trim_alpha_max_deg,
        };
        let three_sigmas = [
            d.velocity_3sigma_mps,
            d.flight_path_3sigma_deg,
            d.heading_3sigma_deg,
            d.downrange_3sigma_m,
            d.crossrange_3sigma_m,
        ];
        if three_sigmas.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("dispersions must be non-negative".into()));
        }
        if d.trim_alpha_max_deg < d.trim_alpha_min_deg {
            return Err(Error::Config(
                "dispersions.trim_alpha_max_deg is below trim_alpha_min_deg".into(),
            ));
        }

        let t = &self.target;
        let target = TargetSpec {
            theta: t.longitude_deg.to_radians(),
            phi: t.latitude_deg.to_radians(),
            eta0: t.rotation_angle_deg.to_radians(),
            reference_radius: t.reference_radius_m.unwrap_or(planet.r_p),
        };
        target.validate().map_err(cfg_err)?;

        let g = &self.guidance;
        let bank_profile = BankProfile::from_csv(base_dir.join(&g.bank_profile_csv))?;
        let db = &g.deadband;
        if db.breakpoints.len() != db.half_width_m.len() {
            return Err(Error::Config(
                "guidance.deadband breakpoints and half_width_m differ in length".into(),
            ));
        }
        let widths = db
            .half_width_m
            .iter()
            .map(|w| w / target.reference_radius)
            .collect();
        let (xs, ys) = match db.index {
            // velocity tables may be written in descending order
            DeadbandIndex::Velocity if db.breakpoints.first() > db.breakpoints.last() => {
                let mut xs = db.breakpoints.clone();
                let mut ys: Vec<f64> = widths;
                xs.reverse();
                ys.reverse();
                (xs, ys)
            }
            _ => (db.breakpoints.clone(), widths),
        };
        let deadband = Deadband::new(db.index, Table1D::new(xs, ys).map_err(cfg_err)?)
            .map_err(|e| Error::Config(format!("guidance.deadband: {e}")))?;
        let lateral = LateralConfig {
            deadband,
            heading_gain: g.heading_gain,
            heading_entry_speed: g.heading_alignment_speed_mps,
            heading_limits: BankLimitSchedule {
                band_low: g.heading_limit_band_low_mps,
                band_high: g.heading_limit_band_high_mps,
                inner_limit: g.heading_limit_inner_deg.to_radians(),
                outer_limit: g.heading_limit_outer_deg.to_radians(),
            },
            bank_rate_limit: g.bank_rate_limit_degps.to_radians(),
            command_period: g.command_period_s,
            correction_limit: g.correction_limit,
        };
        lateral.validate().map_err(cfg_err)?;

        let integration = IntegrationConfig {
            step: self.integration.step_s,
            max_time: self.integration.max_time_s,
            variation_step: a.variation_step_m,
        };
        integration.validate(lateral.command_period).map_err(cfg_err)?;

        if !(self.trigger.velocity_mps > 0.0 && self.trigger.velocity_mps < initial.v) {
            return Err(Error::Config(
                "trigger.velocity_mps must lie between 0 and the entry speed".into(),
            ));
        }

        let y = &self.synthesis;
        let synthesis = SynthesisSettings {
            partition_step: y.partition_step_s,
            range_weight: y.range_weight_per_m,
            control_weight: y.control_weight,
            altitude_limit: y.altitude_limit_m,
            flight_path_limit: y.flight_path_limit_deg.to_radians(),
            state_violation_probability: y.state_violation_probability,
            control_violation_probability: y.control_violation_probability,
            control_segments: y.control_segments,
            overcontrol_gain: y.overcontrol_gain,
        };
        if !(synthesis.partition_step > 0.0 && synthesis.control_weight > 0.0 && synthesis.control_segments >= 1) {
            return Err(Error::Config(
                "synthesis needs positive partition step, control weight and segment count".into(),
            ));
        }
        if self.montecarlo.trials == 0 {
            return Err(Error::Config("montecarlo.trials must be at least 1".into()));
        }

        Ok(Scenario {
            planet,
            vehicle,
            atmosphere,
            initial,
            dispersions,
            target,
            lateral,
            integration,
            bank_profile,
            trigger_velocity: self.trigger.velocity_mps,
            synthesis,
            trials: self.montecarlo.trials,
            seed: self.montecarlo.seed,
        })
    }
}

impl Scenario {
    /// Reads and resolves a scenario file, returning it with the raw bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vec<u8>)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config = ScenarioConfig::from_toml_str(text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Ok((config.resolve(base)?, bytes))
    }

    /// The bundled Mars entry scenario.
    pub fn default_path() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/msl.toml")
    }
}
