//! Declarative scenario description, loaded from TOML.
//!
//! Every table and key is optional and falls back to the defaults below;
//! unknown keys are rejected.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::{ControlGains, FaultTolerantGains, GeometricController, MetricKind};
use crate::detection::DetectorConfig;
use crate::drag::{ControllabilityBand, DragModel};
use crate::dynamics::QuadrotorParams;
use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, TrajectoryKind, TrajectorySpec};

const DEFAULT_HOVER_TIME: f64 = 10.0;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::ConfigInvalid(msg.into()))
}

/// Airframe, rotor and motor parameters. Drag lives in [`DragConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatformConfig {
    pub mass: f64,
    pub gravity: f64,
    /// Principal moments of inertia, kg·m².
    pub inertia: [f64; 3],
    pub arm_length: f64,
    /// Total thrust at max speed over weight; fixes the thrust coefficient.
    pub thrust_to_weight: f64,
    /// Reaction torque over thrust, m.
    pub torque_ratio: f64,
    pub spin: [f64; 4],
    /// RPM
    pub max_speed: f64,
    /// RPM
    pub idle_speed: f64,
    pub motor_time_constant: f64,
    pub air_density: f64,
    pub com_offset: [f64; 3],
}

impl Default for PlatformConfig {
    fn default() -> Self {
        let p = QuadrotorParams::<f64>::default();
        Self {
            mass: p.mass,
            gravity: p.gravity,
            inertia: [p.inertia[(0, 0)], p.inertia[(1, 1)], p.inertia[(2, 2)]],
            arm_length: p.arm_length,
            thrust_to_weight: 2.5,
            torque_ratio: p.torque_ratio(),
            spin: p.spin,
            max_speed: p.max_speed,
            idle_speed: p.idle_speed,
            motor_time_constant: p.motor_time_constant,
            air_density: p.air_density,
            com_offset: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub attitude: [f64; 3],
    pub rate: [f64; 3],
    pub max_tilt_deg: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = ControlGains::<f64>::default();
        let c = GeometricController::<f64>::default();
        let a = |v: Vector3<f64>| [v.x, v.y, v.z];
        Self {
            position: a(g.position),
            velocity: a(g.velocity),
            attitude: a(g.attitude),
            rate: a(g.rate),
            max_tilt_deg: c.max_tilt.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub kind: TrajectoryKind,
    pub scale: f64,
    pub peak_speed: f64,
    pub center: [f64; 3],
    pub laps: u32,
    pub ramp: f64,
    pub duration: Option<f64>,
    /// Scenario time at which the trajectory begins; the start point is
    /// held before that.
    pub start_time: f64,
    pub arena: [f64; 3],
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        let s = TrajectorySpec::<f64>::default();
        Self {
            kind: TrajectoryKind::Hover,
            scale: s.scale,
            peak_speed: s.peak_speed,
            center: [s.center.x, s.center.y, s.center.z],
            laps: s.laps,
            ramp: s.ramp,
            duration: None,
            start_time: 0.0,
            arena: [s.arena.x, s.arena.y, s.arena.z],
        }
    }
}

/// One scheduled rotor fault.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// s
    pub time: f64,
    /// 1-based rotor index.
    pub rotor: usize,
    /// Speed reduction, percent.
    pub damage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DragConfig {
    pub base_area: f64,
    pub base_k_z: f64,
    pub plate_k_z: f64,
    /// Added plate area, m².
    pub added_area: f64,
    pub band: ControllabilityBand,
}

impl Default for DragConfig {
    fn default() -> Self {
        let m = DragModel::default();
        Self {
            base_area: m.base_area,
            base_k_z: m.base_k_z,
            plate_k_z: m.plate_k_z,
            added_area: 0.0,
            band: ControllabilityBand::default(),
        }
    }
}

impl DragConfig {
    pub fn model(&self) -> DragModel {
        DragModel { base_area: self.base_area, base_k_z: self.base_k_z, plate_k_z: self.plate_k_z }
    }
}

/// Additive Gaussian measurement noise, standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// rad/s
    pub gyro_std: f64,
    /// m
    pub position_std: f64,
    /// m/s
    pub velocity_std: f64,
}

impl NoiseConfig {
    pub fn is_enabled(&self) -> bool {
        self.gyro_std > 0.0 || self.position_std > 0.0 || self.velocity_std > 0.0
    }
}

/// Rotor layout and attitude gains used once the controller has switched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultTolerantConfig {
    /// Thrust cap of the rotor opposite a single failure, fraction of max.
    pub opposite_cap: f64,
    /// Keep allocating to a failed rotor at its estimated effectiveness.
    pub use_damaged_rotor: bool,
    pub attitude_gain: f64,
    pub rate_gain: f64,
    pub tilt_rate_gain: f64,
    pub precession_gain: f64,
    pub precession_gain_pair: f64,
}

impl Default for FaultTolerantConfig {
    fn default() -> Self {
        let g = FaultTolerantGains::<f64>::default();
        Self {
            opposite_cap: 0.5,
            use_damaged_rotor: true,
            attitude_gain: g.attitude,
            rate_gain: g.rate,
            tilt_rate_gain: g.tilt_rate,
            precession_gain: g.precession,
            precession_gain_pair: g.precession_pair,
        }
    }
}

impl FaultTolerantConfig {
    pub fn gains(&self) -> FaultTolerantGains<f64> {
        FaultTolerantGains {
            attitude: self.attitude_gain,
            rate: self.rate_gain,
            tilt_rate: self.tilt_rate_gain,
            precession: self.precession_gain,
            precession_pair: self.precession_gain_pair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrashConfig {
    pub tilt_limit_deg: f64,
    /// Lowest admissible altitude, m.
    pub floor: f64,
}

impl Default for CrashConfig {
    fn default() -> Self {
        Self { tilt_limit_deg: 85.0, floor: 0.0 }
    }
}

/// A complete experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Total simulated time, s. Defaults to the end of the trajectory, or
    /// 10 s of hover.
    pub duration: Option<f64>,
    pub metric: MetricKind,
    pub platform: PlatformConfig,
    pub gains: GainsConfig,
    pub trajectory: TrajectoryConfig,
    pub detector: DetectorConfig,
    pub faults: Vec<FaultConfig>,
    pub drag: DragConfig,
    pub noise: NoiseConfig,
    pub fault_tolerant: FaultTolerantConfig,
    pub crash: CrashConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            duration: None,
            metric: MetricKind::S2,
            platform: PlatformConfig::default(),
            gains: GainsConfig::default(),
            trajectory: TrajectoryConfig::default(),
            detector: DetectorConfig::default(),
            faults: Vec::new(),
            drag: DragConfig::default(),
            noise: NoiseConfig::default(),
            fault_tolerant: FaultTolerantConfig::default(),
            crash: CrashConfig::default(),
        }
    }
}

/// Everything the simulator needs, derived from a validated config.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub params: QuadrotorParams<f64>,
    pub controller: GeometricController<f64>,
    pub trajectory: Trajectory<f64>,
    pub duration: f64,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn params(&self) -> Result<QuadrotorParams<f64>> {
        let pc = &self.platform;
        let (area, k_z) = self.drag.model().effective(self.drag.added_area);
        let mut p = QuadrotorParams {
            mass: pc.mass,
            gravity: pc.gravity,
            inertia: Matrix3::from_diagonal(&Vector3::from(pc.inertia)),
            arm_length: pc.arm_length,
            spin: pc.spin,
            max_speed: pc.max_speed,
            idle_speed: pc.idle_speed,
            motor_time_constant: pc.motor_time_constant,
            air_density: pc.air_density,
            drag_area: area,
            yaw_drag_coeff: k_z,
            com_offset: Vector3::from(pc.com_offset),
            ..QuadrotorParams::default()
        };
        if !(pc.thrust_to_weight > 1.0 && pc.torque_ratio > 0.0) {
            return invalid("platform: thrust_to_weight must exceed 1 and torque_ratio must be positive");
        }
        p.torque_coeff = p.thrust_coeff * pc.torque_ratio;
        let p = p.with_thrust_to_weight(pc.thrust_to_weight);
        p.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(p)
    }

    fn trajectory_spec(&self) -> TrajectorySpec<f64> {
        let t = &self.trajectory;
        let mut duration = t.duration;
        if t.kind == TrajectoryKind::Hover && duration.is_none() {
            duration = Some((self.duration.unwrap_or(DEFAULT_HOVER_TIME) - t.start_time).max(0.0));
        }
        TrajectorySpec {
            kind: t.kind,
            scale: t.scale,
            peak_speed: t.peak_speed,
            center: Vector3::from(t.center),
            laps: t.laps,
            ramp: t.ramp,
            duration,
            arena: Vector3::from(t.arena),
        }
    }

    /// Validates the whole config and derives the runtime objects.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let params = self.params()?;
        let g = &self.gains;
        let gains = ControlGains {
            position: Vector3::from(g.position),
            velocity: Vector3::from(g.velocity),
            attitude: Vector3::from(g.attitude),
            rate: Vector3::from(g.rate),
        };
        gains.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        if !(g.max_tilt_deg > 0.0 && g.max_tilt_deg < 90.0) {
            return invalid("gains: max_tilt_deg must lie in (0, 90)");
        }
        let fault_tolerant = self.fault_tolerant.gains();
        fault_tolerant.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        let controller =
            GeometricController { gains, fault_tolerant, metric: self.metric, max_tilt: g.max_tilt_deg.to_radians() };
        if !(self.trajectory.start_time >= 0.0) {
            return invalid("trajectory: start_time must be non-negative");
        }
        let trajectory = Trajectory::new(self.trajectory_spec())?;
        let duration = self.duration.unwrap_or(self.trajectory.start_time + trajectory.duration());
        if !(duration > 0.0 && duration.is_finite()) {
            return invalid("duration must be positive");
        }
        self.detector.validate()?;
        self.drag.model().validate()?;
        self.drag.band.validate()?;
        if !(self.drag.added_area >= 0.0) {
            return invalid("drag: added_area must be non-negative");
        }
        for f in &self.faults {
            if !(1..=4).contains(&f.rotor) {
                return invalid(format!("fault: rotor index {} outside 1..4", f.rotor));
            }
            if !(f.time >= 0.0 && f.time <= duration) {
                return invalid(format!("fault: time {} s outside [0, {duration}] s", f.time));
            }
            if !(0.0..=100.0).contains(&f.damage) {
                return invalid(format!("fault: damage {}% outside [0, 100]", f.damage));
            }
        }
        let n = &self.noise;
        if !(n.gyro_std >= 0.0 && n.position_std >= 0.0 && n.velocity_std >= 0.0) {
            return invalid("noise: standard deviations must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.fault_tolerant.opposite_cap) {
            return invalid("fault_tolerant: opposite_cap must lie in [0, 1]");
        }
        if !(self.crash.tilt_limit_deg > 0.0 && self.crash.tilt_limit_deg <= 180.0) {
            return invalid("crash: tilt_limit_deg must lie in (0, 180]");
        }
        Ok(ResolvedScenario { params, controller, trajectory, duration })
    }
}
