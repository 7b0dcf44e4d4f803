//! The closed-loop simulation: 500 Hz control and detection around a
//! 1 kHz rigid-body integrator.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ResolvedScenario, ScenarioConfig};
use super::log::{EventKind, LogRecord, Outcome, SimLog};
use crate::allocation::speed_to_thrust;
use crate::control::{ActuatorSet, ControlMode};
use crate::detection::{augmented_rotor_speeds, FaultDetector};
use crate::dynamics::{
    motor_lag, rotor_wrench, step, FaultState, QuadrotorParams, RigidBodyState, RotorCommand, VehicleState, Wrench,
    ROTOR_COUNT,
};
use crate::error::Result;
use crate::so3::{decompose, tilt_angle};

/// Rigid-body integration step, s.
pub const DYNAMICS_DT: f64 = 0.001;
/// Dynamics steps per control step.
pub const SUBSTEPS: usize = 2;
/// Control period, s.
pub const CONTROL_DT: f64 = DYNAMICS_DT * SUBSTEPS as f64;

struct Sensor {
    rng: ChaCha8Rng,
    gyro: Option<Normal<f64>>,
    position: Option<Normal<f64>>,
    velocity: Option<Normal<f64>>,
}

impl Sensor {
    fn new(cfg: &ScenarioConfig) -> Self {
        let dist = |s: f64| if s > 0.0 { Normal::new(0.0, s).ok() } else { None };
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            gyro: dist(cfg.noise.gyro_std),
            position: dist(cfg.noise.position_std),
            velocity: dist(cfg.noise.velocity_std),
        }
    }

    fn measure(&mut self, truth: &RigidBodyState<f64>) -> RigidBodyState<f64> {
        let mut out = *truth;
        let rng = &mut self.rng;
        let mut perturb = |v: &mut Vector3<f64>, d: &Option<Normal<f64>>| {
            if let Some(d) = d {
                for x in v.iter_mut() {
                    *x += d.sample(rng);
                }
            }
        };
        perturb(&mut out.position, &self.position);
        perturb(&mut out.velocity, &self.velocity);
        perturb(&mut out.omega, &self.gyro);
        out
    }
}

/// Controller-side model: the configured platform with the centre of mass
/// where the design puts it.
pub fn nominal_params(truth: &QuadrotorParams<f64>) -> QuadrotorParams<f64> {
    QuadrotorParams { com_offset: Vector3::zeros(), ..*truth }
}

/// Runs a scenario to completion, a crash, or a numerical failure.
///
/// Only configuration problems are returned as errors; everything that
/// happens in flight is recorded in the log's outcome and events.
pub fn run(cfg: &ScenarioConfig) -> Result<SimLog> {
    let resolved = cfg.resolve()?;
    Ok(run_resolved(cfg, &resolved))
}

pub fn run_resolved(cfg: &ScenarioConfig, sc: &ResolvedScenario) -> SimLog {
    let truth = &sc.params;
    let nominal = nominal_params(truth);
    let start_time = cfg.trajectory.start_time;
    let traj_duration = sc.trajectory.duration();
    let steps = (sc.duration / CONTROL_DT).round() as usize;

    let mut faults = FaultState::healthy();
    for f in &cfg.faults {
        faults = faults.inject(f.rotor - 1, f.damage / 100.0, f.time);
    }
    let mut pending: Vec<_> = cfg.faults.clone();
    pending.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut pending = pending.into_iter().peekable();

    let mut state = VehicleState::hovering(sc.trajectory.start(), truth);
    let mut sensor = Sensor::new(cfg);
    let mut detector = FaultDetector::<f64>::new(cfg.detector);
    let mut log = SimLog::new();
    log.records.reserve(steps + 1);

    let mut nominal_rotor = state.rotor_speeds;
    let mut applied = Wrench::zero();
    let mut nominal_speeds: Vec<[f64; ROTOR_COUNT]> = Vec::with_capacity(SUBSTEPS);
    let mut prev_baseline = state.rotor_speeds;
    let mut prev_augmented = state.rotor_speeds;
    let mut detected = false;
    let mut saturated = false;
    let mut mode = ControlMode::Standard;
    let mut latched_damage = [0.0; ROTOR_COUNT];
    let tilt_limit = cfg.crash.tilt_limit_deg.to_radians();
    let idle_thrust = speed_to_thrust(nominal.idle_speed, &nominal);

    for k in 0..=steps {
        let t = k as f64 * CONTROL_DT;
        while let Some(f) = pending.next_if(|f| f.time <= t + 1e-9) {
            log.push_event(f.time, EventKind::FaultInjected, Some(f.rotor), f.damage, "");
        }

        let measured = sensor.measure(&state.body);
        let new_mode = detector.update(
            t,
            &measured,
            &applied,
            &nominal_speeds,
            &prev_baseline,
            &prev_augmented,
            &nominal,
            CONTROL_DT,
        );
        let (worst, level) = detector.estimate.max();
        if !detected && level > cfg.detector.threshold {
            detected = true;
            log.push_event(t, EventKind::Detection, Some(worst + 1), level, "");
        }
        if new_mode != mode {
            mode = new_mode;
            latched_damage = detector.estimate.damage;
            let failed = detector.switch.failed.unwrap_or_default();
            let names: Vec<String> = (0..ROTOR_COUNT).filter(|&i| failed[i]).map(|i| (i + 1).to_string()).collect();
            log.push_event(t, EventKind::Switch, Some(worst + 1), level, format!("failed rotors {}", names.join(" ")));
        }

        let tau = (t - start_time).clamp(0.0, traj_duration);
        let setpoint = match sc.trajectory.sample(tau) {
            Ok(s) => s,
            Err(e) => return fail(log, t, e.to_string()),
        };
        let actuators = match mode {
            ControlMode::Standard => ActuatorSet::all(),
            ControlMode::FaultTolerant => {
                let failed = detector.switch.failed.unwrap_or_default();
                let mut set = ActuatorSet::after_failure(&failed, cfg.fault_tolerant.opposite_cap)
                    .with_removed_thrust(idle_thrust);
                let lost: Vec<usize> = (0..ROTOR_COUNT).filter(|&i| failed[i]).collect();
                if let (true, [i]) = (cfg.fault_tolerant.use_damaged_rotor, &lost[..]) {
                    set = set.with_damaged_rotor(*i, 1.0 - latched_damage[*i] / 100.0);
                }
                set
            }
        };
        let out = match sc.controller.compute(&setpoint, &measured, &nominal, mode, &actuators) {
            Ok(o) => o,
            Err(e) => return fail(log, t, e.to_string()),
        };
        let baseline = out.rotors.0;
        let augmented = match mode {
            ControlMode::Standard => augmented_rotor_speeds(&baseline, &detector.predictor.augmentation(), &nominal),
            ControlMode::FaultTolerant => baseline,
        };
        let command = RotorCommand(augmented).clamped(truth);
        if out.saturated != saturated {
            saturated = out.saturated;
            let kind = if saturated { EventKind::SaturationStart } else { EventKind::SaturationEnd };
            log.push_event(t, kind, None, 0.0, "");
        }

        let r = state.body.rotation.matrix();
        let yaw = decompose(&state.body.rotation).map(|d| d.yaw).unwrap_or(f64::NAN);
        log.records.push(LogRecord {
            time: t,
            position: state.body.position.into(),
            velocity: state.body.velocity.into(),
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            omega: state.body.omega.into(),
            yaw,
            tilt_deg: tilt_angle(&state.body.rotation).to_degrees(),
            mode,
            commanded: command.0,
            actual: state.rotor_speeds,
            damage: detector.estimate.damage,
            attitude_error: out.attitude_error.norm(),
            reference: setpoint.position.into(),
            tracking: t >= start_time + sc.trajectory.ramp() && t <= start_time + traj_duration,
            saturated: out.saturated,
        });
        if k == steps {
            break;
        }

        // Healthy motor model of what this command should produce.
        nominal_speeds.clear();
        let mut sum = Wrench::zero();
        for _ in 0..SUBSTEPS {
            nominal_rotor = motor_lag(&nominal_rotor, &command.0, &nominal, DYNAMICS_DT);
            nominal_speeds.push(nominal_rotor);
            let w = rotor_wrench(&nominal_rotor, &nominal);
            sum = Wrench { thrust: sum.thrust + w.thrust, moment: sum.moment + w.moment };
        }
        let n = SUBSTEPS as f64;
        applied = Wrench { thrust: sum.thrust / n, moment: sum.moment / n };
        prev_baseline = baseline;
        prev_augmented = augmented;

        for _ in 0..SUBSTEPS {
            state = match step(&state, &command, &faults, truth, DYNAMICS_DT) {
                Ok(s) => s,
                Err(e) => return fail(log, state.time, e.to_string()),
            };
        }
        state.time = (k + 1) as f64 * CONTROL_DT;

        let z = state.body.position.z;
        let tilt = tilt_angle(&state.body.rotation);
        let crash = if z < cfg.crash.floor {
            Some(format!("floor contact, z = {z:.3} m"))
        } else if tilt > tilt_limit {
            Some(format!("tilt {:.1} deg", tilt.to_degrees()))
        } else {
            None
        };
        if let Some(reason) = crash {
            log.push_event(state.time, EventKind::Dnf, None, z, reason.clone());
            log.outcome = Outcome::Dnf(reason);
            return log;
        }
    }
    log
}

fn fail(mut log: SimLog, t: f64, reason: String) -> SimLog {
    log.push_event(t, EventKind::Failure, None, 0.0, reason.clone());
    log.outcome = Outcome::Failed(reason);
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover(duration: f64) -> ScenarioConfig {
        ScenarioConfig { duration: Some(duration), ..ScenarioConfig::default() }
    }

    #[test]
    fn one_record_per_control_step() {
        let log = run(&hover(1.0)).unwrap();
        assert_eq!(log.outcome, Outcome::Completed);
        assert_eq!(log.records.len(), 501);
        assert!(log.records.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn healthy_hover_stays_put() {
        let log = run(&hover(3.0)).unwrap();
        let last = log.records.last().unwrap();
        assert!(last.mode == ControlMode::Standard);
        let err = (Vector3::from(last.position) - Vector3::from(last.reference)).norm();
        assert!(err < 1e-6, "drifted {err}");
        assert!(log.events.is_empty());
    }

    #[test]
    fn noise_is_seeded() {
        let mut cfg = hover(0.5);
        cfg.noise.gyro_std = 0.01;
        cfg.noise.position_std = 0.001;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 7;
        let c = run(&cfg).unwrap();
        assert_ne!(a.records.last(), c.records.last());
    }
}
