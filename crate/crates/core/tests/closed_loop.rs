use nalgebra::{Rotation3, Unit, Vector3};

use ftquad::allocation::speed_to_thrust;
use ftquad::control::{ActuatorSet, ControlMode, FlatSetpoint, GeometricController, MetricKind};
use ftquad::dynamics::{step, FaultState, QuadrotorParams, RigidBodyState, RotorCommand, VehicleState};
use ftquad::so3::tilt_angle;

const DT: f64 = 0.001;

/// Flies the fault-tolerant loop from a tilted, spinning hover and returns
/// the tilt (degrees) sampled every control step.
fn recover(metric: MetricKind, failed: [bool; 4], tilt_deg: f64, spin: f64, seconds: f64) -> Vec<(f64, f64)> {
    let params = QuadrotorParams::<f64>::default();
    let controller = GeometricController { metric, ..GeometricController::default() };
    let idle = speed_to_thrust(params.idle_speed, &params);
    let actuators = ActuatorSet::after_failure(&failed, 0.5).with_removed_thrust(idle);
    let mut faults = FaultState::healthy();
    for (i, &f) in failed.iter().enumerate() {
        if f {
            faults = faults.inject(i, 1.0, 0.0);
        }
    }

    let axis = Unit::new_normalize(Vector3::new(1.0, 0.3, 0.0));
    let target = Vector3::new(0.0, 0.0, 1.5);
    let body = RigidBodyState {
        rotation: Rotation3::from_axis_angle(&axis, tilt_deg.to_radians()),
        omega: Vector3::new(0.0, 0.0, spin),
        ..RigidBodyState::at_rest(target)
    };
    let mut state = VehicleState { body, ..VehicleState::hovering(target, &params) };
    let setpoint = FlatSetpoint::hover(target);

    let mut trace = Vec::new();
    let steps = (seconds / (2.0 * DT)).round() as usize;
    for k in 0..steps {
        let out = controller
            .compute(&setpoint, &state.body, &params, ControlMode::FaultTolerant, &actuators)
            .expect("allocation");
        let cmd = RotorCommand(out.rotors.0).clamped(&params);
        for _ in 0..2 {
            state = step(&state, &cmd, &faults, &params, DT).expect("finite state");
        }
        trace.push(((k + 1) as f64 * 2.0 * DT, tilt_angle(&state.body.rotation).to_degrees()));
    }
    trace
}

/// Time after which tilt stays below `limit` degrees.
fn settling_time(trace: &[(f64, f64)], limit: f64) -> f64 {
    trace.iter().rev().find(|(_, tilt)| *tilt >= limit).map(|(t, _)| *t).unwrap_or(0.0)
}

#[test]
fn each_metric_levels_a_spinning_vehicle_within_two_seconds() {
    for metric in MetricKind::ALL {
        let trace = recover(metric, [false; 4], 15.0, 20.0, 3.0);
        let settle = settling_time(&trace, 1.0);
        assert!(settle <= 2.0, "{metric:?} settles at {settle}");
    }
}

#[test]
fn single_pair_recovers_from_a_small_tilt() {
    for metric in MetricKind::ALL {
        let trace = recover(metric, [true, false, true, false], 2.0, 20.0, 4.0);
        let settle = settling_time(&trace, 1.0);
        assert!(settle <= 2.0, "{metric:?} settles at {settle}");
    }
}

#[test]
fn reduced_attitude_loop_holds_level_under_spin() {
    for metric in MetricKind::ALL {
        let trace = recover(metric, [true, false, true, false], 0.0, 22.0, 3.0);
        let worst = trace.iter().map(|(_, t)| *t).fold(0.0, f64::max);
        assert!(worst < 0.5, "{metric:?} tilts {worst} deg");
    }
}
