//! Six-degree-of-freedom quadrotor model: four-rotor actuation with
//! first-order motor lag, per-rotor fault injection, rotational drag about
//! the thrust axis, and RK4 integration of the rigid-body equations.
//!
//! Rotor speeds are expressed in RPM throughout; `thrust_coeff` is in
//! N/RPM² and `torque_coeff` in N·m/RPM².

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::so3::{hat, orthonormalize};

pub const ROTOR_COUNT: usize = 4;

/// Largest accepted integration step, seconds.
pub const MAX_TIME_STEP: f64 = 5e-3;

/// Physical description of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorParams<T: Real> {
    /// kg
    pub mass: T,
    /// m/s²
    pub gravity: T,
    /// kg·m², body frame
    pub inertia: Matrix3<T>,
    /// Centre of mass to rotor hub, m.
    pub arm_length: T,
    /// N/RPM²
    pub thrust_coeff: T,
    /// N·m/RPM²
    pub torque_coeff: T,
    /// Sign of each rotor's reaction torque about `b3`.
    pub spin: [T; ROTOR_COUNT],
    /// RPM
    pub max_speed: T,
    /// Floor reached by a faulted rotor, RPM.
    pub idle_speed: T,
    /// s
    pub motor_time_constant: T,
    /// kg/m³
    pub air_density: T,
    /// Effective cross-sectional area seen by the yaw drag, m².
    pub drag_area: T,
    /// Dimensionless yaw drag coefficient.
    pub yaw_drag_coeff: T,
    /// Centre-of-mass offset from the geometric centre, body frame, m.
    pub com_offset: Vector3<T>,
}

impl<T: Real> Default for QuadrotorParams<T> {
    fn default() -> Self {
        let mass: T = lit(0.7);
        let gravity: T = lit(9.81);
        let max_speed: T = lit(20_000.0);
        let thrust_coeff = lit::<T>(2.5) * mass * gravity / (lit::<T>(4.0) * max_speed * max_speed);
        Self {
            mass,
            gravity,
            inertia: Matrix3::from_diagonal(&Vector3::new(lit(3.0e-3), lit(3.0e-3), lit(5.5e-3))),
            arm_length: lit(0.105),
            thrust_coeff,
            torque_coeff: thrust_coeff * lit(0.012),
            spin: [-T::one(), T::one(), -T::one(), T::one()],
            max_speed,
            idle_speed: lit(4000.0),
            motor_time_constant: lit(0.03),
            air_density: lit(1.225),
            drag_area: lit(0.5),
            yaw_drag_coeff: lit(0.1),
            com_offset: Vector3::zeros(),
        }
    }
}

impl<T: Real> QuadrotorParams<T> {
    /// Rederives `thrust_coeff` (and `torque_coeff` at the same ratio) so
    /// that four rotors at `max_speed` lift `ratio` times the weight.
    pub fn with_thrust_to_weight(mut self, ratio: T) -> Self {
        let km_over_kf = self.torque_coeff / self.thrust_coeff;
        self.thrust_coeff = ratio * self.mass * self.gravity / (lit::<T>(4.0) * self.max_speed * self.max_speed);
        self.torque_coeff = self.thrust_coeff * km_over_kf;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        let z = T::zero();
        if !(self.mass > z) {
            return bad("mass must be positive");
        }
        if !(self.gravity >= z) {
            return bad("gravity must be non-negative");
        }
        let j = &self.inertia;
        if (j - j.transpose()).norm() > lit::<T>(1e-12) * j.norm() {
            return bad("inertia must be symmetric");
        }
        if j.cholesky().is_none() {
            return bad("inertia must be positive definite");
        }
        if !(self.arm_length > z) {
            return bad("arm length must be positive");
        }
        if !(self.thrust_coeff > z && self.torque_coeff > z) {
            return bad("rotor coefficients must be positive");
        }
        if self.spin.iter().any(|s| (s.abs() - T::one()).abs() > lit(1e-12)) {
            return bad("rotor spin signs must be +1 or -1");
        }
        if !(self.idle_speed >= z && self.max_speed > self.idle_speed) {
            return bad("need max speed > idle speed >= 0");
        }
        if !(self.motor_time_constant >= z) {
            return bad("motor time constant must be non-negative");
        }
        if !(self.air_density > z && self.drag_area > z && self.yaw_drag_coeff >= z) {
            return bad("need air density > 0, drag area > 0, yaw drag coefficient >= 0");
        }
        if !self.com_offset.iter().all(|c| c.is_finite()) {
            return bad("centre-of-mass offset must be finite");
        }
        Ok(())
    }

    /// Hub position of rotor `i` (0-based) relative to the geometric centre.
    /// Rotors sit on the diagonals of an X frame, numbered counter-clockwise
    /// from the front-left.
    pub fn rotor_position(&self, i: usize) -> Vector3<T> {
        let angle = T::frac_pi_4() + T::frac_pi_2() * lit::<T>(i as f64);
        Vector3::new(angle.cos(), angle.sin(), T::zero()) * self.arm_length
    }

    /// Speed at which four healthy rotors balance the weight.
    pub fn hover_speed(&self) -> T {
        (self.mass * self.gravity / (lit::<T>(4.0) * self.thrust_coeff)).sqrt()
    }

    pub fn max_rotor_thrust(&self) -> T {
        self.thrust_coeff * self.max_speed * self.max_speed
    }

    pub fn weight(&self) -> T {
        self.mass * self.gravity
    }

    /// `k_m / k_f`, metres.
    pub fn torque_ratio(&self) -> T {
        self.torque_coeff / self.thrust_coeff
    }

    pub fn inertia_inverse(&self) -> Matrix3<T> {
        self.inertia.try_inverse().unwrap_or_else(Matrix3::zeros)
    }

    /// `2 k_z rho A d^3`: yaw drag torque per (rad/s)².
    pub fn yaw_drag_gain(&self) -> T {
        let d = self.arm_length;
        lit::<T>(2.0) * self.yaw_drag_coeff * self.air_density * self.drag_area * d * d * d
    }
}

/// Rigid-body state. Velocity is inertial, angular velocity body-frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub rotation: Rotation3<T>,
    pub omega: Vector3<T>,
}

impl<T: Real> Default for RigidBodyState<T> {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

impl<T: Real> RigidBodyState<T> {
    pub fn at_rest(position: Vector3<T>) -> Self {
        Self { position, velocity: Vector3::zeros(), rotation: Rotation3::identity(), omega: Vector3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.rotation.matrix().iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
    }
}

/// Rigid body plus the motor states and simulation clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState<T: Real> {
    pub time: T,
    pub body: RigidBodyState<T>,
    /// Actual rotor speeds, RPM.
    pub rotor_speeds: [T; ROTOR_COUNT],
}

impl<T: Real> VehicleState<T> {
    /// Level hover at `position` with every rotor spinning at hover speed.
    pub fn hovering(position: Vector3<T>, params: &QuadrotorParams<T>) -> Self {
        Self {
            time: T::zero(),
            body: RigidBodyState::at_rest(position),
            rotor_speeds: [params.hover_speed(); ROTOR_COUNT],
        }
    }
}

/// Commanded rotor speeds, RPM.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorCommand<T: Real>(pub [T; ROTOR_COUNT]);

impl<T: Real> RotorCommand<T> {
    pub fn uniform(speed: T) -> Self {
        Self([speed; ROTOR_COUNT])
    }

    /// Clamps every entry to `[0, max_speed]`.
    pub fn clamped(self, params: &QuadrotorParams<T>) -> Self {
        Self(self.0.map(|w| w.clamp(T::zero(), params.max_speed)))
    }
}

/// Injected rotor damage. `damage[i]` scales rotor `i`'s achieved speed to
/// `(1 - damage[i])` of its command once `time >= onset[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultState<T: Real> {
    pub damage: [T; ROTOR_COUNT],
    pub onset: [T; ROTOR_COUNT],
}

impl<T: Real> Default for FaultState<T> {
    fn default() -> Self {
        Self::healthy()
    }
}

impl<T: Real> FaultState<T> {
    pub fn healthy() -> Self {
        Self { damage: [T::zero(); ROTOR_COUNT], onset: [lit(f64::INFINITY); ROTOR_COUNT] }
    }

    /// Schedules damage `fraction` on rotor `rotor` (0-based) from `time` on.
    pub fn inject(mut self, rotor: usize, fraction: T, time: T) -> Self {
        self.damage[rotor] = fraction.clamp(T::zero(), T::one());
        self.onset[rotor] = time;
        self
    }

    pub fn is_active(&self, rotor: usize, time: T) -> bool {
        time >= self.onset[rotor] && self.damage[rotor] > T::zero()
    }
}

/// Collective thrust along `b3` (N) and body moment (N·m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench<T: Real> {
    pub thrust: T,
    pub moment: Vector3<T>,
}

impl<T: Real> Wrench<T> {
    pub fn zero() -> Self {
        Self { thrust: T::zero(), moment: Vector3::zeros() }
    }

    pub fn lerp(&self, other: &Self, t: T) -> Self {
        Self {
            thrust: self.thrust + (other.thrust - self.thrust) * t,
            moment: self.moment + (other.moment - self.moment) * t,
        }
    }
}

/// Thrust and moment produced by the rotors spinning at `speeds`.
/// Moment arms are taken about the (possibly offset) centre of mass.
pub fn rotor_wrench<T: Real>(speeds: &[T; ROTOR_COUNT], params: &QuadrotorParams<T>) -> Wrench<T> {
    let mut thrust = T::zero();
    let mut moment = Vector3::zeros();
    for (i, &w) in speeds.iter().enumerate() {
        let f = params.thrust_coeff * w * w;
        let arm = params.rotor_position(i) - params.com_offset;
        thrust += f;
        moment += Vector3::new(arm.y * f, -arm.x * f, T::zero());
        moment.z += params.spin[i] * params.torque_coeff * w * w;
    }
    Wrench { thrust, moment }
}

/// Speeds the motors are driven towards once faults are applied.
pub fn apply_fault<T: Real>(
    commanded: &RotorCommand<T>,
    fault: &FaultState<T>,
    params: &QuadrotorParams<T>,
    time: T,
) -> [T; ROTOR_COUNT] {
    let cmd = commanded.clamped(params).0;
    std::array::from_fn(|i| {
        if fault.is_active(i, time) {
            let scaled = (T::one() - fault.damage[i]) * cmd[i];
            scaled.max(params.idle_speed)
        } else {
            cmd[i]
        }
    })
}

/// Aerodynamic torque opposing rotation about `b3`.
pub fn drag_moment<T: Real>(omega: &Vector3<T>, params: &QuadrotorParams<T>) -> Vector3<T> {
    let r = omega.z;
    Vector3::new(T::zero(), T::zero(), -params.yaw_drag_gain() * r * r.abs())
}

/// Exact first-order lag of each motor towards `target` over `dt`.
pub fn motor_lag<T: Real>(
    current: &[T; ROTOR_COUNT],
    target: &[T; ROTOR_COUNT],
    params: &QuadrotorParams<T>,
    dt: T,
) -> [T; ROTOR_COUNT] {
    if params.motor_time_constant <= T::zero() {
        return *target;
    }
    let decay = (-dt / params.motor_time_constant).exp();
    std::array::from_fn(|i| target[i] + (current[i] - target[i]) * decay)
}

#[derive(Clone, Copy)]
struct Derivative<T: Real> {
    dp: Vector3<T>,
    dv: Vector3<T>,
    dr: Matrix3<T>,
    dw: Vector3<T>,
}

#[derive(Clone, Copy)]
struct Point<T: Real> {
    p: Vector3<T>,
    v: Vector3<T>,
    r: Matrix3<T>,
    w: Vector3<T>,
}

impl<T: Real> Point<T> {
    fn advance(&self, d: &Derivative<T>, h: T) -> Self {
        Self { p: self.p + d.dp * h, v: self.v + d.dv * h, r: self.r + d.dr * h, w: self.w + d.dw * h }
    }
}

fn derivative<T: Real>(
    x: &Point<T>,
    wrench: &Wrench<T>,
    params: &QuadrotorParams<T>,
    j_inv: &Matrix3<T>,
) -> Derivative<T> {
    let e3 = Vector3::z();
    let j = &params.inertia;
    let dv = x.r * e3 * (wrench.thrust / params.mass) - e3 * params.gravity;
    let gyro = x.w.cross(&(j * x.w));
    let dw = j_inv * (wrench.moment - gyro + drag_moment(&x.w, params));
    Derivative { dp: x.v, dv, dr: x.r * hat(&x.w), dw }
}

/// Integrates the rigid body over `dt` under a constant rotor wrench.
pub fn integrate_body<T: Real>(
    body: &RigidBodyState<T>,
    wrench: &Wrench<T>,
    params: &QuadrotorParams<T>,
    dt: T,
) -> RigidBodyState<T> {
    let j_inv = params.inertia_inverse();
    let x0 = Point { p: body.position, v: body.velocity, r: *body.rotation.matrix(), w: body.omega };
    let half = dt * lit(0.5);
    let k1 = derivative(&x0, wrench, params, &j_inv);
    let k2 = derivative(&x0.advance(&k1, half), wrench, params, &j_inv);
    let k3 = derivative(&x0.advance(&k2, half), wrench, params, &j_inv);
    let k4 = derivative(&x0.advance(&k3, dt), wrench, params, &j_inv);
    let sixth = dt / lit(6.0);
    let two: T = lit(2.0);
    let p = x0.p + (k1.dp + k2.dp * two + k3.dp * two + k4.dp) * sixth;
    let v = x0.v + (k1.dv + k2.dv * two + k3.dv * two + k4.dv) * sixth;
    let r = x0.r + (k1.dr + k2.dr * two + k3.dr * two + k4.dr) * sixth;
    let w = x0.w + (k1.dw + k2.dw * two + k3.dw * two + k4.dw) * sixth;
    RigidBodyState {
        position: p,
        velocity: v,
        rotation: Rotation3::from_matrix_unchecked(orthonormalize(&r)),
        omega: w,
    }
}

/// Advances the vehicle by `dt`: fault injection, motor lag, then RK4 on
/// the rigid body with the resulting wrench held constant.
pub fn step<T: Real>(
    state: &VehicleState<T>,
    commanded: &RotorCommand<T>,
    fault: &FaultState<T>,
    params: &QuadrotorParams<T>,
    dt: T,
) -> Result<VehicleState<T>> {
    if !(dt > T::zero() && dt <= lit(MAX_TIME_STEP * (1.0 + 1e-12))) {
        return Err(Error::InvalidTimeStep(to_f64(dt)));
    }
    let target = apply_fault(commanded, fault, params, state.time);
    let rotor_speeds = motor_lag(&state.rotor_speeds, &target, params, dt);
    let wrench = rotor_wrench(&rotor_speeds, params);
    let body = integrate_body(&state.body, &wrench, params, dt);
    let time = state.time + dt;
    if !body.is_finite() || rotor_speeds.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteState(to_f64(time)));
    }
    Ok(VehicleState { time, body, rotor_speeds })
}
