//! Geometric position/attitude control, the reduced-attitude error metrics
//! used after a rotor failure, and rotor allocation.
//!
//! Standard mode tracks the full attitude including yaw. Fault-tolerant mode
//! surrenders yaw: only the thrust direction is regulated, the yaw gains are
//! zeroed and the yaw-moment row is dropped from the allocation, so the
//! vehicle spins freely about `b3` while tracking position.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::allocation::{effectiveness_matrix, solve_box_qp, thrust_to_speed, wrench_row_scale};
use crate::dynamics::{QuadrotorParams, RigidBodyState, RotorCommand, Wrench, ROTOR_COUNT};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::so3::{decompose, rotation_from_yaw, skew_error, thrust_axis, tilt_from_axis};

/// Smallest commanded acceleration norm that still defines a thrust axis.
pub const MIN_ACCEL_NORM: f64 = 0.1;

/// Reduced-attitude error used in fault-tolerant mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    CurrentYaw,
    S2,
    ThrustVector,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::CurrentYaw, MetricKind::S2, MetricKind::ThrustVector];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::CurrentYaw => "current_yaw",
            MetricKind::S2 => "s2",
            MetricKind::ThrustVector => "thrust_vector",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    Standard,
    FaultTolerant,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Standard => "standard",
            ControlMode::FaultTolerant => "fault_tolerant",
        }
    }
}

/// Per-axis feedback gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains<T: Real> {
    /// 1/s²
    pub position: Vector3<T>,
    /// 1/s
    pub velocity: Vector3<T>,
    pub attitude: Vector3<T>,
    pub rate: Vector3<T>,
}

impl<T: Real> Default for ControlGains<T> {
    fn default() -> Self {
        let v = |a: f64, b: f64, c: f64| Vector3::new(lit(a), lit(b), lit(c));
        Self {
            position: v(6.0, 6.0, 8.0),
            velocity: v(4.0, 4.0, 5.0),
            attitude: v(0.9, 0.9, 0.3),
            rate: v(0.12, 0.12, 0.04),
        }
    }
}

impl<T: Real> ControlGains<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.position, self.velocity, self.attitude, self.rate];
        if all.iter().flat_map(|v| v.iter()).all(|g| g.is_finite() && *g >= T::zero()) {
            Ok(())
        } else {
            Err(Error::InvalidParams("gains must be finite and non-negative".into()))
        }
    }

    /// Gains with the yaw components zeroed.
    pub fn without_yaw(&self) -> Self {
        let mut g = *self;
        g.attitude.z = T::zero();
        g.rate.z = T::zero();
        g
    }
}

/// Attitude loop used after a switch. The rate target
/// `-tilt_rate * e - precession * Ω3 * (e3 × e)` turns the reduced attitude
/// error into a roll/pitch rate demand; the cross term leads the error
/// around the spin axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultTolerantGains<T: Real> {
    pub attitude: T,
    pub rate: T,
    /// 1/s
    pub tilt_rate: T,
    /// Precession gain with three or four live rotors.
    pub precession: T,
    /// Precession gain when only one opposing pair is live.
    pub precession_pair: T,
}

impl<T: Real> Default for FaultTolerantGains<T> {
    fn default() -> Self {
        Self {
            attitude: lit(4.0),
            rate: lit(0.3),
            tilt_rate: lit(5.0),
            precession: lit(-1.5),
            precession_pair: lit(-3.0),
        }
    }
}

impl<T: Real> FaultTolerantGains<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.attitude, self.rate, self.tilt_rate, self.precession, self.precession_pair];
        if !all.iter().all(|g| g.is_finite())
            || self.attitude < T::zero()
            || self.rate < T::zero()
            || self.tilt_rate < T::zero()
        {
            return Err(Error::InvalidParams(
                "fault-tolerant gains must be finite, attitude and rate gains non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Flat-output reference: position, velocity, acceleration and yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSetpoint<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub acceleration: Vector3<T>,
    /// Ignored in fault-tolerant mode.
    pub yaw: T,
}

impl<T: Real> FlatSetpoint<T> {
    pub fn hover(position: Vector3<T>) -> Self {
        Self { position, velocity: Vector3::zeros(), acceleration: Vector3::zeros(), yaw: T::zero() }
    }
}

/// `-k_p e_p - k_v e_v + a_ref + g e3`.
pub fn commanded_acceleration<T: Real>(
    setpoint: &FlatSetpoint<T>,
    state: &RigidBodyState<T>,
    gains: &ControlGains<T>,
    params: &QuadrotorParams<T>,
) -> Vector3<T> {
    let ep = state.position - setpoint.position;
    let ev = state.velocity - setpoint.velocity;
    -gains.position.component_mul(&ep) - gains.velocity.component_mul(&ev)
        + setpoint.acceleration
        + Vector3::z() * params.gravity
}

/// Desired attitude and collective thrust for a commanded acceleration.
/// The thrust axis follows `accel`; yaw is `setpoint_yaw` in standard mode
/// and the vehicle's current yaw in fault-tolerant mode.
pub fn attitude_from_acceleration<T: Real>(
    accel: &Vector3<T>,
    setpoint_yaw: T,
    state: &RigidBodyState<T>,
    params: &QuadrotorParams<T>,
    mode: ControlMode,
) -> Result<(Rotation3<T>, T)> {
    let norm = accel.norm();
    if !(norm >= lit(MIN_ACCEL_NORM)) {
        return Err(Error::DegenerateThrust(to_f64(norm)));
    }
    let b3 = accel / norm;
    let yaw = match mode {
        ControlMode::Standard => setpoint_yaw,
        ControlMode::FaultTolerant => decompose(&state.rotation)?.yaw,
    };
    let r_des = tilt_from_axis(&b3)? * rotation_from_yaw(yaw);
    let thrust = params.mass * accel.dot(&thrust_axis(&state.rotation));
    Ok((r_des, thrust))
}

/// Outer loop: desired attitude and collective thrust from a flat setpoint.
pub fn desired_attitude<T: Real>(
    setpoint: &FlatSetpoint<T>,
    state: &RigidBodyState<T>,
    gains: &ControlGains<T>,
    params: &QuadrotorParams<T>,
    mode: ControlMode,
) -> Result<(Rotation3<T>, T)> {
    let accel = commanded_acceleration(setpoint, state, gains, params);
    attitude_from_acceleration(&accel, setpoint.yaw, state, params, mode)
}

/// Full attitude error `½ (R_dᵀR - RᵀR_d)^∨`.
pub fn error_full<T: Real>(r_des: &Rotation3<T>, r: &Rotation3<T>) -> Vector3<T> {
    skew_error(r_des, r)
}

/// Attitude error after replacing the desired yaw with the current yaw.
/// Body frame.
pub fn error_current_yaw<T: Real>(r_des: &Rotation3<T>, r: &Rotation3<T>) -> Result<Vector3<T>> {
    let current = decompose(r)?;
    let desired = decompose(r_des)?;
    let relaxed = desired.tilt * rotation_from_yaw(current.yaw);
    Ok(skew_error(&relaxed, r))
}

/// Error between the tilt factors alone, `½ (R_φdᵀR_φ - R_φᵀR_φd)^∨`,
/// expressed in the current tilt frame.
pub fn error_s2<T: Real>(r_des: &Rotation3<T>, r: &Rotation3<T>) -> Result<Vector3<T>> {
    let current = decompose(r)?;
    let desired = decompose(r_des)?;
    Ok(skew_error(&desired.tilt, &current.tilt))
}

/// `Rᵀ (n_des × n)` with `n = R e3`. Body frame. Vanishes for antipodal axes.
pub fn error_thrust_vector<T: Real>(r_des: &Rotation3<T>, r: &Rotation3<T>) -> Vector3<T> {
    let n_des = thrust_axis(r_des);
    let n = thrust_axis(r);
    r.inverse() * n_des.cross(&n)
}

/// Reduced-attitude error of the chosen metric, in body coordinates.
pub fn reduced_attitude_error<T: Real>(
    metric: MetricKind,
    r_des: &Rotation3<T>,
    r: &Rotation3<T>,
) -> Result<Vector3<T>> {
    match metric {
        MetricKind::CurrentYaw => error_current_yaw(r_des, r),
        MetricKind::S2 => {
            let e = error_s2(r_des, r)?;
            let yaw = decompose(r)?.yaw;
            Ok(rotation_from_yaw(yaw).inverse() * e)
        }
        MetricKind::ThrustVector => Ok(error_thrust_vector(r_des, r)),
    }
}

/// `M = -k_R∘e_R - k_Ω∘e_Ω + Ω × JΩ`.
pub fn moment_command<T: Real>(
    e_r: &Vector3<T>,
    e_omega: &Vector3<T>,
    omega: &Vector3<T>,
    inertia: &nalgebra::Matrix3<T>,
    gains: &ControlGains<T>,
) -> Vector3<T> {
    -gains.attitude.component_mul(e_r) - gains.rate.component_mul(e_omega) + omega.cross(&(inertia * omega))
}

/// Rate error with the yaw-rate component surrendered.
pub fn fault_tolerant_rate_error<T: Real>(omega: &Vector3<T>, omega_des: &Vector3<T>) -> Vector3<T> {
    Vector3::new(omega.x - omega_des.x, omega.y - omega_des.y, T::zero())
}

/// Upper bound on each rotor's thrust as a fraction of its maximum.
/// Zero removes the rotor from the allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorSet<T: Real> {
    pub authority: [T; ROTOR_COUNT],
    /// Thrust (N) a removed rotor is still known to produce, e.g. at idle.
    pub fixed_thrust: [T; ROTOR_COUNT],
    /// Delivered over commanded thrust for each live rotor.
    pub effectiveness: [T; ROTOR_COUNT],
}

impl<T: Real> Default for ActuatorSet<T> {
    fn default() -> Self {
        Self::all()
    }
}

impl<T: Real> ActuatorSet<T> {
    pub fn all() -> Self {
        Self {
            authority: [T::one(); ROTOR_COUNT],
            fixed_thrust: [T::zero(); ROTOR_COUNT],
            effectiveness: [T::one(); ROTOR_COUNT],
        }
    }

    /// Layout after losing the rotors flagged in `failed`. A single loss
    /// keeps the two neighbouring rotors at full authority and caps the
    /// rotor opposite the failure at `opposite_cap`; any larger loss keeps
    /// only the healthy rotors.
    pub fn after_failure(failed: &[bool; ROTOR_COUNT], opposite_cap: T) -> Self {
        let mut authority = failed.map(|f| if f { T::zero() } else { T::one() });
        let lost: Vec<usize> = (0..ROTOR_COUNT).filter(|&i| failed[i]).collect();
        if let [i] = lost[..] {
            authority[(i + 2) % ROTOR_COUNT] = opposite_cap.clamp(T::zero(), T::one());
        }
        Self { authority, ..Self::all() }
    }

    /// Keeps a failed rotor live at the given effectiveness (delivered
    /// over commanded thrust), clamped to `[0.05, 1]`.
    pub fn with_damaged_rotor(mut self, rotor: usize, effectiveness: T) -> Self {
        self.authority[rotor] = T::one();
        self.effectiveness[rotor] = effectiveness.clamp(lit(0.05), T::one());
        self.fixed_thrust[rotor] = T::zero();
        self
    }

    /// Accounts for every removed rotor still producing `thrust`.
    pub fn with_removed_thrust(mut self, thrust: T) -> Self {
        for i in 0..ROTOR_COUNT {
            self.fixed_thrust[i] = if self.is_removed(i) { thrust } else { T::zero() };
        }
        self
    }

    fn is_removed(&self, i: usize) -> bool {
        !(self.authority[i] > T::zero())
    }

    fn has_opposing_pair(&self) -> bool {
        let live = |i: usize| self.authority[i] > T::zero();
        (live(0) && live(2)) || (live(1) && live(3))
    }

    /// Only one opposing pair is live, so roll/pitch authority acts along
    /// a single body axis.
    pub fn is_single_pair(&self) -> bool {
        self.has_opposing_pair() && (0..ROTOR_COUNT).filter(|&i| !self.is_removed(i)).count() == 2
    }
}

/// Result of [`mix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation<T: Real> {
    pub rotors: RotorCommand<T>,
    /// Per-rotor commanded thrust, N, before any effectiveness loss.
    pub thrusts: [T; ROTOR_COUNT],
    /// Wrench the allocation produces under the nominal rotor model.
    pub achieved: Wrench<T>,
    /// Actuator limits changed the allocation.
    pub saturated: bool,
}

/// Relative weights of the allocation rows `[F, M1, M2, M3]` once each row
/// is expressed in thrust-equivalent newtons. Roll/pitch dominate thrust,
/// which dominates yaw.
const ROW_WEIGHTS: [f64; 4] = [1.0, 1000.0, 1000.0, 0.1];
const RIDGE: f64 = 1e-9;

/// Per-rotor speeds realising thrust `thrust` and body moment `moment`.
///
/// Standard mode inverts the full 4×4 map. Fault-tolerant mode drops the
/// yaw row and distributes `[F, M1, M2]` over the rotors in `actuators`.
/// When limits bind, a weighted box-constrained least-squares problem keeps
/// roll and pitch ahead of thrust.
pub fn mix<T: Real>(
    thrust: T,
    moment: &Vector3<T>,
    params: &QuadrotorParams<T>,
    mode: ControlMode,
    actuators: &ActuatorSet<T>,
) -> Result<Allocation<T>> {
    if !(thrust >= T::zero()) || !moment.iter().all(|m| m.is_finite()) {
        return Err(Error::InfeasibleAllocation(format!("bad demand f = {}", to_f64(thrust))));
    }
    let b = effectiveness_matrix(params);
    let eta = match mode {
        ControlMode::Standard => [T::one(); ROTOR_COUNT],
        ControlMode::FaultTolerant => actuators.effectiveness.map(|e| e.clamp(lit(0.05), T::one())),
    };
    let f_max = params.max_rotor_thrust();
    let mut target = nalgebra::Vector4::new(thrust, moment.x, moment.y, moment.z);
    let (rows, live, upper, fixed) = match mode {
        ControlMode::Standard => (4, vec![0, 1, 2, 3], [f_max; ROTOR_COUNT], [T::zero(); ROTOR_COUNT]),
        ControlMode::FaultTolerant => {
            if !actuators.has_opposing_pair() {
                return Err(Error::InfeasibleAllocation(
                    "fault-tolerant allocation needs an opposing pair of live rotors".into(),
                ));
            }
            let live: Vec<usize> = (0..ROTOR_COUNT).filter(|&i| !actuators.is_removed(i)).collect();
            let fixed: [T; ROTOR_COUNT] = std::array::from_fn(|i| {
                if actuators.is_removed(i) {
                    actuators.fixed_thrust[i].max(T::zero())
                } else {
                    T::zero()
                }
            });
            target -= b * nalgebra::Vector4::from_row_slice(&fixed);
            (3, live, actuators.authority.map(|a| a.clamp(T::zero(), T::one()) * f_max), fixed)
        }
    };

    let within = |f: &[T; ROTOR_COUNT]| live.iter().all(|&i| f[i] >= T::zero() && f[i] <= upper[i]);
    let mut solution = None;
    if mode == ControlMode::Standard {
        if let Some(inv) = b.try_inverse() {
            let f = inv * target;
            let f: [T; ROTOR_COUNT] = std::array::from_fn(|i| f[i]);
            if within(&f) {
                solution = Some((f, false));
            }
        }
    }
    let (mut thrusts, saturated) = match solution {
        Some(s) => s,
        None => {
            let n = live.len();
            let scale = wrench_row_scale(params);
            let w = |r: usize| scale[r] * lit::<T>(ROW_WEIGHTS[r].sqrt());
            let a = DMatrix::from_fn(rows, n, |r, c| b[(r, live[c])] * eta[live[c]] * w(r));
            let y = DVector::from_fn(rows, |r, _| target[r] * w(r));
            let h = a.transpose() * &a + DMatrix::identity(n, n) * lit::<T>(RIDGE);
            let g = a.transpose() * y;
            let spread = |x: &DVector<T>| {
                let mut f = [T::zero(); ROTOR_COUNT];
                for (k, &i) in live.iter().enumerate() {
                    f[i] = x[k];
                }
                f
            };
            match h.clone().cholesky().map(|c| spread(&c.solve(&g))) {
                Some(f) if within(&f) => (f, false),
                _ => {
                    let lo = DVector::zeros(n);
                    let hi = DVector::from_fn(n, |k, _| upper[live[k]]);
                    let x = solve_box_qp(&h, &g, &lo, &hi)
                        .ok_or_else(|| Error::InfeasibleAllocation("allocation problem malformed".into()))?;
                    (spread(&x), true)
                }
            }
        }
    };
    for i in 0..ROTOR_COUNT {
        if !live.contains(&i) {
            thrusts[i] = fixed[i];
        }
    }
    let delivered: [T; ROTOR_COUNT] = std::array::from_fn(|i| thrusts[i] * eta[i]);
    let achieved_vec = b * nalgebra::Vector4::from_row_slice(&delivered);
    Ok(Allocation {
        rotors: RotorCommand(thrusts.map(|f| thrust_to_speed(f, params))),
        thrusts,
        achieved: Wrench { thrust: achieved_vec[0], moment: achieved_vec.fixed_rows::<3>(1).into_owned() },
        saturated,
    })
}

/// Everything the controller produced in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput<T: Real> {
    pub thrust: T,
    pub moment: Vector3<T>,
    pub rotors: RotorCommand<T>,
    pub mode: ControlMode,
    pub saturated: bool,
    pub desired: Rotation3<T>,
    /// Attitude error fed to the moment law (body frame).
    pub attitude_error: Vector3<T>,
}

/// Position and attitude controller for both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricController<T: Real> {
    pub gains: ControlGains<T>,
    pub fault_tolerant: FaultTolerantGains<T>,
    pub metric: MetricKind,
    /// Largest commanded tilt, rad.
    pub max_tilt: T,
}

impl<T: Real> Default for GeometricController<T> {
    fn default() -> Self {
        Self {
            gains: ControlGains::default(),
            fault_tolerant: FaultTolerantGains::default(),
            metric: MetricKind::CurrentYaw,
            max_tilt: lit(35f64.to_radians()),
        }
    }
}

impl<T: Real> GeometricController<T> {
    pub fn new(gains: ControlGains<T>, metric: MetricKind) -> Self {
        Self { gains, metric, ..Self::default() }
    }

    /// Limits the angle between `accel` and the vertical to `max_tilt`,
    /// keeping its vertical component.
    fn limit_tilt(&self, accel: &Vector3<T>) -> Vector3<T> {
        let vertical = accel.z.max(lit(MIN_ACCEL_NORM));
        let horizontal = Vector3::new(accel.x, accel.y, T::zero());
        let cap = vertical * self.max_tilt.tan();
        let h = horizontal.norm();
        let horizontal = if h > cap { horizontal * (cap / h) } else { horizontal };
        horizontal + Vector3::z() * vertical
    }

    pub fn compute(
        &self,
        setpoint: &FlatSetpoint<T>,
        state: &RigidBodyState<T>,
        params: &QuadrotorParams<T>,
        mode: ControlMode,
        actuators: &ActuatorSet<T>,
    ) -> Result<ControlOutput<T>> {
        let accel = self.limit_tilt(&commanded_acceleration(setpoint, state, &self.gains, params));
        let (desired, thrust) = attitude_from_acceleration(&accel, setpoint.yaw, state, params, mode)?;
        let thrust = thrust.clamp(T::zero(), params.max_rotor_thrust() * lit(ROTOR_COUNT as f64));
        let omega = &state.omega;
        let (attitude_error, moment) = match mode {
            ControlMode::Standard => {
                let e = error_full(&desired, &state.rotation);
                (e, moment_command(&e, omega, omega, &params.inertia, &self.gains))
            }
            ControlMode::FaultTolerant => {
                let e = reduced_attitude_error(self.metric, &desired, &state.rotation)?;
                let ft = &self.fault_tolerant;
                let mu = if actuators.is_single_pair() { ft.precession_pair } else { ft.precession };
                let omega_des = -e * ft.tilt_rate - Vector3::z().cross(&e) * (mu * omega.z);
                let e_omega = fault_tolerant_rate_error(omega, &omega_des);
                let g = ControlGains {
                    attitude: Vector3::new(ft.attitude, ft.attitude, T::zero()),
                    rate: Vector3::new(ft.rate, ft.rate, T::zero()),
                    ..self.gains
                };
                (e, moment_command(&e, &e_omega, omega, &params.inertia, &g))
            }
        };
        let alloc = mix(thrust, &moment, params, mode, actuators)?;
        Ok(ControlOutput {
            thrust,
            moment,
            rotors: alloc.rotors,
            mode,
            saturated: alloc.saturated,
            desired,
            attitude_error,
        })
    }
}
