//! Reference trajectories and tracking-error reports.
//!
//! Every path is a smooth curve `p(s)` in a path parameter `s`. The
//! parameter rate `ṡ` ramps up and down with a quintic smoothstep and is
//! otherwise constant at the value that makes the fastest point of the path
//! move at exactly the requested peak speed. Closed curves have period `2π`
//! in `s` and are flown `laps` times; the line is traversed once.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::FlatSetpoint;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Points used to locate the fastest point of a path and to check the arena.
const PATH_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Hold `center`.
    Hover,
    /// Straight segment of length `scale` along x through `center`.
    Line,
    /// Horizontal circle of radius `scale` about `center`.
    Circle,
    /// Lemniscate of Gerono, half-width `scale`.
    Figure8,
    /// Back-and-forth sweep of a parabola in the xy plane.
    ParabolaXy,
    /// Back-and-forth sweep of a parabola in the xz plane.
    ParabolaXz,
    /// Horizontal ellipse with a two-per-lap height modulation.
    WarpedEllipse,
}

impl TrajectoryKind {
    fn is_closed(&self) -> bool {
        !matches!(self, TrajectoryKind::Line | TrajectoryKind::Hover)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec<T: Real> {
    pub kind: TrajectoryKind,
    /// Characteristic size, m.
    pub scale: T,
    /// m/s
    pub peak_speed: T,
    pub center: Vector3<T>,
    /// Repetitions of a closed curve.
    pub laps: u32,
    /// Length of each speed ramp, s.
    pub ramp: T,
    /// Total duration, s. Defaults to the end of the motion; a longer value
    /// holds the final point.
    pub duration: Option<T>,
    /// Arena extents, m: `|x| <= a.x/2`, `|y| <= a.y/2`, `0 <= z <= a.z`.
    pub arena: Vector3<T>,
}

impl<T: Real> Default for TrajectorySpec<T> {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Figure8,
            scale: lit(2.0),
            peak_speed: lit(1.0),
            center: Vector3::new(T::zero(), T::zero(), lit(1.5)),
            laps: 1,
            ramp: lit(2.0),
            duration: None,
            arena: Vector3::new(lit(10.0), lit(6.0), lit(4.0)),
        }
    }
}

/// Position and its first two derivatives with respect to `s`.
struct PathPoint<T: Real> {
    p: Vector3<T>,
    dp: Vector3<T>,
    ddp: Vector3<T>,
}

fn path_point<T: Real>(kind: TrajectoryKind, a: T, s: T) -> PathPoint<T> {
    let z = T::zero();
    let two: T = lit(2.0);
    let (sn, cs) = s.sin_cos();
    let (s2, c2) = (two * s).sin_cos();
    let v = Vector3::new;
    match kind {
        TrajectoryKind::Hover => PathPoint { p: Vector3::zeros(), dp: Vector3::zeros(), ddp: Vector3::zeros() },
        TrajectoryKind::Line => PathPoint { p: v(a * (s - lit(0.5)), z, z), dp: v(a, z, z), ddp: Vector3::zeros() },
        TrajectoryKind::Circle => {
            PathPoint { p: v(a * cs, a * sn, z), dp: v(-a * sn, a * cs, z), ddp: v(-a * cs, -a * sn, z) }
        }
        TrajectoryKind::Figure8 => {
            let h = a * lit(0.5);
            PathPoint {
                p: v(a * sn, h * s2, z),
                dp: v(a * cs, two * h * c2, z),
                ddp: v(-a * sn, -lit::<T>(4.0) * h * s2, z),
            }
        }
        TrajectoryKind::ParabolaXy | TrajectoryKind::ParabolaXz => {
            // (x, h sin²s) traces h x²/a² back and forth.
            let h = if kind == TrajectoryKind::ParabolaXy { a * lit(0.5) } else { a * lit(0.25) };
            let (q, dq, ddq) = (h * sn * sn, h * s2, two * h * c2);
            let (p, dp, ddp) = if kind == TrajectoryKind::ParabolaXy {
                (v(a * sn, q, z), v(a * cs, dq, z), v(-a * sn, ddq, z))
            } else {
                (v(a * sn, z, q), v(a * cs, z, dq), v(-a * sn, z, ddq))
            };
            PathPoint { p, dp, ddp }
        }
        TrajectoryKind::WarpedEllipse => {
            let (b, c) = (a * lit(0.5), a * lit(0.125));
            PathPoint {
                p: v(a * cs, b * sn, c * s2),
                dp: v(-a * sn, b * cs, two * c * c2),
                ddp: v(-a * cs, -b * sn, -lit::<T>(4.0) * c * s2),
            }
        }
    }
}

/// Quintic smoothstep and its derivative.
fn smoothstep<T: Real>(u: T) -> (T, T) {
    let u = u.clamp(T::zero(), T::one());
    let (u2, u3) = (u * u, u * u * u);
    let f = u3 * (lit::<T>(10.0) - lit::<T>(15.0) * u + lit::<T>(6.0) * u2);
    let df = lit::<T>(30.0) * u2 * (T::one() - u) * (T::one() - u);
    (f, df)
}

/// Integral of [`smoothstep`] from 0 to `u`.
fn smoothstep_integral<T: Real>(u: T) -> T {
    let u = u.clamp(T::zero(), T::one());
    let u4 = u * u * u * u;
    u4 * (lit::<T>(2.5) - lit::<T>(3.0) * u + u * u)
}

/// A validated trajectory ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    spec: TrajectorySpec<T>,
    rate: T,
    ramp: T,
    travel: T,
    motion_end: T,
    duration: T,
}

impl<T: Real> Trajectory<T> {
    pub fn new(spec: TrajectorySpec<T>) -> Result<Self> {
        let bad = |m: &str| Err(Error::ConfigInvalid(format!("trajectory: {m}")));
        if !(spec.peak_speed > T::zero()) {
            return bad("peak speed must be positive");
        }
        if !(spec.scale > T::zero()) {
            return bad("scale must be positive");
        }
        if !(spec.ramp >= T::zero()) {
            return bad("ramp must be non-negative");
        }
        if spec.kind.is_closed() && spec.laps == 0 {
            return bad("laps must be at least 1");
        }
        if !spec.center.iter().all(|c| c.is_finite()) {
            return bad("center must be finite");
        }

        let (rate, ramp, travel, motion_end) = if spec.kind == TrajectoryKind::Hover {
            (T::zero(), T::zero(), T::zero(), T::zero())
        } else {
            let period = if spec.kind.is_closed() { T::two_pi() } else { T::one() };
            let mut fastest = T::zero();
            for k in 0..=PATH_SAMPLES {
                let s = period * lit(k as f64 / PATH_SAMPLES as f64);
                fastest = fastest.max(path_point(spec.kind, spec.scale, s).dp.norm());
            }
            let rate = spec.peak_speed / fastest;
            let travel = if spec.kind.is_closed() { period * lit(spec.laps as f64) } else { period };
            // Short paths shrink the ramps so the peak rate is still reached.
            let ramp = spec.ramp.min(travel / rate);
            let cruise = travel / rate - ramp;
            (rate, ramp, travel, cruise + ramp + ramp)
        };
        let duration = match spec.duration {
            Some(d) if d >= motion_end => d,
            Some(d) => {
                return Err(Error::ConfigInvalid(format!(
                    "trajectory: duration {} s shorter than the motion ({} s)",
                    to_f64(d),
                    to_f64(motion_end)
                )))
            }
            None if spec.kind == TrajectoryKind::Hover => return bad("hover needs an explicit duration"),
            None => motion_end,
        };
        let traj = Self { spec, rate, ramp, travel, motion_end, duration };
        traj.check_arena()?;
        Ok(traj)
    }

    fn check_arena(&self) -> Result<()> {
        let half = self.spec.arena * lit::<T>(0.5);
        let period = if self.spec.kind.is_closed() { T::two_pi() } else { T::one() };
        for k in 0..=PATH_SAMPLES {
            let s = period * lit(k as f64 / PATH_SAMPLES as f64);
            let p = self.spec.center + path_point(self.spec.kind, self.spec.scale, s).p;
            if p.x.abs() > half.x || p.y.abs() > half.y || p.z < T::zero() || p.z > self.spec.arena.z {
                return Err(Error::ConfigInvalid(format!(
                    "trajectory leaves the arena at ({:.2}, {:.2}, {:.2})",
                    to_f64(p.x),
                    to_f64(p.y),
                    to_f64(p.z)
                )));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &TrajectorySpec<T> {
        &self.spec
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    /// Time at which the vehicle comes to rest at the end of the path.
    pub fn motion_end(&self) -> T {
        self.motion_end
    }

    /// Length of the speed ramps actually used, s.
    pub fn ramp(&self) -> T {
        self.ramp
    }

    /// Path parameter and its first two time derivatives at time `t`.
    fn timing(&self, t: T) -> (T, T, T) {
        let (r, m) = (self.ramp, self.rate);
        if self.rate == T::zero() || t >= self.motion_end {
            return (self.travel, T::zero(), T::zero());
        }
        if r > T::zero() && t < r {
            let (f, df) = smoothstep(t / r);
            return (m * r * smoothstep_integral(t / r), m * f, m * df / r);
        }
        let down = self.motion_end - r;
        if r > T::zero() && t > down {
            let u = (self.motion_end - t) / r;
            let (f, df) = smoothstep(u);
            return (self.travel - m * r * smoothstep_integral(u), m * f, -m * df / r);
        }
        (m * (r * lit(0.5) + (t - r)), m, T::zero())
    }

    /// Flat setpoint at time `t ∈ [0, duration]`.
    pub fn sample(&self, t: T) -> Result<FlatSetpoint<T>> {
        if !(t >= T::zero() && t <= self.duration) {
            return Err(Error::OutOfRange { t: to_f64(t), duration: to_f64(self.duration) });
        }
        let (s, sd, sdd) = self.timing(t);
        let pp = path_point(self.spec.kind, self.spec.scale, s);
        Ok(FlatSetpoint {
            position: self.spec.center + pp.p,
            velocity: pp.dp * sd,
            acceleration: pp.ddp * (sd * sd) + pp.dp * sdd,
            yaw: T::zero(),
        })
    }

    pub fn start(&self) -> Vector3<T> {
        self.spec.center + path_point(self.spec.kind, self.spec.scale, T::zero()).p
    }
}

/// Tracking statistics over a window of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingReport<T: Real> {
    /// m
    pub xy_rmse: T,
    /// m
    pub z_rmse: T,
    /// m
    pub max_position_error: T,
    /// deg
    pub max_tilt_deg: T,
    /// m/s
    pub max_speed: T,
}

/// One tracking sample: actual and reference position, tilt (rad), speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSample<T: Real> {
    pub position: Vector3<T>,
    pub reference: Vector3<T>,
    pub tilt: T,
    pub speed: T,
}

impl<T: Real> TrackingReport<T> {
    pub fn from_samples<I: IntoIterator<Item = TrackingSample<T>>>(samples: I) -> Result<Self> {
        let (mut n, mut sxy, mut sz) = (0usize, T::zero(), T::zero());
        let mut report = TrackingReport {
            xy_rmse: T::zero(),
            z_rmse: T::zero(),
            max_position_error: T::zero(),
            max_tilt_deg: T::zero(),
            max_speed: T::zero(),
        };
        for s in samples {
            let e = s.position - s.reference;
            n += 1;
            sxy += e.x * e.x + e.y * e.y;
            sz += e.z * e.z;
            report.max_position_error = report.max_position_error.max(e.norm());
            report.max_tilt_deg = report.max_tilt_deg.max(s.tilt * lit::<T>(180.0) / T::pi());
            report.max_speed = report.max_speed.max(s.speed);
        }
        if n == 0 {
            return Err(Error::EmptyLog);
        }
        let count: T = lit(n as f64);
        report.xy_rmse = (sxy / count).sqrt();
        report.z_rmse = (sz / count).sqrt();
        Ok(report)
    }
}
