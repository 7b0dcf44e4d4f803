//! Rotational drag analysis: the relation between yaw torque, drag
//! coefficient, effective area and the steady spin rate of a vehicle flying
//! without yaw control.
//!
//! Drag on the outermost point moving at `v = Ω₃ d` is
//! `F = ½ k_z ρ A v²`; four such points give `τ = 4 d F`, so at steady state
//! `τ_yaw = 2 k_z ρ A d³ Ω₃²`.

use serde::{Deserialize, Serialize};

use crate::allocation::speed_to_thrust;
use crate::dynamics::QuadrotorParams;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// `k_z` from a measured yaw torque and steady yaw rate.
pub fn estimate_drag_coefficient<T: Real>(tau_yaw: T, omega3: T, rho: T, area: T, arm: T) -> Result<T> {
    if !(omega3 > T::zero()) {
        return Err(Error::ZeroRate(to_f64(omega3)));
    }
    if !(area > T::zero() && rho > T::zero() && arm > T::zero()) {
        return Err(Error::InvalidParams("density, area and arm length must be positive".into()));
    }
    let tip_speed = omega3 * arm;
    let force = tau_yaw / (lit::<T>(4.0) * arm);
    Ok(lit::<T>(2.0) * force / (rho * area * tip_speed * tip_speed))
}

/// Steady yaw rate at which drag balances `tau_yaw`.
pub fn predict_steady_yaw_rate<T: Real>(tau_yaw: T, k_z: T, rho: T, area: T, arm: T) -> Result<T> {
    if !(k_z * area > T::zero()) {
        return Err(Error::ZeroDrag);
    }
    if !(tau_yaw >= T::zero() && rho > T::zero() && arm > T::zero()) {
        return Err(Error::InvalidParams("need tau >= 0, density > 0, arm length > 0".into()));
    }
    Ok((tau_yaw / (lit::<T>(2.0) * k_z * rho * area * arm * arm * arm)).sqrt())
}

/// Reaction torque of a hovering vehicle whose two opposing rotors in
/// `failed_pair` sit at idle while the other pair carries the remaining
/// weight.
pub fn dual_failure_yaw_torque<T: Real>(params: &QuadrotorParams<T>, failed_pair: [usize; 2]) -> T {
    let idle = speed_to_thrust(params.idle_speed, params);
    let live: Vec<usize> = (0..4).filter(|i| !failed_pair.contains(i)).collect();
    let carried = (params.weight() - idle * lit(2.0)) / lit(2.0);
    let ratio = params.torque_ratio();
    let live_torque = live.iter().fold(T::zero(), |acc, &i| acc + params.spin[i] * ratio * carried);
    let idle_torque = failed_pair.iter().fold(T::zero(), |acc, &i| acc + params.spin[i] * ratio * idle);
    (live_torque + idle_torque).abs()
}

/// Yaw-rate interval in which the spinning vehicle is both controllable
/// and within the gyroscope range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllabilityBand {
    /// rad/s
    pub min_rate: f64,
    /// rad/s
    pub max_rate: f64,
    pub k_z_low: f64,
    pub k_z_high: f64,
}

impl Default for ControllabilityBand {
    fn default() -> Self {
        Self { min_rate: 10.0, max_rate: 35.0, k_z_low: 0.05, k_z_high: 0.35 }
    }
}

impl ControllabilityBand {
    pub fn validate(&self) -> Result<()> {
        if self.min_rate < self.max_rate && self.k_z_low <= self.k_z_high {
            Ok(())
        } else {
            Err(Error::ConfigInvalid("controllability band needs min < max".into()))
        }
    }

    pub fn contains(&self, omega3: f64) -> bool {
        omega3 >= self.min_rate && omega3 <= self.max_rate
    }
}

/// How added plate area changes the airframe's drag.
///
/// Plates add to the effective area one-to-one with their own coefficient,
/// so the combined coefficient is the area-weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DragModel {
    /// Area of the bare airframe, m².
    pub base_area: f64,
    pub base_k_z: f64,
    /// Coefficient of added flat plates.
    pub plate_k_z: f64,
}

impl Default for DragModel {
    fn default() -> Self {
        let p = QuadrotorParams::<f64>::default();
        Self { base_area: p.drag_area, base_k_z: p.yaw_drag_coeff, plate_k_z: 1.2 }
    }
}

impl DragModel {
    pub fn validate(&self) -> Result<()> {
        if self.base_area > 0.0 && self.base_k_z >= 0.0 && self.plate_k_z >= 0.0 {
            Ok(())
        } else {
            Err(Error::ConfigInvalid("drag model needs base area > 0 and non-negative coefficients".into()))
        }
    }

    /// Effective `(A, k_z)` with `added` m² of plates.
    pub fn effective(&self, added: f64) -> (f64, f64) {
        let area = self.base_area + added;
        (area, (self.base_k_z * self.base_area + self.plate_k_z * added) / area)
    }
}

/// One row of a drag sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragConfiguration {
    /// m²
    pub added_area: f64,
    /// m²
    pub effective_area: f64,
    /// Coefficient backed out of the simulated steady state.
    pub k_z: f64,
    /// Mean steady yaw rate, rad/s.
    pub omega3: f64,
    pub in_band: bool,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::drag_moment;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    #[test]
    fn estimate_inverts_the_worked_example() {
        let k = estimate_drag_coefficient(9.8e-3, 20.0, 1.225, 0.05, 0.1).unwrap();
        assert_relative_eq!(k, 0.2, max_relative = 1e-12);
        let k2 = estimate_drag_coefficient(9.8e-3, 20.0, 1.225, 0.1, 0.1).unwrap();
        assert_relative_eq!(k2, 0.1, max_relative = 1e-12);
        assert!(matches!(estimate_drag_coefficient(1.0, 0.0, 1.2, 0.1, 0.1), Err(Error::ZeroRate(_))));
    }

    #[test]
    fn round_trip_with_forward_model() {
        let mut p = QuadrotorParams::<f64>::default();
        for &k in &[0.02, 0.05, 0.137, 0.35, 0.5] {
            p.yaw_drag_coeff = k;
            let omega = 23.7;
            let tau = -drag_moment(&Vector3::new(0.0, 0.0, omega), &p).z;
            let back = estimate_drag_coefficient(tau, omega, p.air_density, p.drag_area, p.arm_length).unwrap();
            assert!((back - k).abs() <= 1e-12);
            let rate = predict_steady_yaw_rate(tau, back, p.air_density, p.drag_area, p.arm_length).unwrap();
            assert!((rate - omega).abs() <= 1e-12 * omega);
        }
    }

    #[test]
    fn quadrupled_coefficient_halves_rate() {
        let a = predict_steady_yaw_rate(0.08, 0.05, 1.225, 0.5, 0.105).unwrap();
        let b = predict_steady_yaw_rate(0.08, 0.2, 1.225, 0.5, 0.105).unwrap();
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-12);
        assert!(matches!(predict_steady_yaw_rate(0.08, 0.0, 1.225, 0.5, 0.105), Err(Error::ZeroDrag)));
    }

    #[test]
    fn band_endpoints_on_default_platform() {
        let p = QuadrotorParams::<f64>::default();
        let tau = dual_failure_yaw_torque(&p, [0, 2]);
        let fast = predict_steady_yaw_rate(tau, 0.05, p.air_density, p.drag_area, p.arm_length).unwrap();
        let slow = predict_steady_yaw_rate(tau, 0.35, p.air_density, p.drag_area, p.arm_length).unwrap();
        assert_relative_eq!(fast / slow, 7f64.sqrt(), max_relative = 1e-12);
        assert!(fast <= 35.0);
    }

    #[test]
    fn plates_raise_drag_monotonically() {
        let m = DragModel::default();
        let mut last = 0.0;
        for k in 0..10 {
            let (a, kz) = m.effective(0.02 * k as f64);
            assert!(a * kz > last);
            last = a * kz;
        }
    }
}
