//! Rotor fault detection: an L1-style state predictor whose disturbance
//! estimate is turned into per-rotor damage, refined by a small
//! box-constrained least-squares fit, and used to trigger the switch to
//! fault-tolerant control.
//!
//! The predictor runs on the vertical velocity and the body rates. Its
//! disturbance estimate is expressed as a body wrench
//! `[F1, F2, F3, M1, M2, M3]`; only `F3` (along `b3`) and the moments are
//! estimated, the horizontal force channels stay zero.

use nalgebra::{DMatrix, DVector, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::allocation::{effectiveness_matrix, solve_box_qp, speed_to_thrust, wrench_row_scale};
use crate::control::ControlMode;
use crate::dynamics::{drag_moment, QuadrotorParams, RigidBodyState, Wrench, ROTOR_COUNT};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::so3::thrust_axis;

/// How [`damage_from_ratio`] turns speeds into damage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageFormula {
    /// `100 (1 - ω²/ω_L1²)`: 0 for a healthy rotor, 100 for a dead one.
    #[default]
    HealthRatio,
    /// `100 k_f ω²/ω_L1²`, kept for comparison with the printed form.
    Literal,
}

/// Detector tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Damage (% thrust loss) above which a rotor counts as failed.
    pub threshold: f64,
    /// Consecutive control steps above threshold before switching.
    pub persistence: usize,
    /// Predictor error feedback `a_s`, 1/s.
    pub adaptation_rate: f64,
    /// Cutoff of the augmentation low-pass filter, Hz.
    pub filter_cutoff_hz: f64,
    /// Residual samples averaged by the refinement.
    pub residual_window: usize,
    /// Pull of the refinement towards the ratio-based prior.
    pub regularization: f64,
    pub formula: DamageFormula,
    /// When false the detector only monitors; the mode never changes.
    pub switching: bool,
    /// After the switch the estimate only moves once every rotor's nominal
    /// thrust has stayed within this fraction of maximum thrust of its
    /// window mean for `settle_steps` consecutive steps.
    pub settle_band: f64,
    pub settle_steps: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: 50.0,
            persistence: 25,
            adaptation_rate: 2.0,
            filter_cutoff_hz: 5.0,
            residual_window: 10,
            regularization: 0.1,
            formula: DamageFormula::HealthRatio,
            switching: true,
            settle_band: 0.1,
            settle_steps: 50,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(format!("detector: {m}")));
        if !(self.threshold > 0.0 && self.threshold < 100.0) {
            return bad("threshold must lie in (0, 100)");
        }
        if self.persistence == 0 || self.residual_window == 0 {
            return bad("persistence and residual window must be at least 1");
        }
        if !(self.adaptation_rate > 0.0 && self.filter_cutoff_hz > 0.0) {
            return bad("adaptation rate and filter cutoff must be positive");
        }
        if !(self.regularization >= 0.0) {
            return bad("regularization must be non-negative");
        }
        if !(self.settle_band > 0.0) {
            return bad("settle band must be positive");
        }
        Ok(())
    }
}

/// Predictor, disturbance estimate and filtered augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorState<T: Real> {
    /// Predicted inertial vertical velocity, m/s.
    pub velocity_z: T,
    /// Predicted body rates, rad/s.
    pub omega: Vector3<T>,
    /// Disturbance estimate, body wrench (N, N·m).
    pub sigma: Vector6<T>,
    /// Low-pass filtered disturbance, body wrench.
    pub filtered: Vector6<T>,
    last: Option<RigidBodyState<T>>,
    error: Vector4<T>,
}

impl<T: Real> Default for PredictorState<T> {
    fn default() -> Self {
        Self {
            velocity_z: T::zero(),
            omega: Vector3::zeros(),
            sigma: Vector6::zeros(),
            filtered: Vector6::zeros(),
            last: None,
            error: Vector4::zeros(),
        }
    }
}

impl<T: Real> PredictorState<T> {
    /// Correction that cancels the estimated disturbance.
    pub fn augmentation(&self) -> Vector6<T> {
        -self.filtered
    }

    /// Disturbance as `[F3, M1, M2, M3]`.
    pub fn residual(&self) -> Vector4<T> {
        Vector4::new(self.sigma[2], self.sigma[3], self.sigma[4], self.sigma[5])
    }
}

/// Nominal `[v̇_z, Ω̇]` of the rigid body under `wrench`.
fn nominal_rates<T: Real>(s: &RigidBodyState<T>, wrench: &Wrench<T>, params: &QuadrotorParams<T>) -> Vector4<T> {
    let az = wrench.thrust / params.mass * thrust_axis(&s.rotation).z - params.gravity;
    let j = &params.inertia;
    let w = &s.omega;
    let dw = params.inertia_inverse() * (wrench.moment - w.cross(&(j * w)) + drag_moment(w, params));
    Vector4::new(az, dw.x, dw.y, dw.z)
}

/// Advances the predictor to the new measurement.
///
/// `applied` is the nominal wrench of the commands held since the previous
/// call. The predictor follows the nominal model plus the current
/// disturbance estimate, with error feedback `-a_s (x̂ - x)`; the estimate is
/// then reset by the piecewise-constant adaptation law so that it cancels
/// the prediction error over one step, and finally low-pass filtered.
pub fn predictor_step<T: Real>(
    predictor: &PredictorState<T>,
    measured: &RigidBodyState<T>,
    applied: &Wrench<T>,
    params: &QuadrotorParams<T>,
    config: &DetectorConfig,
    dt: T,
) -> PredictorState<T> {
    let x = Vector4::new(measured.velocity.z, measured.omega.x, measured.omega.y, measured.omega.z);
    let Some(last) = predictor.last else {
        return PredictorState { velocity_z: x[0], omega: measured.omega, last: Some(*measured), ..*predictor };
    };
    let a: T = lit(config.adaptation_rate);
    let decay = (-a * dt).exp();
    let nominal = (nominal_rates(&last, applied, params) + nominal_rates(measured, applied, params)) * lit::<T>(0.5);
    let accel_sigma = disturbance_to_rates(&predictor.sigma, &last, params);
    let x_prev = Vector4::new(predictor.velocity_z, predictor.omega.x, predictor.omega.y, predictor.omega.z);
    let x_hat = x_prev + (nominal + accel_sigma) * dt - predictor.error * (T::one() - decay);
    let error = x_hat - x;
    let gain = a * decay / (T::one() - decay);
    let accel_est = -error * gain;
    let sigma = rates_to_disturbance(&accel_est, measured, params);
    let alpha = T::one() - (-T::two_pi() * lit::<T>(config.filter_cutoff_hz) * dt).exp();
    let filtered = predictor.filtered + (sigma - predictor.filtered) * alpha;
    PredictorState {
        velocity_z: x_hat[0],
        omega: Vector3::new(x_hat[1], x_hat[2], x_hat[3]),
        sigma,
        filtered,
        last: Some(*measured),
        error,
    }
}

fn rates_to_disturbance<T: Real>(accel: &Vector4<T>, s: &RigidBodyState<T>, params: &QuadrotorParams<T>) -> Vector6<T> {
    let bz = thrust_axis(&s.rotation).z;
    let force = if bz.abs() > lit(1e-3) { params.mass * accel[0] / bz } else { T::zero() };
    let m = params.inertia * Vector3::new(accel[1], accel[2], accel[3]);
    Vector6::new(T::zero(), T::zero(), force, m.x, m.y, m.z)
}

fn disturbance_to_rates<T: Real>(sigma: &Vector6<T>, s: &RigidBodyState<T>, params: &QuadrotorParams<T>) -> Vector4<T> {
    let az = sigma[2] / params.mass * thrust_axis(&s.rotation).z;
    let dw = params.inertia_inverse() * Vector3::new(sigma[3], sigma[4], sigma[5]);
    Vector4::new(az, dw.x, dw.y, dw.z)
}

/// Adds the augmentation wrench to `baseline` in squared-speed space.
pub fn augmented_rotor_speeds<T: Real>(
    baseline: &[T; ROTOR_COUNT],
    augmentation: &Vector6<T>,
    params: &QuadrotorParams<T>,
) -> [T; ROTOR_COUNT] {
    let b = effectiveness_matrix(params);
    let demand = Vector4::new(augmentation[2], augmentation[3], augmentation[4], augmentation[5]);
    let extra = b.try_inverse().map(|inv| inv * demand).unwrap_or_else(Vector4::zeros);
    let max_sq = params.max_speed * params.max_speed;
    std::array::from_fn(|i| {
        let sq = baseline[i] * baseline[i] + extra[i] / params.thrust_coeff;
        sq.clamp(T::zero(), max_sq).sqrt()
    })
}

/// Per-rotor damage estimate in percent thrust loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageEstimate<T: Real> {
    pub damage: [T; ROTOR_COUNT],
    /// Residual samples behind the estimate.
    pub samples: usize,
    pub time: T,
}

impl<T: Real> Default for DamageEstimate<T> {
    fn default() -> Self {
        Self { damage: [T::zero(); ROTOR_COUNT], samples: 0, time: T::zero() }
    }
}

impl<T: Real> DamageEstimate<T> {
    pub fn max(&self) -> (usize, T) {
        (0..ROTOR_COUNT)
            .fold((0, self.damage[0]), |(bi, bd), i| if self.damage[i] > bd { (i, self.damage[i]) } else { (bi, bd) })
    }

    /// Damage converted to the equivalent loss of rotor speed, percent.
    pub fn speed_loss(&self) -> [T; ROTOR_COUNT] {
        let h: T = lit(100.0);
        self.damage.map(|d| h * (T::one() - (T::one() - d / h).max(T::zero()).sqrt()))
    }
}

/// Damage from the ratio of commanded to adaptation-augmented speeds.
/// A rotor with zero augmented speed is reported fully damaged.
pub fn damage_from_ratio<T: Real>(
    omega: &[T; ROTOR_COUNT],
    omega_l1: &[T; ROTOR_COUNT],
    params: &QuadrotorParams<T>,
    formula: DamageFormula,
) -> [T; ROTOR_COUNT] {
    let h: T = lit(100.0);
    std::array::from_fn(|i| {
        if !(omega_l1[i] > T::zero()) {
            return h;
        }
        let ratio = omega[i] * omega[i] / (omega_l1[i] * omega_l1[i]);
        let d = match formula {
            DamageFormula::HealthRatio => h * (T::one() - ratio.clamp(T::zero(), T::one())),
            DamageFormula::Literal => h * params.thrust_coeff * ratio,
        };
        d.clamp(T::zero(), h)
    })
}

/// One residual sample: disturbance `[F3, M1, M2, M3]` and the nominal
/// per-rotor thrust that was commanded while it was observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample<T: Real> {
    pub residual: Vector4<T>,
    pub nominal_thrust: [T; ROTOR_COUNT],
}

/// Least-squares refinement of a damage prior against recent residuals.
///
/// Finds thrust-loss fractions `λ ∈ [0, 1]⁴` minimising the mean of
/// `|r_k - S_k λ|²` plus `μ |λ - prior/100|²`, where column `i` of `S_k` is
/// the wrench lost when rotor `i` loses all of its nominal thrust. Rows are
/// scaled to thrust-equivalent newtons.
///
/// A damaged motor never drops below idle: once `λ T_nominal` exceeds
/// `T_nominal - T_idle` the rotor delivers idle thrust whatever λ is. The
/// model is linearised at the prior, so a sample in which the prior puts a
/// rotor on its idle floor contributes a fixed residual and no information
/// about that rotor, and the estimate stays at the prior.
pub fn try_refine_damage<T: Real>(
    prior: &DamageEstimate<T>,
    window: &[ResidualSample<T>],
    params: &QuadrotorParams<T>,
    regularization: T,
) -> Result<DamageEstimate<T>> {
    if window.is_empty() {
        return Err(Error::IllConditioned);
    }
    let b = effectiveness_matrix(params);
    let scale = wrench_row_scale(params);
    let h100: T = lit(100.0);
    let n: T = lit(window.len() as f64);
    let mut h = DMatrix::<T>::zeros(ROTOR_COUNT, ROTOR_COUNT);
    let mut g = DVector::<T>::zeros(ROTOR_COUNT);
    let idle = speed_to_thrust(params.idle_speed, params);
    let at_floor = |t: T, i: usize| {
        let lam = prior.damage[i] / h100;
        lam > T::zero() && lam * t >= t - idle
    };
    for sample in window {
        let t = &sample.nominal_thrust;
        let floor: [bool; ROTOR_COUNT] = std::array::from_fn(|i| at_floor(t[i], i));
        let s =
            DMatrix::from_fn(4, ROTOR_COUNT, |r, c| if floor[c] { T::zero() } else { -b[(r, c)] * t[c] * scale[r] });
        let r = DVector::from_fn(4, |row, _| {
            let fixed =
                (0..ROTOR_COUNT).filter(|&i| floor[i]).fold(T::zero(), |acc, i| acc - b[(row, i)] * (t[i] - idle));
            (sample.residual[row] - fixed) * scale[row]
        });
        h += s.transpose() * &s / n;
        g += s.transpose() * r / n;
    }
    let prior_frac = DVector::from_fn(ROTOR_COUNT, |i, _| (prior.damage[i] / h100).clamp(T::zero(), T::one()));
    h += DMatrix::identity(ROTOR_COUNT, ROTOR_COUNT) * regularization;
    g += prior_frac * regularization;
    if !h.iter().chain(g.iter()).all(|x| x.is_finite()) || h.clone().cholesky().is_none() {
        return Err(Error::IllConditioned);
    }
    let lam = solve_box_qp(&h, &g, &DVector::zeros(ROTOR_COUNT), &DVector::from_element(ROTOR_COUNT, T::one()))
        .ok_or(Error::IllConditioned)?;
    Ok(DamageEstimate {
        damage: std::array::from_fn(|i| lam[i].clamp(T::zero(), T::one()) * h100),
        samples: window.len(),
        time: prior.time,
    })
}

/// [`try_refine_damage`], falling back to the prior.
pub fn refine_damage<T: Real>(
    prior: &DamageEstimate<T>,
    window: &[ResidualSample<T>],
    params: &QuadrotorParams<T>,
    regularization: T,
) -> DamageEstimate<T> {
    try_refine_damage(prior, window, params, regularization).unwrap_or(*prior)
}

/// Latching threshold-with-persistence switch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwitchState {
    /// Consecutive steps with some rotor above threshold.
    pub streak: usize,
    pub mode: ControlMode,
    /// Rotors above threshold when the switch happened.
    pub failed: Option<[bool; ROTOR_COUNT]>,
}

impl SwitchState {
    pub fn update<T: Real>(&mut self, estimate: &DamageEstimate<T>, config: &DetectorConfig) -> ControlMode {
        if self.mode == ControlMode::FaultTolerant {
            return self.mode;
        }
        let threshold: T = lit(config.threshold);
        let over = estimate.damage.map(|d| d > threshold);
        if over.iter().any(|&o| o) {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if config.switching && self.streak >= config.persistence {
            self.mode = ControlMode::FaultTolerant;
            self.failed = Some(over);
        }
        self.mode
    }
}

/// Pure form of [`SwitchState::update`] over a history of estimates.
pub fn switch_decision<T: Real>(history: &[DamageEstimate<T>], config: &DetectorConfig) -> ControlMode {
    let mut s = SwitchState::default();
    for e in history {
        s.update(e, config);
    }
    s.mode
}

/// Everything the detector knows, updated once per control step.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultDetector<T: Real> {
    pub config: DetectorConfig,
    pub predictor: PredictorState<T>,
    pub prior: DamageEstimate<T>,
    pub estimate: DamageEstimate<T>,
    pub switch: SwitchState,
    window: VecDeque<ResidualSample<T>>,
    /// Consecutive steps with a quasi-steady residual window.
    settled: usize,
}

impl<T: Real> FaultDetector<T> {
    pub fn new(config: DetectorConfig) -> Self {
        Self {
            config,
            predictor: PredictorState::default(),
            prior: DamageEstimate::default(),
            estimate: DamageEstimate::default(),
            switch: SwitchState::default(),
            window: VecDeque::with_capacity(config.residual_window),
            settled: 0,
        }
    }

    /// Processes one control step.
    ///
    /// `applied` and `nominal_speeds` describe the commands held since the
    /// last call under the healthy motor model; `baseline` and `augmented`
    /// are the controller's speeds before and after adaptation.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        time: T,
        measured: &RigidBodyState<T>,
        applied: &Wrench<T>,
        nominal_speeds: &[[T; ROTOR_COUNT]],
        baseline: &[T; ROTOR_COUNT],
        augmented: &[T; ROTOR_COUNT],
        params: &QuadrotorParams<T>,
        dt: T,
    ) -> ControlMode {
        let warm = self.predictor.last.is_some();
        self.predictor = predictor_step(&self.predictor, measured, applied, params, &self.config, dt);
        if !warm {
            return self.switch.mode;
        }
        let count: T = lit(nominal_speeds.len().max(1) as f64);
        let nominal_thrust = std::array::from_fn(|i| {
            nominal_speeds.iter().fold(T::zero(), |acc, w| acc + speed_to_thrust(w[i], params)) / count
        });
        if self.window.len() == self.config.residual_window {
            self.window.pop_front();
        }
        self.window.push_back(ResidualSample { residual: self.predictor.residual(), nominal_thrust });

        // Without augmentation the speed ratio carries no information, so
        // after the switch the previous estimate serves as the prior.
        let previous = self.estimate;
        self.prior = match self.switch.mode {
            ControlMode::Standard => DamageEstimate {
                damage: damage_from_ratio(baseline, augmented, params, self.config.formula),
                time,
                ..DamageEstimate::default()
            },
            ControlMode::FaultTolerant => DamageEstimate { samples: 0, ..previous },
        };
        let band = params.max_rotor_thrust() * lit(self.config.settle_band);
        let n: T = lit(self.window.len() as f64);
        let steady = (0..ROTOR_COUNT).all(|i| {
            let mean = self.window.iter().fold(T::zero(), |acc, s| acc + s.nominal_thrust[i]) / n;
            self.window.iter().all(|s| (s.nominal_thrust[i] - mean).abs() <= band)
        });
        self.settled = if steady { self.settled + 1 } else { 0 };
        let full = self.window.len() == self.config.residual_window;
        self.estimate = match self.switch.mode {
            ControlMode::Standard if full => {
                let samples: Vec<_> = self.window.iter().copied().collect();
                refine_damage(&self.prior, &samples, params, lit(self.config.regularization))
            }
            ControlMode::Standard => self.prior,
            ControlMode::FaultTolerant if full && self.settled >= self.config.settle_steps => {
                let samples: Vec<_> = self.window.iter().copied().collect();
                refine_damage(&self.prior, &samples, params, lit(self.config.regularization))
            }
            ControlMode::FaultTolerant => self.prior,
        };
        self.estimate.time = time;
        self.switch.update(&self.estimate, &self.config)
    }

    pub fn mode(&self) -> ControlMode {
        self.switch.mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_body, rotor_wrench};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> QuadrotorParams<f64> {
        QuadrotorParams::default()
    }

    /// Runs the predictor on a hovering body perturbed by `offset`.
    fn run_with_offset(offset: Wrench<f64>, seconds: f64) -> PredictorState<f64> {
        let p = params();
        let cfg = DetectorConfig::default();
        let nominal = rotor_wrench(&[p.hover_speed(); 4], &p);
        let truth = Wrench { thrust: nominal.thrust + offset.thrust, moment: nominal.moment + offset.moment };
        let mut body = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 2.0));
        let mut pred = predictor_step(&PredictorState::default(), &body, &nominal, &p, &cfg, 2e-3);
        for _ in 0..(seconds / 2e-3) as usize {
            body = integrate_body(&body, &truth, &p, 1e-3);
            body = integrate_body(&body, &truth, &p, 1e-3);
            pred = predictor_step(&pred, &body, &nominal, &p, &cfg, 2e-3);
        }
        pred
    }

    #[test]
    fn no_disturbance_means_no_estimate() {
        let pred = run_with_offset(Wrench::zero(), 0.5);
        assert!(pred.sigma.norm() < 1e-6);
    }

    #[test]
    fn constant_yaw_moment_is_recovered() {
        let offset = Wrench { thrust: 0.0, moment: Vector3::new(0.0, 0.0, 0.01) };
        let pred = run_with_offset(offset, 1.0);
        assert!(pred.sigma[5] > 0.009 && pred.sigma[5] < 0.011, "{}", pred.sigma[5]);
        assert!(pred.filtered[5] > 0.009 && pred.filtered[5] < 0.011);
    }

    #[test]
    fn thrust_deficit_is_recovered() {
        let offset = Wrench { thrust: -0.4, moment: Vector3::zeros() };
        let pred = run_with_offset(offset, 1.0);
        assert_relative_eq!(pred.sigma[2], -0.4, max_relative = 0.01);
    }

    #[test]
    fn augmentation_rise_time_matches_filter() {
        let p = params();
        let cfg = DetectorConfig::default();
        let nominal = rotor_wrench(&[p.hover_speed(); 4], &p);
        let truth = Wrench { thrust: nominal.thrust, moment: Vector3::new(0.02, 0.0, 0.0) };
        let mut body = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 2.0));
        let mut pred = predictor_step(&PredictorState::default(), &body, &nominal, &p, &cfg, 2e-3);
        let target = 1.0 - (-1.0f64).exp();
        let mut rise = None;
        for k in 1..100 {
            body = integrate_body(&body, &truth, &p, 1e-3);
            body = integrate_body(&body, &truth, &p, 1e-3);
            pred = predictor_step(&pred, &body, &nominal, &p, &cfg, 2e-3);
            if rise.is_none() && pred.filtered[3] >= target * 0.02 {
                rise = Some(k as f64 * 2e-3);
            }
        }
        let expected = 1.0 / (2.0 * std::f64::consts::PI * cfg.filter_cutoff_hz);
        let rise = rise.expect("filter never rose");
        assert!((rise - expected).abs() <= 0.2 * expected, "rise {rise} vs {expected}");
    }

    #[test]
    fn augmentation_examples() {
        let p = params();
        let base = [10_000.0, 11_000.0, 12_000.0, 9_000.0];
        assert_eq!(augmented_rotor_speeds(&base, &Vector6::zeros(), &p), base);
        let aug = Vector6::new(0.0, 0.0, 0.5, 0.0, 0.0, 0.0);
        let out = augmented_rotor_speeds(&base, &aug, &p);
        for i in 0..4 {
            assert_relative_eq!(
                out[i] * out[i],
                base[i] * base[i] + 0.5 / (4.0 * p.thrust_coeff),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn ratio_examples() {
        let p = params();
        let w = [10_000.0; 4];
        assert_eq!(damage_from_ratio(&w, &w, &p, DamageFormula::HealthRatio), [0.0; 4]);
        let l1 = [10_000.0 * 2f64.sqrt(), 10_000.0, 10_000.0, 10_000.0];
        assert_relative_eq!(damage_from_ratio(&w, &l1, &p, DamageFormula::HealthRatio)[0], 50.0, epsilon = 1e-9);
        let huge = [1e12, 10_000.0, 10_000.0, 10_000.0];
        assert!(damage_from_ratio(&w, &huge, &p, DamageFormula::HealthRatio)[0] > 99.999);
        let zero = [0.0, 10_000.0, 10_000.0, 10_000.0];
        assert_eq!(damage_from_ratio(&w, &zero, &p, DamageFormula::HealthRatio)[0], 100.0);
        let lit = damage_from_ratio(&w, &w, &p, DamageFormula::Literal)[0];
        assert_relative_eq!(lit, 100.0 * p.thrust_coeff, max_relative = 1e-12);
    }

    fn synthetic_residual(loss: [f64; 4], thrust: [f64; 4]) -> ResidualSample<f64> {
        let p = params();
        let b = effectiveness_matrix(&p);
        let lost = Vector4::from_fn(|i, _| -loss[i] * thrust[i]);
        ResidualSample { residual: b * lost, nominal_thrust: thrust }
    }

    /// Projected gradient descent on the refinement objective.
    fn projected_gradient(prior: [f64; 4], window: &[ResidualSample<f64>], mu: f64) -> [f64; 4] {
        let p = params();
        let b = effectiveness_matrix(&p);
        let scale = wrench_row_scale(&p);
        let mut h = nalgebra::Matrix4::<f64>::zeros();
        let mut g = Vector4::<f64>::zeros();
        for s in window {
            let sm = nalgebra::Matrix4::from_fn(|r, c| -b[(r, c)] * s.nominal_thrust[c] * scale[r]);
            let r = s.residual.component_mul(&scale);
            h += sm.transpose() * sm / window.len() as f64;
            g += sm.transpose() * r / window.len() as f64;
        }
        h += nalgebra::Matrix4::identity() * mu;
        g += Vector4::from_fn(|i, _| prior[i] / 100.0) * mu;
        let step = 1.0 / h.norm();
        let mut x = Vector4::from_element(0.5);
        for _ in 0..200_000 {
            x -= (h * x - g) * step;
            x = x.map(|v| v.clamp(0.0, 1.0));
        }
        [x[0], x[1], x[2], x[3]]
    }

    #[test]
    fn refinement_with_zero_data_and_prior_is_zero() {
        let w = vec![synthetic_residual([0.0; 4], [1.7; 4]); 10];
        let est = refine_damage(&DamageEstimate::default(), &w, &params(), 0.1);
        assert!(est.damage.iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn refinement_finds_single_rotor_loss() {
        let w = vec![synthetic_residual([0.6, 0.0, 0.0, 0.0], [1.7, 1.8, 1.6, 1.75]); 10];
        let est = refine_damage(&DamageEstimate::default(), &w, &params(), 0.1);
        let reference = projected_gradient([0.0; 4], &w, 0.1);
        assert!(est.damage[0] >= 55.0 && est.damage[0] <= 65.0, "{:?}", est.damage);
        assert!(est.damage[1..].iter().all(|d| *d < 5.0));
        for (d, r) in est.damage.iter().zip(&reference) {
            assert!((d / 100.0 - r).abs() < 1e-6);
        }
    }

    #[test]
    fn refinement_without_samples_returns_prior() {
        let prior = DamageEstimate { damage: [10.0, 0.0, 0.0, 0.0], ..DamageEstimate::default() };
        assert_eq!(refine_damage(&prior, &[], &params(), 0.1), prior);
    }

    #[test]
    fn switch_examples() {
        let cfg = DetectorConfig::default();
        let healthy = DamageEstimate::<f64>::default();
        let hurt = DamageEstimate { damage: [80.0, 0.0, 0.0, 0.0], ..healthy };
        assert_eq!(switch_decision(&[healthy; 40], &cfg), ControlMode::Standard);
        assert_eq!(switch_decision(&vec![hurt; cfg.persistence], &cfg), ControlMode::FaultTolerant);
        let mut brief = vec![hurt; cfg.persistence - 1];
        brief.push(healthy);
        assert_eq!(switch_decision(&brief, &cfg), ControlMode::Standard);
        let mut latched = vec![hurt; cfg.persistence];
        latched.extend([healthy; 50]);
        assert_eq!(switch_decision(&latched, &cfg), ControlMode::FaultTolerant);
        let monitor = DetectorConfig { switching: false, ..cfg };
        assert_eq!(switch_decision(&[hurt; 100], &monitor), ControlMode::Standard);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn refinement_stays_in_box(
            r in proptest::collection::vec(-20.0f64..20.0, 40),
            prior in proptest::collection::vec(0.0f64..100.0, 4),
        ) {
            let w: Vec<_> = r.chunks(4).map(|c| ResidualSample {
                residual: Vector4::new(c[0], c[1] * 0.1, c[2] * 0.1, c[3] * 0.01),
                nominal_thrust: [1.7; 4],
            }).collect();
            let prior = DamageEstimate { damage: [prior[0], prior[1], prior[2], prior[3]], ..DamageEstimate::default() };
            let est = refine_damage(&prior, &w, &params(), 0.1);
            prop_assert!(est.damage.iter().all(|d| (0.0..=100.0).contains(d)));
        }
    }
}
