//! Rotor effectiveness geometry and a small exact box-constrained
//! quadratic-program solver.
//!
//! The solver enumerates active sets, which is exact and cheap for the four
//! to six unknowns that appear in rotor allocation and damage refinement.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::dynamics::QuadrotorParams;
use crate::scalar::{lit, Real};

/// Largest problem size accepted by [`solve_box_qp`].
pub const MAX_QP_DIM: usize = 8;

/// Minimises `½ xᵀ H x - gᵀ x` subject to `lower <= x <= upper`.
///
/// `H` must be positive definite on every face the optimum can lie on;
/// callers add a small ridge term when the data term alone is singular.
/// Returns `None` only for malformed input.
pub fn solve_box_qp<T: Real>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    lower: &DVector<T>,
    upper: &DVector<T>,
) -> Option<DVector<T>> {
    let n = g.len();
    if n == 0 || n > MAX_QP_DIM || h.shape() != (n, n) || lower.len() != n || upper.len() != n {
        return None;
    }
    if (0..n).any(|i| !(lower[i] <= upper[i])) {
        return None;
    }
    let objective = |x: &DVector<T>| (x.transpose() * h * x)[(0, 0)] * lit(0.5) - g.dot(x);
    let feas_tol: T = lit(1e-12);

    let mut best: Option<(T, DVector<T>)> = None;
    let combos = 3usize.pow(n as u32);
    let mut state = vec![0u8; n];
    for code in 0..combos {
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        // A pinned variable has only one admissible state.
        if (0..n).any(|i| lower[i] == upper[i] && state[i] != 1) {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut x = DVector::from_fn(n, |i, _| match state[i] {
            1 => lower[i],
            2 => upper[i],
            _ => T::zero(),
        });
        if !free.is_empty() {
            let m = free.len();
            let hff = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(m, |a, _| {
                let i = free[a];
                let mut r = g[i];
                for j in 0..n {
                    if state[j] != 0 {
                        r -= h[(i, j)] * x[j];
                    }
                }
                r
            });
            let Some(chol) = hff.cholesky() else { continue };
            let xf = chol.solve(&rhs);
            let span = |i: usize| (upper[i] - lower[i]).abs().max(T::one()) * feas_tol;
            if free.iter().enumerate().any(|(a, &i)| xf[a] < lower[i] - span(i) || xf[a] > upper[i] + span(i)) {
                continue;
            }
            for (a, &i) in free.iter().enumerate() {
                x[i] = xf[a].clamp(lower[i], upper[i]);
            }
        }
        let f = objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Rows map per-rotor thrust (N) to `[collective thrust, M1, M2, M3]`
/// using the nominal geometry (no centre-of-mass offset).
pub fn effectiveness_matrix<T: Real>(params: &QuadrotorParams<T>) -> Matrix4<T> {
    let ratio = params.torque_ratio();
    Matrix4::from_fn(|row, i| {
        let r = params.rotor_position(i);
        match row {
            0 => T::one(),
            1 => r.y,
            2 => -r.x,
            _ => params.spin[i] * ratio,
        }
    })
}

/// Per-row scales turning the wrench rows into thrust-equivalent newtons.
pub fn wrench_row_scale<T: Real>(params: &QuadrotorParams<T>) -> Vector4<T> {
    let lever = params.arm_length * lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
    Vector4::new(T::one(), T::one() / lever, T::one() / lever, T::one() / params.torque_ratio())
}

pub fn thrust_to_speed<T: Real>(thrust: T, params: &QuadrotorParams<T>) -> T {
    (thrust.max(T::zero()) / params.thrust_coeff).sqrt()
}

pub fn speed_to_thrust<T: Real>(speed: T, params: &QuadrotorParams<T>) -> T {
    params.thrust_coeff * speed * speed
}
