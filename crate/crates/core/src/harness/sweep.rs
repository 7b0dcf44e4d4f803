//! Drag design sweep: steady dual-failure spin rate against added plate
//! area, with the drag coefficient backed out of each run.

use rayon::prelude::*;

use super::config::{FaultConfig, ScenarioConfig};
use super::log::{Outcome, SimLog};
use super::matrix::DEFAULT_FAULT_TIME;
use super::sim::run;
use super::summary::STEADY_WINDOW;
use crate::drag::{estimate_drag_coefficient, DragConfiguration};
use crate::dynamics::{QuadrotorParams, ROTOR_COUNT};
use crate::error::{Error, Result};

/// Relative spread of the yaw rate over the steady window above which a
/// run counts as unconverged.
pub const CONVERGENCE_SPREAD: f64 = 0.05;

/// Parses `a0:a1:n` into `n` evenly spaced areas from `a0` to `a1`.
pub fn parse_areas(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::ConfigInvalid(format!("areas: expected a0:a1:n, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a0, a1, n] = parts[..] else { return Err(bad()) };
    let a0: f64 = a0.trim().parse().map_err(|_| bad())?;
    let a1: f64 = a1.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !(a0 >= 0.0 && a1 >= a0 && a1.is_finite()) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a0]);
    }
    Ok((0..n).map(|k| a0 + (a1 - a0) * k as f64 / (n - 1) as f64).collect())
}

/// The base scenario with `added` m² of plates and rotors 1 and 3 lost.
pub fn sweep_scenario(base: &ScenarioConfig, added: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    let time = base.faults.iter().map(|f| f.time).fold(f64::INFINITY, f64::min);
    let time = if time.is_finite() { time } else { DEFAULT_FAULT_TIME };
    cfg.drag.added_area = added;
    cfg.faults = [1, 3].iter().map(|&rotor| FaultConfig { time, rotor, damage: 100.0 }).collect();
    cfg.name = format!("{}-area-{added}", base.name);
    cfg
}

/// Steady yaw rate, its relative spread and the mean rotor reaction torque
/// over the final window of a log.
pub fn steady_spin(log: &SimLog, params: &QuadrotorParams<f64>) -> Result<(f64, f64, f64)> {
    let last = log.records.last().ok_or(Error::EmptyLog)?;
    let tail: Vec<_> = log.records.iter().filter(|r| r.time >= last.time - STEADY_WINDOW).collect();
    let n = tail.len() as f64;
    let rate = tail.iter().map(|r| r.omega[2]).sum::<f64>() / n;
    let var = tail.iter().map(|r| (r.omega[2] - rate).powi(2)).sum::<f64>() / n;
    let torque = tail
        .iter()
        .map(|r| (0..ROTOR_COUNT).map(|i| params.spin[i] * params.torque_coeff * r.actual[i].powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    let spread = if rate != 0.0 { var.sqrt() / rate.abs() } else { f64::INFINITY };
    Ok((rate, spread, torque))
}

/// One simulated sweep entry.
pub fn sweep_entry(base: &ScenarioConfig, added: f64) -> Result<DragConfiguration> {
    let cfg = sweep_scenario(base, added);
    let params = cfg.params()?;
    let log = run(&cfg)?;
    let (rate, spread, torque) = steady_spin(&log, &params)?;
    let finished = log.outcome == Outcome::Completed;
    let k_z =
        estimate_drag_coefficient(torque.abs(), rate.abs(), params.air_density, params.drag_area, params.arm_length)
            .unwrap_or(f64::NAN);
    Ok(DragConfiguration {
        added_area: added,
        effective_area: params.drag_area,
        k_z,
        omega3: rate.abs(),
        in_band: finished && cfg.drag.band.contains(rate.abs()),
        converged: finished && spread <= CONVERGENCE_SPREAD,
    })
}

/// Runs every area, in parallel, returning rows in input order.
pub fn sweep_configurations(base: &ScenarioConfig, areas: &[f64]) -> Result<Vec<DragConfiguration>> {
    if areas.is_empty() {
        return Err(Error::ConfigInvalid("areas: need at least one value".into()));
    }
    for &a in areas {
        sweep_scenario(base, a).resolve()?;
    }
    areas.par_iter().map(|&a| sweep_entry(base, a)).collect()
}

pub const SWEEP_COLUMNS: &[&str] = &["added_area_m2", "k_z_est", "omega3_steady_rad_s", "in_band", "converged"];

pub fn write_sweep_csv<W: std::io::Write>(rows: &[DragConfiguration], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            format!("{}", r.added_area),
            format!("{}", r.k_z),
            format!("{}", r.omega3),
            r.in_band.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_grid() {
        assert_eq!(parse_areas("0:0.2:3").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(parse_areas("0.05:0.05:1").unwrap(), vec![0.05]);
        for bad in ["0:1", "1:0:3", "0:1:0", "a:b:c", "-1:1:2"] {
            assert!(parse_areas(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scenario_loses_the_first_pair() {
        let cfg = sweep_scenario(&ScenarioConfig::default(), 0.1);
        assert_eq!(cfg.drag.added_area, 0.1);
        assert_eq!(cfg.faults.iter().map(|f| f.rotor).collect::<Vec<_>>(), vec![1, 3]);
    }
}
