//! Per-run summary statistics computed from a log.

use nalgebra::Vector3;

use super::log::{EventKind, SimLog};
use crate::control::ControlMode;
use crate::error::{Error, Result};
use crate::trajectory::{TrackingReport, TrackingSample};

/// Window at the end of a run used for steady-state averages, s.
pub const STEADY_WINDOW: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub outcome: String,
    /// Simulated time covered by the log, s.
    pub duration: f64,
    /// `None` if no sample fell inside the tracking window.
    pub tracking: Option<TrackingReport<f64>>,
    /// First fault injection, s.
    pub fault_time: Option<f64>,
    /// Fault injection to first above-threshold estimate, s.
    pub detection_latency: Option<f64>,
    /// Fault injection to the controller switch, s.
    pub switch_latency: Option<f64>,
    /// Altitude at injection minus the lowest altitude afterwards, m.
    pub altitude_loss: Option<f64>,
    /// Mean body yaw rate over the final window, rad/s.
    pub steady_yaw_rate: f64,
    /// Standard deviation of the yaw rate over the final window, rad/s.
    pub steady_yaw_rate_std: f64,
    /// Share of control steps with a saturated allocation.
    pub saturation_fraction: f64,
    /// Mean damage estimate over the final window, percent thrust loss.
    pub final_damage: [f64; 4],
    pub final_mode: ControlMode,
}

impl Summary {
    pub fn is_dnf(&self) -> bool {
        self.outcome != "completed"
    }
}

pub fn summarize(log: &SimLog) -> Result<Summary> {
    let records = &log.records;
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyLog),
    };
    let tracking = TrackingReport::from_samples(records.iter().filter(|r| r.tracking).map(|r| TrackingSample {
        position: Vector3::from(r.position),
        reference: Vector3::from(r.reference),
        tilt: r.tilt_deg.to_radians(),
        speed: Vector3::from(r.velocity).norm(),
    }))
    .ok();

    let fault_time = log.first_event(EventKind::FaultInjected).map(|e| e.time);
    let latency = |kind| match (fault_time, log.first_event(kind)) {
        (Some(tf), Some(e)) if e.time >= tf => Some(e.time - tf),
        _ => None,
    };
    let altitude_loss = fault_time.and_then(|tf| {
        let at = records.iter().find(|r| r.time >= tf - 1e-9)?;
        let lowest = records.iter().filter(|r| r.time >= at.time).map(|r| r.position[2]).fold(f64::INFINITY, f64::min);
        Some((at.position[2] - lowest).max(0.0))
    });

    let window_start = last.time - STEADY_WINDOW;
    let tail: Vec<_> = records.iter().filter(|r| r.time >= window_start).collect();
    let n = tail.len() as f64;
    let mean = tail.iter().map(|r| r.omega[2]).sum::<f64>() / n;
    let var = tail.iter().map(|r| (r.omega[2] - mean).powi(2)).sum::<f64>() / n;
    let final_damage = std::array::from_fn(|i| tail.iter().map(|r| r.damage[i]).sum::<f64>() / n);
    let saturated = records.iter().filter(|r| r.saturated).count();

    Ok(Summary {
        outcome: log.outcome.label().to_string(),
        duration: last.time - first.time,
        tracking,
        fault_time,
        detection_latency: latency(EventKind::Detection),
        switch_latency: latency(EventKind::Switch),
        altitude_loss,
        steady_yaw_rate: mean,
        steady_yaw_rate_std: var.sqrt(),
        saturation_fraction: saturated as f64 / records.len() as f64,
        final_damage,
        final_mode: last.mode,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_else(|| "none".into())
}

/// Column names matching [`Summary::csv_row`].
pub const SUMMARY_COLUMNS: &[&str] = &[
    "outcome",
    "duration_s",
    "xy_rmse_m",
    "z_rmse_m",
    "max_position_error_m",
    "max_tilt_deg",
    "max_speed_m_s",
    "fault_time_s",
    "detection_latency_s",
    "switch_latency_s",
    "altitude_loss_m",
    "steady_yaw_rate_rad_s",
    "steady_yaw_rate_std_rad_s",
    "saturation_fraction",
    "damage1",
    "damage2",
    "damage3",
    "damage4",
    "final_mode",
];

impl Summary {
    pub fn csv_row(&self) -> Vec<String> {
        let t = self.tracking.as_ref();
        let mut row = vec![
            self.outcome.clone(),
            format!("{}", self.duration),
            opt(t.map(|t| t.xy_rmse)),
            opt(t.map(|t| t.z_rmse)),
            opt(t.map(|t| t.max_position_error)),
            opt(t.map(|t| t.max_tilt_deg)),
            opt(t.map(|t| t.max_speed)),
            opt(self.fault_time),
            opt(self.detection_latency),
            opt(self.switch_latency),
            opt(self.altitude_loss),
            format!("{}", self.steady_yaw_rate),
            format!("{}", self.steady_yaw_rate_std),
            format!("{}", self.saturation_fraction),
        ];
        row.extend(self.final_damage.iter().map(|d| format!("{d}")));
        row.push(self.final_mode.as_str().to_string());
        row
    }

    /// Human-readable multi-line report.
    pub fn report(&self) -> String {
        SUMMARY_COLUMNS.iter().zip(self.csv_row()).map(|(k, v)| format!("{k:<26} {v}\n")).collect()
    }
}

/// Writes `summary.csv` with a single data row.
pub fn write_summary_csv<W: std::io::Write>(summary: &Summary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    w.write_record(summary.csv_row())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::log::LogRecord;

    fn log_with(z: impl Fn(f64) -> f64) -> SimLog {
        let mut log = SimLog::new();
        for k in 0..=1000 {
            let t = k as f64 * 0.01;
            log.records.push(LogRecord {
                time: t,
                position: [0.1, 0.0, z(t)],
                reference: [0.0, 0.0, 1.0],
                omega: [0.0, 0.0, 20.0],
                tracking: true,
                ..LogRecord::default()
            });
        }
        log
    }

    #[test]
    fn healthy_run_has_no_fault_metrics() {
        let s = summarize(&log_with(|_| 1.0)).unwrap();
        assert_eq!(s.detection_latency, None);
        assert_eq!(s.altitude_loss, None);
        assert!((s.tracking.unwrap().xy_rmse - 0.1).abs() < 1e-12);
        assert!((s.steady_yaw_rate - 20.0).abs() < 1e-12);
        assert_eq!(s.saturation_fraction, 0.0);
    }

    #[test]
    fn altitude_loss_and_latency() {
        let mut log = log_with(|t| 1.0 - 0.2 * (-((t - 6.0) / 0.2).powi(2)).exp());
        log.push_event(5.0, EventKind::FaultInjected, Some(1), 80.0, "");
        log.push_event(5.07, EventKind::Detection, Some(1), 60.0, "");
        log.push_event(5.12, EventKind::Switch, Some(1), 70.0, "");
        let s = summarize(&log).unwrap();
        assert!((s.altitude_loss.unwrap() - 0.2).abs() < 1e-9);
        assert!((s.detection_latency.unwrap() - 0.07).abs() < 1e-12);
        assert!((s.switch_latency.unwrap() - 0.12).abs() < 1e-12);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(summarize(&SimLog::new()), Err(Error::EmptyLog)));
    }
}
