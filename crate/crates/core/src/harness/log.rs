//! Simulation log and its CSV form.
//!
//! The time series goes to one CSV file and the events to a sidecar file
//! next to it (`run.csv` and `run.events.csv`). Both start with the schema
//! line `# ftquad-log v1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::control::ControlMode;
use crate::error::{Error, Result};

pub const SCHEMA_LINE: &str = "# ftquad-log v1";

/// One control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRecord {
    pub time: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Row-major rotation matrix.
    pub rotation: [f64; 9],
    pub omega: [f64; 3],
    pub yaw: f64,
    pub tilt_deg: f64,
    pub mode: ControlMode,
    /// Commanded rotor speeds after adaptation, RPM.
    pub commanded: [f64; 4],
    /// Achieved rotor speeds, RPM.
    pub actual: [f64; 4],
    /// Damage estimate, percent thrust loss.
    pub damage: [f64; 4],
    /// Norm of the attitude error fed to the moment law.
    pub attitude_error: f64,
    pub reference: [f64; 3],
    /// Sample counts towards the tracking statistics.
    pub tracking: bool,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    FaultInjected,
    Detection,
    Switch,
    SaturationStart,
    SaturationEnd,
    Dnf,
    Failure,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::FaultInjected => "fault_injected",
            EventKind::Detection => "detection",
            EventKind::Switch => "switch",
            EventKind::SaturationStart => "saturation_start",
            EventKind::SaturationEnd => "saturation_end",
            EventKind::Dnf => "dnf",
            EventKind::Failure => "failure",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fault_injected" => EventKind::FaultInjected,
            "detection" => EventKind::Detection,
            "switch" => EventKind::Switch,
            "saturation_start" => EventKind::SaturationStart,
            "saturation_end" => EventKind::SaturationEnd,
            "dnf" => EventKind::Dnf,
            "failure" => EventKind::Failure,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// 1-based rotor index, when one applies.
    pub rotor: Option<usize>,
    /// Damage (percent) or other event-specific magnitude.
    pub value: f64,
    pub detail: String,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// Crash detected; the run stopped early.
    Dnf(String),
    /// Numerical failure; the log is partial.
    Failed(String),
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Dnf(_) => "dnf",
            Outcome::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub records: Vec<LogRecord>,
    pub events: Vec<Event>,
    pub outcome: Outcome,
}

const COLUMNS: &[&str] = &[
    "time",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "r11",
    "r12",
    "r13",
    "r21",
    "r22",
    "r23",
    "r31",
    "r32",
    "r33",
    "wx",
    "wy",
    "wz",
    "yaw",
    "tilt_deg",
    "mode",
    "cmd1",
    "cmd2",
    "cmd3",
    "cmd4",
    "rpm1",
    "rpm2",
    "rpm3",
    "rpm4",
    "dmg1",
    "dmg2",
    "dmg3",
    "dmg4",
    "att_err",
    "ref_x",
    "ref_y",
    "ref_z",
    "tracking",
    "saturated",
];

const EVENT_COLUMNS: &[&str] = &["time", "event", "rotor", "value", "detail"];

/// `run.csv` → `run.events.csv`.
pub fn events_path(log_path: &Path) -> PathBuf {
    let stem = log_path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
    log_path.with_file_name(format!("{stem}.events.csv"))
}

fn fmt(x: f64) -> String {
    // Shortest round-trip representation: deterministic and lossless.
    format!("{x}")
}

impl SimLog {
    pub fn new() -> Self {
        Self { records: Vec::new(), events: Vec::new(), outcome: Outcome::Completed }
    }

    pub fn push_event(
        &mut self,
        time: f64,
        kind: EventKind,
        rotor: Option<usize>,
        value: f64,
        detail: impl Into<String>,
    ) {
        self.events.push(Event { time, kind, rotor, value, detail: detail.into() });
    }

    pub fn first_event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{SCHEMA_LINE}")?;
        writeln!(out, "# outcome: {}", self.outcome.label())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(COLUMNS.len());
            row.push(fmt(r.time));
            row.extend(r.position.iter().chain(&r.velocity).chain(&r.rotation).chain(&r.omega).map(|x| fmt(*x)));
            row.push(fmt(r.yaw));
            row.push(fmt(r.tilt_deg));
            row.push(r.mode.as_str().to_string());
            row.extend(r.commanded.iter().chain(&r.actual).chain(&r.damage).map(|x| fmt(*x)));
            row.push(fmt(r.attitude_error));
            row.extend(r.reference.iter().map(|x| fmt(*x)));
            row.push(u8::from(r.tracking).to_string());
            row.push(u8::from(r.saturated).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(EVENT_COLUMNS)?;
        for e in &self.events {
            w.write_record([
                fmt(e.time),
                e.kind.as_str().to_string(),
                e.rotor.map(|r| r.to_string()).unwrap_or_default(),
                fmt(e.value),
                e.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the log and its event sidecar.
    pub fn save(&self, log_path: &Path) -> Result<()> {
        self.write_csv(File::create(log_path)?)?;
        self.write_events_csv(File::create(events_path(log_path))?)?;
        Ok(())
    }

    /// Reads a log written by [`SimLog::save`]. A missing event sidecar is
    /// treated as an empty event list.
    pub fn load(log_path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(log_path)?);
        let outcome = read_preamble(&mut reader)?;
        let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = csv.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != COLUMNS {
            return Err(Error::ConfigInvalid("log columns do not match ftquad-log v1".into()));
        }
        let mut records = Vec::new();
        for row in csv.records() {
            records.push(parse_record(&row?)?);
        }
        let ev_path = events_path(log_path);
        let events = if ev_path.exists() { read_events(&ev_path)? } else { Vec::new() };
        let outcome = match outcome.as_str() {
            "completed" => Outcome::Completed,
            "dnf" => Outcome::Dnf(
                events.iter().find(|e| e.kind == EventKind::Dnf).map(|e| e.detail.clone()).unwrap_or_default(),
            ),
            _ => Outcome::Failed(
                events.iter().find(|e| e.kind == EventKind::Failure).map(|e| e.detail.clone()).unwrap_or_default(),
            ),
        };
        Ok(Self { records, events, outcome })
    }
}

impl Default for SimLog {
    fn default() -> Self {
        Self::new()
    }
}

fn read_preamble<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != SCHEMA_LINE {
        return Err(Error::ConfigInvalid(format!("not an ftquad-log v1 file (first line {:?})", first.trim_end())));
    }
    let mut second = String::new();
    reader.read_line(&mut second)?;
    Ok(second.trim_end().strip_prefix("# outcome: ").unwrap_or("completed").to_string())
}

fn parse_record(row: &csv::StringRecord) -> Result<LogRecord> {
    let num = |i: usize| -> Result<f64> {
        row.get(i)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::ConfigInvalid(format!("bad value in column {}", COLUMNS[i])))
    };
    let arr = |start: usize, out: &mut [f64]| -> Result<()> {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = num(start + k)?;
        }
        Ok(())
    };
    let mut r = LogRecord { time: num(0)?, ..LogRecord::default() };
    arr(1, &mut r.position)?;
    arr(4, &mut r.velocity)?;
    arr(7, &mut r.rotation)?;
    arr(16, &mut r.omega)?;
    r.yaw = num(19)?;
    r.tilt_deg = num(20)?;
    r.mode = match row.get(21) {
        Some("standard") => ControlMode::Standard,
        Some("fault_tolerant") => ControlMode::FaultTolerant,
        other => return Err(Error::ConfigInvalid(format!("unknown mode {other:?}"))),
    };
    arr(22, &mut r.commanded)?;
    arr(26, &mut r.actual)?;
    arr(30, &mut r.damage)?;
    r.attitude_error = num(34)?;
    arr(35, &mut r.reference)?;
    r.tracking = num(38)? != 0.0;
    r.saturated = num(39)? != 0.0;
    Ok(r)
}

fn read_events(path: &Path) -> Result<Vec<Event>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != SCHEMA_LINE {
        return Err(Error::ConfigInvalid("event file is not ftquad-log v1".into()));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let mut events = Vec::new();
    for row in csv.records() {
        let row = row?;
        let bad = || Error::ConfigInvalid("malformed event row".into());
        events.push(Event {
            time: row.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            kind: row.get(1).and_then(EventKind::parse).ok_or_else(bad)?,
            rotor: row.get(2).and_then(|s| s.parse().ok()),
            value: row.get(3).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            detail: row.get(4).unwrap_or_default().to_string(),
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut log = SimLog::new();
        for k in 0..3 {
            log.records.push(LogRecord {
                time: k as f64 * 0.002,
                position: [0.1, -0.2, 1.5 + k as f64],
                rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                mode: if k == 2 { ControlMode::FaultTolerant } else { ControlMode::Standard },
                damage: [12.5, 0.0, 0.0, 1.0 / 3.0],
                tracking: k > 0,
                ..LogRecord::default()
            });
        }
        log.push_event(0.002, EventKind::FaultInjected, Some(1), 80.0, "");
        log.push_event(0.004, EventKind::Dnf, None, 0.0, "floor contact, z = -0.01");
        log.outcome = Outcome::Dnf("floor contact, z = -0.01".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        log.save(&path).unwrap();
        let back = SimLog::load(&path).unwrap();
        assert_eq!(back, log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(SCHEMA_LINE));
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(SimLog::load(&path).is_err());
    }
}
