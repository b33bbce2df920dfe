//! Per-frame trajectory log and its CSV form.
//!
//! Floats are written in shortest round-trip form, so reading a written log
//! gives back the same bits. `frame_ms` is the last column; it is the only
//! value that differs between two runs of the same configuration.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

pub const LOG_COLUMNS: [&str; 13] = [
    "t_s",
    "truth_x_m",
    "truth_y_m",
    "truth_z_m",
    "truth_yaw_deg",
    "est_x_m",
    "est_y_m",
    "est_z_m",
    "est_yaw_deg",
    "err_pos_m",
    "err_yaw_deg",
    "ess",
    "frame_ms",
];

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed log at line {line}: {reason}")]
    MalformedLog { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t_s: f64,
    pub truth_position: [f64; 3],
    pub truth_yaw_deg: f64,
    pub est_position: [f64; 3],
    pub est_yaw_deg: f64,
    pub err_pos_m: f64,
    pub err_yaw_deg: f64,
    pub ess: f64,
    pub frame_ms: f64,
}

impl LogRecord {
    /// Horizontal distance of the true position from the touchdown point.
    pub fn distance_to_touchdown(&self) -> f64 {
        self.truth_position[0].hypot(self.truth_position[1])
    }

    /// Estimate minus truth, per axis.
    pub fn axis_errors(&self) -> [f64; 3] {
        [
            self.est_position[0] - self.truth_position[0],
            self.est_position[1] - self.truth_position[1],
            self.est_position[2] - self.truth_position[2],
        ]
    }

    fn fields(&self) -> [f64; 13] {
        let (t, e) = (self.truth_position, self.est_position);
        [
            self.t_s,
            t[0],
            t[1],
            t[2],
            self.truth_yaw_deg,
            e[0],
            e[1],
            e[2],
            self.est_yaw_deg,
            self.err_pos_m,
            self.err_yaw_deg,
            self.ess,
            self.frame_ms,
        ]
    }

    fn from_fields(f: &[f64; 13]) -> Self {
        Self {
            t_s: f[0],
            truth_position: [f[1], f[2], f[3]],
            truth_yaw_deg: f[4],
            est_position: [f[5], f[6], f[7]],
            est_yaw_deg: f[8],
            err_pos_m: f[9],
            err_yaw_deg: f[10],
            ess: f[11],
            frame_ms: f[12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Copy with every `frame_ms` set to zero, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            records: self.records.iter().map(|r| LogRecord { frame_ms: 0.0, ..*r }).collect(),
        }
    }
}

pub fn write_log<W: Write>(w: W, log: &TrajectoryLog) -> Result<(), LogError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LOG_COLUMNS).map_err(csv_io)?;
    for r in &log.records {
        out.write_record(r.fields().iter().map(|v| format!("{v:?}"))).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(r: R) -> Result<TrajectoryLog, LogError> {
    let mut input = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    let mut first = true;
    loop {
        let more = input.read_record(&mut row).map_err(|e| LogError::MalformedLog {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = row.position().map_or(0, |p| p.line());
        if first {
            first = false;
            if row.iter().ne(LOG_COLUMNS.iter().copied()) {
                return Err(LogError::MalformedLog {
                    line,
                    reason: format!("expected header {}", LOG_COLUMNS.join(",")),
                });
            }
            continue;
        }
        if row.len() != LOG_COLUMNS.len() {
            return Err(LogError::MalformedLog {
                line,
                reason: format!("expected {} fields, found {}", LOG_COLUMNS.len(), row.len()),
            });
        }
        let mut f = [0.0; 13];
        for (i, (slot, text)) in f.iter_mut().zip(row.iter()).enumerate() {
            *slot = text.trim().parse().map_err(|_| LogError::MalformedLog {
                line,
                reason: format!("{}: not a number: {text:?}", LOG_COLUMNS[i]),
            })?;
        }
        records.push(LogRecord::from_fields(&f));
    }
    if first {
        return Err(LogError::MalformedLog {
            line: 1,
            reason: "missing header".into(),
        });
    }
    Ok(TrajectoryLog { records })
}

pub fn write_log_file(path: &Path, log: &TrajectoryLog) -> Result<(), LogError> {
    write_log(std::io::BufWriter::new(std::fs::File::create(path)?), log)
}

pub fn read_log_file(path: &Path) -> Result<TrajectoryLog, LogError> {
    read_log(std::fs::File::open(path)?)
}

fn csv_io(e: csv::Error) -> LogError {
    LogError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize) -> LogRecord {
        let x = i as f64;
        LogRecord {
            t_s: x * 0.1,
            truth_position: [-1000.0 + x / 3.0, 0.1, 60.0 - x * 0.07],
            truth_yaw_deg: 0.0,
            est_position: [-999.0 + x / 7.0, -0.3, 59.0],
            est_yaw_deg: 1.0 / 3.0,
            err_pos_m: 1.2345678901234567,
            err_yaw_deg: 1e-300,
            ess: 999.9999,
            frame_ms: 12.5,
        }
    }

    #[test]
    fn header_matches_columns() {
        let mut buf = Vec::new();
        write_log(&mut buf, &TrajectoryLog::default()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), LOG_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn header_only_is_empty_log() {
        let text = LOG_COLUMNS.join(",") + "\n";
        assert!(read_log(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let log = TrajectoryLog {
            records: (0..50).map(sample).collect(),
        };
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        assert_eq!(read_log(&buf[..]).unwrap(), log);
    }

    #[test]
    fn truncated_row_reports_its_line() {
        let log = TrajectoryLog {
            records: (0..3).map(sample).collect(),
        };
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 20];
        match read_log(cut.as_bytes()) {
            Err(LogError::MalformedLog { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_and_bad_header() {
        let text = format!("{}\n{}\n", LOG_COLUMNS.join(","), ["1"; 12].join(",") + ",x");
        assert!(matches!(read_log(text.as_bytes()), Err(LogError::MalformedLog { line: 2, .. })));
        assert!(matches!(read_log(&b"a,b\n"[..]), Err(LogError::MalformedLog { line: 1, .. })));
        assert!(matches!(read_log(&b""[..]), Err(LogError::MalformedLog { .. })));
    }
}
