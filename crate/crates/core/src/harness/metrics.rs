//! Maximum deviation per distance band.
//!
//! For descending band boundaries `d_0 > d_1 > … > d_m`, band `j` holds the
//! frames whose distance to touchdown lies in `(d_{j+1}, d_j]`; the last
//! band reaches down to touchdown, `[0, d_m]`. Frames farther than `d_0`
//! are not scored.

use std::io::{Read, Write};

use thiserror::Error;

use super::log::{LogError, TrajectoryLog};

pub const METRICS_COLUMNS: [&str; 3] = ["band_m", "max_linear_dev_m", "max_orient_dev_deg"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("the log has no frames")]
    EmptyLog,
    #[error("band boundaries must be positive and strictly descending")]
    BadBands,
    #[error("no frame falls in the band ending at {band_m} m")]
    EmptyBand { band_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub band_m: f64,
    pub max_linear_dev_m: f64,
    pub max_orient_dev_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<BandRow>,
}

impl MetricsTable {
    pub fn row(&self, band_m: f64) -> Option<&BandRow> {
        self.rows.iter().find(|r| r.band_m == band_m)
    }
}

fn check_bands(log: &TrajectoryLog, bands: &[f64]) -> Result<(), MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    if bands.is_empty() || bands.iter().any(|d| !(*d > 0.0 && d.is_finite())) || bands.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(MetricsError::BadBands);
    }
    Ok(())
}

fn band_max(log: &TrajectoryLog, band_m: f64, inside: impl Fn(f64) -> bool) -> Result<BandRow, MetricsError> {
    let mut row = BandRow {
        band_m,
        max_linear_dev_m: 0.0,
        max_orient_dev_deg: 0.0,
    };
    let mut any = false;
    for r in log.records.iter().filter(|r| inside(r.distance_to_touchdown())) {
        any = true;
        row.max_linear_dev_m = row.max_linear_dev_m.max(r.err_pos_m.abs());
        row.max_orient_dev_deg = row.max_orient_dev_deg.max(r.err_yaw_deg.abs());
    }
    if any {
        Ok(row)
    } else {
        Err(MetricsError::EmptyBand { band_m })
    }
}

pub fn compute_metrics(log: &TrajectoryLog, bands: &[f64]) -> Result<MetricsTable, MetricsError> {
    check_bands(log, bands)?;
    let rows = bands
        .iter()
        .enumerate()
        .map(|(j, &hi)| {
            let lo = bands.get(j + 1).copied();
            band_max(log, hi, |d| d <= hi && lo.is_none_or(|lo| d > lo))
        })
        .collect::<Result<_, _>>()?;
    Ok(MetricsTable { rows })
}

/// Like [`compute_metrics`], but each band covers everything from touchdown
/// out to its boundary, so the rows are nested.
pub fn compute_nested_metrics(log: &TrajectoryLog, bands: &[f64]) -> Result<MetricsTable, MetricsError> {
    check_bands(log, bands)?;
    let rows = bands
        .iter()
        .map(|&hi| band_max(log, hi, |d| d <= hi))
        .collect::<Result<_, _>>()?;
    Ok(MetricsTable { rows })
}

pub fn write_metrics<W: Write>(mut w: W, table: &MetricsTable) -> std::io::Result<()> {
    writeln!(w, "{}", METRICS_COLUMNS.join(","))?;
    for r in &table.rows {
        writeln!(w, "{:?},{:?},{:?}", r.band_m, r.max_linear_dev_m, r.max_orient_dev_deg)?;
    }
    w.flush()
}

pub fn read_metrics<R: Read>(mut r: R) -> Result<MetricsTable, LogError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_COLUMNS.join(",") => {}
        _ => {
            return Err(LogError::MalformedLog {
                line: 1,
                reason: format!("expected header {}", METRICS_COLUMNS.join(",")),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        let malformed = |reason: String| LogError::MalformedLog { line: i as u64 + 1, reason };
        let f: Vec<f64> = l
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(e.to_string()))?;
        if f.len() != 3 {
            return Err(malformed(format!("expected 3 fields, found {}", f.len())));
        }
        rows.push(BandRow {
            band_m: f[0],
            max_linear_dev_m: f[1],
            max_orient_dev_deg: f[2],
        });
    }
    Ok(MetricsTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::log::LogRecord;

    fn at(dist: f64, lin: f64, orient: f64) -> LogRecord {
        LogRecord {
            t_s: 0.0,
            truth_position: [-dist, 0.0, 10.0],
            truth_yaw_deg: 0.0,
            est_position: [-dist + lin, 0.0, 10.0],
            est_yaw_deg: orient,
            err_pos_m: lin,
            err_yaw_deg: orient,
            ess: 1.0,
            frame_ms: 0.0,
        }
    }

    #[test]
    fn hand_built_log() {
        let log = TrajectoryLog {
            records: vec![at(800.0, 99.0, 99.0), at(300.0, 4.0, 5.0), at(50.0, 1.5, 1.5), at(5.0, 0.15, 0.1)],
        };
        let t = compute_metrics(&log, &[500.0, 100.0, 10.0]).unwrap();
        let got: Vec<_> = t.rows.iter().map(|r| (r.band_m, r.max_linear_dev_m, r.max_orient_dev_deg)).collect();
        assert_eq!(got, vec![(500.0, 4.0, 5.0), (100.0, 1.5, 1.5), (10.0, 0.15, 0.1)]);
    }

    #[test]
    fn band_edges() {
        let log = TrajectoryLog {
            records: vec![at(100.0, 2.0, 0.0), at(10.0, 1.0, 0.0), at(0.0, 0.5, 0.0), at(500.0, 3.0, 0.0)],
        };
        let t = compute_metrics(&log, &[500.0, 100.0, 10.0]).unwrap();
        assert_eq!(t.rows[0].max_linear_dev_m, 3.0);
        assert_eq!(t.rows[1].max_linear_dev_m, 2.0);
        assert_eq!(t.rows[2].max_linear_dev_m, 1.0);
    }

    #[test]
    fn zero_errors_give_zero_table() {
        let log = TrajectoryLog {
            records: (0..100).map(|i| at(i as f64 * 7.0, 0.0, 0.0)).collect(),
        };
        let t = compute_metrics(&log, &[500.0, 100.0, 10.0]).unwrap();
        assert!(t.rows.iter().all(|r| r.max_linear_dev_m == 0.0 && r.max_orient_dev_deg == 0.0));
    }

    #[test]
    fn errors() {
        let log = TrajectoryLog {
            records: vec![at(300.0, 1.0, 1.0)],
        };
        assert_eq!(compute_metrics(&TrajectoryLog::default(), &[10.0]), Err(MetricsError::EmptyLog));
        assert_eq!(compute_metrics(&log, &[10.0, 100.0]), Err(MetricsError::BadBands));
        assert_eq!(compute_metrics(&log, &[]), Err(MetricsError::BadBands));
        assert_eq!(
            compute_metrics(&log, &[500.0, 100.0]),
            Err(MetricsError::EmptyBand { band_m: 100.0 })
        );
    }

    #[test]
    fn csv_round_trip() {
        let t = MetricsTable {
            rows: vec![
                BandRow { band_m: 500.0, max_linear_dev_m: 4.12, max_orient_dev_deg: 5.3 },
                BandRow { band_m: 10.0, max_linear_dev_m: 0.1 + 0.2, max_orient_dev_deg: 0.0 },
            ],
        };
        let mut buf = Vec::new();
        write_metrics(&mut buf, &t).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("band_m,max_linear_dev_m,max_orient_dev_deg\n500.0,4.12,5.3\n"));
        assert_eq!(read_metrics(&buf[..]).unwrap(), t);
        assert!(matches!(read_metrics(&b"band_m,max_linear_dev_m,max_orient_dev_deg\n1,2\n"[..]), Err(LogError::MalformedLog { line: 2, .. })));
    }
}
