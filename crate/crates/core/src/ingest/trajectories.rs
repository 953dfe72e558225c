use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use super::{Dataset, Diagnostic};
use crate::error::{Error, Result};
use crate::model::{AgentId, Trajectory, TrajectoryPoint};

const COLUMNS: usize = 7;

#[derive(Clone, Copy, Debug)]
pub struct ParseOptions {
    /// Fraction of data rows that may be malformed before parsing fails.
    pub max_bad_fraction: f64,
    /// Absolute override for the malformed-row limit.
    pub max_bad_rows: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_bad_fraction: 0.01,
            max_bad_rows: None,
        }
    }
}

impl ParseOptions {
    fn limit(&self, rows: usize) -> usize {
        self.max_bad_rows
            .unwrap_or_else(|| (self.max_bad_fraction * rows as f64).floor() as usize)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryParse {
    pub trajectories: BTreeMap<AgentId, Trajectory>,
    pub diagnostics: Vec<Diagnostic>,
    pub rows: usize,
    pub bad_rows: usize,
}

impl TrajectoryParse {
    pub fn into_dataset(self, source_label: impl Into<String>) -> Dataset {
        let mut ds = Dataset::new(source_label, self.trajectories, Vec::new());
        ds.diagnostics.extend(self.diagnostics);
        ds
    }
}

/// Parses decimal seconds ("1368000000.5") into integer milliseconds,
/// rounding half up on the fourth fractional digit.
pub fn parse_timestamp_ms(field: &str) -> Option<i64> {
    let s = field.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    let plain = !int_part.is_empty()
        && int_part.bytes().all(|b| b.is_ascii_digit())
        && frac_part.bytes().all(|b| b.is_ascii_digit());
    if !plain {
        // exponent notation and friends
        let v: f64 = s.parse().ok()?;
        return v
            .is_finite()
            .then(|| (v * 1000.0 + 0.5).floor() as i64);
    }
    let secs: i64 = int_part.parse().ok()?;
    let digits = frac_part.as_bytes();
    let mut ms: i64 = 0;
    for i in 0..3 {
        ms = ms * 10 + digits.get(i).map_or(0, |d| i64::from(d - b'0'));
    }
    let round_up = digits.get(3).is_some_and(|&d| d >= b'5');
    let mag = secs.checked_mul(1000)?.checked_add(ms + i64::from(round_up))?;
    Some(if neg { -mag } else { mag })
}

/// Formats milliseconds as decimal seconds with three fractional digits.
pub fn format_timestamp(ms: i64) -> String {
    let sign = if ms < 0 { "-" } else { "" };
    let a = ms.unsigned_abs();
    format!("{sign}{}.{:03}", a / 1000, a % 1000)
}

fn parse_row(fields: &[&str]) -> std::result::Result<TrajectoryPoint, String> {
    let ts = parse_timestamp_ms(fields[0]).ok_or_else(|| format!("bad time '{}'", fields[0]))?;
    let id: AgentId = fields[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad person id '{}'", fields[1]))?;
    let mut nums = [0.0; 5];
    for (slot, raw) in nums.iter_mut().zip(&fields[2..]) {
        *slot = raw
            .trim()
            .parse()
            .map_err(|_| format!("bad number '{raw}'"))?;
    }
    let [x, y, v, m, f] = nums;
    TrajectoryPoint::new(ts, id, x, y, v, m, f).map_err(|e| e.to_string())
}

fn looks_like_header(first_field: &str) -> bool {
    let f = first_field.trim();
    f.parse::<f64>().is_err() && parse_timestamp_ms(f).is_none()
}

/// Parses a 7-column trajectory CSV (time s, person id, x mm, y mm,
/// velocity mm/s, motion angle rad, facing angle rad).
///
/// A leading header row is skipped when its first field is non-numeric. The
/// first data row must have exactly seven columns; later malformed rows are
/// tolerated up to the configured limit.
pub fn parse_trajectory_csv<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<TrajectoryParse> {
    let mut diagnostics = Vec::new();
    let mut by_agent: BTreeMap<AgentId, Vec<(usize, TrajectoryPoint)>> = BTreeMap::new();
    let mut bad_lines = Vec::new();
    let mut rows = 0usize;
    let mut seen_data = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if !seen_data && rows == 0 && looks_like_header(fields[0]) {
            diagnostics.push(Diagnostic::HeaderSkipped { line: line_no });
            seen_data = true;
            continue;
        }
        seen_data = true;
        rows += 1;
        if fields.len() != COLUMNS {
            if rows == 1 {
                return Err(Error::ColumnCount {
                    line: line_no,
                    expected: COLUMNS,
                    found: fields.len(),
                });
            }
            bad_lines.push(line_no);
            diagnostics.push(Diagnostic::MalformedRow {
                line: line_no,
                reason: format!("expected {COLUMNS} columns, found {}", fields.len()),
            });
            continue;
        }
        match parse_row(&fields) {
            Ok(p) => by_agent.entry(p.agent_id).or_default().push((line_no, p)),
            Err(reason) => {
                bad_lines.push(line_no);
                diagnostics.push(Diagnostic::MalformedRow {
                    line: line_no,
                    reason,
                });
            }
        }
    }

    let limit = opts.limit(rows);
    if bad_lines.len() > limit {
        return Err(Error::IngestFailure {
            bad_rows: bad_lines.len(),
            limit,
            lines: bad_lines,
        });
    }

    let mut trajectories = BTreeMap::new();
    for (id, mut pts) in by_agent {
        // stable sort keeps the first occurrence of a duplicate timestamp first
        pts.sort_by_key(|(_, p)| p.timestamp_ms);
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(pts.len());
        for (line, p) in pts {
            if seen.insert(p.timestamp_ms) {
                kept.push(p);
            } else {
                diagnostics.push(Diagnostic::DuplicateRecord {
                    line,
                    agent_id: id,
                    timestamp_ms: p.timestamp_ms,
                });
            }
        }
        trajectories.insert(id, Trajectory::new(id, kept)?);
    }

    Ok(TrajectoryParse {
        trajectories,
        diagnostics,
        rows,
        bad_rows: bad_lines.len(),
    })
}

fn write_point<W: Write>(out: &mut W, p: &TrajectoryPoint) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        format_timestamp(p.timestamp_ms),
        p.agent_id,
        p.x_mm,
        p.y_mm,
        p.velocity_mm_s,
        p.motion_angle_rad,
        p.face_angle_rad
    )
}

/// Writes points in the 7-column CSV layout, no header.
pub fn write_points<'a, W: Write>(
    out: &mut W,
    points: impl IntoIterator<Item = &'a TrajectoryPoint>,
) -> std::io::Result<()> {
    for p in points {
        write_point(out, p)?;
    }
    Ok(())
}

pub fn write_points_to_string(points: &[TrajectoryPoint]) -> String {
    let mut buf = Vec::new();
    write_points(&mut buf, points).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Writes every trajectory of the dataset, rows ordered by timestamp then
/// agent id.
pub fn write_trajectory_csv<W: Write>(out: &mut W, dataset: &Dataset) -> std::io::Result<()> {
    let mut pts: Vec<&TrajectoryPoint> = dataset
        .trajectories
        .values()
        .flat_map(|t| t.points())
        .collect();
    pts.sort_by_key(|p| (p.timestamp_ms, p.agent_id));
    write_points(out, pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<TrajectoryParse> {
        parse_trajectory_csv(s.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn maps_fields_in_column_order() {
        let r = parse("1368000000.5,42,1000,2000,1200,0.5,0.4\n").unwrap();
        let t = &r.trajectories[&42];
        assert_eq!(
            t.points()[0],
            TrajectoryPoint {
                timestamp_ms: 1_368_000_000_500,
                agent_id: 42,
                x_mm: 1000.0,
                y_mm: 2000.0,
                velocity_mm_s: 1200.0,
                motion_angle_rad: 0.5,
                face_angle_rad: 0.4,
            }
        );
    }

    #[test]
    fn empty_stream_is_empty_dataset() {
        let r = parse("").unwrap();
        assert!(r.trajectories.is_empty());
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn rows_are_grouped_and_sorted() {
        let r = parse("2.0,1,0,0,0,0,0\n1.0,1,0,0,0,0,0\n").unwrap();
        let ts: Vec<i64> = r.trajectories[&1].points().iter().map(|p| p.timestamp_ms).collect();
        assert_eq!(ts, vec![1000, 2000]);
    }

    #[test]
    fn header_is_detected_and_skipped() {
        let r = parse("time,id,x,y,v,m,f\n1.0,1,0,0,0,0,0\n").unwrap();
        assert_eq!(r.rows, 1);
        assert_eq!(r.diagnostics, vec![Diagnostic::HeaderSkipped { line: 1 }]);
    }

    #[test]
    fn wrong_column_count_is_rejected_up_front() {
        let err = parse("1.0,1,0,0,0,0,0,5\n").unwrap_err();
        assert!(matches!(err, Error::ColumnCount { found: 8, .. }));
    }

    #[test]
    fn malformed_rows_fail_above_threshold() {
        let mut s = String::new();
        for i in 0..100 {
            s.push_str(&format!("{i}.0,1,0,0,0,0,0\n"));
        }
        s.push_str("x.0,1,0,0,0,0,0\n");
        // 1 bad row of 101: floor(1.01) = 1 allowed
        let ok = parse(&s).unwrap();
        assert_eq!(ok.bad_rows, 1);
        s.push_str("5.0,1,zero,0,0,0,0\n");
        match parse(&s).unwrap_err() {
            Error::IngestFailure { bad_rows, lines, .. } => {
                assert_eq!(bad_rows, 2);
                assert_eq!(lines, vec![101, 102]);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicates_are_dropped_with_diagnostic() {
        let r = parse("1.0,1,0,0,0,0,0\n1.0,1,5,5,0,0,0\n").unwrap();
        assert_eq!(r.trajectories[&1].len(), 1);
        assert_eq!(r.trajectories[&1].points()[0].x_mm, 0.0);
        assert!(matches!(
            r.diagnostics[0],
            Diagnostic::DuplicateRecord { line: 2, agent_id: 1, timestamp_ms: 1000 }
        ));
    }

    #[test]
    fn timestamp_rounding_is_half_up() {
        assert_eq!(parse_timestamp_ms("1.0004"), Some(1000));
        assert_eq!(parse_timestamp_ms("1.0005"), Some(1001));
        assert_eq!(parse_timestamp_ms("1.9995"), Some(2000));
        assert_eq!(parse_timestamp_ms("1368000000"), Some(1_368_000_000_000));
        assert_eq!(parse_timestamp_ms("1.5e3"), Some(1_500_000));
        assert_eq!(parse_timestamp_ms("abc"), None);
        assert_eq!(format_timestamp(1_368_000_000_500), "1368000000.500");
    }

    proptest! {
        #[test]
        fn timestamp_format_roundtrip(ms in -10_000_000_000_000i64..10_000_000_000_000) {
            prop_assert_eq!(parse_timestamp_ms(&format_timestamp(ms)), Some(ms));
        }

        #[test]
        fn serialize_then_parse_is_identity(
            rows in proptest::collection::vec(
                (0i64..1_000_000, 0i64..5, -1e6f64..1e6, -1e6f64..1e6, 0f64..3000.0, -3.1f64..3.1, -3.1f64..3.1),
                0..40,
            )
        ) {
            let mut csv = String::new();
            for (t, id, x, y, v, m, f) in &rows {
                csv.push_str(&format!("{},{id},{x},{y},{v},{m},{f}\n", format_timestamp(*t)));
            }
            let first = parse(&csv).unwrap().into_dataset("a");
            let mut buf = Vec::new();
            write_trajectory_csv(&mut buf, &first).unwrap();
            let second = parse(std::str::from_utf8(&buf).unwrap()).unwrap().into_dataset("a");
            prop_assert_eq!(first.trajectories, second.trajectories);
        }
    }
}
