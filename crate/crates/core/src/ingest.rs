//! Raw scan-log parsing and consolidation of logs into observations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BeaconId, GridPoint, Observation, RssRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("unknown beacon id(s): {}", .ids.join(", "))]
    UnknownBeacon { ids: Vec<String> },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How arrival times are encoded in the CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    /// Decimal seconds.
    #[default]
    Seconds,
    /// Integer or decimal milliseconds.
    Millis,
    /// Clock time `HH:MM:SS(.fff)`.
    Clock,
}

/// Whether timestamps are already session-relative or absolute (epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOrigin {
    #[default]
    Relative,
    /// Absolute times; rebased so that the earliest record is at zero.
    Epoch,
}

/// Maps CSV columns onto record fields. Loaded from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub grid_label: String,
    pub rss: String,
    pub arrival_time: String,
    pub beacon: String,
    /// Columns with grid coordinates. When absent, the label is parsed
    /// as `x<sep>y`.
    #[serde(default)]
    pub x: Option<String>,
    #[serde(default)]
    pub y: Option<String>,
    #[serde(default = "default_label_separator")]
    pub label_separator: String,
    /// Multiplier applied to coordinates to obtain centimetres.
    #[serde(default = "one")]
    pub coord_scale: f64,
    #[serde(default)]
    pub session: Option<String>,
    #[serde(default)]
    pub time_format: TimeFormat,
    #[serde(default)]
    pub time_origin: TimeOrigin,
    /// Raw beacon identifiers; position in the list is the [`BeaconId`].
    /// When absent, raw identifiers must be non-negative integers.
    #[serde(default)]
    pub beacons: Option<Vec<String>>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_label_separator() -> String {
    "_".to_string()
}

fn default_delimiter() -> char {
    ','
}

fn one() -> f64 {
    1.0
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            grid_label: "grid_label".into(),
            rss: "rss".into(),
            arrival_time: "arrival_time".into(),
            beacon: "beacon".into(),
            x: Some("x".into()),
            y: Some("y".into()),
            label_separator: default_label_separator(),
            coord_scale: 1.0,
            session: None,
            time_format: TimeFormat::Seconds,
            time_origin: TimeOrigin::Relative,
            beacons: None,
            delimiter: ',',
        }
    }
}

impl CsvSchema {
    pub fn from_json_file(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.x.is_some() != self.y.is_some() {
            return Err(IngestError::Schema(
                "x and y columns must be given together".into(),
            ));
        }
        if !(self.coord_scale.is_finite() && self.coord_scale > 0.0) {
            return Err(IngestError::Schema("coord_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Which kind of test data a log holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataType {
    /// Receiver placed on the floor at the grid point.
    Floor = 1,
    /// Receiver held in the hand.
    Hand = 2,
}

/// Parsed scan log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawLog {
    pub records: Vec<RssRecord>,
    #[serde(default)]
    pub device: Option<String>,
    #[serde(default)]
    pub data_type: Option<DataType>,
}

impl RawLog {
    pub fn new(records: Vec<RssRecord>) -> Self {
        RawLog {
            records,
            device: None,
            data_type: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct beacons present in the log.
    pub fn beacon_universe(&self) -> BTreeSet<BeaconId> {
        self.records.iter().map(|r| r.beacon).collect()
    }

    fn has_sessions(&self) -> bool {
        self.records.iter().any(|r| r.session.is_some())
    }

    /// Schema matching the output of [`RawLog::write_csv`].
    pub fn csv_schema(&self) -> CsvSchema {
        CsvSchema {
            session: self.has_sessions().then(|| "session".to_string()),
            ..CsvSchema::default()
        }
    }

    /// Contiguous runs of records sharing session and grid label.
    pub fn visits(&self) -> Vec<&[RssRecord]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            let boundary = i == self.records.len() || {
                let (a, b) = (&self.records[i - 1], &self.records[i]);
                a.grid_label != b.grid_label || a.session != b.session
            };
            if boundary && i > start {
                out.push(&self.records[start..i]);
                start = i;
            }
        }
        out
    }

    /// Write the log as CSV with the column names of [`CsvSchema::default`],
    /// plus a `session` column when any record carries one (see
    /// [`RawLog::csv_schema`]).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IngestError> {
        let with_session = self.has_sessions();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["grid_label", "x", "y", "beacon", "rss", "arrival_time"];
        if with_session {
            header.push("session");
        }
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.grid_label.clone(),
                fmt_num(r.coord[0]),
                fmt_num(r.coord[1]),
                r.beacon.0.to_string(),
                fmt_num(r.rss),
                fmt_num(r.arrival_time),
            ];
            if with_session {
                row.push(r.session.clone().unwrap_or_default());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v}")
}

struct Columns {
    label: usize,
    rss: usize,
    time: usize,
    beacon: usize,
    xy: Option<(usize, usize)>,
    session: Option<usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::Schema(format!("column {name:?} not found in header")))
}

fn parse_clock(s: &str) -> Option<f64> {
    let mut parts = s.split(':');
    let h: f64 = parts.next()?.trim().parse().ok()?;
    let m: f64 = parts.next()?.trim().parse().ok()?;
    let sec: f64 = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some(h * 3600.0 + m * 60.0 + sec)
}

/// Parse a scan log from a CSV file.
pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<RawLog, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_reader(BufReader::new(file), schema)
}

/// Parse a scan log from any reader. Row numbers in errors count data rows
/// from 1, excluding the header.
pub fn parse_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawLog, IngestError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns {
        label: column(&headers, &schema.grid_label)?,
        rss: column(&headers, &schema.rss)?,
        time: column(&headers, &schema.arrival_time)?,
        beacon: column(&headers, &schema.beacon)?,
        xy: match (&schema.x, &schema.y) {
            (Some(x), Some(y)) => Some((column(&headers, x)?, column(&headers, y)?)),
            _ => None,
        },
        session: schema
            .session
            .as_deref()
            .map(|s| column(&headers, s))
            .transpose()?,
    };
    let beacon_index: Option<HashMap<&str, u16>> = schema.beacons.as_ref().map(|list| {
        list.iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u16))
            .collect()
    });

    let mut records = Vec::new();
    let mut unknown = BTreeSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let get = |idx: usize| -> Result<&str, IngestError> {
            row.get(idx).ok_or_else(|| IngestError::Row {
                row: row_no,
                message: format!("missing field {idx}"),
            })
        };
        let num = |idx: usize, what: &str| -> Result<f64, IngestError> {
            let s = get(idx)?;
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::Row {
                    row: row_no,
                    message: format!("{what} is not a finite number: {s:?}"),
                }),
            }
        };

        let label = get(cols.label)?.to_string();
        let rss = num(cols.rss, "rss")?;
        let raw_time = get(cols.time)?;
        let time = match schema.time_format {
            TimeFormat::Seconds => raw_time.parse::<f64>().ok(),
            TimeFormat::Millis => raw_time.parse::<f64>().ok().map(|v| v / 1000.0),
            TimeFormat::Clock => parse_clock(raw_time),
        }
        .filter(|t| t.is_finite())
        .ok_or_else(|| IngestError::Row {
            row: row_no,
            message: format!("arrival time is not valid: {raw_time:?}"),
        })?;
        let coord = match cols.xy {
            Some((xi, yi)) => [num(xi, "x")?, num(yi, "y")?],
            None => parse_label_coord(&label, &schema.label_separator).ok_or_else(|| {
                IngestError::Row {
                    row: row_no,
                    message: format!("cannot read coordinates from grid label {label:?}"),
                }
            })?,
        };
        let coord = [coord[0] * schema.coord_scale, coord[1] * schema.coord_scale];

        let raw_beacon = get(cols.beacon)?;
        let beacon = match &beacon_index {
            Some(map) => map.get(raw_beacon).copied(),
            None => raw_beacon.parse::<u16>().ok(),
        };
        let Some(beacon) = beacon else {
            unknown.insert(raw_beacon.to_string());
            continue;
        };
        let session = cols
            .session
            .map(|s| get(s).map(str::to_string))
            .transpose()?;
        records.push(RssRecord {
            grid_label: label,
            coord,
            beacon: BeaconId(beacon),
            rss,
            arrival_time: time,
            session,
        });
    }
    if !unknown.is_empty() {
        return Err(IngestError::UnknownBeacon {
            ids: unknown.into_iter().collect(),
        });
    }
    if schema.time_origin == TimeOrigin::Epoch {
        let t0 = records
            .iter()
            .map(|r| r.arrival_time)
            .fold(f64::INFINITY, f64::min);
        for r in &mut records {
            r.arrival_time -= t0;
        }
    }
    if let Some(r) = records.iter().position(|r| r.arrival_time < 0.0) {
        return Err(IngestError::Row {
            row: r + 1,
            message: "negative arrival time (use time_origin = \"epoch\" for absolute times)"
                .into(),
        });
    }
    Ok(RawLog::new(records))
}

fn parse_label_coord(label: &str, sep: &str) -> Option<[f64; 2]> {
    let (x, y) = label.split_once(sep)?;
    Some([x.trim().parse().ok()?, y.trim().parse().ok()?])
}

fn truth_of(rec: &RssRecord) -> GridPoint {
    GridPoint {
        label: rec.grid_label.clone(),
        coord: rec.coord,
    }
}

/// Scan-until-all-beacons-seen consolidation.
///
/// Within each grid visit the latest RSS per universe beacon is kept; as
/// soon as every universe beacon has been seen since the last emission an
/// observation is emitted and accumulation restarts. Beacons outside the
/// universe are ignored.
pub fn consolidate_protocol1(log: &RawLog, universe: &BTreeSet<BeaconId>) -> Vec<Observation> {
    if universe.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for visit in log.visits() {
        let mut latest: BTreeMap<BeaconId, f64> = BTreeMap::new();
        let mut start = None;
        for rec in visit {
            if !universe.contains(&rec.beacon) {
                continue;
            }
            let t0 = *start.get_or_insert(rec.arrival_time);
            latest.insert(rec.beacon, rec.rss);
            if latest.len() == universe.len() {
                out.push(Observation {
                    values: std::mem::take(&mut latest),
                    window: (t0, rec.arrival_time),
                    truth: Some(truth_of(rec)),
                });
                start = None;
            }
        }
    }
    out
}

/// Default window length of the fixed-duration protocol, seconds.
pub const PROTOCOL2_WINDOW_S: f64 = 1.0;

// Absorbs float error in accumulated elapsed times.
const WINDOW_EPS: f64 = 1e-9;

/// Fixed-duration consolidation.
///
/// Each grid visit is cut into consecutive windows of `window_s` seconds of
/// elapsed arrival time, measured from the first record of the window.
/// Repeated samples from one beacon inside a window are averaged. A trailing
/// partial window is emitted when it holds any record.
pub fn consolidate_protocol2(log: &RawLog, window_s: f64) -> Vec<Observation> {
    let mut out = Vec::new();
    for visit in log.visits() {
        for w in window_bounds(visit, window_s) {
            out.push(average_window(&visit[w.clone()]));
        }
    }
    out
}

/// Index ranges of the windows that partition one visit.
pub fn window_bounds(visit: &[RssRecord], window_s: f64) -> Vec<std::ops::Range<usize>> {
    let mut bounds = Vec::new();
    let mut start = 0;
    let mut elapsed = 0.0;
    for i in 1..visit.len() {
        elapsed += visit[i].arrival_time - visit[i - 1].arrival_time;
        if elapsed >= window_s - WINDOW_EPS {
            bounds.push(start..i);
            start = i;
            elapsed = 0.0;
        }
    }
    if start < visit.len() {
        bounds.push(start..visit.len());
    }
    bounds
}

fn average_window(recs: &[RssRecord]) -> Observation {
    let mut acc: BTreeMap<BeaconId, (f64, usize)> = BTreeMap::new();
    for r in recs {
        let e = acc.entry(r.beacon).or_insert((0.0, 0));
        e.0 += r.rss;
        e.1 += 1;
    }
    let first = &recs[0];
    Observation {
        values: acc
            .into_iter()
            .map(|(b, (sum, n))| (b, sum / n as f64))
            .collect(),
        window: (first.arrival_time, recs[recs.len() - 1].arrival_time),
        truth: Some(truth_of(first)),
    }
}

/// Write observations as JSON lines.
pub fn write_jsonl<W: Write>(obs: &[Observation], mut w: W) -> Result<(), IngestError> {
    for o in obs {
        serde_json::to_writer(&mut w, o)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read observations written by [`write_jsonl`].
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Observation>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::Row {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: &str, beacon: u16, rss: f64, t: f64) -> RssRecord {
        RssRecord {
            grid_label: label.into(),
            coord: [0.0, 0.0],
            beacon: BeaconId(beacon),
            rss,
            arrival_time: t,
            session: None,
        }
    }

    #[test]
    fn parses_three_rows() {
        let csv = "grid_label,x,y,beacon,rss,arrival_time\n\
                   0_0,0,0,1,-60,0.0\n\
                   0_0,0,0,2,-70,0.1\n\
                   0_0,0,0,1,-61,0.2\n";
        let log = parse_csv_reader(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.records[1].beacon, BeaconId(2));
        assert_eq!(log.records[2].rss, -61.0);
    }

    #[test]
    fn non_numeric_rss_names_row() {
        let csv = "grid_label,x,y,beacon,rss,arrival_time\n\
                   0_0,0,0,1,-60,0.0\n\
                   0_0,0,0,1,abc,0.1\n";
        let err = parse_csv_reader(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        match err {
            IngestError::Row { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_beacon_lists_ids() {
        let schema = CsvSchema {
            beacons: Some(vec!["AA".into(), "BB".into()]),
            ..CsvSchema::default()
        };
        let csv = "grid_label,x,y,beacon,rss,arrival_time\n\
                   0_0,0,0,AA,-60,0.0\n\
                   0_0,0,0,ZZ,-60,0.1\n\
                   0_0,0,0,CC,-60,0.2\n";
        let err = parse_csv_reader(csv.as_bytes(), &schema).unwrap_err();
        match err {
            IngestError::UnknownBeacon { ids } => assert_eq!(ids, vec!["CC", "ZZ"]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn label_coordinates_and_epoch_times() {
        let schema = CsvSchema {
            x: None,
            y: None,
            time_format: TimeFormat::Millis,
            time_origin: TimeOrigin::Epoch,
            coord_scale: 100.0,
            ..CsvSchema::default()
        };
        let csv = "grid_label,beacon,rss,arrival_time\n\
                   1.5_2,0,-60,1600000000000\n\
                   1.5_2,0,-60,1600000000250\n";
        let log = parse_csv_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(log.records[0].coord, [150.0, 200.0]);
        assert_eq!(log.records[0].arrival_time, 0.0);
        assert!((log.records[1].arrival_time - 0.25).abs() < 1e-12);
    }

    #[test]
    fn clock_times() {
        assert_eq!(parse_clock("01:02:03.5"), Some(3723.5));
        assert_eq!(parse_clock("1:2"), None);
    }

    #[test]
    fn protocol1_two_full_cycles() {
        let universe: BTreeSet<_> = [0, 1, 2].map(BeaconId).into();
        let log = RawLog::new(vec![
            rec("a", 0, -60.0, 0.0),
            rec("a", 1, -61.0, 0.1),
            rec("a", 0, -65.0, 0.2),
            rec("a", 2, -62.0, 0.3),
            rec("a", 2, -63.0, 0.4),
            rec("a", 1, -64.0, 0.5),
            rec("a", 0, -66.0, 0.6),
        ]);
        let obs = consolidate_protocol1(&log, &universe);
        assert_eq!(obs.len(), 2);
        // latest value wins inside a cycle
        assert_eq!(obs[0].values[&BeaconId(0)], -65.0);
        assert_eq!(obs[0].window, (0.0, 0.3));
        assert_eq!(obs[1].values.len(), 3);
        assert_eq!(obs[1].window, (0.4, 0.6));
    }

    #[test]
    fn protocol1_missing_beacon_emits_nothing() {
        let universe: BTreeSet<_> = [0, 1, 2].map(BeaconId).into();
        let log = RawLog::new(
            (0..50)
                .map(|i| rec("a", i % 2, -60.0, i as f64 * 0.1))
                .collect(),
        );
        assert!(consolidate_protocol1(&log, &universe).is_empty());
    }

    #[test]
    fn protocol1_does_not_span_visits() {
        let universe: BTreeSet<_> = [0, 1].map(BeaconId).into();
        let log = RawLog::new(vec![
            rec("a", 0, -60.0, 0.0),
            rec("b", 1, -60.0, 0.1),
            rec("b", 0, -60.0, 0.2),
        ]);
        let obs = consolidate_protocol1(&log, &universe);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].truth.as_ref().unwrap().label, "b");
    }

    #[test]
    fn protocol2_two_and_a_half_seconds() {
        let log = RawLog::new(
            (0..=25)
                .map(|i| rec("a", 0, -60.0, i as f64 * 0.1))
                .collect(),
        );
        let obs = consolidate_protocol2(&log, 1.0);
        assert_eq!(obs.len(), 3);
        assert!(obs.iter().all(|o| o.values[&BeaconId(0)] == -60.0));
    }

    #[test]
    fn protocol2_averages_duplicates() {
        let mut recs: Vec<_> = (0..10)
            .map(|i| rec("a", 0, -60.0, i as f64 * 0.05))
            .collect();
        recs.push(rec("a", 1, -70.0, 0.6));
        recs.push(rec("a", 1, -80.0, 0.7));
        let obs = consolidate_protocol2(&RawLog::new(recs), 1.0);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].values[&BeaconId(0)], -60.0);
        assert_eq!(obs[0].values[&BeaconId(1)], -75.0);
    }

    #[test]
    fn window_bounds_partition_visit() {
        let visit: Vec<_> = (0..37)
            .map(|i| rec("a", 0, -60.0, i as f64 * 0.13))
            .collect();
        let bounds = window_bounds(&visit, 1.0);
        let mut next = 0;
        for b in &bounds {
            assert_eq!(b.start, next);
            assert!(b.end > b.start);
            next = b.end;
        }
        assert_eq!(next, visit.len());
    }

    #[test]
    fn jsonl_round_trip() {
        let log = RawLog::new(
            (0..25)
                .map(|i| rec("a", i % 3, -60.0 - i as f64, i as f64 * 0.1))
                .collect(),
        );
        let obs = consolidate_protocol2(&log, 1.0);
        let mut buf = Vec::new();
        write_jsonl(&obs, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, obs);
    }
}
