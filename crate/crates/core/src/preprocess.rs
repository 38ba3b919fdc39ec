//! Outlier smoothing and radio-map construction from survey logs.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::RawLog;
use crate::model::{
    BeaconId, Fingerprint, FingerprintDatabase, GridPoint, RssSeries, Timing, DATABASE_VERSION,
};
use crate::similarity;

/// Moving-average window used for the survey data.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("moving-average window must be at least 1")]
    ZeroWindow,
    #[error("grid label {label:?} appears with coordinates {a:?} and {b:?}")]
    ConflictingCoordinates {
        label: String,
        a: [f64; 2],
        b: [f64; 2],
    },
    #[error("survey log is empty")]
    EmptyLog,
    #[error("fingerprints {a:?} and {b:?} are not distinguishable (correlation {score})")]
    NotUnique { a: String, b: String, score: f64 },
    #[error("database file: {0}")]
    Io(#[from] std::io::Error),
    #[error("database json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported database version {0}")]
    Version(u32),
}

/// Trailing moving average. Sample `i` becomes the mean of the raw samples
/// `max(0, i + 1 - window) ..= i`; timestamps are kept.
pub fn moving_average(series: &RssSeries, window: usize) -> Result<RssSeries, PreprocessError> {
    if window == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    let mut out = Vec::with_capacity(series.samples.len());
    let mut sum = 0.0;
    for (i, &(t, v)) in series.samples.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series.samples[i - window].1;
        }
        let n = (i + 1).min(window);
        out.push((t, sum / n as f64));
    }
    // Recompute exactly where the running sum would drift on long series.
    if series.samples.len() > 4096 {
        for (i, s) in out.iter_mut().enumerate() {
            let lo = (i + 1).saturating_sub(window);
            let w = &series.samples[lo..=i];
            s.1 = w.iter().map(|p| p.1).sum::<f64>() / w.len() as f64;
        }
    }
    Ok(RssSeries {
        beacon: series.beacon,
        samples: out,
    })
}

/// Mean and population variance.
pub fn mean_variance(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64, usize)> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var, v.len()))
}

/// Smooth each beacon series, then time-average it. Beacons with no samples
/// are left out of the fingerprint entirely.
pub fn build_fingerprint(
    series_set: &BTreeMap<BeaconId, RssSeries>,
    grid: GridPoint,
    window: usize,
) -> Result<Fingerprint, PreprocessError> {
    let mut values = BTreeMap::new();
    let mut variances = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (&beacon, series) in series_set {
        let filtered = moving_average(series, window)?;
        if let Some((mean, var, n)) = mean_variance(filtered.values()) {
            values.insert(beacon, mean);
            variances.insert(beacon, var);
            counts.insert(beacon, n);
        }
    }
    Ok(Fingerprint {
        grid,
        values,
        variances,
        counts,
    })
}

/// Group a survey log by grid point and beacon.
pub fn group_series(
    log: &RawLog,
) -> Result<Vec<(GridPoint, BTreeMap<BeaconId, RssSeries>)>, PreprocessError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(GridPoint, BTreeMap<BeaconId, Vec<(f64, f64)>>)> = Vec::new();
    for r in &log.records {
        let slot = *index.entry(r.grid_label.as_str()).or_insert_with(|| {
            groups.push((
                GridPoint {
                    label: r.grid_label.clone(),
                    coord: r.coord,
                },
                BTreeMap::new(),
            ));
            groups.len() - 1
        });
        let (grid, series) = &mut groups[slot];
        if grid.coord != r.coord {
            return Err(PreprocessError::ConflictingCoordinates {
                label: r.grid_label.clone(),
                a: grid.coord,
                b: r.coord,
            });
        }
        series
            .entry(r.beacon)
            .or_default()
            .push((r.arrival_time, r.rss));
    }
    Ok(groups
        .into_iter()
        .map(|(g, s)| {
            let s = s
                .into_iter()
                .map(|(b, samples)| (b, RssSeries::new(b, samples)))
                .collect();
            (g, s)
        })
        .collect())
}

/// Build the radio map: one fingerprint per distinct grid label, with the
/// uniqueness of every fingerprint pair checked under the correlation
/// similarity.
pub fn build_database(
    log: &RawLog,
    window: usize,
    timing: Timing,
) -> Result<FingerprintDatabase, PreprocessError> {
    if window == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    if log.is_empty() {
        return Err(PreprocessError::EmptyLog);
    }
    let groups = group_series(log)?;
    let fingerprints = groups
        .into_par_iter()
        .map(|(grid, series)| build_fingerprint(&series, grid, window))
        .collect::<Result<Vec<_>, _>>()?;
    let db = FingerprintDatabase::new(fingerprints, timing, window);
    check_uniqueness(&db)?;
    Ok(db)
}

/// Summary of the pairwise uniqueness check.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub pairs_checked: usize,
    /// Pairs for which the correlation is undefined (constant or too short
    /// common vectors).
    pub pairs_undefined: usize,
    pub max_score: f64,
}

// Pearson correlations this close to one are treated as identical.
const UNIQUE_EPS: f64 = 1e-12;

/// Verify that every pair of distinct fingerprints has correlation below one.
pub fn check_uniqueness(db: &FingerprintDatabase) -> Result<UniquenessReport, PreprocessError> {
    let fps = &db.fingerprints;
    let rows: Vec<(usize, usize, f64)> = (0..fps.len())
        .into_par_iter()
        .map(|i| {
            let mut undefined = 0;
            let mut checked = 0;
            let mut max_score = f64::NEG_INFINITY;
            for j in i + 1..fps.len() {
                let score = similarity::align(&fps[i].values, &fps[j].values)
                    .ok()
                    .and_then(|(a, b)| similarity::pearson(&a, &b));
                match score {
                    Some(r) => {
                        checked += 1;
                        if r > max_score {
                            max_score = r;
                        }
                    }
                    None => undefined += 1,
                }
            }
            (checked, undefined, max_score)
        })
        .collect();
    let mut report = UniquenessReport {
        pairs_checked: 0,
        pairs_undefined: 0,
        max_score: f64::NEG_INFINITY,
    };
    for (c, u, m) in rows {
        report.pairs_checked += c;
        report.pairs_undefined += u;
        report.max_score = report.max_score.max(m);
    }
    if report.max_score >= 1.0 - UNIQUE_EPS {
        // Locate the offending pair for the message.
        for i in 0..fps.len() {
            for j in i + 1..fps.len() {
                let r = similarity::align(&fps[i].values, &fps[j].values)
                    .ok()
                    .and_then(|(a, b)| similarity::pearson(&a, &b));
                if let Some(r) = r.filter(|r| *r >= 1.0 - UNIQUE_EPS) {
                    return Err(PreprocessError::NotUnique {
                        a: fps[i].grid.label.clone(),
                        b: fps[j].grid.label.clone(),
                        score: r,
                    });
                }
            }
        }
    }
    Ok(report)
}

pub fn save_database(db: &FingerprintDatabase, path: &Path) -> Result<(), PreprocessError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, db)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_database(path: &Path) -> Result<FingerprintDatabase, PreprocessError> {
    let db: FingerprintDatabase = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if db.version != DATABASE_VERSION {
        return Err(PreprocessError::Version(db.version));
    }
    Ok(db)
}
