//! Synthetic survey generator and experiment harness.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{self, EstimateError, EstimatorConfig, EvalOutcome, SampleResult};
use crate::ingest::{self, RawLog};
use crate::model::{
    BeaconId, Estimate, FingerprintDatabase, GridPoint, Observation, RssRecord, Timing,
};
use crate::preprocess::{self, PreprocessError};
use crate::select::{self, SelectError, SelectionConfig, SelectionTable};
use crate::similarity::MetricKind;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Hand-held RSS perturbation. Every `pose_interval_s` the device takes a
/// new pose and each beacon's RSS shifts by a zero-mean Gaussian amount;
/// 80% of the shifts stay within `amplitude(d)`, which is `peak_db` up to
/// `knee_cm` and decays exponentially beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterProfile {
    pub peak_db: f64,
    pub knee_cm: f64,
    pub decay_cm: f64,
    pub pose_interval_s: f64,
}

impl Default for JitterProfile {
    fn default() -> Self {
        JitterProfile {
            peak_db: 16.0,
            knee_cm: 100.0,
            decay_cm: 300.0,
            pose_interval_s: 1.0,
        }
    }
}

// 80th percentile of |z| for a standard normal.
const Z80_TWO_SIDED: f64 = 1.2815515655446004;

impl JitterProfile {
    pub fn amplitude(&self, d_cm: f64) -> f64 {
        if d_cm <= self.knee_cm {
            self.peak_db
        } else {
            self.peak_db * (-(d_cm - self.knee_cm) / self.decay_cm).exp()
        }
    }

    fn std_at(&self, d_cm: f64) -> f64 {
        self.amplitude(d_cm) / Z80_TWO_SIDED
    }
}

/// Log-distance path-loss world used to generate surveys and test walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Beacon positions, cm. Beacon `i` gets id `i`.
    pub beacons: Vec<[f64; 2]>,
    pub grid: Vec<GridPoint>,
    pub path_loss_exponent: f64,
    /// Received power at `d0_cm`, dBm.
    pub p0_dbm: f64,
    pub d0_cm: f64,
    /// Per-advertisement Gaussian shadowing, dB.
    pub shadowing_std_db: f64,
    /// Vertical offset between beacons and receiver, cm.
    #[serde(default)]
    pub beacon_height_cm: f64,
    pub ta_s: f64,
    pub td_s: f64,
    pub drop_rate: f64,
    /// Advertisements weaker than this are not received.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_floor_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<JitterProfile>,
}

impl Default for Scenario {
    /// A 1500 × 1000 cm floor with 16 beacons and a 7 × 5 grid at 250 cm.
    fn default() -> Self {
        Scenario {
            beacons: default_beacons(),
            grid: rect_grid(7, 5, 250.0),
            path_loss_exponent: 2.2,
            p0_dbm: -59.0,
            d0_cm: 100.0,
            shadowing_std_db: 0.0,
            beacon_height_cm: 0.0,
            ta_s: 0.1,
            td_s: 30.0,
            drop_rate: 0.0,
            rx_floor_dbm: None,
            jitter: None,
        }
    }
}

fn default_beacons() -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6265_6163);
    (0..16)
        .map(|_| {
            let x: f64 = rng.random_range(-100.0..1600.0);
            let y: f64 = rng.random_range(-100.0..1100.0);
            [x.round(), y.round()]
        })
        .collect()
}

/// `nx × ny` grid points labelled `x_y` by index, row-major.
pub fn rect_grid(nx: usize, ny: usize, spacing_cm: f64) -> Vec<GridPoint> {
    let mut g = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            g.push(GridPoint::new(
                format!("{i}_{j}"),
                i as f64 * spacing_cm,
                j as f64 * spacing_cm,
            ));
        }
    }
    g
}

impl Scenario {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Scenario(m.to_string()));
        if !(self.path_loss_exponent > 0.0) {
            return bad("path-loss exponent must be positive");
        }
        if !(self.d0_cm > 0.0) {
            return bad("reference distance must be positive");
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return bad("drop rate must lie in [0, 1)");
        }
        if !(self.ta_s > 0.0 && self.td_s > 0.0) {
            return bad("T_a and T_d must be positive");
        }
        if !(self.shadowing_std_db >= 0.0) {
            return bad("shadowing std must be non-negative");
        }
        if self.beacons.is_empty() || self.beacons.len() > u16::MAX as usize {
            return bad("need between 1 and 65535 beacons");
        }
        if let Some(j) = &self.jitter {
            if !(j.pose_interval_s > 0.0 && j.decay_cm > 0.0 && j.peak_db >= 0.0) {
                return bad("jitter profile parameters must be positive");
            }
        }
        Ok(())
    }

    pub fn timing(&self) -> Timing {
        Timing {
            ta: self.ta_s,
            td: self.td_s,
        }
    }

    pub fn distance(&self, beacon: usize, at: [f64; 2]) -> f64 {
        let b = self.beacons[beacon];
        let (dx, dy) = (b[0] - at[0], b[1] - at[1]);
        (dx * dx + dy * dy + self.beacon_height_cm * self.beacon_height_cm)
            .sqrt()
            .max(1.0)
    }

    /// Noise-free RSS of `beacon` at `at`, dBm.
    pub fn mean_rss(&self, beacon: usize, at: [f64; 2]) -> f64 {
        self.p0_dbm
            - 10.0 * self.path_loss_exponent * (self.distance(beacon, at) / self.d0_cm).log10()
    }
}

/// Survey log: one `td_s`-long visit per grid point, in grid order.
pub fn synth_log(scenario: &Scenario, seed: u64) -> Result<RawLog, BenchError> {
    synth_walk(scenario, &scenario.grid, scenario.td_s, "survey", seed)
}

/// A log with one `dwell_s`-long visit per entry of `path`.
pub fn synth_walk(
    scenario: &Scenario,
    path: &[GridPoint],
    dwell_s: f64,
    session: &str,
    seed: u64,
) -> Result<RawLog, BenchError> {
    scenario.validate()?;
    if !(dwell_s > 0.0) {
        return Err(BenchError::Scenario("dwell time must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shadow = Normal::new(0.0, scenario.shadowing_std_db)
        .map_err(|e| BenchError::Scenario(e.to_string()))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ta = scenario.ta_s;
    let n_beacons = scenario.beacons.len();
    let mut records = Vec::new();
    let mut start = 0.0;
    for (visit, point) in path.iter().enumerate() {
        let means: Vec<f64> = (0..n_beacons)
            .map(|b| scenario.mean_rss(b, point.coord))
            .collect();
        let jitter_std: Vec<f64> = match &scenario.jitter {
            Some(j) => (0..n_beacons)
                .map(|b| j.std_at(scenario.distance(b, point.coord)))
                .collect(),
            None => vec![0.0; n_beacons],
        };
        // per-pose offsets, drawn up front so the stream does not depend on
        // drop outcomes
        let poses = scenario
            .jitter
            .map(|j| (dwell_s / j.pose_interval_s).ceil() as usize)
            .unwrap_or(0);
        let pose_offsets: Vec<Vec<f64>> = (0..poses)
            .map(|_| {
                jitter_std
                    .iter()
                    .map(|s| s * std_normal.sample(&mut rng))
                    .collect()
            })
            .collect();

        let mut visit_records = Vec::new();
        for b in 0..n_beacons {
            let phase: f64 = rng.random_range(0.0..ta);
            let mut i = 0usize;
            loop {
                let elapsed = phase + i as f64 * ta;
                if elapsed >= dwell_s {
                    break;
                }
                i += 1;
                let dropped = rng.random::<f64>() < scenario.drop_rate;
                let noise = if scenario.shadowing_std_db > 0.0 {
                    shadow.sample(&mut rng)
                } else {
                    0.0
                };
                if dropped {
                    continue;
                }
                let jitter = match &scenario.jitter {
                    Some(j) => {
                        let pose = ((elapsed / j.pose_interval_s) as usize).min(poses - 1);
                        pose_offsets[pose][b]
                    }
                    None => 0.0,
                };
                let rss = means[b] + noise + jitter;
                if scenario.rx_floor_dbm.is_some_and(|floor| rss < floor) {
                    continue;
                }
                visit_records.push(RssRecord {
                    grid_label: point.label.clone(),
                    coord: point.coord,
                    beacon: BeaconId(b as u16),
                    rss,
                    arrival_time: start + elapsed,
                    session: Some(format!("{session}-{visit}")),
                });
            }
        }
        visit_records.sort_by(|a, b| {
            a.arrival_time
                .total_cmp(&b.arrival_time)
                .then(a.beacon.cmp(&b.beacon))
        });
        records.extend(visit_records);
        start += dwell_s + 1.0;
    }
    Ok(RawLog::new(records))
}

pub fn error_of(estimate: &Estimate, truth: &GridPoint) -> f64 {
    truth.distance_to(estimate.coord)
}

/// Order statistics of a batch of errors (cm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl ErrorSummary {
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let quantile = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Some(ErrorSummary {
            n,
            mean: errors.iter().sum::<f64>() / n as f64,
            median: if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            },
            p90: quantile(0.9),
            max: sorted[n - 1],
        })
    }
}

/// Empirical CDF as (error_cm, cumulative_fraction) steps.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, e) in sorted.into_iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => out.push((e, frac)),
        }
    }
    out
}

pub fn write_cdf_csv<W: Write>(cdf: &[(f64, f64)], w: W) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["error_cm", "cumulative_fraction"])?;
    for (e, f) in cdf {
        wtr.write_record([e.to_string(), f.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-sample errors, one JSON object per line.
pub fn write_errors_jsonl<W: Write>(samples: &[SampleResult], mut w: W) -> Result<(), BenchError> {
    for s in samples {
        let line = serde_json::to_string(s).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub protocol: String,
    pub failed: usize,
    pub summary: Option<ErrorSummary>,
}

/// Mean error of each metric on the same observation set.
pub fn run_metric_comparison(
    db: &FingerprintDatabase,
    observations: &[Observation],
    metrics: &[MetricKind],
    base: &EstimatorConfig,
    selection: Option<&SelectionTable>,
    protocol_tag: &str,
) -> Result<Vec<MetricRow>, BenchError> {
    metrics
        .par_iter()
        .map(|m| {
            let cfg = EstimatorConfig {
                metric: *m,
                ..*base
            };
            let out = estimator::evaluate_observations(db, observations, &cfg, selection)?;
            Ok(MetricRow {
                metric: m.to_string(),
                protocol: protocol_tag.to_string(),
                failed: out.failed,
                summary: ErrorSummary::from_errors(&out.errors()),
            })
        })
        .collect()
}

pub fn write_metric_table<W: Write>(rows: &[MetricRow], w: W) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "metric",
        "protocol",
        "n",
        "failed",
        "mean_cm",
        "median_cm",
        "p90_cm",
        "max_cm",
    ])?;
    for r in rows {
        let mut rec = vec![r.metric.clone(), r.protocol.clone()];
        match &r.summary {
            Some(s) => rec.extend([
                s.n.to_string(),
                r.failed.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.p90.to_string(),
                s.max.to_string(),
            ]),
            None => rec.extend([
                "0".into(),
                r.failed.to_string(),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
            ]),
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub selection: bool,
    pub failed: usize,
    pub summary: Option<ErrorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub rows: Vec<KRow>,
    /// Per-sample errors of every cell, keyed like `rows`.
    pub errors: Vec<Vec<f64>>,
}

impl KSweep {
    pub fn mean(&self, k: usize, selection: bool) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.selection == selection)
            .and_then(|r| r.summary.map(|s| s.mean))
    }
}

/// Error per k without selection and, when a table is given, with it.
pub fn run_k_sweep(
    db: &FingerprintDatabase,
    observations: &[Observation],
    base: &EstimatorConfig,
    ks: &[usize],
    selection: Option<&SelectionTable>,
) -> Result<KSweep, BenchError> {
    let mut cells: Vec<(usize, Option<&SelectionTable>)> = Vec::new();
    for &k in ks {
        cells.push((k, None));
        if let Some(t) = selection {
            cells.push((k, Some(t)));
        }
    }
    let outs: Vec<(usize, bool, EvalOutcome)> = cells
        .par_iter()
        .map(|&(k, sel)| {
            let cfg = EstimatorConfig { k, ..*base };
            estimator::evaluate_observations(db, observations, &cfg, sel)
                .map(|o| (k, sel.is_some(), o))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(outs.len());
    let mut errors = Vec::with_capacity(outs.len());
    for (k, selection, out) in outs {
        let e = out.errors();
        rows.push(KRow {
            k,
            selection,
            failed: out.failed,
            summary: ErrorSummary::from_errors(&e),
        });
        errors.push(e);
    }
    Ok(KSweep { rows, errors })
}

pub fn write_k_table<W: Write>(sweep: &KSweep, w: W) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "k",
        "selection",
        "n",
        "failed",
        "mean_cm",
        "median_cm",
        "p90_cm",
    ])?;
    for r in &sweep.rows {
        let (n, mean, median, p90) = match &r.summary {
            Some(s) => (
                s.n.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.p90.to_string(),
            ),
            None => ("0".into(), String::new(), String::new(), String::new()),
        };
        wtr.write_record([
            r.k.to_string(),
            if r.selection { "on" } else { "off" }.to_string(),
            n,
            r.failed.to_string(),
            mean,
            median,
            p90,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Step-by-step estimates along a walk. Steps that cannot be localised are
/// left out.
pub fn replay_path(
    db: &FingerprintDatabase,
    path_observations: &[Observation],
    config: &EstimatorConfig,
    selection: Option<&SelectionTable>,
) -> Vec<(usize, Estimate)> {
    path_observations
        .par_iter()
        .enumerate()
        .filter_map(|(i, o)| {
            estimator::estimate(db, o, config, selection)
                .ok()
                .map(|e| (i, e))
        })
        .collect()
}

/// Truth and estimate tracks side by side.
pub fn write_track_csv<W: Write>(
    observations: &[Observation],
    track: &[(usize, Estimate)],
    w: W,
) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["step", "truth_x", "truth_y", "est_x", "est_y", "error_cm"])?;
    for (i, est) in track {
        let (tx, ty, err) = match &observations[*i].truth {
            Some(t) => (
                t.coord[0].to_string(),
                t.coord[1].to_string(),
                error_of(est, t).to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        wtr.write_record([
            i.to_string(),
            tx,
            ty,
            est.coord[0].to_string(),
            est.coord[1].to_string(),
            err,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Grid points in boustrophedon order along rows of equal y.
pub fn serpentine_path(grid: &[GridPoint]) -> Vec<GridPoint> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| {
        a.coord[1]
            .total_cmp(&b.coord[1])
            .then(a.coord[0].total_cmp(&b.coord[0]))
    });
    let mut out = Vec::with_capacity(sorted.len());
    let mut row: Vec<GridPoint> = Vec::new();
    let mut flip = false;
    for p in sorted {
        if row.last().is_some_and(|r| r.coord[1] != p.coord[1]) {
            if flip {
                row.reverse();
            }
            out.append(&mut row);
            flip = !flip;
        }
        row.push(p);
    }
    if flip {
        row.reverse();
    }
    out.append(&mut row);
    out
}

/// Random walk over `grid`: each step moves to a uniformly chosen other grid
/// point within `max_step_cm`, or stays put when there is none. With
/// `corridor_y` the walk is restricted to points on that row.
pub fn random_walk(
    grid: &[GridPoint],
    steps: usize,
    max_step_cm: f64,
    corridor_y: Option<f64>,
    seed: u64,
) -> Vec<GridPoint> {
    let pool: Vec<&GridPoint> = grid
        .iter()
        .filter(|g| corridor_y.is_none_or(|y| (g.coord[1] - y).abs() < 1e-9))
        .collect();
    if pool.is_empty() || steps == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = rng.random_range(0..pool.len());
    let mut walk = vec![pool[cur].clone()];
    for _ in 1..steps {
        let here = pool[cur].coord;
        let options: Vec<usize> = (0..pool.len())
            .filter(|&i| i != cur && pool[i].distance_to(here) <= max_step_cm)
            .collect();
        if !options.is_empty() {
            cur = options[rng.random_range(0..options.len())];
        }
        walk.push(pool[cur].clone());
    }
    walk
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterTrial {
    pub seed: u64,
    pub mean_on: f64,
    pub mean_off: f64,
}

/// Parameters of the selection-versus-no-selection study under hand jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterStudy {
    pub scenario: Scenario,
    pub estimator: EstimatorConfig,
    pub s: usize,
    pub eta: f64,
    pub window: usize,
    /// Dwell per grid point in the test walk, seconds.
    pub test_dwell_s: f64,
}

impl Default for JitterStudy {
    fn default() -> Self {
        JitterStudy {
            scenario: Scenario {
                shadowing_std_db: 2.0,
                drop_rate: 0.05,
                jitter: Some(JitterProfile::default()),
                ..Scenario::default()
            },
            estimator: EstimatorConfig::new(MetricKind::Gaussian { sigma: 8.0 }, 1),
            s: 10,
            eta: 0.2,
            window: preprocess::DEFAULT_WINDOW,
            test_dwell_s: 5.0,
        }
    }
}

/// Survey with jitter, test on fixed 1 s windows, compare selection on/off.
pub fn run_jitter_trial(study: &JitterStudy, seed: u64) -> Result<JitterTrial, BenchError> {
    let sc = &study.scenario;
    let survey = synth_log(sc, seed)?;
    let db = preprocess::build_database(&survey, study.window, sc.timing())?;
    let table = select::select_all(
        &db,
        &SelectionConfig {
            s: study.s,
            eta: study.eta,
            timing: db.timing,
        },
    )?;
    let walk = synth_walk(sc, &sc.grid, study.test_dwell_s, "test", seed ^ 0x7465_7374)?;
    let obs = ingest::consolidate_protocol2(&walk, ingest::PROTOCOL2_WINDOW_S);
    let on = estimator::evaluate_observations(&db, &obs, &study.estimator, Some(&table))?;
    let off = estimator::evaluate_observations(&db, &obs, &study.estimator, None)?;
    Ok(JitterTrial {
        seed,
        mean_on: on.mean_error().unwrap_or(f64::NAN),
        mean_off: off.mean_error().unwrap_or(f64::NAN),
    })
}
