//! Top-k fingerprint retrieval and weighted location estimates.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, RawLog};
use crate::model::{Estimate, FingerprintDatabase, GridPoint, Neighbor, Observation};
use crate::select::{self, SelectError, SelectionConfig, SelectionTable};
use crate::similarity::{self, AlignMode, MetricKind, SimilarityError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("k must lie in 1..={m}, got {k}")]
    BadK { k: usize, m: usize },
    #[error("observation shares no beacons with any fingerprint")]
    NoCommonBeacons,
    #[error("no selection set for grid point {0:?}")]
    MissingSelection(String),
    #[error("observation has no ground-truth location")]
    MissingTruth,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// How neighbour coordinates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    Uniform,
    Similarity,
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "similarity" => Ok(WeightScheme::Similarity),
            other => Err(format!("unknown weighting scheme {other:?}")),
        }
    }
}

/// Everything needed to turn an observation into an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub metric: MetricKind,
    pub k: usize,
    pub scheme: WeightScheme,
    #[serde(default)]
    pub align: AlignMode,
}

impl EstimatorConfig {
    pub fn new(metric: MetricKind, k: usize) -> Self {
        EstimatorConfig {
            metric,
            k,
            scheme: WeightScheme::Uniform,
            align: AlignMode::Intersection,
        }
    }
}

/// The `k` grid labels with the highest similarity, best first; equal
/// scores are ordered by grid label. Fingerprints that cannot be compared
/// with the observation are skipped.
pub fn top_k(
    db: &FingerprintDatabase,
    o: &Observation,
    metric: &MetricKind,
    k: usize,
    selection: Option<&SelectionTable>,
    align: AlignMode,
) -> Result<Vec<(String, f64)>, EstimateError> {
    if k == 0 || k > db.len() {
        return Err(EstimateError::BadK { k, m: db.len() });
    }
    metric.validate()?;
    let aligned = db
        .fingerprints
        .iter()
        .map(|fp| match selection {
            None => Ok(similarity::align_with(&fp.values, &o.values, align)),
            Some(table) => {
                let sel = table
                    .get(&fp.grid.label)
                    .ok_or_else(|| EstimateError::MissingSelection(fp.grid.label.clone()))?;
                let f = select::refine_values(&fp.values, sel);
                let obs = select::refine_values(&o.values, sel);
                Ok(similarity::align_with(&f, &obs, align))
            }
        })
        .collect::<Result<Vec<_>, EstimateError>>()?;
    let scores = similarity::score_candidates(metric, &aligned);
    let mut ranked: Vec<(&str, f64)> = db
        .fingerprints
        .iter()
        .zip(scores)
        .filter_map(|(fp, s)| s.ok().map(|s| (fp.grid.label.as_str(), s)))
        .collect();
    if ranked.is_empty() {
        return Err(EstimateError::NoCommonBeacons);
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|(l, s)| (l.to_string(), s))
        .collect())
}

/// Neighbour weights summing to one. Similarity weighting with a zero
/// score total falls back to uniform.
pub fn weights(scores: &[f64], scheme: WeightScheme) -> Vec<f64> {
    let k = scores.len();
    if k == 0 {
        return Vec::new();
    }
    let uniform = || vec![1.0 / k as f64; k];
    match scheme {
        WeightScheme::Uniform => uniform(),
        WeightScheme::Similarity => {
            let total: f64 = scores.iter().sum();
            if total > 0.0 {
                scores.iter().map(|s| s / total).collect()
            } else {
                log::debug!("all neighbour scores are zero; using uniform weights");
                uniform()
            }
        }
    }
}

/// Weighted average of the top-k grid coordinates.
pub fn estimate(
    db: &FingerprintDatabase,
    o: &Observation,
    config: &EstimatorConfig,
    selection: Option<&SelectionTable>,
) -> Result<Estimate, EstimateError> {
    let top = top_k(db, o, &config.metric, config.k, selection, config.align)?;
    let scores: Vec<f64> = top.iter().map(|t| t.1).collect();
    let w = weights(&scores, config.scheme);
    let mut coord = [0.0, 0.0];
    let mut neighbors = Vec::with_capacity(top.len());
    for ((label, score), wi) in top.into_iter().zip(w) {
        let grid = &db
            .get(&label)
            .expect("top_k labels come from the database")
            .grid;
        coord[0] += wi * grid.coord[0];
        coord[1] += wi * grid.coord[1];
        neighbors.push(Neighbor {
            grid_label: label,
            score,
            weight: wi,
        });
    }
    Ok(Estimate { coord, neighbors })
}

/// Per-observation outcome of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    pub truth: GridPoint,
    pub estimate: [f64; 2],
    pub error_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub samples: Vec<SampleResult>,
    /// Observations that could not be compared with any fingerprint.
    pub failed: usize,
}

impl EvalOutcome {
    pub fn mean_error(&self) -> Option<f64> {
        if self.samples.is_empty() {
            None
        } else {
            Some(self.samples.iter().map(|s| s.error_cm).sum::<f64>() / self.samples.len() as f64)
        }
    }

    pub fn mean_squared_error(&self) -> Option<f64> {
        if self.samples.is_empty() {
            None
        } else {
            Some(
                self.samples
                    .iter()
                    .map(|s| s.error_cm * s.error_cm)
                    .sum::<f64>()
                    / self.samples.len() as f64,
            )
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.error_cm).collect()
    }
}

/// Estimate every labelled observation. Observations that share no beacons
/// with the database are counted in `failed`; other errors abort.
pub fn evaluate_observations(
    db: &FingerprintDatabase,
    observations: &[Observation],
    config: &EstimatorConfig,
    selection: Option<&SelectionTable>,
) -> Result<EvalOutcome, EstimateError> {
    let results: Vec<Result<Option<SampleResult>, EstimateError>> = observations
        .par_iter()
        .enumerate()
        .map(|(index, o)| {
            let truth = o.truth.clone().ok_or(EstimateError::MissingTruth)?;
            match estimate(db, o, config, selection) {
                Ok(est) => Ok(Some(SampleResult {
                    index,
                    error_cm: truth.distance_to(est.coord),
                    truth,
                    estimate: est.coord,
                })),
                Err(EstimateError::NoCommonBeacons) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r? {
            Some(s) => samples.push(s),
            None => failed += 1,
        }
    }
    Ok(EvalOutcome { samples, failed })
}

/// Training samples taken from the fingerprints themselves.
pub fn training_from_fingerprints(db: &FingerprintDatabase) -> Vec<Observation> {
    db.fingerprints.iter().map(Observation::from).collect()
}

/// Training samples cut from a raw survey log with the fixed-window
/// protocol.
pub fn training_from_log(log: &RawLog, window_s: f64) -> Vec<Observation> {
    ingest::consolidate_protocol2(log, window_s)
}

/// One row of the s-validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCost {
    pub s: usize,
    pub feasible: bool,
    /// Mean squared positional error, cm².
    pub cost: Option<f64>,
    pub mean_error_cm: Option<f64>,
    pub failed: usize,
    /// Grid points lacking `s` eligible beacons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infeasible: Vec<String>,
}

/// Training cost for each candidate `s`: selection sets are rebuilt for
/// every `s` and each training sample is localised against them.
pub fn validate_s(
    train: &[Observation],
    db: &FingerprintDatabase,
    config: &EstimatorConfig,
    s_range: impl IntoIterator<Item = usize>,
    eta: f64,
) -> Result<Vec<SCost>, EstimateError> {
    let s_values: Vec<usize> = s_range.into_iter().collect();
    s_values
        .par_iter()
        .map(|&s| {
            let sel_cfg = SelectionConfig {
                s,
                eta,
                timing: db.timing,
            };
            match select::select_all(db, &sel_cfg) {
                Err(SelectError::InfeasibleGrids { grids, .. }) => Ok(SCost {
                    s,
                    feasible: false,
                    cost: None,
                    mean_error_cm: None,
                    failed: 0,
                    infeasible: grids,
                }),
                Err(e) => Err(e.into()),
                Ok(table) => {
                    let out = evaluate_observations(db, train, config, Some(&table))?;
                    Ok(SCost {
                        s,
                        feasible: true,
                        cost: out.mean_squared_error(),
                        mean_error_cm: out.mean_error(),
                        failed: out.failed,
                        infeasible: Vec::new(),
                    })
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaTuning {
    pub sigma: f64,
    /// (sigma, mean error in cm) for every candidate.
    pub table: Vec<(f64, f64)>,
}

/// Grid search for the Gaussian width: the candidate with the lowest mean
/// training error wins, the smallest such sigma on ties.
pub fn tune_sigma(
    train: &[Observation],
    db: &FingerprintDatabase,
    config: &EstimatorConfig,
    selection: Option<&SelectionTable>,
    grid: &[f64],
) -> Result<SigmaTuning, EstimateError> {
    let mut table = Vec::with_capacity(grid.len());
    for &sigma in grid {
        let cfg = EstimatorConfig {
            metric: MetricKind::Gaussian { sigma },
            ..*config
        };
        let out = evaluate_observations(db, train, &cfg, selection)?;
        table.push((sigma, out.mean_error().unwrap_or(f64::INFINITY)));
    }
    let best = table
        .iter()
        .copied()
        .fold(None::<(f64, f64)>, |best, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|b| b.0)
        .unwrap_or(4.0);
    Ok(SigmaTuning { sigma: best, table })
}
