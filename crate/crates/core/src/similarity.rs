//! Similarity functions between a fingerprint and an observation.
//!
//! Every similarity returned by [`score`] lies in `[0, 1]` and is exactly `1`
//! for identical vectors. Distances are turned into similarities either by
//! normalising both vectors to unit `l2` length and subtracting the distance
//! from one (clamped at zero), or through a kernel.
//!
//! Sparse vectors are compared over the beacons they have in common
//! ([`AlignMode::Intersection`]), or over the union with missing entries set
//! to a floor RSS ([`AlignMode::Impute`]).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BeaconId;

/// Candidate Gaussian widths (dBm) searched when tuning.
pub const SIGMA_GRID: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// RSS assumed for beacons missing from one side under [`AlignMode::Impute`].
pub const DEFAULT_FLOOR_DBM: f64 = -100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("no common beacons")]
    NoCommonBeacons,
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("{0} is undefined for constant or single-entry vectors")]
    Undefined(&'static str),
    #[error("kernel self-similarity {0} is not positive")]
    NonPositiveSelfKernel(f64),
    #[error("inverse kernel is unbounded at zero distance")]
    ZeroDistance,
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Raw (unnormalised) distance between two aligned vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Euclidean,
    Cityblock,
    Chebyshev,
    Minkowski(f64),
}

impl Distance {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match *self {
            Distance::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Distance::Cityblock => diffs.sum(),
            Distance::Chebyshev => diffs.fold(0.0, f64::max),
            Distance::Minkowski(p) => {
                if p.is_infinite() {
                    diffs.fold(0.0, f64::max)
                } else {
                    diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p)
                }
            }
        }
    }
}

/// Which similarity to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Cosine,
    InvNormEuclidean,
    InvNormCityblock,
    Chebyshev,
    Correlation,
    Minkowski {
        p: f64,
    },
    Spearman,
    Gaussian {
        sigma: f64,
    },
    /// `exp(-gamma_k * D)` over a raw base distance.
    ExpKernel {
        gamma_k: f64,
        base: Distance,
    },
    /// `max(D) / D` over the candidate set, rescaled into `(0, 1]`.
    InverseKernel {
        base: Distance,
    },
}

impl MetricKind {
    /// Short name used on the command line and in reports.
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Cosine => "cosine",
            MetricKind::InvNormEuclidean => "euclidean",
            MetricKind::InvNormCityblock => "cityblock",
            MetricKind::Chebyshev => "chebyshev",
            MetricKind::Correlation => "correlation",
            MetricKind::Minkowski { .. } => "minkowski",
            MetricKind::Spearman => "spearman",
            MetricKind::Gaussian { .. } => "kernel",
            MetricKind::ExpKernel { .. } => "exp-kernel",
            MetricKind::InverseKernel { .. } => "inverse-kernel",
        }
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        match *self {
            MetricKind::Minkowski { p } if !(p >= 1.0) => Err(SimilarityError::Parameter(format!(
                "minkowski p must be >= 1, got {p}"
            ))),
            MetricKind::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                SimilarityError::Parameter(format!("sigma must be positive, got {sigma}")),
            ),
            MetricKind::ExpKernel { gamma_k, .. } if !(gamma_k > 0.0) => Err(
                SimilarityError::Parameter(format!("gamma_k must be positive, got {gamma_k}")),
            ),
            _ => Ok(()),
        }
    }

    /// Whether scores depend on the whole candidate set rather than one pair.
    pub fn is_set_relative(&self) -> bool {
        matches!(self, MetricKind::InverseKernel { .. })
    }

    /// All metrics compared in the baseline experiment, with the given
    /// Gaussian width and Minkowski order.
    pub fn baseline_suite(sigma: f64, p: f64) -> Vec<MetricKind> {
        vec![
            MetricKind::Gaussian { sigma },
            MetricKind::Cosine,
            MetricKind::InvNormEuclidean,
            MetricKind::InvNormCityblock,
            MetricKind::Chebyshev,
            MetricKind::Correlation,
            MetricKind::Minkowski { p },
            MetricKind::Spearman,
        ]
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Minkowski { p } => write!(f, "minkowski(p={p})"),
            MetricKind::Gaussian { sigma } => write!(f, "kernel(sigma={sigma})"),
            MetricKind::ExpKernel { gamma_k, base } => {
                write!(f, "exp-kernel(gamma_k={gamma_k}, base={base:?})")
            }
            MetricKind::InverseKernel { base } => write!(f, "inverse-kernel(base={base:?})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for MetricKind {
    type Err = SimilarityError;

    /// Parses a metric name; parameterised metrics get placeholder
    /// parameters (sigma 4 dBm, p 3, gamma_k 0.1, Euclidean base).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "cosine" => MetricKind::Cosine,
            "euclidean" | "inv-euclidean" => MetricKind::InvNormEuclidean,
            "cityblock" | "inv-cityblock" => MetricKind::InvNormCityblock,
            "chebyshev" => MetricKind::Chebyshev,
            "correlation" => MetricKind::Correlation,
            "minkowski" => MetricKind::Minkowski { p: 3.0 },
            "spearman" => MetricKind::Spearman,
            "kernel" | "gaussian" => MetricKind::Gaussian { sigma: 4.0 },
            "exp-kernel" => MetricKind::ExpKernel {
                gamma_k: 0.1,
                base: Distance::Euclidean,
            },
            "inverse-kernel" => MetricKind::InverseKernel {
                base: Distance::Euclidean,
            },
            other => {
                return Err(SimilarityError::Parameter(format!(
                    "unknown metric {other:?}"
                )))
            }
        })
    }
}

/// How two sparse vectors are brought onto a common support.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlignMode {
    #[default]
    Intersection,
    Impute {
        floor_dbm: f64,
    },
}

/// Values of both vectors over their common beacons, ascending by id.
pub fn align(
    f: &BTreeMap<BeaconId, f64>,
    o: &BTreeMap<BeaconId, f64>,
) -> Result<(Vec<f64>, Vec<f64>), SimilarityError> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (k, &fv) in f {
        if let Some(&ov) = o.get(k) {
            a.push(fv);
            b.push(ov);
        }
    }
    if a.is_empty() {
        return Err(SimilarityError::NoCommonBeacons);
    }
    Ok((a, b))
}

pub fn align_with(
    f: &BTreeMap<BeaconId, f64>,
    o: &BTreeMap<BeaconId, f64>,
    mode: AlignMode,
) -> Result<(Vec<f64>, Vec<f64>), SimilarityError> {
    match mode {
        AlignMode::Intersection => align(f, o),
        AlignMode::Impute { floor_dbm } => {
            let mut keys: Vec<BeaconId> = f.keys().chain(o.keys()).copied().collect();
            keys.sort();
            keys.dedup();
            if keys.is_empty() || !f.keys().any(|k| o.contains_key(k)) {
                return Err(SimilarityError::NoCommonBeacons);
            }
            Ok((
                keys.iter()
                    .map(|k| *f.get(k).unwrap_or(&floor_dbm))
                    .collect(),
                keys.iter()
                    .map(|k| *o.get(k).unwrap_or(&floor_dbm))
                    .collect(),
            ))
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(SimilarityError::NoCommonBeacons);
    }
    Ok(())
}

fn unit(v: &[f64]) -> Result<Vec<f64>, SimilarityError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

// sqrt(fl(x * x)) == |x|, so identical inputs give exactly one.
fn cosine_raw(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    check_len(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok(dot / (na * nb).sqrt())
}

/// Cosine of the angle between the two vectors, clamped into `[0, 1]`.
pub fn beta_cosine(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    cosine_raw(a, b).map(clamp01)
}

/// `1 - ||a/|a| - b/|b|||` under `dist`, clamped at zero.
pub fn inverse_normalized(dist: Distance, a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    check_len(a, b)?;
    let (ua, ub) = (unit(a)?, unit(b)?);
    Ok(clamp01(1.0 - dist.eval(&ua, &ub)))
}

pub fn beta_inv_euclidean(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    inverse_normalized(Distance::Euclidean, a, b)
}

pub fn beta_inv_cityblock(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    inverse_normalized(Distance::Cityblock, a, b)
}

/// Pearson correlation, `None` when either vector is constant or shorter
/// than two entries.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// The remaining comparison metrics. Distance metrics use the
/// inverse-normalised form; correlation metrics map `r` to `max(r, 0)`.
pub fn beta_baseline(kind: &MetricKind, a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    check_len(a, b)?;
    match *kind {
        MetricKind::Chebyshev => inverse_normalized(Distance::Chebyshev, a, b),
        MetricKind::Minkowski { p } => inverse_normalized(Distance::Minkowski(p), a, b),
        MetricKind::Correlation => pearson(a, b)
            .map(clamp01)
            .ok_or(SimilarityError::Undefined("correlation")),
        MetricKind::Spearman => pearson(&ranks(a), &ranks(b))
            .map(clamp01)
            .ok_or(SimilarityError::Undefined("spearman")),
        other => Err(SimilarityError::Parameter(format!(
            "{} is not a baseline metric",
            other.name()
        ))),
    }
}

/// `exp(-||a - b||^2 / (2 sigma^2))`.
pub fn beta_gaussian(a: &[f64], b: &[f64], sigma: f64) -> Result<f64, SimilarityError> {
    check_len(a, b)?;
    if !(sigma > 0.0) {
        return Err(SimilarityError::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((-d2 / (2.0 * sigma * sigma)).exp())
}

/// Ways of turning a distance into a kernel value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelMode {
    /// `exp(-D * gamma_k)`
    Exp { gamma_k: f64 },
    /// `max_distance / D`
    Inverse { max_distance: f64 },
}

/// Convert one distance value. The inverse form has no value at `D = 0`;
/// [`inverse_kernel_scores`] resolves that over a candidate set.
pub fn kernel_from_distance(mode: KernelMode, d: f64) -> Result<f64, SimilarityError> {
    match mode {
        KernelMode::Exp { gamma_k } => {
            if !(gamma_k > 0.0) {
                return Err(SimilarityError::Parameter(format!(
                    "gamma_k must be positive, got {gamma_k}"
                )));
            }
            Ok((-d * gamma_k).exp())
        }
        KernelMode::Inverse { max_distance } => {
            if d == 0.0 {
                Err(SimilarityError::ZeroDistance)
            } else {
                Ok(max_distance / d)
            }
        }
    }
}

/// `max(D) / D` for every candidate distance. A zero distance (self-match)
/// takes the largest value found in the set; if every distance is zero all
/// scores are one.
pub fn inverse_kernel_scores(distances: &[f64]) -> Vec<f64> {
    let max_d = distances.iter().copied().fold(0.0, f64::max);
    let mode = KernelMode::Inverse {
        max_distance: max_d,
    };
    let raw: Vec<Option<f64>> = distances
        .iter()
        .map(|&d| kernel_from_distance(mode, d).ok())
        .collect();
    let best = raw
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let best = if best.is_finite() { best } else { 1.0 };
    raw.into_iter().map(|v| v.unwrap_or(best)).collect()
}

/// A symmetric kernel on aligned vectors.
pub trait Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Plain inner product.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianKernel {
    pub sigma: f64,
}

impl Kernel for GaussianKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// `exp(-gamma_k * D(a, b))`.
#[derive(Debug, Clone, Copy)]
pub struct ExpDistanceKernel {
    pub gamma_k: f64,
    pub base: Distance,
}

impl Kernel for ExpDistanceKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (-self.gamma_k * self.base.eval(a, b)).exp()
    }
}

/// Cosine of the angle between the feature-space images:
/// `k(a, b) / sqrt(k(a, a) k(b, b))`.
pub fn normalized_kernel_similarity<K: Kernel + ?Sized>(
    a: &[f64],
    b: &[f64],
    kernel: &K,
) -> Result<f64, SimilarityError> {
    check_len(a, b)?;
    let kaa = kernel.eval(a, a);
    if !(kaa > 0.0) {
        return Err(SimilarityError::NonPositiveSelfKernel(kaa));
    }
    let kbb = kernel.eval(b, b);
    if !(kbb > 0.0) {
        return Err(SimilarityError::NonPositiveSelfKernel(kbb));
    }
    Ok(kernel.eval(a, b) / (kaa * kbb).sqrt())
}

/// Gram matrix of a kernel over a set of equal-length points.
pub fn gram_matrix<K: Kernel + ?Sized>(points: &[Vec<f64>], kernel: &K) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| points.iter().map(|q| kernel.eval(p, q)).collect())
        .collect()
}

/// Pairwise similarity of two aligned vectors. Set-relative metrics return
/// their raw base distance here; use [`score_candidates`] for those.
pub fn score_aligned(metric: &MetricKind, a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    match *metric {
        MetricKind::Cosine => beta_cosine(a, b),
        MetricKind::InvNormEuclidean => beta_inv_euclidean(a, b),
        MetricKind::InvNormCityblock => beta_inv_cityblock(a, b),
        MetricKind::Chebyshev
        | MetricKind::Correlation
        | MetricKind::Minkowski { .. }
        | MetricKind::Spearman => beta_baseline(metric, a, b),
        MetricKind::Gaussian { sigma } => beta_gaussian(a, b, sigma),
        MetricKind::ExpKernel { gamma_k, base } => {
            check_len(a, b)?;
            normalized_kernel_similarity(a, b, &ExpDistanceKernel { gamma_k, base }).map(clamp01)
        }
        MetricKind::InverseKernel { base } => {
            check_len(a, b)?;
            Ok(base.eval(a, b))
        }
    }
}

/// Similarity between two sparse vectors.
pub fn score(
    metric: &MetricKind,
    f: &BTreeMap<BeaconId, f64>,
    o: &BTreeMap<BeaconId, f64>,
    mode: AlignMode,
) -> Result<f64, SimilarityError> {
    if metric.is_set_relative() {
        return Err(SimilarityError::Parameter(format!(
            "{} needs a candidate set",
            metric.name()
        )));
    }
    let (a, b) = align_with(f, o, mode)?;
    score_aligned(metric, &a, &b)
}

/// Score an observation against a list of candidates that have already been
/// aligned with it. Failed alignments stay failures.
pub fn score_candidates(
    metric: &MetricKind,
    aligned: &[Result<(Vec<f64>, Vec<f64>), SimilarityError>],
) -> Vec<Result<f64, SimilarityError>> {
    let raw: Vec<Result<f64, SimilarityError>> = aligned
        .iter()
        .map(|p| p.clone().and_then(|(a, b)| score_aligned(metric, &a, &b)))
        .collect();
    if !metric.is_set_relative() {
        return raw;
    }
    let distances: Vec<f64> = raw
        .iter()
        .filter_map(|r| r.as_ref().ok().copied())
        .collect();
    let scores = inverse_kernel_scores(&distances);
    let top = scores.iter().copied().fold(0.0, f64::max);
    let mut it = scores.into_iter();
    raw.into_iter()
        .map(|r| {
            r.map(|_| {
                let v = it.next().unwrap_or(0.0);
                if top > 0.0 {
                    v / top
                } else {
                    1.0
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn map(pairs: &[(u16, f64)]) -> BTreeMap<BeaconId, f64> {
        pairs.iter().map(|&(b, v)| (BeaconId(b), v)).collect()
    }

    const F: [f64; 2] = [-60.0, -70.0];
    const O: [f64; 2] = [-65.0, -65.0];

    #[test]
    fn align_intersection() {
        let a = map(&[(0, -1.0), (1, -2.0), (2, -3.0)]);
        let (x, y) = align(&a, &a).unwrap();
        assert_eq!(x, vec![-1.0, -2.0, -3.0]);
        assert_eq!(x, y);

        let b = map(&[(1, -20.0), (2, -30.0), (3, -40.0)]);
        assert_eq!(
            align(&a, &b).unwrap(),
            (vec![-2.0, -3.0], vec![-20.0, -30.0])
        );

        let c = map(&[(7, -1.0)]);
        assert_eq!(align(&a, &c), Err(SimilarityError::NoCommonBeacons));
    }

    #[test]
    fn align_impute_fills_union() {
        let a = map(&[(0, -50.0), (1, -60.0)]);
        let b = map(&[(1, -61.0), (2, -70.0)]);
        let (x, y) = align_with(&a, &b, AlignMode::Impute { floor_dbm: -100.0 }).unwrap();
        assert_eq!(x, vec![-50.0, -60.0, -100.0]);
        assert_eq!(y, vec![-100.0, -61.0, -70.0]);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(beta_cosine(&F, &F).unwrap(), 1.0);
        assert_eq!(beta_cosine(&[-1.0, 0.0], &[0.0, -1.0]).unwrap(), 0.0);
        // 8450 / sqrt(8500 * 8450)
        assert_abs_diff_eq!(
            beta_cosine(&F, &O).unwrap(),
            0.9970544855015815,
            epsilon = 1e-12
        );
        assert_eq!(beta_cosine(&[0.0, 0.0], &O), Err(SimilarityError::ZeroNorm));
    }

    #[test]
    fn inverse_normalized_examples() {
        assert_eq!(beta_inv_euclidean(&F, &F).unwrap(), 1.0);
        assert_eq!(beta_inv_euclidean(&[-1.0, 0.0], &[0.0, -1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            beta_inv_euclidean(&F, &O).unwrap(),
            0.9232469609928254,
            epsilon = 1e-12
        );

        assert_eq!(beta_inv_cityblock(&F, &F).unwrap(), 1.0);
        assert_eq!(beta_inv_cityblock(&[-1.0, 0.0], &[0.0, -1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            beta_inv_cityblock(&F, &O).unwrap(),
            0.8915347710906719,
            epsilon = 1e-12
        );
        assert_eq!(
            beta_inv_cityblock(&[0.0], &[-1.0]),
            Err(SimilarityError::ZeroNorm)
        );
    }

    #[test]
    fn raw_distances() {
        assert_eq!(Distance::Chebyshev.eval(&[0.0, 0.0], &[0.0, 3.0]), 3.0);
        assert_eq!(Distance::Cityblock.eval(&[1.0, 2.0], &[4.0, -2.0]), 7.0);
        assert_eq!(Distance::Euclidean.eval(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_abs_diff_eq!(
            Distance::Minkowski(2.0).eval(&[0.0, 0.0], &[3.0, 4.0]),
            5.0,
            epsilon = 1e-12
        );
        assert_eq!(
            Distance::Minkowski(f64::INFINITY).eval(&[0.0, 0.0], &[3.0, 4.0]),
            4.0
        );
    }

    #[test]
    fn baseline_self_and_anti_rank() {
        let x = [-60.0, -72.0, -55.0, -80.0];
        for kind in [
            MetricKind::Chebyshev,
            MetricKind::Correlation,
            MetricKind::Minkowski { p: 3.0 },
            MetricKind::Spearman,
        ] {
            assert_eq!(beta_baseline(&kind, &x, &x).unwrap(), 1.0, "{kind}");
        }
        let up = [-90.0, -80.0, -70.0, -60.0];
        let down = [-50.0, -55.0, -65.0, -85.0];
        assert_eq!(
            beta_baseline(&MetricKind::Spearman, &up, &down).unwrap(),
            0.0
        );
        assert_eq!(
            beta_baseline(&MetricKind::Correlation, &[-60.0, -60.0], &[-50.0, -70.0]),
            Err(SimilarityError::Undefined("correlation"))
        );
        assert_eq!(
            beta_baseline(&MetricKind::Spearman, &[-60.0], &[-50.0]),
            Err(SimilarityError::Undefined("spearman"))
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(beta_gaussian(&F, &F, 3.0).unwrap(), 1.0);
        // ||f - o||^2 = 50 = 2 sigma^2 with sigma = 5
        assert_abs_diff_eq!(
            beta_gaussian(&F, &O, 5.0).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(beta_gaussian(&F, &O, 1e6).unwrap(), 1.0, epsilon = 1e-9);
        assert!(beta_gaussian(&F, &O, 0.0).is_err());
    }

    #[test]
    fn kernel_conversions() {
        assert_eq!(
            kernel_from_distance(KernelMode::Exp { gamma_k: 0.3 }, 0.0).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            kernel_from_distance(KernelMode::Exp { gamma_k: 0.25 }, 4.0).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(
            kernel_from_distance(KernelMode::Inverse { max_distance: 7.0 }, 7.0).unwrap(),
            1.0
        );
        assert_eq!(
            kernel_from_distance(KernelMode::Inverse { max_distance: 7.0 }, 0.0),
            Err(SimilarityError::ZeroDistance)
        );
        assert_eq!(inverse_kernel_scores(&[0.0, 2.0, 8.0]), vec![4.0, 4.0, 1.0]);
        assert_eq!(inverse_kernel_scores(&[0.0, 0.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn normalized_kernel_forms() {
        let g = GaussianKernel { sigma: 4.0 };
        assert_abs_diff_eq!(
            normalized_kernel_similarity(&F, &O, &g).unwrap(),
            beta_gaussian(&F, &O, 4.0).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            normalized_kernel_similarity(&F, &O, &LinearKernel).unwrap(),
            beta_cosine(&F, &O).unwrap(),
            epsilon = 1e-12
        );
        assert!(matches!(
            normalized_kernel_similarity(&[0.0, 0.0], &O, &LinearKernel),
            Err(SimilarityError::NonPositiveSelfKernel(_))
        ));
    }

    #[test]
    fn set_relative_inverse_kernel() {
        let metric = MetricKind::InverseKernel {
            base: Distance::Euclidean,
        };
        let aligned = vec![
            Ok((vec![0.0, 0.0], vec![0.0, 2.0])),
            Err(SimilarityError::NoCommonBeacons),
            Ok((vec![0.0, 0.0], vec![0.0, 8.0])),
            Ok((vec![1.0, 1.0], vec![1.0, 1.0])),
        ];
        let s = score_candidates(&metric, &aligned);
        assert_eq!(s[0], Ok(1.0));
        assert!(s[1].is_err());
        assert_eq!(s[2], Ok(0.25));
        assert_eq!(s[3], Ok(1.0));
        assert!(score(
            &metric,
            &map(&[(0, -1.0)]),
            &map(&[(0, -1.0)]),
            AlignMode::Intersection
        )
        .is_err());
    }

    #[test]
    fn parse_names() {
        for name in [
            "cosine",
            "euclidean",
            "cityblock",
            "chebyshev",
            "correlation",
            "minkowski",
            "spearman",
            "kernel",
            "exp-kernel",
            "inverse-kernel",
        ] {
            let m: MetricKind = name.parse().unwrap();
            assert_eq!(m.name(), name);
        }
        assert!("nope".parse::<MetricKind>().is_err());
        assert!(MetricKind::Minkowski { p: 0.5 }.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rss_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-100.0f64..-30.0, n)
        }

        fn all_metrics() -> Vec<MetricKind> {
            let mut m = MetricKind::baseline_suite(4.0, 3.0);
            m.push(MetricKind::ExpKernel {
                gamma_k: 0.05,
                base: Distance::Cityblock,
            });
            m
        }

        proptest! {
            #[test]
            fn self_similarity_is_one(x in (2usize..12).prop_flat_map(rss_vec)) {
                for m in all_metrics() {
                    if let Ok(v) = score_aligned(&m, &x, &x) {
                        prop_assert_eq!(v, 1.0, "{}", m);
                    }
                }
            }

            #[test]
            fn scores_in_unit_interval((x, y) in (1usize..12).prop_flat_map(|n| (rss_vec(n), rss_vec(n)))) {
                for m in all_metrics() {
                    if let Ok(v) = score_aligned(&m, &x, &y) {
                        prop_assert!((0.0..=1.0).contains(&v), "{} gave {}", m, v);
                    }
                }
            }

            #[test]
            fn cosine_scale_invariant((x, y) in (1usize..10).prop_flat_map(|n| (rss_vec(n), rss_vec(n))), c in 0.1f64..10.0) {
                let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
                let a = beta_cosine(&x, &y).unwrap();
                let b = beta_cosine(&scaled, &y).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn gaussian_normalized_equals_raw((x, y) in (1usize..10).prop_flat_map(|n| (rss_vec(n), rss_vec(n))), sigma in 0.5f64..40.0) {
                let raw = beta_gaussian(&x, &y, sigma).unwrap();
                let norm = normalized_kernel_similarity(&x, &y, &GaussianKernel { sigma }).unwrap();
                prop_assert!((raw - norm).abs() < 1e-15);
            }
        }
    }
}
