//! Domain types shared by the whole pipeline.
//!
//! Coordinates are centimetres. RSS values are dBm. Fingerprints and
//! observations are sparse maps keyed by [`BeaconId`] so that an online
//! observation covering only part of the deployment uses the same
//! representation as a surveyed fingerprint.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a beacon in the deployment.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct BeaconId(pub u16);

impl fmt::Display for BeaconId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

impl From<u16> for BeaconId {
    fn from(v: u16) -> Self {
        BeaconId(v)
    }
}

/// A surveyed reference location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    /// (x, y) in centimetres.
    pub coord: [f64; 2],
}

impl GridPoint {
    pub fn new(label: impl Into<String>, x: f64, y: f64) -> Self {
        GridPoint {
            label: label.into(),
            coord: [x, y],
        }
    }

    pub fn distance_to(&self, coord: [f64; 2]) -> f64 {
        euclid2(self.coord, coord)
    }
}

pub(crate) fn euclid2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One logged advertisement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssRecord {
    pub grid_label: String,
    /// Coordinates of the grid point the record was logged at.
    pub coord: [f64; 2],
    pub beacon: BeaconId,
    /// dBm.
    pub rss: f64,
    /// Seconds, non-negative, monotone within a session.
    pub arrival_time: f64,
    /// Session (device / walk) identifier. Records from different sessions
    /// never share a grid visit.
    #[serde(default)]
    pub session: Option<String>,
}

/// Time-ordered RSS samples from a single beacon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RssSeries {
    pub beacon: BeaconId,
    /// (arrival_time, rss) pairs ordered by arrival time.
    pub samples: Vec<(f64, f64)>,
}

impl RssSeries {
    pub fn new(beacon: BeaconId, mut samples: Vec<(f64, f64)>) -> Self {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        RssSeries { beacon, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }
}

/// Advertising interval and scanning duration, both in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Advertising interval `T_a`.
    pub ta: f64,
    /// Scanning duration `T_d`.
    pub td: f64,
}

impl Timing {
    /// Number of advertisements expected from one beacon over the scan.
    pub fn expected_count(&self) -> f64 {
        self.td / self.ta
    }
}

/// Anything that exposes a sparse RSS vector keyed by beacon.
pub trait RssVector {
    fn rss_values(&self) -> &BTreeMap<BeaconId, f64>;
}

/// Time-averaged RSS labelling one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub grid: GridPoint,
    pub values: BTreeMap<BeaconId, f64>,
    /// Population variance of the filtered samples, dBm².
    pub variances: BTreeMap<BeaconId, f64>,
    /// Number of received samples per beacon.
    pub counts: BTreeMap<BeaconId, usize>,
}

impl Fingerprint {
    /// Fingerprint with zero variance and the given count for every beacon.
    pub fn from_values(grid: GridPoint, values: BTreeMap<BeaconId, f64>, count: usize) -> Self {
        let variances = values.keys().map(|&b| (b, 0.0)).collect();
        let counts = values.keys().map(|&b| (b, count)).collect();
        Fingerprint {
            grid,
            values,
            variances,
            counts,
        }
    }

    pub fn label(&self) -> &str {
        &self.grid.label
    }
}

impl RssVector for Fingerprint {
    fn rss_values(&self) -> &BTreeMap<BeaconId, f64> {
        &self.values
    }
}

/// An online RSS vector, possibly covering only part of the deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub values: BTreeMap<BeaconId, f64>,
    /// (start_time, end_time) in seconds.
    pub window: (f64, f64),
    /// Where the observation was actually taken, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GridPoint>,
}

impl Observation {
    pub fn new(values: BTreeMap<BeaconId, f64>) -> Self {
        Observation {
            values,
            window: (0.0, 0.0),
            truth: None,
        }
    }

    pub fn with_truth(mut self, truth: GridPoint) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl RssVector for Observation {
    fn rss_values(&self) -> &BTreeMap<BeaconId, f64> {
        &self.values
    }
}

impl From<&Fingerprint> for Observation {
    fn from(fp: &Fingerprint) -> Self {
        Observation {
            values: fp.values.clone(),
            window: (0.0, 0.0),
            truth: Some(fp.grid.clone()),
        }
    }
}

/// The beacons retained for one grid point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSet {
    pub grid_label: String,
    /// Ascending by beacon id.
    pub beacons: Vec<BeaconId>,
}

impl SelectionSet {
    pub fn contains(&self, b: BeaconId) -> bool {
        self.beacons.binary_search(&b).is_ok()
    }
}

/// One of the top-k matches used for an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub grid_label: String,
    pub score: f64,
    pub weight: f64,
}

/// A location estimate together with the neighbours that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub coord: [f64; 2],
    pub neighbors: Vec<Neighbor>,
}

/// Current on-disk database format version.
pub const DATABASE_VERSION: u32 = 1;

/// All surveyed fingerprints plus the metadata needed to use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintDatabase {
    pub version: u32,
    /// Number of distinct beacons seen in the survey log.
    pub n_beacons: usize,
    /// The beacon universe, ascending.
    pub beacons: Vec<BeaconId>,
    pub timing: Timing,
    /// Moving-average window used when the fingerprints were built.
    pub window: usize,
    pub fingerprints: Vec<Fingerprint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<crate::select::SelectionTable>,
    /// Gaussian kernel width chosen by tuning, dBm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl FingerprintDatabase {
    /// Assemble a database; fingerprints are sorted by grid label.
    pub fn new(mut fingerprints: Vec<Fingerprint>, timing: Timing, window: usize) -> Self {
        fingerprints.sort_by(|a, b| a.grid.label.cmp(&b.grid.label));
        let mut beacons: Vec<BeaconId> = fingerprints
            .iter()
            .flat_map(|f| f.values.keys().copied())
            .collect();
        beacons.sort();
        beacons.dedup();
        FingerprintDatabase {
            version: DATABASE_VERSION,
            n_beacons: beacons.len(),
            beacons,
            timing,
            window,
            fingerprints,
            selection: None,
            sigma: None,
        }
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&Fingerprint> {
        self.fingerprints
            .binary_search_by(|f| f.grid.label.as_str().cmp(label))
            .ok()
            .map(|i| &self.fingerprints[i])
    }

    pub fn grid_points(&self) -> impl Iterator<Item = &GridPoint> {
        self.fingerprints.iter().map(|f| &f.grid)
    }
}
