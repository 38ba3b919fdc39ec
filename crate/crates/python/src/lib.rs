//! Python bindings for the fingerprint localisation library.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use beaconfp_core::estimator::{self, EstimatorConfig, WeightScheme};
use beaconfp_core::evalbench::{self, Scenario};
use beaconfp_core::ingest::{self, CsvSchema};
use beaconfp_core::model::{BeaconId, FingerprintDatabase, Observation, Timing};
use beaconfp_core::preprocess;
use beaconfp_core::select::{self, SelectionConfig};
use beaconfp_core::similarity::{self as sim, AlignMode, MetricKind};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn metric(name: &str, sigma: Option<f64>) -> PyResult<MetricKind> {
    let m: MetricKind = name.parse().map_err(err)?;
    Ok(match (m, sigma) {
        (MetricKind::Gaussian { .. }, Some(sigma)) => MetricKind::Gaussian { sigma },
        (m, _) => m,
    })
}

fn observation(values: BTreeMap<u16, f64>) -> Observation {
    Observation::new(values.into_iter().map(|(b, v)| (BeaconId(b), v)).collect())
}

fn schema(path: Option<PathBuf>) -> PyResult<CsvSchema> {
    match path {
        Some(p) => CsvSchema::from_json_file(&p).map_err(err),
        None => Ok(CsvSchema::default()),
    }
}

/// A fingerprint database (radio map).
#[pyclass(module = "beaconfp")]
struct Database {
    inner: FingerprintDatabase,
}

#[pymethods]
impl Database {
    /// Build from a survey CSV.
    #[staticmethod]
    #[pyo3(signature = (path, schema_path=None, window=10, ta=0.1, td=30.0))]
    fn build(
        path: PathBuf,
        schema_path: Option<PathBuf>,
        window: usize,
        ta: f64,
        td: f64,
    ) -> PyResult<Self> {
        let log = ingest::parse_csv(&path, &schema(schema_path)?).map_err(err)?;
        let inner = preprocess::build_database(&log, window, Timing { ta, td }).map_err(err)?;
        Ok(Database { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Database {
            inner: preprocess::load_database(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        preprocess::save_database(&self.inner, &path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_beacons(&self) -> usize {
        self.inner.n_beacons
    }

    fn grid_points(&self) -> Vec<(String, f64, f64)> {
        self.inner
            .grid_points()
            .map(|g| (g.label.clone(), g.coord[0], g.coord[1]))
            .collect()
    }

    /// Fingerprint values of one grid point as `{beacon: dBm}`.
    fn fingerprint(&self, label: &str) -> PyResult<BTreeMap<u16, f64>> {
        let fp = self
            .inner
            .get(label)
            .ok_or_else(|| err(format!("no grid point {label:?}")))?;
        Ok(fp.values.iter().map(|(b, v)| (b.0, *v)).collect())
    }

    /// Compute and store per-grid selection sets; returns them.
    #[pyo3(signature = (s, eta=0.2))]
    fn select(&mut self, s: usize, eta: f64) -> PyResult<BTreeMap<String, Vec<u16>>> {
        let cfg = SelectionConfig {
            s,
            eta,
            timing: self.inner.timing,
        };
        let table = select::select_all(&self.inner, &cfg).map_err(err)?;
        let out = table
            .sets
            .iter()
            .map(|set| {
                (
                    set.grid_label.clone(),
                    set.beacons.iter().map(|b| b.0).collect(),
                )
            })
            .collect();
        self.inner.selection = Some(table);
        Ok(out)
    }

    /// Most similar grid points as `(label, score)`, best first.
    #[pyo3(signature = (values, metric="kernel", k=1, sigma=None, selection=false))]
    fn top_k(
        &self,
        values: BTreeMap<u16, f64>,
        metric: &str,
        k: usize,
        sigma: Option<f64>,
        selection: bool,
    ) -> PyResult<Vec<(String, f64)>> {
        let sel = self.selection(selection)?;
        let m = self::metric(metric, sigma)?;
        estimator::top_k(
            &self.inner,
            &observation(values),
            &m,
            k,
            sel,
            AlignMode::Intersection,
        )
        .map_err(err)
    }

    /// Location estimate `(x, y)` in cm plus the neighbours used, as
    /// `(label, score, weight)`.
    #[pyo3(signature = (values, metric="kernel", k=1, sigma=None, weights="uniform", selection=false))]
    #[allow(clippy::type_complexity)]
    fn estimate(
        &self,
        values: BTreeMap<u16, f64>,
        metric: &str,
        k: usize,
        sigma: Option<f64>,
        weights: &str,
        selection: bool,
    ) -> PyResult<((f64, f64), Vec<(String, f64, f64)>)> {
        let sel = self.selection(selection)?;
        let cfg = EstimatorConfig {
            metric: self::metric(metric, sigma)?,
            k,
            scheme: weights.parse::<WeightScheme>().map_err(err)?,
            align: AlignMode::Intersection,
        };
        let est = estimator::estimate(&self.inner, &observation(values), &cfg, sel).map_err(err)?;
        Ok((
            (est.coord[0], est.coord[1]),
            est.neighbors
                .into_iter()
                .map(|n| (n.grid_label, n.score, n.weight))
                .collect(),
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Database({} fingerprints, {} beacons, selection={})",
            self.inner.len(),
            self.inner.n_beacons,
            self.inner.selection.is_some()
        )
    }
}

impl Database {
    fn selection(&self, on: bool) -> PyResult<Option<&select::SelectionTable>> {
        if !on {
            return Ok(None);
        }
        self.inner
            .selection
            .as_ref()
            .map(Some)
            .ok_or_else(|| err("no selection sets; call select() first"))
    }
}

/// Similarity of two equal-length RSS vectors.
#[pyfunction]
#[pyo3(signature = (metric, a, b, sigma=None))]
fn similarity(metric: &str, a: Vec<f64>, b: Vec<f64>, sigma: Option<f64>) -> PyResult<f64> {
    let m = self::metric(metric, sigma)?;
    if m.is_set_relative() {
        return Err(err(
            "set-relative metrics need a candidate set; use Database.top_k",
        ));
    }
    sim::score_aligned(&m, &a, &b).map_err(err)
}

/// Write a synthetic log; returns the number of records. `dwell` switches
/// from a survey to a test walk over the grid.
#[pyfunction]
#[pyo3(signature = (out, seed=0, scenario_json=None, dwell=None))]
fn synth(
    out: PathBuf,
    seed: u64,
    scenario_json: Option<&str>,
    dwell: Option<f64>,
) -> PyResult<usize> {
    let sc: Scenario = match scenario_json {
        Some(s) => serde_json::from_str(s).map_err(err)?,
        None => Scenario::default(),
    };
    let log = match dwell {
        Some(d) => evalbench::synth_walk(&sc, &sc.grid, d, "test", seed),
        None => evalbench::synth_log(&sc, seed),
    }
    .map_err(err)?;
    let file = std::fs::File::create(&out).map_err(err)?;
    log.write_csv(std::io::BufWriter::new(file)).map_err(err)?;
    Ok(log.len())
}

type LabelledValues = (BTreeMap<u16, f64>, Option<String>);

/// Consolidate a CSV log into observations `(values, truth_label)`.
#[pyfunction]
#[pyo3(signature = (path, protocol=2, schema_path=None))]
fn consolidate(
    path: PathBuf,
    protocol: u8,
    schema_path: Option<PathBuf>,
) -> PyResult<Vec<LabelledValues>> {
    let log = ingest::parse_csv(&path, &schema(schema_path)?).map_err(err)?;
    let obs = match protocol {
        1 => ingest::consolidate_protocol1(&log, &log.beacon_universe()),
        2 => ingest::consolidate_protocol2(&log, ingest::PROTOCOL2_WINDOW_S),
        p => return Err(err(format!("protocol must be 1 or 2, got {p}"))),
    };
    Ok(obs
        .into_iter()
        .map(|o| {
            (
                o.values.into_iter().map(|(b, v)| (b.0, v)).collect(),
                o.truth.map(|t| t.label),
            )
        })
        .collect())
}

#[pymodule]
pub fn beaconfp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Database>()?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(consolidate, m)?)?;
    m.add("SIGMA_GRID", sim::SIGMA_GRID.to_vec())?;
    Ok(())
}
