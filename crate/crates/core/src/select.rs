//! Per-grid-point beacon selection.
//!
//! For every fingerprint the `s` beacons with the smallest RSS variance are
//! kept, among those whose received-sample count reaches
//! `gamma = (T_d / T_a) * (1 - eta)`. Minimising the summed variance over
//! fixed-size subsets is the same as taking the `s` smallest variances, so
//! no subset search is needed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BeaconId, Fingerprint, FingerprintDatabase, Observation, RssVector, SelectionSet, Timing,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("s must be at least 1")]
    ZeroS,
    #[error("eta must lie in [0, 1), got {0}")]
    Eta(f64),
    #[error("advertising interval must be positive, got {0}")]
    Interval(f64),
    #[error("grid point {grid_label:?}: only {eligible} beacon(s) reach the count threshold {gamma}, need {required}")]
    Infeasible {
        grid_label: String,
        eligible: usize,
        required: usize,
        gamma: f64,
    },
    #[error("{} grid point(s) cannot supply s = {s} eligible beacons: {}", .grids.len(), .grids.join(", "))]
    InfeasibleGrids { s: usize, grids: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Number of beacons kept per grid point.
    pub s: usize,
    /// Tolerated fraction of lost advertisements.
    pub eta: f64,
    pub timing: Timing,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.s == 0 {
            return Err(SelectError::ZeroS);
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(SelectError::Eta(self.eta));
        }
        if !(self.timing.ta > 0.0) {
            return Err(SelectError::Interval(self.timing.ta));
        }
        if self.eta > 0.5 {
            log::warn!(
                "eta = {} tolerates losing more than half of the expected advertisements",
                self.eta
            );
        }
        Ok(())
    }
}

/// Minimum number of received samples for a beacon to be eligible.
pub fn gamma(config: &SelectionConfig) -> f64 {
    config.timing.td / config.timing.ta * (1.0 - config.eta)
}

/// Beacons of `fp` whose sample count reaches the threshold.
pub fn eligible(fp: &Fingerprint, gamma: f64) -> Vec<BeaconId> {
    fp.counts
        .iter()
        .filter(|&(_, &n)| n as f64 >= gamma - COUNT_EPS)
        .map(|(&b, _)| b)
        .collect()
}

// gamma is a product of decimal timings; keep exact integer thresholds exact.
const COUNT_EPS: f64 = 1e-9;

/// Choose the `s` eligible beacons with the smallest variance; equal
/// variances are ordered by ascending beacon id.
pub fn select(fp: &Fingerprint, config: &SelectionConfig) -> Result<SelectionSet, SelectError> {
    config.validate()?;
    let g = gamma(config);
    let mut candidates: Vec<(f64, BeaconId)> = eligible(fp, g)
        .into_iter()
        .map(|b| (fp.variances.get(&b).copied().unwrap_or(f64::INFINITY), b))
        .collect();
    if candidates.len() < config.s {
        return Err(SelectError::Infeasible {
            grid_label: fp.grid.label.clone(),
            eligible: candidates.len(),
            required: config.s,
            gamma: g,
        });
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut beacons: Vec<BeaconId> = candidates[..config.s].iter().map(|c| c.1).collect();
    beacons.sort();
    Ok(SelectionSet {
        grid_label: fp.grid.label.clone(),
        beacons,
    })
}

/// Selection sets for a whole database, with the configuration used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub config: SelectionConfig,
    pub sets: Vec<SelectionSet>,
}

impl SelectionTable {
    pub fn get(&self, grid_label: &str) -> Option<&SelectionSet> {
        self.sets
            .binary_search_by(|s| s.grid_label.as_str().cmp(grid_label))
            .ok()
            .map(|i| &self.sets[i])
    }
}

/// Select for every fingerprint. All infeasible grid points are reported
/// together.
pub fn select_all(
    db: &FingerprintDatabase,
    config: &SelectionConfig,
) -> Result<SelectionTable, SelectError> {
    config.validate()?;
    let mut sets = Vec::with_capacity(db.len());
    let mut bad = Vec::new();
    for fp in &db.fingerprints {
        match select(fp, config) {
            Ok(s) => sets.push(s),
            Err(SelectError::Infeasible { grid_label, .. }) => bad.push(grid_label),
            Err(e) => return Err(e),
        }
    }
    if !bad.is_empty() {
        return Err(SelectError::InfeasibleGrids {
            s: config.s,
            grids: bad,
        });
    }
    sets.sort_by(|a, b| a.grid_label.cmp(&b.grid_label));
    Ok(SelectionTable {
        config: *config,
        sets,
    })
}

/// Restrict a vector to the selected beacons. Selected beacons missing from
/// the vector stay missing.
pub fn refine<V: RssVector + ?Sized>(vec: &V, sel: &SelectionSet) -> Observation {
    Observation::new(refine_values(vec.rss_values(), sel))
}

pub fn refine_values(
    values: &BTreeMap<BeaconId, f64>,
    sel: &SelectionSet,
) -> BTreeMap<BeaconId, f64> {
    sel.beacons
        .iter()
        .filter_map(|b| values.get(b).map(|&v| (*b, v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridPoint;

    fn timing() -> Timing {
        Timing { ta: 0.1, td: 10.0 }
    }

    fn fp(variances: &[f64], counts: &[usize]) -> Fingerprint {
        let ids = (0..variances.len() as u16).map(BeaconId);
        Fingerprint {
            grid: GridPoint::new("g", 0.0, 0.0),
            values: ids.clone().map(|b| (b, -60.0)).collect(),
            variances: ids.clone().zip(variances.iter().copied()).collect(),
            counts: ids.zip(counts.iter().copied()).collect(),
        }
    }

    fn cfg(s: usize, eta: f64) -> SelectionConfig {
        SelectionConfig {
            s,
            eta,
            timing: timing(),
        }
    }

    // Exhaustive minimisation of summed variance over eligible subsets of
    // size s; among optimal subsets the lexicographically smallest id list
    // wins.
    fn brute_force(fp: &Fingerprint, config: &SelectionConfig) -> Option<Vec<BeaconId>> {
        let g = gamma(config);
        let ids: Vec<BeaconId> = fp
            .counts
            .iter()
            .filter(|(_, &n)| n as f64 >= g - 1e-9)
            .map(|(&b, _)| b)
            .collect();
        let mut best: Option<(f64, Vec<BeaconId>)> = None;
        for mask in 0u32..(1 << ids.len()) {
            if mask.count_ones() as usize != config.s {
                continue;
            }
            let subset: Vec<BeaconId> = (0..ids.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ids[i])
                .collect();
            let total: f64 = subset.iter().map(|b| fp.variances[b]).sum();
            let better = match &best {
                None => true,
                // summation order differs between subsets, so compare totals with slack
                Some((bt, bs)) => {
                    total < *bt - 1e-9 || ((total - *bt).abs() <= 1e-9 && subset < *bs)
                }
            };
            if better {
                best = Some((total, subset));
            }
        }
        best.map(|b| b.1)
    }

    #[test]
    fn gamma_worked_values() {
        assert!((gamma(&cfg(1, 0.2)) - 80.0).abs() < 1e-9);
        assert_eq!(gamma(&cfg(1, 0.0)), 100.0);
        let short = SelectionConfig {
            s: 1,
            eta: 0.2,
            timing: Timing { ta: 0.1, td: 1.0 },
        };
        assert!((gamma(&short) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn two_smallest_variances() {
        let f = fp(&[1.0, 5.0, 2.0, 4.0], &[100; 4]);
        assert_eq!(
            select(&f, &cfg(2, 0.2)).unwrap().beacons,
            vec![BeaconId(0), BeaconId(2)]
        );
    }

    #[test]
    fn ties_broken_by_id() {
        let f = fp(&[3.0; 6], &[100; 6]);
        assert_eq!(
            select(&f, &cfg(3, 0.2)).unwrap().beacons,
            vec![BeaconId(0), BeaconId(1), BeaconId(2)]
        );
    }

    #[test]
    fn low_count_beacon_excluded() {
        let f = fp(&[0.1, 5.0, 2.0, 4.0], &[10, 100, 100, 100]);
        let c = cfg(2, 0.2);
        let got = select(&f, &c).unwrap().beacons;
        assert_eq!(got, vec![BeaconId(2), BeaconId(3)]);
        assert_eq!(Some(got), brute_force(&f, &c));
    }

    #[test]
    fn infeasible_reports_eligible_count() {
        let f = fp(&[1.0, 2.0, 3.0], &[100, 5, 5]);
        match select(&f, &cfg(2, 0.2)) {
            Err(SelectError::Infeasible {
                eligible, required, ..
            }) => {
                assert_eq!((eligible, required), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            select(&fp(&[1.0], &[100]), &cfg(0, 0.2)),
            Err(SelectError::ZeroS)
        );
        assert!(matches!(
            select(&fp(&[1.0], &[100]), &cfg(1, 1.0)),
            Err(SelectError::Eta(_))
        ));
        // warns but is accepted
        assert!(select(&fp(&[1.0], &[100]), &cfg(1, 0.7)).is_ok());
    }

    #[test]
    fn refine_restricts_keys() {
        let f = fp(&[1.0; 16], &[300; 16]);
        let sel = select(&f, &cfg(10, 0.2)).unwrap();
        assert_eq!(refine(&f, &sel).len(), 10);

        let full = SelectionSet {
            grid_label: "g".into(),
            beacons: f.values.keys().copied().collect(),
        };
        assert_eq!(refine(&f, &full).values, f.values);

        let obs = Observation::new(
            [
                (BeaconId(1), -60.0),
                (BeaconId(4), -61.0),
                (BeaconId(9), -62.0),
                (BeaconId(15), -70.0),
            ]
            .into(),
        );
        assert_eq!(refine(&obs, &sel).len(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize)> {
            (1usize..=12).prop_flat_map(|n| {
                (
                    prop::collection::vec(
                        prop_oneof![0.0f64..50.0, (0u8..4).prop_map(|v| v as f64)],
                        n,
                    ),
                    prop::collection::vec(0usize..150, n),
                    1usize..=n,
                )
            })
        }

        proptest! {
            #[test]
            fn greedy_equals_exhaustive((vars, counts, s) in instance()) {
                let f = fp(&vars, &counts);
                let c = cfg(s, 0.2);
                let greedy = select(&f, &c).ok().map(|set| set.beacons);
                prop_assert_eq!(greedy, brute_force(&f, &c));
            }

            #[test]
            fn nested_in_s((vars, _counts, s) in instance()) {
                let f = fp(&vars, &vec![100; vars.len()]);
                let big = select(&f, &cfg(s, 0.2)).unwrap();
                for s2 in 1..=s {
                    let small = select(&f, &cfg(s2, 0.2)).unwrap();
                    prop_assert!(small.beacons.iter().all(|b| big.contains(*b)));
                }
            }

            #[test]
            fn invariant_under_monotone_transform((vars, counts, s) in instance()) {
                let f = fp(&vars, &counts);
                let t: Vec<f64> = vars.iter().map(|v| (v + 1.0).ln() * 3.0 + 7.0).collect();
                let g = fp(&t, &counts);
                let c = cfg(s, 0.2);
                prop_assert_eq!(select(&f, &c).ok().map(|x| x.beacons), select(&g, &c).ok().map(|x| x.beacons));
            }
        }
    }
}
