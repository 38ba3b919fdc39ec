use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;

use beaconfp_core::estimator::{self, EstimatorConfig, WeightScheme};
use beaconfp_core::evalbench::{self, Scenario};
use beaconfp_core::ingest;
use beaconfp_core::model::BeaconId;
use beaconfp_core::preprocess;
use beaconfp_core::select::{self, SelectionConfig};
use beaconfp_core::similarity::MetricKind;

#[test]
fn noise_free_fingerprints_equal_path_loss_means() {
    let sc = Scenario {
        td_s: 5.0,
        ..Scenario::default()
    };
    let db = preprocess::build_database(&evalbench::synth_log(&sc, 0).unwrap(), 10, sc.timing())
        .unwrap();
    assert_eq!(db.len(), sc.grid.len());
    assert_eq!(db.n_beacons, sc.beacons.len());
    for fp in &db.fingerprints {
        for (b, v) in &fp.values {
            assert_abs_diff_eq!(*v, sc.mean_rss(b.0 as usize, fp.grid.coord), epsilon = 1e-9);
            assert!(fp.variances[b] < 1e-18);
            assert_eq!(fp.counts[b], 50);
        }
    }
}

#[test]
fn survey_with_drops_and_floor() {
    let sc = Scenario {
        drop_rate: 0.3,
        shadowing_std_db: 3.0,
        rx_floor_dbm: Some(-85.0),
        ..Scenario::default()
    };
    let log = evalbench::synth_log(&sc, 11).unwrap();
    let db = preprocess::build_database(&log, 10, sc.timing()).unwrap();
    // with 30% loss the default tolerance leaves beacons ineligible
    let strict = SelectionConfig {
        s: 1,
        eta: 0.1,
        timing: db.timing,
    };
    let gamma = select::gamma(&strict);
    assert_abs_diff_eq!(gamma, 270.0, epsilon = 1e-9);
    assert!(db
        .fingerprints
        .iter()
        .all(|fp| select::eligible(fp, gamma).is_empty()));
    let loose = SelectionConfig {
        s: 4,
        eta: 0.5,
        timing: db.timing,
    };
    let table = select::select_all(&db, &loose).unwrap();
    for set in &table.sets {
        let fp = db.get(&set.grid_label).unwrap();
        assert!(set
            .beacons
            .iter()
            .all(|b| fp.counts[b] as f64 >= select::gamma(&loose)));
    }
}

#[test]
fn validate_s_reports_infeasible_sizes() {
    let sc = Scenario {
        td_s: 5.0,
        shadowing_std_db: 2.0,
        ..Scenario::default()
    };
    let db = preprocess::build_database(&evalbench::synth_log(&sc, 3).unwrap(), 10, sc.timing())
        .unwrap();
    let train = estimator::training_from_log(&evalbench::synth_log(&sc, 4).unwrap(), 1.0);
    let cfg = EstimatorConfig::new(MetricKind::Gaussian { sigma: 4.0 }, 1);
    let rows = estimator::validate_s(&train, &db, &cfg, 14..=17, 0.2).unwrap();
    assert!(rows[..3].iter().all(|r| r.feasible && r.cost.is_some()));
    assert!(!rows[3].feasible);
    assert_eq!(rows[3].infeasible.len(), 35);
    let r = &rows[2];
    // root-mean-square error bounds the mean error from above
    assert!(r.cost.unwrap().sqrt() >= r.mean_error_cm.unwrap());
}

#[test]
fn protocol_counts_on_synthetic_walk() {
    let sc = Scenario {
        drop_rate: 0.0,
        ..Scenario::default()
    };
    let walk = evalbench::synth_walk(&sc, &sc.grid[..4], 2.0, "w", 1).unwrap();
    let universe: BTreeSet<BeaconId> = walk.beacon_universe();
    let p2 = ingest::consolidate_protocol2(&walk, 1.0);
    assert_eq!(p2.len(), 8);
    assert!(p2.iter().all(|o| o.len() == 16));
    let p1 = ingest::consolidate_protocol1(&walk, &universe);
    // each beacon advertises every 0.1 s, so a full cycle takes at most 0.1 s
    assert!(p1.len() >= 4 * 19, "{}", p1.len());
    assert!(p1.iter().all(|o| o.window.1 - o.window.0 < 0.1 + 1e-9));
}

#[test]
fn random_walk_replay_is_exact_without_noise() {
    let sc = Scenario {
        grid: evalbench::rect_grid(30, 3, 50.0),
        td_s: 3.0,
        ..Scenario::default()
    };
    let db = preprocess::build_database(&evalbench::synth_log(&sc, 0).unwrap(), 10, sc.timing())
        .unwrap();
    let path = evalbench::random_walk(&sc.grid, 40, 60.0, Some(50.0), 9);
    assert!(path
        .windows(2)
        .all(|w| w[0].distance_to(w[1].coord) <= 60.0));
    let obs = ingest::consolidate_protocol2(
        &evalbench::synth_walk(&sc, &path, 1.0, "walk", 2).unwrap(),
        1.0,
    );
    let cfg = EstimatorConfig::new(MetricKind::Cosine, 1);
    let track = evalbench::replay_path(&db, &obs, &cfg, None);
    assert_eq!(track.len(), obs.len());
    for (i, est) in &track {
        assert_eq!(
            evalbench::error_of(est, obs[*i].truth.as_ref().unwrap()),
            0.0
        );
    }
    let mut csv = Vec::new();
    evalbench::write_track_csv(&obs, &track, &mut csv).unwrap();
    assert_eq!(
        String::from_utf8(csv).unwrap().lines().count(),
        1 + obs.len()
    );
}

#[test]
fn similarity_weights_pull_toward_best_match() {
    let sc = Scenario {
        td_s: 3.0,
        ..Scenario::default()
    };
    let db = preprocess::build_database(&evalbench::synth_log(&sc, 0).unwrap(), 10, sc.timing())
        .unwrap();
    let o = beaconfp_core::Observation::from(db.get("3_2").unwrap());
    let mut cfg = EstimatorConfig::new(MetricKind::Gaussian { sigma: 16.0 }, 4);
    let uniform = estimator::estimate(&db, &o, &cfg, None).unwrap();
    cfg.scheme = WeightScheme::Similarity;
    let weighted = estimator::estimate(&db, &o, &cfg, None).unwrap();
    let truth = &db.get("3_2").unwrap().grid;
    assert!(truth.distance_to(weighted.coord) < truth.distance_to(uniform.coord));
    let ws: Vec<f64> = weighted.neighbors.iter().map(|n| n.weight).collect();
    assert!(ws.windows(2).all(|w| w[0] >= w[1]));
    assert_abs_diff_eq!(ws.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
}
