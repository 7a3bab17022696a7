mod common;

use mapifi::alternator::{initialize, iterate_once, normalize, solve_map, SolveState};
use mapifi::synth::Scenario;
use mapifi::{Error, Point3, RangeMatrix, SolveConfig};

/// Ground truth recentred on the anchor centroid, i.e. already in the gauge
/// normalization would pick, so a clean fixed point should not move at all.
fn centred_truth(scenario: &Scenario, ranges: &RangeMatrix) -> SolveState {
    let center = scenario.anchors.iter().fold(Point3::zeros(), |s, p| s + p) / scenario.anchors.len() as f64;
    let mut anchors = scenario.anchor_estimates();
    let mut devices = scenario.device_estimates();
    for a in &mut anchors {
        a.position -= center;
    }
    for d in &mut devices {
        d.position -= center;
    }
    SolveState::from_estimates(anchors, devices, ranges)
}

fn max_shift(a: &SolveState, b: &SolveState) -> f64 {
    let anchors = a.anchors.iter().zip(&b.anchors).map(|(p, q)| (p.position - q.position).norm());
    let devices = a.devices.iter().zip(&b.devices).map(|(p, q)| (p.position - q.position).norm());
    anchors.chain(devices).fold(0.0, f64::max)
}

#[test]
fn ground_truth_is_a_fixed_point() {
    let config = SolveConfig::default();
    for seed in 0..5 {
        let scenario = common::house(seed);
        let ranges = common::noiseless_ranges(&scenario);
        let start = centred_truth(&scenario, &ranges);
        let next = iterate_once(start.clone(), &ranges, &config);
        let shift = max_shift(&start, &next);
        assert!(shift <= 1e-9 * scenario.diameter(), "seed {seed}: moved {shift}");
        assert_eq!(next.residual_history.len(), 2);
        assert!(next.residual() < 1e-16);
        for (d, t) in next.devices.iter().zip(&scenario.devices) {
            assert!((d.gain - t.gain).abs() <= 1e-9 * t.gain);
        }
    }
}

#[test]
fn normalization_absorbs_scale_into_gains() {
    let config = SolveConfig::default();
    let scenario = common::house(2);
    let ranges = common::noiseless_ranges(&scenario);
    let mut state = centred_truth(&scenario, &ranges);
    for a in &mut state.anchors {
        a.position = a.position * 1000.0 + Point3::new(3.0, 4.0, 5.0);
    }
    for d in &mut state.devices {
        d.position = d.position * 1000.0 + Point3::new(3.0, 4.0, 5.0);
        d.gain *= 1000.0;
    }
    let normalized = normalize(state, &config);
    let n = normalized.anchors.len() as f64;
    let center = normalized.anchors.iter().fold(Point3::zeros(), |s, a| s + a.position) / n;
    let rho = (normalized.anchors.iter().map(|a| a.position.norm_squared()).sum::<f64>() / n).sqrt();
    assert!(center.norm() < 1e-9);
    assert!((rho - config.normalization.target_rms_radius).abs() < 1e-9);
    let residual = mapifi::solver::true_residual(&normalized.anchors, &normalized.devices, &ranges);
    assert!(residual < 1e-9, "{residual}");
}

// Known failure: from a random start the linearized block updates overshoot
// and the true residual usually grows during the first iterations.
#[test]
#[ignore = "plain alternation does not contract from random starts"]
fn early_iterations_reduce_residual_from_random_start() {
    let config = SolveConfig::default();
    let scenario = common::house(0);
    let ranges = common::noiseless_ranges(&scenario);
    for restart in 0..4 {
        let mut state = initialize(&ranges, &config, restart);
        for _ in 0..5 {
            state = iterate_once(state, &ranges, &config);
        }
        assert_eq!(state.residual_history.len(), 6);
        assert!(
            state.residual_history[5] < state.residual_history[0],
            "restart {restart}: {:?}",
            state.residual_history
        );
    }
}

#[test]
fn solve_is_deterministic_and_reports_the_winner() {
    let scenario = common::house(1);
    let ranges = common::noiseless_ranges(&scenario);
    let config = SolveConfig {
        restarts: 4,
        max_iters: 10,
        rng_seed: 9,
        ..SolveConfig::default()
    };
    let a = solve_map(&ranges, &config).unwrap();
    let b = solve_map(&ranges, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seed, 9);
    assert!(a.restart_index < 4);
    assert_eq!(a.residual_history.len(), a.iterations_used + 1);
    assert_eq!(a.residual, *a.residual_history.last().unwrap());
    assert!(a.residual <= a.residual_history[0]);
}

#[test]
fn too_few_devices_is_insufficient_data() {
    let scenario = common::house(0);
    let ranges = common::noiseless_ranges(&scenario);
    let rows: Vec<Vec<Option<f64>>> = (0..ranges.n_anchors())
        .map(|i| (0..3).map(|j| ranges.get(i, j)).collect())
        .collect();
    let small = RangeMatrix::from_rows(ranges.anchor_ids().to_vec(), ranges.device_ids()[..3].to_vec(), &rows).unwrap();
    assert!(matches!(
        solve_map(&small, &SolveConfig::default()),
        Err(Error::InsufficientData { n_devices: 3, .. })
    ));
}
