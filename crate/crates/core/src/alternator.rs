//! Alternating localization: guess anchors, solve devices, solve anchors,
//! renormalize, repeat. Several random restarts run independently and the one
//! with the lowest final residual wins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{AnchorEstimate, DeviceEstimate, MapSolution, RangeMatrix, SolveConfig};
use crate::solver::{self, MIN_DEVICES_PER_ANCHOR};
use crate::{Error, Point3, Result};

/// Below this the anchor cloud is treated as collapsed to a point.
const MIN_RMS_RADIUS: f64 = 1e-12;

/// Normalization leaves the scale alone while the RMS radius is within
/// `[LOW, HIGH] * target`.
const SCALE_BAND: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub anchors: Vec<AnchorEstimate>,
    pub devices: Vec<DeviceEstimate>,
    pub iteration: usize,
    /// `residual_history[k]` is the residual after `k` iterations.
    pub residual_history: Vec<f64>,
    /// Normalization found every anchor at the same point.
    pub degenerate_normalization: bool,
}

impl SolveState {
    /// Builds a state from explicit estimates, e.g. ground truth.
    pub fn from_estimates(
        anchors: Vec<AnchorEstimate>,
        devices: Vec<DeviceEstimate>,
        ranges: &RangeMatrix,
    ) -> Self {
        let residual = solver::true_residual(&anchors, &devices, ranges);
        Self {
            anchors,
            devices,
            iteration: 0,
            residual_history: vec![residual],
            degenerate_normalization: false,
        }
    }

    pub fn residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }
}

fn restart_rng(seed: u64, restart_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart_index as u64);
    rng
}

fn centroid(points: impl ExactSizeIterator<Item = Point3>) -> Point3 {
    let n = points.len();
    if n == 0 {
        return Point3::zeros();
    }
    points.fold(Point3::zeros(), |acc, p| acc + p) / n as f64
}

/// Random anchor cloud; devices start as low-evidence placeholders at the
/// anchor centroid with unit gain.
pub fn initialize(ranges: &RangeMatrix, config: &SolveConfig, restart_index: usize) -> SolveState {
    let (lo, hi) = match &config.bbox {
        Some(bbox) => (bbox.min, bbox.max),
        None => (
            Point3::zeros(),
            Point3::repeat(2.0 * config.normalization.target_rms_radius),
        ),
    };
    let mut rng = restart_rng(config.rng_seed, restart_index);
    let anchors: Vec<AnchorEstimate> = ranges
        .anchor_ids()
        .iter()
        .map(|id| AnchorEstimate {
            anchor_id: id.clone(),
            position: Point3::from_fn(|k, _| rng.random_range(lo[k]..hi[k])),
            low_evidence: false,
            rank_deficient: false,
        })
        .collect();
    let center = centroid(anchors.iter().map(|a| a.position));
    let devices = ranges
        .device_ids()
        .iter()
        .map(|id| DeviceEstimate {
            device_id: id.clone(),
            position: center,
            gain: 1.0,
            low_evidence: true,
            rank_deficient: false,
        })
        .collect();
    SolveState::from_estimates(anchors, devices, ranges)
}

fn update_devices(state: &SolveState, ranges: &RangeMatrix, config: &SolveConfig) -> Vec<DeviceEstimate> {
    let anchor_positions: Vec<Point3> = state.anchors.iter().map(|a| a.position).collect();
    state
        .devices
        .par_iter()
        .enumerate()
        .map(|(j, prev)| {
            let column = ranges.device_column(j);
            match solver::solve_device(&anchor_positions, &column, config) {
                Ok(fix) => DeviceEstimate {
                    device_id: prev.device_id.clone(),
                    position: fix.position,
                    gain: fix.gain,
                    low_evidence: false,
                    rank_deficient: fix.rank_deficient,
                },
                Err(_) => DeviceEstimate {
                    low_evidence: true,
                    ..prev.clone()
                },
            }
        })
        .collect()
}

fn update_anchors(
    state: &SolveState,
    devices: &[DeviceEstimate],
    ranges: &RangeMatrix,
    config: &SolveConfig,
) -> Vec<AnchorEstimate> {
    let positions: Vec<Point3> = devices.iter().map(|d| d.position).collect();
    let gains: Vec<f64> = devices.iter().map(|d| d.gain).collect();
    state
        .anchors
        .par_iter()
        .enumerate()
        .map(|(i, prev)| {
            // low-evidence devices would drag anchors toward placeholder spots
            let row: Vec<Option<f64>> = ranges
                .anchor_row(i)
                .into_iter()
                .zip(devices)
                .map(|(r, d)| r.filter(|_| !d.low_evidence))
                .collect();
            match solver::solve_anchor(&positions, &gains, &row, config) {
                Ok(fix) => AnchorEstimate {
                    anchor_id: prev.anchor_id.clone(),
                    position: fix.position,
                    low_evidence: false,
                    rank_deficient: fix.rank_deficient,
                },
                Err(_) => AnchorEstimate {
                    low_evidence: true,
                    ..prev.clone()
                },
            }
        })
        .collect()
}

/// One round: devices from anchors, anchors from devices, then normalization.
///
/// Per-entity solver failures leave that entity unchanged and flagged.
pub fn iterate_once(state: SolveState, ranges: &RangeMatrix, config: &SolveConfig) -> SolveState {
    let devices = update_devices(&state, ranges, config);
    let anchors = update_anchors(&state, &devices, ranges, config);
    let mut next = SolveState {
        anchors,
        devices,
        iteration: state.iteration + 1,
        residual_history: state.residual_history,
        degenerate_normalization: state.degenerate_normalization,
    };
    if config.normalization.enabled {
        next = normalize(next, config);
    }
    let residual = solver::true_residual(&next.anchors, &next.devices, ranges);
    next.residual_history.push(residual);
    next
}

/// Centers the anchor cloud at the origin and, when its RMS radius leaves the
/// allowed band, rescales positions and gains together so every modeled
/// distance keeps its ratio to `g * r`.
///
/// No-op when a bounding box is configured.
pub fn normalize(mut state: SolveState, config: &SolveConfig) -> SolveState {
    if config.bbox.is_some() || state.anchors.is_empty() {
        return state;
    }
    let center = centroid(state.anchors.iter().map(|a| a.position));
    for a in &mut state.anchors {
        a.position -= center;
    }
    for d in &mut state.devices {
        d.position -= center;
    }

    let rms = (state
        .anchors
        .iter()
        .map(|a| a.position.norm_squared())
        .sum::<f64>()
        / state.anchors.len() as f64)
        .sqrt();
    if !(rms > MIN_RMS_RADIUS) {
        state.degenerate_normalization = true;
        return state;
    }
    let target = config.normalization.target_rms_radius;
    if rms < SCALE_BAND.0 * target || rms > SCALE_BAND.1 * target {
        let k = target / rms;
        for a in &mut state.anchors {
            a.position *= k;
        }
        for d in &mut state.devices {
            d.position *= k;
            d.gain *= k;
        }
    }
    state
}

fn converged(history: &[f64], rel_tol: f64) -> bool {
    match history {
        [.., prev, cur] => *cur == 0.0 || (prev - cur).abs() < rel_tol * cur,
        _ => false,
    }
}

/// Runs one restart to convergence or `max_iters`.
pub fn run_restart(ranges: &RangeMatrix, config: &SolveConfig, restart_index: usize) -> SolveState {
    let mut state = initialize(ranges, config, restart_index);
    for _ in 0..config.max_iters {
        state = iterate_once(state, ranges, config);
        if converged(&state.residual_history, config.rel_tol) {
            break;
        }
    }
    state
}

/// Full multi-restart solve; returns the restart with the lowest final
/// residual, ties going to the lower restart index.
pub fn solve_map(ranges: &RangeMatrix, config: &SolveConfig) -> Result<MapSolution> {
    config.validate()?;
    let (n, m) = (ranges.n_anchors(), ranges.n_devices());
    if m < MIN_DEVICES_PER_ANCHOR || n < 5 {
        return Err(Error::InsufficientData {
            n_anchors: n,
            n_devices: m,
        });
    }

    let runs: Vec<SolveState> = (0..config.restarts)
        .into_par_iter()
        .map(|k| run_restart(ranges, config, k))
        .collect();

    let score = |s: &SolveState| {
        let r = s.residual();
        if r.is_nan() {
            f64::INFINITY
        } else {
            r
        }
    };
    let (best_index, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, cand| if score(&cand.1) < score(&best.1) { cand } else { best })
        .expect("restarts >= 1");
    log::debug!(
        "restart {best_index} wins with residual {:e} after {} iterations",
        best.residual(),
        best.iteration
    );

    Ok(MapSolution {
        residual: best.residual(),
        iterations_used: best.iteration,
        residual_history: best.residual_history,
        devices: best.devices,
        anchors: best.anchors,
        restart_index: best_index,
        seed: config.rng_seed,
        degenerate_normalization: best.degenerate_normalization,
    })
}
