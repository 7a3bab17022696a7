//! Ground-truth scenarios and the forward RF model that turns them into
//! per-packet RSSI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{AnchorMarkers, MarkerInterval};
use crate::model::{points_serde, point_serde, AnchorEstimate, BoundingBox, DeviceEstimate, Packet};
use crate::pathloss::{range_to_rssi, PathLossParams};
use crate::{Error, Point3, Result};

/// Distance substituted when an anchor coincides with a device.
pub const COINCIDENT_FLOOR: f64 = 1e-6;

/// Spacing between the dwell windows of consecutive anchors.
pub const ANCHOR_SLOT_US: u64 = 10_000_000;
/// Spacing between packets inside one dwell window.
pub const PACKET_SPACING_US: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub mac: String,
    #[serde(rename = "pos", with = "point_serde")]
    pub position: Point3,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bbox: BoundingBox,
    pub devices: Vec<SyntheticDevice>,
    /// True anchor positions in walk order.
    #[serde(with = "points_serde")]
    pub anchors: Vec<Point3>,
    #[serde(rename = "pathloss")]
    pub params: PathLossParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSpec {
    pub n_anchors: usize,
    pub n_waypoints: usize,
    /// Peak deviation of the carried device's height from mid-room.
    pub height_amplitude: f64,
    pub seed: u64,
}

impl Default for WalkSpec {
    fn default() -> Self {
        Self {
            n_anchors: 40,
            n_waypoints: 5,
            height_amplitude: 0.5,
            seed: 0,
        }
    }
}

/// Anchor id for walk position `index` out of `count`, zero padded so that
/// lexicographic order matches walk order.
pub fn anchor_id(index: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(3);
    format!("a{index:0width$}")
}

/// Locally administered MAC for synthetic device `index`; index 0 plays the
/// gateway.
pub fn device_mac(index: usize) -> String {
    let b = (index as u32).to_be_bytes();
    format!("02:00:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3])
}

/// Generates a home with `n_devices` devices and a winding measurement walk.
///
/// Device positions and gains come from `seed`, the walk from `walk.seed`.
pub fn generate_scenario(
    bbox: BoundingBox,
    n_devices: usize,
    walk: &WalkSpec,
    gain_range: (f64, f64),
    seed: u64,
) -> Result<Scenario> {
    bbox.validate()
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    if n_devices < 4 {
        return Err(Error::InvalidScenario(format!(
            "need at least 4 devices, got {n_devices}"
        )));
    }
    if walk.n_anchors < 5 {
        return Err(Error::InvalidScenario(format!(
            "need at least 5 anchors, got {}",
            walk.n_anchors
        )));
    }
    if walk.n_waypoints < 2 {
        return Err(Error::InvalidScenario("need at least 2 waypoints".into()));
    }
    let (g_lo, g_hi) = gain_range;
    if !(g_lo > 0.0 && g_lo <= g_hi && g_hi.is_finite()) {
        return Err(Error::InvalidScenario(format!(
            "gain range ({g_lo}, {g_hi}) must be positive and ordered"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let devices = (0..n_devices)
        .map(|j| {
            let position = Point3::from_fn(|k, _| rng.random_range(bbox.min[k]..bbox.max[k]));
            let gain = if g_lo == g_hi {
                g_lo
            } else {
                rng.random_range(g_lo.ln()..g_hi.ln()).exp()
            };
            SyntheticDevice {
                mac: device_mac(j),
                position,
                gain,
            }
        })
        .collect();

    Ok(Scenario {
        bbox,
        devices,
        anchors: winding_path(&bbox, walk),
        params: PathLossParams::default(),
    })
}

/// Piecewise-linear walk through random waypoints at mid-height, sampled at
/// equal arc length, with a sinusoidal height swing.
fn winding_path(bbox: &BoundingBox, walk: &WalkSpec) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(walk.seed);
    let inset = 0.1 * bbox.extent();
    let mid_z = 0.5 * (bbox.min.z + bbox.max.z);
    let waypoints: Vec<Point3> = (0..walk.n_waypoints)
        .map(|_| {
            Point3::new(
                rng.random_range(bbox.min.x + inset.x..bbox.max.x - inset.x),
                rng.random_range(bbox.min.y + inset.y..bbox.max.y - inset.y),
                mid_z,
            )
        })
        .collect();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let cycles = 2.5;

    let mut cumulative = vec![0.0];
    for pair in waypoints.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + (pair[1] - pair[0]).norm());
    }
    let total = *cumulative.last().unwrap();

    (0..walk.n_anchors)
        .map(|k| {
            let t = k as f64 / (walk.n_anchors - 1) as f64;
            let s = t * total;
            let seg = cumulative
                .windows(2)
                .position(|w| s <= w[1])
                .unwrap_or(waypoints.len() - 2);
            let len = cumulative[seg + 1] - cumulative[seg];
            let u = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
            let mut p = waypoints[seg] + (waypoints[seg + 1] - waypoints[seg]) * u;
            p.z += walk.height_amplitude * (std::f64::consts::TAU * cycles * t + phase).sin();
            bbox.clamp(&p)
        })
        .collect()
}

impl Scenario {
    pub fn anchor_ids(&self) -> Vec<String> {
        (0..self.anchors.len())
            .map(|i| anchor_id(i, self.anchors.len()))
            .collect()
    }

    /// Ground truth as solver estimates.
    pub fn anchor_estimates(&self) -> Vec<AnchorEstimate> {
        self.anchor_ids()
            .into_iter()
            .zip(&self.anchors)
            .map(|(anchor_id, &position)| AnchorEstimate {
                anchor_id,
                position,
                low_evidence: false,
                rank_deficient: false,
            })
            .collect()
    }

    pub fn device_estimates(&self) -> Vec<DeviceEstimate> {
        self.devices
            .iter()
            .map(|d| DeviceEstimate {
                device_id: d.mac.clone(),
                position: d.position,
                gain: d.gain,
                low_evidence: false,
                rank_deficient: false,
            })
            .collect()
    }

    /// Largest distance between any two ground-truth points.
    pub fn diameter(&self) -> f64 {
        let points: Vec<Point3> = self
            .anchors
            .iter()
            .copied()
            .chain(self.devices.iter().map(|d| d.position))
            .collect();
        let mut best = 0.0f64;
        for (k, p) in points.iter().enumerate() {
            for q in &points[k + 1..] {
                best = best.max((p - q).norm());
            }
        }
        best
    }

    /// Dwell windows matching the timestamps [`forward_rssi`] assigns.
    pub fn markers(&self, packets_per_pair: usize) -> AnchorMarkers {
        let span = (self.devices.len() * packets_per_pair) as u64 * PACKET_SPACING_US;
        let intervals = self
            .anchor_ids()
            .into_iter()
            .enumerate()
            .map(|(i, anchor_id)| MarkerInterval {
                anchor_id,
                t_start_us: i as u64 * ANCHOR_SLOT_US,
                t_end_us: i as u64 * ANCHOR_SLOT_US + span,
            })
            .collect();
        AnchorMarkers::new(intervals).expect("slots are disjoint")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCapture {
    pub packets: Vec<Packet>,
    /// Pairs whose true distance was below [`COINCIDENT_FLOOR`].
    pub floored_pairs: usize,
}

/// Emits `packets_per_pair` packets per (anchor, device) pair at
/// `range_to_rssi(|d - a| / g)` plus Gaussian dB noise; each pair is dropped
/// entirely with probability `dropout_prob`.
pub fn forward_rssi(
    scenario: &Scenario,
    noise_sigma_db: f64,
    packets_per_pair: usize,
    dropout_prob: f64,
    seed: u64,
) -> Result<SyntheticCapture> {
    scenario.params.validate()?;
    if !(noise_sigma_db >= 0.0 && noise_sigma_db.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "noise sigma must be >= 0, got {noise_sigma_db}"
        )));
    }
    if !(0.0..1.0).contains(&dropout_prob) {
        return Err(Error::InvalidParams(format!(
            "dropout probability must be in [0, 1), got {dropout_prob}"
        )));
    }
    if packets_per_pair == 0 {
        return Err(Error::InvalidParams("packets_per_pair must be >= 1".into()));
    }
    if scenario.devices.iter().any(|d| !(d.gain > 0.0 && d.gain.is_finite())) {
        return Err(Error::InvalidScenario("device gains must be positive".into()));
    }
    let noise = Normal::new(0.0, noise_sigma_db).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let anchor_ids = scenario.anchor_ids();
    let mut packets = Vec::new();
    let mut floored_pairs = 0;
    for (i, anchor) in scenario.anchors.iter().enumerate() {
        let slot = i as u64 * ANCHOR_SLOT_US;
        for (j, device) in scenario.devices.iter().enumerate() {
            let dropped = rng.random::<f64>() < dropout_prob;
            let mut distance = (device.position - anchor).norm();
            if distance < COINCIDENT_FLOOR {
                log::warn!(
                    "anchor {} coincides with device {}; using floor distance",
                    anchor_ids[i],
                    device.mac
                );
                distance = COINCIDENT_FLOOR;
                floored_pairs += 1;
            }
            let clean = range_to_rssi(distance / device.gain, &scenario.params)?.dbm();
            for k in 0..packets_per_pair {
                let jitter = if noise_sigma_db > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                if dropped {
                    continue;
                }
                let offset = (j * packets_per_pair + k) as u64 * PACKET_SPACING_US;
                packets.push(Packet {
                    anchor_id: anchor_ids[i].clone(),
                    device_mac: device.mac.clone(),
                    rssi_dbm: clean + jitter,
                    ts_us: Some(slot + offset),
                });
            }
        }
    }
    Ok(SyntheticCapture {
        packets,
        floored_pairs,
    })
}
