//! Shared data model: packets, aggregated measurements, range matrices,
//! estimates and solver configuration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pathloss::{rssi_to_range, PathLossParams, Rssi};
use crate::{Error, Point3, Result};

/// Serializes a [`Point3`] as a plain `[x, y, z]` array.
pub(crate) mod point_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Point3;

    pub fn serialize<S: Serializer>(p: &Point3, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y, p.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point3, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Point3::new(x, y, z))
    }
}

pub(crate) mod points_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Point3;

    pub fn serialize<S: Serializer>(ps: &[Point3], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<[f64; 3]> = ps.iter().map(|p| [p.x, p.y, p.z]).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Point3>, D::Error> {
        let raw = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[x, y, z]| Point3::new(x, y, z)).collect())
    }
}

/// One captured packet: which anchor it was heard at, who sent it, how loud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub anchor_id: String,
    pub device_mac: String,
    pub rssi_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts_us: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub rssi_dbm: f64,
    pub packet_count: u32,
}

/// Aggregated RSSI per (anchor, device) pair. Missing pairs are absent.
///
/// Ids are kept in lexicographic order, which makes [`aggregate`]
/// independent of packet order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    anchor_ids: Vec<String>,
    device_ids: Vec<String>,
    entries: BTreeMap<(usize, usize), Entry>,
}

impl MeasurementSet {
    pub fn new(
        anchor_ids: Vec<String>,
        device_ids: Vec<String>,
        entries: BTreeMap<(usize, usize), Entry>,
    ) -> Result<Self> {
        for &(i, j) in entries.keys() {
            if i >= anchor_ids.len() || j >= device_ids.len() {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside {}x{}",
                    anchor_ids.len(),
                    device_ids.len()
                )));
            }
        }
        if let Some(e) = entries.values().find(|e| e.packet_count == 0) {
            return Err(Error::InvalidMeasurement(format!(
                "entry with zero packets (rssi {})",
                e.rssi_dbm
            )));
        }
        if let Some(e) = entries.values().find(|e| !e.rssi_dbm.is_finite()) {
            return Err(Error::InvalidMeasurement(format!(
                "non-finite rssi {}",
                e.rssi_dbm
            )));
        }
        Ok(Self {
            anchor_ids,
            device_ids,
            entries,
        })
    }

    pub fn anchor_ids(&self) -> &[String] {
        &self.anchor_ids
    }

    pub fn device_ids(&self) -> &[String] {
        &self.device_ids
    }

    pub fn get(&self, anchor: usize, device: usize) -> Option<&Entry> {
        self.entries.get(&(anchor, device))
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &Entry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Groups packets by (anchor, device) and takes the median RSSI in dB.
pub fn aggregate(packets: &[Packet]) -> Result<MeasurementSet> {
    if packets.is_empty() {
        return Err(Error::EmptyMeasurements);
    }
    if let Some(p) = packets.iter().find(|p| !p.rssi_dbm.is_finite()) {
        return Err(Error::InvalidMeasurement(format!(
            "non-finite rssi for {} at {}",
            p.device_mac, p.anchor_id
        )));
    }

    let anchor_ids: Vec<String> = packets
        .iter()
        .map(|p| p.anchor_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    let device_ids: Vec<String> = packets
        .iter()
        .map(|p| p.device_mac.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();

    let mut grouped: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for p in packets {
        // both lookups hit: ids were collected from the same packets
        let i = anchor_ids.binary_search(&p.anchor_id).unwrap();
        let j = device_ids.binary_search(&p.device_mac).unwrap();
        grouped.entry((i, j)).or_default().push(p.rssi_dbm);
    }

    let entries = grouped
        .into_iter()
        .map(|(key, mut values)| {
            let entry = Entry {
                rssi_dbm: median(&mut values),
                packet_count: values.len() as u32,
            };
            (key, entry)
        })
        .collect();

    MeasurementSet::new(anchor_ids, device_ids, entries)
}

/// N x M matrix of uncalibrated ranges with a presence mask. Row = anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMatrix {
    anchor_ids: Vec<String>,
    device_ids: Vec<String>,
    ranges: Vec<f64>,
    mask: Vec<bool>,
}

impl RangeMatrix {
    /// Builds a matrix from row-major optional ranges.
    pub fn from_rows(
        anchor_ids: Vec<String>,
        device_ids: Vec<String>,
        rows: &[Vec<Option<f64>>],
    ) -> Result<Self> {
        let (n, m) = (anchor_ids.len(), device_ids.len());
        if rows.len() != n || rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} rows of {m} ranges"
            )));
        }
        let mut ranges = vec![0.0; n * m];
        let mut mask = vec![false; n * m];
        for (i, row) in rows.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                if let Some(r) = *r {
                    if !(r.is_finite() && r > 0.0) {
                        return Err(Error::NonPositiveRange(r));
                    }
                    ranges[i * m + j] = r;
                    mask[i * m + j] = true;
                }
            }
        }
        Ok(Self {
            anchor_ids,
            device_ids,
            ranges,
            mask,
        })
    }

    pub fn n_anchors(&self) -> usize {
        self.anchor_ids.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_ids.len()
    }

    pub fn anchor_ids(&self) -> &[String] {
        &self.anchor_ids
    }

    pub fn device_ids(&self) -> &[String] {
        &self.device_ids
    }

    pub fn get(&self, anchor: usize, device: usize) -> Option<f64> {
        let k = anchor * self.n_devices() + device;
        self.mask[k].then(|| self.ranges[k])
    }

    pub fn is_present(&self, anchor: usize, device: usize) -> bool {
        self.mask[anchor * self.n_devices() + device]
    }

    /// Ranges from every anchor to one device.
    pub fn device_column(&self, device: usize) -> Vec<Option<f64>> {
        (0..self.n_anchors()).map(|i| self.get(i, device)).collect()
    }

    /// Ranges from one anchor to every device.
    pub fn anchor_row(&self, anchor: usize) -> Vec<Option<f64>> {
        (0..self.n_devices()).map(|j| self.get(anchor, j)).collect()
    }

    pub fn present_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Converts every aggregated entry to a range; mask mirrors entry presence.
pub fn to_ranges(ms: &MeasurementSet, params: &PathLossParams) -> Result<RangeMatrix> {
    params.validate()?;
    let (n, m) = (ms.anchor_ids.len(), ms.device_ids.len());
    let mut ranges = vec![0.0; n * m];
    let mut mask = vec![false; n * m];
    for (&(i, j), entry) in &ms.entries {
        ranges[i * m + j] = rssi_to_range(Rssi::new(entry.rssi_dbm)?, params)?;
        mask[i * m + j] = true;
    }
    Ok(RangeMatrix {
        anchor_ids: ms.anchor_ids.clone(),
        device_ids: ms.device_ids.clone(),
        ranges,
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    #[serde(with = "point_serde")]
    pub min: Point3,
    #[serde(with = "point_serde")]
    pub max: Point3,
}

impl BoundingBox {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        let bbox = Self { min, max };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.min.iter().chain(self.max.iter()).all(|v| v.is_finite());
        if !finite || (0..3).any(|k| self.min[k] >= self.max[k]) {
            return Err(Error::InvalidParams(format!(
                "bounding box min {:?} must be strictly below max {:?}",
                self.min.as_slice(),
                self.max.as_slice()
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, p: &Point3) -> Point3 {
        Point3::from_fn(|k, _| p[k].clamp(self.min[k], self.max[k]))
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn extent(&self) -> Point3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEstimate {
    pub device_id: String,
    #[serde(with = "point_serde")]
    pub position: Point3,
    pub gain: f64,
    /// Too few anchors measured this device; the estimate is a placeholder
    /// or a stale carry-over.
    #[serde(default)]
    pub low_evidence: bool,
    #[serde(default)]
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEstimate {
    pub anchor_id: String,
    #[serde(with = "point_serde")]
    pub position: Point3,
    #[serde(default)]
    pub low_evidence: bool,
    #[serde(default)]
    pub rank_deficient: bool,
}

/// Which measured pair the linearization subtracts from the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePolicy {
    /// Strongest signal, i.e. the smallest (scaled) range.
    #[default]
    SmallestRange,
    /// First measured pair in index order.
    IndexZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub enabled: bool,
    pub target_rms_radius: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            enabled: true,
            target_rms_radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub rng_seed: u64,
    pub bbox: Option<BoundingBox>,
    pub gain_bounds: (f64, f64),
    pub normalization: Normalization,
    pub reference_policy: ReferencePolicy,
    pub min_anchors_per_device: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tol: 1e-8,
            restarts: 20,
            rng_seed: 0,
            bbox: None,
            gain_bounds: (0.05, 20.0),
            normalization: Normalization::default(),
            reference_policy: ReferencePolicy::default(),
            min_anchors_per_device: 5,
        }
    }
}

impl SolveConfig {
    /// Sets the bounding box; normalization is turned off since clamping into
    /// the box fixes the gauge instead.
    pub fn with_bbox(mut self, bbox: BoundingBox) -> Self {
        self.bbox = Some(bbox);
        self.normalization.enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParams("restarts must be >= 1".into()));
        }
        let (lo, hi) = self.gain_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gain bounds must satisfy 0 < min < max, got ({lo}, {hi})"
            )));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidParams("rel_tol must be >= 0".into()));
        }
        if !(self.normalization.target_rms_radius > 0.0
            && self.normalization.target_rms_radius.is_finite())
        {
            return Err(Error::InvalidParams(
                "target_rms_radius must be positive".into(),
            ));
        }
        if self.min_anchors_per_device < 2 {
            return Err(Error::InvalidParams(
                "min_anchors_per_device must be >= 2".into(),
            ));
        }
        if let Some(bbox) = &self.bbox {
            bbox.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSolution {
    pub devices: Vec<DeviceEstimate>,
    pub anchors: Vec<AnchorEstimate>,
    /// Mean squared quadratic inconsistency over measured pairs.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations_used: usize,
    pub restart_index: usize,
    pub seed: u64,
    /// Normalization met an all-coincident anchor cloud at some point.
    #[serde(default)]
    pub degenerate_normalization: bool,
}
