//! Linearized least-squares subproblems.
//!
//! With anchors known, each measured pair gives `|d - a_i|^2 = g^2 r_i^2`.
//! Subtracting a reference equation cancels `|d|^2` and leaves a linear system
//! in `(d, g^2)`. The anchor problem is the mirror image with `(d_j, g_j)`
//! known and `a` unknown.

use nalgebra::{DMatrix, DVector};

use crate::model::{AnchorEstimate, DeviceEstimate, RangeMatrix, ReferencePolicy, SolveConfig};
use crate::{Error, Point3, Result};

/// Singular values below this fraction of the largest count as zero.
const RANK_RTOL: f64 = 1e-10;

/// Minimum number of measured devices for an anchor solve.
pub const MIN_DEVICES_PER_ANCHOR: usize = 4;

/// A differenced system `matrix * x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Measurement index behind each row.
    pub provenance: Vec<usize>,
    /// Measurement index that was subtracted from every row.
    pub reference: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct LeastSquares {
    solution: DVector<f64>,
    rank: usize,
}

/// Least squares through the SVD of the column-equilibrated matrix; the
/// solution has minimum norm in the scaled coordinates.
///
/// Equilibration matters: the `g^2` column is measured in squared ranges and
/// can be orders of magnitude larger than the spatial columns, which costs the
/// unscaled SVD several digits.
fn least_squares(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> LeastSquares {
    // the SVD iteration may not terminate on NaN/inf input
    if matrix.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return LeastSquares {
            solution: DVector::from_element(matrix.ncols(), f64::NAN),
            rank: 0,
        };
    }
    let col_scale: Vec<f64> = matrix
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = matrix.clone();
    for (k, n) in col_scale.iter().enumerate() {
        scaled.column_mut(k).unscale_mut(*n);
    }
    let svd = scaled.svd(true, true);
    let s_max = svd.singular_values.max();
    let eps = s_max * RANK_RTOL;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let mut solution = if s_max > 0.0 {
        // only fails when U/V were not computed
        svd.solve(rhs, eps).expect("svd computed with u and v")
    } else {
        DVector::zeros(matrix.ncols())
    };
    for (k, n) in col_scale.iter().enumerate() {
        solution[k] /= n;
    }
    LeastSquares { solution, rank }
}

fn pick_reference(scaled: &[(usize, f64)], policy: ReferencePolicy) -> usize {
    match policy {
        ReferencePolicy::IndexZero => scaled[0].0,
        ReferencePolicy::SmallestRange => {
            scaled
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty")
                .0
        }
    }
}

/// Builds the device system with unknowns `[d_x, d_y, d_z, g^2]`.
///
/// Row for anchor `i`: `2(a_ref - a_i) . d + (r_ref^2 - r_i^2) g^2 = |a_ref|^2 - |a_i|^2`.
pub fn device_system(
    anchors: &[Point3],
    ranges: &[Option<f64>],
    policy: ReferencePolicy,
) -> Result<LinearSystem> {
    if anchors.len() != ranges.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} anchors but {} ranges",
            anchors.len(),
            ranges.len()
        )));
    }
    let present: Vec<(usize, f64)> = ranges
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .collect();
    if present.len() < 2 {
        return Err(Error::TooFewAnchors {
            found: present.len(),
            needed: 2,
        });
    }
    let reference = pick_reference(&present, policy);
    let a_ref = anchors[reference];
    let r_ref = ranges[reference].expect("reference is present");

    let rows: Vec<(usize, f64)> = present.into_iter().filter(|&(i, _)| i != reference).collect();
    let mut matrix = DMatrix::zeros(rows.len(), 4);
    let mut rhs = DVector::zeros(rows.len());
    for (row, &(i, r)) in rows.iter().enumerate() {
        let diff = 2.0 * (a_ref - anchors[i]);
        matrix[(row, 0)] = diff.x;
        matrix[(row, 1)] = diff.y;
        matrix[(row, 2)] = diff.z;
        matrix[(row, 3)] = r_ref * r_ref - r * r;
        rhs[row] = a_ref.norm_squared() - anchors[i].norm_squared();
    }
    Ok(LinearSystem {
        matrix,
        rhs,
        provenance: rows.iter().map(|&(i, _)| i).collect(),
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceFix {
    pub position: Point3,
    pub gain: f64,
    /// The differenced system had rank < 4; the solution is minimum-norm.
    pub rank_deficient: bool,
    /// `g^2` fell outside the configured bounds and the position was re-solved
    /// with the gain pinned.
    pub gain_clamped: bool,
}

/// Locates one device and its gain from known anchor positions.
pub fn solve_device(
    anchors: &[Point3],
    ranges: &[Option<f64>],
    config: &SolveConfig,
) -> Result<DeviceFix> {
    let found = ranges.iter().filter(|r| r.is_some()).count();
    if found < config.min_anchors_per_device {
        return Err(Error::TooFewAnchors {
            found,
            needed: config.min_anchors_per_device,
        });
    }
    let system = device_system(anchors, ranges, config.reference_policy)?;
    let ls = least_squares(&system.matrix, &system.rhs);
    let mut rank_deficient = ls.rank < 4;

    let (g_min, g_max) = config.gain_bounds;
    let mut position = Point3::new(ls.solution[0], ls.solution[1], ls.solution[2]);
    let g2 = if rank_deficient {
        // differencing lost g^2 (e.g. equal ranges); fit it from the
        // undifferenced equations at the min-norm position
        gain_squared_at(&position, anchors, ranges)
    } else {
        ls.solution[3]
    };
    let clamped_g2 = if g2.is_finite() {
        g2.clamp(g_min * g_min, g_max * g_max)
    } else {
        g_min * g_min
    };
    let gain_clamped = clamped_g2 != g2;
    if gain_clamped {
        // move the g^2 column to the right-hand side and solve for d alone
        let spatial = system.matrix.columns(0, 3).into_owned();
        let rhs = &system.rhs - system.matrix.column(3) * clamped_g2;
        let refit = least_squares(&spatial, &rhs);
        rank_deficient = refit.rank < 3;
        position = Point3::new(refit.solution[0], refit.solution[1], refit.solution[2]);
    }
    if !position.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateConfiguration(
            "device solve produced a non-finite position".into(),
        ));
    }
    if let Some(bbox) = &config.bbox {
        position = bbox.clamp(&position);
    }
    Ok(DeviceFix {
        position,
        gain: clamped_g2.sqrt(),
        rank_deficient,
        gain_clamped,
    })
}

/// Least-squares `g^2` for `|d - a_i|^2 = g^2 r_i^2` with `d` fixed.
fn gain_squared_at(position: &Point3, anchors: &[Point3], ranges: &[Option<f64>]) -> f64 {
    let (num, den) = anchors
        .iter()
        .zip(ranges)
        .filter_map(|(a, r)| r.map(|r| (a, r * r)))
        .fold((0.0, 0.0), |(num, den), (a, r2)| {
            (num + r2 * (position - a).norm_squared(), den + r2 * r2)
        });
    num / den
}

/// Builds the anchor system with unknowns `[a_x, a_y, a_z]`.
///
/// With `s_j = (g_j r_j)^2`, row for device `j`:
/// `2(d_ref - d_j) . a = s_j - s_ref - |d_j|^2 + |d_ref|^2`.
pub fn anchor_system(
    devices: &[Point3],
    gains: &[f64],
    ranges: &[Option<f64>],
    policy: ReferencePolicy,
) -> Result<LinearSystem> {
    if devices.len() != ranges.len() || devices.len() != gains.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} devices, {} gains, {} ranges",
            devices.len(),
            gains.len(),
            ranges.len()
        )));
    }
    let present: Vec<(usize, f64)> = ranges
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.map(|r| (j, gains[j] * r)))
        .collect();
    if present.len() < 2 {
        return Err(Error::TooFewDevices {
            found: present.len(),
            needed: 2,
        });
    }
    let reference = pick_reference(&present, policy);
    let d_ref = devices[reference];
    let s_ref = (gains[reference] * ranges[reference].expect("reference is present")).powi(2);

    let rows: Vec<(usize, f64)> = present.into_iter().filter(|&(j, _)| j != reference).collect();
    let mut matrix = DMatrix::zeros(rows.len(), 3);
    let mut rhs = DVector::zeros(rows.len());
    for (row, &(j, scaled)) in rows.iter().enumerate() {
        let diff = 2.0 * (d_ref - devices[j]);
        matrix[(row, 0)] = diff.x;
        matrix[(row, 1)] = diff.y;
        matrix[(row, 2)] = diff.z;
        rhs[row] = scaled * scaled - s_ref - devices[j].norm_squared() + d_ref.norm_squared();
    }
    Ok(LinearSystem {
        matrix,
        rhs,
        provenance: rows.iter().map(|&(j, _)| j).collect(),
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorFix {
    pub position: Point3,
    pub rank_deficient: bool,
}

/// Locates one anchor from known device positions and gains.
pub fn solve_anchor(
    devices: &[Point3],
    gains: &[f64],
    ranges: &[Option<f64>],
    config: &SolveConfig,
) -> Result<AnchorFix> {
    let found = ranges.iter().filter(|r| r.is_some()).count();
    if found < MIN_DEVICES_PER_ANCHOR {
        return Err(Error::TooFewDevices {
            found,
            needed: MIN_DEVICES_PER_ANCHOR,
        });
    }
    let system = anchor_system(devices, gains, ranges, config.reference_policy)?;
    let ls = least_squares(&system.matrix, &system.rhs);
    let mut position = Point3::new(ls.solution[0], ls.solution[1], ls.solution[2]);
    if !position.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateConfiguration(
            "anchor solve produced a non-finite position".into(),
        ));
    }
    if let Some(bbox) = &config.bbox {
        position = bbox.clamp(&position);
    }
    Ok(AnchorFix {
        position,
        rank_deficient: ls.rank < 3,
    })
}

/// Mean over measured pairs of `(|d_j - a_i|^2 - g_j^2 r_ij^2)^2`.
///
/// Zero when nothing is measured.
///
/// # Panics
///
/// If the estimate counts do not match the matrix dimensions.
pub fn true_residual(
    anchors: &[AnchorEstimate],
    devices: &[DeviceEstimate],
    ranges: &RangeMatrix,
) -> f64 {
    assert_eq!(anchors.len(), ranges.n_anchors(), "anchor count mismatch");
    assert_eq!(devices.len(), ranges.n_devices(), "device count mismatch");
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, anchor) in anchors.iter().enumerate() {
        for (j, device) in devices.iter().enumerate() {
            if let Some(r) = ranges.get(i, j) {
                let model = (device.position - anchor.position).norm_squared();
                let measured = (device.gain * r).powi(2);
                total += (model - measured).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
