//! Accuracy against ground truth and map export.
//!
//! Distance-only data fixes a map only up to rotation, translation,
//! reflection and scale, so estimates are first aligned to the truth with a
//! least-squares similarity transform.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::model::MapSolution;
use crate::synth::Scenario;
use crate::{Error, Point3, Result};

/// Relative singular-value floor below which a point set counts as collinear.
const COLLINEAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Point3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Point3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn is_reflection(&self) -> bool {
        self.rotation.determinant() < 0.0
    }
}

fn centered(points: &[Point3]) -> (Point3, Vec<Point3>) {
    let mean = points.iter().fold(Point3::zeros(), |acc, p| acc + p) / points.len() as f64;
    (mean, points.iter().map(|p| p - mean).collect())
}

fn check_spread(points: &[Point3], what: &str) -> Result<()> {
    let scatter = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + p * p.transpose());
    let mut sv: Vec<f64> = scatter.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= COLLINEAR_RTOL * sv[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "{what} points are collinear or coincident"
        )));
    }
    Ok(())
}

/// RMS of `|T(x_i) - y_i|`.
pub fn alignment_rmse(transform: &SimilarityTransform, estimated: &[Point3], truth: &[Point3]) -> f64 {
    let sq: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(x, y)| (transform.apply(x) - y).norm_squared())
        .sum();
    (sq / estimated.len() as f64).sqrt()
}

/// Similarity transform minimizing `sum |s R x_i + t - y_i|^2` (Umeyama).
pub fn procrustes_align(
    estimated: &[Point3],
    truth: &[Point3],
    allow_reflection: bool,
) -> Result<(SimilarityTransform, f64)> {
    if estimated.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated points vs {} true points",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.len() < 3 {
        return Err(Error::DegenerateConfiguration(
            "need at least 3 point pairs".into(),
        ));
    }
    let (mu_x, xs) = centered(estimated);
    let (mu_y, ys) = centered(truth);
    check_spread(&xs, "estimated")?;
    check_spread(&ys, "true")?;

    let n = xs.len() as f64;
    let cov = xs
        .iter()
        .zip(&ys)
        .fold(Matrix3::zeros(), |acc, (x, y)| acc + y * x.transpose())
        / n;
    let var_x = xs.iter().map(|x| x.norm_squared()).sum::<f64>() / n;

    let svd = cov.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut signs = Matrix3::identity();
    if !allow_reflection && (u * v_t).determinant() < 0.0 {
        signs[(svd.singular_values.imin(), svd.singular_values.imin())] = -1.0;
    }
    let rotation = u * signs * v_t;
    let trace = (0..3).map(|k| svd.singular_values[k] * signs[(k, k)]).sum::<f64>();
    let scale = trace / var_x;
    let transform = SimilarityTransform {
        scale,
        rotation,
        translation: mu_y - scale * (rotation * mu_x),
    };
    let rmse = alignment_rmse(&transform, estimated, truth);
    Ok((transform, rmse))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceError {
    pub device_id: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aligned_device_rmse: f64,
    pub aligned_anchor_rmse: f64,
    pub per_device: Vec<DeviceError>,
    pub used_reflection: bool,
    /// Largest distance between two ground-truth points.
    pub scene_diameter: f64,
    /// `aligned_device_rmse / scene_diameter`.
    pub device_rmse_fraction: f64,
    pub scale: f64,
}

/// Aligns devices and anchors jointly to the scenario and reports errors.
pub fn evaluate(solution: &MapSolution, scenario: &Scenario, allow_reflection: bool) -> Result<EvalReport> {
    let true_anchor_ids = scenario.anchor_ids();
    let est_devices: BTreeSet<&str> = solution.devices.iter().map(|d| d.device_id.as_str()).collect();
    let true_devices: BTreeSet<&str> = scenario.devices.iter().map(|d| d.mac.as_str()).collect();
    if est_devices != true_devices || est_devices.len() != solution.devices.len() {
        return Err(Error::IdMismatch(format!(
            "solution devices {est_devices:?} vs scenario devices {true_devices:?}"
        )));
    }
    let est_anchors: BTreeSet<&str> = solution.anchors.iter().map(|a| a.anchor_id.as_str()).collect();
    let true_anchors: BTreeSet<&str> = true_anchor_ids.iter().map(String::as_str).collect();
    if est_anchors != true_anchors || est_anchors.len() != solution.anchors.len() {
        return Err(Error::IdMismatch(format!(
            "solution has {} anchors, scenario has {}",
            solution.anchors.len(),
            scenario.anchors.len()
        )));
    }

    // pair up in scenario order
    let mut estimated = Vec::new();
    let mut truth = Vec::new();
    for d in &scenario.devices {
        let est = solution.devices.iter().find(|e| e.device_id == d.mac).unwrap();
        estimated.push(est.position);
        truth.push(d.position);
    }
    for (id, p) in true_anchor_ids.iter().zip(&scenario.anchors) {
        let est = solution.anchors.iter().find(|e| &e.anchor_id == id).unwrap();
        estimated.push(est.position);
        truth.push(*p);
    }

    let (transform, _) = procrustes_align(&estimated, &truth, allow_reflection)?;
    let m = scenario.devices.len();
    let per_device: Vec<DeviceError> = scenario
        .devices
        .iter()
        .enumerate()
        .map(|(j, d)| DeviceError {
            device_id: d.mac.clone(),
            error: (transform.apply(&estimated[j]) - truth[j]).norm(),
        })
        .collect();
    let aligned_device_rmse = alignment_rmse(&transform, &estimated[..m], &truth[..m]);
    let aligned_anchor_rmse = if scenario.anchors.is_empty() {
        0.0
    } else {
        alignment_rmse(&transform, &estimated[m..], &truth[m..])
    };
    let scene_diameter = scenario.diameter();
    Ok(EvalReport {
        aligned_device_rmse,
        aligned_anchor_rmse,
        per_device,
        used_reflection: transform.is_reflection(),
        scene_diameter,
        device_rmse_fraction: aligned_device_rmse / scene_diameter,
        scale: transform.scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Json,
    Svg,
}

const SVG_SIZE: f64 = 800.0;
const SVG_MARGIN: f64 = 60.0;

fn path_color(t: f64) -> String {
    // blue at the start of the walk, green at the end
    let t = t.clamp(0.0, 1.0);
    let g = (160.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("#00{g:02x}{b:02x}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Top-down SVG: x/y only, height dropped.
fn render_svg(solution: &MapSolution) -> String {
    let points: Vec<(f64, f64)> = solution
        .anchors
        .iter()
        .map(|a| (a.position.x, a.position.y))
        .chain(solution.devices.iter().map(|d| (d.position.x, d.position.y)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = points.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if points.is_empty() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (SVG_SIZE - 2.0 * SVG_MARGIN) / span;
    let cx = 0.5 * (x0 + x1);
    let cy = 0.5 * (y0 + y1);
    // y grows upward in the map, downward in SVG
    let to_px = |x: f64, y: f64| {
        (
            SVG_SIZE / 2.0 + (x - cx) * scale,
            SVG_SIZE / 2.0 - (y - cy) * scale,
        )
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let (ox, oy) = to_px(x0, y0);
    let (ex, ey) = to_px(x0 + span, y0 + span);
    let _ = writeln!(
        svg,
        r##"<g id="axes" stroke="#888888" stroke-width="1"><line x1="{ox:.2}" y1="{oy:.2}" x2="{ex:.2}" y2="{oy:.2}"/><line x1="{ox:.2}" y1="{oy:.2}" x2="{ox:.2}" y2="{ey:.2}"/></g>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="#444444">x: {x0:.2} .. {:.2}, y: {y0:.2} .. {:.2}</text>"##,
        ox,
        oy + 20.0,
        x0 + span,
        y0 + span
    );

    let n = solution.anchors.len();
    if n > 1 {
        let coords: Vec<String> = solution
            .anchors
            .iter()
            .map(|a| {
                let (x, y) = to_px(a.position.x, a.position.y);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline id="path" fill="none" stroke="#7799cc" stroke-width="1.5" stroke-dasharray="6,4" points="{}"/>"##,
            coords.join(" ")
        );
    }
    let _ = writeln!(svg, r#"<g id="anchors">"#);
    for (i, a) in solution.anchors.iter().enumerate() {
        let (x, y) = to_px(a.position.x, a.position.y);
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<circle class="anchor" cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"><title>{}</title></circle>"#,
            path_color(t),
            xml_escape(&a.anchor_id)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g id="devices">"#);
    for d in &solution.devices {
        let (x, y) = to_px(d.position.x, d.position.y);
        let _ = writeln!(
            svg,
            r##"<circle class="device" cx="{x:.2}" cy="{y:.2}" r="8" fill="#1040c0" stroke="black" stroke-width="2"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" font-weight="bold">{}</text>"#,
            x + 11.0,
            y + 4.0,
            xml_escape(&d.device_id)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    svg
}

pub fn export_map(solution: &MapSolution, format: MapFormat) -> Vec<u8> {
    match format {
        MapFormat::Json => crate::formats::map_to_json(solution).into_bytes(),
        MapFormat::Svg => render_svg(solution).into_bytes(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnchorEstimate, DeviceEstimate};
    use nalgebra::Rotation3;

    fn cloud() -> Vec<Point3> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(3.0, 0.5, 0.2),
            Point3::new(1.0, 4.0, -1.0),
            Point3::new(-2.0, 1.0, 2.5),
            Point3::new(0.5, -3.0, 1.0),
        ]
    }

    #[test]
    fn self_alignment_is_identity() {
        let (t, rmse) = procrustes_align(&cloud(), &cloud(), true).unwrap();
        assert!(rmse < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_scaled_rotation() {
        let rot = Rotation3::from_axis_angle(&Point3::z_axis(), std::f64::consts::FRAC_PI_2);
        let shift = Point3::new(1.0, -2.0, 3.0);
        let target: Vec<Point3> = cloud().iter().map(|p| 2.0 * (rot * p) + shift).collect();
        let (t, rmse) = procrustes_align(&cloud(), &target, false).unwrap();
        assert!(rmse < 1e-9);
        assert!((t.scale - 2.0).abs() < 1e-9);
        assert!((t.rotation - rot.matrix()).norm() < 1e-9);
        assert!((t.translation - shift).norm() < 1e-9);
    }

    #[test]
    fn reflection_only_when_allowed() {
        let mirrored: Vec<Point3> = cloud().iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let (t, rmse) = procrustes_align(&cloud(), &mirrored, true).unwrap();
        assert!(t.is_reflection());
        assert!(rmse < 1e-9);
        let (t, rmse) = procrustes_align(&cloud(), &mirrored, false).unwrap();
        assert!(!t.is_reflection());
        assert!(rmse > 0.1);
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<Point3> = (0..5).map(|k| Point3::repeat(k as f64)).collect();
        assert!(matches!(
            procrustes_align(&line, &cloud(), true),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(procrustes_align(&cloud()[..2], &cloud()[..2], true).is_err());
        assert!(procrustes_align(&cloud(), &cloud()[..4], true).is_err());
    }

    fn solution_with(devices: Vec<DeviceEstimate>, anchors: Vec<AnchorEstimate>) -> MapSolution {
        MapSolution {
            devices,
            anchors,
            residual: 0.0,
            residual_history: vec![0.0],
            iterations_used: 0,
            restart_index: 0,
            seed: 0,
            degenerate_normalization: false,
        }
    }

    #[test]
    fn svg_empty_map_has_axes_only() {
        let svg = String::from_utf8(export_map(&solution_with(vec![], vec![]), MapFormat::Svg)).unwrap();
        assert!(svg.contains(r#"id="axes""#));
        assert!(!svg.contains(r#"class="device""#));
        assert!(!svg.contains(r#"class="anchor""#));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_single_device() {
        let device = DeviceEstimate {
            device_id: "02:00:00:00:00:00".into(),
            position: Point3::zeros(),
            gain: 1.0,
            low_evidence: false,
            rank_deficient: false,
        };
        let svg = String::from_utf8(export_map(&solution_with(vec![device], vec![]), MapFormat::Svg)).unwrap();
        assert_eq!(svg.matches(r#"class="device""#).count(), 1);
        assert!(svg.contains("02:00:00:00:00:00"));
    }

    #[test]
    fn path_colors_run_blue_to_green() {
        assert_eq!(path_color(0.0), "#0000ff");
        assert_eq!(path_color(1.0), "#00a000");
    }
}
