#![allow(dead_code)]

use mapifi::synth::{forward_rssi, generate_scenario, Scenario, WalkSpec};
use mapifi::{aggregate, to_ranges, BoundingBox, Point3, RangeMatrix};
use nalgebra::{Matrix3, Rotation3};
use rand::Rng;

pub fn room() -> BoundingBox {
    BoundingBox::new(Point3::zeros(), Point3::new(10.0, 8.0, 3.0)).unwrap()
}

/// 40-stop walk, 6 devices.
pub fn house(seed: u64) -> Scenario {
    let walk = WalkSpec {
        seed: seed + 1000,
        ..WalkSpec::default()
    };
    generate_scenario(room(), 6, &walk, (0.5, 2.0), seed).unwrap()
}

pub fn noiseless_ranges(scenario: &Scenario) -> RangeMatrix {
    let capture = forward_rssi(scenario, 0.0, 1, 0.0, 0).unwrap();
    to_ranges(&aggregate(&capture.packets).unwrap(), &scenario.params).unwrap()
}

pub fn random_point(rng: &mut impl Rng, lo: f64, hi: f64) -> Point3 {
    Point3::from_fn(|_, _| rng.random_range(lo..hi))
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = random_point(rng, -1.0, 1.0);
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::new(axis.normalize() * angle).into_inner()
}
