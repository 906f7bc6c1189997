use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geom::{CameraProjection, Point3};
use crate::ingest::SilhouetteMask;
use crate::params::LodeParams;

/// One horizontal circumference of the container.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    /// Height relative to the container centroid (mm).
    pub z: f64,
    pub radius: f64,
}

/// Rotationally symmetric container as a stack of circumferences, heights
/// relative to the centroid used for the reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerShape {
    slices: Vec<Slice>,
}

impl ContainerShape {
    pub fn new(slices: Vec<Slice>) -> Result<Self, PerceptionError> {
        if slices.len() < 2 {
            return Err(PerceptionError::InvalidShape(
                "fewer than two slices".into(),
            ));
        }
        if slices
            .iter()
            .any(|s| !s.z.is_finite() || !s.radius.is_finite() || s.radius < 0.0)
        {
            return Err(PerceptionError::InvalidShape(
                "radii must be finite and nonnegative".into(),
            ));
        }
        if slices.windows(2).any(|w| w[1].z <= w[0].z) {
            return Err(PerceptionError::InvalidShape(
                "heights must strictly increase".into(),
            ));
        }
        Ok(Self { slices })
    }

    /// Uniformly spaced slices from `z0` with the given radii.
    pub fn from_radii(z0: f64, spacing: f64, radii: &[f64]) -> Result<Self, PerceptionError> {
        Self::new(
            radii
                .iter()
                .enumerate()
                .map(|(i, &radius)| Slice {
                    z: z0 + i as f64 * spacing,
                    radius,
                })
                .collect(),
        )
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn z_min(&self) -> f64 {
        self.slices[0].z
    }

    pub fn z_max(&self) -> f64 {
        self.slices[self.slices.len() - 1].z
    }

    pub fn height(&self) -> f64 {
        self.z_max() - self.z_min()
    }

    pub fn max_radius(&self) -> f64 {
        self.slices.iter().map(|s| s.radius).fold(0.0, f64::max)
    }

    /// Radius at `z` by linear interpolation; zero outside the stack.
    pub fn radius_at(&self, z: f64) -> f64 {
        if z < self.z_min() || z > self.z_max() {
            return 0.0;
        }
        let i = self.slices.partition_point(|s| s.z <= z);
        if i == 0 {
            return self.slices[0].radius;
        }
        if i == self.slices.len() {
            return self.slices[i - 1].radius;
        }
        let (a, b) = (self.slices[i - 1], self.slices[i]);
        a.radius + (b.radius - a.radius) * (z - a.z) / (b.z - a.z)
    }
}

/// Dimensions (mm) and volume (mL) of a container shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
    pub volume_ml: f64,
}

/// Width and depth are the largest diameter; the volume is the sum of the
/// slab volumes between consecutive circumferences.
pub fn shape_metrics(shape: &ContainerShape) -> ShapeMetrics {
    let diameter = 2.0 * shape.max_radius();
    let volume_mm3: f64 = shape
        .slices()
        .windows(2)
        .map(|w| {
            std::f64::consts::PI
                * 0.5
                * (w[0].radius.powi(2) + w[1].radius.powi(2))
                * (w[1].z - w[0].z)
        })
        .sum();
    ShapeMetrics {
        width: diameter,
        height: shape.height(),
        depth: diameter,
        volume_ml: volume_mm3 / 1000.0,
    }
}

fn inside_all(masks: &[SilhouetteMask; 2], cameras: &[CameraProjection; 2], p: &Point3) -> bool {
    masks
        .iter()
        .zip(cameras)
        .all(|(m, c)| c.depth(p) > 0.0 && c.project(p).map(|px| m.contains(&px)).unwrap_or(false))
}

fn circle_inside(
    masks: &[SilhouetteMask; 2],
    cameras: &[CameraProjection; 2],
    centre: &Point3,
    radius: f64,
    samples: usize,
) -> bool {
    (0..samples).all(|i| {
        let a = std::f64::consts::TAU * i as f64 / samples as f64;
        inside_all(
            masks,
            cameras,
            &(centre + Point3::new(radius * a.cos(), radius * a.sin(), 0.0)),
        )
    })
}

/// Image scale at `p` in pixels per millimetre, measured across the viewing ray.
fn pixels_per_mm(cam: &CameraProjection, p: &Point3) -> Option<f64> {
    let view = p - cam.centre();
    let mut across = Point3::z().cross(&view);
    if across.norm() < 1e-9 {
        across = Point3::x();
    }
    let across = across.normalize();
    let a = cam.project(p).ok()?;
    let b = cam.project(&(p + across * 10.0)).ok()?;
    let ppm = (b - a).norm() / 10.0;
    (ppm > 0.0).then_some(ppm)
}

/// Reconstructs the container as circumferences around the vertical axis
/// through `centroid`, each shrunk until it projects inside both masks.
pub fn lode_reconstruct(
    masks: &[SilhouetteMask; 2],
    cameras: &[CameraProjection; 2],
    centroid: &Point3,
    params: &LodeParams,
) -> Result<ContainerShape, PerceptionError> {
    if masks.iter().any(|m| m.count() == 0) {
        return Err(PerceptionError::EmptyIntersection);
    }
    let axis = |z: f64| Point3::new(centroid.x, centroid.y, centroid.z + z);
    if !inside_all(masks, cameras, &axis(0.0)) {
        return Err(PerceptionError::EmptyIntersection);
    }
    let dz = params.slice_spacing;
    let max_steps = (params.max_half_height / dz).floor() as i64;
    let extent = |dir: i64| {
        let mut k = 0;
        while k < max_steps && inside_all(masks, cameras, &axis((k + 1) as f64 * dir as f64 * dz)) {
            k += 1;
        }
        k
    };
    let (below, above) = (extent(-1), extent(1));

    let mut r_init: f64 = 0.0;
    for (m, c) in masks.iter().zip(cameras) {
        if let Some(ppm) = pixels_per_mm(c, centroid) {
            r_init = r_init.max(m.widest_run() as f64 / ppm / 2.0);
        }
    }
    let step = params.radius_step;
    let shrink_steps = (r_init / step).ceil() as i64 + 1;

    let mut slices: Vec<Slice> = (-below..=above)
        .map(|k| {
            let z = k as f64 * dz;
            let centre = axis(z);
            let radius = (0..=shrink_steps)
                .map(|s| (shrink_steps - s) as f64 * step)
                .take_while(|r| *r >= params.min_radius)
                .find(|r| circle_inside(masks, cameras, &centre, *r, params.circle_samples))
                .unwrap_or(0.0);
            Slice { z, radius }
        })
        .collect();

    let keep = |s: &Slice| s.radius >= params.min_radius;
    let first = slices
        .iter()
        .position(keep)
        .ok_or(PerceptionError::EmptyIntersection)?;
    let last = slices.iter().rposition(keep).expect("a kept slice exists");
    slices.truncate(last + 1);
    slices.drain(..first);
    for s in slices.iter_mut().filter(|s| s.radius < params.min_radius) {
        s.radius = 0.0;
    }
    if slices.len() < 2 {
        return Err(PerceptionError::EmptyIntersection);
    }
    ContainerShape::new(slices)
}
