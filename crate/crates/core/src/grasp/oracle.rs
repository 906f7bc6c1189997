//! Brute-force cross-check of the safe grasp region on a 1 mm height grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{graspable_range, safe_region, unsafe_heights, Interval};
use crate::geom::{triangulate, Point3};
use crate::ingest::HandoverScenario;
use crate::perception::{
    lode_reconstruct, track_container, ContainerShape, PerceptionError, KEYPOINTS,
};

/// Everything the region computation reads, in the container frame.
#[derive(Debug, Clone)]
pub struct OracleScene {
    pub shape: ContainerShape,
    pub hands: Vec<[Point3; KEYPOINTS]>,
    pub t: Point3,
    pub gripper_width: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDiff {
    pub analytic: Vec<Interval>,
    pub analytic_chosen: Option<Interval>,
    /// Runs of safe grid heights, as `[first, last]`.
    pub grid: Vec<Interval>,
    pub grid_chosen: Option<Interval>,
    /// Grid heights classified differently by the two computations.
    pub mismatched_heights: Vec<f64>,
    pub chosen_agrees: bool,
}

impl OracleDiff {
    pub fn passed(&self) -> bool {
        self.mismatched_heights.is_empty() && self.chosen_agrees
    }
}

/// Grid points within this distance of an analytic bound may fall either way.
const BOUNDARY_SLACK: f64 = 1e-9;

fn grid_safe(scene: &OracleScene, z: f64) -> bool {
    let half = scene.gripper_width / 2.0;
    if z - half < scene.shape.z_min()
        || z + half > scene.shape.z_max()
        || scene.shape.height() <= scene.gripper_width
    {
        return false;
    }
    let width = 2.0 * scene.shape.max_radius();
    let mut occluded = Vec::new();
    for hand in &scene.hands {
        for h in hand {
            let in_front = h.y > scene.t.y - width / 2.0;
            let beside = (h.x - scene.t.x).abs() < width;
            if in_front && beside {
                occluded.push(h.z - scene.t.z);
            }
        }
    }
    occluded.iter().all(|h| z <= h - scene.margin) || occluded.iter().all(|h| z >= h + scene.margin)
}

fn runs(points: &[(f64, bool)]) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    let mut open: Option<Interval> = None;
    for &(z, safe) in points {
        open = match (open, safe) {
            (Some(mut i), true) => {
                i.hi = z;
                Some(i)
            }
            (None, true) => Some(Interval::new(z, z)),
            (Some(i), false) => {
                out.push(i);
                None
            }
            (None, false) => None,
        };
    }
    out.extend(open);
    out
}

fn longest(pieces: &[Interval]) -> Option<Interval> {
    pieces
        .iter()
        .copied()
        .reduce(|best, i| if i.length() >= best.length() { i } else { best })
}

/// Compares the analytic region, computed with the margin offset by
/// `margin_error`, against the grid evaluation with the true margin.
pub fn check_scene(scene: &OracleScene, margin_error: f64) -> OracleDiff {
    let width = 2.0 * scene.shape.max_radius();
    let region = graspable_range(&scene.shape, scene.gripper_width)
        .ok()
        .map(|z| {
            let heights = unsafe_heights(&scene.hands, &scene.t, width);
            safe_region(z, &heights, scene.margin + margin_error)
        });
    let (analytic, analytic_chosen) = region.map_or((Vec::new(), None), |r| (r.safe, r.chosen));

    let lo = scene.shape.z_min().floor() as i64;
    let hi = scene.shape.z_max().ceil() as i64;
    let points: Vec<(f64, bool)> = (lo..=hi)
        .map(|k| (k as f64, grid_safe(scene, k as f64)))
        .collect();
    let near_bound = |z: f64| {
        analytic
            .iter()
            .any(|i| (z - i.lo).abs() < BOUNDARY_SLACK || (z - i.hi).abs() < BOUNDARY_SLACK)
    };
    let mismatched_heights: Vec<f64> = points
        .iter()
        .filter(|(z, safe)| *safe != analytic.iter().any(|i| i.contains(*z)) && !near_bound(*z))
        .map(|(z, _)| *z)
        .collect();

    let grid = runs(&points);
    let grid_chosen = longest(&grid);
    let chosen_on_grid = analytic_chosen.and_then(|c| {
        let inside: Vec<f64> = points
            .iter()
            .map(|p| p.0)
            .filter(|z| c.contains(*z))
            .collect();
        Some(Interval::new(*inside.first()?, *inside.last()?))
    });
    let ambiguous =
        analytic.len() == 2 && (analytic[0].length() - analytic[1].length()).abs() <= 1.0;
    let chosen_agrees = chosen_on_grid == grid_chosen || ambiguous;
    OracleDiff {
        analytic,
        analytic_chosen,
        grid,
        grid_chosen,
        mismatched_heights,
        chosen_agrees,
    }
}

/// Random container, pose, gripper and up to two hands clustered at random heights.
pub fn random_scene(rng: &mut impl Rng) -> OracleScene {
    let height: f64 = rng.random_range(30.0..300.0);
    let n = (height / 2.0).floor() as usize + 1;
    let radii: Vec<f64> = (0..n).map(|_| rng.random_range(15.0..50.0)).collect();
    let z0 = -height / 2.0 + rng.random_range(-20.0..20.0);
    let shape = ContainerShape::from_radii(z0, 2.0, &radii).expect("positive spacing");
    let t = Point3::new(
        rng.random_range(-200.0..200.0),
        rng.random_range(300.0..700.0),
        rng.random_range(100.0..400.0),
    );
    let hands = (0..rng.random_range(0..=2))
        .map(|_| {
            let centre = t.z + rng.random_range(shape.z_min() - 30.0..shape.z_max() + 30.0);
            let spread: f64 = rng.random_range(5.0..60.0);
            std::array::from_fn(|_| {
                Point3::new(
                    t.x + rng.random_range(-150.0..150.0),
                    t.y + rng.random_range(-150.0..150.0),
                    centre + rng.random_range(-spread..spread),
                )
            })
        })
        .collect();
    OracleScene {
        shape,
        hands,
        t,
        gripper_width: rng.random_range(10.0..40.0),
        margin: rng.random_range(0.0..40.0),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzSummary {
    pub scenes: usize,
    pub seed: u64,
    /// Index and diff of every failing scene.
    pub failures: Vec<(usize, OracleDiff)>,
}

pub fn fuzz(scenes: usize, seed: u64, margin_error: f64) -> FuzzSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failures = (0..scenes)
        .filter_map(|i| {
            let diff = check_scene(&random_scene(&mut rng), margin_error);
            (!diff.passed()).then_some((i, diff))
        })
        .collect();
    FuzzSummary {
        scenes,
        seed,
        failures,
    }
}

/// One oracle scene per trace frame of a recorded scenario.
pub fn scenario_scenes(scenario: &HandoverScenario) -> Result<Vec<OracleScene>, PerceptionError> {
    let p = &scenario.params;
    let shape_frame = &scenario.frames[scenario.shape_frame];
    let centroid = match shape_frame.centroid_px {
        [Some(a), Some(b)] => triangulate(&scenario.cameras[0], &a, &scenario.cameras[1], &b).ok(),
        _ => None,
    }
    .ok_or(PerceptionError::NoValidFrames)?;
    let shape = lode_reconstruct(&scenario.shape_masks, &scenario.cameras, &centroid, &p.lode)?;
    let track = track_container(&scenario.frames, &scenario.cameras, &p.kalman, &p.robot)?;
    Ok(scenario
        .frames
        .iter()
        .zip(&track.poses)
        .map(|(f, pose)| OracleScene {
            shape: shape.clone(),
            hands: f.hands().copied().collect(),
            t: pose.position,
            gripper_width: p.gripper_width,
            margin: p.margin(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::standard_scenes;

    #[test]
    fn random_scenes_agree() {
        let summary = fuzz(300, 11, 0.0);
        assert!(
            summary.failures.is_empty(),
            "{:?}",
            summary.failures.first()
        );
    }

    #[test]
    fn corrupted_margin_is_caught() {
        let summary = fuzz(200, 11, 5.0);
        assert!(!summary.failures.is_empty());
        let (_, diff) = &summary.failures[0];
        assert!(!diff.mismatched_heights.is_empty() || !diff.chosen_agrees);
    }

    #[test]
    fn fixed_scene_matches_known_pieces() {
        let shape = ContainerShape::from_radii(0.0, 2.0, &[30.0; 101]).unwrap();
        let mut hand = [Point3::new(0.0, 10.0, 80.0); KEYPOINTS];
        hand[1].z = 90.0;
        hand[2].z = 100.0;
        let scene = OracleScene {
            shape,
            hands: vec![hand],
            t: Point3::zeros(),
            gripper_width: 22.0,
            margin: 21.0,
        };
        let d = check_scene(&scene, 0.0);
        assert!(d.passed());
        assert_eq!(
            d.grid,
            vec![Interval::new(11.0, 59.0), Interval::new(121.0, 189.0)]
        );
        assert_eq!(d.grid_chosen, Some(Interval::new(121.0, 189.0)));
    }

    #[test]
    fn fixture_frames_agree() {
        let scenario = standard_scenes()[2].build();
        for scene in scenario_scenes(&scenario).unwrap() {
            assert!(check_scene(&scene, 0.0).passed());
        }
    }
}
