//! Safe grasp region away from the human hand, grasp target, and the grip
//! force the gripper must apply.

pub mod oracle;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point3;
use crate::params::GripModel;
use crate::perception::{ContainerShape, HandFrame, KEYPOINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraspError {
    #[error("container height {height} mm does not exceed the gripper width {gripper_width} mm")]
    TooShort { height: f64, gripper_width: f64 },
}

/// Closed height interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.lo && z <= self.hi
    }
}

/// Heights where the gripper jaws fit entirely on the container.
pub fn graspable_range(shape: &ContainerShape, gripper_width: f64) -> Result<Interval, GraspError> {
    if shape.height() <= gripper_width {
        return Err(GraspError::TooShort {
            height: shape.height(),
            gripper_width,
        });
    }
    Ok(Interval::new(
        shape.z_min() + gripper_width / 2.0,
        shape.z_max() - gripper_width / 2.0,
    ))
}

/// Heights, relative to `t.z`, of the keypoints in front of or beside the
/// container of width `width` centred at `t`.
pub fn unsafe_heights<'a>(
    hands: impl IntoIterator<Item = &'a [Point3; KEYPOINTS]>,
    t: &Point3,
    width: f64,
) -> Vec<f64> {
    hands
        .into_iter()
        .flatten()
        .filter(|h| h.y > t.y - width / 2.0 && (h.x - t.x).abs() < width)
        .map(|h| h.z - t.z)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeRegion {
    pub graspable: Interval,
    pub unsafe_heights: Vec<f64>,
    /// Sorted, disjoint.
    pub safe: Vec<Interval>,
    pub chosen: Option<Interval>,
}

/// Heights of `graspable` at least `margin` below every unsafe height or at
/// least `margin` above all of them. The longest piece is chosen, ties
/// going to the higher one.
pub fn safe_region(graspable: Interval, unsafe_heights: &[f64], margin: f64) -> SafeRegion {
    let safe = if unsafe_heights.is_empty() {
        vec![graspable]
    } else {
        let lowest = unsafe_heights.iter().copied().fold(f64::INFINITY, f64::min);
        let highest = unsafe_heights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let below = Interval::new(graspable.lo, graspable.hi.min(lowest - margin));
        let above = Interval::new(graspable.lo.max(highest + margin), graspable.hi);
        let mut pieces: Vec<Interval> = [below, above]
            .into_iter()
            .filter(|i| i.lo <= i.hi)
            .collect();
        if pieces.len() == 2 && pieces[1].lo <= pieces[0].hi {
            pieces = vec![Interval::new(pieces[0].lo, pieces[1].hi)];
        }
        pieces
    };
    let chosen = safe
        .iter()
        .copied()
        .reduce(|best, i| if i.length() >= best.length() { i } else { best });
    SafeRegion {
        graspable,
        unsafe_heights: unsafe_heights.to_vec(),
        safe,
        chosen,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPlan {
    pub feasible: bool,
    /// World grasp point on the container axis.
    pub target: Option<Point3>,
    /// Grasp height relative to the container centroid.
    pub height: Option<f64>,
    /// Container diameter at the grasp height.
    pub gripper_width: f64,
    /// Columns: closing axis, approach direction, world up.
    pub orientation: Matrix3<f64>,
}

impl GraspPlan {
    pub fn approach(&self) -> Point3 {
        self.orientation.column(1).into_owned()
    }

    pub fn closing_axis(&self) -> Point3 {
        self.orientation.column(0).into_owned()
    }
}

/// Horizontal approach from the robot side, facing the hand's heading.
pub fn approach_orientation(hand: Option<&HandFrame>) -> Matrix3<f64> {
    let heading = hand
        .filter(|h| h.valid)
        .map(|h| Point3::new(-h.direction.x, -h.direction.y, 0.0))
        .filter(|d| d.norm() > 1e-6)
        .map(|d| d.normalize())
        .map(|d| if d.y < 0.0 { -d } else { d })
        .unwrap_or_else(Point3::y);
    let up = Point3::z();
    let closing = heading.cross(&up);
    Matrix3::from_columns(&[closing, heading, up])
}

/// Grasp point in the middle of the chosen safe interval, on the axis through `t`.
pub fn plan_grasp(
    region: &SafeRegion,
    shape: &ContainerShape,
    t: &Point3,
    hand: Option<&HandFrame>,
) -> GraspPlan {
    let orientation = approach_orientation(hand);
    match region.chosen {
        Some(chosen) => {
            let g_z = chosen.mid();
            GraspPlan {
                feasible: true,
                target: Some(Point3::new(t.x, t.y, t.z + g_z)),
                height: Some(g_z),
                gripper_width: 2.0 * shape.radius_at(g_z),
                orientation,
            }
        }
        None => GraspPlan {
            feasible: false,
            target: None,
            height: None,
            gripper_width: 0.0,
            orientation,
        },
    }
}

/// Normal force (N) that holds `mass_g` against gravity plus the peak
/// transport acceleration.
pub fn required_force(mass_g: f64, model: &GripModel) -> f64 {
    mass_g / 1000.0 * (model.gravity + model.a_max) / model.mu
}

pub fn force_for_effort(effort: f64, model: &GripModel) -> f64 {
    model.a * effort + model.b
}

/// Joint effort for a force, before and after clamping to the calibrated range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortCommand {
    pub raw: f64,
    pub issued: f64,
    pub clamped: bool,
}

/// Efforts within rounding of the range bounds count as in range.
const EFFORT_TOLERANCE: f64 = 1e-12;

pub fn effort_for_force(force: f64, model: &GripModel) -> EffortCommand {
    let raw = (force - model.b) / model.a;
    let issued = if raw < model.effort_min - EFFORT_TOLERANCE {
        model.effort_min
    } else if raw > model.effort_max + EFFORT_TOLERANCE {
        model.effort_max
    } else {
        raw
    };
    EffortCommand {
        raw,
        issued,
        clamped: issued != raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::hand_frame;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn shape(z0: f64, z1: f64) -> ContainerShape {
        let n = ((z1 - z0) / 2.0).round() as usize;
        ContainerShape::from_radii(z0, (z1 - z0) / n as f64, &vec![30.0; n + 1]).unwrap()
    }

    #[test]
    fn graspable_examples() {
        assert_eq!(
            graspable_range(&shape(0.0, 200.0), 22.0).unwrap(),
            Interval::new(11.0, 189.0)
        );
        assert!(matches!(
            graspable_range(&shape(0.0, 22.0), 22.0),
            Err(GraspError::TooShort { .. })
        ));
        assert_eq!(
            graspable_range(&shape(-50.0, 50.0), 0.0).unwrap(),
            Interval::new(-50.0, 50.0)
        );
    }

    #[test]
    fn unsafe_height_predicate() {
        let t = Point3::new(10.0, 400.0, 0.0);
        let mut hand = [Point3::new(10.0, 400.0 - 100.0, 50.0); KEYPOINTS];
        hand[3] = Point3::new(t.x + 30.0, t.y - 20.0, 85.0);
        assert_eq!(unsafe_heights([&hand], &t, 80.0), vec![85.0]);
        assert!(unsafe_heights(std::iter::empty(), &t, 80.0).is_empty());
        // Heights are reported relative to the container centroid.
        let lifted = Point3::new(t.x, t.y, 30.0);
        assert_eq!(unsafe_heights([&hand], &lifted, 80.0), vec![55.0]);
    }

    #[test]
    fn two_disjoint_pieces_take_the_longer() {
        let r = safe_region(Interval::new(11.0, 189.0), &[80.0, 90.0, 100.0], 21.0);
        assert_eq!(
            r.safe,
            vec![Interval::new(11.0, 59.0), Interval::new(121.0, 189.0)]
        );
        assert_eq!(r.chosen, Some(Interval::new(121.0, 189.0)));
        let plan = plan_grasp(&r, &shape(0.0, 200.0), &Point3::new(0.0, 450.0, 0.0), None);
        assert_eq!(plan.height, Some(155.0));
        assert_abs_diff_eq!(plan.gripper_width, 60.0, epsilon = 1e-12);
        assert_eq!(plan.target, Some(Point3::new(0.0, 450.0, 155.0)));
    }

    #[test]
    fn no_hands_keeps_whole_range() {
        let z = Interval::new(11.0, 189.0);
        let r = safe_region(z, &[], 21.0);
        assert_eq!(r.safe, vec![z]);
        assert_eq!(r.chosen, Some(z));
    }

    #[test]
    fn covering_hand_leaves_nothing() {
        let r = safe_region(Interval::new(11.0, 89.0), &[2.0, 50.0, 98.0], 21.0);
        assert!(r.safe.is_empty());
        assert_eq!(r.chosen, None);
        let plan = plan_grasp(&r, &shape(0.0, 100.0), &Point3::zeros(), None);
        assert!(!plan.feasible);
        assert!(plan.target.is_none());
    }

    #[test]
    fn equal_pieces_prefer_the_higher() {
        let r = safe_region(Interval::new(0.0, 100.0), &[50.0], 10.0);
        assert_eq!(r.chosen, Some(Interval::new(60.0, 100.0)));
    }

    #[test]
    fn approach_faces_hand_and_stays_level() {
        let mut kp = [Point3::zeros(); KEYPOINTS];
        // Fingers point from the human toward the robot and slightly down.
        kp[crate::perception::MIDDLE_MCP] = Point3::new(30.0, -100.0, -20.0);
        kp[crate::perception::INDEX_MCP] = Point3::new(20.0, -80.0, 20.0);
        kp[crate::perception::PINKY_MCP] = Point3::new(20.0, -80.0, -40.0);
        let h = hand_frame(&kp);
        let rot = approach_orientation(Some(&h));
        let approach = rot.column(1);
        assert!(approach.y > 0.0);
        assert_abs_diff_eq!(approach.z, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rot.column(0).z, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rot.determinant(), 1.0, epsilon = 1e-12);
        assert_eq!(
            approach_orientation(None).column(1).into_owned(),
            Point3::y()
        );
    }

    #[test]
    fn force_examples() {
        let m = GripModel::default();
        assert_eq!(required_force(0.0, &m), 0.0);
        assert_abs_diff_eq!(required_force(100.0, &m), 3.771, epsilon = 1e-9);
        assert_abs_diff_eq!(required_force(500.0, &m), 18.855, epsilon = 1e-9);
        let zero = effort_for_force(0.045, &m);
        assert_abs_diff_eq!(zero.raw, 0.0, epsilon = 1e-15);
        assert!(zero.clamped);
        assert_eq!(zero.issued, m.effort_min);
        let e = effort_for_force(3.771, &m);
        assert_abs_diff_eq!(e.raw, 0.14699, epsilon = 1e-5);
        assert!(!e.clamped);
        assert_abs_diff_eq!(force_for_effort(1.25, &m), 31.7325, epsilon = 1e-12);
        assert!(effort_for_force(40.0, &m).clamped);
    }

    proptest! {
        #[test]
        fn chosen_heights_respect_margin_and_ends(
            lo in -200.0f64..0.0, len in 23.0f64..300.0,
            heights in proptest::collection::vec(-250.0f64..350.0, 0..12),
            margin in 0.0f64..40.0, z in 0.0f64..1.0,
        ) {
            let s = shape(lo, lo + len);
            let g = graspable_range(&s, 22.0).unwrap();
            let r = safe_region(g, &heights, margin);
            for w in r.safe.windows(2) {
                prop_assert!(w[0].hi < w[1].lo);
            }
            if let Some(c) = r.chosen {
                let zz = c.lo + z * c.length();
                prop_assert!(zz >= s.z_min() + 11.0 - 1e-9 && zz <= s.z_max() - 11.0 + 1e-9);
                for h in &heights {
                    prop_assert!((zz - h).abs() >= margin - 1e-9);
                }
            }
        }

        #[test]
        fn extra_keypoint_never_enlarges_safe_set(
            heights in proptest::collection::vec(0.0f64..200.0, 0..8),
            extra in -50.0f64..250.0, margin in 0.0f64..40.0,
        ) {
            let g = Interval::new(11.0, 189.0);
            let before = safe_region(g, &heights, margin);
            let mut more = heights.clone();
            more.push(extra);
            let after = safe_region(g, &more, margin);
            for i in &after.safe {
                prop_assert!(before.safe.iter().any(|b| b.lo <= i.lo && i.hi <= b.hi));
            }
        }

        #[test]
        fn force_is_linear_in_mass(m1 in 0.0f64..2000.0, m2 in 0.0f64..2000.0) {
            let gm = GripModel::default();
            prop_assert!((required_force(m1 + m2, &gm) - required_force(m1, &gm) - required_force(m2, &gm)).abs() < 1e-9);
        }

        #[test]
        fn effort_round_trip(e in 0.01f64..=1.25) {
            let gm = GripModel::default();
            let back = effort_for_force(force_for_effort(e, &gm), &gm);
            prop_assert!((back.raw - e).abs() <= 1e-12);
            prop_assert!(!back.clamped);
        }
    }
}
