use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geom::Point3;

/// Keypoints per hand.
pub const KEYPOINTS: usize = 21;
pub const WRIST: usize = 0;
pub const INDEX_MCP: usize = 5;
pub const MIDDLE_MCP: usize = 9;
pub const PINKY_MCP: usize = 17;

/// Defining vectors shorter than this make the frame invalid (mm).
const MIN_AXIS_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandSide {
    Left,
    Right,
}

/// Rigid approximation of a hand: the keypoints plus an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame {
    pub keypoints: [Point3; KEYPOINTS],
    /// Wrist toward the middle-finger knuckle.
    pub direction: Point3,
    pub up: Point3,
    pub right: Point3,
    pub valid: bool,
}

impl HandFrame {
    pub fn wrist(&self) -> Point3 {
        self.keypoints[WRIST]
    }

    /// Rotation with columns `[right, direction, up]`.
    pub fn rotation(&self) -> Matrix3<f64> {
        if self.valid {
            Matrix3::from_columns(&[self.right, self.direction, self.up])
        } else {
            Matrix3::identity()
        }
    }
}

pub fn hand_frame(keypoints: &[Point3; KEYPOINTS]) -> HandFrame {
    let invalid = || HandFrame {
        keypoints: *keypoints,
        direction: Point3::zeros(),
        up: Point3::zeros(),
        right: Point3::zeros(),
        valid: false,
    };
    if keypoints.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return invalid();
    }
    let along = keypoints[MIDDLE_MCP] - keypoints[WRIST];
    let lateral = keypoints[INDEX_MCP] - keypoints[PINKY_MCP];
    if along.norm() < MIN_AXIS_NORM || lateral.norm() < MIN_AXIS_NORM {
        return invalid();
    }
    let direction = along.normalize();
    let up = lateral.cross(&direction);
    // Knuckle line parallel to the palm axis leaves no usable normal.
    if up.norm() < 1e-9 * lateral.norm() {
        return invalid();
    }
    let up = up.normalize();
    let right = direction.cross(&up);
    HandFrame {
        keypoints: *keypoints,
        direction,
        up,
        right,
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    fn canonical() -> [Point3; KEYPOINTS] {
        let mut kp = [Point3::zeros(); KEYPOINTS];
        for (i, p) in kp.iter_mut().enumerate() {
            *p = Point3::new(
                (i as f64 - 10.0) * 3.0,
                40.0 + i as f64 * 4.0,
                (i % 3) as f64,
            );
        }
        kp[WRIST] = Point3::zeros();
        kp[MIDDLE_MCP] = Point3::new(0.0, 100.0, 0.0);
        kp[INDEX_MCP] = Point3::new(30.0, 80.0, 0.0);
        kp[PINKY_MCP] = Point3::new(-30.0, 80.0, 0.0);
        kp
    }

    #[test]
    fn canonical_flat_hand_axes() {
        let f = hand_frame(&canonical());
        assert!(f.valid);
        assert_eq!(f.direction, Point3::new(0.0, 1.0, 0.0));
        assert_eq!(f.up, Point3::new(0.0, 0.0, 1.0));
        assert_eq!(f.right, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(f.rotation(), Matrix3::identity());
    }

    #[test]
    fn coincident_keypoints_are_invalid() {
        let f = hand_frame(&[Point3::new(5.0, 5.0, 5.0); KEYPOINTS]);
        assert!(!f.valid);
        assert_eq!(f.rotation(), Matrix3::identity());
    }

    #[test]
    fn parallel_knuckles_are_invalid() {
        let mut kp = canonical();
        kp[INDEX_MCP] = Point3::new(0.0, 90.0, 0.0);
        kp[PINKY_MCP] = Point3::new(0.0, 20.0, 0.0);
        assert!(!hand_frame(&kp).valid);
    }

    proptest! {
        #[test]
        fn frame_is_orthonormal_and_rotation_equivariant(
            axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            angle in -3.1f64..3.1,
            shift in (-500.0f64..500.0, -500.0f64..500.0, -500.0f64..500.0),
        ) {
            let axis = Vector3::new(axis.0, axis.1, axis.2);
            prop_assume!(axis.norm() > 1e-3);
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let t = Vector3::new(shift.0, shift.1, shift.2);
            let base = hand_frame(&canonical());
            let moved = hand_frame(&canonical().map(|p| rot * p + t));
            prop_assert!(moved.valid);
            prop_assert!((moved.direction - rot * base.direction).norm() < 1e-9);
            prop_assert!((moved.up - rot * base.up).norm() < 1e-9);
            prop_assert!((moved.right - rot * base.right).norm() < 1e-9);
            let r = moved.rotation();
            prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-6);
        }
    }
}
