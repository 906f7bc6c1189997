use nalgebra::Matrix3;

use super::hand::{hand_frame, HandFrame, HandSide};
use super::PerceptionError;
use crate::geom::{triangulate, CameraProjection, KalmanNoise, KalmanState, Point3};
use crate::ingest::TraceFrame;
use crate::params::{KalmanParams, RobotParams};

/// Container pose at one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainerPose {
    pub time: f64,
    /// Filtered centroid.
    pub position: Point3,
    /// Orientation copied from the holding hand.
    pub rotation: Matrix3<f64>,
    /// False before the filter has seen its first measurement.
    pub valid: bool,
    /// A triangulated centroid was fused at this step.
    pub measured: bool,
    /// The rotation came from a valid hand frame.
    pub oriented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerTrack {
    /// One pose per trace frame followed by the end-of-recording hold.
    pub poses: Vec<ContainerPose>,
    /// Number of poses backed by trace frames.
    pub trace_len: usize,
    /// Raw triangulated centroid per trace frame.
    pub raw: Vec<Option<Point3>>,
}

impl ContainerTrack {
    pub fn hold_steps(&self) -> usize {
        self.poses.len() - self.trace_len
    }
}

/// Hand whose wrist is closest to `centroid`; ties go to the right hand.
pub fn holding_hand(frame: &TraceFrame, centroid: &Point3) -> Option<(HandSide, HandFrame)> {
    let right = frame
        .right_hand
        .as_ref()
        .map(hand_frame)
        .filter(|h| h.valid);
    let left = frame.left_hand.as_ref().map(hand_frame).filter(|h| h.valid);
    match (right, left) {
        (Some(r), Some(l)) => {
            if (l.wrist() - centroid).norm() < (r.wrist() - centroid).norm() {
                Some((HandSide::Left, l))
            } else {
                Some((HandSide::Right, r))
            }
        }
        (Some(r), None) => Some((HandSide::Right, r)),
        (None, Some(l)) => Some((HandSide::Left, l)),
        (None, None) => None,
    }
}

/// Triangulates and filters the container centroid over the trace, then
/// appends the end-of-recording hold.
pub fn track_container(
    frames: &[TraceFrame],
    cameras: &[CameraProjection; 2],
    kalman: &KalmanParams,
    robot: &RobotParams,
) -> Result<ContainerTrack, PerceptionError> {
    let noise = KalmanNoise {
        q: kalman.q,
        r: kalman.r,
    };
    let raw: Vec<Option<Point3>> = frames
        .iter()
        .map(|f| match f.centroid_px {
            [Some(a), Some(b)] => triangulate(&cameras[0], &a, &cameras[1], &b).ok(),
            _ => None,
        })
        .collect();
    let first = raw
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or(PerceptionError::NoValidFrames)?;

    let mut state: Option<KalmanState> = None;
    let mut prev_time = frames[0].timestamp;
    let mut poses = Vec::with_capacity(frames.len());
    for (frame, meas) in frames.iter().zip(&raw) {
        let dt = frame.timestamp - prev_time;
        prev_time = frame.timestamp;
        state = match (state.take(), meas) {
            (None, Some(m)) => Some(KalmanState::at(*m, kalman.r, kalman.initial_velocity_var)),
            (None, None) => None,
            (Some(s), Some(m)) if dt > 0.0 => Some(
                s.step(m, dt, noise)
                    .unwrap_or_else(|_| s.predict(dt, kalman.q)),
            ),
            (Some(s), _) if dt > 0.0 => Some(s.predict(dt, kalman.q)),
            (Some(s), _) => Some(s),
        };
        poses.push(ContainerPose {
            time: frame.timestamp,
            position: state.as_ref().map_or(first, |s| s.position),
            rotation: Matrix3::identity(),
            valid: state.is_some(),
            measured: meas.is_some(),
            oriented: false,
        });
    }

    // Orientation: holding hand at each frame, else the nearest frame that has one.
    let held: Vec<Option<Matrix3<f64>>> = frames
        .iter()
        .zip(&poses)
        .map(|(f, p)| holding_hand(f, &p.position).map(|(_, h)| h.rotation()))
        .collect();
    let with_hand: Vec<usize> = (0..held.len()).filter(|&i| held[i].is_some()).collect();
    if !with_hand.is_empty() {
        for (i, pose) in poses.iter_mut().enumerate() {
            let pos = with_hand.partition_point(|&j| j < i);
            let nearest = match (
                pos.checked_sub(1).map(|p| with_hand[p]),
                with_hand.get(pos).copied(),
            ) {
                (Some(a), Some(b)) => {
                    if i - a <= b - i {
                        a
                    } else {
                        b
                    }
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!(),
            };
            pose.rotation = held[nearest].expect("indexed frames carry a hand");
            pose.oriented = true;
        }
    }

    let trace_len = poses.len();
    let last = poses.last().cloned().expect("at least one frame");
    let hold = (robot.hold_time / robot.dt).round() as usize;
    for k in 1..=hold {
        poses.push(ContainerPose {
            time: last.time + k as f64 * robot.dt,
            measured: false,
            ..last.clone()
        });
    }
    Ok(ContainerTrack {
        poses,
        trace_len,
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pixel;
    use crate::perception::KEYPOINTS;

    fn cameras() -> [CameraProjection; 2] {
        let target = Point3::new(0.0, 450.0, 250.0);
        [
            CameraProjection::look_at(
                Point3::new(0.0, 1200.0, 300.0),
                target,
                Point3::z(),
                600.0,
                640,
                480,
            )
            .unwrap(),
            CameraProjection::look_at(
                Point3::new(750.0, 450.0, 300.0),
                target,
                Point3::z(),
                600.0,
                640,
                480,
            )
            .unwrap(),
        ]
    }

    fn frame_at(i: usize, p: Option<Point3>, cams: &[CameraProjection; 2]) -> TraceFrame {
        TraceFrame {
            frame_index: i as u64,
            timestamp: i as f64 / 30.0,
            left_hand: None,
            right_hand: None,
            centroid_px: match p {
                Some(p) => [
                    Some(cams[0].project(&p).unwrap()),
                    Some(cams[1].project(&p).unwrap()),
                ],
                None => [None, None],
            },
        }
    }

    #[test]
    fn circular_motion_tracks_within_two_millimetres() {
        let cams = cameras();
        let centre = Point3::new(0.0, 450.0, 250.0);
        let truth: Vec<Point3> = (0..300)
            .map(|i| {
                // Centripetal acceleration 15 mm/s²; the filter lag grows with it.
                let a = i as f64 / 30.0 * 0.5;
                centre + Point3::new(60.0 * a.cos(), 60.0 * a.sin(), 0.0)
            })
            .collect();
        let frames: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| frame_at(i, Some(*p), &cams))
            .collect();
        let track = track_container(
            &frames,
            &cams,
            &KalmanParams::default(),
            &RobotParams::default(),
        )
        .unwrap();
        let se: f64 = track.poses[..truth.len()]
            .iter()
            .zip(&truth)
            .map(|(p, t)| (p.position - t).norm_squared())
            .sum();
        let rmse = (se / truth.len() as f64).sqrt();
        assert!(rmse < 2.0, "rmse {rmse}");
    }

    #[test]
    fn gap_is_bridged_by_prediction() {
        let cams = cameras();
        let start = Point3::new(-100.0, 450.0, 250.0);
        let v = Point3::new(90.0, 0.0, 15.0);
        let frames: Vec<_> = (0..80)
            .map(|i| {
                let p = start + v * (i as f64 / 30.0);
                let mut f = frame_at(i, Some(p), &cams);
                if (40..50).contains(&i) {
                    f.centroid_px[1] = None;
                }
                f
            })
            .collect();
        let kp = KalmanParams::default();
        let track = track_container(&frames, &cams, &kp, &RobotParams::default()).unwrap();
        assert!(track.poses[40..50].iter().all(|p| !p.measured && p.valid));
        let sigma = kp.r.sqrt();
        for w in track.poses[..80].windows(2) {
            let jump = (w[1].position - w[0].position).norm();
            assert!(jump <= v.norm() / 30.0 + 3.0 * sigma, "jump {jump}");
        }
    }

    #[test]
    fn single_frame_gets_two_second_hold() {
        let cams = cameras();
        let p = Point3::new(0.0, 450.0, 250.0);
        let track = track_container(
            &[frame_at(0, Some(p), &cams)],
            &cams,
            &KalmanParams::default(),
            &RobotParams::default(),
        )
        .unwrap();
        assert_eq!(track.trace_len, 1);
        assert_eq!(track.hold_steps(), 60);
        assert!(track.poses.iter().all(|q| (q.position - p).norm() < 1e-6));
        assert!((track.poses.last().unwrap().time - 2.0).abs() < 1e-9);
    }

    #[test]
    fn no_centroid_anywhere() {
        let cams = cameras();
        let frames = vec![frame_at(0, None, &cams), frame_at(1, None, &cams)];
        assert_eq!(
            track_container(
                &frames,
                &cams,
                &KalmanParams::default(),
                &RobotParams::default()
            ),
            Err(PerceptionError::NoValidFrames)
        );
    }

    #[test]
    fn orientation_follows_nearest_hand() {
        let cams = cameras();
        let p = Point3::new(0.0, 450.0, 250.0);
        let mut frames: Vec<_> = (0..5).map(|i| frame_at(i, Some(p), &cams)).collect();
        // Hand rotated 90° about z: direction -x.
        let mut kp = [Point3::new(0.0, 0.0, 0.0); KEYPOINTS];
        kp[crate::perception::MIDDLE_MCP] = Point3::new(-100.0, 0.0, 0.0);
        kp[crate::perception::INDEX_MCP] = Point3::new(-80.0, 30.0, 0.0);
        kp[crate::perception::PINKY_MCP] = Point3::new(-80.0, -30.0, 0.0);
        let kp = kp.map(|q| q + p + Point3::new(60.0, 0.0, 0.0));
        frames[3].right_hand = Some(kp);
        let track = track_container(
            &frames,
            &cams,
            &KalmanParams::default(),
            &RobotParams::default(),
        )
        .unwrap();
        for pose in &track.poses {
            assert!(pose.oriented);
            assert!((pose.rotation.column(1) - Point3::new(-1.0, 0.0, 0.0)).norm() < 1e-9);
            let r = pose.rotation;
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-6);
        }
    }

    #[test]
    fn holding_hand_prefers_closest_wrist_then_right() {
        let mut kp = [Point3::zeros(); KEYPOINTS];
        kp[crate::perception::MIDDLE_MCP] = Point3::new(0.0, 100.0, 0.0);
        kp[crate::perception::INDEX_MCP] = Point3::new(30.0, 80.0, 0.0);
        kp[crate::perception::PINKY_MCP] = Point3::new(-30.0, 80.0, 0.0);
        let near = kp.map(|q| q + Point3::new(10.0, 0.0, 0.0));
        let far = kp.map(|q| q + Point3::new(50.0, 0.0, 0.0));
        let mut f = TraceFrame {
            frame_index: 0,
            timestamp: 0.0,
            left_hand: Some(near),
            right_hand: Some(far),
            centroid_px: [Some(Pixel::zeros()), Some(Pixel::zeros())],
        };
        assert_eq!(
            holding_hand(&f, &Point3::zeros()).unwrap().0,
            HandSide::Left
        );
        f.right_hand = Some(near);
        assert_eq!(
            holding_hand(&f, &Point3::zeros()).unwrap().0,
            HandSide::Right
        );
        f.left_hand = None;
        f.right_hand = None;
        assert!(holding_hand(&f, &Point3::zeros()).is_none());
    }
}
