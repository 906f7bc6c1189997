//! Scripted scenes: rendered silhouettes, synthetic hands and complete
//! scenario bundles with known ground truth.

use nalgebra::Rotation3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{CameraProjection, Pixel, Point3};
use crate::ingest::{GroundTruth, HandoverScenario, SilhouetteMask, TraceFrame};
use crate::params::ParameterSet;
use crate::perception::{ClassProbs, ContentClass, HandSide, KEYPOINTS};
use crate::sim::predicted_mass;

/// Radius as a piecewise-linear function of height above the base.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    knots: Vec<(f64, f64)>,
}

impl Profile {
    /// `knots` are `(height, radius)` pairs with increasing heights starting at 0.
    pub fn new(knots: Vec<(f64, f64)>) -> Self {
        assert!(
            knots.len() >= 2 && knots[0].0 == 0.0,
            "profile starts at the base"
        );
        assert!(
            knots.windows(2).all(|w| w[1].0 > w[0].0),
            "heights increase"
        );
        Self { knots }
    }

    pub fn cylinder(radius: f64, height: f64) -> Self {
        Self::new(vec![(0.0, radius), (height, radius)])
    }

    pub fn cone(base_radius: f64, top_radius: f64, height: f64) -> Self {
        Self::new(vec![(0.0, base_radius), (height, top_radius)])
    }

    pub fn height(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    pub fn max_radius(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }

    /// Zero outside `[0, height]`.
    pub fn radius_at(&self, h: f64) -> f64 {
        if h < 0.0 || h > self.height() {
            return 0.0;
        }
        let i = self
            .knots
            .partition_point(|k| k.0 <= h)
            .clamp(1, self.knots.len() - 1);
        let (a, b) = (self.knots[i - 1], self.knots[i]);
        a.1 + (b.1 - a.1) * (h - a.0) / (b.0 - a.0)
    }

    /// Exact volume of the solid of revolution (mL).
    pub fn volume_ml(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| {
                let (h, r0, r1) = (w[1].0 - w[0].0, w[0].1, w[1].1);
                std::f64::consts::PI * h * (r0 * r0 + r0 * r1 + r1 * r1) / 3.0
            })
            .sum::<f64>()
            / 1000.0
    }
}

/// Two cameras 2 m from `target`, one on the human side looking toward
/// the robot and one on the +x side, both level with the target.
pub fn orthogonal_cameras(target: Point3) -> [CameraProjection; 2] {
    let up = Point3::z();
    let make = |offset: Point3| {
        CameraProjection::look_at(target + offset, target, up, 1850.0, 640, 480)
            .expect("valid synthetic camera")
    };
    [
        make(Point3::new(0.0, 2000.0, 0.0)),
        make(Point3::new(2000.0, 0.0, 0.0)),
    ]
}

/// Rasterises the solid of revolution standing on `base` by marching each
/// pixel's ray through the bounding cylinder.
pub fn render_silhouette(
    cam: &CameraProjection,
    base: &Point3,
    profile: &Profile,
) -> SilhouetteMask {
    let (w, h) = (cam.width(), cam.height());
    let big_r = profile.max_radius();
    let height = profile.height();
    let mut lo = Pixel::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Pixel::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for dz in [0.0, height] {
        for (dx, dy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            if let Ok(p) = cam.project(&(base + Point3::new(dx * big_r, dy * big_r, dz))) {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
    }
    let x0 = lo.x.floor().max(0.0) as u32;
    let y0 = lo.y.floor().max(0.0) as u32;
    let x1 = (hi.x.ceil().max(0.0) as u32).min(w);
    let y1 = (hi.y.ceil().max(0.0) as u32).min(h);
    let origin = cam.centre();
    let rel = origin - base;
    SilhouetteMask::from_fn(w, h, |x, y| {
        if x < x0 || x >= x1 || y < y0 || y >= y1 {
            return false;
        }
        let d = cam.back_project(&Pixel::new(x as f64 + 0.5, y as f64 + 0.5));
        let a = d.x * d.x + d.y * d.y;
        let b = 2.0 * (d.x * rel.x + d.y * rel.y);
        let c = rel.x * rel.x + rel.y * rel.y - big_r * big_r;
        let (mut s0, mut s1) = if a < 1e-12 {
            if c > 0.0 {
                return false;
            }
            (0.0, f64::INFINITY)
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return false;
            }
            let sq = disc.sqrt();
            ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))
        };
        if d.z.abs() > 1e-12 {
            let (za, zb) = ((0.0 - rel.z) / d.z, (height - rel.z) / d.z);
            s0 = s0.max(za.min(zb));
            s1 = s1.min(za.max(zb));
        } else if rel.z < 0.0 || rel.z > height {
            return false;
        }
        s0 = s0.max(0.0);
        if !s1.is_finite() || s1 < s0 {
            return false;
        }
        let n = ((s1 - s0) / 0.05).ceil() as usize + 1;
        (0..=n).any(|i| {
            let s = s0 + (s1 - s0) * i as f64 / n as f64;
            let p = rel + d * s;
            (p.x * p.x + p.y * p.y).sqrt() <= profile.radius_at(p.z)
        })
    })
}

/// Keypoints of a hand wrapped around the back of a container.
///
/// The palm sits on the far side from the robot (`+y`), fingers curl toward
/// `+x` for the right hand and `-x` for the left, and every keypoint lies
/// between heights `z_lo` and `z_hi`.
pub fn wrapping_hand(
    axis: Point3,
    radius: f64,
    z_lo: f64,
    z_hi: f64,
    side: HandSide,
) -> [Point3; KEYPOINTS] {
    let s = match side {
        HandSide::Right => 1.0,
        HandSide::Left => -1.0,
    };
    let z_mid = 0.5 * (z_lo + z_hi);
    let around = |angle_deg: f64, gap: f64, z: f64| {
        let a = angle_deg.to_radians();
        Point3::new(
            axis.x + (radius + gap) * a.cos(),
            axis.y + (radius + gap) * a.sin(),
            z,
        )
    };
    let mut kp = [Point3::zeros(); KEYPOINTS];
    kp[0] = Point3::new(axis.x + s * 20.0, axis.y + radius + 70.0, z_mid);
    // Thumb wraps the opposite side at the top.
    for j in 0..4 {
        kp[1 + j] = around(
            90.0 + s * (25.0 + 20.0 * j as f64),
            14.0 - 2.0 * j as f64,
            z_hi,
        );
    }
    // Index, middle, ring, pinky from top to bottom.
    for f in 0..4 {
        let z = z_hi - (z_hi - z_lo) * f as f64 / 3.0;
        let x_shift = s * (10.0 - 6.0 * f as f64);
        for j in 0..4 {
            let mut p = around(90.0 - s * (8.0 + 22.0 * j as f64), 14.0 - 3.0 * j as f64, z);
            if j == 0 {
                p = Point3::new(axis.x + x_shift, axis.y + radius + 18.0, z);
            }
            kp[5 + 4 * f + j] = p;
        }
    }
    kp
}

/// Container centroid path over the trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    Static(Point3),
    /// Straight line covered over the whole trace.
    Linear {
        from: Point3,
        to: Point3,
    },
    /// Horizontal circle at `omega` rad/s.
    Circle {
        centre: Point3,
        radius: f64,
        omega: f64,
    },
}

impl Motion {
    fn at(&self, t: f64, duration: f64) -> Point3 {
        match self {
            Motion::Static(p) => *p,
            Motion::Linear { from, to } => {
                let u = if duration > 0.0 {
                    (t / duration).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                from + (to - from) * u
            }
            Motion::Circle {
                centre,
                radius,
                omega,
            } => centre + Point3::new(radius * (omega * t).cos(), radius * (omega * t).sin(), 0.0),
        }
    }
}

/// How the human holds the container.
#[derive(Debug, Clone, PartialEq)]
pub enum Grip {
    /// No hand in view.
    None,
    /// One hand wrapping heights `[lo, hi]` measured from the container base.
    Wrap { lo: f64, hi: f64, side: HandSide },
}

/// Builder for a complete scripted scenario.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    pub id: String,
    pub container: String,
    pub profile: Profile,
    pub motion: Motion,
    pub frames: usize,
    pub fps: f64,
    pub grip: Grip,
    /// Hands are never reported even though one holds the container.
    pub hand_detection_failure: bool,
    pub truth: GroundTruth,
    /// Class the content estimator reports, with its per-view confidence.
    pub estimate: ContentClass,
    pub confidence: f64,
    /// Standard deviation of the centroid pixel noise.
    pub pixel_noise: f64,
    pub seed: u64,
    pub delivery_target: Point3,
    pub params: ParameterSet,
    /// Scripts the true capacity so that predicted over true mass equals
    /// this ratio. Needs a filled container.
    pub mass_ratio: Option<f64>,
}

impl SceneBuilder {
    /// A 60 mm × 100 mm cylinder held still in front of the robot, grasped
    /// from the bottom, estimated as empty.
    pub fn new(id: &str) -> Self {
        let profile = Profile::cylinder(30.0, 100.0);
        let volume = profile.volume_ml();
        Self {
            id: id.to_string(),
            container: "C1".to_string(),
            profile,
            motion: Motion::Static(Point3::new(0.0, 450.0, 250.0)),
            frames: 45,
            fps: 30.0,
            grip: Grip::Wrap {
                lo: -15.0,
                hi: 12.0,
                side: HandSide::Right,
            },
            hand_detection_failure: false,
            truth: GroundTruth::empty(20.0, volume),
            estimate: ContentClass::Empty,
            confidence: 0.9,
            pixel_noise: 0.0,
            seed: 0,
            delivery_target: Point3::new(0.0, -400.0, 0.0),
            params: ParameterSet::default(),
            mass_ratio: None,
        }
    }

    pub fn mass_ratio(mut self, ratio: f64) -> Self {
        self.mass_ratio = Some(ratio);
        self
    }

    pub fn container(mut self, label: &str, profile: Profile) -> Self {
        self.container = label.to_string();
        self.truth.capacity = profile.volume_ml();
        self.profile = profile;
        self
    }

    pub fn motion(mut self, motion: Motion) -> Self {
        self.motion = motion;
        self
    }

    pub fn grip(mut self, grip: Grip) -> Self {
        self.grip = grip;
        self
    }

    /// Fills the container with `class` and has the estimator report `estimate`.
    pub fn filling(mut self, class: ContentClass, estimate: ContentClass) -> Self {
        let (kind, level) = class.filling();
        self.truth.content_type = kind;
        self.truth.content_level = level;
        self.estimate = estimate;
        self
    }

    pub fn frames(mut self, n: usize) -> Self {
        self.frames = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn build(&self) -> HandoverScenario {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.pixel_noise.max(0.0)).expect("finite noise");
        let h = self.profile.height();
        let duration = (self.frames.max(1) - 1) as f64 / self.fps;
        let nominal = self.motion.at(0.0, duration);
        let cameras = orthogonal_cameras(nominal);
        let radius = self.profile.max_radius();
        let frames: Vec<TraceFrame> = (0..self.frames.max(1))
            .map(|i| {
                let t = i as f64 / self.fps;
                let centroid = self.motion.at(t, duration);
                let base = centroid - Point3::new(0.0, 0.0, h / 2.0);
                let hand = match (&self.grip, self.hand_detection_failure) {
                    (Grip::Wrap { lo, hi, side }, false) => Some((
                        *side,
                        wrapping_hand(base, radius, base.z + lo, base.z + hi, *side),
                    )),
                    _ => None,
                };
                let mut px = [None, None];
                for (v, cam) in cameras.iter().enumerate() {
                    px[v] = cam.project(&centroid).ok().map(|p| {
                        if self.pixel_noise > 0.0 {
                            p + Pixel::new(noise.sample(&mut rng), noise.sample(&mut rng))
                        } else {
                            p
                        }
                    });
                }
                TraceFrame {
                    frame_index: i as u64,
                    timestamp: t,
                    left_hand: hand.filter(|(s, _)| *s == HandSide::Left).map(|(_, k)| k),
                    right_hand: hand.filter(|(s, _)| *s == HandSide::Right).map(|(_, k)| k),
                    centroid_px: px,
                }
            })
            .collect();
        let shape_base = nominal - Point3::new(0.0, 0.0, h / 2.0);
        let shape_masks = [
            render_silhouette(&cameras[0], &shape_base, &self.profile),
            render_silhouette(&cameras[1], &shape_base, &self.profile),
        ];
        let mut probs = ClassProbs::repeat((1.0 - self.confidence) / 7.0);
        probs[self.estimate.index()] = self.confidence;
        let estimates = vec![Some([probs, probs]); frames.len()];
        let mut scenario = HandoverScenario {
            id: self.id.clone(),
            container: self.container.clone(),
            frames,
            cameras,
            shape_masks,
            shape_frame: 0,
            estimates,
            truth: self.truth.clone(),
            delivery_target: self.delivery_target,
            delivery_radius: self.params.safety.eta,
            params: self.params.clone(),
        };
        if let Some(ratio) = self.mass_ratio {
            let fill = scenario.truth.content_level
                * scenario.truth.content_type.density(&self.params.densities);
            assert!(fill > 0.0, "mass ratio needs a filled container");
            let predicted = predicted_mass(&scenario, scenario.frames.len() - 1)
                .expect("scripted scenes are perceivable")
                .mass;
            scenario.truth.capacity = (predicted / ratio - scenario.truth.container_mass) / fill;
        }
        scenario
    }
}

/// Rotates every point of `hand` about the vertical axis through `pivot`.
pub fn rotate_hand(hand: &[Point3; KEYPOINTS], pivot: Point3, angle: f64) -> [Point3; KEYPOINTS] {
    let rot = Rotation3::from_axis_angle(&Point3::z_axis(), angle);
    hand.map(|p| pivot + rot * (p - pivot))
}

/// The scripted scenes shipped as fixtures: one per qualitative behaviour.
pub fn standard_scenes() -> Vec<SceneBuilder> {
    let tall = Profile::cylinder(32.0, 200.0);
    vec![
        SceneBuilder::new("cylinder_clean")
            .filling(ContentClass::W5, ContentClass::W5)
            .mass_ratio(1.0),
        SceneBuilder::new("empty_container"),
        SceneBuilder::new("mid_occlusion")
            .container("C2", tall.clone())
            .grip(Grip::Wrap {
                lo: 70.0,
                hi: 90.0,
                side: HandSide::Right,
            }),
        SceneBuilder::new("full_occlusion").grip(Grip::Wrap {
            lo: 2.0,
            hi: 98.0,
            side: HandSide::Right,
        }),
        SceneBuilder::new("approach_motion")
            .container("C2", tall)
            .filling(ContentClass::R9, ContentClass::R9)
            .mass_ratio(1.0)
            .motion(Motion::Linear {
                from: Point3::new(40.0, 650.0, 260.0),
                to: Point3::new(0.0, 470.0, 280.0),
            })
            .frames(60),
        SceneBuilder::new("mass_underestimated")
            .filling(ContentClass::W9, ContentClass::W9)
            .mass_ratio(0.5),
        {
            let mut b = SceneBuilder::new("hand_failure")
                .filling(ContentClass::P5, ContentClass::P5)
                .mass_ratio(1.0);
            b.hand_detection_failure = true;
            b
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::hand_frame;

    #[test]
    fn profile_queries() {
        let p = Profile::cone(40.0, 10.0, 100.0);
        assert_eq!(p.radius_at(0.0), 40.0);
        assert_eq!(p.radius_at(50.0), 25.0);
        assert_eq!(p.radius_at(100.0), 10.0);
        assert_eq!(p.radius_at(101.0), 0.0);
        let c = Profile::cylinder(30.0, 100.0);
        assert!((c.volume_ml() - 282.743).abs() < 1e-3);
    }

    #[test]
    fn rendered_cylinder_has_expected_extent() {
        let base = Point3::new(0.0, 450.0, 200.0);
        let cams = orthogonal_cameras(base + Point3::new(0.0, 0.0, 50.0));
        let mask = render_silhouette(&cams[0], &base, &Profile::cylinder(30.0, 100.0));
        // 1850 px focal at 2 m: a 60 mm diameter spans about 55 px.
        let run = mask.widest_run();
        assert!((54..=58).contains(&run), "run {run}");
        let centre = cams[0]
            .project(&(base + Point3::new(0.0, 0.0, 50.0)))
            .unwrap();
        assert!(mask.contains(&centre));
    }

    #[test]
    fn wrapping_hand_is_a_valid_frame_within_band() {
        for side in [HandSide::Left, HandSide::Right] {
            let kp = wrapping_hand(Point3::new(0.0, 450.0, 200.0), 30.0, 210.0, 260.0, side);
            assert!(hand_frame(&kp).valid);
            assert!(kp.iter().all(|p| p.z >= 210.0 && p.z <= 260.0));
            assert!(kp.iter().all(|p| p.y > 450.0 - 30.0));
        }
    }

    #[test]
    fn builder_is_deterministic() {
        let mut b = SceneBuilder::new("n");
        b.pixel_noise = 0.5;
        let (x, y) = (b.build(), b.build());
        assert_eq!(x.frames, y.frames);
        assert_eq!(x.shape_masks, y.shape_masks);
    }
}
