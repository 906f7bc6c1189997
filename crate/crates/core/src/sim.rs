//! Kinematic handover simulation: a tool point with two finger segments
//! approaches the held container, closes on it, carries it to the delivery
//! target and checks the grip against slipping at every transport step.

use std::fmt::Write as _;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{point_segment_distance, triangulate, Point3};
use crate::grasp::{
    effort_for_force, force_for_effort, graspable_range, plan_grasp, required_force, safe_region,
    unsafe_heights, EffortCommand, Interval, SafeRegion,
};
use crate::ingest::HandoverScenario;
use crate::params::{GripModel, ParameterSet};
use crate::perception::{
    estimate_mass, fuse_stream, holding_hand, lode_reconstruct, shape_metrics, track_container,
    ContainerShape, ContentBelief, ContentClass, PerceptionError, ShapeMetrics, KEYPOINTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("perception failed: {0}")]
    Perception(#[from] PerceptionError),
    #[error("gripper is not in contact with the container")]
    NotInContact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Approach,
    Standoff,
    Grasp,
    Transport,
    Place,
    Done,
    Aborted,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Approach => "APPROACH",
            Phase::Standoff => "STANDOFF",
            Phase::Grasp => "GRASP",
            Phase::Transport => "TRANSPORT",
            Phase::Place => "PLACE",
            Phase::Done => "DONE",
            Phase::Aborted => "ABORTED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    GraspExecuted,
    NoSafeRegion,
    HandContact,
    Slip,
    Placed,
    Timeout,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::GraspExecuted => "GRASP_EXECUTED",
            EventKind::NoSafeRegion => "NO_SAFE_REGION",
            EventKind::HandContact => "HAND_CONTACT",
            EventKind::Slip => "SLIP",
            EventKind::Placed => "PLACED",
            EventKind::Timeout => "TIMEOUT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub tool: Point3,
    /// mm/s
    pub velocity: Point3,
    pub aperture: f64,
    pub effort: Option<f64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub robot: RobotState,
    pub container: Point3,
    pub target: Option<Point3>,
    /// Clearance between the fingers and the nearest hand keypoint sphere.
    pub hand_distance: f64,
    /// Commanded acceleration magnitude, m/s².
    pub acceleration: f64,
    pub applied_force: Option<f64>,
}

/// Mass and force predicted from perception at the grasp frame, or at the
/// last trace frame when no grasp happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassPrediction {
    pub frame: usize,
    pub class: ContentClass,
    pub mass: f64,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub trigger_step: usize,
    pub closed_step: usize,
    pub height: f64,
    pub width: f64,
    pub effort: EffortCommand,
    pub applied_force: f64,
    /// Safe region the trigger step planned against.
    pub region: SafeRegion,
}

/// Where the container ended up and how far it tilted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPose {
    pub base: Point3,
    pub tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub scenario: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub events: Vec<Event>,
    pub shape: ContainerShape,
    pub metrics: ShapeMetrics,
    pub prediction: MassPrediction,
    pub true_mass: f64,
    pub grasp: Option<GraspRecord>,
    pub final_pose: Option<FinalPose>,
    /// At least one trace frame reported a usable hand.
    pub hand_detected: bool,
    pub delivery_target: Point3,
}

impl SimulationLog {
    pub fn has(&self, kind: EventKind) -> bool {
        self.events.iter().any(|e| e.kind == kind)
    }

    pub fn event_labels(&self) -> Vec<&'static str> {
        self.events.iter().map(|e| e.kind.label()).collect()
    }

    pub fn steps_csv(&self) -> String {
        let mut out = String::from(
            "step,time,phase,tool_x,tool_y,tool_z,vel_x,vel_y,vel_z,aperture,effort,container_x,container_y,container_z,target_x,target_y,target_z,hand_distance,acceleration,applied_force\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.steps {
            let (tx, ty, tz) = match r.target {
                Some(t) => (Some(t.x), Some(t.y), Some(t.z)),
                None => (None, None, None),
            };
            let _ = writeln!(
                out,
                "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{},{},{},{},{:.6},{}",
                r.step,
                r.time,
                r.robot.phase.label(),
                r.robot.tool.x,
                r.robot.tool.y,
                r.robot.tool.z,
                r.robot.velocity.x,
                r.robot.velocity.y,
                r.robot.velocity.z,
                r.robot.aperture,
                opt(r.robot.effort),
                r.container.x,
                r.container.y,
                r.container.z,
                opt(tx),
                opt(ty),
                opt(tz),
                if r.hand_distance.is_finite() { format!("{:.6}", r.hand_distance) } else { "inf".into() },
                r.acceleration,
                opt(r.applied_force),
            );
        }
        out
    }

    pub fn events_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario,
            "seed": self.seed,
            "events": self.events.iter().map(|e| serde_json::json!({
                "step": e.step, "time": e.time, "kind": e.kind.label(),
            })).collect::<Vec<_>>(),
            "grasp": self.grasp,
            "final_pose": self.final_pose,
            "prediction": self.prediction,
            "true_mass": self.true_mass,
            "hand_detected": self.hand_detected,
        })
    }
}

/// Relative slack on the holding inequality so a force that went through
/// the effort round trip still counts as meeting its own requirement.
const GRIP_ROUNDING: f64 = 1e-12;

/// Holds iff friction covers gravity plus the acceleration (m/s²).
pub fn grip_stability(applied_force: f64, true_mass_g: f64, accel: f64, model: &GripModel) -> bool {
    let demand = true_mass_g / 1000.0 * (model.gravity + accel.abs());
    model.mu * applied_force >= demand * (1.0 - GRIP_ROUNDING)
}

/// Force delivered by the fingers for an issued effort.
pub fn applied_force(
    effort: f64,
    in_contact: bool,
    noise: f64,
    model: &GripModel,
) -> Result<f64, SimError> {
    if !in_contact {
        return Err(SimError::NotInContact);
    }
    Ok((force_for_effort(effort, model) + noise).max(0.0))
}

/// The two finger segments for a tool pose: parallel to the approach,
/// centred on the tool, `aperture` apart along the closing axis.
pub fn finger_segments(
    tool: &Point3,
    orientation: &Matrix3<f64>,
    aperture: f64,
    length: f64,
) -> [(Point3, Point3); 2] {
    let closing = orientation.column(0).into_owned();
    let approach = orientation.column(1).into_owned();
    [1.0, -1.0].map(|s| {
        let c = tool + closing * (s * aperture / 2.0);
        (c - approach * (length / 2.0), c + approach * (length / 2.0))
    })
}

/// Closest finger-to-keypoint distance less the hand sphere radius, at
/// least 0; infinite without hands.
pub fn min_hand_distance<'a>(
    fingers: &[(Point3, Point3); 2],
    hands: impl IntoIterator<Item = &'a [Point3; KEYPOINTS]>,
    hand_radius: f64,
) -> f64 {
    let mut best = f64::INFINITY;
    for hand in hands {
        for k in hand {
            for (a, b) in fingers {
                best = best.min(point_segment_distance(k, a, b));
            }
        }
    }
    if best.is_finite() {
        (best - hand_radius).max(0.0)
    } else {
        best
    }
}

/// Distance from `p` to the cylinder bounding the container around `t`.
pub fn surface_distance(p: &Point3, t: &Point3, shape: &ContainerShape) -> f64 {
    let horizontal = ((p.x - t.x).powi(2) + (p.y - t.y).powi(2)).sqrt();
    let dx = (horizontal - shape.max_radius()).max(0.0);
    let z = p.z - t.z;
    let dz = (shape.z_min() - z).max(z - shape.z_max()).max(0.0);
    (dx * dx + dz * dz).sqrt()
}

/// One step of the bounded-acceleration point controller toward `goal`.
fn track_goal(
    tool: Point3,
    velocity: Point3,
    goal: Point3,
    dt: f64,
    v_max: f64,
    a_max: f64,
) -> (Point3, Point3) {
    let offset = goal - tool;
    let dist = offset.norm();
    let desired = if dist > 1e-12 {
        offset / dist * v_max.min((2.0 * a_max * dist).sqrt()).min(dist / dt)
    } else {
        Point3::zeros()
    };
    let mut dv = desired - velocity;
    let limit = a_max * dt;
    if dv.norm() > limit {
        dv *= limit / dv.norm();
    }
    let v = velocity + dv;
    (tool + v * dt, v)
}

/// Trapezoidal speed profile over a straight segment.
#[derive(Debug, Clone, Copy)]
struct Trapezoid {
    start: Point3,
    dir: Point3,
    length: f64,
    v: f64,
    a: f64,
    t_acc: f64,
    t_total: f64,
}

impl Trapezoid {
    fn new(start: Point3, goal: Point3, v_max: f64, a_max: f64) -> Self {
        let d = goal - start;
        let length = d.norm();
        let dir = if length > 0.0 {
            d / length
        } else {
            Point3::zeros()
        };
        let v = v_max.min((a_max * length).sqrt());
        let t_acc = v / a_max;
        let t_total = if length > 0.0 {
            2.0 * t_acc + (length - v * t_acc) / v
        } else {
            0.0
        };
        Self {
            start,
            dir,
            length,
            v,
            a: a_max,
            t_acc,
            t_total,
        }
    }

    fn distance(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.t_total);
        if t < self.t_acc {
            0.5 * self.a * t * t
        } else if t <= self.t_total - self.t_acc {
            0.5 * self.a * self.t_acc * self.t_acc + self.v * (t - self.t_acc)
        } else {
            let r = self.t_total - t;
            self.length - 0.5 * self.a * r * r
        }
    }

    fn speed(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.t_total {
            0.0
        } else if t < self.t_acc {
            self.a * t
        } else if t <= self.t_total - self.t_acc {
            self.v
        } else {
            self.a * (self.t_total - t)
        }
    }

    fn position(&self, t: f64) -> Point3 {
        self.start + self.dir * self.distance(t)
    }

    /// Whether the interval `(t0, t1]` includes a ramp.
    fn accelerating(&self, t0: f64, t1: f64) -> bool {
        self.length > 0.0
            && (t0 < self.t_acc || t1 > self.t_total - self.t_acc)
            && t0 < self.t_total
    }
}

/// Everything the controller derives from perception before the loop starts.
struct Perceived {
    shape: ContainerShape,
    metrics: ShapeMetrics,
    beliefs: Vec<ContentBelief>,
}

fn perceive(scenario: &HandoverScenario) -> Result<Perceived, PerceptionError> {
    let p = &scenario.params;
    let frame = &scenario.frames[scenario.shape_frame];
    let centroid = match frame.centroid_px {
        [Some(a), Some(b)] => triangulate(&scenario.cameras[0], &a, &scenario.cameras[1], &b).ok(),
        _ => None,
    }
    .ok_or(PerceptionError::NoValidFrames)?;
    let shape = lode_reconstruct(&scenario.shape_masks, &scenario.cameras, &centroid, &p.lode)?;
    let metrics = shape_metrics(&shape);
    let transition = p.transition_matrix();
    let beliefs = fuse_stream(
        ContentBelief::initial(),
        scenario
            .estimates
            .iter()
            .map(|e| e.as_ref().map(|[a, b]| (a, b))),
        &transition,
    );
    Ok(Perceived {
        shape,
        metrics,
        beliefs,
    })
}

fn predict_mass(
    perceived: &Perceived,
    frame: usize,
    scenario: &HandoverScenario,
) -> MassPrediction {
    let p = &scenario.params;
    let belief = perceived
        .beliefs
        .get(frame)
        .or(perceived.beliefs.last())
        .cloned()
        .unwrap_or_else(ContentBelief::initial);
    let mass = estimate_mass(
        &belief,
        perceived.metrics.volume_ml,
        &p.densities,
        scenario.truth.container_mass,
    );
    MassPrediction {
        frame,
        class: belief.map_class(),
        mass,
        force: required_force(mass, &p.grip),
    }
}

/// Mass the robot predicts for the scenario at frame `frame`.
pub fn predicted_mass(
    scenario: &HandoverScenario,
    frame: usize,
) -> Result<MassPrediction, SimError> {
    Ok(predict_mass(&perceive(scenario)?, frame, scenario))
}

/// Piece of `region.safe` overlapping `previous` the most, if any does.
fn keep_locked(region: &SafeRegion, previous: Interval) -> Option<Interval> {
    region
        .safe
        .iter()
        .map(|i| (i, i.hi.min(previous.hi) - i.lo.max(previous.lo)))
        .filter(|(_, overlap)| *overlap >= 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| *i)
}

/// Runs the full handover. `seed` drives contact and orientation noise.
pub fn run_handover(scenario: &HandoverScenario, seed: u64) -> Result<SimulationLog, SimError> {
    let p: &ParameterSet = &scenario.params;
    let robot = &p.robot;
    let dt = robot.dt;
    let a_max_mm = p.grip.a_max * 1000.0;
    let hand_radius = p.finger_thickness / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let perceived = perceive(scenario)?;
    let track = track_container(&scenario.frames, &scenario.cameras, &p.kalman, &p.robot)?;
    let shape = &perceived.shape;
    let width = 2.0 * shape.max_radius();
    let graspable = graspable_range(shape, p.gripper_width).ok();
    let trace_len = track.trace_len;
    let hands_at = |k: usize| {
        scenario.frames[k.min(trace_len - 1)]
            .hands()
            .copied()
            .collect::<Vec<_>>()
    };
    let hand_detected = scenario
        .frames
        .iter()
        .any(|f| f.hands().any(|h| crate::perception::hand_frame(h).valid));

    let mut state = RobotState {
        tool: Point3::from(robot.home),
        velocity: Point3::zeros(),
        aperture: robot.max_aperture,
        effort: None,
        phase: Phase::Approach,
    };
    let mut events: Vec<Event> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut locked: Option<Interval> = None;
    let mut orientation = Matrix3::identity();
    let mut prediction: Option<MassPrediction> = None;
    let mut grasp: Option<GraspRecord> = None;
    let mut final_pose: Option<FinalPose> = None;
    let mut transport: Option<(Trapezoid, usize)> = None;
    let mut open_width = robot.max_aperture;
    let mut contact_reported = false;
    let mut infeasible = false;
    let close_steps = ((robot.close_time / dt).round() as usize).max(1);
    let transport_limit = (robot.transport_timeout / dt).ceil() as usize;

    for k in 0.. {
        let time = k as f64 * dt;
        let pose = &track.poses[k.min(track.poses.len() - 1)];
        let hands = hands_at(k);
        let mut container = pose.position;
        let mut target = None;
        let mut acceleration = 0.0;
        let mut force = None;
        let push = |events: &mut Vec<Event>, kind| {
            events.push(Event {
                step: k,
                time,
                kind,
            })
        };
        let phase_at_start = state.phase;

        match state.phase {
            Phase::Approach | Phase::Standoff => {
                let holder = holding_hand(&scenario.frames[k.min(trace_len - 1)], &pose.position)
                    .map(|(_, h)| h);
                let mut region = match graspable {
                    Some(z) => safe_region(
                        z,
                        &unsafe_heights(&hands, &pose.position, width),
                        p.margin(),
                    ),
                    None => SafeRegion {
                        graspable: Interval::new(0.0, -1.0),
                        unsafe_heights: Vec::new(),
                        safe: Vec::new(),
                        chosen: None,
                    },
                };
                if p.lock_region {
                    if let Some(prev) = locked {
                        region.chosen = keep_locked(&region, prev).or(region.chosen);
                    }
                }
                let current = plan_grasp(&region, shape, &pose.position, holder.as_ref());

                orientation = current.orientation;
                if current.feasible {
                    locked = region.chosen;
                    infeasible = false;
                    state.phase = Phase::Approach;
                    let g = current.target.expect("feasible plans carry a target");
                    target = Some(g);
                    let (tool, v) =
                        track_goal(state.tool, state.velocity, g, dt, robot.v_max, a_max_mm);
                    state.tool = tool;
                    state.velocity = v;
                    if (state.tool - g).norm() < robot.grasp_trigger {
                        push(&mut events, EventKind::GraspExecuted);
                        let frame = k.min(trace_len - 1);
                        let pred = predict_mass(&perceived, frame, scenario);
                        let effort = effort_for_force(pred.force, &p.grip);
                        state.effort = Some(effort.issued);
                        state.phase = Phase::Grasp;
                        open_width = state.aperture.max(current.gripper_width);
                        grasp = Some(GraspRecord {
                            trigger_step: k,
                            closed_step: k,
                            height: current.height.expect("feasible"),
                            width: current.gripper_width,
                            effort,
                            applied_force: 0.0,
                            region: region.clone(),
                        });
                        prediction = Some(pred);
                    }
                } else {
                    if !infeasible {
                        push(&mut events, EventKind::NoSafeRegion);
                        infeasible = true;
                    }
                    state.phase = Phase::Standoff;
                    let approach = current.approach();
                    let goal = pose.position - approach * (shape.max_radius() + robot.standoff);
                    let (tool, v) =
                        track_goal(state.tool, state.velocity, goal, dt, robot.v_max, a_max_mm);
                    state.tool = tool;
                    state.velocity = v;
                }
                if state.phase != Phase::Grasp && k + 1 >= track.poses.len() {
                    push(&mut events, EventKind::Timeout);
                    state.phase = Phase::Aborted;
                }
            }
            Phase::Grasp => {
                let record = grasp.as_mut().expect("grasping after a trigger");
                let g = pose.position + Point3::new(0.0, 0.0, record.height);
                target = Some(g);
                let (tool, v) =
                    track_goal(state.tool, state.velocity, g, dt, robot.v_max, a_max_mm);
                state.tool = tool;
                state.velocity = v;
                let progress = ((k - record.trigger_step) as f64 / close_steps as f64).min(1.0);
                state.aperture = open_width + (record.width - open_width) * progress;
                if progress >= 1.0 {
                    let noise = if p.contact_noise > 0.0 {
                        Normal::new(0.0, p.contact_noise)
                            .expect("finite noise")
                            .sample(&mut rng)
                    } else {
                        0.0
                    };
                    let f = applied_force(record.effort.issued, true, noise, &p.grip)?;
                    record.applied_force = f;
                    record.closed_step = k;
                    force = Some(f);
                    let place_tool = scenario.delivery_target
                        + Point3::new(0.0, 0.0, record.height - shape.z_min());
                    transport = Some((
                        Trapezoid::new(state.tool, place_tool, robot.v_max, a_max_mm),
                        k,
                    ));
                    state.phase = Phase::Transport;
                }
            }
            Phase::Transport => {
                let record = grasp.as_ref().expect("transport after a grasp");
                let (profile, start) = transport.expect("transport profile");
                let (t0, t1) = ((k - 1 - start) as f64 * dt, (k - start) as f64 * dt);
                state.tool = profile.position(t1);
                state.velocity = profile.dir * profile.speed(t1);
                container = state.tool - Point3::new(0.0, 0.0, record.height);
                acceleration = if profile.accelerating(t0, t1) {
                    p.grip.a_max
                } else {
                    0.0
                };
                force = Some(record.applied_force);
                if !grip_stability(
                    record.applied_force,
                    scenario.true_mass(),
                    acceleration,
                    &p.grip,
                ) {
                    push(&mut events, EventKind::Slip);
                    final_pose = Some(FinalPose {
                        base: container + Point3::new(0.0, 0.0, shape.z_min()),
                        tilt: p.safety.phi,
                    });
                    state.phase = Phase::Aborted;
                } else if t1 >= profile.t_total {
                    push(&mut events, EventKind::Placed);
                    let tilt = if p.orientation_noise > 0.0 {
                        Normal::new(0.0, p.orientation_noise)
                            .expect("finite noise")
                            .sample(&mut rng)
                            .abs()
                    } else {
                        0.0
                    };
                    final_pose = Some(FinalPose {
                        base: container + Point3::new(0.0, 0.0, shape.z_min()),
                        tilt,
                    });
                    state.phase = Phase::Place;
                } else if k - start > transport_limit {
                    push(&mut events, EventKind::Timeout);
                    state.phase = Phase::Aborted;
                }
            }
            Phase::Place => {
                let record = grasp.as_ref().expect("placing after a grasp");
                container = state.tool - Point3::new(0.0, 0.0, record.height);
                state.velocity = Point3::zeros();
                state.aperture = robot.max_aperture;
                state.effort = None;
                state.phase = Phase::Done;
            }
            Phase::Done | Phase::Aborted => unreachable!("loop exits on terminal phases"),
        }

        let fingers = finger_segments(
            &state.tool,
            &orientation,
            state.aperture,
            robot.finger_length,
        );
        let hand_distance = min_hand_distance(&fingers, &hands, hand_radius);
        let near_human = matches!(
            phase_at_start,
            Phase::Approach | Phase::Standoff | Phase::Grasp
        );
        if hand_distance <= 0.0 && near_human && !contact_reported {
            push(&mut events, EventKind::HandContact);
            contact_reported = true;
        }
        steps.push(StepRecord {
            step: k,
            time,
            robot: state.clone(),
            container,
            target,
            hand_distance,
            acceleration,
            applied_force: force,
        });
        if matches!(state.phase, Phase::Done | Phase::Aborted) {
            break;
        }
    }

    let prediction =
        prediction.unwrap_or_else(|| predict_mass(&perceived, trace_len - 1, scenario));
    Ok(SimulationLog {
        scenario: scenario.id.clone(),
        seed,
        steps,
        events,
        shape: perceived.shape.clone(),
        metrics: perceived.metrics,
        prediction,
        true_mass: scenario.true_mass(),
        grasp,
        final_pose,
        hand_detected,
        delivery_target: scenario.delivery_target,
    })
}
