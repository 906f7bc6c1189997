//! Every tunable constant of the pipeline, with defaults.
//!
//! Lengths are millimetres, times seconds, masses grams, forces newtons.
//! Accelerations are stored in m/s² because that is how the grip model
//! quotes them; the robot controller converts to mm/s² internally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::TransitionMatrix;

#[derive(Debug, Error, PartialEq)]
#[error("parameter `{name}` = {value} is out of bounds: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

/// Linear effort→force gripper model and the quasi-static grip constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripModel {
    /// Slope of the effort→force model (N per effort unit).
    pub a: f64,
    /// Intercept of the effort→force model (N).
    pub b: f64,
    /// Friction coefficient between fingers and container.
    pub mu: f64,
    /// Design acceleration of the arm while holding the object (m/s²).
    pub a_max: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Calibrated effort range; commands outside are clamped.
    pub effort_min: f64,
    pub effort_max: f64,
}

impl Default for GripModel {
    fn default() -> Self {
        Self {
            a: 25.35,
            b: 0.045,
            mu: 1.0,
            a_max: 27.9,
            gravity: 9.81,
            effort_min: 0.01,
            effort_max: 1.25,
        }
    }
}

/// Constants of the human-safety, object-safety and delivery scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Safety distance around the hand (mm).
    pub safety_distance: f64,
    /// Sensitivity shared by the human and object scores.
    pub c: f64,
    /// Radius of the delivery area (mm).
    pub eta: f64,
    /// Tilt at which a placed container tips over (rad).
    pub phi: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            safety_distance: 21.0,
            c: 0.995,
            eta: 500.0,
            phi: std::f64::consts::FRAC_PI_4,
        }
    }
}

/// Circumference-stack reconstruction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LodeParams {
    /// Points sampled on each circumference.
    pub circle_samples: usize,
    /// Vertical spacing of the height ladder (mm).
    pub slice_spacing: f64,
    /// Radius decrement per shrink step (mm).
    pub radius_step: f64,
    /// Slices narrower than this are dropped at the ends (mm).
    pub min_radius: f64,
    /// Upper bound on how far the ladder may extend from the centroid (mm).
    pub max_half_height: f64,
}

impl Default for LodeParams {
    fn default() -> Self {
        Self {
            circle_samples: 36,
            slice_spacing: 2.0,
            radius_step: 1.0,
            min_radius: 1.0,
            max_half_height: 400.0,
        }
    }
}

/// Constant-velocity filter noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    /// Process-noise spectral density (mm²/s³).
    pub q: f64,
    /// Measurement-noise variance per axis (mm²).
    pub r: f64,
    /// Initial velocity variance per axis ((mm/s)²).
    pub initial_velocity_var: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q: 100.0,
            r: 25.0,
            initial_velocity_var: 250_000.0,
        }
    }
}

/// Robot and simulation-loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Simulation step (s); trace frames are consumed one per step.
    pub dt: f64,
    /// Pose hold after the recording ends (s).
    pub hold_time: f64,
    /// Tool speed limit (mm/s).
    pub v_max: f64,
    /// Distance kept from the container surface without a safe region (mm).
    pub standoff: f64,
    /// Grasp trigger radius around the target (mm).
    pub grasp_trigger: f64,
    /// Finger segment length (mm).
    pub finger_length: f64,
    /// Fully open aperture (mm).
    pub max_aperture: f64,
    /// Time to close the fingers onto the container (s).
    pub close_time: f64,
    /// Transport time budget before the run is declared timed out (s).
    pub transport_timeout: f64,
    /// Initial tool position (mm).
    pub home: [f64; 3],
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            hold_time: 2.0,
            v_max: 500.0,
            standoff: 100.0,
            grasp_trigger: 10.0,
            finger_length: 40.0,
            max_aperture: 85.0,
            close_time: 0.2,
            transport_timeout: 10.0,
            home: [0.0, 150.0, 250.0],
        }
    }
}

/// Content densities (g/mL).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityTable {
    pub pasta: f64,
    pub rice: f64,
    pub water: f64,
}

impl Default for DensityTable {
    fn default() -> Self {
        Self {
            pasta: 0.41,
            rice: 0.85,
            water: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterSet {
    /// Gripper finger width (mm).
    pub gripper_width: f64,
    /// Enlarged human finger thickness (mm).
    pub finger_thickness: f64,
    pub grip: GripModel,
    pub safety: SafetyParams,
    pub lode: LodeParams,
    pub kalman: KalmanParams,
    pub robot: RobotParams,
    pub densities: DensityTable,
    /// Keep the first chosen safe interval while it still exists.
    pub lock_region: bool,
    /// Standard deviation of the additive applied-force noise (N).
    pub contact_noise: f64,
    /// Standard deviation of the tilt injected at placement (rad).
    pub orientation_noise: f64,
    /// Row-stochastic content transition matrix; `None` selects the default.
    pub transition: Option<TransitionMatrix>,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self {
            gripper_width: 22.0,
            finger_thickness: 20.0,
            grip: GripModel::default(),
            safety: SafetyParams::default(),
            lode: LodeParams::default(),
            kalman: KalmanParams::default(),
            robot: RobotParams::default(),
            densities: DensityTable::default(),
            lock_region: true,
            contact_noise: 0.0,
            orientation_noise: 0.0,
            transition: None,
        }
    }
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError {
            name,
            value,
            reason,
        })
    }
}

impl ParameterSet {
    /// Hand–gripper clearance margin `(w_g + w_h) / 2`.
    pub fn margin(&self) -> f64 {
        0.5 * (self.gripper_width + self.finger_thickness)
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        self.transition.clone().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let g = &self.grip;
        let s = &self.safety;
        let l = &self.lode;
        let k = &self.kalman;
        let r = &self.robot;
        let d = &self.densities;
        check(
            "gripper_width",
            self.gripper_width,
            self.gripper_width >= 0.0,
            "must be >= 0",
        )?;
        check(
            "finger_thickness",
            self.finger_thickness,
            self.finger_thickness >= 0.0,
            "must be >= 0",
        )?;
        check("grip.a", g.a, g.a > 0.0, "must be > 0")?;
        check("grip.b", g.b, true, "must be finite")?;
        check("grip.mu", g.mu, g.mu > 0.0, "must be > 0")?;
        check("grip.a_max", g.a_max, g.a_max >= 0.0, "must be >= 0")?;
        check("grip.gravity", g.gravity, g.gravity > 0.0, "must be > 0")?;
        check(
            "grip.effort_min",
            g.effort_min,
            g.effort_min <= g.effort_max,
            "must be <= effort_max",
        )?;
        check(
            "safety.safety_distance",
            s.safety_distance,
            s.safety_distance > 0.0,
            "must be > 0",
        )?;
        check(
            "safety.c",
            s.c,
            s.c > 0.0 && s.c < 1.0,
            "must lie in (0, 1)",
        )?;
        check("safety.eta", s.eta, s.eta > 0.0, "must be > 0")?;
        check(
            "safety.phi",
            s.phi,
            s.phi > 0.0 && s.phi < std::f64::consts::FRAC_PI_2,
            "must lie in (0, pi/2)",
        )?;
        check(
            "lode.circle_samples",
            l.circle_samples as f64,
            l.circle_samples >= 3,
            "must be >= 3",
        )?;
        check(
            "lode.slice_spacing",
            l.slice_spacing,
            l.slice_spacing > 0.0,
            "must be > 0",
        )?;
        check(
            "lode.radius_step",
            l.radius_step,
            l.radius_step > 0.0,
            "must be > 0",
        )?;
        check(
            "lode.min_radius",
            l.min_radius,
            l.min_radius >= 0.0,
            "must be >= 0",
        )?;
        check(
            "lode.max_half_height",
            l.max_half_height,
            l.max_half_height > 0.0,
            "must be > 0",
        )?;
        check("kalman.q", k.q, k.q >= 0.0, "must be >= 0")?;
        check("kalman.r", k.r, k.r >= 0.0, "must be >= 0")?;
        check(
            "kalman.initial_velocity_var",
            k.initial_velocity_var,
            k.initial_velocity_var >= 0.0,
            "must be >= 0",
        )?;
        check("robot.dt", r.dt, r.dt > 0.0, "must be > 0")?;
        check(
            "robot.hold_time",
            r.hold_time,
            r.hold_time >= 0.0,
            "must be >= 0",
        )?;
        check("robot.v_max", r.v_max, r.v_max > 0.0, "must be > 0")?;
        check(
            "robot.standoff",
            r.standoff,
            r.standoff >= 0.0,
            "must be >= 0",
        )?;
        check(
            "robot.grasp_trigger",
            r.grasp_trigger,
            r.grasp_trigger > 0.0,
            "must be > 0",
        )?;
        check(
            "robot.finger_length",
            r.finger_length,
            r.finger_length >= 0.0,
            "must be >= 0",
        )?;
        check(
            "robot.max_aperture",
            r.max_aperture,
            r.max_aperture > 0.0,
            "must be > 0",
        )?;
        check(
            "robot.close_time",
            r.close_time,
            r.close_time >= 0.0,
            "must be >= 0",
        )?;
        check(
            "robot.transport_timeout",
            r.transport_timeout,
            r.transport_timeout > 0.0,
            "must be > 0",
        )?;
        for v in r.home {
            check("robot.home", v, true, "must be finite")?;
        }
        check("densities.pasta", d.pasta, d.pasta > 0.0, "must be > 0")?;
        check("densities.rice", d.rice, d.rice > 0.0, "must be > 0")?;
        check("densities.water", d.water, d.water > 0.0, "must be > 0")?;
        check(
            "contact_noise",
            self.contact_noise,
            self.contact_noise >= 0.0,
            "must be >= 0",
        )?;
        check(
            "orientation_noise",
            self.orientation_noise,
            self.orientation_noise >= 0.0,
            "must be >= 0",
        )?;
        if let Some(t) = &self.transition {
            t.validate().map_err(|_| ParamError {
                name: "transition",
                value: f64::NAN,
                reason: "rows must be nonnegative and sum to 1",
            })?;
        }
        Ok(())
    }

    /// Top-level keys present in `overrides`; used to log which defaults were applied.
    pub fn defaulted_keys(overrides: &serde_json::Value) -> Vec<&'static str> {
        const KEYS: [&str; 12] = [
            "gripper_width",
            "finger_thickness",
            "grip",
            "safety",
            "lode",
            "kalman",
            "robot",
            "densities",
            "lock_region",
            "contact_noise",
            "orientation_noise",
            "transition",
        ];
        let obj = overrides.as_object();
        KEYS.iter()
            .copied()
            .filter(|k| obj.is_none_or(|o| !o.contains_key(*k)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_constants() {
        let p = ParameterSet::default();
        assert_eq!(p.margin(), 21.0);
        assert_eq!(p.safety.safety_distance, p.margin());
        assert_eq!(p.grip.a, 25.35);
        assert_eq!(p.grip.b, 0.045);
        assert_eq!(p.grip.a_max, 27.9);
        assert_eq!(p.safety.c, 0.995);
        assert_eq!(p.safety.eta, 500.0);
        p.validate().unwrap();
    }

    #[test]
    fn partial_json_keeps_other_defaults() {
        let p: ParameterSet = serde_json::from_str(r#"{"safety": {"c": 0.9}}"#).unwrap();
        assert_eq!(p.safety.c, 0.9);
        assert_eq!(p.safety.eta, 500.0);
        assert_eq!(p.grip, GripModel::default());
    }

    #[test]
    fn rejects_out_of_range() {
        let mut p = ParameterSet::default();
        p.safety.c = 1.0;
        assert_eq!(p.validate().unwrap_err().name, "safety.c");
        let mut p = ParameterSet::default();
        p.robot.dt = 0.0;
        assert_eq!(p.validate().unwrap_err().name, "robot.dt");
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(serde_json::from_str::<ParameterSet>(r#"{"bogus": 1}"#).is_err());
    }
}
