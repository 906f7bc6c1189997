//! Human safety, object safety, delivery accuracy and mass bias of a
//! finished run, and the report rows built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::geom::Point3;
use crate::grasp::required_force;
use crate::ingest::HandoverScenario;
use crate::params::{ParameterSet, SafetyParams};
use crate::sim::{FinalPose, SimulationLog};

/// Sigmoid of the hand clearance `l`: 0.5 at half the safety distance and
/// `c` at the safety distance.
pub fn human_safety(l: f64, params: &SafetyParams) -> f64 {
    let k = ((1.0 - params.c) / params.c).ln();
    if k == 0.0 {
        return 0.5;
    }
    if l.is_infinite() {
        return if k < 0.0 { 1.0 } else { 0.0 };
    }
    1.0 / (1.0 + ((2.0 * l / params.safety_distance - 1.0) * k).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectScore {
    pub value: f64,
    /// The reference force was zero while the compared force was not.
    pub undefined_reference: bool,
}

/// Exponential decay in the relative error of `force` against `reference`.
pub fn object_safety(force: f64, reference: f64, params: &SafetyParams) -> ObjectScore {
    if reference == 0.0 {
        return ObjectScore {
            value: if force == 0.0 { 1.0 } else { 0.0 },
            undefined_reference: force != 0.0,
        };
    }
    let rel = (force - reference).abs() / reference;
    ObjectScore {
        value: (rel * (1.0 - params.c).ln()).exp(),
        undefined_reference: false,
    }
}

/// Object safety of the force measured after closing; `None` when no
/// grasp happened.
pub fn post_grasp_safety(
    applied: Option<f64>,
    reference: f64,
    params: &SafetyParams,
) -> Option<ObjectScore> {
    applied.map(|f| object_safety(f, reference, params))
}

/// `1 − α/η` for an upright placement within `η` of the target, else 0.
pub fn delivery_accuracy(pose: Option<&FinalPose>, target: &Point3, params: &SafetyParams) -> f64 {
    let Some(pose) = pose else { return 0.0 };
    let alpha = (pose.base - target).xy().norm();
    if alpha < params.eta && pose.tilt < params.phi {
        1.0 - alpha / params.eta
    } else {
        0.0
    }
}

/// Signed: positive when the mass is overestimated.
pub fn mass_bias(predicted: f64, truth: f64) -> f64 {
    predicted - truth
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub scenario: String,
    pub container: String,
    pub configuration: String,
    pub psi_h: f64,
    pub psi_f: ObjectScore,
    /// `None` prints as NE.
    pub psi_f_bar: Option<ObjectScore>,
    pub delta: f64,
    pub delta_m: f64,
    pub events: Vec<&'static str>,
    pub hand_detected: bool,
    pub seed: u64,
    pub params: ParameterSet,
}

/// Clearance feeding the human score: the tightest step between trigger and
/// closure, or of the whole run when no grasp happened.
pub fn contact_window_clearance(log: &SimulationLog) -> f64 {
    let window = match &log.grasp {
        Some(g) => &log.steps[g.trigger_step..=g.closed_step],
        None => &log.steps[..],
    };
    window
        .iter()
        .map(|r| r.hand_distance)
        .fold(f64::INFINITY, f64::min)
}

pub fn build_report(log: &SimulationLog, scenario: &HandoverScenario) -> SafetyReport {
    let p = &scenario.params;
    let reference = required_force(log.true_mass, &p.grip);
    SafetyReport {
        scenario: log.scenario.clone(),
        container: scenario.container.clone(),
        configuration: scenario.configuration().to_string(),
        psi_h: human_safety(contact_window_clearance(log), &p.safety),
        psi_f: object_safety(log.prediction.force, reference, &p.safety),
        psi_f_bar: post_grasp_safety(
            log.grasp.as_ref().map(|g| g.applied_force),
            reference,
            &p.safety,
        ),
        delta: delivery_accuracy(log.final_pose.as_ref(), &log.delivery_target, &p.safety),
        delta_m: mass_bias(log.prediction.mass, log.true_mass),
        events: log.event_labels(),
        hand_detected: log.hand_detected,
        seed: log.seed,
        params: p.clone(),
    }
}

pub const REPORT_HEADER: &str = "scenario,psi_h,psi_f,psi_f_bar,delta,delta_m_g,events,psi_h_pct,psi_f_pct,psi_f_bar_pct,delta_pct,container,configuration,hand_detected";

impl SafetyReport {
    pub fn csv_row(&self) -> String {
        let bar = |scale: f64| {
            self.psi_f_bar
                .map_or("NE".to_string(), |s| format!("{:.6}", s.value * scale))
        };
        format!(
            "{},{:.6},{:.6},{},{:.6},{:.6},{},{:.4},{:.4},{},{:.4},{},{},{}",
            self.scenario,
            self.psi_h,
            self.psi_f.value,
            bar(1.0),
            self.delta,
            self.delta_m,
            self.events.join(";"),
            self.psi_h * 100.0,
            self.psi_f.value * 100.0,
            self.psi_f_bar
                .map_or("NE".to_string(), |s| format!("{:.4}", s.value * 100.0)),
            self.delta * 100.0,
            self.container,
            self.configuration,
            self.hand_detected,
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_HEADER}\n{}\n", self.csv_row())
    }
}

/// Filling configurations in display order.
pub const CONFIGURATIONS: [&str; 7] = ["0", "P5", "P9", "R5", "R9", "W5", "W9"];

/// Cell text used when hand detection failed in any run of the cell.
pub const FAILURE_SENTINEL: &str = "X";

type Metric = fn(&SafetyReport) -> f64;

/// One CSV per metric: rows are the filling configurations present, columns
/// the containers present, cells the mean percentage over runs.
pub fn score_matrices(reports: &[SafetyReport]) -> Vec<(&'static str, String)> {
    let containers: BTreeSet<&str> = reports.iter().map(|r| r.container.as_str()).collect();
    let configs: Vec<&str> = CONFIGURATIONS
        .iter()
        .copied()
        .filter(|c| reports.iter().any(|r| r.configuration == *c))
        .collect();
    let metrics: [(&'static str, Metric); 3] = [
        ("psi_h", |r| r.psi_h),
        ("psi_f", |r| r.psi_f.value),
        ("delta", |r| r.delta),
    ];
    metrics
        .iter()
        .map(|(name, get)| {
            let mut cells: BTreeMap<(&str, &str), Vec<&SafetyReport>> = BTreeMap::new();
            for r in reports {
                cells
                    .entry((r.configuration.as_str(), r.container.as_str()))
                    .or_default()
                    .push(r);
            }
            let mut out = String::from("configuration");
            for c in &containers {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
            for cfg in &configs {
                out.push_str(cfg);
                for c in &containers {
                    let text = match cells.get(&(*cfg, *c)) {
                        None => String::new(),
                        Some(runs) if runs.iter().any(|r| !r.hand_detected) => {
                            FAILURE_SENTINEL.to_string()
                        }
                        Some(runs) => format!(
                            "{:.2}",
                            100.0 * runs.iter().map(|r| get(r)).sum::<f64>() / runs.len() as f64
                        ),
                    };
                    let _ = write!(out, ",{text}");
                }
                out.push('\n');
            }
            (*name, out)
        })
        .collect()
}
