//! The four command-line operations as library calls.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::grasp::oracle::{check_scene, fuzz, scenario_scenes, FuzzSummary, OracleDiff};
use crate::ingest::{parse_scenario_with, HandoverScenario, IngestError, SCENARIO_FILE};
use crate::params::SafetyParams;
use crate::perception::mesh_export;
use crate::safety::{
    build_report, human_safety, object_safety, score_matrices, SafetyReport, REPORT_HEADER,
};
use crate::sim::{run_handover, SimError};

/// Environment variable capping the batch worker count.
pub const THREADS_ENV: &str = "HANDOVER_SIM_THREADS";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Input(String),
    #[error("{scenario}: {source}")]
    Simulation { scenario: String, source: SimError },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Ingest(IngestError::Io { .. }) => 1,
            CommandError::Ingest(_) | CommandError::Input(_) | CommandError::Simulation { .. } => 2,
            CommandError::Output { .. } | CommandError::OracleMismatch(_) => 1,
        }
    }
}

/// Options shared by `run` and `batch`.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub params_file: Option<PathBuf>,
    pub lock_region: Option<bool>,
    pub contact_noise: Option<f64>,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            ..Self::default()
        }
    }

    /// Parameter overrides from the params file and the explicit flags.
    pub fn overrides(&self) -> Result<Value, CommandError> {
        let mut merged = match &self.params_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CommandError::Input(format!("cannot read params file {}: {e}", path.display()))
                })?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CommandError::Input(format!("{}: {e}", path.display())))?;
                if !v.is_object() {
                    return Err(CommandError::Input(format!(
                        "{}: expected a JSON object",
                        path.display()
                    )));
                }
                v
            }
            None => json!({}),
        };
        if let Some(lock) = self.lock_region {
            merged["lock_region"] = json!(lock);
        }
        if let Some(noise) = self.contact_noise {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(CommandError::Input(format!(
                    "contact noise must be a finite nonnegative force, got {noise}"
                )));
            }
            merged["contact_noise"] = json!(noise);
        }
        Ok(merged)
    }

    pub fn load(&self, dir: &Path) -> Result<HandoverScenario, CommandError> {
        Ok(parse_scenario_with(dir, Some(&self.overrides()?))?)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CommandError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CommandError::Output {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CommandError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

fn simulate(
    scenario: &HandoverScenario,
    seed: u64,
) -> Result<(SafetyReport, crate::sim::SimulationLog), CommandError> {
    let log = run_handover(scenario, seed).map_err(|source| CommandError::Simulation {
        scenario: scenario.id.clone(),
        source,
    })?;
    Ok((build_report(&log, scenario), log))
}

/// Simulates one scenario and writes `report.csv`, `report.json`,
/// `steps.csv`, `events.json` and `container.obj` under `config.out`.
pub fn cmd_run(dir: &Path, config: &RunConfig) -> Result<SafetyReport, CommandError> {
    let scenario = config.load(dir)?;
    let (report, log) = simulate(&scenario, config.seed)?;
    let out = &config.out;
    write(&out.join("report.csv"), report.to_csv())?;
    write(&out.join("report.json"), pretty(&report))?;
    write(&out.join("steps.csv"), log.steps_csv())?;
    write(&out.join("events.json"), pretty(&log.events_json()))?;
    let obj = out.join("container.obj");
    if let Err(e) = mesh_export(&log.shape, 36, &obj) {
        log::warn!("{}: no mesh written: {e}", scenario.id);
    }
    Ok(report)
}

/// Scenario directories matched by `pattern`, sorted.
pub fn match_scenarios(pattern: &str) -> Result<Vec<PathBuf>, CommandError> {
    let paths = glob::glob(pattern)
        .map_err(|e| CommandError::Input(format!("bad pattern `{pattern}`: {e}")))?;
    let mut dirs: Vec<PathBuf> = paths
        .filter_map(Result::ok)
        .filter(|p| p.join(SCENARIO_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CommandError::Input(format!(
            "no scenario directory matches `{pattern}`"
        )));
    }
    Ok(dirs)
}

/// Worker count from [`THREADS_ENV`]; unset means no cap.
pub fn thread_cap() -> Result<Option<usize>, CommandError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(CommandError::Input(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        ))),
    }
}

/// Simulates every matched scenario and writes `runs.csv`, one
/// `matrix_<metric>.csv` per score and `runs/<scenario>.json`.
/// Run `i` in sorted order uses seed `config.seed + i`.
pub fn cmd_batch(
    pattern: &str,
    config: &RunConfig,
    threads: Option<usize>,
) -> Result<Vec<SafetyReport>, CommandError> {
    let dirs = match_scenarios(pattern)?;
    let scenarios = dirs
        .iter()
        .map(|d| config.load(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CommandError::Input(format!("thread pool: {e}")))?;
    let results: Vec<Result<SafetyReport, CommandError>> = pool.install(|| {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(i, s)| simulate(s, config.seed.wrapping_add(i as u64)).map(|(r, _)| r))
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut runs = format!("{REPORT_HEADER}\n");
    for r in &reports {
        runs.push_str(&r.csv_row());
        runs.push('\n');
        write(
            &config.out.join("runs").join(format!("{}.json", r.scenario)),
            pretty(r),
        )?;
    }
    write(&config.out.join("runs.csv"), runs)?;
    for (metric, csv) in score_matrices(&reports) {
        write(&config.out.join(format!("matrix_{metric}.csv")), csv)?;
    }
    Ok(reports)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct OracleOutcome {
    /// Per-frame diffs for a scenario check.
    pub frames: Vec<OracleDiff>,
    pub fuzz: Option<FuzzSummary>,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.frames.iter().all(OracleDiff::passed)
            && self.fuzz.as_ref().is_none_or(|f| f.failures.is_empty())
    }

    pub fn checked(&self) -> usize {
        self.frames.len() + self.fuzz.as_ref().map_or(0, |f| f.scenes)
    }
}

/// Options for the oracle check.
#[derive(Debug, Clone, Default)]
pub struct OracleConfig {
    pub seed: u64,
    pub fuzz: Option<usize>,
    /// Added to the margin of the analytic computation only.
    pub margin_error: f64,
    pub out: Option<PathBuf>,
}

/// Cross-checks the safe region of every frame of `dir` and of `fuzz`
/// random scenes. Fails with [`CommandError::OracleMismatch`] on any
/// disagreement beyond the grid resolution.
pub fn cmd_oracle(
    dir: Option<&Path>,
    config: &OracleConfig,
    run: &RunConfig,
) -> Result<OracleOutcome, CommandError> {
    if dir.is_none() && config.fuzz.is_none() {
        return Err(CommandError::Input(
            "give a scenario directory or --fuzz <n>".into(),
        ));
    }
    let frames = match dir {
        Some(d) => {
            let scenario = run.load(d)?;
            scenario_scenes(&scenario)
                .map_err(|e| CommandError::Simulation {
                    scenario: scenario.id.clone(),
                    source: e.into(),
                })?
                .iter()
                .map(|s| check_scene(s, config.margin_error))
                .collect()
        }
        None => Vec::new(),
    };
    let outcome = OracleOutcome {
        frames,
        fuzz: config
            .fuzz
            .map(|n| fuzz(n, config.seed, config.margin_error)),
    };
    if let Some(out) = &config.out {
        write(&out.join("oracle.json"), pretty(&outcome))?;
    }
    if outcome.passed() {
        return Ok(outcome);
    }
    let first = outcome
        .frames
        .iter()
        .enumerate()
        .find(|(_, d)| !d.passed())
        .map(|(i, d)| format!("frame {i}: {}", describe(d)))
        .or_else(|| {
            let f = outcome.fuzz.as_ref()?.failures.first()?;
            Some(format!("random scene {}: {}", f.0, describe(&f.1)))
        })
        .unwrap_or_default();
    Err(CommandError::OracleMismatch(first))
}

fn describe(d: &OracleDiff) -> String {
    let fmt = |v: &[crate::grasp::Interval]| {
        v.iter()
            .map(|i| format!("[{:.3}, {:.3}]", i.lo, i.hi))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "analytic {} vs grid {}; {} grid heights differ",
        fmt(&d.analytic),
        fmt(&d.grid),
        d.mismatched_heights.len()
    )
}

/// Sharpness values of the human-safety curve family.
pub const CURVE_SHARPNESS: [f64; 4] = [0.5, 0.7, 0.9, 0.995];

/// Writes `psi_h_curves.csv` (score against hand clearance) and
/// `psi_f_curves.csv` (score against relative force error) for each
/// sharpness value.
pub fn cmd_export_curves(out: &Path, base: &SafetyParams) -> Result<(), CommandError> {
    let mut psi_h = String::from("c,l_mm,psi_h\n");
    let mut psi_f = String::from("c,relative_error,psi_f\n");
    for c in CURVE_SHARPNESS {
        let p = SafetyParams { c, ..*base };
        for i in 0..=120 {
            let l = i as f64 * 3.0 * p.safety_distance / 120.0;
            psi_h.push_str(&format!("{c},{l:.4},{:.9}\n", human_safety(l, &p)));
        }
        for i in 0..=200 {
            let e = i as f64 / 100.0;
            psi_f.push_str(&format!(
                "{c},{e:.2},{:.9}\n",
                object_safety(1.0 + e, 1.0, &p).value
            ));
        }
    }
    write(&out.join("psi_h_curves.csv"), psi_h)?;
    write(&out.join("psi_f_curves.csv"), psi_f)
}
