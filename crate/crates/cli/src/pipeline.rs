//! Streaming per-arm solving: elbow prediction followed by a warm-started
//! LM step, one frame at a time.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use hlik_core::chain::{JointConfig, KinematicChain};
use hlik_core::datagen::{ArmGeometry, Trajectory, TrajectoryFrame};
use hlik_core::fista::{HistoryBuffer, Model};
use hlik_core::ik::{LambdaPolicy, ResidualWeights, SolveReport, SolverConfig, TrajectorySolver};
use hlik_core::liegroup::{Pose, UnitQuaternion};
use hlik_core::metrics::StepSnapshot;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Baseline,
    Hlik,
}

impl SolveMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveMode::Baseline => "baseline",
            SolveMode::Hlik => "hlik",
        }
    }
}

impl FromStr for SolveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(SolveMode::Baseline),
            "hlik" => Ok(SolveMode::Hlik),
            _ => Err(format!("unknown mode `{s}` (baseline, hlik)")),
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the network's EE/elbow history comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryMode {
    /// Forward kinematics of the robot's own previous solutions. The first
    /// frame of the reference seeds the buffer.
    ClosedLoop,
    /// The recorded reference EE and elbow poses.
    Reference,
}

impl HistoryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            HistoryMode::ClosedLoop => "closed-loop",
            HistoryMode::Reference => "reference",
        }
    }
}

impl FromStr for HistoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed-loop" => Ok(HistoryMode::ClosedLoop),
            "reference" => Ok(HistoryMode::Reference),
            _ => Err(format!("unknown history mode `{s}` (closed-loop, reference)")),
        }
    }
}

impl fmt::Display for HistoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub mode: SolveMode,
    pub history: HistoryMode,
    pub lambda: LambdaPolicy,
    pub weights: ResidualWeights,
    pub cold: SolverConfig,
    pub warm: SolverConfig,
}

impl SolveSettings {
    pub fn new(mode: SolveMode) -> Self {
        Self {
            mode,
            history: HistoryMode::ClosedLoop,
            lambda: LambdaPolicy::default(),
            weights: ResidualWeights::default(),
            cold: SolverConfig::cold_start(),
            warm: SolverConfig::warm_start(),
        }
    }

    pub fn with_history(mut self, history: HistoryMode) -> Self {
        self.history = history;
        self
    }

    pub fn with_lambda(mut self, lambda: LambdaPolicy) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Reference keypoints of a frame given in shoulder coordinates.
pub fn reference_snapshot(geometry: &ArmGeometry, frame: &TrajectoryFrame) -> StepSnapshot {
    let elbow = geometry.shoulder.compose(&frame.elbow);
    let ee = geometry.shoulder.compose(&frame.ee);
    StepSnapshot {
        shoulder: geometry.shoulder.translation,
        elbow: elbow.translation,
        wrist: ee.translation - ee.rotation.rotate(&Vector3::new(0.0, 0.0, geometry.hand)),
        ee: ee.translation,
        ee_rotation: ee.rotation,
    }
}

/// Keypoints of the chain at `q`.
pub fn solved_snapshot(chain: &KinematicChain, q: &JointConfig) -> CliResult<StepSnapshot> {
    let [shoulder, elbow, wrist, ee] = chain.fk_all(q)?;
    Ok(StepSnapshot {
        shoulder: shoulder.translation,
        elbow: elbow.translation,
        wrist: wrist.translation,
        ee: ee.translation,
        ee_rotation: ee.rotation,
    })
}

/// Output of one streamed step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub report: SolveReport,
    /// Predicted elbow in shoulder coordinates (HL-IK only).
    pub predicted_elbow: Option<Pose>,
    /// Network input/output handling and inference.
    pub preprocess: Duration,
    pub ik: Duration,
}

/// Solver state for one right arm.
pub struct ArmStream<'a> {
    chain: &'a KinematicChain,
    geometry: ArmGeometry,
    solver: TrajectorySolver<'a>,
    model: Option<&'a Model>,
    buffer: HistoryBuffer,
    history: HistoryMode,
    shoulder_inv: Pose,
}

impl<'a> ArmStream<'a> {
    pub fn new(
        chain: &'a KinematicChain,
        model: Option<&'a Model>,
        settings: &SolveSettings,
    ) -> CliResult<Self> {
        let hlik = settings.mode == SolveMode::Hlik;
        if hlik && model.is_none() {
            return Err(CliError::usage("hlik mode requires a model"));
        }
        let geometry = ArmGeometry::from_chain(chain)?;
        let cold = settings.cold.clone().with_elbow(hlik).with_lambda(settings.lambda);
        let warm = settings.warm.clone().with_elbow(hlik).with_lambda(settings.lambda);
        let model = if hlik { model } else { None };
        Ok(Self {
            chain,
            shoulder_inv: geometry.shoulder.inverse(),
            geometry,
            solver: TrajectorySolver::new(chain, cold, warm, settings.weights.clone()),
            buffer: HistoryBuffer::new(model.map_or(1, |m| m.history_len())),
            model,
            history: settings.history,
        })
    }

    pub fn geometry(&self) -> &ArmGeometry {
        &self.geometry
    }

    pub fn reset(&mut self) {
        self.solver.reset();
        self.buffer.clear();
    }

    /// Solves for `frame`'s EE target. `frame.elbow` is read only to fill the
    /// history in reference mode and to seed it on the first step.
    pub fn step(&mut self, frame: &TrajectoryFrame) -> CliResult<StepOutput> {
        let start = Instant::now();
        let predicted_elbow = match self.model {
            Some(model) => {
                if self.buffer.is_empty() {
                    self.buffer.push(&frame.ee, &frame.elbow);
                }
                Some(model.predict_elbow(&self.buffer, &frame.ee)?)
            }
            None => None,
        };
        let elbow_target = predicted_elbow.as_ref().map(|e| self.geometry.shoulder.compose(e));
        let preprocess = start.elapsed();

        let start = Instant::now();
        let ee_target = self.geometry.shoulder.compose(&frame.ee);
        let report = self.solver.step(&ee_target, elbow_target.as_ref())?;
        let ik = start.elapsed();

        if self.model.is_some() {
            match self.history {
                HistoryMode::Reference => self.buffer.push(&frame.ee, &frame.elbow),
                HistoryMode::ClosedLoop => {
                    let [_, elbow, _, ee] = self.chain.fk_all(&report.q_star)?;
                    let inv = &self.shoulder_inv;
                    self.buffer.push(&inv.compose(&ee), &inv.compose(&elbow));
                }
            }
        }
        Ok(StepOutput {
            report,
            predicted_elbow,
            preprocess,
            ik,
        })
    }
}

/// One solved frame with everything needed for evaluation.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub q: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub cost: f64,
    pub cost_ee: f64,
    pub cost_elbow: f64,
    pub cost_smooth: f64,
    pub reference: StepSnapshot,
    pub solved: StepSnapshot,
    pub predicted_elbow: Option<Pose>,
}

#[derive(Debug, Clone)]
pub struct SolvedTrajectory {
    pub id: String,
    pub arm: hlik_core::datagen::Arm,
    pub steps: Vec<StepRecord>,
}

/// Solves every frame of `traj` in order. Left arms are mirrored onto the
/// right-arm chain, so all keypoints are in right-arm base coordinates.
pub fn solve_trajectory(
    chain: &KinematicChain,
    model: Option<&Model>,
    settings: &SolveSettings,
    traj: &Trajectory,
) -> CliResult<SolvedTrajectory> {
    let mut stream = ArmStream::new(chain, model, settings)?;
    let right = traj.as_right_arm();
    let mut steps = Vec::with_capacity(right.frames.len());
    for (i, frame) in right.frames.iter().enumerate() {
        let out = stream.step(frame)?;
        let r = &out.report;
        steps.push(StepRecord {
            step: i,
            t: frame.t,
            q: r.q_star.iter().copied().collect(),
            iters: r.iters,
            converged: r.converged,
            cost: r.final_cost,
            cost_ee: r.cost_ee,
            cost_elbow: r.cost_elbow,
            cost_smooth: r.cost_smooth,
            reference: reference_snapshot(stream.geometry(), frame),
            solved: solved_snapshot(chain, &r.q_star)?,
            predicted_elbow: out.predicted_elbow.map(|e| stream.geometry().shoulder.compose(&e)),
        });
    }
    Ok(SolvedTrajectory {
        id: traj.id.clone(),
        arm: traj.arm,
        steps,
    })
}

/// Solves all trajectories, in parallel, keeping dataset order.
pub fn solve_dataset(
    chain: &KinematicChain,
    model: Option<&Model>,
    settings: &SolveSettings,
    dataset: &[Trajectory],
) -> CliResult<Vec<SolvedTrajectory>> {
    dataset
        .par_iter()
        .map(|t| solve_trajectory(chain, model, settings, t))
        .collect()
}

/// Unit quaternion from stored components without renormalizing.
pub(crate) fn quaternion(w: f64, x: f64, y: f64, z: f64) -> CliResult<UnitQuaternion> {
    UnitQuaternion::try_from_unit(w, x, y, z, 1e-6)
        .map_err(|e| CliError::new("E_PARSE", format!("EE quaternion: {e}")))
}
