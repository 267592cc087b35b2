//! Synthetic arm trajectories: smooth wrist paths, an elbow placed on the
//! swivel circle by a lagged policy, and shoulder-relative EE/elbow poses
//! windowed into training samples.
//!
//! Generation happens in the chain's base frame (x forward, y left, z up, arm
//! hanging along -z); stored poses are relative to the chain's shoulder
//! frame. Left-arm trajectories are the y-mirror of right-arm ones.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{ChainError, Frame, KinematicChain};
use crate::liegroup::{Pose, UnitQuaternion};

pub const CSV_HEADER: &str = "traj_id,arm,t,ee_px,ee_py,ee_pz,ee_qw,ee_qx,ee_qy,ee_qz,el_px,el_py,el_pz,el_qw,el_qx,el_qy,el_qz";
const CSV_FIELDS: usize = 17;
const MAX_REGENERATIONS: usize = 100;
/// Relative tolerance on consecutive timestamps in imported files.
const DT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("could not generate a reachable trajectory after {attempts} attempts: {reason}")]
    UnreachableGeometry { attempts: usize, reason: String },
    #[error("invalid generation settings: {0}")]
    InvalidConfig(String),
    #[error("parse error at row {row}, column {column}: {msg}")]
    Parse {
        row: usize,
        column: usize,
        msg: String,
    },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Left => "left",
            Arm::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s {
            "left" => Some(Arm::Left),
            "right" => Some(Arm::Right),
            _ => None,
        }
    }
}

/// Reflection through the x-z plane, applied to a pose as `M T M`.
pub fn mirror_pose(p: &Pose) -> Pose {
    let q = p.rotation;
    Pose::new(
        UnitQuaternion::new(q.w(), -q.x(), q.y(), -q.z()),
        Vector3::new(p.translation.x, -p.translation.y, p.translation.z),
    )
}

/// Segment lengths and the shoulder frame in the base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmGeometry {
    pub upper_arm: f64,
    pub forearm: f64,
    pub hand: f64,
    pub shoulder: Pose,
}

impl ArmGeometry {
    /// Reads lengths from the zero configuration. The shoulder frame must
    /// not move with the joints.
    pub fn from_chain(chain: &KinematicChain) -> Result<Self, ChainError> {
        if chain.attachment(Frame::Shoulder)?.joint.is_some() {
            return Err(ChainError::Validation(
                "shoulder frame must be attached to the base".into(),
            ));
        }
        let [shoulder, elbow, wrist, _] = chain.fk_all(&chain.zero_config())?;
        Ok(Self {
            upper_arm: (elbow.translation - shoulder.translation).norm(),
            forearm: (wrist.translation - elbow.translation).norm(),
            hand: chain.hand_length()?,
            shoulder,
        })
    }

    pub fn reference() -> Self {
        Self::from_chain(&KinematicChain::reference_arm()).expect("reference chain")
    }
}

/// Swivel angle as a lagged affine function of the wrist position.
#[derive(Debug, Clone, PartialEq)]
pub struct SwivelPolicy {
    /// Radians.
    pub base_angle: f64,
    /// Maps the wrist position divided by the arm reach to radians.
    pub gain: [f64; 3],
    /// First-order lag time constant, seconds. Zero means no lag.
    pub tau: f64,
    /// Half-width of a uniform per-trajectory offset on `base_angle`.
    pub base_jitter: f64,
}

impl Default for SwivelPolicy {
    fn default() -> Self {
        Self {
            base_angle: -0.35,
            gain: [0.4, 0.5, -0.8],
            tau: 0.25,
            base_jitter: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmSelection {
    Right,
    Left,
    /// Even trajectory indices are right arms, odd ones left.
    Alternate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub n_traj: usize,
    /// Seconds.
    pub duration: f64,
    /// Seconds.
    pub dt: f64,
    pub policy: SwivelPolicy,
    pub geometry: ArmGeometry,
    pub arms: ArmSelection,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_traj: 20,
            duration: 5.0,
            dt: 0.02,
            policy: SwivelPolicy::default(),
            geometry: ArmGeometry::reference(),
            arms: ArmSelection::Alternate,
        }
    }
}

impl GenConfig {
    pub fn frames_per_trajectory(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    /// Seconds.
    pub t: f64,
    pub ee: Pose,
    pub elbow: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub arm: Arm,
    pub dt: f64,
    pub frames: Vec<TrajectoryFrame>,
}

impl Trajectory {
    /// The trajectory expressed as a right arm.
    pub fn as_right_arm(&self) -> Trajectory {
        match self.arm {
            Arm::Right => self.clone(),
            Arm::Left => self.mirrored(),
        }
    }

    /// Mirror image with the arm label swapped.
    pub fn mirrored(&self) -> Trajectory {
        Trajectory {
            id: self.id.clone(),
            arm: match self.arm {
                Arm::Left => Arm::Right,
                Arm::Right => Arm::Left,
            },
            dt: self.dt,
            frames: self
                .frames
                .iter()
                .map(|f| TrajectoryFrame {
                    t: f.t,
                    ee: mirror_pose(&f.ee),
                    elbow: mirror_pose(&f.elbow),
                })
                .collect(),
        }
    }
}

/// `(shoulder^-1 elbow, shoulder^-1 ee)`.
pub fn extract_relative(shoulder: &Pose, elbow: &Pose, ee: &Pose) -> (Pose, Pose) {
    let inv = shoulder.inverse();
    (inv.compose(elbow), inv.compose(ee))
}

/// Sum of sinusoids scaled to stay inside `[lo, hi]`.
#[derive(Debug, Clone)]
struct Channel {
    center: f64,
    half: f64,
    terms: Vec<(f64, f64, f64)>,
}

impl Channel {
    const TERMS: usize = 3;

    fn random(rng: &mut impl Rng, lo: f64, hi: f64, min_hz: f64, max_hz: f64) -> Self {
        let full = 0.5 * (hi - lo);
        let half = full * rng.gen_range(0.3..=1.0);
        let center = rng.gen_range(lo + half..=hi - half);
        let terms = (0..Self::TERMS)
            .map(|_| {
                (
                    rng.gen_range(0.2..=1.0),
                    std::f64::consts::TAU * rng.gen_range(min_hz..=max_hz),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self {
            center,
            half,
            terms,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let total: f64 = self.terms.iter().map(|(a, _, _)| a).sum();
        let s: f64 = self
            .terms
            .iter()
            .map(|(a, w, p)| a * (w * t + p).sin())
            .sum();
        self.center + self.half * s / total
    }
}

/// Polar angle of the wrist from straight down, radians.
const WRIST_POLAR: (f64, f64) = (0.45, 1.6);
/// Azimuth of the wrist from straight ahead toward the left, radians (right arm).
const WRIST_AZIMUTH: (f64, f64) = (-1.2, 0.5);
/// Wrist distance as fractions between the smallest and largest reach.
const WRIST_REACH: (f64, f64) = (0.34, 0.86);
/// Smooth wrist rotation about the forearm z, y and x axes, radians.
const HAND_ANGLES: [(f64, f64); 3] = [(-0.6, 0.6), (-0.5, 0.5), (-0.3, 0.3)];
const MIN_HZ: f64 = 0.05;
const MAX_HZ: f64 = 0.4;
/// Smallest allowed sine between the shoulder-wrist axis and the vertical.
const MIN_AXIS_SINE: f64 = 0.1;

/// Unit vectors spanning the plane normal to `axis`, the first one being the
/// projection of straight down.
pub fn swivel_basis(axis: &Vector3<f64>) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let down = -Vector3::z();
    let proj = down - axis * axis.dot(&down);
    let n = proj.norm();
    if n < MIN_AXIS_SINE {
        return None;
    }
    let e1 = proj / n;
    Some((e1, axis.cross(&e1)))
}

/// Swivel angle of `elbow` about the shoulder-wrist axis, measured from the
/// downward direction. Positions are relative to the shoulder center.
pub fn swivel_angle(elbow: &Vector3<f64>, wrist: &Vector3<f64>) -> Option<f64> {
    let axis = wrist.normalize();
    let (e1, e2) = swivel_basis(&axis)?;
    let radial = elbow - axis * axis.dot(elbow);
    Some(radial.dot(&e2).atan2(radial.dot(&e1)))
}

/// Elbow frame: z along the forearm, y along `upper x forearm`, x in the arm
/// plane.
pub fn elbow_rotation(elbow: &Vector3<f64>, wrist: &Vector3<f64>) -> Option<UnitQuaternion> {
    let z = (wrist - elbow).try_normalize(1e-12)?;
    let y = elbow.cross(&z).try_normalize(1e-12)?;
    let x = y.cross(&z);
    Some(UnitQuaternion::from_matrix(&Matrix3::from_columns(&[x, y, z])))
}

fn generate_right(
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Pose, Pose)>, String> {
    let g = &cfg.geometry;
    let (a, b) = (g.upper_arm, g.forearm);
    let min_reach = (a - b).abs();
    let span = a + b - min_reach;
    let reach = (
        min_reach + WRIST_REACH.0 * span,
        min_reach + WRIST_REACH.1 * span,
    );
    let rho = Channel::random(rng, reach.0, reach.1, MIN_HZ, MAX_HZ);
    let polar = Channel::random(rng, WRIST_POLAR.0, WRIST_POLAR.1, MIN_HZ, MAX_HZ);
    let azimuth = Channel::random(rng, WRIST_AZIMUTH.0, WRIST_AZIMUTH.1, MIN_HZ, MAX_HZ);
    let hand: Vec<Channel> = HAND_ANGLES
        .iter()
        .map(|&(lo, hi)| Channel::random(rng, lo, hi, MIN_HZ, MAX_HZ))
        .collect();
    let p = &cfg.policy;
    let base = p.base_angle
        + if p.base_jitter > 0.0 {
            rng.gen_range(-p.base_jitter..=p.base_jitter)
        } else {
            0.0
        };
    let alpha = if p.tau > 0.0 {
        1.0 - (-cfg.dt / p.tau).exp()
    } else {
        1.0
    };
    let origin = g.shoulder.translation;
    let n = cfg.frames_per_trajectory();
    let mut out = Vec::with_capacity(n);
    let mut swivel = None;
    for k in 0..n {
        let t = k as f64 * cfg.dt;
        let (r, th, ph) = (rho.eval(t), polar.eval(t), azimuth.eval(t));
        let wrist = r * Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), -th.cos());
        let axis = wrist / r;
        let (e1, e2) = swivel_basis(&axis).ok_or("shoulder-wrist axis is vertical")?;
        let goal = base
            + (0..3)
                .map(|i| p.gain[i] * wrist[i] / (a + b))
                .sum::<f64>();
        let phi = match swivel {
            None => goal,
            Some(prev) => prev + alpha * (goal - prev),
        };
        swivel = Some(phi);
        let d = (a * a - b * b + r * r) / (2.0 * r);
        let radius = (a * a - d * d).max(0.0).sqrt();
        let elbow = axis * d + radius * (phi.cos() * e1 + phi.sin() * e2);
        let el_rot = elbow_rotation(&elbow, &wrist).ok_or("degenerate elbow frame")?;
        let wrist_rot = UnitQuaternion::from_axis_angle(&Vector3::z(), hand[0].eval(t))
            .mul(&UnitQuaternion::from_axis_angle(&Vector3::y(), hand[1].eval(t)))
            .mul(&UnitQuaternion::from_axis_angle(&Vector3::x(), hand[2].eval(t)));
        let ee_rot = el_rot.mul(&wrist_rot);
        let ee = wrist + ee_rot.rotate(&Vector3::new(0.0, 0.0, g.hand));
        let world_elbow = Pose::new(el_rot, elbow + origin);
        let world_ee = Pose::new(ee_rot, ee + origin);
        out.push(extract_relative(&g.shoulder, &world_elbow, &world_ee));
    }
    Ok(out)
}

/// Elbow-on-sphere and reach checks from the frame invariants.
pub fn check_frame(frame: &TrajectoryFrame, geometry: &ArmGeometry) -> Result<(), String> {
    let elbow = frame.elbow.translation;
    let ee = frame.ee.translation;
    let on_sphere = (elbow.norm() - geometry.upper_arm).abs();
    if on_sphere > 1e-6 {
        return Err(format!("elbow is {on_sphere:e} m off the shoulder sphere"));
    }
    if (ee - elbow).norm() > geometry.forearm + geometry.hand + 1e-6 {
        return Err("EE is out of reach of the elbow".into());
    }
    Ok(())
}

fn arm_for(cfg: &GenConfig, index: usize) -> Arm {
    match cfg.arms {
        ArmSelection::Right => Arm::Right,
        ArmSelection::Left => Arm::Left,
        ArmSelection::Alternate if index.is_multiple_of(2) => Arm::Right,
        ArmSelection::Alternate => Arm::Left,
    }
}

fn generate_one(cfg: &GenConfig, index: usize) -> Result<Trajectory, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut reason = String::new();
    for _ in 0..MAX_REGENERATIONS {
        match generate_right(cfg, &mut rng) {
            Ok(poses) => {
                let frames: Vec<TrajectoryFrame> = poses
                    .into_iter()
                    .enumerate()
                    .map(|(k, (elbow, ee))| TrajectoryFrame {
                        t: k as f64 * cfg.dt,
                        ee,
                        elbow,
                    })
                    .collect();
                if let Some(e) = frames
                    .iter()
                    .find_map(|f| check_frame(f, &cfg.geometry).err())
                {
                    reason = e;
                    continue;
                }
                let traj = Trajectory {
                    id: format!("traj_{index:04}"),
                    arm: Arm::Right,
                    dt: cfg.dt,
                    frames,
                };
                return Ok(match arm_for(cfg, index) {
                    Arm::Right => traj,
                    Arm::Left => traj.mirrored(),
                });
            }
            Err(e) => reason = e,
        }
    }
    Err(DatagenError::UnreachableGeometry {
        attempts: MAX_REGENERATIONS,
        reason,
    })
}

/// Generates `cfg.n_traj` trajectories. Each trajectory draws from its own
/// random stream of the master seed, so the result does not depend on
/// thread scheduling.
pub fn generate(cfg: &GenConfig) -> Result<Vec<Trajectory>, DatagenError> {
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
        return Err(DatagenError::InvalidConfig(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.duration >= cfg.dt) || !cfg.duration.is_finite() {
        return Err(DatagenError::InvalidConfig(format!(
            "duration {} is shorter than dt {}",
            cfg.duration, cfg.dt
        )));
    }
    let g = &cfg.geometry;
    if !(g.upper_arm > 0.0 && g.forearm > 0.0 && g.hand >= 0.0) {
        return Err(DatagenError::InvalidConfig("segment lengths must be positive".into()));
    }
    (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| generate_one(cfg, i))
        .collect()
}

/// Flat 7-vector `[px, py, pz, qw, qx, qy, qz]` with `qw >= 0`.
pub fn pose_to_vec7(p: &Pose) -> [f64; 7] {
    let q = p.rotation.to_array();
    [
        p.translation.x,
        p.translation.y,
        p.translation.z,
        q[0],
        q[1],
        q[2],
        q[3],
    ]
}

/// Inverse of [`pose_to_vec7`]; the quaternion block is renormalized.
pub fn vec7_to_pose(v: &[f64]) -> Pose {
    Pose::new(
        UnitQuaternion::new(v[3], v[4], v[5], v[6]),
        Vector3::new(v[0], v[1], v[2]),
    )
}

/// Values per history frame: EE then elbow 7-vectors.
pub const FRAME_DIM: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    /// Index of the source trajectory in the dataset.
    pub traj: usize,
    /// Frame index of the target within the trajectory.
    pub index: usize,
    /// `T` frames of `[ee; elbow]`, oldest first.
    pub history: Vec<f64>,
    pub target_ee: [f64; 7],
    pub label_elbow: [f64; 7],
}

impl SampleWindow {
    pub fn history_len(&self) -> usize {
        self.history.len() / FRAME_DIM
    }
}

/// History buffer for one frame.
pub fn frame_vec(frame: &TrajectoryFrame) -> [f64; FRAME_DIM] {
    let mut out = [0.0; FRAME_DIM];
    out[..7].copy_from_slice(&pose_to_vec7(&frame.ee));
    out[7..].copy_from_slice(&pose_to_vec7(&frame.elbow));
    out
}

/// Windows of `t_hist` frames followed by a target frame, expressed as right
/// arms. Windows never span two trajectories.
pub fn window(dataset: &[Trajectory], t_hist: usize) -> Vec<SampleWindow> {
    let mut out = Vec::new();
    for (ti, traj) in dataset.iter().enumerate() {
        let traj = traj.as_right_arm();
        let vecs: Vec<[f64; FRAME_DIM]> = traj.frames.iter().map(frame_vec).collect();
        for i in t_hist..traj.frames.len() {
            let history = vecs[i - t_hist..i].iter().flatten().copied().collect();
            let target = &vecs[i];
            let mut target_ee = [0.0; 7];
            let mut label_elbow = [0.0; 7];
            target_ee.copy_from_slice(&target[..7]);
            label_elbow.copy_from_slice(&target[7..]);
            out.push(SampleWindow {
                traj: ti,
                index: i,
                history,
                target_ee,
                label_elbow,
            });
        }
    }
    out
}

/// Writes the trajectory CSV. Numbers use the shortest representation that
/// reads back to the same `f64`.
pub fn write_csv(mut w: impl Write, dataset: &[Trajectory]) -> Result<(), DatagenError> {
    let mut buf = String::with_capacity(256);
    writeln!(w, "{CSV_HEADER}")?;
    for traj in dataset {
        for f in &traj.frames {
            buf.clear();
            write!(buf, "{},{},{}", traj.id, traj.arm.as_str(), f.t).unwrap();
            for v in pose_to_vec7(&f.ee).iter().chain(pose_to_vec7(&f.elbow).iter()) {
                write!(buf, ",{v}").unwrap();
            }
            writeln!(w, "{buf}")?;
        }
    }
    Ok(())
}

pub fn export_csv(path: impl AsRef<Path>, dataset: &[Trajectory]) -> Result<(), DatagenError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

fn parse_error(row: usize, column: usize, msg: impl Into<String>) -> DatagenError {
    DatagenError::Parse {
        row,
        column,
        msg: msg.into(),
    }
}

fn parse_pose(fields: &[&str], first: usize, row: usize) -> Result<Pose, DatagenError> {
    let mut v = [0.0f64; 7];
    for (k, slot) in v.iter_mut().enumerate() {
        let s = fields[first + k];
        *slot = s
            .trim()
            .parse()
            .map_err(|_| parse_error(row, first + k + 1, format!("`{s}` is not a number")))?;
        if !slot.is_finite() {
            return Err(parse_error(row, first + k + 1, "value is not finite"));
        }
    }
    let q = UnitQuaternion::try_from_unit(v[3], v[4], v[5], v[6], 1e-6)
        .map_err(|e| parse_error(row, first + 4, e.to_string()))?;
    Ok(Pose::new(q, Vector3::new(v[0], v[1], v[2])))
}

/// Reads the trajectory CSV. Rows of one trajectory must be contiguous and
/// evenly spaced in time. Rows are numbered from 1 at the header.
pub fn read_csv(r: impl Read) -> Result<Vec<Trajectory>, DatagenError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r);
    let mut out: Vec<Trajectory> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(row, 0, e.to_string()))?;
        let fields: Vec<&str> = record.iter().collect();
        if row == 1 {
            if fields.join(",") != CSV_HEADER {
                return Err(parse_error(row, 1, "unexpected header"));
            }
            continue;
        }
        if fields.len() != CSV_FIELDS {
            return Err(parse_error(
                row,
                fields.len().min(CSV_FIELDS) + 1,
                format!("expected {CSV_FIELDS} fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].to_string();
        let arm = Arm::parse(fields[1])
            .ok_or_else(|| parse_error(row, 2, format!("unknown arm `{}`", fields[1])))?;
        let t: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_error(row, 3, format!("`{}` is not a number", fields[2])))?;
        let frame = TrajectoryFrame {
            t,
            ee: parse_pose(&fields, 3, row)?,
            elbow: parse_pose(&fields, 10, row)?,
        };
        let continues = out.last().is_some_and(|l| l.id == id);
        if !continues {
            if !seen.insert(id.clone()) {
                return Err(parse_error(row, 1, format!("rows of `{id}` are not contiguous")));
            }
            out.push(Trajectory {
                id,
                arm,
                dt: 0.0,
                frames: vec![frame],
            });
            continue;
        }
        let traj = out.last_mut().unwrap();
        if traj.arm != arm {
            return Err(parse_error(row, 2, "arm changes within a trajectory"));
        }
        let step = frame.t - traj.frames.last().unwrap().t;
        if traj.frames.len() == 1 {
            if !(step > 0.0) {
                return Err(parse_error(row, 3, "time does not increase"));
            }
            traj.dt = step;
        } else if (step - traj.dt).abs() > DT_TOLERANCE * traj.dt.max(1.0) {
            return Err(parse_error(
                row,
                3,
                format!("non-uniform time step {step} (expected {})", traj.dt),
            ));
        }
        traj.frames.push(frame);
    }
    Ok(out)
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, DatagenError> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::geodesic_angle;

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            seed,
            n_traj: 6,
            duration: 2.0,
            ..GenConfig::default()
        }
    }

    #[test]
    fn reference_geometry() {
        let g = ArmGeometry::reference();
        assert!((g.upper_arm - 0.30).abs() < 1e-12);
        assert!((g.forearm - 0.25).abs() < 1e-12);
        assert!((g.hand - 0.10).abs() < 1e-12);
    }

    #[test]
    fn frame_count_and_arms() {
        let data = generate(&small(1)).unwrap();
        assert_eq!(data.len(), 6);
        for (i, t) in data.iter().enumerate() {
            assert_eq!(t.frames.len(), 101);
            assert_eq!(t.arm, if i % 2 == 0 { Arm::Right } else { Arm::Left });
        }
    }

    #[test]
    fn generated_frames_satisfy_invariants() {
        let cfg = small(2);
        for traj in generate(&cfg).unwrap() {
            for f in &traj.as_right_arm().frames {
                check_frame(f, &cfg.geometry).unwrap();
            }
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a, b);
        let mut cfg = small(3);
        cfg.n_traj = 3;
        let c = generate(&cfg).unwrap();
        assert_eq!(&a[..3], &c[..]);
        assert_ne!(a, generate(&small(4)).unwrap());
    }

    #[test]
    fn zero_gain_without_jitter_keeps_swivel_constant() {
        let mut cfg = small(5);
        cfg.policy = SwivelPolicy {
            base_angle: -0.3,
            gain: [0.0; 3],
            tau: 0.25,
            base_jitter: 0.0,
        };
        let g = cfg.geometry.clone();
        for traj in generate(&cfg).unwrap() {
            for f in &traj.as_right_arm().frames {
                let world_elbow = g.shoulder.compose(&f.elbow).translation - g.shoulder.translation;
                let world_ee = g.shoulder.compose(&f.ee);
                let wrist = world_ee.translation
                    - world_ee.rotation.rotate(&Vector3::new(0.0, 0.0, g.hand))
                    - g.shoulder.translation;
                let phi = swivel_angle(&world_elbow, &wrist).unwrap();
                assert!((phi + 0.3).abs() < 1e-9, "swivel {phi}");
            }
        }
    }

    #[test]
    fn elbow_frame_convention() {
        let g = ArmGeometry::reference();
        let data = generate(&small(6)).unwrap();
        let f = &data[0].frames[10];
        let elbow = g.shoulder.compose(&f.elbow);
        let ee = g.shoulder.compose(&f.ee);
        let wrist = ee.translation - ee.rotation.rotate(&Vector3::new(0.0, 0.0, g.hand));
        let upper = elbow.translation - g.shoulder.translation;
        let fore = wrist - elbow.translation;
        assert!((fore.norm() - g.forearm).abs() < 1e-9);
        let r = elbow.rotation.to_matrix();
        assert!((r.column(2) - fore.normalize()).norm() < 1e-9);
        assert!((r.column(1) - upper.cross(&fore).normalize()).norm() < 1e-9);
    }

    #[test]
    fn mirror_is_an_involution_and_preserves_distances() {
        let data = generate(&small(7)).unwrap();
        let t = &data[0];
        let back = t.mirrored().mirrored();
        for (a, b) in t.frames.iter().zip(&back.frames) {
            assert!((a.ee.translation - b.ee.translation).norm() < 1e-12);
            assert!(geodesic_angle(&a.ee.rotation, &b.ee.rotation) < 1e-9);
            assert!(geodesic_angle(&a.elbow.rotation, &b.elbow.rotation) < 1e-9);
        }
        let m = t.mirrored();
        let d0 = (t.frames[3].ee.translation - t.frames[3].elbow.translation).norm();
        let d1 = (m.frames[3].ee.translation - m.frames[3].elbow.translation).norm();
        assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn mirror_matches_matrix_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        let p = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::new(0.3, -0.5, 0.8).normalize(), 1.1),
            Vector3::new(0.1, 0.2, -0.3),
        );
        let got = mirror_pose(&p);
        let want = m * p.rotation.to_matrix() * m;
        assert!((got.rotation.to_matrix() - want).amax() < 1e-12);
        assert!((got.translation - m * p.translation).norm() < 1e-15);
    }

    #[test]
    fn extract_relative_trivial_cases() {
        let e = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::x(), 0.4),
            Vector3::new(0.1, 0.0, -0.2),
        );
        let x = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::y(), -0.7),
            Vector3::new(0.3, 0.1, 0.0),
        );
        let (el, ee) = extract_relative(&Pose::identity(), &e, &x);
        assert_eq!(el, e);
        assert_eq!(ee, x);
        let (el, _) = extract_relative(&e, &e, &x);
        assert!(el.translation.norm() < 1e-15);
        assert!(el.rotation.angle() < 1e-12);
    }

    #[test]
    fn window_counts() {
        let data = generate(&small(8)).unwrap();
        let mut one = data[0].clone();
        one.frames.truncate(6);
        assert_eq!(window(std::slice::from_ref(&one), 5).len(), 1);
        one.frames.truncate(5);
        assert!(window(std::slice::from_ref(&one), 5).is_empty());
        let w = window(&data, 5);
        assert_eq!(w.len(), data.iter().map(|t| t.frames.len() - 5).sum::<usize>());
    }

    #[test]
    fn window_contents_follow_frames() {
        let data = generate(&small(9)).unwrap();
        let w = window(&data[..1], 3);
        let s = &w[4];
        assert_eq!(s.index, 7);
        assert_eq!(s.history_len(), 3);
        assert_eq!(&s.history[..FRAME_DIM], &frame_vec(&data[0].frames[4])[..]);
        assert_eq!(s.target_ee, pose_to_vec7(&data[0].frames[7].ee));
        assert_eq!(s.label_elbow, pose_to_vec7(&data[0].frames[7].elbow));
    }

    #[test]
    fn left_arm_windows_use_the_right_arm_convention() {
        let data = generate(&small(10)).unwrap();
        assert_eq!(data[1].arm, Arm::Left);
        let w = window(&data[1..2], 2);
        let right = data[1].mirrored();
        assert_eq!(w[0].label_elbow, pose_to_vec7(&right.frames[2].elbow));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let data = generate(&small(11)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &data).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), data.len());
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.arm, b.arm);
            assert_eq!(a.frames, b.frames);
        }
    }

    #[test]
    fn csv_short_row_names_the_row() {
        let data = generate(&small(12)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &data[..1]).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let short: Vec<&str> = lines[3].split(',').take(15).collect();
        let mut rebuilt: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        rebuilt[3] = short.join(",");
        text = rebuilt.join("\n");
        match read_csv(text.as_bytes()) {
            Err(DatagenError::Parse { row, .. }) => assert_eq!(row, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_uneven_time_steps() {
        let mut data = generate(&small(13)).unwrap();
        data.truncate(1);
        data[0].frames[5].t += 0.001;
        let mut buf = Vec::new();
        write_csv(&mut buf, &data).unwrap();
        assert!(matches!(read_csv(&buf[..]), Err(DatagenError::Parse { row: 7, .. })));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut cfg = small(1);
        cfg.dt = 0.0;
        assert!(matches!(generate(&cfg), Err(DatagenError::InvalidConfig(_))));
        let mut cfg = small(1);
        cfg.duration = 0.001;
        assert!(matches!(generate(&cfg), Err(DatagenError::InvalidConfig(_))));
    }
}
