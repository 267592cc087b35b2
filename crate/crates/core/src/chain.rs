//! Serial kinematic chains: a small text description format, forward
//! kinematics to named frames and geometric frame Jacobians.
//!
//! Chain files are line oriented, `#` starts a comment:
//!
//! ```text
//! chain <name> dof <d>
//! joint <name> axis x y z origin tx ty tz qw qx qy qz limits lo hi
//! frame <shoulder|elbow|wrist|ee> after <joint-name|base> offset tx ty tz qw qx qy qz
//! ```
//!
//! Joint `k` contributes `origin_k * Rot(axis_k, q_k)`; a frame attached
//! after joint `k` is that product times its fixed offset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DVector, Matrix6xX, Vector3};
use thiserror::Error;

use crate::liegroup::{Pose, UnitQuaternion};

/// Joint-space configuration, radians.
pub type JointConfig = DVector<f64>;

/// The bundled reference arm description.
pub const ARM7_CHAIN: &str = include_str!("../fixtures/arm7.chain");

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid chain: {0}")]
    Validation(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("configuration has {got} entries, chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Frame {
    Shoulder,
    Elbow,
    Wrist,
    Ee,
}

impl Frame {
    pub const ALL: [Frame; 4] = [Frame::Shoulder, Frame::Elbow, Frame::Wrist, Frame::Ee];

    pub fn as_str(&self) -> &'static str {
        match self {
            Frame::Shoulder => "shoulder",
            Frame::Elbow => "elbow",
            Frame::Wrist => "wrist",
            Frame::Ee => "ee",
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frame {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shoulder" => Ok(Frame::Shoulder),
            "elbow" => Ok(Frame::Elbow),
            "wrist" => Ok(Frame::Wrist),
            "ee" => Ok(Frame::Ee),
            other => Err(ChainError::UnknownFrame(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    /// Unit rotation axis in the joint's own frame.
    pub axis: Vector3<f64>,
    /// Fixed transform from the parent joint frame.
    pub origin: Pose,
    pub limits: [f64; 2],
}

/// Where a named frame is rigidly attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameAttachment {
    /// `None` attaches to the chain base, before any joint.
    pub joint: Option<usize>,
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    name: String,
    joints: Vec<JointSpec>,
    frames: BTreeMap<Frame, FrameAttachment>,
}

/// Per-joint results of one forward pass.
struct JointFrames {
    /// Joint frame after its rotation.
    poses: Vec<Pose>,
    /// Axis of each joint in base coordinates.
    axes: Vec<Vector3<f64>>,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        frames: BTreeMap<Frame, FrameAttachment>,
    ) -> Result<Self, ChainError> {
        let chain = Self {
            name: name.into(),
            joints,
            frames,
        };
        chain.validate()?;
        Ok(chain)
    }

    /// The bundled 7-DoF anthropomorphic arm.
    pub fn reference_arm() -> Self {
        Self::parse(ARM7_CHAIN).expect("bundled chain is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChainError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ChainError> {
        let mut header: Option<(String, usize, usize)> = None;
        let mut joints = Vec::new();
        let mut pending_frames = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| ChainError::Parse { line: line_no, msg };
            match tokens[0] {
                "chain" => {
                    if header.is_some() {
                        return Err(err("duplicate `chain` header".into()));
                    }
                    if tokens.len() != 4 || tokens[2] != "dof" {
                        return Err(err("expected `chain <name> dof <d>`".into()));
                    }
                    let dof = tokens[3]
                        .parse::<usize>()
                        .map_err(|_| err(format!("field `dof`: bad count `{}`", tokens[3])))?;
                    header = Some((tokens[1].to_string(), dof, line_no));
                }
                "joint" => {
                    if header.is_none() {
                        return Err(err("`joint` before `chain` header".into()));
                    }
                    joints.push(parse_joint(&tokens).map_err(err)?);
                }
                "frame" => {
                    if header.is_none() {
                        return Err(err("`frame` before `chain` header".into()));
                    }
                    pending_frames.push((line_no, parse_frame(&tokens).map_err(err)?));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }

        let Some((name, dof, header_line)) = header else {
            return Err(ChainError::Parse {
                line: 0,
                msg: "missing `chain` header".into(),
            });
        };
        if dof != joints.len() {
            return Err(ChainError::Validation(format!(
                "header at line {header_line} declares dof {dof} but {} joints are listed",
                joints.len()
            )));
        }

        let mut frames = BTreeMap::new();
        for (line, (frame, after, offset)) in pending_frames {
            let joint = if after == "base" {
                None
            } else {
                Some(
                    joints
                        .iter()
                        .position(|j: &JointSpec| j.name == after)
                        .ok_or_else(|| ChainError::Parse {
                            line,
                            msg: format!("field `after`: unknown joint `{after}`"),
                        })?,
                )
            };
            if frames
                .insert(frame, FrameAttachment { joint, offset })
                .is_some()
            {
                return Err(ChainError::Parse {
                    line,
                    msg: format!("frame `{frame}` declared twice"),
                });
            }
        }
        Self::new(name, joints, frames)
    }

    fn validate(&self) -> Result<(), ChainError> {
        let invalid = |m: String| Err(ChainError::Validation(m));
        if self.joints.is_empty() {
            return invalid("chain has no joints".into());
        }
        for j in &self.joints {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return invalid(format!("joint `{}` axis is not unit length", j.name));
            }
            if !(j.limits[0] <= j.limits[1]) {
                return invalid(format!("joint `{}` has lo > hi", j.name));
            }
        }
        for (i, j) in self.joints.iter().enumerate() {
            if self.joints[..i].iter().any(|o| o.name == j.name) {
                return invalid(format!("duplicate joint name `{}`", j.name));
            }
        }
        // base attachment sorts before joint 0
        let order = |f: Frame| self.frames.get(&f).map(|a| a.joint.map_or(-1, |j| j as i64));
        let (Some(elbow), Some(ee)) = (order(Frame::Elbow), order(Frame::Ee)) else {
            return invalid("chain must declare `elbow` and `ee` frames".into());
        };
        if elbow >= ee {
            return invalid("elbow frame must precede the ee frame".into());
        }
        if let Some(s) = order(Frame::Shoulder) {
            if s > elbow {
                return invalid("shoulder frame must not follow the elbow frame".into());
            }
        }
        if let Some(w) = order(Frame::Wrist) {
            if w < elbow || w > ee {
                return invalid("wrist frame must lie between elbow and ee".into());
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Joint count `d`.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn attachment(&self, frame: Frame) -> Result<FrameAttachment, ChainError> {
        match self.frames.get(&frame) {
            Some(a) => Ok(*a),
            // missing optional frames fall back to sensible defaults
            None => match frame {
                Frame::Shoulder => Ok(FrameAttachment {
                    joint: None,
                    offset: Pose::identity(),
                }),
                Frame::Wrist => Ok(FrameAttachment {
                    joint: self.frames[&Frame::Ee].joint,
                    offset: Pose::identity(),
                }),
                _ => Err(ChainError::UnknownFrame(frame.to_string())),
            },
        }
    }

    pub fn zero_config(&self) -> JointConfig {
        JointConfig::zeros(self.dof())
    }

    /// Clamps `q` into the joint limits, returning which joints were active.
    pub fn clamp(&self, q: &mut JointConfig) -> Vec<bool> {
        self.joints
            .iter()
            .zip(q.iter_mut())
            .map(|(j, v)| {
                let c = v.clamp(j.limits[0], j.limits[1]);
                let active = c != *v;
                *v = c;
                active
            })
            .collect()
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        self.joints
            .iter()
            .zip(q.iter())
            .all(|(j, v)| *v >= j.limits[0] && *v <= j.limits[1])
    }

    fn check_dim(&self, q: &JointConfig) -> Result<(), ChainError> {
        if q.len() != self.dof() {
            return Err(ChainError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    fn joint_frames(&self, q: &JointConfig, upto: Option<usize>) -> JointFrames {
        let n = upto.map_or(0, |j| j + 1);
        let mut poses = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut t = Pose::identity();
        for (joint, angle) in self.joints.iter().zip(q.iter()).take(n) {
            let placed = t.compose(&joint.origin);
            axes.push(placed.rotation.rotate(&joint.axis));
            t = placed.compose(&Pose::from_rotation(UnitQuaternion::from_axis_angle(
                &joint.axis,
                *angle,
            )));
            poses.push(t);
        }
        JointFrames { poses, axes }
    }

    fn frame_pose(&self, jf: &JointFrames, att: &FrameAttachment) -> Pose {
        match att.joint {
            None => att.offset,
            Some(j) => jf.poses[j].compose(&att.offset),
        }
    }

    /// Pose of `frame` in the chain base frame.
    pub fn fk(&self, q: &JointConfig, frame: Frame) -> Result<Pose, ChainError> {
        self.check_dim(q)?;
        let att = self.attachment(frame)?;
        let jf = self.joint_frames(q, att.joint);
        Ok(self.frame_pose(&jf, &att))
    }

    /// Poses of all four named frames from a single forward pass.
    pub fn fk_all(&self, q: &JointConfig) -> Result<[Pose; 4], ChainError> {
        self.check_dim(q)?;
        let jf = self.joint_frames(q, Some(self.dof() - 1));
        let mut out = [Pose::identity(); 4];
        for (slot, frame) in out.iter_mut().zip(Frame::ALL) {
            *slot = self.frame_pose(&jf, &self.attachment(frame)?);
        }
        Ok(out)
    }

    /// Pose and geometric Jacobian of `frame`.
    ///
    /// Rows are the linear velocity of the frame origin followed by the
    /// angular velocity, both in base coordinates.
    pub fn fk_jacobian(
        &self,
        q: &JointConfig,
        frame: Frame,
    ) -> Result<(Pose, Matrix6xX<f64>), ChainError> {
        self.check_dim(q)?;
        let att = self.attachment(frame)?;
        let jf = self.joint_frames(q, att.joint);
        let pose = self.frame_pose(&jf, &att);
        let mut jac = Matrix6xX::zeros(self.dof());
        for (i, (jp, axis)) in jf.poses.iter().zip(&jf.axes).enumerate() {
            // rotation leaves the joint origin fixed
            let lin = axis.cross(&(pose.translation - jp.translation));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(axis);
        }
        Ok((pose, jac))
    }

    pub fn jacobian(&self, q: &JointConfig, frame: Frame) -> Result<Matrix6xX<f64>, ChainError> {
        self.fk_jacobian(q, frame).map(|(_, j)| j)
    }

    /// Recovers the wrist pose from an EE pose when both frames hang off the
    /// same joint.
    pub fn wrist_from_ee(&self, ee: &Pose) -> Result<Pose, ChainError> {
        let w = self.attachment(Frame::Wrist)?;
        let e = self.attachment(Frame::Ee)?;
        if w.joint != e.joint {
            return Err(ChainError::Validation(
                "wrist and ee frames are not attached to the same joint".into(),
            ));
        }
        Ok(ee.compose(&e.offset.inverse()).compose(&w.offset))
    }

    /// Distance from the wrist frame origin to the ee frame origin.
    pub fn hand_length(&self) -> Result<f64, ChainError> {
        let ee = Pose::identity();
        Ok(self.wrist_from_ee(&ee)?.translation.norm())
    }
}

fn parse_f64s<const N: usize>(tokens: &[&str], field: &str) -> Result<[f64; N], String> {
    if tokens.len() < N {
        return Err(format!("field `{field}`: expected {N} numbers"));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(tokens) {
        *o = t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("field `{field}`: bad number `{t}`"))?;
    }
    Ok(out)
}

fn parse_pose(tokens: &[&str], field: &str) -> Result<Pose, String> {
    let v: [f64; 7] = parse_f64s(tokens, field)?;
    let rot = UnitQuaternion::try_new(v[3], v[4], v[5], v[6])
        .map_err(|_| format!("field `{field}`: zero quaternion"))?;
    Ok(Pose::new(rot, Vector3::new(v[0], v[1], v[2])))
}

fn expect_keyword(tokens: &[&str], at: usize, kw: &str) -> Result<(), String> {
    match tokens.get(at) {
        Some(t) if *t == kw => Ok(()),
        Some(t) => Err(format!("expected `{kw}`, found `{t}`")),
        None => Err(format!("expected `{kw}`, found end of line")),
    }
}

fn parse_joint(tokens: &[&str]) -> Result<JointSpec, String> {
    // joint NAME axis x y z origin tx ty tz qw qx qy qz limits lo hi
    if tokens.len() != 17 {
        return Err(format!("joint line has {} fields, expected 17", tokens.len()));
    }
    expect_keyword(tokens, 2, "axis")?;
    let axis: [f64; 3] = parse_f64s(&tokens[3..6], "axis")?;
    expect_keyword(tokens, 6, "origin")?;
    let origin = parse_pose(&tokens[7..14], "origin")?;
    expect_keyword(tokens, 14, "limits")?;
    let limits: [f64; 2] = parse_f64s(&tokens[15..17], "limits")?;
    Ok(JointSpec {
        name: tokens[1].to_string(),
        axis: Vector3::from(axis),
        origin,
        limits,
    })
}

fn parse_frame(tokens: &[&str]) -> Result<(Frame, String, Pose), String> {
    // frame KIND after JOINT offset tx ty tz qw qx qy qz
    if tokens.len() != 12 {
        return Err(format!("frame line has {} fields, expected 12", tokens.len()));
    }
    let frame = tokens[1]
        .parse::<Frame>()
        .map_err(|_| format!("field `frame`: unknown frame `{}`", tokens[1]))?;
    expect_keyword(tokens, 2, "after")?;
    expect_keyword(tokens, 4, "offset")?;
    let offset = parse_pose(&tokens[5..12], "offset")?;
    Ok((frame, tokens[3].to_string(), offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::geodesic_angle;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(chain: &KinematicChain, rng: &mut impl Rng) -> JointConfig {
        JointConfig::from_iterator(
            chain.dof(),
            chain.joints().iter().map(|j| rng.gen_range(j.limits[0]..=j.limits[1])),
        )
    }

    fn rot_matrix(axis: &Vector3<f64>, angle: f64) -> Matrix4<f64> {
        Pose::from_rotation(UnitQuaternion::from_axis_angle(axis, angle)).to_homogeneous()
    }

    /// Homogeneous-matrix product oracle, independent of `Pose::compose`.
    fn fk_oracle(chain: &KinematicChain, q: &JointConfig, frame: Frame) -> Matrix4<f64> {
        let att = chain.attachment(frame).unwrap();
        let mut m = Matrix4::<f64>::identity();
        if let Some(last) = att.joint {
            for k in 0..=last {
                let j = &chain.joints()[k];
                m = m * j.origin.to_homogeneous() * rot_matrix(&j.axis, q[k]);
            }
        }
        m * att.offset.to_homogeneous()
    }

    #[test]
    fn reference_arm_loads() {
        let chain = KinematicChain::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/arm7.chain"))
            .unwrap();
        assert_eq!(chain.dof(), 7);
        assert_eq!(chain.name(), "arm7");
        assert_eq!(chain.frames.len(), 4);
        assert!((chain.hand_length().unwrap() - 0.10).abs() < 1e-15);
    }

    #[test]
    fn zero_pose_matches_hand_multiplied_transforms() {
        let chain = KinematicChain::reference_arm();
        let q = chain.zero_config();
        // joint rotations are identity; the elbow origin carries a 0.5 rad
        // rest flexion about -y, so the forearm leans forward.
        let (s, c) = 0.5f64.sin_cos();
        let ee = chain.fk(&q, Frame::Ee).unwrap();
        let want = Vector3::new(0.35 * s, 0.0, -0.30 - 0.35 * c);
        assert!((ee.translation - want).norm() < 1e-15);
        let rest = UnitQuaternion::from_axis_angle(&-Vector3::y(), 0.5);
        let flip = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0);
        assert!(geodesic_angle(&ee.rotation, &rest.mul(&flip)) < 1e-12);
        let elbow = chain.fk(&q, Frame::Elbow).unwrap();
        assert!((elbow.translation - Vector3::new(0.0, 0.0, -0.30)).norm() < 1e-15);
        let wrist = chain.fk(&q, Frame::Wrist).unwrap();
        let want = Vector3::new(0.25 * s, 0.0, -0.30 - 0.25 * c);
        assert!((wrist.translation - want).norm() < 1e-15);
    }

    #[test]
    fn first_joint_rotates_the_whole_arm() {
        let chain = KinematicChain::reference_arm();
        let zero = chain.fk(&chain.zero_config(), Frame::Ee).unwrap();
        let mut q = chain.zero_config();
        q[0] = 0.4;
        let moved = chain.fk(&q, Frame::Ee).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&-Vector3::y(), 0.4).rotate(&zero.translation);
        assert!((moved.translation - expected).norm() < 1e-14);
    }

    #[test]
    fn fk_matches_matrix_chain_oracle() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_q(&chain, &mut rng);
            for frame in Frame::ALL {
                let got = chain.fk(&q, frame).unwrap().to_homogeneous();
                let want = fk_oracle(&chain, &q, frame);
                assert!((got - want).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn link_lengths_are_conserved() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let q = random_q(&chain, &mut rng);
            let [s, e, w, h] = chain.fk_all(&q).unwrap().map(|p| p.translation);
            assert!(((e - s).norm() - 0.30).abs() < 1e-9);
            assert!(((w - e).norm() - 0.25).abs() < 1e-9);
            assert!(((h - w).norm() - 0.10).abs() < 1e-9);
            assert!(s.norm() < 1e-15, "shoulder is fixed at the base");
        }
    }

    fn fd_jacobian(chain: &KinematicChain, q: &JointConfig, frame: Frame, h: f64) -> Matrix6xX<f64> {
        let base = chain.fk(q, frame).unwrap();
        let mut jac = Matrix6xX::zeros(chain.dof());
        for k in 0..chain.dof() {
            let mut qp = q.clone();
            qp[k] += h;
            let mut qm = q.clone();
            qm[k] -= h;
            let p = chain.fk(&qp, frame).unwrap();
            let m = chain.fk(&qm, frame).unwrap();
            let lin = (p.translation - m.translation) / (2.0 * h);
            // world-frame angular velocity from the rotation difference
            let dr = m.rotation.inverse().mul(&p.rotation);
            let ang = base.rotation.rotate(&dr.log().unwrap()) / (2.0 * h);
            jac.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, k).copy_from(&ang);
        }
        jac
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = random_q(&chain, &mut rng);
            for frame in [Frame::Elbow, Frame::Ee] {
                let j = chain.jacobian(&q, frame).unwrap();
                let fd = fd_jacobian(&chain, &q, frame, 1e-6);
                let rel = (&j - &fd).norm() / fd.norm();
                assert!(rel < 1e-5, "rel err {rel}");
            }
        }
    }

    #[test]
    fn distal_columns_are_zero() {
        let chain = KinematicChain::reference_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_q(&chain, &mut rng);
        let j = chain.jacobian(&q, Frame::Elbow).unwrap();
        for k in 4..7 {
            assert_eq!(j.column(k).amax(), 0.0);
        }
        let s = chain.jacobian(&q, Frame::Shoulder).unwrap();
        assert_eq!(s.amax(), 0.0);
    }

    #[test]
    fn frame_on_joint_axis_has_no_linear_column() {
        let text = "chain one dof 2\n\
            joint a axis 0 0 1 origin 0 0 0 1 0 0 0 limits -1 1\n\
            joint b axis 0 0 1 origin 1 0 0 1 0 0 0 limits -1 1\n\
            frame elbow after a offset 0 0 0.5 1 0 0 0\n\
            frame ee after b offset 0.2 0 0 1 0 0 0\n";
        let chain = KinematicChain::parse(text).unwrap();
        let q = JointConfig::from_vec(vec![0.3, -0.2]);
        let j = chain.jacobian(&q, Frame::Elbow).unwrap();
        assert!(j.fixed_view::<3, 1>(0, 0).norm() < 1e-15);
        assert!((j.fixed_view::<3, 1>(3, 0) - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn ee_before_elbow_is_rejected() {
        let text = "chain bad dof 2\n\
            joint a axis 0 0 1 origin 0 0 0 1 0 0 0 limits -1 1\n\
            joint b axis 0 1 0 origin 0 0 1 1 0 0 0 limits -1 1\n\
            frame ee after a offset 0 0 0 1 0 0 0\n\
            frame elbow after b offset 0 0 0 1 0 0 0\n";
        assert!(matches!(
            KinematicChain::parse(text),
            Err(ChainError::Validation(_))
        ));
    }

    #[test]
    fn empty_and_malformed_files() {
        assert!(matches!(KinematicChain::parse(""), Err(ChainError::Parse { .. })));
        let bad = "chain x dof 1\njoint a axis 0 0 1 origin 0 0 0 1 0 0 0 limits -1\n";
        match KinematicChain::parse(bad) {
            Err(ChainError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let non_unit = "chain x dof 2\n\
            joint a axis 0 0 2 origin 0 0 0 1 0 0 0 limits -1 1\n\
            joint b axis 0 0 1 origin 0 0 0 1 0 0 0 limits -1 1\n\
            frame elbow after a offset 0 0 0 1 0 0 0\n\
            frame ee after b offset 0 0 0 1 0 0 0\n";
        assert!(matches!(
            KinematicChain::parse(non_unit),
            Err(ChainError::Validation(_))
        ));
    }

    #[test]
    fn unknown_frame_and_dimension_errors() {
        assert!(matches!("knee".parse::<Frame>(), Err(ChainError::UnknownFrame(_))));
        let chain = KinematicChain::reference_arm();
        let q = JointConfig::zeros(3);
        assert!(matches!(
            chain.fk(&q, Frame::Ee),
            Err(ChainError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn clamp_reports_active_limits() {
        let chain = KinematicChain::reference_arm();
        let mut q = chain.zero_config();
        q[3] = 3.5;
        q[1] = -2.0;
        let active = chain.clamp(&mut q);
        assert_eq!(active, vec![false, true, false, true, false, false, false]);
        assert_eq!(q[3], 2.1);
        assert_eq!(q[1], -0.6);
        assert!(chain.within_limits(&q));
    }
}
