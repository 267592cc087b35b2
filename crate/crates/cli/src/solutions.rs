//! Per-step solution files written by `solve` and read by `evaluate`.
//!
//! One row per step: trajectory id, arm, step index, time, joint values
//! `q0..q{d-1}`, solver report fields, then reference and solved keypoints
//! (`shoulder`, `elbow`, `wrist`, `ee` positions and the EE quaternion, all in
//! right-arm base coordinates) and the predicted elbow position, empty in
//! baseline mode.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use hlik_core::datagen::Arm;
use hlik_core::liegroup::{Pose, UnitQuaternion};
use hlik_core::metrics::StepSnapshot;

use crate::error::{CliError, CliResult};
use crate::pipeline::{quaternion, SolvedTrajectory, StepRecord};

const SNAPSHOT_FIELDS: [&str; 16] = [
    "shoulder_x", "shoulder_y", "shoulder_z", "elbow_x", "elbow_y", "elbow_z", "wrist_x", "wrist_y",
    "wrist_z", "ee_x", "ee_y", "ee_z", "ee_qw", "ee_qx", "ee_qy", "ee_qz",
];

const REPORT_FIELDS: [&str; 6] = ["iters", "converged", "cost", "cost_ee", "cost_elbow", "cost_smooth"];

pub fn header(dof: usize) -> Vec<String> {
    let mut h: Vec<String> = ["traj_id", "arm", "step", "t"].map(String::from).to_vec();
    h.extend((0..dof).map(|i| format!("q{i}")));
    h.extend(REPORT_FIELDS.map(String::from));
    for prefix in ["ref", "sol"] {
        h.extend(SNAPSHOT_FIELDS.iter().map(|f| format!("{prefix}_{f}")));
    }
    h.extend(["pred_elbow_x", "pred_elbow_y", "pred_elbow_z"].map(String::from));
    h
}

fn snapshot_values(s: &StepSnapshot) -> [f64; 16] {
    let q = s.ee_rotation.to_array();
    [
        s.shoulder.x, s.shoulder.y, s.shoulder.z, s.elbow.x, s.elbow.y, s.elbow.z, s.wrist.x, s.wrist.y,
        s.wrist.z, s.ee.x, s.ee.y, s.ee.z, q[0], q[1], q[2], q[3],
    ]
}

pub fn write_solutions(w: impl Write, solved: &[SolvedTrajectory]) -> CliResult<()> {
    let dof = solved
        .iter()
        .flat_map(|t| t.steps.first())
        .map(|s| s.q.len())
        .next()
        .unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(dof))?;
    for traj in solved {
        for s in &traj.steps {
            let mut row: Vec<String> = vec![
                traj.id.clone(),
                traj.arm.as_str().into(),
                s.step.to_string(),
                s.t.to_string(),
            ];
            row.extend(s.q.iter().map(f64::to_string));
            row.push(s.iters.to_string());
            row.push(s.converged.to_string());
            row.extend([s.cost, s.cost_ee, s.cost_elbow, s.cost_smooth].map(|v| v.to_string()));
            row.extend(snapshot_values(&s.reference).map(|v| v.to_string()));
            row.extend(snapshot_values(&s.solved).map(|v| v.to_string()));
            match &s.predicted_elbow {
                Some(p) => row.extend(p.translation.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_solutions(path: &Path, solved: &[SolvedTrajectory]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    write_solutions(std::io::BufWriter::new(file), solved)
}

fn parse_err(row: usize, column: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::new("E_PARSE", format!("solutions row {row}, column {column}: {msg}"))
}

fn snapshot_from(v: &[f64]) -> CliResult<StepSnapshot> {
    Ok(StepSnapshot {
        shoulder: Vector3::new(v[0], v[1], v[2]),
        elbow: Vector3::new(v[3], v[4], v[5]),
        wrist: Vector3::new(v[6], v[7], v[8]),
        ee: Vector3::new(v[9], v[10], v[11]),
        ee_rotation: quaternion(v[12], v[13], v[14], v[15])?,
    })
}

pub fn read_solutions(r: impl Read) -> CliResult<Vec<SolvedTrajectory>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let head: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let dof = head.iter().filter(|h| h.starts_with('q') && h[1..].parse::<usize>().is_ok()).count();
    if head != header(dof) {
        return Err(CliError::new("E_PARSE", "solutions file has an unexpected header"));
    }
    let mut out: Vec<SolvedTrajectory> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != head.len() {
            return Err(parse_err(row, "*", format!("expected {} fields, got {}", head.len(), rec.len())));
        }
        let num = |c: usize| -> CliResult<f64> {
            rec[c].parse::<f64>().map_err(|e| parse_err(row, &head[c], e))
        };
        let id = rec[0].to_string();
        let arm = Arm::parse(&rec[1]).ok_or_else(|| parse_err(row, "arm", "expected left or right"))?;
        let step = rec[2].parse::<usize>().map_err(|e| parse_err(row, "step", e))?;
        let t = num(3)?;
        let q = (0..dof).map(|j| num(4 + j)).collect::<CliResult<Vec<_>>>()?;
        let b = 4 + dof;
        let iters = rec[b].parse::<usize>().map_err(|e| parse_err(row, "iters", e))?;
        let converged = rec[b + 1].parse::<bool>().map_err(|e| parse_err(row, "converged", e))?;
        let costs = (0..4).map(|j| num(b + 2 + j)).collect::<CliResult<Vec<_>>>()?;
        let snap = |start: usize| -> CliResult<StepSnapshot> {
            let v = (0..16).map(|j| num(start + j)).collect::<CliResult<Vec<_>>>()?;
            snapshot_from(&v).map_err(|e| parse_err(row, &head[start + 12], e.message))
        };
        let reference = snap(b + 6)?;
        let solved = snap(b + 22)?;
        let p = b + 38;
        let predicted_elbow = if rec[p].is_empty() {
            None
        } else {
            let v = Vector3::new(num(p)?, num(p + 1)?, num(p + 2)?);
            Some(Pose::new(UnitQuaternion::identity(), v))
        };
        let record = StepRecord {
            step,
            t,
            q,
            iters,
            converged,
            cost: costs[0],
            cost_ee: costs[1],
            cost_elbow: costs[2],
            cost_smooth: costs[3],
            reference,
            solved,
            predicted_elbow,
        };
        match out.last_mut() {
            Some(last) if last.id == id => {
                if last.arm != arm || step != last.steps.len() {
                    return Err(parse_err(row, "step", "steps of a trajectory must be contiguous"));
                }
                last.steps.push(record);
            }
            _ => {
                if out.iter().any(|t| t.id == id) {
                    return Err(parse_err(row, "traj_id", format!("trajectory `{id}` is split")));
                }
                if step != 0 {
                    return Err(parse_err(row, "step", "trajectory must start at step 0"));
                }
                out.push(SolvedTrajectory {
                    id,
                    arm,
                    steps: vec![record],
                });
            }
        }
    }
    Ok(out)
}

pub fn load_solutions(path: &Path) -> CliResult<Vec<SolvedTrajectory>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    read_solutions(std::io::BufReader::new(file))
}
