//! The sensor-log file: a versioned header block, one `S` record per step,
//! and an optional ground-truth section. Decimal serialization uses 17
//! significant digits, so `import(export(x)) == x` exactly.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::datagen::{MocapSample, SensorLog, TruthBundle};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldState, Pose, Rotation};
use crate::robot::{CovBlock, CovarianceSpec, ImuSample, KinematicOffsets, LegSample, PriorCov};

use super::{fmt_f64, parse_f64};

const LOG_HEADER: &str = "legcal-log v1";
const TRUTH_HEADER: &str = "truth v1";

fn push_vec3(out: &mut String, v: &Vector3<f64>) {
    out.push(' ');
    out.push_str(&fmt_f64(v.x));
    out.push(' ');
    out.push_str(&fmt_f64(v.y));
    out.push(' ');
    out.push_str(&fmt_f64(v.z));
}

fn push_pose(out: &mut String, p: &Pose) {
    let (w, x, y, z) = p.rot.wxyz();
    for v in [w, x, y, z, p.trans.x, p.trans.y, p.trans.z] {
        out.push(' ');
        out.push_str(&fmt_f64(v));
    }
}

fn push_state(out: &mut String, x: &ManifoldState) {
    push_pose(out, &x.pose);
    push_vec3(out, &x.velocity);
    for f in &x.foot_pos {
        push_vec3(out, f);
    }
    push_vec3(out, &x.accel_bias);
    push_vec3(out, &x.gyro_bias);
}

fn push_block(out: &mut String, name: &str, block: &CovBlock) {
    out.push_str(name);
    match block {
        CovBlock::Diag(_) => out.push_str(" diag"),
        CovBlock::Chol(_) => out.push_str(" chol"),
    }
    for v in block.params() {
        out.push(' ');
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

/// Write a sensor log and, when provided, its ground-truth bundle.
pub fn export_log(
    path: &Path,
    log: &SensorLog,
    truth: Option<&TruthBundle>,
    robot_hash: u64,
) -> Result<()> {
    let n_f = log.legs.first().map_or(0, |l| l.joint_angles.len());
    let mut out = String::new();
    out.push_str(LOG_HEADER);
    out.push('\n');
    out.push_str(&format!("robot_hash {robot_hash:016x}\n"));
    out.push_str(&format!("dt {}\n", fmt_f64(log.dt)));
    out.push_str(&format!("n_f {n_f}\n"));
    out.push_str(&format!("count {}\n", log.len()));
    for k in 0..log.len() {
        let imu = &log.imu[k];
        let legs = &log.legs[k];
        let mocap = &log.mocap[k];
        out.push('S');
        out.push(' ');
        out.push_str(&fmt_f64(imu.stamp));
        push_vec3(&mut out, &imu.accel);
        push_vec3(&mut out, &imu.gyro);
        for j in 0..n_f {
            push_vec3(&mut out, &legs.joint_angles[j]);
        }
        for j in 0..n_f {
            push_vec3(&mut out, &legs.joint_rates[j]);
        }
        for j in 0..n_f {
            out.push(' ');
            out.push(if legs.contact[j] { '1' } else { '0' });
        }
        push_pose(&mut out, &mocap.pose);
        push_vec3(&mut out, &mocap.velocity);
        out.push('\n');
    }
    if let Some(truth) = truth {
        out.push_str(TRUTH_HEADER);
        out.push('\n');
        out.push_str(&format!("seed {}\n", truth.seed));
        for name in crate::robot::CALIBRATED_BLOCKS {
            push_block(&mut out, &format!("cov {name}"), truth.cov.block(name));
        }
        push_block(&mut out, "prior rot", &truth.cov.prior.rot);
        push_block(&mut out, "prior pos", &truth.cov.prior.pos);
        push_block(&mut out, "prior vel", &truth.cov.prior.vel);
        push_block(&mut out, "prior foot", &truth.cov.prior.foot);
        push_block(&mut out, "prior accel_bias", &truth.cov.prior.accel_bias);
        push_block(&mut out, "prior gyro_bias", &truth.cov.prior.gyro_bias);
        for j in 0..n_f {
            out.push_str(&format!("offset foot{j}"));
            push_vec3(&mut out, &truth.offsets.foot[j]);
            out.push('\n');
        }
        out.push_str("offset base");
        push_vec3(&mut out, &truth.offsets.base);
        out.push('\n');
        for x in &truth.states {
            out.push('X');
            push_state(&mut out, x);
            out.push('\n');
        }
    }
    out.push_str("end\n");
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

struct Cursor<'a> {
    tokens: std::str::SplitWhitespace<'a>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Cursor { tokens: text.split_whitespace(), line }
    }

    fn f64(&mut self) -> Result<f64> {
        let tok = self.tokens.next().ok_or(Error::MalformedRecord {
            line: self.line,
            detail: "record truncated".to_string(),
        })?;
        parse_f64(tok, self.line)
    }

    fn vec3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn pose(&mut self) -> Result<Pose> {
        let (w, x, y, z) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        let trans = self.vec3()?;
        Ok(Pose::new(Rotation::from_wxyz_trusted(w, x, y, z), trans))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.tokens.next() {
            Some("1") => Ok(true),
            Some("0") => Ok(false),
            other => Err(Error::MalformedRecord {
                line: self.line,
                detail: format!("expected contact flag, found {other:?}"),
            }),
        }
    }

    fn done(&mut self) -> Result<()> {
        if let Some(tok) = self.tokens.next() {
            return Err(Error::MalformedRecord {
                line: self.line,
                detail: format!("trailing token '{tok}'"),
            });
        }
        Ok(())
    }
}

fn header_value<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<(usize, &'a str)> {
    let (idx, line) = lines.next().ok_or(Error::MalformedRecord {
        line: 0,
        detail: format!("missing header '{key}'"),
    })?;
    let value = line.strip_prefix(key).and_then(|s| s.strip_prefix(' ')).ok_or(
        Error::MalformedRecord {
            line: idx + 1,
            detail: format!("expected header '{key}'"),
        },
    )?;
    Ok((idx + 1, value.trim()))
}

fn parse_block(value: &str, line: usize) -> Result<CovBlock> {
    let mut toks = value.split_whitespace();
    let kind = toks.next().ok_or(Error::MalformedRecord {
        line,
        detail: "missing block kind".to_string(),
    })?;
    let params: Vec<f64> =
        toks.map(|t| parse_f64(t, line)).collect::<Result<Vec<_>>>()?;
    match (kind, params.len()) {
        ("diag", 3) => Ok(CovBlock::Diag(Vector3::new(params[0], params[1], params[2]))),
        ("chol", 6) => {
            let mut l = [0.0; 6];
            l.copy_from_slice(&params);
            Ok(CovBlock::Chol(l))
        }
        _ => Err(Error::MalformedRecord {
            line,
            detail: format!("bad covariance block '{kind}' with {} params", params.len()),
        }),
    }
}

/// Read a sensor log; the truth section is optional.
pub fn import_log(path: &Path) -> Result<(SensorLog, Option<TruthBundle>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (idx, header) = lines.next().ok_or(Error::MalformedRecord {
        line: 1,
        detail: "empty file".to_string(),
    })?;
    if header.trim() != LOG_HEADER {
        return Err(Error::SchemaVersionMismatch {
            found: header.trim().to_string(),
            expected: LOG_HEADER.to_string(),
        });
    }
    let _ = idx;
    let (_, _hash) = header_value(&mut lines, "robot_hash")?;
    let (ln, dt_s) = header_value(&mut lines, "dt")?;
    let dt = parse_f64(dt_s, ln)?;
    let (ln, nf_s) = header_value(&mut lines, "n_f")?;
    let n_f: usize = nf_s.parse().map_err(|_| Error::MalformedRecord {
        line: ln,
        detail: "bad n_f".to_string(),
    })?;
    let (ln, count_s) = header_value(&mut lines, "count")?;
    let count: usize = count_s.parse().map_err(|_| Error::MalformedRecord {
        line: ln,
        detail: "bad count".to_string(),
    })?;

    let mut imu = Vec::with_capacity(count);
    let mut legs = Vec::with_capacity(count);
    let mut mocap = Vec::with_capacity(count);
    for _ in 0..count {
        let (idx, line) = lines.next().ok_or(Error::MalformedRecord {
            line: 0,
            detail: "log truncated before all records".to_string(),
        })?;
        let body = line.strip_prefix("S ").ok_or(Error::MalformedRecord {
            line: idx + 1,
            detail: "expected an 'S' record".to_string(),
        })?;
        let mut cur = Cursor::new(body, idx + 1);
        let stamp = cur.f64()?;
        let accel = cur.vec3()?;
        let gyro = cur.vec3()?;
        let mut joint_angles = Vec::with_capacity(n_f);
        for _ in 0..n_f {
            joint_angles.push(cur.vec3()?);
        }
        let mut joint_rates = Vec::with_capacity(n_f);
        for _ in 0..n_f {
            joint_rates.push(cur.vec3()?);
        }
        let mut contact = Vec::with_capacity(n_f);
        for _ in 0..n_f {
            contact.push(cur.flag()?);
        }
        let pose = cur.pose()?;
        let velocity = cur.vec3()?;
        cur.done()?;
        imu.push(ImuSample { accel, gyro, stamp });
        legs.push(LegSample { joint_angles, joint_rates, contact });
        mocap.push(MocapSample { pose, velocity });
    }
    let log = SensorLog { dt, imu, legs, mocap };

    // optional truth section
    let (idx, next) = match lines.next() {
        None => {
            return Err(Error::MalformedRecord {
                line: 0,
                detail: "missing 'end' marker".to_string(),
            })
        }
        Some(pair) => pair,
    };
    if next.trim() == "end" {
        return Ok((log, None));
    }
    if next.trim() != TRUTH_HEADER {
        return Err(Error::MalformedRecord {
            line: idx + 1,
            detail: format!("expected '{TRUTH_HEADER}' or 'end'"),
        });
    }
    let (ln, seed_s) = header_value(&mut lines, "seed")?;
    let seed: u64 = seed_s.parse().map_err(|_| Error::MalformedRecord {
        line: ln,
        detail: "bad seed".to_string(),
    })?;

    let mut cov = CovarianceSpec {
        q_pos: CovBlock::iso(1.0),
        q_vel: CovBlock::iso(1.0),
        q_rot: CovBlock::iso(1.0),
        q_foot: CovBlock::iso(1.0),
        q_accel_bias: CovBlock::iso(1.0),
        q_gyro_bias: CovBlock::iso(1.0),
        r_joint: CovBlock::iso(1.0),
        r_joint_rate: CovBlock::iso(1.0),
        prior: PriorCov::iso(1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
    };
    for name in crate::robot::CALIBRATED_BLOCKS {
        let (ln, value) = header_value(&mut lines, &format!("cov {name}"))?;
        *cov.block_mut(name) = parse_block(value, ln)?;
    }
    for (name, slot) in [
        ("rot", 0usize),
        ("pos", 1),
        ("vel", 2),
        ("foot", 3),
        ("accel_bias", 4),
        ("gyro_bias", 5),
    ] {
        let (ln, value) = header_value(&mut lines, &format!("prior {name}"))?;
        let block = parse_block(value, ln)?;
        match slot {
            0 => cov.prior.rot = block,
            1 => cov.prior.pos = block,
            2 => cov.prior.vel = block,
            3 => cov.prior.foot = block,
            4 => cov.prior.accel_bias = block,
            _ => cov.prior.gyro_bias = block,
        }
    }
    let mut offsets = KinematicOffsets::zero(n_f);
    for j in 0..n_f {
        let (ln, value) = header_value(&mut lines, &format!("offset foot{j}"))?;
        let mut cur = Cursor::new(value, ln);
        offsets.foot[j] = cur.vec3()?;
        cur.done()?;
    }
    let (ln, value) = header_value(&mut lines, "offset base")?;
    let mut cur = Cursor::new(value, ln);
    offsets.base = cur.vec3()?;
    cur.done()?;

    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        let (idx, line) = lines.next().ok_or(Error::MalformedRecord {
            line: 0,
            detail: "truth section truncated".to_string(),
        })?;
        let body = line.strip_prefix('X').ok_or(Error::MalformedRecord {
            line: idx + 1,
            detail: "expected an 'X' record".to_string(),
        })?;
        let mut cur = Cursor::new(body, idx + 1);
        let mut x = ManifoldState::new(n_f);
        x.pose = cur.pose()?;
        x.velocity = cur.vec3()?;
        for j in 0..n_f {
            x.foot_pos[j] = cur.vec3()?;
        }
        x.accel_bias = cur.vec3()?;
        x.gyro_bias = cur.vec3()?;
        cur.done()?;
        states.push(x);
    }
    match lines.next() {
        Some((_, l)) if l.trim() == "end" => {}
        other => {
            return Err(Error::MalformedRecord {
                line: other.map_or(0, |(i, _)| i + 1),
                detail: "missing 'end' marker".to_string(),
            })
        }
    }
    Ok((log, Some(TruthBundle { states, cov, offsets, seed })))
}

/// Write an estimated trajectory (same `X` record shape as the truth
/// section).
pub fn write_trajectory(path: &Path, states: &[ManifoldState]) -> Result<()> {
    let mut out = String::new();
    out.push_str("legcal-trajectory v1\n");
    out.push_str(&format!("count {}\n", states.len()));
    for x in states {
        out.push('X');
        push_state(&mut out, x);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a trajectory file written by [`write_trajectory`].
pub fn read_trajectory(path: &Path, n_f: usize) -> Result<Vec<ManifoldState>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::MalformedRecord {
        line: 1,
        detail: "empty file".to_string(),
    })?;
    if header.trim() != "legcal-trajectory v1" {
        return Err(Error::SchemaVersionMismatch {
            found: header.trim().to_string(),
            expected: "legcal-trajectory v1".to_string(),
        });
    }
    let (ln, count_s) = header_value(&mut lines, "count")?;
    let count: usize = count_s.parse().map_err(|_| Error::MalformedRecord {
        line: ln,
        detail: "bad count".to_string(),
    })?;
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        let (idx, line) = lines.next().ok_or(Error::MalformedRecord {
            line: 0,
            detail: "trajectory truncated".to_string(),
        })?;
        let body = line.strip_prefix('X').ok_or(Error::MalformedRecord {
            line: idx + 1,
            detail: "expected an 'X' record".to_string(),
        })?;
        let mut cur = Cursor::new(body, idx + 1);
        let mut x = ManifoldState::new(n_f);
        x.pose = cur.pose()?;
        x.velocity = cur.vec3()?;
        for j in 0..n_f {
            x.foot_pos[j] = cur.vec3()?;
        }
        x.accel_bias = cur.vec3()?;
        x.gyro_bias = cur.vec3()?;
        cur.done()?;
        states.push(x);
    }
    Ok(states)
}
