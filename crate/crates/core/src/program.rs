//! Robot painting programs: stroke sequences and replayed motions turned
//! into horizontal target poses plus dip/clean/dry actions, with a plain
//! line-oriented text format.
//!
//! ```text
//! CLEAN
//! DRY
//! DIP 2
//! STROKE_BEGIN 0
//! MOVE 10.000 20.000 15.000 -90.000
//! MOVE 10.000 20.000 0.000 -90.000
//! ...
//! STROKE_END 0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::mocap::{MotionSample, SAMPLE_LEN};
use crate::error::{Error, Result};
use crate::quantize::Palette;
use crate::stroke::Stroke;

pub const DEFAULT_STEP_MM: f64 = 2.0;
/// Segments in the arc-length lookup table.
const ARC_TABLE_SEGMENTS: usize = 1024;

/// Placement of the unit canvas on the robot's work surface, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanvasFrame {
    pub origin_x: f64,
    pub origin_y: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    /// Tool height with the brush pressed on the paper.
    pub z_contact: f64,
    /// Safe hover height.
    pub z_travel: f64,
}

impl Default for CanvasFrame {
    fn default() -> Self {
        CanvasFrame {
            origin_x: 0.0,
            origin_y: 0.0,
            width_mm: 200.0,
            height_mm: 200.0,
            z_contact: 0.0,
            z_travel: 15.0,
        }
    }
}

impl CanvasFrame {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.origin_x, self.origin_y, self.width_mm, self.height_mm, self.z_contact, self.z_travel];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("canvas frame has non-finite values".into()));
        }
        if self.width_mm <= 0.0 || self.height_mm <= 0.0 {
            return Err(Error::InvalidParameter("canvas frame size must be positive".into()));
        }
        if self.z_travel <= self.z_contact {
            return Err(Error::InvalidParameter("z_travel must be above z_contact".into()));
        }
        Ok(())
    }

    /// Unit-square coordinates to work-frame millimeters.
    pub fn to_mm(&self, p: [f64; 2]) -> [f64; 2] {
        [self.origin_x + p[0] * self.width_mm, self.origin_y + p[1] * self.height_mm]
    }

    pub fn center(&self) -> [f64; 2] {
        self.to_mm([0.5, 0.5])
    }

    /// Whether `(x, y)` lies in the frame rectangle, up to `tol` mm.
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.origin_x - tol
            && x <= self.origin_x + self.width_mm + tol
            && y >= self.origin_y - tol
            && y <= self.origin_y + self.height_mm + tol
    }

    fn scale(&self) -> f64 {
        self.width_mm.max(self.height_mm)
    }
}

/// Tool pose with a vertical tool axis; only the yaw varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Degrees, in (-180, 180].
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Move(TargetPose),
    Dip(usize),
    Clean,
    Dry,
    StrokeBegin(usize),
    StrokeEnd(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobotProgram {
    pub actions: Vec<Action>,
}

impl RobotProgram {
    pub fn moves(&self) -> impl Iterator<Item = &TargetPose> {
        self.actions.iter().filter_map(|a| match a {
            Action::Move(p) => Some(p),
            _ => None,
        })
    }

    pub fn count(&self, pred: impl Fn(&Action) -> bool) -> usize {
        self.actions.iter().filter(|a| pred(a)).count()
    }
}

/// Maps an angle in degrees into (-180, 180].
pub fn normalize_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Brush rotation away from perpendicular, in radians, that narrows the
/// footprint of a `w_max` brush to `w_target`.
pub fn thickness_angle(w_target: f64, w_max: f64) -> f64 {
    if w_max <= 0.0 {
        return 0.0;
    }
    (w_target / w_max).clamp(0.0, 1.0).acos()
}

fn point_mm(s: &Stroke, frame: &CanvasFrame, t: f64) -> [f64; 2] {
    frame.to_mm(s.point_unchecked(t))
}

fn tangent_mm(s: &Stroke, frame: &CanvasFrame, t: f64) -> Option<[f64; 2]> {
    let d = s.derivative(t);
    let v = [d[0] * frame.width_mm, d[1] * frame.height_mm];
    let n = v[0].hypot(v[1]);
    (n > 1e-12).then(|| [v[0] / n, v[1] / n])
}

/// Cumulative curve length at `t = j / ARC_TABLE_SEGMENTS`.
fn arc_table(s: &Stroke, frame: &CanvasFrame) -> Vec<f64> {
    let mut table = Vec::with_capacity(ARC_TABLE_SEGMENTS + 1);
    table.push(0.0);
    let mut prev = point_mm(s, frame, 0.0);
    let mut acc = 0.0;
    for j in 1..=ARC_TABLE_SEGMENTS {
        let p = point_mm(s, frame, j as f64 / ARC_TABLE_SEGMENTS as f64);
        acc += (p[0] - prev[0]).hypot(p[1] - prev[1]);
        table.push(acc);
        prev = p;
    }
    table
}

fn t_at_length(table: &[f64], len: f64) -> f64 {
    let j = table.partition_point(|&v| v < len).clamp(1, table.len() - 1);
    let (a, b) = (table[j - 1], table[j]);
    let frac = if b > a { ((len - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
    (j as f64 - 1.0 + frac) / ARC_TABLE_SEGMENTS as f64
}

fn widest_mm(palette: &Palette, frame: &CanvasFrame) -> f64 {
    palette.thicknesses.iter().map(|t| (t[0] + t[1]) * frame.scale()).fold(0.0, f64::max)
}

fn poses_for(index: usize, s: &Stroke, frame: &CanvasFrame, palette: &Palette, step_mm: f64) -> Result<Vec<TargetPose>> {
    if !(step_mm > 0.0 && step_mm.is_finite()) {
        return Err(Error::InvalidParameter(format!("step_mm must be positive, got {step_mm}")));
    }
    s.validate()?;
    if palette.thickness_index(s.r0, s.r1).is_none() {
        return Err(Error::Unquantized {
            index,
            reason: format!("thickness ({}, {}) not in palette", s.r0, s.r1),
        });
    }
    let table = arc_table(s, frame);
    let total = table[ARC_TABLE_SEGMENTS];
    if total <= 1e-9 {
        return Err(Error::DegenerateStroke(format!("stroke {index} has zero length")));
    }
    let n = ((total / step_mm).round() as usize).max(1);
    let theta = thickness_angle((s.r0 + s.r1) * frame.scale(), widest_mm(palette, frame));

    let mut poses = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = t_at_length(&table, total * i as f64 / n as f64);
        let tangent = tangent_mm(s, frame, t)
            .or_else(|| tangent_mm(s, frame, (t + 1e-6).min(1.0)))
            .or_else(|| tangent_mm(s, frame, (t - 1e-6).max(0.0)))
            .ok_or_else(|| Error::DegenerateStroke(format!("stroke {index}: no tangent at t = {t}")))?;
        let normal = tangent[1].atan2(tangent[0]) + std::f64::consts::FRAC_PI_2;
        let [x, y] = point_mm(s, frame, t);
        poses.push(TargetPose {
            x,
            y,
            z: frame.z_contact,
            yaw: normalize_degrees((normal + theta).to_degrees()),
        });
    }
    Ok(poses)
}

/// Contact poses spaced roughly `step_mm` apart along the curve.
pub fn stroke_to_poses(s: &Stroke, frame: &CanvasFrame, palette: &Palette, step_mm: f64) -> Result<Vec<TargetPose>> {
    frame.validate()?;
    poses_for(0, s, frame, palette, step_mm)
}

/// Full program for a quantized stroke sequence, in sequence order.
pub fn build_program(seq: &[Stroke], frame: &CanvasFrame, palette: &Palette, step_mm: f64) -> Result<RobotProgram> {
    frame.validate()?;
    let mut actions = Vec::new();
    let mut prev_color = None;
    for (i, s) in seq.iter().enumerate() {
        let color = palette.gray_index(s.g).ok_or_else(|| Error::Unquantized {
            index: i,
            reason: format!("gray {} not in palette", s.g),
        })?;
        let poses = poses_for(i, s, frame, palette, step_mm)?;
        if prev_color.is_some_and(|c| c != color) {
            actions.push(Action::Clean);
            actions.push(Action::Dry);
        }
        prev_color = Some(color);
        actions.push(Action::Dip(color));
        actions.push(Action::StrokeBegin(i));
        let hover = |p: &TargetPose| Action::Move(TargetPose { z: frame.z_travel, ..*p });
        actions.push(hover(&poses[0]));
        actions.extend(poses.iter().copied().map(Action::Move));
        actions.push(hover(&poses[poses.len() - 1]));
        actions.push(Action::StrokeEnd(i));
    }
    Ok(RobotProgram { actions })
}

/// A replayed motion and the tilt it recorded, which the program itself
/// drops to keep the tool axis vertical.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayProgram {
    pub program: RobotProgram,
    /// `[pitch, roll]` per MOVE, degrees.
    pub recorded_tilt: Vec<[f64; 2]>,
}

/// Replays a cell-centered motion sample at the frame center.
pub fn motion_to_program(m: &MotionSample, frame: &CanvasFrame) -> Result<ReplayProgram> {
    frame.validate()?;
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite value".into()));
    }
    let [cx, cy] = frame.center();
    let mut actions = Vec::with_capacity(SAMPLE_LEN + 2);
    let mut tilt = Vec::with_capacity(SAMPLE_LEN);
    actions.push(Action::StrokeBegin(0));
    for i in 0..SAMPLE_LEN {
        let [x, y, z, yaw, pitch, roll] = m.step(i);
        actions.push(Action::Move(TargetPose {
            x: cx + x,
            y: cy + y,
            z: frame.z_contact + z,
            yaw: normalize_degrees(yaw),
        }));
        tilt.push([pitch, roll]);
    }
    actions.push(Action::StrokeEnd(0));
    Ok(ReplayProgram {
        program: RobotProgram { actions },
        recorded_tilt: tilt,
    })
}

fn fmt3(out: &mut String, v: f64) {
    let s = format!("{v:.3}");
    // "-0.000" and "0.000" denote the same pose
    if s.strip_prefix('-').is_some_and(|rest| rest.bytes().all(|b| b == b'0' || b == b'.')) {
        out.push_str(&s[1..]);
    } else {
        out.push_str(&s);
    }
}

/// Serializes a program, one action per line.
pub fn emit(p: &RobotProgram) -> String {
    let mut out = String::new();
    for a in &p.actions {
        match a {
            Action::Move(pose) => {
                out.push_str("MOVE");
                for v in [pose.x, pose.y, pose.z, pose.yaw] {
                    out.push(' ');
                    fmt3(&mut out, v);
                }
            }
            Action::Dip(i) => write!(out, "DIP {i}").expect("write to String"),
            Action::Clean => out.push_str("CLEAN"),
            Action::Dry => out.push_str("DRY"),
            Action::StrokeBegin(i) => write!(out, "STROKE_BEGIN {i}").expect("write to String"),
            Action::StrokeEnd(i) => write!(out, "STROKE_END {i}").expect("write to String"),
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<RobotProgram> {
    let mut actions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let mut tok = line.split(' ');
        let op = tok.next().unwrap_or_default();
        let args: Vec<&str> = tok.collect();
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(format!("{op} takes {n} arguments, got {}", args.len())))
            }
        };
        let index = |s: &str| s.parse::<usize>().map_err(|e| err(format!("bad index {s:?}: {e}")));
        let action = match op {
            "MOVE" => {
                arity(4)?;
                let v = args
                    .iter()
                    .map(|s| match s.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(err(format!("bad number {s:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Action::Move(TargetPose {
                    x: v[0],
                    y: v[1],
                    z: v[2],
                    yaw: v[3],
                })
            }
            "DIP" => {
                arity(1)?;
                Action::Dip(index(args[0])?)
            }
            "CLEAN" => {
                arity(0)?;
                Action::Clean
            }
            "DRY" => {
                arity(0)?;
                Action::Dry
            }
            "STROKE_BEGIN" => {
                arity(1)?;
                Action::StrokeBegin(index(args[0])?)
            }
            "STROKE_END" => {
                arity(1)?;
                Action::StrokeEnd(index(args[0])?)
            }
            other => return Err(err(format!("unknown action {other:?}"))),
        };
        actions.push(action);
    }
    Ok(RobotProgram { actions })
}

/// Checks stroke markers pair up in order 0, 1, 2, ..., that contact moves
/// (below travel height) only happen inside a stroke, and that every move
/// stays within the frame rectangle (with `tol_mm` slack).
pub fn check_program(p: &RobotProgram, frame: &CanvasFrame, tol_mm: f64) -> Result<()> {
    let mut open: Option<usize> = None;
    let mut next = 0;
    for (k, a) in p.actions.iter().enumerate() {
        match *a {
            Action::StrokeBegin(i) => {
                if open.is_some() || i != next {
                    return Err(Error::Format(format!("action {k}: unexpected STROKE_BEGIN {i}")));
                }
                open = Some(i);
            }
            Action::StrokeEnd(i) => {
                if open != Some(i) {
                    return Err(Error::Format(format!("action {k}: unmatched STROKE_END {i}")));
                }
                open = None;
                next += 1;
            }
            Action::Move(pose) => {
                if !frame.contains(pose.x, pose.y, tol_mm) {
                    return Err(Error::Format(format!(
                        "action {k}: ({}, {}) outside the canvas frame",
                        pose.x, pose.y
                    )));
                }
                if pose.z < frame.z_travel && open.is_none() {
                    return Err(Error::Format(format!("action {k}: contact move outside a stroke")));
                }
            }
            Action::Dip(_) | Action::Clean | Action::Dry => {
                if open.is_some() {
                    return Err(Error::Format(format!("action {k}: auxiliary action inside a stroke")));
                }
            }
        }
    }
    if let Some(i) = open {
        return Err(Error::Format(format!("stroke {i} never ends")));
    }
    Ok(())
}

pub fn save(p: &RobotProgram, path: &Path) -> Result<()> {
    std::fs::write(path, emit(p)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<RobotProgram> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn palette() -> Palette {
        Palette {
            grays: vec![0.1, 0.5, 0.9],
            thicknesses: vec![[0.01, 0.01], [0.02, 0.02], [0.04, 0.04]],
        }
    }

    fn line_stroke(g: f64, r: f64) -> Stroke {
        Stroke {
            x0: 0.25,
            y0: 0.5,
            x1: 0.375,
            y1: 0.5,
            x2: 0.5,
            y2: 0.5,
            r0: r,
            r1: r,
            g,
        }
    }

    fn frame() -> CanvasFrame {
        CanvasFrame {
            width_mm: 200.0,
            height_mm: 200.0,
            ..CanvasFrame::default()
        }
    }

    #[test]
    fn straight_stroke_spacing() {
        // 0.25 of a 200 mm canvas: 50 mm
        let poses = stroke_to_poses(&line_stroke(0.1, 0.04), &frame(), &palette(), 5.0).unwrap();
        assert_eq!(poses.len(), 11);
        for (i, p) in poses.iter().enumerate() {
            assert!((p.x - (50.0 + 5.0 * i as f64)).abs() < 0.1);
            assert_eq!(p.z, 0.0);
        }
    }

    #[test]
    fn thickness_angles() {
        let thick = stroke_to_poses(&line_stroke(0.1, 0.04), &frame(), &palette(), 5.0).unwrap();
        assert!(thick.iter().all(|p| (p.yaw - 90.0).abs() < 1e-9));
        let half = stroke_to_poses(&line_stroke(0.1, 0.02), &frame(), &palette(), 5.0).unwrap();
        assert!(half.iter().all(|p| (p.yaw - 150.0).abs() < 1e-9));
        assert!((thickness_angle(0.5, 1.0).to_degrees() - 60.0).abs() < 1e-12);
        assert_eq!(thickness_angle(1.0, 1.0), 0.0);
        assert_eq!(thickness_angle(2.0, 1.0), 0.0);
    }

    #[test]
    fn unquantized_and_degenerate() {
        let pal = palette();
        let s = line_stroke(0.1, 0.03);
        assert!(matches!(stroke_to_poses(&s, &frame(), &pal, 2.0), Err(Error::Unquantized { .. })));
        let s = line_stroke(0.3, 0.04);
        assert!(matches!(
            build_program(&[s], &frame(), &pal, 2.0),
            Err(Error::Unquantized { index: 0, .. })
        ));
        let dot = Stroke {
            x0: 0.5,
            y0: 0.5,
            x1: 0.5,
            y1: 0.5,
            x2: 0.5,
            y2: 0.5,
            r0: 0.04,
            r1: 0.04,
            g: 0.1,
        };
        assert!(matches!(stroke_to_poses(&dot, &frame(), &pal, 2.0), Err(Error::DegenerateStroke(_))));
    }

    #[test]
    fn auxiliary_actions() {
        let pal = palette();
        let f = frame();
        assert!(build_program(&[], &f, &pal, 2.0).unwrap().actions.is_empty());
        let same = build_program(&[line_stroke(0.5, 0.04), line_stroke(0.5, 0.02)], &f, &pal, 2.0).unwrap();
        assert_eq!(same.count(|a| matches!(a, Action::Dip(_))), 2);
        assert_eq!(same.count(|a| *a == Action::Clean), 0);
        let aba = [line_stroke(0.1, 0.04), line_stroke(0.9, 0.04), line_stroke(0.1, 0.04)];
        let p = build_program(&aba, &f, &pal, 2.0).unwrap();
        assert_eq!(p.count(|a| *a == Action::Clean), 2);
        assert_eq!(p.count(|a| *a == Action::Dry), 2);
        check_program(&p, &f, 1e-9).unwrap();
    }

    #[test]
    fn emit_format() {
        assert_eq!(emit(&RobotProgram::default()), "");
        let p = RobotProgram {
            actions: vec![Action::Move(TargetPose {
                x: 1.0,
                y: 2.0,
                z: 3.0,
                yaw: 45.0,
            })],
        };
        assert_eq!(emit(&p), "MOVE 1.000 2.000 3.000 45.000\n");
        let neg = RobotProgram {
            actions: vec![Action::Move(TargetPose {
                x: -0.0001,
                y: -1.5,
                z: 0.0,
                yaw: -0.0,
            })],
        };
        assert_eq!(emit(&neg), "MOVE 0.000 -1.500 0.000 0.000\n");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse("JUMP 1\n").is_err());
        assert!(parse("MOVE 1 2 3\n").is_err());
        assert!(parse("DIP -1\n").is_err());
        assert!(parse("MOVE 1 2 3 nan\n").is_err());
        assert!(matches!(parse("CLEAN\nDRY x\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn safety_checks() {
        let f = frame();
        let inside = TargetPose {
            x: 10.0,
            y: 10.0,
            z: 0.0,
            yaw: 0.0,
        };
        let stray = RobotProgram {
            actions: vec![Action::Move(inside)],
        };
        assert!(check_program(&stray, &f, 0.0).is_err());
        let outside = RobotProgram {
            actions: vec![
                Action::StrokeBegin(0),
                Action::Move(TargetPose { x: -5.0, ..inside }),
                Action::StrokeEnd(0),
            ],
        };
        assert!(check_program(&outside, &f, 0.0).is_err());
        let skipped = RobotProgram {
            actions: vec![Action::StrokeBegin(1), Action::StrokeEnd(1)],
        };
        assert!(check_program(&skipped, &f, 0.0).is_err());
    }

    #[test]
    fn replay_of_still_motion() {
        let m = MotionSample::from_rows(vec![0.0; 360]).unwrap();
        let f = CanvasFrame {
            origin_x: 100.0,
            origin_y: 50.0,
            z_contact: 3.0,
            ..frame()
        };
        let r = motion_to_program(&m, &f).unwrap();
        assert_eq!(r.program.actions.len(), 62);
        assert!(r.program.moves().all(|p| *p
            == TargetPose {
                x: 200.0,
                y: 150.0,
                z: 3.0,
                yaw: 0.0
            }));
        assert_eq!(r.recorded_tilt.len(), 60);
    }

    #[test]
    fn degree_normalization() {
        assert_eq!(normalize_degrees(180.0), 180.0);
        assert_eq!(normalize_degrees(-180.0), 180.0);
        assert_eq!(normalize_degrees(270.0), -90.0);
        assert_eq!(normalize_degrees(0.0), 0.0);
    }
}
