//! Brush-tip pose from a three-marker rigid body.
//!
//! The body frame comes from the marker triangle: origin at the centroid,
//! first axis along marker 1 → 2, second axis from marker 1 → 3 made
//! orthogonal by Gram–Schmidt, third axis their cross product. Orientation
//! is measured relative to the calibration's reference triangle and
//! reported as Z-Y-X (yaw, pitch, roll) Euler angles in degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
/// Row-major 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: Vec3) -> Vec3 {
    [dot(a[0], v), dot(a[1], v), dot(a[2], v)]
}

fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// Rotation `Rz(yaw) · Ry(pitch) · Rx(roll)`, angles in degrees.
pub fn rotation_zyx(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sy, cy) = yaw.to_radians().sin_cos();
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
}

/// Inverse of [`rotation_zyx`]: `(yaw, pitch, roll)` in degrees.
pub fn euler_zyx(r: &Mat3) -> (f64, f64, f64) {
    let pitch = (-r[2][0]).clamp(-1.0, 1.0).asin();
    let yaw = r[1][0].atan2(r[0][0]);
    let roll = r[2][1].atan2(r[2][2]);
    (yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerCalibration {
    /// Brush tip relative to the marker centroid, in the body frame, mm.
    pub tip_offset: Vec3,
    /// Marker positions when the brush is at zero orientation, mm.
    pub reference: [Vec3; 3],
}

impl Default for MarkerCalibration {
    fn default() -> Self {
        MarkerCalibration {
            tip_offset: [0.0, 0.0, 0.0],
            reference: [[0.0, 0.0, 0.0], [60.0, 0.0, 0.0], [0.0, 40.0, 0.0]],
        }
    }
}

/// Tip position (mm) and orientation (degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

/// Orthonormal frame of a marker triangle, as matrix columns, plus its
/// centroid.
fn triangle_frame(m: &[Vec3; 3]) -> Result<(Mat3, Vec3)> {
    let e1v = sub(m[1], m[0]);
    let v = sub(m[2], m[0]);
    let len1 = norm(e1v);
    let lenv = norm(v);
    if len1 <= 1e-9 || lenv <= 1e-9 {
        return Err(Error::DegenerateRigidBody);
    }
    let e1 = scale(e1v, 1.0 / len1);
    let perp = sub(v, scale(e1, dot(v, e1)));
    let plen = norm(perp);
    if plen <= 1e-9 * lenv {
        return Err(Error::DegenerateRigidBody);
    }
    let e2 = scale(perp, 1.0 / plen);
    let e3 = cross(e1, e2);
    let frame = [
        [e1[0], e2[0], e3[0]],
        [e1[1], e2[1], e3[1]],
        [e1[2], e2[2], e3[2]],
    ];
    let centroid = scale(
        [
            m[0][0] + m[1][0] + m[2][0],
            m[0][1] + m[1][1] + m[2][1],
            m[0][2] + m[1][2] + m[2][2],
        ],
        1.0 / 3.0,
    );
    Ok((frame, centroid))
}

/// Rotation of the observed triangle relative to the reference one.
pub fn body_rotation(markers: &[Vec3; 3], cal: &MarkerCalibration) -> Result<Mat3> {
    let (current, _) = triangle_frame(markers)?;
    let (reference, _) = triangle_frame(&cal.reference)?;
    Ok(mat_mul(&current, &transpose(&reference)))
}

/// Brush-tip pose from three marker positions.
pub fn derive_tip_pose(markers: &[Vec3; 3], cal: &MarkerCalibration) -> Result<TipPose> {
    if markers.iter().flatten().any(|v| !v.is_finite()) || cal.tip_offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite marker or offset".into()));
    }
    let (_, centroid) = triangle_frame(markers)?;
    let r = body_rotation(markers, cal)?;
    let off = mat_vec(&r, cal.tip_offset);
    let (yaw, pitch, roll) = euler_zyx(&r);
    Ok(TipPose {
        x: centroid[0] + off[0],
        y: centroid[1] + off[1],
        z: centroid[2] + off[2],
        yaw,
        pitch,
        roll,
    })
}
