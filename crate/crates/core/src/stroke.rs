//! Quadratic Bezier brushstrokes with per-endpoint radii and a gray value.
//!
//! Coordinates are normalized to the canvas (`x` as a fraction of width, `y`
//! as a fraction of height). Radii are fractions of the larger canvas
//! dimension and are capped at [`MAX_RADIUS`].

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible stroke radius, as a fraction of the canvas size.
pub const MAX_RADIUS: f64 = 0.25;

/// Default pull factor applied by [`Stroke::restrict_control`].
pub const DEFAULT_RHO: f64 = 0.5;

/// One brushstroke: control points `P0 = (x0, y0)`, `P1 = (x1, y1)`,
/// `P2 = (x2, y2)`, start/end radii and gray level (0 = black, 1 = white).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub r0: f64,
    pub r1: f64,
    pub g: f64,
}

fn check_unit_param(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl Stroke {
    pub fn p0(&self) -> [f64; 2] {
        [self.x0, self.y0]
    }

    pub fn p1(&self) -> [f64; 2] {
        [self.x1, self.y1]
    }

    pub fn p2(&self) -> [f64; 2] {
        [self.x2, self.y2]
    }

    /// Checks the coordinate, radius and gray invariants.
    pub fn validate(&self) -> Result<()> {
        let coords = [
            ("x0", self.x0),
            ("y0", self.y0),
            ("x1", self.x1),
            ("y1", self.y1),
            ("x2", self.x2),
            ("y2", self.y2),
        ];
        for (name, v) in coords {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidStroke(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, r) in [("r0", self.r0), ("r1", self.r1)] {
            if !(r > 0.0 && r <= MAX_RADIUS) {
                return Err(Error::InvalidStroke(format!(
                    "{name} = {r} outside (0, {MAX_RADIUS}]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.g) {
            return Err(Error::InvalidStroke(format!("g = {} outside [0, 1]", self.g)));
        }
        Ok(())
    }

    /// Pulls the middle control point toward the chord midpoint by `rho`.
    ///
    /// `rho = 0` is the identity and `rho = 1` makes the stroke a straight
    /// segment.
    pub fn restrict_control(&self, rho: f64) -> Result<Stroke> {
        check_unit_param("rho", rho)?;
        let mx = 0.5 * (self.x0 + self.x2);
        let my = 0.5 * (self.y0 + self.y2);
        Ok(Stroke {
            x1: (1.0 - rho) * self.x1 + rho * mx,
            y1: (1.0 - rho) * self.y1 + rho * my,
            ..*self
        })
    }

    /// Whether this stroke lies in the image of [`Stroke::restrict_control`]
    /// with factor `rho`, i.e. some middle control point inside the unit
    /// square is mapped onto `(x1, y1)`.
    pub fn is_restricted(&self, rho: f64, tol: f64) -> bool {
        if !(0.0..=1.0).contains(&rho) {
            return false;
        }
        let mx = 0.5 * (self.x0 + self.x2);
        let my = 0.5 * (self.y0 + self.y2);
        if rho == 1.0 {
            return (self.x1 - mx).abs() <= tol && (self.y1 - my).abs() <= tol;
        }
        let sx = (self.x1 - rho * mx) / (1.0 - rho);
        let sy = (self.y1 - rho * my) / (1.0 - rho);
        let inside = |v: f64| v >= -tol && v <= 1.0 + tol;
        inside(sx) && inside(sy)
    }

    /// Point on the curve at parameter `t`.
    pub fn eval_point(&self, t: f64) -> Result<[f64; 2]> {
        check_unit_param("t", t)?;
        Ok(self.point_unchecked(t))
    }

    /// Interpolated radius at parameter `t`.
    pub fn eval_radius(&self, t: f64) -> Result<f64> {
        check_unit_param("t", t)?;
        Ok(self.radius_unchecked(t))
    }

    /// Unit tangent of the curve at parameter `t`.
    pub fn eval_tangent(&self, t: f64) -> Result<[f64; 2]> {
        check_unit_param("t", t)?;
        let [dx, dy] = self.derivative(t);
        let norm = dx.hypot(dy);
        if norm <= 1e-12 {
            return Err(Error::DegenerateTangent { t });
        }
        Ok([dx / norm, dy / norm])
    }

    /// Unnormalized derivative `B'(t)`.
    pub fn derivative(&self, t: f64) -> [f64; 2] {
        let a = 2.0 * (1.0 - t);
        let b = 2.0 * t;
        [
            a * (self.x1 - self.x0) + b * (self.x2 - self.x1),
            a * (self.y1 - self.y0) + b * (self.y2 - self.y1),
        ]
    }

    pub(crate) fn point_unchecked(&self, t: f64) -> [f64; 2] {
        let u = 1.0 - t;
        let a = u * u;
        let b = 2.0 * u * t;
        let c = t * t;
        [
            a * self.x0 + b * self.x1 + c * self.x2,
            a * self.y0 + b * self.y1 + c * self.y2,
        ]
    }

    pub(crate) fn radius_unchecked(&self, t: f64) -> f64 {
        (1.0 - t) * self.r0 + t * self.r1
    }
}

/// Writes strokes as JSON Lines, one object per stroke.
pub fn write_jsonl<W: Write>(mut w: W, strokes: &[Stroke]) -> Result<()> {
    for s in strokes {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<stroke writer>", e))?;
    }
    Ok(())
}

/// Reads strokes from JSON Lines; blank lines are ignored.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Stroke>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<stroke reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Stroke = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, strokes: &[Stroke]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, strokes)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Stroke>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stroke(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> Stroke {
        Stroke {
            x0: p0[0],
            y0: p0[1],
            x1: p1[0],
            y1: p1[1],
            x2: p2[0],
            y2: p2[1],
            r0: 0.1,
            r1: 0.2,
            g: 0.0,
        }
    }

    #[test]
    fn restrict_examples() {
        let s = stroke([0.0, 0.0], [0.5, 1.0], [1.0, 0.0]);
        assert_eq!(s.restrict_control(0.0).unwrap().p1(), [0.5, 1.0]);
        assert_eq!(s.restrict_control(1.0).unwrap().p1(), [0.5, 0.0]);
        assert_eq!(s.restrict_control(0.5).unwrap().p1(), [0.5, 0.5]);
        assert!(matches!(
            s.restrict_control(1.5),
            Err(Error::InvalidParameter(_))
        ));
        assert!(s.restrict_control(-0.1).is_err());
    }

    #[test]
    fn point_examples() {
        let s = stroke([0.0, 0.0], [0.5, 0.5], [1.0, 0.0]);
        assert_eq!(s.eval_point(0.0).unwrap(), [0.0, 0.0]);
        assert_eq!(s.eval_point(1.0).unwrap(), [1.0, 0.0]);
        assert_eq!(s.eval_point(0.5).unwrap(), [0.5, 0.25]);
        assert!(s.eval_point(1.01).is_err());
    }

    #[test]
    fn radius_examples() {
        let s = stroke([0.0, 0.0], [0.5, 0.5], [1.0, 0.0]);
        assert_eq!(s.eval_radius(0.0).unwrap(), 0.1);
        assert_eq!(s.eval_radius(1.0).unwrap(), 0.2);
        assert!((s.eval_radius(0.5).unwrap() - 0.15).abs() < 1e-15);
        assert!(s.eval_radius(-0.5).is_err());
    }

    #[test]
    fn tangent_examples() {
        let straight = stroke([0.0, 0.0], [0.5, 0.0], [1.0, 0.0]);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(straight.eval_tangent(t).unwrap(), [1.0, 0.0]);
        }
        let bent = stroke([0.0, 0.0], [0.0, 0.5], [1.0, 0.5]);
        assert_eq!(bent.eval_tangent(0.0).unwrap(), [0.0, 1.0]);
        let point = stroke([0.3, 0.3], [0.3, 0.3], [0.3, 0.3]);
        assert!(matches!(
            point.eval_tangent(0.5),
            Err(Error::DegenerateTangent { .. })
        ));
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut s = stroke([0.0, 0.0], [0.5, 0.5], [1.0, 0.0]);
        assert!(s.validate().is_ok());
        s.r1 = 0.26;
        assert!(s.validate().is_err());
        s.r1 = 0.0;
        assert!(s.validate().is_err());
        s.r1 = 0.25;
        s.x2 = 1.0001;
        assert!(s.validate().is_err());
        s.x2 = 1.0;
        s.g = -0.01;
        assert!(s.validate().is_err());
    }

    #[test]
    fn jsonl_key_order_and_roundtrip() {
        let s = Stroke {
            x0: 0.1,
            y0: 0.2,
            x1: 0.3,
            y1: 0.4,
            x2: 0.5,
            y2: 0.6,
            r0: 0.01,
            r1: 0.02,
            g: 1.0 / 3.0,
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[s, s]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "{\"x0\":0.1,\"y0\":0.2,\"x1\":0.3,\"y1\":0.4,\"x2\":0.5,\"y2\":0.6,\"r0\":0.01,\"r1\":0.02,\"g\":0.3333333333333333}\n"
        ));
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![s, s]);
    }

    fn arb_stroke() -> impl Strategy<Value = Stroke> {
        (
            prop::array::uniform6(0.0..=1.0f64),
            1e-4..=MAX_RADIUS,
            1e-4..=MAX_RADIUS,
            0.0..=1.0f64,
        )
            .prop_map(|(c, r0, r1, g)| Stroke {
                x0: c[0],
                y0: c[1],
                x1: c[2],
                y1: c[3],
                x2: c[4],
                y2: c[5],
                r0,
                r1,
                g,
            })
    }

    proptest! {
        #[test]
        fn restrict_identity_and_idempotence(s in arb_stroke()) {
            prop_assert_eq!(s.restrict_control(0.0).unwrap(), s);
            let once = s.restrict_control(1.0).unwrap();
            let twice = once.restrict_control(1.0).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn restrict_stays_in_bounding_box(s in arb_stroke(), rho in 0.0..=1.0f64) {
            let r = s.restrict_control(rho).unwrap();
            prop_assert!(r.validate().is_ok());
            let lo_x = s.x0.min(s.x1).min(s.x2);
            let hi_x = s.x0.max(s.x1).max(s.x2);
            let lo_y = s.y0.min(s.y1).min(s.y2);
            let hi_y = s.y0.max(s.y1).max(s.y2);
            prop_assert!(r.x1 >= lo_x - 1e-15 && r.x1 <= hi_x + 1e-15);
            prop_assert!(r.y1 >= lo_y - 1e-15 && r.y1 <= hi_y + 1e-15);
            prop_assert!(r.is_restricted(rho, 1e-9));
        }

        #[test]
        fn endpoints_interpolate(s in arb_stroke()) {
            prop_assert_eq!(s.eval_point(0.0).unwrap(), s.p0());
            prop_assert_eq!(s.eval_point(1.0).unwrap(), s.p2());
        }

        #[test]
        fn radius_between_endpoints(s in arb_stroke(), t in 0.0..=1.0f64) {
            let r = s.eval_radius(t).unwrap();
            prop_assert!(r >= s.r0.min(s.r1) - 1e-15 && r <= s.r0.max(s.r1) + 1e-15);
        }

        #[test]
        fn tangent_is_unit(s in arb_stroke(), t in 0.0..=1.0f64) {
            if let Ok([dx, dy]) = s.eval_tangent(t) {
                prop_assert!((dx.hypot(dy) - 1.0).abs() < 1e-9);
            }
        }
    }
}
