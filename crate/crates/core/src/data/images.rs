//! Brushstroke scans: grid layouts, cell cropping and normalization to
//! fixed-size stroke images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canvas::Canvas;
use crate::error::{Error, Result};

pub const STROKE_HEIGHT: usize = 32;
pub const STROKE_WIDTH: usize = 64;

/// A 32×64 single-channel brushstroke image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeImage {
    pixels: Vec<f64>,
}

impl StrokeImage {
    pub fn from_pixels(pixels: Vec<f64>) -> Result<StrokeImage> {
        if pixels.len() != STROKE_HEIGHT * STROKE_WIDTH {
            return Err(Error::shape(
                format!("{STROKE_HEIGHT}x{STROKE_WIDTH}"),
                format!("{} values", pixels.len()),
            ));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("pixel intensity {v}")));
        }
        Ok(StrokeImage { pixels })
    }

    pub fn uniform(value: f64) -> Result<StrokeImage> {
        StrokeImage::from_pixels(vec![value; STROKE_HEIGHT * STROKE_WIDTH])
    }

    pub fn from_canvas(c: &Canvas) -> Result<StrokeImage> {
        if c.width() != STROKE_WIDTH || c.height() != STROKE_HEIGHT {
            return Err(Error::shape(
                format!("{STROKE_WIDTH}x{STROKE_HEIGHT}"),
                format!("{}x{}", c.width(), c.height()),
            ));
        }
        StrokeImage::from_pixels(c.pixels().to_vec())
    }

    pub fn to_canvas(&self) -> Canvas {
        Canvas::from_pixels(STROKE_WIDTH, STROKE_HEIGHT, self.pixels.clone())
            .expect("stroke image invariants")
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * STROKE_WIDTH + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn mse(&self, other: &StrokeImage) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / self.pixels.len() as f64
    }
}

/// Axis-aligned pixel rectangle `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl From<[usize; 4]> for Rect {
    fn from(v: [usize; 4]) -> Rect {
        Rect {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        }
    }
}

impl From<Rect> for [usize; 4] {
    fn from(r: Rect) -> [usize; 4] {
        [r.x, r.y, r.w, r.h]
    }
}

impl Rect {
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutKind {
    /// 20 square 2"×2" cells.
    #[serde(rename = "GRID20")]
    Grid20,
    /// 14 cells mixing 2"×2" squares and 2"×4" rectangles.
    #[serde(rename = "GRID14")]
    Grid14,
    /// Any other arrangement.
    #[serde(rename = "CUSTOM")]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    /// Cell rectangle in scan pixels.
    pub px: Rect,
    /// Cell center on the paper, mm.
    pub center_mm: [f64; 2],
    /// Pre-printed index label, relative to the cell rectangle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_mask: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub kind: LayoutKind,
    pub cells: Vec<Cell>,
}

const INCH_MM: f64 = 25.4;

impl GridLayout {
    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            LayoutKind::Grid20 => Some(20),
            LayoutKind::Grid14 => Some(14),
            LayoutKind::Custom => None,
        };
        if let Some(n) = expected {
            if self.cells.len() != n {
                return Err(Error::Layout(format!(
                    "{:?} layout needs {n} cells, found {}",
                    self.kind,
                    self.cells.len()
                )));
            }
        }
        for (i, a) in self.cells.iter().enumerate() {
            if a.px.w == 0 || a.px.h == 0 {
                return Err(Error::Layout(format!("cell {} is empty", a.index)));
            }
            for b in &self.cells[i + 1..] {
                if a.px.overlaps(&b.px) {
                    return Err(Error::Layout(format!(
                        "cells {} and {} overlap",
                        a.index, b.index
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds a layout from cell rectangles given in inches on a sheet
    /// scanned at `dpi`, with the sheet origin at scan pixel `(0, 0)`.
    pub fn from_inches(kind: LayoutKind, rects_in: &[[f64; 4]], dpi: f64) -> GridLayout {
        let cells = rects_in
            .iter()
            .enumerate()
            .map(|(index, r)| {
                let px = Rect {
                    x: (r[0] * dpi).round() as usize,
                    y: (r[1] * dpi).round() as usize,
                    w: (r[2] * dpi).round() as usize,
                    h: (r[3] * dpi).round() as usize,
                };
                let center_mm = [
                    (r[0] + r[2] / 2.0) * INCH_MM,
                    (r[1] + r[3] / 2.0) * INCH_MM,
                ];
                Cell {
                    index,
                    px,
                    center_mm,
                    index_mask: None,
                }
            })
            .collect();
        GridLayout { kind, cells }
    }

    /// Four columns by five rows of 2" squares.
    pub fn grid20(dpi: f64) -> GridLayout {
        let rects: Vec<[f64; 4]> = (0..5)
            .flat_map(|row| (0..4).map(move |col| [col as f64 * 2.0, row as f64 * 2.0, 2.0, 2.0]))
            .collect();
        GridLayout::from_inches(LayoutKind::Grid20, &rects, dpi)
    }

    /// Four tall 2"×4" cells, eight 2" squares, then two wide 4"×2" cells.
    pub fn grid14(dpi: f64) -> GridLayout {
        let mut rects = Vec::new();
        for col in 0..4 {
            rects.push([col as f64 * 2.0, 0.0, 2.0, 4.0]);
        }
        for row in 0..2 {
            for col in 0..4 {
                rects.push([col as f64 * 2.0, 4.0 + row as f64 * 2.0, 2.0, 2.0]);
            }
        }
        for col in 0..2 {
            rects.push([col as f64 * 4.0, 8.0, 4.0, 2.0]);
        }
        GridLayout::from_inches(LayoutKind::Grid14, &rects, dpi)
    }

    pub fn load_json(path: &Path) -> Result<GridLayout> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let layout: GridLayout = serde_json::from_str(&text)?;
        layout.validate()?;
        Ok(layout)
    }

    /// Index of the cell whose center is nearest to `(x, y)` mm.
    pub fn nearest_cell(&self, x: f64, y: f64) -> Option<&Cell> {
        self.cells.iter().min_by(|a, b| {
            let da = (a.center_mm[0] - x).hypot(a.center_mm[1] - y);
            let db = (b.center_mm[0] - x).hypot(b.center_mm[1] - y);
            da.total_cmp(&db)
        })
    }
}

/// Crops one sub-image per layout cell, in layout order.
pub fn crop_cells(scan: &Canvas, layout: &GridLayout) -> Result<Vec<(usize, Canvas)>> {
    layout
        .cells
        .iter()
        .map(|c| Ok((c.index, scan.crop(c.px.x, c.px.y, c.px.w, c.px.h)?)))
        .collect()
}

/// Nearest-rank percentile of a non-empty slice.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Bilinear resize using pixel-center alignment, clamped at the borders.
pub fn resize_bilinear(src: &Canvas, out_w: usize, out_h: usize) -> Canvas {
    let (sw, sh) = (src.width(), src.height());
    let sx = sw as f64 / out_w as f64;
    let sy = sh as f64 / out_h as f64;
    let mut out = vec![0.0; out_w * out_h];
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let top = src.get(x0, y0) * (1.0 - wx) + src.get(x1, y0) * wx;
            let bottom = src.get(x0, y1) * (1.0 - wx) + src.get(x1, y1) * wx;
            out[oy * out_w + ox] = (top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0);
        }
    }
    Canvas::from_pixels(out_w, out_h, out).expect("resize output in range")
}

/// White-balances a cell so its 99th-percentile intensity becomes white,
/// blanks the index label region, and resizes to 32×64.
pub fn normalize_stroke_image(cell: &Canvas, index_mask: Option<Rect>) -> Result<StrokeImage> {
    let p99 = percentile(cell.pixels(), 0.99);
    let scale = if p99 > 0.0 { 1.0 / p99 } else { 1.0 };
    let mut balanced = cell.clone();
    for y in 0..cell.height() {
        for x in 0..cell.width() {
            let masked = index_mask.is_some_and(|r| r.contains(x, y));
            let v = if masked { 1.0 } else { cell.get(x, y) * scale };
            balanced.set(x, y, v);
        }
    }
    StrokeImage::from_canvas(&resize_bilinear(&balanced, STROKE_WIDTH, STROKE_HEIGHT))
}
