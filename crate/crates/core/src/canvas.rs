//! Grayscale raster canvas with opaque stroke stamping.
//!
//! A stroke covers every pixel whose center lies within the interpolated
//! radius of at least one sampled curve point. Coverage is binary and the
//! stroke gray overwrites whatever was underneath.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stroke::Stroke;

/// Default curve sampling density, in samples per pixel of control-polygon
/// length.
pub const DEFAULT_DENSITY: f64 = 4.0;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// Horizontal run of covered pixels `[x_start, x_end]` (inclusive) on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub y: usize,
    pub x_start: usize,
    pub x_end: usize,
}

/// Set of pixels covered by one stroke, as disjoint row spans sorted by
/// `(y, x_start)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Footprint {
    spans: Vec<Span>,
}

impl Footprint {
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.spans.iter().map(|s| s.x_end - s.x_start + 1).sum()
    }

    /// Covered pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spans
            .iter()
            .flat_map(|s| (s.x_start..=s.x_end).map(move |x| (x, s.y)))
    }
}

/// Parameter values at which a stroke is sampled on a `width`×`height`
/// raster. The count grows with the control-polygon length in pixels, so
/// consecutive samples are at most `1 / density` pixels apart.
pub fn sample_params(s: &Stroke, width: usize, height: usize, density: f64) -> Vec<f64> {
    let (w, h) = (width as f64, height as f64);
    let leg = |ax: f64, ay: f64, bx: f64, by: f64| ((bx - ax) * w).hypot((by - ay) * h);
    let poly_len = leg(s.x0, s.y0, s.x1, s.y1) + leg(s.x1, s.y1, s.x2, s.y2);
    let n = ((density * poly_len).ceil() as usize).max(1);
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Center and radius, in pixel units, of the disc stamped at parameter `t`.
pub fn sample_disc(s: &Stroke, t: f64, width: usize, height: usize) -> (f64, f64, f64) {
    let [x, y] = s.point_unchecked(t);
    let scale = width.max(height) as f64;
    (
        x * width as f64,
        y * height as f64,
        s.radius_unchecked(t) * scale,
    )
}

/// Whether the center of pixel `(px, py)` lies inside the disc. Shared by
/// the span rasterizer and anything that needs to agree with it exactly.
#[inline]
pub fn covers(px: i64, py: i64, cx: f64, cy: f64, radius: f64) -> bool {
    let dx = (px as f64 + 0.5) - cx;
    let dy = (py as f64 + 0.5) - cy;
    dx * dx + dy * dy <= radius * radius
}

/// Pixel interval on row `py` covered by a disc, unclipped.
fn disc_row(py: i64, cx: f64, cy: f64, radius: f64) -> Option<(i64, i64)> {
    let pred = |px: i64| covers(px, py, cx, cy, radius);
    let base = (cx - 0.5).floor() as i64;
    let start = if pred(base) {
        base
    } else if pred(base + 1) {
        base + 1
    } else {
        return None;
    };
    let dy = (py as f64 + 0.5) - cy;
    let half = (radius * radius - dy * dy).max(0.0).sqrt();
    let mut lo = ((cx - half - 0.5).ceil() as i64).min(start);
    while !pred(lo) {
        lo += 1;
    }
    while pred(lo - 1) {
        lo -= 1;
    }
    let mut hi = ((cx + half - 0.5).floor() as i64).max(start);
    while !pred(hi) {
        hi -= 1;
    }
    while pred(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

/// Rasterizes the pixel set covered by `s` on a `width`×`height` grid.
pub fn footprint(s: &Stroke, width: usize, height: usize, density: f64) -> Footprint {
    let mut rows: Vec<Vec<(i64, i64)>> = vec![Vec::new(); height];
    let (w, h) = (width as i64, height as i64);
    for t in sample_params(s, width, height, density) {
        let (cx, cy, radius) = sample_disc(s, t, width, height);
        let y_lo = ((cy - radius - 0.5).floor() as i64).max(0);
        let y_hi = ((cy + radius - 0.5).ceil() as i64).min(h - 1);
        for py in y_lo..=y_hi {
            if let Some((lo, hi)) = disc_row(py, cx, cy, radius) {
                let (lo, hi) = (lo.max(0), hi.min(w - 1));
                if lo <= hi {
                    rows[py as usize].push((lo, hi));
                }
            }
        }
    }

    let mut spans = Vec::new();
    for (y, mut runs) in rows.into_iter().enumerate() {
        if runs.is_empty() {
            continue;
        }
        runs.sort_unstable();
        let (mut cur_lo, mut cur_hi) = runs[0];
        for &(lo, hi) in &runs[1..] {
            if lo <= cur_hi + 1 {
                cur_hi = cur_hi.max(hi);
            } else {
                spans.push(Span {
                    y,
                    x_start: cur_lo as usize,
                    x_end: cur_hi as usize,
                });
                (cur_lo, cur_hi) = (lo, hi);
            }
        }
        spans.push(Span {
            y,
            x_start: cur_lo as usize,
            x_end: cur_hi as usize,
        });
    }
    Footprint { spans }
}

impl Canvas {
    /// Blank (white) canvas.
    pub fn new(width: usize, height: usize) -> Result<Canvas> {
        Canvas::filled(width, height, 1.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Canvas> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "canvas dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("fill value {value}")));
        }
        Ok(Canvas {
            width,
            height,
            pixels: vec![value; width * height],
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Canvas> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "canvas dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(width * height, pixels.len()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("pixel intensity {v}")));
        }
        Ok(Canvas {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Sets one pixel, clamping the value into `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Copies out a rectangular region. The rectangle must lie inside the
    /// canvas.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Canvas> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::Layout(format!(
                "rectangle [{x}, {y}, {w}, {h}] outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        Ok(Canvas {
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn footprint(&self, s: &Stroke, density: f64) -> Footprint {
        footprint(s, self.width, self.height, density)
    }

    /// Paints `fp` with a flat gray value in place.
    pub fn fill(&mut self, fp: &Footprint, gray: f64) {
        let gray = gray.clamp(0.0, 1.0);
        for span in fp.spans() {
            let row = span.y * self.width;
            self.pixels[row + span.x_start..=row + span.x_end].fill(gray);
        }
    }

    /// Returns a copy of this canvas with `s` stamped on top.
    pub fn render_stroke(&self, s: &Stroke, density: f64) -> Canvas {
        let mut out = self.clone();
        out.paint(s, density);
        out
    }

    /// Stamps `s` onto this canvas in place.
    pub fn paint(&mut self, s: &Stroke, density: f64) {
        let fp = self.footprint(s, density);
        self.fill(&fp, s.g);
    }

    /// Left fold of [`Canvas::render_stroke`]; later strokes overpaint
    /// earlier ones.
    pub fn render_sequence(&self, seq: &[Stroke], density: f64) -> Canvas {
        let mut out = self.clone();
        for s in seq {
            out.paint(s, density);
        }
        out
    }

    /// Renders `seq` at `factor`× resolution and box-filters back down,
    /// giving soft edges for previews. `factor = 1` equals
    /// [`Canvas::render_sequence`] on a blank canvas.
    pub fn render_supersampled(
        width: usize,
        height: usize,
        seq: &[Stroke],
        factor: usize,
        density: f64,
    ) -> Result<Canvas> {
        if factor == 0 {
            return Err(Error::InvalidParameter("supersampling factor must be >= 1".into()));
        }
        let big = Canvas::new(width * factor, height * factor)?.render_sequence(seq, density);
        if factor == 1 {
            return Ok(big);
        }
        let norm = (factor * factor) as f64;
        let mut pixels = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for sy in 0..factor {
                    let row = (y * factor + sy) * big.width;
                    for sx in 0..factor {
                        acc += big.pixels[row + x * factor + sx];
                    }
                }
                pixels[y * width + x] = (acc / norm).clamp(0.0, 1.0);
            }
        }
        Canvas::from_pixels(width, height, pixels)
    }

    /// Change in summed squared error against `target` if `fp` were filled
    /// with `gray`.
    pub(crate) fn sse_delta(&self, target: &Canvas, fp: &Footprint, gray: f64) -> f64 {
        let mut delta = 0.0;
        for span in fp.spans() {
            let row = span.y * self.width;
            for i in row + span.x_start..=row + span.x_end {
                let t = target.pixels[i];
                let before = self.pixels[i] - t;
                let after = gray - t;
                delta += after * after - before * before;
            }
        }
        delta
    }

    /// Writes a binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        buf.extend(self.pixels.iter().map(|&v| (v * 255.0).round() as u8));
        w.write_all(&buf).map_err(|e| Error::io("<pgm writer>", e))
    }

    /// Reads a binary PGM (P5). 16-bit files are accepted and scaled by
    /// their maxval.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Canvas> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)
            .map_err(|e| Error::io("<pgm reader>", e))?;
        parse_pgm(&data)
    }

    pub fn load_pgm(path: &Path) -> Result<Canvas> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_pgm(&data)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_pgm(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

fn parse_pgm(data: &[u8]) -> Result<Canvas> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found {magic:?}")));
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("bad PGM {what}: {t:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bytes_per;
    if data.len() < pos + need {
        return Err(Error::Format(format!(
            "PGM raster truncated: need {need} bytes, have {}",
            data.len().saturating_sub(pos)
        )));
    }
    let raster = &data[pos..pos + need];
    let scale = maxval as f64;
    let pixels: Vec<f64> = if bytes_per == 1 {
        raster.iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect()
    };
    Canvas::from_pixels(width, height, pixels)
}

/// Mean squared intensity difference between two canvases of equal size.
pub fn mse(a: &Canvas, b: &Canvas) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape(
            format!("{}x{}", a.width, a.height),
            format!("{}x{}", b.width, b.height),
        ));
    }
    let sse: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sse / a.pixels.len() as f64)
}
