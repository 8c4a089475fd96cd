//! Motion-capture streams: parsing, Z cut-off segmentation, centering on
//! grid cells and resampling to fixed-length motion samples.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::images::GridLayout;
use super::rigid::{derive_tip_pose, MarkerCalibration};
use crate::error::{Error, Result};

/// Fixed number of time steps in a motion sample.
pub const SAMPLE_LEN: usize = 60;
/// Channels per time step: x, y, z, yaw, pitch, roll.
pub const CHANNELS: usize = 6;

/// One brush-tip pose at one capture instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MocapFrame {
    pub frame: u64,
    pub time_s: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl MocapFrame {
    fn channels(&self) -> [f64; CHANNELS] {
        [self.x, self.y, self.z, self.yaw, self.pitch, self.roll]
    }

    pub fn is_finite(&self) -> bool {
        self.time_s.is_finite() && self.channels().iter().all(|v| v.is_finite())
    }
}

/// A 6×60 pose trajectory, stored row-major (one row per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSample {
    values: Vec<f64>,
}

impl MotionSample {
    pub fn from_rows(values: Vec<f64>) -> Result<MotionSample> {
        if values.len() != CHANNELS * SAMPLE_LEN {
            return Err(Error::shape(
                format!("{CHANNELS}x{SAMPLE_LEN}"),
                format!("{} values", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value".into()));
        }
        Ok(MotionSample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.values[channel * SAMPLE_LEN + step]
    }

    /// `[x, y, z, yaw, pitch, roll]` at one time step.
    pub fn step(&self, step: usize) -> [f64; CHANNELS] {
        std::array::from_fn(|c| self.get(c, step))
    }
}

/// Splits a stream into maximal runs of frames strictly below `z_cut`.
pub fn segment_by_z(frames: &[MocapFrame], z_cut: f64) -> Vec<Vec<MocapFrame>> {
    let mut out = Vec::new();
    let mut current: Vec<MocapFrame> = Vec::new();
    for f in frames {
        if f.z < z_cut {
            current.push(*f);
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Translates x and y so that `cell_center` becomes the origin.
pub fn center_segment(seg: &[MocapFrame], cell_center: [f64; 2]) -> Vec<MocapFrame> {
    seg.iter()
        .map(|f| MocapFrame {
            x: f.x - cell_center[0],
            y: f.y - cell_center[1],
            ..*f
        })
        .collect()
}

/// Source frame indices used to build a sample of length `len` from `n`
/// frames: uniform under-sampling when longer, final-frame padding when
/// shorter.
pub fn resample_indices(n: usize, len: usize) -> Vec<usize> {
    if n >= len {
        if len == 1 {
            return vec![0];
        }
        (0..len)
            .map(|i| ((i * (n - 1)) as f64 / (len - 1) as f64).round() as usize)
            .collect()
    } else {
        (0..len).map(|i| i.min(n - 1)).collect()
    }
}

/// Resamples a segment to exactly [`SAMPLE_LEN`] frames.
pub fn resample_fixed(seg: &[MocapFrame]) -> Result<MotionSample> {
    if seg.is_empty() {
        return Err(Error::InvalidSegment("segment has no frames".into()));
    }
    let idx = resample_indices(seg.len(), SAMPLE_LEN);
    let mut values = vec![0.0; CHANNELS * SAMPLE_LEN];
    for (step, &i) in idx.iter().enumerate() {
        for (c, v) in seg[i].channels().into_iter().enumerate() {
            values[c * SAMPLE_LEN + step] = v;
        }
    }
    MotionSample::from_rows(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub min_frames: usize,
    /// Largest plausible tip displacement between consecutive frames, mm.
    pub max_jump_mm: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_frames: 10,
            max_jump_mm: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accept,
    TooShort(usize),
    NonFinite,
    Glitch { at: usize, jump_mm: f64 },
}

/// Rejects short segments, non-finite values and tracking jumps.
pub fn quality_filter(seg: &[MocapFrame], cfg: &QualityConfig) -> Verdict {
    if seg.len() < cfg.min_frames {
        return Verdict::TooShort(seg.len());
    }
    if seg.iter().any(|f| !f.is_finite()) {
        return Verdict::NonFinite;
    }
    for (i, w) in seg.windows(2).enumerate() {
        let jump = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2) + (w[1].z - w[0].z).powi(2)).sqrt();
        if jump > cfg.max_jump_mm {
            return Verdict::Glitch { at: i + 1, jump_mm: jump };
        }
    }
    Verdict::Accept
}

const POSE_HEADER: [&str; 8] = ["frame", "time", "x", "y", "z", "yaw", "pitch", "roll"];
const MARKER_HEADER: [&str; 11] = [
    "frame", "time", "m1x", "m1y", "m1z", "m2x", "m2y", "m2z", "m3x", "m3y", "m3z",
];

/// Parses a capture CSV. The header picks the schema: either tip poses
/// (`frame,time,x,y,z,yaw,pitch,roll`) or raw marker positions
/// (`frame,time,m1x,...,m3z`), which are converted with `cal`.
pub fn read_csv<R: Read>(r: R, cal: &MarkerCalibration) -> Result<Vec<MocapFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let is_pose = header.iter().map(String::as_str).eq(POSE_HEADER);
    let is_marker = header.iter().map(String::as_str).eq(MARKER_HEADER);
    if !is_pose && !is_marker {
        return Err(Error::Parse {
            line: 1,
            message: format!("unrecognized mocap header: {}", header.join(",")),
        });
    }
    let mut frames = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing column {k}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("column {}: {e}", header[k]),
                })
        };
        let frame = rec
            .get(0)
            .unwrap_or_default()
            .parse::<u64>()
            .map_err(|e| Error::Parse {
                line,
                message: format!("frame: {e}"),
            })?;
        let time_s = num(1)?;
        let f = if is_pose {
            MocapFrame {
                frame,
                time_s,
                x: num(2)?,
                y: num(3)?,
                z: num(4)?,
                yaw: num(5)?,
                pitch: num(6)?,
                roll: num(7)?,
            }
        } else {
            let m = [
                [num(2)?, num(3)?, num(4)?],
                [num(5)?, num(6)?, num(7)?],
                [num(8)?, num(9)?, num(10)?],
            ];
            let p = derive_tip_pose(&m, cal)?;
            MocapFrame {
                frame,
                time_s,
                x: p.x,
                y: p.y,
                z: p.z,
                yaw: p.yaw,
                pitch: p.pitch,
                roll: p.roll,
            }
        };
        if let Some(prev) = frames.last() {
            let prev: &MocapFrame = prev;
            if !(f.time_s > prev.time_s) {
                return Err(Error::Parse {
                    line,
                    message: format!("time {} does not increase", f.time_s),
                });
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

pub fn load_csv(path: &Path, cal: &MarkerCalibration) -> Result<Vec<MocapFrame>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(f), cal)
}

/// A motion sample with its provenance, as written to JSON Lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub sheet: String,
    pub cell: usize,
    /// First and last source frame numbers of the segment.
    pub frames: [u64; 2],
    /// Row-major 6×60 values.
    pub data: Vec<f64>,
}

impl MotionRecord {
    pub fn sample(&self) -> Result<MotionSample> {
        MotionSample::from_rows(self.data.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Height below which the brush counts as touching the paper, mm.
    pub z_cut: f64,
    pub quality: QualityConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            z_cut: 2.0,
            quality: QualityConfig::default(),
        }
    }
}

/// Outcome of ingesting one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub records: Vec<MotionRecord>,
    /// Rejected segments: first frame number and verdict.
    pub rejected: Vec<(u64, Verdict)>,
}

/// Segments a stream, drops low-quality segments, assigns each remaining
/// one to the cell nearest its mean position, centers it on that cell and
/// resamples it.
pub fn ingest_stream(frames: &[MocapFrame], layout: &GridLayout, sheet: &str, cfg: &IngestConfig) -> Result<IngestReport> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for seg in segment_by_z(frames, cfg.z_cut) {
        let verdict = quality_filter(&seg, &cfg.quality);
        if verdict != Verdict::Accept {
            rejected.push((seg[0].frame, verdict));
            continue;
        }
        let n = seg.len() as f64;
        let mx = seg.iter().map(|f| f.x).sum::<f64>() / n;
        let my = seg.iter().map(|f| f.y).sum::<f64>() / n;
        let cell = layout
            .nearest_cell(mx, my)
            .ok_or_else(|| Error::Layout("layout has no cells".into()))?;
        let centered = center_segment(&seg, cell.center_mm);
        let sample = resample_fixed(&centered)?;
        records.push(MotionRecord {
            sheet: sheet.to_string(),
            cell: cell.index,
            frames: [seg[0].frame, seg[seg.len() - 1].frame],
            data: sample.values().to_vec(),
        });
    }
    Ok(IngestReport { records, rejected })
}

pub fn write_records<W: Write>(mut w: W, records: &[MotionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<motion writer>", e))?;
    }
    Ok(())
}

pub fn read_records(text: &str) -> Result<Vec<MotionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
