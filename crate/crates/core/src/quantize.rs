//! Palette reduction of a stroke sequence: gray values and thickness pairs
//! are clustered independently and snapped to their centroids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::stroke::{Stroke, MAX_RADIUS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerConfig {
    pub k_gray: usize,
    pub k_thickness: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            k_gray: 5,
            k_thickness: 4,
            max_iters: 100,
            restarts: 10,
            seed: 0,
        }
    }
}

/// The paints and brush widths a quantized sequence may use.
///
/// Grays are sorted ascending; a stroke's color index is its gray's position
/// in this list. Thickness pairs are sorted by total width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub grays: Vec<f64>,
    pub thicknesses: Vec<[f64; 2]>,
}

impl Palette {
    /// Index of `g` in the gray list.
    pub fn gray_index(&self, g: f64) -> Option<usize> {
        self.grays.iter().position(|&p| (p - g).abs() <= 1e-9)
    }

    pub fn thickness_index(&self, r0: f64, r1: f64) -> Option<usize> {
        self.thicknesses
            .iter()
            .position(|t| (t[0] - r0).abs() <= 1e-9 && (t[1] - r1).abs() <= 1e-9)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Palette> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub strokes: Vec<Stroke>,
    pub palette: Palette,
}

fn dedup_sorted<T: PartialEq + Copy>(mut v: Vec<T>, cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Vec<T> {
    v.sort_by(&cmp);
    v.dedup();
    v
}

/// Snaps each stroke's gray and `(r0, r1)` pair to its k-means centroid.
/// Geometry is left untouched.
pub fn quantize(seq: &[Stroke], cfg: &QuantizerConfig) -> Result<Quantized> {
    if seq.is_empty() {
        return Err(Error::InfeasibleK {
            k: cfg.k_gray.max(cfg.k_thickness),
            n: 0,
        });
    }
    let grays: Vec<Vec<f64>> = seq.iter().map(|s| vec![s.g]).collect();
    let radii: Vec<Vec<f64>> = seq.iter().map(|s| vec![s.r0, s.r1]).collect();

    let gray_fit = kmeans(&grays, cfg.k_gray, cfg.max_iters, cfg.restarts, cfg.seed)?;
    let thick_fit = kmeans(
        &radii,
        cfg.k_thickness,
        cfg.max_iters,
        cfg.restarts,
        cfg.seed.wrapping_add(1),
    )?;

    let strokes: Vec<Stroke> = seq
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let g = gray_fit.centroids[gray_fit.assignments[i]][0];
            let r = &thick_fit.centroids[thick_fit.assignments[i]];
            Stroke {
                g: g.clamp(0.0, 1.0),
                r0: r[0].min(MAX_RADIUS),
                r1: r[1].min(MAX_RADIUS),
                ..*s
            }
        })
        .collect();

    let grays = dedup_sorted(strokes.iter().map(|s| s.g).collect(), f64::total_cmp);
    let thicknesses = dedup_sorted(strokes.iter().map(|s| [s.r0, s.r1]).collect(), |a, b| {
        a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
    });
    Ok(Quantized {
        strokes,
        palette: Palette { grays, thicknesses },
    })
}
