//! Greedy stroke-based rendering.
//!
//! Each step draws a batch of residual-guided candidate strokes, keeps the
//! best one, polishes it with a hill climb and commits it if it lowers the
//! canvas error by at least `min_improvement`. Every candidate gets its own
//! ChaCha stream derived from `(seed, step, index)`, so results do not depend
//! on how candidate evaluation is scheduled.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canvas::{mse, Canvas, DEFAULT_DENSITY};
use crate::error::{Error, Result};
use crate::stroke::{Stroke, DEFAULT_RHO, MAX_RADIUS};

/// Smallest radius a proposal may draw.
pub const MIN_PROPOSAL_RADIUS: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbrConfig {
    /// Maximum number of strokes.
    pub budget: usize,
    /// Candidates drawn per step.
    pub proposals_per_step: usize,
    /// Hill-climb iterations applied to the winning candidate.
    pub refine_iters: usize,
    /// Control-point restriction factor.
    pub rho: f64,
    /// Minimum MSE decrease required to keep a stroke.
    pub min_improvement: f64,
    /// Curve sampling density used for simulation.
    pub density: f64,
    pub seed: u64,
}

impl Default for SbrConfig {
    fn default() -> Self {
        SbrConfig {
            budget: 250,
            proposals_per_step: 64,
            refine_iters: 30,
            rho: DEFAULT_RHO,
            min_improvement: 1e-6,
            density: DEFAULT_DENSITY,
            seed: 0,
        }
    }
}

impl SbrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.proposals_per_step == 0 {
            return Err(Error::InvalidParameter("proposals_per_step must be >= 1".into()));
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::InvalidParameter("min_improvement must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if !(self.density > 0.0) {
            return Err(Error::InvalidParameter("density must be > 0".into()));
        }
        Ok(())
    }
}

/// A stroke as seen by the search: the free middle control point before
/// restriction. The painted stroke is `raw.restrict_control(rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub raw: Stroke,
}

impl Candidate {
    pub fn stroke(&self, rho: f64) -> Stroke {
        // rho is validated by the callers
        self.raw.restrict_control(rho).expect("rho in [0, 1]")
    }
}

/// Outcome of a full painting run.
#[derive(Debug, Clone, PartialEq)]
pub struct PaintResult {
    pub strokes: Vec<Stroke>,
    /// MSE of the blank canvas against the target.
    pub initial_mse: f64,
    /// MSE after each accepted stroke.
    pub trace: Vec<f64>,
    pub canvas: Canvas,
}

/// RNG for candidate `index` of step `step`.
pub fn candidate_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(1 << 20).wrapping_add(index));
    rng
}

fn check_same_size(a: &Canvas, b: &Canvas) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::shape(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    Ok(())
}

/// Per-pixel sampler over the absolute residual `|target - current|`.
pub struct ResidualSampler {
    width: usize,
    height: usize,
    dist: WeightedIndex<f64>,
}

impl ResidualSampler {
    /// Returns `None` when target and current agree everywhere.
    pub fn new(target: &Canvas, current: &Canvas) -> Result<Option<ResidualSampler>> {
        check_same_size(target, current)?;
        let weights: Vec<f64> = target
            .pixels()
            .iter()
            .zip(current.pixels())
            .map(|(t, c)| (t - c).abs())
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            return Ok(None);
        }
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidParameter(format!("residual weights: {e}")))?;
        Ok(Some(ResidualSampler {
            width: target.width(),
            height: target.height(),
            dist,
        }))
    }

    /// Draws a pixel index, then a uniform point inside that pixel, in
    /// normalized coordinates.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> (usize, [f64; 2]) {
        let idx = self.dist.sample(rng);
        let (px, py) = (idx % self.width, idx / self.width);
        let x = (px as f64 + rng.random::<f64>()) / self.width as f64;
        let y = (py as f64 + rng.random::<f64>()) / self.height as f64;
        (idx, [x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)])
    }
}

fn log_uniform_radius<R: Rng>(rng: &mut R) -> f64 {
    let (lo, hi) = (MIN_PROPOSAL_RADIUS.ln(), MAX_RADIUS.ln());
    (lo + rng.random::<f64>() * (hi - lo)).exp().min(MAX_RADIUS)
}

fn draw_candidate<R: Rng>(sampler: &ResidualSampler, target: &Canvas, rng: &mut R) -> Candidate {
    let (start_idx, p0) = sampler.sample_point(rng);
    let (_, p2) = sampler.sample_point(rng);
    let p1 = [rng.random::<f64>(), rng.random::<f64>()];
    Candidate {
        raw: Stroke {
            x0: p0[0],
            y0: p0[1],
            x1: p1[0],
            y1: p1[1],
            x2: p2[0],
            y2: p2[1],
            r0: log_uniform_radius(rng),
            r1: log_uniform_radius(rng),
            g: target.pixels()[start_idx],
        },
    }
}

/// Draws one residual-guided candidate and returns its restricted stroke,
/// or `Ok(None)` if there is nothing left to paint.
pub fn propose_stroke<R: Rng>(
    target: &Canvas,
    current: &Canvas,
    rho: f64,
    rng: &mut R,
) -> Result<Option<Stroke>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1]")));
    }
    let Some(sampler) = ResidualSampler::new(target, current)? else {
        return Ok(None);
    };
    Ok(Some(draw_candidate(&sampler, target, rng).stroke(rho)))
}

fn stroke_sse_delta(current: &Canvas, target: &Canvas, s: &Stroke, density: f64) -> f64 {
    let fp = current.footprint(s, density);
    current.sse_delta(target, &fp, s.g)
}

fn perturb<R: Rng>(c: &Candidate, rng: &mut R) -> Candidate {
    let coord = Normal::new(0.0, 0.05).expect("finite sigma");
    let log_r = Normal::new(0.0, 0.2).expect("finite sigma");
    let gray = Normal::new(0.0, 0.05).expect("finite sigma");
    let s = c.raw;
    let mut jitter = |v: f64| (v + coord.sample(rng)).clamp(0.0, 1.0);
    let (x0, y0, x1, y1, x2, y2) = (
        jitter(s.x0),
        jitter(s.y0),
        jitter(s.x1),
        jitter(s.y1),
        jitter(s.x2),
        jitter(s.y2),
    );
    let mut radius = |r: f64| (r * f64::exp(log_r.sample(rng))).clamp(MIN_PROPOSAL_RADIUS.min(r), MAX_RADIUS);
    let (r0, r1) = (radius(s.r0), radius(s.r1));
    Candidate {
        raw: Stroke {
            x0,
            y0,
            x1,
            y1,
            x2,
            y2,
            r0,
            r1,
            g: (s.g + gray.sample(rng)).clamp(0.0, 1.0),
        },
    }
}

fn refine_candidate<R: Rng>(
    target: &Canvas,
    current: &Canvas,
    start: Candidate,
    start_delta: f64,
    iters: usize,
    rho: f64,
    density: f64,
    rng: &mut R,
) -> (Candidate, f64) {
    let mut best = start;
    let mut best_delta = start_delta;
    for _ in 0..iters {
        let trial = perturb(&best, rng);
        let delta = stroke_sse_delta(current, target, &trial.stroke(rho), density);
        if delta < best_delta {
            best = trial;
            best_delta = delta;
        }
    }
    (best, best_delta)
}

/// Hill-climbs `s` for `iters` Gaussian perturbations, keeping a change only
/// when it lowers the error of `current` with the stroke painted on it.
///
/// The search runs over the unrestricted middle control point; `s` is
/// treated as already restricted, and its preimage under the restriction
/// seeds the search.
pub fn refine_stroke<R: Rng>(
    target: &Canvas,
    current: &Canvas,
    s: &Stroke,
    iters: usize,
    rho: f64,
    density: f64,
    rng: &mut R,
) -> Result<Stroke> {
    check_same_size(target, current)?;
    s.validate()?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1]")));
    }
    if iters == 0 {
        return Ok(*s);
    }
    let start = Candidate {
        raw: unrestrict(s, rho),
    };
    let start_delta = stroke_sse_delta(current, target, s, density);
    let (best, best_delta) = refine_candidate(target, current, start, start_delta, iters, rho, density, rng);
    if best_delta < start_delta {
        Ok(best.stroke(rho))
    } else {
        Ok(*s)
    }
}

/// A middle control point that maps onto `s.(x1, y1)` under restriction,
/// clamped into the unit square.
fn unrestrict(s: &Stroke, rho: f64) -> Stroke {
    if rho >= 1.0 {
        return *s;
    }
    let mx = 0.5 * (s.x0 + s.x2);
    let my = 0.5 * (s.y0 + s.y2);
    Stroke {
        x1: ((s.x1 - rho * mx) / (1.0 - rho)).clamp(0.0, 1.0),
        y1: ((s.y1 - rho * my) / (1.0 - rho)).clamp(0.0, 1.0),
        ..*s
    }
}

/// Converts `target` into an ordered stroke list.
pub fn paint(target: &Canvas, cfg: &SbrConfig) -> Result<PaintResult> {
    paint_with_observer(target, cfg, |_, _, _| {})
}

/// Like [`paint`], calling `observe(step, stroke, canvas)` after every
/// accepted stroke.
pub fn paint_with_observer<F>(target: &Canvas, cfg: &SbrConfig, mut observe: F) -> Result<PaintResult>
where
    F: FnMut(usize, &Stroke, &Canvas),
{
    cfg.validate()?;
    let mut canvas = Canvas::new(target.width(), target.height())?;
    let initial_mse = mse(&canvas, target)?;
    let mut current_mse = initial_mse;
    let mut strokes = Vec::new();
    let mut trace = Vec::new();

    for step in 0..cfg.budget {
        let Some(sampler) = ResidualSampler::new(target, &canvas)? else {
            break;
        };
        let scored: Vec<(Candidate, f64)> = (0..cfg.proposals_per_step)
            .into_par_iter()
            .map(|k| {
                let mut rng = candidate_rng(cfg.seed, step as u64, k as u64);
                let cand = draw_candidate(&sampler, target, &mut rng);
                let delta = stroke_sse_delta(&canvas, target, &cand.stroke(cfg.rho), cfg.density);
                (cand, delta)
            })
            .collect();
        // lowest delta wins, ties go to the lowest index
        let (best, best_delta) = scored
            .iter()
            .copied()
            .reduce(|a, b| if b.1 < a.1 { b } else { a })
            .expect("at least one proposal");

        let mut rng = candidate_rng(cfg.seed, step as u64, cfg.proposals_per_step as u64);
        let (best, _) = refine_candidate(
            target,
            &canvas,
            best,
            best_delta,
            cfg.refine_iters,
            cfg.rho,
            cfg.density,
            &mut rng,
        );
        let stroke = best.stroke(cfg.rho);
        let next = canvas.render_stroke(&stroke, cfg.density);
        let next_mse = mse(&next, target)?;
        if !(current_mse - next_mse >= cfg.min_improvement && next_mse < current_mse) {
            break;
        }
        canvas = next;
        current_mse = next_mse;
        strokes.push(stroke);
        trace.push(next_mse);
        observe(step, &stroke, &canvas);
    }

    Ok(PaintResult {
        strokes,
        initial_mse,
        trace,
        canvas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_target(size: usize, radius_px: f64) -> Canvas {
        let c = size as f64 / 2.0;
        let pixels = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
                if (x - c).hypot(y - c) <= radius_px {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        Canvas::from_pixels(size, size, pixels).unwrap()
    }

    #[test]
    fn no_residual_means_no_proposal() {
        let c = Canvas::new(8, 8).unwrap();
        let mut rng = candidate_rng(1, 0, 0);
        assert_eq!(propose_stroke(&c, &c, 0.5, &mut rng).unwrap(), None);
    }

    #[test]
    fn proposals_are_valid_and_restricted() {
        let target = disc_target(16, 5.0);
        let current = Canvas::new(16, 16).unwrap();
        let mut rng = candidate_rng(3, 0, 0);
        for _ in 0..500 {
            let s = propose_stroke(&target, &current, 0.5, &mut rng).unwrap().unwrap();
            s.validate().unwrap();
            assert!(s.is_restricted(0.5, 1e-12));
            assert!(s.r0 >= MIN_PROPOSAL_RADIUS && s.r0 <= MAX_RADIUS);
        }
    }

    #[test]
    fn refine_zero_iters_is_identity() {
        let target = disc_target(16, 5.0);
        let current = Canvas::new(16, 16).unwrap();
        let mut rng = candidate_rng(3, 0, 0);
        let s = propose_stroke(&target, &current, 0.5, &mut rng).unwrap().unwrap();
        let r = refine_stroke(&target, &current, &s, 0, 0.5, DEFAULT_DENSITY, &mut rng).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn refine_never_worsens() {
        let target = disc_target(16, 5.0);
        let current = Canvas::new(16, 16).unwrap();
        for seed in 0..20 {
            let mut rng = candidate_rng(seed, 0, 0);
            let s = propose_stroke(&target, &current, 0.5, &mut rng).unwrap().unwrap();
            let r = refine_stroke(&target, &current, &s, 25, 0.5, DEFAULT_DENSITY, &mut rng).unwrap();
            let before = mse(&current.render_stroke(&s, DEFAULT_DENSITY), &target).unwrap();
            let after = mse(&current.render_stroke(&r, DEFAULT_DENSITY), &target).unwrap();
            assert!(after <= before, "seed {seed}: {after} > {before}");
            assert!(r.is_restricted(0.5, 1e-9));
        }
    }

    #[test]
    fn white_target_paints_nothing() {
        let target = Canvas::new(10, 10).unwrap();
        let res = paint(&target, &SbrConfig::default()).unwrap();
        assert!(res.strokes.is_empty());
        assert!(res.trace.is_empty());
    }

    #[test]
    fn budget_and_monotone_trace() {
        let target = disc_target(16, 5.0);
        let cfg = SbrConfig {
            budget: 7,
            proposals_per_step: 8,
            refine_iters: 5,
            seed: 11,
            ..SbrConfig::default()
        };
        let res = paint(&target, &cfg).unwrap();
        assert!(res.strokes.len() <= 7);
        let mut prev = res.initial_mse;
        for &m in &res.trace {
            assert!(prev - m >= cfg.min_improvement);
            prev = m;
        }
        let again = paint(&target, &cfg).unwrap();
        assert_eq!(res.strokes, again.strokes);
    }

    #[test]
    fn zero_budget_is_empty() {
        let target = disc_target(8, 3.0);
        let cfg = SbrConfig {
            budget: 0,
            ..SbrConfig::default()
        };
        assert!(paint(&target, &cfg).unwrap().strokes.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = SbrConfig {
            proposals_per_step: 0,
            ..SbrConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SbrConfig {
            min_improvement: -1.0,
            ..SbrConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
