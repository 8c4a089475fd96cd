//! Synthetic brushstroke images for training and tests.
//!
//! Simple samples are one straight stroke; complex samples overlay two or
//! three curved strokes. Rendering is 2× supersampled for soft edges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::canvas::{Canvas, DEFAULT_DENSITY};
use crate::data::images::{StrokeImage, STROKE_HEIGHT, STROKE_WIDTH};
use crate::stroke::Stroke;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complexity {
    Simple,
    Complex,
}

fn random_stroke<R: Rng>(rng: &mut R, straight: bool) -> Stroke {
    let x0 = rng.random_range(0.08..0.3);
    let x2 = rng.random_range(0.7..0.92);
    let y0 = rng.random_range(0.2..0.8);
    let y2 = rng.random_range(0.2..0.8);
    let (x1, y1) = if straight {
        (0.5 * (x0 + x2), 0.5 * (y0 + y2))
    } else {
        (rng.random_range(0.3..0.7), rng.random_range(0.0..1.0))
    };
    Stroke {
        x0,
        y0,
        x1,
        y1,
        x2,
        y2,
        r0: rng.random_range(0.03..0.07),
        r1: rng.random_range(0.02..0.06),
        g: rng.random_range(0.0..0.3),
    }
}

/// Renders one synthetic stroke image.
pub fn synth_image<R: Rng>(rng: &mut R, complexity: Complexity) -> StrokeImage {
    let strokes: Vec<Stroke> = match complexity {
        Complexity::Simple => vec![random_stroke(rng, true)],
        Complexity::Complex => {
            let n = rng.random_range(2..=3);
            (0..n).map(|_| random_stroke(rng, false)).collect()
        }
    };
    let canvas = Canvas::render_supersampled(STROKE_WIDTH, STROKE_HEIGHT, &strokes, 2, DEFAULT_DENSITY)
        .expect("fixed positive canvas size");
    StrokeImage::from_canvas(&canvas).expect("canvas has stroke-image size")
}

/// `count` images; every `complex_every`-th one (if nonzero) is complex.
pub fn synth_corpus(count: usize, seed: u64, complex_every: usize) -> Vec<(StrokeImage, Complexity)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = if complex_every > 0 && i % complex_every == complex_every - 1 {
                Complexity::Complex
            } else {
                Complexity::Simple
            };
            (synth_image(&mut rng, kind), kind)
        })
        .collect()
}
