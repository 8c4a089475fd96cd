//! Paints a gradient target, then snaps the strokes to 5 grays and 4
//! thicknesses and reports how much the rendering degrades.

use robopaint::canvas::{mse, Canvas, DEFAULT_DENSITY};
use robopaint::quantize::{quantize, QuantizerConfig};
use robopaint::sbr::{paint, SbrConfig};

fn main() -> robopaint::Result<()> {
    let (w, h) = (48, 48);
    let px = (0..w * h).map(|i| ((i % w) as f64 / w as f64 + (i / w) as f64 / h as f64) / 2.0).collect();
    let target = Canvas::from_pixels(w, h, px)?;

    let painted = paint(&target, &SbrConfig { budget: 120, seed: 5, ..SbrConfig::default() })?;
    let q = quantize(&painted.strokes, &QuantizerConfig { seed: 5, ..QuantizerConfig::default() })?;

    println!("grays:       {:?}", q.palette.grays.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>());
    println!("thicknesses: {:?}", q.palette.thicknesses.iter().map(|t| format!("({:.3}, {:.3})", t[0], t[1])).collect::<Vec<_>>());
    let before = mse(&painted.canvas, &target)?;
    let after = mse(&Canvas::new(w, h)?.render_sequence(&q.strokes, DEFAULT_DENSITY), &target)?;
    println!("{} strokes, mse {before:.5} unquantized, {after:.5} quantized", q.strokes.len());
    Ok(())
}
