//! Paints a PGM (or a built-in disc) with strokes and writes the strokes,
//! the rendering and the error trace.
//!
//! cargo run --release --example paint -- [target.pgm] [seed]

use std::path::Path;

use robopaint::canvas::Canvas;
use robopaint::sbr::{paint, SbrConfig};
use robopaint::stroke::save_jsonl;

fn disc(size: usize) -> Canvas {
    let c = size as f64 / 2.0;
    let px = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            if (x - c).hypot(y - c) <= size as f64 / 4.0 { 0.0 } else { 1.0 }
        })
        .collect();
    Canvas::from_pixels(size, size, px).unwrap()
}

fn main() -> robopaint::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let target = match args.first() {
        Some(p) => Canvas::load_pgm(Path::new(p))?,
        None => disc(64),
    };
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = SbrConfig { seed, ..SbrConfig::default() };
    let result = paint(&target, &cfg)?;

    println!("strokes: {}", result.strokes.len());
    println!("mse: {:.6} -> {:.6}", result.initial_mse, result.trace.last().unwrap_or(&result.initial_mse));
    for (i, m) in result.trace.iter().enumerate().step_by(10) {
        println!("  after {:3}: {m:.6}", i + 1);
    }
    save_jsonl(Path::new("painted.strokes.jsonl"), &result.strokes)?;
    result.canvas.save_pgm(Path::new("painted.pgm"))?;
    Ok(())
}
