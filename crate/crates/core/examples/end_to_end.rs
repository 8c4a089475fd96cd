//! Image to robot program: paint, quantize, emit. Running it twice gives
//! byte-identical outputs.
//!
//! cargo run --release --example end_to_end -- [target.pgm]

use std::path::Path;

use robopaint::canvas::Canvas;
use robopaint::program::{build_program, check_program, emit, CanvasFrame, DEFAULT_STEP_MM};
use robopaint::quantize::{quantize, QuantizerConfig};
use robopaint::sbr::{paint, SbrConfig};
use robopaint::stroke::write_jsonl;

fn main() -> robopaint::Result<()> {
    let target = match std::env::args().nth(1) {
        Some(p) => Canvas::load_pgm(Path::new(&p))?,
        None => {
            let n = 48;
            let px = (0..n * n)
                .map(|i| {
                    let (x, y) = ((i % n) as f64 / n as f64, (i / n) as f64 / n as f64);
                    if (x - 0.5).abs() < 0.3 && (y - 0.5).abs() < 0.1 { 0.2 } else { 0.6 + 0.4 * y }
                })
                .collect();
            Canvas::from_pixels(n, n, px)?
        }
    };

    let painted = paint(&target, &SbrConfig { seed: 7, ..SbrConfig::default() })?;
    let q = quantize(&painted.strokes, &QuantizerConfig { seed: 7, ..QuantizerConfig::default() })?;
    let frame = CanvasFrame::default();
    let prog = build_program(&q.strokes, &frame, &q.palette, DEFAULT_STEP_MM)?;
    check_program(&prog, &frame, 1e-6)?;

    let mut strokes = Vec::new();
    write_jsonl(&mut strokes, &q.strokes)?;
    let text = emit(&prog);
    std::fs::write("painting.strokes.jsonl", &strokes).expect("write strokes");
    std::fs::write("painting.rprog", &text).expect("write program");
    println!(
        "{} strokes, {} grays, {} actions ({} moves)",
        q.strokes.len(),
        q.palette.grays.len(),
        prog.actions.len(),
        prog.moves().count()
    );
    Ok(())
}
