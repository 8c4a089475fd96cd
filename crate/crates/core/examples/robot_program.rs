//! Builds a robot program for three quantized strokes on a 200 mm canvas
//! and prints it.

use robopaint::program::{build_program, check_program, emit, parse, CanvasFrame};
use robopaint::quantize::Palette;
use robopaint::stroke::Stroke;

fn main() -> robopaint::Result<()> {
    let palette = Palette {
        grays: vec![0.1, 0.6],
        thicknesses: vec![[0.01, 0.01], [0.03, 0.02]],
    };
    let arc = |y: f64, g: f64, r: [f64; 2]| Stroke {
        x0: 0.2,
        y0: y,
        x1: 0.5,
        y1: y - 0.1,
        x2: 0.8,
        y2: y,
        r0: r[0],
        r1: r[1],
        g,
    };
    let strokes = [
        arc(0.3, 0.1, [0.03, 0.02]),
        arc(0.5, 0.6, [0.01, 0.01]),
        arc(0.7, 0.6, [0.03, 0.02]),
    ];
    let frame = CanvasFrame::default();
    let prog = build_program(&strokes, &frame, &palette, 10.0)?;
    check_program(&prog, &frame, 1e-9)?;
    let text = emit(&prog);
    assert_eq!(emit(&parse(&text)?), text);
    print!("{text}");
    Ok(())
}
