//! Renders a fake scanned GRID20 sheet (a stroke per cell plus a grey
//! "index label" and uneven paper tone), then crops and normalizes every
//! cell into a 32×64 stroke image.

use std::path::Path;

use robopaint::canvas::{Canvas, DEFAULT_DENSITY};
use robopaint::data::images::{crop_cells, normalize_stroke_image, GridLayout, Rect};
use robopaint::stroke::Stroke;

fn main() -> robopaint::Result<()> {
    let dpi = 40.0;
    let mut layout = GridLayout::grid20(dpi);
    let (w, h) = layout
        .cells
        .iter()
        .fold((0, 0), |(w, h), c| (w.max(c.px.x + c.px.w), h.max(c.px.y + c.px.h)));
    let mut scan = Canvas::filled(w, h, 0.85)?;
    for c in &mut layout.cells {
        let (fx, fy) = (c.px.x as f64 / w as f64, c.px.y as f64 / h as f64);
        let (sw, sh) = (c.px.w as f64 / w as f64, c.px.h as f64 / h as f64);
        let s = Stroke {
            x0: fx + 0.2 * sw,
            y0: fy + 0.5 * sh,
            x1: fx + 0.5 * sw,
            y1: fy + 0.3 * sh,
            x2: fx + 0.8 * sw,
            y2: fy + 0.6 * sh,
            r0: 0.01,
            r1: 0.005,
            g: 0.1,
        };
        scan.paint(&s, DEFAULT_DENSITY);
        let mask = Rect { x: 2, y: 2, w: 8, h: 6 };
        for y in 0..mask.h {
            for x in 0..mask.w {
                scan.set(c.px.x + mask.x + x, c.px.y + mask.y + y, 0.5);
            }
        }
        c.index_mask = Some(mask);
    }

    std::fs::create_dir_all("cells").expect("create output dir");
    for ((i, cell), spec) in crop_cells(&scan, &layout)?.iter().zip(&layout.cells) {
        let img = normalize_stroke_image(cell, spec.index_mask)?;
        println!("cell {i:2}: {}×{} -> 32×64, mean {:.3}", cell.width(), cell.height(), img.mean());
        img.to_canvas().save_pgm(Path::new(&format!("cells/cell_demo_{i}.pgm")))?;
    }
    Ok(())
}
