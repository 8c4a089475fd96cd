//! Synthesizes a motion-capture stream with three brush dips over a GRID20
//! sheet, ingests it into 6×60 motion samples and replays the first one.

use robopaint::data::images::GridLayout;
use robopaint::data::mocap::{ingest_stream, IngestConfig, MocapFrame};
use robopaint::program::{emit, motion_to_program, CanvasFrame};

fn main() -> robopaint::Result<()> {
    let layout = GridLayout::grid20(100.0);
    let mut frames = Vec::new();
    // three dips, each drawing a short line inside a different cell
    for (dip, cell) in [0usize, 7, 13].into_iter().enumerate() {
        let [cx, cy] = layout.cells[cell].center_mm;
        for i in 0..240 {
            let t = i as f64 / 240.0;
            let z = 10.0 * (std::f64::consts::PI * 2.0 * t).cos().max(-0.5) + 5.0;
            frames.push(MocapFrame {
                frame: (dip * 240 + i) as u64,
                time_s: (dip * 240 + i) as f64 / 120.0,
                x: cx - 15.0 + 30.0 * t,
                y: cy + 5.0 * (6.0 * t).sin(),
                z,
                yaw: 30.0 * t,
                pitch: 5.0,
                roll: -3.0,
            });
        }
    }
    let report = ingest_stream(&frames, &layout, "demo", &IngestConfig::default())?;
    for r in &report.records {
        println!("cell {:2}  frames {:?}  start x {:.2}", r.cell, r.frames, r.data[0]);
    }
    println!("rejected: {}", report.rejected.len());

    let replay = motion_to_program(&report.records[0].sample()?, &CanvasFrame::default())?;
    print!("{}", emit(&replay.program).lines().take(5).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
