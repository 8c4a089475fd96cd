//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error. Diagnostics go to stderr; data only to the output
//! paths named on the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::canvas::Canvas;
use crate::data::images::{crop_cells, normalize_stroke_image, GridLayout, StrokeImage};
use crate::data::mocap::{self, IngestConfig};
use crate::data::rigid::MarkerCalibration;
use crate::error::{Error, Result};
use crate::program::{self, CanvasFrame, DEFAULT_STEP_MM};
use crate::quantize::{quantize, Palette, QuantizerConfig};
use crate::sbr::{paint_with_observer, SbrConfig};
use crate::stroke;
use crate::vae::{self, checkpoint, corpus, VaeConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgramConfig {
    pub step_mm: f64,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        ProgramConfig { step_mm: DEFAULT_STEP_MM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// JSON layout file; overrides `grid`.
    pub path: Option<PathBuf>,
    /// Built-in layout, `GRID20` or `GRID14`.
    pub grid: String,
    /// Scan resolution for built-in layouts.
    pub dpi: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            path: None,
            grid: "GRID20".into(),
            dpi: 100.0,
        }
    }
}

impl LayoutConfig {
    pub fn resolve(&self) -> Result<GridLayout> {
        let layout = match (&self.path, self.grid.to_ascii_uppercase().as_str()) {
            (Some(p), _) => GridLayout::load_json(p)?,
            (None, "GRID20") => GridLayout::grid20(self.dpi),
            (None, "GRID14") => GridLayout::grid14(self.dpi),
            (None, other) => return Err(Error::InvalidParameter(format!("unknown grid {other:?}"))),
        };
        layout.validate()?;
        Ok(layout)
    }
}

/// Every stage's parameters. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paint: SbrConfig,
    pub quantize: QuantizerConfig,
    pub frame: CanvasFrame,
    pub program: ProgramConfig,
    pub ingest: IngestConfig,
    pub calibration: MarkerCalibration,
    pub layout: LayoutConfig,
    pub vae: VaeConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "robopaint", version, about = "Stroke-based painting, robot programs and stroke VAE")]
struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Approximate a grayscale PGM with a stroke sequence.
    Paint(PaintArgs),
    /// Snap strokes to a small palette of grays and thicknesses.
    Quantize(QuantizeArgs),
    /// Turn quantized strokes into a robot program.
    Emit(EmitArgs),
    /// Turn a recorded motion sample into a robot program.
    Replay(ReplayArgs),
    /// Segment a motion-capture CSV into fixed-length motion samples.
    IngestMocap(IngestArgs),
    /// Crop and normalize stroke images from a scanned sheet.
    PrepStrokes(PrepArgs),
    /// Generate synthetic stroke images.
    SynthCorpus(SynthArgs),
    /// Train the stroke VAE.
    VaeTrain(TrainArgs),
    /// Decode random latent codes.
    VaeSample(SampleArgs),
    /// Encode and decode stroke images.
    VaeReconstruct(ReconArgs),
}

#[derive(Debug, Args)]
struct PaintArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    proposals: Option<usize>,
    #[arg(long)]
    refine_iters: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Per-stroke MSE as CSV (`stroke_index,mse`).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the final rendering as PGM.
    #[arg(long)]
    render: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Palette JSON output.
    #[arg(long)]
    palette: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    k_gray: Option<usize>,
    #[arg(long = "k-thick")]
    k_thickness: Option<usize>,
}

#[derive(Debug, Args)]
struct EmitArgs {
    #[arg(long)]
    strokes: PathBuf,
    #[arg(long)]
    palette: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    step_mm: Option<f64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// JSON Lines motion samples.
    #[arg(long)]
    motions: PathBuf,
    /// Zero-based record to replay.
    #[arg(long, default_value_t = 0)]
    record: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Sheet name stored with each sample; defaults to the CSV file stem.
    #[arg(long)]
    sheet: Option<String>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    z_cut: Option<f64>,
}

#[derive(Debug, Args)]
struct PrepArgs {
    #[arg(long)]
    scan: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    sheet: Option<String>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    dpi: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Every n-th image overlays several curved strokes (0 disables).
    #[arg(long, default_value_t = 4)]
    complex_every: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of 32×64 PGM stroke images.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Per-epoch loss history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReconArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn log_config(cfg: &PipelineConfig) {
    match toml::to_string(cfg) {
        Ok(s) => eprintln!("# resolved config\n{s}"),
        Err(e) => eprintln!("# resolved config unavailable: {e}"),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Stroke images from every `.pgm` in `dir`, in file-name order.
pub fn load_image_dir(dir: &Path) -> Result<Vec<StrokeImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidDataset(format!("no .pgm files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| StrokeImage::from_canvas(&Canvas::load_pgm(p)?))
        .collect()
}

fn write_images(dir: &Path, prefix: &str, images: &[StrokeImage]) -> Result<()> {
    create_dir(dir)?;
    for (i, img) in images.iter().enumerate() {
        img.to_canvas().save_pgm(&dir.join(format!("{prefix}_{i:04}.pgm")))?;
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Paint(a) => {
            cfg.paint.seed = a.seed;
            set(&mut cfg.paint.budget, a.budget);
            set(&mut cfg.paint.proposals_per_step, a.proposals);
            set(&mut cfg.paint.refine_iters, a.refine_iters);
            set(&mut cfg.paint.rho, a.rho);
            log_config(&cfg);
            let target = Canvas::load_pgm(&a.target)?;
            let result = paint_with_observer(&target, &cfg.paint, |step, _, _| {
                if (step + 1) % 50 == 0 {
                    eprintln!("stroke {}", step + 1);
                }
            })?;
            eprintln!(
                "{} strokes, mse {:.6} -> {:.6}",
                result.strokes.len(),
                result.initial_mse,
                result.trace.last().copied().unwrap_or(result.initial_mse)
            );
            stroke::save_jsonl(&a.out, &result.strokes)?;
            if let Some(t) = &a.trace {
                let mut csv = String::from("stroke_index,mse\n");
                for (i, m) in result.trace.iter().enumerate() {
                    csv.push_str(&format!("{i},{m}\n"));
                }
                write_file(t, csv)?;
            }
            if let Some(r) = &a.render {
                result.canvas.save_pgm(r)?;
            }
        }
        Command::Quantize(a) => {
            cfg.quantize.seed = a.seed;
            set(&mut cfg.quantize.k_gray, a.k_gray);
            set(&mut cfg.quantize.k_thickness, a.k_thickness);
            log_config(&cfg);
            let strokes = stroke::load_jsonl(&a.input)?;
            let q = quantize(&strokes, &cfg.quantize)?;
            eprintln!(
                "{} strokes, {} grays, {} thicknesses",
                q.strokes.len(),
                q.palette.grays.len(),
                q.palette.thicknesses.len()
            );
            stroke::save_jsonl(&a.out, &q.strokes)?;
            q.palette.save_json(&a.palette)?;
        }
        Command::Emit(a) => {
            set(&mut cfg.program.step_mm, a.step_mm);
            log_config(&cfg);
            let strokes = stroke::load_jsonl(&a.strokes)?;
            let palette = Palette::load_json(&a.palette)?;
            let prog = program::build_program(&strokes, &cfg.frame, &palette, cfg.program.step_mm)?;
            program::check_program(&prog, &cfg.frame, 1e-6)?;
            eprintln!("{} actions", prog.actions.len());
            program::save(&prog, &a.out)?;
        }
        Command::Replay(a) => {
            log_config(&cfg);
            let text = std::fs::read_to_string(&a.motions).map_err(|e| Error::io(&a.motions, e))?;
            let records = mocap::read_records(&text)?;
            let rec = records.get(a.record).ok_or_else(|| {
                Error::InvalidDataset(format!("record {} requested, file has {}", a.record, records.len()))
            })?;
            let replay = program::motion_to_program(&rec.sample()?, &cfg.frame)?;
            eprintln!("replaying sheet {} cell {} frames {:?}", rec.sheet, rec.cell, rec.frames);
            program::save(&replay.program, &a.out)?;
        }
        Command::IngestMocap(a) => {
            set(&mut cfg.ingest.z_cut, a.z_cut);
            if a.layout.is_some() {
                cfg.layout.path = a.layout;
            }
            log_config(&cfg);
            let layout = cfg.layout.resolve()?;
            let frames = mocap::load_csv(&a.csv, &cfg.calibration)?;
            let sheet = a.sheet.unwrap_or_else(|| stem(&a.csv));
            let report = mocap::ingest_stream(&frames, &layout, &sheet, &cfg.ingest)?;
            for (frame, verdict) in &report.rejected {
                eprintln!("rejected segment at frame {frame}: {verdict:?}");
            }
            eprintln!("{} samples", report.records.len());
            let mut buf = Vec::new();
            mocap::write_records(&mut buf, &report.records)?;
            write_file(&a.out, buf)?;
        }
        Command::PrepStrokes(a) => {
            if a.layout.is_some() {
                cfg.layout.path = a.layout;
            }
            set(&mut cfg.layout.grid, a.grid);
            set(&mut cfg.layout.dpi, a.dpi);
            log_config(&cfg);
            let layout = cfg.layout.resolve()?;
            let scan = Canvas::load_pgm(&a.scan)?;
            let sheet = a.sheet.unwrap_or_else(|| stem(&a.scan));
            create_dir(&a.out_dir)?;
            let crops = crop_cells(&scan, &layout)?;
            for ((index, cell), spec) in crops.iter().zip(&layout.cells) {
                let img = normalize_stroke_image(cell, spec.index_mask)?;
                img.to_canvas().save_pgm(&a.out_dir.join(format!("cell_{sheet}_{index}.pgm")))?;
            }
            eprintln!("{} cells", crops.len());
        }
        Command::SynthCorpus(a) => {
            log_config(&cfg);
            let images: Vec<_> = corpus::synth_corpus(a.count, a.seed, a.complex_every)
                .into_iter()
                .map(|(img, _)| img)
                .collect();
            write_images(&a.out_dir, "synth", &images)?;
            eprintln!("{} images", images.len());
        }
        Command::VaeTrain(a) => {
            cfg.vae.seed = a.seed;
            set(&mut cfg.vae.epochs, a.epochs);
            set(&mut cfg.vae.batch_size, a.batch_size);
            set(&mut cfg.vae.learning_rate, a.learning_rate);
            set(&mut cfg.vae.latent_dim, a.latent_dim);
            log_config(&cfg);
            let images = load_image_dir(&a.data)?;
            let (mut model, history) = vae::train_with_progress(&images, &cfg.vae, |s| {
                eprintln!("epoch {} loss {:.4} recon {:.4} kl {:.4}", s.epoch, s.loss, s.recon, s.kl);
            })?;
            checkpoint::save(&mut model, &a.out)?;
            if let Some(h) = &a.history {
                write_file(h, vae::history_csv(&history))?;
            }
        }
        Command::VaeSample(a) => {
            log_config(&cfg);
            let model = checkpoint::load(&a.model)?;
            let images = vae::sample(&model, a.count, a.seed)?;
            write_images(&a.out_dir, "sample", &images)?;
        }
        Command::VaeReconstruct(a) => {
            log_config(&cfg);
            let model = checkpoint::load(&a.model)?;
            let images = load_image_dir(&a.data)?;
            let recon = vae::reconstruct(&model, &images)?;
            let err = images.iter().zip(&recon).map(|(a, b)| a.mse(b)).sum::<f64>() / images.len() as f64;
            eprintln!("mean reconstruction mse {err:.6}");
            write_images(&a.out_dir, "recon", &recon)?;
        }
    }
    Ok(())
}
