//! Trains the stroke VAE on a synthetic corpus, then samples and
//! reconstructs a few images.
//!
//! cargo run --release --example vae_train -- [epochs] [images] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use robopaint::vae::{self, corpus::synth_corpus, VaeConfig};

fn main() -> robopaint::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let count = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "vae_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| robopaint::Error::Io { path: out.clone(), source: e })?;

    let images: Vec<_> = synth_corpus(count, 11, 4).into_iter().map(|(img, _)| img).collect();
    let cfg = VaeConfig {
        epochs,
        seed: 3,
        ..VaeConfig::default()
    };
    let start = Instant::now();
    let (mut model, history) = vae::train_with_progress(&images, &cfg, |s| {
        eprintln!("epoch {:3}  loss {:9.3}  recon {:9.3}  kl {:7.3}", s.epoch, s.loss, s.recon, s.kl);
    })?;
    eprintln!("trained {} params in {:.1?}", model.parameter_count(), start.elapsed());

    vae::checkpoint::save(&mut model, &out.join("model.bvae"))?;
    std::fs::write(out.join("history.csv"), vae::history_csv(&history))
        .map_err(|e| robopaint::Error::Io { path: out.join("history.csv"), source: e })?;
    for (i, img) in vae::sample(&model, 4, 7)?.iter().enumerate() {
        img.to_canvas().save_pgm(&out.join(format!("sample_{i}.pgm")))?;
    }
    for (i, img) in vae::reconstruct(&model, &images[..4])?.iter().enumerate() {
        img.to_canvas().save_pgm(&out.join(format!("recon_{i}.pgm")))?;
    }
    Ok(())
}
