use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{Param, Tensor};
use super::model::{loss_from_logits, VaeConfig, VaeModel};
use crate::data::images::{StrokeImage, STROKE_HEIGHT, STROKE_WIDTH};
use crate::error::{Error, Result};

/// Adam optimizer state, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &VaeConfig) -> Adam {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn update(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.value[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Per-epoch means of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Writes the loss history as `epoch,loss,recon,kl` CSV.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,recon,kl\n");
    for e in history {
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.recon, e.kl));
    }
    s
}

pub(crate) fn images_to_tensor(images: &[StrokeImage]) -> Tensor {
    let mut data = Vec::with_capacity(images.len() * STROKE_HEIGHT * STROKE_WIDTH);
    for img in images {
        data.extend_from_slice(img.pixels());
    }
    Tensor::from_vec(images.len(), 1, STROKE_HEIGHT, STROKE_WIDTH, data)
}

pub(crate) fn tensor_to_images(t: &Tensor) -> Result<Vec<StrokeImage>> {
    (0..t.n)
        .map(|i| StrokeImage::from_pixels(t.sample(i).to_vec()))
        .collect()
}

fn gather(images: &Tensor, idx: &[usize]) -> Tensor {
    let len = images.sample_len();
    let mut data = Vec::with_capacity(idx.len() * len);
    for &i in idx {
        data.extend_from_slice(images.sample(i));
    }
    Tensor::from_vec(idx.len(), images.c, images.h, images.w, data)
}

/// Trains on an `n × 1 × H × W` tensor whose size matches the config.
///
/// Calls `on_epoch` after every epoch. Results are a pure function of the
/// data and config.
pub fn train_tensor<F>(images: &Tensor, cfg: &VaeConfig, mut on_epoch: F) -> Result<(VaeModel, Vec<EpochStats>)>
where
    F: FnMut(&EpochStats),
{
    if images.n == 0 {
        return Err(Error::InvalidDataset("dataset is empty".into()));
    }
    let mut model = VaeModel::new(cfg)?;
    let mut adam = Adam::new(cfg);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);

    let mut order: Vec<usize> = (0..images.n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum_total, mut sum_recon, mut sum_kl) = (0.0, 0.0, 0.0);
        for idx in order.chunks(cfg.batch_size) {
            let batch = gather(images, idx);
            let eps: Vec<f64> = (0..idx.len() * cfg.latent_dim)
                .map(|_| StandardNormal.sample(&mut noise_rng))
                .collect();
            model.zero_grad();
            let fwd = model.forward_train(&batch, &eps)?;
            let (terms, d_logits, d_mu, d_logvar) = loss_from_logits(&batch, &fwd, cfg.kl_weight);
            if !terms.total.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "loss diverged at epoch {epoch}"
                )));
            }
            model.backward(&fwd, &d_logits, &d_mu, &d_logvar, &eps);
            adam.update(&mut model.params_mut());
            let w = idx.len() as f64;
            sum_total += terms.total * w;
            sum_recon += terms.recon * w;
            sum_kl += terms.kl * w;
        }
        let n = images.n as f64;
        let stats = EpochStats {
            epoch,
            loss: sum_total / n,
            recon: sum_recon / n,
            kl: sum_kl / n,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((model, history))
}

/// Trains a stroke-image VAE, returning the model and per-epoch losses.
pub fn train(dataset: &[StrokeImage], cfg: &VaeConfig) -> Result<(VaeModel, Vec<EpochStats>)> {
    train_with_progress(dataset, cfg, |_| {})
}

pub fn train_with_progress<F>(dataset: &[StrokeImage], cfg: &VaeConfig, on_epoch: F) -> Result<(VaeModel, Vec<EpochStats>)>
where
    F: FnMut(&EpochStats),
{
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("dataset is empty".into()));
    }
    if cfg.image_height != STROKE_HEIGHT || cfg.image_width != STROKE_WIDTH {
        return Err(Error::shape(
            format!("{STROKE_HEIGHT}x{STROKE_WIDTH} config"),
            format!("{}x{}", cfg.image_height, cfg.image_width),
        ));
    }
    train_tensor(&images_to_tensor(dataset), cfg, on_epoch)
}

/// Decodes `n` draws from the standard-normal prior.
pub fn sample(model: &VaeModel, n: usize, seed: u64) -> Result<Vec<StrokeImage>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let latent = model.config().latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n * latent).map(|_| StandardNormal.sample(&mut rng)).collect();
    let out = model.decode(&Tensor::from_vec(n, latent, 1, 1, z))?;
    tensor_to_images(&out)
}

/// Decodes the latent mean of each image (no sampling noise).
pub fn reconstruct(model: &VaeModel, images: &[StrokeImage]) -> Result<Vec<StrokeImage>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let (mu, _) = model.encode(&images_to_tensor(images))?;
    tensor_to_images(&model.decode(&mu)?)
}
