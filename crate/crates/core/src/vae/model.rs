use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, LeakyRelu, Linear, Param, Tensor, Window};
use crate::error::{Error, Result};

const DOWN: Window = Window {
    kernel: 4,
    stride: 2,
    pad: 1,
};
const SAME: Window = Window {
    kernel: 3,
    stride: 1,
    pad: 1,
};

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub num_blocks: usize,
    pub base_channels: usize,
    /// Channel count stops doubling here.
    pub max_channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub leaky_slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Weight of the KL term.
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 8,
            num_blocks: 6,
            base_channels: 16,
            max_channels: 128,
            image_height: 32,
            image_width: 64,
            leaky_slope: 0.2,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.0005,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            kl_weight: 1.0,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.num_blocks == 0 || self.base_channels == 0 || self.max_channels == 0 {
            return bad("num_blocks, base_channels and max_channels must be >= 1");
        }
        if self.image_height == 0 || self.image_width == 0 {
            return bad("image size must be positive");
        }
        Ok(())
    }

    /// Output channels of each encoder block.
    pub fn channels(&self) -> Vec<usize> {
        (0..self.num_blocks)
            .map(|i| {
                let c = self.base_channels.saturating_mul(1usize << i.min(20));
                c.min(self.max_channels.max(self.base_channels))
            })
            .collect()
    }

    /// Per-block strides: halve while both sides are even and above 1.
    pub fn strides(&self) -> Vec<usize> {
        let (mut h, mut w) = (self.image_height, self.image_width);
        (0..self.num_blocks)
            .map(|_| {
                if h >= 2 && w >= 2 && h % 2 == 0 && w % 2 == 0 {
                    h /= 2;
                    w /= 2;
                    2
                } else {
                    1
                }
            })
            .collect()
    }

    /// Spatial size at the bottleneck.
    pub fn bottleneck(&self) -> (usize, usize) {
        let shrink: usize = self.strides().iter().product();
        (self.image_height / shrink, self.image_width / shrink)
    }
}

fn window(stride: usize) -> Window {
    if stride == 2 {
        DOWN
    } else {
        SAME
    }
}

/// conv → BN → leaky → conv → BN, added back onto the input.
#[derive(Debug, Clone)]
pub(crate) struct SkipCapsule {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    act: LeakyRelu,
    conv2: Conv2d,
    bn2: BatchNorm2d,
}

impl SkipCapsule {
    fn new(ch: usize, cfg: &VaeConfig, rng: &mut ChaCha8Rng) -> SkipCapsule {
        SkipCapsule {
            conv1: Conv2d::new(ch, ch, SAME, false, rng),
            bn1: BatchNorm2d::new(ch, cfg.bn_eps, cfg.bn_momentum),
            act: LeakyRelu::new(cfg.leaky_slope),
            conv2: Conv2d::new(ch, ch, SAME, false, rng),
            bn2: BatchNorm2d::new(ch, cfg.bn_eps, cfg.bn_momentum),
        }
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let h = self.bn1.infer(&self.conv1.infer(x));
        let h = self.bn2.infer(&self.conv2.infer(&self.act.infer(&h)));
        add(x, &h)
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        let h = self.conv1.forward(x);
        let h = self.bn1.forward(&h);
        let h = self.act.forward(&h);
        let h = self.conv2.forward(&h);
        let h = self.bn2.forward(&h);
        add(x, &h)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.bn2.backward(dy);
        let g = self.conv2.backward(&g);
        let g = self.act.backward(&g);
        let g = self.bn1.backward(&g);
        let g = self.conv1.backward(&g);
        add(dy, &g)
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>, buffers: bool) {
        out.extend(self.conv1.params_mut());
        out.extend(self.bn1.state_mut(buffers));
        out.extend(self.conv2.params_mut());
        out.extend(self.bn2.state_mut(buffers));
    }
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    out.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
    out
}

#[derive(Debug, Clone)]
enum Resample {
    Down(Conv2d),
    Up(ConvTranspose2d),
}

/// Resampling conv → BN → leaky → skip capsule.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    resample: Resample,
    bn: BatchNorm2d,
    act: LeakyRelu,
    capsule: SkipCapsule,
}

impl Block {
    fn encoder(cin: usize, cout: usize, stride: usize, cfg: &VaeConfig, rng: &mut ChaCha8Rng) -> Block {
        Block {
            resample: Resample::Down(Conv2d::new(cin, cout, window(stride), false, rng)),
            bn: BatchNorm2d::new(cout, cfg.bn_eps, cfg.bn_momentum),
            act: LeakyRelu::new(cfg.leaky_slope),
            capsule: SkipCapsule::new(cout, cfg, rng),
        }
    }

    fn decoder(cin: usize, cout: usize, stride: usize, cfg: &VaeConfig, rng: &mut ChaCha8Rng) -> Block {
        Block {
            resample: Resample::Up(ConvTranspose2d::new(cin, cout, window(stride), false, rng)),
            bn: BatchNorm2d::new(cout, cfg.bn_eps, cfg.bn_momentum),
            act: LeakyRelu::new(cfg.leaky_slope),
            capsule: SkipCapsule::new(cout, cfg, rng),
        }
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let h = match &self.resample {
            Resample::Down(c) => c.infer(x),
            Resample::Up(c) => c.infer(x),
        };
        self.capsule.infer(&self.act.infer(&self.bn.infer(&h)))
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        let h = match &mut self.resample {
            Resample::Down(c) => c.forward(x),
            Resample::Up(c) => c.forward(x),
        };
        let h = self.bn.forward(&h);
        let h = self.act.forward(&h);
        self.capsule.forward(&h)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.capsule.backward(dy);
        let g = self.act.backward(&g);
        let g = self.bn.backward(&g);
        match &mut self.resample {
            Resample::Down(c) => c.backward(&g),
            Resample::Up(c) => c.backward(&g),
        }
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>, buffers: bool) {
        match &mut self.resample {
            Resample::Down(c) => out.extend(c.params_mut()),
            Resample::Up(c) => out.extend(c.params_mut()),
        }
        out.extend(self.bn.state_mut(buffers));
        self.capsule.tensors_mut(out, buffers);
    }
}

/// Convolutional VAE over single-channel stroke images.
#[derive(Debug, Clone)]
pub struct VaeModel {
    config: VaeConfig,
    encoder: Vec<Block>,
    mu_head: Linear,
    logvar_head: Linear,
    latent_in: Linear,
    latent_act: LeakyRelu,
    decoder: Vec<Block>,
    out_conv: Conv2d,
}

/// Everything a training step needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
    /// Pre-sigmoid decoder output.
    pub logits: Tensor,
}

/// Loss terms, each averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl VaeModel {
    /// Freshly initialized model; weights are drawn from `cfg.seed`.
    pub fn new(cfg: &VaeConfig) -> Result<VaeModel> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let channels = cfg.channels();
        let strides = cfg.strides();
        let (bh, bw) = cfg.bottleneck();
        let last = *channels.last().expect("num_blocks >= 1");
        let flat = last * bh * bw;

        let mut encoder = Vec::with_capacity(cfg.num_blocks);
        let mut cin = 1;
        for (&cout, &stride) in channels.iter().zip(&strides) {
            encoder.push(Block::encoder(cin, cout, stride, cfg, &mut rng));
            cin = cout;
        }
        let mu_head = Linear::new(flat, cfg.latent_dim, &mut rng);
        let logvar_head = Linear::new(flat, cfg.latent_dim, &mut rng);
        let latent_in = Linear::new(cfg.latent_dim, flat, &mut rng);

        let mut decoder = Vec::with_capacity(cfg.num_blocks);
        for i in (0..cfg.num_blocks).rev() {
            let cin = channels[i];
            let cout = if i == 0 { cfg.base_channels } else { channels[i - 1] };
            decoder.push(Block::decoder(cin, cout, strides[i], cfg, &mut rng));
        }
        let out_conv = Conv2d::new(cfg.base_channels, 1, SAME, true, &mut rng);

        Ok(VaeModel {
            config: cfg.clone(),
            encoder,
            mu_head,
            logvar_head,
            latent_in,
            latent_act: LeakyRelu::new(cfg.leaky_slope),
            decoder,
            out_conv,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    fn check_images(&self, x: &Tensor) -> Result<()> {
        let (h, w) = (self.config.image_height, self.config.image_width);
        if x.n == 0 || x.c != 1 || x.h != h || x.w != w {
            return Err(Error::shape(
                format!("batch x 1 x {h} x {w}"),
                format!("{} x {} x {} x {}", x.n, x.c, x.h, x.w),
            ));
        }
        Ok(())
    }

    fn check_latent(&self, z: &Tensor) -> Result<()> {
        if z.n == 0 || z.sample_len() != self.config.latent_dim {
            return Err(Error::shape(
                format!("batch x {}", self.config.latent_dim),
                format!("{} x {}", z.n, z.sample_len()),
            ));
        }
        Ok(())
    }

    fn bottleneck_shape(&self) -> (usize, usize, usize) {
        let (bh, bw) = self.config.bottleneck();
        let last = *self.config.channels().last().expect("num_blocks >= 1");
        (last, bh, bw)
    }

    /// Latent mean and log-variance (inference-mode batch norm).
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_images(x)?;
        let mut h = x.clone();
        for b in &self.encoder {
            h = b.infer(&h);
        }
        Ok((self.mu_head.infer(&h), self.logvar_head.infer(&h)))
    }

    /// Decoder logits for latent codes.
    pub fn decode_logits(&self, z: &Tensor) -> Result<Tensor> {
        self.check_latent(z)?;
        let (c, h, w) = self.bottleneck_shape();
        let mut t = self.latent_act.infer(&self.latent_in.infer(z)).reshaped(c, h, w);
        for b in &self.decoder {
            t = b.infer(&t);
        }
        Ok(self.out_conv.infer(&t))
    }

    /// Images in `[0, 1]` for latent codes.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let mut out = self.decode_logits(z)?;
        out.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(out)
    }

    /// Training-mode forward pass with explicit noise `eps` (batch × latent).
    pub fn forward_train(&mut self, x: &Tensor, eps: &[f64]) -> Result<ForwardPass> {
        self.check_images(x)?;
        if eps.len() != x.n * self.config.latent_dim {
            return Err(Error::shape(x.n * self.config.latent_dim, eps.len()));
        }
        let mut h = x.clone();
        for b in &mut self.encoder {
            h = b.forward(&h);
        }
        let mu = self.mu_head.forward(&h);
        let logvar = self.logvar_head.forward(&h);
        let z = reparameterize(&mu, &logvar, eps)?;
        let (c, bh, bw) = self.bottleneck_shape();
        let t = self.latent_in.forward(&z);
        let mut t = self.latent_act.forward(&t).reshaped(c, bh, bw);
        for b in &mut self.decoder {
            t = b.forward(&t);
        }
        let logits = self.out_conv.forward(&t);
        Ok(ForwardPass { mu, logvar, z, logits })
    }

    /// Backpropagates the loss gradient through the cached forward pass.
    /// `eps` must be the noise used by that pass.
    pub fn backward(&mut self, fwd: &ForwardPass, d_logits: &Tensor, d_mu: &Tensor, d_logvar: &Tensor, eps: &[f64]) {
        let mut g = self.out_conv.backward(d_logits);
        for b in self.decoder.iter_mut().rev() {
            g = b.backward(&g);
        }
        let latent = self.config.latent_dim;
        let g = g.reshaped(self.latent_in.outputs, 1, 1);
        let g = self.latent_act.backward(&g);
        let dz = self.latent_in.backward(&g);

        let mut dmu = d_mu.clone();
        let mut dlv = d_logvar.clone();
        for i in 0..fwd.mu.n * latent {
            let sigma = (0.5 * fwd.logvar.data[i]).exp();
            dmu.data[i] += dz.data[i];
            dlv.data[i] += dz.data[i] * eps[i] * 0.5 * sigma;
        }
        let gh_mu = self.mu_head.backward(&dmu);
        let gh_lv = self.logvar_head.backward(&dlv);
        let mut g = add(&gh_mu, &gh_lv);
        let (c, h, w) = self.bottleneck_shape();
        g = g.reshaped(c, h, w);
        for b in self.encoder.iter_mut().rev() {
            g = b.backward(&g);
        }
    }

    /// Trainable parameters in declaration order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.tensors_mut(false)
    }

    /// Parameters and batch-norm running statistics in declaration order.
    pub fn state_mut(&mut self) -> Vec<&mut Param> {
        self.tensors_mut(true)
    }

    fn tensors_mut(&mut self, buffers: bool) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.encoder {
            b.tensors_mut(&mut out, buffers);
        }
        out.extend(self.mu_head.params_mut());
        out.extend(self.logvar_head.params_mut());
        out.extend(self.latent_in.params_mut());
        for b in &mut self.decoder {
            b.tensors_mut(&mut out, buffers);
        }
        out.extend(self.out_conv.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, eps: &[f64]) -> Result<Tensor> {
    if mu.data.len() != logvar.data.len() || mu.data.len() != eps.len() {
        return Err(Error::shape(
            format!("{} values", mu.data.len()),
            format!("logvar {} / eps {}", logvar.data.len(), eps.len()),
        ));
    }
    let mut z = mu.clone();
    for ((z, lv), e) in z.data.iter_mut().zip(&logvar.data).zip(eps) {
        *z += (0.5 * lv).exp() * e;
    }
    Ok(z)
}

/// KL divergence of `N(mu, exp(logvar))` from the standard normal, summed
/// over latent dimensions and averaged over the batch.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> f64 {
    let n = mu.n.max(1) as f64;
    let s: f64 = mu
        .data
        .iter()
        .zip(&logvar.data)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum();
    -0.5 * s / n
}

fn log_clamped(p: f64) -> f64 {
    p.ln().max(-100.0)
}

/// ELBO-style loss from probabilities: pixel-summed binary cross-entropy
/// plus `beta` times the KL term, both batch-averaged.
pub fn loss(x: &Tensor, x_recon: &Tensor, mu: &Tensor, logvar: &Tensor, beta: f64) -> Result<LossTerms> {
    if x.data.len() != x_recon.data.len() || x.n != x_recon.n {
        return Err(Error::shape(x.data.len(), x_recon.data.len()));
    }
    if mu.data.len() != logvar.data.len() {
        return Err(Error::shape(mu.data.len(), logvar.data.len()));
    }
    for v in x.data.iter().chain(&x_recon.data) {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Domain(format!("{v}")));
        }
    }
    let n = x.n.max(1) as f64;
    let bce: f64 = x
        .data
        .iter()
        .zip(&x_recon.data)
        .map(|(&t, &p)| -(t * log_clamped(p) + (1.0 - t) * log_clamped(1.0 - p)))
        .sum();
    let recon = bce / n;
    let kl = kl_divergence(mu, logvar);
    Ok(LossTerms {
        total: recon + beta * kl,
        recon,
        kl,
    })
}

/// Same loss evaluated from logits, with gradients for the backward pass.
pub fn loss_from_logits(x: &Tensor, fwd: &ForwardPass, beta: f64) -> (LossTerms, Tensor, Tensor, Tensor) {
    let n = x.n as f64;
    let mut d_logits = fwd.logits.clone();
    let mut bce = 0.0;
    for ((d, &l), &t) in d_logits.data.iter_mut().zip(&fwd.logits.data).zip(&x.data) {
        bce += l.max(0.0) - l * t + (-l.abs()).exp().ln_1p();
        *d = (sigmoid(l) - t) / n;
    }
    let kl = kl_divergence(&fwd.mu, &fwd.logvar);
    let mut d_mu = fwd.mu.clone();
    let mut d_logvar = fwd.logvar.clone();
    for (dm, m) in d_mu.data.iter_mut().zip(&fwd.mu.data) {
        *dm = beta * m / n;
    }
    for (dl, lv) in d_logvar.data.iter_mut().zip(&fwd.logvar.data) {
        *dl = -0.5 * beta * (1.0 - lv.exp()) / n;
    }
    let recon = bce / n;
    (
        LossTerms {
            total: recon + beta * kl,
            recon,
            kl,
        },
        d_logits,
        d_mu,
        d_logvar,
    )
}
