//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robopaint::canvas::Canvas;
use robopaint::data::mocap::MocapFrame;
use robopaint::program::CanvasFrame;
use robopaint::stroke::Stroke;
use robopaint::vae::layers::Tensor;
use robopaint::vae::{loss_from_logits, VaeConfig, VaeModel};

/// Black disc of radius `radius_px` centered on a white square canvas.
pub fn disc_target(size: usize, radius_px: f64) -> Canvas {
    let c = size as f64 / 2.0;
    let px = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            if (x - c).hypot(y - c) <= radius_px { 0.0 } else { 1.0 }
        })
        .collect();
    Canvas::from_pixels(size, size, px).unwrap()
}

pub fn bezier(s: &Stroke, t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let (a, b, c) = (u * u, 2.0 * u * t, t * t);
    (a * s.x0 + b * s.x1 + c * s.x2, a * s.y0 + b * s.y1 + c * s.y2)
}

/// Pixels whose center lies within some disc stamped along the curve, by
/// testing every pixel against every sample.
pub fn raster_oracle(s: &Stroke, w: usize, h: usize, density: f64) -> BTreeSet<(usize, usize)> {
    let (wf, hf) = (w as f64, h as f64);
    let d01 = ((s.x1 - s.x0) * wf).hypot((s.y1 - s.y0) * hf);
    let d12 = ((s.x2 - s.x1) * wf).hypot((s.y2 - s.y1) * hf);
    let n = ((density * (d01 + d12)).ceil() as usize).max(1);
    let scale = w.max(h) as f64;
    let mut set = BTreeSet::new();
    for py in 0..h {
        for px in 0..w {
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let (bx, by) = bezier(s, t);
                let r = ((1.0 - t) * s.r0 + t * s.r1) * scale;
                let dx = px as f64 + 0.5 - bx * wf;
                let dy = py as f64 + 0.5 - by * hf;
                if dx * dx + dy * dy <= r * r {
                    set.insert((px, py));
                    break;
                }
            }
        }
    }
    set
}

/// Lowest within-cluster sum of squares over every labelling of the
/// points into exactly `k` non-empty groups.
pub fn exhaustive_inertia(points: &[f64], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let used: BTreeSet<_> = labels.iter().copied().collect();
        if used.len() == k {
            let mut total = 0.0;
            for c in 0..k {
                let members: Vec<f64> = (0..n).filter(|&i| labels[i] == c).map(|i| points[i]).collect();
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                total += members.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
            best = best.min(total);
        }
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

pub fn frame_at(i: usize, x: f64, z: f64) -> MocapFrame {
    MocapFrame {
        frame: i as u64,
        time_s: i as f64 / 120.0,
        x,
        y: -x,
        z,
        yaw: 0.1 * i as f64,
        pitch: 1.0,
        roll: 2.0,
    }
}

/// `periods` × 100 frames with z = 2 + 10 cos(2π (i + ½) / 100), so z < 2
/// exactly when i mod 100 lies in 25..=74.
pub fn sine_stream(periods: usize) -> Vec<MocapFrame> {
    (0..periods * 100)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / 100.0;
            frame_at(i, i as f64, 2.0 + 10.0 * theta.cos())
        })
        .collect()
}

pub fn sine_dips(periods: usize) -> Vec<(u64, u64)> {
    (0..periods as u64).map(|p| (p * 100 + 25, p * 100 + 74)).collect()
}

/// Source frame used for output step `i` when resampling `n` frames to 60.
pub fn resample_source(i: usize, n: usize) -> usize {
    if n >= 60 {
        ((i * (n - 1)) as f64 / 59.0).round() as usize
    } else {
        i.min(n - 1)
    }
}

/// Absolute difference of two angles in degrees, as radians in [0, π].
pub fn angle_gap(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg).to_radians();
    d.sin().atan2(d.cos()).abs()
}

/// Direction (degrees) perpendicular to the curve at the point whose work
/// frame x equals `x`; requires x to be monotone along the curve.
pub fn perpendicular_at_x(s: &Stroke, frame: &CanvasFrame, x: f64) -> f64 {
    let increasing = s.x2 > s.x0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let xm = frame.origin_x + bezier(s, mid).0 * frame.width_mm;
        if (xm < x) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let dx = 2.0 * ((1.0 - t) * (s.x1 - s.x0) + t * (s.x2 - s.x1)) * frame.width_mm;
    let dy = 2.0 * ((1.0 - t) * (s.y1 - s.y0) + t * (s.y2 - s.y1)) * frame.height_mm;
    dy.atan2(dx).to_degrees() + 90.0
}

/// Tiny network for finite-difference checks.
pub fn micro_vae_config() -> VaeConfig {
    VaeConfig {
        latent_dim: 2,
        num_blocks: 1,
        base_channels: 2,
        max_channels: 2,
        image_height: 4,
        image_width: 8,
        seed: 21,
        ..VaeConfig::default()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

fn total_loss(model: &mut VaeModel, x: &Tensor, eps: &[f64]) -> f64 {
    let fwd = model.forward_train(x, eps).unwrap();
    loss_from_logits(x, &fwd, 1.0).0.total
}

/// Compares backprop against central differences (h = 1e-5) on `count`
/// distinct random parameters of the micro network. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps gradients that are zero
/// up to rounding from dominating.
pub fn gradient_check(count: usize, seed: u64) -> Vec<GradCheck> {
    let cfg = micro_vae_config();
    let mut model = VaeModel::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_vec(3, 1, 4, 8, (0..3 * 32).map(|_| rng.random::<f64>()).collect());
    let eps: Vec<f64> = (0..3 * cfg.latent_dim).map(|_| rng.random_range(-1.0..1.0)).collect();

    model.zero_grad();
    let fwd = model.forward_train(&x, &eps).unwrap();
    let (_, dl, dm, dv) = loss_from_logits(&x, &fwd, 1.0);
    model.backward(&fwd, &dl, &dm, &dv, &eps);

    let sizes: Vec<usize> = model.params_mut().iter().map(|p| p.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut picks: Vec<(usize, usize)> = Vec::new();
    while picks.len() < count.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        if !picks.contains(&(which, flat)) {
            picks.push((which, flat));
        }
    }

    let h = 1e-5;
    picks
        .into_iter()
        .map(|(p, i)| {
            let analytic = model.params_mut()[p].grad[i];
            let orig = model.params_mut()[p].value[i];
            model.params_mut()[p].value[i] = orig + h;
            let up = total_loss(&mut model, &x, &eps);
            model.params_mut()[p].value[i] = orig - h;
            let down = total_loss(&mut model, &x, &eps);
            model.params_mut()[p].value[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            GradCheck { param: p, index: i, analytic, numeric, rel_err }
        })
        .collect()
}
