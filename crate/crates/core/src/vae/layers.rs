//! Layers with hand-written backward passes.
//!
//! Training forwards cache what their backward needs; `infer` paths are
//! `&self` and cache nothing, so a trained model can be shared for
//! inference. Gradients accumulate into [`Param::grad`] until cleared.

use rand::Rng;

/// NCHW tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Tensor { n, c, h, w, data }
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Same data, new per-sample shape.
    pub fn reshaped(mut self, c: usize, h: usize, w: usize) -> Tensor {
        assert_eq!(c * h * w, self.sample_len(), "reshape size");
        self.c = c;
        self.h = h;
        self.w = w;
        self
    }
}

/// A trainable (or buffered) tensor with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Param {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Param { shape, value, grad }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Param {
        let len = shape.iter().product();
        Param::new(shape, vec![v; len])
    }

    pub fn uniform<R: Rng>(shape: Vec<usize>, bound: f64, rng: &mut R) -> Param {
        let len = shape.iter().product();
        let value = (0..len)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        Param::new(shape, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// `C = alpha * op(A) * op(B) + beta * C` for row-major matrices, where
/// `op(A)` is `m×k` and `op(B)` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Window geometry shared by convolution and its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Window {
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Input length that a transposed convolution maps `len` onto.
    pub fn transposed_len(&self, len: usize) -> usize {
        (len - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfolds one `c×h×w` sample into a `(c·k·k) × (ho·wo)` matrix.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, win: Window, cols: &mut [f64]) {
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let k = win.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * plane;
                for oy in 0..ho {
                    let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                    let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &x[ci * h * w + iy as usize * w..];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters and sums columns back into `x`.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, win: Window, x: &mut [f64]) {
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let k = win.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * plane;
                for oy in 0..ho {
                    let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = ci * h * w + iy as usize * w;
                    for ox in 0..wo {
                        let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x[base + ix as usize] += cols[row + oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution, weights `[cout, cin, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub cin: usize,
    pub cout: usize,
    pub win: Window,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new<R: Rng>(cin: usize, cout: usize, win: Window, bias: bool, rng: &mut R) -> Conv2d {
        let fan_in = (cin * win.kernel * win.kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = Param::uniform(vec![cout, cin, win.kernel, win.kernel], bound, rng);
        let bias = bias.then(|| Param::uniform(vec![cout], bound, rng));
        Conv2d {
            weight,
            bias,
            cin,
            cout,
            win,
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (ho, wo) = (self.win.out_len(x.h), self.win.out_len(x.w));
        let ckk = self.cin * self.win.kernel * self.win.kernel;
        let mut cols = vec![0.0; ckk * ho * wo];
        let mut y = Tensor::zeros(x.n, self.cout, ho, wo);
        for i in 0..x.n {
            im2col(x.sample(i), x.c, x.h, x.w, self.win, &mut cols);
            let out = y.sample_mut(i);
            gemm(self.cout, ckk, ho * wo, &self.weight.value, false, &cols, false, 0.0, out);
            if let Some(b) = &self.bias {
                for (co, chunk) in out.chunks_mut(ho * wo).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += b.value[co]);
                }
            }
        }
        y
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = self.infer(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("conv backward without forward");
        let (ho, wo) = (dy.h, dy.w);
        let ckk = self.cin * self.win.kernel * self.win.kernel;
        let mut cols = vec![0.0; ckk * ho * wo];
        let mut dcols = vec![0.0; ckk * ho * wo];
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        for i in 0..x.n {
            let g = dy.sample(i);
            im2col(x.sample(i), x.c, x.h, x.w, self.win, &mut cols);
            gemm(self.cout, ho * wo, ckk, g, false, &cols, true, 1.0, &mut self.weight.grad);
            if let Some(b) = &mut self.bias {
                for (co, chunk) in g.chunks(ho * wo).enumerate() {
                    b.grad[co] += chunk.iter().sum::<f64>();
                }
            }
            gemm(ckk, self.cout, ho * wo, &self.weight.value, true, g, false, 0.0, &mut dcols);
            col2im(&dcols, x.c, x.h, x.w, self.win, dx.sample_mut(i));
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

/// Transposed 2-D convolution, weights `[cin, cout, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub cin: usize,
    pub cout: usize,
    pub win: Window,
    cache: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(cin: usize, cout: usize, win: Window, bias: bool, rng: &mut R) -> ConvTranspose2d {
        let fan_in = (cout * win.kernel * win.kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = Param::uniform(vec![cin, cout, win.kernel, win.kernel], bound, rng);
        let bias = bias.then(|| Param::uniform(vec![cout], bound, rng));
        ConvTranspose2d {
            weight,
            bias,
            cin,
            cout,
            win,
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.cin, "transposed conv input channels");
        let (ho, wo) = (self.win.transposed_len(x.h), self.win.transposed_len(x.w));
        let ckk = self.cout * self.win.kernel * self.win.kernel;
        let plane = x.h * x.w;
        let mut cols = vec![0.0; ckk * plane];
        let mut y = Tensor::zeros(x.n, self.cout, ho, wo);
        for i in 0..x.n {
            gemm(ckk, self.cin, plane, &self.weight.value, true, x.sample(i), false, 0.0, &mut cols);
            let out = y.sample_mut(i);
            col2im(&cols, self.cout, ho, wo, self.win, out);
            if let Some(b) = &self.bias {
                for (co, chunk) in out.chunks_mut(ho * wo).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += b.value[co]);
                }
            }
        }
        y
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = self.infer(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("transposed conv backward without forward");
        let ckk = self.cout * self.win.kernel * self.win.kernel;
        let plane = x.h * x.w;
        let mut dcols = vec![0.0; ckk * plane];
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        for i in 0..x.n {
            let g = dy.sample(i);
            if let Some(b) = &mut self.bias {
                for (co, chunk) in g.chunks(dy.h * dy.w).enumerate() {
                    b.grad[co] += chunk.iter().sum::<f64>();
                }
            }
            im2col(g, self.cout, dy.h, dy.w, self.win, &mut dcols);
            gemm(self.cin, plane, ckk, x.sample(i), false, &dcols, true, 1.0, &mut self.weight.grad);
            gemm(self.cin, ckk, plane, &self.weight.value, false, &dcols, false, 0.0, dx.sample_mut(i));
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    n: usize,
    h: usize,
    w: usize,
}

/// Per-channel batch normalization.
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

impl std::fmt::Debug for BatchNorm2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchNorm2d")
            .field("channels", &self.gamma.value.len())
            .field("eps", &self.eps)
            .field("momentum", &self.momentum)
            .finish()
    }
}

impl Clone for BatchNorm2d {
    fn clone(&self) -> Self {
        BatchNorm2d {
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            running_mean: self.running_mean.clone(),
            running_var: self.running_var.clone(),
            eps: self.eps,
            momentum: self.momentum,
            cache: None,
        }
    }
}

impl BatchNorm2d {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> BatchNorm2d {
        BatchNorm2d {
            gamma: Param::filled(vec![channels], 1.0),
            beta: Param::filled(vec![channels], 0.0),
            running_mean: Param::filled(vec![channels], 0.0),
            running_var: Param::filled(vec![channels], 1.0),
            eps,
            momentum,
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let plane = x.h * x.w;
        let mut y = x.clone();
        for i in 0..x.n {
            for (ch, chunk) in y.sample_mut(i).chunks_mut(plane).enumerate() {
                let inv = 1.0 / (self.running_var.value[ch] + self.eps).sqrt();
                let (g, b, m) = (self.gamma.value[ch], self.beta.value[ch], self.running_mean.value[ch]);
                chunk.iter_mut().for_each(|v| *v = (*v - m) * inv * g + b);
            }
        }
        y
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let plane = x.h * x.w;
        let count = (x.n * plane) as f64;
        let channels = x.c;
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for i in 0..x.n {
            for (ch, chunk) in x.sample(i).chunks(plane).enumerate() {
                mean[ch] += chunk.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for i in 0..x.n {
            for (ch, chunk) in x.sample(i).chunks(plane).enumerate() {
                var[ch] += chunk.iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= count);

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = x.data.clone();
        let mut y = x.clone();
        for i in 0..x.n {
            let off = i * x.sample_len();
            for ch in 0..channels {
                let range = off + ch * plane..off + (ch + 1) * plane;
                let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                for j in range {
                    let xh = (x.data[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = xh;
                    y.data[j] = xh * g + b;
                }
            }
        }

        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for ch in 0..channels {
            let rm = &mut self.running_mean.value[ch];
            *rm = (1.0 - self.momentum) * *rm + self.momentum * mean[ch];
            let rv = &mut self.running_var.value[ch];
            *rv = (1.0 - self.momentum) * *rv + self.momentum * var[ch] * unbias;
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            n: x.n,
            h: x.h,
            w: x.w,
        });
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("batch-norm backward without forward");
        let plane = cache.h * cache.w;
        let channels = self.gamma.value.len();
        let count = (cache.n * plane) as f64;
        let sample_len = channels * plane;
        let mut sum_dy = vec![0.0; channels];
        let mut sum_dy_xhat = vec![0.0; channels];
        for i in 0..cache.n {
            for ch in 0..channels {
                let off = i * sample_len + ch * plane;
                for j in off..off + plane {
                    sum_dy[ch] += dy.data[j];
                    sum_dy_xhat[ch] += dy.data[j] * cache.xhat[j];
                }
            }
        }
        for ch in 0..channels {
            self.gamma.grad[ch] += sum_dy_xhat[ch];
            self.beta.grad[ch] += sum_dy[ch];
        }
        let mut dx = Tensor::zeros(cache.n, channels, cache.h, cache.w);
        for i in 0..cache.n {
            for ch in 0..channels {
                let off = i * sample_len + ch * plane;
                let scale = self.gamma.value[ch] * cache.inv_std[ch] / count;
                for j in off..off + plane {
                    dx.data[j] = scale
                        * (count * dy.data[j] - sum_dy[ch] - cache.xhat[j] * sum_dy_xhat[ch]);
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    /// Affine parameters, followed by the running statistics if `buffers`.
    pub fn state_mut(&mut self, buffers: bool) -> Vec<&mut Param> {
        let mut v = vec![&mut self.gamma, &mut self.beta];
        if buffers {
            v.push(&mut self.running_mean);
            v.push(&mut self.running_var);
        }
        v
    }
}

/// Elementwise leaky rectifier.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    cache: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> LeakyRelu {
        LeakyRelu { slope, cache: None }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        y.data
            .iter_mut()
            .for_each(|v| *v = if *v > 0.0 { *v } else { *v * self.slope });
        y
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = self.infer(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("leaky backward without forward");
        let mut dx = dy.clone();
        for (d, v) in dx.data.iter_mut().zip(&x.data) {
            if *v <= 0.0 {
                *d *= self.slope;
            }
        }
        dx
    }
}

/// Affine map on flattened samples, weights `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub inputs: usize,
    pub outputs: usize,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Linear {
        let bound = 1.0 / (inputs as f64).sqrt();
        Linear {
            weight: Param::uniform(vec![outputs, inputs], bound, rng),
            bias: Param::uniform(vec![outputs], bound, rng),
            inputs,
            outputs,
            cache: None,
        }
    }

    /// Output has shape `n × outputs × 1 × 1`.
    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.sample_len(), self.inputs, "linear input size");
        let mut y = Tensor::zeros(x.n, self.outputs, 1, 1);
        for i in 0..x.n {
            y.sample_mut(i).copy_from_slice(&self.bias.value);
        }
        gemm(x.n, self.inputs, self.outputs, &x.data, false, &self.weight.value, true, 1.0, &mut y.data);
        y
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = self.infer(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("linear backward without forward");
        gemm(self.outputs, x.n, self.inputs, &dy.data, true, &x.data, false, 1.0, &mut self.weight.grad);
        for i in 0..x.n {
            for (g, d) in self.bias.grad.iter_mut().zip(dy.sample(i)) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        gemm(x.n, self.outputs, self.inputs, &dy.data, false, &self.weight.value, false, 0.0, &mut dx.data);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
