//! Dense numeric layer: tensors, fully-connected and 1-D convolution layers,
//! element-wise activations and an adaptive-moment optimizer.
//!
//! Everything is `f64` and row-major. Backward passes accumulate into the
//! gradient tensors of [`LayerParams`]; callers zero them explicitly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("Tensor::new", n, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// One-dimensional tensor over `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Weights and biases of one layer together with their accumulated gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    name: String,
    pub weights: Tensor,
    pub biases: Tensor,
    pub weight_grads: Tensor,
    pub bias_grads: Tensor,
}

impl LayerParams {
    pub fn new(name: impl Into<String>, weights: Tensor, biases: Tensor) -> Self {
        let weight_grads = Tensor::zeros(weights.shape());
        let bias_grads = Tensor::zeros(biases.shape());
        Self {
            name: name.into(),
            weights,
            biases,
            weight_grads,
            bias_grads,
        }
    }

    pub fn zeros(name: impl Into<String>, weight_shape: &[usize], bias_shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(weight_shape), Tensor::zeros(bias_shape))
    }

    /// Weights and biases drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        weight_shape: &[usize],
        bias_shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(name, weight_shape, bias_shape);
        for v in p.weights.data_mut().iter_mut().chain(p.biases.data_mut()) {
            *v = rng.random_range(-bound..=bound);
        }
        p
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn zero_grads(&mut self) {
        self.weight_grads.fill(0.0);
        self.bias_grads.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// `self ← tau·online + (1 − tau)·self` on weights and biases.
    pub fn blend_from(&mut self, online: &LayerParams, tau: f64) {
        let keep = 1.0 - tau;
        let pairs = self
            .weights
            .data_mut()
            .iter_mut()
            .zip(online.weights.data())
            .chain(self.biases.data_mut().iter_mut().zip(online.biases.data()));
        for (t, o) in pairs {
            *t = tau * o + keep * *t;
        }
    }

    pub fn copy_values_from(&mut self, other: &LayerParams) {
        self.weights.data_mut().copy_from_slice(other.weights.data());
        self.biases.data_mut().copy_from_slice(other.biases.data());
    }
}

// ---------------------------------------------------------------------------
// Fully connected

/// `out = x·W + b` for one row; `w` is `[inputs × outputs]`.
pub(crate) fn linear_row(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let n_out = b.len();
    out.copy_from_slice(b);
    for (xi, w_row) in x.iter().zip(w.chunks_exact(n_out)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(w_row) {
            *o += xi * wij;
        }
    }
}

/// Accumulates parameter gradients for one row; writes the input gradient
/// into `dx` when given.
pub(crate) fn linear_row_backward(
    x: &[f64],
    params: &mut LayerParams,
    g: &[f64],
    dx: Option<&mut [f64]>,
) {
    let n_out = g.len();
    for (db, gi) in params.bias_grads.data_mut().iter_mut().zip(g) {
        *db += gi;
    }
    for (xi, dw_row) in x.iter().zip(params.weight_grads.data_mut().chunks_exact_mut(n_out)) {
        if *xi == 0.0 {
            continue;
        }
        for (dw, gj) in dw_row.iter_mut().zip(g) {
            *dw += xi * gj;
        }
    }
    if let Some(dx) = dx {
        linear_row_input_grad(params.weights.data(), g, dx);
    }
}

/// `dx = W·g`, without touching any gradient accumulator.
pub(crate) fn linear_row_input_grad(w: &[f64], g: &[f64], dx: &mut [f64]) {
    let n_out = g.len();
    for (d, w_row) in dx.iter_mut().zip(w.chunks_exact(n_out)) {
        *d = w_row.iter().zip(g).map(|(a, b)| a * b).sum();
    }
}

fn check_fc(op: &'static str, input: &Tensor, params: &LayerParams) -> Result<(usize, usize, usize)> {
    let ws = params.weights.shape();
    if ws.len() != 2 || params.biases.len() != ws[1] {
        return Err(Error::dim(op, "weights [in, out] with bias [out]", (ws, params.biases.shape())));
    }
    let (n_in, n_out) = (ws[0], ws[1]);
    if input.last_dim() != n_in || input.shape().is_empty() {
        return Err(Error::dim(op, input.shape(), ws));
    }
    Ok((input.len() / n_in, n_in, n_out))
}

/// `input·W + b`, batched over every leading dimension of `input`.
pub fn fc_forward(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    let (rows, n_in, n_out) = check_fc("fc_forward", input, params)?;
    let mut out = vec![0.0; rows * n_out];
    for (x, o) in input.data().chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
        linear_row(x, params.weights.data(), params.biases.data(), o);
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = n_out;
    Tensor::new(shape, out)
}

/// Accumulates `dL/dW`, `dL/db` into `params` and returns `dL/dinput`.
pub fn fc_backward(input: &Tensor, params: &mut LayerParams, upstream: &Tensor) -> Result<Tensor> {
    let (rows, n_in, n_out) = check_fc("fc_backward", input, params)?;
    if upstream.len() != rows * n_out || upstream.last_dim() != n_out {
        let mut expected = input.shape().to_vec();
        *expected.last_mut().unwrap() = n_out;
        return Err(Error::dim("fc_backward", expected, upstream.shape()));
    }
    let mut dx = vec![0.0; input.len()];
    for ((x, g), d) in input
        .data()
        .chunks_exact(n_in)
        .zip(upstream.data().chunks_exact(n_out))
        .zip(dx.chunks_exact_mut(n_in))
    {
        linear_row_backward(x, params, g, Some(d));
    }
    Tensor::new(input.shape().to_vec(), dx)
}

// ---------------------------------------------------------------------------
// 1-D convolution (valid, no padding)

/// Output length of a valid 1-D convolution.
pub fn conv1d_output_len(length: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || length < kernel {
        None
    } else {
        Some((length - kernel) / stride + 1)
    }
}

/// Geometry of a conv layer whose weights are `[out_ch, in_ch, kernel]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
    pub out_len: usize,
}

fn conv_shape(op: &'static str, input: &Tensor, params: &LayerParams, stride: usize) -> Result<ConvShape> {
    let ws = params.weights.shape();
    if ws.len() != 3 || params.biases.len() != ws[0] {
        return Err(Error::dim(op, "kernel [out_ch, in_ch, width] with bias [out_ch]", (ws, params.biases.shape())));
    }
    let is = input.shape();
    if is.len() != 2 || is[0] != ws[1] {
        return Err(Error::dim(op, format!("[{}, length]", ws[1]), is));
    }
    if stride == 0 {
        return Err(Error::Config(format!("{op}: stride must be positive")));
    }
    let out_len = conv1d_output_len(is[1], ws[2], stride)
        .ok_or_else(|| Error::dim(op, format!("length >= kernel width {}", ws[2]), is))?;
    Ok(ConvShape {
        in_ch: ws[1],
        out_ch: ws[0],
        kernel: ws[2],
        stride,
        in_len: is[1],
        out_len,
    })
}

pub(crate) fn conv_forward_raw(s: ConvShape, x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    for o in 0..s.out_ch {
        let row = &mut out[o * s.out_len..(o + 1) * s.out_len];
        row.fill(b[o]);
        for c in 0..s.in_ch {
            let xc = &x[c * s.in_len..(c + 1) * s.in_len];
            let wk = &w[(o * s.in_ch + c) * s.kernel..(o * s.in_ch + c + 1) * s.kernel];
            for (k, &wv) in wk.iter().enumerate() {
                if s.stride == 1 {
                    for (r, xv) in row.iter_mut().zip(&xc[k..]) {
                        *r += wv * xv;
                    }
                } else {
                    for (r, xv) in row.iter_mut().zip(xc[k..].iter().step_by(s.stride)) {
                        *r += wv * xv;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_backward_raw(
    s: ConvShape,
    x: &[f64],
    params: &mut LayerParams,
    g: &[f64],
    mut dx: Option<&mut [f64]>,
) {
    if let Some(dx) = dx.as_deref_mut() {
        dx.fill(0.0);
    }
    let w = params.weights.data();
    let dw = params.weight_grads.data_mut();
    for o in 0..s.out_ch {
        let go = &g[o * s.out_len..(o + 1) * s.out_len];
        for c in 0..s.in_ch {
            let xc = &x[c * s.in_len..(c + 1) * s.in_len];
            let base = (o * s.in_ch + c) * s.kernel;
            for k in 0..s.kernel {
                let acc: f64 = go
                    .iter()
                    .zip(xc[k..].iter().step_by(s.stride))
                    .map(|(a, b)| a * b)
                    .sum();
                dw[base + k] += acc;
                if let Some(dx) = dx.as_deref_mut() {
                    let wv = w[base + k];
                    let dxc = &mut dx[c * s.in_len..(c + 1) * s.in_len];
                    for (d, gv) in dxc[k..].iter_mut().step_by(s.stride).zip(go) {
                        *d += wv * gv;
                    }
                }
            }
        }
    }
    for (db, go) in params.bias_grads.data_mut().iter_mut().zip(g.chunks_exact(s.out_len)) {
        *db += go.iter().sum::<f64>();
    }
}

/// Valid cross-correlation of a `[channels × length]` input with a
/// `[out_ch, in_ch, width]` kernel, plus bias.
pub fn conv1d_forward(input: &Tensor, params: &LayerParams, stride: usize) -> Result<Tensor> {
    let s = conv_shape("conv1d_forward", input, params, stride)?;
    let mut out = vec![0.0; s.out_ch * s.out_len];
    conv_forward_raw(s, input.data(), params.weights.data(), params.biases.data(), &mut out);
    Tensor::new(vec![s.out_ch, s.out_len], out)
}

pub fn conv1d_backward(input: &Tensor, params: &mut LayerParams, stride: usize, upstream: &Tensor) -> Result<Tensor> {
    let s = conv_shape("conv1d_backward", input, params, stride)?;
    if upstream.shape() != [s.out_ch, s.out_len] {
        return Err(Error::dim("conv1d_backward", [s.out_ch, s.out_len], upstream.shape()));
    }
    let mut dx = vec![0.0; input.len()];
    conv_backward_raw(s, input.data(), params, upstream.data(), Some(&mut dx));
    Tensor::new(input.shape().to_vec(), dx)
}

// ---------------------------------------------------------------------------
// Activations

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation `x`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation_forward(kind: Activation, input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&x| kind.apply(x)).collect();
    Tensor {
        shape: input.shape().to_vec(),
        data,
    }
}

/// `upstream ⊙ f'(input)`.
pub fn activation_backward(kind: Activation, input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape() != upstream.shape() {
        return Err(Error::dim("activation_backward", input.shape(), upstream.shape()));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| g * kind.derivative(x))
        .collect();
    Ok(Tensor {
        shape: input.shape().to_vec(),
        data,
    })
}

// ---------------------------------------------------------------------------
// Optimizer

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adaptive-moment state for one [`LayerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    m_w: Tensor,
    v_w: Tensor,
    m_b: Tensor,
    v_b: Tensor,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &LayerParams, config: AdamConfig) -> Self {
        Self {
            config,
            m_w: Tensor::zeros(params.weights.shape()),
            v_w: Tensor::zeros(params.weights.shape()),
            m_b: Tensor::zeros(params.biases.shape()),
            v_b: Tensor::zeros(params.biases.shape()),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update from the currently accumulated gradients. Gradients
    /// are left in place.
    pub fn apply(&mut self, params: &mut LayerParams) -> Result<()> {
        if params.weights.shape() != self.m_w.shape() || params.biases.shape() != self.m_b.shape() {
            return Err(Error::dim(
                "optimizer_apply",
                (self.m_w.shape(), self.m_b.shape()),
                (params.weights.shape(), params.biases.shape()),
            ));
        }
        if !params.weight_grads.is_finite() || !params.bias_grads.is_finite() {
            return Err(Error::Divergence {
                param: params.name.clone(),
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let step_size = lr / c1;
        let update = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((w, g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= step_size * *m / ((*v / c2).sqrt() + eps);
            }
        };
        update(
            params.weights.data_mut(),
            params.weight_grads.data(),
            self.m_w.data_mut(),
            self.v_w.data_mut(),
        );
        update(
            params.biases.data_mut(),
            params.bias_grads.data(),
            self.m_b.data_mut(),
            self.v_b.data_mut(),
        );
        Ok(())
    }
}
