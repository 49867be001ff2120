//! Fully connected networks with hand-written reverse mode.
//!
//! Batches are row-major `batch x features`. A forward pass can keep a
//! [`ForwardTrace`] of per-layer inputs and pre-activations, which is all the
//! backward pass needs.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelDims, ChannelRealization};
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const LEAK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
        }
    }

    /// Derivative at `x`; the kink at 0 takes the left slope.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Chains `widths` into layers using `hidden` between them and `output` last.
pub fn mlp_specs(widths: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    (0..n)
        .map(|i| LayerSpec {
            in_dim: widths[i],
            out_dim: widths[i + 1],
            activation: if i + 1 == n { output } else { hidden },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `out_dim x in_dim`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

/// Inputs and pre-activations of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Gradients mirroring [`NetworkParams`], summed over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Per-example input gradients, `batch x in_dim`.
    pub input: Option<Array2<f64>>,
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidDimension("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::InvalidDimension(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && specs[i - 1].out_dim != s.in_dim {
            return Err(Error::Shape(format!(
                "layer {i} expects {} inputs but layer {} emits {}",
                s.in_dim,
                i - 1,
                specs[i - 1].out_dim
            )));
        }
    }
    Ok(())
}

impl NetworkParams {
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        validate_specs(specs)?;
        Ok(Self {
            layers: specs
                .iter()
                .map(|&spec| Layer {
                    spec,
                    weight: Array2::zeros((spec.out_dim, spec.in_dim)),
                    bias: Array1::zeros(spec.out_dim),
                })
                .collect(),
        })
    }

    /// He-normal weights (`N(0, 2/in_dim)`), zero biases.
    pub fn init_he(specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(specs)?;
        for layer in &mut net.layers {
            let std = (2.0 / layer.spec.in_dim as f64).sqrt();
            layer.weight.iter_mut().for_each(|w| {
                let g: f64 = StandardNormal.sample(rng);
                *w = g * std;
            });
        }
        Ok(net)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").spec.out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Product of induced infinity norms of the weight matrices, an upper
    /// bound on the sup-norm Lipschitz constant of the network.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weight
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .product()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    pub fn forward(&self, input: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let x = input.insert_axis(Axis(0));
        Ok(self.forward_batch(x)?.index_axis_move(Axis(0), 0))
    }

    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(input)?;
        let mut x = input.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weight.t());
            z += &l.bias;
            z.mapv_inplace(|v| l.spec.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward_traced(&self, input: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weight.t());
            z += &l.bias;
            let a = z.mapv(|v| l.spec.activation.apply(v));
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok(ForwardTrace { inputs, pre, output: x })
    }

    fn check_input(&self, input: ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.in_dim() {
            return Err(Error::Shape(format!("input width {} != {}", input.ncols(), self.in_dim())));
        }
        Ok(())
    }

    /// Gradients of `sum_b <upstream_b, f(x_b)>`. Parameter gradients are
    /// skipped when `params` is false.
    pub fn backward_traced(
        &self,
        trace: &ForwardTrace,
        upstream: ArrayView2<'_, f64>,
        params: bool,
        input: bool,
    ) -> Result<GradientBundle> {
        if upstream.dim() != trace.output.dim() {
            return Err(Error::Shape(format!(
                "upstream {:?} != output {:?}",
                upstream.dim(),
                trace.output.dim()
            )));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(if params { n } else { 0 });
        let mut biases = Vec::with_capacity(if params { n } else { 0 });
        let mut delta = upstream.to_owned();
        let mut input_grad = None;
        for i in (0..n).rev() {
            let l = &self.layers[i];
            let act = l.spec.activation;
            if act != Activation::Linear {
                ndarray::Zip::from(&mut delta).and(&trace.pre[i]).for_each(|d, &z| *d *= act.derivative(z));
            }
            if params {
                weights.push(delta.t().dot(&trace.inputs[i]));
                biases.push(delta.sum_axis(Axis(0)));
            }
            if i > 0 || input {
                let back = delta.dot(&l.weight);
                if i == 0 {
                    input_grad = Some(back);
                    break;
                }
                delta = back;
            }
        }
        weights.reverse();
        biases.reverse();
        Ok(GradientBundle { weights, biases, input: input_grad })
    }

    /// Gradients of `<upstream, f(input)>` for a single example.
    pub fn backward(&self, input: ArrayView1<'_, f64>, upstream: ArrayView1<'_, f64>) -> Result<GradientBundle> {
        let trace = self.forward_traced(input.insert_axis(Axis(0)))?;
        self.backward_traced(&trace, upstream.insert_axis(Axis(0)), true, true)
    }
}

/// Per-parameter running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl RmsPropState {
    pub fn new(net: &NetworkParams) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { lr: 5e-5, decay: 0.9, eps: 1e-8 }
    }
}

#[inline]
fn rms_update(p: &mut f64, s: &mut f64, g: f64, c: &RmsPropConfig) {
    *s = c.decay * *s + (1.0 - c.decay) * g * g;
    *p -= c.lr * g / (*s + c.eps).sqrt();
}

/// `s <- decay s + (1-decay) g^2`, `p <- p - lr g / sqrt(s + eps)`.
pub fn rmsprop_step(
    net: &mut NetworkParams,
    grads: &GradientBundle,
    state: &mut RmsPropState,
    cfg: &RmsPropConfig,
) -> Result<()> {
    if grads.weights.len() != net.layers.len() || state.weights.len() != net.layers.len() {
        return Err(Error::Shape("gradient/state layer count does not match network".into()));
    }
    for (i, l) in net.layers.iter_mut().enumerate() {
        if grads.weights[i].dim() != l.weight.dim() || grads.biases[i].len() != l.bias.len() {
            return Err(Error::Shape(format!("gradient shape mismatch in layer {i}")));
        }
        ndarray::Zip::from(&mut l.weight)
            .and(&mut state.weights[i])
            .and(&grads.weights[i])
            .for_each(|p, s, &g| rms_update(p, s, g, cfg));
        ndarray::Zip::from(&mut l.bias)
            .and(&mut state.biases[i])
            .and(&grads.biases[i])
            .for_each(|p, s, &g| rms_update(p, s, g, cfg));
    }
    Ok(())
}

/// Clamps every weight and bias to `[-clip, clip]`.
pub fn clip_weights(net: &mut NetworkParams, clip: f64) -> Result<()> {
    if !(clip > 0.0) {
        return Err(Error::InvalidConfig(format!("clip must be positive, got {clip}")));
    }
    for l in &mut net.layers {
        l.weight.mapv_inplace(|w| w.clamp(-clip, clip));
        l.bias.mapv_inplace(|b| b.clamp(-clip, clip));
    }
    Ok(())
}

/// Channel to real features: all real parts, then all imaginary parts, each
/// in stacked `(k, r, t)` order.
pub fn channel_to_real(channel: &ChannelRealization) -> Array1<f64> {
    let v = channel.to_vector();
    let n = v.len();
    let mut out = Array1::zeros(2 * n);
    for (i, z) in v.iter().enumerate() {
        out[i] = z.re;
        out[n + i] = z.im;
    }
    out
}

pub fn real_to_channel(dims: ChannelDims, x: ArrayView1<'_, f64>) -> Result<ChannelRealization> {
    let n = dims.len();
    if x.len() != 2 * n {
        return Err(Error::Shape(format!("real vector length {} != 2 x {n}", x.len())));
    }
    let v = (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect();
    ChannelRealization::from_vector(dims, &v)
}

// Checkpoint file.

pub const GNET_MAGIC: &[u8; 4] = b"GNET";
pub const GNET_VERSION: u16 = 1;

/// A network plus the channel shape and scale its output is interpreted with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: ChannelDims,
    pub output_scale: f64,
    pub net: NetworkParams,
}

fn activation_code(a: Activation) -> (u8, f64) {
    match a {
        Activation::Linear => (0, 0.0),
        Activation::Relu => (1, 0.0),
        Activation::LeakyRelu(s) => (2, s),
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let u32_of = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")));
    let mut out = Vec::new();
    out.extend_from_slice(GNET_MAGIC);
    out.extend_from_slice(&GNET_VERSION.to_le_bytes());
    for v in [ck.dims.n_f, ck.dims.n_rx, ck.dims.n_tx] {
        out.extend_from_slice(&u32_of(v)?.to_le_bytes());
    }
    out.extend_from_slice(&ck.output_scale.to_le_bytes());
    out.extend_from_slice(&u32_of(ck.net.layers.len())?.to_le_bytes());
    for l in &ck.net.layers {
        let (code, leak) = activation_code(l.spec.activation);
        out.extend_from_slice(&u32_of(l.spec.in_dim)?.to_le_bytes());
        out.extend_from_slice(&u32_of(l.spec.out_dim)?.to_le_bytes());
        out.push(code);
        out.extend_from_slice(&leak.to_le_bytes());
    }
    for l in &ck.net.layers {
        for x in l.weight.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.bytes(4)? != GNET_MAGIC {
        return Err(Error::Format("bad magic, expected GNET".into()));
    }
    let version = u16::from_le_bytes(cur.bytes(2)?.try_into().unwrap());
    if version != GNET_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let dims = ChannelDims { n_f: cur.u32()?, n_rx: cur.u32()?, n_tx: cur.u32()? };
    let output_scale = cur.f64()?;
    let n_layers = cur.u32()?;
    let mut specs = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let in_dim = cur.u32()?;
        let out_dim = cur.u32()?;
        let code = cur.bytes(1)?[0];
        let leak = cur.f64()?;
        let activation = match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu(leak),
            c => return Err(Error::Format(format!("unknown activation code {c}"))),
        };
        specs.push(LayerSpec { in_dim, out_dim, activation });
    }
    let mut net = NetworkParams::zeros(&specs).map_err(|e| Error::Format(format!("bad layer specs: {e}")))?;
    let expected: usize = net.num_params() * 8;
    if buf.len() - cur.pos != expected {
        return Err(Error::Format(format!(
            "parameter block is {} bytes but layer specs require {expected}",
            buf.len() - cur.pos
        )));
    }
    for l in &mut net.layers {
        for x in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *x = cur.f64()?;
        }
    }
    Ok(Checkpoint { dims, output_scale, net })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
