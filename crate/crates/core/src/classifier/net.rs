//! Small convolutional embedding network with hand-written backpropagation.
//!
//! Layout: a stack of `conv → ReLU` layers (zero padding `k/2`), global
//! average pooling, then a fully connected layer to the embedding. All
//! parameters live in one flat vector, so the two branches of a pair can only
//! ever see the same weights.

use nalgebra::{DMatrix, DMatrixView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Embedding};
use crate::image::Raster;

const MAGIC: &str = "TUBELOC-EMB v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    /// Side of the square network input (pixels).
    pub input_size: usize,
    pub conv: Vec<ConvSpec>,
    pub embedding_dim: usize,
    /// Contrastive margin, in raw embedding distance units.
    pub margin: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_size: 64,
            conv: vec![
                ConvSpec { kernel: 5, channels: 8, stride: 2 },
                ConvSpec { kernel: 5, channels: 16, stride: 2 },
                ConvSpec { kernel: 3, channels: 32, stride: 2 },
            ],
            embedding_dim: 128,
            margin: 1.0,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if self.input_size == 0 || self.embedding_dim == 0 {
            return bad("input size and embedding dimension must be positive");
        }
        if self.conv.is_empty() {
            return bad("at least one convolution layer is required");
        }
        if self.conv.iter().any(|c| c.kernel == 0 || c.channels == 0 || c.stride == 0) {
            return bad("convolution kernel, channels and stride must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvShape {
    in_c: usize,
    in_size: usize,
    out_c: usize,
    out_size: usize,
    k: usize,
    s: usize,
    pad: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvShape {
    fn taps(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.out_size * self.out_size
    }

    /// Patch matrix, one row per output pixel and one column per kernel tap
    /// (column-major, so every tap is a contiguous plane).
    fn im2col(&self, src: &[f64]) -> DMatrix<f64> {
        let (n, os) = (self.in_size as isize, self.out_size);
        let mut cols = vec![0.0; self.pixels() * self.taps()];
        for (tap, plane) in cols.chunks_exact_mut(self.pixels()).enumerate() {
            let (c, ky, kx) = (tap / (self.k * self.k), tap / self.k % self.k, tap % self.k);
            let src = &src[c * self.in_size * self.in_size..];
            for oy in 0..os {
                let y = (oy * self.s + ky) as isize - self.pad as isize;
                if !(0..n).contains(&y) {
                    continue;
                }
                let row = &src[y as usize * self.in_size..][..self.in_size];
                for (ox, v) in plane[oy * os..(oy + 1) * os].iter_mut().enumerate() {
                    let x = (ox * self.s + kx) as isize - self.pad as isize;
                    if (0..n).contains(&x) {
                        *v = row[x as usize];
                    }
                }
            }
        }
        DMatrix::from_vec(self.pixels(), self.taps(), cols)
    }

    /// Adjoint of [`ConvShape::im2col`].
    fn col2im(&self, cols: &DMatrix<f64>) -> Vec<f64> {
        let (n, os) = (self.in_size as isize, self.out_size);
        let mut out = vec![0.0; self.in_c * self.in_size * self.in_size];
        for (tap, plane) in cols.as_slice().chunks_exact(self.pixels()).enumerate() {
            let (c, ky, kx) = (tap / (self.k * self.k), tap / self.k % self.k, tap % self.k);
            let dst = &mut out[c * self.in_size * self.in_size..];
            for oy in 0..os {
                let y = (oy * self.s + ky) as isize - self.pad as isize;
                if !(0..n).contains(&y) {
                    continue;
                }
                let row = &mut dst[y as usize * self.in_size..][..self.in_size];
                for (ox, v) in plane[oy * os..(oy + 1) * os].iter().enumerate() {
                    let x = (ox * self.s + kx) as isize - self.pad as isize;
                    if (0..n).contains(&x) {
                        row[x as usize] += v;
                    }
                }
            }
        }
        out
    }

    /// Transposed weight matrix (taps × out channels) over the flat parameters.
    fn weights<'p>(&self, params: &'p [f64]) -> DMatrixView<'p, f64> {
        DMatrixView::from_slice(&params[self.w_off..self.b_off], self.taps(), self.out_c)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    conv: Vec<ConvShape>,
    fc_in: usize,
    fc_w: usize,
    fc_b: usize,
    total: usize,
}

fn layout(config: &ArchConfig) -> Layout {
    let mut conv = Vec::with_capacity(config.conv.len());
    let (mut c, mut size, mut off) = (1, config.input_size, 0);
    for spec in &config.conv {
        let pad = spec.kernel / 2;
        let out_size = (size + 2 * pad).saturating_sub(spec.kernel) / spec.stride + 1;
        let w_off = off;
        off += spec.channels * c * spec.kernel * spec.kernel;
        let b_off = off;
        off += spec.channels;
        conv.push(ConvShape {
            in_c: c,
            in_size: size,
            out_c: spec.channels,
            out_size,
            k: spec.kernel,
            s: spec.stride,
            pad,
            w_off,
            b_off,
        });
        c = spec.channels;
        size = out_size;
    }
    let fc_w = off;
    let fc_b = fc_w + config.embedding_dim * c;
    Layout { conv, fc_in: c, fc_w, fc_b, total: fc_b + config.embedding_dim }
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    patches: Vec<DMatrix<f64>>,
    activations: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedModel {
    config: ArchConfig,
    layout: Layout,
    params: Vec<f64>,
}

impl EmbedModel {
    /// He-initialised weights, zero biases.
    pub fn new(config: ArchConfig, seed: u64) -> Result<Self, ClassifierError> {
        config.validate()?;
        let layout = layout(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &layout.conv {
            let fan_in = (l.in_c * l.k * l.k) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for w in &mut params[l.w_off..l.b_off] {
                *w = normal.sample(&mut rng);
            }
        }
        let normal = Normal::new(0.0, (2.0 / layout.fc_in as f64).sqrt()).expect("positive std");
        for w in &mut params[layout.fc_w..layout.fc_b] {
            *w = normal.sample(&mut rng);
        }
        Ok(EmbedModel { config, layout, params })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn margin(&self) -> f64 {
        self.config.margin
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Zeroes the fully connected layer (weights and bias).
    pub fn zero_output_layer(&mut self) {
        let (a, b) = (self.layout.fc_w, self.layout.total);
        self.params[a..b].fill(0.0);
    }

    fn check_input(&self, image: &Raster) -> Result<(), ClassifierError> {
        let n = self.config.input_size;
        if image.width != n || image.height != n {
            return Err(ClassifierError::ShapeMismatch { expected: n, width: image.width, height: image.height });
        }
        Ok(())
    }

    /// Embedding of an already preprocessed image.
    pub fn embed(&self, image: &Raster) -> Result<Embedding, ClassifierError> {
        self.check_input(image)?;
        Ok(self.forward(&image.data).0)
    }

    pub(crate) fn forward_checked(&self, image: &Raster) -> Result<(Embedding, Trace), ClassifierError> {
        self.check_input(image)?;
        Ok(self.forward(&image.data))
    }

    fn forward(&self, input: &[f64]) -> (Embedding, Trace) {
        let p = &self.params;
        let mut patches = Vec::with_capacity(self.layout.conv.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layout.conv.len());
        for l in &self.layout.conv {
            let src: &[f64] = activations.last().map_or(input, |a| a.as_slice());
            let cols = l.im2col(src);
            // pixels × channels, column-major: channel planes back to back
            let mut act = (&cols * l.weights(p)).data.as_vec().clone();
            for (o, plane) in act.chunks_exact_mut(l.pixels()).enumerate() {
                let b = p[l.b_off + o];
                for v in plane {
                    *v = (*v + b).max(0.0);
                }
            }
            patches.push(cols);
            activations.push(act);
        }
        let last = self.layout.conv.last().expect("validated non-empty");
        let area = (last.out_size * last.out_size) as f64;
        let act = activations.last().expect("non-empty");
        let pooled: Vec<f64> = act.chunks(last.out_size * last.out_size).map(|c| c.iter().sum::<f64>() / area).collect();
        let dim = self.config.embedding_dim;
        let fc_in = self.layout.fc_in;
        let e = (0..dim)
            .map(|j| {
                let w = &p[self.layout.fc_w + j * fc_in..][..fc_in];
                p[self.layout.fc_b + j] + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (Embedding(e), Trace { patches, activations, pooled })
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂e` for one forward trace.
    pub(crate) fn backward(&self, trace: &Trace, d_embed: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let fc_in = self.layout.fc_in;
        let mut d_pooled = vec![0.0; fc_in];
        for (j, &de) in d_embed.iter().enumerate() {
            if de == 0.0 {
                continue;
            }
            grad[self.layout.fc_b + j] += de;
            let w = &p[self.layout.fc_w + j * fc_in..][..fc_in];
            let gw = &mut grad[self.layout.fc_w + j * fc_in..][..fc_in];
            for c in 0..fc_in {
                gw[c] += de * trace.pooled[c];
                d_pooled[c] += de * w[c];
            }
        }
        let last = self.layout.conv.last().expect("validated non-empty");
        let plane = last.out_size * last.out_size;
        let mut d_act: Vec<f64> = (0..last.out_c * plane).map(|idx| d_pooled[idx / plane] / plane as f64).collect();

        for (li, l) in self.layout.conv.iter().enumerate().rev() {
            // ReLU gate
            for (d, a) in d_act.iter_mut().zip(&trace.activations[li]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let d_out = DMatrixView::from_slice(&d_act, l.pixels(), l.out_c);
            for (o, plane) in d_act.chunks_exact(l.pixels()).enumerate() {
                grad[l.b_off + o] += plane.iter().sum::<f64>();
            }
            let d_w = trace.patches[li].transpose() * d_out;
            for (g, d) in grad[l.w_off..l.b_off].iter_mut().zip(d_w.as_slice()) {
                *g += d;
            }
            if li > 0 {
                let d_cols = d_out * l.weights(p).transpose();
                d_act = l.col2im(&d_cols);
            }
        }
    }

    /// Versioned binary model file.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut head = format!(
            "{MAGIC}\ninput_size {}\nembedding_dim {}\nmargin {}\nlayers {}\n",
            c.input_size,
            c.embedding_dim,
            c.margin,
            c.conv.len()
        );
        for l in &c.conv {
            head.push_str(&format!("conv {} {} {}\n", l.kernel, l.channels, l.stride));
        }
        head.push_str(&format!("params {}\n", self.params.len()));
        let mut out = head.into_bytes();
        out.reserve(self.params.len() * 8);
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let bad = |m: String| ClassifierError::Format(m);
        let mut pos = 0;
        let mut line = || -> Result<&str, ClassifierError> {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header".into()))?;
            let s = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not UTF-8".into()))?;
            pos += end + 1;
            Ok(s)
        };
        if line()? != MAGIC {
            return Err(bad("missing model magic".into()));
        }
        fn field<'a>(l: &'a str, key: &str) -> Result<&'a str, ClassifierError> {
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| ClassifierError::Format(format!("expected `{key}`, found `{l}`")))
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, ClassifierError> {
            s.trim().parse().map_err(|_| ClassifierError::Format(format!("bad number `{s}`")))
        }
        let input_size = num(field(line()?, "input_size")?)?;
        let embedding_dim = num(field(line()?, "embedding_dim")?)?;
        let margin = num(field(line()?, "margin")?)?;
        let layers: usize = num(field(line()?, "layers")?)?;
        let mut conv = Vec::with_capacity(layers);
        for _ in 0..layers {
            let f: Vec<usize> = field(line()?, "conv")?.split(' ').map(num).collect::<Result<_, _>>()?;
            if f.len() != 3 {
                return Err(bad("conv line needs kernel, channels, stride".into()));
            }
            conv.push(ConvSpec { kernel: f[0], channels: f[1], stride: f[2] });
        }
        let count: usize = num(field(line()?, "params")?)?;
        let config = ArchConfig { input_size, conv, embedding_dim, margin };
        config.validate()?;
        let layout = layout(&config);
        let body = &bytes[pos..];
        if count != layout.total || body.len() != count * 8 {
            return Err(bad(format!("expected {} parameters, file holds {}", layout.total, body.len() / 8)));
        }
        let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(EmbedModel { config, layout, params })
    }
}
