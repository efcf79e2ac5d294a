//! Transformer encoder score network.
//!
//! Each column of a `V × L` token field is one position. Columns are
//! projected to `d_model`, given sinusoidal positions, passed through
//! post-norm encoder layers and projected back to `V`. The body never sees
//! the noise level; the score is the raw output divided by σ.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::kernel::{Graph, KernelError, Tensor, Var};
use crate::rng::seeded;
use crate::sampler::{SampleError, ScoreFn};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid network config: {0}")]
    Config(&'static str),
    #[error("input is {got_v}x{got_l}, network expects {v}x{l}")]
    InputShape { v: usize, l: usize, got_v: usize, got_l: usize },
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    ParameterShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("expected {expected} parameter tensors, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Conditioning {
    /// Unconditional body, output divided by σ.
    #[default]
    OutputSigmaScaling,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreNetConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_width: usize,
    pub conditioning: Conditioning,
}

impl ScoreNetConfig {
    /// 64 wide, 2 layers, 4 heads.
    pub fn desk(vocab_size: usize, max_len: usize) -> Self {
        Self::with_size(vocab_size, max_len, 64, 2, 4)
    }

    /// 512 wide, 6 layers, 4 heads.
    pub fn full(vocab_size: usize, max_len: usize) -> Self {
        Self::with_size(vocab_size, max_len, 512, 6, 4)
    }

    /// Feedforward width defaults to `4·d_model`.
    pub fn with_size(vocab_size: usize, max_len: usize, d_model: usize, n_layers: usize, n_heads: usize) -> Self {
        Self {
            vocab_size,
            max_len,
            d_model,
            n_layers,
            n_heads,
            ff_width: 4 * d_model,
            conditioning: Conditioning::OutputSigmaScaling,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if [self.vocab_size, self.max_len, self.d_model, self.n_layers, self.n_heads, self.ff_width].contains(&0) {
            return Err(ModelError::Config("all dimensions must be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config("d_model must be divisible by n_heads"));
        }
        Ok(())
    }

    /// Names and shapes of every trainable tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (v, d, f) = (self.vocab_size, self.d_model, self.ff_width);
        let mut out = vec![(String::from("in_w"), vec![v, d]), (String::from("in_b"), vec![d])];
        for l in 0..self.n_layers {
            for (name, shape) in [
                ("wq", vec![d, d]),
                ("bq", vec![d]),
                ("wk", vec![d, d]),
                ("bk", vec![d]),
                ("wv", vec![d, d]),
                ("bv", vec![d]),
                ("wo", vec![d, d]),
                ("bo", vec![d]),
                ("ln1_g", vec![d]),
                ("ln1_b", vec![d]),
                ("ff1_w", vec![d, f]),
                ("ff1_b", vec![f]),
                ("ff2_w", vec![f, d]),
                ("ff2_b", vec![d]),
                ("ln2_g", vec![d]),
                ("ln2_b", vec![d]),
            ] {
                out.push((format!("layer{l}.{name}"), shape));
            }
        }
        out.push((String::from("out_w"), vec![d, v]));
        out.push((String::from("out_b"), vec![v]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

const PER_LAYER: usize = 16;
const LN_EPS: f64 = 1e-5;

/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn sinusoidal_positions(max_len: usize, d_model: usize) -> Tensor {
    Tensor::from_fn(&[max_len, d_model], |k| {
        let (p, j) = (k / d_model, k % d_model);
        let rate = libm::pow(10_000.0, (j - j % 2) as f64 / d_model as f64);
        let a = p as f64 / rate;
        if j % 2 == 0 {
            libm::sin(a)
        } else {
            libm::cos(a)
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNetwork {
    config: ScoreNetConfig,
    params: Vec<Tensor>,
    positions: Tensor,
}

/// Graph handles for one forward pass.
#[derive(Clone, Debug)]
pub struct Bound {
    pub params: Vec<Var>,
    positions: Var,
}

impl ScoreNetwork {
    /// Weight matrices uniform in `±√(6/(fan_in + fan_out))`, biases zero,
    /// norm gains one.
    pub fn init(config: ScoreNetConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let params = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                if shape.len() == 2 {
                    let a = libm::sqrt(6.0 / (shape[0] + shape[1]) as f64);
                    Tensor::from_fn(&shape, |_| rng.random_range(-a..a))
                } else if name.ends_with("_g") {
                    Tensor::filled(&shape, 1.0)
                } else {
                    Tensor::zeros(&shape)
                }
            })
            .collect();
        let positions = sinusoidal_positions(config.max_len, config.d_model);
        Ok(Self { config, params, positions })
    }

    /// Rebuilds a network from stored tensors, checking every shape.
    pub fn from_parameters(config: ScoreNetConfig, params: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if shapes.len() != params.len() {
            return Err(ModelError::ParameterCount { expected: shapes.len(), got: params.len() });
        }
        for ((name, shape), p) in shapes.into_iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(ModelError::ParameterShape { name, expected: shape, got: p.shape().to_vec() });
            }
        }
        let positions = sinusoidal_positions(config.max_len, config.d_model);
        Ok(Self { config, params, positions })
    }

    pub fn config(&self) -> &ScoreNetConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Puts parameters on the tape, as gradient leaves when `trainable`.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>, trainable: bool) -> Bound {
        let params = self
            .params
            .iter()
            .map(|p| if trainable { g.param(p) } else { g.constant_ref(p) })
            .collect();
        let positions = g.constant_ref(&self.positions);
        Bound { params, positions }
    }

    /// Raw body output `σ·s(x, σ)` for a `V × L` input node; returns `V × L`.
    pub fn raw_output(&self, g: &mut Graph<'_>, b: &Bound, x: Var) -> Result<Var, ModelError> {
        let c = &self.config;
        let shape = g.value(x).shape();
        if shape != [c.vocab_size, c.max_len] {
            let (got_v, got_l) = match *shape {
                [a, b] => (a, b),
                _ => (0, 0),
            };
            return Err(ModelError::InputShape { v: c.vocab_size, l: c.max_len, got_v, got_l });
        }
        let p = &b.params;
        let (len, d) = (c.max_len, c.d_model);
        let dh = d / c.n_heads;
        let inv_sqrt_dh = 1.0 / libm::sqrt(dh as f64);

        let cols = g.transpose(x)?;
        let h = g.matmul(cols, p[0])?;
        let h = g.add_row(h, p[1])?;
        let mut h = g.add(h, b.positions)?;

        for layer in 0..c.n_layers {
            let w = &p[2 + layer * PER_LAYER..2 + (layer + 1) * PER_LAYER];
            let q = affine(g, h, w[0], w[1])?;
            let k = affine(g, h, w[2], w[3])?;
            let v = affine(g, h, w[4], w[5])?;
            let mut heads = Vec::with_capacity(c.n_heads);
            for hd in 0..c.n_heads {
                let span = hd * dh..(hd + 1) * dh;
                let qh = g.narrow(q, 0..len, span.clone())?;
                let kh = g.narrow(k, 0..len, span.clone())?;
                let vh = g.narrow(v, 0..len, span)?;
                let kt = g.transpose(kh)?;
                let s = g.matmul(qh, kt)?;
                let s = g.scale(s, inv_sqrt_dh)?;
                let a = g.softmax_rows(s)?;
                heads.push(g.matmul(a, vh)?);
            }
            let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
            let attn = affine(g, cat, w[6], w[7])?;
            let r = g.add(h, attn)?;
            h = g.layer_norm(r, w[8], w[9], LN_EPS)?;

            let f = affine(g, h, w[10], w[11])?;
            let f = g.gelu(f)?;
            let f = affine(g, f, w[12], w[13])?;
            let r = g.add(h, f)?;
            h = g.layer_norm(r, w[14], w[15], LN_EPS)?;
        }

        let n = p.len();
        let out = affine(g, h, p[n - 2], p[n - 1])?;
        Ok(g.transpose(out)?)
    }

    fn input_tensor(&self, x: &[f64]) -> Result<Tensor, ModelError> {
        let (v, l) = (self.config.vocab_size, self.config.max_len);
        if x.len() != v * l {
            return Err(ModelError::InputShape { v, l, got_v: x.len() / l.max(1), got_l: l });
        }
        Ok(Tensor::new(&[v, l], x.to_vec())?)
    }

    /// Raw output for a flat row-major `V × L` field.
    pub fn forward_raw(&self, x: &[f64]) -> Result<Tensor, ModelError> {
        let t = self.input_tensor(x)?;
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        let xv = g.constant(t);
        let out = self.raw_output(&mut g, &b, xv)?;
        Ok(g.value(out).clone())
    }

    /// `s(x, σ) = raw(x)/σ`, shape `V × L`.
    pub fn score(&self, x: &[f64], sigma: f64) -> Result<Tensor, ModelError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::BadSigma(sigma));
        }
        let mut raw = self.forward_raw(x)?;
        for v in raw.data_mut() {
            *v /= sigma;
        }
        Ok(raw)
    }
}

fn affine(g: &mut Graph<'_>, x: Var, w: Var, b: Var) -> Result<Var, KernelError> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

impl ScoreFn for ScoreNetwork {
    fn dim(&self) -> usize {
        self.config.vocab_size * self.config.max_len
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<(), SampleError> {
        let s = self.score(x, sigma).map_err(|e| match e {
            ModelError::BadSigma(s) => SampleError::BadSigma(s),
            ModelError::Kernel(k) => SampleError::Model(k),
            _ => SampleError::Dimension { expected: self.dim(), got: x.len() },
        })?;
        out.copy_from_slice(s.data());
        Ok(())
    }
}
