//! Feature extractor, projection head, prototype classifier and the
//! auxiliary head that sits behind gradient reversal.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numcore::{Graph, Tensor, Var};
use crate::rng::{self, rng_for};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    /// Input (embedding) dimension.
    pub d: usize,
    /// Extractor output dimension.
    pub d_f: usize,
    /// Projection bottleneck used by the contrastive losses.
    pub d_b: usize,
    /// Hidden width of the auxiliary head.
    pub d_h: usize,
    pub k: usize,
    pub aux_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            d_f: 64,
            d_b: 32,
            d_h: 128,
            k: 7,
            aux_dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.d, self.d_f, self.d_b, self.d_h, self.k].contains(&0) {
            return Err(Error::InvalidArgument(
                "model dimensions must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.aux_dropout) {
            return Err(Error::InvalidArgument(
                "aux_dropout must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

pub const BLOCK_NAMES: [&str; 10] = [
    "extractor.w1",
    "extractor.b1",
    "extractor.w2",
    "extractor.b2",
    "projector.w",
    "prototypes",
    "aux.w1",
    "aux.b1",
    "aux.w2",
    "aux.b2",
];

/// All trainable parameters, in checkpoint declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub ext_w1: Tensor,
    pub ext_b1: Tensor,
    pub ext_w2: Tensor,
    pub ext_b2: Tensor,
    pub proj_w: Tensor,
    /// `[K, d_f]`, one prototype per class.
    pub prototypes: Tensor,
    pub aux_w1: Tensor,
    pub aux_b1: Tensor,
    pub aux_w2: Tensor,
    pub aux_b2: Tensor,
}

/// Graph handles for every parameter block.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub ext_w1: Var,
    pub ext_b1: Var,
    pub ext_w2: Var,
    pub ext_b2: Var,
    pub proj_w: Var,
    pub prototypes: Var,
    pub aux_w1: Var,
    pub aux_b1: Var,
    pub aux_w2: Var,
    pub aux_b2: Var,
}

impl ModelVars {
    pub fn blocks(&self) -> [Var; 10] {
        [
            self.ext_w1,
            self.ext_b1,
            self.ext_w2,
            self.ext_b2,
            self.proj_w,
            self.prototypes,
            self.aux_w1,
            self.aux_b1,
            self.aux_w2,
            self.aux_b2,
        ]
    }

    pub fn extractor(&self) -> [Var; 4] {
        [self.ext_w1, self.ext_b1, self.ext_w2, self.ext_b2]
    }
}

fn uniform(r: &mut rng::Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / libm::sqrt(rows as f64);
    let data = (0..rows * cols)
        .map(|_| r.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("positive dims")
}

impl ModelParams {
    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero,
    /// prototypes standard normal then L2-normalized.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let ModelConfig {
            d,
            d_f,
            d_b,
            d_h,
            k,
            ..
        } = config;
        let mut r = rng_for(seed, &[rng::TAG_INIT]);
        let ext_w1 = uniform(&mut r, d, d_f);
        let ext_w2 = uniform(&mut r, d_f, d_f);
        let proj_w = uniform(&mut r, d_f, d_b);
        let mut protos = Vec::with_capacity(k * d_f);
        for _ in 0..k {
            let v: Vec<f64> = (0..d_f).map(|_| StandardNormal.sample(&mut r)).collect();
            let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            protos.extend(v.into_iter().map(|x| x / n));
        }
        let aux_w1 = uniform(&mut r, d_f, d_h);
        let aux_w2 = uniform(&mut r, d_h, k);
        Ok(Self {
            config,
            ext_w1,
            ext_b1: Tensor::zeros(&[d_f]),
            ext_w2,
            ext_b2: Tensor::zeros(&[d_f]),
            proj_w,
            prototypes: Tensor::new(vec![k, d_f], protos)?,
            aux_w1,
            aux_b1: Tensor::zeros(&[d_h]),
            aux_w2,
            aux_b2: Tensor::zeros(&[k]),
        })
    }

    pub fn blocks(&self) -> [&Tensor; 10] {
        [
            &self.ext_w1,
            &self.ext_b1,
            &self.ext_w2,
            &self.ext_b2,
            &self.proj_w,
            &self.prototypes,
            &self.aux_w1,
            &self.aux_b1,
            &self.aux_w2,
            &self.aux_b2,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.ext_w1,
            &mut self.ext_b1,
            &mut self.ext_w2,
            &mut self.ext_b2,
            &mut self.proj_w,
            &mut self.prototypes,
            &mut self.aux_w1,
            &mut self.aux_b1,
            &mut self.aux_w2,
            &mut self.aux_b2,
        ]
    }

    /// Expected shape of every block for `config`.
    pub fn block_shapes(config: &ModelConfig) -> [Vec<usize>; 10] {
        let ModelConfig {
            d,
            d_f,
            d_b,
            d_h,
            k,
            ..
        } = *config;
        [
            vec![d, d_f],
            vec![d_f],
            vec![d_f, d_f],
            vec![d_f],
            vec![d_f, d_b],
            vec![k, d_f],
            vec![d_f, d_h],
            vec![d_h],
            vec![d_h, k],
            vec![k],
        ]
    }

    /// Rebuilds parameters from blocks in declaration order.
    pub fn from_blocks(config: ModelConfig, blocks: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::block_shapes(&config);
        if blocks.len() != shapes.len() {
            return Err(Error::InvalidArgument(
                "wrong number of parameter blocks".into(),
            ));
        }
        for (b, s) in blocks.iter().zip(&shapes) {
            if b.shape() != s.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "from_blocks",
                    lhs: s.clone(),
                    rhs: b.shape().to_vec(),
                });
            }
            b.check_finite("parameter block")?;
        }
        let mut it = blocks.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(Self {
            config,
            ext_w1: next(),
            ext_b1: next(),
            ext_w2: next(),
            ext_b2: next(),
            proj_w: next(),
            prototypes: next(),
            aux_w1: next(),
            aux_b1: next(),
            aux_w2: next(),
            aux_b2: next(),
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|t| t.len()).sum()
    }

    /// Registers every block as a gradient-requiring leaf.
    pub fn register(&self, g: &mut Graph) -> Result<ModelVars> {
        self.register_with(g, true)
    }

    /// Registers every block as a constant (inference).
    pub fn register_frozen(&self, g: &mut Graph) -> Result<ModelVars> {
        self.register_with(g, false)
    }

    fn register_with(&self, g: &mut Graph, grad: bool) -> Result<ModelVars> {
        let mut reg = |t: &Tensor| {
            if grad {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        Ok(ModelVars {
            ext_w1: reg(&self.ext_w1)?,
            ext_b1: reg(&self.ext_b1)?,
            ext_w2: reg(&self.ext_w2)?,
            ext_b2: reg(&self.ext_b2)?,
            proj_w: reg(&self.proj_w)?,
            prototypes: reg(&self.prototypes)?,
            aux_w1: reg(&self.aux_w1)?,
            aux_b1: reg(&self.aux_b1)?,
            aux_w2: reg(&self.aux_w2)?,
            aux_b2: reg(&self.aux_b2)?,
        })
    }

    /// Extractor features for a batch of inputs (rows), without gradients.
    pub fn features(&self, inputs: &[&[f64]]) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.register_frozen(&mut g)?;
        let x = g.constant(rows_tensor(inputs)?)?;
        let z = extract(&mut g, &vars, x)?;
        Ok(g.value(z).clone())
    }

    /// Main-head class probabilities at temperature `tau`, without gradients.
    pub fn predict_probs(&self, inputs: &[&[f64]], tau: f64) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.register_frozen(&mut g)?;
        let x = g.constant(rows_tensor(inputs)?)?;
        let z = extract(&mut g, &vars, x)?;
        let out = main_logits(&mut g, &vars, z, tau)?;
        Ok(g.value(out.probs).clone())
    }

    /// Main-head argmax predictions (ties to the lowest class).
    pub fn predict(&self, inputs: &[&[f64]]) -> Result<Vec<usize>> {
        let p = self.predict_probs(inputs, 1.0)?;
        Ok((0..p.rows()).map(|i| argmax(p.row(i))).collect())
    }
}

pub(crate) fn rows_tensor(rows: &[&[f64]]) -> Result<Tensor> {
    let width = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidArgument(
            "inputs must be nonempty equal-length rows".into(),
        ));
    }
    let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::new(vec![rows.len(), width], data)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `ψ(x) = W2·gelu(W1·x + b1) + b2`, row-wise over a `[n, d]` batch.
pub fn extract(g: &mut Graph, p: &ModelVars, x: Var) -> Result<Var> {
    let h = g.matmul(x, p.ext_w1)?;
    let h = g.add_row(h, p.ext_b1)?;
    let h = g.gelu(h);
    let z = g.matmul(h, p.ext_w2)?;
    g.add_row(z, p.ext_b2)
}

/// L2-normalized bottleneck projection of extractor features.
pub fn project(g: &mut Graph, p: &ModelVars, z: Var) -> Result<Var> {
    let b = g.matmul(z, p.proj_w)?;
    Ok(g.normalize_rows(b))
}

#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub logits: Var,
    pub probs: Var,
}

/// Prototype head: `logit_k = cos(z, t_k) / tau`, `probs = softmax(logits)`.
pub fn main_logits(g: &mut Graph, p: &ModelVars, z: Var, tau: f64) -> Result<HeadOutput> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(
            "temperature must be positive".into(),
        ));
    }
    let cos = g.cosine_similarity(z, p.prototypes)?;
    let logits = g.scale(cos, 1.0 / tau);
    let probs = g.softmax(logits, 1.0)?;
    Ok(HeadOutput { logits, probs })
}

/// Auxiliary head on `grad_reverse(z, mu)`: dense → GeLU → dropout → dense.
pub fn aux_logits(
    g: &mut Graph,
    p: &ModelVars,
    z: Var,
    mu: f64,
    dropout_rate: f64,
    seed: u64,
    training: bool,
) -> Result<HeadOutput> {
    let r = g.grad_reverse(z, mu)?;
    aux_head(g, p, r, dropout_rate, seed, training)
}

/// The auxiliary head without gradient reversal (for comparisons).
pub fn aux_head(
    g: &mut Graph,
    p: &ModelVars,
    z: Var,
    dropout_rate: f64,
    seed: u64,
    training: bool,
) -> Result<HeadOutput> {
    let h = g.matmul(z, p.aux_w1)?;
    let h = g.add_row(h, p.aux_b1)?;
    let h = g.gelu(h);
    let h = g.dropout(h, dropout_rate, seed, training)?;
    let o = g.matmul(h, p.aux_w2)?;
    let logits = g.add_row(o, p.aux_b2)?;
    let probs = g.softmax(logits, 1.0)?;
    Ok(HeadOutput { logits, probs })
}

/// Hard one-hot argmax targets; plain values, so nothing flows back to the main head.
pub fn pseudo_labels(probs: &Tensor) -> Tensor {
    let (n, k) = (probs.rows(), probs.cols());
    let mut data = vec![0.0; n * k];
    for i in 0..n {
        data[i * k + argmax(probs.row(i))] = 1.0;
    }
    Tensor::new(probs.shape().to_vec(), data).expect("same shape")
}
