//! Pre-norm Transformer encoder over patch tokens with a CLS readout.
//!
//! Layout: linear projection of each token to `d_model`, a learnable CLS
//! vector prepended, fixed sinusoidal positions added, `n_layers` pre-norm
//! blocks (multi-head self-attention and a GELU feed-forward, each wrapped in
//! a residual), a final layer norm and a linear head on the CLS position.
//! Attention is bidirectional.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;
use crate::tokenizer::{Tokenizer, TokenizerConfig};

/// RNG used for initialization, shuffling and dropout.
pub type ModelRng = ChaCha8Rng;

/// RNG streams derived from a run seed.
pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const SHUFFLE_STREAM: u64 = 1;
pub(crate) const DROPOUT_STREAM: u64 = 2;

/// Independent ChaCha stream `stream` of the run seed `seed`.
pub fn seeded(seed: u64, stream: u64) -> ModelRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const LN_EPS: f64 = 1e-5;

/// Shrinks the head's initial weights so fresh logits are near uniform.
pub const HEAD_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 3,
            ffn_dim: 256,
            dropout: 0.1,
            n_classes: 6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.ffn_dim == 0 || self.n_classes < 2 {
            return Err(Error::Config(
                "ffn_dim must be positive and n_classes at least 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Trainable scalar count implied by the architecture, without building it.
pub fn expected_parameter_count(model: &ModelConfig, tok: &TokenizerConfig) -> usize {
    let d = model.d_model;
    let f = model.ffn_dim;
    let per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * (d + d);
    model.n_layers * per_layer
        + (tok.token_dim() * d + d)
        + d
        + 2 * d
        + (d * model.n_classes + model.n_classes)
        + tok.pooling_param_count()
}

/// Sinusoidal encoding for `positions × d_model`.
pub fn sinusoidal_positions(positions: usize, d_model: usize) -> Tensor {
    let mut data = Vec::with_capacity(positions * d_model);
    for pos in 0..positions {
        for i in 0..d_model {
            let rate = libm::pow(10_000.0, (2 * (i / 2)) as f64 / d_model as f64);
            let angle = pos as f64 / rate;
            data.push(if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
        }
    }
    Tensor::new(alloc::vec![positions, d_model], data).expect("sized above")
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, rng: &mut ModelRng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self::scaled(store, rng, name, fan_in, fan_out, 1.0)
    }

    fn scaled(
        store: &mut ParamStore,
        rng: &mut ModelRng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        scale: f64,
    ) -> Self {
        let bound = scale / libm::sqrt(fan_in as f64);
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        let weight = store.add(
            format!("{name}.weight"),
            ParamKind::Weight,
            Tensor::new(alloc::vec![fan_in, fan_out], w).expect("sized above"),
        );
        let bias = store.add(format!("{name}.bias"), ParamKind::Bias, Tensor::zeros(&[fan_out]));
        Self { weight, bias }
    }

    fn apply(&self, g: &mut Graph, b: &Bound, x: Var) -> Result<Var> {
        Ok(g.linear(x, b.var(self.weight), b.var(self.bias))?)
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), ParamKind::Norm, Tensor::full(&[dim], 1.0)),
            bias: store.add(format!("{name}.bias"), ParamKind::Norm, Tensor::zeros(&[dim])),
        }
    }

    fn apply(&self, g: &mut Graph, b: &Bound, x: Var) -> Result<Var> {
        Ok(g.layer_norm(x, b.var(self.gain), b.var(self.bias), LN_EPS)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    attn_norm: Norm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ffn_norm: Norm,
    up: Linear,
    down: Linear,
}

/// Dropout source for a forward pass; `None` means inference.
pub type Dropout<'a> = Option<&'a mut ModelRng>;

impl EncoderLayer {
    fn new(store: &mut ParamStore, rng: &mut ModelRng, i: usize, cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let name = |s: &str| format!("layers.{i}.{s}");
        Self {
            attn_norm: Norm::new(store, &name("attn_norm"), d),
            q: Linear::new(store, rng, &name("attn.q"), d, d),
            k: Linear::new(store, rng, &name("attn.k"), d, d),
            v: Linear::new(store, rng, &name("attn.v"), d, d),
            o: Linear::new(store, rng, &name("attn.o"), d, d),
            ffn_norm: Norm::new(store, &name("ffn_norm"), d),
            up: Linear::new(store, rng, &name("ffn.up"), d, cfg.ffn_dim),
            down: Linear::new(store, rng, &name("ffn.down"), cfg.ffn_dim, d),
        }
    }

    fn attention(&self, g: &mut Graph, b: &Bound, x: Var, cfg: &ModelConfig, dropout: &mut Dropout<'_>) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let (batch, seq) = (shape[0], shape[1]);
        let (h, dh) = (cfg.n_heads, cfg.head_dim());
        let split = |g: &mut Graph, t: Var, axes: &[usize]| -> Result<Var> {
            let t = g.reshape(t, &[batch, seq, h, dh])?;
            Ok(g.permute(t, axes)?)
        };
        let q = self.q.apply(g, b, x)?;
        let q = split(g, q, &[0, 2, 1, 3])?;
        let k = self.k.apply(g, b, x)?;
        let k = split(g, k, &[0, 2, 3, 1])?;
        let v = self.v.apply(g, b, x)?;
        let v = split(g, v, &[0, 2, 1, 3])?;
        let scores = g.batch_matmul(q, k)?;
        let scores = g.scale(scores, 1.0 / libm::sqrt(dh as f64))?;
        let mut attn = g.softmax(scores, 3)?;
        if let Some(rng) = dropout.as_deref_mut() {
            attn = g.dropout(attn, cfg.dropout, rng)?;
        }
        let ctx = g.batch_matmul(attn, v)?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[batch, seq, cfg.d_model])?;
        self.o.apply(g, b, ctx)
    }

    fn forward(&self, g: &mut Graph, b: &Bound, x: Var, cfg: &ModelConfig, dropout: &mut Dropout<'_>) -> Result<Var> {
        let h = self.attn_norm.apply(g, b, x)?;
        let a = self.attention(g, b, h, cfg, dropout)?;
        let x = g.add(x, a)?;
        let h = self.ffn_norm.apply(g, b, x)?;
        let h = self.up.apply(g, b, h)?;
        let mut h = g.gelu(h)?;
        if let Some(rng) = dropout.as_deref_mut() {
            h = g.dropout(h, cfg.dropout, rng)?;
        }
        let f = self.down.apply(g, b, h)?;
        Ok(g.add(x, f)?)
    }
}

/// Encoder classifier over `[B, P, token_dim]` tokens.
#[derive(Debug, Clone)]
pub struct Classifier {
    cfg: ModelConfig,
    token_dim: usize,
    num_patches: usize,
    input: Linear,
    cls: ParamId,
    positions: Tensor,
    layers: Vec<EncoderLayer>,
    final_norm: Norm,
    head: Linear,
}

impl Classifier {
    pub fn new(
        cfg: ModelConfig,
        token_dim: usize,
        num_patches: usize,
        store: &mut ParamStore,
        rng: &mut ModelRng,
    ) -> Result<Self> {
        cfg.validate()?;
        if token_dim == 0 || num_patches == 0 {
            return Err(Error::Config("token_dim and num_patches must be positive".into()));
        }
        let d = cfg.d_model;
        let input = Linear::new(store, rng, "input", token_dim, d);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let cls_init: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        let cls = store.add("cls", ParamKind::Embedding, Tensor::from_vec(cls_init));
        let layers = (0..cfg.n_layers)
            .map(|i| EncoderLayer::new(store, rng, i, &cfg))
            .collect();
        let final_norm = Norm::new(store, "final_norm", d);
        let head = Linear::scaled(store, rng, "head", d, cfg.n_classes, HEAD_INIT_SCALE);
        Ok(Self {
            positions: sinusoidal_positions(num_patches + 1, d),
            cfg,
            token_dim,
            num_patches,
            input,
            cls,
            layers,
            final_norm,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Logits `[B, n_classes]` for tokens `[B, P, token_dim]`.
    pub fn forward(&self, g: &mut Graph, b: &Bound, tokens: Var, mut dropout: Dropout<'_>) -> Result<Var> {
        let s = g.shape(tokens).to_vec();
        if s.len() != 3 || s[1] != self.num_patches || s[2] != self.token_dim {
            return Err(Error::Dimension(format!(
                "expected tokens [B, {}, {}], got {s:?}",
                self.num_patches, self.token_dim
            )));
        }
        let (batch, d) = (s[0], self.cfg.d_model);
        let seq = self.num_patches + 1;
        let x = self.input.apply(g, b, tokens)?;
        let cls = g.tile(b.var(self.cls), batch)?;
        let cls = g.reshape(cls, &[batch, 1, d])?;
        let x = g.concat(&[cls, x], 1)?;
        let mut pe = Vec::with_capacity(batch * seq * d);
        for _ in 0..batch {
            pe.extend_from_slice(self.positions.data());
        }
        let pe = g.constant(Tensor::new(alloc::vec![batch, seq, d], pe)?);
        let mut x = g.add(x, pe)?;
        for layer in &self.layers {
            x = layer.forward(g, b, x, &self.cfg, &mut dropout)?;
        }
        let x = self.final_norm.apply(g, b, x)?;
        let x = g.slice(x, 1, 0, 1)?;
        let x = g.reshape(x, &[batch, d])?;
        self.head.apply(g, b, x)
    }
}

/// Tokenizer, encoder and every trainable parameter.
#[derive(Debug, Clone)]
pub struct HiWaveModel {
    tokenizer: Tokenizer,
    classifier: Classifier,
    store: ParamStore,
}

impl HiWaveModel {
    /// Builds and initializes a model deterministically from `seed`.
    ///
    /// Linear weights are uniform in `±1/√fan_in` (the head in
    /// `±HEAD_INIT_SCALE/√fan_in`), biases zero, the CLS token
    /// normal with std 0.02, norm gains one and GeM exponents `gem_init`.
    pub fn build(model_cfg: ModelConfig, tok_cfg: TokenizerConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = seeded(seed, INIT_STREAM);
        let tokenizer = Tokenizer::new(tok_cfg, &mut store)?;
        let cfg = tokenizer.config();
        let classifier = Classifier::new(model_cfg, cfg.token_dim(), cfg.num_patches(), &mut store, &mut rng)?;
        Ok(Self {
            tokenizer,
            classifier,
            store,
        })
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn tokenizer_config(&self) -> &TokenizerConfig {
        self.tokenizer.config()
    }

    pub fn model_config(&self) -> &ModelConfig {
        self.classifier.config()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn count_parameters(&self) -> usize {
        self.store.count()
    }

    /// Replaces parameter values by name; every parameter must be supplied
    /// with its built shape.
    pub fn load_values<'a>(&mut self, values: impl IntoIterator<Item = (&'a str, Tensor)>) -> Result<()> {
        let mut seen = 0;
        for (name, value) in values {
            let p = self
                .store
                .find_mut(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
            if p.value.shape() != value.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value;
            seen += 1;
        }
        if seen != self.store.len() {
            return Err(Error::Config(format!(
                "{seen} parameters supplied, model has {}",
                self.store.len()
            )));
        }
        Ok(())
    }

    /// Learned GeM exponents after clamping, level by level.
    pub fn learned_exponents(&self) -> Vec<f64> {
        let Some(pool) = self.tokenizer.gem_pool() else {
            return Vec::new();
        };
        pool.ids()
            .flat_map(|id| self.store.get(id).value.data().iter())
            .map(|p| p.clamp(crate::tokenizer::GEM_P_MIN, crate::tokenizer::GEM_P_MAX))
            .collect()
    }

    /// Records the forward pass for windows `[B, C, T]`, returning logits
    /// `[B, n_classes]` and the bound parameter leaves.
    pub fn forward(&self, g: &mut Graph, windows: &Tensor, dropout: Dropout<'_>) -> Result<(Var, Bound)> {
        let bound = self.store.bind(g);
        let tokens = self.tokenizer.tokens(g, &bound, windows)?;
        let logits = self.classifier.forward(g, &bound, tokens, dropout)?;
        Ok((logits, bound))
    }

    /// Inference logits.
    pub fn logits(&self, windows: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (logits, _) = self.forward(&mut g, windows, None)?;
        Ok(g.value(logits).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{Pooling, Variant};

    fn variants() -> Vec<TokenizerConfig> {
        let base = TokenizerConfig::champion();
        alloc::vec![
            TokenizerConfig::baseline(),
            base.clone(),
            TokenizerConfig {
                variant: Variant::Replacement,
                ..base.clone()
            },
            TokenizerConfig {
                depth_set: alloc::vec![2],
                ..base.clone()
            },
            TokenizerConfig {
                depth_set: alloc::vec![1, 2, 3],
                ..base.clone()
            },
            TokenizerConfig {
                wavelet: crate::WaveletKind::Db4,
                ..base.clone()
            },
            TokenizerConfig {
                pooling: Pooling::Avg,
                ..base
            },
        ]
    }

    #[test]
    fn parameter_counts_match_closed_form_for_all_variants() {
        for tok in variants() {
            let m = HiWaveModel::build(ModelConfig::default(), tok.clone(), 0).unwrap();
            assert_eq!(
                m.count_parameters(),
                expected_parameter_count(&ModelConfig::default(), &tok)
            );
        }
    }

    #[test]
    fn reference_parameter_counts() {
        let cfg = ModelConfig::default();
        let base = HiWaveModel::build(cfg.clone(), TokenizerConfig::baseline(), 0).unwrap();
        let champ = HiWaveModel::build(cfg, TokenizerConfig::champion(), 0).unwrap();
        assert_eq!(base.count_parameters(), 159_814);
        assert_eq!(champ.count_parameters(), 164_430);
        assert_eq!(champ.count_parameters() - base.count_parameters(), 72 * 64 + 8);
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let a = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 5).unwrap();
        let b = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 5).unwrap();
        let c = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 6).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn initialization_follows_documented_scheme() {
        let m = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 1).unwrap();
        let p = m.params();
        let w = p.find("input.weight").unwrap();
        let bound = 1.0 / libm::sqrt(216.0);
        assert!(w.value.data().iter().all(|v| v.abs() < bound));
        assert!(p.find("input.bias").unwrap().value.data().iter().all(|v| *v == 0.0));
        assert!(p
            .find("final_norm.gain")
            .unwrap()
            .value
            .data()
            .iter()
            .all(|v| *v == 1.0));
        assert_eq!(m.learned_exponents(), alloc::vec![3.0; 8]);
        let cls = p.find("cls").unwrap().value.data();
        let std = libm::sqrt(cls.iter().map(|v| v * v).sum::<f64>() / cls.len() as f64);
        assert!(std > 0.01 && std < 0.03);
    }

    #[test]
    fn bad_model_configs_are_config_errors() {
        let cfg = ModelConfig {
            n_heads: 5,
            ..ModelConfig::default()
        };
        assert!(matches!(
            HiWaveModel::build(cfg, TokenizerConfig::champion(), 0),
            Err(Error::Config(_))
        ));
        let cfg = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(HiWaveModel::build(cfg, TokenizerConfig::champion(), 0).is_err());
    }

    #[test]
    fn logits_shape_and_constancy_on_zero_input() {
        let m = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 2).unwrap();
        let out = m.logits(&Tensor::zeros(&[3, 9, 128])).unwrap();
        assert_eq!(out.shape(), &[3, 6]);
        let d = out.data();
        for b in 1..3 {
            assert_eq!(&d[..6], &d[b * 6..b * 6 + 6]);
        }
    }

    #[test]
    fn per_sample_outputs_do_not_depend_on_batch() {
        let m = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 3).unwrap();
        let mut rng = seeded(9, 0);
        let data: Vec<f64> = (0..4 * 9 * 128).map(|_| rng.random_range(-2.0..2.0)).collect();
        let all = m
            .logits(&Tensor::new(alloc::vec![4, 9, 128], data.clone()).unwrap())
            .unwrap();
        let reversed: Vec<f64> = data.chunks(9 * 128).rev().flatten().copied().collect();
        let rev = m
            .logits(&Tensor::new(alloc::vec![4, 9, 128], reversed).unwrap())
            .unwrap();
        for i in 0..4 {
            let single = m
                .logits(&Tensor::new(alloc::vec![1, 9, 128], data[i * 1152..(i + 1) * 1152].to_vec()).unwrap())
                .unwrap();
            for j in 0..6 {
                assert!((single.data()[j] - all.data()[i * 6 + j]).abs() < 1e-12);
                assert!((rev.data()[(3 - i) * 6 + j] - all.data()[i * 6 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_token_width_is_dimension_error() {
        let m = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 0).unwrap();
        assert!(matches!(
            m.logits(&Tensor::zeros(&[1, 9, 64])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn load_values_checks_names_and_shapes() {
        let src = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 1).unwrap();
        let mut dst = HiWaveModel::build(ModelConfig::default(), TokenizerConfig::champion(), 2).unwrap();
        dst.load_values(src.params().iter().map(|p| (p.name.as_str(), p.value.clone())))
            .unwrap();
        assert_eq!(src.params(), dst.params());
        assert!(dst.load_values([("cls", Tensor::zeros(&[3]))]).is_err());
        assert!(dst.load_values([("nope", Tensor::zeros(&[3]))]).is_err());
    }

    #[test]
    fn positional_encoding_values() {
        let pe = sinusoidal_positions(16, 64);
        assert_eq!(pe.shape(), &[16, 64]);
        assert_eq!(pe.data()[0], 0.0);
        assert_eq!(pe.data()[1], 1.0);
        assert!((pe.data()[64] - libm::sin(1.0)).abs() < 1e-15);
        assert!((pe.data()[64 + 2] - libm::sin(1.0 / libm::pow(10_000.0, 2.0 / 64.0))).abs() < 1e-15);
    }
}
