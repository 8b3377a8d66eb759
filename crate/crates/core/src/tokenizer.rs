//! Turns a `C×T` window into the encoder's token sequence.
//!
//! Each overlapping patch yields a temporal token (the flattened `C×L_p`
//! samples, channel-major), a wavelet token (per channel, per packet, a pooled
//! magnitude of the packet's coefficients), or their concatenation with the
//! temporal part first.
//!
//! GeM exponents are shared across channels: level `d` owns `2^d` of them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;
use crate::wavelet::{wpd_batch, WaveletFilterPair, WaveletKind};

/// Added to `|x|` inside the power so `∂/∂p` stays finite on all-zero packets.
pub const GEM_EPS: f64 = 1e-6;
pub const GEM_P_MIN: f64 = 0.5;
pub const GEM_P_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Temporal token only.
    Baseline,
    /// Temporal token followed by the wavelet token.
    Hybrid,
    /// Wavelet token only.
    Replacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Generalized mean with a learnable exponent per packet.
    Gem,
    /// Mean of coefficient magnitudes.
    Avg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub variant: Variant,
    pub wavelet: WaveletKind,
    /// Decomposition depths whose packets are pooled, ascending.
    pub depth_set: Vec<usize>,
    pub pooling: Pooling,
    pub gem_init: f64,
    pub patch_len: usize,
    pub stride: usize,
    pub channels: usize,
    pub window_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self::champion()
    }
}

impl TokenizerConfig {
    /// Hybrid tokens, db2, depth 3, GeM initialised at 3.
    pub fn champion() -> Self {
        Self {
            variant: Variant::Hybrid,
            wavelet: WaveletKind::Db2,
            depth_set: vec![3],
            pooling: Pooling::Gem,
            gem_init: 3.0,
            patch_len: 16,
            stride: 8,
            channels: 9,
            window_len: 128,
        }
    }

    pub fn baseline() -> Self {
        Self {
            variant: Variant::Baseline,
            ..Self::champion()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_len == 0 || self.stride == 0 || self.channels == 0 {
            return Err(Error::Config("patch_len, stride and channels must be positive".into()));
        }
        if self.window_len < self.patch_len || !(self.window_len - self.patch_len).is_multiple_of(self.stride) {
            return Err(Error::Config(format!(
                "window of {} samples does not tile into patches of {} with stride {}",
                self.window_len, self.patch_len, self.stride
            )));
        }
        if self.variant == Variant::Baseline {
            return Ok(());
        }
        if self.depth_set.is_empty() {
            return Err(Error::Config("wavelet variants need a non-empty depth_set".into()));
        }
        if self.depth_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "depth_set {:?} must be strictly ascending",
                self.depth_set
            )));
        }
        for &d in &self.depth_set {
            if d == 0 || d >= usize::BITS as usize || !self.patch_len.is_multiple_of(1 << d) {
                return Err(Error::Config(format!(
                    "depth {d} does not divide a patch of {} samples",
                    self.patch_len
                )));
            }
        }
        if self.pooling == Pooling::Gem && !(GEM_P_MIN..=GEM_P_MAX).contains(&self.gem_init) {
            return Err(Error::Config(format!(
                "gem_init {} outside [{GEM_P_MIN}, {GEM_P_MAX}]",
                self.gem_init
            )));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        (self.window_len - self.patch_len) / self.stride + 1
    }

    pub fn temporal_dim(&self) -> usize {
        match self.variant {
            Variant::Replacement => 0,
            _ => self.channels * self.patch_len,
        }
    }

    /// Pooled features per channel: `Σ_d 2^d`.
    pub fn packets_per_channel(&self) -> usize {
        self.depth_set.iter().map(|d| 1usize << d).sum()
    }

    pub fn wavelet_dim(&self) -> usize {
        match self.variant {
            Variant::Baseline => 0,
            _ => self.channels * self.packets_per_channel(),
        }
    }

    pub fn token_dim(&self) -> usize {
        self.temporal_dim() + self.wavelet_dim()
    }

    /// Learnable scalars owned by the tokenizer.
    pub fn pooling_param_count(&self) -> usize {
        match (self.variant, self.pooling) {
            (Variant::Baseline, _) | (_, Pooling::Avg) => 0,
            _ => self.packets_per_channel(),
        }
    }
}

/// `((1/N) Σ (|x|+eps)^p)^(1/p)` with `p` clamped to `[GEM_P_MIN, GEM_P_MAX]`.
pub fn gem(x: &[f64], p: f64, eps: f64) -> f64 {
    let p = p.clamp(GEM_P_MIN, GEM_P_MAX);
    let m = x.iter().map(|v| libm::pow(v.abs() + eps, p)).sum::<f64>() / x.len() as f64;
    if m > 0.0 {
        libm::pow(m, 1.0 / p)
    } else {
        0.0
    }
}

/// Mean of `|x|`: the AvgPool ablation, equal to [`gem`] at `p = 1`, `eps = 0`.
pub fn avg_abs(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64
}

/// Patches of one window `[C, T]` as `[P, C, L_p]`; patch `i` covers
/// samples `[i·S, i·S + L_p)`.
pub fn extract_patches(window: &Tensor, cfg: &TokenizerConfig) -> Result<Tensor> {
    if window.shape() != [cfg.channels, cfg.window_len] {
        return Err(Error::Dimension(format!(
            "expected a window of shape [{}, {}], got {:?}",
            cfg.channels,
            cfg.window_len,
            window.shape()
        )));
    }
    extract_patches_batch(window.data(), 1, cfg).and_then(|t| {
        let shape = t.shape()[1..].to_vec();
        Ok(t.reshaped(&shape)?)
    })
}

/// Patches of `batch` windows stored back to back, as `[B, P, C, L_p]`.
pub fn extract_patches_batch(windows: &[f64], batch: usize, cfg: &TokenizerConfig) -> Result<Tensor> {
    let (c, t, l, s) = (cfg.channels, cfg.window_len, cfg.patch_len, cfg.stride);
    if windows.len() != batch * c * t {
        return Err(Error::Dimension(format!(
            "{} samples do not form {batch} windows of {c}×{t}",
            windows.len()
        )));
    }
    let p = cfg.num_patches();
    let mut out = Vec::with_capacity(batch * p * c * l);
    for w in windows.chunks_exact(c * t) {
        for i in 0..p {
            for ch in 0..c {
                let start = ch * t + i * s;
                out.extend_from_slice(&w[start..start + l]);
            }
        }
    }
    Ok(Tensor::new(vec![batch, p, c, l], out)?)
}

/// Learnable GeM exponents, one vector per pooled depth.
#[derive(Debug, Clone, PartialEq)]
pub struct GemPool {
    levels: Vec<(usize, ParamId)>,
}

impl GemPool {
    fn new(cfg: &TokenizerConfig, store: &mut ParamStore) -> Self {
        let levels = cfg
            .depth_set
            .iter()
            .map(|&d| {
                let id = store.add(
                    format!("tokenizer.gem.level{d}.p"),
                    ParamKind::GemExponent,
                    Tensor::full(&[1 << d], cfg.gem_init),
                );
                (d, id)
            })
            .collect();
        Self { levels }
    }

    pub fn exponent(&self, depth: usize) -> Option<ParamId> {
        self.levels.iter().find(|(d, _)| *d == depth).map(|(_, id)| *id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.levels.iter().map(|(_, id)| *id)
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    cfg: TokenizerConfig,
    filters: WaveletFilterPair,
    gem: Option<GemPool>,
}

impl Tokenizer {
    /// Validates `cfg` and registers the GeM exponents (if any) in `store`.
    pub fn new(cfg: TokenizerConfig, store: &mut ParamStore) -> Result<Self> {
        cfg.validate()?;
        let gem = (cfg.pooling_param_count() > 0).then(|| GemPool::new(&cfg, store));
        Ok(Self {
            filters: WaveletFilterPair::new(cfg.wavelet),
            cfg,
            gem,
        })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.cfg
    }

    pub fn gem_pool(&self) -> Option<&GemPool> {
        self.gem.as_ref()
    }

    /// Wavelet features of patches `[R, C, L_p]` as `[R, C·Σ2^d]`, channel-major.
    fn wavelet_features(&self, g: &mut Graph, bound: &Bound, patches: &Tensor) -> Result<Var> {
        let r = patches.shape()[0];
        let c = self.cfg.channels;
        let mut per_level = Vec::with_capacity(self.cfg.depth_set.len());
        for &d in &self.cfg.depth_set {
            let coeffs = wpd_batch(patches, &self.filters, d)?;
            let pooled = match &self.gem {
                Some(pool) => {
                    let p = bound.var(pool.exponent(d).expect("one exponent vector per depth"));
                    let cv = g.constant(coeffs);
                    g.gem(cv, p, GEM_EPS, GEM_P_MIN, GEM_P_MAX)?
                }
                None => {
                    let n = coeffs.shape()[3];
                    let pooled: Vec<f64> = coeffs.data().chunks_exact(n).map(avg_abs).collect();
                    g.constant(Tensor::new(vec![r, c, 1 << d], pooled)?)
                }
            };
            per_level.push(pooled);
        }
        let joined = if per_level.len() == 1 {
            per_level[0]
        } else {
            g.concat(&per_level, 2)?
        };
        Ok(g.reshape(joined, &[r, self.cfg.wavelet_dim()])?)
    }

    /// Tokens for patches `[R, C, L_p]`, returned as `[R, token_dim]`.
    pub fn patch_tokens(&self, g: &mut Graph, bound: &Bound, patches: &Tensor) -> Result<Var> {
        let (c, l) = (self.cfg.channels, self.cfg.patch_len);
        let s = patches.shape();
        if s.len() != 3 || s[1] != c || s[2] != l {
            return Err(Error::Dimension(format!("expected patches [R, {c}, {l}], got {s:?}")));
        }
        let r = s[0];
        let temporal = || Tensor::new(vec![r, c * l], patches.data().to_vec());
        match self.cfg.variant {
            Variant::Baseline => Ok(g.constant(temporal()?)),
            Variant::Replacement => self.wavelet_features(g, bound, patches),
            Variant::Hybrid => {
                let t = g.constant(temporal()?);
                let w = self.wavelet_features(g, bound, patches)?;
                Ok(g.concat(&[t, w], 1)?)
            }
        }
    }

    /// Wavelet token of a single patch `[C, L_p]`.
    pub fn wavelet_token(&self, g: &mut Graph, bound: &Bound, patch: &Tensor) -> Result<Var> {
        if self.cfg.variant == Variant::Baseline {
            return Err(Error::Config("the baseline variant has no wavelet token".into()));
        }
        let p = self.single(patch)?;
        let v = self.wavelet_features(g, bound, &p)?;
        Ok(g.reshape(v, &[self.cfg.wavelet_dim()])?)
    }

    /// Full token of a single patch `[C, L_p]`.
    pub fn hybrid_token(&self, g: &mut Graph, bound: &Bound, patch: &Tensor) -> Result<Var> {
        let p = self.single(patch)?;
        let v = self.patch_tokens(g, bound, &p)?;
        Ok(g.reshape(v, &[self.cfg.token_dim()])?)
    }

    fn single(&self, patch: &Tensor) -> Result<Tensor> {
        let mut shape = vec![1];
        shape.extend_from_slice(patch.shape());
        Ok(Tensor::new(shape, patch.data().to_vec())?)
    }

    /// Token sequence for windows `[B, C, T]` as `[B, P, token_dim]`.
    pub fn tokens(&self, g: &mut Graph, bound: &Bound, windows: &Tensor) -> Result<Var> {
        let s = windows.shape();
        if s.len() != 3 || s[1] != self.cfg.channels || s[2] != self.cfg.window_len {
            return Err(Error::Dimension(format!(
                "expected windows [B, {}, {}], got {s:?}",
                self.cfg.channels, self.cfg.window_len
            )));
        }
        let b = s[0];
        let p = self.cfg.num_patches();
        let patches = extract_patches_batch(windows.data(), b, &self.cfg)?;
        let flat = patches.reshaped(&[b * p, self.cfg.channels, self.cfg.patch_len])?;
        let tokens = self.patch_tokens(g, bound, &flat)?;
        Ok(g.reshape(tokens, &[b, p, self.cfg.token_dim()])?)
    }
}
