//! Orthonormal Daubechies filter banks and full wavelet packet trees.
//!
//! Conventions:
//! - analysis is circular correlation followed by keeping even shifts:
//!   `approx[n] = Σ_k h[k]·x[(2n+k) mod N]`, same for `detail` with `g`;
//! - `g[k] = (-1)^k · h[L-1-k]`;
//! - boundaries are periodized, so every level is critically sampled and the
//!   8-tap db4 filter still applies to 4-sample signals (taps wrap around);
//! - packets are stored in natural (Paley) order: the binary digits of a
//!   packet index, most significant first, give the branch taken at each
//!   level (0 = lowpass, 1 = highpass).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Db2,
    Db4,
}

impl WaveletKind {
    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Db2 => "db2",
            WaveletKind::Db4 => "db4",
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db2" => Ok(WaveletKind::Db2),
            "db4" => Ok(WaveletKind::Db4),
            other => Err(Error::Config(format!(
                "unknown wavelet `{other}` (expected db2 or db4)"
            ))),
        }
    }
}

// Minimum-phase Daubechies lowpass with 4 vanishing moments.
const DB4_LOWPASS: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// Analysis lowpass/highpass pair of an orthonormal wavelet.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilterPair {
    kind: WaveletKind,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

/// Filter pair by name (`db2` or `db4`).
pub fn make_filters(name: &str) -> Result<WaveletFilterPair> {
    Ok(WaveletFilterPair::new(name.parse()?))
}

impl WaveletFilterPair {
    pub fn new(kind: WaveletKind) -> Self {
        let lowpass: Vec<f64> = match kind {
            WaveletKind::Db2 => {
                let s3 = libm::sqrt(3.0);
                let d = 4.0 * core::f64::consts::SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
            WaveletKind::Db4 => DB4_LOWPASS.to_vec(),
        };
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - k]
            })
            .collect();
        Self {
            kind,
            lowpass,
            highpass,
        }
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    /// One analysis level: `(approx, detail)`, each half the input length.
    pub fn analysis_step(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_even(x.len())?;
        let mut out = vec![0.0; x.len()];
        self.analyze_into(x, &mut out);
        let detail = out.split_off(x.len() / 2);
        Ok((out, detail))
    }

    /// Transpose of [`analysis_step`](Self::analysis_step); inverts it because
    /// the periodized filter bank is orthonormal.
    pub fn synthesis_step(&self, approx: &[f64], detail: &[f64]) -> Result<Vec<f64>> {
        if approx.len() != detail.len() || approx.is_empty() {
            return Err(Error::Dimension(format!(
                "synthesis needs equal non-empty halves, got {} and {}",
                approx.len(),
                detail.len()
            )));
        }
        let n = approx.len() * 2;
        let mut x = vec![0.0; n];
        for (i, (&a, &d)) in approx.iter().zip(detail).enumerate() {
            for (k, (&h, &g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                x[(2 * i + k) % n] += h * a + g * d;
            }
        }
        Ok(x)
    }

    /// Writes `[approx | detail]` of `x` into `out` (same length, even).
    fn analyze_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let half = n / 2;
        for i in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for (k, (&h, &g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                let v = x[(2 * i + k) % n];
                a += h * v;
                d += g * v;
            }
            out[i] = a;
            out[half + i] = d;
        }
    }
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "analysis needs an even length of at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Leaves of a depth-`D` wavelet packet decomposition, `2^D` equal blocks
/// stored back to back in natural order.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTree {
    depth: usize,
    coeffs: Vec<f64>,
}

impl PacketTree {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_packets(&self) -> usize {
        1 << self.depth
    }

    pub fn packet_len(&self) -> usize {
        self.coeffs.len() >> self.depth
    }

    pub fn packet(&self, index: usize) -> &[f64] {
        let len = self.packet_len();
        &self.coeffs[index * len..(index + 1) * len]
    }

    pub fn packets(&self) -> impl Iterator<Item = &[f64]> {
        self.coeffs.chunks_exact(self.packet_len())
    }

    /// All coefficients, packet-major.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Inverts the decomposition level by level.
    pub fn reconstruct(&self, filters: &WaveletFilterPair) -> Result<Vec<f64>> {
        let mut buf = self.coeffs.clone();
        for level in (0..self.depth).rev() {
            let block = buf.len() >> level;
            for chunk in buf.chunks_exact_mut(block) {
                let (a, d) = chunk.split_at(block / 2);
                let x = filters.synthesis_step(a, d)?;
                chunk.copy_from_slice(&x);
            }
        }
        Ok(buf)
    }
}

fn check_depth(len: usize, depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::Config("packet depth must be at least 1".into()));
    }
    if depth >= usize::BITS as usize || len == 0 || !len.is_multiple_of(1 << depth) {
        return Err(Error::Config(format!(
            "signal length {len} is not divisible by 2^{depth}"
        )));
    }
    Ok(())
}

/// Splits into `scratch`'s layout in place: every level runs the analysis
/// step on each current block, so both approx and detail branches are split.
fn decompose_into(x: &[f64], filters: &WaveletFilterPair, depth: usize, out: &mut [f64], scratch: &mut [f64]) {
    out.copy_from_slice(x);
    for level in 0..depth {
        let block = out.len() >> level;
        scratch.copy_from_slice(out);
        for (src, dst) in scratch.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            filters.analyze_into(src, dst);
        }
    }
}

/// Full wavelet packet decomposition of one signal.
pub fn wpd(x: &[f64], filters: &WaveletFilterPair, depth: usize) -> Result<PacketTree> {
    check_depth(x.len(), depth)?;
    let mut coeffs = vec![0.0; x.len()];
    let mut scratch = vec![0.0; x.len()];
    decompose_into(x, filters, depth, &mut coeffs, &mut scratch);
    Ok(PacketTree { depth, coeffs })
}

/// [`wpd`] over the last axis of `patches[..., L]`, returning
/// `[..., 2^D, L/2^D]`.
pub fn wpd_batch(patches: &Tensor, filters: &WaveletFilterPair, depth: usize) -> Result<Tensor> {
    let shape = patches.shape();
    let len = *shape
        .last()
        .ok_or_else(|| Error::Dimension("wpd_batch needs at least one axis".into()))?;
    check_depth(len, depth)?;
    let mut out = vec![0.0; patches.numel()];
    let mut scratch = vec![0.0; len];
    for (src, dst) in patches.data().chunks_exact(len).zip(out.chunks_exact_mut(len)) {
        decompose_into(src, filters, depth, dst, &mut scratch);
    }
    let mut out_shape = shape[..shape.len() - 1].to_vec();
    out_shape.extend_from_slice(&[1 << depth, len >> depth]);
    Ok(Tensor::new(out_shape, out)?)
}
