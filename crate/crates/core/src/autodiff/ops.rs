use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::gemm::gemm;
use super::{Graph, Op, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

pub(crate) const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// How the two operands of a binary op line up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Bcast {
    Same,
    ScalarLhs,
    ScalarRhs,
}

pub(crate) fn bcast_kind(a: &[usize], b: &[usize], na: usize, nb: usize) -> Option<Bcast> {
    if a == b {
        Some(Bcast::Same)
    } else if nb == 1 {
        Some(Bcast::ScalarRhs)
    } else if na == 1 {
        Some(Bcast::ScalarLhs)
    } else {
        None
    }
}

/// `(outer, len, inner)` for a reduction or concat along `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` (shape `shape`) into the layout given by `axes`.
pub(crate) fn permute_data(src: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let rank = shape.len();
    let mut out = Vec::with_capacity(src.len());
    if src.is_empty() {
        return (out_shape, out);
    }
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    loop {
        out.push(src[offset]);
        let mut d = rank;
        loop {
            if d == 0 {
                return (out_shape, out);
            }
            d -= 1;
            idx[d] += 1;
            offset += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= step[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn gelu_value(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

pub(crate) fn gelu_derivative(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2)) + x * libm::exp(-0.5 * x * x) / SQRT_2PI
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(), TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidShape {
            op,
            shape: shape.to_vec(),
            reason: format!("axis {axis} out of range"),
        });
    }
    Ok(())
}

impl Graph {
    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> Result<f64, TensorError>,
        make: impl FnOnce(Var, Var) -> Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let kind =
            bcast_kind(ta.shape(), tb.shape(), ta.numel(), tb.numel()).ok_or_else(|| TensorError::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            })?;
        let (shape, data) = match kind {
            Bcast::Same => (
                ta.shape().to_vec(),
                ta.data()
                    .iter()
                    .zip(tb.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Bcast::ScalarRhs => {
                let y = tb.data()[0];
                (
                    ta.shape().to_vec(),
                    ta.data().iter().map(|&x| f(x, y)).collect::<Result<Vec<_>, _>>()?,
                )
            }
            Bcast::ScalarLhs => {
                let x = ta.data()[0];
                (
                    tb.shape().to_vec(),
                    tb.data().iter().map(|&y| f(x, y)).collect::<Result<Vec<_>, _>>()?,
                )
            }
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push_node(Tensor::new(shape, data)?, make(a, b), rg))
    }

    fn unary(&mut self, x: Var, data: Vec<f64>, op: Op) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::new(shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| Ok(x + y), Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| Ok(x - y), Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| Ok(x * y), Op::Mul)
    }

    /// Elementwise quotient; a zero denominator is a domain error.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(
            "div",
            a,
            b,
            |x, y| {
                if y == 0.0 {
                    Err(TensorError::Domain { op: "div", value: y })
                } else {
                    Ok(x / y)
                }
            },
            Op::Div,
        )
    }

    /// `base ^ exponent`, exponent either same-shape or scalar.
    ///
    /// Negative bases need an integral exponent and zero bases a
    /// non-negative one; anything else is a domain error.
    pub fn pow(&mut self, base: Var, exponent: Var) -> Result<Var, TensorError> {
        self.binary(
            "pow",
            base,
            exponent,
            |b, e| {
                if (b < 0.0 && libm::trunc(e) != e) || (b == 0.0 && e < 0.0) {
                    return Err(TensorError::Domain { op: "pow", value: b });
                }
                Ok(libm::pow(b, e))
            },
            |base, exponent| Op::Pow { base, exponent },
        )
    }

    /// Row-broadcast bias add: `x[..., n] + bias[n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = *tx.shape().last().unwrap_or(&0);
        if tb.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let b = tb.data();
        let data: Vec<f64> = tx
            .data()
            .chunks_exact(n.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push_node(Tensor::new(shape, data)?, Op::AddBias { x, bias }, rg))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, TensorError> {
        let data = self.value(x).data().iter().map(|v| v * factor).collect();
        self.unary(x, data, Op::Scale(x, factor))
    }

    /// `|x|`; the backward pass uses subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.value(x).data().iter().map(|v| v.abs()).collect();
        self.unary(x, data, Op::Abs(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.value(x).data().iter().map(|&v| libm::exp(v)).collect();
        self.unary(x, data, Op::Exp(x))
    }

    /// Natural log; non-positive inputs are a domain error.
    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    Ok(libm::log(v))
                } else {
                    Err(TensorError::Domain { op: "log", value: v })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.unary(x, data, Op::Log(x))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.value(x).data().iter().map(|&v| gelu_value(v)).collect();
        self.unary(x, data, Op::Gelu(x))
    }

    fn reduce(&mut self, x: Var, axis: usize, mean: bool) -> Result<Var, TensorError> {
        let op_name = if mean { "mean" } else { "sum" };
        let t = self.value(x);
        check_axis(op_name, t.shape(), axis)?;
        let (outer, n, inner) = axis_split(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let row = &src[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        if mean && n > 0 {
            out.iter_mut().for_each(|v| *v /= n as f64);
        }
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        let rg = self.any_grad(&[x]);
        let op = if mean {
            Op::Mean { x, axis }
        } else {
            Op::Sum { x, axis }
        };
        Ok(self.push_node(Tensor::new(shape, out)?, op, rg))
    }

    /// Sum over `axis`, removing it.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce(x, axis, false)
    }

    /// Mean over `axis`, removing it.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce(x, axis, true)
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::scalar(s), Op::SumAll(x), rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or_else(|| TensorError::InvalidShape {
            op: "concat",
            shape: Vec::new(),
            reason: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.any_grad(inputs);
        Ok(self.push_node(
            Tensor::new(shape, data)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        check_axis("slice", t.shape(), axis)?;
        if start > end || end > t.shape()[axis] {
            return Err(TensorError::InvalidShape {
                op: "slice",
                shape: t.shape().to_vec(),
                reason: format!("range {start}..{end} out of bounds on axis {axis}"),
            });
        }
        let (outer, n, inner) = axis_split(t.shape(), axis);
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * n * inner;
            data.extend_from_slice(&t.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = width;
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::new(shape, data)?, Op::Slice { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = t.data().to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::new(shape.to_vec(), data)?, Op::Reshape(x), rg))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        let rank = t.shape().len();
        let mut seen = vec![false; rank];
        let valid = axes.len() == rank
            && axes
                .iter()
                .all(|&a| a < rank && !core::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(TensorError::InvalidShape {
                op: "permute",
                shape: t.shape().to_vec(),
                reason: format!("{axes:?} is not a permutation of the axes"),
            });
        }
        let (shape, data) = permute_data(t.data(), t.shape(), axes);
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::new(shape, data)?, Op::Permute { x, axes: axes.to_vec() }, rg))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, x: Var, a: usize, b: usize) -> Result<Var, TensorError> {
        let rank = self.shape(x).len();
        let mut axes: Vec<usize> = (0..rank).collect();
        if a >= rank || b >= rank {
            return Err(TensorError::InvalidShape {
                op: "transpose",
                shape: self.shape(x).to_vec(),
                reason: format!("axes {a},{b} out of range"),
            });
        }
        axes.swap(a, b);
        self.permute(x, &axes)
    }

    /// Stacks `count` copies of `x` along a new leading axis.
    pub fn tile(&mut self, x: Var, count: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        let mut shape = Vec::with_capacity(t.shape().len() + 1);
        shape.push(count);
        shape.extend_from_slice(t.shape());
        let mut data = Vec::with_capacity(count * t.numel());
        for _ in 0..count {
            data.extend_from_slice(t.data());
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::new(shape, data)?, Op::Tile(x), rg))
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push_node(Tensor::new(vec![m, n], out)?, Op::Matmul(a, b), rg))
    }

    /// Batched product over matching leading axes: `[..., m, k] · [..., k, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        let r = sa.len();
        if r < 3 || sb.len() != r || sa[..r - 2] != sb[..r - 2] || sa[r - 1] != sb[r - 2] {
            return Err(TensorError::ShapeMismatch {
                op: "batch_matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let batch: usize = sa[..r - 2].iter().product();
        let (m, k, n) = (sa[r - 2], sa[r - 1], sb[r - 1]);
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &ta.data()[i * m * k..(i + 1) * m * k],
                false,
                &tb.data()[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                0.0,
            );
        }
        let mut shape = sa[..r - 2].to_vec();
        shape.extend_from_slice(&[m, n]);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push_node(Tensor::new(shape, out)?, Op::BatchMatmul(a, b), rg))
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        check_axis("softmax", t.shape(), axis)?;
        let (outer, n, inner) = axis_split(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..n {
                    let e = libm::exp(src[at(j)] - max);
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[at(j)] /= total;
                }
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push_node(Tensor::new(shape, out)?, Op::Softmax { x, axis }, rg))
    }

    /// Normalizes each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        let t = self.value(x);
        let n = *t.shape().last().unwrap_or(&0);
        for p in [gain, bias] {
            if self.shape(p) != [n] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: t.shape().to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = t.numel() / n.max(1);
        let mut xhat = vec![0.0; t.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; t.numel()];
        for (r, row) in t.data().chunks_exact(n).enumerate() {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            inv_std[r] = inv;
            for j in 0..n {
                let h = (row[j] - mu) * inv;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push_node(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1/(1-rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var, TensorError> {
        if rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(TensorError::Domain {
                op: "dropout",
                value: rate,
            });
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.unary(x, data, Op::Dropout { x, mask })
    }

    /// Generalized-mean pooling of the last axis of `coeffs[..., K, N]`
    /// with one exponent per packet index `p[K]`:
    /// `((1/N) Σ (|x|+eps)^p)^(1/p)`, the exponent clamped to `[p_min, p_max]`.
    pub fn gem(&mut self, coeffs: Var, p: Var, eps: f64, p_min: f64, p_max: f64) -> Result<Var, TensorError> {
        let (tc, tp) = (self.value(coeffs), self.value(p));
        let s = tc.shape();
        if s.len() < 2 || tp.shape() != [s[s.len() - 2]] || s[s.len() - 1] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "gem",
                lhs: s.to_vec(),
                rhs: tp.shape().to_vec(),
            });
        }
        let (k, n) = (s[s.len() - 2], s[s.len() - 1]);
        let exps: Vec<f64> = tp.data().iter().map(|v| v.clamp(p_min, p_max)).collect();
        let mut out = Vec::with_capacity(tc.numel() / n);
        let mut mean_pow = Vec::with_capacity(tc.numel() / n);
        for (b, block) in tc.data().chunks_exact(n).enumerate() {
            let pk = exps[b % k];
            let m = block.iter().map(|x| libm::pow(x.abs() + eps, pk)).sum::<f64>() / n as f64;
            mean_pow.push(m);
            out.push(if m > 0.0 { libm::pow(m, 1.0 / pk) } else { 0.0 });
        }
        let shape = s[..s.len() - 1].to_vec();
        let rg = self.any_grad(&[coeffs, p]);
        Ok(self.push_node(
            Tensor::new(shape, out)?,
            Op::Gem {
                coeffs,
                p,
                eps,
                p_min,
                p_max,
                mean_pow,
            },
            rg,
        ))
    }

    /// Mean softmax cross-entropy of `logits[B×C]` against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(logits);
        let s = t.shape();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(TensorError::InvalidShape {
                op: "cross_entropy",
                shape: s.to_vec(),
                reason: format!("expected [{}, classes]", labels.len()),
            });
        }
        let c = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::LabelOutOfRange { label: bad, classes: c });
        }
        let mut probs = vec![0.0; t.numel()];
        let mut total = 0.0;
        for (b, row) in t.data().chunks_exact(c).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
            let lse = max + libm::log(sum_exp);
            total += lse - row[labels[b]];
            for j in 0..c {
                probs[b * c + j] = libm::exp(row[j] - lse);
            }
        }
        let loss = total / labels.len() as f64;
        let rg = self.any_grad(&[logits]);
        Ok(self.push_node(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `x[..., in] · w[in, out] + bias[out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let fan_in = *shape.last().unwrap_or(&0);
        let rows = shape.iter().product::<usize>() / fan_in.max(1);
        let flat = self.reshape(x, &[rows, fan_in])?;
        let y = self.matmul(flat, weight)?;
        let y = self.add_bias(y, bias)?;
        let mut out_shape = shape;
        *out_shape.last_mut().expect("linear on rank-0 tensor") = self.shape(weight)[1];
        self.reshape(y, &out_shape)
    }
}
