use alloc::vec;
use alloc::vec::Vec;

use super::gemm::gemm;
use super::ops::{axis_split, bcast_kind, gelu_derivative, permute_data, Bcast};
use super::{Graph, Op, Var};

type Grads = Vec<(Var, Vec<f64>)>;

impl Graph {
    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Pushes `(v, g)` only when `v` takes a gradient, so callers can skip work.
    fn emit(&self, out: &mut Grads, v: Var, g: impl FnOnce() -> Vec<f64>) {
        if self.wants(v) {
            out.push((v, g()));
        }
    }

    /// Reduces a same-shape gradient to the shape of a broadcast operand.
    fn fold_bcast(&self, kind: Bcast, lhs: bool, g: Vec<f64>) -> Vec<f64> {
        match (kind, lhs) {
            (Bcast::ScalarLhs, true) | (Bcast::ScalarRhs, false) => vec![g.iter().sum()],
            _ => g,
        }
    }

    fn bcast_of(&self, a: Var, b: Var) -> Bcast {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        bcast_kind(ta.shape(), tb.shape(), ta.numel(), tb.numel()).expect("checked in forward")
    }

    /// Elementwise partials `(∂out/∂a, ∂out/∂b)` evaluated at each output position.
    fn binary_grads(
        &self,
        a: Var,
        b: Var,
        grad: &[f64],
        da: impl Fn(f64, f64, f64) -> f64,
        db: impl Fn(f64, f64, f64) -> f64,
        out_vals: &[f64],
    ) -> Grads {
        let kind = self.bcast_of(a, b);
        let (xa, xb) = (self.data(a), self.data(b));
        let at = |i: usize| -> (f64, f64) {
            match kind {
                Bcast::Same => (xa[i], xb[i]),
                Bcast::ScalarRhs => (xa[i], xb[0]),
                Bcast::ScalarLhs => (xa[0], xb[i]),
            }
        };
        let mut out = Grads::new();
        self.emit(&mut out, a, || {
            let g = (0..grad.len())
                .map(|i| {
                    let (x, y) = at(i);
                    grad[i] * da(x, y, out_vals[i])
                })
                .collect();
            self.fold_bcast(kind, true, g)
        });
        self.emit(&mut out, b, || {
            let g = (0..grad.len())
                .map(|i| {
                    let (x, y) = at(i);
                    grad[i] * db(x, y, out_vals[i])
                })
                .collect();
            self.fold_bcast(kind, false, g)
        });
        out
    }

    pub(super) fn node_backward(&self, i: usize, grad: &[f64]) -> Grads {
        let node = &self.nodes[i];
        let out_vals = node.value.data();
        let mut out = Grads::new();
        match &node.op {
            Op::Leaf | Op::Released => {}
            Op::Add(a, b) => out = self.binary_grads(*a, *b, grad, |_, _, _| 1.0, |_, _, _| 1.0, out_vals),
            Op::Sub(a, b) => out = self.binary_grads(*a, *b, grad, |_, _, _| 1.0, |_, _, _| -1.0, out_vals),
            Op::Mul(a, b) => out = self.binary_grads(*a, *b, grad, |_, y, _| y, |x, _, _| x, out_vals),
            Op::Div(a, b) => out = self.binary_grads(*a, *b, grad, |_, y, _| 1.0 / y, |x, y, _| -x / (y * y), out_vals),
            Op::Pow { base, exponent } => {
                out = self.binary_grads(
                    *base,
                    *exponent,
                    grad,
                    |b, e, _| if e == 0.0 { 0.0 } else { e * libm::pow(b, e - 1.0) },
                    |b, _, y| if b > 0.0 { y * libm::log(b) } else { 0.0 },
                    out_vals,
                )
            }
            Op::AddBias { x, bias } => {
                self.emit(&mut out, *x, || grad.to_vec());
                self.emit(&mut out, *bias, || {
                    let n = self.nodes[bias.0].value.numel();
                    let mut g = vec![0.0; n];
                    for row in grad.chunks_exact(n) {
                        g.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    g
                });
            }
            Op::Scale(x, f) => self.emit(&mut out, *x, || grad.iter().map(|g| g * f).collect()),
            Op::Abs(x) => self.emit(&mut out, *x, || {
                grad.iter()
                    .zip(self.data(*x))
                    .map(|(g, v)| {
                        if *v > 0.0 {
                            *g
                        } else if *v < 0.0 {
                            -*g
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }),
            Op::Exp(x) => self.emit(&mut out, *x, || grad.iter().zip(out_vals).map(|(g, y)| g * y).collect()),
            Op::Log(x) => self.emit(&mut out, *x, || {
                grad.iter().zip(self.data(*x)).map(|(g, v)| g / v).collect()
            }),
            Op::Gelu(x) => self.emit(&mut out, *x, || {
                grad.iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| g * gelu_derivative(v))
                    .collect()
            }),
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let mean = matches!(node.op, Op::Mean { .. });
                self.emit(&mut out, *x, || {
                    let (outer, n, inner) = axis_split(self.nodes[x.0].value.shape(), *axis);
                    let f = if mean { 1.0 / n as f64 } else { 1.0 };
                    let mut g = vec![0.0; outer * n * inner];
                    for o in 0..outer {
                        for j in 0..n {
                            let dst = &mut g[(o * n + j) * inner..(o * n + j + 1) * inner];
                            let src = &grad[o * inner..(o + 1) * inner];
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d = s * f);
                        }
                    }
                    g
                });
            }
            Op::SumAll(x) => self.emit(&mut out, *x, || vec![grad[0]; self.nodes[x.0].value.numel()]),
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let width = self.nodes[v.0].value.shape()[*axis];
                    self.emit(&mut out, v, || {
                        let mut g = Vec::with_capacity(outer * width * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            g.extend_from_slice(&grad[base..base + width * inner]);
                        }
                        g
                    });
                    offset += width;
                }
            }
            Op::Slice { x, axis, start } => self.emit(&mut out, *x, || {
                let (outer, n, inner) = axis_split(self.nodes[x.0].value.shape(), *axis);
                let width = node.value.shape()[*axis];
                let mut g = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    g[dst..dst + width * inner].copy_from_slice(&grad[o * width * inner..(o + 1) * width * inner]);
                }
                g
            }),
            Op::Reshape(x) => self.emit(&mut out, *x, || grad.to_vec()),
            Op::Permute { x, axes } => self.emit(&mut out, *x, || {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                permute_data(grad, node.value.shape(), &inverse).1
            }),
            Op::Tile(x) => self.emit(&mut out, *x, || {
                let n = self.nodes[x.0].value.numel();
                let mut g = vec![0.0; n];
                for copy in grad.chunks_exact(n.max(1)) {
                    g.iter_mut().zip(copy).for_each(|(a, b)| *a += b);
                }
                g
            }),
            Op::Matmul(a, b) => {
                let sa = self.nodes[a.0].value.shape();
                let (m, k, n) = (sa[0], sa[1], node.value.shape()[1]);
                self.emit(&mut out, *a, || {
                    let mut g = vec![0.0; m * k];
                    gemm(m, n, k, grad, false, self.data(*b), true, &mut g, 0.0);
                    g
                });
                self.emit(&mut out, *b, || {
                    let mut g = vec![0.0; k * n];
                    gemm(k, m, n, self.data(*a), true, grad, false, &mut g, 0.0);
                    g
                });
            }
            Op::BatchMatmul(a, b) => {
                let sa = self.nodes[a.0].value.shape();
                let r = sa.len();
                let (m, k) = (sa[r - 2], sa[r - 1]);
                let n = node.value.shape()[r - 1];
                let batch: usize = sa[..r - 2].iter().product();
                self.emit(&mut out, *a, || {
                    let mut g = vec![0.0; batch * m * k];
                    let bd = self.data(*b);
                    for i in 0..batch {
                        gemm(
                            m,
                            n,
                            k,
                            &grad[i * m * n..(i + 1) * m * n],
                            false,
                            &bd[i * k * n..(i + 1) * k * n],
                            true,
                            &mut g[i * m * k..(i + 1) * m * k],
                            0.0,
                        );
                    }
                    g
                });
                self.emit(&mut out, *b, || {
                    let mut g = vec![0.0; batch * k * n];
                    let ad = self.data(*a);
                    for i in 0..batch {
                        gemm(
                            k,
                            m,
                            n,
                            &ad[i * m * k..(i + 1) * m * k],
                            true,
                            &grad[i * m * n..(i + 1) * m * n],
                            false,
                            &mut g[i * k * n..(i + 1) * k * n],
                            0.0,
                        );
                    }
                    g
                });
            }
            Op::Softmax { x, axis } => self.emit(&mut out, *x, || {
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let mut g = vec![0.0; grad.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| grad[at(j)] * out_vals[at(j)]).sum();
                        for j in 0..n {
                            g[at(j)] = out_vals[at(j)] * (grad[at(j)] - dot);
                        }
                    }
                }
                g
            }),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = self.nodes[gain.0].value.numel();
                let gv = self.data(*gain);
                self.emit(&mut out, *x, || {
                    let mut g = vec![0.0; grad.len()];
                    let nf = n as f64;
                    for (r, inv) in inv_std.iter().enumerate() {
                        let row = r * n..(r + 1) * n;
                        let (gr, hr) = (&grad[row.clone()], &xhat[row.clone()]);
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for j in 0..n {
                            let d = gr[j] * gv[j];
                            sum_d += d;
                            sum_dh += d * hr[j];
                        }
                        for j in 0..n {
                            let d = gr[j] * gv[j];
                            g[r * n + j] = inv / nf * (nf * d - sum_d - hr[j] * sum_dh);
                        }
                    }
                    g
                });
                self.emit(&mut out, *gain, || {
                    let mut g = vec![0.0; n];
                    for (gr, hr) in grad.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            g[j] += gr[j] * hr[j];
                        }
                    }
                    g
                });
                self.emit(&mut out, *bias, || {
                    let mut g = vec![0.0; n];
                    for gr in grad.chunks_exact(n) {
                        g.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                    }
                    g
                });
            }
            Op::Dropout { x, mask } => self.emit(&mut out, *x, || grad.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::Gem {
                coeffs,
                p,
                eps,
                p_min,
                p_max,
                mean_pow,
            } => {
                let s = self.nodes[coeffs.0].value.shape();
                let (k, n) = (s[s.len() - 2], s[s.len() - 1]);
                let raw_p = self.data(*p);
                let xs = self.data(*coeffs);
                let nf = n as f64;
                let clamp = |v: f64| v.clamp(*p_min, *p_max);
                self.emit(&mut out, *coeffs, || {
                    let mut g = vec![0.0; xs.len()];
                    for (b, (&m, &y)) in mean_pow.iter().zip(out_vals).enumerate() {
                        if m <= 0.0 {
                            continue;
                        }
                        let pk = clamp(raw_p[b % k]);
                        let scale = grad[b] * y / (m * nf);
                        for i in b * n..(b + 1) * n {
                            let x = xs[i];
                            if x != 0.0 {
                                g[i] = scale * libm::pow(x.abs() + eps, pk - 1.0) * x.signum();
                            }
                        }
                    }
                    g
                });
                self.emit(&mut out, *p, || {
                    let mut g = vec![0.0; k];
                    for (b, (&m, &y)) in mean_pow.iter().zip(out_vals).enumerate() {
                        let raw = raw_p[b % k];
                        if m <= 0.0 || raw < *p_min || raw > *p_max {
                            continue;
                        }
                        let pk = raw;
                        let weighted: f64 = xs[b * n..(b + 1) * n]
                            .iter()
                            .map(|x| {
                                let a = x.abs() + eps;
                                if a > 0.0 {
                                    libm::pow(a, pk) * libm::log(a)
                                } else {
                                    0.0
                                }
                            })
                            .sum();
                        let dy = y * (-libm::log(m) / (pk * pk) + weighted / (nf * m * pk));
                        g[b % k] += grad[b] * dy;
                    }
                    g
                });
            }
            Op::CrossEntropy { logits, labels, probs } => self.emit(&mut out, *logits, || {
                let c = probs.len() / labels.len();
                let scale = grad[0] / labels.len() as f64;
                let mut g: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (b, &l) in labels.iter().enumerate() {
                    g[b * c + l] -= scale;
                }
                g
            }),
        }
        out
    }
}
