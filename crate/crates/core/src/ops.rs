//! Differentiable operations on [`Graph`].

use crate::graph::{Graph, Var};
use crate::math;
use crate::real::{fl, Real};
use crate::tensor::{broadcast_shape, Tensor};
use crate::warp::{warp_backward, warp_forward, Pose, WarpDir};

macro_rules! unary_op {
    ($name:ident, $fwd:expr, $bwd:expr) => {
        pub fn $name(&mut self, x: Var) -> Var {
            let y = self.value(x).map($fwd);
            self.push_unary(x, y, $bwd)
        }
    };
}

impl<F: Real> Graph<F> {
    /// grad_fn(x, y, g) -> gx, applied elementwise.
    fn push_unary(&mut self, x: Var, y: Tensor<F>, grad_fn: fn(F, F, F) -> F) -> Var {
        self.push(
            y,
            Some(Box::new(move |graph, me, g| {
                let xv = graph.value(x);
                let yv = graph.value(me);
                let mut out = Vec::with_capacity(g.len());
                for i in 0..g.len() {
                    out.push(grad_fn(xv.data()[i], yv.data()[i], g.data()[i]));
                }
                vec![(x, Tensor::new(xv.shape().to_vec(), out))]
            })),
        )
    }

    unary_op!(neg, |v| -v, |_x, _y, g| -g);
    unary_op!(exp, |v| v.exp(), |_x, y, g| g * y);
    unary_op!(ln, |v| v.ln(), |x, _y, g| g / x);
    unary_op!(square, |v| v * v, |x, _y, g| g * (x + x));
    unary_op!(sigmoid, |v| F::one() / (F::one() + (-v).exp()), |_x, y, g| g * y
        * (F::one() - y));
    unary_op!(tanh, |v| v.tanh(), |_x, y, g| g * (F::one() - y * y));
    unary_op!(
        softplus,
        |v| fl::<F>(math::softplus(v.f64())),
        |x, _y, g| g / (F::one() + (-x).exp())
    );
    unary_op!(
        elu,
        |v| if v > F::zero() { v } else { v.exp() - F::one() },
        |x, y, g| if x > F::zero() { g } else { g * (y + F::one()) }
    );
    unary_op!(
        lgamma,
        |v| fl::<F>(math::lgamma(v.f64())),
        |x, _y, g| g * fl::<F>(math::digamma(x.f64()))
    );
    unary_op!(
        digamma,
        |v| fl::<F>(math::digamma(v.f64())),
        |x, _y, g| g * fl::<F>(math::trigamma(x.f64()))
    );

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (l, h) = (fl::<F>(lo), fl::<F>(hi));
        let y = self.value(x).map(|v| v.max(l).min(h));
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                let xv = graph.value(x);
                let gx = xv.zip(g, |v, gv| if v >= l && v <= h { gv } else { F::zero() });
                vec![(x, gx)]
            })),
        )
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cf = fl::<F>(c);
        let y = self.value(x).map(|v| v * cf);
        self.push(
            y,
            Some(Box::new(move |_graph, _me, g| vec![(x, g.map(|v| v * cf))])),
        )
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let cf = fl::<F>(c);
        let y = self.value(x).map(|v| v + cf);
        self.push(y, Some(Box::new(move |_graph, _me, g| vec![(x, g.clone())])))
    }

    /// Value copy that blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.constant(v)
    }

    fn push_binary(
        &mut self,
        a: Var,
        b: Var,
        y: Tensor<F>,
        grad_fn: fn(&Graph<F>, Var, Var, &Tensor<F>) -> (Tensor<F>, Tensor<F>),
    ) -> Var {
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                let (ga, gb) = grad_fn(graph, a, b, g);
                let ga = ga.reduce_to_shape(graph.value(a).shape());
                let gb = gb.reduce_to_shape(graph.value(b).shape());
                vec![(a, ga), (b, gb)]
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip(self.value(b), |x, z| x + z);
        self.push_binary(a, b, y, |_graph, _a, _b, g| (g.clone(), g.clone()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip(self.value(b), |x, z| x - z);
        self.push_binary(a, b, y, |_graph, _a, _b, g| (g.clone(), g.map(|v| -v)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip(self.value(b), |x, z| x * z);
        self.push_binary(a, b, y, |graph, a, b, g| {
            (
                g.zip(graph.value(b), |gv, bv| gv * bv),
                g.zip(graph.value(a), |gv, av| gv * av),
            )
        })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip(self.value(b), |x, z| x / z);
        self.push_binary(a, b, y, |graph, a, b, g| {
            let bv = graph.value(b);
            let ga = g.zip(bv, |gv, z| gv / z);
            let gb_full = g
                .zip(graph.value(a), |gv, av| gv * av)
                .zip(bv, |num, z| -num / (z * z));
            (ga, gb_full)
        })
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let y = Tensor::scalar(self.value(x).sum_all());
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                let gv = g.item();
                vec![(x, Tensor::full(graph.value(x).shape(), gv))]
            })),
        )
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sum_last(&mut self, x: Var, keepdim: bool) -> Var {
        let y = self.value(x).sum_last_axis(keepdim);
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                let xs = graph.value(x).shape().to_vec();
                let k = *xs.last().unwrap();
                let mut out = Vec::with_capacity(graph.value(x).len());
                for &gv in g.data() {
                    for _ in 0..k {
                        out.push(gv);
                    }
                }
                vec![(x, Tensor::new(xs, out))]
            })),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let y = self.value(x).reshape(shape);
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                vec![(x, g.reshape(graph.value(x).shape()))]
            })),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).matmul(self.value(b));
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                let at = graph.value(a).transpose2d();
                let bt = graph.value(b).transpose2d();
                vec![(a, g.matmul(&bt)), (b, at.matmul(g))]
            })),
        )
    }

    /// Concatenate along the last axis.
    pub fn concat_last(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let lead = self.value(parts[0]).shape()[..self.value(parts[0]).shape().len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> =
            parts.iter().map(|&p| *self.value(p).shape().last().unwrap()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (i, &p) in parts.iter().enumerate() {
                let w = widths[i];
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.clone();
        shape.push(total);
        let parts_own: Vec<Var> = parts.to_vec();
        let widths_sav = widths.clone();
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |graph, _me, g| {
                let mut offs = Vec::with_capacity(parts_own.len());
                let mut acc = 0;
                for &w in &widths_sav {
                    offs.push(acc);
                    acc += w;
                }
                let total: usize = widths_sav.iter().sum();
                let rows = g.len() / total;
                parts_own
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        let w = widths_sav[i];
                        let mut out = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            let base = r * total + offs[i];
                            out.extend_from_slice(&g.data()[base..base + w]);
                        }
                        (p, Tensor::new(graph.value(p).shape().to_vec(), out))
                    })
                    .collect()
            })),
        )
    }

    /// Columns `[start, start+len)` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        let w = *xs.last().unwrap();
        assert!(start + len <= w);
        let rows = self.value(x).len() / w;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&self.value(x).data()[r * w + start..r * w + start + len]);
        }
        let mut shape = xs.clone();
        *shape.last_mut().unwrap() = len;
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |graph, _me, g| {
                let xs = graph.value(x).shape().to_vec();
                let w = *xs.last().unwrap();
                let rows = graph.value(x).len() / w;
                let mut out = vec![F::zero(); rows * w];
                for r in 0..rows {
                    out[r * w + start..r * w + start + len]
                        .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                vec![(x, Tensor::new(xs, out))]
            })),
        )
    }

    /// [b, f] -> [b*times, f] with each row repeated contiguously; used to
    /// broadcast a latent across a spatial grid.
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Var {
        let xs = self.value(x).shape();
        assert_eq!(xs.len(), 2);
        let (b, f) = (xs[0], xs[1]);
        let mut data = Vec::with_capacity(b * times * f);
        for r in 0..b {
            let row = &self.value(x).data()[r * f..(r + 1) * f];
            for _ in 0..times {
                data.extend_from_slice(row);
            }
        }
        self.push(
            Tensor::new(vec![b * times, f], data),
            Some(Box::new(move |graph, _me, g| {
                let xs = graph.value(x).shape().to_vec();
                let (b, f) = (xs[0], xs[1]);
                let mut out = vec![F::zero(); b * f];
                for r in 0..b {
                    for t in 0..times {
                        let src = &g.data()[(r * times + t) * f..(r * times + t + 1) * f];
                        for (o, &s) in out[r * f..(r + 1) * f].iter_mut().zip(src) {
                            *o = *o + s;
                        }
                    }
                }
                vec![(x, Tensor::new(xs, out))]
            })),
        )
    }

    /// Mean-pool [b, h, w, c] by an integer factor.
    pub fn avg_pool(&mut self, x: Var, factor: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        assert_eq!(xs.len(), 4);
        let (b, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        assert!(h % factor == 0 && w % factor == 0);
        let (oh, ow) = (h / factor, w / factor);
        let norm = fl::<F>(1.0 / (factor * factor) as f64);
        let xd = self.value(x).data();
        let mut out = vec![F::zero(); b * oh * ow * c];
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let o = ((bi * oh + y / factor) * ow + xx / factor) * c;
                    let i = ((bi * h + y) * w + xx) * c;
                    for ch in 0..c {
                        out[o + ch] = out[o + ch] + xd[i + ch] * norm;
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![b, oh, ow, c], out),
            Some(Box::new(move |graph, _me, g| {
                let xs = graph.value(x).shape().to_vec();
                let (b, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
                let (oh, ow) = (h / factor, w / factor);
                let mut out = vec![F::zero(); b * h * w * c];
                for bi in 0..b {
                    for y in 0..h {
                        for xx in 0..w {
                            let o = ((bi * oh + y / factor) * ow + xx / factor) * c;
                            let i = ((bi * h + y) * w + xx) * c;
                            for ch in 0..c {
                                out[i + ch] = g.data()[o + ch] * norm;
                            }
                        }
                    }
                }
                vec![(x, Tensor::new(xs, out))]
            })),
        )
    }

    /// Bilinear upsampling of [b, h, w, c] by an integer factor
    /// (half-pixel-centered sampling, clamped at the border).
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        assert_eq!(xs.len(), 4);
        let (b, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h * factor, w * factor);
        let taps_y = upsample_taps(h, oh);
        let taps_x = upsample_taps(w, ow);
        let xd = self.value(x).data();
        let mut out = vec![F::zero(); b * oh * ow * c];
        for bi in 0..b {
            for oy in 0..oh {
                let (y0, y1, wy) = taps_y[oy];
                let wyf = fl::<F>(wy);
                for ox in 0..ow {
                    let (x0, x1, wx) = taps_x[ox];
                    let wxf = fl::<F>(wx);
                    let i00 = ((bi * h + y0) * w + x0) * c;
                    let i10 = ((bi * h + y0) * w + x1) * c;
                    let i01 = ((bi * h + y1) * w + x0) * c;
                    let i11 = ((bi * h + y1) * w + x1) * c;
                    let o = ((bi * oh + oy) * ow + ox) * c;
                    for ch in 0..c {
                        let top = xd[i00 + ch] * (F::one() - wxf) + xd[i10 + ch] * wxf;
                        let bot = xd[i01 + ch] * (F::one() - wxf) + xd[i11 + ch] * wxf;
                        out[o + ch] = top * (F::one() - wyf) + bot * wyf;
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![b, oh, ow, c], out),
            Some(Box::new(move |graph, _me, g| {
                let xs = graph.value(x).shape().to_vec();
                let (b, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
                let (oh, ow) = (h * factor, w * factor);
                let taps_y = upsample_taps(h, oh);
                let taps_x = upsample_taps(w, ow);
                let mut out = vec![F::zero(); b * h * w * c];
                for bi in 0..b {
                    for oy in 0..oh {
                        let (y0, y1, wy) = taps_y[oy];
                        let wyf = fl::<F>(wy);
                        for ox in 0..ow {
                            let (x0, x1, wx) = taps_x[ox];
                            let wxf = fl::<F>(wx);
                            let o = ((bi * oh + oy) * ow + ox) * c;
                            for ch in 0..c {
                                let gv = g.data()[o + ch];
                                let add = |buf: &mut Vec<F>, y: usize, x: usize, wgt: F| {
                                    let i = ((bi * h + y) * w + x) * c + ch;
                                    buf[i] = buf[i] + gv * wgt;
                                };
                                add(&mut out, y0, x0, (F::one() - wxf) * (F::one() - wyf));
                                add(&mut out, y0, x1, wxf * (F::one() - wyf));
                                add(&mut out, y1, x0, (F::one() - wxf) * wyf);
                                add(&mut out, y1, x1, wxf * wyf);
                            }
                        }
                    }
                }
                vec![(x, Tensor::new(xs, out))]
            })),
        )
    }

    /// Affine bilinear warp; `pose` is [b, 4] = (ex, ey, tx, ty).
    pub fn affine_sample(
        &mut self,
        input: Var,
        pose: Var,
        out_hw: (usize, usize),
        dir: WarpDir,
    ) -> Var {
        let ishape = self.value(input).shape().to_vec();
        assert_eq!(ishape.len(), 4);
        let dims = (ishape[0], ishape[1], ishape[2], ishape[3]);
        assert_eq!(self.value(pose).shape(), &[dims.0, 4]);
        let poses = poses_from_tensor(self.value(pose));
        let data = warp_forward(self.value(input).data(), dims, &poses, out_hw, dir);
        let y = Tensor::new(vec![dims.0, out_hw.0, out_hw.1, dims.3], data);
        self.push(
            y,
            Some(Box::new(move |graph, _me, g| {
                let poses = poses_from_tensor(graph.value(pose));
                let (gin, gpose) = warp_backward(
                    graph.value(input).data(),
                    dims,
                    &poses,
                    out_hw,
                    dir,
                    g.data(),
                );
                let mut gp = Vec::with_capacity(dims.0 * 4);
                for p in gpose {
                    gp.extend_from_slice(&[p.ex, p.ey, p.tx, p.ty]);
                }
                vec![
                    (input, Tensor::new(graph.value(input).shape().to_vec(), gin)),
                    (pose, Tensor::new(vec![dims.0, 4], gp)),
                ]
            })),
        )
    }

    /// Per-image slot gather: output row `b` takes slot `perm[b]`'s row `b`.
    ///
    /// All slot tensors must share a shape whose leading axis is the batch.
    pub fn select_slot(&mut self, slots: &[Var], perm: &[usize]) -> Var {
        assert!(!slots.is_empty());
        let shape = self.value(slots[0]).shape().to_vec();
        let b = shape[0];
        assert_eq!(perm.len(), b);
        let row: usize = shape[1..].iter().product();
        let mut data = Vec::with_capacity(b * row);
        for (bi, &s) in perm.iter().enumerate() {
            assert!(s < slots.len());
            data.extend_from_slice(&self.value(slots[s]).data()[bi * row..(bi + 1) * row]);
        }
        let slots_own = slots.to_vec();
        let perm_own = perm.to_vec();
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |graph, _me, g| {
                let row: usize = graph.value(slots_own[0]).shape()[1..].iter().product();
                let b = perm_own.len();
                slots_own
                    .iter()
                    .enumerate()
                    .map(|(si, &sv)| {
                        let mut out = vec![F::zero(); graph.value(sv).len()];
                        for bi in 0..b {
                            if perm_own[bi] == si {
                                out[bi * row..(bi + 1) * row]
                                    .copy_from_slice(&g.data()[bi * row..(bi + 1) * row]);
                            }
                        }
                        (sv, Tensor::new(graph.value(sv).shape().to_vec(), out))
                    })
                    .collect()
            })),
        )
    }

    /// Numerically stable log(Σ_i exp(x_i)) across a list of same-shape vars.
    pub fn logsumexp_list(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let values: Vec<&Tensor<F>> = xs.iter().map(|&v| self.value(v)).collect();
        let m = crate::tensor::elementwise_max(&values);
        let mc = self.constant(m);
        let mut acc: Option<Var> = None;
        for &x in xs {
            let d = self.sub(x, mc);
            let e = self.exp(d);
            acc = Some(match acc {
                None => e,
                Some(a) => self.add(a, e),
            });
        }
        let s = self.ln(acc.unwrap());
        self.add(s, mc)
    }
}

fn poses_from_tensor<F: Real>(t: &Tensor<F>) -> Vec<Pose<F>> {
    let b = t.shape()[0];
    (0..b)
        .map(|i| Pose {
            ex: t.data()[i * 4],
            ey: t.data()[i * 4 + 1],
            tx: t.data()[i * 4 + 2],
            ty: t.data()[i * 4 + 3],
        })
        .collect()
}

/// Source taps for half-pixel-centered bilinear upsampling.
fn upsample_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let clamped = src.max(0.0).min((n_in - 1) as f64);
            let i0 = clamped.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            let w = clamped - i0 as f64;
            (i0, i1, w)
        })
        .collect()
}

/// Broadcast-aware output shape helper re-exported for model code.
pub fn binary_output_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    broadcast_shape(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Central-difference check of `backward` for a scalar-valued build fn.
    fn fd_check(
        inputs: &[Tensor<f64>],
        build: impl Fn(&mut Graph<f64>, &[Var]) -> Var,
        tol: f64,
    ) {
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let root = build(&mut g, &vars);
        assert_eq!(g.value(root).len(), 1, "fd_check root must be scalar");
        let grads = g.backward(root);
        let h = 1e-5;
        for (vi, input) in inputs.iter().enumerate() {
            let analytic = grads.get_or_zeros(vars[vi], input.shape());
            for j in 0..input.len() {
                let perturbed = |delta: f64| {
                    let mut data = input.to_vec();
                    data[j] += delta;
                    let mut g2 = Graph::<f64>::new();
                    let vars2: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(k, t)| {
                            if k == vi {
                                g2.leaf(Tensor::new(t.shape().to_vec(), data.clone()))
                            } else {
                                g2.leaf(t.clone())
                            }
                        })
                        .collect();
                    let r = build(&mut g2, &vars2);
                    g2.value(r).item()
                };
                let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                let a = analytic.data()[j];
                let denom = fd.abs().max(a.abs()).max(1e-6);
                assert!(
                    (fd - a).abs() / denom < tol,
                    "input {vi} elem {j}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    fn randn(rng: &mut StdRng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn elementwise_and_reduction_grads() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = randn(&mut rng, &[2, 3]);
        let b = randn(&mut rng, &[2, 3]).map(|v| v + 2.5);
        fd_check(&[a.clone(), b.clone()], |g, v| {
            let s = g.mul(v[0], v[1]);
            let e = g.sigmoid(s);
            let t = g.tanh(e);
            let d = g.div(t, v[1]);
            let sp = g.softplus(d);
            let el = g.elu(sp);
            g.sum_all(el)
        }, 1e-6);
    }

    #[test]
    fn broadcast_grads_reduce_correctly() {
        let mut rng = StdRng::seed_from_u64(8);
        let a = randn(&mut rng, &[2, 3, 2]);
        let m = randn(&mut rng, &[2, 3, 1]);
        let s = randn(&mut rng, &[1]);
        fd_check(&[a, m, s], |g, v| {
            let x = g.mul(v[0], v[1]);
            let y = g.add(x, v[2]);
            let z = g.square(y);
            g.sum_all(z)
        }, 1e-6);
    }

    #[test]
    fn matmul_and_slice_grads() {
        let mut rng = StdRng::seed_from_u64(9);
        let a = randn(&mut rng, &[3, 4]);
        let b = randn(&mut rng, &[4, 5]);
        fd_check(&[a, b], |g, v| {
            let y = g.matmul(v[0], v[1]);
            let s = g.slice_last(y, 1, 3);
            let e = g.exp(s);
            g.sum_all(e)
        }, 1e-6);
    }

    #[test]
    fn concat_tile_grads() {
        let mut rng = StdRng::seed_from_u64(10);
        let a = randn(&mut rng, &[2, 3]);
        let b = randn(&mut rng, &[2, 2]);
        fd_check(&[a, b], |g, v| {
            let c = g.concat_last(&[v[0], v[1]]);
            let t = g.tile_rows(c, 3);
            let q = g.square(t);
            g.sum_all(q)
        }, 1e-6);
    }

    #[test]
    fn pool_upsample_grads() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = randn(&mut rng, &[1, 4, 4, 2]);
        fd_check(&[a], |g, v| {
            let p = g.avg_pool(v[0], 2);
            let u = g.upsample_bilinear(p, 2);
            let q = g.square(u);
            g.sum_all(q)
        }, 1e-6);
    }

    #[test]
    fn warp_grads_both_directions() {
        let mut rng = StdRng::seed_from_u64(12);
        let img = randn(&mut rng, &[2, 5, 5, 1]);
        // Constants chosen so no sample coordinate sits exactly on a grid
        // line, where the bilinear interpolant has a kink.
        let pose = Tensor::new(
            vec![2, 4],
            vec![0.8123, 0.6043, 0.1317, -0.2092, 0.5271, 0.8813, -0.3137, 0.1093],
        );
        for dir in [WarpDir::Paste, WarpDir::Crop] {
            fd_check(&[img.clone(), pose.clone()], move |g, v| {
                let w = g.affine_sample(v[0], v[1], (4, 4), dir);
                let q = g.square(w);
                g.sum_all(q)
            }, 1e-5);
        }
    }

    #[test]
    fn select_slot_routes_gradients() {
        let mut rng = StdRng::seed_from_u64(13);
        let s0 = randn(&mut rng, &[3, 2]);
        let s1 = randn(&mut rng, &[3, 2]);
        fd_check(&[s0, s1], |g, v| {
            let sel = g.select_slot(&[v[0], v[1]], &[1, 0, 1]);
            let q = g.square(sel);
            g.sum_all(q)
        }, 1e-6);
    }

    #[test]
    fn logsumexp_list_matches_direct() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::new(vec![2], vec![1.0, -3.0]));
        let b = g.leaf(Tensor::new(vec![2], vec![0.5, 10.0]));
        let l = g.logsumexp_list(&[a, b]);
        let want0 = (1.0f64.exp() + 0.5f64.exp()).ln();
        let want1 = ((-3.0f64).exp() + 10.0f64.exp()).ln();
        assert!((g.value(l).data()[0] - want0).abs() < 1e-12);
        assert!((g.value(l).data()[1] - want1).abs() < 1e-12);
    }

    #[test]
    fn lgamma_digamma_grads() {
        let a = Tensor::new(vec![3], vec![0.7, 2.3, 5.1]);
        fd_check(&[a], |g, v| {
            let l = g.lgamma(v[0]);
            let d = g.digamma(v[0]);
            let s = g.add(l, d);
            g.sum_all(s)
        }, 1e-5);
    }

    #[test]
    fn clamp_blocks_gradient_outside() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![3], vec![-1.0, 0.5, 2.0]));
        let c = g.clamp(x, 0.0, 1.0);
        let s = g.sum_all(c);
        let grads = g.backward(s);
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn param_binding_accumulates_across_uses() {
        let mut g = Graph::<f64>::new();
        let t = Tensor::new(vec![2], vec![1.0, 2.0]);
        let p1 = g.bind_param(0, &t);
        let p2 = g.bind_param(0, &t);
        assert_eq!(p1, p2);
        let s = g.add(p1, p2);
        let r = g.sum_all(s);
        let grads = g.backward(r);
        assert_eq!(grads.get(p1).unwrap().data(), &[2.0, 2.0]);
    }
}
