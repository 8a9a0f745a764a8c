use super::real::gemm_nt_long;
use super::{gemm, Real, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn columns(&self) -> usize {
        self.n * self.ho * self.wo
    }
}

enum Op<F> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Relu(Var),
    Sigmoid(Var),
    Reshape(Var),
    Sum(Var),
    ReduceSum {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    VectorNorm {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
        cols: Vec<F>,
    },
    ChannelBias {
        x: Var,
        b: Var,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<usize>,
    },
    CapsuleCombine {
        x: Var,
        w: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<F>,
        labels: Vec<usize>,
    },
}

struct Node<F> {
    value: Tensor<F>,
    requires_grad: bool,
    grad: Option<Tensor<F>>,
    op: Op<F>,
}

/// Records forward operations in execution order so that [`Tape::backward`]
/// can replay them in reverse.
///
/// Every operation's inputs are recorded before it, so the node list is
/// already topologically sorted. A tape is single-threaded; parallelism, if
/// any, lives inside individual kernels.
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn removed_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn expect_rank(op: &'static str, t: &[usize], rank: usize) -> Result<()> {
    if t.len() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            got: t.len(),
        });
    }
    Ok(())
}

fn expect_dim(op: &'static str, axis: usize, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(TensorError::Dimension {
            op,
            axis,
            expected,
            got,
        });
    }
    Ok(())
}

fn expect_same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    expect_rank(op, b, a.len())?;
    for (axis, (&x, &y)) in a.iter().zip(b).enumerate() {
        expect_dim(op, axis, x, y)?;
    }
    Ok(())
}

impl ConvGeom {
    /// Output columns `ox` whose input column `ox * stride + j - pad` lies
    /// inside the image, as a half-open range.
    fn valid_ox(&self, j: usize) -> (usize, usize) {
        let lo = if self.pad > j {
            (self.pad - j).div_ceil(self.stride)
        } else {
            0
        };
        let limit = self.w + self.pad - j; // ix < w  <=>  ox * stride < w + pad - j
        let hi = limit.div_ceil(self.stride).min(self.wo);
        (lo.min(hi), hi)
    }
}

fn im2col<F: Real>(x: &[F], g: &ConvGeom) -> Vec<F> {
    let npix = g.ho * g.wo;
    let ncol = g.columns();
    let mut cols = vec![F::zero(); g.patch() * ncol];
    // Sample-major so each input image stays cache resident.
    for n in 0..g.n {
        for c in 0..g.c {
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let row = (c * g.kh + i) * g.kw + j;
                    let base = row * ncol;
                    let (lo, hi) = g.valid_ox(j);
                    if lo >= hi {
                        continue;
                    }
                    let ix0 = lo * g.stride + j - g.pad;
                    {
                        let xbase = (n * g.c + c) * g.h * g.w;
                        let cbase = base + n * npix;
                        for oy in 0..g.ho {
                            let iy = (oy * g.stride + i) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let src = &x[xbase + iy as usize * g.w + ix0..];
                            let dst = &mut cols[cbase + oy * g.wo + lo..cbase + oy * g.wo + hi];
                            if g.stride == 1 {
                                dst.copy_from_slice(&src[..hi - lo]);
                            } else {
                                for (d, s) in dst.iter_mut().zip(src.iter().step_by(g.stride)) {
                                    *d = *s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<F: Real>(cols: &[F], g: &ConvGeom) -> Vec<F> {
    let npix = g.ho * g.wo;
    let ncol = g.columns();
    let mut x = vec![F::zero(); g.n * g.c * g.h * g.w];
    // Sample-major so each input image stays cache resident.
    for n in 0..g.n {
        for c in 0..g.c {
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let row = (c * g.kh + i) * g.kw + j;
                    let base = row * ncol;
                    let (lo, hi) = g.valid_ox(j);
                    if lo >= hi {
                        continue;
                    }
                    let ix0 = lo * g.stride + j - g.pad;
                    {
                        let xbase = (n * g.c + c) * g.h * g.w;
                        let cbase = base + n * npix;
                        for oy in 0..g.ho {
                            let iy = (oy * g.stride + i) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let src = &cols[cbase + oy * g.wo + lo..cbase + oy * g.wo + hi];
                            let dst = &mut x[xbase + iy as usize * g.w + ix0..];
                            for (d, s) in dst.iter_mut().step_by(g.stride).zip(src) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<F>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_requires_grad(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_same_shape("add", ta.shape(), tb.shape())?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_same_shape("hadamard_multiply", ta.shape(), tb.shape())?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > F::zero() { x } else { F::zero() });
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| F::one() / (F::one() + (-x).exp()));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Sum of every element, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn reduce_sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Rank {
                op: "reduce_sum",
                expected: axis + 1,
                got: shape.len(),
            });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value(a).data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &x[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let t = Tensor::from_parts(removed_axis(&shape, axis), out);
        Ok(self.push(
            t,
            Op::ReduceSum {
                x: a,
                outer,
                len,
                inner,
            },
            &[a],
        ))
    }

    /// Euclidean norm along `axis`.
    pub fn vector_norm(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Rank {
                op: "vector_norm",
                expected: axis + 1,
                got: shape.len(),
            });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value(a).data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    let v = x[(o * len + l) * inner + i];
                    out[o * inner + i] += v * v;
                }
            }
        }
        for v in &mut out {
            *v = v.sqrt();
        }
        let t = Tensor::from_parts(removed_axis(&shape, axis), out);
        Ok(self.push(
            t,
            Op::VectorNorm {
                x: a,
                outer,
                len,
                inner,
            },
            &[a],
        ))
    }

    /// `x[N,D] · w[D,K] + b[K]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        expect_rank("dense", tx.shape(), 2)?;
        expect_rank("dense", tw.shape(), 2)?;
        expect_rank("dense", tb.shape(), 1)?;
        let (n, d) = (tx.shape()[0], tx.shape()[1]);
        let k = tw.shape()[1];
        expect_dim("dense", 0, d, tw.shape()[0])?;
        expect_dim("dense", 0, k, tb.shape()[0])?;
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(tb.data());
        }
        gemm(
            false,
            false,
            n,
            d,
            k,
            F::one(),
            tx.data(),
            tw.data(),
            F::one(),
            &mut out,
        );
        let t = Tensor::from_parts(vec![n, k], out);
        Ok(self.push(t, Op::Dense { x, w, b }, &[x, w, b]))
    }

    /// Cross-correlation of `input[N,C,H,W]` with `kernel[F,C,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, padding: usize) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(k));
        expect_rank("conv2d", tx.shape(), 4)?;
        expect_rank("conv2d", tk.shape(), 4)?;
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                msg: "stride must be at least 1".into(),
            });
        }
        let (n, c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
        let (f, kh, kw) = (tk.shape()[0], tk.shape()[2], tk.shape()[3]);
        expect_dim("conv2d", 1, c, tk.shape()[1])?;
        if kh > h + 2 * padding {
            return Err(TensorError::Dimension {
                op: "conv2d",
                axis: 2,
                expected: h + 2 * padding,
                got: kh,
            });
        }
        if kw > w + 2 * padding {
            return Err(TensorError::Dimension {
                op: "conv2d",
                axis: 3,
                expected: w + 2 * padding,
                got: kw,
            });
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride,
            pad: padding,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        };
        let cols = im2col(tx.data(), &geom);
        let ncol = geom.columns();
        let npix = geom.ho * geom.wo;
        let mut fm = vec![F::zero(); f * ncol];
        gemm(
            false,
            false,
            f,
            geom.patch(),
            ncol,
            F::one(),
            tk.data(),
            &cols,
            F::zero(),
            &mut fm,
        );
        let mut out = vec![F::zero(); n * f * npix];
        for fi in 0..f {
            for ni in 0..n {
                let src = &fm[fi * ncol + ni * npix..fi * ncol + (ni + 1) * npix];
                out[(ni * f + fi) * npix..(ni * f + fi + 1) * npix].copy_from_slice(src);
            }
        }
        let t = Tensor::from_parts(vec![n, f, geom.ho, geom.wo], out);
        let cols = if self.any_requires_grad(&[x, k]) {
            cols
        } else {
            Vec::new()
        };
        Ok(self.push(t, Op::Conv2d { x, k, geom, cols }, &[x, k]))
    }

    /// Adds `b[C]` to every element of channel `C` of `x[N,C,...]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.rank() < 2 {
            return Err(TensorError::Rank {
                op: "channel_bias",
                expected: 2,
                got: tx.rank(),
            });
        }
        expect_rank("channel_bias", tb.shape(), 1)?;
        let c = tx.shape()[1];
        expect_dim("channel_bias", 1, c, tb.shape()[0])?;
        let inner: usize = tx.shape()[2..].iter().product();
        let mut out = tx.data().to_vec();
        for (blk, chunk) in out.chunks_mut(inner).enumerate() {
            let bias = tb.data()[blk % c];
            for v in chunk {
                *v += bias;
            }
        }
        let t = Tensor::from_parts(tx.shape().to_vec(), out);
        Ok(self.push(t, Op::ChannelBias { x, b }, &[x, b]))
    }

    /// Non-overlapping `size x size` max pooling over `x[N,C,H,W]`.
    pub fn max_pool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let tx = self.value(x);
        expect_rank("max_pool2d", tx.shape(), 4)?;
        let (n, c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
        if size == 0 || size > h || size > w {
            return Err(TensorError::InvalidArgument {
                op: "max_pool2d",
                msg: format!("window {size} does not fit {h}x{w}"),
            });
        }
        let (ho, wo) = (h / size, w / size);
        let data = tx.data();
        let mut out = vec![F::zero(); n * c * ho * wo];
        let mut argmax = vec![0usize; n * c * ho * wo];
        let mut o = 0;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                let row = base + oy * size * w;
                for ox in 0..wo {
                    let start = row + ox * size;
                    let mut best = start;
                    let mut bv = data[start];
                    for dy in 0..size {
                        let r = start + dy * w;
                        for (dx, &v) in data[r..r + size].iter().enumerate() {
                            if v > bv {
                                bv = v;
                                best = r + dx;
                            }
                        }
                    }
                    out[o] = bv;
                    argmax[o] = best;
                    o += 1;
                }
            }
        }
        let t = Tensor::from_parts(vec![n, c, ho, wo], out);
        Ok(self.push(t, Op::MaxPool2d { x, argmax }, &[x]))
    }

    /// Homogeneous capsule combination: for capsules `x[N,n,d]` and weights
    /// `w[n,K,d]`, `out[b,j,:] = sum_i x[b,i,:] ⊙ w[i,j,:]`.
    pub fn capsule_combine(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        expect_rank("capsule_combine", tx.shape(), 3)?;
        expect_rank("capsule_combine", tw.shape(), 3)?;
        let (nb, n, d) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let k = tw.shape()[1];
        expect_dim("capsule_combine", 0, n, tw.shape()[0])?;
        expect_dim("capsule_combine", 2, d, tw.shape()[2])?;
        let (xd, wd) = (tx.data(), tw.data());
        let mut out = vec![F::zero(); nb * k * d];
        for b in 0..nb {
            for i in 0..n {
                let xi = &xd[(b * n + i) * d..(b * n + i + 1) * d];
                for j in 0..k {
                    let wij = &wd[(i * k + j) * d..(i * k + j + 1) * d];
                    let o = &mut out[(b * k + j) * d..(b * k + j + 1) * d];
                    for e in 0..d {
                        o[e] += xi[e] * wij[e];
                    }
                }
            }
        }
        let t = Tensor::from_parts(vec![nb, k, d], out);
        Ok(self.push(t, Op::CapsuleCombine { x, w }, &[x, w]))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        expect_rank("softmax_cross_entropy", tl.shape(), 2)?;
        let (n, k) = (tl.shape()[0], tl.shape()[1]);
        expect_dim("softmax_cross_entropy", 0, n, labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::LabelOutOfRange {
                label: bad,
                classes: k,
            });
        }
        let mut probs = vec![F::zero(); n * k];
        let mut loss = F::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = &tl.data()[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for (p, &v) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
                *p = (v - max).exp();
                z += *p;
            }
            for p in &mut probs[r * k..(r + 1) * k] {
                *p /= z;
            }
            loss += -(row[label] - max - z.ln());
        }
        loss /= F::from_usize(n).unwrap();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            &[logits],
        ))
    }

    /// Reverse pass from a scalar `loss`, accumulating into the gradient
    /// buffers of every `requires_grad` leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        if !root.requires_grad {
            return Err(TensorError::Detached);
        }

        let mut adj: Vec<Option<Tensor<F>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::ones(root.value.shape()));
        let mut leaf_grads = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let nodes = &self.nodes;
            let mut send = |v: Var, t: Tensor<F>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => leaf_grads.push((i, g)),
                Op::Add(a, b) => {
                    send(*b, g.clone());
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let va = nodes[a.0].value.data();
                    let vb = nodes[b.0].value.data();
                    let shape = g.shape().to_vec();
                    let ga = g.data().iter().zip(vb).map(|(&x, &y)| x * y).collect();
                    let gb = g.data().iter().zip(va).map(|(&x, &y)| x * y).collect();
                    send(*a, Tensor::from_parts(shape.clone(), ga));
                    send(*b, Tensor::from_parts(shape, gb));
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    send(*a, g.map(|x| x * s));
                }
                Op::Relu(a) => {
                    let va = nodes[a.0].value.data();
                    let data = g
                        .data()
                        .iter()
                        .zip(va)
                        .map(|(&gv, &x)| if x > F::zero() { gv } else { F::zero() })
                        .collect();
                    send(*a, Tensor::from_parts(g.shape().to_vec(), data));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let data = g
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(&gv, &s)| gv * s * (F::one() - s))
                        .collect();
                    send(*a, Tensor::from_parts(g.shape().to_vec(), data));
                }
                Op::Reshape(a) => {
                    let shape = nodes[a.0].value.shape().to_vec();
                    send(*a, Tensor::from_parts(shape, g.into_data()));
                }
                Op::Sum(a) => {
                    send(*a, Tensor::full(nodes[a.0].value.shape(), g.item()));
                }
                Op::ReduceSum {
                    x,
                    outer,
                    len,
                    inner,
                } => {
                    let (outer, len, inner) = (*outer, *len, *inner);
                    let mut gx = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        for _ in 0..len {
                            gx.extend_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                        }
                    }
                    send(
                        *x,
                        Tensor::from_parts(nodes[x.0].value.shape().to_vec(), gx),
                    );
                }
                Op::VectorNorm {
                    x,
                    outer,
                    len,
                    inner,
                } => {
                    let (outer, len, inner) = (*outer, *len, *inner);
                    let xv = nodes[x.0].value.data();
                    let y = node.value.data();
                    let mut gx = vec![F::zero(); outer * len * inner];
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                let norm = y[o * inner + i];
                                if norm > F::zero() {
                                    let idx = (o * len + l) * inner + i;
                                    gx[idx] = g.data()[o * inner + i] * xv[idx] / norm;
                                }
                            }
                        }
                    }
                    send(
                        *x,
                        Tensor::from_parts(nodes[x.0].value.shape().to_vec(), gx),
                    );
                }
                Op::Dense { x, w, b } => {
                    let tx = &nodes[x.0].value;
                    let tw = &nodes[w.0].value;
                    let (n, d) = (tx.shape()[0], tx.shape()[1]);
                    let k = tw.shape()[1];
                    if nodes[x.0].requires_grad {
                        let mut gx = vec![F::zero(); n * d];
                        gemm(
                            false,
                            true,
                            n,
                            k,
                            d,
                            F::one(),
                            g.data(),
                            tw.data(),
                            F::zero(),
                            &mut gx,
                        );
                        send(*x, Tensor::from_parts(vec![n, d], gx));
                    }
                    if nodes[w.0].requires_grad {
                        let mut gw = vec![F::zero(); d * k];
                        gemm(
                            true,
                            false,
                            d,
                            n,
                            k,
                            F::one(),
                            tx.data(),
                            g.data(),
                            F::zero(),
                            &mut gw,
                        );
                        send(*w, Tensor::from_parts(vec![d, k], gw));
                    }
                    let mut gb = vec![F::zero(); k];
                    for row in g.data().chunks(k) {
                        for (acc, &v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    send(*b, Tensor::from_parts(vec![k], gb));
                }
                Op::Conv2d { x, k, geom, cols } => {
                    let geom = *geom;
                    let ncol = geom.columns();
                    let npix = geom.ho * geom.wo;
                    let mut gfm = vec![F::zero(); geom.f * ncol];
                    for ni in 0..geom.n {
                        for fi in 0..geom.f {
                            let src =
                                &g.data()[(ni * geom.f + fi) * npix..(ni * geom.f + fi + 1) * npix];
                            gfm[fi * ncol + ni * npix..fi * ncol + (ni + 1) * npix]
                                .copy_from_slice(src);
                        }
                    }
                    let tk = &nodes[k.0].value;
                    if nodes[k.0].requires_grad {
                        let mut gk = vec![F::zero(); geom.f * geom.patch()];
                        gemm_nt_long(geom.f, ncol, geom.patch(), &gfm, cols, &mut gk);
                        send(*k, Tensor::from_parts(tk.shape().to_vec(), gk));
                    }
                    if nodes[x.0].requires_grad {
                        let mut gcols = vec![F::zero(); geom.patch() * ncol];
                        gemm(
                            true,
                            false,
                            geom.patch(),
                            geom.f,
                            ncol,
                            F::one(),
                            tk.data(),
                            &gfm,
                            F::zero(),
                            &mut gcols,
                        );
                        let gx = col2im(&gcols, &geom);
                        send(
                            *x,
                            Tensor::from_parts(vec![geom.n, geom.c, geom.h, geom.w], gx),
                        );
                    }
                }
                Op::ChannelBias { x, b } => {
                    let shape = nodes[x.0].value.shape().to_vec();
                    let c = shape[1];
                    let inner: usize = shape[2..].iter().product();
                    let mut gb = vec![F::zero(); c];
                    for (blk, chunk) in g.data().chunks(inner).enumerate() {
                        gb[blk % c] += chunk.iter().copied().sum::<F>();
                    }
                    send(*b, Tensor::from_parts(vec![c], gb));
                    send(*x, g);
                }
                Op::MaxPool2d { x, argmax } => {
                    let shape = nodes[x.0].value.shape().to_vec();
                    let mut gx = vec![F::zero(); nodes[x.0].value.len()];
                    for (&src, &gv) in argmax.iter().zip(g.data()) {
                        gx[src] += gv;
                    }
                    send(*x, Tensor::from_parts(shape, gx));
                }
                Op::CapsuleCombine { x, w } => {
                    let tx = &nodes[x.0].value;
                    let tw = &nodes[w.0].value;
                    let (nb, n, d) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                    let k = tw.shape()[1];
                    let (xd, wd, gd) = (tx.data(), tw.data(), g.data());
                    let mut gx = vec![F::zero(); nb * n * d];
                    let mut gw = vec![F::zero(); n * k * d];
                    for b in 0..nb {
                        for i in 0..n {
                            for j in 0..k {
                                let go = &gd[(b * k + j) * d..(b * k + j + 1) * d];
                                for e in 0..d {
                                    gx[(b * n + i) * d + e] += go[e] * wd[(i * k + j) * d + e];
                                    gw[(i * k + j) * d + e] += go[e] * xd[(b * n + i) * d + e];
                                }
                            }
                        }
                    }
                    send(*x, Tensor::from_parts(vec![nb, n, d], gx));
                    send(*w, Tensor::from_parts(vec![n, k, d], gw));
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    probs,
                    labels,
                } => {
                    let shape = nodes[logits.0].value.shape().to_vec();
                    let k = shape[1];
                    let scale = g.item() / F::from_usize(labels.len()).unwrap();
                    let mut gl: Vec<F> = probs.iter().map(|&p| p * scale).collect();
                    for (r, &label) in labels.iter().enumerate() {
                        gl[r * k + label] -= scale;
                    }
                    send(*logits, Tensor::from_parts(shape, gl));
                }
            }
        }

        for (i, g) in leaf_grads {
            if !self.nodes[i].requires_grad {
                continue;
            }
            match &mut self.nodes[i].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}
