use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{col2im, conv_out_dim, conv_transpose_out_dim, gemm, gemm_nt, gemm_tn, im2col, ConvGeometry};
use super::{numel, Scalar, Tensor};
use crate::error::{shape_mismatch, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a batch-norm op treats its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize with batch statistics and fold them into the running averages.
    Train,
    /// Normalize with batch statistics, leave the running averages alone.
    TrainFrozenStats,
    /// Normalize with the running averages.
    Eval,
}

/// Running mean/variance of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: T::from_f64(0.1),
            eps: T::from_f64(1e-5),
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    BiasAdd(Var, Var),
    MatMul(Var, Var),
    Conv2d { input: Var, kernel: Var, geom: ConvGeometry, out_channels: usize },
    ConvTranspose2d { input: Var, kernel: Var, geom: ConvGeometry, in_channels: usize },
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    BatchNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Reshape(Var),
    AvgPool2d(Var, usize),
    Mean(Var),
    Sum(Var),
    Bce { pred: Var, targets: Vec<T> },
    BceWithLogits { logits: Var, targets: Vec<T> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    tracks: bool,
    leaf: bool,
}

/// Append-only record of primitive ops, differentiated once by [`Tape::backward`].
///
/// Every node's parents precede it, so a single reverse sweep suffices.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every leaf of a tape.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; `None` when `var` is not a leaf of the tape.
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Sign of every rectifier input on the tape, in record order. Two
    /// passes with equal patterns lie on the same linear piece of every
    /// ReLU and leaky ReLU.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) | Op::LeakyRelu(a, _) = n.op {
                pattern.extend(self.node(a).value.iter().map(|&v| v > T::zero()));
            }
        }
        pattern
    }

    fn live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::State("tape already consumed by backward".into()))
        } else {
            Ok(())
        }
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes hold consistent shapes")
    }

    pub fn scalar_value(&self, v: Var) -> Result<T> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(Error::Contract(format!("expected a scalar, found shape {:?}", n.shape)));
        }
        Ok(n.value[0])
    }

    fn push(&mut self, name: &'static str, shape: Vec<usize>, value: Vec<T>, op: Op<T>, tracks: bool) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { shape, value, op, tracks, leaf: false });
        Ok(Var(self.nodes.len() - 1))
    }

    fn tracks(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).tracks)
    }

    /// Registers a gradient-tracked leaf.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Result<Var> {
        self.live()?;
        let v = self.push("leaf", t.shape().to_vec(), t.data().to_vec(), Op::Input, true)?;
        self.nodes[v.0].leaf = true;
        Ok(v)
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, t: &Tensor<T>) -> Result<Var> {
        self.live()?;
        self.push("constant", t.shape().to_vec(), t.data().to_vec(), Op::Input, false)
    }

    /// Registers `t` as a leaf when it is marked `requires_grad`, else as a constant.
    pub fn input(&mut self, t: &Tensor<T>) -> Result<Var> {
        if t.requires_grad() {
            self.leaf(t)
        } else {
            self.constant(t)
        }
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.live()?;
        if self.shape(a) != self.shape(b) {
            return Err(shape_mismatch(name, self.shape(a), self.shape(b)));
        }
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let tracks = self.tracks(&[a, b]);
        self.push(name, shape, value, op, tracks)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.live()?;
        let value = self.value(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let tracks = self.tracks(&[a]);
        self.push("scale", shape, value, Op::Scale(a, c), tracks)
    }

    /// Adds a per-channel bias `b` (shape `[C]`) to `x` of shape `[N, C, ...]`.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        self.live()?;
        let xs = self.shape(x);
        if xs.len() < 2 || self.shape(b) != [xs[1]] {
            return Err(shape_mismatch("bias_add", xs, self.shape(b)));
        }
        let c = xs[1];
        let spatial = numel(&xs[2..]);
        let bias = self.value(b);
        let value = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[(i / spatial) % c])
            .collect();
        let shape = xs.to_vec();
        let tracks = self.tracks(&[x, b]);
        self.push("bias_add", shape, value, Op::BiasAdd(x, b), tracks)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![T::zero(); m * n];
        gemm(self.value(a), self.value(b), &mut value, m, k, n, false);
        let tracks = self.tracks(&[a, b]);
        self.push("matmul", vec![m, n], value, Op::MatMul(a, b), tracks)
    }

    /// 2-D convolution. `input` is `[N, Cin, H, W]`, `kernel` is `[Cout, Cin, kh, kw]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        self.live()?;
        let (si, sk) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] || stride == 0 {
            return Err(shape_mismatch("conv2d", &si, &sk));
        }
        let (n, cin, h, w) = (si[0], si[1], si[2], si[3]);
        let (cout, kh, kw) = (sk[0], sk[2], sk[3]);
        let (oh, ow) = match (conv_out_dim(h, kh, stride, padding), conv_out_dim(w, kw, stride, padding)) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => return Err(shape_mismatch("conv2d", &si, &sk)),
        };
        let geom = ConvGeometry { channels: cin, height: h, width: w, kernel_h: kh, kernel_w: kw, stride, padding, out_h: oh, out_w: ow };
        let (r, l) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![T::zero(); r * l];
        let mut value = vec![T::zero(); n * cout * l];
        let kv = self.value(kernel);
        let xv = self.value(input);
        for b in 0..n {
            im2col(&xv[b * cin * h * w..(b + 1) * cin * h * w], &geom, &mut cols);
            gemm(kv, &cols, &mut value[b * cout * l..(b + 1) * cout * l], cout, r, l, false);
        }
        let tracks = self.tracks(&[input, kernel]);
        self.push("conv2d", vec![n, cout, oh, ow], value, Op::Conv2d { input, kernel, geom, out_channels: cout }, tracks)
    }

    /// Transposed 2-D convolution (the input-gradient of [`Tape::conv2d`]).
    /// `input` is `[N, Cin, H, W]`, `kernel` is `[Cin, Cout, kh, kw]`.
    pub fn conv_transpose2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        self.live()?;
        let (si, sk) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[0] || stride == 0 {
            return Err(shape_mismatch("conv_transpose2d", &si, &sk));
        }
        let (n, cin, h, w) = (si[0], si[1], si[2], si[3]);
        let (cout, kh, kw) = (sk[1], sk[2], sk[3]);
        let (oh, ow) = match (
            conv_transpose_out_dim(h, kh, stride, padding),
            conv_transpose_out_dim(w, kw, stride, padding),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => return Err(shape_mismatch("conv_transpose2d", &si, &sk)),
        };
        // Geometry of the adjoint convolution: output image -> input-sized map.
        let geom = ConvGeometry { channels: cout, height: oh, width: ow, kernel_h: kh, kernel_w: kw, stride, padding, out_h: h, out_w: w };
        let (r, l) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![T::zero(); r * l];
        let mut value = vec![T::zero(); n * cout * oh * ow];
        let kv = self.value(kernel);
        let xv = self.value(input);
        for b in 0..n {
            gemm_tn(kv, &xv[b * cin * l..(b + 1) * cin * l], &mut cols, cin, r, l, false);
            col2im(&cols, &geom, &mut value[b * cout * oh * ow..(b + 1) * cout * oh * ow]);
        }
        let tracks = self.tracks(&[input, kernel]);
        self.push(
            "conv_transpose2d",
            vec![n, cout, oh, ow],
            value,
            Op::ConvTranspose2d { input, kernel, geom, in_channels: cin },
            tracks,
        )
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        self.live()?;
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let tracks = self.tracks(&[a]);
        self.push(name, shape, value, op, tracks)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        self.unary("leaky_relu", a, |x| if x > T::zero() { x } else { x * slope }, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.live()?;
        if numel(shape) != self.value(a).len() || shape.iter().any(|&d| d == 0) {
            return Err(shape_mismatch("reshape", self.shape(a), shape));
        }
        let value = self.value(a).to_vec();
        let tracks = self.tracks(&[a]);
        self.push("reshape", shape.to_vec(), value, Op::Reshape(a), tracks)
    }

    /// Non-overlapping `factor × factor` mean pooling of `[N, C, H, W]`.
    pub fn avg_pool2d(&mut self, a: Var, factor: usize) -> Result<Var> {
        self.live()?;
        let s = self.shape(a).to_vec();
        if s.len() != 4 || factor == 0 || s[2] % factor != 0 || s[3] % factor != 0 {
            return Err(Error::Dimension(format!("avg_pool2d: factor {factor} does not tile shape {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / factor, w / factor);
        let x = self.value(a);
        let norm = T::one() / T::from_usize(factor * factor);
        let mut value = vec![T::zero(); n * c * oh * ow];
        for plane in 0..n * c {
            for i in 0..h {
                for j in 0..w {
                    value[(plane * oh + i / factor) * ow + j / factor] += x[(plane * h + i) * w + j] * norm;
                }
            }
        }
        let tracks = self.tracks(&[a]);
        self.push("avg_pool2d", vec![n, c, oh, ow], value, Op::AvgPool2d(a, factor), tracks)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.live()?;
        let s: T = self.value(a).iter().copied().sum();
        let tracks = self.tracks(&[a]);
        self.push("sum", Vec::new(), vec![s], Op::Sum(a), tracks)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.live()?;
        let v = self.value(a);
        let s: T = v.iter().copied().sum::<T>() / T::from_usize(v.len());
        let tracks = self.tracks(&[a]);
        self.push("mean", Vec::new(), vec![s], Op::Mean(a), tracks)
    }

    /// Batch normalization over every axis but the channel axis (axis 1).
    pub fn batchnorm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: BatchNormMode,
    ) -> Result<Var> {
        self.live()?;
        let xs = self.shape(input).to_vec();
        if xs.len() < 2 || self.shape(gamma) != [xs[1]] || self.shape(beta) != [xs[1]] || stats.mean.len() != xs[1] {
            return Err(shape_mismatch("batchnorm", &xs, self.shape(gamma)));
        }
        let (n, c) = (xs[0], xs[1]);
        let spatial = numel(&xs[2..]);
        let m = n * spatial;
        let x = self.value(input);
        let batch_stats = mode != BatchNormMode::Eval;
        let mut inv_std = vec![T::zero(); c];
        let mut mean = vec![T::zero(); c];
        for ch in 0..c {
            let (mu, var) = if batch_stats {
                let mut s = T::zero();
                for b in 0..n {
                    let base = (b * c + ch) * spatial;
                    s += x[base..base + spatial].iter().copied().sum();
                }
                let mu = s / T::from_usize(m);
                let mut q = T::zero();
                for b in 0..n {
                    let base = (b * c + ch) * spatial;
                    for &v in &x[base..base + spatial] {
                        q += (v - mu) * (v - mu);
                    }
                }
                (mu, q / T::from_usize(m))
            } else {
                (stats.mean[ch], stats.var[ch])
            };
            mean[ch] = mu;
            inv_std[ch] = T::one() / (var + stats.eps).sqrt();
            if mode == BatchNormMode::Train {
                let unbiased = if m > 1 { var * T::from_usize(m) / T::from_usize(m - 1) } else { var };
                let mom = stats.momentum;
                stats.mean[ch] = (T::one() - mom) * stats.mean[ch] + mom * mu;
                stats.var[ch] = (T::one() - mom) * stats.var[ch] + mom * unbiased;
            }
        }
        let g = self.value(gamma);
        let be = self.value(beta);
        let mut xhat = vec![T::zero(); x.len()];
        let mut value = vec![T::zero(); x.len()];
        for (i, (&xv, (xh, out))) in x.iter().zip(xhat.iter_mut().zip(value.iter_mut())).enumerate() {
            let ch = (i / spatial) % c;
            *xh = (xv - mean[ch]) * inv_std[ch];
            *out = g[ch] * *xh + be[ch];
        }
        let tracks = self.tracks(&[input, gamma, beta]);
        self.push("batchnorm", xs, value, Op::BatchNorm { input, gamma, beta, xhat, inv_std, batch_stats }, tracks)
    }

    /// Mean binary cross-entropy of probabilities against targets.
    pub fn bce_loss(&mut self, pred: Var, targets: &Tensor<T>) -> Result<Var> {
        self.live()?;
        if self.shape(pred) != targets.shape() {
            return Err(shape_mismatch("bce_loss", self.shape(pred), targets.shape()));
        }
        let p = self.value(pred);
        if let Some(bad) = p.iter().find(|&&v| !(v > T::zero() && v < T::one())) {
            return Err(Error::Domain(format!("bce_loss prediction {:?} outside (0, 1)", bad)));
        }
        check_targets(targets.data())?;
        let n = T::from_usize(p.len());
        let loss = p
            .iter()
            .zip(targets.data())
            .map(|(&p, &t)| -(t * p.ln() + (T::one() - t) * (T::one() - p).ln()))
            .sum::<T>()
            / n;
        let tracks = self.tracks(&[pred]);
        self.push("bce_loss", Vec::new(), vec![loss], Op::Bce { pred, targets: targets.data().to_vec() }, tracks)
    }

    /// `bce_loss(sigmoid(logits), targets)` evaluated in a form that cannot overflow.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor<T>) -> Result<Var> {
        self.live()?;
        if self.shape(logits) != targets.shape() {
            return Err(shape_mismatch("bce_with_logits", self.shape(logits), targets.shape()));
        }
        check_targets(targets.data())?;
        let x = self.value(logits);
        let n = T::from_usize(x.len());
        let loss = x
            .iter()
            .zip(targets.data())
            .map(|(&x, &t)| x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p())
            .sum::<T>()
            / n;
        let tracks = self.tracks(&[logits]);
        self.push(
            "bce_with_logits",
            Vec::new(),
            vec![loss],
            Op::BceWithLogits { logits, targets: targets.data().to_vec() },
            tracks,
        )
    }

    /// Mean softmax cross-entropy of `[N, K]` logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.live()?;
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "cross_entropy: logits {:?} for {} labels",
                s,
                labels.len()
            )));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Domain(format!("label {bad} outside 0..{k}")));
        }
        let x = self.value(logits);
        let mut probs = vec![T::zero(); x.len()];
        let mut loss = T::zero();
        for (i, &label) in labels.iter().enumerate() {
            let row = &x[i * k..(i + 1) * k];
            let pr = &mut probs[i * k..(i + 1) * k];
            let lse = softmax_into(row, pr);
            loss += lse - row[label];
        }
        loss /= T::from_usize(labels.len());
        let tracks = self.tracks(&[logits]);
        self.push("cross_entropy", Vec::new(), vec![loss], Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, tracks)
    }

    /// Differentiates the scalar `loss` with respect to every leaf and consumes the tape.
    ///
    /// Leaves the loss does not depend on receive zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        self.live()?;
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, found shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracks {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            if node.leaf {
                out[i] = Some(g);
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.leaf && out[i].is_none() {
                out[i] = Some(vec![T::zero(); node.value.len()]);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].tracks;
        match &node.op {
            Op::Input => {}
            Op::Add(a, b) => {
                accumulate(grads, nodes, *a, |d| add_into(d, g));
                accumulate(grads, nodes, *b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                accumulate(grads, nodes, *a, |d| add_into(d, g));
                accumulate(grads, nodes, *b, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                accumulate(grads, nodes, *a, |d| {
                    d.iter_mut().zip(g.iter().zip(bv)).for_each(|(d, (&g, &y))| *d += g * y)
                });
                accumulate(grads, nodes, *b, |d| {
                    d.iter_mut().zip(g.iter().zip(av)).for_each(|(d, (&g, &x))| *d += g * x)
                });
            }
            Op::Scale(a, c) => {
                accumulate(grads, nodes, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *c));
            }
            Op::BiasAdd(x, b) => {
                accumulate(grads, nodes, *x, |d| add_into(d, g));
                let c = nodes[b.0].value.len();
                let spatial = numel(&node.shape[2..]);
                accumulate(grads, nodes, *b, |d| {
                    for (i, &gv) in g.iter().enumerate() {
                        d[(i / spatial) % c] += gv;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (&nodes[a.0].shape, &nodes[b.0].shape);
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                accumulate(grads, nodes, *a, |d| gemm_nt(g, bv, d, m, k, n, true));
                accumulate(grads, nodes, *b, |d| gemm_tn(av, g, d, m, k, n, true));
            }
            Op::Conv2d { input, kernel, geom, out_channels } => {
                let n = nodes[input.0].shape[0];
                let (r, l) = (geom.col_rows(), geom.col_cols());
                let img = geom.channels * geom.height * geom.width;
                let cout = *out_channels;
                let (xv, kv) = (&nodes[input.0].value, &nodes[kernel.0].value);
                let mut cols = vec![T::zero(); r * l];
                if wants(*kernel) {
                    let mut dk = vec![T::zero(); kv.len()];
                    for b in 0..n {
                        im2col(&xv[b * img..(b + 1) * img], geom, &mut cols);
                        gemm_nt(&g[b * cout * l..(b + 1) * cout * l], &cols, &mut dk, cout, r, l, true);
                    }
                    accumulate(grads, nodes, *kernel, |d| add_into(d, &dk));
                }
                if wants(*input) {
                    accumulate(grads, nodes, *input, |d| {
                        for b in 0..n {
                            gemm_tn(kv, &g[b * cout * l..(b + 1) * cout * l], &mut cols, cout, r, l, false);
                            col2im(&cols, geom, &mut d[b * img..(b + 1) * img]);
                        }
                    });
                }
            }
            Op::ConvTranspose2d { input, kernel, geom, in_channels } => {
                let n = nodes[input.0].shape[0];
                let (r, l) = (geom.col_rows(), geom.col_cols());
                let out_img = geom.channels * geom.height * geom.width;
                let cin = *in_channels;
                let (xv, kv) = (&nodes[input.0].value, &nodes[kernel.0].value);
                let mut cols = vec![T::zero(); r * l];
                let mut dk = if wants(*kernel) { Some(vec![T::zero(); kv.len()]) } else { None };
                let mut dx = if wants(*input) { Some(vec![T::zero(); xv.len()]) } else { None };
                for b in 0..n {
                    im2col(&g[b * out_img..(b + 1) * out_img], geom, &mut cols);
                    if let Some(dx) = dx.as_mut() {
                        gemm(kv, &cols, &mut dx[b * cin * l..(b + 1) * cin * l], cin, r, l, true);
                    }
                    if let Some(dk) = dk.as_mut() {
                        gemm_nt(&xv[b * cin * l..(b + 1) * cin * l], &cols, dk, cin, r, l, true);
                    }
                }
                if let Some(dk) = dk {
                    accumulate(grads, nodes, *kernel, |d| add_into(d, &dk));
                }
                if let Some(dx) = dx {
                    accumulate(grads, nodes, *input, |d| add_into(d, &dx));
                }
            }
            Op::Relu(a) => {
                let y = &node.value;
                accumulate(grads, nodes, *a, |d| {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(y) {
                        if y > T::zero() {
                            *d += g;
                        }
                    }
                });
            }
            Op::LeakyRelu(a, slope) => {
                let x = &nodes[a.0].value;
                accumulate(grads, nodes, *a, |d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                        *d += if x > T::zero() { g } else { g * *slope };
                    }
                });
            }
            Op::Tanh(a) => {
                let y = &node.value;
                accumulate(grads, nodes, *a, |d| {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(y) {
                        *d += g * (T::one() - y * y);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accumulate(grads, nodes, *a, |d| {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(y) {
                        *d += g * y * (T::one() - y);
                    }
                });
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, batch_stats } => {
                let s = &node.shape;
                let (n, c) = (s[0], s[1]);
                let spatial = numel(&s[2..]);
                let m = T::from_usize(n * spatial);
                let gam = &nodes[gamma.0].value;
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for (i, (&gv, &xh)) in g.iter().zip(xhat).enumerate() {
                    let ch = (i / spatial) % c;
                    sum_g[ch] += gv;
                    sum_gx[ch] += gv * xh;
                }
                accumulate(grads, nodes, *gamma, |d| add_into(d, &sum_gx));
                accumulate(grads, nodes, *beta, |d| add_into(d, &sum_g));
                accumulate(grads, nodes, *input, |d| {
                    for (i, (d, (&gv, &xh))) in d.iter_mut().zip(g.iter().zip(xhat)).enumerate() {
                        let ch = (i / spatial) % c;
                        let scale = gam[ch] * inv_std[ch];
                        *d += if *batch_stats {
                            scale * (gv - sum_g[ch] / m - xh * sum_gx[ch] / m)
                        } else {
                            scale * gv
                        };
                    }
                });
            }
            Op::Reshape(a) => accumulate(grads, nodes, *a, |d| add_into(d, g)),
            Op::AvgPool2d(a, factor) => {
                let s = &nodes[a.0].shape;
                let (h, w) = (s[2], s[3]);
                let (oh, ow) = (h / factor, w / factor);
                let norm = T::one() / T::from_usize(factor * factor);
                accumulate(grads, nodes, *a, |d| {
                    for plane in 0..s[0] * s[1] {
                        for i in 0..h {
                            for j in 0..w {
                                d[(plane * h + i) * w + j] += g[(plane * oh + i / factor) * ow + j / factor] * norm;
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => accumulate(grads, nodes, *a, |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let len = T::from_usize(nodes[a.0].value.len());
                accumulate(grads, nodes, *a, |d| d.iter_mut().for_each(|d| *d += g[0] / len));
            }
            Op::Bce { pred, targets } => {
                let p = &nodes[pred.0].value;
                let n = T::from_usize(p.len());
                accumulate(grads, nodes, *pred, |d| {
                    for ((d, &p), &t) in d.iter_mut().zip(p).zip(targets) {
                        *d += g[0] * (p - t) / (p * (T::one() - p)) / n;
                    }
                });
            }
            Op::BceWithLogits { logits, targets } => {
                let x = &nodes[logits.0].value;
                let n = T::from_usize(x.len());
                accumulate(grads, nodes, *logits, |d| {
                    for ((d, &x), &t) in d.iter_mut().zip(x).zip(targets) {
                        *d += g[0] * (sigmoid(x) - t) / n;
                    }
                });
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = nodes[logits.0].shape[1];
                let n = T::from_usize(labels.len());
                accumulate(grads, nodes, *logits, |d| {
                    for (i, &label) in labels.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == label { T::one() } else { T::zero() };
                            d[i * k + j] += g[0] * (probs[i * k + j] - onehot) / n;
                        }
                    }
                });
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var, f: impl FnOnce(&mut [T])) {
    let parent = &nodes[v.0];
    if !parent.tracks {
        return;
    }
    let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); parent.value.len()]);
    f(buf);
}

fn add_into<T: Scalar>(d: &mut [T], g: &[T]) {
    d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
}

fn check_targets<T: Scalar>(t: &[T]) -> Result<()> {
    match t.iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
        Some(bad) => Err(Error::Domain(format!("target {:?} outside [0, 1]", bad))),
        None => Ok(()),
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Writes `softmax(row)` into `out` and returns `logsumexp(row)`.
pub(crate) fn softmax_into<T: Scalar>(row: &[T], out: &mut [T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    max + z.ln()
}

#[cfg(test)]
#[path = "tape_tests.rs"]
mod tests;
