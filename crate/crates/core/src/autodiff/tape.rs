use super::ops;
use super::{AutodiffError, Result, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

enum Op {
    Leaf,
    /// 3×3 cross-correlation, stride 1, same zero-padding.
    Conv2d { x: NodeId, kernels: NodeId, bias: NodeId },
    /// 2×2 max pool; odd extents replicate the last row/column. `argmax`
    /// holds, per output cell, the flat source index that won.
    MaxPool2x2 { x: NodeId, argmax: Vec<u32> },
    Relu { x: NodeId },
    Dense { x: NodeId, weights: NodeId, bias: NodeId },
    GlobalAvgPool { x: NodeId },
    SoftmaxCrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    Gram { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    MulScalar { x: NodeId, c: f64 },
    AddScalar { x: NodeId },
    Square { x: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
    Sse { a: NodeId, b: NodeId },
    Exp { x: NodeId },
    Sqrt { x: NodeId },
    SumAxis0 { x: NodeId },
    SumAxis1 { x: NodeId },
    /// x minus a scalar-shaped node, broadcast over x.
    SubBroadcast { x: NodeId, s: NodeId },
    /// x divided by a scalar-shaped node, broadcast over x.
    DivBroadcast { x: NodeId, s: NodeId },
    ClampMin { x: NodeId, c: f64 },
    Reshape { x: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2x2 { .. } => "maxpool2x2",
            Op::Relu { .. } => "relu",
            Op::Dense { .. } => "dense",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Gram { .. } => "gram",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::MulScalar { .. } => "mul_scalar",
            Op::AddScalar { .. } => "add_scalar",
            Op::Square { .. } => "square",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Sse { .. } => "sse",
            Op::Exp { .. } => "exp",
            Op::Sqrt { .. } => "sqrt",
            Op::SumAxis0 { .. } => "sum_axis0",
            Op::SumAxis1 { .. } => "sum_axis1",
            Op::SubBroadcast { .. } => "sub_broadcast",
            Op::DivBroadcast { .. } => "div_broadcast",
            Op::ClampMin { .. } => "clamp_min",
            Op::Reshape { .. } => "reshape",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Records a forward computation; nodes are stored in topological
/// (insertion) order, which is also the fixed reverse order of `backward`.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node { op, value, needs_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Insert a leaf. `requires_grad` marks it as a differentiation target.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<NodeId> {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.leaf(value, false)
    }

    pub fn conv2d(&mut self, x: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xs, ks, bs) = (
            self.value(x).shape().to_vec(),
            self.value(kernels).shape().to_vec(),
            self.value(bias).shape().to_vec(),
        );
        if xs.len() != 3 || ks.len() != 4 || ks[2] != 3 || ks[3] != 3 || ks[1] != xs[0] {
            return Err(AutodiffError::ShapeMismatch { op: "conv2d", lhs: xs, rhs: ks });
        }
        if bs != [ks[0]] {
            return Err(AutodiffError::ShapeMismatch { op: "conv2d", lhs: ks, rhs: bs });
        }
        let (c_in, h, w) = (xs[0], xs[1], xs[2]);
        let c_out = ks[0];
        let hw = h * w;
        let mut patches = vec![0.0; c_in * 9 * hw];
        ops::im2col3x3(self.value(x).data(), c_in, h, w, &mut patches);
        let mut out = vec![0.0; c_out * hw];
        ops::gemm_nn(self.value(kernels).data(), &patches, c_out, c_in * 9, hw, &mut out);
        let bias_data = self.value(bias).data();
        for (o, row) in out.chunks_mut(hw).enumerate() {
            let bv = bias_data[o];
            for v in row {
                *v += bv;
            }
        }
        let needs = self.needs(x) || self.needs(kernels) || self.needs(bias);
        self.push(
            Op::Conv2d { x, kernels, bias },
            Tensor::new(vec![c_out, h, w], out)?,
            needs,
        )
    }

    pub fn maxpool2x2(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 3 {
            return Err(AutodiffError::ShapeMismatch { op: "maxpool2x2", lhs: xs, rhs: vec![] });
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (out, argmax) = ops::maxpool2x2(self.value(x).data(), c, h, w);
        let needs = self.needs(x);
        self.push(
            Op::MaxPool2x2 { x, argmax },
            Tensor::new(vec![c, h.div_ceil(2), w.div_ceil(2)], out)?,
            needs,
        )
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.map_unary(x, |v| v.max(0.0));
        let needs = self.needs(x);
        self.push(Op::Relu { x }, value, needs)
    }

    pub fn dense(&mut self, x: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(weights).shape().to_vec(),
            self.value(bias).shape().to_vec(),
        );
        if xs.len() != 1 || ws.len() != 2 || ws[1] != xs[0] || bs != [ws[0]] {
            return Err(AutodiffError::ShapeMismatch { op: "dense", lhs: xs, rhs: ws });
        }
        let (n_out, n_in) = (ws[0], ws[1]);
        let xv = self.value(x).data();
        let wv = self.value(weights).data();
        let bv = self.value(bias).data();
        let mut out = vec![0.0; n_out];
        for o in 0..n_out {
            let row = &wv[o * n_in..(o + 1) * n_in];
            let mut acc = bv[o];
            for (a, b) in row.iter().zip(xv) {
                acc += a * b;
            }
            out[o] = acc;
        }
        let needs = self.needs(x) || self.needs(weights) || self.needs(bias);
        self.push(Op::Dense { x, weights, bias }, Tensor::vector(out), needs)
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 3 {
            return Err(AutodiffError::ShapeMismatch { op: "global_avg_pool", lhs: xs, rhs: vec![] });
        }
        let hw = (xs[1] * xs[2]) as f64;
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(xs[1] * xs[2])
            .map(|plane| plane.iter().sum::<f64>() / hw)
            .collect();
        let needs = self.needs(x);
        self.push(Op::GlobalAvgPool { x }, Tensor::vector(out), needs)
    }

    /// Cross-entropy of softmax(logits) against a class index; scalar output.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let ls = self.value(logits).shape().to_vec();
        if ls.len() != 1 || label >= ls[0] {
            return Err(AutodiffError::InvalidInput {
                op: "softmax_cross_entropy",
                detail: format!("logits shape {:?}, label {}", ls, label),
            });
        }
        let lv = self.value(logits).data();
        let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let loss = z.ln() - (lv[label] - max);
        let needs = self.needs(logits);
        self.push(
            Op::SoftmaxCrossEntropy { logits, label, probs },
            Tensor::scalar(loss),
            needs,
        )
    }

    /// Gram matrix of C×H×W features: G[i,j] = Σ_{h,w} x_i · x_j.
    pub fn gram(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 3 {
            return Err(AutodiffError::ShapeMismatch { op: "gram", lhs: xs, rhs: vec![] });
        }
        let (c, hw) = (xs[0], xs[1] * xs[2]);
        let mut out = vec![0.0; c * c];
        let data = self.value(x).data();
        ops::gemm_nt(data, data, c, hw, c, &mut out);
        let needs = self.needs(x);
        self.push(Op::Gram { x }, Tensor::new(vec![c, c], out)?, needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip_binary("add", a, b, |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Add { a, b }, value, needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip_binary("sub", a, b, |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Sub { a, b }, value, needs)
    }

    pub fn mul_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let value = self.map_unary(x, |v| v * c);
        let needs = self.needs(x);
        self.push(Op::MulScalar { x, c }, value, needs)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let value = self.map_unary(x, |v| v + c);
        let needs = self.needs(x);
        self.push(Op::AddScalar { x }, value, needs)
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.map_unary(x, |v| v * v);
        let needs = self.needs(x);
        self.push(Op::Square { x }, value, needs)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Op::Sum { x }, Tensor::scalar(s), needs)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).numel() as f64;
        let s = self.value(x).data().iter().sum::<f64>() / n;
        let needs = self.needs(x);
        self.push(Op::Mean { x }, Tensor::scalar(s), needs)
    }

    /// Sum of squared differences; scalar output.
    pub fn sse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "sse",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let s: f64 = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Sse { a, b }, Tensor::scalar(s), needs)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.map_unary(x, f64::exp);
        let needs = self.needs(x);
        self.push(Op::Exp { x }, value, needs)
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.map_unary(x, f64::sqrt);
        let needs = self.needs(x);
        self.push(Op::Sqrt { x }, value, needs)
    }

    /// Column sums of a 2-D tensor: out[j] = Σ_i x[i,j].
    pub fn sum_axis0(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 2 {
            return Err(AutodiffError::ShapeMismatch { op: "sum_axis0", lhs: xs, rhs: vec![] });
        }
        let (r, c) = (xs[0], xs[1]);
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let _ = r;
        let needs = self.needs(x);
        self.push(Op::SumAxis0 { x }, Tensor::vector(out), needs)
    }

    /// Row sums of a 2-D tensor: out[i] = Σ_j x[i,j].
    pub fn sum_axis1(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 2 {
            return Err(AutodiffError::ShapeMismatch { op: "sum_axis1", lhs: xs, rhs: vec![] });
        }
        let c = xs[1];
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(c)
            .map(|row| row.iter().sum())
            .collect();
        let needs = self.needs(x);
        self.push(Op::SumAxis1 { x }, Tensor::vector(out), needs)
    }

    /// x − s with s a scalar-shaped node.
    pub fn sub_broadcast(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.check_scalar("sub_broadcast", s)?;
        let sv = self.value(s).scalar_value();
        let value = self.map_unary(x, |v| v - sv);
        let needs = self.needs(x) || self.needs(s);
        self.push(Op::SubBroadcast { x, s }, value, needs)
    }

    /// x / s with s a scalar-shaped node.
    pub fn div_broadcast(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.check_scalar("div_broadcast", s)?;
        let sv = self.value(s).scalar_value();
        let value = self.map_unary(x, |v| v / sv);
        let needs = self.needs(x) || self.needs(s);
        self.push(Op::DivBroadcast { x, s }, value, needs)
    }

    /// Elementwise max(x, c).
    pub fn clamp_min(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let value = self.map_unary(x, |v| v.max(c));
        let needs = self.needs(x);
        self.push(Op::ClampMin { x, c }, value, needs)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        self.push(Op::Reshape { x }, value, needs)
    }

    fn map_unary(&self, x: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| f(a)).collect();
        Tensor::new(v.shape().to_vec(), data).expect("shape preserved")
    }

    fn zip_binary(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    fn check_scalar(&self, op: &'static str, s: NodeId) -> Result<()> {
        if !self.value(s).is_scalar() {
            return Err(AutodiffError::InvalidInput {
                op,
                detail: format!("expected scalar node, got shape {:?}", self.value(s).shape()),
            });
        }
        Ok(())
    }

    /// Reverse pass from a scalar loss node. Gradient accumulation follows the
    /// fixed reverse insertion order, so results are deterministic.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(AutodiffError::InvalidInput {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::new(
                self.value(loss).shape().to_vec(),
                vec![1.0],
            )?);
        }
        for i in (0..=loss.0).rev() {
            let Some(grad) = grads[i].take() else {
                continue;
            };
            if !grad.all_finite() {
                return Err(AutodiffError::NonFiniteGradient { op: self.nodes[i].op.name() });
            }
            self.propagate(i, &grad, &mut grads)?;
            grads[i] = Some(grad);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let g = grad.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, kernels, bias } => {
                let xs = self.value(*x).shape();
                let (c_in, h, w) = (xs[0], xs[1], xs[2]);
                let c_out = self.value(*kernels).shape()[0];
                let hw = h * w;
                if self.needs(*bias) {
                    let db: Vec<f64> = g.chunks(hw).map(|row| row.iter().sum()).collect();
                    self.accumulate(*bias, Tensor::vector(db), grads)?;
                }
                let need_k = self.needs(*kernels);
                let need_x = self.needs(*x);
                if need_k || need_x {
                    let mut patches = vec![0.0; c_in * 9 * hw];
                    ops::im2col3x3(self.value(*x).data(), c_in, h, w, &mut patches);
                    if need_k {
                        let mut dk = vec![0.0; c_out * c_in * 9];
                        ops::gemm_nt(g, &patches, c_out, hw, c_in * 9, &mut dk);
                        self.accumulate(
                            *kernels,
                            Tensor::new(vec![c_out, c_in, 3, 3], dk)?,
                            grads,
                        )?;
                    }
                    if need_x {
                        let kv = self.value(*kernels).data();
                        let mut kt = vec![0.0; c_in * 9 * c_out];
                        for o in 0..c_out {
                            for r in 0..c_in * 9 {
                                kt[r * c_out + o] = kv[o * c_in * 9 + r];
                            }
                        }
                        let mut dcols = vec![0.0; c_in * 9 * hw];
                        ops::gemm_nn(&kt, g, c_in * 9, c_out, hw, &mut dcols);
                        let mut dx = vec![0.0; c_in * hw];
                        ops::col2im3x3(&dcols, c_in, h, w, &mut dx);
                        self.accumulate(*x, Tensor::new(vec![c_in, h, w], dx)?, grads)?;
                    }
                }
            }
            Op::MaxPool2x2 { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                let dxd = dx.data_mut();
                for (cell, &src) in argmax.iter().enumerate() {
                    dxd[src as usize] += g[cell];
                }
                self.accumulate(*x, dx, grads)?;
            }
            Op::Relu { x } => {
                self.accum_masked(*x, g, grads, |v| v > 0.0)?;
            }
            Op::Dense { x, weights, bias } => {
                let ws = self.value(*weights).shape();
                let (n_out, n_in) = (ws[0], ws[1]);
                let wv = self.value(*weights).data();
                let xv = self.value(*x).data();
                if self.needs(*bias) {
                    self.accumulate(*bias, Tensor::vector(g.to_vec()), grads)?;
                }
                if self.needs(*weights) {
                    let mut dw = vec![0.0; n_out * n_in];
                    for o in 0..n_out {
                        let go = g[o];
                        let row = &mut dw[o * n_in..(o + 1) * n_in];
                        for (d, &xvv) in row.iter_mut().zip(xv) {
                            *d = go * xvv;
                        }
                    }
                    self.accumulate(*weights, Tensor::new(vec![n_out, n_in], dw)?, grads)?;
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; n_in];
                    for o in 0..n_out {
                        let go = g[o];
                        let row = &wv[o * n_in..(o + 1) * n_in];
                        for (d, &wvv) in dx.iter_mut().zip(row) {
                            *d += go * wvv;
                        }
                    }
                    self.accumulate(*x, Tensor::vector(dx), grads)?;
                }
            }
            Op::GlobalAvgPool { x } => {
                let xs = self.value(*x).shape();
                let hw = xs[1] * xs[2];
                let scale = 1.0 / hw as f64;
                let mut dx = vec![0.0; xs[0] * hw];
                for (c, plane) in dx.chunks_mut(hw).enumerate() {
                    plane.fill(g[c] * scale);
                }
                self.accumulate(*x, Tensor::new(xs.to_vec(), dx)?, grads)?;
            }
            Op::SoftmaxCrossEntropy { logits, label, probs } => {
                let gs = g[0];
                let mut dl: Vec<f64> = probs.iter().map(|&p| p * gs).collect();
                dl[*label] -= gs;
                self.accumulate(*logits, Tensor::vector(dl), grads)?;
            }
            Op::Gram { x } => {
                // dX = (dG + dGᵀ) · X
                let xs = self.value(*x).shape();
                let (c, hw) = (xs[0], xs[1] * xs[2]);
                let mut sym = vec![0.0; c * c];
                for i2 in 0..c {
                    for j2 in 0..c {
                        sym[i2 * c + j2] = g[i2 * c + j2] + g[j2 * c + i2];
                    }
                }
                let mut dx = vec![0.0; c * hw];
                ops::gemm_nn(&sym, self.value(*x).data(), c, c, hw, &mut dx);
                self.accumulate(*x, Tensor::new(xs.to_vec(), dx)?, grads)?;
            }
            Op::Add { a, b } => {
                self.accumulate(*a, grad.clone(), grads)?;
                self.accumulate(*b, grad.clone(), grads)?;
            }
            Op::Sub { a, b } => {
                self.accumulate(*a, grad.clone(), grads)?;
                let neg = Tensor::new(grad.shape().to_vec(), g.iter().map(|v| -v).collect())?;
                self.accumulate(*b, neg, grads)?;
            }
            Op::MulScalar { x, c } => {
                let dx = Tensor::new(grad.shape().to_vec(), g.iter().map(|v| v * c).collect())?;
                self.accumulate(*x, dx, grads)?;
            }
            Op::AddScalar { x } => {
                self.accumulate(*x, grad.clone(), grads)?;
            }
            Op::Square { x } => {
                let xv = self.value(*x).data();
                let dx = xv.iter().zip(g).map(|(&v, &gg)| 2.0 * v * gg).collect();
                self.accumulate(*x, Tensor::new(self.value(*x).shape().to_vec(), dx)?, grads)?;
            }
            Op::Sum { x } => {
                let dx = Tensor::filled(self.value(*x).shape(), g[0]);
                self.accumulate(*x, dx, grads)?;
            }
            Op::Mean { x } => {
                let n = self.value(*x).numel() as f64;
                let dx = Tensor::filled(self.value(*x).shape(), g[0] / n);
                self.accumulate(*x, dx, grads)?;
            }
            Op::Sse { a, b } => {
                let gs = g[0];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let da: Vec<f64> =
                        av.iter().zip(bv).map(|(&x, &y)| 2.0 * (x - y) * gs).collect();
                    self.accumulate(*a, Tensor::new(self.value(*a).shape().to_vec(), da)?, grads)?;
                }
                if self.needs(*b) {
                    let db: Vec<f64> =
                        av.iter().zip(bv).map(|(&x, &y)| -2.0 * (x - y) * gs).collect();
                    self.accumulate(*b, Tensor::new(self.value(*b).shape().to_vec(), db)?, grads)?;
                }
            }
            Op::Exp { x } => {
                let ev = node.value.data();
                let dx = ev.iter().zip(g).map(|(&e, &gg)| e * gg).collect();
                self.accumulate(*x, Tensor::new(node.value.shape().to_vec(), dx)?, grads)?;
            }
            Op::Sqrt { x } => {
                let sv = node.value.data();
                let dx = sv.iter().zip(g).map(|(&s, &gg)| gg / (2.0 * s)).collect();
                self.accumulate(*x, Tensor::new(node.value.shape().to_vec(), dx)?, grads)?;
            }
            Op::SumAxis0 { x } => {
                let xs = self.value(*x).shape();
                let (r, c) = (xs[0], xs[1]);
                let mut dx = vec![0.0; r * c];
                for row in dx.chunks_mut(c) {
                    row.copy_from_slice(g);
                }
                self.accumulate(*x, Tensor::new(xs.to_vec(), dx)?, grads)?;
            }
            Op::SumAxis1 { x } => {
                let xs = self.value(*x).shape();
                let (r, c) = (xs[0], xs[1]);
                let mut dx = vec![0.0; r * c];
                for (i2, row) in dx.chunks_mut(c).enumerate() {
                    row.fill(g[i2]);
                }
                self.accumulate(*x, Tensor::new(xs.to_vec(), dx)?, grads)?;
            }
            Op::SubBroadcast { x, s } => {
                if self.needs(*x) {
                    self.accumulate(*x, grad.clone(), grads)?;
                }
                if self.needs(*s) {
                    let ds = -g.iter().sum::<f64>();
                    self.accumulate(*s, Tensor::scalar(ds), grads)?;
                }
            }
            Op::DivBroadcast { x, s } => {
                let sv = self.value(*s).scalar_value();
                if self.needs(*x) {
                    let dx = g.iter().map(|&gg| gg / sv).collect();
                    self.accumulate(*x, Tensor::new(grad.shape().to_vec(), dx)?, grads)?;
                }
                if self.needs(*s) {
                    let xv = self.value(*x).data();
                    let ds: f64 =
                        xv.iter().zip(g).map(|(&x2, &gg)| -gg * x2 / (sv * sv)).sum();
                    self.accumulate(*s, Tensor::scalar(ds), grads)?;
                }
            }
            Op::ClampMin { x, c } => {
                let c = *c;
                self.accum_masked(*x, g, grads, move |v| v > c)?;
            }
            Op::Reshape { x } => {
                let dx = Tensor::new(self.value(*x).shape().to_vec(), g.to_vec())?;
                self.accumulate(*x, dx, grads)?;
            }
        }
        Ok(())
    }

    fn accumulate(&self, id: NodeId, contrib: Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        if !self.needs(id) {
            return Ok(());
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(contrib.data()) {
                    *e += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
        Ok(())
    }

    fn accum_masked(
        &self,
        x: NodeId,
        g: &[f64],
        grads: &mut [Option<Tensor>],
        pass: impl Fn(f64) -> bool,
    ) -> Result<()> {
        if !self.needs(x) {
            return Ok(());
        }
        let xv = self.value(x);
        let dx = xv
            .data()
            .iter()
            .zip(g)
            .map(|(&v, &gg)| if pass(v) { gg } else { 0.0 })
            .collect();
        self.accumulate(x, Tensor::new(xv.shape().to_vec(), dx)?, grads)
    }
}

/// Result of a backward pass: per-node gradients of the loss.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id` if any flowed there.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for `id`; zero tensor of the node's shape when the loss never
    /// touched it.
    pub fn get_or_zeros(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
}
