use super::kernels::{self, ConvDims, Resample};
use super::{AutogradError, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Expand(Var),
    SumTo(Var),
    Reshape(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Conv2d { x: Var, w: Var, pad: usize },
    Conv2dInputGrad { g: Var, w: Var, pad: usize },
    Conv2dWeightGrad { x: Var, g: Var, pad: usize },
    LeakyRelu { x: Var, slope: f64 },
    LeakyMask { g: Var, x: Var, slope: f64 },
    Abs(Var),
    SignMask { g: Var, x: Var },
    Softplus(Var),
    Sigmoid(Var),
    Sqrt(Var),
    Recip(Var),
    Resample(Var, Resample),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match *self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![a, b],
            Neg(a) | Scale(a, _) | AddScalar(a) | Expand(a) | SumTo(a) | Reshape(a)
            | Transpose(a) | Abs(a) | Softplus(a) | Sigmoid(a) | Sqrt(a) | Recip(a)
            | Resample(a, _) => vec![a],
            Conv2d { x, w, .. } => vec![x, w],
            Conv2dInputGrad { g, w, .. } => vec![g, w],
            Conv2dWeightGrad { x, g, .. } => vec![x, g],
            LeakyRelu { x, .. } => vec![x],
            LeakyMask { g, x, .. } | SignMask { g, x } => vec![g, x],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Append-only record of executed operations.
///
/// Node ids are assigned in execution order, so every node's inputs precede
/// it and reverse id order is a valid topological order for backward.
#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient stored on a leaf by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Returns a copy of `v` that is cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|&i| self.nodes[i.0].requires_grad);
        let value = Tensor::new(shape, data).expect("kernel produced inconsistent shape");
        self.push(value, op, requires_grad)
    }

    fn shape_err(&self, op: &'static str, vars: &[Var]) -> AutogradError {
        let shapes: Vec<_> = vars.iter().map(|v| self.shape(*v).to_vec()).collect();
        AutogradError::Shape {
            op,
            detail: format!("incompatible input shapes {shapes:?}"),
        }
    }

    fn unary_map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = &self.nodes[a.0].value;
        let data = t.data().iter().map(|&v| f(v)).collect();
        let shape = t.shape().to_vec();
        self.record(shape, data, op)
    }

    /// Broadcasts `a` and `b` to a common shape, recording expansions as needed.
    fn align(&mut self, name: &'static str, a: Var, b: Var) -> Result<(Var, Var), AutogradError> {
        if self.shape(a) == self.shape(b) {
            return Ok((a, b));
        }
        let shape = kernels::broadcast_shape(self.shape(a), self.shape(b))
            .ok_or_else(|| self.shape_err(name, &[a, b]))?;
        Ok((self.expand(a, &shape)?, self.expand(b, &shape)?))
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.record(shape, data, op)
    }

    // ---- elementwise -------------------------------------------------------

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (a, b) = self.align("add", a, b)?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (a, b) = self.align("sub", a, b)?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (a, b) = self.align("mul", a, b)?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary_map(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary_map(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary_map(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.zip_map(a, a, Op::Mul(a, a), |x, y| x * y)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary_map(x, Op::LeakyRelu { x, slope }, |v| if v > 0.0 { v } else { slope * v })
    }

    /// `g` scaled by the leaky-rectifier derivative evaluated at `x`.
    ///
    /// The derivative at exactly zero is the negative-side slope.
    fn leaky_mask(&mut self, g: Var, x: Var, slope: f64) -> Var {
        self.zip_map(g, x, Op::LeakyMask { g, x, slope }, |gv, xv| {
            if xv > 0.0 {
                gv
            } else {
                slope * gv
            }
        })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary_map(x, Op::Abs(x), f64::abs)
    }

    /// `g * sign(x)` with `sign(0) = 0`.
    fn sign_mask(&mut self, g: Var, x: Var) -> Var {
        self.zip_map(g, x, Op::SignMask { g, x }, |gv, xv| {
            if xv > 0.0 {
                gv
            } else if xv < 0.0 {
                -gv
            } else {
                0.0
            }
        })
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary_map(x, Op::Softplus(x), |v| v.max(0.0) + (-v.abs()).exp().ln_1p())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary_map(x, Op::Sigmoid(x), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    /// Square root. Its derivative at zero is taken to be zero.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary_map(x, Op::Sqrt(x), f64::sqrt)
    }

    /// Reciprocal with `recip(0) = 0`.
    pub fn recip(&mut self, x: Var) -> Var {
        self.unary_map(x, Op::Recip(x), |v| if v == 0.0 { 0.0 } else { 1.0 / v })
    }

    // ---- shape -------------------------------------------------------------

    pub fn expand(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutogradError> {
        let src = self.shape(a).to_vec();
        if src == shape {
            return Ok(a);
        }
        if !kernels::broadcastable_to(&src, shape) {
            return Err(AutogradError::Shape {
                op: "expand",
                detail: format!("{src:?} cannot broadcast to {shape:?}"),
            });
        }
        let data = kernels::expand(self.value(a).data(), &src, shape);
        Ok(self.record(shape.to_vec(), data, Op::Expand(a)))
    }

    /// Sums `a` down to `shape`, the adjoint of [`Graph::expand`].
    pub fn sum_to(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutogradError> {
        let src = self.shape(a).to_vec();
        if src == shape {
            return Ok(a);
        }
        if !kernels::broadcastable_to(shape, &src) {
            return Err(AutogradError::Shape {
                op: "sum_to",
                detail: format!("{src:?} cannot reduce to {shape:?}"),
            });
        }
        let data = kernels::sum_to(self.value(a).data(), &src, shape);
        Ok(self.record(shape.to_vec(), data, Op::SumTo(a)))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        self.sum_to(a, &[]).expect("scalar reduction is always valid")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums every axis except the leading (batch) axis, keeping rank.
    pub fn sum_per_sample(&mut self, a: Var) -> Result<Var, AutogradError> {
        let shape = self.shape(a).to_vec();
        if shape.is_empty() {
            return Err(self.shape_err("sum_per_sample", &[a]));
        }
        let mut target = vec![1; shape.len()];
        target[0] = shape[0];
        self.sum_to(a, &target)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if t.numel() != shape.iter().product::<usize>() {
            return Err(AutogradError::Shape {
                op: "reshape",
                detail: format!("{:?} -> {:?}", t.shape(), shape),
            });
        }
        if t.shape() == shape {
            return Ok(a);
        }
        let data = t.data().to_vec();
        Ok(self.record(shape.to_vec(), data, Op::Reshape(a)))
    }

    // ---- linear algebra ----------------------------------------------------

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", &[a, b]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.record(vec![m, n], data, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutogradError> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(self.shape_err("transpose", &[a]));
        }
        let (r, c) = (s[0], s[1]);
        let data = kernels::transpose(self.value(a).data(), r, c);
        Ok(self.record(vec![c, r], data, Op::Transpose(a)))
    }

    /// Fully connected layer: `x [n, in] . weight[out, in]^T + bias[out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var, AutogradError> {
        let wt = self.transpose(weight)?;
        let y = self.matmul(x, wt)?;
        match bias {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    fn conv_dims(&self, op: &'static str, x: &[usize], w: &[usize], pad: usize) -> Result<ConvDims, AutogradError> {
        let bad = || AutogradError::Shape {
            op,
            detail: format!("input {x:?}, weight {w:?}, pad {pad}"),
        };
        if x.len() != 4 || w.len() != 4 || x[1] != w[1] || w[2] != w[3] {
            return Err(bad());
        }
        if x[2] + 2 * pad < w[2] || x[3] + 2 * pad < w[3] {
            return Err(bad());
        }
        Ok(ConvDims {
            batch: x[0],
            in_ch: x[1],
            out_ch: w[0],
            in_h: x[2],
            in_w: x[3],
            kernel: w[2],
            pad,
        })
    }

    /// Stride-1 2-D cross-correlation of `x [n, c_in, h, w]` with
    /// `weight [c_out, c_in, k, k]` and zero padding `pad` on each side.
    pub fn conv2d(&mut self, x: Var, weight: Var, pad: usize) -> Result<Var, AutogradError> {
        let d = self.conv_dims("conv2d", self.shape(x), self.shape(weight), pad)?;
        let data = kernels::conv2d(self.value(x).data(), self.value(weight).data(), &d);
        Ok(self.record(
            vec![d.batch, d.out_ch, d.out_h(), d.out_w()],
            data,
            Op::Conv2d { x, w: weight, pad },
        ))
    }

    /// Convolution using `pad = k / 2` so the spatial size is preserved.
    pub fn conv2d_same(&mut self, x: Var, weight: Var) -> Result<Var, AutogradError> {
        let k = self.shape(weight).get(2).copied().unwrap_or(1);
        if k % 2 == 0 {
            return Err(self.shape_err("conv2d_same", &[x, weight]));
        }
        self.conv2d(x, weight, k / 2)
    }

    fn conv2d_input_grad(&mut self, g: Var, w: Var, pad: usize, in_hw: (usize, usize)) -> Var {
        let (gs, ws) = (self.shape(g), self.shape(w));
        let d = ConvDims {
            batch: gs[0],
            in_ch: ws[1],
            out_ch: ws[0],
            in_h: in_hw.0,
            in_w: in_hw.1,
            kernel: ws[2],
            pad,
        };
        let data = kernels::conv2d_input_grad(self.value(g).data(), self.value(w).data(), &d);
        self.record(
            vec![d.batch, d.in_ch, d.in_h, d.in_w],
            data,
            Op::Conv2dInputGrad { g, w, pad },
        )
    }

    fn conv2d_weight_grad(&mut self, x: Var, g: Var, pad: usize, kernel: usize) -> Var {
        let (xs, gs) = (self.shape(x), self.shape(g));
        let d = ConvDims {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: gs[1],
            in_h: xs[2],
            in_w: xs[3],
            kernel,
            pad,
        };
        let data = kernels::conv2d_weight_grad(self.value(x).data(), self.value(g).data(), &d);
        self.record(
            vec![d.out_ch, d.in_ch, kernel, kernel],
            data,
            Op::Conv2dWeightGrad { x, g, pad },
        )
    }

    // ---- resampling --------------------------------------------------------

    /// Applies a fixed 2x resampling operator over the last two axes of a rank-4 tensor.
    pub fn resample(&mut self, x: Var, kind: Resample) -> Result<Var, AutogradError> {
        let s = self.shape(x).to_vec();
        let bad = || AutogradError::Shape {
            op: "resample",
            detail: format!("{kind:?} on {s:?}"),
        };
        if s.len() != 4 {
            return Err(bad());
        }
        let (oh, ow) = match (kind.out_len(s[2]), kind.out_len(s[3])) {
            (Some(h), Some(w)) => (h, w),
            _ => return Err(bad()),
        };
        let data = kind.apply(self.value(x).data(), s[0] * s[1], s[2], s[3]);
        Ok(self.record(vec![s[0], s[1], oh, ow], data, Op::Resample(x, kind)))
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var, AutogradError> {
        self.resample(x, Resample::Up)
    }

    pub fn downsample2x(&mut self, x: Var) -> Result<Var, AutogradError> {
        self.resample(x, Resample::Down)
    }

    // ---- composites --------------------------------------------------------

    /// Euclidean norm of each sample (leading axis), shape `[n]`.
    pub fn l2_norm_per_sample(&mut self, x: Var) -> Result<Var, AutogradError> {
        let n = self.shape(x).first().copied().unwrap_or(0);
        let sq = self.square(x);
        let s = self.sum_per_sample(sq)?;
        let s = self.reshape(s, &[n])?;
        Ok(self.sqrt(s))
    }

    // ---- differentiation ---------------------------------------------------

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// The gradient computation is itself recorded on the graph, so the
    /// returned variables can be differentiated again. Inputs that `output`
    /// does not depend on get a zero gradient.
    pub fn grad_of(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>, AutogradError> {
        if !self.shape(output).iter().all(|&d| d == 1) {
            return Err(AutogradError::NonScalarLoss(self.shape(output).to_vec()));
        }
        let out_shape = self.shape(output).to_vec();
        let seed = self.constant(Tensor::full(&out_shape, 1.0));
        self.vjp(output, seed, wrt)
    }

    /// Vector-Jacobian product `seed^T . d output / d wrt`.
    pub fn vjp(&mut self, output: Var, seed: Var, wrt: &[Var]) -> Result<Vec<Var>, AutogradError> {
        if self.shape(seed) != self.shape(output) {
            return Err(self.shape_err("vjp", &[output, seed]));
        }
        let end = output.0 + 1;
        let mut grads: Vec<Option<Var>> = vec![None; end];
        grads[output.0] = Some(seed);
        for id in (0..end).rev() {
            let Some(g) = grads[id] else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            for (input, gi) in self.backward_op(Var(id), &op, g)? {
                if input.0 >= end || !self.nodes[input.0].requires_grad {
                    continue;
                }
                grads[input.0] = Some(match grads[input.0] {
                    Some(prev) => self.add(prev, gi)?,
                    None => gi,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(*w).to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            })
            .collect())
    }

    /// Reverse pass from the scalar `loss`, storing gradients on every
    /// leaf created with [`Graph::param`].
    ///
    /// The graph is consumed: a second call fails.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        if self.consumed {
            return Err(AutogradError::Consumed);
        }
        if self.nodes.is_empty() {
            return Err(AutogradError::EmptyGraph);
        }
        let leaves: Vec<Var> = (0..=loss.0)
            .filter(|&i| self.nodes[i].requires_grad && matches!(self.nodes[i].op, Op::Leaf))
            .map(Var)
            .collect();
        let grads = self.grad_of(loss, &leaves)?;
        for (leaf, g) in leaves.into_iter().zip(grads) {
            self.nodes[leaf.0].grad = Some(self.nodes[g.0].value.clone());
        }
        self.consumed = true;
        Ok(())
    }

    /// Local vector-Jacobian products of one node, as recorded ops.
    fn backward_op(&mut self, out: Var, op: &Op, g: Var) -> Result<Vec<(Var, Var)>, AutogradError> {
        Ok(match *op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(a, g), (b, g)],
            Op::Sub(a, b) => {
                let nb = self.neg(g);
                vec![(a, g), (b, nb)]
            }
            Op::Mul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if self.requires_grad(b) {
                    out.push((b, self.mul(g, a)?));
                }
                out
            }
            Op::Neg(a) => vec![(a, self.neg(g))],
            Op::Scale(a, s) => vec![(a, self.scale(g, s))],
            Op::AddScalar(a) => vec![(a, g)],
            Op::Expand(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.sum_to(g, &shape)?)]
            }
            Op::SumTo(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.expand(g, &shape)?)]
            }
            Op::Reshape(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.reshape(g, &shape)?)]
            }
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(a) {
                    let bt = self.transpose(b)?;
                    out.push((a, self.matmul(g, bt)?));
                }
                if self.requires_grad(b) {
                    let at = self.transpose(a)?;
                    out.push((b, self.matmul(at, g)?));
                }
                out
            }
            Op::Transpose(a) => vec![(a, self.transpose(g)?)],
            Op::Conv2d { x, w, pad } => {
                let xs = self.shape(x).to_vec();
                let k = self.shape(w)[2];
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(x) {
                    out.push((x, self.conv2d_input_grad(g, w, pad, (xs[2], xs[3]))));
                }
                if self.requires_grad(w) {
                    out.push((w, self.conv2d_weight_grad(x, g, pad, k)));
                }
                out
            }
            Op::Conv2dInputGrad { g: g0, w, pad } => {
                // <h, A(g0, w)> is the convolution form evaluated at input h.
                let k = self.shape(w)[2];
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(g0) {
                    out.push((g0, self.conv2d(g, w, pad)?));
                }
                if self.requires_grad(w) {
                    out.push((w, self.conv2d_weight_grad(g, g0, pad, k)));
                }
                out
            }
            Op::Conv2dWeightGrad { x, g: g0, pad } => {
                let xs = self.shape(x).to_vec();
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(x) {
                    out.push((x, self.conv2d_input_grad(g0, g, pad, (xs[2], xs[3]))));
                }
                if self.requires_grad(g0) {
                    out.push((g0, self.conv2d(x, g, pad)?));
                }
                out
            }
            Op::LeakyRelu { x, slope } => vec![(x, self.leaky_mask(g, x, slope))],
            Op::LeakyMask { g: g0, x, slope } => vec![(g0, self.leaky_mask(g, x, slope))],
            Op::Abs(x) => vec![(x, self.sign_mask(g, x))],
            Op::SignMask { g: g0, x } => vec![(g0, self.sign_mask(g, x))],
            Op::Softplus(x) => {
                let s = self.sigmoid(x);
                vec![(x, self.mul(g, s)?)]
            }
            Op::Sigmoid(x) => {
                // s' = s (1 - s), with s the node's own output.
                let one_minus = {
                    let n = self.neg(out);
                    self.add_scalar(n, 1.0)
                };
                let ds = self.mul(out, one_minus)?;
                vec![(x, self.mul(g, ds)?)]
            }
            Op::Sqrt(x) => {
                let r = self.recip(out);
                let half = self.scale(r, 0.5);
                vec![(x, self.mul(g, half)?)]
            }
            Op::Recip(x) => {
                let r2 = self.square(out);
                let t = self.mul(g, r2)?;
                vec![(x, self.neg(t))]
            }
            Op::Resample(x, kind) => vec![(x, self.resample(g, kind.adjoint())?)],
        })
    }

    /// Sign pattern of every rectifier / absolute-value input on the graph.
    ///
    /// Two evaluations of the same function share a pattern exactly when no
    /// kink was crossed between them.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            let x = match node.op {
                Op::LeakyRelu { x, .. } | Op::Abs(x) => x,
                Op::LeakyMask { x, .. } | Op::SignMask { x, .. } => x,
                _ => continue,
            };
            for &v in self.nodes[x.0].value.data() {
                pattern.push(v > 0.0);
                pattern.push(v < 0.0);
            }
        }
        pattern
    }
}
