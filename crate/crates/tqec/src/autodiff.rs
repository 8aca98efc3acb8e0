//! Minimal reverse-mode tensor engine.
//!
//! [`Graph`] is a define-by-run tape: every operation computes its value
//! eagerly, records its inputs, and [`Graph::backward`] replays the tape in
//! reverse to accumulate gradients of a scalar output. The op set is exactly
//! what the decoder networks need — dense matrix multiply, valid 2D/3D
//! convolution, transposed convolution, circular padding, batch
//! normalization, ReLU, softmax, shape plumbing (reshape/permute/concat),
//! global average pooling, and the two classification losses. Self-attention
//! is composed from these primitives in [`nn`].
//!
//! Generic over [`Scalar`] so the same code runs in `f32` for training and in
//! `f64` for finite-difference gradient verification. All kernels are
//! single-threaded and deterministic: identical inputs give bit-identical
//! outputs and gradients.

pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod serialize;

use kernels::{col2im2, col2im3, conv_out_len, im2col2, im2col3, matmul_nn, transpose};

/// Floating-point element type of tensors; implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Tensor<F> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: F) -> Tensor<F> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Tensor<F> {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "value count must match the shape product"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Single-element tensor, used for loss values.
    pub fn scalar(v: F) -> Tensor<F> {
        Tensor::from_vec(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Element-wise conversion, e.g. an `f32` parameter tensor to `f64` for
    /// gradient checking.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| G::from_f64(v.to_f64())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Tensor<F>) {
        assert_eq!(self.shape, other.shape, "gradient shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Row-major strides for a shape.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * shape[i + 1];
    }
    out
}

/// Reorder `src` (row-major over `shape`) so that axis `perm[k]` of the
/// source becomes axis `k` of the destination.
fn permute_data<F: Copy>(src: &[F], shape: &[usize], perm: &[usize]) -> Vec<F> {
    if src.is_empty() {
        return Vec::new();
    }
    let rank = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides = strides(&out_shape);
    let mut dst_stride_of_src_axis = vec![0usize; rank];
    for (k, &p) in perm.iter().enumerate() {
        dst_stride_of_src_axis[p] = out_strides[k];
    }
    let mut dst = vec![src[0]; src.len()];
    let mut coord = vec![0usize; rank];
    for &v in src {
        let j: usize = coord
            .iter()
            .zip(&dst_stride_of_src_axis)
            .map(|(c, s)| c * s)
            .sum();
        dst[j] = v;
        for ax in (0..rank).rev() {
            coord[ax] += 1;
            if coord[ax] < shape[ax] {
                break;
            }
            coord[ax] = 0;
        }
    }
    dst
}

/// Gather `(b, c, s)` activations into a `(c, b·s)` matrix (and back), the
/// layout the convolution matrix multiplies work in.
fn fold_batch<F: Scalar>(src: &[F], b: usize, c: usize, s: usize, dst: &mut [F]) {
    for bi in 0..b {
        for ci in 0..c {
            let from = &src[(bi * c + ci) * s..(bi * c + ci + 1) * s];
            let to = &mut dst[ci * b * s + bi * s..ci * b * s + (bi + 1) * s];
            to.copy_from_slice(from);
        }
    }
}

/// Adjoint of [`fold_batch`]: scatter-add a `(c, b·s)` matrix onto `(b, c, s)`.
fn unfold_batch<F: Scalar>(src: &[F], b: usize, c: usize, s: usize, dst: &mut [F]) {
    for bi in 0..b {
        for ci in 0..c {
            let from = &src[ci * b * s + bi * s..ci * b * s + (bi + 1) * s];
            let to = &mut dst[(bi * c + ci) * s..(bi * c + ci + 1) * s];
            for (t, &f) in to.iter_mut().zip(from) {
                *t += f;
            }
        }
    }
}

/// Recorded operation of a node: its inputs plus whatever forward context the
/// backward pass needs.
enum Op<F> {
    Leaf,
    Add(NodeId, NodeId),
    Scale(NodeId, F),
    AddBias {
        x: NodeId,
        bias: NodeId,
        axis: usize,
    },
    Relu(NodeId),
    Reshape(NodeId),
    Permute {
        x: NodeId,
        perm: Vec<usize>,
    },
    Concat {
        xs: Vec<NodeId>,
        axis: usize,
    },
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    Softmax(NodeId),
    CircularPad2 {
        x: NodeId,
        pad: usize,
    },
    CircularPad3 {
        x: NodeId,
        pad: usize,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        stride: usize,
    },
    Conv3d {
        x: NodeId,
        w: NodeId,
    },
    ConvTranspose2d {
        x: NodeId,
        w: NodeId,
        stride: usize,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<F>,
        inv_std: Vec<F>,
        training: bool,
    },
    GlobalAvgPool(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<F>,
    },
    SigmoidBce {
        logits: NodeId,
        targets: Vec<F>,
    },
}

struct Node<F> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    op: Op<F>,
}

impl<F: Scalar> Node<F> {
    fn placeholder() -> Node<F> {
        Node {
            value: Tensor {
                shape: Vec::new(),
                data: Vec::new(),
            },
            grad: None,
            op: Op::Leaf,
        }
    }
}

/// Define-by-run computation tape.
#[derive(Default)]
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
    bindings: Vec<(String, NodeId)>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Graph<F> {
        Graph {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert an input tensor with no history.
    pub fn leaf(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Insert a named parameter from `store` as a leaf and remember the
    /// binding so the trainer can route this node's gradient back to the
    /// parameter after [`Graph::backward`].
    pub fn param(&mut self, store: &nn::ParamStore<F>, name: &str) -> NodeId {
        let id = self.leaf(store.get(name).tensor.clone());
        self.bindings.push((name.to_string(), id));
        id
    }

    /// `(name, node)` pairs recorded by [`Graph::param`], in insertion order.
    pub fn bindings(&self) -> &[(String, NodeId)] {
        &self.bindings
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last [`Graph::backward`] output with respect to `id`,
    /// or `None` if the node does not influence that output.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.nodes[id.0].grad.as_ref()
    }

    // ---- element-wise and shape ops ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = {
            let av = self.value(a);
            let bv = self.value(b);
            assert_eq!(av.shape(), bv.shape(), "add requires matching shapes");
            let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect();
            Tensor::from_vec(av.shape(), data)
        };
        self.push(out, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: F) -> NodeId {
        let out = {
            let xv = self.value(x);
            Tensor::from_vec(xv.shape(), xv.data.iter().map(|&v| v * c).collect())
        };
        self.push(out, Op::Scale(x, c))
    }

    /// Broadcast-add a rank-1 bias along `axis` of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId, axis: usize) -> NodeId {
        let out = {
            let xv = self.value(x);
            let bv = self.value(bias);
            assert_eq!(bv.shape().len(), 1, "bias must be rank 1");
            assert!(axis < xv.shape().len(), "bias axis out of range");
            assert_eq!(bv.len(), xv.shape()[axis], "bias length mismatch");
            let mid = xv.shape()[axis];
            let inner: usize = xv.shape()[axis + 1..].iter().product();
            let mut data = xv.data.clone();
            for chunk in data.chunks_mut(mid * inner) {
                for (m, seg) in chunk.chunks_mut(inner).enumerate() {
                    let b = bv.data[m];
                    for v in seg {
                        *v += b;
                    }
                }
            }
            Tensor::from_vec(xv.shape(), data)
        };
        self.push(out, Op::AddBias { x, bias, axis })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = {
            let xv = self.value(x);
            Tensor::from_vec(
                xv.shape(),
                xv.data
                    .iter()
                    .map(|&v| if v > F::zero() { v } else { F::zero() })
                    .collect(),
            )
        };
        self.push(out, Op::Relu(x))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let out = {
            let xv = self.value(x);
            assert_eq!(
                xv.len(),
                shape.iter().product::<usize>(),
                "reshape must preserve the element count"
            );
            Tensor::from_vec(shape, xv.data.clone())
        };
        self.push(out, Op::Reshape(x))
    }

    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> NodeId {
        let out = {
            let xv = self.value(x);
            let rank = xv.shape().len();
            assert_eq!(perm.len(), rank, "permutation rank mismatch");
            let mut seen = vec![false; rank];
            for &p in perm {
                assert!(p < rank && !seen[p], "invalid permutation {perm:?}");
                seen[p] = true;
            }
            let out_shape: Vec<usize> = perm.iter().map(|&p| xv.shape()[p]).collect();
            Tensor::from_vec(&out_shape, permute_data(&xv.data, xv.shape(), perm))
        };
        self.push(
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        )
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> NodeId {
        assert!(!xs.is_empty(), "concat needs at least one input");
        let out = {
            let first = self.value(xs[0]).shape().to_vec();
            assert!(axis < first.len(), "concat axis out of range");
            let mut axis_total = 0;
            for &x in xs {
                let s = self.value(x).shape();
                assert_eq!(s.len(), first.len(), "concat rank mismatch");
                for (ax, (&a, &b)) in s.iter().zip(&first).enumerate() {
                    assert!(
                        ax == axis || a == b,
                        "concat inputs differ outside the concat axis"
                    );
                }
                axis_total += s[axis];
            }
            let outer: usize = first[..axis].iter().product();
            let inner: usize = first[axis + 1..].iter().product();
            let mut out_shape = first.clone();
            out_shape[axis] = axis_total;
            let mut data = Vec::with_capacity(outer * axis_total * inner);
            for o in 0..outer {
                for &x in xs {
                    let xv = self.value(x);
                    let len = xv.shape()[axis] * inner;
                    data.extend_from_slice(&xv.data[o * len..(o + 1) * len]);
                }
            }
            Tensor::from_vec(&out_shape, data)
        };
        self.push(
            out,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
        )
    }

    // ---- dense algebra ----

    /// Matrix product. Accepts `(m,k)·(k,n)` or batched `(g,m,k)·(g,k,n)`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = {
            let av = self.value(a);
            let bv = self.value(b);
            let (g, m, k, n) = matmul_dims(av.shape(), bv.shape());
            let mut data = vec![F::zero(); g * m * n];
            for gi in 0..g {
                matmul_nn(
                    &av.data[gi * m * k..(gi + 1) * m * k],
                    &bv.data[gi * k * n..(gi + 1) * k * n],
                    m,
                    k,
                    n,
                    &mut data[gi * m * n..(gi + 1) * m * n],
                );
            }
            let out_shape: Vec<usize> = if av.shape().len() == 3 {
                vec![g, m, n]
            } else {
                vec![m, n]
            };
            Tensor::from_vec(&out_shape, data)
        };
        self.push(out, Op::Matmul { a, b })
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = {
            let xv = self.value(x);
            let last = *xv.shape().last().expect("softmax needs rank >= 1");
            let mut data = xv.data.clone();
            for row in data.chunks_mut(last) {
                let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
                let mut sum = F::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v = *v / sum;
                }
            }
            Tensor::from_vec(xv.shape(), data)
        };
        self.push(out, Op::Softmax(x))
    }

    // ---- padding ----

    /// Circularly pad the two trailing axes of a `(b, c, h, w)` tensor by `p`.
    pub fn circular_pad2(&mut self, x: NodeId, p: usize) -> NodeId {
        let out = {
            let xv = self.value(x);
            let [b, c, h, w]: [usize; 4] = xv.shape().try_into().expect("circular_pad2 needs rank 4");
            let (oh, ow) = (h + 2 * p, w + 2 * p);
            let mut data = vec![F::zero(); b * c * oh * ow];
            for plane in 0..b * c {
                let src = &xv.data[plane * h * w..(plane + 1) * h * w];
                let dst = &mut data[plane * oh * ow..(plane + 1) * oh * ow];
                for r in 0..oh {
                    let sr = ((r as isize - p as isize).rem_euclid(h as isize)) as usize;
                    for col in 0..ow {
                        let sc = ((col as isize - p as isize).rem_euclid(w as isize)) as usize;
                        dst[r * ow + col] = src[sr * w + sc];
                    }
                }
            }
            Tensor::from_vec(&[b, c, oh, ow], data)
        };
        self.push(out, Op::CircularPad2 { x, pad: p })
    }

    /// Circularly pad the three trailing axes of a `(b, c, d, h, w)` tensor.
    pub fn circular_pad3(&mut self, x: NodeId, p: usize) -> NodeId {
        let out = {
            let xv = self.value(x);
            let [b, c, d, h, w]: [usize; 5] =
                xv.shape().try_into().expect("circular_pad3 needs rank 5");
            let (od, oh, ow) = (d + 2 * p, h + 2 * p, w + 2 * p);
            let mut data = vec![F::zero(); b * c * od * oh * ow];
            for vol in 0..b * c {
                let src = &xv.data[vol * d * h * w..(vol + 1) * d * h * w];
                let dst = &mut data[vol * od * oh * ow..(vol + 1) * od * oh * ow];
                for dd in 0..od {
                    let sd = ((dd as isize - p as isize).rem_euclid(d as isize)) as usize;
                    for r in 0..oh {
                        let sr = ((r as isize - p as isize).rem_euclid(h as isize)) as usize;
                        for col in 0..ow {
                            let sc = ((col as isize - p as isize).rem_euclid(w as isize)) as usize;
                            dst[(dd * oh + r) * ow + col] = src[(sd * h + sr) * w + sc];
                        }
                    }
                }
            }
            Tensor::from_vec(&[b, c, od, oh, ow], data)
        };
        self.push(out, Op::CircularPad3 { x, pad: p })
    }

    // ---- convolutions ----

    /// Valid (unpadded) 2D cross-correlation of `(b, cin, h, w)` with weights
    /// `(cout, cin, k, k)`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize) -> NodeId {
        let out = {
            let xv = self.value(x);
            let wv = self.value(w);
            let [b, cin, h, wd]: [usize; 4] = xv.shape().try_into().expect("conv2d input rank 4");
            let [cout, wcin, k, k2]: [usize; 4] =
                wv.shape().try_into().expect("conv2d weight rank 4");
            assert_eq!(cin, wcin, "conv2d channel mismatch");
            assert_eq!(k, k2, "conv2d kernels are square");
            let oh = conv_out_len(h, k, stride);
            let ow = conv_out_len(wd, k, stride);
            let cols = b * oh * ow;
            let ckk = cin * k * k;
            let mut col = vec![F::zero(); ckk * cols];
            im2col2(&xv.data, b, cin, h, wd, k, stride, &mut col);
            let mut out_mat = vec![F::zero(); cout * cols];
            matmul_nn(&wv.data, &col, cout, ckk, cols, &mut out_mat);
            let mut data = vec![F::zero(); b * cout * oh * ow];
            unfold_batch(&out_mat, b, cout, oh * ow, &mut data);
            Tensor::from_vec(&[b, cout, oh, ow], data)
        };
        self.push(out, Op::Conv2d { x, w, stride })
    }

    /// Valid 3D cross-correlation of `(b, cin, d, h, w)` with weights
    /// `(cout, cin, k, k, k)`, stride 1.
    pub fn conv3d(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let out = {
            let xv = self.value(x);
            let wv = self.value(w);
            let [b, cin, d, h, wd]: [usize; 5] = xv.shape().try_into().expect("conv3d input rank 5");
            let [cout, wcin, k, k2, k3]: [usize; 5] =
                wv.shape().try_into().expect("conv3d weight rank 5");
            assert_eq!(cin, wcin, "conv3d channel mismatch");
            assert!(k == k2 && k == k3, "conv3d kernels are cubic");
            let od = conv_out_len(d, k, 1);
            let oh = conv_out_len(h, k, 1);
            let ow = conv_out_len(wd, k, 1);
            let cols = b * od * oh * ow;
            let ckkk = cin * k * k * k;
            let mut col = vec![F::zero(); ckkk * cols];
            im2col3(&xv.data, b, cin, d, h, wd, k, &mut col);
            let mut out_mat = vec![F::zero(); cout * cols];
            matmul_nn(&wv.data, &col, cout, ckkk, cols, &mut out_mat);
            let mut data = vec![F::zero(); b * cout * od * oh * ow];
            unfold_batch(&out_mat, b, cout, od * oh * ow, &mut data);
            Tensor::from_vec(&[b, cout, od, oh, ow], data)
        };
        self.push(out, Op::Conv3d { x, w })
    }

    /// Transposed 2D convolution (gradient of a valid conv with respect to
    /// its input): `(b, cin, h, w)` with weights `(cin, cout, k, k)` gives
    /// `(b, cout, (h−1)·stride + k, (w−1)·stride + k)`.
    pub fn conv_transpose2d(&mut self, x: NodeId, w: NodeId, stride: usize) -> NodeId {
        let out = {
            let xv = self.value(x);
            let wv = self.value(w);
            let [b, cin, h, wd]: [usize; 4] =
                xv.shape().try_into().expect("conv_transpose2d input rank 4");
            let [wcin, cout, k, k2]: [usize; 4] =
                wv.shape().try_into().expect("conv_transpose2d weight rank 4");
            assert_eq!(cin, wcin, "conv_transpose2d channel mismatch");
            assert_eq!(k, k2, "conv_transpose2d kernels are square");
            let oh = (h - 1) * stride + k;
            let ow = (wd - 1) * stride + k;
            let n = b * h * wd;
            let coutkk = cout * k * k;
            let mut x_mat = vec![F::zero(); cin * n];
            fold_batch(&xv.data, b, cin, h * wd, &mut x_mat);
            let w_t = transpose(&wv.data, cin, coutkk);
            let mut tmp = vec![F::zero(); coutkk * n];
            matmul_nn(&w_t, &x_mat, coutkk, cin, n, &mut tmp);
            let mut data = vec![F::zero(); b * cout * oh * ow];
            col2im2(&tmp, b, cout, oh, ow, k, stride, &mut data);
            Tensor::from_vec(&[b, cout, oh, ow], data)
        };
        self.push(out, Op::ConvTranspose2d { x, w, stride })
    }

    // ---- normalization and pooling ----

    /// Batch normalization over channel axis 1 of `(b, c, …)`.
    ///
    /// Training mode normalizes with batch statistics and updates the running
    /// buffers in place (biased variance for normalization, unbiased for the
    /// running estimate); eval mode normalizes with the running buffers.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &mut Tensor<F>,
        running_var: &mut Tensor<F>,
        training: bool,
        momentum: F,
        eps: F,
    ) -> NodeId {
        let (out, mean, inv_std) = {
            let xv = self.value(x);
            let gv = self.value(gamma);
            let bv = self.value(beta);
            assert!(xv.shape().len() >= 2, "batch_norm input needs rank >= 2");
            let b = xv.shape()[0];
            let c = xv.shape()[1];
            let s: usize = xv.shape()[2..].iter().product();
            assert_eq!(gv.len(), c, "scale length mismatch");
            assert_eq!(bv.len(), c, "shift length mismatch");
            assert_eq!(running_mean.len(), c, "running mean length mismatch");
            assert_eq!(running_var.len(), c, "running variance length mismatch");
            if training {
                assert!(b >= 2, "batch_norm training mode needs a batch of at least 2");
            }

            let m = b * s;
            let mut mean = vec![F::zero(); c];
            let mut var = vec![F::zero(); c];
            if training {
                let inv_m = F::one() / F::from_f64(m as f64);
                for (ci, mu) in mean.iter_mut().enumerate() {
                    for bi in 0..b {
                        let seg = &xv.data[(bi * c + ci) * s..(bi * c + ci + 1) * s];
                        for &v in seg {
                            *mu += v;
                        }
                    }
                    *mu *= inv_m;
                }
                for (ci, vr) in var.iter_mut().enumerate() {
                    for bi in 0..b {
                        let seg = &xv.data[(bi * c + ci) * s..(bi * c + ci + 1) * s];
                        for &v in seg {
                            let dl = v - mean[ci];
                            *vr += dl * dl;
                        }
                    }
                    *vr *= inv_m;
                }
                // Update running stats: unbiased variance, like the common
                // deep-learning convention.
                let unbias = if m > 1 {
                    F::from_f64(m as f64 / (m as f64 - 1.0))
                } else {
                    F::one()
                };
                for ci in 0..c {
                    running_mean.data[ci] =
                        (F::one() - momentum) * running_mean.data[ci] + momentum * mean[ci];
                    running_var.data[ci] = (F::one() - momentum) * running_var.data[ci]
                        + momentum * var[ci] * unbias;
                }
            } else {
                mean.copy_from_slice(&running_mean.data);
                var.copy_from_slice(&running_var.data);
            }
            let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();

            let mut data = vec![F::zero(); xv.len()];
            for bi in 0..b {
                for ci in 0..c {
                    let seg = &xv.data[(bi * c + ci) * s..(bi * c + ci + 1) * s];
                    let dst = &mut data[(bi * c + ci) * s..(bi * c + ci + 1) * s];
                    let (mu, istd, g, be) = (mean[ci], inv_std[ci], gv.data[ci], bv.data[ci]);
                    for (o, &v) in dst.iter_mut().zip(seg) {
                        *o = g * (v - mu) * istd + be;
                    }
                }
            }
            (Tensor::from_vec(xv.shape(), data), mean, inv_std)
        };
        self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            },
        )
    }

    /// Mean over all trailing spatial axes: `(b, c, …) -> (b, c)`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let out = {
            let xv = self.value(x);
            assert!(xv.shape().len() >= 3, "global_avg_pool needs rank >= 3");
            let b = xv.shape()[0];
            let c = xv.shape()[1];
            let s: usize = xv.shape()[2..].iter().product();
            let inv = F::one() / F::from_f64(s as f64);
            let mut data = vec![F::zero(); b * c];
            for (i, seg) in xv.data.chunks(s).enumerate() {
                let mut sum = F::zero();
                for &v in seg {
                    sum += v;
                }
                data[i] = sum * inv;
            }
            Tensor::from_vec(&[b, c], data)
        };
        self.push(out, Op::GlobalAvgPool(x))
    }

    // ---- losses ----

    /// Mean softmax cross-entropy. `logits` is `(b, classes, …sites)`;
    /// `labels` holds one class index per `(batch, site)` pair in row-major
    /// order. Returns a scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> NodeId {
        let (out, probs) = {
            let lv = self.value(logits);
            assert!(lv.shape().len() >= 2, "logits need rank >= 2");
            let b = lv.shape()[0];
            let classes = lv.shape()[1];
            let sites: usize = lv.shape()[2..].iter().product();
            assert_eq!(labels.len(), b * sites, "one label per batch-site pair");
            let mut probs = Tensor::zeros(lv.shape());
            let mut total = F::zero();
            for bi in 0..b {
                for si in 0..sites {
                    let label = labels[bi * sites + si];
                    assert!(label < classes, "label {label} out of range 0..{classes}");
                    let at = |k: usize| lv.data[(bi * classes + k) * sites + si];
                    let mut max = F::neg_infinity();
                    for k in 0..classes {
                        max = max.max(at(k));
                    }
                    let mut denom = F::zero();
                    for k in 0..classes {
                        denom += (at(k) - max).exp();
                    }
                    let lse = max + denom.ln();
                    total += lse - at(label);
                    for k in 0..classes {
                        probs.data[(bi * classes + k) * sites + si] = (at(k) - lse).exp();
                    }
                }
            }
            let count = F::from_f64((b * sites) as f64);
            (Tensor::scalar(total / count), probs)
        };
        self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Mean sigmoid binary cross-entropy between `logits` and 0/1 `targets`
    /// of the same element count. Returns a scalar node.
    pub fn sigmoid_bce(&mut self, logits: NodeId, targets: &[F]) -> NodeId {
        let out = {
            let lv = self.value(logits);
            assert_eq!(lv.len(), targets.len(), "one target per logit");
            for &t in targets {
                assert!(
                    t >= F::zero() && t <= F::one(),
                    "targets must lie in [0, 1], got {t}"
                );
            }
            let mut total = F::zero();
            for (&z, &t) in lv.data.iter().zip(targets) {
                // Stable form: max(z,0) − z·t + ln(1 + exp(−|z|)).
                let zmax = if z > F::zero() { z } else { F::zero() };
                total += zmax - z * t + (F::one() + (-z.abs()).exp()).ln();
            }
            Tensor::scalar(total / F::from_f64(lv.len() as f64))
        };
        self.push(
            out,
            Op::SigmoidBce {
                logits,
                targets: targets.to_vec(),
            },
        )
    }

    // ---- reverse pass ----

    /// Accumulate gradients of the scalar node `out` into every node that
    /// feeds it. Clears gradients from any previous call first.
    pub fn backward(&mut self, out: NodeId) {
        assert_eq!(
            self.nodes[out.0].value.len(),
            1,
            "backward requires a scalar output node"
        );
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[out.0].grad = Some(Tensor::filled(&[1], F::one()));
        for idx in (0..=out.0).rev() {
            if self.nodes[idx].grad.is_none() {
                continue;
            }
            let node = std::mem::replace(&mut self.nodes[idx], Node::placeholder());
            self.op_backward(&node);
            self.nodes[idx] = node;
        }
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor<F>) {
        match &mut self.nodes[id.0].grad {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn op_backward(&mut self, node: &Node<F>) {
        let dy = node.grad.as_ref().expect("node scheduled without gradient");
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(*a, dy.clone());
                self.accumulate(*b, dy.clone());
            }
            Op::Scale(x, c) => {
                let delta =
                    Tensor::from_vec(dy.shape(), dy.data.iter().map(|&v| v * *c).collect());
                self.accumulate(*x, delta);
            }
            Op::AddBias { x, bias, axis } => {
                self.accumulate(*x, dy.clone());
                let mid = node.value.shape[*axis];
                let inner: usize = node.value.shape[*axis + 1..].iter().product();
                let mut db = Tensor::zeros(&[mid]);
                for chunk in dy.data.chunks(mid * inner) {
                    for (m, seg) in chunk.chunks(inner).enumerate() {
                        for &v in seg {
                            db.data[m] += v;
                        }
                    }
                }
                self.accumulate(*bias, db);
            }
            Op::Relu(x) => {
                let delta = {
                    let xv = self.value(*x);
                    Tensor::from_vec(
                        dy.shape(),
                        dy.data
                            .iter()
                            .zip(&xv.data)
                            .map(|(&g, &v)| if v > F::zero() { g } else { F::zero() })
                            .collect(),
                    )
                };
                self.accumulate(*x, delta);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape.clone();
                self.accumulate(*x, Tensor::from_vec(&shape, dy.data.clone()));
            }
            Op::Permute { x, perm } => {
                let mut inverse = vec![0usize; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    inverse[p] = k;
                }
                let shape = self.value(*x).shape.clone();
                let delta = Tensor::from_vec(&shape, permute_data(&dy.data, &node.value.shape, &inverse));
                self.accumulate(*x, delta);
            }
            Op::Concat { xs, axis } => {
                let outer: usize = node.value.shape[..*axis].iter().product();
                let inner: usize = node.value.shape[*axis + 1..].iter().product();
                let total_len = node.value.shape[*axis] * inner;
                let mut offset = 0;
                for &x in xs {
                    let shape = self.value(x).shape.clone();
                    let len = shape[*axis] * inner;
                    let mut delta = Tensor::zeros(&shape);
                    for o in 0..outer {
                        let src = &dy.data[o * total_len + offset..o * total_len + offset + len];
                        delta.data[o * len..(o + 1) * len].copy_from_slice(src);
                    }
                    offset += len;
                    self.accumulate(x, delta);
                }
            }
            Op::Matmul { a, b } => {
                let (da, db) = {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (g, m, k, n) = matmul_dims(av.shape(), bv.shape());
                    let mut da = vec![F::zero(); av.len()];
                    let mut db = vec![F::zero(); bv.len()];
                    for gi in 0..g {
                        let dyv = &dy.data[gi * m * n..(gi + 1) * m * n];
                        let a_g = &av.data[gi * m * k..(gi + 1) * m * k];
                        let b_g = &bv.data[gi * k * n..(gi + 1) * k * n];
                        // da = dy · bᵀ ; db = aᵀ · dy
                        let b_t = transpose(b_g, k, n);
                        matmul_nn(dyv, &b_t, m, n, k, &mut da[gi * m * k..(gi + 1) * m * k]);
                        let a_t = transpose(a_g, m, k);
                        matmul_nn(&a_t, dyv, k, m, n, &mut db[gi * k * n..(gi + 1) * k * n]);
                    }
                    (
                        Tensor::from_vec(av.shape(), da),
                        Tensor::from_vec(bv.shape(), db),
                    )
                };
                self.accumulate(*a, da);
                self.accumulate(*b, db);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let last = *y.shape.last().unwrap();
                let mut delta = Tensor::zeros(&y.shape);
                for ((drow, yrow), grow) in delta
                    .data
                    .chunks_mut(last)
                    .zip(y.data.chunks(last))
                    .zip(dy.data.chunks(last))
                {
                    let mut dot = F::zero();
                    for (&yv, &gv) in yrow.iter().zip(grow) {
                        dot += yv * gv;
                    }
                    for ((dv, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *dv = yv * (gv - dot);
                    }
                }
                self.accumulate(*x, delta);
            }
            Op::CircularPad2 { x, pad } => {
                let shape = self.value(*x).shape.clone();
                let [b, c, h, w]: [usize; 4] = shape.as_slice().try_into().unwrap();
                let (oh, ow) = (h + 2 * pad, w + 2 * pad);
                let mut delta = Tensor::zeros(&shape);
                for plane in 0..b * c {
                    let src = &dy.data[plane * oh * ow..(plane + 1) * oh * ow];
                    let dst = &mut delta.data[plane * h * w..(plane + 1) * h * w];
                    for r in 0..oh {
                        let sr = ((r as isize - *pad as isize).rem_euclid(h as isize)) as usize;
                        for col in 0..ow {
                            let sc =
                                ((col as isize - *pad as isize).rem_euclid(w as isize)) as usize;
                            dst[sr * w + sc] += src[r * ow + col];
                        }
                    }
                }
                self.accumulate(*x, delta);
            }
            Op::CircularPad3 { x, pad } => {
                let shape = self.value(*x).shape.clone();
                let [b, c, d, h, w]: [usize; 5] = shape.as_slice().try_into().unwrap();
                let (od, oh, ow) = (d + 2 * pad, h + 2 * pad, w + 2 * pad);
                let mut delta = Tensor::zeros(&shape);
                for vol in 0..b * c {
                    let src = &dy.data[vol * od * oh * ow..(vol + 1) * od * oh * ow];
                    let dst = &mut delta.data[vol * d * h * w..(vol + 1) * d * h * w];
                    for dd in 0..od {
                        let sd = ((dd as isize - *pad as isize).rem_euclid(d as isize)) as usize;
                        for r in 0..oh {
                            let sr = ((r as isize - *pad as isize).rem_euclid(h as isize)) as usize;
                            for col in 0..ow {
                                let sc = ((col as isize - *pad as isize).rem_euclid(w as isize))
                                    as usize;
                                dst[(sd * h + sr) * w + sc] += src[(dd * oh + r) * ow + col];
                            }
                        }
                    }
                }
                self.accumulate(*x, delta);
            }
            Op::Conv2d { x, w, stride } => {
                let (dx, dw) = {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let [b, cin, h, wd]: [usize; 4] = xv.shape().try_into().unwrap();
                    let [cout, _, k, _]: [usize; 4] = wv.shape().try_into().unwrap();
                    let oh = conv_out_len(h, k, *stride);
                    let ow = conv_out_len(wd, k, *stride);
                    let cols = b * oh * ow;
                    let ckk = cin * k * k;

                    let mut dy_mat = vec![F::zero(); cout * cols];
                    fold_batch(&dy.data, b, cout, oh * ow, &mut dy_mat);

                    // dW = dY · colᵀ (col recomputed from the input).
                    let mut col = vec![F::zero(); ckk * cols];
                    im2col2(&xv.data, b, cin, h, wd, k, *stride, &mut col);
                    let col_t = transpose(&col, ckk, cols);
                    let mut dw = vec![F::zero(); wv.len()];
                    matmul_nn(&dy_mat, &col_t, cout, cols, ckk, &mut dw);

                    // dX = col2im(Wᵀ · dY).
                    let w_t = transpose(&wv.data, cout, ckk);
                    let mut dcol = vec![F::zero(); ckk * cols];
                    matmul_nn(&w_t, &dy_mat, ckk, cout, cols, &mut dcol);
                    let mut dx = vec![F::zero(); xv.len()];
                    col2im2(&dcol, b, cin, h, wd, k, *stride, &mut dx);

                    (
                        Tensor::from_vec(xv.shape(), dx),
                        Tensor::from_vec(wv.shape(), dw),
                    )
                };
                self.accumulate(*x, dx);
                self.accumulate(*w, dw);
            }
            Op::Conv3d { x, w } => {
                let (dx, dw) = {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let [b, cin, d, h, wd]: [usize; 5] = xv.shape().try_into().unwrap();
                    let [cout, _, k, _, _]: [usize; 5] = wv.shape().try_into().unwrap();
                    let od = conv_out_len(d, k, 1);
                    let oh = conv_out_len(h, k, 1);
                    let ow = conv_out_len(wd, k, 1);
                    let cols = b * od * oh * ow;
                    let ckkk = cin * k * k * k;

                    let mut dy_mat = vec![F::zero(); cout * cols];
                    fold_batch(&dy.data, b, cout, od * oh * ow, &mut dy_mat);

                    let mut col = vec![F::zero(); ckkk * cols];
                    im2col3(&xv.data, b, cin, d, h, wd, k, &mut col);
                    let col_t = transpose(&col, ckkk, cols);
                    let mut dw = vec![F::zero(); wv.len()];
                    matmul_nn(&dy_mat, &col_t, cout, cols, ckkk, &mut dw);

                    let w_t = transpose(&wv.data, cout, ckkk);
                    let mut dcol = vec![F::zero(); ckkk * cols];
                    matmul_nn(&w_t, &dy_mat, ckkk, cout, cols, &mut dcol);
                    let mut dx = vec![F::zero(); xv.len()];
                    col2im3(&dcol, b, cin, d, h, wd, k, &mut dx);

                    (
                        Tensor::from_vec(xv.shape(), dx),
                        Tensor::from_vec(wv.shape(), dw),
                    )
                };
                self.accumulate(*x, dx);
                self.accumulate(*w, dw);
            }
            Op::ConvTranspose2d { x, w, stride } => {
                let (dx, dw) = {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let [b, cin, h, wd]: [usize; 4] = xv.shape().try_into().unwrap();
                    let [_, cout, k, _]: [usize; 4] = wv.shape().try_into().unwrap();
                    let oh = (h - 1) * stride + k;
                    let ow = (wd - 1) * stride + k;
                    let n = b * h * wd;
                    let coutkk = cout * k * k;

                    // dTmp = im2col(dY) with the output as the image.
                    let mut dtmp = vec![F::zero(); coutkk * n];
                    im2col2(&dy.data, b, cout, oh, ow, k, *stride, &mut dtmp);

                    // dX = W · dTmp, scattered back to batch-major layout.
                    let mut dx_mat = vec![F::zero(); cin * n];
                    matmul_nn(&wv.data, &dtmp, cin, coutkk, n, &mut dx_mat);
                    let mut dx = vec![F::zero(); xv.len()];
                    unfold_batch(&dx_mat, b, cin, h * wd, &mut dx);

                    // dW = X · dTmpᵀ.
                    let mut x_mat = vec![F::zero(); cin * n];
                    fold_batch(&xv.data, b, cin, h * wd, &mut x_mat);
                    let dtmp_t = transpose(&dtmp, coutkk, n);
                    let mut dw = vec![F::zero(); wv.len()];
                    matmul_nn(&x_mat, &dtmp_t, cin, n, coutkk, &mut dw);

                    (
                        Tensor::from_vec(xv.shape(), dx),
                        Tensor::from_vec(wv.shape(), dw),
                    )
                };
                self.accumulate(*x, dx);
                self.accumulate(*w, dw);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            } => {
                let (dx, dgamma, dbeta) = {
                    let xv = self.value(*x);
                    let gv = self.value(*gamma);
                    let b = xv.shape()[0];
                    let c = xv.shape()[1];
                    let s: usize = xv.shape()[2..].iter().product();
                    let m = F::from_f64((b * s) as f64);

                    let mut dgamma = vec![F::zero(); c];
                    let mut dbeta = vec![F::zero(); c];
                    let mut sum_dxhat = vec![F::zero(); c];
                    let mut sum_dxhat_xhat = vec![F::zero(); c];
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = (bi * c + ci) * s;
                            for si in 0..s {
                                let xhat = (xv.data[base + si] - mean[ci]) * inv_std[ci];
                                let g = dy.data[base + si];
                                dbeta[ci] += g;
                                dgamma[ci] += g * xhat;
                                let dxhat = g * gv.data[ci];
                                sum_dxhat[ci] += dxhat;
                                sum_dxhat_xhat[ci] += dxhat * xhat;
                            }
                        }
                    }

                    let mut dx = Tensor::zeros(xv.shape());
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = (bi * c + ci) * s;
                            for si in 0..s {
                                let dxhat = dy.data[base + si] * gv.data[ci];
                                dx.data[base + si] = if *training {
                                    let xhat = (xv.data[base + si] - mean[ci]) * inv_std[ci];
                                    inv_std[ci]
                                        * (dxhat
                                            - sum_dxhat[ci] / m
                                            - xhat * sum_dxhat_xhat[ci] / m)
                                } else {
                                    dxhat * inv_std[ci]
                                };
                            }
                        }
                    }
                    (
                        dx,
                        Tensor::from_vec(&[c], dgamma),
                        Tensor::from_vec(&[c], dbeta),
                    )
                };
                self.accumulate(*x, dx);
                self.accumulate(*gamma, dgamma);
                self.accumulate(*beta, dbeta);
            }
            Op::GlobalAvgPool(x) => {
                let shape = self.value(*x).shape.clone();
                let s: usize = shape[2..].iter().product();
                let inv = F::one() / F::from_f64(s as f64);
                let mut delta = Tensor::zeros(&shape);
                for (seg, &g) in delta.data.chunks_mut(s).zip(&dy.data) {
                    for v in seg {
                        *v = g * inv;
                    }
                }
                self.accumulate(*x, delta);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let g = dy.data[0];
                let shape = probs.shape.clone();
                let b = shape[0];
                let classes = shape[1];
                let sites: usize = shape[2..].iter().product();
                let inv = g / F::from_f64((b * sites) as f64);
                let mut delta = probs.clone();
                for bi in 0..b {
                    for si in 0..sites {
                        let label = labels[bi * sites + si];
                        delta.data[(bi * classes + label) * sites + si] -= F::one();
                    }
                }
                for v in delta.data.iter_mut() {
                    *v *= inv;
                }
                self.accumulate(*logits, delta);
            }
            Op::SigmoidBce { logits, targets } => {
                let g = dy.data[0];
                let delta = {
                    let lv = self.value(*logits);
                    let inv = g / F::from_f64(lv.len() as f64);
                    Tensor::from_vec(
                        lv.shape(),
                        lv.data
                            .iter()
                            .zip(targets)
                            .map(|(&z, &t)| {
                                let sig = F::one() / (F::one() + (-z).exp());
                                (sig - t) * inv
                            })
                            .collect(),
                    )
                };
                self.accumulate(*logits, delta);
            }
        }
    }
}

/// Validate and unpack matmul operand shapes into `(batch, m, k, n)`.
fn matmul_dims(a: &[usize], b: &[usize]) -> (usize, usize, usize, usize) {
    match (a, b) {
        ([m, k], [k2, n]) => {
            assert_eq!(k, k2, "matmul inner dimension mismatch: {a:?} x {b:?}");
            (1, *m, *k, *n)
        }
        ([g, m, k], [g2, k2, n]) => {
            assert_eq!(g, g2, "batched matmul batch mismatch: {a:?} x {b:?}");
            assert_eq!(k, k2, "matmul inner dimension mismatch: {a:?} x {b:?}");
            (*g, *m, *k, *n)
        }
        _ => panic!("matmul supports (m,k)x(k,n) or (g,m,k)x(g,k,n), got {a:?} x {b:?}"),
    }
}
