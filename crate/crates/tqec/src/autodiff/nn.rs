//! Named parameters, layer builders, and the Adam optimizer.
//!
//! A [`ParamStore`] owns every tensor of a model keyed by a dotted path
//! (`"down0.conv.weight"`). Layer structs are lightweight descriptions that
//! know how to initialize their parameters into a store and how to replay
//! their forward pass on a [`Graph`], re-binding parameters by name so the
//! trainer can collect gradients afterwards with [`collect_grads`].
//!
//! Initialization draws every weight and bias from `U(-1/sqrt(fan), +1/sqrt(fan))`
//! where `fan` is the receptive input size (`numel / extent0` of the weight),
//! matching the usual deep-learning default. All randomness flows through the
//! caller's RNG, so models are reproducible from a seed.

use std::collections::BTreeMap;

use rand::Rng;

use super::{Graph, NodeId, Scalar, Tensor};

/// A named tensor plus whether the optimizer may update it.
#[derive(Clone, Debug)]
pub struct ParamEntry<F> {
    pub tensor: Tensor<F>,
    pub trainable: bool,
}

/// Ordered collection of model parameters. Iteration order is the sorted
/// name order, which makes serialization and optimizer traversal
/// deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F: Scalar> {
    params: BTreeMap<String, ParamEntry<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> ParamStore<F> {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    /// Register a tensor under `name`. Panics if the name is taken: layer
    /// prefixes are meant to make every path unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor<F>, trainable: bool) {
        let prev = self
            .params
            .insert(name.to_string(), ParamEntry { tensor, trainable });
        assert!(prev.is_none(), "duplicate parameter name {name:?}");
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &ParamEntry<F> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ParamEntry<F> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry<F>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamEntry<F>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count over all tensors (trainable or not).
    pub fn total_values(&self) -> usize {
        self.params.values().map(|p| p.tensor.len()).sum()
    }

    /// Scalar count over trainable tensors only.
    pub fn trainable_values(&self) -> usize {
        self.params
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Element-wise precision conversion of every parameter.
    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        ParamEntry {
                            tensor: v.tensor.cast::<G>(),
                            trainable: v.trainable,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Insert a fresh weight drawn from `U(-1/sqrt(fan), 1/sqrt(fan))` with
/// `fan = numel / shape[0]` (the receptive input size of one output unit).
fn init_fan_uniform<F: Scalar>(
    store: &mut ParamStore<F>,
    rng: &mut impl Rng,
    name: &str,
    shape: &[usize],
    fan: usize,
) {
    let bound = 1.0 / (fan as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| F::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    store.insert(name, Tensor::from_vec(shape, data), true);
}

/// 2D convolution layer: weight `(cout, cin, k, k)` plus a channel bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Conv2d {
        Conv2d {
            name: name.to_string(),
            cin,
            cout,
            k,
            stride,
        }
    }

    pub fn init<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut impl Rng) {
        let fan = self.cin * self.k * self.k;
        init_fan_uniform(
            store,
            rng,
            &format!("{}.weight", self.name),
            &[self.cout, self.cin, self.k, self.k],
            fan,
        );
        init_fan_uniform(store, rng, &format!("{}.bias", self.name), &[self.cout], fan);
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> NodeId {
        let w = g.param(store, &format!("{}.weight", self.name));
        let b = g.param(store, &format!("{}.bias", self.name));
        let y = g.conv2d(x, w, self.stride);
        g.add_bias(y, b, 1)
    }

    pub fn param_count(&self) -> usize {
        self.cout * self.cin * self.k * self.k + self.cout
    }
}

/// Transposed 2D convolution layer: weight `(cin, cout, k, k)` plus bias.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvTranspose2d {
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> ConvTranspose2d {
        ConvTranspose2d {
            name: name.to_string(),
            cin,
            cout,
            k,
            stride,
        }
    }

    pub fn init<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut impl Rng) {
        let fan = self.cout * self.k * self.k;
        init_fan_uniform(
            store,
            rng,
            &format!("{}.weight", self.name),
            &[self.cin, self.cout, self.k, self.k],
            fan,
        );
        init_fan_uniform(store, rng, &format!("{}.bias", self.name), &[self.cout], fan);
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> NodeId {
        let w = g.param(store, &format!("{}.weight", self.name));
        let b = g.param(store, &format!("{}.bias", self.name));
        let y = g.conv_transpose2d(x, w, self.stride);
        g.add_bias(y, b, 1)
    }

    pub fn param_count(&self) -> usize {
        self.cin * self.cout * self.k * self.k + self.cout
    }
}

/// 3D convolution layer: weight `(cout, cin, k, k, k)` plus bias, stride 1.
#[derive(Clone, Debug)]
pub struct Conv3d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl Conv3d {
    pub fn new(name: &str, cin: usize, cout: usize, k: usize) -> Conv3d {
        Conv3d {
            name: name.to_string(),
            cin,
            cout,
            k,
        }
    }

    pub fn init<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut impl Rng) {
        let fan = self.cin * self.k * self.k * self.k;
        init_fan_uniform(
            store,
            rng,
            &format!("{}.weight", self.name),
            &[self.cout, self.cin, self.k, self.k, self.k],
            fan,
        );
        init_fan_uniform(store, rng, &format!("{}.bias", self.name), &[self.cout], fan);
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> NodeId {
        let w = g.param(store, &format!("{}.weight", self.name));
        let b = g.param(store, &format!("{}.bias", self.name));
        let y = g.conv3d(x, w);
        g.add_bias(y, b, 1)
    }

    pub fn param_count(&self) -> usize {
        self.cout * self.cin * self.k * self.k * self.k + self.cout
    }
}

/// Fully connected layer: weight `(out, in)` plus bias, applied to the last
/// axis of a rank-2 input `(rows, in)`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(name: &str, input: usize, output: usize) -> Linear {
        Linear {
            name: name.to_string(),
            input,
            output,
        }
    }

    pub fn init<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut impl Rng) {
        init_fan_uniform(
            store,
            rng,
            &format!("{}.weight", self.name),
            &[self.output, self.input],
            self.input,
        );
        init_fan_uniform(
            store,
            rng,
            &format!("{}.bias", self.name),
            &[self.output],
            self.input,
        );
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> NodeId {
        let w = g.param(store, &format!("{}.weight", self.name));
        let b = g.param(store, &format!("{}.bias", self.name));
        let w_t = g.permute(w, &[1, 0]);
        let y = g.matmul(x, w_t);
        g.add_bias(y, b, 1)
    }

    pub fn param_count(&self) -> usize {
        self.output * self.input + self.output
    }
}

/// Batch normalization layer over channel axis 1: trainable scale and shift
/// plus non-trainable running statistics, all length `c`.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub name: String,
    pub c: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(name: &str, c: usize) -> BatchNorm {
        BatchNorm {
            name: name.to_string(),
            c,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn init<F: Scalar>(&self, store: &mut ParamStore<F>) {
        store.insert(
            &format!("{}.gamma", self.name),
            Tensor::filled(&[self.c], F::one()),
            true,
        );
        store.insert(
            &format!("{}.beta", self.name),
            Tensor::zeros(&[self.c]),
            true,
        );
        store.insert(
            &format!("{}.running_mean", self.name),
            Tensor::zeros(&[self.c]),
            false,
        );
        store.insert(
            &format!("{}.running_var", self.name),
            Tensor::filled(&[self.c], F::one()),
            false,
        );
    }

    /// Training mode updates the running statistics inside `store`.
    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &mut ParamStore<F>,
        x: NodeId,
        training: bool,
    ) -> NodeId {
        let gamma = g.param(store, &format!("{}.gamma", self.name));
        let beta = g.param(store, &format!("{}.beta", self.name));
        let mean_name = format!("{}.running_mean", self.name);
        let var_name = format!("{}.running_var", self.name);
        let mut rm = store.get(&mean_name).tensor.clone();
        let mut rv = store.get(&var_name).tensor.clone();
        let y = g.batch_norm(
            x,
            gamma,
            beta,
            &mut rm,
            &mut rv,
            training,
            F::from_f64(self.momentum),
            F::from_f64(self.eps),
        );
        if training {
            store.get_mut(&mean_name).tensor = rm;
            store.get_mut(&var_name).tensor = rv;
        }
        y
    }

    pub fn param_count(&self) -> usize {
        4 * self.c
    }
}

/// Multi-head self-attention over a `(batch, tokens, embed)` sequence,
/// composed from projections, batched matrix products, and softmax. Carries
/// no positional information, so it is equivariant to token permutations.
#[derive(Clone, Debug)]
pub struct Mhsa {
    pub name: String,
    pub embed: usize,
    pub heads: usize,
}

impl Mhsa {
    pub fn new(name: &str, embed: usize, heads: usize) -> Mhsa {
        assert!(
            embed.is_multiple_of(heads),
            "embed dim {embed} must divide evenly into {heads} heads"
        );
        Mhsa {
            name: name.to_string(),
            embed,
            heads,
        }
    }

    pub fn init<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut impl Rng) {
        for proj in ["query", "key", "value", "out"] {
            init_fan_uniform(
                store,
                rng,
                &format!("{}.{}.weight", self.name, proj),
                &[self.embed, self.embed],
                self.embed,
            );
            init_fan_uniform(
                store,
                rng,
                &format!("{}.{}.bias", self.name, proj),
                &[self.embed],
                self.embed,
            );
        }
    }

    /// Project tokens through one named linear map: `(b·t, e) -> (b·t, e)`.
    fn project<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        flat: NodeId,
        proj: &str,
    ) -> NodeId {
        let w = g.param(store, &format!("{}.{}.weight", self.name, proj));
        let b = g.param(store, &format!("{}.{}.bias", self.name, proj));
        let w_t = g.permute(w, &[1, 0]);
        let y = g.matmul(flat, w_t);
        g.add_bias(y, b, 1)
    }

    /// Reshape a projected `(b·t, e)` activation into `(b·h, t, dh)`.
    fn split_heads<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        x: NodeId,
        b: usize,
        t: usize,
    ) -> NodeId {
        let dh = self.embed / self.heads;
        let x4 = g.reshape(x, &[b, t, self.heads, dh]);
        let xp = g.permute(x4, &[0, 2, 1, 3]);
        g.reshape(xp, &[b * self.heads, t, dh])
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
    ) -> NodeId {
        let [b, t, e]: [usize; 3] = g
            .value(x)
            .shape()
            .try_into()
            .expect("attention input must be (batch, tokens, embed)");
        assert_eq!(e, self.embed, "embed dim mismatch");
        let dh = self.embed / self.heads;

        let flat = g.reshape(x, &[b * t, e]);
        let q = self.project(g, store, flat, "query");
        let k = self.project(g, store, flat, "key");
        let v = self.project(g, store, flat, "value");
        let qh = self.split_heads(g, q, b, t);
        let kh = self.split_heads(g, k, b, t);
        let vh = self.split_heads(g, v, b, t);

        let k_t = g.permute(kh, &[0, 2, 1]);
        let scores = g.matmul(qh, k_t);
        let scaled = g.scale(scores, F::from_f64(1.0 / (dh as f64).sqrt()));
        let attn = g.softmax(scaled);
        let mixed = g.matmul(attn, vh);

        let m4 = g.reshape(mixed, &[b, self.heads, t, dh]);
        let mp = g.permute(m4, &[0, 2, 1, 3]);
        let merged = g.reshape(mp, &[b * t, e]);
        let out = self.project(g, store, merged, "out");
        g.reshape(out, &[b, t, e])
    }

    pub fn param_count(&self) -> usize {
        4 * (self.embed * self.embed + self.embed)
    }
}

/// Gather parameter gradients from a finished backward pass, keyed by
/// parameter name. Bindings of the same parameter accumulate. Non-trainable
/// parameters are skipped.
pub fn collect_grads<F: Scalar>(
    g: &Graph<F>,
    store: &ParamStore<F>,
) -> BTreeMap<String, Tensor<F>> {
    let mut out: BTreeMap<String, Tensor<F>> = BTreeMap::new();
    for (name, id) in g.bindings() {
        if !store.get(name).trainable {
            continue;
        }
        let Some(grad) = g.grad(*id) else { continue };
        match out.get_mut(name) {
            Some(acc) => acc.add_assign(grad),
            None => {
                out.insert(name.clone(), grad.clone());
            }
        }
    }
    out
}

/// Adam hyperparameters. `weight_decay` is decoupled: it shrinks parameters
/// directly rather than flowing through the moment estimates.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment estimates per parameter, plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState<F: Scalar> {
    t: u64,
    m: BTreeMap<String, Tensor<F>>,
    v: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new() -> AdamState<F> {
        AdamState {
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Apply one update. Only parameters present in `grads` move (plus the
    /// decoupled weight-decay shrink applied to those same parameters).
    pub fn step(
        &mut self,
        store: &mut ParamStore<F>,
        grads: &BTreeMap<String, Tensor<F>>,
        cfg: &AdamConfig,
    ) {
        self.t += 1;
        let b1 = F::from_f64(cfg.beta1);
        let b2 = F::from_f64(cfg.beta2);
        let lr = F::from_f64(cfg.lr);
        let eps = F::from_f64(cfg.eps);
        let wd = F::from_f64(cfg.weight_decay);
        let corr1 = F::from_f64(1.0 - cfg.beta1.powi(self.t as i32));
        let corr2 = F::from_f64(1.0 - cfg.beta2.powi(self.t as i32));
        for (name, grad) in grads {
            let entry = store.get_mut(name);
            assert!(entry.trainable, "gradient for non-trainable parameter {name:?}");
            assert_eq!(
                entry.tensor.shape(),
                grad.shape(),
                "gradient shape mismatch for {name:?}"
            );
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            for i in 0..grad.len() {
                let g = grad.data[i];
                m.data[i] = b1 * m.data[i] + (F::one() - b1) * g;
                v.data[i] = b2 * v.data[i] + (F::one() - b2) * g * g;
                let mhat = m.data[i] / corr1;
                let vhat = v.data[i] / corr2;
                let p = &mut entry.tensor.data[i];
                *p = *p - lr * (mhat / (vhat.sqrt() + eps) + wd * *p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn initialization_respects_the_fan_bound_and_is_reproducible() {
        let build = || {
            let mut store = ParamStore::<f64>::new();
            Conv2d::new("c", 8, 16, 3, 1).init(&mut store, &mut rng(5));
            store
        };
        let a = build();
        let b = build();
        let bound = 1.0 / 72.0f64.sqrt();
        for (name, entry) in a.iter() {
            assert!(
                entry.tensor.data().iter().all(|v| v.abs() < bound),
                "{name} exceeded the init bound"
            );
            assert_eq!(entry.tensor.data(), b.get(name).tensor.data());
        }
    }

    #[test]
    fn linear_layer_matches_a_hand_computed_affine_map() {
        let mut store = ParamStore::<f64>::new();
        store.insert(
            "fc.weight",
            Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            true,
        );
        store.insert("fc.bias", Tensor::from_vec(&[2], vec![0.5, -0.5]), true);
        let layer = Linear::new("fc", 3, 2);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[1, 3], vec![1.0, 1.0, 1.0]));
        let y = layer.forward(&mut g, &store, x);
        assert_eq!(g.value(y).data(), &[6.5, 14.5]);
        assert_eq!(layer.param_count(), 8);
    }

    #[test]
    fn conv_layer_bias_shifts_every_output_channel() {
        let mut store = ParamStore::<f64>::new();
        store.insert("c.weight", Tensor::zeros(&[2, 1, 3, 3]), true);
        store.insert("c.bias", Tensor::from_vec(&[2], vec![1.5, -2.0]), true);
        let layer = Conv2d::new("c", 1, 2, 3, 1);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::filled(&[1, 1, 5, 5], 7.0));
        let y = layer.forward(&mut g, &store, x);
        let yv = g.value(y);
        assert_eq!(yv.shape(), &[1, 2, 3, 3]);
        assert!(yv.data()[..9].iter().all(|&v| v == 1.5));
        assert!(yv.data()[9..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn attention_with_one_token_reduces_to_two_affine_maps() {
        // With a single token the softmax is the constant 1, so the output is
        // out_proj(value_proj(x)) regardless of query/key parameters.
        let embed = 6;
        let mut store = ParamStore::<f64>::new();
        let layer = Mhsa::new("att", embed, 2);
        layer.init(&mut store, &mut rng(11));
        let mut g = Graph::new();
        let x = Tensor::from_vec(&[1, 1, embed], vec![0.3, -0.7, 1.1, 0.0, 0.5, -0.2]);
        let xid = g.leaf(x.clone());
        let y = layer.forward(&mut g, &store, xid);
        assert_eq!(g.value(y).shape(), &[1, 1, embed]);

        let affine = |name: &str, input: &[f64]| -> Vec<f64> {
            let w = &store.get(&format!("att.{name}.weight")).tensor;
            let b = &store.get(&format!("att.{name}.bias")).tensor;
            (0..embed)
                .map(|o| {
                    let mut acc = b.data()[o];
                    for (i, &xi) in input.iter().enumerate() {
                        acc += w.data()[o * embed + i] * xi;
                    }
                    acc
                })
                .collect()
        };
        let expected = affine("out", &affine("value", x.data()));
        for (a, e) in g.value(y).data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "got {a}, expected {e}");
        }
    }

    #[test]
    fn attention_output_keeps_the_sequence_shape() {
        let layer = Mhsa::new("att", 8, 4);
        let mut store = ParamStore::<f32>::new();
        layer.init(&mut store, &mut rng(3));
        let mut g = Graph::new();
        let mut r = rng(4);
        let x = Tensor::from_vec(
            &[2, 9, 8],
            (0..2 * 9 * 8).map(|_| r.gen_range(-1.0f32..1.0)).collect(),
        );
        let xid = g.leaf(x);
        let y = layer.forward(&mut g, &store, xid);
        assert_eq!(g.value(y).shape(), &[2, 9, 8]);
        assert_eq!(layer.param_count(), 4 * (64 + 8));
    }

    #[test]
    fn batch_norm_layer_updates_running_stats_only_in_training_mode() {
        let layer = BatchNorm::new("bn", 2);
        let mut store = ParamStore::<f64>::new();
        layer.init(&mut store);
        let x = Tensor::from_vec(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);

        let mut g = Graph::new();
        let xid = g.leaf(x.clone());
        layer.forward(&mut g, &mut store, xid, false);
        assert_eq!(store.get("bn.running_mean").tensor.data(), &[0.0, 0.0]);

        let mut g = Graph::new();
        let xid = g.leaf(x);
        layer.forward(&mut g, &mut store, xid, true);
        // Channel means: ch0 over {1,2,5,6} = 3.5, ch1 over {3,4,7,8} = 5.5;
        // running = 0.9 * 0 + 0.1 * mean.
        let rm = store.get("bn.running_mean").tensor.data();
        assert!((rm[0] - 0.35).abs() < 1e-12);
        assert!((rm[1] - 0.55).abs() < 1e-12);
    }

    #[test]
    fn collect_grads_skips_non_trainable_and_merges_repeat_bindings() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_vec(&[1], vec![2.0]), true);
        store.insert("frozen", Tensor::from_vec(&[1], vec![5.0]), false);
        let mut g = Graph::new();
        let w1 = g.param(&store, "w");
        let w2 = g.param(&store, "w");
        let f = g.param(&store, "frozen");
        let a = g.add(w1, w2);
        let b = g.add(a, f);
        g.backward(b);
        let grads = collect_grads(&g, &store);
        assert_eq!(grads.len(), 1);
        // loss = w + w + frozen, so dloss/dw accumulates to 2.
        assert_eq!(grads["w"].data(), &[2.0]);
    }

    #[test]
    fn adam_leaves_parameters_alone_when_gradients_are_zero() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]), true);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[3]));
        let mut adam = AdamState::new();
        adam.step(&mut store, &grads, &AdamConfig::default());
        assert_eq!(store.get("w").tensor.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_adam_step_moves_against_the_gradient_sign() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_vec(&[2], vec![0.0, 0.0]), true);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::from_vec(&[2], vec![3.0, -0.01]), );
        let mut adam = AdamState::new();
        let cfg = AdamConfig::default();
        adam.step(&mut store, &grads, &cfg);
        let w = store.get("w").tensor.data();
        // Bias-corrected first step is ≈ lr * sign(g), independent of |g|.
        assert!((w[0] + cfg.lr).abs() < 1e-5);
        assert!((w[1] - cfg.lr).abs() < 1e-5);
    }

    #[test]
    fn adam_minimizes_a_quadratic_bowl() {
        // loss(w) = |w - target|^2, gradient computed through the graph.
        let target = [0.3, -1.2, 0.8, 2.0];
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros(&[1, 4]), true);
        let mut adam = AdamState::new();
        let mut cfg = AdamConfig::default();
        let mut last = f64::INFINITY;
        for step in 0..1500 {
            // Step decay: Adam oscillates at the learning-rate scale near an
            // optimum, so shrinking lr is what reaches high precision.
            cfg.lr = match step {
                0..=699 => 0.01,
                700..=999 => 1e-3,
                1000..=1299 => 1e-4,
                _ => 1e-5,
            };
            let mut g = Graph::new();
            let w = g.param(&store, "w");
            let t = g.leaf(Tensor::from_vec(&[1, 4], target.to_vec()));
            let neg_t = g.scale(t, -1.0);
            let diff = g.add(w, neg_t);
            let diff_t = g.permute(diff, &[1, 0]);
            let sq = g.matmul(diff, diff_t);
            let loss = g.reshape(sq, &[1]);
            g.backward(loss);
            last = g.value(loss).data()[0];
            let grads = collect_grads(&g, &store);
            adam.step(&mut store, &grads, &cfg);
        }
        assert!(last < 1e-6, "loss failed to converge: {last}");
        for (w, t) in store.get("w").tensor.data().iter().zip(&target) {
            assert!((w - t).abs() < 1e-3);
        }
    }

    #[test]
    fn decoupled_weight_decay_shrinks_the_parameter_norm() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_vec(&[2], vec![4.0, -3.0]), true);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[2]));
        let mut adam = AdamState::new();
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let norm = |s: &ParamStore<f64>| {
            s.get("w")
                .tensor
                .data()
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = norm(&store);
        for _ in 0..10 {
            adam.step(&mut store, &grads, &cfg);
            let cur = norm(&store);
            assert!(cur < prev, "norm must shrink under weight decay");
            prev = cur;
        }
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_parameter_names_are_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros(&[1]), true);
        store.insert("w", Tensor::zeros(&[1]), true);
    }

    #[test]
    fn casting_a_store_preserves_names_flags_and_values() {
        let mut store = ParamStore::<f32>::new();
        store.insert("a", Tensor::from_vec(&[2], vec![1.5, -0.25]), true);
        store.insert("b", Tensor::zeros(&[3]), false);
        let wide = store.cast::<f64>();
        assert_eq!(wide.get("a").tensor.data(), &[1.5, -0.25]);
        assert!(!wide.get("b").trainable);
        assert_eq!(wide.len(), 2);
    }
}
