//! Finite-difference verification of reverse-mode gradients.
//!
//! Two harnesses: [`max_relative_gradient_error`] perturbs explicit input
//! tensors, [`max_relative_param_gradient_error`] perturbs every trainable
//! entry of a [`ParamStore`] and compares against [`collect_grads`]. Both
//! rebuild the graph from scratch per perturbation, so stateful forwards
//! (batch-norm running statistics) must be reset inside the builder closure.
//!
//! [`op_gradient_report`] runs a fixed battery of checks — every
//! differentiable operation on at least five random shape configurations —
//! and reports the worst relative error per operation. It backs both the unit
//! tests and the command-line `gradcheck` report.

use rand::Rng;

use super::nn::{collect_grads, Mhsa, ParamStore};
use super::{Graph, NodeId, Tensor};
use crate::noise::stream;

/// Tolerance used by the standard battery: central differences in `f64`
/// agree with reverse-mode gradients to this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn step_size(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between reverse-mode and central-difference gradients
/// of `build`'s scalar output with respect to every element of `inputs`.
///
/// `build` receives leaf nodes holding the (possibly perturbed) inputs and
/// must return a single-element node.
pub fn max_relative_gradient_error<B>(inputs: &[Tensor<f64>], build: B) -> f64
where
    B: Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
{
    let eval = |tensors: &[Tensor<f64>]| -> (Graph<f64>, Vec<NodeId>, NodeId) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &ids);
        assert_eq!(g.value(out).len(), 1, "gradcheck target must be scalar");
        (g, ids, out)
    };

    let (mut g, ids, out) = eval(inputs);
    g.backward(out);
    let analytic: Vec<Tensor<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x = input.data()[j];
            let h = step_size(x);
            work[ti].data_mut()[j] = x + h;
            let (g_plus, _, out_plus) = eval(&work);
            let f_plus = g_plus.value(out_plus).data()[0];
            work[ti].data_mut()[j] = x - h;
            let (g_minus, _, out_minus) = eval(&work);
            let f_minus = g_minus.value(out_minus).data()[0];
            work[ti].data_mut()[j] = x;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[ti].data()[j], numeric));
        }
    }
    worst
}

/// Worst relative error over every trainable element of `store`. `build`
/// replays the model forward (binding parameters by name via
/// [`Graph::param`]) and returns the scalar loss node.
pub fn max_relative_param_gradient_error<B>(store: &ParamStore<f64>, build: B) -> f64
where
    B: Fn(&mut Graph<f64>, &ParamStore<f64>) -> NodeId,
{
    let eval = |s: &ParamStore<f64>| -> (Graph<f64>, NodeId) {
        let mut g = Graph::new();
        let out = build(&mut g, s);
        assert_eq!(g.value(out).len(), 1, "gradcheck target must be scalar");
        (g, out)
    };

    let (mut g, out) = eval(store);
    g.backward(out);
    let analytic = collect_grads(&g, store);

    let names: Vec<String> = store
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    let mut worst = 0.0f64;
    let mut work = store.clone();
    for name in &names {
        for j in 0..store.get(name).tensor.len() {
            let x = store.get(name).tensor.data()[j];
            let h = step_size(x);
            work.get_mut(name).tensor.data_mut()[j] = x + h;
            let (gp, op) = eval(&work);
            let f_plus = gp.value(op).data()[0];
            work.get_mut(name).tensor.data_mut()[j] = x - h;
            let (gm, om) = eval(&work);
            let f_minus = gm.value(om).data()[0];
            work.get_mut(name).tensor.data_mut()[j] = x;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic
                .get(name)
                .map(|t| t.data()[j])
                .unwrap_or(0.0);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = stream(7400, seed);
    Tensor::from_vec(
        shape,
        (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
}

/// Random values kept away from zero, for ops with a kink at the origin
/// (ReLU) where finite differences straddle the non-smooth point.
fn rand_tensor_off_origin(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut t = rand_tensor(shape, seed);
    for v in t.data_mut() {
        *v += 0.05 * v.signum();
    }
    t
}

/// Contract any node to a scalar through a fixed random linear functional, so
/// every output element contributes to the checked gradient.
fn scalarize(g: &mut Graph<f64>, y: NodeId, seed: u64) -> NodeId {
    let n = g.value(y).len();
    let flat = g.reshape(y, &[1, n]);
    let c = g.leaf(rand_tensor(&[n, 1], seed ^ 0x5eed));
    let prod = g.matmul(flat, c);
    g.reshape(prod, &[1])
}

fn report_add() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![1usize],
        vec![4],
        vec![2, 3],
        vec![2, 2, 2],
        vec![3, 1, 4],
    ]
    .iter()
    .enumerate()
    {
        let seed = i as u64;
        let inputs = [rand_tensor(shape, seed), rand_tensor(shape, seed + 50)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.add(ids[0], ids[1]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_scale() -> f64 {
    let mut worst = 0.0f64;
    for (i, (shape, c)) in [
        (vec![3usize], 2.0),
        (vec![2, 2], -0.5),
        (vec![5], 0.0),
        (vec![1, 4], 1.7),
        (vec![2, 3, 2], -3.0),
    ]
    .iter()
    .enumerate()
    {
        let seed = 10 + i as u64;
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.scale(ids[0], *c);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_add_bias() -> f64 {
    let mut worst = 0.0f64;
    for (i, (shape, axis)) in [
        (vec![3usize, 4], 1usize),
        (vec![2, 3, 5], 1),
        (vec![2, 3, 4], 0),
        (vec![4], 0),
        (vec![2, 2, 2, 3], 1),
    ]
    .iter()
    .enumerate()
    {
        let seed = 20 + i as u64;
        let inputs = [
            rand_tensor(shape, seed),
            rand_tensor(&[shape[*axis]], seed + 50),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.add_bias(ids[0], ids[1], *axis);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_relu() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![5usize],
        vec![2, 4],
        vec![3, 3],
        vec![2, 2, 3],
        vec![1, 7],
    ]
    .iter()
    .enumerate()
    {
        let seed = 30 + i as u64;
        let inputs = [rand_tensor_off_origin(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.relu(ids[0]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_reshape_permute() -> f64 {
    let mut worst = 0.0f64;
    for (i, (shape, perm)) in [
        (vec![2usize, 3], vec![1usize, 0]),
        (vec![2, 3, 4], vec![2, 0, 1]),
        (vec![2, 2, 2], vec![1, 2, 0]),
        (vec![1, 4, 3], vec![0, 2, 1]),
        (vec![2, 3, 2, 2], vec![3, 1, 0, 2]),
    ]
    .iter()
    .enumerate()
    {
        let seed = 40 + i as u64;
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let n = g.value(ids[0]).len();
            let p = g.permute(ids[0], perm);
            let y = g.reshape(p, &[n]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_concat() -> f64 {
    let mut worst = 0.0f64;
    for (i, (a, b, axis)) in [
        (vec![2usize, 2], vec![2usize, 3], 1usize),
        (vec![1, 4], vec![2, 4], 0),
        (vec![2, 1, 3], vec![2, 2, 3], 1),
        (vec![3, 2], vec![3, 2], 1),
        (vec![2, 2, 2], vec![1, 2, 2], 0),
    ]
    .iter()
    .enumerate()
    {
        let seed = 50 + i as u64;
        let inputs = [rand_tensor(a, seed), rand_tensor(b, seed + 50)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.concat(&[ids[0], ids[1]], *axis);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_matmul() -> f64 {
    let mut worst = 0.0f64;
    for (i, (m, k, n)) in [(1usize, 1usize, 1usize), (2, 3, 4), (3, 1, 5), (4, 4, 2), (1, 5, 3)]
        .iter()
        .enumerate()
    {
        let seed = 60 + i as u64;
        let inputs = [rand_tensor(&[*m, *k], seed), rand_tensor(&[*k, *n], seed + 50)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.matmul(ids[0], ids[1]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_matmul_batched() -> f64 {
    let mut worst = 0.0f64;
    for (i, (gdim, m, k, n)) in [
        (1usize, 2usize, 2usize, 2usize),
        (2, 2, 3, 2),
        (3, 1, 4, 2),
        (2, 3, 2, 3),
        (4, 2, 2, 1),
    ]
    .iter()
    .enumerate()
    {
        let seed = 70 + i as u64;
        let inputs = [
            rand_tensor(&[*gdim, *m, *k], seed),
            rand_tensor(&[*gdim, *k, *n], seed + 50),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.matmul(ids[0], ids[1]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_softmax() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![2usize, 3],
        vec![1, 5],
        vec![3, 2, 4],
        vec![2, 1],
        vec![4, 7],
    ]
    .iter()
    .enumerate()
    {
        let seed = 80 + i as u64;
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.softmax(ids[0]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_circular_pad2() -> f64 {
    let mut worst = 0.0f64;
    for (i, (shape, pad)) in [
        (vec![1usize, 1, 2, 2], 1usize),
        (vec![2, 2, 3, 3], 1),
        (vec![1, 3, 2, 4], 2),
        (vec![1, 1, 4, 3], 2),
        (vec![2, 1, 3, 2], 1),
    ]
    .iter()
    .enumerate()
    {
        let seed = 90 + i as u64;
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.circular_pad2(ids[0], *pad);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_circular_pad3() -> f64 {
    let mut worst = 0.0f64;
    for (i, (shape, pad)) in [
        (vec![1usize, 1, 2, 2, 2], 1usize),
        (vec![1, 2, 2, 3, 2], 1),
        (vec![2, 1, 3, 2, 2], 1),
        (vec![1, 1, 2, 2, 3], 2),
        (vec![1, 1, 3, 3, 3], 1),
    ]
    .iter()
    .enumerate()
    {
        let seed = 100 + i as u64;
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.circular_pad3(ids[0], *pad);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_conv2d() -> f64 {
    let mut worst = 0.0f64;
    for (i, (b, cin, h, w, cout, k, stride)) in [
        (1usize, 1usize, 3usize, 3usize, 1usize, 1usize, 1usize),
        (1, 2, 4, 4, 3, 3, 1),
        (2, 1, 5, 4, 2, 2, 1),
        (1, 3, 5, 5, 2, 3, 2),
        (2, 2, 6, 5, 1, 3, 2),
        (1, 1, 4, 4, 2, 2, 2),
    ]
    .iter()
    .enumerate()
    {
        let seed = 110 + i as u64;
        let inputs = [
            rand_tensor(&[*b, *cin, *h, *w], seed),
            rand_tensor(&[*cout, *cin, *k, *k], seed + 50),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.conv2d(ids[0], ids[1], *stride);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_conv3d() -> f64 {
    let mut worst = 0.0f64;
    for (i, (b, cin, d, h, w, cout, k)) in [
        (1usize, 1usize, 2usize, 3usize, 3usize, 1usize, 1usize),
        (1, 2, 3, 4, 4, 2, 2),
        (2, 1, 2, 4, 3, 1, 2),
        (1, 1, 3, 3, 3, 2, 3),
        (2, 2, 2, 3, 3, 3, 1),
    ]
    .iter()
    .enumerate()
    {
        let seed = 120 + i as u64;
        let inputs = [
            rand_tensor(&[*b, *cin, *d, *h, *w], seed),
            rand_tensor(&[*cout, *cin, *k, *k, *k], seed + 50),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.conv3d(ids[0], ids[1]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_conv_transpose2d() -> f64 {
    let mut worst = 0.0f64;
    for (i, (b, cin, h, w, cout, k, stride)) in [
        (1usize, 1usize, 2usize, 2usize, 1usize, 2usize, 1usize),
        (1, 2, 3, 3, 2, 3, 1),
        (2, 1, 2, 3, 3, 2, 2),
        (1, 3, 3, 2, 2, 3, 2),
        (2, 2, 4, 4, 1, 2, 2),
        (1, 1, 1, 1, 2, 3, 1),
    ]
    .iter()
    .enumerate()
    {
        let seed = 130 + i as u64;
        let inputs = [
            rand_tensor(&[*b, *cin, *h, *w], seed),
            rand_tensor(&[*cin, *cout, *k, *k], seed + 50),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.conv_transpose2d(ids[0], ids[1], *stride);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_batch_norm_train() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![2usize, 1, 3],
        vec![3, 2, 4],
        vec![2, 3, 2, 2],
        vec![4, 2, 5],
        vec![2, 2, 1],
    ]
    .iter()
    .enumerate()
    {
        let seed = 140 + i as u64;
        let c = shape[1];
        let inputs = [
            rand_tensor(shape, seed),
            rand_tensor_off_origin(&[c], seed + 50),
            rand_tensor(&[c], seed + 60),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let mut rm = Tensor::zeros(&[c]);
            let mut rv = Tensor::filled(&[c], 1.0);
            let y = g.batch_norm(ids[0], ids[1], ids[2], &mut rm, &mut rv, true, 0.1, 1e-5);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_batch_norm_eval() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![1usize, 2, 3],
        vec![2, 3, 2],
        vec![1, 1, 5],
        vec![3, 2, 2, 2],
        vec![1, 4, 2],
    ]
    .iter()
    .enumerate()
    {
        let seed = 150 + i as u64;
        let c = shape[1];
        let base_mean = rand_tensor(&[c], seed + 70);
        let mut base_var = rand_tensor(&[c], seed + 80);
        for v in base_var.data_mut() {
            *v = v.abs() + 0.5; // variances must be positive
        }
        let inputs = [
            rand_tensor(shape, seed),
            rand_tensor_off_origin(&[c], seed + 50),
            rand_tensor(&[c], seed + 60),
        ];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let mut rm = base_mean.clone();
            let mut rv = base_var.clone();
            let y = g.batch_norm(ids[0], ids[1], ids[2], &mut rm, &mut rv, false, 0.1, 1e-5);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_global_avg_pool() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![1usize, 1, 4],
        vec![2, 3, 5],
        vec![1, 2, 3, 3],
        vec![2, 1, 2, 2, 2],
        vec![3, 4, 2],
    ]
    .iter()
    .enumerate()
    {
        let seed = 160 + i as u64;
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let y = g.global_avg_pool(ids[0]);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_softmax_cross_entropy() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![1usize, 2],
        vec![3, 4],
        vec![2, 4, 3],
        vec![1, 3, 2, 2],
        vec![2, 2, 5],
    ]
    .iter()
    .enumerate()
    {
        let seed = 170 + i as u64;
        let classes = shape[1];
        let sites: usize = shape[2..].iter().product();
        let count = shape[0] * sites;
        let mut rng = stream(7500, seed);
        let labels: Vec<usize> = (0..count).map(|_| rng.gen_range(0..classes)).collect();
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            g.softmax_cross_entropy(ids[0], &labels)
        }));
    }
    worst
}

fn report_sigmoid_bce() -> f64 {
    let mut worst = 0.0f64;
    for (i, shape) in [
        vec![1usize],
        vec![4],
        vec![2, 3],
        vec![3, 1, 2],
        vec![2, 4],
    ]
    .iter()
    .enumerate()
    {
        let seed = 180 + i as u64;
        let count: usize = shape.iter().product();
        let mut rng = stream(7600, seed);
        let targets: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let inputs = [rand_tensor(shape, seed)];
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            g.sigmoid_bce(ids[0], &targets)
        }));
    }
    worst
}

fn report_attention() -> f64 {
    let mut worst = 0.0f64;
    for (i, (b, t, e, heads)) in [
        (1usize, 1usize, 4usize, 1usize),
        (1, 2, 4, 2),
        (2, 3, 6, 2),
        (1, 4, 8, 4),
        (2, 2, 4, 4),
    ]
    .iter()
    .enumerate()
    {
        let seed = 190 + i as u64;
        let layer = Mhsa::new("att", *e, *heads);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut stream(7700, seed));
        store.insert("input", rand_tensor(&[*b, *t, *e], seed), true);
        worst = worst.max(max_relative_param_gradient_error(&store, |g, s| {
            let x = g.param(s, "input");
            let y = layer.forward(g, s, x);
            scalarize(g, y, seed)
        }));
    }
    worst
}

fn report_composite_network() -> f64 {
    // End-to-end chain touching most ops at once: circular pad, strided
    // conv, batch norm, ReLU, transposed conv, pooling, cross-entropy.
    let mut worst = 0.0f64;
    for (i, (b, cin, hw)) in [(2usize, 1usize, 3usize), (2, 2, 4)].iter().enumerate() {
        let seed = 200 + i as u64;
        let cmid = 2;
        let classes = 3;
        let inputs = [
            rand_tensor(&[*b, *cin, *hw, *hw], seed),
            rand_tensor(&[cmid, *cin, 3, 3], seed + 10),
            rand_tensor_off_origin(&[cmid], seed + 20),
            rand_tensor(&[cmid], seed + 30),
            rand_tensor(&[cmid, classes, 2, 2], seed + 40),
        ];
        let mut rng = stream(7800, seed);
        let labels: Vec<usize> = (0..*b).map(|_| rng.gen_range(0..classes)).collect();
        worst = worst.max(max_relative_gradient_error(&inputs, |g, ids| {
            let padded = g.circular_pad2(ids[0], 1);
            let conv = g.conv2d(padded, ids[1], 1);
            let mut rm = Tensor::zeros(&[2]);
            let mut rv = Tensor::filled(&[2], 1.0);
            let bn = g.batch_norm(conv, ids[2], ids[3], &mut rm, &mut rv, true, 0.1, 1e-5);
            let act = g.relu(bn);
            let up = g.conv_transpose2d(act, ids[4], 1);
            let pooled = g.global_avg_pool(up);
            g.softmax_cross_entropy(pooled, &labels)
        }));
    }
    worst
}

/// Run the full finite-difference battery. Returns `(operation, worst
/// relative error)` pairs; every entry is expected to stay below
/// [`GRADCHECK_TOLERANCE`].
pub fn op_gradient_report() -> Vec<(&'static str, f64)> {
    vec![
        ("add", report_add()),
        ("scale", report_scale()),
        ("add_bias", report_add_bias()),
        ("relu", report_relu()),
        ("reshape_permute", report_reshape_permute()),
        ("concat", report_concat()),
        ("matmul", report_matmul()),
        ("matmul_batched", report_matmul_batched()),
        ("softmax", report_softmax()),
        ("circular_pad2", report_circular_pad2()),
        ("circular_pad3", report_circular_pad3()),
        ("conv2d", report_conv2d()),
        ("conv3d", report_conv3d()),
        ("conv_transpose2d", report_conv_transpose2d()),
        ("batch_norm_train", report_batch_norm_train()),
        ("batch_norm_eval", report_batch_norm_eval()),
        ("global_avg_pool", report_global_avg_pool()),
        ("softmax_cross_entropy", report_softmax_cross_entropy()),
        ("sigmoid_bce", report_sigmoid_bce()),
        ("attention", report_attention()),
        ("composite_network", report_composite_network()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harness_confirms_a_known_quadratic_gradient() {
        // f(x) = sum(x^2) via x · xᵀ has gradient 2x; the harness should
        // report essentially zero error.
        let x = rand_tensor(&[1, 6], 1);
        let err = max_relative_gradient_error(&[x], |g, ids| {
            let xt = g.permute(ids[0], &[1, 0]);
            let y = g.matmul(ids[0], xt);
            g.reshape(y, &[1])
        });
        assert!(err < 1e-7, "quadratic gradcheck error {err}");
    }

    #[test]
    fn every_operation_matches_finite_differences() {
        for (op, err) in op_gradient_report() {
            assert!(
                err < GRADCHECK_TOLERANCE,
                "operation {op} gradient error {err} exceeds {GRADCHECK_TOLERANCE}"
            );
        }
    }

    #[test]
    fn param_harness_covers_store_bound_layers() {
        use super::super::nn::Linear;
        let layer = Linear::new("fc", 3, 2);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut stream(7900, 0));
        store.insert("input", rand_tensor(&[2, 3], 5), true);
        let err = max_relative_param_gradient_error(&store, |g, s| {
            let x = g.param(s, "input");
            let y = layer.forward(g, s, x);
            scalarize(g, y, 5)
        });
        assert!(err < GRADCHECK_TOLERANCE, "linear layer gradcheck error {err}");
    }
}
