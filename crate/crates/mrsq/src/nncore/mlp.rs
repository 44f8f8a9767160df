//! Configurable multi-layer perceptrons assembled from the layer vocabulary.
//! A network owns its parameter names inside a shared [`ParameterStore`];
//! forward passes return explicit caches consumed by the matching backward.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    affine_layer_norm_backward, affine_layer_norm_forward, dense_backward, dense_forward,
    elu_backward, elu_forward, layer_norm_backward, layer_norm_forward, relu_backward,
    relu_forward, sem_backward, sem_forward, tanh_backward, tanh_forward, DenseCache,
    LayerNormCache,
};
use super::params::ParameterStore;
use super::tensor::Tensor;

/// Normalization applied between the linear map and the activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    None,
    /// Parameter-free normalization.
    Free,
    /// Normalization with learned scale and shift.
    Affine,
}

/// Activation applied after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    None,
    Elu,
    Relu,
    Tanh,
    /// Group-wise softmax producing simplicial embeddings.
    Sem { group: usize },
}

#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub width: usize,
    pub norm: Norm,
    pub act: Act,
}

#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl MlpSpec {
    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.width).unwrap_or(self.input)
    }

    fn validate(&self) {
        assert!(!self.layers.is_empty(), "network needs at least one layer");
        for layer in &self.layers {
            if let Act::Sem { group } = layer.act {
                assert!(
                    group > 0 && layer.width % group == 0,
                    "layer width {} not divisible into groups of {group}",
                    layer.width
                );
            }
        }
    }
}

/// Fills a `[fan_in, fan_out]` weight matrix with the usual uniform fan-based
/// initialization; biases start at zero.
pub fn xavier_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let values = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], values)
}

#[derive(Debug, Clone)]
pub struct Mlp {
    prefix: String,
    spec: MlpSpec,
}

#[derive(Debug)]
struct LayerCache {
    dense: DenseCache,
    norm: Option<LayerNormCache>,
    /// Post-activation output, which every activation here uses as its
    /// backward cache. `None` for `Act::None`.
    act_out: Option<Tensor>,
}

#[derive(Debug)]
pub struct MlpCache {
    layers: Vec<LayerCache>,
    /// Output of the final linear map before its normalization/activation,
    /// exposed for pre-activation penalties.
    pub final_linear: Tensor,
    pub output: Tensor,
}

impl Mlp {
    /// Registers freshly initialized parameters under `prefix` and returns
    /// the network handle.
    pub fn new(store: &mut ParameterStore, rng: &mut ChaCha8Rng, prefix: &str, spec: MlpSpec) -> Self {
        spec.validate();
        let mut fan_in = spec.input;
        for (i, layer) in spec.layers.iter().enumerate() {
            store.insert(&format!("{prefix}.l{i}.w"), xavier_uniform(rng, fan_in, layer.width));
            store.insert(&format!("{prefix}.l{i}.b"), Tensor::zeros(&[layer.width]));
            if layer.norm == Norm::Affine {
                store.insert(
                    &format!("{prefix}.l{i}.ln_w"),
                    Tensor::from_vec(&[layer.width], vec![1.0; layer.width]),
                );
                store.insert(&format!("{prefix}.l{i}.ln_b"), Tensor::zeros(&[layer.width]));
            }
            fan_in = layer.width;
        }
        Mlp {
            prefix: prefix.to_string(),
            spec,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim()
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor) -> MlpCache {
        let mut current = x.clone();
        let mut layers = Vec::with_capacity(self.spec.layers.len());
        let mut final_linear = Tensor::zeros(&[0, 0]);
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let w = store.get(&format!("{}.l{i}.w", self.prefix));
            let b = store.get(&format!("{}.l{i}.b", self.prefix));
            let (linear, dense) = dense_forward(&current, w, b);
            if i == self.spec.layers.len() - 1 {
                final_linear = linear.clone();
            }
            let (normed, norm_cache) = match layer.norm {
                Norm::None => (linear, None),
                Norm::Free => {
                    let (y, c) = layer_norm_forward(&linear);
                    (y, Some(c))
                }
                Norm::Affine => {
                    let scale = store.get(&format!("{}.l{i}.ln_w", self.prefix));
                    let shift = store.get(&format!("{}.l{i}.ln_b", self.prefix));
                    let (y, c) = affine_layer_norm_forward(&linear, scale.values(), shift.values());
                    (y, Some(c))
                }
            };
            let (out, act_out) = match layer.act {
                Act::None => (normed, None),
                Act::Elu => {
                    let y = elu_forward(&normed);
                    (y.clone(), Some(y))
                }
                Act::Relu => {
                    let y = relu_forward(&normed);
                    (y.clone(), Some(y))
                }
                Act::Tanh => {
                    let y = tanh_forward(&normed);
                    (y.clone(), Some(y))
                }
                Act::Sem { group } => {
                    let y = sem_forward(&normed, group);
                    (y.clone(), Some(y))
                }
            };
            layers.push(LayerCache {
                dense,
                norm: norm_cache,
                act_out,
            });
            current = out;
        }
        MlpCache {
            layers,
            final_linear,
            output: current,
        }
    }

    /// Forward pass returning only the output, for paths that never backprop.
    pub fn output(&self, store: &ParameterStore, x: &Tensor) -> Tensor {
        self.forward(store, x).output
    }

    /// Backpropagates `d_out`, accumulating parameter gradients into the
    /// store, and returns the gradient with respect to the input.
    pub fn backward(&self, store: &mut ParameterStore, cache: &MlpCache, d_out: &Tensor) -> Tensor {
        self.backward_with_preact(store, cache, d_out, None)
    }

    /// Like [`Mlp::backward`] but also injects `d_preact` into the gradient
    /// of the final linear output, for losses that penalize it directly.
    pub fn backward_with_preact(
        &self,
        store: &mut ParameterStore,
        cache: &MlpCache,
        d_out: &Tensor,
        d_preact: Option<&Tensor>,
    ) -> Tensor {
        let mut grad = d_out.clone();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let lc = &cache.layers[i];
            grad = match layer.act {
                Act::None => grad,
                Act::Elu => elu_backward(lc.act_out.as_ref().unwrap(), &grad),
                Act::Relu => relu_backward(lc.act_out.as_ref().unwrap(), &grad),
                Act::Tanh => tanh_backward(lc.act_out.as_ref().unwrap(), &grad),
                Act::Sem { group } => sem_backward(lc.act_out.as_ref().unwrap(), group, &grad),
            };
            grad = match layer.norm {
                Norm::None => grad,
                Norm::Free => layer_norm_backward(lc.norm.as_ref().unwrap(), &grad),
                Norm::Affine => {
                    let scale_name = format!("{}.l{i}.ln_w", self.prefix);
                    let scale = store.get(&scale_name).values().to_vec();
                    let (dx, ds, dt) =
                        affine_layer_norm_backward(lc.norm.as_ref().unwrap(), &scale, &grad);
                    store.accum_grad(&scale_name, &ds);
                    store.accum_grad(&format!("{}.l{i}.ln_b", self.prefix), &dt);
                    dx
                }
            };
            if i == self.spec.layers.len() - 1 {
                if let Some(extra) = d_preact {
                    for (g, e) in grad.values_mut().iter_mut().zip(extra.values()) {
                        *g += e;
                    }
                }
            }
            let w_name = format!("{}.l{i}.w", self.prefix);
            let w = store.get(&w_name).clone();
            let (dx, dw, db) = dense_backward(&lc.dense, &w, &grad);
            store.accum_grad(&w_name, dw.values());
            store.accum_grad(&format!("{}.l{i}.b", self.prefix), &db);
            grad = dx;
        }
        grad
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            names.push(format!("{}.l{i}.w", self.prefix));
            names.push(format!("{}.l{i}.b", self.prefix));
            if layer.norm == Norm::Affine {
                names.push(format!("{}.l{i}.ln_w", self.prefix));
                names.push(format!("{}.l{i}.ln_b", self.prefix));
            }
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{finite_diff_gradient, max_relative_gap};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn readout(y: &Tensor, coeff: &[f64]) -> f64 {
        y.values().iter().zip(coeff).map(|(a, b)| a * b).sum()
    }

    fn spec_under_test() -> MlpSpec {
        MlpSpec {
            input: 5,
            layers: vec![
                LayerSpec { width: 8, norm: Norm::Free, act: Act::Elu },
                LayerSpec { width: 8, norm: Norm::Free, act: Act::Relu },
                LayerSpec { width: 8, norm: Norm::Affine, act: Act::Sem { group: 4 } },
            ],
        }
    }

    #[test]
    fn full_network_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut store = ParameterStore::new();
        let net = Mlp::new(&mut store, &mut rng, "net", spec_under_test());
        let x = Tensor::from_vec(&[2, 5], (0..10).map(|i| (i as f64) * 0.3 - 1.2).collect());
        let coeff: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let names = net.param_names();
        let fd = finite_diff_gradient(&mut store, &names, 1e-5, |s| {
            readout(&net.output(s, &x), &coeff)
        });

        store.zero_grads();
        let cache = net.forward(&store, &x);
        let dy = Tensor::from_vec(cache.output.shape(), coeff.clone());
        net.backward(&mut store, &cache, &dy);

        for name in &names {
            let analytic = store.get(name).grad().unwrap();
            let gap = max_relative_gap(analytic, &fd[name]);
            assert!(gap < 1e-3, "{name} gradient gap {gap}");
        }
    }

    #[test]
    fn preactivation_penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut store = ParameterStore::new();
        let net = Mlp::new(&mut store, &mut rng, "net", spec_under_test());
        let x = Tensor::from_vec(&[2, 5], (0..10).map(|i| 0.15 * i as f64 - 0.7).collect());

        // Loss = mean of squared final-layer linear outputs.
        let names = net.param_names();
        let fd = finite_diff_gradient(&mut store, &names, 1e-5, |s| {
            let cache = net.forward(s, &x);
            let pre = cache.final_linear.values();
            pre.iter().map(|v| v * v).sum::<f64>() / pre.len() as f64
        });

        store.zero_grads();
        let cache = net.forward(&store, &x);
        let n = cache.final_linear.len() as f64;
        let d_pre = Tensor::from_vec(
            cache.final_linear.shape(),
            cache.final_linear.values().iter().map(|v| 2.0 * v / n).collect(),
        );
        let zero = Tensor::zeros(cache.output.shape());
        net.backward_with_preact(&mut store, &cache, &zero, Some(&d_pre));

        for name in &names {
            let analytic = store.get(name).grad().unwrap();
            let gap = max_relative_gap(analytic, &fd[name]);
            assert!(gap < 1e-3, "{name} gradient gap {gap}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut store = ParameterStore::new();
        let net = Mlp::new(&mut store, &mut rng, "net", MlpSpec {
            input: 3,
            layers: vec![
                LayerSpec { width: 6, norm: Norm::Free, act: Act::Elu },
                LayerSpec { width: 2, norm: Norm::None, act: Act::Tanh },
            ],
        });
        store.insert("x", Tensor::from_vec(&[1, 3], vec![0.2, -0.4, 0.9]));
        let coeff = vec![0.8, -0.3];
        let names = vec!["x".to_string()];
        let fd = finite_diff_gradient(&mut store, &names, 1e-5, |s| {
            readout(&net.output(s, s.get("x")), &coeff)
        });
        let cache = net.forward(&store, store.get("x"));
        let dy = Tensor::from_vec(cache.output.shape(), coeff);
        let dx = net.backward(&mut store, &cache, &dy);
        assert!(max_relative_gap(dx.values(), &fd["x"]) < 1e-6);
    }

    #[test]
    fn initialization_is_deterministic_per_seed() {
        let build = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParameterStore::new();
            Mlp::new(&mut store, &mut rng, "net", spec_under_test());
            store
        };
        let a = build(9);
        let b = build(9);
        let c = build(10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
