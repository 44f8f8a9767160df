//! Named parameter storage with per-parameter AdamW state. Iteration order is
//! lexicographic (BTreeMap), which keeps every reduction over parameters
//! bitwise reproducible.

use std::collections::BTreeMap;

use super::tensor::Tensor;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First/second moment buffers and step counter for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub adam: AdamState,
}

/// Learning-rate group addressed by name prefix. Parameters outside the
/// prefix are left untouched by `adamw_step`.
#[derive(Debug, Clone)]
pub struct OptimGroup {
    pub prefix: String,
    pub lr: f64,
    pub weight_decay: f64,
}

/// All trainable (and target-copy) parameters of an agent, keyed by
/// dot-separated names such as `model.enc.l0.w`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and allocates its gradient and moment buffers.
    /// Panics if the name is already taken.
    pub fn insert(&mut self, name: &str, mut value: Tensor) {
        value.ensure_grad();
        let len = value.len();
        let prev = self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                adam: AdamState {
                    m: vec![0.0; len],
                    v: vec![0.0; len],
                    step: 0,
                },
            },
        );
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn entry(&self, name: &str) -> &ParamEntry {
        self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn entry_mut(&mut self, name: &str) -> &mut ParamEntry {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Adds `delta` into the parameter's gradient buffer.
    pub fn accum_grad(&mut self, name: &str, delta: &[f64]) {
        let grad = self.value_mut(name).grad_mut();
        assert_eq!(grad.len(), delta.len(), "gradient length mismatch for {name}");
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.value.zero_grad();
        }
    }

    /// One decoupled-weight-decay Adam step over every parameter whose name
    /// starts with the group prefix.
    pub fn adamw_step(&mut self, group: &OptimGroup) {
        for (name, entry) in self.entries.iter_mut() {
            if !name.starts_with(&group.prefix) {
                continue;
            }
            entry.adam.step += 1;
            let t = entry.adam.step as i32;
            let bias1 = 1.0 - ADAM_BETA1.powi(t);
            let bias2 = 1.0 - ADAM_BETA2.powi(t);
            let decay = 1.0 - group.lr * group.weight_decay;
            let value = &mut entry.value;
            let n = value.len();
            for i in 0..n {
                let g = value.grad().expect("parameter without gradient")[i];
                let m = ADAM_BETA1 * entry.adam.m[i] + (1.0 - ADAM_BETA1) * g;
                let v = ADAM_BETA2 * entry.adam.v[i] + (1.0 - ADAM_BETA2) * g * g;
                entry.adam.m[i] = m;
                entry.adam.v[i] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                let w = &mut value.values_mut()[i];
                *w = *w * decay - group.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }

    /// Rescales gradients under `prefix` so their global L2 norm does not
    /// exceed `max_norm`. Returns the pre-clip norm.
    pub fn clip_grad_norm(&mut self, prefix: &str, max_norm: f64) -> f64 {
        let mut sum_sq = 0.0;
        for (name, entry) in self.entries.iter() {
            if !name.starts_with(prefix) {
                continue;
            }
            for g in entry.value.grad().expect("parameter without gradient") {
                sum_sq += g * g;
            }
        }
        let norm = sum_sq.sqrt();
        if norm > max_norm {
            let scale = max_norm / norm;
            for (name, entry) in self.entries.iter_mut() {
                if !name.starts_with(prefix) {
                    continue;
                }
                for g in entry.value.grad_mut() {
                    *g *= scale;
                }
            }
        }
        norm
    }

    /// Copies parameter values from one prefix to another, e.g. to refresh a
    /// frozen target copy. Name sets must correspond one to one.
    pub fn copy_values(&mut self, src_prefix: &str, dst_prefix: &str) {
        let pairs: Vec<(String, Vec<f64>)> = self
            .entries
            .iter()
            .filter(|(name, _)| name.starts_with(src_prefix))
            .map(|(name, entry)| {
                let dst = format!("{dst_prefix}{}", &name[src_prefix.len()..]);
                (dst, entry.value.values().to_vec())
            })
            .collect();
        assert!(!pairs.is_empty(), "no parameters under prefix {src_prefix}");
        for (dst, values) in pairs {
            let target = self.value_mut(&dst);
            target.values_mut().copy_from_slice(&values);
        }
    }

    pub fn names_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries
            .keys()
            .filter(|n| n.starts_with(prefix))
            .cloned()
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters across all entries.
    pub fn total_parameters(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }
}
