//! Value ensemble and policy network. The ensemble keeps frozen target
//! copies that are refreshed by a full parameter copy, and is reduced by
//! an elementwise minimum wherever it is evaluated with the policy.

use rand_chacha::ChaCha8Rng;

use crate::nncore::{Act, LayerSpec, Mlp, MlpCache, MlpSpec, Norm, ParameterStore, Tensor};

pub const ONLINE_VALUE_PREFIX: &str = "value.";
pub const TARGET_VALUE_PREFIX: &str = "value_target.";
pub const POLICY_PREFIX: &str = "policy";

fn q_spec(zsa_dim: usize, hidden_dim: usize) -> MlpSpec {
    MlpSpec {
        input: zsa_dim,
        layers: vec![
            LayerSpec { width: hidden_dim, norm: Norm::Free, act: Act::Elu },
            LayerSpec { width: hidden_dim, norm: Norm::Free, act: Act::Elu },
            LayerSpec { width: hidden_dim, norm: Norm::Free, act: Act::Elu },
            LayerSpec { width: 1, norm: Norm::None, act: Act::None },
        ],
    }
}

pub struct QEnsemble {
    members: Vec<Mlp>,
    targets: Vec<Mlp>,
}

impl QEnsemble {
    /// Registers `count` online members and matching target copies; the
    /// targets start equal to the online parameters.
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        zsa_dim: usize,
        hidden_dim: usize,
        count: usize,
    ) -> Self {
        assert!(count >= 1, "ensemble needs at least one member");
        let members: Vec<Mlp> = (0..count)
            .map(|i| {
                Mlp::new(
                    store,
                    rng,
                    &format!("{ONLINE_VALUE_PREFIX}q{i}"),
                    q_spec(zsa_dim, hidden_dim),
                )
            })
            .collect();
        let targets: Vec<Mlp> = (0..count)
            .map(|i| {
                Mlp::new(
                    store,
                    rng,
                    &format!("{TARGET_VALUE_PREFIX}q{i}"),
                    q_spec(zsa_dim, hidden_dim),
                )
            })
            .collect();
        let ensemble = QEnsemble { members, targets };
        ensemble.sync_targets(store);
        ensemble
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn member(&self, i: usize, use_targets: bool) -> &Mlp {
        if use_targets {
            &self.targets[i]
        } else {
            &self.members[i]
        }
    }

    /// Forward pass of one member, retaining the cache for backprop.
    pub fn forward_member(
        &self,
        store: &ParameterStore,
        i: usize,
        zsa: &Tensor,
        use_targets: bool,
    ) -> MlpCache {
        self.member(i, use_targets).forward(store, zsa)
    }

    /// All members' scalar outputs: `outputs[i][row]`.
    pub fn all_q(&self, store: &ParameterStore, zsa: &Tensor, use_targets: bool) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| {
                let out = self.member(i, use_targets).output(store, zsa);
                (0..out.rows()).map(|r| out.row(r)[0]).collect()
            })
            .collect()
    }

    /// Elementwise minimum over every member, the reduction used wherever
    /// the ensemble is evaluated with the policy.
    pub fn min_q(&self, store: &ParameterStore, zsa: &Tensor, use_targets: bool) -> Vec<f64> {
        let all = self.all_q(store, zsa, use_targets);
        (0..zsa.rows())
            .map(|r| all.iter().map(|m| m[r]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Elementwise mean over members, used by the trajectory-evaluation
    /// ablation.
    pub fn mean_q(&self, store: &ParameterStore, zsa: &Tensor, use_targets: bool) -> Vec<f64> {
        let all = self.all_q(store, zsa, use_targets);
        (0..zsa.rows())
            .map(|r| all.iter().map(|m| m[r]).sum::<f64>() / self.size() as f64)
            .collect()
    }

    /// Minimum over a chosen subset of members (the random-pair target
    /// ablation passes two indices).
    pub fn subset_min_q(
        &self,
        store: &ParameterStore,
        zsa: &Tensor,
        members: &[usize],
        use_targets: bool,
    ) -> Vec<f64> {
        assert!(!members.is_empty());
        let outputs: Vec<Vec<f64>> = members
            .iter()
            .map(|i| {
                let out = self.member(*i, use_targets).output(store, zsa);
                (0..out.rows()).map(|r| out.row(r)[0]).collect()
            })
            .collect();
        (0..zsa.rows())
            .map(|r| outputs.iter().map(|m| m[r]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Hard target refresh: copies every online parameter into its target
    /// slot.
    pub fn sync_targets(&self, store: &mut ParameterStore) {
        store.copy_values(ONLINE_VALUE_PREFIX, TARGET_VALUE_PREFIX);
    }

    pub fn param_names(&self, use_targets: bool) -> Vec<String> {
        let nets = if use_targets { &self.targets } else { &self.members };
        nets.iter().flat_map(|m| m.param_names()).collect()
    }
}

pub struct PolicyNet {
    net: Mlp,
}

impl PolicyNet {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        zs_dim: usize,
        hidden_dim: usize,
        action_dim: usize,
    ) -> Self {
        let net = Mlp::new(
            store,
            rng,
            POLICY_PREFIX,
            MlpSpec {
                input: zs_dim,
                layers: vec![
                    LayerSpec { width: hidden_dim, norm: Norm::Free, act: Act::Relu },
                    LayerSpec { width: hidden_dim, norm: Norm::Free, act: Act::Relu },
                    LayerSpec { width: action_dim, norm: Norm::None, act: Act::Tanh },
                ],
            },
        );
        PolicyNet { net }
    }

    pub fn forward(&self, store: &ParameterStore, zs: &Tensor) -> MlpCache {
        self.net.forward(store, zs)
    }

    /// Deterministic actions in `(-1, 1)^action_dim`.
    pub fn act(&self, store: &ParameterStore, zs: &Tensor) -> Tensor {
        self.net.output(store, zs)
    }

    pub fn backward(&self, store: &mut ParameterStore, cache: &MlpCache, d_out: &Tensor) -> Tensor {
        self.net.backward(store, cache, d_out)
    }

    pub fn param_names(&self) -> Vec<String> {
        self.net.param_names()
    }
}
