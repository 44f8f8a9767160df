//! Deterministic differentiable building blocks: flat tensors, the layer
//! vocabulary shared by every network, scalar losses, reward coding, AdamW
//! parameter storage, and a finite-difference oracle that every backward
//! pass is tested against.

pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod mlp;
pub mod params;
pub mod tensor;
pub mod twohot;

pub use gradcheck::{finite_diff_gradient, max_relative_gap};
pub use layers::{
    affine_layer_norm_backward, affine_layer_norm_forward, dense_backward, dense_forward,
    elu_backward, elu_forward, layer_norm_backward, layer_norm_forward, relu_backward,
    relu_forward, sem_backward, sem_forward, tanh_backward, tanh_forward, DenseCache,
    LayerNormCache, LAYER_NORM_EPS,
};
pub use losses::{bce_with_logits, huber, mse_row, sigmoid, softmax_cross_entropy};
pub use mlp::{xavier_uniform, Act, LayerSpec, Mlp, MlpCache, MlpSpec, Norm};
pub use params::{AdamState, OptimGroup, ParamEntry, ParameterStore};
pub use tensor::Tensor;
pub use twohot::{symexp, symlog, TwoHot, REWARD_BINS, REWARD_HIGH, REWARD_LOW};
