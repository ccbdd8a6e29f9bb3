//! Dense and pairwise-convolution kernels with explicit forward caches and
//! backward passes, temperature softmax, categorical sampling, and the SGD
//! and Adam update rules.

mod dense;
mod gibbs;
mod optim;
mod pairconv;
mod params;
pub mod testing;

pub use dense::{
    dense_backward, dense_forward, glorot_fill, sigmoid, sigmoid_backward, sigmoid_forward, Dense,
    DenseCache, SigmoidCache,
};
pub use gibbs::{
    argmax, entropy, entropy_score_grad, gibbs, log_prob_score_grad, sample_categorical, softmax, validate_distribution,
    GibbsConfig, GibbsExponent,
};
pub use pairconv::{pair_conv_forward, PairConv, PairConvCache};
pub use optim::{adam_apply, AdamConfig, AdamState, Optimizer, OptimizerKind};
pub use params::{sgd_apply, Matrix, Parameters, TensorView};
pub(crate) use params::prefixed;
