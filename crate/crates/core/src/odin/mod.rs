//! Temperature-scaled softmax, the softmax-score baseline, ODIN input
//! perturbation and its hyperparameter search, and the reference network
//! used to exercise them without an external framework.

mod network;
mod perturb;
mod softmax;

pub use network::{
    dense_layer_name, reference_net_forward_backward, Dense, DifferentiableClassifier,
    ForwardBackward, ReferenceNet, TargetLoss, MAX_LAYERS, SOFTMAX_LAYER,
};
pub use perturb::{
    odin_perturb, odin_softmax_score, select_odin, tune_odin, GridPoint, OdinConfig, OdinMode,
    OdinTuning, TuneObjective,
};
pub use softmax::{argmax, softmax_score, temperature_softmax};
