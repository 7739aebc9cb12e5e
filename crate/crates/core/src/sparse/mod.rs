//! Convolutional sparse coding: the classical ISTA solver and the unfolded
//! recurrent reconstruction network built on the same dictionaries.

mod conv;
mod ista;
mod network;
mod weights;

pub use conv::{analyze, conv2d, synthesize, Filters};
pub use ista::{
    ista_solve, ista_trace, lasso_objective, power_iteration, soft_threshold, step_constant, DictionaryPair, IstaTrace,
    POWER_ITERATIONS,
};
pub use network::{
    cista_forward, forward, init_weights_from_dict, Architecture, CistaOutput, CistaState, CistaWeights, ConvLayer,
    ForwardInputs, ForwardOutputs, GatedCell, LsrcWeights, LstcWeights, ShrinkBlock, Shrinkage,
};
pub use weights::{from_tensors, load_weights, save_weights, to_tensors};
