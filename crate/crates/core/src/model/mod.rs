//! Architectures, forward execution with per-layer taps, and weight files.

mod forward;
mod spec;
mod weights;
mod zoo;

pub use forward::{apply_layer, forward, prepare_input, run_layers, ForwardTrace};
pub use spec::{propagate_shapes, ConvParams, DenseParams, LayerKind, LayerSpec, ModelSpec, PoolParams};
pub use weights::{
    apply_tensors, bias_name, decode_tensors, encode_tensors, load_weights, model_tensors,
    read_tensor_file, save_weights, seed_weights, weight_name, TensorSet, MAGIC, VERSION,
};
pub use zoo::{build_cifar_net, build_lenet, build_probe, by_name};
