use super::spec::{LayerSpec, ModelSpec};
use crate::ops::Kernel;
use crate::tensor::Tensor;

/// LeNet-5 for 1x28x28 inputs with valid convolutions.
///
/// `conv1(6@5x5) relu1 pool1 conv2(16@5x5) relu2 pool2 flatten fc1(120) relu3
/// fc2(84) relu4 fc3(10)`
pub fn build_lenet() -> ModelSpec {
    ModelSpec::new(
        "lenet",
        vec![1, 28, 28],
        vec![
            LayerSpec::conv("conv1", 6, 5),
            LayerSpec::relu("relu1"),
            LayerSpec::maxpool("pool1", 2),
            LayerSpec::conv("conv2", 16, 5),
            LayerSpec::relu("relu2"),
            LayerSpec::maxpool("pool2", 2),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("fc1", 120),
            LayerSpec::relu("relu3"),
            LayerSpec::dense("fc2", 84),
            LayerSpec::relu("relu4"),
            LayerSpec::dense("fc3", 10),
        ],
    )
    .expect("lenet definition is consistent")
}

/// Small CIFAR-10 net for 3x32x32 inputs.
///
/// `conv1(32@5x5) relu1 pool1 conv2(32@5x5) relu2 pool2 flatten fc1(64) relu3
/// fc2(10)`
pub fn build_cifar_net() -> ModelSpec {
    ModelSpec::new(
        "cifar",
        vec![3, 32, 32],
        vec![
            LayerSpec::conv("conv1", 32, 5),
            LayerSpec::relu("relu1"),
            LayerSpec::maxpool("pool1", 2),
            LayerSpec::conv("conv2", 32, 5),
            LayerSpec::relu("relu2"),
            LayerSpec::maxpool("pool2", 2),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("fc1", 64),
            LayerSpec::relu("relu3"),
            LayerSpec::dense("fc2", 10),
        ],
    )
    .expect("cifar definition is consistent")
}

/// Activation probe: `fc1` is the identity on a `len`-vector input, so its
/// tap equals the input. `fc2` sums input element `j` into class `j % classes`.
pub fn build_probe(len: usize, classes: usize) -> ModelSpec {
    assert!(len > 0 && classes > 0, "probe needs positive sizes");
    let identity: Vec<f32> = (0..len * len).map(|i| (i / len == i % len) as u8 as f32).collect();
    let fold: Vec<f32> = (0..classes * len).map(|i| (i % len % classes == i / len) as u8 as f32).collect();
    let kernel = |rows: usize, w: Vec<f32>| {
        Kernel::new(
            Tensor::from_f32(vec![rows, len], w).expect("shape matches data"),
            Tensor::zeros(vec![rows], crate::tensor::DType::Float32).expect("valid shape"),
        )
        .expect("bias matches rows")
    };
    let mut fc1 = LayerSpec::dense("fc1", len);
    fc1.params = Some(kernel(len, identity));
    let mut fc2 = LayerSpec::dense("fc2", classes);
    fc2.params = Some(kernel(classes, fold));
    ModelSpec::new("probe", vec![len], vec![fc1, fc2]).expect("probe definition is consistent")
}

/// Look up a built-in architecture by name.
pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "lenet" => Some(build_lenet()),
        "cifar" => Some(build_cifar_net()),
        _ => None,
    }
}
