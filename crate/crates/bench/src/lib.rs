//! Shared fixtures for the criterion benchmarks.

use cmi_core::data_io::synth_targets;
use cmi_core::forward_model::{forward_measure, synthesize_h, ApertureConfig, ComplexMatrix, SceneConfig};
use cmi_core::tensor::xavier_init;
use cmi_core::Tensor;
use num_complex::Complex64;

/// Deterministic dense tensor of the given shape.
pub fn tensor(shape: &[usize], seed: u64) -> Tensor {
    xavier_init(shape, seed).expect("fixture shape")
}

/// Default 1024x784 sensing matrix and one noisy glyph measurement.
pub fn imaging_system() -> (ComplexMatrix, Vec<Complex64>) {
    let h = synthesize_h(&SceneConfig::default(), &ApertureConfig::default(), 0).expect("sensing matrix");
    let (imgs, _) = synth_targets(1, 0).expect("glyph");
    let g = forward_measure(&h, &imgs[0], Some(30.0), 0).expect("measurement");
    (h, g)
}
