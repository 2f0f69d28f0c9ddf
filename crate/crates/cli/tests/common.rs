#![allow(dead_code)]

use ngc_cli::scene::Document;
use ngc_core::model::{ModelConfig, NgcModel};

pub const BAR: &str = r#"{
  "version": 1,
  "shapes": [{"id": "bar", "meshes": [{"gcs": [{
    "control_points": [[-0.6, 0, 0], [0.6, 0, 0]],
    "keyframes": [
      {"t": 0, "ry": 0.2, "rz": 0.2, "frame": [1,0,0, 0,1,0, 0,0,1]},
      {"t": 1, "ry": 0.2, "rz": 0.2, "frame": [1,0,0, 0,1,0, 0,0,1]}
    ]}, {
    "control_points": [[0, -0.6, 0], [0, 0.6, 0]],
    "keyframes": [
      {"t": 0, "ry": 0.15, "rz": 0.15, "frame": [0,-1,0, 1,0,0, 0,0,1]},
      {"t": 1, "ry": 0.15, "rz": 0.15, "frame": [0,-1,0, 1,0,0, 0,0,1]}
    ]}]}]}]
}"#;

pub fn document() -> Document {
    Document::from_json(BAR).unwrap()
}

/// Small model whose field is -0.05 everywhere inside the cylinders, so
/// extracted meshes trace the cylinder boundaries.
pub fn flat_model() -> NgcModel<f32> {
    let mut model = NgcModel::<f32>::new(ModelConfig::with_width(16), 2, 5).unwrap();
    let mut tensors = model.shared_tensors_mut();
    let n = tensors.len();
    tensors[n - 2].iter_mut().for_each(|w| *w = 0.0);
    tensors[n - 1][0] = -0.05;
    model
}
