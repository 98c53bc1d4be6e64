//! Minimal multilayer perceptron used as a trainable experiment-design
//! heuristic: flattened parameter vector, forward pass, the output-to-time
//! mapping, and the persisted model-file format. No training logic lives
//! here; the trainer treats the network as a black-box parameter vector.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower bound on emitted experiment times; prevents zero-time experiments.
pub const T_FLOOR: f64 = 1e-3;

/// Identifier of the output activation written into model files.
pub const OUTPUT_MAP_NAME: &str = "softplus_floor";

/// Total parameter count for fully connected layers: for each consecutive
/// pair, fan_in * fan_out weights plus fan_out biases.
pub fn param_count(layer_sizes: &[usize]) -> Result<usize> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArgument("need at least input and output layers".into()));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument("layer sizes must be >= 1".into()));
    }
    Ok(layer_sizes
        .windows(2)
        .map(|pair| pair[0] * pair[1] + pair[1])
        .sum())
}

/// Flattened network parameters plus the architecture descriptor.
///
/// Weight layout, frozen so persisted models stay portable: layer by layer,
/// the weight matrix row-major (rows = output neurons) followed by the
/// biases of that layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    flat: Vec<f64>,
}

impl MlpParams {
    pub fn new(layer_sizes: Vec<usize>, flat: Vec<f64>) -> Result<Self> {
        let expected = param_count(&layer_sizes)?;
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("output layer must have size 1".into()));
        }
        if flat.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "flat parameter vector has length {}, architecture needs {expected}",
                flat.len()
            )));
        }
        Ok(Self { layer_sizes, flat })
    }

    pub fn zeros(layer_sizes: Vec<usize>) -> Result<Self> {
        let n = param_count(&layer_sizes)?;
        Self::new(layer_sizes, vec![0.0; n])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }
}

/// Forward pass: affine layers with a rectifier on hidden layers and a raw
/// scalar output (the output activation is applied by [`output_map`]).
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<f64> {
    if input.len() != params.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "input has length {}, network expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    let sizes = &params.layer_sizes;
    let mut cur = input.to_vec();
    let mut next = Vec::new();
    let mut offset = 0;
    for (layer, pair) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        next.clear();
        next.resize(fan_out, 0.0);
        let weights = &params.flat[offset..offset + fan_in * fan_out];
        let biases = &params.flat[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        for (row, out) in next.iter_mut().enumerate() {
            let w = &weights[row * fan_in..(row + 1) * fan_in];
            let mut acc = biases[row];
            for (wi, xi) in w.iter().zip(&cur) {
                acc += wi * xi;
            }
            *out = acc;
        }
        let last_layer = layer == sizes.len() - 2;
        if !last_layer {
            for v in next.iter_mut() {
                *v = v.max(0.0);
            }
        }
        offset += fan_in * fan_out + fan_out;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur[0])
}

/// Overflow-safe softplus ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Maps the raw network output to an experiment time:
/// t = softplus(raw) + T_FLOOR. Strictly increasing with range
/// (T_FLOOR, inf), so every emitted time is positive.
pub fn output_map(raw: f64) -> f64 {
    softplus(raw) + T_FLOOR
}

/// Observation layout descriptor stored alongside trained parameters so a
/// network can only run against the environment shape it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSchema {
    pub d: usize,
    pub shots_per_step: u32,
    pub action_window: usize,
    /// "experiments" or "time".
    pub resource_mode: String,
}

/// Persisted network: a single JSON document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub layer_sizes: Vec<usize>,
    pub flat: Vec<f64>,
    pub output_map: String,
    pub t_floor: f64,
    pub observation_schema: ObservationSchema,
}

impl ModelFile {
    pub fn new(params: &MlpParams, schema: ObservationSchema) -> Self {
        Self {
            layer_sizes: params.layer_sizes().to_vec(),
            flat: params.flat().to_vec(),
            output_map: OUTPUT_MAP_NAME.to_string(),
            t_floor: T_FLOOR,
            observation_schema: schema,
        }
    }

    pub fn params(&self) -> Result<MlpParams> {
        MlpParams::new(self.layer_sizes.clone(), self.flat.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ModelFile(e.to_string()))?;
        std::fs::write(path, body + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::ModelFile(e.to_string()))?;
        if file.output_map != OUTPUT_MAP_NAME {
            return Err(Error::ModelFile(format!(
                "unsupported output_map '{}'",
                file.output_map
            )));
        }
        let expected = param_count(&file.layer_sizes)?;
        if file.flat.len() != expected {
            return Err(Error::ModelFile(format!(
                "flat length {} does not match layer sizes (need {expected})",
                file.flat.len()
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn param_count_examples() {
        assert_eq!(param_count(&[33, 16, 1]).unwrap(), 561);
        assert_eq!(param_count(&[37, 16, 1]).unwrap(), 625);
        assert_eq!(param_count(&[2, 1]).unwrap(), 3);
    }

    #[test]
    fn param_count_rejects_bad_shapes() {
        assert!(param_count(&[5]).is_err());
        assert!(param_count(&[5, 0, 1]).is_err());
    }

    #[test]
    fn forward_zero_params_is_zero() {
        let p = MlpParams::zeros(vec![4, 8, 1]).unwrap();
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn forward_single_affine_layer() {
        let p = MlpParams::new(vec![2, 1], vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(forward(&p, &[0.3, 0.7]).unwrap(), 1.0);
    }

    #[test]
    fn forward_hidden_rectifier_hand_case() {
        // W1 = [[1, -2], [3, -2]], b1 = [0, 1], input (1, 1)
        // pre-activations (-1, 2); only the second neuron passes the rectifier
        // W2 = [0.25, -0.75], b2 = 0.1 -> output = -0.75 * 2 + 0.1
        let flat = vec![1.0, -2.0, 3.0, -2.0, 0.0, 1.0, 0.25, -0.75, 0.1];
        let p = MlpParams::new(vec![2, 2, 1], flat).unwrap();
        let out = forward(&p, &[1.0, 1.0]).unwrap();
        assert_eq!(out, -0.75 * 2.0 + 0.1);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let p = MlpParams::zeros(vec![3, 1]).unwrap();
        assert!(forward(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn output_map_anchor_values() {
        assert!((output_map(0.0) - (std::f64::consts::LN_2 + 1e-3)).abs() < 1e-15);
        assert_eq!(output_map(-1e9), T_FLOOR);
        assert!((output_map(20.0) - 20.001).abs() < 1e-8);
    }

    #[test]
    fn forward_slope_matches_active_path() {
        // piecewise linearity: finite-difference slope along a direction
        // equals the composition of the active weights, away from kinks
        let flat = vec![
            0.5, -1.0, 0.25, // W1 rows
            2.0, 0.3, -0.7,
            0.1, -0.2, // b1
            1.5, -0.5, // W2
            0.05, // b2
        ];
        let p = MlpParams::new(vec![3, 2, 1], flat.clone()).unwrap();
        let x = [0.4, -0.3, 1.2];
        let v = [0.3, 0.7, -0.2];
        // active mask at x
        let pre1 = 0.5 * x[0] - 1.0 * x[1] + 0.25 * x[2] + 0.1;
        let pre2 = 2.0 * x[0] + 0.3 * x[1] - 0.7 * x[2] - 0.2;
        let analytic = [(pre1, 0.5 * v[0] - 1.0 * v[1] + 0.25 * v[2], 1.5),
            (pre2, 2.0 * v[0] + 0.3 * v[1] - 0.7 * v[2], -0.5)]
        .iter()
        .map(|&(pre, dv, w2)| if pre > 0.0 { w2 * dv } else { 0.0 })
        .sum::<f64>();
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let fd = (forward(&p, &xp).unwrap() - forward(&p, &xm).unwrap()) / (2.0 * h);
        assert!(
            (fd - analytic).abs() <= 1e-6 * analytic.abs().max(1.0),
            "fd {fd} vs analytic {analytic}"
        );
    }

    #[test]
    fn model_file_round_trip() {
        let params = MlpParams::new(vec![2, 2, 1], vec![0.5; 9]).unwrap();
        let schema = ObservationSchema {
            d: 1,
            shots_per_step: 1,
            action_window: 30,
            resource_mode: "experiments".into(),
        };
        let file = ModelFile::new(&params, schema.clone());
        let dir = std::env::temp_dir().join(format!("freqest-nn-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        file.save(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap();
        assert_eq!(loaded.params().unwrap(), params);
        assert_eq!(loaded.observation_schema, schema);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        #[test]
        fn output_map_strictly_increasing_and_floored(a in -40.0f64..40.0, d in 1e-6f64..5.0) {
            prop_assert!(output_map(a) > T_FLOOR);
            prop_assert!(output_map(a + d) > output_map(a));
        }

        #[test]
        fn flatten_round_trip(flat in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let p = MlpParams::new(vec![2, 2, 1], flat.clone()).unwrap();
            prop_assert_eq!(p.flat(), &flat[..]);
            let rebuilt = MlpParams::new(vec![2, 2, 1], p.clone().into_flat()).unwrap();
            prop_assert_eq!(rebuilt, p);
        }
    }
}
