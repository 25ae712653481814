use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn swish(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Derivative of [`swish`].
pub(crate) fn swish_grad(x: f64) -> f64 {
    let sig = 1.0 / (1.0 + (-x).exp());
    sig * (1.0 + x * (1.0 - sig))
}

/// Weights and biases of an MLP with `n_layers` hidden layers of equal
/// width, stored contiguously: for each layer the `in x out` weight matrix in
/// row-major order followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub n_bus: usize,
    pub n_layers: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        2 * self.n_bus
    }

    pub fn output_dim(&self) -> usize {
        4 * self.n_bus
    }

    /// `(fan_in, fan_out)` per affine layer, hidden layers then output.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        layer_shapes(self.n_bus, self.n_layers, self.width)
    }

    pub fn zeros(n_bus: usize, n_layers: usize, width: usize) -> Self {
        let len = layer_shapes(n_bus, n_layers, width)
            .iter()
            .map(|(i, o)| i * o + o)
            .sum();
        MlpParams {
            n_bus,
            n_layers,
            width,
            data: vec![0.0; len],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(n_bus: usize, n_layers: usize, width: usize, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(n_bus, n_layers, width);
        let mut offset = 0;
        for (fan_in, fan_out) in params.shapes() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params.data[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        params
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Weight and bias views of affine layer `l`.
    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (offset, (fi, fo)) = self.layer_offset(l);
        let w = ArrayView2::from_shape((fi, fo), &self.data[offset..offset + fi * fo]).unwrap();
        let b = ArrayView1::from(&self.data[offset + fi * fo..offset + fi * fo + fo]);
        (w, b)
    }

    pub(crate) fn layer_offset(&self, l: usize) -> (usize, (usize, usize)) {
        let shapes = self.shapes();
        let offset = shapes[..l].iter().map(|(i, o)| i * o + o).sum();
        (offset, shapes[l])
    }

    pub fn n_affine(&self) -> usize {
        self.n_layers + 1
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn layer_shapes(n_bus: usize, n_layers: usize, width: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![2 * n_bus];
    dims.extend(std::iter::repeat_n(width, n_layers));
    dims.push(4 * n_bus);
    dims.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Estimator output for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Forward pass for a single input `[P, Q]`.
pub fn forward(params: &MlpParams, y: &[f64]) -> Result<Prediction> {
    if y.len() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            got: y.len(),
        });
    }
    let x = ArrayView2::from_shape((1, y.len()), y).unwrap();
    let out = forward_batch(params, x)?;
    let n = params.n_bus;
    let row = out.row(0);
    let block = |k: usize| row.slice(s![k * n..(k + 1) * n]).to_vec();
    Ok(Prediction {
        p: block(0),
        q: block(1),
        v: block(2),
        theta: block(3),
    })
}

/// Batched forward pass, one sample per row. Output columns are
/// `[P_hat, Q_hat, V_hat, theta_hat]`, each `n_bus` wide.
pub fn forward_batch(params: &MlpParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            got: x.ncols(),
        });
    }
    let mut h = x.to_owned();
    for l in 0..params.n_affine() {
        let (w, b) = params.layer(l);
        let mut z = h.dot(&w);
        z += &b.insert_axis(Axis(0));
        if l < params.n_layers {
            z.mapv_inplace(swish);
        }
        h = z;
    }
    Ok(h)
}
