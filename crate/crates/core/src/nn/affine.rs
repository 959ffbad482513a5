use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor2};

/// Fully connected layer `y = x Wᵀ + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Tensor2,
    pub dweight: Tensor2,
    pub dbias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(weight: Tensor2, bias: Vec<f64>) -> Result<Self, NnError> {
        if weight.rows() != bias.len() {
            return Err(NnError::ShapeMismatch {
                op: "affine_new",
                expected: (weight.rows(), 1),
                found: (bias.len(), 1),
            });
        }
        Ok(Self { weight, bias })
    }

    /// Glorot-uniform weights and zero bias.
    pub fn xavier<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weight: Tensor2::from_vec(output, input, data).expect("sized above"),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2, NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                op: "affine_forward",
                expected: (x.rows(), self.input_dim()),
                found: x.shape(),
            });
        }
        let mut y = x.matmul_t(&self.weight)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Gradient with respect to the layer input.
    pub fn input_grad(&self, dy: &Tensor2) -> Result<Tensor2, NnError> {
        dy.matmul(&self.weight)
    }

    /// Gradients with respect to weight and bias, given the forward input.
    pub fn param_grads(&self, x: &Tensor2, dy: &Tensor2) -> Result<(Tensor2, Vec<f64>), NnError> {
        if dy.cols() != self.output_dim() || dy.rows() != x.rows() {
            return Err(NnError::ShapeMismatch {
                op: "affine_backward",
                expected: (x.rows(), self.output_dim()),
                found: dy.shape(),
            });
        }
        let dweight = dy.t_matmul(x)?;
        Ok((dweight, dy.sum_rows()))
    }

    pub fn backward(&self, x: &Tensor2, dy: &Tensor2) -> Result<AffineGrads, NnError> {
        let (dweight, dbias) = self.param_grads(x, dy)?;
        Ok(AffineGrads {
            dx: self.input_grad(dy)?,
            dweight,
            dbias,
        })
    }
}
