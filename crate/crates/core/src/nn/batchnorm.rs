use serde::{Deserialize, Serialize};

use super::{Mode, NnError, Tensor2};

/// Per-feature batch normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight on the previous running value in the exponential average.
    pub momentum: f64,
    pub eps: f64,
}

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Everything the backward pass and the running-stat update need.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mode: Mode,
    pub x_hat: Tensor2,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub dx: Tensor2,
    pub dgain: Vec<f64>,
    pub dshift: Vec<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self::with_settings(features, DEFAULT_MOMENTUM, DEFAULT_EPS)
    }

    pub fn with_settings(features: usize, momentum: f64, eps: f64) -> Self {
        assert!(eps > 0.0, "batch-norm epsilon must be positive");
        assert!((0.0..1.0).contains(&momentum), "batch-norm momentum must be in [0, 1)");
        Self {
            gain: vec![1.0; features],
            shift: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum,
            eps,
        }
    }

    pub fn features(&self) -> usize {
        self.gain.len()
    }

    /// Normalizes `x`. Train mode uses (biased) batch statistics and leaves
    /// the running statistics untouched; call [`BatchNorm::update_running`]
    /// with the returned cache to fold the batch into them.
    pub fn forward(&self, x: &Tensor2, mode: Mode) -> Result<(Tensor2, BatchNormCache), NnError> {
        let (n, f) = x.shape();
        if f != self.features() {
            return Err(NnError::ShapeMismatch {
                op: "batchnorm_forward",
                expected: (n, self.features()),
                found: x.shape(),
            });
        }
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(NnError::BatchTooSmall { rows: n });
                }
                let mean: Vec<f64> = x.sum_rows().into_iter().map(|s| s / n as f64).collect();
                let mut var = vec![0.0; f];
                for row in x.row_iter() {
                    for ((v, &xv), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *v += (xv - m) * (xv - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                (mean, var)
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut x_hat = Tensor2::zeros(n, f);
        let mut y = Tensor2::zeros(n, f);
        for r in 0..n {
            let xr = x.row(r);
            for c in 0..f {
                let h = (xr[c] - mean[c]) * inv_std[c];
                x_hat[(r, c)] = h;
                y[(r, c)] = self.gain[c] * h + self.shift[c];
            }
        }
        Ok((
            y,
            BatchNormCache {
                mode,
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    /// Folds a train-mode batch into the running statistics. The running
    /// variance tracks the unbiased batch variance.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let n = cache.x_hat.rows() as f64;
        let correction = n / (n - 1.0);
        let m = self.momentum;
        for c in 0..self.features() {
            self.running_mean[c] = m * self.running_mean[c] + (1.0 - m) * cache.batch_mean[c];
            self.running_var[c] =
                m * self.running_var[c] + (1.0 - m) * cache.batch_var[c] * correction;
        }
    }

    pub fn backward(&self, cache: &BatchNormCache, dy: &Tensor2) -> Result<BatchNormGrads, NnError> {
        let (n, f) = cache.x_hat.shape();
        if dy.shape() != (n, f) {
            return Err(NnError::ShapeMismatch {
                op: "batchnorm_backward",
                expected: (n, f),
                found: dy.shape(),
            });
        }
        let mut dgain = vec![0.0; f];
        let mut dshift = vec![0.0; f];
        for r in 0..n {
            for c in 0..f {
                let g = dy[(r, c)];
                dshift[c] += g;
                dgain[c] += g * cache.x_hat[(r, c)];
            }
        }

        let mut dx = Tensor2::zeros(n, f);
        match cache.mode {
            Mode::Infer => {
                for r in 0..n {
                    for c in 0..f {
                        dx[(r, c)] = dy[(r, c)] * self.gain[c] * cache.inv_std[c];
                    }
                }
            }
            Mode::Train => {
                // dx = γ·inv_std/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
                let nf = n as f64;
                for c in 0..f {
                    let scale = self.gain[c] * cache.inv_std[c] / nf;
                    for r in 0..n {
                        dx[(r, c)] = scale
                            * (nf * dy[(r, c)] - dshift[c] - cache.x_hat[(r, c)] * dgain[c]);
                    }
                }
            }
        }
        Ok(BatchNormGrads { dx, dgain, dshift })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{gradient_check, GradCheck};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_column_normalizes_to_unit() {
        let bn = BatchNorm::with_settings(1, 0.99, 1e-12);
        let x = Tensor2::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        assert!((y[(0, 0)] + 1.0).abs() < 1e-9);
        assert!((y[(1, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gain_and_shift_at_batch_stats_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor2::standard_normal(6, 3, &mut rng);
        let mut bn = BatchNorm::with_settings(3, 0.99, 1e-12);
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        bn.gain = cache.batch_var.iter().map(|v| v.sqrt()).collect();
        bn.shift = cache.batch_mean.clone();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn train_needs_two_rows() {
        let bn = BatchNorm::new(2);
        let x = Tensor2::zeros(1, 2);
        assert!(matches!(
            bn.forward(&x, Mode::Train),
            Err(NnError::BatchTooSmall { rows: 1 })
        ));
        assert!(bn.forward(&x, Mode::Infer).is_ok());
    }

    #[test]
    fn running_stats_follow_exponential_average() {
        let mut bn = BatchNorm::with_settings(1, 0.9, 1e-5);
        let x = Tensor2::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        bn.update_running(&cache);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        // unbiased batch variance of {1, 3} is 2
        assert!((bn.running_var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
        assert!(bn.running_var.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let mut bn = BatchNorm::with_settings(2, 0.9, 1e-12);
        bn.running_mean = vec![1.0, -1.0];
        bn.running_var = vec![4.0, 1.0];
        let x = Tensor2::from_vec(1, 2, vec![3.0, 0.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Infer).unwrap();
        assert!((y[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((y[(0, 1)] - 1.0).abs() < 1e-9);
    }

    fn check_backward(mode: Mode, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, f) = (4, 3);
        let x = Tensor2::standard_normal(n, f, &mut rng);
        let c = Tensor2::standard_normal(n, f, &mut rng);
        let mut base = BatchNorm::new(f);
        base.gain = (0..f).map(|i| 0.5 + i as f64).collect();
        base.shift = vec![0.1, -0.2, 0.3];
        base.running_mean = vec![0.2, 0.0, -0.4];
        base.running_var = vec![1.5, 0.7, 2.0];

        let mut flat = x.as_slice().to_vec();
        flat.extend(&base.gain);
        flat.extend(&base.shift);
        let report = gradient_check(
            |p: &[f64]| {
                let xi = Tensor2::from_vec(n, f, p[..n * f].to_vec()).unwrap();
                let mut bn = base.clone();
                bn.gain = p[n * f..n * f + f].to_vec();
                bn.shift = p[n * f + f..].to_vec();
                let (y, cache) = bn.forward(&xi, mode).unwrap();
                let loss = y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum();
                let g = bn.backward(&cache, &c).unwrap();
                let mut grad = g.dx.into_vec();
                grad.extend(g.dgain);
                grad.extend(g.dshift);
                (loss, grad)
            },
            &flat,
            &GradCheck::default(),
        );
        report.max_rel_error
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            assert!(check_backward(Mode::Train, seed) < 1e-5);
            assert!(check_backward(Mode::Infer, seed) < 1e-5);
        }
    }
}
