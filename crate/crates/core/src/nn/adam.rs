use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidArgument(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// One named parameter block and its gradient.
pub struct ParamBlock<'a> {
    pub name: &'a str,
    pub params: &'a mut [f64],
    pub grads: &'a [f64],
}

/// Adam with bias correction. Moments are keyed by block name, so the order
/// in which blocks are presented does not matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        })
    }

    /// Applies one update to every block. Gradients are validated up front so
    /// a non-finite block leaves all parameters and moments untouched.
    pub fn update(&mut self, blocks: &mut [ParamBlock<'_>]) -> Result<(), NnError> {
        for block in blocks.iter() {
            if block.params.len() != block.grads.len() {
                return Err(NnError::ShapeMismatch {
                    op: "adam_update",
                    expected: (block.params.len(), 1),
                    found: (block.grads.len(), 1),
                });
            }
            if let Some(m) = self.moments.get(block.name) {
                if m.first.len() != block.params.len() {
                    return Err(NnError::ShapeMismatch {
                        op: "adam_update",
                        expected: (m.first.len(), 1),
                        found: (block.params.len(), 1),
                    });
                }
            }
            if block.grads.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFinite {
                    what: format!("gradient of `{}`", block.name),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for block in blocks.iter_mut() {
            let n = block.params.len();
            let moments = self
                .moments
                .entry(block.name.to_string())
                .or_insert_with(|| Moments {
                    first: vec![0.0; n],
                    second: vec![0.0; n],
                });
            for i in 0..n {
                let g = block.grads[i];
                let m = &mut moments.first[i];
                let v = &mut moments.second[i];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                block.params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> AdamConfig {
        AdamConfig {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = AdamState::new(config()).unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        for _ in 0..5 {
            adam.update(&mut [ParamBlock { name: "w", params: &mut p, grads: &g }])
                .unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(config()).unwrap();
        let mut p = vec![0.5];
        adam.update(&mut [ParamBlock { name: "w", params: &mut p, grads: &[1.0] }])
            .unwrap();
        // m̂ = v̂ = 1, so Δ = −η / (1 + ε)
        assert!((p[0] - (0.5 - 0.002 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn identical_state_gives_identical_results() {
        let mut a = AdamState::new(config()).unwrap();
        let mut p = vec![0.1, 0.2];
        a.update(&mut [ParamBlock { name: "w", params: &mut p, grads: &[0.3, -0.4] }])
            .unwrap();
        let mut b = a.clone();
        let mut pa = p.clone();
        let mut pb = p.clone();
        a.update(&mut [ParamBlock { name: "w", params: &mut pa, grads: &[1.0, 2.0] }])
            .unwrap();
        b.update(&mut [ParamBlock { name: "w", params: &mut pb, grads: &[1.0, 2.0] }])
            .unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn block_order_does_not_matter() {
        let grads_a = [0.5, -1.0];
        let grads_b = [2.0];
        let mut s1 = AdamState::new(config()).unwrap();
        let mut s2 = AdamState::new(config()).unwrap();
        let (mut a1, mut b1) = (vec![1.0, 1.0], vec![3.0]);
        let (mut a2, mut b2) = (vec![1.0, 1.0], vec![3.0]);
        for _ in 0..3 {
            s1.update(&mut [
                ParamBlock { name: "a", params: &mut a1, grads: &grads_a },
                ParamBlock { name: "b", params: &mut b1, grads: &grads_b },
            ])
            .unwrap();
            s2.update(&mut [
                ParamBlock { name: "b", params: &mut b2, grads: &grads_b },
                ParamBlock { name: "a", params: &mut a2, grads: &grads_a },
            ])
            .unwrap();
        }
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        let mut adam = AdamState::new(config()).unwrap();
        let mut p = vec![1.0];
        let mut q = vec![1.0];
        let err = adam
            .update(&mut [
                ParamBlock { name: "ok", params: &mut q, grads: &[0.1] },
                ParamBlock { name: "dec.beta", params: &mut p, grads: &[f64::NAN] },
            ])
            .unwrap_err();
        assert!(err.to_string().contains("dec.beta"));
        assert_eq!(adam.step, 0);
        assert_eq!(q, vec![1.0]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = config();
        c.beta1 = 1.0;
        assert!(AdamState::new(c).is_err());
        c.beta1 = 0.9;
        c.learning_rate = 0.0;
        assert!(AdamState::new(c).is_err());
    }
}
