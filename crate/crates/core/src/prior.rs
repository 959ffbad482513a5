//! Logistic-normal approximation of a Dirichlet prior.
//!
//! A Dirichlet over θ is re-expressed over the softmax logits `h` (with
//! `θ = softmax(h)`) and replaced by its Laplace approximation, a diagonal
//! Gaussian over `h`. The model's prior and its per-document posteriors are
//! then both diagonal logistic normals, so their KL divergence has a closed
//! form.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::softmax_in_place;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("Dirichlet concentration {index} is {value}; all must be positive and finite")]
    BadConcentration { index: usize, value: f64 },
    #[error("variance {index} is {value}; all must be positive and finite")]
    BadVariance { index: usize, value: f64 },
    #[error("mean {index} is not finite")]
    BadMean { index: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("a distribution needs at least one component")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPrior {
    alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: Vec<f64>) -> Result<Self, PriorError> {
        if alpha.is_empty() {
            return Err(PriorError::Empty);
        }
        if let Some((index, &value)) = alpha
            .iter()
            .enumerate()
            .find(|(_, &a)| !(a > 0.0 && a.is_finite()))
        {
            return Err(PriorError::BadConcentration { index, value });
        }
        Ok(Self { alpha })
    }

    pub fn symmetric(topics: usize, alpha: f64) -> Result<Self, PriorError> {
        Self::new(vec![alpha; topics])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// Diagonal Gaussian over softmax logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticNormalParams {
    mu: Vec<f64>,
    diag_var: Vec<f64>,
}

impl LogisticNormalParams {
    pub fn new(mu: Vec<f64>, diag_var: Vec<f64>) -> Result<Self, PriorError> {
        if mu.is_empty() {
            return Err(PriorError::Empty);
        }
        if mu.len() != diag_var.len() {
            return Err(PriorError::Dimension(mu.len(), diag_var.len()));
        }
        if let Some(index) = mu.iter().position(|m| !m.is_finite()) {
            return Err(PriorError::BadMean { index });
        }
        if let Some((index, &value)) = diag_var
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(PriorError::BadVariance { index, value });
        }
        Ok(Self { mu, diag_var })
    }

    /// Zero mean, unit variance: the standard Gaussian prior.
    pub fn standard(topics: usize) -> Self {
        Self {
            mu: vec![0.0; topics],
            diag_var: vec![1.0; topics],
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn diag_var(&self) -> &[f64] {
        &self.diag_var
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Laplace approximation of `Dirichlet(α)` in the softmax basis:
///
/// `μₖ = log αₖ − (1/K) Σᵢ log αᵢ`
/// `σ²ₖ = (1/αₖ)(1 − 2/K) + (1/K²) Σᵢ 1/αᵢ`
pub fn laplace_approximation(prior: &DirichletPrior) -> LogisticNormalParams {
    let alpha = prior.alpha();
    let k = alpha.len() as f64;
    // Logs are taken relative to α₀ so equal components cancel exactly and a
    // symmetric prior gets μ = 0 with no rounding residue.
    let rel: Vec<f64> = alpha.iter().map(|a| a.ln() - alpha[0].ln()).collect();
    let mean_rel = rel.iter().sum::<f64>() / k;
    let inv_sum: f64 = alpha.iter().map(|a| 1.0 / a).sum();
    let mu = rel.iter().map(|r| r - mean_rel).collect();
    let diag_var = alpha
        .iter()
        .map(|a| (1.0 / a) * (1.0 - 2.0 / k) + inv_sum / (k * k))
        .collect();
    LogisticNormalParams { mu, diag_var }
}

/// Draws `n` points `softmax(μ + σ ⊙ ε)` with `ε ~ N(0, I)`.
pub fn sample_logistic_normal<R: Rng + ?Sized>(
    params: &LogisticNormalParams,
    rng: &mut R,
    n: usize,
) -> Vec<Vec<f64>> {
    let sd: Vec<f64> = params.diag_var.iter().map(|v| v.sqrt()).collect();
    (0..n)
        .map(|_| {
            let mut x: Vec<f64> = params
                .mu
                .iter()
                .zip(&sd)
                .map(|(m, s)| {
                    let e: f64 = StandardNormal.sample(&mut *rng);
                    m + s * e
                })
                .collect();
            softmax_in_place(&mut x);
            x
        })
        .collect()
}

/// `KL(q ‖ p)` for diagonal Gaussians (equivalently, for the logistic normals
/// they induce):
/// `½ Σₖ [ v_qₖ/v_pₖ + (μ_pₖ − μ_qₖ)²/v_pₖ − 1 + log v_pₖ − log v_qₖ ]`.
pub fn kl_diag_gaussians(q: &LogisticNormalParams, p: &LogisticNormalParams) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL between distributions of different dimension");
    0.5 * q
        .mu
        .iter()
        .zip(&q.diag_var)
        .zip(p.mu.iter().zip(&p.diag_var))
        .map(|((mq, vq), (mp, vp))| {
            let d = mp - mq;
            vq / vp + d * d / vp - 1.0 + vp.ln() - vq.ln()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_alpha_gives_zero_mean() {
        for &(k, a) in &[(2, 1.0), (5, 0.02), (50, 0.02), (7, 3.5)] {
            let ln = laplace_approximation(&DirichletPrior::symmetric(k, a).unwrap());
            assert!(ln.mu().iter().all(|&m| m == 0.0), "{:?}", ln.mu());
        }
    }

    #[test]
    fn variance_values() {
        let ln = laplace_approximation(&DirichletPrior::symmetric(50, 0.02).unwrap());
        for &v in ln.diag_var() {
            assert!((v - 49.0).abs() < 1e-12, "{v}");
        }
        let ln = laplace_approximation(&DirichletPrior::symmetric(2, 1.0).unwrap());
        assert_eq!(ln.diag_var(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_non_positive_alpha() {
        assert_eq!(
            DirichletPrior::new(vec![1.0, 0.0]),
            Err(PriorError::BadConcentration { index: 1, value: 0.0 })
        );
        assert!(DirichletPrior::new(vec![-1.0, 1.0]).is_err());
        assert!(DirichletPrior::new(vec![f64::NAN]).is_err());
        assert!(LogisticNormalParams::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn degenerate_variance_collapses_to_softmax_of_mean() {
        let p = LogisticNormalParams::new(vec![1.0, 0.0, -1.0], vec![1e-30; 3]).unwrap();
        let expected = crate::nn::softmax(p.mu());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in sample_logistic_normal(&p, &mut rng, 20) {
            for (a, b) in s.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_two_component_mean_is_half() {
        let p = LogisticNormalParams::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = sample_logistic_normal(&p, &mut rng, 100_000);
        let mean = samples.iter().map(|s| s[0]).sum::<f64>() / samples.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        for s in &samples {
            assert!(s.iter().all(|&x| x > 0.0));
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_dirichlet_approximation_is_peaked() {
        let p = laplace_approximation(&DirichletPrior::symmetric(50, 0.02).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = sample_logistic_normal(&p, &mut rng, 10_000);
        let avg_max = samples
            .iter()
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / samples.len() as f64;
        assert!(avg_max > 0.6, "{avg_max}");
    }

    #[test]
    fn kl_hand_cases() {
        let p = LogisticNormalParams::new(vec![0.3, -1.0], vec![0.5, 2.0]).unwrap();
        assert_eq!(kl_diag_gaussians(&p, &p), 0.0);

        let q = LogisticNormalParams::new(vec![1.0], vec![1.0]).unwrap();
        let p = LogisticNormalParams::new(vec![0.0], vec![1.0]).unwrap();
        assert!((kl_diag_gaussians(&q, &p) - 0.5).abs() < 1e-15);

        let q = LogisticNormalParams::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let p = LogisticNormalParams::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert!((kl_diag_gaussians(&q, &p) - (2f64.ln() - 0.5)).abs() < 1e-15);
    }

    fn params(k: usize) -> impl Strategy<Value = LogisticNormalParams> {
        (
            prop::collection::vec(-3.0..3.0f64, k),
            prop::collection::vec(0.05..5.0f64, k),
        )
            .prop_map(|(m, v)| LogisticNormalParams::new(m, v).unwrap())
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative((q, p) in (1usize..6).prop_flat_map(|k| (params(k), params(k)))) {
            prop_assert!(kl_diag_gaussians(&q, &p) >= 0.0);
            prop_assert!(kl_diag_gaussians(&q, &q).abs() < 1e-12);
        }

        #[test]
        fn laplace_is_permutation_equivariant(
            alpha in prop::collection::vec(0.01..10.0f64, 2..8),
            rot in 0usize..8,
        ) {
            let k = alpha.len();
            let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
            let permuted: Vec<f64> = perm.iter().map(|&i| alpha[i]).collect();
            let a = laplace_approximation(&DirichletPrior::new(alpha).unwrap());
            let b = laplace_approximation(&DirichletPrior::new(permuted).unwrap());
            for (j, &i) in perm.iter().enumerate() {
                prop_assert!((a.mu()[i] - b.mu()[j]).abs() < 1e-12);
                prop_assert!((a.diag_var()[i] - b.diag_var()[j]).abs() < 1e-9 * a.diag_var()[i]);
            }
        }
    }
}
