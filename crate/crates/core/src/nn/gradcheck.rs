//! Central finite-difference gradient checking.
//!
//! The per-coordinate error is `|a − n| / max(|a| + |n|, floor)`, where `a`
//! is the analytic and `n` the numeric derivative. A gradient that is off by
//! a factor of two therefore scores `1/3`. The floor keeps coordinates whose
//! true derivative is zero from being dominated by round-off.

/// Settings for [`gradient_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares the analytic gradient returned by `f` at `params` with central
/// differences and reports the worst coordinate.
///
/// `f` must return the scalar loss and its gradient for the given point.
pub fn gradient_check<F>(mut f: F, params: &[f64], cfg: &GradCheck) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length must match params");

    let mut point = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        passed: true,
    };
    for i in 0..params.len() {
        let orig = point[i];
        point[i] = orig + cfg.step;
        let (plus, _) = f(&point);
        point[i] = orig - cfg.step;
        let (minus, _) = f(&point);
        point[i] = orig;

        let numeric = (plus - minus) / (2.0 * cfg.step);
        let err = relative_error(analytic[i], numeric, cfg.floor);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_error <= cfg.tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_square(p: &[f64]) -> (f64, Vec<f64>) {
        (0.5 * p.iter().map(|x| x * x).sum::<f64>(), p.to_vec())
    }

    #[test]
    fn quadratic_is_exact() {
        let p = [0.3, -1.7, 2.2, 5.0];
        let report = gradient_check(half_square, &p, &GradCheck::default());
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert!(report.passed);
    }

    #[test]
    fn doubled_gradient_scores_one_third() {
        let p = [0.3, -1.7, 2.2];
        let report = gradient_check(
            |x| {
                let (l, g) = half_square(x);
                (l, g.into_iter().map(|v| 2.0 * v).collect())
            },
            &p,
            &GradCheck::default(),
        );
        assert!((report.max_rel_error - 1.0 / 3.0).abs() < 1e-6, "{report:?}");
        assert!(!report.passed);
    }
}
