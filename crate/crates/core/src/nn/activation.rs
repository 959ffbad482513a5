use super::Tensor2;

/// `log(1 + e^x)`, evaluated without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = logsumexp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

/// Row-wise softmax; every row of the result lies on the simplex.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softplus_tensor(x: &Tensor2) -> Tensor2 {
    x.map(softplus)
}

/// Backward pass of a row-wise softmax given its output `y` and upstream
/// gradient `dy`: `dx = y ⊙ (dy − ⟨y, dy⟩)`.
pub fn softmax_rows_backward(y: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let dyr = dy.row(r);
        let inner: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for ((d, &yv), &g) in dx.row_mut(r).iter_mut().zip(yr).zip(dyr) {
            *d = yv * (g - inner);
        }
    }
    dx
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(3.0) - (1.0 + 3f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        for p in s {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&[1000.0, 0.0]);
        assert!(s.iter().all(|p| p.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let x = [0.3, -1.2, 2.5, 0.0];
        let a = log_softmax(&x);
        let b = softmax(&x);
        for (l, p) in a.iter().zip(&b) {
            assert!((l - p.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn entropy_of_uniform() {
        let p = vec![0.02; 50];
        assert!((entropy(&p) - 50f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
