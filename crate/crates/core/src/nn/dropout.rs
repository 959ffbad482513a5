use rand::Rng;

use super::{Mode, Tensor2};

/// Inverted-dropout keep mask. `scale` is `1 / (1 − rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn all(len: usize) -> Self {
        Self {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if rate == 0.0 {
            return Self::all(len);
        }
        Self {
            keep: (0..len).map(|_| rng.random::<f64>() >= rate).collect(),
            scale: 1.0 / (1.0 - rate),
        }
    }

    pub fn apply(&self, x: &Tensor2) -> Tensor2 {
        let mut out = x.clone();
        for (v, &k) in out.as_mut_slice().iter_mut().zip(&self.keep) {
            *v = if k { *v * self.scale } else { 0.0 };
        }
        out
    }
}

/// Zeroes each entry with probability `rate` in train mode and scales the
/// survivors by `1/(1 − rate)`; identity in infer mode.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor2,
    rate: f64,
    rng: &mut R,
    mode: Mode,
) -> (Tensor2, DropoutMask) {
    let n = x.as_slice().len();
    let mask = match mode {
        Mode::Train => DropoutMask::sample(n, rate, rng),
        Mode::Infer => DropoutMask::all(n),
    };
    (mask.apply(x), mask)
}
