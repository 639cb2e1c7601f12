//! Unitary DFT (`1/√n` on both directions) on top of `rustfft`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// A planned unitary DFT of fixed length. Cheap to clone and `Sync`.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            scale: 1.0 / (len as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `X_k = n^{-1/2} Σ_m x_m e^{-j2πkm/n}`, in place.
    pub fn forward_in_place(&self, x: &mut [Complex64]) {
        assert_eq!(x.len(), self.len, "DFT length mismatch");
        self.forward.process(x);
        x.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// Inverse of [`Dft::forward_in_place`], in place.
    pub fn inverse_in_place(&self, x: &mut [Complex64]) {
        assert_eq!(x.len(), self.len, "DFT length mismatch");
        self.inverse.process(x);
        x.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        self.forward_in_place(&mut out);
        out
    }

    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        self.inverse_in_place(&mut out);
        out
    }
}

/// One-shot unitary forward DFT.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    Dft::new(x.len()).forward(x)
}

/// One-shot unitary inverse DFT.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    Dft::new(x.len()).inverse(x)
}
