//! FFT helpers for periodic angle directions.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Signed frequency of FFT bin `index` on `n` points; the Nyquist bin of an
/// even-length transform maps to `-n/2`.
pub fn signed_frequency(index: usize, n: usize) -> i64 {
    let index = index as i64;
    let n = n as i64;
    if 2 * index >= n {
        index - n
    } else {
        index
    }
}

/// Bin holding signed frequency `freq`, if representable on `n` points.
pub fn bin_of(freq: i64, n: usize) -> Option<usize> {
    let ni = n as i64;
    let lo = -(ni / 2);
    let hi = (ni - 1) / 2;
    if freq < lo || freq > hi {
        return None;
    }
    Some(freq.rem_euclid(ni) as usize)
}

/// Spectral differentiation of real periodic samples on a uniform grid over `[0, 2 pi)`.
pub struct PeriodicDerivative {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PeriodicDerivative {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn apply(&self, line: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(line.len(), n);
        if n == 1 {
            return vec![0.0];
        }
        let mut buf: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let freq = signed_frequency(k, n);
            if n.is_multiple_of(2) && 2 * k == n {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= Complex64::new(0.0, freq as f64);
            }
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}
