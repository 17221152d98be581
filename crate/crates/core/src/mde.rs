//! Fourier solution of the magnetic differential equation on a flux surface.
//!
//! Surface functions are expanded as `u = sum u_hat(m, n) e^{-i(n theta + m phi)}`
//! with `m` the toroidal and `n` the poloidal frequency, so that the normalized
//! field-line derivative `2 pi (d_phi + iota d_theta)` has the symbol
//! `-2 pi i (m + iota n)`.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{FieldKind, FieldModel, FluxPoint};
use crate::spectral::{bin_of, signed_frequency};

/// Divisors `|m + iota n|` below this are treated as resonant.
pub const RESONANCE_TOL: f64 = 1e-12;

/// Discrete Fourier coefficients of a real function on an `n_theta x n_phi`
/// surface grid, stored in FFT bin order (`theta` major).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpectrum {
    pub psi: f64,
    n_theta: usize,
    n_phi: usize,
    coeffs: Vec<Complex64>,
}

impl SurfaceSpectrum {
    pub fn zeros(psi: f64, n_theta: usize, n_phi: usize) -> Self {
        Self {
            psi,
            n_theta,
            n_phi,
            coeffs: vec![Complex64::new(0.0, 0.0); n_theta * n_phi],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    /// Largest `K` with all `|m|, |n| <= K` represented away from Nyquist bins.
    pub fn cutoff(&self) -> usize {
        let k = |n: usize| (n - 1) / 2;
        if self.n_phi == 1 {
            k(self.n_theta)
        } else {
            k(self.n_theta).min(k(self.n_phi))
        }
    }

    fn slot(&self, m: i64, n: i64) -> Option<usize> {
        let j = bin_of(n, self.n_theta)?;
        let k = bin_of(m, self.n_phi)?;
        Some(j * self.n_phi + k)
    }

    /// `u_hat(m, n)`; zero for modes the grid cannot hold.
    pub fn get(&self, m: i64, n: i64) -> Complex64 {
        self.slot(m, n).map_or(Complex64::new(0.0, 0.0), |s| self.coeffs[s])
    }

    pub fn set(&mut self, m: i64, n: i64, value: Complex64) -> Result<()> {
        match self.slot(m, n) {
            Some(s) => {
                self.coeffs[s] = value;
                Ok(())
            }
            None => Err(Error::InvalidParameter(format!(
                "mode ({m}, {n}) not representable on {}x{}",
                self.n_theta, self.n_phi
            ))),
        }
    }

    /// `(m, n, u_hat)` over all bins.
    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        self.coeffs.iter().enumerate().map(move |(s, c)| {
            let n = signed_frequency(s / self.n_phi, self.n_theta);
            let m = signed_frequency(s % self.n_phi, self.n_phi);
            (m, n, *c)
        })
    }

    /// Whether `(m, n)` sits on a Nyquist bin of an even-sized axis.
    pub fn is_nyquist(&self, m: i64, n: i64) -> bool {
        let even_edge = |f: i64, len: usize| len.is_multiple_of(2) && len > 1 && f == -(len as i64 / 2);
        even_edge(n, self.n_theta) || even_edge(m, self.n_phi)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Columns `m, n, re, im`, in bin order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "m,n,re,im")?;
        for (m, n, c) in self.modes() {
            writeln!(w, "{m},{n},{:.15e},{:.15e}", c.re, c.im)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fft2(data: &mut [Complex64], n_theta: usize, n_phi: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (p_theta, p_phi) = if inverse {
        (planner.plan_fft_inverse(n_theta), planner.plan_fft_inverse(n_phi))
    } else {
        (planner.plan_fft_forward(n_theta), planner.plan_fft_forward(n_phi))
    };
    for row in data.chunks_mut(n_phi) {
        p_phi.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n_theta];
    for k in 0..n_phi {
        for j in 0..n_theta {
            col[j] = data[j * n_phi + k];
        }
        p_theta.process(&mut col);
        for j in 0..n_theta {
            data[j * n_phi + k] = col[j];
        }
    }
}

/// `u_hat(m, n) = (1/N) sum u(theta_j, phi_k) e^{i(n theta_j + m phi_k)}` for
/// values in `(theta, phi)` order on uniform periodic nodes.
pub fn forward_transform(psi: f64, n_theta: usize, n_phi: usize, values: &[f64]) -> Result<SurfaceSpectrum> {
    if n_theta == 0 || n_phi == 0 {
        return Err(Error::InvalidParameter("surface grid must be nonempty".into()));
    }
    if values.len() != n_theta * n_phi {
        return Err(Error::ShapeMismatch {
            expected: n_theta * n_phi,
            got: values.len(),
        });
    }
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut data, n_theta, n_phi, true);
    let scale = 1.0 / (n_theta * n_phi) as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    Ok(SurfaceSpectrum {
        psi,
        n_theta,
        n_phi,
        coeffs: data,
    })
}

/// Real part of `sum u_hat(m, n) e^{-i(n theta + m phi)}` on the surface nodes.
pub fn inverse_transform(spec: &SurfaceSpectrum) -> Vec<f64> {
    let mut data = spec.coeffs.clone();
    fft2(&mut data, spec.n_theta, spec.n_phi, false);
    data.iter().map(|c| c.re).collect()
}

/// `w_hat = (i / 2 pi) V_hat / (m + iota n)`; Nyquist bins are left at zero.
///
/// Fails with `NotSolvable` if the mean `V_hat(0, 0)` is not negligible and with
/// `SmallDivisor` at the lowest mode carrying data whose divisor is below
/// [`RESONANCE_TOL`] (positive toroidal frequency reported first).
pub fn divide_by_symbol(iota: f64, v: &SurfaceSpectrum) -> Result<SurfaceSpectrum> {
    let scale = v.max_abs();
    let mean = v.get(0, 0);
    if mean.norm() > 1e-12 * scale {
        return Err(Error::NotSolvable { mean: mean.norm() });
    }
    let mut out = SurfaceSpectrum::zeros(v.psi, v.n_theta, v.n_phi);
    let mut modes: Vec<(i64, i64, Complex64)> = v.modes().collect();
    modes.sort_by_key(|&(m, n, _)| (m.abs() + n.abs(), -m, -n));
    for (m, n, c) in modes {
        if (m == 0 && n == 0) || v.is_nyquist(m, n) || c.norm() == 0.0 {
            continue;
        }
        let d = m as f64 + iota * n as f64;
        if d.abs() < RESONANCE_TOL {
            return Err(Error::SmallDivisor { m, n });
        }
        out.set(m, n, Complex64::new(0.0, 1.0 / TAU) * c / d)?;
    }
    Ok(out)
}

/// Applies `-2 pi i (m + iota n)`, the symbol of `2 pi (d_phi + iota d_theta)`.
pub fn apply_symbol(iota: f64, w: &SurfaceSpectrum) -> SurfaceSpectrum {
    let mut out = w.clone();
    let n_phi = w.n_phi;
    let n_theta = w.n_theta;
    for (s, c) in out.coeffs.iter_mut().enumerate() {
        let n = signed_frequency(s / n_phi, n_theta);
        let m = signed_frequency(s % n_phi, n_phi);
        *c *= Complex64::new(0.0, -TAU * (m as f64 + iota * n as f64));
    }
    out
}

/// Folds the surface source into `V = 2 pi |grad psi| v / J` (with `J` the signed
/// field Jacobian), the right-hand side of the normalized field-line equation.
pub fn fold_source(field: &FieldModel, v: &SurfaceSpectrum) -> Result<SurfaceSpectrum> {
    let values = inverse_transform(v);
    let (n_theta, n_phi) = v.shape();
    let folded: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(s, val)| {
            let p = FluxPoint::new(
                v.psi,
                TAU * (s / n_phi) as f64 / n_theta as f64,
                TAU * (s % n_phi) as f64 / n_phi as f64,
            );
            let m = field.metric(p);
            TAU * m.grad_psi * m.signed_jacobian * val
        })
        .collect();
    forward_transform(v.psi, n_theta, n_phi, &folded)
}

/// Solves `div_S(B w / |grad psi|) = v` on the surface `v.psi` of an integrable
/// toroidal field and returns `w_hat`.
pub fn solve_mde(field: &FieldModel, v: &SurfaceSpectrum) -> Result<SurfaceSpectrum> {
    if field.kind() != FieldKind::TorusIntegrable {
        return Err(Error::WrongKind(format!(
            "the surface equation needs an integrable torus, got {}",
            field.kind().name()
        )));
    }
    if v.n_phi < 2 {
        return Err(Error::InvalidParameter("toroidal surfaces need n_phi >= 2".into()));
    }
    let iota = field.rotational_transform(v.psi)?;
    let big_v = fold_source(field, v)?;
    divide_by_symbol(iota, &big_v)
}

/// Squared homogeneous Sobolev norm `sum_{k != 0} |k|^{2 gamma} |u_hat(k)|^2`.
pub fn sobolev_norm_sq(spec: &SurfaceSpectrum, gamma: f64) -> f64 {
    spec.modes()
        .filter(|&(m, n, _)| m != 0 || n != 0)
        .map(|(m, n, c)| ((m * m + n * n) as f64).powf(gamma) * c.norm_sqr())
        .sum()
}

pub fn sobolev_norm(spec: &SurfaceSpectrum, gamma: f64) -> f64 {
    sobolev_norm_sq(spec, gamma).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const GOLDEN: f64 = 1.618_033_988_749_895;

    fn grid_values(n_theta: usize, n_phi: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_theta * n_phi);
        for j in 0..n_theta {
            for k in 0..n_phi {
                out.push(f(TAU * j as f64 / n_theta as f64, TAU * k as f64 / n_phi as f64));
            }
        }
        out
    }

    #[test]
    fn cosine_has_two_half_modes() {
        let v = grid_values(16, 8, |t, _| t.cos());
        let s = forward_transform(1.0, 16, 8, &v).unwrap();
        for (m, n, c) in s.modes() {
            let expected = if m == 0 && n.abs() == 1 { 0.5 } else { 0.0 };
            assert!((c - Complex64::new(expected, 0.0)).norm() < 1e-14, "{m} {n} {c}");
        }
        assert!((sobolev_norm_sq(&s, 2.7) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..15 * 12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = forward_transform(1.0, 15, 12, &v).unwrap();
        let back = inverse_transform(&s);
        assert!(v.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-12));
        let energy: f64 = s.modes().map(|(_, _, c)| c.norm_sqr()).sum();
        let mean_sq = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((energy - mean_sq).abs() <= 1e-12);
    }

    #[test]
    fn single_mode_division() {
        let mut v = SurfaceSpectrum::zeros(1.0, 9, 9);
        v.set(1, -1, Complex64::new(1.0, 0.0)).unwrap();
        let w = divide_by_symbol(GOLDEN, &v).unwrap();
        let expected = 1.0 / (TAU * (1.0 - GOLDEN).abs());
        assert!((w.get(1, -1).norm() - expected).abs() < 1e-14);
        assert!((expected - 0.2575).abs() < 1e-4);
        let back = apply_symbol(GOLDEN, &w);
        assert!((back.get(1, -1) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_source_gives_zero() {
        let v = SurfaceSpectrum::zeros(1.0, 9, 9);
        let w = divide_by_symbol(GOLDEN, &v).unwrap();
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn resonance_is_reported() {
        let mut v = SurfaceSpectrum::zeros(1.0, 9, 9);
        v.set(1, -2, Complex64::new(1.0, 0.0)).unwrap();
        v.set(-1, 2, Complex64::new(1.0, 0.0)).unwrap();
        v.set(1, 0, Complex64::new(0.5, 0.0)).unwrap();
        assert_eq!(divide_by_symbol(0.5, &v), Err(Error::SmallDivisor { m: 1, n: -2 }));
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let mut v = SurfaceSpectrum::zeros(1.0, 9, 9);
        v.set(0, 0, Complex64::new(0.3, 0.0)).unwrap();
        assert!(matches!(divide_by_symbol(GOLDEN, &v), Err(Error::NotSolvable { .. })));
    }

    #[test]
    fn single_mode_sobolev() {
        let mut v = SurfaceSpectrum::zeros(1.0, 9, 9);
        v.set(0, 1, Complex64::new(1.0, 0.0)).unwrap();
        assert!((sobolev_norm_sq(&v, -3.0) - 1.0).abs() < 1e-15);
    }
}
