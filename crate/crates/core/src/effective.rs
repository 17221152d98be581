//! Effective (homogenized) temperature profile `Theta(psi)`.
//!
//! `Theta` solves `d/dpsi (Gamma Theta') = 0` with `Gamma(psi) = int_{S_psi} |grad psi| dH`,
//! so `Theta = T_- + (T_+ - T_-) H(psi) / H(psi_+)` with `H(psi) = int_{psi_-}^{psi} ds / Gamma(s)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FieldModel, FluxPoint};
use crate::fluxgeom::{surface_integral, FluxGrid, ScalarField};
use crate::solver::assemble;

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveProfile {
    psi_nodes: Vec<f64>,
    gamma: Vec<f64>,
    h: Vec<f64>,
    theta: Vec<f64>,
    slopes: Vec<f64>,
    t_minus: f64,
    t_plus: f64,
}

pub fn effective_profile(
    field: &FieldModel,
    grid: &FluxGrid,
    t_minus: f64,
    t_plus: f64,
) -> Result<EffectiveProfile> {
    grid.check_model(field)?;
    if !(t_minus.is_finite() && t_plus.is_finite()) {
        return Err(Error::InvalidParameter("boundary temperatures must be finite".into()));
    }
    let d = grid.dims();
    let n = d.surface_len();
    let mut gamma = Vec::with_capacity(d.n_psi);
    for i in 0..d.n_psi {
        let grad = &grid.grad_psi()[i * n..(i + 1) * n];
        let g = surface_integral(grid, i, grad)?;
        if !(g > 0.0) {
            return Err(Error::DegenerateGamma {
                psi: grid.psi_nodes()[i],
                gamma: g,
            });
        }
        gamma.push(g);
    }
    EffectiveProfile::from_gamma(grid.psi_nodes().to_vec(), gamma, t_minus, t_plus)
}

impl EffectiveProfile {
    /// Builds the profile from sampled `Gamma` on increasing nodes.
    pub fn from_gamma(
        psi_nodes: Vec<f64>,
        gamma: Vec<f64>,
        t_minus: f64,
        t_plus: f64,
    ) -> Result<Self> {
        if psi_nodes.len() != gamma.len() {
            return Err(Error::ShapeMismatch {
                expected: psi_nodes.len(),
                got: gamma.len(),
            });
        }
        if psi_nodes.len() < 2 || psi_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("psi nodes must be strictly increasing".into()));
        }
        if let Some((psi, g)) = psi_nodes.iter().zip(&gamma).find(|(_, g)| !(**g > 0.0)) {
            return Err(Error::DegenerateGamma {
                psi: *psi,
                gamma: *g,
            });
        }
        let mut h = vec![0.0; psi_nodes.len()];
        for i in 1..psi_nodes.len() {
            let dx = psi_nodes[i] - psi_nodes[i - 1];
            h[i] = h[i - 1] + 0.5 * dx * (1.0 / gamma[i - 1] + 1.0 / gamma[i]);
        }
        let total = *h.last().expect("at least two nodes");
        let last = psi_nodes.len() - 1;
        let theta: Vec<f64> = h
            .iter()
            .enumerate()
            .map(|(i, hv)| match i {
                0 => t_minus,
                i if i == last => t_plus,
                _ => t_minus + (t_plus - t_minus) * hv / total,
            })
            .collect();
        let slopes = pchip_slopes(&psi_nodes, &theta);
        Ok(Self {
            psi_nodes,
            gamma,
            h,
            theta,
            slopes,
            t_minus,
            t_plus,
        })
    }

    pub fn psi_nodes(&self) -> &[f64] {
        &self.psi_nodes
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn theta_values(&self) -> &[f64] {
        &self.theta
    }

    pub fn t_minus(&self) -> f64 {
        self.t_minus
    }

    pub fn t_plus(&self) -> f64 {
        self.t_plus
    }

    /// `Theta(psi)` by monotone piecewise cubic Hermite interpolation.
    pub fn eval(&self, psi: f64) -> Result<f64> {
        let x = &self.psi_nodes;
        let (lo, hi) = (x[0], x[x.len() - 1]);
        let slack = 1e-12 * (hi - lo);
        if !(psi >= lo - slack && psi <= hi + slack) {
            return Err(Error::OutOfDomain { psi, lo, hi });
        }
        let psi = psi.clamp(lo, hi);
        let k = match x.binary_search_by(|v| v.partial_cmp(&psi).expect("finite nodes")) {
            Ok(k) => return Ok(self.theta[k]),
            Err(k) => k - 1,
        };
        let dx = x[k + 1] - x[k];
        let t = (psi - x[k]) / dx;
        let (y0, y1) = (self.theta[k], self.theta[k + 1]);
        let (m0, m1) = (self.slopes[k] * dx, self.slopes[k + 1] * dx);
        let t2 = t * t;
        let t3 = t2 * t;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1)
    }

    /// Samples `T_0 = Theta(psi)` on every node of `grid`.
    pub fn to_field(&self, grid: &FluxGrid) -> Result<ScalarField> {
        let d = grid.dims();
        let values = if grid.psi_nodes() == self.psi_nodes.as_slice() {
            (0..d.len()).map(|idx| self.theta[idx / d.surface_len()]).collect()
        } else {
            (0..d.len())
                .map(|idx| self.eval(grid.point(idx).psi))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(ScalarField::new(grid, values)?.with_boundary(self.t_minus, self.t_plus))
    }

    /// Residual of `d/dpsi (Gamma Theta') = 0` at interior nodes, with the flux
    /// `Gamma Theta'` formed on half intervals.
    pub fn ode_residual(&self) -> Vec<f64> {
        let x = &self.psi_nodes;
        let flux: Vec<f64> = (0..x.len() - 1)
            .map(|k| {
                let g = 0.5 * (self.gamma[k] + self.gamma[k + 1]);
                g * (self.theta[k + 1] - self.theta[k]) / (x[k + 1] - x[k])
            })
            .collect();
        (1..x.len() - 1)
            .map(|k| (flux[k] - flux[k - 1]) / (0.5 * (x[k + 1] - x[k - 1])))
            .collect()
    }

    /// Columns `psi, gamma, H, theta`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "psi,gamma,H,theta")?;
        for i in 0..self.psi_nodes.len() {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e}",
                self.psi_nodes[i], self.gamma[i], self.h[i], self.theta[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fritsch–Carlson slopes for monotone cubic interpolation.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b > 0.0 {
            let w1 = 2.0 * (x[k + 1] - x[k]) + (x[k] - x[k - 1]);
            let w2 = (x[k + 1] - x[k]) + 2.0 * (x[k] - x[k - 1]);
            m[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    m[0] = end_slope(x[1] - x[0], x[2] - x[1], delta[0], delta[1]);
    m[n - 1] = end_slope(
        x[n - 1] - x[n - 2],
        x[n - 2] - x[n - 3],
        delta[n - 2],
        delta[n - 3],
    );
    m
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Surface integrals of `Delta T_0 / |grad psi|` at interior surfaces, with the
/// Laplace–Beltrami operator taken from the isotropic (`eps = 1`) assembly,
/// relative to the effective flux `Gamma Theta' = (T_+ - T_-) / H(psi_+)`.
///
/// Summing the operator rows of one surface gives `-h_psi int_S Delta T_0 / |grad psi| dH`
/// up to the discretization error, so the result vanishes at second order.
/// Equal boundary values give an exactly zero residual.
pub fn compatibility_residual(
    profile: &EffectiveProfile,
    field: &FieldModel,
    grid: &FluxGrid,
) -> Result<Vec<f64>> {
    grid.check_model(field)?;
    let t0 = profile.to_field(grid)?;
    let op = assemble(field, grid, 1.0)?;
    let at = op.apply_differences(t0.values())?;
    let d = grid.dims();
    let n = d.surface_len();
    let h = grid.h_psi();
    let flux = (profile.t_plus - profile.t_minus) / profile.h[profile.h.len() - 1];
    let scale = if flux == 0.0 { 1.0 } else { flux.abs() };
    Ok((1..d.n_psi - 1)
        .map(|i| -at[i * n..(i + 1) * n].iter().sum::<f64>() / (h * scale))
        .collect())
}

/// Planar kinds: circulation `oint B . dl` along the level set `psi_index`,
/// from the Cartesian field and the tangent `dx/dtheta`.
pub fn circulation(field: &FieldModel, grid: &FluxGrid, psi_index: usize) -> Result<f64> {
    grid.check_model(field)?;
    if field.dim() != 2 {
        return Err(Error::WrongDimension { expected: 2 });
    }
    let d = grid.dims();
    if psi_index >= d.n_psi {
        return Err(Error::IndexOutOfRange {
            index: psi_index,
            len: d.n_psi,
        });
    }
    let psi = grid.psi_nodes()[psi_index];
    let mut total = 0.0;
    for &theta in grid.theta_nodes() {
        let p = FluxPoint::planar(psi, theta);
        let b = field.cartesian_field(p, 0.0)?;
        let tangent = field.geometry(p).basis[1];
        total += b[0] * tangent[0] + b[1] * tangent[1];
    }
    Ok((total * grid.h_theta()).abs())
}
