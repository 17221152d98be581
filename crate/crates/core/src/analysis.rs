//! Error norms of `rho = T_eps - T_0`, anisotropic Sobolev norms, the
//! non-integrability volume, and log-log rate fits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::effective::EffectiveProfile;
use crate::error::{Error, Result};
use crate::ergodic::violates_diophantine;
use crate::field::{FieldModel, Mat3, Vec3};
use crate::fluxgeom::{surface_integral, volume_integral, FluxGrid, ScalarField};
use crate::mde::{forward_transform, sobolev_norm_sq};

/// Parallel and perpendicular `L^2` norms with respect to one unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitNorms {
    pub parallel: f64,
    pub perpendicular: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub eps: f64,
    pub n_psi: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub l2_rho: f64,
    /// `|grad_b rho|_{L^2}`.
    pub hb_rho: f64,
    /// `|grad_b^perp rho|_{L^2}`.
    pub hperp_rho: f64,
    /// `|grad rho|_{L^2}`.
    pub grad_rho: f64,
    pub h1_rho: f64,
    pub noninteg_volume: f64,
    /// Norms along `b_0 = B_0 / |B|` for perturbed fields.
    pub b0: Option<SplitNorms>,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str =
        "eps,n_psi,n_theta,n_phi,l2_rho,hb_rho,hperp_rho,grad_rho,h1_rho,noninteg_volume,hb0_rho,hperp0_rho";

    pub fn csv_row(&self) -> String {
        let (p, q) = match self.b0 {
            Some(s) => (format!("{:.12e}", s.parallel), format!("{:.12e}", s.perpendicular)),
            None => (String::new(), String::new()),
        };
        format!(
            "{:e},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            self.eps,
            self.n_psi,
            self.n_theta,
            self.n_phi,
            self.l2_rho,
            self.hb_rho,
            self.hperp_rho,
            self.grad_rho,
            self.h1_rho,
            self.noninteg_volume,
            p,
            q
        )
    }
}

/// Squares `(|grad_b u|^2, |grad_b^perp u|^2, |grad u|^2)` at one point from the
/// covariant derivatives `du`. The perpendicular part `grad u - b grad_b u` is
/// formed as a vector and measured with the metric.
pub fn split_squares(du: &Vec3, b: &Vec3, lower: &Mat3, upper: &Mat3) -> (f64, f64, f64) {
    let mut grad = [0.0; 3];
    for a in 0..3 {
        for c in 0..3 {
            grad[a] += upper[a][c] * du[c];
        }
    }
    let par: f64 = (0..3).map(|a| b[a] * du[a]).sum();
    let perp = [grad[0] - b[0] * par, grad[1] - b[1] * par, grad[2] - b[2] * par];
    let mut perp_sq = 0.0;
    let mut full = 0.0;
    for a in 0..3 {
        for c in 0..3 {
            perp_sq += perp[a] * lower[a][c] * perp[c];
        }
        full += grad[a] * du[a];
    }
    (par * par, perp_sq, full)
}

fn check_inputs(t: &ScalarField, field: &FieldModel, grid: &FluxGrid, eps: f64) -> Result<()> {
    grid.check_model(field)?;
    grid.check_field(t)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1]")));
    }
    Ok(())
}

/// Per node `(|grad_b u|^2, |grad_b^perp u|^2, |grad u|^2)` and, if requested,
/// the same split along `b_0`.
fn node_squares(
    u: &ScalarField,
    field: &FieldModel,
    grid: &FluxGrid,
    eps: f64,
    with_b0: bool,
) -> Result<Vec<[f64; 5]>> {
    let du = grid.gradient(u.values())?;
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.point(idx);
            let m = field.metric(p);
            let b = field.unit_field(p, eps)?;
            let (par, perp, full) = split_squares(&du[idx], &b, &m.lower, &m.upper);
            let (par0, perp0) = if with_b0 {
                let b0 = field.unit_field_unperturbed(p, eps)?;
                let (a, c, _) = split_squares(&du[idx], &b0, &m.lower, &m.upper);
                (a, c)
            } else {
                (0.0, 0.0)
            };
            Ok([par, perp, full, par0, perp0])
        })
        .collect()
}

fn l2(grid: &FluxGrid, template: &ScalarField, values: Vec<f64>) -> Result<f64> {
    let f = ScalarField::new(grid, values)?;
    debug_assert_eq!(f.dims(), template.dims());
    Ok(volume_integral(grid, &f)?.max(0.0).sqrt())
}

/// Norms of `rho = T_eps - Theta(psi)` with gradients from second-order nodal
/// differences and integrals from the volume quadrature.
pub fn error_report(
    t_eps: &ScalarField,
    profile: &EffectiveProfile,
    field: &FieldModel,
    grid: &FluxGrid,
    eps: f64,
) -> Result<ErrorReport> {
    check_inputs(t_eps, field, grid, eps)?;
    if profile.psi_nodes() != grid.psi_nodes() {
        return Err(Error::GridMismatch("profile sampled on different psi nodes".into()));
    }
    let t0 = profile.to_field(grid)?;
    let rho_values: Vec<f64> = t_eps
        .values()
        .iter()
        .zip(t0.values())
        .map(|(a, b)| a - b)
        .collect();
    let rho = ScalarField::new(grid, rho_values)?;
    let with_b0 = field.perturbation().is_some();
    let sq = node_squares(&rho, field, grid, eps, with_b0)?;
    let col = |k: usize| sq.iter().map(|s| s[k]).collect::<Vec<f64>>();
    let l2_rho = l2(grid, &rho, rho.values().iter().map(|v| v * v).collect())?;
    let hb_rho = l2(grid, &rho, col(0))?;
    let hperp_rho = l2(grid, &rho, col(1))?;
    let grad_rho = l2(grid, &rho, col(2))?;
    let b0 = if with_b0 {
        Some(SplitNorms {
            parallel: l2(grid, &rho, col(3))?,
            perpendicular: l2(grid, &rho, col(4))?,
        })
    } else {
        None
    };
    let d = grid.dims();
    Ok(ErrorReport {
        eps,
        n_psi: d.n_psi,
        n_theta: d.n_theta,
        n_phi: d.n_phi,
        l2_rho,
        hb_rho,
        hperp_rho,
        grad_rho,
        h1_rho: (l2_rho * l2_rho + grad_rho * grad_rho).sqrt(),
        noninteg_volume: noninteg_volume(t_eps, field, grid, eps)?,
        b0,
    })
}

/// `(int ||f(psi, .)||^2_{H^gamma(S_psi)} dpsi)^{1/2}` with per-surface Fourier norms
/// (zero mode excluded) and the trapezoid in `psi`; toroidal grids only.
pub fn aniso_norm(f: &ScalarField, grid: &FluxGrid, gamma: f64) -> Result<f64> {
    if grid.dim() != 3 {
        return Err(Error::WrongDimension { expected: 3 });
    }
    grid.check_field(f)?;
    let d = grid.dims();
    let per_surface = (0..d.n_psi)
        .into_par_iter()
        .map(|i| {
            let spec = forward_transform(grid.psi_nodes()[i], d.n_theta, d.n_phi, f.surface(i))?;
            Ok(grid.psi_weight(i) * sobolev_norm_sq(&spec, gamma))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_surface.iter().sum::<f64>().sqrt())
}

/// Volume of `{|grad_b T|^2 >= eps |grad_b^perp T|^2}` from node indicators and
/// quadrature weights.
pub fn noninteg_volume(t: &ScalarField, field: &FieldModel, grid: &FluxGrid, eps: f64) -> Result<f64> {
    check_inputs(t, field, grid, eps)?;
    let sq = node_squares(t, field, grid, eps, false)?;
    let indicator: Vec<f64> = sq
        .iter()
        .map(|s| if s[0] >= eps * s[1] { 1.0 } else { 0.0 })
        .collect();
    volume_integral(grid, &ScalarField::new(grid, indicator)?)
}

/// Largest node value of `|grad_b T|^2 / (eps |grad_b^perp T|^2)`; the
/// non-integrability indicator fires exactly where this reaches 1.
pub fn dominance_ratio(t: &ScalarField, field: &FieldModel, grid: &FluxGrid, eps: f64) -> Result<f64> {
    check_inputs(t, field, grid, eps)?;
    let sq = node_squares(t, field, grid, eps, false)?;
    Ok(sq.iter().fold(0.0, |acc, s| {
        let r = if s[1] > 0.0 {
            s[0] / (eps * s[1])
        } else if s[0] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        acc.max(r)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_rate(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 || x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveData);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("abscissae must not all coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDiagnostic {
    pub psi: f64,
    pub iota: f64,
    /// Surface average of `|rho|` with respect to `dH`.
    pub mean_abs_rho: f64,
    /// Whether the surface passes the truncated Diophantine test.
    pub diophantine: bool,
}

/// Surface means of `|rho|` beside the Diophantine flag of each node surface at
/// level `m_level`, exponent `gamma`, and cutoff `K`; toroidal fields only.
pub fn resonant_surface_diagnostic(
    rho: &ScalarField,
    field: &FieldModel,
    grid: &FluxGrid,
    gamma: f64,
    cutoff: usize,
    m_level: f64,
) -> Result<Vec<SurfaceDiagnostic>> {
    grid.check_model(field)?;
    grid.check_field(rho)?;
    let n = grid.dims().surface_len();
    let ones = vec![1.0; n];
    (0..grid.dims().n_psi)
        .map(|i| {
            let psi = grid.psi_nodes()[i];
            let iota = field.rotational_transform(psi)?;
            let abs: Vec<f64> = rho.surface(i).iter().map(|v| v.abs()).collect();
            let mean = surface_integral(grid, i, &abs)? / surface_integral(grid, i, &ones)?;
            Ok(SurfaceDiagnostic {
                psi,
                iota,
                mean_abs_rho: mean,
                diophantine: !violates_diophantine(iota, gamma, m_level, cutoff),
            })
        })
        .collect()
}

pub fn write_diagnostic_csv(rows: &[SurfaceDiagnostic], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "psi,iota,mean_abs_rho,diophantine")?;
    for r in rows {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{}",
            r.psi, r.iota, r.mean_abs_rho, r.diophantine as u8
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::effective_profile;
    use crate::field::{make_field, FieldSpec};

    #[test]
    fn exact_power_laws_fit_exactly() {
        let x = [1e-1, 5e-2, 2e-2, 1e-2];
        let y: Vec<f64> = x.iter().map(|e| 2.0 * e).collect();
        let f = fit_rate(&x, &y).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|e: &f64| e.powf(1.0 / 3.0)).collect();
        assert!((fit_rate(&x, &y).unwrap().slope - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_data() {
        assert_eq!(fit_rate(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::NonPositiveData));
        assert_eq!(
            fit_rate(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]),
            Err(Error::NonPositiveData)
        );
    }

    #[test]
    fn injected_profile_has_zero_error() {
        let f = make_field(&FieldSpec::torus_integrable()).unwrap();
        let g = FluxGrid::new(&f, 9, 8, 8).unwrap();
        let p = effective_profile(&f, &g, 0.0, 1.0).unwrap();
        let t0 = p.to_field(&g).unwrap();
        let r = error_report(&t0, &p, &f, &g, 1e-3).unwrap();
        assert_eq!(r.l2_rho, 0.0);
        assert_eq!(r.h1_rho, 0.0);
        assert_eq!(noninteg_volume(&t0, &f, &g, 1e-3).unwrap(), 0.0);
        assert_eq!(dominance_ratio(&t0, &f, &g, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn dominance_ratio_tracks_indicator() {
        let f = make_field(&FieldSpec::torus_integrable()).unwrap();
        let g = FluxGrid::new(&f, 9, 8, 8).unwrap();
        let u = ScalarField::from_fn(&g, |p| p.psi + 0.3 * p.phi.sin());
        let eps = 1e-2;
        let ratio = dominance_ratio(&u, &f, &g, eps).unwrap();
        let volume = noninteg_volume(&u, &f, &g, eps).unwrap();
        assert!(ratio >= 1.0 && volume > 0.0);
    }

    #[test]
    fn split_is_orthogonal() {
        let f = make_field(&FieldSpec::torus_perturbed(0.1)).unwrap();
        let g = FluxGrid::new(&f, 9, 8, 8).unwrap();
        let u = ScalarField::from_fn(&g, |p| p.psi * p.psi + (p.theta + 2.0 * p.phi).sin());
        let sq = node_squares(&u, &f, &g, 1e-2, false).unwrap();
        for s in sq {
            assert!((s[0] + s[1] - s[2]).abs() <= 1e-12 * s[2].max(1.0));
        }
    }

    #[test]
    fn single_mode_aniso_norm() {
        let f = make_field(&FieldSpec::torus_integrable()).unwrap();
        let g = FluxGrid::new(&f, 11, 16, 8).unwrap();
        let u = ScalarField::from_fn(&g, |p| p.psi * p.theta.cos());
        let norm = aniso_norm(&u, &g, 1.5).unwrap();
        let exact = (1.5f64.powi(3) - 0.5f64.powi(3)) / 3.0 / 2.0;
        assert!((norm * norm - exact).abs() < 5e-3 * exact);
        let a = make_field(&FieldSpec::annulus()).unwrap();
        let ga = FluxGrid::new(&a, 5, 8, 1).unwrap();
        assert_eq!(
            aniso_norm(&ScalarField::zeros(&ga), &ga, 1.0),
            Err(Error::WrongDimension { expected: 3 })
        );
    }

    #[test]
    fn diagnostic_flags_resonant_band() {
        let f = make_field(&FieldSpec::torus_integrable()).unwrap();
        let g = FluxGrid::new(&f, 41, 8, 8).unwrap();
        let rho = ScalarField::from_fn(&g, |p| (-((p.psi - 1.0) / 0.02).powi(2)).exp());
        let rows = resonant_surface_diagnostic(&rho, &f, &g, 3.0, 5, 10.0).unwrap();
        let at_one = rows.iter().find(|r| (r.psi - 1.0).abs() < 1e-12).unwrap();
        assert!(!at_one.diophantine);
        assert!(at_one.mean_abs_rho > 0.99);
        assert!(rows.iter().filter(|r| r.mean_abs_rho > 0.5).all(|r| !r.diophantine));
    }
}
