//! Structured grids in flux coordinates, grid functions, and surface/volume
//! quadrature built on the co-area formula
//! `int_D u dmu = int dpsi int_{S_psi} u / |grad psi| dH`.
//!
//! On a flux-coordinate grid the surface element is `|grad psi| sqrt(g) dtheta dphi`,
//! so the quadratures reduce to trapezoidal sums: periodic (spectrally accurate)
//! in the angles and composite in `psi`.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FieldKind, FieldModel, FluxPoint};
use crate::spectral::PeriodicDerivative;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub n_psi: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl GridDims {
    pub fn len(&self) -> usize {
        self.n_psi * self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn surface_len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_theta + j) * self.n_phi + k
    }

    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let k = index % self.n_phi;
        let rest = index / self.n_phi;
        (rest / self.n_theta, rest % self.n_theta, k)
    }
}

/// Tensor grid over `(psi, theta[, phi])` with cached node metric.
#[derive(Debug, Clone)]
pub struct FluxGrid {
    kind: FieldKind,
    dim: usize,
    psi_range: (f64, f64),
    dims: GridDims,
    psi_nodes: Vec<f64>,
    theta_nodes: Vec<f64>,
    phi_nodes: Vec<f64>,
    sqrt_g: Vec<f64>,
    upper: Vec<[f64; 6]>,
    grad_psi: Vec<f64>,
    div_normal: Vec<f64>,
}

fn sym_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

impl FluxGrid {
    /// Planar kinds require `n_phi = 1`; toroidal kinds need at least 4 nodes per angle.
    pub fn new(field: &FieldModel, n_psi: usize, n_theta: usize, n_phi: usize) -> Result<Self> {
        let dim = field.dim();
        if n_psi < 3 || n_theta < 4 {
            return Err(Error::InvalidParameter(format!(
                "grid needs n_psi >= 3 and n_theta >= 4 (got {n_psi} x {n_theta})"
            )));
        }
        if dim == 2 && n_phi != 1 {
            return Err(Error::InvalidParameter("planar grids use n_phi = 1".into()));
        }
        if dim == 3 && n_phi < 4 {
            return Err(Error::InvalidParameter("toroidal grids need n_phi >= 4".into()));
        }
        let (lo, hi) = field.psi_range();
        let h = (hi - lo) / (n_psi - 1) as f64;
        let mut psi_nodes: Vec<f64> = (0..n_psi).map(|i| lo + h * i as f64).collect();
        psi_nodes[n_psi - 1] = hi;
        let theta_nodes: Vec<f64> = (0..n_theta).map(|j| TAU * j as f64 / n_theta as f64).collect();
        let phi_nodes: Vec<f64> = (0..n_phi).map(|k| TAU * k as f64 / n_phi as f64).collect();
        let dims = GridDims {
            n_psi,
            n_theta,
            n_phi,
        };
        let mut grid = FluxGrid {
            kind: field.kind(),
            dim,
            psi_range: (lo, hi),
            dims,
            psi_nodes,
            theta_nodes,
            phi_nodes,
            sqrt_g: Vec::with_capacity(dims.len()),
            upper: Vec::with_capacity(dims.len()),
            grad_psi: Vec::with_capacity(dims.len()),
            div_normal: Vec::with_capacity(dims.len()),
        };
        for idx in 0..dims.len() {
            let p = grid.point(idx);
            let m = field.metric(p);
            if !(m.sqrt_g > 0.0 && m.grad_psi > 0.0) {
                let x = field.position(p);
                return Err(Error::NullPoint { x: x[0], y: x[1] });
            }
            grid.sqrt_g.push(m.sqrt_g);
            let u = m.upper;
            grid.upper.push([u[0][0], u[0][1], u[0][2], u[1][1], u[1][2], u[2][2]]);
            grid.grad_psi.push(m.grad_psi);
            grid.div_normal.push(normal_divergence(field, p, dim));
        }
        Ok(grid)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn psi_range(&self) -> (f64, f64) {
        self.psi_range
    }

    pub fn psi_nodes(&self) -> &[f64] {
        &self.psi_nodes
    }

    pub fn theta_nodes(&self) -> &[f64] {
        &self.theta_nodes
    }

    pub fn phi_nodes(&self) -> &[f64] {
        &self.phi_nodes
    }

    pub fn h_psi(&self) -> f64 {
        self.psi_nodes[1] - self.psi_nodes[0]
    }

    pub fn h_theta(&self) -> f64 {
        TAU / self.dims.n_theta as f64
    }

    /// Spacing in `phi`; planar grids use a unit weight.
    pub fn h_phi(&self) -> f64 {
        if self.dim == 2 {
            1.0
        } else {
            TAU / self.dims.n_phi as f64
        }
    }

    pub fn spacings(&self) -> [f64; 3] {
        [self.h_psi(), self.h_theta(), self.h_phi()]
    }

    pub fn angle_weight(&self) -> f64 {
        self.h_theta() * self.h_phi()
    }

    /// Composite trapezoid weight of `psi` node `i`.
    pub fn psi_weight(&self, i: usize) -> f64 {
        let n = self.dims.n_psi;
        let h = self.h_psi();
        if i == 0 || i + 1 == n {
            0.5 * h
        } else {
            h
        }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        self.dims.index(i, j, k)
    }

    pub fn point(&self, index: usize) -> FluxPoint {
        let (i, j, k) = self.dims.coords(index);
        FluxPoint::new(self.psi_nodes[i], self.theta_nodes[j], self.phi_nodes[k])
    }

    pub fn sqrt_g(&self) -> &[f64] {
        &self.sqrt_g
    }

    pub fn grad_psi(&self) -> &[f64] {
        &self.grad_psi
    }

    /// Cached `g^{ab}` at a node.
    pub fn metric_upper(&self, index: usize, a: usize, b: usize) -> f64 {
        self.upper[index][sym_index(a, b)]
    }

    /// Cached `div(grad psi / |grad psi|)` at a node.
    pub fn div_normal(&self) -> &[f64] {
        &self.div_normal
    }

    /// Quadrature weight `sqrt(g) w_psi w_theta w_phi` of a node.
    pub fn volume_weight(&self, index: usize) -> f64 {
        let (i, _, _) = self.dims.coords(index);
        self.sqrt_g[index] * self.psi_weight(i) * self.angle_weight()
    }

    pub fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.dims != self.dims || f.kind != self.kind || f.psi_range != self.psi_range {
            return Err(Error::GridMismatch(format!(
                "field on {}x{}x{} {} grid, expected {}x{}x{} {}",
                f.dims.n_psi,
                f.dims.n_theta,
                f.dims.n_phi,
                f.kind.name(),
                self.dims.n_psi,
                self.dims.n_theta,
                self.dims.n_phi,
                self.kind.name()
            )));
        }
        Ok(())
    }

    pub fn check_model(&self, field: &FieldModel) -> Result<()> {
        if field.kind() != self.kind || field.psi_range() != self.psi_range {
            return Err(Error::GridMismatch(format!(
                "grid built for {} on {:?}, got {} on {:?}",
                self.kind.name(),
                self.psi_range,
                field.kind().name(),
                field.psi_range()
            )));
        }
        Ok(())
    }

    /// Nodal covariant gradient `(d_psi f, d_theta f, d_phi f)` by second-order
    /// differences: centered in the periodic angles, centered in `psi` with
    /// one-sided second-order closure on the boundary surfaces.
    pub fn gradient(&self, f: &[f64]) -> Result<Vec<[f64; 3]>> {
        if f.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        let d = self.dims;
        let [hp, ht, hf] = self.spacings();
        let mut out = vec![[0.0; 3]; d.len()];
        for i in 0..d.n_psi {
            for j in 0..d.n_theta {
                for k in 0..d.n_phi {
                    let at = |ii: usize, jj: usize, kk: usize| f[d.index(ii, jj, kk)];
                    let dpsi = if i == 0 {
                        (-3.0 * at(0, j, k) + 4.0 * at(1, j, k) - at(2, j, k)) / (2.0 * hp)
                    } else if i + 1 == d.n_psi {
                        (3.0 * at(i, j, k) - 4.0 * at(i - 1, j, k) + at(i - 2, j, k)) / (2.0 * hp)
                    } else {
                        (at(i + 1, j, k) - at(i - 1, j, k)) / (2.0 * hp)
                    };
                    let jp = (j + 1) % d.n_theta;
                    let jm = (j + d.n_theta - 1) % d.n_theta;
                    let dtheta = (at(i, jp, k) - at(i, jm, k)) / (2.0 * ht);
                    let dphi = if self.dim == 3 {
                        let kp = (k + 1) % d.n_phi;
                        let km = (k + d.n_phi - 1) % d.n_phi;
                        (at(i, j, kp) - at(i, j, km)) / (2.0 * hf)
                    } else {
                        0.0
                    };
                    out[d.index(i, j, k)] = [dpsi, dtheta, dphi];
                }
            }
        }
        Ok(out)
    }
}

/// `div n = (1/sqrt g) d_i (sqrt g g^{i psi} / |grad psi|)` from the analytic
/// metric by centered differences with a small fixed step.
fn normal_divergence(field: &FieldModel, p: FluxPoint, dim: usize) -> f64 {
    let step = 1e-5;
    let flux = |q: FluxPoint, i: usize| {
        let m = field.metric(q);
        m.sqrt_g * m.upper[i][0] / m.grad_psi
    };
    let mut total = 0.0;
    for i in 0..dim {
        let mut plus = p;
        let mut minus = p;
        match i {
            0 => {
                plus.psi += step;
                minus.psi -= step;
            }
            1 => {
                plus.theta += step;
                minus.theta -= step;
            }
            _ => {
                plus.phi += step;
                minus.phi -= step;
            }
        }
        total += (flux(plus, i) - flux(minus, i)) / (2.0 * step);
    }
    total / field.metric(p).sqrt_g
}

/// Grid-sampled scalar with one value per node in `(psi, theta, phi)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dims: GridDims,
    kind: FieldKind,
    psi_range: (f64, f64),
    values: Vec<f64>,
    boundary: Option<(f64, f64)>,
}

impl ScalarField {
    pub fn new(grid: &FluxGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            dims: grid.dims,
            kind: grid.kind,
            psi_range: grid.psi_range,
            values,
            boundary: None,
        })
    }

    pub(crate) fn from_parts(
        dims: GridDims,
        kind: FieldKind,
        psi_range: (f64, f64),
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(dims.len(), values.len());
        Self {
            dims,
            kind,
            psi_range,
            values,
            boundary: None,
        }
    }

    pub fn zeros(grid: &FluxGrid) -> Self {
        Self::new(grid, vec![0.0; grid.len()]).expect("length matches grid")
    }

    pub fn from_fn(grid: &FluxGrid, f: impl Fn(FluxPoint) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        Self::new(grid, values).expect("length matches grid")
    }

    /// Tags the `psi_-` / `psi_+` surfaces as Dirichlet with the given values.
    pub fn with_boundary(mut self, t_minus: f64, t_plus: f64) -> Self {
        self.boundary = Some((t_minus, t_plus));
        self
    }

    pub fn boundary(&self) -> Option<(f64, f64)> {
        self.boundary
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn psi_range(&self) -> (f64, f64) {
        self.psi_range
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn surface(&self, psi_index: usize) -> &[f64] {
        let n = self.dims.surface_len();
        &self.values[psi_index * n..(psi_index + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::GridMismatch("field shapes differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn header(&self) -> String {
        let mut s = String::from("fiberheat-scalar-field v1\n");
        s += &format!("kind = {}\n", self.kind.name());
        s += &format!(
            "dims = {} {} {}\n",
            self.dims.n_psi, self.dims.n_theta, self.dims.n_phi
        );
        s += &format!("psi_range = {:e} {:e}\n", self.psi_range.0, self.psi_range.1);
        match self.boundary {
            Some((a, b)) => s += &format!("dirichlet = {a:e} {b:e}\n"),
            None => s += "dirichlet = none\n",
        }
        s += "layout = f64-le psi-major theta phi\nend_header\n";
        s
    }

    /// Plain-text header followed by little-endian `f64` values in
    /// `(psi-major, theta, phi)` order.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.header().as_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let bad = |msg: &str| Error::Io(format!("{}: {msg}", path.display()));
        let mut kind = None;
        let mut dims = None;
        let mut psi_range = None;
        let mut boundary = None;
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim() != "fiberheat-scalar-field v1" {
            return Err(bad("unrecognized header"));
        }
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("missing end_header"));
            }
            let text = line.trim();
            if text == "end_header" {
                break;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| bad("malformed header line"))?;
            let nums = |v: &str| -> Vec<f64> { v.split_whitespace().filter_map(|t| t.parse().ok()).collect() };
            match key.trim() {
                "kind" => kind = FieldKind::from_name(value.trim()),
                "dims" => {
                    let n = nums(value);
                    if n.len() == 3 {
                        dims = Some(GridDims {
                            n_psi: n[0] as usize,
                            n_theta: n[1] as usize,
                            n_phi: n[2] as usize,
                        });
                    }
                }
                "psi_range" => {
                    let n = nums(value);
                    if n.len() == 2 {
                        psi_range = Some((n[0], n[1]));
                    }
                }
                "dirichlet" => {
                    let n = nums(value);
                    if n.len() == 2 {
                        boundary = Some((n[0], n[1]));
                    }
                }
                _ => {}
            }
        }
        let (kind, dims, psi_range) = match (kind, dims, psi_range) {
            (Some(k), Some(d), Some(p)) => (k, d, p),
            _ => return Err(bad("incomplete header")),
        };
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * dims.len() {
            return Err(Error::ShapeMismatch {
                expected: dims.len(),
                got: bytes.len() / 8,
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            dims,
            kind,
            psi_range,
            values,
            boundary,
        })
    }

    /// CSV with columns `psi, theta, phi, value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "psi,theta,phi,value")?;
        let (lo, hi) = self.psi_range;
        let d = self.dims;
        for (idx, v) in self.values.iter().enumerate() {
            let (i, j, k) = d.coords(idx);
            let psi = lo + (hi - lo) * i as f64 / (d.n_psi - 1) as f64;
            let theta = TAU * j as f64 / d.n_theta as f64;
            let phi = TAU * k as f64 / d.n_phi as f64;
            writeln!(w, "{psi:.12e},{theta:.12e},{phi:.12e},{v:.12e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trapezoidal quadrature of `integrand * dH` over the surface `psi_index`,
/// with `dH = |grad psi| sqrt(g) dtheta dphi`.
pub fn surface_integral(grid: &FluxGrid, psi_index: usize, integrand: &[f64]) -> Result<f64> {
    let d = grid.dims;
    if psi_index >= d.n_psi {
        return Err(Error::IndexOutOfRange {
            index: psi_index,
            len: d.n_psi,
        });
    }
    let n = d.surface_len();
    if integrand.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: integrand.len(),
        });
    }
    let base = psi_index * n;
    let sum: f64 = integrand
        .iter()
        .enumerate()
        .map(|(s, v)| v * grid.grad_psi[base + s] * grid.sqrt_g[base + s])
        .sum();
    Ok(sum * grid.angle_weight())
}

/// `int_D f dmu` as `int dpsi` (composite trapezoid) of the surface integrals of `f / |grad psi|`.
pub fn volume_integral(grid: &FluxGrid, f: &ScalarField) -> Result<f64> {
    grid.check_field(f)?;
    let d = grid.dims;
    let n = d.surface_len();
    let mut total = 0.0;
    let mut scratch = vec![0.0; n];
    for i in 0..d.n_psi {
        for (s, slot) in scratch.iter_mut().enumerate() {
            let idx = i * n + s;
            *slot = f.values[idx] / grid.grad_psi[idx];
        }
        total += grid.psi_weight(i) * surface_integral(grid, i, &scratch)?;
    }
    Ok(total)
}

/// Direct node sum `sum_n sqrt(g) w_n f_n`; agrees with [`volume_integral`] to roundoff.
pub fn weighted_sum(grid: &FluxGrid, f: &ScalarField) -> Result<f64> {
    grid.check_field(f)?;
    Ok(f.values
        .iter()
        .enumerate()
        .map(|(idx, v)| v * grid.volume_weight(idx))
        .sum())
}

/// Per interior surface, `|d/dpsi int_{S_psi} F dH - int_{S_psi} div(n F) / |grad psi| dH|`
/// with `n = grad psi / |grad psi|`.
///
/// The left side differentiates the surface integrals with centered differences
/// in `psi`; the right side expands `div(n F) = n . grad F + F div n` using the
/// cached metric, spectral angle derivatives, and centered `psi` differences.
pub fn gamma_derivative_residual(grid: &FluxGrid, f: &ScalarField) -> Result<Vec<f64>> {
    grid.check_field(f)?;
    let d = grid.dims;
    let n = d.surface_len();
    let h = grid.h_psi();
    let surface: Vec<f64> = (0..d.n_psi)
        .map(|i| surface_integral(grid, i, f.surface(i)))
        .collect::<Result<_>>()?;

    let angle_derivs = angular_derivatives(grid, f.values());
    let mut out = Vec::with_capacity(d.n_psi.saturating_sub(2));
    for i in 1..d.n_psi - 1 {
        let lhs = (surface[i + 1] - surface[i - 1]) / (2.0 * h);
        let mut rhs = 0.0;
        for s in 0..n {
            let idx = i * n + s;
            let dpsi = (f.values[idx + n] - f.values[idx - n]) / (2.0 * h);
            let gp = grid.grad_psi[idx];
            let mut n_dot_grad = grid.metric_upper(idx, 0, 0) * dpsi;
            n_dot_grad += grid.metric_upper(idx, 1, 0) * angle_derivs[idx][0];
            n_dot_grad += grid.metric_upper(idx, 2, 0) * angle_derivs[idx][1];
            let div = n_dot_grad / gp + f.values[idx] * grid.div_normal[idx];
            rhs += div * grid.sqrt_g[idx];
        }
        rhs *= grid.angle_weight();
        out.push((lhs - rhs).abs());
    }
    Ok(out)
}

/// Spectral `(d_theta f, d_phi f)` at every node.
pub(crate) fn angular_derivatives(grid: &FluxGrid, f: &[f64]) -> Vec<[f64; 2]> {
    let d = grid.dims;
    let mut out = vec![[0.0; 2]; d.len()];
    let dt = PeriodicDerivative::new(d.n_theta);
    let mut line = vec![0.0; d.n_theta];
    for i in 0..d.n_psi {
        for k in 0..d.n_phi {
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = f[d.index(i, j, k)];
            }
            for (j, v) in dt.apply(&line).into_iter().enumerate() {
                out[d.index(i, j, k)][0] = v;
            }
        }
    }
    if grid.dim == 3 {
        let dp = PeriodicDerivative::new(d.n_phi);
        for i in 0..d.n_psi {
            for j in 0..d.n_theta {
                let start = d.index(i, j, 0);
                let deriv = dp.apply(&f[start..start + d.n_phi]);
                for (k, v) in deriv.into_iter().enumerate() {
                    out[start + k][1] = v;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_field, FieldSpec};
    use std::f64::consts::PI;

    fn annulus_grid(n_psi: usize, n_theta: usize) -> FluxGrid {
        let f = make_field(&FieldSpec::annulus()).unwrap();
        FluxGrid::new(&f, n_psi, n_theta, 1).unwrap()
    }

    fn torus_grid(n_psi: usize, n_angle: usize) -> FluxGrid {
        let f = make_field(&FieldSpec::torus_integrable()).unwrap();
        FluxGrid::new(&f, n_psi, n_angle, n_angle).unwrap()
    }

    #[test]
    fn annulus_circumference() {
        let g = annulus_grid(11, 32);
        let ones = vec![1.0; 32];
        for i in 0..11 {
            let r = g.psi_nodes()[i];
            let gamma = surface_integral(&g, i, &ones).unwrap();
            assert!((gamma - TAU * r).abs() / (TAU * r) <= 1e-12);
        }
        assert_eq!(surface_integral(&g, 3, &[0.0; 32]).unwrap(), 0.0);
        assert!(matches!(
            surface_integral(&g, 11, &ones),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn torus_surface_area() {
        let g = torus_grid(5, 16);
        let ones = vec![1.0; 256];
        for i in 0..5 {
            let r = g.psi_nodes()[i];
            let area = surface_integral(&g, i, &ones).unwrap();
            let exact = 4.0 * PI * PI * 3.0 * r;
            assert!((area - exact).abs() / exact <= 1e-10);
        }
    }

    #[test]
    fn closed_form_volumes() {
        let g = annulus_grid(65, 32);
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let area = volume_integral(&g, &one).unwrap();
        // trapezoid in r is exact for the linear integrand r
        assert!((area - 3.0 * PI).abs() <= 1e-10);
        assert_eq!(volume_integral(&g, &ScalarField::zeros(&g)).unwrap(), 0.0);

        let t = torus_grid(9, 16);
        let one = ScalarField::from_fn(&t, |_| 1.0);
        let vol = volume_integral(&t, &one).unwrap();
        assert!((vol - 12.0 * PI * PI).abs() <= 1e-8, "{vol}");
    }

    #[test]
    fn volume_matches_direct_weighted_sum() {
        let f = make_field(&FieldSpec::channel(0.15)).unwrap();
        let g = FluxGrid::new(&f, 17, 24, 1).unwrap();
        let u = ScalarField::from_fn(&g, |p| (p.theta).cos() + p.psi * p.psi);
        let a = volume_integral(&g, &u).unwrap();
        let b = weighted_sum(&g, &u).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn channel_area_is_unit_square() {
        let f = make_field(&FieldSpec::channel(0.15)).unwrap();
        let g = FluxGrid::new(&f, 129, 64, 1).unwrap();
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let area = volume_integral(&g, &one).unwrap();
        assert!((area - 1.0).abs() < 1e-4, "{area}");
    }

    #[test]
    fn derivative_identity_for_constant_on_annulus() {
        let g = annulus_grid(33, 32);
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let res = gamma_derivative_residual(&g, &one).unwrap();
        assert_eq!(res.len(), 31);
        assert!(res.iter().all(|r| *r < 1e-8), "{res:?}");
        let zero = ScalarField::zeros(&g);
        assert!(gamma_derivative_residual(&g, &zero).unwrap().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn binary_round_trip() {
        let g = annulus_grid(5, 8);
        let u = ScalarField::from_fn(&g, |p| p.psi * p.theta.sin()).with_boundary(0.0, 1.0);
        let dir = tempfile_dir();
        let path = dir.join("u.bin");
        u.write_binary(&path).unwrap();
        let back = ScalarField::read_binary(&path).unwrap();
        assert_eq!(back, u);
        std::fs::remove_dir_all(dir).ok();
    }

    fn tempfile_dir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("fiberheat-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
