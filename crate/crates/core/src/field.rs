//! Catalog of fibered and nearly-integrable magnetic fields given in
//! straight-field-line flux coordinates `(psi, theta, phi)`.
//!
//! Every model carries an analytic embedding into Cartesian space, from which
//! the covariant basis, the metric and the Jacobian are evaluated exactly. The
//! magnetic field is described by its contravariant components in flux
//! coordinates:
//!
//! * planar kinds use `B = grad^perp psi`, so `B^psi = 0` and `B^theta = 1 / jac`;
//! * toroidal kinds use the Clebsch form `B = grad psi x grad theta + grad phi x grad chi`
//!   with `chi = chi_0(psi) + eps^a chi_1(psi, theta, phi)`, giving
//!   `B^psi = -J d_theta chi`, `B^theta = J d_psi chi`, `B^phi = J`, where
//!   `J = grad psi x grad theta . grad phi` is the signed inverse Jacobian.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Lattice resolution used when validating a model.
pub const VALIDATION_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxPoint {
    pub psi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl FluxPoint {
    pub fn new(psi: f64, theta: f64, phi: f64) -> Self {
        Self { psi, theta, phi }
    }

    pub fn planar(psi: f64, theta: f64) -> Self {
        Self { psi, theta, phi: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Annulus2D,
    Channel2D,
    TorusIntegrable,
    TorusPerturbed,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Annulus2D => "annulus2d",
            FieldKind::Channel2D => "channel2d",
            FieldKind::TorusIntegrable => "torus-integrable",
            FieldKind::TorusPerturbed => "torus-perturbed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "annulus2d" => Some(FieldKind::Annulus2D),
            "channel2d" => Some(FieldKind::Channel2D),
            "torus-integrable" => Some(FieldKind::TorusIntegrable),
            "torus-perturbed" => Some(FieldKind::TorusPerturbed),
            _ => None,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FieldKind::Annulus2D | FieldKind::Channel2D => 2,
            FieldKind::TorusIntegrable | FieldKind::TorusPerturbed => 3,
        }
    }
}

/// Choice of flux label on the annulus: `psi = r` or `psi = r^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnulusLabel {
    Radius,
    HalfSquare,
}

impl AnnulusLabel {
    fn radius(self, psi: f64) -> (f64, f64) {
        match self {
            AnnulusLabel::Radius => (psi, 1.0),
            AnnulusLabel::HalfSquare => {
                let r = (2.0 * psi).sqrt();
                (r, 1.0 / r)
            }
        }
    }
}

/// Rotational transform as a polynomial `iota(psi) = sum_k c_k psi^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IotaProfile {
    coeffs: Vec<f64>,
}

impl IotaProfile {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "iota needs at least one finite coefficient".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    pub fn constant(value: f64) -> Self {
        Self { coeffs: vec![value] }
    }

    /// `iota(psi) = psi`, i.e. `chi_0 = psi^2 / 2`.
    pub fn identity() -> Self {
        Self {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self, psi: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * psi + c)
    }

    pub fn derivative(&self, psi: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * psi + k as f64 * c)
    }

    /// Antiderivative with zero constant term; this is `chi_0`.
    pub fn integral(&self, psi: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * psi + c / (k + 1) as f64)
            * psi
    }
}

/// Radial shape of the perturbation amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    /// `(psi - psi_-)(psi_+ - psi)`, vanishing on both boundary surfaces.
    Boundary,
    /// `psi (psi_+ - psi)`, vanishing only at `psi = 0` and `psi_+`.
    Origin,
}

/// `chi_1 = A env(psi) sin(p theta - q phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub amplitude: f64,
    pub a_exponent: f64,
    pub poloidal: i32,
    pub toroidal: i32,
    pub envelope: Envelope,
}

impl Perturbation {
    /// Single resonance at `iota = 1/2`: `A (psi - psi_-)(psi_+ - psi) sin(2 theta - phi)`, `a = 1/2`.
    pub fn resonant(amplitude: f64) -> Self {
        Self {
            amplitude,
            a_exponent: 0.5,
            poloidal: 2,
            toroidal: 1,
            envelope: Envelope::Boundary,
        }
    }

    fn envelope(&self, psi: f64, lo: f64, hi: f64) -> (f64, f64) {
        match self.envelope {
            Envelope::Boundary => ((psi - lo) * (hi - psi), lo + hi - 2.0 * psi),
            Envelope::Origin => (psi * (hi - psi), hi - 2.0 * psi),
        }
    }

    fn envelope_max(&self, lo: f64, hi: f64) -> f64 {
        let peak = match self.envelope {
            Envelope::Boundary => 0.5 * (lo + hi),
            Envelope::Origin => (0.5 * hi).clamp(lo, hi),
        };
        [lo, peak, hi]
            .iter()
            .map(|&p| self.envelope(p, lo, hi).0.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Annulus {
        psi_min: f64,
        psi_max: f64,
        label: AnnulusLabel,
    },
    /// `psi(x, y) = y + delta sin(2 pi x) y (1 - y)` on `[0,1) x [0,1]`, periodic in `x`.
    Channel { delta: f64 },
    /// Circular torus `x = (R + psi cos theta) cos phi`, `y = (R + psi cos theta) sin phi`, `z = psi sin theta`.
    Torus {
        major_radius: f64,
        psi_min: f64,
        psi_max: f64,
        iota: IotaProfile,
        perturbation: Option<Perturbation>,
    },
}

impl FieldSpec {
    pub fn annulus() -> Self {
        FieldSpec::Annulus {
            psi_min: 1.0,
            psi_max: 2.0,
            label: AnnulusLabel::Radius,
        }
    }

    pub fn channel(delta: f64) -> Self {
        FieldSpec::Channel { delta }
    }

    pub fn torus_integrable() -> Self {
        FieldSpec::Torus {
            major_radius: 3.0,
            psi_min: 0.5,
            psi_max: 1.5,
            iota: IotaProfile::identity(),
            perturbation: None,
        }
    }

    pub fn torus_perturbed(amplitude: f64) -> Self {
        FieldSpec::Torus {
            major_radius: 3.0,
            psi_min: 0.5,
            psi_max: 1.5,
            iota: IotaProfile::identity(),
            perturbation: Some(Perturbation::resonant(amplitude)),
        }
    }
}

/// Position, covariant basis `e_i = dx/dq^i`, and signed Jacobian `e_psi x e_theta . e_phi`.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub position: Vec3,
    pub basis: [Vec3; 3],
    pub signed_jacobian: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Metric {
    pub sqrt_g: f64,
    pub signed_jacobian: f64,
    pub lower: Mat3,
    pub upper: Mat3,
    pub grad_psi: f64,
}

/// Validated, immutable field model.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    spec: FieldSpec,
    kind: FieldKind,
    psi_range: (f64, f64),
}

pub fn make_field(spec: &FieldSpec) -> Result<FieldModel> {
    let (kind, psi_range) = match spec {
        FieldSpec::Annulus {
            psi_min, psi_max, ..
        } => {
            check_range(*psi_min, *psi_max)?;
            if *psi_min <= 0.0 {
                return Err(Error::InvalidParameter(
                    "annulus requires psi_min > 0".into(),
                ));
            }
            (FieldKind::Annulus2D, (*psi_min, *psi_max))
        }
        FieldSpec::Channel { delta } => {
            if !delta.is_finite() {
                return Err(Error::InvalidParameter("delta must be finite".into()));
            }
            scan_channel(*delta)?;
            (FieldKind::Channel2D, (0.0, 1.0))
        }
        FieldSpec::Torus {
            major_radius,
            psi_min,
            psi_max,
            perturbation,
            ..
        } => {
            check_range(*psi_min, *psi_max)?;
            if *psi_min <= 0.0 || *psi_max >= *major_radius {
                return Err(Error::InvalidParameter(format!(
                    "torus requires 0 < psi_min < psi_max < R = {major_radius}"
                )));
            }
            match perturbation {
                None => (FieldKind::TorusIntegrable, (*psi_min, *psi_max)),
                Some(p) => {
                    if !(p.a_exponent >= 0.5) {
                        return Err(Error::InvalidParameter(format!(
                            "perturbation exponent a = {} must be >= 1/2",
                            p.a_exponent
                        )));
                    }
                    if !p.amplitude.is_finite() {
                        return Err(Error::InvalidParameter("amplitude must be finite".into()));
                    }
                    (FieldKind::TorusPerturbed, (*psi_min, *psi_max))
                }
            }
        }
    };
    let model = FieldModel {
        spec: spec.clone(),
        kind,
        psi_range,
    };
    model.validate_lattice()?;
    Ok(model)
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "degenerate psi range [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn channel_gradient(delta: f64, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = (TAU * x).sin_cos();
    (TAU * delta * c * y * (1.0 - y), 1.0 + delta * s * (1.0 - 2.0 * y))
}

/// Detects critical points of the channel flux function on a periodic lattice:
/// a cell in which both gradient components change sign (or vanish) is reported.
fn scan_channel(delta: f64) -> Result<()> {
    let n = VALIDATION_SAMPLES;
    let node = |i: usize, j: usize| {
        let x = (i % n) as f64 / n as f64;
        let y = j as f64 / (n - 1) as f64;
        (x, y, channel_gradient(delta, x, y))
    };
    for i in 0..n {
        for j in 0..n {
            let (x, y, (gx, gy)) = node(i, j);
            if gx.hypot(gy) < 1e-12 {
                return Err(Error::NullPoint { x, y });
            }
            if j + 1 == n {
                continue;
            }
            let corners = [node(i, j).2, node(i + 1, j).2, node(i, j + 1).2, node(i + 1, j + 1).2];
            let straddles = |f: fn(&(f64, f64)) -> f64| {
                let lo = corners.iter().map(f).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if straddles(|g| g.0) && straddles(|g| g.1) {
                let h = 0.5 / n as f64;
                return Err(Error::NullPoint {
                    x: x + h,
                    y: y + 0.5 / (n - 1) as f64,
                });
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let (x, y, (_, gy)) = node(i, j);
            if gy <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "channel level sets are not graphs over x near ({x:.3}, {y:.3})"
                )));
            }
        }
    }
    Ok(())
}

/// Height `y` of the level set `psi` above abscissa `x`.
fn channel_height(delta: f64, psi: f64, x: f64) -> f64 {
    let s = delta * (TAU * x).sin();
    // root of -s y^2 + (1 + s) y - psi = 0 lying in [0, 1]
    2.0 * psi / ((1.0 + s) + ((1.0 + s) * (1.0 + s) - 4.0 * s * psi).sqrt())
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn invert_symmetric(m: &Mat3) -> Mat3 {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    let c12 = m[0][2] * m[1][0] - m[0][0] * m[1][2];
    let c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = 1.0 / det;
    [
        [c00 * inv, c01 * inv, c02 * inv],
        [c01 * inv, c11 * inv, c12 * inv],
        [c02 * inv, c12 * inv, c22 * inv],
    ]
}

impl FieldModel {
    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn psi_range(&self) -> (f64, f64) {
        self.psi_range
    }

    pub fn iota_profile(&self) -> Option<&IotaProfile> {
        match &self.spec {
            FieldSpec::Torus { iota, .. } => Some(iota),
            _ => None,
        }
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        match &self.spec {
            FieldSpec::Torus { perturbation, .. } => perturbation.as_ref(),
            _ => None,
        }
    }

    fn check_domain(&self, psi: f64) -> Result<()> {
        let (lo, hi) = self.psi_range;
        let slack = 1e-12 * (hi - lo);
        if !(psi >= lo - slack && psi <= hi + slack) {
            return Err(Error::OutOfDomain { psi, lo, hi });
        }
        Ok(())
    }

    pub fn geometry(&self, p: FluxPoint) -> Geometry {
        match &self.spec {
            FieldSpec::Annulus { label, .. } => {
                let (r, dr) = label.radius(p.psi);
                let (s, c) = p.theta.sin_cos();
                Geometry {
                    position: [r * c, r * s, 0.0],
                    basis: [[dr * c, dr * s, 0.0], [-r * s, r * c, 0.0], [0.0, 0.0, 1.0]],
                    signed_jacobian: r * dr,
                }
            }
            FieldSpec::Channel { delta } => {
                let x = p.theta / TAU;
                let y = channel_height(*delta, p.psi, x);
                let (gx, gy) = channel_gradient(*delta, x, y);
                let e_psi = [0.0, 1.0 / gy, 0.0];
                let e_theta = [1.0 / TAU, -gx / (TAU * gy), 0.0];
                Geometry {
                    position: [x, y, 0.0],
                    basis: [e_psi, e_theta, [0.0, 0.0, 1.0]],
                    signed_jacobian: -1.0 / (TAU * gy),
                }
            }
            FieldSpec::Torus { major_radius, .. } => {
                let (st, ct) = p.theta.sin_cos();
                let (sp, cp) = p.phi.sin_cos();
                let big = major_radius + p.psi * ct;
                let e_psi = [ct * cp, ct * sp, st];
                let e_theta = [-p.psi * st * cp, -p.psi * st * sp, p.psi * ct];
                let e_phi = [-big * sp, big * cp, 0.0];
                let jac = dot(&cross(&e_psi, &e_theta), &e_phi);
                Geometry {
                    position: [big * cp, big * sp, p.psi * st],
                    basis: [e_psi, e_theta, e_phi],
                    signed_jacobian: jac,
                }
            }
        }
    }

    pub fn position(&self, p: FluxPoint) -> Vec3 {
        self.geometry(p).position
    }

    pub fn metric(&self, p: FluxPoint) -> Metric {
        let geo = self.geometry(p);
        let mut lower = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                lower[i][j] = dot(&geo.basis[i], &geo.basis[j]);
            }
        }
        let upper = invert_symmetric(&lower);
        Metric {
            sqrt_g: geo.signed_jacobian.abs(),
            signed_jacobian: geo.signed_jacobian,
            lower,
            upper,
            grad_psi: upper[0][0].max(0.0).sqrt(),
        }
    }

    /// `iota(psi) = chi_0'(psi)`; toroidal kinds only.
    pub fn rotational_transform(&self, psi: f64) -> Result<f64> {
        match &self.spec {
            FieldSpec::Torus { iota, .. } => {
                self.check_domain(psi)?;
                Ok(iota.value(psi))
            }
            _ => Err(Error::WrongKind(format!(
                "rotational transform is undefined for {}",
                self.kind.name()
            ))),
        }
    }

    pub fn chi0(&self, psi: f64) -> Result<f64> {
        match &self.spec {
            FieldSpec::Torus { iota, .. } => {
                self.check_domain(psi)?;
                Ok(iota.integral(psi))
            }
            _ => Err(Error::WrongKind(format!(
                "chi_0 is undefined for {}",
                self.kind.name()
            ))),
        }
    }

    /// `(chi_1, d_psi chi_1, d_theta chi_1, d_phi chi_1)`; zero for unperturbed kinds.
    pub fn chi1_partials(&self, p: FluxPoint) -> [f64; 4] {
        match &self.spec {
            FieldSpec::Torus {
                perturbation: Some(pert),
                psi_min,
                psi_max,
                ..
            } => {
                let (env, denv) = pert.envelope(p.psi, *psi_min, *psi_max);
                let arg = pert.poloidal as f64 * p.theta - pert.toroidal as f64 * p.phi;
                let (s, c) = arg.sin_cos();
                let a = pert.amplitude;
                [
                    a * env * s,
                    a * denv * s,
                    a * env * pert.poloidal as f64 * c,
                    -a * env * pert.toroidal as f64 * c,
                ]
            }
            _ => [0.0; 4],
        }
    }

    /// `eps^a` for perturbed fields, zero otherwise.
    pub fn perturbation_weight(&self, eps: f64) -> f64 {
        match self.perturbation() {
            Some(p) => eps.powf(p.a_exponent),
            None => 0.0,
        }
    }

    /// Contravariant components `(B^psi, B^theta, B^phi)`. `eps` enters only
    /// through `eps^a` for perturbed fields.
    pub fn contravariant_field(&self, p: FluxPoint, eps: f64) -> Result<Vec3> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must be >= 0")));
        }
        self.check_domain(p.psi)?;
        let geo = self.geometry(p);
        Ok(self.components(p, &geo, self.perturbation_weight(eps)))
    }

    fn components(&self, p: FluxPoint, geo: &Geometry, weight: f64) -> Vec3 {
        let inv = 1.0 / geo.signed_jacobian;
        match &self.spec {
            FieldSpec::Annulus { .. } | FieldSpec::Channel { .. } => [0.0, inv, 0.0],
            FieldSpec::Torus { iota, .. } => {
                let partials = self.chi1_partials(p);
                let d_psi = iota.value(p.psi) + weight * partials[1];
                let d_theta = weight * partials[2];
                [-d_theta * inv, d_psi * inv, inv]
            }
        }
    }

    /// Unperturbed part `B_0` of a toroidal field (equal to `B` for other kinds).
    pub fn contravariant_field_unperturbed(&self, p: FluxPoint) -> Result<Vec3> {
        self.contravariant_field(p, 0.0)
    }

    pub fn cartesian_field(&self, p: FluxPoint, eps: f64) -> Result<Vec3> {
        let b = self.contravariant_field(p, eps)?;
        let geo = self.geometry(p);
        let mut out = [0.0; 3];
        for (comp, e) in b.iter().zip(geo.basis.iter()) {
            for k in 0..3 {
                out[k] += comp * e[k];
            }
        }
        Ok(out)
    }

    pub fn field_magnitude(&self, p: FluxPoint, eps: f64) -> Result<f64> {
        let b = self.contravariant_field(p, eps)?;
        Ok(norm_lower(&b, &self.metric(p).lower))
    }

    /// Contravariant unit vector `b = B / |B|`.
    pub fn unit_field(&self, p: FluxPoint, eps: f64) -> Result<Vec3> {
        let b = self.contravariant_field(p, eps)?;
        let mag = norm_lower(&b, &self.metric(p).lower);
        if !(mag > 0.0) {
            return Err(Error::ZeroField);
        }
        Ok([b[0] / mag, b[1] / mag, b[2] / mag])
    }

    /// `b_0 = B_0 / |B|`, the unperturbed direction scaled by the full field strength.
    pub fn unit_field_unperturbed(&self, p: FluxPoint, eps: f64) -> Result<Vec3> {
        let full = self.contravariant_field(p, eps)?;
        let lower = self.metric(p).lower;
        let mag = norm_lower(&full, &lower);
        if !(mag > 0.0) {
            return Err(Error::ZeroField);
        }
        let b0 = self.contravariant_field(p, 0.0)?;
        Ok([b0[0] / mag, b0[1] / mag, b0[2] / mag])
    }

    /// Contravariant tensor `D = eps g^{-1} + (1 - eps) b (x) b`, so that the heat
    /// flux `b grad_b T + eps grad_b^perp T` equals `D grad T`. Planar kinds leave
    /// the `phi` row and column zero.
    pub fn diffusion_tensor(&self, p: FluxPoint, eps: f64) -> Result<Mat3> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps = {eps} must lie in (0, 1]"
            )));
        }
        self.check_domain(p.psi)?;
        let metric = self.metric(p);
        let geo = self.geometry(p);
        let b = self.components(p, &geo, self.perturbation_weight(eps));
        let mag = norm_lower(&b, &metric.lower);
        if !(mag > 0.0) {
            return Err(Error::ZeroField);
        }
        let unit = [b[0] / mag, b[1] / mag, b[2] / mag];
        let dim = self.dim();
        let mut d = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                d[i][j] = eps * metric.upper[i][j] + (1.0 - eps) * (unit[i] * unit[j]);
            }
        }
        Ok(d)
    }

    fn validate_lattice(&self) -> Result<()> {
        let n = VALIDATION_SAMPLES;
        let (lo, hi) = self.psi_range;
        let n_phi = if self.dim() == 3 { n } else { 1 };
        for i in 0..n {
            let psi = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let theta = TAU * j as f64 / n as f64;
                for k in 0..n_phi {
                    let p = FluxPoint::new(psi, theta, TAU * k as f64 / n as f64);
                    let m = self.metric(p);
                    if !(m.grad_psi > 0.0 && m.sqrt_g > 0.0) {
                        let x = self.position(p);
                        return Err(Error::NullPoint { x: x[0], y: x[1] });
                    }
                }
            }
        }
        if let Some(pert) = self.perturbation() {
            let mut sup = pert.amplitude.abs() * pert.poloidal.abs() as f64 * pert.envelope_max(lo, hi);
            for i in 0..n {
                let psi = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                for j in 0..n {
                    for k in 0..n {
                        let p = FluxPoint::new(psi, TAU * j as f64 / n as f64, TAU * k as f64 / n as f64);
                        sup = sup.max(self.chi1_partials(p)[2].abs());
                    }
                }
            }
            if sup >= 1.0 {
                return Err(Error::PerturbationTooLarge { sup });
            }
            for psi in [lo, hi] {
                for j in 0..n {
                    for k in 0..n {
                        let p = FluxPoint::new(psi, TAU * j as f64 / n as f64, TAU * k as f64 / n as f64);
                        let value = self.chi1_partials(p)[2];
                        if value.abs() > 1e-12 {
                            return Err(Error::BoundaryViolation { psi, value });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn norm_lower(v: &Vec3, lower: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += v[i] * lower[i][j] * v[j];
        }
    }
    s.max(0.0).sqrt()
}

/// `sqrt(g_ij v^i v^j)` for a contravariant vector.
pub fn contravariant_norm(v: &Vec3, lower: &Mat3) -> f64 {
    norm_lower(v, lower)
}
