#![allow(clippy::needless_range_loop)]

use std::f64::consts::TAU;

use fiberheat::field::{make_field, FieldSpec, IotaProfile, Mat3, Vec3};
use fiberheat::{FieldModel, FluxPoint};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn catalog() -> Vec<FieldModel> {
    [
        FieldSpec::annulus(),
        FieldSpec::channel(0.15),
        FieldSpec::torus_integrable(),
        FieldSpec::torus_perturbed(0.1),
    ]
    .iter()
    .map(|s| make_field(s).unwrap())
    .collect()
}

fn random_point(field: &FieldModel, rng: &mut impl Rng) -> FluxPoint {
    let (lo, hi) = field.psi_range();
    let psi = rng.gen_range(lo..=hi);
    let theta = rng.gen_range(0.0..TAU);
    if field.dim() == 3 {
        FluxPoint::new(psi, theta, rng.gen_range(0.0..TAU))
    } else {
        FluxPoint::planar(psi, theta)
    }
}

fn block(m: &Mat3, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| m[i][j])
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[test]
fn diffusion_tensor_is_positive_definite_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for field in catalog() {
        for _ in 0..10_000 {
            let p = random_point(&field, &mut rng);
            let eps = 10f64.powf(rng.gen_range(-6.0..=0.0));
            let d = field.diffusion_tensor(p, eps).unwrap();
            assert!(block(&d, field.dim()).cholesky().is_some(), "{:?} {p:?} eps={eps}", field.kind());
        }
    }
}

#[test]
fn diffusion_eigenvalues_lie_between_eps_and_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let eps = 1e-4;
    for field in catalog() {
        let dim = field.dim();
        for _ in 0..100 {
            let p = random_point(&field, &mut rng);
            let d = block(&field.diffusion_tensor(p, eps).unwrap(), dim);
            let g = block(&field.metric(p).lower, dim);
            let l = g.cholesky().unwrap().l();
            let eig = SymmetricEigen::new(l.transpose() * d * l).eigenvalues;
            for &lambda in eig.iter() {
                assert!(lambda >= eps * (1.0 - 1e-9) && lambda <= 1.0 + 1e-9, "{lambda}");
            }
        }
    }
}

#[test]
fn field_matches_clebsch_cross_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let eps = 0.01;
    for field in catalog().into_iter().filter(|f| f.dim() == 3) {
        let w = field.perturbation_weight(eps);
        for _ in 0..200 {
            let p = random_point(&field, &mut rng);
            let geo = field.geometry(p);
            let upper = field.metric(p).upper;
            let grad: Vec<Vec3> = (0..3)
                .map(|i| {
                    let mut v = [0.0; 3];
                    for j in 0..3 {
                        for k in 0..3 {
                            v[k] += upper[i][j] * geo.basis[j][k];
                        }
                    }
                    v
                })
                .collect();
            let chi = field.chi1_partials(p);
            let iota = field.rotational_transform(p.psi).unwrap();
            let mut grad_chi = [0.0; 3];
            for k in 0..3 {
                grad_chi[k] = (iota + w * chi[1]) * grad[0][k] + w * chi[2] * grad[1][k] + w * chi[3] * grad[2][k];
            }
            let a = cross(grad[0], grad[1]);
            let b = cross(grad[2], grad_chi);
            let expected: Vec3 = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
            let got = field.cartesian_field(p, eps).unwrap();
            let scale = expected.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for k in 0..3 {
                assert!((got[k] - expected[k]).abs() <= 1e-10 * scale, "{got:?} vs {expected:?}");
            }
        }
    }
}

#[test]
fn perturbed_radial_component_matches_closed_form() {
    let field = make_field(&FieldSpec::torus_perturbed(0.1)).unwrap();
    let eps: f64 = 0.01;
    let psi = 1.0;
    let p = FluxPoint::new(psi, std::f64::consts::FRAC_PI_4, 0.0);
    let j = field.geometry(p).signed_jacobian.recip();
    let expected = -0.1 * (psi - 0.5) * (1.5 - psi) * 2.0 * (std::f64::consts::FRAC_PI_2).cos() * eps.sqrt() * j;
    let got = field.contravariant_field(p, eps).unwrap()[0];
    assert!((got - expected).abs() <= 1e-8 * (1.0 + expected.abs()));
}

#[test]
fn unperturbed_fields_are_tangent_to_surfaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for field in catalog().into_iter().filter(|f| f.perturbation().is_none()) {
        for _ in 0..1000 {
            let p = random_point(&field, &mut rng);
            assert_eq!(field.contravariant_field(p, 0.3).unwrap()[0], 0.0);
        }
    }
}

/// `max |(1/sqrt g) d_i (sqrt g B^i)|` over fixed points, by centered differences of step `h`.
fn divergence(field: &FieldModel, points: &[FluxPoint], h: f64, eps: f64) -> f64 {
    let flux = |p: FluxPoint, i: usize| {
        let m = field.metric(p);
        m.sqrt_g * field.contravariant_field(p, eps).unwrap()[i]
    };
    let shift = |p: FluxPoint, i: usize, s: f64| {
        let mut q = p;
        match i {
            0 => q.psi += s,
            1 => q.theta += s,
            _ => q.phi += s,
        }
        q
    };
    points
        .iter()
        .map(|&p| {
            let div: f64 = (0..field.dim())
                .map(|i| (flux(shift(p, i, h), i) - flux(shift(p, i, -h), i)) / (2.0 * h))
                .sum();
            (div / field.metric(p).sqrt_g).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn discrete_divergence_vanishes_at_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for field in catalog() {
        let (lo, hi) = field.psi_range();
        let margin = 0.05 * (hi - lo);
        let points: Vec<FluxPoint> = (0..200)
            .map(|_| {
                let mut p = random_point(&field, &mut rng);
                p.psi = p.psi.clamp(lo + margin, hi - margin);
                p
            })
            .collect();
        let coarse = divergence(&field, &points, 1e-2, 0.01);
        let fine = divergence(&field, &points, 5e-3, 0.01);
        assert!(fine <= 1e-9 || coarse / fine >= 3.5, "{:?}: {coarse:e} -> {fine:e}", field.kind());
    }
}

#[test]
fn rotational_transform_matches_difference_of_chi0() {
    let iota = IotaProfile::polynomial(vec![0.2, 0.3, 0.5]).unwrap();
    let field = make_field(&FieldSpec::Torus {
        major_radius: 3.0,
        psi_min: 0.5,
        psi_max: 1.5,
        iota,
        perturbation: None,
    })
    .unwrap();
    let h = 1e-5;
    for k in 0..1000 {
        let psi = 0.51 + 0.98 * k as f64 / 999.0;
        let fd = (field.chi0(psi + h).unwrap() - field.chi0(psi - h).unwrap()) / (2.0 * h);
        assert!((fd - field.rotational_transform(psi).unwrap()).abs() <= 1e-8);
    }
}

proptest! {
    #[test]
    fn flux_is_eps_weighted_on_normal(psi in 0.5f64..1.5, theta in 0.0..TAU, phi in 0.0..TAU, log_eps in -6.0f64..0.0) {
        let field = make_field(&FieldSpec::torus_integrable()).unwrap();
        let eps = 10f64.powf(log_eps);
        let p = FluxPoint::new(psi, theta, phi);
        let d = field.diffusion_tensor(p, eps).unwrap();
        let upper = field.metric(p).upper;
        for i in 0..3 {
            prop_assert!((d[i][0] - eps * upper[i][0]).abs() <= 1e-12 * (1.0 + upper[i][0].abs()));
        }
    }

    #[test]
    fn diffusion_tensor_is_symmetric(psi in 0.5f64..1.5, theta in 0.0..TAU, phi in 0.0..TAU, log_eps in -6.0f64..0.0) {
        let field = make_field(&FieldSpec::torus_perturbed(0.2)).unwrap();
        let d = field.diffusion_tensor(FluxPoint::new(psi, theta, phi), 10f64.powf(log_eps)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    #[test]
    fn unit_field_has_unit_length(psi in 0.0f64..1.0, theta in 0.0..TAU) {
        let field = make_field(&FieldSpec::channel(0.15)).unwrap();
        let p = FluxPoint::planar(psi, theta);
        let b = field.unit_field(p, 0.1).unwrap();
        let n = fiberheat::field::contravariant_norm(&b, &field.metric(p).lower);
        prop_assert!((n - 1.0).abs() <= 1e-12);
    }
}
