use std::f64::consts::TAU;

use fiberheat::ergodic::{excluded_intervals_for, violates_diophantine};
use fiberheat::field::{make_field, FieldSpec, IotaProfile};
use fiberheat::mde::{apply_symbol, divide_by_symbol, fold_source, forward_transform, solve_mde, SurfaceSpectrum};
use fiberheat::{Error, FluxPoint};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: f64 = 1.618_033_988_749_895;

fn random_spectrum(rng: &mut impl Rng, n_theta: usize, n_phi: usize) -> SurfaceSpectrum {
    let mut s = SurfaceSpectrum::zeros(1.0, n_theta, n_phi);
    let k = s.cutoff() as i64;
    for m in -k..=k {
        for n in -k..=k {
            if (m, n) == (0, 0) || s.is_nyquist(m, n) {
                continue;
            }
            // u(-k) = conj(u(k)) keeps the physical field real
            if (n, m) > (0, 0) {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                s.set(m, n, c).unwrap();
                s.set(-m, -n, c.conj()).unwrap();
            }
        }
    }
    s
}

fn rel_err(a: &SurfaceSpectrum, b: &SurfaceSpectrum) -> f64 {
    let diff = a
        .modes()
        .map(|(m, n, c)| (c - b.get(m, n)).norm())
        .fold(0.0, f64::max);
    diff / b.max_abs()
}

#[test]
fn symbol_inverts_division_for_random_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let v = random_spectrum(&mut rng, 16, 16);
        let w = divide_by_symbol(GOLDEN, &v).unwrap();
        assert!(rel_err(&apply_symbol(GOLDEN, &w), &v) <= 1e-12);
    }
}

#[test]
fn surface_solve_reproduces_folded_source() {
    let field = make_field(&FieldSpec::Torus {
        major_radius: 3.0,
        psi_min: 0.5,
        psi_max: 1.5,
        iota: IotaProfile::constant(GOLDEN),
        perturbation: None,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (n_theta, n_phi) = (16, 16);
    for _ in 0..20 {
        let raw: Vec<f64> = (0..n_theta * n_phi).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let psi = 1.0;
        let weight = |s: usize| {
            let p = FluxPoint::new(psi, TAU * (s / n_phi) as f64 / n_theta as f64, TAU * (s % n_phi) as f64 / n_phi as f64);
            let m = field.metric(p);
            TAU * m.grad_psi * m.signed_jacobian
        };
        // remove the weighted mean so the folded source is mean-free
        let mean = raw.iter().enumerate().map(|(s, v)| weight(s) * v).sum::<f64>() / (n_theta * n_phi) as f64;
        let v: Vec<f64> = raw.iter().enumerate().map(|(s, v)| v - mean / weight(s)).collect();
        let v_hat = forward_transform(psi, n_theta, n_phi, &v).unwrap();
        let big_v = fold_source(&field, &v_hat).unwrap();
        let w = solve_mde(&field, &v_hat).unwrap();
        let mut expected = big_v.clone();
        for (m, n, _) in big_v.modes() {
            if big_v.is_nyquist(m, n) {
                expected.set(m, n, Complex64::new(0.0, 0.0)).unwrap();
            }
        }
        assert!(rel_err(&apply_symbol(GOLDEN, &w), &expected) <= 1e-12);
    }
}

#[test]
fn resonant_mode_raises_small_divisor() {
    let mut v = SurfaceSpectrum::zeros(0.5, 16, 16);
    v.set(1, -2, Complex64::new(1.0, 0.0)).unwrap();
    v.set(-1, 2, Complex64::new(1.0, 0.0)).unwrap();
    match divide_by_symbol(0.5, &v) {
        Err(Error::SmallDivisor { m, n }) => assert_eq!((m, n), (1, -2)),
        other => panic!("expected SmallDivisor, got {other:?}"),
    }
}

#[test]
fn interval_union_matches_brute_force_scan() {
    let iota = IotaProfile::identity();
    for m_level in [10.0, 100.0, 1000.0, 10_000.0] {
        let report = excluded_intervals_for(&iota, (0.5, 1.5), 3.0, m_level, 100).unwrap();
        let mismatches = (0..100_000)
            .filter(|&k| {
                let psi = 0.5 + (k as f64 + 0.5) / 100_000.0;
                report.contains(psi) != violates_diophantine(psi, 3.0, m_level, 100)
            })
            .count();
        assert_eq!(mismatches, 0, "M = {m_level}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn excluded_measure_never_exceeds_total_length(log_m in 0.5f64..4.0, gamma in 2.1f64..4.0) {
        let r = excluded_intervals_for(&IotaProfile::identity(), (0.5, 1.5), gamma, 10f64.powf(log_m), 30).unwrap();
        prop_assert!(r.excluded_measure <= r.total_length + 1e-12);
        prop_assert!(r.excluded_measure <= 1.0 + 1e-12);
    }

    #[test]
    fn membership_agrees_with_direct_test(psi in 0.5f64..1.5, log_m in 0.5f64..4.0) {
        let m_level = 10f64.powf(log_m);
        let r = excluded_intervals_for(&IotaProfile::identity(), (0.5, 1.5), 3.0, m_level, 40).unwrap();
        prop_assert_eq!(r.contains(psi), violates_diophantine(psi, 3.0, m_level, 40));
    }
}
