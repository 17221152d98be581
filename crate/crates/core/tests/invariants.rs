use fiberheat::effective::{compatibility_residual, effective_profile};
use fiberheat::field::{make_field, FieldSpec};
use fiberheat::fluxgeom::gamma_derivative_residual;
use fiberheat::solver::{assemble, flux_spread, solve_temperature};
use fiberheat::{FieldModel, FluxGrid, ScalarField};

fn catalog() -> Vec<(FieldSpec, bool)> {
    vec![
        (FieldSpec::annulus(), false),
        (FieldSpec::channel(0.15), false),
        (FieldSpec::torus_integrable(), true),
        (FieldSpec::torus_perturbed(0.1), true),
    ]
}

fn grid(field: &FieldModel, toroidal: bool, n_psi: usize, n_angle: usize) -> FluxGrid {
    let n_phi = if toroidal { n_angle } else { 1 };
    FluxGrid::new(field, n_psi, n_angle, n_phi).unwrap()
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn maximum_principle_and_flux_constancy() {
    // 1e-10 sits at the f64 floor of the relative residual for eps = 1e-5
    let tol = 1e-9;
    for (spec, toroidal) in catalog() {
        let f = make_field(&spec).unwrap();
        let n = if toroidal { 16 } else { 48 };
        let g = grid(&f, toroidal, n, n);
        for eps in [1.0, 1e-2, 1e-5] {
            let op = assemble(&f, &g, eps).unwrap();
            let (t, _) = solve_temperature(&op, -1.0, 2.0, tol).unwrap();
            for v in t.values() {
                assert!(*v >= -1.0 - tol && *v <= 2.0 + tol, "{spec:?} eps={eps}: {v}");
            }
            let spread = flux_spread(&op.layer_fluxes(&t).unwrap());
            assert!(spread <= 10.0 * tol, "{spec:?} eps={eps}: spread {spread:e}");
        }
    }
}

#[test]
fn operator_is_symmetric_and_annihilates_constants() {
    for (spec, toroidal) in catalog() {
        let f = make_field(&spec).unwrap();
        let g = grid(&f, toroidal, 10, 12);
        for eps in [1.0, 1e-3] {
            let op = assemble(&f, &g, eps).unwrap();
            assert_eq!(op.symmetry_defect(), 0.0);
            let ones = vec![1.0; g.len()];
            assert!(max_abs(&op.apply(&ones).unwrap()) <= 1e-12);
            assert!(max_abs(&op.apply_differences(&ones).unwrap()) == 0.0);
        }
    }
}

#[test]
fn energy_is_nonnegative_after_lifting() {
    for (spec, toroidal) in catalog() {
        let f = make_field(&spec).unwrap();
        let g = grid(&f, toroidal, 10, 12);
        let op = assemble(&f, &g, 1e-4).unwrap();
        let (t, _) = solve_temperature(&op, 0.0, 1.0, 1e-10).unwrap();
        assert!(op.energy(t.values()).unwrap() >= 0.0);
    }
}

#[test]
fn coarea_derivative_identity_is_second_order() {
    for (spec, toroidal) in catalog() {
        let f = make_field(&spec).unwrap();
        let residual = |n_psi: usize| {
            let g = grid(&f, toroidal, n_psi, 16);
            let field = ScalarField::from_fn(&g, |p| p.psi * p.psi + (2.0 * p.psi).sin());
            max_abs(&gamma_derivative_residual(&g, &field).unwrap())
        };
        let p = order(residual(65), residual(129));
        assert!(p >= 1.9, "{spec:?}: order {p}");
    }
}

#[test]
fn compatibility_residual_is_second_order() {
    for (spec, toroidal) in catalog() {
        let f = make_field(&spec).unwrap();
        let residual = |n_psi: usize| {
            let g = grid(&f, toroidal, n_psi, 16);
            let p = effective_profile(&f, &g, 0.0, 1.0).unwrap();
            max_abs(&compatibility_residual(&p, &f, &g).unwrap())
        };
        let p = order(residual(65), residual(129));
        assert!(p >= 1.9, "{spec:?}: order {p}");
    }
}

#[test]
fn annulus_compatibility_residual_is_small() {
    let f = make_field(&FieldSpec::annulus()).unwrap();
    let g = FluxGrid::new(&f, 128, 64, 1).unwrap();
    let p = effective_profile(&f, &g, 0.0, 1.0).unwrap();
    assert!(max_abs(&compatibility_residual(&p, &f, &g).unwrap()) <= 1e-4);
}
