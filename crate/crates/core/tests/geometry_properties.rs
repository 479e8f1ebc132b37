//! Randomized foliation, Poisson and Dirac invariants.
//!
//! Foliations are level sets of perturbed coordinate functions, presented by
//! generators rescaled with a random invertible matrix, so integrability holds
//! by construction and every derived identity must hold too.

mod common;

use std::sync::Arc;

use common::{coords, field, poly, rng};
use foliation_poisson::dirac::{build_dirac, invert_symplectic, route_cross_check, verify_dirac};
use foliation_poisson::exterior::{differential, exterior_derivative, Contravariant, Covariant};
use foliation_poisson::foliation::{
    check_integrability, connection_matrix, default_generator_change, default_tangent_perturbations, delta_form,
    delta_wellposedness_suite, dual_frame, f_equivalent, frame_duality_check, FoliationPresentation,
};
use foliation_poisson::matrix::ExprMatrix;
use foliation_poisson::poisson::{jacobi_residual, modular_rescale_check, poisson_from_compatible};
use foliation_poisson::verify::probe_functions;
use foliation_poisson::{CoordinateSystem, Form, Multivector, SampleBox, Sampler, ScalarExpr};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 0.05;

fn small(r: &mut ChaCha8Rng, m: usize) -> ScalarExpr {
    ScalarExpr::constant(EPS).mul(&poly(r, m, 2, 3))
}

fn box_sampler(m: usize) -> Sampler {
    Sampler::with_defaults(SampleBox::cube(m, -0.5, 0.5).unwrap())
}

/// Codimension-k foliation by level sets of x_i + small(x), i < k.
fn random_foliation(r: &mut ChaCha8Rng, c: &Arc<CoordinateSystem>, k: usize) -> FoliationPresentation {
    let m = c.dim();
    let d_phi: Vec<Form> = (0..k)
        .map(|i| differential(c, &ScalarExpr::var(i).add(&small(r, m))))
        .collect();
    let f = ExprMatrix::from_fn(k, |i, j| {
        let base = if i == j { ScalarExpr::one() } else { ScalarExpr::zero() };
        base.add(&small(r, m))
    });
    let gens = (0..k)
        .map(|i| (0..k).fold(Form::zero(c, 1), |acc, j| acc.plus(&d_phi[j].scaled(f.get(i, j)))))
        .collect();
    FoliationPresentation::new(c, gens, box_sampler(m)).unwrap()
}

/// Closed two-form that is symplectic along the leaves of `random_foliation`.
fn compatible_two_form(r: &mut ChaCha8Rng, c: &Arc<CoordinateSystem>, k: usize) -> Form {
    let m = c.dim();
    let mut omega = Form::zero(c, 2);
    for i in (k..m).step_by(2) {
        omega = omega.plus(&Form::monomial(c, &[i, i + 1], ScalarExpr::one()));
    }
    let theta: Form = field::<Covariant>(r, c, 1);
    omega.plus(&exterior_derivative(&theta).scaled(&ScalarExpr::constant(EPS)))
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![
        Just((3, 1)),
        Just((4, 2)),
        Just((5, 1)),
        Just((5, 3)),
        Just((4, 1)),
        Just((5, 2))
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frame_connection_and_delta_identities(seed: u64, (m, k) in shape()) {
        let mut r = rng(seed);
        let c = coords(m);
        let fol = random_foliation(&mut r, &c, k);
        let integrable = check_integrability(&fol);
        prop_assert!(integrable.passed(), "{integrable:?}");
        let frame = dual_frame(&fol).unwrap();
        let duality = frame_duality_check(&fol, &frame);
        prop_assert!(duality.passed(), "{duality:?}");
        let g = connection_matrix(&fol, &frame).unwrap();
        prop_assert!(g.check.passed(), "{:?}", g.check);
        let delta = delta_form(&fol, &frame).unwrap();
        for check in &delta.checks {
            prop_assert!(check.passed(), "{check:?}");
        }
    }

    #[test]
    fn delta_class_is_well_posed(seed: u64, (m, k) in shape()) {
        let mut r = rng(seed);
        let c = coords(m);
        let fol = random_foliation(&mut r, &c, k);
        let frame = dual_frame(&fol).unwrap();
        let change = default_generator_change(&fol);
        let tangent = default_tangent_perturbations(&fol, &frame);
        let suite = delta_wellposedness_suite(&fol, &change, &tangent).unwrap();
        for check in &suite.checks {
            prop_assert!(check.passed(), "{check:?}");
        }
    }

    #[test]
    fn adding_multiples_of_generators_preserves_foliated_class(seed: u64, (m, k) in shape()) {
        let mut r = rng(seed);
        let c = coords(m);
        let fol = random_foliation(&mut r, &c, k);
        let beta: Form = field::<Covariant>(&mut r, &c, 2);
        let gamma: Form = field::<Covariant>(&mut r, &c, 1);
        let rho = beta.plus(&gamma.wedge(&fol.generators()[0]).unwrap());
        let same = f_equivalent(&beta, &rho, &fol).unwrap();
        prop_assert!(same.passed(), "{same:?}");
    }

    #[test]
    fn constructed_poisson_structure_is_jacobi(seed: u64, (m, k) in prop_oneof![Just((3, 1)), Just((4, 2)), Just((5, 1)), Just((5, 3))]) {
        let mut r = rng(seed);
        let c = coords(m);
        let fol = random_foliation(&mut r, &c, k);
        let omega = compatible_two_form(&mut r, &c, k);
        let p = poisson_from_compatible(&fol, &omega).unwrap();
        for check in p.construction_checks() {
            prop_assert!(check.passed(), "{check:?}");
        }
        let probes = probe_functions(m, 2, seed);
        for check in jacobi_residual(&p, &probes).checks() {
            prop_assert!(check.passed(), "{check:?}");
        }
        let h = small(&mut r, m);
        let rescale = modular_rescale_check(&p, p.volume(), &h).unwrap();
        prop_assert!(rescale.passed(), "{rescale:?}");
    }

    #[test]
    fn dirac_bracket_invariants(seed: u64) {
        let mut r = rng(seed);
        let c = Arc::new(CoordinateSystem::new(["q1", "q2", "p1", "p2"]).unwrap());
        let s = box_sampler(4);
        let omega = Form::monomial(&c, &[0, 2], ScalarExpr::one()).plus(&Form::monomial(&c, &[1, 3], ScalarExpr::one()));
        let sym = invert_symplectic(&omega, &s).unwrap();
        let g = vec![ScalarExpr::var(1).add(&small(&mut r, 4)), ScalarExpr::var(3).add(&small(&mut r, 4))];
        let d = build_dirac(&sym, &g).unwrap();
        for check in d.delta_checks().iter().chain(&verify_dirac(&d).unwrap().checks) {
            prop_assert!(check.passed(), "{check:?}");
        }
        let routes = route_cross_check(&d).unwrap();
        prop_assert!(routes.passed(), "{routes:?}");
        let casimir = d.pi_dirac.pair(&[differential(&c, &g[0]), differential(&c, &ScalarExpr::var(0))]).unwrap();
        let res = s.check_zero("constraint is Casimir", &casimir);
        prop_assert!(res.passed(), "{res:?}");
    }
}

#[test]
fn random_bivector_generally_fails_jacobi() {
    let mut r = rng(7);
    let c = coords(4);
    let pi: Multivector = field::<Contravariant>(&mut r, &c, 2)
        .plus(&Multivector::monomial(&c, &[2, 3], ScalarExpr::var(0)))
        .plus(&Multivector::monomial(&c, &[0, 1], ScalarExpr::one()));
    let vol = foliation_poisson::VolumeForm::euclidean(&c);
    let p = foliation_poisson::poisson::PoissonStructure::from_bivector(pi, vol, box_sampler(4)).unwrap();
    let report = jacobi_residual(&p, &probe_functions(4, 2, 1));
    assert!(!report.passed());
}
