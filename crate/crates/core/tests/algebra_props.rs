use proptest::prelude::*;
use versor::algebra::{
    geometric_product_bitmask, geometric_product_naive, grade_project, reverse,
    scalar_product_fast, Engine,
};
use versor::matrix_iso::{product_via_iso, rho, rho_inverse};
use versor::{Multivector, Signature};

const TOL: f64 = 1e-10;

fn mv(sig: Signature) -> impl Strategy<Value = Multivector> {
    prop::collection::vec(-2.0f64..2.0, sig.dim())
        .prop_map(move |c| Multivector::from_coeffs(sig, c).unwrap())
}

fn signature() -> impl Strategy<Value = Signature> {
    (0usize..=4, 0usize..=2)
        .prop_filter("non-empty", |(p, q)| p + q > 0)
        .prop_map(|(p, q)| Signature::pq(p, q).unwrap())
}

fn with_sig<const K: usize>() -> impl Strategy<Value = (Signature, Vec<Multivector>)> {
    signature().prop_flat_map(|sig| (Just(sig), prop::collection::vec(mv(sig), K)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bitmask_matches_table((_, v) in with_sig::<2>()) {
        let a = geometric_product_naive(&v[0], &v[1]).unwrap();
        let b = geometric_product_bitmask(&v[0], &v[1]).unwrap();
        prop_assert!(a.max_abs_diff(&b) < TOL);
    }

    #[test]
    fn all_engines_agree_on_cl41(a in mv(Signature::cl41()), b in mv(Signature::cl41())) {
        let reference = Engine::Naive.product(&a, &b).unwrap();
        for e in Engine::ALL {
            prop_assert!(e.product(&a, &b).unwrap().max_abs_diff(&reference) < 1e-9, "{}", e.name());
        }
    }

    #[test]
    fn product_is_associative((_, v) in with_sig::<3>()) {
        let left = v[0].gp(&v[1]).unwrap().gp(&v[2]).unwrap();
        let right = v[0].gp(&v[1].gp(&v[2]).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn reversion_reverses_products((_, v) in with_sig::<2>()) {
        let lhs = reverse(&v[0].gp(&v[1]).unwrap());
        let rhs = reverse(&v[1]).gp(&reverse(&v[0])).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < TOL);
        prop_assert!(reverse(&reverse(&v[0])).max_abs_diff(&v[0]) == 0.0);
    }

    #[test]
    fn grades_partition_the_multivector((sig, v) in with_sig::<1>()) {
        let mut sum = Multivector::zero(sig);
        for g in 0..=sig.n() {
            sum += &grade_project(&v[0], g).unwrap();
        }
        prop_assert!(sum.max_abs_diff(&v[0]) == 0.0);
    }

    #[test]
    fn fast_scalar_product_matches_full((_, v) in with_sig::<2>()) {
        let full = v[0].gp(&reverse(&v[1])).unwrap().scalar_part();
        let fast = scalar_product_fast(&v[0], &v[1]).unwrap();
        prop_assert!((full - fast).abs() < TOL);
    }

    #[test]
    fn rho_is_a_homomorphism(a in mv(Signature::cl41()), b in mv(Signature::cl41())) {
        let lhs = rho(&a.gp(&b).unwrap()).unwrap();
        let rhs = rho(&a).unwrap().matmul(&rho(&b).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn rho_round_trips(a in mv(Signature::cl41())) {
        prop_assert!(rho_inverse(&rho(&a).unwrap()).max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn iso_product_matches_bitmask(a in mv(Signature::cl41()), b in mv(Signature::cl41())) {
        let iso = product_via_iso(&a, &b).unwrap();
        prop_assert!(iso.max_abs_diff(&geometric_product_bitmask(&a, &b).unwrap()) < 1e-9);
    }
}

#[test]
fn mismatched_signatures_are_rejected() {
    let a = Multivector::one(Signature::cl41());
    let b = Multivector::one(Signature::pq(3, 0).unwrap());
    assert!(a.gp(&b).is_err());
    assert!(geometric_product_naive(&a, &b).is_err());
    assert!(scalar_product_fast(&a, &b).is_err());
}

#[test]
fn iso_requires_cl41() {
    let a = Multivector::one(Signature::pq(3, 0).unwrap());
    assert!(rho(&a).is_err());
    assert!(Engine::MatrixIso.product(&a, &a).is_err());
}
