//! Cross-module checks through the public API only.

use contraction_lab::asymptotic::class_of;
use contraction_lab::contraction::{classify, make_contraction, nearest_part_partial_isometry};
use contraction_lab::corpus::{generate, GenKind, GenSpec};
use contraction_lab::harnack::{harnack_dominates, HarnackStatus};
use contraction_lab::numkit::{MatrixJson, Tolerances};
use contraction_lab::shmulyan::{shmulyan_dominates, shmulyan_equivalent};

#[test]
fn generated_matrices_survive_json() {
    let tol = Tolerances::default();
    for kind in GenKind::ALL {
        let g = generate(&GenSpec::new(kind, 4, 5)).unwrap();
        let text = serde_json::to_string(&g.first).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        let m = back.to_matrix().unwrap();
        assert_eq!(&m, g.first.matrix(), "{kind}");
        let c = make_contraction(m, &tol).unwrap();
        assert_eq!(classify(&c, &tol), classify(&g.first, &tol), "{kind}");
    }
}

#[test]
fn strict_instances_are_c00_and_mutually_dominated() {
    let tol = Tolerances::default();
    for seed in 0..5 {
        let a = generate(&GenSpec::new(GenKind::Strict, 3, seed)).unwrap().first;
        let b = generate(&GenSpec::new(GenKind::Strict, 3, seed + 100)).unwrap().first;
        assert_eq!(class_of(&a, &tol).unwrap().label(), "C00");
        assert!(shmulyan_dominates(&b, &a, &tol).unwrap().dominates);
        assert!(shmulyan_equivalent(&a, &b, &tol).unwrap().equivalent);
        assert_eq!(harnack_dominates(&a, &b, &tol).unwrap().status, HarnackStatus::Dominated);
    }
}

#[test]
fn nearest_partial_isometry_part_is_equivalent() {
    let tol = Tolerances::default();
    for seed in 0..5 {
        let t = generate(&GenSpec::new(GenKind::Generic, 4, seed)).unwrap().first;
        let p = nearest_part_partial_isometry(&t, &tol).unwrap();
        assert!(shmulyan_equivalent(&t, &p, &tol).unwrap().equivalent);
    }
}

#[test]
fn unitary_is_alone_in_its_part() {
    let tol = Tolerances::default();
    let u = generate(&GenSpec::new(GenKind::Unitary, 3, 9)).unwrap().first;
    let q = generate(&GenSpec::new(GenKind::Strict, 3, 9)).unwrap().first;
    assert!(!shmulyan_dominates(&q, &u, &tol).unwrap().dominates);
    assert!(shmulyan_dominates(&u, &u, &tol).unwrap().dominates);
}
