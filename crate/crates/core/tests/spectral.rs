use std::f64::consts::PI;

use nlab_core::domain::{BoundaryCondition, Domain, Grid, ScalarField};
use nlab_core::spectral::{
    assemble_operator, explicit_basis, heat_flow, lowest_eigenpairs, project_high,
    random_high_frequency,
};
use nlab_core::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn torus_count_one_is_constant() {
    let g = Grid::lattice(Domain::torus(), 16).unwrap();
    let b = explicit_basis(&g, 1).unwrap();
    assert_eq!(b.eigenvalue(0), 0.0);
    let v = b.function(0).values();
    assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-14));
    assert!((b.function(0).l2() - 1.0).abs() < 1e-12);
}

#[test]
fn sphere_count_four() {
    let g = Grid::latlon(24, 48).unwrap();
    let b = explicit_basis(&g, 4).unwrap();
    assert_eq!(b.eigenvalues(), vec![0.0, 2.0, 2.0, 2.0]);
    assert!(b.orthonormality_residual() < 1e-4);
}

#[test]
fn torus_weyl_index_100_matches_lattice_enumeration() {
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let b = explicit_basis(&g, 101).unwrap();
    let mut brute: Vec<i64> = (-20i64..=20)
        .flat_map(|a| (-20i64..=20).map(move |c| a * a + c * c))
        .collect();
    brute.sort();
    for k in 0..=100 {
        assert_eq!(b.eigenvalue(k), brute[k] as f64);
    }
    // Weyl: lambda_n ~ 4 pi n / area = n / pi on the 2 pi torus
    let normalized = b.eigenvalue(100) / 100.0 * PI;
    assert!((0.5..=1.5).contains(&normalized), "{normalized}");
}

#[test]
fn weyl_counting_function() {
    let g = Grid::lattice(Domain::torus(), 96).unwrap();
    let kmax = 24i64;
    let count = (-kmax..=kmax)
        .flat_map(|a| (-kmax..=kmax).map(move |c| a * a + c * c))
        .filter(|&r| r <= kmax * kmax)
        .count();
    let b = explicit_basis(&g, count).unwrap();
    let area = Domain::torus().area();
    for lam in [100.0, 200.0, 300.0, 400.0] {
        let n = b.eigenvalues().iter().filter(|&&l| l <= lam).count() as f64;
        assert!(
            rel(n / lam, area / (4.0 * PI)) < 0.10,
            "Lambda {lam}: {}",
            n / lam
        );
    }
}

#[test]
fn explicit_bases_are_orthonormal() {
    for domain in [
        Domain::torus(),
        Domain::square(BoundaryCondition::Dirichlet),
        Domain::square(BoundaryCondition::Neumann),
    ] {
        let g = Grid::lattice(domain, 48).unwrap();
        let b = explicit_basis(&g, 60).unwrap();
        assert!(
            b.orthonormality_residual() < 1e-4,
            "{domain}: {}",
            b.orthonormality_residual()
        );
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn explicit_basis_refuses_unresolved_modes() {
    let g = Grid::lattice(Domain::square(BoundaryCondition::Dirichlet), 12).unwrap();
    assert!(matches!(
        explicit_basis(&g, 50),
        Err(Error::ResolutionTooCoarse(_))
    ));
    assert!(matches!(explicit_basis(&g, 0), Err(Error::InvalidCount(_))));
}

#[test]
fn dirichlet_ground_state_at_128() {
    let g = Grid::lattice(Domain::square(BoundaryCondition::Dirichlet), 128).unwrap();
    let op = assemble_operator(&ScalarField::constant(&g, 1.0)).unwrap();
    let b = lowest_eigenpairs(&op, 3, 1e-8).unwrap();
    let expected = [2.0 * PI * PI, 5.0 * PI * PI, 5.0 * PI * PI];
    for (got, want) in b.eigenvalues().iter().zip(expected) {
        assert!(rel(*got, want) < 0.02, "{got} vs {want}");
    }
    assert!(b.orthonormality_residual() < 1e-6);
    assert!(b.function(0).satisfies_dirichlet(1e-12));
}

#[test]
fn neumann_ground_state_is_constant() {
    let g = Grid::lattice(Domain::square(BoundaryCondition::Neumann), 40).unwrap();
    let a = ScalarField::from_fn(&g, |p| 1.0 + 0.3 * (5.0 * p.x()).cos() * p.y()).unwrap();
    let op = assemble_operator(&a).unwrap();
    let b = lowest_eigenpairs(&op, 1, 1e-9).unwrap();
    assert!(b.eigenvalue(0).abs() < 1e-8);
    let v = b.function(0).values();
    let c = 1.0; // unit L2 on unit area
    assert!(v.iter().all(|x| (x - c).abs() < 1e-6));
}

#[test]
fn eigenvalues_scale_linearly_in_coefficient() {
    let g = Grid::lattice(Domain::square(BoundaryCondition::Dirichlet), 32).unwrap();
    let one = lowest_eigenpairs(
        &assemble_operator(&ScalarField::constant(&g, 1.0)).unwrap(),
        4,
        1e-9,
    )
    .unwrap();
    let three = lowest_eigenpairs(
        &assemble_operator(&ScalarField::constant(&g, 3.0)).unwrap(),
        4,
        1e-9,
    )
    .unwrap();
    for (a, b) in one.eigenvalues().iter().zip(three.eigenvalues()) {
        assert!(rel(b, 3.0 * a) < 1e-9);
    }
}

#[test]
fn torus_numerical_matches_explicit() {
    let g = Grid::lattice(Domain::torus(), 48).unwrap();
    let num = lowest_eigenpairs(
        &assemble_operator(&ScalarField::constant(&g, 1.0)).unwrap(),
        5,
        1e-8,
    )
    .unwrap();
    let exact = explicit_basis(&g, 5).unwrap();
    assert!(num.eigenvalue(0).abs() < 1e-8);
    for k in 1..5 {
        assert!(rel(num.eigenvalue(k), exact.eigenvalue(k)) < 0.02);
    }
    assert!(num.orthonormality_residual() < 1e-6);
}

#[test]
fn torus_multiplicities_resolved_numerically() {
    let g = Grid::lattice(Domain::torus(), 32).unwrap();
    let num = lowest_eigenpairs(
        &assemble_operator(&ScalarField::constant(&g, 1.0)).unwrap(),
        13,
        1e-8,
    )
    .unwrap();
    let exact = explicit_basis(&g, 13).unwrap();
    for k in 1..13 {
        assert!(rel(num.eigenvalue(k), exact.eigenvalue(k)) < 0.02, "{k}");
    }
}

#[test]
fn eigensolver_rejects_too_many() {
    let g = Grid::lattice(Domain::torus(), 10).unwrap();
    let op = assemble_operator(&ScalarField::constant(&g, 1.0)).unwrap();
    assert!(matches!(
        lowest_eigenpairs(&op, 6, 1e-8),
        Err(Error::InvalidCount(_))
    ));
}

#[test]
fn project_high_examples() {
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let b = explicit_basis(&g, 120).unwrap();
    let n = 10;
    let f = b.function(n + 3).clone();
    let p = project_high(&f, &b, n).unwrap();
    assert!(p.axpy(-1.0, &f).unwrap().max_abs() < 1e-8);

    let p = project_high(b.function(0), &b, 2).unwrap();
    assert!(p.max_abs() < 1e-8);

    let f = b.function(0).axpy(1.0, b.function(50)).unwrap();
    let p = project_high(&f, &b, n).unwrap();
    assert!(p.axpy(-1.0, b.function(50)).unwrap().max_abs() < 1e-6);

    assert!(matches!(
        project_high(&f, &b, 500),
        Err(Error::InsufficientBasis { .. })
    ));
}

#[test]
fn heat_flow_examples() {
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let b = explicit_basis(&g, 200).unwrap();
    let f = ScalarField::from_fn(&g, |p| (4.0 * p.x()).sin()).unwrap();
    let same = heat_flow(&f, &b, 0.0).unwrap();
    assert!(same.field.axpy(-1.0, &f).unwrap().max_abs() < 1e-8);
    assert!(same.warning.is_none());

    let h = heat_flow(&f, &b, 0.1).unwrap();
    let want = f.scaled((-1.6f64).exp());
    assert!(h.field.axpy(-1.0, &want).unwrap().max_abs() < 0.005 * want.max_abs());

    let c = ScalarField::constant(&g, 2.5);
    let h = heat_flow(&c, &b, 3.0).unwrap();
    assert!(h.field.axpy(-1.0, &c).unwrap().max_abs() < 1e-10);
}

#[test]
fn heat_flow_warns_outside_band() {
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let b = explicit_basis(&g, 20).unwrap();
    let f = ScalarField::from_fn(&g, |p| (12.0 * p.x()).sin()).unwrap();
    let h = heat_flow(&f, &b, 0.0).unwrap();
    assert!(h.tail_fraction > 0.99);
    assert!(h.warning.is_some());
}

#[test]
fn random_high_frequency_contract() {
    let g = Grid::lattice(Domain::torus(), 48).unwrap();
    let b = explicit_basis(&g, 150).unwrap();
    let f = random_high_frequency(&b, 40, 60, 7).unwrap();
    let f2 = random_high_frequency(&b, 40, 60, 7).unwrap();
    assert_eq!(f.values(), f2.values());
    assert!((f.l2() - 1.0).abs() < 1e-8);
    for k in 0..40 {
        assert!(f.inner(b.function(k)).abs() < 1e-8);
    }
    assert!(matches!(
        random_high_frequency(&b, 100, 60, 1),
        Err(Error::InsufficientBasis { .. })
    ));
}

#[test]
fn basis_export_writes_manifest_and_fields() {
    let g = Grid::lattice(Domain::torus(), 8).unwrap();
    let b = explicit_basis(&g, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    b.export(dir.path()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["count"], 3);
    assert_eq!(manifest["eigenvalues"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["domain"]["kind"], "torus");
    let csv = std::fs::read_to_string(dir.path().join("eigenfunction_0002.csv")).unwrap();
    assert!(csv.starts_with("x,y,value\n"));
    assert_eq!(csv.lines().count(), 65);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn heat_flow_contracts_and_keeps_orthogonality(seed in 0u64..1000, t in 0.0f64..2.0, n in 1usize..30) {
        let g = Grid::lattice(Domain::torus(), 32).unwrap();
        let b = explicit_basis(&g, 60).unwrap();
        let f = random_high_frequency(&b, n, 20, seed).unwrap();
        let h = heat_flow(&f, &b, t).unwrap().field;
        prop_assert!(h.l2() <= f.l2() * (1.0 + 1e-12));
        for k in 0..n {
            prop_assert!(h.inner(b.function(k)).abs() < 1e-8);
        }
        let bound = Domain::torus().area().sqrt() * (-b.eigenvalue(n) * t).exp() * f.l2();
        prop_assert!(h.l1() <= bound * (1.0 + 1e-9));
    }
}
