use std::f64::consts::PI;

use nlab_core::domain::{BoundaryCondition, Domain, Grid, ScalarField};
use nlab_core::nodal::{
    components, nodal_length, proof_sum, signed_parts, ComponentStats, Sign, DEFAULT_TOL,
};
use nlab_core::spectral::{explicit_basis, random_high_frequency};
use nlab_core::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sine(m: f64, n: usize) -> ScalarField {
    let g = Grid::lattice(Domain::torus(), n).unwrap();
    ScalarField::from_fn(&g, |p| (m * p.x()).sin()).unwrap()
}

#[test]
fn signed_parts_of_nonnegative_field() {
    let g = Grid::lattice(Domain::torus(), 16).unwrap();
    let f = ScalarField::from_fn(&g, |p| 1.0 + p.x().cos()).unwrap();
    let (pos, neg) = signed_parts(&f);
    assert_eq!(pos.values(), f.values());
    assert!(neg.values().iter().all(|&v| v == 0.0));
}

#[test]
fn signed_parts_of_sines() {
    let f = sine(1.0, 64);
    let (g, h) = signed_parts(&f);
    assert!((g.integrate() - h.integrate()).abs() < 1e-6);
    for i in 0..f.values().len() {
        assert_eq!(g.values()[i] - h.values()[i], f.values()[i]);
        assert_eq!(g.values()[i].min(h.values()[i]), 0.0);
    }
    let (g, _) = signed_parts(&sine(4.0, 256));
    assert!(rel(g.l1(), 4.0 * PI) < 0.005);
}

#[test]
fn straight_line_has_unit_length() {
    for n in [10, 11, 64] {
        let g = Grid::lattice(Domain::square(BoundaryCondition::Neumann), n).unwrap();
        let f = ScalarField::from_fn(&g, |p| p.x() - 0.5).unwrap();
        let set = nodal_length(&f, DEFAULT_TOL).unwrap();
        assert!(
            (set.total_length() - 1.0).abs() < 1e-6,
            "n={n}: {}",
            set.total_length()
        );
    }
}

fn circle_error(n: usize) -> f64 {
    let g = Grid::lattice(Domain::square(BoundaryCondition::Neumann), n).unwrap();
    let f = ScalarField::from_fn(&g, |p| {
        (p.x() - 0.5).powi(2) + (p.y() - 0.5).powi(2) - 0.0625
    })
    .unwrap();
    let len = nodal_length(&f, DEFAULT_TOL).unwrap().total_length();
    (len - 2.0 * PI * 0.25).abs() / (2.0 * PI * 0.25)
}

#[test]
fn circle_circumference_at_512() {
    assert!(circle_error(512) < 0.01);
}

#[test]
fn circle_error_converges_at_second_order() {
    let ns = [64.0f64, 128.0, 256.0, 512.0];
    let errs: Vec<f64> = ns.iter().map(|&n| circle_error(n as usize)).collect();
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 2.0).abs() <= 0.3, "slope {slope}, errors {errs:?}");
}

#[test]
fn sine_nodal_lines() {
    for m in [2.0, 4.0, 8.0] {
        for n in [128, 130] {
            let len = nodal_length(&sine(m, n), DEFAULT_TOL)
                .unwrap()
                .total_length();
            assert!(rel(len, 4.0 * PI * m) < 0.01, "m={m} n={n}: {len}");
        }
    }
}

#[test]
fn zero_field_has_no_length() {
    let g = Grid::lattice(Domain::torus(), 16).unwrap();
    assert!(matches!(
        nodal_length(&ScalarField::constant(&g, 0.0), 1e-12),
        Err(Error::DegenerateField)
    ));
}

#[test]
fn sphere_equator() {
    let g = Grid::icosphere(5).unwrap();
    let f = ScalarField::from_fn(&g, |p| p.0[2]).unwrap();
    let len = nodal_length(&f, DEFAULT_TOL).unwrap().total_length();
    assert!(rel(len, 2.0 * PI) < 0.01, "{len}");
}

#[test]
fn sine_components() {
    let f = sine(4.0, 256);
    let stats = components(&f).unwrap();
    let pos: Vec<&ComponentStats> = stats.iter().filter(|s| s.sign == Sign::Positive).collect();
    assert_eq!(pos.len(), 4);
    assert_eq!(stats.len(), 8);
    for s in &pos {
        assert!(rel(s.excess_mass, PI) < 0.01, "{}", s.excess_mass);
        assert!(
            rel(s.boundary_length, 4.0 * PI) < 0.01,
            "{}",
            s.boundary_length
        );
        assert_eq!(s.excess_mass, s.l1_mass);
    }
    assert!(rel(proof_sum(&stats, 1.0).unwrap(), PI) < 0.02);
}

#[test]
fn positive_field_is_one_component() {
    let g = Grid::lattice(Domain::torus(), 32).unwrap();
    let f = ScalarField::from_fn(&g, |p| 2.0 + p.y().sin()).unwrap();
    let stats = components(&f).unwrap();
    assert_eq!(stats.len(), 1);
    assert!(rel(stats[0].excess_mass, f.l1()) < 1e-12);
    assert!(matches!(
        proof_sum(&stats, 1.0),
        Err(Error::DegenerateComponent { id: 0 })
    ));
}

#[test]
fn proof_sum_examples() {
    let one = ComponentStats {
        id: 0,
        sign: Sign::Positive,
        nodes: 1,
        area: 1.0,
        boundary_length: 1.0,
        excess_mass: 1.0,
        l1_mass: 1.0,
    };
    assert_eq!(proof_sum(std::slice::from_ref(&one), 1.0).unwrap(), 1.0);
    let stats = components(&sine(4.0, 128)).unwrap();
    let doubled: Vec<ComponentStats> = stats
        .iter()
        .map(|s| ComponentStats {
            excess_mass: 2.0 * s.excess_mass,
            ..s.clone()
        })
        .collect();
    let (a, b) = (
        proof_sum(&stats, 1.0).unwrap(),
        proof_sum(&doubled, 1.0).unwrap(),
    );
    assert!(rel(b, 4.0 * a) < 1e-12);
    assert!(matches!(
        proof_sum(&[one], 0.5),
        Err(Error::InvalidExponent(_))
    ));
}

#[test]
fn nodal_csv_header() {
    let set = nodal_length(&sine(2.0, 16), DEFAULT_TOL).unwrap();
    let mut buf = Vec::new();
    set.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x1,y1,x2,y2\n"));
    assert_eq!(text.lines().count(), set.segments().len() + 1);
    let svg = set.to_svg("sin(2x)", Some(&sine(2.0, 16))).finish();
    assert!(svg.contains("<line"));
}

fn mean_zero_field(seed: u64, domain: Domain) -> ScalarField {
    let g = Grid::lattice(domain, 96).unwrap();
    let b = explicit_basis(&g, 60).unwrap();
    random_high_frequency(&b, 10, 40, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn holder_chain_and_mass_balance(seed in 0u64..10_000, p in 1u32..=3) {
        for domain in [Domain::torus(), Domain::square(BoundaryCondition::Neumann)] {
            let f = mean_zero_field(seed, domain);
            let stats = components(&f).unwrap();
            let half = f.l1() / 2.0;
            let plus: f64 = stats.iter().filter(|s| s.sign == Sign::Positive).map(|s| s.excess_mass).sum();
            let minus: f64 = stats.iter().filter(|s| s.sign == Sign::Negative).map(|s| s.excess_mass).sum();
            prop_assert!(rel(plus, half) < 0.01 && rel(minus, half) < 0.01);
            let len = nodal_length(&f, DEFAULT_TOL).unwrap().total_length();
            let p = p as f64;
            let lhs = half.powf(p + 1.0);
            let rhs = proof_sum(&stats, p).unwrap() * len.powf(p);
            prop_assert!(lhs <= rhs * 1.05, "{} > {}", lhs, rhs);
        }
    }
}
