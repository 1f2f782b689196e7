use std::f64::consts::PI;

use nlab_core::lemma::{
    enlargement_area, eps_ladder, lemma_csv, lemma_ratio, lemma_row, lemma_sweep,
    squared_distance_transform, standard_suite, TestShape, DEFAULT_RESOLUTION,
};
use nlab_core::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn disk_enlargement() {
    let a = enlargement_area(&TestShape::disk(1.0), 0.1, DEFAULT_RESOLUTION).unwrap();
    assert!(rel(a, PI * (0.2 + 0.01)) < 0.02, "{a}");
}

#[test]
fn square_enlargement() {
    let a = enlargement_area(&TestShape::unit_square(), 0.1, DEFAULT_RESOLUTION).unwrap();
    assert!(rel(a, 0.4 + PI * 0.01) < 0.02, "{a}");
}

#[test]
fn doubling_eps_doubles_area_on_the_disk() {
    let d = TestShape::disk(1.0);
    let a = enlargement_area(&d, 0.02, 2048).unwrap();
    let b = enlargement_area(&d, 0.04, 2048).unwrap();
    assert!(rel(b / a, 2.0) < 0.05, "{}", b / a);
}

#[test]
fn coarse_resolution_is_rejected() {
    let r = enlargement_area(&TestShape::disk(1.0), 0.001, 64);
    assert!(matches!(r, Err(Error::ResolutionTooCoarse(_))));
    assert!(enlargement_area(&TestShape::disk(1.0), 0.0, 64).is_err());
}

#[test]
fn lemma_ratio_examples() {
    let disk = lemma_ratio(&TestShape::disk(1.0), 0.05).unwrap();
    assert!(rel(disk, 1.025) < 0.03, "{disk}");
    let square = lemma_ratio(&TestShape::unit_square(), 0.05).unwrap();
    let exact = (4.0 * 0.05 + PI * 0.0025) / 0.2;
    assert!(rel(square, exact) < 0.03, "{square}");
    let ellipse = lemma_ratio(&TestShape::ellipse(1.0, 0.1), 0.01).unwrap();
    assert!(ellipse <= 2.0, "{ellipse}");
}

#[test]
fn precondition_violation_still_measures() {
    match lemma_ratio(&TestShape::unit_square(), 0.2) {
        Err(Error::PreconditionViolated { eps, limit, ratio }) => {
            assert_eq!(eps, 0.2);
            assert_eq!(limit, 0.125);
            let exact = (0.8 + PI * 0.04) / 0.8;
            assert!(rel(ratio, exact) < 0.03, "{ratio}");
        }
        other => panic!("expected a precondition violation, got {other:?}"),
    }
    assert!(
        !lemma_row(&TestShape::unit_square(), 0.2)
            .unwrap()
            .precondition_ok
    );
}

#[test]
fn suite_shapes_are_connected() {
    for s in standard_suite() {
        assert_eq!(s.component_count(512), 1, "{}", s.name());
    }
}

#[test]
fn suite_reference_values() {
    let suite = standard_suite();
    let l = &suite[3];
    assert_eq!((l.area(), l.perimeter()), (Some(3.0), Some(8.0)));
    // Ramanujan's approximation is accurate to ~1e-5 at this eccentricity
    let (a, b) = (1.0f64, 0.1f64);
    let hh = ((a - b) / (a + b)).powi(2);
    let ramanujan = PI * (a + b) * (1.0 + 3.0 * hh / (10.0 + (4.0 - 3.0 * hh).sqrt()));
    assert!(rel(suite[2].perimeter().unwrap(), ramanujan) < 1e-4);
    assert!(rel(suite[5].perimeter().unwrap(), 3.0 * PI) < 1e-15);
}

#[test]
fn ratio_bounded_by_two_across_the_suite() {
    let suite = standard_suite();
    let rows = lemma_sweep(&suite, 6).unwrap();
    assert_eq!(rows.len(), 36);
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    assert!(worst <= 2.0, "max ratio {worst}");
    assert!(rows.iter().all(|r| r.precondition_ok));
    // smooth convex shapes approach one at the smallest eps
    for name in ["disk", "ellipse"] {
        let last = rows.iter().rfind(|r| r.shape == name).unwrap();
        assert!((last.ratio - 1.0).abs() < 0.05, "{name}: {}", last.ratio);
    }
    let csv = lemma_csv(&rows);
    assert!(csv
        .as_str()
        .starts_with("shape,eps,enlargement_area,perimeter,ratio,precondition_ok\n"));
    assert_eq!(csv.as_str().lines().count(), 37);
}

#[test]
fn eps_ladder_halves() {
    let e = eps_ladder(&TestShape::unit_square(), 3).unwrap();
    assert_eq!(e, vec![0.125, 0.0625, 0.03125]);
}

fn brute_force(mask: &[bool], nx: usize, ny: usize, periodic: bool) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            for q in 0..ny {
                for p in 0..nx {
                    if !mask[q * nx + p] {
                        continue;
                    }
                    let mut dx = (i as f64 - p as f64).abs();
                    let mut dy = (j as f64 - q as f64).abs();
                    if periodic {
                        dx = dx.min(nx as f64 - dx);
                        dy = dy.min(ny as f64 - dy);
                    }
                    out[j * nx + i] = out[j * nx + i].min(dx * dx + dy * dy);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_transform_is_exact(
        nx in 1usize..12,
        ny in 1usize..12,
        bits in proptest::collection::vec(0u8..10, 144),
        periodic: bool,
    ) {
        let mut mask: Vec<bool> = bits[..nx * ny].iter().map(|&b| b == 0).collect();
        mask[0] = true;
        let fast = squared_distance_transform(&mask, nx, ny, periodic);
        let slow = brute_force(&mask, nx, ny, periodic);
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn enlargement_matches_annulus(r in 0.3f64..2.0, e in 0.02f64..0.1) {
        let d = TestShape::disk(r);
        // about 24 pixels across eps
        let res = (48.0 / e).ceil() as usize;
        let a = enlargement_area(&d, e * r, res).unwrap();
        let b = enlargement_area(&d, 1.5 * e * r, res).unwrap();
        prop_assert!(b > a);
        let exact = PI * ((r + e * r).powi(2) - r * r);
        prop_assert!(rel(a, exact) < 0.03);
    }
}
