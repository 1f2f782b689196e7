use std::collections::HashMap;
use std::f64::consts::PI;

use nlab_core::domain::{BoundaryCondition, Domain, Grid, Point, ScalarField};
use nlab_core::nodal::signed_parts;
use nlab_core::transport::{
    aggregate_field, field_to_measure, measure_pair, solve_exact, solve_exact_capped,
    solve_regularized, w1_dual_bound, w1_dual_bound_with, Aggregation, DiscreteMeasure,
};
use nlab_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Minimum of `sum x_ij c_ij` over all vertices of the transportation
/// polytope, enumerated by peeling one exhausted row or column at a time.
fn vertex_enumeration(s: &[i64], d: &[i64], c: &[Vec<f64>]) -> f64 {
    fn go(
        s: &mut Vec<i64>,
        d: &mut Vec<i64>,
        c: &[Vec<f64>],
        memo: &mut HashMap<(Vec<i64>, Vec<i64>), f64>,
    ) -> f64 {
        if s.iter().all(|&x| x == 0) {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(s.clone(), d.clone())) {
            return v;
        }
        let mut best = f64::INFINITY;
        for i in 0..s.len() {
            if s[i] == 0 {
                continue;
            }
            for j in 0..d.len() {
                if d[j] == 0 {
                    continue;
                }
                let q = s[i].min(d[j]);
                s[i] -= q;
                d[j] -= q;
                let v = q as f64 * c[i][j] + go(s, d, c, memo);
                s[i] += q;
                d[j] += q;
                best = best.min(v);
            }
        }
        memo.insert((s.clone(), d.clone()), best);
        best
    }
    go(&mut s.to_vec(), &mut d.to_vec(), c, &mut HashMap::new())
}

fn split(total: i64, parts: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut cuts: Vec<i64> = (0..parts - 1).map(|_| rng.gen_range(0..=total)).collect();
    cuts.sort();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    // keep every point in the support
    for x in &mut out {
        *x += 1;
    }
    out
}

fn random_instance(
    rng: &mut ChaCha8Rng,
) -> (DiscreteMeasure, DiscreteMeasure, Vec<i64>, Vec<i64>, f64) {
    let domain = Domain::square(BoundaryCondition::Neumann);
    let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
    let total = rng.gen_range(6..=14);
    let mut s = split(total, m, rng);
    let mut d = split(total, n, rng);
    // rebalance after the +1 shift
    let (ss, sd): (i64, i64) = (s.iter().sum(), d.iter().sum());
    if ss > sd {
        d[0] += ss - sd;
    } else {
        s[0] += sd - ss;
    }
    let pts = |k: usize, rng: &mut ChaCha8Rng| -> Vec<Point> {
        (0..k)
            .map(|_| Point::planar(rng.gen::<f64>(), rng.gen::<f64>()))
            .collect()
    };
    let (xs, ys) = (pts(m, rng), pts(n, rng));
    let p = [1.0, 1.5, 2.0, 3.0][rng.gen_range(0..4)];
    let mu = DiscreteMeasure::new(domain, xs, s.iter().map(|&x| x as f64).collect()).unwrap();
    let nu = DiscreteMeasure::new(domain, ys, d.iter().map(|&x| x as f64).collect()).unwrap();
    (mu, nu, s, d, p)
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let (mu, nu, s, d, p) = random_instance(&mut rng);
        let c: Vec<Vec<f64>> = mu
            .support()
            .iter()
            .map(|x| {
                nu.support()
                    .iter()
                    .map(|y| mu.domain().distance_unchecked(x, y).powf(p))
                    .collect()
            })
            .collect();
        let oracle = vertex_enumeration(&s, &d, &c).powf(1.0 / p);
        let plan = solve_exact(&mu, &nu, p).unwrap();
        assert!(
            (plan.cost - oracle).abs() <= 1e-9,
            "{} vs {}",
            plan.cost,
            oracle
        );
    }
}

#[test]
fn identical_measures_cost_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mu, _, _, _, _) = random_instance(&mut rng);
    let plan = solve_exact(&mu, &mu, 1.0).unwrap();
    assert!(plan.cost.abs() < 1e-12);
    assert!(w1_dual_bound(&mu, &mu).unwrap().abs() < 1e-9);
}

#[test]
fn two_diracs() {
    let d = Domain::square(BoundaryCondition::Dirichlet);
    let (a, b) = (Point::planar(0.1, 0.2), Point::planar(0.7, 0.9));
    let dist = d.distance_unchecked(&a, &b);
    let mu = DiscreteMeasure::dirac(d, a, 1.0).unwrap();
    let nu = DiscreteMeasure::dirac(d, b, 1.0).unwrap();
    for p in [1.0, 2.0, 4.0] {
        assert!((solve_exact(&mu, &nu, p).unwrap().cost - dist).abs() < 1e-12);
    }
    assert!((w1_dual_bound(&mu, &nu).unwrap() - dist).abs() < 1e-6);
    let reg = solve_regularized(&mu, &nu, 1.0, 1e-3 * dist, 5000).unwrap();
    assert!(rel(reg.cost, dist) < 0.01);
}

#[test]
fn regularized_identity_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mu, _, _, _, _) = random_instance(&mut rng);
    let reg = solve_regularized(&mu, &mu, 1.0, 1e-3, 20_000).unwrap();
    assert!(reg.cost < 1e-3, "{}", reg.cost);
}

#[test]
fn errors_are_reported() {
    let d = Domain::torus();
    let mu = DiscreteMeasure::dirac(d, Point::planar(1.0, 1.0), 1.0).unwrap();
    let nu = DiscreteMeasure::dirac(d, Point::planar(2.0, 1.0), 1.5).unwrap();
    assert!(matches!(
        solve_exact(&mu, &nu, 1.0),
        Err(Error::UnbalancedMeasures { .. })
    ));
    assert!(matches!(
        solve_exact(&mu, &mu, 0.5),
        Err(Error::InvalidExponent(_))
    ));
    let many = DiscreteMeasure::new(d, vec![Point::planar(1.0, 1.0); 10], vec![0.1; 10]).unwrap();
    assert!(matches!(
        solve_exact_capped(&many, &many, 1.0, 8),
        Err(Error::UseRegularizedSolver {
            support: 20,
            cap: 8
        })
    ));
    assert!(matches!(
        solve_regularized(&mu, &mu, 1.0, 0.0, 10),
        Err(Error::InvalidArgument(_))
    ));
    let g = Grid::lattice(d, 8).unwrap();
    let f = ScalarField::from_fn(&g, |p| p.x().sin()).unwrap();
    assert!(matches!(
        field_to_measure(&f, 100),
        Err(Error::NotADensity { .. })
    ));
}

#[test]
fn field_measures() {
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let one = ScalarField::constant(&g, 1.0);
    let m = field_to_measure(&one, usize::MAX).unwrap();
    assert!((m.total_mass() - 4.0 * PI * PI).abs() < 1e-6);
    let agg = aggregate_field(&one, Aggregation { fx: 4, fy: 4 }).unwrap();
    assert_eq!(agg.len(), 256);
    assert!((agg.total_mass() - m.total_mass()).abs() < 1e-10);
    let capped = field_to_measure(&one, 300).unwrap();
    assert!(capped.len() <= 300);
    assert!((capped.total_mass() - m.total_mass()).abs() < 1e-10);

    let g = Grid::lattice(Domain::torus(), 256).unwrap();
    let f = ScalarField::from_fn(&g, |p| (4.0 * p.x()).sin()).unwrap();
    let (pos, _) = signed_parts(&f);
    assert!(
        rel(
            field_to_measure(&pos, usize::MAX).unwrap().total_mass(),
            4.0 * PI
        ) < 0.005
    );
}

#[test]
fn plan_marginals_and_csv() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mu, nu, _, _, _) = random_instance(&mut rng);
    let plan = solve_exact(&mu, &nu, 2.0).unwrap();
    let (a, b) = plan.marginals(mu.len(), nu.len());
    let total = mu.total_mass();
    for (x, y) in a.iter().zip(mu.weights()) {
        assert!((x - y).abs() <= 1e-8 * total);
    }
    for (x, y) in b.iter().zip(nu.weights()) {
        assert!((x - y).abs() <= 1e-8 * total);
    }
    assert!(plan.entries.iter().all(|e| e.mass >= 0.0));
    let mut buf = Vec::new();
    plan.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf)
        .unwrap()
        .starts_with("src_idx,dst_idx,mass,dist\n"));
    let mut buf = Vec::new();
    mu.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("x,y,weight\n"));
}

/// W1 between the two parts of a field that only depends on x, computed line
/// by line with the circle formula `min_c sum |F_i - c| h`.
fn circle_oracle(f: &ScalarField) -> f64 {
    let g = f.grid();
    let n = g.lattice_size().unwrap();
    let h = g.spacing().unwrap();
    let mut total = 0.0;
    for j in 0..n {
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            acc += f.values()[j * n + i] * h;
            cum.push(acc);
        }
        let mut sorted = cum.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = sorted[n / 2];
        total += cum.iter().map(|c| (c - med).abs() * h).sum::<f64>() * h;
    }
    total
}

#[test]
fn circle_oracle_matches_closed_form() {
    for m in [2.0, 4.0, 8.0] {
        let g = Grid::lattice(Domain::torus(), 256).unwrap();
        let f = ScalarField::from_fn(&g, |p| (m * p.x()).sin()).unwrap();
        assert!(rel(circle_oracle(&f), 8.0 * PI / m) < 0.01);
    }
}

#[test]
fn sine_family_transport_and_duality() {
    for m in [2.0, 4.0] {
        let g = Grid::lattice(Domain::torus(), 128).unwrap();
        let f = ScalarField::from_fn(&g, |p| (m * p.x()).sin()).unwrap();
        let (pos, neg) = signed_parts(&f);
        let (mu, nu, _) = measure_pair(&pos, &neg, 2048).unwrap();
        assert!(mu.len() + nu.len() <= 2048);
        let plan = solve_exact(&mu, &nu, 1.0).unwrap();
        assert!(rel(plan.cost, 8.0 * PI / m) < 0.03, "m={m}: {}", plan.cost);
        let dual = w1_dual_bound_with(&mu, &nu, Some(&plan)).unwrap();
        assert!(dual <= plan.cost * (1.0 + 1e-9));
        assert!(rel(dual, plan.cost) < 0.03);
    }
}

#[test]
fn sinkhorn_agrees_with_simplex() {
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let f = ScalarField::from_fn(&g, |p| (4.0 * p.x()).sin()).unwrap();
    let (pos, neg) = signed_parts(&f);
    let (mu, nu, _) = measure_pair(&pos, &neg, 512).unwrap();
    let exact = solve_exact(&mu, &nu, 1.0).unwrap().cost;
    let reg = solve_regularized(&mu, &nu, 1.0, 0.05, 50_000).unwrap();
    assert!(rel(reg.cost, exact) < 0.05, "{} vs {}", reg.cost, exact);
    assert!(reg.residual <= nlab_core::transport::SINKHORN_TOL);
}

fn cloud(rng: &mut ChaCha8Rng, domain: Domain, k: usize) -> DiscreteMeasure {
    let side = match domain {
        Domain::Torus { side } => side,
        _ => 1.0,
    };
    let pts = (0..k)
        .map(|_| Point::planar(side * rng.gen::<f64>(), side * rng.gen::<f64>()))
        .collect();
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    DiscreteMeasure::new(domain, pts, w.iter().map(|x| x / s).collect()).unwrap()
}

#[test]
fn metric_axioms_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for t in 0..100 {
        let domain = if t % 2 == 0 {
            Domain::torus()
        } else {
            Domain::square(BoundaryCondition::Neumann)
        };
        let k = [
            rng.gen_range(1..=20),
            rng.gen_range(1..=20),
            rng.gen_range(1..=20),
        ];
        let (a, b, c) = (
            cloud(&mut rng, domain, k[0]),
            cloud(&mut rng, domain, k[1]),
            cloud(&mut rng, domain, k[2]),
        );
        let p = if t % 3 == 0 { 2.0 } else { 1.0 };
        let ab = solve_exact(&a, &b, p).unwrap().cost;
        let ba = solve_exact(&b, &a, p).unwrap().cost;
        let ac = solve_exact(&a, &c, p).unwrap().cost;
        let cb = solve_exact(&c, &b, p).unwrap().cost;
        assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        assert!(ab <= ac + cb + 1e-9);
        if p == 1.0 {
            assert!(w1_dual_bound(&a, &b).unwrap() <= ab * (1.0 + 1e-9) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wp_nondecreasing_in_p(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cloud(&mut rng, Domain::torus(), 8);
        let b = cloud(&mut rng, Domain::torus(), 11);
        let w1 = solve_exact(&a, &b, 1.0).unwrap().cost;
        let w2 = solve_exact(&a, &b, 2.0).unwrap().cost;
        let w3 = solve_exact(&a, &b, 3.0).unwrap().cost;
        prop_assert!(w1 <= w2 * (1.0 + 1e-9) && w2 <= w3 * (1.0 + 1e-9));
    }

    #[test]
    fn aggregation_conserves_mass(fx in 1usize..=16, fy in 1usize..=16) {
        let g = Grid::lattice(Domain::square(BoundaryCondition::Neumann), 40).unwrap();
        let f = ScalarField::from_fn(&g, |p| 1.0 + (3.0 * p.x()).sin() * p.y()).unwrap();
        let m = aggregate_field(&f, Aggregation { fx, fy }).unwrap();
        prop_assert!((m.total_mass() - f.integrate()).abs() < 1e-10 * f.integrate());
    }
}
