//! Cross-check of the exact solver against exhaustive vertex enumeration on
//! small random instances with integer masses.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{solve_exact, w1_dual_bound_with, DiscreteMeasure};
use crate::domain::{BoundaryCondition, Domain, Point};
use crate::error::{Error, Result};
use crate::par;

/// Largest support size per side accepted by [`selftest`].
pub const MAX_SIDE: usize = 6;

/// Outcome for one random instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestRow {
    pub instance: usize,
    pub sources: usize,
    pub targets: usize,
    pub p: f64,
    pub exact: f64,
    pub oracle: f64,
    pub abs_error: f64,
    /// Dual certificate and primal cost at `p = 1`, `None` otherwise.
    pub w1_dual: Option<f64>,
}

/// Minimum of `sum x_ij c_ij` over the vertices of the transportation
/// polytope with integer margins `s`, `d`. Exponential; meant for tiny inputs.
pub fn vertex_enumeration(s: &[u64], d: &[u64], c: &[Vec<f64>]) -> f64 {
    type Memo = HashMap<(Vec<u64>, Vec<u64>), f64>;
    fn go(s: &mut [u64], d: &mut [u64], c: &[Vec<f64>], memo: &mut Memo) -> f64 {
        if s.iter().all(|&x| x == 0) {
            return 0.0;
        }
        let key = (s.to_vec(), d.to_vec());
        if let Some(&v) = memo.get(&key) {
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
        memo.insert(key, best);
        best
    }
    go(&mut s.to_vec(), &mut d.to_vec(), c, &mut HashMap::new())
}

fn composition(total: u64, parts: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut cuts: Vec<u64> = (0..parts - 1).map(|_| rng.gen_range(0..=total)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev + 1);
        prev = c;
    }
    out.push(total - prev + 1);
    out
}

type Instance = (DiscreteMeasure, DiscreteMeasure, Vec<u64>, Vec<u64>, f64);

fn instance(seed: u64, max_side: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = if rng.gen_bool(0.5) {
        Domain::torus()
    } else {
        Domain::square(BoundaryCondition::Neumann)
    };
    let side = match domain {
        Domain::Torus { side } => side,
        _ => 1.0,
    };
    let (m, n) = (rng.gen_range(1..=max_side), rng.gen_range(1..=max_side));
    let total = rng.gen_range(6..=14);
    let mut s = composition(total, m, &mut rng);
    let mut d = composition(total, n, &mut rng);
    let (ss, sd): (u64, u64) = (s.iter().sum(), d.iter().sum());
    if ss > sd {
        d[0] += ss - sd;
    } else {
        s[0] += sd - ss;
    }
    let mut pts = |k: usize| -> Vec<Point> {
        (0..k)
            .map(|_| Point::planar(side * rng.gen::<f64>(), side * rng.gen::<f64>()))
            .collect()
    };
    let (xs, ys) = (pts(m), pts(n));
    let p = [1.0, 1.5, 2.0, 3.0][rng.gen_range(0..4)];
    let w = |v: &[u64]| v.iter().map(|&x| x as f64).collect();
    let mu = DiscreteMeasure::new(domain, xs, w(&s))?;
    let nu = DiscreteMeasure::new(domain, ys, w(&d))?;
    Ok((mu, nu, s, d, p))
}

/// Solves `count` random instances exactly and by enumeration. Instance `k`
/// is drawn from `seed + k`, so rows do not depend on scheduling.
pub fn selftest(seed: u64, count: usize, max_side: usize) -> Result<Vec<SelftestRow>> {
    if count == 0 {
        return Err(Error::InvalidCount(
            "selftest needs at least one instance".into(),
        ));
    }
    if max_side == 0 || max_side > MAX_SIDE {
        return Err(Error::InvalidCount(format!(
            "support side must lie in 1..={MAX_SIDE}, got {max_side}"
        )));
    }
    par::map_range(count, |k| {
        let (mu, nu, s, d, p) = instance(seed.wrapping_add(k as u64), max_side)?;
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
        let plan = solve_exact(&mu, &nu, p)?;
        let w1_dual = if p == 1.0 {
            Some(w1_dual_bound_with(&mu, &nu, Some(&plan))?)
        } else {
            None
        };
        Ok(SelftestRow {
            instance: k,
            sources: mu.len(),
            targets: nu.len(),
            p,
            exact: plan.cost,
            oracle,
            abs_error: (plan.cost - oracle).abs(),
            w1_dual,
        })
    })
    .into_iter()
    .collect()
}
