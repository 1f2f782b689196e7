//! Wasserstein distances between discrete measures.
//!
//! [`solve_exact`] runs a network simplex on the full bipartite graph,
//! [`solve_regularized`] runs annealed log-domain Sinkhorn, and
//! [`w1_dual_bound`] evaluates 1-Lipschitz test potentials.

pub mod selftest;
mod simplex;
mod sinkhorn;

use std::io::Write;

use serde::Serialize;

use crate::domain::{Domain, Layout, Point, ScalarField};
use crate::error::{Error, Result};
use crate::par;

/// Default cap on the combined support handled by the exact solver.
pub const DEFAULT_SUPPORT_CAP: usize = 4096;

/// Integer units of mass used by the exact solver.
const QUANTUM_TOTAL: i64 = 1 << 50;

/// L1 marginal residual (unit total mass) at which Sinkhorn stops.
pub const SINKHORN_TOL: f64 = 1e-5;

/// Relative mass mismatch tolerated before measures count as unbalanced.
const BALANCE_TOL: f64 = 1e-6;

/// Weighted point set on a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    domain: Domain,
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(domain: Domain, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        for (i, (p, &w)) in support.iter().zip(&weights).enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::NotADensity { node: i, value: w });
            }
            domain.metric_distance(p, p)?;
        }
        Ok(DiscreteMeasure {
            domain,
            support,
            weights,
        })
    }

    pub fn dirac(domain: Domain, at: Point, mass: f64) -> Result<Self> {
        Self::new(domain, vec![at], vec![mass])
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same measure with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> DiscreteMeasure {
        DiscreteMeasure {
            domain: self.domain,
            support: self.support.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Drops points of zero weight.
    pub fn pruned(&self) -> DiscreteMeasure {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        DiscreteMeasure {
            domain: self.domain,
            support: keep.iter().map(|&i| self.support[i]).collect(),
            weights: keep.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// CSV `x,y,weight` (planar) or `lon,lat,weight` (sphere).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.domain.is_sphere() {
            writeln!(w, "lon,lat,weight")?;
            for (p, m) in self.support.iter().zip(&self.weights) {
                let (lon, lat) = p.lonlat();
                writeln!(w, "{lon},{lat},{m}")?;
            }
        } else {
            writeln!(w, "x,y,weight")?;
            for (p, m) in self.support.iter().zip(&self.weights) {
                writeln!(w, "{},{},{m}", p.x(), p.y())?;
            }
        }
        Ok(())
    }
}

/// One entry of a transport plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanEntry {
    pub src: usize,
    pub dst: usize,
    pub mass: f64,
    pub dist: f64,
}

/// Optimal coupling returned by [`solve_exact`].
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub p: f64,
    pub entries: Vec<PlanEntry>,
    /// `(sum mass * dist^p)^(1/p)`.
    pub cost: f64,
    /// Dual potentials (in cost units) on the sources and targets.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub pivots: usize,
}

impl TransportPlan {
    /// Row and column sums of the plan.
    pub fn marginals(&self, m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
        let (mut a, mut b) = (vec![0.0; m], vec![0.0; n]);
        for e in &self.entries {
            a[e.src] += e.mass;
            b[e.dst] += e.mass;
        }
        (a, b)
    }

    /// CSV `src_idx,dst_idx,mass,dist`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "src_idx,dst_idx,mass,dist")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{}", e.src, e.dst, e.mass, e.dist)?;
        }
        Ok(())
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

fn check_balance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, f64)> {
    if mu.domain != nu.domain {
        return Err(Error::InvalidArgument(format!(
            "measures on {} and {}",
            mu.domain, nu.domain
        )));
    }
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if !(a > 0.0) || !(b > 0.0) || (a - b).abs() > BALANCE_TOL * a.max(b) {
        return Err(Error::UnbalancedMeasures { mu: a, nu: b });
    }
    Ok((a, b))
}

fn cost_matrix(domain: Domain, xs: &[Point], ys: &[Point], p: f64) -> Vec<f64> {
    let rows = par::map_slice(xs, |x| {
        ys.iter()
            .map(|y| {
                let d = domain.distance_unchecked(x, y);
                if p == 1.0 {
                    d
                } else {
                    d.powf(p)
                }
            })
            .collect::<Vec<f64>>()
    });
    rows.concat()
}

/// Exact `W_p` by network simplex.
///
/// Both measures are rescaled to their mean mass before solving; plan masses
/// and the cost refer to that common mass. Combined supports above `cap`
/// points are refused.
pub fn solve_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<TransportPlan> {
    solve_exact_capped(mu, nu, p, DEFAULT_SUPPORT_CAP)
}

pub fn solve_exact_capped(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    cap: usize,
) -> Result<TransportPlan> {
    check_exponent(p)?;
    let (ma, mb) = check_balance(mu, nu)?;
    let keep_a: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights[i] > 0.0).collect();
    let keep_b: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights[j] > 0.0).collect();
    let support = keep_a.len() + keep_b.len();
    if support > cap {
        return Err(Error::UseRegularizedSolver { support, cap });
    }
    let mean = 0.5 * (ma + mb);
    let xs: Vec<Point> = keep_a.iter().map(|&i| mu.support[i]).collect();
    let ys: Vec<Point> = keep_b.iter().map(|&j| nu.support[j]).collect();
    let wa: Vec<f64> = keep_a.iter().map(|&i| mu.weights[i]).collect();
    let wb: Vec<f64> = keep_b.iter().map(|&j| nu.weights[j]).collect();
    let cost = cost_matrix(mu.domain, &xs, &ys, p);
    let supply = simplex::quantize(&wa, QUANTUM_TOTAL);
    let demand = simplex::quantize(&wb, QUANTUM_TOTAL);
    let sol = simplex::network_simplex(&supply, &demand, &cost)?;
    let unit = mean / QUANTUM_TOTAL as f64;
    let n = ys.len();
    let mut total = 0.0;
    let entries: Vec<PlanEntry> = sol
        .flows
        .iter()
        .map(|&(i, j, f)| {
            let c = cost[i * n + j];
            total += f as f64 * c;
            PlanEntry {
                src: keep_a[i],
                dst: keep_b[j],
                mass: f as f64 * unit,
                dist: mu.domain.distance_unchecked(&xs[i], &ys[j]),
            }
        })
        .collect();
    let shift = sol.beta.iter().sum::<f64>() / sol.beta.len() as f64;
    let mut alpha = vec![0.0; mu.len()];
    let mut beta = vec![0.0; nu.len()];
    for (k, &i) in keep_a.iter().enumerate() {
        alpha[i] = sol.alpha[k] + shift;
    }
    for (k, &j) in keep_b.iter().enumerate() {
        beta[j] = sol.beta[k] - shift;
    }
    Ok(TransportPlan {
        p,
        entries,
        cost: (total * unit).max(0.0).powf(1.0 / p),
        alpha,
        beta,
        pivots: sol.pivots,
    })
}

/// Outcome of [`solve_regularized`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegularizedCost {
    /// Debiased `W_p` estimate.
    pub cost: f64,
    /// Largest L1 marginal residual of the three Sinkhorn problems, relative to unit mass.
    pub residual: f64,
    pub iterations: usize,
}

/// Entropic estimate of `W_p`.
///
/// Solves the annealed Sinkhorn problems for `(mu, nu)`, `(mu, mu)` and
/// `(nu, nu)` down to `epsilon = reg` (cost units) and returns
/// `(<P_mn, C> - (<P_mm, C> + <P_nn, C>) / 2)^(1/p)`, scaled to the mean mass.
pub fn solve_regularized(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    reg: f64,
    max_iter: usize,
) -> Result<RegularizedCost> {
    check_exponent(p)?;
    if !(reg > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization {reg} must be positive"
        )));
    }
    let (ma, mb) = check_balance(mu, nu)?;
    let (mu, nu) = (mu.pruned(), nu.pruned());
    let a: Vec<f64> = mu.weights.iter().map(|w| w / ma).collect();
    let b: Vec<f64> = nu.weights.iter().map(|w| w / mb).collect();
    let tol = SINKHORN_TOL;
    let run = |x: &DiscreteMeasure, wx: &[f64], y: &DiscreteMeasure, wy: &[f64]| {
        let c = cost_matrix(mu.domain, &x.support, &y.support, p);
        sinkhorn::sinkhorn(wx, wy, &c, reg, max_iter, tol)
    };
    let cross = run(&mu, &a, &nu, &b)?;
    let self_a = run(&mu, &a, &mu, &a)?;
    let self_b = run(&nu, &b, &nu, &b)?;
    let debiased = cross.transport_cost - 0.5 * (self_a.transport_cost + self_b.transport_cost);
    let mean = 0.5 * (ma + mb);
    Ok(RegularizedCost {
        cost: (mean * debiased.max(0.0)).powf(1.0 / p),
        residual: cross.residual.max(self_a.residual).max(self_b.residual),
        iterations: cross.iterations + self_a.iterations + self_b.iterations,
    })
}

/// Lower bound on `W_1(mu, nu)` from 1-Lipschitz test potentials.
///
/// The family holds `0`, `+-dist(., z)` for up to 64 support points `z`, and,
/// when the exact solver applies, the c-transform
/// `phi(z) = min_j (dist(z, y_j) - beta_j)` of the optimal target potential.
pub fn w1_dual_bound(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let plan = match solve_exact(mu, nu, 1.0) {
        Ok(plan) => Some(plan),
        Err(Error::UseRegularizedSolver { .. }) => None,
        Err(e) => return Err(e),
    };
    w1_dual_bound_with(mu, nu, plan.as_ref())
}

/// [`w1_dual_bound`] reusing a `p = 1` plan already computed for the same measures.
pub fn w1_dual_bound_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    plan: Option<&TransportPlan>,
) -> Result<f64> {
    let (ma, mb) = check_balance(mu, nu)?;
    let mean = 0.5 * (ma + mb);
    let (sa, sb) = (mean / ma, mean / mb);
    let domain = mu.domain;
    let gap = |phi: &(dyn Fn(&Point) -> f64 + Sync)| -> f64 {
        let a: f64 = par::map_range(mu.len(), |i| sa * mu.weights[i] * phi(&mu.support[i]))
            .iter()
            .sum();
        let b: f64 = par::map_range(nu.len(), |j| sb * nu.weights[j] * phi(&nu.support[j]))
            .iter()
            .sum();
        a - b
    };
    let mut best = 0.0f64;
    let pool: Vec<Point> = mu
        .pruned()
        .support
        .into_iter()
        .chain(nu.pruned().support)
        .collect();
    let stride = (pool.len() / 64).max(1);
    for z in pool.iter().step_by(stride).take(64) {
        let v = gap(&|x: &Point| domain.distance_unchecked(x, z));
        best = best.max(v).max(-v);
    }
    if let Some(plan) = plan {
        if plan.p != 1.0 {
            return Err(Error::InvalidExponent(plan.p));
        }
        let active: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights[j] > 0.0).collect();
        // potentials carry a large additive offset from the solver; centring
        // them keeps the two integrals free of cancellation
        let shift = active.iter().map(|&j| plan.beta[j]).sum::<f64>() / active.len().max(1) as f64;
        let targets: Vec<(Point, f64)> = active
            .iter()
            .map(|&j| (nu.support[j], plan.beta[j] - shift))
            .collect();
        let phi = |x: &Point| {
            targets
                .iter()
                .map(|(y, b)| domain.distance_unchecked(x, y) - b)
                .fold(f64::INFINITY, f64::min)
        };
        best = best.max(gap(&phi));
    }
    Ok(best)
}

/// Block sizes used to coarsen a lattice field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Aggregation {
    pub fx: usize,
    pub fy: usize,
}

struct BlockSums {
    mass: Vec<f64>,
    mx: Vec<f64>,
    my: Vec<f64>,
    sq_err: f64,
}

fn lattice_of(f: &ScalarField) -> Result<usize> {
    match f.grid().layout() {
        Layout::Lattice { n } => Ok(*n),
        _ => Err(Error::GridMismatch(
            "aggregation needs a planar lattice".into(),
        )),
    }
}

fn check_density(f: &ScalarField) -> Result<()> {
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NotADensity { node, value });
    }
    Ok(())
}

fn block_sums(f: &ScalarField, agg: Aggregation) -> BlockSums {
    let n = f.grid().lattice_size().expect("lattice");
    let (bx, by) = (n.div_ceil(agg.fx), n.div_ceil(agg.fy));
    let mut mass = vec![0.0; bx * by];
    let mut mx = vec![0.0; bx * by];
    let mut my = vec![0.0; bx * by];
    let mut wsum = vec![0.0; bx * by];
    let (nodes, w, v) = (f.grid().nodes(), f.grid().weights(), f.values());
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let b = (j / agg.fy) * bx + i / agg.fx;
            let m = v[k] * w[k];
            mass[b] += m;
            mx[b] += m * nodes[k].x();
            my[b] += m * nodes[k].y();
            wsum[b] += w[k];
        }
    }
    let mut sq_err = 0.0;
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let b = (j / agg.fy) * bx + i / agg.fx;
            let mean = mass[b] / wsum[b];
            sq_err += w[k] * (v[k] - mean).powi(2);
        }
    }
    BlockSums {
        mass,
        mx,
        my,
        sq_err,
    }
}

fn blocks_to_measure(domain: Domain, s: &BlockSums) -> Result<DiscreteMeasure> {
    let peak = s.mass.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for b in 0..s.mass.len() {
        if s.mass[b] > 1e-12 * peak {
            support.push(Point::planar(s.mx[b] / s.mass[b], s.my[b] / s.mass[b]));
            weights.push(s.mass[b]);
        }
    }
    DiscreteMeasure::new(domain, support, weights)
}

fn support_count(s: &BlockSums) -> usize {
    let peak = s.mass.iter().fold(0.0f64, |a, &b| a.max(b));
    s.mass.iter().filter(|&&m| m > 1e-12 * peak).count()
}

/// Lumps a nonnegative lattice field into `fx x fy` blocks, each represented
/// by its total mass at its barycentre (blocks never straddle the seam of the torus).
pub fn aggregate_field(f: &ScalarField, agg: Aggregation) -> Result<DiscreteMeasure> {
    check_density(f)?;
    let n = lattice_of(f)?;
    if agg.fx == 0 || agg.fy == 0 || agg.fx > n || agg.fy > n {
        return Err(Error::InvalidArgument(format!(
            "aggregation {}x{} on a {n} lattice",
            agg.fx, agg.fy
        )));
    }
    blocks_to_measure(f.domain(), &block_sums(f, agg))
}

/// Node masses `value * weight` of a nonnegative field. When more than
/// `max_support` nodes carry mass the field is aggregated with the block
/// shape of least L2 error whose support fits.
pub fn field_to_measure(f: &ScalarField, max_support: usize) -> Result<DiscreteMeasure> {
    check_density(f)?;
    let direct = node_measure(f)?;
    if direct.len() <= max_support {
        return Ok(direct);
    }
    let (agg, _) = choose_aggregation(&[f], max_support)?;
    aggregate_field(f, agg)
}

fn node_measure(f: &ScalarField) -> Result<DiscreteMeasure> {
    let grid = f.grid();
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for ((p, &v), &w) in grid.nodes().iter().zip(f.values()).zip(grid.weights()) {
        if v * w > 0.0 {
            support.push(*p);
            weights.push(v * w);
        }
    }
    DiscreteMeasure::new(f.domain(), support, weights)
}

fn choose_aggregation(fields: &[&ScalarField], cap: usize) -> Result<(Aggregation, usize)> {
    let n = lattice_of(fields[0])?;
    let top = n.min(16);
    let candidates: Vec<Aggregation> = (1..=top)
        .flat_map(|fy| (1..=top).map(move |fx| Aggregation { fx, fy }))
        .collect();
    let scored = par::map_slice(&candidates, |&agg| {
        let mut err = 0.0;
        let mut support = 0;
        for f in fields {
            let s = block_sums(f, agg);
            err += s.sq_err;
            support += support_count(&s);
        }
        (agg, err, support)
    });
    let feasible: Vec<&(Aggregation, f64, usize)> = scored.iter().filter(|s| s.2 <= cap).collect();
    let min_err = feasible.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let scale: f64 = fields
        .iter()
        .map(|f| f.l2().powi(2))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    feasible
        .iter()
        .filter(|s| s.1 <= min_err + 1e-12 * scale)
        .min_by_key(|s| (s.0.fx * s.0.fy, s.0.fx))
        .map(|s| (s.0, s.2))
        .ok_or_else(|| {
            Error::ResolutionTooCoarse(format!(
                "no block shape up to 16x16 brings the support under {cap}"
            ))
        })
}

/// Measures of the two parts of a signed field, aggregated jointly so that
/// their combined support stays within `cap`.
pub fn measure_pair(
    g: &ScalarField,
    h: &ScalarField,
    cap: usize,
) -> Result<(DiscreteMeasure, DiscreteMeasure, Aggregation)> {
    check_density(g)?;
    check_density(h)?;
    if !g.same_grid(h) {
        return Err(Error::GridMismatch("both parts must share a grid".into()));
    }
    let (mg, mh) = (node_measure(g)?, node_measure(h)?);
    if mg.len() + mh.len() <= cap {
        return Ok((mg, mh, Aggregation { fx: 1, fy: 1 }));
    }
    let (agg, _) = choose_aggregation(&[g, h], cap)?;
    Ok((aggregate_field(g, agg)?, aggregate_field(h, agg)?, agg))
}
