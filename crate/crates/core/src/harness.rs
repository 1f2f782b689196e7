//! End-to-end checks of the transport/nodal-length inequality, its proof
//! chain, and the spectral lower bound on nodal length.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Grid, Layout, ScalarField};
use crate::error::{Error, Result};
use crate::lemma::squared_distance_transform;
use crate::nodal::{component_map, nodal_length, proof_sum, signed_parts, Sign, DEFAULT_TOL};
use crate::report::Csv;
use crate::spectral::{random_high_frequency, SpectralBasis};
use crate::transport::{measure_pair, solve_exact_capped, w1_dual_bound_with, DEFAULT_SUPPORT_CAP};

/// Largest `|integral f| / ||f||_1` accepted as balanced.
pub const BALANCE_TOL: f64 = 1e-4;
/// Largest relative low-mode coefficient accepted by [`heat_upper_bound`].
pub const ORTHOGONALITY_TOL: f64 = 1e-6;
/// Slack allowed in the Hölder step.
pub const HOLDER_SLACK: f64 = 0.05;
/// Constant in `delta_i <= c eps_i |dD_i| ||f||_inf` (twice the enlargement constant).
pub const DEPTH_CONSTANT: f64 = 4.0;

/// Transport settings shared by all reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Combined support limit for the exact solver; fields are aggregated to fit.
    pub support_cap: usize,
    /// Compute the Lipschitz dual bound alongside `W_1`.
    pub dual_bound: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            support_cap: DEFAULT_SUPPORT_CAP,
            dual_bound: true,
        }
    }
}

/// Enough to regenerate the field of a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub family: String,
    pub domain: String,
    pub resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

impl FieldDescriptor {
    pub fn for_field(family: &str, f: &ScalarField) -> Self {
        FieldDescriptor {
            family: family.to_string(),
            domain: f.domain().to_string(),
            resolution: f.grid().resolution(),
            ..Default::default()
        }
    }
}

/// Both sides of one inequality with everything needed to audit them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub experiment: String,
    pub field: FieldDescriptor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Intermediate quantities keyed by name (`w1`, `h1`, `l1`, ...).
    pub values: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl InequalityReport {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// `sin(m x)` sampled on a planar grid.
pub fn sine_field(grid: &Arc<Grid>, m: f64) -> Result<ScalarField> {
    ScalarField::from_fn(grid, |p| (m * p.x()).sin())
}

/// A Gaussian bump of the given width minus its mean, so that the field is balanced.
pub fn bump_field(grid: &Arc<Grid>, centre: (f64, f64), width: f64) -> Result<ScalarField> {
    let domain = grid.domain();
    let c = crate::domain::Point::planar(centre.0, centre.1);
    let raw = ScalarField::from_fn(grid, |p| {
        let d = domain.distance_unchecked(p, &c);
        (-(d * d) / (2.0 * width * width)).exp()
    })?;
    let mean = raw.integrate() / grid.total_weight();
    Ok(raw.map(|v| v - mean))
}

fn check_balanced(f: &ScalarField) -> Result<(f64, f64, f64)> {
    let l1 = f.l1();
    if !(f.max_abs() > 0.0) {
        return Err(Error::DegenerateField);
    }
    let integral = f.integrate();
    if integral.abs() > BALANCE_TOL * l1 {
        return Err(Error::UnbalancedField { integral, l1 });
    }
    Ok((l1, f.l2(), f.max_abs()))
}

struct TransportMeasurement {
    cost: f64,
    dual: Option<f64>,
    support: usize,
    fx: usize,
    fy: usize,
    pivots: usize,
}

fn transport_parts(f: &ScalarField, p: f64, cfg: &SolverConfig) -> Result<TransportMeasurement> {
    let (g, h) = signed_parts(f);
    let (mu, nu, agg) = measure_pair(&g, &h, cfg.support_cap)?;
    let plan = solve_exact_capped(&mu, &nu, p, cfg.support_cap)?;
    let dual = if p == 1.0 && cfg.dual_bound {
        Some(w1_dual_bound_with(&mu, &nu, Some(&plan))?)
    } else {
        None
    };
    Ok(TransportMeasurement {
        cost: plan.cost,
        dual,
        support: mu.len() + nu.len(),
        fx: agg.fx,
        fy: agg.fy,
        pivots: plan.pivots,
    })
}

/// `W_p(g dx, h dx) * H^1(f = 0)` against `||f||_1^(1 + 1/p) / ||f||_inf`.
pub fn theorem2_report(
    f: &ScalarField,
    p: f64,
    cfg: &SolverConfig,
    field: FieldDescriptor,
) -> Result<InequalityReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(p));
    }
    let (l1, l2, linf) = check_balanced(f)?;
    let tm = transport_parts(f, p, cfg)?;
    let h1 = nodal_length(f, DEFAULT_TOL)?.total_length();
    let lhs = tm.cost * h1;
    let rhs = l1.powf(1.0 + 1.0 / p) / linf;
    let mut values = BTreeMap::new();
    values.insert("wp".into(), tm.cost);
    if p == 1.0 {
        values.insert("w1".into(), tm.cost);
    }
    if let Some(d) = tm.dual {
        values.insert("w1_dual".into(), d);
    }
    values.insert("h1".into(), h1);
    values.insert("l1".into(), l1);
    values.insert("l2".into(), l2);
    values.insert("linf".into(), linf);
    values.insert("support".into(), tm.support as f64);
    values.insert("block_x".into(), tm.fx as f64);
    values.insert("block_y".into(), tm.fy as f64);
    values.insert("pivots".into(), tm.pivots as f64);
    let mut warnings = Vec::new();
    if let Some(d) = tm.dual {
        if d > tm.cost * (1.0 + 1e-9) {
            warnings.push(format!("dual bound {d} exceeds primal cost {}", tm.cost));
        }
    }
    let mut tolerances = BTreeMap::new();
    tolerances.insert("balance".into(), BALANCE_TOL);
    Ok(InequalityReport {
        experiment: "theorem2".into(),
        field,
        p: Some(p),
        lhs,
        rhs,
        ratio: lhs / rhs,
        values,
        tolerances,
        warnings,
    })
}

/// Per-component depth data for the proof chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentDepth {
    pub id: usize,
    pub excess_mass: f64,
    pub boundary_length: f64,
    /// Depth below which half of the component's mass lies.
    pub eps: f64,
    /// `excess_mass / (eps * boundary_length * ||f||_inf)`.
    pub constant: f64,
}

/// Measured steps of the lower bound on `W_p` through sign components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProofChainReport {
    pub field: FieldDescriptor,
    pub p: f64,
    pub wp: f64,
    pub h1: f64,
    pub l1: f64,
    pub linf: f64,
    pub proof_sum: f64,
    /// `W_p^p ||f||_inf^p / proof_sum`.
    pub kappa: f64,
    /// `(||f||_1 / 2)^(p+1)`.
    pub holder_lhs: f64,
    /// `proof_sum * H^1^p`.
    pub holder_rhs: f64,
    pub holder_ok: bool,
    pub components: Vec<ComponentDepth>,
    pub max_depth_constant: f64,
    pub depth_ok: bool,
}

impl ProofChainReport {
    pub fn passed(&self) -> bool {
        self.kappa > 0.0 && self.kappa.is_finite() && self.holder_ok && self.depth_ok
    }
}

/// Checks the three measured steps behind the transport lower bound:
/// `W_p^p >= kappa proof_sum / ||f||_inf^p` (reports `kappa`), the Hölder step
/// `(||f||_1/2)^(p+1) <= proof_sum H^1^p` within 5%, and for each positive
/// component `delta_i <= 4 eps_i |dD_i| ||f||_inf`, where `eps_i` is the
/// depth (distance to the sign change) below which half its mass lies.
pub fn proof_chain_check(
    f: &ScalarField,
    p: f64,
    cfg: &SolverConfig,
    field: FieldDescriptor,
) -> Result<ProofChainReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(p));
    }
    let (l1, _, linf) = check_balanced(f)?;
    let tm = transport_parts(
        f,
        p,
        &SolverConfig {
            dual_bound: false,
            ..*cfg
        },
    )?;
    let h1 = nodal_length(f, DEFAULT_TOL)?.total_length();
    let map = component_map(f)?;
    let ps = proof_sum(&map.stats, p)?;
    let kappa = tm.cost.powf(p) * linf.powf(p) / ps;
    let holder_lhs = (l1 / 2.0).powf(p + 1.0);
    let holder_rhs = ps * h1.powf(p);
    let depths = component_depths(f, &map.labels)?;
    let components: Vec<ComponentDepth> = map
        .stats
        .iter()
        .filter(|s| s.sign == Sign::Positive)
        .map(|s| {
            let eps = depths[s.id];
            ComponentDepth {
                id: s.id,
                excess_mass: s.excess_mass,
                boundary_length: s.boundary_length,
                eps,
                constant: s.excess_mass / (eps * s.boundary_length * linf),
            }
        })
        .collect();
    let max_depth_constant = components.iter().map(|c| c.constant).fold(0.0, f64::max);
    Ok(ProofChainReport {
        field,
        p,
        wp: tm.cost,
        h1,
        l1,
        linf,
        proof_sum: ps,
        kappa,
        holder_lhs,
        holder_rhs,
        holder_ok: holder_lhs <= holder_rhs * (1.0 + HOLDER_SLACK),
        components,
        max_depth_constant,
        depth_ok: max_depth_constant <= DEPTH_CONSTANT,
    })
}

/// Half-mass depth of every component, measured with a distance transform
/// to the nodes of opposite sign.
fn component_depths(f: &ScalarField, labels: &[usize]) -> Result<Vec<f64>> {
    let grid = f.grid();
    let n = match grid.layout() {
        Layout::Lattice { n } => *n,
        _ => {
            return Err(Error::GridMismatch(
                "component depths need a planar lattice".into(),
            ))
        }
    };
    let h = grid.spacing().expect("lattice spacing");
    let periodic = grid.domain().boundary_condition().is_none();
    let v = f.values();
    let tau = DEFAULT_TOL * f.max_abs();
    let positive: Vec<bool> = v.iter().map(|&x| x > tau || x.abs() <= tau).collect();
    let d_pos = squared_distance_transform(
        &positive.iter().map(|&b| !b).collect::<Vec<_>>(),
        n,
        n,
        periodic,
    );
    let d_neg = squared_distance_transform(&positive, n, n, periodic);
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for (node, &c) in labels.iter().enumerate() {
        let d2 = if positive[node] {
            d_pos[node]
        } else {
            d_neg[node]
        };
        // the sign change sits about half a spacing before the nearest opposite node
        let depth = (d2.sqrt() - 0.5).max(0.5) * h;
        per[c].push((depth, v[node].abs() * grid.weights()[node]));
    }
    Ok(per
        .into_iter()
        .map(|mut nodes| {
            nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = nodes.iter().map(|x| x.1).sum();
            let mut acc = 0.0;
            for (depth, m) in &nodes {
                acc += m;
                if acc >= 0.5 * total {
                    return *depth;
                }
            }
            nodes.last().map_or(0.0, |x| x.0)
        })
        .collect())
}

/// `sqrt(t) ||f||_1 + exp(-lambda_n t) ||f||_2` for `f` orthogonal to modes `0..n`.
pub fn heat_upper_bound(f: &ScalarField, basis: &SpectralBasis, n: usize, t: f64) -> Result<f64> {
    if basis.len() <= n {
        return Err(Error::InsufficientBasis {
            required: n + 1,
            available: basis.len(),
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("heat flow time {t}")));
    }
    let l2 = f.l2();
    if n > 0 && l2 > 0.0 {
        let c = basis.truncated(n).coefficients(f)?;
        let worst = c.iter().fold(0.0f64, |a, &b| a.max(b.abs())) / l2;
        if worst > ORTHOGONALITY_TOL {
            return Err(Error::NotOrthogonal {
                n,
                coefficient: worst,
            });
        }
    }
    Ok(t.sqrt() * f.l1() + (-basis.eigenvalue(n) * t).exp() * l2)
}

/// Time balancing the two terms of the heat bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalTime {
    pub t: f64,
    /// Set when `sqrt(lambda) ||f||_2 / ||f||_1 < e` forced `t = 1/lambda`.
    pub clamped: bool,
}

/// `t = log(sqrt(lambda) l2 / l1) / lambda`, clamped to `1/lambda` when the
/// logarithm would fall below one.
pub fn optimal_time(lambda: f64, l1: f64, l2: f64) -> Result<OptimalTime> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidSpectrum(lambda));
    }
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::DegenerateField);
    }
    let arg = lambda.sqrt() * l2 / l1;
    if arg < E {
        Ok(OptimalTime {
            t: 1.0 / lambda,
            clamped: true,
        })
    } else {
        Ok(OptimalTime {
            t: arg.ln() / lambda,
            clamped: false,
        })
    }
}

/// `sqrt(n / log n) * log(e + n l2/l1)^(-1/2) * l1/linf`.
pub fn theorem1_rhs(n: usize, l1: f64, l2: f64, linf: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidCount(format!(
            "n = {n}; the bound needs n >= 2"
        )));
    }
    let nf = n as f64;
    Ok((nf / nf.ln()).sqrt() / (E + nf * l2 / l1).ln().sqrt() * l1 / linf)
}

/// Nodal length of `f` against the spectral lower bound with unit constant.
///
/// `lambda` is the lowest eigenvalue present in `f` (its orthogonality index
/// being `n`). When `check_heat` is set the report also holds `W_1(g, h)`, the
/// heat bound at the optimal time and their ratio `c_fit`.
pub fn theorem1_for_field(
    f: &ScalarField,
    n: usize,
    lambda: f64,
    cfg: &SolverConfig,
    check_heat: bool,
    field: FieldDescriptor,
) -> Result<InequalityReport> {
    let (l1, l2, linf) = check_balanced(f)?;
    let h1 = nodal_length(f, DEFAULT_TOL)?.total_length();
    let rhs = theorem1_rhs(n, l1, l2, linf)?;
    let topt = optimal_time(lambda, l1, l2)?;
    let mut values = BTreeMap::new();
    values.insert("h1".into(), h1);
    values.insert("l1".into(), l1);
    values.insert("l2".into(), l2);
    values.insert("linf".into(), linf);
    values.insert("lambda_n".into(), lambda);
    values.insert("t_opt".into(), topt.t);
    let mut warnings = Vec::new();
    if topt.clamped {
        warnings.push("optimal time clamped to 1/lambda".into());
    }
    if check_heat {
        let tm = transport_parts(
            f,
            1.0,
            &SolverConfig {
                dual_bound: false,
                ..*cfg
            },
        )?;
        let bound = topt.t.sqrt() * l1 + (-lambda * topt.t).exp() * l2;
        values.insert("w1".into(), tm.cost);
        values.insert("heat_bound".into(), bound);
        values.insert("c_fit".into(), tm.cost / bound);
    }
    Ok(InequalityReport {
        experiment: "theorem1".into(),
        field,
        p: None,
        lhs: h1,
        rhs,
        ratio: h1 / rhs,
        values,
        tolerances: BTreeMap::new(),
        warnings,
    })
}

/// Draws a random field from modes `n .. n + bandwidth` and reports the
/// spectral nodal-length bound; `W_1` is checked against the heat bound.
pub fn theorem1_report(
    basis: &SpectralBasis,
    seed: u64,
    n: usize,
    bandwidth: usize,
    cfg: &SolverConfig,
) -> Result<InequalityReport> {
    let f = random_high_frequency(basis, n, bandwidth, seed)?;
    let lambda = basis.eigenvalue(n);
    let mut desc = FieldDescriptor::for_field("random", &f);
    desc.seed = Some(seed);
    desc.n = Some(n);
    desc.bandwidth = Some(bandwidth);
    let mut report = theorem1_for_field(&f, n, lambda, cfg, true, desc)?;
    let bound = heat_upper_bound(&f, basis, n, report.values["t_opt"])?;
    report.values.insert("heat_bound".into(), bound);
    report
        .values
        .insert("c_fit".into(), report.values["w1"] / bound);
    Ok(report)
}

/// One point of a nodal-length scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub n: f64,
    pub h1: f64,
    /// `||f||_1 / ||f||_inf`.
    pub norm_ratio: f64,
}

impl ScanPoint {
    pub fn from_report(r: &InequalityReport) -> Option<ScanPoint> {
        Some(ScanPoint {
            n: r.field.n? as f64,
            h1: r.value("h1")?,
            norm_ratio: r.value("l1")? / r.value("linf")?,
        })
    }
}

/// Fitted exponents of `H^1 ~ n^alpha (||f||_1/||f||_inf)^beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    /// `None` when `n` does not vary across the scan.
    pub alpha: Option<f64>,
    /// `None` when the norm ratio does not vary across the scan.
    pub beta: Option<f64>,
    pub points: usize,
}

/// Least-squares fit of `log H^1` on `log n` and `log(||f||_1/||f||_inf)`.
/// A regressor whose logarithm spreads less than 0.05 is left out.
pub fn exponent_scan(points: &[ScanPoint]) -> Result<ExponentFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} sweep points; at least 4 are needed",
            points.len()
        )));
    }
    if let Some(bad) = points
        .iter()
        .find(|q| !(q.n > 0.0 && q.h1 > 0.0 && q.norm_ratio > 0.0))
    {
        return Err(Error::InsufficientData(format!(
            "non-positive scan point {bad:?}"
        )));
    }
    let y: Vec<f64> = points.iter().map(|q| q.h1.ln()).collect();
    let xn: Vec<f64> = points.iter().map(|q| q.n.ln()).collect();
    let xr: Vec<f64> = points.iter().map(|q| q.norm_ratio.ln()).collect();
    let spread = |x: &[f64]| {
        x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - x.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let use_n = spread(&xn) > 0.05;
    let use_r = spread(&xr) > 0.05;
    if !use_n && !use_r {
        return Err(Error::InsufficientData(
            "neither n nor the norm ratio varies".into(),
        ));
    }
    let mut cols: Vec<&[f64]> = Vec::new();
    if use_n {
        cols.push(&xn);
    }
    if use_r {
        cols.push(&xr);
    }
    let rows = points.len();
    let a = DMatrix::from_fn(rows, cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            cols[j - 1][i]
        }
    });
    let b = DVector::from_column_slice(&y);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::InsufficientData("regressors are collinear".into()));
    }
    let coef = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    let mut k = 1;
    let alpha = use_n.then(|| {
        k += 1;
        coef[k - 1]
    });
    let beta = use_r.then(|| coef[k]);
    Ok(ExponentFit {
        alpha,
        beta,
        points: rows,
    })
}

/// Sweep table `n,p,seed,lhs,rhs,ratio,w1,h1,l1,l2,linf,t_opt`; missing values are empty.
pub fn sweep_csv(reports: &[InequalityReport]) -> Csv {
    let mut csv = Csv::new(&[
        "n", "p", "seed", "lhs", "rhs", "ratio", "w1", "h1", "l1", "l2", "linf", "t_opt",
    ]);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        csv.row([
            r.field.n.map(|n| n.to_string()).unwrap_or_default(),
            opt(r.p),
            r.field.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.ratio.to_string(),
            opt(r.value("w1")),
            opt(r.value("h1")),
            opt(r.value("l1")),
            opt(r.value("l2")),
            opt(r.value("linf")),
            opt(r.value("t_opt")),
        ]);
    }
    csv
}
