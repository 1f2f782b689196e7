//! Near-uniform point sets on the sphere, the heat-smeared signed design
//! measure, and the scaling of its nodal length and norms with time.

use std::f64::consts::PI;

use serde::Serialize;

use crate::domain::{gauss_legendre, sphere_angle, Grid, Point, ScalarField};
use crate::error::{Error, Result};
use crate::nodal::{nodal_length, DEFAULT_TOL};
use crate::par;
use crate::report::{Csv, Svg};
use crate::spectral::sphharm::{real_sh_all, sh_index};
use crate::spectral::{ModeLabel, SpectralBasis};

/// Highest degree probed by the design residual.
pub const DESIGN_BAND: usize = 60;
/// Largest admissible `exp(-L(L+1)t)` at the synthesis bandlimit `L`.
pub const BANDLIMIT_TOL: f64 = 1e-6;
/// Coefficient decay at the bandlimit used for zonal synthesis; far below
/// [`BANDLIMIT_TOL`] so that truncation ripple stays at round-off level.
pub const SYNTHESIS_TOL: f64 = 1e-14;
/// Default `c` in the regime condition `t <= 1/(c n)`.
pub const DEFAULT_REGIME_C: f64 = 4.0;

/// Points on the unit sphere with their separation and design residuals.
#[derive(Clone, Debug, Serialize)]
pub struct DesignPointSet {
    pub n: usize,
    pub points: Vec<Point>,
    /// Smallest pairwise geodesic distance (`pi` for a single point).
    pub min_separation: f64,
    /// Entry `l`: `max_m |mean_k Y_lm(x_k) - average of Y_lm|` for `l <= band`.
    pub design_residual: Vec<f64>,
}

impl DesignPointSet {
    /// Wraps arbitrary points (normalized) and measures them up to degree `band`.
    pub fn from_points(points: Vec<Point>, band: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCount(
                "a design needs at least one point".into(),
            ));
        }
        let points: Vec<Point> = points.iter().map(Point::normalized).collect();
        let n = points.len();
        let min_separation = par::map_range(n, |i| {
            points[i + 1..]
                .iter()
                .map(|q| sphere_angle(&points[i], q))
                .fold(PI, f64::min)
        })
        .into_iter()
        .fold(PI, f64::min);
        let design_residual = design_residual(&points, band);
        Ok(DesignPointSet {
            n,
            points,
            min_separation,
            design_residual,
        })
    }

    /// Largest residual over degrees `lo..=hi`.
    pub fn max_residual(&self, lo: usize, hi: usize) -> f64 {
        self.design_residual
            [lo.min(self.design_residual.len())..=hi.min(self.design_residual.len() - 1)]
            .iter()
            .fold(0.0, |a: f64, &b| a.max(b))
    }
}

fn design_residual(points: &[Point], band: usize) -> Vec<f64> {
    let size = (band + 1) * (band + 1);
    let rows = par::map_slice(points, |p| {
        let mut y = vec![0.0; size];
        real_sh_all(band, p, &mut y);
        y
    });
    let mut mean = vec![0.0; size];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    let n = points.len() as f64;
    // constants are averaged exactly
    std::iter::once(0.0)
        .chain((1..=band).map(|l| {
            (-(l as i64)..=l as i64)
                .map(|m| (mean[sh_index(l, m)] / n).abs())
                .fold(0.0, f64::max)
        }))
        .collect()
}

/// Golden-angle spiral with its end points at the poles.
pub fn fibonacci_points(n: usize) -> Result<DesignPointSet> {
    if n < 2 {
        return Err(Error::InvalidCount(format!(
            "n = {n}; the spiral needs at least 2 points"
        )));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * k as f64 / (n - 1) as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            Point([r * phi.cos(), r * phi.sin(), z])
        })
        .collect();
    DesignPointSet::from_points(points, DESIGN_BAND)
}

/// Smallest `L` with `exp(-L(L+1) t) <= BANDLIMIT_TOL`.
pub fn heat_bandlimit(t: f64) -> usize {
    bandlimit_for(t, BANDLIMIT_TOL)
}

fn bandlimit_for(t: f64, tol: f64) -> usize {
    let need = -tol.ln() / t;
    let l = ((-1.0 + (1.0 + 4.0 * need).sqrt()) / 2.0).ceil() as usize;
    l.max(1)
}

/// `f_t = sum_{l >= 1} e^{-l(l+1)t} sum_m (sum_k Y_lm(x_k)) Y_lm` in an explicit
/// harmonic basis. The basis must hold every order up to a degree `L` with
/// `e^{-L(L+1)t} <= 1e-6`.
pub fn design_measure_field(
    pts: &DesignPointSet,
    t: f64,
    basis: &SpectralBasis,
) -> Result<ScalarField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "heat time {t} must be positive"
        )));
    }
    let mut degree_count: Vec<usize> = Vec::new();
    for k in 0..basis.len() {
        match basis.label(k) {
            ModeLabel::Harmonic { l, .. } => {
                let l = l as usize;
                if degree_count.len() <= l {
                    degree_count.resize(l + 1, 0);
                }
                degree_count[l] += 1;
            }
            _ => {
                return Err(Error::GridMismatch(
                    "design fields need a spherical-harmonic basis".into(),
                ))
            }
        }
    }
    let complete = degree_count
        .iter()
        .enumerate()
        .take_while(|(l, &c)| c == 2 * l + 1)
        .count();
    if complete == 0 {
        return Err(Error::InsufficientBasis {
            required: 1,
            available: 0,
        });
    }
    let lmax = complete - 1;
    let tail = (-((lmax * (lmax + 1)) as f64) * t).exp();
    if tail > BANDLIMIT_TOL {
        return Err(Error::ResolutionTooCoarse(format!(
            "degree {lmax} leaves exp(-L(L+1)t) = {tail:.2e} at t = {t}; degree {} is needed",
            heat_bandlimit(t)
        )));
    }
    let size = (lmax + 1) * (lmax + 1);
    let mut sums = vec![0.0; size];
    let mut y = vec![0.0; size];
    for p in &pts.points {
        real_sh_all(lmax, p, &mut y);
        for (s, v) in sums.iter_mut().zip(&y) {
            *s += v;
        }
    }
    let coeffs: Vec<f64> = (0..basis.len())
        .map(|k| match basis.label(k) {
            ModeLabel::Harmonic { l, m } if l >= 1 && (l as usize) <= lmax => {
                let l = l as usize;
                (-((l * (l + 1)) as f64) * t).exp() * sums[sh_index(l, m as i64)]
            }
            _ => 0.0,
        })
        .collect();
    basis.synthesize(&coeffs)
}

/// Heat kernel `H(theta) = sum_{l <= L} (2l+1)/(4 pi) e^{-l(l+1)t} P_l(cos theta)`,
/// tabulated with derivatives for cubic Hermite interpolation. Beyond
/// `theta_max` the kernel is below `1e-16` of its peak and reads as zero.
#[derive(Clone, Debug)]
pub struct ZonalKernel {
    t: f64,
    coeffs: Vec<f64>,
    step: f64,
    theta_max: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl ZonalKernel {
    pub fn new(t: f64, lmax: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "heat time {t} must be positive"
            )));
        }
        let coeffs: Vec<f64> = (0..=lmax)
            .map(|l| (2 * l + 1) as f64 / (4.0 * PI) * (-((l * (l + 1)) as f64) * t).exp())
            .collect();
        let theta_max = (14.0 * t.sqrt()).min(PI);
        let step = t.sqrt() / 128.0;
        let len = (theta_max / step).ceil() as usize + 2;
        let table = par::map_range(len, |i| legendre_with_slope(&coeffs, i as f64 * step));
        let (values, slopes) = table.into_iter().unzip();
        Ok(ZonalKernel {
            t,
            coeffs,
            step,
            theta_max,
            values,
            slopes,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lmax(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// Direct Legendre sum.
    pub fn exact(&self, theta: f64) -> f64 {
        legendre_with_slope(&self.coeffs, theta).0
    }

    pub fn eval(&self, theta: f64) -> f64 {
        if theta >= self.theta_max {
            return 0.0;
        }
        let s = theta / self.step;
        let i = s.floor() as usize;
        let u = s - i as f64;
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * p0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * p1
            + (u3 - u2) * m1
    }

    /// `2 pi integral_0^pi H(theta) sin(theta) dtheta` by composite Gauss
    /// quadrature of the direct sum; equals one up to truncation.
    pub fn total_mass(&self) -> f64 {
        let (x, w) = gauss_legendre(12);
        let panel = 0.5 * self.t.sqrt();
        let mut edges = Vec::new();
        let mut a = 0.0;
        while a < self.theta_max {
            edges.push(a);
            a += panel;
        }
        edges.push(self.theta_max);
        let coarse = ((PI - self.theta_max) / 0.05).ceil() as usize;
        for k in 1..=coarse {
            edges.push(self.theta_max + (PI - self.theta_max) * k as f64 / coarse as f64);
        }
        let parts = par::map_range(edges.len() - 1, |k| {
            let (lo, hi) = (edges[k], edges[k + 1]);
            let half = 0.5 * (hi - lo);
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| {
                    let th = lo + half * (xi + 1.0);
                    wi * half * self.exact(th) * th.sin()
                })
                .sum::<f64>()
        });
        2.0 * PI * parts.iter().sum::<f64>()
    }
}

fn legendre_with_slope(coeffs: &[f64], theta: f64) -> (f64, f64) {
    let (u, s) = (theta.cos(), theta.sin());
    // P_l and P'_l by upward recurrence; P'_{l+1} = P'_{l-1} + (2l+1) P_l
    let (mut p0, mut p1) = (1.0, u);
    let (mut d0, mut d1) = (0.0, 1.0);
    let mut val = coeffs[0];
    let mut der = 0.0;
    if coeffs.len() > 1 {
        val += coeffs[1] * p1;
        der += coeffs[1] * d1;
    }
    for (l, c) in coeffs.iter().enumerate().skip(2) {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * u * p1 - (lf - 1.0) * p0) / lf;
        let d2 = d0 + (2.0 * lf - 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
        val += c * p2;
        der += c * d2;
    }
    (val, -s * der)
}

/// Settings of a heat-smear measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PropositionConfig {
    /// `c` in the regime condition `t <= 1/(c n)`.
    pub regime_c: f64,
    /// Rays per point when tracing nodal curves.
    pub rays: usize,
    /// Icosphere level of the fallback mesh measurement.
    pub mesh_level: u32,
    /// Skip ray tracing and always measure on the mesh.
    pub force_mesh: bool,
}

impl Default for PropositionConfig {
    fn default() -> Self {
        PropositionConfig {
            regime_c: DEFAULT_REGIME_C,
            rays: 512,
            mesh_level: 8,
            force_mesh: false,
        }
    }
}

/// Measurements of `f_t` at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropositionRow {
    pub n: usize,
    pub t: f64,
    pub h1_length: f64,
    pub l1: f64,
    pub linf: f64,
    pub in_regime: bool,
    /// `|integral f_t| / ||f_t||_1`.
    pub relative_integral: f64,
    /// Harmonic bandlimit of the synthesis.
    pub lmax: usize,
    /// `polar` when every nodal curve was traced around its point, else `mesh`.
    pub method: String,
}

/// `f_t` evaluated through the kernel table: `sum_k H(d(x_k, y)) - n/(4 pi)`.
struct Smear<'a> {
    kernel: &'a ZonalKernel,
    points: &'a [Point],
    background: f64,
}

impl Smear<'_> {
    fn at(&self, y: &Point, near: &[usize]) -> f64 {
        near.iter()
            .map(|&j| self.kernel.eval(sphere_angle(&self.points[j], y)))
            .sum::<f64>()
            - self.background
    }

    fn at_all(&self, y: &Point) -> f64 {
        let cut = self.kernel.theta_max().cos();
        self.points
            .iter()
            .filter(|p| p.dot(y) > cut - 1e-12)
            .map(|p| self.kernel.eval(sphere_angle(p, y)))
            .sum::<f64>()
            - self.background
    }
}

fn tangent_frame(x: &Point) -> (Point, Point) {
    let a = if x.0[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let d = a[0] * x.0[0] + a[1] * x.0[1] + a[2] * x.0[2];
    let e1 = Point([a[0] - d * x.0[0], a[1] - d * x.0[1], a[2] - d * x.0[2]]).normalized();
    let [x0, x1, x2] = x.0;
    let [a0, a1, a2] = e1.0;
    let e2 = Point([x1 * a2 - x2 * a1, x2 * a0 - x0 * a2, x0 * a1 - x1 * a0]);
    (e1, e2)
}

fn exp_map(x: &Point, e1: &Point, e2: &Point, rho: f64, phi: f64) -> Point {
    let (c, s) = (rho.cos(), rho.sin());
    let (cp, sp) = (phi.cos(), phi.sin());
    Point(std::array::from_fn(|i| {
        c * x.0[i] + s * (cp * e1.0[i] + sp * e2.0[i])
    }))
}

struct Traced {
    length: f64,
    mass: f64,
    peak: f64,
    curve: Vec<Point>,
}

/// Follows the zero of `f_t` along rays from `x_k`; `None` if some ray finds
/// no sign change before the neighbourhood limit.
fn trace_point(
    smear: &Smear,
    k: usize,
    near: &[usize],
    rho_max: f64,
    rays: usize,
) -> Option<Traced> {
    let x = smear.points[k];
    let peak = smear.at(&x, near);
    if !(peak > 0.0) {
        return None;
    }
    let (e1, e2) = tangent_frame(&x);
    let step = smear.kernel.t().sqrt() / 8.0;
    let (gx, gw) = gauss_legendre(32);
    let mut curve = Vec::with_capacity(rays);
    let mut mass = 0.0;
    for r in 0..rays {
        let phi = 2.0 * PI * r as f64 / rays as f64;
        let f = |rho: f64| smear.at(&exp_map(&x, &e1, &e2, rho, phi), near);
        let (mut lo, mut hi) = (0.0, step);
        while f(hi) > 0.0 {
            lo = hi;
            hi += step;
            if hi > rho_max {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho = 0.5 * (lo + hi);
        curve.push(exp_map(&x, &e1, &e2, rho, phi));
        let half = 0.5 * rho;
        let radial: f64 = gx
            .iter()
            .zip(&gw)
            .map(|(xi, wi)| {
                let s = half * (xi + 1.0);
                wi * half * f(s) * s.sin()
            })
            .sum();
        mass += radial * 2.0 * PI / rays as f64;
    }
    let length = (0..rays)
        .map(|r| sphere_angle(&curve[r], &curve[(r + 1) % rays]))
        .sum();
    Some(Traced {
        length,
        mass,
        peak,
        curve,
    })
}

/// Nodal geometry and norms of `f_t` for one design and time, with the
/// nodal segments (great-circle chords) for plotting.
pub fn measure_heat_smear(
    pts: &DesignPointSet,
    t: f64,
    cfg: &PropositionConfig,
) -> Result<(PropositionRow, Vec<(Point, Point)>)> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "heat time {t} must be positive"
        )));
    }
    if cfg.rays < 8 {
        return Err(Error::InvalidArgument(format!(
            "{} rays are too few",
            cfg.rays
        )));
    }
    let lmax = bandlimit_for(t, SYNTHESIS_TOL);
    let kernel = ZonalKernel::new(t, lmax)?;
    let n = pts.n;
    let smear = Smear {
        kernel: &kernel,
        points: &pts.points,
        background: n as f64 / (4.0 * PI),
    };
    let mass = kernel.total_mass();
    // every point contributes `mass`; the background removes exactly n
    let integral = n as f64 * (mass - 1.0);
    let nearest: Vec<f64> = par::map_range(n, |k| {
        (0..n)
            .filter(|&j| j != k)
            .map(|j| sphere_angle(&pts.points[k], &pts.points[j]))
            .fold(PI, f64::min)
    });
    let traced = if cfg.force_mesh {
        vec![None]
    } else {
        par::map_range(n, |k| {
            let rho_max = (0.75 * nearest[k]).min(kernel.theta_max()).min(PI / 2.0);
            let reach = (kernel.theta_max() + rho_max).min(PI);
            let near: Vec<usize> = (0..n)
                .filter(|&j| sphere_angle(&pts.points[k], &pts.points[j]) < reach)
                .collect();
            trace_point(&smear, k, &near, rho_max, cfg.rays)
        })
    };
    let in_regime = t <= 1.0 / (cfg.regime_c * n as f64);
    if traced.iter().all(Option::is_some) {
        let traced: Vec<Traced> = traced.into_iter().map(Option::unwrap).collect();
        let h1 = traced.iter().map(|c| c.length).sum();
        let l1 = 2.0 * traced.iter().map(|c| c.mass).sum::<f64>();
        let linf = traced
            .iter()
            .map(|c| c.peak)
            .fold(smear.background, f64::max);
        let segments = traced
            .iter()
            .flat_map(|c| {
                (0..c.curve.len()).map(move |r| (c.curve[r], c.curve[(r + 1) % c.curve.len()]))
            })
            .collect();
        let row = PropositionRow {
            n,
            t,
            h1_length: h1,
            l1,
            linf,
            in_regime,
            relative_integral: integral.abs() / l1,
            lmax,
            method: "polar".into(),
        };
        return Ok((row, segments));
    }
    let grid = Grid::icosphere(cfg.mesh_level)?;
    let field = ScalarField::new(
        grid.clone(),
        par::map_slice(grid.nodes(), |y| smear.at_all(y)),
    )?;
    let set = nodal_length(&field, DEFAULT_TOL)?;
    let peaks = par::map_slice(&pts.points, |x| smear.at_all(x));
    let linf = peaks.iter().fold(field.max_abs(), |a, &b| a.max(b.abs()));
    let l1 = field.l1();
    let row = PropositionRow {
        n,
        t,
        h1_length: set.total_length(),
        l1,
        linf,
        in_regime,
        relative_integral: integral.abs() / l1,
        lmax,
        method: "mesh".into(),
    };
    Ok((row, set.segments().iter().map(|s| (s.a, s.b)).collect()))
}

/// Per-time measurements and log-log slopes over the in-regime rows.
#[derive(Clone, Debug, Serialize)]
pub struct PropositionReport {
    pub n: usize,
    pub regime_c: f64,
    pub rows: Vec<PropositionRow>,
    pub h1_slope: f64,
    pub l1_slope: f64,
    pub linf_slope: f64,
    /// Largest time up to which every consecutive `H^1` slope stays in `0.5 +- 0.1`.
    pub window_edge: Option<f64>,
    pub max_design_residual: f64,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs [`measure_heat_smear`] at every time and fits power laws in `t` over
/// the rows with `t <= 1/(c n)`. Those rows must span at least a decade.
pub fn proposition_sweep(
    pts: &DesignPointSet,
    t_values: &[f64],
    cfg: &PropositionConfig,
) -> Result<PropositionReport> {
    let mut ts = t_values.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let rows: Vec<PropositionRow> = ts
        .iter()
        .map(|&t| measure_heat_smear(pts, t, cfg).map(|r| r.0))
        .collect::<Result<_>>()?;
    let fit: Vec<&PropositionRow> = rows.iter().filter(|r| r.in_regime).collect();
    if fit.len() < 2 || fit.last().unwrap().t < 10.0 * fit[0].t * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!(
            "{} in-regime times; at least two spanning a decade are needed",
            fit.len()
        )));
    }
    let t: Vec<f64> = fit.iter().map(|r| r.t).collect();
    let col = |f: fn(&PropositionRow) -> f64| fit.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let h1_slope = slope(&t, &col(|r| r.h1_length));
    let l1_slope = slope(&t, &col(|r| r.l1));
    let linf_slope = slope(&t, &col(|r| r.linf));
    let mut window_edge = None;
    for w in rows.windows(2) {
        let s = (w[1].h1_length / w[0].h1_length).ln() / (w[1].t / w[0].t).ln();
        if (s - 0.5).abs() > 0.1 {
            break;
        }
        window_edge = Some(w[1].t);
    }
    Ok(PropositionReport {
        n: pts.n,
        regime_c: cfg.regime_c,
        rows,
        h1_slope,
        l1_slope,
        linf_slope,
        window_edge,
        max_design_residual: pts.max_residual(1, DESIGN_BAND),
    })
}

/// CSV `n,t,h1_length,l1,linf,in_regime`.
pub fn proposition_csv(rows: &[PropositionRow]) -> Csv {
    let mut csv = Csv::new(&["n", "t", "h1_length", "l1", "linf", "in_regime"]);
    for r in rows {
        csv.row([
            r.n.to_string(),
            r.t.to_string(),
            r.h1_length.to_string(),
            r.l1.to_string(),
            r.linf.to_string(),
            r.in_regime.to_string(),
        ]);
    }
    csv
}

/// Nodal segments and design points on an equirectangular map with a 30 degree graticule.
pub fn nodal_map_svg(title: &str, pts: &DesignPointSet, segments: &[(Point, Point)]) -> Svg {
    let (w, h, m, top) = (720.0, 360.0, 20.0, 24.0);
    let mut svg = Svg::new(w + 2.0 * m, h + 2.0 * m + top);
    svg.text(((w + 2.0 * m) / 2.0, 17.0), 14.0, "middle", title);
    let map = |lon: f64, lat: f64| {
        (
            m + lon / (2.0 * PI) * w,
            top + m + (PI / 2.0 - lat) / PI * h,
        )
    };
    for k in 0..=12 {
        let lon = k as f64 * PI / 6.0;
        svg.line(map(lon, -PI / 2.0), map(lon, PI / 2.0), "#cccccc", 0.5);
    }
    for k in 0..=6 {
        let lat = -PI / 2.0 + k as f64 * PI / 6.0;
        svg.line(map(0.0, lat), map(2.0 * PI, lat), "#cccccc", 0.5);
    }
    for p in &pts.points {
        let (lon, lat) = p.lonlat();
        svg.circle(map(lon, lat), 1.2, "#d62728");
    }
    for (a, b) in segments {
        let (p, q) = (a.lonlat(), b.lonlat());
        if (p.0 - q.0).abs() > PI {
            continue;
        }
        svg.line(map(p.0, p.1), map(q.0, q.1), "black", 0.6);
    }
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandlimit_meets_tolerance() {
        for t in [1e-2, 1e-4, 3e-7] {
            let l = heat_bandlimit(t);
            assert!((-((l * (l + 1)) as f64) * t).exp() <= BANDLIMIT_TOL);
            assert!((-(((l - 1) * l) as f64) * t).exp() > BANDLIMIT_TOL || l == 1);
        }
    }

    #[test]
    fn kernel_table_matches_direct_sum() {
        let k = ZonalKernel::new(1e-4, heat_bandlimit(1e-4)).unwrap();
        let peak = k.exact(0.0);
        for i in 0..50 {
            let th = 0.0011 * i as f64 + 1.3e-4;
            assert!((k.eval(th) - k.exact(th)).abs() < 1e-7 * peak, "theta {th}");
        }
        assert!((k.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tangent_frame_is_orthonormal() {
        for x in [
            Point([0.0, 0.0, 1.0]),
            Point([0.6, 0.8, 0.0]),
            Point([0.48, 0.6, 0.64]),
        ] {
            let (a, b) = tangent_frame(&x);
            for (u, v) in [(&a, &b), (&a, &x), (&b, &x)] {
                assert!(u.dot(v).abs() < 1e-14);
            }
            assert!((a.dot(&a) - 1.0).abs() < 1e-14 && (b.dot(&b) - 1.0).abs() < 1e-14);
        }
    }
}
