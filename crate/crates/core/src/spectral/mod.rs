//! Eigenbases of `H = -div(a grad)`, high-frequency projection and heat flow.

mod eigen;
mod operator;
pub mod sphharm;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::domain::{BoundaryCondition, Domain, Grid, Layout, ScalarField};
use crate::error::{Error, Result};
use crate::{par, report};

pub use eigen::{lowest_eigenpairs_sym, Eigenpairs};
pub use operator::{assemble_operator, CsrMatrix, EllipticOperator};

/// Identifies an eigenfunction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModeLabel {
    /// `cos(k.x)` (`sine = false`) or `sin(k.x)` on the torus.
    Trig { k1: i32, k2: i32, sine: bool },
    /// `sin(pi k1 x) sin(pi k2 y)` or `cos(pi k1 x) cos(pi k2 y)` on the square.
    Product { k1: u32, k2: u32 },
    /// Real spherical harmonic of degree `l` and order `m`.
    Harmonic { l: u32, m: i32 },
    /// Output position of a numerical eigensolver.
    Numerical { index: usize },
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub eigenvalue: f64,
    pub function: ScalarField,
    pub label: ModeLabel,
}

/// Eigenpairs sorted by eigenvalue, all on one grid.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    grid: Arc<Grid>,
    pairs: Vec<Eigenpair>,
    orthonormality_residual: f64,
}

impl SpectralBasis {
    fn from_pairs(grid: Arc<Grid>, pairs: Vec<Eigenpair>) -> Self {
        let mut basis = SpectralBasis {
            grid,
            pairs,
            orthonormality_residual: 0.0,
        };
        basis.orthonormality_residual = basis.measure_orthonormality();
        basis
    }

    pub fn domain(&self) -> Domain {
        self.grid.domain()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Eigenpair] {
        &self.pairs
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.pairs[k].eigenvalue
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.eigenvalue).collect()
    }

    pub fn function(&self, k: usize) -> &ScalarField {
        &self.pairs[k].function
    }

    pub fn label(&self, k: usize) -> ModeLabel {
        self.pairs[k].label
    }

    /// Largest deviation of the Gram matrix from the identity (measured on a
    /// subset of at most 256 indices for large bases).
    pub fn orthonormality_residual(&self) -> f64 {
        self.orthonormality_residual
    }

    /// Keeps the first `count` pairs.
    pub fn truncated(&self, count: usize) -> SpectralBasis {
        let mut out = self.clone();
        out.pairs.truncate(count);
        out
    }

    /// Coefficients `<f, phi_k>` for every pair.
    pub fn coefficients(&self, f: &ScalarField) -> Result<Vec<f64>> {
        self.check_grid(f)?;
        Ok(par::map_slice(&self.pairs, |p| f.inner(&p.function)))
    }

    /// `sum_k c_k phi_k` over the first `c.len()` pairs.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<ScalarField> {
        if coeffs.len() > self.len() {
            return Err(Error::InsufficientBasis {
                required: coeffs.len(),
                available: self.len(),
            });
        }
        let mut values = vec![0.0; self.grid.len()];
        let pairs = &self.pairs;
        const CHUNK: usize = 4096;
        par::for_each_chunk_mut(&mut values, CHUNK, |ci, chunk| {
            let start = ci * CHUNK;
            for (c, p) in coeffs.iter().zip(pairs) {
                if *c == 0.0 {
                    continue;
                }
                let src = &p.function.values()[start..start + chunk.len()];
                chunk.iter_mut().zip(src).for_each(|(y, x)| *y += c * x);
            }
        });
        ScalarField::new(self.grid.clone(), values)
    }

    fn check_grid(&self, f: &ScalarField) -> Result<()> {
        if !Arc::ptr_eq(f.grid(), &self.grid) && f.grid().nodes() != self.grid.nodes() {
            return Err(Error::GridMismatch(
                "field and basis live on different grids".into(),
            ));
        }
        Ok(())
    }

    fn measure_orthonormality(&self) -> f64 {
        let n = self.len();
        let idx: Vec<usize> = if n <= 256 {
            (0..n).collect()
        } else {
            let mut v: Vec<usize> = (0..256).map(|i| i * (n - 1) / 255).collect();
            v.dedup();
            v
        };
        let rows = par::map_slice(&idx, |&i| {
            let fi = &self.pairs[i].function;
            idx.iter()
                .filter(|&&j| j >= i)
                .map(|&j| {
                    let g = fi.inner(&self.pairs[j].function);
                    (g - if i == j { 1.0 } else { 0.0 }).abs()
                })
                .fold(0.0f64, f64::max)
        });
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Writes `manifest.json` (`{domain, count, eigenvalues}`) and one
    /// `eigenfunction_KKKK.csv` per pair into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct Manifest<'a> {
            domain: Domain,
            count: usize,
            eigenvalues: Vec<f64>,
            labels: Vec<ModeLabel>,
            orthonormality_residual: f64,
            layout: &'a Layout,
        }
        let manifest = Manifest {
            domain: self.domain(),
            count: self.len(),
            eigenvalues: self.eigenvalues(),
            labels: self.pairs.iter().map(|p| p.label).collect(),
            orthonormality_residual: self.orthonormality_residual,
            layout: self.grid.layout(),
        };
        report::write_json(&dir.join("manifest.json"), &manifest)?;
        for (k, p) in self.pairs.iter().enumerate() {
            let mut buf = Vec::new();
            p.function.write_csv(&mut buf)?;
            report::write_atomic(&dir.join(format!("eigenfunction_{k:04}.csv")), &buf)?;
        }
        Ok(())
    }
}

fn normalized(f: ScalarField) -> ScalarField {
    let n = f.l2();
    f.scaled(1.0 / n)
}

/// Closed-form eigenbasis of the Laplacian (`a = 1`) on the grid's domain.
///
/// Modes are ordered by eigenvalue, ties broken lexicographically on the mode
/// indices. Only modes with frequency at most `N/4` per axis (degree at most
/// `n_lat/2` on the sphere) are available; more are refused.
pub fn explicit_basis(grid: &Arc<Grid>, count: usize) -> Result<SpectralBasis> {
    if count == 0 {
        return Err(Error::InvalidCount(
            "explicit basis needs count >= 1".into(),
        ));
    }
    let pairs = match grid.domain() {
        Domain::Torus { side } => torus_modes(grid, side, count)?,
        Domain::Square { bc } => square_modes(grid, bc, count)?,
        Domain::Sphere => sphere_modes(grid, count)?,
    };
    Ok(SpectralBasis::from_pairs(grid.clone(), pairs))
}

fn too_coarse(count: usize, available: usize, grid: &Grid) -> Error {
    Error::ResolutionTooCoarse(format!(
        "{count} modes requested but resolution {} resolves only {available}",
        grid.resolution()
    ))
}

fn torus_modes(grid: &Arc<Grid>, side: f64, count: usize) -> Result<Vec<Eigenpair>> {
    let kmax = (grid.resolution() / 4) as i32;
    let mut labels = vec![(0i32, 0i32, false)];
    for k1 in 0..=kmax {
        for k2 in -kmax..=kmax {
            if (k1 == 0 && k2 <= 0) || k1 * k1 + k2 * k2 > kmax * kmax {
                continue;
            }
            labels.push((k1, k2, false));
            labels.push((k1, k2, true));
        }
    }
    labels.sort_by_key(|&(a, b, s)| (a * a + b * b, a, b, s));
    if count > labels.len() {
        return Err(too_coarse(count, labels.len(), grid));
    }
    let w = 2.0 * PI / side;
    Ok(par::map_slice(&labels[..count], |&(k1, k2, sine)| {
        let (a, b) = (w * k1 as f64, w * k2 as f64);
        let f = ScalarField::from_fn(grid, |p| {
            let phase = a * p.x() + b * p.y();
            if sine {
                phase.sin()
            } else {
                phase.cos()
            }
        })
        .expect("finite mode");
        Eigenpair {
            eigenvalue: w * w * (k1 * k1 + k2 * k2) as f64,
            function: normalized(f),
            label: ModeLabel::Trig { k1, k2, sine },
        }
    }))
}

fn square_modes(grid: &Arc<Grid>, bc: BoundaryCondition, count: usize) -> Result<Vec<Eigenpair>> {
    let kmax = (grid.resolution() / 4) as u32;
    let lo = if bc == BoundaryCondition::Dirichlet {
        1
    } else {
        0
    };
    let mut labels = Vec::new();
    for k1 in lo..=kmax {
        for k2 in lo..=kmax {
            if k1 * k1 + k2 * k2 <= kmax * kmax {
                labels.push((k1, k2));
            }
        }
    }
    labels.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
    if count > labels.len() {
        return Err(too_coarse(count, labels.len(), grid));
    }
    Ok(par::map_slice(&labels[..count], |&(k1, k2)| {
        let (a, b) = (PI * k1 as f64, PI * k2 as f64);
        let f = ScalarField::from_fn(grid, |p| match bc {
            BoundaryCondition::Dirichlet => (a * p.x()).sin() * (b * p.y()).sin(),
            BoundaryCondition::Neumann => (a * p.x()).cos() * (b * p.y()).cos(),
        })
        .expect("finite mode");
        Eigenpair {
            eigenvalue: PI * PI * (k1 * k1 + k2 * k2) as f64,
            function: normalized(f),
            label: ModeLabel::Product { k1, k2 },
        }
    }))
}

fn sphere_modes(grid: &Arc<Grid>, count: usize) -> Result<Vec<Eigenpair>> {
    let lmax_avail = match grid.layout() {
        Layout::LatLon { n_lat, .. } => n_lat / 2,
        _ => grid.resolution() / 2,
    };
    let available = (lmax_avail + 1) * (lmax_avail + 1);
    if count > available {
        return Err(too_coarse(count, available, grid));
    }
    let lmax = (0..).find(|l| (l + 1) * (l + 1) >= count).unwrap();
    let width = (lmax + 1) * (lmax + 1);
    let table: Vec<Vec<f64>> = par::map_slice(grid.nodes(), |p| {
        let mut out = vec![0.0; width];
        sphharm::real_sh_all(lmax, p, &mut out);
        out
    });
    let mut pairs = Vec::with_capacity(count);
    'outer: for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            if pairs.len() == count {
                break 'outer;
            }
            let k = sphharm::sh_index(l, m);
            let values = table.iter().map(|row| row[k]).collect();
            let f = ScalarField::new(grid.clone(), values)?;
            pairs.push(Eigenpair {
                eigenvalue: (l * (l + 1)) as f64,
                function: normalized(f),
                label: ModeLabel::Harmonic {
                    l: l as u32,
                    m: m as i32,
                },
            });
        }
    }
    Ok(pairs)
}

/// The `count` smallest eigenpairs of a discretized operator.
///
/// Eigenfunctions are normalized in the quadrature L2 norm; `tol` bounds the
/// residual of each pair relative to `max(1, lambda)`.
pub fn lowest_eigenpairs(op: &EllipticOperator, count: usize, tol: f64) -> Result<SpectralBasis> {
    let n = op.grid().resolution();
    if count == 0 || count as f64 > 0.05 * (n * n) as f64 {
        return Err(Error::InvalidCount(format!(
            "{count} eigenpairs requested on an {n}x{n} lattice (at most {})",
            (0.05 * (n * n) as f64) as usize
        )));
    }
    let eig = lowest_eigenpairs_sym(op.matrix(), count, tol, 0x5eed)?;
    let pairs = eig
        .values
        .iter()
        .zip(&eig.vectors)
        .enumerate()
        .map(|(index, (&lambda, v))| Eigenpair {
            eigenvalue: lambda.max(0.0),
            function: op.to_field(v),
            label: ModeLabel::Numerical { index },
        })
        .collect();
    Ok(SpectralBasis::from_pairs(op.grid().clone(), pairs))
}

/// Removes the components of `f` along the first `n` eigenfunctions.
pub fn project_high(f: &ScalarField, basis: &SpectralBasis, n: usize) -> Result<ScalarField> {
    if basis.len() < n {
        return Err(Error::InsufficientBasis {
            required: n,
            available: basis.len(),
        });
    }
    basis.check_grid(f)?;
    let mut g = f.clone();
    // two passes keep the residual inner products at round-off level
    for _ in 0..2 {
        let low = basis.truncated(n);
        let c = low.coefficients(&g)?;
        let proj = low.synthesize(&c)?;
        g = g.axpy(-1.0, &proj)?;
    }
    Ok(g)
}

/// Result of spectral heat flow.
#[derive(Clone, Debug)]
pub struct HeatFlow {
    pub field: ScalarField,
    /// Fraction of `||f||_2^2` not captured by the basis.
    pub tail_fraction: f64,
    /// Set when the tail fraction exceeds 1%.
    pub warning: Option<String>,
}

/// `sum_k exp(-lambda_k t) <f, phi_k> phi_k`.
pub fn heat_flow(f: &ScalarField, basis: &SpectralBasis, t: f64) -> Result<HeatFlow> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("heat flow time {t}")));
    }
    let c = basis.coefficients(f)?;
    let energy = f.l2().powi(2);
    let captured: f64 = c.iter().map(|x| x * x).sum();
    let tail_fraction = if energy > 0.0 {
        ((energy - captured) / energy).max(0.0)
    } else {
        0.0
    };
    let decayed: Vec<f64> = c
        .iter()
        .zip(basis.pairs())
        .map(|(c, p)| c * (-p.eigenvalue * t).exp())
        .collect();
    let field = basis.synthesize(&decayed)?;
    let warning = (tail_fraction > 0.01).then(|| {
        format!(
            "bandlimit exceeded: {:.2}% of the energy lies outside the basis",
            100.0 * tail_fraction
        )
    });
    Ok(HeatFlow {
        field,
        tail_fraction,
        warning,
    })
}

/// Unit-L2 field with standard Gaussian coefficients on modes `n .. n + bandwidth`.
pub fn random_high_frequency(
    basis: &SpectralBasis,
    n: usize,
    bandwidth: usize,
    seed: u64,
) -> Result<ScalarField> {
    if bandwidth == 0 {
        return Err(Error::InvalidCount("bandwidth must be positive".into()));
    }
    if n + bandwidth > basis.len() {
        return Err(Error::InsufficientBasis {
            required: n + bandwidth,
            available: basis.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![0.0; n + bandwidth];
    for c in &mut coeffs[n..] {
        *c = StandardNormal.sample(&mut rng);
    }
    let f = basis.synthesize(&coeffs)?;
    let f = project_high(&f, basis, n)?;
    Ok(normalized(f))
}
