//! Five-point discretization of `H = -div(a grad)` on planar lattices.

use std::sync::Arc;

use crate::domain::{BoundaryCondition, Domain, Grid, ScalarField};
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b]
            .iter()
            .copied()
            .zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(cc, _)| *cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            y[r] = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }
}

/// Discrete `-div(a grad)` with its lumped mass matrix.
///
/// The generalized problem `K u = lambda M u` is stored in the symmetric form
/// `S = M^{-1/2} K M^{-1/2}` over the unknown nodes; eigenvectors `v` of `S`
/// map back to grid functions `u = M^{-1/2} v` with unit quadrature L2 norm.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    coefficient: ScalarField,
    unknowns: Vec<usize>,
    stiffness: CsrMatrix,
    symmetric: CsrMatrix,
    inv_sqrt_mass: Vec<f64>,
}

impl EllipticOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        self.coefficient.grid()
    }

    pub fn coefficient(&self) -> &ScalarField {
        &self.coefficient
    }

    pub fn boundary_condition(&self) -> Option<BoundaryCondition> {
        self.coefficient.domain().boundary_condition()
    }

    /// Grid node index of each unknown.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    /// Stiffness `K` over the unknowns (row sums vanish for Neumann and periodic problems).
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// `M^{-1/2} K M^{-1/2}`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.symmetric
    }

    pub fn inv_sqrt_mass(&self) -> &[f64] {
        &self.inv_sqrt_mass
    }

    pub fn min_coefficient(&self) -> f64 {
        self.coefficient
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Lifts a vector over the unknowns (symmetric form) to a grid field.
    pub fn to_field(&self, v: &[f64]) -> ScalarField {
        let mut values = vec![0.0; self.grid().len()];
        for ((&node, &x), &s) in self.unknowns.iter().zip(v).zip(&self.inv_sqrt_mass) {
            values[node] = x * s;
        }
        ScalarField::new(self.grid().clone(), values).expect("finite eigenvector")
    }
}

/// Assembles the operator for coefficient `a` on a planar lattice.
///
/// Edge coefficients are harmonic means of the nodal values. The boundary
/// condition is the one carried by the domain: Dirichlet nodes are eliminated,
/// Neumann boundaries use half dual cells (mirrored ghost nodes), and the torus
/// wraps periodically.
pub fn assemble_operator(a: &ScalarField) -> Result<EllipticOperator> {
    let grid = a.grid().clone();
    let n = grid.lattice_size().ok_or_else(|| {
        Error::GridMismatch("the elliptic operator needs a planar lattice".into())
    })?;
    let min = a.values().iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::EllipticityViolation { min });
    }
    let domain = grid.domain();
    let periodic = matches!(domain, Domain::Torus { .. });
    let dirichlet = domain.boundary_condition() == Some(BoundaryCondition::Dirichlet);

    let unknowns: Vec<usize> = (0..grid.len())
        .filter(|&i| !(dirichlet && grid.is_boundary(i)))
        .collect();
    let mut slot = vec![usize::MAX; grid.len()];
    for (k, &node) in unknowns.iter().enumerate() {
        slot[node] = k;
    }

    let av = a.values();
    let harmonic = |p: usize, q: usize| 2.0 * av[p] * av[q] / (av[p] + av[q]);
    let mut trip = Vec::with_capacity(5 * unknowns.len());
    let mut add_edge = |p: usize, q: usize, factor: f64| {
        let w = factor * harmonic(p, q);
        let (sp, sq) = (slot[p], slot[q]);
        if sp != usize::MAX {
            trip.push((sp, sp, w));
        }
        if sq != usize::MAX {
            trip.push((sq, sq, w));
        }
        if sp != usize::MAX && sq != usize::MAX {
            trip.push((sp, sq, -w));
            trip.push((sq, sp, -w));
        }
    };
    let idx = |i: usize, j: usize| j * n + i;
    let limit = if periodic { n } else { n - 1 };
    for j in 0..n {
        for i in 0..limit {
            let (p, q) = (idx(i, j), idx((i + 1) % n, j));
            let on_edge = !periodic && (j == 0 || j == n - 1);
            if dirichlet && on_edge {
                continue;
            }
            add_edge(p, q, if on_edge { 0.5 } else { 1.0 });
        }
    }
    for i in 0..n {
        for j in 0..limit {
            let (p, q) = (idx(i, j), idx(i, (j + 1) % n));
            let on_edge = !periodic && (i == 0 || i == n - 1);
            if dirichlet && on_edge {
                continue;
            }
            add_edge(p, q, if on_edge { 0.5 } else { 1.0 });
        }
    }
    let dim = unknowns.len();
    let stiffness = CsrMatrix::from_triplets(dim, trip);
    let inv_sqrt_mass: Vec<f64> = unknowns
        .iter()
        .map(|&k| 1.0 / grid.weights()[k].sqrt())
        .collect();
    let mut sym = Vec::with_capacity(stiffness.nnz());
    for r in 0..dim {
        for (c, v) in stiffness.row(r) {
            sym.push((r, c, v * inv_sqrt_mass[r] * inv_sqrt_mass[c]));
        }
    }
    let symmetric = CsrMatrix::from_triplets(dim, sym);
    Ok(EllipticOperator {
        coefficient: a.clone(),
        unknowns,
        stiffness,
        symmetric,
        inv_sqrt_mass,
    })
}
