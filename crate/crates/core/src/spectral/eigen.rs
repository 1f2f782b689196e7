//! Shift-inverted Lanczos for the lowest eigenpairs of a sparse SPD-plus-shift matrix.
//!
//! The matrix `S + sigma I` is reordered by reverse Cuthill-McKee and factored
//! by a skyline (envelope) Cholesky; Lanczos with full reorthogonalization then
//! runs on `(S + sigma I)^{-1}`, whose largest eigenvalues are the smallest of
//! `S`. Multiplicities are recovered by restarting from fresh random vectors
//! orthogonal to every locked eigenvector until a restart finds nothing below
//! the current candidates.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::operator::CsrMatrix;
use crate::error::{Error, Result};

/// Reverse Cuthill-McKee ordering; `perm[new] = old`.
pub(crate) fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.dim();
    let degree: Vec<usize> = (0..n)
        .map(|r| m.row(r).filter(|(c, _)| *c != r).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = m
                .row(v)
                .map(|(c, _)| c)
                .filter(|&c| c != v && !visited[c])
                .collect();
            nbrs.sort_by_key(|&c| (degree[c], c));
            for c in nbrs {
                visited[c] = true;
                order.push(c);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `L` of a permuted symmetric matrix.
pub(crate) struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors `m + shift * I`.
    pub fn new(m: &CsrMatrix, shift: f64) -> Result<Self> {
        let n = m.dim();
        let perm = reverse_cuthill_mckee(m);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let r = inv[old];
            for (c, _) in m.row(old) {
                let cn = inv[c];
                if cn < first[r] {
                    first[r] = cn;
                }
            }
        }
        let mut offset = vec![0; n + 1];
        for r in 0..n {
            offset[r + 1] = offset[r] + (r - first[r] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for old in 0..n {
            let r = inv[old];
            for (c, v) in m.row(old) {
                let cn = inv[c];
                if cn <= r {
                    data[offset[r] + cn - first[r]] += v;
                }
            }
            data[offset[r] + r - first[r]] += shift;
        }
        for r in 0..n {
            let fr = first[r];
            for c in fr..r {
                let fc = first[c];
                let k0 = fr.max(fc);
                let (row_r, row_c) = if offset[c] < offset[r] {
                    let (lo, hi) = data.split_at_mut(offset[r]);
                    (
                        &mut hi[..offset[r + 1] - offset[r]],
                        &lo[offset[c]..offset[c + 1]],
                    )
                } else {
                    unreachable!("rows are stored in order")
                };
                let dot: f64 = row_r[k0 - fr..c - fr]
                    .iter()
                    .zip(&row_c[k0 - fc..c - fc])
                    .map(|(a, b)| a * b)
                    .sum();
                let diag_c = row_c[c - fc];
                row_r[c - fr] = (row_r[c - fr] - dot) / diag_c;
            }
            let row_r = &mut data[offset[r]..offset[r + 1]];
            let dot: f64 = row_r[..r - fr].iter().map(|a| a * a).sum();
            let d = row_r[r - fr] - dot;
            if !(d > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "shifted operator is not positive definite (pivot {d:.3e} at row {r})"
                )));
            }
            row_r[r - fr] = d.sqrt();
        }
        Ok(Self {
            perm,
            first,
            offset,
            data,
        })
    }

    /// Solves `(m + shift I) x = b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for r in 0..n {
            let fr = self.first[r];
            let row = &self.data[self.offset[r]..self.offset[r + 1]];
            let dot: f64 = row[..r - fr]
                .iter()
                .zip(&y[fr..r])
                .map(|(a, b)| a * b)
                .sum();
            y[r] = (y[r] - dot) / row[r - fr];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let row = &self.data[self.offset[r]..self.offset[r + 1]];
            y[r] /= row[r - fr];
            let yr = y[r];
            for (k, a) in (fr..r).zip(&row[..r - fr]) {
                y[k] -= a * yr;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn normalize(w: &mut [f64]) -> f64 {
    let n = dot(w, w).sqrt();
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lowest `count` eigenpairs of the symmetric matrix `m`.
///
/// `tol` bounds `||m v - lambda v||` relative to `max(1, |lambda|)` for unit `v`.
pub fn lowest_eigenpairs_sym(
    m: &CsrMatrix,
    count: usize,
    tol: f64,
    seed: u64,
) -> Result<Eigenpairs> {
    let n = m.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidCount(format!(
            "{count} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let max_diag = m.diagonal().into_iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let shift = 1e-6 * max_diag.max(1e-300);
    let chol = SkylineCholesky::new(m, shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let max_rounds = 2 * count + 8;
    let mut tmp = vec![0.0; n];

    for _round in 0..max_rounds {
        let free = n - locked.len();
        if free == 0 {
            break;
        }
        let steps = free.min(2 * count + 40);
        let mut q: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut q, &locked);
        if normalize(&mut q) == 0.0 {
            break;
        }
        let mut basis = vec![q];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut last_beta = 0.0;
        for j in 0..steps {
            chol.solve(&basis[j], &mut tmp);
            let mut w = tmp.clone();
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, &locked);
            let b = normalize(&mut w);
            iterations += 1;
            last_beta = b;
            if b <= 1e-13 * a.abs().max(1e-300) || j + 1 == steps {
                break;
            }
            beta.push(b);
            basis.push(w);
        }
        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        let threshold = if locked_vals.len() >= count {
            let mut v = locked_vals.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Some(v[count - 1])
        } else {
            None
        };
        let mut added = 0;
        for &i in &order {
            let theta = eig.eigenvalues[i];
            if theta <= 0.0 {
                continue;
            }
            let resid = (last_beta * eig.eigenvectors[(k - 1, i)]).abs();
            if resid > 1e-8 * theta {
                continue;
            }
            let lambda = 1.0 / theta - shift;
            if let Some(th) = threshold {
                if lambda >= th - 1e-9 * th.abs().max(1.0) {
                    continue;
                }
            }
            let mut v = vec![0.0; n];
            for (c, qb) in basis.iter().enumerate().take(k) {
                let s = eig.eigenvectors[(c, i)];
                v.iter_mut().zip(qb).for_each(|(x, y)| *x += s * y);
            }
            orthogonalize(&mut v, &locked);
            if normalize(&mut v) < 0.5 {
                continue;
            }
            locked.push(v);
            locked_vals.push(lambda);
            added += 1;
            if locked.len() >= count + 4 {
                break;
            }
        }
        if added == 0 && locked_vals.len() >= count {
            break;
        }
    }
    if locked.len() < count {
        return Err(Error::ConvergenceFailure {
            residual: f64::INFINITY,
            iterations,
        });
    }

    // Block inverse iteration polishes pairs that Lanczos locked loosely.
    let mut ritz = rayleigh_ritz(m, &locked);
    for _ in 0..60 {
        if worst_residual(&ritz, count) <= tol {
            break;
        }
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(ritz.vectors.len());
        for v in &ritz.vectors {
            let mut w = vec![0.0; n];
            chol.solve(v, &mut w);
            orthogonalize(&mut w, &next);
            normalize(&mut w);
            next.push(w);
        }
        ritz = rayleigh_ritz(m, &next);
        iterations += 1;
    }
    let worst = worst_residual(&ritz, count);
    if worst > tol {
        return Err(Error::ConvergenceFailure {
            residual: worst,
            iterations,
        });
    }
    ritz.values.truncate(count);
    ritz.vectors.truncate(count);
    ritz.residuals.truncate(count);
    ritz.iterations = iterations;
    Ok(ritz)
}

fn worst_residual(e: &Eigenpairs, count: usize) -> f64 {
    e.values
        .iter()
        .zip(&e.residuals)
        .take(count)
        .map(|(l, r)| r / l.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Ritz pairs of `m` on the span of the orthonormal `basis`, ascending, with
/// the largest-magnitude component of each vector made positive.
fn rayleigh_ritz(m: &CsrMatrix, basis: &[Vec<f64>]) -> Eigenpairs {
    let n = m.dim();
    let r = basis.len();
    let sv: Vec<Vec<f64>> = basis
        .iter()
        .map(|v| {
            let mut y = vec![0.0; n];
            m.matvec(v, &mut y);
            y
        })
        .collect();
    let mut h = DMatrix::<f64>::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            let s = 0.5 * (dot(&basis[i], &sv[j]) + dot(&basis[j], &sv[i]));
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut out = Eigenpairs {
        values: Vec::new(),
        vectors: Vec::new(),
        residuals: Vec::new(),
        iterations: 0,
    };
    for &i in &order {
        let mut v = vec![0.0; n];
        let mut mv = vec![0.0; n];
        for c in 0..r {
            let s = eig.eigenvectors[(c, i)];
            v.iter_mut().zip(&basis[c]).for_each(|(x, y)| *x += s * y);
            mv.iter_mut().zip(&sv[c]).for_each(|(x, y)| *x += s * y);
        }
        let nv = normalize(&mut v);
        mv.iter_mut().for_each(|x| *x /= nv);
        let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| {
            if x.abs() > bv + 1e-12 {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
            mv.iter_mut().for_each(|x| *x = -*x);
        }
        let lambda = eig.eigenvalues[i];
        let res = mv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        out.values.push(lambda);
        out.vectors.push(v);
        out.residuals.push(res);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn cholesky_solves() {
        let m = path_laplacian(50);
        let chol = SkylineCholesky::new(&m, 0.0).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 50];
        m.matvec(&x, &mut b);
        let mut y = vec![0.0; 50];
        chol.solve(&b, &mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn path_spectrum() {
        let n = 200;
        let m = path_laplacian(n);
        let eig = lowest_eigenpairs_sym(&m, 6, 1e-8, 1).unwrap();
        for (k, v) in eig.values.iter().enumerate() {
            let exact = 4.0
                * (std::f64::consts::PI * (k + 1) as f64 / (2.0 * (n + 1) as f64))
                    .sin()
                    .powi(2);
            assert!(
                (v - exact).abs() < 1e-10 * exact.max(1.0),
                "{k}: {v} vs {exact}"
            );
        }
    }

    #[test]
    fn recovers_multiplicity() {
        // block diagonal with two identical paths: every eigenvalue is double
        let n = 60;
        let mut t = Vec::new();
        for off in [0, n] {
            for i in 0..n {
                t.push((off + i, off + i, 2.0));
                if i + 1 < n {
                    t.push((off + i, off + i + 1, -1.0));
                    t.push((off + i + 1, off + i, -1.0));
                }
            }
        }
        let m = CsrMatrix::from_triplets(2 * n, t);
        let eig = lowest_eigenpairs_sym(&m, 4, 1e-8, 3).unwrap();
        assert!((eig.values[0] - eig.values[1]).abs() < 1e-10);
        assert!((eig.values[2] - eig.values[3]).abs() < 1e-10);
        assert!(eig.values[2] > eig.values[1] + 1e-4);
    }
}
