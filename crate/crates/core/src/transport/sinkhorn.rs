//! Log-domain Sinkhorn iterations with epsilon annealing.

use crate::error::{Error, Result};
use crate::par;

pub(crate) struct SinkhornOutcome {
    /// `<P, C>` of the final plan.
    pub transport_cost: f64,
    /// `sum_i |P 1 - a|_i` after the last column update.
    pub residual: f64,
    pub iterations: usize,
}

fn logsumexp<F: Fn(usize) -> f64>(len: usize, term: F) -> f64 {
    let m = (0..len).map(&term).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (0..len).map(|k| (term(k) - m).exp()).sum::<f64>().ln()
}

/// Entropic transport between probability vectors `a` and `b` with dense
/// cost `c` (`m x n`, row-major). `reg` is the final epsilon in cost units;
/// annealing starts at the largest cost and halves per stage.
pub(crate) fn sinkhorn(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    reg: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornOutcome> {
    let (m, n) = (a.len(), b.len());
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let cmax = c.iter().fold(0.0f64, |x, &y| x.max(y));
    let mut eps = cmax.max(reg);
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut residual;
    loop {
        let last_stage = eps <= reg * (1.0 + 1e-12);
        let stage_tol = if last_stage { tol } else { tol.max(1e-3) };
        loop {
            // f_i = -eps log sum_j b_j exp((g_j - C_ij) / eps)
            f = par::map_range(m, |i| {
                let row = &c[i * n..(i + 1) * n];
                -eps * logsumexp(n, |j| log_b[j] + (g[j] - row[j]) / eps)
            });
            g = par::map_range(n, |j| {
                -eps * logsumexp(m, |i| log_a[i] + (f[i] - c[i * n + j]) / eps)
            });
            iterations += 1;
            if iterations % 10 != 0 && iterations < max_iter {
                continue;
            }
            let row_err = par::map_range(m, |i| {
                let row = &c[i * n..(i + 1) * n];
                let s: f64 = (0..n)
                    .map(|j| (log_a[i] + log_b[j] + (f[i] + g[j] - row[j]) / eps).exp())
                    .sum();
                (s - a[i]).abs()
            });
            residual = row_err.iter().sum();
            if residual <= stage_tol {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::ConvergenceFailure {
                    residual,
                    iterations,
                });
            }
        }
        if last_stage {
            break;
        }
        eps = (eps * 0.5).max(reg);
    }
    let transport_cost: f64 = par::map_range(m, |i| {
        let row = &c[i * n..(i + 1) * n];
        (0..n)
            .map(|j| (log_a[i] + log_b[j] + (f[i] + g[j] - row[j]) / eps).exp() * row[j])
            .sum::<f64>()
    })
    .iter()
    .sum();
    Ok(SinkhornOutcome {
        transport_cost,
        residual,
        iterations,
    })
}
