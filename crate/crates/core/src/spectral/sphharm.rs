//! Real orthonormal spherical harmonics and zonal Legendre sums.
//!
//! Harmonics are indexed by `l * l + l + m` for `-l <= m <= l`. The associated
//! Legendre functions are fully normalized so that `Y_lm` has unit L2 norm on
//! the unit sphere; the Condon-Shortley phase is omitted.

use std::f64::consts::PI;

use crate::domain::Point;

#[inline]
pub fn sh_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// All `Y_lm(p)` for `l <= lmax`, written into `out` (length `(lmax + 1)^2`).
pub fn real_sh_all(lmax: usize, p: &Point, out: &mut [f64]) {
    debug_assert!(out.len() >= (lmax + 1) * (lmax + 1));
    let [x, y, z] = p.0;
    let ct = z.clamp(-1.0, 1.0);
    let st = (x * x + y * y).sqrt();
    let (cphi, sphi) = if st > 0.0 {
        (x / st, y / st)
    } else {
        (1.0, 0.0)
    };

    // cos(m phi), sin(m phi) by recurrence
    let mut cm = vec![0.0; lmax + 1];
    let mut sm = vec![0.0; lmax + 1];
    cm[0] = 1.0;
    for m in 1..=lmax {
        cm[m] = cm[m - 1] * cphi - sm[m - 1] * sphi;
        sm[m] = sm[m - 1] * cphi + cm[m - 1] * sphi;
    }

    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        let scale = if m == 0 {
            1.0
        } else {
            std::f64::consts::SQRT_2
        };
        let emit = |l: usize, val: f64, out: &mut [f64]| {
            if m == 0 {
                out[sh_index(l, 0)] = val;
            } else {
                out[sh_index(l, m as i64)] = scale * val * cm[m];
                out[sh_index(l, -(m as i64))] = scale * val * sm[m];
            }
        };
        emit(m, pmm, out);
        if m == lmax {
            break;
        }
        let mut p_prev = pmm;
        let mut p_cur = ((2 * m + 3) as f64).sqrt() * ct * pmm;
        emit(m + 1, p_cur, out);
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            let p_next = a * (ct * p_cur - b * p_prev);
            p_prev = p_cur;
            p_cur = p_next;
            emit(l, p_cur, out);
        }
    }
}

/// Evaluates `sum_l coeffs[l] * P_l(u)` by upward recurrence.
pub fn legendre_series(coeffs: &[f64], u: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let mut sum = coeffs[0];
    let (mut p0, mut p1) = (1.0, u);
    for (l, c) in coeffs.iter().enumerate().skip(1) {
        if l > 1 {
            let lf = l as f64;
            let p2 = ((2.0 * lf - 1.0) * u * p1 - (lf - 1.0) * p0) / lf;
            p0 = p1;
            p1 = p2;
        }
        sum += c * p1;
    }
    sum
}
