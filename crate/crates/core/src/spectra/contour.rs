//! Eigenvalue counting through `trace Π = (1/2πi) ∮ trace (z - A)^{-1} dz`.
//!
//! The integrand is evaluated as `d/dz log det(zI - H)` with `H` an upper
//! Hessenberg matrix similar to `A`: Gaussian elimination with partial
//! pivoting on `zI - H` carries first-order dual parts, and the log-derivative
//! is the sum of `p'/p` over the pivots. Each edge of the rectangle is
//! integrated with Gauss–Legendre quadrature, which keeps spectral accuracy up
//! to the corners.

use std::f64::consts::PI;

use faer::{c64, Mat};
use serde::Serialize;

use super::Rect;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::operators::DiscreteOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourCount {
    pub count: i64,
    pub trace: c64,
    /// `|trace Π - count|`.
    pub trace_residual: f64,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { t } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm1) / (t * t - 1.0);
            let step = p / dp;
            t -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Counts eigenvalues of `A` in the closed rectangle `rect`.
///
/// `nodes_per_edge` Gauss–Legendre points are placed on each side.
pub fn contour_projector_count(a: &DiscreteOperator, rect: &Rect, nodes_per_edge: usize) -> Result<ContourCount> {
    count_in_rect(&a.matrix, rect, nodes_per_edge, Execution::available())
}

pub fn count_in_rect(m: &Mat<c64>, rect: &Rect, nodes_per_edge: usize, mode: Execution) -> Result<ContourCount> {
    if nodes_per_edge == 0 || !(rect.re_min < rect.re_max && rect.im_min < rect.im_max) {
        return Err(Error::InvalidArgument("contour needs a nondegenerate rectangle and nodes".into()));
    }
    let h = Hessenberg::new(m);
    let corners = [
        c64::new(rect.re_min, rect.im_min),
        c64::new(rect.re_max, rect.im_min),
        c64::new(rect.re_max, rect.im_max),
        c64::new(rect.re_min, rect.im_max),
    ];
    let (t, w) = gauss_legendre(nodes_per_edge);
    let mut samples = Vec::with_capacity(4 * nodes_per_edge);
    for e in 0..4 {
        let (z0, z1) = (corners[e], corners[(e + 1) % 4]);
        let (mid, half) = ((z0 + z1) * 0.5, (z1 - z0) * 0.5);
        for k in 0..nodes_per_edge {
            samples.push((mid + half * t[k], half * w[k]));
        }
    }
    let values = exec::map(mode, &samples, |&(z, _)| h.log_det_derivative(z));
    let mut integral = c64::new(0.0, 0.0);
    for (v, (_, weight)) in values.into_iter().zip(&samples) {
        integral += v? * weight;
    }
    let trace = integral / c64::new(0.0, 2.0 * PI);
    let count = trace.re.round() as i64;
    Ok(ContourCount { count, trace, trace_residual: (trace - c64::new(count as f64, 0.0)).norm() })
}

/// Upper Hessenberg matrix stored by rows, each row trimmed after its last nonzero.
struct Hessenberg {
    rows: Vec<Vec<c64>>,
    scale: f64,
}

impl Hessenberg {
    fn new(m: &Mat<c64>) -> Self {
        let n = m.nrows();
        let is_hessenberg = (0..n).all(|i| (0..i.saturating_sub(1)).all(|j| m[(i, j)] == c64::new(0.0, 0.0)));
        let h = if is_hessenberg { m.clone() } else { householder_hessenberg(m) };
        let scale = (0..n)
            .map(|i| (0..n).map(|j| h[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let rows = (0..n)
            .map(|i| {
                let first = i.saturating_sub(1);
                let last = (first..n).rev().find(|&j| h[(i, j)] != c64::new(0.0, 0.0)).unwrap_or(first);
                (first..=last).map(|j| h[(i, j)]).collect()
            })
            .collect();
        Self { rows, scale }
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    /// Entry `(i, j)` of `zI - H` as a dual number `(value, d/dz)`.
    fn shifted(&self, i: usize, j: usize, z: c64) -> (c64, c64) {
        let first = i.saturating_sub(1);
        let h = if j >= first { self.rows[i].get(j - first).copied().unwrap_or_default() } else { c64::default() };
        if i == j {
            (z - h, c64::new(1.0, 0.0))
        } else {
            (-h, c64::default())
        }
    }

    fn row_end(&self, i: usize) -> usize {
        (i.saturating_sub(1) + self.rows[i].len()).max(i + 1)
    }

    /// `trace (z - H)^{-1}`.
    fn log_det_derivative(&self, z: c64) -> Result<c64> {
        let n = self.n();
        let tol = 1e-13 * (self.scale + z.norm());
        // `cur` holds row k of the partially eliminated matrix, columns k..end.
        let mut end = self.row_end(0).min(n);
        let mut cur: Vec<(c64, c64)> = (0..end).map(|j| self.shifted(0, j, z)).collect();
        let mut sum = c64::new(0.0, 0.0);
        for k in 0..n {
            if k + 1 == n {
                let (pv, pd) = cur[0];
                if pv.norm() <= tol {
                    return Err(Error::ContourTouchesSpectrum { re: z.re, im: z.im });
                }
                sum += pd / pv;
                break;
            }
            let next_end = self.row_end(k + 1).max(end).min(n);
            let mut other: Vec<(c64, c64)> = (k..next_end).map(|j| self.shifted(k + 1, j, z)).collect();
            cur.resize(next_end - k, (c64::default(), c64::default()));
            end = next_end;
            if other[0].0.norm() > cur[0].0.norm() {
                std::mem::swap(&mut cur, &mut other);
            }
            let (pv, pd) = cur[0];
            if pv.norm() <= tol {
                return Err(Error::ContourTouchesSpectrum { re: z.re, im: z.im });
            }
            sum += pd / pv;
            let (ov, od) = other[0];
            let fv = ov / pv;
            let fd = (od * pv - ov * pd) / (pv * pv);
            cur = (1..cur.len())
                .map(|j| {
                    let (rv, rd) = cur[j];
                    let (xv, xd) = other[j];
                    (xv - fv * rv, xd - (fd * rv + fv * rd))
                })
                .collect();
        }
        Ok(sum)
    }
}

/// Unitary similarity to upper Hessenberg form by Householder reflections.
fn householder_hessenberg(m: &Mat<c64>) -> Mat<c64> {
    let n = m.nrows();
    let mut a = m.clone();
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { c64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        let mut v: Vec<c64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        // A ← (I - 2vvᴴ) A
        for j in 0..n {
            let dot: c64 = v.iter().enumerate().map(|(r, vr)| vr.conj() * a[(k + 1 + r, j)]).sum();
            for (r, vr) in v.iter().enumerate() {
                a[(k + 1 + r, j)] -= *vr * dot * 2.0;
            }
        }
        // A ← A (I - 2vvᴴ)
        for i in 0..n {
            let dot: c64 = v.iter().enumerate().map(|(r, vr)| a[(i, k + 1 + r)] * vr).sum();
            for (r, vr) in v.iter().enumerate() {
                a[(i, k + 1 + r)] -= dot * vr.conj() * 2.0;
            }
        }
        for i in k + 2..n {
            a[(i, k)] = c64::new(0.0, 0.0);
        }
    }
    a
}
