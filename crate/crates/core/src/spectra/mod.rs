//! Dense eigenvalues, spectral boxes, cluster decompositions and
//! contour-integral eigenvalue counting.

mod contour;

use std::fmt::Write as _;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{DiscreteOperator, OperatorKind};

pub use contour::{contour_projector_count, count_in_rect, gauss_legendre, ContourCount};

/// Dense eigensolves above this dimension are refused.
pub const DENSE_BUDGET: usize = 4096;

/// Eigenvalues closer than this are reported as one multiple eigenvalue.
pub const MERGE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cap,
    Scaled,
    Dirichlet,
    Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cap => "cap",
            Method::Scaled => "scaled",
            Method::Dirichlet => "dirichlet",
            Method::Oracle => "oracle",
        }
    }
}

impl From<OperatorKind> for Method {
    fn from(k: OperatorKind) -> Self {
        match k {
            OperatorKind::DirichletSelfAdjoint => Method::Dirichlet,
            OperatorKind::Cap => Method::Cap,
            OperatorKind::Scaled => Method::Scaled,
        }
    }
}

/// Eigenvalues sorted by `(Re, Im)`, with optional unit right eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<c64>,
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vec<c64>>>,
    /// `‖Av - zv‖` per pair; empty without eigenvectors.
    pub residuals: Vec<f64>,
    /// Set for eigenvalues that belong to a numerically defective cluster.
    pub defective: Vec<bool>,
    pub method: Method,
    pub h: f64,
}

impl Spectrum {
    pub fn from_values(mut eigenvalues: Vec<c64>, method: Method, h: f64) -> Self {
        eigenvalues.sort_by(cmp_re_im);
        let n = eigenvalues.len();
        Self { eigenvalues, eigenvectors: None, residuals: Vec::new(), defective: vec![false; n], method, h }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index of the eigenvalue closest to `z`.
    pub fn nearest(&self, z: c64) -> Option<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - z).norm().total_cmp(&(b.1 - z).norm()))
            .map(|(i, _)| i)
    }

    /// CSV with columns `re,im,residual,method,h`; `residual` is empty
    /// when no eigenvectors were computed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,residual,method,h\n");
        for (i, z) in self.eigenvalues.iter().enumerate() {
            let residual = self.residuals.get(i).map(|r| format!("{r:.16e}")).unwrap_or_default();
            let _ = writeln!(out, "{:.16e},{:.16e},{residual},{},{:.16e}", z.re, z.im, self.method.as_str(), self.h);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum serializes")
    }

    pub fn select(&self, keep: impl Fn(c64) -> bool) -> Spectrum {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.eigenvalues[i])).collect();
        Spectrum {
            eigenvalues: idx.iter().map(|&i| self.eigenvalues[i]).collect(),
            eigenvectors: self.eigenvectors.as_ref().map(|v| idx.iter().map(|&i| v[i].clone()).collect()),
            residuals: if self.residuals.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.residuals[i]).collect()
            },
            defective: idx.iter().map(|&i| self.defective[i]).collect(),
            method: self.method,
            h: self.h,
        }
    }
}

fn cmp_re_im(a: &c64, b: &c64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// `Ω = [a, b] + i[-c, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralBox {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SpectralBox {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a < b && c > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("box needs a < b and c > 0, got [{a}, {b}] × c = {c}")));
        }
        Ok(Self { a, b, c })
    }

    pub fn contains(&self, z: c64) -> bool {
        self.a <= z.re && z.re <= self.b && -self.c <= z.im && z.im <= 0.0
    }

    pub fn rect(&self) -> Rect {
        Rect { re_min: self.a, re_max: self.b, im_min: -self.c, im_max: 0.0 }
    }
}

/// Closed axis-parallel rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn contains(&self, z: c64) -> bool {
        self.re_min <= z.re && z.re <= self.re_max && self.im_min <= z.im && z.im <= self.im_max
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.re_max - self.re_min) + (self.im_max - self.im_min))
    }

    /// Distance from `z` to the boundary of the rectangle.
    pub fn boundary_distance(&self, z: c64) -> f64 {
        let dx = (self.re_min - z.re).max(z.re - self.re_max).max(0.0);
        let dy = (self.im_min - z.im).max(z.im - self.im_max).max(0.0);
        if dx > 0.0 || dy > 0.0 {
            dx.hypot(dy)
        } else {
            (z.re - self.re_min)
                .min(self.re_max - z.re)
                .min(z.im - self.im_min)
                .min(self.im_max - z.im)
        }
    }
}

/// All eigenvalues of `A`, with unit eigenvectors and residuals when requested.
pub fn eig_dense(a: &DiscreteOperator, want_vectors: bool) -> Result<Spectrum> {
    eig_matrix(&a.matrix, want_vectors, a.kind.into(), a.h)
}

pub fn eig_matrix(m: &Mat<c64>, want_vectors: bool, method: Method, h: f64) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidArgument("eigenproblem needs a square matrix".into()));
    }
    if n > DENSE_BUDGET {
        return Err(Error::ResourceLimit(format!("dimension {n} exceeds dense budget {DENSE_BUDGET}")));
    }
    if n == 0 {
        return Ok(Spectrum::from_values(Vec::new(), method, h));
    }
    if !want_vectors {
        let values = m
            .eigenvalues()
            .map_err(|e| Error::NumericalFailure(format!("eigenvalue iteration failed: {e:?}")))?;
        let mut s = Spectrum::from_values(values, method, h);
        merge_clusters(&mut s.eigenvalues);
        return Ok(s);
    }

    let evd = m
        .eigen()
        .map_err(|e| Error::NumericalFailure(format!("eigenvalue iteration failed: {e:?}")))?;
    let values: Vec<c64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp_re_im(&values[i], &values[j]));

    let mut vectors = Mat::<c64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let norm = (0..n).map(|r| u[(r, i)].norm_sqr()).sum::<f64>().sqrt();
        for r in 0..n {
            vectors[(r, k)] = u[(r, i)] / norm;
        }
    }
    let mut eigenvalues: Vec<c64> = order.iter().map(|&i| values[i]).collect();
    merge_clusters(&mut eigenvalues);

    let av = m * &vectors;
    let residuals: Vec<f64> = (0..n)
        .map(|k| {
            (0..n)
                .map(|r| (av[(r, k)] - eigenvalues[k] * vectors[(r, k)]).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let eigenvectors: Vec<Vec<c64>> = (0..n).map(|k| (0..n).map(|r| vectors[(r, k)]).collect()).collect();
    let defective = defective_flags(&eigenvalues, &eigenvectors);
    Ok(Spectrum { eigenvalues, eigenvectors: Some(eigenvectors), residuals, defective, method, h })
}

/// Snaps runs of eigenvalues within [`MERGE_TOLERANCE`] of each other to their mean.
fn merge_clusters(values: &mut [c64]) {
    let n = values.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end] - values[start]).norm() <= MERGE_TOLERANCE * (1.0 + values[start].norm()) {
            end += 1;
        }
        if end - start > 1 {
            let mean = values[start..end].iter().sum::<c64>() / (end - start) as f64;
            values[start..end].iter_mut().for_each(|v| *v = mean);
        }
        start = end;
    }
}

/// Eigenvalues that are close together with nearly parallel eigenvectors.
fn defective_flags(values: &[c64], vectors: &[Vec<c64>]) -> Vec<bool> {
    let n = values.len();
    let mut flags = vec![false; n];
    for i in 0..n {
        let tol = 1e-6 * (1.0 + values[i].norm());
        for j in i + 1..n {
            if values[j].re - values[i].re > tol {
                break;
            }
            if (values[j] - values[i]).norm() > tol {
                continue;
            }
            let overlap: c64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a.conj() * b).sum();
            if overlap.norm() > 1.0 - 1e-6 {
                flags[i] = true;
                flags[j] = true;
            }
        }
    }
    flags
}

/// Eigenvalues inside `Ω`, boundary included.
pub fn filter_box(s: &Spectrum, b: &SpectralBox) -> Spectrum {
    s.select(|z| b.contains(z))
}

/// `σ_min(A - zI)`.
pub fn min_singular_value(a: &DiscreteOperator, z: c64) -> Result<f64> {
    min_singular_value_of(&a.matrix, z)
}

pub fn min_singular_value_of(m: &Mat<c64>, z: c64) -> Result<f64> {
    let n = m.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| if i == j { m[(i, j)] - z } else { m[(i, j)] });
    let sv = shifted
        .singular_values()
        .map_err(|e| Error::NumericalFailure(format!("singular value iteration failed: {e:?}")))?;
    Ok(sv.last().copied().unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDecomposition {
    pub boxes: Vec<SpectralBox>,
    pub w: f64,
    pub c: f64,
    /// `w` was capped at an eighth of the parent width.
    pub capped: bool,
}

impl ClusterDecomposition {
    pub fn flag(&self) -> Option<&'static str> {
        self.capped.then_some("separation not achievable at this h")
    }
}

/// Groups points into disjoint boxes `[a_j, b_j] + i[-c, 0]` whose real
/// projections are at least `4w` apart, with `w = h^{-(5n♯+1)/2} c`.
///
/// Points closer than `6w` in real part share a box; each box extends `w`
/// beyond its extreme points.
pub fn cluster_boxes(points: &[c64], c: f64, h: f64, nsharp: u32, parent: (f64, f64)) -> Result<ClusterDecomposition> {
    if !(c > 0.0 && h > 0.0 && parent.0 < parent.1) {
        return Err(Error::InvalidArgument("cluster_boxes needs c > 0, h > 0 and a nonempty parent window".into()));
    }
    if let Some(z) = points.iter().find(|z| !(parent.0 <= z.re && z.re <= parent.1 && -c <= z.im && z.im <= 0.0)) {
        return Err(Error::InvalidArgument(format!("point {z} outside the parent window")));
    }
    let mut w = h.powf(-(5.0 * nsharp as f64 + 1.0) / 2.0) * c;
    let cap = (parent.1 - parent.0) / 8.0;
    let capped = w > cap;
    if capped {
        w = cap;
    }
    let mut re: Vec<f64> = points.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    let mut boxes = Vec::new();
    let mut i = 0;
    while i < re.len() {
        let mut j = i;
        while j + 1 < re.len() && re[j + 1] - re[j] < 6.0 * w {
            j += 1;
        }
        boxes.push(SpectralBox { a: re[i] - w, b: re[j] + w, c });
        i = j + 1;
    }
    Ok(ClusterDecomposition { boxes, w, c, capped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;

    fn op(m: Mat<c64>) -> DiscreteOperator {
        DiscreteOperator { grid: make_grid(1.0, m.nrows().max(3)).unwrap(), matrix: m, kind: OperatorKind::Cap, h: 1.0 }
    }

    fn cplx(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn diagonal_spectrum() {
        let a = op(Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => cplx(2.0, 3.0),
            (1, 1) => cplx(1.0, 0.0),
            _ => cplx(0.0, 0.0),
        }));
        let s = eig_dense(&a, true).unwrap();
        assert_eq!(s.eigenvalues, vec![cplx(1.0, 0.0), cplx(2.0, 3.0)]);
        assert!(s.residuals.iter().all(|&r| r <= 1e-14));
        assert_eq!(s.method, Method::Cap);
    }

    #[test]
    fn nilpotent_is_double_and_defective() {
        let a = op(Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { cplx(1.0, 0.0) } else { cplx(0.0, 0.0) }));
        let s = eig_dense(&a, true).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.eigenvalues.iter().all(|z| z.norm() <= 1e-8));
        assert!(s.defective.iter().all(|&d| d));
    }

    #[test]
    fn companion_of_z_squared_minus_one() {
        let a = op(Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => cplx(1.0, 0.0),
            (1, 0) => cplx(1.0, 0.0),
            _ => cplx(0.0, 0.0),
        }));
        let s = eig_dense(&a, false).unwrap();
        assert!((s.eigenvalues[0] - cplx(-1.0, 0.0)).norm() <= 1e-14);
        assert!((s.eigenvalues[1] - cplx(1.0, 0.0)).norm() <= 1e-14);
        assert!(s.residuals.is_empty());
    }

    #[test]
    fn over_budget_is_refused() {
        let a = Mat::<c64>::zeros(DENSE_BUDGET + 1, DENSE_BUDGET + 1);
        assert!(matches!(eig_matrix(&a, false, Method::Cap, 1.0), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn filter_examples() {
        let b = SpectralBox::new(0.9, 1.1, 0.1).unwrap();
        let empty = Spectrum::from_values(vec![], Method::Cap, 0.1);
        assert!(filter_box(&empty, &b).is_empty());
        let s = Spectrum::from_values(vec![cplx(0.5, 0.0), cplx(1.0, -0.01), cplx(2.0, 0.0)], Method::Cap, 0.1);
        assert_eq!(filter_box(&s, &b).eigenvalues, vec![cplx(1.0, -0.01)]);
        let edge = Spectrum::from_values(vec![cplx(0.9, 0.0), cplx(1.1, -0.1)], Method::Cap, 0.1);
        assert_eq!(filter_box(&edge, &b).len(), 2);
    }

    #[test]
    fn singular_value_examples() {
        let a = op(Mat::from_fn(2, 2, |i, j| if i == j { cplx(i as f64 + 1.0, 0.0) } else { cplx(0.0, 0.0) }));
        assert!((min_singular_value(&a, cplx(0.0, 0.0)).unwrap() - 1.0).abs() <= 1e-14);
        assert!(min_singular_value(&a, cplx(2.0, 0.0)).unwrap() <= 1e-12);
    }

    #[test]
    fn clusters_single_and_separated() {
        let h: f64 = 0.5;
        let c = 1e-4;
        let w = h.powi(-3) * c;
        let one = cluster_boxes(&[cplx(1.0, -1e-5)], c, h, 1, (0.0, 2.0)).unwrap();
        assert_eq!(one.boxes.len(), 1);
        assert!((one.boxes[0].b - one.boxes[0].a - 2.0 * w).abs() <= 1e-15);
        assert!(!one.capped);

        let two = cluster_boxes(&[cplx(1.0, 0.0), cplx(1.0 + 10.0 * w, 0.0)], c, h, 1, (0.0, 2.0)).unwrap();
        assert_eq!(two.boxes.len(), 2);
        assert!(two.boxes[1].a - two.boxes[0].b >= 4.0 * w - 1e-15);

        let close = cluster_boxes(&[cplx(1.0, 0.0), cplx(1.0 + 3.0 * w, 0.0)], c, h, 1, (0.0, 2.0)).unwrap();
        assert_eq!(close.boxes.len(), 1);
    }

    #[test]
    fn cluster_width_is_capped() {
        let d = cluster_boxes(&[cplx(1.0, 0.0)], 0.01, 0.1, 1, (0.5, 1.5)).unwrap();
        assert!(d.capped);
        assert_eq!(d.w, 0.125);
        assert!(d.flag().is_some());
    }

    #[test]
    fn rect_boundary_distance() {
        let r = Rect { re_min: 0.0, re_max: 2.0, im_min: -1.0, im_max: 1.0 };
        assert_eq!(r.boundary_distance(cplx(1.0, 0.0)), 1.0);
        assert_eq!(r.boundary_distance(cplx(1.5, 0.2)), 0.5);
        assert_eq!(r.boundary_distance(cplx(5.0, 5.0)), 5.0);
        assert_eq!(r.perimeter(), 8.0);
    }
}
