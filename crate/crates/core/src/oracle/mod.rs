//! Discretization-free resonances of piecewise-constant potentials.
//!
//! On each interval of constant V the solution is `α e^{ipx/h} + β e^{-ipx/h}`
//! with `p = √(z - V)`. Starting from a purely outgoing wave on the right we
//! sweep leftwards, carrying the amplitude `a` of the right-moving part and the
//! ratio `ρ` of left- to right-moving parts. The inverse transmission amplitude
//! `D(z) = α_left` vanishes exactly at resonances (and at bound states below
//! the continuum).
//!
//! Everything is evaluated in double-double arithmetic.

pub mod dd;

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::SemiclassicalModel;
use crate::spectra::{Rect, SpectralBox};
use dd::{Cdd, Dd};

/// Sheet of the exterior wave number `p₀ = √z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Branch {
    /// `e^{ip₀x/h}` outgoing; continued from the upper half-plane through the
    /// positive real axis, with the cut on the negative imaginary axis.
    Outgoing,
    /// `p₀ → -p₀`: the reflected branch.
    Incoming,
}

/// `D(z)` on the outgoing sheet.
pub fn transfer_determinant(m: &SemiclassicalModel, z: Complex64) -> Result<Complex64> {
    Ok(determinant_dd(m, z, Branch::Outgoing)?.to_c64())
}

pub fn transfer_determinant_on(m: &SemiclassicalModel, z: Complex64, branch: Branch) -> Result<Complex64> {
    Ok(determinant_dd(m, z, branch)?.to_c64())
}

fn determinant_dd(m: &SemiclassicalModel, z: Complex64, branch: Branch) -> Result<Cdd> {
    let ambiguous = Error::BranchAmbiguity { re: z.re, im: z.im };
    if !(z.re.is_finite() && z.im.is_finite()) || (z.re == 0.0 && z.im <= 0.0) {
        return Err(ambiguous);
    }
    let zd = Cdd::from(z);
    let mut p0 = zd.sqrt_cut_down();
    if branch == Branch::Incoming {
        p0 = -p0;
    }
    let bps = m.potential.breakpoints();
    if bps.is_empty() {
        return Ok(Cdd::ONE);
    }
    let inv_h = Dd::ONE / Dd::new(m.h);
    let i_over_h = Cdd::new(Dd::ZERO, inv_h);
    let wave = |p: Cdd, x: f64| (i_over_h * p).scale(Dd::new(x)).exp();

    let momenta: Vec<Cdd> = m
        .potential
        .values()
        .iter()
        .map(|&v| {
            let p = Cdd::new(zd.re - Dd::new(v), zd.im).sqrt();
            let align = (p * p0.conj()).re.hi;
            if align < 0.0 || (align == 0.0 && p.im.hi < 0.0) {
                -p
            } else {
                p
            }
        })
        .collect();
    if momenta.iter().any(|p| p.re.hi == 0.0 && p.im.hi == 0.0) {
        return Err(ambiguous);
    }

    let n = bps.len() - 1;
    let mut a = wave(p0, bps[n]);
    let mut rho = Cdd::ZERO;
    let mut p_right = p0;
    for j in (0..n).rev() {
        let p_left = momenta[j];
        let (next_a, next_rho) = interface(a, rho, p_left, p_right);
        let len = Dd::new(bps[j + 1]) - Dd::new(bps[j]);
        let phase = (i_over_h * p_left).scale(len);
        a = next_a * (-phase).exp();
        rho = next_rho * (phase + phase).exp();
        p_right = p_left;
    }
    let (a_left, _) = interface(a, rho, p0, p_right);
    let d = a_left * wave(-p0, bps[0]);
    if !d.is_finite() {
        return Err(Error::NumericalFailure(format!("transfer determinant overflowed at z = {z}")));
    }
    Ok(d)
}

/// Matching across an interface from the region on the right (`p2`) to the
/// region on the left (`p1`): returns the left amplitude and ratio.
fn interface(a2: Cdd, rho2: Cdd, p1: Cdd, p2: Cdd) -> (Cdd, Cdd) {
    let one = Cdd::ONE;
    let sum = p1 + p2;
    let diff = p1 - p2;
    let rho1 = (diff + sum * rho2) / (sum + diff * rho2);
    let a1 = a2 * (p1 * (one + rho2) + p2 * (one - rho2)) / (p1 + p1);
    (a1, rho1)
}

/// Winding number of `D` around the boundary of `rect`, counter-clockwise.
///
/// Each edge starts with `nodes_per_edge` segments; a segment whose argument
/// increment exceeds π/2 is bisected until it is resolved.
pub fn argument_count_rect(m: &SemiclassicalModel, rect: &Rect, nodes_per_edge: usize) -> Result<i64> {
    if nodes_per_edge == 0 || !(rect.re_min < rect.re_max && rect.im_min < rect.im_max) {
        return Err(Error::InvalidArgument("contour needs a nondegenerate rectangle and nodes".into()));
    }
    let corners = [
        Complex64::new(rect.re_min, rect.im_min),
        Complex64::new(rect.re_max, rect.im_min),
        Complex64::new(rect.re_max, rect.im_max),
        Complex64::new(rect.re_min, rect.im_max),
    ];
    let mut nodes = Vec::with_capacity(4 * nodes_per_edge);
    for e in 0..4 {
        let (z0, z1) = (corners[e], corners[(e + 1) % 4]);
        for k in 0..nodes_per_edge {
            nodes.push(z0 + (z1 - z0) * (k as f64 / nodes_per_edge as f64));
        }
    }
    let values: Vec<Result<Cdd>> = exec::map(Execution::available(), &nodes, |&z| determinant_dd(m, z, Branch::Outgoing));
    let values: Vec<Cdd> = values.into_iter().collect::<Result<_>>()?;
    let segments: Vec<usize> = (0..nodes.len()).collect();
    let increments = exec::map(Execution::available(), &segments, |&k| {
        let k1 = (k + 1) % nodes.len();
        segment_increment(m, nodes[k], values[k], nodes[k1], values[k1])
    });
    let total: f64 = increments.into_iter().collect::<Result<Vec<f64>>>()?.iter().sum();
    let winding = total / (2.0 * std::f64::consts::PI);
    let count = winding.round();
    if (winding - count).abs() > 1e-3 {
        return Err(Error::RefineContour(format!("winding {winding} is not close to an integer")));
    }
    Ok(count as i64)
}

/// Number of zeros in `[a, b] + i[−c, 0]`.
///
/// For `a > 0` the top edge is moved up to `Im z = c`: `D` has no zeros in
/// the closed upper half-plane away from the origin, and the narrowest
/// resonances can sit closer to the real axis than a double resolves.
pub fn argument_count(m: &SemiclassicalModel, b: &SpectralBox, nodes_per_edge: usize) -> Result<i64> {
    argument_count_rect(m, &search_rect(b), nodes_per_edge)
}

fn search_rect(b: &SpectralBox) -> Rect {
    let mut r = b.rect();
    if b.a > 0.0 {
        r.im_max = b.c;
    }
    r
}

fn arg_ratio(d1: Cdd, d0: Cdd) -> f64 {
    (d1 / d0).to_c64().arg()
}

fn segment_increment(m: &SemiclassicalModel, z0: Complex64, d0: Cdd, z1: Complex64, d1: Cdd) -> Result<f64> {
    let mut stack = vec![(z0, d0, z1, d1)];
    let mut total = 0.0;
    while let Some((a, da, b, db)) = stack.pop() {
        if da.norm() == 0.0 || db.norm() == 0.0 {
            return Err(Error::RefineContour(format!("D vanishes on the contour near {a}")));
        }
        let delta = arg_ratio(db, da);
        if delta.abs() <= std::f64::consts::FRAC_PI_2 {
            total += delta;
            continue;
        }
        let floor = 8.0 * f64::EPSILON * (1.0 + a.norm());
        if (b - a).norm() <= floor {
            if delta.abs() < std::f64::consts::PI - 1e-6 {
                total += delta;
                continue;
            }
            return Err(Error::RefineContour(format!("argument jump {delta} unresolved near {a}")));
        }
        let mid = (a + b) * 0.5;
        let dm = determinant_dd(m, mid, Branch::Outgoing)?;
        stack.push((mid, dm, b, db));
        stack.push((a, da, mid, dm));
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleResonance {
    pub z: Complex64,
    /// `|D(z)|` at the returned point.
    pub determinant_residual: f64,
    /// `|D'(z)|·(1 + |z|)`, the scale against which the residual is judged.
    pub local_scale: f64,
    pub winding_verified: bool,
    pub multiplicity: u32,
    /// Non-simple zero returned at subdivision resolution, not refined.
    pub degenerate: bool,
    pub iterations: usize,
}

impl OracleResonance {
    pub fn relative_residual(&self) -> f64 {
        if self.local_scale > 0.0 {
            self.determinant_residual / self.local_scale
        } else {
            f64::INFINITY
        }
    }
}

const NEWTON_MAX_ITER: usize = 50;

fn derivative(m: &SemiclassicalModel, z: Complex64) -> Result<Cdd> {
    let step = 1e-7 * (1.0 + z.norm());
    let plus = determinant_dd(m, z + step, Branch::Outgoing)?;
    let minus = determinant_dd(m, z - step, Branch::Outgoing)?;
    Ok((plus - minus).scale(Dd::ONE / Dd::new(2.0 * step)))
}

/// Newton iteration on `D` from `z0`, derivative by central differences.
pub fn newton_refine(m: &SemiclassicalModel, z0: Complex64) -> Result<OracleResonance> {
    let mut z = z0;
    let mut trace = vec![z];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..NEWTON_MAX_ITER {
        let d = determinant_dd(m, z, Branch::Outgoing)?;
        if d.norm() == 0.0 {
            converged = true;
            iterations = it;
            break;
        }
        let dp = derivative(m, z)?;
        let step = (d / dp).to_c64();
        if !step.re.is_finite() || !step.im.is_finite() {
            return Err(Error::NoConvergence { trace });
        }
        z -= step;
        trace.push(z);
        iterations = it + 1;
        if step.norm() <= 1e-13 * (1.0 + z.norm()) {
            // one more step resolves widths far below the absolute tolerance
            let d = determinant_dd(m, z, Branch::Outgoing)?;
            if d.norm() > 0.0 {
                let last = (d / derivative(m, z)?).to_c64();
                if last.norm() <= step.norm() {
                    z -= last;
                    trace.push(z);
                    iterations += 1;
                }
            }
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { trace });
    }
    let residual = determinant_dd(m, z, Branch::Outgoing)?.norm();
    let local_scale = derivative(m, z)?.norm() * (1.0 + z.norm());
    let half = 1e-6 * (1.0 + z.norm());
    let tiny = Rect { re_min: z.re - half, re_max: z.re + half, im_min: z.im - half, im_max: z.im + half };
    let winding = argument_count_rect(m, &tiny, 16).unwrap_or(-1);
    Ok(OracleResonance {
        z,
        determinant_residual: residual,
        local_scale,
        winding_verified: winding == 1,
        multiplicity: 1,
        degenerate: false,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResonanceSearch {
    /// Winding number of `D` around the search box.
    pub count: i64,
    pub roots: Vec<OracleResonance>,
}

impl ResonanceSearch {
    /// Roots counted with multiplicity.
    pub fn root_count(&self) -> i64 {
        self.roots.iter().map(|r| r.multiplicity as i64).sum()
    }

    /// Spectrum CSV with method `oracle` and the extra columns
    /// `determinantResidual,multiplicity`; `residual` is `|D|` over the local scale.
    pub fn to_csv(&self, h: f64) -> String {
        let mut out = String::from("re,im,residual,method,h,determinantResidual,multiplicity\n");
        for r in &self.roots {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},oracle,{h:.16e},{:.16e},{}",
                r.z.re,
                r.z.im,
                r.relative_residual(),
                r.determinant_residual,
                r.multiplicity
            );
        }
        out
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.roots.iter().map(|r| r.z).collect()
    }
}

/// Locates every zero of `D` in `rect` by argument-principle subdivision
/// followed by Newton refinement.
pub fn find_resonances(m: &SemiclassicalModel, rect: &Rect, nodes_per_edge: usize) -> Result<ResonanceSearch> {
    let count = argument_count_rect(m, rect, nodes_per_edge)?;
    let mut roots = Vec::new();
    subdivide(m, rect, count, nodes_per_edge, 0, &mut roots)?;
    roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    Ok(ResonanceSearch { count, roots })
}

/// [`find_resonances`] over a box, with the contour lifted as in [`argument_count`].
pub fn find_resonances_in_box(m: &SemiclassicalModel, b: &SpectralBox, nodes_per_edge: usize) -> Result<ResonanceSearch> {
    find_resonances(m, &search_rect(b), nodes_per_edge)
}

const SPLIT: f64 = 0.5 + 0.0123;
const MAX_DEPTH: usize = 60;

fn subdivide(
    m: &SemiclassicalModel,
    rect: &Rect,
    count: i64,
    nodes: usize,
    depth: usize,
    out: &mut Vec<OracleResonance>,
) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let width = rect.re_max - rect.re_min;
    let height = rect.im_max - rect.im_min;
    let centre = Complex64::new(rect.re_min + 0.5 * width, rect.im_min + 0.5 * height);
    let resolution = 1e-12 * (1.0 + centre.norm());
    if count == 1 {
        if let Ok(root) = newton_refine(m, centre) {
            let slack = 1e-14 * (1.0 + centre.norm());
            let inside = root.z.re >= rect.re_min - slack
                && root.z.re <= rect.re_max + slack
                && root.z.im >= rect.im_min - slack
                && root.z.im <= rect.im_max + slack;
            if inside {
                out.push(root);
                return Ok(());
            }
        }
    }
    if depth >= MAX_DEPTH || (width <= resolution && height <= resolution) {
        let d = determinant_dd(m, centre, Branch::Outgoing)?;
        out.push(OracleResonance {
            z: centre,
            determinant_residual: d.norm(),
            local_scale: derivative(m, centre).map(|x| x.norm()).unwrap_or(0.0) * (1.0 + centre.norm()),
            winding_verified: true,
            multiplicity: count as u32,
            degenerate: count > 1,
            iterations: 0,
        });
        return Ok(());
    }
    // split across the longer side, in relative terms
    let split_re = width / (1.0 + centre.re.abs()) >= height / (1.0 + centre.im.abs());
    let mut fraction = SPLIT;
    for _attempt in 0..4 {
        let halves = if split_re {
            let cut = rect.re_min + fraction * width;
            [Rect { re_max: cut, ..*rect }, Rect { re_min: cut, ..*rect }]
        } else {
            let cut = rect.im_min + fraction * height;
            [Rect { im_max: cut, ..*rect }, Rect { im_min: cut, ..*rect }]
        };
        let counts: Result<Vec<i64>> = halves.iter().map(|r| argument_count_rect(m, r, nodes)).collect();
        match counts {
            Ok(c) if c[0] + c[1] == count && c.iter().all(|&k| k >= 0) => {
                for (r, k) in halves.iter().zip(c) {
                    subdivide(m, r, k, nodes, depth + 1, out)?;
                }
                return Ok(());
            }
            _ => fraction -= 0.0377,
        }
    }
    Err(Error::RefineContour(format!("subdivision of {rect:?} did not conserve the winding number {count}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PiecewisePotential;

    fn free() -> SemiclassicalModel {
        SemiclassicalModel::new(0.1, PiecewisePotential::zero(), 0.5, 1.0, 0.5, 1.5)
    }

    fn flat_with_breakpoints() -> SemiclassicalModel {
        let v = PiecewisePotential::new(vec![-1.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        SemiclassicalModel::new(0.1, v, 1.0, 1.5, 0.5, 1.5)
    }

    #[test]
    fn free_determinant_is_one() {
        for z in [Complex64::new(0.7, 0.0), Complex64::new(1.3, -0.2), Complex64::new(-2.0, 0.5)] {
            assert_eq!(transfer_determinant(&free(), z).unwrap(), Complex64::new(1.0, 0.0));
            let d = transfer_determinant(&flat_with_breakpoints(), z).unwrap();
            assert!((d - Complex64::new(1.0, 0.0)).norm() <= 1e-14, "{d}");
        }
    }

    #[test]
    fn branch_errors() {
        let m = SemiclassicalModel::double_barrier(0.1);
        assert!(matches!(transfer_determinant(&m, Complex64::new(0.0, 0.0)), Err(Error::BranchAmbiguity { .. })));
        assert!(matches!(transfer_determinant(&m, Complex64::new(0.0, -0.3)), Err(Error::BranchAmbiguity { .. })));
        assert!(matches!(transfer_determinant(&m, Complex64::new(2.0, 0.0)), Err(Error::BranchAmbiguity { .. })));
    }

    #[test]
    fn free_box_has_no_zeros() {
        let b = SpectralBox::new(0.5, 1.5, 0.1).unwrap();
        assert_eq!(argument_count(&free(), &b, 32).unwrap(), 0);
    }

    #[test]
    fn newton_is_idempotent_at_a_root() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let r = newton_refine(&m, Complex64::new(0.767, -1e-9)).unwrap();
        let again = newton_refine(&m, r.z).unwrap();
        assert!(again.iterations <= 2);
        assert!((again.z - r.z).norm() <= 1e-15);
        assert!(r.winding_verified);
    }
}
