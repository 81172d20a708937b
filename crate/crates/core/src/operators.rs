//! Dense matrix realizations of `P_R(h)`, the CAP operator `Q_R(h) = P_R(h) - iW`
//! and the complex-scaled `P_θ(h)` on a Dirichlet grid.
//!
//! All three share one three-point assembly. Writing `J` for the Jacobian of the
//! coordinate map (identically 1 for the unscaled operators), row `j` is
//!
//! ```text
//! -h²/J_j · [ (u_{j+1} - u_j)/J_{j+1/2} - (u_j - u_{j-1})/J_{j-1/2} ] / dx² + V_j u_j
//! ```
//!
//! with `V_j` the mean of the piecewise-constant potential over the dual cell
//! `[x_j - dx/2, x_j + dx/2]`. Cell averaging keeps second-order accuracy when a
//! potential jump falls on a node.

use std::io::Write;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{smooth_step_derivatives, Grid, SemiclassicalModel, Verdict};

/// Monomial absorbing potential: `Re W = η·((|x| - R1)₊)^p`, `Im W = κ·√(Re W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapProfile {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    pub delta0: f64,
    pub power: u32,
    pub strength: f64,
    #[serde(rename = "imagScale")]
    pub imag_scale: f64,
    #[serde(rename = "imagConstC")]
    pub imag_const_c: f64,
}

impl CapProfile {
    /// The quadratic CAP used throughout the test suite: onset 3, floor radius 4.
    pub fn benchmark() -> Self {
        Self { r1: 3.0, r2: 4.0, delta0: 0.1, power: 2, strength: 1.0, imag_scale: 0.0, imag_const_c: 1.0 }
    }

    /// `W ≡ 0`.
    pub fn none(r1: f64, r2: f64) -> Self {
        Self { r1, r2, delta0: 0.1, power: 2, strength: 0.0, imag_scale: 0.0, imag_const_c: 1.0 }
    }

    pub fn re_w(&self, x: f64) -> f64 {
        let excess = x.abs() - self.r1;
        if excess <= 0.0 {
            0.0
        } else {
            self.strength * excess.powi(self.power as i32)
        }
    }

    pub fn im_w(&self, x: f64) -> f64 {
        self.imag_scale * self.re_w(x).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CapRegime {
    /// `R0' < R1`: W lives entirely in the free region.
    CaseA,
    /// `R1 ≤ R0'`: W overlaps the non-free but non-trapping zone.
    CaseB,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapVerdict {
    pub violations: Vec<String>,
    pub regime: CapRegime,
}

impl CapVerdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the admissibility conditions on the absorbing potential: support
/// outside `B(0, R1)` with `R0 < R1`, the floor `Re W ≥ δ0` beyond `R2`, and
/// `|Im W| ≤ C (Re W)^{1/2}`.
pub fn validate_cap(c: &CapProfile, m: &SemiclassicalModel) -> CapVerdict {
    let mut v = Verdict::default();
    v.require(c.strength >= 0.0, "strength η must be nonnegative");
    v.require(c.power >= 1, "power p must be a positive integer");
    v.require(c.imag_scale >= 0.0, "imagScale κ must be nonnegative");
    v.require(c.delta0 > 0.0, "floor δ₀ must be positive");
    v.require(c.imag_const_c > 0.0, "imagConstC must be positive");
    v.require(m.r0 < c.r1, format!("absorber must start outside the support: R₀ < R₁ (R₀ = {}, R₁ = {})", m.r0, c.r1));
    v.require(c.r1 < c.r2, "radii must satisfy R₁ < R₂");
    v.require(
        c.strength * (c.r2 - c.r1).max(0.0).powi(c.power as i32) >= c.delta0,
        format!(
            "floor violated: η(R₂-R₁)^p = {} < δ₀ = {}",
            c.strength * (c.r2 - c.r1).max(0.0).powi(c.power as i32),
            c.delta0
        ),
    );
    v.require(
        c.imag_scale <= c.imag_const_c,
        format!("imaginary part too large: κ = {} > C = {}", c.imag_scale, c.imag_const_c),
    );
    let regime = if m.r0_prime < c.r1 { CapRegime::CaseA } else { CapRegime::CaseB };
    CapVerdict { violations: v.violations, regime }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScalingShape {
    SmoothStep,
    ExponentialK,
}

/// Radial scaling angle `θ(r)` for the map `x ↦ x·e^{iθ(|x|)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingProfile {
    #[serde(rename = "B")]
    pub onset: f64,
    pub delta: f64,
    pub theta0: f64,
    pub k: f64,
    pub shape: ScalingShape,
}

impl ScalingProfile {
    pub fn smooth_step(onset: f64, delta: f64, theta0: f64) -> Result<Self> {
        Self { onset, delta, theta0, k: 2.0, shape: ScalingShape::SmoothStep }.checked()
    }

    pub fn exponential(onset: f64, k: f64, theta0: f64) -> Result<Self> {
        Self { onset, delta: 1.0, theta0, k, shape: ScalingShape::ExponentialK }.checked()
    }

    pub fn checked(self) -> Result<Self> {
        if !(self.onset > 0.0 && self.delta > 0.0 && self.k > 0.0) {
            return Err(Error::InvalidArgument(
                "scaling profile needs positive B, delta and k".into(),
            ));
        }
        if !(0.0..=0.3).contains(&self.theta0) {
            return Err(Error::InvalidArgument(format!(
                "scaling angle θ₀ = {} outside [0, 0.3]",
                self.theta0
            )));
        }
        Ok(self)
    }

    /// `[θ, θ', θ'', θ''']` at radius `r`.
    ///
    /// The smooth-step shape reports `θ''' = NaN`; only the exponential
    /// shape is used where the third derivative matters.
    pub fn derivatives(&self, r: f64) -> [f64; 4] {
        let u = r - self.onset;
        if u <= 0.0 {
            return [0.0; 4];
        }
        match self.shape {
            ScalingShape::SmoothStep => {
                let half = 0.5 * self.delta;
                let (s, ds, d2s) = smooth_step_derivatives(u / half);
                [
                    self.theta0 * s,
                    self.theta0 * ds / half,
                    self.theta0 * d2s / (half * half),
                    if u >= half { 0.0 } else { f64::NAN },
                ]
            }
            ScalingShape::ExponentialK => {
                let k = self.k;
                let f = -u.powf(-k);
                let theta = self.theta0 * f.exp();
                if theta == 0.0 {
                    return [0.0; 4];
                }
                let f1 = k * u.powf(-k - 1.0);
                let f2 = -k * (k + 1.0) * u.powf(-k - 2.0);
                let f3 = k * (k + 1.0) * (k + 2.0) * u.powf(-k - 3.0);
                [
                    theta,
                    theta * f1,
                    theta * (f2 + f1 * f1),
                    theta * (f3 + 3.0 * f1 * f2 + f1 * f1 * f1),
                ]
            }
        }
    }

    pub fn theta(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }
}

/// `g(r) = -i(rθ'' + θ')e^{-iθ} / (1 + irθ')³`, the reflection coefficient
/// generated by a radially varying scaling angle.
pub fn eval_g(s: &ScalingProfile, r: f64) -> c64 {
    let [theta, d1, d2, _] = s.derivatives(r);
    let i = c64::new(0.0, 1.0);
    let numer = -i * (r * d2 + d1) * c64::from_polar(1.0, -theta);
    let denom = c64::new(1.0, r * d1);
    numer / (denom * denom * denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaInequalityReport {
    /// `max_r L(r)`, negative when the inequality holds with room to spare.
    pub max_violation: f64,
    pub worst_r: f64,
    pub pass: bool,
}

/// Samples `L(r) = θ' + |θ''| + |θ'''| - h^{-2}θ/C - e^{-h^{-2/3+ε}}` on
/// `samples` equispaced points of `(B, B + 1/C]`.
pub fn theta_derivative_inequality_check(
    s: &ScalingProfile,
    h: f64,
    c_bound: f64,
    eps: f64,
    samples: usize,
) -> Result<ThetaInequalityReport> {
    if s.shape != ScalingShape::ExponentialK {
        return Err(Error::InvalidConfiguration(
            "θ-inequality diagnostic needs the exponential profile".into(),
        ));
    }
    if samples == 0 || !(h > 0.0 && c_bound > 0.0 && eps > 0.0) {
        return Err(Error::InvalidArgument("h, C, ε and the sample count must be positive".into()));
    }
    let floor = (-h.powf(-2.0 / 3.0 + eps)).exp();
    let span = 1.0 / c_bound;
    let (mut max_violation, mut worst_r) = (f64::NEG_INFINITY, s.onset);
    for i in 1..=samples {
        let r = s.onset + span * i as f64 / samples as f64;
        let [theta, d1, d2, d3] = s.derivatives(r);
        let l = d1 + d2.abs() + d3.abs() - theta / (h * h * c_bound) - floor;
        if l > max_violation {
            max_violation = l;
            worst_r = r;
        }
    }
    Ok(ThetaInequalityReport { max_violation, worst_r, pass: max_violation <= 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum OperatorKind {
    DirichletSelfAdjoint,
    Cap,
    Scaled,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: Mat<c64>,
    pub grid: Grid,
    pub kind: OperatorKind,
    pub h: f64,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> c64 {
        self.matrix[(i, j)]
    }

    /// Row-sum norm `‖A‖_∞`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Writes the nonzero entries as a complex general coordinate matrix-market file.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.dim();
        let entries: Vec<(usize, usize, c64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.matrix[(i, j)]))
            .filter(|(_, _, v)| *v != c64::new(0.0, 0.0))
            .collect();
        writeln!(out, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(out, "% kind={:?} h={} R={} N={}", self.kind, self.h, self.grid.radius(), n)?;
        writeln!(out, "{n} {n} {}", entries.len())?;
        for (i, j, v) in entries {
            writeln!(out, "{} {} {:.16e} {:.16e}", i + 1, j + 1, v.re, v.im)?;
        }
        Ok(())
    }
}

/// Potential sampled as dual-cell averages.
fn node_potential(m: &SemiclassicalModel, g: &Grid) -> Vec<f64> {
    let half = 0.5 * g.dx();
    g.nodes()
        .into_iter()
        .map(|x| m.potential.cell_average(x - half, x + half))
        .collect()
}

/// Shared three-point assembly. `inv_jac_node[j]` is `1/J(x_j)` and
/// `inv_jac_half[k]` is `1/J` at the half node left of node `k` (`k = n` is
/// the half node next to the right wall).
fn assemble(
    h: f64,
    g: &Grid,
    potential: &[f64],
    inv_jac_node: &[c64],
    inv_jac_half: &[c64],
    extra_diag: Option<&[c64]>,
) -> Mat<c64> {
    let n = g.len();
    let base = c64::new(h * h / (g.dx() * g.dx()), 0.0);
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            let mut d = base * inv_jac_node[i] * (inv_jac_half[i] + inv_jac_half[i + 1])
                + c64::new(potential[i], 0.0);
            if let Some(extra) = extra_diag {
                d += extra[i];
            }
            d
        } else if j + 1 == i {
            -(base * inv_jac_node[i] * inv_jac_half[i])
        } else if i + 1 == j {
            -(base * inv_jac_node[i] * inv_jac_half[i + 1])
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

fn check_box(m: &SemiclassicalModel, g: &Grid) -> Result<()> {
    if g.radius() <= m.r0_prime {
        return Err(Error::DomainTooSmall(format!(
            "grid radius {} must exceed R₀′ = {}",
            g.radius(),
            m.r0_prime
        )));
    }
    Ok(())
}

/// Dirichlet realization `P_R(h)` (real symmetric).
pub fn assemble_p_dirichlet(m: &SemiclassicalModel, g: &Grid) -> Result<DiscreteOperator> {
    check_box(m, g)?;
    let one = c64::new(1.0, 0.0);
    let matrix = assemble(
        m.h,
        g,
        &node_potential(m, g),
        &vec![one; g.len()],
        &vec![one; g.len() + 1],
        None,
    );
    Ok(DiscreteOperator { matrix, grid: g.clone(), kind: OperatorKind::DirichletSelfAdjoint, h: m.h })
}

/// `Q_R(h) = P_R(h) - iW`, i.e. `P_R + diag(Im W) - i diag(Re W)`.
///
/// Only structural requirements are enforced here; the admissibility
/// conditions are reported by [`validate_cap`]. `W ≡ 0` is accepted.
pub fn assemble_q_cap(m: &SemiclassicalModel, g: &Grid, c: &CapProfile) -> Result<DiscreteOperator> {
    if !(c.strength >= 0.0 && c.imag_scale >= 0.0 && c.power >= 1 && c.r1 > 0.0 && c.r1 < c.r2) {
        return Err(Error::InvalidConfiguration(format!(
            "CAP needs η ≥ 0, κ ≥ 0, p ≥ 1 and 0 < R₁ < R₂, got {c:?}"
        )));
    }
    if g.radius() <= c.r2 {
        return Err(Error::DomainTooSmall(format!(
            "grid radius {} must exceed R₂ = {}",
            g.radius(),
            c.r2
        )));
    }
    check_box(m, g)?;
    let one = c64::new(1.0, 0.0);
    let w: Vec<c64> = g.nodes().iter().map(|&x| c64::new(c.im_w(x), -c.re_w(x))).collect();
    let matrix = assemble(
        m.h,
        g,
        &node_potential(m, g),
        &vec![one; g.len()],
        &vec![one; g.len() + 1],
        Some(&w),
    );
    Ok(DiscreteOperator { matrix, grid: g.clone(), kind: OperatorKind::Cap, h: m.h })
}

/// Complex-scaled `P_θ(h)` for a scaling profile starting in the free region.
pub fn assemble_p_theta(m: &SemiclassicalModel, g: &Grid, s: &ScalingProfile) -> Result<DiscreteOperator> {
    if s.onset <= m.r0_prime {
        return Err(Error::InvalidConfiguration(format!(
            "scaling onset B = {} must exceed R₀′ = {}",
            s.onset, m.r0_prime
        )));
    }
    if g.radius() <= s.onset + s.delta {
        return Err(Error::InvalidConfiguration(format!(
            "grid radius {} must exceed B + δ = {}",
            g.radius(),
            s.onset + s.delta
        )));
    }
    assemble_p_theta_with(m, g, |r| {
        let [theta, d1, ..] = s.derivatives(r);
        (theta, d1)
    })
}

/// Scaled assembly for an arbitrary angle profile `r ↦ (θ(r), θ'(r))`.
///
/// No support checks are made: the caller must keep `θ = 0` wherever V is
/// non-zero, since the potential is not continued into the complex plane.
pub fn assemble_p_theta_with<F>(m: &SemiclassicalModel, g: &Grid, profile: F) -> Result<DiscreteOperator>
where
    F: Fn(f64) -> (f64, f64),
{
    check_box(m, g)?;
    let inv_jacobian = |x: f64| {
        let r = x.abs();
        let (theta, d1) = profile(r);
        if theta == 0.0 && d1 == 0.0 {
            return c64::new(1.0, 0.0);
        }
        (c64::from_polar(1.0, theta) * c64::new(1.0, r * d1)).inv()
    };
    let half = 0.5 * g.dx();
    let nodes = g.nodes();
    let inv_node: Vec<c64> = nodes.iter().map(|&x| inv_jacobian(x)).collect();
    let inv_half: Vec<c64> = (0..=g.len())
        .map(|k| {
            let x = if k < g.len() { nodes[k] - half } else { nodes[k - 1] + half };
            inv_jacobian(x)
        })
        .collect();
    let matrix = assemble(m.h, g, &node_potential(m, g), &inv_node, &inv_half, None);
    Ok(DiscreteOperator { matrix, grid: g.clone(), kind: OperatorKind::Scaled, h: m.h })
}
