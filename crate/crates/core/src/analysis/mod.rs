//! Executable forms of the CAP/resonance statements: the absorption identity,
//! the resolvent bound, the matching boxes, the counting sandwich and the
//! quasimode-to-spectrum driver. Existential constants are fitted and
//! reported rather than assumed.

mod quasimode;
mod report;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{Grid, SemiclassicalModel};
use crate::operators::{assemble_q_cap, validate_cap, CapProfile, CapRegime, DiscreteOperator, OperatorKind};
use crate::oracle::argument_count;
use crate::spectra::{eig_dense, filter_box, min_singular_value, SpectralBox, Spectrum};

pub use quasimode::{
    boundary_decay_probe, quasimode_from_q_eigenpair, quasimode_from_resonant_state, quasimode_implies_spectrum,
    CutoffQuasimode, QuasimodeEntry, QuasimodeParams, QuasimodeSet, QuasimodeVerdict,
};
pub use report::{ComparisonReport, Direction, MatchPair, SandwichCounts};

pub(crate) fn matvec(a: &DiscreteOperator, v: &[c64]) -> Vec<c64> {
    let n = a.dim();
    (0..n).map(|i| (0..n).map(|j| a.matrix[(i, j)] * v[j]).sum()).collect()
}

pub(crate) fn norm2(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `|−Im z‖f‖² − Σ Re W(x_j)|f_j|²| / (1 + |z|)` for every eigenpair.
pub fn absorption_identity_check(q: &DiscreteOperator, s: &Spectrum, c: &CapProfile) -> Result<Vec<f64>> {
    if q.kind != OperatorKind::Cap {
        return Err(Error::InvalidInput("absorption identity needs a CAP operator".into()));
    }
    let vectors = s
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("absorption identity needs eigenvectors".into()))?;
    let re_w: Vec<f64> = q.grid.nodes().iter().map(|&x| c.re_w(x)).collect();
    Ok(s.eigenvalues
        .iter()
        .zip(vectors)
        .map(|(z, f)| {
            let norm_sq: f64 = f.iter().map(|x| x.norm_sqr()).sum();
            let absorbed: f64 = f.iter().zip(&re_w).map(|(x, w)| w * x.norm_sqr()).sum();
            (-z.im * norm_sq - absorbed).abs() / (1.0 + z.norm())
        })
        .collect())
}

/// `σ_min(Q − z) − Im z` for each sample in the upper half-plane.
pub fn resolvent_bound_check(q: &DiscreteOperator, samples: &[c64]) -> Result<Vec<f64>> {
    if q.kind != OperatorKind::Cap {
        return Err(Error::InvalidInput("resolvent bound needs a CAP operator".into()));
    }
    if let Some(z) = samples.iter().find(|z| z.im.is_nan() || z.im <= 0.0) {
        return Err(Error::InvalidInput(format!("sample {z} is not in the upper half-plane")));
    }
    exec::map(Execution::available(), samples, |&z| min_singular_value(q, z).map(|s| s - z.im))
        .into_iter()
        .collect()
}

/// Constants of the matching boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Theorem1Params {
    /// `C` of the eligibility box `[a₀,b₀] + i[−(h^{n♯+1}/(C log 1/h))², 0]`.
    pub c_box: f64,
    pub a0: f64,
    pub b0: f64,
    /// `γ(R₁)` in `e^{−γ/h}`.
    pub gamma: f64,
    /// `B` in `δ(h)`.
    pub b_const: f64,
    /// Grid spacing; `dx²/h²` is added inside the fitted bracket.
    pub dx: f64,
    pub nsharp: u32,
}

impl Theorem1Params {
    pub fn new(m: &SemiclassicalModel, c: &CapProfile, dx: f64) -> Self {
        Self { c_box: 1.0, a0: m.a0, b0: m.b0, gamma: c.r1 - m.r0_prime, b_const: 2.0, dx, nsharp: m.nsharp }
    }

    pub fn eligibility_depth(&self, h: f64) -> f64 {
        let t = h.powi(self.nsharp as i32 + 1) / (self.c_box * (1.0 / h).ln());
        t * t
    }

    pub fn eligible(&self, z: c64, h: f64) -> bool {
        self.a0 <= z.re && z.re <= self.b0 && z.im <= 0.0 && -z.im <= self.eligibility_depth(h)
    }

    pub fn floor(&self, h: f64) -> f64 {
        self.dx * self.dx / (h * h)
    }

    /// Bracket multiplying the fitted constant, and the additive exponential term.
    pub fn bracket(&self, direction: Direction, source: c64, h: f64) -> (f64, f64) {
        let width = (-source.im).max(0.0).sqrt();
        let n = self.nsharp as f64;
        match direction {
            Direction::ResonanceToCap => (h.powf(-n - 0.5) * width + self.floor(h), (-self.gamma / h).exp()),
            Direction::CapToResonance => {
                (self.b_const * h.powf(-n - 1.0) * width + self.floor(h), (-self.b_const / h).exp())
            }
            Direction::CountingSandwich => (0.0, 0.0),
        }
    }
}

/// Smallest box radius `ε` with `|ΔRe| ≤ ε log(1/h)` and `|ΔIm| ≤ ε`.
pub(crate) fn required_radius(source: c64, target: c64, h: f64) -> f64 {
    let d = target - source;
    (d.re.abs() / (1.0 / h).ln()).max(d.im.abs())
}

/// Matches each eligible source point to its nearest target point.
///
/// The fitted constant is the smallest value for which every eligible pair
/// lies in its box `[Re s ± ε log(1/h)] + i[Im s ± ε]`.
pub fn theorem1_match(
    source: &Spectrum,
    target: &Spectrum,
    direction: Direction,
    h: f64,
    params: &Theorem1Params,
) -> Result<ComparisonReport> {
    if target.is_empty() {
        return Err(Error::NoCandidates);
    }
    if direction == Direction::CountingSandwich {
        return Err(Error::InvalidArgument("theorem1_match needs a matching direction".into()));
    }
    let mut pairs = Vec::new();
    let mut fitted: f64 = 0.0;
    let mut skipped = 0;
    for &s in &source.eigenvalues {
        let eligible = params.eligible(s, h);
        if !eligible {
            skipped += 1;
            continue;
        }
        let t = target.eigenvalues[target.nearest(s).expect("target is nonempty")];
        let need = required_radius(s, t, h);
        let (bracket, tail) = params.bracket(direction, s, h);
        let c = if need <= tail {
            0.0
        } else if bracket > 0.0 {
            (need - tail) / bracket
        } else {
            f64::INFINITY
        };
        fitted = fitted.max(c);
        pairs.push(MatchPair { source: s, target: t, distance: (t - s).norm(), box_satisfied: false });
    }
    let mut report = ComparisonReport::new(direction);
    match direction {
        Direction::ResonanceToCap => report.fitted_c1 = fitted,
        _ => report.fitted_c2 = fitted,
    }
    report.pairs = pairs;
    report.theorem1 = Some(*params);
    report.parameters.insert("h".into(), h);
    report.parameters.insert("C".into(), params.c_box);
    report.parameters.insert("gammaFit".into(), params.gamma);
    report.parameters.insert("B".into(), params.b_const);
    report.parameters.insert("dx".into(), params.dx);
    if skipped > 0 {
        report.flags.push(format!("{skipped} source points outside the eligibility box were skipped"));
    }
    report.refresh();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SandwichParams {
    /// Upper bound `c ≤ h^M` on the window depth.
    pub mexp: f64,
    /// `ε₀` of the lower bound `c ≥ exp(−h^{−2/3+ε₀})`, checked as a regime flag only.
    pub eps0: f64,
    /// `O(h^∞)` widening of `Ω₊` in the overlap regime, taken as `h^{widen}`.
    pub widen_exp: f64,
    pub nodes_per_edge: usize,
}

impl Default for SandwichParams {
    fn default() -> Self {
        Self { mexp: 4.0, eps0: 0.1, widen_exp: 10.0, nodes_per_edge: 64 }
    }
}

/// `(Ω₋, Ω₊)` for the exponent `nexp`.
pub fn sandwich_boxes(window: &SpectralBox, nexp: f64, h: f64, widen: f64) -> (SpectralBox, SpectralBox) {
    let c = window.c;
    let minus = SpectralBox { a: window.a + c, b: window.b - c, c: h.powf(nexp) * c * c };
    let grow = h.powf(-nexp) * c.sqrt() + widen;
    let plus = SpectralBox { a: window.a - grow, b: window.b + grow, c: grow };
    (minus, plus)
}

/// Checks `N_Q(Ω₋) ≤ N_P(Ω) ≤ N_Q(Ω₊)`, with `N_P` from the oracle's
/// argument principle and `N_Q` from the CAP spectrum.
pub fn theorem2_sandwich(
    m: &SemiclassicalModel,
    g: &Grid,
    c: &CapProfile,
    window: &SpectralBox,
    nexp: f64,
    params: &SandwichParams,
) -> Result<ComparisonReport> {
    let q = assemble_q_cap(m, g, c)?;
    let spectrum = eig_dense(&q, false)?;
    let n_p = argument_count(m, window, params.nodes_per_edge)?;
    sandwich_from_counts(m, c, &spectrum, n_p, window, nexp, params)
}

/// The sandwich on a precomputed CAP spectrum and oracle count.
pub fn sandwich_from_counts(
    m: &SemiclassicalModel,
    c: &CapProfile,
    cap: &Spectrum,
    n_p: i64,
    window: &SpectralBox,
    nexp: f64,
    params: &SandwichParams,
) -> Result<ComparisonReport> {
    let h = m.h;
    let mut flags = Vec::new();
    validate_window(m, window, params, &mut flags)?;
    let regime = validate_cap(c, m).regime;
    let widen = if regime == CapRegime::CaseB { h.powf(params.widen_exp) } else { 0.0 };
    let (minus, plus) = sandwich_boxes(window, nexp, h, widen);
    if minus.c > window.c || minus.a > minus.b {
        return Err(Error::InvalidWindow(format!("Ω₋ = {minus:?} is not contained in Ω = {window:?}")));
    }
    let n_minus = filter_box(cap, &minus).len() as i64;
    let n_plus = filter_box(cap, &plus).len() as i64;
    let mut report = ComparisonReport::new(Direction::CountingSandwich);
    report.sandwich = Some(SandwichCounts {
        window: *window,
        minus,
        plus,
        n_q_minus: n_minus,
        n_p,
        n_q_plus: n_plus,
        lower_holds: n_minus <= n_p,
        upper_holds: n_p <= n_plus,
        regime,
    });
    report.parameters.insert("h".into(), h);
    report.parameters.insert("c".into(), window.c);
    report.parameters.insert("N".into(), nexp);
    report.parameters.insert("Mexp".into(), params.mexp);
    report.parameters.insert("widening".into(), widen);
    report.flags = flags;
    Ok(report)
}

fn validate_window(m: &SemiclassicalModel, w: &SpectralBox, p: &SandwichParams, flags: &mut Vec<String>) -> Result<()> {
    let h = m.h;
    if !(m.a0 <= w.a && w.a < w.b && w.b <= m.b0) {
        return Err(Error::InvalidWindow(format!("window must satisfy a₀ ≤ a < b ≤ b₀, got [{}, {}]", w.a, w.b)));
    }
    if w.b - w.a < 2.0 * w.c {
        return Err(Error::InvalidWindow(format!("window must satisfy b − a ≥ 2c (c = {})", w.c)));
    }
    if w.c > h.powf(p.mexp) * (1.0 + 1e-12) {
        return Err(Error::InvalidWindow(format!("depth c = {} exceeds h^M = {}", w.c, h.powf(p.mexp))));
    }
    let lower = (-h.powf(-2.0 / 3.0 + p.eps0)).exp();
    if w.c < lower {
        flags.push(format!("depth c = {:e} below exp(−h^(−2/3+ε₀)) = {:e}: outside the asymptotic regime", w.c, lower));
    }
    Ok(())
}

/// Smallest exponent on `grid` for which both sandwich inequalities hold.
pub fn fit_sandwich_exponent(
    m: &SemiclassicalModel,
    c: &CapProfile,
    cap: &Spectrum,
    n_p: i64,
    window: &SpectralBox,
    grid: &[f64],
    params: &SandwichParams,
) -> Result<Option<ComparisonReport>> {
    for &nexp in grid {
        let report = sandwich_from_counts(m, c, cap, n_p, window, nexp, params)?;
        if report.sandwich.as_ref().is_some_and(|s| s.lower_holds && s.upper_holds) {
            return Ok(Some(report));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_grid, PiecewisePotential};
    use crate::operators::assemble_p_dirichlet;
    use crate::spectra::Method;

    #[test]
    fn zero_cap_is_self_adjoint() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let g = make_grid(6.0, 199).unwrap();
        let c = CapProfile::none(3.0, 4.0);
        let q = assemble_q_cap(&m, &g, &c).unwrap();
        let s = eig_dense(&q, true).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.im.abs() <= 1e-12));
        assert!(absorption_identity_check(&q, &s, &c).unwrap().iter().all(|&r| r <= 1e-12));
    }

    #[test]
    fn absorption_needs_vectors_and_cap() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let g = make_grid(6.0, 99).unwrap();
        let c = CapProfile::benchmark();
        let q = assemble_q_cap(&m, &g, &c).unwrap();
        let s = eig_dense(&q, false).unwrap();
        assert!(matches!(absorption_identity_check(&q, &s, &c), Err(Error::InvalidInput(_))));
        let p = assemble_p_dirichlet(&m, &g).unwrap();
        let sp = eig_dense(&p, true).unwrap();
        assert!(matches!(absorption_identity_check(&p, &sp, &c), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn resolvent_margins() {
        let m = SemiclassicalModel::new(0.1, PiecewisePotential::zero(), 0.5, 1.0, 0.5, 1.5);
        let g = make_grid(6.0, 99).unwrap();
        let q = assemble_q_cap(&m, &g, &CapProfile::none(3.0, 4.0)).unwrap();
        let margins = resolvent_bound_check(&q, &[c64::new(0.0, 1.0), c64::new(1.0, 100.0)]).unwrap();
        assert!(margins.iter().all(|&x| x >= -1e-12), "{margins:?}");
        assert!(matches!(resolvent_bound_check(&q, &[c64::new(1.0, 0.0)]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn self_match_fits_zero() {
        let s = Spectrum::from_values(vec![c64::new(0.8, -1e-12), c64::new(1.2, -1e-10)], Method::Oracle, 0.1);
        let p = Theorem1Params { c_box: 1.0, a0: 0.5, b0: 1.5, gamma: 0.5, b_const: 2.0, dx: 0.02, nsharp: 1 };
        let r = theorem1_match(&s, &s, Direction::ResonanceToCap, 0.1, &p).unwrap();
        assert_eq!(r.fitted_c1, 0.0);
        assert!(r.pairs.iter().all(|x| x.distance == 0.0 && x.box_satisfied));
        assert!(r.verify());
    }

    #[test]
    fn ineligible_points_are_skipped() {
        let src = Spectrum::from_values(vec![c64::new(0.8, -0.3), c64::new(2.5, 0.0)], Method::Cap, 0.1);
        let tgt = Spectrum::from_values(vec![c64::new(0.8, 0.0)], Method::Oracle, 0.1);
        let p = Theorem1Params { c_box: 1.0, a0: 0.5, b0: 1.5, gamma: 0.5, b_const: 2.0, dx: 0.02, nsharp: 1 };
        let r = theorem1_match(&src, &tgt, Direction::CapToResonance, 0.1, &p).unwrap();
        assert!(r.pairs.is_empty());
        assert_eq!(r.flags.len(), 1);
        let empty = Spectrum::from_values(vec![], Method::Oracle, 0.1);
        assert!(matches!(
            theorem1_match(&src, &empty, Direction::CapToResonance, 0.1, &p),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn sandwich_boxes_nest() {
        let w = SpectralBox::new(0.6, 1.0, 1e-4).unwrap();
        for nexp in [0.0, 1.0, 3.5] {
            let (minus, plus) = sandwich_boxes(&w, nexp, 0.1, 0.0);
            assert!(minus.a >= w.a && minus.b <= w.b && minus.c <= w.c);
            assert!(plus.a <= w.a && plus.b >= w.b && plus.c >= w.c);
        }
    }

    #[test]
    fn sandwich_window_errors() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let c = CapProfile::benchmark();
        let s = Spectrum::from_values(vec![], Method::Cap, 0.1);
        let p = SandwichParams::default();
        let narrow = SpectralBox::new(0.8, 0.80001, 1e-4).unwrap();
        assert!(matches!(sandwich_from_counts(&m, &c, &s, 0, &narrow, 1.0, &p), Err(Error::InvalidWindow(_))));
        let deep = SpectralBox::new(0.6, 1.0, 1e-3).unwrap();
        assert!(matches!(sandwich_from_counts(&m, &c, &s, 0, &deep, 1.0, &p), Err(Error::InvalidWindow(_))));
        let ok = SpectralBox::new(0.6, 1.0, 1e-4).unwrap();
        assert!(matches!(sandwich_from_counts(&m, &c, &s, 0, &ok, -5.0, &p), Err(Error::InvalidWindow(_))));
        let r = sandwich_from_counts(&m, &c, &s, 0, &ok, 1.0, &p).unwrap();
        let counts = r.sandwich.unwrap();
        assert_eq!((counts.n_q_minus, counts.n_p, counts.n_q_plus), (0, 0, 0));
        assert!(!r.flags.is_empty());
    }
}
