use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use super::{matvec, norm2};
use crate::error::{Error, Result};
use crate::model::{CutoffFunction, Grid, SemiclassicalModel};
use crate::operators::{assemble_p_dirichlet, CapProfile, CapRegime, DiscreteOperator, ScalingProfile};
use crate::spectra::{SpectralBox, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasimodeEntry {
    pub energy: f64,
    #[serde(skip)]
    pub u: Vec<c64>,
    pub support_radius: f64,
}

/// Unit-norm, compactly supported approximate eigenvectors with a common
/// residual bound `R(h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasimodeSet {
    #[serde(skip)]
    pub grid: Grid,
    pub entries: Vec<QuasimodeEntry>,
    pub residual_bound: f64,
    /// `(N, M)` of the independence hypothesis.
    pub independence: (f64, f64),
}

impl QuasimodeSet {
    pub fn new(grid: Grid, entries: Vec<QuasimodeEntry>, residual_bound: f64, independence: (f64, f64)) -> Result<Self> {
        for (k, e) in entries.iter().enumerate() {
            if e.u.len() != grid.len() {
                return Err(Error::InvalidInput(format!("quasimode {k} has the wrong length")));
            }
            if (norm2(&e.u) - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!("quasimode {k} is not normalized")));
            }
            let outside = grid
                .nodes()
                .iter()
                .zip(&e.u)
                .any(|(x, u)| x.abs() > e.support_radius && *u != c64::new(0.0, 0.0));
            if outside {
                return Err(Error::InvalidInput(format!("quasimode {k} does not vanish beyond its support radius")));
            }
        }
        if residual_bound.is_nan() || residual_bound < 0.0 {
            return Err(Error::InvalidInput("residual bound must be nonnegative".into()));
        }
        Ok(Self { grid, entries, residual_bound, independence })
    }

    /// Builds the set with `R(h)` equal to the largest measured residual against `p`.
    pub fn measured(p: &DiscreteOperator, entries: Vec<QuasimodeEntry>, independence: (f64, f64)) -> Result<Self> {
        let bound = entries.iter().map(|e| residual(p, e.energy, &e.u)).fold(0.0, f64::max);
        Self::new(p.grid.clone(), entries, bound, independence)
    }

    /// `max ‖(P − E_j)u_j‖` against `p`.
    pub fn max_residual(&self, p: &DiscreteOperator) -> f64 {
        self.entries.iter().map(|e| residual(p, e.energy, &e.u)).fold(0.0, f64::max)
    }

    /// Smallest singular value of the Gram matrix `⟨u_i, u_j⟩`.
    pub fn gram_sigma_min(&self) -> Result<f64> {
        let m = self.entries.len();
        let gram = Mat::from_fn(m, m, |i, j| {
            self.entries[i].u.iter().zip(&self.entries[j].u).map(|(a, b)| a.conj() * b).sum::<c64>()
        });
        let sv = gram
            .singular_values()
            .map_err(|e| Error::NumericalFailure(format!("gram singular values: {e:?}")))?;
        Ok(sv.last().copied().unwrap_or(0.0))
    }
}

/// `‖(P − E)u‖`.
fn residual(p: &DiscreteOperator, e: f64, u: &[c64]) -> f64 {
    let pu = matvec(p, u);
    let r: Vec<c64> = pu.iter().zip(u).map(|(a, b)| a - b * e).collect();
    norm2(&r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffQuasimode {
    pub entry: QuasimodeEntry,
    /// Measured `‖(P_R − E)χf‖ / ‖χf‖`.
    pub residual: f64,
    /// `‖χf‖` for unit `f`.
    pub cut_norm: f64,
    /// Model size of the residual: `√(−Im z)` for CAP eigenvectors,
    /// `h^{1/2}√(−Im z)` for resonant states.
    pub model_bound: f64,
    /// `1 − √(−Im z/δ₀)`; zero for resonant states.
    pub normalization_guard: f64,
    /// `‖χf‖ ≥ 1/2`.
    pub localized: bool,
    pub regime: CapRegime,
}

fn cut(m: &SemiclassicalModel, g: &Grid, z: c64, f: &[c64], chi: &CutoffFunction) -> Result<(QuasimodeEntry, f64, f64)> {
    if f.len() != g.len() {
        return Err(Error::InvalidInput("vector length does not match the grid".into()));
    }
    let norm = norm2(f);
    if norm == 0.0 {
        return Err(Error::InvalidInput("zero vector".into()));
    }
    let chif: Vec<c64> = g.nodes().iter().zip(f).map(|(&x, v)| v * (chi.eval(x) / norm)).collect();
    let cut_norm = norm2(&chif);
    if cut_norm == 0.0 {
        return Err(Error::InvalidCutoff("cut-off vector vanishes".into()));
    }
    let p = assemble_p_dirichlet(m, g)?;
    let rho = residual(&p, z.re, &chif) / cut_norm;
    let u: Vec<c64> = chif.iter().map(|v| v / cut_norm).collect();
    Ok((QuasimodeEntry { energy: z.re, u, support_radius: chi.support() }, rho, cut_norm))
}

/// Cuts a CAP eigenvector off before the wall and measures it as a quasimode of `P_R`.
pub fn quasimode_from_q_eigenpair(
    m: &SemiclassicalModel,
    g: &Grid,
    c: &CapProfile,
    z: c64,
    f: &[c64],
    chi: &CutoffFunction,
) -> Result<CutoffQuasimode> {
    if chi.support() >= g.radius() {
        return Err(Error::InvalidCutoff(format!(
            "cutoff support {} must end before the wall at {}",
            chi.support(),
            g.radius()
        )));
    }
    let (entry, residual, cut_norm) = cut(m, g, z, f, chi)?;
    let width = (-z.im).max(0.0);
    let regime = if chi.plateau() >= c.r2 { CapRegime::CaseA } else { CapRegime::CaseB };
    Ok(CutoffQuasimode {
        entry,
        residual,
        cut_norm,
        model_bound: width.sqrt(),
        normalization_guard: 1.0 - (width / c.delta0).sqrt(),
        localized: cut_norm >= 0.5,
        regime,
    })
}

/// Restricts a scaled eigenvector to the unscaled region and measures it as a quasimode of `P_R`.
pub fn quasimode_from_resonant_state(
    m: &SemiclassicalModel,
    g: &Grid,
    s: &ScalingProfile,
    z: c64,
    u: &[c64],
    chi: &CutoffFunction,
) -> Result<CutoffQuasimode> {
    if chi.support() >= s.onset {
        return Err(Error::InvalidCutoff(format!(
            "cutoff support {} reaches the scaled region beyond B = {}",
            chi.support(),
            s.onset
        )));
    }
    let (entry, residual, cut_norm) = cut(m, g, z, u, chi)?;
    let regime = if chi.plateau() < m.r0_prime { CapRegime::CaseB } else { CapRegime::CaseA };
    Ok(CutoffQuasimode {
        entry,
        residual,
        cut_norm,
        model_bound: m.h.sqrt() * (-z.im).max(0.0).sqrt(),
        normalization_guard: 0.0,
        localized: cut_norm >= 0.5,
        regime,
    })
}

/// `(|u(±ρ)|² + |h u′(±ρ)|²) / Σ_{|x_j|<ρ} |u_j|² dx`, with `±ρ` snapped to grid nodes.
pub fn boundary_decay_probe(g: &Grid, u: &[c64], rho: f64, h: f64) -> Result<f64> {
    if u.len() != g.len() {
        return Err(Error::InvalidArgument("vector length does not match the grid".into()));
    }
    if !(rho > 0.0 && rho < g.radius() - 2.0 * g.dx()) {
        return Err(Error::InvalidArgument(format!("ρ = {rho} must lie strictly inside the grid")));
    }
    let dx = g.dx();
    let mut boundary = 0.0;
    for x in [-rho, rho] {
        let j = g.nearest(x);
        let du = (u[j + 1] - u[j - 1]) * (h / (2.0 * dx));
        boundary += u[j].norm_sqr() + du.norm_sqr();
    }
    let interior: f64 = g
        .nodes()
        .iter()
        .zip(u)
        .filter(|(x, _)| x.abs() < rho)
        .map(|(_, v)| v.norm_sqr() * dx)
        .sum();
    if interior == 0.0 {
        return Err(Error::InvalidArgument("u vanishes inside B(0, ρ)".into()));
    }
    Ok(boundary / interior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct QuasimodeParams {
    /// The product `C₀·B·M` in front of `R(h)`.
    pub c0bm: f64,
    /// `B` of the exponential floor `e^{−B/h}`.
    pub b_const: f64,
    pub nsharp: u32,
    /// `C` of the residual regime `R ≤ h^{n♯+N+1}/(C log 1/h)`.
    pub c_regime: f64,
}

impl Default for QuasimodeParams {
    fn default() -> Self {
        Self { c0bm: 1.0, b_const: 2.0, nsharp: 1, c_regime: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QuasimodeVerdict {
    pub region: SpectralBox,
    pub c: f64,
    pub count: usize,
    pub required: usize,
    pub holds: bool,
    pub gram_sigma_min: f64,
    pub gram_threshold: f64,
    /// Smallest `C₀BM` for which the box would contain `required` points.
    pub fitted_c0bm: f64,
    pub regime_ok: bool,
}

/// Box `[min E − c log(1/h), max E + c log(1/h)] + i[−c, 0]` with
/// `c = max(C₀BM·R(h)·h^{−n♯−N−1}, e^{−B/h})`, and whether `target` has at
/// least as many points in it as there are quasimodes.
pub fn quasimode_implies_spectrum(
    qs: &QuasimodeSet,
    target: &Spectrum,
    h: f64,
    params: &QuasimodeParams,
) -> Result<QuasimodeVerdict> {
    if qs.entries.is_empty() {
        return Err(Error::InvalidInput("empty quasimode set".into()));
    }
    let (n_exp, m_const) = qs.independence;
    let threshold = (h.powf(n_exp) / m_const).powi(2);
    let sigma = qs.gram_sigma_min()?;
    if sigma < threshold * (1.0 - 1e-12) {
        return Err(Error::IndependenceViolated { sigma_min: sigma, threshold });
    }
    let log = (1.0 / h).ln();
    let scale = qs.residual_bound * h.powf(-(params.nsharp as f64) - n_exp - 1.0);
    let tail = (-params.b_const / h).exp();
    let c = (params.c0bm * scale).max(tail);
    let e_min = qs.entries.iter().map(|e| e.energy).fold(f64::INFINITY, f64::min);
    let e_max = qs.entries.iter().map(|e| e.energy).fold(f64::NEG_INFINITY, f64::max);
    let region = SpectralBox { a: e_min - c * log, b: e_max + c * log, c };
    let count = target.eigenvalues.iter().filter(|z| region.contains(**z)).count();
    let required = qs.entries.len();

    let mut needed: Vec<f64> = target
        .eigenvalues
        .iter()
        .filter(|z| z.im <= 0.0)
        .map(|z| {
            let off = (e_min - z.re).max(z.re - e_max).max(0.0);
            (off / log).max(-z.im)
        })
        .collect();
    needed.sort_by(f64::total_cmp);
    let fitted_c0bm = match needed.get(required - 1) {
        Some(&c_star) if c_star <= tail => 0.0,
        Some(&c_star) if scale > 0.0 => c_star / scale,
        _ => f64::INFINITY,
    };
    let regime_ok = qs.residual_bound <= h.powf(params.nsharp as f64 + n_exp + 1.0) / (params.c_regime * log);
    Ok(QuasimodeVerdict {
        region,
        c,
        count,
        required,
        holds: count >= required,
        gram_sigma_min: sigma,
        gram_threshold: threshold,
        fitted_c0bm,
        regime_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_cutoff, make_grid, PiecewisePotential};
    use crate::spectra::{eig_dense, Method};

    fn free(h: f64) -> SemiclassicalModel {
        SemiclassicalModel::new(h, PiecewisePotential::zero(), 0.5, 1.0, 0.5, 1.5)
    }

    fn sine_mode(g: &Grid, k: usize) -> Vec<c64> {
        let r = g.radius();
        let v: Vec<c64> = g
            .nodes()
            .iter()
            .map(|&x| c64::new((k as f64 * std::f64::consts::PI * (x + r) / (2.0 * r)).sin(), 0.0))
            .collect();
        let n = norm2(&v);
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn probe_vanishes_for_interior_support() {
        let g = make_grid(4.0, 399).unwrap();
        let u: Vec<c64> = g.nodes().iter().map(|&x| c64::new(if x.abs() < 1.0 { 1.0 } else { 0.0 }, 0.0)).collect();
        assert_eq!(boundary_decay_probe(&g, &u, 2.0, 0.1).unwrap(), 0.0);
        assert!(boundary_decay_probe(&g, &u, 3.99, 0.1).is_err());
    }

    #[test]
    fn probe_is_order_one_for_free_modes() {
        let g = make_grid(4.0, 399).unwrap();
        let u = sine_mode(&g, 3);
        let v = boundary_decay_probe(&g, &u, 1.0, 0.1).unwrap();
        assert!(v > 0.05 && v < 10.0, "{v}");
    }

    #[test]
    fn exact_eigenvectors_force_spectrum() {
        let m = free(0.1);
        let g = make_grid(4.0, 199).unwrap();
        let p = assemble_p_dirichlet(&m, &g).unwrap();
        let s = eig_dense(&p, true).unwrap();
        let vectors = s.eigenvectors.as_ref().unwrap();
        let entries: Vec<QuasimodeEntry> = (3..5)
            .map(|k| QuasimodeEntry { energy: s.eigenvalues[k].re, u: vectors[k].clone(), support_radius: 4.0 })
            .collect();
        let qs = QuasimodeSet::measured(&p, entries, (0.0, 2.0)).unwrap();
        assert!(qs.residual_bound <= 1e-10);
        let verdict = quasimode_implies_spectrum(&qs, &s, 0.1, &QuasimodeParams::default()).unwrap();
        assert!(verdict.holds);
        assert!(verdict.c <= 1e-6);
    }

    #[test]
    fn parallel_quasimodes_violate_independence() {
        let g = make_grid(4.0, 99).unwrap();
        let u = sine_mode(&g, 2);
        let w: Vec<c64> = u
            .iter()
            .zip(sine_mode(&g, 3))
            .map(|(a, b)| a + b * 1e-6)
            .collect();
        let nw = norm2(&w);
        let w: Vec<c64> = w.iter().map(|x| x / nw).collect();
        let entries = vec![
            QuasimodeEntry { energy: 0.5, u, support_radius: 4.0 },
            QuasimodeEntry { energy: 0.5, u: w, support_radius: 4.0 },
        ];
        let qs = QuasimodeSet::new(g, entries, 1e-3, (1.0, 1.0)).unwrap();
        let target = Spectrum::from_values(vec![c64::new(0.5, 0.0)], Method::Cap, 0.1);
        assert!(matches!(
            quasimode_implies_spectrum(&qs, &target, 0.1, &QuasimodeParams::default()),
            Err(Error::IndependenceViolated { .. })
        ));
    }

    #[test]
    fn unscaled_state_reproduces_solver_residual() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let g = make_grid(6.0, 299).unwrap();
        let s = ScalingProfile::smooth_step(3.0, 1.0, 0.0).unwrap();
        let p = assemble_p_dirichlet(&m, &g).unwrap();
        let spec = eig_dense(&p, true).unwrap();
        let k = spec.nearest(c64::new(0.534, 0.0)).unwrap();
        let chi = make_cutoff(2.8, 2.95).unwrap();
        let q = quasimode_from_resonant_state(&m, &g, &s, spec.eigenvalues[k], &spec.eigenvectors.as_ref().unwrap()[k], &chi)
            .unwrap();
        // the tail beyond the barrier sets the residual: compare with h^{1/2}√(−Im z)
        // at the resonance 0.53446… − 3.2311e-12i
        let bound = (0.1f64).sqrt() * 3.231131396895838e-12f64.sqrt();
        assert!(q.residual > 0.0 && q.residual <= 20.0 * bound, "{} {}", q.residual, bound);
        let wide = make_cutoff(2.8, 3.2).unwrap();
        assert!(matches!(
            quasimode_from_resonant_state(&m, &g, &s, spec.eigenvalues[k], &spec.eigenvectors.as_ref().unwrap()[k], &wide),
            Err(Error::InvalidCutoff(_))
        ));
    }

    #[test]
    fn cutting_through_the_well_is_measured_not_clamped() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let g = make_grid(6.0, 299).unwrap();
        let c = CapProfile::benchmark();
        let q = crate::operators::assemble_q_cap(&m, &g, &c).unwrap();
        let spec = eig_dense(&q, true).unwrap();
        let k = spec.nearest(c64::new(0.767, 0.0)).unwrap();
        let f = &spec.eigenvectors.as_ref().unwrap()[k];
        let good = quasimode_from_q_eigenpair(&m, &g, &c, spec.eigenvalues[k], f, &make_cutoff(4.5, 5.5).unwrap()).unwrap();
        let bad = quasimode_from_q_eigenpair(&m, &g, &c, spec.eigenvalues[k], f, &make_cutoff(0.2, 0.6).unwrap()).unwrap();
        assert!(good.localized && good.regime == CapRegime::CaseA);
        assert!(bad.residual > 100.0 * good.residual.max(1e-12), "{} {}", bad.residual, good.residual);
        assert!(matches!(
            quasimode_from_q_eigenpair(&m, &g, &c, spec.eigenvalues[k], f, &make_cutoff(5.0, 6.5).unwrap()),
            Err(Error::InvalidCutoff(_))
        ));
    }
}
