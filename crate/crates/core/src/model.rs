//! Problem instances: piecewise-constant potentials, Dirichlet grids, smooth
//! cutoffs and the semiclassical model tying them together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The C^∞ step `s(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)})`, 0 for t ≤ 0 and 1 for t ≥ 1.
pub fn smooth_step(t: f64) -> f64 {
    smooth_step_derivatives(t).0
}

/// `(s, s', s'')` at `t`, in closed form.
///
/// Writing `s = 1 / (1 + e^φ)` with `φ = 1/t - 1/(1-t)` gives
/// `s' = s(1-s)ψ` where `ψ = 1/t² + 1/(1-t)²`.
pub fn smooth_step_derivatives(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let u = 1.0 - t;
    let phi = 1.0 / t - 1.0 / u;
    // s(1-s) = e^φ / (1+e^φ)², evaluated without overflow for |φ| large.
    let (s, s1ms) = if phi > 0.0 {
        let e = (-phi).exp();
        (e / (1.0 + e), e / ((1.0 + e) * (1.0 + e)))
    } else {
        let e = phi.exp();
        (1.0 / (1.0 + e), e / ((1.0 + e) * (1.0 + e)))
    };
    let psi = 1.0 / (t * t) + 1.0 / (u * u);
    let dpsi = -2.0 / (t * t * t) + 2.0 / (u * u * u);
    let ds = s1ms * psi;
    let d2s = ds * (1.0 - 2.0 * s) * psi + s1ms * dpsi;
    (s, ds, d2s)
}

/// Piecewise-constant potential, zero outside `[breakpoints[0], breakpoints[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePotential {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewisePotential {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            if !values.is_empty() {
                return Err(Error::InvalidArgument(
                    "potential values given without breakpoints".into(),
                ));
            }
            return Ok(Self::zero());
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("potential data must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn zero() -> Self {
        Self { breakpoints: Vec::new(), values: Vec::new() }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Constant pieces `(left, right, value)`.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.breakpoints.is_empty() {
            return 0.0;
        }
        // index of the first breakpoint strictly greater than x
        let i = self.breakpoints.partition_point(|&b| b <= x);
        if i == 0 || i == self.breakpoints.len() {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    /// Exact mean of V over `[lo, hi]`.
    pub fn cell_average(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo < hi);
        let integral: f64 = self
            .intervals()
            .map(|(l, r, v)| {
                let overlap = hi.min(r) - lo.max(l);
                if overlap > 0.0 { v * overlap } else { 0.0 }
            })
            .sum();
        integral / (hi - lo)
    }

    /// Split the piece containing `x` without changing any value of V.
    pub fn refined_at(&self, x: f64) -> Self {
        if self.breakpoints.contains(&x) || self.breakpoints.is_empty() {
            return self.clone();
        }
        let i = self.breakpoints.partition_point(|&b| b < x);
        let mut breakpoints = self.breakpoints.clone();
        let mut values = self.values.clone();
        breakpoints.insert(i, x);
        if i == 0 || i == self.breakpoints.len() {
            // new zero-valued piece outside the old support
            values.insert(if i == 0 { 0 } else { values.len() }, 0.0);
        } else {
            values.insert(i, self.values[i - 1]);
        }
        Self { breakpoints, values }
    }

    /// Largest |x| at which V can be non-zero.
    pub fn support_radius(&self) -> f64 {
        match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(l), Some(r)) => l.abs().max(r.abs()),
            _ => 0.0,
        }
    }
}

/// Uniform grid of interior nodes on `(-R, R)` with Dirichlet walls at `±R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    radius: f64,
    n: usize,
    dx: f64,
}

pub fn make_grid(radius: f64, n: usize) -> Result<Grid> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid radius must be positive, got {radius}")));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("grid needs at least 3 nodes, got {n}")));
    }
    Ok(Grid { radius, n, dx: 2.0 * radius / (n as f64 + 1.0) })
}

impl Grid {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node `j` in `0..len()`, i.e. `x_{j+1} = -R + (j+1)dx`.
    ///
    /// Computed as an integer multiple of `dx/2` about the origin so that grids
    /// sharing `dx` agree bitwise on shared nodes.
    pub fn node(&self, j: usize) -> f64 {
        let m = 2 * (j as i64 + 1) - (self.n as i64 + 1);
        m as f64 * (0.5 * self.dx)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let j = ((x + self.radius) / self.dx).round() as i64 - 1;
        j.clamp(0, self.n as i64 - 1) as usize
    }
}

/// Smooth radial cutoff: 1 on `|x| ≤ a`, 0 on `|x| ≥ b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    a: f64,
    b: f64,
}

pub fn make_cutoff(a: f64, b: f64) -> Result<CutoffFunction> {
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("cutoff needs 0 < a < b, got a={a}, b={b}")));
    }
    Ok(CutoffFunction { a, b })
}

impl CutoffFunction {
    pub fn plateau(&self) -> f64 {
        self.a
    }

    pub fn support(&self) -> f64 {
        self.b
    }

    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        if r <= self.a {
            1.0
        } else if r >= self.b {
            0.0
        } else {
            smooth_step((self.b - r) / (self.b - self.a))
        }
    }
}

/// Semiclassical problem `P(h) = -h² d²/dx² + V` with its radii and energy window.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiclassicalModel {
    pub h: f64,
    pub potential: PiecewisePotential,
    /// Support radius of V.
    pub r0: f64,
    /// Start of the free region.
    pub r0_prime: f64,
    pub a0: f64,
    pub b0: f64,
    pub nsharp: u32,
}

impl SemiclassicalModel {
    pub fn new(h: f64, potential: PiecewisePotential, r0: f64, r0_prime: f64, a0: f64, b0: f64) -> Self {
        Self { h, potential, r0, r0_prime, a0, b0, nsharp: 1 }
    }

    /// The double barrier `V = 2` on `1 ≤ |x| ≤ 2`, with `R0 = 2`, `R0' = 2.5`
    /// and window `[0.5, 1.5]`.
    pub fn double_barrier(h: f64) -> Self {
        let potential = PiecewisePotential::new(vec![-2.0, -1.0, 1.0, 2.0], vec![2.0, 0.0, 2.0])
            .expect("static potential is well formed");
        Self::new(h, potential, 2.0, 2.5, 0.5, 1.5)
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }
}

/// JSON document `{h, breakpoints[], values[], R0, R0prime, a0, b0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub h: f64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "R0prime")]
    pub r0_prime: f64,
    pub a0: f64,
    pub b0: f64,
}

impl TryFrom<ModelDocument> for SemiclassicalModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let potential = PiecewisePotential::new(doc.breakpoints, doc.values)?;
        Ok(Self::new(doc.h, potential, doc.r0, doc.r0_prime, doc.a0, doc.b0))
    }
}

impl From<&SemiclassicalModel> for ModelDocument {
    fn from(m: &SemiclassicalModel) -> Self {
        Self {
            h: m.h,
            breakpoints: m.potential.breakpoints.clone(),
            values: m.potential.values.clone(),
            r0: m.r0,
            r0_prime: m.r0_prime,
            a0: m.a0,
            b0: m.b0,
        }
    }
}

impl Serialize for SemiclassicalModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SemiclassicalModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(d)?;
        SemiclassicalModel::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Validation outcome: an empty list means the object is admissible.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Verdict {
    pub violations: Vec<String>,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn require(&mut self, ok: bool, message: impl Into<String>) {
        if !ok {
            self.violations.push(message.into());
        }
    }
}

pub fn validate_model(m: &SemiclassicalModel) -> Verdict {
    let mut v = Verdict::default();
    v.require(m.h > 0.0 && m.h.is_finite(), "semiclassical parameter h must be positive");
    v.require(m.r0 > 0.0, "R₀ must be positive");
    v.require(m.r0 <= m.r0_prime, "radii must satisfy R₀ ≤ R₀′");
    v.require(
        m.potential.support_radius() <= m.r0,
        format!("support exceeds R₀ (V extends to |x| = {})", m.potential.support_radius()),
    );
    v.require(m.a0 > 0.0, "energy window must satisfy 0 < a₀");
    v.require(m.a0 < m.b0, "energy window must satisfy a₀ < b₀");
    v.require(m.nsharp == 1, "n♯ must equal 1 in one dimension");
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_examples() {
        let g = make_grid(6.0, 599).unwrap();
        assert_relative_eq!(g.dx(), 0.02, max_relative = 1e-15);
        assert_relative_eq!(g.node(0), -5.98, max_relative = 1e-15);
        let g = make_grid(2.0, 3).unwrap();
        assert_eq!(g.nodes(), vec![-1.0, 0.0, 1.0]);
        let g = make_grid(6.0, 2399).unwrap();
        assert_relative_eq!(g.dx(), 0.005, max_relative = 1e-15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(0.0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_grid(-1.0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_grid(1.0, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn grids_with_equal_spacing_share_nodes_bitwise() {
        let small = make_grid(6.0, 599).unwrap();
        let large = make_grid(8.0, 799).unwrap();
        assert_eq!(small.dx(), large.dx());
        for j in 0..small.len() {
            assert_eq!(small.node(j), large.node(j + 100));
        }
    }

    #[test]
    fn cutoff_examples() {
        let chi = make_cutoff(2.5, 3.0).unwrap();
        assert_eq!(chi.eval(2.4), 1.0);
        assert_eq!(chi.eval(-2.4), 1.0);
        assert_eq!(chi.eval(3.1), 0.0);
        assert_eq!(chi.eval(2.75), 0.5);
        assert_eq!(chi.eval(2.5), 1.0);
        assert_eq!(chi.eval(3.0), 0.0);
        assert!(matches!(make_cutoff(3.0, 2.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_cutoff(2.0, 2.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cutoff_derivative_peaks_inside_ramp() {
        let chi = make_cutoff(1.0, 2.0).unwrap();
        let step = 1e-4;
        let (mut best, mut at) = (0.0_f64, 0.0);
        let mut x = 0.5;
        while x < 2.5 {
            let d = (chi.eval(x + step) - chi.eval(x - step)) / (2.0 * step);
            assert!(d.is_finite());
            if d.abs() > best {
                best = d.abs();
                at = x;
            }
            x += step;
        }
        assert!(best > 0.0 && best < 10.0);
        assert!(at > 1.0 + 1e-3 && at < 2.0 - 1e-3, "max |χ'| at {at}");
    }

    #[test]
    fn cutoff_flat_at_ramp_ends() {
        let chi = make_cutoff(1.0, 2.0).unwrap();
        let step = 1e-3;
        for x in [1.0, 2.0] {
            let d1 = (chi.eval(x + step) - chi.eval(x - step)) / (2.0 * step);
            let d2 = (chi.eval(x + step) - 2.0 * chi.eval(x) + chi.eval(x - step)) / (step * step);
            assert!(d1.abs() < 1e-6 && d2.abs() < 1e-6, "x={x}: {d1} {d2}");
        }
    }

    #[test]
    fn smooth_step_derivatives_match_finite_differences() {
        for &t in &[0.05, 0.2, 0.37, 0.5, 0.81, 0.95] {
            let step = 1e-6;
            let (_, d1, d2) = smooth_step_derivatives(t);
            let fd1 = (smooth_step(t + step) - smooth_step(t - step)) / (2.0 * step);
            let fd2 = (smooth_step_derivatives(t + step).1 - smooth_step_derivatives(t - step).1)
                / (2.0 * step);
            // difference quotients carry a rounding floor of ~ε/step
            assert_relative_eq!(d1, fd1, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(d2, fd2, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn potential_evaluation_is_half_open() {
        let v = SemiclassicalModel::double_barrier(0.1).potential;
        assert_eq!(v.eval(-2.0), 2.0);
        assert_eq!(v.eval(-1.0), 0.0);
        assert_eq!(v.eval(1.0), 2.0);
        assert_eq!(v.eval(2.0), 0.0);
        assert_eq!(v.eval(1.5), 2.0);
        assert_eq!(v.eval(0.0), 0.0);
        assert_eq!(v.eval(-7.0), 0.0);
    }

    #[test]
    fn cell_average_straddles_jumps() {
        let v = SemiclassicalModel::double_barrier(0.1).potential;
        assert_eq!(v.cell_average(0.99, 1.01), 1.0);
        assert_eq!(v.cell_average(1.2, 1.3), 2.0);
        assert_eq!(v.cell_average(-0.5, 0.5), 0.0);
    }

    #[test]
    fn malformed_potentials_are_rejected() {
        assert!(PiecewisePotential::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(PiecewisePotential::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(PiecewisePotential::new(vec![], vec![1.0]).is_err());
    }

    #[test]
    fn validation_examples() {
        let m = SemiclassicalModel::double_barrier(0.1);
        assert!(validate_model(&m).is_ok());

        let mut wide = m.clone();
        wide.potential = PiecewisePotential::new(vec![-1.0, 3.0], vec![1.0]).unwrap();
        let verdict = validate_model(&wide);
        assert_eq!(verdict.violations.len(), 1);
        assert!(verdict.violations[0].contains("support exceeds R₀"));

        let mut zero_window = m.clone();
        zero_window.a0 = 0.0;
        let verdict = validate_model(&zero_window);
        assert_eq!(verdict.violations, vec!["energy window must satisfy 0 < a₀".to_string()]);

        let mut many = m;
        many.a0 = 0.0;
        many.r0_prime = 1.0;
        assert_eq!(validate_model(&many).violations.len(), 2);
    }

    #[test]
    fn model_json_round_trip_uses_schema_names() {
        let m = SemiclassicalModel::double_barrier(0.1);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"R0prime\":2.5"));
        let back: SemiclassicalModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let bad = text.replace("\"a0\"", "\"a_zero\"");
        assert!(serde_json::from_str::<SemiclassicalModel>(&bad).is_err());
    }
}
