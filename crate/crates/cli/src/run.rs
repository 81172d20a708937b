use std::fmt::Write as _;
use std::path::Path;

use capres::analysis::{
    absorption_identity_check, fit_sandwich_exponent, resolvent_bound_check, theorem1_match, ComparisonReport,
    Direction, SandwichParams, Theorem1Params,
};
use capres::model::{make_grid, Grid, SemiclassicalModel};
use capres::operators::{
    assemble_p_dirichlet, assemble_p_theta, assemble_q_cap, theta_derivative_inequality_check, validate_cap,
    DiscreteOperator, ScalingProfile,
};
use capres::oracle::{argument_count, find_resonances_in_box, ResonanceSearch};
use capres::spectra::{contour_projector_count, eig_dense, filter_box, Method, Rect, SpectralBox, Spectrum};
use capres::{c64, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Check, Format, RunConfig};
use crate::output::{h_tag, Sink};

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

type Staged<T> = Result<T, StageError>;

trait InStage<T> {
    fn stage(self, stage: &'static str) -> Staged<T>;
}

impl<T, E: std::fmt::Display> InStage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Staged<T> {
        self.map_err(|e| StageError { stage, message: e.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OperatorChoice {
    Cap,
    Scaled,
    Dirichlet,
}

pub struct Ctx {
    pub config: RunConfig,
    pub sink: Sink,
    pub seed: u64,
}

struct OracleWindow {
    window: SpectralBox,
    search: ResonanceSearch,
}

#[derive(Serialize)]
struct CheckOutcome {
    check: String,
    h: f64,
    hard: bool,
    pass: bool,
    detail: String,
}

impl Ctx {
    fn grid(&self) -> Staged<Grid> {
        make_grid(self.config.grid.radius, self.config.grid.n).stage("grid")
    }

    fn model(&self, h: f64) -> SemiclassicalModel {
        self.config.model.with_h(h)
    }

    fn scaling(&self) -> Staged<ScalingProfile> {
        self.config.scaling.ok_or_else(|| StageError { stage: "operators", message: "no scaling profile configured".into() })
    }

    fn operator(&self, m: &SemiclassicalModel, g: &Grid, which: OperatorChoice) -> Staged<DiscreteOperator> {
        match which {
            OperatorChoice::Cap => assemble_q_cap(m, g, &self.config.cap),
            OperatorChoice::Scaled => assemble_p_theta(m, g, &self.scaling()?),
            OperatorChoice::Dirichlet => assemble_p_dirichlet(m, g),
        }
        .stage("operators")
    }

    fn oracle(&self, m: &SemiclassicalModel) -> Staged<Vec<OracleWindow>> {
        self.config
            .windows
            .iter()
            .map(|w| {
                let search = find_resonances_in_box(m, w, 64).stage("oracle")?;
                Ok(OracleWindow { window: *w, search })
            })
            .collect()
    }

    fn write_spectrum(&self, s: &Spectrum) -> Staged<()> {
        let base = format!("spectrum_{}_{}", s.method.as_str(), h_tag(s.h));
        if self.sink.wants(Format::Csv) {
            self.sink.csv(&format!("{base}.csv"), &s.to_csv()).stage("output")?;
        }
        if self.sink.wants(Format::Json) {
            self.sink.json(&format!("{base}.json"), serde_json::to_value(s).expect("spectrum serializes")).stage("output")?;
        }
        Ok(())
    }

    fn write_oracle(&self, found: &[OracleWindow], h: f64, suffix: &str) -> Staged<()> {
        if self.sink.wants(Format::Json) {
            let windows: Vec<Value> = found
                .iter()
                .map(|o| json!({ "window": o.window, "count": o.search.count, "roots": o.search.roots }))
                .collect();
            let doc = json!({ "method": "oracle", "h": h, "windows": windows });
            self.sink.json(&format!("oracle_resonances{suffix}.json"), doc).stage("output")?;
        }
        if self.sink.wants(Format::Csv) {
            let mut body = String::new();
            for (i, o) in found.iter().enumerate() {
                let csv = o.search.to_csv(h);
                body.push_str(if i == 0 { &csv } else { csv.split_once('\n').map_or("", |x| x.1) });
            }
            if found.is_empty() {
                body = ResonanceSearch { count: 0, roots: Vec::new() }.to_csv(h);
            }
            self.sink.csv(&format!("oracle_resonances{suffix}.csv"), &body).stage("output")?;
        }
        Ok(())
    }

    fn write_report(&self, name: &str, r: &ComparisonReport) -> Staged<()> {
        if self.sink.wants(Format::Json) {
            self.sink.json(&format!("{name}.json"), serde_json::to_value(r).expect("report serializes")).stage("output")?;
        }
        if self.sink.wants(Format::Csv) && r.direction != Direction::CountingSandwich {
            self.sink.csv(&format!("{name}.csv"), &r.to_csv()).stage("output")?;
        }
        Ok(())
    }

    fn write_plot(&self, spectra: &[&Spectrum], oracle: &[OracleWindow], h: f64, suffix: &str) -> Staged<()> {
        if !self.sink.wants(Format::Csv) {
            return Ok(());
        }
        let mut body = String::from("re,im,method,h\n");
        for s in spectra {
            for z in &s.eigenvalues {
                let _ = writeln!(body, "{:.16e},{:.16e},{},{:.16e}", z.re, z.im, s.method.as_str(), s.h);
            }
        }
        for o in oracle {
            for z in o.search.points() {
                let _ = writeln!(body, "{:.16e},{:.16e},oracle,{h:.16e}", z.re, z.im);
            }
        }
        self.sink.csv(&format!("plot{suffix}.csv"), &body).stage("output")?;
        Ok(())
    }

    fn oracle_spectrum(found: &[OracleWindow], h: f64) -> Spectrum {
        let mut points: Vec<c64> = found.iter().flat_map(|o| o.search.points()).collect();
        points.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        points.dedup();
        Spectrum::from_values(points, Method::Oracle, h)
    }

    fn suffix(&self, h: f64) -> String {
        if self.config.h_values().len() > 1 {
            format!("_{}", h_tag(h))
        } else {
            String::new()
        }
    }

    pub fn spectrum(&self, which: OperatorChoice) -> Staged<()> {
        let g = self.grid()?;
        for h in self.config.h_values() {
            let op = self.operator(&self.model(h), &g, which)?;
            let s = eig_dense(&op, false).stage("spectra")?;
            self.write_spectrum(&s)?;
        }
        Ok(())
    }

    pub fn oracle_only(&self) -> Staged<()> {
        for h in self.config.h_values() {
            let found = self.oracle(&self.model(h))?;
            self.write_oracle(&found, h, &self.suffix(h))?;
        }
        Ok(())
    }

    /// Both matching directions and, for every admissible window, the counting sandwich.
    fn comparisons(&self, m: &SemiclassicalModel, cap: &Spectrum, found: &[OracleWindow]) -> Staged<Vec<(String, ComparisonReport)>> {
        let g = self.grid()?;
        let params = Theorem1Params::new(m, &self.config.cap, g.dx());
        let oracle = Self::oracle_spectrum(found, m.h);
        let suffix = self.suffix(m.h);
        let mut out = Vec::new();
        if !oracle.is_empty() {
            let forward = theorem1_match(&oracle, cap, Direction::ResonanceToCap, m.h, &params).stage("analysis")?;
            out.push((format!("report_theorem1{suffix}"), forward));
            let backward = theorem1_match(cap, &oracle, Direction::CapToResonance, m.h, &params).stage("analysis")?;
            out.push((format!("report_theorem1_reverse{suffix}"), backward));
        }
        let grid: Vec<f64> = (0..=16).map(|i| 0.5 * i as f64).collect();
        let sp = SandwichParams::default();
        for (i, o) in found.iter().enumerate() {
            match fit_sandwich_exponent(m, &self.config.cap, cap, o.search.count, &o.window, &grid, &sp) {
                Ok(Some(r)) => out.push((format!("report_theorem2_w{i}{suffix}"), r)),
                Ok(None) => {}
                Err(Error::InvalidWindow(_)) => {}
                Err(e) => return Err(e).stage("analysis"),
            }
        }
        Ok(out)
    }

    pub fn compare(&self) -> Staged<()> {
        let g = self.grid()?;
        for h in self.config.h_values() {
            let m = self.model(h);
            let cap = eig_dense(&self.operator(&m, &g, OperatorChoice::Cap)?, false).stage("spectra")?;
            let found = self.oracle(&m)?;
            for (name, r) in self.comparisons(&m, &cap, &found)? {
                self.write_report(&name, &r)?;
            }
        }
        Ok(())
    }

    /// Spectrum, oracle, comparisons and plot data for every `h` of the sweep.
    pub fn sweep(&self) -> Staged<()> {
        let g = self.grid()?;
        for h in self.config.h_values() {
            let m = self.model(h);
            let suffix = format!("_{}", h_tag(h));
            let cap = eig_dense(&self.operator(&m, &g, OperatorChoice::Cap)?, false).stage("spectra")?;
            self.write_spectrum(&cap)?;
            let found = self.oracle(&m)?;
            self.write_oracle(&found, h, &suffix)?;
            for (name, r) in self.comparisons(&m, &cap, &found)? {
                let name = if name.ends_with(&suffix) { name } else { format!("{name}{suffix}") };
                self.write_report(&name, &r)?;
            }
            self.write_plot(&[&cap], &found, h, &suffix)?;
        }
        Ok(())
    }

    /// Runs the configured checks; returns whether every hard check passed.
    pub fn run(&self) -> Staged<bool> {
        let g = self.grid()?;
        let mut outcomes = Vec::new();
        for h in self.config.h_values() {
            let m = self.model(h);
            let suffix = self.suffix(h);
            let q = self.operator(&m, &g, OperatorChoice::Cap)?;
            let want_vectors = self.config.checks.contains(&Check::AbsorptionIdentity);
            let cap = eig_dense(&q, want_vectors).stage("spectra")?;
            self.write_spectrum(&cap)?;
            let found = self.oracle(&m)?;
            self.write_oracle(&found, h, &suffix)?;
            let mut plotted = vec![&cap];
            let scaled;
            if let Some(s) = self.config.scaling {
                if s.shape == capres::operators::ScalingShape::SmoothStep {
                    scaled = eig_dense(&assemble_p_theta(&m, &g, &s).stage("operators")?, false).stage("spectra")?;
                    self.write_spectrum(&scaled)?;
                    plotted.push(&scaled);
                }
            }
            self.write_plot(&plotted, &found, h, &suffix)?;
            let verdict = validate_cap(&self.config.cap, &m);
            for v in &verdict.violations {
                eprintln!("warning: h = {h}: {v}");
            }
            for &check in &self.config.checks {
                let (pass, detail) = self.check(check, &m, &g, &q, &cap, &found, &plotted)?;
                outcomes.push(CheckOutcome { check: check.name(), h, hard: check.is_hard(), pass, detail });
            }
        }
        for o in &outcomes {
            let tag = match (o.pass, o.hard) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "NOTE",
            };
            println!("{tag} {} h={}: {}", o.check, o.h, o.detail);
        }
        let ok = outcomes.iter().all(|o| o.pass || !o.hard);
        self.sink
            .json("checks.json", json!({ "allHardChecksPass": ok, "checks": outcomes }))
            .stage("output")?;
        Ok(ok)
    }

    #[allow(clippy::too_many_arguments)]
    fn check(
        &self,
        check: Check,
        m: &SemiclassicalModel,
        g: &Grid,
        q: &DiscreteOperator,
        cap: &Spectrum,
        found: &[OracleWindow],
        spectra: &[&Spectrum],
    ) -> Staged<(bool, String)> {
        let h = m.h;
        Ok(match check {
            Check::AbsorptionIdentity => {
                let r = absorption_identity_check(q, cap, &self.config.cap).stage("analysis")?;
                let worst = r.iter().copied().fold(0.0, f64::max);
                (worst <= 1e-10, format!("max normalized residual {worst:.3e} over {} pairs", r.len()))
            }
            Check::ResolventBound => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let samples: Vec<c64> = (0..20)
                    .map(|_| c64::new(rng.gen_range(m.a0..=m.b0), 1.0 - rng.gen_range(0.0..1.0)))
                    .collect();
                let margins = resolvent_bound_check(q, &samples).stage("analysis")?;
                let ok = samples.iter().zip(&margins).all(|(z, &d)| d >= -1e-12 * (1.0 + z.norm()));
                let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
                (ok, format!("min margin {worst:.3e} over {} seeded samples", samples.len()))
            }
            Check::OracleConsistency => {
                let mut ok = true;
                let mut parts = Vec::new();
                for o in found {
                    let worst = o.search.roots.iter().map(|r| r.relative_residual()).fold(0.0, f64::max);
                    ok &= o.search.count == o.search.root_count() && worst <= 1e-10;
                    parts.push(format!("winding {} vs {} roots", o.search.count, o.search.root_count()));
                }
                (ok, parts.join("; "))
            }
            Check::ContourProjector => {
                let mut ok = true;
                let mut evaluated = 0;
                let mut parts = Vec::new();
                for w in &self.config.windows {
                    // the CAP spectrum lies in the closed lower half-plane
                    let rect = Rect { im_max: w.c, ..w.rect() };
                    let spacing = (rect.re_max - rect.re_min).max(rect.im_max - rect.im_min) / 64.0;
                    if cap.eigenvalues.iter().any(|&z| rect.boundary_distance(z) < 2.0 * spacing) {
                        parts.push(format!("[{}, {}]: eigenvalue within two node spacings of the contour, skipped", w.a, w.b));
                        continue;
                    }
                    let expected = cap.eigenvalues.iter().filter(|&&z| rect.contains(z)).count() as i64;
                    let got = contour_projector_count(q, &rect, 64).stage("spectra")?.count;
                    ok &= got == expected;
                    evaluated += 1;
                    parts.push(format!("[{}, {}]: {got} vs {expected}", w.a, w.b));
                }
                (ok && evaluated > 0, parts.join("; "))
            }
            Check::Theorem1 => {
                let reports = self.comparisons(m, cap, found)?;
                let mut parts = Vec::new();
                for (name, r) in &reports {
                    self.write_report(name, r)?;
                    match r.direction {
                        Direction::ResonanceToCap => parts.push(format!("fitted C1 = {:.3e}", r.fitted_c1)),
                        Direction::CapToResonance => parts.push(format!("fitted C2 = {:.3e}", r.fitted_c2)),
                        Direction::CountingSandwich => {}
                    }
                }
                (!parts.is_empty(), parts.join(", "))
            }
            Check::CountingSandwich => {
                let grid: Vec<f64> = (0..=16).map(|i| 0.5 * i as f64).collect();
                let sp = SandwichParams::default();
                let mut ok = true;
                let mut parts = Vec::new();
                for w in &self.config.windows {
                    let n_p = argument_count(m, w, sp.nodes_per_edge).stage("oracle")?;
                    match fit_sandwich_exponent(m, &self.config.cap, cap, n_p, w, &grid, &sp) {
                        Ok(Some(r)) => {
                            let n = r.parameters.get("N").copied().unwrap_or(f64::NAN);
                            parts.push(format!("[{}, {}]: fitted N = {n}", w.a, w.b));
                        }
                        Ok(None) => {
                            ok = false;
                            parts.push(format!("[{}, {}]: no exponent on the scan grid", w.a, w.b));
                        }
                        Err(Error::InvalidWindow(e)) => parts.push(format!("[{}, {}]: not a sandwich window ({e})", w.a, w.b)),
                        Err(e) => return Err(e).stage("analysis"),
                    }
                }
                (ok, parts.join("; "))
            }
            Check::ComplexScaling => {
                let scaled = spectra.iter().find(|s| s.method == Method::Scaled);
                let oracle = Self::oracle_spectrum(found, h);
                match scaled {
                    Some(s) if !oracle.is_empty() => {
                        let worst = oracle
                            .eigenvalues
                            .iter()
                            .map(|&z| (s.eigenvalues[s.nearest(z).expect("nonempty")] - z).norm())
                            .fold(0.0, f64::max);
                        (true, format!("max distance to oracle {worst:.3e} at dx = {:.3e}", g.dx()))
                    }
                    _ => (false, "needs a smoothStep profile and oracle resonances".into()),
                }
            }
            Check::ThetaInequality => {
                let s = self.scaling()?;
                let profile = ScalingProfile::exponential(s.onset, s.k, s.theta0).stage("operators")?;
                let r = theta_derivative_inequality_check(&profile, h, 10.0, 0.1, 100_000).stage("operators")?;
                (r.pass, format!("max violation {:.3e} at r = {:.6}", r.max_violation, r.worst_r))
            }
            Check::DomainTruncation => {
                let wider_n = ((self.config.grid.radius + 2.0) * (g.len() + 1) as f64 / self.config.grid.radius).round() as usize - 1;
                let wide = make_grid(self.config.grid.radius + 2.0, wider_n).stage("grid")?;
                let other = eig_dense(&assemble_q_cap(m, &wide, &self.config.cap).stage("operators")?, false).stage("spectra")?;
                let mut ok = true;
                let mut worst: f64 = 0.0;
                for w in &self.config.windows {
                    let a = filter_box(cap, w);
                    let b = filter_box(&other, w);
                    ok &= a.len() == b.len();
                    for &z in &a.eigenvalues {
                        if let Some(j) = b.nearest(z) {
                            worst = worst.max((b.eigenvalues[j] - z).norm());
                        }
                    }
                }
                ok &= worst <= 1e-8;
                (ok, format!("max shift {worst:.3e} for R → R + 2 at dx = {:.3e}", g.dx()))
            }
        })
    }

    /// Merges every JSON artifact in the output directory into `report.json`.
    pub fn report(&self) -> Staged<()> {
        let dir: &Path = &self.sink.dir;
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .stage("report")?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(".json") && n != "report.json" && !n.starts_with('.'))
            .collect();
        names.sort();
        let mut files = serde_json::Map::new();
        for n in names {
            let text = std::fs::read_to_string(dir.join(&n)).stage("report")?;
            let value: Value = serde_json::from_str(&text).stage("report")?;
            files.insert(n, value);
        }
        self.sink.json("report.json", json!({ "files": files })).stage("output")?;
        Ok(())
    }
}
