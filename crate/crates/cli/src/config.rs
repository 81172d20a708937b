use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use capres::model::{validate_model, SemiclassicalModel};
use capres::operators::{CapProfile, ScalingProfile};
use capres::spectra::SpectralBox;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "capres.run/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    AbsorptionIdentity,
    ResolventBound,
    OracleConsistency,
    ContourProjector,
    Theorem1,
    CountingSandwich,
    ComplexScaling,
    ThetaInequality,
    DomainTruncation,
}

impl Check {
    /// Soft checks report fitted constants and never fail a run.
    pub fn is_hard(self) -> bool {
        !matches!(self, Check::Theorem1 | Check::ComplexScaling)
    }

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub model: SemiclassicalModel,
    pub cap: CapProfile,
    #[serde(default)]
    pub scaling: Option<ScalingProfile>,
    pub grid: GridSpec,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    pub windows: Vec<SpectralBox>,
    #[serde(default)]
    pub checks: Vec<Check>,
    pub output: OutputSpec,
}

/// A configuration problem, anchored to a line of the file when possible.
#[derive(Debug)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

pub struct Loaded {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<Loaded, Vec<Diagnostic>> {
    let diag = |line, message: String| Diagnostic { path: path.to_owned(), line, message };
    let text = std::fs::read_to_string(path).map_err(|e| vec![diag(None, format!("cannot read config: {e}"))])?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| vec![diag(Some(e.line()), e.to_string())])?;
    let sha256 = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let problems: Vec<Diagnostic> = validate(&config)
        .into_iter()
        .map(|(key, message)| diag(line_of(&text, key), message))
        .collect();
    if problems.is_empty() {
        Ok(Loaded { config, sha256 })
    } else {
        Err(problems)
    }
}

/// First line mentioning `"key"`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

/// `(anchor key, message)` for every problem found.
fn validate(c: &RunConfig) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if c.schema != SCHEMA {
        out.push(("schema", format!("unsupported schema {:?}, expected {SCHEMA:?}", c.schema)));
    }
    for v in validate_model(&c.model).violations {
        let key = if v.contains("a₀") || v.contains("b₀") {
            "a0"
        } else if v.contains("support") {
            "breakpoints"
        } else if v.contains("h must") {
            "h"
        } else {
            "model"
        };
        out.push((key, v));
    }
    if !(c.grid.radius > 0.0 && c.grid.n >= 3) {
        out.push(("grid", "grid needs R > 0 and N ≥ 3".into()));
    }
    if c.grid.radius <= c.cap.r2 {
        out.push(("grid", format!("grid radius R = {} must exceed the floor radius R2 = {}", c.grid.radius, c.cap.r2)));
    }
    if c.windows.is_empty() {
        out.push(("windows", "at least one window is required".into()));
    }
    for w in &c.windows {
        if SpectralBox::new(w.a, w.b, w.c).is_err() {
            out.push(("windows", format!("window [{}, {}] × {} needs a < b and c > 0", w.a, w.b, w.c)));
        }
    }
    if let Some(sweep) = &c.sweep {
        if sweep.is_empty() || sweep.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            out.push(("sweep", "sweep values must be positive".into()));
        }
        let mut seen = sweep.clone();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        if seen.len() != sweep.len() {
            out.push(("sweep", "sweep values must be distinct".into()));
        }
    }
    let needs_scaling = c.checks.iter().any(|k| matches!(k, Check::ComplexScaling | Check::ThetaInequality));
    if needs_scaling && c.scaling.is_none() {
        out.push(("checks", "complex_scaling and theta_inequality need a scaling profile".into()));
    }
    if c.output.formats.is_empty() {
        out.push(("formats", "at least one output format is required".into()));
    }
    if c.checks.iter().collect::<BTreeSet<_>>().len() != c.checks.len() {
        out.push(("checks", "checks must not repeat".into()));
    }
    out
}

impl RunConfig {
    pub fn h_values(&self) -> Vec<f64> {
        self.sweep.clone().unwrap_or_else(|| vec![self.model.h])
    }
}
