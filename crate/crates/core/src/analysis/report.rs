use std::collections::BTreeMap;
use std::fmt::Write as _;

use faer::c64;
use serde::{Deserialize, Serialize};

use super::{required_radius, Theorem1Params};
use crate::operators::CapRegime;
use crate::spectra::SpectralBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    ResonanceToCap,
    CapToResonance,
    CountingSandwich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchPair {
    pub source: c64,
    pub target: c64,
    pub distance: f64,
    pub box_satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SandwichCounts {
    pub window: SpectralBox,
    pub minus: SpectralBox,
    pub plus: SpectralBox,
    pub n_q_minus: i64,
    pub n_p: i64,
    pub n_q_plus: i64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub regime: CapRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub direction: Direction,
    pub pairs: Vec<MatchPair>,
    #[serde(rename = "fittedC1")]
    pub fitted_c1: f64,
    #[serde(rename = "fittedC2")]
    pub fitted_c2: f64,
    pub parameters: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theorem1: Option<Theorem1Params>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sandwich: Option<SandwichCounts>,
}

impl ComparisonReport {
    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            pairs: Vec::new(),
            fitted_c1: 0.0,
            fitted_c2: 0.0,
            parameters: BTreeMap::new(),
            flags: Vec::new(),
            theorem1: None,
            sandwich: None,
        }
    }

    fn fitted(&self) -> f64 {
        match self.direction {
            Direction::ResonanceToCap => self.fitted_c1,
            _ => self.fitted_c2,
        }
    }

    /// Box verdict for one pair, from the stored constants.
    pub fn box_formula(&self, pair: &MatchPair) -> bool {
        let (Some(p), Some(&h)) = (self.theorem1, self.parameters.get("h")) else {
            return false;
        };
        let (bracket, tail) = p.bracket(self.direction, pair.source, h);
        let eps = self.fitted() * bracket + tail;
        // relative slack absorbs the rounding in the fitted constant
        required_radius(pair.source, pair.target, h) <= eps * (1.0 + 1e-12)
    }

    /// Recomputes every `box_satisfied` from the box formula.
    pub fn refresh(&mut self) {
        let verdicts: Vec<bool> = self.pairs.iter().map(|p| self.box_formula(p)).collect();
        for (p, v) in self.pairs.iter_mut().zip(verdicts) {
            p.box_satisfied = v;
        }
    }

    /// True when no stored verdict contradicts the box formula.
    pub fn verify(&self) -> bool {
        self.pairs.iter().all(|p| p.box_satisfied == self.box_formula(p))
    }

    pub fn all_satisfied(&self) -> bool {
        match (&self.sandwich, self.direction) {
            (Some(s), Direction::CountingSandwich) => s.lower_holds && s.upper_holds,
            _ => self.pairs.iter().all(|p| p.box_satisfied),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV: one row per pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction,source_re,source_im,target_re,target_im,distance,box_satisfied\n");
        let direction = serde_json::to_value(self.direction).expect("direction serializes");
        let direction = direction.as_str().unwrap_or_default().to_owned();
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{direction},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                p.source.re, p.source.im, p.target.re, p.target.im, p.distance, p.box_satisfied
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_verdict_is_detected() {
        let mut r = ComparisonReport::new(Direction::ResonanceToCap);
        r.theorem1 = Some(Theorem1Params { c_box: 1.0, a0: 0.5, b0: 1.5, gamma: 0.5, b_const: 2.0, dx: 0.0, nsharp: 1 });
        r.parameters.insert("h".into(), 0.1);
        r.pairs.push(MatchPair {
            source: c64::new(1.0, -1e-10),
            target: c64::new(1.1, -1e-10),
            distance: 0.1,
            box_satisfied: true,
        });
        assert!(!r.verify());
        r.refresh();
        assert!(r.verify());
        assert!(!r.pairs[0].box_satisfied);
    }

    #[test]
    fn json_round_trip() {
        let mut r = ComparisonReport::new(Direction::CapToResonance);
        r.fitted_c2 = 1.5;
        r.parameters.insert("h".into(), 0.05);
        let text = r.to_json();
        assert!(text.contains("\"fittedC2\": 1.5"));
        let back: ComparisonReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().starts_with("direction,"));
    }
}
