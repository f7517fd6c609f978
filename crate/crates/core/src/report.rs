//! Structured verdicts for one inequality evaluation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Holds,
    Equality,
    Violated,
}

impl Verdict {
    /// `Violated` iff `deficit < −tol`; `Equality` iff `|deficit| ≤ tol`.
    pub fn classify(deficit: f64, tolerance: f64) -> Self {
        if deficit.is_nan() || deficit < -tolerance {
            Verdict::Violated
        } else if deficit.abs() <= tolerance {
            Verdict::Equality
        } else {
            Verdict::Holds
        }
    }

    pub fn is_pass(self) -> bool {
        self != Verdict::Violated
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Equality => "equality",
            Verdict::Violated => "violated",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub deficit: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub metadata: BTreeMap<String, f64>,
    pub advisories: Vec<String>,
}

impl InequalityReport {
    pub fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let deficit = rhs - lhs;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            deficit,
            tolerance,
            verdict: Verdict::classify(deficit, tolerance),
            metadata: BTreeMap::new(),
            advisories: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.metadata.insert(key.to_string(), value);
        self
    }

    pub fn with_advisory(mut self, note: &str) -> Self {
        self.advisories.push(note.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).copied()
    }

    pub fn passed(&self) -> bool {
        self.verdict.is_pass()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_boundaries() {
        assert_eq!(Verdict::classify(0.0, 1e-9), Verdict::Equality);
        assert_eq!(Verdict::classify(1e-9, 1e-9), Verdict::Equality);
        assert_eq!(Verdict::classify(-1e-9, 1e-9), Verdict::Equality);
        assert_eq!(Verdict::classify(2e-9, 1e-9), Verdict::Holds);
        assert_eq!(Verdict::classify(-2e-9, 1e-9), Verdict::Violated);
        assert_eq!(Verdict::classify(f64::NAN, 1.0), Verdict::Violated);
    }

    #[test]
    fn report_deficit_is_rhs_minus_lhs() {
        let r = InequalityReport::new("t", 2.0 / 3.0, 1.0, 1e-6).with_meta("n", 2.0);
        assert!((r.deficit - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(r.meta("n"), Some(2.0));
    }
}
