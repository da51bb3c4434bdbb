use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version of the JSON report layout. Readers accept any `1.x`.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub cache: String,
    pub policy: String,
    pub set_bits: u32,
    pub line_bits: u32,
    pub assoc: u32,
    /// How the set count follows from the cache size.
    pub derivation: String,
    pub input_bits: u32,
    pub segments: u32,
    pub segment_bits: u32,
    pub mode: String,
    pub backend: String,
    pub prune: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationEcho {
    pub paths: usize,
    pub exhausted: bool,
    pub steps: usize,
    pub undecided_branches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneEcho {
    pub forced_miss: usize,
    pub forced_hit: usize,
    pub kept: usize,
    pub inconclusive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    /// 1-based.
    pub index: u32,
    pub bits: u32,
    /// `U_i`: values of this segment ruled out.
    pub refuted: u64,
    pub consistent: u64,
    pub unknown: u64,
    /// `2^(N/K)`, as a decimal string.
    pub out_of: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredicateRef {
    pub segment: u32,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub explore: f64,
    pub model: f64,
    pub predicates: f64,
    pub count: f64,
    pub total: f64,
}

/// Result of one quantification run. Counts too large for 64 bits are
/// decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakReport {
    pub schema_version: String,
    pub program: String,
    pub config: ConfigEcho,
    pub observer: String,
    pub observation: String,
    pub exploration: ExplorationEcho,
    /// Whether any explored path can produce the observation; `None` when undecided.
    pub realizable: Option<bool>,
    /// Atomic formulas over all path models, after pruning if enabled.
    pub gamma_atoms: usize,
    pub pruning: Option<PruneEcho>,
    pub segments: Vec<SegmentReport>,
    pub refuted: Vec<PredicateRef>,
    pub consistent: Vec<PredicateRef>,
    pub unknown: Vec<PredicateRef>,
    pub lower_bound: String,
    pub exact: Option<String>,
    pub partial_bound: Option<String>,
    pub errors: Vec<String>,
    pub timing_ms: Timing,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unsupported report schema version `{0}`")]
    Version(String),
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
}

fn big(s: &str) -> BigUint {
    BigUint::from_str(s).unwrap_or_default()
}

impl LeakReport {
    /// `U_1..U_K`.
    pub fn u(&self) -> Vec<u64> {
        self.segments.iter().map(|s| s.refuted).collect()
    }

    pub fn lower_bound_value(&self) -> BigUint {
        big(&self.lower_bound)
    }

    pub fn exact_value(&self) -> Option<BigUint> {
        self.exact.as_deref().map(big)
    }

    pub fn partial_bound_value(&self) -> Option<BigUint> {
        self.partial_bound.as_deref().map(big)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Parses a report, rejecting schema versions with an unknown major number.
    pub fn from_json(text: &str) -> Result<LeakReport, ReportError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("schema_version").and_then(|v| v.as_str()).unwrap_or("").to_string();
        let major = SCHEMA_VERSION.split('.').next().unwrap_or("1");
        if version.split('.').next() != Some(major) {
            return Err(ReportError::Version(version));
        }
        Ok(serde_json::from_value(value)?)
    }

    /// A copy with timing zeroed, for comparing runs.
    pub fn without_timing(&self) -> LeakReport {
        let mut r = self.clone();
        r.timing_ms = Timing { explore: 0.0, model: 0.0, predicates: 0.0, count: 0.0, total: 0.0 };
        r
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{}: observer {} saw {} on {} ({} paths{})\n",
            self.program,
            self.observer,
            self.observation,
            self.config.cache,
            self.exploration.paths,
            if self.exploration.exhausted { "" } else { ", not exhausted" }
        );
        if self.realizable == Some(false) {
            out.push_str("observation unrealizable\n");
        }
        for s in &self.segments {
            out.push_str(&format!("segment {}: {} values eliminated out of {}\n", s.index, s.refuted, s.out_of));
        }
        out.push_str(&format!("lower bound: {}\n", self.lower_bound));
        if let Some(e) = &self.exact {
            out.push_str(&format!("exact leak: {}\n", e));
        }
        if let Some(p) = &self.partial_bound {
            out.push_str(&format!("partial-path bound: {}\n", p));
        }
        out
    }
}
