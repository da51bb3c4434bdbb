//! Satisfiability checking and model counting.
//!
//! [`EnumerateBackend`] decides constraints by exhaustively enumerating the
//! input bytes they mention and deriving the 0/1 model variables from
//! their defining implications. [`ExternalSmt`] pipes an SMT-LIB script to
//! an external solver process.

pub mod enumerate;
mod external;
pub mod smtlib;

use std::collections::BTreeMap;
use std::time::Duration;

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::constraint::{Constraint, Var};

pub use enumerate::EnumerateBackend;
pub use external::ExternalSmt;
pub use smtlib::emit_smtlib;

pub const DEFAULT_INPUT_BIT_CAP: u32 = 24;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// A satisfying assignment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// Input bytes, indexed by byte position. Bytes not mentioned read as 0.
    pub inputs: Vec<u8>,
    pub vars: BTreeMap<Var, i64>,
}

impl Witness {
    /// Re-evaluates `c` under this assignment (unassigned variables read as 0).
    pub fn satisfies(&self, c: &Constraint) -> bool {
        c.eval(&self.inputs, &|v| self.vars.get(&v).copied().unwrap_or(0))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum UnknownReason {
    Timeout,
    EmittedOnly,
    SolverSaid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Witness),
    Unsat,
    Unknown(UnknownReason),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }

    pub fn verdict(&self) -> &'static str {
        match self {
            SatResult::Sat(_) => "sat",
            SatResult::Unsat => "unsat",
            SatResult::Unknown(_) => "unknown",
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("constraint mentions {bits} input bits, above the enumeration cap of {cap}")]
    CapExceeded { bits: u32, cap: u32 },
    #[error("too many unconstrained model variables ({0}) to enumerate")]
    TooManyFreeVars(usize),
    #[error("input byte {byte} is outside the {bytes}-byte input space")]
    InputOutOfRange { byte: u32, bytes: u32 },
    #[error("operation not supported by the {0} backend")]
    Unsupported(&'static str),
    #[error("external solver failed: {0}")]
    Process(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum BackendKind {
    Enumerate,
    ExternalSmt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub input_bit_cap: u32,
    pub timeout: Duration,
    /// Command line of the external solver; the script is written to its stdin.
    pub smt_command: Vec<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Enumerate,
            input_bit_cap: DEFAULT_INPUT_BIT_CAP,
            timeout: DEFAULT_TIMEOUT,
            smt_command: vec!["z3".into(), "-in".into(), "-smt2".into()],
        }
    }
}

impl BackendConfig {
    pub fn enumerate() -> Self {
        Self::default()
    }

    pub fn external(command: Vec<String>, timeout: Duration) -> Self {
        BackendConfig { kind: BackendKind::ExternalSmt, smt_command: command, timeout, ..Self::default() }
    }

    /// Creates a fresh backend instance.
    pub fn build(&self) -> Box<dyn SolverBackend> {
        match self.kind {
            BackendKind::Enumerate => Box::new(EnumerateBackend::new(self.input_bit_cap)),
            BackendKind::ExternalSmt => Box::new(ExternalSmt::new(self.smt_command.clone(), self.timeout)),
        }
    }
}

/// A decision procedure for [`Constraint`]s.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Decides the conjunction of `conjuncts`.
    fn check_sat_all(&self, conjuncts: &[&Constraint]) -> Result<SatResult, SolverError>;

    fn check_sat(&self, c: &Constraint) -> Result<SatResult, SolverError> {
        self.check_sat_all(&[c])
    }

    /// Number of assignments to `input_bytes` input bytes that extend to a
    /// satisfying assignment of `c`.
    fn count_models(&self, c: &Constraint, input_bytes: u32) -> Result<BigUint, SolverError>;
}
