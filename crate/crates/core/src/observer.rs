//! Attacker observers and their constraints over miss variables.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::constraint::{Constraint, PbOp, Var};
use crate::sim::ConcreteTrace;

/// What the attacker sees of a hit/miss trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Observer {
    /// Total number of misses.
    MissCount,
    /// Hit/miss bits at the given 1-based trace positions.
    Sequence(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Observation {
    Count(u64),
    /// `true` is a miss.
    Bits(Vec<bool>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ObserverError {
    #[error("observer positions must be strictly increasing and start at 1")]
    BadPositions,
    #[error("position {position} is beyond the {len}-access trace")]
    OutOfRange { position: usize, len: usize },
    #[error("cannot parse observer `{0}`: expected `count` or `seq:1,2,3`")]
    BadObserver(String),
    #[error("cannot parse observation `{0}`")]
    BadObservation(String),
    #[error("observation {0} does not match the observer")]
    Mismatch(String),
}

impl Observer {
    pub fn sequence(positions: Vec<usize>) -> Result<Observer, ObserverError> {
        if positions.is_empty() || positions[0] == 0 || positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ObserverError::BadPositions);
        }
        Ok(Observer::Sequence(positions))
    }

    /// Sees every position of an `n`-access trace.
    pub fn full_sequence(n: usize) -> Result<Observer, ObserverError> {
        Observer::sequence((1..=n).collect())
    }

    /// Parses an observation in the CLI syntax for this observer: a count
    /// such as `3`, or bits such as `1,1,0` (also `m,m,h` or `mmh`).
    pub fn parse_observation(&self, text: &str) -> Result<Observation, ObserverError> {
        let text = text.trim();
        let bad = || ObserverError::BadObservation(text.to_string());
        match self {
            Observer::MissCount => text.parse().map(Observation::Count).map_err(|_| bad()),
            Observer::Sequence(pos) => {
                let items: Vec<&str> = if text.contains(',') {
                    text.split(',').map(str::trim).collect()
                } else {
                    text.split_terminator("").skip(1).collect()
                };
                let bits = items
                    .iter()
                    .map(|s| match *s {
                        "1" | "m" => Ok(true),
                        "0" | "h" => Ok(false),
                        _ => Err(bad()),
                    })
                    .collect::<Result<Vec<bool>, _>>()?;
                if bits.len() != pos.len() {
                    return Err(ObserverError::Mismatch(text.to_string()));
                }
                Ok(Observation::Bits(bits))
            }
        }
    }

    pub fn accepts(&self, obs: &Observation) -> bool {
        match (self, obs) {
            (Observer::MissCount, Observation::Count(_)) => true,
            (Observer::Sequence(p), Observation::Bits(b)) => p.len() == b.len(),
            _ => false,
        }
    }
}

impl FromStr for Observer {
    type Err = ObserverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "count" {
            return Ok(Observer::MissCount);
        }
        let list = s.strip_prefix("seq:").ok_or_else(|| ObserverError::BadObserver(s.to_string()))?;
        let positions = list
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ObserverError::BadObserver(s.to_string()))?;
        Observer::sequence(positions)
    }
}

impl fmt::Display for Observer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observer::MissCount => f.write_str("count"),
            Observer::Sequence(p) => {
                let list: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                write!(f, "seq:{}", list.join(","))
            }
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Count(n) => write!(f, "{}", n),
            Observation::Bits(b) => {
                let list: Vec<&str> = b.iter().map(|m| if *m { "1" } else { "0" }).collect();
                f.write_str(&list.join(","))
            }
        }
    }
}

/// Applies `observer` to a concrete trace.
pub fn observe(trace: &ConcreteTrace, observer: &Observer) -> Result<Observation, ObserverError> {
    match observer {
        Observer::MissCount => Ok(Observation::Count(trace.miss_count() as u64)),
        Observer::Sequence(pos) => {
            let misses = trace.misses();
            pos.iter()
                .map(|p| {
                    misses.get(p.wrapping_sub(1)).copied().ok_or(ObserverError::OutOfRange { position: *p, len: misses.len() })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Observation::Bits)
        }
    }
}

/// The observation as a constraint over the miss variables of one path
/// with `n_e` accesses.
pub fn constrain(observer: &Observer, obs: &Observation, path_id: usize, n_e: usize) -> Result<Constraint, ObserverError> {
    match (observer, obs) {
        (Observer::MissCount, Observation::Count(n)) => {
            let vars: Vec<Var> = (1..=n_e).map(|i| Var::miss(path_id, i)).collect();
            if *n > n_e as u64 {
                return Ok(Constraint::False);
            }
            Ok(Constraint::pb(vars, PbOp::Eq, *n as i64))
        }
        (Observer::Sequence(pos), Observation::Bits(bits)) if pos.len() == bits.len() => {
            if pos.iter().any(|p| *p > n_e) {
                return Ok(Constraint::False);
            }
            Ok(Constraint::and(pos.iter().zip(bits).map(|(p, b)| Constraint::var_eq(Var::miss(path_id, *p), *b as i64))))
        }
        _ => Err(ObserverError::Mismatch(obs.to_string())),
    }
}
