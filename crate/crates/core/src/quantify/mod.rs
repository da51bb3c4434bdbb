//! Leak quantification over segment predicates.
//!
//! The N-bit input is cut into K equal big-endian segments. For every
//! segment value `v` the predicate `segment_i = v` is checked against the
//! disjunction over paths of `gamma_e && phi_e`; an unsatisfiable check
//! refutes the value. The per-segment refutation counts `U_i` give the
//! lower bound `2^N - prod(2^(N/K) - U_i)` on the number of inputs the
//! observation rules out.

mod report;

use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::cache::{build_model, prune, CacheConfig, ModelError, PruneStats, SymbolicCacheModel};
use crate::constraint::{CmpOp, Constraint, Term};
use crate::observer::{constrain, Observation, Observer, ObserverError};
use crate::program::MiniProgram;
use crate::solver::{BackendConfig, BackendKind, EnumerateBackend, SatResult, SolverBackend, SolverError};
use crate::symexec::{explore, Budget, ExplorationResult};

pub use report::{
    ConfigEcho, ExplorationEcho, LeakReport, PredicateRef, PruneEcho, ReportError, SegmentReport, Timing,
    SCHEMA_VERSION,
};

/// Largest segment width for which predicates are generated.
pub const MAX_SEGMENT_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Mode {
    /// Predicate bound plus an exact count of the consistent inputs.
    Exact,
    Bounded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantifyConfig {
    /// Input size N in bits.
    pub input_bits: u32,
    /// Number of segments K.
    pub segments: u32,
    pub mode: Mode,
    pub prune: bool,
    pub parallel: bool,
    pub budget: Budget,
}

impl QuantifyConfig {
    pub fn new(input_bits: u32, segments: u32) -> Self {
        QuantifyConfig { input_bits, segments, mode: Mode::Exact, prune: true, parallel: true, budget: Budget::default() }
    }

    pub fn segment_bits(&self) -> u32 {
        self.input_bits / self.segments
    }

    pub fn validate(&self) -> Result<(), QuantifyError> {
        if self.segments == 0 || self.input_bits == 0 || !self.input_bits.is_multiple_of(self.segments) {
            return Err(QuantifyError::Segments { n: self.input_bits, k: self.segments });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum QuantifyError {
    #[error("K = {k} does not divide N = {n}")]
    Segments { n: u32, k: u32 },
    #[error("segments of {0} bits are too wide to enumerate predicates")]
    SegmentTooWide(u32),
    #[error("program input is {program} bits but the configuration says {config}")]
    InputBits { program: u32, config: u32 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

/// `segment_i = value` over `width` contiguous input bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    /// 1-based segment index.
    pub segment: u32,
    pub value: u64,
    pub width: u32,
}

impl Predicate {
    /// First input bit covered, counting from the most significant bit of `k[0]`.
    pub fn start_bit(&self) -> u32 {
        (self.segment - 1) * self.width
    }

    /// The predicate as one masked equality per touched input byte.
    pub fn constraint(&self) -> Constraint {
        let start = self.start_bit();
        let end = start + self.width;
        let mut atoms = Vec::new();
        for byte in start / 8..end.div_ceil(8) {
            let mut mask = 0u64;
            let mut want = 0u64;
            for p in (byte * 8).max(start)..(byte * 8 + 8).min(end) {
                let bit = 7 - (p % 8);
                mask |= 1 << bit;
                want |= ((self.value >> (end - 1 - p)) & 1) << bit;
            }
            let k = Term::input(byte);
            let lhs = if mask == 0xff { k } else { k.and(Term::constant(mask)) };
            atoms.push(Constraint::cmp(CmpOp::Eq, lhs, Term::constant(want), 8));
        }
        Constraint::and(atoms)
    }

    /// Whether `inputs` (big-endian bytes) satisfy the predicate.
    pub fn holds(&self, inputs: &[u8]) -> bool {
        segment_value(inputs, self.start_bit(), self.width) == self.value
    }
}

/// Value of bits `[start, start + width)` of `inputs`, big-endian.
pub fn segment_value(inputs: &[u8], start: u32, width: u32) -> u64 {
    (start..start + width).fold(0u64, |acc, p| {
        let bit = (inputs[(p / 8) as usize] >> (7 - p % 8)) & 1;
        (acc << 1) | bit as u64
    })
}

/// `K * 2^(N/K)`.
pub fn predicate_count(input_bits: u32, segments: u32) -> Result<BigUint, QuantifyError> {
    if segments == 0 || input_bits == 0 || !input_bits.is_multiple_of(segments) {
        return Err(QuantifyError::Segments { n: input_bits, k: segments });
    }
    Ok(BigUint::from(segments) << (input_bits / segments) as usize)
}

/// All predicates ordered by segment, then value.
pub fn gen_predicates(input_bits: u32, segments: u32) -> Result<Vec<Predicate>, QuantifyError> {
    predicate_count(input_bits, segments)?;
    let width = input_bits / segments;
    if width > MAX_SEGMENT_BITS {
        return Err(QuantifyError::SegmentTooWide(width));
    }
    Ok((1..=segments).flat_map(|segment| (0..1u64 << width).map(move |value| Predicate { segment, value, width })).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Refuted,
    Consistent,
    Unknown,
}

/// Per-path constraints of one analysis: `gamma_e` and `phi_e`.
#[derive(Clone, Debug)]
pub struct PathConstraints {
    pub models: Vec<SymbolicCacheModel>,
    pub phis: Vec<Constraint>,
    /// Whether `gamma_e && phi_e` is satisfiable; `None` when undecided.
    pub realizable: Vec<Option<bool>>,
}

impl PathConstraints {
    pub fn new(
        models: Vec<SymbolicCacheModel>,
        observer: &Observer,
        obs: &Observation,
        backend: &dyn SolverBackend,
    ) -> Result<PathConstraints, QuantifyError> {
        let mut phis = Vec::with_capacity(models.len());
        let mut realizable = Vec::with_capacity(models.len());
        for m in &models {
            let phi = constrain(observer, obs, m.path_id(), m.n_e())?;
            realizable.push(match backend.check_sat_all(&[m.gamma(), &phi]) {
                Ok(SatResult::Sat(_)) => Some(true),
                Ok(SatResult::Unsat) => Some(false),
                _ => None,
            });
            phis.push(phi);
        }
        Ok(PathConstraints { models, phis, realizable })
    }

    /// `Some(true)` if some path realizes the observation, `Some(false)` if
    /// none can.
    pub fn any_realizable(&self) -> Option<bool> {
        if self.realizable.contains(&Some(true)) {
            Some(true)
        } else if self.realizable.iter().all(|r| *r == Some(false)) {
            Some(false)
        } else {
            None
        }
    }

    /// `\/_e (gamma_e && phi_e)`.
    pub fn disjunction(&self) -> Constraint {
        Constraint::or(
            self.models.iter().zip(&self.phis).map(|(m, phi)| Constraint::and([m.gamma().clone(), phi.clone()])),
        )
    }

    pub fn gamma_atoms(&self) -> usize {
        self.models.iter().map(|m| m.gamma().atom_count()).sum()
    }
}

/// Checks `\/_e (gamma_e && phi_e && pi)`: refuted iff every disjunct is unsatisfiable.
pub fn check_predicate(paths: &PathConstraints, pi: &Constraint, backend: &dyn SolverBackend) -> Verdict {
    let mut unknown = false;
    for ((m, phi), real) in paths.models.iter().zip(&paths.phis).zip(&paths.realizable) {
        if *real == Some(false) {
            continue;
        }
        match backend.check_sat_all(&[m.gamma(), phi, pi]) {
            Ok(SatResult::Sat(_)) => return Verdict::Consistent,
            Ok(SatResult::Unsat) => {}
            Ok(SatResult::Unknown(_)) | Err(_) => unknown = true,
        }
    }
    if unknown {
        Verdict::Unknown
    } else {
        Verdict::Refuted
    }
}

fn product(u: &[u64], width: u32) -> BigUint {
    let full = BigUint::one() << width as usize;
    u.iter().fold(BigUint::one(), |acc, ui| {
        let ui = BigUint::from(*ui);
        let rest = if ui > full { BigUint::zero() } else { &full - ui };
        acc * rest
    })
}

/// `2^N - prod_i (2^(N/K) - U_i)`.
pub fn leak_lower_bound(u: &[u64], input_bits: u32) -> BigUint {
    if u.is_empty() {
        return BigUint::zero();
    }
    let width = input_bits / u.len() as u32;
    let total = BigUint::one() << input_bits as usize;
    let p = product(u, width);
    if p > total {
        BigUint::zero()
    } else {
        total - p
    }
}

/// `|\/ pc_e| - prod_i (2^(N/K) - U_i)`, clamped at zero.
pub fn partial_path_bound(pc_count: &BigUint, u: &[u64], input_bits: u32) -> BigUint {
    if u.is_empty() {
        return BigUint::zero();
    }
    let p = product(u, input_bits / u.len() as u32);
    if &p >= pc_count {
        BigUint::zero()
    } else {
        pc_count - p
    }
}

/// `2^N - |\/_e (gamma_e && phi_e)|`.
pub fn leak_exact(paths: &PathConstraints, input_bits: u32, counter: &dyn SolverBackend) -> Result<BigUint, SolverError> {
    let consistent = counter.count_models(&paths.disjunction(), input_bits.div_ceil(8))?;
    let total = BigUint::one() << input_bits as usize;
    Ok(if consistent > total { BigUint::zero() } else { total - consistent })
}

/// The partial-path bound over the explored paths of `paths`.
pub fn leak_partial(
    exploration: &ExplorationResult,
    u: &[u64],
    input_bits: u32,
    counter: &dyn SolverBackend,
) -> Result<BigUint, SolverError> {
    if exploration.paths.is_empty() {
        return Ok(BigUint::zero());
    }
    let covered = Constraint::or(exploration.paths.iter().map(|p| p.pc.clone()));
    let n = counter.count_models(&covered, input_bits.div_ceil(8))?;
    Ok(partial_path_bound(&n, u, input_bits))
}

/// Builds (and optionally prunes) the model of every explored path.
pub fn build_models(
    exploration: &ExplorationResult,
    cache: &CacheConfig,
    prune_models: bool,
    backend: &dyn SolverBackend,
) -> Result<(Vec<SymbolicCacheModel>, Option<PruneStats>), ModelError> {
    let mut models = Vec::with_capacity(exploration.paths.len());
    let mut total = prune_models.then(PruneStats::default);
    for path in &exploration.paths {
        let m = build_model(path, cache)?;
        if let Some(t) = total.as_mut() {
            let (pruned, stats) = prune(&m, backend);
            t.forced_miss += stats.forced_miss;
            t.forced_hit += stats.forced_hit;
            t.kept += stats.kept;
            t.inconclusive += stats.inconclusive;
            models.push(pruned);
        } else {
            models.push(m);
        }
    }
    Ok((models, total))
}

/// Runs every predicate check, in parallel when asked, each worker on its
/// own backend instance. Results are in predicate order.
pub fn check_all(
    paths: &PathConstraints,
    predicates: &[Predicate],
    backend: &BackendConfig,
    parallel: bool,
) -> Vec<Verdict> {
    let check = |b: &mut Box<dyn SolverBackend>, p: &Predicate| check_predicate(paths, &p.constraint(), b.as_ref());
    if parallel {
        predicates.par_iter().map_init(|| backend.build(), check).collect()
    } else {
        let mut b = backend.build();
        predicates.iter().map(|p| check(&mut b, p)).collect()
    }
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// The whole pipeline: explore, model, prune, check predicates, count.
pub fn quantify(
    program: &MiniProgram,
    cache: &CacheConfig,
    observer: &Observer,
    obs: &Observation,
    cfg: &QuantifyConfig,
    backend: &BackendConfig,
) -> Result<LeakReport, QuantifyError> {
    cfg.validate()?;
    if program.input_bits() != cfg.input_bits {
        return Err(QuantifyError::InputBits { program: program.input_bits(), config: cfg.input_bits });
    }
    let predicates = gen_predicates(cfg.input_bits, cfg.segments)?;
    let start = Instant::now();
    let main = backend.build();
    let counter = EnumerateBackend::new(backend.input_bit_cap);

    let t = Instant::now();
    let exploration = explore(program, cfg.budget, main.as_ref())?;
    let explore_ms = millis(t);

    let t = Instant::now();
    let (models, prune_stats) = build_models(&exploration, cache, cfg.prune, main.as_ref())?;
    let paths = PathConstraints::new(models, observer, obs, main.as_ref())?;
    let model_ms = millis(t);

    let t = Instant::now();
    let verdicts = check_all(&paths, &predicates, backend, cfg.parallel);
    let predicate_ms = millis(t);

    let width = cfg.segment_bits();
    let mut segments: Vec<SegmentReport> = (1..=cfg.segments)
        .map(|index| SegmentReport {
            index,
            bits: width,
            refuted: 0,
            consistent: 0,
            unknown: 0,
            out_of: (BigUint::one() << width as usize).to_string(),
        })
        .collect();
    let mut refuted = Vec::new();
    let mut consistent = Vec::new();
    let mut unknown = Vec::new();
    for (p, v) in predicates.iter().zip(&verdicts) {
        let seg = &mut segments[(p.segment - 1) as usize];
        let r = PredicateRef { segment: p.segment, value: p.value };
        match v {
            Verdict::Refuted => {
                seg.refuted += 1;
                refuted.push(r);
            }
            Verdict::Consistent => {
                seg.consistent += 1;
                consistent.push(r);
            }
            Verdict::Unknown => {
                seg.unknown += 1;
                unknown.push(r);
            }
        }
    }
    let u: Vec<u64> = segments.iter().map(|s| s.refuted).collect();
    let lower = leak_lower_bound(&u, cfg.input_bits);

    let mut errors = Vec::new();
    let t = Instant::now();
    let exact = match cfg.mode {
        Mode::Exact => match leak_exact(&paths, cfg.input_bits, &counter) {
            Ok(v) if exploration.exhausted => Some(v),
            Ok(_) => {
                errors.push("exact leak not computed: exploration was cut off by the budget".to_string());
                None
            }
            Err(e) => {
                errors.push(format!("exact leak: {}", e));
                None
            }
        },
        Mode::Bounded => None,
    };
    let partial = if exploration.exhausted {
        None
    } else {
        match leak_partial(&exploration, &u, cfg.input_bits, &counter) {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(format!("partial-path bound: {}", e));
                None
            }
        }
    };
    let count_ms = millis(t);
    if !unknown.is_empty() {
        errors.push(format!("{} predicate checks were inconclusive", unknown.len()));
    }

    let total = cache.sets() * cache.line_size() * cache.assoc as u64;
    Ok(LeakReport {
        schema_version: SCHEMA_VERSION.to_string(),
        program: program.name.clone(),
        config: ConfigEcho {
            cache: cache.to_string(),
            policy: format!("{:?}", cache.policy),
            set_bits: cache.set_bits,
            line_bits: cache.line_bits,
            assoc: cache.assoc,
            derivation: format!(
                "S = log2({} / ({} * {})) = {}",
                total,
                cache.line_size(),
                cache.assoc,
                cache.set_bits
            ),
            input_bits: cfg.input_bits,
            segments: cfg.segments,
            segment_bits: width,
            mode: format!("{:?}", cfg.mode),
            backend: match backend.kind {
                BackendKind::Enumerate => "enumerate".into(),
                BackendKind::ExternalSmt => "smt".into(),
            },
            prune: cfg.prune,
        },
        observer: observer.to_string(),
        observation: obs.to_string(),
        exploration: ExplorationEcho {
            paths: exploration.paths.len(),
            exhausted: exploration.exhausted,
            steps: exploration.budget_used.steps,
            undecided_branches: exploration.budget_used.undecided_branches,
        },
        realizable: paths.any_realizable(),
        gamma_atoms: paths.gamma_atoms(),
        pruning: prune_stats.map(|s| PruneEcho {
            forced_miss: s.forced_miss,
            forced_hit: s.forced_hit,
            kept: s.kept,
            inconclusive: s.inconclusive,
        }),
        segments,
        refuted,
        consistent,
        unknown,
        lower_bound: lower.to_string(),
        exact: exact.map(|v| v.to_string()),
        partial_bound: partial.map(|v| v.to_string()),
        errors,
        timing_ms: Timing { explore: explore_ms, model: model_ms, predicates: predicate_ms, count: count_ms, total: millis(start) },
    })
}
