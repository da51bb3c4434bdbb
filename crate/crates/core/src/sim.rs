//! Concrete execution through an LRU cache simulator.
//!
//! The interpreter here shares no code with the symbolic executor; it is
//! the reference the symbolic model is checked against.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cache::CacheConfig;
use crate::constraint::width_mask;
use crate::program::{input_bytes, Cond, Expr, MemRef, MiniProgram, Statement, StmtId};
use crate::solver::DEFAULT_INPUT_BIT_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Outcome {
    Hit,
    Miss,
}

impl Outcome {
    pub fn symbol(self) -> char {
        match self {
            Outcome::Hit => 'h',
            Outcome::Miss => 'm',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access {
    pub stmt: StmtId,
    pub address: u64,
    pub set: u64,
    pub tag: u64,
    pub outcome: Outcome,
}

/// Hit/miss trace of one concrete run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcreteTrace {
    pub accesses: Vec<Access>,
}

impl ConcreteTrace {
    /// The trace as a string over `{h, m}`.
    pub fn symbols(&self) -> String {
        self.accesses.iter().map(|a| a.outcome.symbol()).collect()
    }

    pub fn misses(&self) -> Vec<bool> {
        self.accesses.iter().map(|a| a.outcome == Outcome::Miss).collect()
    }

    pub fn miss_count(&self) -> usize {
        self.accesses.iter().filter(|a| a.outcome == Outcome::Miss).count()
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }
}

impl fmt::Display for ConcreteTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbols())
    }
}

/// Per-set tag lists, most recently used first.
#[derive(Clone, Debug)]
pub struct ConcreteCacheState {
    config: CacheConfig,
    sets: HashMap<u64, Vec<u64>>,
}

impl ConcreteCacheState {
    pub fn empty(config: &CacheConfig) -> Self {
        ConcreteCacheState { config: *config, sets: HashMap::new() }
    }

    /// Performs one access and updates recency.
    pub fn access(&mut self, addr: u64) -> Outcome {
        let set = self.config.set_of(addr);
        let tag = self.config.tag_of(addr);
        let lines = self.sets.entry(set).or_default();
        if let Some(pos) = lines.iter().position(|t| *t == tag) {
            let t = lines.remove(pos);
            lines.insert(0, t);
            Outcome::Hit
        } else {
            lines.insert(0, tag);
            lines.truncate(self.config.assoc as usize);
            Outcome::Miss
        }
    }

    /// Tags resident in `set`, most recent first.
    pub fn lines(&self, set: u64) -> &[u64] {
        self.sets.get(&set).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("{stmt}: address {address:#x} is outside `{object}`")]
    OutOfBounds { stmt: StmtId, object: String, address: u64 },
    #[error("expected {expected} input bytes, got {got}")]
    InputLength { expected: u32, got: usize },
    #[error("full enumeration of {bits} input bits exceeds the cap of {cap}")]
    TooManyInputs { bits: u32, cap: u32 },
    #[error("the histogram needs at least one sample")]
    NoSamples,
}

struct Machine<'p> {
    program: &'p MiniProgram,
    inputs: &'p [u8],
    regs: HashMap<&'p str, u64>,
    cache: ConcreteCacheState,
    trace: ConcreteTrace,
}

impl<'p> Machine<'p> {
    fn mask(&self) -> u64 {
        width_mask(self.program.addr_width)
    }

    fn eval(&self, e: &Expr) -> u64 {
        match e {
            Expr::Lit(v) => v & self.mask(),
            Expr::Input(b) => self.inputs[*b as usize] as u64,
            Expr::Reg(r) => self.regs[r.as_str()],
            Expr::Base(o) => self.program.object(o).map(|o| o.base).unwrap_or(0),
            Expr::Bin(op, a, b) => op.apply(self.eval(a), self.eval(b), self.program.addr_width),
        }
    }

    fn test(&self, c: &Cond) -> bool {
        match c {
            Cond::Cmp(op, a, b) => op.holds(self.eval(a), self.eval(b)),
            Cond::Not(c) => !self.test(c),
            Cond::And(a, b) => self.test(a) && self.test(b),
            Cond::Or(a, b) => self.test(a) || self.test(b),
        }
    }

    fn touch(&mut self, stmt: StmtId, mem: &MemRef) -> Result<(), SimError> {
        let obj = self.program.object(&mem.object).expect("validated object");
        let address = obj.base.wrapping_add(self.eval(&mem.index)) & self.mask();
        if !obj.contains(address) {
            return Err(SimError::OutOfBounds { stmt, object: obj.name.clone(), address });
        }
        let outcome = self.cache.access(address);
        let cfg = &self.cache.config;
        self.trace.accesses.push(Access { stmt, address, set: cfg.set_of(address), tag: cfg.tag_of(address), outcome });
        Ok(())
    }

    fn run(&mut self, stmts: &'p [Statement]) -> Result<(), SimError> {
        for s in stmts {
            match s {
                Statement::Load { id, mem } | Statement::Store { id, mem, .. } => self.touch(*id, mem)?,
                Statement::Assign { reg, value } => {
                    let v = self.eval(value);
                    self.regs.insert(reg.as_str(), v);
                }
                Statement::If { cond, then_branch, else_branch } => {
                    if self.test(cond) {
                        self.run(then_branch)?;
                    } else {
                        self.run(else_branch)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs `program` on `inputs` (big-endian bytes) from an empty cache.
pub fn simulate(program: &MiniProgram, inputs: &[u8], config: &CacheConfig) -> Result<ConcreteTrace, SimError> {
    if inputs.len() != program.input.bytes as usize {
        return Err(SimError::InputLength { expected: program.input.bytes, got: inputs.len() });
    }
    let mut m = Machine {
        program,
        inputs,
        regs: HashMap::new(),
        cache: ConcreteCacheState::empty(config),
        trace: ConcreteTrace::default(),
    };
    m.run(&program.body)?;
    Ok(m.trace)
}

/// Which inputs a histogram covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputRange {
    Full,
    Sample { n: u64, seed: u64 },
}

/// Number of inputs per total miss count.
pub fn histogram(
    program: &MiniProgram,
    config: &CacheConfig,
    range: InputRange,
) -> Result<BTreeMap<u64, u64>, SimError> {
    let bytes = program.input.bytes;
    let bits = program.input_bits();
    let run = |value: u64| -> Result<u64, SimError> {
        simulate(program, &input_bytes(value, bytes), config).map(|t| t.miss_count() as u64)
    };
    let merge = |mut a: BTreeMap<u64, u64>, b: BTreeMap<u64, u64>| {
        for (k, v) in b {
            *a.entry(k).or_insert(0) += v;
        }
        a
    };
    match range {
        InputRange::Full => {
            if bits > DEFAULT_INPUT_BIT_CAP {
                return Err(SimError::TooManyInputs { bits, cap: DEFAULT_INPUT_BIT_CAP });
            }
            (0..1u64 << bits)
                .into_par_iter()
                .try_fold(BTreeMap::new, |mut h, v| {
                    *h.entry(run(v)?).or_insert(0) += 1;
                    Ok(h)
                })
                .try_reduce(BTreeMap::new, |a, b| Ok(merge(a, b)))
        }
        InputRange::Sample { n, seed } => {
            if n == 0 {
                return Err(SimError::NoSamples);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<u64> =
                (0..n).map(|_| if bits >= 64 { rng.gen() } else { rng.gen_range(0..1u64 << bits) }).collect();
            values
                .into_par_iter()
                .try_fold(BTreeMap::new, |mut h, v| {
                    *h.entry(run(v)?).or_insert(0) += 1;
                    Ok(h)
                })
                .try_reduce(BTreeMap::new, |a, b| Ok(merge(a, b)))
        }
    }
}

/// Two-column `misses,count` records with a header line.
pub fn histogram_csv(hist: &BTreeMap<u64, u64>) -> String {
    let mut out = String::from("misses,count\n");
    for (m, c) in hist {
        out.push_str(&format!("{},{}\n", m, c));
    }
    out
}
