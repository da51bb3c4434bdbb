//! Symbolic cache model over one explored path.
//!
//! For every access `r_i` of a path trace the model introduces a 0/1
//! variable `miss_i` and, under LRU, one unique-conflict indicator for
//! every earlier access `r_j`. `gamma` conjoins the path condition with
//! the binding constraints so that, for each input satisfying the path
//! condition, the variables take exactly the values of a concrete run
//! starting from an empty cache.

use thiserror::Error;

use super::{CacheConfig, Policy};
use crate::constraint::{CmpOp, Constraint, PbOp, Term, Var};
use crate::solver::enumerate;
use crate::symexec::PathRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("cache index and offset bits ({0}) exceed the {1}-bit address width")]
    AddressWidth(u32, u32),
    #[error("{0} builder used with a {1:?} cache")]
    WrongPolicy(&'static str, Policy),
    #[error("access index {0} out of range 1..={1}")]
    Index(usize, usize),
}

/// `(σ >> B) & (2^S - 1)`.
pub fn set_index(sigma: &Term, config: &CacheConfig) -> Term {
    sigma
        .clone()
        .lshr(Term::constant(config.line_bits as u64))
        .and(Term::constant(config.sets() - 1))
}

/// `σ >> (B + S)`.
pub fn tag_of(sigma: &Term, config: &CacheConfig) -> Term {
    sigma.clone().lshr(Term::constant((config.line_bits + config.set_bits) as u64))
}

/// Set and tag terms of every access of one path, shared by all formulas
/// built for that path. Access indices are 1-based.
#[derive(Clone, Debug)]
pub struct CacheTerms {
    sets: Vec<Term>,
    tags: Vec<Term>,
    width: u32,
}

impl CacheTerms {
    pub fn new(path: &PathRecord, config: &CacheConfig) -> Result<CacheTerms, ModelError> {
        if config.line_bits + config.set_bits > path.width {
            return Err(ModelError::AddressWidth(config.line_bits + config.set_bits, path.width));
        }
        Ok(CacheTerms {
            sets: path.trace.iter().map(|e| set_index(&e.address, config)).collect(),
            tags: path.trace.iter().map(|e| tag_of(&e.address, config)).collect(),
            width: path.width,
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn set(&self, i: usize) -> &Term {
        &self.sets[i - 1]
    }

    pub fn tag(&self, i: usize) -> &Term {
        &self.tags[i - 1]
    }

    fn cmp(&self, op: CmpOp, a: &Term, b: &Term) -> Constraint {
        Constraint::cmp(op, a.clone(), b.clone(), self.width)
    }

    /// `tag(r_a) != tag(r_b) || set(r_a) != set(r_b)`: different memory blocks.
    fn other_block(&self, a: usize, b: usize) -> Constraint {
        Constraint::Or(vec![
            self.cmp(CmpOp::Ne, self.tag(a), self.tag(b)),
            self.cmp(CmpOp::Ne, self.set(a), self.set(b)),
        ])
    }

    pub fn psi_cnf(&self, j: usize, i: usize) -> Constraint {
        self.cmp(CmpOp::Eq, self.set(j), self.set(i))
    }

    pub fn psi_dif(&self, j: usize, i: usize) -> Constraint {
        self.cmp(CmpOp::Ne, self.tag(j), self.tag(i))
    }

    /// No access strictly between `j` and `i` touches the block of `r_i`.
    pub fn psi_eqv(&self, j: usize, i: usize) -> Constraint {
        Constraint::and((j + 1..i).map(|k| self.other_block(k, i)))
    }

    /// No access strictly between `j` and `i` touches the block of `r_j`.
    pub fn psi_unq(&self, j: usize, i: usize) -> Constraint {
        Constraint::and((j + 1..i).map(|k| {
            Constraint::Or(vec![
                self.cmp(CmpOp::Ne, self.tag(j), self.tag(k)),
                self.cmp(CmpOp::Ne, self.set(j), self.set(k)),
            ])
        }))
    }

    /// Direct-mapped cold miss: no earlier access touched `set(r_i)`.
    pub fn cold_dm(&self, i: usize) -> Constraint {
        Constraint::and((1..i).map(|p| self.cmp(CmpOp::Ne, self.set(p), self.set(i))))
    }

    /// Set-associative cold miss: no earlier access touched the block of `r_i`.
    pub fn cold_sa(&self, i: usize) -> Constraint {
        Constraint::and((1..i).map(|k| self.other_block(k, i)))
    }

    /// Direct-mapped eviction miss: some earlier conflicting access was not
    /// followed by a reload of `r_i`'s block.
    pub fn evict_dm(&self, i: usize) -> Constraint {
        Constraint::or((1..i).map(|j| Constraint::and([self.psi_cnf(j, i), self.psi_dif(j, i), self.psi_eqv(j, i)])))
    }

    /// Premise of a unique conflict from `r_j` to `r_i` and its expanded
    /// negation, in that order.
    pub fn conflict_premises(&self, j: usize, i: usize) -> (Constraint, Constraint) {
        let parts = [self.psi_cnf(j, i), self.psi_dif(j, i), self.psi_eqv(j, i), self.psi_unq(j, i)];
        let negated = Constraint::or(parts.iter().cloned().map(Constraint::not));
        (Constraint::and(parts), negated)
    }
}

fn checked_index(i: usize, path: &PathRecord) -> Result<(), ModelError> {
    if i == 0 || i > path.n_e() {
        Err(ModelError::Index(i, path.n_e()))
    } else {
        Ok(())
    }
}

macro_rules! single_access_op {
    ($(#[$doc:meta])* $name:ident, $method:ident) => {
        $(#[$doc])*
        pub fn $name(i: usize, path: &PathRecord, config: &CacheConfig) -> Result<Constraint, ModelError> {
            checked_index(i, path)?;
            Ok(CacheTerms::new(path, config)?.$method(i))
        }
    };
}

macro_rules! pair_op {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        pub fn $name(j: usize, i: usize, path: &PathRecord, config: &CacheConfig) -> Result<Constraint, ModelError> {
            checked_index(i, path)?;
            if j == 0 || j >= i {
                return Err(ModelError::Index(j, i.saturating_sub(1)));
            }
            Ok(CacheTerms::new(path, config)?.$name(j, i))
        }
    };
}

single_access_op!(
    /// Cold-miss condition of a direct-mapped cache (set-based).
    cold_dm, cold_dm
);
single_access_op!(
    /// Cold-miss condition of a set-associative cache (block-based).
    cold_sa, cold_sa
);
single_access_op!(
    /// Eviction-miss condition of a direct-mapped cache.
    evict_dm, evict_dm
);
pair_op!(psi_cnf);
pair_op!(psi_dif);
pair_op!(psi_eqv);
pair_op!(psi_unq);

/// How one `miss_i` is determined by the model.
#[derive(Clone, Debug, PartialEq)]
pub enum MissBinding {
    /// `miss_i = 1` iff `premise` holds.
    Symbolic { premise: Constraint },
    /// Fixed by pruning.
    Fixed(bool),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ConflictBinding {
    pub var: Var,
    pub premise: Constraint,
    pub negated: Constraint,
}

/// The constraint system of one path under one cache configuration.
#[derive(Clone, Debug)]
pub struct SymbolicCacheModel {
    pub path: PathRecord,
    pub config: CacheConfig,
    pub(crate) misses: Vec<MissBinding>,
    /// Conflict bindings targeting access `i` are stored at `i - 1`.
    pub(crate) conflicts: Vec<Vec<ConflictBinding>>,
    gamma: Constraint,
}

impl SymbolicCacheModel {
    pub(crate) fn assemble(
        path: PathRecord,
        config: CacheConfig,
        misses: Vec<MissBinding>,
        conflicts: Vec<Vec<ConflictBinding>>,
    ) -> SymbolicCacheModel {
        let mut parts = vec![path.pc.clone()];
        for (n, miss) in misses.iter().enumerate() {
            let i = n + 1;
            let var = Var::miss(path.path_id, i);
            match miss {
                MissBinding::Symbolic { premise } => {
                    if let Some(cs) = conflicts.get(n) {
                        for c in cs {
                            parts.push(Constraint::binding(c.var, c.premise.clone(), c.negated.clone()));
                        }
                    }
                    parts.push(Constraint::binding(var, premise.clone(), Constraint::not(premise.clone())));
                }
                MissBinding::Fixed(m) => parts.push(Constraint::var_eq(var, *m as i64)),
            }
        }
        let gamma = Constraint::and(parts);
        SymbolicCacheModel { path, config, misses, conflicts, gamma }
    }

    /// The full constraint system, path condition included.
    pub fn gamma(&self) -> &Constraint {
        &self.gamma
    }

    pub fn path_id(&self) -> usize {
        self.path.path_id
    }

    pub fn n_e(&self) -> usize {
        self.path.n_e()
    }

    /// Miss variable of the `i`-th access, counting from 1.
    pub fn miss_var(&self, i: usize) -> Var {
        Var::miss(self.path.path_id, i)
    }

    pub fn miss_vars(&self) -> Vec<Var> {
        (1..=self.n_e()).map(|i| self.miss_var(i)).collect()
    }

    pub fn conflict_vars(&self) -> Vec<Var> {
        self.conflicts.iter().flatten().map(|c| c.var).collect()
    }

    pub fn miss_binding(&self, i: usize) -> &MissBinding {
        &self.misses[i - 1]
    }

    /// Miss vector forced by `gamma` for a concrete input, or `None` when the
    /// input violates the path condition.
    pub fn forced_misses(&self, inputs: &[u8]) -> Option<Vec<bool>> {
        self.miss_oracle().forced(inputs)
    }

    /// Prepares `gamma` once for [`MissOracle::forced`] at many inputs.
    pub fn miss_oracle(&self) -> MissOracle<'_> {
        MissOracle { eval: enumerate::Evaluator::new(&self.gamma.conjuncts()), vars: self.miss_vars() }
    }
}

pub struct MissOracle<'m> {
    eval: enumerate::Evaluator<'m>,
    vars: Vec<Var>,
}

impl MissOracle<'_> {
    /// Same as [`SymbolicCacheModel::forced_misses`].
    pub fn forced(&self, inputs: &[u8]) -> Option<Vec<bool>> {
        let assignment = self.eval.solve_at(inputs)?;
        Some(self.vars.iter().map(|v| assignment.get(v).copied().unwrap_or(0) == 1).collect())
    }
}

/// Builds the direct-mapped model of `path`.
pub fn gamma_direct(path: &PathRecord, config: &CacheConfig) -> Result<SymbolicCacheModel, ModelError> {
    if config.policy != Policy::DirectMapped {
        return Err(ModelError::WrongPolicy("direct-mapped", config.policy));
    }
    let terms = CacheTerms::new(path, config)?;
    let misses = (1..=terms.len())
        .map(|i| MissBinding::Symbolic { premise: Constraint::or([terms.evict_dm(i), terms.cold_dm(i)]) })
        .collect();
    Ok(SymbolicCacheModel::assemble(path.clone(), *config, misses, Vec::new()))
}

/// Builds the LRU model of `path`. Also accepted for associativity 1.
pub fn gamma_lru(path: &PathRecord, config: &CacheConfig) -> Result<SymbolicCacheModel, ModelError> {
    if config.assoc == 0 {
        return Err(ModelError::WrongPolicy("LRU", config.policy));
    }
    let terms = CacheTerms::new(path, config)?;
    let pid = path.path_id;
    let mut misses = Vec::with_capacity(terms.len());
    let mut conflicts = Vec::with_capacity(terms.len());
    for i in 1..=terms.len() {
        let bindings: Vec<ConflictBinding> = (1..i)
            .map(|j| {
                let (premise, negated) = terms.conflict_premises(j, i);
                ConflictBinding { var: Var::conflict(pid, j, i), premise, negated }
            })
            .collect();
        let vars: Vec<Var> = bindings.iter().map(|b| b.var).collect();
        let enough_conflicts = if vars.is_empty() {
            Constraint::False
        } else {
            Constraint::pb(vars, PbOp::Ge, config.assoc as i64)
        };
        misses.push(MissBinding::Symbolic { premise: Constraint::or([enough_conflicts, terms.cold_sa(i)]) });
        conflicts.push(bindings);
    }
    Ok(SymbolicCacheModel::assemble(path.clone(), *config, misses, conflicts))
}

/// Builds the default model for `config`'s policy.
pub fn build_model(path: &PathRecord, config: &CacheConfig) -> Result<SymbolicCacheModel, ModelError> {
    match config.policy {
        Policy::DirectMapped => gamma_direct(path, config),
        Policy::Lru => gamma_lru(path, config),
    }
}
