//! Exhaustive reference backend.
//!
//! Input bytes mentioned by a query are enumerated (narrowed by any
//! single-byte atoms among the top-level conjuncts). For each input the 0/1
//! model variables are derived from implications of the form
//! `premise => v = c` found among the top-level conjuncts; a variable that
//! no premise determines is split on both values.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{SatResult, SolverBackend, SolverError, Witness};
use crate::constraint::{flatten_and, Constraint, PbOp, VarValues, Var};

const MAX_SPLIT_VARS: usize = 20;
const MAX_ALTERNATIVES: usize = 1 << 16;

static TRUE: Constraint = Constraint::True;

#[derive(Clone, Debug)]
pub struct EnumerateBackend {
    cap_bits: u32,
}

impl EnumerateBackend {
    pub fn new(cap_bits: u32) -> Self {
        EnumerateBackend { cap_bits }
    }

    pub fn cap_bits(&self) -> u32 {
        self.cap_bits
    }
}

impl Default for EnumerateBackend {
    fn default() -> Self {
        EnumerateBackend::new(super::DEFAULT_INPUT_BIT_CAP)
    }
}

/// Premises forcing a variable to 1 and to 0.
#[derive(Default)]
struct Def<'a> {
    ones: Vec<&'a Constraint>,
    zeros: Vec<&'a Constraint>,
}

/// One conjunctive alternative of a query, prepared for enumeration.
struct Prepared<'a> {
    conjuncts: Vec<&'a Constraint>,
    /// The variable a conjunct defines, when it is one of its defining implications.
    defines: Vec<Option<Var>>,
    defs: HashMap<Var, Def<'a>>,
    inputs: BTreeSet<u32>,
    vars: BTreeSet<Var>,
}

fn single_var_eq(c: &Constraint) -> Option<(Var, i64)> {
    match c {
        Constraint::Pb { vars, op: PbOp::Eq, bound } if vars.len() == 1 && (*bound == 0 || *bound == 1) => {
            Some((vars[0], *bound))
        }
        _ => None,
    }
}

impl<'a> Prepared<'a> {
    fn new(conjuncts: Vec<&'a Constraint>) -> Prepared<'a> {
        let mut defs: HashMap<Var, Def<'a>> = HashMap::new();
        let mut inputs = BTreeSet::new();
        let mut vars = BTreeSet::new();
        let mut defines = Vec::with_capacity(conjuncts.len());
        for c in &conjuncts {
            c.collect_inputs(&mut inputs);
            c.collect_vars(&mut vars);
            let (premise, target) = match c {
                Constraint::Implies(p, q) => (&**p, single_var_eq(q)),
                other => (&TRUE, single_var_eq(other)),
            };
            defines.push(target.map(|(v, _)| v));
            if let Some((v, value)) = target {
                let d = defs.entry(v).or_default();
                if value == 1 {
                    d.ones.push(premise);
                } else {
                    d.zeros.push(premise);
                }
            }
        }
        Prepared { conjuncts, defines, defs, inputs, vars }
    }

    /// Allowed values per mentioned byte, narrowed by variable-free
    /// conjuncts over a single byte.
    fn domains(&self) -> BTreeMap<u32, Vec<u8>> {
        let mut doms: BTreeMap<u32, Vec<u8>> = self.inputs.iter().map(|b| (*b, (0..=255u8).collect())).collect();
        let none = |_: Var| 0i64;
        for c in &self.conjuncts {
            if c.has_vars() {
                continue;
            }
            let ins = c.inputs();
            if ins.len() != 1 {
                continue;
            }
            let b = *ins.iter().next().unwrap();
            let mut buf = vec![0u8; b as usize + 1];
            if let Some(d) = doms.get_mut(&b) {
                d.retain(|v| {
                    buf[b as usize] = *v;
                    c.eval(&buf, &none)
                });
            }
        }
        doms
    }

    fn solve(&self, inputs: &[u8]) -> Result<Option<BTreeMap<Var, i64>>, SolverError> {
        let mut fixed = BTreeMap::new();
        self.solve_with(inputs, &mut fixed)
    }

    fn solve_with(&self, inputs: &[u8], fixed: &mut BTreeMap<Var, i64>) -> Result<Option<BTreeMap<Var, i64>>, SolverError> {
        let env = Env {
            inputs,
            prepared: self,
            fixed,
            memo: RefCell::new(HashMap::new()),
            active: RefCell::new(HashSet::new()),
            split: Cell::new(None),
            contradiction: Cell::new(false),
        };
        let mut all_true = true;
        for (c, def) in self.conjuncts.iter().zip(&self.defines) {
            // A derived value satisfies every defining implication of its
            // variable, so demanding it checks them all at once.
            let ok = match def {
                Some(v) if !env.fixed.contains_key(v) => {
                    env.value(*v);
                    true
                }
                _ => c.eval(inputs, &env),
            };
            if env.split.get().is_some() {
                all_true = false;
                break;
            }
            if env.contradiction.get() || !ok {
                return Ok(None);
            }
        }
        if all_true {
            let mut values: BTreeMap<Var, i64> = fixed.clone();
            for v in &self.vars {
                if !values.contains_key(v) {
                    let val = env.value(*v);
                    values.insert(*v, if env.split.get().is_some() { 0 } else { val });
                    env.split.set(None);
                }
            }
            return Ok(Some(values));
        }
        let var = env.split.get().expect("split requested");
        drop(env);
        if fixed.len() >= MAX_SPLIT_VARS {
            return Err(SolverError::TooManyFreeVars(fixed.len() + 1));
        }
        for value in [0, 1] {
            fixed.insert(var, value);
            if let Some(found) = self.solve_with(inputs, fixed)? {
                fixed.remove(&var);
                return Ok(Some(found));
            }
        }
        fixed.remove(&var);
        Ok(None)
    }
}

struct Env<'e, 'a> {
    inputs: &'e [u8],
    prepared: &'e Prepared<'a>,
    fixed: &'e BTreeMap<Var, i64>,
    memo: RefCell<HashMap<Var, i64>>,
    active: RefCell<HashSet<Var>>,
    split: Cell<Option<Var>>,
    contradiction: Cell<bool>,
}

impl VarValues for Env<'_, '_> {
    fn value(&self, var: Var) -> i64 {
        if let Some(v) = self.fixed.get(&var) {
            return *v;
        }
        if let Some(v) = self.memo.borrow().get(&var) {
            return *v;
        }
        if self.split.get().is_some() {
            return 0;
        }
        let def = match self.prepared.defs.get(&var) {
            Some(d) if !self.active.borrow().contains(&var) => d,
            _ => {
                self.split.set(Some(var));
                return 0;
            }
        };
        self.active.borrow_mut().insert(var);
        let one = def.ones.iter().any(|p| p.eval(self.inputs, self));
        let zero = def.zeros.iter().any(|p| p.eval(self.inputs, self));
        self.active.borrow_mut().remove(&var);
        if self.split.get().is_some() {
            return 0;
        }
        let value = match (one, zero) {
            (true, false) => 1,
            (false, true) => 0,
            (true, true) => {
                self.contradiction.set(true);
                return 0;
            }
            (false, false) => {
                self.split.set(Some(var));
                return 0;
            }
        };
        self.memo.borrow_mut().insert(var, value);
        value
    }
}

/// Splits top-level disjunctions that mention model variables into
/// separate conjunctive alternatives.
fn alternatives<'a>(conjuncts: Vec<&'a Constraint>, out: &mut Vec<Vec<&'a Constraint>>) {
    if out.len() > MAX_ALTERNATIVES {
        return;
    }
    let pos = conjuncts.iter().position(|c| matches!(c, Constraint::Or(_)) && c.has_vars());
    match pos {
        None => out.push(conjuncts),
        Some(pos) => {
            let Constraint::Or(children) = conjuncts[pos] else { unreachable!() };
            for child in children {
                let mut next: Vec<&'a Constraint> =
                    conjuncts.iter().enumerate().filter(|(n, _)| *n != pos).map(|(_, c)| *c).collect();
                flatten_and(child, &mut next);
                alternatives(next, out);
            }
        }
    }
}

fn prepare<'a>(conjuncts: &[&'a Constraint]) -> Vec<Prepared<'a>> {
    let mut flat = Vec::new();
    for c in conjuncts {
        flatten_and(c, &mut flat);
    }
    if flat.iter().any(|c| c.is_false()) {
        return Vec::new();
    }
    let mut alts = Vec::new();
    alternatives(flat, &mut alts);
    alts.into_iter().map(Prepared::new).collect()
}

/// Iterates the cartesian product of per-byte domains into `buf`.
fn for_each_input<F>(doms: &BTreeMap<u32, Vec<u8>>, buf: &mut [u8], mut f: F) -> Result<bool, SolverError>
where
    F: FnMut(&[u8]) -> Result<bool, SolverError>,
{
    let keys: Vec<u32> = doms.keys().copied().collect();
    let lists: Vec<&Vec<u8>> = doms.values().collect();
    if lists.iter().any(|l| l.is_empty()) {
        return Ok(false);
    }
    let mut idx = vec![0usize; keys.len()];
    loop {
        for (n, k) in keys.iter().enumerate() {
            buf[*k as usize] = lists[n][idx[n]];
        }
        if f(buf)? {
            return Ok(true);
        }
        let mut n = 0;
        loop {
            if n == keys.len() {
                return Ok(false);
            }
            idx[n] += 1;
            if idx[n] < lists[n].len() {
                break;
            }
            idx[n] = 0;
            n += 1;
        }
    }
}

impl EnumerateBackend {
    fn check_cap(&self, bytes: usize) -> Result<(), SolverError> {
        let bits = bytes as u32 * 8;
        if bits > self.cap_bits {
            Err(SolverError::CapExceeded { bits, cap: self.cap_bits })
        } else {
            Ok(())
        }
    }
}

impl SolverBackend for EnumerateBackend {
    fn name(&self) -> &'static str {
        "enumerate"
    }

    fn check_sat_all(&self, conjuncts: &[&Constraint]) -> Result<SatResult, SolverError> {
        let alts = prepare(conjuncts);
        for alt in &alts {
            self.check_cap(alt.inputs.len())?;
        }
        for alt in &alts {
            let doms = alt.domains();
            let len = alt.inputs.iter().next_back().map(|b| *b as usize + 1).unwrap_or(0);
            let mut buf = vec![0u8; len];
            let mut found = None;
            for_each_input(&doms, &mut buf, |inputs| {
                if let Some(vars) = alt.solve(inputs)? {
                    found = Some(Witness { inputs: inputs.to_vec(), vars });
                    Ok(true)
                } else {
                    Ok(false)
                }
            })?;
            if let Some(w) = found {
                return Ok(SatResult::Sat(w));
            }
        }
        Ok(SatResult::Unsat)
    }

    fn count_models(&self, c: &Constraint, input_bytes: u32) -> Result<BigUint, SolverError> {
        let alts = prepare(&[c]);
        let mut mentioned = BTreeSet::new();
        for alt in &alts {
            mentioned.extend(alt.inputs.iter().copied());
        }
        if let Some(b) = mentioned.iter().find(|b| **b >= input_bytes) {
            return Err(SolverError::InputOutOfRange { byte: *b, bytes: input_bytes });
        }
        self.check_cap(mentioned.len())?;
        if alts.is_empty() {
            return Ok(BigUint::zero());
        }
        let alt_doms: Vec<BTreeMap<u32, [bool; 256]>> = alts
            .iter()
            .map(|a| {
                a.domains()
                    .into_iter()
                    .map(|(b, vals)| {
                        let mut mask = [false; 256];
                        vals.iter().for_each(|v| mask[*v as usize] = true);
                        (b, mask)
                    })
                    .collect()
            })
            .collect();
        let full: BTreeMap<u32, Vec<u8>> = mentioned.iter().map(|b| (*b, (0..=255u8).collect())).collect();
        let len = mentioned.iter().next_back().map(|b| *b as usize + 1).unwrap_or(0);
        let mut buf = vec![0u8; len];
        let mut hits: u64 = 0;
        for_each_input(&full, &mut buf, |inputs| {
            for (alt, doms) in alts.iter().zip(&alt_doms) {
                if doms.iter().any(|(b, mask)| !mask[inputs[*b as usize] as usize]) {
                    continue;
                }
                if alt.solve(inputs)?.is_some() {
                    hits += 1;
                    break;
                }
            }
            Ok(false)
        })?;
        let free_bytes = input_bytes as usize - mentioned.len();
        let mut scale = BigUint::one();
        scale <<= 8 * free_bytes;
        Ok(BigUint::from(hits) * scale)
    }
}

/// A query prepared once for evaluation at many concrete inputs.
pub struct Evaluator<'a> {
    alts: Vec<Prepared<'a>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(conjuncts: &[&'a Constraint]) -> Self {
        Evaluator { alts: prepare(conjuncts) }
    }

    /// Values of all model variables at `inputs`, or `None` when no
    /// assignment satisfies the query there.
    pub fn solve_at(&self, inputs: &[u8]) -> Option<BTreeMap<Var, i64>> {
        self.alts.iter().find_map(|alt| alt.solve(inputs).ok().flatten())
    }
}

/// Values of all model variables of `conjuncts` at a concrete input, or
/// `None` when no assignment satisfies them.
pub fn solve_at(conjuncts: &[&Constraint], inputs: &[u8]) -> Option<BTreeMap<Var, i64>> {
    Evaluator::new(conjuncts).solve_at(inputs)
}
