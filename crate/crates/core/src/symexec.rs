//! Depth-first symbolic execution of mini-programs.
//!
//! Registers hold [`Term`]s over the input bytes. Every Load/Store appends
//! its symbolic byte address to the path's trace; every branch splits the
//! path when both sides are feasible.

use std::collections::BTreeMap;
use std::fmt;

use crate::constraint::{width_mask, Constraint, Term};
use crate::program::{Cond, Expr, MemRef, MiniProgram, Statement, StmtId};
use crate::solver::{SatResult, SolverBackend, SolverError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum AccessKind {
    Load,
    Store,
}

/// One memory access of a path.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    /// 1-based position in the trace.
    pub index: usize,
    pub stmt: StmtId,
    pub kind: AccessKind,
    pub object: String,
    /// Symbolic byte address `base(object) + index`.
    pub address: Term,
}

/// A feasible path: its condition and ordered memory-access trace.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub path_id: usize,
    pub pc: Constraint,
    pub trace: Vec<TraceEntry>,
    /// Address width W.
    pub width: u32,
    pub input_bytes: u32,
}

impl PathRecord {
    pub fn n_e(&self) -> usize {
        self.trace.len()
    }

    /// Concrete addresses of the trace at `inputs`.
    pub fn addresses_at(&self, inputs: &[u8]) -> Vec<u64> {
        self.trace.iter().map(|e| e.address.eval(inputs, self.width)).collect()
    }
}

impl fmt::Display for PathRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "path {}: pc = {}", self.path_id, self.pc)?;
        for e in &self.trace {
            let kind = match e.kind {
                AccessKind::Load => "load",
                AccessKind::Store => "store",
            };
            writeln!(f, "  r{} {} {} {} @ {}", e.index, e.stmt, kind, e.object, e.address)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_paths: usize,
    /// Statements executed along a single path.
    pub max_steps: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_paths: 10_000, max_steps: 100_000 }
    }
}

#[derive(Clone, Debug)]
pub struct ExplorationResult {
    pub paths: Vec<PathRecord>,
    /// False when the budget cut off at least one path.
    pub exhausted: bool,
    pub budget_used: BudgetUsed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct BudgetUsed {
    pub paths: usize,
    pub steps: usize,
    /// Branches kept because feasibility could not be decided.
    pub undecided_branches: usize,
}

#[derive(Clone)]
struct State<'p> {
    pc: Vec<Constraint>,
    regs: BTreeMap<&'p str, Term>,
    trace: Vec<TraceEntry>,
    /// Continuation stack: statement lists with the next position in each.
    frames: Vec<(&'p [Statement], usize)>,
    steps: usize,
}

struct Explorer<'p> {
    program: &'p MiniProgram,
    width: u32,
    backend: &'p dyn SolverBackend,
}

fn fold(t: Term, width: u32) -> Term {
    if t.has_inputs() {
        t
    } else {
        Term::constant(t.eval(&[], width))
    }
}

impl<'p> Explorer<'p> {
    fn expr(&self, e: &Expr, regs: &BTreeMap<&'p str, Term>) -> Term {
        match e {
            Expr::Lit(v) => Term::constant(v & width_mask(self.width)),
            Expr::Input(b) => Term::input(*b),
            Expr::Reg(r) => regs.get(r.as_str()).cloned().expect("validated program assigns registers before use"),
            Expr::Base(o) => Term::constant(self.program.object(o).expect("validated object").base),
            Expr::Bin(op, a, b) => fold(Term::bin(*op, self.expr(a, regs), self.expr(b, regs)), self.width),
        }
    }

    fn cond(&self, c: &Cond, regs: &BTreeMap<&'p str, Term>) -> Constraint {
        match c {
            Cond::Cmp(op, a, b) => {
                let (a, b) = (self.expr(a, regs), self.expr(b, regs));
                if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
                    return if op.holds(x, y) { Constraint::True } else { Constraint::False };
                }
                Constraint::cmp(*op, a, b, self.width)
            }
            Cond::Not(c) => Constraint::not(self.cond(c, regs)),
            Cond::And(a, b) => Constraint::and([self.cond(a, regs), self.cond(b, regs)]),
            Cond::Or(a, b) => Constraint::or([self.cond(a, regs), self.cond(b, regs)]),
        }
    }

    fn address(&self, mem: &MemRef, regs: &BTreeMap<&'p str, Term>) -> Term {
        let base = self.program.object(&mem.object).expect("validated object").base;
        let index = self.expr(&mem.index, regs);
        fold(Term::constant(base) + index, self.width)
    }

    /// `Ok(true)` unless the backend proves `pc && extra` unsatisfiable.
    fn feasible(&self, pc: &[Constraint], extra: &Constraint, used: &mut BudgetUsed) -> Result<bool, SolverError> {
        if extra.is_false() {
            return Ok(false);
        }
        if extra.is_true() {
            return Ok(true);
        }
        let mut conj: Vec<&Constraint> = pc.iter().collect();
        conj.push(extra);
        match self.backend.check_sat_all(&conj)? {
            SatResult::Sat(_) => Ok(true),
            SatResult::Unsat => Ok(false),
            SatResult::Unknown(_) => {
                used.undecided_branches += 1;
                Ok(true)
            }
        }
    }
}

/// Enumerates the feasible paths of `program` depth-first, then-branch first.
pub fn explore(
    program: &MiniProgram,
    budget: Budget,
    backend: &dyn SolverBackend,
) -> Result<ExplorationResult, SolverError> {
    let ex = Explorer { program, width: program.addr_width, backend };
    let mut used = BudgetUsed::default();
    let mut paths = Vec::new();
    let mut exhausted = true;
    let mut work = vec![State {
        pc: Vec::new(),
        regs: BTreeMap::new(),
        trace: Vec::new(),
        frames: vec![(&program.body[..], 0)],
        steps: 0,
    }];
    'paths: while let Some(mut st) = work.pop() {
        if paths.len() >= budget.max_paths.max(1) {
            exhausted = false;
            break;
        }
        while let Some(&mut (stmts, ref mut pos)) = st.frames.last_mut() {
            if *pos >= stmts.len() {
                st.frames.pop();
                continue;
            }
            let stmt = &stmts[*pos];
            *pos += 1;
            st.steps += 1;
            used.steps += 1;
            if st.steps > budget.max_steps {
                exhausted = false;
                continue 'paths;
            }
            match stmt {
                Statement::Load { id, mem } | Statement::Store { id, mem, .. } => {
                    let kind = if matches!(stmt, Statement::Load { .. }) { AccessKind::Load } else { AccessKind::Store };
                    let address = ex.address(mem, &st.regs);
                    st.trace.push(TraceEntry {
                        index: st.trace.len() + 1,
                        stmt: *id,
                        kind,
                        object: mem.object.clone(),
                        address,
                    });
                }
                Statement::Assign { reg, value } => {
                    let v = ex.expr(value, &st.regs);
                    st.regs.insert(reg.as_str(), v);
                }
                Statement::If { cond, then_branch, else_branch } => {
                    let c = ex.cond(cond, &st.regs);
                    let nc = Constraint::not(c.clone());
                    let then_ok = ex.feasible(&st.pc, &c, &mut used)?;
                    let else_ok = ex.feasible(&st.pc, &nc, &mut used)?;
                    match (then_ok, else_ok) {
                        (true, true) => {
                            let mut other = st.clone();
                            other.pc.push(nc);
                            other.frames.push((&else_branch[..], 0));
                            work.push(other);
                            st.pc.push(c);
                            st.frames.push((&then_branch[..], 0));
                        }
                        (true, false) => {
                            if !c.is_true() {
                                st.pc.push(c);
                            }
                            st.frames.push((&then_branch[..], 0));
                        }
                        (false, true) => {
                            if !nc.is_true() {
                                st.pc.push(nc);
                            }
                            st.frames.push((&else_branch[..], 0));
                        }
                        (false, false) => continue 'paths,
                    }
                }
            }
        }
        paths.push(PathRecord {
            path_id: paths.len(),
            pc: Constraint::and(st.pc),
            trace: st.trace,
            width: program.addr_width,
            input_bytes: program.input.bytes,
        });
    }
    used.paths = paths.len();
    Ok(ExplorationResult { paths, exhausted, budget_used: used })
}

/// Index of the path whose condition holds at `inputs`.
pub fn path_of(paths: &[PathRecord], inputs: &[u8]) -> Option<usize> {
    let none = |_| 0;
    paths.iter().position(|p| p.pc.eval(inputs, &none))
}
