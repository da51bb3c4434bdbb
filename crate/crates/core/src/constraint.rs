//! Bitvector terms and the constraint language shared by the path
//! conditions, the cache model, observations and the solver backends.
//!
//! Terms are W-bit two's-complement bitvectors built over input bytes
//! (zero-extended to W bits). Formulas combine bitvector comparisons and
//! pseudo-boolean sums over 0/1 integer variables (miss and conflict
//! variables) with the usual boolean connectives.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Binary bitvector operators. Shifts by at least the width yield zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Shl,
    Lshr,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Shl => "<<",
            BinOp::Lshr => ">>",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
        }
    }

    /// Binding strength used by printers; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::Xor => 2,
            BinOp::And => 3,
            BinOp::Shl | BinOp::Lshr => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    pub fn apply(self, a: u64, b: u64, width: u32) -> u64 {
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Shl => {
                if b >= width as u64 {
                    0
                } else {
                    a << b
                }
            }
            BinOp::Lshr => {
                if b >= width as u64 {
                    0
                } else {
                    a >> b
                }
            }
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
        };
        r & width_mask(width)
    }
}

pub fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[derive(Debug, PartialEq, Eq, Hash)]
enum TermKind {
    Const(u64),
    Input(u32),
    Bin(BinOp, Term, Term),
}

/// A shared, immutable bitvector term.
#[derive(Clone, Eq)]
pub struct Term(Arc<TermKind>);

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl ops::Add for Term {
    type Output = Term;

    fn add(self, rhs: Term) -> Term {
        Term::bin(BinOp::Add, self, rhs)
    }
}

impl ops::Sub for Term {
    type Output = Term;

    fn sub(self, rhs: Term) -> Term {
        Term::bin(BinOp::Sub, self, rhs)
    }
}

/// Read-only view of a term's top-level shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermView<'a> {
    Const(u64),
    Input(u32),
    Bin(BinOp, &'a Term, &'a Term),
}

impl Term {
    pub fn constant(value: u64) -> Term {
        Term(Arc::new(TermKind::Const(value)))
    }

    /// Input byte `byte`, zero-extended to the term width.
    pub fn input(byte: u32) -> Term {
        Term(Arc::new(TermKind::Input(byte)))
    }

    pub fn bin(op: BinOp, lhs: Term, rhs: Term) -> Term {
        Term(Arc::new(TermKind::Bin(op, lhs, rhs)))
    }

    pub fn and(self, rhs: Term) -> Term {
        Term::bin(BinOp::And, self, rhs)
    }

    pub fn lshr(self, rhs: Term) -> Term {
        Term::bin(BinOp::Lshr, self, rhs)
    }

    pub fn view(&self) -> TermView<'_> {
        match &*self.0 {
            TermKind::Const(v) => TermView::Const(*v),
            TermKind::Input(b) => TermView::Input(*b),
            TermKind::Bin(op, a, b) => TermView::Bin(*op, a, b),
        }
    }

    pub fn as_const(&self) -> Option<u64> {
        match &*self.0 {
            TermKind::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Evaluates under `inputs`; missing bytes read as zero.
    pub fn eval(&self, inputs: &[u8], width: u32) -> u64 {
        match &*self.0 {
            TermKind::Const(v) => v & width_mask(width),
            TermKind::Input(b) => inputs.get(*b as usize).copied().unwrap_or(0) as u64 & width_mask(width),
            TermKind::Bin(op, a, b) => op.apply(a.eval(inputs, width), b.eval(inputs, width), width),
        }
    }

    pub fn collect_inputs(&self, out: &mut BTreeSet<u32>) {
        match &*self.0 {
            TermKind::Const(_) => {}
            TermKind::Input(b) => {
                out.insert(*b);
            }
            TermKind::Bin(_, a, b) => {
                a.collect_inputs(out);
                b.collect_inputs(out);
            }
        }
    }

    pub fn has_inputs(&self) -> bool {
        match &*self.0 {
            TermKind::Const(_) => false,
            TermKind::Input(_) => true,
            TermKind::Bin(_, a, b) => a.has_inputs() || b.has_inputs(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        match &*self.0 {
            TermKind::Const(v) => {
                if *v >= 256 {
                    write!(f, "{:#x}", v)
                } else {
                    write!(f, "{}", v)
                }
            }
            TermKind::Input(b) => write!(f, "k[{}]", b),
            TermKind::Bin(op, a, b) => {
                let p = op.precedence();
                let paren = p < parent || (right && p == parent);
                if paren {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, p, false)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, p, true)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term({})", self)
    }
}

/// A 0/1 integer variable of the cache model, scoped by path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    /// `miss_i` of path `path` (1-based access index).
    Miss { path: usize, index: usize },
    /// Unique-conflict indicator: access `from` conflicts with access `to`.
    Conflict { path: usize, from: usize, to: usize },
}

impl Var {
    pub fn miss(path: usize, index: usize) -> Var {
        Var::Miss { path, index }
    }

    pub fn conflict(path: usize, from: usize, to: usize) -> Var {
        Var::Conflict { path, from, to }
    }

    pub fn name(&self) -> String {
        match self {
            Var::Miss { path, index } => format!("miss_{}_{}", path, index),
            Var::Conflict { path, from, to } => format!("evt_{}_{}_{}", path, from, to),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Unsigned bitvector comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Ult,
    Ule,
}

impl CmpOp {
    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ult => a < b,
            CmpOp::Ule => a <= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ult => "<",
            CmpOp::Ule => "<=",
        }
    }
}

/// Relation of a pseudo-boolean sum against its bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PbOp {
    Eq,
    Ge,
    Le,
}

impl PbOp {
    pub fn holds(self, sum: i64, bound: i64) -> bool {
        match self {
            PbOp::Eq => sum == bound,
            PbOp::Ge => sum >= bound,
            PbOp::Le => sum <= bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PbOp::Eq => "=",
            PbOp::Ge => ">=",
            PbOp::Le => "<=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    True,
    False,
    /// Bitvector comparison; both operands are `width` bits wide.
    Cmp { op: CmpOp, lhs: Term, rhs: Term, width: u32 },
    /// `sum(vars) op bound`.
    Pb { vars: Vec<Var>, op: PbOp, bound: i64 },
    Not(Box<Constraint>),
    And(Vec<Constraint>),
    Or(Vec<Constraint>),
    Implies(Box<Constraint>, Box<Constraint>),
}

/// Values of the non-input variables during evaluation.
pub trait VarValues {
    fn value(&self, var: Var) -> i64;
}

impl<F: Fn(Var) -> i64> VarValues for F {
    fn value(&self, var: Var) -> i64 {
        self(var)
    }
}

impl Constraint {
    pub fn cmp(op: CmpOp, lhs: Term, rhs: Term, width: u32) -> Constraint {
        Constraint::Cmp { op, lhs, rhs, width }
    }

    pub fn var_eq(var: Var, value: i64) -> Constraint {
        Constraint::Pb { vars: vec![var], op: PbOp::Eq, bound: value }
    }

    pub fn pb(vars: Vec<Var>, op: PbOp, bound: i64) -> Constraint {
        Constraint::Pb { vars, op, bound }
    }

    /// Conjunction; drops `True` operands and collapses on `False`.
    /// Nested conjunctions are kept as-is.
    pub fn and<I: IntoIterator<Item = Constraint>>(parts: I) -> Constraint {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Constraint::True => {}
                Constraint::False => return Constraint::False,
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Constraint::True,
            1 => out.pop().unwrap(),
            _ => Constraint::And(out),
        }
    }

    /// Disjunction; dual of [`Constraint::and`].
    pub fn or<I: IntoIterator<Item = Constraint>>(parts: I) -> Constraint {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Constraint::False => {}
                Constraint::True => return Constraint::True,
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Constraint::False,
            1 => out.pop().unwrap(),
            _ => Constraint::Or(out),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(c: Constraint) -> Constraint {
        match c {
            Constraint::True => Constraint::False,
            Constraint::False => Constraint::True,
            other => Constraint::Not(Box::new(other)),
        }
    }

    pub fn implies(premise: Constraint, conclusion: Constraint) -> Constraint {
        match (premise, conclusion) {
            (Constraint::False, _) | (_, Constraint::True) => Constraint::True,
            (Constraint::True, c) => c,
            (p, c) => Constraint::Implies(Box::new(p), Box::new(c)),
        }
    }

    /// `(premise => var = 1) & (negated => var = 0)`.
    pub fn binding(var: Var, premise: Constraint, negated: Constraint) -> Constraint {
        Constraint::and([
            Constraint::implies(premise, Constraint::var_eq(var, 1)),
            Constraint::implies(negated, Constraint::var_eq(var, 0)),
        ])
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Constraint::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Constraint::False)
    }

    /// Pure recursive evaluation. Every variable must be provided by `vars`.
    pub fn eval(&self, inputs: &[u8], vars: &dyn VarValues) -> bool {
        match self {
            Constraint::True => true,
            Constraint::False => false,
            Constraint::Cmp { op, lhs, rhs, width } => op.holds(lhs.eval(inputs, *width), rhs.eval(inputs, *width)),
            Constraint::Pb { vars: vs, op, bound } => {
                let sum: i64 = vs.iter().map(|v| vars.value(*v)).sum();
                op.holds(sum, *bound)
            }
            Constraint::Not(c) => !c.eval(inputs, vars),
            Constraint::And(cs) => cs.iter().all(|c| c.eval(inputs, vars)),
            Constraint::Or(cs) => cs.iter().any(|c| c.eval(inputs, vars)),
            Constraint::Implies(a, b) => !a.eval(inputs, vars) || b.eval(inputs, vars),
        }
    }

    /// Number of atomic formulas (comparisons and pseudo-boolean sums).
    pub fn atom_count(&self) -> usize {
        match self {
            Constraint::True | Constraint::False => 0,
            Constraint::Cmp { .. } | Constraint::Pb { .. } => 1,
            Constraint::Not(c) => c.atom_count(),
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().map(Constraint::atom_count).sum(),
            Constraint::Implies(a, b) => a.atom_count() + b.atom_count(),
        }
    }

    pub fn collect_inputs(&self, out: &mut BTreeSet<u32>) {
        match self {
            Constraint::True | Constraint::False | Constraint::Pb { .. } => {}
            Constraint::Cmp { lhs, rhs, .. } => {
                lhs.collect_inputs(out);
                rhs.collect_inputs(out);
            }
            Constraint::Not(c) => c.collect_inputs(out),
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().for_each(|c| c.collect_inputs(out)),
            Constraint::Implies(a, b) => {
                a.collect_inputs(out);
                b.collect_inputs(out);
            }
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Constraint::True | Constraint::False | Constraint::Cmp { .. } => {}
            Constraint::Pb { vars, .. } => out.extend(vars.iter().copied()),
            Constraint::Not(c) => c.collect_vars(out),
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().for_each(|c| c.collect_vars(out)),
            Constraint::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn inputs(&self) -> BTreeSet<u32> {
        let mut s = BTreeSet::new();
        self.collect_inputs(&mut s);
        s
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    pub fn has_vars(&self) -> bool {
        match self {
            Constraint::True | Constraint::False | Constraint::Cmp { .. } => false,
            Constraint::Pb { vars, .. } => !vars.is_empty(),
            Constraint::Not(c) => c.has_vars(),
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().any(Constraint::has_vars),
            Constraint::Implies(a, b) => a.has_vars() || b.has_vars(),
        }
    }

    /// Top-level conjuncts, flattening nested conjunctions.
    pub fn conjuncts(&self) -> Vec<&Constraint> {
        let mut out = Vec::new();
        flatten_and(self, &mut out);
        out
    }

    /// Replaces every occurrence of the variables in `subst` by a constant,
    /// folding pseudo-boolean sums that become fully constant.
    pub fn substitute(&self, subst: &dyn Fn(Var) -> Option<i64>) -> Constraint {
        match self {
            Constraint::True | Constraint::False | Constraint::Cmp { .. } => self.clone(),
            Constraint::Pb { vars, op, bound } => {
                let mut rest = Vec::new();
                let mut offset = 0;
                for v in vars {
                    match subst(*v) {
                        Some(c) => offset += c,
                        None => rest.push(*v),
                    }
                }
                if rest.is_empty() {
                    if op.holds(offset, *bound) {
                        Constraint::True
                    } else {
                        Constraint::False
                    }
                } else {
                    Constraint::Pb { vars: rest, op: *op, bound: bound - offset }
                }
            }
            Constraint::Not(c) => Constraint::not(c.substitute(subst)),
            Constraint::And(cs) => Constraint::and(cs.iter().map(|c| c.substitute(subst))),
            Constraint::Or(cs) => Constraint::or(cs.iter().map(|c| c.substitute(subst))),
            Constraint::Implies(a, b) => Constraint::implies(a.substitute(subst), b.substitute(subst)),
        }
    }
}

pub(crate) fn flatten_and<'a>(c: &'a Constraint, out: &mut Vec<&'a Constraint>) {
    match c {
        Constraint::And(cs) => cs.iter().for_each(|c| flatten_and(c, out)),
        Constraint::True => {}
        other => out.push(other),
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::True => f.write_str("true"),
            Constraint::False => f.write_str("false"),
            Constraint::Cmp { op, lhs, rhs, .. } => write!(f, "{} {} {}", lhs, op.symbol(), rhs),
            Constraint::Pb { vars, op, bound } => {
                if vars.is_empty() {
                    f.write_str("0")?;
                }
                for (n, v) in vars.iter().enumerate() {
                    if n > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{}", v)?;
                }
                write!(f, " {} {}", op.symbol(), bound)
            }
            Constraint::Not(c) => write!(f, "!({})", c),
            Constraint::And(cs) => join(f, cs, " && "),
            Constraint::Or(cs) => join(f, cs, " || "),
            Constraint::Implies(a, b) => write!(f, "({}) => ({})", a, b),
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, cs: &[Constraint], sep: &str) -> fmt::Result {
    for (n, c) in cs.iter().enumerate() {
        if n > 0 {
            f.write_str(sep)?;
        }
        write!(f, "({})", c)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifts_past_width_are_zero() {
        assert_eq!(BinOp::Shl.apply(1, 32, 32), 0);
        assert_eq!(BinOp::Lshr.apply(0xFFFF_FFFF, 40, 32), 0);
        assert_eq!(BinOp::Sub.apply(0, 1, 32), 0xFFFF_FFFF);
        assert_eq!(BinOp::Sub.apply(0, 1, 64), u64::MAX);
    }

    #[test]
    fn input_bytes_zero_extend() {
        let t = Term::input(0) + Term::constant(0x101);
        assert_eq!(t.eval(&[0xFF], 32), 0x200);
        assert_eq!(t.eval(&[0xFF], 8), 0x00);
        assert_eq!(t.to_string(), "k[0] + 0x101");
    }

    #[test]
    fn smart_constructors_fold_constants() {
        assert!(Constraint::and(vec![]).is_true());
        assert!(Constraint::or(vec![]).is_false());
        assert!(Constraint::and([Constraint::True, Constraint::False]).is_false());
        let v = Var::miss(0, 1);
        assert_eq!(
            Constraint::binding(v, Constraint::True, Constraint::False),
            Constraint::var_eq(v, 1)
        );
    }

    #[test]
    fn substitution_folds_sums() {
        let a = Var::miss(0, 1);
        let b = Var::miss(0, 2);
        let c = Constraint::pb(vec![a, b], PbOp::Eq, 2);
        let s = c.substitute(&|v| if v == a { Some(1) } else { None });
        assert_eq!(s, Constraint::pb(vec![b], PbOp::Eq, 1));
        let s = s.substitute(&|_| Some(0));
        assert!(s.is_false());
    }

    #[test]
    fn atom_count_counts_leaves() {
        let t = Term::input(0);
        let a = Constraint::cmp(CmpOp::Ult, t.clone(), Term::constant(3), 32);
        let c = Constraint::implies(a.clone(), Constraint::and([a.clone(), Constraint::var_eq(Var::miss(0, 1), 1)]));
        assert_eq!(c.atom_count(), 3);
    }
}
