//! The mini-program language analyzed for cache leakage.
//!
//! A program declares one secret input of `N/8` bytes, a set of byte
//! arrays at fixed addresses, and a body of register assignments, byte
//! loads/stores and branches. Loops are bounded and unrolled while parsing.

mod layout;
mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use crate::constraint::{BinOp, CmpOp};
pub use layout::{layout_fig2, Fig2Programs, LayoutError, FIG2A_SOURCE, FIG2B_SOURCE, FIG2C_SOURCE, TOYSBOX_SOURCE};
pub use parse::parse_program;

/// Identifier of a memory statement, numbered in source order after unrolling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct StmtId(pub usize);

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputDecl {
    pub name: String,
    pub bytes: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataObject {
    pub name: String,
    pub base: u64,
    pub size: u64,
}

impl DataObject {
    pub fn end(&self) -> u64 {
        self.base + self.size
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Lit(u64),
    /// Input byte `k[i]`.
    Input(u32),
    Reg(String),
    /// `base(p)`: start address of a data object.
    Base(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    Cmp(CmpOp, Expr, Expr),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

/// A byte access `object[index]`, i.e. address `base(object) + index`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemRef {
    pub object: String,
    pub index: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Statement {
    Load { id: StmtId, mem: MemRef },
    Store { id: StmtId, mem: MemRef, value: Option<Expr> },
    Assign { reg: String, value: Expr },
    If { cond: Cond, then_branch: Vec<Statement>, else_branch: Vec<Statement> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MiniProgram {
    pub name: String,
    pub input: InputDecl,
    pub addr_width: u32,
    pub objects: Vec<DataObject>,
    pub body: Vec<Statement>,
}

pub const DEFAULT_ADDR_WIDTH: u32 = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("undeclared identifier `{0}`")]
    Undeclared(String),
    #[error("register `{0}` may be used before assignment")]
    Unassigned(String),
    #[error("data objects `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("data object `{0}` does not fit in the address space")]
    OutOfAddressSpace(String),
    #[error("data object `{0}` has size zero")]
    EmptyObject(String),
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
    #[error("unbounded loop at line {0}: only `for r in a..b` loops are supported")]
    UnboundedLoop(usize),
    #[error("input byte k[{index}] out of range for a {bytes}-byte input")]
    InputIndex { index: u64, bytes: u32 },
    #[error("invalid program: {0}")]
    Invalid(String),
}

impl MiniProgram {
    /// Input size N in bits.
    pub fn input_bits(&self) -> u32 {
        self.input.bytes * 8
    }

    pub fn object(&self, name: &str) -> Option<&DataObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    /// Number of Load/Store statements in the program text.
    pub fn memory_statement_count(&self) -> usize {
        fn count(stmts: &[Statement]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Statement::Load { .. } | Statement::Store { .. } => 1,
                    Statement::Assign { .. } => 0,
                    Statement::If { then_branch, else_branch, .. } => count(then_branch) + count(else_branch),
                })
                .sum()
        }
        count(&self.body)
    }

    pub fn branch_count(&self) -> usize {
        fn count(stmts: &[Statement]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Statement::If { then_branch, else_branch, .. } => 1 + count(then_branch) + count(else_branch),
                    _ => 0,
                })
                .sum()
        }
        count(&self.body)
    }

    /// Checks every invariant of a well-formed program.
    pub fn validate(&self) -> Result<(), ProgramError> {
        if self.input.bytes == 0 {
            return Err(ProgramError::Invalid("input must have at least one byte".into()));
        }
        if self.addr_width == 0 || self.addr_width > 64 {
            return Err(ProgramError::Invalid(format!("address width {} not in 1..=64", self.addr_width)));
        }
        let limit: u128 = 1u128 << self.addr_width;
        let mut names = BTreeSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) || o.name == self.input.name {
                return Err(ProgramError::Duplicate(o.name.clone()));
            }
            if o.size == 0 {
                return Err(ProgramError::EmptyObject(o.name.clone()));
            }
            if o.base as u128 + o.size as u128 > limit {
                return Err(ProgramError::OutOfAddressSpace(o.name.clone()));
            }
        }
        let mut sorted: Vec<&DataObject> = self.objects.iter().collect();
        sorted.sort_by_key(|o| o.base);
        for w in sorted.windows(2) {
            if w[0].end() > w[1].base {
                return Err(ProgramError::Overlap(w[0].name.clone(), w[1].name.clone()));
            }
        }
        let mut assigned = BTreeSet::new();
        self.check_block(&self.body, &mut assigned)?;
        Ok(())
    }

    fn check_block(&self, stmts: &[Statement], assigned: &mut BTreeSet<String>) -> Result<(), ProgramError> {
        for s in stmts {
            match s {
                Statement::Load { mem, .. } => self.check_mem(mem, assigned)?,
                Statement::Store { mem, value, .. } => {
                    self.check_mem(mem, assigned)?;
                    if let Some(v) = value {
                        self.check_expr(v, assigned)?;
                    }
                }
                Statement::Assign { reg, value } => {
                    self.check_expr(value, assigned)?;
                    if self.object(reg).is_some() || *reg == self.input.name {
                        return Err(ProgramError::Duplicate(reg.clone()));
                    }
                    assigned.insert(reg.clone());
                }
                Statement::If { cond, then_branch, else_branch } => {
                    self.check_cond(cond, assigned)?;
                    let mut t = assigned.clone();
                    let mut e = assigned.clone();
                    self.check_block(then_branch, &mut t)?;
                    self.check_block(else_branch, &mut e)?;
                    *assigned = t.intersection(&e).cloned().collect();
                }
            }
        }
        Ok(())
    }

    fn check_mem(&self, mem: &MemRef, assigned: &BTreeSet<String>) -> Result<(), ProgramError> {
        if self.object(&mem.object).is_none() {
            return Err(ProgramError::Undeclared(mem.object.clone()));
        }
        self.check_expr(&mem.index, assigned)
    }

    fn check_expr(&self, e: &Expr, assigned: &BTreeSet<String>) -> Result<(), ProgramError> {
        match e {
            Expr::Lit(_) => Ok(()),
            Expr::Input(i) => {
                if *i >= self.input.bytes {
                    Err(ProgramError::InputIndex { index: *i as u64, bytes: self.input.bytes })
                } else {
                    Ok(())
                }
            }
            Expr::Reg(r) => {
                if assigned.contains(r) {
                    Ok(())
                } else {
                    Err(ProgramError::Unassigned(r.clone()))
                }
            }
            Expr::Base(o) => {
                if self.object(o).is_some() {
                    Ok(())
                } else {
                    Err(ProgramError::Undeclared(o.clone()))
                }
            }
            Expr::Bin(_, a, b) => {
                self.check_expr(a, assigned)?;
                self.check_expr(b, assigned)
            }
        }
    }

    fn check_cond(&self, c: &Cond, assigned: &BTreeSet<String>) -> Result<(), ProgramError> {
        match c {
            Cond::Cmp(_, a, b) => {
                self.check_expr(a, assigned)?;
                self.check_expr(b, assigned)
            }
            Cond::Not(c) => self.check_cond(c, assigned),
            Cond::And(a, b) | Cond::Or(a, b) => {
                self.check_cond(a, assigned)?;
                self.check_cond(b, assigned)
            }
        }
    }

    /// Base addresses by object name.
    pub fn bases(&self) -> BTreeMap<&str, u64> {
        self.objects.iter().map(|o| (o.name.as_str(), o.base)).collect()
    }
}

impl fmt::Display for MiniProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_program(self, f)
    }
}

/// Splits an input value into big-endian bytes (`k[0]` is most significant).
pub fn input_bytes(value: u64, bytes: u32) -> Vec<u8> {
    (0..bytes).map(|i| (value >> (8 * (bytes - 1 - i))) as u8).collect()
}

/// Inverse of [`input_bytes`].
pub fn input_value(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, b| (acc << 8) | *b as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_byte_order_is_big_endian() {
        assert_eq!(input_bytes(0x1234, 2), vec![0x12, 0x34]);
        assert_eq!(input_value(&[0x12, 0x34]), 0x1234);
        assert_eq!(input_bytes(7, 1), vec![7]);
    }

    #[test]
    fn overlapping_objects_rejected() {
        let p = MiniProgram {
            name: "t".into(),
            input: InputDecl { name: "k".into(), bytes: 1 },
            addr_width: 32,
            objects: vec![
                DataObject { name: "a".into(), base: 0, size: 16 },
                DataObject { name: "b".into(), base: 8, size: 16 },
            ],
            body: vec![],
        };
        assert_eq!(p.validate(), Err(ProgramError::Overlap("a".into(), "b".into())));
    }

    #[test]
    fn object_must_fit_address_space() {
        let p = MiniProgram {
            name: "t".into(),
            input: InputDecl { name: "k".into(), bytes: 1 },
            addr_width: 8,
            objects: vec![DataObject { name: "a".into(), base: 0xF0, size: 32 }],
            body: vec![],
        };
        assert_eq!(p.validate(), Err(ProgramError::OutOfAddressSpace("a".into())));
    }
}
