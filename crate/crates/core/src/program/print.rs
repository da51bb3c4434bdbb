//! Canonical printer. Its output parses back to the same program.

use std::fmt::{self, Write};

use super::{Cond, Expr, MiniProgram, Statement, DEFAULT_ADDR_WIDTH};

pub(super) fn write_program(p: &MiniProgram, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    writeln!(f, "program {};", p.name)?;
    if p.addr_width != DEFAULT_ADDR_WIDTH {
        writeln!(f, "addr_width {};", p.addr_width)?;
    }
    writeln!(f, "input {} : {} bytes;", p.input.name, p.input.bytes)?;
    for o in &p.objects {
        writeln!(f, "array {} : {} @ {:#05x};", o.name, o.size, o.base)?;
    }
    let mut s = String::new();
    write_block(p, &p.body, 0, &mut s)?;
    f.write_str(&s)
}

fn write_block(p: &MiniProgram, stmts: &[Statement], depth: usize, out: &mut String) -> fmt::Result {
    let pad = "    ".repeat(depth);
    for s in stmts {
        match s {
            Statement::Assign { reg, value } => {
                writeln!(out, "{}reg {} = {};", pad, reg, ExprFmt(p, value))?;
            }
            Statement::Load { mem, .. } => {
                writeln!(out, "{}load {}[{}];", pad, mem.object, ExprFmt(p, &mem.index))?;
            }
            Statement::Store { mem, value, .. } => {
                write!(out, "{}store {}[{}]", pad, mem.object, ExprFmt(p, &mem.index))?;
                if let Some(v) = value {
                    write!(out, " = {}", ExprFmt(p, v))?;
                }
                out.push_str(";\n");
            }
            Statement::If { cond, then_branch, else_branch } => {
                writeln!(out, "{}if ({}) {{", pad, CondFmt(p, cond))?;
                write_block(p, then_branch, depth + 1, out)?;
                if else_branch.is_empty() {
                    writeln!(out, "{}}}", pad)?;
                } else {
                    writeln!(out, "{}}} else {{", pad)?;
                    write_block(p, else_branch, depth + 1, out)?;
                    writeln!(out, "{}}}", pad)?;
                }
            }
        }
    }
    Ok(())
}

pub(crate) struct ExprFmt<'a>(pub &'a MiniProgram, pub &'a Expr);

impl ExprFmt<'_> {
    fn write(&self, e: &Expr, parent: u8, right: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Lit(v) => {
                if *v >= 256 {
                    write!(f, "{:#x}", v)
                } else {
                    write!(f, "{}", v)
                }
            }
            Expr::Input(i) => write!(f, "{}[{}]", self.0.input.name, i),
            Expr::Reg(r) => f.write_str(r),
            Expr::Base(o) => write!(f, "base({})", o),
            Expr::Bin(op, a, b) => {
                let prec = op.precedence();
                let paren = prec < parent || (right && prec == parent);
                if paren {
                    f.write_str("(")?;
                }
                self.write(a, prec, false, f)?;
                write!(f, " {} ", op.symbol())?;
                self.write(b, prec, true, f)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for ExprFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.1, 0, false, f)
    }
}

struct CondFmt<'a>(&'a MiniProgram, &'a Cond);

impl CondFmt<'_> {
    fn prec(c: &Cond) -> u8 {
        match c {
            Cond::Or(..) => 1,
            Cond::And(..) => 2,
            Cond::Not(_) | Cond::Cmp(..) => 3,
        }
    }

    fn write(&self, c: &Cond, parent: u8, right: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prec = Self::prec(c);
        let paren = prec < parent || (right && prec == parent && prec < 3);
        if paren {
            f.write_str("(")?;
        }
        match c {
            Cond::Cmp(op, a, b) => write!(f, "{} {} {}", ExprFmt(self.0, a), op.symbol(), ExprFmt(self.0, b))?,
            Cond::Not(inner) => {
                f.write_str("!(")?;
                self.write(inner, 0, false, f)?;
                f.write_str(")")?;
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                self.write(a, prec, false, f)?;
                f.write_str(if prec == 2 { " && " } else { " || " })?;
                self.write(b, prec, true, f)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for CondFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.1, 0, false, f)
    }
}
