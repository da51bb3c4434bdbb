//! SMT-LIB v2.6 emitter.
//!
//! Input bytes become 8-bit bitvector constants, zero-extended to the term
//! width at each use. Model variables become `Int` constants bounded to
//! {0, 1}. Each top-level conjunct is asserted separately.

use std::fmt::Write;

use crate::constraint::{flatten_and, BinOp, CmpOp, Constraint, PbOp, Term, TermView};

pub fn input_name(byte: u32) -> String {
    format!("k_{}", byte)
}

fn term(t: &Term, width: u32, out: &mut String) {
    match t.view() {
        TermView::Const(v) => {
            let v = v & crate::constraint::width_mask(width);
            let _ = write!(out, "(_ bv{} {})", v, width);
        }
        TermView::Input(b) => {
            if width == 8 {
                out.push_str(&input_name(b));
            } else if width > 8 {
                let _ = write!(out, "((_ zero_extend {}) {})", width - 8, input_name(b));
            } else {
                let _ = write!(out, "((_ extract {} 0) {})", width - 1, input_name(b));
            }
        }
        TermView::Bin(op, a, b) => {
            let f = match op {
                BinOp::Add => "bvadd",
                BinOp::Sub => "bvsub",
                BinOp::Mul => "bvmul",
                BinOp::Shl => "bvshl",
                BinOp::Lshr => "bvlshr",
                BinOp::And => "bvand",
                BinOp::Or => "bvor",
                BinOp::Xor => "bvxor",
            };
            let _ = write!(out, "({} ", f);
            term(a, width, out);
            out.push(' ');
            term(b, width, out);
            out.push(')');
        }
    }
}

fn formula(c: &Constraint, out: &mut String) {
    match c {
        Constraint::True => out.push_str("true"),
        Constraint::False => out.push_str("false"),
        Constraint::Cmp { op, lhs, rhs, width } => {
            let (head, close) = match op {
                CmpOp::Eq => ("(= ", ")"),
                CmpOp::Ne => ("(not (= ", "))"),
                CmpOp::Ult => ("(bvult ", ")"),
                CmpOp::Ule => ("(bvule ", ")"),
            };
            out.push_str(head);
            term(lhs, *width, out);
            out.push(' ');
            term(rhs, *width, out);
            out.push_str(close);
        }
        Constraint::Pb { vars, op, bound } => {
            let rel = match op {
                PbOp::Eq => "=",
                PbOp::Ge => ">=",
                PbOp::Le => "<=",
            };
            let _ = write!(out, "({} ", rel);
            match vars.len() {
                0 => out.push('0'),
                1 => out.push_str(&vars[0].name()),
                _ => {
                    out.push_str("(+");
                    for v in vars {
                        out.push(' ');
                        out.push_str(&v.name());
                    }
                    out.push(')');
                }
            }
            let _ = write!(out, " {})", int_literal(*bound));
        }
        Constraint::Not(inner) => {
            out.push_str("(not ");
            formula(inner, out);
            out.push(')');
        }
        Constraint::And(cs) | Constraint::Or(cs) => {
            out.push_str(if matches!(c, Constraint::And(_)) { "(and" } else { "(or" });
            for c in cs {
                out.push(' ');
                formula(c, out);
            }
            out.push(')');
        }
        Constraint::Implies(a, b) => {
            out.push_str("(=> ");
            formula(a, out);
            out.push(' ');
            formula(b, out);
            out.push(')');
        }
    }
}

fn int_literal(v: i64) -> String {
    if v < 0 {
        format!("(- {})", v.unsigned_abs())
    } else {
        v.to_string()
    }
}

/// Emits a self-contained script asserting `c`, ending in `(check-sat)` and
/// `(get-model)`.
pub fn emit_smtlib(c: &Constraint) -> String {
    emit_conjunction(&[c])
}

pub fn emit_conjunction(parts: &[&Constraint]) -> String {
    let mut conj = Vec::new();
    for p in parts {
        match p {
            Constraint::True => {}
            other => flatten_and(other, &mut conj),
        }
    }
    let mut inputs = std::collections::BTreeSet::new();
    let mut vars = std::collections::BTreeSet::new();
    for c in &conj {
        c.collect_inputs(&mut inputs);
        c.collect_vars(&mut vars);
    }
    let mut out = String::new();
    out.push_str("(set-info :smt-lib-version 2.6)\n");
    out.push_str("(set-option :produce-models true)\n");
    out.push_str("(set-logic ALL)\n");
    for b in &inputs {
        let _ = writeln!(out, "(declare-const {} (_ BitVec 8))", input_name(*b));
    }
    for v in &vars {
        let name = v.name();
        let _ = writeln!(out, "(declare-const {} Int)", name);
        let _ = writeln!(out, "(assert (and (<= 0 {}) (<= {} 1)))", name, name);
    }
    for c in &conj {
        out.push_str("(assert ");
        formula(c, &mut out);
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::Var;

    #[test]
    fn constant_true_is_minimal() {
        let s = emit_smtlib(&Constraint::True);
        assert_eq!(
            s,
            "(set-info :smt-lib-version 2.6)\n(set-option :produce-models true)\n(set-logic ALL)\n(check-sat)\n(get-model)\n"
        );
    }

    #[test]
    fn declares_inputs_and_bounded_ints() {
        let c = Constraint::and([
            Constraint::cmp(CmpOp::Ult, Term::input(0) + Term::constant(0x101), Term::constant(512), 32),
            Constraint::pb(vec![Var::miss(0, 1), Var::miss(0, 2)], PbOp::Eq, 2),
        ]);
        let s = emit_smtlib(&c);
        assert!(s.contains("(declare-const k_0 (_ BitVec 8))"));
        assert!(s.contains("(declare-const miss_0_1 Int)"));
        assert!(s.contains("(assert (bvult (bvadd ((_ zero_extend 24) k_0) (_ bv257 32)) (_ bv512 32)))"));
        assert!(s.contains("(assert (= (+ miss_0_1 miss_0_2) 2))"));
        assert_eq!(s.matches("(assert ").count(), 4);
    }
}
