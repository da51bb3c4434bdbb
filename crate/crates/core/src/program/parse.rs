use std::collections::HashMap;

use super::{BinOp, CmpOp, Cond, DataObject, Expr, InputDecl, MemRef, MiniProgram, ProgramError, Statement, StmtId, DEFAULT_ADDR_WIDTH};

/// Upper bound on the number of statements produced by loop unrolling.
const MAX_UNROLLED: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 26] = [
    "..", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", ";", ":", "@", "[", "]", "(", ")", "{", "}", "=", "<", ">",
    "+", "-", "*", "&", "|",
];
const SINGLE_EXTRA: [&str; 3] = ["^", "!", ","];

fn lex(text: &str) -> Result<Vec<Token>, ProgramError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| ProgramError::Syntax { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            let value = if c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X')) {
                i += 2;
                let s = i;
                while i < chars.len() && (chars[i].is_ascii_hexdigit() || chars[i] == '_') {
                    i += 1;
                }
                let digits: String = chars[s..i].iter().filter(|c| **c != '_').collect();
                u64::from_str_radix(&digits, 16).map_err(|e| err(tl, tc, format!("bad hex literal: {}", e)))?
            } else {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().filter(|c| **c != '_').collect();
                digits.parse::<u64>().map_err(|e| err(tl, tc, format!("bad literal: {}", e)))?
            };
            col += i - start;
            out.push(Token { tok: Tok::Num(value), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let sym = SYMBOLS
            .iter()
            .chain(SINGLE_EXTRA.iter())
            .find(|s| rest.starts_with(**s))
            .ok_or_else(|| err(tl, tc, format!("unexpected character `{}`", c)))?;
        i += sym.len();
        col += sym.len();
        out.push(Token { tok: Tok::Sym(sym), line: tl, col: tc });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    input: Option<InputDecl>,
    loop_vars: HashMap<String, u64>,
    produced: usize,
}

type PResult<T> = Result<T, ProgramError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ProgramError::Syntax { line: t.line, col: t.col, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{}`, found {}", s, describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{}`, found {}", s, describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn number(&mut self) -> PResult<u64> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(n)
            }
            other => self.error(format!("expected number, found {}", describe(&other))),
        }
    }

    fn program(&mut self) -> PResult<MiniProgram> {
        let mut name = None;
        let mut addr_width = None;
        let mut objects = Vec::new();
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            if self.is_kw("program") {
                self.bump();
                name = Some(self.ident()?);
                self.expect_sym(";")?;
            } else if self.is_kw("addr_width") {
                self.bump();
                let w = self.number()?;
                if w == 0 || w > 64 {
                    return self.error("address width must be in 1..=64");
                }
                addr_width = Some(w as u32);
                self.expect_sym(";")?;
            } else if self.is_kw("input") {
                self.bump();
                if self.input.is_some() {
                    return self.error("only one input declaration is allowed");
                }
                let n = self.ident()?;
                self.expect_sym(":")?;
                let bytes = self.number()?;
                if !(self.is_kw("bytes") || self.is_kw("byte")) {
                    return self.error("expected `bytes`");
                }
                self.bump();
                self.expect_sym(";")?;
                if bytes == 0 || bytes > 64 {
                    return self.error("input size must be between 1 and 64 bytes");
                }
                self.input = Some(InputDecl { name: n, bytes: bytes as u32 });
            } else if self.is_kw("array") {
                self.bump();
                let n = self.ident()?;
                self.expect_sym(":")?;
                let size = self.number()?;
                self.expect_sym("@")?;
                let base = self.number()?;
                self.expect_sym(";")?;
                objects.push(DataObject { name: n, base, size });
            } else {
                if self.input.is_none() {
                    return self.error("statements must follow the input declaration");
                }
                self.statement(&mut body)?;
            }
        }
        let input = match self.input.take() {
            Some(i) => i,
            None => return self.error("missing input declaration"),
        };
        let mut program = MiniProgram {
            name: name.unwrap_or_else(|| "program".to_string()),
            input,
            addr_width: addr_width.unwrap_or(DEFAULT_ADDR_WIDTH),
            objects,
            body,
        };
        let mut next = 0;
        number_statements(&mut program.body, &mut next);
        Ok(program)
    }

    fn block(&mut self) -> PResult<Vec<Statement>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.error("unterminated block");
            }
            self.statement(&mut out)?;
        }
        self.bump();
        Ok(out)
    }

    fn statement(&mut self, out: &mut Vec<Statement>) -> PResult<()> {
        self.produced += 1;
        if self.produced > MAX_UNROLLED {
            return self.error("program too large after loop unrolling");
        }
        let line = self.toks[self.pos].line;
        if self.is_kw("reg") {
            self.bump();
            let reg = self.ident()?;
            self.expect_sym("=")?;
            let value = self.expr()?;
            self.expect_sym(";")?;
            self.check_reg_name(&reg)?;
            out.push(Statement::Assign { reg, value });
        } else if self.is_kw("load") {
            self.bump();
            let mem = self.memref()?;
            self.expect_sym(";")?;
            out.push(Statement::Load { id: StmtId(0), mem });
        } else if self.is_kw("store") {
            self.bump();
            let mem = self.memref()?;
            let value = if self.eat_sym("=") { Some(self.expr()?) } else { None };
            self.expect_sym(";")?;
            out.push(Statement::Store { id: StmtId(0), mem, value });
        } else if self.is_kw("if") {
            self.bump();
            out.push(self.if_rest()?);
        } else if self.is_kw("for") {
            self.bump();
            let var = self.ident()?;
            self.expect_kw("in")?;
            let lo = self.expr()?;
            self.expect_sym("..")?;
            let hi = self.expr()?;
            let (lo, hi) = match (self.const_value(&lo), self.const_value(&hi)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(ProgramError::UnboundedLoop(line)),
            };
            let start = self.pos;
            let saved = self.loop_vars.get(&var).copied();
            if lo >= hi {
                // Parse once for syntax, discard the body.
                self.loop_vars.insert(var.clone(), lo);
                self.block()?;
            }
            for v in lo..hi {
                self.pos = start;
                self.loop_vars.insert(var.clone(), v);
                let body = self.block()?;
                out.extend(body);
            }
            match saved {
                Some(v) => self.loop_vars.insert(var, v),
                None => self.loop_vars.remove(&var),
            };
        } else if self.is_kw("while") || self.is_kw("loop") {
            return Err(ProgramError::UnboundedLoop(line));
        } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("=")) {
            let reg = self.ident()?;
            self.bump();
            let value = self.expr()?;
            self.expect_sym(";")?;
            self.check_reg_name(&reg)?;
            out.push(Statement::Assign { reg, value });
        } else {
            return self.error(format!("expected statement, found {}", describe(self.peek())));
        }
        Ok(())
    }

    fn check_reg_name(&self, reg: &str) -> PResult<()> {
        if self.loop_vars.contains_key(reg) {
            return self.error(format!("cannot assign to loop variable `{}`", reg));
        }
        Ok(())
    }

    fn if_rest(&mut self) -> PResult<Statement> {
        let cond = self.cond()?;
        let then_branch = self.block()?;
        let else_branch = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                self.bump();
                vec![self.if_rest()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Statement::If { cond, then_branch, else_branch })
    }

    fn memref(&mut self) -> PResult<MemRef> {
        let object = self.ident()?;
        self.expect_sym("[")?;
        let index = self.expr()?;
        self.expect_sym("]")?;
        Ok(MemRef { object, index })
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut lhs = self.cond_and()?;
        while self.eat_sym("||") {
            let rhs = self.cond_and()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_and(&mut self) -> PResult<Cond> {
        let mut lhs = self.cond_not()?;
        while self.eat_sym("&&") {
            let rhs = self.cond_not()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_not(&mut self) -> PResult<Cond> {
        if self.eat_sym("!") {
            return Ok(Cond::Not(Box::new(self.cond_not()?)));
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(c) = self.cond() {
                if self.eat_sym(")") {
                    return Ok(c);
                }
            }
            self.pos = save;
        }
        let a = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("=") | Tok::Sym("==") => (CmpOp::Eq, false),
            Tok::Sym("!=") => (CmpOp::Ne, false),
            Tok::Sym("<") => (CmpOp::Ult, false),
            Tok::Sym("<=") => (CmpOp::Ule, false),
            Tok::Sym(">") => (CmpOp::Ult, true),
            Tok::Sym(">=") => (CmpOp::Ule, true),
            other => return self.error(format!("expected comparison, found {}", describe(other))),
        };
        self.bump();
        let b = self.expr()?;
        Ok(if op.1 { Cond::Cmp(op.0, b, a) } else { Cond::Cmp(op.0, a, b) })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        if min_prec > 6 {
            return self.primary();
        }
        let mut lhs = self.binary(min_prec + 1)?;
        while let Tok::Sym(s) = self.peek() {
            let Some(op) = binop_of(s).filter(|op| op.precedence() == min_prec) else {
                break;
            };
            self.bump();
            let rhs = self.binary(min_prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Lit(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "base" && self.is_sym("(") {
                    self.bump();
                    let o = self.ident()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::Base(o));
                }
                if let Some(v) = self.loop_vars.get(&name) {
                    return Ok(Expr::Lit(*v));
                }
                if self.is_sym("[") {
                    let is_input = self.input.as_ref().map(|i| i.name == name).unwrap_or(false);
                    if !is_input {
                        return Err(ProgramError::Undeclared(name));
                    }
                    self.bump();
                    let idx_expr = self.expr()?;
                    let idx = match self.const_value(&idx_expr) {
                        Some(v) => v,
                        None => return self.error("input byte index must be a constant"),
                    };
                    self.expect_sym("]")?;
                    let bytes = self.input.as_ref().map(|i| i.bytes).unwrap_or(0);
                    if idx >= bytes as u64 {
                        return Err(ProgramError::InputIndex { index: idx, bytes });
                    }
                    return Ok(Expr::Input(idx as u32));
                }
                Ok(Expr::Reg(name))
            }
            other => self.error(format!("expected expression, found {}", describe(&other))),
        }
    }

    fn const_value(&self, e: &Expr) -> Option<u64> {
        match e {
            Expr::Lit(v) => Some(*v),
            Expr::Bin(op, a, b) => Some(op.apply(self.const_value(a)?, self.const_value(b)?, 64)),
            _ => None,
        }
    }
}

fn binop_of(s: &str) -> Option<BinOp> {
    Some(match s {
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "<<" => BinOp::Shl,
        ">>" => BinOp::Lshr,
        "&" => BinOp::And,
        "|" => BinOp::Or,
        "^" => BinOp::Xor,
        _ => return None,
    })
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{}`", s),
        Tok::Num(n) => format!("`{}`", n),
        Tok::Sym(s) => format!("`{}`", s),
        Tok::Eof => "end of input".to_string(),
    }
}

fn number_statements(stmts: &mut [Statement], next: &mut usize) {
    for s in stmts {
        match s {
            Statement::Load { id, .. } | Statement::Store { id, .. } => {
                *id = StmtId(*next);
                *next += 1;
            }
            Statement::Assign { .. } => {}
            Statement::If { then_branch, else_branch, .. } => {
                number_statements(then_branch, next);
                number_statements(else_branch, next);
            }
        }
    }
}

/// Parses and validates a program.
pub fn parse_program(text: &str) -> Result<MiniProgram, ProgramError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, input: None, loop_vars: HashMap::new(), produced: 0 };
    let program = p.program()?;
    program.validate()?;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2A: &str = "
        program fig2a;
        input k : 1 bytes;
        array p : 256 @ 0x000;
        array q : 256 @ 0x101;
        reg r1 = k[0];
        load p[r1];
        if (r1 < 128) { load q[255 - r1]; } else { load q[r1 - 128]; }
        load p[r1];
    ";

    #[test]
    fn parses_fig2a() {
        let p = parse_program(FIG2A).unwrap();
        assert_eq!(p.name, "fig2a");
        assert_eq!(p.objects.len(), 2);
        assert_eq!(p.branch_count(), 1);
        assert_eq!(p.input_bits(), 8);
        assert_eq!(p.object("q").unwrap().base, 0x101);
        assert_eq!(p.memory_statement_count(), 4);
    }

    #[test]
    fn empty_body_is_valid() {
        let p = parse_program("input k : 1 bytes; array a : 4 @ 0;").unwrap();
        assert!(p.body.is_empty());
        assert_eq!(p.memory_statement_count(), 0);
    }

    #[test]
    fn undeclared_array_is_named() {
        let err = parse_program("input k : 1 bytes; array p : 4 @ 0; load r[0];").unwrap_err();
        assert_eq!(err, ProgramError::Undeclared("r".into()));
        assert!(err.to_string().contains('r'));
    }

    #[test]
    fn while_loops_rejected() {
        let err = parse_program("input k : 1 bytes;\narray p : 4 @ 0;\nwhile (k[0] < 3) { load p[0]; }").unwrap_err();
        assert_eq!(err, ProgramError::UnboundedLoop(3));
    }

    #[test]
    fn symbolic_loop_bounds_rejected() {
        let err = parse_program("input k : 1 bytes; array p : 4 @ 0; for i in 0..k[0] { load p[0]; }").unwrap_err();
        assert!(matches!(err, ProgramError::UnboundedLoop(_)));
    }

    #[test]
    fn for_loops_unroll() {
        let p = parse_program("input k : 1 bytes; array p : 16 @ 0; for i in 0..4 { load p[i * 2]; }").unwrap();
        assert_eq!(p.body.len(), 4);
        match &p.body[3] {
            Statement::Load { id, mem } => {
                assert_eq!(*id, StmtId(3));
                assert_eq!(mem.index, Expr::bin(BinOp::Mul, Expr::Lit(3), Expr::Lit(2)));
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_program("input k : 1 bytes;\narray p : 4 @ 0;\nload p[0]").unwrap_err();
        match err {
            ProgramError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn register_must_be_assigned_on_all_paths() {
        let src = "input k : 1 bytes; array p : 4 @ 0; if (k[0] < 2) { reg r = 1; } load p[r];";
        assert_eq!(parse_program(src).unwrap_err(), ProgramError::Unassigned("r".into()));
    }

    #[test]
    fn input_index_checked() {
        let err = parse_program("input k : 1 bytes; array p : 4 @ 0; load p[k[1]];").unwrap_err();
        assert_eq!(err, ProgramError::InputIndex { index: 1, bytes: 1 });
    }

    #[test]
    fn parenthesized_arithmetic_in_conditions() {
        let p = parse_program("input k : 1 bytes; array p : 4 @ 0; if ((k[0] & 1) == 0 && !(k[0] > 7)) { load p[0]; }")
            .unwrap();
        match &p.body[0] {
            Statement::If { cond: Cond::And(a, b), .. } => {
                assert!(matches!(**a, Cond::Cmp(CmpOp::Eq, _, _)));
                assert!(matches!(**b, Cond::Not(_)));
            }
            other => panic!("unexpected {:?}", other),
        }
    }
}
