use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use num_bigint::BigUint;
use wait_timeout::ChildExt;

use super::smtlib::emit_conjunction;
use super::{SatResult, SolverBackend, SolverError, UnknownReason, Witness};
use crate::constraint::Constraint;

/// Runs an external SMT-LIB solver, one process per query.
pub struct ExternalSmt {
    command: Vec<String>,
    timeout: Duration,
    lock: Mutex<()>,
}

impl ExternalSmt {
    pub fn new(command: Vec<String>, timeout: Duration) -> Self {
        ExternalSmt { command, timeout, lock: Mutex::new(()) }
    }

    fn run(&self, script: &str) -> Result<Option<String>, SolverError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let (prog, args) = self
            .command
            .split_first()
            .ok_or_else(|| SolverError::Process("empty solver command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SolverError::Process(format!("cannot start `{}`: {}", prog, e)))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin.write_all(script.as_bytes()).map_err(|e| SolverError::Process(e.to_string()))?;
        }
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        match child.wait_timeout(self.timeout).map_err(|e| SolverError::Process(e.to_string()))? {
            Some(_) => Ok(Some(reader.join().unwrap_or_default())),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                Ok(None)
            }
        }
    }
}

/// Extracts `(define-fun name () Sort value)` entries from a model.
fn parse_model(text: &str) -> (Vec<(u32, u8)>, BTreeMap<String, i64>) {
    let mut bytes = Vec::new();
    let mut ints = BTreeMap::new();
    let tokens: Vec<String> = text
        .replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "define-fun" && i + 1 < tokens.len() {
            let name = tokens[i + 1].clone();
            // Skip "()" and the sort, then read the value.
            let mut j = i + 2;
            let mut depth = 0i32;
            let mut seen_args = false;
            let mut sort_done = false;
            while j < tokens.len() && !sort_done {
                match tokens[j].as_str() {
                    "(" => depth += 1,
                    ")" => {
                        depth -= 1;
                        if depth == 0 && !seen_args {
                            seen_args = true;
                        } else if depth == 0 {
                            sort_done = true;
                        }
                    }
                    _ => {
                        if seen_args && depth == 0 {
                            sort_done = true;
                        }
                    }
                }
                j += 1;
            }
            let mut value = String::new();
            let mut vdepth = 0i32;
            while j < tokens.len() {
                let t = &tokens[j];
                if t == "(" {
                    vdepth += 1;
                } else if t == ")" {
                    if vdepth == 0 {
                        break;
                    }
                    vdepth -= 1;
                }
                value.push_str(t);
                value.push(' ');
                j += 1;
                if vdepth == 0 {
                    break;
                }
            }
            let v = value.replace(' ', "");
            if let Some(b) = name.strip_prefix("k_").and_then(|s| s.parse::<u32>().ok()) {
                let parsed = if let Some(h) = v.strip_prefix("#x") {
                    u8::from_str_radix(h, 16).ok()
                } else if let Some(bin) = v.strip_prefix("#b") {
                    u8::from_str_radix(bin, 2).ok()
                } else {
                    v.strip_prefix("(_bv").and_then(|s| s.strip_suffix("8)")).and_then(|s| s.parse().ok())
                };
                if let Some(p) = parsed {
                    bytes.push((b, p));
                }
            } else if let Ok(n) = v.parse::<i64>() {
                ints.insert(name, n);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    (bytes, ints)
}

impl SolverBackend for ExternalSmt {
    fn name(&self) -> &'static str {
        "smt"
    }

    fn check_sat_all(&self, conjuncts: &[&Constraint]) -> Result<SatResult, SolverError> {
        let script = emit_conjunction(conjuncts);
        let output = match self.run(&script)? {
            Some(o) => o,
            None => return Ok(SatResult::Unknown(UnknownReason::Timeout)),
        };
        let first = output.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        match first {
            "sat" => {
                let (bytes, ints) = parse_model(&output);
                let mut inputs = Vec::new();
                for (b, v) in bytes {
                    if inputs.len() <= b as usize {
                        inputs.resize(b as usize + 1, 0);
                    }
                    inputs[b as usize] = v;
                }
                let mut vars = BTreeMap::new();
                for c in conjuncts {
                    for v in c.vars() {
                        let value = ints.get(&v.name()).copied().unwrap_or(0);
                        vars.insert(v, value);
                    }
                }
                Ok(SatResult::Sat(Witness { inputs, vars }))
            }
            "unsat" => Ok(SatResult::Unsat),
            "unknown" => Ok(SatResult::Unknown(UnknownReason::SolverSaid("unknown".into()))),
            other => Err(SolverError::Process(format!("unexpected solver output `{}`", other))),
        }
    }

    fn count_models(&self, _c: &Constraint, _input_bytes: u32) -> Result<BigUint, SolverError> {
        Err(SolverError::Unsupported("smt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_z3_style_model() {
        let text = "sat\n(\n  (define-fun k_0 () (_ BitVec 8)\n    #x00)\n  (define-fun miss_0_3 () Int\n    1)\n  (define-fun k_1 () (_ BitVec 8) #b00000101)\n)\n";
        let (bytes, ints) = parse_model(text);
        assert_eq!(bytes, vec![(0, 0), (1, 5)]);
        assert_eq!(ints.get("miss_0_3"), Some(&1));
    }

    #[test]
    fn missing_solver_is_a_process_error() {
        let s = ExternalSmt::new(vec!["definitely-not-a-solver-binary".into()], Duration::from_secs(1));
        assert!(matches!(s.check_sat(&Constraint::True), Err(SolverError::Process(_))));
    }
}
