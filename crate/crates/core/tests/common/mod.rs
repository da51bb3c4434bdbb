#![allow(dead_code)]

use std::fmt::Write;

use cacheleak::cache::{build_model, CacheConfig, SymbolicCacheModel};
use cacheleak::program::{input_bytes, parse_program, MiniProgram};
use cacheleak::sim::simulate;
use cacheleak::solver::EnumerateBackend;
use cacheleak::symexec::{explore, path_of, Budget, ExplorationResult};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFIGS: [&str; 6] = ["512B/16B/1", "512B/32B/1", "1KB/16B/2:lru", "1KB/32B/2:lru", "2KB/16B/4:lru", "2KB/32B/4:lru"];

pub fn configs() -> Vec<CacheConfig> {
    CONFIGS.iter().map(|c| c.parse().unwrap()).collect()
}

pub fn all_inputs(bytes: u32) -> impl Iterator<Item = Vec<u8>> {
    (0..1u64 << (8 * bytes)).map(move |v| input_bytes(v, bytes))
}

const ARRAYS: [(&str, u64, u64); 3] = [("a", 64, 0x000), ("b", 256, 0x0c0), ("c", 1024, 0x400)];

struct Gen {
    rng: ChaCha8Rng,
    bytes: u32,
    regs: Vec<String>,
    accesses: usize,
    branches: usize,
    max_accesses: usize,
    max_branches: usize,
}

impl Gen {
    fn atom(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => format!("k[{}]", self.rng.gen_range(0..self.bytes)),
            1 => format!("{}", self.rng.gen_range(0..300)),
            _ => self.regs.choose(&mut self.rng).unwrap().clone(),
        }
    }

    fn expr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.35) {
            return self.atom();
        }
        let op = ["+", "-", "*", "^", "&", "|", "<<", ">>"].choose(&mut self.rng).unwrap();
        let rhs = if matches!(*op, "<<" | ">>") { format!("{}", self.rng.gen_range(0..6)) } else { self.expr(depth - 1) };
        format!("({} {} {})", self.expr(depth - 1), op, rhs)
    }

    fn access(&mut self, out: &mut String, indent: &str) {
        let (name, size, _) = *ARRAYS.choose(&mut self.rng).unwrap();
        let kw = if self.rng.gen_bool(0.8) { "load" } else { "store" };
        let e = self.expr(2);
        let _ = writeln!(out, "{}{} {}[{} & {}];", indent, kw, name, e, size - 1);
        self.accesses += 1;
    }

    fn block(&mut self, out: &mut String, indent: &str, top: bool, len: usize) {
        for _ in 0..len {
            if self.accesses >= self.max_accesses {
                return;
            }
            let roll = self.rng.gen_range(0..10);
            if roll < 5 {
                self.access(out, indent);
            } else if roll < 7 {
                let e = self.expr(2);
                if top && self.rng.gen_bool(0.5) {
                    let name = format!("r{}", self.regs.len());
                    let _ = writeln!(out, "{}reg {} = {};", indent, name, e);
                    self.regs.push(name);
                } else {
                    let r = self.regs.choose(&mut self.rng).unwrap().clone();
                    let _ = writeln!(out, "{}{} = {};", indent, r, e);
                }
            } else if self.branches < self.max_branches {
                self.branches += 1;
                let op = ["<", "<=", "==", "!="].choose(&mut self.rng).unwrap();
                let lhs = self.expr(1);
                let rhs = self.rng.gen_range(0..256);
                let _ = writeln!(out, "{}if ({} {} {}) {{", indent, lhs, op, rhs);
                let inner = format!("{}    ", indent);
                let n = self.rng.gen_range(1..4);
                self.block(out, &inner, false, n);
                if self.rng.gen_bool(0.7) {
                    let _ = writeln!(out, "{}}} else {{", indent);
                    let n = self.rng.gen_range(1..4);
                    self.block(out, &inner, false, n);
                }
                let _ = writeln!(out, "{}}}", indent);
            } else {
                self.access(out, indent);
            }
        }
    }
}

/// A random well-formed program: at most 12 memory statements and 3
/// branches, every index masked into its array.
pub fn random_program(seed: u64, bytes: u32) -> (String, MiniProgram) {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        bytes,
        regs: vec!["r0".into()],
        accesses: 0,
        branches: 0,
        max_accesses: 12,
        max_branches: 3,
    };
    let mut src = format!("program rand{};\ninput k : {} bytes;\n", seed, bytes);
    for (name, size, base) in ARRAYS {
        let _ = writeln!(src, "array {} : {} @ {:#x};", name, size, base);
    }
    let _ = writeln!(src, "reg r0 = k[0];");
    if bytes > 1 {
        let _ = writeln!(src, "reg r1 = k[1];");
        g.regs.push("r1".into());
    }
    let len = g.rng.gen_range(4..14);
    g.block(&mut src, "", true, len);
    let program = parse_program(&src).unwrap_or_else(|e| panic!("{}\n{}", e, src));
    (src, program)
}

pub fn explore_all(program: &MiniProgram) -> ExplorationResult {
    explore(program, Budget::default(), &EnumerateBackend::default()).unwrap()
}

pub fn models(program: &MiniProgram, cfg: &CacheConfig) -> (ExplorationResult, Vec<SymbolicCacheModel>) {
    let r = explore_all(program);
    let m = r.paths.iter().map(|p| build_model(p, cfg).unwrap()).collect();
    (r, m)
}

/// Inputs at which the gamma-forced miss vector differs from simulation,
/// or at which the path's addresses differ from the concrete ones.
pub fn mismatches(program: &MiniProgram, cfg: &CacheConfig, models: &[SymbolicCacheModel]) -> Vec<Vec<u8>> {
    let paths: Vec<_> = models.iter().map(|m| m.path.clone()).collect();
    let oracles: Vec<_> = models.iter().map(|m| m.miss_oracle()).collect();
    let mut bad = Vec::new();
    for inputs in all_inputs(program.input.bytes) {
        let trace = simulate(program, &inputs, cfg).unwrap();
        let ok = match path_of(&paths, &inputs) {
            Some(e) => {
                let addrs: Vec<u64> = trace.accesses.iter().map(|a| a.address).collect();
                paths[e].addresses_at(&inputs) == addrs && oracles[e].forced(&inputs) == Some(trace.misses())
            }
            None => false,
        };
        if !ok {
            bad.push(inputs);
        }
    }
    bad
}
