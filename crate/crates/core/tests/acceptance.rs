//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines show up in `cargo test`
//! output; the process fails if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use cacheleak::cache::{build_model, gamma_direct, gamma_lru, prune, CacheConfig, SymbolicCacheModel};
use cacheleak::constraint::{Constraint, Var};
use cacheleak::observer::{constrain, observe, Observation, Observer};
use cacheleak::program::{input_bytes, layout_fig2, parse_program, MiniProgram, TOYSBOX_SOURCE};
use cacheleak::quantify::{gen_predicates, predicate_count, quantify, LeakReport, Mode, QuantifyConfig};
use cacheleak::sim::{histogram, simulate, InputRange};
use cacheleak::solver::{BackendConfig, EnumerateBackend, SatResult, SolverBackend};
use num_bigint::BigUint;

use common::{all_inputs, configs, mismatches, models, random_program};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn dm512() -> CacheConfig {
    "512B/32B/1".parse().unwrap()
}

fn analyze(program: &MiniProgram, cache: &CacheConfig, observer: &Observer, obs: &Observation, k: u32, prune: bool) -> LeakReport {
    let mut cfg = QuantifyConfig::new(program.input_bits(), k);
    cfg.prune = prune;
    quantify(program, cache, observer, obs, &cfg, &BackendConfig::enumerate()).unwrap()
}

fn seq3() -> Observer {
    Observer::full_sequence(3).unwrap()
}

fn bits(s: &str) -> Observation {
    Observation::Bits(s.chars().map(|c| c == 'm').collect())
}

fn values(r: &LeakReport, consistent: bool) -> BTreeSet<u64> {
    let list = if consistent { &r.consistent } else { &r.refuted };
    list.iter().map(|p| p.value).collect()
}

fn exact(r: &LeakReport) -> BigUint {
    r.exact_value().expect("exact leak computed")
}

/// Bound relations on one report pair: K = 1 equality and K > 1 ordering.
fn bounds_hold(k1: &LeakReport, others: &[&LeakReport]) -> Result<(), String> {
    ensure!(k1.unknown.is_empty(), "unknown verdicts at K = 1");
    ensure!(k1.lower_bound_value() == exact(k1), "K = 1 bound {} != exact {}", k1.lower_bound, exact(k1));
    for r in others {
        ensure!(r.lower_bound_value() <= exact(r), "bound {} > exact {} at K = {}", r.lower_bound, exact(r), r.config.segments);
    }
    Ok(())
}

fn criterion1() -> Outcome {
    let progs = layout_fig2(&dm512()).unwrap();
    let r = analyze(&progs.a, &dm512(), &seq3(), &bits("mmm"), 1, true);
    ensure!(exact(&r) == BigUint::from(255u32), "exact leak {} for mmm", exact(&r));
    ensure!(values(&r, true) == BTreeSet::from([0]), "consistent set {:?}", values(&r, true));
    let r = analyze(&progs.a, &dm512(), &seq3(), &bits("mmh"), 1, true);
    ensure!(values(&r, true) == (1..=255).collect(), "mmh consistent set has {} values", r.consistent.len());
    ensure!(exact(&r) == BigUint::from(1u32), "exact leak {} for mmh", exact(&r));
    Ok("mmm: exact 255, consistent {0}; mmh: consistent [1,255]".into())
}

fn criterion2() -> Outcome {
    let progs = layout_fig2(&dm512()).unwrap();
    let r = analyze(&progs.b, &dm512(), &seq3(), &bits("mmm"), 1, true);
    let sim_refuted: BTreeSet<u64> =
        (0..=255u8).filter(|k| simulate(&progs.b, &[*k], &dm512()).unwrap().symbols() != "mmm").map(u64::from).collect();
    ensure!(sim_refuted.len() == 128, "simulator partition has {} values", sim_refuted.len());
    ensure!(values(&r, false) == sim_refuted, "refuted set differs from simulator partition");
    ensure!(exact(&r) == BigUint::from(128u32), "exact leak {}", exact(&r));
    let parity: BTreeSet<u64> = sim_refuted.iter().map(|k| k % 2).collect();
    ensure!(parity.len() == 1, "refuted values are not a parity class");
    Ok(format!("mmm refutes {} values, all of parity {}", sim_refuted.len(), parity.iter().next().unwrap()))
}

fn fig2c_observations() -> Vec<(Observer, Observation)> {
    let progs = layout_fig2(&dm512()).unwrap();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for observer in [Observer::MissCount, seq3(), Observer::sequence(vec![2]).unwrap()] {
        for k in 0..=255u8 {
            let o = observe(&simulate(&progs.c, &[k], &dm512()).unwrap(), &observer).unwrap();
            if seen.insert((observer.to_string(), o.to_string())) {
                out.push((observer.clone(), o));
            }
        }
    }
    out
}

fn criterion3() -> Outcome {
    let progs = layout_fig2(&dm512()).unwrap();
    let obs = fig2c_observations();
    for (observer, o) in &obs {
        for k in [1, 8] {
            let r = analyze(&progs.c, &dm512(), observer, o, k, true);
            ensure!(r.u().iter().all(|u| *u == 0), "{} {} K={}: U = {:?}", observer, o, k, r.u());
            ensure!(r.unknown.is_empty() && r.refuted.is_empty(), "{} {} K={}: not all consistent", observer, o, k);
            ensure!(exact(&r) == BigUint::from(0u32), "{} {}: exact {}", observer, o, exact(&r));
        }
    }
    Ok(format!("{} realizable observations, U_i = 0 at K = 1 and K = 8", obs.len()))
}

const LRU_EXAMPLE: &str = "input k : 1 bytes;\narray m : 2048 @ 0x0;\nload m[0];\nload m[512];\nload m[512];\nload m[0];\n";

fn forced_miss4(model: &SymbolicCacheModel, backend: &dyn SolverBackend) -> Result<i64, String> {
    let miss4 = Var::miss(model.path_id(), 4);
    let can = |v: i64| backend.check_sat_all(&[model.gamma(), &Constraint::var_eq(miss4, v)]).unwrap().is_sat();
    match (can(0), can(1)) {
        (true, false) => Ok(0),
        (false, true) => Ok(1),
        other => Err(format!("miss4 not determined: {:?}", other)),
    }
}

fn criterion4() -> Outcome {
    let p = parse_program(LRU_EXAMPLE).unwrap();
    let path = common::explore_all(&p).paths.remove(0);
    let backend = EnumerateBackend::default();
    let two = CacheConfig::lru(4, 5, 2);
    let m = gamma_lru(&path, &two).unwrap();
    ensure!(forced_miss4(&m, &backend)? == 0, "2-way: miss4 not forced to 0");
    let t = simulate(&p, &[0], &two).unwrap().symbols();
    ensure!(t == "mmhh", "2-way simulator gave {}", t);
    for one in [CacheConfig::lru(4, 5, 1), CacheConfig::direct_mapped(4, 5)] {
        let m = build_model(&path, &one).unwrap();
        ensure!(forced_miss4(&m, &backend)? == 1, "{}: miss4 not forced to 1", one);
        let t = simulate(&p, &[0], &one).unwrap().symbols();
        ensure!(t == "mmhm", "{} simulator gave {}", one, t);
    }
    ensure!(
        forced_miss4(&gamma_lru(&path, &CacheConfig::lru(4, 5, 1)).unwrap(), &backend)? == 1,
        "A = 1 LRU model disagrees"
    );
    Ok("2-way LRU: miss4 = 0 and mmhh; A = 1: miss4 = 1 and mmhm".into())
}

/// Random programs checked by criterion 5: (seed, input bytes).
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn random_corpus() -> Vec<(u64, u32)> {
    (0..60u64).map(|s| (s, if s % 12 == 7 { 2 } else { 1 })).collect()
}

fn criterion5() -> Outcome {
    let mut checked = 0;
    let mut paths = 0;
    for (seed, bytes) in random_corpus() {
        let (src, p) = random_program(seed, bytes);
        for cfg in configs() {
            let (r, ms) = models(&p, &cfg);
            ensure!(r.exhausted, "seed {}: exploration not exhausted", seed);
            let bad = mismatches(&p, &cfg, &ms);
            ensure!(bad.is_empty(), "seed {} on {}: {} mismatches, first {:?}\n{}", seed, cfg, bad.len(), bad[0], src);
            // A = 1 under the LRU builder must agree with the direct-mapped one.
            if cfg.assoc == 1 {
                let lru1 = CacheConfig::lru(cfg.set_bits, cfg.line_bits, 1);
                let lm: Vec<_> = r.paths.iter().map(|path| gamma_lru(path, &lru1).unwrap()).collect();
                let dm: Vec<_> = r.paths.iter().map(|path| gamma_direct(path, &cfg).unwrap()).collect();
                let lo: Vec<_> = lm.iter().map(|m| m.miss_oracle()).collect();
                let dmo: Vec<_> = dm.iter().map(|m| m.miss_oracle()).collect();
                for inputs in all_inputs(bytes) {
                    for (a, b) in lo.iter().zip(&dmo) {
                        ensure!(
                            a.forced(&inputs) == b.forced(&inputs),
                            "seed {}: DM and A=1 LRU disagree at {:?}",
                            seed,
                            inputs
                        );
                    }
                }
            }
            checked += 1;
            paths += r.paths.len();
        }
    }
    Ok(format!("{} programs x {} configs ({} program/config pairs, {} paths), 0 mismatches", random_corpus().len(), configs().len(), checked, paths))
}

/// A realized observation of `p` for a pseudo-random input.
fn some_observation(p: &MiniProgram, cfg: &CacheConfig, observer: &Observer, salt: u64) -> Option<Observation> {
    let v = (salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 7) % (1u64 << p.input_bits());
    let t = simulate(p, &input_bytes(v, p.input.bytes), cfg).unwrap();
    observe(&t, observer).ok()
}

fn criterion6() -> Outcome {
    let progs = layout_fig2(&dm512()).unwrap();
    let mut cases = 0;
    for (p, obs) in [(&progs.a, "mmm"), (&progs.a, "mmh"), (&progs.b, "mmm"), (&progs.b, "mmh"), (&progs.c, "mhm")] {
        let k1 = analyze(p, &dm512(), &seq3(), &bits(obs), 1, true);
        let k8 = analyze(p, &dm512(), &seq3(), &bits(obs), 8, true);
        let k2 = analyze(p, &dm512(), &seq3(), &bits(obs), 2, true);
        bounds_hold(&k1, &[&k8, &k2]).map_err(|e| format!("{} {}: {}", p.name, obs, e))?;
        cases += 1;
    }
    for (seed, bytes) in random_corpus().into_iter().step_by(3) {
        let (_, p) = random_program(seed, bytes);
        for (n, cfg) in configs().into_iter().enumerate().step_by(2) {
            let observer = if seed % 2 == 0 { Observer::MissCount } else { Observer::sequence(vec![1, 2]).unwrap() };
            let Some(obs) = some_observation(&p, &cfg, &observer, seed * 7 + n as u64) else { continue };
            if bytes == 1 {
                let k1 = analyze(&p, &cfg, &observer, &obs, 1, true);
                let k8 = analyze(&p, &cfg, &observer, &obs, 8, true);
                bounds_hold(&k1, &[&k8]).map_err(|e| format!("seed {} {}: {}", seed, cfg, e))?;
            } else {
                let k2 = analyze(&p, &cfg, &observer, &obs, 2, true);
                let k4 = analyze(&p, &cfg, &observer, &obs, 4, true);
                for r in [&k2, &k4] {
                    ensure!(r.lower_bound_value() <= exact(r), "seed {} {}: bound above exact", seed, cfg);
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{} instances: bound <= exact, equal at K = 1", cases))
}

fn criterion7() -> Outcome {
    for (n, k, want) in [(128, 128, 256u32), (128, 16, 4096), (8, 1, 256), (16, 2, 512), (16, 16, 32), (24, 3, 768)] {
        let c = predicate_count(n, k).map_err(|e| e.to_string())?;
        ensure!(c == BigUint::from(want), "N={} K={}: count {}", n, k, c);
        let list = gen_predicates(n, k).map_err(|e| e.to_string())?;
        ensure!(list.len() == want as usize, "N={} K={}: generated {}", n, k, list.len());
        ensure!(list.windows(2).all(|w| (w[0].segment, w[0].value) < (w[1].segment, w[1].value)), "order");
    }
    ensure!(predicate_count(16, 3).is_err(), "non-dividing K accepted");
    Ok("P_bit 256 and P_byte 4096 for N = 128; K * 2^(N/K) elsewhere".into())
}

fn criterion8() -> Outcome {
    let p = parse_program(TOYSBOX_SOURCE).unwrap();
    let mut detail = Vec::new();
    for cache in ["1KB/32B/2:lru", "512B/32B/1"] {
        let cfg: CacheConfig = cache.parse().unwrap();
        let hist = histogram(&p, &cfg, InputRange::Full).unwrap();
        let (min_obs, min_count) = hist.iter().next().map(|(a, b)| (*a, *b)).unwrap();
        let (mode_obs, mode_count) = hist.iter().max_by_key(|(_, c)| **c).map(|(a, b)| (*a, *b)).unwrap();
        ensure!(min_count < mode_count, "{}: min bin {} not below mode {}", cache, min_count, mode_count);
        let leak = |m: u64| {
            let mut q = QuantifyConfig::new(16, 2);
            q.mode = Mode::Exact;
            quantify(&p, &cfg, &Observer::MissCount, &Observation::Count(m), &q, &BackendConfig::enumerate()).unwrap()
        };
        let at_min = leak(min_obs);
        let at_mode = leak(mode_obs);
        let total = BigUint::from(65536u32);
        ensure!(exact(&at_min) == &total - BigUint::from(min_count), "{}: exact leak at min disagrees with histogram", cache);
        ensure!(exact(&at_mode) == &total - BigUint::from(mode_count), "{}: exact leak at mode disagrees with histogram", cache);
        ensure!(exact(&at_min) >= exact(&at_mode), "{}: leak at min below leak at mode", cache);
        detail.push(format!("{}: {} misses leaks {}, mode {} leaks {}", cache, min_obs, exact(&at_min), mode_obs, exact(&at_mode)));
    }
    Ok(detail.join("; "))
}

fn comparable(r: &LeakReport) -> LeakReport {
    let mut r = r.without_timing();
    r.config.prune = false;
    r.pruning = None;
    r.gamma_atoms = 0;
    r
}

fn criterion9() -> Outcome {
    let progs = layout_fig2(&dm512()).unwrap();
    let mut cases: Vec<(MiniProgram, CacheConfig, Observer, Observation, u32)> = Vec::new();
    for (p, o) in [(&progs.a, "mmm"), (&progs.a, "mmh"), (&progs.b, "mmm"), (&progs.b, "mmh"), (&progs.c, "mhm")] {
        cases.push((p.clone(), dm512(), seq3(), bits(o), 1));
        cases.push((p.clone(), dm512(), Observer::MissCount, Observation::Count(o.matches('m').count() as u64), 8));
    }
    let lru = parse_program(LRU_EXAMPLE).unwrap();
    cases.push((lru.clone(), CacheConfig::lru(4, 5, 2), Observer::full_sequence(4).unwrap(), bits("mmhh"), 1));
    for (seed, bytes) in random_corpus().into_iter().filter(|(_, b)| *b == 1).step_by(2) {
        let (_, p) = random_program(seed, bytes);
        for (n, cfg) in configs().into_iter().enumerate() {
            if let Some(o) = some_observation(&p, &cfg, &Observer::MissCount, seed + n as u64) {
                cases.push((p.clone(), cfg, Observer::MissCount, o, 1));
            }
        }
    }
    let mut shrunk = 0;
    for (p, cfg, observer, o, k) in &cases {
        let on = analyze(p, cfg, observer, o, *k, true);
        let off = analyze(p, cfg, observer, o, *k, false);
        ensure!(comparable(&on) == comparable(&off), "{} {} {}: reports differ with pruning", p.name, cfg, o);
        let stats = on.pruning.clone().unwrap();
        if stats.forced_miss + stats.forced_hit > 0 {
            ensure!(on.gamma_atoms < off.gamma_atoms, "{} {}: pruning fixed accesses but atoms did not shrink", p.name, cfg);
            shrunk += 1;
        }
    }
    Ok(format!("{} instances identical with and without pruning; {} shrank", cases.len(), shrunk))
}

fn z3_available() -> bool {
    Process::new("z3").arg("-version").output().map(|o| o.status.success()).unwrap_or(false)
}

fn criterion10() -> Outcome {
    if !z3_available() {
        return Ok("SKIPPED: no external solver (z3) on PATH".into());
    }
    let smt = BackendConfig::external(vec!["z3".into(), "-in".into(), "-smt2".into()], Duration::from_secs(60)).build();
    let enumerate = EnumerateBackend::default();
    let mut queries: Vec<Vec<Constraint>> = Vec::new();
    let mut add_program = |p: &MiniProgram, cfg: &CacheConfig, observations: &[(Observer, Observation)], preds: &[u64]| {
        let (_, ms) = models(p, cfg);
        for m in &ms {
            queries.push(vec![m.gamma().clone()]);
            let pruned = prune(m, &enumerate).0;
            for (observer, o) in observations {
                let phi = constrain(observer, o, m.path_id(), m.n_e()).unwrap();
                queries.push(vec![m.gamma().clone(), phi.clone()]);
                queries.push(vec![pruned.gamma().clone(), phi.clone()]);
                for v in preds {
                    let pi = gen_predicates(p.input_bits(), p.input.bytes).unwrap()[*v as usize].constraint();
                    queries.push(vec![m.gamma().clone(), phi.clone(), pi]);
                }
            }
        }
    };
    let progs = layout_fig2(&dm512()).unwrap();
    for p in [&progs.a, &progs.b, &progs.c] {
        add_program(p, &dm512(), &[(seq3(), bits("mmm")), (seq3(), bits("mmh")), (Observer::MissCount, Observation::Count(2))], &[0, 3, 4, 5, 200]);
    }
    add_program(&parse_program(LRU_EXAMPLE).unwrap(), &CacheConfig::lru(4, 5, 2), &[(Observer::full_sequence(4).unwrap(), bits("mmhh"))], &[]);
    for (seed, bytes) in random_corpus().into_iter().take(12) {
        let (_, p) = random_program(seed, bytes);
        for (n, cfg) in configs().into_iter().enumerate().step_by(3) {
            let observations: Vec<_> = some_observation(&p, &cfg, &Observer::MissCount, seed + n as u64)
                .map(|o| (Observer::MissCount, o))
                .into_iter()
                .collect();
            add_program(&p, &cfg, &observations, &[1]);
        }
    }
    let mut disagreements = 0;
    let mut verdicts = BTreeMap::new();
    for q in &queries {
        let refs: Vec<&Constraint> = q.iter().collect();
        let a = enumerate.check_sat_all(&refs).map_err(|e| e.to_string())?;
        let b = smt.check_sat_all(&refs).map_err(|e| e.to_string())?;
        if let SatResult::Sat(w) = &b {
            ensure!(q.iter().all(|c| w.satisfies(c)), "external witness does not satisfy its query");
        }
        *verdicts.entry(a.verdict()).or_insert(0) += 1;
        if a.verdict() != b.verdict() {
            disagreements += 1;
        }
    }
    ensure!(disagreements == 0, "{} of {} queries disagree", disagreements, queries.len());
    Ok(format!("{} queries agree with z3 ({:?})", queries.len(), verdicts))
}

/// Atom count of the unpruned model of `n` symbolic straight-line loads.
fn straight_line_atoms(n: usize, cfg: &CacheConfig) -> usize {
    let mut src = String::from("input k : 2 bytes;\narray t : 4096 @ 0x0;\n");
    for i in 0..n {
        src.push_str(&format!("load t[(k[{}] + {}) & 4095];\n", i % 2, 37 * i));
    }
    let p = parse_program(&src).unwrap();
    let path = common::explore_all(&p).paths.remove(0);
    build_model(&path, cfg).unwrap().gamma().atom_count()
}

fn criterion11() -> Outcome {
    let mut detail = Vec::new();
    for cfg in [CacheConfig::direct_mapped(4, 5), CacheConfig::lru(4, 5, 2)] {
        let ns = [8usize, 16, 32];
        let atoms: Vec<f64> = ns.iter().map(|n| straight_line_atoms(*n, &cfg) as f64).collect();
        let cubes: Vec<f64> = ns.iter().map(|n| (*n as f64).powi(3)).collect();
        let c = atoms.iter().zip(&cubes).map(|(a, x)| a * x).sum::<f64>() / cubes.iter().map(|x| x * x).sum::<f64>();
        for ((n, a), x) in ns.iter().zip(&atoms).zip(&cubes) {
            let ratio = a / (c * x);
            ensure!((0.5..=2.0).contains(&ratio), "{} n={}: {} atoms, {:.2}x the cubic fit", cfg, n, a, ratio);
        }
        detail.push(format!("{}: atoms {:?}, c = {:.3}", cfg, atoms, c));
    }
    Ok(detail.join("; "))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("fig2a exactness", criterion1, Duration::from_secs(5)),
        ("fig2b parity", criterion2, Duration::from_secs(5)),
        ("fig2c zero leak", criterion3, Duration::from_secs(5)),
        ("LRU uniqueness", criterion4, Duration::from_secs(1)),
        ("model-simulator equivalence", criterion5, Duration::from_secs(600)),
        ("bound relations", criterion6, Duration::from_secs(600)),
        ("predicate counts", criterion7, Duration::from_secs(60)),
        ("extreme-observation leakage", criterion8, Duration::from_secs(300)),
        ("pruning soundness", criterion9, Duration::from_secs(600)),
        ("cross-backend agreement", criterion10, Duration::from_secs(600)),
        ("cubic scaling", criterion11, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (n, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > *limit => Err(format!("took {:.1?}, limit {:?}", took, limit)),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {} ({:.2?}): {}", n + 1, name, took, detail),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {} ({:.2?}): {}", n + 1, name, took, why);
            }
        }
    }
    if failed > 0 {
        println!("{} criteria failed", failed);
        std::process::exit(1);
    }
}
