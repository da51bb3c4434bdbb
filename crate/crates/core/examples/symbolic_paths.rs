//! Explores a branching program and checks each path against concrete runs.

use cacheleak::program::parse_program;
use cacheleak::sim::simulate;
use cacheleak::solver::EnumerateBackend;
use cacheleak::symexec::{explore, path_of, Budget};

const SOURCE: &str = "
program branches;
input k : 1 bytes;
array t : 256 @ 0x000;
reg r = k[0] * 3;
if (k[0] < 100) {
    load t[r & 255];
} else {
    load t[0];
    if ((k[0] & 1) == 0) {
        store t[k[0]];
    }
}
load t[k[0] ^ 0x55];
";

fn main() -> anyhow::Result<()> {
    let program = parse_program(SOURCE)?;
    let r = explore(&program, Budget::default(), &EnumerateBackend::default())?;
    for p in &r.paths {
        print!("{}", p);
    }
    let cache = "512B/32B/1".parse()?;
    let mut per_path = vec![0; r.paths.len()];
    for k in 0..=255u8 {
        let e = path_of(&r.paths, &[k]).expect("paths cover every input");
        let addrs: Vec<u64> = simulate(&program, &[k], &cache)?.accesses.iter().map(|a| a.address).collect();
        assert_eq!(r.paths[e].addresses_at(&[k]), addrs);
        per_path[e] += 1;
    }
    println!("inputs per path: {:?}, steps used: {}", per_path, r.budget_used.steps);
    Ok(())
}
