//! Two accesses to the same line separated by one conflicting access: a
//! 2-way LRU cache keeps the line, a direct-mapped one does not.

use cacheleak::cache::{build_model, CacheConfig};
use cacheleak::program::parse_program;
use cacheleak::sim::simulate;
use cacheleak::solver::EnumerateBackend;
use cacheleak::symexec::{explore, Budget};

const SOURCE: &str = "
program lru_demo;
input k : 1 bytes;
array a : 64 @ 0x000;
array b : 64 @ 0x200;
load a[0];
load b[0];
load a[k[0] & 1];
load b[1];
";

fn main() -> anyhow::Result<()> {
    let program = parse_program(SOURCE)?;
    let r = explore(&program, Budget::default(), &EnumerateBackend::default())?;
    for spec in ["1KB/32B/2:lru", "512B/32B/1:lru", "512B/32B/1"] {
        let cache: CacheConfig = spec.parse()?;
        let model = build_model(&r.paths[0], &cache)?;
        let forced = model.forced_misses(&[0]).expect("gamma is satisfiable");
        let symbolic: String = forced.iter().map(|m| if *m { 'm' } else { 'h' }).collect();
        let concrete: String = simulate(&program, &[0], &cache)?.symbols();
        println!("{:>16}: model {} simulator {} ({} gamma atoms)", spec, symbolic, concrete, model.gamma().atom_count());
    }
    Ok(())
}
