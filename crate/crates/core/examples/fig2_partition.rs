//! Exact leakage of the three bundled fig2 programs under a 512B/32B/1 cache,
//! for every observation each program can produce.

use cacheleak::cache::CacheConfig;
use cacheleak::observer::{observe, Observer};
use cacheleak::program::layout_fig2;
use cacheleak::quantify::{quantify, QuantifyConfig};
use cacheleak::sim::simulate;
use cacheleak::solver::BackendConfig;

fn main() -> anyhow::Result<()> {
    let cache: CacheConfig = "512B/32B/1".parse()?;
    let progs = layout_fig2(&cache)?;
    let observer = Observer::sequence(vec![1, 2, 3])?;
    for (name, p) in [("fig2a", &progs.a), ("fig2b", &progs.b), ("fig2c", &progs.c)] {
        let mut seen = Vec::new();
        for k in 0..=255u8 {
            let obs = observe(&simulate(p, &[k], &cache)?, &observer)?;
            if !seen.contains(&obs) {
                seen.push(obs);
            }
        }
        for obs in seen {
            let r = quantify(p, &cache, &observer, &obs, &QuantifyConfig::new(8, 1), &BackendConfig::enumerate())?;
            println!("{} obs {}: {} inputs ruled out, {} consistent", name, obs, r.exact.unwrap_or_default(), r.consistent.len());
        }
    }
    Ok(())
}
