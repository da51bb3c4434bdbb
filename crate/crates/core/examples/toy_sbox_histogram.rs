//! Miss-count histograms of the bundled toy S-box program, exhaustive and
//! sampled.

use cacheleak::cache::CacheConfig;
use cacheleak::program::{parse_program, TOYSBOX_SOURCE};
use cacheleak::sim::{histogram, histogram_csv, InputRange};

fn main() -> anyhow::Result<()> {
    let program = parse_program(TOYSBOX_SOURCE)?;
    let cache: CacheConfig = "1KB/32B/2:lru".parse()?;
    let full = histogram(&program, &cache, InputRange::Full)?;
    print!("{}", histogram_csv(&full));
    let total: u64 = full.values().sum();
    let (mode, _) = full.iter().max_by_key(|(_, c)| **c).unwrap();
    println!("{} inputs, mode at {} misses", total, mode);

    let sampled = histogram(&program, &cache, InputRange::Sample { n: 2000, seed: 1 })?;
    println!("sampled: {:?}", sampled);
    Ok(())
}
