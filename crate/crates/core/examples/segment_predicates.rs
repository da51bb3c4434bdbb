//! Lower bounds from K input segments on a two-byte program, compared with
//! the exact count.

use cacheleak::cache::CacheConfig;
use cacheleak::observer::{observe, Observer};
use cacheleak::program::parse_program;
use cacheleak::quantify::{quantify, Mode, QuantifyConfig};
use cacheleak::sim::simulate;
use cacheleak::solver::BackendConfig;

const SOURCE: &str = "
program two_bytes;
input k : 2 bytes;
array t : 256 @ 0x000;
array u : 256 @ 0x400;
load t[0];
load t[k[0]];
load u[0];
load u[k[1] & 0x3f];
";

fn main() -> anyhow::Result<()> {
    let program = parse_program(SOURCE)?;
    let cache: CacheConfig = "512B/32B/1".parse()?;
    let observer = Observer::full_sequence(4)?;
    let obs = observe(&simulate(&program, &[3, 7], &cache)?, &observer)?;
    println!("observation {}", obs);
    for k in [1, 2, 4, 8, 16] {
        let mut cfg = QuantifyConfig::new(16, k);
        if k == 1 {
            cfg.mode = Mode::Exact;
        } else {
            cfg.mode = Mode::Bounded;
        }
        let r = quantify(&program, &cache, &observer, &obs, &cfg, &BackendConfig::enumerate())?;
        println!("K = {:>2}: U = {:?} lower bound {} exact {:?}", k, r.u(), r.lower_bound, r.exact);
    }
    Ok(())
}
