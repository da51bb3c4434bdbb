//! Bundled example programs.

use thiserror::Error;

use super::{parse_program, MiniProgram};
use crate::cache::{CacheConfig, Policy};

pub const FIG2A_SOURCE: &str = include_str!("../../programs/fig2a.prog");
pub const FIG2B_SOURCE: &str = include_str!("../../programs/fig2b.prog");
pub const FIG2C_SOURCE: &str = include_str!("../../programs/fig2c.prog");
pub const TOYSBOX_SOURCE: &str = include_str!("../../programs/toysbox.prog");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("the two-array layout targets a 512-byte direct-mapped cache with 32-byte lines, got {0}")]
    UnsupportedCache(String),
}

/// The three variants of the two-array example.
#[derive(Clone, Debug)]
pub struct Fig2Programs {
    /// Secret-dependent branch and indices; leaks `k == 0` on a 3-miss trace.
    pub a: MiniProgram,
    /// Branch on the key's parity; leaks exactly that bit.
    pub b: MiniProgram,
    /// Reordered accesses; the trace is the same for every key.
    pub c: MiniProgram,
}

/// Returns the example programs laid out for `cache`.
///
/// `p` sits at `0x000` and `q` at `0x101`, so `&q[255] = 0x200` shares set 0
/// with `&p[0]` under a different tag, while every other address of both
/// arrays lies below 512 bytes and keeps tag 0.
pub fn layout_fig2(cache: &CacheConfig) -> Result<Fig2Programs, LayoutError> {
    if *cache != CacheConfig::direct_mapped(4, 5) || cache.policy != Policy::DirectMapped {
        return Err(LayoutError::UnsupportedCache(cache.to_string()));
    }
    let parse = |src: &str| parse_program(src).expect("bundled program parses");
    Ok(Fig2Programs { a: parse(FIG2A_SOURCE), b: parse(FIG2B_SOURCE), c: parse(FIG2C_SOURCE) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, Outcome};

    fn conflicting_pairs(cfg: &CacheConfig, p_base: u64, q_base: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for i in 0..256u64 {
            for j in 0..256u64 {
                let (a, b) = (p_base + i, q_base + j);
                if cfg.set_of(a) == cfg.set_of(b) && cfg.tag_of(a) != cfg.tag_of(b) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn q255_and_p0_conflict() {
        let cfg = CacheConfig::direct_mapped(4, 5);
        assert_eq!(cfg.set_of(0x000), 0);
        assert_eq!(cfg.set_of(0x200), 0);
        assert_eq!(cfg.tag_of(0x000), 0);
        assert_eq!(cfg.tag_of(0x200), 1);
    }

    #[test]
    fn conflicts_are_confined_to_q255() {
        // With 32-byte lines every p[i] in the first line conflicts with q[255];
        // along the accessed diagonal (k, 255 - k) only k = 0 conflicts.
        let cfg = CacheConfig::direct_mapped(4, 5);
        let pairs = conflicting_pairs(&cfg, 0x000, 0x101);
        let expected: Vec<(u64, u64)> = (0..32).map(|i| (i, 255)).collect();
        assert_eq!(pairs, expected);
        let diagonal: Vec<_> = pairs.iter().filter(|(i, j)| i + j == 255).collect();
        assert_eq!(diagonal, vec![&(0, 255)]);
    }

    #[test]
    fn byte_lines_give_a_single_conflicting_pair() {
        let cfg = CacheConfig::direct_mapped(9, 0);
        assert_eq!(conflicting_pairs(&cfg, 0x000, 0x101), vec![(0, 255)]);
    }

    #[test]
    fn variant_b_partitions_by_parity() {
        let cfg = CacheConfig::direct_mapped(4, 5);
        let progs = layout_fig2(&cfg).unwrap();
        for k in 0..=255u8 {
            let t = simulate(&progs.b, &[k], &cfg).unwrap();
            let third = t.accesses[2].outcome;
            assert_eq!(third == Outcome::Miss, k % 2 == 0, "k = {}", k);
        }
    }

    #[test]
    fn variant_c_trace_is_constant() {
        let cfg = CacheConfig::direct_mapped(4, 5);
        let progs = layout_fig2(&cfg).unwrap();
        let first = simulate(&progs.c, &[0], &cfg).unwrap().symbols();
        for k in 0..=255u8 {
            assert_eq!(simulate(&progs.c, &[k], &cfg).unwrap().symbols(), first);
        }
        assert_eq!(first, "mhm");
    }

    #[test]
    fn other_caches_rejected() {
        let cfg = CacheConfig::lru(4, 5, 2);
        assert!(layout_fig2(&cfg).is_err());
    }
}
