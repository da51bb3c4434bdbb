//! Cache geometry and the symbolic cache model.

mod model;
mod prune;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub use model::{
    cold_dm, cold_sa, evict_dm, gamma_direct, gamma_lru, psi_cnf, psi_dif, psi_eqv, psi_unq, set_index, tag_of,
    build_model, CacheTerms, MissBinding, MissOracle, ModelError, SymbolicCacheModel,
};
pub use prune::{prune, PruneStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Policy {
    DirectMapped,
    Lru,
}

/// Cache geometry: `2^set_bits` sets of `assoc` lines of `2^line_bits` bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CacheConfig {
    pub set_bits: u32,
    pub line_bits: u32,
    pub assoc: u32,
    pub policy: Policy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheConfigError {
    #[error("malformed cache spec `{0}`: expected <total>/<line>/<assoc>[:lru], e.g. 512B/32B/1")]
    Malformed(String),
    #[error("bad size `{0}`: expected a number with optional B/KB/MB suffix")]
    BadSize(String),
    #[error("`{0}` is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("associativity must be at least 1")]
    ZeroAssoc,
    #[error("direct-mapped caches have associativity 1")]
    DirectMappedAssoc,
    #[error("total size {total} is not a multiple of line size times associativity ({line} x {assoc})")]
    Geometry { total: u64, line: u64, assoc: u32 },
    #[error("unknown replacement policy `{0}`")]
    Policy(String),
}

impl CacheConfig {
    pub fn direct_mapped(set_bits: u32, line_bits: u32) -> CacheConfig {
        CacheConfig { set_bits, line_bits, assoc: 1, policy: Policy::DirectMapped }
    }

    pub fn lru(set_bits: u32, line_bits: u32, assoc: u32) -> CacheConfig {
        CacheConfig { set_bits, line_bits, assoc, policy: Policy::Lru }
    }

    pub fn validate(&self) -> Result<(), CacheConfigError> {
        if self.assoc == 0 {
            return Err(CacheConfigError::ZeroAssoc);
        }
        if self.policy == Policy::DirectMapped && self.assoc != 1 {
            return Err(CacheConfigError::DirectMappedAssoc);
        }
        Ok(())
    }

    pub fn sets(&self) -> u64 {
        1u64 << self.set_bits
    }

    pub fn line_size(&self) -> u64 {
        1u64 << self.line_bits
    }

    pub fn size_bytes(&self) -> u64 {
        self.sets() * self.line_size() * self.assoc as u64
    }

    pub fn set_of(&self, addr: u64) -> u64 {
        (addr >> self.line_bits) & (self.sets() - 1)
    }

    pub fn tag_of(&self, addr: u64) -> u64 {
        let shift = self.line_bits + self.set_bits;
        if shift >= 64 {
            0
        } else {
            addr >> shift
        }
    }

    /// The memory block (line-aligned address divided by the line size).
    pub fn block_of(&self, addr: u64) -> u64 {
        addr >> self.line_bits
    }
}

fn parse_size(s: &str) -> Result<u64, CacheConfigError> {
    let t = s.trim().to_ascii_uppercase();
    let (digits, mult) = if let Some(d) = t.strip_suffix("KB") {
        (d, 1024)
    } else if let Some(d) = t.strip_suffix("MB") {
        (d, 1024 * 1024)
    } else if let Some(d) = t.strip_suffix('K') {
        (d, 1024)
    } else if let Some(d) = t.strip_suffix('B') {
        (d, 1)
    } else {
        (t.as_str(), 1)
    };
    digits
        .trim()
        .parse::<u64>()
        .ok()
        .and_then(|v| v.checked_mul(mult))
        .ok_or_else(|| CacheConfigError::BadSize(s.to_string()))
}

fn log2_exact(v: u64) -> Result<u32, CacheConfigError> {
    if v == 0 || !v.is_power_of_two() {
        Err(CacheConfigError::NotPowerOfTwo(v))
    } else {
        Ok(v.trailing_zeros())
    }
}

impl FromStr for CacheConfig {
    type Err = CacheConfigError;

    /// Parses `<total>/<line>/<assoc>[:lru]`. The number of sets is derived
    /// as `total / (line * assoc)`. Associativity above one implies LRU.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (geom, policy) = match s.split_once(':') {
            Some((g, p)) => (g, Some(p.trim().to_ascii_lowercase())),
            None => (s, None),
        };
        let parts: Vec<&str> = geom.split('/').collect();
        if parts.len() != 3 {
            return Err(CacheConfigError::Malformed(s.to_string()));
        }
        let total = parse_size(parts[0])?;
        let line = parse_size(parts[1])?;
        let assoc: u32 = parts[2].trim().parse().map_err(|_| CacheConfigError::Malformed(s.to_string()))?;
        if assoc == 0 {
            return Err(CacheConfigError::ZeroAssoc);
        }
        let line_bits = log2_exact(line)?;
        let per_set = line * assoc as u64;
        if total == 0 || total % per_set != 0 {
            return Err(CacheConfigError::Geometry { total, line, assoc });
        }
        let set_bits = log2_exact(total / per_set)?;
        let policy = match policy.as_deref() {
            None if assoc == 1 => Policy::DirectMapped,
            None | Some("lru") => Policy::Lru,
            Some("dm") | Some("direct") if assoc == 1 => Policy::DirectMapped,
            Some(other) => return Err(CacheConfigError::Policy(other.to_string())),
        };
        let cfg = CacheConfig { set_bits, line_bits, assoc, policy };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_size(bytes: u64) -> String {
    if bytes >= 1024 && bytes.is_multiple_of(1024) {
        format!("{}KB", bytes / 1024)
    } else {
        format!("{}B", bytes)
    }
}

impl fmt::Display for CacheConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", fmt_size(self.size_bytes()), fmt_size(self.line_size()), self.assoc)?;
        if self.policy == Policy::Lru {
            f.write_str(":lru")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cache_specs() {
        let c: CacheConfig = "512B/32B/1".parse().unwrap();
        assert_eq!(c, CacheConfig::direct_mapped(4, 5));
        let c: CacheConfig = "1KB/32B/2:lru".parse().unwrap();
        assert_eq!(c, CacheConfig::lru(4, 5, 2));
        let c: CacheConfig = "2KB/16B/4".parse().unwrap();
        assert_eq!(c, CacheConfig::lru(5, 4, 4));
        let c: CacheConfig = "512B/32B/1:lru".parse().unwrap();
        assert_eq!(c, CacheConfig::lru(4, 5, 1));
        assert_eq!(c.to_string(), "512B/32B/1:lru");
        assert_eq!(CacheConfig::lru(4, 5, 2).to_string(), "1KB/32B/2:lru");
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!("500B/32B/1".parse::<CacheConfig>(), Err(CacheConfigError::Geometry { .. })));
        assert!(matches!("512B/24B/1".parse::<CacheConfig>(), Err(CacheConfigError::NotPowerOfTwo(24))));
        assert!(matches!("512B/32B".parse::<CacheConfig>(), Err(CacheConfigError::Malformed(_))));
        assert!(matches!("512B/32B/0".parse::<CacheConfig>(), Err(CacheConfigError::ZeroAssoc)));
        assert!(matches!("1KB/32B/2:fifo".parse::<CacheConfig>(), Err(CacheConfigError::Policy(_))));
    }

    #[test]
    fn concrete_set_and_tag() {
        let c = CacheConfig::direct_mapped(4, 5);
        assert_eq!(c.set_of(0x200), 0);
        assert_eq!(c.tag_of(0x200), 1);
        assert_eq!(c.tag_of(0x1FF), 0);
        assert_eq!(c.set_of(0x1FF), 15);
        assert_eq!(c.size_bytes(), 512);
    }
}
