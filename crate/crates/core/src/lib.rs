//! Cache side-channel leak quantification for small programs.
//!
//! A [`program::MiniProgram`] is executed symbolically ([`symexec`]) to get
//! one path condition and symbolic address trace per path. Each trace is
//! turned into a constraint system over 0/1 miss variables for a
//! direct-mapped or LRU cache ([`cache`]). An attacker observation
//! ([`observer`]) then constrains those variables, and [`quantify`] counts
//! how many input values the observation rules out. [`sim`] is an
//! independent concrete simulator used as ground truth.
//!
//! ```
//! use cacheleak::cache::CacheConfig;
//! use cacheleak::observer::Observer;
//! use cacheleak::program::{parse_program, FIG2A_SOURCE};
//! use cacheleak::quantify::{quantify, QuantifyConfig};
//! use cacheleak::solver::BackendConfig;
//!
//! let program = parse_program(FIG2A_SOURCE).unwrap();
//! let cache: CacheConfig = "512B/32B/1".parse().unwrap();
//! let observer: Observer = "seq:1,2,3".parse().unwrap();
//! let obs = observer.parse_observation("1,1,1").unwrap();
//! let report = quantify(&program, &cache, &observer, &obs, &QuantifyConfig::new(8, 1), &BackendConfig::enumerate()).unwrap();
//! assert_eq!(report.exact.as_deref(), Some("255"));
//! ```

pub mod cache;
pub mod cli;
pub mod constraint;
pub mod observer;
pub mod program;
pub mod quantify;
pub mod sim;
pub mod solver;
pub mod symexec;
