//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cache::{build_model, prune, CacheConfig};
use crate::observer::{constrain, Observer};
use crate::program::{parse_program, MiniProgram, FIG2A_SOURCE, FIG2B_SOURCE, FIG2C_SOURCE, TOYSBOX_SOURCE};
use crate::quantify::{quantify, Mode, Predicate, QuantifyConfig};
use crate::sim::{histogram, histogram_csv, InputRange};
use crate::solver::{emit_smtlib, smtlib::emit_conjunction, BackendConfig, DEFAULT_INPUT_BIT_CAP};
use crate::symexec::{explore, Budget};

#[derive(Debug, Parser)]
#[command(name = "cacheleak", version, about = "Quantify cache side-channel leaks of small programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantify what an observation reveals about the input.
    Analyze(AnalyzeArgs),
    /// Miss-count histogram from concrete simulation.
    Hist(HistArgs),
    /// Write SMT-LIB scripts, one per path.
    ExportSmt(ExportArgs),
    /// Print the explored paths.
    Paths(PathsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Exact,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Enumerate,
    Smt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    /// The cache model alone.
    Gamma,
    /// Model and observation.
    Obs,
    /// Model, observation and one predicate.
    Pred,
}

#[derive(Debug, Args)]
pub struct ProgramArgs {
    /// Program file, or the name of a bundled program (fig2a.prog, fig2b.prog, fig2c.prog, toysbox.prog).
    pub program: PathBuf,
    /// Cache as <total>/<line>/<assoc>[:lru], e.g. 512B/32B/1 or 1KB/32B/2:lru.
    #[arg(long, default_value = "512B/32B/1")]
    pub cache: String,
    #[arg(long, default_value_t = Budget::default().max_paths)]
    pub max_paths: usize,
    #[arg(long, default_value_t = Budget::default().max_steps)]
    pub max_steps: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Enumerate)]
    pub backend: BackendArg,
    /// External solver command line; the script is piped to its stdin.
    #[arg(long, default_value = "z3 -in -smt2")]
    pub smt_cmd: String,
    /// Per-query timeout of the external solver, in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Input-bit cap of the enumeration backend.
    #[arg(long, default_value_t = DEFAULT_INPUT_BIT_CAP)]
    pub cap: u32,
}

impl SolverArgs {
    pub fn config(&self) -> BackendConfig {
        let mut cfg = match self.backend {
            BackendArg::Enumerate => BackendConfig::enumerate(),
            BackendArg::Smt => BackendConfig::external(
                self.smt_cmd.split_whitespace().map(str::to_string).collect(),
                Duration::from_secs(self.timeout),
            ),
        };
        cfg.input_bit_cap = self.cap;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: ProgramArgs,
    /// `count` or `seq:1,2,3`.
    #[arg(long)]
    pub observer: String,
    /// Observed value: a miss count, or bits such as 1,1,0.
    #[arg(long)]
    pub obs: String,
    /// Number of input segments.
    #[arg(long = "K", default_value_t = 1)]
    pub k: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub no_prune: bool,
    /// Check predicates on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[command(flatten)]
    pub common: ProgramArgs,
    /// Enumerate every input.
    #[arg(long, conflicts_with = "sample")]
    pub full: bool,
    /// Number of random inputs; requires --rng-seed.
    #[arg(long)]
    pub sample: Option<u64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: ProgramArgs,
    #[arg(long, value_enum, default_value_t = TargetArg::Gamma)]
    pub target: TargetArg,
    #[arg(long)]
    pub observer: Option<String>,
    #[arg(long)]
    pub obs: Option<String>,
    /// Predicate `segment:value` for `--target pred`, e.g. 1:5.
    #[arg(long)]
    pub pred: Option<String>,
    #[arg(long = "K", default_value_t = 1)]
    pub k: u32,
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[command(flatten)]
    pub common: ProgramArgs,
}

/// Reads a program file, falling back to the bundled programs by name.
pub fn load_program(path: &Path) -> Result<MiniProgram> {
    let text = if path.exists() {
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?
    } else {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        match name.trim_end_matches(".prog") {
            "fig2a" => FIG2A_SOURCE.to_string(),
            "fig2b" => FIG2B_SOURCE.to_string(),
            "fig2c" => FIG2C_SOURCE.to_string(),
            "toysbox" => TOYSBOX_SOURCE.to_string(),
            _ => bail!("cannot read {}: no such file", path.display()),
        }
    };
    parse_program(&text).with_context(|| format!("in {}", path.display()))
}

fn budget(common: &ProgramArgs) -> Budget {
    Budget { max_paths: common.max_paths, max_steps: common.max_steps }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let program = load_program(&args.common.program)?;
    let cache: CacheConfig = args.common.cache.parse()?;
    let observer: Observer = args.observer.parse()?;
    let obs = observer.parse_observation(&args.obs)?;
    let cfg = QuantifyConfig {
        input_bits: program.input_bits(),
        segments: args.k,
        mode: match args.mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Bounded => Mode::Bounded,
        },
        prune: !args.no_prune,
        parallel: !args.sequential,
        budget: budget(&args.common),
    };
    let report = quantify(&program, &cache, &observer, &obs, &cfg, &args.solver.config())?;
    let mut json = report.to_json();
    json.push('\n');
    emit(&args.common.out, &json)?;
    if args.common.out.is_some() {
        print!("{}", report.summary());
    }
    Ok(())
}

pub fn cmd_hist(args: &HistArgs) -> Result<()> {
    let program = load_program(&args.common.program)?;
    let cache: CacheConfig = args.common.cache.parse()?;
    let range = match (args.full, args.sample, args.rng_seed) {
        (_, Some(n), Some(seed)) => InputRange::Sample { n, seed },
        (_, Some(_), None) => bail!("--sample needs --rng-seed so the histogram is reproducible"),
        (true, None, _) => InputRange::Full,
        (false, None, _) => bail!("choose --full or --sample <n> --rng-seed <s>"),
    };
    let hist = histogram(&program, &cache, range)?;
    emit(&args.common.out, &histogram_csv(&hist))
}

fn parse_pred(text: &str, n: u32, k: u32) -> Result<Predicate> {
    let (seg, value) = text.split_once(':').context("--pred expects segment:value")?;
    let segment: u32 = seg.trim().parse().context("bad segment")?;
    let value: u64 = value.trim().parse().context("bad value")?;
    if k == 0 || !n.is_multiple_of(k) {
        bail!("K = {} does not divide N = {}", k, n);
    }
    let width = n / k;
    if segment == 0 || segment > k || (width < 64 && value >> width != 0) {
        bail!("predicate {} out of range for N = {}, K = {}", text, n, k);
    }
    Ok(Predicate { segment, value, width })
}

pub fn cmd_export_smt(args: &ExportArgs) -> Result<()> {
    let program = load_program(&args.common.program)?;
    let cache: CacheConfig = args.common.cache.parse()?;
    let backend = BackendConfig::enumerate().build();
    let exploration = explore(&program, budget(&args.common), backend.as_ref())?;
    let observation = match args.target {
        TargetArg::Gamma => None,
        TargetArg::Obs | TargetArg::Pred => {
            let observer: Observer = args.observer.as_deref().context("--observer is required for this target")?.parse()?;
            let obs = observer.parse_observation(args.obs.as_deref().context("--obs is required for this target")?)?;
            Some((observer, obs))
        }
    };
    let pi = match args.target {
        TargetArg::Pred => Some(
            parse_pred(args.pred.as_deref().context("--pred is required for --target pred")?, program.input_bits(), args.k)?
                .constraint(),
        ),
        _ => None,
    };
    let mut scripts = Vec::new();
    for path in &exploration.paths {
        let mut model = build_model(path, &cache)?;
        if !args.no_prune {
            model = prune(&model, backend.as_ref()).0;
        }
        let mut parts = vec![model.gamma().clone()];
        if let Some((observer, obs)) = &observation {
            parts.push(constrain(observer, obs, path.path_id, path.n_e())?);
        }
        if let Some(pi) = &pi {
            parts.push(pi.clone());
        }
        let refs: Vec<_> = parts.iter().collect();
        let script = if refs.len() == 1 { emit_smtlib(refs[0]) } else { emit_conjunction(&refs) };
        scripts.push((path.path_id, script));
    }
    match &args.common.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            for (id, script) in &scripts {
                let file = dir.join(format!("path{}.smt2", id));
                fs::write(&file, script).with_context(|| format!("cannot write {}", file.display()))?;
            }
        }
        None => {
            let mut out = String::new();
            for (id, script) in &scripts {
                out.push_str(&format!("; path {}\n{}", id, script));
            }
            emit(&None, &out)?;
        }
    }
    Ok(())
}

pub fn cmd_paths(args: &PathsArgs) -> Result<()> {
    let program = load_program(&args.common.program)?;
    let backend = BackendConfig::enumerate().build();
    let r = explore(&program, budget(&args.common), backend.as_ref())?;
    let mut out = String::new();
    for p in &r.paths {
        out.push_str(&p.to_string());
    }
    out.push_str(&format!("{} paths, exhausted: {}\n", r.paths.len(), r.exhausted));
    emit(&args.common.out, &out)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Hist(a) => cmd_hist(a),
        Command::ExportSmt(a) => cmd_export_smt(a),
        Command::Paths(a) => cmd_paths(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn predicate_argument() {
        assert_eq!(parse_pred("1:5", 8, 1).unwrap(), Predicate { segment: 1, value: 5, width: 8 });
        assert!(parse_pred("2:5", 8, 1).is_err());
        assert!(parse_pred("1:256", 8, 1).is_err());
    }
}
