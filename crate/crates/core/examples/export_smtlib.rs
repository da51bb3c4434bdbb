//! Emits the SMT-LIB script for one path's cache model, an observation and
//! a segment predicate. Pipe the output into `z3 -in`.

use cacheleak::cache::{build_model, CacheConfig};
use cacheleak::observer::{constrain, Observer};
use cacheleak::program::{parse_program, FIG2A_SOURCE};
use cacheleak::quantify::Predicate;
use cacheleak::solver::smtlib::emit_conjunction;
use cacheleak::solver::EnumerateBackend;
use cacheleak::symexec::{explore, Budget};

fn main() -> anyhow::Result<()> {
    let program = parse_program(FIG2A_SOURCE)?;
    let cache: CacheConfig = "512B/32B/1".parse()?;
    let r = explore(&program, Budget::default(), &EnumerateBackend::default())?;
    let observer = Observer::sequence(vec![1, 2, 3])?;
    let obs = observer.parse_observation("mmh")?;
    let pi = Predicate { segment: 1, value: 0, width: 8 }.constraint();
    for path in &r.paths {
        let model = build_model(path, &cache)?;
        let phi = constrain(&observer, &obs, path.path_id, path.n_e())?;
        println!("; path {}", path.path_id);
        print!("{}", emit_conjunction(&[model.gamma(), &phi, &pi]));
    }
    Ok(())
}
