use super::model::{MissBinding, SymbolicCacheModel};
use crate::constraint::Constraint;
use crate::solver::{SatResult, SolverBackend};

/// Outcome counts of one pruning pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruneStats {
    pub forced_miss: usize,
    pub forced_hit: usize,
    pub kept: usize,
    /// Accesses left symbolic because a sub-check was inconclusive.
    pub inconclusive: usize,
}

/// Fixes every `miss_i` whose value does not depend on the input.
///
/// When `pc && !premise_i` is unsatisfiable the access always misses and its
/// binding is replaced by `miss_i = 1`; when `pc && premise_i` is
/// unsatisfiable it always hits. Inconclusive checks keep the binding.
pub fn prune(model: &SymbolicCacheModel, backend: &dyn SolverBackend) -> (SymbolicCacheModel, PruneStats) {
    let mut stats = PruneStats::default();
    let pc = &model.path.pc;
    let mut misses = Vec::with_capacity(model.misses.len());
    for (n, binding) in model.misses.iter().enumerate() {
        let premise = match binding {
            MissBinding::Symbolic { premise } => premise,
            fixed => {
                misses.push(fixed.clone());
                continue;
            }
        };
        let conflict_bindings: Vec<Constraint> = model
            .conflicts
            .get(n)
            .map(|cs| cs.iter().map(|c| Constraint::binding(c.var, c.premise.clone(), c.negated.clone())).collect())
            .unwrap_or_default();
        let check = |goal: Constraint| {
            let mut conj: Vec<&Constraint> = vec![pc];
            conj.extend(conflict_bindings.iter());
            conj.push(&goal);
            backend.check_sat_all(&conj)
        };
        let always = check(Constraint::not(premise.clone()));
        let never = check(premise.clone());
        match (always, never) {
            (Ok(SatResult::Unsat), _) => {
                stats.forced_miss += 1;
                misses.push(MissBinding::Fixed(true));
            }
            (_, Ok(SatResult::Unsat)) => {
                stats.forced_hit += 1;
                misses.push(MissBinding::Fixed(false));
            }
            (Ok(SatResult::Sat(_)), Ok(SatResult::Sat(_))) => {
                stats.kept += 1;
                misses.push(binding.clone());
            }
            _ => {
                stats.inconclusive += 1;
                misses.push(binding.clone());
            }
        }
    }
    let pruned = SymbolicCacheModel::assemble(model.path.clone(), model.config, misses, model.conflicts.clone());
    (pruned, stats)
}
