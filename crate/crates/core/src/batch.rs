//! Batch episode simulation and IK sweeps. Data-parallel with the `parallel`
//! feature, sequential otherwise; results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::kinematics::{IkSolutions, Pose, UrSolver};
use crate::server::{run_episode, EpisodeRun, EpisodeSetup, ServerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

fn map<T: Sync, R: Send>(items: &[T], exec: Execution, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

pub fn simulate_batch(setups: &[EpisodeSetup], exec: Execution) -> Vec<Result<EpisodeRun, ServerError>> {
    map(setups, exec, run_episode)
}

pub fn ik_sweep(solver: &UrSolver, targets: &[Pose], exec: Execution) -> Vec<IkSolutions> {
    map(targets, exec, |t| solver.solve(t))
}
