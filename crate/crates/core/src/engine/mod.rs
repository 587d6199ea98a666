//! Master-equation integration and seeded quantum-jump trajectories.

mod ensemble;
mod master;
mod model;
mod superop;
mod trajectory;

pub use ensemble::{
    ensemble_run, ensemble_run_with, par_map, par_map_with, stream_keys, worker_count, EnsembleSummary, WORKERS_ENV,
};
pub use master::{evolve_master, evolve_master_with, steps_for, MasterOptions, MasterSolution, TimeGrid};
pub use model::{Channel, Coefficient, HamiltonianTerm, OpenModel};
pub use superop::{jump_map, lindblad_derivative, lindblad_derivative_at, superop_g, superop_h, MIN_JUMP_PROBABILITY};
pub use trajectory::{
    no_jump_evolution, no_jump_probability, simulate_trajectory, JumpEvent, Snapshot, StopRule, StreamKey, TailFlag, TrajectoryRecord,
    TrajectorySimulator, TrajectorySpec, MAX_STEP_PROBABILITY,
};
