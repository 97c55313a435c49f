//! Exact fast-state evolution along prescribed drives, classical slow
//! trajectories under the effective Hamiltonian, a mixed quantum-classical
//! reference, and the action bookkeeping around closed loops.

mod audit;
mod classical;
mod evolution;
mod fields;
mod path;

pub use evolution::{
    check_step, driven_evolution, dressed_state, leakage_scan, time_average, velocity_sweep,
    EvolutionOptions, LeakageOptions, LeakageRow, LeakageTable, SweepOptions, SweepRow,
    SweepTable, TrajectoryRecord, STEP_LIMIT,
};
pub use path::DrivePath;
pub use audit::{action_order_audit, audit_scaling, ActionAudit, AuditOptions, AuditScaling};
pub use classical::{coupled_reference, effective_trajectory, ClassicalOptions, InitialMomentum};
pub use fields::{FieldSample, FieldSource, GridFields, ModelFields, UniformField};
