//! Optimal disaggregation of an aggregate resource allocation among agents
//! with private feasible sets.
//!
//! An operator must split an aggregate allocation `p` over `T` periods into
//! per-agent profiles, one inside each agent's private feasible block. The
//! crate provides the numerical core and a message-level simulator for doing
//! this without any agent revealing its block:
//!
//! - [`model`] — instances, profile matrices, seeded generators.
//! - [`projections`] — exact Euclidean projections onto agent blocks, the
//!   aggregate set, and general halfspace systems (cyclic Dykstra).
//! - [`apm`] — alternating projections between the agents' product set and
//!   the aggregate-consistent set, with the certified contraction bound.
//! - [`cuts`] — period-subset inequalities: exact feasibility oracle,
//!   strongest right-hand sides, cut extraction from a settled orbit.
//! - [`smc`] — fixed-point secret sharing so the operator only ever learns
//!   sums, never addends.
//! - [`bus`] — the recorded message fabric the simulator runs on.
//! - [`protocol`] — the full operator/agent loop: secure sweeps, threshold
//!   halving, subset and dual cut pricing, transcripts, audits.
//! - [`master`] — cost-minimizing master solvers the cutting loop refines.
//! - [`polyhedral`] — the same pipeline for agents described by arbitrary
//!   halfspace systems, cut by support-price planes.
//! - [`spectral`] — face-configuration Laplacians tying observed sweep
//!   rates to the certified spectral bound.
//! - [`linalg`] — self-contained simplex and Jacobi eigensolver backing the
//!   pieces above.

pub mod apm;
pub mod bus;
pub mod cuts;
pub mod linalg;
pub mod master;
pub mod model;
pub mod polyhedral;
pub mod projections;
pub mod protocol;
pub mod smc;
pub mod spectral;

pub use apm::{contraction_bound, run_apm, run_apm_with, ApmParams, ApmResult, NormSpec};
pub use bus::{Bus, Endpoint, Message, MsgKind};
pub use cuts::{
    cut_is_valid, extract_cut, fixed_point_facts, hoffman_feasible, sample_aggregate_candidate,
    sample_disaggregable, strongest_agent_set, CutProvenance, FeasibilityReport, FixedPointFacts,
    HoffmanCut, LambdaCut, DEFAULT_THRESHOLD_B,
};
pub use linalg::{solve_lp, symmetric_eigenvalues, LinearProgram, LpOutcome};
pub use master::{
    FeasibleRegion, MasterError, MasterPoint, MasterSolver, MicrogridMaster, QuadraticCost,
    QuadraticMaster, Schedule,
};
pub use model::{
    microgrid_instance, random_instance, toy_instance, AggregateBox, Allocation, MicrogridSpec,
    ProfileMatrix, TransportInstance,
};
pub use polyhedral::{
    ni_apm_poly, optimal_disaggregation_poly, PolyAgent, DEFAULT_DUAL_OUTER_CAP,
};
pub use projections::{
    dykstra_project, project_agent, project_aggregate, AgentBlock, DykstraOutcome, DykstraParams,
    Halfspace, ProjectionSet,
};
pub use protocol::{
    audit_transcript, ni_apm, optimal_disaggregation, optimal_disaggregation_with_region,
    permutation_invariance_check, privacy_audit, AuditFinding, CutAttempt, CutMode,
    CutQueryRecord, DisaggRun, LocalConstraint, NiApmOutcome, OperatorTranscript, OuterRecord,
    OuterStatus, ProtocolError, ProtocolParams, RunOutcome, RunReport, RunStats, Simulator,
    SweepRecord,
};
pub use smc::{
    aggregate, aggregate_words, sigma_from_bundles, smc_sum_scalar, split, FixedPoint,
    ShareBundle, SigmaVector, MODULUS, SCALE,
};
pub use spectral::{
    lambda1, laplacian, scaling_experiment, FaceConfig, ScalingRow, ScalingTable, KERNEL_TOL,
};
