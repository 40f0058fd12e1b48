//! Reuse of streaming dataflows.
//!
//! Users submit dataflow DAGs over shared raw streams and remove them later.
//! [`manager::ManagerState`] keeps the set of *running* DAGs minimal: every
//! task that is equivalent (same logic, same provenance) to one already
//! running is reused instead of re-instantiated, and running DAGs are split
//! again when the DAGs that needed them go away.
//!
//! [`sim::Deployment`] enacts merge/unmerge plans as immutable fragments wired
//! through an in-process broker and executes events deterministically, so the
//! outputs of every submitted DAG can be compared with a standalone run.
//! [`harness`] generates workloads and traces and replays them to collect
//! task-count and cost series.

pub mod equivalence;
pub mod harness;
pub mod manager;
pub mod model;
pub mod session;
pub mod sim;

pub use equivalence::{AncestorGraph, EquivalenceSignature, Signatures};
pub use manager::{ConstraintReport, ManagerError, ManagerState, MergePlan, UnmergePlan};
pub use model::{AbstractTask, ConcreteTask, Dataflow, DataflowError, Stream, TaskId};
pub use sim::{Deployment, Event, SimError};
