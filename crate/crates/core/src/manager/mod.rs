//! Bookkeeping of submitted and running dataflows.
//!
//! [`ManagerState::submit`] merges a new dataflow into the running set,
//! reusing every task that already runs with the same provenance, and
//! [`ManagerState::remove`] unmerges a dataflow again, terminating only the
//! tasks that no remaining submission needs. Both are transactional: the
//! resulting state is re-checked with [`ManagerState::check_constraints`]
//! and discarded if anything is off.

mod constraints;
mod merge;
mod rebuild;
mod unmerge;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equivalence::{EquivalenceSignature, Signatures};
use crate::model::{ConcreteTask, Dataflow, Stream, TaskId, ValidationReport};

pub use constraints::{ConstraintReport, ConstraintViolation};
pub use rebuild::rebuild_from_scratch;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManagerError {
    #[error("dataflow {0} is already submitted")]
    DuplicateName(String),
    #[error("no submitted dataflow named {0}")]
    UnknownName(String),
    #[error("dataflow {name} is invalid: {report}")]
    InvalidDataflow {
        name: String,
        report: ValidationReport,
    },
    #[error("{action} would break manager invariants:\n{report}")]
    ConstraintViolation {
        action: String,
        report: ConstraintReport,
    },
}

impl ManagerError {
    fn internal(action: impl Into<String>, detail: impl Into<String>) -> Self {
        ManagerError::ConstraintViolation {
            action: action.into(),
            report: ConstraintReport {
                violations: vec![ConstraintViolation::Bookkeeping {
                    detail: detail.into(),
                }],
            },
        }
    }
}

/// What a submission changes in the running set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePlan {
    pub submitted: String,
    /// Running DAGs that share a source with the submission and get merged.
    pub absorbed: Vec<String>,
    /// Running tasks the submission reuses.
    pub reused_tasks: BTreeSet<TaskId>,
    /// Freshly instantiated tasks, with minted ids.
    pub new_tasks: Vec<ConcreteTask>,
    /// Streams between two new tasks.
    pub internal_streams: BTreeSet<Stream>,
    /// Streams from a reused task into a new task.
    pub boundary_streams: BTreeSet<Stream>,
    pub result_name: String,
    /// Submitted task id to the running task that serves it.
    pub bindings: BTreeMap<TaskId, TaskId>,
}

impl fmt::Display for MergePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "merge {} -> {}", self.submitted, self.result_name)?;
        writeln!(f, "  absorbed: {:?}", self.absorbed)?;
        writeln!(f, "  reused_tasks ({}):", self.reused_tasks.len())?;
        for t in &self.reused_tasks {
            writeln!(f, "    {t}")?;
        }
        writeln!(f, "  new_tasks ({}):", self.new_tasks.len())?;
        for t in &self.new_tasks {
            writeln!(f, "    {} {}", t.id, t.task)?;
        }
        writeln!(f, "  internal_streams ({}):", self.internal_streams.len())?;
        for s in &self.internal_streams {
            writeln!(f, "    {s}")?;
        }
        writeln!(f, "  boundary_streams ({}):", self.boundary_streams.len())?;
        for s in &self.boundary_streams {
            writeln!(f, "    {s}")?;
        }
        Ok(())
    }
}

/// What a removal changes in the running set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmergePlan {
    pub removed: String,
    /// The running DAG that served the removed dataflow.
    pub affected: String,
    pub terminated_tasks: BTreeSet<TaskId>,
    pub disconnected_streams: BTreeSet<Stream>,
    /// What is left of `affected`, split into connected components.
    pub components: Vec<Dataflow>,
}

impl fmt::Display for UnmergePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "unmerge {} from {}", self.removed, self.affected)?;
        writeln!(f, "  terminated_tasks ({}):", self.terminated_tasks.len())?;
        for t in &self.terminated_tasks {
            writeln!(f, "    {t}")?;
        }
        writeln!(f, "  disconnected_streams ({}):", self.disconnected_streams.len())?;
        for s in &self.disconnected_streams {
            writeln!(f, "    {s}")?;
        }
        let names: Vec<String> = self
            .components
            .iter()
            .map(|c| format!("{} ({} tasks)", c.name(), c.len()))
            .collect();
        writeln!(f, "  components: {names:?}")
    }
}

/// Submitted dataflows, the running DAGs serving them, and the maps between.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "StateSnapshot", into = "StateSnapshot")]
pub struct ManagerState {
    pub(crate) submitted: BTreeMap<String, Dataflow>,
    pub(crate) running: BTreeMap<String, Dataflow>,
    /// Running DAG name to the submitted dataflows it serves.
    pub(crate) decomposition: BTreeMap<String, BTreeSet<String>>,
    /// Submitted dataflow name to the running DAG serving it.
    pub(crate) inverse: BTreeMap<String, String>,
    /// Submitted dataflow name to (submitted task id -> running task id).
    pub(crate) bindings: BTreeMap<String, BTreeMap<TaskId, TaskId>>,
    pub(crate) next_task: u64,
    pub(crate) next_dag: u64,
}

impl ManagerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn submitted(&self) -> &BTreeMap<String, Dataflow> {
        &self.submitted
    }

    pub fn running(&self) -> &BTreeMap<String, Dataflow> {
        &self.running
    }

    pub fn decomposition(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.decomposition
    }

    pub fn inverse(&self) -> &BTreeMap<String, String> {
        &self.inverse
    }

    pub fn bindings(&self, submitted: &str) -> Option<&BTreeMap<TaskId, TaskId>> {
        self.bindings.get(submitted)
    }

    /// (submitted name, sink id) to the running task where that output appears.
    pub fn sink_bindings(&self) -> BTreeMap<(String, TaskId), TaskId> {
        let mut out = BTreeMap::new();
        for (name, d) in &self.submitted {
            let Some(b) = self.bindings.get(name) else {
                continue;
            };
            for sink in d.sinks() {
                if let Some(r) = b.get(sink) {
                    out.insert((name.clone(), sink.clone()), r.clone());
                }
            }
        }
        out
    }

    pub fn running_task_count(&self) -> usize {
        self.running.values().map(Dataflow::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.submitted.is_empty()
            && self.running.is_empty()
            && self.decomposition.is_empty()
            && self.inverse.is_empty()
            && self.bindings.is_empty()
    }

    /// For every running task, how many submitted dataflows it serves.
    pub fn usage_counts(&self) -> BTreeMap<TaskId, usize> {
        let mut counts: BTreeMap<TaskId, usize> = BTreeMap::new();
        for b in self.bindings.values() {
            let distinct: BTreeSet<&TaskId> = b.values().collect();
            for t in distinct {
                *counts.entry(t.clone()).or_default() += 1;
            }
        }
        counts
    }

    /// Id-free form of the running set: two states with equal canonical forms
    /// run isomorphic DAGs serving the same submissions.
    pub fn canonical(&self) -> CanonicalState {
        let mut dags: Vec<CanonicalDag> = self
            .running
            .iter()
            .map(|(name, r)| {
                let sigs = Signatures::compute(r);
                let mut tasks: Vec<EquivalenceSignature> =
                    r.task_ids().map(|t| sigs.get(t).copied().unwrap_or_default()).collect();
                tasks.sort();
                let digest = |t: &TaskId| sigs.get(t).map(|s| s.digest).unwrap_or_default();
                let mut streams: Vec<(u128, u128)> = r
                    .streams()
                    .iter()
                    .map(|s| (digest(&s.from), digest(&s.to)))
                    .collect();
                streams.sort();
                let serves = self
                    .decomposition
                    .get(name)
                    .map(|s| s.iter().cloned().collect())
                    .unwrap_or_default();
                CanonicalDag {
                    tasks,
                    streams,
                    serves,
                }
            })
            .collect();
        dags.sort();
        CanonicalState { dags }
    }

    pub(crate) fn mint_task(&mut self, dataflow: &str, local: &TaskId) -> TaskId {
        let n = self.next_task;
        self.next_task += 1;
        TaskId::new(format!("{dataflow}/{local}#{n}"))
    }

    pub(crate) fn mint_dag(&mut self) -> String {
        let n = self.next_dag;
        self.next_dag += 1;
        format!("R{n}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CanonicalDag {
    pub tasks: Vec<EquivalenceSignature>,
    pub streams: Vec<(u128, u128)>,
    pub serves: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CanonicalState {
    pub dags: Vec<CanonicalDag>,
}

impl CanonicalState {
    pub fn task_count(&self) -> usize {
        self.dags.iter().map(|d| d.tasks.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct SinkBinding {
    dataflow: String,
    sink: TaskId,
    running_task: TaskId,
}

/// On-disk form of [`ManagerState`].
#[derive(Clone, Debug, Serialize, Deserialize)]
struct StateSnapshot {
    submitted: Vec<Dataflow>,
    running: Vec<Dataflow>,
    decomposition: BTreeMap<String, BTreeSet<String>>,
    inverse: BTreeMap<String, String>,
    sink_bindings: Vec<SinkBinding>,
    task_bindings: BTreeMap<String, BTreeMap<TaskId, TaskId>>,
    next_task_id: u64,
    next_dag_id: u64,
}

impl From<ManagerState> for StateSnapshot {
    fn from(s: ManagerState) -> Self {
        let sink_bindings = s
            .sink_bindings()
            .into_iter()
            .map(|((dataflow, sink), running_task)| SinkBinding {
                dataflow,
                sink,
                running_task,
            })
            .collect();
        StateSnapshot {
            submitted: s.submitted.into_values().collect(),
            running: s.running.into_values().collect(),
            decomposition: s.decomposition,
            inverse: s.inverse,
            sink_bindings,
            task_bindings: s.bindings,
            next_task_id: s.next_task,
            next_dag_id: s.next_dag,
        }
    }
}

impl TryFrom<StateSnapshot> for ManagerState {
    type Error = String;

    fn try_from(snap: StateSnapshot) -> Result<Self, Self::Error> {
        let state = ManagerState {
            submitted: snap
                .submitted
                .into_iter()
                .map(|d| (d.name().to_owned(), d))
                .collect(),
            running: snap
                .running
                .into_iter()
                .map(|d| (d.name().to_owned(), d))
                .collect(),
            decomposition: snap.decomposition,
            inverse: snap.inverse,
            bindings: snap.task_bindings,
            next_task: snap.next_task_id,
            next_dag: snap.next_dag_id,
        };
        let listed: BTreeMap<(String, TaskId), TaskId> = snap
            .sink_bindings
            .into_iter()
            .map(|b| ((b.dataflow, b.sink), b.running_task))
            .collect();
        if listed != state.sink_bindings() {
            return Err("sink_bindings disagree with task_bindings".into());
        }
        Ok(state)
    }
}
