//! A manager and the deployment enacting it, kept in lockstep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manager::{ManagerError, ManagerState, MergePlan, UnmergePlan};
use crate::model::{AbstractTask, Dataflow, TaskId};
use crate::sim::{standalone_run, Deployment, Event, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sink outputs keyed by (submitted dataflow, sink id).
pub type SinkOutputs = BTreeMap<(String, TaskId), Vec<Event>>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub manager: ManagerState,
    pub deployment: Deployment,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merges `d` and launches whatever it needs that is not yet running.
    /// Returns the plan and the name of the launched fragment, if any.
    pub fn submit(&mut self, d: Dataflow) -> Result<(MergePlan, Option<String>), SessionError> {
        let mut manager = self.manager.clone();
        let plan = manager.submit(d)?;
        let fragment = self.deployment.apply_merge(&plan)?;
        self.manager = manager;
        Ok((plan, fragment))
    }

    pub fn remove(&mut self, name: &str) -> Result<UnmergePlan, SessionError> {
        let mut manager = self.manager.clone();
        let plan = manager.remove(name)?;
        self.deployment.apply_unmerge(&plan)?;
        self.manager = manager;
        Ok(plan)
    }

    /// Routes raw-stream events, keyed by source type, to the running source
    /// task of that type.
    pub fn injections(&self, raw: &BTreeMap<String, Vec<Event>>) -> BTreeMap<TaskId, Vec<Event>> {
        route(self.deployment.active_tasks(), raw)
    }

    /// Runs one simulation step and reports the outputs of every submitted
    /// sink.
    pub fn step(&mut self, raw: &BTreeMap<String, Vec<Event>>) -> Result<SinkOutputs, SessionError> {
        let injections = self.injections(raw);
        let emitted = self.deployment.step(&injections)?;
        let mut out = BTreeMap::new();
        for (key, running) in self.manager.sink_bindings() {
            let events = emitted.get(&running).cloned().unwrap_or_default();
            out.insert(key, events);
        }
        Ok(out)
    }

    /// What each submitted dataflow would emit this step if it ran alone.
    pub fn standalone_outputs(&self, raw: &BTreeMap<String, Vec<Event>>) -> Result<SinkOutputs, SimError> {
        let mut out = BTreeMap::new();
        for (name, d) in self.manager.submitted() {
            let injections = route(d.tasks(), raw);
            for (sink, events) in standalone_run(d, &injections)? {
                out.insert((name.clone(), sink), events);
            }
        }
        Ok(out)
    }
}

/// Copies each raw stream to every source task of its type.
pub fn route<'a>(
    tasks: impl Iterator<Item = (&'a TaskId, &'a AbstractTask)>,
    raw: &BTreeMap<String, Vec<Event>>,
) -> BTreeMap<TaskId, Vec<Event>> {
    tasks
        .filter(|(_, a)| a.is_source())
        .filter_map(|(t, a)| raw.get(&a.kind).map(|e| (t.clone(), e.clone())))
        .collect()
}
