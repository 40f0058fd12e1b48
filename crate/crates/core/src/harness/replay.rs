use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use super::metrics::StepMetrics;
use super::trace::{Op, Trace};
use super::workload::Workload;
use crate::manager::{rebuild_from_scratch, ManagerError};
use crate::model::{ConcreteTask, Dataflow, Stream, TaskId};
use crate::session::{Session, SessionError};
use crate::sim::{CostModel, Deployment, Event, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every submitted DAG deployed on its own.
    Default,
    /// Submissions go through the reuse manager.
    Reuse,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Default => "default",
            Mode::Reuse => "reuse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// Run the oracles every this many steps; 0 disables them.
    pub oracle_every: usize,
    /// Compare sink outputs with standalone runs when the oracles run.
    pub check_outputs: bool,
    /// Events per raw stream per step.
    pub events_per_step: usize,
    pub cost_model: CostModel,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            oracle_every: 1,
            check_outputs: true,
            events_per_step: 10,
            cost_model: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayFailure {
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("trace names unknown dataflow {0}")]
    UnknownDataflow(String),
}

impl From<SessionError> for ReplayFailure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Manager(e) => ReplayFailure::Manager(e),
            SessionError::Sim(e) => ReplayFailure::Sim(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{mode} replay failed at step {step}: {failure}")]
pub struct ReplayError {
    pub mode: Mode,
    pub step: usize,
    pub failure: ReplayFailure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    pub steps_checked: usize,
    /// Sink event sequences compared against standalone runs.
    pub outputs_compared: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub mode: Mode,
    pub steps: Vec<StepMetrics>,
    /// Per step, how many submitted DAGs use each running task. Reuse only.
    pub usage: Vec<Vec<usize>>,
    pub oracle: OracleStats,
}

/// Raw streams with a running sequence number per source type.
#[derive(Clone, Debug, Default)]
pub struct RawStreams {
    per_step: usize,
    counters: BTreeMap<String, u64>,
}

impl RawStreams {
    pub fn new(source_types: impl IntoIterator<Item = String>, per_step: usize) -> Self {
        RawStreams {
            per_step,
            counters: source_types.into_iter().map(|t| (t, 0)).collect(),
        }
    }

    pub fn for_workload(w: &Workload, per_step: usize) -> Self {
        let types: BTreeSet<String> = w
            .dags
            .iter()
            .flat_map(|d| d.sources().map(|s| d.task(s).unwrap().kind.clone()).collect::<Vec<_>>())
            .collect();
        Self::new(types, per_step)
    }

    pub fn next_step(&mut self) -> BTreeMap<String, Vec<Event>> {
        let per_step = self.per_step as u64;
        self.counters
            .iter_mut()
            .map(|(kind, next)| {
                let events = (*next..*next + per_step)
                    .map(|seq| {
                        let h = xxh3_64(format!("{kind}#{seq}").as_bytes());
                        let len = 4 + (h % 29) as usize;
                        let payload = h.to_le_bytes().iter().copied().cycle().take(len).collect();
                        Event::new(kind.clone(), seq, payload)
                    })
                    .collect();
                *next += per_step;
                (kind.clone(), events)
            })
            .collect()
    }
}

fn namespaced(d: &Dataflow) -> Dataflow {
    let id = |t: &TaskId| TaskId::new(format!("{}/{t}", d.name()));
    Dataflow::new(
        d.name(),
        d.tasks().map(|(t, a)| ConcreteTask::new(id(t), a.clone())),
        d.streams().iter().map(|s| Stream::new(id(&s.from), id(&s.to))),
    )
    .expect("renaming keeps a dataflow well-formed")
}

/// Replays `trace` over `workload` in the given mode, one simulation step per
/// action, collecting metrics after each step.
pub fn replay(
    trace: &Trace,
    workload: &Workload,
    mode: Mode,
    config: &ReplayConfig,
) -> Result<ReplayResult, ReplayError> {
    let by_name: BTreeMap<&str, &Dataflow> = workload.dags.iter().map(|d| (d.name(), d)).collect();
    let mut raw = RawStreams::for_workload(workload, config.events_per_step);
    let mut result = ReplayResult {
        mode,
        steps: Vec::with_capacity(trace.actions.len()),
        usage: Vec::new(),
        oracle: OracleStats::default(),
    };
    let fail = |step: usize| move |failure: ReplayFailure| ReplayError { mode, step, failure };

    match mode {
        Mode::Default => {
            let mut dep = Deployment::with_cost_model(config.cost_model);
            let mut live: BTreeMap<String, (String, usize)> = BTreeMap::new();
            for a in &trace.actions {
                let err = fail(a.step);
                match &a.op {
                    Op::Submit(n) => {
                        let d = by_name
                            .get(n.as_str())
                            .ok_or_else(|| err(ReplayFailure::UnknownDataflow(n.clone())))?;
                        let fragment = dep.launch_dataflow(&namespaced(d)).map_err(|e| err(e.into()))?;
                        live.insert(n.clone(), (fragment, d.len()));
                    }
                    Op::Remove(n) => {
                        let (fragment, _) = live
                            .remove(n)
                            .ok_or_else(|| err(ReplayFailure::UnknownDataflow(n.clone())))?;
                        dep.teardown_fragment(&fragment).map_err(|e| err(e.into()))?;
                    }
                }
                let events = raw.next_step();
                let injections = crate::session::route(dep.active_tasks(), &events);
                dep.step(&injections).map_err(|e| err(e.into()))?;
                if config.oracle_every > 0 && a.step % config.oracle_every == 0 {
                    let expected: usize = live.values().map(|(_, n)| n).sum();
                    if dep.active_task_count() != expected {
                        return Err(err(ReplayFailure::Oracle(format!(
                            "{} active tasks, {expected} expected",
                            dep.active_task_count()
                        ))));
                    }
                    result.oracle.steps_checked += 1;
                }
                result.steps.push(StepMetrics::of(a.step, mode, live.len(), &dep));
            }
        }
        Mode::Reuse => {
            let mut session = Session {
                deployment: Deployment::with_cost_model(config.cost_model),
                ..Session::default()
            };
            for a in &trace.actions {
                let err = fail(a.step);
                match &a.op {
                    Op::Submit(n) => {
                        let d = by_name
                            .get(n.as_str())
                            .ok_or_else(|| err(ReplayFailure::UnknownDataflow(n.clone())))?;
                        session.submit((*d).clone()).map_err(|e| err(e.into()))?;
                    }
                    Op::Remove(n) => {
                        session.remove(n).map_err(|e| err(e.into()))?;
                    }
                }
                let events = raw.next_step();
                let outputs = session.step(&events).map_err(|e| err(e.into()))?;
                if config.oracle_every > 0 && a.step % config.oracle_every == 0 {
                    check_reuse(&session, &events, &outputs, config, &mut result.oracle)
                        .map_err(&err)?;
                }
                result
                    .usage
                    .push(session.manager.usage_counts().into_values().collect());
                result.steps.push(StepMetrics::of(
                    a.step,
                    mode,
                    session.manager.submitted().len(),
                    &session.deployment,
                ));
            }
        }
    }
    Ok(result)
}

fn check_reuse(
    session: &Session,
    events: &BTreeMap<String, Vec<Event>>,
    outputs: &crate::session::SinkOutputs,
    config: &ReplayConfig,
    stats: &mut OracleStats,
) -> Result<(), ReplayFailure> {
    let oracle = |m: String| Err(ReplayFailure::Oracle(m));
    let m = &session.manager;
    let report = m.check_constraints();
    if !report.is_empty() {
        return oracle(format!("constraints violated:\n{report}"));
    }
    let rebuilt = rebuild_from_scratch(m.submitted().values().cloned())?;
    if rebuilt.running_task_count() != m.running_task_count() {
        return oracle(format!(
            "{} running tasks, minimal is {}",
            m.running_task_count(),
            rebuilt.running_task_count()
        ));
    }
    if rebuilt.canonical() != m.canonical() {
        return oracle("running set is not isomorphic to the minimal one".into());
    }
    if session.deployment.active_task_count() != m.running_task_count() {
        return oracle(format!(
            "{} active tasks in the deployment, {} running",
            session.deployment.active_task_count(),
            m.running_task_count()
        ));
    }
    if config.check_outputs {
        let expected = session.standalone_outputs(events)?;
        if expected.len() != outputs.len() {
            return oracle(format!(
                "{} sinks observed, {} expected",
                outputs.len(),
                expected.len()
            ));
        }
        for (key, want) in &expected {
            if outputs.get(key) != Some(want) {
                return oracle(format!("sink {}/{} diverges from its standalone run", key.0, key.1));
            }
        }
        stats.outputs_compared += expected.len();
    }
    stats.steps_checked += 1;
    Ok(())
}
