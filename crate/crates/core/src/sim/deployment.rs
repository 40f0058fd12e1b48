use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::broker::{Broker, ControlSignal};
use super::{logic, Event, SimError};
use crate::equivalence::{EquivalenceSignature, Signatures};
use crate::manager::{MergePlan, UnmergePlan};
use crate::model::{AbstractTask, ConcreteTask, Dataflow, Stream, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Residual core-equivalents consumed by one paused task.
    pub pause_overhead: f64,
    /// Weight of a task whose config sets no `cores`.
    pub default_weight: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            pause_overhead: 0.027,
            default_weight: 1.0,
        }
    }
}

/// A partial DAG launched as one unit. Its membership never changes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub name: String,
    pub tasks: BTreeSet<ConcreteTask>,
    pub internal_streams: BTreeSet<Stream>,
    /// Data topic to the fragment task subscribed to it.
    pub inbound_topics: BTreeMap<String, TaskId>,
    pub launched_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DeployedTask {
    task: AbstractTask,
    fragment: String,
    signature: EquivalenceSignature,
    weight: f64,
    children: BTreeSet<TaskId>,
    forwards: BTreeSet<String>,
    halted: bool,
}

/// One delivered event, for the optional JSON-lines log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub topic_or_stream: String,
    pub from: TaskId,
    pub to: TaskId,
    pub event_id: u64,
}

/// Physical view of the running set: fragments, broker, paused tasks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    fragments: Vec<Fragment>,
    broker: Broker,
    paused: BTreeSet<TaskId>,
    clock: u64,
    cost_model: CostModel,
    tasks: BTreeMap<TaskId, DeployedTask>,
    next_fragment: u64,
    dropped: u64,
    #[serde(skip)]
    log: Option<Vec<LogRecord>>,
}

type Rank = (u32, u128);

impl Deployment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cost_model(cost_model: CostModel) -> Self {
        Deployment {
            cost_model,
            ..Self::default()
        }
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn paused(&self) -> &BTreeSet<TaskId> {
        &self.paused
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn cost_model(&self) -> CostModel {
        self.cost_model
    }

    /// Events that reached a paused task and were discarded.
    pub fn dropped_events(&self) -> u64 {
        self.dropped
    }

    pub fn is_deployed(&self, t: &TaskId) -> bool {
        self.tasks.contains_key(t)
    }

    pub fn is_active(&self, t: &TaskId) -> bool {
        self.tasks.contains_key(t) && !self.paused.contains(t)
    }

    pub fn deployed_task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn active_task_count(&self) -> usize {
        self.tasks.len() - self.paused.len()
    }

    pub fn active_tasks(&self) -> impl Iterator<Item = (&TaskId, &AbstractTask)> {
        self.tasks
            .iter()
            .filter(|(t, _)| !self.paused.contains(*t))
            .map(|(t, d)| (t, &d.task))
    }

    /// Core-equivalents of the active tasks only.
    pub fn active_cost(&self) -> f64 {
        self.tasks
            .iter()
            .filter(|(t, _)| !self.paused.contains(*t))
            .map(|(_, d)| d.weight)
            .sum()
    }

    pub fn cost(&self) -> f64 {
        self.active_cost() + self.cost_model.pause_overhead * self.paused.len() as f64
    }

    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn take_log(&mut self) -> Vec<LogRecord> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn write_log(&mut self, mut out: impl Write) -> io::Result<()> {
        for r in self.take_log() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    fn mint_fragment(&mut self, label: &str) -> String {
        let n = self.next_fragment;
        self.next_fragment += 1;
        format!("F{n}:{label}")
    }

    fn install(
        &mut self,
        fragment: &str,
        tasks: &BTreeMap<TaskId, AbstractTask>,
        internal: &BTreeSet<Stream>,
        signatures: &BTreeMap<TaskId, EquivalenceSignature>,
    ) {
        for (id, task) in tasks {
            let children = internal
                .iter()
                .filter(|s| &s.from == id)
                .map(|s| s.to.clone())
                .collect();
            self.tasks.insert(
                id.clone(),
                DeployedTask {
                    task: task.clone(),
                    fragment: fragment.to_owned(),
                    signature: signatures[id],
                    weight: logic::weight(task, self.cost_model.default_weight),
                    children,
                    forwards: BTreeSet::new(),
                    halted: false,
                },
            );
            self.broker.open_control(id);
        }
    }

    /// Launches the new part of a merge as one fragment and bridges its
    /// boundary streams through the broker. Reused tasks are not touched
    /// beyond a forward signal on their control topic.
    pub fn apply_merge(&mut self, plan: &MergePlan) -> Result<Option<String>, SimError> {
        let stale = |msg: String| Err(SimError::StalePlan(msg));
        for t in &plan.reused_tasks {
            if !self.is_active(t) {
                return stale(format!("reused task {t} is not active"));
            }
        }
        let new: BTreeMap<TaskId, AbstractTask> = plan
            .new_tasks
            .iter()
            .map(|c| (c.id.clone(), c.task.clone()))
            .collect();
        for t in new.keys() {
            if self.tasks.contains_key(t) {
                return stale(format!("new task {t} is already deployed"));
            }
        }
        for s in &plan.internal_streams {
            if !new.contains_key(&s.from) || !new.contains_key(&s.to) {
                return stale(format!("internal stream {s} leaves the new tasks"));
            }
        }
        for s in &plan.boundary_streams {
            if !plan.reused_tasks.contains(&s.from) || !new.contains_key(&s.to) {
                return stale(format!("boundary stream {s} does not bridge reused to new"));
            }
        }
        if new.is_empty() {
            return Ok(None);
        }

        let mut parents: BTreeMap<&TaskId, Vec<&TaskId>> = BTreeMap::new();
        for s in plan.internal_streams.iter().chain(&plan.boundary_streams) {
            parents.entry(&s.to).or_default().push(&s.from);
        }
        let mut signatures: BTreeMap<TaskId, EquivalenceSignature> = BTreeMap::new();
        let mut pending: Vec<&TaskId> = new.keys().collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|t| {
                let ps = parents.get(t).map(Vec::as_slice).unwrap_or_default();
                let sigs: Option<Vec<EquivalenceSignature>> = ps
                    .iter()
                    .map(|p| {
                        signatures
                            .get(*p)
                            .or_else(|| self.tasks.get(*p).map(|d| &d.signature))
                            .copied()
                    })
                    .collect();
                match sigs {
                    Some(sigs) => {
                        signatures.insert((*t).clone(), EquivalenceSignature::combine(&new[*t], &sigs));
                        false
                    }
                    None => true,
                }
            });
            if pending.len() == before {
                return stale("new tasks form a cycle".into());
            }
        }

        let name = self.mint_fragment(&plan.submitted);
        self.install(&name, &new, &plan.internal_streams, &signatures);
        let mut inbound = BTreeMap::new();
        for s in &plan.boundary_streams {
            let topic = self
                .broker
                .create_topic(s)
                .ok_or_else(|| SimError::StalePlan(format!("topic for {s} already exists")))?;
            self.broker.signal(&s.from, ControlSignal::Forward {
                topic: topic.clone(),
            });
            inbound.insert(topic, s.to.clone());
        }
        self.fragments.push(Fragment {
            name: name.clone(),
            tasks: plan.new_tasks.iter().cloned().collect(),
            internal_streams: plan.internal_streams.clone(),
            inbound_topics: inbound,
            launched_at: self.clock,
        });
        Ok(Some(name))
    }

    /// Pauses every terminated task. Nothing is torn down.
    pub fn apply_unmerge(&mut self, plan: &UnmergePlan) -> Result<(), SimError> {
        for t in &plan.terminated_tasks {
            if !self.is_active(t) {
                return Err(SimError::StalePlan(format!("terminated task {t} is not active")));
            }
        }
        for t in &plan.terminated_tasks {
            self.paused.insert(t.clone());
            self.broker.signal(t, ControlSignal::Pause);
        }
        let idle: Vec<String> = self
            .broker
            .data_topics
            .iter()
            .filter(|(_, topic)| {
                topic.open
                    && !self.paused.contains(&topic.publisher)
                    && topic.subscribers.iter().all(|s| self.paused.contains(s))
            })
            .map(|(name, _)| name.clone())
            .collect();
        for topic in idle {
            let t = self.broker.data_topics.get_mut(&topic).unwrap();
            t.open = false;
            let publisher = t.publisher.clone();
            self.broker.signal(&publisher, ControlSignal::StopForward { topic });
        }
        Ok(())
    }

    /// Deploys a whole dataflow as its own fragment, ids as given.
    pub fn launch_dataflow(&mut self, d: &Dataflow) -> Result<String, SimError> {
        for t in d.task_ids() {
            if self.tasks.contains_key(t) {
                return Err(SimError::StalePlan(format!("task {t} is already deployed")));
            }
        }
        let sigs = Signatures::compute(d);
        let signatures = d
            .task_ids()
            .map(|t| (t.clone(), sigs.get(t).copied().unwrap_or_default()))
            .collect();
        let tasks: BTreeMap<TaskId, AbstractTask> =
            d.tasks().map(|(t, a)| (t.clone(), a.clone())).collect();
        let name = self.mint_fragment(d.name());
        self.install(&name, &tasks, d.streams(), &signatures);
        self.fragments.push(Fragment {
            name: name.clone(),
            tasks: d.concrete_tasks().collect(),
            internal_streams: d.streams().clone(),
            inbound_topics: BTreeMap::new(),
            launched_at: self.clock,
        });
        Ok(name)
    }

    /// Stops a fragment and frees its tasks and topics.
    pub fn teardown_fragment(&mut self, name: &str) -> Result<(), SimError> {
        let pos = self
            .fragments
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| SimError::UnknownFragment(name.to_owned()))?;
        let fragment = self.fragments.remove(pos);
        for c in &fragment.tasks {
            self.tasks.remove(&c.id);
            self.paused.remove(&c.id);
            self.broker.close_control(&c.id);
        }
        let gone: Vec<String> = self
            .broker
            .data_topics
            .iter()
            .filter(|(_, t)| {
                !self.tasks.contains_key(&t.publisher)
                    || t.subscribers.iter().all(|s| !self.tasks.contains_key(s))
            })
            .map(|(n, _)| n.clone())
            .collect();
        for topic in gone {
            self.broker.remove_topic(&topic);
            for d in self.tasks.values_mut() {
                d.forwards.remove(&topic);
            }
        }
        Ok(())
    }

    fn rank(&self, t: &TaskId) -> Rank {
        let s = self.tasks[t].signature;
        (s.depth, s.digest)
    }

    /// Runs one step: applies pending control signals, injects events into
    /// source tasks and pushes everything through to the sinks. Returns what
    /// each active sink task emitted.
    pub fn step(
        &mut self,
        injections: &BTreeMap<TaskId, Vec<Event>>,
    ) -> Result<BTreeMap<TaskId, Vec<Event>>, SimError> {
        for t in injections.keys() {
            match self.tasks.get(t) {
                Some(d) if d.task.is_source() => {}
                _ => return Err(SimError::UnknownSource(t.clone())),
            }
            if self.paused.contains(t) {
                return Err(SimError::PausedSource(t.clone()));
            }
        }
        let step = self.clock;
        self.clock += 1;

        let ids: Vec<TaskId> = self.tasks.keys().cloned().collect();
        for t in &ids {
            for signal in self.broker.drain_control(t) {
                let d = self.tasks.get_mut(t).unwrap();
                match signal {
                    ControlSignal::Forward { topic } => {
                        d.forwards.insert(topic);
                    }
                    ControlSignal::StopForward { topic } => {
                        d.forwards.remove(&topic);
                    }
                    ControlSignal::Pause => d.halted = true,
                }
            }
        }

        let mut order: Vec<(Rank, TaskId)> = self
            .tasks
            .iter()
            .filter(|(_, d)| !d.halted)
            .map(|(t, _)| (self.rank(t), t.clone()))
            .collect();
        order.sort();

        let mut inbox: HashMap<TaskId, Vec<(Rank, Event)>> = HashMap::new();
        for (t, events) in injections {
            inbox
                .entry(t.clone())
                .or_default()
                .extend(events.iter().map(|e| ((0, 0), e.clone())));
        }

        let mut sinks = BTreeMap::new();
        for (rank, t) in order {
            let mut arrived = inbox.remove(&t).unwrap_or_default();
            arrived.sort_by_key(|(r, _)| *r);
            let batch: Vec<Event> = arrived.into_iter().map(|(_, e)| e).collect();
            let d = &self.tasks[&t];
            let out = logic::apply(&d.task, batch);
            if d.task.is_sink() {
                sinks.insert(t.clone(), out.clone());
            }
            if out.is_empty() {
                continue;
            }

            let mut deliveries: Vec<(String, TaskId)> = d
                .children
                .iter()
                .map(|c| ("stream".to_owned(), c.clone()))
                .collect();
            for topic in d.forwards.clone() {
                self.broker.publish(&topic, &out);
                let events = self.broker.take(&topic);
                debug_assert_eq!(events.len(), out.len());
                for s in self.broker.subscribers(&topic) {
                    deliveries.push((topic.clone(), s.clone()));
                }
            }
            for (via, to) in deliveries {
                if self.tasks.get(&to).is_none_or(|d| d.halted) {
                    self.dropped += out.len() as u64;
                    continue;
                }
                if let Some(log) = &mut self.log {
                    log.extend(out.iter().map(|e| LogRecord {
                        step,
                        topic_or_stream: via.clone(),
                        from: t.clone(),
                        to: to.clone(),
                        event_id: e.seq,
                    }));
                }
                inbox
                    .entry(to)
                    .or_default()
                    .extend(out.iter().map(|e| (rank, e.clone())));
            }
        }
        Ok(sinks)
    }
}
