//! Tasks, streams and dataflow DAGs, plus the JSON document format.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equivalence::{Matcher, Signatures};

/// Config literal carried by every source task.
pub const SOURCE_CONFIG: &str = "source";
/// Config literal carried by every sink task.
pub const SINK_CONFIG: &str = "sink";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(String);

impl TaskId {
    pub fn new(id: impl Into<String>) -> Self {
        TaskId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for TaskId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_owned())
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        TaskId(s)
    }
}

/// User logic independent of any deployed instance. Two abstract tasks are
/// the same logic iff both `kind` and `config` are byte-equal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AbstractTask {
    #[serde(rename = "type")]
    pub kind: String,
    pub config: String,
}

impl AbstractTask {
    pub fn new(kind: impl Into<String>, config: impl Into<String>) -> Self {
        AbstractTask {
            kind: kind.into(),
            config: config.into(),
        }
    }

    pub fn source(kind: impl Into<String>) -> Self {
        Self::new(kind, SOURCE_CONFIG)
    }

    pub fn sink(kind: impl Into<String>) -> Self {
        Self::new(kind, SINK_CONFIG)
    }

    pub fn is_source(&self) -> bool {
        self.config == SOURCE_CONFIG
    }

    pub fn is_sink(&self) -> bool {
        self.config == SINK_CONFIG
    }
}

impl fmt::Display for AbstractTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.kind, self.config)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConcreteTask {
    pub id: TaskId,
    #[serde(flatten)]
    pub task: AbstractTask,
}

impl ConcreteTask {
    pub fn new(id: impl Into<TaskId>, task: AbstractTask) -> Self {
        ConcreteTask {
            id: id.into(),
            task,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stream {
    pub from: TaskId,
    pub to: TaskId,
}

impl Stream {
    pub fn new(from: impl Into<TaskId>, to: impl Into<TaskId>) -> Self {
        Stream {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

/// Wire form of a dataflow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataflowDocument {
    pub name: String,
    pub tasks: Vec<ConcreteTask>,
    pub streams: Vec<Stream>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataflowError {
    #[error("malformed dataflow document: {0}")]
    Parse(String),
    #[error("duplicate task id {0}")]
    DuplicateId(TaskId),
    #[error("stream {0} references an unknown task")]
    DanglingStream(Stream),
    #[error("stream {0} appears more than once")]
    DuplicateStream(Stream),
    #[error("streams form a cycle through {0:?}")]
    Cycle(Vec<TaskId>),
    #[error("boundary violation: {0}")]
    Boundary(String),
    #[error("tasks {0} and {1} are equivalent; dataflow is not de-duplicated")]
    NotDedup(TaskId, TaskId),
}

/// A directed acyclic graph of concrete tasks.
///
/// Construction only checks referential integrity (unique ids, streams that
/// resolve, no self loops or parallel streams); the remaining structural
/// rules are reported by [`validate`]. [`parse_dataflow`] applies both.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DataflowDocument", into = "DataflowDocument")]
pub struct Dataflow {
    name: String,
    tasks: BTreeMap<TaskId, AbstractTask>,
    streams: BTreeSet<Stream>,
    parents: BTreeMap<TaskId, BTreeSet<TaskId>>,
    children: BTreeMap<TaskId, BTreeSet<TaskId>>,
}

impl Dataflow {
    pub fn new(
        name: impl Into<String>,
        tasks: impl IntoIterator<Item = ConcreteTask>,
        streams: impl IntoIterator<Item = Stream>,
    ) -> Result<Self, DataflowError> {
        let mut task_map = BTreeMap::new();
        for t in tasks {
            if task_map.contains_key(&t.id) {
                return Err(DataflowError::DuplicateId(t.id));
            }
            task_map.insert(t.id, t.task);
        }
        let mut parents: BTreeMap<TaskId, BTreeSet<TaskId>> =
            task_map.keys().map(|id| (id.clone(), BTreeSet::new())).collect();
        let mut children = parents.clone();
        let mut stream_set = BTreeSet::new();
        for s in streams {
            if !task_map.contains_key(&s.from) || !task_map.contains_key(&s.to) {
                return Err(DataflowError::DanglingStream(s));
            }
            if s.from == s.to {
                return Err(DataflowError::Cycle(vec![s.from]));
            }
            if stream_set.contains(&s) {
                return Err(DataflowError::DuplicateStream(s));
            }
            parents.get_mut(&s.to).unwrap().insert(s.from.clone());
            children.get_mut(&s.from).unwrap().insert(s.to.clone());
            stream_set.insert(s);
        }
        Ok(Dataflow {
            name: name.into(),
            tasks: task_map,
            streams: stream_set,
            parents,
            children,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn contains(&self, id: &TaskId) -> bool {
        self.tasks.contains_key(id)
    }

    pub fn task(&self, id: &TaskId) -> Option<&AbstractTask> {
        self.tasks.get(id)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.keys()
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&TaskId, &AbstractTask)> {
        self.tasks.iter()
    }

    pub fn concrete_tasks(&self) -> impl Iterator<Item = ConcreteTask> + '_ {
        self.tasks
            .iter()
            .map(|(id, t)| ConcreteTask::new(id.clone(), t.clone()))
    }

    pub fn streams(&self) -> &BTreeSet<Stream> {
        &self.streams
    }

    pub fn parents_of(&self, id: &TaskId) -> Option<&BTreeSet<TaskId>> {
        self.parents.get(id)
    }

    pub fn children_of(&self, id: &TaskId) -> Option<&BTreeSet<TaskId>> {
        self.children.get(id)
    }

    /// Tasks whose config is the source literal.
    pub fn sources(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks
            .iter()
            .filter(|(_, t)| t.is_source())
            .map(|(id, _)| id)
    }

    /// Tasks whose config is the sink literal.
    pub fn sinks(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks
            .iter()
            .filter(|(_, t)| t.is_sink())
            .map(|(id, _)| id)
    }

    /// Kahn's algorithm; ties broken by id so the order is deterministic.
    /// On a cycle, returns the tasks that could not be ordered.
    pub fn topological_order(&self) -> Result<Vec<TaskId>, Vec<TaskId>> {
        let mut indegree: BTreeMap<&TaskId, usize> = self
            .parents
            .iter()
            .map(|(id, ps)| (id, ps.len()))
            .collect();
        let mut ready: VecDeque<&TaskId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.tasks.len());
        while let Some(id) = ready.pop_front() {
            order.push(id.clone());
            for child in &self.children[id] {
                let d = indegree.get_mut(child).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push_back(child);
                }
            }
        }
        if order.len() == self.tasks.len() {
            Ok(order)
        } else {
            let placed: BTreeSet<&TaskId> = order.iter().collect();
            Err(self
                .tasks
                .keys()
                .filter(|id| !placed.contains(id))
                .cloned()
                .collect())
        }
    }

    pub fn to_document(&self) -> DataflowDocument {
        DataflowDocument {
            name: self.name.clone(),
            tasks: self.concrete_tasks().collect(),
            streams: self.streams.iter().cloned().collect(),
        }
    }

    fn reachable(&self, seeds: impl Iterator<Item = TaskId>, forward: bool) -> BTreeSet<TaskId> {
        let mut seen: BTreeSet<TaskId> = BTreeSet::new();
        let mut queue: VecDeque<TaskId> = seeds.collect();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id.clone()) {
                continue;
            }
            let next = if forward {
                &self.children[&id]
            } else {
                &self.parents[&id]
            };
            queue.extend(next.iter().filter(|n| !seen.contains(*n)).cloned());
        }
        seen
    }
}

impl TryFrom<DataflowDocument> for Dataflow {
    type Error = DataflowError;

    fn try_from(doc: DataflowDocument) -> Result<Self, Self::Error> {
        Dataflow::new(doc.name, doc.tasks, doc.streams)
    }
}

impl From<Dataflow> for DataflowDocument {
    fn from(d: Dataflow) -> Self {
        d.to_document()
    }
}

/// One broken structural rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Cycle { tasks: Vec<TaskId> },
    NoSource,
    NoSink,
    SourceHasInput { task: TaskId },
    SinkHasOutput { task: TaskId },
    /// The task does not lie on any source-to-sink path.
    Unanchored { task: TaskId },
    NotDedup { first: TaskId, second: TaskId },
}

impl Violation {
    pub fn is_boundary(&self) -> bool {
        matches!(
            self,
            Violation::NoSource
                | Violation::NoSink
                | Violation::SourceHasInput { .. }
                | Violation::SinkHasOutput { .. }
                | Violation::Unanchored { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { tasks } => write!(f, "cycle through {tasks:?}"),
            Violation::NoSource => f.write_str("no source task"),
            Violation::NoSink => f.write_str("no sink task"),
            Violation::SourceHasInput { task } => write!(f, "source {task} has an incoming stream"),
            Violation::SinkHasOutput { task } => write!(f, "sink {task} has an outgoing stream"),
            Violation::Unanchored { task } => write!(f, "task {task} is not on a source-to-sink path"),
            Violation::NotDedup { first, second } => {
                write!(f, "tasks {first} and {second} are equivalent")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// The first violation as an error, by precedence cycle, boundary, de-dup.
    pub fn first_error(&self) -> Option<DataflowError> {
        let pick = |pred: fn(&Violation) -> bool| self.violations.iter().find(|v| pred(v));
        if let Some(Violation::Cycle { tasks }) =
            pick(|v| matches!(v, Violation::Cycle { .. }))
        {
            return Some(DataflowError::Cycle(tasks.clone()));
        }
        if let Some(v) = pick(Violation::is_boundary) {
            return Some(DataflowError::Boundary(v.to_string()));
        }
        if let Some(Violation::NotDedup { first, second }) =
            pick(|v| matches!(v, Violation::NotDedup { .. }))
        {
            return Some(DataflowError::NotDedup(first.clone(), second.clone()));
        }
        None
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural rule a submitted dataflow must satisfy.
pub fn validate(d: &Dataflow) -> ValidationReport {
    let mut violations = Vec::new();
    if let Err(tasks) = d.topological_order() {
        // Everything below assumes a DAG.
        violations.push(Violation::Cycle { tasks });
        return ValidationReport { violations };
    }

    if d.sources().next().is_none() {
        violations.push(Violation::NoSource);
    }
    if d.sinks().next().is_none() {
        violations.push(Violation::NoSink);
    }
    for (id, task) in d.tasks() {
        if task.is_source() && !d.parents[id].is_empty() {
            violations.push(Violation::SourceHasInput { task: id.clone() });
        }
        if task.is_sink() && !d.children[id].is_empty() {
            violations.push(Violation::SinkHasOutput { task: id.clone() });
        }
    }
    let from_sources = d.reachable(d.sources().cloned(), true);
    let to_sinks = d.reachable(d.sinks().cloned(), false);
    for id in d.task_ids() {
        if !from_sources.contains(id) || !to_sinks.contains(id) {
            violations.push(Violation::Unanchored { task: id.clone() });
        }
    }

    violations.extend(dedup_violations(d));
    ValidationReport { violations }
}

/// Pairs of equivalent tasks inside one acyclic dataflow.
pub(crate) fn dedup_violations(d: &Dataflow) -> Vec<Violation> {
    let sigs = Signatures::compute(d);
    let mut by_digest: BTreeMap<u128, Vec<&TaskId>> = BTreeMap::new();
    for id in d.task_ids() {
        if let Some(sig) = sigs.get(id) {
            by_digest.entry(sig.digest).or_default().push(id);
        }
    }
    let mut matcher = Matcher::new(d, &sigs, d, &sigs);
    let mut out = Vec::new();
    for group in by_digest.values().filter(|g| g.len() > 1) {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if matcher.equivalent(a, b) {
                    out.push(Violation::NotDedup {
                        first: (*a).clone(),
                        second: (*b).clone(),
                    });
                }
            }
        }
    }
    out
}

/// Parses a JSON dataflow document and enforces every structural rule.
pub fn parse_dataflow(document: &str) -> Result<Dataflow, DataflowError> {
    let doc: DataflowDocument =
        serde_json::from_str(document).map_err(|e| DataflowError::Parse(e.to_string()))?;
    let d = Dataflow::try_from(doc)?;
    match validate(&d).first_error() {
        Some(e) => Err(e),
        None => Ok(d),
    }
}

pub fn serialize_dataflow(d: &Dataflow) -> String {
    serde_json::to_string_pretty(&d.to_document()).expect("dataflow documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(name: &str, kinds: &[(&str, &str)]) -> Dataflow {
        let tasks = kinds
            .iter()
            .enumerate()
            .map(|(i, (k, c))| ConcreteTask::new(format!("t{i}"), AbstractTask::new(*k, *c)));
        let streams = (1..kinds.len()).map(|i| Stream::new(format!("t{}", i - 1), format!("t{i}")));
        Dataflow::new(name, tasks, streams).unwrap()
    }

    #[test]
    fn minimal_dataflow_is_valid() {
        let doc = r#"{"name":"m","tasks":[{"id":"s","type":"S","config":"source"},
            {"id":"k","type":"K","config":"sink"}],"streams":[{"from":"s","to":"k"}]}"#;
        let d = parse_dataflow(doc).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.streams().len(), 1);
        assert_eq!(parse_dataflow(&serialize_dataflow(&d)).unwrap(), d);
    }

    #[test]
    fn cycle_is_rejected() {
        let doc = r#"{"name":"c","tasks":[{"id":"s","type":"S","config":"source"},
            {"id":"t1","type":"A","config":""},{"id":"t2","type":"B","config":""},
            {"id":"k","type":"K","config":"sink"}],
            "streams":[{"from":"s","to":"t1"},{"from":"t1","to":"t2"},{"from":"t2","to":"t1"},
            {"from":"t2","to":"k"}]}"#;
        match parse_dataflow(doc) {
            Err(DataflowError::Cycle(tasks)) => {
                assert!(tasks.contains(&TaskId::from("t1")) && tasks.contains(&TaskId::from("t2")))
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_referential_errors() {
        assert!(matches!(parse_dataflow("{"), Err(DataflowError::Parse(_))));
        assert!(matches!(
            parse_dataflow(r#"{"name":"x","tasks":[{"id":"a","type":"A"}],"streams":[]}"#),
            Err(DataflowError::Parse(_))
        ));
        let dup = r#"{"name":"x","tasks":[{"id":"a","type":"A","config":"source"},
            {"id":"a","type":"B","config":"sink"}],"streams":[]}"#;
        assert!(matches!(parse_dataflow(dup), Err(DataflowError::DuplicateId(_))));
        let dangling = r#"{"name":"x","tasks":[{"id":"a","type":"A","config":"source"}],
            "streams":[{"from":"a","to":"b"}]}"#;
        assert!(matches!(parse_dataflow(dangling), Err(DataflowError::DanglingStream(_))));
        let parallel = r#"{"name":"x","tasks":[{"id":"a","type":"A","config":"source"},
            {"id":"b","type":"B","config":"sink"}],
            "streams":[{"from":"a","to":"b"},{"from":"a","to":"b"}]}"#;
        assert!(matches!(parse_dataflow(parallel), Err(DataflowError::DuplicateStream(_))));
    }

    #[test]
    fn source_with_input_is_a_boundary_violation() {
        let d = Dataflow::new(
            "b",
            [
                ConcreteTask::new("s0", AbstractTask::source("S")),
                ConcreteTask::new("s1", AbstractTask::source("T")),
                ConcreteTask::new("k", AbstractTask::sink("K")),
            ],
            [Stream::new("s0", "s1"), Stream::new("s1", "k")],
        )
        .unwrap();
        let report = validate(&d);
        assert!(report
            .violations
            .contains(&Violation::SourceHasInput { task: "s1".into() }));
        assert!(matches!(report.first_error(), Some(DataflowError::Boundary(_))));
    }

    #[test]
    fn missing_boundary_and_dangling_branch() {
        let no_sink = chain("n", &[("S", "source"), ("A", "x")]);
        let v = validate(&no_sink).violations;
        assert!(v.contains(&Violation::NoSink));

        // branch a -> b where b never reaches a sink
        let d = Dataflow::new(
            "u",
            [
                ConcreteTask::new("s", AbstractTask::source("S")),
                ConcreteTask::new("a", AbstractTask::new("A", "")),
                ConcreteTask::new("b", AbstractTask::new("B", "")),
                ConcreteTask::new("k", AbstractTask::sink("K")),
            ],
            [Stream::new("s", "a"), Stream::new("a", "b"), Stream::new("a", "k")],
        )
        .unwrap();
        assert_eq!(
            validate(&d).violations,
            vec![Violation::Unanchored { task: "b".into() }]
        );
    }

    #[test]
    fn equivalent_siblings_are_not_dedup() {
        let d = Dataflow::new(
            "dup",
            [
                ConcreteTask::new("s", AbstractTask::source("S")),
                ConcreteTask::new("a1", AbstractTask::new("A", "p")),
                ConcreteTask::new("a2", AbstractTask::new("A", "p")),
                ConcreteTask::new("k1", AbstractTask::sink("K1")),
                ConcreteTask::new("k2", AbstractTask::sink("K2")),
            ],
            [
                Stream::new("s", "a1"),
                Stream::new("s", "a2"),
                Stream::new("a1", "k1"),
                Stream::new("a2", "k2"),
            ],
        )
        .unwrap();
        assert_eq!(
            validate(&d).violations,
            vec![Violation::NotDedup {
                first: "a1".into(),
                second: "a2".into()
            }]
        );
        assert!(matches!(
            parse_dataflow(&serialize_dataflow(&d)),
            Err(DataflowError::NotDedup(_, _))
        ));
    }

    #[test]
    fn same_logic_different_ancestry_is_fine() {
        // Same abstract task twice, but fed from different parents.
        let d = chain(
            "ok",
            &[("S", "source"), ("A", "p"), ("A", "p"), ("K", "sink")],
        );
        assert!(validate(&d).is_empty());
    }

    #[test]
    fn disconnected_components_are_accepted() {
        let d = Dataflow::new(
            "two",
            [
                ConcreteTask::new("s1", AbstractTask::source("S1")),
                ConcreteTask::new("k1", AbstractTask::sink("K1")),
                ConcreteTask::new("s2", AbstractTask::source("S2")),
                ConcreteTask::new("k2", AbstractTask::sink("K2")),
            ],
            [Stream::new("s1", "k1"), Stream::new("s2", "k2")],
        )
        .unwrap();
        assert!(validate(&d).is_empty());
    }
}
