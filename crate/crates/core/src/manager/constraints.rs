use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ManagerState;
use crate::equivalence::{ancestor_graph, dags_disjoint, Matcher, Signatures};
use crate::model::{validate, Stream, TaskId, Violation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ConstraintViolation {
    /// A submitted sink has no equivalent running task.
    UncoveredSink { dataflow: String, sink: TaskId },
    /// A running task serves no submitted sink.
    OrphanTask { running: String, task: TaskId },
    /// A running stream serves no submitted sink.
    OrphanStream { running: String, stream: Stream },
    OverlappingRunning { first: String, second: String },
    NotDedupRunning {
        running: String,
        first: TaskId,
        second: TaskId,
    },
    InvalidRunning { running: String, violation: Violation },
    Bookkeeping { detail: String },
}

impl ConstraintViolation {
    pub fn is_coverage(&self) -> bool {
        matches!(self, ConstraintViolation::UncoveredSink { .. })
    }

    pub fn is_minimization(&self) -> bool {
        matches!(
            self,
            ConstraintViolation::OrphanTask { .. } | ConstraintViolation::OrphanStream { .. }
        )
    }
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintViolation::UncoveredSink { dataflow, sink } => {
                write!(f, "sink {sink} of {dataflow} is not covered by a running task")
            }
            ConstraintViolation::OrphanTask { running, task } => {
                write!(f, "running task {task} in {running} serves no submitted sink")
            }
            ConstraintViolation::OrphanStream { running, stream } => {
                write!(f, "running stream {stream} in {running} serves no submitted sink")
            }
            ConstraintViolation::OverlappingRunning { first, second } => {
                write!(f, "running DAGs {first} and {second} overlap")
            }
            ConstraintViolation::NotDedupRunning {
                running,
                first,
                second,
            } => write!(f, "running DAG {running} has equivalent tasks {first} and {second}"),
            ConstraintViolation::InvalidRunning { running, violation } => {
                write!(f, "running DAG {running}: {violation}")
            }
            ConstraintViolation::Bookkeeping { detail } => write!(f, "bookkeeping: {detail}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub violations: Vec<ConstraintViolation>,
}

impl ConstraintReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "all constraints hold");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

impl ManagerState {
    /// Checks sink coverage, minimization, disjointness and de-dup of the
    /// running set, and the consistency of the bookkeeping maps.
    pub fn check_constraints(&self) -> ConstraintReport {
        let mut out = Vec::new();
        let mut bad = |detail: String| out.push(ConstraintViolation::Bookkeeping { detail });

        for (name, served) in &self.decomposition {
            if !self.running.contains_key(name) {
                bad(format!("decomposition lists {name}, which is not running"));
            }
            if served.is_empty() {
                bad(format!("running DAG {name} serves nothing"));
            }
            for s in served {
                if self.inverse.get(s) != Some(name) {
                    bad(format!("{s} is served by {name} but maps elsewhere"));
                }
            }
        }
        for (name, r) in &self.running {
            if r.name() != name {
                bad(format!("running DAG {} is filed under {name}", r.name()));
            }
            if !self.decomposition.contains_key(name) {
                bad(format!("running DAG {name} has no decomposition entry"));
            }
        }
        for (s, r) in &self.inverse {
            if !self.submitted.contains_key(s) {
                bad(format!("inverse maps unknown dataflow {s}"));
            }
            if !self.decomposition.get(r).is_some_and(|set| set.contains(s)) {
                bad(format!("{s} maps to {r}, which does not list it"));
            }
        }
        for name in self.submitted.keys() {
            if !self.inverse.contains_key(name) {
                bad(format!("submitted dataflow {name} is not mapped to a running DAG"));
            }
            if !self.bindings.contains_key(name) {
                bad(format!("submitted dataflow {name} has no bindings"));
            }
        }
        for name in self.bindings.keys() {
            if !self.submitted.contains_key(name) {
                bad(format!("bindings kept for unknown dataflow {name}"));
            }
        }

        let mut owner: BTreeMap<&TaskId, &str> = BTreeMap::new();
        for (name, r) in &self.running {
            for t in r.task_ids() {
                if let Some(prev) = owner.insert(t, name) {
                    bad(format!("task {t} runs in both {prev} and {name}"));
                }
            }
        }

        let names: Vec<&String> = self.running.keys().collect();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                if !dags_disjoint(&self.running[*a], &self.running[*b]) {
                    out.push(ConstraintViolation::OverlappingRunning {
                        first: (*a).clone(),
                        second: (*b).clone(),
                    });
                }
            }
        }
        for (name, r) in &self.running {
            for v in validate(r).violations {
                out.push(match v {
                    Violation::NotDedup { first, second } => ConstraintViolation::NotDedupRunning {
                        running: name.clone(),
                        first,
                        second,
                    },
                    other => ConstraintViolation::InvalidRunning {
                        running: name.clone(),
                        violation: other,
                    },
                });
            }
        }

        let running_sigs: BTreeMap<&String, Signatures> = self
            .running
            .iter()
            .map(|(n, r)| (n, Signatures::compute(r)))
            .collect();
        let mut used_tasks: BTreeSet<TaskId> = BTreeSet::new();
        let mut used_streams: BTreeSet<Stream> = BTreeSet::new();
        for (name, d) in &self.submitted {
            let (Some(rname), Some(b)) = (self.inverse.get(name), self.bindings.get(name)) else {
                continue;
            };
            let Some(r) = self.running.get(rname) else {
                continue;
            };
            let d_sigs = Signatures::compute(d);
            let mut matcher = Matcher::new(d, &d_sigs, r, &running_sigs[rname]);
            let bound = |t: &TaskId| b.get(t).filter(|rt| r.contains(rt));

            for sink in d.sinks() {
                match bound(sink) {
                    Some(rt) if matcher.equivalent(sink, rt) => {}
                    _ => out.push(ConstraintViolation::UncoveredSink {
                        dataflow: name.clone(),
                        sink: sink.clone(),
                    }),
                }
                let g = ancestor_graph(d, sink).unwrap();
                for t in g.task_ids() {
                    match bound(t) {
                        Some(rt) if matcher.equivalent(t, rt) => {
                            used_tasks.insert(rt.clone());
                        }
                        _ => out.push(ConstraintViolation::Bookkeeping {
                            detail: format!("{name}/{t} is not bound to an equivalent running task"),
                        }),
                    }
                }
                for s in &g.streams {
                    if let (Some(f), Some(t)) = (bound(&s.from), bound(&s.to)) {
                        let image = Stream::new(f.clone(), t.clone());
                        if r.streams().contains(&image) {
                            used_streams.insert(image);
                        } else {
                            out.push(ConstraintViolation::Bookkeeping {
                                detail: format!("stream {s} of {name} maps to missing {image}"),
                            });
                        }
                    }
                }
            }
        }

        for (name, r) in &self.running {
            for t in r.task_ids() {
                if !used_tasks.contains(t) {
                    out.push(ConstraintViolation::OrphanTask {
                        running: name.clone(),
                        task: t.clone(),
                    });
                }
            }
            for s in r.streams() {
                if !used_streams.contains(s) {
                    out.push(ConstraintViolation::OrphanStream {
                        running: name.clone(),
                        stream: s.clone(),
                    });
                }
            }
        }

        ConstraintReport { violations: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AbstractTask, ConcreteTask, Dataflow};

    fn pipe(name: &str) -> Dataflow {
        Dataflow::new(
            name,
            [
                ConcreteTask::new("s", AbstractTask::source("S")),
                ConcreteTask::new("m", AbstractTask::new("M", "")),
                ConcreteTask::new("k", AbstractTask::sink("K")),
            ],
            [Stream::new("s", "m"), Stream::new("m", "k")],
        )
        .unwrap()
    }

    #[test]
    fn empty_state_is_clean() {
        assert!(ManagerState::new().check_constraints().is_empty());
    }

    #[test]
    fn extra_running_task_is_one_minimization_violation() {
        let mut state = ManagerState::new();
        state.submit(pipe("a")).unwrap();
        let (name, r) = state.running.iter().next().unwrap();
        let (name, r) = (name.clone(), r.clone());
        let extra = ConcreteTask::new("stray", AbstractTask::new("M", "other"));
        let corrupted = Dataflow::new(
            name.clone(),
            r.concrete_tasks().chain([extra]),
            r.streams().iter().cloned(),
        )
        .unwrap();
        state.running.insert(name, corrupted);

        let report = state.check_constraints();
        let minimization: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.is_minimization())
            .collect();
        assert_eq!(minimization.len(), 1, "{report}");
        assert!(matches!(
            minimization[0],
            ConstraintViolation::OrphanTask { task, .. } if task.as_str() == "stray"
        ));
    }

    #[test]
    fn dropped_binding_uncovers_the_sink() {
        let mut state = ManagerState::new();
        state.submit(pipe("a")).unwrap();
        state.bindings.get_mut("a").unwrap().remove(&TaskId::from("k"));
        let report = state.check_constraints();
        assert!(report.violations.iter().any(ConstraintViolation::is_coverage));
    }
}
