use std::collections::BTreeMap;

use super::{logic, Event, SimError};
use crate::equivalence::Signatures;
use crate::model::{Dataflow, TaskId};

/// Runs one step of `d` on its own, without broker or fragments, and returns
/// what each sink emitted.
pub fn standalone_run(
    d: &Dataflow,
    injections: &BTreeMap<TaskId, Vec<Event>>,
) -> Result<BTreeMap<TaskId, Vec<Event>>, SimError> {
    for t in injections.keys() {
        if !d.task(t).is_some_and(|a| a.is_source()) {
            return Err(SimError::UnknownSource(t.clone()));
        }
    }
    let sigs = Signatures::compute(d);
    let order = d
        .topological_order()
        .map_err(|_| SimError::StalePlan(format!("{} is cyclic", d.name())))?;

    let mut emitted: BTreeMap<&TaskId, Vec<Event>> = BTreeMap::new();
    let mut sinks = BTreeMap::new();
    for t in &order {
        let task = d.task(t).unwrap();
        let batch = if task.is_source() {
            injections.get(t).cloned().unwrap_or_default()
        } else {
            let mut parents: Vec<&TaskId> = d.parents_of(t).unwrap().iter().collect();
            parents.sort_by_key(|p| {
                let s = sigs.get(p).unwrap();
                (s.depth, s.digest)
            });
            parents.iter().flat_map(|p| emitted[p].iter().cloned()).collect()
        };
        let out = logic::apply(task, batch);
        if task.is_sink() {
            sinks.insert(t.clone(), out.clone());
        }
        emitted.insert(t, out);
    }
    Ok(sinks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AbstractTask, ConcreteTask, Stream};

    fn echo() -> Dataflow {
        Dataflow::new(
            "echo",
            [
                ConcreteTask::new("s", AbstractTask::source("S")),
                ConcreteTask::new("k", AbstractTask::sink("K")),
            ],
            [Stream::new("s", "k")],
        )
        .unwrap()
    }

    #[test]
    fn empty_injections_give_empty_sinks() {
        let out = standalone_run(&echo(), &BTreeMap::new()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out.values().all(Vec::is_empty));
    }

    #[test]
    fn echo_returns_every_event() {
        let events: Vec<Event> = (0..3).map(|i| Event::new("S", i, vec![i as u8])).collect();
        let out = standalone_run(&echo(), &BTreeMap::from([(TaskId::from("s"), events.clone())])).unwrap();
        assert_eq!(out[&TaskId::from("k")], events);
    }

    #[test]
    fn pi_chain_is_repeatable() {
        let d = Dataflow::new(
            "pi",
            [
                ConcreteTask::new("s", AbstractTask::source("S")),
                ConcreteTask::new("p1", AbstractTask::new("Pi", "fn=pi;iters=50")),
                ConcreteTask::new("p2", AbstractTask::new("Pi", "fn=pi;iters=80")),
                ConcreteTask::new("k", AbstractTask::sink("K")),
            ],
            [Stream::new("s", "p1"), Stream::new("p1", "p2"), Stream::new("p2", "k")],
        )
        .unwrap();
        let inj = BTreeMap::from([(
            TaskId::from("s"),
            (0..5).map(|i| Event::new("S", i, vec![i as u8; 4])).collect(),
        )]);
        let a = standalone_run(&d, &inj).unwrap();
        assert_eq!(a, standalone_run(&d, &inj).unwrap());
        assert_eq!(a[&TaskId::from("k")].len(), 5);
    }

    #[test]
    fn injecting_into_a_non_source_fails() {
        let inj = BTreeMap::from([(TaskId::from("k"), vec![])]);
        assert_eq!(
            standalone_run(&echo(), &inj),
            Err(SimError::UnknownSource(TaskId::from("k")))
        );
    }
}
