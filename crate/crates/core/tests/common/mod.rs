#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use streamreuse_core::equivalence::ancestor_graph;
use streamreuse_core::harness::{generate_workload, TaskRange, Workload, WorkloadSpec};
use streamreuse_core::model::parse_dataflow;
use streamreuse_core::{AbstractTask, Dataflow, TaskId};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture_json<T: serde::de::DeserializeOwned>(name: &str) -> T {
    serde_json::from_str(&fixture_text(name)).unwrap()
}

/// Dataflows A, B, C, D of the four-pipeline example.
pub fn pipelines() -> [Dataflow; 4] {
    ["a", "b", "c", "d"].map(|x| parse_dataflow(&fixture_text(&format!("pipeline-{x}.json"))).unwrap())
}

/// Random workload within the bounds of the minimality suite: at most 30
/// DAGs of at most 20 tasks.
pub fn bounded_spec(seed: u64) -> WorkloadSpec {
    let k = seed as usize;
    WorkloadSpec {
        dag_count: 6 + k % 25,
        tasks_per_dag: TaskRange { min: 2, max: 8 + k % 13 },
        source_pool: 1 + k % 5,
        prefix_share: [0.3, 0.6, 0.9][k % 3],
        prefix_depth: [0.0, 0.5, 0.8][(k / 3) % 3],
        fan_out_prob: 0.3,
        join_prob: 0.2,
        multi_source_prob: 0.2,
        type_pool: 4 + k % 6,
        config_pool: 2,
        total_tasks: None,
        seed,
    }
}

/// Pair of small de-dup DAGs drawn from tiny type pools so that equivalent
/// and look-alike tasks are common. `None` when the pools were too small for
/// the drawn sizes.
pub fn small_pair(seed: u64) -> Option<(Dataflow, Dataflow)> {
    let spec = WorkloadSpec {
        dag_count: 2,
        tasks_per_dag: TaskRange { min: 2, max: 12 },
        source_pool: 1 + (seed % 2) as usize,
        prefix_share: if seed.is_multiple_of(3) { 0.0 } else { 0.9 },
        prefix_depth: 0.0,
        fan_out_prob: 0.5,
        join_prob: 0.4,
        multi_source_prob: 0.3,
        type_pool: 2 + (seed % 3) as usize,
        config_pool: 1,
        total_tasks: None,
        seed,
    };
    let Workload { mut dags, .. } = generate_workload(&spec).ok()?;
    let b = dags.pop()?;
    let a = dags.pop()?;
    Some((a, b))
}

/// Exhaustive search for a bijection between the ancestor graphs of `a` and
/// `b` that maps `a` to `b`, keeps every abstract task and preserves streams
/// in both directions.
pub fn brute_equivalent(d1: &Dataflow, a: &TaskId, d2: &Dataflow, b: &TaskId) -> bool {
    let g1 = ancestor_graph(d1, a).unwrap();
    let g2 = ancestor_graph(d2, b).unwrap();
    if g1.tasks.len() != g2.tasks.len() || g1.streams.len() != g2.streams.len() {
        return false;
    }
    let order: Vec<TaskId> = d1
        .topological_order()
        .unwrap()
        .into_iter()
        .filter(|t| g1.contains_task(t))
        .collect();
    let candidates: Vec<TaskId> = g2.task_ids().cloned().collect();
    let parents1: BTreeMap<&TaskId, BTreeSet<&TaskId>> = order
        .iter()
        .map(|t| (t, g1.streams.iter().filter(|s| &s.to == t).map(|s| &s.from).collect()))
        .collect();
    let parents2: BTreeMap<&TaskId, BTreeSet<&TaskId>> = candidates
        .iter()
        .map(|t| (t, g2.streams.iter().filter(|s| &s.to == t).map(|s| &s.from).collect()))
        .collect();

    struct Search<'a> {
        order: &'a [TaskId],
        candidates: &'a [TaskId],
        d1: &'a Dataflow,
        d2: &'a Dataflow,
        parents1: &'a BTreeMap<&'a TaskId, BTreeSet<&'a TaskId>>,
        parents2: &'a BTreeMap<&'a TaskId, BTreeSet<&'a TaskId>>,
        root: (&'a TaskId, &'a TaskId),
    }

    fn extend<'a>(s: &Search<'a>, i: usize, map: &mut BTreeMap<&'a TaskId, &'a TaskId>, used: &mut BTreeSet<&'a TaskId>) -> bool {
        if i == s.order.len() {
            return true;
        }
        let x = &s.order[i];
        for y in s.candidates {
            if used.contains(y) || s.d1.task(x) != s.d2.task(y) {
                continue;
            }
            if (x == s.root.0) != (y == s.root.1) {
                continue;
            }
            let px = &s.parents1[x];
            let py = &s.parents2[y];
            if px.len() != py.len() {
                continue;
            }
            let image: BTreeSet<&TaskId> = px.iter().map(|p| map[p]).collect();
            if &image != py {
                continue;
            }
            map.insert(x, y);
            used.insert(y);
            if extend(s, i + 1, map, used) {
                return true;
            }
            map.remove(x);
            used.remove(y);
        }
        false
    }

    let search = Search {
        order: &order,
        candidates: &candidates,
        d1,
        d2,
        parents1: &parents1,
        parents2: &parents2,
        root: (a, b),
    };
    extend(&search, 0, &mut BTreeMap::new(), &mut BTreeSet::new())
}

/// Counts task classes by interning (type, config, sorted parent classes).
#[derive(Default)]
pub struct ClassCounter {
    table: HashMap<(AbstractTask, Vec<usize>), usize>,
}

impl ClassCounter {
    pub fn classes_of(&mut self, d: &Dataflow) -> BTreeMap<TaskId, usize> {
        let mut class: BTreeMap<TaskId, usize> = BTreeMap::new();
        for t in d.topological_order().unwrap() {
            let mut ps: Vec<usize> = d.parents_of(&t).unwrap().iter().map(|p| class[p]).collect();
            ps.sort_unstable();
            let next = self.table.len();
            let id = *self.table.entry((d.task(&t).unwrap().clone(), ps)).or_insert(next);
            class.insert(t, id);
        }
        class
    }

    /// Distinct classes over all tasks of `dags`.
    pub fn count<'a>(dags: impl IntoIterator<Item = &'a Dataflow>) -> usize {
        let mut c = ClassCounter::default();
        let mut seen = BTreeSet::new();
        for d in dags {
            seen.extend(c.classes_of(d).into_values());
        }
        seen.len()
    }
}
