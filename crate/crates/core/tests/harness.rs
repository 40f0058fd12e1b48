mod common;

use common::{bounded_spec, fixture_json, ClassCounter};
use proptest::prelude::*;
use streamreuse_core::equivalence::dags_disjoint;
use streamreuse_core::harness::{
    generate_trace, generate_workload, pair, replay, task_savings, Mode, Op, ReplayConfig, ReuseHistogram, TaskRange,
    Trace, TraceKind, TraceSpec, Workload, WorkloadSpec,
};
use streamreuse_core::model::validate;
use streamreuse_core::{AbstractTask, ConcreteTask, Dataflow, Stream};

fn quiet() -> ReplayConfig {
    ReplayConfig {
        oracle_every: 0,
        check_outputs: false,
        ..ReplayConfig::default()
    }
}

#[test]
fn no_sharing_means_disjoint_dags() {
    let spec = WorkloadSpec {
        dag_count: 8,
        source_pool: 8,
        prefix_share: 0.0,
        multi_source_prob: 0.0,
        ..bounded_spec(3)
    };
    let w = generate_workload(&spec).unwrap();
    let distinct_sources = w
        .dags
        .iter()
        .map(|d| d.task(d.sources().next().unwrap()).unwrap().kind.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    for (i, a) in w.dags.iter().enumerate() {
        for b in &w.dags[i + 1..] {
            let sa = a.task(a.sources().next().unwrap()).unwrap();
            let sb = b.task(b.sources().next().unwrap()).unwrap();
            assert_eq!(dags_disjoint(a, b), sa != sb);
        }
    }
    assert!(distinct_sources >= 2);
}

#[test]
fn full_sharing_from_one_source_shares_a_prefix() {
    let spec = WorkloadSpec {
        dag_count: 10,
        tasks_per_dag: TaskRange { min: 4, max: 10 },
        source_pool: 1,
        prefix_share: 1.0,
        prefix_depth: 1.0,
        multi_source_prob: 0.0,
        ..bounded_spec(5)
    };
    let w = generate_workload(&spec).unwrap();
    for a in &w.dags {
        for b in &w.dags {
            assert!(!dags_disjoint(a, b));
        }
    }
    let total: usize = w.total_tasks();
    assert!(ClassCounter::count(&w.dags) < total);
}

#[test]
fn opmw_like_preset_matches_the_shipped_fixture() {
    let w = generate_workload(&WorkloadSpec::opmw_like()).unwrap();
    let shipped: Workload = fixture_json("opmw-like.json");
    assert_eq!(w, shipped);
    assert_eq!(w.dags.len(), 35);
    assert_eq!(w.total_tasks(), 471);
    assert!(w.dags.iter().all(|d| (2..=38).contains(&d.len())));
    let classes = ClassCounter::count(&w.dags);
    assert!((classes as f64 - 274.0).abs() <= 274.0 * 0.03, "{classes} classes");
}

#[test]
fn trace_shapes() {
    let w: Workload = fixture_json("opmw-like.json");
    let seq = generate_trace(&w, &TraceSpec::seq(0)).unwrap();
    assert_eq!(seq.actions.len(), 70);
    assert!(seq.actions[..35].iter().all(|a| matches!(a.op, Op::Submit(_))));
    seq.check().unwrap();

    let rw = generate_trace(&w, &TraceSpec::rw(4, 100, 20.0 / 35.0)).unwrap();
    rw.check().unwrap();
    assert!(rw.actions[..20].iter().all(|a| matches!(a.op, Op::Submit(_))));
    let submits = rw.actions.iter().filter(|a| matches!(a.op, Op::Submit(_))).count();
    let removes = rw.actions.len() - submits;
    assert_eq!(submits, removes);
    assert!(rw.actions.len() >= 120);
    assert_eq!(rw, generate_trace(&w, &TraceSpec::rw(4, 100, 20.0 / 35.0)).unwrap());

    let shipped: Trace = fixture_json("opmw-seq.json");
    assert_eq!(shipped, seq);
    for i in 0..4 {
        let t: Trace = fixture_json(&format!("opmw-rw-{i}.json"));
        assert_eq!(t.kind, TraceKind::Rw);
        assert_eq!(t, generate_trace(&w, &TraceSpec::rw(i, 100, 0.5714285714285714)).unwrap());
    }
}

#[test]
fn bad_traces_are_rejected() {
    let t = Trace::from_ops(TraceKind::Rw, [Op::Remove("w0".into())]);
    assert!(t.check().is_err());
    let t = Trace::from_ops(TraceKind::Rw, [Op::Submit("w0".into()), Op::Submit("w0".into())]);
    assert!(t.check().is_err());
    let empty = Workload { spec: None, dags: vec![] };
    assert!(generate_trace(&empty, &TraceSpec::seq(0)).is_err());
}

#[test]
fn bad_specs_are_rejected() {
    let mut s = bounded_spec(0);
    s.prefix_share = 1.5;
    assert!(generate_workload(&s).is_err());
    let mut s = bounded_spec(0);
    s.tasks_per_dag = TaskRange { min: 1, max: 4 };
    assert!(generate_workload(&s).is_err());
}

#[test]
fn default_mode_runs_every_task_at_full_submission() {
    let w: Workload = fixture_json("opmw-like.json");
    let t: Trace = fixture_json("opmw-seq.json");
    let d = replay(&t, &w, Mode::Default, &quiet()).unwrap();
    assert_eq!(d.steps[34].running_tasks, 471);
    let r = replay(&t, &w, Mode::Reuse, &ReplayConfig { oracle_every: 5, ..quiet() }).unwrap();
    assert_eq!(r.steps[34].running_tasks, ClassCounter::count(&w.dags));
    for s in pair(&d, &r) {
        assert!(s.running_tasks_reuse <= s.running_tasks_default);
    }
    assert_eq!(r.steps.last().unwrap().running_tasks, 0);
    assert_eq!(d.steps.last().unwrap().running_tasks, 0);
}

#[test]
fn opmw_like_histogram_reports_shared_time() {
    let w: Workload = fixture_json("opmw-like.json");
    let t: Trace = fixture_json("opmw-seq.json");
    let r = replay(&t, &w, Mode::Reuse, &quiet()).unwrap();
    let h = ReuseHistogram::from_usage(&r.usage);
    assert!(h.shared_fraction() >= 0.10, "{}", h.shared_fraction());
    let total: f64 = h.fractions.values().sum();
    assert!((total - 1.0).abs() < 1e-9);
}

fn pipeline(name: &str, sink: &str) -> Dataflow {
    Dataflow::new(
        name,
        [
            ConcreteTask::new("s", AbstractTask::source("S")),
            ConcreteTask::new("f", AbstractTask::new("F", "fn=tag")),
            ConcreteTask::new("k", AbstractTask::sink(sink)),
        ],
        [Stream::new("s", "f"), Stream::new("f", "k")],
    )
    .unwrap()
}

#[test]
fn identical_pipelines_share_for_the_whole_trace() {
    let w = Workload {
        spec: None,
        dags: vec![pipeline("x", "K"), pipeline("y", "K")],
    };
    let t = Trace::from_ops(
        TraceKind::Rw,
        [Op::Submit("x".into()), Op::Submit("y".into())],
    );
    let r = replay(&t, &w, Mode::Reuse, &ReplayConfig::default()).unwrap();
    let h = ReuseHistogram::from_usage(&r.usage[1..]);
    assert_eq!(h.reported().collect::<Vec<_>>(), vec![(2, 1.0)]);

    let disjoint = Workload {
        spec: None,
        dags: vec![pipeline("x", "K")],
    };
    let t = Trace::from_ops(TraceKind::Seq, [Op::Submit("x".into()), Op::Remove("x".into())]);
    let r = replay(&t, &disjoint, Mode::Reuse, &ReplayConfig::default()).unwrap();
    assert_eq!(ReuseHistogram::from_usage(&r.usage).reported().count(), 0);
}

#[test]
fn savings_grow_with_prefix_share() {
    let mean_savings = |share: f64| {
        let mut total = 0.0;
        for seed in 0..10 {
            let spec = WorkloadSpec {
                prefix_share: share,
                ..bounded_spec(seed * 3 + 1)
            };
            let w = generate_workload(&spec).unwrap();
            let t = generate_trace(&w, &TraceSpec::seq(seed)).unwrap();
            let d = replay(&t, &w, Mode::Default, &quiet()).unwrap();
            let r = replay(&t, &w, Mode::Reuse, &quiet()).unwrap();
            total += task_savings(&pair(&d, &r), 0..t.actions.len());
        }
        total / 10.0
    };
    let levels: Vec<f64> = [0.0, 0.4, 0.8, 1.0].into_iter().map(mean_savings).collect();
    for w in levels.windows(2) {
        assert!(w[0] <= w[1] + 1e-9, "{levels:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generator_emits_valid_dedup_dags(seed in any::<u64>()) {
        let w = generate_workload(&bounded_spec(seed % 1000)).unwrap();
        for d in &w.dags {
            prop_assert!(validate(d).is_empty(), "{}", validate(d));
        }
        prop_assert_eq!(&w, &generate_workload(&bounded_spec(seed % 1000)).unwrap());
    }

    #[test]
    fn replays_are_reproducible(seed in 0u64..1000, trace_seed in any::<u64>()) {
        let w = generate_workload(&bounded_spec(seed)).unwrap();
        let t = generate_trace(&w, &TraceSpec::rw(trace_seed, 20, 0.5)).unwrap();
        for mode in [Mode::Default, Mode::Reuse] {
            let a = replay(&t, &w, mode, &ReplayConfig { oracle_every: 4, ..ReplayConfig::default() }).unwrap();
            let b = replay(&t, &w, mode, &ReplayConfig { oracle_every: 4, ..ReplayConfig::default() }).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
