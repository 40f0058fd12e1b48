"""Smoke test for the streamreuse extension module.

Build and install it first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import pathlib

import streamreuse

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"


def load(name):
    return streamreuse.Dataflow.from_json((FIXTURES / f"pipeline-{name}.json").read_text())


def main():
    a, b, c, d = (load(x) for x in "abcd")
    assert streamreuse.validate_document(a.to_json()) == []
    assert streamreuse.equivalent(b, "kalman", c, "kalman")
    assert not streamreuse.equivalent(a, "kalman", d, "kalman")
    assert streamreuse.reuse_points(b, c) == ["slide"]

    s = streamreuse.Session()
    for df in (a, b, c, d):
        s.submit(df)
    assert s.running_task_count == 15
    assert len(s.running) == 2
    assert s.check_constraints() == []

    restored = streamreuse.Session.from_json(s.to_json())
    assert restored.running_task_count == 15

    plan = s.remove("B")
    assert len(plan["terminated_tasks"]) == 2
    try:
        s.remove("B")
    except KeyError:
        pass
    else:
        raise AssertionError("removing twice must fail")
    for name in ("A", "C", "D"):
        s.remove(name)
    assert s.running_task_count == 0

    w = streamreuse.workload("small", seed=1)
    t = streamreuse.trace(w, "RW", seed=2, rw_steps=20)
    out = streamreuse.replay(w, t, oracle_every=1)
    samples = out["samples"]
    assert samples
    assert all(x["running_tasks_reuse"] <= x["running_tasks_default"] for x in samples)
    assert len(json.loads(w)["dags"]) == 12
    print("smoke test passed")


if __name__ == "__main__":
    main()
