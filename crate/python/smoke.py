"""Smoke test for the hetcons_py extension.

Build first:  pip install --no-build-isolation -e crates/py
Run:          python python/smoke.py
"""
import json
import pathlib
import sys

import hetcons_py as hc

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    plant = hc.Plant.double_integrator([1.0, 1.2, 0.8, 1.1])
    graph = hc.Graph.from_adjacency(
        [[0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]
    )
    assert graph.has_spanning_tree()
    assert sorted(graph.roots()) == [1, 2, 3, 4]

    design = hc.synthesize(plant, graph, zeta=0.4, delta=0.02)
    print(design)
    assert design.phi > 0 and len(design.gains) == 4
    certs = design.certificates()
    assert certs["hold"], certs
    report = json.loads(design.to_json())
    assert report["dropped_row"] == design.dropped_row

    sim = design.simulate(max_steps=100_000)
    print(sim)
    t, x = sim.trajectories()
    assert len(t) == len(x) and len(x[0]) == 8

    exp = hc.Experiment.load(str(ROOT / "configs" / "six_agent.toml"))
    d6, s6 = exp.run()
    print(d6, s6, "envelope", s6.envelope)
    assert s6.converged

    rows = exp.sweep("phi", [0.08, 0.0])
    for r in rows:
        print(r)
    assert rows[-1]["ST"] == 0.0

    try:
        hc.synthesize(plant, hc.Graph.from_adjacency([[0.0] * 4 for _ in range(4)]), 0.4, 0.02)
    except hc.HetconsError as e:
        print("rejected as expected:", e)
    else:
        raise AssertionError("graph without a spanning tree accepted")

    assert abs(hc.spearman([1, 2, 3], [3, 2, 1]) + 1) < 1e-12
    print("smoke: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
