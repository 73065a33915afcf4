"""Shared helpers for the test suite: small random generators used by the
property-style tests, plus an independent reference tick used as an oracle."""

from __future__ import annotations

import numpy as np

from btevolve import bt

VARIABLES = list(bt.INPUT_RANGES)


def random_leaf(rng: np.random.Generator) -> bt.Node:
    if rng.random() < 0.5:
        var = VARIABLES[rng.integers(len(VARIABLES))]
        low, high = bt.INPUT_RANGES[var]
        cmp = bt.GREATER if rng.random() < 0.5 else bt.LESS
        return bt.condition(var, cmp, float(rng.uniform(low, high)))
    return bt.action(float(rng.uniform(-1.0, 1.0)))


def random_tree(rng: np.random.Generator, max_depth: int = 4,
                max_children: int = 4, p_composite: float = 0.6) -> bt.Node:
    """Random tree with a composite root; may contain empty composites."""

    def build(d: int) -> bt.Node:
        if d >= max_depth or rng.random() > p_composite:
            return random_leaf(rng)
        return compose(d)

    def compose(d: int) -> bt.Node:
        kind = bt.NodeKind.SELECTOR if rng.random() < 0.5 else bt.NodeKind.SEQUENCE
        n = int(rng.integers(0, max_children + 1))
        return bt.Node(kind, [build(d + 1) for _ in range(n)])

    return compose(0)


def random_blackboard(rng: np.random.Generator) -> bt.Blackboard:
    return bt.Blackboard(
        x=float(rng.uniform(-1.0, 1.0)),
        sigma=float(rng.uniform(0.0, 100.0)),
        Sigma=float(rng.uniform(0.0, 1.0)),
        Delta=float(rng.uniform(-1.0, 1.0)),
        r=float(rng.uniform(-1.0, 1.0)),
    )


def reference_tick(node: bt.Node, values: dict) -> tuple[bool, dict]:
    """Minimal independent tick: returns (succeeded, new values dict).

    Deliberately written from the semantics description alone, without any
    of the package's traversal machinery, to serve as an oracle.
    """
    values = dict(values)

    def run(n: bt.Node) -> bool:
        if n.kind is bt.NodeKind.ACTION:
            values["r"] = n.rudder
            return True
        if n.kind is bt.NodeKind.CONDITION:
            v = values[n.variable]
            return v > n.threshold if n.comparison == ">" else v < n.threshold
        if n.kind is bt.NodeKind.SELECTOR:
            return any(run(c) for c in n.children)
        return all(run(c) for c in n.children)

    return run(node), values


def bb_to_dict(bb: bt.Blackboard) -> dict:
    return {"x": bb.x, "sigma": bb.sigma, "Sigma": bb.Sigma,
            "Delta": bb.Delta, "r": bb.r}
