"""Random and DICE edge-perturbation baselines.

Both share the budget and logging contracts of the main attack so their
perturbed graphs drop into the same evaluation harness.
"""

from __future__ import annotations

import numpy as np

from .attack import AttackConfig, FlipRecord, PerturbationLog
from .errors import BudgetError
from .gcn import TrainConfig, forward, train_surrogate
from .graph import Budget, Graph, check_graph, flip_edge


def _baseline_log(records, budget: Budget, seed: int) -> PerturbationLog:
    # Trailer reuses the attack-config schema; sampling fields are defaults.
    return PerturbationLog(
        records=records, config=AttackConfig(budget=budget, seed=seed)
    )


def random_attack(
    graph: Graph, budget: Budget, rng: np.random.Generator, seed: int = 0
) -> tuple[Graph, PerturbationLog]:
    """Flip ``delta`` distinct uniformly random non-self node pairs.

    Whether a flip adds or deletes is decided by the pair's current state.
    ``seed`` is only echoed into the log trailer; sampling comes from rng.
    """
    check_graph(graph)
    n = graph.num_nodes
    max_pairs = n * (n - 1) // 2
    if budget.delta > max_pairs:
        raise BudgetError(
            f"graph has only {max_pairs} unordered pairs, cannot host {budget.delta} flips"
        )
    A = np.array(graph.adjacency)
    flipped: set[tuple[int, int]] = set()
    records = []
    while len(flipped) < budget.delta:
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v:
            continue
        pair = (min(u, v), max(u, v))
        if pair in flipped:
            continue
        direction = "add" if A[pair] == 0.0 else "delete"
        A = flip_edge(A, *pair)
        records.append(
            FlipRecord(
                iteration=len(flipped),
                u=pair[0],
                v=pair[1],
                direction=direction,
                integral_gradient=0.0,
                saliency=0.0,
            )
        )
        flipped.add(pair)
    return graph.with_adjacency(A), _baseline_log(records, budget, seed)


def dice_label_vector(graph: Graph, train_config: TrainConfig | None = None) -> np.ndarray:
    """Label vector a gray-box attacker can act on.

    True labels on train nodes (those are given); surrogate predictions on
    test nodes, whose labels the attacker never sees.
    """
    check_graph(graph)
    config = train_config if train_config is not None else TrainConfig()
    params = train_surrogate(graph, config)
    probs = forward(params, graph.adjacency, graph.features)
    labels = np.array(graph.labels)
    labels[graph.test_idx] = probs[graph.test_idx].argmax(axis=1)
    return labels


def dice_attack(
    graph: Graph,
    budget: Budget,
    rng: np.random.Generator,
    labels: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[Graph, PerturbationLog]:
    """Delete same-class edges or add cross-class edges, a coin flip each.

    When one pool is empty the other action is taken; when both are empty
    the budget is infeasible. ``labels`` defaults to
    :func:`dice_label_vector` on a default surrogate. Deleted pairs become
    same-class non-edges and added pairs cross-class edges, so neither can
    re-enter a pool and no pair is ever flipped twice.
    """
    check_graph(graph)
    if labels is None:
        labels = dice_label_vector(graph)
    labels = np.asarray(labels, dtype=np.int64)
    n = graph.num_nodes
    if labels.shape != (n,):
        raise ValueError("labels must have one entry per node")

    A = np.array(graph.adjacency)
    same = labels[:, None] == labels[None, :]
    triu = np.triu(np.ones((n, n), dtype=bool), k=1)
    records = []
    for t in range(budget.delta):
        delete_pool = np.argwhere((A > 0) & same & triu)
        add_pool = np.argwhere((A == 0) & ~same & triu)
        if len(delete_pool) == 0 and len(add_pool) == 0:
            raise BudgetError("no same-class edge to delete and no cross-class pair to add")
        want_delete = rng.random() < 0.5
        if want_delete and len(delete_pool) == 0:
            want_delete = False
        elif not want_delete and len(add_pool) == 0:
            want_delete = True
        pool = delete_pool if want_delete else add_pool
        u, v = (int(x) for x in pool[int(rng.integers(len(pool)))])
        A = flip_edge(A, u, v)
        records.append(
            FlipRecord(
                iteration=t,
                u=u,
                v=v,
                direction="delete" if want_delete else "add",
                integral_gradient=0.0,
                saliency=0.0,
            )
        )
    return graph.with_adjacency(A), _baseline_log(records, budget, seed)
