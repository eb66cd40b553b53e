"""End-to-end acceptance checks. Each test prints one PASS/FAIL line
(run with ``pytest -s tests/test_acceptance.py`` to see them live).
"""

import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from atkse.attack import (
    AttackConfig,
    filter_candidates,
    integral_gradient,
    reduction_config,
    run_atkse,
    semantic_invariant_gradient,
)
from atkse.baselines import dice_attack, dice_label_vector, random_attack
from atkse.cli import main
from atkse.evaluation import evaluate_accuracy, train_victim
from atkse.gcn import GRADIENT_EVALS, TrainConfig, adjacency_gradient, train_surrogate
from atkse.graph import Budget, edge_budget, flip_edge, generate_sbm, load_graph_bundle, save_graph_bundle
from atkse.util import substream


def _report(criterion, ok, detail):
    line = f"[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


SURROGATE = TrainConfig()  # hidden 16, relu, 200 epochs


def victim_accuracy(graph, trials=10, seed=900):
    accs = [
        evaluate_accuracy(train_victim(graph, seed=seed + t), graph)
        for t in range(trials)
    ]
    return float(np.mean(accs))


# ---------------------------------------------------------------------------
# Criterion 1: gradient-oracle agreement via the gradcheck command.
# ---------------------------------------------------------------------------

def test_criterion_1_gradient_oracle(tmp_path):
    graph = generate_sbm(30, 2, 0.2, 0.02, 10, 0.5, seed=0)
    bundle = tmp_path / "g30"
    save_graph_bundle(graph, bundle)

    start = time.monotonic()
    results = {}
    for activation in ("relu", "identity"):
        rc = main([
            "gradcheck", "--graph", str(bundle), "--entries", "50",
            "--step", "1e-4", "--tolerance", "1e-3",
            "--activation", activation, "--seed", "0",
            "--out", str(tmp_path / f"gc-{activation}"),
        ])
        import json

        report = json.loads((tmp_path / f"gc-{activation}" / "report.json").read_text())
        results[activation] = (rc, report["max_rel_error"])
    elapsed = time.monotonic() - start

    ok = all(rc == 0 and err < 1e-3 for rc, err in results.values()) and elapsed < 10.0
    detail = (
        f"relu err {results['relu'][1]:.2e}, identity err {results['identity'][1]:.2e}, "
        f"{elapsed:.1f}s"
    )
    _report(1, ok, detail)


# ---------------------------------------------------------------------------
# Criterion 2: reduction equivalence against an independent greedy oracle.
# ---------------------------------------------------------------------------

def _greedy_oracle(graph, delta, train_config):
    A = np.array(graph.adjacency)
    flipped = set()
    sequence = []
    for t in range(delta):
        params = train_surrogate(
            graph.with_adjacency(A), replace(train_config, seed=train_config.seed + t)
        )
        grad = -adjacency_gradient(params, A, graph.features, graph.labels, graph.train_idx)
        saliency = filter_candidates(grad, A, exclude=flipped)
        iu, iv = np.triu_indices(A.shape[0], k=1)
        k = int(np.argmax(saliency[iu, iv]))
        u, v = int(iu[k]), int(iv[k])
        sequence.append((u, v))
        A = flip_edge(A, u, v)
        flipped.add((u, v))
    return sequence


def test_criterion_2_reduction_equivalence():
    mismatches = []
    for sbm_seed in range(10, 15):
        graph = generate_sbm(40, 2, 0.2, 0.02, 8, 0.8, seed=sbm_seed)
        budget = edge_budget(graph, 0.05)
        train = TrainConfig(epochs=120, seed=sbm_seed)
        _, log = run_atkse(graph, reduction_config(budget, seed=sbm_seed), train)
        oracle = _greedy_oracle(graph, budget.delta, train)
        if log.pairs() != oracle:
            mismatches.append(sbm_seed)
    _report(2, not mismatches, f"5 SBM seeds, mismatches: {mismatches or 'none'}")


# ---------------------------------------------------------------------------
# Criterion 3: Riemann-sum bias on the synthetic quadratic integrand.
# ---------------------------------------------------------------------------

def test_criterion_3_riemann_bias(sbm20, sbm20_relu_params):
    u, v = 0, 1

    def quadratic(A):
        g = np.zeros_like(A)
        g[u, v] = g[v, u] = 2.0 * A[u, v]
        return g

    sums = {
        lam: integral_gradient(sbm20_relu_params, sbm20, u, v, lam, gradient_fn=quadratic)
        for lam in (0.2, 0.1, 0.05)
    }
    ok = (
        abs(sums[0.2] - 1.2) < 1e-9
        and abs(sums[0.05] - 1.05) < 1e-9
        and all(abs((s - 1.0) / lam - 1.0) < 0.05 for lam, s in sums.items())
    )
    _report(3, ok, f"sum(0.2)={sums[0.2]:.6f}, sum(0.05)={sums[0.05]:.6f}, error linear in lam")


# ---------------------------------------------------------------------------
# Criterion 4: budget exactness, no repeats, rerun determinism, all methods.
# ---------------------------------------------------------------------------

def _run_method(method, graph, budget, seed):
    if method == "atkse":
        return run_atkse(graph, AttackConfig(budget=budget, seed=seed),
                         TrainConfig(seed=seed))
    if method == "greedy":
        return run_atkse(graph, reduction_config(budget, seed=seed), TrainConfig(seed=seed))
    if method == "random":
        return random_attack(graph, budget, substream(seed, "baseline"), seed=seed)
    if method == "dice":
        labels = dice_label_vector(graph, TrainConfig(seed=seed))
        return dice_attack(graph, budget, substream(seed, "baseline"), labels=labels, seed=seed)
    raise AssertionError(method)


def test_criterion_4_budget_and_determinism(sbm40):
    budget = edge_budget(sbm40, 0.05)
    failures = []
    for method in ("atkse", "random", "dice", "greedy"):
        for seed in range(10):
            perturbed, log = _run_method(method, sbm40, budget, seed)
            l0 = int(np.count_nonzero(perturbed.adjacency != sbm40.adjacency))
            pairs = log.pairs()
            rerun_graph, rerun_log = _run_method(method, sbm40, budget, seed)
            if l0 != 2 * budget.delta:
                failures.append((method, seed, "l0"))
            if len(pairs) != len(set(pairs)):
                failures.append((method, seed, "repeat"))
            if rerun_log.to_jsonl() != log.to_jsonl() or not rerun_graph.equals(perturbed):
                failures.append((method, seed, "nondeterministic"))
    _report(4, not failures,
            f"4 methods x 10 seeds, delta={budget.delta}, failures: {failures or 'none'}")


# ---------------------------------------------------------------------------
# Criteria 5 and 6 share the attack runs on the 100-node benchmark graph.
# ---------------------------------------------------------------------------

ATTACK_SEEDS = range(10)


@pytest.fixture(scope="module")
def bench_graph():
    return generate_sbm(100, 2, 0.1, 0.01, 20, 0.5, seed=0)


@pytest.fixture(scope="module")
def bench_budget(bench_graph):
    return edge_budget(bench_graph, 0.05)


@pytest.fixture(scope="module")
def atkse_runs(bench_graph, bench_budget):
    runs = {}
    for seed in ATTACK_SEEDS:
        config = AttackConfig(budget=bench_budget, seed=seed)
        perturbed, _ = run_atkse(bench_graph, config, TrainConfig(seed=seed))
        runs[seed] = perturbed
    return runs


def test_criterion_5_attack_effectiveness_ordering(bench_graph, bench_budget, atkse_runs):
    start = time.monotonic()
    clean_acc = victim_accuracy(bench_graph)

    def attacked_mean(graphs):
        return float(np.mean([victim_accuracy(g) for g in graphs]))

    atkse_acc = attacked_mean([atkse_runs[s] for s in range(5)])
    random_acc = attacked_mean([
        random_attack(bench_graph, bench_budget, substream(s, "baseline"))[0]
        for s in range(5)
    ])
    dice_labels = dice_label_vector(bench_graph, TrainConfig(seed=0))
    dice_acc = attacked_mean([
        dice_attack(bench_graph, bench_budget, substream(s, "baseline"), labels=dice_labels)[0]
        for s in range(5)
    ])
    elapsed = time.monotonic() - start

    atkse_drop = clean_acc - atkse_acc
    random_drop = clean_acc - random_acc
    dice_drop = clean_acc - dice_acc
    ok = (
        clean_acc > random_acc > atkse_acc
        and atkse_drop >= random_drop + 0.02
        and atkse_drop >= dice_drop
        and elapsed < 600.0
    )
    detail = (
        f"clean {clean_acc:.3f} > random {random_acc:.3f} > atkse {atkse_acc:.3f}; "
        f"drops: atkse {atkse_drop:.3f}, random {random_drop:.3f}, dice {dice_drop:.3f}; "
        f"{elapsed:.0f}s"
    )
    _report(5, ok, detail)


def test_criterion_6_ablation_direction(bench_graph, bench_budget, atkse_runs):
    def mean_attacked(config_fn):
        accs = []
        for seed in ATTACK_SEEDS:
            perturbed, _ = run_atkse(bench_graph, config_fn(seed), TrainConfig(seed=seed))
            accs.append(victim_accuracy(perturbed))
        return float(np.mean(accs))

    full_acc = float(np.mean([victim_accuracy(atkse_runs[s]) for s in ATTACK_SEEDS]))
    no_momentum = mean_attacked(
        lambda s: AttackConfig(budget=bench_budget, momentum=0.0, seed=s)
    )
    no_semantic = mean_attacked(
        lambda s: AttackConfig(budget=bench_budget, si_samples=1, si_sigma=0.0, seed=s)
    )

    ok = (no_momentum >= full_acc - 0.005) and (no_semantic >= full_acc - 0.005)
    detail = (
        f"full {full_acc:.4f}, -momentum {no_momentum:.4f}, "
        f"-semantic {no_semantic:.4f} (each must be >= full - 0.005)"
    )
    _report(6, ok, detail)


# ---------------------------------------------------------------------------
# Criterion 7: conditional real-dataset reproduction (skipped without data).
# ---------------------------------------------------------------------------

@pytest.mark.skipif(
    "ATKSE_CORA_DIR" not in os.environ,
    reason="no real dataset bundle supplied (set ATKSE_CORA_DIR to run)",
)
def test_criterion_7_conditional_cora_reproduction():
    clean = load_graph_bundle(os.environ["ATKSE_CORA_DIR"])
    assert clean.num_nodes == 2708 and clean.num_classes == 7

    clean_acc = victim_accuracy(clean, trials=10, seed=0)

    perturbed_dir = os.environ.get("ATKSE_CORA_PERTURBED_DIR")
    if perturbed_dir:
        perturbed = load_graph_bundle(perturbed_dir)
    else:
        budget = edge_budget(clean, 0.05)
        perturbed, _ = run_atkse(clean, AttackConfig(budget=budget, seed=0), TrainConfig(seed=0))
    attacked_acc = victim_accuracy(perturbed, trials=10, seed=0)

    ok = (abs(clean_acc - 0.817) <= 0.020) and (abs(attacked_acc - 0.737) <= 0.025)
    _report(7, ok, f"clean {clean_acc:.3f} (target .817+-.020), "
                   f"attacked {attacked_acc:.3f} (target .737+-.025)")


# ---------------------------------------------------------------------------
# Criterion 8: per-iteration work bound via the instrumented counter.
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "lam,candidates,batch,si_samples",
    [(0.2, 64, 16, 5), (0.5, 10, 3, 2)],
)
def test_criterion_8_work_bound(sbm40, lam, candidates, batch, si_samples):
    budget = Budget(delta=1, rate=0.05)
    config = AttackConfig(
        budget=budget, lam=lam, num_candidates=candidates, batch_size=batch,
        si_samples=si_samples, si_sigma=5e-4, seed=0,
    )
    train = TrainConfig(epochs=60, seed=0)

    # Re-derive the candidate count the first iteration will see, using the
    # same seed substream the attack consumes.
    params = train_surrogate(sbm40, train)
    fresh = -semantic_invariant_gradient(
        params, sbm40, config.si_sigma, config.si_samples, substream(config.seed, "noise")
    )
    saliency = filter_candidates(fresh, sbm40.adjacency)
    iu, iv = np.triu_indices(sbm40.num_nodes, k=1)
    positives = int((saliency[iu, iv] > 0).sum())
    c_prime = min(candidates, positives)
    expected = si_samples + math.ceil(c_prime / batch) * config.steps

    GRADIENT_EVALS.reset()
    run_atkse(sbm40, config, train)
    observed = GRADIENT_EVALS.count

    ok = observed == expected
    _report(8, ok, f"lam={lam}, C'={c_prime}, bs={batch}: "
                   f"observed {observed} == n + ceil(C'/bs)/lam = {expected}")
