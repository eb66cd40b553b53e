"""Victim retraining and repeated-trial accuracy statistics.

Poisoning semantics throughout: the victim only ever trains on the graph
it is handed, so the attacked column never touches the clean structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .gcn import SurrogateParams, TrainConfig, forward, train_surrogate
from .graph import Graph, check_graph

# Differs from the surrogate in both activation and width, which is what a
# transfer setting assumes about an unknown victim.
VICTIM_CONFIG = TrainConfig(hidden_dim=32, activation="tanh")


def train_victim(
    graph: Graph, victim_config: TrainConfig | None = None, seed: int | None = None
) -> SurrogateParams:
    """Train the victim model; same machinery, victim defaults."""
    config = victim_config if victim_config is not None else VICTIM_CONFIG
    if seed is not None:
        config = replace(config, seed=seed)
    return train_surrogate(graph, config)


def evaluate_accuracy(params: SurrogateParams, graph: Graph) -> float:
    """Fraction of test nodes whose argmax prediction matches the label.

    Argmax ties resolve to the lowest class index (numpy convention).
    """
    check_graph(graph)
    if graph.test_idx.size == 0:
        raise ValueError("test split is empty")
    probs = forward(params, graph.adjacency, graph.features)
    predictions = probs.argmax(axis=1)
    test = graph.test_idx
    return float((predictions[test] == graph.labels[test]).mean())


@dataclass
class EvalReport:
    """Accuracy statistics for clean vs attacked victim training."""

    method: str
    budget_rate: float
    trials: int
    clean_acc: tuple[float, float]  # (mean, sample std)
    attacked_acc: tuple[float, float]
    clean_trials: list[float]
    attacked_trials: list[float]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "budget_rate": self.budget_rate,
            "trials": self.trials,
            "clean": {
                "mean": self.clean_acc[0],
                "std": self.clean_acc[1],
                "per_trial": self.clean_trials,
            },
            "attacked": {
                "mean": self.attacked_acc[0],
                "std": self.attacked_acc[1],
                "per_trial": self.attacked_trials,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    def format_table(self) -> str:
        """Aligned mean+-std table, accuracy in percent."""
        def cell(stat):
            return f"{100 * stat[0]:.1f}±{100 * stat[1]:.1f}"

        rows = [
            ("graph", "accuracy (%)"),
            ("clean", cell(self.clean_acc)),
            (f"attacked ({self.method})", cell(self.attacked_acc)),
        ]
        width = max(len(r[0]) for r in rows) + 2
        lines = [f"{name:<{width}}{value}" for name, value in rows]
        header = f"method={self.method} budget_rate={self.budget_rate} trials={self.trials}"
        return "\n".join([header, *lines]) + "\n"


def run_trials(
    clean: Graph,
    perturbed: Graph,
    victim_config: TrainConfig | None = None,
    trials: int = 10,
    seed: int = 0,
    method: str = "",
    budget_rate: float = 0.0,
) -> EvalReport:
    """Retrain the victim ``trials`` times on each graph and report stats.

    Trials are paired: trial t uses seed ``seed + t`` on both graphs, so an
    identity perturbation reproduces the clean column exactly. Std is the
    sample standard deviation (ddof=1), hence the ``trials >= 2`` floor.
    """
    check_graph(clean)
    check_graph(perturbed)
    if trials < 2:
        raise ValueError("trials must be at least 2 to report a std")
    if clean.num_nodes != perturbed.num_nodes:
        raise ValueError(
            f"node counts differ: clean {clean.num_nodes} vs perturbed {perturbed.num_nodes}"
        )
    config = victim_config if victim_config is not None else VICTIM_CONFIG

    clean_accs = []
    attacked_accs = []
    for t in range(trials):
        trial_config = replace(config, seed=seed + t)
        clean_accs.append(evaluate_accuracy(train_surrogate(clean, trial_config), clean))
        attacked_accs.append(
            evaluate_accuracy(train_surrogate(perturbed, trial_config), perturbed)
        )

    def stats(values):
        arr = np.asarray(values)
        return (float(arr.mean()), float(arr.std(ddof=1)))

    return EvalReport(
        method=method,
        budget_rate=budget_rate,
        trials=trials,
        clean_acc=stats(clean_accs),
        attacked_acc=stats(attacked_accs),
        clean_trials=[float(a) for a in clean_accs],
        attacked_trials=[float(a) for a in attacked_accs],
    )
