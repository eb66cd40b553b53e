"""Scikit-learn style estimators wrapping the functional core.

``GCNClassifier`` is a fit/predict classifier over :class:`atkse.graph.Graph`
inputs; the attackers are fit/transform transformers whose ``fit`` computes
a perturbation plan on the given graph and whose ``transform`` applies the
recorded flips. All of them follow the sklearn parameter conventions
(constructor arguments stored verbatim, fitted state in trailing-underscore
attributes), so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .attack import AttackConfig, reduction_config, run_atkse
from .baselines import dice_attack, dice_label_vector, random_attack
from .evaluation import evaluate_accuracy
from .gcn import TrainConfig, adjacency_gradient, forward
from .graph import Graph, check_graph, edge_budget, flip_edge
from .util import substream


class GCNClassifier(BaseEstimator):
    """Two-layer graph convolutional classifier.

    Parameters
    ----------
    hidden_dim : int
        Width of the hidden layer.
    activation : {'relu', 'tanh', 'identity'}
        Hidden-layer nonlinearity.
    epochs : int
        Number of full-batch gradient-descent epochs (no early stopping).
    learning_rate, momentum, weight_decay : float
        Optimizer settings.
    init_scale : float
        Multiplier on the Glorot-uniform initialization limits.
    seed : int
        Seed for weight initialization; training is deterministic given it.
    """

    def __init__(
        self,
        hidden_dim=16,
        activation="relu",
        epochs=200,
        learning_rate=0.01,
        momentum=0.9,
        weight_decay=5e-4,
        init_scale=1.0,
        seed=0,
    ):
        self.hidden_dim = hidden_dim
        self.activation = activation
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.init_scale = init_scale
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden_dim=self.hidden_dim,
            activation=self.activation,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            init_scale=self.init_scale,
            seed=self.seed,
        )

    def fit(self, graph: Graph, y=None):
        """Train on the graph's train split. ``y`` is ignored; labels live
        on the graph."""
        check_graph(graph)
        from .gcn import fit_gcn

        self.params_, losses = fit_gcn(graph, self._config())
        self.loss_history_ = losses
        self.classes_ = np.arange(graph.num_classes)
        return self

    def predict_proba(self, graph: Graph) -> np.ndarray:
        check_is_fitted(self, "params_")
        check_graph(graph)
        return forward(self.params_, graph.adjacency, graph.features)

    def predict(self, graph: Graph) -> np.ndarray:
        return self.predict_proba(graph).argmax(axis=1)

    def score(self, graph: Graph, y=None) -> float:
        """Accuracy on the graph's test split."""
        check_is_fitted(self, "params_")
        return evaluate_accuracy(self.params_, graph)

    def adjacency_gradient(self, graph: Graph) -> np.ndarray:
        """Symmetrized gradient of the train-node log-likelihood w.r.t.
        every adjacency entry."""
        check_is_fitted(self, "params_")
        check_graph(graph)
        return adjacency_gradient(
            self.params_, graph.adjacency, graph.features, graph.labels, graph.train_idx
        )


class _BaseAttack(BaseEstimator, TransformerMixin):
    """Shared fit/transform plumbing for the attack transformers."""

    def fit(self, graph: Graph, y=None):
        check_graph(graph)
        budget = edge_budget(graph, self.budget_rate)
        self.graph_, self.log_ = self._run(graph, budget)
        self.budget_ = budget
        return self

    def transform(self, graph: Graph) -> Graph:
        """Apply the fitted flip sequence to ``graph``."""
        check_is_fitted(self, "log_")
        check_graph(graph)
        if graph.num_nodes != self.graph_.num_nodes:
            raise ValueError(
                f"graph has {graph.num_nodes} nodes, attack was fitted on "
                f"{self.graph_.num_nodes}"
            )
        A = np.array(graph.adjacency)
        for u, v in self.log_.pairs():
            A = flip_edge(A, u, v)
        return graph.with_adjacency(A)

    def _run(self, graph, budget):
        raise NotImplementedError


class AtkSEAttack(_BaseAttack):
    """Error-shrinking gradient attack on the graph structure.

    Parameters
    ----------
    budget_rate : float
        Fraction of the original edge count allowed as flips.
    sampling_interval : float
        Transitional-weight spacing for edge discrete sampling; 1/value
        must be an integer.
    num_candidates, batch_size : int
        Candidate-set size and how many candidates share one sampling pass.
    momentum : float
        Coefficient folding previous iterations' gradients into the
        current one.
    si_samples : int
        Feature-noise draws averaged per iteration.
    si_sigma : float
        Standard deviation of the feature noise.
    seed : int
        Master seed; surrogate retraining at iteration t uses
        ``surrogate.seed + t``.
    surrogate : TrainConfig or None
        Surrogate training configuration (defaults to the standard one).
    """

    def __init__(
        self,
        budget_rate=0.05,
        sampling_interval=0.2,
        num_candidates=64,
        batch_size=16,
        momentum=0.8,
        si_samples=5,
        si_sigma=5e-4,
        seed=0,
        surrogate=None,
    ):
        self.budget_rate = budget_rate
        self.sampling_interval = sampling_interval
        self.num_candidates = num_candidates
        self.batch_size = batch_size
        self.momentum = momentum
        self.si_samples = si_samples
        self.si_sigma = si_sigma
        self.seed = seed
        self.surrogate = surrogate

    def _run(self, graph, budget):
        config = AttackConfig(
            budget=budget,
            lam=self.sampling_interval,
            num_candidates=self.num_candidates,
            batch_size=self.batch_size,
            momentum=self.momentum,
            si_samples=self.si_samples,
            si_sigma=self.si_sigma,
            seed=self.seed,
        )
        train_config = self.surrogate if self.surrogate is not None else TrainConfig()
        return run_atkse(graph, config, train_config)


class GreedyGradientAttack(_BaseAttack):
    """Plain greedy saliency attack: the degenerate configuration of
    :class:`AtkSEAttack` with one candidate, one sampling step, no momentum
    and no noise averaging."""

    def __init__(self, budget_rate=0.05, seed=0, surrogate=None):
        self.budget_rate = budget_rate
        self.seed = seed
        self.surrogate = surrogate

    def _run(self, graph, budget):
        train_config = self.surrogate if self.surrogate is not None else TrainConfig()
        return run_atkse(graph, reduction_config(budget, seed=self.seed), train_config)


class RandomAttack(_BaseAttack):
    """Uniformly random distinct pair flips."""

    def __init__(self, budget_rate=0.05, seed=0):
        self.budget_rate = budget_rate
        self.seed = seed

    def _run(self, graph, budget):
        return random_attack(graph, budget, substream(self.seed, "baseline"), seed=self.seed)


class DiceAttack(_BaseAttack):
    """Delete same-class edges / add cross-class edges using the labels a
    gray-box attacker holds (train labels plus surrogate predictions)."""

    def __init__(self, budget_rate=0.05, seed=0, surrogate=None):
        self.budget_rate = budget_rate
        self.seed = seed
        self.surrogate = surrogate

    def _run(self, graph, budget):
        train_config = self.surrogate if self.surrogate is not None else TrainConfig()
        labels = dice_label_vector(graph, train_config)
        return dice_attack(
            graph, budget, substream(self.seed, "baseline"), labels=labels, seed=self.seed
        )
