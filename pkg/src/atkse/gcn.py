"""Two-layer graph convolutional network with hand-derived gradients.

Forward map: P = softmax(S f(S X W0) W1) row-wise, where S is the
degree-normalized adjacency with self-loops and f the activation.
Both the weight gradients (for training) and the gradient of the
label log-likelihood with respect to every adjacency entry (for
structure attacks) are derived analytically. The adjacency gradient
differentiates through the degree normalization: each entry A[u, v]
enters S both directly and through node u's degree, and ignoring the
degree path leaves a gradient the finite-difference oracle rejects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrainingDivergedError
from .graph import Graph, check_graph, normalize_adjacency

ACTIVATIONS = ("relu", "tanh", "identity")


class GradientEvalCounter:
    """Counts adjacency-gradient evaluations, one per forward/backward pass.

    Attack-loop instrumentation resets this and compares against the
    expected per-iteration work bound.
    """

    def __init__(self):
        self.count = 0

    def increment(self):
        self.count += 1

    def reset(self):
        self.count = 0


GRADIENT_EVALS = GradientEvalCounter()


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for full-batch gradient-descent training.

    There is deliberately no validation split or early stopping: training
    runs for exactly ``epochs`` epochs so that held-out labels are never
    consulted before evaluation.
    """

    hidden_dim: int = 16
    activation: str = "relu"
    epochs: int = 200
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True)
class SurrogateParams:
    """Trained weight matrices of the two-layer GCN."""

    w0: np.ndarray
    w1: np.ndarray
    activation: str

    def __post_init__(self):
        w0 = np.array(self.w0, dtype=np.float64)
        w1 = np.array(self.w1, dtype=np.float64)
        if w0.ndim != 2 or w1.ndim != 2 or w0.shape[1] != w1.shape[0]:
            raise ValueError(f"inconsistent weight shapes {w0.shape} and {w1.shape}")
        if not (np.isfinite(w0).all() and np.isfinite(w1).all()):
            raise ValueError("weights contain non-finite entries")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        w0.setflags(write=False)
        w1.setflags(write=False)
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)

    @property
    def num_features(self) -> int:
        return self.w0.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w0.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w1.shape[1]


def _activation_fns(name):
    if name == "relu":
        # Subgradient at exactly 0 is fixed to 0 for determinism.
        return (lambda z: np.maximum(z, 0.0)), (lambda z: (z > 0.0).astype(np.float64))
    if name == "tanh":
        return np.tanh, (lambda z: 1.0 - np.tanh(z) ** 2)
    if name == "identity":
        return (lambda z: z), (lambda z: np.ones_like(z))
    raise ValueError(f"unknown activation {name!r}")


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


def _check_dims(params: SurrogateParams, A: np.ndarray, X: np.ndarray):
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    if X.ndim != 2 or X.shape[0] != A.shape[0]:
        raise ValueError("features must have one row per node")
    if X.shape[1] != params.num_features:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match parameters ({params.num_features})"
        )
    return A, X


def fit_gcn(graph: Graph, config: TrainConfig):
    """Train the GCN, returning (params, per-epoch objective values).

    Full-batch gradient descent with classical momentum and L2 weight
    decay, run for exactly ``config.epochs`` epochs. Weights start from a
    Glorot-style uniform draw scaled by ``init_scale`` and seeded by
    ``config.seed``; the whole loop is deterministic given the seed.
    The recorded objective is the train cross-entropy plus the decay
    penalty, i.e. the quantity the update actually descends.
    """
    check_graph(graph)
    train = graph.train_idx
    if train.size == 0:
        raise ValueError("training requires a nonempty train split")

    rng = np.random.default_rng(config.seed)
    n_feat = graph.num_features
    hidden = config.hidden_dim
    classes = graph.num_classes

    limit0 = config.init_scale * np.sqrt(6.0 / (n_feat + hidden))
    limit1 = config.init_scale * np.sqrt(6.0 / (hidden + classes))
    w0 = rng.uniform(-limit0, limit0, size=(n_feat, hidden))
    w1 = rng.uniform(-limit1, limit1, size=(hidden, classes))

    act, act_prime = _activation_fns(config.activation)
    S = normalize_adjacency(graph.adjacency)
    U = S @ graph.features  # adjacency is fixed during training
    y = graph.labels[train]
    m = train.size
    lr = config.learning_rate
    wd = config.weight_decay

    vel0 = np.zeros_like(w0)
    vel1 = np.zeros_like(w1)
    losses = np.empty(config.epochs)

    for epoch in range(config.epochs):
        # Divergence shows up as non-finite values; detected explicitly
        # below, so the intermediate overflow warnings are noise.
        with np.errstate(over="ignore", invalid="ignore"):
            Z1 = U @ w0
            H1 = act(Z1)
            V = S @ H1
            Z2 = V @ w1
            logp = _log_softmax(Z2)
            ce = -logp[train, y].mean()
            objective = ce + 0.5 * wd * (np.sum(w0 * w0) + np.sum(w1 * w1))
        if not np.isfinite(objective):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}; lower the learning rate"
            )
        losses[epoch] = objective

        # dCE/dZ2 is (P - onehot(y)) / m on train rows, zero elsewhere.
        G2 = np.zeros_like(Z2)
        G2[train] = np.exp(logp[train])
        G2[train, y] -= 1.0
        G2[train] /= m

        g_w1 = V.T @ G2 + wd * w1
        GV = G2 @ w1.T
        GH1 = S @ GV
        GZ1 = GH1 * act_prime(Z1)
        g_w0 = U.T @ GZ1 + wd * w0

        vel0 = config.momentum * vel0 + g_w0
        vel1 = config.momentum * vel1 + g_w1
        w0 = w0 - lr * vel0
        w1 = w1 - lr * vel1

    return SurrogateParams(w0=w0, w1=w1, activation=config.activation), losses


def train_surrogate(graph: Graph, config: TrainConfig) -> SurrogateParams:
    """Train the surrogate GCN on the graph's train split."""
    params, _ = fit_gcn(graph, config)
    return params


def forward(params: SurrogateParams, A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Per-node class probabilities. Fractional adjacency weights are fine."""
    A, X = _check_dims(params, A, X)
    S = normalize_adjacency(A)
    act, _ = _activation_fns(params.activation)
    H1 = act(S @ X @ params.w0)
    return _softmax(S @ H1 @ params.w1)


def attack_loss(probs: np.ndarray, labels: np.ndarray, node_set) -> float:
    """Mean log-probability of the true class over ``node_set``.

    Always <= 0, and 0 only for a perfect fit. The node set is sorted
    internally so the value is exactly invariant to its ordering.
    """
    idx = np.sort(np.asarray(node_set, dtype=np.int64).ravel())
    if idx.size == 0:
        raise ValueError("node_set must be nonempty")
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    with np.errstate(divide="ignore"):
        logs = np.log(probs[idx, labels[idx]])
    return float(logs.mean())


def _loss_at(params, A, X, labels, idx):
    """Mean true-class log-likelihood over idx, computed stably from logits."""
    S = normalize_adjacency(A)
    act, _ = _activation_fns(params.activation)
    H1 = act(S @ X @ params.w0)
    logp = _log_softmax(S @ H1 @ params.w1)
    return float(logp[idx, labels[idx]].mean())


def adjacency_gradient(params, A, X, labels, node_set) -> np.ndarray:
    """Gradient of :func:`attack_loss` with respect to every adjacency entry.

    Backpropagates through the full forward map, including the degree
    terms of the normalization. Entry (u, v) of the raw gradient treats
    A[u, v] as a free scalar (it contributes to S directly and through
    node u's degree); the result is then symmetrized as g + g^T so that
    the (u, v) entry measures a simultaneous change of both symmetric
    entries, matching what an undirected edge flip actually does and the
    convention of :func:`finite_diff_adjacency_gradient`.
    """
    A, X = _check_dims(params, A, X)
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.sort(np.asarray(node_set, dtype=np.int64).ravel())
    if idx.size == 0:
        raise ValueError("node_set must be nonempty")

    n = A.shape[0]
    deg = A.sum(axis=1) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    S = A * np.outer(inv_sqrt, inv_sqrt)
    np.fill_diagonal(S, 1.0 / deg)

    act, act_prime = _activation_fns(params.activation)
    U = S @ X
    Z1 = U @ params.w0
    H1 = act(Z1)
    V = S @ H1
    Z2 = V @ params.w1
    P = _softmax(Z2)

    # dL/dZ2 for L = mean log P(y): (onehot - P) / |idx| on selected rows.
    G2 = np.zeros_like(Z2)
    G2[idx] = -P[idx]
    G2[idx, labels[idx]] += 1.0
    G2[idx] /= idx.size

    GV = G2 @ params.w1.T
    GH1 = S @ GV  # S is symmetric
    GZ1 = GH1 * act_prime(Z1)
    GU = GZ1 @ params.w0.T
    GS = GV @ H1.T + GU @ X.T

    # dL/dA[u, v] = GS[u, v] / sqrt(d_u d_v) - (r_u + c_u) / (2 d_u),
    # the second term from A[u, v]'s contribution to node u's degree.
    weighted = GS * S
    row = weighted.sum(axis=1)
    col = weighted.sum(axis=0)
    grad = GS * np.outer(inv_sqrt, inv_sqrt) - ((row + col) / (2.0 * deg))[:, None]
    np.fill_diagonal(grad, 0.0)
    grad = grad + grad.T

    if not np.isfinite(grad).all():
        raise FloatingPointError("adjacency gradient has non-finite entries")
    GRADIENT_EVALS.increment()
    return grad


def finite_diff_adjacency_gradient(params, A, X, labels, node_set, h, entries):
    """Central-difference estimates of the symmetrized adjacency gradient.

    Each requested (u, v) is perturbed on both symmetric entries at once,
    so the estimate matches the g + g^T convention of
    :func:`adjacency_gradient` directly.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    if h < 1e-12:
        raise ValueError(f"step h={h} is below the underflow guard (1e-12)")
    A, X = _check_dims(params, A, X)
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.sort(np.asarray(node_set, dtype=np.int64).ravel())
    if idx.size == 0:
        raise ValueError("node_set must be nonempty")

    work = np.array(A)
    out = np.empty(len(entries))
    for k, (u, v) in enumerate(entries):
        if u == v:
            raise ValueError(f"diagonal entry ({u}, {v}) has no symmetric difference")
        base = work[u, v]
        work[u, v] = work[v, u] = base + h
        plus = _loss_at(params, work, X, labels, idx)
        work[u, v] = work[v, u] = base - h
        minus = _loss_at(params, work, X, labels, idx)
        work[u, v] = work[v, u] = base
        out[k] = (plus - minus) / (2.0 * h)
    return out


def _hidden_preactivation(params, A, X):
    S = normalize_adjacency(A)
    return S @ X @ params.w0


def _crosses_relu_kink(params, A, X, u, v, h):
    """True if nudging (u, v) by +-h flips any hidden ReLU sign pattern."""
    work = np.array(A)
    base = work[u, v]
    work[u, v] = work[v, u] = base + h
    plus = _hidden_preactivation(params, work, X) > 0.0
    work[u, v] = work[v, u] = base - h
    minus = _hidden_preactivation(params, work, X) > 0.0
    return bool(np.any(plus != minus))


def gradient_check(
    graph: Graph,
    config: TrainConfig,
    num_entries: int = 50,
    step: float = 1e-4,
    tolerance: float = 1e-3,
    seed: int = 0,
    corrupt: bool = False,
) -> dict:
    """Compare the analytic adjacency gradient against central differences.

    Samples ``num_entries`` distinct off-diagonal pairs uniformly. For the
    ReLU activation, pairs whose +-h nudge crosses an activation kink are
    resampled (the two-sided difference is not a derivative estimate
    there); smooth activations are checked unconditionally. ``corrupt``
    offsets the analytic gradient and is a negative-control hook.

    Returns a report dict with the max relative error and pass verdict.
    """
    from .util import substream

    if num_entries < 1:
        raise ValueError("num_entries must be positive")
    check_graph(graph)
    params = train_surrogate(graph, config)
    A = graph.adjacency
    X = graph.features
    analytic = adjacency_gradient(params, A, X, graph.labels, graph.train_idx)
    if corrupt:
        analytic = analytic + 1.0

    n = graph.num_nodes
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    rng = substream(seed, "gradcheck")
    order = rng.permutation(len(pairs))

    chosen = []
    skipped = 0
    needs_kink_screen = config.activation == "relu"
    for pos in order:
        u, v = pairs[pos]
        if needs_kink_screen and _crosses_relu_kink(params, A, X, u, v, step):
            skipped += 1
            continue
        chosen.append((u, v))
        if len(chosen) == min(num_entries, len(pairs)):
            break
    if not chosen:
        raise RuntimeError("every sampled entry sat on an activation kink")

    fd = finite_diff_adjacency_gradient(
        params, A, X, graph.labels, graph.train_idx, step, chosen
    )
    exact = np.array([analytic[u, v] for u, v in chosen])
    rel = np.abs(exact - fd) / np.maximum(np.abs(exact), 1e-8)
    worst = int(np.argmax(rel))
    return {
        "activation": config.activation,
        "entries_checked": len(chosen),
        "entries_resampled": skipped,
        "step": step,
        "tolerance": tolerance,
        "max_rel_error": float(rel[worst]),
        "worst_entry": [int(chosen[worst][0]), int(chosen[worst][1])],
        "passed": bool(rel[worst] < tolerance),
    }


def save_params(params: SurrogateParams, path, seed: int | None = None) -> None:
    """Checkpoint weights as JSON; floats round-trip exactly via repr."""
    payload = {
        "format": "gcn-params-v1",
        "dims": [params.num_features, params.hidden_dim, params.num_classes],
        "activation": params.activation,
        "seed": seed,
        "w0": [[float(x) for x in row] for row in params.w0],
        "w1": [[float(x) for x in row] for row in params.w1],
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_params(path) -> SurrogateParams:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "gcn-params-v1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    params = SurrogateParams(
        w0=np.array(payload["w0"], dtype=np.float64),
        w1=np.array(payload["w1"], dtype=np.float64),
        activation=payload["activation"],
    )
    dims = [params.num_features, params.hidden_dim, params.num_classes]
    if dims != list(payload["dims"]):
        raise ValueError(f"checkpoint dims {payload['dims']} do not match arrays {dims}")
    return params
