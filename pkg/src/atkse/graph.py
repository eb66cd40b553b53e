"""Graph container, bundle serialization, normalization and synthetic graphs.

A graph bundle is a directory of five files: ``meta.json`` with
``num_nodes``/``num_features``/``num_classes``, ``edges.tsv`` with one
``u<TAB>v`` line per undirected edge (0-based ids, written with u < v),
``features.tsv`` with one tab-separated row of reals per node,
``labels.tsv`` with ``node_id<TAB>class`` lines, and ``split.json`` with
``train``/``test`` id lists.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BudgetError, BundleError

META_FILE = "meta.json"
EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.tsv"
LABELS_FILE = "labels.tsv"
SPLIT_FILE = "split.json"


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph with a fixed train/test node split.

    The adjacency matrix is dense, symmetric, zero on the diagonal, with
    weights in [0, 1]. Weights other than 0/1 only ever appear on working
    copies during transitional edge sampling, never on a stored Graph.
    Instances are immutable: arrays are marked read-only and edits go
    through :func:`flip_edge`, which returns a fresh matrix.
    """

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=np.float64)
        feats = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).ravel()
        train = np.unique(np.array(self.train_idx, dtype=np.int64).ravel())
        test = np.unique(np.array(self.test_idx, dtype=np.int64).ravel())

        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        n = adj.shape[0]
        if not np.isfinite(adj).all():
            raise ValueError("adjacency contains non-finite entries")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diagonal(adj) != 0.0):
            raise ValueError("adjacency diagonal must be zero (no self-loops)")
        if adj.min(initial=0.0) < 0.0 or adj.max(initial=0.0) > 1.0:
            raise ValueError("adjacency weights must lie in [0, 1]")
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError("features must have one row per node")
        if not np.isfinite(feats).all():
            raise ValueError("features contain non-finite entries")
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per node")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("label out of class range")
        if np.intersect1d(train, test).size:
            raise ValueError("train and test splits overlap")
        if not np.array_equal(np.union1d(train, test), np.arange(n)):
            raise ValueError("train and test splits must partition all nodes")

        for arr in (adj, feats, labels, train, test):
            arr.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "train_idx", train)
        object.__setattr__(self, "test_idx", test)

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges (nonzero upper-triangular entries)."""
        return int(np.count_nonzero(np.triu(self.adjacency, k=1)))

    def with_adjacency(self, adjacency: np.ndarray) -> "Graph":
        """Return a copy of this graph with a replacement adjacency matrix."""
        return replace(self, adjacency=adjacency)

    def equals(self, other: "Graph") -> bool:
        return (
            np.array_equal(self.adjacency, other.adjacency)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.num_classes == other.num_classes
            and np.array_equal(self.train_idx, other.train_idx)
            and np.array_equal(self.test_idx, other.test_idx)
        )


@dataclass(frozen=True)
class Budget:
    """Perturbation budget: ``delta`` undirected edge flips at rate ``rate``."""

    delta: int
    rate: float

    def __post_init__(self):
        if self.delta < 1:
            raise BudgetError(f"budget must allow at least one flip, got {self.delta}")


def check_graph(graph) -> Graph:
    """Input-validation helper: reject anything that is not a Graph."""
    if not isinstance(graph, Graph):
        raise TypeError(f"expected a Graph, got {type(graph).__name__}")
    return graph


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Degree-normalized adjacency with implicit self-loops.

    Every node gets a self-loop before normalization; the returned matrix
    is D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. The
    construction is differentiable in every input entry, which the
    adjacency-gradient code relies on. Callers must pass a symmetric,
    nonnegative, zero-diagonal matrix; this is not re-checked here because
    the function sits on hot paths.
    """
    A = np.asarray(adjacency, dtype=np.float64)
    deg = A.sum(axis=1) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    S = A * np.outer(inv_sqrt, inv_sqrt)
    np.fill_diagonal(S, 1.0 / deg)
    return S


def flip_edge(adjacency: np.ndarray, u: int, v: int) -> np.ndarray:
    """Toggle the undirected edge (u, v), returning a new matrix."""
    A = np.asarray(adjacency)
    n = A.shape[0]
    if u == v:
        raise ValueError("self-loops cannot be flipped")
    if not (0 <= u < n and 0 <= v < n):
        raise ValueError(f"node id out of range: ({u}, {v}) for {n} nodes")
    value = A[u, v]
    if value not in (0.0, 1.0):
        raise ValueError(f"edge ({u}, {v}) has transitional weight {value}, cannot flip")
    out = np.array(A, dtype=np.float64)
    out[u, v] = 1.0 - value
    out[v, u] = 1.0 - value
    return out


def edge_budget(graph: Graph, rate: float) -> Budget:
    """Budget for a perturbation rate: floor(rate * edge count) flips."""
    check_graph(graph)
    if not 0.0 < rate <= 1.0:
        raise BudgetError(f"perturbation rate must be in (0, 1], got {rate}")
    edges = graph.num_edges
    if edges == 0:
        raise BudgetError("graph has no edges to budget against")
    delta = math.floor(rate * edges)
    if delta < 1:
        raise BudgetError(
            f"budget rounds to zero ({edges} edges at rate {rate})"
        )
    return Budget(delta=delta, rate=float(rate))


def generate_sbm(
    num_nodes: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    num_features: int,
    feature_shift: float,
    seed: int,
) -> Graph:
    """Sample a stochastic block model graph with class-informative features.

    Nodes are split into equal-size contiguous blocks, one per class.
    Edges appear independently with probability ``p_in`` inside a block and
    ``p_out`` across blocks. Features are standard normal with the class
    mean shifted by ``feature_shift`` on a per-class slice of coordinates,
    so both the structure and the attributes carry label signal. The split
    is stratified: 10% of each class (at least one node) is train, the rest
    test.
    """
    if num_nodes < 1 or num_classes < 1:
        raise ValueError("num_nodes and num_classes must be positive")
    if num_nodes % num_classes != 0:
        raise ValueError(
            f"num_nodes ({num_nodes}) must be divisible by num_classes ({num_classes})"
        )
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if num_features < 1:
        raise ValueError("num_features must be positive")

    rng = np.random.default_rng(seed)
    block = num_nodes // num_classes
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), block)

    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    draws = rng.random((num_nodes, num_nodes))
    upper = np.triu(draws < probs, k=1)
    adjacency = (upper | upper.T).astype(np.float64)

    features = rng.standard_normal((num_nodes, num_features))
    coords_per_class = num_features // num_classes
    if coords_per_class:
        for cls in range(num_classes):
            cols = slice(cls * coords_per_class, (cls + 1) * coords_per_class)
            features[labels == cls, cols] += feature_shift

    train_ids = []
    for cls in range(num_classes):
        members = np.flatnonzero(labels == cls)
        members = rng.permutation(members)
        take = max(1, int(round(0.1 * members.size)))
        train_ids.extend(int(i) for i in members[:take])
    train = np.array(sorted(train_ids), dtype=np.int64)
    test = np.setdiff1d(np.arange(num_nodes), train)

    return Graph(
        adjacency=adjacency,
        features=features,
        labels=labels,
        num_classes=num_classes,
        train_idx=train,
        test_idx=test,
    )


def save_graph_bundle(graph: Graph, path) -> None:
    """Write a graph bundle directory (see module docstring for the layout)."""
    check_graph(graph)
    if not np.isin(graph.adjacency, (0.0, 1.0)).all():
        raise ValueError("bundles store binary graphs; adjacency has transitional weights")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    meta = {
        "num_nodes": graph.num_nodes,
        "num_features": graph.num_features,
        "num_classes": graph.num_classes,
    }
    (out / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    edges = np.argwhere(np.triu(graph.adjacency, k=1) > 0)
    lines = [f"{int(u)}\t{int(v)}" for u, v in edges]
    (out / EDGES_FILE).write_text("\n".join(lines) + ("\n" if lines else ""))

    rows = ["\t".join(str(float(x)) for x in row) for row in graph.features]
    (out / FEATURES_FILE).write_text("\n".join(rows) + "\n")

    labels = [f"{i}\t{int(lab)}" for i, lab in enumerate(graph.labels)]
    (out / LABELS_FILE).write_text("\n".join(labels) + "\n")

    split = {
        "train": [int(i) for i in graph.train_idx],
        "test": [int(i) for i in graph.test_idx],
    }
    (out / SPLIT_FILE).write_text(json.dumps(split, indent=2, sort_keys=True) + "\n")


def load_graph_bundle(path) -> Graph:
    """Read a graph bundle directory back into a Graph.

    Edge lines are accepted in either orientation and stored symmetrically.
    Raises BundleError on missing files, ids out of range, self-loop edges,
    labels outside the class range, or a malformed split.
    """
    root = Path(path)
    for name in (META_FILE, EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLIT_FILE):
        if not (root / name).is_file():
            raise BundleError(f"bundle is missing {name} in {root}")

    try:
        meta = json.loads((root / META_FILE).read_text())
        num_nodes = int(meta["num_nodes"])
        num_features = int(meta["num_features"])
        num_classes = int(meta["num_classes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"malformed {META_FILE}: {exc}") from exc

    adjacency = np.zeros((num_nodes, num_nodes), dtype=np.float64)
    for lineno, line in enumerate(_lines(root / EDGES_FILE), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise BundleError(f"{EDGES_FILE}:{lineno}: expected 'u<TAB>v', got {line!r}")
        u, v = (int(p) for p in parts)
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise BundleError(f"{EDGES_FILE}:{lineno}: node id out of range: ({u}, {v})")
        if u == v:
            raise BundleError(f"{EDGES_FILE}:{lineno}: self-loop ({u}, {v}) rejected")
        adjacency[u, v] = 1.0
        adjacency[v, u] = 1.0

    feature_rows = _lines(root / FEATURES_FILE)
    if len(feature_rows) != num_nodes:
        raise BundleError(
            f"{FEATURES_FILE}: expected {num_nodes} rows, found {len(feature_rows)}"
        )
    features = np.empty((num_nodes, num_features), dtype=np.float64)
    for i, row in enumerate(feature_rows):
        parts = row.split("\t")
        if len(parts) != num_features:
            raise BundleError(
                f"{FEATURES_FILE}:{i + 1}: expected {num_features} columns, found {len(parts)}"
            )
        try:
            features[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise BundleError(f"{FEATURES_FILE}:{i + 1}: {exc}") from exc

    labels = np.full(num_nodes, -1, dtype=np.int64)
    for lineno, line in enumerate(_lines(root / LABELS_FILE), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise BundleError(f"{LABELS_FILE}:{lineno}: expected 'node_id<TAB>class'")
        node, cls = (int(p) for p in parts)
        if not 0 <= node < num_nodes:
            raise BundleError(f"{LABELS_FILE}:{lineno}: node id out of range: {node}")
        if not 0 <= cls < num_classes:
            raise BundleError(f"{LABELS_FILE}:{lineno}: label out of class range: {cls}")
        if labels[node] != -1:
            raise BundleError(f"{LABELS_FILE}:{lineno}: node {node} labeled twice")
        labels[node] = cls
    if (labels < 0).any():
        missing = int(np.flatnonzero(labels < 0)[0])
        raise BundleError(f"{LABELS_FILE}: node {missing} has no label")

    try:
        split = json.loads((root / SPLIT_FILE).read_text())
        train = [int(i) for i in split["train"]]
        test = [int(i) for i in split["test"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"malformed {SPLIT_FILE}: {exc}") from exc

    try:
        return Graph(
            adjacency=adjacency,
            features=features,
            labels=labels,
            num_classes=num_classes,
            train_idx=np.array(train, dtype=np.int64),
            test_idx=np.array(test, dtype=np.int64),
        )
    except ValueError as exc:
        raise BundleError(f"bundle violates graph invariants: {exc}") from exc


def _lines(path: Path) -> list[str]:
    return [ln for ln in path.read_text().splitlines() if ln.strip()]
