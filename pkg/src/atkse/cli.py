"""Command-line front end.

Commands: gen-sbm, attack, eval, gradcheck, trace. Every run resolves its
configuration as defaults < --config JSON < explicit flags, writes one
manifest.json next to its outputs, and is byte-reproducible for identical
flags and inputs (manifests may differ only in the timestamp field).

Exit codes: 0 success, 1 runtime or tolerance failure, 2 usage error,
3 infeasible configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .attack import (
    AttackConfig,
    reduction_config,
    retrain_ensemble_gradient,
    run_atkse,
    semantic_invariant_gradient,
)
from .baselines import dice_attack, dice_label_vector, random_attack
from .errors import BudgetError, BundleError, DegenerateGradientError, TrainingDivergedError
from .evaluation import run_trials
from .gcn import TrainConfig, adjacency_gradient, gradient_check, train_surrogate
from .graph import edge_budget, generate_sbm, load_graph_bundle, save_graph_bundle
from .util import format_real, substream


class UsageError(Exception):
    """Bad flag values; maps to exit code 2."""


class InfeasibleError(Exception):
    """Structurally impossible request (not a syntax problem); exit code 3."""


_SURROGATE_DEFAULTS = {
    "hidden_dim": 16,
    "activation": "relu",
    "epochs": 200,
    "learning_rate": 0.01,
    "train_momentum": 0.9,
    "weight_decay": 5e-4,
    "init_scale": 1.0,
}

_VICTIM_DEFAULTS = {**_SURROGATE_DEFAULTS, "hidden_dim": 32, "activation": "tanh"}

_DEFAULTS = {
    "gen-sbm": {
        "nodes": 100,
        "classes": 2,
        "p_in": 0.1,
        "p_out": 0.01,
        "features": 20,
        "shift": 0.5,
        "seed": 0,
        "threads": 1,
    },
    "attack": {
        "method": "atkse",
        "budget_rate": 0.05,
        "lambda": 0.2,
        "candidates": 64,
        "batch": 16,
        "momentum": 0.8,
        "si_samples": 5,
        "si_sigma": 5e-4,
        "seed": 0,
        "threads": 1,
        **_SURROGATE_DEFAULTS,
    },
    "eval": {
        "trials": 10,
        "budget_rate": 0.05,
        "method": "",
        "seed": 0,
        "threads": 1,
        **_VICTIM_DEFAULTS,
    },
    "gradcheck": {
        "entries": 50,
        "step": 1e-4,
        "tolerance": 1e-3,
        "seed": 0,
        "corrupt": False,
        "threads": 1,
        **_SURROGATE_DEFAULTS,
    },
    "trace": {
        "step": 0.02,
        "k": 8,
        "sigma_max": 0.01,
        "sigma_steps": 11,
        "si_samples": 1,
        "seed": 0,
        "threads": 1,
        **_SURROGATE_DEFAULTS,
    },
}


def _add_surrogate_flags(sub, prefix="surrogate"):
    sub.add_argument("--hidden-dim", type=int, help=f"{prefix} hidden width")
    sub.add_argument("--activation", choices=("relu", "tanh", "identity"))
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--learning-rate", type=float)
    sub.add_argument("--train-momentum", type=float, help="optimizer momentum")
    sub.add_argument("--weight-decay", type=float)
    sub.add_argument("--init-scale", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atkse",
        description="Edge-perturbation poisoning attacks on GCN node classifiers.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    common = dict(type=str, help="JSON file merged under explicit flags")

    gen = subs.add_parser("gen-sbm", help="generate a stochastic block model bundle")
    gen.add_argument("--nodes", type=int)
    gen.add_argument("--classes", type=int)
    gen.add_argument("--p-in", type=float)
    gen.add_argument("--p-out", type=float)
    gen.add_argument("--features", type=int)
    gen.add_argument("--shift", type=float)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--threads", type=int)
    gen.add_argument("--config", **common)
    gen.add_argument("--out", required=True, help="output bundle directory")
    gen.set_defaults(handler=cmd_gen_sbm)

    atk = subs.add_parser("attack", help="perturb a graph bundle")
    atk.add_argument("--graph", required=True, help="input bundle directory")
    atk.add_argument("--method", choices=("atkse", "random", "dice", "greedy"))
    atk.add_argument("--budget-rate", type=float)
    atk.add_argument("--lambda", dest="lambda_", type=float, help="sampling interval")
    atk.add_argument("--candidates", type=int)
    atk.add_argument("--batch", type=int)
    atk.add_argument("--momentum", type=float, help="gradient ensemble momentum")
    atk.add_argument("--si-samples", type=int)
    atk.add_argument("--si-sigma", type=float)
    atk.add_argument("--seed", type=int)
    atk.add_argument("--threads", type=int)
    _add_surrogate_flags(atk)
    atk.add_argument("--config", **common)
    atk.add_argument("--out", required=True)
    atk.set_defaults(handler=cmd_attack)

    ev = subs.add_parser("eval", help="victim retraining trials, clean vs perturbed")
    ev.add_argument("--clean", required=True)
    ev.add_argument("--perturbed", required=True)
    ev.add_argument("--trials", type=int)
    ev.add_argument("--budget-rate", type=float, help="echoed into the report")
    ev.add_argument("--method", type=str, help="echoed into the report")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--threads", type=int)
    _add_surrogate_flags(ev, prefix="victim")
    ev.add_argument("--config", **common)
    ev.add_argument("--out", required=True)
    ev.set_defaults(handler=cmd_eval)

    gc = subs.add_parser("gradcheck", help="analytic vs finite-difference gradient check")
    gc.add_argument("--graph", required=True)
    gc.add_argument("--entries", type=int)
    gc.add_argument("--step", type=float)
    gc.add_argument("--tolerance", type=float)
    gc.add_argument("--seed", type=int)
    gc.add_argument("--threads", type=int)
    gc.add_argument("--corrupt", action="store_true", default=None, help=argparse.SUPPRESS)
    _add_surrogate_flags(gc)
    gc.add_argument("--config", **common)
    gc.add_argument("--out", help="optional report directory")
    gc.set_defaults(handler=cmd_gradcheck)

    tr = subs.add_parser("trace", help="diagnostic TSV series")
    tr.add_argument("--graph", required=True)
    tr.add_argument("--kind", required=True, choices=("edge-interval", "retrain-hist", "noise-sweep"))
    tr.add_argument("--edge", nargs=2, type=int, required=True, metavar=("U", "V"))
    tr.add_argument("--step", type=float, help="edge-interval grid spacing")
    tr.add_argument("--k", type=int, help="retrain-hist run count")
    tr.add_argument("--sigma-max", type=float)
    tr.add_argument("--sigma-steps", type=int)
    tr.add_argument("--si-samples", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--threads", type=int)
    _add_surrogate_flags(tr)
    tr.add_argument("--config", **common)
    tr.add_argument("--out", required=True)
    tr.set_defaults(handler=cmd_trace)

    return parser


def _resolve(ns: argparse.Namespace, command: str) -> dict:
    """Layer configuration: defaults < --config file < explicit flags."""
    defaults = _DEFAULTS[command]
    file_cfg = {}
    if getattr(ns, "config", None):
        try:
            file_cfg = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config file: {exc}") from exc
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown keys in --config: {sorted(unknown)}")
    explicit = {}
    for key in defaults:
        attr = "lambda_" if key == "lambda" else key
        value = getattr(ns, attr, None)
        if value is not None:
            explicit[key] = value
    resolved = {**defaults, **file_cfg, **explicit}
    if resolved.get("threads", 1) < 1:
        raise UsageError("--threads must be at least 1")
    if resolved.get("seed", 0) < 0:
        raise UsageError("--seed must be non-negative")
    return resolved


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    try:
        return TrainConfig(
            hidden_dim=cfg["hidden_dim"],
            activation=cfg["activation"],
            epochs=cfg["epochs"],
            learning_rate=cfg["learning_rate"],
            momentum=cfg["train_momentum"],
            weight_decay=cfg["weight_decay"],
            init_scale=cfg["init_scale"],
            seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_manifest(out_dir: Path, command: str, cfg: dict, inputs: dict, outputs: list[str]):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.get("seed"),
        "config": cfg,
        "inputs": inputs,
        "outputs": outputs,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_sbm(ns) -> int:
    cfg = _resolve(ns, "gen-sbm")
    try:
        graph = generate_sbm(
            num_nodes=cfg["nodes"],
            num_classes=cfg["classes"],
            p_in=cfg["p_in"],
            p_out=cfg["p_out"],
            num_features=cfg["features"],
            feature_shift=cfg["shift"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _outdir(ns.out)
    save_graph_bundle(graph, out)
    _write_manifest(out, "gen-sbm", cfg, inputs={}, outputs=["meta.json", "edges.tsv",
                    "features.tsv", "labels.tsv", "split.json"])
    print(f"wrote bundle with {graph.num_nodes} nodes, {graph.num_edges} edges to {out}")
    return 0


def cmd_attack(ns) -> int:
    cfg = _resolve(ns, "attack")
    graph = load_graph_bundle(ns.graph)
    budget = edge_budget(graph, cfg["budget_rate"])
    train_config = _train_config(cfg, cfg["seed"])
    method = cfg["method"]
    out = _outdir(ns.out)

    try:
        if method == "atkse":
            attack_config = AttackConfig(
                budget=budget,
                lam=cfg["lambda"],
                num_candidates=cfg["candidates"],
                batch_size=cfg["batch"],
                momentum=cfg["momentum"],
                si_samples=cfg["si_samples"],
                si_sigma=cfg["si_sigma"],
                seed=cfg["seed"],
            )
            perturbed, log = run_atkse(graph, attack_config, train_config)
        elif method == "greedy":
            perturbed, log = run_atkse(graph, reduction_config(budget, cfg["seed"]), train_config)
        elif method == "random":
            perturbed, log = random_attack(
                graph, budget, substream(cfg["seed"], "baseline"), seed=cfg["seed"]
            )
        elif method == "dice":
            labels = dice_label_vector(graph, train_config)
            perturbed, log = dice_attack(
                graph, budget, substream(cfg["seed"], "baseline"), labels=labels, seed=cfg["seed"]
            )
        else:  # pragma: no cover - argparse restricts choices
            raise UsageError(f"unknown method {method}")
    except DegenerateGradientError as exc:
        if exc.partial_log is not None:
            exc.partial_log.write(out / "log.jsonl")
        print(f"attack aborted: {exc}", file=sys.stderr)
        return 1

    save_graph_bundle(perturbed, out)
    log.write(out / "log.jsonl")
    _write_manifest(out, "attack", cfg, inputs={"graph": str(ns.graph)},
                    outputs=["meta.json", "edges.tsv", "features.tsv", "labels.tsv",
                             "split.json", "log.jsonl"])
    print(f"{method}: {budget.delta} flips written to {out}")
    return 0


def cmd_eval(ns) -> int:
    cfg = _resolve(ns, "eval")
    if cfg["trials"] < 2:
        raise UsageError("--trials must be at least 2 to report a std")
    clean = load_graph_bundle(ns.clean)
    perturbed = load_graph_bundle(ns.perturbed)
    if clean.num_nodes != perturbed.num_nodes:
        raise InfeasibleError(
            f"bundles disagree on node count: {clean.num_nodes} vs {perturbed.num_nodes}"
        )
    victim = _train_config(cfg, cfg["seed"])
    report = run_trials(
        clean,
        perturbed,
        victim_config=victim,
        trials=cfg["trials"],
        seed=cfg["seed"],
        method=cfg["method"],
        budget_rate=cfg["budget_rate"],
    )
    out = _outdir(ns.out)
    report.write(out / "report.json")
    (out / "report.txt").write_text(report.format_table())
    _write_manifest(out, "eval", cfg,
                    inputs={"clean": str(ns.clean), "perturbed": str(ns.perturbed)},
                    outputs=["report.json", "report.txt"])
    print(report.format_table(), end="")
    return 0


def cmd_gradcheck(ns) -> int:
    cfg = _resolve(ns, "gradcheck")
    if cfg["entries"] < 1:
        raise UsageError("--entries must be at least 1")
    if cfg["step"] <= 0 or cfg["tolerance"] <= 0:
        raise UsageError("--step and --tolerance must be positive")
    graph = load_graph_bundle(ns.graph)
    report = gradient_check(
        graph,
        _train_config(cfg, cfg["seed"]),
        num_entries=cfg["entries"],
        step=cfg["step"],
        tolerance=cfg["tolerance"],
        seed=cfg["seed"],
        corrupt=bool(cfg["corrupt"]),
    )
    verdict = "PASS" if report["passed"] else "FAIL"
    print(
        f"gradcheck {verdict}: max relative error {report['max_rel_error']:.3e} "
        f"over {report['entries_checked']} entries "
        f"(tolerance {report['tolerance']:g}, activation {report['activation']})"
    )
    if ns.out:
        out = _outdir(ns.out)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        _write_manifest(out, "gradcheck", cfg, inputs={"graph": str(ns.graph)},
                        outputs=["report.json"])
    return 0 if report["passed"] else 1


def _trace_rows(ns, cfg, graph):
    u, v = (int(x) for x in ns.edge)
    n = graph.num_nodes
    if not (0 <= u < n and 0 <= v < n) or u == v:
        raise UsageError(f"unknown edge ({u}, {v}) for a graph of {n} nodes")
    train_config = _train_config(cfg, cfg["seed"])

    if ns.kind == "edge-interval":
        step = cfg["step"]
        count = round(1.0 / step)
        if step <= 0 or abs(count - 1.0 / step) > 1e-9:
            raise UsageError(f"--step must divide 1 evenly, got {step}")
        params = train_surrogate(graph, train_config)
        work = np.array(graph.adjacency)
        rows = []
        for s in range(count + 1):
            weight = min(s * step, 1.0)
            work[u, v] = work[v, u] = weight
            grad = adjacency_gradient(params, work, graph.features, graph.labels, graph.train_idx)
            rows.append((weight, grad[u, v]))
        return ("weight", "gradient"), rows

    if ns.kind == "retrain-hist":
        if cfg["k"] < 1:
            raise UsageError("--k must be at least 1")
        _, runs = retrain_ensemble_gradient(graph, train_config, cfg["k"])
        rows = [(train_config.seed + i, grad[u, v]) for i, grad in enumerate(runs)]
        return ("seed", "gradient"), rows

    # noise-sweep
    if cfg["sigma_steps"] < 1 or cfg["sigma_max"] < 0:
        raise UsageError("--sigma-steps must be >= 1 and --sigma-max >= 0")
    params = train_surrogate(graph, train_config)
    sigmas = np.linspace(0.0, cfg["sigma_max"], cfg["sigma_steps"])
    rows = []
    for i, sigma in enumerate(sigmas):
        rng = substream(cfg["seed"], f"noise-sweep-{i}")
        grad = semantic_invariant_gradient(params, graph, float(sigma), cfg["si_samples"], rng)
        rows.append((float(sigma), grad[u, v]))
    return ("sigma", "gradient"), rows


def cmd_trace(ns) -> int:
    cfg = _resolve(ns, "trace")
    graph = load_graph_bundle(ns.graph)
    header, rows = _trace_rows(ns, cfg, graph)
    out = _outdir(ns.out)
    lines = ["\t".join(header)]
    lines.extend("\t".join(format_real(x) for x in row) for row in rows)
    (out / "trace.tsv").write_text("\n".join(lines) + "\n")
    _write_manifest(out, "trace", {**cfg, "kind": ns.kind, "edge": [int(x) for x in ns.edge]},
                    inputs={"graph": str(ns.graph)}, outputs=["trace.tsv"])
    print(f"wrote {len(rows)} rows to {out / 'trace.tsv'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return ns.handler(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BudgetError, InfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except (BundleError, TrainingDivergedError, DegenerateGradientError,
            FloatingPointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
