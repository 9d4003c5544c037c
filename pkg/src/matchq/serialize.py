"""JSON and CSV interchange for graphs, rates, policies, and reports.

File formats:
  graph   {"nodes": p, "edges": [[i, j], ...]}          1-based indices
  rates   {"rates": [r1, ..., rp]}
  policy  {"kind": "priority", "order": {"1": [2, 3], ...}}
          {"kind": "ml"} | {"kind": "uniform"}
  trace   CSV with columns t, class, matched (0 = none), q_1..q_p

Infinite values are encoded as the string "inf" so the emitted JSON stays
strictly standard.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any

from .errors import InputFormatError
from .graphs import Graph
from .policies import PRIORITY, Policy, priority_policy
from .simulate import SimTrace
from .stability import StabilityVerdict, UnstableInstance


def _require(obj: dict, key: str, context: str) -> Any:
    if key not in obj:
        raise InputFormatError(f"{context}: missing key {key!r}")
    return obj[key]


# -- graphs -------------------------------------------------------------------


def graph_to_obj(graph: Graph) -> dict:
    return {"nodes": graph.node_count, "edges": [list(e) for e in graph.edges]}


def graph_from_obj(obj: dict) -> Graph:
    try:
        nodes = int(_require(obj, "nodes", "graph"))
        edges = _require(obj, "edges", "graph")
        return Graph.from_edges(nodes, [(int(e[0]), int(e[1])) for e in edges])
    except (TypeError, ValueError, IndexError) as exc:
        raise InputFormatError(f"graph: {exc}") from exc


# -- rates --------------------------------------------------------------------


def rates_to_obj(rates) -> dict:
    return {"rates": [float(r) for r in rates]}


def rates_from_obj(obj: dict) -> tuple[float, ...]:
    try:
        return tuple(float(r) for r in _require(obj, "rates", "rates"))
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"rates: {exc}") from exc


# -- policies -----------------------------------------------------------------


def policy_to_obj(policy: Policy) -> dict:
    if policy.kind == PRIORITY:
        return {
            "kind": PRIORITY,
            "order": {str(k): list(v) for k, v in sorted(policy.order.items())},
        }
    return {"kind": policy.kind}


def policy_from_obj(obj: dict) -> Policy:
    try:
        kind = _require(obj, "kind", "policy")
        if kind == PRIORITY:
            order = _require(obj, "order", "policy")
            return priority_policy(
                {int(k): tuple(int(x) for x in v) for k, v in order.items()}
            )
        return Policy(kind)
    except (TypeError, ValueError, AttributeError) as exc:
        raise InputFormatError(f"policy: {exc}") from exc


# -- instances and reports ------------------------------------------------------


def _num(x: float):
    return "inf" if math.isinf(x) else x


def instance_to_obj(instance: UnstableInstance) -> dict:
    return {
        "graph": graph_to_obj(instance.graph),
        "rates": rates_to_obj(instance.rates),
        "policy": policy_to_obj(instance.policy),
        "node": instance.node,
        "drift": instance.drift,
        "family": instance.family,
        "eps": instance.eps,
        "notes": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in instance.notes.items()
        },
    }


def instance_from_obj(obj: dict) -> UnstableInstance:
    return UnstableInstance(
        graph=graph_from_obj(_require(obj, "graph", "instance")),
        rates=rates_from_obj(_require(obj, "rates", "instance")),
        policy=policy_from_obj(_require(obj, "policy", "instance")),
        node=int(_require(obj, "node", "instance")),
        drift=float(_require(obj, "drift", "instance")),
        family=obj.get("family"),
        eps=obj.get("eps"),
        notes=obj.get("notes", {}),
    )


def fluid_report_to_obj(report) -> dict:
    return {
        "i0": report.i0,
        "guard_probs": {str(k): v for k, v in sorted(report.guard_probs.items())},
        "drift": report.drift,
        "rho": _num(report.rho),
        "method": report.method,
        "tail_mass": report.tail_mass,
        "q0": report.q0,
    }


def verdict_to_obj(verdict: StabilityVerdict) -> dict:
    return {
        "verdict": verdict.verdict,
        "inequalities": [
            {
                "name": iq.name,
                "lhs": iq.lhs,
                "rhs": iq.rhs,
                "satisfied": iq.satisfied,
                "margin": iq.margin,
            }
            for iq in verdict.inequalities
        ],
        "evidence": _jsonable(verdict.evidence),
    }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float):
        return _num(value)
    if hasattr(value, "item"):  # numpy scalars
        return _jsonable(value.item())
    return value


def classification_to_obj(cls) -> dict:
    out = {"kind": cls.kind}
    if cls.coloring is not None:
        out["coloring"] = {str(k): v for k, v in sorted(cls.coloring.items())}
    if cls.order is not None:
        out["order"] = cls.order
        out["partition"] = [sorted(part) for part in cls.partition]
    if cls.witness is not None:
        out["witness_kind"] = cls.witness_kind
        out["witness"] = list(cls.witness)
    return out


def trace_summary_to_obj(trace: SimTrace, node=None, drift=None) -> dict:
    out = {
        "seed": trace.seed,
        "n": trace.scale,
        "horizon": trace.horizon,
        "end_time_scaled": trace.end_time / trace.scale,
        "events": trace.n_events,
        "final_state": list(trace.final_state),
        "arrivals": [int(a) for a in trace.arrivals[1:]],
    }
    if node is not None:
        raw = trace.first_zero[node - 1]
        out["node"] = node
        out["hitting_time"] = "inf" if math.isnan(raw) else raw / trace.scale
    if drift is not None:
        out["drift"] = {
            "slope": drift.slope,
            "stderr": drift.stderr,
            "window": list(drift.window),
            "samples": drift.samples,
        }
    return out


def write_trace_csv(trace: SimTrace, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "class", "matched"]
            + [f"q_{i}" for i in range(1, trace.node_count + 1)]
        )
        for k in range(len(trace.times)):
            writer.writerow(
                [f"{trace.times[k]:.9f}", int(trace.classes[k]), int(trace.matched[k])]
                + [int(v) for v in trace.states[k]]
            )


def write_growth_csv(result, path: Path) -> None:
    p = result.template.node_count
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n", "matched_count"] + [f"unmatched_{i}" for i in range(1, p + 1)]
        )
        for n, matched, queue in result.checkpoints:
            writer.writerow([n, matched] + list(queue))


# -- files and manifests ----------------------------------------------------------


def load_json(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc}")


def dump_json(obj: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def manifest(command: str, argv: list[str], inputs: list[str | Path], seed=None,
             outputs: list[str] | None = None) -> dict:
    from . import __version__

    return {
        "command": command,
        "argv": list(argv),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "seed": seed,
        "outputs": outputs or [],
        "package": {"name": "matchq", "version": __version__},
    }
