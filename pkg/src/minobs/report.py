"""Versioned run reports: a header line followed by one JSON document."""
from __future__ import annotations

import json
from fractions import Fraction
from typing import Optional

from .optimizer import SolutionRecord, Step, validate_nonredundant

HEADER = "# minobs-report v1"


class ReportError(ValueError):
    pass


def _frac(q) -> str:
    return str(Fraction(q))


def step_dict(step: Step, cost) -> dict:
    return {
        "obs": list(step.obs),
        "verdict": step.verdict,
        "reused_from": list(step.reused_from) if step.reused_from is not None else None,
        "beliefs": step.beliefs,
        "states": step.states,
        "complete": step.complete,
        "cost": _frac(cost(step.obs)),
        "duration": round(step.duration, 6),
    }


def build_report(command: str, model, cost, record: SolutionRecord, best, settings: dict) -> dict:
    obs = sorted(settings.get("observable") or model.predicates)
    out = {
        "command": command,
        "model": {"name": model.name, "params": dict(model.meta.get("params", {}))},
        "safety": model.safety,
        "observable": obs,
        "costs": {p: _frac(cost(frozenset([p]))) for p in obs},
        "settings": {k: v for k, v in sorted(settings.items()) if k != "observable"},
        "best": sorted(best) if best is not None else None,
        "cost": _frac(cost(best)) if best is not None else None,
        "iterations": len(record),
        "from_scratch": record.from_scratch,
        "reused": record.reused,
        "trace": [step_dict(s, cost) for s in record],
    }
    return out


def dumps(report: dict) -> str:
    return HEADER + "\n" + json.dumps(report, indent=2, sort_keys=True) + "\n"


def without_durations(report: dict) -> dict:
    out = json.loads(json.dumps(report))
    for s in out.get("trace", []):
        s.pop("duration", None)
    return out


def loads(text: str) -> dict:
    """Parse and re-validate a report."""
    head, _, body = text.partition("\n")
    if head.strip() != HEADER:
        if head.startswith("# minobs-report"):
            raise ReportError(f"unsupported report version: {head.strip()!r}")
        raise ReportError("missing report header")
    try:
        report = json.loads(body)
    except json.JSONDecodeError as e:
        raise ReportError(f"malformed report body: {e}") from None
    validate(report)
    return report


def validate(report: dict):
    costs = {p: Fraction(c) for p, c in report["costs"].items()}

    def cost(obs):
        return sum((costs[p] for p in obs), Fraction(0))

    steps = []
    for s in report["trace"]:
        if Fraction(s["cost"]) != cost(s["obs"]):
            raise ReportError(f"cost of {s['obs']} does not add up")
        steps.append(Step(tuple(s["obs"]), s["verdict"],
                          tuple(s["reused_from"]) if s["reused_from"] is not None else None))
    if not validate_nonredundant(steps, cost):
        raise ReportError("trace is redundant")
    if report["iterations"] != len(steps):
        raise ReportError("iteration count does not match the trace")
    if report["reused"] != sum(1 for s in steps if s.reused_from is not None):
        raise ReportError("reuse count does not match the trace")
    best = report["best"]
    if best is not None:
        if Fraction(report["cost"]) != cost(best):
            raise ReportError("best cost does not add up")
        if report["command"] == "optimize":
            wins = [s for s in steps if s.verdict]
            if not wins or min(cost(s.obs) for s in wins) != cost(best):
                raise ReportError("best set is not the cheapest winning set of the trace")
    elif any(s.verdict for s in steps) and report["command"] == "optimize":
        raise ReportError("a winning set was found but no best set reported")
