"""Experiment reports: named statistics, test outcomes, provenance.

Reports serialize to JSON deterministically (sorted keys, no timestamps),
so a fixed (config, seed, worker count) produces byte-identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

__all__ = ["Statistic", "TestOutcome", "ExperimentReport", "config_digest"]

_PACKAGE_VERSION = "0.1.0"


@dataclass
class Statistic:
    """A named scalar with an optional Monte Carlo standard error."""

    name: str
    value: float
    stderr: float | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "value": float(self.value)}
        if self.stderr is not None:
            d["stderr"] = float(self.stderr)
        return d


@dataclass
class TestOutcome:
    """A named check: statistic plus p-value (None for exact criteria)."""

    name: str
    statistic: float
    p: float | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "statistic": float(self.statistic)}
        if self.p is not None:
            d["p"] = float(self.p)
        return d


def config_digest(params: dict) -> str:
    """SHA-256 of the canonical JSON encoding of resolved parameters."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ExperimentReport:
    """Outcome of one verification experiment."""

    name: str
    params: dict = field(default_factory=dict)
    statistics: list[Statistic] = field(default_factory=list)
    tests: list[TestOutcome] = field(default_factory=list)
    passed: bool = True
    provenance: dict = field(default_factory=dict)

    def add_statistic(self, name: str, value: float, stderr: float | None = None) -> None:
        self.statistics.append(Statistic(name, value, stderr))

    def add_test(self, name: str, statistic: float, p: float | None = None, ok: bool = False) -> None:
        self.tests.append(TestOutcome(name, statistic, p))
        self.passed = self.passed and bool(ok)

    def statistic(self, name: str) -> Statistic:
        for s in self.statistics:
            if s.name == name:
                return s
        raise KeyError(name)

    def finalize_provenance(self, seed: int | None = None, **extra) -> None:
        self.provenance = {
            "package": f"minor-dyson {_PACKAGE_VERSION}",
            "config_digest": config_digest(self.params),
        }
        if seed is not None:
            self.provenance["seed"] = int(seed)
        for k, v in sorted(extra.items()):
            self.provenance[k] = v

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": _plain(self.params),
            "statistics": [s.to_dict() for s in self.statistics],
            "tests": [t.to_dict() for t in self.tests],
            "pass": bool(self.passed),
            "provenance": _plain(self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _plain(obj):
    """Coerce numpy scalars/arrays and dataclasses to JSON-friendly values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)
