"""Check records and a deterministic JSON writer (17 significant digits, sorted keys)."""
from __future__ import annotations

import hashlib
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

VERSION = "0.1.0"


@dataclass
class CheckReport:
    name: str
    passed: bool
    constants: dict = field(default_factory=dict)
    worst_margin: float = math.inf
    samples: int = 0
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def to_json(self, seed: int | None = None, runtime: float | None = None) -> dict:
        out = {"check": self.name, "pass": bool(self.passed), "constants": self.constants,
               "worst_margin": self.worst_margin, "samples": int(self.samples)}
        if self.details:
            out["details"] = self.details
        if seed is not None:
            out["seed"] = int(seed)
        if runtime is not None:
            out["runtime"] = runtime
        return out


def check_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per (seed, check name), so check order never matters."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    if x == int(x) and abs(x) < 1e16:
        return repr(float(x))
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with locale-independent 17-digit floats and sorted object keys."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        import json
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(_plain(v), (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def scenario_hash(scenario_json: dict) -> str:
    return hashlib.sha256(dumps(scenario_json, indent=0).encode()).hexdigest()[:16]


def assemble(reports: list, scenario_json: dict, seed: int, timings: dict | None = None) -> dict:
    checks = []
    for r in sorted(reports, key=lambda r: r.name):
        checks.append(r.to_json(seed=seed, runtime=None if timings is None else timings.get(r.name)))
    return {"version": VERSION, "scenario_hash": scenario_hash(scenario_json), "seed": int(seed),
            "pass": all(r.passed for r in reports), "checks": checks}
