"""Sampled residual reports and their JSON form."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence


@dataclass
class SampleRecord:
    point: list[float]
    values: dict[str, float]


@dataclass
class ResidualReport:
    """Residuals of one check over a set of sample points.

    ``keys`` names the residual families that count toward ``max``; other
    entries in a record's ``values`` are informational.
    """

    check: str
    tol: float
    seed: int | None
    keys: tuple[str, ...]
    samples: list[SampleRecord] = field(default_factory=list)
    skipped: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    def add(self, point: Iterable[float], **values: float) -> None:
        self.samples.append(SampleRecord([float(v) for v in point], {k: float(v) for k, v in values.items()}))

    def sample_max(self, record: SampleRecord) -> float:
        return max((record.values[k] for k in self.keys if k in record.values), default=0.0)

    def family_max(self, key: str) -> float:
        vals = [r.values[key] for r in self.samples if key in r.values]
        return max(vals) if vals else math.nan

    @property
    def max(self) -> float:
        if not self.samples:
            return math.inf
        return max(self.sample_max(r) for r in self.samples)

    @property
    def mean(self) -> float:
        if not self.samples:
            return math.inf
        return math.fsum(self.sample_max(r) for r in self.samples) / len(self.samples)

    @property
    def passed(self) -> bool:
        return bool(self.samples) and self.max <= self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.check}: max={self.max:.3e} mean={self.mean:.3e} tol={self.tol:.1e} n={len(self.samples)} skipped={self.skipped}"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "check": self.check,
            "tol": self.tol,
            "seed": self.seed,
            "max": self.max,
            "mean": self.mean,
            "pass": self.passed,
            "skipped": self.skipped,
        }
        out.update(self.extra)
        out["samples"] = [{"point": r.point, "values": r.values} for r in self.samples]
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())


def format_float(v: float) -> str:
    """17 significant digits; integral values keep a trailing ``.0``."""
    text = format(v, ".17g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def _dump(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isfinite(obj):
            return format_float(obj)
        return json.dumps(str(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        # flat dicts of scalars stay on one line
        if all(not isinstance(v, (dict, list, tuple)) for v in obj.values()) and level > 0:
            return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in obj.items()) + "}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _dump(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _dump(obj.item(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _dump(obj, indent, 0) + "\n"


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def merge_passed(reports: Sequence[ResidualReport]) -> bool:
    return all(r.passed for r in reports)
