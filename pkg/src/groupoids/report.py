"""Check reports with JSON/CSV serialization shared by all verification ops."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class Report:
    """Outcome of a sampled numerical check.

    ``defects`` keeps one number per sample (aggregation order follows the
    sample index, so reports are deterministic for a fixed seed).  ``extra``
    holds op-specific scalars that should survive serialization.
    """

    op: str
    tol: float
    defects: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def samples(self) -> int:
        return len(self.defects)

    @property
    def max_defect(self) -> float:
        return max(self.defects) if self.defects else 0.0

    @property
    def mean_defect(self) -> float:
        return sum(self.defects) / len(self.defects) if self.defects else 0.0

    @property
    def passed(self) -> bool:
        return self.max_defect < self.tol

    def to_dict(self) -> dict:
        out = {
            "op": self.op,
            "samples": self.samples,
            "max_defect": self.max_defect,
            "mean_defect": self.mean_defect,
            "tol": self.tol,
            "pass": self.passed,
        }
        if self.extra:
            out["extra"] = _plain(self.extra)
        return out

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)

    def write_defects_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_index", "defect"])
            for i, d in enumerate(self.defects):
                writer.writerow([i, repr(float(d))])


def _plain(value):
    """Recursively convert numpy scalars/arrays into JSON-friendly values."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, float):
        return float(value)
    return value


def content_hash(payload: dict, exclude: tuple[str, ...] = ("wall_time_s", "content_hash")) -> str:
    """Stable hash of a report dict, ignoring timing fields."""
    trimmed = {k: v for k, v in payload.items() if k not in exclude}
    blob = json.dumps(trimmed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
