"""Run statistics: stage timings, dedup ratio and storage comparison."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import InvariantError


@dataclass
class StatsReport:
    timings_ms: dict = field(default_factory=dict)
    objects: int = 0
    candidates: int = 0
    candidates_skipped: int = 0
    regions_nonempty: int = 0
    regions_dropped_empty: int = 0
    regions_dropped_small: int = 0
    grids_total: int = 0
    grids_unique: int = 0
    naive_bytes: int = 0
    unique_bytes: int = 0
    plane_counts: dict = field(default_factory=dict)
    source_total: int = 0

    @property
    def dedup_ratio(self):
        return self.grids_unique / self.grids_total if self.grids_total else None

    @property
    def compression_factor(self):
        return self.grids_total / self.grids_unique if self.grids_unique else None

    @property
    def storage_factor(self):
        return self.naive_bytes / self.unique_bytes if self.unique_bytes else None

    @property
    def warnings(self):
        out = []
        if self.grids_total == 0:
            out.append("no intersections: no grasp candidate touched an object")
        return out

    def check(self):
        """Conservation: every nonempty region is either a dedup source or dropped as small."""
        if self.regions_nonempty != self.source_total + self.regions_dropped_small:
            raise InvariantError(
                f"{self.regions_nonempty} nonempty regions but {self.source_total} sources "
                f"+ {self.regions_dropped_small} dropped", stage="stats")
        if self.grids_total != self.source_total:
            raise InvariantError("grid count differs from dedup source count", stage="stats")

    def to_dict(self):
        d = asdict(self)
        d.update(dedup_ratio=self.dedup_ratio, compression_factor=self.compression_factor,
                 storage_factor=self.storage_factor, warnings=self.warnings)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in names})


def _fmt_ratio(x, spec=".4f"):
    return "n/a" if x is None else format(x, spec)


def report_stats(report):
    """Human-readable summary and the JSON form of ``report``."""
    lines = ["stage timings (ms):"]
    for stage, ms in report.timings_ms.items():
        lines.append(f"  {stage:<10} {ms:10.1f}")
    lines.append(f"  {'total':<10} {sum(report.timings_ms.values()):10.1f}")
    lines += [
        f"objects: {report.objects}",
        f"grasp candidates: {report.candidates} (skipped {report.candidates_skipped})",
        f"regions: {report.regions_nonempty} nonempty, {report.regions_dropped_empty} empty dropped, "
        f"{report.regions_dropped_small} below min_points",
        f"grids: {report.grids_total} total, {report.grids_unique} unique",
        f"dedup ratio: {_fmt_ratio(report.dedup_ratio)}",
        f"compression factor: {_fmt_ratio(report.compression_factor, '.2f')}",
        f"storage: naive {report.naive_bytes} B, unique {report.unique_bytes} B "
        f"(factor {_fmt_ratio(report.storage_factor, '.2f')})",
        "plane classes: " + ", ".join(f"{k}={v}" for k, v in report.plane_counts.items()),
    ]
    lines += [f"WARNING: {w}" for w in report.warnings]
    return "\n".join(lines) + "\n", report.to_json()
