"""Pairwise conflict classification among cognitive functions."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

from .domain import CfDescriptor
from .errors import ValidationError


class ConflictKind(str, enum.Enum):
    CONFIGURATION = "Configuration"
    MEASUREMENT = "Measurement"
    CHARACTERISTIC = "Characteristic"


@dataclass(frozen=True, order=True)
class ConflictEdge:
    """Unordered conflict between two CFs; ids are stored sorted.

    ``subject`` is the shared parameter (Configuration), the influenced KPI
    (Measurement), or the CF being depended upon (Characteristic).
    """

    cf_a: str
    cf_b: str
    kind: ConflictKind
    subject: str = ""

    def __post_init__(self):
        if self.cf_a == self.cf_b:
            raise ValidationError(f"conflict edge needs two distinct CFs, got {self.cf_a!r} twice")
        object.__setattr__(self, "kind", ConflictKind(self.kind))
        if self.cf_a > self.cf_b:
            a, b = self.cf_b, self.cf_a
            object.__setattr__(self, "cf_a", a)
            object.__setattr__(self, "cf_b", b)

    def to_dict(self) -> dict:
        return {"cf_a": self.cf_a, "cf_b": self.cf_b, "kind": self.kind.value, "subject": self.subject}

    @classmethod
    def from_dict(cls, d) -> "ConflictEdge":
        return cls(d["cf_a"], d["cf_b"], ConflictKind(d["kind"]), d.get("subject", ""))


def classify_conflicts(descriptors: Sequence[CfDescriptor]) -> list[ConflictEdge]:
    by_id = {}
    for d in descriptors:
        if d.cf_id in by_id:
            raise ValidationError(f"duplicate cf_id {d.cf_id!r}")
        by_id[d.cf_id] = d

    edges = set()
    for a, b in combinations(sorted(by_id), 2):
        for param in by_id[a].params_written & by_id[b].params_written:
            edges.add(ConflictEdge(a, b, ConflictKind.CONFIGURATION, param))

    for a in by_id.values():
        for b in by_id.values():
            if a.cf_id == b.cf_id:
                continue
            if b.objective_kpi in a.kpis_influenced:
                edges.add(ConflictEdge(a.cf_id, b.cf_id, ConflictKind.MEASUREMENT, b.objective_kpi))
            # dependencies on CFs outside the list are ignored
            if b.cf_id in a.depends_on:
                edges.add(ConflictEdge(a.cf_id, b.cf_id, ConflictKind.CHARACTERISTIC, b.cf_id))

    return sorted(edges)


def conflict_groups(edges: Iterable[ConflictEdge], descriptors: Sequence[CfDescriptor]) -> list[list[str]]:
    """Connected components of the conflict graph, each sorted, ordered by first member."""
    parent = {d.cf_id: d.cf_id for d in descriptors}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        for cf in (e.cf_a, e.cf_b):
            if cf not in parent:
                raise ValidationError(f"edge references unknown CF {cf!r}")
        ra, rb = find(e.cf_a), find(e.cf_b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: dict[str, list[str]] = {}
    for cf in parent:
        groups.setdefault(find(cf), []).append(cf)
    return sorted(sorted(g) for g in groups.values())


def format_table(edges: Sequence[ConflictEdge], groups: Sequence[Sequence[str]]) -> str:
    """Human-readable rendering of edges and groups."""
    header = ("CF A", "CF B", "KIND", "SUBJECT")
    rows = [(e.cf_a, e.cf_b, e.kind.value, e.subject or "-") for e in edges]
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(4)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    if not rows:
        lines.append("(no conflicts)")
    lines.append("")
    lines.append("groups:")
    lines += [f"  {i}: {', '.join(g)}" for i, g in enumerate(groups)]
    return "\n".join(lines)
