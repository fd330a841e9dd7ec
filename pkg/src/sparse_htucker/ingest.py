"""Co-occurrence tensors from event records.

Each record (e.g. a patient) holds, per mode (e.g. a diagnostic family), a
set of elements (e.g. diagnoses).  A record adds one count to every
combination formed by picking one of its elements per mode, and uses the
null element ("no event in this mode") where it has none.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .sparse_tensor import SparseTensor

__all__ = [
    "EventTable",
    "NULL_INDEX",
    "SynthProfile",
    "build_cooccurrence_tensor",
    "parse_profile",
    "read_events",
    "synth_events",
    "write_events",
]

NULL_INDEX = 1
DEFAULT_PRODUCT_CAP = 10**6


@dataclass
class EventTable:
    """Per-record sets of element names, grouped by mode.

    ``catalog`` optionally fixes the element list of each mode; element ids
    are then positions in that list.  Without it, each mode's catalog is the
    sorted set of names observed.
    """

    records: dict[str, dict[str, set[str]]] = field(default_factory=dict)
    catalog: dict[str, list[str]] = field(default_factory=dict)

    def add(self, record: str, mode: str, element: str) -> None:
        self.records.setdefault(record, {}).setdefault(mode, set()).add(element)

    @property
    def modes(self) -> list[str]:
        seen = dict.fromkeys(self.catalog)
        for rec in self.records.values():
            seen.update(dict.fromkeys(rec))
        return list(seen)

    def mode_catalog(self, mode: str) -> list[str]:
        if mode in self.catalog:
            return list(self.catalog[mode])
        names = {e for rec in self.records.values() for e in rec.get(mode, ())}
        return sorted(names)

    def element_ids(self, mode: str) -> dict[str, int]:
        """Name -> 1-based element id within ``mode`` (null excluded)."""
        return {name: i for i, name in enumerate(self.mode_catalog(mode), start=1)}

    def tensor_labels(self, modes: Sequence[str]) -> dict[tuple[int, int], str]:
        """``(tensor mode, tensor index) -> name`` for the tensor built on ``modes``."""
        out = {}
        for mu, m in enumerate(modes, start=1):
            out[(mu, NULL_INDEX)] = "<none>"
            for name, i in self.element_ids(m).items():
                out[(mu, i + NULL_INDEX)] = name
        return out

    @property
    def n_events(self) -> int:
        return sum(len(s) for rec in self.records.values() for s in rec.values())


def build_cooccurrence_tensor(
    events: EventTable,
    modes: Sequence[str] | None = None,
    *,
    drop_all_null: bool = False,
    product_cap: int = DEFAULT_PRODUCT_CAP,
) -> SparseTensor:
    """Count co-occurrences of elements across the selected modes.

    Element 1 of every mode is the null element; real elements occupy
    ``2..n_mu + 1``.  Records with no event in any selected mode count
    towards the all-null cell unless ``drop_all_null`` is set.
    """
    modes = list(events.modes if modes is None else modes)
    if not modes:
        raise ValueError("select at least one mode")
    ids = [events.element_ids(m) for m in modes]
    dims = [len(x) + 1 for x in ids]
    chunks: list[np.ndarray] = []
    for rid in events.records:
        rec = events.records[rid]
        per_mode = []
        for m, table in zip(modes, ids):
            elems = rec.get(m)
            if elems:
                try:
                    per_mode.append(sorted(table[e] + NULL_INDEX for e in elems))
                except KeyError as exc:
                    raise ValueError(f"record {rid!r}: element {exc.args[0]!r} not in catalog of mode {m!r}") from None
            else:
                per_mode.append([NULL_INDEX])
        count = math.prod(len(x) for x in per_mode)
        if count > product_cap:
            raise ValueError(
                f"record {rid!r} expands to {count} combinations, above the cap of {product_cap}"
            )
        if drop_all_null and all(x == [NULL_INDEX] for x in per_mode):
            continue
        if count == 1:
            chunks.append(np.array([[x[0] for x in per_mode]], dtype=np.int64))
        else:
            chunks.append(np.array(list(itertools.product(*per_mode)), dtype=np.int64))
    if chunks:
        subs = np.concatenate(chunks)
    else:
        subs = np.zeros((0, len(modes)), dtype=np.int64)
    return SparseTensor(dims, subs, np.ones(len(subs)), null_index=NULL_INDEX)


# --- event files -----------------------------------------------------------


def read_events(path) -> EventTable:
    """Read ``record_id,mode_id,element_name`` rows (an optional header is skipped)."""
    table = EventTable()
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and [c.strip() for c in row] == ["record_id", "mode_id", "element_name"]:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            table.add(*(c.strip() for c in row))
    return table


def write_events(events: EventTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "mode_id", "element_name"])
        for rid, rec in events.records.items():
            for mode, elems in rec.items():
                for e in sorted(elems):
                    w.writerow([rid, mode, e])


# --- synthetic generator ---------------------------------------------------


@dataclass
class SynthProfile:
    """Synthetic event table settings.

    Records belong to one of ``blocks`` planted groups; a planted record only
    draws elements reserved for its group (``block_elements`` per mode and
    group).  A ``noise`` fraction of records draws from every element of the
    mode instead.  Each record touches a mode with probability ``mode_prob``
    and then picks 1..``max_events`` elements there.
    """

    modes: int = 4
    elements: int = 40
    records: int = 2000
    blocks: int = 2
    block_elements: int = 4
    mode_prob: float = 0.6
    max_events: int = 2
    noise: float = 0.5
    mode_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.blocks * self.block_elements > self.elements:
            raise ValueError("blocks * block_elements exceeds elements per mode")
        if self.mode_probs is not None and len(self.mode_probs) != self.modes:
            raise ValueError("mode_probs needs one probability per mode")

    def mode_name(self, mu: int) -> str:
        return f"mode{mu:02d}"

    def element_name(self, mu: int, j: int) -> str:
        return f"m{mu:02d}_e{j:05d}"

    def block_of(self, element: int) -> int | None:
        """Planted group of a 0-based element number, or None."""
        b = element // self.block_elements
        return b if b < self.blocks else None


_PROFILE_TYPES = {f: t for f, t in SynthProfile.__annotations__.items()}


def parse_profile(source) -> SynthProfile:
    """Parse a ``key = value`` profile from a path, a text or a mapping."""
    if isinstance(source, Mapping):
        items = dict(source)
    else:
        text = source if isinstance(source, str) and "=" in source else Path(source).read_text()
        items = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"profile line {lineno}: expected key=value")
            key, val = (x.strip() for x in line.split("=", 1))
            items[key] = val
    kwargs = {}
    for key, val in items.items():
        if key not in _PROFILE_TYPES:
            raise ValueError(f"unknown profile key {key!r}")
        if key == "mode_probs":
            kwargs[key] = tuple(float(x) for x in str(val).replace(",", " ").split())
        elif key in ("mode_prob", "noise"):
            kwargs[key] = float(val)
        else:
            kwargs[key] = int(val)
    return SynthProfile(**kwargs)


def synth_events(profile: SynthProfile | Mapping | str, seed: int = 42) -> EventTable:
    """Reproducible synthetic event table with planted co-occurrence groups."""
    if not isinstance(profile, SynthProfile):
        profile = parse_profile(profile)
    rng = np.random.default_rng(seed)
    pr = profile
    probs = np.asarray(pr.mode_probs if pr.mode_probs is not None else [pr.mode_prob] * pr.modes)
    table = EventTable(
        catalog={
            pr.mode_name(mu): [pr.element_name(mu, j) for j in range(pr.elements)]
            for mu in range(1, pr.modes + 1)
        }
    )
    width = len(str(max(pr.records - 1, 0)))
    for r in range(pr.records):
        rid = f"r{r:0{width}d}"
        noisy = rng.random() < pr.noise
        block = int(rng.integers(pr.blocks)) if pr.blocks else 0
        touched = rng.random(pr.modes) < probs
        if not touched.any():
            touched[rng.integers(pr.modes)] = True
        rec: dict[str, set[str]] = {}
        for mu in np.flatnonzero(touched) + 1:
            if noisy or pr.blocks == 0:
                pool = np.arange(pr.elements)
            else:
                pool = np.arange(block * pr.block_elements, (block + 1) * pr.block_elements)
            n = int(rng.integers(1, min(pr.max_events, len(pool)) + 1))
            picks = rng.choice(pool, size=n, replace=False)
            rec[pr.mode_name(int(mu))] = {pr.element_name(int(mu), int(j)) for j in picks}
        table.records[rid] = rec
    return table
