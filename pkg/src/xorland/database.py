"""Deduplicated persistent store of stationary points and connectivity.

Points are lumped by loss value within each kind: symmetry-degenerate
solutions and the micro-stationary points that populate razor-flat
valleys (lowest curvature near the zero cutoff, loss spread ~1e-10)
collapse to one record, while genuinely distinct stationary points
(observed same-kind gaps are never below ~2e-5 relative) stay apart. A
transition state and a minimum with equal loss are never lumped across
kinds, which is what resolves barrier gaps of order 1e-11.

On-disk format (one directory per database): meta.json, minima.jsonl,
ts.jsonl, higher.jsonl, edges.tsv. All floats round-trip bit-exactly
(shortest-round-trip decimal strings).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import grad_rms, matrix_spectrum
from .optimize import polish_stationary

FORMAT_VERSION = 1

KIND_MINIMUM = "minimum"
KIND_TS = "transition_state"
KIND_HIGHER = "higher_index"

#: Gradient-RMS bound every stored point must satisfy.
STORED_GRAD_RMS_MAX = 1e-9


class DatabaseError(RuntimeError):
    pass


class CertificateError(DatabaseError):
    """Point failed its kind's certificate; carries the offending spectrum."""

    def __init__(self, message: str, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues)


@dataclass
class CandidatePoint:
    """A converged, certified stationary point not yet assigned an id."""

    params: np.ndarray
    loss: float
    grad_rms: float
    eigenvalues: np.ndarray
    index: int
    zero_count: int
    tags: frozenset = frozenset()


@dataclass
class StationaryPoint:
    id: int
    kind: str
    params: np.ndarray = field(repr=False)
    loss: float
    grad_rms: float
    eigenvalues: np.ndarray = field(repr=False)
    index: int
    zero_count: int
    tags: set = field(default_factory=set)


def _expected_index_ok(kind: str, index: int) -> bool:
    if kind == KIND_MINIMUM:
        return index == 0
    if kind == KIND_TS:
        return index == 1
    if kind == KIND_HIGHER:
        return index >= 2
    return False


def kind_for_index(index: int) -> str:
    return {0: KIND_MINIMUM, 1: KIND_TS}.get(index, KIND_HIGHER)


def tag_trivial(cand: CandidatePoint) -> CandidatePoint:
    """Tag the all-zero minimum (every nontrivial minimum has O(1e-3)+ weights)."""
    if np.max(np.abs(cand.params)) < 1e-7:
        return replace(cand, tags=cand.tags | {"trivial"})
    return cand


def certify_point(surface, x: np.ndarray, zero_cutoff: float) -> CandidatePoint:
    """Polish a converged point and package it with its Hessian spectrum.

    This is the only gate through which points enter a database.
    """
    xp = polish_stationary(surface, x)
    f, g = surface.value_and_grad(xp)
    sp = matrix_spectrum(surface.hessian(xp), zero_cutoff)
    return CandidatePoint(
        params=xp,
        loss=float(f),
        grad_rms=grad_rms(g),
        eigenvalues=sp.eigenvalues,
        index=sp.index,
        zero_count=sp.zero_count,
    )


def same_loss(a: float, b: float, tol: float) -> bool:
    """Loss-lumping predicate: relative tolerance with floor 1 on the scale."""
    return abs(a - b) <= tol * max(1.0, abs(a))


class LandscapeDB:
    """Stationary-point database for one (n_hidden, lambda) landscape."""

    def __init__(
        self,
        n_hidden: int,
        lam: float,
        zero_cutoff: float = 1e-9,
        dedupe_tol: float = 1e-9,
        run_config: dict | None = None,
    ):
        self.n_hidden = int(n_hidden)
        self.lam = float(lam)
        self.zero_cutoff = float(zero_cutoff)
        self.dedupe_tol = float(dedupe_tol)
        self.run_config = dict(run_config or {})
        self.minima: list[StationaryPoint] = []
        self.transition_states: list[StationaryPoint] = []
        self.higher_index: list[StationaryPoint] = []
        self.edges: list[tuple[int, int, int]] = []
        self._next_id = 0

    # -- queries ---------------------------------------------------------

    def _bucket(self, kind: str) -> list[StationaryPoint]:
        return {
            KIND_MINIMUM: self.minima,
            KIND_TS: self.transition_states,
            KIND_HIGHER: self.higher_index,
        }[kind]

    def all_points(self) -> list[StationaryPoint]:
        return sorted(
            self.minima + self.transition_states + self.higher_index, key=lambda p: p.id
        )

    def point(self, point_id: int) -> StationaryPoint:
        for p in self.all_points():
            if p.id == point_id:
                return p
        raise DatabaseError(f"no stationary point with id {point_id}")

    def minimum(self, min_id: int) -> StationaryPoint:
        for p in self.minima:
            if p.id == min_id:
                return p
        raise DatabaseError(f"no minimum with id {min_id}")

    def nontrivial_minima(self) -> list[StationaryPoint]:
        return [p for p in self.minima if "trivial" not in p.tags]

    def distinct_losses(self, kind: str = KIND_MINIMUM) -> list[float]:
        return sorted(p.loss for p in self._bucket(kind))

    # -- insertion -------------------------------------------------------

    def insert(self, cand: CandidatePoint, kind: str | None = None) -> tuple[int, bool]:
        """Insert with loss-value dedupe; returns (id, was_new).

        A matching stored representative of the same kind wins (lower ids
        are scanned first, so merges keep the lower id); its tag set
        absorbs the candidate's tags.
        """
        kind = kind or kind_for_index(cand.index)
        if not _expected_index_ok(kind, cand.index):
            raise CertificateError(
                f"index {cand.index} does not certify kind {kind!r}", cand.eigenvalues
            )
        if cand.zero_count != 0:
            raise CertificateError(
                f"{cand.zero_count} zero eigenvalue(s) at cutoff {self.zero_cutoff:g}",
                cand.eigenvalues,
            )
        if cand.grad_rms >= STORED_GRAD_RMS_MAX:
            raise CertificateError(
                f"gradient RMS {cand.grad_rms:.3e} above {STORED_GRAD_RMS_MAX:g}",
                cand.eigenvalues,
            )
        bucket = self._bucket(kind)
        for p in bucket:
            if same_loss(cand.loss, p.loss, self.dedupe_tol):
                p.tags |= set(cand.tags)
                return p.id, False
        point = StationaryPoint(
            id=self._next_id,
            kind=kind,
            params=np.ascontiguousarray(cand.params, dtype=np.float64).copy(),
            loss=float(cand.loss),
            grad_rms=float(cand.grad_rms),
            eigenvalues=np.asarray(cand.eigenvalues, dtype=np.float64).copy(),
            index=int(cand.index),
            zero_count=int(cand.zero_count),
            tags=set(cand.tags),
        )
        self._next_id += 1
        bucket.append(point)
        return point.id, True

    def add_edge(self, ts_id: int, min_a: int, min_b: int) -> None:
        ts = self.point(ts_id)
        a, b = sorted((min_a, min_b))
        ea, eb = self.minimum(a), self.minimum(b)
        if ts.loss < ea.loss or ts.loss < eb.loss:
            raise DatabaseError(
                f"edge rejected: ts {ts_id} loss {ts.loss!r} below an endpoint"
            )
        if (ts_id, a, b) not in self.edges:
            self.edges.append((ts_id, a, b))

    # -- connectivity ----------------------------------------------------

    def components(self, max_ts_loss: float = np.inf) -> list[frozenset[int]]:
        """Partition of minima ids via transition states with loss <= cap."""
        parent = {p.id: p.id for p in self.minima}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        ts_loss = {p.id: p.loss for p in self.transition_states}
        for ts_id, a, b in self.edges:
            if ts_loss.get(ts_id, np.inf) <= max_ts_loss:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, set[int]] = {}
        for p in self.minima:
            groups.setdefault(find(p.id), set()).add(p.id)
        return sorted((frozenset(g) for g in groups.values()), key=min)


# ---------------------------------------------------------------------------
# serialization


def _point_to_json(p: StationaryPoint) -> str:
    rec = {
        "id": p.id,
        "kind": p.kind,
        "loss": p.loss,
        "grad_rms": p.grad_rms,
        "eigenvalues": [float(v) for v in p.eigenvalues],
        "index": p.index,
        "zero_count": p.zero_count,
        "params": [repr(float(v)) for v in p.params],
        "tags": sorted(p.tags),
    }
    return json.dumps(rec, separators=(",", ":"))


def _point_from_json(rec: dict) -> StationaryPoint:
    return StationaryPoint(
        id=int(rec["id"]),
        kind=rec["kind"],
        params=np.array([float(s) for s in rec["params"]]),
        loss=float(rec["loss"]),
        grad_rms=float(rec["grad_rms"]),
        eigenvalues=np.array([float(v) for v in rec["eigenvalues"]]),
        index=int(rec["index"]),
        zero_count=int(rec["zero_count"]),
        tags=set(rec.get("tags", [])),
    )


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


_DATA_FILES = ("minima.jsonl", "ts.jsonl", "higher.jsonl", "edges.tsv")


def save(db: LandscapeDB, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payloads = {
        "minima.jsonl": "".join(_point_to_json(p) + "\n" for p in db.minima),
        "ts.jsonl": "".join(_point_to_json(p) + "\n" for p in db.transition_states),
        "higher.jsonl": "".join(_point_to_json(p) + "\n" for p in db.higher_index),
        "edges.tsv": "".join(f"{t}\t{a}\t{b}\n" for t, a, b in db.edges),
    }
    meta = {
        "format_version": FORMAT_VERSION,
        "n_hidden": db.n_hidden,
        "lambda": repr(db.lam),
        "zero_cutoff": repr(db.zero_cutoff),
        "dedupe_tol": repr(db.dedupe_tol),
        "next_id": db._next_id,
        "checksums": {name: _sha256(payloads[name].encode()) for name in _DATA_FILES},
        "run_config": db.run_config,
    }
    for name in _DATA_FILES:
        (directory / name).write_bytes(payloads[name].encode())
    (directory / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load(directory) -> LandscapeDB:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise DatabaseError(f"not a landscape database: {meta_path} missing")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise DatabaseError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    db = LandscapeDB(
        n_hidden=int(meta["n_hidden"]),
        lam=float(meta["lambda"]),
        zero_cutoff=float(meta["zero_cutoff"]),
        dedupe_tol=float(meta["dedupe_tol"]),
        run_config=meta.get("run_config", {}),
    )
    buckets = {
        "minima.jsonl": db.minima,
        "ts.jsonl": db.transition_states,
        "higher.jsonl": db.higher_index,
    }
    for name in _DATA_FILES:
        path = directory / name
        if not path.is_file():
            raise DatabaseError(f"missing database file {path}")
        data = path.read_bytes()
        expected = meta["checksums"].get(name)
        actual = _sha256(data)
        if actual != expected:
            raise DatabaseError(f"checksum mismatch for {name}: {actual} != {expected}")
        text = data.decode("utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                if name == "edges.tsv":
                    t, a, b = (int(v) for v in line.split("\t"))
                    db.edges.append((t, a, b))
                else:
                    buckets[name].append(_point_from_json(json.loads(line)))
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                raise DatabaseError(f"{name}:{lineno}: malformed record ({exc})") from None
    db._next_id = int(meta["next_id"])
    return db
