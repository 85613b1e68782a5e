"""Quantized-key result database and an in-process eventually consistent replica set.

Inputs are normalized to the unit cube and bucketed into cells of width
``q``; a cell holds at most one record.  Conflicting writes resolve
last-writer-wins on the version ``(counter, node_id)``, with the counter
advanced as a Lamport clock so that a node's new writes supersede anything it
has already seen.
"""
from __future__ import annotations

import csv
import io
import itertools
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Domain, Provenance, normalize

Key = tuple[int, ...]


@dataclass(frozen=True)
class Record:
    x: tuple[float, ...]
    y: tuple[float, ...]
    provenance: Provenance
    version: tuple[int, int]          # (logical counter, node id)
    step: int = 0


class Store:
    """One node's map from quantized key to record, with an append-only write log.

    Writes are serialized by a lock; lookups take the same lock and so see a
    consistent snapshot.
    """

    def __init__(self, domain: Domain, q: float = 1e-3, node_id: int = 0):
        if q <= 0:
            raise ValueError("cell width must be positive")
        self.domain = domain
        self.q = float(q)
        self.node_id = int(node_id)
        self._map: dict[Key, Record] = {}
        self.log: list[Record] = []
        self._clock = 0
        self._lock = threading.RLock()
        self.queries = 0
        self.hits = 0

    def __len__(self) -> int:
        return len(self._map)

    def key(self, x) -> Key:
        u = normalize(self.domain, np.asarray(x, dtype=float), extrapolate=True)
        return tuple(int(k) for k in np.floor(u / self.q))

    def put(self, x, y, provenance: Provenance = Provenance.TRUTH, step: int = 0) -> tuple[int, int]:
        x = tuple(float(v) for v in np.ravel(x))
        y = tuple(float(v) for v in np.ravel(y))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("records must be finite")
        with self._lock:
            self._clock += 1
            rec = Record(x, y, provenance, (self._clock, self.node_id), step)
            self.apply(rec)
            return rec.version

    def apply(self, rec: Record) -> bool:
        """Merge a record under last-writer-wins; returns True if the map changed."""
        with self._lock:
            self._clock = max(self._clock, rec.version[0])
            k = self.key(rec.x)
            cur = self._map.get(k)
            if cur is not None and cur.version >= rec.version:
                return False
            self._map[k] = rec
            self.log.append(rec)
            return True

    def get(self, x) -> Record | None:
        with self._lock:
            return self._map.get(self.key(x))

    def lookup(self, x, tol_cells: int = 0, count: bool = True) -> Record | None:
        """Nearest stored record within ``tol_cells`` cells of ``x`` (per axis)."""
        if tol_cells < 0:
            raise ValueError("tolerance must be non-negative")
        x = np.asarray(x, dtype=float)
        u = normalize(self.domain, x, extrapolate=True)
        base = np.floor(u / self.q).astype(int)
        best, best_d = None, np.inf
        with self._lock:
            if tol_cells == 0:
                best = self._map.get(tuple(int(k) for k in base))
            else:
                offsets = range(-tol_cells, tol_cells + 1)
                for off in itertools.product(offsets, repeat=len(base)):
                    rec = self._map.get(tuple(int(b + o) for b, o in zip(base, off)))
                    if rec is None:
                        continue
                    d = float(np.linalg.norm(normalize(self.domain, rec.x, extrapolate=True) - u))
                    if d < best_d:
                        best, best_d = rec, d
            if count:
                self.queries += 1
                self.hits += best is not None
        return best

    def dedup_rate(self) -> float:
        return self.hits / self.queries if self.queries else 0.0

    def records(self) -> list[Record]:
        with self._lock:
            return [self._map[k] for k in sorted(self._map)]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        recs = self.records()
        if not recs:
            return np.empty((0, self.domain.dims)), np.empty((0, 0))
        return np.array([r.x for r in recs]), np.array([r.y for r in recs])

    @classmethod
    def replay(cls, domain: Domain, log, q: float = 1e-3, node_id: int = 0) -> "Store":
        s = cls(domain, q, node_id)
        for rec in log:
            s.apply(rec)
        return s

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._map)

    # -- dump / load -------------------------------------------------------

    def to_csv(self, path=None) -> str:
        """Records sorted by key; floats written with ``repr`` for an exact round trip."""
        d = self.domain.dims
        recs = self.records()
        k = len(recs[0].y) if recs else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"k{i}" for i in range(d)] + [f"x{i}" for i in range(d)] + [f"y{j}" for j in range(k)]
                   + ["provenance", "counter", "node", "step"])
        for r in recs:
            w.writerow(list(self.key(r.x)) + [repr(v) for v in r.x] + [repr(v) for v in r.y]
                       + [r.provenance.value, r.version[0], r.version[1], r.step])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, domain: Domain, path, q: float = 1e-3, node_id: int = 0) -> "Store":
        rows = list(csv.reader(io.StringIO(Path(path).read_text())))
        header, body = rows[0], rows[1:]
        d = domain.dims
        k = sum(1 for h in header if h.startswith("y"))
        s = cls(domain, q, node_id)
        for r in body:
            s.apply(Record(
                x=tuple(float(v) for v in r[d:2 * d]),
                y=tuple(float(v) for v in r[2 * d:2 * d + k]),
                provenance=Provenance(r[2 * d + k]),
                version=(int(r[2 * d + k + 1]), int(r[2 * d + k + 2])),
                step=int(r[2 * d + k + 3]),
            ))
        return s


class ReplicaSet:
    """N stores exchanging their write logs with simulated lossy delivery.

    Each ordered pair of nodes tracks which of the sender's log entries are
    still unacknowledged.  Every round re-sends all of them; a dropped message
    simply stays pending (at-least-once delivery), and re-applying a record
    that already arrived is harmless.
    """

    def __init__(self, domain: Domain, n_nodes: int = 3, q: float = 1e-3,
                 drop_probability: float = 0.0, seed=0):
        if n_nodes < 1:
            raise ValueError("need at least one node")
        if not 0 <= drop_probability < 1:
            raise ValueError("drop probability must lie in [0, 1)")
        self.nodes = [Store(domain, q, node_id=i) for i in range(n_nodes)]
        self.drop_probability = drop_probability
        self.rng = np.random.default_rng(seed)
        self.shipped = {(a, b): 0 for a in range(n_nodes) for b in range(n_nodes) if a != b}
        self.pending: dict[tuple[int, int], list[int]] = {pair: [] for pair in self.shipped}
        self.rounds = 0

    def sync_round(self) -> int:
        delivered = 0
        for pair in sorted(self.shipped):
            src, dst = pair
            log = self.nodes[src].log
            queue = self.pending[pair] + list(range(self.shipped[pair], len(log)))
            self.shipped[pair] = len(log)
            kept = []
            for i in queue:
                if self.drop_probability and self.rng.random() < self.drop_probability:
                    kept.append(i)
                    continue
                self.nodes[dst].apply(log[i])
                delivered += 1
            self.pending[pair] = kept
        self.rounds += 1
        return delivered

    def drained(self) -> bool:
        return all(not self.pending[p] and self.shipped[p] == len(self.nodes[p[0]].log) for p in self.shipped)

    def converged(self) -> bool:
        first = self.nodes[0].to_csv()
        return all(n.to_csv() == first for n in self.nodes[1:])

    def sync_until_converged(self, max_rounds: int = 1000) -> int:
        """Run rounds until logs drain and maps agree; returns the rounds used."""
        for r in range(1, max_rounds + 1):
            self.sync_round()
            if self.drained() and self.converged():
                return r
        raise RuntimeError(f"replicas did not converge within {max_rounds} rounds")
