"""Domain types shared across the framework.

A :class:`Domain` describes the box of admissible inputs, with optional
log scaling per dimension.  Fine-scale evaluations are kept as
:class:`SamplePoint` records inside a :class:`Dataset`.  Every expensive model
implements :class:`TruthModel`.
"""
from __future__ import annotations

import abc
import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ScaleBridgeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ScaleBridgeError, ValueError):
    """An input vector lies outside the domain box."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class Provenance(enum.Enum):
    TRUTH = "truth"
    SURROGATE = "surrogate"
    DB_HIT = "db_hit"

    @property
    def code(self) -> int:
        # call-map colour code: 0 white, 1 blue, 2 black
        return _PROVENANCE_CODES[self]


_PROVENANCE_CODES = {Provenance.TRUTH: 0, Provenance.SURROGATE: 1, Provenance.DB_HIT: 2}


@dataclass(frozen=True)
class Domain:
    """Axis-aligned input box; ``log_scaled`` dimensions are mapped via log10."""

    bounds: tuple[tuple[float, float], ...]
    log_scaled: tuple[bool, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        logs = tuple(bool(b) for b in self.log_scaled) or (False,) * len(bounds)
        object.__setattr__(self, "log_scaled", logs)
        if len(logs) != len(bounds):
            raise ValueError("log_scaled must have one entry per dimension")
        if self.names and len(self.names) != len(bounds):
            raise ValueError("names must have one entry per dimension")
        if not bounds:
            raise ValueError("domain needs at least one dimension")
        for i, ((lo, hi), lg) in enumerate(zip(bounds, logs)):
            if not lo < hi:
                raise ValueError(f"dimension {i}: lower bound must be below upper bound")
            if lg and lo <= 0:
                raise ValueError(f"dimension {i}: log-scaled bounds must be positive")

    @classmethod
    def box(cls, lo: float, hi: float, dims: int) -> "Domain":
        return cls(bounds=((lo, hi),) * dims)

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def _scaled_bounds(self):
        lo = self.lower.copy()
        hi = self.upper.copy()
        mask = np.array(self.log_scaled)
        lo[mask] = np.log10(lo[mask])
        hi[mask] = np.log10(hi[mask])
        return lo, hi, mask

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def normalize(domain: Domain, x, extrapolate: bool = False) -> np.ndarray:
    """Map ``x`` (a vector or an ``(n, d)`` array) into the unit cube.

    Out-of-bounds components raise :class:`DomainError` unless
    ``extrapolate`` is set, in which case they map outside ``[0, 1]``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != domain.dims:
        raise DomainError(f"expected {domain.dims} components, got {x.shape[-1]}")
    lo, hi, mask = domain._scaled_bounds()
    if not extrapolate:
        bad = (x < domain.lower) | (x > domain.upper) | ~np.isfinite(x)
        if np.any(bad):
            idx = int(np.argwhere(bad)[0][-1])
            raise DomainError(f"component {idx} outside domain bounds {domain.bounds[idx]}", index=idx)
    if np.any(mask):
        x = x.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            x[..., mask] = np.log10(x[..., mask])
        if np.any(~np.isfinite(x[..., mask])):
            bad = ~np.isfinite(x) & mask
            idx = int(np.argwhere(bad)[0][-1])
            raise DomainError(f"component {idx} must be positive on a log-scaled axis", index=idx)
    return (x - lo) / (hi - lo)


def denormalize(domain: Domain, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    lo, hi, mask = domain._scaled_bounds()
    x = lo + u * (hi - lo)
    if np.any(mask):
        x[..., mask] = 10.0 ** x[..., mask]
    return x


@dataclass(frozen=True)
class SamplePoint:
    x: tuple[float, ...]
    y: tuple[float, ...]
    provenance: Provenance = Provenance.TRUTH
    quality: float = 0.0
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.ravel(self.x)))
        object.__setattr__(self, "y", tuple(float(v) for v in np.ravel(self.y)))
        if self.quality < 0:
            raise ValueError("quality flag must be non-negative")
        if self.provenance is Provenance.TRUTH and self.quality != 0:
            raise ValueError("truth evaluations carry quality 0")


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of sample points over one domain."""

    domain: Domain
    points: tuple[SamplePoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        for p in pts:
            if len(p.x) != self.domain.dims:
                raise ValueError("sample point dimension does not match domain")

    @classmethod
    def from_arrays(cls, domain: Domain, X, Y, provenance=Provenance.TRUTH, start_step: int = 0) -> "Dataset":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        pts = tuple(
            SamplePoint(x, y, provenance=provenance, step=start_step + i)
            for i, (x, y) in enumerate(zip(X, Y))
        )
        return cls(domain, pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def X(self) -> np.ndarray:
        return np.array([p.x for p in self.points], dtype=float).reshape(len(self), self.domain.dims)

    @property
    def Y(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 0))
        return np.array([p.y for p in self.points], dtype=float)

    def out_of_domain(self) -> list[int]:
        """Indices of points outside the domain box (e.g. a heated scenario)."""
        return [i for i, p in enumerate(self.points) if not self.domain.contains(p.x)]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.domain, tuple(self.points[i] for i in indices))

    def extend(self, points: Iterable[SamplePoint]) -> "Dataset":
        return Dataset(self.domain, self.points + tuple(points))

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        d = self.domain.dims
        k = len(self.points[0].y) if self.points else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(d)] + [f"y{j}" for j in range(k)] + ["provenance", "quality", "step"])
        for p in self.points:
            w.writerow([repr(v) for v in p.x] + [repr(v) for v in p.y] + [p.provenance.value, repr(p.quality), p.step])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, domain: Domain, source) -> "Dataset":
        text = Path(source).read_text() if isinstance(source, (str, Path)) and "\n" not in str(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        d = sum(1 for h in header if h.startswith("x"))
        k = sum(1 for h in header if h.startswith("y"))
        if d != domain.dims:
            raise ValueError(f"CSV has {d} inputs, domain has {domain.dims}")
        pts = []
        for r in body:
            pts.append(SamplePoint(
                x=[float(v) for v in r[:d]],
                y=[float(v) for v in r[d:d + k]],
                provenance=Provenance(r[d + k]),
                quality=float(r[d + k + 1]),
                step=int(r[d + k + 2]),
            ))
        return cls(domain, tuple(pts))


def split_random(dataset: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Random partition; the second part holds ``round(fraction * N)`` points."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    first, second = split_indices(n, fraction, seed)
    return dataset.subset(first), dataset.subset(second)


def split_indices(n: int, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_second = int(round(fraction * n))
    second = np.sort(perm[:n_second])
    first = np.sort(perm[n_second:])
    return first, second


class TruthModel(abc.ABC):
    """Expensive fine-scale model: a deterministic map from inputs to outputs."""

    dim_in: int
    dim_out: int
    nominal_cost: float = 1.0

    @abc.abstractmethod
    def evaluate(self, x: Sequence[float], seed: int = 0) -> np.ndarray:
        """Return the output vector of length ``dim_out`` at ``x``."""

    def __call__(self, x, seed: int = 0) -> np.ndarray:
        return self.evaluate(x, seed)

    def evaluate_many(self, X, seed: int = 0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.evaluate(x, seed) for x in X]).reshape(len(X), self.dim_out)


class FunctionTruth(TruthModel):
    """Wrap a plain callable ``f(x) -> scalar or vector`` as a truth model."""

    def __init__(self, func, dim_in: int, dim_out: int = 1, nominal_cost: float = 1.0, name: str = ""):
        self.func = func
        self.dim_in = dim_in
        self.dim_out = dim_out
        self.nominal_cost = nominal_cost
        self.name = name or getattr(func, "__name__", "function")

    def evaluate(self, x, seed: int = 0) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float))

    def evaluate_many(self, X, seed: int = 0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.evaluate(x) for x in X]).reshape(len(X), self.dim_out)
