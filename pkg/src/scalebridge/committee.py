"""Query-by-committee ensembles with an R^2 acceptance gate.

Each member is trained on a random subset of the data; a slice of that
subset is held back for calibration, and the member joins the committee only
if its calibration R^2 clears the threshold.  Disagreement between members
gives the uncertainty of a prediction.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, ScaleBridgeError
from .surrogates.io import load_surrogate, save_surrogate
from .surrogates.metrics import r_squared_columns

log = logging.getLogger(__name__)


class CommitteeBuildError(ScaleBridgeError):
    def __init__(self, message: str, best_r2: float, attempts: int):
        super().__init__(message)
        self.best_r2 = best_r2
        self.attempts = attempts


@dataclass(frozen=True)
class CommitteeConfig:
    n_ensemble: int = 5
    r2_threshold: float = 0.7
    calibration_fraction: float = 0.10
    subset_fraction: float = 0.8
    max_attempts: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_ensemble < 2:
            raise ValueError("a committee needs at least two members")
        for name in ("calibration_fraction", "subset_fraction"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie strictly between 0 and 1")
        if self.max_attempts < self.n_ensemble:
            raise ValueError("max_attempts must allow at least n_ensemble attempts")


@dataclass(frozen=True, eq=False)
class Committee:
    members: tuple
    calibration_scores: tuple[float, ...]
    trained_on_count: int
    output_scale: np.ndarray
    config: CommitteeConfig = field(default_factory=CommitteeConfig)
    rejected_attempts: int = 0

    def predict(self, X):
        """Batch prediction: ``(mean, spread, s)`` with shapes ``(n, k), (n, k), (n,)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        preds = np.stack([np.asarray(m.predict(X), dtype=float).reshape(X.shape[0], -1) for m in self.members])
        mean = preds.mean(axis=0)
        spread = preds.std(axis=0)
        s = np.max(spread / self.output_scale, axis=1)
        return mean, spread, s


def committee_predict(c: Committee, x):
    """Mean, population spread and quality flag ``s`` at a single input."""
    mean, spread, s = c.predict(np.asarray(x, dtype=float)[None, :])
    return mean[0], spread[0], float(s[0])


def is_confident(c: Committee, x, tau: float) -> bool:
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    return committee_predict(c, x)[2] <= tau


def robust_scale(Y: np.ndarray) -> np.ndarray:
    """Per-output interquartile range, falling back to the std and then 1."""
    q75, q25 = np.percentile(Y, [75, 25], axis=0)
    scale = q75 - q25
    std = Y.std(axis=0)
    scale = np.where(scale > 0, scale, std)
    return np.where(scale > 0, scale, 1.0)


def _attempt_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence([int(seed), attempt]).generate_state(1)[0])


def build_committee(data, trainer, cfg: CommitteeConfig = CommitteeConfig()) -> Committee:
    """Train members until ``cfg.n_ensemble`` pass the calibration gate.

    ``data`` is a :class:`Dataset` or an ``(X, Y)`` pair; ``trainer`` is a
    callable ``trainer(X, Y, seed) -> surrogate``.
    """
    if isinstance(data, Dataset):
        X, Y = data.X, data.Y
    else:
        X, Y = (np.asarray(a, dtype=float) for a in data)
    X = np.atleast_2d(X)
    Y = Y[:, None] if Y.ndim == 1 else Y
    n = len(X)
    n_subset = int(round(cfg.subset_fraction * n))
    n_cal = int(round(cfg.calibration_fraction * n_subset))
    if n_cal < 5:
        raise ValueError(f"dataset of {n} points leaves only {n_cal} calibration points (need 5)")

    members, scores = [], []
    best = -np.inf
    attempt = 0
    while len(members) < cfg.n_ensemble:
        if attempt >= cfg.max_attempts:
            raise CommitteeBuildError(
                f"only {len(members)} of {cfg.n_ensemble} members passed R^2 >= {cfg.r2_threshold} "
                f"in {attempt} attempts (best R^2 {best:.3f})", best_r2=float(best), attempts=attempt)
        seed = _attempt_seed(cfg.seed, attempt)
        attempt += 1
        rng = np.random.default_rng(seed)
        subset = rng.choice(n, size=n_subset, replace=False)
        cal, fit = subset[:n_cal], subset[n_cal:]
        try:
            model = trainer(X[fit], Y[fit], seed)
            r2 = float(np.min(r_squared_columns(Y[cal], np.asarray(model.predict(X[cal])).reshape(len(cal), -1))))
        except ScaleBridgeError as exc:
            log.debug("committee attempt %d failed: %s", attempt, exc)
            continue
        best = max(best, r2)
        if r2 >= cfg.r2_threshold:
            members.append(model)
            scores.append(r2)
        else:
            log.debug("committee attempt %d rejected with R^2 %.3f", attempt, r2)
    return Committee(
        members=tuple(members),
        calibration_scores=tuple(scores),
        trained_on_count=n,
        output_scale=robust_scale(Y),
        config=cfg,
        rejected_attempts=attempt - len(members),
    )


def save_committee(c: Committee, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, m in enumerate(c.members):
        name = f"member_{i}.npz"
        save_surrogate(m, directory / name)
        files.append(name)
    manifest = {
        "format": 1,
        "members": files,
        "calibration_scores": list(c.calibration_scores),
        "trained_on_count": c.trained_on_count,
        "output_scale": [float(v).hex() for v in c.output_scale],
        "rejected_attempts": c.rejected_attempts,
        "config": asdict(c.config),
    }
    path = directory / "committee.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_committee(directory) -> Committee:
    directory = Path(directory)
    manifest = json.loads((directory / "committee.json").read_text())
    return Committee(
        members=tuple(load_surrogate(directory / f) for f in manifest["members"]),
        calibration_scores=tuple(manifest["calibration_scores"]),
        trained_on_count=manifest["trained_on_count"],
        output_scale=np.array([float.fromhex(v) for v in manifest["output_scale"]]),
        config=CommitteeConfig(**manifest["config"]),
        rejected_attempts=manifest["rejected_attempts"],
    )
